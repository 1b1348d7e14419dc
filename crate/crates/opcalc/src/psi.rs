//! The categories Psi_k of non-planar pearled trees under inner edge
//! contractions, together with the boundary/prime/upper/lower
//! subcategories and the under-cube machinery.
//!
//! Every category here is a finite poset with at most one morphism
//! between two objects, possibly with a few arrows deleted
//! (`forbidden`); Psi'_k is Psi_k minus the single arrow c'_k -> c_k.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::trees::{
    canonicalize, contract_edge, enumerate_tree_classes, ArityConstraints, MarkedTree, Node,
    TreeClass, TreeKind,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PsiError {
    #[error("selector {0:?} needs k >= 2")]
    NeedsK2(Selector),
    #[error("object not found: {0}")]
    NoSuchObject(String),
    #[error("no initial element in a nonempty under-poset at {0}")]
    NoInitial(String),
}

/// A finite poset-like category with optionally deleted arrows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelCategory {
    pub objects: Vec<String>,
    /// Reflexive, transitive reachability; `leq[i][j]` means i -> j.
    pub leq: Vec<Vec<bool>>,
    /// Ordered pairs whose (unique) arrow has been deleted.
    pub forbidden: BTreeSet<(usize, usize)>,
}

impl RelCategory {
    pub fn discrete(objects: Vec<String>) -> Self {
        let n = objects.len();
        let mut leq = vec![vec![false; n]; n];
        for (i, row) in leq.iter_mut().enumerate() {
            row[i] = true;
        }
        RelCategory { objects, leq, forbidden: BTreeSet::new() }
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.objects.iter().position(|o| o == id)
    }

    /// Does the (non-deleted) arrow i -> j exist?
    pub fn has_arrow(&self, i: usize, j: usize) -> bool {
        self.leq[i][j] && !self.forbidden.contains(&(i, j))
    }

    /// Number of non-identity surviving arrows.
    pub fn arrow_count(&self) -> usize {
        let n = self.len();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && self.has_arrow(i, j))
            .count()
    }

    /// Hasse covers of the surviving arrows.
    pub fn covers(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i == j || !self.has_arrow(i, j) {
                    continue;
                }
                let through = (0..n).any(|m| {
                    m != i && m != j && self.has_arrow(i, m) && self.has_arrow(m, j)
                });
                if !through {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Restriction to the given objects (order preserved), keeping
    /// surviving arrows and forbidden pairs between them.
    pub fn full_subcategory(&self, keep: &[usize]) -> RelCategory {
        let objects: Vec<String> = keep.iter().map(|&i| self.objects[i].clone()).collect();
        let n = keep.len();
        let mut leq = vec![vec![false; n]; n];
        let mut forbidden = BTreeSet::new();
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                leq[a][b] = self.leq[i][j];
                if self.forbidden.contains(&(i, j)) {
                    forbidden.insert((a, b));
                }
            }
        }
        RelCategory { objects, leq, forbidden }
    }

    /// Composites of surviving arrows must survive.
    pub fn composition_closed(&self) -> bool {
        let n = self.len();
        for i in 0..n {
            for j in 0..n {
                for m in 0..n {
                    if self.has_arrow(i, m) && self.has_arrow(m, j) && !self.has_arrow(i, j)
                    {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// The unique object receiving an arrow from everything, if any.
    pub fn terminal(&self) -> Option<usize> {
        (0..self.len()).find(|&j| (0..self.len()).all(|i| self.has_arrow(i, j)))
    }
}

/// Psi_k with its special objects.
#[derive(Clone, Debug)]
pub struct PsiCat {
    pub cat: RelCategory,
    pub classes: Vec<TreeClass>,
    pub k: usize,
    pub c_k: usize,
    pub c_prime_k: Option<usize>,
}

/// The pearled corolla c_k.
pub fn corolla(k: usize) -> TreeClass {
    let leaves: Vec<Node> = (1..=k).map(Node::Leaf).collect();
    let t = MarkedTree::from_node(&Node::Pearl(leaves), TreeKind::Pearled).unwrap();
    canonicalize(&t).class
}

/// The tree c'_k: pearled root of arity 1 under a vertex of arity k.
pub fn corolla_prime(k: usize) -> TreeClass {
    assert!(k >= 2);
    let leaves: Vec<Node> = (1..=k).map(Node::Leaf).collect();
    let t = MarkedTree::from_node(&Node::Pearl(vec![Node::Vertex(leaves)]), TreeKind::Pearled)
        .unwrap();
    canonicalize(&t).class
}

/// Builds Psi_k: objects are the pearled tree classes with k leaves,
/// non-pearl arities at least 2, ordered by inner edge contraction.
#[allow(clippy::needless_range_loop)]
pub fn build_psi(k: usize) -> PsiCat {
    let classes = enumerate_tree_classes(
        TreeKind::Pearled,
        k,
        ArityConstraints { pearl_min: 0, nonpearl_min: 2 },
    )
    .expect("valid constraints");
    let n = classes.len();
    let index = |code: &str| -> usize {
        classes.iter().position(|c| c.code == code).expect("closed under contraction")
    };
    let mut leq = vec![vec![false; n]; n];
    for (i, row) in leq.iter_mut().enumerate() {
        row[i] = true;
    }
    for (i, class) in classes.iter().enumerate() {
        let rep = &class.representative;
        for (a, b) in rep.base().inner_edges() {
            let c = contract_edge(rep, a, b).expect("inner edge");
            leq[i][index(&c.code)] = true;
        }
    }
    // Transitive closure.
    for m in 0..n {
        for i in 0..n {
            if leq[i][m] {
                for j in 0..n {
                    if leq[m][j] {
                        leq[i][j] = true;
                    }
                }
            }
        }
    }
    let objects: Vec<String> = classes.iter().map(|c| c.code.clone()).collect();
    let cat = RelCategory { objects, leq, forbidden: BTreeSet::new() };
    let c_k = index(&corolla(k).code);
    let c_prime_k = if k >= 2 { Some(index(&corolla_prime(k).code)) } else { None };
    PsiCat { cat, classes, k, c_k, c_prime_k }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selector {
    Boundary,
    Prime,
    U,
    L,
    Ul,
    BoundaryU,
    BoundaryL,
    BoundaryUl,
}

impl PsiCat {
    fn pearled(&self, i: usize) -> &crate::trees::PearledTree {
        match &self.classes[i].representative {
            MarkedTree::Pearled(t) => t,
            _ => unreachable!("Psi objects are pearled"),
        }
    }

    /// Membership in Psi_k^U: trunk arity at least 2; equivalently no
    /// morphism to c'_k.
    pub fn in_upper(&self, i: usize) -> bool {
        let by_arity = self.pearled(i).trunk_arity() >= 2;
        if let Some(cp) = self.c_prime_k {
            debug_assert_eq!(by_arity, !self.cat.leq[i][cp]);
        }
        by_arity
    }

    /// Membership in Psi_k^L: pearled root, or a univalent pearl whose
    /// trunk has exactly two vertices.
    pub fn in_lower(&self, i: usize) -> bool {
        let t = self.pearled(i);
        
        t.pearl == t.base.root()
            || (t.base.arity(t.pearl) == 0 && t.trunk().len() == 2)
    }

    /// Membership via the paper's reachability description, used to
    /// cross-check `in_lower`.
    pub fn in_lower_by_reachability(&self, i: usize) -> bool {
        let cp = self.c_prime_k.expect("k >= 2");
        (0..self.cat.len()).any(|s| self.cat.leq[s][cp] && self.cat.leq[s][i])
    }

    pub fn restrict(&self, sel: Selector) -> Result<RelCategory, PsiError> {
        if self.k < 2 && !matches!(sel, Selector::Boundary) {
            return Err(PsiError::NeedsK2(sel));
        }
        let all: Vec<usize> = (0..self.cat.len()).collect();
        let keep: Vec<usize> = match sel {
            Selector::Boundary => all.into_iter().filter(|&i| i != self.c_k).collect(),
            Selector::Prime => {
                let mut cat = self.cat.clone();
                cat.forbidden.insert((self.c_prime_k.unwrap(), self.c_k));
                return Ok(cat);
            }
            Selector::U => all.into_iter().filter(|&i| self.in_upper(i)).collect(),
            Selector::L => all.into_iter().filter(|&i| self.in_lower(i)).collect(),
            Selector::Ul => all
                .into_iter()
                .filter(|&i| self.in_upper(i) && self.in_lower(i))
                .collect(),
            Selector::BoundaryU => all
                .into_iter()
                .filter(|&i| self.in_upper(i) && i != self.c_k)
                .collect(),
            Selector::BoundaryL => all
                .into_iter()
                .filter(|&i| self.in_lower(i) && i != self.c_k)
                .collect(),
            Selector::BoundaryUl => all
                .into_iter()
                .filter(|&i| self.in_upper(i) && self.in_lower(i) && i != self.c_k)
                .collect(),
        };
        Ok(self.cat.full_subcategory(&keep))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CubeShape {
    Cubical,
    AlmostCubical,
    Subcubical,
    Other,
}

/// The under category T -> `within`, classified against the cube
/// shapes used in the coherence proof.
#[derive(Clone, Debug)]
pub struct UnderCube {
    pub source: usize,
    /// Indices into `within`'s object list, source included.
    pub objects: Vec<usize>,
    pub shape: CubeShape,
    pub tau: Option<usize>,
    pub tau_prime: Option<usize>,
}

/// Computes T over `within` where T is named by its code.  `psi` only
/// supplies the inner-edge count of T for the shape classification.
pub fn under_category(psi: &PsiCat, code: &str, within: &RelCategory) -> Result<UnderCube, PsiError> {
    let t = within
        .index_of(code)
        .ok_or_else(|| PsiError::NoSuchObject(code.to_string()))?;
    let objects: Vec<usize> = (0..within.len()).filter(|&j| within.has_arrow(t, j)).collect();
    let e = psi
        .classes
        .iter()
        .find(|c| c.code == code)
        .map(|c| c.n_inner_edges)
        .ok_or_else(|| PsiError::NoSuchObject(code.to_string()))?;
    let n_obj = objects.len();
    let n_arrows = objects
        .iter()
        .flat_map(|&i| objects.iter().map(move |&j| (i, j)))
        .filter(|&(i, j)| i != j && within.has_arrow(i, j))
        .count();
    // A full cube on e edges has 2^e objects and 3^e - 2^e non-identity
    // arrows; the almost cubical category lacks exactly one of them.
    let cube_objects = 1usize << e;
    let cube_arrows = 3usize.pow(e as u32) - cube_objects;
    let terminal = objects
        .iter()
        .copied()
        .find(|&j| objects.iter().all(|&i| within.has_arrow(i, j)));
    let shape = if n_obj == cube_objects && n_arrows == cube_arrows {
        CubeShape::Cubical
    } else if n_obj == cube_objects && n_arrows == cube_arrows - 1 {
        CubeShape::AlmostCubical
    } else if n_obj == cube_objects - 1 {
        CubeShape::Subcubical
    } else {
        CubeShape::Other
    };
    let (tau, tau_prime) = if shape == CubeShape::AlmostCubical {
        // tau is the would-be terminal object, tau' the source of the
        // deleted arrow.
        let tau = objects
            .iter()
            .copied()
            .find(|&j| objects.iter().all(|&i| i == j || within.leq[i][j]));
        let tau_prime = tau.and_then(|tj| {
            objects.iter().copied().find(|&i| i != tj && within.leq[i][tj] && !within.has_arrow(i, tj))
        });
        (tau, tau_prime)
    } else {
        (terminal, None)
    };
    Ok(UnderCube { source: t, objects, shape, tau, tau_prime })
}

/// The initial object of T over the boundary of Psi_k^U, per the
/// Fulton-MacPherson lemma: empty exactly for c_k and c'_k.
pub fn initial_in_boundary_u(psi: &PsiCat, code: &str) -> Result<Option<String>, PsiError> {
    let i = psi
        .cat
        .index_of(code)
        .ok_or_else(|| PsiError::NoSuchObject(code.to_string()))?;
    let boundary_u = psi.restrict(Selector::BoundaryU)?;
    let reachable: Vec<usize> = (0..boundary_u.len())
        .filter(|&j| {
            let full = psi.cat.index_of(&boundary_u.objects[j]).unwrap();
            psi.cat.leq[i][full]
        })
        .collect();
    if reachable.is_empty() {
        return Ok(None);
    }
    let init = reachable
        .iter()
        .copied()
        .find(|&m| reachable.iter().all(|&x| boundary_u.has_arrow(m, x)));
    match init {
        Some(m) => Ok(Some(boundary_u.objects[m].clone())),
        None => Err(PsiError::NoInitial(code.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_0_and_1() {
        let p0 = build_psi(0);
        assert_eq!(p0.cat.len(), 1);
        let p1 = build_psi(1);
        assert_eq!(p1.cat.len(), 2);
        assert_eq!(p1.cat.covers().len(), 1);
        assert_eq!(p1.cat.terminal(), Some(p1.c_k));
    }

    #[test]
    fn psi_2_counts() {
        let p = build_psi(2);
        assert_eq!(p.cat.len(), 8);
        assert_eq!(p.cat.covers().len(), 10);
        assert_eq!(p.cat.terminal(), Some(p.c_k));
    }

    #[test]
    fn terminal_object_small_k() {
        for k in 0..=4 {
            let p = build_psi(k);
            assert_eq!(p.cat.terminal(), Some(p.c_k), "k = {k}");
        }
    }

    #[test]
    fn boundary_u_zigzag() {
        let p = build_psi(2);
        let bu = p.restrict(Selector::BoundaryU).unwrap();
        assert_eq!(bu.len(), 5);
        assert_eq!(bu.arrow_count(), 4);
        // Out-degrees 0,0,0,2,2 and in-degrees 1,1,2,0,0 in some order.
        let mut out_degrees: Vec<usize> = (0..5)
            .map(|i| (0..5).filter(|&j| i != j && bu.has_arrow(i, j)).count())
            .collect();
        out_degrees.sort();
        assert_eq!(out_degrees, vec![0, 0, 0, 2, 2]);
        let mut in_degrees: Vec<usize> = (0..5)
            .map(|j| (0..5).filter(|&i| i != j && bu.has_arrow(i, j)).count())
            .collect();
        in_degrees.sort();
        assert_eq!(in_degrees, vec![0, 0, 1, 1, 2]);
    }

    #[test]
    fn ul_two_objects() {
        let p = build_psi(2);
        let ul = p.restrict(Selector::Ul).unwrap();
        assert_eq!(ul.len(), 2);
        assert_eq!(ul.arrow_count(), 1);
    }

    #[test]
    fn prime_removes_one_arrow() {
        let p = build_psi(2);
        let prime = p.restrict(Selector::Prime).unwrap();
        assert_eq!(prime.len(), 8);
        assert_eq!(prime.arrow_count(), p.cat.arrow_count() - 1);
        assert!(prime.composition_closed());
    }

    #[test]
    fn lower_matches_reachability() {
        for k in 2..=3 {
            let p = build_psi(k);
            for i in 0..p.cat.len() {
                assert_eq!(p.in_lower(i), p.in_lower_by_reachability(i), "k={k} i={i}");
            }
        }
    }

    #[test]
    fn boundary_decomposition() {
        for k in 2..=3 {
            let p = build_psi(k);
            let boundary: BTreeSet<String> =
                p.restrict(Selector::Boundary).unwrap().objects.into_iter().collect();
            let bu: BTreeSet<String> =
                p.restrict(Selector::BoundaryU).unwrap().objects.into_iter().collect();
            let bl: BTreeSet<String> =
                p.restrict(Selector::BoundaryL).unwrap().objects.into_iter().collect();
            let union: BTreeSet<String> = bu.union(&bl).cloned().collect();
            assert_eq!(boundary, union, "k = {k}");
            // No morphism exits the boundary of UL to objects outside
            // both parts.
            let bul = p.restrict(Selector::BoundaryUl).unwrap();
            for obj in &bul.objects {
                let i = p.cat.index_of(obj).unwrap();
                for j in 0..p.cat.len() {
                    if i != j && p.cat.has_arrow(i, j) && j != p.c_k {
                        let code = &p.cat.objects[j];
                        assert!(bu.contains(code) || bl.contains(code));
                    }
                }
            }
        }
    }

    #[test]
    fn under_cubes() {
        let p = build_psi(2);
        // Chain tree with two inner edges.
        let chain = canonicalize(
            &MarkedTree::from_node(
                &Node::Vertex(vec![
                    Node::Pearl(vec![]),
                    Node::Vertex(vec![Node::Leaf(1), Node::Leaf(2)]),
                ]),
                TreeKind::Pearled,
            )
            .unwrap(),
        )
        .class;
        let cube = under_category(&p, &chain.code, &p.cat).unwrap();
        assert_eq!(cube.shape, CubeShape::Cubical);
        assert_eq!(cube.objects.len(), 4);

        let prime = p.restrict(Selector::Prime).unwrap();
        let almost = under_category(&p, &chain.code, &prime).unwrap();
        assert_eq!(almost.shape, CubeShape::AlmostCubical);
        assert_eq!(almost.tau.map(|i| prime.objects[i].clone()), Some(corolla(2).code));
        assert_eq!(
            almost.tau_prime.map(|i| prime.objects[i].clone()),
            Some(corolla_prime(2).code)
        );

        let ck = under_category(&p, &corolla(2).code, &p.cat).unwrap();
        assert_eq!(ck.objects.len(), 1);
        assert_eq!(ck.shape, CubeShape::Cubical);
    }

    #[test]
    fn full_under_categories_are_cubes() {
        for k in 0..=3 {
            let p = build_psi(k);
            for class in &p.classes {
                let cube = under_category(&p, &class.code, &p.cat).unwrap();
                assert_eq!(cube.objects.len(), 1 << class.n_inner_edges);
                assert_eq!(cube.shape, CubeShape::Cubical);
            }
        }
    }

    #[test]
    fn initial_elements_in_boundary_u() {
        let p = build_psi(2);
        assert_eq!(initial_in_boundary_u(&p, &corolla(2).code).unwrap(), None);
        assert_eq!(initial_in_boundary_u(&p, &corolla_prime(2).code).unwrap(), None);
        // The chain tree contracts into the zigzag; its only image
        // there is the 3-corolla with a bare pearl.
        let chain = canonicalize(
            &MarkedTree::from_node(
                &Node::Vertex(vec![
                    Node::Pearl(vec![]),
                    Node::Vertex(vec![Node::Leaf(1), Node::Leaf(2)]),
                ]),
                TreeKind::Pearled,
            )
            .unwrap(),
        )
        .class;
        let expected = canonicalize(
            &MarkedTree::from_node(
                &Node::Vertex(vec![Node::Pearl(vec![]), Node::Leaf(1), Node::Leaf(2)]),
                TreeKind::Pearled,
            )
            .unwrap(),
        )
        .class;
        assert_eq!(
            initial_in_boundary_u(&p, &chain.code).unwrap(),
            Some(expected.code)
        );
        // Every object outside {c_k, c'_k} has an initial element.
        for k in 2..=3 {
            let p = build_psi(k);
            for (i, class) in p.classes.iter().enumerate() {
                let res = initial_in_boundary_u(&p, &class.code).unwrap();
                if i == p.c_k || Some(i) == p.c_prime_k {
                    assert_eq!(res, None);
                } else {
                    assert!(res.is_some(), "no initial element for {}", class.code);
                }
            }
        }
    }
}
