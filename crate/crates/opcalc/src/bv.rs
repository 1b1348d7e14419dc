//! Boardman-Vogt style resolutions over finite discrete operads.
//!
//! Elements are labelled trees with exact rational parameters, taken
//! modulo the contraction/unit relations of the six families (vertex
//! parameters for the pearled and section families, edge lengths for
//! the W families).  The module provides the rewrite normalization,
//! the module actions, the prime decomposition and filtration, the
//! projection to the base, the pair model with its push-down relation,
//! the two-cut decomposition map with its exact inverse, and finite
//! cell models of the spaces together with their filtration
//! subcomplexes.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Zero};
use rand::Rng;

use crate::algebra::{operad_as_bimodule, operad_as_ibimodule, FinBimodule, FinIbimodule, FinOperad};
use crate::complex::DeltaComplex;
use crate::trees::{
    canonicalize, contract_edge_raw, enumerate_tree_classes, ArityConstraints, Child, MarkedTree,
    Node, PlanarTree, Poset, Side, TreeClass, TreeKind,
};
use crate::Rat;

#[derive(Debug, thiserror::Error)]
pub enum BVError {
    #[error("malformed element: {0}")]
    Malformed(String),
    #[error("tree error: {0}")]
    Tree(#[from] crate::trees::TreeError),
    #[error("complex error: {0}")]
    Complex(#[from] crate::complex::ComplexError),
    #[error("the {0:?} family over a symmetric collection has infinitely many cells")]
    InfiniteCellModel(Family),
    #[error("cell model needs a one-point arity-1 space, {0:?} has {1} elements")]
    UnitSpaceNotPoint(String, usize),
    #[error("no cell found for key {0}")]
    MissingCell(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

// ---------------------------------------------------------------------------
// families, contexts, elements

/// The six resolution families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    BSigma,
    BLambda,
    IbSigma,
    IbLambda,
    W,
    W1,
}

impl Family {
    pub fn kind(self) -> TreeKind {
        match self {
            Family::BSigma | Family::BLambda => TreeKind::Section,
            Family::IbSigma | Family::IbLambda => TreeKind::Pearled,
            Family::W | Family::W1 => TreeKind::Rooted,
        }
    }

    /// Families with the arity-zero absorption relation.
    pub fn is_lambda(self) -> bool {
        matches!(self, Family::BLambda | Family::IbLambda)
    }

    pub fn is_b(self) -> bool {
        matches!(self, Family::BSigma | Family::BLambda)
    }

    pub fn is_ib(self) -> bool {
        matches!(self, Family::IbSigma | Family::IbLambda)
    }

    pub fn is_w(self) -> bool {
        matches!(self, Family::W | Family::W1)
    }
}

/// The discrete structures a resolution is built over.  Pearls of the
/// pearled families are labelled by the infinitesimal bimodule, pearls
/// of the section families by the bimodule, every other vertex by the
/// operad.
#[derive(Clone, Debug)]
pub struct BVContext {
    pub operad: FinOperad,
    pub ibim: FinIbimodule,
    pub bim: FinBimodule,
}

impl BVContext {
    /// The operad acting on itself on both sides.
    pub fn over_self(o: &FinOperad) -> BVContext {
        BVContext {
            operad: o.clone(),
            ibim: operad_as_ibimodule(o),
            bim: operad_as_bimodule(o),
        }
    }

    /// Built-in operad over itself, with one spare arity so that the
    /// action tables cover every graft of total arity `arity`.
    pub fn builtin_over_self(name: crate::algebra::Builtin, arity: usize) -> BVContext {
        BVContext::over_self(&crate::algebra::builtin(name, arity + 1))
    }
}

/// A resolution element: a marked tree, one label per vertex and one
/// parameter per carrier (non-pearl vertices for the vertex-parameter
/// families, non-root vertices -- i.e. inner edges -- for W).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BVElement {
    pub family: Family,
    pub tree: MarkedTree,
    pub labels: Vec<usize>,
    pub params: Vec<Option<Rat>>,
}

impl BVElement {
    pub fn arity(&self) -> usize {
        self.tree.base().leaf_count()
    }
}

fn vertex_card(ctx: &BVContext, fam: Family, pearl: bool, n: usize) -> usize {
    if pearl {
        if fam.is_ib() {
            ctx.ibim.card(n)
        } else {
            ctx.bim.card(n)
        }
    } else {
        ctx.operad.card(n)
    }
}

fn vertex_sigma(ctx: &BVContext, fam: Family, pearl: bool, n: usize, x: usize, tau: &[usize]) -> usize {
    if pearl {
        if fam.is_ib() {
            ctx.ibim.sigma(n, x, tau)
        } else {
            ctx.bim.sigma(n, x, tau)
        }
    } else {
        ctx.operad.sigma(n, x, tau)
    }
}

fn is_zero(p: &Option<Rat>) -> bool {
    p.as_ref().is_some_and(|t| t.is_zero())
}

fn is_one(p: &Option<Rat>) -> bool {
    p.as_ref().is_some_and(|t| t.is_one())
}

/// Structural checks: labels in range, parameters exactly on the
/// carriers and inside [0, 1], monotone toward the pearls (pearled
/// families) respectively toward the section from both sides (section
/// families).
#[allow(clippy::needless_range_loop)]
pub fn validate_element(ctx: &BVContext, x: &BVElement) -> Result<(), BVError> {
    if x.tree.kind() != x.family.kind() {
        return Err(BVError::Malformed(format!(
            "family {:?} needs a {} tree, got {}",
            x.family,
            x.family.kind(),
            x.tree.kind()
        )));
    }
    let base = x.tree.base();
    let n = base.n_vertices();
    let pearls = x.tree.pearls();
    if x.labels.len() != n || x.params.len() != n {
        return Err(BVError::Malformed("label/parameter vectors mismatch the tree".into()));
    }
    for v in 0..n {
        let p = pearls.contains(&v);
        let card = vertex_card(ctx, x.family, p, base.arity(v));
        if x.labels[v] >= card {
            return Err(BVError::Malformed(format!(
                "label {} out of range at vertex {v} (arity {}, {card} elements)",
                x.labels[v],
                base.arity(v)
            )));
        }
        let carrier = if x.family.is_w() { v != base.root() } else { !p };
        match (&x.params[v], carrier) {
            (Some(t), true) => {
                if t < &Rat::zero() || t > &Rat::one() {
                    return Err(BVError::Malformed(format!("parameter {t} at vertex {v} outside [0,1]")));
                }
            }
            (None, false) => {}
            _ => {
                return Err(BVError::Malformed(format!(
                    "vertex {v} {} carry a parameter",
                    if carrier { "must" } else { "must not" }
                )));
            }
        }
        if x.family.is_b() && p && base.arity(v) == 0 {
            return Err(BVError::Malformed("section pearls need arity >= 1".into()));
        }
    }
    match &x.tree {
        MarkedTree::Pearled(pt) => {
            let pw = pt.pearlward();
            for v in 0..n {
                if v == pt.pearl {
                    continue;
                }
                if let Some(u) = pw[v] {
                    let tu = if u == pt.pearl { Rat::zero() } else { x.params[u].clone().unwrap() };
                    if tu > *x.params[v].as_ref().unwrap() {
                        return Err(BVError::Malformed(format!(
                            "parameters must not decrease away from the pearl (edge {u}-{v})"
                        )));
                    }
                }
            }
        }
        MarkedTree::Section(st) => {
            for (p, c) in base.inner_edges() {
                if pearls.contains(&p) || pearls.contains(&c) {
                    continue;
                }
                let tp = x.params[p].as_ref().unwrap();
                let tc = x.params[c].as_ref().unwrap();
                let ok = match st.side(c) {
                    Some(Side::Above) => tp <= tc,
                    Some(Side::Below) => tc <= tp,
                    None => false,
                };
                if !ok {
                    return Err(BVError::Malformed(format!(
                        "parameters must not decrease away from the section (edge {p}-{c})"
                    )));
                }
            }
        }
        MarkedTree::Rooted(_) => {}
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// rewriting to canonical form

/// Contracts the inner edge `(parent, child)` of an element, composing
/// the two labels through the structure appropriate to the families
/// and the pearl positions.
fn contract_elem(ctx: &BVContext, x: &BVElement, parent: usize, child: usize) -> Result<BVElement, BVError> {
    let base = x.tree.base();
    let pos = base
        .children(parent)
        .iter()
        .position(|c| *c == Child::Vertex(child))
        .ok_or_else(|| BVError::Malformed(format!("({parent},{child}) is not an edge")))?
        + 1;
    let pearls = x.tree.pearls();
    let pp = pearls.contains(&parent);
    let cp = pearls.contains(&child);
    let na = base.arity(parent);
    let mb = base.arity(child);
    let la = x.labels[parent];
    let lb = x.labels[child];
    let merged_label = if x.family.is_w() {
        ctx.operad.comp(na, pos, la, mb, lb)
    } else if x.family.is_ib() {
        if cp {
            ctx.ibim.ileft(na, la, pos, mb, lb)
        } else if pp {
            ctx.ibim.iright(na, la, pos, mb, lb)
        } else {
            ctx.operad.comp(na, pos, la, mb, lb)
        }
    } else if pp {
        ctx.bim.right(na, pos, la, mb, lb)
    } else if cp {
        return Err(BVError::Malformed(
            "a below-side pearl contraction must use the full left action".into(),
        ));
    } else {
        ctx.operad.comp(na, pos, la, mb, lb)
    };
    let merged_param = if pp || cp { None } else { x.params[parent].clone() };
    let (nbase, map) = contract_edge_raw(base, parent, child)?;
    let n = base.n_vertices();
    let m = map[parent];
    let mut labels = vec![0usize; n - 1];
    let mut params: Vec<Option<Rat>> = vec![None; n - 1];
    for v in 0..n {
        if v == child {
            continue;
        }
        labels[map[v]] = x.labels[v];
        params[map[v]] = x.params[v].clone();
    }
    labels[m] = merged_label;
    params[m] = merged_param;
    let npearls: BTreeSet<usize> = pearls.iter().map(|&p| map[p]).collect();
    let tree = MarkedTree::from_parts(nbase, npearls, x.tree.kind())?;
    Ok(BVElement { family: x.family, tree, labels, params })
}

/// Removes a unit-labelled arity-one vertex.  For the W families the
/// two edge lengths merge to their maximum.
fn splice_out_unit(x: &BVElement, v: usize) -> Result<BVElement, BVError> {
    let base = x.tree.base();
    let n = base.n_vertices();
    debug_assert_eq!(base.arity(v), 1);
    let only = base.children(v)[0];
    let map = |w: usize| if w < v { w } else { w - 1 };
    let mut rows: Vec<Vec<Child>> = Vec::with_capacity(n - 1);
    for u in 0..n {
        if u == v {
            continue;
        }
        let mut row = Vec::new();
        for c in base.children(u) {
            match *c {
                Child::Leaf(l) => row.push(Child::Leaf(l)),
                Child::Vertex(w) if w == v => match only {
                    Child::Leaf(l) => row.push(Child::Leaf(l)),
                    Child::Vertex(z) => row.push(Child::Vertex(map(z))),
                },
                Child::Vertex(w) => row.push(Child::Vertex(map(w))),
            }
        }
        rows.push(row);
    }
    let root = if v == base.root() {
        match only {
            Child::Vertex(z) => map(z),
            Child::Leaf(_) => return Err(BVError::Malformed("removing the only vertex".into())),
        }
    } else {
        map(base.root())
    };
    let nbase = PlanarTree::new(rows, root)?;
    let mut labels = vec![0usize; n - 1];
    let mut params: Vec<Option<Rat>> = vec![None; n - 1];
    for u in 0..n {
        if u == v {
            continue;
        }
        labels[map(u)] = x.labels[u];
        params[map(u)] = x.params[u].clone();
    }
    if x.family.is_w() {
        if let Child::Vertex(z) = only {
            let zi = map(z);
            if v == base.root() {
                params[zi] = None;
            } else {
                let merged = x.params[v].clone().unwrap().max(x.params[z].clone().unwrap());
                params[zi] = Some(merged);
            }
        }
    }
    let npearls: BTreeSet<usize> = x.tree.pearls().iter().map(|&p| map(p)).collect();
    let tree = MarkedTree::from_parts(nbase, npearls, x.tree.kind())?;
    Ok(BVElement { family: x.family, tree, labels, params })
}

/// Full left-action contraction for the section families: a
/// below-section vertex at parameter zero whose children are all
/// pearls becomes a single pearl.
#[allow(clippy::needless_range_loop)]
fn left_contract(ctx: &BVContext, x: &BVElement, v: usize) -> Result<BVElement, BVError> {
    let base = x.tree.base();
    let n = base.n_vertices();
    let kids: Vec<usize> = base
        .children(v)
        .iter()
        .map(|c| match *c {
            Child::Vertex(w) => w,
            Child::Leaf(_) => unreachable!("below-section vertices have no leaf children"),
        })
        .collect();
    let ys: Vec<(usize, usize)> = kids.iter().map(|&w| (base.arity(w), x.labels[w])).collect();
    let merged = ctx.bim.left(base.arity(v), x.labels[v], &ys);
    let gone: BTreeSet<usize> = kids.iter().copied().collect();
    let mut map = vec![usize::MAX; n];
    let mut next = 0usize;
    for u in 0..n {
        if !gone.contains(&u) {
            map[u] = next;
            next += 1;
        }
    }
    let mut rows: Vec<Vec<Child>> = Vec::with_capacity(next);
    for u in 0..n {
        if gone.contains(&u) {
            continue;
        }
        let mut row = Vec::new();
        if u == v {
            for &w in &kids {
                for c in base.children(w) {
                    match *c {
                        Child::Leaf(l) => row.push(Child::Leaf(l)),
                        Child::Vertex(z) => row.push(Child::Vertex(map[z])),
                    }
                }
            }
        } else {
            for c in base.children(u) {
                match *c {
                    Child::Leaf(l) => row.push(Child::Leaf(l)),
                    Child::Vertex(z) => row.push(Child::Vertex(map[z])),
                }
            }
        }
        rows.push(row);
    }
    let nbase = PlanarTree::new(rows, map[base.root()])?;
    let mut labels = vec![0usize; next];
    let mut params: Vec<Option<Rat>> = vec![None; next];
    for u in 0..n {
        if gone.contains(&u) {
            continue;
        }
        labels[map[u]] = x.labels[u];
        params[map[u]] = x.params[u].clone();
    }
    labels[map[v]] = merged;
    params[map[v]] = None;
    let mut npearls: BTreeSet<usize> = x.tree.pearls().iter().filter(|p| !gone.contains(p)).map(|&p| map[p]).collect();
    npearls.insert(map[v]);
    let tree = MarkedTree::from_parts(nbase, npearls, x.tree.kind())?;
    Ok(BVElement { family: x.family, tree, labels, params })
}

/// One applicable relation, scanned in a fixed order: unit removal,
/// arity-zero absorption, zero-parameter contraction into a pearl,
/// equal-parameter merge.  Every rewrite removes a vertex.
#[allow(clippy::needless_range_loop)]
fn rewrite_step(ctx: &BVContext, x: &BVElement) -> Result<Option<BVElement>, BVError> {
    let base = x.tree.base();
    let n = base.n_vertices();
    let pearls = x.tree.pearls();
    let parents = base.parents();
    // unit vertices disappear
    if n > 1 {
        for v in 0..n {
            if !pearls.contains(&v) && base.arity(v) == 1 && x.labels[v] == ctx.operad.unit {
                return Ok(Some(splice_out_unit(x, v)?));
            }
        }
    }
    // arity-zero vertices are absorbed into their parent
    if x.family.is_lambda() {
        for v in 0..n {
            if pearls.contains(&v) || base.arity(v) != 0 {
                continue;
            }
            let p = parents[v]
                .ok_or_else(|| BVError::Malformed("cannot absorb the only vertex".into()))?;
            if x.family.is_b() && pearls.contains(&p) && base.arity(p) == 1 {
                return Err(BVError::Malformed(
                    "absorbing the last input of a section pearl".into(),
                ));
            }
            return Ok(Some(contract_elem(ctx, x, p, v)?));
        }
    }
    // zero parameters contract into the adjacent pearl
    match &x.tree {
        MarkedTree::Pearled(pt) => {
            let pw = pt.pearlward();
            for v in 0..n {
                if v == pt.pearl || !is_zero(&x.params[v]) {
                    continue;
                }
                if pw[v] == Some(pt.pearl) {
                    let (a, b) = if parents[v] == Some(pt.pearl) { (pt.pearl, v) } else { (v, pt.pearl) };
                    return Ok(Some(contract_elem(ctx, x, a, b)?));
                }
            }
        }
        MarkedTree::Section(st) => {
            for v in 0..n {
                if pearls.contains(&v) || !is_zero(&x.params[v]) {
                    continue;
                }
                match st.side(v) {
                    Some(Side::Above) => {
                        if let Some(p) = parents[v] {
                            if pearls.contains(&p) {
                                return Ok(Some(contract_elem(ctx, x, p, v)?));
                            }
                        }
                    }
                    Some(Side::Below) => {
                        let all_pearls = base.children(v).iter().all(|c| match c {
                            Child::Vertex(w) => pearls.contains(w),
                            Child::Leaf(_) => false,
                        });
                        if all_pearls {
                            return Ok(Some(left_contract(ctx, x, v)?));
                        }
                    }
                    None => {}
                }
            }
        }
        MarkedTree::Rooted(_) => {
            for v in 0..n {
                if v != base.root() && is_zero(&x.params[v]) {
                    return Ok(Some(contract_elem(ctx, x, parents[v].unwrap(), v)?));
                }
            }
        }
    }
    // equal adjacent parameters merge (not a relation for W)
    if !x.family.is_w() {
        for (p, c) in base.inner_edges() {
            if !pearls.contains(&p) && !pearls.contains(&c) && x.params[p] == x.params[c] {
                return Ok(Some(contract_elem(ctx, x, p, c)?));
            }
        }
    }
    Ok(None)
}

/// Reorders to the canonical planar representative, adjusting each
/// label by the slot permutation through the symmetric action.
fn canonical_form(ctx: &BVContext, x: &BVElement) -> BVElement {
    let canon = canonicalize(&x.tree);
    let pearls = x.tree.pearls();
    let n = x.tree.base().n_vertices();
    let mut labels = vec![0usize; n];
    let mut params: Vec<Option<Rat>> = vec![None; n];
    for v in 0..n {
        let perm = &canon.child_perms[v];
        let lab = vertex_sigma(ctx, x.family, pearls.contains(&v), perm.len(), x.labels[v], perm);
        labels[canon.vertex_map[v]] = lab;
        params[canon.vertex_map[v]] = x.params[v].clone();
    }
    BVElement {
        family: x.family,
        tree: canon.class.representative.clone(),
        labels,
        params,
    }
}

/// Rewrites to the canonical representative: relations to exhaustion,
/// then the symmetric canonicalization.  Idempotent.
pub fn normalize(ctx: &BVContext, x: &BVElement) -> Result<BVElement, BVError> {
    validate_element(ctx, x)?;
    let mut cur = x.clone();
    while let Some(next) = rewrite_step(ctx, &cur)? {
        cur = next;
    }
    Ok(canonical_form(ctx, &cur))
}

// ---------------------------------------------------------------------------
// actions

/// Module actions on elements.  Positions refer to leaf labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    /// Graft the `n`-corolla labelled `theta` at leaf `i`, the new
    /// vertex at parameter 1.
    Right { i: usize, n: usize, theta: usize },
    /// New root labelled `theta` below the tree, which sits in slot
    /// `i`; the other slots become leaves.  Pearled families only.
    InfLeft { i: usize, n: usize, theta: usize },
    /// Composition with the arity-zero point at leaf `i`.
    LambdaZero { i: usize },
}

pub fn act(ctx: &BVContext, x: &BVElement, action: &Action) -> Result<BVElement, BVError> {
    match *action {
        Action::LambdaZero { i } => {
            if ctx.operad.card(0) == 0 {
                return Err(BVError::Unsupported("the operad has no arity-zero point".into()));
            }
            act(ctx, x, &Action::Right { i, n: 0, theta: 0 })
        }
        Action::Right { i, n, theta } => {
            let k = x.arity();
            if i == 0 || i > k {
                return Err(BVError::Malformed(format!("leaf {i} out of range 1..={k}")));
            }
            if theta >= ctx.operad.card(n) {
                return Err(BVError::Malformed(format!("no element {theta} in arity {n}")));
            }
            if x.family.is_w() && n == 0 {
                return Err(BVError::Unsupported(
                    "the resolution of the positive-arity part has no nullary action".into(),
                ));
            }
            let base = x.tree.base();
            let nv = base.n_vertices();
            let mut rows: Vec<Vec<Child>> = Vec::with_capacity(nv + 1);
            for v in 0..nv {
                let mut row = Vec::new();
                for c in base.children(v) {
                    match *c {
                        Child::Leaf(l) if l == i => row.push(Child::Vertex(nv)),
                        Child::Leaf(l) if l > i => row.push(Child::Leaf(l + n - 1)),
                        other => row.push(other),
                    }
                }
                rows.push(row);
            }
            rows.push((0..n).map(|j| Child::Leaf(i + j)).collect());
            let nbase = PlanarTree::new(rows, base.root())?;
            let mut labels = x.labels.clone();
            labels.push(theta);
            let mut params = x.params.clone();
            params.push(Some(Rat::one()));
            let tree = MarkedTree::from_parts(nbase, x.tree.pearls(), x.tree.kind())?;
            normalize(ctx, &BVElement { family: x.family, tree, labels, params })
        }
        Action::InfLeft { i, n, theta } => {
            if !x.family.is_ib() {
                return Err(BVError::Unsupported(
                    "the infinitesimal left action lives on the pearled families".into(),
                ));
            }
            if i == 0 || i > n {
                return Err(BVError::Malformed(format!("slot {i} out of range 1..={n}")));
            }
            if theta >= ctx.operad.card(n) {
                return Err(BVError::Malformed(format!("no element {theta} in arity {n}")));
            }
            let base = x.tree.base();
            let nv = base.n_vertices();
            let m = x.arity();
            let mut rows: Vec<Vec<Child>> = Vec::with_capacity(nv + 1);
            for v in 0..nv {
                let mut row = Vec::new();
                for c in base.children(v) {
                    match *c {
                        Child::Leaf(l) => row.push(Child::Leaf(l + i - 1)),
                        other => row.push(other),
                    }
                }
                rows.push(row);
            }
            let mut root_row = Vec::with_capacity(n);
            for j in 1..=n {
                if j < i {
                    root_row.push(Child::Leaf(j));
                } else if j == i {
                    root_row.push(Child::Vertex(base.root()));
                } else {
                    root_row.push(Child::Leaf(j + m - 1));
                }
            }
            rows.push(root_row);
            let nbase = PlanarTree::new(rows, nv)?;
            let mut labels = x.labels.clone();
            labels.push(theta);
            let mut params = x.params.clone();
            params.push(Some(Rat::one()));
            let tree = MarkedTree::from_parts(nbase, x.tree.pearls(), x.tree.kind())?;
            normalize(ctx, &BVElement { family: x.family, tree, labels, params })
        }
    }
}

// ---------------------------------------------------------------------------
// prime decomposition, filtration, projection

/// A prime component: vertices surviving the removal of the
/// parameter-one vertices, with its count of geometrical inputs
/// (leaves plus severed slots).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrimePiece {
    pub vertices: Vec<usize>,
    pub inputs: usize,
}

/// Components obtained by removing the parameter-one vertices, and the
/// filtration index: the maximal geometrical input count over the
/// components.
pub fn prime_decompose(x: &BVElement) -> (Vec<PrimePiece>, usize) {
    let base = x.tree.base();
    let n = base.n_vertices();
    let removed: Vec<bool> = (0..n).map(|v| is_one(&x.params[v])).collect();
    let mut seen = vec![false; n];
    let mut pieces = Vec::new();
    for s in 0..n {
        if removed[s] || seen[s] {
            continue;
        }
        let mut comp = vec![s];
        seen[s] = true;
        let mut stack = vec![s];
        let parents = base.parents();
        while let Some(v) = stack.pop() {
            let mut nbs: Vec<usize> = Vec::new();
            if let Some(p) = parents[v] {
                nbs.push(p);
            }
            for c in base.children(v) {
                if let Child::Vertex(w) = *c {
                    nbs.push(w);
                }
            }
            for w in nbs {
                if !removed[w] && !seen[w] {
                    seen[w] = true;
                    comp.push(w);
                    stack.push(w);
                }
            }
        }
        comp.sort_unstable();
        let inset: BTreeSet<usize> = comp.iter().copied().collect();
        let mut inputs = 0usize;
        for &v in &comp {
            for c in base.children(v) {
                match *c {
                    Child::Leaf(_) => inputs += 1,
                    Child::Vertex(w) if !inset.contains(&w) => inputs += 1,
                    Child::Vertex(_) => {}
                }
            }
        }
        pieces.push(PrimePiece { vertices: comp, inputs });
    }
    let fil = pieces.iter().map(|p| p.inputs).max().unwrap_or(0);
    (pieces, fil)
}

/// Geometrical inputs of the prime component containing the pearl:
/// the module filtration of a pearled element.
pub fn fil_pearl(x: &BVElement) -> usize {
    let start = x.tree.pearls().iter().next().copied().unwrap_or(x.tree.base().root());
    let (pieces, _) = prime_decompose(x);
    pieces
        .iter()
        .find(|p| p.vertices.contains(&start))
        .map(|p| p.inputs)
        .expect("the pearl carries no parameter and always survives")
}

/// Sends every parameter to zero and contracts completely: the
/// projection to the base structure.  Returns the arity, the label of
/// the resulting corolla and its leaf word.
pub fn project_mu(ctx: &BVContext, x: &BVElement) -> Result<(usize, usize, Vec<usize>), BVError> {
    validate_element(ctx, x)?;
    let mut cur = x.clone();
    for p in cur.params.iter_mut() {
        if p.is_some() {
            *p = Some(Rat::zero());
        }
    }
    while let Some(next) = rewrite_step(ctx, &cur)? {
        cur = next;
    }
    let cur = canonical_form(ctx, &cur);
    if cur.tree.base().n_vertices() != 1 {
        return Err(BVError::Malformed("projection did not reach a single corolla".into()));
    }
    Ok((cur.arity(), cur.labels[0], cur.tree.base().leaf_word()))
}

// ---------------------------------------------------------------------------
// cell models

fn section_param_poset(st: &crate::trees::SectionTree) -> Poset {
    let base = &st.base;
    let n = base.n_vertices();
    let elems: Vec<usize> = (0..n).filter(|v| !st.pearls.contains(v)).collect();
    let pos: BTreeMap<usize, usize> = elems.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let m = elems.len();
    let mut leq = vec![vec![false; m]; m];
    for (i, row) in leq.iter_mut().enumerate() {
        row[i] = true;
    }
    for (p, c) in base.inner_edges() {
        if st.pearls.contains(&p) || st.pearls.contains(&c) {
            continue;
        }
        match st.side(c) {
            Some(Side::Above) => leq[pos[&p]][pos[&c]] = true,
            Some(Side::Below) => leq[pos[&c]][pos[&p]] = true,
            None => unreachable!(),
        }
    }
    for k in 0..m {
        for i in 0..m {
            for j in 0..m {
                if leq[i][k] && leq[k][j] {
                    leq[i][j] = true;
                }
            }
        }
    }
    Poset { elements: elems, leq }
}

/// The parameter poset of a tree: smaller means closer to the pearl
/// respectively the section; for rooted trees the inner edges form an
/// antichain.
pub fn param_poset(t: &MarkedTree) -> Poset {
    match t {
        MarkedTree::Pearled(pt) => pt.toward_pearl_poset(),
        MarkedTree::Section(st) => section_param_poset(st),
        MarkedTree::Rooted(rt) => {
            Poset::antichain((0..rt.n_vertices()).filter(|&v| v != rt.root()).collect())
        }
    }
}

fn grow_chains(
    p: &Poset,
    filters: &[Vec<usize>],
    anti: bool,
    full: &[usize],
    chain: &mut Vec<Vec<usize>>,
    out: &mut Vec<Vec<Vec<usize>>>,
) {
    let last = chain.last().unwrap().clone();
    if last == full {
        out.push(chain.clone());
        return;
    }
    for g in filters {
        if g.len() <= last.len() || !last.iter().all(|x| g.contains(x)) {
            continue;
        }
        if anti {
            let diff: Vec<usize> = g.iter().copied().filter(|x| !last.contains(x)).collect();
            if !p.is_antichain(&diff) {
                continue;
            }
        }
        chain.push(g.clone());
        grow_chains(p, filters, anti, full, chain, out);
        chain.pop();
    }
}

/// Strictly increasing chains of up-sets of `p` ending at the full
/// set.  With `anti`, the first entry and every level difference must
/// be an antichain: exactly the canonical cells of the
/// vertex-parameter families.
fn canonical_chains(p: &Poset, anti: bool) -> Vec<Vec<Vec<usize>>> {
    let filters = p.filters();
    let full: Vec<usize> = (0..p.len()).collect();
    let mut out = Vec::new();
    for f0 in &filters {
        if anti && !p.is_antichain(f0) {
            continue;
        }
        let mut chain = vec![f0.clone()];
        grow_chains(p, &filters, anti, &full, &mut chain, &mut out);
    }
    out
}

fn level_value(j: usize, m: usize) -> Rat {
    if j == 0 {
        Rat::one()
    } else {
        crate::rat((m - j) as i64, m as i64)
    }
}

fn realize(family: Family, rep: &MarkedTree, labels: &[usize], poset: &Poset, chain: &[Vec<usize>]) -> BVElement {
    let n = rep.base().n_vertices();
    let m = chain.len();
    let mut params: Vec<Option<Rat>> = vec![None; n];
    for (pos, &vid) in poset.elements.iter().enumerate() {
        let mut val = Rat::zero();
        for (j, f) in chain.iter().enumerate() {
            if f.contains(&pos) {
                val = level_value(j, m);
                break;
            }
        }
        params[vid] = Some(val);
    }
    BVElement { family, tree: rep.clone(), labels: labels.to_vec(), params }
}

/// Discrete cell identity of a canonical element: tree class, labels
/// and per-vertex parameter level (distinct values descending), plus
/// whether the top value is one.
pub fn cell_key(x: &BVElement) -> String {
    let code = canonicalize(&x.tree).class.code;
    let mut vals: Vec<Rat> = x.params.iter().flatten().cloned().collect();
    vals.sort();
    vals.dedup();
    vals.reverse();
    let ranks: Vec<String> = x
        .params
        .iter()
        .map(|p| match p {
            None => "-".to_string(),
            Some(t) => vals.iter().position(|v| v == t).unwrap().to_string(),
        })
        .collect();
    let labels: Vec<String> = x.labels.iter().map(|l| l.to_string()).collect();
    let one = vals.first().is_some_and(|v| v.is_one());
    format!("{code}#{}#{}#{}", labels.join(","), ranks.join(","), u8::from(one))
}

/// Exact-point identity of a canonical element: tree class, labels and
/// the exact parameters.
pub fn point_key(x: &BVElement) -> String {
    let code = canonicalize(&x.tree).class.code;
    let labels: Vec<String> = x.labels.iter().map(|l| l.to_string()).collect();
    let params: Vec<String> = x
        .params
        .iter()
        .map(|p| match p {
            None => "-".to_string(),
            Some(t) => t.to_string(),
        })
        .collect();
    format!("{code}#{}#{}", labels.join(","), params.join(","))
}

fn tuples(cards: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &c in cards {
        let mut next = Vec::with_capacity(out.len() * c);
        for t in &out {
            for i in 0..c {
                let mut u = t.clone();
                u.push(i);
                next.push(u);
            }
        }
        out = next;
    }
    out
}

fn class_of(node: &Node, kind: TreeKind) -> Result<TreeClass, BVError> {
    Ok(canonicalize(&MarkedTree::from_node(node, kind)?).class)
}

fn family_classes(family: Family, k: usize) -> Result<Vec<TreeClass>, BVError> {
    let a = |pearl_min: usize| ArityConstraints { pearl_min, nonpearl_min: 2 };
    Ok(match family {
        Family::IbLambda | Family::IbSigma => {
            if k == 0 {
                vec![class_of(&Node::Pearl(Vec::new()), TreeKind::Pearled)?]
            } else {
                enumerate_tree_classes(TreeKind::Pearled, k, a(0))?
            }
        }
        Family::BLambda | Family::BSigma => {
            if k == 0 {
                vec![class_of(&Node::Pearl(Vec::new()), TreeKind::Section)?]
            } else {
                enumerate_tree_classes(TreeKind::Section, k, a(1))?
            }
        }
        Family::W | Family::W1 => {
            if k == 0 {
                Vec::new()
            } else if k == 1 {
                vec![class_of(&Node::Vertex(vec![Node::Leaf(1)]), TreeKind::Rooted)?]
            } else {
                enumerate_tree_classes(TreeKind::Rooted, k, a(1))?
            }
        }
    })
}

/// One canonical cell of a family complex.
#[derive(Clone, Debug)]
pub struct CellMeta {
    pub key: String,
    pub class: usize,
    pub labels: Vec<usize>,
    /// Filter chain over poset positions; the first entry is the
    /// parameter-one set (possibly empty).
    pub chain: Vec<Vec<usize>>,
    pub composite: bool,
    pub upper: bool,
}

/// A finite cell model of one resolution family in a fixed arity,
/// with its filtration boundary (composite cells) and, for the
/// pearled families, the boundary enlarged by the upper-class cells.
#[derive(Clone, Debug)]
pub struct FamilyComplex {
    pub family: Family,
    pub arity: usize,
    pub classes: Vec<TreeClass>,
    pub posets: Vec<Poset>,
    pub complex: DeltaComplex,
    pub boundary: DeltaComplex,
    pub boundary_prime: Option<DeltaComplex>,
    pub cells: BTreeMap<String, (usize, usize)>,
    pub meta: Vec<Vec<CellMeta>>,
}

fn subcomplex_by(
    complex: &DeltaComplex,
    meta: &[Vec<CellMeta>],
    keep: impl Fn(&CellMeta) -> bool,
) -> Result<DeltaComplex, BVError> {
    let mut newidx: Vec<Vec<Option<usize>>> = Vec::with_capacity(meta.len());
    let mut out = DeltaComplex::default();
    for (d, level) in meta.iter().enumerate() {
        let mut ids = Vec::with_capacity(level.len());
        for (i, m) in level.iter().enumerate() {
            if !keep(m) {
                ids.push(None);
                continue;
            }
            let faces: Vec<usize> = if d == 0 {
                Vec::new()
            } else {
                complex.simplices[d][i]
                    .faces
                    .iter()
                    .map(|&f| {
                        newidx[d - 1][f].ok_or_else(|| {
                            BVError::Malformed("filtration subcomplex is not face-closed".into())
                        })
                    })
                    .collect::<Result<_, _>>()?
            };
            ids.push(Some(out.push(d, faces, m.key.clone())));
        }
        newidx.push(ids);
    }
    out.validate()?;
    Ok(out)
}

/// Builds the cell model of a family in arity `k`: cells are canonical
/// labelled tree classes with a filter chain of the parameter poset,
/// faces delete one chain entry and normalize.
pub fn build_family_complex(ctx: &BVContext, family: Family, k: usize) -> Result<FamilyComplex, BVError> {
    if matches!(family, Family::BSigma | Family::IbSigma) {
        return Err(BVError::InfiniteCellModel(family));
    }
    if ctx.operad.card(1) != 1 {
        return Err(BVError::UnitSpaceNotPoint(ctx.operad.name.clone(), ctx.operad.card(1)));
    }
    if ctx.operad.max_arity < k.max(1) {
        return Err(BVError::Malformed(format!(
            "operad tables stop at arity {}, need {k}",
            ctx.operad.max_arity
        )));
    }
    let classes = family_classes(family, k)?;
    let posets: Vec<Poset> = classes.iter().map(|c| param_poset(&c.representative)).collect();
    let anti = !family.is_w();
    let mut meta: Vec<Vec<CellMeta>> = Vec::new();
    let mut cells: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (ci, class) in classes.iter().enumerate() {
        let rep = &class.representative;
        let base = rep.base();
        let pearls = rep.pearls();
        let cards: Vec<usize> = (0..base.n_vertices())
            .map(|v| vertex_card(ctx, family, pearls.contains(&v), base.arity(v)))
            .collect();
        if cards.contains(&0) {
            continue;
        }
        let upper = match rep {
            MarkedTree::Pearled(pt) => pt.trunk_arity() >= 2,
            _ => false,
        };
        let chains = canonical_chains(&posets[ci], anti);
        for labels in tuples(&cards) {
            for chain in &chains {
                let d = chain.len() - 1;
                let elem = realize(family, rep, &labels, &posets[ci], chain);
                let key = cell_key(&elem);
                while meta.len() <= d {
                    meta.push(Vec::new());
                }
                if cells.insert(key.clone(), (d, meta[d].len())).is_some() {
                    return Err(BVError::Malformed(format!("duplicate cell key {key}")));
                }
                meta[d].push(CellMeta {
                    key,
                    class: ci,
                    labels: labels.clone(),
                    chain: chain.clone(),
                    composite: !chain[0].is_empty(),
                    upper,
                });
            }
        }
    }
    let mut complex = DeltaComplex::default();
    for (d, level) in meta.iter().enumerate() {
        for m in level {
            let faces: Vec<usize> = if d == 0 {
                Vec::new()
            } else {
                let mut fs = Vec::with_capacity(d + 1);
                for i in 0..=d {
                    let mut sub = m.chain.clone();
                    sub.remove(i);
                    let elem = realize(family, &classes[m.class].representative, &m.labels, &posets[m.class], &sub);
                    let y = normalize(ctx, &elem)?;
                    let fk = cell_key(&y);
                    let (fd, fi) = cells.get(&fk).copied().ok_or(BVError::MissingCell(fk))?;
                    if fd != d - 1 {
                        return Err(BVError::Malformed("face dimension mismatch".into()));
                    }
                    fs.push(fi);
                }
                fs
            };
            complex.push(d, faces, m.key.clone());
        }
    }
    complex.validate()?;
    let boundary = subcomplex_by(&complex, &meta, |m| m.composite)?;
    let boundary_prime = if family == Family::IbLambda {
        Some(subcomplex_by(&complex, &meta, |m| m.composite || m.upper)?)
    } else {
        None
    };
    Ok(FamilyComplex {
        family,
        arity: k,
        classes,
        posets,
        complex,
        boundary,
        boundary_prime,
        cells,
        meta,
    })
}

// ---------------------------------------------------------------------------
// the pair model and the two-cut decomposition

/// Tree builder with explicit ids.
struct TB {
    rows: Vec<Vec<Child>>,
    labels: Vec<usize>,
    params: Vec<Option<Rat>>,
    pearls: BTreeSet<usize>,
}

impl TB {
    fn new() -> TB {
        TB { rows: Vec::new(), labels: Vec::new(), params: Vec::new(), pearls: BTreeSet::new() }
    }

    fn add(&mut self, label: usize, param: Option<Rat>, pearl: bool) -> usize {
        let id = self.rows.len();
        self.rows.push(Vec::new());
        self.labels.push(label);
        self.params.push(param);
        if pearl {
            self.pearls.insert(id);
        }
        id
    }

    fn set_children(&mut self, v: usize, row: Vec<Child>) {
        self.rows[v] = row;
    }

    fn finish(self, root: usize, family: Family) -> Result<BVElement, BVError> {
        let base = PlanarTree::new(self.rows, root)?;
        let tree = MarkedTree::from_parts(base, self.pearls, family.kind())?;
        Ok(BVElement { family, tree, labels: self.labels, params: self.params })
    }
}

/// A pair-model element `a{b_1,...,b_n}`: a pearled element whose
/// leaf `j` carries the section element `bs[j-1]`; `leaf_labels[j-1]`
/// records the original leaf labels of `bs[j-1]` by leaf label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IbBarElement {
    pub a: BVElement,
    pub bs: Vec<BVElement>,
    pub leaf_labels: Vec<Vec<usize>>,
}

impl IbBarElement {
    pub fn arity(&self) -> usize {
        self.leaf_labels.iter().map(|l| l.len()).sum()
    }

    /// Total leaf assignment: the word of original labels, per slot of
    /// `a` and per slot of each `b`.
    pub fn sigma_word(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for word in &self.leaf_labels {
            out.extend_from_slice(word);
        }
        out
    }
}

/// Unit label of the bimodule in arity one (the pair model is taken
/// over the operad acting on itself, where the index spaces agree).
fn bm_unit(ctx: &BVContext) -> usize {
    ctx.operad.unit
}

fn trivial_b(ctx: &BVContext) -> Result<BVElement, BVError> {
    let mut tb = TB::new();
    let p = tb.add(bm_unit(ctx), None, true);
    tb.set_children(p, vec![Child::Leaf(1)]);
    tb.finish(p, Family::BLambda)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Cls {
    Below,
    Between,
    OnCut,
    Above,
}

struct GammaBuild<'a> {
    ctx: &'a BVContext,
    x: &'a BVElement,
    base: &'a PlanarTree,
    pearl: usize,
    cls: Vec<Cls>,
    jv: Vec<usize>,
}

impl<'a> GammaBuild<'a> {
    fn tval(&self, v: usize) -> Rat {
        if v == self.pearl {
            Rat::zero()
        } else {
            self.x.params[v].clone().unwrap()
        }
    }

    fn build_a(
        &self,
        v: usize,
        tb: &mut TB,
        bs: &mut Vec<BVElement>,
        lls: &mut Vec<Vec<usize>>,
    ) -> Result<usize, BVError> {
        let param = if v == self.pearl {
            None
        } else {
            let three = crate::rat(3, 1);
            let two = crate::rat(2, 1);
            Some(three * self.tval(v) - two * self.tval(self.jv[v]))
        };
        let id = tb.add(self.x.labels[v], param, v == self.pearl);
        let mut row = Vec::new();
        for c in self.base.children(v) {
            match *c {
                Child::Leaf(l) => {
                    bs.push(trivial_b(self.ctx)?);
                    lls.push(vec![l]);
                    row.push(Child::Leaf(bs.len()));
                }
                Child::Vertex(w) => {
                    if self.cls[w] == Cls::Below {
                        row.push(Child::Vertex(self.build_a(w, tb, bs, lls)?));
                    } else {
                        let (b, ll) = self.build_b(w)?;
                        bs.push(b);
                        lls.push(ll);
                        row.push(Child::Leaf(bs.len()));
                    }
                }
            }
        }
        tb.set_children(id, row);
        Ok(id)
    }

    fn build_b(&self, w: usize) -> Result<(BVElement, Vec<usize>), BVError> {
        let tj = self.tval(self.jv[w]);
        let mut tb = TB::new();
        let mut ll = Vec::new();
        let root = match self.cls[w] {
            Cls::Above => {
                let p = tb.add(bm_unit(self.ctx), None, true);
                let c = self.go_above(w, &tj, &mut tb, &mut ll);
                tb.set_children(p, vec![c]);
                p
            }
            Cls::OnCut => self.cut_pearl(w, &tj, &mut tb, &mut ll),
            Cls::Between => match self.go_mid(w, &tj, &mut tb, &mut ll) {
                Child::Vertex(id) => id,
                Child::Leaf(_) => unreachable!(),
            },
            Cls::Below => unreachable!("below vertices stay in the pearled part"),
        };
        let raw = tb.finish(root, Family::BLambda)?;
        Ok((canonical_form(self.ctx, &raw), ll))
    }

    fn go_mid(&self, v: usize, tj: &Rat, tb: &mut TB, ll: &mut Vec<usize>) -> Child {
        let three = crate::rat(3, 1);
        let two = crate::rat(2, 1);
        let t = (three * self.tval(v) - tj.clone() - two) / (tj.clone() - Rat::one());
        let id = tb.add(self.x.labels[v], Some(t), false);
        let mut row = Vec::new();
        for c in self.base.children(v) {
            match *c {
                Child::Leaf(l) => {
                    let p = tb.add(bm_unit(self.ctx), None, true);
                    ll.push(l);
                    tb.set_children(p, vec![Child::Leaf(ll.len())]);
                    row.push(Child::Vertex(p));
                }
                Child::Vertex(u) => match self.cls[u] {
                    Cls::Between => row.push(self.go_mid(u, tj, tb, ll)),
                    Cls::OnCut => row.push(Child::Vertex(self.cut_pearl(u, tj, tb, ll))),
                    Cls::Above => {
                        let p = tb.add(bm_unit(self.ctx), None, true);
                        let c = self.go_above(u, tj, tb, ll);
                        tb.set_children(p, vec![c]);
                        row.push(Child::Vertex(p));
                    }
                    Cls::Below => unreachable!("below vertices cannot sit above the first cut"),
                },
            }
        }
        tb.set_children(id, row);
        Child::Vertex(id)
    }

    fn cut_pearl(&self, u: usize, tj: &Rat, tb: &mut TB, ll: &mut Vec<usize>) -> usize {
        let id = tb.add(self.x.labels[u], None, true);
        let mut row = Vec::new();
        for c in self.base.children(u) {
            match *c {
                Child::Leaf(l) => {
                    ll.push(l);
                    row.push(Child::Leaf(ll.len()));
                }
                Child::Vertex(z) => {
                    debug_assert_eq!(self.cls[z], Cls::Above);
                    row.push(self.go_above(z, tj, tb, ll));
                }
            }
        }
        tb.set_children(id, row);
        id
    }

    fn go_above(&self, u: usize, tj: &Rat, tb: &mut TB, ll: &mut Vec<usize>) -> Child {
        let three = crate::rat(3, 1);
        let two = crate::rat(2, 1);
        let t = (three * self.tval(u) - tj.clone() - two) / (Rat::one() - tj.clone());
        let id = tb.add(self.x.labels[u], Some(t), false);
        let mut row = Vec::new();
        for c in self.base.children(u) {
            match *c {
                Child::Leaf(l) => {
                    ll.push(l);
                    row.push(Child::Leaf(ll.len()));
                }
                Child::Vertex(z) => row.push(self.go_above(z, tj, tb, ll)),
            }
        }
        tb.set_children(id, row);
        Child::Vertex(id)
    }
}

/// The two-cut decomposition: splits a pearled element at the cuts
/// `(2t_j+1)/3` and `(t_j+2)/3` over the nearest trunk vertex `j`,
/// rescaling the parameters of the part below the first cut by
/// `3t - 2t_j` and of the section parts by the two displayed affine
/// maps.  Exactly invertible.
pub fn gamma(ctx: &BVContext, x: &BVElement) -> Result<IbBarElement, BVError> {
    if !x.family.is_ib() {
        return Err(BVError::Unsupported("the decomposition lives on the pearled families".into()));
    }
    let x = normalize(ctx, x)?;
    let MarkedTree::Pearled(pt) = &x.tree else { unreachable!() };
    let base = &pt.base;
    let n = base.n_vertices();
    let trunk: BTreeSet<usize> = pt.trunk().into_iter().collect();
    let parents = base.parents();
    let jv: Vec<usize> = (0..n)
        .map(|v| {
            let mut c = v;
            while !trunk.contains(&c) {
                c = parents[c].unwrap();
            }
            c
        })
        .collect();
    let tval = |v: usize| -> Rat {
        if v == pt.pearl {
            Rat::zero()
        } else {
            x.params[v].clone().unwrap()
        }
    };
    let three = crate::rat(3, 1);
    let two = crate::rat(2, 1);
    let cls: Vec<Cls> = (0..n)
        .map(|v| {
            if trunk.contains(&v) {
                return Cls::Below;
            }
            let t = tval(v);
            let tj = tval(jv[v]);
            let c1 = (two.clone() * tj.clone() + Rat::one()) / three.clone();
            let c2 = (tj + two.clone()) / three.clone();
            if t <= c1 {
                Cls::Below
            } else if t < c2 {
                Cls::Between
            } else if t == c2 {
                Cls::OnCut
            } else {
                Cls::Above
            }
        })
        .collect();
    let gb = GammaBuild { ctx, x: &x, base, pearl: pt.pearl, cls, jv };
    let mut tb = TB::new();
    let mut bs = Vec::new();
    let mut lls = Vec::new();
    let root = gb.build_a(base.root(), &mut tb, &mut bs, &mut lls)?;
    let raw = tb.finish(root, x.family)?;
    let a = canonical_form(ctx, &raw);
    Ok(IbBarElement { a, bs, leaf_labels: lls })
}

struct InvBuild<'a> {
    ctx: &'a BVContext,
    e: &'a IbBarElement,
    base: &'a PlanarTree,
    pearl: usize,
    trunk: BTreeSet<usize>,
    jv: Vec<usize>,
    xpar: Vec<Option<Rat>>,
}

impl<'a> InvBuild<'a> {
    fn tj_at(&self, v: usize) -> Rat {
        if v == self.pearl {
            Rat::zero()
        } else if self.trunk.contains(&v) {
            self.xpar[v].clone().unwrap()
        } else {
            let j = self.jv[v];
            if j == self.pearl {
                Rat::zero()
            } else {
                self.xpar[j].clone().unwrap()
            }
        }
    }

    fn copy(&self, v: usize, tb: &mut TB) -> Result<usize, BVError> {
        let a = &self.e.a;
        let id = tb.add(a.labels[v], self.xpar[v].clone(), v == self.pearl);
        let mut row = Vec::new();
        for c in self.base.children(v) {
            match *c {
                Child::Leaf(j) => {
                    let tj = self.tj_at(v);
                    row.push(self.expand_b(&self.e.bs[j - 1], &self.e.leaf_labels[j - 1], &tj, tb)?);
                }
                Child::Vertex(w) => row.push(Child::Vertex(self.copy(w, tb)?)),
            }
        }
        tb.set_children(id, row);
        Ok(id)
    }

    fn expand_b(&self, b: &BVElement, ll: &[usize], tj: &Rat, tb: &mut TB) -> Result<Child, BVError> {
        let MarkedTree::Section(st) = &b.tree else {
            return Err(BVError::Malformed("pair components must be section elements".into()));
        };
        Ok(self.go(b, st, ll, tj, st.base.root(), tb))
    }

    fn go(
        &self,
        b: &BVElement,
        st: &crate::trees::SectionTree,
        ll: &[usize],
        tj: &Rat,
        u: usize,
        tb: &mut TB,
    ) -> Child {
        let three = crate::rat(3, 1);
        let two = crate::rat(2, 1);
        let bb = &st.base;
        if st.pearls.contains(&u) {
            if bb.arity(u) == 1 && b.labels[u] == bm_unit(self.ctx) {
                // an inserted cut marker: splice it out
                return match bb.children(u)[0] {
                    Child::Leaf(l) => Child::Leaf(ll[l - 1]),
                    Child::Vertex(z) => self.go(b, st, ll, tj, z, tb),
                };
            }
            let t = (tj.clone() + two) / three;
            let id = tb.add(b.labels[u], Some(t), false);
            let row = self.child_row(b, st, ll, tj, u, tb);
            tb.set_children(id, row);
            return Child::Vertex(id);
        }
        let s = b.params[u].clone().unwrap();
        let t = match st.side(u) {
            Some(Side::Below) => (s * (tj.clone() - Rat::one()) + tj.clone() + two) / three,
            Some(Side::Above) => (s * (Rat::one() - tj.clone()) + tj.clone() + two) / three,
            None => unreachable!(),
        };
        let id = tb.add(b.labels[u], Some(t), false);
        let row = self.child_row(b, st, ll, tj, u, tb);
        tb.set_children(id, row);
        Child::Vertex(id)
    }

    fn child_row(
        &self,
        b: &BVElement,
        st: &crate::trees::SectionTree,
        ll: &[usize],
        tj: &Rat,
        u: usize,
        tb: &mut TB,
    ) -> Vec<Child> {
        st.base
            .children(u)
            .iter()
            .map(|c| match *c {
                Child::Leaf(l) => Child::Leaf(ll[l - 1]),
                Child::Vertex(z) => self.go(b, st, ll, tj, z, tb),
            })
            .collect()
    }
}

/// Reassembles a pair element into a pearled element; exact inverse of
/// the two-cut decomposition.
#[allow(clippy::needless_range_loop)]
pub fn gamma_inverse(ctx: &BVContext, e: &IbBarElement) -> Result<BVElement, BVError> {
    let a = &e.a;
    let MarkedTree::Pearled(pt) = &a.tree else {
        return Err(BVError::Malformed("the pearled component must be a pearled element".into()));
    };
    let base = &pt.base;
    let n = base.n_vertices();
    let trunk: BTreeSet<usize> = pt.trunk().into_iter().collect();
    let parents = base.parents();
    let jv: Vec<usize> = (0..n)
        .map(|v| {
            let mut c = v;
            while !trunk.contains(&c) {
                c = parents[c].unwrap();
            }
            c
        })
        .collect();
    let three = crate::rat(3, 1);
    let two = crate::rat(2, 1);
    let mut xpar: Vec<Option<Rat>> = vec![None; n];
    for v in 0..n {
        if v == pt.pearl {
            continue;
        }
        if trunk.contains(&v) {
            xpar[v] = a.params[v].clone();
        }
    }
    for v in 0..n {
        if v == pt.pearl || trunk.contains(&v) {
            continue;
        }
        let j = jv[v];
        let tj = if j == pt.pearl { Rat::zero() } else { xpar[j].clone().unwrap() };
        xpar[v] = Some((a.params[v].clone().unwrap() + two.clone() * tj) / three.clone());
    }
    let ib = InvBuild { ctx, e, base, pearl: pt.pearl, trunk, jv, xpar };
    let mut tb = TB::new();
    let root = ib.copy(base.root(), &mut tb)?;
    let raw = tb.finish(root, a.family)?;
    normalize(ctx, &raw)
}

/// Pair-model filtration: strip the parameter-one region around the
/// root of the pearled component (and the branches over it), prune the
/// parameter-one above-section up-sets of the surviving section
/// components, and count their geometrical inputs.
#[allow(clippy::needless_range_loop)]
pub fn fil_ibar(e: &IbBarElement) -> usize {
    let a = &e.a;
    let MarkedTree::Pearled(pt) = &a.tree else { return 0 };
    let base = &pt.base;
    let n = base.n_vertices();
    let trunk: BTreeSet<usize> = pt.trunk().into_iter().collect();
    let parents = base.parents();
    let stripped: Vec<bool> = (0..n)
        .map(|v| {
            if v == pt.pearl || !is_one(&a.params[v]) {
                return false;
            }
            if trunk.contains(&v) {
                return true;
            }
            let mut c = v;
            while !trunk.contains(&c) {
                c = parents[c].unwrap();
            }
            c != pt.pearl && is_one(&a.params[c])
        })
        .collect();
    let mut total = 0usize;
    for v in 0..n {
        if stripped[v] {
            continue;
        }
        for c in base.children(v) {
            if let Child::Leaf(j) = *c {
                total += effective_inputs(&e.bs[j - 1]);
            }
        }
    }
    total
}

fn effective_inputs(b: &BVElement) -> usize {
    let MarkedTree::Section(st) = &b.tree else { return 0 };
    let base = &st.base;
    let n = base.n_vertices();
    let gone: Vec<bool> = (0..n)
        .map(|v| !st.pearls.contains(&v) && is_one(&b.params[v]) && st.side(v) == Some(Side::Above))
        .collect();
    let mut inputs = 0usize;
    for v in 0..n {
        if gone[v] {
            continue;
        }
        for c in base.children(v) {
            match *c {
                Child::Leaf(_) => inputs += 1,
                Child::Vertex(w) if gone[w] => inputs += 1,
                Child::Vertex(_) => {}
            }
        }
    }
    inputs
}

/// The pairing map: an arity-one pearled element and a section element
/// assemble into the pair `a{b}`.
pub fn zeta(ctx: &BVContext, a: &BVElement, b: &BVElement) -> Result<IbBarElement, BVError> {
    let a = normalize(ctx, a)?;
    if !a.family.is_ib() || a.arity() != 1 {
        return Err(BVError::Malformed("the first component must be pearled of arity one".into()));
    }
    let b = normalize(ctx, b)?;
    if !b.family.is_b() {
        return Err(BVError::Malformed("the second component must be a section element".into()));
    }
    let k = b.arity();
    Ok(IbBarElement { a, bs: vec![b], leaf_labels: vec![(1..=k).collect()] })
}

fn subtree_b(ctx: &BVContext, b: &BVElement, w: usize, ll: &[usize]) -> Result<(BVElement, Vec<usize>), BVError> {
    let base = b.tree.base();
    let pearls = b.tree.pearls();
    let mut ids = Vec::new();
    let mut stack = vec![w];
    while let Some(v) = stack.pop() {
        ids.push(v);
        for c in base.children(v) {
            if let Child::Vertex(z) = *c {
                stack.push(z);
            }
        }
    }
    ids.sort_unstable();
    let map: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut lll = Vec::new();
    fn walk(
        base: &PlanarTree,
        v: usize,
        map: &BTreeMap<usize, usize>,
        ll: &[usize],
        lll: &mut Vec<usize>,
        rows: &mut Vec<Vec<Child>>,
    ) {
        let mut row = Vec::new();
        for c in base.children(v) {
            match *c {
                Child::Leaf(l) => {
                    lll.push(ll[l - 1]);
                    row.push(Child::Leaf(lll.len()));
                }
                Child::Vertex(z) => {
                    row.push(Child::Vertex(map[&z]));
                    walk(base, z, map, ll, lll, rows);
                }
            }
        }
        rows[map[&v]] = row;
    }
    let mut rows = vec![Vec::new(); ids.len()];
    walk(base, w, &map, ll, &mut lll, &mut rows);
    let nbase = PlanarTree::new(rows, map[&w])?;
    let labels: Vec<usize> = ids.iter().map(|&v| b.labels[v]).collect();
    let params: Vec<Option<Rat>> = ids.iter().map(|&v| b.params[v].clone()).collect();
    let npearls: BTreeSet<usize> = pearls.iter().filter(|p| map.contains_key(p)).map(|p| map[p]).collect();
    let tree = MarkedTree::from_parts(nbase, npearls, TreeKind::Section)?;
    let piece = canonical_form(ctx, &BVElement { family: b.family, tree, labels, params });
    Ok((piece, lll))
}

/// The push-down relation of the pair model: while some section
/// component has a non-pearl root at parameter one, its root label
/// moves into the pearled component through the right action and the
/// component splits at the removed root.
pub fn ibar_push_down(ctx: &BVContext, e: &IbBarElement) -> Result<IbBarElement, BVError> {
    let mut cur = e.clone();
    loop {
        let mut hit = None;
        for (j, b) in cur.bs.iter().enumerate() {
            let base = b.tree.base();
            let r = base.root();
            if !b.tree.pearls().contains(&r) && is_one(&b.params[r]) {
                hit = Some(j);
                break;
            }
        }
        let Some(j) = hit else { return Ok(cur) };
        let b = cur.bs[j].clone();
        let ll = cur.leaf_labels[j].clone();
        let base = b.tree.base();
        let r = base.root();
        let theta = b.labels[r];
        let l = base.arity(r);
        let mut new_bs = Vec::with_capacity(l);
        let mut new_lls = Vec::with_capacity(l);
        for c in base.children(r) {
            match *c {
                Child::Leaf(lf) => {
                    new_bs.push(trivial_b(ctx)?);
                    new_lls.push(vec![ll[lf - 1]]);
                }
                Child::Vertex(w) => {
                    let (piece, lll) = subtree_b(ctx, &b, w, &ll)?;
                    new_bs.push(piece);
                    new_lls.push(lll);
                }
            }
        }
        let a = act(ctx, &cur.a, &Action::Right { i: j + 1, n: l, theta })?;
        let mut bs = Vec::new();
        let mut lls = Vec::new();
        for (i, bb) in cur.bs.iter().enumerate() {
            if i == j {
                bs.extend(new_bs.iter().cloned());
                lls.extend(new_lls.iter().cloned());
            } else {
                bs.push(bb.clone());
                lls.push(cur.leaf_labels[i].clone());
            }
        }
        cur = IbBarElement { a, bs, leaf_labels: lls };
    }
}

/// Composes the arity-zero point at every leaf except `i`.
pub fn tau(ctx: &BVContext, a: &BVElement, i: usize) -> Result<BVElement, BVError> {
    let k = a.arity();
    if i == 0 || i > k {
        return Err(BVError::Malformed(format!("leaf {i} out of range 1..={k}")));
    }
    let mut cur = a.clone();
    for j in (1..=k).rev() {
        if j != i {
            cur = act(ctx, &cur, &Action::LambdaZero { i: j })?;
        }
    }
    Ok(cur)
}

/// Whether a canonical arity-one pearled element lies in the image of
/// the infinitesimal left action: its root is a non-pearl vertex at
/// parameter one.
pub fn in_boundary_n1(ctx: &BVContext, x: &BVElement) -> Result<bool, BVError> {
    let x = normalize(ctx, x)?;
    if x.arity() != 1 {
        return Err(BVError::Malformed("the membership test lives in arity one".into()));
    }
    let MarkedTree::Pearled(pt) = &x.tree else { unreachable!() };
    let r = pt.base.root();
    Ok(r != pt.pearl && is_one(&x.params[r]))
}

/// Membership in the first-stage boundary of the pearled family:
/// composite, or an upper tree class, or the trunk-cut inequality
/// `t_W <= (2 t_r + 1)/3` on the unique branch over the trunk.
pub fn in_d1(x: &BVElement) -> Result<bool, BVError> {
    if !x.family.is_ib() || x.arity() < 2 {
        return Err(BVError::Malformed("the first-stage boundary lives in arity >= 2".into()));
    }
    if x.params.iter().any(is_one) {
        return Ok(true);
    }
    let MarkedTree::Pearled(pt) = &x.tree else {
        return Err(BVError::Malformed("expected a pearled element".into()));
    };
    if pt.trunk_arity() >= 2 {
        return Ok(true);
    }
    let (w, r) = d1_branch(pt)?;
    let tw = x.params[w].clone().unwrap();
    let tr = match r {
        Some(v) => x.params[v].clone().unwrap(),
        None => Rat::zero(),
    };
    Ok(tw <= (crate::rat(2, 1) * tr + Rat::one()) / crate::rat(3, 1))
}

/// For a canonical trunk-arity-one pearled tree: the head of the
/// unique branch over the trunk and the non-pearl trunk vertex (if
/// any).
pub fn d1_branch(pt: &crate::trees::PearledTree) -> Result<(usize, Option<usize>), BVError> {
    let trunk: Vec<usize> = pt.trunk();
    let tset: BTreeSet<usize> = trunk.iter().copied().collect();
    let mut head = None;
    for &u in &trunk {
        for c in pt.base.children(u) {
            if let Child::Vertex(w) = *c {
                if !tset.contains(&w) {
                    if head.is_some() {
                        return Err(BVError::Malformed("trunk arity is not one".into()));
                    }
                    head = Some(w);
                }
            }
        }
    }
    let w = head.ok_or_else(|| BVError::Malformed("no branch over the trunk".into()))?;
    let r = trunk.iter().copied().find(|&v| v != pt.pearl);
    Ok((w, r))
}

// ---------------------------------------------------------------------------
// refinement of the two-dimensional cell model by the two cuts

fn dot(a: &[Rat], p: &[Rat]) -> Rat {
    a.iter().zip(p).map(|(x, y)| x.clone() * y.clone()).sum()
}

fn area2(poly: &[Vec<Rat>]) -> Rat {
    let mut s = Rat::zero();
    for i in 0..poly.len() {
        let p = &poly[i];
        let q = &poly[(i + 1) % poly.len()];
        s += p[0].clone() * q[1].clone() - q[0].clone() * p[1].clone();
    }
    s
}

fn clip(poly: &[Vec<Rat>], a: &[Rat], b: &Rat, upper: bool) -> Option<Vec<Vec<Rat>>> {
    let side = |p: &[Rat]| -> Rat {
        let g = dot(a, p) + b.clone();
        if upper {
            g
        } else {
            -g
        }
    };
    let mut out: Vec<Vec<Rat>> = Vec::new();
    let n = poly.len();
    for i in 0..n {
        let p = &poly[i];
        let q = &poly[(i + 1) % n];
        let sp = side(p);
        let sq = side(q);
        if sp >= Rat::zero() {
            out.push(p.clone());
        }
        if (sp > Rat::zero() && sq < Rat::zero()) || (sp < Rat::zero() && sq > Rat::zero()) {
            let t = sp.clone() / (sp - sq);
            let cut: Vec<Rat> = p
                .iter()
                .zip(q)
                .map(|(x, y)| x.clone() + t.clone() * (y.clone() - x.clone()))
                .collect();
            out.push(cut);
        }
    }
    out.dedup();
    while out.len() > 1 && out.first() == out.last() {
        out.pop();
    }
    if out.len() < 3 || area2(&out).is_zero() {
        return None;
    }
    Some(out)
}

/// Subdivides a two-dimensional pearled cell model along both cut
/// lines of every off-trunk vertex, gluing the pieces by the exact
/// points they normalize to.  Returns the refined complex and its
/// number of triangles.
pub fn gamma_refine(ctx: &BVContext, fc: &FamilyComplex) -> Result<(DeltaComplex, usize), BVError> {
    if fc.family != Family::IbLambda {
        return Err(BVError::Unsupported("the refinement lives on the pearled cell model".into()));
    }
    if fc.complex.dim() != Some(2) {
        return Err(BVError::Unsupported(
            "the cut refinement is implemented for two-dimensional models".into(),
        ));
    }
    let mut tris: Vec<[String; 3]> = Vec::new();
    for m in &fc.meta[2] {
        let poset = &fc.posets[m.class];
        let rep = &fc.classes[m.class].representative;
        let MarkedTree::Pearled(pt) = rep else { unreachable!() };
        debug_assert_eq!(poset.len(), 2);
        let pts: Vec<Vec<Rat>> = m
            .chain
            .iter()
            .map(|f| {
                (0..2)
                    .map(|p| if f.contains(&p) { Rat::one() } else { Rat::zero() })
                    .collect()
            })
            .collect();
        let trunk: BTreeSet<usize> = pt.trunk().into_iter().collect();
        let parents = pt.base.parents();
        let pos: BTreeMap<usize, usize> = poset.elements.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut cuts: Vec<(Vec<Rat>, Rat)> = Vec::new();
        for (p, &vid) in poset.elements.iter().enumerate() {
            if trunk.contains(&vid) {
                continue;
            }
            let mut j = vid;
            while !trunk.contains(&j) {
                j = parents[j].unwrap();
            }
            // g1 = 3 t_v - 2 t_j - 1, g2 = 3 t_v - t_j - 2
            for (cj, cc) in [(2i64, 1i64), (1, 2)] {
                let mut a = vec![Rat::zero(), Rat::zero()];
                a[p] += crate::rat(3, 1);
                if j != pt.pearl {
                    a[pos[&j]] -= crate::rat(cj, 1);
                }
                cuts.push((a, crate::rat(-cc, 1)));
            }
        }
        let mut polys = vec![pts];
        for (a, b) in &cuts {
            let mut next = Vec::new();
            for poly in &polys {
                if let Some(lo) = clip(poly, a, b, false) {
                    next.push(lo);
                }
                if let Some(hi) = clip(poly, a, b, true) {
                    next.push(hi);
                }
            }
            polys = next;
        }
        for poly in polys {
            for i in 1..poly.len() - 1 {
                let tri = [&poly[0], &poly[i], &poly[i + 1]];
                if area2(&[tri[0].clone(), tri[1].clone(), tri[2].clone()]).is_zero() {
                    continue;
                }
                let mut keys: Vec<String> = Vec::with_capacity(3);
                for p in tri {
                    let mut params: Vec<Option<Rat>> = vec![None; rep.base().n_vertices()];
                    for (pi, &vid) in poset.elements.iter().enumerate() {
                        params[vid] = Some(p[pi].clone());
                    }
                    let elem = BVElement {
                        family: fc.family,
                        tree: rep.clone(),
                        labels: m.labels.clone(),
                        params,
                    };
                    keys.push(point_key(&normalize(ctx, &elem)?));
                }
                keys.sort();
                if keys[0] == keys[1] || keys[1] == keys[2] {
                    return Err(BVError::Malformed("degenerate refined triangle".into()));
                }
                tris.push([keys[0].clone(), keys[1].clone(), keys[2].clone()]);
            }
        }
    }
    tris.sort();
    tris.dedup();
    let mut verts: BTreeSet<String> = BTreeSet::new();
    let mut edges: BTreeSet<(String, String)> = BTreeSet::new();
    for t in &tris {
        for k in t {
            verts.insert(k.clone());
        }
        edges.insert((t[1].clone(), t[2].clone()));
        edges.insert((t[0].clone(), t[2].clone()));
        edges.insert((t[0].clone(), t[1].clone()));
    }
    let mut out = DeltaComplex::default();
    let vidx: BTreeMap<&String, usize> = verts
        .iter()
        .map(|k| (k, out.push(0, Vec::new(), k.clone())))
        .collect();
    let mut eidx: BTreeMap<&(String, String), usize> = BTreeMap::new();
    for e in &edges {
        let id = out.push(1, vec![vidx[&e.1], vidx[&e.0]], format!("{}--{}", e.0, e.1));
        eidx.insert(e, id);
    }
    for t in &tris {
        let f0 = eidx[&(t[1].clone(), t[2].clone())];
        let f1 = eidx[&(t[0].clone(), t[2].clone())];
        let f2 = eidx[&(t[0].clone(), t[1].clone())];
        out.push(2, vec![f0, f1, f2], format!("{}--{}--{}", t[0], t[1], t[2]));
    }
    out.validate()?;
    let count = tris.len();
    Ok((out, count))
}

// ---------------------------------------------------------------------------
// random elements

/// Random canonical pearled elements of a fixed arity, used by the
/// property suites.
pub struct IbSampler {
    pub family: Family,
    pub classes: Vec<TreeClass>,
}

impl IbSampler {
    pub fn new(k: usize) -> Result<IbSampler, BVError> {
        Ok(IbSampler { family: Family::IbLambda, classes: family_classes(Family::IbLambda, k)? })
    }

    #[allow(clippy::needless_range_loop)]
    pub fn sample(&self, ctx: &BVContext, rng: &mut impl Rng, allow_one: bool) -> Result<BVElement, BVError> {
        let class = &self.classes[rng.gen_range(0..self.classes.len())];
        let MarkedTree::Pearled(pt) = &class.representative else { unreachable!() };
        let base = &pt.base;
        let n = base.n_vertices();
        let pearls = class.representative.pearls();
        let mut labels = vec![0usize; n];
        for v in 0..n {
            let card = vertex_card(ctx, self.family, pearls.contains(&v), base.arity(v));
            if card == 0 {
                return Err(BVError::Malformed("empty label space".into()));
            }
            labels[v] = rng.gen_range(0..card);
        }
        let dist = pt.dist();
        let mut order: Vec<usize> = (0..n).filter(|&v| v != pt.pearl).collect();
        order.sort_by_key(|&v| dist[v]);
        let pw = pt.pearlward();
        let mut params: Vec<Option<Rat>> = vec![None; n];
        for &v in &order {
            let lo = match pw[v] {
                Some(u) if u != pt.pearl => params[u].clone().unwrap(),
                _ => Rat::zero(),
            };
            let choice = rng.gen_range(0..8u32);
            let t = if choice == 0 && allow_one {
                Rat::one()
            } else if choice == 1 {
                lo.clone()
            } else {
                let den: i64 = [4, 6, 9, 16, 25][rng.gen_range(0..5usize)];
                let num = rng.gen_range(0..=den);
                crate::rat(num, den).max(lo.clone())
            };
            params[v] = Some(t);
        }
        normalize(ctx, &BVElement {
            family: self.family,
            tree: class.representative.clone(),
            labels,
            params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Builtin;
    use crate::complex::{homology, nerve, category_of_elements, find_subcomplex, induced_homology_map};
    use crate::psi::{build_psi, Selector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx(name: Builtin, k: usize) -> BVContext {
        BVContext::builtin_over_self(name, k)
    }

    fn pearled(node: Node) -> MarkedTree {
        MarkedTree::from_node(&node, TreeKind::Pearled).unwrap()
    }

    fn elem(family: Family, tree: MarkedTree, labels: Vec<usize>, params: Vec<Option<Rat>>) -> BVElement {
        BVElement { family, tree, labels, params }
    }

    #[test]
    fn zero_parameter_contracts_into_the_pearl() {
        let c = ctx(Builtin::Comm, 2);
        // pearl root with a two-leaf vertex above it, at t = 0
        let t = pearled(Node::Pearl(vec![Node::Vertex(vec![Node::Leaf(1), Node::Leaf(2)])]));
        let x = elem(Family::IbLambda, t, vec![0, 0], vec![None, Some(Rat::zero())]);
        let y = normalize(&c, &x).unwrap();
        assert_eq!(y.tree.base().n_vertices(), 1);
        assert_eq!(y.arity(), 2);
        assert!(y.tree.pearls().len() == 1);
    }

    #[test]
    fn equal_parameters_merge() {
        let c = ctx(Builtin::Comm, 3);
        let t = pearled(Node::Pearl(vec![Node::Vertex(vec![
            Node::Leaf(1),
            Node::Vertex(vec![Node::Leaf(2), Node::Leaf(3)]),
        ])]));
        let x = elem(
            Family::IbLambda,
            t,
            vec![0, 0, 0],
            vec![None, Some(crate::rat(1, 2)), Some(crate::rat(1, 2))],
        );
        let y = normalize(&c, &x).unwrap();
        assert_eq!(y.tree.base().n_vertices(), 2);
        assert_eq!(y.params.iter().flatten().count(), 1);
    }

    #[test]
    fn normalize_is_idempotent_on_random_elements() {
        for name in [Builtin::Comm, Builtin::Assoc] {
            let c = ctx(name, 3);
            let s = IbSampler::new(3).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            for _ in 0..120 {
                let x = s.sample(&c, &mut rng, true).unwrap();
                let y = normalize(&c, &x).unwrap();
                assert_eq!(x, y);
            }
        }
    }

    #[test]
    fn unit_left_action_is_the_identity() {
        let c = ctx(Builtin::Assoc, 2);
        let t = pearled(Node::Pearl(vec![Node::Leaf(1), Node::Leaf(2)]));
        let x = elem(Family::IbLambda, t, vec![0], vec![None]);
        let y = act(&c, &x, &Action::InfLeft { i: 1, n: 1, theta: c.operad.unit }).unwrap();
        assert_eq!(normalize(&c, &x).unwrap(), y);
    }

    #[test]
    fn right_action_grafts_at_parameter_one() {
        let c = ctx(Builtin::Comm, 3);
        let t = pearled(Node::Pearl(vec![Node::Leaf(1), Node::Leaf(2)]));
        let x = elem(Family::IbLambda, t, vec![0], vec![None]);
        let y = act(&c, &x, &Action::Right { i: 1, n: 2, theta: 0 }).unwrap();
        assert_eq!(y.arity(), 3);
        assert_eq!(y.tree.base().n_vertices(), 2);
        assert_eq!(y.params.iter().flatten().filter(|t| t.is_one()).count(), 1);
        assert_eq!(fil_pearl(&y), 2);
        // the parameter-one vertex is removed; the pearl piece has two inputs
        let (pieces, fil) = prime_decompose(&y);
        assert_eq!(pieces.len(), 1);
        assert_eq!(fil, 2);
    }

    #[test]
    fn lambda_zero_drops_the_arity() {
        let c = ctx(Builtin::Assoc, 2);
        let t = pearled(Node::Pearl(vec![Node::Leaf(1), Node::Leaf(2)]));
        let x = elem(Family::IbLambda, t, vec![0], vec![None]);
        let y = act(&c, &x, &Action::LambdaZero { i: 1 }).unwrap();
        assert_eq!(y.arity(), 1);
        assert_eq!(y.tree.base().n_vertices(), 1);
    }

    #[test]
    fn projection_commutes_with_the_right_action() {
        let c = ctx(Builtin::Comm, 3);
        let s = IbSampler::new(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..60 {
            let x = s.sample(&c, &mut rng, true).unwrap();
            let y = act(&c, &x, &Action::Right { i: 1, n: 2, theta: 0 }).unwrap();
            let (ka, la, _) = project_mu(&c, &x).unwrap();
            let (kb, lb, _) = project_mu(&c, &y).unwrap();
            assert_eq!(kb, x.arity() + 1);
            assert_eq!(lb, c.ibim.iright(ka, la, 1, 2, 0));
        }
    }

    #[test]
    fn pearled_comm_model_in_arity_two() {
        let c = ctx(Builtin::Comm, 2);
        let fc = build_family_complex(&c, Family::IbLambda, 2).unwrap();
        assert_eq!(fc.complex.f_vector(), vec![5, 7, 3]);
        assert!(homology(&fc.complex).reduced_trivial());
        assert_eq!(fc.boundary.f_vector(), vec![4, 3]);
    }

    #[test]
    fn pearled_models_are_contractible_componentwise() {
        for k in 0..=3 {
            let c = ctx(Builtin::Comm, k);
            let fc = build_family_complex(&c, Family::IbLambda, k).unwrap();
            assert!(homology(&fc.complex).reduced_trivial(), "comm arity {k}");
        }
        let fact = [1usize, 1, 2, 6];
        #[allow(clippy::needless_range_loop)]
        for k in 0..=3 {
            let c = ctx(Builtin::Assoc, k);
            let fc = build_family_complex(&c, Family::IbLambda, k).unwrap();
            assert!(
                homology(&fc.complex).is_acyclic_with_components(fact[k]),
                "assoc arity {k}"
            );
        }
    }

    #[test]
    fn section_assoc_model_in_arity_two() {
        let c = ctx(Builtin::Assoc, 2);
        let fc = build_family_complex(&c, Family::BLambda, 2).unwrap();
        assert_eq!(fc.complex.f_vector(), vec![6, 4]);
        assert!(homology(&fc.complex).is_acyclic_with_components(2));
    }

    #[test]
    fn w_models_over_assoc() {
        let c2 = ctx(Builtin::Assoc, 2);
        let fc = build_family_complex(&c2, Family::W, 2).unwrap();
        assert_eq!(fc.complex.f_vector(), vec![2]);
        let c3 = ctx(Builtin::Assoc, 3);
        let fc = build_family_complex(&c3, Family::W, 3).unwrap();
        assert_eq!(fc.complex.f_vector(), vec![18, 12]);
        assert!(homology(&fc.complex).is_acyclic_with_components(6));
        let c1 = ctx(Builtin::Assoc, 1);
        let fc = build_family_complex(&c1, Family::W1, 1).unwrap();
        assert_eq!(fc.complex.f_vector(), vec![1]);
    }

    #[test]
    fn symmetric_families_have_no_finite_cell_model() {
        let c = ctx(Builtin::Comm, 2);
        assert!(matches!(
            build_family_complex(&c, Family::IbSigma, 2),
            Err(BVError::InfiniteCellModel(_))
        ));
    }

    #[test]
    fn cell_model_matches_the_hocolim_nerve() {
        for name in [Builtin::Comm, Builtin::Assoc] {
            for k in 2..=2 {
                let c = ctx(name, k);
                let fc = build_family_complex(&c, Family::IbLambda, k).unwrap();
                let psi = build_psi(k);
                let rho = crate::algebra::rho_diagram(&c.ibim, &psi);
                let el = category_of_elements(&psi.cat, &rho);
                let hn = homology(&nerve(&el));
                let hc = homology(&fc.complex);
                assert_eq!(hn.betti, hc.betti);
                assert_eq!(hn.torsion, hc.torsion);
                assert_eq!(hn.components, hc.components);
                // boundary pair
                let sub = psi.restrict(Selector::Boundary).unwrap();
                let rb = rho.restrict_to(&sub);
                let elb = category_of_elements(&sub, &rb);
                let hnb = homology(&nerve(&elb));
                let hcb = homology(&fc.boundary);
                assert_eq!(hnb.betti, hcb.betti);
                assert_eq!(hnb.components, hcb.components);
            }
        }
    }

    #[test]
    fn boundary_prime_is_a_subcomplex() {
        let c = ctx(Builtin::Comm, 2);
        let fc = build_family_complex(&c, Family::IbLambda, 2).unwrap();
        let bp = fc.boundary_prime.as_ref().unwrap();
        let incl = find_subcomplex(bp, &fc.complex).unwrap();
        let _ = induced_homology_map(bp, &fc.complex, &incl);
        let incl = find_subcomplex(&fc.boundary, bp).unwrap();
        let _ = induced_homology_map(&fc.boundary, bp, &incl);
    }

    #[test]
    fn gamma_splits_below_and_above_the_second_cut() {
        let c = ctx(Builtin::Comm, 3);
        let t = pearled(Node::Pearl(vec![
            Node::Leaf(1),
            Node::Vertex(vec![Node::Leaf(2), Node::Leaf(3)]),
        ]));
        // t_v = 1/2: between the cuts, below-section parameter 1/2
        let x = elem(Family::IbLambda, t.clone(), vec![0, 0], vec![None, Some(crate::rat(1, 2))]);
        let e = gamma(&c, &x).unwrap();
        assert_eq!(e.bs.len(), 2);
        let b = e.bs.iter().find(|b| b.params.iter().flatten().count() == 1).unwrap();
        let below: Vec<&Rat> = b.params.iter().flatten().collect();
        assert_eq!(below, vec![&crate::rat(1, 2)]);
        let MarkedTree::Section(st) = &b.tree else { panic!() };
        let carrier = (0..st.base.n_vertices()).find(|v| b.params[*v].is_some()).unwrap();
        assert_eq!(st.side(carrier), Some(Side::Below));
        // t_v = 3/4: above the second cut, above-section parameter 1/4
        let x = elem(Family::IbLambda, t, vec![0, 0], vec![None, Some(crate::rat(3, 4))]);
        let e = gamma(&c, &x).unwrap();
        let b = e.bs.iter().find(|b| b.params.iter().flatten().count() == 1).unwrap();
        let above: Vec<&Rat> = b.params.iter().flatten().collect();
        assert_eq!(above, vec![&crate::rat(1, 4)]);
        let MarkedTree::Section(st) = &b.tree else { panic!() };
        let carrier = (0..st.base.n_vertices()).find(|v| b.params[*v].is_some()).unwrap();
        assert_eq!(st.side(carrier), Some(Side::Above));
    }

    #[test]
    fn gamma_roundtrip_is_exact() {
        for (name, k, n) in [(Builtin::Comm, 2, 80), (Builtin::Assoc, 2, 60), (Builtin::Assoc, 3, 60)] {
            let c = ctx(name, k);
            let s = IbSampler::new(k).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(23);
            for _ in 0..n {
                let x = s.sample(&c, &mut rng, true).unwrap();
                let e = gamma(&c, &x).unwrap();
                let y = gamma_inverse(&c, &e).unwrap();
                assert_eq!(x, y);
                assert_eq!(fil_pearl(&x), fil_ibar(&e));
            }
        }
    }

    #[test]
    fn gamma_on_low_arity_is_trivial() {
        let c = ctx(Builtin::Comm, 2);
        let t = pearled(Node::Pearl(vec![Node::Leaf(1)]));
        let x = elem(Family::IbLambda, t, vec![0], vec![None]);
        let e = gamma(&c, &x).unwrap();
        assert_eq!(e.bs.len(), 1);
        assert_eq!(e.a.tree.base().n_vertices(), 1);
        assert_eq!(e.bs[0].tree.base().n_vertices(), 1);
    }

    #[test]
    fn refinement_splits_three_triangles_into_five() {
        let c = ctx(Builtin::Comm, 2);
        let fc = build_family_complex(&c, Family::IbLambda, 2).unwrap();
        assert_eq!(fc.complex.count(2), 3);
        let (refined, n) = gamma_refine(&c, &fc).unwrap();
        assert_eq!(n, 5);
        assert_eq!(refined.count(2), 5);
        assert!(homology(&refined).reduced_trivial());
    }

    #[test]
    fn push_down_moves_parameter_one_roots() {
        let c = ctx(Builtin::Assoc, 3);
        // a: pearled 1-corolla; b: below-section root at t = 1 over two pearls
        let a = elem(
            Family::IbLambda,
            pearled(Node::Pearl(vec![Node::Leaf(1)])),
            vec![0],
            vec![None],
        );
        let bt = MarkedTree::from_node(
            &Node::Vertex(vec![
                Node::Pearl(vec![Node::Leaf(1)]),
                Node::Pearl(vec![Node::Leaf(2)]),
            ]),
            TreeKind::Section,
        )
        .unwrap();
        let b = elem(Family::BLambda, bt, vec![0, 0, 0], vec![Some(Rat::one()), None, None]);
        let pair = zeta(&c, &a, &b).unwrap();
        let down = ibar_push_down(&c, &pair).unwrap();
        assert_eq!(down.bs.len(), 2);
        assert_eq!(down.a.arity(), 2);
        assert_eq!(down.sigma_word(), vec![1, 2]);
        for b in &down.bs {
            let r = b.tree.base().root();
            assert!(b.tree.pearls().contains(&r));
        }
    }

    #[test]
    fn boundary_membership_in_arity_one() {
        let c = ctx(Builtin::Comm, 3);
        // inf-left image over an arity-zero pearl: root at parameter one
        let a0 = elem(Family::IbLambda, pearled(Node::Pearl(Vec::new())), vec![0], vec![None]);
        let y = act(&c, &a0, &Action::InfLeft { i: 1, n: 2, theta: 0 }).unwrap();
        assert_eq!(y.arity(), 1);
        assert!(in_boundary_n1(&c, &y).unwrap());
        // the bare one-leaf pearl is not in the image
        let a = elem(
            Family::IbLambda,
            pearled(Node::Pearl(vec![Node::Leaf(1)])),
            vec![0],
            vec![None],
        );
        assert!(!in_boundary_n1(&c, &a).unwrap());
        // over a one-point arity-one space the nullary composition at the
        // spare slot collapses the grafted root back to the bare pearl
        let z = act(&c, &a, &Action::InfLeft { i: 1, n: 2, theta: 0 }).unwrap();
        let z = act(&c, &z, &Action::LambdaZero { i: 2 }).unwrap();
        assert!(!in_boundary_n1(&c, &z).unwrap());
        assert_eq!(z, normalize(&c, &a).unwrap());
    }

    #[test]
    fn prime_decomposition_examples() {
        let c = ctx(Builtin::Comm, 2);
        let t = pearled(Node::Pearl(vec![Node::Leaf(1), Node::Leaf(2)]));
        let x = elem(Family::IbLambda, t, vec![0], vec![None]);
        let (pieces, fil) = prime_decompose(&x);
        assert_eq!(pieces.len(), 1);
        assert_eq!(fil, 2);
        let _ = c;
    }
}
