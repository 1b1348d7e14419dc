//! Planar and non-planar rooted trees, pearled trees and trees with
//! section, together with canonical codes, exhaustive enumeration and
//! the derived order structures (trunk, toward-pearl poset, distances).
//!
//! Conventions: trees are rooted, leaves carry a bijective labelling by
//! `1..=k`, and leaf edges as well as the output edge are half-open (no
//! vertex sits at their free end).  The *arity* of a vertex is its
//! number of children; its *valence* is the arity plus one.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("malformed tree: {0}")]
    Malformed(String),
    #[error("not an inner edge: ({0}, {1})")]
    NotInnerEdge(usize, usize),
    #[error("inconsistent arity constraints: {0}")]
    BadConstraints(String),
}

/// A slot in a vertex's ordered child list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Child {
    /// Leaf carrying its label.
    Leaf(usize),
    /// Child vertex by id.
    Vertex(usize),
}

/// A planar rooted tree.  Vertices are `0..n_vertices()`; each vertex
/// owns an ordered list of children, each a leaf or another vertex.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PlanarTree {
    children: Vec<Vec<Child>>,
    root: usize,
}

impl PlanarTree {
    pub fn new(children: Vec<Vec<Child>>, root: usize) -> Result<Self, TreeError> {
        let t = PlanarTree { children, root };
        t.validate()?;
        Ok(t)
    }

    #[allow(clippy::needless_range_loop)]
    fn validate(&self) -> Result<(), TreeError> {
        let n = self.children.len();
        if self.root >= n {
            return Err(TreeError::Malformed("root id out of range".into()));
        }
        let mut seen_parent = vec![false; n];
        let mut labels = BTreeSet::new();
        for (v, ch) in self.children.iter().enumerate() {
            for c in ch {
                match *c {
                    Child::Vertex(w) => {
                        if w >= n {
                            return Err(TreeError::Malformed(format!(
                                "child id {w} out of range at vertex {v}"
                            )));
                        }
                        if w == self.root {
                            return Err(TreeError::Malformed("root has a parent".into()));
                        }
                        if seen_parent[w] {
                            return Err(TreeError::Malformed(format!(
                                "vertex {w} has two parents"
                            )));
                        }
                        seen_parent[w] = true;
                    }
                    Child::Leaf(l) => {
                        if !labels.insert(l) {
                            return Err(TreeError::Malformed(format!(
                                "duplicate leaf label {l}"
                            )));
                        }
                    }
                }
            }
        }
        for v in 0..n {
            if v != self.root && !seen_parent[v] {
                return Err(TreeError::Malformed(format!("vertex {v} unreachable")));
            }
        }
        let k = labels.len();
        if !labels.iter().copied().eq(1..=k) {
            return Err(TreeError::Malformed(format!(
                "leaf labels are not a bijection with 1..={k}"
            )));
        }
        Ok(())
    }

    pub fn n_vertices(&self) -> usize {
        self.children.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn children(&self, v: usize) -> &[Child] {
        &self.children[v]
    }

    pub fn arity(&self, v: usize) -> usize {
        self.children[v].len()
    }

    /// Arity plus one: the output edge is counted.
    pub fn valence(&self, v: usize) -> usize {
        self.arity(v) + 1
    }

    /// Number of leaves.
    pub fn leaf_count(&self) -> usize {
        self.children.iter().flatten().filter(|c| matches!(c, Child::Leaf(_))).count()
    }

    /// Leaf labels read left to right in planar order.
    pub fn leaf_word(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(self.root, &mut out);
        out
    }

    fn collect_leaves(&self, v: usize, out: &mut Vec<usize>) {
        for c in &self.children[v] {
            match *c {
                Child::Leaf(l) => out.push(l),
                Child::Vertex(w) => self.collect_leaves(w, out),
            }
        }
    }

    /// Parent of each vertex (`None` for the root).
    pub fn parents(&self) -> Vec<Option<usize>> {
        let mut p = vec![None; self.n_vertices()];
        for (v, ch) in self.children.iter().enumerate() {
            for c in ch {
                if let Child::Vertex(w) = *c {
                    p[w] = Some(v);
                }
            }
        }
        p
    }

    /// Inner edges as `(parent, child)` pairs, in child-id order.
    pub fn inner_edges(&self) -> Vec<(usize, usize)> {
        let p = self.parents();
        (0..self.n_vertices())
            .filter_map(|w| p[w].map(|v| (v, w)))
            .collect()
    }

    pub fn n_inner_edges(&self) -> usize {
        self.n_vertices() - 1
    }

    /// Path from `v` up to the root, inclusive.
    pub fn path_to_root(&self, v: usize) -> Vec<usize> {
        let p = self.parents();
        let mut path = vec![v];
        let mut cur = v;
        while let Some(u) = p[cur] {
            path.push(u);
            cur = u;
        }
        path
    }
}

/// Recursive builder notation, mainly for tests and enumeration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Node {
    Leaf(usize),
    Vertex(Vec<Node>),
    Pearl(Vec<Node>),
}

impl Node {
    /// Flattens into an indexed tree plus the set of pearl vertices.
    pub fn build(&self) -> (PlanarTree, BTreeSet<usize>) {
        fn count(n: &Node) -> usize {
            match n {
                Node::Leaf(_) => 0,
                Node::Vertex(ch) | Node::Pearl(ch) => {
                    1 + ch.iter().map(count).sum::<usize>()
                }
            }
        }
        let n = count(self);
        let mut children = vec![Vec::new(); n];
        let mut pearls = BTreeSet::new();
        let mut next = 0usize;
        fn go(
            node: &Node,
            children: &mut Vec<Vec<Child>>,
            pearls: &mut BTreeSet<usize>,
            next: &mut usize,
        ) -> Child {
            match node {
                Node::Leaf(l) => Child::Leaf(*l),
                Node::Vertex(ch) | Node::Pearl(ch) => {
                    let id = *next;
                    *next += 1;
                    if matches!(node, Node::Pearl(_)) {
                        pearls.insert(id);
                    }
                    let built: Vec<Child> =
                        ch.iter().map(|c| go(c, children, pearls, next)).collect();
                    children[id] = built;
                    Child::Vertex(id)
                }
            }
        }
        let root = go(self, &mut children, &mut pearls, &mut next);
        let root = match root {
            Child::Vertex(v) => v,
            Child::Leaf(_) => panic!("a tree needs at least one vertex"),
        };
        (PlanarTree { children, root }, pearls)
    }
}

/// A planar tree with a distinguished pearl vertex.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PearledTree {
    pub base: PlanarTree,
    pub pearl: usize,
}

impl PearledTree {
    pub fn new(base: PlanarTree, pearl: usize) -> Result<Self, TreeError> {
        if pearl >= base.n_vertices() {
            return Err(TreeError::Malformed("pearl id out of range".into()));
        }
        Ok(PearledTree { base, pearl })
    }

    /// The pearl-root path, starting at the pearl.
    pub fn trunk(&self) -> Vec<usize> {
        self.base.path_to_root(self.pearl)
    }

    /// For each vertex, its neighbour on the path toward the pearl
    /// (`None` for the pearl itself).
    pub fn pearlward(&self) -> Vec<Option<usize>> {
        let n = self.base.n_vertices();
        let parents = self.base.parents();
        let trunk = self.trunk();
        let mut pw: Vec<Option<usize>> = parents;
        for w in trunk.windows(2) {
            // w[1] is one step closer to the root; its pearlward
            // neighbour is w[0].
            pw[w[1]] = Some(w[0]);
        }
        pw[self.pearl] = None;
        debug_assert_eq!(pw.iter().filter(|x| x.is_none()).count(), 1);
        let _ = n;
        pw
    }

    /// Edge-count distance d(v; p) from each vertex to the pearl.
    pub fn dist(&self) -> Vec<usize> {
        let pw = self.pearlward();
        (0..self.base.n_vertices())
            .map(|v| {
                let mut d = 0;
                let mut cur = v;
                while let Some(u) = pw[cur] {
                    d += 1;
                    cur = u;
                }
                d
            })
            .collect()
    }

    /// MAX(T): maximal elements of V minus the pearl in the
    /// toward-pearl order.
    #[allow(clippy::needless_range_loop)]
    pub fn max_set(&self) -> BTreeSet<usize> {
        let pw = self.pearlward();
        let mut has_farther = vec![false; self.base.n_vertices()];
        for v in 0..self.base.n_vertices() {
            if let Some(u) = pw[v] {
                has_farther[u] = true;
            }
        }
        (0..self.base.n_vertices())
            .filter(|&v| v != self.pearl && !has_farther[v])
            .collect()
    }

    /// The toward-pearl poset on V minus the pearl: u <= v iff the
    /// pearl-ward path from v passes u.
    pub fn toward_pearl_poset(&self) -> Poset {
        let pw = self.pearlward();
        let elements: Vec<usize> =
            (0..self.base.n_vertices()).filter(|&v| v != self.pearl).collect();
        let index = |v: usize| elements.iter().position(|&x| x == v).unwrap();
        let n = elements.len();
        let mut leq = vec![vec![false; n]; n];
        for (j, &v) in elements.iter().enumerate() {
            let mut cur = v;
            leq[j][j] = true;
            while let Some(u) = pw[cur] {
                if u != self.pearl {
                    leq[index(u)][j] = true;
                }
                cur = u;
            }
        }
        Poset { elements, leq }
    }

    /// Arity of the pearl after contracting every trunk edge.
    pub fn trunk_arity(&self) -> usize {
        let trunk: BTreeSet<usize> = self.trunk().into_iter().collect();
        trunk
            .iter()
            .map(|&v| {
                self.base
                    .children(v)
                    .iter()
                    .filter(|c| !matches!(c, Child::Vertex(w) if trunk.contains(w)))
                    .count()
            })
            .sum()
    }
}

/// Which side of the section a non-pearl vertex lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Above,
    Below,
}

/// A planar tree with a section: a set of pearls met exactly once by
/// every path from the root to a leaf or to a childless vertex.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SectionTree {
    pub base: PlanarTree,
    pub pearls: BTreeSet<usize>,
}

impl SectionTree {
    pub fn new(base: PlanarTree, pearls: BTreeSet<usize>) -> Result<Self, TreeError> {
        let t = SectionTree { base, pearls };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<(), TreeError> {
        // Count pearls on the path above each vertex, then check every
        // path end sees exactly one.
        let n = self.base.n_vertices();
        for &p in &self.pearls {
            if p >= n {
                return Err(TreeError::Malformed("pearl id out of range".into()));
            }
        }
        let ok = self.check(self.base.root(), 0);
        if ok {
            Ok(())
        } else {
            Err(TreeError::Malformed(
                "some maximal path does not meet exactly one pearl".into(),
            ))
        }
    }

    fn check(&self, v: usize, seen: usize) -> bool {
        let seen = seen + usize::from(self.pearls.contains(&v));
        if seen > 1 {
            return false;
        }
        if self.base.children(v).is_empty() {
            return seen == 1;
        }
        self.base.children(v).iter().all(|c| match *c {
            Child::Leaf(_) => seen == 1,
            Child::Vertex(w) => self.check(w, seen),
        })
    }

    /// Side classification of each non-pearl vertex.
    pub fn side(&self, v: usize) -> Option<Side> {
        if self.pearls.contains(&v) {
            return None;
        }
        let above = self
            .base
            .path_to_root(v)
            .iter()
            .skip(1)
            .any(|u| self.pearls.contains(u));
        Some(if above { Side::Above } else { Side::Below })
    }
}

/// A tree of any of the three kinds handled by the crate.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum MarkedTree {
    Rooted(PlanarTree),
    Pearled(PearledTree),
    Section(SectionTree),
}

impl MarkedTree {
    pub fn base(&self) -> &PlanarTree {
        match self {
            MarkedTree::Rooted(t) => t,
            MarkedTree::Pearled(t) => &t.base,
            MarkedTree::Section(t) => &t.base,
        }
    }

    pub fn pearls(&self) -> BTreeSet<usize> {
        match self {
            MarkedTree::Rooted(_) => BTreeSet::new(),
            MarkedTree::Pearled(t) => BTreeSet::from([t.pearl]),
            MarkedTree::Section(t) => t.pearls.clone(),
        }
    }

    pub fn kind(&self) -> TreeKind {
        match self {
            MarkedTree::Rooted(_) => TreeKind::Rooted,
            MarkedTree::Pearled(_) => TreeKind::Pearled,
            MarkedTree::Section(_) => TreeKind::Section,
        }
    }

    pub fn from_node(node: &Node, kind: TreeKind) -> Result<Self, TreeError> {
        let (base, pearls) = node.build();
        Self::from_parts(base, pearls, kind)
    }

    pub fn from_parts(
        base: PlanarTree,
        pearls: BTreeSet<usize>,
        kind: TreeKind,
    ) -> Result<Self, TreeError> {
        base.validate()?;
        match kind {
            TreeKind::Rooted => {
                if !pearls.is_empty() {
                    return Err(TreeError::Malformed("rooted tree with pearls".into()));
                }
                Ok(MarkedTree::Rooted(base))
            }
            TreeKind::Pearled => {
                if pearls.len() != 1 {
                    return Err(TreeError::Malformed(
                        "pearled tree needs exactly one pearl".into(),
                    ));
                }
                let pearl = *pearls.iter().next().unwrap();
                Ok(MarkedTree::Pearled(PearledTree::new(base, pearl)?))
            }
            TreeKind::Section => Ok(MarkedTree::Section(SectionTree::new(base, pearls)?)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TreeKind {
    Rooted,
    Pearled,
    Section,
}

impl fmt::Display for TreeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TreeKind::Rooted => "rooted",
            TreeKind::Pearled => "pearled",
            TreeKind::Section => "section",
        };
        f.write_str(s)
    }
}

/// A finite poset over vertex ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poset {
    /// External names of the elements, indexed by position.
    pub elements: Vec<usize>,
    /// `leq[i][j]` means element i <= element j (positional indices).
    pub leq: Vec<Vec<bool>>,
}

impl Poset {
    pub fn antichain(elements: Vec<usize>) -> Self {
        let n = elements.len();
        let mut leq = vec![vec![false; n]; n];
        for (i, row) in leq.iter_mut().enumerate() {
            row[i] = true;
        }
        Poset { elements, leq }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// All linear extensions, each a permutation of positional indices
    /// from smallest to largest.
    pub fn linear_extensions(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut out = Vec::new();
        let mut used = vec![false; n];
        let mut cur = Vec::with_capacity(n);
        self.le_rec(&mut used, &mut cur, &mut out);
        let _ = n;
        out
    }

    fn le_rec(&self, used: &mut Vec<bool>, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == self.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..self.len() {
            if used[i] {
                continue;
            }
            // i may come next if everything below it is already placed.
            if (0..self.len()).all(|j| j == i || !self.leq[j][i] || used[j]) {
                used[i] = true;
                cur.push(i);
                self.le_rec(used, cur, out);
                cur.pop();
                used[i] = false;
            }
        }
    }

    /// All up-sets (filters), as sorted positional index lists.
    pub fn filters(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut out = Vec::new();
        'subsets: for mask in 0u64..(1u64 << n) {
            for i in 0..n {
                if mask & (1 << i) != 0 {
                    for j in 0..n {
                        if self.leq[i][j] && mask & (1 << j) == 0 {
                            continue 'subsets;
                        }
                    }
                }
            }
            out.push((0..n).filter(|i| mask & (1 << i) != 0).collect());
        }
        out
    }

    pub fn is_antichain(&self, set: &[usize]) -> bool {
        set.iter().all(|&i| {
            set.iter().all(|&j| i == j || (!self.leq[i][j] && !self.leq[j][i]))
        })
    }
}

/// Canonical-form representative of a non-planar isomorphism class.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TreeClass {
    pub code: String,
    pub representative: MarkedTree,
    pub n_inner_edges: usize,
}

impl TreeClass {
    pub fn k(&self) -> usize {
        self.representative.base().leaf_count()
    }
}

/// Result of canonicalization: the class, the canonical left-to-right
/// leaf word, and the map from old vertex ids to canonical ids.
pub struct Canonicalized {
    pub class: TreeClass,
    pub leaf_word: Vec<usize>,
    pub vertex_map: Vec<usize>,
    /// Per old vertex id: the reordering applied to its child slots,
    /// as the list of old slot indices in their new order.
    pub child_perms: Vec<Vec<usize>>,
}

/// Canonical code of a subtree; pearls are tagged `P`, an extra tag per
/// vertex may be supplied (used by the BV layer to embed labels and
/// parameters).
fn code_of(
    base: &PlanarTree,
    pearls: &BTreeSet<usize>,
    v: usize,
    tag: &dyn Fn(usize) -> String,
    order: &mut Vec<(usize, Vec<usize>)>,
) -> String {
    let mut coded: Vec<(String, Option<usize>)> = base
        .children(v)
        .iter()
        .map(|c| match *c {
            Child::Leaf(l) => (format!("L{l}"), None),
            Child::Vertex(w) => (code_of(base, pearls, w, tag, order), Some(w)),
        })
        .collect();
    let mut idx: Vec<usize> = (0..coded.len()).collect();
    idx.sort_by(|&a, &b| coded[a].0.cmp(&coded[b].0));
    let sorted: Vec<(String, Option<usize>)> = idx.iter().map(|&i| coded[i].clone()).collect();
    coded = sorted;
    order.push((v, idx));
    let p = if pearls.contains(&v) { "P" } else { "" };
    let t = tag(v);
    let body: Vec<&str> = coded.iter().map(|(s, _)| s.as_str()).collect();
    format!("{p}{t}({})", body.join(","))
}

/// Canonicalizes with a custom per-vertex tag.  Planar reorderings of
/// the same labelled tree yield equal codes.
pub fn canonicalize_tagged(
    t: &MarkedTree,
    tag: &dyn Fn(usize) -> String,
) -> Canonicalized {
    let base = t.base();
    let pearls = t.pearls();
    let mut order: Vec<(usize, Vec<usize>)> = Vec::new();
    let code = code_of(base, &pearls, base.root(), tag, &mut order);
    // Rebuild the tree with children in code order, assigning canonical
    // preorder ids.
    let sort_of = |v: usize| -> &Vec<usize> {
        &order.iter().find(|(w, _)| *w == v).unwrap().1
    };
    let n = base.n_vertices();
    let mut vertex_map = vec![usize::MAX; n];
    let mut children: Vec<Vec<Child>> = Vec::new();
    let mut next = 0usize;
    fn rebuild(
        base: &PlanarTree,
        v: usize,
        sort_of: &dyn Fn(usize) -> Vec<usize>,
        vertex_map: &mut Vec<usize>,
        children: &mut Vec<Vec<Child>>,
        next: &mut usize,
    ) -> usize {
        let id = *next;
        *next += 1;
        vertex_map[v] = id;
        children.push(Vec::new());
        let perm = sort_of(v);
        let mut built = Vec::new();
        for &i in &perm {
            match base.children(v)[i] {
                Child::Leaf(l) => built.push(Child::Leaf(l)),
                Child::Vertex(w) => {
                    let nid = rebuild(base, w, sort_of, vertex_map, children, next);
                    built.push(Child::Vertex(nid));
                }
            }
        }
        children[id] = built;
        id
    }
    let sort_fn = |v: usize| sort_of(v).clone();
    let root = rebuild(base, base.root(), &sort_fn, &mut vertex_map, &mut children, &mut next);
    let new_base = PlanarTree { children, root };
    let new_pearls: BTreeSet<usize> = pearls.iter().map(|&p| vertex_map[p]).collect();
    let rep = MarkedTree::from_parts(new_base, new_pearls, t.kind())
        .expect("canonical rebuild preserves validity");
    let leaf_word = rep.base().leaf_word();
    let n_inner_edges = rep.base().n_inner_edges();
    let mut child_perms = vec![Vec::new(); n];
    for (v, idx) in &order {
        child_perms[*v] = idx.clone();
    }
    Canonicalized {
        class: TreeClass { code, representative: rep, n_inner_edges },
        leaf_word,
        vertex_map,
        child_perms,
    }
}

/// Canonicalizes a marked tree into its non-planar class.
pub fn canonicalize(t: &MarkedTree) -> Canonicalized {
    canonicalize_tagged(t, &|_| String::new())
}

/// Contracts the inner edge `(parent, child)` of a planar tree,
/// splicing the child's children into the parent's slot.  Returns the
/// contracted tree and the vertex id map (the child maps to the merged
/// vertex).
pub fn contract_edge_raw(
    base: &PlanarTree,
    parent: usize,
    child: usize,
) -> Result<(PlanarTree, Vec<usize>), TreeError> {
    if !base.children(parent).contains(&Child::Vertex(child)) {
        return Err(TreeError::NotInnerEdge(parent, child));
    }
    let n = base.n_vertices();
    // New ids: drop `child`, shift later ids down by one.
    let map = |v: usize| -> usize {
        if v == child {
            if parent < child { parent } else { parent - 1 }
        } else if v < child {
            v
        } else {
            v - 1
        }
    };
    let mut children: Vec<Vec<Child>> = Vec::with_capacity(n - 1);
    for v in 0..n {
        if v == child {
            continue;
        }
        let mut row: Vec<Child> = Vec::new();
        for c in base.children(v) {
            match *c {
                Child::Leaf(l) => row.push(Child::Leaf(l)),
                Child::Vertex(w) if w == child && v == parent => {
                    for cc in base.children(child) {
                        match *cc {
                            Child::Leaf(l) => row.push(Child::Leaf(l)),
                            Child::Vertex(x) => row.push(Child::Vertex(map(x))),
                        }
                    }
                }
                Child::Vertex(w) => row.push(Child::Vertex(map(w))),
            }
        }
        children.push(row);
    }
    let new = PlanarTree { children, root: map(base.root()) };
    new.validate()?;
    let vertex_map: Vec<usize> = (0..n).map(map).collect();
    Ok((new, vertex_map))
}

/// Contracts an inner edge of a marked tree.  If either endpoint is a
/// pearl, the merged vertex is a pearl.
pub fn contract_edge(
    t: &MarkedTree,
    parent: usize,
    child: usize,
) -> Result<TreeClass, TreeError> {
    let (base, map) = contract_edge_raw(t.base(), parent, child)?;
    let pearls: BTreeSet<usize> = t.pearls().iter().map(|&p| map[p]).collect();
    let marked = MarkedTree::from_parts(base, pearls, t.kind())?;
    Ok(canonicalize(&marked).class)
}

/// Minimum arities demanded of pearls and non-pearl vertices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArityConstraints {
    pub pearl_min: usize,
    pub nonpearl_min: usize,
}

/// Enumerates every non-planar isomorphism class of the requested kind
/// with `k` labelled leaves, in canonical-code order.
///
/// Completeness rests on the sum-of-arities bound: with non-pearl
/// arities at least 2, a tree with n non-pearl vertices satisfies
/// 2n <= n + k, so n <= k.
pub fn enumerate_tree_classes(
    kind: TreeKind,
    k: usize,
    c: ArityConstraints,
) -> Result<Vec<TreeClass>, TreeError> {
    if c.nonpearl_min < 2 {
        return Err(TreeError::BadConstraints(
            "non-pearl arities below 2 make the class count infinite".into(),
        ));
    }
    if kind == TreeKind::Section && c.pearl_min < 1 && k > 0 {
        return Err(TreeError::BadConstraints(
            "section trees need pearls of arity at least 1".into(),
        ));
    }
    let labels: Vec<usize> = (1..=k).collect();
    let nodes: Vec<Node> = match kind {
        TreeKind::Rooted => gen_rooted(&labels, c.nonpearl_min, true),
        TreeKind::Pearled => gen_pearled(&labels, c),
        TreeKind::Section => gen_section_below(&labels, c),
    };
    let mut out: Vec<TreeClass> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for node in nodes {
        let marked = MarkedTree::from_node(&node, kind)?;
        if kind == TreeKind::Pearled {
            let MarkedTree::Pearled(pt) = &marked else { unreachable!() };
            let non_pearl = pt.base.n_vertices() - 1;
            assert!(non_pearl <= k, "arity bound violated during enumeration");
        }
        let canon = canonicalize(&marked);
        if seen.insert(canon.class.code.clone()) {
            out.push(canon.class);
        }
    }
    out.sort_by(|a, b| a.code.cmp(&b.code));
    Ok(out)
}

/// All set partitions of `items` into non-empty blocks.
pub fn set_partitions(items: &[usize]) -> Vec<Vec<Vec<usize>>> {
    if items.is_empty() {
        return vec![vec![]];
    }
    let first = items[0];
    let rest = &items[1..];
    let mut out = Vec::new();
    for mut part in set_partitions(rest) {
        for i in 0..part.len() {
            let mut p = part.clone();
            p[i].insert(0, first);
            out.push(p);
        }
        part.push(vec![first]);
        out.push(part);
    }
    out
}

/// Subtrees over exactly `labels`, all vertices non-pearl with arity at
/// least `min`.  When `root_vertex` is set the result must be a vertex
/// (not a bare leaf).
fn gen_rooted(labels: &[usize], min: usize, root_vertex: bool) -> Vec<Node> {
    let mut out = Vec::new();
    if labels.len() == 1 && !root_vertex {
        out.push(Node::Leaf(labels[0]));
    }
    for part in set_partitions(labels) {
        if part.len() < min || part.is_empty() {
            continue;
        }
        let choices: Vec<Vec<Node>> =
            part.iter().map(|b| gen_rooted(b, min, false)).collect();
        for combo in cartesian(&choices) {
            out.push(Node::Vertex(combo));
        }
    }
    out
}

fn cartesian(choices: &[Vec<Node>]) -> Vec<Vec<Node>> {
    let mut acc: Vec<Vec<Node>> = vec![Vec::new()];
    for c in choices {
        let mut next = Vec::new();
        for prefix in &acc {
            for item in c {
                let mut p = prefix.clone();
                p.push(item.clone());
                next.push(p);
            }
        }
        acc = next;
    }
    acc
}

/// Pearled subtrees over exactly `labels` containing the pearl.
fn gen_pearled(labels: &[usize], c: ArityConstraints) -> Vec<Node> {
    let mut out = Vec::new();
    // Pearl at the root of the subtree.
    if labels.is_empty()
        && c.pearl_min == 0 {
            out.push(Node::Pearl(Vec::new()));
        }
    for part in set_partitions(labels) {
        if part.len() < c.pearl_min || (part.is_empty() && !labels.is_empty()) {
            continue;
        }
        if part.is_empty() {
            continue; // handled above
        }
        let choices: Vec<Vec<Node>> =
            part.iter().map(|b| gen_rooted(b, c.nonpearl_min, false)).collect();
        for combo in cartesian(&choices) {
            out.push(Node::Pearl(combo));
        }
    }
    // Non-pearl root with the pearl in exactly one child block, which
    // may carry no leaves (a bare pearl hanging off the root).
    for part in pearl_partitions(labels) {
        let (pearl_block, rest) = part;
        let arity = 1 + rest.len();
        if arity < c.nonpearl_min {
            continue;
        }
        if pearl_block.is_empty() && c.pearl_min > 0 {
            continue;
        }
        let pearl_subs = gen_pearled(&pearl_block, c);
        let rest_choices: Vec<Vec<Node>> =
            rest.iter().map(|b| gen_rooted(b, c.nonpearl_min, false)).collect();
        for ps in &pearl_subs {
            for combo in cartesian(&rest_choices) {
                let mut ch = vec![ps.clone()];
                ch.extend(combo);
                out.push(Node::Vertex(ch));
            }
        }
    }
    out
}

/// Splits `labels` into a possibly-empty pearl block plus a set
/// partition of the remainder.
fn pearl_partitions(labels: &[usize]) -> Vec<(Vec<usize>, Vec<Vec<usize>>)> {
    let mut out = Vec::new();
    let n = labels.len();
    for mask in 0u64..(1u64 << n) {
        let pearl_block: Vec<usize> =
            (0..n).filter(|i| mask & (1 << i) != 0).map(|i| labels[i]).collect();
        let rest: Vec<usize> =
            (0..n).filter(|i| mask & (1 << i) == 0).map(|i| labels[i]).collect();
        for part in set_partitions(&rest) {
            out.push((pearl_block.clone(), part.clone()));
        }
    }
    out
}

/// Section subtrees over exactly `labels` whose root is on or below the
/// section (every path inside still has to cross one pearl).
fn gen_section_below(labels: &[usize], c: ArityConstraints) -> Vec<Node> {
    let mut out = Vec::new();
    if labels.is_empty() {
        if c.pearl_min == 0 {
            out.push(Node::Pearl(Vec::new()));
        }
        return out;
    }
    // Pearl root: children are above-section subtrees.
    for part in set_partitions(labels) {
        if part.len() < c.pearl_min.max(1) {
            continue;
        }
        let choices: Vec<Vec<Node>> =
            part.iter().map(|b| gen_rooted(b, c.nonpearl_min, false)).collect();
        for combo in cartesian(&choices) {
            out.push(Node::Pearl(combo));
        }
    }
    // Below-section root: every child is itself a below-section tree.
    for part in set_partitions(labels) {
        if part.len() < c.nonpearl_min || part.len() < 2 {
            continue;
        }
        let choices: Vec<Vec<Node>> =
            part.iter().map(|b| gen_section_below(b, c)).collect();
        for combo in cartesian(&choices) {
            out.push(Node::Vertex(combo));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pearled(node: Node) -> MarkedTree {
        MarkedTree::from_node(&node, TreeKind::Pearled).unwrap()
    }

    fn psi_constraints() -> ArityConstraints {
        ArityConstraints { pearl_min: 0, nonpearl_min: 2 }
    }

    #[test]
    fn enumerate_pearled_k0() {
        let classes =
            enumerate_tree_classes(TreeKind::Pearled, 0, psi_constraints()).unwrap();
        assert_eq!(classes.len(), 1);
        assert_eq!(classes[0].code, "P()");
    }

    #[test]
    fn enumerate_pearled_k1() {
        let classes =
            enumerate_tree_classes(TreeKind::Pearled, 1, psi_constraints()).unwrap();
        assert_eq!(classes.len(), 2);
    }

    #[test]
    fn enumerate_pearled_k2() {
        let classes =
            enumerate_tree_classes(TreeKind::Pearled, 2, psi_constraints()).unwrap();
        // Hand count: 1 bare-pearl class, 4 one-non-pearl classes, 3
        // two-non-pearl classes.
        assert_eq!(classes.len(), 8);
    }

    #[test]
    fn enumerate_rooted_k3() {
        let classes = enumerate_tree_classes(
            TreeKind::Rooted,
            3,
            ArityConstraints { pearl_min: 0, nonpearl_min: 2 },
        )
        .unwrap();
        assert_eq!(classes.len(), 4);
        let corollas = classes
            .iter()
            .filter(|c| c.representative.base().n_vertices() == 1)
            .count();
        assert_eq!(corollas, 1);
    }

    #[test]
    fn enumerate_section_k1() {
        let classes = enumerate_tree_classes(
            TreeKind::Section,
            1,
            ArityConstraints { pearl_min: 1, nonpearl_min: 2 },
        )
        .unwrap();
        assert_eq!(classes.len(), 1);
        assert_eq!(classes[0].code, "P(L1)");
    }

    #[test]
    fn enumerate_rejects_unary_nonpearls() {
        let err = enumerate_tree_classes(
            TreeKind::Pearled,
            2,
            ArityConstraints { pearl_min: 0, nonpearl_min: 1 },
        );
        assert!(err.is_err());
    }

    #[test]
    fn canonical_code_ignores_planar_order() {
        let a = pearled(Node::Vertex(vec![
            Node::Leaf(1),
            Node::Pearl(vec![Node::Leaf(2)]),
        ]));
        let b = pearled(Node::Vertex(vec![
            Node::Pearl(vec![Node::Leaf(2)]),
            Node::Leaf(1),
        ]));
        assert_eq!(canonicalize(&a).class.code, canonicalize(&b).class.code);
    }

    #[test]
    fn canonicalize_idempotent() {
        let t = pearled(Node::Vertex(vec![
            Node::Vertex(vec![Node::Leaf(2), Node::Leaf(1)]),
            Node::Pearl(vec![]),
        ]));
        let once = canonicalize(&t);
        let twice = canonicalize(&once.class.representative);
        assert_eq!(once.class, twice.class);
    }

    #[test]
    fn contract_inner_edge_of_c_prime_2() {
        // c'_2: pearled root of arity 1 under a 2-ary vertex.
        let t = pearled(Node::Pearl(vec![Node::Vertex(vec![
            Node::Leaf(1),
            Node::Leaf(2),
        ])]));
        let c2 = pearled(Node::Pearl(vec![Node::Leaf(1), Node::Leaf(2)]));
        let edges = t.base().inner_edges();
        assert_eq!(edges.len(), 1);
        let contracted = contract_edge(&t, edges[0].0, edges[0].1).unwrap();
        assert_eq!(contracted.code, canonicalize(&c2).class.code);
    }

    #[test]
    fn contract_absorbs_into_pearl() {
        // v(2){l1, p(1){l2}} with edge (v, p) contracted gives c_2.
        let t = pearled(Node::Vertex(vec![
            Node::Leaf(1),
            Node::Pearl(vec![Node::Leaf(2)]),
        ]));
        let edges = t.base().inner_edges();
        let contracted = contract_edge(&t, edges[0].0, edges[0].1).unwrap();
        let c2 = pearled(Node::Pearl(vec![Node::Leaf(1), Node::Leaf(2)]));
        assert_eq!(contracted.code, canonicalize(&c2).class.code);
    }

    #[test]
    fn contract_merges_non_pearls() {
        // v1(2){p(0), v2(2){l1,l2}} with (v1,v2) contracted gives
        // w(3){p, l1, l2}.
        let t = pearled(Node::Vertex(vec![
            Node::Pearl(vec![]),
            Node::Vertex(vec![Node::Leaf(1), Node::Leaf(2)]),
        ]));
        let edges = t.base().inner_edges();
        let (parent, child) = *edges
            .iter()
            .find(|&&(_, w)| !t.pearls().contains(&w))
            .unwrap();
        let contracted = contract_edge(&t, parent, child).unwrap();
        let expected = pearled(Node::Vertex(vec![
            Node::Pearl(vec![]),
            Node::Leaf(1),
            Node::Leaf(2),
        ]));
        assert_eq!(contracted.code, canonicalize(&expected).class.code);
    }

    #[test]
    fn trunk_arity_examples() {
        let c3 = pearled(Node::Pearl(vec![Node::Leaf(1), Node::Leaf(2), Node::Leaf(3)]));
        let MarkedTree::Pearled(c3) = c3 else { unreachable!() };
        assert_eq!(c3.trunk_arity(), 3);

        let cp3 = pearled(Node::Pearl(vec![Node::Vertex(vec![
            Node::Leaf(1),
            Node::Leaf(2),
            Node::Leaf(3),
        ])]));
        let MarkedTree::Pearled(cp3) = cp3 else { unreachable!() };
        assert_eq!(cp3.trunk_arity(), 1);

        let t = pearled(Node::Vertex(vec![
            Node::Leaf(1),
            Node::Pearl(vec![Node::Leaf(2)]),
        ]));
        let MarkedTree::Pearled(t) = t else { unreachable!() };
        assert_eq!(t.trunk_arity(), 2);
    }

    #[test]
    fn toward_pearl_poset_shapes() {
        // Pearled corolla: empty poset.
        let c2 = pearled(Node::Pearl(vec![Node::Leaf(1), Node::Leaf(2)]));
        let MarkedTree::Pearled(c2) = c2 else { unreachable!() };
        assert!(c2.toward_pearl_poset().is_empty());

        // Chain v1(2){p, v2(2){l1,l2}}: a 2-chain v1 < v2.
        let t = pearled(Node::Vertex(vec![
            Node::Pearl(vec![]),
            Node::Vertex(vec![Node::Leaf(1), Node::Leaf(2)]),
        ]));
        let MarkedTree::Pearled(t) = t else { unreachable!() };
        let p = t.toward_pearl_poset();
        assert_eq!(p.len(), 2);
        assert_eq!(p.linear_extensions().len(), 1);

        // Two one-vertex branches off the trunk: a 2-antichain.
        let t = pearled(Node::Vertex(vec![
            Node::Pearl(vec![]),
            Node::Vertex(vec![Node::Leaf(1), Node::Leaf(2)]),
            Node::Vertex(vec![Node::Leaf(3), Node::Leaf(4)]),
        ]));
        let MarkedTree::Pearled(t) = t else { unreachable!() };
        let p = t.toward_pearl_poset();
        assert_eq!(p.len(), 3);
        // Root below each branch vertex; branches incomparable.
        assert_eq!(p.linear_extensions().len(), 2);
    }

    #[test]
    fn dist_and_max_set_agree_with_bfs() {
        let t = pearled(Node::Vertex(vec![
            Node::Pearl(vec![Node::Vertex(vec![Node::Leaf(1), Node::Leaf(2)])]),
            Node::Vertex(vec![Node::Leaf(3), Node::Leaf(4)]),
        ]));
        let MarkedTree::Pearled(t) = t else { unreachable!() };
        let dist = t.dist();
        // Independent check: undirected BFS from the pearl.
        let n = t.base.n_vertices();
        let mut adj = vec![Vec::new(); n];
        for (a, b) in t.base.inner_edges() {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut bfs = vec![usize::MAX; n];
        bfs[t.pearl] = 0;
        let mut queue = std::collections::VecDeque::from([t.pearl]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if bfs[w] == usize::MAX {
                    bfs[w] = bfs[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        assert_eq!(dist, bfs);
        let max = t.max_set();
        for &v in &max {
            assert!(t.pearlward().iter().all(|&pw| pw != Some(v)));
        }
        assert_eq!(max.len(), 2);
    }

    #[test]
    fn section_side_classification() {
        let t = MarkedTree::from_node(
            &Node::Vertex(vec![
                Node::Pearl(vec![Node::Leaf(1)]),
                Node::Pearl(vec![Node::Vertex(vec![Node::Leaf(2), Node::Leaf(3)])]),
            ]),
            TreeKind::Section,
        )
        .unwrap();
        let MarkedTree::Section(t) = t else { unreachable!() };
        assert_eq!(t.side(t.base.root()), Some(Side::Below));
        let above: Vec<usize> = (0..t.base.n_vertices())
            .filter(|&v| t.side(v) == Some(Side::Above))
            .collect();
        assert_eq!(above.len(), 1);
    }

    #[test]
    fn section_rejects_uncovered_path() {
        let r = MarkedTree::from_node(
            &Node::Vertex(vec![Node::Pearl(vec![Node::Leaf(1)]), Node::Leaf(2)]),
            TreeKind::Section,
        );
        assert!(r.is_err());
    }

    #[test]
    fn contraction_commutes_with_canonicalization() {
        let classes =
            enumerate_tree_classes(TreeKind::Pearled, 3, psi_constraints()).unwrap();
        for class in &classes {
            let t = &class.representative;
            for (a, b) in t.base().inner_edges() {
                let c = contract_edge(t, a, b).unwrap();
                assert_eq!(
                    c.representative.base().n_vertices(),
                    t.base().n_vertices() - 1
                );
                // Re-canonicalizing the contraction is stable.
                let again = canonicalize(&c.representative);
                assert_eq!(again.class.code, c.code);
            }
        }
    }

    #[test]
    fn pearled_vertex_bound_holds() {
        for k in 0..=4 {
            for class in
                enumerate_tree_classes(TreeKind::Pearled, k, psi_constraints()).unwrap()
            {
                assert!(class.representative.base().n_vertices() - 1 <= k);
            }
        }
    }
}
