//! Finite semi-simplicial complexes, nerves, categories of elements,
//! integer homology via Smith normal form, order-polytope
//! triangulations and cellular cosheaves.
//!
//! All homological algebra is over arbitrary-precision integers; all
//! geometry is over arbitrary-precision rationals.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::algebra::SetDiagram;
use crate::psi::RelCategory;
use crate::trees::Poset;
use crate::{Int, Rat};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ComplexError {
    #[error("malformed complex: {0}")]
    Malformed(String),
    #[error("not a subcomplex: {0}")]
    NotSubcomplex(String),
    #[error("not a refinement: {0}")]
    NotRefinement(String),
    #[error("inconsistent cosheaf: {0}")]
    Cosheaf(String),
}

// ---------------------------------------------------------------------------
// delta complexes

/// A single simplex: ordered facets and an optional provenance label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Simplex {
    /// For dimension d > 0 the ids of the d+1 facets, in face-map
    /// order (the i-th entry is the i-th face).
    pub faces: Vec<usize>,
    pub label: String,
}

/// A finite semi-simplicial (delta) complex.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DeltaComplex {
    /// Simplices per dimension.
    pub simplices: Vec<Vec<Simplex>>,
}

impl DeltaComplex {
    pub fn dim(&self) -> Option<usize> {
        if self.simplices.iter().all(|l| l.is_empty()) {
            None
        } else {
            Some(self.simplices.iter().rposition(|l| !l.is_empty()).unwrap())
        }
    }

    pub fn count(&self, d: usize) -> usize {
        self.simplices.get(d).map_or(0, |l| l.len())
    }

    pub fn push(&mut self, d: usize, faces: Vec<usize>, label: String) -> usize {
        while self.simplices.len() <= d {
            self.simplices.push(Vec::new());
        }
        self.simplices[d].push(Simplex { faces, label });
        self.simplices[d].len() - 1
    }

    /// Checks the semi-simplicial identities d_i d_j = d_{j-1} d_i
    /// for i < j, and facet-count bookkeeping.
    pub fn validate(&self) -> Result<(), ComplexError> {
        for (d, level) in self.simplices.iter().enumerate() {
            for (s, simplex) in level.iter().enumerate() {
                if d == 0 {
                    if !simplex.faces.is_empty() {
                        return Err(ComplexError::Malformed(format!(
                            "vertex {s} has facets"
                        )));
                    }
                    continue;
                }
                if simplex.faces.len() != d + 1 {
                    return Err(ComplexError::Malformed(format!(
                        "{d}-simplex {s} has {} facets",
                        simplex.faces.len()
                    )));
                }
                for &f in &simplex.faces {
                    if f >= self.count(d - 1) {
                        return Err(ComplexError::Malformed(format!(
                            "{d}-simplex {s} has facet {f} out of range"
                        )));
                    }
                }
                if d >= 2 {
                    for i in 0..=d {
                        for j in (i + 1)..=d {
                            let a = self.simplices[d - 1][simplex.faces[j]].faces[i];
                            let b = self.simplices[d - 1][simplex.faces[i]].faces[j - 1];
                            if a != b {
                                return Err(ComplexError::Malformed(format!(
                                    "face identity fails on {d}-simplex {s} at ({i},{j})"
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Counts of simplices per dimension, trailing zeros trimmed.
    pub fn f_vector(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.simplices.iter().map(|l| l.len()).collect();
        while f.last() == Some(&0) {
            f.pop();
        }
        f
    }

    /// Simplex lookup by label within a dimension.
    pub fn find(&self, d: usize, label: &str) -> Option<usize> {
        self.simplices.get(d)?.iter().position(|s| s.label == label)
    }
}

/// Integer boundary matrices; `boundary[d]` maps d-chains to
/// (d-1)-chains, with `boundary[0]` the zero map to rank 0.
#[derive(Clone, Debug)]
pub struct ChainComplex {
    pub dims: Vec<usize>,
    pub boundary: Vec<IMat>,
}

impl ChainComplex {
    /// Verifies that consecutive boundary products vanish.
    pub fn validate(&self) -> Result<(), ComplexError> {
        for d in 1..self.boundary.len() {
            let prod = self.boundary[d - 1].mul(&self.boundary[d]);
            if !prod.is_zero() {
                return Err(ComplexError::Malformed(format!(
                    "boundary squared nonzero between degrees {d} and {}",
                    d - 1
                )));
            }
        }
        Ok(())
    }
}

/// The simplicial chain complex with alternating-sign boundaries.
pub fn chain_complex(x: &DeltaComplex) -> ChainComplex {
    let top = x.simplices.len();
    let mut dims = Vec::new();
    let mut boundary = Vec::new();
    for d in 0..top {
        let n = x.count(d);
        dims.push(n);
        let rows = if d == 0 { 0 } else { x.count(d - 1) };
        let mut m = IMat::zero(rows, n);
        if d > 0 {
            for (s, simplex) in x.simplices[d].iter().enumerate() {
                for (i, &f) in simplex.faces.iter().enumerate() {
                    let sign = if i % 2 == 0 { Int::one() } else { -Int::one() };
                    m.data[f][s] += sign;
                }
            }
        }
        boundary.push(m);
    }
    ChainComplex { dims, boundary }
}

// ---------------------------------------------------------------------------
// integer matrices and Smith normal form

/// Dense matrix of arbitrary-precision integers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Vec<Int>>,
}

impl IMat {
    pub fn zero(rows: usize, cols: usize) -> Self {
        IMat { rows, cols, data: vec![vec![Int::zero(); cols]; rows] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = IMat::zero(n, n);
        for i in 0..n {
            m.data[i][i] = Int::one();
        }
        m
    }

    pub fn from_rows(data: Vec<Vec<Int>>) -> Self {
        let rows = data.len();
        let cols = data.first().map_or(0, |r| r.len());
        assert!(data.iter().all(|r| r.len() == cols));
        IMat { rows, cols, data }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|r| r.iter().all(|e| e.is_zero()))
    }

    pub fn mul(&self, other: &IMat) -> IMat {
        assert_eq!(self.cols, other.rows);
        let mut out = IMat::zero(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                if self.data[i][k].is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    if !other.data[k][j].is_zero() {
                        let t = &self.data[i][k] * &other.data[k][j];
                        out.data[i][j] += t;
                    }
                }
            }
        }
        out
    }

    /// Horizontal concatenation [self | other].
    pub fn hcat(&self, other: &IMat) -> IMat {
        assert_eq!(self.rows, other.rows);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.iter().chain(b.iter()).cloned().collect())
            .collect();
        IMat { rows: self.rows, cols: self.cols + other.cols, data }
    }

    /// The submatrix of the given rows.
    pub fn select_rows(&self, keep: std::ops::Range<usize>) -> IMat {
        IMat {
            rows: keep.len(),
            cols: self.cols,
            data: self.data[keep].to_vec(),
        }
    }

    /// The submatrix of the given columns.
    pub fn select_cols(&self, keep: std::ops::Range<usize>) -> IMat {
        IMat {
            rows: self.rows,
            cols: keep.len(),
            data: self.data.iter().map(|r| r[keep.clone()].to_vec()).collect(),
        }
    }
}

/// Smith normal form U A V = D with the column transform and its
/// inverse retained (the row transform is not needed here).
#[derive(Clone, Debug)]
pub struct Snf {
    /// Diagonal entries, nonnegative, each dividing the next.
    pub diag: Vec<Int>,
    pub rank: usize,
    pub v: IMat,
    pub v_inv: IMat,
}

pub fn snf(a: &IMat) -> Snf {
    let mut a = a.clone();
    let (m, n) = (a.rows, a.cols);
    let mut v = IMat::identity(n);
    let mut v_inv = IMat::identity(n);

    let swap_cols = |a: &mut IMat, v: &mut IMat, vi: &mut IMat, i: usize, j: usize| {
        for r in 0..a.rows {
            a.data[r].swap(i, j);
        }
        for r in 0..v.rows {
            v.data[r].swap(i, j);
        }
        vi.data.swap(i, j);
    };
    // col_i -= q * col_j, with the inverse op mirrored on v_inv rows.
    let add_col = |a: &mut IMat, v: &mut IMat, vi: &mut IMat, i: usize, j: usize, q: &Int| {
        for r in 0..a.rows {
            let t = q * &a.data[r][j];
            a.data[r][i] -= t;
        }
        for r in 0..v.rows {
            let t = q * &v.data[r][j];
            v.data[r][i] -= t;
        }
        let row: Vec<Int> = vi.data[i].iter().map(|e| q * e).collect();
        for (e, t) in vi.data[j].iter_mut().zip(row) {
            *e += t;
        }
    };

    let mut t = 0;
    while t < m.min(n) {
        // Find a pivot of minimal absolute value.
        let mut pivot: Option<(usize, usize)> = None;
        for r in t..m {
            for c in t..n {
                if !a.data[r][c].is_zero()
                    && pivot
                        .map(|(pr, pc)| a.data[r][c].abs() < a.data[pr][pc].abs())
                        .unwrap_or(true)
                {
                    pivot = Some((r, c));
                }
            }
        }
        let Some((pr, pc)) = pivot else { break };
        a.data.swap(t, pr);
        if pc != t {
            swap_cols(&mut a, &mut v, &mut v_inv, t, pc);
        }

        // Clear row and column t.
        let mut dirty = false;
        for r in (t + 1)..m {
            if !a.data[r][t].is_zero() {
                let q = &a.data[r][t] / &a.data[t][t];
                if !q.is_zero() {
                    let row: Vec<Int> = a.data[t].iter().map(|e| &q * e).collect();
                    for (e, s) in a.data[r].iter_mut().zip(row) {
                        *e -= s;
                    }
                }
                if !a.data[r][t].is_zero() {
                    dirty = true;
                }
            }
        }
        for c in (t + 1)..n {
            if !a.data[t][c].is_zero() {
                let q = &a.data[t][c] / &a.data[t][t];
                if !q.is_zero() {
                    add_col(&mut a, &mut v, &mut v_inv, c, t, &q);
                }
                if !a.data[t][c].is_zero() {
                    dirty = true;
                }
            }
        }
        if dirty {
            continue;
        }
        // Divisibility: the pivot must divide every remaining entry.
        let mut fix = None;
        'scan: for r in (t + 1)..m {
            for c in (t + 1)..n {
                if !(&a.data[r][c] % &a.data[t][t]).is_zero() {
                    fix = Some(r);
                    break 'scan;
                }
            }
        }
        if let Some(r) = fix {
            let row = a.data[r].clone();
            for (e, s) in a.data[t].iter_mut().zip(row) {
                *e += s;
            }
            continue;
        }
        if a.data[t][t].is_negative() {
            for c in 0..n {
                a.data[t][c] = -a.data[t][c].clone();
            }
        }
        t += 1;
    }
    let rank = t;
    let diag: Vec<Int> = (0..m.min(n)).map(|i| a.data[i][i].abs()).collect();
    Snf { diag, rank, v, v_inv }
}

// ---------------------------------------------------------------------------
// homology

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HomologyResult {
    /// Betti numbers per dimension.
    pub betti: Vec<usize>,
    /// Torsion invariant factors (> 1) per dimension.
    pub torsion: Vec<Vec<Int>>,
    /// Number of connected components (= Betti_0).
    pub components: usize,
}

impl HomologyResult {
    /// Euler characteristic from the Betti numbers.
    pub fn euler(&self) -> i64 {
        self.betti
            .iter()
            .enumerate()
            .map(|(d, &b)| if d % 2 == 0 { b as i64 } else { -(b as i64) })
            .sum()
    }

    /// Homology of a disjoint union of n contractible pieces.
    pub fn is_acyclic_with_components(&self, n: usize) -> bool {
        self.components == n
            && self.betti.iter().skip(1).all(|&b| b == 0)
            && self.torsion.iter().all(|t| t.is_empty())
            && self.betti.first().copied().unwrap_or(0) == n
    }

    pub fn reduced_trivial(&self) -> bool {
        self.is_acyclic_with_components(1)
    }
}

/// Per-degree homology presentation retaining the SNF bases, for
/// computing induced maps.
#[derive(Clone, Debug)]
pub struct DegreeBasis {
    /// SNF of the outgoing boundary; its kernel is spanned by the
    /// trailing columns of v.
    pub snf_out: Snf,
    /// The incoming boundary expressed in kernel coordinates.
    pub rel: IMat,
    pub kernel_rank: usize,
}

impl DegreeBasis {
    /// Invariant factors of the homology group: (free rank, torsion).
    pub fn invariants(&self) -> (usize, Vec<Int>) {
        let s = snf(&self.rel);
        let torsion: Vec<Int> =
            s.diag.iter().filter(|d| **d > Int::one()).cloned().collect();
        (self.kernel_rank - s.rank, torsion)
    }
}

pub fn homology_bases(cc: &ChainComplex) -> Vec<DegreeBasis> {
    let top = cc.dims.len();
    let mut out = Vec::new();
    for d in 0..top {
        let n = cc.dims[d];
        let s = snf(&cc.boundary[d]);
        let kernel_rank = n - s.rank;
        let b = if d + 1 < top {
            cc.boundary[d + 1].clone()
        } else {
            IMat::zero(n, 0)
        };
        let rel = s.v_inv.mul(&b).select_rows(s.rank..n);
        out.push(DegreeBasis { snf_out: s, rel, kernel_rank });
    }
    out
}

pub fn homology_of_chain(cc: &ChainComplex) -> HomologyResult {
    let bases = homology_bases(cc);
    let mut betti = Vec::new();
    let mut torsion = Vec::new();
    for b in &bases {
        let (free, tors) = b.invariants();
        betti.push(free);
        torsion.push(tors);
    }
    while betti.len() > 1
        && betti.last() == Some(&0)
        && torsion.last().is_some_and(|t| t.is_empty())
    {
        betti.pop();
        torsion.pop();
    }
    let components = betti.first().copied().unwrap_or(0);
    HomologyResult { betti, torsion, components }
}

/// Integral homology of a delta complex.
pub fn homology(x: &DeltaComplex) -> HomologyResult {
    if x.dim().is_none() {
        return HomologyResult { betti: vec![], torsion: vec![], components: 0 };
    }
    homology_of_chain(&chain_complex(x))
}

// ---------------------------------------------------------------------------
// inclusions and induced maps

/// Per-dimension simplex injection of a subcomplex into a complex.
#[derive(Clone, Debug)]
pub struct Inclusion {
    pub map: Vec<Vec<usize>>,
}

/// Locates `sub` inside `sup` by matching simplex labels, checking
/// face compatibility.
pub fn find_subcomplex(sub: &DeltaComplex, sup: &DeltaComplex) -> Result<Inclusion, ComplexError> {
    let mut map = Vec::new();
    for (d, level) in sub.simplices.iter().enumerate() {
        let mut level_map = Vec::new();
        for (s, simplex) in level.iter().enumerate() {
            let t = sup.find(d, &simplex.label).ok_or_else(|| {
                ComplexError::NotSubcomplex(format!(
                    "{d}-simplex {:?} not present", simplex.label
                ))
            })?;
            if d > 0 {
                let prev: &Vec<usize> = &map[d - 1];
                let expect: Vec<usize> =
                    simplex.faces.iter().map(|&f| prev[f]).collect();
                if sup.simplices[d][t].faces != expect {
                    return Err(ComplexError::NotSubcomplex(format!(
                        "faces of {d}-simplex {s} disagree"
                    )));
                }
            }
            level_map.push(t);
        }
        map.push(level_map);
    }
    Ok(Inclusion { map })
}

/// Verdict for one homology degree of an induced map.
#[derive(Clone, Debug)]
pub struct DegreeVerdict {
    pub degree: usize,
    /// The induced map on kernel coordinates.
    pub matrix: IMat,
    pub source: (usize, Vec<Int>),
    pub target: (usize, Vec<Int>),
    pub iso: bool,
    /// Invariant factors of the cokernel of the induced map.
    pub cokernel: Vec<Int>,
}

#[derive(Clone, Debug)]
pub struct InducedMap {
    pub degrees: Vec<DegreeVerdict>,
}

impl InducedMap {
    pub fn all_iso(&self) -> bool {
        self.degrees.iter().all(|d| d.iso)
    }
}

/// Pushes the chain-level inclusion through the SNF bases of both
/// complexes, and decides per degree whether the induced map on
/// integral homology is an isomorphism.
pub fn induced_homology_map(
    sub: &DeltaComplex,
    sup: &DeltaComplex,
    incl: &Inclusion,
) -> InducedMap {
    let ca = chain_complex(sub);
    let cb = chain_complex(sup);
    let ba = homology_bases(&ca);
    let bb = homology_bases(&cb);
    let top = ba.len().max(bb.len());
    let mut degrees = Vec::new();
    for d in 0..top {
        let (src_free, src_tors, f_tilde, rel_b, tgt_free, tgt_tors, kb) = if d < ba.len()
            && d < bb.len()
        {
            let a = &ba[d];
            let b = &bb[d];
            // Chain inclusion matrix in degree d.
            let mut f = IMat::zero(cb.dims[d], ca.dims[d]);
            for (s, &t) in incl.map[d].iter().enumerate() {
                f.data[t][s] = Int::one();
            }
            // Kernel basis of the source.
            let ka = a.snf_out.v.select_cols(a.snf_out.rank..ca.dims[d]);
            let f_tilde = b
                .snf_out
                .v_inv
                .mul(&f.mul(&ka))
                .select_rows(b.snf_out.rank..cb.dims[d]);
            let (sf, st) = a.invariants();
            let (tf, tt) = b.invariants();
            (sf, st, f_tilde, b.rel.clone(), tf, tt, b.kernel_rank)
        } else if d < bb.len() {
            let b = &bb[d];
            let (tf, tt) = b.invariants();
            (0, vec![], IMat::zero(b.kernel_rank, 0), b.rel.clone(), tf, tt, b.kernel_rank)
        } else {
            let a = &ba[d];
            let (sf, st) = a.invariants();
            (sf, st, IMat::zero(0, a.kernel_rank), IMat::zero(0, 0), 0, vec![], 0)
        };
        // Surjectivity: the columns of the induced map together with
        // the target relations must generate the target kernel
        // lattice.  A surjection between groups with equal invariants
        // is an isomorphism.
        let combined = f_tilde.hcat(&rel_b);
        let s = snf(&combined);
        let cokernel: Vec<Int> = s
            .diag
            .iter()
            .take(kb)
            .filter(|e| **e > Int::one())
            .cloned()
            .collect();
        let surjective = s.rank == kb && cokernel.is_empty();
        let iso = surjective && src_free == tgt_free && src_tors == tgt_tors;
        degrees.push(DegreeVerdict {
            degree: d,
            matrix: f_tilde,
            source: (src_free, src_tors),
            target: (tgt_free, tgt_tors),
            iso,
            cokernel,
        });
    }
    // Trailing degrees where both sides vanish are isomorphic by
    // convention; trim them.
    while degrees
        .last()
        .map(|v| {
            v.source == (0, vec![]) && v.target == (0, vec![]) && degrees.len() > 1
        })
        .unwrap_or(false)
    {
        degrees.pop();
    }
    InducedMap { degrees }
}

// ---------------------------------------------------------------------------
// nerves and categories of elements

/// The nerve: simplices are strictly ascending chains of non-identity
/// arrows whose objects jointly avoid every forbidden pair.
pub fn nerve(c: &RelCategory) -> DeltaComplex {
    let n = c.len();
    let mut x = DeltaComplex::default();
    let mut ids: Vec<BTreeMap<Vec<usize>, usize>> = Vec::new();
    // Enumerate chains by DFS in index order; objects may repeat in
    // neither leq direction, so chains are finite.
    let mut chains: Vec<Vec<Vec<usize>>> = vec![Vec::new()];
    for start in 0..n {
        chains[0].push(vec![start]);
    }
    let mut d = 0;
    while !chains[d].is_empty() {
        let mut next = Vec::new();
        for chain in &chains[d] {
            let last = *chain.last().unwrap();
            for t in 0..n {
                if t == last || !c.has_arrow(last, t) {
                    continue;
                }
                if chain.iter().any(|&p| {
                    c.forbidden.contains(&(p, t)) || c.forbidden.contains(&(t, p))
                }) {
                    continue;
                }
                let mut longer = chain.clone();
                longer.push(t);
                next.push(longer);
            }
        }
        chains.push(next);
        d += 1;
    }
    chains.pop();
    for (d, level) in chains.iter().enumerate() {
        let mut level_ids = BTreeMap::new();
        for chain in level {
            let label = chain
                .iter()
                .map(|&i| c.objects[i].clone())
                .collect::<Vec<_>>()
                .join(" < ");
            let faces = if d == 0 {
                Vec::new()
            } else {
                (0..=d)
                    .map(|i| {
                        let mut sub = chain.clone();
                        sub.remove(i);
                        ids[d - 1][&sub]
                    })
                    .collect()
            };
            let id = x.push(d, faces, label);
            level_ids.insert(chain.clone(), id);
        }
        ids.push(level_ids);
    }
    x.validate().expect("nerve is well formed");
    x
}

/// The category of elements of a set-valued diagram: objects are
/// pairs (object, element), arrows follow the diagram maps, and
/// forbidden pairs are inherited objectwise.
pub fn category_of_elements(base: &RelCategory, d: &SetDiagram) -> RelCategory {
    assert_eq!(base.objects, d.base.objects, "diagram must live over the base");
    let mut objects = Vec::new();
    let mut of: Vec<(usize, usize)> = Vec::new();
    for (i, vals) in d.values.iter().enumerate() {
        for (a, id) in vals.iter().enumerate() {
            objects.push(format!("{}|{}", base.objects[i], id));
            of.push((i, a));
        }
    }
    let n = objects.len();
    let mut leq = vec![vec![false; n]; n];
    let mut forbidden = std::collections::BTreeSet::new();
    for (p, row) in leq.iter_mut().enumerate() {
        row[p] = true;
        let (i, a) = of[p];
        for (q, cell) in row.iter_mut().enumerate() {
            if p == q {
                continue;
            }
            let (j, b) = of[q];
            if i == j {
                continue;
            }
            if base.has_arrow(i, j) {
                if d.arrow(i, j)[a] == b {
                    *cell = true;
                }
            } else if base.leq[i][j] && base.forbidden.contains(&(i, j)) {
                *cell = true;
                forbidden.insert((p, q));
            }
        }
    }
    RelCategory { objects, leq, forbidden }
}

// ---------------------------------------------------------------------------
// order polytopes

/// One maximal simplex of the canonical triangulation, recorded by its
/// linear extension and its rational vertex coordinates.
#[derive(Clone, Debug)]
pub struct OrderSimplex {
    pub extension: Vec<usize>,
    /// d+1 vertices, each a 0/1 vector indexed like the poset.
    pub vertices: Vec<Vec<Rat>>,
}

#[derive(Clone, Debug)]
pub struct OrderPolytope {
    pub simplices: Vec<OrderSimplex>,
    pub volume: Rat,
}

/// The canonical triangulation of the order polytope
/// {t : x <= y implies t_x <= t_y}: one d-simplex per linear
/// extension, with 0/1 threshold vertices; total volume e(P)/d!.
pub fn order_polytope_simplices(p: &Poset) -> OrderPolytope {
    let d = p.len();
    let mut simplices = Vec::new();
    for ext in p.linear_extensions() {
        // Vertex j is the indicator of the top j elements of the
        // extension (an up-set), j = 0..=d.
        let mut vertices = Vec::new();
        for j in 0..=d {
            let mut v = vec![Rat::zero(); d];
            for &e in ext.iter().rev().take(j) {
                v[e] = Rat::one();
            }
            vertices.push(v);
        }
        simplices.push(OrderSimplex { extension: ext, vertices });
    }
    let fact: Int = (1..=d as i64).map(Int::from).product();
    let volume = Rat::new(Int::from(simplices.len()), fact);
    OrderPolytope { simplices, volume }
}

// ---------------------------------------------------------------------------
// piecewise-linear maps

/// An exact rational affine map x -> Ax + b.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AffineMap {
    pub matrix: Vec<Vec<Rat>>,
    pub offset: Vec<Rat>,
}

impl AffineMap {
    pub fn apply(&self, x: &[Rat]) -> Vec<Rat> {
        self.matrix
            .iter()
            .zip(&self.offset)
            .map(|(row, b)| {
                row.iter().zip(x).map(|(a, t)| a * t).sum::<Rat>() + b
            })
            .collect()
    }
}

/// A piecewise-linear map: one affine piece per maximal simplex of a
/// rational simplicial decomposition of the domain.
#[derive(Clone, Debug)]
pub struct PLMap {
    pub pieces: Vec<PLPiece>,
}

#[derive(Clone, Debug)]
pub struct PLPiece {
    pub vertices: Vec<Vec<Rat>>,
    pub map: AffineMap,
}

impl PLMap {
    /// Adjacent pieces agree on shared faces iff they agree on shared
    /// vertices, the maps being affine.
    pub fn validate(&self) -> Result<(), ComplexError> {
        let mut seen: Vec<(&Vec<Rat>, Vec<Rat>)> = Vec::new();
        for piece in &self.pieces {
            for v in &piece.vertices {
                let image = piece.map.apply(v);
                if let Some((_, prev)) = seen.iter().find(|(w, _)| *w == v) {
                    if *prev != image {
                        return Err(ComplexError::Malformed(
                            "adjacent pieces disagree on a shared vertex".into(),
                        ));
                    }
                } else {
                    seen.push((v, image));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// cellular cosheaves

/// A cellular cosheaf of finite sets over a delta complex: a set per
/// simplex and a map to each facet's set, contravariantly functorial.
#[derive(Clone, Debug)]
pub struct CellularCosheaf {
    pub base: DeltaComplex,
    /// Value set per (dimension, simplex).
    pub values: Vec<Vec<Vec<String>>>,
    /// (dim, simplex, face index) -> value map F(s) -> F(d_i s).
    pub maps: BTreeMap<(usize, usize, usize), Vec<usize>>,
}

impl CellularCosheaf {
    /// A constant cosheaf with the given stalk.
    pub fn constant(base: &DeltaComplex, stalk: &[String]) -> Self {
        let values: Vec<Vec<Vec<String>>> = base
            .simplices
            .iter()
            .map(|l| l.iter().map(|_| stalk.to_vec()).collect())
            .collect();
        let mut maps = BTreeMap::new();
        for (d, level) in base.simplices.iter().enumerate() {
            for (s, simplex) in level.iter().enumerate() {
                for i in 0..simplex.faces.len() {
                    maps.insert((d, s, i), (0..stalk.len()).collect());
                }
            }
        }
        CellularCosheaf { base: base.clone(), values, maps }
    }

    pub fn value_map(&self, d: usize, s: usize, i: usize) -> &[usize] {
        &self.maps[&(d, s, i)]
    }

    /// Checks sizes and contravariant functoriality through the face
    /// identities.
    pub fn validate(&self) -> Result<(), ComplexError> {
        self.base.validate()?;
        for (d, level) in self.base.simplices.iter().enumerate() {
            for (s, simplex) in level.iter().enumerate() {
                for (i, &f) in simplex.faces.iter().enumerate() {
                    let m = self.maps.get(&(d, s, i)).ok_or_else(|| {
                        ComplexError::Cosheaf(format!("missing map ({d},{s},{i})"))
                    })?;
                    if m.len() != self.values[d][s].len() {
                        return Err(ComplexError::Cosheaf(format!(
                            "map ({d},{s},{i}) has wrong source size"
                        )));
                    }
                    let target = self.values[d - 1][f].len();
                    if m.iter().any(|&x| x >= target) {
                        return Err(ComplexError::Cosheaf(format!(
                            "map ({d},{s},{i}) exceeds target"
                        )));
                    }
                }
                if d >= 2 {
                    for i in 0..=d {
                        for j in (i + 1)..=d {
                            let via_j: Vec<usize> = self
                                .value_map(d, s, j)
                                .iter()
                                .map(|&x| self.value_map(d - 1, simplex.faces[j], i)[x])
                                .collect();
                            let via_i: Vec<usize> = self
                                .value_map(d, s, i)
                                .iter()
                                .map(|&x| {
                                    self.value_map(d - 1, simplex.faces[i], j - 1)[x]
                                })
                                .collect();
                            if via_i != via_j {
                                return Err(ComplexError::Cosheaf(format!(
                                    "functoriality fails at ({d},{s}) faces ({i},{j})"
                                )));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// The composed value map from a simplex to an iterated face,
    /// found by following facet maps; None if the target is not a
    /// face.
    pub fn map_to_face(
        &self,
        from: (usize, usize),
        to: (usize, usize),
    ) -> Option<Vec<usize>> {
        if from == to {
            return Some((0..self.values[from.0][from.1].len()).collect());
        }
        if to.0 >= from.0 {
            return None;
        }
        let (d, s) = from;
        for (i, &f) in self.base.simplices[d][s].faces.iter().enumerate() {
            if let Some(rest) = self.map_to_face((d - 1, f), to) {
                let first = self.value_map(d, s, i);
                return Some(first.iter().map(|&x| rest[x]).collect());
            }
        }
        None
    }
}

/// The realization: one cell per (simplex, value) pair, glued along
/// the cosheaf maps.
pub fn realize_cosheaf(f: &CellularCosheaf) -> Result<DeltaComplex, ComplexError> {
    f.validate()?;
    let mut x = DeltaComplex::default();
    // id of (d, s, v) in the output.
    let mut ids: Vec<Vec<Vec<usize>>> = Vec::new();
    for (d, level) in f.base.simplices.iter().enumerate() {
        let mut level_ids = Vec::new();
        for (s, simplex) in level.iter().enumerate() {
            let mut cell_ids = Vec::new();
            for (v, val) in f.values[d][s].iter().enumerate() {
                let faces = if d == 0 {
                    Vec::new()
                } else {
                    simplex
                        .faces
                        .iter()
                        .enumerate()
                        .map(|(i, &fc)| ids[d - 1][fc][f.value_map(d, s, i)[v]])
                        .collect()
                };
                let label = format!("{}|{}", simplex.label, val);
                cell_ids.push(x.push(d, faces, label));
            }
            level_ids.push(cell_ids);
        }
        ids.push(level_ids);
    }
    x.validate()?;
    Ok(x)
}

/// A refinement of the base of a cosheaf: a finer complex together
/// with, per simplex, the base simplex whose closed cell contains it.
#[derive(Clone, Debug)]
pub struct Refinement {
    pub fine: DeltaComplex,
    /// (dim, simplex) of the base per fine simplex, per dimension.
    pub carrier: Vec<Vec<(usize, usize)>>,
}

/// Pulls a cosheaf back along a refinement: values transport from the
/// carrier cells, maps compose through iterated faces.
pub fn pullback_cosheaf(
    f: &CellularCosheaf,
    r: &Refinement,
) -> Result<CellularCosheaf, ComplexError> {
    r.fine.validate()?;
    let mut values = Vec::new();
    let mut maps = BTreeMap::new();
    for (d, level) in r.fine.simplices.iter().enumerate() {
        let mut level_values = Vec::new();
        for (s, simplex) in level.iter().enumerate() {
            let (cd, cs) = r.carrier[d][s];
            if cd < d {
                return Err(ComplexError::NotRefinement(format!(
                    "fine {d}-simplex {s} carried by a {cd}-cell"
                )));
            }
            level_values.push(f.values[cd][cs].clone());
            for (i, &fc) in simplex.faces.iter().enumerate() {
                let tgt = r.carrier[d - 1][fc];
                let m = f.map_to_face((cd, cs), tgt).ok_or_else(|| {
                    ComplexError::NotRefinement(format!(
                        "carrier of the face {i} of fine {d}-simplex {s} is not a face of its carrier"
                    ))
                })?;
                maps.insert((d, s, i), m);
            }
        }
        values.push(level_values);
    }
    let out = CellularCosheaf { base: r.fine.clone(), values, maps };
    out.validate()?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// small builders used by tests and the verifier

/// The complex with a single point.
pub fn point() -> DeltaComplex {
    let mut x = DeltaComplex::default();
    x.push(0, vec![], "pt".into());
    x
}

/// An interval subdivided into n edges.
pub fn interval(n: usize) -> DeltaComplex {
    let mut x = DeltaComplex::default();
    for v in 0..=n {
        x.push(0, vec![], format!("v{v}"));
    }
    for e in 0..n {
        x.push(1, vec![e + 1, e], format!("e{e}"));
    }
    x
}

/// The hollow triangle: three vertices, three edges.
pub fn hollow_triangle() -> DeltaComplex {
    let mut x = DeltaComplex::default();
    for v in 0..3 {
        x.push(0, vec![], format!("v{v}"));
    }
    x.push(1, vec![1, 0], "e01".into());
    x.push(1, vec![2, 1], "e12".into());
    x.push(1, vec![2, 0], "e02".into());
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{builtin, operad_as_ibimodule, rho_diagram, Builtin};
    use crate::psi::{build_psi, Selector};
    use crate::trees::Poset;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    #[test]
    fn snf_reads_off_invariants() {
        let m = IMat::from_rows(vec![
            vec![Int::from(2), Int::from(4), Int::from(4)],
            vec![Int::from(-6), Int::from(6), Int::from(12)],
            vec![Int::from(10), Int::from(4), Int::from(16)],
        ]);
        let s = snf(&m);
        assert_eq!(s.diag, vec![Int::from(2), Int::from(2), Int::from(156)]);
        assert_eq!(s.rank, 3);
    }

    #[test]
    fn snf_transforms_track_kernel() {
        let m = IMat::from_rows(vec![vec![Int::from(1), Int::from(2), Int::from(3)]]);
        let s = snf(&m);
        assert_eq!(s.rank, 1);
        // v_inv * v = identity.
        assert_eq!(s.v_inv.mul(&s.v), IMat::identity(3));
        // Trailing columns of v span the kernel.
        for c in s.rank..3 {
            let col = s.v.select_cols(c..c + 1);
            assert!(m.mul(&col).is_zero());
        }
    }

    #[test]
    fn homology_of_standard_complexes() {
        assert_eq!(homology(&point()).betti, vec![1]);
        let h = homology(&hollow_triangle());
        assert_eq!(h.betti, vec![1, 1]);
        assert_eq!(h.components, 1);
        let h = homology(&interval(3));
        assert_eq!(h.betti, vec![1]);
    }

    #[test]
    fn torsion_from_snf_reading() {
        // Cellular model with boundary 2 in degree 1 (as in a
        // projective plane's top degrees).
        let cc = ChainComplex {
            dims: vec![1, 1, 1],
            boundary: vec![
                IMat::zero(0, 1),
                IMat::zero(1, 1),
                IMat::from_rows(vec![vec![Int::from(2)]]),
            ],
        };
        cc.validate().unwrap();
        let h = homology_of_chain(&cc);
        assert_eq!(h.betti, vec![1, 0]);
        assert_eq!(h.torsion[1], vec![Int::from(2)]);
    }

    #[test]
    fn boundary_squares_to_zero() {
        let psi = build_psi(3);
        let n = nerve(&psi.cat);
        chain_complex(&n).validate().unwrap();
    }

    #[test]
    fn homology_is_order_invariant() {
        let psi = build_psi(2);
        let n = nerve(&psi.cat);
        let h = homology(&n);
        // Shuffle each dimension and remap face ids.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut shuffled = DeltaComplex::default();
        let mut perms: Vec<Vec<usize>> = Vec::new();
        for (d, level) in n.simplices.iter().enumerate() {
            let mut order: Vec<usize> = (0..level.len()).collect();
            order.shuffle(&mut rng);
            let mut inv = vec![0; level.len()];
            for (new, &old) in order.iter().enumerate() {
                inv[old] = new;
            }
            for &old in &order {
                let s = &level[old];
                let faces = s.faces.iter().map(|&f| perms[d - 1][f]).collect();
                shuffled.push(d, faces, s.label.clone());
            }
            let _ = &inv;
            perms.push(inv);
        }
        shuffled.validate().unwrap();
        assert_eq!(homology(&shuffled), h);
    }

    #[test]
    fn nerve_examples() {
        let psi1 = build_psi(1);
        assert_eq!(nerve(&psi1.cat).f_vector(), vec![2, 1]);
        let one = RelCategory::discrete(vec!["x".into()]);
        assert_eq!(nerve(&one).f_vector(), vec![1]);
        let psi2 = build_psi(2);
        let full = nerve(&psi2.cat);
        assert_eq!(full.f_vector()[0], 8);
        // Nerve of the almost-cubical variant drops exactly the chains
        // through both corollas.
        let prime = psi2.restrict(Selector::Prime).unwrap();
        let np = nerve(&prime);
        let c = psi2.c_k;
        let cp = psi2.c_prime_k.unwrap();
        let both = |x: &DeltaComplex| -> usize {
            x.simplices
                .iter()
                .flatten()
                .filter(|s| {
                    s.label.contains(&psi2.cat.objects[c])
                        && s.label.contains(&psi2.cat.objects[cp])
                })
                .count()
        };
        assert!(both(&full) > 0);
        assert_eq!(both(&np), 0);
        let total_full: usize = full.f_vector().iter().sum();
        let total_prime: usize = np.f_vector().iter().sum();
        assert_eq!(total_full - both(&full), total_prime);
    }

    #[test]
    fn elements_over_boundary_u() {
        let o = builtin(Builtin::Assoc, 4);
        let nb = operad_as_ibimodule(&o);
        let psi = build_psi(2);
        let rho = rho_diagram(&nb, &psi);
        let bu = psi.restrict(Selector::BoundaryU).unwrap();
        let sub = rho.restrict_to(&bu);
        let el = category_of_elements(&bu, &sub);
        assert_eq!(el.len(), 18);
        // One arrow upstairs per (base arrow, source element).
        let expected: usize = (0..bu.len())
            .map(|i| {
                (0..bu.len())
                    .filter(|&j| i != j && bu.has_arrow(i, j))
                    .map(|_| sub.values[i].len())
                    .sum::<usize>()
            })
            .sum();
        assert_eq!(el.arrow_count(), expected);
        assert_eq!(expected, 16);
        // Strong coherence at k = 2: two acyclic components.
        let h = homology(&nerve(&el));
        assert!(h.is_acyclic_with_components(2), "{h:?}");
    }

    #[test]
    fn elements_over_terminal_category() {
        // Over a category with a terminal object, the homotopy colimit
        // is the terminal fiber.
        let o = builtin(Builtin::Assoc, 4);
        let nb = operad_as_ibimodule(&o);
        for k in [1usize, 2] {
            let psi = build_psi(k);
            let rho = rho_diagram(&nb, &psi);
            let el = category_of_elements(&psi.cat, &rho);
            let h = homology(&nerve(&el));
            let terminal_size = rho.values[psi.c_k].len();
            assert!(h.is_acyclic_with_components(terminal_size), "k={k}: {h:?}");
        }
    }

    #[test]
    fn induced_map_examples() {
        let tri = hollow_triangle();
        let id = find_subcomplex(&tri, &tri).unwrap();
        assert!(induced_homology_map(&tri, &tri, &id).all_iso());

        let mut pt = DeltaComplex::default();
        pt.push(0, vec![], "v0".into());
        let incl = find_subcomplex(&pt, &tri).unwrap();
        let m = induced_homology_map(&pt, &tri, &incl);
        assert!(m.degrees[0].iso);
        assert!(!m.degrees[1].iso);
        assert!(!m.all_iso());
    }

    #[test]
    fn induced_map_boundary_into_prime() {
        let o = builtin(Builtin::Assoc, 4);
        let nb = operad_as_ibimodule(&o);
        let psi = build_psi(2);
        let rho = rho_diagram(&nb, &psi);
        let boundary = psi.restrict(Selector::Boundary).unwrap();
        let prime = psi.restrict(Selector::Prime).unwrap();
        let nb_sub = nerve(&category_of_elements(&boundary, &rho.restrict_to(&boundary)));
        let np = nerve(&category_of_elements(&prime, &rho.restrict_to(&prime)));
        let incl = find_subcomplex(&nb_sub, &np).unwrap();
        assert!(induced_homology_map(&nb_sub, &np, &incl).all_iso());
    }

    #[test]
    fn rejects_non_subcomplex() {
        let tri = hollow_triangle();
        let seg = interval(1);
        assert!(find_subcomplex(&seg, &tri).is_err());
    }

    #[test]
    fn order_polytopes() {
        // 2-chain.
        let chain = Poset {
            elements: vec![0, 1],
            leq: vec![vec![true, true], vec![false, true]],
        };
        let p = order_polytope_simplices(&chain);
        assert_eq!(p.simplices.len(), 1);
        assert_eq!(p.volume, crate::rat(1, 2));
        // 2-antichain.
        let anti = Poset::antichain(vec![0, 1]);
        let p = order_polytope_simplices(&anti);
        assert_eq!(p.simplices.len(), 2);
        assert_eq!(p.volume, crate::rat(1, 1));
        // 2-chain plus an isolated point.
        let mixed = Poset {
            elements: vec![0, 1, 2],
            leq: vec![
                vec![true, true, false],
                vec![false, true, false],
                vec![false, false, true],
            ],
        };
        let p = order_polytope_simplices(&mixed);
        assert_eq!(p.simplices.len(), 3);
        assert_eq!(p.volume, crate::rat(1, 2));
        // Vertices are monotone 0/1 vectors.
        for s in &p.simplices {
            for v in &s.vertices {
                assert!(v.iter().all(|t| t.is_zero() || t.is_one()));
                assert!(v[1].clone() >= v[0].clone());
            }
        }
    }

    #[test]
    fn cosheaf_realizations() {
        // Constant singleton cosheaf on an interval realizes to it.
        let seg = interval(2);
        let c = CellularCosheaf::constant(&seg, &["*".to_string()]);
        let r = realize_cosheaf(&c).unwrap();
        assert_eq!(r.f_vector(), seg.f_vector());
        assert_eq!(homology(&r).betti, vec![1]);
        // Two-point constant cosheaf on a point realizes to two points.
        let c = CellularCosheaf::constant(&point(), &["a".to_string(), "b".to_string()]);
        let r = realize_cosheaf(&c).unwrap();
        assert_eq!(r.f_vector(), vec![2]);
    }

    #[test]
    fn pullback_along_subdivision() {
        // Subdivide one edge into two; the constant cosheaf pulls back
        // with equal homology.
        let seg = interval(1);
        let c = CellularCosheaf::constant(&seg, &["a".to_string(), "b".to_string()]);
        let fine = interval(2);
        let r = Refinement {
            fine: fine.clone(),
            carrier: vec![
                vec![(0, 0), (1, 0), (0, 1)],
                vec![(1, 0), (1, 0)],
            ],
        };
        let pulled = pullback_cosheaf(&c, &r).unwrap();
        let before = homology(&realize_cosheaf(&c).unwrap());
        let after = homology(&realize_cosheaf(&pulled).unwrap());
        assert_eq!(before, after);
        // Identity refinement returns the cosheaf unchanged.
        let idr = Refinement {
            fine: seg.clone(),
            carrier: vec![vec![(0, 0), (0, 1)], vec![(1, 0)]],
        };
        let same = pullback_cosheaf(&c, &idr).unwrap();
        assert_eq!(same.values, c.values);
        assert_eq!(same.maps, c.maps);
    }

    #[test]
    fn pullback_rejects_non_refinement() {
        let seg = interval(1);
        let c = CellularCosheaf::constant(&seg, &["*".to_string()]);
        // Carrier of an edge claimed to be a vertex.
        let bad = Refinement {
            fine: seg.clone(),
            carrier: vec![vec![(0, 0), (0, 1)], vec![(0, 0)]],
        };
        assert!(pullback_cosheaf(&c, &bad).is_err());
    }

    #[test]
    fn pl_map_facet_agreement() {
        let piece = |a: i64, b: i64| PLPiece {
            vertices: vec![vec![crate::rat(a, 1)], vec![crate::rat(b, 1)]],
            map: AffineMap {
                matrix: vec![vec![crate::rat(2, 1)]],
                offset: vec![crate::rat(0, 1)],
            },
        };
        let good = PLMap { pieces: vec![piece(0, 1), piece(1, 2)] };
        good.validate().unwrap();
        let mut bad = PLMap { pieces: vec![piece(0, 1), piece(1, 2)] };
        bad.pieces[1].map.offset[0] = crate::rat(1, 1);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn euler_characteristic_consistency() {
        let psi = build_psi(2);
        let n = nerve(&psi.cat);
        let h = homology(&n);
        let f = n.f_vector();
        let euler_f: i64 = f
            .iter()
            .enumerate()
            .map(|(d, &c)| if d % 2 == 0 { c as i64 } else { -(c as i64) })
            .sum();
        assert_eq!(h.euler(), euler_f);
    }
}
