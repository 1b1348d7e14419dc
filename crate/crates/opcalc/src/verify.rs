//! Cross-checks between the combinatorial layers: the affine vertex
//! embedding of pearled-tree cells, roundtrips of the two-cut
//! decomposition, the signed bar pairing, the two deformation
//! retractions, homological (strong) coherence of diagram inclusions,
//! mapping cones of the infinitesimal left action, and stratum
//! bookkeeping for the compactified configuration families.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::algebra::{
    operad_as_bimodule, permutations, rho_diagram, AlgebraError, FinBimodule, FinIbimodule,
    FinOperad,
};
use crate::bv::{
    act, d1_branch, fil_ibar, fil_pearl, gamma, gamma_inverse, in_boundary_n1, in_d1, normalize,
    point_key, project_mu, tau, validate_element, Action, BVContext, BVElement, BVError, Family,
    IbSampler,
};
use crate::complex::{
    category_of_elements, find_subcomplex, homology, induced_homology_map, nerve, ComplexError,
    DeltaComplex, HomologyResult, InducedMap,
};
use crate::psi::{build_psi, PsiError, Selector};
use crate::trees::{
    canonicalize, contract_edge_raw, enumerate_tree_classes, ArityConstraints, Child, MarkedTree,
    PearledTree, PlanarTree, TreeClass, TreeError, TreeKind,
};
use crate::Rat;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Psi(#[from] PsiError),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error(transparent)]
    Bv(#[from] BVError),
    #[error("{0}")]
    Check(String),
}

fn is_one(p: &Option<Rat>) -> bool {
    p.as_ref().is_some_and(|t| t.is_one())
}

fn urat(n: usize) -> Rat {
    crate::rat(n as i64, 1)
}

// ---------------------------------------------------------------------------
// the vertex embedding of contraction cells

/// Per-tree record: the vertex images of every edge-subset contraction,
/// the determinant of every maximal chain of subsets, and the verdicts.
#[derive(Clone, Debug)]
pub struct DeltaTree {
    pub code: String,
    /// Sorted inner-edge subset -> image coordinates, one per non-pearl
    /// vertex of the representative, in vertex order.
    pub images: BTreeMap<Vec<usize>, Vec<Rat>>,
    /// One determinant per maximal chain of subsets.
    pub dets: Vec<Rat>,
    /// Linear extensions of the toward-pearl poset.
    pub extensions: usize,
    pub dets_nonzero: bool,
    pub volume_ok: bool,
    pub squares_ok: bool,
    pub boundary_ok: bool,
}

impl DeltaTree {
    pub fn ok(&self) -> bool {
        self.dets_nonzero && self.volume_ok && self.squares_ok && self.boundary_ok
    }
}

#[derive(Clone, Debug)]
pub struct DeltaReport {
    pub k: usize,
    pub trees: Vec<DeltaTree>,
}

impl DeltaReport {
    pub fn ok(&self) -> bool {
        self.trees.iter().all(DeltaTree::ok)
    }

    pub fn first_failure(&self) -> Option<&DeltaTree> {
        self.trees.iter().find(|t| !t.ok())
    }
}

/// Height of each vertex: zero on the pearl, one on the maximal
/// vertices of the toward-pearl order, 1 - 2^{-d} at pearl distance d
/// otherwise.
fn height_values(pt: &PearledTree) -> Vec<Rat> {
    let dist = pt.dist();
    let mx = pt.max_set();
    (0..pt.base.n_vertices())
        .map(|v| {
            if v == pt.pearl {
                Rat::zero()
            } else if mx.contains(&v) {
                Rat::one()
            } else {
                Rat::one() - crate::rat(1, 1i64 << dist[v].min(62))
            }
        })
        .collect()
}

/// Contracts the selected inner edges one after the other, tracking the
/// composed vertex map from the original tree.
fn contract_subset(
    rep: &PearledTree,
    edges: &[(usize, usize)],
    subset: &[usize],
) -> Result<(PearledTree, Vec<usize>), VerifyError> {
    let mut base = rep.base.clone();
    let mut map: Vec<usize> = (0..base.n_vertices()).collect();
    let mut pearl = rep.pearl;
    for &e in subset {
        let (p, c) = edges[e];
        let (next, vm) = contract_edge_raw(&base, map[p], map[c])?;
        base = next;
        for x in map.iter_mut() {
            *x = vm[*x];
        }
        pearl = vm[pearl];
    }
    Ok((PearledTree::new(base, pearl)?, map))
}

#[allow(clippy::needless_range_loop)]
fn determinant(mut m: Vec<Vec<Rat>>) -> Rat {
    let n = m.len();
    let mut d = Rat::one();
    for c in 0..n {
        let Some(p) = (c..n).find(|&r| !m[r][c].is_zero()) else {
            return Rat::zero();
        };
        if p != c {
            m.swap(p, c);
            d = -d;
        }
        let pivot = m[c][c].clone();
        d *= pivot.clone();
        let pivot_row = m[c].clone();
        for r in c + 1..n {
            let f = m[r][c].clone() / pivot.clone();
            if f.is_zero() {
                continue;
            }
            for (cc, pc) in pivot_row.iter().enumerate().skip(c) {
                let t = pc.clone() * f.clone();
                m[r][cc] -= t;
            }
        }
    }
    d
}

/// For every pearled tree with `k` leaves: computes the image of every
/// edge contraction under the height embedding, and checks that
/// (a) every maximal chain spans a nondegenerate simplex,
/// (b) the total volume is the number of linear extensions,
/// (c) the heights are invariant under canonical relabelling, and
/// (d) an image touches height one exactly away from the corolla,
/// in three equivalent readings.
pub fn verify_delta(k: usize) -> Result<DeltaReport, VerifyError> {
    let psi = build_psi(k);
    let corolla_code = psi.classes[psi.c_k].code.clone();
    let mut trees = Vec::new();
    for class in &psi.classes {
        let MarkedTree::Pearled(rep) = &class.representative else {
            return Err(VerifyError::Check("expected pearled classes".into()));
        };
        let edges = rep.base.inner_edges();
        let d = edges.len();
        let verts: Vec<usize> =
            (0..rep.base.n_vertices()).filter(|&v| v != rep.pearl).collect();
        let mut images = BTreeMap::new();
        let mut squares_ok = true;
        let mut boundary_ok = true;
        for mask in 0u32..(1 << d) {
            let subset: Vec<usize> = (0..d).filter(|e| mask >> e & 1 == 1).collect();
            let (cur, map) = contract_subset(rep, &edges, &subset)?;
            let z = height_values(&cur);
            let coords: Vec<Rat> = verts.iter().map(|&v| z[map[v]].clone()).collect();
            // (c) the heights only depend on the contraction class.
            let can = canonicalize(&MarkedTree::Pearled(cur.clone()));
            let MarkedTree::Pearled(crep) = &can.class.representative else {
                unreachable!()
            };
            let zc = height_values(crep);
            for (v, h) in z.iter().enumerate() {
                if *h != zc[can.vertex_map[v]] {
                    squares_ok = false;
                }
            }
            // (d) three readings of the boundary condition must agree.
            let has_one = coords.iter().any(|c| c.is_one());
            let max_nonempty = !cur.max_set().is_empty();
            let proper = can.class.code != corolla_code;
            if has_one != max_nonempty || has_one != proper {
                boundary_ok = false;
            }
            images.insert(subset, coords);
        }
        // (a) and (b): chain simplices and the volume identity.
        let mut dets = Vec::new();
        for perm in permutations(d) {
            let mut pts = Vec::new();
            for j in 0..=d {
                let mut s: Vec<usize> = perm[..j].to_vec();
                s.sort_unstable();
                pts.push(images[&s].clone());
            }
            let rows: Vec<Vec<Rat>> = (1..=d)
                .map(|j| {
                    (0..verts.len())
                        .map(|c| pts[j][c].clone() - pts[0][c].clone())
                        .collect()
                })
                .collect();
            dets.push(determinant(rows));
        }
        let extensions = rep.toward_pearl_poset().linear_extensions().len();
        let sum: Rat = dets.iter().map(|x| x.abs()).sum();
        let dets_nonzero = dets.iter().all(|x| !x.is_zero());
        let volume_ok = sum == urat(extensions);
        trees.push(DeltaTree {
            code: class.code.clone(),
            images,
            dets,
            extensions,
            dets_nonzero,
            volume_ok,
            squares_ok,
            boundary_ok,
        });
    }
    Ok(DeltaReport { k, trees })
}

// ---------------------------------------------------------------------------
// roundtrips of the two-cut decomposition

#[derive(Clone, Debug)]
pub struct GammaReport {
    pub arity: usize,
    pub samples: usize,
    pub failures: Vec<String>,
}

impl GammaReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Seeded random elements through the decomposition and back; every
/// roundtrip must be the exact identity and preserve the filtration.
pub fn verify_gamma(
    o: &FinOperad,
    k: usize,
    samples: usize,
    seed: u64,
) -> Result<GammaReport, VerifyError> {
    let ctx = BVContext::over_self(o);
    let sampler = IbSampler::new(k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for s in 0..samples {
        let x = sampler.sample(&ctx, &mut rng, true)?;
        let e = gamma(&ctx, &x)?;
        let back = gamma_inverse(&ctx, &e)?;
        if back != x {
            failures.push(format!("roundtrip {s}: {}", point_key(&x)));
        } else if fil_ibar(&e) != fil_pearl(&x) {
            failures.push(format!("filtration {s}: {}", point_key(&x)));
        }
    }
    Ok(GammaReport { arity: k, samples, failures })
}

// ---------------------------------------------------------------------------
// the signed bar pairing

/// The sign-extended bimodule over `o`: two copies of every element of
/// the operad seen as a bimodule over itself.  The left action adds the
/// input signs, the right and symmetric actions preserve them.
pub fn signed_bimodule(o: &FinOperad) -> FinBimodule {
    let b = operad_as_bimodule(o);
    let spaces: Vec<Vec<String>> = b
        .spaces
        .iter()
        .map(|names| {
            names.iter().flat_map(|s| [format!("{s}+"), format!("{s}-")]).collect()
        })
        .collect();
    let mut left = BTreeMap::new();
    for (key, &r) in &b.left {
        let (n, x, ys) = key;
        for mask in 0u32..(1 << ys.len()) {
            let signed: Vec<(usize, usize)> = ys
                .iter()
                .enumerate()
                .map(|(j, &(m, y))| (m, 2 * y + (mask >> j & 1) as usize))
                .collect();
            let sign = (mask.count_ones() % 2) as usize;
            left.insert((*n, *x, signed), 2 * r + sign);
        }
    }
    let mut right = BTreeMap::new();
    for (&(n, i, x, m, y), &r) in &b.right {
        for s in 0..2 {
            right.insert((n, i, 2 * x + s, m, y), 2 * r + s);
        }
    }
    let mut sigma = BTreeMap::new();
    for ((n, x, p), &r) in &b.sigma {
        for s in 0..2 {
            sigma.insert((*n, 2 * x + s, p.clone()), 2 * r + s);
        }
    }
    FinBimodule {
        name: format!("{}_signed", o.name),
        max_arity: b.max_arity,
        spaces,
        operad: o.clone(),
        left,
        right,
        sigma,
    }
}

/// An entry of the evaluation table: the basepoint map forgets the
/// sign, the identity keeps it.  Both commute with all three actions
/// of the signed bimodule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GMap {
    Point,
    Id,
}

impl GMap {
    pub fn apply(self, y: usize) -> usize {
        match self {
            GMap::Point => y & !1,
            GMap::Id => y,
        }
    }
}

/// Finite evaluation table over canonical arity-one point keys, filled
/// deterministically on first use.  Keys recognized as boundary points
/// are pinned to the basepoint; a caller entry contradicting that rule
/// is rejected.
#[derive(Clone, Debug, Default)]
pub struct XiTable {
    pub entries: BTreeMap<String, GMap>,
    pub forced: Option<GMap>,
}

impl XiTable {
    pub fn constant(g: GMap) -> Self {
        XiTable { entries: BTreeMap::new(), forced: Some(g) }
    }

    fn lookup(&mut self, key: String, boundary: bool) -> Result<GMap, VerifyError> {
        if boundary {
            if self.entries.get(&key) == Some(&GMap::Id) {
                return Err(VerifyError::Check(format!(
                    "table sends the boundary point {key} away from the basepoint"
                )));
            }
            return Ok(GMap::Point);
        }
        if let Some(g) = self.forced {
            return Ok(g);
        }
        let fallback = if key.bytes().map(u64::from).sum::<u64>() % 2 == 0 {
            GMap::Id
        } else {
            GMap::Point
        };
        Ok(*self.entries.entry(key).or_insert(fallback))
    }
}

/// A bar pair: a pearled element, one signed bimodule input per slot in
/// leaf-label order, and the global leaf labels of every slot.
#[derive(Clone, Debug)]
pub struct XPair {
    pub a: BVElement,
    pub bs: Vec<(usize, usize)>,
    pub labels: Vec<Vec<usize>>,
}

fn is_identity_word(w: &[usize]) -> bool {
    w.iter().enumerate().all(|(i, &l)| l == i + 1)
}

/// Reindexes an operad label along a leaf word by normalizing the
/// corolla carrying that word, so that the relabelling goes through the
/// same canonicalization convention as everything else.
fn fold_word(ctx: &BVContext, label: usize, word: &[usize]) -> Result<usize, VerifyError> {
    if is_identity_word(word) {
        return Ok(label);
    }
    let rows = vec![word.iter().map(|&l| Child::Leaf(l)).collect::<Vec<_>>()];
    let base = PlanarTree::new(rows, 0)?;
    let tree = MarkedTree::from_parts(base, BTreeSet::new(), TreeKind::Rooted)?;
    let e = BVElement { family: Family::W, tree, labels: vec![label], params: vec![None] };
    let c = normalize(ctx, &e)?;
    if !is_identity_word(&c.tree.base().leaf_word()) {
        return Err(VerifyError::Check("relabelled corolla did not canonicalize".into()));
    }
    Ok(c.labels[0])
}

fn fold_signed(ctx: &BVContext, value: usize, word: &[usize]) -> Result<usize, VerifyError> {
    Ok(2 * fold_word(ctx, value / 2, word)? + value % 2)
}

fn kleft(
    km: &FinBimodule,
    n: usize,
    x: usize,
    ys: &[(usize, usize)],
) -> Result<usize, VerifyError> {
    km.left
        .get(&(n, x, ys.to_vec()))
        .copied()
        .ok_or_else(|| VerifyError::Check(format!("missing signed left entry at ({n},{x})")))
}

/// Evaluates the pairing: project the pearled element to its operad
/// label, push every slot input through the table entry at the
/// corresponding arity-one collapse, act on the left in the signed
/// bimodule, and fold by the global leaf word.
pub fn xi_eval(
    ctx: &BVContext,
    km: &FinBimodule,
    table: &mut XiTable,
    pair: &XPair,
) -> Result<(usize, usize), VerifyError> {
    let n = pair.a.arity();
    if pair.bs.len() != n || pair.labels.len() != n {
        return Err(VerifyError::Check("slot mismatch in the bar pair".into()));
    }
    let (_, mu0, w) = project_mu(ctx, &pair.a)?;
    let mu = fold_word(ctx, mu0, &w)?;
    let mut ys = Vec::with_capacity(n);
    for j in 1..=n {
        let t = tau(ctx, &pair.a, j)?;
        let t = normalize(ctx, &t)?;
        let boundary = in_boundary_n1(ctx, &t)?;
        let gm = table.lookup(point_key(&t), boundary)?;
        let (m, b) = pair.bs[j - 1];
        ys.push((m, gm.apply(b)));
    }
    let composed = kleft(km, n, mu, &ys)?;
    let word: Vec<usize> = pair.labels.concat();
    let total: usize = pair.bs.iter().map(|&(m, _)| m).sum();
    if word.len() != total {
        return Err(VerifyError::Check("label blocks do not match the slot arities".into()));
    }
    Ok((total, fold_signed(ctx, composed, &word)?))
}

/// Whether collapsing every slot but `i` lands in the boundary of the
/// arity-one space, read off the tree directly: the first trunk vertex
/// over the owner of leaf `i` must be a non-pearl vertex at parameter
/// one.  Only meaningful on normalized elements.
pub fn tau_boundary_expected(a: &BVElement, i: usize) -> Result<bool, VerifyError> {
    let MarkedTree::Pearled(pt) = &a.tree else {
        return Err(VerifyError::Check("expected a pearled element".into()));
    };
    let n = pt.base.n_vertices();
    let owner = (0..n)
        .find(|&v| pt.base.children(v).contains(&Child::Leaf(i)))
        .ok_or_else(|| VerifyError::Check(format!("leaf {i} not found")))?;
    let trunk: BTreeSet<usize> = pt.trunk().into_iter().collect();
    let pw = pt.pearlward();
    let mut v = owner;
    while !trunk.contains(&v) {
        v = pw[v].ok_or_else(|| VerifyError::Check("broken pearlward chain".into()))?;
    }
    Ok(v != pt.pearl && is_one(&a.params[v]))
}

#[derive(Clone, Debug, Default)]
pub struct XiReport {
    pub constant_checked: usize,
    pub relation_checked: usize,
    pub infleft_checked: usize,
    pub sigma_checked: usize,
    pub membership_checked: usize,
    pub failures: Vec<String>,
}

impl XiReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Identity-labelled consecutive blocks matching the slot arities.
fn blocks(bs: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut next = 1;
    for &(m, _) in bs {
        out.push((next..next + m).collect());
        next += m;
    }
    out
}

fn sample_pair(
    ctx: &BVContext,
    km: &FinBimodule,
    sampler: &IbSampler,
    rng: &mut ChaCha8Rng,
    n_a: usize,
) -> Result<XPair, VerifyError> {
    let allow_one = rng.gen_bool(0.4);
    let a = sampler.sample(ctx, rng, allow_one)?;
    // Leave room for an outer arity-two action on top of the total.
    let budget = km.max_arity.saturating_sub(1);
    let mut ms = vec![1usize; n_a];
    if rng.gen_bool(0.6) {
        let j = rng.gen_range(0..n_a);
        let bump = if rng.gen_bool(0.5) { 0 } else { 2 };
        if n_a - 1 + bump <= budget {
            ms[j] = bump;
        }
    }
    let bs: Vec<(usize, usize)> = ms
        .iter()
        .map(|&m| (m, rng.gen_range(0..2 * ctx.operad.card(m))))
        .collect();
    let labels = blocks(&bs);
    Ok(XPair { a, bs, labels })
}

/// The pairing with the constant basepoint table: the operadic
/// composite of the projections, with a positive sign.
fn plain_composite(ctx: &BVContext, pair: &XPair) -> Result<(usize, usize), VerifyError> {
    let o = &ctx.operad;
    let (_, mu0, w) = project_mu(ctx, &pair.a)?;
    let mut acc = fold_word(ctx, mu0, &w)?;
    let mut cur = pair.a.arity();
    for j in (1..=pair.a.arity()).rev() {
        let (m, b) = pair.bs[j - 1];
        acc = o.comp(cur, j, acc, m, b / 2);
        cur = cur + m - 1;
    }
    let word: Vec<usize> = pair.labels.concat();
    Ok((cur, 2 * fold_word(ctx, acc, &word)?))
}

fn check_relation_right(
    ctx: &BVContext,
    km: &FinBimodule,
    table: &mut XiTable,
    rng: &mut ChaCha8Rng,
    pair: &XPair,
    rep: &mut XiReport,
    round: usize,
) -> Result<(), VerifyError> {
    let n = pair.a.arity();
    let o = &ctx.operad;
    let unary = (0..n).find(|&j| pair.bs[j].0 == 1);
    if let Some(u) = unary.filter(|_| round.is_multiple_of(2) && o.card(2) > 0) {
        // Graft an arity-two corolla over a unary slot: splitting the
        // slot input must commute with acting inside the bimodule.
        let i = u + 1;
        let theta = rng.gen_range(0..o.card(2));
        let cs = [
            (1usize, rng.gen_range(0..2 * o.card(1))),
            (1usize, rng.gen_range(0..2 * o.card(1))),
        ];
        let ap = act(ctx, &pair.a, &Action::Right { i, n: 2, theta })?;
        let mut lbs = Vec::new();
        for s in 1..=n + 1 {
            if s < i {
                lbs.push(pair.bs[s - 1]);
            } else if s == i || s == i + 1 {
                lbs.push(cs[s - i]);
            } else {
                lbs.push(pair.bs[s - 2]);
            }
        }
        let llabels = blocks(&lbs);
        let lhs = xi_eval(ctx, km, table, &XPair { a: ap, bs: lbs, labels: llabels })?;
        let mut rbs = pair.bs.clone();
        rbs[i - 1] = (2, kleft(km, 2, theta, &cs)?);
        let rlabels = blocks(&rbs);
        let rhs =
            xi_eval(ctx, km, table, &XPair { a: pair.a.clone(), bs: rbs, labels: rlabels })?;
        if lhs != rhs {
            rep.failures.push(format!("graft relation at round {round}"));
        }
        rep.relation_checked += 1;
    } else if n >= 2 && o.card(0) > 0 {
        // Collapse one slot with the arity-zero point.
        let i = rng.gen_range(1..=n);
        let theta = rng.gen_range(0..o.card(0));
        let ap = act(ctx, &pair.a, &Action::Right { i, n: 0, theta })?;
        let mut lbs = Vec::new();
        for s in 1..=n - 1 {
            if s < i {
                lbs.push(pair.bs[s - 1]);
            } else {
                lbs.push(pair.bs[s]);
            }
        }
        let llabels = blocks(&lbs);
        let lhs = xi_eval(ctx, km, table, &XPair { a: ap, bs: lbs, labels: llabels })?;
        let mut rbs = pair.bs.clone();
        rbs[i - 1] = (0, kleft(km, 0, theta, &[])?);
        let rlabels = blocks(&rbs);
        let rhs =
            xi_eval(ctx, km, table, &XPair { a: pair.a.clone(), bs: rbs, labels: rlabels })?;
        if lhs != rhs {
            rep.failures.push(format!("collapse relation at round {round}"));
        }
        rep.relation_checked += 1;
    }
    Ok(())
}

fn check_relation_infleft(
    ctx: &BVContext,
    km: &FinBimodule,
    table: &mut XiTable,
    rng: &mut ChaCha8Rng,
    pair: &XPair,
    rep: &mut XiReport,
    round: usize,
) -> Result<(), VerifyError> {
    let o = &ctx.operad;
    if o.card(2) == 0 {
        return Ok(());
    }
    let total: usize = pair.bs.iter().map(|b| b.0).sum();
    if total + 1 > km.max_arity {
        return Ok(());
    }
    let i = 1 + (round % 2);
    let theta = rng.gen_range(0..o.card(2));
    let ap = act(ctx, &pair.a, &Action::InfLeft { i, n: 2, theta })?;
    let unit = 2 * o.unit;
    let mut bs2 = Vec::new();
    if i == 1 {
        bs2.extend_from_slice(&pair.bs);
        bs2.push((1, unit));
    } else {
        bs2.push((1, unit));
        bs2.extend_from_slice(&pair.bs);
    }
    let labels2 = blocks(&bs2);
    let lhs = xi_eval(ctx, km, table, &XPair { a: ap, bs: bs2, labels: labels2 })?;
    let inner = xi_eval(ctx, km, table, pair)?;
    let ys = if i == 1 {
        vec![inner, (1, unit)]
    } else {
        vec![(1, unit), inner]
    };
    let rhs = (total + 1, kleft(km, 2, theta, &ys)?);
    if lhs != rhs {
        rep.failures.push(format!("padding relation at round {round}"));
    }
    rep.infleft_checked += 1;
    Ok(())
}

fn check_sigma(
    ctx: &BVContext,
    km: &FinBimodule,
    table: &mut XiTable,
    pair: &XPair,
    rep: &mut XiReport,
    round: usize,
) -> Result<(), VerifyError> {
    let n = pair.a.arity();
    let base = pair.a.tree.base();
    let rows: Vec<Vec<Child>> = (0..base.n_vertices())
        .map(|v| {
            base.children(v)
                .iter()
                .map(|c| match *c {
                    Child::Leaf(l) => Child::Leaf(n + 1 - l),
                    Child::Vertex(w) => Child::Vertex(w),
                })
                .collect()
        })
        .collect();
    let relabelled = PlanarTree::new(rows, base.root())?;
    let tree = MarkedTree::from_parts(relabelled, pair.a.tree.pearls(), pair.a.tree.kind())?;
    let a2 = BVElement {
        family: pair.a.family,
        tree,
        labels: pair.a.labels.clone(),
        params: pair.a.params.clone(),
    };
    let bs2: Vec<(usize, usize)> = (1..=n).map(|s| pair.bs[n - s]).collect();
    let labels2: Vec<Vec<usize>> = (1..=n).map(|s| pair.labels[n - s].clone()).collect();
    let lhs = xi_eval(ctx, km, table, &XPair { a: a2, bs: bs2, labels: labels2 })?;
    let rhs = xi_eval(ctx, km, table, pair)?;
    if lhs != rhs {
        rep.failures.push(format!("equivariance at round {round}"));
    }
    rep.sigma_checked += 1;
    Ok(())
}

/// Runs the pairing checks over seeded random bar pairs: the constant
/// table reduces to the operadic projection, relation-equivalent
/// representatives evaluate equally, the evaluation is equivariant, and
/// boundary membership of the slot collapses matches the tree-side
/// prediction.
pub fn verify_xi(
    o: &FinOperad,
    samples: usize,
    seed: u64,
    table: Option<XiTable>,
) -> Result<XiReport, VerifyError> {
    if o.card(0) != 1 || o.card(1) != 1 {
        return Err(VerifyError::Check(
            "the pairing checks assume point spaces in arities zero and one".into(),
        ));
    }
    let ctx = BVContext::over_self(o);
    let km = signed_bimodule(o);
    let mut table = table.unwrap_or_default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samplers = [IbSampler::new(1)?, IbSampler::new(2)?];
    let mut rep = XiReport::default();
    for round in 0..samples {
        let n_a = 1 + (round % 2);
        let pair = sample_pair(&ctx, &km, &samplers[n_a - 1], &mut rng, n_a)?;
        let mut point = XiTable::constant(GMap::Point);
        let got = xi_eval(&ctx, &km, &mut point, &pair)?;
        let expected = plain_composite(&ctx, &pair)?;
        if got != expected {
            rep.failures.push(format!("constant table at round {round}"));
        }
        rep.constant_checked += 1;
        check_relation_right(&ctx, &km, &mut table, &mut rng, &pair, &mut rep, round)?;
        check_relation_infleft(&ctx, &km, &mut table, &mut rng, &pair, &mut rep, round)?;
        if n_a == 2 {
            check_sigma(&ctx, &km, &mut table, &pair, &mut rep, round)?;
        }
        let a = normalize(&ctx, &pair.a)?;
        for i in 1..=a.arity() {
            let t = tau(&ctx, &a, i)?;
            let got = in_boundary_n1(&ctx, &t)?;
            let want = tau_boundary_expected(&a, i)?;
            if got != want {
                rep.failures.push(format!("membership at round {round} slot {i}"));
            }
            rep.membership_checked += 1;
        }
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// the two deformation retractions

#[derive(Clone, Debug)]
pub struct RetractionReport {
    pub kind: String,
    pub samples: usize,
    pub buckets: BTreeMap<String, usize>,
    pub failures: Vec<String>,
}

impl RetractionReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Central projection from (0,1,...,1) to the walls of the cube, the
/// identity on the front face.
fn cubical_projection(x: &[Rat]) -> Vec<Rat> {
    if x[0].is_zero() {
        return x.to_vec();
    }
    let mut r = Rat::one() / x[0].clone();
    for c in x.iter().skip(1) {
        if !c.is_one() {
            let cand = Rat::one() / (Rat::one() - c.clone());
            if cand < r {
                r = cand;
            }
        }
    }
    x.iter()
        .enumerate()
        .map(|(j, c)| {
            if j == 0 {
                r.clone() * c.clone()
            } else {
                Rat::one() + r.clone() * (c.clone() - Rat::one())
            }
        })
        .collect()
}

/// Straight-line homotopy from the identity to the central projection,
/// on the cube minus the open pyramid over the front face: checks that
/// it starts at the identity, never leaves the domain, fixes the target
/// walls pointwise, and ends on them.
pub fn verify_retraction_cubical(
    dim: usize,
    samples: usize,
    seed: u64,
) -> Result<RetractionReport, VerifyError> {
    if dim == 0 {
        return Err(VerifyError::Check("the cube dimension must be positive".into()));
    }
    let pool = [
        crate::rat(0, 1),
        crate::rat(1, 4),
        crate::rat(1, 3),
        crate::rat(1, 2),
        crate::rat(2, 3),
        crate::rat(3, 4),
        crate::rat(1, 1),
    ];
    let times = [
        crate::rat(0, 1),
        crate::rat(1, 4),
        crate::rat(1, 2),
        crate::rat(3, 4),
        crate::rat(1, 1),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buckets: BTreeMap<String, usize> = BTreeMap::new();
    let mut failures = Vec::new();
    let mut done = 0usize;
    let mut attempts = 0usize;
    while done < samples && attempts < samples.saturating_mul(50) {
        attempts += 1;
        let x: Vec<Rat> =
            (0..dim).map(|_| pool[rng.gen_range(0..pool.len())].clone()).collect();
        let in_pyramid = dim >= 2 && (1..dim).all(|j| x[j] > x[0]);
        if in_pyramid {
            continue;
        }
        done += 1;
        let bucket = if x[0].is_zero() { "front" } else { "interior" };
        *buckets.entry(bucket.into()).or_insert(0) += 1;
        let p = cubical_projection(&x);
        let in_target = x[0].is_one() || x.iter().any(|c| c.is_zero());
        if in_target && p != x {
            failures.push(format!("target point moved: {x:?}"));
        }
        for t in &times {
            let h: Vec<Rat> = x
                .iter()
                .zip(&p)
                .map(|(a, b)| (Rat::one() - t.clone()) * a.clone() + t.clone() * b.clone())
                .collect();
            if t.is_zero() && h != x {
                failures.push(format!("does not start at the identity: {x:?}"));
            }
            if h.iter().any(|c| c < &Rat::zero() || c > &Rat::one()) {
                failures.push(format!("left the cube at t={t}: {x:?}"));
            }
            if dim >= 2 && (1..dim).all(|j| h[j] > h[0]) {
                failures.push(format!("entered the pyramid at t={t}: {x:?}"));
            }
            if t.is_one() && !(h[0].is_one() || h.iter().any(|c| c.is_zero())) {
                failures.push(format!("did not land on the target: {x:?}"));
            }
        }
    }
    if done < samples {
        failures.push("could not draw enough domain points".into());
    }
    Ok(RetractionReport { kind: format!("cubical-{dim}"), samples: done, buckets, failures })
}

/// Classification of a canonical element under the first-stage
/// retraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum D1Outcome {
    /// A parameter equals one; the retraction is the identity.
    Composite,
    /// Trunk arity at least two; the retraction is the identity.
    Upper,
    /// Outside the first-stage boundary.
    Outside,
    /// The branch maximum reached one.
    Stop,
    /// The branch head merged into the trunk.
    Contract,
}

fn slide(x: &BVElement, branch: &[usize], tw: &Rat, tr: &Rat, s: &Rat) -> BVElement {
    let mut y = x.clone();
    for &v in branch {
        let t = y.params[v].clone().unwrap();
        y.params[v] = Some(
            tw.clone()
                + s.clone() * (tr.clone() - tw.clone())
                + (Rat::one() + s.clone()) * (t - tw.clone()),
        );
    }
    y
}

/// Runs the trunk-cut retraction on one element: classifies it, slides
/// the branch parameters, checks admissibility at intermediate times,
/// and checks the endpoint lands in the second-stage boundary.
pub fn d1_retract_check(ctx: &BVContext, x: &BVElement) -> Result<D1Outcome, VerifyError> {
    let x = normalize(ctx, x)?;
    if x.arity() < 2 {
        return Err(VerifyError::Check("the first-stage boundary needs arity two".into()));
    }
    if x.params.iter().any(is_one) {
        if !in_d1(&x)? {
            return Err(VerifyError::Check("composite element outside the boundary".into()));
        }
        return Ok(D1Outcome::Composite);
    }
    let MarkedTree::Pearled(pt) = &x.tree else {
        return Err(VerifyError::Check("expected a pearled element".into()));
    };
    if pt.trunk_arity() >= 2 {
        if !in_d1(&x)? {
            return Err(VerifyError::Check("upper element outside the boundary".into()));
        }
        return Ok(D1Outcome::Upper);
    }
    let (w, r) = d1_branch(pt)?;
    let tw = x.params[w].clone().unwrap();
    let tr = match r {
        Some(v) => x.params[v].clone().unwrap(),
        None => Rat::zero(),
    };
    let cut = (crate::rat(2, 1) * tr.clone() + Rat::one()) / crate::rat(3, 1);
    if tw > cut {
        if in_d1(&x)? {
            return Err(VerifyError::Check("cut inequality disagrees with membership".into()));
        }
        return Ok(D1Outcome::Outside);
    }
    if !in_d1(&x)? {
        return Err(VerifyError::Check("cut inequality disagrees with membership".into()));
    }
    let n = pt.base.n_vertices();
    let branch: Vec<usize> =
        (0..n).filter(|&v| v != pt.pearl && Some(v) != r).collect();
    let tmax = branch
        .iter()
        .map(|&v| x.params[v].clone().unwrap())
        .max()
        .ok_or_else(|| VerifyError::Check("empty branch".into()))?;
    if branch.iter().any(|&v| x.params[v].clone().unwrap() < tw) {
        return Err(VerifyError::Check("branch parameter below the head".into()));
    }
    let stop_early =
        tmax.clone() - tw.clone() >= (Rat::one() - tr.clone()) / crate::rat(2, 1);
    let s_star = if stop_early {
        (Rat::one() - tmax.clone())
            / (tmax.clone() + tr.clone() - crate::rat(2, 1) * tw.clone())
    } else {
        Rat::one()
    };
    // Identity at s = 0, admissible all along, head parameter falling.
    for s in [Rat::zero(), s_star.clone() / crate::rat(2, 1), s_star.clone()] {
        let y = slide(&x, &branch, &tw, &tr, &s);
        validate_element(ctx, &y)?;
        let head = y.params[w].clone().unwrap();
        if head > tw {
            return Err(VerifyError::Check("head parameter increased".into()));
        }
        if s.is_zero() && y != x {
            return Err(VerifyError::Check("does not start at the identity".into()));
        }
    }
    // The midpoint stays in the first-stage boundary.
    let mid = normalize(ctx, &slide(&x, &branch, &tw, &tr, &(s_star.clone() / crate::rat(2, 1))))?;
    if !in_d1(&mid)? {
        return Err(VerifyError::Check("midpoint left the first-stage boundary".into()));
    }
    // The endpoint lies in the second-stage boundary.
    let fin = normalize(ctx, &slide(&x, &branch, &tw, &tr, &s_star))?;
    let fin_composite = fin.params.iter().any(is_one);
    let fin_upper = match &fin.tree {
        MarkedTree::Pearled(q) => q.trunk_arity() >= 2,
        _ => false,
    };
    if stop_early {
        if !fin_composite {
            return Err(VerifyError::Check("stop time missed the composite wall".into()));
        }
        Ok(D1Outcome::Stop)
    } else {
        if !fin_upper {
            return Err(VerifyError::Check("contraction missed the upper stratum".into()));
        }
        Ok(D1Outcome::Contract)
    }
}

/// Seeded, type-stratified run of the trunk-cut retraction.
pub fn verify_retraction_d1(
    o: &FinOperad,
    k: usize,
    samples: usize,
    seed: u64,
) -> Result<RetractionReport, VerifyError> {
    if k < 2 {
        return Err(VerifyError::Check("the first-stage boundary needs arity two".into()));
    }
    let ctx = BVContext::over_self(o);
    let sampler = IbSampler::new(k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buckets: BTreeMap<String, usize> = BTreeMap::new();
    let mut failures = Vec::new();
    // Types 1/2/3: composite, upper, and the cut branch.  The stop-time
    // sub-branch of type 3 needs a branch vertex strictly over the
    // head, so it only exists from arity three on.
    let covered = |b: &BTreeMap<String, usize>| {
        let got = |k: &str| b.get(k).copied().unwrap_or(0);
        got("composite") > 0
            && got("upper") > 0
            && got("stop") + got("contract") > 0
            && (k < 3 || got("stop") > 0)
    };
    let mut done = 0usize;
    let mut attempts = 0usize;
    while (done < samples || !covered(&buckets)) && attempts < samples.saturating_mul(100) {
        attempts += 1;
        let x = sampler.sample(&ctx, &mut rng, true)?;
        match d1_retract_check(&ctx, &x) {
            Ok(out) => {
                let name = match out {
                    D1Outcome::Composite => "composite",
                    D1Outcome::Upper => "upper",
                    D1Outcome::Outside => "outside",
                    D1Outcome::Stop => "stop",
                    D1Outcome::Contract => "contract",
                };
                *buckets.entry(name.into()).or_insert(0) += 1;
                done += 1;
            }
            Err(e) => failures.push(e.to_string()),
        }
    }
    if !covered(&buckets) {
        failures.push(format!("incomplete type coverage: {buckets:?}"));
    }
    Ok(RetractionReport { kind: format!("d1-{k}"), samples: done, buckets, failures })
}

// ---------------------------------------------------------------------------
// homological coherence

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoherenceMode {
    Coherent,
    Strong,
}

#[derive(Clone, Debug)]
pub struct CoherenceReport {
    pub k: usize,
    pub mode: CoherenceMode,
    pub sub_homology: HomologyResult,
    pub sup_homology: HomologyResult,
    pub map: Option<InducedMap>,
    pub both_empty: bool,
    pub expected_components: Option<usize>,
    pub homologically_coherent: bool,
}

/// Compares the nerves of the element categories over the boundary
/// inclusion (or its upper restriction in strong mode).  The verdict is
/// homological only: an isomorphism on integral homology in every
/// degree, plus the component count of the big side in strong mode.
pub fn coherence_check(
    nb: &FinIbimodule,
    k: usize,
    mode: CoherenceMode,
) -> Result<CoherenceReport, VerifyError> {
    let psi = build_psi(k);
    let (s_sel, t_sel) = match mode {
        CoherenceMode::Coherent => (Selector::Boundary, Selector::Prime),
        CoherenceMode::Strong => (Selector::BoundaryU, Selector::U),
    };
    let sub_cat = psi.restrict(s_sel)?;
    let sup_cat = psi.restrict(t_sel)?;
    let rho = rho_diagram(nb, &psi);
    let nerve_sub = nerve(&category_of_elements(&sub_cat, &rho.restrict_to(&sub_cat)));
    let nerve_sup = nerve(&category_of_elements(&sup_cat, &rho.restrict_to(&sup_cat)));
    let sub_homology = homology(&nerve_sub);
    let sup_homology = homology(&nerve_sup);
    let both_empty = nerve_sub.dim().is_none() && nerve_sup.dim().is_none();
    let (map, mut verdict) = if both_empty {
        (None, true)
    } else {
        let incl = find_subcomplex(&nerve_sub, &nerve_sup)?;
        let im = induced_homology_map(&nerve_sub, &nerve_sup, &incl);
        let ok = im.all_iso();
        (Some(im), ok)
    };
    let expected_components = match mode {
        CoherenceMode::Strong => Some(rho.values[psi.c_k].len()),
        CoherenceMode::Coherent => None,
    };
    if let Some(e) = expected_components {
        verdict &= sup_homology.components == e;
    }
    Ok(CoherenceReport {
        k,
        mode,
        sub_homology,
        sup_homology,
        map,
        both_empty,
        expected_components,
        homologically_coherent: verdict,
    })
}

// ---------------------------------------------------------------------------
// the mapping cone of the infinitesimal left action

/// Cone of the arity-lowering map O(2) x N(0) -> N(1) between discrete
/// sets, as a pointed one-complex: one vertex per element of N(1), an
/// apex, and one edge per pair through its first-slot composite.
pub fn mapping_cone(nb: &FinIbimodule) -> DeltaComplex {
    let mut c = DeltaComplex::default();
    let mut verts = Vec::new();
    for name in nb.spaces.get(1).cloned().unwrap_or_default() {
        verts.push(c.push(0, Vec::new(), format!("n1:{name}")));
    }
    let apex = c.push(0, Vec::new(), "apex".into());
    if nb.max_arity >= 2 {
        for theta in 0..nb.operad.card(2) {
            for x in 0..nb.card(0) {
                let e = nb.ileft(2, theta, 1, 0, x);
                c.push(1, vec![verts[e], apex], format!("cone:{theta}.{x}"));
            }
        }
    }
    c
}

// ---------------------------------------------------------------------------
// strata of the compactified families

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StratumFamily {
    F,
    If,
    Bf,
}

#[derive(Clone, Debug)]
pub struct Stratum {
    pub class: TreeClass,
    pub codim: usize,
}

/// Types I-IV of pearled trees over a rooted stratum tree: pearl on a
/// vertex, arity-one pearl on an edge, extra arity-zero pearl under a
/// vertex, and an arity-two vertex carrying an arity-zero pearl over an
/// edge.
#[derive(Clone, Debug)]
pub struct PreimageTyping {
    pub trees: [Vec<MarkedTree>; 4],
    pub counts: [usize; 4],
}

#[derive(Clone, Debug)]
pub struct StratumAtlas {
    pub family: StratumFamily,
    pub k: usize,
    pub strata: Vec<Stratum>,
    pub preimages: Option<PreimageTyping>,
}

fn preimage_typing(t: &TreeClass, k: usize) -> Result<PreimageTyping, VerifyError> {
    let base = t.representative.base();
    if base.leaf_count() != k {
        return Err(VerifyError::Check("stratum tree has the wrong leaf count".into()));
    }
    let nv = base.n_vertices();
    let rows: Vec<Vec<Child>> = (0..nv).map(|v| base.children(v).to_vec()).collect();
    let mut t1 = Vec::new();
    let mut t2 = Vec::new();
    let mut t3 = Vec::new();
    let mut t4 = Vec::new();
    for v in 0..nv {
        t1.push(MarkedTree::from_parts(
            base.clone(),
            BTreeSet::from([v]),
            TreeKind::Pearled,
        )?);
        let mut r3 = rows.clone();
        r3[v].push(Child::Vertex(nv));
        r3.push(Vec::new());
        t3.push(MarkedTree::from_parts(
            PlanarTree::new(r3, base.root())?,
            BTreeSet::from([nv]),
            TreeKind::Pearled,
        )?);
        for s in 0..rows[v].len() {
            let mut r2 = rows.clone();
            r2[v][s] = Child::Vertex(nv);
            r2.push(vec![rows[v][s]]);
            t2.push(MarkedTree::from_parts(
                PlanarTree::new(r2, base.root())?,
                BTreeSet::from([nv]),
                TreeKind::Pearled,
            )?);
            let mut r4 = rows.clone();
            r4[v][s] = Child::Vertex(nv);
            r4.push(vec![rows[v][s], Child::Vertex(nv + 1)]);
            r4.push(Vec::new());
            t4.push(MarkedTree::from_parts(
                PlanarTree::new(r4, base.root())?,
                BTreeSet::from([nv + 1]),
                TreeKind::Pearled,
            )?);
        }
    }
    // The output edge below the root.
    let mut r2 = rows.clone();
    r2.push(vec![Child::Vertex(base.root())]);
    t2.push(MarkedTree::from_parts(
        PlanarTree::new(r2, nv)?,
        BTreeSet::from([nv]),
        TreeKind::Pearled,
    )?);
    let mut r4 = rows.clone();
    r4.push(vec![Child::Vertex(base.root()), Child::Vertex(nv + 1)]);
    r4.push(Vec::new());
    t4.push(MarkedTree::from_parts(
        PlanarTree::new(r4, nv)?,
        BTreeSet::from([nv + 1]),
        TreeKind::Pearled,
    )?);
    let counts = [t1.len(), t2.len(), t3.len(), t4.len()];
    Ok(PreimageTyping { trees: [t1, t2, t3, t4], counts })
}

/// Enumerates the stratum trees of the requested compactified family
/// with codimensions, and optionally the pearled preimage typing over
/// one rooted stratum tree.
pub fn fm_strata(
    family: StratumFamily,
    k: usize,
    preimage_of: Option<&TreeClass>,
) -> Result<StratumAtlas, VerifyError> {
    let strata: Vec<Stratum> = match family {
        StratumFamily::F => enumerate_tree_classes(
            TreeKind::Rooted,
            k,
            ArityConstraints { pearl_min: 0, nonpearl_min: 2 },
        )?
        .into_iter()
        .map(|c| {
            let codim = c.representative.base().n_vertices() - 1;
            Stratum { class: c, codim }
        })
        .collect(),
        StratumFamily::If => enumerate_tree_classes(
            TreeKind::Pearled,
            k,
            ArityConstraints { pearl_min: 0, nonpearl_min: 2 },
        )?
        .into_iter()
        .map(|c| {
            let codim = c.representative.base().n_vertices() - 1;
            Stratum { class: c, codim }
        })
        .collect(),
        StratumFamily::Bf => enumerate_tree_classes(
            TreeKind::Section,
            k,
            ArityConstraints { pearl_min: 1, nonpearl_min: 2 },
        )?
        .into_iter()
        .map(|c| {
            let codim =
                c.representative.base().n_vertices() - c.representative.pearls().len();
            Stratum { class: c, codim }
        })
        .collect(),
    };
    let preimages = match preimage_of {
        None => None,
        Some(t) => Some(preimage_typing(t, k)?),
    };
    Ok(StratumAtlas { family, k, strata, preimages })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{
        builtin, lambda_seq_from_operad, matching_object, operad_as_ibimodule,
        validate_bimodule, Builtin,
    };
    use crate::rat;
    use crate::trees::Node;

    fn assoc(n: usize) -> FinOperad {
        builtin(Builtin::Assoc, n)
    }

    fn comm(n: usize) -> FinOperad {
        builtin(Builtin::Comm, n)
    }

    #[test]
    fn the_contraction_images_of_a_two_chain() {
        let rep = verify_delta(2).unwrap();
        assert!(rep.ok());
        let chains: Vec<&DeltaTree> =
            rep.trees.iter().filter(|t| t.images.len() == 4 && t.extensions == 1).collect();
        assert!(!chains.is_empty());
        let mut want = [
            vec![rat(0, 1), rat(0, 1)],
            vec![rat(0, 1), rat(1, 1)],
            vec![rat(1, 2), rat(1, 1)],
            vec![rat(1, 1), rat(1, 1)],
        ];
        want.sort();
        for t in chains {
            let mut pts: Vec<Vec<Rat>> = t.images.values().cloned().collect();
            for p in pts.iter_mut() {
                p.sort();
            }
            pts.sort();
            assert_eq!(pts, want.to_vec());
            let total: Rat = t.dets.iter().map(|d| d.abs()).sum();
            assert_eq!(total, rat(1, 1));
        }
    }

    #[test]
    fn every_tree_passes_the_simplex_checks_up_to_arity_three() {
        for k in 0..=3 {
            let rep = verify_delta(k).unwrap();
            assert!(rep.ok(), "arity {k}: {:?}", rep.first_failure().map(|t| &t.code));
        }
    }

    #[test]
    fn the_corolla_image_is_a_point() {
        let rep = verify_delta(2).unwrap();
        let psi = build_psi(2);
        let t = &rep.trees[psi.c_k];
        assert_eq!(t.images.len(), 1);
        assert!(t.images.values().next().unwrap().is_empty());
        assert_eq!(t.dets, vec![rat(1, 1)]);
        assert!(t.ok());
    }

    #[test]
    fn gamma_roundtrips_exactly_on_seeded_samples() {
        assert!(verify_gamma(&assoc(3), 2, 200, 7).unwrap().ok());
        assert!(verify_gamma(&comm(4), 3, 100, 11).unwrap().ok());
    }

    #[test]
    fn the_signed_bimodule_satisfies_the_axioms() {
        let km = signed_bimodule(&assoc(3));
        assert!(validate_bimodule(&km, 3).ok());
        let km = signed_bimodule(&comm(3));
        assert!(validate_bimodule(&km, 3).ok());
    }

    #[test]
    fn pairing_checks_pass_for_the_builtin_operads() {
        let r = verify_xi(&assoc(4), 40, 5, None).unwrap();
        assert!(r.ok(), "{:?}", r.failures);
        assert!(r.relation_checked > 0);
        assert!(r.infleft_checked > 0);
        assert!(r.sigma_checked > 0);
        assert!(r.membership_checked > 0);
        let r = verify_xi(&comm(4), 30, 9, None).unwrap();
        assert!(r.ok(), "{:?}", r.failures);
    }

    #[test]
    fn boundary_points_must_hit_the_basepoint() {
        let o = comm(3);
        let ctx = BVContext::over_self(&o);
        let km = signed_bimodule(&o);
        let pearl = BVElement {
            family: Family::IbLambda,
            tree: MarkedTree::from_node(&Node::Pearl(Vec::new()), TreeKind::Pearled).unwrap(),
            labels: vec![0],
            params: vec![None],
        };
        let a = act(&ctx, &pearl, &Action::InfLeft { i: 1, n: 2, theta: 0 }).unwrap();
        let a = normalize(&ctx, &a).unwrap();
        let t1 = normalize(&ctx, &tau(&ctx, &a, 1).unwrap()).unwrap();
        assert!(in_boundary_n1(&ctx, &t1).unwrap());
        assert!(tau_boundary_expected(&a, 1).unwrap());
        let mut table = XiTable::default();
        table.entries.insert(point_key(&t1), GMap::Id);
        let pair = XPair { a: a.clone(), bs: vec![(1, 0)], labels: vec![vec![1]] };
        assert!(xi_eval(&ctx, &km, &mut table, &pair).is_err());
        let mut free = XiTable::default();
        assert!(xi_eval(&ctx, &km, &mut free, &pair).is_ok());
    }

    #[test]
    fn the_pairing_ignores_unit_grafts() {
        let o = assoc(4);
        let ctx = BVContext::over_self(&o);
        let km = signed_bimodule(&o);
        let sampler = IbSampler::new(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let a = sampler.sample(&ctx, &mut rng, false).unwrap();
            let bs = vec![(1, rng.gen_range(0..2)), (1, rng.gen_range(0..2))];
            let pair = XPair { a: a.clone(), bs: bs.clone(), labels: blocks(&bs) };
            let grafted = act(&ctx, &a, &Action::Right { i: 1, n: 1, theta: o.unit }).unwrap();
            let pair2 = XPair { a: grafted, bs, labels: pair.labels.clone() };
            let mut table = XiTable::default();
            let l = xi_eval(&ctx, &km, &mut table, &pair).unwrap();
            let r = xi_eval(&ctx, &km, &mut table, &pair2).unwrap();
            assert_eq!(l, r);
        }
    }

    #[test]
    fn the_front_face_is_fixed_and_projection_lands_on_the_target() {
        for dim in 1..=3 {
            let r = verify_retraction_cubical(dim, 80, 3).unwrap();
            assert!(r.ok(), "dim {dim}: {:?}", r.failures);
        }
        let r = verify_retraction_cubical(3, 120, 4).unwrap();
        assert!(r.buckets.get("front").copied().unwrap_or(0) > 0);
        assert!(r.buckets.get("interior").copied().unwrap_or(0) > 0);
    }

    #[test]
    fn the_trunk_cut_retraction_covers_every_type() {
        let r = verify_retraction_d1(&assoc(4), 2, 150, 13).unwrap();
        assert!(r.ok(), "{:?}", r.failures);
        for b in ["composite", "upper", "contract"] {
            assert!(r.buckets.get(b).copied().unwrap_or(0) > 0, "missing {b}");
        }
        let r = verify_retraction_d1(&assoc(5), 3, 150, 17).unwrap();
        assert!(r.ok(), "{:?}", r.failures);
        for b in ["composite", "upper", "stop", "contract"] {
            assert!(r.buckets.get(b).copied().unwrap_or(0) > 0, "missing {b}");
        }
    }

    #[test]
    fn a_flat_branch_contracts_into_the_root() {
        let node = Node::Vertex(vec![
            Node::Pearl(Vec::new()),
            Node::Vertex(vec![Node::Leaf(1), Node::Leaf(2)]),
        ]);
        let tree = MarkedTree::from_node(&node, TreeKind::Pearled).unwrap();
        let MarkedTree::Pearled(pt) = &tree else { unreachable!() };
        let pearl = pt.pearl;
        let root = pt.base.root();
        let n = pt.base.n_vertices();
        let w = (0..n).find(|&v| v != pearl && v != root).unwrap();
        let mut labels = vec![0; n];
        let mut params = vec![None; n];
        labels[root] = 0;
        labels[w] = 0;
        params[root] = Some(rat(1, 3));
        params[w] = Some(rat(1, 2));
        let x = BVElement { family: Family::IbLambda, tree, labels, params };
        let ctx = BVContext::over_self(&assoc(4));
        validate_element(&ctx, &x).unwrap();
        assert_eq!(d1_retract_check(&ctx, &x).unwrap(), D1Outcome::Contract);
    }

    #[test]
    fn assoc_is_strongly_homologically_coherent_at_arity_two() {
        let nb = operad_as_ibimodule(&assoc(4));
        let strong = coherence_check(&nb, 2, CoherenceMode::Strong).unwrap();
        assert!(strong.homologically_coherent);
        assert_eq!(strong.sup_homology.components, 2);
        assert_eq!(strong.expected_components, Some(2));
        let plain = coherence_check(&nb, 2, CoherenceMode::Coherent).unwrap();
        assert!(plain.homologically_coherent);
    }

    #[test]
    fn the_lambda_diagrams_are_empty_at_arity_two() {
        let nb = operad_as_ibimodule(&builtin(Builtin::Lambda, 4));
        let r = coherence_check(&nb, 2, CoherenceMode::Strong).unwrap();
        assert!(r.both_empty);
        assert!(r.homologically_coherent);
        assert_eq!(r.expected_components, Some(0));
    }

    fn reversed(dc: &DeltaComplex) -> DeltaComplex {
        let mut out = DeltaComplex::default();
        for (d, level) in dc.simplices.iter().enumerate() {
            let lower = if d == 0 { 0 } else { dc.count(d - 1) };
            for s in level.iter().rev() {
                let faces = s.faces.iter().map(|&f| lower - 1 - f).collect();
                out.push(d, faces, s.label.clone());
            }
        }
        out
    }

    #[test]
    fn the_coherence_verdict_ignores_enumeration_order() {
        let nb = operad_as_ibimodule(&assoc(4));
        let psi = build_psi(2);
        let sub_cat = psi.restrict(Selector::BoundaryU).unwrap();
        let sup_cat = psi.restrict(Selector::U).unwrap();
        let rho = rho_diagram(&nb, &psi);
        let sub = nerve(&category_of_elements(&sub_cat, &rho.restrict_to(&sub_cat)));
        let sup = nerve(&category_of_elements(&sup_cat, &rho.restrict_to(&sup_cat)));
        let straight = {
            let incl = find_subcomplex(&sub, &sup).unwrap();
            induced_homology_map(&sub, &sup, &incl).all_iso()
        };
        let shuffled_sup = reversed(&sup);
        shuffled_sup.validate().unwrap();
        let shuffled = {
            let incl = find_subcomplex(&sub, &shuffled_sup).unwrap();
            induced_homology_map(&sub, &shuffled_sup, &incl).all_iso()
        };
        assert_eq!(straight, shuffled);
    }

    #[test]
    fn mapping_cones_of_the_builtin_operads() {
        let cone = mapping_cone(&operad_as_ibimodule(&assoc(2)));
        assert_eq!(cone.f_vector(), vec![2, 2]);
        cone.validate().unwrap();
        let h = homology(&cone);
        assert_eq!(h.betti, vec![1, 1]);

        let cone = mapping_cone(&operad_as_ibimodule(&comm(2)));
        assert_eq!(cone.f_vector(), vec![2, 1]);
        assert!(homology(&cone).reduced_trivial());

        let mut empty0 = operad_as_ibimodule(&comm(2));
        empty0.spaces[0].clear();
        let cone = mapping_cone(&empty0);
        assert_eq!(cone.f_vector(), vec![2]);
        assert_eq!(homology(&cone).components, 2);
    }

    #[test]
    fn four_strata_over_three_leaves() {
        let atlas = fm_strata(StratumFamily::F, 3, None).unwrap();
        let mut codims: Vec<usize> = atlas.strata.iter().map(|s| s.codim).collect();
        codims.sort_unstable();
        assert_eq!(codims, vec![0, 1, 1, 1]);
    }

    #[test]
    fn corolla_preimages_count_vertices_and_edges() {
        for k in 2..=5 {
            let atlas = fm_strata(StratumFamily::F, k, None).unwrap();
            let corolla = atlas.strata.iter().find(|s| s.codim == 0).unwrap();
            let typed = fm_strata(StratumFamily::F, k, Some(&corolla.class))
                .unwrap()
                .preimages
                .unwrap();
            assert_eq!(typed.counts, [1, k + 1, 1, k + 1]);
        }
    }

    #[test]
    fn section_strata_have_nonempty_pearls() {
        let atlas = fm_strata(StratumFamily::Bf, 2, None).unwrap();
        assert!(!atlas.strata.is_empty());
        for s in &atlas.strata {
            let base = s.class.representative.base();
            for p in s.class.representative.pearls() {
                assert!(!base.children(p).is_empty());
            }
            assert_eq!(
                s.codim,
                base.n_vertices() - s.class.representative.pearls().len()
            );
        }
    }

    #[test]
    fn matching_objects_of_the_associative_tower() {
        let seq = lambda_seq_from_operad(&assoc(3));
        assert_eq!(matching_object(&seq, 3).len(), 8);
    }
}
