//! Finite discrete operads, bimodules, infinitesimal bimodules and
//! Lambda-sequences, all given by explicit tables over opaque element
//! ids, plus axiom validation, truncation, matching objects and the
//! tree diagrams rho.
//!
//! Conventions for the associative operad: an element of As(n) is a
//! permutation in one-line notation; composition substitutes blocks
//! into the one-line word, and the symmetric group acts by input
//! relabelling: input j of `x . s` is input `s(j)` of x.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::psi::{PsiCat, RelCategory};
use crate::trees::{canonicalize, contract_edge_raw, MarkedTree};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlgebraError {
    #[error("missing table entry: {0}")]
    Incomplete(String),
    #[error("axiom {axiom} fails: {witness}")]
    Axiom { axiom: String, witness: String },
    #[error("unknown element {0} in arity {1}")]
    UnknownElement(String, usize),
    #[error("{0}")]
    Malformed(String),
}

// ---------------------------------------------------------------------------
// permutation words

/// All permutations of 0..n in one-line notation.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for slot in 0..n {
            let mut q = p.clone();
            q.insert(slot, n - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

pub fn identity_perm(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Function composition a after b.
pub fn perm_compose(a: &[usize], b: &[usize]) -> Vec<usize> {
    b.iter().map(|&j| a[j]).collect()
}

pub fn perm_inverse(a: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; a.len()];
    for (j, &v) in a.iter().enumerate() {
        inv[v] = j;
    }
    inv
}

/// Substitutes the word `v` (over 0..m) for the letter `i` (0-based)
/// of the word `u` (over 0..n), shifting the larger letters; this is
/// the one-line form of operadic block substitution.
pub fn word_subst(u: &[usize], i: usize, v: &[usize]) -> Vec<usize> {
    let m = v.len();
    let mut out = Vec::with_capacity(u.len() + m - 1);
    for &l in u {
        if l < i {
            out.push(l);
        } else if l == i {
            out.extend(v.iter().map(|&x| x + i));
        } else {
            out.push(l + m - 1);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// operads

/// A finite discrete operad with total composition and symmetric
/// action tables up to `max_arity`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FinOperad {
    pub name: String,
    pub max_arity: usize,
    /// Element ids per arity 0..=max_arity.
    pub spaces: Vec<Vec<String>>,
    /// Index of the unit in arity 1.
    pub unit: usize,
    /// (n, i, x, m, y) -> z for comp_i : O(n) x O(m) -> O(n+m-1),
    /// with i 1-based in 1..=n.
    pub comp: BTreeMap<(usize, usize, usize, usize, usize), usize>,
    /// (n, x, sigma) -> x . sigma, sigma in one-line 0-based notation.
    pub sigma: BTreeMap<(usize, usize, Vec<usize>), usize>,
}

impl FinOperad {
    pub fn space(&self, n: usize) -> &[String] {
        &self.spaces[n]
    }

    pub fn card(&self, n: usize) -> usize {
        self.spaces.get(n).map_or(0, |s| s.len())
    }

    pub fn index(&self, n: usize, id: &str) -> Result<usize, AlgebraError> {
        self.spaces
            .get(n)
            .and_then(|s| s.iter().position(|e| e == id))
            .ok_or_else(|| AlgebraError::UnknownElement(id.to_string(), n))
    }

    pub fn comp(&self, n: usize, i: usize, x: usize, m: usize, y: usize) -> usize {
        *self
            .comp
            .get(&(n, i, x, m, y))
            .unwrap_or_else(|| panic!("missing comp ({n},{i},{x},{m},{y}) in {}", self.name))
    }

    pub fn try_comp(
        &self,
        n: usize,
        i: usize,
        x: usize,
        m: usize,
        y: usize,
    ) -> Result<usize, AlgebraError> {
        self.comp.get(&(n, i, x, m, y)).copied().ok_or_else(|| {
            AlgebraError::Incomplete(format!(
                "comp entry (n={n}, i={i}, x={}, m={m}, y={})",
                self.spaces[n][x], self.spaces[m][y]
            ))
        })
    }

    pub fn sigma(&self, n: usize, x: usize, tau: &[usize]) -> usize {
        *self
            .sigma
            .get(&(n, x, tau.to_vec()))
            .unwrap_or_else(|| panic!("missing sigma ({n},{x},{tau:?}) in {}", self.name))
    }

    pub fn is_reduced(&self) -> bool {
        self.card(0) == 1
    }

    pub fn is_doubly_reduced(&self) -> bool {
        self.is_reduced() && self.card(1) == 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Builtin {
    Comm,
    Assoc,
    Lambda,
}

impl std::str::FromStr for Builtin {
    type Err = AlgebraError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "comm" => Ok(Builtin::Comm),
            "assoc" => Ok(Builtin::Assoc),
            "lambda" => Ok(Builtin::Lambda),
            other => Err(AlgebraError::Malformed(format!("unknown builtin {other:?}"))),
        }
    }
}

fn word_id(w: &[usize]) -> String {
    if w.is_empty() {
        "e".to_string()
    } else {
        w.iter().map(|l| (l + 1).to_string()).collect::<Vec<_>>().join(",")
    }
}

/// Builds one of the built-in operads up to the given arity.
pub fn builtin(name: Builtin, nmax: usize) -> FinOperad {
    assert!(nmax >= 1);
    match name {
        Builtin::Comm => {
            let spaces: Vec<Vec<String>> = (0..=nmax).map(|_| vec!["*".to_string()]).collect();
            let mut comp = BTreeMap::new();
            for n in 1..=nmax {
                for m in 0..=nmax {
                    if n + m - 1 > nmax {
                        continue;
                    }
                    for i in 1..=n {
                        comp.insert((n, i, 0, m, 0), 0);
                    }
                }
            }
            let mut sigma = BTreeMap::new();
            for n in 0..=nmax {
                for p in permutations(n) {
                    sigma.insert((n, 0, p), 0);
                }
            }
            FinOperad { name: "comm".into(), max_arity: nmax, spaces, unit: 0, comp, sigma }
        }
        Builtin::Assoc => {
            let words: Vec<Vec<Vec<usize>>> = (0..=nmax).map(permutations).collect();
            let spaces: Vec<Vec<String>> = words
                .iter()
                .map(|ws| ws.iter().map(|w| word_id(w)).collect())
                .collect();
            let idx = |n: usize, w: &[usize]| -> usize {
                words[n].iter().position(|x| x == w).unwrap()
            };
            let mut comp = BTreeMap::new();
            for n in 1..=nmax {
                for m in 0..=nmax {
                    if n + m - 1 > nmax {
                        continue;
                    }
                    for i in 1..=n {
                        for (xi, u) in words[n].iter().enumerate() {
                            for (yi, v) in words[m].iter().enumerate() {
                                let z = word_subst(u, i - 1, v);
                                comp.insert((n, i, xi, m, yi), idx(n + m - 1, &z));
                            }
                        }
                    }
                }
            }
            let mut sigma = BTreeMap::new();
            for (n, wn) in words.iter().enumerate() {
                for (xi, w) in wn.iter().enumerate() {
                    for p in permutations(n) {
                        // Input relabelling: input j of x.p is input p(j) of x.
                        let moved = perm_compose(&perm_inverse(&p), w);
                        sigma.insert((n, xi, p), idx(n, &moved));
                    }
                }
            }
            let unit = idx(1, &[0]);
            FinOperad { name: "assoc".into(), max_arity: nmax, spaces, unit, comp, sigma }
        }
        Builtin::Lambda => {
            let mut spaces: Vec<Vec<String>> = vec![vec!["*".to_string()]; 2.min(nmax + 1)];
            while spaces.len() <= nmax {
                spaces.push(Vec::new());
            }
            let mut comp = BTreeMap::new();
            comp.insert((1, 1, 0, 0, 0), 0);
            comp.insert((1, 1, 0, 1, 0), 0);
            let mut sigma = BTreeMap::new();
            sigma.insert((0, 0, vec![]), 0);
            sigma.insert((1, 0, vec![0]), 0);
            for n in 2..=nmax {
                for _p in permutations(n) {
                    // empty spaces: nothing to record
                }
                let _ = n;
            }
            FinOperad { name: "lambda".into(), max_arity: nmax, spaces, unit: 0, comp, sigma }
        }
    }
}

// ---------------------------------------------------------------------------
// validation

#[derive(Clone, Debug)]
pub struct CheckRecord {
    pub axiom: String,
    pub ok: bool,
    pub witness: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub checks: Vec<CheckRecord>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    fn record(&mut self, axiom: &str, witness: Option<String>) {
        self.checks.push(CheckRecord {
            axiom: axiom.to_string(),
            ok: witness.is_none(),
            witness,
        });
    }
}

/// Exhaustively validates the operad axioms up to `up_to`.
pub fn validate_operad(o: &FinOperad, up_to: usize) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let top = up_to.min(o.max_arity);

    // Totality of the tables.
    let mut missing = None;
    'tot: for n in 1..=top {
        for m in 0..=top {
            if n + m - 1 > top {
                continue;
            }
            for i in 1..=n {
                for x in 0..o.card(n) {
                    for y in 0..o.card(m) {
                        if let Err(e) = o.try_comp(n, i, x, m, y) {
                            missing = Some(e.to_string());
                            break 'tot;
                        }
                    }
                }
            }
        }
    }
    for n in 0..=top {
        for x in 0..o.card(n) {
            for p in permutations(n) {
                if !o.sigma.contains_key(&(n, x, p.clone())) {
                    missing.get_or_insert(format!(
                        "sigma entry (n={n}, x={}, {p:?})",
                        o.spaces[n][x]
                    ));
                }
            }
        }
    }
    rep.record("totality", missing);
    if !rep.ok() {
        return rep;
    }

    // Units.
    let mut w = None;
    for n in 0..=top {
        for x in 0..o.card(n) {
            if o.comp(1, 1, o.unit, n, x) != x {
                w.get_or_insert(format!("unit o_1 {} != it", o.spaces[n][x]));
            }
        }
    }
    for n in 1..=top {
        for i in 1..=n {
            for x in 0..o.card(n) {
                if o.comp(n, i, x, 1, o.unit) != x {
                    w.get_or_insert(format!("{} o_{i} unit != it", o.spaces[n][x]));
                }
            }
        }
    }
    rep.record("unit", w);

    // Sequential associativity: (x o_i y) o_{i+j-1} z = x o_i (y o_j z).
    let mut w = None;
    for n in 1..=top {
        for m in 1..=top {
            for l in 0..=top {
                if n + m - 1 > top || n + m + l - 2 > top {
                    continue;
                }
                for i in 1..=n {
                    for j in 1..=m {
                        for x in 0..o.card(n) {
                            for y in 0..o.card(m) {
                                for z in 0..o.card(l) {
                                    let a = o.comp(
                                        n + m - 1,
                                        i + j - 1,
                                        o.comp(n, i, x, m, y),
                                        l,
                                        z,
                                    );
                                    let b = o.comp(n, i, x, m + l - 1, o.comp(m, j, y, l, z));
                                    if a != b {
                                        w.get_or_insert(format!(
                                            "n={n} m={m} l={l} i={i} j={j} x={} y={} z={}",
                                            o.spaces[n][x], o.spaces[m][y], o.spaces[l][z]
                                        ));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    rep.record("sequential associativity", w);

    // Parallel associativity: for i < j,
    // (x o_i y) o_{j+m-1} z = (x o_j z) o_i y.
    let mut w = None;
    for n in 2..=top {
        for m in 0..=top {
            for l in 0..=top {
                if n + m + l - 2 > top || n + m - 1 > top || n + l - 1 > top {
                    continue;
                }
                for i in 1..=n {
                    for j in (i + 1)..=n {
                        for x in 0..o.card(n) {
                            for y in 0..o.card(m) {
                                for z in 0..o.card(l) {
                                    let a = o.comp(
                                        n + m - 1,
                                        j + m - 1,
                                        o.comp(n, i, x, m, y),
                                        l,
                                        z,
                                    );
                                    let b =
                                        o.comp(n + l - 1, i, o.comp(n, j, x, l, z), m, y);
                                    if a != b {
                                        w.get_or_insert(format!(
                                            "n={n} m={m} l={l} i={i} j={j} x={} y={} z={}",
                                            o.spaces[n][x], o.spaces[m][y], o.spaces[l][z]
                                        ));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    rep.record("parallel associativity", w);

    // Group action.
    let mut w = None;
    for n in 0..=top {
        for x in 0..o.card(n) {
            if o.sigma(n, x, &identity_perm(n)) != x {
                w.get_or_insert(format!("identity action moves {}", o.spaces[n][x]));
            }
            for p in permutations(n) {
                for q in permutations(n) {
                    let a = o.sigma(n, o.sigma(n, x, &p), &q);
                    let b = o.sigma(n, x, &perm_compose(&p, &q));
                    if a != b {
                        w.get_or_insert(format!("action not associative at {}", o.spaces[n][x]));
                    }
                }
            }
        }
    }
    rep.record("symmetric action", w);

    // Equivariance: (x.s) o_i (y.t) = (x o_{s(i)} y) . (s o_i t).
    let mut w = None;
    for n in 1..=top {
        for m in 0..=top {
            if n + m - 1 > top {
                continue;
            }
            for i in 1..=n {
                for x in 0..o.card(n) {
                    for y in 0..o.card(m) {
                        for s in permutations(n) {
                            for t in permutations(m) {
                                let lhs = o.comp(
                                    n,
                                    i,
                                    o.sigma(n, x, &s),
                                    m,
                                    o.sigma(m, y, &t),
                                );
                                let si = s[i - 1] + 1;
                                let block = word_subst(&s, s[i - 1], &t);
                                let rhs = o.sigma(
                                    n + m - 1,
                                    o.comp(n, si, x, m, y),
                                    &block,
                                );
                                if lhs != rhs {
                                    w.get_or_insert(format!(
                                        "n={n} m={m} i={i} x={} y={} s={s:?} t={t:?}",
                                        o.spaces[n][x], o.spaces[m][y]
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    rep.record("equivariance", w);
    rep
}

// ---------------------------------------------------------------------------
// bimodules

/// Key of the full left action table: the arity of x, its index, and
/// one (arity, index) pair per input slot.
pub type LeftKey = (usize, usize, Vec<(usize, usize)>);

/// A bimodule over a finite operad: a full left action
/// `gamma_l(x; y_1..y_n)` and a one-at-a-time right action.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FinBimodule {
    pub name: String,
    pub max_arity: usize,
    pub spaces: Vec<Vec<String>>,
    pub operad: FinOperad,
    /// (n, x in O(n), [(m_j, y_j in M(m_j))]) -> element of M(sum m_j).
    pub left: BTreeMap<LeftKey, usize>,
    /// (n, i, x in M(n), m, y in O(m)) -> element of M(n+m-1).
    pub right: BTreeMap<(usize, usize, usize, usize, usize), usize>,
    pub sigma: BTreeMap<(usize, usize, Vec<usize>), usize>,
}

impl FinBimodule {
    pub fn card(&self, n: usize) -> usize {
        self.spaces.get(n).map_or(0, |s| s.len())
    }

    pub fn index(&self, n: usize, id: &str) -> Result<usize, AlgebraError> {
        self.spaces
            .get(n)
            .and_then(|s| s.iter().position(|e| e == id))
            .ok_or_else(|| AlgebraError::UnknownElement(id.to_string(), n))
    }

    pub fn left(&self, n: usize, x: usize, ys: &[(usize, usize)]) -> usize {
        *self
            .left
            .get(&(n, x, ys.to_vec()))
            .unwrap_or_else(|| panic!("missing left action (n={n}, x={x}, ys={ys:?})"))
    }

    pub fn right(&self, n: usize, i: usize, x: usize, m: usize, y: usize) -> usize {
        *self
            .right
            .get(&(n, i, x, m, y))
            .unwrap_or_else(|| panic!("missing right action ({n},{i},{x},{m},{y})"))
    }

    pub fn sigma(&self, n: usize, x: usize, tau: &[usize]) -> usize {
        *self
            .sigma
            .get(&(n, x, tau.to_vec()))
            .unwrap_or_else(|| panic!("missing bimodule sigma ({n},{x},{tau:?})"))
    }
}

/// gamma_l(x; y_1..y_n) by iterated compositions, taking the
/// arity-zero slots first so the intermediate arity never exceeds
/// max(n, sum of the input arities).
fn gamma_left_via_comp(o: &FinOperad, n: usize, x: usize, pairs: &[(usize, usize)]) -> usize {
    let mut pos: Vec<usize> = (1..=n).collect();
    let mut acc = x;
    let mut arity = n;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&j| (pairs[j].0 != 0, std::cmp::Reverse(j)));
    for j in order {
        let (m, y) = pairs[j];
        let p = pos[j];
        acc = o.comp(arity, p, acc, m, y);
        arity = arity + m - 1;
        for q in pos.iter_mut() {
            if *q > p {
                *q = *q + m - 1;
            }
        }
    }
    acc
}

/// The operad as a bimodule over itself, with the left action given by
/// iterated compositions.
pub fn operad_as_bimodule(o: &FinOperad) -> FinBimodule {
    let top = o.max_arity;
    let mut left = BTreeMap::new();
    for n in 0..=top {
        for x in 0..o.card(n) {
            for ms in compositions(n, top) {
                if ms.iter().sum::<usize>() > top {
                    continue;
                }
                for ys in index_tuples(&ms.iter().map(|&m| o.card(m)).collect::<Vec<_>>()) {
                    let pairs: Vec<(usize, usize)> =
                        ms.iter().copied().zip(ys.iter().copied()).collect();
                    left.insert((n, x, pairs.clone()), gamma_left_via_comp(o, n, x, &pairs));
                }
            }
        }
    }
    let mut right = BTreeMap::new();
    for (&(n, i, x, m, y), &z) in &o.comp {
        right.insert((n, i, x, m, y), z);
    }
    FinBimodule {
        name: o.name.clone(),
        max_arity: top,
        spaces: o.spaces.clone(),
        operad: o.clone(),
        left,
        right,
        sigma: o.sigma.clone(),
    }
}

/// All tuples (m_1..m_n) of arities with each m_j <= top.
fn compositions(n: usize, top: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in compositions(n - 1, top) {
        for m in 0..=top {
            let mut v = vec![m];
            v.extend(rest.iter().copied());
            out.push(v);
        }
    }
    out
}

fn index_tuples(cards: &[usize]) -> Vec<Vec<usize>> {
    let mut acc = vec![Vec::new()];
    for &c in cards {
        let mut next = Vec::new();
        for prefix in &acc {
            for i in 0..c {
                let mut p = prefix.clone();
                p.push(i);
                next.push(p);
            }
        }
        acc = next;
    }
    acc
}

/// Validates the bimodule axioms exhaustively up to `up_to`.
pub fn validate_bimodule(m: &FinBimodule, up_to: usize) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let o = &m.operad;
    let top = up_to.min(m.max_arity);

    // Left unit: gamma(unit; y) = y.
    let mut w = None;
    for n in 0..=top {
        for y in 0..m.card(n) {
            if m.left(1, o.unit, &[(n, y)]) != y {
                w.get_or_insert(format!("gamma(unit; {}) != it", m.spaces[n][y]));
            }
        }
    }
    rep.record("left unit", w);

    // Right unit.
    let mut w = None;
    for n in 1..=top {
        for i in 1..=n {
            for x in 0..m.card(n) {
                if m.right(n, i, x, 1, o.unit) != x {
                    w.get_or_insert(format!("{} o^{i} unit != it", m.spaces[n][x]));
                }
            }
        }
    }
    rep.record("right unit", w);

    // Right sequential associativity on M.
    let mut w = None;
    for n in 1..=top {
        for mm in 1..=top {
            for l in 0..=top {
                if n + mm - 1 > top || n + mm + l - 2 > top {
                    continue;
                }
                for i in 1..=n {
                    for j in 1..=mm {
                        for x in 0..m.card(n) {
                            for y in 0..o.card(mm) {
                                for z in 0..o.card(l) {
                                    let a = m.right(
                                        n + mm - 1,
                                        i + j - 1,
                                        m.right(n, i, x, mm, y),
                                        l,
                                        z,
                                    );
                                    let b =
                                        m.right(n, i, x, mm + l - 1, o.comp(mm, j, y, l, z));
                                    if a != b {
                                        w.get_or_insert(format!(
                                            "n={n} m={mm} l={l} i={i} j={j}"
                                        ));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    rep.record("right sequential associativity", w);

    // Left-right compatibility: gamma(x; ys) with a right action inside
    // one slot equals the right action on the result.
    let mut w = None;
    for n in 1..=top.min(3) {
        for x in 0..o.card(n) {
            for ms in compositions(n, top) {
                let total: usize = ms.iter().sum();
                if total > top || total == 0 {
                    continue;
                }
                for ys in index_tuples(&ms.iter().map(|&mm| m.card(mm)).collect::<Vec<_>>()) {
                    let pairs: Vec<(usize, usize)> =
                        ms.iter().copied().zip(ys.iter().copied()).collect();
                    for t in 0..n {
                        let (mt, yt) = pairs[t];
                        if mt == 0 {
                            continue;
                        }
                        for jj in 1..=mt {
                            for l in 0..=top {
                                if total + l - 1 > top {
                                    continue;
                                }
                                for z in 0..o.card(l) {
                                    let mut inner = pairs.clone();
                                    inner[t] = (mt + l - 1, m.right(mt, jj, yt, l, z));
                                    let a = m.left(n, x, &inner);
                                    let offset: usize =
                                        pairs[..t].iter().map(|&(mm, _)| mm).sum();
                                    let b = m.right(
                                        total,
                                        offset + jj,
                                        m.left(n, x, &pairs),
                                        l,
                                        z,
                                    );
                                    if a != b {
                                        w.get_or_insert(format!(
                                            "n={n} x={} slot {t} j={jj} l={l}",
                                            o.spaces[n][x]
                                        ));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    rep.record("left-right compatibility", w);

    // Left associativity with operad composition.
    let mut w = None;
    for n in 1..=top.min(3) {
        for mm in 0..=top {
            if n + mm == 0 || n + mm - 1 > top {
                continue;
            }
            for i in 1..=n {
                for x in 0..o.card(n) {
                    for y in 0..o.card(mm) {
                        let comp = o.comp(n, i, x, mm, y);
                        for ms in compositions(n + mm - 1, top) {
                            let total: usize = ms.iter().sum();
                            if total > top {
                                continue;
                            }
                            for zs in index_tuples(
                                &ms.iter().map(|&q| m.card(q)).collect::<Vec<_>>(),
                            ) {
                                let pairs: Vec<(usize, usize)> =
                                    ms.iter().copied().zip(zs.iter().copied()).collect();
                                let a = m.left(n + mm - 1, comp, &pairs);
                                let inner_slice = &pairs[(i - 1)..(i - 1 + mm)];
                                let inner = m.left(mm, y, inner_slice);
                                let inner_arity: usize =
                                    inner_slice.iter().map(|&(q, _)| q).sum();
                                let mut outer = Vec::new();
                                outer.extend_from_slice(&pairs[..(i - 1)]);
                                outer.push((inner_arity, inner));
                                outer.extend_from_slice(&pairs[(i - 1 + mm)..]);
                                let b = m.left(n, x, &outer);
                                if a != b {
                                    w.get_or_insert(format!(
                                        "n={n} m={mm} i={i} x={} y={}",
                                        o.spaces[n][x], o.spaces[mm][y]
                                    ));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    rep.record("left associativity", w);
    rep
}

// ---------------------------------------------------------------------------
// infinitesimal bimodules

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FinIbimodule {
    pub name: String,
    pub max_arity: usize,
    pub spaces: Vec<Vec<String>>,
    pub operad: FinOperad,
    /// (n, theta in O(n), i, m, y in N(m)) -> element of N(n+m-1).
    pub ileft: BTreeMap<(usize, usize, usize, usize, usize), usize>,
    /// (n, y in N(n), i, m, x in O(m)) -> element of N(n+m-1).
    pub iright: BTreeMap<(usize, usize, usize, usize, usize), usize>,
    pub sigma: BTreeMap<(usize, usize, Vec<usize>), usize>,
}

impl FinIbimodule {
    pub fn card(&self, n: usize) -> usize {
        self.spaces.get(n).map_or(0, |s| s.len())
    }

    pub fn index(&self, n: usize, id: &str) -> Result<usize, AlgebraError> {
        self.spaces
            .get(n)
            .and_then(|s| s.iter().position(|e| e == id))
            .ok_or_else(|| AlgebraError::UnknownElement(id.to_string(), n))
    }

    /// theta o_i y.
    pub fn ileft(&self, n: usize, theta: usize, i: usize, m: usize, y: usize) -> usize {
        *self
            .ileft
            .get(&(n, theta, i, m, y))
            .unwrap_or_else(|| panic!("missing ileft ({n},{theta},{i},{m},{y}) in {}", self.name))
    }

    /// y o^i x.
    pub fn iright(&self, n: usize, y: usize, i: usize, m: usize, x: usize) -> usize {
        *self
            .iright
            .get(&(n, y, i, m, x))
            .unwrap_or_else(|| panic!("missing iright ({n},{y},{i},{m},{x}) in {}", self.name))
    }

    pub fn sigma(&self, n: usize, x: usize, tau: &[usize]) -> usize {
        *self
            .sigma
            .get(&(n, x, tau.to_vec()))
            .unwrap_or_else(|| panic!("missing ibimodule sigma ({n},{x},{tau:?})"))
    }
}

/// The infinitesimal bimodule induced by a bimodule map eta: O -> M
/// (per arity, element of M for each element of O): the infinitesimal
/// left action pads the other inputs with eta(unit).
pub fn induced_ibimodule(
    m: &FinBimodule,
    eta: &[Vec<usize>],
) -> Result<FinIbimodule, AlgebraError> {
    let o = &m.operad;
    let top = m.max_arity;
    let eta_unit = eta[1][o.unit];
    let mut ileft = BTreeMap::new();
    for n in 1..=top + 1 {
        for mm in 0..=top {
            if n + mm == 0 || n + mm - 1 > top {
                continue;
            }
            if n > o.max_arity {
                continue;
            }
            for i in 1..=n {
                for theta in 0..o.card(n) {
                    for y in 0..m.card(mm) {
                        let mut ys: Vec<(usize, usize)> = vec![(1, eta_unit); n];
                        ys[i - 1] = (mm, y);
                        let z = m.left(n, theta, &ys);
                        ileft.insert((n, theta, i, mm, y), z);
                    }
                }
            }
        }
    }
    Ok(FinIbimodule {
        name: m.name.clone(),
        max_arity: top,
        spaces: m.spaces.clone(),
        operad: o.clone(),
        ileft,
        iright: m.right.clone(),
        sigma: m.sigma.clone(),
    })
}

/// The operad as an infinitesimal bimodule over itself.  The operad
/// should carry tables one arity above `up_to` so that the
/// infinitesimal left action by O(up_to + 1) at arity 0 is available.
pub fn operad_as_ibimodule(o: &FinOperad) -> FinIbimodule {
    let top = o.max_arity;
    let mut ileft = BTreeMap::new();
    let mut iright = BTreeMap::new();
    for (&(n, i, x, m, y), &z) in &o.comp {
        ileft.insert((n, x, i, m, y), z);
        iright.insert((n, x, i, m, y), z);
    }
    FinIbimodule {
        name: o.name.clone(),
        max_arity: top,
        spaces: o.spaces.clone(),
        operad: o.clone(),
        ileft,
        iright,
        sigma: o.sigma.clone(),
    }
}

/// Validates the infinitesimal bimodule axioms exhaustively.
pub fn validate_ibimodule(nb: &FinIbimodule, up_to: usize) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let o = &nb.operad;
    let top = up_to.min(nb.max_arity);

    let mut w = None;
    for n in 0..=top {
        for y in 0..nb.card(n) {
            if nb.ileft(1, o.unit, 1, n, y) != y {
                w.get_or_insert(format!("unit o_1 {} != it", nb.spaces[n][y]));
            }
        }
    }
    rep.record("infinitesimal left unit", w);

    let mut w = None;
    for n in 1..=top {
        for i in 1..=n {
            for y in 0..nb.card(n) {
                if nb.iright(n, y, i, 1, o.unit) != y {
                    w.get_or_insert(format!("{} o^{i} unit != it", nb.spaces[n][y]));
                }
            }
        }
    }
    rep.record("infinitesimal right unit", w);

    // theta o_i (theta' o_j y) = (theta o_i theta') o_{i+j-1} y.
    let mut w = None;
    for n in 1..=top {
        for np in 1..=top {
            if n + np - 1 > o.max_arity {
                continue;
            }
            for mm in 0..=top {
                if n + np + mm < 2 || n + np + mm - 2 > top || np + mm - 1 > top {
                    continue;
                }
                for i in 1..=n {
                    for j in 1..=np {
                        for th in 0..o.card(n) {
                            for tp in 0..o.card(np) {
                                for y in 0..nb.card(mm) {
                                    let a = nb.ileft(
                                        n,
                                        th,
                                        i,
                                        np + mm - 1,
                                        nb.ileft(np, tp, j, mm, y),
                                    );
                                    let b = nb.ileft(
                                        n + np - 1,
                                        o.comp(n, i, th, np, tp),
                                        i + j - 1,
                                        mm,
                                        y,
                                    );
                                    if a != b {
                                        w.get_or_insert(format!(
                                            "n={n} n'={np} m={mm} i={i} j={j}"
                                        ));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    rep.record("left-left associativity", w);

    // (theta o_i y) o^{i+j-1} x = theta o_i (y o^j x).
    let mut w = None;
    for n in 1..=top {
        for mm in 1..=top {
            for l in 0..=top {
                if n + mm - 1 > top || n + mm + l - 2 > top {
                    continue;
                }
                for i in 1..=n {
                    for j in 1..=mm {
                        for th in 0..o.card(n) {
                            for y in 0..nb.card(mm) {
                                for x in 0..o.card(l) {
                                    let a = nb.iright(
                                        n + mm - 1,
                                        nb.ileft(n, th, i, mm, y),
                                        i + j - 1,
                                        l,
                                        x,
                                    );
                                    let b = nb.ileft(
                                        n,
                                        th,
                                        i,
                                        mm + l - 1,
                                        nb.iright(mm, y, j, l, x),
                                    );
                                    if a != b {
                                        w.get_or_insert(format!(
                                            "n={n} m={mm} l={l} i={i} j={j}"
                                        ));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    rep.record("left-right compatibility", w);

    // Right sequential and parallel associativity on N.
    let mut w = None;
    for n in 1..=top {
        for mm in 1..=top {
            for l in 0..=top {
                if n + mm - 1 > top || n + l - 1 > top || n + mm + l - 2 > top {
                    continue;
                }
                for i in 1..=n {
                    for j in 1..=mm {
                        for y in 0..nb.card(n) {
                            for x in 0..o.card(mm) {
                                for z in 0..o.card(l) {
                                    let a = nb.iright(
                                        n + mm - 1,
                                        nb.iright(n, y, i, mm, x),
                                        i + j - 1,
                                        l,
                                        z,
                                    );
                                    let b = nb.iright(
                                        n,
                                        y,
                                        i,
                                        mm + l - 1,
                                        o.comp(mm, j, x, l, z),
                                    );
                                    if a != b {
                                        w.get_or_insert(format!(
                                            "seq n={n} m={mm} l={l} i={i} j={j}"
                                        ));
                                    }
                                }
                            }
                        }
                    }
                }
                for i in 1..=n {
                    for j in (i + 1)..=n {
                        for y in 0..nb.card(n) {
                            for x in 0..o.card(mm) {
                                for z in 0..o.card(l) {
                                    let a = nb.iright(
                                        n + mm - 1,
                                        nb.iright(n, y, i, mm, x),
                                        j + mm - 1,
                                        l,
                                        z,
                                    );
                                    let b = nb.iright(
                                        n + l - 1,
                                        nb.iright(n, y, j, l, z),
                                        i,
                                        mm,
                                        x,
                                    );
                                    if a != b {
                                        w.get_or_insert(format!(
                                            "par n={n} m={mm} l={l} i={i} j={j}"
                                        ));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    rep.record("right associativity", w);
    rep
}

// ---------------------------------------------------------------------------
// truncation

pub fn truncate_operad(o: &FinOperad, k: usize) -> FinOperad {
    let k = k.min(o.max_arity);
    let spaces = o.spaces[..=k].to_vec();
    let comp = o
        .comp
        .iter()
        .filter(|(&(n, _, _, m, _), _)| n <= k && m <= k && n + m - 1 <= k)
        .map(|(key, &v)| (*key, v))
        .collect();
    let sigma = o
        .sigma
        .iter()
        .filter(|((n, _, _), _)| *n <= k)
        .map(|(key, &v)| (key.clone(), v))
        .collect();
    FinOperad {
        name: o.name.clone(),
        max_arity: k,
        spaces,
        unit: o.unit,
        comp,
        sigma,
    }
}

pub fn truncate_bimodule(m: &FinBimodule, k: usize) -> FinBimodule {
    let k = k.min(m.max_arity);
    let spaces = m.spaces[..=k].to_vec();
    let left = m
        .left
        .iter()
        .filter(|((n, _, ys), _)| {
            *n <= m.operad.max_arity && ys.iter().map(|&(q, _)| q).sum::<usize>() <= k
        })
        .map(|(key, &v)| (key.clone(), v))
        .collect();
    let right = m
        .right
        .iter()
        .filter(|(&(n, _, _, mm, _), _)| n <= k && n + mm - 1 <= k)
        .map(|(key, &v)| (*key, v))
        .collect();
    let sigma = m
        .sigma
        .iter()
        .filter(|((n, _, _), _)| *n <= k)
        .map(|(key, &v)| (key.clone(), v))
        .collect();
    FinBimodule {
        name: m.name.clone(),
        max_arity: k,
        spaces,
        operad: m.operad.clone(),
        left,
        right,
        sigma,
    }
}

pub fn truncate_ibimodule(nb: &FinIbimodule, k: usize) -> FinIbimodule {
    let k = k.min(nb.max_arity);
    let spaces = nb.spaces[..=k].to_vec();
    let ileft = nb
        .ileft
        .iter()
        .filter(|(&(n, _, _, m, _), _)| m <= k && n + m - 1 <= k)
        .map(|(key, &v)| (*key, v))
        .collect();
    let iright = nb
        .iright
        .iter()
        .filter(|(&(n, _, _, m, _), _)| n <= k && n + m - 1 <= k && m <= nb.operad.max_arity)
        .map(|(key, &v)| (*key, v))
        .collect();
    let sigma = nb
        .sigma
        .iter()
        .filter(|((n, _, _), _)| *n <= k)
        .map(|(key, &v)| (key.clone(), v))
        .collect();
    FinIbimodule {
        name: nb.name.clone(),
        max_arity: k,
        spaces,
        operad: nb.operad.clone(),
        ileft,
        iright,
        sigma,
    }
}

// ---------------------------------------------------------------------------
// Lambda sequences and matching objects

/// A sequence with restriction maps along order-preserving injections,
/// encoded by the (sorted, 1-based) image subset.
#[derive(Clone, Debug)]
pub struct LambdaSeq {
    pub name: String,
    pub max_arity: usize,
    pub spaces: Vec<Vec<String>>,
    /// (r, image subset of 1..=r) -> per-element image index.
    pub restrict: BTreeMap<(usize, Vec<usize>), Vec<usize>>,
}

impl LambdaSeq {
    pub fn restrict(&self, r: usize, image: &[usize], x: usize) -> usize {
        self.restrict[&(r, image.to_vec())][x]
    }
}

fn subsets(r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 0u64..(1u64 << r) {
        out.push((1..=r).filter(|i| mask & (1 << (i - 1)) != 0).collect());
    }
    out
}

/// The Lambda-sequence underlying a reduced operad: restriction
/// composes with the arity-zero element at the missing inputs.
pub fn lambda_seq_from_operad(o: &FinOperad) -> LambdaSeq {
    assert!(o.is_reduced(), "Lambda sequence needs a reduced operad");
    let star0 = 0usize;
    let mut restrict = BTreeMap::new();
    for r in 0..=o.max_arity {
        for image in subsets(r) {
            let mut maps = Vec::new();
            for x in 0..o.card(r) {
                let mut acc = x;
                let mut arity = r;
                for j in (1..=r).rev() {
                    if !image.contains(&j) {
                        acc = o.comp(arity, j, acc, 0, star0);
                        arity -= 1;
                    }
                }
                maps.push(acc);
            }
            restrict.insert((r, image), maps);
        }
    }
    LambdaSeq {
        name: o.name.clone(),
        max_arity: o.max_arity,
        spaces: o.spaces.clone(),
        restrict,
    }
}

/// An element of the matching object: a compatible family over the
/// proper subsets of 1..=r.
pub type MatchingFamily = BTreeMap<Vec<usize>, usize>;

/// The matching object of a Lambda-sequence at arity r: the limit over
/// proper order-preserving injections into r.
pub fn matching_object(x: &LambdaSeq, r: usize) -> Vec<MatchingFamily> {
    let proper: Vec<Vec<usize>> = subsets(r).into_iter().filter(|s| s.len() < r).collect();
    let tops: Vec<Vec<usize>> = proper.iter().filter(|s| s.len() + 1 == r).cloned().collect();
    if r == 0 {
        return Vec::new();
    }
    // Restriction of an element known on `sup` down to `sub`, both as
    // subsets of 1..=r: the relative injection picks the positions of
    // sub within sup.
    let relative = |sup: &[usize], sub: &[usize], v: usize| -> usize {
        let positions: Vec<usize> = sub
            .iter()
            .map(|s| sup.iter().position(|t| t == s).unwrap() + 1)
            .collect();
        x.restrict(sup.len(), &positions, v)
    };
    let mut out = Vec::new();
    let cards: Vec<usize> = tops.iter().map(|s| x.spaces[s.len()].len()).collect();
    for assignment in index_tuples(&cards) {
        let mut family: MatchingFamily = BTreeMap::new();
        let mut consistent = true;
        'fill: for s in &proper {
            let mut value: Option<usize> = None;
            for (t, top) in tops.iter().enumerate() {
                if s.iter().all(|e| top.contains(e)) {
                    let v = relative(top, s, assignment[t]);
                    if let Some(prev) = value {
                        if prev != v {
                            consistent = false;
                            break 'fill;
                        }
                    } else {
                        value = Some(v);
                    }
                }
            }
            family.insert(s.clone(), value.expect("every proper subset has a top"));
        }
        if consistent {
            out.push(family);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// set diagrams and rho

/// A finite-set-valued functor over a relation category.
#[derive(Clone, Debug)]
pub struct SetDiagram {
    pub base: RelCategory,
    pub values: Vec<Vec<String>>,
    /// Function for each surviving non-identity arrow, as index maps.
    pub arrows: BTreeMap<(usize, usize), Vec<usize>>,
}

impl SetDiagram {
    pub fn arrow(&self, i: usize, j: usize) -> &[usize] {
        &self.arrows[&(i, j)]
    }

    /// Exhaustive functoriality check.
    pub fn functorial(&self) -> bool {
        let n = self.base.len();
        for i in 0..n {
            for m in 0..n {
                for j in 0..n {
                    if i != m
                        && m != j
                        && i != j
                        && self.base.has_arrow(i, m)
                        && self.base.has_arrow(m, j)
                        && self.base.has_arrow(i, j)
                    {
                        let via: Vec<usize> = self
                            .arrow(i, m)
                            .iter()
                            .map(|&a| self.arrow(m, j)[a])
                            .collect();
                        if via != self.arrow(i, j) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// Restricts to a subcategory whose objects are named like ours.
    pub fn restrict_to(&self, sub: &RelCategory) -> SetDiagram {
        let idx: Vec<usize> = sub
            .objects
            .iter()
            .map(|o| self.base.index_of(o).expect("subcategory object"))
            .collect();
        let values: Vec<Vec<String>> = idx.iter().map(|&i| self.values[i].clone()).collect();
        let mut arrows = BTreeMap::new();
        for a in 0..sub.len() {
            for b in 0..sub.len() {
                if a != b && sub.has_arrow(a, b) {
                    arrows.insert((a, b), self.arrows[&(idx[a], idx[b])].clone());
                }
            }
        }
        SetDiagram { base: sub.clone(), values, arrows }
    }
}

/// Labellings of a pearled tree: the pearl by N, the other vertices by
/// the operad.  Returned as a tuple of per-vertex element indices.
fn labellings(nb: &FinIbimodule, t: &MarkedTree) -> Vec<Vec<usize>> {
    let base = t.base();
    let pearls = t.pearls();
    let cards: Vec<usize> = (0..base.n_vertices())
        .map(|v| {
            if pearls.contains(&v) {
                nb.card(base.arity(v))
            } else {
                nb.operad.card(base.arity(v))
            }
        })
        .collect();
    index_tuples(&cards)
}

fn label_id(nb: &FinIbimodule, t: &MarkedTree, labels: &[usize]) -> String {
    let base = t.base();
    let pearls = t.pearls();
    let parts: Vec<String> = (0..base.n_vertices())
        .map(|v| {
            let id = if pearls.contains(&v) {
                &nb.spaces[base.arity(v)][labels[v]]
            } else {
                &nb.operad.spaces[base.arity(v)][labels[v]]
            };
            format!("{v}:{id}")
        })
        .collect();
    parts.join(";")
}

/// Applies the contraction of the inner edge `(a, b)` of the canonical
/// representative `t` to a labelling, returning the canonical target
/// code and labelling.
pub fn contract_labelled(
    nb: &FinIbimodule,
    t: &MarkedTree,
    labels: &[usize],
    a: usize,
    b: usize,
) -> (String, Vec<usize>) {
    let base = t.base();
    let pearls = t.pearls();
    let pos = base
        .children(a)
        .iter()
        .position(|c| *c == crate::trees::Child::Vertex(b))
        .expect("inner edge")
        + 1;
    let na = base.arity(a);
    let mb = base.arity(b);
    let merged = if pearls.contains(&b) {
        nb.ileft(na, labels[a], pos, mb, labels[b])
    } else if pearls.contains(&a) {
        nb.iright(na, labels[a], pos, mb, labels[b])
    } else {
        nb.operad.comp(na, pos, labels[a], mb, labels[b])
    };
    let (new_base, map) = contract_edge_raw(base, a, b).expect("inner edge");
    let new_pearls: std::collections::BTreeSet<usize> =
        pearls.iter().map(|&p| map[p]).collect();
    let kind = t.kind();
    let marked = MarkedTree::from_parts(new_base, new_pearls, kind).expect("contraction valid");
    let mut new_labels = vec![usize::MAX; marked.base().n_vertices()];
    for v in 0..base.n_vertices() {
        if v == b {
            continue;
        }
        new_labels[map[v]] = if v == a { merged } else { labels[v] };
    }
    // Canonicalize and adjust labels by the child reorderings.
    let canon = canonicalize(&marked);
    let mut out = vec![usize::MAX; new_labels.len()];
    let target = &canon.class.representative;
    let target_pearls = target.pearls();
    for (v, &label) in new_labels.iter().enumerate() {
        let perm = &canon.child_perms[v];
        let nv = canon.vertex_map[v];
        let adjusted = if perm.iter().enumerate().all(|(j, &x)| j == x) {
            label
        } else if target_pearls.contains(&nv) {
            nb.sigma(perm.len(), label, perm)
        } else {
            nb.operad.sigma(perm.len(), label, perm)
        };
        out[nv] = adjusted;
    }
    (canon.class.code, out)
}

/// The diagram rho_k^N over Psi_k: each tree maps to the set of its
/// labellings, and edge contractions act by the (i)-compositions.
pub fn rho_diagram(nb: &FinIbimodule, psi: &PsiCat) -> SetDiagram {
    let n_obj = psi.cat.len();
    let all_labels: Vec<Vec<Vec<usize>>> = psi
        .classes
        .iter()
        .map(|c| labellings(nb, &c.representative))
        .collect();
    let values: Vec<Vec<String>> = psi
        .classes
        .iter()
        .zip(&all_labels)
        .map(|(c, ls)| {
            ls.iter().map(|l| label_id(nb, &c.representative, l)).collect()
        })
        .collect();
    // Single contractions first, then compose along cover paths.
    let mut arrows: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    let covers = psi.cat.covers();
    for &(i, j) in &covers {
        let t = &psi.classes[i].representative;
        // Any inner edge whose contraction lands in j gives the arrow;
        // functoriality of rho makes the choice immaterial, which the
        // `functorial` check confirms.
        let mut map: Option<Vec<usize>> = None;
        if all_labels[i].is_empty() {
            arrows.insert((i, j), Vec::new());
            continue;
        }
        for (a, b) in t.base().inner_edges() {
            let probe = contract_labelled(nb, t, &all_labels[i][0], a, b);
            if probe.0 != psi.cat.objects[j] {
                continue;
            }
            let full: Vec<usize> = all_labels[i]
                .iter()
                .map(|l| {
                    let (_, target_labels) = contract_labelled(nb, t, l, a, b);
                    all_labels[j]
                        .iter()
                        .position(|x| x == &target_labels)
                        .expect("contracted labelling exists")
                })
                .collect();
            map = Some(full);
            break;
        }
        arrows.insert((i, j), map.expect("some edge contraction realizes the cover"));
    }
    // Close under composition along covers.
    loop {
        let mut changed = false;
        for i in 0..n_obj {
            for j in 0..n_obj {
                if i == j || !psi.cat.has_arrow(i, j) || arrows.contains_key(&(i, j)) {
                    continue;
                }
                for &(_a, m) in covers.iter().filter(|&&(a, _)| a == i) {
                    if m == j || !psi.cat.has_arrow(m, j) {
                        continue;
                    }
                    if let (Some(f), Some(g)) = (arrows.get(&(i, m)), arrows.get(&(m, j))) {
                        let comp: Vec<usize> = f.iter().map(|&x| g[x]).collect();
                        arrows.insert((i, j), comp);
                        changed = true;
                        break;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    SetDiagram { base: psi.cat.clone(), values, arrows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psi::{build_psi, Selector};

    #[test]
    fn assoc_sizes() {
        let o = builtin(Builtin::Assoc, 3);
        assert_eq!(
            (0..=3).map(|n| o.card(n)).collect::<Vec<_>>(),
            vec![1, 1, 2, 6]
        );
        assert!(o.is_reduced());
        assert!(o.is_doubly_reduced());
    }

    #[test]
    fn lambda_spaces() {
        let o = builtin(Builtin::Lambda, 3);
        assert_eq!(o.card(0), 1);
        assert_eq!(o.card(1), 1);
        assert_eq!(o.card(2), 0);
        assert!(validate_operad(&o, 3).ok());
    }

    #[test]
    fn builtins_validate() {
        for b in [Builtin::Comm, Builtin::Assoc] {
            let rep = validate_operad(&builtin(b, 4), 4);
            let bad: Vec<_> = rep.checks.iter().filter(|c| !c.ok).collect();
            assert!(bad.is_empty(), "{b:?}: {bad:?}");
        }
    }

    #[test]
    fn corrupted_assoc_detected() {
        let mut o = builtin(Builtin::Assoc, 3);
        // Corrupt one composition entry.
        let key = (2usize, 1usize, 0usize, 2usize, 0usize);
        let old = o.comp[&key];
        o.comp.insert(key, (old + 1) % o.card(3));
        let rep = validate_operad(&o, 3);
        assert!(!rep.ok());
        assert!(rep.checks.iter().any(|c| !c.ok && c.witness.is_some()));
    }

    #[test]
    fn missing_entry_reported() {
        let mut o = builtin(Builtin::Assoc, 3);
        o.comp.remove(&(2, 1, 0, 2, 0));
        let rep = validate_operad(&o, 3);
        assert!(!rep.ok());
        let tot = rep.checks.iter().find(|c| c.axiom == "totality").unwrap();
        assert!(!tot.ok);
        assert!(tot.witness.as_ref().unwrap().contains("comp entry"));
    }

    #[test]
    fn bimodule_over_self_validates() {
        for b in [Builtin::Comm, Builtin::Assoc] {
            let o = builtin(b, 3);
            let m = operad_as_bimodule(&o);
            let rep = validate_bimodule(&m, 3);
            assert!(rep.ok(), "{b:?}: {:?}", rep.checks);
        }
    }

    #[test]
    fn ibimodule_over_self_validates() {
        for b in [Builtin::Comm, Builtin::Assoc] {
            let o = builtin(b, 4);
            let nb = operad_as_ibimodule(&o);
            let rep = validate_ibimodule(&nb, 4);
            assert!(rep.ok(), "{b:?}: {:?}", rep.checks);
        }
    }

    #[test]
    fn induced_ibimodule_matches_operad() {
        let o = builtin(Builtin::Assoc, 3);
        let m = operad_as_bimodule(&o);
        let eta: Vec<Vec<usize>> = (0..=3).map(|n| (0..o.card(n)).collect()).collect();
        let induced = induced_ibimodule(&m, &eta).unwrap();
        let direct = operad_as_ibimodule(&o);
        for (key, v) in &induced.ileft {
            assert_eq!(direct.ileft.get(key), Some(v), "{key:?}");
        }
        // x o_1 y = gamma_l(x; y, eta(unit)) for x, y in As(2).
        let x = 0;
        let y = 1;
        let via_left = m.left(2, x, &[(2, y), (1, 0)]);
        assert_eq!(induced.ileft(2, x, 1, 2, y), via_left);
    }

    #[test]
    fn truncation_is_idempotent() {
        let o = builtin(Builtin::Assoc, 4);
        let t2 = truncate_operad(&o, 2);
        assert_eq!(t2.max_arity, 2);
        assert!(t2.comp.keys().all(|&(n, _, _, m, _)| n + m - 1 <= 2));
        assert!(t2.comp.contains_key(&(2, 1, 0, 1, 0)));
        let t2_again = truncate_operad(&truncate_operad(&o, 3), 2);
        assert_eq!(t2, t2_again);
        // T_1 keeps only arity <= 1 compositions.
        let t1 = truncate_operad(&o, 1);
        assert!(t1.comp.keys().all(|&(n, _, _, m, _)| n == 1 && m <= 1));
    }

    #[test]
    fn matching_objects() {
        let assoc = lambda_seq_from_operad(&builtin(Builtin::Assoc, 3));
        assert_eq!(matching_object(&assoc, 2).len(), 1);
        assert_eq!(matching_object(&assoc, 3).len(), 8);
        let comm = lambda_seq_from_operad(&builtin(Builtin::Comm, 5));
        for r in 1..=5 {
            assert_eq!(matching_object(&comm, r).len(), 1, "r = {r}");
        }
    }

    #[test]
    fn lambda_seq_functorial() {
        let x = lambda_seq_from_operad(&builtin(Builtin::Assoc, 4));
        // u^* v^* = (vu)^* on a sample: restrict 4 -> {1,3,4} -> first
        // two positions, versus directly 4 -> {1,3}.
        for e in 0..x.spaces[4].len() {
            let step1 = x.restrict(4, &[1, 3, 4], e);
            let step2 = x.restrict(3, &[1, 2], step1);
            let direct = x.restrict(4, &[1, 3], e);
            assert_eq!(step2, direct);
        }
    }

    #[test]
    fn rho_diagram_on_boundary_u() {
        let o = builtin(Builtin::Assoc, 4);
        let nb = operad_as_ibimodule(&o);
        let psi = build_psi(2);
        let rho = rho_diagram(&nb, &psi);
        assert!(rho.functorial());
        let bu = psi.restrict(Selector::BoundaryU).unwrap();
        let sub = rho.restrict_to(&bu);
        let mut sizes: Vec<usize> = sub.values.iter().map(|v| v.len()).collect();
        sizes.sort();
        assert_eq!(sizes, vec![2, 2, 4, 4, 6]);
        assert!(sub.functorial());
    }

    #[test]
    fn rho_for_lambda_operad_is_empty_off_corollas() {
        let o = builtin(Builtin::Lambda, 4);
        let nb = operad_as_ibimodule(&o);
        let psi = build_psi(2);
        let rho = rho_diagram(&nb, &psi);
        for (i, class) in psi.classes.iter().enumerate() {
            if class.representative.base().n_vertices() > 1 {
                assert!(rho.values[i].is_empty(), "{}", class.code);
            }
        }
    }

    #[test]
    fn rho_functorial_k3() {
        let o = builtin(Builtin::Assoc, 5);
        let nb = operad_as_ibimodule(&o);
        let psi = build_psi(3);
        let rho = rho_diagram(&nb, &psi);
        assert!(rho.functorial());
    }
}
