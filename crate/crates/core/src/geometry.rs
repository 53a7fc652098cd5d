//! Linear and cyclic bases of the preference-profile space.
//!
//! A profile `nu` is stored only for ordered pairs `i < j`, in lexicographic
//! order `(0,1), (0,2), ..., (K-2,K-1)`. Any reference to `nu_ji` with `j > i`
//! means `-nu_ij`. Items are 0-based in the API; `Display` and serde use the
//! 1-based labels that appear in data files and reports.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{self, pinv};

/// Relative tolerance used to decide whether an entry of a profile is zero.
pub const ZERO_RTOL: f64 = 1e-9;

/// Relative residual below which a vector is considered to lie in a span
/// during minimal-model enumeration.
pub const ORACLE_SPAN_RTOL: f64 = 1e-8;

/// Scale-aware zero threshold `1e-9 * (1 + max|x|)`.
pub fn zero_tolerance(v: &DVector<f64>) -> f64 {
    ZERO_RTOL * (1.0 + v.amax())
}

pub fn num_pairs(k: usize) -> usize {
    k * k.saturating_sub(1) / 2
}

pub fn num_triads(k: usize) -> usize {
    if k < 3 {
        0
    } else {
        k * (k - 1) * (k - 2) / 6
    }
}

/// Dimension of the cyclic subspace, `(K-1)(K-2)/2`.
pub fn cyclic_dim(k: usize) -> usize {
    num_pairs(k.saturating_sub(1))
}

fn choose2(n: usize) -> usize {
    num_pairs(n)
}

fn choose3(n: usize) -> usize {
    num_triads(n)
}

/// An unordered pair of items stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
}

impl Pair {
    pub fn new(i: usize, j: usize) -> Result<Self> {
        if i >= j {
            return Err(Error::IndexOutOfRange(format!(
                "pair ({}, {}) must satisfy i < j",
                i + 1,
                j + 1
            )));
        }
        Ok(Pair { i, j })
    }

    /// Builds a pair from 1-based labels.
    pub fn one_based(i: usize, j: usize) -> Self {
        assert!(i >= 1 && i < j, "one-based pair needs 1 <= i < j");
        Pair { i: i - 1, j: j - 1 }
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.i + 1, self.j + 1)
    }
}

impl Serialize for Pair {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.i + 1, self.j + 1].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pair {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [i, j] = <[usize; 2]>::deserialize(d)?;
        if i == 0 || i >= j {
            return Err(serde::de::Error::custom("pair needs 1 <= i < j"));
        }
        Ok(Pair { i: i - 1, j: j - 1 })
    }
}

/// A triad of items stored with `i < j < k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triad {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl Triad {
    pub fn new(i: usize, j: usize, k: usize) -> Result<Self> {
        if !(i < j && j < k) {
            return Err(Error::IndexOutOfRange(format!(
                "triad ({}, {}, {}) must be strictly increasing",
                i + 1,
                j + 1,
                k + 1
            )));
        }
        Ok(Triad { i, j, k })
    }

    /// Builds a triad from 1-based labels.
    pub fn one_based(i: usize, j: usize, k: usize) -> Self {
        assert!(
            i >= 1 && i < j && j < k,
            "one-based triad needs 1 <= i < j < k"
        );
        Triad {
            i: i - 1,
            j: j - 1,
            k: k - 1,
        }
    }

    /// The three pairs `(i,j), (i,k), (j,k)`.
    pub fn pairs(&self) -> [Pair; 3] {
        [
            Pair {
                i: self.i,
                j: self.j,
            },
            Pair {
                i: self.i,
                j: self.k,
            },
            Pair {
                i: self.j,
                j: self.k,
            },
        ]
    }

    pub fn items(&self) -> [usize; 3] {
        [self.i, self.j, self.k]
    }

    /// Number of items shared with `other`.
    pub fn shared(&self, other: &Triad) -> usize {
        self.items()
            .iter()
            .filter(|x| other.items().contains(x))
            .count()
    }
}

impl fmt::Display for Triad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.i + 1, self.j + 1, self.k + 1)
    }
}

impl Serialize for Triad {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.i + 1, self.j + 1, self.k + 1].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Triad {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [i, j, k] = <[usize; 3]>::deserialize(d)?;
        if i == 0 || i >= j || j >= k {
            return Err(serde::de::Error::custom("triad needs 1 <= i < j < k"));
        }
        Ok(Triad {
            i: i - 1,
            j: j - 1,
            k: k - 1,
        })
    }
}

/// Lexicographic enumeration of the pairs of `K` items.
#[derive(Debug, Clone, PartialEq)]
pub struct PairIndexMap {
    k: usize,
    pairs: Vec<Pair>,
}

impl PairIndexMap {
    pub fn new(k: usize) -> Self {
        let mut pairs = Vec::with_capacity(num_pairs(k));
        for i in 0..k {
            for j in (i + 1)..k {
                pairs.push(Pair { i, j });
            }
        }
        PairIndexMap { k, pairs }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn pair(&self, row: usize) -> Pair {
        self.pairs[row]
    }

    /// Row of pair `(i, j)`, `i < j < K`.
    pub fn index(&self, p: Pair) -> usize {
        debug_assert!(p.i < p.j && p.j < self.k);
        p.i * self.k - p.i * (p.i + 1) / 2 + (p.j - p.i - 1)
    }

    /// Row and orientation sign for an arbitrary ordered pair `a != b`:
    /// `nu_ab = sign * nu[row]`.
    pub fn oriented(&self, a: usize, b: usize) -> (usize, f64) {
        if a < b {
            (self.index(Pair { i: a, j: b }), 1.0)
        } else {
            (self.index(Pair { i: b, j: a }), -1.0)
        }
    }

    /// `nu_ab` for any ordered pair of distinct items.
    pub fn value(&self, nu: &DVector<f64>, a: usize, b: usize) -> f64 {
        let (row, sign) = self.oriented(a, b);
        sign * nu[row]
    }
}

/// Lexicographic enumeration of the triads of `K` items.
#[derive(Debug, Clone, PartialEq)]
pub struct TriadIndexMap {
    k: usize,
    triads: Vec<Triad>,
}

impl TriadIndexMap {
    pub fn new(k: usize) -> Self {
        let mut triads = Vec::with_capacity(num_triads(k));
        for i in 0..k {
            for j in (i + 1)..k {
                for l in (j + 1)..k {
                    triads.push(Triad { i, j, k: l });
                }
            }
        }
        TriadIndexMap { k, triads }
    }

    pub fn len(&self) -> usize {
        self.triads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triads.is_empty()
    }

    pub fn triads(&self) -> &[Triad] {
        &self.triads
    }

    pub fn triad(&self, col: usize) -> Triad {
        self.triads[col]
    }

    /// Column of triad `t` in the lexicographic order.
    pub fn index(&self, t: Triad) -> usize {
        let k = self.k;
        debug_assert!(t.i < t.j && t.j < t.k && t.k < k);
        choose3(k) - choose3(k - t.i) + choose2(k - t.i - 1) - choose2(k - t.j) + (t.k - t.j - 1)
    }
}

#[derive(Debug)]
struct Projectors {
    linear: DMatrix<f64>,
    cyclic: DMatrix<f64>,
    c_pinv: DMatrix<f64>,
    b_pinv: DMatrix<f64>,
}

/// The linear basis `B` (pairs x items) and the cyclic spanning set `C`
/// (pairs x triads), with their index maps.
#[derive(Debug)]
pub struct BasisPair {
    k: usize,
    pairs: PairIndexMap,
    triads: TriadIndexMap,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    projectors: OnceLock<Projectors>,
}

impl Clone for BasisPair {
    fn clone(&self) -> Self {
        BasisPair {
            k: self.k,
            pairs: self.pairs.clone(),
            triads: self.triads.clone(),
            b: self.b.clone(),
            c: self.c.clone(),
            projectors: OnceLock::new(),
        }
    }
}

/// Builds `B` and `C` for `K` items.
///
/// `b_k(s,t) = 1(s = k) - 1(t = k)`; column `c_(i,j,k)` has `+1` at `(i,j)`
/// and `(j,k)` and `-1` at `(i,k)`.
pub fn build_bases(k: usize) -> Result<BasisPair> {
    BasisPair::new(k)
}

impl BasisPair {
    pub fn new(k: usize) -> Result<Self> {
        if k < 3 {
            return Err(Error::InvalidDimension(k));
        }
        let pairs = PairIndexMap::new(k);
        let triads = TriadIndexMap::new(k);
        let mut b = DMatrix::zeros(pairs.len(), k);
        for (row, p) in pairs.pairs().iter().enumerate() {
            b[(row, p.i)] = 1.0;
            b[(row, p.j)] = -1.0;
        }
        let mut c = DMatrix::zeros(pairs.len(), triads.len());
        for (col, t) in triads.triads().iter().enumerate() {
            c[(pairs.index(Pair { i: t.i, j: t.j }), col)] = 1.0;
            c[(pairs.index(Pair { i: t.j, j: t.k }), col)] = 1.0;
            c[(pairs.index(Pair { i: t.i, j: t.k }), col)] = -1.0;
        }
        Ok(BasisPair {
            k,
            pairs,
            triads,
            b,
            c,
            projectors: OnceLock::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn num_triads(&self) -> usize {
        self.triads.len()
    }

    pub fn pair_map(&self) -> &PairIndexMap {
        &self.pairs
    }

    pub fn triad_map(&self) -> &TriadIndexMap {
        &self.triads
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn check_triad(&self, t: Triad) -> Result<()> {
        if t.i < t.j && t.j < t.k && t.k < self.k {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange(format!(
                "triad {} with K = {}",
                t, self.k
            )))
        }
    }

    /// Column `c_t` of `C`.
    pub fn triad_column(&self, t: Triad) -> DVector<f64> {
        self.c.column(self.triads.index(t)).into_owned()
    }

    /// The sub-matrix `C_s` whose columns are the given triads, in order.
    pub fn triad_columns(&self, triads: &[Triad]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.num_pairs(), triads.len());
        for (c, t) in triads.iter().enumerate() {
            m.set_column(c, &self.c.column(self.triads.index(*t)));
        }
        m
    }

    fn projectors(&self) -> &Projectors {
        self.projectors.get_or_init(|| {
            // (B'B)^+ B' and (C'C)^+ C' are the pseudoinverses of B and C.
            let btb = self.b.transpose() * &self.b;
            let b_pinv = pinv(&btb) * self.b.transpose();
            let ctc = self.c.transpose() * &self.c;
            let c_pinv = pinv(&ctc) * self.c.transpose();
            let linear = &self.b * &b_pinv;
            let cyclic = &self.c * &c_pinv;
            Projectors {
                linear,
                cyclic,
                c_pinv,
                b_pinv,
            }
        })
    }

    /// Orthogonal projector onto `span(B)`.
    pub fn linear_projector(&self) -> &DMatrix<f64> {
        &self.projectors().linear
    }

    /// Orthogonal projector `C (C'C)^+ C'` onto `span(C)`.
    pub fn cyclic_projector(&self) -> &DMatrix<f64> {
        &self.projectors().cyclic
    }

    /// `(C'C)^+ C'`: maps a profile to the minimum-norm triad coefficients.
    pub fn c_pinv(&self) -> &DMatrix<f64> {
        &self.projectors().c_pinv
    }

    /// `(B'B)^+ B'`: maps a profile to sum-zero merits.
    pub fn b_pinv(&self) -> &DMatrix<f64> {
        &self.projectors().b_pinv
    }

    fn check_len(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.num_pairs() {
            return Err(Error::DimensionMismatch {
                expected: self.num_pairs(),
                actual: v.len(),
            });
        }
        Ok(())
    }
}

/// A profile split into its linear and cyclic components.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub nu: DVector<f64>,
    pub nu_linear: DVector<f64>,
    pub nu_cyclic: DVector<f64>,
    /// Sum-zero merits with `nu_linear = B mu`.
    pub mu: DVector<f64>,
    /// Minimum-norm coefficients with `nu_cyclic = C gamma`.
    pub gamma_minnorm: DVector<f64>,
}

/// Orthogonal decomposition `nu = nu_linear + nu_cyclic`.
pub fn decompose(nu: &DVector<f64>, bases: &BasisPair) -> Result<Profile> {
    bases.check_len(nu)?;
    let nu_linear = bases.linear_projector() * nu;
    let nu_cyclic = bases.cyclic_projector() * nu;
    let ones = DVector::from_element(nu.len(), 1.0);
    let mu = merits_weighted(nu, &ones, bases)?;
    let gamma_minnorm = bases.c_pinv() * nu;
    Ok(Profile {
        nu: nu.clone(),
        nu_linear,
        nu_cyclic,
        mu,
        gamma_minnorm,
    })
}

/// Weighted merits `(B' W B)^+ B' W nu` for nonnegative pair weights `W`.
///
/// With uniform weights this is the projection-based merit vector; with
/// `W = D/n` it is the limit of the reduced-model estimator.
pub fn merits_weighted(
    nu: &DVector<f64>,
    weights: &DVector<f64>,
    bases: &BasisPair,
) -> Result<DVector<f64>> {
    bases.check_len(nu)?;
    bases.check_len(weights)?;
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidArgument(
            "pair weights must be finite and nonnegative".into(),
        ));
    }
    let b = bases.b();
    let wb = DMatrix::from_fn(b.nrows(), b.ncols(), |r, c| weights[r] * b[(r, c)]);
    let gram = b.transpose() * &wb;
    Ok(pinv(&gram) * (wb.transpose() * nu))
}

/// Cyclic residual `nu_ij + nu_jk + nu_ki` of a triad.
pub fn triad_residual(nu: &DVector<f64>, k: usize, triad: Triad) -> Result<f64> {
    if !(triad.i < triad.j && triad.j < triad.k && triad.k < k) {
        return Err(Error::IndexOutOfRange(format!(
            "triad {} with K = {}",
            triad, k
        )));
    }
    if nu.len() != num_pairs(k) {
        return Err(Error::DimensionMismatch {
            expected: num_pairs(k),
            actual: nu.len(),
        });
    }
    let map = PairIndexMap::new(k);
    Ok(map.value(nu, triad.i, triad.j)
        + map.value(nu, triad.j, triad.k)
        + map.value(nu, triad.k, triad.i))
}

/// Pair x triad incidence of the nonzero entries of a cyclic profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickTable {
    pub k: usize,
    pub tolerance: f64,
    /// Pairs whose entry is treated as nonzero.
    pub nonzero_pairs: Vec<Pair>,
    /// Tick count per triad, lexicographic triad order.
    pub tick_count: Vec<u8>,
    /// Triads grouped by tick count: `classes[c]` holds the triads with `c` ticks.
    pub classes: [Vec<Triad>; 4],
}

impl TickTable {
    /// Whether pair `p` carries a tick in the column of triad `t`.
    pub fn tick(&self, p: Pair, t: Triad) -> bool {
        t.pairs().contains(&p) && self.nonzero_pairs.binary_search(&p).is_ok()
    }

    pub fn count(&self, t: Triad) -> u8 {
        self.tick_count[TriadIndexMap::new(self.k).index(t)]
    }

    /// Triads with at least one tick, lexicographic order.
    pub fn ticked_triads(&self) -> Vec<Triad> {
        let mut v: Vec<Triad> = self.classes[1..].iter().flatten().copied().collect();
        v.sort();
        v
    }
}

/// Tick table of `nu_cyclic`; entries with `|x| <= tol` count as zero.
pub fn tick_table(nu_cyclic: &DVector<f64>, k: usize, tol: f64) -> Result<TickTable> {
    if k < 3 {
        return Err(Error::InvalidDimension(k));
    }
    if nu_cyclic.len() != num_pairs(k) {
        return Err(Error::DimensionMismatch {
            expected: num_pairs(k),
            actual: nu_cyclic.len(),
        });
    }
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::InvalidArgument(
            "tick tolerance must be nonnegative".into(),
        ));
    }
    let pairs = PairIndexMap::new(k);
    let triads = TriadIndexMap::new(k);
    let nonzero: Vec<bool> = nu_cyclic.iter().map(|x| x.abs() > tol).collect();
    let mut tick_count = Vec::with_capacity(triads.len());
    let mut classes: [Vec<Triad>; 4] = Default::default();
    for t in triads.triads() {
        let n = t
            .pairs()
            .iter()
            .filter(|p| nonzero[pairs.index(**p)])
            .count();
        tick_count.push(n as u8);
        classes[n].push(*t);
    }
    let nonzero_pairs = pairs
        .pairs()
        .iter()
        .zip(&nonzero)
        .filter(|(_, nz)| **nz)
        .map(|(p, _)| *p)
        .collect();
    Ok(TickTable {
        k,
        tolerance: tol,
        nonzero_pairs,
        tick_count,
        classes,
    })
}

/// Tick table using the default scale-aware zero tolerance.
pub fn tick_table_default(nu_cyclic: &DVector<f64>, k: usize) -> Result<TickTable> {
    tick_table(nu_cyclic, k, zero_tolerance(nu_cyclic))
}

/// All minimum-size triad sets whose span contains a cyclic profile.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimalModels {
    pub size: usize,
    pub models: Vec<Vec<Triad>>,
}

/// Default cap on the number of subsets the oracle may examine.
pub const DEFAULT_ORACLE_BUDGET: u128 = 2_000_000;

fn binomial(n: usize, r: usize) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Calls `f` on every `r`-subset of `0..n` in lexicographic order.
fn for_each_combination(n: usize, r: usize, mut f: impl FnMut(&[usize])) {
    if r > n {
        return;
    }
    let mut idx: Vec<usize> = (0..r).collect();
    loop {
        f(&idx);
        let Some(pos) = (0..r).rev().find(|&p| idx[p] != p + n - r) else {
            return;
        };
        idx[pos] += 1;
        for q in (pos + 1)..r {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

/// Brute-force enumeration of minimal models, a desk-scale verifier.
///
/// Subsets are scanned by size, then lexicographic triad order; a subset is
/// accepted when the least-squares residual of `nu_cyclic` on its columns is
/// at most `1e-8 * |nu_cyclic|`. Refuses (rather than truncating) when the
/// number of subsets to scan exceeds `budget`.
pub fn minimal_models_oracle(
    nu_cyclic: &DVector<f64>,
    bases: &BasisPair,
    max_size: usize,
    budget: u128,
) -> Result<MinimalModels> {
    bases.check_len(nu_cyclic)?;
    let t = bases.num_triads();
    let needed: u128 = (0..=max_size.min(t)).map(|s| binomial(t, s)).sum();
    if needed > budget {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    let norm = nu_cyclic.norm();
    if norm == 0.0 {
        return Ok(MinimalModels {
            size: 0,
            models: vec![Vec::new()],
        });
    }
    let threshold = ORACLE_SPAN_RTOL * norm;
    let triads = bases.triad_map().triads();
    for size in 1..=max_size.min(t) {
        let mut found = Vec::new();
        for_each_combination(t, size, |idx| {
            let set: Vec<Triad> = idx.iter().map(|&c| triads[c]).collect();
            let cols = bases.triad_columns(&set);
            if linalg::span_residual(&cols, nu_cyclic) <= threshold {
                found.push(set);
            }
        });
        if !found.is_empty() {
            return Ok(MinimalModels {
                size,
                models: found,
            });
        }
    }
    Err(Error::NoModelWithinSize(max_size))
}

/// Support (pairs touched) and spanning columns of a triad set.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSupport {
    pub support: BTreeSet<Pair>,
    pub span: DMatrix<f64>,
}

impl ModelSupport {
    pub fn rank(&self) -> usize {
        linalg::numerical_rank(&self.span)
    }

    /// Whether two triad sets span the same subspace.
    pub fn same_span(&self, other: &ModelSupport) -> bool {
        let r1 = self.rank();
        let r2 = other.rank();
        if r1 != r2 {
            return false;
        }
        let joined = self
            .span
            .clone()
            .resize_horizontally(self.span.ncols() + other.span.ncols(), 0.0);
        let mut joined = joined;
        for c in 0..other.span.ncols() {
            joined.set_column(self.span.ncols() + c, &other.span.column(c));
        }
        linalg::numerical_rank(&joined) == r1
    }
}

pub fn model_support_span(triads: &[Triad], bases: &BasisPair) -> Result<ModelSupport> {
    if triads.is_empty() {
        return Err(Error::InvalidArgument(
            "model support needs a nonempty triad set".into(),
        ));
    }
    for t in triads {
        bases.check_triad(*t)?;
    }
    let support = triads.iter().flat_map(|t| t.pairs()).collect();
    Ok(ModelSupport {
        support,
        span: bases.triad_columns(triads),
    })
}

/// Flow vector of the cycle `items[0] > items[1] > ... > items[r-1] > items[0]`.
pub fn cycle_vector(k: usize, items: &[usize]) -> Result<DVector<f64>> {
    if k < 3 {
        return Err(Error::InvalidDimension(k));
    }
    if items.len() < 3 {
        return Err(Error::InvalidArgument(
            "a cycle needs at least three items".into(),
        ));
    }
    let mut seen = vec![false; k];
    for &it in items {
        if it >= k {
            return Err(Error::IndexOutOfRange(format!(
                "item {} with K = {}",
                it + 1,
                k
            )));
        }
        if seen[it] {
            return Err(Error::RepeatedItem(it + 1));
        }
        seen[it] = true;
    }
    let map = PairIndexMap::new(k);
    let mut v = DVector::zeros(map.len());
    for w in 0..items.len() {
        let a = items[w];
        let b = items[(w + 1) % items.len()];
        let (row, sign) = map.oriented(a, b);
        v[row] += sign;
    }
    Ok(v)
}
