//! Least-squares fits of the reduced, intermediate and full models from
//! per-pair sufficient statistics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{num_pairs, BasisPair, Pair, PairIndexMap, Triad};
use crate::linalg::{numerical_rank, pinv, pinv_with_rank};

/// Per-pair sufficient statistics of a paired-comparison data set.
///
/// Pair `(i, j)` with `i < j` is observed `n_ij` times; each observation is a
/// signed score in favour of `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonData {
    k: usize,
    counts: Vec<usize>,
    means: Vec<f64>,
    within_ss: Vec<f64>,
}

fn mean_and_ss(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, ss)
}

impl ComparisonData {
    /// Builds the statistics from raw samples, one vector per pair in
    /// lexicographic pair order.
    pub fn from_samples(k: usize, samples: &[Vec<f64>]) -> Result<Self> {
        if k < 3 {
            return Err(Error::InvalidDimension(k));
        }
        if samples.len() != num_pairs(k) {
            return Err(Error::DimensionMismatch {
                expected: num_pairs(k),
                actual: samples.len(),
            });
        }
        let map = PairIndexMap::new(k);
        let mut counts = Vec::with_capacity(samples.len());
        let mut means = Vec::with_capacity(samples.len());
        let mut within_ss = Vec::with_capacity(samples.len());
        for (row, xs) in samples.iter().enumerate() {
            if xs.is_empty() {
                return Err(Error::Incomplete(map.pair(row)));
            }
            if xs.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "non-finite score for pair {}",
                    map.pair(row)
                )));
            }
            let (m, ss) = mean_and_ss(xs);
            counts.push(xs.len());
            means.push(m);
            within_ss.push(ss);
        }
        Ok(ComparisonData {
            k,
            counts,
            means,
            within_ss,
        })
    }

    /// Builds the statistics from `(i, j, y)` records with 0-based items.
    /// A record with `i > j` is stored as `(j, i, -y)`.
    pub fn from_records(k: usize, records: &[(usize, usize, f64)]) -> Result<Self> {
        if k < 3 {
            return Err(Error::InvalidDimension(k));
        }
        let map = PairIndexMap::new(k);
        let mut samples = vec![Vec::new(); map.len()];
        for &(i, j, y) in records {
            if i >= k || j >= k {
                return Err(Error::IndexOutOfRange(format!(
                    "item {} with K = {}",
                    i.max(j) + 1,
                    k
                )));
            }
            if i == j {
                return Err(Error::InvalidArgument(format!(
                    "self-comparison of item {}",
                    i + 1
                )));
            }
            let (row, sign) = map.oriented(i, j);
            samples[row].push(sign * y);
        }
        Self::from_samples(k, &samples)
    }

    /// Builds the statistics directly from counts, means and within-pair
    /// sums of squares.
    pub fn from_pair_stats(
        k: usize,
        counts: Vec<usize>,
        means: Vec<f64>,
        within_ss: Vec<f64>,
    ) -> Result<Self> {
        if k < 3 {
            return Err(Error::InvalidDimension(k));
        }
        let p = num_pairs(k);
        for len in [counts.len(), means.len(), within_ss.len()] {
            if len != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    actual: len,
                });
            }
        }
        let map = PairIndexMap::new(k);
        if let Some(row) = counts.iter().position(|&n| n == 0) {
            return Err(Error::Incomplete(map.pair(row)));
        }
        if means.iter().chain(&within_ss).any(|x| !x.is_finite())
            || within_ss.iter().any(|x| *x < 0.0)
        {
            return Err(Error::InvalidArgument(
                "pair statistics must be finite with nonnegative sums of squares".into(),
            ));
        }
        Ok(ComparisonData {
            k,
            counts,
            means,
            within_ss,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_pairs(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn count(&self, p: Pair) -> usize {
        self.counts[PairIndexMap::new(self.k).index(p)]
    }

    /// Total number of comparisons `n`.
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Pair means `S_bar`.
    pub fn means(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.means)
    }

    /// Pair counts as a vector, the diagonal of `D`.
    pub fn count_vector(&self) -> DVector<f64> {
        DVector::from_iterator(self.counts.len(), self.counts.iter().map(|&n| n as f64))
    }

    /// Pair sums `D S_bar`.
    pub fn sums(&self) -> DVector<f64> {
        self.count_vector().component_mul(&self.means())
    }

    /// Total within-pair sum of squares.
    pub fn within_ss(&self) -> f64 {
        self.within_ss.iter().sum()
    }

    /// Empirical pair weights `n_ij / n`.
    pub fn weights(&self) -> DVector<f64> {
        self.count_vector() / self.total() as f64
    }

    /// Noise-variance estimate from within-pair replication.
    pub fn sigma2_hat(&self) -> Sigma2Estimate {
        let n = self.total();
        let df = n - self.num_pairs();
        if df == 0 {
            return Sigma2Estimate {
                value: 0.0,
                within_df: 0,
                degenerate: true,
            };
        }
        Sigma2Estimate {
            value: self.within_ss() / n as f64,
            within_df: df,
            degenerate: false,
        }
    }
}

/// Within-pair variance estimate `sum of within-pair SS / n`.
///
/// When every pair is observed once there is no replication; the estimate is
/// then `0` and `degenerate` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sigma2Estimate {
    pub value: f64,
    pub within_df: usize,
    pub degenerate: bool,
}

/// Which family a fitted model belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Reduced,
    Intermediate,
    Full,
}

/// A least-squares fit `nu_hat = B mu + C_s gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub kind: ModelKind,
    pub triads: Vec<Triad>,
    /// Sum-zero merits.
    pub mu: DVector<f64>,
    /// Triad coefficients, minimum norm among the least-squares solutions.
    pub gamma: DVector<f64>,
    pub nu_hat: DVector<f64>,
    /// `rank(C_s)`.
    pub cyclic_rank: usize,
    /// True when the selected triad columns are linearly dependent.
    pub rank_deficient: bool,
    /// Lack-of-fit sum of squares `sum n_ij (S_bar_ij - nu_hat_ij)^2`.
    pub lack_of_fit_ss: f64,
    /// Residual sum of squares over all observations.
    pub rss: f64,
    pub sigma2: Sigma2Estimate,
    /// Plug-in covariance of `(mu, gamma)`.
    pub covariance: DMatrix<f64>,
}

impl FittedModel {
    /// Number of free mean parameters, `K - 1 + rank(C_s)`.
    pub fn num_params(&self) -> usize {
        self.mu.len() - 1 + self.cyclic_rank
    }

    /// Residual degrees of freedom at the pair-mean level, `P - num_params`.
    pub fn lack_of_fit_df(&self) -> i64 {
        self.nu_hat.len() as i64 - self.num_params() as i64
    }

    /// Linear part `B mu` of the fitted profile.
    pub fn nu_linear(&self, bases: &BasisPair) -> DVector<f64> {
        bases.b() * &self.mu
    }

    /// Cyclic part `C_s gamma` of the fitted profile.
    pub fn nu_cyclic(&self, bases: &BasisPair) -> DVector<f64> {
        bases.triad_columns(&self.triads) * &self.gamma
    }

    /// Standard errors of `(mu, gamma)` from the plug-in covariance.
    pub fn standard_errors(&self) -> DVector<f64> {
        self.covariance.diagonal().map(|v| v.max(0.0).sqrt())
    }
}

fn check_data(data: &ComparisonData, bases: &BasisPair) -> Result<()> {
    if data.k() != bases.k() {
        return Err(Error::DimensionMismatch {
            expected: bases.k(),
            actual: data.k(),
        });
    }
    Ok(())
}

fn check_triads(triads: &[Triad], bases: &BasisPair) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for t in triads {
        bases.check_triad(*t)?;
        if !seen.insert(*t) {
            return Err(Error::DuplicateTriad(*t));
        }
    }
    Ok(())
}

/// Scales row `r` of `m` by `d[r]`.
fn row_scale(d: &DVector<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| d[r] * m[(r, c)])
}

/// Fits the model spanned by `B` and the given triad columns.
///
/// `gamma = (C_s' W C_s)^+ C_s' W S_bar` with `W = D - D B N^+ B' D` and
/// `N = B' D B`, then `mu = N^+ B' D (S_bar - C_s gamma)`.
pub fn fit_intermediate(
    data: &ComparisonData,
    bases: &BasisPair,
    triads: &[Triad],
) -> Result<FittedModel> {
    check_data(data, bases)?;
    check_triads(triads, bases)?;
    let kind = if triads.is_empty() {
        ModelKind::Reduced
    } else {
        ModelKind::Intermediate
    };
    fit_with_kind(data, bases, triads, kind)
}

fn fit_with_kind(
    data: &ComparisonData,
    bases: &BasisPair,
    triads: &[Triad],
    kind: ModelKind,
) -> Result<FittedModel> {
    let d = data.count_vector();
    let s_bar = data.means();
    let b = bases.b();
    let db = row_scale(&d, b);
    let n_inv = pinv(&(b.transpose() * &db));
    let c_s = bases.triad_columns(triads);

    let (gamma, cyclic_rank) = if triads.is_empty() {
        (DVector::zeros(0), 0)
    } else {
        // W x = D x - D B N^+ B' D x
        let apply_w = |m: &DMatrix<f64>| -> DMatrix<f64> {
            row_scale(&d, m) - &db * (&n_inv * (db.transpose() * m))
        };
        let wc = apply_w(&c_s);
        let gram = c_s.transpose() * &wc;
        let (gram_inv, _) = pinv_with_rank(&gram);
        let gamma = gram_inv * (wc.transpose() * &s_bar);
        (gamma, numerical_rank(&c_s))
    };

    let resid_lin = &s_bar - &c_s * &gamma;
    let mu = &n_inv * (db.transpose() * resid_lin);
    let nu_hat = b * &mu + &c_s * &gamma;

    let lack_of_fit_ss: f64 = (0..d.len())
        .map(|r| d[r] * (s_bar[r] - nu_hat[r]).powi(2))
        .sum();
    let sigma2 = data.sigma2_hat();

    let mut x = DMatrix::zeros(b.nrows(), b.ncols() + c_s.ncols());
    x.view_mut((0, 0), b.shape()).copy_from(b);
    x.view_mut((0, b.ncols()), c_s.shape()).copy_from(&c_s);
    let g = x.transpose() * row_scale(&d, &x);
    let covariance = pinv(&g) * sigma2.value;

    Ok(FittedModel {
        kind,
        triads: triads.to_vec(),
        mu,
        gamma,
        nu_hat,
        cyclic_rank,
        rank_deficient: cyclic_rank < triads.len(),
        lack_of_fit_ss,
        rss: data.within_ss() + lack_of_fit_ss,
        sigma2,
        covariance,
    })
}

/// Linear model: `mu = N^+ B' D S_bar`.
pub fn fit_reduced(data: &ComparisonData, bases: &BasisPair) -> Result<FittedModel> {
    check_data(data, bases)?;
    fit_with_kind(data, bases, &[], ModelKind::Reduced)
}

/// Saturated model: all triads, so that `nu_hat = S_bar`.
pub fn fit_full(data: &ComparisonData, bases: &BasisPair) -> Result<FittedModel> {
    check_data(data, bases)?;
    fit_with_kind(data, bases, bases.triad_map().triads(), ModelKind::Full)
}

/// Joint minimum-norm solution `G^+ X' D S_bar` with `X = [B, C_s]`,
/// returned as `(mu, gamma)`.
///
/// Unlike [`fit_intermediate`], the merits are not forced to sum to zero
/// independently of `gamma`; the pair is the shortest vector among all
/// least-squares solutions.
pub fn fit_joint_minnorm(
    data: &ComparisonData,
    bases: &BasisPair,
    triads: &[Triad],
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_data(data, bases)?;
    check_triads(triads, bases)?;
    let d = data.count_vector();
    let b = bases.b();
    let c_s = bases.triad_columns(triads);
    let mut x = DMatrix::zeros(b.nrows(), b.ncols() + c_s.ncols());
    x.view_mut((0, 0), b.shape()).copy_from(b);
    x.view_mut((0, b.ncols()), c_s.shape()).copy_from(&c_s);
    let dx = row_scale(&d, &x);
    let theta = pinv(&(x.transpose() * &dx)) * (dx.transpose() * data.means());
    let k = bases.k();
    Ok((
        theta.rows(0, k).into_owned(),
        theta.rows(k, triads.len()).into_owned(),
    ))
}
