//! Hypothesis tests: triad consistency, lack of fit, and per-pair cyclic
//! component tests with multiple-testing control.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::estimate::{ComparisonData, FittedModel};
use crate::geometry::{triad_residual, BasisPair, Pair, Triad};
use crate::linalg::pinv;

/// Default number of Monte-Carlo draws for weighted chi-square tails.
pub const DEFAULT_MC_DRAWS: usize = 200_000;
/// Default seed for Monte-Carlo tails.
pub const DEFAULT_MC_SEED: u64 = 0x5EED;
/// Smallest accepted Monte-Carlo draw count.
pub const MIN_MC_DRAWS: usize = 10_000;

const MC_BLOCK: usize = 8192;
const EQUAL_EIGEN_RTOL: f64 = 1e-8;

/// Upper tail `1 - Phi(x)` of the standard normal, accurate far into the tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    normal_sf(-x)
}

/// Reference distribution of a test statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullKind {
    Normal,
    WeightedChisq,
    Chisq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub null_kind: NullKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eigenvalues: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dof: Option<usize>,
}

/// Monte-Carlo settings for weighted chi-square tails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarlo {
    pub draws: usize,
    pub seed: u64,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        MonteCarlo {
            draws: DEFAULT_MC_DRAWS,
            seed: DEFAULT_MC_SEED,
        }
    }
}

/// Standardized triad statistic `(S_ij + S_jk + S_ki) / sqrt(1/n_ij + 1/n_jk + 1/n_ik)`
/// computed from pair means, with a two-sided `N(0, sigma2)` p-value.
pub fn triad_test(data: &ComparisonData, triad: Triad, sigma2: f64) -> Result<TestOutcome> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "triad test needs sigma2 > 0, got {sigma2}"
        )));
    }
    let statistic = triad_statistic(data, triad)?;
    Ok(TestOutcome {
        statistic,
        p_value: (2.0 * normal_sf(statistic.abs() / sigma2.sqrt())).min(1.0),
        null_kind: NullKind::Normal,
        eigenvalues: None,
        dof: None,
    })
}

/// The standardized triad residual of the pair means.
pub fn triad_statistic(data: &ComparisonData, triad: Triad) -> Result<f64> {
    let k = data.k();
    let residual = triad_residual(&data.means(), k, triad)?;
    let inv: f64 = triad
        .pairs()
        .iter()
        .map(|p| 1.0 / data.count(*p) as f64)
        .sum();
    Ok(residual / inv.sqrt())
}

/// Analytic power of the two-sided level-`alpha` triad test when the
/// statistic is `N(delta, sigma2)`.
pub fn triad_test_power(delta: f64, sigma2: f64, alpha: f64) -> Result<f64> {
    if sigma2.is_nan() || sigma2 <= 0.0 {
        return Err(Error::InvalidArgument("sigma2 must be positive".into()));
    }
    check_level(alpha)?;
    let z = statrs::distribution::Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    let shift = delta / sigma2.sqrt();
    Ok(normal_cdf(-z - shift) + normal_sf(z - shift))
}

fn check_level(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "level must lie in (0,1), got {alpha}"
        )))
    }
}

/// Lack-of-fit statistic variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LackOfFit {
    /// `Rn = sum n_ij (S_bar_ij - nu_hat_ij)^2` against a weighted chi-square.
    Rn,
    /// `U' Psi^+ U` against a chi-square with `t` degrees of freedom.
    Wald,
}

/// Plug-in covariance `Psi` of the scaled residual `U = D^{1/2}(S_bar - nu_hat)`.
pub fn residual_covariance(
    data: &ComparisonData,
    bases: &BasisPair,
    model: &FittedModel,
) -> DMatrix<f64> {
    let d = data.count_vector();
    let b = bases.b();
    let c_s = bases.triad_columns(&model.triads);
    let mut x = DMatrix::zeros(b.nrows(), b.ncols() + c_s.ncols());
    x.view_mut((0, 0), b.shape()).copy_from(b);
    x.view_mut((0, b.ncols()), c_s.shape()).copy_from(&c_s);
    let dx = DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| d[r] * x[(r, c)]);
    let g_inv = pinv(&(x.transpose() * &dx));
    let p = d.len();
    // M = I - X G^+ X' D
    let m = DMatrix::identity(p, p) - &x * g_inv * dx.transpose();
    let sqrt_d = d.map(f64::sqrt);
    let inner = DMatrix::from_fn(p, p, |r, c| m[(r, c)] / d[c]) * m.transpose();
    DMatrix::from_fn(p, p, |r, c| {
        model.sigma2.value * sqrt_d[r] * inner[(r, c)] * sqrt_d[c]
    })
}

/// Lack-of-fit test of a fitted model against the saturated model.
///
/// The reference distribution uses the `t = P - (K - 1 + rank C_s)` largest
/// eigenvalues of the plug-in residual covariance. Errors with
/// [`Error::Saturated`] when `t <= 0`.
///
/// Without replication or noise (`sigma2_hat = 0`) the null is a point mass
/// at zero: the p-value is 1 when the residual vanishes and 0 otherwise.
pub fn lack_of_fit(
    data: &ComparisonData,
    bases: &BasisPair,
    model: &FittedModel,
    variant: LackOfFit,
    mc: MonteCarlo,
) -> Result<TestOutcome> {
    let t = model.lack_of_fit_df();
    if t <= 0 {
        return Err(Error::Saturated(t));
    }
    let t = t as usize;
    let rn = model.lack_of_fit_ss;
    let sigma2 = model.sigma2.value;
    if sigma2 <= 0.0 {
        let scale: f64 = 1.0 + data.count_vector().dot(&data.means().map(|x| x * x));
        let p_value = if rn <= 1e-18 * scale { 1.0 } else { 0.0 };
        return Ok(TestOutcome {
            statistic: rn,
            p_value,
            null_kind: NullKind::WeightedChisq,
            eigenvalues: Some(vec![0.0; t]),
            dof: Some(t),
        });
    }
    let psi = residual_covariance(data, bases, model);
    let mut eig: Vec<f64> = psi.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig.truncate(t);
    for v in eig.iter_mut() {
        *v = v.max(0.0);
    }
    match variant {
        LackOfFit::Rn => Ok(TestOutcome {
            statistic: rn,
            p_value: weighted_chisq_pvalue(&eig, rn, mc.draws, mc.seed)?,
            null_kind: NullKind::WeightedChisq,
            eigenvalues: Some(eig),
            dof: Some(t),
        }),
        LackOfFit::Wald => {
            let d = data.count_vector();
            let u = DVector::from_fn(d.len(), |r, _| {
                d[r].sqrt() * (data.means()[r] - model.nu_hat[r])
            });
            let w = (u.transpose() * truncated_pinv(&psi, t) * &u)[(0, 0)];
            Ok(TestOutcome {
                statistic: w,
                p_value: chisq_sf(w, t),
                null_kind: NullKind::Chisq,
                eigenvalues: None,
                dof: Some(t),
            })
        }
    }
}

/// Pseudoinverse keeping the `rank` largest eigenvalues of a symmetric matrix.
fn truncated_pinv(m: &DMatrix<f64>, rank: usize) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for &i in order.iter().take(rank) {
        let l = eig.eigenvalues[i];
        if l > 0.0 {
            let v = eig.eigenvectors.column(i);
            out += (v * v.transpose()) / l;
        }
    }
    out
}

fn chisq_sf(x: f64, dof: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    dist.sf(x)
}

fn all_equal(eig: &[f64]) -> Option<f64> {
    let max = eig.iter().copied().fold(f64::MIN, f64::max);
    let min = eig.iter().copied().fold(f64::MAX, f64::min);
    (max - min <= EQUAL_EIGEN_RTOL * max).then_some(max)
}

/// Draws `sum lambda_i (Z_i + offset_i)^2` and counts exceedances of `x`.
///
/// Draws are generated in fixed-size blocks, each from its own ChaCha stream,
/// so the count is identical for any thread count.
fn mc_exceedances(eig: &[f64], offsets: &[f64], x: f64, draws: usize, seed: u64) -> usize {
    let blocks = draws.div_ceil(MC_BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(block as u64);
            let len = MC_BLOCK.min(draws - block * MC_BLOCK);
            let mut hits = 0;
            for _ in 0..len {
                let q: f64 = eig
                    .iter()
                    .zip(offsets)
                    .map(|(l, o)| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        l * (z + o) * (z + o)
                    })
                    .sum();
                if q > x {
                    hits += 1;
                }
            }
            hits
        })
        .sum()
}

/// Upper-tail probability `P(sum lambda_i Z_i^2 > x)`.
///
/// When all weights are equal the tail is the exact scaled chi-square tail;
/// otherwise it is estimated by Monte Carlo, deterministically given `seed`.
pub fn weighted_chisq_pvalue(eigenvalues: &[f64], x: f64, draws: usize, seed: u64) -> Result<f64> {
    check_weights(eigenvalues)?;
    if let Some(l) = all_equal(eigenvalues) {
        return Ok(chisq_sf(x / l, eigenvalues.len()));
    }
    weighted_chisq_pvalue_mc(eigenvalues, x, draws, seed)
}

/// Monte-Carlo upper-tail probability of `sum lambda_i Z_i^2`, never using
/// the closed form.
pub fn weighted_chisq_pvalue_mc(
    eigenvalues: &[f64],
    x: f64,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    check_weights(eigenvalues)?;
    check_draws(draws)?;
    let zeros = vec![0.0; eigenvalues.len()];
    Ok(mc_exceedances(eigenvalues, &zeros, x, draws, seed) as f64 / draws as f64)
}

fn check_weights(eigenvalues: &[f64]) -> Result<()> {
    if eigenvalues.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::InvalidArgument(
            "weights must be finite and nonnegative".into(),
        ));
    }
    if eigenvalues.iter().all(|l| *l == 0.0) {
        return Err(Error::InvalidArgument(
            "weighted chi-square needs a nonzero weight".into(),
        ));
    }
    Ok(())
}

fn check_draws(draws: usize) -> Result<()> {
    if draws < MIN_MC_DRAWS {
        return Err(Error::InvalidArgument(format!(
            "at least {MIN_MC_DRAWS} Monte-Carlo draws required, got {draws}"
        )));
    }
    Ok(())
}

/// Null `(1 - level)` quantile of `sum lambda_i Z_i^2`.
fn weighted_chisq_quantile(eig: &[f64], level: f64, draws: usize, seed: u64) -> f64 {
    if let Some(l) = all_equal(eig) {
        let dist = ChiSquared::new(eig.len() as f64).expect("positive dof");
        return l * dist.inverse_cdf(1.0 - level);
    }
    let blocks = draws.div_ceil(MC_BLOCK);
    let mut sample: Vec<f64> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(block as u64);
            let len = MC_BLOCK.min(draws - block * MC_BLOCK);
            (0..len)
                .map(|_| {
                    eig.iter()
                        .map(|l| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            l * z * z
                        })
                        .sum::<f64>()
                })
                .collect::<Vec<_>>()
        })
        .collect();
    sample.sort_by(f64::total_cmp);
    let idx = (((1.0 - level) * draws as f64).ceil() as usize).clamp(1, draws) - 1;
    sample[idx]
}

/// Power of the level-`level` weighted chi-square test under the local
/// alternative `sum lambda_i (Z_i + offset_i)^2`.
pub fn local_alternative_power(
    eigenvalues: &[f64],
    offsets: &[f64],
    level: f64,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    if eigenvalues.len() != offsets.len() {
        return Err(Error::DimensionMismatch {
            expected: eigenvalues.len(),
            actual: offsets.len(),
        });
    }
    check_weights(eigenvalues)?;
    check_level(level)?;
    check_draws(draws)?;
    let critical = weighted_chisq_quantile(eigenvalues, level, draws, seed);
    let alt_seed = seed ^ 0xA17E_0000_0000_0001;
    Ok(mc_exceedances(eigenvalues, offsets, critical, draws, alt_seed) as f64 / draws as f64)
}

/// Multiple-testing rule for the per-pair component tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Correction {
    /// Family-wise error control: reject when `p < alpha / P`.
    #[default]
    #[serde(rename = "bonferroni_fwer", alias = "bonferroni")]
    Bonferroni,
    /// Benjamini-Hochberg step-up false discovery rate control.
    #[serde(rename = "bh_fdr", alias = "bh")]
    BenjaminiHochberg,
}

impl std::str::FromStr for Correction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bonferroni" | "bonferroni_fwer" => Ok(Correction::Bonferroni),
            "bh" | "bh_fdr" => Ok(Correction::BenjaminiHochberg),
            other => Err(Error::Config(format!(
                "unknown correction '{other}' (expected bonferroni or bh)"
            ))),
        }
    }
}

/// Per-pair tests of `H0: nu_cyclic_ij = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentTestReport {
    pub pairs: Vec<Pair>,
    /// Estimated cyclic component of each pair.
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Raw two-sided p-values.
    pub p_values: Vec<f64>,
    pub rejected: Vec<bool>,
    /// Pairs whose standard error is zero and whose estimate is zero.
    pub indeterminate: Vec<bool>,
    pub correction: Correction,
    pub level: f64,
}

impl ComponentTestReport {
    /// The estimated cyclic profile with non-rejected pairs set to zero.
    pub fn thresholded_profile(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.estimates.len(),
            self.estimates
                .iter()
                .zip(&self.rejected)
                .map(|(e, r)| if *r { *e } else { 0.0 }),
        )
    }

    pub fn num_rejected(&self) -> usize {
        self.rejected.iter().filter(|r| **r).count()
    }
}

/// Rejection flags for raw p-values under a correction.
pub fn apply_correction(p_values: &[f64], level: f64, correction: Correction) -> Vec<bool> {
    let m = p_values.len() as f64;
    match correction {
        Correction::Bonferroni => p_values.iter().map(|p| *p < level / m).collect(),
        Correction::BenjaminiHochberg => {
            let mut order: Vec<usize> = (0..p_values.len()).collect();
            order.sort_by(|a, b| p_values[*a].total_cmp(&p_values[*b]).then(a.cmp(b)));
            let cutoff = order
                .iter()
                .enumerate()
                .filter(|(rank, idx)| p_values[**idx] <= level * (*rank + 1) as f64 / m)
                .map(|(rank, _)| rank + 1)
                .max()
                .unwrap_or(0);
            let mut out = vec![false; p_values.len()];
            for idx in order.iter().take(cutoff) {
                out[*idx] = true;
            }
            out
        }
    }
}

/// Tests each pair's cyclic component `(C (C'C)^+ C' S_bar)_ij` against zero
/// using the plug-in covariance `sigma2_hat * P_C D^{-1} P_C`.
///
/// A pair with zero standard error (no noise) is rejected when its estimate
/// is nonzero and marked indeterminate when the estimate is zero.
pub fn component_tests(
    data: &ComparisonData,
    bases: &BasisPair,
    level: f64,
    correction: Correction,
) -> Result<ComponentTestReport> {
    check_level(level)?;
    if data.k() != bases.k() {
        return Err(Error::DimensionMismatch {
            expected: bases.k(),
            actual: data.k(),
        });
    }
    let proj = bases.cyclic_projector();
    let s_bar = data.means();
    let est = proj * &s_bar;
    let d = data.count_vector();
    let sigma2 = data.sigma2_hat().value;
    let p = d.len();
    let tol = crate::geometry::zero_tolerance(&s_bar);
    let mut std_errors = Vec::with_capacity(p);
    let mut p_values = Vec::with_capacity(p);
    let mut indeterminate = Vec::with_capacity(p);
    for r in 0..p {
        let var: f64 = sigma2
            * (0..p)
                .map(|c| proj[(r, c)] * proj[(r, c)] / d[c])
                .sum::<f64>();
        let se = var.max(0.0).sqrt();
        std_errors.push(se);
        if se > 0.0 {
            p_values.push((2.0 * normal_sf(est[r].abs() / se)).min(1.0));
            indeterminate.push(false);
        } else if est[r].abs() > tol {
            p_values.push(0.0);
            indeterminate.push(false);
        } else {
            p_values.push(1.0);
            indeterminate.push(true);
        }
    }
    let mut rejected = apply_correction(&p_values, level, correction);
    for (r, ind) in rejected.iter_mut().zip(&indeterminate) {
        if *ind {
            *r = false;
        }
    }
    Ok(ComponentTestReport {
        pairs: bases.pair_map().pairs().to_vec(),
        estimates: est.iter().copied().collect(),
        std_errors,
        p_values,
        rejected,
        indeterminate,
        correction,
        level,
    })
}
