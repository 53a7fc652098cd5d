//! Monte-Carlo study harness: scenario generation, selection metrics and
//! mean-squared-error comparisons.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{fit_full, fit_intermediate, fit_reduced, ComparisonData};
use crate::geometry::{BasisPair, Triad};
use crate::linalg::span_residual;
use crate::select::{select, Method, SelectionOptions};

/// Relative residual under which the true cyclic profile counts as lying in
/// the selected span.
pub const SPAN_RTOL: f64 = 1e-6;

/// How a selection is scored against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// All generating triads are among the selected ones.
    Containment,
    /// The true cyclic profile lies in the span of the selected triads.
    Span,
}

/// The three built-in cyclic structures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "I")]
    One,
    #[serde(rename = "II")]
    Two,
    #[serde(rename = "III")]
    Three,
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "1" => Ok(Preset::One),
            "II" | "2" => Ok(Preset::Two),
            "III" | "3" => Ok(Preset::Three),
            other => Err(Error::Config(format!(
                "unknown scenario '{other}' (expected I, II or III)"
            ))),
        }
    }
}

impl Preset {
    pub fn label(&self) -> &'static str {
        match self {
            Preset::One => "I",
            Preset::Two => "II",
            Preset::Three => "III",
        }
    }

    /// Signed generating triads.
    pub fn triads(&self) -> Vec<(Triad, f64)> {
        let t = Triad::one_based;
        match self {
            Preset::One => vec![(t(1, 2, 3), 1.0), (t(1, 4, 5), -1.0)],
            Preset::Two => vec![(t(1, 4, 5), 1.0), (t(2, 5, 6), -1.0), (t(3, 4, 6), 1.0)],
            Preset::Three => vec![(t(1, 2, 3), 1.0), (t(1, 2, 4), -1.0)],
        }
    }

    /// Scenario III has no unique minimal model and is scored by span.
    pub fn metric(&self) -> Metric {
        match self {
            Preset::Three => Metric::Span,
            _ => Metric::Containment,
        }
    }
}

/// A data-generating design: `Y = (B mu + sum gamma_t c_t) + sigma * Z`,
/// `m` observations per pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub k: usize,
    pub mu: Vec<f64>,
    pub cyclic: Vec<(Triad, f64)>,
    pub sigma: f64,
    pub m: usize,
    pub seed: u64,
    pub metric: Metric,
}

impl Scenario {
    /// A built-in scenario with `sigma = 1` and `mu = 0`.
    pub fn preset(preset: Preset, k: usize, m: usize, seed: u64) -> Result<Self> {
        let scn = Scenario {
            name: preset.label().to_string(),
            k,
            mu: vec![0.0; k],
            cyclic: preset.triads(),
            sigma: 1.0,
            m,
            seed,
            metric: preset.metric(),
        };
        scn.validate()?;
        Ok(scn)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 3 {
            return Err(Error::InvalidDimension(self.k));
        }
        if self.mu.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                actual: self.mu.len(),
            });
        }
        for (t, _) in &self.cyclic {
            if t.k >= self.k {
                return Err(Error::IndexOutOfRange(format!(
                    "triad {} with K = {}",
                    t, self.k
                )));
            }
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(
                "sigma must be finite and nonnegative".into(),
            ));
        }
        if self.m == 0 {
            return Err(Error::InvalidArgument("m must be at least 1".into()));
        }
        Ok(())
    }

    pub fn true_triads(&self) -> Vec<Triad> {
        self.cyclic.iter().map(|(t, _)| *t).collect()
    }

    pub fn nu_cyclic(&self, bases: &BasisPair) -> DVector<f64> {
        let mut v = DVector::zeros(bases.num_pairs());
        for (t, g) in &self.cyclic {
            v += bases.triad_column(*t) * *g;
        }
        v
    }

    pub fn nu(&self, bases: &BasisPair) -> DVector<f64> {
        bases.b() * DVector::from_column_slice(&self.mu) + self.nu_cyclic(bases)
    }
}

/// SplitMix64 finaliser of `seed + (index + 1) * golden`, used to derive
/// independent per-replication seeds.
pub fn replication_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add((index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Data for one replication; deterministic in `(scenario.seed, replication)`.
pub fn generate(
    scenario: &Scenario,
    bases: &BasisPair,
    replication: u64,
) -> Result<ComparisonData> {
    scenario.validate()?;
    if bases.k() != scenario.k {
        return Err(Error::DimensionMismatch {
            expected: scenario.k,
            actual: bases.k(),
        });
    }
    let nu = scenario.nu(bases);
    let mut rng = ChaCha8Rng::seed_from_u64(replication_seed(scenario.seed, replication));
    let samples: Vec<Vec<f64>> = nu
        .iter()
        .map(|v| {
            (0..scenario.m)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + scenario.sigma * z
                })
                .collect()
        })
        .collect();
    ComparisonData::from_samples(scenario.k, &samples)
}

/// Per-method selection summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub metric: Metric,
    /// Fraction of replications in which the selection covers the truth.
    pub probability: f64,
    /// Mean of `|selected| / |true|`.
    pub size_ratio: f64,
    /// Replications whose selection raised an error (excluded from the means).
    pub failures: usize,
    /// Replications in which no candidate passed the lack-of-fit test.
    pub unaccepted: usize,
}

/// Mean of `|nu_hat - nu|^2` under four fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseSummary {
    pub true_model: f64,
    pub selected: f64,
    pub full: f64,
    pub reduced: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub scenario: String,
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    pub replications: usize,
    pub methods: Vec<MethodSummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mse: Option<MseSummary>,
    /// Wall-clock seconds; not serialized so that outputs are reproducible.
    #[serde(skip)]
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, Default)]
struct RepOutcome {
    per_method: Vec<Option<(bool, usize, bool)>>,
    mse: Option<[f64; 4]>,
}

/// What to compute in a study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyPlan {
    pub methods: Vec<Method>,
    pub replications: usize,
    /// Also compute the MSE comparison; the selected model comes from FTBS.
    pub mse: bool,
    pub options: SelectionOptions,
}

fn covered(
    metric: Metric,
    scenario: &Scenario,
    bases: &BasisPair,
    selected: &[Triad],
    nu_c: &DVector<f64>,
) -> bool {
    match metric {
        Metric::Containment => scenario.true_triads().iter().all(|t| selected.contains(t)),
        Metric::Span => {
            span_residual(&bases.triad_columns(selected), nu_c)
                <= SPAN_RTOL * nu_c.norm().max(f64::MIN_POSITIVE)
        }
    }
}

fn run_replication(
    scenario: &Scenario,
    bases: &BasisPair,
    plan: &StudyPlan,
    rep: u64,
) -> Result<RepOutcome> {
    let data = generate(scenario, bases, rep)?;
    let nu = scenario.nu(bases);
    let nu_c = scenario.nu_cyclic(bases);
    let mut out = RepOutcome::default();
    let mut ftbs_triads = None;
    for &method in &plan.methods {
        match select(&data, bases, method, &plan.options) {
            Ok(res) => {
                let hit = covered(scenario.metric, scenario, bases, &res.triads, &nu_c);
                if method == Method::Ftbs {
                    ftbs_triads = Some(res.triads.clone());
                }
                out.per_method
                    .push(Some((hit, res.triads.len(), res.accepted)));
            }
            Err(_) => out.per_method.push(None),
        }
    }
    if plan.mse {
        let selected = match ftbs_triads {
            Some(t) => t,
            None => select(&data, bases, Method::Ftbs, &plan.options)?.triads,
        };
        let err = |nu_hat: &DVector<f64>| (nu_hat - &nu).norm_squared();
        out.mse = Some([
            err(&fit_intermediate(&data, bases, &scenario.true_triads())?.nu_hat),
            err(&fit_intermediate(&data, bases, &selected)?.nu_hat),
            err(&fit_full(&data, bases)?.nu_hat),
            err(&fit_reduced(&data, bases)?.nu_hat),
        ]);
    }
    Ok(out)
}

/// Runs `plan.replications` independent replications in parallel and
/// aggregates them in replication order, so results do not depend on the
/// number of threads.
pub fn run_study(scenario: &Scenario, bases: &BasisPair, plan: &StudyPlan) -> Result<StudyResult> {
    scenario.validate()?;
    plan.options.validate()?;
    if plan.replications == 0 {
        return Err(Error::InvalidArgument(
            "replications must be at least 1".into(),
        ));
    }
    let start = Instant::now();
    let outcomes: Vec<Result<RepOutcome>> = (0..plan.replications as u64)
        .into_par_iter()
        .map(|rep| run_replication(scenario, bases, plan, rep))
        .collect();
    let outcomes: Vec<RepOutcome> = outcomes.into_iter().collect::<Result<_>>()?;

    let true_size = scenario.cyclic.len().max(1) as f64;
    let methods = plan
        .methods
        .iter()
        .enumerate()
        .map(|(idx, &method)| {
            let mut hits = 0usize;
            let mut size = 0.0;
            let mut ok = 0usize;
            let mut unaccepted = 0usize;
            for o in &outcomes {
                if let Some((hit, len, accepted)) = o.per_method[idx] {
                    ok += 1;
                    hits += hit as usize;
                    size += len as f64 / true_size;
                    unaccepted += (!accepted) as usize;
                }
            }
            let denom = ok.max(1) as f64;
            MethodSummary {
                method,
                metric: scenario.metric,
                probability: hits as f64 / denom,
                size_ratio: size / denom,
                failures: plan.replications - ok,
                unaccepted,
            }
        })
        .collect();
    let mse = plan.mse.then(|| {
        let mut acc = [0.0; 4];
        for o in &outcomes {
            let v = o.mse.expect("mse computed for every replication");
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
        }
        let r = plan.replications as f64;
        MseSummary {
            true_model: acc[0] / r,
            selected: acc[1] / r,
            full: acc[2] / r,
            reduced: acc[3] / r,
        }
    });
    Ok(StudyResult {
        scenario: scenario.name.clone(),
        k: scenario.k,
        m: scenario.m,
        seed: scenario.seed,
        replications: plan.replications,
        methods,
        mse,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// Selection table: one row per study and method.
pub fn selection_csv(results: &[StudyResult]) -> String {
    let mut out = String::from(
        "scenario,k,m,method,metric,probability,size_ratio,replications,failures,unaccepted\n",
    );
    for r in results {
        for s in &r.methods {
            let metric = match s.metric {
                Metric::Containment => "containment",
                Metric::Span => "span",
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.4},{:.4},{},{},{}",
                r.scenario,
                r.k,
                r.m,
                s.method,
                metric,
                s.probability,
                s.size_ratio,
                r.replications,
                s.failures,
                s.unaccepted
            );
        }
    }
    out
}

/// Mean-squared-error table: one row per study that computed it.
pub fn mse_csv(results: &[StudyResult]) -> String {
    let mut out = String::from("scenario,k,m,true,selected,full,reduced,replications\n");
    for r in results {
        if let Some(mse) = r.mse {
            let _ = writeln!(
                out,
                "{},{},{},{:.4},{:.4},{:.4},{:.4},{}",
                r.scenario,
                r.k,
                r.m,
                mse.true_model,
                mse.selected,
                mse.full,
                mse.reduced,
                r.replications
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_bases;

    #[test]
    fn noiseless_generation_hits_profile() {
        let b = build_bases(6).unwrap();
        let mut scn = Scenario::preset(Preset::Two, 6, 3, 1).unwrap();
        scn.sigma = 0.0;
        let d = generate(&scn, &b, 0).unwrap();
        assert_eq!(d.means(), scn.nu(&b));
        assert_eq!(d.within_ss(), 0.0);
    }

    #[test]
    fn generation_is_deterministic() {
        let b = build_bases(6).unwrap();
        let scn = Scenario::preset(Preset::One, 6, 5, 42).unwrap();
        assert_eq!(
            generate(&scn, &b, 3).unwrap(),
            generate(&scn, &b, 3).unwrap()
        );
        assert_ne!(
            generate(&scn, &b, 3).unwrap(),
            generate(&scn, &b, 4).unwrap()
        );
    }

    #[test]
    fn cyclic_norms_of_presets() {
        let b = build_bases(6).unwrap();
        for (p, norm2) in [(Preset::One, 6.0), (Preset::Two, 9.0), (Preset::Three, 4.0)] {
            let scn = Scenario::preset(p, 6, 1, 0).unwrap();
            assert!((scn.nu_cyclic(&b).norm_squared() - norm2).abs() < 1e-12);
        }
    }

    #[test]
    fn seeds_differ_across_replications() {
        let seeds: std::collections::BTreeSet<u64> =
            (0..1000).map(|r| replication_seed(7, r)).collect();
        assert_eq!(seeds.len(), 1000);
    }

    #[test]
    fn small_study_runs_and_writes_tables() {
        let b = build_bases(6).unwrap();
        let scn = Scenario::preset(Preset::One, 6, 20, 11).unwrap();
        let plan = StudyPlan {
            methods: vec![Method::Ftbs, Method::Fsts],
            replications: 4,
            mse: true,
            options: SelectionOptions::default(),
        };
        let r = run_study(&scn, &b, &plan).unwrap();
        assert_eq!(r.methods.len(), 2);
        let csv = selection_csv(std::slice::from_ref(&r));
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(mse_csv(&[r]).lines().count(), 2);
    }
}
