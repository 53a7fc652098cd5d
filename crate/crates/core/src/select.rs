//! Triad-selection procedures: forward stepwise triad selection (FSTS),
//! forward tick-based selection (FTBS), forward stepwise regression (FSR),
//! and FTBS-screened hybrids.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::estimate::{fit_intermediate, ComparisonData, FittedModel};
use crate::geometry::{tick_table_default, BasisPair, TickTable, Triad};
use crate::inference::{
    component_tests, lack_of_fit, normal_sf, triad_statistic, ComponentTestReport, Correction,
    LackOfFit, MonteCarlo,
};
use crate::linalg::IncrementalBasis;

/// Selection procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ftbs,
    Fsts,
    Fsr,
    FtbsFsr,
    FtbsFsts,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Ftbs,
        Method::Fsts,
        Method::Fsr,
        Method::FtbsFsr,
        Method::FtbsFsts,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ftbs => "ftbs",
            Method::Fsts => "fsts",
            Method::Fsr => "fsr",
            Method::FtbsFsr => "ftbs-fsr",
            Method::FtbsFsts => "ftbs-fsts",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .find(|m| m.as_str() == s)
            .copied()
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method '{s}' (expected ftbs, fsts, fsr, ftbs-fsr or ftbs-fsts)"
                ))
            })
    }
}

/// Significance levels and test settings used by the selection procedures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionOptions {
    /// Level of every lack-of-fit test.
    pub alpha_lof: f64,
    /// Level of the per-pair component tests behind the estimated tick table.
    pub alpha_components: f64,
    pub correction: Correction,
    /// When set, FSTS only considers triads whose test p-value is below this level.
    pub alpha_triads: Option<f64>,
    /// Level of the partial F-tests in FSR.
    pub alpha_fsr: f64,
    pub lof_variant: LackOfFit,
    pub monte_carlo: MonteCarlo,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        SelectionOptions {
            alpha_lof: 0.05,
            alpha_components: 0.05,
            correction: Correction::Bonferroni,
            alpha_triads: None,
            alpha_fsr: 0.05,
            lof_variant: LackOfFit::Rn,
            monte_carlo: MonteCarlo::default(),
        }
    }
}

impl SelectionOptions {
    pub fn validate(&self) -> Result<()> {
        let mut levels = vec![
            ("alpha_lof", self.alpha_lof),
            ("alpha_components", self.alpha_components),
            ("alpha_fsr", self.alpha_fsr),
        ];
        if let Some(a) = self.alpha_triads {
            levels.push(("alpha_triads", a));
        }
        for (name, a) in levels {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0,1), got {a}")));
            }
        }
        Ok(())
    }
}

/// Outcome of one step of a selection trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    /// Lack of fit not rejected; the candidate is selected.
    Accepted,
    /// Lack of fit rejected; move on.
    Rejected,
    /// No residual degrees of freedom, the test is undefined.
    Saturated,
    /// FSR: the partial F-test admits the triad.
    Added,
    /// FSR: the best candidate fails the partial F-test or reduces nothing.
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub triads: Vec<Triad>,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub decision: Decision,
}

/// A triad with its consistency-test result, in FSTS order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedTriad {
    pub triad: Triad,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub method: Method,
    pub triads: Vec<Triad>,
    pub fit: FittedModel,
    pub trace: Vec<TraceStep>,
    /// False when no candidate passed the lack-of-fit test; `triads` then
    /// holds the last candidate examined.
    pub accepted: bool,
    pub tick_table: Option<TickTable>,
    pub components: Option<ComponentTestReport>,
    pub options: SelectionOptions,
}

/// Runs the chosen procedure.
pub fn select(
    data: &ComparisonData,
    bases: &BasisPair,
    method: Method,
    opts: &SelectionOptions,
) -> Result<SelectionResult> {
    match method {
        Method::Ftbs => ftbs(data, bases, opts),
        Method::Fsts => fsts(data, bases, opts),
        Method::Fsr => fsr(data, bases, opts),
        Method::FtbsFsr => ftbs_screened(data, bases, Method::Fsr, opts),
        Method::FtbsFsts => ftbs_screened(data, bases, Method::Fsts, opts),
    }
}

/// Triad p-values in the noiseless limit: a nonzero statistic is
/// infinitely significant, a zero statistic carries no evidence.
fn triad_p_value(statistic: f64, sigma2: f64, zero_tol: f64) -> f64 {
    if sigma2 > 0.0 {
        (2.0 * normal_sf(statistic.abs() / sigma2.sqrt())).min(1.0)
    } else if statistic.abs() > zero_tol {
        0.0
    } else {
        1.0
    }
}

/// All triads (or those of `pool`) ordered by triad-test p-value ascending,
/// then by |statistic| descending, then lexicographically.
pub fn rank_triads(
    data: &ComparisonData,
    bases: &BasisPair,
    pool: Option<&[Triad]>,
) -> Result<Vec<RankedTriad>> {
    let sigma2 = data.sigma2_hat().value;
    let zero_tol = crate::geometry::zero_tolerance(&data.means());
    let triads: Vec<Triad> = match pool {
        Some(p) => p.to_vec(),
        None => bases.triad_map().triads().to_vec(),
    };
    let mut ranked = triads
        .into_iter()
        .map(|t| {
            let statistic = triad_statistic(data, t)?;
            Ok(RankedTriad {
                triad: t,
                statistic,
                p_value: triad_p_value(statistic, sigma2, zero_tol),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| {
        a.p_value
            .total_cmp(&b.p_value)
            .then(b.statistic.abs().total_cmp(&a.statistic.abs()))
            .then(a.triad.cmp(&b.triad))
    });
    Ok(ranked)
}

/// Fits a candidate and tests its lack of fit.
fn evaluate(
    data: &ComparisonData,
    bases: &BasisPair,
    triads: &[Triad],
    opts: &SelectionOptions,
) -> Result<(FittedModel, TraceStep)> {
    let fit = fit_intermediate(data, bases, triads)?;
    let step = match lack_of_fit(data, bases, &fit, opts.lof_variant, opts.monte_carlo) {
        Ok(out) => TraceStep {
            triads: triads.to_vec(),
            statistic: Some(out.statistic),
            p_value: Some(out.p_value),
            decision: if out.p_value < opts.alpha_lof {
                Decision::Rejected
            } else {
                Decision::Accepted
            },
        },
        Err(Error::Saturated(_)) => TraceStep {
            triads: triads.to_vec(),
            statistic: Some(fit.lack_of_fit_ss),
            p_value: None,
            decision: Decision::Saturated,
        },
        Err(e) => return Err(e),
    };
    Ok((fit, step))
}

/// Walks a nested candidate sequence and stops at the first accepted model.
fn walk_candidates(
    data: &ComparisonData,
    bases: &BasisPair,
    candidates: Vec<Vec<Triad>>,
    opts: &SelectionOptions,
) -> Result<(Vec<Triad>, FittedModel, Vec<TraceStep>, bool)> {
    let mut trace = Vec::new();
    let mut last = None;
    for cand in candidates {
        let (fit, step) = evaluate(data, bases, &cand, opts)?;
        let decision = step.decision;
        trace.push(step);
        match decision {
            Decision::Accepted => return Ok((cand, fit, trace, true)),
            Decision::Saturated => return Ok((cand, fit, trace, false)),
            _ => last = Some((cand, fit)),
        }
    }
    let (cand, fit) = last.expect("candidate sequence starts with the linear model");
    Ok((cand, fit, trace, false))
}

fn check_inputs(data: &ComparisonData, bases: &BasisPair, opts: &SelectionOptions) -> Result<()> {
    opts.validate()?;
    if data.k() != bases.k() {
        return Err(Error::DimensionMismatch {
            expected: bases.k(),
            actual: data.k(),
        });
    }
    Ok(())
}

/// Forward stepwise triad selection over all triads.
pub fn fsts(
    data: &ComparisonData,
    bases: &BasisPair,
    opts: &SelectionOptions,
) -> Result<SelectionResult> {
    check_inputs(data, bases, opts)?;
    fsts_pool(data, bases, None, opts, Method::Fsts)
}

fn fsts_pool(
    data: &ComparisonData,
    bases: &BasisPair,
    pool: Option<&[Triad]>,
    opts: &SelectionOptions,
    method: Method,
) -> Result<SelectionResult> {
    let ranked = rank_triads(data, bases, pool)?;
    let order: Vec<Triad> = ranked
        .iter()
        .filter(|r| opts.alpha_triads.is_none_or(|a| r.p_value < a))
        .map(|r| r.triad)
        .collect();
    let candidates = (0..=order.len()).map(|a| order[..a].to_vec()).collect();
    let (triads, fit, trace, accepted) = walk_candidates(data, bases, candidates, opts)?;
    Ok(SelectionResult {
        method,
        triads,
        fit,
        trace,
        accepted,
        tick_table: None,
        components: None,
        options: *opts,
    })
}

/// Estimated tick table from component tests and the greedy independent
/// column classes `C3_lin`, `C2_lin+`, `C1_lin+`.
#[derive(Debug, Clone, PartialEq)]
pub struct TickClasses {
    pub components: ComponentTestReport,
    pub table: TickTable,
    pub three: Vec<Triad>,
    pub two: Vec<Triad>,
    pub one: Vec<Triad>,
}

impl TickClasses {
    /// The nested candidates `S1* ⊆ S2* ⊆ S3* ⊆ S4*`, with repeats dropped.
    pub fn nested_candidates(&self) -> Vec<Vec<Triad>> {
        let mut out: Vec<Vec<Triad>> = vec![Vec::new()];
        let mut cur = Vec::new();
        for block in [&self.three, &self.two, &self.one] {
            if block.is_empty() {
                continue;
            }
            cur.extend_from_slice(block);
            out.push(cur.clone());
        }
        out
    }
}

/// Builds the estimated tick table and its independent column classes.
///
/// Independence is extracted greedily in lexicographic order with a single
/// growing basis, first over the 3-tick, then the 2-tick, then the 1-tick
/// columns, so the final design always has full column rank.
pub fn tick_classes(
    data: &ComparisonData,
    bases: &BasisPair,
    opts: &SelectionOptions,
) -> Result<TickClasses> {
    let components = component_tests(data, bases, opts.alpha_components, opts.correction)?;
    let nu_star = components.thresholded_profile();
    let table = tick_table_default(&nu_star, bases.k())?;
    let mut basis = IncrementalBasis::new(bases.num_pairs());
    let mut take = |class: &[Triad]| -> Vec<Triad> {
        class
            .iter()
            .filter(|t| basis.try_push(&bases.triad_column(**t)))
            .copied()
            .collect()
    };
    let three = take(&table.classes[3]);
    let two = take(&table.classes[2]);
    let one = take(&table.classes[1]);
    Ok(TickClasses {
        components,
        table,
        three,
        two,
        one,
    })
}

/// Forward tick-based selection.
pub fn ftbs(
    data: &ComparisonData,
    bases: &BasisPair,
    opts: &SelectionOptions,
) -> Result<SelectionResult> {
    check_inputs(data, bases, opts)?;
    let classes = tick_classes(data, bases, opts)?;
    let (triads, fit, trace, accepted) =
        walk_candidates(data, bases, classes.nested_candidates(), opts)?;
    Ok(SelectionResult {
        method: Method::Ftbs,
        triads,
        fit,
        trace,
        accepted,
        tick_table: Some(classes.table),
        components: Some(classes.components),
        options: *opts,
    })
}

/// Forward stepwise regression over all triad columns.
pub fn fsr(
    data: &ComparisonData,
    bases: &BasisPair,
    opts: &SelectionOptions,
) -> Result<SelectionResult> {
    check_inputs(data, bases, opts)?;
    fsr_pool(data, bases, bases.triad_map().triads(), opts, Method::Fsr)
}

fn fsr_pool(
    data: &ComparisonData,
    bases: &BasisPair,
    pool: &[Triad],
    opts: &SelectionOptions,
    method: Method,
) -> Result<SelectionResult> {
    let n = data.total() as f64;
    let mut current = fit_intermediate(data, bases, &[])?;
    let mut selected: Vec<Triad> = Vec::new();
    let mut basis = IncrementalBasis::new(bases.num_pairs());
    let mut trace = Vec::new();
    let scale = 1.0 + data.within_ss() + data.count_vector().dot(&data.means().map(|x| x * x));
    loop {
        let mut best: Option<(Triad, FittedModel)> = None;
        for t in pool {
            if selected.contains(t) || basis.contains(&bases.triad_column(*t)) {
                continue;
            }
            let mut cand = selected.clone();
            cand.push(*t);
            let fit = fit_intermediate(data, bases, &cand)?;
            if best.as_ref().is_none_or(|(_, b)| fit.rss < b.rss) {
                best = Some((*t, fit));
            }
        }
        let Some((triad, fit)) = best else { break };
        let mut cand = selected.clone();
        cand.push(triad);
        let reduction = current.rss - fit.rss;
        let df = n - fit.num_params() as f64;
        if reduction <= 1e-12 * scale || df < 1.0 {
            trace.push(TraceStep {
                triads: cand,
                statistic: None,
                p_value: None,
                decision: Decision::Stopped,
            });
            break;
        }
        // A perfect fit leaves no residual variance: the F statistic is
        // unbounded and reported as absent.
        let (f_stat, p_value) = if fit.rss <= 1e-14 * scale {
            (None, 0.0)
        } else {
            let f = reduction / (fit.rss / df);
            let dist =
                FisherSnedecor::new(1.0, df).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            (Some(f), dist.sf(f))
        };
        if p_value > opts.alpha_fsr {
            trace.push(TraceStep {
                triads: cand,
                statistic: f_stat,
                p_value: Some(p_value),
                decision: Decision::Stopped,
            });
            break;
        }
        trace.push(TraceStep {
            triads: cand.clone(),
            statistic: f_stat,
            p_value: Some(p_value),
            decision: Decision::Added,
        });
        basis.try_push(&bases.triad_column(triad));
        selected = cand;
        current = fit;
    }
    Ok(SelectionResult {
        method,
        triads: selected,
        fit: current,
        trace,
        accepted: true,
        tick_table: None,
        components: None,
        options: *opts,
    })
}

/// FTBS used as a screen: the inner method (FSR or FSTS) only considers
/// triads with at least one tick in the estimated tick table.
pub fn ftbs_screened(
    data: &ComparisonData,
    bases: &BasisPair,
    inner: Method,
    opts: &SelectionOptions,
) -> Result<SelectionResult> {
    check_inputs(data, bases, opts)?;
    let (method, run_fsr) = match inner {
        Method::Fsr => (Method::FtbsFsr, true),
        Method::Fsts => (Method::FtbsFsts, false),
        other => {
            return Err(Error::InvalidArgument(format!(
                "screened selection needs fsr or fsts as the inner method, got {other}"
            )))
        }
    };
    let classes = tick_classes(data, bases, opts)?;
    let pool = classes.table.ticked_triads();
    let mut result = if pool.is_empty() {
        let (fit, step) = evaluate(data, bases, &[], opts)?;
        let accepted = step.decision == Decision::Accepted;
        SelectionResult {
            method,
            triads: Vec::new(),
            fit,
            trace: vec![step],
            accepted,
            tick_table: None,
            components: None,
            options: *opts,
        }
    } else if run_fsr {
        fsr_pool(data, bases, &pool, opts, method)?
    } else {
        fsts_pool(data, bases, Some(&pool), opts, method)?
    };
    result.tick_table = Some(classes.table);
    result.components = Some(classes.components);
    Ok(result)
}
