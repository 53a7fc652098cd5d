//! End-to-end analysis of one data set: decomposition, tests, selection,
//! ranking, transitivity and (optionally) betting.

use serde::{Deserialize, Serialize};

use crate::betting::{total_win, BettingReport};
use crate::error::{Error, Result};
use crate::estimate::{fit_reduced, ComparisonData, FittedModel, Sigma2Estimate};
use crate::geometry::{decompose, zero_tolerance, BasisPair, Triad};
use crate::inference::{
    lack_of_fit, ComponentTestReport, Correction, LackOfFit, MonteCarlo, TestOutcome,
};
use crate::rank::{
    classify_transitivity, descending_ranks, dominance_scores, pseudo_merits, rank_sets, Dominance,
    RankSets, TransitivityReport,
};
use crate::select::{
    rank_triads, select, Decision, Method, RankedTriad, SelectionOptions, TraceStep,
};

/// Settings of an analysis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub method: Method,
    pub alpha_lof: f64,
    pub alpha_components: f64,
    pub alpha_triads: Option<f64>,
    pub alpha_fsr: f64,
    pub correction: Correction,
    pub lof_variant: LackOfFit,
    pub seed: u64,
    pub mc_draws: usize,
    /// Include the betting table, comparing the selected profile against the
    /// transitive profile of the selected merits; refused when the noise
    /// estimate is degenerate.
    pub betting: bool,
    /// Zero tolerance for rankings and transitivity; scale-aware default when absent.
    pub tolerance: Option<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let sel = SelectionOptions::default();
        AnalysisConfig {
            method: Method::Ftbs,
            alpha_lof: sel.alpha_lof,
            alpha_components: sel.alpha_components,
            alpha_triads: sel.alpha_triads,
            alpha_fsr: sel.alpha_fsr,
            correction: sel.correction,
            lof_variant: sel.lof_variant,
            seed: sel.monte_carlo.seed,
            mc_draws: sel.monte_carlo.draws,
            betting: false,
            tolerance: None,
        }
    }
}

impl AnalysisConfig {
    pub fn selection_options(&self) -> SelectionOptions {
        SelectionOptions {
            alpha_lof: self.alpha_lof,
            alpha_components: self.alpha_components,
            correction: self.correction,
            alpha_triads: self.alpha_triads,
            alpha_fsr: self.alpha_fsr,
            lof_variant: self.lof_variant,
            monte_carlo: MonteCarlo {
                draws: self.mc_draws,
                seed: self.seed,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.selection_options().validate()?;
        if let Some(t) = self.tolerance {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::Config(format!(
                    "tolerance must be finite and nonnegative, got {t}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    /// Pair means in lexicographic pair order.
    pub nu_hat: Vec<f64>,
    pub nu_linear: Vec<f64>,
    pub nu_cyclic: Vec<f64>,
    pub merits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub triads: Vec<Triad>,
    pub mu: Vec<f64>,
    pub gamma: Vec<f64>,
    pub nu_hat: Vec<f64>,
    pub cyclic_rank: usize,
    pub rank_deficient: bool,
    pub lack_of_fit_ss: f64,
    pub rss: f64,
    pub std_errors: Vec<f64>,
}

impl From<&FittedModel> for ModelReport {
    fn from(f: &FittedModel) -> Self {
        ModelReport {
            triads: f.triads.clone(),
            mu: f.mu.iter().copied().collect(),
            gamma: f.gamma.iter().copied().collect(),
            nu_hat: f.nu_hat.iter().copied().collect(),
            cyclic_rank: f.cyclic_rank,
            rank_deficient: f.rank_deficient,
            lack_of_fit_ss: f.lack_of_fit_ss,
            rss: f.rss,
            std_errors: f.standard_errors().iter().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub method: Method,
    pub accepted: bool,
    pub triads: Vec<Triad>,
    pub trace: Vec<TraceStep>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ticked_triads: Option<Vec<Triad>>,
    pub model: ModelReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub merits: Vec<f64>,
    pub merit_ranks: Vec<f64>,
    pub pseudo_merits: Vec<f64>,
    pub dominance: Dominance,
    pub rank_sets: Vec<RankSets>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub k: usize,
    pub n: usize,
    pub config: AnalysisConfig,
    pub sigma2: Sigma2Estimate,
    pub decomposition: DecompositionReport,
    /// Lack of fit of the linear model; absent when it cannot be computed.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub linear_lack_of_fit: Option<TestOutcome>,
    /// Triad tests, most significant first.
    pub triad_tests: Vec<RankedTriad>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub component_tests: Option<ComponentTestReport>,
    pub selection: SelectionReport,
    /// Rankings from the selected model's profile.
    pub ranking: RankingReport,
    pub transitivity: TransitivityReport,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub betting: Option<BettingReport>,
}

/// Runs the full pipeline on one data set.
pub fn analyze(data: &ComparisonData, config: &AnalysisConfig) -> Result<AnalysisReport> {
    config.validate()?;
    let sigma2 = data.sigma2_hat();
    if config.betting && (sigma2.degenerate || sigma2.value <= 0.0) {
        return Err(Error::Refused(
            "betting needs a positive noise estimate, but no pair is replicated with variation"
                .into(),
        ));
    }
    let bases = BasisPair::new(data.k())?;
    let opts = config.selection_options();
    let profile = decompose(&data.means(), &bases)?;
    let reduced = fit_reduced(data, &bases)?;
    let linear_lack_of_fit =
        lack_of_fit(data, &bases, &reduced, opts.lof_variant, opts.monte_carlo).ok();
    let triad_tests = rank_triads(data, &bases, None)?;
    let sel = select(data, &bases, config.method, &opts)?;

    let nu_sel = &sel.fit.nu_hat;
    let tol = config.tolerance.unwrap_or_else(|| zero_tolerance(nu_sel));
    let merits: Vec<f64> = sel.fit.mu.iter().copied().collect();
    let ranking = RankingReport {
        merit_ranks: descending_ranks(&merits),
        merits,
        pseudo_merits: pseudo_merits(nu_sel)?.iter().copied().collect(),
        dominance: dominance_scores(nu_sel, tol)?,
        rank_sets: rank_sets(nu_sel, tol)?,
    };
    let transitivity = classify_transitivity(nu_sel, Some(tol))?;
    let betting = if config.betting {
        // The bookmaker's transitive profile uses the selected model's merits,
        // so the two profiles differ only on the support of the selected triads.
        let nu_lst = bases.b() * &sel.fit.mu;
        Some(total_win(&nu_lst, nu_sel, sigma2.value.sqrt())?)
    } else {
        None
    };
    let vec = |v: &nalgebra::DVector<f64>| v.iter().copied().collect::<Vec<_>>();
    Ok(AnalysisReport {
        k: data.k(),
        n: data.total(),
        config: config.clone(),
        sigma2,
        decomposition: DecompositionReport {
            nu_hat: vec(&profile.nu),
            nu_linear: vec(&profile.nu_linear),
            nu_cyclic: vec(&profile.nu_cyclic),
            merits: vec(&profile.mu),
        },
        linear_lack_of_fit,
        triad_tests,
        component_tests: sel.components.clone(),
        selection: SelectionReport {
            method: sel.method,
            accepted: sel.accepted,
            triads: sel.triads.clone(),
            trace: sel.trace.clone(),
            ticked_triads: sel.tick_table.as_ref().map(|t| t.ticked_triads()),
            model: ModelReport::from(&sel.fit),
        },
        ranking,
        transitivity,
        betting,
    })
}

impl SelectionReport {
    /// The step at which the selection stopped.
    pub fn final_step(&self) -> Option<&TraceStep> {
        self.trace
            .iter()
            .rev()
            .find(|s| matches!(s.decision, Decision::Accepted | Decision::Saturated))
            .or(self.trace.last())
    }
}
