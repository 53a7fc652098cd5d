//! Expected betting gains of a (possibly cyclic) model against odds set
//! by a bookmaker who assumes linear transitivity.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pair, PairIndexMap};
use crate::inference::normal_sf;

/// Win probability `P(W_ij) = 1 - Phi(nu_ij / sigma)`.
///
/// This keeps the published tail convention, under which a larger `nu_ij`
/// gives a smaller probability; negate `nu_ij` for the opposite reading.
pub fn win_probability(nu_ij: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    Ok(normal_sf(nu_ij / sigma))
}

/// Expected gain per unit stake when the true win probability is `tau` and
/// the odds are fair for `omega`.
pub fn expected_gain(tau: f64, omega: f64) -> Result<f64> {
    for (name, p) in [("tau", tau), ("omega", omega)] {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "{name} must lie strictly inside (0,1), got {p}"
            )));
        }
    }
    Ok(if tau > omega {
        (tau - omega) / omega
    } else if tau < omega {
        (omega - tau) / (1.0 - omega)
    } else {
        0.0
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetLine {
    pub pair: Pair,
    /// Win probability implied by the transitive profile.
    pub omega: f64,
    /// Win probability implied by the selected profile.
    pub tau: f64,
    pub win: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BettingReport {
    pub sigma: f64,
    pub lines: Vec<BetLine>,
    pub total_win: f64,
}

impl BettingReport {
    /// Lines with a strictly positive expected gain.
    pub fn profitable(&self) -> impl Iterator<Item = &BetLine> {
        self.lines.iter().filter(|l| l.win > 0.0)
    }
}

/// Per-pair gains and their total for a transitive and a selected profile.
pub fn total_win(
    nu_lst: &DVector<f64>,
    nu_selected: &DVector<f64>,
    sigma: f64,
) -> Result<BettingReport> {
    if nu_lst.len() != nu_selected.len() {
        return Err(Error::DimensionMismatch {
            expected: nu_lst.len(),
            actual: nu_selected.len(),
        });
    }
    let p = nu_lst.len();
    let k = ((1.0 + (1.0 + 8.0 * p as f64).sqrt()) / 2.0).round() as usize;
    if k * (k - 1) / 2 != p || k < 3 {
        return Err(Error::InvalidArgument(format!(
            "length {p} is not C(K,2) for any K >= 3"
        )));
    }
    let map = PairIndexMap::new(k);
    let lines = (0..p)
        .map(|r| {
            let omega = win_probability(nu_lst[r], sigma)?;
            let tau = win_probability(nu_selected[r], sigma)?;
            let win = if nu_lst[r] == nu_selected[r] {
                0.0
            } else {
                expected_gain(tau, omega)?
            };
            Ok(BetLine {
                pair: map.pair(r),
                omega,
                tau,
                win,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let total_win = lines.iter().map(|l| l.win).sum();
    Ok(BettingReport {
        sigma,
        lines,
        total_win,
    })
}
