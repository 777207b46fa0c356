//! Spectral-gap endpoints and their coupling expansions.
//!
//! At the resonance pair around `±θ₀` the band below the gap tops out at the
//! maximum of the lower block branch and the band above bottoms out at the
//! minimum of the upper branch. Both extrema sit within `O(ε/θ₀)` of the
//! zone center, far inside the zone, so the two-wave model is exact there
//! and endpoint accuracy is set purely by the grade truncation,
//! `O(ε^{max_grade+1})`.

use crate::asymptotics::{fit_expansion, Expansion, Ladder};
use crate::gauge::GaugeExpansion;
use crate::spectral::{Branch, ResonancePair};
use crate::Result;

/// Machinery gap endpoints at one coupling.
#[derive(Debug, Clone, Copy)]
pub struct Gap {
    /// Top of the band below: max of the lower branch, attained at ζ_lower.
    pub lower: f64,
    /// Bottom of the band above: min of the upper branch, at ζ_upper.
    pub upper: f64,
    pub zeta_lower: f64,
    pub zeta_upper: f64,
}

impl Gap {
    /// Gap length; a closed gap gives 0 up to truncation noise.
    pub fn length(&self) -> f64 {
        (self.upper - self.lower).max(0.0)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.upper + self.lower)
    }
}

/// Both gap endpoints of a resonance pair at coupling ε.
pub fn gap_endpoints(g: &GaugeExpansion, pair: &ResonancePair, eps: f64) -> Result<Gap> {
    let (zeta_lower, lower) = pair.branch_extremum(g, eps, Branch::Lower)?;
    let (zeta_upper, upper) = pair.branch_extremum(g, eps, Branch::Upper)?;
    Ok(Gap {
        lower,
        upper,
        zeta_lower,
        zeta_upper,
    })
}

/// Gap endpoints along a coupling ladder.
pub fn gap_ladder(
    g: &GaugeExpansion,
    pair: &ResonancePair,
    ladder: &Ladder,
) -> Result<Vec<(f64, Gap)>> {
    ladder
        .points()
        .iter()
        .map(|&eps| Ok((eps, gap_endpoints(g, pair, eps)?)))
        .collect()
}

/// The smallest grade whose off-diagonal coefficient at the zone center is
/// nonzero — the predicted leading power of the gap length in ε. `None` when
/// every grade vanishes (the gap is closed through this truncation order).
pub fn coupling_grade(g: &GaugeExpansion, pair: &ResonancePair) -> Option<u32> {
    for j in 1..=g.max_grade() {
        let c = g.f_value(j, pair.theta0, &pair.freq_down);
        if c.norm() > 1e-300 {
            return Some(j);
        }
    }
    None
}

/// Fits `length(ε) = Σ c_k ε^{half_powers[k]/2}` over ladder data.
pub fn fit_gap_length(data: &[(f64, Gap)], half_powers: &[u32]) -> Result<Expansion> {
    let xs: Vec<f64> = data.iter().map(|&(e, _)| e).collect();
    let ys: Vec<f64> = data.iter().map(|&(_, gap)| gap.length()).collect();
    fit_expansion(&xs, &ys, half_powers)
}
