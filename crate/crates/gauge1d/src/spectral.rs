//! Zones, the resonant 2×2 fiber, and the band function `G`.
//!
//! After the gauge transform, `H₂ = H₀ + W` couples the plane wave `e^{iξx}`
//! only to `e^{i(ξ+2θ)x}` for frequencies θ whose cutoff `φ_θ(ξ)` is below
//! one, i.e. for ξ inside the resonance zone `R(θ) = (-θ - w_θ, -θ + w_θ)`,
//! `w_θ = δ/(4|θ|)`. When all zones are pairwise disjoint (and none contains
//! 0), a point ξ sits in at most one zone, so the operator splits into
//! scalars off the zones and exact 2×2 blocks `{ξ, ξ+2θ}` inside them.
//!
//! The band function used for counting is
//!
//! * `G(ξ) = ĥ₂(ξ, 0)` off every zone,
//! * the upper 2×2 eigenvalue inside zones centered at positive ξ and the
//!   lower one inside their mirrors.
//!
//! `G` is deliberately discontinuous at zone edges: the two visits that a
//! coupled pair `{θ₀+ζ, -θ₀+ζ}` receives (once in each mirror zone) pick
//! complementary eigenvalues, so every block contributes each eigenvalue
//! exactly once to `meas{G ≤ λ}` and the integrated density of states
//! `N(λ) = (2π)⁻¹ meas{G ≤ λ}` comes out right.

use crate::gauge::GaugeExpansion;
use crate::lattice::{Frequency, Shell};
use crate::numeric::golden_min;
use crate::potential::Potential;
use crate::symbols::CutoffFamily;
use crate::{Error, Result};

/// One resonance zone: the interval where `φ_θ < 1` is possible.
#[derive(Debug, Clone)]
pub struct Zone {
    /// The coupling frequency θ (zone sits around ξ = -θ).
    pub freq: Frequency,
    /// Zone center `-value(θ)`.
    pub center: f64,
    /// Half width `δ/(4|θ|)`.
    pub half_width: f64,
}

impl Zone {
    pub fn lo(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn contains(&self, xi: f64) -> bool {
        xi > self.lo() && xi < self.hi()
    }
}

/// All zones of the frequencies in a shell, validated pairwise disjoint.
#[derive(Debug, Clone)]
pub struct ZoneSet {
    zones: Vec<Zone>, // sorted by center
    delta: f64,
}

impl ZoneSet {
    /// Builds zones for every nonzero frequency of order ≤ `max_order`,
    /// checking that the zones, widened by `widen`, are pairwise disjoint
    /// and stay away from ξ = 0. Configuration validation passes a widening
    /// factor (10 is the conventional safety margin); runtime uses 1.
    pub fn build(
        shell: &Shell,
        cuts: &CutoffFamily,
        widen: f64,
    ) -> Result<ZoneSet> {
        if !(widen >= 1.0) {
            return Err(Error::Config("zone widening factor must be ≥ 1".into()));
        }
        let mut zones: Vec<Zone> = Vec::new();
        for f in shell.nonzero() {
            let t = f.value(shell.basis());
            let center = -t;
            let half_width = cuts.delta / (4.0 * t.abs());
            zones.push(Zone {
                freq: f.clone(),
                center,
                half_width,
            });
        }
        zones.sort_by(|a, b| a.center.total_cmp(&b.center));
        for z in &zones {
            if z.center.abs() <= widen * z.half_width {
                return Err(Error::ZoneOverlap(format!(
                    "zone of {} (center {:.6}, half width {:.3e}, widened ×{widen}) \
                     touches ξ = 0",
                    z.freq, z.center, z.half_width
                )));
            }
        }
        for pair in zones.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.center + widen * a.half_width >= b.center - widen * b.half_width {
                return Err(Error::ZoneOverlap(format!(
                    "zones of {} and {} overlap when widened ×{widen}: \
                     [{:.6}, {:.6}] vs [{:.6}, {:.6}]",
                    a.freq,
                    b.freq,
                    a.center - widen * a.half_width,
                    a.center + widen * a.half_width,
                    b.center - widen * b.half_width,
                    b.center + widen * b.half_width
                )));
            }
        }
        Ok(ZoneSet {
            zones,
            delta: cuts.delta,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    /// The zone containing ξ, if any (zones are open intervals).
    pub fn zone_at(&self, xi: f64) -> Option<&Zone> {
        let idx = self
            .zones
            .partition_point(|z| z.center < xi);
        for i in [idx.wrapping_sub(1), idx] {
            if let Some(z) = self.zones.get(i) {
                if z.contains(xi) {
                    return Some(z);
                }
            }
        }
        None
    }

    /// The resonant pairs: one per positive zone center, carrying the
    /// downward coupling frequency (value `-θ₀ < 0`).
    pub fn pairs(&self) -> Vec<ResonancePair> {
        self.zones
            .iter()
            .filter(|z| z.center > 0.0)
            .map(|z| ResonancePair {
                freq_down: z.freq.clone(),
                theta0: z.center,
                half_width: z.half_width,
            })
            .collect()
    }

    /// The pair whose gap sits at `λ ≈ θ₀²`, by positive zone center.
    pub fn pair_near(&self, theta0: f64, tol: f64) -> Option<ResonancePair> {
        self.pairs()
            .into_iter()
            .find(|p| (p.theta0 - theta0).abs() <= tol)
    }
}

/// A mirror pair of zones around `±θ₀`, i.e. one coupled block family
/// `{θ₀ + ζ, -θ₀ + ζ}`, `|ζ| <` half width.
#[derive(Debug, Clone)]
pub struct ResonancePair {
    /// Frequency with value `-θ₀` (couples the upper point down).
    pub freq_down: Frequency,
    /// Positive zone center.
    pub theta0: f64,
    pub half_width: f64,
}

/// The two eigenvalues (lower, upper) of one coupled block, plus the
/// off-diagonal magnitude — everything the measure bookkeeping needs.
#[derive(Debug, Clone, Copy)]
pub struct BlockEigs {
    pub lower: f64,
    pub upper: f64,
    pub coupling: f64,
}

impl ResonancePair {
    /// Exact 2×2 eigenvalues of the block at offset ζ and coupling ε.
    ///
    /// The block basis is `{e^{i(θ₀+ζ)x}, e^{i(-θ₀+ζ)x}}`; diagonal entries
    /// are the scalar symbol at the two points, the off-diagonal is
    /// `ĥ₂(θ₀+ζ, θ)` with `value(θ) = -2θ₀`... the coupling frequency.
    pub fn block(&self, g: &GaugeExpansion, eps: f64, zeta: f64) -> BlockEigs {
        let dim = g.basis().len();
        let zero = Frequency::zero(dim);
        let xi_up = self.theta0 + zeta;
        let xi_dn = -self.theta0 + zeta;
        let d1 = g.h2_value(eps, xi_up, &zero);
        let d2 = g.h2_value(eps, xi_dn, &zero);
        let off = g.h2_value(eps, xi_up, &self.freq_down);
        debug_assert!(d1.im.abs() < 1e-10 * d1.re.abs().max(1.0));
        debug_assert!(d2.im.abs() < 1e-10 * d2.re.abs().max(1.0));
        let mean = 0.5 * (d1.re + d2.re);
        let half = 0.5 * (d1.re - d2.re);
        let r = (half * half + off.norm_sqr()).sqrt();
        BlockEigs {
            lower: mean - r,
            upper: mean + r,
            coupling: off.norm(),
        }
    }

    /// The per-grade local data at the zone center the case analysis of the
    /// density of states uses: `s_j = (f_j(θ₀;0) + f_j(-θ₀;0))/2` and the
    /// off-diagonal coefficients `g_j = ŵ_j(θ₀, θ_down)`, for
    /// `j = 1..=max_grade`.
    pub fn local_data(&self, g: &GaugeExpansion, pot: &Potential) -> PairLocalData {
        let dim = g.basis().len();
        let zero = Frequency::zero(dim);
        let kmax = g.max_grade();
        let mut s = Vec::with_capacity(kmax as usize);
        let mut t = Vec::with_capacity(kmax as usize);
        let mut off = Vec::with_capacity(kmax as usize);
        for j in 1..=kmax {
            let up = g.f_value(j, self.theta0, &zero);
            let dn = g.f_value(j, -self.theta0, &zero);
            debug_assert!(up.im.abs() < 1e-12 && dn.im.abs() < 1e-12);
            s.push(0.5 * (up.re + dn.re));
            t.push(0.5 * (dn.re - up.re));
            off.push(g.f_value(j, self.theta0, &self.freq_down));
        }
        PairLocalData {
            theta0: self.theta0,
            nu: pot.coeff(&self.freq_down.neg()),
            tau: pot.tau(),
            s,
            t,
            off,
        }
    }

    /// Extremum of one eigenvalue branch over the zone: the minimum of the
    /// upper branch or the maximum of the lower one. Returns `(ζ*, value)`.
    ///
    /// The extremum must sit in the inner hundredth of the zone — it is an
    /// O(ε/θ₀) perturbation of ζ = 0 for every valid configuration — and
    /// lands on a Numeric error otherwise, rather than returning a value
    /// from a regime where the two-wave model is breaking down.
    pub fn branch_extremum(
        &self,
        g: &GaugeExpansion,
        eps: f64,
        branch: Branch,
    ) -> Result<(f64, f64)> {
        let w = self.half_width;
        let f = |z: f64| match branch {
            Branch::Upper => self.block(g, eps, z).upper,
            Branch::Lower => -self.block(g, eps, z).lower,
        };
        // The branch is a hyperbola-like function of ζ; search the inner
        // fifth, then insist the result is well inside it.
        let (zeta, val) = golden_min(f, -w / 5.0, w / 5.0, 1e-14 * w.max(1e-6));
        if zeta.abs() > w / 100.0 {
            return Err(Error::Numeric(format!(
                "branch extremum at ζ = {zeta:.3e} is outside the inner \
                 hundredth of the zone around θ₀ = {} (half width {w:.3e}); \
                 the two-wave model is not trustworthy here",
                self.theta0
            )));
        }
        Ok(match branch {
            Branch::Upper => (zeta, val),
            Branch::Lower => (zeta, -val),
        })
    }
}

/// Which eigenvalue of a coupled block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Lower,
    Upper,
}

/// Zone-center data for the density-of-states case analysis: τ, the driving
/// coefficient ν = V̂_{θ₀}, and per-grade diagonal means `s_j`, half-skews
/// `t_j`, and off-diagonal corrections.
#[derive(Debug, Clone)]
pub struct PairLocalData {
    pub theta0: f64,
    pub nu: crate::C64,
    pub tau: f64,
    /// `s_j = (f_j(θ₀;0) + f_j(-θ₀;0))/2`, index j-1.
    pub s: Vec<f64>,
    /// `t_j = (f_j(-θ₀;0) - f_j(θ₀;0))/2`, index j-1.
    pub t: Vec<f64>,
    /// `ŵ_j(θ₀, θ_down)`, index j-1.
    pub off: Vec<crate::C64>,
}

/// The band function: scalar symbol off the zones, block branch inside —
/// upper in zones with positive center, lower in the mirrors.
pub fn g_value(g: &GaugeExpansion, zones: &ZoneSet, eps: f64, xi: f64) -> f64 {
    match zones.zone_at(xi) {
        None => {
            let v = g.h2_value(eps, xi, &Frequency::zero(g.basis().len()));
            debug_assert!(v.im.abs() < 1e-10 * v.re.abs().max(1.0));
            v.re
        }
        Some(z) => {
            let pair = if z.center > 0.0 {
                ResonancePair {
                    freq_down: z.freq.clone(),
                    theta0: z.center,
                    half_width: z.half_width,
                }
            } else {
                // Mirror: parametrize by the positive twin.
                ResonancePair {
                    freq_down: z.freq.neg(),
                    theta0: -z.center,
                    half_width: z.half_width,
                }
            };
            let zeta = xi - z.center;
            let eigs = pair.block(g, eps, zeta);
            if z.center > 0.0 {
                eigs.upper
            } else {
                eigs.lower
            }
        }
    }
}

/// A scan of `G` over `[lo, hi]`: `n` uniform points plus every zone edge
/// and center from both sides, sorted. Zone edges and centers appear twice
/// with one-sided values, making the jump structure explicit in the output.
pub fn g_scan(
    g: &GaugeExpansion,
    zones: &ZoneSet,
    eps: f64,
    lo: f64,
    hi: f64,
    n: usize,
) -> Vec<(f64, f64)> {
    let mut pts: Vec<f64> = crate::numeric::linspace(lo, hi, n.max(2));
    let nudge = 1e-12 * (hi - lo).abs().max(1.0);
    for z in zones.zones() {
        for x in [z.lo(), z.hi(), z.center] {
            if x > lo && x < hi {
                pts.push(x - nudge);
                pts.push(x + nudge);
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts.into_iter()
        .map(|x| (x, g_value(g, zones, eps, x)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge::GaugeOpts;
    use crate::lattice::GeneratorBasis;
    use crate::symbols::MollifierKind;
    use crate::C64;

    fn freq(n: i64) -> Frequency {
        Frequency::new(vec![n])
    }

    fn cosine(a: f64, tau: f64) -> Potential {
        Potential::from_coefficients(
            GeneratorBasis::unit(),
            &[(freq(1), C64::new(a, 0.0)), (freq(0), C64::new(tau, 0.0))],
        )
        .unwrap()
    }

    fn setup(a: f64, tau: f64, max_grade: u32) -> (Potential, GaugeExpansion, ZoneSet) {
        let pot = cosine(a, tau);
        let cuts = CutoffFamily::new(2f64.powi(-5), MollifierKind::Standard).unwrap();
        let g = GaugeExpansion::build(
            &pot,
            cuts,
            GaugeOpts {
                max_grade,
                prune_threshold: 1e-28,
            },
        )
        .unwrap();
        let shell = Shell::build(pot.basis().clone(), 4, 10_000).unwrap();
        let zones = ZoneSet::build(&shell, g.cuts(), 1.0).unwrap();
        (pot, g, zones)
    }

    #[test]
    fn zones_are_where_they_should_be() {
        let (_, g, zones) = setup(0.005, 0.0, 2);
        // Unit lattice, order 4: frequencies ±1..±4 → 8 zones at ∓1..∓4.
        assert_eq!(zones.zones().len(), 8);
        let z1 = zones.zone_at(1.0).expect("ξ=1 is a zone center");
        assert_eq!(z1.center, 1.0);
        assert_eq!(z1.freq, freq(-1));
        assert!((z1.half_width - g.cuts().delta / 4.0).abs() < 1e-18);
        assert!(zones.zone_at(0.5).is_none());
        assert!(zones.zone_at(-2.0).is_some());
        // Off-zone by a hair.
        assert!(zones.zone_at(1.0 + z1.half_width * 1.0001).is_none());
    }

    #[test]
    fn overlap_validation_rejects_fat_zones() {
        let pot = cosine(0.005, 0.0);
        let shell = Shell::build(pot.basis().clone(), 4, 10_000).unwrap();
        // δ = 2: zone of θ=∓1 has half width 0.5, widened ×10 reaches ±5.
        let cuts = CutoffFamily::new(2.0, MollifierKind::Standard).unwrap();
        let err = ZoneSet::build(&shell, &cuts, 10.0).unwrap_err();
        assert!(matches!(err, Error::ZoneOverlap(_)));
    }

    #[test]
    fn free_block_reproduces_parabolas() {
        let (_, g, zones) = setup(0.005, 0.0, 3);
        let pair = zones.pair_near(1.0, 1e-9).unwrap();
        // With ε = 0 the block eigenvalues are the two free parabolas.
        let zeta = 0.003;
        let b = pair.block(&g, 0.0, zeta);
        let up = (1.0 + zeta) * (1.0 + zeta);
        let dn = (-1.0 + zeta) * (-1.0 + zeta);
        assert!((b.lower - dn.min(up)).abs() < 1e-15);
        assert!((b.upper - dn.max(up)).abs() < 1e-15);
        assert_eq!(b.coupling, 0.0);
    }

    #[test]
    fn block_splitting_at_center_is_driven_by_nu() {
        let a = 0.005;
        let (_, g, zones) = setup(a, 0.002, 3);
        let pair = zones.pair_near(1.0, 1e-9).unwrap();
        let eps = 1e-3;
        let b = pair.block(&g, eps, 0.0);
        // At ζ = 0 the free diagonals tie; the splitting is 2|εν| + O(ε²).
        assert!((b.upper - b.lower - 2.0 * eps * a).abs() < 10.0 * eps * eps);
        // And the coupling is ε|ν| to leading order.
        assert!((b.coupling - eps * a).abs() < 10.0 * eps * eps);
    }

    #[test]
    fn g_is_diag_off_zones_and_jumps_across_centers() {
        let (_, g, zones) = setup(0.005, 0.002, 3);
        let eps = 1e-3;
        let xi = 0.62; // off-zone
        let zero = freq(0);
        assert_eq!(
            g_value(&g, &zones, eps, xi),
            g.h2_value(eps, xi, &zero).re
        );
        // G is continuous across the zone center (one branch covers the
        // whole zone) but jumps at the left edge of the positive zone, where
        // the diagonal hands over to the upper branch: jump ≈ 4θ₀w.
        let pair = zones.pair_near(1.0, 1e-9).unwrap();
        let w = pair.half_width;
        let at_center = g_value(&g, &zones, eps, 1.0 + 1e-9) - g_value(&g, &zones, eps, 1.0 - 1e-9);
        assert!(at_center.abs() < 1e-6, "center jump {at_center}");
        let edge = 1.0 - w;
        let jump = g_value(&g, &zones, eps, edge + 1e-9) - g_value(&g, &zones, eps, edge - 1e-9);
        assert!((jump - 4.0 * w).abs() < 1e-3, "edge jump {jump} vs {}", 4.0 * w);
        // Upper branch on the positive side, lower on the mirror.
        assert!((g_value(&g, &zones, eps, 1.0 + 1e-9) - pair.block(&g, eps, 1e-9).upper).abs() < 1e-15);
        assert!((g_value(&g, &zones, eps, -1.0 + 1e-9) - pair.block(&g, eps, 1e-9).lower).abs() < 1e-15);
    }

    #[test]
    fn mirror_visits_agree_and_g_is_even_for_real_potentials() {
        let (_, g, zones) = setup(0.005, 0.002, 3);
        let eps = 1e-3;
        for &zeta in &[-0.004, -0.001, 0.0, 0.002, 0.0045] {
            let hi = g_value(&g, &zones, eps, 1.0 + zeta);
            let lo = g_value(&g, &zones, eps, -1.0 + zeta);
            let pair = zones.pair_near(1.0, 1e-9).unwrap();
            let b = pair.block(&g, eps, zeta);
            assert!((hi - b.upper).abs() < 1e-15);
            assert!((lo - b.lower).abs() < 1e-15);
        }
        // Off the zones an even potential gives an even G.
        for &xi in &[0.3, 0.62, 2.7] {
            let a = g_value(&g, &zones, eps, xi);
            let b = g_value(&g, &zones, eps, -xi);
            assert!((a - b).abs() < 1e-13, "G({xi}) = {a} vs G(-{xi}) = {b}");
        }
        // In-zone, mirror points take complementary branches by design, so
        // G itself is not even there — but the block eigenvalue SET is.
        let pair = zones.pair_near(1.0, 1e-9).unwrap();
        let b1 = pair.block(&g, eps, 2e-4);
        let b2 = pair.block(&g, eps, -2e-4);
        assert!((b1.lower - b2.lower).abs() < 1e-13);
        assert!((b1.upper - b2.upper).abs() < 1e-13);
    }

    #[test]
    fn branch_extrema_sit_at_the_gap_edges() {
        let a = 0.005;
        let (_, g, zones) = setup(a, 0.0, 3);
        let pair = zones.pair_near(1.0, 1e-9).unwrap();
        let eps = 1e-3;
        let (z_lo, top_of_band) = pair.branch_extremum(&g, eps, Branch::Lower).unwrap();
        let (z_hi, bottom_of_band) = pair.branch_extremum(&g, eps, Branch::Upper).unwrap();
        assert!(z_lo.abs() < 1e-6 && z_hi.abs() < 1e-6);
        // Pure cosine: the gap is centered near 1 with length 2εa + O(ε²).
        let len = bottom_of_band - top_of_band;
        assert!((len - 2.0 * eps * a).abs() < 20.0 * eps * eps, "len {len}");
        // Edges must bracket every in-zone block: lower branch ≤ top,
        // upper branch ≥ bottom.
        for &zeta in &[-0.005, -0.002, 0.001, 0.004] {
            let b = pair.block(&g, eps, zeta);
            assert!(b.lower <= top_of_band + 1e-15);
            assert!(b.upper >= bottom_of_band - 1e-15);
        }
    }

    #[test]
    fn local_data_matches_hand_derived_values() {
        let a = 0.005;
        let tau = 0.002;
        let (pot, g, zones) = setup(a, tau, 3);
        let pair = zones.pair_near(1.0, 1e-9).unwrap();
        let data = pair.local_data(&g, &pot);
        assert!((data.nu.re - a).abs() < 1e-18 && data.nu.im == 0.0);
        assert_eq!(data.tau, tau);
        // s₁ = τ, t₁ = 0, off₁ = ν (in-zone, 1 - φ = 1 at the center).
        assert!((data.s[0] - tau).abs() < 1e-18);
        assert!(data.t[0].abs() < 1e-18);
        assert!((data.off[0] - C64::new(a, 0.0)).norm() < 1e-18);
        // s₂(0) = -Σ_{θ≠-θ₀} |V̂_θ|²/(4(θ₀+θ)θ): the single surviving term
        // is θ = +1: -a²/8. Hand-derived; the mean τ does not enter s₂.
        assert!(
            (data.s[1] - (-a * a / 8.0)).abs() < 1e-18,
            "s₂(0) = {} vs {}",
            data.s[1],
            -a * a / 8.0
        );
        // Single frequency: no second-order off-diagonal at the center.
        assert!(data.off[1].norm() < 1e-18, "g₂(0) = {}", data.off[1]);
    }

    #[test]
    fn g_scan_emits_one_sided_zone_edges() {
        let (_, g, zones) = setup(0.005, 0.0, 2);
        let eps = 1e-3;
        let scan = g_scan(&g, &zones, eps, 0.5, 1.5, 51);
        // The left zone edge must appear as a two-sided pair with the
        // diagonal-to-upper-branch jump of ≈ 4θ₀w.
        let z = zones.zone_at(1.0).unwrap();
        let (edge, w) = (z.lo(), z.half_width);
        let near_edge: Vec<&(f64, f64)> = scan
            .iter()
            .filter(|(x, _)| (x - edge).abs() < 1e-10)
            .collect();
        assert_eq!(near_edge.len(), 2);
        let jump = near_edge[1].1 - near_edge[0].1;
        assert!((jump - 4.0 * w).abs() < 1e-3, "edge jump {jump}");
        // Scan is sorted in ξ.
        for pair in scan.windows(2) {
            assert!(pair[0].0 <= pair[1].0);
        }
    }
}
