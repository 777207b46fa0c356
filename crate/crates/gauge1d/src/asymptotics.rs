//! Coupling ladders and asymptotic-expansion fitting.
//!
//! The machinery produces quantities `q(ε)` (gap lengths, band edges,
//! density-of-states values) that should follow an expansion
//! `q(ε) = Σ_k c_k ε^{p_k} + o(ε^{p_max})` with known half-integer powers.
//! This module fits such expansions over geometric coupling ladders and fits
//! error orders `|q_machinery - q_oracle| ≈ C ε^r` against a stated
//! numerical floor, reporting honestly when the differences are too small to
//! carry slope information.

use crate::numeric::{solve_lsq, Real};
use crate::{Error, Result};

/// Exponents are kept on the half-integer grid as `half_power / 2`, which
/// covers every power the theory produces (`1/2, 1, 3/2, 2, …`) and keeps
/// arbitrary-precision evaluation exact-able (one square root, then integer
/// powers).
pub fn power_of<R: Real>(x: &R, half_power: u32) -> R {
    let base = if half_power % 2 == 0 {
        x.clone()
    } else {
        x.clone().sqrt()
    };
    let e = if half_power % 2 == 0 {
        half_power / 2
    } else {
        half_power
    };
    if e == 0 {
        return R::one();
    }
    let mut acc = base.clone();
    for _ in 1..e {
        acc = acc * base.clone();
    }
    acc
}

/// A descending geometric coupling ladder.
#[derive(Debug, Clone)]
pub struct Ladder {
    points: Vec<f64>,
}

impl Ladder {
    /// `n` points `top, top·ratio, top·ratio², …` (descending).
    pub fn geometric(top: f64, ratio: f64, n: usize) -> Result<Ladder> {
        if !(top > 0.0 && top.is_finite()) {
            return Err(Error::Config(format!("ladder top {top} must be positive")));
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::Config(format!(
                "ladder ratio {ratio} must lie in (0, 1)"
            )));
        }
        if n < 2 {
            return Err(Error::Config("ladder needs at least 2 points".into()));
        }
        let mut points = Vec::with_capacity(n);
        let mut x = top;
        for _ in 0..n {
            points.push(x);
            x *= ratio;
        }
        Ok(Ladder { points })
    }

    /// The conventional ladder: 12 points halving from `top`.
    pub fn default_from(top: f64) -> Result<Ladder> {
        Ladder::geometric(top, 0.5, 12)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// A fitted expansion `Σ_k coeffs[k] · x^{half_powers[k]/2}`.
#[derive(Debug, Clone)]
pub struct Expansion {
    pub half_powers: Vec<u32>,
    pub coeffs: Vec<f64>,
    /// Condition estimate of the scaled design matrix.
    pub cond: f64,
    /// Largest fit residual relative to the largest |y|.
    pub max_rel_residual: f64,
}

impl Expansion {
    pub fn eval(&self, x: f64) -> f64 {
        self.half_powers
            .iter()
            .zip(&self.coeffs)
            .map(|(&hp, &c)| c * power_of(&x, hp))
            .sum()
    }

    /// Coefficient of `x^{half_power/2}`, if that power was fitted.
    pub fn coeff_of(&self, half_power: u32) -> Option<f64> {
        self.half_powers
            .iter()
            .position(|&hp| hp == half_power)
            .map(|i| self.coeffs[i])
    }
}

/// Condition-number guard: beyond this the fit is refused rather than
/// silently returning noise-dominated coefficients.
pub const COND_LIMIT: f64 = 1e10;

/// Least-squares fit of `y ≈ Σ c_k x^{half_powers[k]/2}` over the given
/// samples, generic over the scalar type (arbitrary-precision fits reuse
/// this code path). Returns the coefficients and the residual vector; the
/// condition estimate is checked against [`COND_LIMIT`].
pub fn fit_expansion_generic<R: Real>(
    xs: &[R],
    ys: &[R],
    half_powers: &[u32],
) -> Result<(Vec<R>, f64, Vec<R>)> {
    if xs.len() != ys.len() {
        return Err(Error::Numeric("fit: xs and ys length mismatch".into()));
    }
    if xs.len() < half_powers.len() {
        return Err(Error::Numeric(format!(
            "fit: {} samples cannot determine {} coefficients",
            xs.len(),
            half_powers.len()
        )));
    }
    if half_powers.is_empty() {
        return Err(Error::Numeric("fit: no powers requested".into()));
    }
    let mut sorted = half_powers.to_vec();
    sorted.dedup();
    if sorted.len() != half_powers.len() {
        return Err(Error::Numeric("fit: duplicate powers".into()));
    }
    let a: Vec<Vec<R>> = xs
        .iter()
        .map(|x| half_powers.iter().map(|&hp| power_of(x, hp)).collect())
        .collect();
    let (coeffs, cond, residuals) = solve_lsq(&a, ys)?;
    if !(cond < COND_LIMIT) {
        return Err(Error::Numeric(format!(
            "fit: design matrix condition ≈ {cond:.3e} exceeds {COND_LIMIT:.0e}; \
             the requested powers are not separable on this ladder"
        )));
    }
    Ok((coeffs, cond, residuals))
}

/// f64 fit with bookkeeping: see [`fit_expansion_generic`].
pub fn fit_expansion(xs: &[f64], ys: &[f64], half_powers: &[u32]) -> Result<Expansion> {
    let (coeffs, cond, residuals) = fit_expansion_generic(xs, ys, half_powers)?;
    let y_scale = ys.iter().fold(0.0f64, |m, y| m.max(y.abs())).max(1e-300);
    let max_rel_residual = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs())) / y_scale;
    Ok(Expansion {
        half_powers: half_powers.to_vec(),
        coeffs,
        cond,
        max_rel_residual,
    })
}

/// Outcome of an error-order fit.
#[derive(Debug, Clone)]
pub enum OrderFit {
    /// Enough signal above the floor: `|diff| ≈ coeff · ε^order` fitted over
    /// `used` points.
    Slope { order: f64, coeff: f64, used: usize },
    /// Differences are numerically indistinguishable from the floor — the
    /// strongest statement the data supports is `|diff| ≤ max_abs`.
    AtFloor { max_abs: f64, floor: f64 },
}

/// Fits `log|diff| = log C + r·log ε` over the points whose difference rises
/// at least 10× above the stated numerical floor. With fewer than three such
/// points no slope claim is made and the result is [`OrderFit::AtFloor`].
pub fn fit_error_order(eps: &[f64], diffs: &[f64], floor: f64) -> Result<OrderFit> {
    if eps.len() != diffs.len() || eps.is_empty() {
        return Err(Error::Numeric("order fit: bad sample shape".into()));
    }
    if !(floor >= 0.0) {
        return Err(Error::Numeric("order fit: floor must be ≥ 0".into()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut max_abs = 0.0f64;
    for (&e, &d) in eps.iter().zip(diffs) {
        let a = d.abs();
        max_abs = max_abs.max(a);
        if a > 10.0 * floor && a > 0.0 {
            xs.push(e.ln());
            ys.push(a.ln());
        }
    }
    if xs.len() < 3 {
        return Ok(OrderFit::AtFloor { max_abs, floor });
    }
    // Two-column least squares: [1, ln ε].
    let a: Vec<Vec<f64>> = xs.iter().map(|&x| vec![1.0, x]).collect();
    let (c, _cond, _res) = solve_lsq(&a, &ys)?;
    Ok(OrderFit::Slope {
        order: c[1],
        coeff: c[0].exp(),
        used: xs.len(),
    })
}

/// One window's fitted expansion, ready for cross-window comparison.
///
/// `budget` is the absolute coefficient tolerance this fit vouches for (fit
/// residual propagated to coefficient space, plus any model-truncation slack).
/// A half-power absent from `half_powers` is treated as having coefficient
/// exactly `0.0` with the same budget — a fit that resolved the window to its
/// residual and saw no such term has, in fact, measured that coefficient as
/// zero at that accuracy.
#[derive(Debug, Clone)]
pub struct WindowFit {
    /// Dyadic window index (smaller = larger ε).
    pub n: u64,
    /// Half-powers of ε present in this window's fit, ascending.
    pub half_powers: Vec<u32>,
    /// Coefficients aligned with `half_powers`.
    pub coeffs: Vec<f64>,
    /// Absolute tolerance on each coefficient.
    pub budget: f64,
}

/// Outcome of stitching per-window fits into one global expansion.
#[derive(Debug, Clone)]
pub enum Stitch {
    /// All compared coefficients agree within the pairwise budgets: the
    /// per-window data is consistent with a single global expansion.
    Consistent {
        /// Half-powers compared (the `m` smallest in the fits' union).
        half_powers: Vec<u32>,
        /// Budget-weighted means across windows, aligned with `half_powers`.
        coeffs: Vec<f64>,
        /// Max |c_window − mean| per half-power.
        spreads: Vec<f64>,
    },
    /// Two windows disagree beyond their combined budgets. This certificate is
    /// the super-resonance detector's positive output: the named coefficient
    /// genuinely differs between the named windows, so no single expansion in
    /// powers of ε^{1/2} fits all windows.
    Inconsistent {
        /// Half-power of ε whose coefficient oscillates (worst offender).
        half_power: u32,
        /// Window indices of the most violating pair.
        window_a: u64,
        window_b: u64,
        /// The two incompatible coefficient values.
        value_a: f64,
        value_b: f64,
        /// |value_a − value_b|.
        gap: f64,
        /// Combined budget the gap exceeds.
        budget: f64,
    },
}

impl Stitch {
    /// True for the [`Stitch::Consistent`] arm.
    pub fn is_consistent(&self) -> bool {
        matches!(self, Stitch::Consistent { .. })
    }
}

/// Compares the `m_leading` smallest half-powers appearing across per-window
/// fits. If every pair of windows agrees on every compared coefficient within
/// the sum of the two budgets, the fits merge into one global expansion
/// (budget-weighted mean per power). Otherwise the result names the worst
/// violating coefficient and window pair — the inconsistency certificate.
///
/// Windows are compared by their `n` field, so the result is invariant under
/// permutations of `fits`; duplicate `n` values are rejected. A single fit
/// passes through unchanged (restricted to its `m_leading` smallest powers).
pub fn stitch(fits: &[WindowFit], m_leading: usize) -> Result<Stitch> {
    if fits.is_empty() || m_leading == 0 {
        return Err(Error::Validation(
            "stitch: need at least one window fit and one leading power".into(),
        ));
    }
    for f in fits {
        if f.half_powers.len() != f.coeffs.len() {
            return Err(Error::Validation(format!(
                "stitch: window {} has {} powers but {} coefficients",
                f.n,
                f.half_powers.len(),
                f.coeffs.len()
            )));
        }
        if !(f.budget >= 0.0) {
            return Err(Error::Validation(format!(
                "stitch: window {} has invalid budget {}",
                f.n, f.budget
            )));
        }
    }
    let mut sorted: Vec<&WindowFit> = fits.iter().collect();
    sorted.sort_by_key(|f| f.n);
    if sorted.windows(2).any(|w| w[0].n == w[1].n) {
        return Err(Error::Validation(
            "stitch: duplicate window index".into(),
        ));
    }

    // The m smallest half-powers present anywhere.
    let mut powers: Vec<u32> = sorted
        .iter()
        .flat_map(|f| f.half_powers.iter().copied())
        .collect();
    powers.sort_unstable();
    powers.dedup();
    powers.truncate(m_leading);

    let coeff_of = |f: &WindowFit, hp: u32| -> f64 {
        f.half_powers
            .iter()
            .position(|&p| p == hp)
            .map_or(0.0, |i| f.coeffs[i])
    };

    // Worst pairwise violation, measured as gap/(combined budget).
    let mut worst: Option<(f64, u32, usize, usize, f64, f64, f64)> = None;
    for &hp in &powers {
        for a in 0..sorted.len() {
            for b in a + 1..sorted.len() {
                let (ca, cb) = (coeff_of(sorted[a], hp), coeff_of(sorted[b], hp));
                let gap = (ca - cb).abs();
                let budget = sorted[a].budget + sorted[b].budget;
                if gap > budget {
                    let ratio = gap / budget.max(f64::MIN_POSITIVE);
                    if worst.map_or(true, |w| ratio > w.0) {
                        worst = Some((ratio, hp, a, b, ca, cb, budget));
                    }
                }
            }
        }
    }
    if let Some((_, hp, a, b, ca, cb, budget)) = worst {
        return Ok(Stitch::Inconsistent {
            half_power: hp,
            window_a: sorted[a].n,
            window_b: sorted[b].n,
            value_a: ca,
            value_b: cb,
            gap: (ca - cb).abs(),
            budget,
        });
    }

    // Consistent: budget-weighted mean (tight windows dominate).
    let mut coeffs = Vec::with_capacity(powers.len());
    let mut spreads = Vec::with_capacity(powers.len());
    for &hp in &powers {
        let mut num = 0.0;
        let mut den = 0.0;
        for f in &sorted {
            let w = 1.0 / f.budget.max(1e-300);
            num += w * coeff_of(f, hp);
            den += w;
        }
        let mean = num / den;
        let spread = sorted
            .iter()
            .map(|f| (coeff_of(f, hp) - mean).abs())
            .fold(0.0f64, f64::max);
        coeffs.push(mean);
        spreads.push(spread);
    }
    Ok(Stitch::Consistent {
        half_powers: powers,
        coeffs,
        spreads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wide::{BigFixed, Prec};

    #[test]
    fn ladder_is_geometric_and_descending() {
        let l = Ladder::default_from(0.01).unwrap();
        assert_eq!(l.len(), 12);
        assert_eq!(l.points()[0], 0.01);
        for w in l.points().windows(2) {
            assert!((w[1] / w[0] - 0.5).abs() < 1e-15);
        }
        assert!(Ladder::geometric(0.01, 1.5, 5).is_err());
        assert!(Ladder::geometric(-1.0, 0.5, 5).is_err());
    }

    #[test]
    fn integer_power_fit_is_exact() {
        let l = Ladder::default_from(0.02).unwrap();
        let xs = l.points().to_vec();
        let ys: Vec<f64> = xs.iter().map(|&x| 3.0 * x - 2.0 * x * x).collect();
        let fit = fit_expansion(&xs, &ys, &[2, 4]).unwrap();
        assert!((fit.coeff_of(2).unwrap() - 3.0).abs() < 1e-12);
        assert!((fit.coeff_of(4).unwrap() + 2.0).abs() < 1e-10);
        assert!(fit.max_rel_residual < 1e-13);
        assert!((fit.eval(0.01) - (0.03 - 0.0002)).abs() < 1e-14);
    }

    #[test]
    fn half_power_fit_recovers_sqrt_terms() {
        let l = Ladder::default_from(0.01).unwrap();
        let xs = l.points().to_vec();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| 0.5 * x.sqrt() + 1.25 * x * x.sqrt())
            .collect();
        let fit = fit_expansion(&xs, &ys, &[1, 3]).unwrap();
        assert!((fit.coeff_of(1).unwrap() - 0.5).abs() < 1e-11);
        assert!((fit.coeff_of(3).unwrap() - 1.25).abs() < 1e-8);
    }

    #[test]
    fn duplicate_or_inseparable_powers_are_refused() {
        let xs = vec![0.01, 0.005, 0.0025, 0.00125];
        let ys = vec![1.0, 2.0, 3.0, 4.0];
        assert!(fit_expansion(&xs, &ys, &[2, 2]).is_err());
        // Constant column twice through near-degenerate samples.
        let xs2 = vec![1e-8, (1.0 + 1e-13) * 1e-8, (1.0 + 2e-13) * 1e-8, (1.0 + 3e-13) * 1e-8];
        let err = fit_expansion(&xs2, &ys, &[0, 2]).unwrap_err();
        match err {
            Error::Numeric(msg) => assert!(msg.contains("condition")),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn error_order_fit_sees_through_the_floor() {
        let l = Ladder::default_from(0.02).unwrap();
        let xs = l.points().to_vec();
        let floor = 1e-14;
        let diffs: Vec<f64> = xs
            .iter()
            .map(|&e| 4.2 * e.powi(3) + 0.7 * floor)
            .collect();
        match fit_error_order(&xs, &diffs, floor).unwrap() {
            OrderFit::Slope { order, coeff, used } => {
                assert!((order - 3.0).abs() < 0.05, "order {order}");
                assert!((coeff / 4.2 - 1.0).abs() < 0.3, "coeff {coeff}");
                assert!(used >= 5);
            }
            other => panic!("expected slope, got {other:?}"),
        }
    }

    #[test]
    fn error_order_fit_reports_floor_saturation() {
        let xs = vec![1e-3, 5e-4, 2.5e-4, 1.25e-4];
        let diffs = vec![3e-15, 8e-15, 2e-15, 5e-15];
        match fit_error_order(&xs, &diffs, 1e-14).unwrap() {
            OrderFit::AtFloor { max_abs, floor } => {
                assert_eq!(floor, 1e-14);
                assert!((max_abs - 8e-15).abs() < 1e-20);
            }
            other => panic!("expected floor saturation, got {other:?}"),
        }
    }

    #[test]
    fn generic_fit_runs_in_arbitrary_precision() {
        // y = x/4 + x²/32 at dyadic points: exactly representable, and the
        // wide fit must recover the coefficients to far beyond f64.
        let prec = Prec(80);
        let xs: Vec<BigFixed> = (1i64..=6).map(|k| prec.pow2(1, -k - 3)).collect();
        let ys: Vec<BigFixed> = xs
            .iter()
            .map(|x| {
                let quarter = prec.pow2(1, -2);
                let inv32 = prec.pow2(1, -5);
                x.clone() * quarter + x.clone() * x.clone() * inv32
            })
            .collect();
        let (coeffs, _cond, residuals) = fit_expansion_generic(&xs, &ys, &[2, 4]).unwrap();
        let c0 = coeffs[0].to_f64();
        let c1 = coeffs[1].to_f64();
        assert!((c0 - 0.25).abs() < 1e-30);
        assert!((c1 - 0.03125).abs() < 1e-25);
        for r in residuals {
            assert!(r.to_f64().abs() < 1e-30);
        }
    }

    #[test]
    fn half_powers_evaluate_correctly() {
        let x = 0.25f64;
        assert_eq!(power_of(&x, 0), 1.0);
        assert_eq!(power_of(&x, 1), 0.5);
        assert_eq!(power_of(&x, 2), 0.25);
        assert_eq!(power_of(&x, 3), 0.125);
        assert_eq!(power_of(&x, 4), 0.0625);
    }

    fn wf(n: u64, hps: &[u32], cs: &[f64], budget: f64) -> WindowFit {
        WindowFit {
            n,
            half_powers: hps.to_vec(),
            coeffs: cs.to_vec(),
            budget,
        }
    }

    #[test]
    fn stitch_identical_fits_passes_through() {
        let fits = vec![
            wf(0, &[2, 4], &[1.5, -0.25], 1e-9),
            wf(1, &[2, 4], &[1.5, -0.25], 1e-9),
            wf(2, &[2, 4], &[1.5, -0.25], 1e-9),
        ];
        match stitch(&fits, 2).unwrap() {
            Stitch::Consistent {
                half_powers,
                coeffs,
                spreads,
            } => {
                assert_eq!(half_powers, vec![2, 4]);
                assert!((coeffs[0] - 1.5).abs() < 1e-14);
                assert!((coeffs[1] + 0.25).abs() < 1e-14);
                assert!(spreads.iter().all(|&s| s < 1e-14));
            }
            other => panic!("expected consistent, got {other:?}"),
        }
    }

    #[test]
    fn stitch_single_fit_is_passthrough() {
        let fits = vec![wf(3, &[0, 4, 6], &[2.0, 5.0, -1.0], 1e-8)];
        match stitch(&fits, 2).unwrap() {
            Stitch::Consistent {
                half_powers,
                coeffs,
                ..
            } => {
                assert_eq!(half_powers, vec![0, 4]);
                assert_eq!(coeffs, vec![2.0, 5.0]);
            }
            other => panic!("expected consistent, got {other:?}"),
        }
    }

    #[test]
    fn stitch_alternating_coefficient_yields_certificate() {
        // ε² coefficient (half-power 4) alternates between c and c+Δ with Δ
        // far beyond the budgets: the certificate must name that power and an
        // offending pair with the right gap.
        let c = 3.0;
        let d = 2.0;
        let fits = vec![
            wf(0, &[4, 6], &[c, 0.1], 1e-6),
            wf(1, &[4, 6], &[c + d, 0.1], 1e-6),
            wf(2, &[4, 6], &[c, 0.1], 1e-6),
            wf(3, &[4, 6], &[c + d, 0.1], 1e-6),
        ];
        match stitch(&fits, 2).unwrap() {
            Stitch::Inconsistent {
                half_power,
                value_a,
                value_b,
                gap,
                budget,
                ..
            } => {
                assert_eq!(half_power, 4);
                assert!((gap - d).abs() < 1e-12);
                assert!((value_a - value_b).abs() > budget);
            }
            other => panic!("expected certificate, got {other:?}"),
        }
    }

    #[test]
    fn stitch_is_order_independent() {
        let fits = vec![
            wf(0, &[4], &[1.0], 1e-6),
            wf(1, &[4], &[2.0], 1e-6),
            wf(2, &[4], &[1.0], 1e-6),
        ];
        let mut permuted = fits.clone();
        permuted.rotate_left(1);
        permuted.swap(0, 1);
        let (a, b) = (stitch(&fits, 1).unwrap(), stitch(&permuted, 1).unwrap());
        match (a, b) {
            (
                Stitch::Inconsistent {
                    half_power: pa,
                    window_a: wa,
                    window_b: wb,
                    gap: ga,
                    ..
                },
                Stitch::Inconsistent {
                    half_power: pb,
                    window_a: wc,
                    window_b: wd,
                    gap: gb,
                    ..
                },
            ) => {
                assert_eq!((pa, wa, wb), (pb, wc, wd));
                assert!((ga - gb).abs() < 1e-15);
            }
            other => panic!("expected matching certificates, got {other:?}"),
        }
    }

    #[test]
    fn stitch_missing_power_counts_as_zero() {
        // A plateau window fits only a constant; a clear window sees an ε²
        // term of size 5. The comparison must flag half-power 4 (coefficient
        // 0 vs 5), not the constants.
        let fits = vec![
            wf(0, &[0], &[1e-12], 1e-9),
            wf(1, &[4, 6], &[5.0, 0.2], 1e-6),
        ];
        match stitch(&fits, 3).unwrap() {
            Stitch::Inconsistent {
                half_power,
                value_a,
                value_b,
                ..
            } => {
                assert_eq!(half_power, 4);
                assert!((value_a - 0.0).abs() < 1e-14);
                assert!((value_b - 5.0).abs() < 1e-14);
            }
            other => panic!("expected certificate, got {other:?}"),
        }
    }

    #[test]
    fn stitch_rejects_duplicate_windows_and_bad_shapes() {
        assert!(stitch(&[], 1).is_err());
        let dup = vec![wf(0, &[4], &[1.0], 1e-6), wf(0, &[4], &[1.0], 1e-6)];
        assert!(stitch(&dup, 1).is_err());
        let bad = vec![wf(0, &[4, 6], &[1.0], 1e-6)];
        assert!(stitch(&bad, 1).is_err());
    }
}
