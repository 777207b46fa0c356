//! Integrated density of states of the gauged operator.
//!
//! `N(λ) = (2π)⁻¹ · meas{ξ : G(ξ) ≤ λ}`, where `G` is the band function of
//! [`crate::spectral`]: the scalar symbol branch off the resonance zones and
//! the two-wave block branches inside them. The measure is assembled piece
//! by piece — monotone scalar stretches and zone pairs — and every piece is
//! compared against the free reference `meas{ξ² ≤ λ}` *on the same
//! interval*, so the deviation from `2√λ` accumulates without any
//! `O(√λ)`-sized cancellations. Pieces that provably cannot touch the level
//! set (their whole range sits beyond the a-priori symbol-norm margin)
//! contribute an exact zero.
//!
//! The module also classifies a level into the case taxonomy of the
//! two-wave analysis (gap plateau, integer expansion, half-integer onset,
//! degenerate, and the λ = 0 family) and fits ε-expansions with the
//! case-appropriate exponent set.

use std::f64::consts::PI;

use crate::asymptotics::{fit_error_order, fit_expansion, Expansion, Ladder, OrderFit};
use crate::gauge::GaugeExpansion;
use crate::lattice::{Frequency, GeneratorBasis};
use crate::potential::Potential;
use crate::spectral::{Branch, ResonancePair, ZoneSet};
use crate::{C64, Error, Result};

/// Absolute tolerance below which a case discriminant (or `|τ| − |ν|`)
/// is treated as zero: the borderline is labelled degenerate rather than
/// guessed to one side.
pub const BORDERLINE: f64 = 1e-12;

/// A spectral level, carrying how it relates to the frequency lattice.
///
/// Whether `λ` is a resonant point (`λ = θ₀²` for a nonzero lattice
/// frequency `θ₀`) is a structural fact decided by integer vectors, never by
/// comparing floats. `Plain(x)` assert that `x` is off the squared lattice
/// (zero and negative values are fine); `Resonant(θ)` designates the square
/// of the lattice point `θ` exactly.
#[derive(Debug, Clone)]
pub enum Lambda {
    Plain(f64),
    Resonant(Frequency),
}

impl Lambda {
    /// The numeric level.
    pub fn value(&self, basis: &GeneratorBasis) -> f64 {
        match self {
            Lambda::Plain(x) => *x,
            Lambda::Resonant(th) => {
                let v = th.value(basis);
                v * v
            }
        }
    }
}

/// One contribution to the deviation of `meas{G ≤ λ}` from the free measure.
#[derive(Debug, Clone)]
pub struct Piece {
    pub kind: PieceKind,
    /// ξ interval the piece covers (for a pair: the positive-center zone;
    /// the mirror zone is included in the same piece).
    pub lo: f64,
    pub hi: f64,
    /// `meas{G ≤ λ}` minus `meas{ξ² ≤ λ}` on the piece's interval(s).
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PieceKind {
    /// A maximal off-zone stretch of the scalar branch.
    OffZone,
    /// A mirror pair of resonance zones treated through the block branches.
    Pair { theta0: f64 },
}

/// The assembled measure bookkeeping at one `(λ, ε)`.
#[derive(Debug, Clone)]
pub struct IdsBreakdown {
    pub lambda: f64,
    /// `2·√(max(λ,0))` — the free measure.
    pub free_measure: f64,
    /// Sum of the per-piece deviations; `meas{G ≤ λ} = free + deviation`.
    pub deviation: f64,
    /// `N(λ) = (free + deviation) / 2π`.
    pub n: f64,
    /// Only the pieces that were actually solved (exact zeros are omitted).
    pub pieces: Vec<Piece>,
    /// Solved boundary points of `{G ≤ λ}`, ascending. For a nonresonant
    /// `λ > 0` there are exactly two: `±G⁻¹(λ)`.
    pub boundaries: Vec<f64>,
    /// The a-priori bound on `sup |G(ξ) − ξ²|` used to discard pieces.
    pub wiggle: f64,
}

/// `N(λ; H₂)` — the thin wrapper around [`ids_breakdown`].
pub fn ids_value(
    g: &GaugeExpansion,
    zones: &ZoneSet,
    eps: f64,
    lambda: f64,
) -> Result<f64> {
    Ok(ids_breakdown(g, zones, eps, lambda)?.n)
}

/// Piecewise evaluation of `meas{G ≤ λ}` with full bookkeeping.
pub fn ids_breakdown(
    g: &GaugeExpansion,
    zones: &ZoneSet,
    eps: f64,
    lambda: f64,
) -> Result<IdsBreakdown> {
    let lam0 = lambda.max(0.0);
    let sq = lam0.sqrt();
    // 2·Σ β_l ε^l bounds the diagonal wiggle plus the block coupling.
    let wiggle = 2.0
        * g.a_priori_bounds()
            .iter()
            .enumerate()
            .map(|(i, b)| b * eps.powi(i as i32 + 1))
            .sum::<f64>();
    let mut out = IdsBreakdown {
        lambda,
        free_measure: 2.0 * sq,
        deviation: 0.0,
        n: 0.0,
        pieces: Vec::new(),
        boundaries: Vec::new(),
        wiggle,
    };
    if lambda < -wiggle {
        // Below the whole spectrum: G ≥ ξ² − wiggle ≥ −wiggle > λ.
        return Ok(out);
    }

    // Window beyond which G > λ for sure. If the cut lands inside a zone,
    // extend it past that zone; the pair logic handles the partial overlap.
    let mut x_hi = (lam0 + wiggle).sqrt() + 1e-6;
    while let Some(z) = zones.zone_at(x_hi) {
        x_hi = z.hi() + 1e-12;
    }

    let dim = g.basis().len();
    let zero = Frequency::zero(dim);
    let diag = |xi: f64| g.h2_value(eps, xi, &zero).re;
    let tol = 1e-13 * (1.0 + lambda.abs());

    // Off-zone stretches: [-x_hi, x_hi] minus the zone spans.
    let mut spans: Vec<(f64, f64)> = Vec::new();
    for z in zones.zones() {
        if z.hi() > -x_hi && z.lo() < x_hi {
            spans.push((z.lo().max(-x_hi), z.hi().min(x_hi)));
        }
    }
    let mut off: Vec<(f64, f64)> = Vec::new();
    let mut cur = -x_hi;
    for &(a, b) in &spans {
        if a > cur {
            off.push((cur, a));
        }
        cur = cur.max(b);
    }
    if cur < x_hi {
        off.push((cur, x_hi));
    }

    for &(a, b) in &off {
        // Split at 0 so each stretch is monotone in |ξ|.
        let mut parts: Vec<(f64, f64)> = Vec::new();
        if a < 0.0 && b > 0.0 {
            parts.push((a, 0.0));
            parts.push((0.0, b));
        } else {
            parts.push((a, b));
        }
        for (pa, pb) in parts {
            if let Some(dev) = off_stretch(
                &diag,
                pa,
                pb,
                lambda,
                sq,
                wiggle,
                tol,
                &mut out.boundaries,
            )? {
                out.pieces.push(Piece {
                    kind: PieceKind::OffZone,
                    lo: pa,
                    hi: pb,
                    deviation: dev,
                });
                out.deviation += dev;
            }
        }
    }

    // Zone pairs: both branch measures over ζ ∈ (−w, w) against the free
    // overlap of both zone intervals.
    for pr in zones.pairs() {
        let w = pr.half_width;
        let th = pr.theta0;
        let lo_edge2 = (th - w) * (th - w);
        let hi_edge2 = (th + w) * (th + w);
        if lo_edge2 - 2.0 * wiggle > lambda {
            // Both bands entirely above λ, and both zones outside the free
            // disk (sq² = λ₀ ≤ λ < (θ₀−w)²): exact zero.
            continue;
        }
        if hi_edge2 + 2.0 * wiggle <= lambda {
            // Both bands entirely below λ and both zones inside the free
            // disk: full measure on both sides — exact zero.
            continue;
        }
        let dev = pair_piece(g, &pr, eps, lambda, sq, tol, &mut out.boundaries)?;
        out.pieces.push(Piece {
            kind: PieceKind::Pair { theta0: th },
            lo: th - w,
            hi: th + w,
            deviation: dev,
        });
        out.deviation += dev;
    }

    out.boundaries
        .sort_by(|x, y| x.partial_cmp(y).expect("non-finite boundary"));
    out.n = (2.0 * sq + out.deviation) / (2.0 * PI);
    Ok(out)
}

/// Deviation of one monotone scalar stretch `(a, b)` (with `0 ∉ (a, b)`),
/// or `None` when the piece is an exact zero.
#[allow(clippy::too_many_arguments)]
fn off_stretch(
    diag: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    lambda: f64,
    sq: f64,
    wiggle: f64,
    tol: f64,
    boundaries: &mut Vec<f64>,
) -> Result<Option<f64>> {
    if b <= a {
        return Ok(None);
    }
    let lo_abs = a.abs().min(b.abs());
    let hi_abs = a.abs().max(b.abs());
    if hi_abs * hi_abs + wiggle <= lambda {
        // Fully below λ and fully inside [−√λ, √λ]: measure equals the free
        // measure exactly.
        return Ok(None);
    }
    if lo_abs * lo_abs - wiggle > lambda {
        // Fully above λ and fully outside the free disk.
        return Ok(None);
    }
    // Free overlap of (a, b) with [−sq, sq].
    let clip = (b.min(sq) - a.max(-sq)).max(0.0);
    // Work on u = |ξ|: diag is (tolerantly) increasing in u.
    let (u_lo, u_hi, to_xi): (f64, f64, Box<dyn Fn(f64) -> f64>) = if a >= 0.0 {
        (a, b, Box::new(|u| u))
    } else {
        (-b, -a, Box::new(|u| -u))
    };
    let f = |u: f64| diag(to_xi(u));
    // Monotonicity in |ξ| — the scalar branch may wobble by O(ε²) near
    // ξ = 0, which is harmless for root placement; anything larger means
    // the perturbation is too strong for the branch picture at this δ.
    let slack = 1e-12 * (1.0 + lambda.abs());
    let m = 9;
    let mut prev = f(u_lo);
    for i in 1..=m {
        let u = u_lo + (u_hi - u_lo) * i as f64 / m as f64;
        let v = f(u);
        if v < prev - slack.max(1e-9 * wiggle) {
            return Err(Error::Numeric(format!(
                "scalar branch is not monotone on ({a:.6}, {b:.6}): \
                 {prev:.12e} then {v:.12e}; the perturbation is too strong \
                 for this zone width"
            )));
        }
        prev = v;
    }
    let fa = f(u_lo);
    let fb = f(u_hi);
    let meas = if fa > lambda {
        0.0
    } else if fb <= lambda {
        u_hi - u_lo
    } else {
        let r = crate::numeric::bisect_root(
            |u: &f64| f(*u) - lambda,
            u_lo,
            u_hi,
            &tol,
            200,
        )?;
        boundaries.push(to_xi(r));
        r - u_lo
    };
    Ok(Some(meas - clip))
}

/// Deviation of one zone pair: both block-branch measures over ζ ∈ (−w, w)
/// minus the free measure of both zone intervals.
fn pair_piece(
    g: &GaugeExpansion,
    pr: &ResonancePair,
    eps: f64,
    lambda: f64,
    sq: f64,
    tol: f64,
    boundaries: &mut Vec<f64>,
) -> Result<f64> {
    let w = pr.half_width;
    let th = pr.theta0;
    let lower = |z: f64| pr.block(g, eps, z).lower;
    let upper = |z: f64| pr.block(g, eps, z).upper;

    // Lower branch: single interior maximum; {σ₋ ≤ λ} is the complement of
    // an inner ring (possibly empty, possibly everything).
    let (z_max, low_max) = pr.branch_extremum(g, eps, Branch::Lower)?;
    unimodal_guard(&lower, -w, w, low_max, true)?;
    let meas_low = if low_max <= lambda {
        2.0 * w
    } else {
        let mut meas = 0.0;
        if lower(-w) <= lambda {
            let r = crate::numeric::bisect_root(
                |z: &f64| lower(*z) - lambda,
                -w,
                z_max,
                &tol,
                200,
            )?;
            boundaries.push(-th + r);
            meas += r + w;
        }
        if lower(w) <= lambda {
            let r = crate::numeric::bisect_root(
                |z: &f64| lower(*z) - lambda,
                z_max,
                w,
                &tol,
                200,
            )?;
            boundaries.push(-th + r);
            meas += w - r;
        }
        meas
    };

    // Upper branch: single interior minimum; {σ₊ ≤ λ} is an inner interval.
    let (z_min, up_min) = pr.branch_extremum(g, eps, Branch::Upper)?;
    unimodal_guard(&upper, -w, w, up_min, false)?;
    let meas_up = if up_min > lambda {
        0.0
    } else {
        let mut meas = 0.0;
        if upper(-w) <= lambda {
            meas += z_min + w;
        } else {
            let r = crate::numeric::bisect_root(
                |z: &f64| upper(*z) - lambda,
                -w,
                z_min,
                &tol,
                200,
            )?;
            boundaries.push(th + r);
            meas += z_min - r;
        }
        if upper(w) <= lambda {
            meas += w - z_min;
        } else {
            let r = crate::numeric::bisect_root(
                |z: &f64| upper(*z) - lambda,
                z_min,
                w,
                &tol,
                200,
            )?;
            boundaries.push(th + r);
            meas += r - z_min;
        }
        meas
    };

    let clip = |lo: f64, hi: f64| (hi.min(sq) - lo.max(-sq)).max(0.0);
    let free = clip(th - w, th + w) + clip(-th - w, -th + w);
    Ok(meas_low + meas_up - free)
}

/// Sanity check that the golden-section extremum dominates a coarse sample
/// of the branch — a cheap stand-in for unimodality, so a root bracketed on
/// one half of the zone is the only root there.
fn unimodal_guard(
    f: &impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    extremum: f64,
    is_max: bool,
) -> Result<()> {
    let n = 24;
    for i in 0..=n {
        let z = lo + (hi - lo) * i as f64 / n as f64;
        let v = f(z);
        let tolerated = 1e-12 * (1.0 + extremum.abs());
        let bad = if is_max {
            v > extremum + tolerated
        } else {
            v < extremum - tolerated
        };
        if bad {
            return Err(Error::Numeric(format!(
                "block branch sample {v:.12e} at ζ = {z:.6e} beats the \
                 located extremum {extremum:.12e}; branch is not unimodal \
                 over the zone"
            )));
        }
    }
    Ok(())
}

/// The case taxonomy of the density of states at one level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CaseKind {
    /// λ < 0: `N ≡ 0`.
    Negative,
    /// λ > 0 off the squared lattice: full integer-power expansion.
    NonResonant,
    /// Resonant λ inside a persistent gap: `N ≡ θ₀/π` (plateau).
    ResInsideGap,
    /// Resonant λ with an integer-power expansion (first correction at ε¹).
    ResInteger,
    /// Resonant λ whose expansion starts at `ε^{k/2}`.
    ResHalfInteger { k: u32 },
    /// Resonant borderline: the discriminant vanishes to tolerance; the
    /// onset order `k ≥ min_k` must be detected from data, not guessed.
    ResDegenerate { min_k: u32 },
    /// Degenerate case whose deviation stayed below resolution over the
    /// whole ladder (`k = ∞` cannot be excluded).
    ResFlat,
    /// λ = 0, τ > 0: `N ≡ 0`.
    ZeroTauPos,
    /// λ = 0, τ < 0: expansion in `ε^{1/2}·(integer powers)`.
    ZeroTauNeg,
    /// λ = 0, τ = 0: expansion starting at ε¹.
    ZeroTauZero,
}

impl CaseKind {
    /// Stable snake_case name (used by the CLI JSON output).
    pub fn name(&self) -> String {
        match self {
            CaseKind::Negative => "negative".into(),
            CaseKind::NonResonant => "nonresonant".into(),
            CaseKind::ResInsideGap => "res_inside_gap".into(),
            CaseKind::ResInteger => "res_integer".into(),
            CaseKind::ResHalfInteger { k } => format!("res_half_integer({k})"),
            CaseKind::ResDegenerate { min_k } => format!("res_degenerate(k>={min_k})"),
            CaseKind::ResFlat => "res_flat".into(),
            CaseKind::ZeroTauPos => "zero_tau_pos".into(),
            CaseKind::ZeroTauNeg => "zero_tau_neg".into(),
            CaseKind::ZeroTauZero => "zero_tau_zero".into(),
        }
    }
}

/// Closed-form leading correction, where one is known: the expansion of
/// `N(λ; ε)` starts `base + coeff·ε^{half_power/2}`.
#[derive(Debug, Clone, Copy)]
pub struct Prediction {
    pub half_power: u32,
    pub coeff: f64,
}

/// Classification of a level, with all discriminating data.
#[derive(Debug, Clone)]
pub struct CaseLabel {
    pub kind: CaseKind,
    pub lambda: f64,
    /// The exact ε-independent part of N: `√λ/π`, `θ₀/π`, or 0.
    pub base: f64,
    pub theta0: Option<f64>,
    pub tau: f64,
    /// `ν = V̂_{θ₀}` for resonant levels.
    pub nu: Option<C64>,
    /// `s₂(0)` — the grade-2 diagonal mean at the zone center.
    pub s2: Option<f64>,
    /// Grade-2 off-diagonal coefficient, paired so that the same matrix
    /// entry carries `εν + ε²g₂ + …`.
    pub g2: Option<C64>,
    /// `s₂(0)·τ − Re(ν·conj(g₂(0)))` — decides the `|τ| = |ν|` borderline.
    pub disc_gap: Option<f64>,
    /// `s₂(0)² − |g₂(0)|²` — decides the `ν = 0, τ = 0` variant.
    pub disc_zero: Option<f64>,
    pub predicted: Option<Prediction>,
    /// True when the label was forced to the degenerate case by the
    /// tolerance rather than by an exact zero.
    pub borderline: bool,
}

impl CaseLabel {
    /// JSON report (the `classify` CLI output).
    pub fn report(&self) -> serde_json::Value {
        let c64 = |z: &C64| serde_json::json!({ "re": z.re, "im": z.im });
        serde_json::json!({
            "case": self.kind.name(),
            "lambda": self.lambda,
            "base": self.base,
            "theta0": self.theta0,
            "tau": self.tau,
            "nu": self.nu.as_ref().map(&c64),
            "s2": self.s2,
            "g2": self.g2.as_ref().map(&c64),
            "disc_gap": self.disc_gap,
            "disc_zero": self.disc_zero,
            "predicted": self.predicted.map(|p| serde_json::json!({
                "half_power": p.half_power,
                "coeff": p.coeff,
            })),
            "borderline": self.borderline,
        })
    }
}

/// Assign the case label at a level.
///
/// Resonance is decided by the `Lambda` variant (integer vectors), never by
/// float comparison; a `Plain` level whose square root falls inside a
/// materialized resonance zone is rejected as a validation error rather
/// than silently treated as nonresonant.
///
/// Sign conventions: the discriminant `s₂(0)τ − Re(ν·conj(g₂(0)))` is
/// invariant under conjugating the off-diagonal entry, so either pairing of
/// the block's two off-diagonal coefficients yields the same value. The
/// predicted leading corrections carry `−sign(τ)` (respectively
/// `−sign(s₂)` in the zero-coupling variant): for τ > 0 the level sits
/// below the gap and loses measure, matching the stated `a₁ < 0`; for
/// τ < 0 it sits above the gap and the correction is positive.
pub fn classify(
    g: &GaugeExpansion,
    zones: &ZoneSet,
    pot: &Potential,
    lambda: &Lambda,
) -> Result<CaseLabel> {
    let basis = g.basis();
    let lam = lambda.value(basis);
    match lambda {
        Lambda::Plain(x) => {
            let x = *x;
            let tau = pot.tau();
            if x < 0.0 {
                return Ok(plain_label(CaseKind::Negative, x, 0.0, tau, None));
            }
            if x == 0.0 {
                let kind = if tau.abs() <= BORDERLINE {
                    CaseKind::ZeroTauZero
                } else if tau > 0.0 {
                    CaseKind::ZeroTauPos
                } else {
                    CaseKind::ZeroTauNeg
                };
                let predicted = match kind {
                    CaseKind::ZeroTauNeg => Some(Prediction {
                        half_power: 1,
                        coeff: tau.abs().sqrt() / PI,
                    }),
                    CaseKind::ZeroTauZero => {
                        let f2 = g
                            .f_value(2, 0.0, &Frequency::zero(basis.len()))
                            .re;
                        // f₂(0;0) < 0 for a nontrivial potential.
                        (f2 < 0.0).then(|| Prediction {
                            half_power: 2,
                            coeff: (-f2).sqrt() / PI,
                        })
                    }
                    _ => None,
                };
                return Ok(plain_label(kind, x, 0.0, tau, predicted));
            }
            if let Some(z) = zones.zone_at(x.sqrt()) {
                return Err(Error::Validation(format!(
                    "λ = {x} has √λ inside the resonance zone centered at \
                     {:.6}; resonant levels must be passed as the lattice \
                     frequency, not as a plain number",
                    z.center
                )));
            }
            let predicted = Some(Prediction {
                half_power: 2,
                coeff: -tau / (2.0 * PI * x.sqrt()),
            });
            Ok(plain_label(
                CaseKind::NonResonant,
                x,
                x.sqrt() / PI,
                tau,
                predicted,
            ))
        }
        Lambda::Resonant(th) => {
            let th0 = th.value(basis).abs();
            if th0 == 0.0 {
                return Err(Error::Validation(
                    "the zero frequency is not a resonant level; pass λ = 0 \
                     as a plain level"
                        .into(),
                ));
            }
            let pair = zones.pair_near(th0, 1e-9).ok_or_else(|| {
                Error::Validation(format!(
                    "no materialized resonance zone at θ₀ = {th0:.6}; the \
                     frequency is outside the shell this run was built with"
                ))
            })?;
            let local = pair.local_data(g, pot);
            let tau = local.tau;
            let nu = local.nu;
            // Pair (ν, g₂) on the same matrix entry: the machinery's
            // off-series carries conj(ν) at grade 1, so conjugate grade 2.
            let g2 = local.off.get(1).map(|z| z.conj()).unwrap_or(C64::new(0.0, 0.0));
            let s2 = local.s.get(1).copied().unwrap_or(0.0);
            let disc_gap = s2 * tau - (nu * g2.conj()).re;
            let disc_zero = s2 * s2 - g2.norm_sqr();

            let mut label = CaseLabel {
                kind: CaseKind::NonResonant, // overwritten below
                lambda: lam,
                base: th0 / PI,
                theta0: Some(th0),
                tau,
                nu: Some(nu),
                s2: Some(s2),
                g2: Some(g2),
                disc_gap: Some(disc_gap),
                disc_zero: Some(disc_zero),
                predicted: None,
                borderline: false,
            };

            if nu.norm() > 0.0 {
                let gap = tau.abs() - nu.norm();
                if gap < -BORDERLINE {
                    label.kind = CaseKind::ResInsideGap;
                } else if gap > BORDERLINE {
                    label.kind = CaseKind::ResInteger;
                    label.predicted = Some(Prediction {
                        half_power: 2,
                        coeff: -tau.signum()
                            * (tau * tau - nu.norm_sqr()).sqrt()
                            / (2.0 * PI * th0),
                    });
                } else if disc_gap > BORDERLINE {
                    label.kind = CaseKind::ResHalfInteger { k: 3 };
                    label.predicted = Some(Prediction {
                        half_power: 3,
                        coeff: -tau.signum() * (disc_gap / 2.0).sqrt() / (PI * th0),
                    });
                } else if disc_gap < -BORDERLINE {
                    label.kind = CaseKind::ResInsideGap;
                } else {
                    label.kind = CaseKind::ResDegenerate { min_k: 4 };
                    label.borderline = disc_gap != 0.0 || gap != 0.0;
                }
            } else if tau.abs() > BORDERLINE {
                label.kind = CaseKind::ResInteger;
                label.predicted = Some(Prediction {
                    half_power: 2,
                    coeff: -tau / (2.0 * PI * th0),
                });
            } else if disc_zero > BORDERLINE {
                label.kind = CaseKind::ResHalfInteger { k: 4 };
                label.predicted = Some(Prediction {
                    half_power: 4,
                    coeff: -s2.signum() * disc_zero.sqrt() / (2.0 * PI * th0),
                });
            } else if disc_zero < -BORDERLINE {
                label.kind = CaseKind::ResInsideGap;
            } else {
                label.kind = CaseKind::ResDegenerate { min_k: 5 };
                label.borderline = disc_zero != 0.0 || tau != 0.0;
            }
            Ok(label)
        }
    }
}

fn plain_label(
    kind: CaseKind,
    lambda: f64,
    base: f64,
    tau: f64,
    predicted: Option<Prediction>,
) -> CaseLabel {
    CaseLabel {
        kind,
        lambda,
        base,
        theta0: None,
        tau,
        nu: None,
        s2: None,
        g2: None,
        disc_gap: None,
        disc_zero: None,
        predicted,
        borderline: false,
    }
}

/// Outcome of the degenerate-case onset detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KReport {
    /// The deviation is resolved and starts at `ε^{k/2}`.
    Detected(u32),
    /// Nothing above the residual floor up to the capped order; consistent
    /// with `k = ∞`.
    AtLeast(u32),
}

/// A fitted ε-expansion of `N(λ; ε) − base` with case-appropriate exponents.
#[derive(Debug, Clone)]
pub struct IdsExpansion {
    pub label: CaseLabel,
    /// `(ε, N)` pairs actually evaluated.
    pub ladder: Vec<(f64, f64)>,
    /// `N − base` per ladder point.
    pub deviations: Vec<f64>,
    /// The case-model fit (absent for plateau/zero cases, which have no
    /// expansion to fit).
    pub fit: Option<Expansion>,
    /// Free-exponent log–log slope of |deviations| — the diagnostic fit.
    pub slope: Option<OrderFit>,
    pub max_abs_dev: f64,
    /// Degenerate-case onset report.
    pub k_report: Option<KReport>,
}

impl IdsExpansion {
    /// The fitted coefficient at the label's leading half-power, if both
    /// the fit and the model exponent exist.
    pub fn leading_coeff(&self) -> Option<f64> {
        let hp = match self.label.kind {
            CaseKind::NonResonant | CaseKind::ResInteger | CaseKind::ZeroTauZero => 2,
            CaseKind::ResHalfInteger { k } => k,
            CaseKind::ZeroTauNeg => 1,
            _ => return None,
        };
        self.fit.as_ref().and_then(|f| f.coeff_of(hp))
    }
}

/// Evaluate `N` over a ladder and fit the case-appropriate expansion.
///
/// For a degenerate label the onset order is detected as the smallest
/// `k ≥ min_k` whose fitted leading coefficient clears 10× the fit
/// residual, capped at `2·max_grade − 2`; exhaustion reports `ResFlat`.
pub fn ids_expansion(
    g: &GaugeExpansion,
    zones: &ZoneSet,
    pot: &Potential,
    lambda: &Lambda,
    ladder: &Ladder,
) -> Result<IdsExpansion> {
    let mut label = classify(g, zones, pot, lambda)?;
    let lam = label.lambda;
    let mut pts = Vec::new();
    let mut devs = Vec::new();
    for &eps in ladder.points() {
        let bd = ids_breakdown(g, zones, eps, lam)?;
        pts.push((eps, bd.n));
        devs.push(bd.n - label.base);
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let max_abs_dev = devs.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let noise_floor = 1e-13;

    let hp_set: Option<Vec<u32>> = match label.kind {
        CaseKind::NonResonant | CaseKind::ResInteger => Some(vec![2, 4, 6]),
        CaseKind::ResHalfInteger { k } => Some(vec![k, k + 2, k + 4]),
        CaseKind::ZeroTauNeg => Some(vec![1, 3, 5]),
        CaseKind::ZeroTauZero => Some(vec![2, 4, 6]),
        _ => None,
    };

    let mut fit = None;
    let mut k_report = None;
    let deg_min_k = match label.kind {
        CaseKind::ResDegenerate { min_k } => Some(min_k),
        _ => None,
    };
    if let Some(hps) = hp_set {
        fit = Some(fit_expansion(&xs, &devs, &hps)?);
    } else if let Some(min_k) = deg_min_k {
        let cap = 2 * g.max_grade().saturating_sub(1);
        let mut detected = None;
        if max_abs_dev > 10.0 * noise_floor {
            for k in min_k..=cap {
                let trial = fit_expansion(&xs, &devs, &[k, k + 2])?;
                let rmax = xs
                    .iter()
                    .zip(&devs)
                    .map(|(x, y)| (y - trial.eval(*x)).abs())
                    .fold(0.0f64, f64::max);
                let c0 = trial.coeff_of(k).unwrap_or(0.0);
                let top = xs.iter().fold(0.0f64, |m, x| m.max(*x));
                if c0.abs() * crate::asymptotics::power_of(&top, k) > 10.0 * rmax {
                    detected = Some((k, trial));
                    break;
                }
            }
        }
        match detected {
            Some((k, trial)) => {
                label.kind = CaseKind::ResHalfInteger { k };
                fit = Some(trial);
                k_report = Some(KReport::Detected(k));
            }
            None => {
                label.kind = CaseKind::ResFlat;
                k_report = Some(KReport::AtLeast(cap));
            }
        }
    }

    let slope = fit_error_order(&xs, &devs, noise_floor).ok();

    Ok(IdsExpansion {
        label,
        ladder: pts,
        deviations: devs,
        fit,
        slope,
        max_abs_dev,
        k_report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge::{GaugeExpansion, GaugeOpts};
    use crate::lattice::{GeneratorBasis, Shell};
    use crate::numeric::indicator_measure;
    use crate::potential::Potential;
    use crate::spectral::{g_value, ZoneSet};
    use crate::symbols::{CutoffFamily, MollifierKind};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    struct Setup {
        pot: Potential,
        g: GaugeExpansion,
        zones: ZoneSet,
    }

    fn setup(coeffs: &[(Vec<i64>, C64)], tau: f64, delta: f64, grade: u32) -> Setup {
        let basis = GeneratorBasis::unit();
        let mut list: Vec<(Frequency, C64)> = coeffs
            .iter()
            .map(|(v, z)| (Frequency::new(v.clone()), *z))
            .collect();
        if tau != 0.0 {
            list.push((Frequency::zero(1), c(tau, 0.0)));
        }
        let pot = Potential::from_coefficients(basis, &list).unwrap();
        let shell = Shell::build(pot.basis().clone(), 3, 10_000).unwrap();
        let cuts = CutoffFamily::new(delta, MollifierKind::Standard).unwrap();
        let zones = ZoneSet::build(&shell, &cuts, 1.0).unwrap();
        let g = GaugeExpansion::build(
            &pot,
            cuts,
            GaugeOpts {
                max_grade: grade,
                prune_threshold: 1e-28,
            },
        )
        .unwrap();
        Setup { pot, g, zones }
    }

    #[test]
    fn free_potential_recovers_the_square_root_law() {
        // V = 0 (a single vanishing coefficient keeps the machinery honest).
        let s = setup(&[(vec![1], c(0.0, 0.0))], 0.0, 0.125, 3);
        for lam in [0.5, 2.0, 1.0, 4.0] {
            let n = ids_value(&s.g, &s.zones, 1e-3, lam).unwrap();
            assert!(
                (n - lam.sqrt() / PI).abs() < 1e-12,
                "λ={lam}: N={n} vs {}",
                lam.sqrt() / PI
            );
        }
        assert_eq!(ids_value(&s.g, &s.zones, 1e-3, -0.5).unwrap(), 0.0);
    }

    #[test]
    fn nonresonant_slope_matches_the_closed_form() {
        // a₁ = −τ/(2π√λ) at λ = 2.
        let tau = 0.002;
        let s = setup(&[(vec![1], c(0.004, 0.0))], tau, 0.125, 3);
        let ladder = Ladder::geometric(1e-3, 0.5, 7).unwrap();
        let exp =
            ids_expansion(&s.g, &s.zones, &s.pot, &Lambda::Plain(2.0), &ladder)
                .unwrap();
        assert_eq!(exp.label.kind, CaseKind::NonResonant);
        let a1 = exp.leading_coeff().unwrap();
        let want = -tau / (2.0 * PI * 2.0f64.sqrt());
        assert!(
            (a1 / want - 1.0).abs() < 1e-2,
            "a₁ = {a1:.6e} vs {want:.6e}"
        );
        // Exactly two boundary points at a nonresonant level.
        let bd = ids_breakdown(&s.g, &s.zones, 1e-3, 2.0).unwrap();
        assert_eq!(bd.boundaries.len(), 2);
        assert!((bd.boundaries[0] + bd.boundaries[1]).abs() < 1e-9);
    }

    #[test]
    fn plateau_inside_the_gap_is_exact() {
        // |τ| < |ν|: N ≡ θ₀/π across the ladder.
        let s = setup(&[(vec![1], c(0.005, 0.0))], 0.001, 0.125, 3);
        let lam = Lambda::Resonant(Frequency::new(vec![1]));
        let label = classify(&s.g, &s.zones, &s.pot, &lam).unwrap();
        assert_eq!(label.kind, CaseKind::ResInsideGap);
        for &eps in Ladder::geometric(1e-3, 0.5, 6).unwrap().points() {
            let n = ids_value(&s.g, &s.zones, eps, 1.0).unwrap();
            assert!(
                (n - 1.0 / PI).abs() < 1e-12,
                "ε={eps}: N−θ₀/π = {:.3e}",
                n - 1.0 / PI
            );
        }
    }

    #[test]
    fn integer_case_slope_matches_the_two_wave_root() {
        // |τ| > |ν| at λ = θ₀² = 1: a₁ = −sign(τ)·√(τ²−ν²)/(2πθ₀).
        let tau = 0.008;
        let nu = 0.003;
        let s = setup(&[(vec![1], c(nu, 0.0))], tau, 0.125, 3);
        let lam = Lambda::Resonant(Frequency::new(vec![1]));
        let ladder = Ladder::geometric(1e-3, 0.5, 7).unwrap();
        let exp = ids_expansion(&s.g, &s.zones, &s.pot, &lam, &ladder).unwrap();
        assert_eq!(exp.label.kind, CaseKind::ResInteger);
        let want = -(tau * tau - nu * nu).sqrt() / (2.0 * PI);
        let got = exp.leading_coeff().unwrap();
        assert!(
            (got / want - 1.0).abs() < 1e-2,
            "a₁ = {got:.6e} vs {want:.6e}"
        );
        assert!((exp.label.predicted.unwrap().coeff / want - 1.0).abs() < 1e-12);

        // τ < 0 puts the level above the gap: the correction flips sign.
        let s2 = setup(&[(vec![1], c(nu, 0.0))], -tau, 0.125, 3);
        let exp2 = ids_expansion(&s2.g, &s2.zones, &s2.pot, &lam, &ladder).unwrap();
        assert_eq!(exp2.label.kind, CaseKind::ResInteger);
        let got2 = exp2.leading_coeff().unwrap();
        assert!(
            (got2 / want.abs() - 1.0).abs() < 1e-2,
            "τ<0: a₁ = {got2:.6e} vs {:.6e}",
            want.abs()
        );
    }

    #[test]
    fn zero_level_with_negative_mean_has_square_root_onset() {
        let tau = -0.004;
        let s = setup(&[(vec![1], c(0.005, 0.0))], tau, 0.125, 3);
        let ladder = Ladder::geometric(1e-3, 0.5, 7).unwrap();
        let exp =
            ids_expansion(&s.g, &s.zones, &s.pot, &Lambda::Plain(0.0), &ladder)
                .unwrap();
        assert_eq!(exp.label.kind, CaseKind::ZeroTauNeg);
        let want = tau.abs().sqrt() / PI;
        let got = exp.leading_coeff().unwrap();
        assert!(
            (got / want - 1.0).abs() < 1e-2,
            "c = {got:.6e} vs {want:.6e}"
        );
        match exp.slope.unwrap() {
            OrderFit::Slope { order, .. } => {
                assert!((order - 0.5).abs() < 0.02, "order {order}")
            }
            other => panic!("expected a slope, got {other:?}"),
        }
    }

    #[test]
    fn zero_level_with_zero_mean_is_linear_in_epsilon() {
        let a = 0.005;
        let s = setup(&[(vec![1], c(a, 0.0))], 0.0, 0.125, 3);
        let ladder = Ladder::geometric(1e-2, 0.5, 7).unwrap();
        let exp =
            ids_expansion(&s.g, &s.zones, &s.pot, &Lambda::Plain(0.0), &ladder)
                .unwrap();
        assert_eq!(exp.label.kind, CaseKind::ZeroTauZero);
        // f₂(0;0) = −2a²/4 = −a²/2 for the single cosine.
        let want = (a * a / 2.0f64).sqrt() / PI;
        let got = exp.leading_coeff().unwrap();
        assert!(
            (got / want - 1.0).abs() < 2e-2,
            "c = {got:.6e} vs {want:.6e}"
        );
        assert!((exp.label.predicted.unwrap().coeff / want - 1.0).abs() < 1e-12);
    }

    #[test]
    fn classification_covers_the_taxonomy() {
        // Negative and zero-positive levels.
        let s = setup(&[(vec![1], c(0.005, 0.0))], 0.002, 0.125, 2);
        let neg = classify(&s.g, &s.zones, &s.pot, &Lambda::Plain(-1.0)).unwrap();
        assert_eq!(neg.kind, CaseKind::Negative);
        let zp = setup(&[(vec![1], c(0.005, 0.0))], 0.002, 0.125, 2);
        let zl = classify(&zp.g, &zp.zones, &zp.pot, &Lambda::Plain(0.0)).unwrap();
        assert_eq!(zl.kind, CaseKind::ZeroTauPos);
        // A plain level inside a zone is rejected.
        let err = classify(&s.g, &s.zones, &s.pot, &Lambda::Plain(1.0));
        assert!(matches!(err, Err(Error::Validation(_))));
        // Zero-coupling resonance with τ ≠ 0: integer case with the
        // nonresonant-style slope.
        let lam2 = Lambda::Resonant(Frequency::new(vec![2]));
        let iv_b = classify(&s.g, &s.zones, &s.pot, &lam2).unwrap();
        assert_eq!(iv_b.kind, CaseKind::ResInteger);
        let want = -0.002 / (2.0 * PI * 2.0);
        assert!((iv_b.predicted.unwrap().coeff / want - 1.0).abs() < 1e-12);
        assert_eq!(iv_b.nu.unwrap().norm(), 0.0);
        // Zero-coupling, zero-mean resonance: decided by s₂² − |g₂|².
        let s0 = setup(&[(vec![1], c(0.005, 0.0))], 0.0, 0.125, 3);
        let iv_c = classify(&s0.g, &s0.zones, &s0.pot, &lam2).unwrap();
        let s2v = iv_c.s2.unwrap();
        let g2v = iv_c.g2.unwrap();
        // s₂(0) at θ₀ = 2 has a positive sign from the θ = −1 term:
        // f₂(2;0) = −a²(1/12 − 1/4) = a²/6 > 0.
        assert!(
            (s2v - 0.005f64.powi(2) / 6.0).abs() < 1e-18,
            "s₂ = {s2v:.6e}"
        );
        assert_eq!(iv_c.disc_zero.unwrap(), s2v * s2v - g2v.norm_sqr());
        if iv_c.disc_zero.unwrap() > BORDERLINE {
            assert_eq!(iv_c.kind, CaseKind::ResHalfInteger { k: 4 });
            assert!(iv_c.predicted.unwrap().coeff < 0.0);
        }
        // Borderline discriminant (tiny coefficients): degenerate, never a
        // guess.
        let tiny = setup(&[(vec![1], c(1e-4, 0.0))], 1e-4, 0.125, 3);
        let d = classify(&tiny.g, &tiny.zones, &tiny.pot, &Lambda::Resonant(Frequency::new(vec![1])))
            .unwrap();
        assert_eq!(d.kind, CaseKind::ResDegenerate { min_k: 4 });
        assert!(d.borderline);
    }

    #[test]
    fn half_integer_case_has_three_halves_onset() {
        // |τ| = |ν| with disc > 0 needs an engineered second frequency:
        // at θ₀ = 2 the θ = ±1 modes push s₂(0) positive, and a purely
        // imaginary ν keeps Re(ν·conj(g₂)) harmless.
        let b = 0.005;
        let nu = 0.003;
        let tau = nu;
        let s = setup(
            &[(vec![1], c(b, 0.0)), (vec![2], c(0.0, nu))],
            tau,
            0.125,
            3,
        );
        let lam = Lambda::Resonant(Frequency::new(vec![2]));
        let label = classify(&s.g, &s.zones, &s.pot, &lam).unwrap();
        assert_eq!(
            label.kind,
            CaseKind::ResHalfInteger { k: 3 },
            "disc_gap = {:?}",
            label.disc_gap
        );
        let a0 = label.predicted.unwrap().coeff;
        assert!(a0 < 0.0, "Case-1 onset coefficient should be negative");
        let ladder = Ladder::geometric(1e-2, 0.5, 7).unwrap();
        let exp = ids_expansion(&s.g, &s.zones, &s.pot, &lam, &ladder).unwrap();
        let got = exp.leading_coeff().unwrap();
        assert!(
            (got / a0 - 1.0).abs() < 5e-2,
            "fitted {got:.6e} vs predicted {a0:.6e}"
        );
        match exp.slope.unwrap() {
            OrderFit::Slope { order, .. } => {
                assert!((order - 1.5).abs() < 0.05, "order {order}")
            }
            other => panic!("expected a slope, got {other:?}"),
        }
    }

    #[test]
    fn measure_agrees_with_indicator_quadrature() {
        // Two-generator quasi-periodic potential, nonresonant level.
        let basis = GeneratorBasis::new(&["1", "sqrt:2"]).unwrap();
        let pot = Potential::from_coefficients(
            basis,
            &[
                (Frequency::new(vec![1, 0]), c(0.004, 0.001)),
                (Frequency::new(vec![0, 1]), c(0.003, -0.002)),
                (Frequency::zero(2), c(0.002, 0.0)),
            ],
        )
        .unwrap();
        let shell = Shell::build(pot.basis().clone(), 2, 10_000).unwrap();
        let cuts = CutoffFamily::new(0.0625, MollifierKind::Standard).unwrap();
        let zones = ZoneSet::build(&shell, &cuts, 1.0).unwrap();
        let g = GaugeExpansion::build(
            &pot,
            cuts,
            GaugeOpts {
                max_grade: 3,
                prune_threshold: 1e-28,
            },
        )
        .unwrap();
        let eps = 2e-3;
        let lam = 2.0;
        let bd = ids_breakdown(&g, &zones, eps, lam).unwrap();
        let mut probes: Vec<f64> = bd.boundaries.clone();
        for z in zones.zones() {
            probes.push(z.lo());
            probes.push(z.hi());
        }
        let x = (lam + 1.0).sqrt();
        let meas = indicator_measure(
            |xi| g_value(&g, &zones, eps, xi),
            lam,
            -x,
            x,
            4001,
            &probes,
        );
        let mine = 2.0 * lam.sqrt() + bd.deviation;
        assert!(
            (meas - mine).abs() < 1e-9,
            "indicator {meas:.12} vs pieces {mine:.12}"
        );
    }

    #[test]
    fn shift_identity_holds_to_tolerance() {
        // N(λ; V) = N(λ − ετ; V − τ) exactly, for any level.
        let tau = 0.003;
        let sv = setup(&[(vec![1], c(0.004, 0.0))], tau, 0.125, 3);
        let s0 = setup(&[(vec![1], c(0.004, 0.0))], 0.0, 0.125, 3);
        let eps = 1e-3;
        for lam in [2.0, 0.5, 1.0 + eps * tau] {
            let n1 = ids_value(&sv.g, &sv.zones, eps, lam).unwrap();
            let n2 = ids_value(&s0.g, &s0.zones, eps, lam - eps * tau).unwrap();
            assert!(
                (n1 - n2).abs() < 1e-12,
                "λ={lam}: {n1:.15} vs {n2:.15}"
            );
        }
    }

    #[test]
    fn ids_is_monotone_across_the_gap() {
        let s = setup(&[(vec![1], c(0.005, 0.0))], 0.002, 0.125, 3);
        let eps = 2e-3;
        let mut prev = -1.0;
        for i in 0..=60 {
            // The grid crosses the λ = 1 gap; inside-zone levels go through
            // the pair logic like any others.
            let lam = 0.5 + i as f64 * (1.5 - 0.5) / 60.0;
            let n = ids_value(&s.g, &s.zones, eps, lam).unwrap();
            assert!(
                n >= prev - 1e-13,
                "N not monotone at λ={lam}: {n} < {prev}"
            );
            prev = n;
        }
    }
}
