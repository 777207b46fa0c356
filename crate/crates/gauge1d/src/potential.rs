//! Trigonometric potentials `V(x) = Σ_θ V̂_θ e^{2iθx}` over a frequency
//! lattice.
//!
//! Reality forces `V̂_{-θ} = conj(V̂_θ)` and a real mean `V̂₀ = τ`. The whole
//! construction assumes the Besikovich norm `‖V‖₂ = (Σ|V̂_θ|²)^{1/2}` is small
//! (< 1/100); constructors enforce that bound. Almost-periodic potentials are
//! specified by a decay rule `|V̂_θ| = C·Z(θ)^{-P}` with deterministic seeded
//! phases and are materialized on finite shells; truncation then carries an
//! explicit analytic tail bound obtained from the tier-count estimate
//! `#T_m ≤ (3m)^{3l}`.

use std::collections::HashMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::lattice::{tier_count_bound, Frequency, GeneratorBasis, Shell};
use crate::numeric::fnv1a;
use crate::wide::{BigFixed, Prec};
use crate::{Error, Result, C64};

/// Magnitudes below this are not materialized; the analytic tail bound covers
/// them. Far above the f64 subnormal range so squares stay normal.
const MATERIALIZE_FLOOR: f64 = 1e-280;

/// Besikovich-norm budget: constructors reject potentials at or above it.
pub const NORM_BUDGET: f64 = 0.01;

/// Power-law decay rule for almost-periodic coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayRule {
    /// Magnitude scale: `|V̂_θ| = c · Z(θ)^{-p}`.
    pub c: f64,
    /// Decay power; must exceed `3·dim + 1` so tier-weighted tails converge.
    pub p: f64,
    /// Seed for the deterministic phase draw.
    pub seed: u64,
}

impl DecayRule {
    /// Phase `α(θ) ∈ [0, 2π)`, odd under `θ ↦ -θ`, deterministic in the seed
    /// and the integer coefficient vector.
    fn phase(&self, f: &Frequency) -> f64 {
        // Draw on the canonical representative (first nonzero coefficient
        // positive) and negate for the mirror, so α(-θ) = -α(θ).
        let neg = f
            .coeffs()
            .iter()
            .find(|&&c| c != 0)
            .map(|&c| c < 0)
            .unwrap_or(false);
        let rep = if neg { f.neg() } else { f.clone() };
        let mut bytes = self.seed.to_le_bytes().to_vec();
        for &c in rep.coeffs() {
            bytes.extend_from_slice(&c.to_le_bytes());
        }
        let alpha = TAU * (fnv1a(&bytes) as f64 / 2f64.powi(64));
        if neg {
            -alpha
        } else {
            alpha
        }
    }

    /// Coefficient magnitude at order `z ≥ 1`.
    pub fn magnitude(&self, z: u32) -> f64 {
        self.c * (z as f64).powf(-self.p)
    }

    /// Magnitude in big arithmetic (exact division when `p` is an integer).
    pub fn magnitude_wide(&self, z: u32, prec: Prec) -> Result<BigFixed> {
        if self.p.fract() != 0.0 || self.p < 1.0 || self.p > 4000.0 {
            return Err(Error::Infeasible(format!(
                "wide decay magnitudes need integer p, got {}",
                self.p
            )));
        }
        let mut denom = prec.int(1);
        let zb = prec.int(z as i64);
        for _ in 0..self.p as u32 {
            denom = denom * zb.clone();
        }
        Ok(prec.from_f64(self.c) / denom)
    }
}

/// A finite (or finitely materialized) trigonometric potential.
#[derive(Debug, Clone)]
pub struct Potential {
    basis: GeneratorBasis,
    /// Sorted by `(order, coefficient vector)`; includes the mean at the zero
    /// frequency when nonzero.
    coeffs: Vec<(Frequency, C64)>,
    index: HashMap<Frequency, usize>,
    decay: Option<DecayRule>,
    /// Orders ≤ this are fully materialized (relevant only with a decay rule).
    materialized_order: u32,
}

impl Potential {
    /// Builds from explicit coefficients.
    ///
    /// Entries may list one or both of each `±θ` pair: missing mirrors are
    /// completed by conjugation, and listing both inconsistently is an error.
    /// The zero-frequency entry must be real, and the Besikovich norm must
    /// stay below [`NORM_BUDGET`].
    pub fn from_coefficients(
        basis: GeneratorBasis,
        entries: &[(Frequency, C64)],
    ) -> Result<Potential> {
        let dim = basis.len();
        let mut map: HashMap<Frequency, C64> = HashMap::new();
        for (f, v) in entries {
            if f.dim() != dim {
                return Err(Error::Validation(format!(
                    "frequency {f} has dimension {} but the basis has {dim}",
                    f.dim()
                )));
            }
            if let Some(old) = map.insert(f.clone(), *v) {
                if (old - v).norm() > 1e-15 * v.norm().max(1.0) {
                    return Err(Error::Validation(format!(
                        "frequency {f} listed twice with different values"
                    )));
                }
            }
        }
        for (f, v) in map.clone() {
            let mirror = f.neg();
            match map.get(&mirror) {
                Some(w) => {
                    if (w - v.conj()).norm() > 1e-14 * v.norm().max(1e-30) {
                        return Err(Error::Validation(format!(
                            "reality violated: coefficient at -{f} is not the conjugate"
                        )));
                    }
                }
                None => {
                    map.insert(mirror, v.conj());
                }
            }
        }
        if let Some(t) = map.get(&Frequency::zero(dim)) {
            if t.im.abs() > 1e-15 * t.norm().max(1e-30) {
                return Err(Error::Validation(
                    "mean coefficient (zero frequency) must be real".into(),
                ));
            }
        }
        let mut coeffs: Vec<(Frequency, C64)> = map
            .into_iter()
            .filter(|(_, v)| v.norm() != 0.0)
            .collect();
        coeffs.sort_by(|a, b| {
            (a.0.order(), a.0.coeffs())
                .cmp(&(b.0.order(), b.0.coeffs()))
        });
        let pot = Potential::assemble(basis, coeffs, None, u32::MAX);
        pot.check_norm_budget()?;
        Ok(pot)
    }

    /// Materializes a decay-rule potential on the shell of `max_order`.
    ///
    /// `tau` is the (real) mean, stored at the zero frequency. Orders whose
    /// magnitude falls below an internal floor are left to the tail bound.
    pub fn from_decay(
        basis: GeneratorBasis,
        rule: DecayRule,
        tau: f64,
        max_order: u32,
        cap: usize,
    ) -> Result<Potential> {
        let dim = basis.len();
        if rule.p <= 3.0 * dim as f64 + 1.0 {
            return Err(Error::Validation(format!(
                "decay power p = {} too small for dimension {dim}: need p > {}",
                rule.p,
                3 * dim + 1
            )));
        }
        if rule.c <= 0.0 {
            return Err(Error::Validation("decay scale c must be positive".into()));
        }
        // Beyond this order every magnitude is below the floor.
        let effective = (1..=max_order)
            .take_while(|&z| rule.magnitude(z) >= MATERIALIZE_FLOOR)
            .last()
            .unwrap_or(0);
        let shell = Shell::build(basis.clone(), effective, cap)?;
        let mut coeffs: Vec<(Frequency, C64)> = Vec::with_capacity(shell.len());
        if tau != 0.0 {
            coeffs.push((Frequency::zero(dim), C64::new(tau, 0.0)));
        }
        for f in shell.nonzero() {
            let mag = rule.magnitude(f.order());
            let alpha = rule.phase(f);
            coeffs.push((f.clone(), C64::from_polar(mag, alpha)));
        }
        coeffs.sort_by(|a, b| (a.0.order(), a.0.coeffs()).cmp(&(b.0.order(), b.0.coeffs())));
        let pot = Potential::assemble(basis, coeffs, Some(rule), effective);
        pot.check_norm_budget()?;
        Ok(pot)
    }

    fn assemble(
        basis: GeneratorBasis,
        coeffs: Vec<(Frequency, C64)>,
        decay: Option<DecayRule>,
        materialized_order: u32,
    ) -> Potential {
        let index = coeffs
            .iter()
            .enumerate()
            .map(|(i, (f, _))| (f.clone(), i))
            .collect();
        Potential {
            basis,
            coeffs,
            index,
            decay,
            materialized_order,
        }
    }

    fn check_norm_budget(&self) -> Result<()> {
        let mut total = self.b2_norm_squared();
        if let Some(rule) = &self.decay {
            total += self.tail_sum(self.materialized_order, 2.0, rule);
        }
        let norm = total.sqrt();
        if norm >= NORM_BUDGET {
            return Err(Error::Validation(format!(
                "potential norm {norm:.3e} is at or above the budget {NORM_BUDGET}"
            )));
        }
        Ok(())
    }

    pub fn basis(&self) -> &GeneratorBasis {
        &self.basis
    }

    pub fn decay_rule(&self) -> Option<&DecayRule> {
        self.decay.as_ref()
    }

    /// The mean `τ = V̂₀`.
    pub fn tau(&self) -> f64 {
        self.coeff(&Frequency::zero(self.basis.len())).re
    }

    /// Coefficient at `θ` (zero when absent).
    pub fn coeff(&self, f: &Frequency) -> C64 {
        self.index
            .get(f)
            .map(|&i| self.coeffs[i].1)
            .unwrap_or_else(|| C64::new(0.0, 0.0))
    }

    /// Materialized support, sorted by `(order, coefficients)`.
    pub fn support(&self) -> &[(Frequency, C64)] {
        &self.coeffs
    }

    /// The potential with its mean removed (`V' = V - τ`).
    pub fn without_mean(&self) -> Potential {
        let zero = Frequency::zero(self.basis.len());
        let coeffs: Vec<_> = self
            .coeffs
            .iter()
            .filter(|(f, _)| *f != zero)
            .cloned()
            .collect();
        Potential::assemble(
            self.basis.clone(),
            coeffs,
            self.decay,
            self.materialized_order,
        )
    }

    /// Restriction to orders ≤ `max_order`, with an upper bound on the full
    /// discarded coefficient mass `Σ_{Z(θ) > max_order} |V̂_θ|` — the exactly
    /// dropped materialized part plus the analytic unmaterialized tail.
    pub fn truncate(&self, max_order: u32) -> (Potential, f64) {
        let mut kept = Vec::new();
        let mut dropped = 0.0;
        for (f, v) in &self.coeffs {
            if f.order() <= max_order {
                kept.push((f.clone(), *v));
            } else {
                dropped += v.norm();
            }
        }
        if let Some(rule) = &self.decay {
            dropped += self.tail_sum(self.materialized_order, 1.0, rule);
        }
        let pot = Potential::assemble(
            self.basis.clone(),
            kept,
            self.decay,
            self.materialized_order.min(max_order),
        );
        (pot, dropped)
    }

    /// Analytic bound on `Σ_{Z(θ) > from} |V̂_θ|^pow` for decay potentials:
    /// two hundred explicit tier-bound terms plus an integral remainder.
    fn tail_sum(&self, from: u32, pow: f64, rule: &DecayRule) -> f64 {
        let dim = self.basis.len();
        let exponent = 3.0 * dim as f64 - pow * rule.p; // per-tier growth × decay
        debug_assert!(exponent < -1.0);
        let mut total = 0.0;
        let start = from as f64 + 1.0;
        for k in 0..200 {
            let m = start + k as f64;
            total += tier_count_bound(dim, m as u32) * (rule.c * m.powf(-rule.p)).powf(pow);
        }
        // ∫_{start+200}^∞ (3m)^{3l} (c m^{-p})^pow dm, increasing integrand
        // bounded by the integral shifted one unit left.
        let a = start + 199.0;
        total += 3f64.powi(3 * dim as i32) * rule.c.powf(pow) * a.powf(exponent + 1.0)
            / (-(exponent + 1.0));
        total
    }

    /// `Σ_θ |V̂_θ|²` over the materialized support.
    pub fn b2_norm_squared(&self) -> f64 {
        self.coeffs.iter().map(|(_, v)| v.norm_sqr()).sum()
    }

    /// Besikovich norm `(Σ|V̂_θ|²)^{1/2}`.
    pub fn b2_norm(&self) -> f64 {
        self.b2_norm_squared().sqrt()
    }

    /// Symbol norm `Σ_θ |V̂_θ|` (the ξ-independent case of the graded norm).
    pub fn symbol_norm(&self) -> f64 {
        self.coeffs.iter().map(|(_, v)| v.norm()).sum()
    }

    /// Largest `|θ|` in the materialized support.
    pub fn max_frequency_value(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|(f, _)| f.value(&self.basis).abs())
            .fold(0.0, f64::max)
    }

    /// Pointwise evaluation; the imaginary parts cancel by symmetry.
    pub fn evaluate(&self, x: f64) -> f64 {
        let mut acc = C64::new(0.0, 0.0);
        for (f, v) in &self.coeffs {
            let phase = 2.0 * f.value(&self.basis) * x;
            acc += v * C64::from_polar(1.0, phase);
        }
        debug_assert!(acc.im.abs() < 1e-10 * (1.0 + acc.re.abs()));
        acc.re
    }

    /// Deterministic identity hash (cache keys): basis literals, sorted
    /// coefficients at full bit precision, and the decay rule if any.
    pub fn hash_id(&self) -> u64 {
        let mut bytes: Vec<u8> = Vec::new();
        for i in 0..self.basis.len() {
            match self.basis.generator(i) {
                crate::lattice::Generator::Decimal(s) => {
                    bytes.push(0);
                    bytes.extend_from_slice(s.as_bytes());
                }
                crate::lattice::Generator::SqrtInt(n) => {
                    bytes.push(1);
                    bytes.extend_from_slice(&n.to_le_bytes());
                }
            }
        }
        for (f, v) in &self.coeffs {
            for &c in f.coeffs() {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
            bytes.extend_from_slice(&v.re.to_bits().to_le_bytes());
            bytes.extend_from_slice(&v.im.to_bits().to_le_bytes());
        }
        if let Some(rule) = &self.decay {
            bytes.extend_from_slice(&rule.c.to_bits().to_le_bytes());
            bytes.extend_from_slice(&rule.p.to_bits().to_le_bytes());
            bytes.extend_from_slice(&rule.seed.to_le_bytes());
        }
        fnv1a(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Real;

    fn unit_freq(n: i64) -> Frequency {
        Frequency::new(vec![n])
    }

    /// `V = 2a·cos(2x)`: coefficients a at ±1.
    fn cosine_potential(a: f64) -> Potential {
        Potential::from_coefficients(
            GeneratorBasis::unit(),
            &[(unit_freq(1), C64::new(a, 0.0))],
        )
        .unwrap()
    }

    #[test]
    fn mirrors_are_completed_and_evaluation_is_real() {
        let v = cosine_potential(0.004);
        assert_eq!(v.coeff(&unit_freq(-1)), C64::new(0.004, 0.0));
        for &x in &[0.0f64, 0.3, 1.7, -2.2] {
            let expect = 2.0 * 0.004 * (2.0 * x).cos();
            assert!((v.evaluate(x) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn inconsistent_mirror_is_rejected() {
        let r = Potential::from_coefficients(
            GeneratorBasis::unit(),
            &[
                (unit_freq(1), C64::new(0.001, 0.002)),
                (unit_freq(-1), C64::new(0.001, 0.002)), // should be the conjugate
            ],
        );
        assert!(r.is_err());
    }

    #[test]
    fn complex_mean_is_rejected() {
        let r = Potential::from_coefficients(
            GeneratorBasis::unit(),
            &[(unit_freq(0), C64::new(0.001, 0.001))],
        );
        assert!(r.is_err());
    }

    #[test]
    fn norm_budget_is_enforced() {
        // Two coefficients of 0.008: B₂ norm = 0.008·√2 ≈ 0.0113 ≥ 0.01.
        let r = Potential::from_coefficients(
            GeneratorBasis::unit(),
            &[
                (unit_freq(1), C64::new(0.008, 0.0)),
                (unit_freq(2), C64::new(0.008, 0.0)),
            ],
        );
        assert!(r.is_err());
        assert!(cosine_potential(0.005).b2_norm() < NORM_BUDGET);
    }

    #[test]
    fn tau_and_mean_removal() {
        let v = Potential::from_coefficients(
            GeneratorBasis::unit(),
            &[
                (unit_freq(0), C64::new(-0.003, 0.0)),
                (unit_freq(1), C64::new(0.002, 0.001)),
            ],
        )
        .unwrap();
        assert_eq!(v.tau(), -0.003);
        let vp = v.without_mean();
        assert_eq!(vp.tau(), 0.0);
        assert_eq!(vp.coeff(&unit_freq(1)), C64::new(0.002, 0.001));
        // Mean removal shifts pointwise values by exactly τ.
        assert!((v.evaluate(0.4) - vp.evaluate(0.4) - (-0.003)).abs() < 1e-16);
    }

    #[test]
    fn decay_rule_materializes_symmetrically_and_deterministically() {
        let basis = GeneratorBasis::new(&["1", "sqrt:2"]).unwrap();
        let rule = DecayRule {
            c: 0.004,
            p: 60.0,
            seed: 7,
        };
        let v = Potential::from_decay(basis.clone(), rule, 0.0, 40, 1_000_000).unwrap();
        let f = Frequency::new(vec![1, -1]);
        let c = v.coeff(&f);
        assert!((c.norm() - 0.004 * 2f64.powf(-60.0)).abs() < 1e-25);
        assert_eq!(v.coeff(&f.neg()), c.conj());
        // Deterministic in the seed...
        let v2 = Potential::from_decay(basis.clone(), rule, 0.0, 40, 1_000_000).unwrap();
        assert_eq!(v2.coeff(&f), c);
        // ...and actually dependent on it.
        let v3 = Potential::from_decay(
            basis,
            DecayRule { seed: 8, ..rule },
            0.0,
            40,
            1_000_000,
        )
        .unwrap();
        assert_ne!(v3.coeff(&f), c);
    }

    #[test]
    fn decay_power_must_beat_tier_growth() {
        let basis = GeneratorBasis::new(&["1", "sqrt:2"]).unwrap();
        let rule = DecayRule {
            c: 0.001,
            p: 6.0, // needs > 7 for dim 2
            seed: 1,
        };
        assert!(Potential::from_decay(basis, rule, 0.0, 10, 1_000_000).is_err());
    }

    #[test]
    fn truncation_tail_bounds_dropped_mass() {
        let basis = GeneratorBasis::new(&["1", "sqrt:2"]).unwrap();
        let rule = DecayRule {
            c: 0.004,
            p: 9.0,
            seed: 3,
        };
        let v = Potential::from_decay(basis, rule, 0.0, 30, 1_000_000).unwrap();
        let (t, tail) = v.truncate(6);
        // The bound must cover what truncate actually dropped from the
        // materialized part, with room for the unmaterialized remainder.
        let dropped: f64 = v
            .support()
            .iter()
            .filter(|(f, _)| f.order() > 6)
            .map(|(_, c)| c.norm())
            .sum();
        assert!(tail >= dropped);
        assert!(t.support().iter().all(|(f, _)| f.order() <= 6));
        // Tail bounds shrink as the cut moves out.
        let (_, tail12) = v.truncate(12);
        assert!(tail12 < tail);
    }

    #[test]
    fn wide_magnitude_matches_f64() {
        let rule = DecayRule {
            c: 0.0044189453125, // dyadic: exact in BigFixed
            p: 60.0,
            seed: 1,
        };
        let wide = rule.magnitude_wide(21, Prec(120)).unwrap();
        let rel = (wide.to_f64() - rule.magnitude(21)).abs() / rule.magnitude(21);
        assert!(rel < 1e-12);
        assert!(DecayRule { p: 60.5, ..rule }
            .magnitude_wide(21, Prec(120))
            .is_err());
    }

    #[test]
    fn hash_distinguishes_potentials() {
        let a = cosine_potential(0.004);
        let b = cosine_potential(0.0041);
        assert_ne!(a.hash_id(), b.hash_id());
        assert_eq!(a.hash_id(), cosine_potential(0.004).hash_id());
    }
}
