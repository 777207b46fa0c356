//! Frequency lattice: exact integer combinations of the generator basis.
//!
//! A potential's frequencies live in the set of finite integer combinations
//! `θ = Σ nᵢ ωᵢ` of positive, rationally independent generators. Frequencies
//! are kept as exact integer vectors (never as floats), so lattice identities
//! like `θ + (-θ) = 0` hold exactly no matter how small the real value `θ`
//! gets. The order `Z(θ) = Σ|nᵢ|` is the minimal number of generator summands
//! producing θ; the shell of order `L` collects every frequency with
//! `Z(θ) ≤ L` and is the support of the truncated potentials used at step `L`
//! of the construction.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::wide::{BigFixed, Prec};
use crate::{Error, Result};

/// One generator of the frequency lattice.
///
/// `Decimal` carries a plain decimal literal (the provenance of the value);
/// `SqrtInt` is the exact square root of a non-square integer, which both
/// evaluates to arbitrary precision and comes with a proven diophantine
/// margin (see [`GeneratorBasis::analytic_margin`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Generator {
    Decimal(String),
    SqrtInt(u64),
}

impl Generator {
    /// Parses `"sqrt:N"` into [`Generator::SqrtInt`], anything else as a
    /// decimal literal.
    pub fn parse(text: &str) -> Result<Generator> {
        if let Some(rest) = text.strip_prefix("sqrt:") {
            let n: u64 = rest
                .parse()
                .map_err(|_| Error::Config(format!("bad sqrt generator: {text}")))?;
            return Ok(Generator::SqrtInt(n));
        }
        let v: f64 = text
            .parse()
            .map_err(|_| Error::Config(format!("bad generator literal: {text}")))?;
        if !v.is_finite() {
            return Err(Error::Config(format!("non-finite generator: {text}")));
        }
        Ok(Generator::Decimal(text.to_string()))
    }

    pub fn value(&self) -> f64 {
        match self {
            Generator::Decimal(s) => s.parse().expect("validated at construction"),
            Generator::SqrtInt(n) => (*n as f64).sqrt(),
        }
    }

    /// Value at the requested decimal precision (floor-rounded in the last
    /// digit for square roots).
    pub fn value_wide(&self, prec: Prec) -> BigFixed {
        match self {
            Generator::Decimal(s) => prec.parse(s).expect("validated at construction"),
            Generator::SqrtInt(n) => prec.int(*n as i64).sqrt_fast(),
        }
    }
}

/// Positive, rationally independent generators `ω₁ < … < ω_l` of the lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorBasis {
    generators: Vec<Generator>,
}

impl GeneratorBasis {
    pub fn new(texts: &[&str]) -> Result<Self> {
        if texts.is_empty() {
            return Err(Error::Config("empty generator basis".into()));
        }
        let generators: Vec<Generator> = texts
            .iter()
            .map(|t| Generator::parse(t))
            .collect::<Result<_>>()?;
        for g in &generators {
            if g.value() <= 0.0 {
                return Err(Error::Validation(format!(
                    "generators must be positive, got {}",
                    g.value()
                )));
            }
            if let Generator::SqrtInt(n) = g {
                let r = (*n as f64).sqrt().round() as u64;
                if r * r == *n {
                    return Err(Error::Validation(format!(
                        "sqrt:{n} is rational (perfect square)"
                    )));
                }
            }
        }
        Ok(GeneratorBasis { generators })
    }

    /// The periodic one-generator basis ω = 1.
    pub fn unit() -> Self {
        GeneratorBasis::new(&["1"]).expect("static basis")
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn value(&self, i: usize) -> f64 {
        self.generators[i].value()
    }

    pub fn generator(&self, i: usize) -> &Generator {
        &self.generators[i]
    }

    /// Proven diophantine margin `|θ| ≥ c · Z(θ)^{-p₀}` for every nonzero
    /// lattice frequency, when available for this basis.
    ///
    /// - one generator: every nonzero value is ≥ ω₁ itself (`p₀ = 0`);
    /// - `(k, sqrt:n)` with integer `k`: from `|p²k² - n q²| ≥ 1` one gets
    ///   `|pk + q√n| ≥ 1 / (k + 2√n · Z)`, so `c = 1/(k + 2√n)`, `p₀ = 1`.
    ///
    /// Other bases get `None`; callers must then rely on margins measured on
    /// enumerable shells.
    pub fn analytic_margin(&self) -> Option<(f64, f64)> {
        match self.generators.as_slice() {
            [g] => Some((g.value(), 0.0)),
            [Generator::Decimal(k), Generator::SqrtInt(n)] => {
                let kv: f64 = k.parse().ok()?;
                if kv.fract() != 0.0 || kv < 1.0 {
                    return None;
                }
                // |p·k + q√n| ≤ 1 implies |p·k - q√n| ≤ 1 + 2√n|q|, and
                // |p²k² - nq²| ≥ 1 because √n is irrational and k integer.
                let sn = (*n as f64).sqrt();
                Some((1.0 / (kv + 2.0 * sn), 1.0))
            }
            _ => None,
        }
    }

    /// Checks empirically that no small integer combination vanishes: the
    /// minimum of `|Σ nᵢωᵢ|` over `0 < Σ|nᵢ| ≤ depth` must exceed `tol`.
    /// Returns that minimum.
    pub fn validate_independence(&self, depth: u32, tol: f64) -> Result<f64> {
        let shell = Shell::build(self.clone(), depth, 2_000_000)?;
        let mut min = f64::INFINITY;
        for f in shell.nonzero() {
            let v = f.value(self).abs();
            if v < min {
                min = v;
            }
        }
        if min <= tol {
            return Err(Error::Validation(format!(
                "generator basis is rationally dependent to depth {depth}: min |θ| = {min:.3e}"
            )));
        }
        Ok(min)
    }
}

/// A lattice frequency as an exact integer vector over the basis.
///
/// Ordering is lexicographic on the coefficient vector; it exists only to
/// give containers a canonical layout and has no metric meaning.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Frequency {
    n: Vec<i64>,
}

impl Frequency {
    pub fn new(n: Vec<i64>) -> Self {
        Frequency { n }
    }

    pub fn zero(dim: usize) -> Self {
        Frequency { n: vec![0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn coeffs(&self) -> &[i64] {
        &self.n
    }

    pub fn is_zero(&self) -> bool {
        self.n.iter().all(|&c| c == 0)
    }

    /// Order `Z(θ) = Σ|nᵢ|`: the minimal number of generator summands.
    pub fn order(&self) -> u32 {
        self.n.iter().map(|c| c.unsigned_abs() as u32).sum()
    }

    pub fn value(&self, basis: &GeneratorBasis) -> f64 {
        self.n
            .iter()
            .enumerate()
            .map(|(i, &c)| c as f64 * basis.value(i))
            .sum()
    }

    pub fn value_wide(&self, basis: &GeneratorBasis, prec: Prec) -> BigFixed {
        let mut acc = prec.int(0);
        for (i, &c) in self.n.iter().enumerate() {
            acc = acc + prec.int(c) * basis.generator(i).value_wide(prec);
        }
        acc
    }

    pub fn neg(&self) -> Self {
        Frequency {
            n: self.n.iter().map(|&c| -c).collect(),
        }
    }

    pub fn add(&self, other: &Frequency) -> Self {
        debug_assert_eq!(self.n.len(), other.n.len());
        Frequency {
            n: self
                .n
                .iter()
                .zip(&other.n)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Frequency) -> Self {
        self.add(&other.neg())
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}]",
            self.n
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",")
        )
    }
}

/// All frequencies of order ≤ `max_order`, with tier structure.
///
/// Tier `m` is the set of frequencies of exact order `m` (the new points at
/// step `m`). Frequencies are stored sorted by `(order, coefficient vector)`,
/// so enumeration order is deterministic.
#[derive(Debug, Clone)]
pub struct Shell {
    basis: GeneratorBasis,
    max_order: u32,
    freqs: Vec<Frequency>,
    tier_start: Vec<usize>,
    index: HashMap<Vec<i64>, usize>,
    by_value: Vec<(f64, usize)>,
}

impl Shell {
    /// Enumerates the shell of order `max_order`; fails with
    /// [`Error::ShellCap`] if it would hold more than `cap` frequencies.
    pub fn build(basis: GeneratorBasis, max_order: u32, cap: usize) -> Result<Shell> {
        let dim = basis.len();
        let mut freqs: Vec<Frequency> = Vec::new();
        let mut current = vec![0i64; dim];
        enumerate_l1_ball(&mut current, 0, max_order as i64, &mut freqs, cap)?;
        freqs.sort_by(|a, b| (a.order(), &a.n).cmp(&(b.order(), &b.n)));

        let mut tier_start = vec![usize::MAX; max_order as usize + 2];
        let mut index = HashMap::with_capacity(freqs.len());
        for (i, f) in freqs.iter().enumerate() {
            let m = f.order() as usize;
            if tier_start[m] == usize::MAX {
                tier_start[m] = i;
            }
            index.insert(f.n.clone(), i);
        }
        tier_start[max_order as usize + 1] = freqs.len();
        // Backfill empty tiers (possible only past max_order, but keep the
        // array total anyway).
        for m in (0..=max_order as usize).rev() {
            if tier_start[m] == usize::MAX {
                tier_start[m] = tier_start[m + 1];
            }
        }

        let mut by_value: Vec<(f64, usize)> = freqs
            .iter()
            .enumerate()
            .map(|(i, f)| (f.value(&basis), i))
            .collect();
        by_value.sort_by(|a, b| a.0.total_cmp(&b.0));

        Ok(Shell {
            basis,
            max_order,
            freqs,
            tier_start,
            index,
            by_value,
        })
    }

    pub fn basis(&self) -> &GeneratorBasis {
        &self.basis
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn frequencies(&self) -> &[Frequency] {
        &self.freqs
    }

    /// Frequencies of exact order `m`.
    pub fn tier(&self, m: u32) -> &[Frequency] {
        if m > self.max_order {
            return &[];
        }
        &self.freqs[self.tier_start[m as usize]..self.tier_start[m as usize + 1]]
    }

    /// All nonzero frequencies (order ≥ 1).
    pub fn nonzero(&self) -> &[Frequency] {
        &self.freqs[self.tier_start[1]..]
    }

    pub fn contains(&self, f: &Frequency) -> bool {
        self.index.contains_key(&f.n)
    }

    /// Frequencies whose value lies within `r` of `x`.
    pub fn values_near(&self, x: f64, r: f64) -> Vec<&Frequency> {
        let lo = self
            .by_value
            .partition_point(|&(v, _)| v < x - r);
        self.by_value[lo..]
            .iter()
            .take_while(|&&(v, _)| v <= x + r)
            .map(|&(_, i)| &self.freqs[i])
            .collect()
    }

    /// Smallest observed `|θ| · Z(θ)^{p₀}` over the nonzero shell, with the
    /// frequency attaining it. Errors if some nonzero frequency evaluates to
    /// zero (rationally dependent basis).
    pub fn diophantine_margin(&self, p0: f64) -> Result<(f64, Frequency)> {
        let mut best = f64::INFINITY;
        let mut arg = None;
        for f in self.nonzero() {
            let v = f.value(&self.basis).abs();
            if v == 0.0 {
                return Err(Error::Validation(format!(
                    "frequency {f} evaluates to zero: dependent basis"
                )));
            }
            let m = v * (f.order() as f64).powf(p0);
            if m < best {
                best = m;
                arg = Some(f.clone());
            }
        }
        arg.map(|f| (best, f))
            .ok_or_else(|| Error::Validation("empty shell".into()))
    }
}

/// A-priori bound on the tier count: `#T_m ≤ (3m)^{3·dim}` (used for tail
/// estimates past the enumerable range).
pub fn tier_count_bound(dim: usize, m: u32) -> f64 {
    (3.0 * m as f64).powi(3 * dim as i32)
}

fn enumerate_l1_ball(
    current: &mut Vec<i64>,
    pos: usize,
    budget: i64,
    out: &mut Vec<Frequency>,
    cap: usize,
) -> Result<()> {
    if pos == current.len() {
        if out.len() >= cap {
            return Err(Error::ShellCap(format!(
                "shell enumeration exceeded cap of {cap} frequencies"
            )));
        }
        out.push(Frequency::new(current.clone()));
        return Ok(());
    }
    for c in -budget..=budget {
        current[pos] = c;
        enumerate_l1_ball(current, pos + 1, budget - c.abs(), out, cap)?;
    }
    current[pos] = 0;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sqrt2_basis() -> GeneratorBasis {
        GeneratorBasis::new(&["1", "sqrt:2"]).unwrap()
    }

    #[test]
    fn shell_counts_match_l1_ball_formulas() {
        // dim 1: 2L+1 points; dim 2: 2L²+2L+1 points.
        let s1 = Shell::build(GeneratorBasis::unit(), 7, 1_000_000).unwrap();
        assert_eq!(s1.len(), 15);
        let s2 = Shell::build(sqrt2_basis(), 9, 1_000_000).unwrap();
        assert_eq!(s2.len(), 2 * 81 + 2 * 9 + 1);
        assert!(s2.len() as f64 <= tier_count_bound(2, 9));
    }

    #[test]
    fn tiers_partition_and_decompose() {
        let s = Shell::build(sqrt2_basis(), 6, 1_000_000).unwrap();
        let total: usize = (0..=6).map(|m| s.tier(m).len()).sum();
        assert_eq!(total, s.len());
        assert_eq!(s.tier(0), &[Frequency::zero(2)]);
        // Every order-m point is an order-(m-1) point plus a generator: the
        // shell is the m-fold sumset of {0, ±ω₁, ±ω₂}.
        for m in 2..=6u32 {
            for f in s.tier(m) {
                let mut found = false;
                'outer: for i in 0..2usize {
                    for step in [-1i64, 1] {
                        let mut n = f.coeffs().to_vec();
                        n[i] -= step;
                        let g = Frequency::new(n);
                        if g.order() == m - 1 && s.contains(&g) {
                            found = true;
                            break 'outer;
                        }
                    }
                }
                assert!(found, "tier point {f} lacks an order-{} parent", m - 1);
            }
        }
    }

    #[test]
    fn shell_cap_is_enforced() {
        match Shell::build(sqrt2_basis(), 200, 1000) {
            Err(Error::ShellCap(_)) => {}
            other => panic!("expected ShellCap, got {other:?}"),
        }
    }

    #[test]
    fn empirical_margin_respects_proven_bound() {
        let basis = sqrt2_basis();
        let (c, p0) = basis.analytic_margin().unwrap();
        assert!((p0 - 1.0).abs() < 1e-15);
        let s = Shell::build(basis, 40, 1_000_000).unwrap();
        let (emp, at) = s.diophantine_margin(p0).unwrap();
        assert!(
            emp >= c,
            "empirical margin {emp} at {at} under proven constant {c}"
        );
    }

    #[test]
    fn dependent_basis_is_rejected() {
        let b = GeneratorBasis::new(&["1", "0.5"]).unwrap();
        assert!(b.validate_independence(3, 1e-12).is_err());
        assert!(sqrt2_basis().validate_independence(12, 1e-9).is_ok());
    }

    #[test]
    fn perfect_square_generator_is_rejected() {
        assert!(GeneratorBasis::new(&["1", "sqrt:9"]).is_err());
    }

    #[test]
    fn wide_values_agree_with_f64() {
        use crate::numeric::Real;
        let basis = sqrt2_basis();
        let f = Frequency::new(vec![12, -9]);
        let wide = f.value_wide(&basis, Prec(60));
        assert!((wide.to_f64() - f.value(&basis)).abs() < 1e-14);
        assert_eq!(f.order(), 21);
    }

    #[test]
    fn values_near_window() {
        let s = Shell::build(GeneratorBasis::unit(), 5, 1_000_000).unwrap();
        let near: Vec<i64> = s
            .values_near(2.2, 1.0)
            .into_iter()
            .map(|f| f.coeffs()[0])
            .collect();
        assert_eq!(near, vec![2, 3]);
    }
}
