//! Graded symbol calculus over the frequency lattice.
//!
//! A symbol is a family of coefficient functions `â(ξ, θ)` indexed by lattice
//! frequencies θ, graded by powers of the coupling ε. Left quantization is
//! used throughout, so operator composition acts on coefficients as
//!
//! ```text
//! (AB)ˆ(ξ, η) = Σ_{θ+φ=η} â(ξ + 2θ, φ) · b̂(ξ, θ).
//! ```
//!
//! Coefficient functions are kept in closed form as sums of monomials
//! `c · Π atoms`, where each atom is a cutoff `φ_θ`, a commutator divisor
//! `χ̃_θ`, or the free-symbol factor `(ξ + 2s)²`, each evaluated at a
//! lattice-shifted argument. The family is closed under every operation the
//! gauge recursion needs (products, lattice shifts, projections), which keeps
//! evaluation exact to roundoff and makes structural facts — such as which
//! cutoffs appear where — checkable by inspection.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::lattice::{Frequency, GeneratorBasis};
use crate::{Error, Result, C64};

/// Smooth step profile used by the mollifier.
///
/// Both choices give a C∞ plateau function; `FlatterTails` has all
/// derivatives decaying faster at the plateau edges (its bump is
/// `exp(-1/u²)` instead of `exp(-1/u)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MollifierKind {
    Standard,
    FlatterTails,
}

impl MollifierKind {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "standard" => Ok(MollifierKind::Standard),
            "flat" | "flatter" => Ok(MollifierKind::FlatterTails),
            other => Err(Error::Config(format!("unknown mollifier kind: {other}"))),
        }
    }

    fn bump(self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        match self {
            MollifierKind::Standard => (-1.0 / u).exp(),
            MollifierKind::FlatterTails => (-1.0 / (u * u)).exp(),
        }
    }

    /// Smooth monotone step: 0 for `u ≤ 0`, 1 for `u ≥ 1`.
    fn step(self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        let b = self.bump(u);
        b / (b + self.bump(1.0 - u))
    }

    /// Plateau cutoff `ψ`: 1 on `|t| ≤ 1/4`, 0 on `|t| ≥ 1/2`, smooth and
    /// even in between.
    pub fn psi(self, t: f64) -> f64 {
        self.step((0.5 - t.abs()) * 4.0)
    }

    /// Complementary cutoff `φ = 1 - ψ`.
    pub fn phi(self, t: f64) -> f64 {
        1.0 - self.psi(t)
    }
}

/// The δ-scaled cutoff family attached to the resonance zones.
///
/// For θ ≠ 0, `φ_θ(ξ) = φ((ξ+θ)·4|θ|/δ)`: it vanishes on the inner quarter
/// `|ξ+θ| ≤ δ/(16|θ|)` of the zone around `-θ` and equals 1 outside
/// `|ξ+θ| ≥ δ/(8|θ|)`. By the convention that makes the commutator equation
/// uniform, `φ₀ ≡ 0`. The zone itself, `R(θ)`, is the twice-wider interval
/// `|ξ+θ| < δ/(4|θ|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffFamily {
    pub delta: f64,
    pub kind: MollifierKind,
}

impl CutoffFamily {
    pub fn new(delta: f64, kind: MollifierKind) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Validation(format!("cutoff width must be positive, got {delta}")));
        }
        Ok(CutoffFamily { delta, kind })
    }

    /// `φ_θ(ξ)` (0 when θ = 0).
    pub fn phi_theta(&self, theta: f64, xi: f64) -> f64 {
        if theta == 0.0 {
            return 0.0;
        }
        self.kind.phi((xi + theta) * 4.0 * theta.abs() / self.delta)
    }

    /// Commutator divisor `χ̃_θ(ξ) = φ_θ(ξ) / (4(ξ+θ)θ)`; bounded by `4/δ`.
    pub fn chi_theta(&self, theta: f64, xi: f64) -> f64 {
        let p = self.phi_theta(theta, xi);
        if p == 0.0 {
            // Avoids 0/0 at ξ = -θ, which is inside the vanishing plateau.
            0.0
        } else {
            p / (4.0 * (xi + theta) * theta)
        }
    }

    /// Resonance zone `R(θ)`: the interval around `-θ` outside of which
    /// `φ_θ ≡ 1` with a twofold safety margin.
    pub fn zone(&self, theta: f64) -> (f64, f64) {
        let hw = self.delta / (4.0 * theta.abs());
        (-theta - hw, -theta + hw)
    }

    /// Uniform bound on `|χ̃_θ|`.
    pub fn chi_bound(&self) -> f64 {
        4.0 / self.delta
    }
}

/// Multiplicative factor kinds for coefficient monomials.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AtomKind {
    /// `χ̃_θ` — carries a factor bounded by `4/δ`.
    Chi(Frequency),
    /// `φ_θ` — bounded by 1.
    Cut(Frequency),
    /// `(·)²` — the free-symbol factor; unbounded, never pruned.
    XiSq,
}

/// One factor, evaluated at the lattice-shifted argument `ξ + 2·value(shift)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub kind: AtomKind,
    pub shift: Frequency,
}

impl Atom {
    fn eval(&self, ctx: &EvalCtx, xi: f64) -> f64 {
        let arg = xi + 2.0 * self.shift.value(ctx.basis);
        match &self.kind {
            AtomKind::Chi(theta) => ctx.cuts.chi_theta(theta.value(ctx.basis), arg),
            AtomKind::Cut(theta) => ctx.cuts.phi_theta(theta.value(ctx.basis), arg),
            AtomKind::XiSq => arg * arg,
        }
    }

    /// Magnitude bound used by pruning; `None` when unbounded.
    fn bound(&self, chi_bound: f64) -> Option<f64> {
        match &self.kind {
            AtomKind::Chi(_) => Some(chi_bound),
            AtomKind::Cut(_) => Some(1.0),
            AtomKind::XiSq => None,
        }
    }
}

/// `coeff · Π atoms`, atoms kept sorted for canonical identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: C64,
    pub atoms: Vec<Atom>,
}

/// A coefficient function `â(·, θ)`: a combined sum of monomials.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoefficientFn {
    terms: Vec<Monomial>,
}

/// Shared evaluation context: generator values and the cutoff family.
#[derive(Clone, Copy)]
pub struct EvalCtx<'a> {
    pub basis: &'a GeneratorBasis,
    pub cuts: &'a CutoffFamily,
}

impl CoefficientFn {
    pub fn zero() -> Self {
        CoefficientFn { terms: Vec::new() }
    }

    pub fn constant(c: C64) -> Self {
        if c.norm() == 0.0 {
            return Self::zero();
        }
        CoefficientFn {
            terms: vec![Monomial {
                coeff: c,
                atoms: Vec::new(),
            }],
        }
    }

    /// A single atom with unit coefficient.
    pub fn atom(kind: AtomKind, shift: Frequency) -> Self {
        CoefficientFn {
            terms: vec![Monomial {
                coeff: C64::new(1.0, 0.0),
                atoms: vec![Atom { kind, shift }],
            }],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn eval(&self, ctx: &EvalCtx, xi: f64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for m in &self.terms {
            let mut factor = 1.0;
            for a in &m.atoms {
                factor *= a.eval(ctx, xi);
                if factor == 0.0 {
                    break;
                }
            }
            acc += m.coeff * factor;
        }
        acc
    }

    /// Combines like monomials and drops exact zeros.
    fn combined(mut terms: Vec<Monomial>) -> Self {
        let mut map: HashMap<Vec<Atom>, C64> = HashMap::with_capacity(terms.len());
        for m in terms.drain(..) {
            let mut atoms = m.atoms;
            atoms.sort();
            *map.entry(atoms).or_insert_with(|| C64::new(0.0, 0.0)) += m.coeff;
        }
        let mut terms: Vec<Monomial> = map
            .into_iter()
            .filter(|(_, c)| c.norm() != 0.0)
            .map(|(atoms, coeff)| Monomial { coeff, atoms })
            .collect();
        terms.sort_by(|a, b| a.atoms.cmp(&b.atoms));
        CoefficientFn { terms }
    }

    pub fn add(&self, other: &CoefficientFn) -> CoefficientFn {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self::combined(terms)
    }

    pub fn scale(&self, c: C64) -> CoefficientFn {
        if c.norm() == 0.0 {
            return Self::zero();
        }
        CoefficientFn {
            terms: self
                .terms
                .iter()
                .map(|m| Monomial {
                    coeff: m.coeff * c,
                    atoms: m.atoms.clone(),
                })
                .collect(),
        }
    }

    pub fn mul(&self, other: &CoefficientFn) -> CoefficientFn {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let mut atoms = Vec::with_capacity(a.atoms.len() + b.atoms.len());
                atoms.extend(a.atoms.iter().cloned());
                atoms.extend(b.atoms.iter().cloned());
                terms.push(Monomial {
                    coeff: a.coeff * b.coeff,
                    atoms,
                });
            }
        }
        Self::combined(terms)
    }

    /// The function `ξ ↦ f(ξ + 2·value(by))`, exact on the atom level.
    pub fn shift_by(&self, by: &Frequency) -> CoefficientFn {
        if by.is_zero() {
            return self.clone();
        }
        CoefficientFn {
            terms: self
                .terms
                .iter()
                .map(|m| Monomial {
                    coeff: m.coeff,
                    atoms: m
                        .atoms
                        .iter()
                        .map(|a| Atom {
                            kind: a.kind.clone(),
                            shift: a.shift.add(by),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Complex conjugation (atoms are real-valued, so only coefficients flip).
    pub fn conjugate(&self) -> CoefficientFn {
        CoefficientFn {
            terms: self
                .terms
                .iter()
                .map(|m| Monomial {
                    coeff: m.coeff.conj(),
                    atoms: m.atoms.clone(),
                })
                .collect(),
        }
    }

    /// Drops monomials whose worst-case magnitude (coefficient times atom
    /// bounds) falls below `threshold`; returns the sum of dropped bounds.
    /// Monomials containing an unbounded atom are always kept.
    pub fn prune(&mut self, threshold: f64, chi_bound: f64) -> f64 {
        if threshold <= 0.0 {
            return 0.0;
        }
        let mut dropped = 0.0;
        self.terms.retain(|m| {
            let mut bound = m.coeff.norm();
            for a in &m.atoms {
                match a.bound(chi_bound) {
                    Some(b) => bound *= b,
                    None => return true,
                }
            }
            if bound < threshold {
                dropped += bound;
                false
            } else {
                true
            }
        });
        dropped
    }
}

impl fmt::Display for CoefficientFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, m) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({:.3e}{:+.3e}i)", m.coeff.re, m.coeff.im)?;
            for a in &m.atoms {
                let label = match &a.kind {
                    AtomKind::Chi(t) => format!("chi[{t}]"),
                    AtomKind::Cut(t) => format!("phi[{t}]"),
                    AtomKind::XiSq => "xi2".to_string(),
                };
                write!(f, "·{label}(+2·{})", a.shift)?;
            }
        }
        Ok(())
    }
}

/// An ε-graded symbol: grade p holds the coefficient of ε^p.
#[derive(Debug, Clone, Default)]
pub struct GradedSymbol {
    dim: usize,
    grades: BTreeMap<u32, HashMap<Frequency, CoefficientFn>>,
}

impl GradedSymbol {
    pub fn zero(dim: usize) -> Self {
        GradedSymbol {
            dim,
            grades: BTreeMap::new(),
        }
    }

    /// The free symbol `ξ²` at grade 0, frequency 0.
    pub fn free(dim: usize) -> Self {
        let mut s = Self::zero(dim);
        s.insert(
            0,
            Frequency::zero(dim),
            CoefficientFn::atom(AtomKind::XiSq, Frequency::zero(dim)),
        );
        s
    }

    /// The multiplication symbol of a potential, placed at grade 1 (one
    /// power of ε).
    pub fn from_potential(pot: &crate::potential::Potential) -> Self {
        let mut s = Self::zero(pot.basis().len());
        for (f, c) in pot.support() {
            s.insert(1, f.clone(), CoefficientFn::constant(*c));
        }
        s
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn insert(&mut self, grade: u32, freq: Frequency, f: CoefficientFn) {
        if f.is_zero() {
            return;
        }
        let slot = self
            .grades
            .entry(grade)
            .or_default()
            .entry(freq)
            .or_insert_with(CoefficientFn::zero);
        *slot = slot.add(&f);
        if slot.is_zero() {
            // Keep maps free of dead entries.
            let m = self.grades.get_mut(&grade).unwrap();
            m.retain(|_, v| !v.is_zero());
            if m.is_empty() {
                self.grades.remove(&grade);
            }
        }
    }

    pub fn grades(&self) -> impl Iterator<Item = u32> + '_ {
        self.grades.keys().copied()
    }

    pub fn max_grade(&self) -> u32 {
        self.grades.keys().next_back().copied().unwrap_or(0)
    }

    pub fn coeff(&self, grade: u32, freq: &Frequency) -> Option<&CoefficientFn> {
        self.grades.get(&grade).and_then(|m| m.get(freq))
    }

    pub fn grade_coeffs(&self, grade: u32) -> impl Iterator<Item = (&Frequency, &CoefficientFn)> {
        self.grades.get(&grade).into_iter().flat_map(|m| m.iter())
    }

    pub fn term_count(&self) -> usize {
        self.grades
            .values()
            .flat_map(|m| m.values())
            .map(|f| f.term_count())
            .sum()
    }

    pub fn add(&self, other: &GradedSymbol) -> GradedSymbol {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (&p, m) in &other.grades {
            for (f, c) in m {
                out.insert(p, f.clone(), c.clone());
            }
        }
        out
    }

    pub fn scale(&self, c: C64) -> GradedSymbol {
        let mut out = GradedSymbol::zero(self.dim);
        for (&p, m) in &self.grades {
            for (f, fun) in m {
                out.insert(p, f.clone(), fun.scale(c));
            }
        }
        out
    }

    /// Left-quantized composition, truncated to grades ≤ `max_grade`.
    ///
    /// `(AB)ˆ(ξ, η) = Σ_{θ+φ=η} â(ξ+2θ, φ) b̂(ξ, θ)` — the A-coefficient is
    /// shifted by twice the B-frequency it passes across.
    pub fn compose(&self, other: &GradedSymbol, max_grade: u32) -> GradedSymbol {
        assert_eq!(self.dim, other.dim);
        let mut out = GradedSymbol::zero(self.dim);
        for (&p, ma) in &self.grades {
            for (&q, mb) in &other.grades {
                if p + q > max_grade {
                    continue;
                }
                for (fb, cb) in mb {
                    for (fa, ca) in ma {
                        let term = ca.shift_by(fb).mul(cb);
                        out.insert(p + q, fa.add(fb), term);
                    }
                }
            }
        }
        out
    }

    /// Commutator bracket `ad(A; B) = i(AB - BA)`, truncated by grade.
    pub fn ad(&self, other: &GradedSymbol, max_grade: u32) -> GradedSymbol {
        let ab = self.compose(other, max_grade);
        let ba = other.compose(self, max_grade);
        ab.add(&ba.scale(C64::new(-1.0, 0.0))).scale(C64::i())
    }

    /// The near-resonance projection `a ↦ a - a^♮`: multiplies the θ
    /// coefficient by `1 - φ_θ` (at θ = 0 this is the identity, since
    /// `φ₀ ≡ 0`).
    pub fn near_diagonal_part(&self) -> GradedSymbol {
        let mut out = GradedSymbol::zero(self.dim);
        for (&p, m) in &self.grades {
            for (f, c) in m {
                if f.is_zero() {
                    out.insert(p, f.clone(), c.clone());
                } else {
                    let phi = CoefficientFn::atom(AtomKind::Cut(f.clone()), Frequency::zero(self.dim));
                    out.insert(p, f.clone(), c.add(&c.mul(&phi).scale(C64::new(-1.0, 0.0))));
                }
            }
        }
        out
    }

    /// The rotated-away projection `a^♮`: multiplies the θ coefficient by
    /// `φ_θ` and drops θ = 0 entirely.
    pub fn far_part(&self) -> GradedSymbol {
        let mut out = GradedSymbol::zero(self.dim);
        for (&p, m) in &self.grades {
            for (f, c) in m {
                if f.is_zero() {
                    continue;
                }
                let phi = CoefficientFn::atom(AtomKind::Cut(f.clone()), Frequency::zero(self.dim));
                out.insert(p, f.clone(), c.mul(&phi));
            }
        }
        out
    }

    /// Solves `ad(H₀; Ψ) = -a^♮` for Ψ: each coefficient is multiplied by
    /// `i·χ̃_θ` (θ = 0 has no far part and is dropped).
    pub fn solve_commutator(&self) -> GradedSymbol {
        let mut out = GradedSymbol::zero(self.dim);
        for (&p, m) in &self.grades {
            for (f, c) in m {
                if f.is_zero() {
                    continue;
                }
                let chi = CoefficientFn::atom(AtomKind::Chi(f.clone()), Frequency::zero(self.dim));
                out.insert(p, f.clone(), c.mul(&chi).scale(C64::i()));
            }
        }
        out
    }

    /// Prunes every coefficient function; returns the total dropped bound.
    pub fn prune(&mut self, threshold: f64, chi_bound: f64) -> f64 {
        let mut dropped = 0.0;
        for m in self.grades.values_mut() {
            for c in m.values_mut() {
                dropped += c.prune(threshold, chi_bound);
            }
            m.retain(|_, c| !c.is_zero());
        }
        self.grades.retain(|_, m| !m.is_empty());
        dropped
    }

    /// Per-grade symbol norm `Σ_θ sup_ξ |â_p(ξ, θ)|`, the sup taken over the
    /// given ξ grid.
    pub fn grade_norm(&self, grade: u32, ctx: &EvalCtx, grid: &[f64]) -> f64 {
        let mut total = 0.0;
        for (_, c) in self.grade_coeffs(grade) {
            let mut sup: f64 = 0.0;
            for &xi in grid {
                sup = sup.max(c.eval(ctx, xi).norm());
            }
            total += sup;
        }
        total
    }

    /// Symbol norm of the ε-summed symbol at coupling `eps`.
    pub fn symbol_norm(&self, eps: f64, ctx: &EvalCtx, grid: &[f64]) -> f64 {
        // Collect per-frequency sup of |Σ_p ε^p â_p(ξ,θ)|.
        let mut freqs: Vec<&Frequency> = Vec::new();
        for m in self.grades.values() {
            for f in m.keys() {
                if !freqs.contains(&f) {
                    freqs.push(f);
                }
            }
        }
        let mut total = 0.0;
        for f in freqs {
            let mut sup: f64 = 0.0;
            for &xi in grid {
                let mut v = C64::new(0.0, 0.0);
                for (&p, m) in &self.grades {
                    if let Some(c) = m.get(f) {
                        v += c.eval(ctx, xi) * eps.powi(p as i32);
                    }
                }
                sup = sup.max(v.norm());
            }
            total += sup;
        }
        total
    }

    /// Pointwise evaluation of the ε-summed coefficient at one frequency:
    /// `Σ_p ε^p â_p(ξ, θ)`.
    pub fn eval_total(&self, ctx: &EvalCtx, eps: f64, xi: f64, theta: &Frequency) -> C64 {
        let mut v = C64::new(0.0, 0.0);
        for (&p, m) in &self.grades {
            if let Some(c) = m.get(theta) {
                v += c.eval(ctx, xi) * eps.powi(p as i32);
            }
        }
        v
    }

    /// Largest self-adjointness defect `|â_p(ξ,θ) - conj(â_p(ξ+2θ,-θ))|`
    /// over all grades, frequencies, and grid points.
    pub fn adjoint_defect(&self, ctx: &EvalCtx, grid: &[f64]) -> f64 {
        let zero = CoefficientFn::zero();
        let mut worst = 0.0f64;
        for (&p, m) in &self.grades {
            for (f, c) in m {
                let mirror = self
                    .coeff(p, &f.neg())
                    .unwrap_or(&zero);
                let two_theta = 2.0 * f.value(ctx.basis);
                for &xi in grid {
                    let lhs = c.eval(ctx, xi);
                    let rhs = mirror.eval(ctx, xi + two_theta).conj();
                    worst = worst.max((lhs - rhs).norm());
                }
            }
        }
        worst
    }
}
