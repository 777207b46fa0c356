//! Independent spectral oracles.
//!
//! Everything here computes spectral data of `H = -d²/dx² + εV` by classical
//! means that share no code path with the gauge construction: high-order ODE
//! integration of the monodromy (discriminant and rotation number), parity
//! shooting for band edges of even periodic potentials, and dense truncated
//! plane-wave fibers diagonalized by Jacobi rotations. The expansion
//! machinery is always validated against these.
//!
//! Periodic-specific oracles (`hill_*`) require every lattice frequency to
//! have an integer value, so the potential has period π and Floquet theory
//! applies literally. The truncated-fiber oracle works for any lattice.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Mutex;

use crate::lattice::Frequency;
use crate::numeric::{bisect_root, fnv1a, fnv1a_f64, golden_max};
use crate::potential::Potential;
use crate::{Error, Result, C64};

// ---------------------------------------------------------------------------
// Fixed-step Runge-Kutta of order 8 (Cooper-Verner, 11 stages).
// ---------------------------------------------------------------------------

/// √21, the algebraic number the Cooper-Verner tableau is built from.
const SQ: f64 = 4.582_575_694_955_840_5;

/// Lower-triangular stage coefficients, row by row (row i has i entries).
const CV_A: [&[f64]; 10] = [
    &[0.5],
    &[0.25, 0.25],
    &[1.0 / 7.0, (-7.0 - 3.0 * SQ) / 98.0, (21.0 + 5.0 * SQ) / 49.0],
    &[
        (11.0 + SQ) / 84.0,
        0.0,
        (18.0 + 4.0 * SQ) / 63.0,
        (21.0 - SQ) / 252.0,
    ],
    &[
        (5.0 + SQ) / 48.0,
        0.0,
        (9.0 + SQ) / 36.0,
        (-231.0 + 14.0 * SQ) / 360.0,
        (63.0 - 7.0 * SQ) / 80.0,
    ],
    &[
        (10.0 - SQ) / 42.0,
        0.0,
        (-432.0 + 92.0 * SQ) / 315.0,
        (633.0 - 145.0 * SQ) / 90.0,
        (-504.0 + 115.0 * SQ) / 70.0,
        (63.0 - 13.0 * SQ) / 35.0,
    ],
    &[
        1.0 / 14.0,
        0.0,
        0.0,
        0.0,
        (14.0 - 3.0 * SQ) / 126.0,
        (13.0 - 3.0 * SQ) / 63.0,
        1.0 / 9.0,
    ],
    &[
        1.0 / 32.0,
        0.0,
        0.0,
        0.0,
        (91.0 - 21.0 * SQ) / 576.0,
        11.0 / 72.0,
        (-385.0 - 75.0 * SQ) / 1152.0,
        (63.0 + 13.0 * SQ) / 128.0,
    ],
    &[
        1.0 / 14.0,
        0.0,
        0.0,
        0.0,
        1.0 / 9.0,
        (-733.0 - 147.0 * SQ) / 2205.0,
        (515.0 + 111.0 * SQ) / 504.0,
        (-51.0 - 11.0 * SQ) / 56.0,
        (132.0 + 28.0 * SQ) / 245.0,
    ],
    &[
        0.0,
        0.0,
        0.0,
        0.0,
        (-42.0 + 7.0 * SQ) / 18.0,
        (-18.0 + 28.0 * SQ) / 45.0,
        (-273.0 - 53.0 * SQ) / 72.0,
        (301.0 + 53.0 * SQ) / 72.0,
        (28.0 - 28.0 * SQ) / 45.0,
        (49.0 - 7.0 * SQ) / 18.0,
    ],
];

/// Quadrature weights (stages 2..7 do not contribute).
const CV_B: [f64; 11] = [
    1.0 / 20.0,
    0.0,
    0.0,
    0.0,
    0.0,
    0.0,
    0.0,
    49.0 / 180.0,
    16.0 / 45.0,
    49.0 / 180.0,
    1.0 / 20.0,
];

/// Stage abscissae.
const CV_C: [f64; 11] = [
    0.0,
    0.5,
    0.5,
    (7.0 + SQ) / 14.0,
    (7.0 + SQ) / 14.0,
    0.5,
    (7.0 - SQ) / 14.0,
    (7.0 - SQ) / 14.0,
    0.5,
    (7.0 + SQ) / 14.0,
    1.0,
];

/// One Cooper-Verner step for `y' = f(x, y)`.
fn rk8_step<const N: usize>(
    f: &impl Fn(f64, &[f64; N]) -> [f64; N],
    x: f64,
    y: &[f64; N],
    h: f64,
) -> [f64; N] {
    let mut k = [[0.0f64; N]; 11];
    k[0] = f(x, y);
    for i in 1..11 {
        let mut yi = *y;
        for (j, &a) in CV_A[i - 1].iter().enumerate() {
            if a != 0.0 {
                for n in 0..N {
                    yi[n] += h * a * k[j][n];
                }
            }
        }
        k[i] = f(x + CV_C[i] * h, &yi);
    }
    let mut out = *y;
    for (i, &b) in CV_B.iter().enumerate() {
        if b != 0.0 {
            for n in 0..N {
                out[n] += h * b * k[i][n];
            }
        }
    }
    out
}

/// Fixed-step integration of `y' = f(x, y)` from `x0` to `x1`.
pub fn rk8_integrate<const N: usize>(
    f: impl Fn(f64, &[f64; N]) -> [f64; N],
    x0: f64,
    x1: f64,
    y0: [f64; N],
    steps: usize,
) -> [f64; N] {
    let h = (x1 - x0) / steps as f64;
    let mut y = y0;
    for i in 0..steps {
        y = rk8_step(&f, x0 + i as f64 * h, &y, h);
    }
    y
}

/// Runs `value` at a doubling step count until two successive results agree
/// to `tol·max(1, |v|)`; errors if convergence is not reached by ~10⁶ steps.
fn converge(tol: f64, label: &str, value: impl Fn(usize) -> f64) -> Result<f64> {
    let mut steps = 256;
    let mut prev = value(steps);
    while steps <= (1 << 20) {
        steps *= 2;
        let v = value(steps);
        if (v - prev).abs() <= tol * v.abs().max(1.0) {
            return Ok(v);
        }
        prev = v;
    }
    Err(Error::Numeric(format!(
        "{label}: step-doubling did not converge (last two differ by {:.3e})",
        prev
    )))
}

// ---------------------------------------------------------------------------
// Periodic (Hill) oracles.
// ---------------------------------------------------------------------------

/// Checks that the potential is genuinely π-periodic: every materialized
/// frequency value must be an integer.
fn require_periodic(pot: &Potential) -> Result<()> {
    for (f, _) in pot.support() {
        let v = f.value(pot.basis());
        if (v - v.round()).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "frequency {f} has non-integer value {v}: not a π-periodic potential"
            )));
        }
    }
    Ok(())
}

/// Checks evenness: `V(-x) = V(x)`, i.e. every coefficient real.
fn require_even(pot: &Potential) -> Result<()> {
    for (f, c) in pot.support() {
        if c.im.abs() > 1e-15 * c.norm().max(1e-300) {
            return Err(Error::Validation(format!(
                "coefficient at {f} is not real: parity shooting needs an even potential"
            )));
        }
    }
    Ok(())
}

/// Monodromy matrix of `-u'' + εV u = λu` over `[0, π]` at a fixed step
/// count, columns = solutions with data (1,0) and (0,1).
pub fn monodromy(pot: &Potential, eps: f64, lambda: f64, steps: usize) -> Result<[[f64; 2]; 2]> {
    require_periodic(pot)?;
    let f = |x: f64, y: &[f64; 4]| {
        let q = eps * pot.evaluate(x) - lambda;
        [y[1], q * y[0], y[3], q * y[2]]
    };
    let y = rk8_integrate(f, 0.0, std::f64::consts::PI, [1.0, 0.0, 0.0, 1.0], steps);
    Ok([[y[0], y[2]], [y[1], y[3]]])
}

/// Floquet discriminant `Δ(λ) = tr M(λ)`, step counts doubled to a relative
/// 1e-13 agreement.
pub fn hill_discriminant(pot: &Potential, eps: f64, lambda: f64) -> Result<f64> {
    require_periodic(pot)?;
    converge(1e-13, "hill_discriminant", |steps| {
        let m = monodromy(pot, eps, lambda, steps).expect("validated");
        m[0][0] + m[1][1]
    })
}

/// `|det M - 1|`: the Wronskian defect of a computed monodromy (an exact
/// invariant of the flow, so a direct quality check on the integrator).
pub fn wronskian_defect(m: &[[f64; 2]; 2]) -> f64 {
    (m[0][0] * m[1][1] - m[0][1] * m[1][0] - 1.0).abs()
}

/// Parity class of a band-edge eigenfunction of an even π-periodic potential.
///
/// Reflection symmetry about 0 and π/2 reduces the (anti)periodic problems to
/// shooting on the half period: the class determines the boundary pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeClass {
    /// u'(0) = 0, u'(π/2) = 0: periodic, even about 0.
    PeriodicEven,
    /// u(0) = 0, u(π/2) = 0: periodic, odd about 0.
    PeriodicOdd,
    /// u'(0) = 0, u(π/2) = 0: antiperiodic, even about 0.
    AntiperiodicEven,
    /// u(0) = 0, u'(π/2) = 0: antiperiodic, odd about 0.
    AntiperiodicOdd,
}

/// Shooting functional for an edge class: integrate from the class's initial
/// data and return the boundary value that must vanish at π/2.
fn edge_shot(pot: &Potential, eps: f64, lambda: f64, class: EdgeClass, steps: usize) -> f64 {
    let f = |x: f64, y: &[f64; 2]| {
        let q = eps * pot.evaluate(x) - lambda;
        [y[1], q * y[0]]
    };
    let start = match class {
        EdgeClass::PeriodicEven | EdgeClass::AntiperiodicEven => [1.0, 0.0],
        _ => [0.0, 1.0],
    };
    let y = rk8_integrate(f, 0.0, std::f64::consts::PI / 2.0, start, steps);
    match class {
        EdgeClass::PeriodicEven | EdgeClass::AntiperiodicOdd => y[1],
        _ => y[0],
    }
}

/// Root of the class shooting function nearest `m²` (within ±`margin`).
fn edge_eigenvalue(
    pot: &Potential,
    eps: f64,
    m: u32,
    class: EdgeClass,
    margin: f64,
) -> Result<f64> {
    let target = (m * m) as f64;
    let shot = |lambda: f64| -> Result<f64> {
        converge(1e-13, "edge_shot", |steps| {
            edge_shot(pot, eps, lambda, class, steps)
        })
    };
    // The free roots of each class are ≥ 4 apart in √λ-squared spacing near
    // small m (interlacing keeps that for small εV), so a short outward scan
    // from m² brackets exactly the nearest root.
    let mut lo = target - margin;
    let mut hi = target + margin;
    let n_scan = 24;
    let mut prev_x = lo;
    let mut prev_f = shot(lo)?;
    let mut bracket = None;
    for i in 1..=n_scan {
        let x = lo + (hi - lo) * i as f64 / n_scan as f64;
        let fx = shot(x)?;
        if prev_f == 0.0 || prev_f * fx < 0.0 {
            bracket = Some((prev_x, x, prev_f, fx));
            break;
        }
        prev_x = x;
        prev_f = fx;
    }
    let (a, b, _, _) = bracket.ok_or_else(|| {
        Error::Numeric(format!(
            "no {class:?} edge found within {margin} of λ = {target}"
        ))
    })?;
    lo = a;
    hi = b;
    // Bisect on the converged shot.
    let mut flo = shot(lo)?;
    for _ in 0..80 {
        if (hi - lo) <= 1e-14 * (1.0 + target) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = shot(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Endpoints of the m-th spectral gap (around λ = m²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapEdges {
    pub lower: f64,
    pub upper: f64,
}

impl GapEdges {
    pub fn length(&self) -> f64 {
        (self.upper - self.lower).max(0.0)
    }
}

/// Gap edges by parity shooting: the two (anti)periodic eigenvalues nearest
/// `m²`, one from the even and one from the odd class. Resolves lengths down
/// to ~1e-13 · (1 + m²) because each edge is a simple shooting root.
pub fn hill_gap(pot: &Potential, eps: f64, m: u32) -> Result<GapEdges> {
    require_periodic(pot)?;
    require_even(pot)?;
    if m == 0 {
        return Err(Error::Validation("gap index must be ≥ 1".into()));
    }
    let classes = if m % 2 == 1 {
        [EdgeClass::AntiperiodicEven, EdgeClass::AntiperiodicOdd]
    } else {
        [EdgeClass::PeriodicEven, EdgeClass::PeriodicOdd]
    };
    let margin = 0.45 * (2 * m - 1) as f64; // stays clear of gaps m∓1
    let a = edge_eigenvalue(pot, eps, m, classes[0], margin)?;
    let b = edge_eigenvalue(pot, eps, m, classes[1], margin)?;
    Ok(GapEdges {
        lower: a.min(b),
        upper: a.max(b),
    })
}

/// Discriminant-based gap detection: maximizes `(-1)^m Δ - 2` near `m²` and
/// finds the `Δ = ±2` crossings. Cannot see gaps shorter than ~1e-7 (the
/// functional is quadratic at a closed gap); used as an independent
/// cross-check of [`hill_gap`] where it can see.
pub fn hill_gap_discriminant(pot: &Potential, eps: f64, m: u32) -> Result<Option<GapEdges>> {
    require_periodic(pot)?;
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    let f = |lambda: f64| sign * hill_discriminant(pot, eps, lambda).unwrap_or(f64::NAN) - 2.0;
    let target = (m * m) as f64;
    let margin = 0.4 * (2 * m - 1) as f64;
    let (peak_x, peak) = golden_max(f, target - margin, target + margin, 1e-10);
    if !(peak > 1e-13) {
        return Ok(None); // closed or unresolvably small
    }
    // Expand outward from the peak until the functional goes negative.
    let mut w = 1e-9;
    let lower;
    loop {
        if f(peak_x - w) < 0.0 {
            lower = bisect_root(|x: &f64| f(*x), peak_x - w, peak_x, &1e-13, 200)?;
            break;
        }
        w *= 2.0;
        if peak_x - w < target - 2.0 * margin {
            return Err(Error::Numeric("gap lower edge scan ran away".into()));
        }
    }
    let mut w = 1e-9;
    let upper;
    loop {
        if f(peak_x + w) < 0.0 {
            upper = bisect_root(|x: &f64| f(*x), peak_x, peak_x + w, &1e-13, 200)?;
            break;
        }
        w *= 2.0;
        if peak_x + w > target + 2.0 * margin {
            return Err(Error::Numeric("gap upper edge scan ran away".into()));
        }
    }
    Ok(Some(GapEdges { lower, upper }))
}

/// Integrated density of states of the periodic operator at `λ`, exact up to
/// integrator accuracy (~1e-13).
///
/// The winding of the Prüfer phase of the Dirichlet solution fixes the
/// integer part of `π·N`; inside a band the fractional part is recovered
/// from `arccos(Δ/2)`, with the branch chosen by the parity of the integer
/// part; inside a gap `π·N` is exactly the integer nearest the winding with
/// the parity that matches `sign(Δ)`.
pub fn hill_ids(pot: &Potential, eps: f64, lambda: f64) -> Result<f64> {
    require_periodic(pot)?;
    let delta = hill_discriminant(pot, eps, lambda)?;
    // Prüfer phase: u = r sin φ, u' = r cos φ, φ(0) = 0 for the Dirichlet
    // solution; φ' = cos²φ + (λ - εV) sin²φ.
    let winding = converge(1e-12, "pruefer_phase", |steps| {
        let f = |x: f64, y: &[f64; 1]| {
            let (s, c) = y[0].sin_cos();
            [c * c + (lambda - eps * pot.evaluate(x)) * s * s]
        };
        rk8_integrate(f, 0.0, std::f64::consts::PI, [0.0], steps)[0]
    })? / std::f64::consts::PI;

    let n_pi = if delta.abs() <= 2.0 {
        // In a band: fractional part t from the discriminant, integer part m
        // from consistency with the winding.
        let a = (delta / 2.0).clamp(-1.0, 1.0).acos() / std::f64::consts::PI; // ∈ [0,1]
        // Candidates m with t = a (m even) or t = 1-a (m odd).
        let m_even = 2.0 * ((winding - a) / 2.0).round();
        let m_odd = 2.0 * ((winding - (1.0 - a) - 1.0) / 2.0).round() + 1.0;
        let cand_even = m_even + a;
        let cand_odd = m_odd + (1.0 - a);
        if (cand_even - winding).abs() <= (cand_odd - winding).abs() {
            cand_even
        } else {
            cand_odd
        }
    } else {
        // In a gap: N·π is an integer with (-1)^m = sign(Δ).
        let parity_even = delta > 0.0;
        let base = winding.round();
        let base_even = (base as i64).rem_euclid(2) == 0;
        if base_even == parity_even {
            base
        } else if winding > base {
            base + 1.0
        } else {
            base - 1.0
        }
    };
    Ok(n_pi / std::f64::consts::PI)
}

// ---------------------------------------------------------------------------
// Truncated plane-wave fiber (any lattice).
// ---------------------------------------------------------------------------

/// Parameters of the truncated-fiber oracle.
#[derive(Debug, Clone, Copy)]
pub struct FiberOpts {
    /// Coupling-hop depth from which fiber sites are drawn: every site is a
    /// sum of at most `max_order` potential-support frequencies. (Sites that
    /// are not hop-reachable sit in a different connected component of the
    /// fiber matrix and can never influence the centered band value.)
    pub max_order: u32,
    /// Sites kept: `|ξ + 2θ| ≤ r_keep`.
    pub r_keep: f64,
    /// Cap on the number of sites.
    pub cap: usize,
}

impl Default for FiberOpts {
    fn default() -> Self {
        FiberOpts {
            max_order: 12,
            r_keep: 9.0,
            cap: 1_000_000,
        }
    }
}

/// Dense Hermitian eigenproblem by cyclic Jacobi rotations with accumulated
/// eigenvectors. Returns `(eigenvalues ascending, eigenvectors as columns)`.
pub fn jacobi_hermitian(mut a: Vec<Vec<C64>>) -> Result<(Vec<f64>, Vec<Vec<C64>>)> {
    let n = a.len();
    for row in &a {
        if row.len() != n {
            return Err(Error::Numeric("jacobi: non-square matrix".into()));
        }
    }
    let norm: f64 = a
        .iter()
        .flat_map(|r| r.iter())
        .map(|z| z.norm_sqr())
        .sum::<f64>()
        .sqrt();
    let mut v: Vec<Vec<C64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        C64::new(1.0, 0.0)
                    } else {
                        C64::new(0.0, 0.0)
                    }
                })
                .collect()
        })
        .collect();
    let tol = 1e-14 * norm.max(1e-300);
    for _sweep in 0..60 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p][q].norm_sqr();
            }
        }
        if off.sqrt() <= tol {
            let mut pairs: Vec<(f64, usize)> =
                (0..n).map(|i| (a[i][i].re, i)).collect();
            pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
            let eigs: Vec<f64> = pairs.iter().map(|&(e, _)| e).collect();
            let vecs: Vec<Vec<C64>> = pairs
                .iter()
                .map(|&(_, col)| (0..n).map(|i| v[i][col]).collect())
                .collect();
            return Ok((eigs, vecs));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq.norm() == 0.0 {
                    continue;
                }
                // Unitary 2×2 that annihilates a[p][q]: phase e^{iα} from the
                // off-diagonal element, rotation angle from the standard
                // symmetric Jacobi formula.
                let app = a[p][p].re;
                let aqq = a[q][q].re;
                let abs = apq.norm();
                let phase = apq / abs;
                let tau = (aqq - app) / (2.0 * abs);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Columns p, q of A (and of V) mix with the complex phase.
                for i in 0..n {
                    let aip = a[i][p];
                    let aiq = a[i][q];
                    a[i][p] = aip * c - aiq * phase.conj() * s;
                    a[i][q] = aip * phase * s + aiq * c;
                    let vip = v[i][p];
                    let viq = v[i][q];
                    v[i][p] = vip * c - viq * phase.conj() * s;
                    v[i][q] = vip * phase * s + viq * c;
                }
                for j in 0..n {
                    let apj = a[p][j];
                    let aqj = a[q][j];
                    a[p][j] = apj * c - aqj * phase * s;
                    a[q][j] = apj * phase.conj() * s + aqj * c;
                }
                // Clean the rotated pair against roundoff drift.
                a[p][q] = C64::new(0.0, 0.0);
                a[q][p] = C64::new(0.0, 0.0);
                a[p][p] = C64::new(a[p][p].re, 0.0);
                a[q][q] = C64::new(a[q][q].re, 0.0);
            }
        }
    }
    Err(Error::Numeric(
        "jacobi: sweeps exhausted without reaching tolerance".into(),
    ))
}

/// The truncated fiber matrix at quasi-momentum ξ: sites `θ` reachable from
/// the center by at most `max_order` coupling hops (sums of potential-support
/// frequencies) with `|ξ + 2θ| ≤ r_keep`; entries
/// `(ξ+2θ)²δ_{θθ'} + ε·V̂_{θ-θ'}`. Returns the site list and the matrix.
///
/// Hop-reachability (rather than a whole lattice shell) keeps quasi-periodic
/// fibers small without changing the result: the matrix couples `θ` to `θ'`
/// only when `θ-θ'` lies in the potential's support, so unreachable sites
/// form separate blocks with zero overlap against the center plane wave.
pub fn fiber_matrix(
    pot: &Potential,
    eps: f64,
    xi: f64,
    opts: &FiberOpts,
) -> Result<(Vec<Frequency>, Vec<Vec<C64>>)> {
    let basis = pot.basis();
    let zero = Frequency::zero(basis.len());
    let keep = |f: &Frequency| (xi + 2.0 * f.value(basis)).abs() <= opts.r_keep;
    if !keep(&zero) {
        return Err(Error::Numeric(format!(
            "fiber at ξ = {xi}: center site outside r_keep = {}",
            opts.r_keep
        )));
    }
    let steps: Vec<Frequency> = pot
        .support()
        .iter()
        .map(|(f, _)| f.clone())
        .filter(|f| !f.is_zero())
        .collect();
    let mut visited: std::collections::HashSet<Frequency> =
        std::collections::HashSet::new();
    visited.insert(zero.clone());
    let mut frontier = vec![zero];
    for _hop in 0..opts.max_order {
        let mut next = Vec::new();
        for s in &frontier {
            for t in &steps {
                let cand = s.add(t);
                if keep(&cand) && visited.insert(cand.clone()) {
                    if visited.len() > opts.cap {
                        return Err(Error::ShellCap(format!(
                            "fiber at ξ = {xi}: more than {} reachable sites",
                            opts.cap
                        )));
                    }
                    next.push(cand);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    let mut sites: Vec<Frequency> = visited.into_iter().collect();
    sites.sort_by(|a, b| (a.order(), a.coeffs()).cmp(&(b.order(), b.coeffs())));
    let n = sites.len();
    let mut m = vec![vec![C64::new(0.0, 0.0); n]; n];
    for i in 0..n {
        let di = xi + 2.0 * sites[i].value(pot.basis());
        for (j, row) in m.iter_mut().enumerate().take(n) {
            if i == j {
                row[i] = C64::new(di * di, 0.0) + eps * pot.coeff(&Frequency::zero(pot.basis().len()));
            } else {
                row[i] = eps * pot.coeff(&sites[i].sub(&sites[j]));
            }
        }
    }
    Ok((sites, m))
}

/// The band value `G_num(ξ)`: the eigenvalue of the truncated fiber whose
/// eigenvector has the largest overlap with the center plane wave.
pub fn truncated_g(pot: &Potential, eps: f64, xi: f64, opts: &FiberOpts) -> Result<f64> {
    let (sites, m) = fiber_matrix(pot, eps, xi, opts)?;
    let center = sites
        .iter()
        .position(|f| f.is_zero())
        .expect("checked in fiber_matrix");
    let (eigs, vecs) = jacobi_hermitian(m)?;
    let mut best = 0;
    let mut best_overlap = -1.0;
    for (k, vec) in vecs.iter().enumerate() {
        let o = vec[center].norm_sqr();
        if o > best_overlap {
            best_overlap = o;
            best = k;
        }
    }
    Ok(eigs[best])
}

/// Second-order coefficient of `G_num(ξ; ε)` in ε, by Richardson elimination
/// of the cubic term: `f₂ ≈ 2g(ε/2) - g(ε)` with
/// `g(e) = (G(e) - ξ² - eτ)/e²`.
pub fn second_order_coefficient(
    pot: &Potential,
    xi: f64,
    eps: f64,
    opts: &FiberOpts,
) -> Result<f64> {
    let tau = pot.tau();
    let g = |e: f64| -> Result<f64> {
        Ok((truncated_g(pot, e, xi, opts)? - xi * xi - e * tau) / (e * e))
    };
    Ok(2.0 * g(eps / 2.0)? - g(eps)?)
}

/// Independent density-of-states value: `(2π)⁻¹·meas{ξ : G_num(ξ) ≤ λ}` by
/// indicator sampling of the truncated-fiber band over a window that surely
/// contains the level set.
///
/// `n_grid` uniform samples are augmented by `probes` (pass suspected narrow
/// structure — zone centers and edge roots — when λ sits near a resonance;
/// plain uniform sampling is reliable for non-resonant levels, where the
/// level-set boundary consists of two simple crossings near `±√λ`). Requires
/// `r_keep² > λ + 1` so every sampled fiber still has room above the level.
pub fn truncated_ids(
    pot: &Potential,
    eps: f64,
    lambda: f64,
    opts: &FiberOpts,
    n_grid: usize,
    probes: &[f64],
) -> Result<f64> {
    if !(opts.r_keep * opts.r_keep > lambda + 1.0) {
        return Err(Error::Validation(format!(
            "truncated_ids: r_keep = {} is too small for λ = {lambda} \
             (need r_keep² > λ + 1)",
            opts.r_keep
        )));
    }
    // ℓ¹ bound on the perturbation: every eigenvalue moves by at most this.
    let margin: f64 = eps.abs()
        * pot
            .support()
            .iter()
            .map(|(_, c)| c.norm())
            .sum::<f64>();
    if lambda < -margin {
        return Ok(0.0);
    }
    let x = (lambda.max(0.0) + margin).sqrt() + 1e-3;
    let err: std::cell::RefCell<Option<Error>> = std::cell::RefCell::new(None);
    let f = |xi: f64| match truncated_g(pot, eps, xi, opts) {
        Ok(v) => v,
        Err(e) => {
            err.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    };
    let meas =
        crate::numeric::indicator_measure(f, lambda, -x, x, n_grid, probes);
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    Ok(meas / (2.0 * std::f64::consts::PI))
}

// ---------------------------------------------------------------------------
// Oracle cache.
// ---------------------------------------------------------------------------

/// A small persistent memo for expensive oracle values, keyed by the
/// potential identity and the full argument list. Optional: with no
/// directory it is a no-op passthrough.
pub struct OracleCache {
    path: Option<PathBuf>,
    map: Mutex<HashMap<String, f64>>,
}

impl OracleCache {
    pub fn disabled() -> Self {
        OracleCache {
            path: None,
            map: Mutex::new(HashMap::new()),
        }
    }

    /// Opens (or starts) a cache file `oracle-cache.json` in `dir`.
    pub fn in_dir(dir: &std::path::Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("oracle-cache.json");
        let map = if path.exists() {
            let text = std::fs::read_to_string(&path)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Io(format!("corrupt oracle cache: {e}")))?
        } else {
            HashMap::new()
        };
        Ok(OracleCache {
            path: Some(path),
            map: Mutex::new(map),
        })
    }

    /// Cache key for an oracle call on a given potential.
    pub fn key(pot: &Potential, op: &str, args: &[f64]) -> String {
        let mut h = fnv1a(op.as_bytes()) ^ pot.hash_id();
        for &a in args {
            h = fnv1a_f64(h, a);
        }
        format!("{h:016x}")
    }

    pub fn get_or_compute(
        &self,
        key: String,
        compute: impl FnOnce() -> Result<f64>,
    ) -> Result<f64> {
        if self.path.is_some() {
            if let Some(&v) = self.map.lock().unwrap().get(&key) {
                return Ok(v);
            }
        }
        let v = compute()?;
        if self.path.is_some() {
            self.map.lock().unwrap().insert(key, v);
        }
        Ok(v)
    }

    /// Writes the cache back to disk (no-op when disabled).
    pub fn persist(&self) -> Result<()> {
        if let Some(path) = &self.path {
            let map = self.map.lock().unwrap();
            let text = serde_json::to_string_pretty(&*map)
                .map_err(|e| Error::Io(e.to_string()))?;
            std::fs::write(path, text)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::GeneratorBasis;

    fn freq(n: i64) -> Frequency {
        Frequency::new(vec![n])
    }

    /// `V = 2a cos(2x)`, the classical reference problem.
    fn cosine(a: f64) -> Potential {
        Potential::from_coefficients(GeneratorBasis::unit(), &[(freq(1), C64::new(a, 0.0))])
            .unwrap()
    }

    #[test]
    fn tableau_is_consistent() {
        // Row sums must equal the abscissae and the weights must sum to 1 —
        // catches any transcription slip in the √21 expressions.
        for (i, row) in CV_A.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            assert!(
                (sum - CV_C[i + 1]).abs() < 1e-14,
                "row {} sums to {sum}, want {}",
                i + 2,
                CV_C[i + 1]
            );
        }
        let bsum: f64 = CV_B.iter().sum();
        assert!((bsum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn integrator_reaches_eighth_order() {
        // Harmonic oscillator over [0, π]: halving the step must cut the
        // error by ~2⁸ until roundoff.
        let f = |_x: f64, y: &[f64; 2]| [y[1], -y[0]];
        // y = sin(x): y(π) = 0, y'(π) = -1.
        let run = |steps| rk8_integrate(f, 0.0, std::f64::consts::PI, [0.0, 1.0], steps);
        let e1 = {
            let y = run(8);
            (y[0] - 0.0).abs().max((y[1] + 1.0).abs())
        };
        let e2 = {
            let y = run(16);
            (y[0] - 0.0).abs().max((y[1] + 1.0).abs())
        };
        let order = (e1 / e2).log2();
        assert!(order > 7.5, "observed order {order} (e1={e1:.3e}, e2={e2:.3e})");
        let y = run(64);
        assert!((y[0]).abs() < 1e-14 && (y[1] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn free_discriminant_is_cosine() {
        let v0 = cosine(0.0);
        for &lambda in &[0.3, 1.7, 4.4] {
            let d = hill_discriminant(&v0, 0.0, lambda).unwrap();
            let want = 2.0 * (std::f64::consts::PI * lambda.sqrt()).cos();
            assert!((d - want).abs() < 1e-12, "λ={lambda}: {d} vs {want}");
        }
        let m = monodromy(&v0, 0.0, 1.3, 512).unwrap();
        assert!(wronskian_defect(&m) < 1e-14);
    }

    #[test]
    fn first_gap_matches_classical_asymptotics() {
        // For -u'' + 2q cos(2x) u = λu the first gap edges are
        // 1 ∓ q - q²/8 + O(q³) (classical characteristic-value series),
        // so the length is 2q + O(q³).
        let a = 0.005;
        let eps = 0.6;
        let q = a * eps;
        let edges = hill_gap(&cosine(a), eps, 1).unwrap();
        assert!((edges.length() - 2.0 * q).abs() < 3.0 * q.powi(3),
            "length {} vs 2q {}", edges.length(), 2.0 * q);
        let mid = 0.5 * (edges.lower + edges.upper);
        assert!((mid - (1.0 - q * q / 8.0)).abs() < 1e-5);
    }

    #[test]
    fn second_gap_matches_classical_asymptotics() {
        // Second gap: edges 4 + 5q²/12 and 4 - q²/12 + ...: length q²/2.
        let a = 0.005;
        let eps = 0.8;
        let q = a * eps;
        let edges = hill_gap(&cosine(a), eps, 2).unwrap();
        let want = q * q / 2.0;
        assert!(
            (edges.length() - want).abs() < 0.02 * want,
            "length {} vs q²/2 = {}",
            edges.length(),
            want
        );
        // The discriminant-based finder cannot see this tiny gap; it must
        // say so rather than hallucinate one.
        let disc = hill_gap_discriminant(&cosine(a), eps, 2).unwrap();
        match disc {
            None => {}
            Some(e) => {
                // If it does resolve it (length ~ 8e-6 is borderline), it
                // must agree with parity shooting to its own accuracy.
                assert!((e.length() - edges.length()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn discriminant_gap_agrees_on_fat_gaps() {
        // First gap at a chunkier coupling is wide enough for both methods.
        let a = 0.006;
        let eps = 1.0;
        let parity = hill_gap(&cosine(a), eps, 1).unwrap();
        let disc = hill_gap_discriminant(&cosine(a), eps, 1)
            .unwrap()
            .expect("gap of length ~1.2e-2 must be visible");
        assert!((parity.lower - disc.lower).abs() < 1e-9);
        assert!((parity.upper - disc.upper).abs() < 1e-9);
    }

    #[test]
    fn free_ids_is_sqrt_over_pi() {
        let v0 = cosine(0.0);
        for &lambda in &[0.2, 1.0, 2.9, 6.2] {
            let n = hill_ids(&v0, 0.0, lambda).unwrap();
            assert!(
                (n - lambda.sqrt() / std::f64::consts::PI).abs() < 1e-12,
                "λ={lambda}"
            );
        }
    }

    #[test]
    fn ids_is_flat_across_a_gap() {
        let v = cosine(0.005);
        let eps = 1.0;
        let edges = hill_gap(&v, eps, 1).unwrap();
        let inside1 = hill_ids(&v, eps, 0.5 * (edges.lower + edges.upper)).unwrap();
        let inside2 = hill_ids(&v, eps, edges.lower + 0.1 * edges.length()).unwrap();
        assert_eq!(inside1, inside2, "IDS must be constant in a gap");
        assert!((inside1 - 1.0 / std::f64::consts::PI).abs() < 1e-12);
        // And strictly larger just above the gap than just below.
        let below = hill_ids(&v, eps, edges.lower - 1e-3).unwrap();
        let above = hill_ids(&v, eps, edges.upper + 1e-3).unwrap();
        assert!(below < inside1 && inside1 < above);
    }

    #[test]
    fn jacobi_matches_analytic_two_by_two() {
        let m = vec![
            vec![C64::new(1.0, 0.0), C64::new(0.3, 0.4)],
            vec![C64::new(0.3, -0.4), C64::new(2.0, 0.0)],
        ];
        let (eigs, vecs) = jacobi_hermitian(m.clone()).unwrap();
        // Eigenvalues of [[1, z],[z̄, 2]]: 1.5 ± sqrt(0.25 + |z|²).
        let r = (0.25f64 + 0.25).sqrt();
        assert!((eigs[0] - (1.5 - r)).abs() < 1e-14);
        assert!((eigs[1] - (1.5 + r)).abs() < 1e-14);
        // Residual ‖Mv - λv‖ for each pair.
        for k in 0..2 {
            for i in 0..2 {
                let mv: C64 = (0..2).map(|j| m[i][j] * vecs[k][j]).sum();
                assert!((mv - eigs[k] * vecs[k][i]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn truncated_fiber_reproduces_hill_gap_edges() {
        // At ξ = 1 (the first zone center for the unit lattice) the two
        // center-adjacent eigenvalues of the fiber straddle the first gap.
        let a = 0.005;
        let eps = 0.5;
        let v = cosine(a);
        let opts = FiberOpts::default();
        let (sites, m) = fiber_matrix(&v, eps, 1.0, &opts).unwrap();
        assert!(sites.len() >= 9);
        let (eigs, _) = jacobi_hermitian(m).unwrap();
        let edges = hill_gap(&v, eps, 1).unwrap();
        // The fiber at the zone center has a pair of eigenvalues at the gap
        // edges (degenerate free levels split by 2ε|V̂₁|).
        let near: Vec<f64> = eigs
            .iter()
            .copied()
            .filter(|e| (e - 1.0).abs() < 0.5)
            .collect();
        assert_eq!(near.len(), 2);
        assert!((near[0] - edges.lower).abs() < 1e-7, "{} vs {}", near[0], edges.lower);
        assert!((near[1] - edges.upper).abs() < 1e-7);
    }

    #[test]
    fn richardson_second_order_matches_perturbation_theory() {
        // Nonresonant ξ: second-order shift is Σ_{θ≠0} |V̂_θ|²/(ξ²-(ξ+2θ)²)
        // = -Σ |V̂_θ|²/(4θ(ξ+θ)).
        let a = 0.005;
        let v = cosine(a);
        let xi = 0.37;
        let f2 = second_order_coefficient(&v, xi, 0.02, &FiberOpts::default()).unwrap();
        let want: f64 = [-1.0f64, 1.0]
            .iter()
            .map(|&t| -a * a / (4.0 * t * (xi + t)))
            .sum();
        assert!((f2 - want).abs() < 1e-8, "{f2} vs {want}");
    }

    #[test]
    fn truncated_ids_is_exact_for_free_potential() {
        let v0 = cosine(0.0);
        let opts = FiberOpts {
            max_order: 12,
            r_keep: 4.0,
            cap: 10_000,
        };
        for &lambda in &[0.3, 2.0] {
            let n = truncated_ids(&v0, 1e-2, lambda, &opts, 801, &[]).unwrap();
            assert!(
                (n - lambda.sqrt() / std::f64::consts::PI).abs() < 1e-12,
                "λ={lambda}: {n}"
            );
        }
        assert_eq!(truncated_ids(&v0, 1e-2, -0.5, &opts, 801, &[]).unwrap(), 0.0);
        // r_keep too small for the level is rejected, not mismeasured.
        let bad = FiberOpts {
            max_order: 12,
            r_keep: 1.5,
            cap: 10_000,
        };
        assert!(matches!(
            truncated_ids(&v0, 1e-2, 2.0, &bad, 801, &[]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn truncated_ids_matches_hill_on_periodic() {
        let v = cosine(0.005);
        let eps = 1e-2;
        let opts = FiberOpts {
            max_order: 12,
            r_keep: 4.0,
            cap: 10_000,
        };
        for &lambda in &[0.7, 2.0] {
            let n_fiber = truncated_ids(&v, eps, lambda, &opts, 2001, &[]).unwrap();
            let n_hill = hill_ids(&v, eps, lambda).unwrap();
            assert!(
                (n_fiber - n_hill).abs() < 1e-6,
                "λ={lambda}: fiber {n_fiber:.10} vs hill {n_hill:.10}"
            );
        }
    }

    #[test]
    fn truncated_ids_is_stable_under_deeper_cutoff() {
        let v = cosine(0.005);
        let eps = 1e-2;
        let small = FiberOpts {
            max_order: 12,
            r_keep: 4.0,
            cap: 10_000,
        };
        let big = FiberOpts {
            max_order: 16,
            r_keep: 8.0,
            cap: 10_000,
        };
        let n1 = truncated_ids(&v, eps, 2.0, &small, 1201, &[]).unwrap();
        let n2 = truncated_ids(&v, eps, 2.0, &big, 1201, &[]).unwrap();
        assert!(
            (n1 - n2).abs() < 1e-8,
            "cutoff sensitivity {:.3e}",
            (n1 - n2).abs()
        );
    }

    #[test]
    fn quasi_fiber_stays_hop_sparse() {
        let basis = GeneratorBasis::new(&["1", "sqrt:2"]).unwrap();
        let v = Potential::from_coefficients(
            basis,
            &[
                (Frequency::new(vec![1, 0]), C64::new(0.004, 0.001)),
                (Frequency::new(vec![0, 1]), C64::new(0.003, -0.002)),
            ],
        )
        .unwrap();
        let xi = 0.37;
        let eps = 1e-2;
        let opts = FiberOpts {
            max_order: 10,
            r_keep: 6.0,
            cap: 10_000,
        };
        let (sites, _) = fiber_matrix(&v, eps, xi, &opts).unwrap();
        assert!(
            sites.len() < 80,
            "hop-reachable fiber has {} sites",
            sites.len()
        );
        // The band value matches second-order perturbation theory.
        let g = truncated_g(&v, eps, xi, &opts).unwrap();
        let f2: f64 = v
            .support()
            .iter()
            .filter(|(f, _)| !f.is_zero())
            .map(|(f, c)| {
                let t = f.value(v.basis());
                -c.norm_sqr() / (4.0 * t * (xi + t))
            })
            .sum();
        assert!(
            (g - xi * xi - eps * eps * f2).abs() < 1e-11,
            "G = {g:.14} vs ξ²+ε²f₂ = {:.14}",
            xi * xi + eps * eps * f2
        );
    }

    #[test]
    fn cache_round_trip() {
        let dir = std::env::temp_dir().join(format!("gauge1d-cache-test-{}", std::process::id()));
        let cache = OracleCache::in_dir(&dir).unwrap();
        let key = OracleCache::key(&cosine(0.003), "test-op", &[1.0, 2.0]);
        let mut calls = 0;
        let v1 = cache
            .get_or_compute(key.clone(), || {
                calls += 1;
                Ok(42.5)
            })
            .unwrap();
        cache.persist().unwrap();
        let reopened = OracleCache::in_dir(&dir).unwrap();
        let v2 = reopened
            .get_or_compute(key, || {
                calls += 1;
                Ok(0.0) // must not be called
            })
            .unwrap();
        assert_eq!(v1, 42.5);
        assert_eq!(v2, 42.5);
        assert_eq!(calls, 1);
        std::fs::remove_dir_all(&dir).ok();
    }
}
