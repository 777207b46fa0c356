//! Small shared numeric kernels: a minimal real-scalar abstraction, bracketed
//! root finding, golden-section minimization, dense least squares, and a
//! deterministic byte hash for cache keys.
//!
//! The kernels that the deep dyadic windows reuse (root finding, least
//! squares) are generic over [`Real`] so they run unchanged on `f64` and on
//! the big fixed-point scalar from [`crate::wide`].

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::{Error, Result};

/// Minimal real-arithmetic interface for the generic kernels.
///
/// Implemented by `f64` and by [`crate::wide::BigFixed`]. Only the operations
/// the kernels actually need are present; `to_f64` is lossy and is used for
/// reporting and tolerances, never for the arithmetic itself.
pub trait Real:
    Clone
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn abs(&self) -> Self;
    /// Square root of a non-negative value.
    fn sqrt(&self) -> Self;
}

impl Real for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
}

/// Root of a continuous function on a bracketing interval.
///
/// `f(a)` and `f(b)` must have opposite signs (zero endpoint values are
/// accepted as roots). Bisection, with a secant step attempted each iteration
/// and kept only if it stays well inside the bracket; terminates when the
/// bracket width drops below `tol`.
pub fn bisect_root<R: Real>(
    f: impl Fn(&R) -> R,
    a: R,
    b: R,
    tol: &R,
    max_iter: usize,
) -> Result<R> {
    let mut lo = a;
    let mut hi = b;
    let mut flo = f(&lo);
    let mut fhi = f(&hi);
    let zero = R::zero();
    if flo == zero {
        return Ok(lo);
    }
    if fhi == zero {
        return Ok(hi);
    }
    if (flo > zero) == (fhi > zero) {
        return Err(Error::Numeric(format!(
            "bisect_root: no sign change on bracket [{}, {}]",
            lo.to_f64(),
            hi.to_f64()
        )));
    }
    let half = R::from_f64(0.5);
    for _ in 0..max_iter {
        let width = hi.clone() - lo.clone();
        if width.abs() <= *tol {
            break;
        }
        // Secant candidate; fall back to the midpoint when it degenerates or
        // falls too close to an endpoint (guards slow one-sided convergence).
        let mid = lo.clone() + (hi.clone() - lo.clone()) * half.clone();
        let denom = fhi.clone() - flo.clone();
        let mut x = mid.clone();
        if denom != zero {
            let sec = lo.clone() - flo.clone() * (hi.clone() - lo.clone()) / denom.clone();
            let margin = width.abs() * R::from_f64(0.01);
            if sec > lo.clone() + margin.clone() && sec < hi.clone() - margin {
                x = sec;
            }
        }
        let fx = f(&x);
        if fx == zero {
            return Ok(x);
        }
        if (fx > zero) == (flo > zero) {
            lo = x;
            flo = fx;
        } else {
            hi = x;
            fhi = fx;
        }
    }
    Ok(lo.clone() + (hi - lo) * half)
}

/// Golden-section minimum of a unimodal function on `[a, b]`.
///
/// Returns `(argmin, min)`. If `f` is not unimodal the result is a local
/// minimum. Tolerance is on the abscissa.
pub fn golden_min(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (a, b);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Maximum of a unimodal function via [`golden_min`] on `-f`.
pub fn golden_max(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let (x, neg) = golden_min(|t| -f(t), a, b, tol);
    (x, -neg)
}

/// Least-squares solution of an overdetermined dense system by Householder QR
/// with column scaling.
///
/// Returns the coefficient vector, a condition estimate (ratio of extreme
/// diagonal magnitudes of the scaled `R` factor — a lower bound on the true
/// condition number, adequate as a degeneracy guard), and the residual vector
/// `b - A x`.
pub fn solve_lsq<R: Real>(a: &[Vec<R>], b: &[R]) -> Result<(Vec<R>, f64, Vec<R>)> {
    let m = a.len();
    if m == 0 || b.len() != m {
        return Err(Error::Numeric("solve_lsq: empty or mismatched system".into()));
    }
    let n = a[0].len();
    if n == 0 || m < n {
        return Err(Error::Numeric(format!(
            "solve_lsq: need at least as many rows as columns (m={m}, n={n})"
        )));
    }
    let zero = R::zero();

    // Scale each column to unit max-magnitude so the condition estimate
    // reflects the basis geometry rather than raw magnitudes.
    let mut scale = vec![R::one(); n];
    for j in 0..n {
        let mut mx = zero.clone();
        for row in a {
            let v = row[j].abs();
            if v > mx {
                mx = v;
            }
        }
        if mx == zero {
            return Err(Error::Numeric(format!("solve_lsq: zero column {j}")));
        }
        scale[j] = mx;
    }
    let mut q = Vec::with_capacity(m);
    for row in a {
        let mut r = Vec::with_capacity(n);
        for j in 0..n {
            r.push(row[j].clone() / scale[j].clone());
        }
        q.push(r);
    }
    let mut rhs: Vec<R> = b.to_vec();

    // Householder triangularization, applied to the rhs as we go.
    for k in 0..n {
        let mut norm2 = zero.clone();
        for row in q.iter().skip(k) {
            norm2 = norm2 + row[k].clone() * row[k].clone();
        }
        let norm = norm2.sqrt();
        if norm == zero {
            return Err(Error::Numeric(format!(
                "solve_lsq: rank deficiency at column {k}"
            )));
        }
        let alpha = if q[k][k] > zero { -norm } else { norm };
        // v = x - alpha * e_k, normalized implicitly through vnorm2.
        let mut v = Vec::with_capacity(m - k);
        v.push(q[k][k].clone() - alpha.clone());
        for row in q.iter().skip(k + 1) {
            v.push(row[k].clone());
        }
        let mut vnorm2 = zero.clone();
        for vi in &v {
            vnorm2 = vnorm2 + vi.clone() * vi.clone();
        }
        if vnorm2 == zero {
            continue;
        }
        for j in k..n {
            let mut dot = zero.clone();
            for (i, vi) in v.iter().enumerate() {
                dot = dot + vi.clone() * q[k + i][j].clone();
            }
            let factor = (R::from_f64(2.0) * dot) / vnorm2.clone();
            for (i, vi) in v.iter().enumerate() {
                q[k + i][j] = q[k + i][j].clone() - factor.clone() * vi.clone();
            }
        }
        let mut dot = zero.clone();
        for (i, vi) in v.iter().enumerate() {
            dot = dot + vi.clone() * rhs[k + i].clone();
        }
        let factor = (R::from_f64(2.0) * dot) / vnorm2;
        for (i, vi) in v.iter().enumerate() {
            rhs[k + i] = rhs[k + i].clone() - factor.clone() * vi.clone();
        }
        q[k][k] = alpha;
    }

    // Condition estimate from the R diagonal.
    let mut dmax = 0.0f64;
    let mut dmin = f64::INFINITY;
    for (k, row) in q.iter().enumerate().take(n) {
        let v = row[k].abs().to_f64();
        dmax = dmax.max(v);
        dmin = dmin.min(v);
    }
    let cond = if dmin == 0.0 { f64::INFINITY } else { dmax / dmin };

    // Back substitution on the scaled system, then unscale.
    let mut x = vec![zero.clone(); n];
    for k in (0..n).rev() {
        let mut s = rhs[k].clone();
        for j in k + 1..n {
            s = s - q[k][j].clone() * x[j].clone();
        }
        x[k] = s / q[k][k].clone();
    }
    for j in 0..n {
        x[j] = x[j].clone() / scale[j].clone();
    }

    let mut residual = Vec::with_capacity(m);
    for (i, row) in a.iter().enumerate() {
        let mut s = b[i].clone();
        for j in 0..n {
            s = s - row[j].clone() * x[j].clone();
        }
        residual.push(s);
    }
    Ok((x, cond, residual))
}

/// `n` evenly spaced points covering `[a, b]` inclusive (`n >= 2`).
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "linspace needs at least two points");
    let step = (b - a) / (n - 1) as f64;
    (0..n).map(|i| a + step * i as f64).collect()
}

/// Lebesgue measure of `{x ∈ (lo, hi) : f(x) ≤ level}` by indicator sampling.
///
/// Samples `n` uniform points plus the supplied `probes`, then locates every
/// indicator flip between adjacent samples by bisection — on the indicator
/// itself, so jump discontinuities of `f` are handled as well as smooth
/// crossings. A feature narrower than the sample spacing that contains no
/// probe is missed entirely; callers pass `probes` at suspected narrow
/// structure (zone edges, known roots).
pub fn indicator_measure(
    f: impl Fn(f64) -> f64,
    level: f64,
    lo: f64,
    hi: f64,
    n: usize,
    probes: &[f64],
) -> f64 {
    let mut xs = linspace(lo, hi, n.max(2));
    let h = 1e-9 * (hi - lo);
    for &p in probes {
        if p > lo && p < hi {
            xs.push(p);
            xs.push((p - h).max(lo));
            xs.push((p + h).min(hi));
        }
    }
    xs.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample point"));
    xs.dedup();
    let inside = |x: f64| f(x) <= level;
    let flags: Vec<bool> = xs.iter().map(|&x| inside(x)).collect();
    let mut total = 0.0;
    for i in 0..xs.len() - 1 {
        match (flags[i], flags[i + 1]) {
            (true, true) => total += xs[i + 1] - xs[i],
            (false, false) => {}
            (fa, _) => {
                let (mut a, mut b) = (xs[i], xs[i + 1]);
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if inside(m) == fa {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                let cut = 0.5 * (a + b);
                if fa {
                    total += cut - xs[i];
                } else {
                    total += xs[i + 1] - cut;
                }
            }
        }
    }
    total
}

/// Deterministic FNV-1a 64-bit hash (stable across runs and platforms, unlike
/// the std hasher); used for oracle cache keys and seeded phase draws.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Extends an FNV-1a hash with the exact bit pattern of a float.
pub fn fnv1a_f64(seed: u64, x: f64) -> u64 {
    let mut h = seed;
    for &b in &x.to_bits().to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect_root(|x: &f64| x * x - 2.0, 0.0, 2.0, &1e-14, 200).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn bisect_rejects_unbracketed() {
        assert!(bisect_root(|x: &f64| x * x + 1.0, -1.0, 1.0, &1e-12, 100).is_err());
    }

    #[test]
    fn bisect_accepts_endpoint_root() {
        let r = bisect_root(|x: &f64| *x, 0.0, 1.0, &1e-12, 100).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn golden_min_quadratic() {
        let (x, fx) = golden_min(|t| (t - 0.3) * (t - 0.3) + 1.0, -1.0, 1.0, 1e-12);
        // Abscissa accuracy saturates at √ulp on a flat minimum (the value
        // comparisons tie below that); the minimum value itself is full
        // precision.
        assert!((x - 0.3).abs() < 1e-7);
        assert!((fx - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lsq_recovers_exact_polynomial() {
        // y = 2 + 3 t + 0.5 t^2 sampled without noise must be recovered to
        // roundoff.
        let ts = linspace(0.0, 1.0, 9);
        let a: Vec<Vec<f64>> = ts.iter().map(|&t| vec![1.0, t, t * t]).collect();
        let b: Vec<f64> = ts.iter().map(|&t| 2.0 + 3.0 * t + 0.5 * t * t).collect();
        let (x, cond, res) = solve_lsq(&a, &b).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
        assert!((x[2] - 0.5).abs() < 1e-12);
        assert!(cond < 1e3);
        assert!(res.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn lsq_flags_dependent_columns() {
        let a = vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]];
        let b = vec![1.0, 1.0, 1.0];
        match solve_lsq(&a, &b) {
            Err(_) => {}
            Ok((_, cond, _)) => assert!(cond > 1e12),
        }
    }

    #[test]
    fn fnv_matches_reference_vectors() {
        // Standard FNV-1a 64-bit test vectors; the cache key format must not
        // drift between runs or platforms.
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
        let h1 = fnv1a_f64(fnv1a(b"key"), 0.125);
        assert_eq!(h1, fnv1a_f64(fnv1a(b"key"), 0.125));
        assert_ne!(h1, fnv1a_f64(fnv1a(b"key"), 0.25));
    }
}
