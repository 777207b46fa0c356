//! Fixed-point big-decimal arithmetic for the deep dyadic windows.
//!
//! The super-resonance construction drives window sizes like ε ≈ 2^{-1000}
//! and zone half-widths around 10^{-160}; squares of these underflow f64 by
//! hundreds of orders of magnitude. [`BigFixed`] represents values as
//! `mantissa · 10^{-scale}` with a `num_bigint::BigInt` mantissa and a
//! per-value decimal scale.
//!
//! Binary operations align scales upward first (an exact rescaling), so
//! mixed-precision arithmetic widens rather than truncates: the result of
//! `a ∘ b` carries `max(scale(a), scale(b))` fractional digits and is exact
//! except for a single nearest rounding in the last digit of `*`, `/`, and
//! `sqrt`. `from_f64` is always exact: every finite f64 is a dyadic rational
//! `±m·2^e`, stored with however many digits that needs. Precision of a
//! computation is therefore set by constructing its inputs at the desired
//! scale (see [`Prec`]).

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Float, Signed, Zero};

use crate::numeric::Real;

/// Decimal precision context: number of digits kept after the point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prec(pub u32);

impl Prec {
    /// `m · 2^k`, exact when `k ≥ -scale·log₂10` (else rounded to nearest).
    pub fn pow2(self, m: i64, k: i64) -> BigFixed {
        let mant = BigInt::from(m);
        let ten_s = BigInt::from(10u32).pow(self.0);
        let m = if k >= 0 {
            mant * ten_s * (BigInt::from(1) << (k as usize))
        } else {
            round_div(&(mant * ten_s), &(BigInt::from(1) << ((-k) as usize)))
        };
        BigFixed { scale: self.0, m }
    }

    /// `10^k` at this scale (exact for `k ≥ -scale`).
    pub fn pow10(self, k: i64) -> BigFixed {
        let ten_s = BigInt::from(10u32).pow(self.0);
        let m = if k >= 0 {
            ten_s * BigInt::from(10u32).pow(k as u32)
        } else if (-k) as u32 <= self.0 {
            BigInt::from(10u32).pow(self.0 - (-k) as u32)
        } else {
            BigInt::zero()
        };
        BigFixed { scale: self.0, m }
    }

    /// Integer value at this scale.
    pub fn int(self, v: i64) -> BigFixed {
        BigFixed {
            scale: self.0,
            m: BigInt::from(v) * BigInt::from(10u32).pow(self.0),
        }
    }

    /// Widens an f64 (exact) to at least this scale.
    pub fn from_f64(self, x: f64) -> BigFixed {
        BigFixed::from_f64_exact(x).with_scale_at_least(self.0)
    }

    /// Big-integer value at this scale (exact).
    pub fn from_bigint(self, v: &BigInt) -> BigFixed {
        BigFixed {
            scale: self.0,
            m: v * BigInt::from(10u32).pow(self.0),
        }
    }

    /// Parses a plain decimal literal (`-12.345`, `0.5`, `3`), exact when the
    /// literal has at most `scale` fractional digits, else rounded once.
    pub fn parse(self, s: &str) -> Option<BigFixed> {
        let (int_part, frac_part) = match s.split_once('.') {
            Some((a, b)) => (a, b),
            None => (s, ""),
        };
        if frac_part.contains(['+', '-']) || frac_part.chars().any(|c| !c.is_ascii_digit()) {
            return None;
        }
        let digits = format!("{int_part}{frac_part}");
        let raw: BigInt = digits.parse().ok()?;
        let fl = frac_part.len() as u32;
        let m = if fl <= self.0 {
            raw * BigInt::from(10u32).pow(self.0 - fl)
        } else {
            round_div(&raw, &BigInt::from(10u32).pow(fl - self.0))
        };
        Some(BigFixed { scale: self.0, m })
    }
}

/// Fixed-point decimal: `m · 10^{-scale}`.
#[derive(Debug, Clone)]
pub struct BigFixed {
    scale: u32,
    m: BigInt,
}

// Equality is by value, not representation: 0.5 at scale 1 equals 0.50 at
// scale 2 (consistent with `PartialOrd`, which aligns scales).
impl PartialEq for BigFixed {
    fn eq(&self, other: &Self) -> bool {
        let (a, b, _) = self.clone().aligned(other.clone());
        a == b
    }
}

impl Eq for BigFixed {}

/// Core of `sqrt_fast` for inputs of O(1) value: recurse at half the scale for
/// a seed, then one full-scale Newton step `r = (r0 + w/r0)/2` — each step
/// doubles the correct digits, so one per level suffices.
fn sqrt_core(w: &BigFixed) -> BigFixed {
    const DIRECT: u32 = 1200;
    let scale = w.scale;
    if scale <= DIRECT {
        return Real::sqrt(w);
    }
    let seed = sqrt_core(&w.with_scale(scale / 2 + 16));
    let r0 = seed.with_scale_at_least(scale);
    let q = w.clone() / r0.clone();
    let (a, b, s) = r0.aligned(q);
    BigFixed {
        scale: s,
        m: round_div(&(a + b), &BigInt::from(2)),
    }
}

/// Nearest-integer division, ties away from zero. `b` must be nonzero.
pub(crate) fn round_div(a: &BigInt, b: &BigInt) -> BigInt {
    let (q, r) = a.div_rem(b);
    if r.magnitude() * 2u32 >= *b.magnitude() {
        if a.sign() == b.sign() {
            q + 1
        } else {
            q - 1
        }
    } else {
        q
    }
}

impl BigFixed {
    /// Exact conversion: every finite f64 is `±m·2^e`.
    pub fn from_f64_exact(x: f64) -> Self {
        assert!(x.is_finite(), "BigFixed from non-finite f64");
        if x == 0.0 {
            return BigFixed {
                scale: 0,
                m: BigInt::zero(),
            };
        }
        let (mant, exp, sign) = Float::integer_decode(x);
        // 2^{-k} has exactly k decimal digits, so scale = max(0, -exp) is exact.
        let scale = (-(exp as i64)).max(0) as u32;
        let v = Prec(scale).pow2(mant as i64, exp as i64);
        if sign < 0 {
            -v
        } else {
            v
        }
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn is_zero(&self) -> bool {
        self.m.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.m.is_negative()
    }

    /// Exact rescaling to a finer (or equal) scale.
    pub fn with_scale_at_least(&self, scale: u32) -> Self {
        if scale <= self.scale {
            self.clone()
        } else {
            BigFixed {
                scale,
                m: &self.m * BigInt::from(10u32).pow(scale - self.scale),
            }
        }
    }

    fn aligned(self, other: Self) -> (BigInt, BigInt, u32) {
        let scale = self.scale.max(other.scale);
        let a = self.with_scale_at_least(scale).m;
        let b = other.with_scale_at_least(scale).m;
        (a, b, scale)
    }

    /// Exact integer mantissa: the value is `mantissa · 10^(-scale)`.
    pub(crate) fn mantissa(&self) -> &BigInt {
        &self.m
    }

    /// Rescales to exactly `scale` fractional digits: widening is exact,
    /// narrowing rounds to nearest once.
    pub fn with_scale(&self, scale: u32) -> Self {
        if scale >= self.scale {
            self.with_scale_at_least(scale)
        } else {
            BigFixed {
                scale,
                m: round_div(&self.m, &BigInt::from(10u32).pow(self.scale - scale)),
            }
        }
    }

    /// Shifts by an exact power of ten: value ·= 10^j. Never rounds.
    fn shift10(&self, j: i64) -> Self {
        let s = self.scale as i64 - j;
        if s >= 0 {
            let s = u32::try_from(s).expect("shift10: scale overflow");
            BigFixed {
                scale: s,
                m: self.m.clone(),
            }
        } else {
            BigFixed {
                scale: 0,
                m: &self.m * BigInt::from(10u32).pow(u32::try_from(-s).expect("shift10: overflow")),
            }
        }
    }

    /// `log10(|value|)` from mantissa bit length, accurate to ~1e-14 absolute;
    /// `None` for zero. Cheap even for million-digit mantissas (no decimal
    /// rendering).
    pub fn log10_abs(&self) -> Option<f64> {
        if self.m.is_zero() {
            return None;
        }
        let mag = self.m.magnitude();
        let bits = mag.bits();
        // Top 64 bits carry the fractional part of log2; the rest is the shift.
        let log2_m = if bits <= 64 {
            (mag.to_u64_digits()[0] as f64).log2()
        } else {
            let top = (mag >> (bits - 64)).to_u64_digits()[0];
            (top as f64).log2() + (bits - 64) as f64
        };
        Some(log2_m * std::f64::consts::LOG10_2 - self.scale as f64)
    }

    /// Square root by a precision ladder: recursive half-precision seed plus
    /// one full-precision Newton step, with the input pre-scaled by an even
    /// power of ten so the working value is O(1). Matches `Real::sqrt` to a
    /// few ulps but stays fast at hundreds of thousands of digits.
    pub fn sqrt_fast(&self) -> Self {
        assert!(!self.is_negative(), "sqrt_fast of negative value");
        if self.is_zero() {
            return self.clone();
        }
        // Even power-of-ten normalization: value = w · 10^(2k), w ∈ ~[0.1, 10].
        // The root is r = sqrt(w) · 10^k, so digits below 10^(k - scale) of w
        // cannot influence the result at this scale: work at scale + k.
        let e = self.log10_abs().expect("nonzero");
        let k = (e / 2.0).round() as i64;
        let work = u32::try_from((self.scale as i64 + k).max(40)).expect("sqrt_fast scale");
        let w = self.shift10(-2 * k).with_scale(work);
        sqrt_core(&w).shift10(k).with_scale(self.scale)
    }

    /// Scientific-notation rendering with `sig` significant digits.
    pub fn to_sci_string(&self, sig: usize) -> String {
        if self.m.is_zero() {
            return "0".into();
        }
        let neg = self.m.is_negative();
        let digits = self.m.magnitude().to_string();
        let exp10 = digits.len() as i64 - 1 - self.scale as i64;
        let kept: String = digits.chars().take(sig.max(1)).collect();
        let mantissa = if kept.len() > 1 {
            format!("{}.{}", &kept[..1], &kept[1..])
        } else {
            kept
        };
        format!("{}{}e{}", if neg { "-" } else { "" }, mantissa, exp10)
    }
}

impl fmt::Display for BigFixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_sci_string(36))
    }
}

impl PartialOrd for BigFixed {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        let (a, b, _) = self.clone().aligned(other.clone());
        a.partial_cmp(&b)
    }
}

impl Add for BigFixed {
    type Output = BigFixed;
    fn add(self, rhs: Self) -> Self {
        let (a, b, scale) = self.aligned(rhs);
        BigFixed { scale, m: a + b }
    }
}

impl Sub for BigFixed {
    type Output = BigFixed;
    fn sub(self, rhs: Self) -> Self {
        let (a, b, scale) = self.aligned(rhs);
        BigFixed { scale, m: a - b }
    }
}

impl Mul for BigFixed {
    type Output = BigFixed;
    fn mul(self, rhs: Self) -> Self {
        let (a, b, scale) = self.aligned(rhs);
        let ten_s = BigInt::from(10u32).pow(scale);
        BigFixed {
            scale,
            m: round_div(&(a * b), &ten_s),
        }
    }
}

impl Div for BigFixed {
    type Output = BigFixed;
    fn div(self, rhs: Self) -> Self {
        let (a, b, scale) = self.aligned(rhs);
        assert!(!b.is_zero(), "BigFixed division by zero");
        let ten_s = BigInt::from(10u32).pow(scale);
        BigFixed {
            scale,
            m: round_div(&(a * ten_s), &b),
        }
    }
}

impl Neg for BigFixed {
    type Output = BigFixed;
    fn neg(self) -> Self {
        BigFixed {
            scale: self.scale,
            m: -self.m,
        }
    }
}

impl Real for BigFixed {
    fn zero() -> Self {
        BigFixed {
            scale: 0,
            m: BigInt::zero(),
        }
    }
    fn one() -> Self {
        BigFixed {
            scale: 0,
            m: BigInt::from(1),
        }
    }
    fn from_f64(x: f64) -> Self {
        BigFixed::from_f64_exact(x)
    }
    fn to_f64(&self) -> f64 {
        if self.m.is_zero() {
            return 0.0;
        }
        let digits = self.m.magnitude().to_string();
        let exp10 = digits.len() as i64 - 1 - self.scale as i64;
        if exp10 > 308 {
            return if self.m.is_negative() {
                f64::NEG_INFINITY
            } else {
                f64::INFINITY
            };
        }
        if exp10 < -324 {
            return 0.0;
        }
        let lead: String = digits.chars().take(17).collect();
        let text = format!(
            "{}{}e{}",
            if self.m.is_negative() { "-" } else { "" },
            {
                let mut t = lead.clone();
                if t.len() > 1 {
                    t.insert(1, '.');
                }
                t
            },
            exp10
        );
        text.parse().unwrap_or(0.0)
    }
    fn abs(&self) -> Self {
        BigFixed {
            scale: self.scale,
            m: self.m.abs(),
        }
    }
    fn sqrt(&self) -> Self {
        assert!(!self.m.is_negative(), "BigFixed sqrt of negative value");
        let ten_s = BigInt::from(10u32).pow(self.scale);
        BigFixed {
            scale: self.scale,
            m: (&self.m * ten_s).sqrt(),
        }
    }
}
