//! Real numbers that remember an exact rational value when one is known.
//!
//! Literal weights such as `0.25` or `1/4` stay exact through products and
//! sums, so joint branch probabilities can be compared without rounding.
//! Equality, ordering and hashing only look at the floating-point value.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, One, Signed, ToPrimitive, Zero};

pub type Rational = Ratio<i64>;

#[derive(Clone, Copy)]
pub struct Real {
    value: f64,
    exact: Option<Rational>,
}

fn ratio_to_f64(r: &Rational) -> f64 {
    r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN)
}

impl Real {
    pub fn from_rational(r: Rational) -> Self {
        Real {
            value: ratio_to_f64(&r),
            exact: Some(r),
        }
    }

    pub fn from_f64(value: f64) -> Self {
        Real { value, exact: None }
    }

    pub fn from_int(i: i64) -> Self {
        Self::from_rational(Rational::from_integer(i))
    }

    pub fn zero() -> Self {
        Self::from_int(0)
    }

    pub fn one() -> Self {
        Self::from_int(1)
    }

    /// Parses an unsigned decimal literal (`12`, `0.25`, `3.5e-2`), keeping
    /// the exact value when it fits in a 64-bit ratio.
    pub fn parse_decimal(text: &str) -> Option<Self> {
        let value: f64 = text.parse().ok()?;
        Some(Real {
            value,
            exact: decimal_to_ratio(text),
        })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn exact(&self) -> Option<Rational> {
        self.exact
    }

    pub fn is_integer(&self) -> bool {
        match self.exact {
            Some(r) => r.is_integer(),
            None => self.value.fract() == 0.0,
        }
    }

    fn combine(
        self,
        other: Real,
        float: impl Fn(f64, f64) -> f64,
        exact: impl Fn(&Rational, &Rational) -> Option<Rational>,
    ) -> Real {
        let value = float(self.value, other.value);
        let exact = match (self.exact, other.exact) {
            (Some(a), Some(b)) => exact(&a, &b),
            _ => None,
        };
        match exact {
            Some(r) => Real::from_rational(r),
            None => Real { value, exact: None },
        }
    }

    pub fn powr(self, exponent: Real) -> Real {
        let value = self.value.powf(exponent.value);
        let exact = match (self.exact, exponent.exact) {
            (Some(base), Some(e)) if e.is_integer() && e.numer().abs() <= 64 => {
                checked_powi(base, *e.numer())
            }
            _ => None,
        };
        match exact {
            Some(r) => Real::from_rational(r),
            None => Real { value, exact: None },
        }
    }

    pub fn min(self, other: Real) -> Real {
        if other.value < self.value {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: Real) -> Real {
        if other.value > self.value {
            other
        } else {
            self
        }
    }

    pub fn abs(self) -> Real {
        match self.exact {
            Some(r) => Real::from_rational(r.abs()),
            None => Real::from_f64(self.value.abs()),
        }
    }

    pub fn floor(self) -> Real {
        match self.exact {
            Some(r) => Real::from_rational(r.floor()),
            None => Real::from_f64(self.value.floor()),
        }
    }

    pub fn ceil(self) -> Real {
        match self.exact {
            Some(r) => Real::from_rational(r.ceil()),
            None => Real::from_f64(self.value.ceil()),
        }
    }

    /// Maps a real-valued function over the float part and drops exactness.
    pub fn map_inexact(self, f: impl Fn(f64) -> f64) -> Real {
        Real::from_f64(f(self.value))
    }

    /// Three-way comparison, exact when both sides are exact.
    pub fn compare(&self, other: &Real) -> Option<Ordering> {
        match (self.exact, other.exact) {
            (Some(a), Some(b)) => Some(a.cmp(&b)),
            _ => self.value.partial_cmp(&other.value),
        }
    }

    fn key(&self) -> u64 {
        if self.value == 0.0 {
            0.0f64.to_bits()
        } else if self.value.is_nan() {
            f64::NAN.to_bits()
        } else {
            self.value.to_bits()
        }
    }
}

fn checked_powi(base: Rational, exp: i64) -> Option<Rational> {
    let mut acc = Rational::one();
    for _ in 0..exp.unsigned_abs() {
        acc = acc.checked_mul(&base)?;
    }
    if exp < 0 {
        if acc.is_zero() {
            return None;
        }
        Some(acc.recip())
    } else {
        Some(acc)
    }
}

fn decimal_to_ratio(text: &str) -> Option<Rational> {
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(i) => (&text[..i], text[i + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (int_part, frac_part) = match mantissa.find('.') {
        Some(i) => (&mantissa[..i], &mantissa[i + 1..]),
        None => (mantissa, ""),
    };
    let digits = format!("{int_part}{frac_part}");
    let numer: i64 = if digits.is_empty() {
        0
    } else {
        digits.parse().ok()?
    };
    let scale = exponent - frac_part.len() as i32;
    let ten = Rational::from_integer(10);
    let factor = checked_powi(ten, scale as i64)?;
    Rational::from_integer(numer).checked_mul(&factor)
}

impl std::ops::Add for Real {
    type Output = Real;
    fn add(self, rhs: Real) -> Real {
        self.combine(rhs, |a, b| a + b, |a, b| a.checked_add(b))
    }
}

impl std::ops::Sub for Real {
    type Output = Real;
    fn sub(self, rhs: Real) -> Real {
        self.combine(rhs, |a, b| a - b, |a, b| a.checked_sub(b))
    }
}

impl std::ops::Mul for Real {
    type Output = Real;
    fn mul(self, rhs: Real) -> Real {
        self.combine(rhs, |a, b| a * b, |a, b| a.checked_mul(b))
    }
}

impl std::ops::Div for Real {
    type Output = Real;
    fn div(self, rhs: Real) -> Real {
        self.combine(
            rhs,
            |a, b| a / b,
            |a, b| if b.is_zero() { None } else { a.checked_div(b) },
        )
    }
}

impl std::ops::Neg for Real {
    type Output = Real;
    fn neg(self) -> Real {
        match self.exact {
            Some(r) => Real::from_rational(-r),
            None => Real::from_f64(-self.value),
        }
    }
}

impl PartialEq for Real {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Real {}

impl Hash for Real {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state);
    }
}

impl PartialOrd for Real {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Real {
    fn cmp(&self, other: &Self) -> Ordering {
        f64::from_bits(self.key()).total_cmp(&f64::from_bits(other.key()))
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl fmt::Debug for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.exact {
            Some(r) => write!(f, "{} ({})", self.value, r),
            None => write!(f, "{}", self.value),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimals_are_exact() {
        let r = Real::parse_decimal("0.25").unwrap();
        assert_eq!(r.exact(), Some(Rational::new(1, 4)));
        let r = Real::parse_decimal("3.5e-2").unwrap();
        assert_eq!(r.exact(), Some(Rational::new(35, 1000)));
        let r = Real::parse_decimal("12").unwrap();
        assert_eq!(r.exact(), Some(Rational::from_integer(12)));
    }

    #[test]
    fn products_stay_exact() {
        let q = Real::parse_decimal("0.25").unwrap();
        let p = q * q * q;
        assert_eq!(p.exact(), Some(Rational::new(1, 64)));
        assert_eq!(p.value(), 1.0 / 64.0);
    }

    #[test]
    fn tenths_sum_exactly_to_one() {
        let a = Real::parse_decimal("0.1").unwrap();
        let b = Real::parse_decimal("0.2").unwrap();
        let c = Real::parse_decimal("0.7").unwrap();
        assert_eq!((a + b + c).exact(), Some(Rational::one()));
    }

    #[test]
    fn fractional_power_is_inexact() {
        let r = Real::from_int(2).powr(Real::parse_decimal("0.5").unwrap());
        assert!(r.exact().is_none());
        assert!((r.value() - 2f64.sqrt()).abs() < 1e-15);
        let r = Real::from_int(2).powr(Real::from_int(-2));
        assert_eq!(r.exact(), Some(Rational::new(1, 4)));
    }

    #[test]
    fn overflow_drops_exactness() {
        let big = Real::from_rational(Rational::new(1, 3_000_000_007));
        let p = big * big * big;
        assert!(p.exact().is_none());
        assert!(p.value() > 0.0);
    }
}
