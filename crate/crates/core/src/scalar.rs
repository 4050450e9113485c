//! Scalar abstraction and the extended-real value used for exponents.

use std::cmp::Ordering;
use std::fmt::{self, Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::{self, DeserializeOwned, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

/// Floating point scalar the whole toolkit is generic over (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal.
    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `ln(e/t) = 1 - ln t`, the logarithmic weight used throughout the construction.
    fn log_weight(self) -> Self {
        Self::one() - self.ln()
    }
}

impl Real for f32 {
    fn lit(x: f64) -> Self {
        x as f32
    }
}

impl Real for f64 {
    fn lit(x: f64) -> Self {
        x
    }
}

/// A real number or the explicit `+∞` sentinel.
///
/// Non-finite IEEE values are never stored in `Finite`; constructors that
/// receive one reject it.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub enum Extended<T> {
    Finite(T),
    PosInf,
}

impl<T: Real> Extended<T> {
    pub fn zero() -> Self {
        Extended::Finite(T::zero())
    }

    pub fn one() -> Self {
        Extended::Finite(T::one())
    }

    /// Wraps a finite value; `None` for NaN or IEEE infinities.
    pub fn try_finite(x: T) -> Option<Self> {
        x.is_finite().then_some(Extended::Finite(x))
    }

    pub fn finite(self) -> Option<T> {
        match self {
            Extended::Finite(x) => Some(x),
            Extended::PosInf => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Extended::PosInf)
    }

    pub fn is_zero(self) -> bool {
        matches!(self, Extended::Finite(x) if x == T::zero())
    }

    pub fn abs(self) -> Self {
        match self {
            Extended::Finite(x) => Extended::Finite(x.abs()),
            Extended::PosInf => Extended::PosInf,
        }
    }

    pub fn add(self, other: Self) -> Self {
        match (self, other) {
            (Extended::Finite(a), Extended::Finite(b)) => Extended::Finite(a + b),
            _ => Extended::PosInf,
        }
    }

    /// Product with the measure-theoretic convention `0·∞ = 0`.
    pub fn mul(self, other: Self) -> Self {
        match (self, other) {
            (Extended::Finite(a), Extended::Finite(b)) => Extended::Finite(a * b),
            (Extended::Finite(a), Extended::PosInf) | (Extended::PosInf, Extended::Finite(a)) => {
                if a == T::zero() {
                    Extended::zero()
                } else {
                    Extended::PosInf
                }
            }
            (Extended::PosInf, Extended::PosInf) => Extended::PosInf,
        }
    }

    pub fn min(self, other: Self) -> Self {
        if self.total_cmp(&other) == Ordering::Greater {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: Self) -> Self {
        if self.total_cmp(&other) == Ordering::Less {
            other
        } else {
            self
        }
    }

    pub fn total_cmp(&self, other: &Self) -> Ordering {
        self.partial_cmp(other).unwrap_or(Ordering::Equal)
    }

    /// Lossy view as an IEEE value, for plotting and reporting only.
    pub fn to_ieee(self) -> T {
        match self {
            Extended::Finite(x) => x,
            Extended::PosInf => T::infinity(),
        }
    }
}

impl<T: Display> Display for Extended<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(x) => write!(f, "{x}"),
            Extended::PosInf => write!(f, "inf"),
        }
    }
}

impl<T: Real> Serialize for Extended<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Extended::Finite(x) => x.serialize(serializer),
            Extended::PosInf => serializer.serialize_str("inf"),
        }
    }
}

impl<'de, T: Real> Deserialize<'de> for Extended<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr<T> {
            Num(T),
            Text(String),
        }
        match Repr::<T>::deserialize(deserializer)? {
            Repr::Num(x) => Extended::try_finite(x)
                .ok_or_else(|| de::Error::custom("non-finite number; use \"inf\"")),
            Repr::Text(s) => match s.as_str() {
                "inf" | "+inf" | "infinity" | "+infinity" => Ok(Extended::PosInf),
                other => Err(de::Error::custom(format!("unrecognized extended real {other:?}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_times_infinity_is_zero() {
        let z = Extended::<f64>::zero();
        assert_eq!(z.mul(Extended::PosInf), z);
        assert_eq!(Extended::Finite(2.0).mul(Extended::PosInf), Extended::PosInf);
    }

    #[test]
    fn ordering_puts_infinity_last() {
        assert!(Extended::Finite(1e300_f64) < Extended::PosInf);
        assert_eq!(Extended::Finite(3.0_f64).min(Extended::PosInf), Extended::Finite(3.0));
    }

    #[test]
    fn serde_roundtrip_uses_inf_string() {
        let v: Vec<Extended<f64>> = vec![Extended::Finite(1.5), Extended::PosInf];
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"[1.5,"inf"]"#);
        let back: Vec<Extended<f64>> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn log_weight_at_one_is_one() {
        assert_eq!(1.0_f64.log_weight(), 1.0);
        assert!(0.0_f64.log_weight().is_infinite());
    }
}
