//! Variable exponents `p : [0, 1] → [1, ∞]`.
//!
//! Exponents are small expression trees so that conjugation, pointwise
//! minima and composition with a measure-preserving map stay exact. Each
//! node evaluates `p(t) − 1` directly ([`Exponent::excess`]), which keeps
//! conjugation `p' − 1 = 1/(p − 1)` free of cancellation near `p = 1`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Extended, Real};
use crate::stepfn::{GridFunction, Rearrangement, StepFunction};

/// Closed-form exponent families. `L(t) = ln(e/t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NamedExponent<T> {
    /// `1 + s / L(t)`; the boundary member of the logarithmic class.
    LogConjugate { scale: T },
    /// `offset + slope · L(t)`.
    LogAffine { offset: T, slope: T },
    /// `1 + s·t`.
    Linear { slope: T },
    /// `1 + s·t^γ`.
    Power { scale: T, power: T },
}

impl<T: Real> NamedExponent<T> {
    fn excess(&self, t: T) -> Extended<T> {
        let t = t.max(T::zero()).min(T::one());
        match *self {
            NamedExponent::LogConjugate { scale } => {
                if t == T::zero() {
                    Extended::zero()
                } else {
                    Extended::Finite(scale / t.log_weight())
                }
            }
            NamedExponent::LogAffine { offset, slope } => {
                if t == T::zero() && slope > T::zero() {
                    Extended::PosInf
                } else if t == T::zero() {
                    Extended::Finite(offset - T::one())
                } else {
                    Extended::Finite(offset - T::one() + slope * t.log_weight())
                }
            }
            NamedExponent::Linear { slope } => Extended::Finite(slope * t),
            NamedExponent::Power { scale, power } => Extended::Finite(scale * t.powf(power)),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NamedExponent::LogConjugate { .. } => "log_conjugate",
            NamedExponent::LogAffine { .. } => "log_affine",
            NamedExponent::Linear { .. } => "linear",
            NamedExponent::Power { .. } => "power",
        }
    }

    pub fn params(&self) -> Vec<T> {
        match *self {
            NamedExponent::LogConjugate { scale } => vec![scale],
            NamedExponent::LogAffine { offset, slope } => vec![offset, slope],
            NamedExponent::Linear { slope } => vec![slope],
            NamedExponent::Power { scale, power } => vec![scale, power],
        }
    }

    /// Inverse of [`name`](Self::name) and [`params`](Self::params); `"log"`
    /// is `L(t)` itself.
    pub fn parse(name: &str, params: &[T]) -> Result<Self> {
        let need = |n: usize| -> Result<()> {
            if params.len() == n {
                Ok(())
            } else {
                Err(Error::InvalidExponent(format!("{name} takes {n} params, got {}", params.len())))
            }
        };
        let named = match name {
            "log_conjugate" => {
                if params.is_empty() {
                    NamedExponent::LogConjugate { scale: T::one() }
                } else {
                    need(1)?;
                    NamedExponent::LogConjugate { scale: params[0] }
                }
            }
            "log" => {
                need(0)?;
                NamedExponent::LogAffine { offset: T::zero(), slope: T::one() }
            }
            "log_affine" => {
                need(2)?;
                NamedExponent::LogAffine { offset: params[0], slope: params[1] }
            }
            "linear" => {
                need(1)?;
                NamedExponent::Linear { slope: params[0] }
            }
            "power" => {
                need(2)?;
                NamedExponent::Power { scale: params[0], power: params[1] }
            }
            other => return Err(Error::InvalidExponent(format!("unknown named exponent {other:?}"))),
        };
        named.validate()?;
        Ok(named)
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            NamedExponent::LogConjugate { scale } => scale > T::zero(),
            NamedExponent::LogAffine { offset, slope } => slope >= T::zero() && offset + slope >= T::one(),
            NamedExponent::Linear { slope } => slope >= T::zero(),
            NamedExponent::Power { scale, power } => scale >= T::zero() && power > T::zero(),
        };
        if ok && self.params().iter().all(|p| p.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidExponent(format!("{} with params {:?} is not >= 1", self.name(), self.params())))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Repr<T>", into = "Repr<T>", bound = "T: Real")]
pub enum Exponent<T: Real> {
    Constant(Extended<T>),
    Step(StepFunction<T>),
    Named(NamedExponent<T>),
    Conjugate(Box<Exponent<T>>),
    Min(Box<Exponent<T>>, Box<Exponent<T>>),
    /// `t ↦ base(ω(t))`.
    Rearranged { base: Box<Exponent<T>>, map: Arc<Rearrangement<T>> },
}

impl<T: Real> Exponent<T> {
    pub fn constant(v: T) -> Result<Self> {
        let e = Exponent::Constant(
            Extended::try_finite(v).ok_or_else(|| Error::InvalidExponent(format!("constant {v}")))?,
        );
        e.validate()?;
        Ok(e)
    }

    pub fn step(f: StepFunction<T>) -> Result<Self> {
        let e = Exponent::Step(f);
        e.validate()?;
        Ok(e)
    }

    pub fn named(n: NamedExponent<T>) -> Result<Self> {
        n.validate()?;
        Ok(Exponent::Named(n))
    }

    /// `ln(e/t)`.
    pub fn log_weight() -> Self {
        Exponent::Named(NamedExponent::LogAffine { offset: T::zero(), slope: T::one() })
    }

    /// `1 + s/ln(e/t)`.
    pub fn log_conjugate(scale: T) -> Result<Self> {
        Self::named(NamedExponent::LogConjugate { scale })
    }

    pub fn min(a: Self, b: Self) -> Self {
        Exponent::Min(Box::new(a), Box::new(b))
    }

    pub fn rearranged(base: Self, map: Arc<Rearrangement<T>>) -> Self {
        Exponent::Rearranged { base: Box::new(base), map }
    }

    /// Checks `p ≥ 1` structurally for the leaf nodes.
    pub fn validate(&self) -> Result<()> {
        match self {
            Exponent::Constant(v) => {
                if *v >= Extended::one() {
                    Ok(())
                } else {
                    Err(Error::InvalidExponent(format!("constant {v} < 1")))
                }
            }
            Exponent::Step(f) => match f.values().iter().find(|v| **v < Extended::one()) {
                None => Ok(()),
                Some(v) => Err(Error::InvalidExponent(format!("step value {v} < 1"))),
            },
            Exponent::Named(n) => n.validate(),
            Exponent::Conjugate(inner) => inner.validate(),
            Exponent::Min(a, b) => a.validate().and(b.validate()),
            Exponent::Rearranged { base, .. } => base.validate(),
        }
    }

    /// `p(t) − 1`, computed without forming `p(t)` where possible.
    pub fn excess(&self, t: T) -> Extended<T> {
        match self {
            Exponent::Constant(v) => excess_of(*v),
            Exponent::Step(f) => excess_of(f.eval(t)),
            Exponent::Named(n) => n.excess(t),
            Exponent::Conjugate(inner) => match inner.excess(t) {
                Extended::PosInf => Extended::zero(),
                Extended::Finite(e) if e == T::zero() => Extended::PosInf,
                Extended::Finite(e) => Extended::Finite(e.recip()),
            },
            Exponent::Min(a, b) => a.excess(t).min(b.excess(t)),
            Exponent::Rearranged { base, map } => base.excess(map.apply(t)),
        }
    }

    pub fn eval(&self, t: T) -> Extended<T> {
        Extended::one().add(self.excess(t))
    }

    /// True when the exponent is constant between consecutive
    /// [`breakpoints`](Self::breakpoints).
    pub fn is_piecewise_constant(&self) -> bool {
        match self {
            Exponent::Constant(_) | Exponent::Step(_) => true,
            Exponent::Named(_) => false,
            Exponent::Conjugate(inner) => inner.is_piecewise_constant(),
            Exponent::Min(a, b) => a.is_piecewise_constant() && b.is_piecewise_constant(),
            Exponent::Rearranged { base, .. } => base.is_piecewise_constant(),
        }
    }

    /// Sorted interior points where the exponent may jump.
    pub fn breakpoints(&self) -> Vec<T> {
        let mut out = Vec::new();
        self.collect_breakpoints(&mut out);
        out.retain(|&t| t > T::zero() && t < T::one());
        out.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        out.dedup();
        out
    }

    fn collect_breakpoints(&self, out: &mut Vec<T>) {
        match self {
            Exponent::Constant(_) | Exponent::Named(_) => {}
            Exponent::Step(f) => out.extend_from_slice(&f.breakpoints()[1..f.breakpoints().len() - 1]),
            Exponent::Conjugate(inner) => inner.collect_breakpoints(out),
            Exponent::Min(a, b) => {
                a.collect_breakpoints(out);
                b.collect_breakpoints(out);
            }
            Exponent::Rearranged { base, map } => {
                out.extend(map.breakpoints());
                let inner = base.breakpoints();
                if inner.is_empty() {
                    return;
                }
                for s in map.segments() {
                    let len = s.src_right - s.src_left;
                    let lo = inner.partition_point(|&u| u <= s.dst_left);
                    for &u in inner[lo..].iter().take_while(|&&u| u < s.dst_left + len) {
                        out.push(s.src_left + (u - s.dst_left));
                    }
                }
            }
        }
    }

    /// Pointwise `p/(p − 1)` with `1 ↦ ∞` and `∞ ↦ 1`.
    pub fn conjugate(&self) -> Self {
        match self {
            Exponent::Constant(v) => Exponent::Constant(conjugate_value(*v)),
            Exponent::Step(f) => Exponent::Step(f.map(conjugate_value)),
            Exponent::Named(NamedExponent::LogConjugate { scale }) => {
                Exponent::Named(NamedExponent::LogAffine { offset: T::one(), slope: scale.recip() })
            }
            Exponent::Named(NamedExponent::LogAffine { offset, slope })
                if *offset == T::one() && *slope > T::zero() =>
            {
                Exponent::Named(NamedExponent::LogConjugate { scale: slope.recip() })
            }
            Exponent::Conjugate(inner) => (**inner).clone(),
            Exponent::Rearranged { base, map } => Exponent::Rearranged { base: Box::new(base.conjugate()), map: map.clone() },
            other => Exponent::Conjugate(Box::new(other.clone())),
        }
    }

    /// Closed-form `∫_a^b c^{p(t)} dt` when the tree allows it.
    ///
    /// `None` means no closed form is implemented; `Some(PosInf)` means the
    /// integral diverges.
    pub fn exp_integral_closed(&self, c: T, a: T, b: T) -> Option<Extended<T>> {
        if !(b > a) {
            return Some(Extended::zero());
        }
        match self {
            Exponent::Constant(v) => Some(match v {
                Extended::Finite(p) => Extended::Finite(c.powf(*p) * (b - a)),
                Extended::PosInf => Extended::PosInf,
            }),
            Exponent::Step(f) => {
                let mut acc = Extended::zero();
                for cell in f.cells() {
                    let (l, r) = (cell.left.max(a), cell.right.min(b));
                    if r > l {
                        let term = match cell.value {
                            Extended::Finite(p) => Extended::Finite(c.powf(p) * (r - l)),
                            Extended::PosInf => Extended::PosInf,
                        };
                        acc = acc.add(term);
                    }
                }
                Some(acc)
            }
            Exponent::Named(NamedExponent::LogAffine { offset, slope }) => {
                Some(log_affine_exp_integral(c, *offset, *slope, a, b))
            }
            Exponent::Min(x, y) => match (&**x, &**y) {
                (
                    Exponent::Named(NamedExponent::LogAffine { offset: o1, slope: s1 }),
                    Exponent::Named(NamedExponent::LogAffine { offset: o2, slope: s2 }),
                ) => Some(min_log_affine_exp_integral(c, (*o1, *s1), (*o2, *s2), a, b)),
                _ => None,
            },
            Exponent::Rearranged { base, map } => {
                let segs = map.segments();
                let first = map.segment_index(a);
                let mut acc = Extended::zero();
                for s in segs[first..].iter().take_while(|s| s.src_left < b) {
                    let (lo, hi) = (s.src_left.max(a), s.src_right.min(b));
                    if hi > lo {
                        let u = s.dst_left + (lo - s.src_left);
                        acc = acc.add(base.exp_integral_closed(c, u, u + (hi - lo))?);
                    }
                }
                Some(acc)
            }
            Exponent::Conjugate(inner) => match &**inner {
                Exponent::Constant(_) | Exponent::Step(_) => self.conjugate().exp_integral_closed(c, a, b),
                _ => None,
            },
            _ => None,
        }
    }

    /// Midpoint samples; fails on an infinite sample.
    pub fn sample_midpoints(&self, resolution: usize) -> Result<GridFunction<T>> {
        let mut samples = Vec::with_capacity(resolution);
        for j in 0..resolution {
            let t = GridFunction::<T>::midpoint_of(j, resolution);
            match self.eval(t) {
                Extended::Finite(v) => samples.push(v),
                Extended::PosInf => {
                    return Err(Error::InvalidGrid(format!("exponent is infinite at t = {t}")))
                }
            }
        }
        GridFunction::new(resolution, samples)
    }
}

fn excess_of<T: Real>(v: Extended<T>) -> Extended<T> {
    match v {
        Extended::Finite(p) => Extended::Finite(p - T::one()),
        Extended::PosInf => Extended::PosInf,
    }
}

pub(crate) fn conjugate_value<T: Real>(v: Extended<T>) -> Extended<T> {
    match v {
        Extended::PosInf => Extended::one(),
        Extended::Finite(p) if p == T::one() => Extended::PosInf,
        Extended::Finite(p) => Extended::Finite(T::one() + (p - T::one()).recip()),
    }
}

/// `∫_a^b c^{α + γ ln(e/t)} dt = c^α e^κ ∫_a^b t^{−κ} dt`, `κ = γ ln c`.
fn log_affine_exp_integral<T: Real>(c: T, offset: T, slope: T, a: T, b: T) -> Extended<T> {
    let kappa = slope * c.ln();
    let front = c.powf(offset) * kappa.exp();
    if a == T::zero() && kappa >= T::one() {
        return Extended::PosInf;
    }
    let one = T::one();
    let v = if (kappa - one).abs() < T::epsilon() {
        front * (b / a).ln()
    } else {
        let e = one - kappa;
        // b^e − a^e = a^e (exp(e ln(b/a)) − 1), stable for a close to b
        let a_pow = if a == T::zero() { T::zero() } else { a.powf(e) };
        if a == T::zero() {
            front * b.powf(e) / e
        } else {
            front * a_pow * (e * (b / a).ln()).exp_m1() / e
        }
    };
    Extended::Finite(v)
}

fn min_log_affine_exp_integral<T: Real>(c: T, p: (T, T), q: (T, T), a: T, b: T) -> Extended<T> {
    // crossing at L* = (o2 − o1)/(s1 − s2), i.e. t* = exp(1 − L*)
    let split = if p.1 != q.1 {
        let l_star = (q.0 - p.0) / (p.1 - q.1);
        let t_star = (T::one() - l_star).exp();
        (t_star > a && t_star < b).then_some(t_star)
    } else {
        None
    };
    let piece = |lo: T, hi: T| {
        let mid = if lo == T::zero() { hi / T::lit(2.0) } else { (lo * hi).sqrt() };
        let l = mid.log_weight();
        let (o, s) = if p.0 + p.1 * l <= q.0 + q.1 * l { p } else { q };
        log_affine_exp_integral(c, o, s, lo, hi)
    };
    match split {
        Some(t) => piece(a, t).add(piece(t, b)),
        None => piece(a, b),
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged, bound = "T: Real")]
enum Repr<T: Real> {
    Constant { constant: Extended<T> },
    Step { step: StepFunction<T> },
    Named { named: String, #[serde(default)] params: Vec<T> },
    Conjugate { conjugate: Box<Exponent<T>> },
    Min { min: Vec<Exponent<T>> },
    Rearranged { rearranged: RearrangedRepr<T> },
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct RearrangedRepr<T: Real> {
    base: Box<Exponent<T>>,
    map: Rearrangement<T>,
}

impl<T: Real> TryFrom<Repr<T>> for Exponent<T> {
    type Error = Error;

    fn try_from(r: Repr<T>) -> Result<Self> {
        let e = match r {
            Repr::Constant { constant } => Exponent::Constant(constant),
            Repr::Step { step } => Exponent::Step(step),
            Repr::Named { named, params } => Exponent::Named(NamedExponent::parse(&named, &params)?),
            Repr::Conjugate { conjugate } => Exponent::Conjugate(conjugate),
            Repr::Min { min } => {
                let mut it = min.into_iter();
                let first = it.next().ok_or_else(|| Error::InvalidExponent("empty min".into()))?;
                it.fold(first, Exponent::min)
            }
            Repr::Rearranged { rearranged } => Exponent::Rearranged {
                base: rearranged.base,
                map: Arc::new(Rearrangement::new(rearranged.map.segments().to_vec())?),
            },
        };
        e.validate()?;
        Ok(e)
    }
}

impl<T: Real> From<Exponent<T>> for Repr<T> {
    fn from(e: Exponent<T>) -> Self {
        match e {
            Exponent::Constant(constant) => Repr::Constant { constant },
            Exponent::Step(step) => Repr::Step { step },
            Exponent::Named(n) => Repr::Named { named: n.name().to_string(), params: n.params() },
            Exponent::Conjugate(conjugate) => Repr::Conjugate { conjugate },
            Exponent::Min(a, b) => Repr::Min { min: vec![*a, *b] },
            Exponent::Rearranged { base, map } => {
                Repr::Rearranged { rearranged: RearrangedRepr { base, map: (*map).clone() } }
            }
        }
    }
}
