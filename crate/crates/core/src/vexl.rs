//! Modular, Luxemburg norm and the embedding and indicator criteria of
//! `L^{p(·)}[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponent::Exponent;
use crate::quad;
use crate::scalar::{Extended, Real};
use crate::stepfn::StepFunction;

/// Default relative tolerance of [`luxemburg_norm`].
pub const DEFAULT_TOL: f64 = 1e-10;

const MAX_BISECTIONS: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NormResult<T> {
    pub value: T,
    pub iterations: usize,
    /// `|ρ(f/value) − 1|` when the modular crosses 1 continuously, else 0.
    pub residual: T,
}

#[derive(Clone, Copy, Debug)]
struct Term<T> {
    mag: T,
    weight: T,
    p: Extended<T>,
}

/// `λ ↦ ∫ (|f|/λ)^{p}` with the quadrature laid out once.
///
/// Pieces where `p` is constant contribute exactly; elsewhere the exponent
/// is sampled at Gauss–Legendre nodes of an adaptive partition.
#[derive(Clone, Debug)]
pub struct ModularEvaluator<T> {
    terms: Vec<Term<T>>,
    unbounded: bool,
}

impl<T: Real> ModularEvaluator<T> {
    pub fn new(f: &StepFunction<T>, p: &Exponent<T>) -> Self {
        Self::with_tolerance(f, p, T::lit(1e-13))
    }

    pub fn with_tolerance(f: &StepFunction<T>, p: &Exponent<T>, rel_tol: T) -> Self {
        let mut cuts: Vec<T> = f.breakpoints().to_vec();
        cuts.extend(p.breakpoints());
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        cuts.dedup();
        let exact = p.is_piecewise_constant();
        let mut terms = Vec::new();
        let mut unbounded = false;
        let two = T::lit(2.0);
        for w in cuts.windows(2) {
            let (x0, x1) = (w[0], w[1]);
            if !(x1 > x0) {
                continue;
            }
            let mid = (x0 + x1) / two;
            let mag = match f.eval(mid).abs() {
                Extended::PosInf => {
                    unbounded = true;
                    continue;
                }
                Extended::Finite(v) if v == T::zero() => continue,
                Extended::Finite(v) => v,
            };
            if exact {
                terms.push(Term { mag, weight: x1 - x0, p: p.eval(mid) });
                continue;
            }
            // a translated piece is integrated in the coordinate of its base,
            // where points near 0 keep full precision
            let (base, u0) = untranslate(p, x0, x1);
            let u1 = u0 + (x1 - x0);
            let squash = |t: T| match base.excess(t) {
                Extended::PosInf => T::one(),
                Extended::Finite(e) => e / (T::one() + e),
            };
            for (lo, hi) in quad::adaptive_partition(squash, u0, u1, T::zero(), rel_tol) {
                quad::for_each_node(lo, hi, |weight, u| terms.push(Term { mag, weight, p: base.eval(u) }));
            }
        }
        Self { terms, unbounded }
    }

    /// True when `f` takes the value `+∞` on a set of positive measure.
    pub fn is_unbounded(&self) -> bool {
        self.unbounded
    }

    pub fn eval(&self, lambda: T) -> Extended<T> {
        if self.unbounded {
            return Extended::PosInf;
        }
        let mut acc = T::zero();
        for term in &self.terms {
            let x = term.mag / lambda;
            match term.p {
                Extended::PosInf => {
                    if x > T::one() {
                        return Extended::PosInf;
                    }
                }
                Extended::Finite(p) => acc = acc + term.weight * x.powf(p),
            }
        }
        if acc.is_finite() {
            Extended::Finite(acc)
        } else {
            Extended::Finite(T::max_value())
        }
    }
}

/// Follows `[x0, x1)` through translations, which are affine on pieces
/// between breakpoints.
fn untranslate<T: Real>(p: &Exponent<T>, x0: T, x1: T) -> (&Exponent<T>, T) {
    match p {
        Exponent::Rearranged { base, map } => {
            let s = map.segments()[map.segment_index((x0 + x1) / T::lit(2.0))];
            let u0 = s.dst_left + (x0 - s.src_left);
            untranslate(base, u0, u0 + (x1 - x0))
        }
        other => (other, x0),
    }
}

/// `∫ (|f(x)|/λ)^{p(x)} dx`.
pub fn modular<T: Real>(f: &StepFunction<T>, p: &Exponent<T>, lambda: T) -> Result<Extended<T>> {
    if !(lambda > T::zero()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    Ok(ModularEvaluator::new(f, p).eval(lambda))
}

/// Luxemburg norm `inf{λ > 0 : ρ(f/λ) ≤ 1}` by bisection.
pub fn luxemburg_norm<T: Real>(f: &StepFunction<T>, p: &Exponent<T>, tol: T) -> Result<NormResult<T>> {
    if !(tol > T::zero()) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if f.is_zero() {
        return Ok(NormResult { value: T::zero(), iterations: 0, residual: T::zero() });
    }
    if !f.is_finite() {
        return Err(Error::NotInSpace("function is infinite on a set of positive measure".into()));
    }
    let ev = ModularEvaluator::new(f, p);
    norm_with(&ev, f, tol)
}

pub(crate) fn norm_with<T: Real>(ev: &ModularEvaluator<T>, f: &StepFunction<T>, tol: T) -> Result<NormResult<T>> {
    let one = Extended::one();
    let two = T::lit(2.0);
    let sup = f.sup_abs().finite().unwrap_or(T::max_value());
    if sup == T::zero() {
        return Ok(NormResult { value: T::zero(), iterations: 0, residual: T::zero() });
    }
    let mut iterations = 0;
    // ρ(f/‖f‖_∞) ≤ 1 on a probability space; the loop only guards rounding
    let mut hi = sup;
    while ev.eval(hi) > one {
        hi = hi * two;
        iterations += 1;
        if !hi.is_finite() || iterations > MAX_BISECTIONS {
            return Err(Error::NotInSpace("modular exceeds 1 for every lambda".into()));
        }
    }
    let l1 = f.abs().integrate()?;
    let mut lo = (l1 / two).min(hi / two).max(T::min_positive_value());
    while ev.eval(lo) <= one {
        if lo <= T::min_positive_value() {
            return Ok(NormResult { value: lo, iterations, residual: T::zero() });
        }
        hi = lo;
        lo = lo / two;
        iterations += 1;
    }
    let mut rho_hi = ev.eval(hi);
    for _ in 0..MAX_BISECTIONS {
        let mid = lo + (hi - lo) / two;
        if !(mid > lo && mid < hi) {
            break;
        }
        let width_ok = hi - lo <= tol * hi;
        let resid_ok = match rho_hi {
            Extended::Finite(r) => (one.finite().unwrap() - r).abs() <= tol,
            Extended::PosInf => false,
        };
        if width_ok && (resid_ok || ev.eval(lo).is_infinite()) {
            break;
        }
        iterations += 1;
        let rho = ev.eval(mid);
        if rho <= one {
            hi = mid;
            rho_hi = rho;
        } else {
            lo = mid;
        }
    }
    let residual = match (ev.eval(lo), rho_hi) {
        (Extended::Finite(_), Extended::Finite(r)) => (T::one() - r).abs(),
        _ => T::zero(),
    };
    Ok(NormResult { value: hi, iterations, residual })
}

/// Pointwise `p/(p − 1)`.
pub fn conjugate_exponent<T: Real>(p: &Exponent<T>) -> Exponent<T> {
    p.conjugate()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EmbeddingCheck<T> {
    pub lhs: T,
    pub rhs: T,
    pub holds: bool,
}

/// Compares `‖f‖_{p(·)}` against `2‖f‖_{q(·)}` for `p ≤ q`.
pub fn embedding_check<T: Real>(
    f: &StepFunction<T>,
    p: &Exponent<T>,
    q: &Exponent<T>,
    tol: T,
) -> Result<EmbeddingCheck<T>> {
    let mut pts: Vec<T> = vec![T::zero(), T::one()];
    pts.extend_from_slice(f.breakpoints());
    pts.extend(p.breakpoints());
    pts.extend(q.breakpoints());
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    pts.dedup();
    let mids: Vec<T> = pts.windows(2).map(|w| (w[0] + w[1]) / T::lit(2.0)).collect();
    for &t in pts.iter().chain(mids.iter()) {
        let (pv, qv) = (p.eval(t), q.eval(t));
        if pv > qv {
            return Err(Error::ExponentOrder { t: t.as_f64(), p: pv.to_ieee().as_f64(), q: qv.to_ieee().as_f64() });
        }
    }
    let lhs = luxemburg_norm(f, p, tol)?.value;
    let rhs = T::lit(2.0) * luxemburg_norm(f, q, tol)?.value;
    Ok(EmbeddingCheck { lhs, rhs, holds: lhs <= rhs + tol })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct IndicatorBound<T> {
    pub modular_value: Extended<T>,
    pub certified: bool,
}

/// `∫_a^b c^{q(t)} dt`; at least 1 certifies `‖χ_{(a,b)}‖_{q(·)} ≥ 1/c`.
pub fn indicator_norm_lower_bound<T: Real>(q: &Exponent<T>, a: T, b: T, c: T) -> Result<IndicatorBound<T>> {
    if !(c > T::one()) {
        return Err(Error::InvalidArgument(format!("c must exceed 1, got {c}")));
    }
    if !(T::zero() <= a && a < b && b <= T::one()) {
        return Err(Error::InvalidArgument(format!("({a}, {b}) is not a nonempty subinterval of (0, 1)")));
    }
    let modular_value = exp_integral(q, c, a, b);
    Ok(IndicatorBound { modular_value, certified: modular_value >= Extended::one() })
}

/// `∫_a^b c^{q(t)} dt` split at the exponent's jumps.
pub fn exp_integral<T: Real>(q: &Exponent<T>, c: T, a: T, b: T) -> Extended<T> {
    if let Some(v) = q.exp_integral_closed(c, a, b) {
        return v;
    }
    let mut cuts = vec![a];
    cuts.extend(q.breakpoints().into_iter().filter(|&t| t > a && t < b));
    cuts.push(b);
    let ln_c = c.ln();
    let mut acc = Extended::zero();
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let piece = if q.is_piecewise_constant() {
            match q.eval((lo + hi) / T::lit(2.0)) {
                Extended::Finite(v) => Extended::Finite(c.powf(v) * (hi - lo)),
                Extended::PosInf => Extended::PosInf,
            }
        } else {
            let v = quad::integrate(
                |t: T| match q.eval(t) {
                    Extended::Finite(p) => (p * ln_c).exp(),
                    Extended::PosInf => T::infinity(),
                },
                lo,
                hi,
                T::zero(),
                T::lit(1e-12),
            );
            Extended::try_finite(v).unwrap_or(Extended::PosInf)
        };
        acc = acc.add(piece);
        if acc.is_infinite() {
            break;
        }
    }
    acc
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct HolderCheck<T> {
    /// `∫|fg|`.
    pub lhs: T,
    /// `2‖f‖_{p(·)}‖g‖_{p'(·)}`.
    pub rhs: T,
    pub holds: bool,
}

/// Hölder's inequality with the associate-norm constant 2.
pub fn holder_check<T: Real>(f: &StepFunction<T>, g: &StepFunction<T>, p: &Exponent<T>, tol: T) -> Result<HolderCheck<T>> {
    let lhs = f.mul(g).abs().integrate()?;
    let nf = luxemburg_norm(f, p, tol)?.value;
    let ng = luxemburg_norm(g, &p.conjugate(), tol)?.value;
    let rhs = T::lit(2.0) * nf * ng;
    Ok(HolderCheck { lhs, rhs, holds: lhs <= rhs * (T::one() + T::lit(4.0) * tol) })
}
