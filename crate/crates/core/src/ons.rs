//! Uniformly bounded orthonormal systems on `[0, 1]`, Fourier coefficients
//! of step functions, partial sums and their maximal function.
//!
//! Modes are numbered from 1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::scalar::{Extended, Real};
use crate::stepfn::{GridFunction, StepFunction};

/// Default number of modes a backend is exercised with.
pub const DEFAULT_MAX_MODES: usize = 1 << 14;

/// Direct evaluation restarts the trigonometric recurrences this often.
const REANCHOR: usize = 128;

pub trait OrthonormalSystem<T: Real>: Send + Sync {
    fn name(&self) -> &'static str;

    /// `sup_{n,t} |φ_n(t)|`.
    fn bound(&self) -> T;

    /// `φ_n(t)`, `n ≥ 1`.
    fn eval(&self, n: usize, t: T) -> T;

    /// `∫_a^b φ_n`.
    fn interval_integral(&self, n: usize, a: T, b: T) -> T;

    /// Writes `φ_1(t), …, φ_{out.len()}(t)`.
    fn eval_prefix(&self, t: T, out: &mut [T]) {
        for (i, v) in out.iter_mut().enumerate() {
            *v = self.eval(i + 1, t);
        }
    }

    /// Writes `∫_a^b φ_n` for `n = 1, …, out.len()`.
    fn integral_prefix(&self, a: T, b: T, out: &mut [T]) {
        for (i, v) in out.iter_mut().enumerate() {
            *v = self.interval_integral(i + 1, a, b);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Trig,
    Walsh,
}

impl SystemKind {
    pub fn system<T: Real>(self) -> Box<dyn OrthonormalSystem<T>> {
        match self {
            SystemKind::Trig => Box::new(TrigSystem),
            SystemKind::Walsh => Box::new(WalshSystem),
        }
    }
}

/// `φ_1 = 1`, `φ_{2k} = √2 cos 2πkt`, `φ_{2k+1} = √2 sin 2πkt`.
#[derive(Clone, Copy, Debug, Default)]
pub struct TrigSystem;

pub fn trig_system() -> TrigSystem {
    TrigSystem
}

/// `2π·frac(k·t)`, keeping the phase accurate for large `k`.
fn phase<T: Real>(k: usize, t: T) -> T {
    let x = T::lit(k as f64) * t;
    T::TAU() * (x - x.floor())
}

/// `π·(k·s mod 2)`.
fn half_phase<T: Real>(k: usize, s: T) -> T {
    let x = T::lit(k as f64) * s;
    T::PI() * (x - T::lit(2.0) * (x / T::lit(2.0)).floor())
}

impl<T: Real> OrthonormalSystem<T> for TrigSystem {
    fn name(&self) -> &'static str {
        "trig"
    }

    fn bound(&self) -> T {
        T::SQRT_2()
    }

    fn eval(&self, n: usize, t: T) -> T {
        assert!(n >= 1, "modes are numbered from 1");
        if n == 1 {
            return T::one();
        }
        let arg = phase(n / 2, t);
        if n % 2 == 0 {
            T::SQRT_2() * arg.cos()
        } else {
            T::SQRT_2() * arg.sin()
        }
    }

    fn interval_integral(&self, n: usize, a: T, b: T) -> T {
        assert!(n >= 1, "modes are numbered from 1");
        if n == 1 {
            return b - a;
        }
        let k = n / 2;
        // sin x − sin y = 2 cos((x+y)/2) sin((x−y)/2), likewise for cos
        let half_sum = half_phase(k, a + b);
        let half_diff = T::PI() * T::lit(k as f64) * (b - a);
        let scale = T::SQRT_2() * half_diff.sin() / (T::PI() * T::lit(k as f64));
        if n % 2 == 0 {
            scale * half_sum.cos()
        } else {
            scale * half_sum.sin()
        }
    }

    fn eval_prefix(&self, t: T, out: &mut [T]) {
        if out.is_empty() {
            return;
        }
        out[0] = T::one();
        let (s1, c1) = phase(1, t).sin_cos();
        let (mut c, mut s) = (T::one(), T::zero());
        let mut k = 0usize;
        let mut i = 1;
        while i < out.len() {
            k += 1;
            if k % REANCHOR == 0 {
                let (sk, ck) = phase(k, t).sin_cos();
                c = ck;
                s = sk;
            } else {
                let (cn, sn) = (c * c1 - s * s1, s * c1 + c * s1);
                c = cn;
                s = sn;
            }
            out[i] = T::SQRT_2() * c;
            if i + 1 < out.len() {
                out[i + 1] = T::SQRT_2() * s;
            }
            i += 2;
        }
    }

    fn integral_prefix(&self, a: T, b: T, out: &mut [T]) {
        if out.is_empty() {
            return;
        }
        out[0] = b - a;
        let (sa, ca) = half_phase(1, a + b).sin_cos();
        let (sd, cd) = (T::PI() * (b - a)).sin_cos();
        let (mut c, mut s) = (T::one(), T::zero());
        let (mut cdk, mut sdk) = (T::one(), T::zero());
        let mut k = 0usize;
        let mut i = 1;
        while i < out.len() {
            k += 1;
            if k % REANCHOR == 0 {
                let (x, y) = half_phase(k, a + b).sin_cos();
                s = x;
                c = y;
                let (x, y) = (T::PI() * T::lit(k as f64) * (b - a)).sin_cos();
                sdk = x;
                cdk = y;
            } else {
                let (cn, sn) = (c * ca - s * sa, s * ca + c * sa);
                c = cn;
                s = sn;
                let (cn, sn) = (cdk * cd - sdk * sd, sdk * cd + cdk * sd);
                cdk = cn;
                sdk = sn;
            }
            let scale = T::SQRT_2() * sdk / (T::PI() * T::lit(k as f64));
            out[i] = scale * c;
            if i + 1 < out.len() {
                out[i + 1] = scale * s;
            }
            i += 2;
        }
    }
}

/// Walsh–Paley system: `φ_n = w_{n−1}`, where `w_m` is the product of the
/// Rademacher functions `r_{i+1}` over the set bits `i` of `m`.
/// Values are right-continuous at dyadic points.
#[derive(Clone, Copy, Debug, Default)]
pub struct WalshSystem;

pub fn walsh_system() -> WalshSystem {
    WalshSystem
}

/// `w_m(t)` for `t ∈ [0, 1]`.
pub fn walsh<T: Real>(m: usize, t: T) -> T {
    if m == 0 {
        return T::one();
    }
    let bits = usize::BITS - m.leading_zeros();
    let scaled = (t * T::lit(2f64.powi(bits as i32))).floor();
    let top = (1u64 << bits) - 1;
    let x = scaled.to_u64().unwrap_or(0).min(top);
    // bit i of `rev` is the (i+1)-th binary digit of t
    let rev = x.reverse_bits() >> (64 - bits);
    if ((m as u64) & rev).count_ones() % 2 == 0 {
        T::one()
    } else {
        -T::one()
    }
}

/// `∫_0^x w_m`, using `w_m(t) = r_1(t)^{m mod 2}·w_{⌊m/2⌋}(2t mod 1)`.
pub fn walsh_primitive<T: Real>(m: usize, x: T) -> T {
    let half = T::lit(0.5);
    let mut x = x.max(T::zero()).min(T::one());
    let mut m = m;
    let (mut acc, mut scale) = (T::zero(), T::one());
    while m > 0 {
        let sign = if m & 1 == 1 { -T::one() } else { T::one() };
        m >>= 1;
        if x <= half {
            scale = scale * half;
            x = x + x;
        } else {
            // the first half integrates w_{m>>1} over a full period
            if m == 0 {
                acc = acc + scale * half;
            }
            scale = scale * half * sign;
            x = x + x - T::one();
        }
    }
    acc + scale * x
}

impl<T: Real> OrthonormalSystem<T> for WalshSystem {
    fn name(&self) -> &'static str {
        "walsh"
    }

    fn bound(&self) -> T {
        T::one()
    }

    fn eval(&self, n: usize, t: T) -> T {
        assert!(n >= 1, "modes are numbered from 1");
        walsh(n - 1, t)
    }

    fn interval_integral(&self, n: usize, a: T, b: T) -> T {
        assert!(n >= 1, "modes are numbered from 1");
        walsh_primitive(n - 1, b) - walsh_primitive(n - 1, a)
    }
}

/// `c_n(f) = ∫ f φ_n` for `n = 1, …, modes`, exact per cell.
pub fn fourier_coefficients<T: Real>(f: &StepFunction<T>, system: &dyn OrthonormalSystem<T>, modes: usize) -> Result<Vec<T>> {
    if !f.is_finite() {
        return Err(Error::InvalidArgument("coefficients need a finite step function".into()));
    }
    let mut out = vec![T::zero(); modes];
    let mut buf = vec![T::zero(); modes];
    for cell in f.cells() {
        let v = match cell.value {
            Extended::Finite(v) if v != T::zero() => v,
            _ => continue,
        };
        system.integral_prefix(cell.left, cell.right, &mut buf);
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = *o + v * *b;
        }
    }
    Ok(out)
}

fn check_modes(needed: usize, available: usize) -> Result<()> {
    if needed > available {
        Err(Error::InvalidArgument(format!("{needed} modes requested but only {available} coefficients given")))
    } else {
        Ok(())
    }
}

/// `S_m(x_j) = Σ_{n≤m} c_n φ_n(x_j)` at the grid midpoints.
pub fn partial_sum_grid<T: Real>(
    coeffs: &[T],
    system: &dyn OrthonormalSystem<T>,
    m: usize,
    resolution: usize,
) -> Result<GridFunction<T>> {
    check_modes(m, coeffs.len())?;
    let samples = (0..resolution)
        .into_par_iter()
        .map_init(
            || vec![T::zero(); m],
            |buf, j| {
                system.eval_prefix(GridFunction::<T>::midpoint_of(j, resolution), buf);
                buf.iter().zip(coeffs).fold(T::zero(), |acc, (p, c)| acc + *p * *c)
            },
        )
        .collect();
    GridFunction::new(resolution, samples)
}

/// `sup_{1≤m≤max_m} F(Σ_{n≤m} c_n φ_n(x_j))` in one pass per grid point.
fn running_sup<T: Real, F: Fn(T) -> T + Sync>(
    coeffs: &[T],
    system: &dyn OrthonormalSystem<T>,
    max_m: usize,
    resolution: usize,
    post: F,
) -> Result<GridFunction<T>> {
    check_modes(max_m, coeffs.len())?;
    if max_m == 0 {
        return GridFunction::new(resolution, vec![T::zero(); resolution]);
    }
    let samples = (0..resolution)
        .into_par_iter()
        .map_init(
            || vec![T::zero(); max_m],
            |buf, j| {
                system.eval_prefix(GridFunction::<T>::midpoint_of(j, resolution), buf);
                let (mut sum, mut best) = (T::zero(), T::neg_infinity());
                for (p, c) in buf.iter().zip(coeffs) {
                    sum = sum + *p * *c;
                    best = best.max(post(sum));
                }
                best
            },
        )
        .collect();
    GridFunction::new(resolution, samples)
}

/// `S*(x_j) = max_{m≤max_m} |S_m(x_j)|`.
pub fn star_maximal<T: Real>(
    coeffs: &[T],
    system: &dyn OrthonormalSystem<T>,
    max_m: usize,
    resolution: usize,
) -> Result<GridFunction<T>> {
    running_sup(coeffs, system, max_m, resolution, |s| s.abs())
}

/// `sup_{m≤max_m} Σ_{n≤m} c_n φ_n(x_j)` without absolute values.
pub fn prefix_sup<T: Real>(
    coeffs: &[T],
    system: &dyn OrthonormalSystem<T>,
    max_m: usize,
    resolution: usize,
) -> Result<GridFunction<T>> {
    running_sup(coeffs, system, max_m, resolution, |s| s)
}

/// `D_m(t) = 1 + 2 Σ_{j≤m} cos 2πjt = sin((2m+1)πt)/sin(πt)`.
pub fn dirichlet_kernel<T: Real>(m: usize, t: T) -> T {
    let s = (T::PI() * t).sin();
    if s.abs() < T::lit(1e-300_f64.max(T::min_positive_value().as_f64())) {
        return T::lit((2 * m + 1) as f64);
    }
    let x = T::lit((2 * m + 1) as f64) * t;
    (T::PI() * (x - T::lit(2.0) * (x / T::lit(2.0)).floor())).sin() / s
}

/// `L_m = ∫_0^1 |D_m|`, integrated between consecutive kernel zeros
/// `k/(2m+1)`.
pub fn lebesgue_constant<T: Real>(m: usize) -> Result<T> {
    if m == 0 {
        return Err(Error::InvalidArgument("m >= 1 required".into()));
    }
    let zeros = 2 * m + 1;
    let step = T::one() / T::lit(zeros as f64);
    // symmetric about 1/2: integrate over [0, 1/2] and double
    let mut acc = T::zero();
    for k in 0..m {
        let (a, b) = (T::lit(k as f64) * step, T::lit((k + 1) as f64) * step);
        acc = acc + quad::composite(|t| dirichlet_kernel(m, t).abs(), a, b, 2);
    }
    let a = T::lit(m as f64) * step;
    acc = acc + quad::composite(|t| dirichlet_kernel(m, t).abs(), a, T::lit(0.5), 2);
    Ok(T::lit(2.0) * acc)
}

/// `(index, value)` rows with a header; indices are 1-based mode numbers.
pub fn coefficients_csv<T: Real>(coeffs: &[T]) -> String {
    let mut out = String::from("index,value\n");
    for (i, c) in coeffs.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, c));
    }
    out
}
