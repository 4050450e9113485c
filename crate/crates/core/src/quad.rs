//! Gauss–Legendre quadrature: fixed rule plus interval-halving adaptivity.

use std::sync::OnceLock;

use crate::scalar::Real;

const ORDER: usize = 10;
const MAX_DEPTH: usize = 56;

/// Nodes and weights of the `ORDER`-point rule on [-1, 1], by Newton
/// iteration on the Legendre recurrence.
fn rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| legendre_rule(ORDER))
}

pub(crate) fn legendre_rule(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Fixed-order rule on `[a, b]`.
pub fn gauss_legendre<T: Real, F: FnMut(T) -> T>(mut f: F, a: T, b: T) -> T {
    let half = (b - a) / T::lit(2.0);
    let mid = (a + b) / T::lit(2.0);
    rule()
        .iter()
        .map(|&(x, w)| T::lit(w) * f(mid + half * T::lit(x)))
        .sum::<T>()
        * half
}

/// Visits `(weight, node)` pairs of the fixed rule on `[a, b]`.
pub fn for_each_node<T: Real, F: FnMut(T, T)>(a: T, b: T, mut visit: F) {
    let half = (b - a) / T::lit(2.0);
    let mid = (a + b) / T::lit(2.0);
    for &(x, w) in rule() {
        visit(T::lit(w) * half, mid + half * T::lit(x));
    }
}

/// Splits `[a, b]` until the fixed rule agrees with its two halves to
/// `max(abs_tol * share, rel_tol * |I|)` on every piece, and returns the
/// pieces in order.
pub fn adaptive_partition<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    a: T,
    b: T,
    abs_tol: T,
    rel_tol: T,
) -> Vec<(T, T)> {
    let total = b - a;
    let mut done = Vec::new();
    if !(total > T::zero()) {
        return done;
    }
    let whole = gauss_legendre(&mut f, a, b);
    let mut stack = vec![(a, b, whole, 0usize)];
    while let Some((lo, hi, est, depth)) = stack.pop() {
        let mid = (lo + hi) / T::lit(2.0);
        let left = gauss_legendre(&mut f, lo, mid);
        let right = gauss_legendre(&mut f, mid, hi);
        let refined = left + right;
        let err = (refined - est).abs();
        let share = (hi - lo) / total;
        let ok = err <= (abs_tol * share).max(rel_tol * refined.abs());
        // below a few ulps of the position the samples are rounding noise
        let unresolved = hi - lo <= T::lit(64.0) * T::epsilon() * lo.abs().max(hi.abs());
        if ok || unresolved || depth >= MAX_DEPTH || !(mid > lo && mid < hi) || !err.is_finite() {
            done.push((lo, hi));
        } else {
            // right first so pieces pop in left-to-right order
            stack.push((mid, hi, right, depth + 1));
            stack.push((lo, mid, left, depth + 1));
        }
    }
    done
}

/// Adaptive integral of `f` over `[a, b]`.
pub fn integrate<T: Real, F: FnMut(T) -> T>(mut f: F, a: T, b: T, abs_tol: T, rel_tol: T) -> T {
    if !(b > a) {
        return T::zero();
    }
    adaptive_partition(&mut f, a, b, abs_tol, rel_tol)
        .into_iter()
        .map(|(lo, hi)| gauss_legendre(&mut f, lo, hi))
        .sum()
}

/// Composite rule on `pieces` equal subintervals of `[a, b]`.
pub fn composite<T: Real, F: FnMut(T) -> T>(mut f: F, a: T, b: T, pieces: usize) -> T {
    let n = pieces.max(1);
    let step = (b - a) / T::lit(n as f64);
    (0..n)
        .map(|j| {
            let lo = a + step * T::lit(j as f64);
            let hi = if j + 1 == n { b } else { lo + step };
            gauss_legendre(&mut f, lo, hi)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_weights_sum_to_two() {
        let s: f64 = rule().iter().map(|&(_, w)| w).sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn integrates_polynomials_exactly() {
        // degree 2n-1 = 19 is exact
        let v = gauss_legendre(|x: f64| x.powi(19) + x.powi(4), 0.0, 1.0);
        assert!((v - (0.05 + 0.2)).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_log_singularity() {
        // ∫_0^1 ln(e/t) dt = 2
        let v = integrate(|t: f64| 1.0 - t.ln(), 0.0, 1.0, 1e-13, 1e-13);
        assert!((v - 2.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn adaptive_handles_kink() {
        let v = integrate(|t: f64| (t - 0.3).abs(), 0.0, 1.0, 1e-14, 1e-14);
        assert!((v - (0.045 + 0.245)).abs() < 1e-12, "{v}");
    }
}
