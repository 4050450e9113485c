//! The rearranged exponent construction.
//!
//! From a seed `p` with `p(0) = 1` and `liminf (p − 1)·ln(e/t) < ∞` this
//! builds `h = min{p', ln(e/t)}`, a lacunary sequence `t_k`, windows `E_k`
//! placed at the enumeration points `r_k`, the exponent `q̂` assembled from
//! translated pieces of `h`, the map `ω` with `q̂ = q̂*∘ω`, and the pair
//! `q̄ = p'∘ω`, `p̄ = p∘ω`. Every inequality the construction relies on is
//! re-checked by [`ExponentPipeline::verify`].

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponent::Exponent;
use crate::scalar::{Extended, Real};
use crate::stepfn::{CellPermutation, GridFunction, Rearrangement, StepFunction};
use crate::vexl::{self, ModularEvaluator, DEFAULT_TOL};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_K: usize = 20;
pub const DEFAULT_RESOLUTION: usize = 1 << 16;
pub const DEFAULT_SUBCELLS: usize = 16;
const DEFAULT_WITNESSES: usize = 40;
const MONOTONE_SAMPLES: usize = 1024;
const EQUIMEASURE_THRESHOLDS: usize = 50;

/// A seed exponent together with its certificate along `witness_ts`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SeedExponent<T: Real> {
    pub p: Exponent<T>,
    /// Lower bound of `h(t)/ln(e/t)` along the witnesses.
    pub a: T,
    pub witness_ts: Vec<T>,
}

/// `2^{-1}, …, 2^{-40}`.
pub fn default_witnesses<T: Real>() -> Vec<T> {
    (1..=DEFAULT_WITNESSES).map(|k| T::lit(2f64.powi(-(k as i32)))).collect()
}

/// Checks `p(0) = 1`, `p > 1` and nondecreasing on `(0, 1]`, and that
/// `(p − 1)·ln(e/t)` stays bounded along the witnesses.
///
/// Boundedness is judged finitely: the seed is rejected when every value on
/// the second half of the witnesses exceeds every value on the first half
/// by more than 1%.
pub fn validate_seed<T: Real>(p: &Exponent<T>, a: Option<T>, witness_ts: &[T]) -> Result<SeedExponent<T>> {
    if witness_ts.len() < 2 {
        return Err(Error::InvalidArgument("at least two witnesses are required".into()));
    }
    for w in witness_ts.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::InvalidArgument(format!("witnesses must strictly decrease: {} then {}", w[0], w[1])));
        }
    }
    let (first, last) = (witness_ts[0], *witness_ts.last().unwrap());
    if !(first <= T::one() && last > T::zero()) {
        return Err(Error::InvalidArgument("witnesses must lie in (0, 1]".into()));
    }
    p.validate()?;

    let scaled: Vec<(T, T)> = witness_ts
        .iter()
        .map(|&t| (t, p.excess(t).finite().map_or(T::infinity(), |e| e * t.log_weight())))
        .collect();
    let half = scaled.len() / 2;
    let head_max = scaled[..half].iter().map(|v| v.1).fold(T::neg_infinity(), T::max);
    let (tail_t, tail_min) =
        scaled[half..].iter().copied().fold((last, T::infinity()), |acc, v| if v.1 < acc.1 { v } else { acc });
    if tail_min > head_max * T::lit(1.01) {
        return Err(Error::SeedRejected {
            t: tail_t.as_f64(),
            reason: format!("(p-1)ln(e/t) keeps growing along the witnesses ({tail_min} > {head_max})"),
        });
    }

    if p.excess(T::zero()) != Extended::zero() {
        return Err(Error::SeedRejected { t: 0.0, reason: format!("p(0) = {} but must be 1", p.eval(T::zero())) });
    }
    let mut pts: Vec<T> =
        (1..=MONOTONE_SAMPLES).map(|j| T::lit(j as f64 / MONOTONE_SAMPLES as f64)).collect();
    pts.extend_from_slice(witness_ts);
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    pts.dedup();
    let mut prev = Extended::zero();
    for &t in &pts {
        let e = p.excess(t);
        if !(e > Extended::zero()) {
            return Err(Error::SeedRejected { t: t.as_f64(), reason: "p(t) <= 1".into() });
        }
        if e < prev {
            return Err(Error::SeedRejected { t: t.as_f64(), reason: "p is not nondecreasing".into() });
        }
        prev = e;
    }

    let seed = SeedExponent { p: p.clone(), a: T::zero(), witness_ts: witness_ts.to_vec() };
    let h = build_h(&seed);
    let measured = witness_ts
        .iter()
        .map(|&t| h.eval(t).finite().unwrap_or(T::infinity()) / t.log_weight())
        .fold(T::infinity(), T::min);
    let a = match a {
        None => measured,
        Some(a) if a > T::zero() && measured >= a * (T::one() - T::lit(1e-12)) => a,
        Some(a) => {
            return Err(Error::SeedRejected {
                t: last.as_f64(),
                reason: format!("h(t)/ln(e/t) drops to {measured}, below a = {a}"),
            })
        }
    };
    Ok(SeedExponent { a, ..seed })
}

/// `h = min{p', ln(e/t)}`.
pub fn build_h<T: Real>(seed: &SeedExponent<T>) -> Exponent<T> {
    Exponent::min(seed.p.conjugate(), Exponent::log_weight())
}

/// Step minorant of `h` on `[lo, hi]` as `(left, value)` pieces.
///
/// Step-backed `h` is reproduced exactly. Otherwise `[lo, hi]` is cut into
/// `subcells` geometric pieces carrying the value of `h` at their right
/// end, which is the infimum there since `h` is nonincreasing.
pub fn exponent_bump<T: Real>(h: &Exponent<T>, lo: T, hi: T, subcells: usize) -> Vec<(T, Extended<T>)> {
    if !(hi > lo) {
        return Vec::new();
    }
    let two = T::lit(2.0);
    if h.is_piecewise_constant() {
        let mut cuts = vec![lo];
        cuts.extend(h.breakpoints().into_iter().filter(|&t| t > lo && t < hi));
        cuts.push(hi);
        return cuts.windows(2).map(|w| (w[0], h.eval((w[0] + w[1]) / two))).collect();
    }
    let n = subcells.max(1);
    let cuts: Vec<T> = (0..=n)
        .map(|i| {
            let s = T::lit(i as f64 / n as f64);
            if i == n {
                hi
            } else if lo > T::zero() {
                lo * (hi / lo).powf(s)
            } else {
                lo + (hi - lo) * s
            }
        })
        .collect();
    cuts.windows(2).map(|w| (w[0], h.eval(w[1]))).collect()
}

/// `∫ c^{bump}` over the pieces ending at `hi`.
fn bump_exp_integral<T: Real>(pieces: &[(T, Extended<T>)], hi: T, c: T) -> Extended<T> {
    let mut acc = Extended::zero();
    for (k, &(left, v)) in pieces.iter().enumerate() {
        let right = pieces.get(k + 1).map_or(hi, |p| p.0);
        acc = acc.add(match v {
            Extended::Finite(v) => Extended::Finite(c.powf(v) * (right - left)),
            Extended::PosInf => Extended::PosInf,
        });
    }
    acc
}

/// Picks `t_1 > … > t_{K+1}` with `a·ln(e/t_1) > 1`, `2t_{k+1} < t_k`,
/// `h(t_k)/ln(e/t_k) ≥ a` and `∫_{t_{k+1}}^{t_k} c^{h} ≥ 1`.
///
/// `t_1` is the first witness meeting the first and third conditions.
/// Candidates for `t_{k+1}` are `t_k·2^{-j}·(1 − 2^{-10})`, `j = 1, 2, …`;
/// the integral is checked on the step minorant from [`exponent_bump`], which
/// certifies it for `h` as well.
pub fn select_t_sequence<T: Real>(
    h: &Exponent<T>,
    a: T,
    c: T,
    k_max: usize,
    witnesses: &[T],
    subcells: usize,
) -> Result<Vec<T>> {
    if k_max == 0 {
        return Err(Error::InvalidArgument("K >= 1 required".into()));
    }
    if !(a > T::zero()) || !(c > (a.recip()).exp()) {
        return Err(Error::InvalidArgument(format!("need c > e^(1/a); got a = {a}, c = {c}")));
    }
    let ratio_ok = |t: T| match h.eval(t) {
        Extended::Finite(v) => v / t.log_weight() >= a,
        Extended::PosInf => true,
    };
    let t1 = witnesses
        .iter()
        .copied()
        .find(|&t| a * t.log_weight() > T::one() && ratio_ok(t))
        .ok_or_else(|| Error::SequenceSelection {
            t: 1.0,
            reason: "no witness satisfies a*ln(e/t) > 1 with h(t)/ln(e/t) >= a".into(),
        })?;
    let shrink = T::one() - T::lit(2f64.powi(-10));
    let mut ts = vec![t1];
    for _ in 0..k_max {
        let tk = *ts.last().unwrap();
        let mut cand = tk * shrink;
        let mut found = None;
        loop {
            cand = cand / T::lit(2.0);
            if !(cand >= T::min_positive_value()) {
                break;
            }
            if !ratio_ok(cand) {
                continue;
            }
            let bump = exponent_bump(h, cand, tk, subcells);
            if bump_exp_integral(&bump, tk, c) >= Extended::one() {
                found = Some(cand);
                break;
            }
        }
        match found {
            Some(t) => ts.push(t),
            None => {
                return Err(Error::SequenceSelection {
                    t: tk.as_f64(),
                    reason: "integral of c^h never reaches 1 before underflow; c is too small for a".into(),
                })
            }
        }
    }
    Ok(ts)
}

/// Column visited at step `k ≥ 1` of the boustrophedon walk over the
/// table whose every row is `(l_1, l_2, …)`.
///
/// Diagonal `d` holds `d` entries; even diagonals run from column `d` down
/// to 1, odd ones from 1 up to `d`.
pub fn diagonal_enumeration(k: usize) -> usize {
    assert!(k >= 1, "enumeration is 1-based");
    let (mut d, mut rem) = (1usize, k);
    while rem > d {
        rem -= d;
        d += 1;
    }
    if d % 2 == 0 {
        d + 1 - rem
    } else {
        rem
    }
}

/// `1/2, 1/4, 3/4, 1/8, 3/8, …`.
pub fn dyadic_sequence<T: Real>(n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n);
    let mut level = 1u32;
    while out.len() < n {
        let den = 2f64.powi(level as i32);
        let mut num = 1u64;
        while (num as f64) < den && out.len() < n {
            out.push(T::lit(num as f64 / den));
            num += 2;
        }
        level += 1;
    }
    out
}

/// `values` first (deduplicated, restricted to `(0, 1)`), then dyadics not
/// already present, until `n` points are available.
pub fn completed_points<T: Real>(values: &[T], n: usize) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(n);
    let inside = |v: &T| *v > T::zero() && *v < T::one();
    for v in values.iter().filter(|v| inside(v)) {
        if !out.contains(v) {
            out.push(*v);
        }
    }
    let mut level = 1;
    while out.len() < n {
        for d in dyadic_sequence::<T>((1usize << level) - 1) {
            if out.len() >= n {
                break;
            }
            if !out.contains(&d) {
                out.push(d);
            }
        }
        level += 1;
    }
    out.truncate(n.max(values.len().min(out.len())));
    out
}

/// `q_1, …, q_K` where `q_k` overwrites `E_k` with the bump of `Δ_k`
/// translated by `d_k`, clipped to `[0, 1]`.
pub fn build_q_recursion<T: Real>(
    bumps: &[Vec<(T, Extended<T>)>],
    windows: &[(T, T)],
    shifts: &[T],
) -> Vec<StepFunction<T>> {
    let mut q = StepFunction::zero();
    let mut out = Vec::with_capacity(bumps.len());
    for ((bump, &(lo, hi)), &d) in bumps.iter().zip(windows).zip(shifts) {
        if hi > lo && !bump.is_empty() && lo < T::one() {
            let pieces: Vec<(T, Extended<T>)> = bump.iter().map(|&(x, v)| (x + d, v)).collect();
            let mut pieces = pieces;
            pieces[0].0 = lo;
            q = q.splice(lo, hi.min(T::one()), &pieces);
        }
        out.push(q.clone());
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PipelineConfig<T: Real> {
    #[serde(rename = "K")]
    pub k: usize,
    pub resolution: usize,
    pub subcells: usize,
    pub a: Option<T>,
    pub c: Option<T>,
    #[serde(rename = "C")]
    pub big_c: Option<T>,
    /// Leading points of `{l_k}`; completed by dyadics.
    pub l: Vec<T>,
}

impl<T: Real> Default for PipelineConfig<T> {
    fn default() -> Self {
        Self { k: DEFAULT_K, resolution: DEFAULT_RESOLUTION, subcells: DEFAULT_SUBCELLS, a: None, c: None, big_c: None, l: Vec::new() }
    }
}

/// Everything the construction produces up to depth `K`.
#[derive(Clone, Debug)]
pub struct ExponentPipeline<T: Real> {
    pub seed: SeedExponent<T>,
    pub h: Exponent<T>,
    pub a: T,
    pub c: T,
    pub big_c: T,
    pub k: usize,
    pub subcells: usize,
    pub resolution: usize,
    /// `t_1, …, t_{K+1}`.
    pub t: Vec<T>,
    pub l: Vec<T>,
    pub r: Vec<T>,
    pub delta: Vec<(T, T)>,
    pub d: Vec<T>,
    /// `[r_k, r_k + t_k − t_{k+1}]` before clipping.
    pub e: Vec<(T, T)>,
    pub bumps: Vec<Vec<(T, Extended<T>)>>,
    pub q_steps: Vec<StepFunction<T>>,
    pub q_hat: StepFunction<T>,
    pub q_star: StepFunction<T>,
    pub omega_exact: Arc<Rearrangement<T>>,
    pub q_bar: Exponent<T>,
    pub p_bar: Exponent<T>,
    pub q_hat_grid: GridFunction<T>,
    pub q_star_grid: GridFunction<T>,
    /// Grid image of `ω`: cell `j` of `q̂` lands on cell `omega.apply(j)` of `q̂*`.
    pub omega: CellPermutation,
}

/// Inputs that fully determine a pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PipelineParts<T: Real> {
    pub a: T,
    pub c: T,
    #[serde(rename = "C")]
    pub big_c: T,
    pub t: Vec<T>,
    pub l: Vec<T>,
    pub resolution: usize,
    pub subcells: usize,
}

impl<T: Real> ExponentPipeline<T> {
    pub fn build(seed: SeedExponent<T>, config: &PipelineConfig<T>) -> Result<Self> {
        if config.k == 0 {
            return Err(Error::InvalidArgument("K >= 1 required".into()));
        }
        let h = build_h(&seed);
        let a = config.a.unwrap_or(seed.a * T::lit(0.9));
        let c = config.c.unwrap_or((a.recip()).exp() * T::lit(1.1));
        let t = select_t_sequence(&h, a, c, config.k, &seed.witness_ts, config.subcells)?;
        let l1 = t[0].log_weight();
        let big_c = config.big_c.unwrap_or(T::lit(1.1) * l1 / (a * l1 - T::one()));
        let l = completed_points(&config.l, diagonal_enumeration_width(config.k));
        let parts = PipelineParts { a, c, big_c, t, l, resolution: config.resolution, subcells: config.subcells };
        Self::assemble(seed, &parts)
    }

    /// Rebuilds every derived object from `parts` without judging them;
    /// violations surface in [`verify`](Self::verify).
    pub fn assemble(seed: SeedExponent<T>, parts: &PipelineParts<T>) -> Result<Self> {
        if parts.t.len() < 2 {
            return Err(Error::InvalidArgument("t needs at least two points (K >= 1)".into()));
        }
        if parts.resolution == 0 || !parts.resolution.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("resolution {} is not a power of two", parts.resolution)));
        }
        let k = parts.t.len() - 1;
        let width = diagonal_enumeration_width(k);
        if parts.l.len() < width {
            return Err(Error::InvalidArgument(format!("{} points l_k needed for K = {k}, got {}", width, parts.l.len())));
        }
        if let Some(bad) = parts.l.iter().find(|&&v| !(v > T::zero() && v < T::one())) {
            return Err(Error::InvalidArgument(format!("l_k = {bad} is outside (0, 1)")));
        }
        let h = build_h(&seed);
        let t = parts.t.clone();
        let r: Vec<T> = (1..=k).map(|i| parts.l[diagonal_enumeration(i) - 1]).collect();
        let delta: Vec<(T, T)> = (0..k).map(|i| (t[i + 1], t[i])).collect();
        let d: Vec<T> = (0..k).map(|i| r[i] - t[i + 1]).collect();
        let e: Vec<(T, T)> = (0..k).map(|i| (r[i], r[i] + (t[i] - t[i + 1]).max(T::zero()))).collect();
        let bumps: Vec<_> = delta.iter().map(|&(lo, hi)| exponent_bump(&h, lo, hi, parts.subcells)).collect();
        let q_steps = build_q_recursion(&bumps, &e, &d);
        let q_hat = q_steps.last().cloned().unwrap_or_else(StepFunction::zero);
        let (q_star, omega_exact) = q_hat.decreasing_rearrangement();
        let omega_exact = Arc::new(omega_exact);
        let q_bar = Exponent::rearranged(seed.p.conjugate(), omega_exact.clone());
        let p_bar = Exponent::rearranged(seed.p.clone(), omega_exact.clone());
        let q_hat_grid = q_hat.sample_midpoints(parts.resolution)?;
        let (q_star_grid, omega) = q_hat_grid.rearrange_decreasing();
        Ok(Self {
            seed,
            h,
            a: parts.a,
            c: parts.c,
            big_c: parts.big_c,
            k,
            subcells: parts.subcells,
            resolution: parts.resolution,
            t,
            l: parts.l.clone(),
            r,
            delta,
            d,
            e,
            bumps,
            q_steps,
            q_hat,
            q_star,
            omega_exact,
            q_bar,
            p_bar,
            q_hat_grid,
            q_star_grid,
            omega,
        })
    }

    pub fn parts(&self) -> PipelineParts<T> {
        PipelineParts {
            a: self.a,
            c: self.c,
            big_c: self.big_c,
            t: self.t.clone(),
            l: self.l.clone(),
            resolution: self.resolution,
            subcells: self.subcells,
        }
    }

    /// `E_k ∩ [0, 1]`.
    pub fn window(&self, k: usize) -> (T, T) {
        let (lo, hi) = self.e[k - 1];
        (lo.min(T::one()), hi.min(T::one()))
    }

    pub fn is_clipped(&self, k: usize) -> bool {
        self.e[k - 1].1 > T::one()
    }

    /// `Σ a_k χ_{E_k}`.
    pub fn window_sum(&self, coeffs: &[T]) -> Result<StepFunction<T>> {
        if coeffs.len() > self.k {
            return Err(Error::InvalidArgument(format!("{} coefficients for K = {}", coeffs.len(), self.k)));
        }
        let mut f = StepFunction::zero();
        for (i, &a) in coeffs.iter().enumerate() {
            let (lo, hi) = self.window(i + 1);
            if a != T::zero() && hi > lo {
                f = f.add(&StepFunction::scaled_indicator(lo, hi, a));
            }
        }
        Ok(f)
    }

    /// Step exponent `1 + C/ln(e/t_k)` on `E_k` (later windows win) and
    /// `p(1)` elsewhere; dominates `p̄` everywhere.
    pub fn majorant(&self) -> Exponent<T> {
        let top = self.seed.p.eval(T::one());
        let mut m = StepFunction::constant_ext(top);
        for k in 1..=self.k {
            let (lo, hi) = self.window(k);
            if hi > lo {
                let v = T::one() + self.big_c / self.t[k - 1].log_weight();
                m = m.splice(lo, hi, &[(lo, Extended::Finite(v))]);
            }
        }
        Exponent::Step(m)
    }

    /// Both sides of `‖Σ a_k χ_{E_k}‖_{p̄} ≍ ‖Σ a_k χ_{E_k}‖_1`.
    pub fn verify_norm_equivalence(&self, coeffs: &[T]) -> Result<NormEquivalence<T>> {
        let f = self.window_sum(coeffs)?;
        let lhs = vexl::luxemburg_norm(&f, &self.p_bar, T::lit(DEFAULT_TOL))?.value;
        let rhs = f.abs().integrate()?;
        let majorant = T::lit(2.0) * vexl::luxemburg_norm(&f, &self.majorant(), T::lit(DEFAULT_TOL))?.value;
        let slack = T::one() + T::lit(1e-8);
        Ok(NormEquivalence {
            lhs,
            rhs,
            ratio: (rhs > T::zero()).then(|| lhs / rhs),
            majorant,
            lower_holds: rhs <= T::lit(2.0) * lhs * slack,
            upper_holds: lhs <= majorant * slack,
        })
    }

    /// Extremes of `base∘ω` over `[lo, hi)` for a monotone `base`, read off
    /// at the translated ends of each piece.
    fn bar_pieces(&self, lo: T, hi: T) -> Vec<(T, T, T, T)> {
        let segs = self.omega_exact.segments();
        let first = self.omega_exact.segment_index(lo);
        segs[first..]
            .iter()
            .take_while(|s| s.src_left < hi)
            .filter_map(|s| {
                let (a, b) = (s.src_left.max(lo), s.src_right.min(hi));
                (b > a).then(|| (a, b, s.dst_left + (a - s.src_left), s.dst_left + (b - s.src_left)))
            })
            .collect()
    }

    pub fn verify(&self) -> VerificationTable {
        let mut rows = Vec::new();
        let one = T::one();
        let two = T::lit(2.0);
        let k = self.k;
        let ln = |t: T| t.log_weight();

        let mut row = Row::new("1 < a*ln(e/t_1)");
        row.check(self.a * ln(self.t[0]) > one, || format!("a*ln(e/t_1) = {}", self.a * ln(self.t[0])));
        rows.push(row.finish());

        let mut row = Row::new("2t_{k+1} < t_k");
        for i in 0..k {
            row.check(two * self.t[i + 1] < self.t[i], || format!("k = {}: t_k = {}, t_(k+1) = {}", i + 1, self.t[i], self.t[i + 1]));
        }
        rows.push(row.finish());

        let mut row = Row::new("int_{t_{k+1}}^{t_k} c^h >= 1");
        for i in 0..k {
            let (lo, hi) = self.delta[i];
            let v = if hi > lo { vexl::exp_integral(&self.h, self.c, lo, hi) } else { Extended::zero() };
            row.check(v >= Extended::one(), || format!("k = {}: integral = {v}", i + 1));
        }
        rows.push(row.finish());

        let mut row = Row::new("c > e^(1/a)");
        row.check(self.a > T::zero() && self.c > self.a.recip().exp(), || format!("a = {}, c = {}", self.a, self.c));
        rows.push(row.finish());

        let mut row = Row::new("h(t_k)/ln(e/t_k) >= a");
        for (i, &t) in self.t.iter().enumerate() {
            let ratio = self.h.eval(t).finite().map_or(T::infinity(), |v| v / ln(t));
            row.check(ratio >= self.a, || format!("k = {}: ratio = {ratio}", i + 1));
        }
        rows.push(row.finish());

        let mut row = Row::new("q_k <= q_{k+1}");
        for i in 1..self.q_steps.len() {
            let (prev, next) = (&self.q_steps[i - 1], &self.q_steps[i]);
            let ok = prev.zip_with(next, |x, y| if x <= y { Extended::zero() } else { Extended::one() }).is_zero();
            row.check(ok, || format!("k = {}", i));
        }
        rows.push(row.finish());

        let mut row = Row::new("int_0^1 q_k <= 2");
        for (i, q) in self.q_steps.iter().enumerate() {
            let v = q.integrate().unwrap_or(T::infinity());
            row.check(v <= two, || format!("k = {}: integral = {v}", i + 1));
        }
        rows.push(row.finish());

        let mut row = Row::new("q_hat >= a*ln(e/t_k) on E_k");
        for kk in 1..=k {
            let (lo, hi) = self.window(kk);
            let bound = Extended::Finite(self.a * ln(self.t[kk - 1]));
            for cell in self.q_hat.cells().filter(|c| c.right > lo && c.left < hi) {
                row.check(cell.value >= bound, || format!("k = {kk}: q_hat = {} on [{}, {})", cell.value, cell.left, cell.right));
            }
        }
        rows.push(row.finish());

        let conj = self.seed.p.conjugate();
        let mut row = Row::new("q_hat* <= h <= p'");
        for cell in self.q_star.cells().filter(|c| !c.value.is_zero()) {
            let (hv, pv) = (self.h.eval(cell.right), conj.eval(cell.right));
            row.check(cell.value <= hv && hv <= pv, || format!("at t = {}: q* = {}, h = {hv}, p' = {pv}", cell.right, cell.value));
        }
        rows.push(row.finish());

        let mut row = Row::new("q_hat <= q_bar");
        for cell in self.q_hat.cells().filter(|c| !c.value.is_zero()) {
            for (_, _, _, u1) in self.bar_pieces(cell.left, cell.right) {
                let qv = conj.eval(u1);
                row.check(cell.value <= qv, || format!("q_hat = {} > q_bar = {qv} near t = {}", cell.value, cell.left));
            }
        }
        rows.push(row.finish());

        let mut row = Row::new("omega is a measure-preserving bijection");
        row.check(self.omega.is_bijection(), || "grid permutation is not a bijection".into());
        row.check(self.omega_exact.is_measure_preserving(T::lit(1e-9)), || "segments do not tile [0, 1]".into());
        let mut worst = T::zero();
        for j in 0..self.resolution {
            let mid = GridFunction::<T>::midpoint_of(j, self.resolution);
            let via = self.q_star.eval(self.omega_exact.apply(mid));
            if via != self.q_hat.eval(mid) {
                worst = worst + one;
            }
        }
        row.check(worst <= T::lit(self.q_hat.num_cells() as f64), || format!("q_hat != q_hat*(omega) at {worst} midpoints"));
        rows.push(row.finish());

        let mut row = Row::new("m{q_hat > s} = m{q_hat* > s}");
        let top = self.q_hat_grid.max();
        for i in 0..EQUIMEASURE_THRESHOLDS {
            let s = top * T::lit(i as f64 / EQUIMEASURE_THRESHOLDS as f64);
            let (g1, g2) = (self.q_hat_grid.level_set_measure(s), self.q_star_grid.level_set_measure(s));
            let (e1, e2) = (self.q_hat.level_set_measure(s), self.q_star.level_set_measure(s));
            let cell = T::lit(1.0 / self.resolution as f64);
            row.check((g1 - g2).abs() <= cell && (e1 - e2).abs() <= T::lit(1e-12), || format!("s = {s}: grid {g1} vs {g2}, exact {e1} vs {e2}"));
        }
        rows.push(row.finish());

        let mut row = Row::new("grid q_hat* <= grid p'");
        let slack = 1;
        for (j, &v) in self.q_star_grid.samples().iter().enumerate() {
            if j >= slack {
                let pv = conj.eval(GridFunction::<T>::midpoint_of(j - slack, self.resolution));
                row.check(Extended::Finite(v) <= pv, || format!("cell {j}: {v} > {pv} with {slack}-cell slack"));
            }
        }
        rows.push(row.finish());

        let mut row = Row::new("C > ln(e/t_1)/(a*ln(e/t_1) - 1)");
        let l1 = ln(self.t[0]);
        let need = l1 / (self.a * l1 - one);
        row.check(self.a * l1 > one && self.big_c > need, || format!("C = {} but bound is {need}", self.big_c));
        rows.push(row.finish());

        let mut row = Row::new("1 < p_bar <= 1 + C/ln(e/t_k) on E_k");
        for kk in 1..=k {
            let (lo, hi) = self.window(kk);
            let bound = self.big_c / ln(self.t[kk - 1]);
            for (_, _, u0, u1) in self.bar_pieces(lo, hi) {
                let sup = self.seed.p.excess(u1);
                let inner = self.seed.p.excess((u0 + u1) / two);
                row.check(sup <= Extended::Finite(bound) && inner > Extended::zero(), || {
                    format!("k = {kk}: p_bar - 1 up to {sup} vs {bound}")
                });
            }
        }
        rows.push(row.finish());

        let mut row = Row::new("1/2 |E_k| <= ||chi_E_k||_p_bar <= 2 ||chi_E_k||_(1+C/ln(e/t_k))");
        for kk in 1..=k {
            let (lo, hi) = self.window(kk);
            if !(hi > lo) {
                row.check(false, || format!("k = {kk}: empty window"));
                continue;
            }
            let m = hi - lo;
            let chi = StepFunction::indicator(lo, hi);
            let norm = ModularEvaluator::new(&chi, &self.p_bar);
            let n = vexl::norm_with(&norm, &chi, T::lit(DEFAULT_TOL)).map(|r| r.value).unwrap_or(T::nan());
            let upper = two * m.powf(T::one() / (T::one() + self.big_c / ln(self.t[kk - 1])));
            let s = T::one() + T::lit(1e-8);
            row.check(m <= two * n * s && n <= upper * s, || format!("k = {kk}: {} <= {n} <= {upper}", m / two));
        }
        rows.push(row.finish());

        let mut row = Row::new("int_E_k c^q_bar >= 1");
        for kk in 1..=k {
            if self.is_clipped(kk) {
                continue;
            }
            let (lo, hi) = self.window(kk);
            let v = if hi > lo { vexl::exp_integral(&self.q_bar, self.c, lo, hi) } else { Extended::zero() };
            row.check(v >= Extended::one(), || format!("k = {kk}: integral = {v}"));
        }
        rows.push(row.finish());

        let mut row = Row::new("1/2 ||sum chi_E_k||_1 <= ||sum chi_E_k||_p_bar <= 2 ||sum chi_E_k||_P");
        match self.verify_norm_equivalence(&vec![one; k]) {
            Ok(ne) => row.check(ne.lower_holds && ne.upper_holds, || format!("{} <= {} <= {}", ne.rhs / two, ne.lhs, ne.majorant)),
            Err(e) => row.check(false, || e.to_string()),
        }
        rows.push(row.finish());

        VerificationTable { k, rows }
    }

    pub fn to_file(&self) -> Result<PipelineFile<T>> {
        let q_bar_grid = self.bar_grid(&self.seed.p.conjugate())?;
        let p_bar_grid = self.bar_grid(&self.seed.p)?;
        Ok(PipelineFile {
            format_version: FORMAT_VERSION,
            seed: self.seed.clone(),
            h: self.h.clone(),
            k: self.k,
            parts: self.parts(),
            r: self.r.clone(),
            delta: self.delta.clone(),
            d: self.d.clone(),
            e: self.e.clone(),
            clipped: (1..=self.k).map(|k| self.is_clipped(k)).collect(),
            q_hat: self.q_hat.clone(),
            q_bar: self.q_bar.clone(),
            p_bar: self.p_bar.clone(),
            omega: self.omega.map().to_vec(),
            q_bar_grid,
            p_bar_grid,
        })
    }

    /// `base` at the midpoint of cell `ω(j)` for each cell `j`.
    fn bar_grid(&self, base: &Exponent<T>) -> Result<GridFunction<T>> {
        let m = self.resolution;
        let samples = (0..m)
            .map(|j| base.eval(GridFunction::<T>::midpoint_of(self.omega.apply(j), m)).finite().unwrap_or(T::max_value()))
            .collect();
        GridFunction::new(m, samples)
    }
}

fn diagonal_enumeration_width(k: usize) -> usize {
    (1..=k).map(diagonal_enumeration).max().unwrap_or(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NormEquivalence<T> {
    /// `‖f‖_{p̄}`.
    pub lhs: T,
    /// `‖f‖_1`.
    pub rhs: T,
    pub ratio: Option<T>,
    /// `2‖f‖_P` for the step majorant `P`.
    pub majorant: T,
    pub lower_holds: bool,
    pub upper_holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationRow {
    pub check: String,
    pub cases: usize,
    pub passed: bool,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationTable {
    #[serde(rename = "K")]
    pub k: usize,
    pub rows: Vec<VerificationRow>,
}

impl VerificationTable {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &VerificationRow> {
        self.rows.iter().filter(|r| !r.passed)
    }

    pub fn row(&self, check: &str) -> Option<&VerificationRow> {
        self.rows.iter().find(|r| r.check == check)
    }

    /// One `PASS`/`FAIL` line per check.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let status = if r.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("{status}  {}  ({} cases, verified up to K = {})\n", r.check, r.cases, self.k));
            for f in r.failures.iter().take(3) {
                out.push_str(&format!("      {f}\n"));
            }
        }
        out
    }
}

struct Row {
    check: &'static str,
    cases: usize,
    failures: Vec<String>,
}

impl Row {
    fn new(check: &'static str) -> Self {
        Self { check, cases: 0, failures: Vec::new() }
    }

    fn check<F: FnOnce() -> String>(&mut self, ok: bool, detail: F) {
        self.cases += 1;
        if !ok && self.failures.len() < 16 {
            self.failures.push(detail());
        }
    }

    fn finish(self) -> VerificationRow {
        VerificationRow { check: self.check.to_string(), cases: self.cases, passed: self.failures.is_empty(), failures: self.failures }
    }
}

/// On-disk form of a pipeline.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PipelineFile<T: Real> {
    pub format_version: u32,
    pub seed: SeedExponent<T>,
    pub h: Exponent<T>,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(flatten)]
    pub parts: PipelineParts<T>,
    pub r: Vec<T>,
    pub delta: Vec<(T, T)>,
    pub d: Vec<T>,
    #[serde(rename = "E")]
    pub e: Vec<(T, T)>,
    pub clipped: Vec<bool>,
    pub q_hat: StepFunction<T>,
    pub q_bar: Exponent<T>,
    pub p_bar: Exponent<T>,
    pub omega: Vec<usize>,
    pub q_bar_grid: GridFunction<T>,
    pub p_bar_grid: GridFunction<T>,
}

impl<T: Real> PipelineFile<T> {
    /// Rebuilds from the stored seed and parts, verifies, and adds a row
    /// comparing the stored derived fields with the rebuild.
    pub fn check(&self) -> Result<(ExponentPipeline<T>, VerificationTable)> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!("unsupported format_version {}", self.format_version)));
        }
        let pipeline = ExponentPipeline::assemble(self.seed.clone(), &self.parts)?;
        let mut table = pipeline.verify();
        let mut row = Row::new("stored fields match reconstruction");
        row.check(self.k == pipeline.k, || format!("K = {} but t has {} points", self.k, pipeline.t.len()));
        row.check(self.r == pipeline.r, || "r differs".into());
        row.check(self.e == pipeline.e, || "E differs".into());
        row.check(self.delta == pipeline.delta, || "delta differs".into());
        row.check(self.q_hat == pipeline.q_hat, || "q_hat differs".into());
        row.check(self.omega == pipeline.omega.map(), || "omega differs".into());
        table.rows.push(row.finish());
        Ok((pipeline, table))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_seed() -> SeedExponent<f64> {
        validate_seed(&Exponent::log_conjugate(1.0).unwrap(), None, &default_witnesses()).unwrap()
    }

    #[test]
    fn diagonal_walk() {
        let cols: Vec<usize> = (1..=10).map(diagonal_enumeration).collect();
        assert_eq!(cols, vec![1, 2, 1, 1, 2, 3, 4, 3, 2, 1]);
        let ones: Vec<usize> = (1..=10).filter(|&k| diagonal_enumeration(k) == 1).collect();
        assert_eq!(ones, vec![1, 3, 4, 10]);
    }

    #[test]
    fn dyadics() {
        assert_eq!(dyadic_sequence::<f64>(7), vec![0.5, 0.25, 0.75, 0.125, 0.375, 0.625, 0.875]);
        assert_eq!(completed_points(&[0.3, 0.5, 1.5, 0.3], 4), vec![0.3, 0.5, 0.25, 0.75]);
    }

    #[test]
    fn seeds() {
        let s = log_seed();
        assert!((s.a - 1.0).abs() < 1e-12);
        let lin = Exponent::named(crate::NamedExponent::Linear { slope: 1.0 }).unwrap();
        assert!(validate_seed(&lin, Some(1.0), &default_witnesses()).is_ok());
        let two = Exponent::constant(2.0).unwrap();
        assert!(matches!(validate_seed(&two, None, &default_witnesses()), Err(Error::SeedRejected { .. })));
        let p = Exponent::log_conjugate(1.0).unwrap();
        assert!(validate_seed(&p, None, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn h_of_log_seed_is_log() {
        let h = build_h(&log_seed());
        for j in 1..=1000 {
            let t = j as f64 / 1000.0;
            let v = h.eval(t).finite().unwrap();
            assert!((v - t.log_weight()).abs() <= 1e-12 * v);
        }
        assert_eq!(h.eval(1.0), Extended::Finite(1.0));
    }

    #[test]
    fn bump_is_a_minorant() {
        let h = build_h(&log_seed());
        let bump = exponent_bump(&h, 0.125, 0.25, 16);
        assert_eq!(bump.len(), 16);
        for (i, &(left, v)) in bump.iter().enumerate() {
            let right = bump.get(i + 1).map_or(0.25, |p| p.0);
            assert!(v <= h.eval(right) && v <= h.eval(left));
        }
    }

    #[test]
    fn k1_base_case() {
        let seed = log_seed();
        let cfg = PipelineConfig { k: 1, resolution: 1 << 10, ..Default::default() };
        let p = ExponentPipeline::build(seed, &cfg).unwrap();
        let (lo, hi) = p.window(1);
        assert_eq!(lo, 0.5);
        let mid = (lo + hi) / 2.0;
        let expect = p.bumps[0].iter().rev().find(|b| b.0 + p.d[0] <= mid).unwrap().1;
        assert_eq!(p.q_hat.eval(mid), expect);
        assert!(p.q_hat.eval(0.25).is_zero() && p.q_hat.eval(hi + 0.01).is_zero());
    }

    #[test]
    fn small_pipeline_verifies() {
        let cfg = PipelineConfig { k: 6, resolution: 1 << 12, ..Default::default() };
        let p = ExponentPipeline::build(log_seed(), &cfg).unwrap();
        let table = p.verify();
        assert!(table.all_passed(), "{}", table.render());
    }

    #[test]
    fn zero_k_rejected() {
        let cfg = PipelineConfig { k: 0, ..Default::default() };
        assert!(ExponentPipeline::build(log_seed(), &cfg).is_err());
    }
}
