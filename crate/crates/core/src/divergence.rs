//! θ configurations, kernel sums, the atoms `f_N`, scaled blocks and
//! their truncated aggregation on the windows of an [`ExponentPipeline`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ons::{fourier_coefficients, lebesgue_constant, prefix_sup, star_maximal, OrthonormalSystem, SystemKind};
use crate::pipeline::ExponentPipeline;
use crate::scalar::{Extended, Real};
use crate::stepfn::{GridFunction, StepFunction};
use crate::vexl::{luxemburg_norm, DEFAULT_TOL};

/// Sampled θ are rejected when they are multiples of `2^{-40}`.
const DYADIC_EXCLUSION_BITS: i32 = 40;
const MAX_HALVINGS: usize = 80;

/// Points `θ_i` with widths `h_i`; the atom of `f_N` sits on
/// `(θ_i, θ_i + h_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ThetaConfig<T> {
    pub thetas: Vec<T>,
    pub widths: Vec<T>,
}

impl<T: Real> ThetaConfig<T> {
    pub fn new(thetas: Vec<T>, widths: Vec<T>) -> Result<Self> {
        if thetas.is_empty() || thetas.len() != widths.len() {
            return Err(Error::InvalidArgument(format!("{} thetas but {} widths", thetas.len(), widths.len())));
        }
        for (&th, &h) in thetas.iter().zip(&widths) {
            if !(th > T::zero() && th < T::one() && h > T::zero() && th + h <= T::one()) {
                return Err(Error::InvalidArgument(format!("interval ({th}, {th} + {h}) is not inside (0, 1)")));
            }
        }
        let mut sorted = thetas.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("thetas must be distinct".into()));
        }
        Ok(Self { thetas, widths })
    }

    /// Every atom gets width `h`.
    pub fn uniform(thetas: Vec<T>, h: T) -> Result<Self> {
        let widths = vec![h; thetas.len()];
        Self::new(thetas, widths)
    }

    pub fn n(&self) -> usize {
        self.thetas.len()
    }

    pub fn max_width(&self) -> T {
        self.widths.iter().copied().fold(T::zero(), T::max)
    }

    pub fn scaled_widths(&self, factor: T) -> Result<Self> {
        Self::new(self.thetas.clone(), self.widths.iter().map(|&h| h * factor).collect())
    }

    /// Intervals sorted by left end.
    pub fn intervals(&self) -> Vec<(T, T)> {
        let mut iv: Vec<(T, T)> = self.thetas.iter().zip(&self.widths).map(|(&a, &h)| (a, a + h)).collect();
        iv.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(std::cmp::Ordering::Equal));
        iv
    }
}

/// `b_n = (1/N) Σ_i φ_n(θ_i)` for `n ≤ modes`.
pub fn theta_average<T: Real>(system: &dyn OrthonormalSystem<T>, thetas: &[T], modes: usize) -> Vec<T> {
    let mut out = vec![T::zero(); modes];
    let mut buf = vec![T::zero(); modes];
    for &th in thetas {
        system.eval_prefix(th, &mut buf);
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = *o + *b;
        }
    }
    let n = T::lit(thetas.len() as f64);
    out.iter_mut().for_each(|v| *v = *v / n);
    out
}

/// `sup_{m≤max_m} Σ_{n≤m} φ_n(t)·b_n` on the grid.
pub fn kernel_sum_grid<T: Real>(
    system: &dyn OrthonormalSystem<T>,
    thetas: &[T],
    max_m: usize,
    resolution: usize,
) -> Result<GridFunction<T>> {
    if max_m == 0 || thetas.is_empty() {
        return Err(Error::InvalidArgument("kernel sums need max_m >= 1 and at least one theta".into()));
    }
    let b = theta_average(system, thetas, max_m);
    prefix_sup(&b, system, max_m, resolution)
}

/// Largest `λ` with `m{f > λ'} ≥ fraction` for every `λ' < λ`.
pub fn exceedance_level<T: Real>(f: &GridFunction<T>, fraction: T) -> T {
    let mut s = f.samples().to_vec();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let count = (fraction * T::lit(s.len() as f64)).ceil().to_usize().unwrap_or(1).clamp(1, s.len());
    s[count - 1]
}

/// `(λ, m{f > λ})` at `points` evenly spaced levels across the range of `f`.
pub fn exceedance_curve<T: Real>(f: &GridFunction<T>, points: usize) -> Vec<(T, T)> {
    let lo = f.samples().iter().copied().fold(T::infinity(), T::min);
    let hi = f.max();
    let n = points.max(2);
    (0..n)
        .map(|j| {
            let level = lo + (hi - lo) * T::lit(j as f64 / (n - 1) as f64);
            (level, f.level_set_measure(level))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CandidateScore<T> {
    pub index: usize,
    /// `m{kernel sum > target}`.
    pub score: T,
    /// Exceedance level at the configured measure fraction.
    pub level: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ThetaSearch<T> {
    pub thetas: Vec<T>,
    pub exceedance_measure: T,
    pub best_index: usize,
    /// Highest exceedance level over all candidates.
    pub best_level: T,
    pub candidates: Vec<CandidateScore<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSettings {
    pub n: usize,
    pub s0: usize,
    pub budget: usize,
    pub resolution: usize,
    pub rng_seed: u64,
    pub level_fraction: f64,
}

fn sample_theta<R: Rng>(rng: &mut R, resolution: usize) -> f64 {
    let dyadic = 2f64.powi(DYADIC_EXCLUSION_BITS);
    loop {
        let u: f64 = rng.gen();
        if u > 0.0 && (u * dyadic).fract() != 0.0 && (u * resolution as f64).fract() != 0.0 {
            return u;
        }
    }
}

/// Candidate θ-tuples in stream order; a larger budget extends the list.
pub fn theta_candidates<T: Real>(n: usize, budget: usize, rng_seed: u64, resolution: usize) -> Vec<Vec<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    (0..budget).map(|_| (0..n).map(|_| T::lit(sample_theta(&mut rng, resolution))).collect()).collect()
}

/// Random search for θ maximizing `m{kernel sum > target_level}` with
/// `max_m = s0·N`; ties go to the earliest candidate.
pub fn search_theta<T: Real>(
    system: &dyn OrthonormalSystem<T>,
    settings: &SearchSettings,
    target_level: T,
) -> Result<ThetaSearch<T>> {
    if settings.budget == 0 || settings.n == 0 || settings.s0 == 0 {
        return Err(Error::InvalidArgument("budget, N and s0 must be positive".into()));
    }
    let max_m = settings.s0 * settings.n;
    let fraction = T::lit(settings.level_fraction);
    let tuples = theta_candidates::<T>(settings.n, settings.budget, settings.rng_seed, settings.resolution);
    let candidates = tuples
        .par_iter()
        .enumerate()
        .map(|(index, thetas)| {
            let grid = kernel_sum_grid(system, thetas, max_m, settings.resolution)?;
            Ok(CandidateScore { index, score: grid.level_set_measure(target_level), level: exceedance_level(&grid, fraction) })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = candidates.iter().fold(&candidates[0], |b, c| if c.score > b.score { c } else { b });
    let best_level = candidates.iter().map(|c| c.level).fold(T::neg_infinity(), T::max);
    Ok(ThetaSearch {
        thetas: tuples[best.index].clone(),
        exceedance_measure: best.score,
        best_index: best.index,
        best_level,
        candidates,
    })
}

/// `f_N = (1/N) Σ h_i^{-1} χ_{(θ_i, θ_i+h_i)}`; intervals must be disjoint.
pub fn make_fn<T: Real>(config: &ThetaConfig<T>) -> Result<StepFunction<T>> {
    let iv = config.intervals();
    for w in iv.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(Error::OverlappingIntervals(w[0].0.as_f64(), w[0].1.as_f64(), w[1].0.as_f64(), w[1].1.as_f64()));
        }
    }
    let n = T::lit(config.n() as f64);
    let mut bps = vec![T::zero()];
    let mut vals = Vec::new();
    for (a, b) in iv {
        if a > *bps.last().unwrap() {
            bps.push(a);
            vals.push(Extended::zero());
        }
        bps.push(b);
        vals.push(Extended::Finite(T::one() / (n * (b - a))));
    }
    if *bps.last().unwrap() < T::one() {
        bps.push(T::one());
        vals.push(Extended::zero());
    }
    StepFunction::new(bps, vals)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LimitRow<T> {
    pub max_width: T,
    /// `max_{n≤modes} |c_n(f_N) − b_n|`.
    pub coefficient_deviation: T,
    /// `‖S_m(f_N) − Σ_{n≤m} b_n φ_n‖_2` with `m = modes`, by Parseval.
    pub l2_deviation: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LimitCheck<T> {
    pub modes: usize,
    pub rows: Vec<LimitRow<T>>,
    /// Each step is at most 10% above the previous one, for both columns.
    pub decreasing: bool,
}

fn limit_row<T: Real>(system: &dyn OrthonormalSystem<T>, config: &ThetaConfig<T>, target: &[T]) -> Result<LimitRow<T>> {
    let f = make_fn(config)?;
    let c = fourier_coefficients(&f, system, target.len())?;
    let (mut worst, mut sq) = (T::zero(), T::zero());
    for (x, y) in c.iter().zip(target) {
        let d = (*x - *y).abs();
        worst = worst.max(d);
        sq = sq + d * d;
    }
    Ok(LimitRow { max_width: config.max_width(), coefficient_deviation: worst, l2_deviation: sq.sqrt() })
}

/// Tabulates how `c_n(f_N)` approaches `(1/N) Σ φ_n(θ_i)` as all widths halve.
pub fn coefficient_limit_check<T: Real>(
    system: &dyn OrthonormalSystem<T>,
    config: &ThetaConfig<T>,
    shrink_steps: usize,
    modes: usize,
) -> Result<LimitCheck<T>> {
    if shrink_steps < 2 {
        return Err(Error::InvalidArgument("shrink_steps >= 2 required".into()));
    }
    let target = theta_average(system, &config.thetas, modes);
    let mut rows = Vec::with_capacity(shrink_steps);
    let mut cfg = config.clone();
    for _ in 0..shrink_steps {
        rows.push(limit_row(system, &cfg, &target)?);
        cfg = cfg.scaled_widths(T::lit(0.5))?;
    }
    // Deviations at rounding level count as converged.
    let floor = T::epsilon() * T::lit(1024.0 * modes as f64);
    let slack = T::lit(1.1);
    let decreasing = rows.windows(2).all(|w| {
        w[1].coefficient_deviation <= w[0].coefficient_deviation * slack + floor
            && w[1].l2_deviation <= w[0].l2_deviation * slack + floor
    });
    let stuck = rows.windows(2).all(|w| w[1].l2_deviation >= w[0].l2_deviation) && rows[0].l2_deviation > floor;
    if stuck {
        return Err(Error::NonConvergentCoefficients(format!(
            "L2 deviation went from {} to {}",
            rows[0].l2_deviation,
            rows.last().unwrap().l2_deviation
        )));
    }
    Ok(LimitCheck { modes, rows, decreasing })
}

/// Halves a common width until the L² deviation over `modes` modes is at
/// most `target`.
pub fn find_h0<T: Real>(system: &dyn OrthonormalSystem<T>, thetas: &[T], modes: usize, target: T) -> Result<T> {
    let mut sorted = thetas.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let gap = sorted.windows(2).map(|w| w[1] - w[0]).fold(T::one() - *sorted.last().unwrap(), T::min);
    let mut h = gap / T::lit(2.0);
    let b = theta_average(system, thetas, modes);
    for _ in 0..MAX_HALVINGS {
        let cfg = ThetaConfig::uniform(thetas.to_vec(), h)?;
        if limit_row(system, &cfg, &b)?.l2_deviation <= target {
            return Ok(h);
        }
        h = h / T::lit(2.0);
    }
    Err(Error::NonConvergentCoefficients(format!("L2 deviation stays above {target} down to width {h}")))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DivergenceBlock<T> {
    pub i: u32,
    pub n: usize,
    pub config: ThetaConfig<T>,
    pub f_n: StepFunction<T>,
    /// `(ln N)^{-1/2} f_N`.
    pub g: StepFunction<T>,
    /// `2^i`.
    pub threshold: T,
    pub max_m: usize,
    /// `m{S*(g) > 2^i}` with `S*` truncated at `max_m`.
    pub alpha_measured: T,
}

/// Smallest `N` with `(ln N)^{-1/2} < 2^{-i}`, i.e. `⌊e^{4^i}⌋ + 1`.
pub fn block_min_n(i: u32) -> f64 {
    4f64.powi(i as i32).exp().floor() + 1.0
}

pub fn make_block<T: Real>(
    i: u32,
    config: &ThetaConfig<T>,
    system: &dyn OrthonormalSystem<T>,
    s0: usize,
    resolution: usize,
) -> Result<DivergenceBlock<T>> {
    let n = config.n();
    let min_n = block_min_n(i);
    if (n as f64) < min_n {
        return Err(Error::BlockNormPrecondition { i, n, min_n });
    }
    let f_n = make_fn(config)?;
    let scale = T::lit(n as f64).ln().sqrt().recip();
    let g = f_n.scale(scale)?;
    let max_m = s0 * n;
    let c = fourier_coefficients(&g, system, max_m)?;
    let star = star_maximal(&c, system, max_m, resolution)?;
    let threshold = T::lit(2f64.powi(i as i32));
    Ok(DivergenceBlock { i, n, config: config.clone(), f_n, g, threshold, max_m, alpha_measured: star.level_set_measure(threshold) })
}

/// Puts each `θ_i` on a window `E_k` with `r_k = θ_i`, `E_k ⊂ [0, 1]`,
/// `m(E_k) < h0` and no overlap with windows already taken; the largest
/// admissible window wins.
pub fn place_config<T: Real>(pipeline: &ExponentPipeline<T>, thetas: &[T], h0: T) -> Result<ThetaConfig<T>> {
    let mut taken: Vec<(T, T)> = Vec::new();
    let mut widths = Vec::with_capacity(thetas.len());
    let mut missing = Vec::new();
    for &th in thetas {
        let hit = (1..=pipeline.k).find(|&k| {
            let (lo, hi) = pipeline.e[k - 1];
            pipeline.r[k - 1] == th
                && !pipeline.is_clipped(k)
                && hi - lo < h0
                && hi > lo
                && taken.iter().all(|&(a, b)| hi <= a || lo >= b)
        });
        match hit {
            Some(k) => {
                let (lo, hi) = pipeline.e[k - 1];
                taken.push((lo, hi));
                widths.push(hi - lo);
            }
            None => missing.push((th.as_f64(), (th + h0).as_f64())),
        }
    }
    if !missing.is_empty() {
        return Err(Error::UnalignedBlocks(missing));
    }
    ThetaConfig::new(thetas.to_vec(), widths)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Aggregation<T> {
    /// `(i, N)` per block.
    pub blocks: Vec<(u32, usize)>,
    pub l1_norm: T,
    pub p_bar_norm: T,
    pub ratio: Option<T>,
    pub max_m: usize,
    /// `(2^i, m{S*(f) > 2^i})` for each distinct block threshold.
    pub exceedance: Vec<(T, T)>,
}

/// `f = Σ g_i`, after checking that every atom sits exactly on an
/// unclipped window `E_k` of `pipeline`.
pub fn aggregate<T: Real>(
    blocks: &[DivergenceBlock<T>],
    pipeline: &ExponentPipeline<T>,
    system: &dyn OrthonormalSystem<T>,
    resolution: usize,
) -> Result<Aggregation<T>> {
    let mut unmatched = Vec::new();
    for b in blocks {
        for (lo, hi) in b.config.intervals() {
            let hit = (1..=pipeline.k).any(|k| !pipeline.is_clipped(k) && pipeline.e[k - 1] == (lo, hi));
            if !hit {
                unmatched.push((lo.as_f64(), hi.as_f64()));
            }
        }
    }
    if !unmatched.is_empty() {
        return Err(Error::UnalignedBlocks(unmatched));
    }
    let f = blocks.iter().fold(StepFunction::zero(), |acc, b| acc.add(&b.g));
    let l1_norm = f.abs().integrate()?;
    let p_bar_norm = luxemburg_norm(&f, &pipeline.p_bar, T::lit(DEFAULT_TOL))?.value;
    let max_m = blocks.iter().map(|b| b.max_m).max().unwrap_or(0);
    let mut thresholds: Vec<T> = blocks.iter().map(|b| b.threshold).collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    thresholds.dedup();
    let exceedance = if max_m > 0 {
        let c = fourier_coefficients(&f, system, max_m)?;
        let star = star_maximal(&c, system, max_m, resolution)?;
        thresholds.iter().map(|&s| (s, star.level_set_measure(s))).collect()
    } else {
        Vec::new()
    };
    Ok(Aggregation {
        blocks: blocks.iter().map(|b| (b.i, b.n)).collect(),
        l1_norm,
        p_bar_norm,
        ratio: (l1_norm > T::zero()).then(|| p_bar_norm / l1_norm),
        max_m,
        exceedance,
    })
}


pub const REPORT_FORMAT_VERSION: u32 = 1;

fn default_s0() -> usize {
    8
}
fn default_budget() -> usize {
    256
}
fn default_grid() -> usize {
    1 << 14
}
fn default_tau() -> f64 {
    0.3
}
fn default_fraction() -> f64 {
    0.1
}
fn default_curve_points() -> usize {
    64
}
fn default_lebesgue_m() -> Vec<usize> {
    (1..=9).map(|j| 1usize << j).collect()
}
fn default_h0_target() -> f64 {
    1e-3
}

/// One aggregation block: index `i` built on the θ of the `n`-record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub i: u32,
    #[serde(rename = "N")]
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemKind,
    #[serde(rename = "N_list", default)]
    pub n_list: Vec<usize>,
    #[serde(default = "default_s0")]
    pub s0: usize,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_grid")]
    pub grid: usize,
    pub rng_seed: u64,
    #[serde(default)]
    pub pipeline_ref: Option<String>,
    /// Search target is `tau · ln N`.
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_fraction")]
    pub level_fraction: f64,
    #[serde(default = "default_curve_points")]
    pub curve_points: usize,
    /// Orders `m` for the Lebesgue table (trig only).
    #[serde(default = "default_lebesgue_m")]
    pub lebesgue_m: Vec<usize>,
    #[serde(default)]
    pub blocks: Vec<BlockSpec>,
    #[serde(default = "default_h0_target")]
    pub h0_target: f64,
}

impl ExperimentConfig {
    pub fn new(system: SystemKind, n_list: Vec<usize>, rng_seed: u64) -> Self {
        Self {
            system,
            n_list,
            s0: default_s0(),
            budget: default_budget(),
            grid: default_grid(),
            rng_seed,
            pipeline_ref: None,
            tau: default_tau(),
            level_fraction: default_fraction(),
            curve_points: default_curve_points(),
            lebesgue_m: default_lebesgue_m(),
            blocks: Vec::new(),
            h0_target: default_h0_target(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.s0 == 0 || self.budget == 0 {
            return Err(Error::InvalidArgument("s0 and budget must be positive".into()));
        }
        if self.grid == 0 || !self.grid.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("grid {} is not a power of two", self.grid)));
        }
        if let Some(&n) = self.n_list.iter().find(|&&n| n == 0) {
            return Err(Error::InvalidArgument(format!("N = {n} in N_list")));
        }
        if !(self.level_fraction > 0.0 && self.level_fraction <= 1.0) {
            return Err(Error::InvalidArgument("level_fraction must lie in (0, 1]".into()));
        }
        if !(self.h0_target > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidArgument("h0_target must be positive and tau finite".into()));
        }
        if let Some(b) = self.blocks.iter().find(|b| b.i >= 2) {
            return Err(Error::InvalidArgument(format!("block i = {} needs N > e^(4^{}), beyond reach", b.i, b.i)));
        }
        Ok(())
    }

    /// Search seed for one `N`; distinct `N` get independent streams.
    pub fn seed_for(&self, n: usize) -> u64 {
        self.rng_seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }

    pub fn search_settings(&self, n: usize) -> SearchSettings {
        SearchSettings {
            n,
            s0: self.s0,
            budget: self.budget,
            resolution: self.grid,
            rng_seed: self.seed_for(n),
            level_fraction: self.level_fraction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NRecord {
    #[serde(rename = "N")]
    pub n: usize,
    pub ln_n: f64,
    pub target_level: f64,
    pub thetas: Vec<f64>,
    pub best_index: usize,
    /// Exceedance measure of the winning candidate; the `c₂` surrogate.
    pub exceedance_measure: f64,
    pub best_level: f64,
    /// `best_level / ln N`; the `c₁` surrogate.
    pub c1: f64,
    pub s0: usize,
    pub max_m: usize,
    pub curve: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LebesgueRow {
    pub m: usize,
    pub ln_m: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub i: u32,
    #[serde(rename = "N")]
    pub n: usize,
    pub h0: f64,
    pub windows: Vec<(f64, f64)>,
    pub g_l1: f64,
    pub threshold: f64,
    pub max_m: usize,
    pub alpha_measured: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format_version: u32,
    pub config: ExperimentConfig,
    pub records: Vec<NRecord>,
    pub lebesgue: Vec<LebesgueRow>,
    /// Least-squares slope of `best_level` against `ln N`.
    pub slope: Option<f64>,
    pub blocks: Vec<BlockRecord>,
    pub aggregation: Option<Aggregation<f64>>,
}

/// Least-squares slope of `y` on `x`; `None` with fewer than two distinct `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (points.len() >= 2 && sxx > 0.0).then(|| sxy / sxx)
}

fn run_record(system: &dyn OrthonormalSystem<f64>, config: &ExperimentConfig, n: usize) -> Result<NRecord> {
    let ln_n = (n as f64).ln();
    let target_level = config.tau * ln_n;
    let settings = config.search_settings(n);
    let found = search_theta(system, &settings, target_level)?;
    let max_m = config.s0 * n;
    let grid = kernel_sum_grid(system, &found.thetas, max_m, config.grid)?;
    Ok(NRecord {
        n,
        ln_n,
        target_level,
        thetas: found.thetas,
        best_index: found.best_index,
        exceedance_measure: found.exceedance_measure,
        best_level: found.best_level,
        c1: if ln_n > 0.0 { found.best_level / ln_n } else { f64::NAN },
        s0: config.s0,
        max_m,
        curve: exceedance_curve(&grid, config.curve_points),
    })
}

/// Runs every search, the Lebesgue table and, when blocks are listed,
/// the aggregation on `pipeline`.
pub fn run_experiment(config: &ExperimentConfig, pipeline: Option<&ExponentPipeline<f64>>) -> Result<ExperimentReport> {
    config.validate()?;
    let system = config.system.system::<f64>();
    let system = system.as_ref();
    let mut records = Vec::with_capacity(config.n_list.len());
    for &n in &config.n_list {
        records.push(run_record(system, config, n)?);
    }
    let lebesgue = match config.system {
        SystemKind::Trig if !config.n_list.is_empty() => config
            .lebesgue_m
            .iter()
            .map(|&m| Ok(LebesgueRow { m, ln_m: (m as f64).ln(), value: lebesgue_constant(m)? }))
            .collect::<Result<Vec<_>>>()?,
        _ => Vec::new(),
    };
    let slope = fit_slope(&records.iter().map(|r| (r.ln_n, r.best_level)).collect::<Vec<_>>());

    let mut blocks = Vec::new();
    let mut block_records = Vec::new();
    if !config.blocks.is_empty() {
        let pipeline = pipeline.ok_or_else(|| Error::InvalidArgument("aggregation requires a pipeline".into()))?;
        for spec in &config.blocks {
            let thetas = match records.iter().find(|r| r.n == spec.n) {
                Some(r) => r.thetas.clone(),
                None => search_theta(system, &config.search_settings(spec.n), config.tau * (spec.n as f64).ln())?.thetas,
            };
            let h0 = find_h0(system, &thetas, config.s0 * spec.n, config.h0_target)?;
            let placed = place_config(pipeline, &thetas, h0)?;
            let block = make_block(spec.i, &placed, system, config.s0, config.grid)?;
            block_records.push(BlockRecord {
                i: block.i,
                n: block.n,
                h0,
                windows: placed.intervals(),
                g_l1: block.g.integrate()?,
                threshold: block.threshold,
                max_m: block.max_m,
                alpha_measured: block.alpha_measured,
            });
            blocks.push(block);
        }
    }
    let aggregation = if blocks.is_empty() { None } else { Some(aggregate(&blocks, pipeline.unwrap(), system, config.grid)?) };
    Ok(ExperimentReport {
        format_version: REPORT_FORMAT_VERSION,
        config: config.clone(),
        records,
        lebesgue,
        slope,
        blocks: block_records,
        aggregation,
    })
}

impl ExperimentReport {
    /// `best_level` never drops as `N` grows.
    pub fn best_level_nondecreasing(&self) -> bool {
        let mut rows: Vec<(usize, f64)> = self.records.iter().map(|r| (r.n, r.best_level)).collect();
        rows.sort_by_key(|r| r.0);
        rows.windows(2).all(|w| w[1].1 >= w[0].1)
    }

    pub fn records_csv(&self) -> String {
        let mut out = String::from("N,ln_N,target_level,exceedance_measure,best_level,c1,s0,max_m\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.n, r.ln_n, r.target_level, r.exceedance_measure, r.best_level, r.c1, r.s0, r.max_m
            ));
        }
        out
    }

    pub fn curves_csv(&self) -> String {
        let mut out = String::from("N,level,measure\n");
        for r in &self.records {
            for (level, measure) in &r.curve {
                out.push_str(&format!("{},{},{}\n", r.n, level, measure));
            }
        }
        out
    }

    pub fn lebesgue_csv(&self) -> String {
        let mut out = String::from("m,ln_m,L_m\n");
        for r in &self.lebesgue {
            out.push_str(&format!("{},{},{}\n", r.m, r.ln_m, r.value));
        }
        out
    }

    pub fn blocks_csv(&self) -> String {
        let mut out = String::from("i,N,h0,g_l1,threshold,max_m,alpha_measured\n");
        for b in &self.blocks {
            out.push_str(&format!("{},{},{},{},{},{},{}\n", b.i, b.n, b.h0, b.g_l1, b.threshold, b.max_m, b.alpha_measured));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ons::{TrigSystem, WalshSystem};

    #[test]
    fn fn_examples() {
        let f = make_fn(&ThetaConfig::new(vec![0.25f64], vec![0.25]).unwrap()).unwrap();
        assert_eq!(f.eval(0.3), Extended::Finite(4.0));
        assert_eq!(f.integrate().unwrap(), 1.0);
        let f = make_fn(&ThetaConfig::new(vec![0.2f64, 0.6], vec![0.1, 0.1]).unwrap()).unwrap();
        assert!((f.eval(0.25).finite().unwrap() - 5.0).abs() < 1e-12);
        assert!((f.integrate().unwrap() - 1.0).abs() < 1e-15);
        let overlap = ThetaConfig::new(vec![0.2, 0.25], vec![0.1, 0.1]).unwrap();
        assert!(matches!(make_fn(&overlap), Err(Error::OverlappingIntervals(..))));
        assert!(ThetaConfig::new(vec![0.95], vec![0.1]).is_err());
    }

    #[test]
    fn kernel_first_mode_is_one() {
        let g = kernel_sum_grid(&TrigSystem, &[0.3f64], 1, 16).unwrap();
        assert!(g.samples().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn search_is_reproducible() {
        let s = SearchSettings { n: 4, s0: 2, budget: 3, resolution: 64, rng_seed: 7, level_fraction: 0.1 };
        let a = search_theta(&TrigSystem, &s, 0.5f64).unwrap();
        let b = search_theta(&TrigSystem, &s, 0.5f64).unwrap();
        assert_eq!(a, b);
        let all = search_theta(&TrigSystem, &s, -1.0f64).unwrap();
        assert_eq!(all.exceedance_measure, 1.0);
    }

    #[test]
    fn constant_mode_has_no_deviation() {
        let cfg = ThetaConfig::new(vec![0.1f64, 0.4, 0.77], vec![0.01, 0.02, 0.005]).unwrap();
        let chk = coefficient_limit_check(&TrigSystem, &cfg, 6, 32).unwrap();
        assert!(chk.decreasing);
        let b = theta_average(&TrigSystem, &cfg.thetas, 1);
        let c = fourier_coefficients(&make_fn(&cfg).unwrap(), &TrigSystem, 1).unwrap();
        assert!((c[0] - b[0]).abs() < 1e-15);
        let w = coefficient_limit_check(&WalshSystem, &cfg, 6, 32).unwrap();
        assert!(w.decreasing);
    }

    #[test]
    fn block_preconditions() {
        assert_eq!(block_min_n(0), 3.0);
        assert_eq!(block_min_n(1), 55.0);
        let cfg = ThetaConfig::uniform(vec![0.1f64, 0.3], 0.01).unwrap();
        assert!(matches!(make_block(0, &cfg, &TrigSystem, 2, 64), Err(Error::BlockNormPrecondition { min_n, .. }) if min_n == 3.0));
        let cfg = ThetaConfig::uniform((1..=16).map(|i| i as f64 / 17.0).collect(), 0.01).unwrap();
        let b = make_block(0, &cfg, &TrigSystem, 2, 64).unwrap();
        let l1 = b.g.integrate().unwrap();
        assert!((l1 - 16f64.ln().powf(-0.5)).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&b.alpha_measured));
    }
}
