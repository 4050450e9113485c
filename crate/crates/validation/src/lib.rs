//! Fixtures for the acceptance suite in `tests/acceptance.rs`.

use rand::Rng;
use vexl::pipeline::{default_witnesses, validate_seed};
use vexl::{Exponent, ExponentPipeline, Extended, PipelineConfig, StepFunction};

/// Random step function with `1..=cells` pieces and values in `[-amp, amp]`.
pub fn random_step<R: Rng>(rng: &mut R, cells: usize, amp: f64) -> StepFunction<f64> {
    let n = rng.gen_range(1..=cells);
    let mut cuts: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(0.001..0.999)).collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    let mut bps = vec![0.0];
    bps.extend(cuts);
    bps.push(1.0);
    let vals = (0..bps.len() - 1).map(|_| rng.gen_range(-amp..=amp)).collect();
    StepFunction::from_finite(bps, vals).unwrap()
}

/// Random step exponent with values in `[lo, hi]`.
pub fn random_step_exponent<R: Rng>(rng: &mut R, cells: usize, lo: f64, hi: f64) -> StepFunction<f64> {
    random_step(rng, cells, 1.0).map(|v| Extended::Finite(lo + (hi - lo) * (v.finite().unwrap() + 1.0) / 2.0))
}

/// Pipeline on the seed `1 + 1/ln(e/t)` with default parameters.
pub fn log_seed_pipeline(k: usize, resolution: usize) -> ExponentPipeline<f64> {
    let seed = validate_seed(&Exponent::log_conjugate(1.0).unwrap(), None, &default_witnesses()).unwrap();
    let config = PipelineConfig { k, resolution, ..PipelineConfig::default() };
    ExponentPipeline::build(seed, &config).unwrap()
}

/// Closed-form `(∫|f|^p)^{1/p}` of a finite step function.
pub fn lp_closed(f: &StepFunction<f64>, p: f64) -> f64 {
    f.cells().map(|c| c.value.finite().unwrap().abs().powf(p) * (c.right - c.left)).sum::<f64>().powf(1.0 / p)
}
