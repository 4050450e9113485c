//! Variable exponent Lebesgue spaces on `[0, 1]`, the rearranged exponent
//! construction, and Fourier partial sums of uniformly bounded orthonormal
//! systems.
//!
//! Everything is generic over the scalar ([`Real`], implemented for `f32`
//! and `f64`); the `*F64` aliases below are what the CLI uses.

pub mod divergence;
pub mod error;
pub mod exponent;
pub mod ons;
pub mod pipeline;
pub mod quad;
pub mod scalar;
pub mod stepfn;
pub mod vexl;

pub use divergence::{DivergenceBlock, ExperimentConfig, ExperimentReport, ThetaConfig};
pub use error::{Error, Result};
pub use exponent::{Exponent, NamedExponent};
pub use ons::{OrthonormalSystem, SystemKind};
pub use pipeline::{ExponentPipeline, PipelineConfig, PipelineFile};
pub use scalar::{Extended, Real};
pub use stepfn::{Cell, CellPermutation, GridFunction, Rearrangement, Segment, StepFunction};
pub use vexl::{luxemburg_norm, modular, NormResult};

pub type StepF64 = StepFunction<f64>;
pub type StepF32 = StepFunction<f32>;
pub type GridF64 = GridFunction<f64>;
pub type GridF32 = GridFunction<f32>;
pub type ExponentF64 = Exponent<f64>;
pub type ExponentF32 = Exponent<f32>;
pub type PipelineF64 = ExponentPipeline<f64>;
