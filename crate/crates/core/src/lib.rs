//! Parallel-decoding simulator for masked-diffusion language models.
//!
//! An ideal model answers posterior queries exactly; decoding strategies
//! choose how many positions to unmask per step; information measures and
//! closed forms predict when that parallelism costs accuracy. The `bench`
//! module generates prompt-level instances and `eval` scores real runs.

pub mod adapter;
pub mod analytic;
pub mod bench;
pub mod decoding;
pub mod eval;
pub mod ideal;
pub mod info;
pub mod model;
pub mod tasks;

pub use decoding::{decode, SamplerConfig, Strategy, StrategyConfig};
pub use ideal::{IdealModel, PosteriorTable, SequenceState};
pub use model::{ModelError, PosteriorModel};
pub use tasks::{Item, TaskInstance, TaskKind, TaskSpec};
