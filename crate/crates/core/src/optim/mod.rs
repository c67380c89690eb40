//! The step engine: DP-SGD, gradient noise convolution (GNC), random noise
//! convolution (RNC) and the GNC-to-RNC switch, with momentum, weight decay,
//! LARS, filter-wise noise scaling and learning-rate schedules.

mod config;
mod noise;
mod schedule;
mod step;
mod update;

pub use config::{AlphaPreset, Method, NoiseKind, NoiseScaling, OptimConfig, ALPHA_PRESETS};
pub use noise::{gnc_noise, rnc_noise, NoiseBank};
pub use schedule::{lr_at, Collapse, Decay, ScheduleSpec, Warmup};
pub use step::{merged_grad, step, OptimizerState, StepTrace, WorkerSlot};
pub use update::{apply_update, lars_local_rate, perturb, UpdateReport};
