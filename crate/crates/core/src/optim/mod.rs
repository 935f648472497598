//! AdamW, the warmup + cosine learning-rate schedule and stochastic weight
//! averaging. All three operate on flat parameter vectors in
//! [`ModelParams::flatten`](crate::model::ModelParams::flatten) order.

mod adamw;
mod schedule;
mod swa;

pub use adamw::{adamw_step, AdamWConfig, AdamWState};
pub use schedule::{lr_at, ScheduleConfig};
pub use swa::SwaState;
