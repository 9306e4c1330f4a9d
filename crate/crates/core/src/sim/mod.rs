//! Behavioral model of the training accelerator.
//!
//! [`schedule`] groups vertices into degree-homogeneous batches and tracks
//! which hypervectors already live in device memory, [`cache`] models the
//! on-chip hypervector store, and [`cost`] turns a replayed schedule into
//! stage times, traffic and a single-batch latency.

pub mod cache;
pub mod cost;
pub mod schedule;

pub use cache::{cache_access, Access, CacheConfig, CacheState, Policy};
pub use cost::{replay, simulate, simulate_warm, sweep, sweep_schedules, two_epochs, CostConfig, SimReport, SweepRow};
pub use schedule::{read_trace, schedule_epoch, write_trace, Payload, Registry, ScheduleBatch};
