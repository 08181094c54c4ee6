//! Experiment runner: configuration, training runs, sweeps, order checks
//! and dataset download.

pub mod config;
pub mod fetch;
pub mod metrics;
pub mod run;
pub mod sweep;
pub mod verify;

pub use config::RunConfig;
pub use metrics::{read_metrics, MetricsRecord};
pub use run::{run, RunSummary};
pub use sweep::{sweep, Grid};
pub use verify::{verify_orders, verify_tableau, OrderCheck};
