//! QoS-aware scheduling and migration for cloud-assisted edge clusters.
//!
//! The [`scheduler`] places pod batches to minimize edge fragmentation and
//! periodically migrates pods to raise the QoS objective in [`objective`].
//! [`plans`] turns its decisions into create-before-delete step sequences,
//! and [`sim`] runs everything against an emulated autoscaling cluster.

pub mod baselines;
pub mod config;
pub mod experiment;
pub mod fixtures;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod oracle;
pub mod plans;
pub mod scheduler;
pub mod sim;
pub mod workload;
