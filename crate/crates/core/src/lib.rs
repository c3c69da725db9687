//! Multi-area power-system frequency dynamics.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: validated grid data model and inertia unit conversions
//! - [`swing`]: right-hand sides of the aggregated swing equation and the
//!   nonlinear multi-area phase model, plus inertia aggregation
//! - [`control`]: primary (droop) and secondary (AGC) frequency control with
//!   transport delay, ramp limiting and saturation
//! - [`engine`]: fixed-step closed-loop simulation, metrics and exports
//! - [`region`]: simulation-based region-of-attraction maps and phase traces
//! - [`analytics`]: dispatch time-series ingestion and inertia statistics
//! - [`config`]: the hierarchical scenario file consumed by the CLI
//!
//! Independent runs (parameter sweeps, region grids) are evaluated in
//! parallel when the `parallel` feature is enabled; see [`par`].

pub mod analytics;
pub mod config;
pub mod control;
pub mod engine;
pub mod model;
pub mod ode;
pub mod par;
pub mod region;
pub mod swing;

pub use engine::{integrate, Event, EventKind, Metrics, Scenario, Trajectory};
pub use model::{AreaParams, GridModel, TieLine, ValidatedGridModel};
