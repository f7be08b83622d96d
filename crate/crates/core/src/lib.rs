//! Simulation engine for the depletion kinetics of non-renewable energy
//! resources.
//!
//! A resource endowment is represented as a density over extraction cost
//! (EJ per $/GJ). The commodity price selects which part of the endowment
//! counts as reserves, and reserves are consumed at a constant fractional
//! rate `nu0` per year. From that single rule the crate derives:
//!
//! - the forward problem: an exogenous price path produces a flow path
//!   ([`kinetics::run_forward`]),
//! - the reverse problem: an exogenous demand path produces the marginal
//!   cost of production at every step ([`inverse::run_reverse`]),
//! - `nu0` calibration from historical reserve/production data
//!   ([`calibration`]),
//! - Monte Carlo confidence bands over endowment uncertainty and `nu0`
//!   sensitivity sweeps ([`ensemble`]),
//! - a minimal technology-substitution layer that damps price escalation
//!   ([`substitution`]),
//! - scenario assembly from TOML configs ([`scenario`]).
//!
//! Units are fixed internally: EJ for energy, $/GJ for cost, years for
//! time. Converters live at the ingestion boundary only.

pub mod calibration;
pub mod distribution;
pub mod ensemble;
pub mod inverse;
pub mod io;
pub mod kinetics;
pub mod scenario;
pub mod substitution;

pub use distribution::{CostDistribution, CostGrid, CostSupplyCurve, UncertainEndowment};
pub use kinetics::{DepletionState, ExtractionProbability, TimeSeries};
