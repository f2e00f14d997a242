//! Sum-constrained leader-follower consensus: dynamics, certificates,
//! simulation, and a wind-farm storage coordination harness.
//!
//! The crate is organized around four layers:
//!
//! - [`protocol`]: the consensus vector fields, equilibria, and the
//!   coordinate changes of the time-scale analysis.
//! - [`stability`]: analysis matrices, the Lyapunov equation, and the
//!   constructive delay-independent stability certificate.
//! - [`sim`]: deterministic fixed-step integration (plain and delayed),
//!   step-event scheduling, the matrix-exponential oracle, and the
//!   empirical sweep over the time-scale parameter.
//! - [`windfarm`]: the storage-coordination instantiation with wind
//!   signals, fairness metrics, and the scenario harness.
//!
//! All numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the `*64` aliases below are the concrete types used by the CLI and the
//! test suites.

pub mod error;
pub mod linalg;
pub mod protocol;
pub mod scalar;
pub mod sim;
pub mod stability;
pub mod windfarm;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = linalg::Matrix<f64>;
pub type ProtocolConfig64 = protocol::ProtocolConfig<f64>;
pub type SystemState64 = protocol::SystemState<f64>;
pub type SimConfig64 = sim::SimConfig<f64>;
pub type Trajectory64 = sim::Trajectory<f64>;
pub type SweepConfig64 = sim::SweepConfig<f64>;
pub type SweepReport64 = sim::SweepReport<f64>;
pub type StabilityCertificate64 = stability::StabilityCertificate<f64>;
pub type WindFarmScenario64 = windfarm::WindFarmScenario<f64>;
pub type FairnessReport64 = windfarm::FairnessReport<f64>;
