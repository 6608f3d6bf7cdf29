//! Online learning for spiking neural networks with neuron and synapse
//! temporal dynamics.
//!
//! The crate implements the SOLSA rule (forward-updated eligibility traces,
//! per-step spatial learning signals, adaptive synapse filter kernels,
//! scheduled weight updates and early-stop training) together with an exact
//! surrogate-gradient BPTT oracle over the same forward model. The oracle is
//! used both for gradient-equivalence tests and as a training baseline.

pub mod bptt;
pub mod config;
pub mod data;
pub mod dynamics;
pub mod early_stop;
pub mod error;
pub mod learner;
pub mod mat;
pub mod metrics;
pub mod profile;
pub mod schedule;
pub mod trainer;

pub use config::{Algorithm, RunConfig};
pub use data::{Dataset, LabeledSequence};
pub use dynamics::{NetworkParams, NetworkState};
pub use error::{Error, Result};
pub use learner::LearnerState;
pub use schedule::UpdateSchedule;
