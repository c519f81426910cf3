//! Energy-optimal quadcopter control laboratory.
//!
//! The crate covers the whole pipeline from optimal trajectories to
//! closed-loop benchmarks:
//!
//! * [`model`]: quadcopter dynamics with identified thrust, drag and moment
//!   models, rotor lag and an optional constant external moment.
//! * [`trajopt`]: Hermite–Simpson transcription of the free-final-time
//!   energy-optimal control problem and an interior-point NLP solver.
//! * [`dataset`]: sampling recipes, mass trajectory generation and
//!   state-action dataset files.
//! * [`gcnet`]: the feed-forward state-feedback network, its trainer and
//!   policy files.
//! * [`filters`]: second-order Butterworth low-pass filters (streaming and
//!   zero-phase).
//! * [`sim`]: deterministic closed-loop simulator with the onboard
//!   external-moment estimator and waypoint logic.
//! * [`dfbc`]: minimum-snap trajectories with time scaling and a cascaded
//!   tracking controller used as a baseline.
//! * [`bench`]: hover-to-hover and time-scaling benchmark suites.

pub mod ad;
pub mod bench;
pub mod dataset;
pub mod dfbc;
pub mod error;
pub mod filters;
pub mod gcnet;
pub mod model;
pub mod sim;
pub mod trajopt;

pub use error::{Error, Result};
