//! Speed control of a linear induction motor fed by a two-level inverter.
//!
//! The crate contains the α–β motor model, the inverter switch map, an
//! open-loop flux estimator, an enumerative nonlinear model predictive
//! controller that picks switch positions directly, a classical DTC baseline
//! and a closed-loop simulation harness with CSV traces and metrics.
//!
//! With the default `parallel` feature, candidate rollouts and independent
//! scenario runs use rayon; results are identical to the sequential path.

pub mod dtc;
pub mod enmpc;
pub mod error;
pub mod estimator;
pub mod inverter;
pub mod metrics;
pub mod motor;
pub mod scenario;
pub mod sim;
pub mod trace;

pub use enmpc::{default_config, ControllerConfig, ControllerState, Enmpc, SearchMode};
pub use error::{Error, Result};
pub use inverter::{SwitchState, SWITCH_STATES};
pub use metrics::{compute_metrics, Metrics};
pub use motor::{derive_params, DerivedParams, MotorParams, MotorState};
pub use scenario::{shipped_scenarios, ControllerSpec, Scenario};
pub use sim::{run, run_with, RunOptions, RunOutput};
pub use trace::{read_trace, write_trace, Trace};
