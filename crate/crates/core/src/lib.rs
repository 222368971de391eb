//! Max-min fair beamforming for joint communications and sensing.
//!
//! A multi-antenna base station serves `K` single-antenna users while
//! probing `M` targets among `C` clutter scatterers. The precoder `W` and
//! the radar combiner `F` are chosen to maximize
//! `min_k log(1+SINR_k) + δ · min_m log(1+SCNR_m)` under per-antenna power
//! limits.
//!
//! - [`numerics`]: the small dense complex kernel.
//! - [`scenario`]: channel generation and dataset files.
//! - [`metrics`]: SINR, SCNR, the utility and its quadratic-transform surrogate.
//! - [`optimizer`]: the alternating solver and its step-size rules.
//! - [`training`]: learning the unfolded solver's parameters.
//! - [`harness`]: experiment drivers, CSV/SVG output and the CLI.

pub mod error;
pub mod harness;
pub mod metrics;
pub mod numerics;
pub mod optimizer;
pub mod scenario;
pub mod training;

pub use error::{JcasError, Result};
pub use metrics::{AuxState, BeamformerState};
pub use numerics::{CMatrix, HermitianMatrix, C64};
pub use optimizer::{init_state, solve, Schedule, SolverConfig, StepMode};
pub use scenario::{generate_scenario, Dataset, Scenario, SystemConfig};
pub use training::{train, TrainConfig, UnfoldedParams};
