//! State-dependent Hawkes processes with exponential kernels.
//!
//! A marked point process of event types `e` whose excitation kernels depend on
//! the state `x` recorded with each event, and whose state transitions at each
//! event are drawn from a per-event-type Markov matrix. The crate covers
//! simulation, exact likelihood evaluation and maximum-likelihood fitting,
//! residual diagnostics, spectral analysis of the kernels and the conversion
//! of limit order book messages into marked sequences.

pub mod analysis;
pub mod diagnostics;
pub mod error;
pub mod estimate;
pub mod experiments;
pub mod intensity;
pub mod io;
pub mod likelihood;
pub mod lobdata;
pub mod model;
pub mod optim;
pub mod simulate;

pub use error::{Error, Result};
pub use estimate::{fit, fit_lifted, fit_ordinary, EstimateResult, FitConfig};
pub use likelihood::{log_likelihood, LikelihoodBreakdown};
pub use model::{Dimensions, ExpKernelParams, MarkedSequence, SdHawkesModel, TransitionDistribution};
pub use simulate::{simulate, SimulationConfig, StopRule};
