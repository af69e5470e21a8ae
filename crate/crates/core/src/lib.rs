//! Rate-splitting precoder optimization for multi-user MISO downlinks with
//! imperfect channel knowledge at the transmitter.
//!
//! The ergodic sum rate is maximized by sample-average approximation of the
//! conditional average rates, and the resulting deterministic problem is
//! solved by alternating between closed-form MMSE equalizers/weights and a
//! convex QCQP precoder update.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the production scalar type.

pub mod baselines;
pub mod channel;
pub mod cli;
pub mod error;
pub mod harness;
pub mod optimizer;
pub mod precoder;
pub mod qcqp;
pub mod rate;
pub mod report;
pub mod saa;
pub mod scalar;

pub use baselines::InitScheme;
pub use channel::{ChannelEstimate, ConditionalSample, SystemConfig};
pub use error::{Error, Result};
pub use optimizer::{AoStatus, AoTrace, AsrResult};
pub use precoder::{Mode, Precoder};
pub use qcqp::{QcqpProblem, QcqpSolution};
pub use scalar::Real;

pub type Precoder64 = Precoder<f64>;
pub type Precoder32 = Precoder<f32>;
pub type ChannelEstimate64 = ChannelEstimate<f64>;
pub type ConditionalSample64 = ConditionalSample<f64>;
pub type QcqpProblem64 = QcqpProblem<f64>;
pub type AsrResult64 = AsrResult<f64>;
