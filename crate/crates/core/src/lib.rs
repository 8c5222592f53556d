//! Simulation and Monte Carlo verification toolkit for supercritical branching
//! processes with immigration in an i.i.d. random environment.
//!
//! The population recursion is `Z_{n+1} = Y_n + sum_{i <= Z_n} X_{n,i}` with
//! `Z_0 = 1`, where each generation draws an environment atom that fixes both
//! the offspring law of `X_{n,i}` and the immigration law of `Y_n`. The crate
//! provides
//!
//! * [`env`]: finite-atom environments and their validation,
//! * [`rng`] and [`sampler`]: a counter-based random stream and exact (or
//!   controlled-approximation) aggregate samplers,
//! * [`trajectory`]: single paths and deterministic parallel batches,
//! * [`analytics`]: exact moments of `log m_0`, normal functions, the
//!   Edgeworth term and the limit curve of the rescaled CDF deviation,
//! * [`verify`]: Monte Carlo estimators that check the limit behaviour of `log Z_n`.
//!
//! The analytic layer is generic over the scalar type (see [`Real`]); the
//! aliases below fix it to `f64`, which is what the simulation uses.

pub mod analytics;
pub mod env;
pub mod error;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod stats;
pub mod trajectory;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Real;

/// Moments of `log m_0` in double precision.
pub type Moments = analytics::MomentSummary<f64>;
/// Moments of `log m_0` in single precision.
pub type MomentsF32 = analytics::MomentSummary<f32>;
/// Empirical CDF over `f64` samples.
pub type Ecdf = verify::EmpiricalCdf<f64>;
/// Rescaled CDF deviation curve in double precision.
pub type RateCurve = verify::RateCurve<f64>;
/// Rate-curve row in double precision.
pub type RateRow = verify::RateRow<f64>;
