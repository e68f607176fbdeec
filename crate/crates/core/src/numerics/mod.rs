//! Numeric kernels shared by every other module: jets, dual numbers, the
//! adaptive integrator and the bracketed root finder.

pub mod jet;
pub mod ode;
pub mod root;
pub mod scalar;

pub use jet::{jet_apply, Jet, JetOp, MAX_ORDER};
pub use ode::{integrate_ivp, DenseSolution, FailureReason, IntegrationFailure, IntegratorSettings, RhsError};
pub use root::invert_monotone;
pub use scalar::{Dual, Scalar};
