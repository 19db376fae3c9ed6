//! Mixed-precision additive Runge-Kutta integration.

pub mod linalg;
pub mod precision;
pub mod tableau;
pub mod problems;
pub mod newton;
pub mod integrator;
pub mod stability;
pub mod harness;
