//! Log-signature transforms over piecewise-linear paths and neural rough
//! differential equations that consume lower-dimensional log-signature
//! embeddings.

pub mod eval;
pub mod lord;
pub mod nn;
pub mod ode;
pub mod path;
pub mod synthetic;
pub mod tensoralg;
