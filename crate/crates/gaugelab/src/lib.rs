//! Desk-scale numerical laboratory for gauge fields on the punctured disk:
//! parallel transport and limit holonomy on shrinking circles, the sharp
//! covariant Poincare constant on the circle with a spectral cross-check,
//! twisted harmonic map relaxation on cylinder strips with decay-rate
//! measurement, the reduced abelian vortex ODE with its sharp rates, and the
//! comparison-function certificates behind the decay proofs.

pub mod cylinder;
pub mod decay;
pub mod error;
pub mod flow;
pub mod holonomy;
pub mod poincare;
pub mod skew;
pub mod vortex;

pub use error::{GaugeError, Result};
