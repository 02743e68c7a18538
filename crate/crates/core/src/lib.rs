//! Tracking points on slow invariant manifolds of chemical kinetics.
//!
//! A point on the manifold is computed by pinning a few species (the
//! reaction progress variables) and minimizing `Φ(z) = ‖J_S(z) S(z)‖²` over
//! the remaining species subject to element conservation and positivity.
//! Families of such points are followed over parameter grids by an Euler
//! predictor built from KKT parameter sensitivities and a generalized
//! Gauss-Newton corrector.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dual;
pub mod error;
pub mod io;
pub mod kinetics;
pub mod nlp;
pub mod continuation;
pub mod odeint;
pub mod par;
pub mod sensitivity;

pub use error::{Error, Result};
pub use kinetics::{ConservationSystem, Mechanism, Reaction, StateVector};
