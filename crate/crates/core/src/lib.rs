//! Conformal geodesics on (pseudo-)Riemannian charts, Poincaré–Einstein
//! targets in normal form, and the asymptotic harmonic-map expansion whose
//! vanishing orders characterize conformal geodesics.

pub mod error;
pub mod expr;
pub mod tensor;
pub mod geodesic;
pub mod ambient;
pub mod asym;
pub mod hmap;
pub mod energy;

pub use error::{Error, Result};
