//! Pseudo-spectral laboratory for norm-inflation experiments with the 2D Euler
//! equations on the periodic square `[-1, 1)^2`.
//!
//! The crate is organised bottom-up:
//!
//! * [`field`] periodic spectral fields, Biot–Savart velocity and RK4 stepping
//! * [`initial_data`] the strip-plus-stirrer initial vorticity and its geometry
//! * [`quadrature`] Gauss–Kronrod and Gauss–Legendre rules shared by the modules below
//! * [`stream_series`] the separated-variable stream function series
//! * [`key_lemma`] main-term quadrature and residual validation of `u_j / x_j`
//! * [`lagrangian`] flow-map tracing, strip integrals and the hyperbolic decomposition
//! * [`diagnostics`] growth witnesses, experiment orchestration and report emission

pub mod diagnostics;
pub mod field;
pub mod initial_data;
pub mod key_lemma;
pub mod lagrangian;
pub mod quadrature;
pub mod stream_series;

pub use field::{Grid, Orientation, ScalarField, VelocityField, VorticityField};

