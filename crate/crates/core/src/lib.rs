//! Spectral simulator for linear Einstein-scalar perturbations of Kasner spacetimes on the
//! three-torus, in constant-mean-curvature and parabolic lapse gauges, with the energy
//! identities, constraint monitors and decay fits used to check the dynamics toward the singularity.

#![allow(clippy::needless_range_loop)]

pub mod background;
pub mod cli;
pub mod cmc;
pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod initial;
pub mod integrator;
pub mod parabolic;
pub mod spectral;
pub mod system;

pub use background::KasnerBackground;
pub use error::{Error, Result};
pub use spectral::{FieldState, Gauge, ModeIndex, ModeState, C64};
