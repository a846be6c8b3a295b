//! Wind-farm wake modelling with direction-switched GP-SPARX models.
//!
//! A GP-SPARX model predicts the wind speed at each turbine from the
//! free-stream speed and the speeds of the turbines whose wakes reach it,
//! `u(s,t) = f(u∞(t), w(i,s)·u(i,t))` with `f ~ GP(0, k_SE)`. One such
//! model is trained per wind-direction pattern and a sector table picks the
//! model to use for each incoming direction.
//!
//! * [`geometry`]: farm layout, wake cones and wake adjacency graphs.
//! * [`simulator`]: synthetic ground-truth data from a Jensen wake model.
//! * [`gp`]: exact GP regression with marginal-likelihood fitting.
//! * [`sparx`]: design matrices, per-pattern training, one-step and cascaded prediction.
//! * [`switching`]: direction sectors and dispatch between pattern models.
//! * [`evaluation`]: error records, polar error maps and NMSE.
//! * [`experiment`]: the simulate / train / evaluate pipeline behind the CLI.

pub mod angle;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod geometry;
pub mod gp;
pub mod simulator;
pub mod sparx;
pub mod switching;
mod util;

pub use error::{Error, Result};
pub use util::{fmt_f64, sha256_hex};
