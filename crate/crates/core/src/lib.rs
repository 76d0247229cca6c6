//! Simulation-based calibration for the univariate stochastic volatility model.
//!
//! The crate bundles two competing posterior samplers for
//!
//! ```text
//! y_t     = exp(h_t / 2) eps_t
//! h_{t+1} = mu + phi (h_t - mu) + sigma eta_t,   h_1 ~ N(mu, sigma^2 / (1 - phi^2))
//! ```
//!
//! - [`hmc`]: gradient-based Hamiltonian Monte Carlo on the exact model, in a
//!   centered or a reparameterized (standardized-innovation) form;
//! - [`ksc`]: the offset-mixture Gibbs sampler, which linearizes the model via
//!   `log(y^2 + c)` and a seven-component normal mixture for the log-chi-square
//!   error, then draws the states with a Kalman simulation smoother;
//!
//! and the machinery to check them: [`sbc`] runs prior -> simulate -> fit -> rank
//! loops, [`diagnostics`] turns the ranks into histograms, chi-square statistics
//! and effective sample sizes, and [`io`] handles files and figures.

pub mod diagnostics;
pub mod draws;
pub mod error;
pub mod hmc;
pub mod io;
pub mod ksc;
pub mod model;
pub mod rng;
pub mod sbc;

pub use draws::{PosteriorDraws, StateSelection};
pub use error::{Error, Result};
pub use model::{
    LatentPath, Parameterization, PathKind, PriorSpec, ReturnSeries, StaticParams,
};
pub use rng::{SeedStreams, StreamRole};
