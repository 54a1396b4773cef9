//! Frequency-domain analysis of log-periodic power law (LPPL) bubbles
//! observed through Ornstein-Uhlenbeck noise.
//!
//! The crate generates LPPL trajectories and OU noise, computes spectra of
//! reflected series, estimates the noise parameters (maximum likelihood and
//! pessimistic bounds), and de-noises price series with Wiener and cutoff
//! filters. [`experiments`] bundles the Monte Carlo studies and the
//! end-to-end analysis of a price file; [`cli`] exposes all of it on the
//! command line.

pub mod error;
pub mod timeseries;
pub mod lppl;
pub mod ou;
pub mod spectra;
pub mod estimators;
pub mod denoise;
pub mod experiments;
pub mod cli;

pub use error::{Error, Result};
