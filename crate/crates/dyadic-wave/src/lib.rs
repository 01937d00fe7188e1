//! Spectral laboratory for frequency-localized wave propagation.
//!
//! Periodic grids and fields, Littlewood-Paley blocks, Bony paraproducts,
//! constant-coefficient wave experiments, geometric-optics parametrices,
//! a frequency-truncated quasilinear iteration, phase-space localization,
//! and an experiment harness that writes CSV/JSON reports.

pub mod error;
pub mod grid;
pub mod dyadic;
pub mod paraproduct;
pub mod waveprop;
pub mod eikonal;
pub mod quasilinear;
pub mod microlocal;
pub mod lab;

pub use error::{Error, Result};
pub use grid::{Field, Grid, TimeSeries, WaveState};
