//! Pattern search along polynomial curves in grid-sampled subsets of R^n,
//! with the oscillatory-integral machinery needed to certify the scales at
//! which the search is meaningful.
//!
//! The crate is organized bottom-up:
//!
//! - [`curve`]: polynomial curves, anisotropic rescaling, dependence
//!   analysis, and scale-lattice calibration;
//! - [`grid`] / [`bump`] / [`fft`]: grid-sampled functions, smooth bump
//!   profiles, mollification and Littlewood-Paley band projections;
//! - [`quad`] / [`oscillatory`]: oscillatory quadrature, the dyadic
//!   multipliers, their decay fits, and the averaging operator;
//! - [`counting`]: two-point and corner counting forms with their
//!   decomposition audits;
//! - [`bourgain`]: the density-increment iteration and its telescoping
//!   audit;
//! - [`patterns`]: witness search at unit, rescaled, sliced, and corner
//!   configurations;
//! - [`gen`] / [`report`] / [`cli`]: set generators, reproducible reports,
//!   and the command-line drivers.

pub mod error;
pub mod sample;
pub mod curve;
pub mod quad;
pub mod bump;
pub mod fft;
pub mod grid;
pub mod oscillatory;
pub mod counting;
pub mod bourgain;
pub mod patterns;
pub mod gen;
pub mod report;
pub mod cli;

pub use error::{Error, Result};
