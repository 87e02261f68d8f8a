//! Simulation and analysis of intensity-difference squeezing between the
//! twin beams of a triply resonant optical parametric oscillator.
//!
//! The crate is layered bottom-up:
//!
//! - [`params`]: the validated parameter set and TOML config loading.
//! - [`classical`]: output power, threshold scaling and temperature tuning.
//! - [`quantum`]: analytic noise spectra.
//! - [`sim`]: time-domain photocurrent synthesis.
//! - [`spectrum`]: spectrum-analyzer emulation and shot-noise normalization.
//! - [`pipeline`]: streaming end-to-end measurements.
//! - [`fit`]: parameter estimation.
//! - [`design`]: output-coupler trade-offs.
//! - [`cli`]: the `twinbeam` command-line front end.

pub mod classical;
pub mod cli;
pub mod design;
pub mod error;
pub mod fit;
pub mod params;
pub mod pipeline;
pub mod quantum;
pub mod sim;
pub mod spectrum;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/classical.md")]
    mod classical {}
    #[doc = include_str!("../../../book/src/noise.md")]
    mod noise {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/analysis.md")]
    mod analysis {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    mod fitting {}
    #[doc = include_str!("../../../book/src/design.md")]
    mod design {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
