//! Hierarchical graph flow forecasting.
//!
//! A multivariate window is embedded onto a hypervariate graph whose nodes are
//! `(variable, timestep)` pairs and whose edges come from self-attention. The
//! graph is repeatedly coarsened by greedy Graclus matching; learnable
//! embedding and lifting maps move features between resolutions, and a
//! memory buffer carries information from every coarser level back to the
//! finest one, where it is read out as the forecast.
//!
//! The [`analysis`] module instruments Dirichlet energy and Weisfeiler-Lehman
//! colourings to check the smoothness and expressivity properties of the
//! hierarchy empirically.

pub mod analysis;
pub mod config;
pub mod dataio;
pub mod error;
pub mod graph;
pub mod hierarchy;
pub mod numerics;
pub mod parallel;
pub mod run;

pub use error::{Error, Result};
