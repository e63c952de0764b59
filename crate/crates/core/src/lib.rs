//! Continuous-time control paths for irregular time series, ODE/CDE solvers
//! with discontinuity handling, a small trainable CDE model, and empirical
//! probes for causality, boundedness, uniqueness, and solver cost.

pub mod control;
pub mod error;
pub mod neuralcde;
pub mod report;
pub mod series;
pub mod solver;
pub mod synth;
pub mod verify;

pub use control::{ControlPath, Parameterisation, Scheme};
pub use error::{Error, Result};
pub use series::{
    augment, normalize, parse_csv, split, AugmentedSeries, Dataset, Label, RawSeries, Split,
};
pub use solver::{integrate, Method, SolveConfig, SolveResult};
