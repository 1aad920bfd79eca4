//! Mass-conserving reaction mechanism prediction over bond-electron matrices.

pub mod bematrix;
pub mod chem;
pub mod dataio;
pub mod error;
pub mod evalharness;
pub mod flowcore;
pub mod mechsearch;
pub mod netmodel;
pub mod postprocess;

pub use error::{BeError, ChemError, DataError, EvalError, FlowError, ModelError, ReconstructError, RoundingError};
