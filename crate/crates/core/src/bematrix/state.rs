use ndarray::Array2;

use super::{BEMatrix, BeAtom};

/// Real-valued matrix somewhere along a flow trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousState {
    pub atoms: Vec<BeAtom>,
    pub entries: Array2<f64>,
    pub t: f64,
}

impl ContinuousState {
    pub fn from_be(be: &BEMatrix, t: f64) -> Self {
        ContinuousState { atoms: be.atoms().to_vec(), entries: be.to_f64(), t }
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..self.entries.nrows()).map(|i| i < self.atoms.len()).collect()
    }

    pub fn sum(&self) -> f64 {
        self.entries.sum()
    }
}

/// Electron-count change between two states; symmetric with zero total.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaBE {
    entries: Array2<f64>,
}

impl DeltaBE {
    pub fn new(entries: Array2<f64>) -> Self {
        DeltaBE { entries }
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<f64> {
        self.entries
    }

    pub fn sum(&self) -> f64 {
        self.entries.sum()
    }

    pub fn is_symmetric(&self) -> bool {
        self.entries == self.entries.t()
    }
}
