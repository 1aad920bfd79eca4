//! The learned velocity field: a graph transformer over atom tokens whose
//! attention is biased by radial-basis features of the current BE matrix.

mod checkpoint;
mod config;
mod forward;
mod params;
mod train;

use ndarray::{s, Array2};

use crate::bematrix::BEMatrix;
use crate::chem::PeriodicTable;
use crate::error::{FlowError, ModelError};
use crate::flowcore::{FlowConfig, RbfGrid, VectorField};

pub use checkpoint::{load_checkpoint, load_checkpoint_expect, save_checkpoint, CHECKPOINT_VERSION};
pub use config::{noam_lr, ModelConfig};
pub use forward::{backward, forward, time_embedding, Sample, Tape};
pub use params::{Layout, Parameters, TensorSpec, CHARGE_BUCKETS};
pub use train::{batch_loss_and_grad, make_item, train, Adam, MetricsRecord, StepPair, TrainConfig, TrainItem, TrainReport};

/// Bucket index of a formal charge: <= -2, -1, 0, +1, >= +2.
pub fn charge_bucket(q: i32) -> usize {
    (q.clamp(-2, 2) + 2) as usize
}

/// Per-atom input features: element one-hot in table order followed by the
/// charge bucket of the starting state.
pub fn atom_features(reactant: &BEMatrix, table: &PeriodicTable) -> Array2<f64> {
    let n = reactant.n_atoms();
    let e = table.len();
    let mut f = Array2::zeros((n, e + CHARGE_BUCKETS));
    for (i, a) in reactant.atoms().iter().enumerate() {
        if let Some(k) = table.index_of(a.element) {
            f[[i, k]] = 1.0;
        }
        f[[i, e + charge_bucket(reactant.formal_charge(i, table))]] = 1.0;
    }
    f
}

/// Parameters together with everything needed to interpret them.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub rbf: RbfGrid,
    pub table: PeriodicTable,
    pub params: Parameters,
}

impl Model {
    /// Freshly initialized model (seeded by `config.seed`).
    pub fn new(config: ModelConfig, flow: &FlowConfig, table: &PeriodicTable) -> Result<Self, ModelError> {
        config.validate()?;
        flow.validate()?;
        let rbf = flow.rbf();
        let layout = std::sync::Arc::new(Layout::new(&config, table.len(), rbf.len()));
        let params = Parameters::init(layout, config.seed);
        Ok(Model { config, rbf, table: table.clone(), params })
    }

    pub fn features(&self, reactant: &BEMatrix) -> Array2<f64> {
        atom_features(reactant, &self.table)
    }

    /// Velocity over the padded shape of `x`; padded entries are zero.
    pub fn predict(&self, reactant: &BEMatrix, x: &Array2<f64>, t: f64) -> Result<Array2<f64>, ModelError> {
        let n = reactant.n_atoms();
        if n > self.config.max_atoms {
            return Err(ModelError::Config(format!("{n} atoms exceed max_atoms {}", self.config.max_atoms)));
        }
        let feats = self.features(reactant);
        let state = x.slice(s![..n, ..n]).to_owned();
        let (y, _) = forward(&self.params, &self.config, &self.rbf, &Sample { features: &feats, state: &state, t })?;
        let mut out = Array2::zeros(x.dim());
        out.slice_mut(s![..n, ..n]).assign(&y);
        Ok(out)
    }
}

impl VectorField for Model {
    fn velocity(&self, reactant: &BEMatrix, x: &Array2<f64>, t: f64) -> Result<Array2<f64>, FlowError> {
        self.predict(reactant, x, t).map_err(|e| FlowError::Model(e.to_string()))
    }
}
