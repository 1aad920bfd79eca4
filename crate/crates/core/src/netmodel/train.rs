use std::io::Write;

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::forward::{backward, forward, Sample};
use super::params::Parameters;
use super::Model;
use crate::bematrix::BEMatrix;
use crate::error::ModelError;
use crate::flowcore::{cfm_loss_grad, sample_noise, FlowConfig, RbfGrid};

/// One elementary step as a pair of aligned matrices.
#[derive(Clone, Debug)]
pub struct StepPair {
    pub id: String,
    pub x0: BEMatrix,
    pub x1: BEMatrix,
}

/// A single regression example on the active block.
#[derive(Clone, Debug)]
pub struct TrainItem {
    pub features: Array2<f64>,
    pub state: Array2<f64>,
    pub target: Array2<f64>,
    pub t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    /// Validation interval in steps; 0 disables validation.
    pub eval_every: usize,
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { steps: 2000, eval_every: 250, log_every: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    /// Best validation accuracy and the step it was reached at.
    pub best: Option<(usize, f64)>,
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.98;
    const EPS: f64 = 1e-9;

    pub fn new(len: usize) -> Self {
        Adam { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn step(&mut self, params: &mut Parameters, grads: &Parameters, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t as i32);
        let c2 = 1.0 - Self::B2.powi(self.t as i32);
        for (((p, g), m), v) in params
            .data_mut()
            .iter_mut()
            .zip(grads.data())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = Self::B1 * *m + (1.0 - Self::B1) * g;
            *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Items per worker chunk. Fixed so the reduction order, and therefore every
/// bit of the result, does not depend on the thread count.
const CHUNK: usize = 4;

/// Mean loss over the batch and its gradient.
pub fn batch_loss_and_grad(
    params: &Parameters,
    cfg: &ModelConfig,
    rbf: &RbfGrid,
    items: &[TrainItem],
) -> Result<(f64, Parameters), ModelError> {
    if items.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let batch = items.len();
    let partials: Vec<Result<(f64, Parameters), ModelError>> = items
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = Parameters::zeros(params.shared_layout());
            let mut loss = 0.0;
            for it in chunk {
                let sample = Sample { features: &it.features, state: &it.state, t: it.t };
                let (y, tape) = forward(params, cfg, rbf, &sample)?;
                let n = it.state.nrows();
                if n == 0 {
                    continue;
                }
                let diff = &y - &it.target;
                loss += diff.iter().map(|v| v * v).sum::<f64>() / (n * n) as f64;
                let dy = cfm_loss_grad(&y, &it.target, n, batch);
                backward(params, cfg, &tape, &dy, &mut g);
            }
            Ok((loss, g))
        })
        .collect();
    let mut total = Parameters::zeros(params.shared_layout());
    let mut loss = 0.0;
    for part in partials {
        let (l, g) = part?;
        loss += l;
        total.add_scaled(&g, 1.0);
    }
    Ok((loss / batch as f64, total))
}

/// Draw `t`, noise the interpolant and build the regression target.
pub fn make_item<R: Rng + ?Sized>(model: &Model, pair: &StepPair, sigma: f64, rng: &mut R) -> TrainItem {
    let n = pair.x0.n_atoms();
    let x0 = pair.x0.to_f64().slice(s![..n, ..n]).to_owned();
    let x1 = pair.x1.to_f64().slice(s![..n, ..n]).to_owned();
    let t: f64 = rng.random();
    let mut state = &x1 * t + &x0 * (1.0 - t);
    state += sample_noise(n, n, sigma, rng).entries();
    TrainItem { features: model.features(&pair.x0), state, target: &x1 - &x0, t }
}

/// Minimize the flow-matching loss with Adam under the Noam schedule.
///
/// Starts from the model's current parameters, so it doubles as warm-start
/// fine-tuning. With `validate`, accuracy is measured every
/// `eval_every` steps and the best parameters are kept.
pub fn train(
    model: &mut Model,
    data: &[StepPair],
    flow: &FlowConfig,
    tc: &TrainConfig,
    mut validate: Option<&mut dyn FnMut(&Model) -> f64>,
    mut log: Option<&mut dyn Write>,
) -> Result<TrainReport, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    for p in data {
        if p.x0.n_atoms() > model.config.max_atoms {
            return Err(ModelError::Config(format!(
                "record {} has {} atoms, max_atoms is {}",
                p.id,
                p.x0.n_atoms(),
                model.config.max_atoms
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed ^ 0x5eed_0f_f10e);
    let mut adam = Adam::new(model.params.len());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut report = TrainReport::default();
    let mut best_params: Option<Parameters> = None;
    for step in 1..=tc.steps {
        let mut batch_ids = Vec::with_capacity(model.config.batch_size);
        for _ in 0..model.config.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch_ids.push(order[cursor]);
            cursor += 1;
        }
        let items: Vec<TrainItem> = batch_ids.iter().map(|&k| make_item(model, &data[k], flow.sigma, &mut rng)).collect();
        let (loss, grads) = batch_loss_and_grad(&model.params, &model.config, &model.rbf, &items)?;
        if !loss.is_finite() || !grads.all_finite() {
            return Err(ModelError::Diverged {
                step,
                loss,
                batch: batch_ids.iter().map(|&k| data[k].id.clone()).collect(),
            });
        }
        let lr = model.config.lr_at(step);
        adam.step(&mut model.params, &grads, lr);
        report.losses.push(loss);

        let mut val = None;
        if let Some(v) = validate.as_mut() {
            if tc.eval_every > 0 && (step % tc.eval_every == 0 || step == tc.steps) {
                let acc = v(model);
                if report.best.is_none_or(|(_, b)| acc >= b) {
                    report.best = Some((step, acc));
                    best_params = Some(model.params.clone());
                }
                val = Some(acc);
            }
        }
        if let Some(w) = log.as_mut() {
            if val.is_some() || step == 1 || step == tc.steps || (tc.log_every > 0 && step % tc.log_every == 0) {
                let rec = MetricsRecord { step, loss, lr, val_accuracy: val };
                writeln!(w, "{}", serde_json::to_string(&rec).expect("plain record"))?;
            }
        }
        log::debug!("step {step} loss {loss:.6} lr {lr:.3e}");
    }
    if let Some(p) = best_params {
        model.params = p;
    }
    Ok(report)
}
