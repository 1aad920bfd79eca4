//! Conditional flow matching on BE matrices: noise, interpolant, target,
//! loss, RBF featurization and Euler integration.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bematrix::{BEMatrix, DeltaBE};
use crate::error::FlowError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub sigma: f64,
    pub rbf_low: f64,
    pub rbf_high: f64,
    pub rbf_step: f64,
    pub rbf_gamma: f64,
    pub euler_steps: usize,
    pub seed: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            sigma: 0.15,
            rbf_low: 0.0,
            rbf_high: 8.0,
            rbf_step: 0.1,
            rbf_gamma: 10.0,
            euler_steps: 10,
            seed: 0,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(FlowError::Config(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.rbf_step > 0.0 && self.rbf_high >= self.rbf_low) {
            return Err(FlowError::Config("rbf grid is empty".into()));
        }
        if !(self.rbf_gamma > 0.0) {
            return Err(FlowError::Config("rbf_gamma must be positive".into()));
        }
        if self.euler_steps == 0 {
            return Err(FlowError::Config("euler_steps must be >= 1".into()));
        }
        Ok(())
    }

    pub fn rbf(&self) -> RbfGrid {
        RbfGrid::new(self.rbf_low, self.rbf_high, self.rbf_step, self.rbf_gamma)
    }
}

/// Gaussian radial basis expansion over evenly spaced centers.
#[derive(Clone, Debug, PartialEq)]
pub struct RbfGrid {
    centers: Vec<f64>,
    gamma: f64,
    // exp(-2·gamma·step²), the change of the neighbour ratio per center
    decay: f64,
}

impl RbfGrid {
    pub fn new(low: f64, high: f64, step: f64, gamma: f64) -> Self {
        let count = ((high - low) / step + 1e-9).floor() as usize + 1;
        let centers = (0..count).map(|k| low + k as f64 * step).collect();
        RbfGrid { centers, gamma, decay: (-2.0 * gamma * step * step).exp() }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn featurize(&self, value: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.featurize_into(value, &mut out);
        out
    }

    /// Three exponentials per value: the nearest center directly, the rest by
    /// the Gaussian ratio recurrence walking outwards from it.
    pub fn featurize_into(&self, value: f64, out: &mut [f64]) {
        let c = &self.centers;
        let m = c.len().min(out.len());
        if m == 0 {
            return;
        }
        if m == 1 || !value.is_finite() {
            for (o, c) in out.iter_mut().zip(c) {
                let d = value - c;
                *o = (-self.gamma * d * d).exp();
            }
            return;
        }
        let step = c[1] - c[0];
        let k = (((value - c[0]) / step).round().max(0.0) as usize).min(m - 1);
        let d = value - c[k];
        out[k] = (-self.gamma * d * d).exp();
        let h2 = self.gamma * step * step;
        let mut up = (2.0 * self.gamma * step * d - h2).exp();
        for i in k + 1..m {
            out[i] = out[i - 1] * up;
            up *= self.decay;
        }
        let mut down = (-2.0 * self.gamma * step * d - h2).exp();
        for i in (0..k).rev() {
            out[i] = out[i + 1] * down;
            down *= self.decay;
        }
    }
}

pub fn rbf_featurize(value: f64, config: &FlowConfig) -> Vec<f64> {
    config.rbf().featurize(value)
}

/// Symmetric noise whose active block sums to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricNoise(pub Array2<f64>);

impl SymmetricNoise {
    pub fn entries(&self) -> &Array2<f64> {
        &self.0
    }
}

/// Draw standard normals on the diagonal and upper triangle of the first
/// `n_active` rows, mirror, remove the mean of the active block and scale.
pub fn sample_noise<R: Rng + ?Sized>(size: usize, n_active: usize, sigma: f64, rng: &mut R) -> SymmetricNoise {
    let mut e = Array2::zeros((size, size));
    if sigma == 0.0 || n_active == 0 {
        return SymmetricNoise(e);
    }
    for i in 0..n_active {
        for j in i..n_active {
            let z: f64 = rng.sample(StandardNormal);
            e[[i, j]] = z;
            e[[j, i]] = z;
        }
    }
    let m = (n_active * n_active) as f64;
    let mean = e.sum() / m;
    for i in 0..n_active {
        for j in 0..n_active {
            e[[i, j]] = (e[[i, j]] - mean) * sigma;
        }
    }
    SymmetricNoise(e)
}

fn check_shapes(a: &Array2<f64>, b: &Array2<f64>) -> Result<(), FlowError> {
    if a.dim() != b.dim() {
        return Err(FlowError::ShapeMismatch(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// `t·x1 + (1−t)·x0` plus symmetric zero-sum noise.
pub fn sample_path_point<R: Rng + ?Sized>(
    x0: &Array2<f64>,
    x1: &Array2<f64>,
    t: f64,
    sigma: f64,
    n_active: usize,
    rng: &mut R,
) -> Result<Array2<f64>, FlowError> {
    check_shapes(x0, x1)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(FlowError::Config(format!("t = {t} outside [0, 1]")));
    }
    let mut x = x1 * t + x0 * (1.0 - t);
    if sigma > 0.0 {
        x += sample_noise(x0.nrows(), n_active, sigma, rng).entries();
    }
    Ok(x)
}

/// The conditional velocity `x1 − x0`.
pub fn target_field(x0: &Array2<f64>, x1: &Array2<f64>) -> Result<DeltaBE, FlowError> {
    check_shapes(x0, x1)?;
    let d = x1 - x0;
    let s = d.sum();
    let scale = x0.iter().chain(x1.iter()).fold(1.0f64, |m, v| m.max(v.abs()));
    if s.abs() > 1e-9 * scale * d.len() as f64 {
        return Err(FlowError::ShapeMismatch(format!("endpoints carry different totals (delta sums to {s})")));
    }
    Ok(DeltaBE::new(d))
}

/// Mean over the batch of the mean squared error over active entries.
pub fn cfm_loss(predicted: &[Array2<f64>], target: &[Array2<f64>], n_active: &[usize]) -> Result<f64, FlowError> {
    if predicted.is_empty() {
        return Err(FlowError::EmptyBatch);
    }
    if predicted.len() != target.len() || predicted.len() != n_active.len() {
        return Err(FlowError::ShapeMismatch("batch lengths differ".into()));
    }
    let mut total = 0.0;
    for ((p, t), &n) in predicted.iter().zip(target).zip(n_active) {
        check_shapes(p, t)?;
        if n == 0 {
            continue;
        }
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d = p[[i, j]] - t[[i, j]];
                s += d * d;
            }
        }
        total += s / (n * n) as f64;
    }
    Ok(total / predicted.len() as f64)
}

/// Gradient of [`cfm_loss`] with respect to one batch member's prediction.
pub fn cfm_loss_grad(predicted: &Array2<f64>, target: &Array2<f64>, n_active: usize, batch: usize) -> Array2<f64> {
    let mut g = Array2::zeros(predicted.dim());
    if n_active == 0 {
        return g;
    }
    let scale = 2.0 / ((n_active * n_active) as f64 * batch as f64);
    for i in 0..n_active {
        for j in 0..n_active {
            g[[i, j]] = scale * (predicted[[i, j]] - target[[i, j]]);
        }
    }
    g
}

/// A learned or synthetic velocity field conditioned on the starting state.
pub trait VectorField: Sync {
    /// Velocity at state `x` and time `t`; `reactant` is the step's input
    /// matrix and fixes the atom list.
    fn velocity(&self, reactant: &BEMatrix, x: &Array2<f64>, t: f64) -> Result<Array2<f64>, FlowError>;
}

/// Forward Euler from `t = 0` to `t = 1` in `steps` equal steps.
pub fn euler_integrate<F>(field: F, x0: &Array2<f64>, steps: usize) -> Result<Array2<f64>, FlowError>
where
    F: FnMut(f64, &Array2<f64>) -> Result<Array2<f64>, FlowError>,
{
    euler_integrate_observed(field, x0, steps, |_, _| {})
}

/// [`euler_integrate`] calling `observe(k, x)` after each step `k`.
pub fn euler_integrate_observed<F, O>(
    mut field: F,
    x0: &Array2<f64>,
    steps: usize,
    mut observe: O,
) -> Result<Array2<f64>, FlowError>
where
    F: FnMut(f64, &Array2<f64>) -> Result<Array2<f64>, FlowError>,
    O: FnMut(usize, &Array2<f64>),
{
    if steps == 0 {
        return Err(FlowError::Config("euler_steps must be >= 1".into()));
    }
    let dt = 1.0 / steps as f64;
    let mut x = x0.clone();
    for k in 0..steps {
        let t = k as f64 * dt;
        let v = field(t, &x)?;
        check_shapes(&x, &v)?;
        if v.iter().any(|f| !f.is_finite()) {
            return Err(FlowError::NonFinite { step: k, t });
        }
        x.scaled_add(dt, &v);
        observe(k, &x);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noise_is_symmetric_and_zero_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = sample_noise(8, 5, 0.15, &mut rng);
        assert_eq!(z.0, z.0.t());
        assert!(z.0.sum().abs() < 1e-12);
        assert!(z.0.row(6).iter().all(|&v| v == 0.0));
        assert!(sample_noise(4, 4, 0.0, &mut rng).0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn path_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x0 = ndarray::arr2(&[[4.0, 2.0], [2.0, 0.0]]);
        let x1 = ndarray::arr2(&[[2.0, 4.0], [4.0, -2.0]]);
        assert_eq!(sample_path_point(&x0, &x1, 0.0, 0.0, 2, &mut rng).unwrap(), x0);
        assert_eq!(sample_path_point(&x0, &x1, 1.0, 0.0, 2, &mut rng).unwrap(), x1);
        let mid = sample_path_point(&x0, &x1, 0.5, 0.0, 2, &mut rng).unwrap();
        assert_eq!(mid, ndarray::arr2(&[[3.0, 3.0], [3.0, -1.0]]));
        assert!(sample_path_point(&x0, &Array2::zeros((3, 3)), 0.5, 0.0, 2, &mut rng).is_err());
    }

    #[test]
    fn rbf_grid() {
        let cfg = FlowConfig::default();
        let v = rbf_featurize(2.0, &cfg);
        assert_eq!(v.len(), 81);
        assert_eq!(v[20], 1.0);
        assert!((v[21] - (-cfg.rbf_gamma * 0.01f64).exp()).abs() < 1e-12);
        let mut a = rbf_featurize(0.0, &cfg);
        a.reverse();
        let b = rbf_featurize(8.0, &cfg);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        let grid = cfg.rbf();
        for v in [-3.0, -0.04, 0.0, 0.05, 1.234, 3.95, 7.99, 8.0, 8.3, 12.0] {
            let got = grid.featurize(v);
            for (g, c) in got.iter().zip(grid.centers()) {
                let want = (-cfg.rbf_gamma * (v - c) * (v - c)).exp();
                assert!((g - want).abs() <= 1e-12 * want + 1e-250, "{v} at {c}: {g} vs {want}");
            }
        }
    }

    #[test]
    fn loss_examples() {
        let t = ndarray::arr2(&[[1.0, -1.0], [-1.0, 1.0]]);
        assert_eq!(cfm_loss(&[t.clone()], &[t.clone()], &[2]).unwrap(), 0.0);
        let p = &t + 1.0;
        assert_eq!(cfm_loss(&[p], &[t], &[2]).unwrap(), 1.0);
        assert!(matches!(cfm_loss(&[], &[], &[]), Err(FlowError::EmptyBatch)));
    }

    #[test]
    fn euler_constant_field() {
        let x0 = ndarray::arr2(&[[4.0, 2.0], [2.0, 0.0]]);
        let x1 = ndarray::arr2(&[[2.0, 4.0], [4.0, -2.0]]);
        let d = &x1 - &x0;
        for steps in [1, 2, 4, 8] {
            let out = euler_integrate(|_, _| Ok(d.clone()), &x0, steps).unwrap();
            assert_eq!(out, x1, "steps {steps}");
        }
        let err = euler_integrate(|t, _| Ok(Array2::from_elem((2, 2), if t > 0.4 { f64::NAN } else { 0.0 })), &x0, 5);
        assert!(matches!(err, Err(FlowError::NonFinite { step: 3, .. })));
    }
}
