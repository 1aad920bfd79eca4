use std::collections::HashMap;

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;

/// Number of charge buckets: <= -2, -1, 0, +1, >= +2.
pub const CHARGE_BUCKETS: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Named tensors laid out in one flat array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    tensors: Vec<TensorSpec>,
    index: HashMap<String, usize>,
    total: usize,
}

impl Layout {
    /// Tensor table for a model over `n_elements` element types and `n_rbf`
    /// radial basis centers.
    pub fn new(cfg: &ModelConfig, n_elements: usize, n_rbf: usize) -> Self {
        let d = cfg.embed_dim;
        let f = cfg.ffn_dim;
        let h = cfg.hidden_dim;
        let heads = cfg.heads;
        let mut specs: Vec<(String, Vec<usize>)> = vec![
            ("emb.w".into(), vec![n_elements + CHARGE_BUCKETS, d]),
            ("emb.b".into(), vec![d]),
            ("emb.lp".into(), vec![n_rbf, d]),
        ];
        for l in 0..cfg.layers {
            let p = |s: &str| format!("layer{l}.{s}");
            specs.extend([
                (p("ln1.g"), vec![d]),
                (p("ln1.b"), vec![d]),
                (p("attn.wq"), vec![d, d]),
                (p("attn.bq"), vec![d]),
                (p("attn.wk"), vec![d, d]),
                (p("attn.bk"), vec![d]),
                (p("attn.wv"), vec![d, d]),
                (p("attn.bv"), vec![d]),
                (p("attn.wo"), vec![d, d]),
                (p("attn.bo"), vec![d]),
                (p("bias.w"), vec![n_rbf, heads]),
                (p("bias.b"), vec![heads]),
                (p("ln2.g"), vec![d]),
                (p("ln2.b"), vec![d]),
                (p("ffn.w1"), vec![d, f]),
                (p("ffn.b1"), vec![f]),
                (p("ffn.w2"), vec![f, d]),
                (p("ffn.b2"), vec![d]),
            ]);
        }
        specs.extend([
            ("lnf.g".into(), vec![d]),
            ("lnf.b".into(), vec![d]),
            ("diag.w1".into(), vec![d, h]),
            ("diag.b1".into(), vec![h]),
            ("diag.w2".into(), vec![h]),
            ("diag.b2".into(), vec![1]),
            ("pair.wa".into(), vec![d, h]),
            ("pair.wr".into(), vec![n_rbf, h]),
            ("pair.b1".into(), vec![h]),
            ("pair.w2".into(), vec![h]),
            ("pair.b2".into(), vec![1]),
        ]);
        let mut tensors = Vec::with_capacity(specs.len());
        let mut index = HashMap::new();
        let mut offset = 0;
        for (name, shape) in specs {
            let len: usize = shape.iter().product();
            index.insert(name.clone(), tensors.len());
            tensors.push(TensorSpec { name, shape, offset });
            offset += len;
        }
        Layout { tensors, index, total: offset }
    }

    pub fn tensors(&self) -> &[TensorSpec] {
        &self.tensors
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn spec(&self, name: &str) -> &TensorSpec {
        let k = self.index.get(name).unwrap_or_else(|| panic!("no tensor named {name}"));
        &self.tensors[*k]
    }
}

/// Flat parameter (or gradient) storage.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    layout: std::sync::Arc<Layout>,
    data: Vec<f64>,
}

impl Parameters {
    pub fn zeros(layout: std::sync::Arc<Layout>) -> Self {
        let data = vec![0.0; layout.total()];
        Parameters { layout, data }
    }

    pub fn from_data(layout: std::sync::Arc<Layout>, data: Vec<f64>) -> Self {
        assert_eq!(layout.total(), data.len(), "parameter count");
        Parameters { layout, data }
    }

    /// Scaled normal weights (std `1/sqrt(fan_in)`), unit LayerNorm gains,
    /// zero biases, small output layers.
    pub fn init(layout: std::sync::Arc<Layout>, seed: u64) -> Self {
        let mut p = Parameters::zeros(layout.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for spec in layout.tensors() {
            let name = spec.name.as_str();
            let slice = &mut p.data[spec.offset..spec.offset + spec.len()];
            if name.ends_with(".g") {
                slice.fill(1.0);
                continue;
            }
            if spec.shape.len() == 1 && name != "diag.w2" && name != "pair.w2" {
                continue;
            }
            let fan_in = if spec.shape.len() == 2 { spec.shape[0] } else { spec.shape[0] * 8 };
            let std = 1.0 / (fan_in as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            for v in slice.iter_mut() {
                *v = normal.sample(&mut rng);
            }
        }
        p
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn shared_layout(&self) -> std::sync::Arc<Layout> {
        self.layout.clone()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn tensor(&self, name: &str) -> &[f64] {
        let s = self.layout.spec(name);
        &self.data[s.offset..s.offset + s.len()]
    }

    pub fn tensor_mut(&mut self, name: &str) -> &mut [f64] {
        let s = self.layout.spec(name).clone();
        &mut self.data[s.offset..s.offset + s.len()]
    }

    pub fn mat(&self, name: &str) -> ArrayView2<'_, f64> {
        let s = self.layout.spec(name);
        ArrayView2::from_shape((s.shape[0], s.shape[1]), &self.data[s.offset..s.offset + s.len()])
            .expect("matrix tensor")
    }

    pub fn vec(&self, name: &str) -> ArrayView1<'_, f64> {
        ArrayView1::from(self.tensor(name))
    }

    pub fn mat_mut(&mut self, name: &str) -> ArrayViewMut2<'_, f64> {
        let s = self.layout.spec(name).clone();
        ArrayViewMut2::from_shape((s.shape[0], s.shape[1]), &mut self.data[s.offset..s.offset + s.len()])
            .expect("matrix tensor")
    }

    pub fn vec_mut(&mut self, name: &str) -> ArrayViewMut1<'_, f64> {
        ArrayViewMut1::from(self.tensor_mut(name))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &Parameters, scale: f64) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }
}
