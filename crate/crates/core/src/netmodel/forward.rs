//! Graph transformer forward pass and its hand-written reverse pass.
//!
//! Everything runs on the active (unpadded) atoms of one sample. Pair values
//! are stored flat with row `i * n + j`.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use super::config::ModelConfig;
use super::params::Parameters;
use crate::error::ModelError;
use crate::flowcore::RbfGrid;

const LN_EPS: f64 = 1e-5;
/// Time is stretched before the sinusoidal embedding so that the lowest
/// frequencies still vary across `[0, 1]`.
const TIME_SCALE: f64 = 100.0;

/// Inputs of one forward pass.
pub struct Sample<'a> {
    /// `n × (elements + charge buckets)` one-hot rows.
    pub features: &'a Array2<f64>,
    /// Active `n × n` block of the current state.
    pub state: &'a Array2<f64>,
    pub t: f64,
}

struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

struct LayerTape {
    ln1: LnCache,
    a: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    o: Array2<f64>,
    ln2: LnCache,
    c: Array2<f64>,
    u: Array2<f64>,
    g: Array2<f64>,
}

/// Intermediate values kept for the reverse pass.
pub struct Tape {
    n: usize,
    features: Array2<f64>,
    phi: Array2<f64>,
    phi_diag: Array2<f64>,
    pairs: Vec<(usize, usize)>,
    phi_pairs: Array2<f64>,
    layers: Vec<LayerTape>,
    lnf: LnCache,
    hf: Array2<f64>,
    diag_u: Array2<f64>,
    diag_g: Array2<f64>,
    pair_pre: Array2<f64>,
    pair_g: Array2<f64>,
}

pub fn time_embedding(t: f64, d: usize) -> Array1<f64> {
    let half = d / 2;
    let mut e = Array1::zeros(d);
    for k in 0..half {
        let f = (-(10000f64.ln()) * k as f64 / half as f64).exp();
        let a = TIME_SCALE * t * f;
        e[k] = a.sin();
        e[half + k] = a.cos();
    }
    e
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let th = (C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn layer_norm(x: &Array2<f64>, g: ArrayView1<f64>, b: ArrayView1<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, is) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.dot(&row) / d;
        *is = 1.0 / (var + LN_EPS).sqrt();
        row *= *is;
    }
    let y = &xhat * &g + &b;
    (y, LnCache { xhat, inv_std })
}

fn layer_norm_back(
    dy: &Array2<f64>,
    cache: &LnCache,
    g: ArrayView1<f64>,
    grads: &mut Parameters,
    gname: &str,
    bname: &str,
) -> Array2<f64> {
    grads.vec_mut(gname).scaled_add(1.0, &(dy * &cache.xhat).sum_axis(Axis(0)));
    grads.vec_mut(bname).scaled_add(1.0, &dy.sum_axis(Axis(0)));
    let dxhat = dy * &g;
    let d = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.dim());
    for i in 0..dy.nrows() {
        let dh = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let m1 = dh.sum() / d;
        let m2 = dh.dot(&xh) / d;
        let mut out = dx.row_mut(i);
        for k in 0..dy.ncols() {
            out[k] = cache.inv_std[i] * (dh[k] - m1 - xh[k] * m2);
        }
    }
    dx
}

fn softmax_rows(s: &mut Array2<f64>) {
    for mut row in s.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row /= z;
    }
}

fn check_finite(x: &Array2<f64>, layer: usize) -> Result<(), ModelError> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::NonFinite { layer })
    }
}

/// Forward pass. Returns the `n × n` velocity (symmetric, zero-sum) and the
/// tape needed by [`backward`].
pub fn forward(
    params: &Parameters,
    cfg: &ModelConfig,
    rbf: &RbfGrid,
    sample: &Sample<'_>,
) -> Result<(Array2<f64>, Tape), ModelError> {
    let n = sample.state.nrows();
    let d = cfg.embed_dim;
    let heads = cfg.heads;
    let dh = d / heads;
    let r = rbf.len();
    let x = sample.state;

    let mut phi = Array2::zeros((n * n, r));
    for i in 0..n {
        for j in 0..n {
            let v = 0.5 * (x[[i, j]] + x[[j, i]]);
            rbf.featurize_into(v, phi.row_mut(i * n + j).as_slice_mut().expect("contiguous"));
        }
    }
    let diag_rows: Vec<usize> = (0..n).map(|i| i * n + i).collect();
    let phi_diag = phi.select(Axis(0), &diag_rows);
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let pair_rows: Vec<usize> = pairs.iter().map(|&(i, j)| i * n + j).collect();
    let phi_pairs = phi.select(Axis(0), &pair_rows);

    let mut h = sample.features.dot(&params.mat("emb.w")) + &params.vec("emb.b");
    h += &phi_diag.dot(&params.mat("emb.lp"));
    h += &time_embedding(sample.t, d);
    check_finite(&h, 0)?;

    let mut layers = Vec::with_capacity(cfg.layers);
    let scale = 1.0 / (dh as f64).sqrt();
    for l in 0..cfg.layers {
        let name = |s: &str| format!("layer{l}.{s}");
        let (a, ln1) = layer_norm(&h, params.vec(&name("ln1.g")), params.vec(&name("ln1.b")));
        let q = a.dot(&params.mat(&name("attn.wq"))) + &params.vec(&name("attn.bq"));
        let k = a.dot(&params.mat(&name("attn.wk"))) + &params.vec(&name("attn.bk"));
        let v = a.dot(&params.mat(&name("attn.wv"))) + &params.vec(&name("attn.bv"));
        let bias = phi.dot(&params.mat(&name("bias.w"))) + &params.vec(&name("bias.b"));
        let mut o = Array2::zeros((n, d));
        let mut probs = Vec::with_capacity(heads);
        for hd in 0..heads {
            let cols = s![.., hd * dh..(hd + 1) * dh];
            let mut sc = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            for i in 0..n {
                for j in 0..n {
                    sc[[i, j]] += bias[[i * n + j, hd]];
                }
            }
            softmax_rows(&mut sc);
            o.slice_mut(cols).assign(&sc.dot(&v.slice(cols)));
            probs.push(sc);
        }
        h = h + o.dot(&params.mat(&name("attn.wo"))) + &params.vec(&name("attn.bo"));
        let (c, ln2) = layer_norm(&h, params.vec(&name("ln2.g")), params.vec(&name("ln2.b")));
        let u = c.dot(&params.mat(&name("ffn.w1"))) + &params.vec(&name("ffn.b1"));
        let g = u.mapv(gelu);
        h = h + g.dot(&params.mat(&name("ffn.w2"))) + &params.vec(&name("ffn.b2"));
        check_finite(&h, l + 1)?;
        layers.push(LayerTape { ln1, a, q, k, v, probs, o, ln2, c, u, g });
    }
    let (hf, lnf) = layer_norm(&h, params.vec("lnf.g"), params.vec("lnf.b"));

    let diag_u = hf.dot(&params.mat("diag.w1")) + &params.vec("diag.b1");
    let diag_g = diag_u.mapv(gelu);
    let diag_y = diag_g.dot(&params.vec("diag.w2")) + params.tensor("diag.b2")[0];

    let aa = hf.dot(&params.mat("pair.wa"));
    let mut pair_pre = phi_pairs.dot(&params.mat("pair.wr")) + &params.vec("pair.b1");
    for (p, &(i, j)) in pairs.iter().enumerate() {
        let mut row = pair_pre.row_mut(p);
        row += &aa.row(i);
        row += &aa.row(j);
    }
    let pair_g = pair_pre.mapv(gelu);
    let pair_z = pair_g.dot(&params.vec("pair.w2")) + params.tensor("pair.b2")[0];

    let mut y = Array2::zeros((n, n));
    for i in 0..n {
        y[[i, i]] = diag_y[i];
    }
    for (p, &(i, j)) in pairs.iter().enumerate() {
        y[[i, j]] = pair_z[p];
        y[[j, i]] = pair_z[p];
    }
    if n > 0 {
        let mean = y.sum() / (n * n) as f64;
        y -= mean;
    }
    check_finite(&y, cfg.layers + 1)?;

    let tape = Tape {
        n,
        features: sample.features.clone(),
        phi,
        phi_diag,
        pairs,
        phi_pairs,
        layers,
        lnf,
        hf,
        diag_u,
        diag_g,
        pair_pre,
        pair_g,
    };
    Ok((y, tape))
}

/// Accumulate into `grads` the gradient of a scalar whose derivative with
/// respect to the forward output is `d_out`.
pub fn backward(params: &Parameters, cfg: &ModelConfig, tape: &Tape, d_out: &Array2<f64>, grads: &mut Parameters) {
    let n = tape.n;
    if n == 0 {
        return;
    }
    let d = cfg.embed_dim;
    let heads = cfg.heads;
    let dh = d / heads;

    // zero-sum projection
    let dy = d_out - d_out.sum() / (n * n) as f64;

    // diagonal head
    let d_diag: Array1<f64> = (0..n).map(|i| dy[[i, i]]).collect();
    grads.vec_mut("diag.w2").scaled_add(1.0, &tape.diag_g.t().dot(&d_diag));
    grads.tensor_mut("diag.b2")[0] += d_diag.sum();
    let w2 = params.vec("diag.w2");
    let mut du = Array2::zeros(tape.diag_u.dim());
    for i in 0..n {
        for k in 0..w2.len() {
            du[[i, k]] = d_diag[i] * w2[k] * gelu_grad(tape.diag_u[[i, k]]);
        }
    }
    grads.mat_mut("diag.w1").scaled_add(1.0, &tape.hf.t().dot(&du));
    grads.vec_mut("diag.b1").scaled_add(1.0, &du.sum_axis(Axis(0)));
    let mut dhf = du.dot(&params.mat("diag.w1").t());

    // pair head
    let dz: Array1<f64> = tape.pairs.iter().map(|&(i, j)| dy[[i, j]] + dy[[j, i]]).collect();
    grads.vec_mut("pair.w2").scaled_add(1.0, &tape.pair_g.t().dot(&dz));
    grads.tensor_mut("pair.b2")[0] += dz.sum();
    let pw2 = params.vec("pair.w2");
    let mut dpre = Array2::zeros(tape.pair_pre.dim());
    for p in 0..tape.pairs.len() {
        for k in 0..pw2.len() {
            dpre[[p, k]] = dz[p] * pw2[k] * gelu_grad(tape.pair_pre[[p, k]]);
        }
    }
    grads.vec_mut("pair.b1").scaled_add(1.0, &dpre.sum_axis(Axis(0)));
    grads.mat_mut("pair.wr").scaled_add(1.0, &tape.phi_pairs.t().dot(&dpre));
    let mut daa = Array2::zeros((n, cfg.hidden_dim));
    for (p, &(i, j)) in tape.pairs.iter().enumerate() {
        let row = dpre.row(p);
        daa.row_mut(i).scaled_add(1.0, &row);
        daa.row_mut(j).scaled_add(1.0, &row);
    }
    grads.mat_mut("pair.wa").scaled_add(1.0, &tape.hf.t().dot(&daa));
    dhf += &daa.dot(&params.mat("pair.wa").t());

    let mut dh_res = layer_norm_back(&dhf, &tape.lnf, params.vec("lnf.g"), grads, "lnf.g", "lnf.b");

    let scale = 1.0 / (dh as f64).sqrt();
    let mut dbias = Array2::zeros((n * n, heads));
    for l in (0..cfg.layers).rev() {
        let name = |s: &str| format!("layer{l}.{s}");
        let lt = &tape.layers[l];

        // feed-forward sublayer
        grads.mat_mut(&name("ffn.w2")).scaled_add(1.0, &lt.g.t().dot(&dh_res));
        grads.vec_mut(&name("ffn.b2")).scaled_add(1.0, &dh_res.sum_axis(Axis(0)));
        let dg = dh_res.dot(&params.mat(&name("ffn.w2")).t());
        let du = &dg * &lt.u.mapv(gelu_grad);
        grads.mat_mut(&name("ffn.w1")).scaled_add(1.0, &lt.c.t().dot(&du));
        grads.vec_mut(&name("ffn.b1")).scaled_add(1.0, &du.sum_axis(Axis(0)));
        let dc = du.dot(&params.mat(&name("ffn.w1")).t());
        dh_res += &layer_norm_back(&dc, &lt.ln2, params.vec(&name("ln2.g")), grads, &name("ln2.g"), &name("ln2.b"));

        // attention sublayer
        grads.mat_mut(&name("attn.wo")).scaled_add(1.0, &lt.o.t().dot(&dh_res));
        grads.vec_mut(&name("attn.bo")).scaled_add(1.0, &dh_res.sum_axis(Axis(0)));
        let do_ = dh_res.dot(&params.mat(&name("attn.wo")).t());
        let mut dq = Array2::zeros((n, d));
        let mut dk = Array2::zeros((n, d));
        let mut dv = Array2::zeros((n, d));
        for hd in 0..heads {
            let cols = s![.., hd * dh..(hd + 1) * dh];
            let p = &lt.probs[hd];
            let doh = do_.slice(cols);
            let dp = doh.dot(&lt.v.slice(cols).t());
            dv.slice_mut(cols).assign(&p.t().dot(&doh));
            let mut ds = Array2::zeros((n, n));
            for i in 0..n {
                let dot: f64 = (0..n).map(|j| p[[i, j]] * dp[[i, j]]).sum();
                for j in 0..n {
                    let v = p[[i, j]] * (dp[[i, j]] - dot);
                    ds[[i, j]] = v;
                    dbias[[i * n + j, hd]] = v;
                }
            }
            dq.slice_mut(cols).assign(&(ds.dot(&lt.k.slice(cols)) * scale));
            dk.slice_mut(cols).assign(&(ds.t().dot(&lt.q.slice(cols)) * scale));
        }
        grads.mat_mut(&name("bias.w")).scaled_add(1.0, &tape.phi.t().dot(&dbias));
        grads.vec_mut(&name("bias.b")).scaled_add(1.0, &dbias.sum_axis(Axis(0)));
        let mut da = Array2::zeros((n, d));
        for (w, b, g) in [("attn.wq", "attn.bq", &dq), ("attn.wk", "attn.bk", &dk), ("attn.wv", "attn.bv", &dv)] {
            grads.mat_mut(&name(w)).scaled_add(1.0, &lt.a.t().dot(g));
            grads.vec_mut(&name(b)).scaled_add(1.0, &g.sum_axis(Axis(0)));
            da += &g.dot(&params.mat(&name(w)).t());
        }
        dh_res += &layer_norm_back(&da, &lt.ln1, params.vec(&name("ln1.g")), grads, &name("ln1.g"), &name("ln1.b"));
    }

    grads.mat_mut("emb.w").scaled_add(1.0, &tape.features.t().dot(&dh_res));
    grads.vec_mut("emb.b").scaled_add(1.0, &dh_res.sum_axis(Axis(0)));
    grads.mat_mut("emb.lp").scaled_add(1.0, &tape.phi_diag.t().dot(&dh_res));
}
