//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use fanin_xmc::data::SparseRow;
use fanin_xmc::model::{total_loss, AuxCutoff, Gradients, LossKind, Model, ModelConfig};
use fanin_xmc::sparse::{FixedFanInLayer, SparseDelta};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `||a - b|| / ||b||` over all entries, with `0/0 = 0`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if norm == 0.0 {
        diff
    } else {
        diff / norm
    }
}

/// Dense masked weight matrix built entry by entry from the layer's rows.
pub fn masked_dense(layer: &FixedFanInLayer<f64>) -> Array2<f64> {
    let mut w = Array2::zeros((layer.rows(), layer.cols()));
    for l in 0..layer.rows() {
        for (c, v) in layer.row_columns(l).into_iter().zip(layer.row_weights(l)) {
            w[[l, c]] = *v;
        }
    }
    w
}

/// `x W^T` by explicit loops.
pub fn oracle_forward(w: &Array2<f64>, x: &Array2<f64>) -> Array2<f64> {
    let (b, d) = x.dim();
    let l = w.nrows();
    let mut out = Array2::zeros((b, l));
    for i in 0..b {
        for j in 0..l {
            let mut s = 0.0;
            for k in 0..d {
                s += x[[i, k]] * w[[j, k]];
            }
            out[[i, j]] = s;
        }
    }
    out
}

/// Gradient of the active slots: `dW[l, c] = sum_b delta[b, l] x[b, c]`,
/// read out in the layer's slot order.
pub fn oracle_backward_weights(layer: &FixedFanInLayer<f64>, x: &Array2<f64>, delta: &Array2<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(layer.rows() * layer.fan_in());
    for l in 0..layer.rows() {
        for c in layer.row_columns(l) {
            let mut s = 0.0;
            for b in 0..x.nrows() {
                s += delta[[b, l]] * x[[b, c]];
            }
            out.push(s);
        }
    }
    out
}

/// `delta W` by explicit loops.
pub fn oracle_backward_input(w: &Array2<f64>, delta: &Array2<f64>) -> Array2<f64> {
    let (b, l) = delta.dim();
    let d = w.ncols();
    let mut out = Array2::zeros((b, d));
    for i in 0..b {
        for k in 0..d {
            let mut s = 0.0;
            for j in 0..l {
                s += delta[[i, j]] * w[[j, k]];
            }
            out[[i, k]] = s;
        }
    }
    out
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

/// Random delta where each entry is non-zero with probability `density`.
pub fn random_delta(
    rng: &mut ChaCha8Rng,
    batch: usize,
    labels: usize,
    density: f64,
) -> (SparseDelta<f64>, Array2<f64>) {
    let mut dense = Array2::zeros((batch, labels));
    for v in dense.iter_mut() {
        if rng.random_bool(density) {
            *v = rng.random_range(-1.0..1.0);
        }
    }
    (SparseDelta::from_dense(&dense, 0.0), dense)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Top-k by a full sort on (score desc, id asc).
pub fn brute_top_k(scores: &[f64], k: usize) -> Vec<u32> {
    let mut ids: Vec<u32> = (0..scores.len() as u32).collect();
    ids.sort_by(|&a, &b| scores[b as usize].partial_cmp(&scores[a as usize]).unwrap().then(a.cmp(&b)));
    ids.truncate(k);
    ids
}

/// Precision, propensity-scored precision and literal macro precision by
/// direct enumeration.
pub fn brute_metrics(
    truth: &[Vec<u32>],
    scores: &[Vec<f64>],
    p: &[f64],
    k: usize,
    num_labels: usize,
) -> (f64, f64, f64) {
    let n = truth.len() as f64;
    let (mut prec, mut psp, mut mac) = (0.0, 0.0, 0.0);
    for (t, s) in truth.iter().zip(scores) {
        let top = brute_top_k(s, k);
        let mut hits = 0usize;
        let mut weighted = 0.0;
        for l in &top {
            if t.contains(l) {
                hits += 1;
                weighted += 1.0 / p[*l as usize];
            }
        }
        prec += hits as f64 / k as f64;
        psp += weighted / k as f64;
        mac += hits as f64 / k.min(top.len()) as f64;
    }
    (prec / n, psp / n, mac / num_labels as f64)
}

const H: f64 = 1e-5;

pub fn fd_config(loss: LossKind) -> ModelConfig {
    ModelConfig {
        encoder_dims: vec![7, 6, 5],
        use_intermediate: true,
        intermediate_size: 8,
        fan_in: 3,
        aux_enabled: true,
        num_clusters: 3,
        aux_cutoff: AuxCutoff::Epoch(2),
        aux_initial_scale: 1.0,
        loss,
        bce_pos_weight: 2.0,
        ..ModelConfig::default()
    }
}

pub fn fd_batch() -> (Vec<SparseRow>, Vec<Vec<u32>>, Vec<Vec<u32>>) {
    let rows = vec![
        SparseRow::from_pairs(vec![(0, 0.8), (3, -0.5), (6, 1.2)]),
        SparseRow::from_pairs(vec![(1, 1.0), (2, 0.3)]),
        SparseRow::from_pairs(vec![(4, -0.7), (5, 0.9), (6, 0.2)]),
    ];
    let targets = vec![vec![0, 4], vec![2], vec![1, 5]];
    let meta = vec![vec![0, 2], vec![1], vec![0, 1]];
    (rows, targets, meta)
}

pub fn params_mut(m: &mut Model<f64>) -> Vec<&mut [f64]> {
    let mut out: Vec<&mut [f64]> = Vec::new();
    for l in &mut m.encoder.layers {
        out.push(l.weight.as_slice_mut().unwrap());
        out.push(l.bias.as_slice_mut().unwrap());
    }
    if let Some(l) = &mut m.intermediate {
        out.push(l.weight.as_slice_mut().unwrap());
        out.push(l.bias.as_slice_mut().unwrap());
    }
    out.push(m.head.weights_mut());
    if let Some(l) = &mut m.aux {
        out.push(l.weight.as_slice_mut().unwrap());
        out.push(l.bias.as_slice_mut().unwrap());
    }
    out
}

pub fn flat(g: &Gradients<f64>) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for l in &g.encoder {
        out.push(l.weight.as_standard_layout().as_slice().unwrap().to_vec());
        out.push(l.bias.to_vec());
    }
    if let Some(l) = &g.intermediate {
        out.push(l.weight.as_standard_layout().as_slice().unwrap().to_vec());
        out.push(l.bias.to_vec());
    }
    out.push(g.head.clone());
    if let Some(l) = &g.aux {
        out.push(l.weight.as_standard_layout().as_slice().unwrap().to_vec());
        out.push(l.bias.to_vec());
    }
    out
}

pub fn loss_at(m: &Model<f64>, epoch: f64) -> f64 {
    let (rows, targets, meta) = fd_batch();
    let refs: Vec<&SparseRow> = rows.iter().collect();
    let out = m.forward(&refs, None).unwrap();
    total_loss(&out, &targets, &meta, epoch, &m.config).unwrap().total
}

pub fn analytic(m: &Model<f64>, epoch: f64) -> Gradients<f64> {
    let (rows, targets, meta) = fd_batch();
    let refs: Vec<&SparseRow> = rows.iter().collect();
    let out = m.forward(&refs, None).unwrap();
    let loss = total_loss(&out, &targets, &meta, epoch, &m.config).unwrap();
    m.backward(&out, &loss.extreme_delta, loss.meta_delta.as_ref()).unwrap()
}

/// Zero biases can put a ReLU input exactly on its kink (a row whose first
/// layer is all dead yields an all-zero embedding), so the checks run at a
/// point with random biases.
pub fn model_at(loss: LossKind, seed: u64) -> Model<f64> {
    let mut model = Model::<f64>::new(fd_config(loss), 6, seed).unwrap();
    let mut rng = rng(seed + 100);
    let mut set = |b: &mut ndarray::Array1<f64>| b.mapv_inplace(|_| rng.random_range(-0.3..0.3));
    for l in &mut model.encoder.layers {
        set(&mut l.bias);
    }
    if let Some(l) = &mut model.intermediate {
        set(&mut l.bias);
    }
    if let Some(l) = &mut model.aux {
        set(&mut l.bias);
    }
    model
}

/// Largest `|numeric - analytic| / max(|numeric|, |analytic|, 1e-4)` over
/// every parameter of a model with two encoder layers, the intermediate
/// layer and the aux head.
#[allow(clippy::needless_range_loop)]
pub fn full_model_fd_error(loss: LossKind, epoch: f64, seed: u64) -> f64 {
    let model = model_at(loss, seed);
    let grads = flat(&analytic(&model, epoch));
    let mut probe = model.clone();
    let sizes: Vec<usize> = params_mut(&mut probe).iter().map(|p| p.len()).collect();
    let mut worst = 0.0f64;
    for (group, &len) in sizes.iter().enumerate() {
        for i in 0..len {
            let orig = params_mut(&mut probe)[group][i];
            params_mut(&mut probe)[group][i] = orig + H;
            let up = loss_at(&probe, epoch);
            params_mut(&mut probe)[group][i] = orig - H;
            let down = loss_at(&probe, epoch);
            params_mut(&mut probe)[group][i] = orig;
            let fd = (up - down) / (2.0 * H);
            let a = grads[group][i];
            worst = worst.max((fd - a).abs() / fd.abs().max(a.abs()).max(1e-4));
        }
    }
    worst
}
