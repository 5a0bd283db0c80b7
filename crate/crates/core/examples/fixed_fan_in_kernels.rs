//! Forward and activation-sparse backward passes of a fixed fan-in layer,
//! checked against the equivalent dense masked matrix.
//!
//! ```text
//! cargo run --example fixed_fan_in_kernels
//! ```

use fanin_xmc::sparse::{backward_input, backward_weights_counted, forward, FixedFanInLayer, SparseDelta};
use ndarray::Array2;

fn main() -> fanin_xmc::Result<()> {
    let (labels, dim, fan_in, batch) = (1000, 64, 8, 4);
    let layer = FixedFanInLayer::<f64>::random(labels, dim, fan_in, 0.5, 1)?;
    println!("layer: {labels} rows x {dim} cols, fan-in {fan_in}, sparsity {:.3}", layer.sparsity());
    println!("row 0 columns {:?}", layer.row_columns(0));

    let x = Array2::from_shape_fn((batch, dim), |(b, c)| ((b * 7 + c * 3) % 11) as f64 / 11.0 - 0.5);
    let scores = forward(&layer, x.view())?;
    let dense = layer.to_dense();
    let reference = x.dot(&dense.t());
    let max_diff = (&scores - &reference).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("forward max |sparse - dense| = {max_diff:.2e}");

    // A loss gradient that touches only a few labels per sample.
    let delta = SparseDelta::from_samples(
        labels,
        vec![vec![(3, 1.0), (500, -0.5)], vec![(7, 0.25)], vec![], vec![(999, 2.0)]],
    )?;
    let (grad_w, touched) = backward_weights_counted(&layer, x.view(), &delta)?;
    println!("weight gradient: {} non-zero delta entries x fan-in {fan_in} = {touched} slots touched", delta.nnz());
    println!("slots with a gradient: {}", grad_w.iter().filter(|g| **g != 0.0).count());

    let grad_x = backward_input(&layer, &delta, batch)?;
    let reference = delta.to_dense().dot(&dense);
    let max_diff = (&grad_x - &reference).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("input gradient max |sparse - dense| = {max_diff:.2e}");
    Ok(())
}
