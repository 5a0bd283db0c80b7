//! Forward and backward kernels for [`FixedFanInLayer`].
//!
//! Every output element is accumulated left to right in the element type,
//! starting from zero: over the row's `F` slots in the forward pass, over
//! samples in ascending order for the weight gradient, and over the sample's
//! delta entries in ascending label order for the input gradient. The
//! parallel loops only split independent output rows, so results do not
//! depend on the thread count.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use super::{with_indices, FixedFanInLayer, SparseDelta};
use crate::error::{Error, Result};
use crate::real::Real;

fn check_input<T: Real>(layer: &FixedFanInLayer<T>, x: &ArrayView2<T>) -> Result<()> {
    if x.ncols() != layer.cols() {
        return Err(Error::shape(format!("input has {} columns, layer expects {}", x.ncols(), layer.cols())));
    }
    Ok(())
}

fn check_delta<T: Real>(layer: &FixedFanInLayer<T>, delta: &SparseDelta<T>) -> Result<()> {
    if delta.num_labels() != layer.rows() {
        return Err(Error::shape(format!(
            "delta spans {} labels, layer has {} rows",
            delta.num_labels(),
            layer.rows()
        )));
    }
    Ok(())
}

/// `out[b, l] = sum_j w[l, j] * x[b, idx[l, j]]`.
pub fn forward<T: Real>(layer: &FixedFanInLayer<T>, x: ArrayView2<T>) -> Result<Array2<T>> {
    check_input(layer, &x)?;
    let x = x.as_standard_layout();
    let (batch, f, rows) = (x.nrows(), layer.fan_in(), layer.rows());
    let mut out = Array2::<T>::zeros((batch, rows));
    if rows == 0 || batch == 0 {
        return Ok(out);
    }
    let w = layer.weights();
    let xs = x.as_slice().expect("standard layout");
    let d = layer.cols();
    with_indices!(layer.indices(), ix => {
        out.as_slice_mut()
            .expect("fresh array")
            .par_chunks_mut(rows)
            .enumerate()
            .for_each(|(b, out_row)| {
                let xr = &xs[b * d..(b + 1) * d];
                for (l, o) in out_row.iter_mut().enumerate() {
                    let base = l * f;
                    let mut acc = T::zero();
                    for k in base..base + f {
                        acc += w[k] * xr[ix[k] as usize];
                    }
                    *o = acc;
                }
            });
    });
    Ok(out)
}

/// Weight gradient in the layer's index layout, plus the number of
/// multiply-adds performed (always `nnz(delta) * F`).
pub fn backward_weights_counted<T: Real>(
    layer: &FixedFanInLayer<T>,
    x: ArrayView2<T>,
    delta: &SparseDelta<T>,
) -> Result<(Vec<T>, usize)> {
    check_input(layer, &x)?;
    check_delta(layer, delta)?;
    if delta.batch_size() != x.nrows() {
        return Err(Error::shape(format!("delta has {} samples, input has {}", delta.batch_size(), x.nrows())));
    }
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let (f, d) = (layer.fan_in(), layer.cols());
    let mut grad = vec![T::zero(); layer.rows() * f];
    if delta.is_empty() {
        return Ok((grad, 0));
    }
    let (offsets, entries) = delta.by_label();
    with_indices!(layer.indices(), ix => {
        grad.par_chunks_mut(f).enumerate().for_each(|(l, g)| {
            let cols = &ix[l * f..(l + 1) * f];
            for &(b, dv) in &entries[offsets[l]..offsets[l + 1]] {
                let xr = &xs[b as usize * d..(b as usize + 1) * d];
                for (gj, &c) in g.iter_mut().zip(cols) {
                    *gj += dv * xr[c as usize];
                }
            }
        });
    });
    Ok((grad, delta.nnz() * f))
}

/// `g[l, j] = sum_b delta[b, l] * x[b, idx[l, j]]`; rows without delta
/// entries stay exactly zero.
pub fn backward_weights<T: Real>(
    layer: &FixedFanInLayer<T>,
    x: ArrayView2<T>,
    delta: &SparseDelta<T>,
) -> Result<Vec<T>> {
    backward_weights_counted(layer, x, delta).map(|(g, _)| g)
}

/// Input gradient plus the number of multiply-adds (`nnz(delta) * F`).
pub fn backward_input_counted<T: Real>(
    layer: &FixedFanInLayer<T>,
    delta: &SparseDelta<T>,
    batch: usize,
) -> Result<(Array2<T>, usize)> {
    check_delta(layer, delta)?;
    if delta.batch_size() != batch {
        return Err(Error::shape(format!("delta has {} samples, expected {batch}", delta.batch_size())));
    }
    let (f, d) = (layer.fan_in(), layer.cols());
    let mut out = Array2::<T>::zeros((batch, d));
    if delta.is_empty() || d == 0 {
        return Ok((out, 0));
    }
    let w = layer.weights();
    with_indices!(layer.indices(), ix => {
        out.as_slice_mut()
            .expect("fresh array")
            .par_chunks_mut(d)
            .enumerate()
            .for_each(|(b, xg)| {
                let (ls, vs) = delta.sample(b);
                for (&l, &dv) in ls.iter().zip(vs) {
                    let base = l as usize * f;
                    for k in base..base + f {
                        xg[ix[k] as usize] += dv * w[k];
                    }
                }
            });
    });
    Ok((out, delta.nnz() * f))
}

/// `xg[b, idx[l, j]] += delta[b, l] * w[l, j]` over the delta entries only.
pub fn backward_input<T: Real>(layer: &FixedFanInLayer<T>, delta: &SparseDelta<T>, batch: usize) -> Result<Array2<T>> {
    backward_input_counted(layer, delta, batch).map(|(g, _)| g)
}
