//! Fixed fan-in sparse layers stored ELLPACK-style: an `L x F` value array
//! and a congruent `L x F` column-index array, with every row holding exactly
//! `F` strictly increasing column ids.

mod delta;
mod io;
mod kernels;
mod memory;

use ndarray::Array2;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

pub use delta::SparseDelta;
pub use io::{read_layer, write_layer, LAYER_FORMAT_VERSION};
pub use kernels::{backward_input, backward_input_counted, backward_weights, backward_weights_counted, forward};
pub use memory::{memory_overhead, memory_report, sparsity_of, MemoryReport};

/// Column ids fit in 16 bits up to this input dimension.
pub const NARROW_INDEX_LIMIT: usize = 1 << 16;

/// Column-index storage; 16-bit when the input dimension allows it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnIndices {
    Narrow(Vec<u16>),
    Wide(Vec<u32>),
}

impl ColumnIndices {
    fn for_dim(cols: usize, ids: impl IntoIterator<Item = usize>) -> Self {
        if cols <= NARROW_INDEX_LIMIT {
            ColumnIndices::Narrow(ids.into_iter().map(|c| c as u16).collect())
        } else {
            ColumnIndices::Wide(ids.into_iter().map(|c| c as u32).collect())
        }
    }

    #[inline]
    pub fn get(&self, i: usize) -> usize {
        match self {
            ColumnIndices::Narrow(v) => v[i] as usize,
            ColumnIndices::Wide(v) => v[i] as usize,
        }
    }

    #[inline]
    fn set(&mut self, i: usize, col: usize) {
        match self {
            ColumnIndices::Narrow(v) => v[i] = col as u16,
            ColumnIndices::Wide(v) => v[i] = col as u32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ColumnIndices::Narrow(v) => v.len(),
            ColumnIndices::Wide(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Bits per stored index.
    pub fn bits(&self) -> u32 {
        match self {
            ColumnIndices::Narrow(_) => 16,
            ColumnIndices::Wide(_) => 32,
        }
    }
}

/// Runs `$body` with `$ix` bound to the concrete index slice.
macro_rules! with_indices {
    ($indices:expr, $ix:ident => $body:expr) => {
        match $indices {
            $crate::sparse::ColumnIndices::Narrow(v) => {
                let $ix: &[u16] = v.as_slice();
                $body
            }
            $crate::sparse::ColumnIndices::Wide(v) => {
                let $ix: &[u32] = v.as_slice();
                $body
            }
        }
    };
}
pub(crate) use with_indices;

/// A sparse `rows x cols` weight matrix with exactly `fan_in` active
/// entries per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FixedFanInLayer<T> {
    rows: usize,
    cols: usize,
    fan_in: usize,
    weights: Vec<T>,
    indices: ColumnIndices,
}

impl<T: Real> FixedFanInLayer<T> {
    /// Validating constructor from row-major `rows x fan_in` arrays.
    pub fn new(rows: usize, cols: usize, fan_in: usize, indices: Vec<usize>, weights: Vec<T>) -> Result<Self> {
        if fan_in == 0 || fan_in > cols {
            return Err(Error::config(format!("fan-in must be in 1..={cols}, got {fan_in}")));
        }
        if indices.len() != rows * fan_in || weights.len() != rows * fan_in {
            return Err(Error::shape(format!(
                "expected {} indices and weights, got {} and {}",
                rows * fan_in,
                indices.len(),
                weights.len()
            )));
        }
        let layer = FixedFanInLayer { rows, cols, fan_in, weights, indices: ColumnIndices::for_dim(cols, indices) };
        layer.validate()?;
        Ok(layer)
    }

    /// Random sorted column subsets per row, weights uniform in `(-scale, scale)`.
    pub fn random(rows: usize, cols: usize, fan_in: usize, scale: f64, seed: u64) -> Result<Self> {
        if fan_in == 0 || fan_in > cols {
            return Err(Error::config(format!("fan-in must be in 1..={cols}, got {fan_in}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ids = Vec::with_capacity(rows * fan_in);
        let mut weights = Vec::with_capacity(rows * fan_in);
        for _ in 0..rows {
            let mut row: Vec<usize> = index::sample(&mut rng, cols, fan_in).into_vec();
            row.sort_unstable();
            ids.extend_from_slice(&row);
            for _ in 0..fan_in {
                weights.push(T::of(rng.random_range(-scale..=scale)));
            }
        }
        Self::new(rows, cols, fan_in, ids, weights)
    }

    /// Keeps the `fan_in` largest-magnitude entries of every row, ties going
    /// to the lower column id.
    pub fn from_dense(dense: &Array2<T>, fan_in: usize) -> Result<Self> {
        let (rows, cols) = dense.dim();
        if fan_in == 0 || fan_in > cols {
            return Err(Error::config(format!("fan-in must be in 1..={cols}, got {fan_in}")));
        }
        let mut ids = Vec::with_capacity(rows * fan_in);
        let mut weights = Vec::with_capacity(rows * fan_in);
        let mut order: Vec<usize> = Vec::with_capacity(cols);
        for row in dense.rows() {
            order.clear();
            order.extend(0..cols);
            order.sort_by(|&a, &b| {
                row[b].abs().partial_cmp(&row[a].abs()).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
            });
            let kept = &mut order[..fan_in];
            kept.sort_unstable();
            for &c in kept.iter() {
                ids.push(c);
                weights.push(row[c]);
            }
        }
        Self::new(rows, cols, fan_in, ids, weights)
    }

    /// Scatters the active weights into a zero `rows x cols` matrix.
    pub fn to_dense(&self) -> Array2<T> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for l in 0..self.rows {
            for j in 0..self.fan_in {
                let k = l * self.fan_in + j;
                out[[l, self.indices.get(k)]] = self.weights[k];
            }
        }
        out
    }

    /// Checks the structural invariants: in-range, strictly increasing
    /// column ids per row and congruent array lengths.
    pub fn validate(&self) -> Result<()> {
        if self.indices.len() != self.rows * self.fan_in || self.weights.len() != self.rows * self.fan_in {
            return Err(Error::shape("index/weight arrays do not match rows x fan-in"));
        }
        for l in 0..self.rows {
            let mut prev: Option<usize> = None;
            for j in 0..self.fan_in {
                let c = self.indices.get(l * self.fan_in + j);
                if c >= self.cols {
                    return Err(Error::shape(format!("row {l}: column {c} out of range {}", self.cols)));
                }
                if prev.is_some_and(|p| p >= c) {
                    return Err(Error::shape(format!("row {l}: columns not strictly increasing")));
                }
                prev = Some(c);
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn fan_in(&self) -> usize {
        self.fan_in
    }

    pub fn sparsity(&self) -> f64 {
        sparsity_of(self.fan_in, self.cols)
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    pub fn indices(&self) -> &ColumnIndices {
        &self.indices
    }

    pub fn row_weights(&self, l: usize) -> &[T] {
        &self.weights[l * self.fan_in..(l + 1) * self.fan_in]
    }

    /// Active column ids of row `l`, ascending.
    pub fn row_columns(&self, l: usize) -> Vec<usize> {
        (0..self.fan_in).map(|j| self.indices.get(l * self.fan_in + j)).collect()
    }

    /// Replaces row `l`. `columns` must be strictly increasing and in range.
    pub fn set_row(&mut self, l: usize, columns: &[usize], weights: &[T]) -> Result<()> {
        if l >= self.rows || columns.len() != self.fan_in || weights.len() != self.fan_in {
            return Err(Error::shape(format!("row {l} replacement must have {} entries", self.fan_in)));
        }
        if columns.windows(2).any(|w| w[0] >= w[1]) || columns.iter().any(|&c| c >= self.cols) {
            return Err(Error::shape(format!("row {l}: columns must be strictly increasing and below {}", self.cols)));
        }
        let base = l * self.fan_in;
        for (j, (&c, &w)) in columns.iter().zip(weights).enumerate() {
            self.indices.set(base + j, c);
            self.weights[base + j] = w;
        }
        Ok(())
    }

    /// Converts to another element type (used to build `f64` test twins).
    pub fn cast<U: Real>(&self) -> FixedFanInLayer<U> {
        FixedFanInLayer {
            rows: self.rows,
            cols: self.cols,
            fan_in: self.fan_in,
            weights: self.weights.iter().map(|w| U::of(w.as_f64())).collect(),
            indices: self.indices.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn from_dense_keeps_largest_magnitudes() {
        let w = array![[3.0f64, -5.0, 1.0]];
        let layer = FixedFanInLayer::from_dense(&w, 2).unwrap();
        assert_eq!(layer.row_columns(0), vec![0, 1]);
        assert_eq!(layer.row_weights(0), &[3.0, -5.0]);
    }

    #[test]
    fn from_dense_tie_goes_to_lowest_column() {
        let w = array![[2.0f64, -2.0, 0.0]];
        let layer = FixedFanInLayer::from_dense(&w, 1).unwrap();
        assert_eq!(layer.row_columns(0), vec![0]);
        assert_eq!(layer.row_weights(0), &[2.0]);
    }

    #[test]
    fn full_fan_in_round_trip_is_identity() {
        let w = array![[1.0f32, 0.0, -2.5], [0.5, 4.0, 0.0]];
        let layer = FixedFanInLayer::from_dense(&w, 3).unwrap();
        assert_eq!(layer.to_dense(), w);
        assert_eq!(layer.sparsity(), 0.0);
    }

    #[test]
    fn dense_projection_is_idempotent() {
        let w = array![[0.1f64, -0.7, 0.3, 0.9], [0.2, 0.0, -0.4, 0.05]];
        let once = FixedFanInLayer::from_dense(&w, 2).unwrap().to_dense();
        let twice = FixedFanInLayer::from_dense(&once, 2).unwrap().to_dense();
        assert_eq!(once, twice);
    }

    #[test]
    fn constructor_rejects_bad_rows() {
        assert!(FixedFanInLayer::<f32>::new(1, 4, 2, vec![2, 1], vec![0.0; 2]).is_err());
        assert!(FixedFanInLayer::<f32>::new(1, 4, 2, vec![1, 1], vec![0.0; 2]).is_err());
        assert!(FixedFanInLayer::<f32>::new(1, 4, 2, vec![1, 4], vec![0.0; 2]).is_err());
        assert!(FixedFanInLayer::<f32>::new(1, 4, 5, vec![0; 5], vec![0.0; 5]).is_err());
        assert!(FixedFanInLayer::<f32>::new(1, 4, 2, vec![0, 3], vec![0.0; 2]).is_ok());
    }

    #[test]
    fn index_width_follows_input_dim() {
        let narrow = FixedFanInLayer::<f32>::random(2, 1000, 4, 0.1, 0).unwrap();
        assert_eq!(narrow.indices().bits(), 16);
        let wide = FixedFanInLayer::<f32>::new(1, 70_000, 1, vec![69_999], vec![1.0]).unwrap();
        assert_eq!(wide.indices().bits(), 32);
        assert_eq!(wide.row_columns(0), vec![69_999]);
    }

    #[test]
    fn random_layer_is_valid_and_seeded() {
        let a = FixedFanInLayer::<f32>::random(50, 64, 8, 0.1, 42).unwrap();
        let b = FixedFanInLayer::<f32>::random(50, 64, 8, 0.1, 42).unwrap();
        a.validate().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn set_row_validates() {
        let mut layer = FixedFanInLayer::<f32>::random(2, 10, 3, 0.1, 1).unwrap();
        layer.set_row(1, &[0, 5, 9], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(layer.row_columns(1), vec![0, 5, 9]);
        assert!(layer.set_row(1, &[5, 0, 9], &[1.0; 3]).is_err());
        assert!(layer.set_row(2, &[0, 1, 2], &[1.0; 3]).is_err());
    }
}
