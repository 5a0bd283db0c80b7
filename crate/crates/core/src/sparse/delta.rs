use ndarray::Array2;

use crate::error::{Error, Result};
use crate::real::Real;

/// Per-sample sparse loss derivative with respect to the label scores,
/// stored row-compressed. Label ids are ascending within a sample and exact
/// zeros are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDelta<T> {
    num_labels: usize,
    offsets: Vec<usize>,
    labels: Vec<u32>,
    values: Vec<T>,
}

impl<T: Real> SparseDelta<T> {
    /// An empty delta with zero samples.
    pub fn new(num_labels: usize) -> Self {
        SparseDelta { num_labels, offsets: vec![0], labels: Vec::new(), values: Vec::new() }
    }

    /// A delta with `batch` samples and no entries.
    pub fn empty(num_labels: usize, batch: usize) -> Self {
        SparseDelta { num_labels, offsets: vec![0; batch + 1], labels: Vec::new(), values: Vec::new() }
    }

    /// Appends one sample. Entries must have strictly increasing labels;
    /// zeros are dropped.
    pub fn push_sample(&mut self, entries: impl IntoIterator<Item = (u32, T)>) -> Result<()> {
        let start = self.labels.len();
        for (l, v) in entries {
            if l as usize >= self.num_labels {
                return Err(Error::shape(format!("delta label {l} out of range {}", self.num_labels)));
            }
            if self.labels.len() > start && *self.labels.last().unwrap() >= l {
                self.labels.truncate(start);
                self.values.truncate(start);
                return Err(Error::shape("delta labels must be strictly increasing per sample"));
            }
            if v != T::zero() {
                self.labels.push(l);
                self.values.push(v);
            }
        }
        self.offsets.push(self.labels.len());
        Ok(())
    }

    pub fn from_samples(num_labels: usize, samples: Vec<Vec<(u32, T)>>) -> Result<Self> {
        let mut d = Self::new(num_labels);
        for s in samples {
            d.push_sample(s)?;
        }
        Ok(d)
    }

    /// Drops entries with magnitude `<= threshold` (and exact zeros).
    pub fn from_dense(dense: &Array2<T>, threshold: T) -> Self {
        let mut d = Self::new(dense.ncols());
        for row in dense.rows() {
            let start = d.labels.len();
            for (l, &v) in row.iter().enumerate() {
                if v != T::zero() && v.abs() > threshold {
                    d.labels.push(l as u32);
                    d.values.push(v);
                }
            }
            debug_assert!(d.labels.len() >= start);
            d.offsets.push(d.labels.len());
        }
        d
    }

    pub fn to_dense(&self) -> Array2<T> {
        let mut out = Array2::zeros((self.batch_size(), self.num_labels));
        for b in 0..self.batch_size() {
            let (ls, vs) = self.sample(b);
            for (&l, &v) in ls.iter().zip(vs) {
                out[[b, l as usize]] = v;
            }
        }
        out
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn batch_size(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, b: usize) -> (&[u32], &[T]) {
        let (s, e) = (self.offsets[b], self.offsets[b + 1]);
        (&self.labels[s..e], &self.values[s..e])
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Multiplies every entry by `factor`; a zero factor empties the delta.
    pub fn scale(&mut self, factor: T) {
        if factor == T::zero() {
            let batch = self.batch_size();
            *self = Self::empty(self.num_labels, batch);
            return;
        }
        self.values.iter_mut().for_each(|v| *v = *v * factor);
    }

    /// Entries grouped by label, each group ordered by ascending sample.
    pub(crate) fn by_label(&self) -> (Vec<usize>, Vec<(u32, T)>) {
        let mut counts = vec![0usize; self.num_labels + 1];
        for &l in &self.labels {
            counts[l as usize + 1] += 1;
        }
        for i in 0..self.num_labels {
            counts[i + 1] += counts[i];
        }
        let mut cursor = counts.clone();
        let mut entries = vec![(0u32, T::zero()); self.labels.len()];
        for b in 0..self.batch_size() {
            let (ls, vs) = self.sample(b);
            for (&l, &v) in ls.iter().zip(vs) {
                let slot = &mut cursor[l as usize];
                entries[*slot] = (b as u32, v);
                *slot += 1;
            }
        }
        (counts, entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zeros_are_dropped() {
        let d = SparseDelta::from_samples(4, vec![vec![(0, 0.0f64), (2, 1.5)], vec![]]).unwrap();
        assert_eq!(d.nnz(), 1);
        assert_eq!(d.batch_size(), 2);
        assert_eq!(d.sample(0), (&[2u32][..], &[1.5][..]));
    }

    #[test]
    fn rejects_unsorted_and_out_of_range() {
        assert!(SparseDelta::from_samples(4, vec![vec![(2, 1.0f32), (1, 1.0)]]).is_err());
        assert!(SparseDelta::from_samples(4, vec![vec![(4, 1.0f32)]]).is_err());
    }

    #[test]
    fn dense_round_trip_with_threshold() {
        let m = array![[0.0f64, 1e-13, -2.0], [3.0, 0.0, 0.0]];
        let d = SparseDelta::from_dense(&m, 1e-12);
        assert_eq!(d.nnz(), 2);
        assert_eq!(d.to_dense(), array![[0.0, 0.0, -2.0], [3.0, 0.0, 0.0]]);
    }

    #[test]
    fn by_label_groups_in_sample_order() {
        let d = SparseDelta::from_samples(3, vec![vec![(1, 1.0f64)], vec![(0, 2.0), (1, 3.0)]]).unwrap();
        let (offsets, entries) = d.by_label();
        assert_eq!(offsets, vec![0, 1, 3, 3]);
        assert_eq!(entries, vec![(1, 2.0), (0, 1.0), (1, 3.0)]);
    }
}
