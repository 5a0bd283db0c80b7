//! Analytical storage accounting for dense and fixed fan-in heads.

/// Index storage relative to value storage when `shared_value_arrays` extra
/// value arrays (gradient, optimizer moments) reuse one index array.
pub fn memory_overhead(weight_bits: u32, index_bits: u32, shared_value_arrays: u32) -> f64 {
    index_bits as f64 / (weight_bits as f64 * (1.0 + shared_value_arrays as f64))
}

/// `1 - F / d`.
pub fn sparsity_of(fan_in: usize, dim: usize) -> f64 {
    1.0 - fan_in as f64 / dim as f64
}

/// Value arrays kept per parameter during training: weights, gradient and
/// two Adam moments.
pub const TRAINING_VALUE_ARRAYS: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryReport {
    pub dim: usize,
    pub num_labels: usize,
    pub fan_in: usize,
    pub dense_bytes: u64,
    pub sparse_bytes: u64,
}

impl MemoryReport {
    pub fn ratio(&self) -> f64 {
        self.sparse_bytes as f64 / self.dense_bytes as f64
    }

    pub fn to_csv(&self) -> String {
        const GIB: f64 = (1u64 << 30) as f64;
        let mut s = String::from("quantity,value\n");
        s += &format!("dim,{}\n", self.dim);
        s += &format!("labels,{}\n", self.num_labels);
        s += &format!("fan_in,{}\n", self.fan_in);
        s += &format!("sparsity,{:.6}\n", sparsity_of(self.fan_in, self.dim));
        s += &format!("dense_bytes,{}\n", self.dense_bytes);
        s += &format!("dense_gib,{:.4}\n", self.dense_bytes as f64 / GIB);
        s += &format!("sparse_bytes,{}\n", self.sparse_bytes);
        s += &format!("sparse_gib,{:.4}\n", self.sparse_bytes as f64 / GIB);
        s += &format!("ratio,{:.6}\n", self.ratio());
        s
    }
}

/// Bytes for a dense `L x d` head versus a fixed fan-in head, both holding
/// four value arrays; the sparse head adds one shared index array.
pub fn memory_report(dim: usize, num_labels: usize, fan_in: usize, weight_bits: u32, index_bits: u32) -> MemoryReport {
    let dense_entries = dim as u64 * num_labels as u64;
    let sparse_entries = fan_in as u64 * num_labels as u64;
    let dense_bytes = TRAINING_VALUE_ARRAYS * dense_entries * weight_bits as u64 / 8;
    let sparse_bytes =
        (TRAINING_VALUE_ARRAYS * sparse_entries * weight_bits as u64 + sparse_entries * index_bits as u64) / 8;
    MemoryReport { dim, num_labels, fan_in, dense_bytes, sparse_bytes }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overhead_arithmetic() {
        assert_eq!(memory_overhead(32, 16, 0), 0.5);
        assert_eq!(memory_overhead(32, 16, 3), 0.125);
        assert_eq!(memory_overhead(32, 32, 0), 1.0);
    }

    #[test]
    fn sparsity_levels() {
        assert!((sparsity_of(128, 768) - 0.8333).abs() < 1e-4);
        assert!((sparsity_of(64, 768) - 0.9167).abs() < 1e-4);
        assert_eq!(sparsity_of(768, 768), 0.0);
    }

    #[test]
    fn byte_accounting() {
        let r = memory_report(768, 128, 128, 32, 16);
        assert!((r.ratio() - 0.1875).abs() < 1e-12);
        let full = memory_report(768, 10, 768, 32, 16);
        assert!(full.sparse_bytes >= full.dense_bytes);
    }
}
