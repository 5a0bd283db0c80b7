use crate::error::{Error, Result};

pub const DEFAULT_PROPENSITY_A: f64 = 0.55;
pub const DEFAULT_PROPENSITY_B: f64 = 1.5;

/// Inverse-power label propensity model,
/// `p_l = 1 / (1 + C (n_l + B)^-A)` with `C = (ln N - 1) (B + 1)^A`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel {
    pub a: f64,
    pub b: f64,
    pub propensities: Vec<f64>,
}

impl PropensityModel {
    /// Every label observed with probability one; PSP@k collapses to P@k.
    pub fn uniform(num_labels: usize) -> Self {
        PropensityModel { a: f64::NAN, b: f64::NAN, propensities: vec![1.0; num_labels] }
    }

    pub fn get(&self, label: usize) -> f64 {
        self.propensities[label]
    }
}

pub fn compute_propensities(label_counts: &[u64], n: usize, a: f64, b: f64) -> Result<PropensityModel> {
    if !(a > 0.0) {
        return Err(Error::config(format!("propensity A must be positive, got {a}")));
    }
    if !(b >= 0.0) {
        return Err(Error::config(format!("propensity B must be non-negative, got {b}")));
    }
    let log_n = (n as f64).ln();
    if n == 0 || log_n <= 1.0 {
        return Err(Error::config(format!("propensity model needs ln N > 1, got N = {n}")));
    }
    let c = (log_n - 1.0) * (b + 1.0).powf(a);
    let propensities = label_counts.iter().map(|&count| 1.0 / (1.0 + c * (count as f64 + b).powf(-a))).collect();
    Ok(PropensityModel { a, b, propensities })
}
