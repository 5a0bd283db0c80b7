use crate::error::{Error, Result};

/// Linear warmup to `peak` followed by cosine decay to zero at `total`.
pub fn lr_at(step: u64, peak: f64, warmup: u64, total: u64) -> Result<f64> {
    if warmup >= total {
        return Err(Error::config(format!("warmup ({warmup} steps) must be shorter than training ({total} steps)")));
    }
    if step > total {
        return Err(Error::config(format!("step {step} is past the end of training ({total})")));
    }
    if step < warmup {
        return Ok(peak * (step + 1) as f64 / warmup as f64);
    }
    let phase = (step - warmup) as f64 / (total - warmup) as f64;
    Ok(peak * 0.5 * (1.0 + (std::f64::consts::PI * phase).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_values() {
        assert_eq!(lr_at(10, 2.0, 10, 110).unwrap(), 2.0);
        assert!(lr_at(110, 2.0, 10, 110).unwrap().abs() < 1e-15);
        assert!((lr_at(60, 2.0, 10, 110).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(lr_at(0, 2.0, 10, 110).unwrap(), 0.2);
        assert_eq!(lr_at(0, 2.0, 0, 5).unwrap(), 2.0);
    }

    #[test]
    fn continuous_at_warmup_end() {
        let before = lr_at(99, 1.0, 100, 10_000).unwrap();
        let after = lr_at(100, 1.0, 100, 10_000).unwrap();
        assert!((before - after).abs() < 1e-9);
    }

    #[test]
    fn warmup_not_shorter_than_training() {
        assert!(lr_at(0, 1.0, 10, 10).is_err());
        assert!(lr_at(0, 1.0, 0, 0).is_err());
        assert!(lr_at(11, 1.0, 1, 10).is_err());
    }
}
