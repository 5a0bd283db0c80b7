use std::fmt::Write as _;

use crate::dst::{RewireStats, REWIRE_CSV_HEADER};
use crate::metrics::MetricsReport;

pub const TELEMETRY_CSV_HEADER: &str = "step,epoch,loss_extreme,loss_meta,aux_scale,grad_norm_encoder,lr_enc,lr_clf";

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: u32,
    pub loss_extreme: f64,
    /// `None` when the auxiliary loss was not evaluated.
    pub loss_meta: Option<f64>,
    pub aux_scale: f64,
    pub grad_norm_encoder: f64,
    pub lr_encoder: f64,
    pub lr_classifier: f64,
}

/// Evaluation after `epoch` completed epochs (0 is the untrained model).
#[derive(Debug, Clone, PartialEq)]
pub struct EpochEval {
    pub epoch: u32,
    pub report: MetricsReport,
}

/// Work counters for checking which code paths ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counters {
    pub meta_loss_evaluations: u64,
    pub meta_backward_passes: u64,
    pub rewire_events: u64,
    /// Sum of extreme-head delta entries over all steps.
    pub extreme_delta_nnz: u64,
    /// Sum of `B * L` over all steps.
    pub extreme_delta_capacity: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Telemetry {
    pub steps: Vec<StepRecord>,
    pub rewires: Vec<RewireStats>,
    pub evals: Vec<EpochEval>,
    pub counters: Counters,
}

impl Telemetry {
    /// Per-step CSV. Floats use the shortest representation that parses
    /// back to the same value, so equal files mean bit-equal records.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.steps.len() + 1));
        s.push_str(TELEMETRY_CSV_HEADER);
        s.push('\n');
        for r in &self.steps {
            let meta = r.loss_meta.map(|m| m.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.step, r.epoch, r.loss_extreme, meta, r.aux_scale, r.grad_norm_encoder, r.lr_encoder, r.lr_classifier
            );
        }
        s
    }

    pub fn rewire_csv(&self) -> String {
        let mut s = format!("{REWIRE_CSV_HEADER}\n");
        for r in &self.rewires {
            s += &r.csv_row();
            s.push('\n');
        }
        s
    }

    /// `epoch,metric,k,value` rows for every recorded evaluation.
    pub fn evals_csv(&self) -> String {
        let mut s = String::from("epoch,metric,k,value\n");
        for e in &self.evals {
            for r in &e.report.rows {
                let _ = writeln!(s, "{},{},{},{}", e.epoch, r.metric, r.k, r.value);
            }
        }
        s
    }

    /// Fraction of extreme-head delta entries that were non-zero.
    pub fn delta_density(&self) -> f64 {
        let c = &self.counters;
        if c.extreme_delta_capacity == 0 {
            0.0
        } else {
            c.extreme_delta_nnz as f64 / c.extreme_delta_capacity as f64
        }
    }

    pub fn last_eval(&self) -> Option<&MetricsReport> {
        self.evals.last().map(|e| &e.report)
    }
}
