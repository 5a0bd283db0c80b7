//! Magnitude pruning with random regrowth on fixed fan-in layers.
//!
//! Every row loses its smallest-magnitude weights and regrows the same
//! number of connections at columns that were inactive before the call,
//! drawn uniformly without replacement. Regrown weights and their optimizer
//! moments start at zero. Rows are independent and each draws from its own
//! ChaCha stream, so the outcome depends only on the seed.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::sparse::FixedFanInLayer;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PruneMode {
    /// Prune `floor(F * fraction)` entries per row.
    Fraction(f64),
    /// Prune entries with `|w| < threshold`, at most `F - 1` per row.
    Threshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewireConfig {
    pub mode: PruneMode,
    /// Optimizer steps between rewiring events.
    pub interval: u64,
    /// Rewiring stops after this fraction of the total steps.
    pub stop_fraction: f64,
}

impl Default for RewireConfig {
    fn default() -> Self {
        RewireConfig { mode: PruneMode::Fraction(0.25), interval: 300, stop_fraction: 0.66 }
    }
}

impl RewireConfig {
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            PruneMode::Fraction(f) if !(0.0..1.0).contains(&f) => {
                return Err(Error::config(format!("rewire fraction must be in [0, 1), got {f}")))
            }
            PruneMode::Threshold(t) if !(t >= 0.0) => {
                return Err(Error::config(format!("rewire threshold must be non-negative, got {t}")))
            }
            _ => {}
        }
        if !(self.stop_fraction > 0.0 && self.stop_fraction <= 1.0) {
            return Err(Error::config(format!("rewire stop fraction must be in (0, 1], got {}", self.stop_fraction)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewireStats {
    pub step: u64,
    pub pruned: usize,
    pub regrown: usize,
    /// Smallest `|w|` among entries that survived pruning.
    pub min_surviving_magnitude: f64,
    pub per_row_pruned: Vec<u32>,
}

pub const REWIRE_CSV_HEADER: &str = "step,pruned,regrown,min_surv_mag";

impl RewireStats {
    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.step, self.pruned, self.regrown, self.min_surviving_magnitude)
    }
}

/// True at positive multiples of the interval up to the stop point.
pub fn should_rewire(step: u64, total_steps: u64, cfg: &RewireConfig) -> bool {
    step > 0
        && cfg.interval > 0
        && step.is_multiple_of(cfg.interval)
        && step as f64 <= cfg.stop_fraction * total_steps as f64
}

struct RowPlan {
    columns: Vec<usize>,
    /// Source slot of each new slot; `None` marks a regrown entry.
    source: Vec<Option<usize>>,
    pruned: usize,
    min_survivor: f64,
}

fn plan_row<T: Real>(weights: &[T], active: &[usize], cols: usize, mode: PruneMode, rng: &mut ChaCha8Rng) -> RowPlan {
    let f = active.len();
    let mut order: Vec<usize> = (0..f).collect();
    order.sort_by(|&a, &b| {
        weights[a]
            .abs()
            .partial_cmp(&weights[b].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(active[a].cmp(&active[b]))
    });
    let wanted = match mode {
        PruneMode::Fraction(frac) => (f as f64 * frac).floor() as usize,
        PruneMode::Threshold(t) => order.iter().take_while(|&&j| weights[j].abs().as_f64() < t).count(),
    };
    let k = wanted.min(f - 1).min(cols - f);

    let mut pruned_slot = vec![false; f];
    for &j in &order[..k] {
        pruned_slot[j] = true;
    }
    let min_survivor = order[k..].iter().map(|&j| weights[j].abs().as_f64()).fold(f64::INFINITY, f64::min);

    // Map sorted complement positions to column ids in one merge pass.
    let mut picks = index::sample(rng, cols - f, k).into_vec();
    picks.sort_unstable();
    let mut regrown = Vec::with_capacity(k);
    let mut a = 0;
    for p in picks {
        let mut c = p + a;
        while a < f && active[a] <= c {
            a += 1;
            c = p + a;
        }
        regrown.push(c);
    }

    let mut merged: Vec<(usize, Option<usize>)> = active
        .iter()
        .enumerate()
        .filter(|(j, _)| !pruned_slot[*j])
        .map(|(j, &c)| (c, Some(j)))
        .chain(regrown.into_iter().map(|c| (c, None)))
        .collect();
    merged.sort_unstable_by_key(|e| e.0);
    RowPlan {
        columns: merged.iter().map(|e| e.0).collect(),
        source: merged.iter().map(|e| e.1).collect(),
        pruned: k,
        min_survivor,
    }
}

/// Prunes and regrows every row of `layer` in place. `aligned` holds
/// optimizer arrays congruent with the layer's weights; they are permuted in
/// lockstep and zeroed at regrown slots.
pub fn prune_regrow<T: Real>(
    layer: &mut FixedFanInLayer<T>,
    aligned: &mut [&mut [T]],
    cfg: &RewireConfig,
    step: u64,
    seed: u64,
) -> Result<RewireStats> {
    cfg.validate()?;
    let (rows, cols, f) = (layer.rows(), layer.cols(), layer.fan_in());
    for (i, arr) in aligned.iter().enumerate() {
        if arr.len() != rows * f {
            return Err(Error::shape(format!("aligned array {i} has {} entries, layer has {}", arr.len(), rows * f)));
        }
    }
    let noop = matches!(cfg.mode, PruneMode::Fraction(fr) if (f as f64 * fr).floor() == 0.0);
    if cols == f || noop {
        let min_surv = layer.weights().iter().map(|w| w.abs().as_f64()).fold(f64::INFINITY, f64::min);
        return Ok(RewireStats {
            step,
            pruned: 0,
            regrown: 0,
            min_surviving_magnitude: min_surv,
            per_row_pruned: vec![0; rows],
        });
    }

    let plans: Vec<RowPlan> = {
        let layer = &*layer;
        (0..rows)
            .into_par_iter()
            .map(|l| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(l as u64);
                plan_row(layer.row_weights(l), &layer.row_columns(l), cols, cfg.mode, &mut rng)
            })
            .collect()
    };

    let mut scratch = vec![T::zero(); f];
    let mut stats = RewireStats {
        step,
        pruned: 0,
        regrown: 0,
        min_surviving_magnitude: f64::INFINITY,
        per_row_pruned: Vec::with_capacity(rows),
    };
    for (l, plan) in plans.into_iter().enumerate() {
        stats.pruned += plan.pruned;
        stats.regrown += plan.pruned;
        stats.per_row_pruned.push(plan.pruned as u32);
        stats.min_surviving_magnitude = stats.min_surviving_magnitude.min(plan.min_survivor);
        if plan.pruned == 0 {
            continue;
        }
        let base = l * f;
        for arr in aligned.iter_mut() {
            let row = &mut arr[base..base + f];
            for (dst, src) in scratch.iter_mut().zip(&plan.source) {
                *dst = src.map_or(T::zero(), |j| row[j]);
            }
            row.copy_from_slice(&scratch);
        }
        let old = layer.row_weights(l);
        for (dst, src) in scratch.iter_mut().zip(&plan.source) {
            *dst = src.map_or(T::zero(), |j| old[j]);
        }
        layer.set_row(l, &plan.columns, &scratch)?;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fraction(f: f64) -> RewireConfig {
        RewireConfig { mode: PruneMode::Fraction(f), interval: 1, stop_fraction: 1.0 }
    }

    #[test]
    fn schedule_points() {
        let cfg = RewireConfig { mode: PruneMode::Threshold(0.01), interval: 800, stop_fraction: 0.66 };
        assert!(should_rewire(800, 100_000, &cfg));
        assert!(!should_rewire(0, 100_000, &cfg));
        assert!(!should_rewire(801, 100_000, &cfg));
        assert!(!should_rewire(67_200, 100_000, &cfg));
        let every = RewireConfig { interval: 1000, ..cfg };
        assert!(should_rewire(66_000, 100_000, &every));
        assert!(!should_rewire(67_000, 100_000, &every));
    }

    #[test]
    fn zero_fraction_is_noop() {
        let mut layer = FixedFanInLayer::<f32>::random(10, 30, 6, 0.5, 3).unwrap();
        let before = layer.clone();
        let stats = prune_regrow(&mut layer, &mut [], &fraction(0.0), 5, 1).unwrap();
        assert_eq!(layer, before);
        assert_eq!(stats.pruned, 0);
    }

    #[test]
    fn fraction_prunes_smallest_and_regrows_fresh_zeros() {
        let mut layer = FixedFanInLayer::<f64>::new(1, 10, 4, vec![1, 3, 5, 7], vec![0.9, 0.1, -0.5, 0.2]).unwrap();
        let mut m = vec![1.0, 2.0, 3.0, 4.0];
        let mut v = vec![5.0, 6.0, 7.0, 8.0];
        let stats = prune_regrow(&mut layer, &mut [&mut m, &mut v], &fraction(0.5), 1, 11).unwrap();
        assert_eq!((stats.pruned, stats.regrown), (2, 2));
        assert_eq!(stats.min_surviving_magnitude, 0.5);
        let cols = layer.row_columns(0);
        let w = layer.row_weights(0);
        assert!(cols.contains(&1) && cols.contains(&5));
        assert!(!cols.contains(&3) && !cols.contains(&7));
        for (j, &c) in cols.iter().enumerate() {
            match c {
                1 => assert_eq!((w[j], m[j], v[j]), (0.9, 1.0, 5.0)),
                5 => assert_eq!((w[j], m[j], v[j]), (-0.5, 3.0, 7.0)),
                _ => assert_eq!((w[j], m[j], v[j]), (0.0, 0.0, 0.0)),
            }
        }
    }

    #[test]
    fn threshold_mode_prunes_below_threshold() {
        let mut layer = FixedFanInLayer::<f64>::new(1, 8, 3, vec![0, 1, 2], vec![0.04, 0.06, -0.01]).unwrap();
        let cfg = RewireConfig { mode: PruneMode::Threshold(0.05), ..fraction(0.0) };
        let stats = prune_regrow(&mut layer, &mut [], &cfg, 1, 0).unwrap();
        assert_eq!(stats.pruned, 2);
        let cols = layer.row_columns(0);
        assert!(cols.contains(&1));
        assert!(!cols.contains(&0) && !cols.contains(&2));
    }

    #[test]
    fn threshold_keeps_one_survivor() {
        let mut layer = FixedFanInLayer::<f32>::new(1, 8, 3, vec![0, 1, 2], vec![0.001, 0.002, 0.003]).unwrap();
        let cfg = RewireConfig { mode: PruneMode::Threshold(1.0), ..fraction(0.0) };
        let stats = prune_regrow(&mut layer, &mut [], &cfg, 1, 0).unwrap();
        assert_eq!(stats.pruned, 2);
        assert!(layer.row_columns(0).contains(&2));
    }

    #[test]
    fn full_fan_in_is_noop() {
        let mut layer = FixedFanInLayer::<f32>::random(3, 5, 5, 0.5, 0).unwrap();
        let before = layer.clone();
        let stats = prune_regrow(&mut layer, &mut [], &fraction(0.5), 1, 0).unwrap();
        assert_eq!(stats.pruned, 0);
        assert_eq!(layer, before);
    }

    #[test]
    fn config_errors() {
        let mut layer = FixedFanInLayer::<f32>::random(3, 10, 5, 0.5, 0).unwrap();
        assert!(matches!(prune_regrow(&mut layer, &mut [], &fraction(1.0), 1, 0), Err(Error::Config(_))));
        let mut short = vec![0.0f32; 3];
        assert!(matches!(prune_regrow(&mut layer, &mut [&mut short], &fraction(0.2), 1, 0), Err(Error::Shape(_))));
    }

    #[test]
    fn regrowth_capped_by_free_columns() {
        let mut layer = FixedFanInLayer::<f64>::new(1, 5, 4, vec![0, 1, 2, 3], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let stats = prune_regrow(&mut layer, &mut [], &fraction(0.75), 1, 0).unwrap();
        assert_eq!(stats.pruned, 1);
        assert_eq!(layer.row_columns(0), vec![1, 2, 3, 4]);
        assert_eq!(layer.row_weights(0), &[0.2, 0.3, 0.4, 0.0]);
    }

    #[test]
    fn seeded_determinism() {
        let base = FixedFanInLayer::<f32>::random(20, 50, 10, 0.5, 4).unwrap();
        let run = |seed| {
            let mut l = base.clone();
            prune_regrow(&mut l, &mut [], &fraction(0.3), 1, seed).unwrap();
            l
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }
}
