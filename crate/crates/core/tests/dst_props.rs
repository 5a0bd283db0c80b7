use std::collections::HashMap;

use fanin_xmc::dst::{prune_regrow, should_rewire, PruneMode, RewireConfig};
use fanin_xmc::sparse::FixedFanInLayer;
use proptest::prelude::*;

/// Column -> (weight, first moment, second moment) for row `l`.
fn snapshot(layer: &FixedFanInLayer<f64>, m: &[f64], v: &[f64], l: usize) -> HashMap<usize, (f64, f64, f64)> {
    let f = layer.fan_in();
    layer
        .row_columns(l)
        .into_iter()
        .enumerate()
        .map(|(j, c)| (c, (layer.row_weights(l)[j], m[l * f + j], v[l * f + j])))
        .collect()
}

/// Runs one rewire and checks every structural invariant against the
/// pre-call state.
fn check_cycle(layer: &mut FixedFanInLayer<f64>, m: &mut [f64], v: &mut [f64], cfg: &RewireConfig, seed: u64) {
    let (rows, cols, f) = (layer.rows(), layer.cols(), layer.fan_in());
    let before: Vec<_> = (0..rows).map(|l| snapshot(layer, m, v, l)).collect();

    let stats = prune_regrow(layer, &mut [&mut m[..], &mut v[..]], cfg, 1, seed).unwrap();
    layer.validate().unwrap();
    assert_eq!(layer.fan_in(), f);
    assert_eq!(stats.pruned, stats.regrown);
    assert_eq!(stats.per_row_pruned.iter().map(|&p| p as usize).sum::<usize>(), stats.pruned);

    for l in 0..rows {
        let cols_now = layer.row_columns(l);
        assert!(cols_now.windows(2).all(|w| w[0] < w[1]));
        assert!(cols_now.iter().all(|&c| c < cols));
        let mut regrown = 0;
        let mut survivor_mags = Vec::new();
        for (j, &c) in cols_now.iter().enumerate() {
            let w = layer.row_weights(l)[j];
            match before[l].get(&c) {
                Some(&(w0, m0, v0)) => {
                    assert_eq!(w, w0, "surviving weight moved");
                    assert_eq!(m[l * f + j], m0, "moment out of lockstep");
                    assert_eq!(v[l * f + j], v0, "moment out of lockstep");
                    survivor_mags.push(w0.abs());
                }
                None => {
                    regrown += 1;
                    assert_eq!(w, 0.0);
                    assert_eq!(m[l * f + j], 0.0);
                    assert_eq!(v[l * f + j], 0.0);
                }
            }
        }
        assert_eq!(regrown, stats.per_row_pruned[l] as usize);
        assert!(regrown < f || regrown == 0);
        let pruned_max =
            before[l].iter().filter(|(c, _)| !cols_now.contains(c)).map(|(_, (w, _, _))| w.abs()).fold(0.0, f64::max);
        let survivor_min = survivor_mags.iter().copied().fold(f64::INFINITY, f64::min);
        if regrown > 0 {
            assert!(pruned_max <= survivor_min, "pruned a larger weight than a survivor");
        }
    }
}

fn fill_state(layer: &mut FixedFanInLayer<f64>, salt: f64) -> (Vec<f64>, Vec<f64>) {
    let n = layer.weights().len();
    let m = (0..n).map(|i| salt + i as f64).collect();
    let v = (0..n).map(|i| 1.0 / (1.0 + i as f64 + salt)).collect();
    (m, v)
}

fn arb_mode() -> impl Strategy<Value = PruneMode> {
    prop_oneof![(0.0..0.99f64).prop_map(PruneMode::Fraction), (0.0..1.5f64).prop_map(PruneMode::Threshold),]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rewire_preserves_structure(
        rows in 1usize..12,
        cols in 1usize..40,
        fan_frac in 0.0..1.0f64,
        mode in arb_mode(),
        seed in any::<u64>(),
        cycles in 1usize..4,
    ) {
        let f = ((cols as f64 * fan_frac) as usize).clamp(1, cols);
        let mut layer = FixedFanInLayer::<f64>::random(rows, cols, f, 1.0, seed).unwrap();
        let (mut m, mut v) = fill_state(&mut layer, 0.5);
        let cfg = RewireConfig { mode, ..RewireConfig::default() };
        for c in 0..cycles {
            check_cycle(&mut layer, &mut m, &mut v, &cfg, seed.wrapping_add(c as u64));
        }
    }

    #[test]
    fn rewire_is_deterministic(rows in 1usize..8, cols in 2usize..30, seed in any::<u64>()) {
        let f = cols / 2 + 1;
        let a0 = FixedFanInLayer::<f64>::random(rows, cols, f.min(cols), 1.0, seed).unwrap();
        let cfg = RewireConfig { mode: PruneMode::Fraction(0.5), ..RewireConfig::default() };
        let mut a = a0.clone();
        let mut b = a0.clone();
        let sa = prune_regrow(&mut a, &mut [], &cfg, 3, seed).unwrap();
        let sb = prune_regrow(&mut b, &mut [], &cfg, 3, seed).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(sa, sb);
    }

    #[test]
    fn rewire_schedule_respects_stop(interval in 1u64..50, total in 1u64..2000, step in 0u64..2000) {
        let cfg = RewireConfig { interval, ..RewireConfig::default() };
        let fires = should_rewire(step, total, &cfg);
        prop_assert_eq!(fires, step > 0 && step % interval == 0 && (step as f64) <= 0.66 * total as f64);
    }
}

#[test]
fn dense_layer_rewire_is_noop() {
    let mut layer = FixedFanInLayer::<f64>::random(3, 5, 5, 1.0, 1).unwrap();
    let before = layer.clone();
    let stats = prune_regrow(&mut layer, &mut [], &RewireConfig::default(), 1, 0).unwrap();
    assert_eq!(stats.pruned, 0);
    assert_eq!(layer, before);
}

#[test]
fn mismatched_moments_rejected() {
    let mut layer = FixedFanInLayer::<f64>::random(3, 8, 4, 1.0, 1).unwrap();
    let mut m = [0.0; 11];
    assert!(prune_regrow(&mut layer, &mut [&mut m[..]], &RewireConfig::default(), 1, 0).is_err());
}
