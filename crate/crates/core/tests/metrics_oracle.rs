mod common;

use common::{brute_metrics, brute_top_k, rng};
use fanin_xmc::data::{compute_propensities, DEFAULT_PROPENSITY_A, DEFAULT_PROPENSITY_B};
use fanin_xmc::metrics::{macro_p_at_k, precision_at_k, psp_at_k, top_k, MacroNormalizer, Ranking};
use proptest::prelude::*;
use rand::Rng;

const TOL: f64 = 1e-12;

struct Instance {
    labels: usize,
    truth: Vec<Vec<u32>>,
    scores: Vec<Vec<f64>>,
    propensities: Vec<f64>,
}

/// Integer-valued scores so ties are common and the tie rule gets exercised.
fn instance(r: &mut impl Rng) -> Instance {
    let labels = r.random_range(5..=20);
    let n = r.random_range(1..=10);
    let truth = (0..n)
        .map(|_| {
            let mut t: Vec<u32> = (0..labels as u32).filter(|_| r.random_bool(0.25)).collect();
            t.sort_unstable();
            t
        })
        .collect();
    let scores = (0..n).map(|_| (0..labels).map(|_| r.random_range(0..4) as f64).collect()).collect();
    let propensities = (0..labels).map(|_| r.random_range(0.05..1.0)).collect();
    Instance { labels, truth, scores, propensities }
}

fn ranking(inst: &Instance, k: usize) -> Ranking {
    let flat: Vec<f64> = inst.scores.iter().flatten().copied().collect();
    Ranking::from_scores(&flat, inst.labels, k).unwrap()
}

#[test]
fn metrics_match_brute_force_on_random_instances() {
    let mut r = rng(2024);
    for case in 0..100 {
        let inst = instance(&mut r);
        for k in [1, 3, 5] {
            let rk = ranking(&inst, k);
            for (row, s) in rk.labels.iter().zip(&inst.scores) {
                assert_eq!(row, &brute_top_k(s, k), "case {case} k {k}");
            }
            let (p, psp, mac) = brute_metrics(&inst.truth, &inst.scores, &inst.propensities, k, inst.labels);
            let got_p = precision_at_k(&inst.truth, &rk, k).unwrap();
            let got_psp = psp_at_k(&inst.truth, &rk, &inst.propensities, k).unwrap();
            let got_mac = macro_p_at_k(&inst.truth, &rk, k, inst.labels, MacroNormalizer::Labels).unwrap();
            assert!((got_p - p).abs() < TOL, "case {case} P@{k}: {got_p} vs {p}");
            assert!((got_psp - psp).abs() < TOL, "case {case} PSP@{k}: {got_psp} vs {psp}");
            assert!((got_mac - mac).abs() < TOL, "case {case} macro@{k}: {got_mac} vs {mac}");
        }
    }
}

#[test]
fn hand_computed_example() {
    // Two samples, four labels.
    let truth = vec![vec![0, 2], vec![3]];
    let scores = [0.9, 0.1, 0.8, 0.3, 0.2, 0.7, 0.1, 0.6];
    let rk = Ranking::from_scores(&scores, 4, 3).unwrap();
    assert_eq!(rk.labels, vec![vec![0, 2, 3], vec![1, 3, 0]]);
    assert_eq!(precision_at_k(&truth, &rk, 1).unwrap(), 0.5);
    assert!((precision_at_k(&truth, &rk, 3).unwrap() - 0.5).abs() < TOL);
    let p = [0.5, 1.0, 0.25, 0.8];
    // Sample 0 at k=1: 1/0.5 = 2; sample 1: 0. Mean 1.
    assert_eq!(psp_at_k(&truth, &rk, &p, 1).unwrap(), 1.0);
    // k=3: sample 0 hits 0,2 -> (2 + 4)/3; sample 1 hits 3 -> 1.25/3.
    let want = ((6.0 + 1.25) / 3.0) / 2.0;
    assert!((psp_at_k(&truth, &rk, &p, 3).unwrap() - want).abs() < TOL);
    // Literal macro: (1/L) * (2/3 + 1/3).
    assert!((macro_p_at_k(&truth, &rk, 3, 4, MacroNormalizer::Labels).unwrap() - 0.25).abs() < TOL);
    assert!((macro_p_at_k(&truth, &rk, 3, 4, MacroNormalizer::Instances).unwrap() - 0.5).abs() < TOL);
}

#[test]
fn uniform_propensity_makes_psp_equal_precision() {
    let mut r = rng(7);
    for _ in 0..50 {
        let mut inst = instance(&mut r);
        inst.propensities = vec![1.0; inst.labels];
        for k in [1, 3, 5] {
            let rk = ranking(&inst, k);
            let p = precision_at_k(&inst.truth, &rk, k).unwrap();
            let psp = psp_at_k(&inst.truth, &rk, &inst.propensities, k).unwrap();
            assert!((p - psp).abs() < TOL);
        }
    }
}

#[test]
fn psp_dominates_precision_with_real_propensities() {
    let mut r = rng(8);
    for _ in 0..50 {
        let inst = instance(&mut r);
        let counts: Vec<u64> =
            (0..inst.labels).map(|l| inst.truth.iter().filter(|t| t.contains(&(l as u32))).count() as u64).collect();
        let prop = compute_propensities(&counts, inst.truth.len().max(3), DEFAULT_PROPENSITY_A, DEFAULT_PROPENSITY_B)
            .unwrap()
            .propensities;
        for k in [1, 3, 5] {
            let rk = ranking(&inst, k);
            let p = precision_at_k(&inst.truth, &rk, k).unwrap();
            let psp = psp_at_k(&inst.truth, &rk, &prop, k).unwrap();
            assert!(psp + TOL >= p, "PSP {psp} < P {p}");
        }
    }
}

#[test]
fn random_scores_give_chance_level_precision() {
    let labels = 1000;
    let n = 4000;
    let mut r = rng(99);
    let truth: Vec<Vec<u32>> = (0..n)
        .map(|_| {
            let mut t: Vec<u32> = rand::seq::index::sample(&mut r, labels, 5).into_iter().map(|v| v as u32).collect();
            t.sort_unstable();
            t
        })
        .collect();
    let scores: Vec<f64> = (0..n * labels).map(|_| r.random::<f64>()).collect();
    let rk = Ranking::from_scores(&scores, labels, 1).unwrap();
    let p1 = precision_at_k(&truth, &rk, 1).unwrap();
    let mean = 5.0 / labels as f64;
    let sigma = (mean * (1.0 - mean) / n as f64).sqrt();
    assert!((p1 - mean).abs() <= 3.0 * sigma, "P@1 {p1} vs chance {mean} (3 sigma = {})", 3.0 * sigma);
}

#[test]
fn rejects_bad_inputs() {
    let rk = Ranking::from_scores(&[0.1, 0.2, 0.3], 3, 2).unwrap();
    assert!(precision_at_k(&[vec![0]], &rk, 3).is_err());
    assert!(precision_at_k(&[vec![0], vec![1]], &rk, 1).is_err());
    assert!(psp_at_k(&[vec![0]], &rk, &[1.0, 0.0, 1.0], 1).is_err());
    assert!(Ranking::from_scores(&[0.1, 0.2, 0.3], 2, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn hits_are_nondecreasing_in_k(
        scores in prop::collection::vec(-5i32..5, 6..30),
        mask in prop::collection::vec(any::<bool>(), 30),
    ) {
        let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let truth: Vec<u32> = (0..scores.len() as u32).filter(|&l| mask[l as usize]).collect();
        let mut prev = 0;
        for k in 1..=scores.len() {
            let top = top_k(&scores, k).unwrap();
            prop_assert_eq!(&top[..], &brute_top_k(&scores, k)[..]);
            let hits = top.iter().filter(|l| truth.contains(l)).count();
            prop_assert!(hits >= prev);
            prop_assert!(hits <= k);
            prev = hits;
        }
        prop_assert_eq!(prev, truth.len());
    }
}
