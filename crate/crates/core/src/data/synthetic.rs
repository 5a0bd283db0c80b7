//! Synthetic long-tailed multi-label data.
//!
//! Labels are grouped into latent topics. Every label owns a sparse center
//! made of its topic's shared features plus a few label-specific ones, and
//! label frequencies follow a Zipf law over label ids (label 0 is the most
//! frequent). An instance is the L2-normalized sum of noisy subsamples of its
//! labels' centers plus background noise features, so both the label task and
//! the coarser topic task are learnable from the features.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, SparseRow};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub num_labels: usize,
    pub num_features: usize,
    pub zipf_exponent: f64,
    pub labels_per_instance: usize,
    /// Labels sharing one latent topic.
    pub labels_per_topic: usize,
    /// Shared features per topic center.
    pub topic_features: usize,
    /// Label-specific features per label center.
    pub label_features: usize,
    /// Probability that a center feature shows up in an instance.
    pub keep_prob: f64,
    /// Background features per instance, drawn uniformly.
    pub noise_features: usize,
    /// Scale of background feature values relative to center values.
    pub noise_scale: f64,
}

impl SyntheticConfig {
    pub fn new(num_labels: usize, num_features: usize, zipf_exponent: f64, labels_per_instance: usize) -> Self {
        SyntheticConfig {
            num_labels,
            num_features,
            zipf_exponent,
            labels_per_instance,
            labels_per_topic: 32,
            topic_features: 12,
            label_features: 6,
            keep_prob: 0.4,
            noise_features: 8,
            noise_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Center {
    features: Vec<(u32, f32)>,
}

/// The latent structure shared by a train and a test split.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    cfg: SyntheticConfig,
    topic_of: Vec<usize>,
    topics: Vec<Center>,
    labels: Vec<Center>,
    label_dist: WeightedIndex<f64>,
}

impl SyntheticTask {
    pub fn new(cfg: SyntheticConfig, seed: u64) -> Self {
        assert!(cfg.num_labels >= 1 && cfg.num_features >= 1, "counts must be positive");
        assert!(cfg.zipf_exponent > 0.0, "zipf exponent must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = cfg.num_labels;
        let per_topic = cfg.labels_per_topic.max(1);
        let num_topics = l.div_ceil(per_topic);

        let mut order: Vec<usize> = (0..l).collect();
        order.shuffle(&mut rng);
        let mut topic_of = vec![0; l];
        for (pos, &label) in order.iter().enumerate() {
            topic_of[label] = pos % num_topics;
        }

        let d = cfg.num_features;
        let draw_center = |rng: &mut ChaCha8Rng, count: usize| {
            let mut feats: Vec<(u32, f32)> =
                (0..count).map(|_| (rng.random_range(0..d) as u32, rng.random_range(0.5f32..1.5))).collect();
            feats.sort_by_key(|f| f.0);
            feats.dedup_by_key(|f| f.0);
            Center { features: feats }
        };
        let topics = (0..num_topics).map(|_| draw_center(&mut rng, cfg.topic_features)).collect();
        let labels = (0..l).map(|_| draw_center(&mut rng, cfg.label_features)).collect();

        let weights: Vec<f64> = (1..=l).map(|r| (r as f64).powf(-cfg.zipf_exponent)).collect();
        let label_dist = WeightedIndex::new(weights).expect("finite positive weights");
        SyntheticTask { cfg, topic_of, topics, labels, label_dist }
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.cfg
    }

    pub fn num_topics(&self) -> usize {
        self.topics.len()
    }

    /// Latent topic of every label.
    pub fn topic_of(&self) -> &[usize] {
        &self.topic_of
    }

    /// Draws `n` instances.
    pub fn sample(&self, n: usize, seed: u64) -> Dataset {
        let cfg = &self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let per_instance = cfg.labels_per_instance.min(cfg.num_labels);
        let mut features = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let mut ls: Vec<u32> = Vec::with_capacity(per_instance);
            if per_instance == cfg.num_labels {
                ls.extend(0..cfg.num_labels as u32);
            } else {
                while ls.len() < per_instance {
                    let l = self.label_dist.sample(&mut rng) as u32;
                    if !ls.contains(&l) {
                        ls.push(l);
                    }
                }
            }
            let mut pairs = Vec::new();
            for &l in &ls {
                let topic = &self.topics[self.topic_of[l as usize]];
                for center in [topic, &self.labels[l as usize]] {
                    for &(f, w) in &center.features {
                        if rng.random_bool(cfg.keep_prob) {
                            pairs.push((f, w * rng.random_range(0.5f32..1.5)));
                        }
                    }
                }
            }
            for _ in 0..cfg.noise_features {
                let f = rng.random_range(0..cfg.num_features) as u32;
                pairs.push((f, cfg.noise_scale as f32 * rng.random::<f32>()));
            }
            let mut row = SparseRow::from_pairs(pairs);
            let norm = row.values.iter().map(|v| v * v).sum::<f32>().sqrt();
            if norm > 0.0 {
                row.values.iter_mut().for_each(|v| *v /= norm);
            }
            ls.sort_unstable();
            features.push(row);
            labels.push(ls);
        }
        Dataset::new(cfg.num_features, cfg.num_labels, features, labels).expect("generator emits valid rows")
    }

    /// A train and a test split drawn from the same latent structure.
    pub fn split(&self, num_train: usize, num_test: usize, seed: u64) -> (Dataset, Dataset) {
        let all = self.sample(num_train + num_test, seed);
        (all.slice(0, num_train), all.slice(num_train, num_train + num_test))
    }
}

/// Draws `n` instances from a fresh task seeded by `seed`.
pub fn generate_synthetic(
    n: usize,
    num_labels: usize,
    num_features: usize,
    zipf_exponent: f64,
    labels_per_instance: usize,
    seed: u64,
) -> Dataset {
    let cfg = SyntheticConfig::new(num_labels, num_features, zipf_exponent, labels_per_instance);
    SyntheticTask::new(cfg, seed).sample(n, seed.wrapping_add(0x9e37_79b9_7f4a_7c15))
}
