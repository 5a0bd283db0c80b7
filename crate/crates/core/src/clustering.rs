//! Balanced label clusterings used as the meta-label space of the auxiliary
//! head.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, SparseRow};
use crate::error::{Error, Result};

/// Total map from label id to cluster id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelClustering {
    num_clusters: usize,
    assignment: Vec<u32>,
}

impl LabelClustering {
    pub fn new(num_clusters: usize, assignment: Vec<u32>) -> Result<Self> {
        if num_clusters == 0 {
            return Err(Error::config("a clustering needs at least one cluster"));
        }
        if let Some(&c) = assignment.iter().find(|&&c| c as usize >= num_clusters) {
            return Err(Error::shape(format!("cluster id {c} out of range {num_clusters}")));
        }
        Ok(LabelClustering { num_clusters, assignment })
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn num_labels(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    pub fn cluster_of(&self, label: u32) -> u32 {
        self.assignment[label as usize]
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_clusters];
        for &c in &self.assignment {
            sizes[c as usize] += 1;
        }
        sizes
    }

    /// `(min, max)` cluster size.
    pub fn balance(&self) -> (usize, usize) {
        let sizes = self.cluster_sizes();
        (sizes.iter().copied().min().unwrap_or(0), sizes.iter().copied().max().unwrap_or(0))
    }

    /// Writes one `label_id cluster_id` line per label.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for (l, c) in self.assignment.iter().enumerate() {
            writeln!(out, "{l} {c}")?;
        }
        Ok(())
    }

    /// Reads `label_id cluster_id` lines; every label in `0..L` must appear
    /// exactly once. The cluster count is the largest id plus one.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let mut next = |what: &str| -> Result<u32> {
                let tok = it.next().ok_or_else(|| Error::Parse { line: i + 1, msg: format!("missing {what}") })?;
                tok.parse().map_err(|_| Error::Parse { line: i + 1, msg: format!("invalid {what} {tok:?}") })
            };
            pairs.push((next("label id")?, next("cluster id")?));
        }
        let num_labels = pairs.len();
        let mut assignment = vec![u32::MAX; num_labels];
        for (l, c) in pairs {
            let slot = assignment.get_mut(l as usize).ok_or(Error::Range {
                line: 0,
                what: "label",
                value: l as u64,
                bound: num_labels as u64,
            })?;
            if *slot != u32::MAX {
                return Err(Error::Value { line: 0, msg: format!("label {l} assigned twice") });
            }
            *slot = c;
        }
        let k = assignment.iter().map(|&c| c as usize + 1).max().unwrap_or(1);
        Self::new(k, assignment)
    }

    pub fn read_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        Self::read(std::io::BufReader::new(f))
    }

    pub fn write_file(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// One L2-normalized sparse representation per label (zero for labels
/// without positives).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelFeatureMatrix {
    pub num_features: usize,
    pub rows: Vec<SparseRow>,
}

/// Sums the feature vectors of each label's positive instances and
/// normalizes the sums.
pub fn build_label_features(data: &Dataset) -> LabelFeatureMatrix {
    let mut acc: Vec<Vec<(u32, f32)>> = vec![Vec::new(); data.num_labels()];
    for (row, labels) in data.features().iter().zip(data.labels()) {
        for &l in labels {
            acc[l as usize].extend(row.iter());
        }
    }
    let rows = acc
        .into_iter()
        .map(|pairs| {
            let mut r = SparseRow::from_pairs(pairs);
            let norm = r.values.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
            if norm > 0.0 {
                r.values.iter_mut().for_each(|v| *v = (*v as f64 / norm) as f32);
            }
            r
        })
        .collect();
    LabelFeatureMatrix { num_features: data.num_features(), rows }
}

/// Smallest power of two with at least `L / 100` clusters, capped at `L`.
pub fn default_num_clusters(num_labels: usize) -> usize {
    let mut k = 1usize;
    while k * 100 < num_labels {
        k *= 2;
    }
    while k > num_labels.max(1) {
        k /= 2;
    }
    k
}

const MAX_KMEANS_ITERS: usize = 50;

fn sim(row: &SparseRow, centroid: &[f64]) -> f64 {
    row.iter().map(|(f, v)| v as f64 * centroid[f as usize]).sum()
}

fn centroid(features: &LabelFeatureMatrix, members: &[u32]) -> Vec<f64> {
    let mut c = vec![0.0; features.num_features];
    for &l in members {
        for (f, v) in features.rows[l as usize].iter() {
            c[f as usize] += v as f64;
        }
    }
    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        c.iter_mut().for_each(|v| *v /= norm);
    }
    c
}

/// Spherical 2-means with a median split on the similarity gap, so the
/// halves differ in size by at most one (the first half gets the extra).
fn bisect(features: &LabelFeatureMatrix, labels: &[u32], rng: &mut ChaCha8Rng) -> (Vec<u32>, Vec<u32>) {
    let n = labels.len();
    let half = n.div_ceil(2);
    let seeds: Vec<u32> = labels.choose_multiple(rng, 2).copied().collect();
    let mut c0 = centroid(features, &seeds[..1]);
    let mut c1 = centroid(features, &seeds[1..]);
    let mut order: Vec<(f64, u32)> = Vec::with_capacity(n);
    let mut previous: Option<Vec<u32>> = None;
    for _ in 0..MAX_KMEANS_ITERS {
        order.clear();
        order.extend(labels.iter().map(|&l| {
            let row = &features.rows[l as usize];
            (sim(row, &c0) - sim(row, &c1), l)
        }));
        order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
        let mut left: Vec<u32> = order[..half].iter().map(|e| e.1).collect();
        left.sort_unstable();
        if previous.as_ref() == Some(&left) {
            break;
        }
        let mut right: Vec<u32> = order[half..].iter().map(|e| e.1).collect();
        right.sort_unstable();
        c0 = centroid(features, &left);
        c1 = centroid(features, &right);
        previous = Some(left);
    }
    let mut left: Vec<u32> = order[..half].iter().map(|e| e.1).collect();
    let mut right: Vec<u32> = order[half..].iter().map(|e| e.1).collect();
    left.sort_unstable();
    right.sort_unstable();
    (left, right)
}

/// Recursive balanced 2-means into `k` (a power of two) clusters.
pub fn balanced_kmeans(features: &LabelFeatureMatrix, k: usize, seed: u64) -> Result<LabelClustering> {
    let num_labels = features.rows.len();
    if k == 0 || !k.is_power_of_two() {
        return Err(Error::config(format!("cluster count must be a power of two, got {k}")));
    }
    if k > num_labels {
        return Err(Error::config(format!("cluster count {k} exceeds label count {num_labels}")));
    }
    let depth = k.trailing_zeros();
    // Breadth-first; node ids follow heap numbering.
    let mut level: Vec<Vec<u32>> = vec![(0..num_labels as u32).collect()];
    for d in 0..depth {
        let mut next = Vec::with_capacity(level.len() * 2);
        for (i, members) in level.iter().enumerate() {
            let node = (1u64 << d) + i as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(node);
            let (a, b) = bisect(features, members, &mut rng);
            next.push(a);
            next.push(b);
        }
        level = next;
    }
    let mut assignment = vec![0u32; num_labels];
    for (c, members) in level.iter().enumerate() {
        for &l in members {
            assignment[l as usize] = c as u32;
        }
    }
    LabelClustering::new(k, assignment)
}

/// Shuffles the label ids and cuts them into `k` near-equal chunks.
pub fn random_clustering(num_labels: usize, k: usize, seed: u64) -> Result<LabelClustering> {
    if k == 0 || k > num_labels {
        return Err(Error::config(format!("cluster count must be in 1..={num_labels}, got {k}")));
    }
    let mut order: Vec<u32> = (0..num_labels as u32).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (q, r) = (num_labels / k, num_labels % k);
    let mut assignment = vec![0u32; num_labels];
    for (pos, &l) in order.iter().enumerate() {
        let c = if pos < r * (q + 1) { pos / (q + 1) } else { r + (pos - r * (q + 1)) / q };
        assignment[l as usize] = c as u32;
    }
    LabelClustering::new(k, assignment)
}

/// Sorted ids of the clusters containing at least one relevant label.
pub fn meta_targets(labels: &[u32], clustering: &LabelClustering) -> Vec<u32> {
    let mut out: Vec<u32> = labels.iter().map(|&l| clustering.cluster_of(l)).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Largest pairwise intersection between clusters of `a` and `b`, divided
/// by the largest cluster size in either clustering.
pub fn cluster_overlap(a: &LabelClustering, b: &LabelClustering) -> Result<f64> {
    if a.num_labels() != b.num_labels() || a.num_clusters() != b.num_clusters() {
        return Err(Error::shape(format!(
            "clusterings differ in shape: {}x{} vs {}x{}",
            a.num_labels(),
            a.num_clusters(),
            b.num_labels(),
            b.num_clusters()
        )));
    }
    let mut counts: HashMap<(u32, u32), usize> = HashMap::new();
    for (&ca, &cb) in a.assignment.iter().zip(&b.assignment) {
        *counts.entry((ca, cb)).or_default() += 1;
    }
    let largest = a.balance().1.max(b.balance().1);
    let best = counts.values().copied().max().unwrap_or(0);
    Ok(if largest == 0 { 0.0 } else { best as f64 / largest as f64 })
}
