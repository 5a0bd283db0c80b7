//! Command implementations behind the `fanin-xmc` binary. Each command takes
//! plain arguments, writes its artifacts and reports to `out`, and returns a
//! value tests can inspect.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::clustering::{
    balanced_kmeans, build_label_features, cluster_overlap, default_num_clusters, random_clustering, LabelClustering,
};
use crate::data::{
    compute_propensities, compute_stats, read_xmc_file, stats_csv_row, write_xmc_file, Dataset, SyntheticConfig,
    SyntheticTask, DEFAULT_PROPENSITY_A, DEFAULT_PROPENSITY_B, STATS_CSV_HEADER,
};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::model::{load_checkpoint_any, save_checkpoint, AnyModel, AuxCutoff, Model};
use crate::real::Real;
use crate::sparse::{memory_report, sparsity_of, MemoryReport};
use crate::train::{evaluate, train_with, Precision, RunConfig, TrainError, DEFAULT_KS};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetChecksum {
    pub path: PathBuf,
    pub sha256: String,
}

/// Written before any computation; enough to replay the run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: String,
    pub seed: u64,
    pub datasets: Vec<DatasetChecksum>,
    pub output: PathBuf,
    pub version: String,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(|e| Error::file(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::file(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

impl RunManifest {
    pub fn new(command: &str, config: String, seed: u64, datasets: &[&Path], output: &Path) -> Result<Self> {
        Ok(RunManifest {
            command: command.to_string(),
            config,
            seed,
            datasets: datasets
                .iter()
                .map(|p| Ok(DatasetChecksum { path: p.to_path_buf(), sha256: sha256_file(p)? }))
                .collect::<Result<_>>()?,
            output: output.to_path_buf(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &(serde_json::to_string_pretty(self)? + "\n"))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::file(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::file(path, e))
}

/// Manifest path for a single-file output: `<file>.manifest.json`.
fn sidecar_manifest(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

/// Prints the header and one stats row per dataset, pairing `test` with
/// the first dataset for the `Ntest` column.
pub fn cmd_stats(paths: &[PathBuf], test: Option<&Path>, out: &mut dyn Write) -> Result<Vec<String>> {
    let num_test = match test {
        Some(p) => Some(read_xmc_file(p)?.num_instances()),
        None => None,
    };
    writeln!(out, "{STATS_CSV_HEADER}")?;
    let mut rows = Vec::new();
    for (i, path) in paths.iter().enumerate() {
        let data = read_xmc_file(path)?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let row = stats_csv_row(&name, &compute_stats(&data), if i == 0 { num_test } else { None });
        writeln!(out, "{row}")?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterMode {
    Balanced,
    Random,
}

impl std::str::FromStr for ClusterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced" => Ok(ClusterMode::Balanced),
            "random" => Ok(ClusterMode::Random),
            _ => Err(Error::config(format!("cluster mode must be balanced or random, got {s:?}"))),
        }
    }
}

pub fn make_clustering(data: &Dataset, k: usize, mode: ClusterMode, seed: u64) -> Result<LabelClustering> {
    match mode {
        ClusterMode::Balanced => balanced_kmeans(&build_label_features(data), k, seed),
        ClusterMode::Random => random_clustering(data.num_labels(), k, seed),
    }
}

/// Clusters the labels of `data_path`, writes the partition and prints a
/// balance report plus the overlap with an independent random clustering.
pub fn cmd_cluster(
    data_path: &Path,
    k: Option<usize>,
    mode: ClusterMode,
    seed: u64,
    output: &Path,
    out: &mut dyn Write,
) -> Result<LabelClustering> {
    ensure_parent(output)?;
    let config = format!("k = {}\nmode = {mode:?}\n", k.map(|k| k.to_string()).unwrap_or_else(|| "auto".into()));
    RunManifest::new("cluster", config, seed, &[data_path], output)?.write(&sidecar_manifest(output))?;
    let data = read_xmc_file(data_path)?;
    let k = k.unwrap_or_else(|| default_num_clusters(data.num_labels()));
    let clustering = make_clustering(&data, k, mode, seed)?;
    clustering.write_file(output)?;
    let (min, max) = clustering.balance();
    let reference = random_clustering(data.num_labels(), k, seed.wrapping_add(1))?;
    writeln!(out, "clusters,{k}")?;
    writeln!(out, "min_size,{min}")?;
    writeln!(out, "max_size,{max}")?;
    writeln!(out, "overlap_vs_random,{:.4}", cluster_overlap(&clustering, &reference)?)?;
    Ok(clustering)
}

/// Result of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub output_dir: PathBuf,
    /// Final metrics on the test set, or the training set without one.
    pub metrics: MetricsReport,
    pub wallclock_secs: f64,
    pub sparsity: f64,
    pub steps: usize,
}

fn load_propensities(data: &Dataset) -> Vec<f64> {
    compute_propensities(&data.label_counts(), data.num_instances(), DEFAULT_PROPENSITY_A, DEFAULT_PROPENSITY_B)
        .map(|p| p.propensities)
        .unwrap_or_else(|_| vec![1.0; data.num_labels()])
}

fn run_typed<T: Real>(
    cfg: &RunConfig,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    clustering: Option<&LabelClustering>,
    log: &mut dyn Write,
) -> Result<(MetricsReport, usize, f64)> {
    let dir = &cfg.output_dir;
    let start = Instant::now();
    let result = train_with::<T>(train_set, test_set, clustering, &cfg.train, |epoch, t| {
        let p1 = t.last_eval().and_then(|r| r.get("P", 1));
        let loss = t.steps.last().map(|s| s.loss_extreme).unwrap_or(f64::NAN);
        let _ = match p1 {
            Some(p) => writeln!(log, "epoch {epoch}: loss {loss:.5} P@1 {p:.4}"),
            None => writeln!(log, "epoch {epoch}: loss {loss:.5}"),
        };
    });
    let outcome = match result {
        Ok(o) => o,
        Err(TrainError::Failed(e)) => return Err(e),
        Err(TrainError::NonFinite { step, detail, last_good, telemetry }) => {
            write_text(&dir.join("telemetry.csv"), &telemetry.to_csv())?;
            save_checkpoint(&last_good, dir.join("checkpoint.last_good.json"))?;
            return Err(Error::NonFinite { what: detail, step });
        }
    };
    let wall = start.elapsed().as_secs_f64();
    let t = &outcome.telemetry;
    write_text(&dir.join("telemetry.csv"), &t.to_csv())?;
    write_text(&dir.join("rewire.csv"), &t.rewire_csv())?;
    write_text(&dir.join("evals.csv"), &t.evals_csv())?;
    save_checkpoint(&outcome.model, dir.join("checkpoint.json"))?;
    let metrics = match t.last_eval() {
        Some(r) => r.clone(),
        None => {
            let data = test_set.unwrap_or(train_set);
            evaluate(&outcome.model, data, &DEFAULT_KS, &load_propensities(train_set), clustering, 512)?
        }
    };
    write_text(&dir.join("metrics.csv"), &metrics.to_csv())?;
    Ok((metrics, t.steps.len(), wall))
}

/// Trains from a parsed config, writing every artifact under its output
/// directory.
pub fn run_config(cfg: &RunConfig, command: &str, log: &mut dyn Write) -> Result<TrainSummary> {
    let train_path = cfg.train_path.as_deref().ok_or_else(|| Error::config("train_path is required"))?;
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    let mut datasets: Vec<&Path> = vec![train_path];
    datasets.extend(cfg.test_path.as_deref());
    datasets.extend(cfg.clustering_path.as_deref());
    RunManifest::new(command, cfg.to_config_string(), cfg.train.seed, &datasets, dir)?
        .write(&dir.join(MANIFEST_FILE))?;
    write_text(&dir.join("config.txt"), &cfg.to_config_string())?;

    let train_set = read_xmc_file(train_path)?;
    let test_set = match &cfg.test_path {
        Some(p) => Some(read_xmc_file(p)?),
        None => None,
    };
    let clustering = if cfg.train.model.aux_enabled {
        let c = match &cfg.clustering_path {
            Some(p) => LabelClustering::read_file(p)?,
            None => {
                let k = match cfg.train.model.num_clusters {
                    0 => default_num_clusters(train_set.num_labels()),
                    k => k,
                };
                let c = make_clustering(&train_set, k, ClusterMode::Balanced, cfg.train.seed)?;
                c.write_file(dir.join("clustering.txt"))?;
                c
            }
        };
        Some(c)
    } else {
        None
    };
    let (metrics, steps, wall) = match cfg.precision {
        Precision::F32 => run_typed::<f32>(cfg, &train_set, test_set.as_ref(), clustering.as_ref(), log)?,
        Precision::F64 => run_typed::<f64>(cfg, &train_set, test_set.as_ref(), clustering.as_ref(), log)?,
    };
    Ok(TrainSummary {
        output_dir: dir.clone(),
        metrics,
        wallclock_secs: wall,
        sparsity: sparsity_of(cfg.train.model.fan_in, cfg.train.model.head_input_dim()),
        steps,
    })
}

/// Trains the run described by the config file at `config_path`.
pub fn cmd_train(config_path: &Path, log: &mut dyn Write) -> Result<TrainSummary> {
    let cfg = RunConfig::read_file(config_path)?;
    run_config(&cfg, "train", log)
}

fn evaluate_any(
    model: &AnyModel,
    data: &Dataset,
    ks: &[usize],
    propensities: &[f64],
    clustering: Option<&LabelClustering>,
) -> Result<MetricsReport> {
    fn go<T: Real>(
        m: &Model<T>,
        data: &Dataset,
        ks: &[usize],
        p: &[f64],
        c: Option<&LabelClustering>,
    ) -> Result<MetricsReport> {
        evaluate(m, data, ks, p, c, 512)
    }
    match model {
        AnyModel::F32(m) => go(m, data, ks, propensities, clustering),
        AnyModel::F64(m) => go(m, data, ks, propensities, clustering),
    }
}

/// Scores a checkpoint on `data_path`. Propensities come from the
/// `propensity_source` dataset when given, else from the evaluated data.
pub fn cmd_evaluate(
    checkpoint: &Path,
    data_path: &Path,
    propensity_source: Option<&Path>,
    clustering_path: Option<&Path>,
    ks: &[usize],
    output: Option<&Path>,
    out: &mut dyn Write,
) -> Result<MetricsReport> {
    if let Some(o) = output {
        ensure_parent(o)?;
        let mut inputs = vec![checkpoint, data_path];
        inputs.extend(propensity_source);
        inputs.extend(clustering_path);
        let config = format!("ks = {ks:?}\n");
        RunManifest::new("evaluate", config, 0, &inputs, o)?.write(&sidecar_manifest(o))?;
    }
    let model = load_checkpoint_any(checkpoint)?;
    let data = read_xmc_file(data_path)?;
    let propensities = match propensity_source {
        Some(p) => load_propensities(&read_xmc_file(p)?),
        None => load_propensities(&data),
    };
    let clustering = match clustering_path {
        Some(p) => Some(LabelClustering::read_file(p)?),
        None => None,
    };
    let report = evaluate_any(&model, &data, ks, &propensities, clustering.as_ref())?;
    let csv = report.to_csv();
    write!(out, "{csv}")?;
    if let Some(o) = output {
        write_text(o, &csv)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    RewireInterval,
    FanIn,
    AuxCutoff,
    IntermediateSize,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rewire_interval" => Ok(SweepAxis::RewireInterval),
            "fan_in" => Ok(SweepAxis::FanIn),
            "aux_cutoff" => Ok(SweepAxis::AuxCutoff),
            "intermediate_size" => Ok(SweepAxis::IntermediateSize),
            _ => Err(Error::config(format!(
                "sweep axis must be rewire_interval, fan_in, aux_cutoff or intermediate_size, got {s:?}"
            ))),
        }
    }
}

impl SweepAxis {
    pub fn key(self) -> &'static str {
        match self {
            SweepAxis::RewireInterval => "rewire_interval",
            SweepAxis::FanIn => "fan_in",
            SweepAxis::AuxCutoff => "aux_cutoff",
            SweepAxis::IntermediateSize => "intermediate_size",
        }
    }

    /// Applies one axis value. For `aux_cutoff`, `0` turns the aux head off
    /// and any other value turns it on.
    pub fn apply(self, cfg: &mut RunConfig, value: &str) -> Result<()> {
        match self {
            SweepAxis::AuxCutoff => {
                let cutoff: AuxCutoff = value.parse()?;
                cfg.train.model.aux_enabled = cutoff != AuxCutoff::Epoch(0);
                cfg.train.model.aux_cutoff = cutoff;
            }
            SweepAxis::IntermediateSize => {
                cfg.train.model.use_intermediate = true;
                cfg.set(self.key(), value)?;
            }
            _ => cfg.set(self.key(), value)?,
        }
        Ok(())
    }
}

pub const SWEEP_CSV_HEADER: &str = "axis_value,P@1,P@3,P@5,PSP@1,wallclock,sparsity,status";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub result: std::result::Result<TrainSummary, String>,
}

impl SweepRow {
    pub fn csv(&self) -> String {
        match &self.result {
            Ok(s) => {
                let m = |name: &str, k: usize| s.metrics.get(name, k).map(|v| v.to_string()).unwrap_or_default();
                format!(
                    "{},{},{},{},{},{:.3},{},ok",
                    self.value,
                    m("P", 1),
                    m("P", 3),
                    m("P", 5),
                    m("PSP", 1),
                    s.wallclock_secs,
                    s.sparsity
                )
            }
            Err(e) => format!("{},,,,,,,error: {}", self.value, e.replace([',', '\n'], ";")),
        }
    }
}

/// One training run per axis value under `<output_dir>/<axis>_<value>`.
/// Failed runs are recorded and the sweep continues. `parallel` runs the
/// configurations concurrently.
pub fn cmd_sweep(
    base_config: &Path,
    axis: SweepAxis,
    values: &[String],
    parallel: bool,
    out: &mut dyn Write,
) -> Result<Vec<SweepRow>> {
    let base = RunConfig::read_file(base_config)?;
    if values.is_empty() {
        return Err(Error::config("sweep needs at least one value"));
    }
    let mut configs = Vec::with_capacity(values.len());
    for v in values {
        let mut cfg = base.clone();
        axis.apply(&mut cfg, v)?;
        cfg.output_dir = base.output_dir.join(format!("{}_{}", axis.key(), v));
        configs.push(cfg);
    }
    create_dir(&base.output_dir)?;
    let sweep_desc = format!("{}axis = {}\nvalues = {}\n", base.to_config_string(), axis.key(), values.join(","));
    let mut inputs: Vec<&Path> = vec![base_config];
    inputs.extend(base.train_path.as_deref());
    inputs.extend(base.test_path.as_deref());
    RunManifest::new("sweep", sweep_desc, base.train.seed, &inputs, &base.output_dir)?
        .write(&base.output_dir.join(MANIFEST_FILE))?;

    let run = |(cfg, value): (&RunConfig, &String)| SweepRow {
        value: value.clone(),
        result: run_config(cfg, "sweep", &mut std::io::sink()).map_err(|e| e.to_string()),
    };
    let rows: Vec<SweepRow> = if parallel {
        configs.par_iter().zip(values.par_iter()).map(run).collect()
    } else {
        configs.iter().zip(values.iter()).map(run).collect()
    };
    let mut csv = format!("{SWEEP_CSV_HEADER}\n");
    for r in &rows {
        csv += &r.csv();
        csv.push('\n');
    }
    write_text(&base.output_dir.join("sweep.csv"), &csv)?;
    write!(out, "{csv}")?;
    Ok(rows)
}

/// Prints the dense vs fixed fan-in training-memory accounting.
pub fn cmd_memory(
    dim: usize,
    num_labels: usize,
    fan_in: Option<usize>,
    weight_bits: u32,
    index_bits: u32,
    out: &mut dyn Write,
) -> Result<MemoryReport> {
    let f = fan_in.unwrap_or(dim);
    if dim == 0 || f == 0 || f > dim {
        return Err(Error::config(format!("fan-in must be in 1..={dim}, got {f}")));
    }
    if weight_bits == 0 || !weight_bits.is_multiple_of(8) || index_bits == 0 || !index_bits.is_multiple_of(8) {
        return Err(Error::config("bit widths must be positive multiples of 8"));
    }
    let report = memory_report(dim, num_labels, f, weight_bits, index_bits);
    write!(out, "{}", report.to_csv())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthArgs {
    pub num_train: usize,
    pub num_test: usize,
    pub num_labels: usize,
    pub num_features: usize,
    pub zipf_exponent: f64,
    pub labels_per_instance: usize,
    pub noise_scale: f64,
    pub keep_prob: f64,
    pub seed: u64,
}

impl Default for SynthArgs {
    fn default() -> Self {
        let base = SyntheticConfig::new(1000, 2000, 1.2, 3);
        SynthArgs {
            num_train: 5000,
            num_test: 2000,
            num_labels: base.num_labels,
            num_features: base.num_features,
            zipf_exponent: base.zipf_exponent,
            labels_per_instance: base.labels_per_instance,
            noise_scale: base.noise_scale,
            keep_prob: base.keep_prob,
            seed: 0,
        }
    }
}

impl SynthArgs {
    pub fn task_config(&self) -> SyntheticConfig {
        let mut c =
            SyntheticConfig::new(self.num_labels, self.num_features, self.zipf_exponent, self.labels_per_instance);
        c.noise_scale = self.noise_scale;
        c.keep_prob = self.keep_prob;
        c
    }

    /// Train and test sets drawn from one synthetic task.
    pub fn generate(&self) -> Result<(Dataset, Dataset)> {
        let c = self.task_config();
        if c.num_labels == 0 || c.num_features == 0 {
            return Err(Error::config("synthetic data needs at least one label and one feature"));
        }
        if c.labels_per_instance > c.num_labels {
            return Err(Error::config("labels per instance exceeds the label count"));
        }
        if !(c.zipf_exponent > 0.0) || !(0.0..=1.0).contains(&c.keep_prob) || !(c.noise_scale >= 0.0) {
            return Err(Error::config(
                "zipf exponent must be positive, noise non-negative, keep probability in [0, 1]",
            ));
        }
        let task = SyntheticTask::new(c, self.seed);
        Ok(task.split(self.num_train, self.num_test, self.seed.wrapping_add(1)))
    }
}

/// Writes `train.txt` and `test.txt` under `out_dir`.
pub fn cmd_synth(args: &SynthArgs, out_dir: &Path, out: &mut dyn Write) -> Result<(PathBuf, PathBuf)> {
    create_dir(out_dir)?;
    let desc = format!("{args:?}\n");
    RunManifest::new("synth", desc, args.seed, &[], out_dir)?.write(&out_dir.join(MANIFEST_FILE))?;
    let (train, test) = args.generate()?;
    let (tp, vp) = (out_dir.join("train.txt"), out_dir.join("test.txt"));
    write_xmc_file(&train, &tp)?;
    write_xmc_file(&test, &vp)?;
    writeln!(out, "{STATS_CSV_HEADER}")?;
    writeln!(out, "{}", stats_csv_row("synthetic", &compute_stats(&train), Some(test.num_instances())))?;
    Ok((tp, vp))
}
