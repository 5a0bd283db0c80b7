//! Training loop: two optimizer groups on a shared warmup+cosine schedule,
//! periodic prune/regrow of the sparse head, a decaying auxiliary objective
//! and per-step telemetry.

mod config;
mod optim;
mod schedule;
mod telemetry;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::clustering::{meta_targets, LabelClustering};
use crate::data::{compute_propensities, Dataset, SparseRow, DEFAULT_PROPENSITY_A, DEFAULT_PROPENSITY_B};
use crate::dst::{prune_regrow, should_rewire, RewireConfig};
use crate::error::{Error, Result};
use crate::metrics::{macro_p_at_k, precision_at_k, psp_at_k, MacroNormalizer, MetricsReport, Ranking};
use crate::model::{total_loss, DenseGrad, DenseLayer, Gradients, Model, ModelConfig};
use crate::real::Real;

pub use config::{Precision, RunConfig, CONFIG_KEYS};
pub use optim::{optimizer_step, Moments, OptimizerKind, StepParams, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use schedule::lr_at;
pub use telemetry::{Counters, EpochEval, StepRecord, Telemetry, TELEMETRY_CSV_HEADER};

/// Cut-offs reported by [`evaluate`] during training.
pub const DEFAULT_KS: [usize; 3] = [1, 3, 5];

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: u32,
    pub batch_size: usize,
    /// Peak rate of the encoder group.
    pub lr_encoder: f64,
    /// Peak rate of the sparse head.
    pub lr_classifier: f64,
    /// Peak rate of the auxiliary head (encoder optimizer kind and decay).
    pub lr_aux: f64,
    /// Peak rate of the intermediate layer (encoder optimizer kind and decay).
    pub lr_intermediate: f64,
    pub warmup_steps: u64,
    pub weight_decay_encoder: f64,
    pub weight_decay_classifier: f64,
    pub optimizer_encoder: OptimizerKind,
    pub optimizer_classifier: OptimizerKind,
    pub seed: u64,
    /// Evaluate on the test set after every epoch, not only at the end.
    pub eval_every_epoch: bool,
    pub rewire: RewireConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 64,
            lr_encoder: 1e-3,
            lr_classifier: 1e-2,
            lr_aux: 5.01e-4,
            lr_intermediate: 2.01e-4,
            warmup_steps: 100,
            weight_decay_encoder: 0.01,
            weight_decay_classifier: 1e-4,
            optimizer_encoder: OptimizerKind::AdamW,
            optimizer_classifier: OptimizerKind::AdamW,
            seed: 0,
            eval_every_epoch: true,
            rewire: RewireConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        for (name, v) in [
            ("lr_encoder", self.lr_encoder),
            ("lr_classifier", self.lr_classifier),
            ("lr_aux", self.lr_aux),
            ("lr_intermediate", self.lr_intermediate),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("weight_decay_encoder", self.weight_decay_encoder),
            ("weight_decay_classifier", self.weight_decay_classifier),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be non-negative, got {v}")));
            }
        }
        self.rewire.validate()
    }

    /// Optimizer steps in one epoch over `n` instances.
    pub fn steps_per_epoch(&self, n: usize) -> u64 {
        n.div_ceil(self.batch_size.max(1)) as u64
    }
}

/// Adam moments for every parameter array of a [`Model`]. The sparse head's
/// moments share its index layout and are permuted with it on rewiring.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState<T> {
    /// Updates applied so far.
    pub t: u64,
    pub encoder: Vec<[Moments<T>; 2]>,
    pub intermediate: Option<[Moments<T>; 2]>,
    pub head: Moments<T>,
    pub aux: Option<[Moments<T>; 2]>,
}

fn dense_moments<T: Real>(kind: OptimizerKind, l: &DenseLayer<T>) -> [Moments<T>; 2] {
    [Moments::new(kind, l.weight.len()), Moments::new(kind, l.bias.len())]
}

fn dense_update<T: Real>(
    layer: &mut DenseLayer<T>,
    grad: &DenseGrad<T>,
    state: &mut [Moments<T>; 2],
    hp: StepParams,
    what: &str,
) -> Result<()> {
    let gw = grad.weight.as_standard_layout();
    let w = layer.weight.as_slice_mut().ok_or_else(|| Error::shape("weight not contiguous"))?;
    optimizer_step(w, gw.as_slice().expect("standard layout"), &mut state[0], hp, what)?;
    let gb = grad.bias.as_standard_layout();
    let b = layer.bias.as_slice_mut().ok_or_else(|| Error::shape("bias not contiguous"))?;
    optimizer_step(b, gb.as_slice().expect("standard layout"), &mut state[1], hp, what)
}

/// Peak-scaled learning rates for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRates {
    pub encoder: f64,
    pub classifier: f64,
    pub aux: f64,
    pub intermediate: f64,
}

impl StepRates {
    pub fn at(step: u64, total: u64, cfg: &TrainConfig) -> Result<Self> {
        let shape = lr_at(step, 1.0, cfg.warmup_steps, total)?;
        Ok(StepRates {
            encoder: shape * cfg.lr_encoder,
            classifier: shape * cfg.lr_classifier,
            aux: shape * cfg.lr_aux,
            intermediate: shape * cfg.lr_intermediate,
        })
    }
}

impl<T: Real> OptimState<T> {
    pub fn new(model: &Model<T>, cfg: &TrainConfig) -> Self {
        let enc = cfg.optimizer_encoder;
        OptimState {
            t: 0,
            encoder: model.encoder.layers.iter().map(|l| dense_moments(enc, l)).collect(),
            intermediate: model.intermediate.as_ref().map(|l| dense_moments(enc, l)),
            head: Moments::new(cfg.optimizer_classifier, model.head.weights().len()),
            aux: model.aux.as_ref().map(|l| dense_moments(enc, l)),
        }
    }

    /// One update of every parameter group.
    pub fn apply(
        &mut self,
        model: &mut Model<T>,
        grads: &Gradients<T>,
        rates: StepRates,
        cfg: &TrainConfig,
    ) -> Result<()> {
        self.t += 1;
        let enc =
            |lr| StepParams { kind: cfg.optimizer_encoder, lr, weight_decay: cfg.weight_decay_encoder, t: self.t };
        for (i, ((layer, g), st)) in
            model.encoder.layers.iter_mut().zip(&grads.encoder).zip(&mut self.encoder).enumerate()
        {
            dense_update(layer, g, st, enc(rates.encoder), &format!("encoder layer {i}"))?;
        }
        if let (Some(layer), Some(g), Some(st)) = (&mut model.intermediate, &grads.intermediate, &mut self.intermediate)
        {
            dense_update(layer, g, st, enc(rates.intermediate), "intermediate layer")?;
        }
        if let (Some(layer), Some(g), Some(st)) = (&mut model.aux, &grads.aux, &mut self.aux) {
            dense_update(layer, g, st, enc(rates.aux), "aux head")?;
        }
        let hp = StepParams {
            kind: cfg.optimizer_classifier,
            lr: rates.classifier,
            weight_decay: cfg.weight_decay_classifier,
            t: self.t,
        };
        optimizer_step(model.head.weights_mut(), &grads.head, &mut self.head, hp, "sparse head")
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: Model<T>,
    pub telemetry: Telemetry,
}

/// Training failure. A non-finite loss or gradient carries the model as it
/// was at the start of the failing epoch.
pub enum TrainError<T> {
    Failed(Error),
    NonFinite { step: u64, detail: String, last_good: Box<Model<T>>, telemetry: Telemetry },
}

impl<T> TrainError<T> {
    pub fn exit_code(&self) -> i32 {
        match self {
            TrainError::Failed(e) => e.exit_code(),
            TrainError::NonFinite { .. } => 2,
        }
    }
}

impl<T> std::fmt::Debug for TrainError<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Display::fmt(self, f)
    }
}

impl<T> std::fmt::Display for TrainError<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrainError::Failed(e) => e.fmt(f),
            TrainError::NonFinite { step, detail, .. } => write!(f, "training diverged at step {step}: {detail}"),
        }
    }
}

impl<T> std::error::Error for TrainError<T> {}

impl<T> From<Error> for TrainError<T> {
    fn from(e: Error) -> Self {
        TrainError::Failed(e)
    }
}

/// Drops the last-good model and telemetry.
impl<T> From<TrainError<T>> for Error {
    fn from(e: TrainError<T>) -> Self {
        match e {
            TrainError::Failed(e) => e,
            TrainError::NonFinite { step, detail, .. } => Error::NonFinite { what: detail, step },
        }
    }
}

const SHUFFLE_SALT: u64 = 0x5348_5546_464c_4521;
const DROPOUT_SALT: u64 = 0x4452_4f50_4f55_5421;

/// Seed of the rewiring event after `step` updates.
pub fn rewire_seed(seed: u64, step: u64) -> u64 {
    let mut z = seed ^ step.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fills in data-dependent model settings: the input dimension when the
/// first encoder entry is 0 and the cluster count from the clustering.
pub fn resolve_model_config(
    cfg: &ModelConfig,
    data: &Dataset,
    clustering: Option<&LabelClustering>,
) -> Result<ModelConfig> {
    let mut m = cfg.clone();
    match m.encoder_dims.first_mut() {
        Some(d) if *d == 0 => *d = data.num_features(),
        Some(d) if *d != data.num_features() => {
            return Err(Error::config(format!(
                "encoder input size {d} does not match the data ({} features)",
                data.num_features()
            )))
        }
        _ => {}
    }
    if m.aux_enabled {
        let c = clustering.ok_or_else(|| Error::config("the aux head needs a label clustering"))?;
        if c.num_labels() != data.num_labels() {
            return Err(Error::config(format!(
                "clustering covers {} labels, data has {}",
                c.num_labels(),
                data.num_labels()
            )));
        }
        if m.num_clusters != 0 && m.num_clusters != c.num_clusters() {
            return Err(Error::config(format!(
                "num_clusters = {} but the clustering has {}",
                m.num_clusters,
                c.num_clusters()
            )));
        }
        m.num_clusters = c.num_clusters();
    }
    m.validate()?;
    Ok(m)
}

#[allow(clippy::result_large_err)]
pub fn train<T: Real>(
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    clustering: Option<&LabelClustering>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>, TrainError<T>> {
    train_with(train_set, test_set, clustering, cfg, |_, _| {})
}

/// [`train`] with a callback invoked after every epoch with the epoch number
/// (1-based) and the telemetry so far.
#[allow(clippy::result_large_err)]
pub fn train_with<T: Real>(
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    clustering: Option<&LabelClustering>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(u32, &Telemetry),
) -> Result<TrainOutcome<T>, TrainError<T>> {
    cfg.validate()?;
    let model_cfg = resolve_model_config(&cfg.model, train_set, clustering)?;
    if let Some(test) = test_set {
        if test.num_labels() != train_set.num_labels() || test.num_features() != train_set.num_features() {
            return Err(Error::shape("test set dimensions differ from the training set").into());
        }
    }
    let mut model = Model::<T>::new(model_cfg, train_set.num_labels(), cfg.seed)?;
    let mut telemetry = Telemetry::default();
    if cfg.epochs == 0 {
        return Ok(TrainOutcome { model, telemetry });
    }

    let n = train_set.num_instances();
    let steps_per_epoch = cfg.steps_per_epoch(n);
    let total = steps_per_epoch * cfg.epochs as u64;
    lr_at(0, 1.0, cfg.warmup_steps, total)?;

    let propensities = compute_propensities(&train_set.label_counts(), n, DEFAULT_PROPENSITY_A, DEFAULT_PROPENSITY_B)
        .map(|p| p.propensities)
        .unwrap_or_else(|_| vec![1.0; train_set.num_labels()]);
    let eval = |model: &Model<T>| -> Result<Option<MetricsReport>> {
        match test_set {
            Some(test) => {
                evaluate(model, test, &DEFAULT_KS, &propensities, clustering, cfg.batch_size.max(256)).map(Some)
            }
            None => Ok(None),
        }
    };
    if cfg.eval_every_epoch {
        if let Some(report) = eval(&model)? {
            telemetry.evals.push(EpochEval { epoch: 0, report });
        }
    }

    let meta: Vec<Vec<u32>> = match (clustering, model.aux.is_some()) {
        (Some(c), true) => train_set.labels().iter().map(|l| meta_targets(l, c)).collect(),
        _ => Vec::new(),
    };
    let mut state = OptimState::new(&model, cfg);
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_SALT);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ DROPOUT_SALT);
    let mut step = 0u64;

    for epoch in 0..cfg.epochs {
        let last_good = model.clone();
        let diverged = |step: u64, detail: String, telemetry: &Telemetry| TrainError::NonFinite {
            step,
            detail,
            last_good: Box::new(last_good.clone()),
            telemetry: telemetry.clone(),
        };
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(cfg.batch_size) {
            let rows: Vec<&SparseRow> = batch.iter().map(|&i| &train_set.features()[i]).collect();
            let targets: Vec<Vec<u32>> = batch.iter().map(|&i| train_set.labels()[i].clone()).collect();
            let meta_batch: Vec<Vec<u32>> =
                if meta.is_empty() { Vec::new() } else { batch.iter().map(|&i| meta[i].clone()).collect() };
            let out = model.forward(&rows, Some(&mut dropout_rng))?;
            let loss = total_loss(&out, &targets, &meta_batch, epoch as f64, &model.config)?;
            let extreme = loss.extreme.as_f64();
            let meta_loss = loss.meta.map(|m| m.as_f64());
            if !extreme.is_finite() || meta_loss.is_some_and(|m| !m.is_finite()) {
                return Err(diverged(step, format!("loss {extreme} / meta {meta_loss:?}"), &telemetry));
            }
            if meta_loss.is_some() {
                telemetry.counters.meta_loss_evaluations += 1;
            }
            if loss.meta_delta.is_some() {
                telemetry.counters.meta_backward_passes += 1;
            }
            telemetry.counters.extreme_delta_nnz += loss.extreme_delta.nnz() as u64;
            telemetry.counters.extreme_delta_capacity += (batch.len() * model.num_labels()) as u64;

            let grads = model.backward(&out, &loss.extreme_delta, loss.meta_delta.as_ref())?;
            let rates = StepRates::at(step, total, cfg)?;
            match state.apply(&mut model, &grads, rates, cfg) {
                Ok(()) => {}
                Err(Error::NonFinite { what, .. }) => return Err(diverged(step, what, &telemetry)),
                Err(e) => return Err(e.into()),
            }
            telemetry.steps.push(StepRecord {
                step,
                epoch,
                loss_extreme: extreme,
                loss_meta: meta_loss,
                aux_scale: loss.scale,
                grad_norm_encoder: grads.encoder_norm(),
                lr_encoder: rates.encoder,
                lr_classifier: rates.classifier,
            });
            step += 1;
            if should_rewire(step, total, &cfg.rewire) {
                let mut aligned = state.head.arrays_mut();
                let stats =
                    prune_regrow(&mut model.head, &mut aligned, &cfg.rewire, step, rewire_seed(cfg.seed, step))?;
                telemetry.counters.rewire_events += 1;
                telemetry.rewires.push(stats);
            }
        }
        let last = epoch + 1 == cfg.epochs;
        if cfg.eval_every_epoch || last {
            if let Some(report) = eval(&model)? {
                telemetry.evals.push(EpochEval { epoch: epoch + 1, report });
            }
        }
        on_epoch(epoch + 1, &telemetry);
    }
    Ok(TrainOutcome { model, telemetry })
}

/// P@k, PSP@k and Macro-P@k for every `k`, plus the aux head's P@k over
/// clusters (`metaP`) when a clustering is given and the model has one.
pub fn evaluate<T: Real>(
    model: &Model<T>,
    data: &Dataset,
    ks: &[usize],
    propensities: &[f64],
    clustering: Option<&LabelClustering>,
    batch_size: usize,
) -> Result<MetricsReport> {
    let l = model.num_labels();
    if data.num_labels() != l {
        return Err(Error::shape(format!("model has {l} labels, data has {}", data.num_labels())));
    }
    let ks: Vec<usize> = ks.iter().copied().filter(|&k| k >= 1 && k <= l).collect();
    let kmax = ks.iter().copied().max().unwrap_or(1).min(l);
    let meta_k = match (clustering, &model.aux) {
        (Some(c), Some(_)) => Some(ks.iter().copied().filter(|&k| k <= c.num_clusters()).max().unwrap_or(1)),
        _ => None,
    };
    let mut ranking = Ranking { k: kmax, labels: Vec::with_capacity(data.num_instances()) };
    let mut meta_ranking = meta_k.map(|k| Ranking { k, labels: Vec::new() });
    let rows: Vec<&SparseRow> = data.features().iter().collect();
    for chunk in rows.chunks(batch_size.max(1)) {
        let (scores, meta_scores) = model.predict(chunk)?;
        let scores = scores.as_standard_layout();
        ranking.labels.extend(Ranking::from_scores(scores.as_slice().expect("standard layout"), l, kmax)?.labels);
        if let (Some(mr), Some(ms)) = (&mut meta_ranking, meta_scores) {
            let ms = ms.as_standard_layout();
            mr.labels.extend(Ranking::from_scores(ms.as_slice().expect("standard layout"), ms.ncols(), mr.k)?.labels);
        }
    }
    let truth = data.labels();
    let mut report = MetricsReport::default();
    for &k in &ks {
        report.push("P", k, precision_at_k(truth, &ranking, k)?);
    }
    for &k in &ks {
        report.push("PSP", k, psp_at_k(truth, &ranking, propensities, k)?);
    }
    for &k in &ks {
        report.push("MacroP", k, macro_p_at_k(truth, &ranking, k, l, MacroNormalizer::Labels)?);
    }
    if let (Some(c), Some(mr)) = (clustering, &meta_ranking) {
        let meta_truth: Vec<Vec<u32>> = truth.iter().map(|t| meta_targets(t, c)).collect();
        for &k in ks.iter().filter(|&&k| k <= mr.k) {
            report.push("metaP", k, precision_at_k(&meta_truth, mr, k)?);
        }
    }
    Ok(report)
}
