//! Encoder, optional intermediate layer, fixed fan-in extreme head and the
//! dense auxiliary head over label clusters.
//!
//! ```text
//! sparse x ─► encoder ─► embedding ─┬─► [intermediate + ReLU] ─► fixed fan-in head ─► L scores
//!                                   └─► aux head (dense d x K) ─────────────────────► K scores
//! ```
//!
//! The two heads share only the encoder; extreme scores never read the
//! auxiliary scores.

mod checkpoint;
mod encoder;
mod loss;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SparseRow;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::sparse::{self, FixedFanInLayer, SparseDelta};

pub use checkpoint::{
    load_checkpoint, load_checkpoint_any, save_checkpoint, AnyModel, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use encoder::{DenseGrad, DenseLayer, EncoderCache, EncoderMlp};
pub use loss::{bce_loss, loss_and_delta, squared_hinge_loss, LossKind, BCE_DELTA_EPS};

/// When the auxiliary loss weight reaches zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AuxCutoff {
    /// Linear decay to zero at this epoch; `0` disables the auxiliary loss.
    Epoch(u32),
    /// Constant weight for the whole run.
    Never,
}

impl std::fmt::Display for AuxCutoff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AuxCutoff::Epoch(e) => write!(f, "{e}"),
            AuxCutoff::Never => f.write_str("never"),
        }
    }
}

impl std::str::FromStr for AuxCutoff {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "never" | "none" => Ok(AuxCutoff::Never),
            _ => s
                .parse()
                .map(AuxCutoff::Epoch)
                .map_err(|_| Error::config(format!("aux cutoff must be an epoch or `never`, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// `[d_in, hidden..., d]`.
    pub encoder_dims: Vec<usize>,
    pub dropout: f64,
    pub use_intermediate: bool,
    pub intermediate_size: usize,
    pub fan_in: usize,
    pub aux_enabled: bool,
    pub num_clusters: usize,
    pub aux_cutoff: AuxCutoff,
    pub aux_initial_scale: f64,
    pub loss: LossKind,
    pub bce_pos_weight: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder_dims: vec![0, 256],
            dropout: 0.0,
            use_intermediate: false,
            intermediate_size: 1024,
            fan_in: 64,
            aux_enabled: false,
            num_clusters: 16,
            aux_cutoff: AuxCutoff::Epoch(15),
            aux_initial_scale: 1.0,
            loss: LossKind::SquaredHinge,
            bce_pos_weight: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn embedding_dim(&self) -> usize {
        *self.encoder_dims.last().unwrap_or(&0)
    }

    /// Input dimension of the sparse head.
    pub fn head_input_dim(&self) -> usize {
        if self.use_intermediate {
            self.intermediate_size
        } else {
            self.embedding_dim()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_dims.len() < 2 || self.encoder_dims.contains(&0) {
            return Err(Error::config(format!(
                "encoder dims must list at least input and output sizes, got {:?}",
                self.encoder_dims
            )));
        }
        if self.use_intermediate && self.intermediate_size < self.embedding_dim() {
            return Err(Error::config(format!(
                "intermediate size {} is smaller than the embedding ({})",
                self.intermediate_size,
                self.embedding_dim()
            )));
        }
        let d = self.head_input_dim();
        if self.fan_in == 0 || self.fan_in > d {
            return Err(Error::config(format!("fan-in must be in 1..={d}, got {}", self.fan_in)));
        }
        if self.aux_enabled {
            if !(self.aux_initial_scale > 0.0) {
                return Err(Error::config("aux initial scale must be positive"));
            }
            if self.num_clusters == 0 {
                return Err(Error::config("aux head needs at least one cluster"));
            }
        }
        Ok(())
    }
}

/// Auxiliary loss weight at a (possibly fractional) epoch:
/// `a0 * max(0, 1 - epoch / cutoff)`.
pub fn aux_scale(epoch: f64, cfg: &ModelConfig) -> f64 {
    if !cfg.aux_enabled {
        return 0.0;
    }
    match cfg.aux_cutoff {
        AuxCutoff::Never => cfg.aux_initial_scale,
        AuxCutoff::Epoch(0) => 0.0,
        AuxCutoff::Epoch(c) => cfg.aux_initial_scale * (1.0 - epoch / c as f64).max(0.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Model<T> {
    pub config: ModelConfig,
    pub encoder: EncoderMlp<T>,
    pub intermediate: Option<DenseLayer<T>>,
    pub head: FixedFanInLayer<T>,
    pub aux: Option<DenseLayer<T>>,
}

/// Scores plus everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct ModelOutput<T> {
    pub extreme_scores: Array2<T>,
    pub meta_scores: Option<Array2<T>>,
    rows: Vec<SparseRow>,
    encoder_cache: EncoderCache<T>,
    embedding: Array2<T>,
    intermediate_pre: Option<Array2<T>>,
    head_input: Array2<T>,
}

impl<T> ModelOutput<T> {
    pub fn embedding(&self) -> &Array2<T> {
        &self.embedding
    }

    pub fn batch_size(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub encoder: Vec<DenseGrad<T>>,
    pub intermediate: Option<DenseGrad<T>>,
    /// In the head's index layout.
    pub head: Vec<T>,
    pub aux: Option<DenseGrad<T>>,
}

impl<T: Real> Gradients<T> {
    /// L2 norm over all encoder parameters.
    pub fn encoder_norm(&self) -> f64 {
        self.encoder.iter().map(DenseGrad::sq_norm).sum::<f64>().sqrt()
    }
}

impl<T: Real> Model<T> {
    pub fn new(config: ModelConfig, num_labels: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = EncoderMlp::new(&config.encoder_dims, config.dropout, seed ^ 0x5eed_e4c0)?;
        let d = config.embedding_dim();
        let intermediate = config
            .use_intermediate
            .then(|| DenseLayer::uniform(d, config.intermediate_size, (6.0 / d as f64).sqrt(), &mut rng));
        let head = FixedFanInLayer::random(
            num_labels,
            config.head_input_dim(),
            config.fan_in,
            1.0 / (config.fan_in as f64).sqrt(),
            seed ^ 0x4ead_0001,
        )?;
        let aux =
            config.aux_enabled.then(|| DenseLayer::uniform(d, config.num_clusters, 1.0 / (d as f64).sqrt(), &mut rng));
        Ok(Model { config, encoder, intermediate, head, aux })
    }

    pub fn num_labels(&self) -> usize {
        self.head.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    /// Forward pass; `dropout_rng` switches on training-mode dropout.
    pub fn forward(&self, rows: &[&SparseRow], dropout_rng: Option<&mut ChaCha8Rng>) -> Result<ModelOutput<T>> {
        let (embedding, encoder_cache) = self.encoder.forward(rows, dropout_rng)?;
        let (head_input, intermediate_pre) = match &self.intermediate {
            Some(layer) => {
                let pre = layer.forward(embedding.view())?;
                (pre.mapv(|v| v.max(T::zero())), Some(pre))
            }
            None => (embedding.clone(), None),
        };
        let extreme_scores = sparse::forward(&self.head, head_input.view())?;
        let meta_scores = match &self.aux {
            Some(aux) => Some(aux.forward(embedding.view())?),
            None => None,
        };
        Ok(ModelOutput {
            extreme_scores,
            meta_scores,
            rows: rows.iter().map(|r| (*r).clone()).collect(),
            encoder_cache,
            embedding,
            intermediate_pre,
            head_input,
        })
    }

    /// Backpropagates the extreme-head delta and, when given, the (already
    /// scaled) meta-head delta.
    pub fn backward(
        &self,
        out: &ModelOutput<T>,
        extreme: &SparseDelta<T>,
        meta: Option<&SparseDelta<T>>,
    ) -> Result<Gradients<T>> {
        let b = out.batch_size();
        let head = sparse::backward_weights(&self.head, out.head_input.view(), extreme)?;
        let d_head_input = sparse::backward_input(&self.head, extreme, b)?;

        let (intermediate, mut d_emb) = match (&self.intermediate, &out.intermediate_pre) {
            (Some(layer), Some(pre)) => {
                let mut d_pre = d_head_input;
                d_pre.zip_mut_with(pre, |d, &p| {
                    if p <= T::zero() {
                        *d = T::zero();
                    }
                });
                let (g, dx) = layer.backward(out.embedding.view(), d_pre.view(), true);
                (Some(g), dx.unwrap())
            }
            _ => (None, d_head_input),
        };

        let aux = match (meta, &self.aux) {
            (Some(delta), Some(layer)) => {
                if delta.num_labels() != layer.outputs() || delta.batch_size() != b {
                    return Err(Error::shape("meta delta does not match the aux head"));
                }
                let dm = delta.to_dense();
                let (g, dx) = layer.backward(out.embedding.view(), dm.view(), true);
                d_emb += &dx.unwrap();
                Some(g)
            }
            (Some(_), None) => return Err(Error::shape("meta delta given but the model has no aux head")),
            (None, _) => None,
        };

        let rows: Vec<&SparseRow> = out.rows.iter().collect();
        let encoder = self.encoder.backward(&rows, &out.encoder_cache, d_emb);
        Ok(Gradients { encoder, intermediate, head, aux })
    }

    /// Extreme scores for inference, without dropout or backward caches.
    pub fn predict(&self, rows: &[&SparseRow]) -> Result<(Array2<T>, Option<Array2<T>>)> {
        let out = self.forward(rows, None)?;
        Ok((out.extreme_scores, out.meta_scores))
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        let dense = |l: &DenseLayer<T>| DenseLayer {
            weight: l.weight.mapv(|v| U::of(v.as_f64())),
            bias: l.bias.mapv(|v| U::of(v.as_f64())),
        };
        Model {
            config: self.config.clone(),
            encoder: EncoderMlp {
                layers: self.encoder.layers.iter().map(dense).collect(),
                dropout: self.encoder.dropout,
            },
            intermediate: self.intermediate.as_ref().map(dense),
            head: self.head.cast(),
            aux: self.aux.as_ref().map(dense),
        }
    }
}

/// Loss terms and the deltas to backpropagate.
#[derive(Debug, Clone)]
pub struct TotalLoss<T> {
    pub total: T,
    pub extreme: T,
    /// `None` when the auxiliary term was not computed.
    pub meta: Option<T>,
    pub scale: f64,
    pub extreme_delta: SparseDelta<T>,
    /// Already multiplied by `scale`.
    pub meta_delta: Option<SparseDelta<T>>,
}

/// `extreme + aux_scale(epoch) * meta`. The meta loss is skipped entirely
/// when the scale is zero or the model has no aux head.
pub fn total_loss<T: Real>(
    out: &ModelOutput<T>,
    targets: &[Vec<u32>],
    meta_targets: &[Vec<u32>],
    epoch: f64,
    cfg: &ModelConfig,
) -> Result<TotalLoss<T>> {
    let (extreme, extreme_delta) = loss_and_delta(cfg.loss, out.extreme_scores.view(), targets, cfg.bce_pos_weight)?;
    let scale = aux_scale(epoch, cfg);
    let (meta, meta_delta) = match (&out.meta_scores, scale > 0.0) {
        (Some(scores), true) => {
            let (m, mut d) = loss_and_delta(cfg.loss, scores.view(), meta_targets, cfg.bce_pos_weight)?;
            d.scale(T::of(scale));
            (Some(m), Some(d))
        }
        _ => (None, None),
    };
    let total = match meta {
        Some(m) => extreme + T::of(scale) * m,
        None => extreme,
    };
    Ok(TotalLoss { total, extreme, meta, scale, extreme_delta, meta_delta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    fn cfg(aux: bool, cutoff: AuxCutoff) -> ModelConfig {
        ModelConfig {
            encoder_dims: vec![6, 5, 4],
            fan_in: 2,
            aux_enabled: aux,
            num_clusters: 3,
            aux_cutoff: cutoff,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn aux_scale_schedule() {
        let c = cfg(true, AuxCutoff::Epoch(15));
        assert_eq!(aux_scale(0.0, &c), 1.0);
        assert!((aux_scale(5.0, &c) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(aux_scale(15.0, &c), 0.0);
        assert_eq!(aux_scale(40.0, &c), 0.0);
        assert_eq!(aux_scale(3.0, &cfg(true, AuxCutoff::Epoch(0))), 0.0);
        assert_eq!(aux_scale(1e6, &cfg(true, AuxCutoff::Never)), 1.0);
        assert_eq!(aux_scale(0.0, &cfg(false, AuxCutoff::Never)), 0.0);
    }

    #[test]
    fn aux_disabled_has_no_meta_scores() {
        let m = Model::<f32>::new(cfg(false, AuxCutoff::Never), 7, 1).unwrap();
        let row = SparseRow::from_pairs(vec![(0, 1.0)]);
        let out = m.forward(&[&row], None).unwrap();
        assert!(out.meta_scores.is_none());
        assert_eq!(out.extreme_scores.dim(), (1, 7));
    }

    #[test]
    fn zero_encoder_gives_zero_scores() {
        let mut m = Model::<f64>::new(cfg(true, AuxCutoff::Never), 7, 1).unwrap();
        for l in &mut m.encoder.layers {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
        let row = SparseRow::from_pairs(vec![(0, 1.0), (3, 2.0)]);
        let out = m.forward(&[&row], None).unwrap();
        assert!(out.extreme_scores.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_composition_reproduces_input() {
        let d = 5;
        let c = ModelConfig { encoder_dims: vec![d, d], fan_in: d, ..ModelConfig::default() };
        let mut m = Model::<f64>::new(c, d, 0).unwrap();
        m.encoder.layers[0] = DenseLayer { weight: Array2::eye(d), bias: Array1::zeros(d) };
        m.head = FixedFanInLayer::from_dense(&Array2::eye(d), d).unwrap();
        let rows = [SparseRow::from_pairs(vec![(0, 1.5), (4, -2.0)]), SparseRow::from_pairs(vec![(2, 0.25)])];
        let refs: Vec<&SparseRow> = rows.iter().collect();
        let out = m.forward(&refs, None).unwrap();
        let mut x = Array2::zeros((2, d));
        for (b, r) in rows.iter().enumerate() {
            for (f, v) in r.iter() {
                x[[b, f as usize]] = v as f64;
            }
        }
        assert_eq!(out.extreme_scores, x);
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(false, AuxCutoff::Never);
        c.fan_in = 5;
        assert!(c.validate().is_err());
        c.fan_in = 4;
        c.use_intermediate = true;
        c.intermediate_size = 3;
        assert!(c.validate().is_err());
        c.intermediate_size = 8;
        c.fan_in = 8;
        assert!(c.validate().is_ok());
        let mut a = cfg(true, AuxCutoff::Never);
        a.aux_initial_scale = 0.0;
        assert!(a.validate().is_err());
    }

    #[test]
    fn cutoff_parse() {
        assert_eq!("never".parse::<AuxCutoff>().unwrap(), AuxCutoff::Never);
        assert_eq!("12".parse::<AuxCutoff>().unwrap(), AuxCutoff::Epoch(12));
        assert!("x".parse::<AuxCutoff>().is_err());
    }
}
