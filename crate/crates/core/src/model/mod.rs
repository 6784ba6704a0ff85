//! Jointly trained VAE + DNN syllable-stress classifier.
//!
//! Training uses mini-batch Adam:
//! `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`,
//! `θ ← θ − η·m̂/(√v̂ + ε)` with `m̂ = m/(1−β₁ᵗ)`, `v̂ = v/(1−β₂ᵗ)`,
//! β₁ = 0.9, β₂ = 0.999, ε = 1e−8. The snapshot with the best validation
//! accuracy (lower validation loss breaks ties) is kept.

mod linalg;
mod net;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use linalg::{matmul, matmul_nt, matmul_tn};
pub use net::{
    sigmoid, Dense, Forward, LossTerms, Network, DEC_HIDDEN, DEC_OUT, DNN_FIRST, ENC_HIDDEN,
    ENC_LOGVAR, ENC_MU, PROB_CLAMP,
};

use crate::eval::{accuracy, postprocess_all, threshold};
use crate::rng::{derive_seed, GaussianStream};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("expected {expected} features per row, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("non-finite input at row {row}, column {column}")]
    NonFiniteInput { row: usize, column: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {terms:?}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        terms: LossTerms,
    },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight of the VAE terms.
    pub lambda: f64,
    /// Weight of the KL term inside the VAE terms.
    pub beta: f64,
    /// Defaults by input width: 16 below 256 inputs, 64 otherwise.
    pub latent_dim: Option<usize>,
    /// Defaults by input width: 32 below 256 inputs, 256 otherwise.
    pub hidden: Option<usize>,
    pub dnn_widths: Vec<usize>,
    pub seed: u64,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 32,
            lambda: 1.0,
            beta: 0.1,
            latent_dim: None,
            hidden: None,
            dnn_widths: vec![64, 32, 16, 4, 1],
            seed: 0,
            patience: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return bad("epochs, batch_size and patience must be positive");
        }
        if !(self.lambda >= 0.0 && self.beta >= 0.0) {
            return bad("lambda and beta must be non-negative");
        }
        if self.dnn_widths.last() != Some(&1) || self.dnn_widths.contains(&0) {
            return bad("dnn_widths must be positive and end in 1");
        }
        if self.latent_dim == Some(0) || self.hidden == Some(0) {
            return bad("latent_dim and hidden must be positive");
        }
        Ok(())
    }

    pub fn latent_for(&self, input_dim: usize) -> usize {
        self.latent_dim.unwrap_or(if input_dim >= 256 { 64 } else { 16 })
    }

    pub fn hidden_for(&self, input_dim: usize) -> usize {
        self.hidden.unwrap_or(if input_dim >= 256 { 256 } else { 32 })
    }

    pub fn from_toml(text: &str) -> Result<Self, ModelError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ModelError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Per-column mean and standard deviation of training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn fit(x: &[f64], dim: usize) -> Self {
        let n = (x.len() / dim).max(1) as f64;
        let mut mean = vec![0.0; dim];
        for row in x.chunks_exact(dim) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in x.chunks_exact(dim) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let dim = self.mean.len();
        let mut out = x.to_vec();
        for row in out.chunks_exact_mut(dim) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}

/// Feature rows with labels and optional word grouping (indices into the rows).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Rows {
    pub dim: usize,
    pub x: Vec<f64>,
    pub y: Vec<u8>,
    pub words: Vec<Vec<usize>>,
}

impl Rows {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn check(&self) -> Result<(), ModelError> {
        for (i, v) in self.x.iter().enumerate() {
            if !v.is_finite() {
                return Err(ModelError::NonFiniteInput {
                    row: i / self.dim,
                    column: i % self.dim,
                });
            }
        }
        Ok(())
    }

    fn gather(&self, idx: &[usize]) -> (Vec<f64>, Vec<u8>) {
        let mut x = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            x.extend_from_slice(&self.x[i * self.dim..(i + 1) * self.dim]);
        }
        (x, idx.iter().map(|&i| self.y[i]).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// Trained network with the normalisation it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub net: Network,
    pub norm: NormStats,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

pub fn init(input_dim: usize, cfg: &TrainConfig) -> Network {
    Network::new(
        input_dim,
        cfg.hidden_for(input_dim),
        cfg.latent_for(input_dim),
        &cfg.dnn_widths,
        derive_seed(cfg.seed, "init"),
    )
}

struct Adam {
    m: Network,
    v: Network,
    t: i32,
}

impl Adam {
    fn new(net: &Network) -> Self {
        Self {
            m: net.zeros_like(),
            v: net.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, net: &mut Network, grad: &Network, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for (((p, g), m), v) in net
            .tensors_mut()
            .zip(grad.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            for i in 0..p.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

fn evaluate(net: &Network, x: &[f64], rows: &Rows, cfg: &TrainConfig) -> (f64, f64) {
    let f = net.forward(x, rows.len(), None);
    let loss = net.loss(&f, x, &rows.y, cfg.lambda, cfg.beta).total;
    let pred = if rows.words.is_empty() {
        threshold(&f.p)
    } else {
        postprocess_all(&f.p, &rows.words)
    };
    (loss, accuracy(&pred, &rows.y).unwrap_or(0.0))
}

pub fn fit(train: &Rows, val: &Rows, cfg: &TrainConfig) -> Result<Trained, ModelError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(ModelError::EmptySplit("train"));
    }
    if val.is_empty() {
        return Err(ModelError::EmptySplit("validation"));
    }
    if val.dim != train.dim {
        return Err(ModelError::DimMismatch {
            expected: train.dim,
            got: val.dim,
        });
    }
    train.check()?;
    val.check()?;
    let dim = train.dim;
    let norm = NormStats::fit(&train.x, dim);
    let train_x = norm.apply(&train.x);
    let val_x = norm.apply(&val.x);
    let normed = Rows {
        x: train_x,
        ..train.clone()
    };

    let mut net = init(dim, cfg);
    let latent = net.latent;
    let mut adam = Adam::new(&net);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "shuffle"));
    let mut noise = GaussianStream::new(derive_seed(cfg.seed, "reparam"));

    let mut history = Vec::new();
    let mut best: Option<(f64, f64, usize, Network)> = None;
    let mut stale = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let (x, y) = normed.gather(idx);
            let eps = noise.take_vec(idx.len() * latent);
            let f = net.forward(&x, idx.len(), Some(&eps));
            let terms = net.loss(&f, &x, &y, cfg.lambda, cfg.beta);
            if !terms.is_finite() {
                return Err(ModelError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    terms,
                });
            }
            loss_sum += terms.total * idx.len() as f64;
            let g = net.backward(&f, &x, &y, Some(&eps), cfg.lambda, cfg.beta);
            adam.step(&mut net, &g, cfg.learning_rate);
        }
        let (val_loss, val_accuracy) = evaluate(&net, &val_x, val, cfg);
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_loss,
            val_accuracy,
        });
        let improved = match &best {
            None => true,
            Some((acc, loss, _, _)) => {
                val_accuracy > *acc || (val_accuracy == *acc && val_loss < *loss)
            }
        };
        if improved {
            best = Some((val_accuracy, val_loss, epoch, net.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let (_, _, best_epoch, net) = best.expect("at least one epoch ran");
    Ok(Trained {
        model: Model {
            net,
            norm,
            config: cfg.clone(),
        },
        history,
        best_epoch,
    })
}

impl Model {
    pub fn input_dim(&self) -> usize {
        self.net.input_dim
    }

    /// Stress probabilities for row-major `x`, in row order.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        let dim = self.input_dim();
        if x.len() % dim != 0 {
            return Err(ModelError::DimMismatch {
                expected: dim,
                got: x.len() % dim,
            });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteInput {
                row: i / dim,
                column: i % dim,
            });
        }
        let n = x.len() / dim;
        if n == 0 {
            return Ok(Vec::new());
        }
        Ok(self.net.forward(&self.norm.apply(x), n, None).p)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(CHECKPOINT_MAGIC);
        b.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        for d in [self.net.input_dim, self.net.hidden, self.net.latent] {
            b.extend_from_slice(&(d as u32).to_le_bytes());
        }
        b.extend_from_slice(&(self.net.dnn_widths.len() as u16).to_le_bytes());
        for &w in &self.net.dnn_widths {
            b.extend_from_slice(&(w as u32).to_le_bytes());
        }
        let cfg = serde_json::to_vec(&self.config).expect("config serialises");
        b.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        b.extend_from_slice(&cfg);
        for v in self.norm.mean.iter().chain(&self.norm.std) {
            b.extend_from_slice(&v.to_le_bytes());
        }
        for t in self.net.tensors() {
            for v in t {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader { b: bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(ModelError::Checkpoint("bad magic".into()));
        }
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
        }
        let input_dim = r.u32()? as usize;
        let hidden = r.u32()? as usize;
        let latent = r.u32()? as usize;
        let depth = r.u16()? as usize;
        let widths = (0..depth).map(|_| r.u32().map(|w| w as usize)).collect::<Result<Vec<_>, _>>()?;
        let cfg_len = r.u32()? as usize;
        let config: TrainConfig = serde_json::from_slice(r.take(cfg_len)?)
            .map_err(|e| ModelError::Checkpoint(format!("config: {e}")))?;
        let mean = (0..input_dim).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let std = (0..input_dim).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let mut net = Network::new(input_dim, hidden, latent, &widths, 0).zeros_like();
        for t in net.tensors_mut() {
            for v in t.iter_mut() {
                *v = r.f64()?;
            }
        }
        if r.pos != bytes.len() {
            return Err(ModelError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            net,
            norm: NormStats { mean, std },
            config,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SBCK";
pub const CHECKPOINT_VERSION: u16 = 1;

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.b.len());
        let end = end.ok_or_else(|| ModelError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.b[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
