//! The HDReason model: relation-bound memorization over encoded
//! hypervectors, a TransE-style L1 score, and closed-form backpropagation
//! into the original-space embeddings only.

mod backward;
mod checkpoint;
mod loss;
mod memorize;
mod optim;
mod score;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::hdc::{encode_with, Activation, BaseMatrix};
use crate::kg::KnowledgeGraph;
use crate::matrix::Matrix;
use crate::rng::{stream, Stream};

pub use backward::{backward, chunk_widths, chunked_backward, Gradients};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{loss_and_delta, multi_hot_targets, LossOutput};
pub use memorize::{memorize_edge_list, memorize_edges, memorize_matrix_form, memorize_matrix};
pub use optim::{Optimizer, OptimizerKind};
pub use score::{score_batch, score_matrix, QueryBatch, SignCache, TrainingSignals};
pub use train::{train_epoch, EpochStats, StageTimes, TrainOptions, Trainer};

/// How the L1 residual enters the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreSign {
    /// `bias - ||R||_1`: nearer candidates score higher.
    #[default]
    Distance,
    /// `bias + ||R||_1`, the formula as literally printed.
    Literal,
}

impl ScoreSign {
    /// Derivative of the raw score with respect to `||R||_1`.
    #[inline]
    pub fn factor(self) -> f64 {
        match self {
            ScoreSign::Distance => -1.0,
            ScoreSign::Literal => 1.0,
        }
    }
}

/// Gradient routing used by [`backward`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackwardMode {
    /// Exact chain rule, including `1 - H^2` and every memorization path.
    #[default]
    Reference,
    /// Accelerator dataflow: `dH/de = (H^B)^T` (activation derivative
    /// dropped), vertex gradients through the cached per-vertex `G`, and the
    /// relation gradient taken from the query path by reusing the subject
    /// gradient.
    HardwareFaithful,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Original embedding width.
    pub d: usize,
    /// Hyperspace dimension.
    pub dim: usize,
    pub seed: u64,
    pub mode: BackwardMode,
    pub score_sign: ScoreSign,
    pub activation: Activation,
    pub train_bias: bool,
    /// Half-width of the uniform embedding initialization.
    pub init_scale: f64,
}

impl ModelConfig {
    pub fn new(d: usize, dim: usize, seed: u64) -> Self {
        Self {
            d,
            dim,
            seed,
            mode: BackwardMode::Reference,
            score_sign: ScoreSign::Distance,
            activation: Activation::Tanh,
            train_bias: true,
            init_scale: 0.1,
        }
    }

    /// d=128, D=256, TransE score.
    pub fn fb15k_237_preset(seed: u64) -> Self {
        Self::new(128, 256, seed)
    }
}

/// Trainable embeddings plus everything derived from them.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub config: ModelConfig,
    pub e_v: Matrix,
    pub e_r: Matrix,
    pub bias: f64,
    base: BaseMatrix,
    h_v: Matrix,
    h_r: Matrix,
    m_v: Matrix,
    grad_cache: Matrix,
    encoded: bool,
    memorized: bool,
}

impl ModelState {
    /// Seeded initialization: embeddings uniform in `[-init_scale, init_scale]`.
    pub fn init(config: ModelConfig, num_entities: usize, num_relations: usize) -> Result<Self> {
        if !(config.init_scale.is_finite() && config.init_scale >= 0.0) {
            return Err(arg("init_scale must be finite and nonnegative"));
        }
        let base = BaseMatrix::new(config.d, config.dim, config.seed)?;
        let mut rng = stream(config.seed, Stream::Init);
        let s = config.init_scale;
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| if s > 0.0 { rng.random_range(-s..=s) } else { 0.0 })
                .collect()
        };
        let e_v = Matrix::from_vec(num_entities, config.d, draw(num_entities * config.d))?;
        let e_r = Matrix::from_vec(num_relations, config.d, draw(num_relations * config.d))?;
        Self::with_base(config, base, e_v, e_r, 0.0)
    }

    pub fn from_embeddings(config: ModelConfig, e_v: Matrix, e_r: Matrix, bias: f64) -> Result<Self> {
        let base = BaseMatrix::new(config.d, config.dim, config.seed)?;
        Self::with_base(config, base, e_v, e_r, bias)
    }

    /// Uses an explicit base matrix instead of regenerating it from the seed.
    pub fn with_base(
        config: ModelConfig,
        base: BaseMatrix,
        e_v: Matrix,
        e_r: Matrix,
        bias: f64,
    ) -> Result<Self> {
        if e_v.cols() != config.d || e_r.cols() != config.d {
            return Err(Error::Shape(format!(
                "embedding widths {}/{} do not match d={}",
                e_v.cols(),
                e_r.cols(),
                config.d
            )));
        }
        if base.d() != config.d || base.dim() != config.dim {
            return Err(Error::Shape("base matrix does not match config".into()));
        }
        let (nv, nr, dim) = (e_v.rows(), e_r.rows(), config.dim);
        Ok(Self {
            config,
            e_v,
            e_r,
            bias,
            base,
            h_v: Matrix::zeros(nv, dim),
            h_r: Matrix::zeros(nr, dim),
            m_v: Matrix::zeros(nv, dim),
            grad_cache: Matrix::zeros(nv, dim),
            encoded: false,
            memorized: false,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.e_v.rows()
    }

    pub fn num_relations(&self) -> usize {
        self.e_r.rows()
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn base(&self) -> &BaseMatrix {
        &self.base
    }

    /// Re-encodes `H^v` and `H^r` from the current embeddings.
    pub fn encode(&mut self) -> Result<()> {
        self.h_v = encode_with(&self.e_v, &self.base, self.config.activation)?;
        self.h_r = encode_with(&self.e_r, &self.base, self.config.activation)?;
        self.encoded = true;
        self.memorized = false;
        Ok(())
    }

    /// Memorizes every vertex's neighborhood and caches `dM/dH` alongside.
    pub fn memorize(&mut self, kg: &KnowledgeGraph) -> Result<()> {
        let (m, g) = memorize_edge_list(kg, self)?;
        self.m_v = m;
        self.grad_cache = g;
        self.memorized = true;
        Ok(())
    }

    /// Encode then memorize.
    pub fn refresh(&mut self, kg: &KnowledgeGraph) -> Result<()> {
        self.check_graph(kg)?;
        self.encode()?;
        self.memorize(kg)
    }

    /// Marks derived tensors stale after the embeddings changed.
    pub fn invalidate(&mut self) {
        self.encoded = false;
        self.memorized = false;
    }

    pub fn is_encoded(&self) -> bool {
        self.encoded
    }

    pub fn is_memorized(&self) -> bool {
        self.memorized
    }

    pub fn h_v(&self) -> Result<&Matrix> {
        self.require_encoded()?;
        Ok(&self.h_v)
    }

    pub fn h_r(&self) -> Result<&Matrix> {
        self.require_encoded()?;
        Ok(&self.h_r)
    }

    pub fn m_v(&self) -> Result<&Matrix> {
        self.require_memorized()?;
        Ok(&self.m_v)
    }

    /// Cached `dM^v/dH^v`: per vertex, the sum of its edges' relation
    /// hypervectors.
    pub fn grad_cache(&self) -> Result<&Matrix> {
        self.require_memorized()?;
        Ok(&self.grad_cache)
    }

    #[cfg(test)]
    pub(crate) fn set_derived(&mut self, h_v: Matrix, h_r: Matrix, m_v: Matrix, g: Matrix) {
        self.h_v = h_v;
        self.h_r = h_r;
        self.m_v = m_v;
        self.grad_cache = g;
        self.encoded = true;
        self.memorized = true;
    }

    pub(crate) fn require_encoded(&self) -> Result<()> {
        if !self.encoded {
            return Err(Error::Stale("hypervectors are not encoded from the current embeddings".into()));
        }
        Ok(())
    }

    pub(crate) fn require_memorized(&self) -> Result<()> {
        if !self.memorized {
            return Err(Error::Stale("memory hypervectors are not current".into()));
        }
        Ok(())
    }

    pub(crate) fn check_graph(&self, kg: &KnowledgeGraph) -> Result<()> {
        if kg.num_entities() != self.num_entities() || kg.num_relations() != self.num_relations() {
            return Err(arg(format!(
                "model has |V|={}, |R|={} but graph has |V|={}, |R|={}",
                self.num_entities(),
                self.num_relations(),
                kg.num_entities(),
                kg.num_relations()
            )));
        }
        Ok(())
    }
}
