//! `.hdck` checkpoint container.
//!
//! ```text
//! magic        4 bytes   "HDCK"
//! version      u32       CHECKPOINT_VERSION
//! prng         16 bytes  ASCII tag of the generator behind the base matrix
//! d, D         u64, u64
//! |V|, |R|     u64, u64
//! seed         u64
//! flags        u32       bit0 hardware-faithful backward, bit1 literal score
//!                        sign, bit2 bias frozen, bit3 identity activation
//! optimizer    u32       0 sgd, 1 momentum, 2 adam
//! config hash  u64
//! init scale   f64
//! epochs       u64
//! e_v          |V|*d f64, row-major
//! e_r          |R|*d f64, row-major
//! bias         f64
//! ```
//! Little-endian throughout. The base matrix is regenerated from the seed.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use super::{BackwardMode, ModelConfig, ModelState, ScoreSign};
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::hdc::Activation;
use crate::matrix::Matrix;
use crate::rng::PRNG_TAG;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HDCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub e_v: Matrix,
    pub e_r: Matrix,
    pub bias: f64,
    pub optimizer_id: u32,
    pub config_hash: u64,
    pub epochs: u64,
}

impl Checkpoint {
    pub fn from_state(state: &ModelState, optimizer_id: u32, config_hash: u64, epochs: u64) -> Self {
        Self {
            config: state.config.clone(),
            e_v: state.e_v.clone(),
            e_r: state.e_r.clone(),
            bias: state.bias,
            optimizer_id,
            config_hash,
            epochs,
        }
    }

    pub fn into_state(self) -> Result<ModelState> {
        ModelState::from_embeddings(self.config, self.e_v, self.e_r, self.bias)
    }
}

fn flags(cfg: &ModelConfig) -> u32 {
    (cfg.mode == BackwardMode::HardwareFaithful) as u32
        | ((cfg.score_sign == ScoreSign::Literal) as u32) << 1
        | (!cfg.train_bias as u32) << 2
        | ((cfg.activation == Activation::Identity) as u32) << 3
}

pub fn write_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let cfg = &ck.config;
    let mut w = Writer::new(BufWriter::new(File::create(path)?));
    w.bytes(CHECKPOINT_MAGIC)?;
    w.u32(CHECKPOINT_VERSION)?;
    w.bytes(PRNG_TAG)?;
    w.u64(cfg.d as u64)?;
    w.u64(cfg.dim as u64)?;
    w.u64(ck.e_v.rows() as u64)?;
    w.u64(ck.e_r.rows() as u64)?;
    w.u64(cfg.seed)?;
    w.u32(flags(cfg))?;
    w.u32(ck.optimizer_id)?;
    w.u64(ck.config_hash)?;
    w.f64(cfg.init_scale)?;
    w.u64(ck.epochs)?;
    w.f64s(ck.e_v.as_slice())?;
    w.f64s(ck.e_r.as_slice())?;
    w.f64(ck.bias)?;
    w.finish()?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let mut r = Reader::new(BufReader::new(File::open(path)?), "hdck checkpoint");
    if &r.exact::<4>()? != CHECKPOINT_MAGIC {
        return Err(Error::DatasetFormat("not an HDCK checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            what: "hdck checkpoint",
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    if &r.exact::<16>()? != PRNG_TAG {
        return Err(Error::DatasetFormat("checkpoint was written with a different PRNG".into()));
    }
    let d = r.u64()? as usize;
    let dim = r.u64()? as usize;
    let nv = r.u64()? as usize;
    let nr = r.u64()? as usize;
    let seed = r.u64()?;
    let fl = r.u32()?;
    let optimizer_id = r.u32()?;
    let config_hash = r.u64()?;
    let init_scale = r.f64()?;
    let epochs = r.u64()?;
    let e_v = Matrix::from_vec(nv, d, r.f64s(nv * d)?)?;
    let e_r = Matrix::from_vec(nr, d, r.f64s(nr * d)?)?;
    let bias = r.f64()?;
    r.expect_end()?;
    let config = ModelConfig {
        d,
        dim,
        seed,
        mode: if fl & 1 != 0 {
            BackwardMode::HardwareFaithful
        } else {
            BackwardMode::Reference
        },
        score_sign: if fl & 2 != 0 { ScoreSign::Literal } else { ScoreSign::Distance },
        activation: if fl & 8 != 0 {
            Activation::Identity
        } else {
            Activation::Tanh
        },
        train_bias: fl & 4 == 0,
        init_scale,
    };
    Ok(Checkpoint {
        config,
        e_v,
        e_r,
        bias,
        optimizer_id,
        config_hash,
        epochs,
    })
}
