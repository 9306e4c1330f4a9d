//! Precision and dimensionality robustness: fixed-point quantization and
//! entropy-guided dimension dropping.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::eval::ScoreView;
use crate::hdc::{encode_with, BaseMatrix};
use crate::kg::KnowledgeGraph;
use crate::matrix::Matrix;
use crate::model::{memorize_edges, ModelState};
use crate::rng::{stream, Stream};

pub const DEFAULT_ENTROPY_BINS: usize = 32;

/// Signed two's-complement fixed point, `total_bits` wide with `frac_bits`
/// after the binary point. Rounds to nearest (ties to even) and saturates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointSpec {
    pub total_bits: u32,
    pub frac_bits: u32,
}

impl FixedPointSpec {
    pub fn new(total_bits: u32, frac_bits: u32) -> Result<Self> {
        let s = Self { total_bits, frac_bits };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=52).contains(&self.total_bits) {
            return Err(arg(format!("total_bits must be in [2, 52], got {}", self.total_bits)));
        }
        if self.frac_bits >= self.total_bits {
            return Err(arg(format!(
                "frac_bits ({}) must be below total_bits ({})",
                self.frac_bits, self.total_bits
            )));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn min_value(&self) -> f64 {
        -((self.total_bits - 1) as f64).exp2() * self.step()
    }

    pub fn max_value(&self) -> f64 {
        (((self.total_bits - 1) as f64).exp2() - 1.0) * self.step()
    }

    pub fn quantize(&self, x: f64) -> Result<f64> {
        if x.is_nan() {
            return Err(Error::Numeric("cannot quantize NaN".into()));
        }
        let top = ((self.total_bits - 1) as f64).exp2();
        let code = (x / self.step()).round_ties_even().clamp(-top, top - 1.0);
        Ok(code * self.step())
    }
}

/// Fixed point with a per-tensor binary point: `total_bits` wide with
/// `frac_bits` after the point, where `frac_bits` may be negative or reach
/// past the word. Used by the calibrated quantization modes; equivalent to
/// scaling by a power of two, quantizing, and scaling back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaledFixedPoint {
    pub total_bits: u32,
    pub frac_bits: i32,
}

impl ScaledFixedPoint {
    pub fn step(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn max_value(&self) -> f64 {
        (((self.total_bits - 1) as f64).exp2() - 1.0) * self.step()
    }

    pub fn quantize(&self, x: f64) -> Result<f64> {
        if x.is_nan() {
            return Err(Error::Numeric("cannot quantize NaN".into()));
        }
        let top = ((self.total_bits - 1) as f64).exp2();
        Ok((x / self.step()).round_ties_even().clamp(-top, top - 1.0) * self.step())
    }

    fn apply(&self, values: &Matrix) -> Result<Matrix> {
        let data = values.as_slice().iter().map(|&x| self.quantize(x)).collect::<Result<Vec<_>>>()?;
        Matrix::from_vec(values.rows(), values.cols(), data)
    }
}

fn max_abs(values: &Matrix) -> Result<f64> {
    let m = values.as_slice().iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if m.is_nan() || m.is_infinite() {
        return Err(Error::Numeric("cannot calibrate non-finite values".into()));
    }
    Ok(m)
}

/// Finest binary point at which `max |x|` of `values` does not saturate.
pub fn calibrated_spec(values: &Matrix, total_bits: u32) -> Result<ScaledFixedPoint> {
    FixedPointSpec::new(total_bits, 0)?;
    let m = max_abs(values)?;
    let mut frac = total_bits as i32 - 1;
    if m > 0.0 {
        frac -= m.log2().ceil() as i32;
        // the top code is 2^(n-1) - 1 steps, so an exact power of two may not fit
        while (ScaledFixedPoint { total_bits, frac_bits: frac }).max_value() < m {
            frac -= 1;
        }
    }
    Ok(ScaledFixedPoint { total_bits, frac_bits: frac })
}

/// Binary point with the smallest squared error on `values`, searched from
/// the range fit up to `total_bits` extra fraction bits (trading saturated
/// outliers for resolution). Ties keep the wider range.
pub fn mse_spec(values: &Matrix, total_bits: u32) -> Result<ScaledFixedPoint> {
    let fit = calibrated_spec(values, total_bits)?;
    let mut best = (f64::INFINITY, fit);
    for extra in 0..=total_bits as i32 {
        let spec = ScaledFixedPoint { total_bits, frac_bits: fit.frac_bits + extra };
        let mut err = 0.0;
        for &x in values.as_slice() {
            err += (spec.quantize(x)? - x).powi(2);
        }
        if err < best.0 {
            best = (err, spec);
        }
    }
    Ok(best.1)
}

/// How a quantized pass picks its number format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantization {
    /// One format for every tensor.
    Fixed(FixedPointSpec),
    /// Same width everywhere, binary point fitted to each tensor's range.
    PerTensor { total_bits: u32 },
    /// Same width everywhere, binary point chosen per tensor to minimize
    /// squared error.
    PerTensorMse { total_bits: u32 },
}

impl Quantization {
    fn format(&self, values: &Matrix) -> Result<ScaledFixedPoint> {
        match *self {
            Quantization::Fixed(s) => {
                s.validate()?;
                Ok(ScaledFixedPoint { total_bits: s.total_bits, frac_bits: s.frac_bits as i32 })
            }
            Quantization::PerTensor { total_bits } => calibrated_spec(values, total_bits),
            Quantization::PerTensorMse { total_bits } => mse_spec(values, total_bits),
        }
    }

    fn apply(&self, values: &Matrix) -> Result<Matrix> {
        self.format(values)?.apply(values)
    }
}

pub fn quantize_fixed(values: &Matrix, spec: &FixedPointSpec) -> Result<Matrix> {
    spec.validate()?;
    let data = values.as_slice().iter().map(|&x| spec.quantize(x)).collect::<Result<Vec<_>>>()?;
    Matrix::from_vec(values.rows(), values.cols(), data)
}

/// Post-training quantized forward pass. Embeddings, the base matrix, both
/// hypervector tables and the memory are rounded; products are accumulated
/// at full width and rounded when stored. The bias is rounded with the
/// memory's format.
pub fn quantized_view(state: &ModelState, kg: &KnowledgeGraph, q: Quantization) -> Result<ScoreView> {
    state.check_graph(kg)?;
    let act = state.config.activation;
    let base = BaseMatrix::from_matrix(q.apply(state.base().matrix())?, state.base().seed());
    let e_v = q.apply(&state.e_v)?;
    let e_r = q.apply(&state.e_r)?;
    let h_v = q.apply(&encode_with(&e_v, &base, act)?)?;
    let h_r = q.apply(&encode_with(&e_r, &base, act)?)?;
    let (m_v, _) = memorize_edges(kg, &h_v, &h_r)?;
    let bias_spec = q.format(&m_v)?;
    Ok(ScoreView {
        m_v: bias_spec.apply(&m_v)?,
        h_r,
        bias: bias_spec.quantize(state.bias)?,
        sign: state.config.score_sign,
    })
}

/// Shannon entropy in bits of each column's histogram, with `bins` equal
/// bins over that column's `[min, max]`.
pub fn dimension_entropy(m_v: &Matrix, bins: usize) -> Result<Vec<f64>> {
    let n = m_v.rows();
    if n < 2 {
        return Err(arg("entropy needs at least two vertices"));
    }
    if bins == 0 {
        return Err(arg("bin count must be positive"));
    }
    let mut out = Vec::with_capacity(m_v.cols());
    let mut counts = vec![0usize; bins];
    for k in 0..m_v.cols() {
        let col = (0..n).map(|i| m_v.get(i, k));
        let (lo, hi) = col.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::Numeric(format!("non-finite values in dimension {k}")));
        }
        if hi == lo {
            out.push(0.0);
            continue;
        }
        counts.iter_mut().for_each(|c| *c = 0);
        for x in col {
            let b = (((x - lo) / (hi - lo)) * bins as f64) as usize;
            counts[b.min(bins - 1)] += 1;
        }
        let h = counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n as f64;
                -p * p.log2()
            })
            .sum::<f64>();
        out.push(h);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropStrategy {
    #[serde(alias = "entropy")]
    LowEntropy,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionMask {
    pub keep: Vec<bool>,
    pub entropy: Vec<f64>,
}

impl DimensionMask {
    pub fn kept(&self) -> Vec<usize> {
        self.keep.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect()
    }
}

/// Chooses `ceil((1 - fraction) * D)` dimensions to keep. The low-entropy
/// strategy drops the least informative columns of `M_v` (ties: lower index
/// dropped first); the random strategy draws from the drop-random stream.
pub fn drop_dims(m_v: &Matrix, fraction: f64, strategy: DropStrategy, seed: u64) -> Result<DimensionMask> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(arg(format!("drop fraction must be in (0, 1), got {fraction}")));
    }
    let dim = m_v.cols();
    let keep_n = ((1.0 - fraction) * dim as f64).ceil() as usize;
    if keep_n == 0 {
        return Err(arg("no dimension would be kept"));
    }
    let entropy = dimension_entropy(m_v, DEFAULT_ENTROPY_BINS)?;
    let mut order: Vec<usize> = (0..dim).collect();
    match strategy {
        DropStrategy::LowEntropy => order.sort_by(|&a, &b| entropy[a].total_cmp(&entropy[b]).then(a.cmp(&b))),
        DropStrategy::Random => order.shuffle(&mut stream(seed, Stream::DropRandom)),
    }
    let mut keep = vec![false; dim];
    for &k in &order[dim - keep_n..] {
        keep[k] = true;
    }
    Ok(DimensionMask { keep, entropy })
}

pub fn drop_dims_view(view: &ScoreView, fraction: f64, strategy: DropStrategy, seed: u64) -> Result<(ScoreView, DimensionMask)> {
    let mask = drop_dims(&view.m_v, fraction, strategy, seed)?;
    Ok((view.select_dims(&mask.kept())?, mask))
}
