//! Hypervector primitives: the fixed Gaussian base matrix, kernel encoding
//! `tanh(e · H^B)`, binding, bundling and similarity.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{arg, shape, Error, Result};
use crate::exec;
use crate::matrix::Matrix;
use crate::rng::{stream, Stream};

/// Encoded hypervectors, one per row.
pub type Hypervectors = Matrix;

/// Fixed `d x D` projection with i.i.d. N(0, 1) entries. Never trained.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseMatrix {
    seed: u64,
    data: Matrix,
}

impl BaseMatrix {
    pub fn new(d: usize, dim: usize, seed: u64) -> Result<Self> {
        if d == 0 || dim == 0 {
            return Err(arg(format!("base matrix dimensions must be positive (d={d}, D={dim})")));
        }
        let mut rng = stream(seed, Stream::BaseMatrix);
        let data: Vec<f64> = (0..d * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        Ok(Self {
            seed,
            data: Matrix::from_vec(d, dim, data)?,
        })
    }

    /// Wraps an explicit matrix (tests and quantized evaluation).
    pub fn from_matrix(data: Matrix, seed: u64) -> Self {
        Self { seed, data }
    }

    pub fn d(&self) -> usize {
        self.data.rows()
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }
}

pub fn make_base_matrix(d: usize, dim: usize, seed: u64) -> Result<BaseMatrix> {
    BaseMatrix::new(d, dim, seed)
}

/// Nonlinearity applied after projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    /// Linear projection; only used to check gradient routing in tests.
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// `H = tanh(E · H^B)`.
pub fn encode(embeddings: &Matrix, base: &BaseMatrix) -> Result<Hypervectors> {
    encode_with(embeddings, base, Activation::Tanh)
}

pub fn encode_with(embeddings: &Matrix, base: &BaseMatrix, act: Activation) -> Result<Hypervectors> {
    if embeddings.cols() != base.d() {
        return Err(shape(format!(
            "embedding width {} does not match base matrix d={}",
            embeddings.cols(),
            base.d()
        )));
    }
    let mut out = project(embeddings, base.matrix());
    exec::for_each_row(out.as_mut_slice(), base.dim(), |_, row| {
        row.iter_mut().for_each(|x| *x = act.apply(*x));
    });
    Ok(out)
}

/// `E · B` with each output row accumulated over `m` in index order.
pub(crate) fn project(e: &Matrix, b: &Matrix) -> Matrix {
    let (rows, dim) = (e.rows(), b.cols());
    let mut out = Matrix::zeros(rows, dim);
    exec::for_each_row(out.as_mut_slice(), dim, |i, row| {
        for (m, &w) in e.row(i).iter().enumerate() {
            if w != 0.0 {
                axpy(row, w, b.row(m));
            }
        }
    });
    out
}

/// `G · Bᵀ`: maps hyperspace gradients back to the original space.
pub(crate) fn project_back(g: &Matrix, b: &Matrix) -> Matrix {
    let (rows, d) = (g.rows(), b.rows());
    let mut out = Matrix::zeros(rows, d);
    exec::for_each_row(out.as_mut_slice(), d, |i, row| {
        let gi = g.row(i);
        for (m, o) in row.iter_mut().enumerate() {
            *o = dot(gi, b.row(m));
        }
    });
    out
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_same(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(shape(format!("hypervector lengths differ: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

/// Elementwise (Hadamard) product.
pub fn bind(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    check_same(a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| x * y).collect())
}

/// Elementwise sum; the empty bundle of dimension `dim` is the zero vector.
pub fn bundle(vs: &[&[f64]], dim: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; dim];
    for v in vs {
        check_same(&out, v)?;
        out.iter_mut().zip(v.iter()).for_each(|(o, x)| *o += x);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    Cosine,
    NegL1,
    SignHamming,
}

pub fn similarity(a: &[f64], b: &[f64], metric: Metric) -> Result<f64> {
    check_same(a, b)?;
    match metric {
        Metric::Cosine => {
            let na = dot(a, a).sqrt();
            let nb = dot(b, b).sqrt();
            if na == 0.0 || nb == 0.0 {
                return Err(Error::UndefinedSimilarity(
                    "cosine similarity with a zero vector".into(),
                ));
            }
            Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
        }
        Metric::NegL1 => Ok(-a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()),
        Metric::SignHamming => {
            if a.is_empty() {
                return Ok(1.0);
            }
            let same = a.iter().zip(b).filter(|(x, y)| sign(**x) == sign(**y)).count();
            Ok(same as f64 / a.len() as f64)
        }
    }
}

/// `sign` with `sign(0) = 0`.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
