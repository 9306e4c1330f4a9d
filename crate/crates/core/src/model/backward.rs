//! Closed-form backpropagation into the original-space embeddings.
//!
//! The candidate columns of `δ` are consumed in chunks of `T` vertices. Each
//! candidate row of `dL/dM` is owned by exactly one chunk and the per-member
//! subject accumulators are advanced in candidate order, so any chunk size
//! yields the same bits as a single pass.

use super::{BackwardMode, ModelState, TrainingSignals};
use crate::error::{arg, shape, Error, Result};
use crate::exec;
use crate::hdc::project_back;
use crate::kg::KnowledgeGraph;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub e_v: Matrix,
    pub e_r: Matrix,
    pub bias: f64,
}

/// Widths of the `⌈n / t⌉` chunks covering `n` columns.
pub fn chunk_widths(n: usize, t: usize) -> Result<Vec<usize>> {
    if t == 0 {
        return Err(arg("chunk size T must be at least 1"));
    }
    Ok((0..n).step_by(t).map(|start| t.min(n - start)).collect())
}

pub fn backward(
    delta: &Matrix,
    signals: &TrainingSignals,
    kg: &KnowledgeGraph,
    state: &ModelState,
) -> Result<Gradients> {
    chunked_backward(delta, state.num_entities().max(1), signals, kg, state)
}

pub fn chunked_backward(
    delta: &Matrix,
    chunk: usize,
    signals: &TrainingSignals,
    kg: &KnowledgeGraph,
    state: &ModelState,
) -> Result<Gradients> {
    let widths = chunk_widths(state.num_entities(), chunk)?;
    state.check_graph(kg)?;
    let signs = signals
        .signs
        .as_ref()
        .ok_or_else(|| Error::Stale("score signals carry no cached sign gradients".into()))?;
    let g_cache = state.grad_cache()?;
    let h_v = state.h_v()?;
    let h_r = state.h_r()?;
    let (b, nv, dim) = (signals.batch_size(), state.num_entities(), state.dim());
    if delta.rows() != b || delta.cols() != nv {
        return Err(shape(format!("delta is {}x{}, expected {b}x{nv}", delta.rows(), delta.cols())));
    }
    if signs.batch_size() != b || signs.candidates() != nv || signs.dim() != dim {
        return Err(shape("sign cache does not match the batch"));
    }
    let factor = signals.score_sign.factor();

    // dL/dM from the score: candidate rows per chunk, subject rows accumulated.
    let mut grad_m = Matrix::zeros(nv, dim);
    let mut subject = Matrix::zeros(b, dim);
    let mut start = 0;
    for &w in &widths {
        let rows = &mut grad_m.as_mut_slice()[start * dim..(start + w) * dim];
        exec::for_each_row(rows, dim, |off, row| {
            let c = start + off;
            for j in 0..b {
                let d = delta.get(j, c);
                if d != 0.0 {
                    signs.accumulate(j, c, -factor * d, row);
                }
            }
        });
        exec::for_each_row(subject.as_mut_slice(), dim, |j, row| {
            for c in start..start + w {
                let d = delta.get(j, c);
                if d != 0.0 {
                    signs.accumulate(j, c, factor * d, row);
                }
            }
        });
        start += w;
    }
    for (j, &s) in signals.subjects.iter().enumerate() {
        let u = subject.row(j).to_vec();
        grad_m.row_mut(s as usize).iter_mut().zip(&u).for_each(|(g, x)| *g += x);
    }
    let bias = exec::map_range(b, |j| delta.row(j).iter().sum::<f64>()).iter().sum();

    // Query path into H^r: the relation operand sees the subject gradient.
    let mut grad_hr = Matrix::zeros(state.num_relations(), dim);
    for (j, &k) in signals.relations.iter().enumerate() {
        let u = subject.row(j);
        grad_hr.row_mut(k as usize).iter_mut().zip(u).for_each(|(g, x)| *g += x);
    }

    let mode = state.config.mode;
    let act = state.config.activation;
    let mut grad_hv = Matrix::zeros(nv, dim);
    let mut start = 0;
    for &w in &widths {
        let rows = &mut grad_hv.as_mut_slice()[start * dim..(start + w) * dim];
        exec::for_each_row(rows, dim, |off, row| {
            let v = start + off;
            match mode {
                BackwardMode::Reference => {
                    for &(i, r) in kg.incoming().of(v) {
                        let gm = grad_m.row(i as usize);
                        let hr = h_r.row(r as usize);
                        for k in 0..dim {
                            row[k] += gm[k] * hr[k];
                        }
                    }
                    for (x, &h) in row.iter_mut().zip(h_v.row(v)) {
                        *x *= act.derivative_from_output(h);
                    }
                }
                BackwardMode::HardwareFaithful => {
                    for ((x, &gm), &g) in row.iter_mut().zip(grad_m.row(v)).zip(g_cache.row(v)) {
                        *x = gm * g;
                    }
                }
            }
        });
        start += w;
    }

    if mode == BackwardMode::Reference {
        exec::for_each_row(grad_hr.as_mut_slice(), dim, |r, row| {
            let csr = kg.relation_csr(r);
            for i in 0..nv {
                let cols = csr.row(i);
                if cols.is_empty() {
                    continue;
                }
                let gm = grad_m.row(i);
                for &j in cols {
                    let hv = h_v.row(j as usize);
                    for k in 0..dim {
                        row[k] += gm[k] * hv[k];
                    }
                }
            }
            for (x, &h) in row.iter_mut().zip(h_r.row(r)) {
                *x *= act.derivative_from_output(h);
            }
        });
    }

    let base = state.base().matrix();
    Ok(Gradients {
        e_v: project_back(&grad_hv, base),
        e_r: project_back(&grad_hr, base),
        bias,
    })
}
