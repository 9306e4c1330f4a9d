use super::{ModelState, ScoreSign};
use crate::error::{arg, Result};
use crate::exec;
use crate::matrix::Matrix;

/// `|B|` `(subject, relation)` queries, optionally with one labelled object each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryBatch {
    pub subjects: Vec<u32>,
    pub relations: Vec<u32>,
    pub targets: Option<Vec<u32>>,
}

impl QueryBatch {
    pub fn new(subjects: Vec<u32>, relations: Vec<u32>) -> Self {
        Self {
            subjects,
            relations,
            targets: None,
        }
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn validate(&self, num_entities: usize, num_relations: usize) -> Result<()> {
        if self.subjects.is_empty() {
            return Err(arg("query batch is empty"));
        }
        if self.subjects.len() != self.relations.len() {
            return Err(arg("subjects and relations differ in length"));
        }
        if let Some(&s) = self.subjects.iter().find(|&&s| s as usize >= num_entities) {
            return Err(arg(format!("subject {s} out of range (|V|={num_entities})")));
        }
        if let Some(&r) = self.relations.iter().find(|&&r| r as usize >= num_relations) {
            return Err(arg(format!("relation {r} out of range (|R|={num_relations})")));
        }
        if let Some(t) = &self.targets {
            if t.len() != self.subjects.len() {
                return Err(arg("targets length differs from batch size"));
            }
            if let Some(&x) = t.iter().find(|&&x| x as usize >= num_entities) {
                return Err(arg(format!("target {x} out of range (|V|={num_entities})")));
            }
        }
        Ok(())
    }
}

/// Bit-packed `sign(R)` for every (batch member, candidate, dimension):
/// one plane marks nonzero entries, the other marks negative ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignCache {
    dim: usize,
    words: usize,
    candidates: usize,
    members: Vec<(Vec<u64>, Vec<u64>)>,
}

impl SignCache {
    fn words_for(dim: usize) -> usize {
        dim.div_ceil(64)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn batch_size(&self) -> usize {
        self.members.len()
    }

    pub fn candidates(&self) -> usize {
        self.candidates
    }

    /// `sign(R[j, c, k])` as -1, 0 or +1.
    #[inline]
    pub fn get(&self, j: usize, c: usize, k: usize) -> i8 {
        let (nz, neg) = &self.members[j];
        let w = c * self.words + k / 64;
        let bit = 1u64 << (k % 64);
        if nz[w] & bit == 0 {
            0
        } else if neg[w] & bit != 0 {
            -1
        } else {
            1
        }
    }

    /// Adds `scale * sign(R[j, c, :])` into `out`.
    #[inline]
    pub fn accumulate(&self, j: usize, c: usize, scale: f64, out: &mut [f64]) {
        let (nz, neg) = &self.members[j];
        let base = c * self.words;
        for (wi, chunk) in out.chunks_mut(64).enumerate() {
            let nzw = nz[base + wi];
            if nzw == 0 {
                continue;
            }
            let negw = neg[base + wi];
            for (b, o) in chunk.iter_mut().enumerate() {
                let bit = 1u64 << b;
                if nzw & bit != 0 {
                    if negw & bit != 0 {
                        *o -= scale;
                    } else {
                        *o += scale;
                    }
                }
            }
        }
    }
}

/// Forward results for one query batch, including the gradient pieces the
/// score pipeline produces alongside the scores.
#[derive(Debug, Clone)]
pub struct TrainingSignals {
    pub subjects: Vec<u32>,
    pub relations: Vec<u32>,
    pub score_sign: ScoreSign,
    /// `sigmoid(raw_norms)`, `|B| x |V|`.
    pub p: Matrix,
    /// Pre-sigmoid scores `N^p`.
    pub raw_norms: Matrix,
    /// `sign(M[s] + H^r[k] - M[c])`; `dN/dM[s] = dN/dH^r[k] = factor * sign`.
    pub signs: Option<SignCache>,
    /// Per member: `Σ_c dN[j,c]/dM[s_j]`.
    pub subject_grad: Matrix,
    /// Per member: `Σ_c dN[j,c]/dH^r[k_j]`.
    pub relation_grad: Matrix,
}

impl TrainingSignals {
    pub fn batch_size(&self) -> usize {
        self.subjects.len()
    }

    pub fn num_candidates(&self) -> usize {
        self.p.cols()
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct MemberRow {
    raw: Vec<f64>,
    nz: Vec<u64>,
    neg: Vec<u64>,
    subject_grad: Vec<f64>,
    relation_grad: Vec<f64>,
}

/// Scores every vertex as the object of each query and caches the sign
/// pattern of the residual for the backward pass.
pub fn score_batch(q: &QueryBatch, state: &ModelState) -> Result<TrainingSignals> {
    q.validate(state.num_entities(), state.num_relations())?;
    let m_v = state.m_v()?;
    let h_r = state.h_r()?;
    let sign = state.config.score_sign;
    let factor = sign.factor();
    let (nv, dim) = (m_v.rows(), m_v.cols());
    let words = SignCache::words_for(dim);
    let bias = state.bias;

    let rows: Vec<MemberRow> = exec::map_range(q.len(), |j| {
        let s = q.subjects[j] as usize;
        let k = q.relations[j] as usize;
        let query: Vec<f64> = m_v.row(s).iter().zip(h_r.row(k)).map(|(a, b)| a + b).collect();
        let mut out = MemberRow {
            raw: vec![0.0; nv],
            nz: vec![0; nv * words],
            neg: vec![0; nv * words],
            subject_grad: vec![0.0; dim],
            relation_grad: vec![0.0; dim],
        };
        for c in 0..nv {
            let cand = m_v.row(c);
            let mut norm = 0.0;
            for kk in 0..dim {
                let r = query[kk] - cand[kk];
                norm += r.abs();
                if r != 0.0 {
                    let w = c * words + kk / 64;
                    let bit = 1u64 << (kk % 64);
                    out.nz[w] |= bit;
                    // dR/dM[s] = +1 and dR/dH^r[k] = +1.
                    let g = if r < 0.0 {
                        out.neg[w] |= bit;
                        -factor
                    } else {
                        factor
                    };
                    out.subject_grad[kk] += g;
                    out.relation_grad[kk] += g;
                }
            }
            out.raw[c] = bias + factor * norm;
        }
        out
    });

    let b = q.len();
    let mut raw_norms = Matrix::zeros(b, nv);
    let mut subject_grad = Matrix::zeros(b, dim);
    let mut relation_grad = Matrix::zeros(b, dim);
    let mut members = Vec::with_capacity(b);
    for (j, row) in rows.into_iter().enumerate() {
        raw_norms.row_mut(j).copy_from_slice(&row.raw);
        subject_grad.row_mut(j).copy_from_slice(&row.subject_grad);
        relation_grad.row_mut(j).copy_from_slice(&row.relation_grad);
        members.push((row.nz, row.neg));
    }
    let mut p = raw_norms.clone();
    p.map_inplace(sigmoid);
    Ok(TrainingSignals {
        subjects: q.subjects.clone(),
        relations: q.relations.clone(),
        score_sign: sign,
        p,
        raw_norms,
        signs: Some(SignCache {
            dim,
            words,
            candidates: nv,
            members,
        }),
        subject_grad,
        relation_grad,
    })
}

/// Raw scores only (no gradient caches), `|B| x |V|`. Used for ranking.
pub fn score_matrix(
    m_v: &Matrix,
    h_r: &Matrix,
    bias: f64,
    sign: ScoreSign,
    subjects: &[u32],
    relations: &[u32],
) -> Matrix {
    let (nv, dim) = (m_v.rows(), m_v.cols());
    let factor = sign.factor();
    let mut out = Matrix::zeros(subjects.len(), nv);
    exec::for_each_row(out.as_mut_slice(), nv, |j, row| {
        let query: Vec<f64> = m_v
            .row(subjects[j] as usize)
            .iter()
            .zip(h_r.row(relations[j] as usize))
            .map(|(a, b)| a + b)
            .collect();
        for (c, o) in row.iter_mut().enumerate() {
            let cand = m_v.row(c);
            let mut norm = 0.0;
            for kk in 0..dim {
                norm += (query[kk] - cand[kk]).abs();
            }
            *o = bias + factor * norm;
        }
    });
    out
}
