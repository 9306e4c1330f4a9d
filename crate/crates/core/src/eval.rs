//! Link-prediction ranking, metrics, and neighbor reconstruction.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::exec;
use crate::hdc::{similarity, Metric};
use crate::kg::Triple;
use crate::matrix::Matrix;
use crate::model::{score_matrix, ModelState, ScoreSign};

/// Queries scored per call into the score kernel.
const RANK_BATCH: usize = 256;

pub type KnownObjects = HashMap<(u32, u32), Vec<u32>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankMode {
    Raw,
    #[default]
    Filtered,
}

impl std::fmt::Display for RankMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RankMode::Raw => "raw",
            RankMode::Filtered => "filtered",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankRecord {
    pub subject: u32,
    pub relation: u32,
    pub tail: u32,
    pub rank: usize,
    pub filtered: bool,
}

/// What the score function sees: memory hypervectors, relation
/// hypervectors and the bias. Dimension dropping and quantization build
/// modified views without touching the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreView {
    pub m_v: Matrix,
    pub h_r: Matrix,
    pub bias: f64,
    pub sign: ScoreSign,
}

impl ScoreView {
    pub fn from_state(state: &ModelState) -> Result<Self> {
        Ok(Self {
            m_v: state.m_v()?.clone(),
            h_r: state.h_r()?.clone(),
            bias: state.bias,
            sign: state.config.score_sign,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.m_v.rows()
    }

    pub fn num_relations(&self) -> usize {
        self.h_r.rows()
    }

    /// Restricts scoring to the given hypervector dimensions.
    pub fn select_dims(&self, dims: &[usize]) -> Result<Self> {
        if let Some(&bad) = dims.iter().find(|&&k| k >= self.m_v.cols()) {
            return Err(arg(format!("dimension {bad} out of range")));
        }
        Ok(Self {
            m_v: self.m_v.select_columns(dims),
            h_r: self.h_r.select_columns(dims),
            bias: self.bias,
            sign: self.sign,
        })
    }

    pub fn scores(&self, subjects: &[u32], relations: &[u32]) -> Matrix {
        score_matrix(&self.m_v, &self.h_r, self.bias, self.sign, subjects, relations)
    }
}

/// Pessimistic rank of `target` among `scores`, skipping the ids in `skip`
/// (other known answers). `skip` may contain `target`; it is never skipped.
pub fn pessimistic_rank(scores: &[f64], target: usize, skip: &[u32]) -> Result<usize> {
    let st = scores[target];
    if st.is_nan() {
        return Err(Error::Numeric(format!("score of candidate {target} is NaN")));
    }
    let mut worse_or_tied = 0usize;
    for (c, &s) in scores.iter().enumerate() {
        if c != target && s >= st {
            worse_or_tied += 1;
        }
    }
    for &c in skip {
        let c = c as usize;
        if c != target && scores[c] >= st {
            worse_or_tied -= 1;
        }
    }
    Ok(1 + worse_or_tied)
}

pub fn rank_queries(
    triples: &[Triple],
    view: &ScoreView,
    filter: Option<&KnownObjects>,
) -> Result<Vec<RankRecord>> {
    let (nv, nr) = (view.num_entities(), view.num_relations());
    for t in triples {
        if t.head as usize >= nv || t.tail as usize >= nv || t.rel as usize >= nr {
            return Err(arg(format!("query {t:?} out of range")));
        }
    }
    let mut out = Vec::with_capacity(triples.len());
    for chunk in triples.chunks(RANK_BATCH) {
        let subjects: Vec<u32> = chunk.iter().map(|t| t.head).collect();
        let relations: Vec<u32> = chunk.iter().map(|t| t.rel).collect();
        let scores = view.scores(&subjects, &relations);
        let ranks = exec::map_range(chunk.len(), |j| {
            let t = chunk[j];
            let skip = filter
                .and_then(|f| f.get(&(t.head, t.rel)))
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            pessimistic_rank(scores.row(j), t.tail as usize, skip)
        });
        for (t, rank) in chunk.iter().zip(ranks) {
            out.push(RankRecord {
                subject: t.head,
                relation: t.rel,
                tail: t.tail,
                rank: rank?,
                filtered: filter.is_some(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub count: usize,
}

pub fn metrics(records: &[RankRecord]) -> Result<Metrics> {
    if records.is_empty() {
        return Err(arg("metrics of an empty record list"));
    }
    let n = records.len() as f64;
    let hits = |k: usize| records.iter().filter(|r| r.rank <= k).count() as f64 / n;
    // summed per distinct rank so the result does not depend on record order
    let mut per_rank: BTreeMap<usize, usize> = BTreeMap::new();
    for r in records {
        *per_rank.entry(r.rank).or_default() += 1;
    }
    Ok(Metrics {
        mrr: per_rank.iter().map(|(&rank, &c)| c as f64 / rank as f64).sum::<f64>() / n,
        hits1: hits(1),
        hits3: hits(3),
        hits10: hits(10),
        count: records.len(),
    })
}

/// Ranks every triple of `triples` against all entities.
///
/// On a graph with reciprocal relations the split already holds both
/// directions, so the result averages head and tail prediction.
pub fn evaluate(
    triples: &[Triple],
    view: &ScoreView,
    mode: RankMode,
    known: &KnownObjects,
) -> Result<Metrics> {
    let filter = (mode == RankMode::Filtered).then_some(known);
    metrics(&rank_queries(triples, view, filter)?)
}

/// One line of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub split: String,
    pub mode: String,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub seed: u64,
    pub config_hash: String,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str = "split,mode,MRR,H@1,H@3,H@10,seed,config-hash";

    pub fn to_csv(&self) -> String {
        let m = &self.metrics;
        format!(
            "{},{},{},{},{},{},{},{}",
            self.split, self.mode, m.mrr, m.hits1, m.hits3, m.hits10, self.seed, self.config_hash
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: u32,
    pub score: f64,
}

/// Ranks all vertices by how strongly vertex `i`'s memory recalls them.
/// With a relation, candidates are bound with that relation first.
pub fn reconstruct_neighbors(
    i: u32,
    state: &ModelState,
    relation: Option<u32>,
    metric: Metric,
) -> Result<Vec<Candidate>> {
    let m_v = state.m_v()?;
    let h_v = state.h_v()?;
    let h_r = state.h_r()?;
    if i as usize >= m_v.rows() {
        return Err(arg(format!("vertex {i} out of range")));
    }
    if let Some(r) = relation {
        if r as usize >= h_r.rows() {
            return Err(arg(format!("relation {r} out of range")));
        }
    }
    let mem = m_v.row(i as usize);
    let scores = exec::map_range(h_v.rows(), |j| match relation {
        None => similarity(mem, h_v.row(j), metric),
        Some(r) => {
            let bound: Vec<f64> = h_v.row(j).iter().zip(h_r.row(r as usize)).map(|(a, b)| a * b).collect();
            similarity(mem, &bound, metric)
        }
    });
    let mut out = Vec::with_capacity(scores.len());
    for (j, s) in scores.into_iter().enumerate() {
        out.push(Candidate { id: j as u32, score: s? });
    }
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
    Ok(out)
}
