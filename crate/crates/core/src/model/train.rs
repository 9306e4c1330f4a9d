use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{chunked_backward, loss_and_delta, multi_hot_targets, score_batch, ModelState, Optimizer, OptimizerKind, QueryBatch};
use crate::error::{arg, Result};
use crate::kg::KnowledgeGraph;
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub batch_size: usize,
    /// Candidate chunk width `T` for the backward pass.
    pub chunk: usize,
    pub label_smoothing: f64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            batch_size: 128,
            chunk: 32,
            label_smoothing: 0.1,
            optimizer: OptimizerKind::sgd(0.05),
        }
    }
}

/// Wall-clock seconds spent per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub encode: f64,
    pub memorize: f64,
    pub score: f64,
    pub loss: f64,
    pub backward: f64,
    pub update: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean binary cross-entropy over every scored (query, candidate) pair.
    pub loss: f64,
    pub batches: usize,
    pub queries: usize,
    pub times: StageTimes,
}

/// 1-vs-all trainer over the unique `(subject, relation)` pairs of the
/// training split.
#[derive(Debug, Clone)]
pub struct Trainer {
    opts: TrainOptions,
    optimizer: Optimizer,
    queries: Vec<(u32, u32)>,
    positives: Vec<Vec<u32>>,
    rng: ChaCha20Rng,
    epoch: usize,
}

impl Trainer {
    pub fn new(kg: &KnowledgeGraph, opts: TrainOptions, seed: u64) -> Result<Self> {
        if !kg.is_augmented() {
            return Err(arg("training expects a graph with reciprocal relations"));
        }
        if opts.batch_size == 0 || opts.chunk == 0 {
            return Err(arg("batch size and chunk size must be positive"));
        }
        let mut by_query: BTreeMap<(u32, u32), Vec<u32>> = BTreeMap::new();
        for t in kg.train() {
            by_query.entry((t.head, t.rel)).or_default().push(t.tail);
        }
        let mut queries = Vec::with_capacity(by_query.len());
        let mut positives = Vec::with_capacity(by_query.len());
        for (q, mut tails) in by_query {
            tails.sort_unstable();
            tails.dedup();
            queries.push(q);
            positives.push(tails);
        }
        Ok(Self {
            optimizer: Optimizer::new(opts.optimizer)?,
            opts,
            queries,
            positives,
            rng: stream(seed, Stream::Shuffle),
            epoch: 0,
        })
    }

    pub fn options(&self) -> &TrainOptions {
        &self.opts
    }

    pub fn num_queries(&self) -> usize {
        self.queries.len()
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// One pass over all training queries in a freshly shuffled order.
    pub fn run_epoch(&mut self, kg: &KnowledgeGraph, state: &mut ModelState) -> Result<EpochStats> {
        state.check_graph(kg)?;
        let mut order: Vec<usize> = (0..self.queries.len()).collect();
        order.shuffle(&mut self.rng);
        let mut times = StageTimes::default();
        let mut weighted = 0.0;
        let mut batches = 0;
        for idx in order.chunks(self.opts.batch_size) {
            let t0 = Instant::now();
            state.encode()?;
            let t1 = Instant::now();
            state.memorize(kg)?;
            let t2 = Instant::now();
            let q = QueryBatch::new(
                idx.iter().map(|&i| self.queries[i].0).collect(),
                idx.iter().map(|&i| self.queries[i].1).collect(),
            );
            let signals = score_batch(&q, state)?;
            let t3 = Instant::now();
            let pos: Vec<&[u32]> = idx.iter().map(|&i| self.positives[i].as_slice()).collect();
            let y = multi_hot_targets(&pos, state.num_entities(), self.opts.label_smoothing)?;
            let out = loss_and_delta(&signals, &y)?;
            let t4 = Instant::now();
            let grads = chunked_backward(&out.delta, self.opts.chunk, &signals, kg, state)?;
            let t5 = Instant::now();
            self.optimizer.step(state, &grads)?;
            let t6 = Instant::now();

            if !out.loss.is_finite() {
                return Err(crate::error::Error::Numeric(format!("non-finite loss {}", out.loss)));
            }
            weighted += out.loss * idx.len() as f64;
            batches += 1;
            times.encode += (t1 - t0).as_secs_f64();
            times.memorize += (t2 - t1).as_secs_f64();
            times.score += (t3 - t2).as_secs_f64();
            times.loss += (t4 - t3).as_secs_f64();
            times.backward += (t5 - t4).as_secs_f64();
            times.update += (t6 - t5).as_secs_f64();
        }
        self.epoch += 1;
        let n = self.queries.len();
        Ok(EpochStats {
            epoch: self.epoch,
            loss: if n == 0 { 0.0 } else { weighted / n as f64 },
            batches,
            queries: n,
            times,
        })
    }
}

pub fn train_epoch(kg: &KnowledgeGraph, state: &mut ModelState, trainer: &mut Trainer) -> Result<EpochStats> {
    trainer.run_epoch(kg, state)
}
