//! Analytic cost model: replays a schedule through the cache and converts
//! operation counts and bytes into time.
//!
//! Times are `ops / (lanes * clock)` for compute and `bytes / bandwidth` for
//! transfers. Two pipelines are modeled with the usual stage recurrence
//! (`done[s][i] = max(done[s-1][i], done[s][i-1]) + t[s][i]`), so fill and
//! drain are included:
//!
//! * memorization, per schedule batch: encode, then aggregate. Aggregation
//!   runs the bind/bundle compute and the neighbor fetch concurrently, so
//!   its stage time is the larger of the two.
//! * training, per chunk of `T` candidate columns: score against the query
//!   batch (compute overlapped with reading the candidates' memory), ship
//!   probabilities to the host and gradients back, then the two dense
//!   products of the backward pass.
//!
//! The single-batch latency is one memorization pass followed by one
//! training pipeline.

use serde::{Deserialize, Serialize};

use super::cache::{CacheConfig, CacheState, Policy};
use super::schedule::{schedule_epoch, Registry, ScheduleBatch};
use crate::error::{arg, Result};
use crate::kg::KnowledgeGraph;

/// Hardware parameters. Throughput constants are estimates derived from
/// board resources, not measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub name: String,
    pub clock_hz: f64,
    /// Device-memory (HBM) bandwidth.
    pub hbm_bytes_per_s: f64,
    /// Host link bandwidth.
    pub host_bytes_per_s: f64,
    pub elem_bytes: u64,
    /// Vertices memorized in parallel.
    pub n_c: usize,
    pub dim: usize,
    pub d: usize,
    pub batch: usize,
    pub chunk: usize,
    pub encode_macs_per_cycle: f64,
    /// Elementwise bind-and-accumulate lanes per memorization engine.
    pub memorize_lanes: f64,
    pub score_lanes: f64,
    pub train_macs_per_cycle: f64,
    /// Default on-chip cache size in hypervector slots.
    pub cache_slots: usize,
}

impl CostConfig {
    /// Alveo U50: 200 MHz, 460 GB/s HBM2, N_c = 16, T = 32.
    pub fn u50() -> Self {
        Self {
            name: "u50".into(),
            clock_hz: 200e6,
            hbm_bytes_per_s: 460e9,
            host_bytes_per_s: 12e9,
            elem_bytes: 4,
            n_c: 16,
            dim: 256,
            d: 96,
            batch: 128,
            chunk: 32,
            encode_macs_per_cycle: 1024.0,
            memorize_lanes: 16.0,
            score_lanes: 2048.0,
            train_macs_per_cycle: 1536.0,
            cache_slots: 4096,
        }
    }

    /// Alveo U280: twice the engines, chunk width and training arrays.
    pub fn u280() -> Self {
        Self {
            name: "u280".into(),
            hbm_bytes_per_s: 460e9,
            n_c: 32,
            chunk: 64,
            encode_macs_per_cycle: 2048.0,
            score_lanes: 4096.0,
            train_macs_per_cycle: 3072.0,
            cache_slots: 8192,
            ..Self::u50()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "u50" => Some(Self::u50()),
            "u280" => Some(Self::u280()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("clock_hz", self.clock_hz),
            ("hbm_bytes_per_s", self.hbm_bytes_per_s),
            ("host_bytes_per_s", self.host_bytes_per_s),
            ("encode_macs_per_cycle", self.encode_macs_per_cycle),
            ("memorize_lanes", self.memorize_lanes),
            ("score_lanes", self.score_lanes),
            ("train_macs_per_cycle", self.train_macs_per_cycle),
        ];
        for (name, v) in rates {
            if !(v.is_finite() && v > 0.0) {
                return Err(arg(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let sizes = [
            ("elem_bytes", self.elem_bytes as usize),
            ("n_c", self.n_c),
            ("dim", self.dim),
            ("d", self.d),
            ("batch", self.batch),
            ("chunk", self.chunk),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(arg(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    fn cycles(&self, ops: f64, lanes: f64) -> f64 {
        ops / lanes / self.clock_hz
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: String,
    pub batches: usize,
    pub encodes: u64,
    /// Stage totals in seconds, without overlap.
    pub encode_s: f64,
    pub memorize_s: f64,
    pub fetch_s: f64,
    pub score_s: f64,
    pub transfer_s: f64,
    pub train_s: f64,
    pub memorization_pass_s: f64,
    pub training_pipeline_s: f64,
    pub bytes_host_device: u64,
    pub bytes_hbm_fetch: u64,
    pub bytes_hbm: u64,
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    pub hit_rate: f64,
    pub latency_ms: f64,
}

/// Two-stage-or-more pipeline completion time.
fn pipeline(stages: &[Vec<f64>]) -> f64 {
    let mut done = vec![0.0f64; stages.len()];
    let items = stages.first().map_or(0, Vec::len);
    for i in 0..items {
        let mut ready = 0.0f64;
        for (s, t) in stages.iter().enumerate() {
            done[s] = ready.max(done[s]) + t[i];
            ready = done[s];
        }
    }
    done.last().copied().unwrap_or(0.0)
}

/// Replays `schedule` through `cache` (which keeps its contents afterwards)
/// and models one training batch over `num_entities` candidates.
pub fn simulate(
    schedule: &[ScheduleBatch],
    num_entities: usize,
    cache: &mut CacheState,
    cost: &CostConfig,
) -> Result<SimReport> {
    cost.validate()?;
    let covered: usize = schedule.iter().map(ScheduleBatch::len).sum();
    if covered != num_entities {
        return Err(arg(format!("schedule covers {covered} vertices, graph has {num_entities}")));
    }
    let (dim, d, e) = (cost.dim as f64, cost.d as f64, cost.elem_bytes);
    let (h0, m0, ev0) = (cache.hits, cache.misses, cache.evictions);

    let mut enc = Vec::with_capacity(schedule.len());
    let mut agg = Vec::with_capacity(schedule.len());
    let (mut encode_s, mut memorize_s, mut fetch_s) = (0.0, 0.0, 0.0);
    let mut encodes = 0u64;
    let mut fetch_bytes = 0u64;
    for b in schedule {
        if b.len() > cost.n_c || b.encode_needed.len() != b.len() || b.control.len() != b.len() {
            return Err(arg("malformed schedule batch for this configuration"));
        }
        let n_enc = b.encodes() as u64;
        encodes += n_enc;
        let misses_before = cache.misses;
        for &(j, _) in b.control.iter().flatten() {
            if b.pending_encodes.binary_search(&j).is_err() {
                cache.access(j);
            }
        }
        let bytes = (cache.misses - misses_before) * cost.dim as u64 * e;
        fetch_bytes += bytes;

        let t_enc = cost.cycles(n_enc as f64 * d * dim, cost.encode_macs_per_cycle);
        let t_mem = b.degree as f64 * (dim / cost.memorize_lanes).ceil() / cost.clock_hz;
        let t_fetch = bytes as f64 / cost.hbm_bytes_per_s;
        encode_s += t_enc;
        memorize_s += t_mem;
        fetch_s += t_fetch;
        enc.push(t_enc);
        agg.push(t_mem.max(t_fetch));
    }
    let memorization_pass_s = pipeline(&[enc, agg]);

    let bsz = cost.batch as f64;
    let n_chunks = num_entities.div_ceil(cost.chunk);
    let (mut score, mut xfer, mut train) = (Vec::new(), Vec::new(), Vec::new());
    let mut transfer_bytes = 0u64;
    for c in 0..n_chunks {
        let w = cost.chunk.min(num_entities - c * cost.chunk) as f64;
        let t_score = cost.cycles(bsz * w * dim, cost.score_lanes);
        let t_read = w * dim * e as f64 / cost.hbm_bytes_per_s;
        let bytes = 2 * cost.batch as u64 * w as u64 * e;
        transfer_bytes += bytes;
        score.push(t_score.max(t_read));
        xfer.push(bytes as f64 / cost.host_bytes_per_s);
        train.push(cost.cycles(bsz * w * dim + w * dim * d, cost.train_macs_per_cycle));
    }
    let (score_s, transfer_s, train_s) = (score.iter().sum(), xfer.iter().sum(), train.iter().sum());
    let training_pipeline_s = pipeline(&[score, xfer, train]);

    let hv_bytes = cost.dim as u64 * e;
    let n_v = num_entities as u64;
    // encoded writes, memory writes, candidate reads during scoring
    let bytes_hbm = fetch_bytes + encodes * hv_bytes + 2 * n_v * hv_bytes;
    let bytes_host_device = encodes * cost.d as u64 * e + transfer_bytes;

    let (hits, misses) = (cache.hits - h0, cache.misses - m0);
    let accesses = hits + misses;
    Ok(SimReport {
        config: cost.name.clone(),
        batches: schedule.len(),
        encodes,
        encode_s,
        memorize_s,
        fetch_s,
        score_s,
        transfer_s,
        train_s,
        memorization_pass_s,
        training_pipeline_s,
        bytes_host_device,
        bytes_hbm_fetch: fetch_bytes,
        bytes_hbm,
        accesses,
        hits,
        misses,
        evictions: cache.evictions - ev0,
        hit_rate: if accesses == 0 { 0.0 } else { hits as f64 / accesses as f64 },
        latency_ms: (memorization_pass_s + training_pipeline_s) * 1e3,
    })
}

/// Replays `warmup` and then `measured` through one fresh cache and reports
/// the second pass.
pub fn replay(
    warmup: &[ScheduleBatch],
    measured: &[ScheduleBatch],
    num_entities: usize,
    cache: CacheConfig,
    cost: &CostConfig,
) -> Result<SimReport> {
    let mut state = CacheState::new(cache)?;
    simulate(warmup, num_entities, &mut state, cost)?;
    simulate(measured, num_entities, &mut state, cost)
}

/// Cold and warm epoch schedules from an empty registry.
pub fn two_epochs(kg: &KnowledgeGraph, cost: &CostConfig) -> Result<(Vec<ScheduleBatch>, Vec<ScheduleBatch>)> {
    cost.validate()?;
    let mut registry = Registry::new(cost.dim as u64 * cost.elem_bytes);
    let cold = schedule_epoch(kg, cost.n_c, &mut registry)?;
    let warm = schedule_epoch(kg, cost.n_c, &mut registry)?;
    Ok((cold, warm))
}

/// Steady-state (second epoch) report for one cache configuration: the first
/// epoch encodes everything and warms the cache.
pub fn simulate_warm(kg: &KnowledgeGraph, cache: CacheConfig, cost: &CostConfig) -> Result<SimReport> {
    let (cold, warm) = two_epochs(kg, cost)?;
    replay(&cold, &warm, kg.num_entities(), cache, cost)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub capacity: usize,
    pub policy: Policy,
    pub hit_rate: f64,
    pub misses: u64,
    /// Neighbor-fetch part of `bytes_hbm`.
    pub bytes_hbm_fetch: u64,
    pub bytes_hbm: u64,
    pub latency_model_ms: f64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "capacity,policy,hit_rate,bytes_hbm,latency_model_ms,misses,bytes_hbm_fetch";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.capacity,
            self.policy,
            self.hit_rate,
            self.bytes_hbm,
            self.latency_model_ms,
            self.misses,
            self.bytes_hbm_fetch
        )
    }
}

/// Steady-state reports for every policy and capacity.
pub fn sweep(
    kg: &KnowledgeGraph,
    capacities: &[usize],
    policies: &[Policy],
    cost: &CostConfig,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let (cold, warm) = two_epochs(kg, cost)?;
    sweep_schedules(&cold, &warm, kg.num_entities(), capacities, policies, cost, seed)
}

/// Sweep over explicit schedules, e.g. a replayed trace.
pub fn sweep_schedules(
    warmup: &[ScheduleBatch],
    measured: &[ScheduleBatch],
    num_entities: usize,
    capacities: &[usize],
    policies: &[Policy],
    cost: &CostConfig,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &policy in policies {
        for &capacity in capacities {
            let r = replay(warmup, measured, num_entities, CacheConfig { capacity, policy, seed }, cost)?;
            rows.push(SweepRow {
                capacity,
                policy,
                hit_rate: r.hit_rate,
                misses: r.misses,
                bytes_hbm_fetch: r.bytes_hbm_fetch,
                bytes_hbm: r.bytes_hbm,
                latency_model_ms: r.latency_ms,
            });
        }
    }
    Ok(rows)
}
