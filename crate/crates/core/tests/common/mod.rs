#![allow(dead_code)]

pub mod fd;

use hdreason::eval::reconstruct_neighbors;
use hdreason::hdc::Metric;
use hdreason::kg::{KnowledgeGraph, Triple};
use hdreason::matrix::Matrix;
use hdreason::model::{multi_hot_targets, BackwardMode, ModelConfig, ModelState, QueryBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random multigraph-free triples, `facts` of them at most.
pub fn random_graph(seed: u64, nv: usize, nr: usize, facts: usize) -> KnowledgeGraph {
    let mut r = rng(seed);
    let mut seen = std::collections::HashSet::new();
    let mut train = Vec::new();
    for _ in 0..facts {
        let t = Triple::new(
            r.random_range(0..nv as u32),
            r.random_range(0..nr as u32),
            r.random_range(0..nv as u32),
        );
        if seen.insert(t) {
            train.push(t);
        }
    }
    KnowledgeGraph::from_ids(nv, nr, train, vec![], vec![]).unwrap()
}

/// Random graph where every vertex has at most `max_degree` out-edges and
/// no self-loops.
pub fn bounded_degree_graph(seed: u64, nv: usize, nr: usize, max_degree: usize) -> KnowledgeGraph {
    let mut r = rng(seed);
    let mut train = Vec::new();
    for i in 0..nv as u32 {
        let deg = r.random_range(1..=max_degree);
        let mut targets = std::collections::HashSet::new();
        while targets.len() < deg {
            let j = r.random_range(0..nv as u32);
            if j != i {
                targets.insert(j);
            }
        }
        let mut targets: Vec<u32> = targets.into_iter().collect();
        targets.sort_unstable();
        for j in targets {
            train.push(Triple::new(i, r.random_range(0..nr as u32), j));
        }
    }
    KnowledgeGraph::from_ids(nv, nr, train, vec![], vec![]).unwrap()
}

pub fn fresh_state(kg: &KnowledgeGraph, d: usize, dim: usize, seed: u64, init_scale: f64) -> ModelState {
    let mut cfg = ModelConfig::new(d, dim, seed);
    cfg.init_scale = init_scale;
    let mut st = ModelState::init(cfg, kg.num_entities(), kg.num_relations()).unwrap();
    st.refresh(kg).unwrap();
    st
}

pub struct Batch {
    pub kg: KnowledgeGraph,
    pub state: ModelState,
    pub q: QueryBatch,
    pub y: Matrix,
}

pub fn batch(seed: u64, nv: usize, mode: BackwardMode) -> Batch {
    let kg = random_graph(seed, nv, 3, 3 * nv).add_reciprocal().unwrap();
    let mut state = fresh_state(&kg, 6, 48, seed, 0.3);
    state.config.mode = mode;
    let mut r = rng(seed ^ 0xabc);
    let b = 5;
    let subjects = (0..b).map(|_| r.random_range(0..nv as u32)).collect();
    let relations = (0..b).map(|_| r.random_range(0..kg.num_relations() as u32)).collect();
    let pos: Vec<Vec<u32>> = (0..b).map(|_| vec![r.random_range(0..nv as u32)]).collect();
    let pos: Vec<&[u32]> = pos.iter().map(Vec::as_slice).collect();
    let y = multi_hot_targets(&pos, nv, 0.1).unwrap();
    Batch { kg, state, q: QueryBatch::new(subjects, relations), y }
}

/// Fraction of true `(j, r)` neighbors that score above the median score of
/// the non-neighbors under the same relation, and the fraction of
/// `(i, r)` groups whose top candidate is a true neighbor.
pub fn reconstruction_quality(seed: u64, dim: usize) -> (f64, f64) {
    let kg = bounded_degree_graph(seed, 50, 3, 5);
    let st = fresh_state(&kg, 16, dim, seed, 0.5);
    let (mut above, mut total, mut top_ok, mut groups) = (0, 0, 0, 0);
    for i in 0..50u32 {
        let edges = kg.neighbors().of(i as usize);
        let mut rels: Vec<u32> = edges.iter().map(|e| e.1).collect();
        rels.sort_unstable();
        rels.dedup();
        for r in rels {
            let ranked = reconstruct_neighbors(i, &st, Some(r), Metric::Cosine).unwrap();
            let is_true = |j: u32| edges.contains(&(j, r));
            let any_neighbor = |j: u32| edges.iter().any(|e| e.0 == j);
            let mut non: Vec<f64> = ranked.iter().filter(|c| !any_neighbor(c.id)).map(|c| c.score).collect();
            non.sort_by(f64::total_cmp);
            let median = non[non.len() / 2];
            for c in ranked.iter().filter(|c| is_true(c.id)) {
                total += 1;
                above += (c.score > median) as usize;
            }
            groups += 1;
            top_ok += is_true(ranked[0].id) as usize;
        }
    }
    (above as f64 / total as f64, top_ok as f64 / groups as f64)
}
