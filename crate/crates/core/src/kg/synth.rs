//! Synthetic graphs: count-matched surrogates of the public benchmarks and
//! small graphs with planted structure for training tests.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use super::{KnowledgeGraph, Triple};
use crate::error::{arg, Result};
use crate::rng::{stream, Stream};

/// Target counts for a surrogate graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSpec {
    pub name: String,
    pub entities: usize,
    pub relations: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    /// Zipf exponent of entity popularity (heads and tails).
    pub entity_skew: f64,
    /// Zipf exponent of relation frequency.
    pub relation_skew: f64,
}

impl SurrogateSpec {
    fn preset(name: &str, counts: [usize; 5], entity_skew: f64) -> Self {
        let [entities, relations, train, valid, test] = counts;
        Self {
            name: name.to_owned(),
            entities,
            relations,
            train,
            valid,
            test,
            entity_skew,
            relation_skew: 1.0,
        }
    }

    pub fn fb15k_237() -> Self {
        Self::preset("FB15K-237", [14541, 237, 272115, 17535, 20466], 0.9)
    }

    pub fn wn18rr() -> Self {
        Self::preset("WN18RR", [40943, 11, 86835, 3034, 3134], 0.6)
    }

    pub fn wn18() -> Self {
        Self::preset("WN18", [40943, 18, 141442, 5000, 5000], 0.6)
    }

    pub fn yago3_10() -> Self {
        Self::preset("YAGO3-10", [123182, 37, 1079040, 5000, 5000], 0.8)
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_uppercase().as_str() {
            "FB15K-237" => Some(Self::fb15k_237()),
            "WN18RR" => Some(Self::wn18rr()),
            "WN18" => Some(Self::wn18()),
            "YAGO3-10" => Some(Self::yago3_10()),
            _ => None,
        }
    }

    /// Generates a graph with exactly these split sizes. Every entity is the
    /// head of at least one training fact; no fact repeats across splits.
    pub fn generate(&self, seed: u64) -> Result<KnowledgeGraph> {
        let nv = self.entities;
        let nr = self.relations;
        let total = self.train + self.valid + self.test;
        if nv < 2 || nr < 1 || self.train < nv {
            return Err(arg("surrogate needs |V| >= 2, |R| >= 1 and |train| >= |V|"));
        }
        if (total as f64) > 0.5 * (nv as f64) * (nv as f64) * (nr as f64) {
            return Err(arg("surrogate graph would be too dense"));
        }
        let mut rng = stream(seed, Stream::Synth);
        let ent_zipf = Zipf::new(nv as f64, self.entity_skew).map_err(|e| arg(e.to_string()))?;
        let rel_zipf = Zipf::new(nr as f64, self.relation_skew).map_err(|e| arg(e.to_string()))?;
        let mut head_rank: Vec<u32> = (0..nv as u32).collect();
        let mut tail_rank = head_rank.clone();
        let mut rel_rank: Vec<u32> = (0..nr as u32).collect();
        head_rank.shuffle(&mut rng);
        tail_rank.shuffle(&mut rng);
        rel_rank.shuffle(&mut rng);

        let mut seen: HashSet<Triple> = HashSet::with_capacity(total);
        let mut facts = Vec::with_capacity(total);
        let mut draw = |rng: &mut rand_chacha::ChaCha20Rng, head: Option<u32>| loop {
            let h = head.unwrap_or_else(|| head_rank[ent_zipf.sample(rng) as usize - 1]);
            let t = tail_rank[ent_zipf.sample(rng) as usize - 1];
            let r = rel_rank[rel_zipf.sample(rng) as usize - 1];
            let tr = Triple::new(h, r, t);
            if h != t && seen.insert(tr) {
                return tr;
            }
        };
        let mut order: Vec<u32> = (0..nv as u32).collect();
        order.shuffle(&mut rng);
        for &v in &order {
            facts.push(draw(&mut rng, Some(v)));
        }
        while facts.len() < total {
            facts.push(draw(&mut rng, None));
        }
        // Coverage facts stay in train; the rest are shuffled into splits.
        facts[nv..].shuffle(&mut rng);
        let test = facts.split_off(total - self.test);
        let valid = facts.split_off(self.train);
        KnowledgeGraph::from_ids(nv, nr, facts, valid, test)
    }
}

/// Square lattice with six translation relations (`+x`, `+y`, `+2x`, `+2y`,
/// `+x+y`, `+x-y`). Every relation is an exact translation, so held-out
/// edges are predictable from the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub side: usize,
    /// Fraction of facts held out for each of valid and test.
    pub holdout: f64,
}

impl LatticeSpec {
    pub const STEPS: [(i64, i64); 6] = [(1, 0), (0, 1), (2, 0), (0, 2), (1, 1), (1, -1)];

    pub fn generate(&self, seed: u64) -> Result<KnowledgeGraph> {
        let n = self.side as i64;
        if n < 2 || !(0.0..0.5).contains(&self.holdout) {
            return Err(arg("invalid lattice parameters"));
        }
        let mut facts = Vec::new();
        for y in 0..n {
            for x in 0..n {
                for (r, (dx, dy)) in Self::STEPS.iter().enumerate() {
                    let (a, b) = (x + dx, y + dy);
                    if (0..n).contains(&a) && (0..n).contains(&b) {
                        facts.push(Triple::new((x + n * y) as u32, r as u32, (a + n * b) as u32));
                    }
                }
            }
        }
        facts.shuffle(&mut stream(seed, Stream::Synth));
        let n_hold = (facts.len() as f64 * self.holdout).round() as usize;
        let test = facts.split_off(facts.len() - n_hold);
        let valid = facts.split_off(facts.len() - n_hold);
        KnowledgeGraph::from_ids(self.side * self.side, Self::STEPS.len(), facts, valid, test)
    }
}

/// The 2x2x2 grid: vertex `x + 2y + 4z`, relation `k` steps along axis `k`.
/// Twelve facts, all in train; every relation is an exact translation.
pub fn cube() -> KnowledgeGraph {
    let mut train = Vec::new();
    for v in 0..8u32 {
        for k in 0..3 {
            if v & (1 << k) == 0 {
                train.push(Triple::new(v, k, v | (1 << k)));
            }
        }
    }
    KnowledgeGraph::from_ids(8, 3, train, vec![], vec![]).expect("cube is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surrogate_counts_are_exact() {
        let spec = SurrogateSpec {
            name: "small".into(),
            entities: 300,
            relations: 7,
            train: 2000,
            valid: 150,
            test: 170,
            entity_skew: 0.9,
            relation_skew: 1.0,
        };
        let kg = spec.generate(11).unwrap();
        assert_eq!(kg.num_entities(), 300);
        assert_eq!(kg.num_relations(), 7);
        assert_eq!((kg.train().len(), kg.valid().len(), kg.test().len()), (2000, 150, 170));
        assert!((0..300).all(|v| kg.neighbors().degree(v) >= 1));
        assert_eq!(spec.generate(11).unwrap(), kg);
    }
}
