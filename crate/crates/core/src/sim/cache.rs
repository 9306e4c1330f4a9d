//! On-chip hypervector cache with LRU, LFU and random replacement.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    Lru,
    Lfu,
    Random,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Lru, Policy::Lfu, Policy::Random];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Lru => "lru",
            Policy::Lfu => "lfu",
            Policy::Random => "random",
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheConfig {
    /// Number of hypervector-sized slots.
    pub capacity: usize,
    pub policy: Policy,
    /// Seed of the random-policy stream.
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Hit,
    Miss { evicted: Option<u32> },
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    slot: usize,
    last_use: u64,
    freq: u64,
}

#[derive(Debug, Clone)]
pub struct CacheState {
    config: CacheConfig,
    resident: HashMap<u32, Entry>,
    slots: Vec<u32>,
    /// Eviction order for LRU/LFU: the first element is the next victim.
    order: BTreeSet<(u64, u64, u32)>,
    /// Access counts per id, kept across evictions.
    counts: HashMap<u32, u64>,
    clock: u64,
    rng: ChaCha20Rng,
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
}

impl CacheState {
    pub fn new(config: CacheConfig) -> Result<Self> {
        if config.capacity == 0 {
            return Err(arg("cache capacity must be at least 1"));
        }
        Ok(Self {
            config,
            resident: HashMap::new(),
            slots: Vec::new(),
            order: BTreeSet::new(),
            counts: HashMap::new(),
            clock: 0,
            rng: stream(config.seed, Stream::RandomPolicy),
            hits: 0,
            misses: 0,
            evictions: 0,
        })
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.resident.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resident.is_empty()
    }

    pub fn contains(&self, v: u32) -> bool {
        self.resident.contains_key(&v)
    }

    pub fn accesses(&self) -> u64 {
        self.hits + self.misses
    }

    pub fn hit_rate(&self) -> f64 {
        match self.accesses() {
            0 => 0.0,
            n => self.hits as f64 / n as f64,
        }
    }

    fn key(&self, v: u32, e: &Entry) -> (u64, u64, u32) {
        match self.config.policy {
            Policy::Lfu => (e.freq, e.last_use, v),
            _ => (0, e.last_use, v),
        }
    }

    pub fn access(&mut self, v: u32) -> Access {
        self.clock += 1;
        let clock = self.clock;
        let track = self.config.policy != Policy::Random;
        let freq = {
            let c = self.counts.entry(v).or_insert(0);
            *c += 1;
            *c
        };
        if let Some(mut e) = self.resident.get(&v).copied() {
            if track {
                self.order.remove(&self.key(v, &e));
            }
            e.last_use = clock;
            e.freq = freq;
            if track {
                self.order.insert(self.key(v, &e));
            }
            self.resident.insert(v, e);
            self.hits += 1;
            return Access::Hit;
        }

        self.misses += 1;
        let mut evicted = None;
        let slot = if self.slots.len() < self.config.capacity {
            self.slots.push(v);
            self.slots.len() - 1
        } else {
            let victim = match self.config.policy {
                Policy::Random => self.slots[self.rng.random_range(0..self.slots.len())],
                _ => self.order.pop_first().expect("full cache has an order").2,
            };
            let gone = self.resident.remove(&victim).expect("victim is resident");
            self.slots[gone.slot] = v;
            self.evictions += 1;
            evicted = Some(victim);
            gone.slot
        };
        let e = Entry { slot, last_use: clock, freq };
        if track {
            self.order.insert(self.key(v, &e));
        }
        self.resident.insert(v, e);
        Access::Miss { evicted }
    }
}

pub fn cache_access(state: &mut CacheState, v: u32) -> Access {
    state.access(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cache(capacity: usize, policy: Policy) -> CacheState {
        CacheState::new(CacheConfig { capacity, policy, seed: 1 }).unwrap()
    }

    #[test]
    fn lru_hand_trace() {
        let mut c = cache(2, Policy::Lru);
        let got: Vec<Access> = [0, 1, 0, 2].iter().map(|&v| c.access(v)).collect();
        assert_eq!(
            got,
            vec![
                Access::Miss { evicted: None },
                Access::Miss { evicted: None },
                Access::Hit,
                Access::Miss { evicted: Some(1) },
            ]
        );
    }

    #[test]
    fn lfu_prefers_keeping_frequent() {
        let mut c = cache(2, Policy::Lfu);
        for v in [0, 0, 0, 1, 2] {
            c.access(v);
        }
        assert!(c.contains(0) && c.contains(2) && !c.contains(1));
    }

    #[test]
    fn thrash_and_cold_misses() {
        for p in Policy::ALL {
            let mut c = cache(1, p);
            for v in [0, 1, 0, 1] {
                assert!(matches!(c.access(v), Access::Miss { .. }));
            }
            let mut c = cache(3, p);
            for v in [0, 1, 2, 0, 1, 2, 2, 0] {
                c.access(v);
            }
            assert_eq!((c.misses, c.hits, c.evictions), (3, 5, 0));
        }
        assert!(CacheState::new(CacheConfig { capacity: 0, policy: Policy::Lru, seed: 0 }).is_err());
    }
}
