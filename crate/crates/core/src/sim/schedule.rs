//! Degree-bucketed batch scheduling and the encoded-vertex registry.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::kg::KnowledgeGraph;

/// Device-memory addresses of encoded vertex hypervectors. Addresses come
/// from a bump allocator; nothing is ever freed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Registry {
    addresses: HashMap<u32, u64>,
    next: u64,
    slot_bytes: u64,
}

impl Registry {
    pub fn new(slot_bytes: u64) -> Self {
        Self {
            addresses: HashMap::new(),
            next: 0,
            slot_bytes,
        }
    }

    pub fn address(&self, v: u32) -> Option<u64> {
        self.addresses.get(&v).copied()
    }

    pub fn contains(&self, v: u32) -> bool {
        self.addresses.contains_key(&v)
    }

    pub fn len(&self) -> usize {
        self.addresses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.addresses.is_empty()
    }

    fn allocate(&mut self, v: u32) -> u64 {
        let slot = self.slot_bytes;
        *self.addresses.entry(v).or_insert_with(|| {
            let a = self.next;
            self.next += slot;
            a
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    /// Row of the embedding table to stream in for encoding.
    Embedding(u32),
    /// Where the already-encoded hypervector lives.
    Address(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleBatch {
    /// Shared degree of the members; the largest one for tail batches.
    pub degree: usize,
    pub tail: bool,
    pub members: Vec<u32>,
    pub encode_needed: Vec<bool>,
    pub payload: Vec<Payload>,
    /// `(neighbor, relation)` pairs each member aggregates.
    pub control: Vec<Vec<(u32, u32)>>,
    /// Neighbors whose own batch comes later, so nothing is stored for them
    /// yet. Their hypervectors are encoded on the fly from the embedding
    /// rows and discarded; they are registered when their batch runs.
    pub pending_encodes: Vec<u32>,
}

impl ScheduleBatch {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn encodes(&self) -> usize {
        self.encode_needed.iter().filter(|&&e| e).count() + self.pending_encodes.len()
    }
}

/// One epoch of batches. Vertices stream in id order into buckets keyed by
/// out-degree; a bucket is emitted once it holds `n_c` vertices. Leftovers
/// flush from the highest degree down, `n_c` at a time.
pub fn schedule_epoch(kg: &KnowledgeGraph, n_c: usize, registry: &mut Registry) -> Result<Vec<ScheduleBatch>> {
    if n_c == 0 {
        return Err(arg("N_c must be positive"));
    }
    let adj = kg.neighbors();
    let mut buckets: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    let mut groups: Vec<(Vec<u32>, bool)> = Vec::new();
    for v in 0..kg.num_entities() {
        let bucket = buckets.entry(adj.degree(v)).or_default();
        bucket.push(v as u32);
        if bucket.len() == n_c {
            groups.push((std::mem::take(bucket), false));
        }
    }
    let rest: Vec<u32> = buckets.into_values().rev().flatten().collect();
    groups.extend(rest.chunks(n_c).map(|c| (c.to_vec(), true)));

    let mut out = Vec::with_capacity(groups.len());
    for (members, tail) in groups {
        let encode_needed: Vec<bool> = members.iter().map(|&v| !registry.contains(v)).collect();
        let payload = members
            .iter()
            .map(|&v| match registry.address(v) {
                Some(a) => Payload::Address(a),
                None => Payload::Embedding(v),
            })
            .collect();
        for &v in &members {
            registry.allocate(v);
        }
        let control: Vec<Vec<(u32, u32)>> = members.iter().map(|&v| adj.of(v as usize).to_vec()).collect();
        let mut pending_encodes: Vec<u32> = control
            .iter()
            .flatten()
            .map(|&(j, _)| j)
            .filter(|&j| !registry.contains(j))
            .collect();
        pending_encodes.sort_unstable();
        pending_encodes.dedup();
        out.push(ScheduleBatch {
            degree: members.iter().map(|&v| adj.degree(v as usize)).max().unwrap_or(0),
            tail,
            members,
            encode_needed,
            payload,
            control,
            pending_encodes,
        });
    }
    Ok(out)
}

/// Writes a schedule as JSON lines, one batch per line.
pub fn write_trace(batches: &[ScheduleBatch], mut w: impl Write) -> Result<()> {
    for b in batches {
        serde_json::to_writer(&mut w, b)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(r: impl BufRead) -> Result<Vec<ScheduleBatch>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
