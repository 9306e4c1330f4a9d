//! Knowledge-graph ingestion: vocabularies, triple splits, per-relation CSR
//! adjacency and the merged neighbor lists that memorization walks.

mod cache;
pub mod synth;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cache::{read_cache, write_cache, CACHE_MAGIC, CACHE_VERSION};

/// A fact `(head, rel, tail)` over dense integer ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: u32,
    pub rel: u32,
    pub tail: u32,
}

impl Triple {
    pub fn new(head: u32, rel: u32, tail: u32) -> Self {
        Self { head, rel, tail }
    }
}

/// Bidirectional string <-> dense id map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i as u32).is_some() {
                return Err(Error::DatasetFormat(format!("duplicate vocabulary entry {n:?}")));
            }
        }
        Ok(Self { names, index })
    }

    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Compressed sparse rows over `|V| x |V|` for a single relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Csr {
    pub row_ptr: Vec<u32>,
    pub cols: Vec<u32>,
}

impl Csr {
    pub fn row(&self, i: usize) -> &[u32] {
        &self.cols[self.row_ptr[i] as usize..self.row_ptr[i + 1] as usize]
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }
}

/// Per-vertex `(neighbor, relation)` lists in CSR layout.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Adjacency {
    row_ptr: Vec<u32>,
    entries: Vec<(u32, u32)>,
}

impl Adjacency {
    /// Groups `(row, neighbor, relation)` edges by row, keeping input order
    /// within each row.
    fn build(num_rows: usize, edges: impl Iterator<Item = (u32, u32, u32)> + Clone) -> Self {
        let mut row_ptr = vec![0u32; num_rows + 1];
        for (r, _, _) in edges.clone() {
            row_ptr[r as usize + 1] += 1;
        }
        for i in 0..num_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut fill = row_ptr.clone();
        let mut entries = vec![(0u32, 0u32); row_ptr[num_rows] as usize];
        for (r, n, rel) in edges {
            let slot = &mut fill[r as usize];
            entries[*slot as usize] = (n, rel);
            *slot += 1;
        }
        Self { row_ptr, entries }
    }

    pub fn of(&self, i: usize) -> &[(u32, u32)] {
        &self.entries[self.row_ptr[i] as usize..self.row_ptr[i + 1] as usize]
    }

    pub fn degree(&self, i: usize) -> usize {
        (self.row_ptr[i + 1] - self.row_ptr[i]) as usize
    }

    pub fn num_rows(&self) -> usize {
        self.row_ptr.len().saturating_sub(1)
    }

    pub fn num_edges(&self) -> usize {
        self.entries.len()
    }
}

/// Headline dataset counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub entities: usize,
    pub relations: usize,
    pub base_relations: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    /// Original (non-reciprocal) training facts per entity.
    pub mean_degree_raw: f64,
    /// Mean merged out-degree of the graph as memorized.
    pub mean_degree_memorized: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    entities: Vocab,
    relations: Vocab,
    train: Vec<Triple>,
    valid: Vec<Triple>,
    test: Vec<Triple>,
    base_relations: usize,
    augmented: bool,
    csr: Vec<Csr>,
    neighbors: Adjacency,
    incoming: Adjacency,
}

impl KnowledgeGraph {
    /// Builds a graph from already-interned splits. Adjacency comes from the
    /// training split only.
    pub fn from_parts(
        entities: Vocab,
        relations: Vocab,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Result<Self> {
        let nr = relations.len();
        Self::assemble(entities, relations, train, valid, test, nr, false)
    }

    /// Builds a graph over `e0..` / `r0..` placeholder names.
    pub fn from_ids(
        num_entities: usize,
        num_relations: usize,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Result<Self> {
        let entities = Vocab::from_names((0..num_entities).map(|i| format!("e{i}")).collect())?;
        let relations = Vocab::from_names((0..num_relations).map(|i| format!("r{i}")).collect())?;
        Self::from_parts(entities, relations, train, valid, test)
    }

    fn assemble(
        entities: Vocab,
        relations: Vocab,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
        base_relations: usize,
        augmented: bool,
    ) -> Result<Self> {
        let nv = entities.len();
        let nr = relations.len();
        check_ranges(nv, nr, [&train, &valid, &test])?;
        let csr = build_relation_csr(nv, nr, &train);
        let neighbors = Adjacency::build(nv, train.iter().map(|t| (t.head, t.tail, t.rel)));
        let incoming = Adjacency::build(nv, train.iter().map(|t| (t.tail, t.head, t.rel)));
        Ok(Self {
            entities,
            relations,
            train,
            valid,
            test,
            base_relations,
            augmented,
            csr,
            neighbors,
            incoming,
        })
    }

    pub(crate) fn from_cached(
        entities: Vocab,
        relations: Vocab,
        splits: [Vec<Triple>; 3],
        base_relations: usize,
        augmented: bool,
        csr: Vec<Csr>,
    ) -> Result<Self> {
        let nv = entities.len();
        let [train, valid, test] = splits;
        check_ranges(nv, relations.len(), [&train, &valid, &test])?;
        if csr.len() != relations.len() || csr.iter().any(|c| c.row_ptr.len() != nv + 1) {
            return Err(Error::DatasetFormat("cached CSR does not match vocabulary sizes".into()));
        }
        let neighbors = Adjacency::build(nv, train.iter().map(|t| (t.head, t.tail, t.rel)));
        let incoming = Adjacency::build(nv, train.iter().map(|t| (t.tail, t.head, t.rel)));
        Ok(Self {
            entities,
            relations,
            train,
            valid,
            test,
            base_relations,
            augmented,
            csr,
            neighbors,
            incoming,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// Relation count before reciprocal augmentation.
    pub fn base_relations(&self) -> usize {
        self.base_relations
    }

    pub fn is_augmented(&self) -> bool {
        self.augmented
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn train(&self) -> &[Triple] {
        &self.train
    }

    pub fn valid(&self) -> &[Triple] {
        &self.valid
    }

    pub fn test(&self) -> &[Triple] {
        &self.test
    }

    pub fn split(&self, which: Split) -> &[Triple] {
        match which {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn relation_csr(&self, rel: usize) -> &Csr {
        &self.csr[rel]
    }

    pub fn csrs(&self) -> &[Csr] {
        &self.csr
    }

    /// Out-edges `(neighbor, relation)` of every vertex (training split).
    pub fn neighbors(&self) -> &Adjacency {
        &self.neighbors
    }

    /// In-edges `(source, relation)` of every vertex (training split).
    pub fn incoming(&self) -> &Adjacency {
        &self.incoming
    }

    /// Adds the inverse fact `(t, r + |R|, h)` for every triple in every split.
    pub fn add_reciprocal(&self) -> Result<Self> {
        if self.augmented {
            return Err(Error::Argument("graph already has reciprocal relations".into()));
        }
        let nr = self.relations.len() as u32;
        let mut names = self.relations.names().to_vec();
        for n in self.relations.names() {
            names.push(format!("{n}{INVERSE_SUFFIX}"));
        }
        let relations = Vocab::from_names(names)?;
        let mirror = |split: &[Triple]| -> Vec<Triple> {
            let mut out = split.to_vec();
            out.extend(split.iter().map(|t| Triple::new(t.tail, t.rel + nr, t.head)));
            out
        };
        Self::assemble(
            self.entities.clone(),
            relations,
            mirror(&self.train),
            mirror(&self.valid),
            mirror(&self.test),
            self.base_relations,
            true,
        )
    }

    pub fn degree_histogram(&self) -> DegreeHistogram {
        let mut buckets: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
        for v in 0..self.num_entities() {
            buckets.entry(self.neighbors.degree(v)).or_default().push(v as u32);
        }
        DegreeHistogram { buckets }
    }

    pub fn stats(&self) -> DatasetStats {
        let nv = self.num_entities();
        let base_train = if self.augmented {
            self.train.len() / 2
        } else {
            self.train.len()
        };
        let ratio = |n: usize| if nv == 0 { 0.0 } else { n as f64 / nv as f64 };
        DatasetStats {
            entities: nv,
            relations: self.num_relations(),
            base_relations: self.base_relations,
            train: self.train.len(),
            valid: self.valid.len(),
            test: self.test.len(),
            mean_degree_raw: ratio(base_train),
            mean_degree_memorized: ratio(self.neighbors.num_edges()),
        }
    }

    /// All known `(subject, relation) -> objects` facts across every split.
    pub fn known_objects(&self) -> HashMap<(u32, u32), Vec<u32>> {
        let mut map: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
        for t in self.train.iter().chain(&self.valid).chain(&self.test) {
            map.entry((t.head, t.rel)).or_default().push(t.tail);
        }
        for v in map.values_mut() {
            v.sort_unstable();
            v.dedup();
        }
        map
    }
}

pub const INVERSE_SUFFIX: &str = "_reverse";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

fn check_ranges(nv: usize, nr: usize, splits: [&[Triple]; 3]) -> Result<()> {
    for t in splits.into_iter().flatten() {
        if t.head as usize >= nv || t.tail as usize >= nv || t.rel as usize >= nr {
            return Err(Error::Argument(format!(
                "triple ({}, {}, {}) out of range for |V|={nv}, |R|={nr}",
                t.head, t.rel, t.tail
            )));
        }
    }
    Ok(())
}

fn build_relation_csr(nv: usize, nr: usize, train: &[Triple]) -> Vec<Csr> {
    let mut counts = vec![vec![0u32; nv + 1]; nr];
    for t in train {
        counts[t.rel as usize][t.head as usize + 1] += 1;
    }
    for row_ptr in counts.iter_mut() {
        for i in 0..nv {
            row_ptr[i + 1] += row_ptr[i];
        }
    }
    let mut fill: Vec<Vec<u32>> = counts.clone();
    let mut cols: Vec<Vec<u32>> = counts.iter().map(|rp| vec![0u32; rp[nv] as usize]).collect();
    for t in train {
        let slot = &mut fill[t.rel as usize][t.head as usize];
        cols[t.rel as usize][*slot as usize] = t.tail;
        *slot += 1;
    }
    counts
        .into_iter()
        .zip(cols)
        .map(|(row_ptr, cols)| Csr { row_ptr, cols })
        .collect()
}

/// Vertices grouped by merged out-degree.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DegreeHistogram {
    pub buckets: BTreeMap<usize, Vec<u32>>,
}

impl DegreeHistogram {
    pub fn num_vertices(&self) -> usize {
        self.buckets.values().map(Vec::len).sum()
    }

    pub fn mean_degree(&self) -> f64 {
        let n = self.num_vertices();
        if n == 0 {
            return 0.0;
        }
        let total: usize = self.buckets.iter().map(|(d, vs)| d * vs.len()).sum();
        total as f64 / n as f64
    }

    pub fn max_degree(&self) -> usize {
        self.buckets.keys().next_back().copied().unwrap_or(0)
    }
}

const SPLIT_FILES: [&str; 3] = ["train.txt", "valid.txt", "test.txt"];

/// Loads `train.txt`, `valid.txt` and `test.txt` (TAB-separated surface
/// strings) from `dir`. Ids are assigned in order of first appearance across
/// train, valid, then test.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<KnowledgeGraph> {
    let dir = dir.as_ref();
    let mut entities = Vocab::default();
    let mut relations = Vocab::default();
    let mut splits: Vec<Vec<Triple>> = Vec::with_capacity(3);
    for name in SPLIT_FILES {
        let path = dir.join(name);
        let text = fs::read_to_string(&path).map_err(|e| {
            Error::DatasetFormat(format!("cannot read {}: {e}", path.display()))
        })?;
        let mut triples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    file: path.clone(),
                    line: lineno + 1,
                    msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            let h = entities.intern(fields[0]);
            let r = relations.intern(fields[1]);
            let t = entities.intern(fields[2]);
            triples.push(Triple::new(h, r, t));
        }
        splits.push(triples);
    }
    let test = splits.pop().unwrap_or_default();
    let valid = splits.pop().unwrap_or_default();
    let train = splits.pop().unwrap_or_default();
    KnowledgeGraph::from_parts(entities, relations, train, valid, test)
}

/// Writes the three split files using the graph's surface names.
pub fn write_dataset(kg: &KnowledgeGraph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (name, split) in SPLIT_FILES.iter().zip([kg.train(), kg.valid(), kg.test()]) {
        let mut out = String::new();
        for t in split {
            out.push_str(kg.entities.name(t.head).unwrap_or_default());
            out.push('\t');
            out.push_str(kg.relations.name(t.rel).unwrap_or_default());
            out.push('\t');
            out.push_str(kg.entities.name(t.tail).unwrap_or_default());
            out.push('\n');
        }
        fs::write(dir.join(name), out)?;
    }
    Ok(())
}
