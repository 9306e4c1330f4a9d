//! `.hdkg` binary container.
//!
//! ```text
//! magic    4 bytes  "HDKG"
//! version  u32      CACHE_VERSION
//! flags    u32      bit 0: reciprocal relations present
//! base_rel u64      relation count before augmentation
//! entities u64 count, then (u32 len, UTF-8 bytes) each
//! relations       same layout
//! train/valid/test: u64 count, then count x (head u32, rel u32, tail u32)
//! csr      for each relation: row_ptr (u64 len, u32s), cols (u64 len, u32s)
//! ```
//! All integers little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use super::{Csr, KnowledgeGraph, Triple, Vocab};
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 4] = b"HDKG";
pub const CACHE_VERSION: u32 = 1;

pub fn write_cache(kg: &KnowledgeGraph, path: impl AsRef<Path>) -> Result<()> {
    let mut w = Writer::new(BufWriter::new(File::create(path)?));
    w.bytes(CACHE_MAGIC)?;
    w.u32(CACHE_VERSION)?;
    w.u32(kg.is_augmented() as u32)?;
    w.u64(kg.base_relations() as u64)?;
    for vocab in [kg.entities(), kg.relations()] {
        w.u64(vocab.len() as u64)?;
        for n in vocab.names() {
            w.str(n)?;
        }
    }
    for split in [kg.train(), kg.valid(), kg.test()] {
        let flat: Vec<u32> = split.iter().flat_map(|t| [t.head, t.rel, t.tail]).collect();
        w.u32s(&flat)?;
    }
    for csr in kg.csrs() {
        w.u32s(&csr.row_ptr)?;
        w.u32s(&csr.cols)?;
    }
    w.finish()?;
    Ok(())
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<KnowledgeGraph> {
    let mut r = Reader::new(BufReader::new(File::open(path)?), "hdkg cache");
    if &r.exact::<4>()? != CACHE_MAGIC {
        return Err(Error::DatasetFormat("not an HDKG cache (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CACHE_VERSION {
        return Err(Error::Version {
            what: "hdkg cache",
            found: version,
            expected: CACHE_VERSION,
        });
    }
    let augmented = r.u32()? & 1 == 1;
    let base_relations = r.u64()? as usize;
    let mut vocabs = Vec::with_capacity(2);
    for _ in 0..2 {
        let n = r.u64()? as usize;
        let names = (0..n).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        vocabs.push(Vocab::from_names(names)?);
    }
    let relations = vocabs.pop().unwrap();
    let entities = vocabs.pop().unwrap();
    let mut splits: [Vec<Triple>; 3] = Default::default();
    for split in splits.iter_mut() {
        let flat = r.u32s()?;
        if flat.len() % 3 != 0 {
            return Err(Error::DatasetFormat("hdkg cache: ragged triple array".into()));
        }
        *split = flat
            .chunks_exact(3)
            .map(|c| Triple::new(c[0], c[1], c[2]))
            .collect();
    }
    let mut csr = Vec::with_capacity(relations.len());
    for _ in 0..relations.len() {
        let row_ptr = r.u32s()?;
        let cols = r.u32s()?;
        csr.push(Csr { row_ptr, cols });
    }
    r.expect_end()?;
    KnowledgeGraph::from_cached(entities, relations, splits, base_relations, augmented, csr)
}
