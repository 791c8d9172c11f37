//! Binary checkpoint format.
//!
//! ```text
//! b"KGECKPT\x01"            magic and format version
//! u32 LE                    header length in bytes
//! JSON header
//! f32 LE * entities * dim   entity table, row-major
//! f32 LE * relations * w    relation table, row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Family, ModelParams, TrainConfig};
use crate::error::{KgError, Result};
use crate::graph::KnowledgeGraph;

const MAGIC: &[u8; 8] = b"KGECKPT\x01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub family: Family,
    pub dim: usize,
    pub gamma: f32,
    pub num_entities: usize,
    pub num_relations: usize,
    pub entity_width: usize,
    pub relation_width: usize,
    pub entity_vocab_hash: String,
    pub relation_vocab_hash: String,
    pub config_hash: String,
    pub seed: u64,
    pub toolkit_version: String,
}

impl CheckpointHeader {
    pub fn new(p: &ModelParams, g: &KnowledgeGraph, cfg: &TrainConfig) -> Self {
        CheckpointHeader {
            family: p.family,
            dim: p.dim,
            gamma: p.gamma,
            num_entities: p.num_entities,
            num_relations: p.num_relations,
            entity_width: p.entity_width(),
            relation_width: p.relation_width(),
            entity_vocab_hash: g.entities().fingerprint(),
            relation_vocab_hash: g.relations().fingerprint(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            toolkit_version: crate::VERSION.to_owned(),
        }
    }

    /// Errors unless `g` has exactly the vocabularies the model was trained on.
    pub fn check_vocab(&self, g: &KnowledgeGraph) -> Result<()> {
        for (kind, expected, found) in [
            ("entity", &self.entity_vocab_hash, g.entities().fingerprint()),
            ("relation", &self.relation_vocab_hash, g.relations().fingerprint()),
        ] {
            if *expected != found {
                return Err(KgError::VocabMismatch {
                    kind,
                    expected: expected.clone(),
                    found,
                });
            }
        }
        Ok(())
    }
}

pub fn save_checkpoint(path: &Path, p: &ModelParams, header: &CheckpointHeader) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    let mut buf = Vec::with_capacity(12 + json.len() + 4 * (p.entity.len() + p.relation.len()));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for x in p.entity.iter().chain(&p.relation) {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| KgError::io(path, e))?;
    f.write_all(&buf).map_err(|e| KgError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, ModelParams)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| KgError::io(path, e))?;
    let bad = |m: &str| KgError::Checkpoint(format!("{}: {m}", path.display()));
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body)?;
    header.family.check_dim(header.dim)?;
    if header.entity_width != header.dim || header.relation_width != header.family.relation_width(header.dim) {
        return Err(bad("row widths disagree with family and dim"));
    }
    let ne = header.num_entities * header.entity_width;
    let nr = header.num_relations * header.relation_width;
    let data = &bytes[12 + hlen..];
    if data.len() != 4 * (ne + nr) {
        return Err(bad(&format!(
            "expected {} bytes of parameters, found {}",
            4 * (ne + nr),
            data.len()
        )));
    }
    let mut floats = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    let entity: Vec<f32> = floats.by_ref().take(ne).collect();
    let relation: Vec<f32> = floats.collect();
    let params = ModelParams {
        family: header.family,
        dim: header.dim,
        gamma: header.gamma,
        num_entities: header.num_entities,
        num_relations: header.num_relations,
        entity,
        relation,
    };
    Ok((header, params))
}
