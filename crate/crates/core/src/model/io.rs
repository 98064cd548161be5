//! Versioned, checksummed binary model files.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "NSRF"
//! 4       2     format version, u16 LE
//! 6       2     reserved, zero
//! 8       8     body length n, u64 LE
//! 16      n     body
//! 16+n    32    SHA-256 of body
//!
//! body:
//!   u32 LE  length of the header JSON, then the JSON {"schema": .., "metadata": ..}
//!   u32 LE  tree count
//!   per tree: u32 LE node count, then per node
//!     0x00 leaf:  f64 LE value
//!     0x01 split: u32 LE feature, f64 LE threshold, u32 LE left, u32 LE right
//! ```
//!
//! Floats are stored as raw IEEE-754 bits, so a loaded model predicts
//! bit-identically to the one that was saved.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FeatureSchema, FrozenForestModel, ModelError, Node, TrainingMetadata, Tree};

pub const MAGIC: &[u8; 4] = b"NSRF";
pub const FORMAT_VERSION: u16 = 1;
const PREAMBLE: usize = 16;
const DIGEST: usize = 32;

#[derive(Serialize, Deserialize)]
struct Header {
    schema: FeatureSchema,
    metadata: TrainingMetadata,
}

impl FrozenForestModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header { schema: self.schema.clone(), metadata: self.metadata.clone() })
            .expect("model header serialises");
        let mut body = Vec::new();
        body.extend((header.len() as u32).to_le_bytes());
        body.extend(&header);
        body.extend((self.trees.len() as u32).to_le_bytes());
        for tree in &self.trees {
            body.extend((tree.nodes.len() as u32).to_le_bytes());
            for node in &tree.nodes {
                match *node {
                    Node::Leaf { value } => {
                        body.push(0);
                        body.extend(value.to_le_bytes());
                    }
                    Node::Split { feature, threshold, left, right } => {
                        body.push(1);
                        body.extend(feature.to_le_bytes());
                        body.extend(threshold.to_le_bytes());
                        body.extend(left.to_le_bytes());
                        body.extend(right.to_le_bytes());
                    }
                }
            }
        }

        let mut out = Vec::with_capacity(PREAMBLE + body.len() + DIGEST);
        out.extend(MAGIC);
        out.extend(FORMAT_VERSION.to_le_bytes());
        out.extend(0u16.to_le_bytes());
        out.extend((body.len() as u64).to_le_bytes());
        out.extend(&body);
        out.extend(Sha256::digest(&body));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let corrupt = |m: &str| ModelError::CorruptFile(m.to_string());
        if bytes.len() < PREAMBLE || &bytes[..4] != MAGIC {
            return Err(corrupt("missing NSRF preamble"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version == 0 || version > FORMAT_VERSION {
            return Err(ModelError::VersionMismatch { found: version, supported: FORMAT_VERSION });
        }
        let body_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let expected_len = (PREAMBLE as u64).checked_add(body_len).and_then(|n| n.checked_add(DIGEST as u64));
        if expected_len != Some(bytes.len() as u64) {
            return Err(corrupt("length does not match header (truncated or padded file)"));
        }
        let body = &bytes[PREAMBLE..PREAMBLE + body_len as usize];
        if Sha256::digest(body).as_slice() != &bytes[PREAMBLE + body_len as usize..] {
            return Err(corrupt("checksum mismatch"));
        }

        let mut r = Reader { buf: body, pos: 0 };
        let header_len = r.u32()? as usize;
        let header: Header =
            serde_json::from_slice(r.take(header_len)?).map_err(|e| ModelError::CorruptFile(e.to_string()))?;
        let n_trees = r.u32()? as usize;
        let n_features = header.schema.n_columns();
        let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
        for _ in 0..n_trees {
            let n_nodes = r.u32()? as usize;
            let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
            for _ in 0..n_nodes {
                nodes.push(match r.u8()? {
                    0 => Node::Leaf { value: r.f64()? },
                    1 => Node::Split { feature: r.u32()?, threshold: r.f64()?, left: r.u32()?, right: r.u32()? },
                    tag => return Err(ModelError::CorruptFile(format!("unknown node tag {tag}"))),
                });
            }
            let tree = Tree { nodes };
            if !tree.is_well_formed(n_features) {
                return Err(corrupt("malformed tree"));
            }
            trees.push(tree);
        }
        if r.pos != body.len() || trees.is_empty() {
            return Err(corrupt("unexpected body layout"));
        }
        Ok(FrozenForestModel::from_parts(header.schema, trees, header.metadata))
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| ModelError::CorruptFile("body ends early".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Writes the model atomically (temp file then rename).
pub fn save_model(path: &Path, model: &FrozenForestModel) -> Result<(), ModelError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&model.to_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<FrozenForestModel, ModelError> {
    FrozenForestModel::from_bytes(&fs::read(path)?)
}
