//! Binary parameter files.
//!
//! ```text
//! "B2B1"  u32 version  u32 meta_len  meta (JSON)  u32 n_sections
//! per section: u16 name_len  name  u32 rank  u64 extent × rank  f64 × Π extents
//! ```
//!
//! Integers and floats are little-endian. Reading then writing a file
//! reproduces it byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biaxial::{BiaxialParams, BiaxialShape};
use crate::midi::NUM_ACTIONS;
use crate::neural::{ParamSet, Tensor};
use crate::rl::{MelodyNet, MelodyQ};

pub const MAGIC: &[u8; 4] = b"B2B1";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("{0} trailing bytes after the last section")]
    TrailingBytes(usize),
    #[error("bad metadata: {0}")]
    Metadata(String),
    #[error("section {name}: {reason}")]
    Section { name: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What a checkpoint holds besides tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    /// `"primed"` or `"tuned"`.
    pub kind: String,
    pub note_low: u8,
    pub n_notes: usize,
    pub steps_per_measure: usize,
    pub time_hidden: Vec<usize>,
    pub note_hidden: Vec<usize>,
    pub iterations: usize,
    pub seed: u64,
    /// Snapshot of the run configuration that produced the file.
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: Metadata,
    pub sections: Vec<(String, Tensor)>,
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() < n {
            return Err(CheckpointError::Truncated(what));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.metadata).expect("metadata serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for (name, t) in &self.sections {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { buf: bytes };
        if r.take(4, "magic").map_err(|_| CheckpointError::BadMagic)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let meta_len = r.u32("metadata length")? as usize;
        let metadata: Metadata = serde_json::from_slice(r.take(meta_len, "metadata")?)
            .map_err(|e| CheckpointError::Metadata(e.to_string()))?;
        let count = r.u32("section count")?;
        let mut sections = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let n = r.u16("section name length")? as usize;
            let name = String::from_utf8(r.take(n, "section name")?.to_vec())
                .map_err(|e| CheckpointError::Metadata(e.to_string()))?;
            let rank = r.u32("section rank")?;
            let mut shape = Vec::with_capacity(rank as usize);
            for _ in 0..rank {
                shape.push(r.u64("section extent")? as usize);
            }
            let len = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|&l| l.checked_mul(8).is_some_and(|b| b <= r.buf.len()))
                .ok_or(CheckpointError::Truncated("section values"))?;
            let data: Vec<f64> = r
                .take(len * 8, "section values")?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::from_vec(&shape, data).map_err(|e| CheckpointError::Section {
                name: name.clone(),
                reason: e.to_string(),
            })?;
            sections.push((name, t));
        }
        if !r.buf.is_empty() {
            return Err(CheckpointError::TrailingBytes(r.buf.len()));
        }
        Ok(Self { metadata, sections })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.sections.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// A primed-model checkpoint. `metadata.kind` is overwritten.
    pub fn from_params(params: &BiaxialParams, mut metadata: Metadata) -> Self {
        metadata.kind = "primed".into();
        let shape = params.shape();
        metadata.time_hidden = shape.time_hidden;
        metadata.note_hidden = shape.note_hidden;
        let sections = params.section_names().into_iter().zip(params.tensors().into_iter().cloned()).collect();
        Self { metadata, sections }
    }

    /// A tuned Q-network: the body's sections plus `q.head.w`, `q.head.b`.
    pub fn from_q(q: &MelodyQ, metadata: Metadata) -> Self {
        let mut c = Self::from_params(&q.net.params, metadata);
        c.metadata.kind = "tuned".into();
        c.sections.push(("q.head.w".into(), q.head_w.clone()));
        c.sections.push(("q.head.b".into(), q.head_b.clone()));
        c
    }

    /// The bi-axial parameters of either kind of checkpoint.
    pub fn params(&self) -> Result<BiaxialParams, CheckpointError> {
        let m = &self.metadata;
        let shape = BiaxialShape::new(m.time_hidden.clone(), m.note_hidden.clone())
            .map_err(|e| CheckpointError::Metadata(e.to_string()))?;
        let names = BiaxialParams::zeros(&shape)
            .map_err(|e| CheckpointError::Metadata(e.to_string()))?
            .section_names();
        let tensors = names
            .iter()
            .map(|n| {
                self.get(n).cloned().ok_or_else(|| CheckpointError::Section {
                    name: n.clone(),
                    reason: "missing".into(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        BiaxialParams::from_sections(&shape, tensors).map_err(|e| CheckpointError::Section {
            name: "body".into(),
            reason: e.to_string(),
        })
    }

    pub fn melody_net(&self) -> Result<MelodyNet, CheckpointError> {
        MelodyNet::new(self.params()?, self.metadata.note_low, self.metadata.n_notes)
            .map_err(|e| CheckpointError::Metadata(e.to_string()))
    }

    /// A Q-network. Primed checkpoints get the identity head.
    pub fn melody_q(&self) -> Result<MelodyQ, CheckpointError> {
        let mut q = MelodyQ::from_primed(self.melody_net()?);
        if self.metadata.kind == "tuned" {
            for (name, dst) in [("q.head.w", &mut q.head_w), ("q.head.b", &mut q.head_b)] {
                let t = self.get(name).ok_or_else(|| CheckpointError::Section {
                    name: name.into(),
                    reason: "missing".into(),
                })?;
                if t.shape() != dst.shape() {
                    return Err(CheckpointError::Section {
                        name: name.into(),
                        reason: format!("shape {:?}, expected {:?}", t.shape(), dst.shape()),
                    });
                }
                *dst = t.clone();
            }
        }
        debug_assert_eq!(q.head_w.shape(), &[NUM_ACTIONS, NUM_ACTIONS]);
        Ok(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn meta() -> Metadata {
        Metadata {
            kind: String::new(),
            note_low: 48,
            n_notes: 36,
            steps_per_measure: 16,
            time_hidden: vec![],
            note_hidden: vec![],
            iterations: 3,
            seed: 9,
            config: serde_json::json!({"gamma": 0.5}),
        }
    }

    fn params() -> BiaxialParams {
        let s = BiaxialShape::new(vec![5, 4], vec![3]).unwrap();
        BiaxialParams::init(&s, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    #[test]
    fn bytes_round_trip() {
        let c = Checkpoint::from_params(&params(), meta());
        let b = c.to_bytes();
        let back = Checkpoint::from_bytes(&b).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), b);
        assert_eq!(back.params().unwrap(), params());
    }

    #[test]
    fn section_lengths_match_shapes() {
        let c = Checkpoint::from_params(&params(), meta());
        let total: usize = c.sections.iter().map(|(n, t)| 2 + n.len() + 4 + 8 * t.shape().len() + 8 * t.len()).sum();
        let meta_len = serde_json::to_vec(&c.metadata).unwrap().len();
        assert_eq!(c.to_bytes().len(), 4 + 4 + 4 + meta_len + 4 + total);
    }

    #[test]
    fn tuned_round_trip_keeps_head() {
        let mut q = MelodyQ::from_primed(MelodyNet::new(params(), 48, 36).unwrap());
        q.head_b.data_mut()[3] = 0.25;
        let c = Checkpoint::from_bytes(&Checkpoint::from_q(&q, meta()).to_bytes()).unwrap();
        assert_eq!(c.metadata.kind, "tuned");
        assert_eq!(c.melody_q().unwrap(), q);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let b = Checkpoint::from_params(&params(), meta()).to_bytes();
        assert!(matches!(Checkpoint::from_bytes(b"MThd"), Err(CheckpointError::BadMagic)));
        assert!(matches!(
            Checkpoint::from_bytes(&b[..b.len() - 3]),
            Err(CheckpointError::Truncated(_))
        ));
        let mut v = b.clone();
        v[4] = 2;
        assert!(matches!(Checkpoint::from_bytes(&v), Err(CheckpointError::UnsupportedVersion(2))));
        let mut v = b.clone();
        v.push(0);
        assert!(matches!(Checkpoint::from_bytes(&v), Err(CheckpointError::TrailingBytes(1))));
        let mut c = Checkpoint::from_params(&params(), meta());
        c.sections.pop();
        assert!(c.params().is_err());
    }
}
