//! Model persistence.
//!
//! Layout:
//!
//! ```text
//! PROPENSITY-MODEL\n
//! <one-line JSON header>\n
//! repeated sections: 4-byte tag | u64 LE payload length | payload
//! ```
//!
//! Floats are little-endian `f64`; the vocabulary is stored as `(term, index, df)`
//! triples sorted by term. Encoding is canonical, so save → load → save is
//! byte-identical.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::featurize::{NblrWeights, Vocabulary};
use crate::models::{
    Differentiable, EmbeddingBetaModel, EmbeddingConfig, LinearBetaModel, LinearPointModel, ModelKind, PointLoss,
    PropensityModel, TokenTable, TrainConfig,
};

pub const MAGIC: &[u8] = b"PROPENSITY-MODEL\n";
pub const FORMAT_VERSION: u32 = 1;

const TAG_VOCAB: &[u8; 4] = b"VOCB";
const TAG_NBLR: &[u8; 4] = b"NBLR";
const TAG_TOKENS: &[u8; 4] = b"TOKN";
const TAG_WEIGHTS: &[u8; 4] = b"WGHT";

/// Where a model came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub seed: u64,
    /// SHA-256 (hex) of the training file.
    pub data_fingerprint: Option<String>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub min_df: usize,
    pub train_config: Option<TrainConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum Dims {
    Linear { features: usize, n_docs: usize },
    Embedding { rows: usize, config: EmbeddingConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    kind: ModelKind,
    dims: Dims,
    metadata: TrainingMetadata,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub model: PropensityModel,
    pub metadata: TrainingMetadata,
}

/// Lower-case hex SHA-256 of `bytes`.
pub fn fingerprint(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn push_section(out: &mut Vec<u8>, tag: &[u8; 4], payload: &[u8]) {
    out.extend_from_slice(tag);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(payload);
}

fn f64s(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn encode_vocab(vocab: &Vocabulary) -> Vec<u8> {
    let triples = vocab.triples();
    let mut out = (triples.len() as u64).to_le_bytes().to_vec();
    for (term, index, df) in triples {
        out.extend_from_slice(&(term.len() as u32).to_le_bytes());
        out.extend_from_slice(term.as_bytes());
        out.extend_from_slice(&(index as u64).to_le_bytes());
        out.extend_from_slice(&(df as u64).to_le_bytes());
    }
    out
}

fn encode_tokens(table: &TokenTable) -> Vec<u8> {
    let mut out = (table.len() as u64).to_le_bytes().to_vec();
    for t in table.terms() {
        out.extend_from_slice(&(t.len() as u32).to_le_bytes());
        out.extend_from_slice(t.as_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Artifact("truncated artifact".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Artifact("size does not fit in memory".into()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Artifact("term is not UTF-8".into()))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn decode_f64s(payload: &[u8]) -> Result<Vec<f64>> {
    if !payload.len().is_multiple_of(8) {
        return Err(Error::Artifact("float section length is not a multiple of 8".into()));
    }
    Ok(payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

fn decode_vocab(payload: &[u8], n_docs: usize) -> Result<Vocabulary> {
    let mut r = Reader { bytes: payload, pos: 0 };
    let n = r.usize()?;
    let mut triples = Vec::with_capacity(n.min(payload.len()));
    for _ in 0..n {
        let term = r.string()?;
        triples.push((term, r.usize()?, r.usize()?));
    }
    if !r.done() {
        return Err(Error::Artifact("trailing bytes in vocabulary section".into()));
    }
    Vocabulary::from_triples(n_docs, triples)
}

fn decode_tokens(payload: &[u8]) -> Result<TokenTable> {
    let mut r = Reader { bytes: payload, pos: 0 };
    let n = r.usize()?;
    let terms = (0..n).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
    if !r.done() {
        return Err(Error::Artifact("trailing bytes in token section".into()));
    }
    TokenTable::from_terms(terms)
}

impl ModelArtifact {
    pub fn new(model: PropensityModel, metadata: TrainingMetadata) -> Self {
        Self { model, metadata }
    }

    pub fn kind(&self) -> ModelKind {
        self.model.kind()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let dims = match &self.model {
            PropensityModel::LinearBeta { vocab, .. } | PropensityModel::LinearPoint { vocab, .. } => {
                Dims::Linear { features: vocab.len(), n_docs: vocab.n_docs() }
            }
            PropensityModel::EmbeddingBeta(m) => Dims::Embedding { rows: m.table().len(), config: *m.config() },
        };
        let header =
            Header { format_version: FORMAT_VERSION, kind: self.kind(), dims, metadata: self.metadata.clone() };
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(serde_json::to_string(&header).expect("header serializes").as_bytes());
        out.push(b'\n');
        match &self.model {
            PropensityModel::LinearBeta { vocab, model } => {
                push_section(&mut out, TAG_VOCAB, &encode_vocab(vocab));
                push_section(&mut out, TAG_WEIGHTS, &f64s(model.params()));
            }
            PropensityModel::LinearPoint { vocab, nblr, model } => {
                push_section(&mut out, TAG_VOCAB, &encode_vocab(vocab));
                if let Some(w) = nblr {
                    let mut v = vec![w.label_mean];
                    v.extend_from_slice(&w.weights);
                    push_section(&mut out, TAG_NBLR, &f64s(&v));
                }
                push_section(&mut out, TAG_WEIGHTS, &f64s(model.params()));
            }
            PropensityModel::EmbeddingBeta(m) => {
                push_section(&mut out, TAG_TOKENS, &encode_tokens(m.table()));
                push_section(&mut out, TAG_WEIGHTS, &f64s(m.params()));
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let rest = bytes.strip_prefix(MAGIC).ok_or_else(|| Error::Artifact("missing model file signature".into()))?;
        let nl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| Error::Artifact("missing header line".into()))?;
        let header: Header =
            serde_json::from_slice(&rest[..nl]).map_err(|e| Error::Artifact(format!("bad header: {e}")))?;
        if header.format_version != FORMAT_VERSION {
            return Err(Error::Artifact(format!("unsupported format version {}", header.format_version)));
        }

        let mut r = Reader { bytes: &rest[nl + 1..], pos: 0 };
        let mut sections: Vec<([u8; 4], &[u8])> = Vec::new();
        while !r.done() {
            let tag: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
            let len = r.usize()?;
            sections.push((tag, r.take(len)?));
        }
        let section = |tag: &[u8; 4]| sections.iter().find(|(t, _)| t == tag).map(|(_, p)| *p);
        let required = |tag: &[u8; 4]| {
            section(tag).ok_or_else(|| Error::Artifact(format!("missing {} section", String::from_utf8_lossy(tag))))
        };
        let weights = decode_f64s(required(TAG_WEIGHTS)?)?;

        let model = match (header.kind, header.dims) {
            (ModelKind::EmbeddingBeta, Dims::Embedding { rows, config }) => {
                let table = decode_tokens(required(TAG_TOKENS)?)?;
                if table.len() != rows {
                    return Err(Error::Artifact(format!("header says {rows} rows, table has {}", table.len())));
                }
                PropensityModel::EmbeddingBeta(EmbeddingBetaModel::from_params(table, config, weights)?)
            }
            (kind, Dims::Linear { features, n_docs }) if kind != ModelKind::EmbeddingBeta => {
                let vocab = decode_vocab(required(TAG_VOCAB)?, n_docs)?;
                if vocab.len() != features {
                    return Err(Error::Artifact(format!(
                        "header says {features} features, vocabulary has {}",
                        vocab.len()
                    )));
                }
                if kind == ModelKind::LinearBeta {
                    if weights.len() != 2 * features + 2 {
                        return Err(Error::shape(2 * features + 2, weights.len()));
                    }
                    let (a, b) = weights.split_at(features + 1);
                    let model = LinearBetaModel::from_heads(
                        a[..features].to_vec(),
                        a[features],
                        b[..features].to_vec(),
                        b[features],
                    )?;
                    PropensityModel::LinearBeta { vocab, model }
                } else {
                    if weights.len() != features + 1 {
                        return Err(Error::shape(features + 1, weights.len()));
                    }
                    let nblr = match (kind, section(TAG_NBLR)) {
                        (ModelKind::Nblr, Some(p)) => {
                            let v = decode_f64s(p)?;
                            if v.len() != features + 1 {
                                return Err(Error::shape(features + 1, v.len()));
                            }
                            Some(NblrWeights { label_mean: v[0], weights: v[1..].to_vec() })
                        }
                        (ModelKind::Nblr, None) => return Err(Error::Artifact("missing NBLR section".into())),
                        _ => None,
                    };
                    let loss = if kind == ModelKind::LinearPointMae { PointLoss::Mae } else { PointLoss::Mse };
                    let model = LinearPointModel::from_parts(weights[..features].to_vec(), weights[features], loss)?;
                    PropensityModel::LinearPoint { vocab, nblr, model }
                }
            }
            (kind, _) => return Err(Error::Artifact(format!("dimensions do not match model kind {kind}"))),
        };
        Ok(Self { model, metadata: header.metadata })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
