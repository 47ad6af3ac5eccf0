//! Text queries against a vector store.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::providers::synth_embedding;
use crate::scene::{write_scene, Gaussian3D};
use crate::vecstore::{Payload, VectorStore};

/// Cosine threshold used for binary open-vocabulary retrieval.
pub const DEFAULT_THRESHOLD: f64 = 0.28;

/// Maps query text to an embedding vector.
pub trait TextEncoder {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Result<Vec<f32>>;
}

/// What to do with labels missing from the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnknownLabel {
    Reject,
    /// Fall back to [`synth_embedding`].
    Synthesize,
}

/// Label-to-vector table read from `label<TAB>v1 v2 ... vD` lines.
#[derive(Debug, Clone)]
pub struct LookupTableEncoder {
    dim: usize,
    table: HashMap<String, Vec<f32>>,
    unknown: UnknownLabel,
}

impl LookupTableEncoder {
    /// Empty table that synthesises every label.
    pub fn synthetic(dim: usize) -> Self {
        LookupTableEncoder {
            dim,
            table: HashMap::new(),
            unknown: UnknownLabel::Synthesize,
        }
    }

    pub fn parse(text: &str, unknown: UnknownLabel) -> Result<Self> {
        let mut table = HashMap::new();
        let mut dim = None;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (label, rest) = line.split_once('\t').ok_or_else(|| {
                Error::Format(format!("lookup line {}: missing tab after label", n + 1))
            })?;
            let v: Vec<f32> = rest
                .split_whitespace()
                .map(|t| t.parse::<f32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("lookup line {}: {e}", n + 1)))?;
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(Error::Data(format!(
                        "lookup line {}: dimension {} but earlier lines have {d}",
                        n + 1,
                        v.len()
                    )))
                }
                _ => {}
            }
            table.insert(label.to_string(), v);
        }
        let dim = dim.ok_or_else(|| Error::Data("lookup table is empty".into()))?;
        Ok(LookupTableEncoder { dim, table, unknown })
    }

    pub fn load(path: impl AsRef<Path>, unknown: UnknownLabel) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, unknown)
    }

    pub fn insert(&mut self, label: &str, vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Data(format!(
                "vector for {label:?} has dimension {}, table has {}",
                vector.len(),
                self.dim
            )));
        }
        self.table.insert(label.to_string(), vector);
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut labels: Vec<&String> = self.table.keys().collect();
        labels.sort();
        let mut out = String::new();
        for l in labels {
            let v: Vec<String> = self.table[l].iter().map(|x| format!("{x:?}")).collect();
            out.push_str(&format!("{l}\t{}\n", v.join(" ")));
        }
        out
    }
}

impl TextEncoder for LookupTableEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Result<Vec<f32>> {
        match (self.table.get(text), self.unknown) {
            (Some(v), _) => Ok(v.clone()),
            (None, UnknownLabel::Synthesize) => Ok(synth_embedding(text, self.dim)),
            (None, UnknownLabel::Reject) => Err(Error::Lookup(text.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QueryMode {
    TopK(usize),
    Threshold(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryMatch {
    pub gaussian_id: u32,
    pub similarity: f64,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub text: String,
    pub vector: Vec<f32>,
    pub mode: QueryMode,
    /// Best first.
    pub matches: Vec<QueryMatch>,
}

impl QueryResult {
    pub fn ids(&self) -> Vec<u32> {
        self.matches.iter().map(|m| m.gaussian_id).collect()
    }
}

pub fn encode_text(text: &str, encoder: &dyn TextEncoder) -> Result<Vec<f32>> {
    encoder.encode(text)
}

/// Encodes `text` and searches `store`.
pub fn run_query(
    store: &VectorStore,
    text: &str,
    mode: QueryMode,
    encoder: &dyn TextEncoder,
) -> Result<QueryResult> {
    let vector = encode_text(text, encoder)?;
    let hits = if store.is_empty() {
        Vec::new()
    } else {
        match mode {
            QueryMode::TopK(k) => store.query_topk(&vector, k)?,
            QueryMode::Threshold(tau) => store.query_threshold(&vector, tau)?,
        }
    };
    let index: HashMap<u32, usize> = store.ids().iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let matches = hits
        .into_iter()
        .map(|h| QueryMatch {
            gaussian_id: h.gaussian_id,
            similarity: h.similarity.clamp(-1.0, 1.0),
            payload: *store.payload(index[&h.gaussian_id]),
        })
        .collect();
    Ok(QueryResult {
        text: text.to_string(),
        vector,
        mode,
        matches,
    })
}

/// Writes matched Gaussians in ranked order as a 3DGS PLY.
pub fn export_matches_ply(result: &QueryResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let gaussians: Vec<Gaussian3D> = result
        .matches
        .iter()
        .enumerate()
        .map(|(i, m)| m.payload.to_gaussian(i))
        .collect();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_scene(BufWriter::new(f), gaussians.iter()).map_err(|e| Error::io(path, e))
}
