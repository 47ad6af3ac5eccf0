//! Per-Gaussian embedding table and its binary file:
//! `b"SLET"`, `u64 rows`, `u32 dim`, `rows * dim` f32 embeddings, `rows` f32 coverage values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::COVERAGE_EPS;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SLET";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub rows: usize,
    pub dim: usize,
    /// Row-major `rows x dim`.
    pub embeddings: Vec<f32>,
    /// Total accumulated weight per Gaussian.
    pub coverage: Vec<f32>,
}

impl EmbeddingTable {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        EmbeddingTable {
            rows,
            dim,
            embeddings: vec![0.0; rows * dim],
            coverage: vec![0.0; rows],
        }
    }

    pub fn row(&self, k: usize) -> &[f32] {
        &self.embeddings[k * self.dim..(k + 1) * self.dim]
    }

    pub fn is_covered(&self, k: usize) -> bool {
        self.coverage[k] as f64 > COVERAGE_EPS
    }

    pub fn covered_count(&self) -> usize {
        (0..self.rows).filter(|&k| self.is_covered(k)).count()
    }

    /// Appends the rows of `other`.
    pub fn extend(&mut self, other: EmbeddingTable) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::Contract(format!(
                "cannot concatenate tables of dimension {} and {}",
                self.dim, other.dim
            )));
        }
        self.rows += other.rows;
        self.embeddings.extend(other.embeddings);
        self.coverage.extend(other.coverage);
        Ok(())
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.rows as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        for v in self.embeddings.iter().chain(&self.coverage) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 16];
        r.read_exact(&mut head)
            .map_err(|_| Error::Format("embedding table header truncated".into()))?;
        if &head[..4] != MAGIC {
            return Err(Error::Format("bad embedding table magic".into()));
        }
        let rows = u64::from_le_bytes(head[4..12].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
        let mut body = Vec::new();
        r.read_to_end(&mut body)
            .map_err(|e| Error::io("<embedding table>", e))?;
        let expect = rows
            .checked_mul(dim + 1)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("embedding table header overflows".into()))?;
        if body.len() != expect {
            return Err(Error::Format(format!(
                "embedding table body holds {} bytes, header ({rows} x {dim}) needs {expect}",
                body.len()
            )));
        }
        let floats: Vec<f32> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (emb, cov) = floats.split_at(rows * dim);
        Ok(EmbeddingTable {
            rows,
            dim,
            embeddings: emb.to_vec(),
            coverage: cov.to_vec(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_table_round_trips() {
        let t = EmbeddingTable::zeros(0, 512);
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        assert_eq!(EmbeddingTable::read(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn truncated_file_rejected() {
        let t = EmbeddingTable::zeros(3, 4);
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        buf.pop();
        assert!(matches!(EmbeddingTable::read(buf.as_slice()), Err(Error::Format(_))));
        assert!(matches!(EmbeddingTable::read(&buf[..10]), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn round_trip(rows in 0usize..8, dim in 1usize..6, seed in any::<u64>()) {
            let mut t = EmbeddingTable::zeros(rows, dim);
            for (i, v) in t.embeddings.iter_mut().enumerate() {
                *v = ((seed.wrapping_add(i as u64) % 1000) as f32 - 500.0) / 37.0;
            }
            for (i, c) in t.coverage.iter_mut().enumerate() {
                *c = (i as f32) * 0.25;
            }
            let mut buf = Vec::new();
            t.write(&mut buf).unwrap();
            prop_assert_eq!(EmbeddingTable::read(buf.as_slice()).unwrap(), t);
        }
    }
}
