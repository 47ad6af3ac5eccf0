//! Snapshot file, little-endian:
//!
//! ```text
//! b"SLAGSNAP"  u32 version  u32 dim  u64 count
//! i32 cell[3]  f64 lo[3]  f64 hi[3]
//! count x { u32 gaussian_id  f32 mean[3]  f32 scale[3]  f32 rot[4]  f32 opacity  f32 color[3]  f32 vector[dim] }
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{PartitionSnapshot, Payload, VectorStore};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SLAGSNAP";
pub const SNAPSHOT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 8 + 12 + 48;
const PAYLOAD_FLOATS: usize = 14;

pub fn write_snapshot<W: Write>(snap: &PartitionSnapshot, mut w: W) -> std::io::Result<()> {
    let store = &snap.store;
    w.write_all(MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    w.write_all(&(store.dim() as u32).to_le_bytes())?;
    w.write_all(&(store.len() as u64).to_le_bytes())?;
    for c in snap.cell {
        w.write_all(&c.to_le_bytes())?;
    }
    for v in snap.lo.iter().chain(&snap.hi) {
        w.write_all(&v.to_le_bytes())?;
    }
    for i in 0..store.len() {
        w.write_all(&store.ids()[i].to_le_bytes())?;
        let p = store.payload(i);
        let fields = p
            .mean
            .iter()
            .chain(&p.scale)
            .chain(&p.rotation)
            .chain(std::iter::once(&p.opacity))
            .chain(&p.color)
            .chain(store.vector(i));
        for v in fields {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<PartitionSnapshot> {
    let mut head = [0u8; HEADER_LEN];
    r.read_exact(&mut head)
        .map_err(|_| Error::Format("snapshot header truncated".into()))?;
    if &head[..8] != MAGIC {
        return Err(Error::Format("bad snapshot magic".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(head[i..i + 4].try_into().unwrap());
    let version = u32_at(8);
    if version != SNAPSHOT_VERSION {
        return Err(Error::Format(format!(
            "snapshot version {version}, this build reads {SNAPSHOT_VERSION}"
        )));
    }
    let dim = u32_at(12) as usize;
    let count = u64::from_le_bytes(head[16..24].try_into().unwrap()) as usize;
    let mut cell = [0i32; 3];
    for (a, c) in cell.iter_mut().enumerate() {
        *c = i32::from_le_bytes(head[24 + 4 * a..28 + 4 * a].try_into().unwrap());
    }
    let f64_at = |i: usize| f64::from_le_bytes(head[i..i + 8].try_into().unwrap());
    let lo = [f64_at(36), f64_at(44), f64_at(52)];
    let hi = [f64_at(60), f64_at(68), f64_at(76)];

    let rec_len = 4 + 4 * (PAYLOAD_FLOATS + dim);
    let mut body = Vec::new();
    r.read_to_end(&mut body)
        .map_err(|e| Error::io("<snapshot>", e))?;
    if body.len() != count * rec_len {
        return Err(Error::Format(format!(
            "snapshot body holds {} bytes, header promises {count} records of {rec_len}",
            body.len()
        )));
    }
    let mut store = VectorStore::new(dim);
    let mut floats = vec![0f32; PAYLOAD_FLOATS + dim];
    for rec in body.chunks_exact(rec_len) {
        let id = u32::from_le_bytes(rec[..4].try_into().unwrap());
        for (f, c) in floats.iter_mut().zip(rec[4..].chunks_exact(4)) {
            *f = f32::from_le_bytes(c.try_into().unwrap());
        }
        let payload = Payload {
            mean: floats[0..3].try_into().unwrap(),
            scale: floats[3..6].try_into().unwrap(),
            rotation: floats[6..10].try_into().unwrap(),
            opacity: floats[10],
            color: floats[11..14].try_into().unwrap(),
        };
        store.push_raw(id, &floats[PAYLOAD_FLOATS..], payload);
    }
    Ok(PartitionSnapshot {
        cell,
        lo,
        hi,
        store,
    })
}

pub fn save_snapshot(snap: &PartitionSnapshot, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_snapshot(snap, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<PartitionSnapshot> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_snapshot(BufReader::new(f))
}
