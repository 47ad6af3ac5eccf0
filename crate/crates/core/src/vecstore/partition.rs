use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{load_snapshot, save_snapshot, VectorStore};
use crate::error::{Error, Result};
use crate::scene::Aabb;

/// The records of a store whose means fall in one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSnapshot {
    pub cell: [i32; 3],
    /// Half-open cell bounds `[lo, hi)`.
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub store: VectorStore,
}

impl PartitionSnapshot {
    /// Squared distance from `p` to the cell box.
    fn dist2(&self, p: &Vector3<f64>) -> f64 {
        (0..3)
            .map(|a| {
                let d = (self.lo[a] - p[a]).max(0.0).max(p[a] - self.hi[a]);
                d * d
            })
            .sum()
    }
}

/// Splits a store on a uniform grid anchored at the minimum of its means.
/// Each record lands in exactly one cell; empty cells are omitted.
pub fn partition_store(store: &VectorStore, cell_size: f64) -> Result<Vec<PartitionSnapshot>> {
    if !(cell_size > 0.0) || !cell_size.is_finite() {
        return Err(Error::Config(format!("cell size must be positive, got {cell_size}")));
    }
    let means: Vec<Vector3<f64>> = (0..store.len()).map(|i| store.payload(i).mean_f64()).collect();
    let Some(bbox) = Aabb::from_points(means.iter()) else {
        return Ok(Vec::new());
    };
    let origin = bbox.min;
    let lower = |c: i64, a: usize| origin[a] + c as f64 * cell_size;

    let mut cells: BTreeMap<[i32; 3], Vec<usize>> = BTreeMap::new();
    for (i, m) in means.iter().enumerate() {
        let mut key = [0i32; 3];
        for a in 0..3 {
            let mut c = ((m[a] - origin[a]) / cell_size).floor() as i64;
            // settle rounding so the mean really lies in [lower(c), lower(c + 1))
            while m[a] < lower(c, a) {
                c -= 1;
            }
            while m[a] >= lower(c + 1, a) {
                c += 1;
            }
            key[a] = i32::try_from(c)
                .map_err(|_| Error::Config(format!("cell size {cell_size} yields too many cells")))?;
        }
        cells.entry(key).or_default().push(i);
    }

    Ok(cells
        .into_iter()
        .map(|(cell, members)| {
            let mut sub = VectorStore::new(store.dim());
            for i in members {
                sub.push_raw(store.ids()[i], store.vector(i), *store.payload(i));
            }
            let lo = [0, 1, 2].map(|a| lower(cell[a] as i64, a));
            let hi = [0, 1, 2].map(|a| lower(cell[a] as i64 + 1, a));
            PartitionSnapshot { cell, lo, hi, store: sub }
        })
        .collect())
}

/// Merges every snapshot whose cell intersects the closed ball `(center, radius)`.
pub fn select_partitions(
    snapshots: &[PartitionSnapshot],
    center: Vector3<f64>,
    radius: f64,
) -> Result<VectorStore> {
    if !(radius >= 0.0) {
        return Err(Error::Config(format!("radius must be non-negative, got {radius}")));
    }
    let dim = snapshots.first().map(|s| s.store.dim()).unwrap_or(0);
    let mut out = VectorStore::new(dim);
    for s in snapshots {
        if s.dist2(&center) <= radius * radius {
            out.merge(&s.store)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionEntry {
    pub cell: [i32; 3],
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub path: PathBuf,
    pub count: usize,
}

/// Index of all snapshot files of a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionManifest {
    pub cell_size: f64,
    pub dim: usize,
    #[serde(default, rename = "snapshot")]
    pub snapshots: Vec<PartitionEntry>,
}

impl PartitionManifest {
    /// Loads the snapshots listed in the manifest, paths relative to `base`.
    pub fn load_snapshots(&self, base: &Path) -> Result<Vec<PartitionSnapshot>> {
        self.snapshots
            .iter()
            .map(|e| {
                let s = load_snapshot(base.join(&e.path))?;
                if s.store.len() != e.count || s.cell != e.cell {
                    return Err(Error::Data(format!(
                        "{}: snapshot does not match its manifest entry",
                        e.path.display()
                    )));
                }
                Ok(s)
            })
            .collect()
    }
}

/// Writes every snapshot plus `partitions.toml` into `dir`; returns the manifest path.
pub fn write_partitions(
    dir: impl AsRef<Path>,
    snapshots: &[PartitionSnapshot],
    cell_size: f64,
    dim: usize,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = PartitionManifest {
        cell_size,
        dim,
        snapshots: Vec::new(),
    };
    for s in snapshots {
        let [x, y, z] = s.cell;
        let name = PathBuf::from(format!("cell_{x}_{y}_{z}.snap"));
        save_snapshot(s, dir.join(&name))?;
        manifest.snapshots.push(PartitionEntry {
            cell: s.cell,
            lo: s.lo,
            hi: s.hi,
            path: name,
            count: s.store.len(),
        });
    }
    let path = dir.join("partitions.toml");
    let text = toml::to_string(&manifest).map_err(|e| Error::Invariant(e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn load_partition_manifest(path: impl AsRef<Path>) -> Result<PartitionManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
