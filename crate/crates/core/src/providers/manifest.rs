//! Dataset manifest, a TOML file with paths relative to the manifest's directory:
//!
//! ```toml
//! embedding_dim = 512
//! cameras = "cameras.txt"
//! mask_resolution = [1296, 968]
//! raster_resolution = [648, 484]
//!
//! [[image]]
//! id = 0
//! camera = 0
//! rgb = "images/0000.png"
//! masks = "masks/0000.rle"
//! embeddings = "embeddings/0000.emb"
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{load_cameras, CameraPose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: u32,
    /// Image id of the pose in the camera file.
    pub camera: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rgb: Option<PathBuf>,
    pub masks: PathBuf,
    pub embeddings: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    root: Option<PathBuf>,
    embedding_dim: usize,
    cameras: PathBuf,
    mask_resolution: (u32, u32),
    raster_resolution: (u32, u32),
    #[serde(default, rename = "image")]
    images: Vec<ImageEntry>,
}

/// A loaded manifest with its camera poses resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub cameras_path: PathBuf,
    pub embedding_dim: usize,
    pub mask_resolution: (u32, u32),
    pub raster_resolution: (u32, u32),
    pub images: Vec<ImageEntry>,
    pub cameras: BTreeMap<u32, CameraPose>,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Self::parse(&text, &base)
    }

    /// Parses manifest text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let file: ManifestFile =
            toml::from_str(text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        let root = match file.root {
            Some(r) if r.is_absolute() => r,
            Some(r) => base.join(r),
            None => base.to_path_buf(),
        };
        let cams = load_cameras(root.join(&file.cameras))?;
        let cameras: BTreeMap<u32, CameraPose> =
            cams.into_iter().map(|c| (c.image_id, c)).collect();
        let m = DatasetManifest {
            root,
            cameras_path: file.cameras,
            embedding_dim: file.embedding_dim,
            mask_resolution: file.mask_resolution,
            raster_resolution: file.raster_resolution,
            images: file.images,
            cameras,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if self.embedding_dim < 2 {
            return Err(Error::Data("embedding_dim must be at least 2".into()));
        }
        for (w, h) in [self.mask_resolution, self.raster_resolution] {
            if w == 0 || h == 0 {
                return Err(Error::Data("resolutions must be positive".into()));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for e in &self.images {
            if !seen.insert(e.id) {
                return Err(Error::Data(format!("image id {} listed twice", e.id)));
            }
            if !self.cameras.contains_key(&e.camera) {
                return Err(Error::Data(format!(
                    "image {} references camera {} which is not in the camera file",
                    e.id, e.camera
                )));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        let file = ManifestFile {
            root: None,
            embedding_dim: self.embedding_dim,
            cameras: self.cameras_path.clone(),
            mask_resolution: self.mask_resolution,
            raster_resolution: self.raster_resolution,
            images: self.images.clone(),
        };
        toml::to_string(&file).expect("manifest serialises")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.root.join(p)
    }

    pub fn entry(&self, image_id: u32) -> Result<&ImageEntry> {
        self.images
            .iter()
            .find(|e| e.id == image_id)
            .ok_or_else(|| Error::Data(format!("image {image_id} not in manifest")))
    }

    /// Pose for an image, rescaled to the rasterization resolution.
    pub fn raster_camera(&self, image_id: u32) -> Result<CameraPose> {
        let e = self.entry(image_id)?;
        let cam = &self.cameras[&e.camera];
        let (w, h) = self.raster_resolution;
        let mut c = cam.rescaled(w, h);
        c.image_id = image_id;
        Ok(c)
    }
}
