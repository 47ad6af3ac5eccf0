//! Binary little-endian PLY in the layout used by 3D Gaussian Splatting exports:
//! log-scale, logit opacity and SH DC colour coefficients.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Quaternion, Vector3};

use super::{Gaussian3D, GaussianScene};
use crate::error::{Error, Result};

/// Zeroth-order spherical-harmonics basis constant.
pub const SH_C0: f64 = 0.282_094_791_773_878_14;

/// Stored opacity logits are clamped to `[-LOGIT_CLAMP, LOGIT_CLAMP]`.
pub const LOGIT_CLAMP: f64 = 15.0;

const REQUIRED: [&str; 17] = [
    "x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3", "opacity",
    "f_dc_0", "f_dc_1", "f_dc_2", "nx", "ny", "nz",
];
// normals are written for viewer compatibility but not required on read
const N_REQUIRED_ON_READ: usize = 14;

#[derive(Debug, Clone, Copy)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            ScalarType::I8 => b[0] as i8 as f64,
            ScalarType::U8 => b[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Element {
    name: String,
    count: usize,
    props: Vec<(String, ScalarType)>,
}

impl Element {
    fn stride(&self) -> usize {
        self.props.iter().map(|(_, t)| t.size()).sum()
    }
}

fn parse_header(bytes: &[u8]) -> Result<(Vec<Element>, usize)> {
    const END: &[u8] = b"end_header";
    let mut pos = 0;
    let mut elements: Vec<Element> = Vec::new();
    let mut first = true;
    let mut saw_format = false;
    loop {
        let nl = bytes[pos..]
            .iter()
            .position(|&c| c == b'\n')
            .ok_or_else(|| Error::Format("PLY header is not terminated".into()))?;
        let raw = &bytes[pos..pos + nl];
        pos += nl + 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| Error::Format("PLY header is not valid text".into()))?
            .trim_end_matches('\r')
            .trim();
        if first {
            if line != "ply" {
                return Err(Error::Format("missing 'ply' magic".into()));
            }
            first = false;
            continue;
        }
        if line.as_bytes() == END {
            break;
        }
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                let kind = tok.next().unwrap_or_default();
                if kind != "binary_little_endian" {
                    return Err(Error::Format(format!(
                        "unsupported PLY format {kind:?}, expected binary_little_endian"
                    )));
                }
                saw_format = true;
            }
            Some("element") => {
                let name = tok.next().unwrap_or_default().to_string();
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::Format(format!("bad element count for {name}")))?;
                elements.push(Element {
                    name,
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let ty = tok.next().unwrap_or_default();
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::Format("property before any element".into()))?;
                if ty == "list" {
                    return Err(Error::Format(format!(
                        "list properties are not supported (element {})",
                        el.name
                    )));
                }
                let st = ScalarType::parse(ty)
                    .ok_or_else(|| Error::Format(format!("unknown property type {ty:?}")))?;
                let name = tok
                    .next()
                    .ok_or_else(|| Error::Format("property without a name".into()))?;
                el.props.push((name.to_string(), st));
            }
            Some("comment") | Some("obj_info") | None => {}
            Some(other) => return Err(Error::Format(format!("unexpected header line {other:?}"))),
        }
    }
    if !saw_format {
        return Err(Error::Format("missing format line".into()));
    }
    Ok((elements, pos))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    let l = (p / (1.0 - p)).ln();
    if l.is_nan() {
        0.0
    } else {
        l.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
    }
}

/// Parses a scene from an in-memory PLY file.
pub fn read_scene(bytes: &[u8]) -> Result<GaussianScene> {
    let (elements, mut offset) = parse_header(bytes)?;
    let mut vertex = None;
    for el in &elements {
        if el.name == "vertex" {
            vertex = Some(el);
            break;
        }
        offset += el.count * el.stride();
    }
    let vertex = vertex.ok_or_else(|| Error::Format("no vertex element".into()))?;

    let mut columns = [(0usize, ScalarType::F32); N_REQUIRED_ON_READ];
    for (slot, want) in columns.iter_mut().zip(REQUIRED.iter()) {
        let mut off = 0;
        let mut found = None;
        for (name, ty) in &vertex.props {
            if name == want {
                found = Some((off, *ty));
                break;
            }
            off += ty.size();
        }
        *slot = found.ok_or_else(|| Error::Format(format!("missing required property {want:?}")))?;
    }

    let stride = vertex.stride();
    let needed = offset + stride * vertex.count;
    if bytes.len() < needed {
        return Err(Error::Format(format!(
            "truncated vertex data: need {needed} bytes, have {}",
            bytes.len()
        )));
    }

    let mut gaussians = Vec::with_capacity(vertex.count);
    let mut vals = [0f64; N_REQUIRED_ON_READ];
    for k in 0..vertex.count {
        let rec = &bytes[offset + k * stride..offset + (k + 1) * stride];
        for (v, (off, ty)) in vals.iter_mut().zip(columns.iter()) {
            *v = ty.read(&rec[*off..]);
        }
        if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "record {k}: non-finite value in property {:?}",
                REQUIRED[i]
            )));
        }
        let q = Quaternion::new(vals[6], vals[7], vals[8], vals[9]);
        let norm = q.norm();
        if norm == 0.0 {
            return Err(Error::Data(format!("record {k}: zero-length rotation quaternion")));
        }
        let color = Vector3::new(vals[11], vals[12], vals[13])
            .map(|f| (0.5 + SH_C0 * f).clamp(0.0, 1.0));
        gaussians.push(Gaussian3D {
            id: k,
            mean: Vector3::new(vals[0], vals[1], vals[2]),
            scale: Vector3::new(vals[3].exp(), vals[4].exp(), vals[5].exp()),
            rotation: q / norm,
            opacity: sigmoid(vals[10]),
            color,
        });
    }
    GaussianScene::new(gaussians)
}

/// Loads a scene from a binary little-endian 3DGS PLY file.
pub fn load_scene(path: impl AsRef<Path>) -> Result<GaussianScene> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    read_scene(&bytes)
}

/// Encodes Gaussians as PLY, inverse of [`read_scene`].
pub fn write_scene<'a, W: Write>(
    mut w: W,
    gaussians: impl ExactSizeIterator<Item = &'a Gaussian3D>,
) -> std::io::Result<()> {
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", gaussians.len()));
    // conventional export order: position, normals, colour, opacity, scale, rotation
    let order = [0, 1, 2, 14, 15, 16, 11, 12, 13, 10, 3, 4, 5, 6, 7, 8, 9];
    for &i in &order {
        header.push_str(&format!("property float {}\n", REQUIRED[i]));
    }
    header.push_str("end_header\n");
    w.write_all(header.as_bytes())?;

    for g in gaussians {
        let mut vals = [0f64; 17];
        vals[0..3].copy_from_slice(g.mean.as_slice());
        for a in 0..3 {
            vals[3 + a] = g.scale[a].ln();
            vals[11 + a] = (g.color[a] - 0.5) / SH_C0;
        }
        vals[6] = g.rotation.w;
        vals[7] = g.rotation.i;
        vals[8] = g.rotation.j;
        vals[9] = g.rotation.k;
        vals[10] = logit(g.opacity);
        for &i in &order {
            w.write_all(&(vals[i] as f32).to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn save_scene(scene: &GaussianScene, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_scene(BufWriter::new(f), scene.gaussians().iter()).map_err(|e| Error::io(path, e))
}
