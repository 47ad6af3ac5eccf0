//! Text formats for evaluation inputs.
//!
//! Point cloud: one point per line, `x y z class`, with class `-1` for
//! unlabeled points. Segments: one segment id per line, in point order.
//! Class list: one label per line, line number is the class id.
//! Blank lines and lines starting with `#` are skipped everywhere.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::{LabeledPointCloud, SegmentMap};
use crate::error::{Error, Result};

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn parse_point_cloud(text: &str) -> Result<LabeledPointCloud> {
    let mut cloud = LabeledPointCloud::default();
    for (n, line) in content_lines(text) {
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 4 {
            return Err(Error::Format(format!("point line {n}: expected `x y z class`")));
        }
        let f = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Format(format!("point line {n}: bad coordinate {s:?}")))
        };
        let class: i64 = t[3]
            .parse()
            .map_err(|_| Error::Format(format!("point line {n}: bad class {:?}", t[3])))?;
        let class = match class {
            -1 => None,
            c if (0..=u32::MAX as i64).contains(&c) => Some(c as u32),
            c => return Err(Error::Format(format!("point line {n}: bad class {c}"))),
        };
        cloud.points.push(Vector3::new(f(t[0])?, f(t[1])?, f(t[2])?));
        cloud.classes.push(class);
    }
    Ok(cloud)
}

pub fn load_point_cloud(path: impl AsRef<Path>) -> Result<LabeledPointCloud> {
    parse_point_cloud(&read(path.as_ref())?)
}

pub fn save_point_cloud(cloud: &LabeledPointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for (p, c) in cloud.points.iter().zip(&cloud.classes) {
        let c = c.map_or(-1, |c| c as i64);
        writeln!(out, "{:?} {:?} {:?} {c}", p.x, p.y, p.z).unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn parse_segments(text: &str) -> Result<SegmentMap> {
    let segments = content_lines(text)
        .map(|(n, l)| {
            l.parse::<u32>()
                .map_err(|_| Error::Format(format!("segment line {n}: bad id {l:?}")))
        })
        .collect::<Result<_>>()?;
    Ok(SegmentMap { segments })
}

pub fn load_segments(path: impl AsRef<Path>) -> Result<SegmentMap> {
    parse_segments(&read(path.as_ref())?)
}

pub fn save_segments(segments: &SegmentMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for s in &segments.segments {
        writeln!(out, "{s}").unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_class_list(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let text = read(path.as_ref())?;
    Ok(content_lines(&text).map(|(_, l)| l.to_string()).collect())
}

pub fn save_class_list(labels: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = labels.join("\n");
    out.push('\n');
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
