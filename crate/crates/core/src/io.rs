//! Text formats: detection files with inline features, MOTChallenge-style
//! track files, and conversion from MOT detections plus a feature matrix.
//!
//! A detection file starts with a header line declaring the feature
//! dimension, then holds one row per detection:
//!
//! ```text
//! # dim=4
//! 1,10,20,50,100,0.9,0.5,0.5,0.5,0.5
//! ```
//!
//! i.e. `frame, x_left, y_top, width, height, score, <dim features>`.
//! The header may also declare the frame span (`# dim=4 frames=1-50`) so
//! that frames without detections at either end are kept.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dynamics::{state_box, TrackLabel};
use crate::geometry::BBox;
use crate::glmb::TrackEstimate;
use crate::measurement::{Feature, Measurement};
use crate::metrics::{tracks_from_rows, TrackRecord};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetections {
    pub frame: u32,
    pub measurements: Vec<Measurement>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSequence {
    pub dim: usize,
    /// Consecutive frames, ascending.
    pub frames: Vec<FrameDetections>,
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

fn header_tokens(line: &str) -> impl Iterator<Item = &str> {
    line.trim_start_matches('#').split(|c: char| c.is_whitespace() || c == ',')
}

fn header_dim(line: &str) -> Option<usize> {
    header_tokens(line).find_map(|tok| tok.strip_prefix("dim=").and_then(|d| d.parse().ok()))
}

fn header_span(line: &str) -> Option<(u32, u32)> {
    header_tokens(line).find_map(|tok| {
        let (a, b) = tok.strip_prefix("frames=")?.split_once('-')?;
        let (a, b): (u32, u32) = (a.parse().ok()?, b.parse().ok()?);
        (a <= b).then_some((a, b))
    })
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_number(path: &Path, line: usize, field: &str, what: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| parse_error(path, line, format!("invalid {what} '{}'", field.trim())))
}

fn parse_frame(path: &Path, line: usize, field: &str) -> Result<u32> {
    let v = parse_number(path, line, field, "frame")?;
    if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
        return Err(parse_error(path, line, format!("invalid frame '{}'", field.trim())));
    }
    Ok(v as u32)
}

/// Parses a detection file; `path` is only used in error messages.
pub fn parse_detections_str(text: &str, path: &Path) -> Result<DetectionSequence> {
    let mut dim = None;
    let mut span = None;
    let mut rows: Vec<(u32, Measurement)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if dim.is_none() {
                dim = header_dim(line);
                span = header_span(line);
            }
            continue;
        }
        let d = dim.ok_or_else(|| parse_error(path, line_no, "missing '# dim=D' header"))?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 + d {
            return Err(parse_error(path, line_no, format!("expected {} fields, found {}", 6 + d, fields.len())));
        }
        let frame = parse_frame(path, line_no, fields[0])?;
        let num = |i: usize, what: &str| parse_number(path, line_no, fields[i], what);
        let b = BBox::new(num(1, "x")?, num(2, "y")?, num(3, "width")?, num(4, "height")?);
        if !(b.w > 0.0 && b.h > 0.0) {
            return Err(parse_error(path, line_no, "width and height must be positive"));
        }
        let score = num(5, "score")?;
        let feature = (6..6 + d).map(|i| num(i, "feature value")).collect::<Result<Vec<_>>>()?;
        let feature = Feature::normalized(feature).map_err(|_| parse_error(path, line_no, "feature vector is zero"))?;
        if let Some(&(last, _)) = rows.last() {
            if frame < last {
                return Err(parse_error(path, line_no, "frames must be ascending"));
            }
        }
        rows.push((frame, Measurement::from_box(&b, feature, score)));
    }
    let dim = dim.ok_or_else(|| parse_error(path, 1, "missing '# dim=D' header"))?;
    let mut frames = Vec::new();
    let first = rows.first().map(|r| r.0).into_iter().chain(span.map(|s| s.0)).min();
    let last = rows.last().map(|r| r.0).into_iter().chain(span.map(|s| s.1)).max();
    if let (Some(first), Some(last)) = (first, last) {
        frames = (first..=last).map(|frame| FrameDetections { frame, measurements: Vec::new() }).collect();
        for (frame, m) in rows {
            frames[(frame - first) as usize].measurements.push(m);
        }
    }
    Ok(DetectionSequence { dim, frames })
}

pub fn parse_detections(path: &Path) -> Result<DetectionSequence> {
    parse_detections_str(&read_text(path)?, path)
}

/// Formats a number with at most `decimals` decimals and no trailing zeros.
pub fn format_number(x: f64, decimals: usize) -> String {
    let s = format!("{x:.decimals$}");
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

pub fn format_detections(seq: &DetectionSequence) -> String {
    let mut out = format!("# dim={}", seq.dim);
    if let (Some(a), Some(b)) = (seq.frames.first(), seq.frames.last()) {
        let _ = write!(out, " frames={}-{}", a.frame, b.frame);
    }
    out.push('\n');
    for f in &seq.frames {
        for m in &f.measurements {
            let b = m.bbox();
            let _ = write!(out, "{},{},{},{},{},{}", f.frame, b.x, b.y, b.w, b.h, m.score);
            for v in m.feature.as_slice() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_detections(path: &Path, seq: &DetectionSequence) -> Result<()> {
    write_text(path, &format_detections(seq))
}

/// Stable positive integer identities for labels, in order of first appearance.
#[derive(Debug, Clone, Default)]
pub struct TrackIds {
    ids: HashMap<TrackLabel, u64>,
}

impl TrackIds {
    pub fn id(&mut self, label: TrackLabel) -> u64 {
        let next = self.ids.len() as u64 + 1;
        *self.ids.entry(label).or_insert(next)
    }
}

/// MOTChallenge result rows `frame,id,x,y,w,h,1,-1,-1,-1`.
pub fn format_tracks(estimates: &[(u32, Vec<TrackEstimate>)]) -> String {
    let mut ids = TrackIds::default();
    let mut out = String::new();
    for (frame, ests) in estimates {
        for e in ests {
            let b = state_box(&e.state);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},1,-1,-1,-1",
                frame,
                ids.id(e.label),
                format_number(b.x, 3),
                format_number(b.y, 3),
                format_number(b.w, 3),
                format_number(b.h, 3)
            );
        }
    }
    out
}

pub fn write_tracks(estimates: &[(u32, Vec<TrackEstimate>)], path: &Path) -> Result<()> {
    write_text(path, &format_tracks(estimates))
}

/// Reads MOTChallenge-style rows (`frame,id,x,y,w,h[,flag,...]`) into tracks.
///
/// With `honor_flag`, rows whose seventh column is `0` (ignored ground
/// truth) are skipped.
pub fn parse_mot_str(text: &str, path: &Path, honor_flag: bool) -> Result<Vec<TrackRecord>> {
    let mut rows = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 6 {
            return Err(parse_error(path, n + 1, "expected at least 6 fields"));
        }
        let num = |i: usize, what: &str| parse_number(path, n + 1, fields[i], what);
        if honor_flag && fields.len() >= 7 && num(6, "flag")? == 0.0 {
            continue;
        }
        let frame = parse_frame(path, n + 1, fields[0])?;
        let id = num(1, "id")?;
        if id < 0.0 || id.fract() != 0.0 {
            return Err(parse_error(path, n + 1, "track id must be a non-negative integer"));
        }
        let b = BBox::new(num(2, "x")?, num(3, "y")?, num(4, "width")?, num(5, "height")?);
        if !b.is_proper() {
            return Err(parse_error(path, n + 1, "width and height must be positive"));
        }
        rows.push((frame, id as u64, b));
    }
    Ok(tracks_from_rows(rows))
}

pub fn read_mot(path: &Path, honor_flag: bool) -> Result<Vec<TrackRecord>> {
    parse_mot_str(&read_text(path)?, path, honor_flag)
}

/// Ground-truth rows for a set of tracks, ascending by frame then id.
pub fn format_ground_truth(tracks: &[TrackRecord]) -> String {
    let mut rows: Vec<(u32, u64, BBox)> =
        tracks.iter().flat_map(|t| t.boxes.iter().map(move |(&f, &b)| (f, t.id, b))).collect();
    rows.sort_by_key(|r| (r.0, r.1));
    let mut out = String::new();
    for (f, id, b) in rows {
        let _ = writeln!(out, "{f},{id},{},{},{},{},1,-1,-1,-1", b.x, b.y, b.w, b.h);
    }
    out
}

/// Merges a 10-column MOT detection file with a feature matrix holding one
/// comma-separated row per detection, in the same order.
pub fn convert_mot(det_path: &Path, feature_path: &Path) -> Result<DetectionSequence> {
    let det_text = read_text(det_path)?;
    let feat_text = read_text(feature_path)?;
    let mut features = feat_text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let mut dim = None;
    let mut rows: Vec<(u32, Measurement)> = Vec::new();
    for (n, raw) in det_text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 7 {
            return Err(parse_error(det_path, n + 1, "expected at least 7 fields"));
        }
        let frame = parse_frame(det_path, n + 1, fields[0])?;
        let num = |i: usize, what: &str| parse_number(det_path, n + 1, fields[i], what);
        let b = BBox::new(num(2, "x")?, num(3, "y")?, num(4, "width")?, num(5, "height")?);
        if !b.is_proper() {
            return Err(parse_error(det_path, n + 1, "width and height must be positive"));
        }
        let score = num(6, "score")?;
        let (fl, frow) = features
            .next()
            .ok_or_else(|| parse_error(feature_path, 0, format!("no feature row for detection on line {}", n + 1)))?;
        let values = frow
            .split(',')
            .map(|v| parse_number(feature_path, fl + 1, v, "feature value"))
            .collect::<Result<Vec<_>>>()?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(parse_error(feature_path, fl + 1, format!("expected {d} feature values")));
            }
            _ => {}
        }
        let feature = Feature::normalized(values).map_err(|_| parse_error(feature_path, fl + 1, "feature vector is zero"))?;
        rows.push((frame, Measurement::from_box(&b, feature, score)));
    }
    if let Some((fl, _)) = features.next() {
        return Err(parse_error(feature_path, fl + 1, "more feature rows than detections"));
    }
    rows.sort_by_key(|r| r.0);
    let mut frames: Vec<FrameDetections> = Vec::new();
    if let (Some(first), Some(last)) = (rows.first().map(|r| r.0), rows.last().map(|r| r.0)) {
        frames = (first..=last).map(|frame| FrameDetections { frame, measurements: Vec::new() }).collect();
        for (frame, m) in rows {
            frames[(frame - first) as usize].measurements.push(m);
        }
    }
    Ok(DetectionSequence { dim: dim.unwrap_or(0), frames })
}

/// Output path `<prefix><suffix>`.
pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
