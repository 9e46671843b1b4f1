//! GIoU box distance, OSPA between finite sets and OSPA(2) between sets of tracks.

use std::collections::{BTreeMap, BTreeSet};

use crate::assignment::solve_lap;
use crate::geometry::BBox;
use crate::{Error, Result};

/// `1 − GIoU`, in `[0, 2]`.
pub fn giou_distance(a: &BBox, b: &BBox) -> Result<f64> {
    a.ensure_proper()?;
    b.ensure_proper()?;
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    let hull = a.enclosing(b).area();
    let giou = inter / union - (hull - union) / hull;
    Ok((1.0 - giou).clamp(0.0, 2.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OspaConfig {
    /// Cutoff `c`.
    pub cutoff: f64,
    /// Order `p`.
    pub order: f64,
}

impl Default for OspaConfig {
    fn default() -> Self {
        OspaConfig { cutoff: 1.0, order: 1.0 }
    }
}

impl OspaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cutoff > 0.0 && self.order >= 1.0 && self.cutoff.is_finite() && self.order.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid OSPA parameters {self:?}")))
        }
    }
}

/// An OSPA value with its localization and cardinality components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OspaValue {
    pub total: f64,
    pub localization: f64,
    pub cardinality: f64,
}

impl OspaValue {
    const ZERO: OspaValue = OspaValue { total: 0.0, localization: 0.0, cardinality: 0.0 };
}

/// OSPA distance between `x` and `y` for the base distance `d`.
pub fn ospa<T>(x: &[T], y: &[T], d: impl Fn(&T, &T) -> f64, cfg: &OspaConfig) -> OspaValue {
    let (small, large, flip) = if x.len() <= y.len() { (x, y, false) } else { (y, x, true) };
    let (m, n) = (small.len(), large.len());
    if n == 0 {
        return OspaValue::ZERO;
    }
    let (c, p) = (cfg.cutoff, cfg.order);
    let mut costs = Vec::with_capacity(m * n);
    for a in small {
        for b in large {
            let dist = if flip { d(b, a) } else { d(a, b) };
            costs.push(dist.min(c).powf(p));
        }
    }
    let assignment = solve_lap(&costs, m, n).expect("complete finite cost matrix");
    let loc: f64 = assignment.iter().enumerate().map(|(i, &j)| costs[i * n + j]).sum();
    let card = c.powf(p) * (n - m) as f64;
    let nf = n as f64;
    OspaValue {
        total: ((loc + card) / nf).powf(1.0 / p),
        localization: (loc / nf).powf(1.0 / p),
        cardinality: (card / nf).powf(1.0 / p),
    }
}

/// A track: boxes indexed by frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackRecord {
    pub id: u64,
    pub boxes: BTreeMap<u32, BBox>,
}

impl TrackRecord {
    pub fn new(id: u64) -> Self {
        TrackRecord { id, boxes: BTreeMap::new() }
    }
}

/// Groups `(frame, id, box)` rows into tracks ordered by id.
pub fn tracks_from_rows(rows: impl IntoIterator<Item = (u32, u64, BBox)>) -> Vec<TrackRecord> {
    let mut map: BTreeMap<u64, TrackRecord> = BTreeMap::new();
    for (frame, id, b) in rows {
        map.entry(id).or_insert_with(|| TrackRecord::new(id)).boxes.insert(frame, b);
    }
    map.into_values().collect()
}

/// Time-averaged distance between two tracks over the union of their
/// domains (restricted to `frames`); a frame where only one is present
/// costs `c`.
fn track_distance(f: &TrackRecord, g: &TrackRecord, cfg: &OspaConfig, frames: &Option<(u32, u32)>) -> f64 {
    let within = |t: &u32| frames.is_none_or(|(a, b)| (a..=b).contains(t));
    let domain: BTreeSet<u32> = f.boxes.keys().chain(g.boxes.keys()).copied().filter(within).collect();
    if domain.is_empty() {
        return 0.0;
    }
    let c = cfg.cutoff;
    let total: f64 = domain
        .iter()
        .map(|t| match (f.boxes.get(t), g.boxes.get(t)) {
            (Some(a), Some(b)) => giou_distance(a, b).unwrap_or(c).min(c),
            _ => c,
        })
        .sum();
    total / domain.len() as f64
}

/// OSPA(2) between ground-truth and estimated tracks over the whole sequence.
pub fn ospa2(ground: &[TrackRecord], hyp: &[TrackRecord], cfg: &OspaConfig) -> OspaValue {
    ospa2_windowed(ground, hyp, cfg, None)
}

/// OSPA(2) restricted to frames in `frames` (inclusive); tracks with no
/// frame inside the window take no part.
pub fn ospa2_windowed(ground: &[TrackRecord], hyp: &[TrackRecord], cfg: &OspaConfig, frames: Option<(u32, u32)>) -> OspaValue {
    let active = |tracks: &[TrackRecord]| -> Vec<TrackRecord> {
        tracks
            .iter()
            .filter(|t| t.boxes.keys().any(|k| frames.is_none_or(|(a, b)| (a..=b).contains(k))))
            .cloned()
            .collect()
    };
    let (g, h) = (active(ground), active(hyp));
    ospa(&g, &h, |a, b| track_distance(a, b, cfg, &frames), cfg)
}
