//! Occlusion scores and the fuzzy detection-probability model.
//!
//! A box is occluded by boxes whose bottom edge lies lower in the image
//! (closer to the camera). The covered fraction of a box (max-IoA) and its
//! size relative to the average object (area ratio) drive a nine-rule fuzzy
//! inference that yields the detection probability.

use std::cmp::Ordering;

use crate::dynamics::TrackLabel;
use crate::geometry::BBox;
use crate::{Error, Result};

/// Intersection over the area of `a`.
pub fn ioa(a: &BBox, b: &BBox) -> Result<f64> {
    a.ensure_proper()?;
    b.ensure_proper()?;
    Ok(a.intersection_area(b) / a.area())
}

/// `true` if `o` is in front of `b`: strictly lower bottom edge, ties broken
/// in favour of the smaller label.
fn in_front(o: (TrackLabel, &BBox), b: (TrackLabel, &BBox)) -> bool {
    match o.1.bottom().partial_cmp(&b.1.bottom()) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Equal) => o.0 < b.0,
        _ => false,
    }
}

/// Pairwise occlusion relations of a set of boxes.
#[derive(Debug, Clone, Default)]
pub struct OcclusionGraph {
    len: usize,
    /// `(occluded, occluder, covered fraction of occluded)`.
    edges: Vec<(usize, usize, f64)>,
}

impl OcclusionGraph {
    /// Finds all overlapping pairs with a sweep over the left edges.
    pub fn new(boxes: &[(TrackLabel, BBox)]) -> Self {
        let mut order: Vec<usize> = (0..boxes.len()).collect();
        order.sort_by(|&i, &j| boxes[i].1.x.total_cmp(&boxes[j].1.x).then(i.cmp(&j)));
        let mut edges = Vec::new();
        for (k, &i) in order.iter().enumerate() {
            let (li, bi) = (boxes[i].0, &boxes[i].1);
            for &j in &order[k + 1..] {
                let (lj, bj) = (boxes[j].0, &boxes[j].1);
                if bj.x >= bi.right() {
                    break;
                }
                let inter = bi.intersection_area(bj);
                if inter <= 0.0 {
                    continue;
                }
                if in_front((lj, bj), (li, bi)) {
                    edges.push((i, j, inter / bi.area()));
                } else {
                    edges.push((j, i, inter / bj.area()));
                }
            }
        }
        edges.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        OcclusionGraph { len: boxes.len(), edges }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Max-IoA of every box.
    pub fn max_ioa(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for &(b, _, f) in &self.edges {
            out[b] = f64::max(out[b], f);
        }
        out
    }

    /// Max-IoA when only the boxes flagged in `present` exist; absent boxes score 0.
    pub fn max_ioa_among(&self, present: &[bool]) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for &(b, o, f) in &self.edges {
            if present[b] && present[o] {
                out[b] = f64::max(out[b], f);
            }
        }
        out
    }

    /// Whether any box flagged `absent` occludes a box flagged `present`.
    pub fn depends_on(&self, present: &[bool]) -> bool {
        self.edges.iter().any(|&(b, o, _)| present[b] && !present[o])
    }
}

/// For every box, the largest fraction of it covered by a single box in front of it.
pub fn max_ioa(boxes: &[(TrackLabel, BBox)]) -> Result<Vec<f64>> {
    for (_, b) in boxes {
        b.ensure_proper()?;
    }
    Ok(OcclusionGraph::new(boxes).max_ioa())
}

/// `R_a(i) = min(2, n·area_i / Σ area)`.
pub fn area_ratio(areas: &[f64]) -> Vec<f64> {
    let total: f64 = areas.iter().sum();
    let n = areas.len() as f64;
    areas.iter().map(|a| (n * a / total).min(2.0)).collect()
}

/// Trapezoidal membership function with corners `a ≤ b ≤ c ≤ d`.
///
/// `a == b` (or `c == d`) gives a shoulder that is fully on at the left
/// (right) end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trapezoid {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Trapezoid {
    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Trapezoid { a, b, c, d }
    }

    pub fn membership(&self, x: f64) -> f64 {
        if x < self.a || x > self.d {
            0.0
        } else if x >= self.b && x <= self.c {
            1.0
        } else if x < self.b {
            (x - self.a) / (self.b - self.a)
        } else {
            (self.d - x) / (self.d - self.c)
        }
    }

    /// Area under the membership function and its first moment.
    fn moments(&self) -> (f64, f64) {
        let Trapezoid { a, b, c, d } = *self;
        let rise = (b - a) / 2.0;
        let flat = c - b;
        let fall = (d - c) / 2.0;
        let area = rise + flat + fall;
        let moment = rise * (a + 2.0 * (b - a) / 3.0) + flat * (b + c) / 2.0 + fall * (c + (d - c) / 3.0);
        (area, moment)
    }

    fn is_ordered(&self) -> bool {
        self.a <= self.b && self.b <= self.c && self.c <= self.d && self.a.is_finite() && self.d.is_finite()
    }
}

/// One linguistic value of a fuzzy variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    Low,
    Medium,
    High,
}

impl Level {
    fn index(self) -> usize {
        self as usize
    }
}

/// A fuzzy variable over `[lo, hi]` with Low/Medium/High sets.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyVariable {
    pub lo: f64,
    pub hi: f64,
    pub sets: [Trapezoid; 3],
}

impl FuzzyVariable {
    fn memberships(&self, x: f64) -> [f64; 3] {
        let x = x.clamp(self.lo, self.hi);
        self.sets.map(|s| s.membership(x))
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo < self.hi) || !self.sets.iter().all(Trapezoid::is_ordered) {
            return Err(Error::Config(format!("fuzzy variable {name} is malformed")));
        }
        // Coverage: every point of the range must belong to some set.
        let n = 1000;
        for k in 0..=n {
            let x = self.lo + (self.hi - self.lo) * k as f64 / n as f64;
            if self.memberships(x).iter().all(|&m| m <= 0.0) {
                return Err(Error::Config(format!("fuzzy variable {name} does not cover {x}")));
            }
        }
        Ok(())
    }
}

/// Output level per (area-ratio level, IoA level).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleTable {
    pub name: String,
    pub table: [[Level; 3]; 3],
}

impl RuleTable {
    /// One of the tabulated rule sets `R1`–`R5`; `R1` is the default.
    pub fn named(name: &str) -> Option<Self> {
        use Level::{High as H, Low as L, Medium as M};
        let table = match name {
            "R1" => [[M, L, L], [M, M, L], [H, H, L]],
            "R2" => [[M, L, L], [H, M, L], [H, H, M]],
            "R3" => [[M, M, L], [M, M, L], [H, H, M]],
            "R4" => [[L, H, H], [L, L, H], [L, L, H]],
            "R5" => [[M, H, M], [L, L, H], [L, L, H]],
            _ => return None,
        };
        Some(RuleTable { name: name.to_string(), table })
    }
}

/// Configuration of the fuzzy detection-probability model.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyConfig {
    pub area_ratio: FuzzyVariable,
    pub ioa: FuzzyVariable,
    /// Output variable; its range is `[p_min, p_max]`.
    pub detect_prob: FuzzyVariable,
    pub rules: RuleTable,
    /// Query a precomputed 201×201 grid instead of running inference.
    pub lookup: bool,
}

impl Default for FuzzyConfig {
    fn default() -> Self {
        FuzzyConfig {
            area_ratio: FuzzyVariable {
                lo: 0.0,
                hi: 2.0,
                sets: [
                    Trapezoid::new(0.0, 0.0, 0.3, 0.7),
                    Trapezoid::new(0.3, 0.7, 1.2, 1.6),
                    Trapezoid::new(1.2, 1.6, 2.0, 2.0),
                ],
            },
            ioa: FuzzyVariable {
                lo: 0.0,
                hi: 1.0,
                sets: [
                    Trapezoid::new(0.0, 0.0, 0.0, 0.15),
                    Trapezoid::new(0.0, 0.15, 0.6, 0.8),
                    Trapezoid::new(0.6, 0.8, 1.0, 1.0),
                ],
            },
            detect_prob: FuzzyVariable {
                lo: 0.2,
                hi: 0.95,
                sets: [
                    Trapezoid::new(0.2, 0.2, 0.2, 0.3),
                    Trapezoid::new(0.25, 0.4, 0.4, 0.9),
                    Trapezoid::new(0.88, 0.9, 0.95, 0.95),
                ],
            },
            rules: RuleTable::named("R1").expect("R1 exists"),
            lookup: true,
        }
    }
}

impl FuzzyConfig {
    pub fn p_min(&self) -> f64 {
        self.detect_prob.lo
    }

    pub fn p_max(&self) -> f64 {
        self.detect_prob.hi
    }

    pub fn validate(&self) -> Result<()> {
        self.area_ratio.validate("area_ratio")?;
        self.ioa.validate("ioa")?;
        self.detect_prob.validate("detect")?;
        let (lo, hi) = (self.p_min(), self.p_max());
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::Config(format!("detection probability range [{lo}, {hi}] must lie inside (0, 1)")));
        }
        for s in &self.detect_prob.sets {
            if s.a < lo || s.d > hi {
                return Err(Error::Config("output fuzzy sets must lie inside [p_min, p_max]".into()));
            }
        }
        Ok(())
    }
}

const GRID: usize = 201;

/// Fuzzy inference with product implication, additive aggregation and
/// centroid defuzzification.
///
/// Scaling an output set by its firing strength and summing the scaled sets
/// makes the centroid a weighted average of the set centroids, which keeps
/// the surface monotone whenever the rule table is: the clipped-max variant
/// saturates and produces ripples between rule regions.
#[derive(Debug, Clone)]
pub struct FuzzyDetectionModel {
    cfg: FuzzyConfig,
    moments: [(f64, f64); 3],
    grid: Option<Vec<f64>>,
}

impl FuzzyDetectionModel {
    pub fn new(cfg: FuzzyConfig) -> Result<Self> {
        cfg.validate()?;
        let moments = cfg.detect_prob.sets.map(|s| s.moments());
        let mut model = FuzzyDetectionModel { cfg, moments, grid: None };
        if model.cfg.lookup {
            let mut grid = Vec::with_capacity(GRID * GRID);
            for i in 0..GRID {
                let ioa = model.cfg.ioa.lo + (model.cfg.ioa.hi - model.cfg.ioa.lo) * i as f64 / (GRID - 1) as f64;
                for r in 0..GRID {
                    let ra = model.cfg.area_ratio.lo
                        + (model.cfg.area_ratio.hi - model.cfg.area_ratio.lo) * r as f64 / (GRID - 1) as f64;
                    grid.push(model.infer(ioa, ra));
                }
            }
            model.grid = Some(grid);
        }
        Ok(model)
    }

    pub fn config(&self) -> &FuzzyConfig {
        &self.cfg
    }

    /// Exact inference.
    pub fn infer(&self, max_ioa: f64, area_ratio: f64) -> f64 {
        let mu_ioa = self.cfg.ioa.memberships(max_ioa);
        let mu_ra = self.cfg.area_ratio.memberships(area_ratio);
        let (mut area, mut moment) = (0.0, 0.0);
        for (r, row) in self.cfg.rules.table.iter().enumerate() {
            for (c, level) in row.iter().enumerate() {
                let w = mu_ra[r] * mu_ioa[c];
                if w > 0.0 {
                    let (a, m) = self.moments[level.index()];
                    area += w * a;
                    moment += w * m;
                }
            }
        }
        let p = if area > 0.0 { moment / area } else { 0.5 * (self.cfg.p_min() + self.cfg.p_max()) };
        p.clamp(self.cfg.p_min(), self.cfg.p_max())
    }

    /// Detection probability, through the lookup grid when enabled.
    pub fn probability(&self, max_ioa: f64, area_ratio: f64) -> f64 {
        let Some(grid) = &self.grid else {
            return self.infer(max_ioa, area_ratio);
        };
        let scale = |x: f64, v: &FuzzyVariable| ((x.clamp(v.lo, v.hi) - v.lo) / (v.hi - v.lo)) * (GRID - 1) as f64;
        let (fi, fr) = (scale(max_ioa, &self.cfg.ioa), scale(area_ratio, &self.cfg.area_ratio));
        let (i0, r0) = ((fi as usize).min(GRID - 2), (fr as usize).min(GRID - 2));
        let (ti, tr) = (fi - i0 as f64, fr - r0 as f64);
        let at = |i: usize, r: usize| grid[i * GRID + r];
        let top = at(i0, r0) * (1.0 - tr) + at(i0, r0 + 1) * tr;
        let bottom = at(i0 + 1, r0) * (1.0 - tr) + at(i0 + 1, r0 + 1) * tr;
        top * (1.0 - ti) + bottom * ti
    }
}

/// Exact fuzzy detection probability for one `(max-IoA, area ratio)` pair.
pub fn fuzzy_detection_probability(max_ioa: f64, area_ratio: f64, cfg: &FuzzyConfig) -> Result<f64> {
    let cfg = FuzzyConfig { lookup: false, ..cfg.clone() };
    Ok(FuzzyDetectionModel::new(cfg)?.infer(max_ioa, area_ratio))
}
