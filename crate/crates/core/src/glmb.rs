//! The GLMB filter: hypotheses over label sets with per-lineage track densities.

use std::collections::{BTreeMap, BTreeSet};

use crate::birth::{BirthCandidate, VanishedTrack};
use crate::dynamics::{
    clamp_estimate, predict_unchecked, state_box, survival_probability, MotionModel, StateMatrix, StateVector,
    SurvivalConfig, TrackLabel,
};
use crate::measurement::{AppearanceState, Measurement, MeasurementConfig};
use crate::occlusion::{FuzzyConfig, FuzzyDetectionModel};
use crate::update::{joint_update, Component, Entry, Row};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    /// Murty when `rows × measurements ≤ murty_max_size`, Gibbs otherwise.
    Auto,
    Murty,
    Gibbs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub murty_max_size: usize,
    /// Gibbs sweeps per requested hypothesis.
    pub gibbs_factor: usize,
    pub gibbs_max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            kind: SolverKind::Auto,
            murty_max_size: 2500,
            gibbs_factor: 10,
            gibbs_max_iterations: 100_000,
        }
    }
}

/// Every model parameter shared by the filters.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub motion: MotionModel,
    pub survival: SurvivalConfig,
    pub measurement: MeasurementConfig,
    pub fuzzy: FuzzyConfig,
    pub solver: SolverConfig,
    /// `N_h`
    pub max_hypotheses: usize,
    /// Hypotheses lighter than this fraction of the heaviest are dropped.
    pub weight_floor: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            motion: MotionModel::default(),
            survival: SurvivalConfig::default(),
            measurement: MeasurementConfig::default(),
            fuzzy: FuzzyConfig::default(),
            solver: SolverConfig::default(),
            max_hypotheses: 500,
            weight_floor: 1e-6,
        }
    }
}

/// A validated [`FilterConfig`] with derived quantities precomputed.
#[derive(Debug, Clone)]
pub struct FilterModel {
    pub motion: MotionModel,
    pub survival: SurvivalConfig,
    pub measurement: MeasurementConfig,
    pub fuzzy: FuzzyDetectionModel,
    pub solver: SolverConfig,
    pub max_hypotheses: usize,
    pub weight_floor: f64,
    transition: StateMatrix,
    process_noise: StateMatrix,
}

impl FilterModel {
    pub fn new(cfg: &FilterConfig) -> Result<Self> {
        cfg.motion.validate()?;
        cfg.survival.validate()?;
        cfg.measurement.validate()?;
        if cfg.max_hypotheses == 0 {
            return Err(Error::Config("the hypothesis budget must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&cfg.weight_floor) {
            return Err(Error::Config("weight floor must lie in [0, 1)".into()));
        }
        Ok(FilterModel {
            motion: cfg.motion.clone(),
            survival: cfg.survival.clone(),
            measurement: cfg.measurement.clone(),
            fuzzy: FuzzyDetectionModel::new(cfg.fuzzy.clone())?,
            solver: cfg.solver.clone(),
            max_hypotheses: cfg.max_hypotheses,
            weight_floor: cfg.weight_floor,
            transition: cfg.motion.transition(),
            process_noise: cfg.motion.process_noise(),
        })
    }

    pub(crate) fn predict_track(&self, track: &LabeledTrackDensity) -> Entry {
        Entry {
            label: track.label,
            density: predict_unchecked(&track.kinematic, &self.transition, &self.process_noise),
            appearance: AppearanceState::new(track.appearance.feature.clone(), self.measurement.predicted_modes()),
            lineage: track.lineage,
            last_associated: track.last_associated,
        }
    }

    pub(crate) fn birth_entry(&self, b: &BirthCandidate, frame: u32) -> Entry {
        Entry {
            label: b.label,
            density: b.density.clone(),
            appearance: b.appearance.clone(),
            lineage: Lineage::root(b.label),
            last_associated: frame,
        }
    }

    pub(crate) fn survival(&self, track: &LabeledTrackDensity, frame: u32, avg_area: f64) -> f64 {
        survival_probability(&track.kinematic.mean, track.label, frame, avg_area, &self.survival)
    }
}

/// Identifier of a track's association history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lineage(pub u64);

fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl Lineage {
    /// History of a newly born label.
    pub fn root(label: TrackLabel) -> Self {
        Lineage(mix(((label.birth_time as u64) << 32) | label.index as u64))
    }

    /// History extended by the association at `frame` (`None` = missed).
    pub fn extend(self, frame: u32, measurement: Option<usize>) -> Self {
        let event = ((frame as u64) << 32) | measurement.map_or(0, |j| j as u64 + 1);
        Lineage(mix(self.0 ^ mix(event)))
    }
}

/// The density of one label under one association history.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrackDensity {
    pub label: TrackLabel,
    pub kinematic: crate::dynamics::GaussianDensity,
    pub appearance: AppearanceState,
    pub last_associated: u32,
    pub lineage: Lineage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Indices into [`GlmbDensity::tracks`], ascending by label.
    pub tracks: Vec<usize>,
    pub weight: f64,
}

impl Hypothesis {
    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmbDensity {
    /// Descending by weight.
    pub hypotheses: Vec<Hypothesis>,
    pub tracks: Vec<LabeledTrackDensity>,
}

impl Default for GlmbDensity {
    fn default() -> Self {
        Self::empty()
    }
}

/// A point estimate of one track.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackEstimate {
    pub label: TrackLabel,
    pub state: StateVector,
}

impl GlmbDensity {
    /// The density with no objects.
    pub fn empty() -> Self {
        GlmbDensity {
            hypotheses: vec![Hypothesis { tracks: Vec::new(), weight: 1.0 }],
            tracks: Vec::new(),
        }
    }

    pub fn labels(&self, h: &Hypothesis) -> Vec<TrackLabel> {
        h.tracks.iter().map(|&t| self.tracks[t].label).collect()
    }

    /// Every label appearing in some hypothesis.
    pub fn label_set(&self) -> BTreeSet<TrackLabel> {
        self.hypotheses.iter().flat_map(|h| h.tracks.iter().map(|&t| self.tracks[t].label)).collect()
    }

    /// Checks weights, label distinctness and track references.
    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.hypotheses.iter().map(|h| h.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Model(format!("hypothesis weights sum to {total}")));
        }
        for h in &self.hypotheses {
            if h.weight < 0.0 || h.tracks.iter().any(|&t| t >= self.tracks.len()) {
                return Err(Error::Model("invalid hypothesis".into()));
            }
            let labels = self.labels(h);
            if labels.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Model("hypothesis labels are not distinct and sorted".into()));
            }
        }
        Ok(())
    }

    /// Cardinality distribution `ρ(n)`, indexed by `n`.
    pub fn cardinality(&self) -> Vec<f64> {
        let n = self.hypotheses.iter().map(Hypothesis::len).max().unwrap_or(0);
        let mut rho = vec![0.0; n + 1];
        for h in &self.hypotheses {
            rho[h.len()] += h.weight;
        }
        rho
    }

    /// MAP cardinality (smaller on ties), then the heaviest hypothesis of that size.
    pub fn estimate(&self, min_aspect: f64) -> Vec<TrackEstimate> {
        let rho = self.cardinality();
        let mut n_hat = 0;
        for (n, &p) in rho.iter().enumerate() {
            if p > rho[n_hat] {
                n_hat = n;
            }
        }
        let best = self
            .hypotheses
            .iter()
            .filter(|h| h.len() == n_hat)
            .fold(None::<&Hypothesis>, |best, h| match best {
                Some(b) if b.weight >= h.weight => Some(b),
                _ => Some(h),
            });
        best.map(|h| {
            h.tracks
                .iter()
                .map(|&t| TrackEstimate {
                    label: self.tracks[t].label,
                    state: clamp_estimate(&self.tracks[t].kinematic.mean, min_aspect),
                })
                .collect()
        })
        .unwrap_or_default()
    }

    /// Most significant density of every label: from the heaviest hypothesis containing it.
    pub fn most_significant(&self) -> BTreeMap<TrackLabel, &LabeledTrackDensity> {
        let mut out = BTreeMap::new();
        for h in &self.hypotheses {
            for &t in &h.tracks {
                out.entry(self.tracks[t].label).or_insert(&self.tracks[t]);
            }
        }
        out
    }

    /// Drops unreferenced tracks and renumbers the rest.
    fn compact(&mut self) {
        let mut map = vec![usize::MAX; self.tracks.len()];
        let mut kept = Vec::new();
        for h in &mut self.hypotheses {
            for t in &mut h.tracks {
                if map[*t] == usize::MAX {
                    map[*t] = kept.len();
                    kept.push(self.tracks[*t].clone());
                }
                *t = map[*t];
            }
        }
        self.tracks = kept;
    }

    fn sort_by_weight(&mut self) {
        self.hypotheses.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    }
}

/// Keeps the `max_hypotheses` heaviest hypotheses above `weight_floor × max
/// weight`, renormalizes, and reports the labels no kept hypothesis contains
/// with the feature of their most significant hypothesis.
pub fn normalize_prune(
    mut density: GlmbDensity,
    max_hypotheses: usize,
    weight_floor: f64,
) -> (GlmbDensity, Vec<VanishedTrack>) {
    density.sort_by_weight();
    let significant: BTreeMap<TrackLabel, _> =
        density.most_significant().into_iter().map(|(l, t)| (l, t.appearance.feature.clone())).collect();
    let max_w = density.hypotheses.first().map_or(0.0, |h| h.weight);
    density.hypotheses.truncate(max_hypotheses.max(1));
    density.hypotheses.retain(|h| h.weight >= weight_floor * max_w);
    let total: f64 = density.hypotheses.iter().map(|h| h.weight).sum();
    if total > 0.0 {
        for h in &mut density.hypotheses {
            h.weight /= total;
        }
    }
    density.compact();
    let kept = density.label_set();
    let vanished = significant
        .into_iter()
        .filter(|(l, _)| !kept.contains(l))
        .map(|(label, feature)| VanishedTrack { label, feature, terminated_at: None })
        .collect();
    (density, vanished)
}

/// Inputs of one filter update.
#[derive(Debug, Clone, Copy)]
pub struct FrameInput<'a> {
    /// The frame being updated to.
    pub frame: u32,
    pub measurements: &'a [Measurement],
    pub births: &'a [BirthCandidate],
    /// Average estimated object area of the previous frame, if any.
    pub avg_area: Option<f64>,
    pub seed: u64,
}

impl FrameInput<'_> {
    /// The previous average area, or the mean area of the rows this frame.
    pub(crate) fn reference_area(&self, entries: &[Entry]) -> f64 {
        match self.avg_area {
            Some(a) if a > 0.0 => a,
            _ => {
                let areas: Vec<f64> = entries.iter().map(|e| state_box(&e.density.mean).area().abs()).collect();
                let mean = areas.iter().sum::<f64>() / areas.len().max(1) as f64;
                if mean > 0.0 && mean.is_finite() {
                    mean
                } else {
                    1.0
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlmbUpdate {
    pub density: GlmbDensity,
    /// `r_U` of every measurement of the frame.
    pub assoc_probs: Vec<f64>,
    pub vanished: Vec<VanishedTrack>,
}

/// Number of children requested from each parent: proportional to the square
/// root of its weight, at least one.
fn budgets(weights: &[f64], total_budget: usize) -> Vec<usize> {
    let roots: Vec<f64> = weights.iter().map(|w| w.max(0.0).sqrt()).collect();
    let sum: f64 = roots.iter().sum();
    roots
        .iter()
        .map(|r| if sum > 0.0 { ((total_budget as f64 * r / sum).ceil() as usize).max(1) } else { 1 })
        .collect()
}

/// One joint prediction–update step of the GLMB filter.
pub fn glmb_update(prior: &GlmbDensity, input: &FrameInput, model: &FilterModel) -> Result<GlmbUpdate> {
    let bootstrap;
    let prior = if prior.hypotheses.is_empty() {
        bootstrap = GlmbDensity::empty();
        &bootstrap
    } else {
        prior
    };
    let mut entries: Vec<Entry> = prior.tracks.iter().map(|t| model.predict_track(t)).collect();
    let first_birth = entries.len();
    entries.extend(input.births.iter().map(|b| model.birth_entry(b, input.frame)));
    let avg_area = input.reference_area(&entries);
    let survival: Vec<f64> = prior.tracks.iter().map(|t| model.survival(t, input.frame, avg_area)).collect();

    let weights: Vec<f64> = prior.hypotheses.iter().map(|h| h.weight).collect();
    let components: Vec<Component> = prior
        .hypotheses
        .iter()
        .zip(budgets(&weights, model.max_hypotheses))
        .map(|(h, budget)| {
            let mut rows: Vec<Row> = h.tracks.iter().map(|&t| Row { entry: t, existence: survival[t] }).collect();
            rows.extend(
                input
                    .births
                    .iter()
                    .enumerate()
                    .map(|(b, cand)| Row { entry: first_birth + b, existence: cand.existence }),
            );
            Component { log_weight: h.weight.ln(), rows, budget }
        })
        .collect();
    let post = joint_update(&entries, &components, input.measurements, input.frame, avg_area, model, input.seed)?;

    let mut assoc_probs = vec![0.0; input.measurements.len()];
    for c in &post.children {
        for &j in &c.assigned {
            assoc_probs[j] += c.weight;
        }
    }
    for r in &mut assoc_probs {
        *r = r.clamp(0.0, 1.0);
    }

    let unpruned = GlmbDensity {
        hypotheses: post.children.into_iter().map(|c| Hypothesis { tracks: c.tracks, weight: c.weight }).collect(),
        tracks: post.tracks,
    };
    let (density, mut vanished) = normalize_prune(unpruned.clone(), model.max_hypotheses, model.weight_floor);

    // Labels that died in every child never reach the posterior at all.
    let alive = unpruned.label_set();
    let prior_significant = prior.most_significant();
    for (label, track) in prior_significant {
        if !alive.contains(&label) {
            vanished.push(VanishedTrack { label, feature: track.appearance.feature.clone(), terminated_at: None });
        }
    }
    let kept = density.label_set();
    for b in input.births {
        let Some(recall) = &b.recall else { continue };
        match vanished.iter_mut().find(|v| v.label == b.label) {
            Some(v) => v.terminated_at = Some(recall.terminated_at),
            None if !kept.contains(&b.label) => vanished.push(VanishedTrack {
                label: b.label,
                feature: b.appearance.feature.clone(),
                terminated_at: Some(recall.terminated_at),
            }),
            None => {}
        }
    }
    // Fresh births that never established themselves are not tracks.
    vanished.retain(|v| {
        prior.tracks.iter().any(|t| t.label == v.label) || input.births.iter().any(|b| b.label == v.label && b.recall.is_some())
    });
    vanished.sort_by_key(|v| v.label);
    Ok(GlmbUpdate { density, assoc_probs, vanished })
}
