//! The LMB filter: one Bernoulli component per label, updated through the
//! GLMB machinery and collapsed back by first-moment matching.

use crate::birth::VanishedTrack;
use crate::dynamics::{clamp_estimate, GaussianDensity, StateMatrix, StateVector, TrackLabel};
use crate::glmb::{FilterModel, FrameInput, GlmbDensity, Hypothesis, LabeledTrackDensity, TrackEstimate};
use crate::update::{joint_update, Component, Entry, Row};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LmbTrack {
    /// `r`
    pub existence: f64,
    /// Largest existence probability reached since birth or recall.
    pub max_existence: f64,
    pub track: LabeledTrackDensity,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LmbDensity {
    /// Ascending by label.
    pub tracks: Vec<LmbTrack>,
}

impl LmbDensity {
    pub fn get(&self, label: TrackLabel) -> Option<&LmbTrack> {
        self.tracks.iter().find(|t| t.track.label == label)
    }
}

/// Hysteresis thresholds of the LMB estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// `θ_u`: a label must once have exceeded this existence probability.
    pub upper: f64,
    /// `θ_l`: and currently exceed this one.
    pub lower: f64,
    /// Labels whose existence falls below this leave the density.
    pub existence_floor: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { upper: 0.5, lower: 0.1, existence_floor: 1e-3 }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if 0.0 < self.lower && self.lower <= self.upper && self.upper < 1.0 && (0.0..1.0).contains(&self.existence_floor) {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid estimator config {self:?}")))
        }
    }
}

/// Per-label first moments of a GLMB density: existence
/// `r = Σ ω·1_I(ℓ)`, the weight-averaged mixture collapsed to one Gaussian,
/// and the track of the heaviest hypothesis containing the label.
pub fn aggregate(density: &GlmbDensity) -> Vec<(f64, LabeledTrackDensity)> {
    let mut by_label: std::collections::BTreeMap<TrackLabel, Vec<(f64, usize)>> = Default::default();
    for h in &density.hypotheses {
        for &t in &h.tracks {
            by_label.entry(density.tracks[t].label).or_default().push((h.weight, t));
        }
    }
    by_label
        .into_values()
        .map(|members| {
            let r: f64 = members.iter().map(|m| m.0).sum();
            let mut mean = StateVector::zeros();
            for &(w, t) in &members {
                mean += density.tracks[t].kinematic.mean * w;
            }
            mean /= r;
            let mut cov = StateMatrix::zeros();
            for &(w, t) in &members {
                let k = &density.tracks[t].kinematic;
                let d = k.mean - mean;
                cov += (k.covariance + d * d.transpose()) * w;
            }
            cov /= r;
            cov = (cov + cov.transpose()) * 0.5;
            let best = members.iter().fold(members[0], |b, &m| if m.0 > b.0 { m } else { b });
            let representative = &density.tracks[best.1];
            (
                r,
                LabeledTrackDensity {
                    kinematic: GaussianDensity { mean, covariance: cov },
                    ..representative.clone()
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct LmbUpdate {
    pub density: LmbDensity,
    pub assoc_probs: Vec<f64>,
    /// The GLMB the posterior was aggregated from.
    pub intermediate: GlmbDensity,
    pub vanished: Vec<VanishedTrack>,
}

/// One LMB update: every prior label becomes a row with existence `r·P̄_S`
/// in a single component, so the children of that component form the
/// exact GLMB posterior of the LMB prior, up to truncation.
pub fn lmb_update(
    prior: &LmbDensity,
    input: &FrameInput,
    model: &FilterModel,
    estimator: &EstimatorConfig,
) -> Result<LmbUpdate> {
    let mut entries: Vec<Entry> = prior.tracks.iter().map(|t| model.predict_track(&t.track)).collect();
    entries.extend(input.births.iter().map(|b| model.birth_entry(b, input.frame)));
    let avg_area = input.reference_area(&entries);
    let mut rows: Vec<Row> = prior
        .tracks
        .iter()
        .enumerate()
        .map(|(i, t)| Row { entry: i, existence: t.existence * model.survival(&t.track, input.frame, avg_area) })
        .collect();
    let first_birth = prior.tracks.len();
    rows.extend(input.births.iter().enumerate().map(|(b, c)| Row { entry: first_birth + b, existence: c.existence }));
    let component = Component { log_weight: 0.0, rows, budget: model.max_hypotheses };
    let post = joint_update(&entries, &[component], input.measurements, input.frame, avg_area, model, input.seed)?;

    let mut assoc_probs = vec![0.0; input.measurements.len()];
    for c in &post.children {
        for &j in &c.assigned {
            assoc_probs[j] += c.weight;
        }
    }
    for r in &mut assoc_probs {
        *r = r.clamp(0.0, 1.0);
    }
    let mut intermediate = GlmbDensity {
        hypotheses: post.children.into_iter().map(|c| Hypothesis { tracks: c.tracks, weight: c.weight }).collect(),
        tracks: post.tracks,
    };
    intermediate.hypotheses.sort_by(|a, b| b.weight.total_cmp(&a.weight));

    let mut tracks = Vec::new();
    let mut vanished = Vec::new();
    for (r, track) in aggregate(&intermediate) {
        let previous = prior.get(track.label).map(|t| t.max_existence).unwrap_or(0.0);
        let birth = input.births.iter().find(|b| b.label == track.label);
        if r < estimator.existence_floor {
            if birth.is_none() || birth.is_some_and(|b| b.recall.is_some()) {
                vanished.push(VanishedTrack {
                    label: track.label,
                    feature: track.appearance.feature.clone(),
                    terminated_at: birth.and_then(|b| b.recall.as_ref().map(|r| r.terminated_at)),
                });
            }
            continue;
        }
        let max_existence = if birth.is_some() { r } else { previous.max(r) };
        tracks.push(LmbTrack { existence: r.min(1.0), max_existence: max_existence.min(1.0), track });
    }
    // Labels absent from every child.
    for t in &prior.tracks {
        if !intermediate.label_set().contains(&t.track.label) {
            vanished.push(VanishedTrack { label: t.track.label, feature: t.track.appearance.feature.clone(), terminated_at: None });
        }
    }
    for b in input.births {
        if let Some(recall) = &b.recall {
            if !tracks.iter().any(|t: &LmbTrack| t.track.label == b.label) && !vanished.iter().any(|v| v.label == b.label) {
                vanished.push(VanishedTrack {
                    label: b.label,
                    feature: b.appearance.feature.clone(),
                    terminated_at: Some(recall.terminated_at),
                });
            }
        }
    }
    vanished.sort_by_key(|v| v.label);
    Ok(LmbUpdate { density: LmbDensity { tracks }, assoc_probs, intermediate, vanished })
}

/// Labels whose existence once exceeded `θ_u` and still exceeds `θ_l`.
pub fn lmb_estimate(density: &LmbDensity, cfg: &EstimatorConfig, min_aspect: f64) -> Vec<TrackEstimate> {
    density
        .tracks
        .iter()
        .filter(|t| t.max_existence > cfg.upper && t.existence > cfg.lower)
        .map(|t| TrackEstimate { label: t.track.label, state: clamp_estimate(&t.track.kinematic.mean, min_aspect) })
        .collect()
}
