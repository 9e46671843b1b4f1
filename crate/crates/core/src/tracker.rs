//! The online filter loop: update, estimate, re-identification memory and
//! adaptive birth for the next frame.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use crate::birth::{make_birth_candidates, store_and_expire, BirthCandidate, TtMemory};
use crate::config::{FilterKind, RunConfig};
use crate::dynamics::{state_box, TrackLabel};
use crate::glmb::{glmb_update, FilterModel, FrameInput, GlmbDensity, TrackEstimate};
use crate::io::DetectionSequence;
use crate::lmb::{lmb_estimate, lmb_update, LmbDensity};
use crate::measurement::Measurement;
use crate::Result;

#[derive(Debug, Clone)]
enum FilterState {
    Glmb(GlmbDensity),
    Lmb(LmbDensity),
}

/// A terminated track brought back by appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallEvent {
    /// Frame whose measurement triggered the recall.
    pub frame: u32,
    pub label: TrackLabel,
    pub similarity: f64,
}

#[derive(Debug, Clone)]
pub struct FrameReport {
    pub frame: u32,
    pub estimates: Vec<TrackEstimate>,
    /// Hypotheses (GLMB) or labels (LMB) carried to the next frame.
    pub components: usize,
    pub recalls: Vec<RecallEvent>,
}

pub struct Tracker {
    cfg: RunConfig,
    model: FilterModel,
    state: FilterState,
    memory: TtMemory,
    pending: Vec<BirthCandidate>,
    avg_area: Option<f64>,
    /// Labels that appeared in at least one estimate.
    reported: HashSet<TrackLabel>,
}

impl Tracker {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let model = cfg.filter_model()?;
        let state = match cfg.filter {
            FilterKind::Glmb => FilterState::Glmb(GlmbDensity::empty()),
            FilterKind::Lmb => FilterState::Lmb(LmbDensity::default()),
        };
        Ok(Tracker { cfg, model, state, memory: TtMemory::new(), pending: Vec::new(), avg_area: None, reported: HashSet::new() })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn glmb(&self) -> Option<&GlmbDensity> {
        match &self.state {
            FilterState::Glmb(d) => Some(d),
            FilterState::Lmb(_) => None,
        }
    }

    pub fn lmb(&self) -> Option<&LmbDensity> {
        match &self.state {
            FilterState::Lmb(d) => Some(d),
            FilterState::Glmb(_) => None,
        }
    }

    pub fn memory(&self) -> &TtMemory {
        &self.memory
    }

    /// Candidates that will be offered as births in the next frame.
    pub fn pending_births(&self) -> &[BirthCandidate] {
        &self.pending
    }

    /// Processes the measurements of `frame` (consecutive frames expected).
    pub fn step(&mut self, frame: u32, z: &[Measurement]) -> Result<FrameReport> {
        let births = std::mem::take(&mut self.pending);
        let input = FrameInput { frame, measurements: z, births: &births, avg_area: self.avg_area, seed: self.cfg.seed };
        let min_aspect = self.model.survival.min_aspect;
        let (estimates, assoc_probs, vanished, components) = match &self.state {
            FilterState::Glmb(prior) => {
                let up = glmb_update(prior, &input, &self.model)?;
                let est = up.density.estimate(min_aspect);
                let n = up.density.hypotheses.len();
                self.state = FilterState::Glmb(up.density);
                (est, up.assoc_probs, up.vanished, n)
            }
            FilterState::Lmb(prior) => {
                let up = lmb_update(prior, &input, &self.model, &self.cfg.estimator)?;
                let est = lmb_estimate(&up.density, &self.cfg.estimator, min_aspect);
                let n = up.density.tracks.len();
                self.state = FilterState::Lmb(up.density);
                (est, up.assoc_probs, up.vanished, n)
            }
        };
        // Only tracks that were ever reported have an identity worth recalling;
        // unreported duplicates would otherwise steal it.
        let vanished: Vec<_> = vanished.into_iter().filter(|v| self.reported.contains(&v.label)).collect();
        store_and_expire(&mut self.memory, &vanished, frame, &self.cfg.birth);
        self.reported.extend(estimates.iter().map(|e| e.label));
        if !estimates.is_empty() {
            let total: f64 = estimates.iter().map(|e| state_box(&e.state).area()).sum();
            self.avg_area = Some(total / estimates.len() as f64);
        }
        self.pending = make_birth_candidates(
            z,
            &assoc_probs,
            &mut self.memory,
            &self.cfg.birth,
            frame + 1,
            self.model.measurement.predicted_modes(),
        );
        let recalls = self
            .pending
            .iter()
            .filter_map(|b| b.recall.as_ref().map(|r| RecallEvent { frame, label: b.label, similarity: r.similarity }))
            .collect();
        Ok(FrameReport { frame, estimates, components, recalls })
    }
}

/// Result of running a tracker over a whole sequence.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub estimates: Vec<(u32, Vec<TrackEstimate>)>,
    pub recalls: Vec<RecallEvent>,
    /// Compute time of every frame.
    pub timings: Vec<Duration>,
}

/// Runs a fresh tracker over `seq`, calling `on_frame` after every frame.
pub fn run_sequence(
    seq: &DetectionSequence,
    cfg: &RunConfig,
    mut on_frame: impl FnMut(&FrameReport, Duration),
) -> Result<RunOutput> {
    let mut tracker = Tracker::new(cfg.clone())?;
    let mut out = RunOutput::default();
    for f in &seq.frames {
        let start = Instant::now();
        let report = tracker.step(f.frame, &f.measurements)?;
        let elapsed = start.elapsed();
        on_frame(&report, elapsed);
        out.timings.push(elapsed);
        out.recalls.extend(report.recalls.iter().cloned());
        out.estimates.push((report.frame, report.estimates));
    }
    Ok(out)
}
