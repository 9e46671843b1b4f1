//! Adaptive birth from poorly explained measurements and recall of
//! temporarily terminated tracks by appearance.

use std::collections::BTreeMap;

use crate::dynamics::{GaussianDensity, StateMatrix, StateVector, TrackLabel};
use crate::measurement::{AppearanceState, Feature, Measurement};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BirthConfig {
    /// `τ_B`: measurements with association probability below this spawn births.
    pub assoc_threshold: f64,
    /// `P_B,max`
    pub max_birth_prob: f64,
    /// `λ_B`: expected number of births per frame.
    pub expected_births: f64,
    /// Minimum cosine similarity for recalling a terminated track.
    pub recall_similarity: f64,
    /// Frames a terminated track stays recallable.
    pub recall_window: u32,
    /// Position standard deviation as a fraction of the box height.
    pub position_std: f64,
    /// Velocity standard deviation as a fraction of the box height.
    pub velocity_std: f64,
    pub aspect_std: f64,
    pub aspect_rate_std: f64,
}

impl Default for BirthConfig {
    fn default() -> Self {
        BirthConfig {
            assoc_threshold: 0.95,
            max_birth_prob: 0.95,
            expected_births: 0.1,
            recall_similarity: 0.6,
            recall_window: 50,
            position_std: 0.25,
            velocity_std: 0.125,
            aspect_std: 0.05,
            aspect_rate_std: 0.01,
        }
    }
}

impl BirthConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x > 0.0 && x < 1.0;
        let ok = unit(self.assoc_threshold)
            && unit(self.max_birth_prob)
            && unit(self.recall_similarity)
            && self.expected_births > 0.0
            && self.position_std > 0.0
            && self.velocity_std > 0.0
            && self.aspect_std > 0.0
            && self.aspect_rate_std > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid birth config {self:?}")))
        }
    }

    /// Birth density centred on a measurement box with zero rates.
    pub fn birth_density(&self, z: &Measurement) -> GaussianDensity {
        let [u, v, h, beta] = [z.observation[0], z.observation[1], z.observation[2], z.observation[3]];
        let mean = StateVector::from_column_slice(&[u, 0.0, v, 0.0, h, 0.0, beta, 0.0]);
        let (sp, sv) = (self.position_std * h, self.velocity_std * h);
        let var = [sp, sv, sp, sv, sp, sv, self.aspect_std, self.aspect_rate_std].map(|s| s * s);
        GaussianDensity {
            mean,
            covariance: StateMatrix::from_diagonal(&StateVector::from_column_slice(&var)),
        }
    }
}

/// A track that left the filter but may be recalled by appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct TtTrack {
    pub label: TrackLabel,
    pub feature: Feature,
    pub terminated_at: u32,
}

/// Memory of temporarily terminated tracks, keyed by label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TtMemory {
    tracks: BTreeMap<TrackLabel, TtTrack>,
}

impl TtMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn get(&self, label: &TrackLabel) -> Option<&TtTrack> {
        self.tracks.get(label)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TtTrack> {
        self.tracks.values()
    }

    /// Inserts or overwrites an entry.
    pub fn insert(&mut self, track: TtTrack) {
        self.tracks.insert(track.label, track);
    }

    pub fn remove(&mut self, label: &TrackLabel) -> Option<TtTrack> {
        self.tracks.remove(label)
    }
}

/// A track that vanished from the filter this frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VanishedTrack {
    pub label: TrackLabel,
    pub feature: Feature,
    /// Keeps an earlier termination time (a recalled track that failed to
    /// re-enter the filter); `None` means "now".
    pub terminated_at: Option<u32>,
}

/// Stores vanished tracks and forgets those older than the recall window.
pub fn store_and_expire(memory: &mut TtMemory, vanished: &[VanishedTrack], now: u32, cfg: &BirthConfig) {
    for v in vanished {
        memory.insert(TtTrack {
            label: v.label,
            feature: v.feature.clone(),
            terminated_at: v.terminated_at.unwrap_or(now),
        });
    }
    memory
        .tracks
        .retain(|_, t| now.saturating_sub(t.terminated_at) <= cfg.recall_window);
}

/// A recalled track's provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Recall {
    pub similarity: f64,
    pub terminated_at: u32,
}

/// A candidate label for the next frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BirthCandidate {
    pub label: TrackLabel,
    /// `P_B`
    pub existence: f64,
    pub density: GaussianDensity,
    pub appearance: AppearanceState,
    /// Index of the measurement the candidate was created from.
    pub measurement: usize,
    pub recall: Option<Recall>,
}

/// Association probability `r_U` of every measurement: the total weight of
/// the hypotheses that assign it to some label (birth rows included).
pub fn measurement_assoc_prob(num_measurements: usize, hypotheses: &[(f64, Vec<usize>)]) -> Vec<f64> {
    let mut r = vec![0.0; num_measurements];
    for (w, assigned) in hypotheses {
        for &j in assigned {
            r[j] += w;
        }
    }
    r.iter().map(|x| x.clamp(0.0, 1.0)).collect()
}

/// Birth candidates for `next_frame` from the poorly associated measurements of the current frame.
///
/// Terminated tracks are recalled greedily, most similar pair first, and
/// keep their original label; the remaining measurements get fresh labels
/// `(next_frame, i)` in measurement order. Recalled tracks leave `memory`.
pub fn make_birth_candidates(
    z: &[Measurement],
    r_u: &[f64],
    memory: &mut TtMemory,
    cfg: &BirthConfig,
    next_frame: u32,
    mode_probs: [f64; 2],
) -> Vec<BirthCandidate> {
    assert_eq!(z.len(), r_u.len());
    let births: Vec<usize> = (0..z.len()).filter(|&j| r_u[j] < cfg.assoc_threshold).collect();
    if births.is_empty() {
        return Vec::new();
    }
    let unexplained: f64 = r_u.iter().map(|r| 1.0 - r).sum();
    let existence = |j: usize| (cfg.expected_births * (1.0 - r_u[j]) / unexplained).min(cfg.max_birth_prob);

    let mut pairs: Vec<(f64, TrackLabel, usize)> = Vec::new();
    for &j in &births {
        for t in memory.iter() {
            let s = z[j].feature.cosine(&t.feature);
            if s > cfg.recall_similarity {
                pairs.push((s, t.label, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut recalled: Vec<(usize, TrackLabel, f64)> = Vec::new();
    for (s, label, j) in pairs {
        if recalled.iter().any(|r| r.0 == j || r.1 == label) {
            continue;
        }
        recalled.push((j, label, s));
    }

    let mut out = Vec::with_capacity(births.len());
    recalled.sort_by_key(|r| r.0);
    for (j, label, similarity) in recalled.iter().copied() {
        let tt = memory.remove(&label).expect("recalled track is in memory");
        out.push(BirthCandidate {
            label,
            existence: existence(j),
            density: cfg.birth_density(&z[j]),
            appearance: AppearanceState::new(tt.feature, mode_probs),
            measurement: j,
            recall: Some(Recall { similarity, terminated_at: tt.terminated_at }),
        });
    }
    let mut index = 0;
    for &j in &births {
        if recalled.iter().any(|r| r.0 == j) {
            continue;
        }
        out.push(BirthCandidate {
            label: TrackLabel::new(next_frame, index),
            existence: existence(j),
            density: cfg.birth_density(&z[j]),
            appearance: AppearanceState::new(z[j].feature.clone(), mode_probs),
            measurement: j,
            recall: None,
        });
        index += 1;
    }
    out
}
