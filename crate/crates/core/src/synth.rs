//! Synthetic scenarios: constant-velocity objects with fixed appearance
//! embeddings, detector noise, clutter, and scheduled detection gaps.
//!
//! Scenarios are described in the same `key = value` format as the run
//! configuration:
//!
//! ```text
//! frames = 200
//! seed = 7
//! clutter_rate = 2
//! object = 300, 600, 200, 2.5, 2.0, 0.0    # u, v, h, beta, du, dv [, dh]
//! object = 900, 500, 160, 2.5, -0.5, 0.0
//! miss = 2: 80-99                          # object 2 undetected in frames 80..=99
//! occlusion = 1: 40-69
//! ```
//!
//! Without `object` lines, `objects = N` random paths are drawn inside the image.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::geometry::BBox;
use crate::io::{DetectionSequence, FrameDetections};
use crate::measurement::{Feature, Measurement};
use crate::metrics::TrackRecord;
use crate::{Error, Result};

/// A constant-velocity path of `[u, v, h, β]` starting at the first frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectPath {
    pub start: [f64; 4],
    /// Per-frame rates of `(u, v, h)`.
    pub velocity: [f64; 3],
}

impl ObjectPath {
    pub fn at(&self, t: f64) -> BBox {
        let [u, v, h, beta] = self.start;
        BBox::from_center(u + self.velocity[0] * t, v + self.velocity[1] * t, h + self.velocity[2] * t, beta)
    }
}

/// Frames `start..=end` of object `object` (1-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub object: usize,
    pub start: u32,
    pub end: u32,
}

impl Window {
    fn covers(&self, object: usize, frame: u32) -> bool {
        self.object == object && (self.start..=self.end).contains(&frame)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub frames: u32,
    pub first_frame: u32,
    pub seed: u64,
    pub width: f64,
    pub height: f64,
    pub objects: Vec<ObjectPath>,
    /// Number of random paths when `objects` is empty.
    pub random_objects: usize,
    /// Mean number of clutter detections per frame.
    pub clutter_rate: f64,
    pub feature_dim: usize,
    /// Cosine similarity between any two object embeddings.
    pub feature_separation: f64,
    /// Norm of the per-detection embedding perturbation.
    pub feature_noise: f64,
    /// Observation variances of `[u, v, h, β]` for detector noise.
    pub obs_noise: [f64; 4],
    /// Multiplies the detector noise standard deviations (0 = exact boxes).
    pub noise_scale: f64,
    /// Probability of detecting a visible object.
    pub detect_prob: f64,
    pub misses: Vec<Window>,
    pub occlusions: Vec<Window>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            frames: 100,
            first_frame: 1,
            seed: 0,
            width: 1920.0,
            height: 1080.0,
            objects: Vec::new(),
            random_objects: 5,
            clutter_rate: 2.0,
            feature_dim: 32,
            feature_separation: 0.1,
            feature_noise: 0.1,
            obs_noise: [50.0, 50.0, 50.0, 1e-3],
            noise_scale: 1.0,
            detect_prob: 1.0,
            misses: Vec::new(),
            occlusions: Vec::new(),
        }
    }
}

fn config_err(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("scenario line {line}: {msg}"))
}

fn numbers(line: usize, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| s.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| config_err(line, format!("bad number '{}'", s.trim()))))
        .collect()
}

fn window(line: usize, v: &str) -> Result<Window> {
    let bad = || config_err(line, format!("expected 'object: start-end', got '{v}'"));
    let (obj, range) = v.split_once(':').ok_or_else(bad)?;
    let (a, b) = range.split_once('-').ok_or_else(bad)?;
    let w = Window {
        object: obj.trim().parse().map_err(|_| bad())?,
        start: a.trim().parse().map_err(|_| bad())?,
        end: b.trim().parse().map_err(|_| bad())?,
    };
    if w.object == 0 || w.start > w.end {
        return Err(bad());
    }
    Ok(w)
}

impl ScenarioSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = ScenarioSpec::default();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or_else(|| config_err(line, "expected key = value"))?;
            let (k, v) = (k.trim(), v.trim());
            let one = || -> Result<f64> {
                let x = numbers(line, v)?;
                if x.len() == 1 {
                    Ok(x[0])
                } else {
                    Err(config_err(line, format!("{k} takes one number")))
                }
            };
            let int = || -> Result<u64> {
                v.parse().map_err(|_| config_err(line, format!("{k} takes a non-negative integer")))
            };
            match k {
                "frames" => s.frames = int()? as u32,
                "first_frame" => s.first_frame = int()? as u32,
                "seed" => s.seed = int()?,
                "width" => s.width = one()?,
                "height" => s.height = one()?,
                "objects" => s.random_objects = int()? as usize,
                "clutter_rate" => s.clutter_rate = one()?,
                "feature_dim" => s.feature_dim = int()? as usize,
                "feature_separation" => s.feature_separation = one()?,
                "feature_noise" => s.feature_noise = one()?,
                "noise_scale" => s.noise_scale = one()?,
                "detect_prob" => s.detect_prob = one()?,
                "obs_noise" => {
                    s.obs_noise = numbers(line, v)?.try_into().map_err(|_| config_err(line, "obs_noise takes 4 numbers"))?
                }
                "object" => {
                    let x = numbers(line, v)?;
                    if x.len() != 6 && x.len() != 7 {
                        return Err(config_err(line, "object takes u, v, h, beta, du, dv [, dh]"));
                    }
                    s.objects.push(ObjectPath {
                        start: [x[0], x[1], x[2], x[3]],
                        velocity: [x[4], x[5], x.get(6).copied().unwrap_or(0.0)],
                    });
                }
                "miss" => s.misses.push(window(line, v)?),
                "occlusion" => s.occlusions.push(window(line, v)?),
                _ => return Err(config_err(line, format!("unknown key '{k}'"))),
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.width > 0.0
            && self.height > 0.0
            && self.clutter_rate >= 0.0
            && self.feature_dim >= 2
            && (0.0..1.0).contains(&self.feature_separation)
            && self.feature_noise >= 0.0
            && self.noise_scale >= 0.0
            && self.obs_noise.iter().all(|&r| r >= 0.0)
            && (0.0..=1.0).contains(&self.detect_prob);
        if !ok {
            return Err(Error::Config("invalid scenario parameters".into()));
        }
        for (i, o) in self.objects.iter().enumerate() {
            let last = o.at(self.frames.saturating_sub(1) as f64);
            if !(o.start[2] > 0.0 && o.start[3] > 0.0 && last.h > 0.0) {
                return Err(Error::Config(format!("object {} has a non-positive size", i + 1)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub detections: DetectionSequence,
    pub ground_truth: Vec<TrackRecord>,
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    (0..dim).map(|_| n.sample(rng)).collect()
}

/// Orthonormal vectors by Gram–Schmidt on Gaussian draws.
fn orthonormal(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = unit_gaussian(rng, dim);
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
}

fn random_paths(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Vec<ObjectPath> {
    let span = spec.frames.saturating_sub(1).max(1) as f64;
    (0..spec.random_objects)
        .map(|_| {
            let h = rng.random_range(120.0..280.0);
            let beta = rng.random_range(2.2..3.0);
            let mut point = || {
                (
                    rng.random_range(0.15 * spec.width..0.85 * spec.width),
                    rng.random_range(0.3 * spec.height..0.7 * spec.height),
                )
            };
            let (a, b) = (point(), point());
            ObjectPath { start: [a.0, a.1, h, beta], velocity: [(b.0 - a.0) / span, (b.1 - a.1) / span, 0.0] }
        })
        .collect()
}

/// Generates detections and ground truth; deterministic given the spec.
pub fn synth_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let paths = if spec.objects.is_empty() { random_paths(spec, &mut rng) } else { spec.objects.clone() };
    let dim = spec.feature_dim;
    // A shared direction gives every pair the same similarity.
    let basis = orthonormal(&mut rng, paths.len() + 1, dim);
    let (shared, own) = (spec.feature_separation.sqrt(), (1.0 - spec.feature_separation).sqrt());
    let features: Vec<Vec<f64>> = (0..paths.len())
        .map(|i| basis[0].iter().zip(&basis[i + 1]).map(|(s, e)| shared * s + own * e).collect())
        .collect();

    let std: Vec<f64> = spec.obs_noise.iter().map(|r| r.sqrt() * spec.noise_scale).collect();
    let feature_std = spec.feature_noise / (dim as f64).sqrt();
    let clutter = (spec.clutter_rate > 0.0).then(|| Poisson::new(spec.clutter_rate).expect("positive rate"));
    let mut ground_truth: Vec<TrackRecord> = (0..paths.len()).map(|i| TrackRecord::new(i as u64 + 1)).collect();
    let mut frames = Vec::with_capacity(spec.frames as usize);
    for k in 0..spec.frames {
        let frame = spec.first_frame + k;
        let mut measurements = Vec::new();
        for (i, path) in paths.iter().enumerate() {
            let truth = path.at(k as f64);
            ground_truth[i].boxes.insert(frame, truth);
            let object = i + 1;
            let draw: f64 = rng.random();
            let suppressed = spec.misses.iter().chain(&spec.occlusions).any(|w| w.covers(object, frame));
            if suppressed || draw >= spec.detect_prob {
                continue;
            }
            let obs = truth.to_observation();
            let mut noisy = [0.0; 4];
            for c in 0..4 {
                let e: f64 = if std[c] > 0.0 { Normal::new(0.0, std[c]).expect("std").sample(&mut rng) } else { 0.0 };
                noisy[c] = obs[c] + e;
            }
            noisy[2] = noisy[2].max(1.0);
            noisy[3] = noisy[3].max(0.05);
            let b = if std.iter().all(|&s| s == 0.0) { truth } else { BBox::from_center(noisy[0], noisy[1], noisy[2], noisy[3]) };
            let mut f = features[i].clone();
            if feature_std > 0.0 {
                let n = Normal::new(0.0, feature_std).expect("std");
                f.iter_mut().for_each(|x| *x += n.sample(&mut rng));
            }
            measurements.push(Measurement::from_box(&b, Feature::normalized(f)?, 1.0));
        }
        let count = clutter.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
        for _ in 0..count {
            let h = rng.random_range(60.0..250.0);
            let beta = rng.random_range(1.5..3.5);
            let u = rng.random_range(0.0..spec.width);
            let v = rng.random_range(0.0..spec.height);
            let f = Feature::normalized(unit_gaussian(&mut rng, dim))?;
            measurements.push(Measurement::from_box(&BBox::from_center(u, v, h, beta), f, rng.random_range(0.3..0.9)));
        }
        frames.push(FrameDetections { frame, measurements });
    }
    Ok(Scenario { detections: DetectionSequence { dim, frames }, ground_truth })
}
