//! Random toy scenes and a brute-force posterior used as an oracle for the
//! filter updates. The oracle enumerates every association of every prior
//! hypothesis directly and shares no code with the filter beyond the model
//! parameters, the fuzzy inference model and the lineage hash.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use lrfs_mot::birth::{BirthCandidate, BirthConfig};
use lrfs_mot::dynamics::{GaussianDensity, StateMatrix, StateVector, TrackLabel};
use lrfs_mot::geometry::BBox;
use lrfs_mot::glmb::{FilterModel, GlmbDensity, Hypothesis, LabeledTrackDensity, Lineage};
use lrfs_mot::measurement::{AppearanceState, Feature, Measurement};
use lrfs_mot::metrics::TrackRecord;

pub const FEATURE_DIM: usize = 6;

pub fn random_feature(rng: &mut ChaCha8Rng) -> Feature {
    let n = Normal::new(0.0, 1.0).unwrap();
    Feature::normalized((0..FEATURE_DIM).map(|_| n.sample(rng)).collect()).unwrap()
}

pub fn noisy_feature(f: &Feature, noise: f64, rng: &mut ChaCha8Rng) -> Feature {
    let n = Normal::new(0.0, noise).unwrap();
    Feature::normalized(f.as_slice().iter().map(|x| x + n.sample(rng)).collect()).unwrap()
}

fn random_density(rng: &mut ChaCha8Rng) -> GaussianDensity {
    let mean = StateVector::from_column_slice(&[
        rng.random_range(440.0..560.0),
        rng.random_range(-3.0..3.0),
        rng.random_range(340.0..460.0),
        rng.random_range(-3.0..3.0),
        rng.random_range(80.0..160.0),
        rng.random_range(-2.0..2.0),
        rng.random_range(2.0..3.0),
        rng.random_range(-0.01..0.01),
    ]);
    let var = [
        rng.random_range(20.0..200.0),
        rng.random_range(1.0..20.0),
        rng.random_range(20.0..200.0),
        rng.random_range(1.0..20.0),
        rng.random_range(20.0..200.0),
        rng.random_range(1.0..10.0),
        rng.random_range(1e-3..1e-2),
        rng.random_range(1e-5..1e-4),
    ];
    let mut cov = StateMatrix::from_diagonal(&StateVector::from_column_slice(&var));
    for k in 0..4 {
        let rho: f64 = rng.random_range(-0.5..0.5);
        let c = rho * (var[2 * k] * var[2 * k + 1]).sqrt();
        cov[(2 * k, 2 * k + 1)] = c;
        cov[(2 * k + 1, 2 * k)] = c;
    }
    GaussianDensity::new(mean, cov).unwrap()
}

fn perturbed(d: &GaussianDensity, rng: &mut ChaCha8Rng) -> GaussianDensity {
    let mut mean = d.mean;
    mean[0] += rng.random_range(-10.0..10.0);
    mean[2] += rng.random_range(-10.0..10.0);
    mean[4] += rng.random_range(-5.0..5.0);
    mean[5] = rng.random_range(-2.0..2.0);
    GaussianDensity::new(mean, d.covariance * rng.random_range(0.7..1.3)).unwrap()
}

/// A prior, one frame of measurements and birth candidates.
#[derive(Clone)]
pub struct Scene {
    pub prior: GlmbDensity,
    pub measurements: Vec<Measurement>,
    pub births: Vec<BirthCandidate>,
    pub frame: u32,
    pub avg_area: f64,
}

/// At most three rows per hypothesis, three measurements, three prior
/// hypotheses of weight at least 0.1 (possibly sharing track densities).
pub fn random_scene(rng: &mut ChaCha8Rng) -> Scene {
    let frame = 10;
    let n_births = rng.random_range(0..=2usize);
    let n_labels = rng.random_range(0..=(3 - n_births));
    let labels: Vec<TrackLabel> =
        (0..n_labels).map(|i| TrackLabel::new(rng.random_range(1..frame), i as u32)).collect();

    let mut tracks: Vec<LabeledTrackDensity> = Vec::new();
    let mut base = Vec::new();
    for &label in &labels {
        base.push(tracks.len());
        tracks.push(LabeledTrackDensity {
            label,
            kinematic: random_density(rng),
            appearance: AppearanceState::new(random_feature(rng), [0.9, 0.1]),
            last_associated: frame - 1,
            lineage: Lineage(rng.random()),
        });
    }

    let n_hyp = if n_labels == 0 { 1 } else { rng.random_range(1..=3usize) };
    let raw: Vec<f64> = (0..n_hyp).map(|_| rng.random_range(0.0..1.0)).collect();
    let raw_sum: f64 = raw.iter().sum();
    let spare = 1.0 - 0.1 * n_hyp as f64;
    let mut hypotheses = Vec::new();
    for r in raw {
        let mut ids = Vec::new();
        for (k, &b) in base.iter().enumerate() {
            if rng.random_bool(0.6) {
                if rng.random_bool(0.5) {
                    ids.push(b);
                } else {
                    let t = &tracks[b];
                    let variant = LabeledTrackDensity {
                        kinematic: perturbed(&t.kinematic, rng),
                        appearance: AppearanceState::new(noisy_feature(&t.appearance.feature, 0.2, rng), [0.9, 0.1]),
                        lineage: Lineage(rng.random()),
                        ..t.clone()
                    };
                    debug_assert_eq!(variant.label, labels[k]);
                    ids.push(tracks.len());
                    tracks.push(variant);
                }
            }
        }
        ids.sort_by_key(|&t| tracks[t].label);
        hypotheses.push(Hypothesis { tracks: ids, weight: 0.1 + spare * r / raw_sum });
    }
    let prior = GlmbDensity { hypotheses, tracks };

    let birth_cfg = BirthConfig::default();
    let mut births = Vec::new();
    for i in 0..n_births {
        let obs = BBox::from_center(
            rng.random_range(440.0..560.0),
            rng.random_range(340.0..460.0),
            rng.random_range(80.0..160.0),
            rng.random_range(2.0..3.0),
        );
        let z = Measurement::from_box(&obs, random_feature(rng), 0.9);
        births.push(BirthCandidate {
            label: TrackLabel::new(frame, i as u32),
            existence: rng.random_range(0.05..0.6),
            density: birth_cfg.birth_density(&z),
            appearance: AppearanceState::new(z.feature.clone(), [0.9, 0.1]),
            measurement: i,
            recall: None,
        });
    }

    // Sources: predicted-ish positions of prior tracks and birth boxes.
    let mut sources: Vec<(StateVector, Feature)> =
        prior.tracks.iter().map(|t| (t.kinematic.mean, t.appearance.feature.clone())).collect();
    sources.extend(births.iter().map(|b| (b.density.mean, b.appearance.feature.clone())));
    let n_meas = rng.random_range(0..=3usize);
    let pos = Normal::new(0.0, 8.0).unwrap();
    let mut measurements = Vec::new();
    for _ in 0..n_meas {
        let m = if !sources.is_empty() && rng.random_bool(0.7) {
            let (mean, f) = &sources[rng.random_range(0..sources.len())];
            let b = BBox::from_center(
                mean[0] + mean[1] + pos.sample(rng),
                mean[2] + mean[3] + pos.sample(rng),
                (mean[4] + mean[5] + 0.5 * pos.sample(rng)).max(10.0),
                mean[6] + 0.05 * pos.sample(rng) / 8.0,
            );
            Measurement::from_box(&b, noisy_feature(f, 0.3, rng), 0.9)
        } else {
            let b = BBox::from_center(
                rng.random_range(350.0..650.0),
                rng.random_range(250.0..550.0),
                rng.random_range(60.0..180.0),
                rng.random_range(1.8..3.2),
            );
            Measurement::from_box(&b, random_feature(rng), 0.5)
        };
        measurements.push(m);
    }

    Scene { prior, measurements, births, frame, avg_area: rng.random_range(8_000.0..14_000.0) }
}

/// Hypothesis key: sorted `(label, lineage)` pairs.
pub type Key = Vec<(TrackLabel, Lineage)>;

pub struct Oracle {
    pub weights: BTreeMap<Key, f64>,
    /// Posterior mean of every `(label, lineage)` track.
    pub means: BTreeMap<(TrackLabel, Lineage), DVector<f64>>,
}

struct OracleRow {
    label: TrackLabel,
    lineage: Lineage,
    existence: f64,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    feature: Feature,
    modes: [f64; 2],
}

impl OracleRow {
    fn bbox(&self, min_aspect: f64) -> (f64, f64, f64, f64) {
        let h = self.mean[4].max(1.0);
        let beta = self.mean[6].max(min_aspect);
        let w = h / beta;
        let (x, y) = (self.mean[0] - w / 2.0, self.mean[2] - h / 2.0);
        (x, y, w, h)
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn oracle_survival(t: &LabeledTrackDensity, frame: u32, avg_area: f64, model: &FilterModel) -> f64 {
    let s = &model.survival;
    let m = &t.kinematic.mean;
    let base = if m[5] < 0.0 {
        let area = m[4] * m[4] / m[6].max(s.min_aspect);
        s.base_survival * logistic(s.shrink_scale * (s.shrink_offset - area / avg_area))
    } else {
        s.base_survival
    };
    base * logistic(s.lifespan_scale * (frame - t.label.birth_time) as f64)
}

fn transition_and_noise(model: &FilterModel) -> (DMatrix<f64>, DMatrix<f64>) {
    let t = model.motion.period;
    let mut f = DMatrix::identity(8, 8);
    let mut q = DMatrix::zeros(8, 8);
    for k in 0..4 {
        f[(2 * k, 2 * k + 1)] = t;
        let g = [t * t / 2.0, t];
        for r in 0..2 {
            for c in 0..2 {
                q[(2 * k + r, 2 * k + c)] = model.motion.noise[k] * g[r] * g[c];
            }
        }
    }
    (f, q)
}

fn to_dvec(v: &StateVector) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

fn to_dmat(m: &StateMatrix) -> DMatrix<f64> {
    DMatrix::from_column_slice(8, 8, m.as_slice())
}

/// Kalman evidence, squared Mahalanobis distance and posterior mean.
fn kalman(row: &OracleRow, z: &Measurement, noise: &[f64; 4]) -> (f64, f64, DVector<f64>) {
    let mut h = DMatrix::zeros(4, 8);
    for k in 0..4 {
        h[(k, 2 * k)] = 1.0;
    }
    let r = DMatrix::from_diagonal(&DVector::from_column_slice(noise));
    let s = &h * &row.cov * h.transpose() + r;
    let s_inv = s.clone().try_inverse().unwrap();
    let d = DVector::from_column_slice(z.observation.as_slice()) - &h * &row.mean;
    let d2 = (d.transpose() * &s_inv * &d)[(0, 0)];
    let q = (-0.5 * d2).exp() / ((2.0 * std::f64::consts::PI).powi(2) * s.determinant().sqrt());
    let gain = &row.cov * h.transpose() * &s_inv;
    (q, d2, &row.mean + gain * d)
}

fn cosine(a: &Feature, b: &Feature) -> f64 {
    let dot: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum();
    let na: f64 = a.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(0.0, 1.0)
}

/// Largest fraction of box `i` covered by a single present box in front of it.
fn max_ioa(i: usize, boxes: &[(TrackLabel, (f64, f64, f64, f64))], present: &[bool]) -> f64 {
    let (li, (xi, yi, wi, hi)) = boxes[i];
    let mut best: f64 = 0.0;
    for (k, &(lk, (xk, yk, wk, hk))) in boxes.iter().enumerate() {
        if k == i || !present[k] {
            continue;
        }
        let front = yk + hk > yi + hi || (yk + hk == yi + hi && lk < li);
        if !front {
            continue;
        }
        let iw = ((xi + wi).min(xk + wk) - xi.max(xk)).max(0.0);
        let ih = ((yi + hi).min(yk + hk) - yi.max(yk)).max(0.0);
        best = best.max(iw * ih / (wi * hi));
    }
    best
}

/// The exact posterior of `scene`, by enumerating every association.
pub fn brute_force(scene: &Scene, model: &FilterModel) -> Oracle {
    let (f, q) = transition_and_noise(model);
    let mc = &model.measurement;
    let total_prior: f64 = scene.prior.hypotheses.iter().map(|h| h.weight).sum();
    let z = &scene.measurements;
    let mut weights: BTreeMap<Key, f64> = BTreeMap::new();
    let mut means = BTreeMap::new();

    let prior_rows: Vec<OracleRow> = scene
        .prior
        .tracks
        .iter()
        .map(|t| {
            let m = to_dvec(&t.kinematic.mean);
            let p = to_dmat(&t.kinematic.covariance);
            OracleRow {
                label: t.label,
                lineage: t.lineage,
                existence: oracle_survival(t, scene.frame, scene.avg_area, model),
                mean: &f * m,
                cov: &f * p * f.transpose() + &q,
                feature: t.appearance.feature.clone(),
                modes: [mc.mode_stay, 1.0 - mc.mode_stay],
            }
        })
        .collect();
    let birth_rows: Vec<OracleRow> = scene
        .births
        .iter()
        .map(|b| OracleRow {
            label: b.label,
            lineage: Lineage::root(b.label),
            existence: b.existence,
            mean: to_dvec(&b.density.mean),
            cov: to_dmat(&b.density.covariance),
            feature: b.appearance.feature.clone(),
            modes: b.appearance.mode_probs,
        })
        .collect();

    for h in &scene.prior.hypotheses {
        let rows: Vec<&OracleRow> = h.tracks.iter().map(|&t| &prior_rows[t]).chain(birth_rows.iter()).collect();
        // Per row: likelihood ratio (without P_D) and posterior mean of every gated measurement.
        let lik: Vec<Vec<Option<(f64, DVector<f64>)>>> = rows
            .iter()
            .map(|r| {
                z.iter()
                    .map(|m| {
                        let (q, d2, post) = kalman(r, m, &mc.obs_noise);
                        let s = cosine(&r.feature, &m.feature);
                        let gated = d2 < mc.kinematic_gate || 1.0 - s < mc.appearance_gate;
                        let app = r.modes[0] * s.powf(mc.appearance_power) + r.modes[1] * (1.0 - s).powf(mc.appearance_power);
                        (gated && app > 0.0).then(|| (q * app / mc.clutter_intensity, post))
                    })
                    .collect()
            })
            .collect();
        let boxes: Vec<_> = rows.iter().map(|r| (r.label, r.bbox(model.survival.min_aspect))).collect();

        // Outcome per row: None = dead, Some(None) = missed, Some(Some(j)) = detected.
        let n = rows.len();
        let mut outcome: Vec<Option<Option<usize>>> = vec![None; n];
        fn visit(
            i: usize,
            outcome: &mut Vec<Option<Option<usize>>>,
            used: &mut BTreeSet<usize>,
            lik: &[Vec<Option<(f64, DVector<f64>)>>],
            emit: &mut dyn FnMut(&[Option<Option<usize>>]),
        ) {
            if i == outcome.len() {
                emit(outcome);
                return;
            }
            let mut choices = vec![None, Some(None)];
            choices.extend((0..lik[i].len()).filter(|j| lik[i][*j].is_some() && !used.contains(j)).map(|j| Some(Some(j))));
            for c in choices {
                if let Some(Some(j)) = c {
                    used.insert(j);
                }
                outcome[i] = c;
                visit(i + 1, outcome, used, lik, emit);
                if let Some(Some(j)) = c {
                    used.remove(&j);
                }
            }
        }
        let mut emit = |out: &[Option<Option<usize>>]| {
            let present: Vec<bool> = out.iter().map(Option::is_some).collect();
            let mut w = h.weight / total_prior;
            let mut key = Vec::new();
            for (i, o) in out.iter().enumerate() {
                let e = rows[i].existence;
                let area = boxes[i].1 .2 * boxes[i].1 .3;
                let pd = model.fuzzy.probability(max_ioa(i, &boxes, &present), (area / scene.avg_area).min(2.0));
                match o {
                    None => w *= 1.0 - e,
                    Some(None) => {
                        w *= e * (1.0 - pd);
                        let lin = rows[i].lineage.extend(scene.frame, None);
                        means.insert((rows[i].label, lin), rows[i].mean.clone());
                        key.push((rows[i].label, lin));
                    }
                    Some(Some(j)) => {
                        let (ratio, post) = lik[i][*j].as_ref().unwrap();
                        w *= e * pd * ratio;
                        let lin = rows[i].lineage.extend(scene.frame, Some(*j));
                        means.insert((rows[i].label, lin), post.clone());
                        key.push((rows[i].label, lin));
                    }
                }
            }
            key.sort();
            *weights.entry(key).or_insert(0.0) += w;
        };
        visit(0, &mut outcome, &mut BTreeSet::new(), &lik, &mut emit);
    }
    let total: f64 = weights.values().sum();
    for w in weights.values_mut() {
        *w /= total;
    }
    Oracle { weights, means }
}

/// Hypothesis weights of a density, keyed like the oracle.
pub fn keyed_weights(d: &GlmbDensity) -> BTreeMap<Key, f64> {
    let mut out = BTreeMap::new();
    for h in &d.hypotheses {
        let mut key: Key = h.tracks.iter().map(|&t| (d.tracks[t].label, d.tracks[t].lineage)).collect();
        key.sort();
        *out.entry(key).or_insert(0.0) += h.weight;
    }
    out
}

pub fn total_variation(a: &BTreeMap<Key, f64>, b: &BTreeMap<Key, f64>) -> f64 {
    let keys: BTreeSet<&Key> = a.keys().chain(b.keys()).collect();
    0.5 * keys.into_iter().map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs()).sum::<f64>()
}

/// Identity switches: per ground-truth object, the number of times its
/// matched (IoU ≥ 0.5, greedy in ground-truth order) estimated identity
/// differs from the previously matched one.
pub fn id_switches(ground: &[TrackRecord], hyp: &[TrackRecord]) -> usize {
    fn iou(a: &BBox, b: &BBox) -> f64 {
        let inter = a.intersection_area(b);
        inter / (a.area() + b.area() - inter)
    }
    let frames: BTreeSet<u32> = ground.iter().flat_map(|t| t.boxes.keys().copied()).collect();
    let mut last: BTreeMap<u64, u64> = BTreeMap::new();
    let mut switches = 0;
    for f in frames {
        let mut used = BTreeSet::new();
        for g in ground {
            let Some(gb) = g.boxes.get(&f) else { continue };
            let best = hyp
                .iter()
                .filter(|h| !used.contains(&h.id))
                .filter_map(|h| h.boxes.get(&f).map(|b| (iou(gb, b), h.id)))
                .fold(None, |acc: Option<(f64, u64)>, x| match acc {
                    Some(a) if a.0 >= x.0 => Some(a),
                    _ => Some(x),
                });
            let Some((score, id)) = best else { continue };
            if score < 0.5 {
                continue;
            }
            used.insert(id);
            if last.insert(g.id, id).is_some_and(|prev| prev != id) {
                switches += 1;
            }
        }
    }
    switches
}
