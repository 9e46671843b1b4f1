//! Joint prediction–update over a set of weighted label-set components.
//!
//! Both filters reduce to this: each component is a prior hypothesis whose
//! rows (predicted tracks and birth candidates) carry an existence
//! probability. For every component the association problem is built with
//! pseudo detection probabilities from all its rows, solved or sampled, and
//! every selected child is re-weighted with the detection probabilities
//! implied by the labels it actually keeps.

use std::collections::HashMap;

use crate::assignment::{gibbs_sample, murty_kbest, AssignmentProblem, Outcome, RowCosts};
use crate::dynamics::{clamp_estimate, state_box, GaussianDensity, TrackLabel};
use crate::geometry::BBox;
use crate::glmb::{FilterModel, LabeledTrackDensity, Lineage, SolverKind};
use crate::measurement::{update_feature, AppearanceState, Innovation, Measurement};
use crate::occlusion::OcclusionGraph;
use crate::Result;

/// A predicted track or birth candidate.
pub(crate) struct Entry {
    pub label: TrackLabel,
    pub density: GaussianDensity,
    pub appearance: AppearanceState,
    pub lineage: Lineage,
    pub last_associated: u32,
}

pub(crate) struct Row {
    pub entry: usize,
    pub existence: f64,
}

pub(crate) struct Component {
    pub log_weight: f64,
    /// Survivors, then births.
    pub rows: Vec<Row>,
    /// Number of children to request.
    pub budget: usize,
}

pub(crate) struct Child {
    /// Posterior track ids, ascending by label.
    pub tracks: Vec<usize>,
    pub weight: f64,
    /// Measurements assigned in this child.
    pub assigned: Vec<usize>,
}

pub(crate) struct JointPosterior {
    pub tracks: Vec<LabeledTrackDensity>,
    /// Normalized, in order of first generation.
    pub children: Vec<Child>,
}

struct Prepared {
    innovation: Innovation,
    bbox: BBox,
    /// Gated `(measurement, ln ψ_z / P_D)` pairs.
    log_lik: Vec<(usize, f64)>,
}

fn prepare(entry: &Entry, z: &[Measurement], model: &FilterModel) -> Result<Prepared> {
    let cfg = &model.measurement;
    let innovation = Innovation::new(&entry.density, &cfg.obs_noise)?;
    let ln_kappa = cfg.clutter_intensity.ln();
    let mut log_lik = Vec::new();
    for (j, m) in z.iter().enumerate() {
        if !innovation.admits(&entry.appearance, m, cfg) {
            continue;
        }
        let app = entry.appearance.likelihood(&m.feature, cfg.appearance_power);
        if app > 0.0 {
            log_lik.push((j, innovation.log_evidence(&m.observation) + app.ln() - ln_kappa));
        }
    }
    Ok(Prepared {
        innovation,
        bbox: state_box(&clamp_estimate(&entry.density.mean, model.survival.min_aspect)),
        log_lik,
    })
}

fn ln_or_neg_inf(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

fn gibbs_seed(seed: u64, frame: u32, component: usize) -> u64 {
    let mut x = seed ^ ((frame as u64) << 32) ^ (component as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Runs the joint update. `avg_area` is the reference area for the area ratio.
#[allow(clippy::too_many_arguments)]
pub(crate) fn joint_update(
    entries: &[Entry],
    components: &[Component],
    z: &[Measurement],
    frame: u32,
    avg_area: f64,
    model: &FilterModel,
    seed: u64,
) -> Result<JointPosterior> {
    let prepared = entries.iter().map(|e| prepare(e, z, model)).collect::<Result<Vec<_>>>()?;
    let fuzzy = &model.fuzzy;
    let p_detect = |ioa: f64, area: f64| fuzzy.probability(ioa, (area / avg_area).min(2.0));

    let mut keys: HashMap<Vec<(usize, Option<usize>)>, usize> = HashMap::new();
    let mut children: Vec<(Vec<(usize, Option<usize>)>, f64)> = Vec::new();

    for (c, comp) in components.iter().enumerate() {
        let boxes: Vec<(TrackLabel, BBox)> =
            comp.rows.iter().map(|r| (entries[r.entry].label, prepared[r.entry].bbox)).collect();
        let graph = OcclusionGraph::new(&boxes);
        let pseudo: Vec<f64> = graph
            .max_ioa()
            .iter()
            .zip(&boxes)
            .map(|(&ioa, (_, b))| p_detect(ioa, b.area()))
            .collect();
        let rows: Vec<RowCosts> = comp
            .rows
            .iter()
            .zip(&pseudo)
            .map(|(r, &pd)| {
                let ln_e = ln_or_neg_inf(r.existence);
                RowCosts {
                    label: entries[r.entry].label,
                    detect: prepared[r.entry]
                        .log_lik
                        .iter()
                        .map(|&(j, ll)| (j, -(ln_e + pd.ln() + ll)))
                        .filter(|(_, cost)| cost.is_finite())
                        .collect(),
                    miss: -(ln_e + (1.0 - pd).ln()),
                    death: -ln_or_neg_inf(1.0 - r.existence),
                }
            })
            .collect();
        let problem = AssignmentProblem::new(rows, z.len());
        let use_murty = match model.solver.kind {
            SolverKind::Murty => true,
            SolverKind::Gibbs => false,
            SolverKind::Auto => comp.rows.len() * z.len() <= model.solver.murty_max_size,
        };
        let solutions = if use_murty {
            murty_kbest(&problem, comp.budget)
        } else {
            let iterations = (model.solver.gibbs_factor * comp.budget).min(model.solver.gibbs_max_iterations).max(1);
            gibbs_sample(&problem, iterations, gibbs_seed(seed, frame, c))
        };

        let mut present = vec![false; comp.rows.len()];
        for sol in &solutions {
            for (p, o) in present.iter_mut().zip(&sol.outcomes) {
                *p = *o != Outcome::Dead;
            }
            // The correct detection probabilities only differ from the pseudo
            // ones when a kept box was occluded by a dropped one.
            let corrected;
            let pd: &[f64] = if graph.depends_on(&present) {
                corrected = graph
                    .max_ioa_among(&present)
                    .iter()
                    .zip(&boxes)
                    .map(|(&ioa, (_, b))| p_detect(ioa, b.area()))
                    .collect::<Vec<f64>>();
                &corrected
            } else {
                &pseudo
            };
            let mut log_w = comp.log_weight;
            let mut key: Vec<(TrackLabel, usize, Option<usize>)> = Vec::new();
            for (i, (row, o)) in comp.rows.iter().zip(&sol.outcomes).enumerate() {
                match *o {
                    Outcome::Dead => log_w += ln_or_neg_inf(1.0 - row.existence),
                    Outcome::Missed => {
                        log_w += row.existence.ln() + (1.0 - pd[i]).ln();
                        key.push((entries[row.entry].label, row.entry, None));
                    }
                    Outcome::Detected(j) => {
                        let ll = prepared[row.entry].log_lik.iter().find(|p| p.0 == j).expect("gated pair").1;
                        log_w += row.existence.ln() + pd[i].ln() + ll;
                        key.push((entries[row.entry].label, row.entry, Some(j)));
                    }
                }
            }
            if log_w == f64::NEG_INFINITY {
                continue;
            }
            key.sort_by_key(|k| k.0);
            let key: Vec<(usize, Option<usize>)> = key.into_iter().map(|k| (k.1, k.2)).collect();
            match keys.get(&key) {
                Some(&idx) => {
                    let w = &mut children[idx].1;
                    let hi = w.max(log_w);
                    *w = hi + ((*w - hi).exp() + (log_w - hi).exp()).ln();
                }
                None => {
                    keys.insert(key.clone(), children.len());
                    children.push((key, log_w));
                }
            }
        }
    }

    let max_log = children.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for c in &mut children {
        c.1 = (c.1 - max_log).exp();
        total += c.1;
    }

    let power = model.measurement.appearance_power;
    let mut track_ids: HashMap<(usize, Option<usize>), usize> = HashMap::new();
    let mut tracks: Vec<LabeledTrackDensity> = Vec::new();
    let mut out = Vec::with_capacity(children.len());
    for (key, w) in children {
        let mut ids = Vec::with_capacity(key.len());
        let mut assigned = Vec::new();
        for &(e, j) in &key {
            let id = *track_ids.entry((e, j)).or_insert_with(|| {
                let entry = &entries[e];
                let track = match j {
                    Some(j) => {
                        let m = &z[j];
                        let mut appearance = update_feature(&entry.appearance, &m.feature, true);
                        appearance.mode_probs = entry.appearance.mode_posterior(&m.feature, power);
                        LabeledTrackDensity {
                            label: entry.label,
                            kinematic: prepared[e].innovation.posterior(&m.observation),
                            appearance,
                            last_associated: frame,
                            lineage: entry.lineage.extend(frame, Some(j)),
                        }
                    }
                    None => LabeledTrackDensity {
                        label: entry.label,
                        kinematic: entry.density.clone(),
                        appearance: entry.appearance.clone(),
                        last_associated: entry.last_associated,
                        lineage: entry.lineage.extend(frame, None),
                    },
                };
                tracks.push(track);
                tracks.len() - 1
            });
            ids.push(id);
            if let Some(j) = j {
                assigned.push(j);
            }
        }
        out.push(Child { tracks: ids, weight: w / total, assigned });
    }
    Ok(JointPosterior { tracks, children: out })
}
