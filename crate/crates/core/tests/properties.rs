mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lrfs_mot::assignment::{gibbs_sample, murty_kbest, AssignmentProblem, Outcome, RowCosts};
use lrfs_mot::birth::{make_birth_candidates, BirthConfig, TtMemory, TtTrack};
use lrfs_mot::config::RunConfig;
use lrfs_mot::dynamics::{predict, survival_probability, GaussianDensity, MotionModel, StateMatrix, StateVector, SurvivalConfig, TrackLabel};
use lrfs_mot::geometry::BBox;
use lrfs_mot::io::{format_detections, parse_detections_str, DetectionSequence, FrameDetections};
use lrfs_mot::measurement::{appearance_likelihood, gate, kalman_update, update_feature, AppearanceState, Feature, Measurement, MeasurementConfig};
use lrfs_mot::metrics::{giou_distance, ospa, ospa2, OspaConfig, TrackRecord};
use lrfs_mot::occlusion::{fuzzy_detection_probability, ioa, max_ioa, FuzzyConfig, RuleTable};

fn state() -> impl Strategy<Value = StateVector> {
    prop::collection::vec(-500.0..500.0f64, 8).prop_map(|v| StateVector::from_column_slice(&v))
}

/// `A·Aᵀ + εI`, symmetric positive-definite.
fn covariance() -> impl Strategy<Value = StateMatrix> {
    prop::collection::vec(-3.0..3.0f64, 64).prop_map(|v| {
        let a = StateMatrix::from_column_slice(&v);
        a * a.transpose() + StateMatrix::identity() * 0.1
    })
}

fn boxes(max: usize) -> impl Strategy<Value = Vec<BBox>> {
    prop::collection::vec((0.0..300.0f64, 0.0..300.0f64, 5.0..100.0f64, 5.0..150.0f64), 0..max)
        .prop_map(|v| v.into_iter().map(|(x, y, w, h)| BBox::new(x, y, w, h)).collect())
}

fn feature(dim: usize) -> impl Strategy<Value = Feature> {
    prop::collection::vec(-1.0..1.0f64, dim)
        .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
        .prop_map(|v| Feature::normalized(v).unwrap())
}

fn problem() -> impl Strategy<Value = AssignmentProblem> {
    (1..=4usize, 0..=4usize).prop_flat_map(|(p, m)| {
        prop::collection::vec(
            (prop::collection::vec(prop::option::weighted(0.7, 0.0..6.0f64), m), 0.0..6.0f64, 0.0..6.0f64),
            p,
        )
        .prop_map(move |rows| {
            let rows = rows
                .into_iter()
                .enumerate()
                .map(|(i, (det, miss, death))| RowCosts {
                    label: TrackLabel::new(0, i as u32),
                    detect: det.into_iter().enumerate().filter_map(|(j, c)| c.map(|c| (j, c))).collect(),
                    miss,
                    death,
                })
                .collect();
            AssignmentProblem::new(rows, m)
        })
    })
}

fn tracks(first_id: u64) -> impl Strategy<Value = Vec<TrackRecord>> {
    prop::collection::vec((0..30u32, 1..20u32, 0.0..300.0f64, 0.0..300.0f64, -3.0..3.0f64), 0..5).prop_map(move |v| {
        v.into_iter()
            .enumerate()
            .map(|(k, (start, len, x, y, dx))| {
                let mut t = TrackRecord::new(first_id + k as u64);
                for f in start..start + len {
                    t.boxes.insert(f, BBox::new(x + dx * f as f64, y, 40.0, 100.0));
                }
                t
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn predict_is_linear_in_the_mean(a in state(), b in state(), cov in covariance(), w in 0.0..1.0f64) {
        let m = MotionModel::default();
        let pa = predict(&GaussianDensity::new(a, cov).unwrap(), &m).unwrap();
        let pb = predict(&GaussianDensity::new(b, cov).unwrap(), &m).unwrap();
        let pc = predict(&GaussianDensity::new(a * w + b * (1.0 - w), cov).unwrap(), &m).unwrap();
        prop_assert!((pc.mean - (pa.mean * w + pb.mean * (1.0 - w))).amax() < 1e-9);
        prop_assert!((pc.covariance - pa.covariance).amax() < 1e-9);
    }

    #[test]
    fn predicted_covariance_stays_positive_definite(mean in state(), cov in covariance()) {
        let p = predict(&GaussianDensity::new(mean, cov).unwrap(), &MotionModel::default()).unwrap();
        prop_assert!((p.covariance - p.covariance.transpose()).amax() < 1e-9);
        prop_assert!(p.covariance.cholesky().is_some());
    }

    #[test]
    fn survival_grows_with_lifespan(mean in state(), birth in 0..100u32, age in 0..15u32, area in 100.0..1e5f64) {
        let cfg = SurvivalConfig::default();
        let label = TrackLabel::new(birth, 0);
        let younger = survival_probability(&mean, label, birth + age, area, &cfg);
        let older = survival_probability(&mean, label, birth + age + 1, area, &cfg);
        prop_assert!(younger <= older);
        prop_assert!(older < cfg.base_survival);
    }

    #[test]
    fn appearance_components_are_monotone(a in feature(6), b in feature(6), c in feature(6)) {
        let app = AppearanceState::new(a.clone(), [0.9, 0.1]);
        let (sb, sc) = (a.cosine(&b).clamp(0.0, 1.0), a.cosine(&c).clamp(0.0, 1.0));
        let (b0, b1) = appearance_likelihood(&b, &app, 15.0);
        let (c0, c1) = appearance_likelihood(&c, &app, 15.0);
        for v in [b0, b1, c0, c1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if sb < sc {
            prop_assert!(b0 <= c0 && b1 >= c1);
        }
    }

    #[test]
    fn feature_update_keeps_unit_norm(a in feature(8), b in feature(8)) {
        let app = update_feature(&AppearanceState::new(a, [0.9, 0.1]), &b, true);
        let norm: f64 = app.feature.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn enlarging_gates_never_removes_pairs(
        mean in state(), du in -200.0..200.0f64, dv in -200.0..200.0f64,
        a in feature(4), b in feature(4), k1 in 1.0..30.0f64, k2 in 0.0..30.0f64, g1 in 0.0..1.0f64, g2 in 0.0..1.0f64,
    ) {
        let prior = GaussianDensity::new(mean, StateMatrix::identity() * 100.0).unwrap();
        let z = Measurement::from_box(&BBox::from_center(mean[0] + du, mean[2] + dv, 100.0, 2.5), b, 0.9);
        let app = AppearanceState::new(a, [0.9, 0.1]);
        let small = MeasurementConfig { kinematic_gate: k1, appearance_gate: g1, ..Default::default() };
        let large = MeasurementConfig { kinematic_gate: k1 + k2, appearance_gate: (g1 + g2).min(1.0), ..Default::default() };
        if gate(&prior, &app, &z, &small).unwrap() {
            prop_assert!(gate(&prior, &app, &z, &large).unwrap());
        }
    }

    #[test]
    fn ioa_shares_the_intersection(bs in boxes(3)) {
        prop_assume!(bs.len() == 2);
        let (a, b) = (&bs[0], &bs[1]);
        prop_assert!((ioa(a, b).unwrap() * a.area() - ioa(b, a).unwrap() * b.area()).abs() < 1e-6);
    }

    #[test]
    fn max_ioa_is_permutation_invariant(bs in boxes(6), seed in any::<u64>()) {
        let labelled: Vec<(TrackLabel, BBox)> = bs.iter().enumerate().map(|(i, b)| (TrackLabel::new(0, i as u32), *b)).collect();
        let base = max_ioa(&labelled).unwrap();
        let mut order: Vec<usize> = (0..labelled.len()).collect();
        let mut s = seed;
        for i in (1..order.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let shuffled: Vec<(TrackLabel, BBox)> = order.iter().map(|&i| labelled[i]).collect();
        let out = max_ioa(&shuffled).unwrap();
        for (k, &i) in order.iter().enumerate() {
            prop_assert_eq!(out[k], base[i]);
        }
    }

    #[test]
    fn fuzzy_output_is_bounded(x in 0.0..=1.0f64, r in 0.0..=2.0f64, rule in 1..=5usize) {
        let cfg = FuzzyConfig { rules: RuleTable::named(&format!("R{rule}")).unwrap(), ..FuzzyConfig::default() };
        let p = fuzzy_detection_probability(x, r, &cfg).unwrap();
        prop_assert!(p >= cfg.p_min() - 1e-12 && p <= cfg.p_max() + 1e-12);
    }

    #[test]
    fn murty_solutions_are_valid_and_ranked(p in problem()) {
        let sols = murty_kbest(&p, 50);
        for w in sols.windows(2) {
            prop_assert!(w[0].cost <= w[1].cost);
        }
        for s in &sols {
            prop_assert!(p.is_valid(&s.outcomes));
            let mut used = std::collections::HashSet::new();
            let mut cost = 0.0;
            for (row, o) in p.rows().iter().zip(&s.outcomes) {
                cost += match *o {
                    Outcome::Detected(j) => {
                        prop_assert!(used.insert(j));
                        row.detect.iter().find(|d| d.0 == j).unwrap().1
                    }
                    Outcome::Missed => row.miss,
                    Outcome::Dead => row.death,
                };
            }
            prop_assert!((cost - s.cost).abs() < 1e-9);
        }
    }

    #[test]
    fn gibbs_is_reproducible(p in problem(), seed in any::<u64>()) {
        prop_assert_eq!(gibbs_sample(&p, 50, seed), gibbs_sample(&p, 50, seed));
    }

    #[test]
    fn births_never_exceed_the_cap(r_u in prop::collection::vec(0.0..1.0f64, 1..8), lambda in 0.01..20.0f64) {
        let cfg = BirthConfig { expected_births: lambda, ..BirthConfig::default() };
        let z: Vec<Measurement> = (0..r_u.len())
            .map(|i| Measurement::from_box(&BBox::new(10.0 * i as f64, 0.0, 30.0, 80.0), Feature::normalized(vec![1.0, i as f64]).unwrap(), 0.9))
            .collect();
        let births = make_birth_candidates(&z, &r_u, &mut TtMemory::new(), &cfg, 3, [0.9, 0.1]);
        for b in births {
            prop_assert!(b.existence <= cfg.max_birth_prob);
            prop_assert!(r_u[b.measurement] < cfg.assoc_threshold);
        }
    }

    #[test]
    fn recall_ignores_input_order(feats in prop::collection::vec(feature(3), 2..6), mem in prop::collection::vec(feature(3), 1..5), rot in 0..6usize) {
        let cfg = BirthConfig { recall_similarity: 0.3, ..BirthConfig::default() };
        let z: Vec<Measurement> = feats.iter().map(|f| Measurement::from_box(&BBox::new(0.0, 0.0, 30.0, 80.0), f.clone(), 0.9)).collect();
        let r_u = vec![0.0; z.len()];
        let memory = |order: &[usize]| {
            let mut m = TtMemory::new();
            for &i in order {
                m.insert(TtTrack { label: TrackLabel::new(1, i as u32), feature: mem[i].clone(), terminated_at: 0 });
            }
            m
        };
        let pairs = |z: &[Measurement], ids: &[usize], m: &mut TtMemory| {
            let mut out: Vec<(TrackLabel, usize)> = make_birth_candidates(z, &r_u, m, &cfg, 3, [0.9, 0.1])
                .into_iter()
                .filter(|b| b.recall.is_some())
                .map(|b| (b.label, ids[b.measurement]))
                .collect();
            out.sort();
            out
        };
        let ids: Vec<usize> = (0..z.len()).collect();
        let forward: Vec<usize> = (0..mem.len()).collect();
        let reversed: Vec<usize> = forward.iter().rev().copied().collect();
        let k = rot % z.len();
        let rotated_ids: Vec<usize> = ids[k..].iter().chain(&ids[..k]).copied().collect();
        let rotated_z: Vec<Measurement> = rotated_ids.iter().map(|&i| z[i].clone()).collect();
        let a = pairs(&z, &ids, &mut memory(&forward));
        let b = pairs(&rotated_z, &rotated_ids, &mut memory(&reversed));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn ospa_is_bounded_by_the_cutoff(x in boxes(5), y in boxes(5), c in 0.1..2.0f64) {
        let cfg = OspaConfig { cutoff: c, order: 1.0 };
        let d = ospa(&x, &y, |a, b| giou_distance(a, b).unwrap(), &cfg);
        prop_assert!(d.total <= c + 1e-12 && d.total >= 0.0);
    }

    #[test]
    fn ospa2_ignores_ids_and_order(x in tracks(1), y in tracks(50), shift in 1..1000u64) {
        let cfg = OspaConfig::default();
        let base = ospa2(&x, &y, &cfg).total;
        let renamed: Vec<TrackRecord> = y.iter().rev().map(|t| TrackRecord { id: t.id + shift, boxes: t.boxes.clone() }).collect();
        prop_assert!((ospa2(&x, &renamed, &cfg).total - base).abs() < 1e-12);
        let reordered: Vec<TrackRecord> = x.iter().rev().cloned().collect();
        prop_assert!((ospa2(&reordered, &y, &cfg).total - base).abs() < 1e-12);
    }

    #[test]
    fn detection_files_round_trip(frames in prop::collection::vec(prop::collection::vec((0.0..1900.0f64, 0.0..1000.0f64, 1.0..300.0f64, 1.0..500.0f64, feature(4)), 0..4), 1..6)) {
        let seq = DetectionSequence {
            dim: 4,
            frames: frames
                .into_iter()
                .enumerate()
                .map(|(t, dets)| FrameDetections {
                    frame: t as u32 + 1,
                    measurements: dets.into_iter().map(|(x, y, w, h, f)| Measurement::from_box(&BBox::new(x, y, w, h), f, 0.5)).collect(),
                })
                .collect(),
        };
        let path = std::path::Path::new("memory.csv");
        let once = parse_detections_str(&format_detections(&seq), path).unwrap();
        let twice = parse_detections_str(&format_detections(&once), path).unwrap();
        prop_assert_eq!(once.frames.len(), seq.frames.len());
        for ((a, b), c) in seq.frames.iter().zip(&once.frames).zip(&twice.frames) {
            prop_assert_eq!(a.measurements.len(), b.measurements.len());
            for ((ma, mb), mc) in a.measurements.iter().zip(&b.measurements).zip(&c.measurements) {
                prop_assert!((ma.bbox().to_observation() - mb.bbox().to_observation()).amax() < 1e-6);
                prop_assert!((mb.bbox().to_observation() - mc.bbox().to_observation()).amax() < 1e-6);
                let drift = mb.feature.as_slice().iter().zip(mc.feature.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                prop_assert!(drift < 1e-12);
            }
        }
    }

    #[test]
    fn config_round_trips(tau in 0.1..10.0f64, kappa in 1e-12..1e-3f64, n in 1..5000usize, rule in 1..=5usize) {
        let mut cfg = RunConfig::default();
        cfg.set("survival.tau_L", &tau.to_string()).unwrap();
        cfg.set("measurement.clutter_intensity", &kappa.to_string()).unwrap();
        cfg.set("hypotheses", &n.to_string()).unwrap();
        cfg.set("fuzzy.rule", &format!("R{rule}")).unwrap();
        let text: String = cfg.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        let back = RunConfig::parse(&text).unwrap();
        prop_assert_eq!(back.entries(), cfg.entries());
    }
}

#[test]
fn evidence_integrates_to_one() {
    let mean = StateVector::from_column_slice(&[500.0, 2.0, 300.0, -1.0, 120.0, 0.0, 2.5, 0.0]);
    let var = [30.0, 4.0, 60.0, 4.0, 20.0, 1.0, 0.01, 1e-4];
    let prior = GaussianDensity::new(mean, StateMatrix::from_diagonal(&StateVector::from_column_slice(&var))).unwrap();
    let noise = [50.0, 50.0, 50.0, 1e-3];
    // Integrate over (u, v) at the predicted (h, β); normalize by the (h, β) marginal peak.
    let (su, sv) = ((var[0] + noise[0]).sqrt(), (var[2] + noise[1]).sqrt());
    let peak = 1.0 / (2.0 * std::f64::consts::PI * ((var[4] + noise[2]) * (var[6] + noise[3])).sqrt());
    let n = 400;
    let (du, dv) = (16.0 * su / n as f64, 16.0 * sv / n as f64);
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let u = mean[0] - 8.0 * su + (i as f64 + 0.5) * du;
            let v = mean[2] - 8.0 * sv + (j as f64 + 0.5) * dv;
            let obs = nalgebra::Vector4::new(u, v, mean[4], mean[6]);
            total += kalman_update(&prior, &obs, &noise).unwrap().1 * du * dv;
        }
    }
    assert!((total / peak - 1.0).abs() < 1e-6, "{}", total / peak);
}

#[test]
fn scenes_keep_normalized_distinct_hypotheses() {
    use lrfs_mot::glmb::{glmb_update, FilterConfig, FilterModel, FrameInput};
    let model = FilterModel::new(&FilterConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let scene = common::random_scene(&mut rng);
        let input = FrameInput { frame: scene.frame, measurements: &scene.measurements, births: &scene.births, avg_area: Some(scene.avg_area), seed: 0 };
        let up = glmb_update(&scene.prior, &input, &model).unwrap();
        up.density.validate().unwrap();
    }
}
