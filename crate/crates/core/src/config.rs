//! Run configuration as flat `key = value` text with dotted section prefixes.
//!
//! ```text
//! # comments start with '#'
//! filter = glmb
//! survival.tau_L = 2.0
//! measurement.obs_noise = 50, 50, 50, 0.001
//! fuzzy.rule = R1
//! ```
//!
//! Unknown keys are errors; omitted keys keep their defaults. `lrfs-mot
//! defaults` prints every key.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::birth::BirthConfig;
use crate::glmb::{FilterConfig, FilterModel, SolverKind};
use crate::lmb::EstimatorConfig;
use crate::metrics::OspaConfig;
use crate::occlusion::{FuzzyDetectionModel, RuleTable, Trapezoid};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Glmb,
    Lmb,
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "glmb" => Ok(FilterKind::Glmb),
            "lmb" => Ok(FilterKind::Lmb),
            _ => Err(Error::Config(format!("unknown filter '{s}' (expected glmb or lmb)"))),
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterKind::Glmb => "glmb",
            FilterKind::Lmb => "lmb",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub filter: FilterKind,
    pub seed: u64,
    pub model: FilterConfig,
    pub birth: BirthConfig,
    pub estimator: EstimatorConfig,
    pub ospa: OspaConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            filter: FilterKind::Glmb,
            seed: 0,
            model: FilterConfig::default(),
            birth: BirthConfig::default(),
            estimator: EstimatorConfig::default(),
            ospa: OspaConfig::default(),
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::Config(format!("{key}: '{v}' is not a finite number")))
}

fn parse_int<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: '{v}' is not a non-negative integer")))
}

fn parse_list<const N: usize>(key: &str, v: &str) -> Result<[f64; N]> {
    let items: Vec<f64> = v.split(',').map(|s| parse_f64(key, s.trim())).collect::<Result<_>>()?;
    items
        .try_into()
        .map_err(|_| Error::Config(format!("{key}: expected {N} comma-separated numbers")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("{key}: '{v}' is not a boolean"))),
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

fn trapezoid(t: &Trapezoid) -> String {
    join(&[t.a, t.b, t.c, t.d])
}

const LEVELS: [&str; 3] = ["low", "medium", "high"];

impl RunConfig {
    /// Parses configuration text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, e.to_string().trim_start_matches("configuration error: "))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one key.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let m = &mut self.model;
        let f = |v: &str| parse_f64(key, v);
        match key {
            "filter" => self.filter = v.parse()?,
            "seed" => self.seed = parse_int(key, v)?,
            "hypotheses" => m.max_hypotheses = parse_int(key, v)?,
            "weight_floor" => m.weight_floor = f(v)?,
            "solver" => {
                m.solver.kind = match v {
                    "auto" => SolverKind::Auto,
                    "murty" => SolverKind::Murty,
                    "gibbs" => SolverKind::Gibbs,
                    _ => return Err(Error::Config(format!("solver: unknown solver '{v}'"))),
                }
            }
            "solver.murty_max_size" => m.solver.murty_max_size = parse_int(key, v)?,
            "solver.gibbs_factor" => m.solver.gibbs_factor = parse_int(key, v)?,
            "solver.gibbs_max_iterations" => m.solver.gibbs_max_iterations = parse_int(key, v)?,
            "motion.period" => m.motion.period = f(v)?,
            "motion.noise" => m.motion.noise = parse_list(key, v)?,
            "survival.P_S" => m.survival.base_survival = f(v)?,
            "survival.tau_L" => m.survival.lifespan_scale = f(v)?,
            "survival.tau_S" => m.survival.shrink_scale = f(v)?,
            "survival.k_S" => m.survival.shrink_offset = f(v)?,
            "survival.beta_min" => m.survival.min_aspect = f(v)?,
            "measurement.obs_noise" => m.measurement.obs_noise = parse_list(key, v)?,
            "measurement.phi" => m.measurement.appearance_power = f(v)?,
            "measurement.kinematic_gate" => m.measurement.kinematic_gate = f(v)?,
            "measurement.appearance_gate" => m.measurement.appearance_gate = f(v)?,
            "measurement.clutter_intensity" => m.measurement.clutter_intensity = f(v)?,
            "measurement.mode_stay" => m.measurement.mode_stay = f(v)?,
            "fuzzy.rule" => {
                m.fuzzy.rules =
                    RuleTable::named(v).ok_or_else(|| Error::Config(format!("fuzzy.rule: unknown rule table '{v}'")))?
            }
            "fuzzy.lookup" => m.fuzzy.lookup = parse_bool(key, v)?,
            "fuzzy.p_min" => m.fuzzy.detect_prob.lo = f(v)?,
            "fuzzy.p_max" => m.fuzzy.detect_prob.hi = f(v)?,
            "birth.tau_B" => self.birth.assoc_threshold = f(v)?,
            "birth.max_prob" => self.birth.max_birth_prob = f(v)?,
            "birth.lambda" => self.birth.expected_births = f(v)?,
            "birth.recall_similarity" => self.birth.recall_similarity = f(v)?,
            "birth.recall_window" => self.birth.recall_window = parse_int(key, v)?,
            "birth.position_std" => self.birth.position_std = f(v)?,
            "birth.velocity_std" => self.birth.velocity_std = f(v)?,
            "birth.aspect_std" => self.birth.aspect_std = f(v)?,
            "birth.aspect_rate_std" => self.birth.aspect_rate_std = f(v)?,
            "estimator.theta_u" => self.estimator.upper = f(v)?,
            "estimator.theta_l" => self.estimator.lower = f(v)?,
            "estimator.existence_floor" => self.estimator.existence_floor = f(v)?,
            "ospa.cutoff" => self.ospa.cutoff = f(v)?,
            "ospa.order" => self.ospa.order = f(v)?,
            _ => {
                let set = key.strip_prefix("fuzzy.").and_then(|rest| rest.rsplit_once('.'));
                let Some((var, level)) = set else {
                    return Err(Error::Config(format!("unknown key '{key}'")));
                };
                let variable = match var {
                    "ioa" => &mut m.fuzzy.ioa,
                    "area_ratio" => &mut m.fuzzy.area_ratio,
                    "detect" => &mut m.fuzzy.detect_prob,
                    _ => return Err(Error::Config(format!("unknown key '{key}'"))),
                };
                let idx = LEVELS
                    .iter()
                    .position(|l| *l == level)
                    .ok_or_else(|| Error::Config(format!("unknown key '{key}'")))?;
                let [a, b, c, d] = parse_list::<4>(key, v)?;
                variable.sets[idx] = Trapezoid::new(a, b, c, d);
            }
        }
        Ok(())
    }

    /// Every key with its current value, in documentation order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let m = &self.model;
        let mut out: Vec<(String, String)> = vec![
            ("filter".into(), self.filter.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("hypotheses".into(), m.max_hypotheses.to_string()),
            ("weight_floor".into(), m.weight_floor.to_string()),
            (
                "solver".into(),
                match m.solver.kind {
                    SolverKind::Auto => "auto",
                    SolverKind::Murty => "murty",
                    SolverKind::Gibbs => "gibbs",
                }
                .into(),
            ),
            ("solver.murty_max_size".into(), m.solver.murty_max_size.to_string()),
            ("solver.gibbs_factor".into(), m.solver.gibbs_factor.to_string()),
            ("solver.gibbs_max_iterations".into(), m.solver.gibbs_max_iterations.to_string()),
            ("motion.period".into(), m.motion.period.to_string()),
            ("motion.noise".into(), join(&m.motion.noise)),
            ("survival.P_S".into(), m.survival.base_survival.to_string()),
            ("survival.tau_L".into(), m.survival.lifespan_scale.to_string()),
            ("survival.tau_S".into(), m.survival.shrink_scale.to_string()),
            ("survival.k_S".into(), m.survival.shrink_offset.to_string()),
            ("survival.beta_min".into(), m.survival.min_aspect.to_string()),
            ("measurement.obs_noise".into(), join(&m.measurement.obs_noise)),
            ("measurement.phi".into(), m.measurement.appearance_power.to_string()),
            ("measurement.kinematic_gate".into(), m.measurement.kinematic_gate.to_string()),
            ("measurement.appearance_gate".into(), m.measurement.appearance_gate.to_string()),
            ("measurement.clutter_intensity".into(), m.measurement.clutter_intensity.to_string()),
            ("measurement.mode_stay".into(), m.measurement.mode_stay.to_string()),
            ("fuzzy.rule".into(), m.fuzzy.rules.name.clone()),
            ("fuzzy.lookup".into(), m.fuzzy.lookup.to_string()),
            ("fuzzy.p_min".into(), m.fuzzy.detect_prob.lo.to_string()),
            ("fuzzy.p_max".into(), m.fuzzy.detect_prob.hi.to_string()),
        ];
        for (name, var) in [("ioa", &m.fuzzy.ioa), ("area_ratio", &m.fuzzy.area_ratio), ("detect", &m.fuzzy.detect_prob)] {
            for (level, set) in LEVELS.iter().zip(&var.sets) {
                out.push((format!("fuzzy.{name}.{level}"), trapezoid(set)));
            }
        }
        let b = &self.birth;
        let e = &self.estimator;
        out.extend([
            ("birth.tau_B".into(), b.assoc_threshold.to_string()),
            ("birth.max_prob".into(), b.max_birth_prob.to_string()),
            ("birth.lambda".into(), b.expected_births.to_string()),
            ("birth.recall_similarity".into(), b.recall_similarity.to_string()),
            ("birth.recall_window".into(), b.recall_window.to_string()),
            ("birth.position_std".into(), b.position_std.to_string()),
            ("birth.velocity_std".into(), b.velocity_std.to_string()),
            ("birth.aspect_std".into(), b.aspect_std.to_string()),
            ("birth.aspect_rate_std".into(), b.aspect_rate_std.to_string()),
            ("estimator.theta_u".into(), e.upper.to_string()),
            ("estimator.theta_l".into(), e.lower.to_string()),
            ("estimator.existence_floor".into(), e.existence_floor.to_string()),
            ("ospa.cutoff".into(), self.ospa.cutoff.to_string()),
            ("ospa.order".into(), self.ospa.order.to_string()),
        ]);
        out
    }

    pub fn validate(&self) -> Result<()> {
        FilterModel::new(&self.model)?;
        self.birth.validate()?;
        self.estimator.validate()?;
        self.ospa.validate()
    }

    /// Validated filter model.
    pub fn filter_model(&self) -> Result<FilterModel> {
        FilterModel::new(&self.model)
    }

    /// The detection-probability model on its own (for inspection).
    pub fn detection_model(&self) -> Result<FuzzyDetectionModel> {
        FuzzyDetectionModel::new(self.model.fuzzy.clone())
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.entries() {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}
