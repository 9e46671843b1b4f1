//! Association problems of the joint prediction–update step and solvers that
//! rank or sample their solutions.
//!
//! A problem has one row per candidate label (survivors, then births) and the
//! column layout `[detections 0..M | miss M..M+P | death M+P..M+2P]`, where
//! row `i` may only use its own miss and death columns. Costs are negative
//! log-weights; forbidden entries are `+∞`. Only finite detection entries are
//! stored.

mod gibbs;
mod lap;
mod murty;

use std::cmp::Ordering;

use nalgebra::DMatrix;

use crate::dynamics::TrackLabel;
use crate::{Error, Result};

pub use gibbs::{gibbs_sample, GibbsSampler};
pub use lap::solve_lap;
pub use murty::murty_kbest;

/// What happens to one row's label in a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    Detected(usize),
    Missed,
    Dead,
}

/// Costs of one row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowCosts {
    pub label: TrackLabel,
    /// Finite detection costs `(measurement, cost)`, ascending in measurement.
    pub detect: Vec<(usize, f64)>,
    pub miss: f64,
    pub death: f64,
}

impl RowCosts {
    pub fn detection_cost(&self, j: usize) -> f64 {
        match self.detect.binary_search_by_key(&j, |&(m, _)| m) {
            Ok(k) => self.detect[k].1,
            Err(_) => f64::INFINITY,
        }
    }

    pub fn outcome_cost(&self, outcome: Outcome) -> f64 {
        match outcome {
            Outcome::Detected(j) => self.detection_cost(j),
            Outcome::Missed => self.miss,
            Outcome::Dead => self.death,
        }
    }
}

/// Input row of [`build_cost_matrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct RowInput {
    pub label: TrackLabel,
    /// `P̄_S` for survivors, `P_B` for births.
    pub existence: f64,
    /// `ψ̄_z` per measurement (zero when gated out).
    pub detect: Vec<f64>,
    /// `ψ̄_0`.
    pub miss: f64,
}

fn neg_ln(eta: f64) -> f64 {
    if eta > 0.0 {
        -eta.ln()
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentProblem {
    rows: Vec<RowCosts>,
    measurements: usize,
}

impl AssignmentProblem {
    pub fn new(rows: Vec<RowCosts>, measurements: usize) -> Self {
        debug_assert!(rows.iter().all(|r| r.detect.windows(2).all(|w| w[0].0 < w[1].0)));
        debug_assert!(rows.iter().all(|r| r.detect.iter().all(|&(j, c)| j < measurements && c.is_finite())));
        AssignmentProblem { rows, measurements }
    }

    /// Builds a problem from a dense `P × (M + 2P)` matrix.
    pub fn from_dense(labels: &[TrackLabel], costs: &DMatrix<f64>) -> Result<Self> {
        let p = labels.len();
        if costs.nrows() != p || costs.ncols() < 2 * p {
            return Err(Error::Model("cost matrix shape does not match its labels".into()));
        }
        let m = costs.ncols() - 2 * p;
        let rows = labels
            .iter()
            .enumerate()
            .map(|(i, &label)| RowCosts {
                label,
                detect: (0..m).filter(|&j| costs[(i, j)].is_finite()).map(|j| (j, costs[(i, j)])).collect(),
                miss: costs[(i, m + i)],
                death: costs[(i, m + p + i)],
            })
            .collect();
        Ok(AssignmentProblem { rows, measurements: m })
    }

    pub fn rows(&self) -> &[RowCosts] {
        &self.rows
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_measurements(&self) -> usize {
        self.measurements
    }

    pub fn num_columns(&self) -> usize {
        self.measurements + 2 * self.rows.len()
    }

    pub fn row_labels(&self) -> Vec<TrackLabel> {
        self.rows.iter().map(|r| r.label).collect()
    }

    /// Entry `C[i][col]` of the dense cost matrix.
    pub fn cost(&self, i: usize, col: usize) -> f64 {
        let (m, p) = (self.measurements, self.rows.len());
        match self.column_outcome(i, col) {
            Some(o) => self.rows[i].outcome_cost(o),
            None => {
                debug_assert!(col < m + 2 * p);
                f64::INFINITY
            }
        }
    }

    /// The outcome column `col` stands for in row `i`, if the entry is structurally allowed.
    fn column_outcome(&self, i: usize, col: usize) -> Option<Outcome> {
        let (m, p) = (self.measurements, self.rows.len());
        if col < m {
            Some(Outcome::Detected(col))
        } else if col == m + i {
            Some(Outcome::Missed)
        } else if col == m + p + i {
            Some(Outcome::Dead)
        } else {
            None
        }
    }

    pub fn column(&self, i: usize, outcome: Outcome) -> usize {
        match outcome {
            Outcome::Detected(j) => j,
            Outcome::Missed => self.measurements + i,
            Outcome::Dead => self.measurements + self.rows.len() + i,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.num_rows(), self.num_columns(), |i, c| self.cost(i, c))
    }

    /// Total cost of `outcomes`, summed in row order.
    pub fn total_cost(&self, outcomes: &[Outcome]) -> f64 {
        outcomes.iter().zip(&self.rows).map(|(&o, r)| r.outcome_cost(o)).sum()
    }

    /// Whether `outcomes` uses every measurement at most once and only finite entries.
    pub fn is_valid(&self, outcomes: &[Outcome]) -> bool {
        if outcomes.len() != self.rows.len() {
            return false;
        }
        let mut used = vec![false; self.measurements];
        for (o, r) in outcomes.iter().zip(&self.rows) {
            if let Outcome::Detected(j) = *o {
                if j >= self.measurements || std::mem::replace(&mut used[j], true) {
                    return false;
                }
            }
            if !r.outcome_cost(*o).is_finite() {
                return false;
            }
        }
        true
    }

    pub(crate) fn solution(&self, outcomes: Vec<Outcome>) -> AssignmentSolution {
        let cost = self.total_cost(&outcomes);
        let columns = outcomes.iter().enumerate().map(|(i, &o)| self.column(i, o)).collect();
        AssignmentSolution { outcomes, cost, columns }
    }
}

/// Builds the cost matrix for survivors and births from detection weights.
///
/// Each row uses `e·ψ̄_z` to detect, `e·ψ̄_0` to be missed and `1 − e` to
/// die (or not be born), `e` being its survival or birth probability.
pub fn build_cost_matrix(survivors: &[RowInput], births: &[RowInput]) -> AssignmentProblem {
    let m = survivors.iter().chain(births).map(|r| r.detect.len()).max().unwrap_or(0);
    let rows = survivors
        .iter()
        .chain(births)
        .map(|r| RowCosts {
            label: r.label,
            detect: r
                .detect
                .iter()
                .enumerate()
                .map(|(j, &psi)| (j, neg_ln(r.existence * psi)))
                .filter(|(_, c)| c.is_finite())
                .collect(),
            miss: neg_ln(r.existence * r.miss),
            death: neg_ln(1.0 - r.existence),
        })
        .collect();
    AssignmentProblem::new(rows, m)
}

/// One valid assignment and its total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentSolution {
    pub outcomes: Vec<Outcome>,
    pub cost: f64,
    columns: Vec<usize>,
}

impl AssignmentSolution {
    /// The dense column selected by every row.
    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    /// Ordering by cost, then lexicographically by selected columns.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        self.cost.total_cmp(&other.cost).then_with(|| self.columns.cmp(&other.columns))
    }
}

/// Largest problem [`enumerate_all`] accepts.
pub const ENUMERATION_LIMIT: usize = 6;

/// Every valid assignment, sorted by cost then columns.
pub fn enumerate_all(problem: &AssignmentProblem) -> Result<Vec<AssignmentSolution>> {
    if problem.num_rows() > ENUMERATION_LIMIT || problem.num_measurements() > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            rows: problem.num_rows(),
            measurements: problem.num_measurements(),
        });
    }
    fn recurse(
        problem: &AssignmentProblem,
        i: usize,
        used: &mut [bool],
        current: &mut Vec<Outcome>,
        out: &mut Vec<AssignmentSolution>,
    ) {
        if i == problem.num_rows() {
            out.push(problem.solution(current.clone()));
            return;
        }
        let row = &problem.rows[i];
        let mut choices: Vec<Outcome> = row.detect.iter().map(|&(j, _)| Outcome::Detected(j)).collect();
        choices.extend([Outcome::Missed, Outcome::Dead]);
        for o in choices {
            if !row.outcome_cost(o).is_finite() {
                continue;
            }
            if let Outcome::Detected(j) = o {
                if used[j] {
                    continue;
                }
                used[j] = true;
            }
            current.push(o);
            recurse(problem, i + 1, used, current, out);
            current.pop();
            if let Outcome::Detected(j) = o {
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    recurse(problem, 0, &mut vec![false; problem.num_measurements()], &mut Vec::new(), &mut out);
    out.sort_by(AssignmentSolution::rank_cmp);
    Ok(out)
}
