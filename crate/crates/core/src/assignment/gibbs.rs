use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AssignmentProblem, AssignmentSolution, Outcome};

/// Systematic-scan Gibbs sampler over valid assignments, with stationary
/// distribution proportional to `exp(−total cost)`.
pub struct GibbsSampler<'a> {
    problem: &'a AssignmentProblem,
    rng: ChaCha8Rng,
    state: Vec<Outcome>,
    owner: Vec<Option<usize>>,
    choices: Vec<(Outcome, f64)>,
}

impl<'a> GibbsSampler<'a> {
    /// Starts from the all-miss assignment; rows whose miss entry is
    /// forbidden start dead instead.
    pub fn new(problem: &'a AssignmentProblem, seed: u64) -> Self {
        let state = problem
            .rows()
            .iter()
            .map(|r| if r.miss.is_finite() || !r.death.is_finite() { Outcome::Missed } else { Outcome::Dead })
            .collect();
        GibbsSampler {
            problem,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state,
            owner: vec![None; problem.num_measurements()],
            choices: Vec::new(),
        }
    }

    pub fn state(&self) -> &[Outcome] {
        &self.state
    }

    /// Resamples every row once, in order, conditioned on the others.
    pub fn sweep(&mut self) -> &[Outcome] {
        for (i, row) in self.problem.rows().iter().enumerate() {
            self.choices.clear();
            self.choices.push((Outcome::Missed, row.miss));
            self.choices.push((Outcome::Dead, row.death));
            for &(j, c) in &row.detect {
                if self.owner[j].is_none_or(|o| o == i) {
                    self.choices.push((Outcome::Detected(j), c));
                }
            }
            let min = self.choices.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            if !min.is_finite() {
                continue;
            }
            let total: f64 = self.choices.iter().map(|c| (min - c.1).exp()).sum();
            let mut u = self.rng.random::<f64>() * total;
            let mut pick = self.choices.iter().rposition(|c| c.1.is_finite()).expect("finite choice");
            for (k, c) in self.choices.iter().enumerate() {
                let w = (min - c.1).exp();
                if u < w {
                    pick = k;
                    break;
                }
                u -= w;
            }
            let next = self.choices[pick].0;
            if let Outcome::Detected(j) = self.state[i] {
                self.owner[j] = None;
            }
            if let Outcome::Detected(j) = next {
                self.owner[j] = Some(i);
            }
            self.state[i] = next;
        }
        &self.state
    }
}

/// Distinct assignments visited by a Gibbs chain of `iterations` sweeps
/// (including its initial state), in ascending (cost, columns) order.
pub fn gibbs_sample(problem: &AssignmentProblem, iterations: usize, seed: u64) -> Vec<AssignmentSolution> {
    let mut sampler = GibbsSampler::new(problem, seed);
    let mut seen: HashSet<Vec<Outcome>> = HashSet::new();
    let mut out = Vec::new();
    let mut visit = |state: &[Outcome], out: &mut Vec<AssignmentSolution>| {
        if problem.is_valid(state) && !seen.contains(state) {
            seen.insert(state.to_vec());
            out.push(problem.solution(state.to_vec()));
        }
    };
    visit(&sampler.state().to_vec(), &mut out);
    for _ in 0..iterations {
        let state = sampler.sweep().to_vec();
        visit(&state, &mut out);
    }
    out.sort_by(AssignmentSolution::rank_cmp);
    out
}
