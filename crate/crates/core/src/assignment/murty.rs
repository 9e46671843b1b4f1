use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::{lap::solve_lap, AssignmentProblem, AssignmentSolution, Outcome};

/// A subspace of assignments: some rows pinned to a column, some entries excluded.
struct Node {
    solution: AssignmentSolution,
    forced: Vec<Option<usize>>,
    forbidden: Vec<(usize, usize)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.solution.rank_cmp(&other.solution)
    }
}

struct Dense<'a> {
    problem: &'a AssignmentProblem,
    costs: Vec<f64>,
    n: usize,
    m: usize,
}

impl Dense<'_> {
    /// Best assignment in the subspace, solving only the unpinned rows.
    fn solve(&self, forced: &[Option<usize>], forbidden: &[(usize, usize)]) -> Option<AssignmentSolution> {
        let mut taken = vec![false; self.m];
        for &j in forced.iter().flatten() {
            taken[j] = true;
        }
        let free_rows: Vec<usize> = (0..self.n).filter(|&i| forced[i].is_none()).collect();
        let free_cols: Vec<usize> = (0..self.m).filter(|&j| !taken[j]).collect();
        let mut reduced = Vec::with_capacity(free_rows.len() * free_cols.len());
        for &i in &free_rows {
            reduced.extend(free_cols.iter().map(|&j| self.costs[i * self.m + j]));
        }
        for &(i, j) in forbidden {
            if let (Ok(r), Ok(c)) = (free_rows.binary_search(&i), free_cols.binary_search(&j)) {
                reduced[r * free_cols.len() + c] = f64::INFINITY;
            }
        }
        let local = solve_lap(&reduced, free_rows.len(), free_cols.len())?;
        let mut columns: Vec<usize> = forced.iter().map(|f| f.unwrap_or(usize::MAX)).collect();
        for (r, &i) in free_rows.iter().enumerate() {
            columns[i] = free_cols[local[r]];
        }
        let outcomes = columns.iter().enumerate().map(|(i, &c)| self.outcome(i, c)).collect();
        Some(self.problem.solution(outcomes))
    }

    fn outcome(&self, i: usize, col: usize) -> Outcome {
        let m = self.problem.num_measurements();
        if col < m {
            Outcome::Detected(col)
        } else if col == m + i {
            Outcome::Missed
        } else {
            debug_assert_eq!(col, m + self.n + i);
            Outcome::Dead
        }
    }
}

/// The `k` cheapest valid assignments in ascending (cost, columns) order.
///
/// Solutions tied with the `k`-th cost are all extracted before truncating, so
/// the tie-break is independent of the order Murty's partitioning finds them.
pub fn murty_kbest(problem: &AssignmentProblem, k: usize) -> Vec<AssignmentSolution> {
    if k == 0 {
        return Vec::new();
    }
    let (n, m) = (problem.num_rows(), problem.num_columns());
    let mut costs = Vec::with_capacity(n * m);
    for i in 0..n {
        costs.extend((0..m).map(|c| problem.cost(i, c)));
    }
    let dense = Dense { problem, costs, n, m };
    let mut heap = BinaryHeap::new();
    if let Some(solution) = dense.solve(&vec![None; n], &[]) {
        heap.push(Reverse(Node { solution, forced: vec![None; n], forbidden: Vec::new() }));
    }
    let mut out: Vec<AssignmentSolution> = Vec::new();
    while let Some(Reverse(node)) = heap.pop() {
        if out.len() >= k {
            let kth = out[k - 1].cost;
            if node.solution.cost > kth + 1e-9 * kth.abs().max(1.0) {
                break;
            }
        }
        let cols = node.solution.columns().to_vec();
        let mut forced = node.forced.clone();
        for i in 0..n {
            if forced[i].is_some() {
                continue;
            }
            let mut forbidden = node.forbidden.clone();
            forbidden.push((i, cols[i]));
            if let Some(solution) = dense.solve(&forced, &forbidden) {
                heap.push(Reverse(Node { solution, forced: forced.clone(), forbidden }));
            }
            forced[i] = Some(cols[i]);
        }
        out.push(node.solution);
        if out.len() >= k {
            out.sort_by(AssignmentSolution::rank_cmp);
        }
    }
    out.sort_by(AssignmentSolution::rank_cmp);
    out.truncate(k);
    out
}
