//! Best-first branch and bound over complementarity pairs.
//!
//! Each pair `(plus, minus)` of non-negative variables may not both be
//! positive. A node whose relaxation violates a pair is split by pinning the
//! upper bound of one side to zero.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::{
    simplex::solve_with_bounds, ComplementarityPair, LpError, LpProblem, LpSolution, LpStatus,
    COMPLEMENTARITY_TOL,
};

pub const DEFAULT_NODE_LIMIT: usize = 20_000;

struct Node {
    id: usize,
    bound: f64,
    upper: Vec<f64>,
    relax: LpSolution,
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
    // Max-heap: higher bound first, then the older node.
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

/// Maximizes `problem` subject to `x[plus] * x[minus] == 0` for every pair.
pub fn solve_milp(problem: &LpProblem, pairs: &[ComplementarityPair]) -> Result<LpSolution, LpError> {
    solve_milp_with_limit(problem, pairs, DEFAULT_NODE_LIMIT)
}

pub fn solve_milp_with_limit(
    problem: &LpProblem,
    pairs: &[ComplementarityPair],
    node_limit: usize,
) -> Result<LpSolution, LpError> {
    problem.validate()?;
    let n = problem.num_vars();
    for p in pairs {
        if p.plus >= n || p.minus >= n || p.plus == p.minus {
            return Err(LpError::InvalidPair(p.plus, p.minus));
        }
        if problem.lower()[p.plus] < 0.0 || problem.lower()[p.minus] < 0.0 {
            return Err(LpError::InvalidPair(p.plus, p.minus));
        }
    }

    let lower = problem.lower();
    let mut heap = BinaryHeap::new();
    let mut next_id = 0usize;
    let mut incumbent: Option<LpSolution> = None;
    let mut saw_unbounded = false;
    let mut explored = 0usize;

    let root = solve_with_bounds(problem, lower, problem.upper())?;
    match root.status {
        LpStatus::Infeasible => return Ok(LpSolution::infeasible()),
        LpStatus::Unbounded => return Ok(LpSolution::unbounded()),
        LpStatus::Optimal => {}
    }
    heap.push(Node {
        id: next_id,
        bound: root.objective,
        upper: problem.upper().to_vec(),
        relax: root,
    });
    next_id += 1;

    while let Some(node) = heap.pop() {
        let relax = &node.relax;
        if let Some(inc) = &incumbent {
            if node.bound <= inc.objective + 1e-9 * (1.0 + inc.objective.abs()) {
                break;
            }
        }
        explored += 1;
        if explored > node_limit {
            return Err(LpError::NodeLimit(node_limit));
        }

        let Some(pair) = most_violated(pairs, &relax.x) else {
            let better = incumbent
                .as_ref()
                .is_none_or(|inc| relax.objective > inc.objective);
            if better {
                incumbent = Some(relax.clone());
            }
            continue;
        };

        for pinned in [pair.plus, pair.minus] {
            let mut upper = node.upper.clone();
            upper[pinned] = 0.0;
            let child = solve_with_bounds(problem, lower, &upper)?;
            match child.status {
                LpStatus::Infeasible => continue,
                LpStatus::Unbounded => {
                    saw_unbounded = true;
                    continue;
                }
                LpStatus::Optimal => {}
            }
            if let Some(inc) = &incumbent {
                if child.objective <= inc.objective {
                    continue;
                }
            }
            heap.push(Node {
                id: next_id,
                bound: child.objective,
                upper,
                relax: child,
            });
            next_id += 1;
        }
    }

    match incumbent {
        Some(mut best) => {
            // clean the tiny side of each pair so callers see an exact zero
            for p in pairs {
                if best.x[p.plus] * best.x[p.minus] != 0.0 {
                    if best.x[p.plus] < best.x[p.minus] {
                        best.x[p.plus] = 0.0;
                    } else {
                        best.x[p.minus] = 0.0;
                    }
                }
            }
            best.objective = problem.evaluate(&best.x);
            Ok(best)
        }
        None if saw_unbounded => Ok(LpSolution::unbounded()),
        None => Ok(LpSolution::infeasible()),
    }
}

fn most_violated(pairs: &[ComplementarityPair], x: &[f64]) -> Option<ComplementarityPair> {
    let mut best: Option<(ComplementarityPair, f64)> = None;
    for &p in pairs {
        let (a, b) = (x[p.plus], x[p.minus]);
        let small = a.min(b);
        if a * b <= COMPLEMENTARITY_TOL {
            continue;
        }
        if best.is_none_or(|(_, s)| small > s) {
            best = Some((p, small));
        }
    }
    best.map(|(p, _)| p)
}
