//! Depth-first branch-and-bound over an [`LpBackend`] relaxation, with
//! optional lazy rows checked at every integer point.

use std::time::Instant;

use super::{LpBackend, LpStatus, RowSense};

/// A row produced by the lazy callback: `(sense, rhs, entries)`.
pub type LazyRow = (RowSense, f64, Vec<(usize, f64)>);

#[derive(Debug, Clone)]
pub struct MilpOptions {
    pub deadline: Option<Instant>,
    pub node_limit: usize,
    pub int_tol: f64,
    /// Stop at the first integer point accepted by the lazy callback.
    pub first_solution: bool,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self { deadline: None, node_limit: usize::MAX, int_tol: 1e-6, first_solution: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MilpStatus {
    Optimal,
    Infeasible,
    /// A limit was hit after an incumbent was found.
    Feasible,
    /// A limit was hit before any incumbent was found.
    NoSolution,
    Numerical,
}

#[derive(Debug, Clone)]
pub struct MilpResult {
    pub status: MilpStatus,
    pub objective: Option<f64>,
    pub values: Option<Vec<f64>>,
    pub nodes: usize,
}

/// Minimizes over `lp` with the listed columns restricted to integers.
///
/// `lazy` sees every integer LP optimum; returning rows rejects the point,
/// the rows are added permanently and the node is re-solved.
pub fn solve_milp<B: LpBackend + ?Sized>(
    lp: &mut B,
    integers: &[usize],
    opts: &MilpOptions,
    lazy: &mut dyn FnMut(&[f64]) -> Vec<LazyRow>,
) -> MilpResult {
    let root_bounds: Vec<(f64, f64)> = integers.iter().map(|&j| lp.bounds(j)).collect();
    let mut stack: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new()];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut nodes = 0usize;
    let mut limited = false;
    let mut numerical = false;

    'nodes: while let Some(fixes) = stack.pop() {
        if nodes >= opts.node_limit || opts.deadline.is_some_and(|d| Instant::now() >= d) {
            limited = true;
            break;
        }
        nodes += 1;
        for (k, &j) in integers.iter().enumerate() {
            let (lo, hi) = root_bounds[k];
            lp.set_bounds(j, lo, hi).expect("valid column");
        }
        for &(j, lo, hi) in &fixes {
            lp.set_bounds(j, lo, hi).expect("valid column");
        }
        loop {
            match lp.solve() {
                LpStatus::Optimal => {}
                LpStatus::Infeasible => continue 'nodes,
                LpStatus::Unbounded | LpStatus::Numerical => {
                    numerical = true;
                    continue 'nodes;
                }
            }
            let obj = lp.objective();
            if let Some((b, _)) = &best {
                if obj >= *b - 1e-9 {
                    continue 'nodes;
                }
            }
            let x = lp.primal();
            let mut branch: Option<(usize, f64)> = None;
            let mut best_frac = opts.int_tol;
            for &j in integers {
                let f = (x[j] - x[j].round()).abs();
                if f > best_frac {
                    best_frac = f;
                    branch = Some((j, x[j]));
                }
            }
            match branch {
                None => {
                    let rows = lazy(&x);
                    if rows.is_empty() {
                        best = Some((obj, x));
                        if opts.first_solution {
                            limited = !stack.is_empty();
                            break 'nodes;
                        }
                        continue 'nodes;
                    }
                    for (sense, rhs, entries) in rows {
                        lp.add_row(sense, rhs, &entries).expect("lazy row over existing columns");
                    }
                }
                Some((j, v)) => {
                    let (lo, hi) = current_bounds(&fixes, integers, &root_bounds, j);
                    let down = (j, lo, v.floor());
                    let up = (j, v.ceil(), hi);
                    let mut left = fixes.clone();
                    left.push(down);
                    let mut right = fixes;
                    right.push(up);
                    // Dive towards the nearer integer first.
                    if v - v.floor() < 0.5 {
                        stack.push(right);
                        stack.push(left);
                    } else {
                        stack.push(left);
                        stack.push(right);
                    }
                    continue 'nodes;
                }
            }
        }
    }

    for (k, &j) in integers.iter().enumerate() {
        let (lo, hi) = root_bounds[k];
        lp.set_bounds(j, lo, hi).expect("valid column");
    }

    let status = match (&best, limited, numerical) {
        (Some(_), false, false) => MilpStatus::Optimal,
        (Some(_), _, _) => MilpStatus::Feasible,
        (None, true, _) => MilpStatus::NoSolution,
        (None, false, true) => MilpStatus::Numerical,
        (None, false, false) => MilpStatus::Infeasible,
    };
    MilpResult { status, objective: best.as_ref().map(|b| b.0), values: best.map(|b| b.1), nodes }
}

fn current_bounds(fixes: &[(usize, f64, f64)], integers: &[usize], root: &[(f64, f64)], j: usize) -> (f64, f64) {
    let k = integers.iter().position(|&c| c == j).expect("integer column");
    let mut b = root[k];
    for &(c, lo, hi) in fixes {
        if c == j {
            b = (lo, hi);
        }
    }
    b
}
