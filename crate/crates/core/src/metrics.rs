//! Optimality gaps, RMSD and the benchmark table.
//!
//! Gaps are fractions. An instance a strategy found no solution for counts
//! as gap 1. A proved-infeasible instance counts as solved to optimality
//! with gap 0.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bnp::{solve, BnpError, SolveOptions, SolveResult, SolveStatus};
use crate::model::Instance;
use crate::pcg::Strategy;

/// Slack allowed when a lower bound overshoots the upper bound.
const GAP_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("upper bound {0} is not positive")]
    NonPositiveUpper(f64),
    #[error("lower bound {lb} exceeds upper bound {ub}")]
    BoundsCrossed { ub: f64, lb: f64 },
    #[error("rmsd of an empty list")]
    Empty,
    #[error(transparent)]
    Solve(#[from] BnpError),
}

fn gap(ub: Option<f64>, lb: f64) -> Result<f64, MetricsError> {
    let Some(ub) = ub else {
        return Ok(1.0);
    };
    let scale = ub.abs().max(1.0);
    if lb > ub + GAP_TOL * scale {
        return Err(MetricsError::BoundsCrossed { ub, lb });
    }
    if ub <= 0.0 {
        // A zero-cost optimum closes the gap.
        if ub == 0.0 && lb.abs() <= GAP_TOL {
            return Ok(0.0);
        }
        return Err(MetricsError::NonPositiveUpper(ub));
    }
    Ok(((ub - lb) / ub).clamp(0.0, 1.0))
}

/// `(UB - LB) / UB`; `None` means no solution was found.
pub fn gap_h(ub: Option<f64>, lb: f64) -> Result<f64, MetricsError> {
    gap(ub, lb)
}

/// `(BUB - LB) / BUB` against the best known solution.
pub fn gap_b(bub: Option<f64>, lb: f64) -> Result<f64, MetricsError> {
    gap(bub, lb)
}

/// Root of the mean squared gap.
pub fn rmsd(gaps: &[f64]) -> Result<f64, MetricsError> {
    if gaps.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok((gaps.iter().map(|g| g * g).sum::<f64>() / gaps.len() as f64).sqrt())
}

/// What the report needs from one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub instance: String,
    pub strategy: String,
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub bound: f64,
    pub select_secs: f64,
    pub total_secs: f64,
}

impl From<&SolveResult> for BenchRun {
    fn from(r: &SolveResult) -> Self {
        Self {
            instance: r.instance.clone(),
            strategy: r.strategy.clone(),
            status: r.status,
            objective: r.objective(),
            bound: r.bound,
            select_secs: r.stats.select_secs,
            total_secs: r.stats.total_secs,
        }
    }
}

impl BenchRun {
    fn solved(&self) -> bool {
        self.objective.is_some() || self.status == SolveStatus::InfeasibleProved
    }

    fn optimal(&self) -> bool {
        matches!(self.status, SolveStatus::Optimal | SolveStatus::InfeasibleProved)
    }
}

/// One table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub strategy: String,
    pub instances: usize,
    pub solved_pct: f64,
    pub optimal_pct: f64,
    /// Means over the instances some strategy did not solve to optimality;
    /// `None` when that subset is empty.
    pub gap_h: Option<f64>,
    pub gap_b: Option<f64>,
    pub rmsd: Option<f64>,
    pub overhead_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    /// Size of the subset the gap columns average over.
    pub gap_instances: usize,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

impl Report {
    /// Builds the table from runs. Rows follow `strategies`; instances are
    /// the distinct names seen in `runs`, and each strategy should have one
    /// run per instance.
    pub fn from_runs(strategies: &[String], runs: &[BenchRun]) -> Result<Self, MetricsError> {
        let mut instances: Vec<&str> = Vec::new();
        for r in runs {
            if !instances.contains(&r.instance.as_str()) {
                instances.push(&r.instance);
            }
        }
        let find = |s: &str, i: &str| runs.iter().find(|r| r.strategy == s && r.instance == i);
        let hard: Vec<&str> = instances
            .iter()
            .copied()
            .filter(|i| strategies.iter().any(|s| !find(s, i).is_some_and(BenchRun::optimal)))
            .collect();
        let best =
            |i: &str| runs.iter().filter(|r| r.instance == i).filter_map(|r| r.objective).min_by(|a, b| a.total_cmp(b));

        let mut rows = Vec::with_capacity(strategies.len());
        for s in strategies {
            let mine: Vec<&BenchRun> = runs.iter().filter(|r| &r.strategy == s).collect();
            let n = instances.len();
            let pct = |count: usize| if n == 0 { 0.0 } else { 100.0 * count as f64 / n as f64 };
            let solved = instances.iter().filter(|i| find(s, i).is_some_and(BenchRun::solved)).count();
            let optimal = instances.iter().filter(|i| find(s, i).is_some_and(BenchRun::optimal)).count();

            let (mut gh, mut gb) = (Vec::new(), Vec::new());
            for &i in &hard {
                match find(s, i) {
                    Some(r) if r.status == SolveStatus::InfeasibleProved => {
                        gh.push(0.0);
                        gb.push(0.0);
                    }
                    Some(r) if r.objective.is_some() => {
                        gh.push(gap_h(r.objective, r.bound)?);
                        gb.push(gap_b(best(i), r.bound)?);
                    }
                    _ => {
                        gh.push(1.0);
                        gb.push(1.0);
                    }
                }
            }
            let overhead: Vec<f64> = mine
                .iter()
                .filter(|r| r.total_secs > 0.0)
                .map(|r| (100.0 * r.select_secs / r.total_secs).clamp(0.0, 100.0))
                .collect();
            rows.push(ReportRow {
                strategy: s.clone(),
                instances: n,
                solved_pct: pct(solved),
                optimal_pct: pct(optimal),
                gap_h: mean(&gh),
                gap_b: mean(&gb),
                rmsd: rmsd(&gb).ok(),
                overhead_pct: mean(&overhead).unwrap_or(0.0),
            });
        }
        Ok(Self { rows, gap_instances: hard.len() })
    }

    /// Aligned plain-text table.
    pub fn to_text(&self) -> String {
        let cell = |v: Option<f64>, pct: bool| match v {
            None => "-".to_string(),
            Some(x) if pct => format!("{:.2}%", 100.0 * x),
            Some(x) => format!("{x:.3}"),
        };
        let header = ["strategy", "Solved", "Optimal", "Gap_H", "Gap_B", "RMSD(gap)", "Overhead"];
        let body: Vec<[String; 7]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.strategy.clone(),
                    format!("{:.1}%", r.solved_pct),
                    format!("{:.1}%", r.optimal_pct),
                    cell(r.gap_h, true),
                    cell(r.gap_b, true),
                    cell(r.rmsd, false),
                    format!("{:.2}%", r.overhead_pct),
                ]
            })
            .collect();
        let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for row in &body {
            for (w, c) in width.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let mut line = |cells: Vec<&str>| {
            let mut s = String::new();
            for (c, (cell, w)) in cells.iter().zip(&width).enumerate() {
                if c == 0 {
                    let _ = write!(s, "{cell:<w$}");
                } else {
                    let _ = write!(s, "  {cell:>w$}");
                }
            }
            out.push_str(s.trim_end());
            out.push('\n');
        };
        line(header.to_vec());
        for row in &body {
            line(row.iter().map(String::as_str).collect());
        }
        let _ = writeln!(out, "gap columns over {} instance(s)", self.gap_instances);
        out
    }

    /// One JSON object per row.
    pub fn to_json_lines(&self) -> String {
        self.rows.iter().map(|r| serde_json::to_string(r).expect("serializable") + "\n").collect()
    }
}

/// Solves every instance with every strategy, one after the other.
pub fn benchmark(
    instances: &[Instance],
    strategies: &mut [Box<dyn Strategy>],
    opts: &SolveOptions,
) -> Result<(Report, Vec<SolveResult>), MetricsError> {
    let mut results = Vec::with_capacity(instances.len() * strategies.len());
    for inst in instances {
        for s in strategies.iter_mut() {
            let r = solve(inst, s.as_mut(), opts)?;
            log::info!("{} {}: {} {:?}", inst.name, r.strategy, r.status.as_str(), r.objective());
            results.push(r);
        }
    }
    let names: Vec<String> = strategies.iter().map(|s| s.name()).collect();
    let runs: Vec<BenchRun> = results.iter().map(BenchRun::from).collect();
    Ok((Report::from_runs(&names, &runs)?, results))
}
