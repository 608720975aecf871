//! Linear programming backend.
//!
//! Sign convention for duals (minimization): a `≥` row has a dual `≥ 0`,
//! a `≤` row has a dual `≤ 0`, and the reduced cost of column `j` is
//! `c_j − Σ_i y_i a_ij`.

mod milp;
mod simplex;

pub use milp::{solve_milp, LazyRow, MilpOptions, MilpResult, MilpStatus};
pub use simplex::RevisedSimplex;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// The engine lost numerical control; see the diagnostics.
    Numerical,
}

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("row index {0} out of range")]
    RowOutOfRange(usize),
    #[error("column index {0} out of range")]
    ColumnOutOfRange(usize),
    #[error("non-finite coefficient {0}")]
    NonFinite(f64),
    #[error("lower bound {0} must be finite and not exceed upper bound {1}")]
    BadBounds(f64, f64),
}

/// Pluggable LP engine with incremental modification and warm re-solve.
pub trait LpBackend {
    /// Adds a row over existing columns and returns its index.
    fn add_row(&mut self, sense: RowSense, rhs: f64, entries: &[(usize, f64)]) -> Result<usize, LpError>;
    /// Adds a column over existing rows and returns its index.
    fn add_column(&mut self, cost: f64, lower: f64, upper: f64, entries: &[(usize, f64)]) -> Result<usize, LpError>;
    fn set_bounds(&mut self, col: usize, lower: f64, upper: f64) -> Result<(), LpError>;
    fn bounds(&self, col: usize) -> (f64, f64);
    fn solve(&mut self) -> LpStatus;
    fn status(&self) -> LpStatus;
    fn objective(&self) -> f64;
    fn primal(&self) -> Vec<f64>;
    fn duals(&self) -> Vec<f64>;
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    fn diagnostics(&self) -> Option<String> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpColumn {
    pub cost: f64,
    pub lower: f64,
    pub upper: f64,
    pub entries: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpRow {
    pub sense: RowSense,
    pub rhs: f64,
}

/// Plain minimization model, solved in one shot by [`solve`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LpModel {
    pub columns: Vec<LpColumn>,
    pub rows: Vec<LpRow>,
}

impl LpModel {
    pub fn add_row(&mut self, sense: RowSense, rhs: f64) -> usize {
        self.rows.push(LpRow { sense, rhs });
        self.rows.len() - 1
    }

    pub fn add_column(&mut self, cost: f64, lower: f64, upper: f64, entries: Vec<(usize, f64)>) -> usize {
        self.columns.push(LpColumn { cost, lower, upper, entries });
        self.columns.len() - 1
    }

    pub fn build(&self) -> Result<RevisedSimplex, LpError> {
        let mut lp = RevisedSimplex::new();
        for r in &self.rows {
            lp.add_row(r.sense, r.rhs, &[])?;
        }
        for c in &self.columns {
            lp.add_column(c.cost, c.lower, c.upper, &c.entries)?;
        }
        Ok(lp)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub primal: Vec<f64>,
    pub duals: Vec<f64>,
    pub diagnostics: Option<String>,
}

pub fn solve(model: &LpModel) -> Result<LpSolution, LpError> {
    let mut lp = model.build()?;
    let status = lp.solve();
    Ok(LpSolution {
        status,
        objective: lp.objective(),
        primal: lp.primal(),
        duals: lp.duals(),
        diagnostics: lp.diagnostics(),
    })
}
