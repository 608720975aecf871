//! Dense bounded revised simplex.
//!
//! Rows are turned into equalities with one logical variable each
//! (`a·x + s = b`, `s ≥ 0` for `≤`, `s ≤ 0` for `≥`, `s = 0` for `=`).
//! The basis inverse is kept explicitly and refactorized periodically.
//! Phase 1 minimizes the sum of bound infeasibilities starting from
//! whatever basis is current, so any modification can be warm-started.

use super::{LpBackend, LpError, LpStatus, RowSense};

const FEAS_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const DEGENERATE_SWITCH: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Basic(usize),
    Lower,
    Upper,
    /// Free nonbasic variable sitting at zero.
    Zero,
}

#[derive(Debug, Clone)]
struct Var {
    cost: f64,
    lower: f64,
    upper: f64,
    entries: Vec<(usize, f64)>,
    status: Status,
}

impl Var {
    fn nonbasic_value(&self) -> f64 {
        match self.status {
            Status::Lower => self.lower,
            Status::Upper => self.upper,
            Status::Zero | Status::Basic(_) => 0.0,
        }
    }

    fn resting_status(lower: f64, upper: f64) -> Status {
        if lower.is_finite() {
            Status::Lower
        } else if upper.is_finite() {
            Status::Upper
        } else {
            Status::Zero
        }
    }
}

#[derive(Debug, Clone)]
pub struct RevisedSimplex {
    vars: Vec<Var>,
    /// Structural column index → variable id.
    structural: Vec<usize>,
    /// Row index → variable id of its logical.
    logical: Vec<usize>,
    rhs: Vec<f64>,
    /// Basis position → variable id.
    basis: Vec<usize>,
    binv: Vec<f64>,
    pivots_since_refactor: usize,
    status: LpStatus,
    x: Vec<f64>,
    y: Vec<f64>,
    objective: f64,
    iterations: usize,
    diagnostics: Option<String>,
    pub max_iterations: usize,
}

impl Default for RevisedSimplex {
    fn default() -> Self {
        Self::new()
    }
}

enum Step {
    Optimal,
    Infeasible,
    Unbounded,
    Progress { degenerate: bool },
}

impl RevisedSimplex {
    pub fn new() -> Self {
        Self {
            vars: Vec::new(),
            structural: Vec::new(),
            logical: Vec::new(),
            rhs: Vec::new(),
            basis: Vec::new(),
            binv: Vec::new(),
            pivots_since_refactor: 0,
            status: LpStatus::Numerical,
            x: Vec::new(),
            y: Vec::new(),
            objective: 0.0,
            iterations: 0,
            diagnostics: Some("not solved".into()),
            max_iterations: 200_000,
        }
    }

    fn m(&self) -> usize {
        self.rhs.len()
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Discards the current basis; the next solve starts from the slack basis.
    pub fn reset_basis(&mut self) {
        for v in &mut self.vars {
            v.status = Var::resting_status(v.lower, v.upper);
        }
        self.basis = self.logical.clone();
        for (pos, &id) in self.logical.iter().enumerate() {
            self.vars[id].status = Status::Basic(pos);
        }
        self.identity_binv();
    }

    fn identity_binv(&mut self) {
        let m = self.m();
        self.binv = vec![0.0; m * m];
        for i in 0..m {
            self.binv[i * m + i] = 1.0;
        }
        self.pivots_since_refactor = 0;
    }

    fn check_entries(&self, entries: &[(usize, f64)], limit: usize, rows: bool) -> Result<(), LpError> {
        for &(idx, a) in entries {
            if idx >= limit {
                return Err(if rows { LpError::RowOutOfRange(idx) } else { LpError::ColumnOutOfRange(idx) });
            }
            if !a.is_finite() {
                return Err(LpError::NonFinite(a));
            }
        }
        Ok(())
    }

    /// Recomputes the basis inverse from scratch. Returns false if singular.
    fn refactor(&mut self) -> bool {
        let m = self.m();
        let mut a = vec![0.0; m * m];
        for (pos, &id) in self.basis.iter().enumerate() {
            for &(r, v) in &self.vars[id].entries {
                a[r * m + pos] += v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let mut piv = col;
            let mut best = a[col * m + col].abs();
            for r in col + 1..m {
                let v = a[r * m + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-12 {
                return false;
            }
            if piv != col {
                for k in 0..m {
                    a.swap(piv * m + k, col * m + k);
                    inv.swap(piv * m + k, col * m + k);
                }
            }
            let d = a[col * m + col];
            for k in 0..m {
                a[col * m + k] /= d;
                inv[col * m + k] /= d;
            }
            for r in 0..m {
                if r != col {
                    let f = a[r * m + col];
                    if f != 0.0 {
                        for k in 0..m {
                            a[r * m + k] -= f * a[col * m + k];
                            inv[r * m + k] -= f * inv[col * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        self.pivots_since_refactor = 0;
        true
    }

    /// Basic variable values from the nonbasic ones.
    fn compute_x(&mut self) {
        let m = self.m();
        let mut r = self.rhs.clone();
        let mut x = vec![0.0; self.vars.len()];
        for (id, v) in self.vars.iter().enumerate() {
            if !matches!(v.status, Status::Basic(_)) {
                let val = v.nonbasic_value();
                x[id] = val;
                if val != 0.0 {
                    for &(row, a) in &v.entries {
                        r[row] -= a * val;
                    }
                }
            }
        }
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            x[self.basis[i]] = row.iter().zip(&r).map(|(a, b)| a * b).sum();
        }
        self.x = x;
    }

    fn infeasibility(&self, id: usize) -> f64 {
        let v = &self.vars[id];
        let x = self.x[id];
        if x < v.lower - FEAS_TOL {
            v.lower - x
        } else if x > v.upper + FEAS_TOL {
            x - v.upper
        } else {
            0.0
        }
    }

    fn compute_y(&mut self, basic_cost: &[f64]) {
        let m = self.m();
        let mut y = vec![0.0; m];
        for (i, &c) in basic_cost.iter().enumerate() {
            if c != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for k in 0..m {
                    y[k] += c * row[k];
                }
            }
        }
        self.y = y;
    }

    fn reduced_cost(&self, id: usize, phase1: bool) -> f64 {
        let v = &self.vars[id];
        let c = if phase1 { 0.0 } else { v.cost };
        c - v.entries.iter().map(|&(r, a)| self.y[r] * a).sum::<f64>()
    }

    fn one_iteration(&mut self, bland: bool) -> Step {
        let m = self.m();
        self.compute_x();
        let phase1 = self.basis.iter().any(|&id| self.infeasibility(id) > 0.0);
        let basic_cost: Vec<f64> = self
            .basis
            .iter()
            .map(|&id| {
                if phase1 {
                    let v = &self.vars[id];
                    if self.x[id] < v.lower - FEAS_TOL {
                        -1.0
                    } else if self.x[id] > v.upper + FEAS_TOL {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    self.vars[id].cost
                }
            })
            .collect();
        self.compute_y(&basic_cost);

        // Pricing.
        let mut entering: Option<(usize, f64, f64)> = None; // (id, dir, |d|)
        for id in 0..self.vars.len() {
            let v = &self.vars[id];
            if matches!(v.status, Status::Basic(_)) || v.upper - v.lower <= 0.0 {
                continue;
            }
            let d = self.reduced_cost(id, phase1);
            let dir = match v.status {
                Status::Lower if d < -OPT_TOL => 1.0,
                Status::Upper if d > OPT_TOL => -1.0,
                Status::Zero if d.abs() > OPT_TOL => -d.signum(),
                _ => continue,
            };
            if bland {
                entering = Some((id, dir, d.abs()));
                break;
            }
            if entering.is_none_or(|(_, _, best)| d.abs() > best) {
                entering = Some((id, dir, d.abs()));
            }
        }
        let Some((q, dir, _)) = entering else {
            return if phase1 { Step::Infeasible } else { Step::Optimal };
        };

        // Column of the entering variable in the current basis.
        let mut alpha = vec![0.0; m];
        for &(r, a) in &self.vars[q].entries {
            for i in 0..m {
                alpha[i] += self.binv[i * m + r] * a;
            }
        }

        // Ratio test. Basic i moves at rate -dir * alpha_i.
        let span = self.vars[q].upper - self.vars[q].lower;
        let mut theta = if span.is_finite() { span } else { f64::INFINITY };
        let mut leave: Option<(usize, Status, f64)> = None; // (pos, new status, |alpha|)
        for i in 0..m {
            if alpha[i].abs() < PIVOT_TOL {
                continue;
            }
            let id = self.basis[i];
            let v = &self.vars[id];
            let x = self.x[id];
            let rate = -dir * alpha[i];
            let below = x < v.lower - FEAS_TOL;
            let above = x > v.upper + FEAS_TOL;
            let (limit, status) = if rate > 0.0 {
                if below {
                    ((v.lower - x) / rate, Status::Lower)
                } else if above || !v.upper.is_finite() {
                    continue;
                } else {
                    (((v.upper - x) / rate).max(0.0), Status::Upper)
                }
            } else if above {
                ((x - v.upper) / -rate, Status::Upper)
            } else if below || !v.lower.is_finite() {
                continue;
            } else {
                (((x - v.lower) / -rate).max(0.0), Status::Lower)
            };
            let better = match leave {
                None => limit < theta,
                Some((pos, _, mag)) => {
                    if limit < theta - 1e-12 {
                        true
                    } else if limit <= theta + 1e-12 {
                        if bland {
                            id < self.basis[pos]
                        } else {
                            alpha[i].abs() > mag
                        }
                    } else {
                        false
                    }
                }
            };
            if better {
                theta = limit.min(theta);
                leave = Some((i, status, alpha[i].abs()));
            }
        }

        if theta.is_infinite() {
            return if phase1 {
                // Cannot happen in exact arithmetic; treat as loss of control.
                self.diagnostics = Some("unbounded phase-1 direction".into());
                Step::Unbounded
            } else {
                Step::Unbounded
            };
        }
        let degenerate = theta < 1e-12;
        self.iterations += 1;

        match leave {
            None => {
                // Bound flip of the entering variable.
                let v = &mut self.vars[q];
                v.status = match v.status {
                    Status::Lower => Status::Upper,
                    _ => Status::Lower,
                };
            }
            Some((r, new_status, _)) => {
                let out = self.basis[r];
                self.vars[out].status = new_status;
                self.vars[q].status = Status::Basic(r);
                self.basis[r] = q;
                let piv = alpha[r];
                for k in 0..m {
                    self.binv[r * m + k] /= piv;
                }
                let pivot_row: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
                for i in 0..m {
                    if i != r && alpha[i] != 0.0 {
                        let f = alpha[i];
                        for k in 0..m {
                            self.binv[i * m + k] -= f * pivot_row[k];
                        }
                    }
                }
                self.pivots_since_refactor += 1;
                if self.pivots_since_refactor >= REFACTOR_EVERY && !self.refactor() {
                    self.diagnostics = Some("singular basis at refactorization".into());
                }
            }
        }
        Step::Progress { degenerate }
    }

    fn run(&mut self) -> LpStatus {
        if self.m() == 0 {
            // Only bounds: each variable rests at its cheaper bound.
            for v in &mut self.vars {
                v.status = if v.cost >= 0.0 {
                    Status::Lower
                } else if v.upper.is_finite() {
                    Status::Upper
                } else {
                    return LpStatus::Unbounded;
                };
            }
            return LpStatus::Optimal;
        }
        if self.binv.len() != self.m() * self.m() || !self.refactor() {
            self.reset_basis();
        }
        let start = self.iterations;
        let mut degenerate_run = 0usize;
        loop {
            if self.iterations - start > self.max_iterations {
                self.diagnostics = Some(format!("iteration limit {} reached", self.max_iterations));
                return LpStatus::Numerical;
            }
            let bland = degenerate_run >= DEGENERATE_SWITCH;
            match self.one_iteration(bland) {
                Step::Optimal => return LpStatus::Optimal,
                Step::Infeasible => return LpStatus::Infeasible,
                Step::Unbounded => return LpStatus::Unbounded,
                Step::Progress { degenerate } => {
                    if degenerate {
                        degenerate_run += 1;
                    } else {
                        degenerate_run = 0;
                    }
                }
            }
        }
    }

    fn finish(&mut self, status: LpStatus) -> LpStatus {
        self.compute_x();
        let costs: Vec<f64> = self.basis.iter().map(|&id| self.vars[id].cost).collect();
        if self.m() > 0 {
            self.compute_y(&costs);
        } else {
            self.y.clear();
        }
        self.objective = self.vars.iter().enumerate().map(|(id, v)| v.cost * self.x[id]).sum();
        status
    }

    /// Largest row residual `|a·x + s − b|` and bound violation of the current point.
    fn residual(&self) -> f64 {
        let mut r = self.rhs.iter().map(|b| -b).collect::<Vec<f64>>();
        let mut worst: f64 = 0.0;
        for (id, v) in self.vars.iter().enumerate() {
            for &(row, a) in &v.entries {
                r[row] += a * self.x[id];
            }
            worst = worst.max(v.lower - self.x[id]).max(self.x[id] - v.upper);
        }
        r.iter().fold(worst, |acc, v| acc.max(v.abs()))
    }
}

impl LpBackend for RevisedSimplex {
    fn add_row(&mut self, sense: RowSense, rhs: f64, entries: &[(usize, f64)]) -> Result<usize, LpError> {
        self.check_entries(entries, self.structural.len(), false)?;
        if !rhs.is_finite() {
            return Err(LpError::NonFinite(rhs));
        }
        let row = self.m();
        let (lower, upper) = match sense {
            RowSense::Le => (0.0, f64::INFINITY),
            RowSense::Ge => (f64::NEG_INFINITY, 0.0),
            RowSense::Eq => (0.0, 0.0),
        };
        let id = self.vars.len();
        self.vars.push(Var { cost: 0.0, lower, upper, entries: vec![(row, 1.0)], status: Status::Basic(row) });
        for &(col, a) in entries {
            if a != 0.0 {
                let vid = self.structural[col];
                self.vars[vid].entries.push((row, a));
            }
        }
        self.logical.push(id);
        self.rhs.push(rhs);

        self.basis.push(id);
        self.status = LpStatus::Numerical;
        Ok(row)
    }

    fn add_column(&mut self, cost: f64, lower: f64, upper: f64, entries: &[(usize, f64)]) -> Result<usize, LpError> {
        self.check_entries(entries, self.m(), true)?;
        if !cost.is_finite() {
            return Err(LpError::NonFinite(cost));
        }
        if !lower.is_finite() || lower > upper {
            return Err(LpError::BadBounds(lower, upper));
        }
        let id = self.vars.len();
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for &(r, a) in entries {
            if a == 0.0 {
                continue;
            }
            match merged.iter_mut().find(|e| e.0 == r) {
                Some(e) => e.1 += a,
                None => merged.push((r, a)),
            }
        }
        self.vars.push(Var { cost, lower, upper, entries: merged, status: Status::Lower });
        self.structural.push(id);
        self.status = LpStatus::Numerical;
        Ok(self.structural.len() - 1)
    }

    fn set_bounds(&mut self, col: usize, lower: f64, upper: f64) -> Result<(), LpError> {
        let id = *self.structural.get(col).ok_or(LpError::ColumnOutOfRange(col))?;
        if !lower.is_finite() || lower > upper {
            return Err(LpError::BadBounds(lower, upper));
        }
        let v = &mut self.vars[id];
        v.lower = lower;
        v.upper = upper;
        if v.status == Status::Upper && !upper.is_finite() {
            v.status = Status::Lower;
        }
        self.status = LpStatus::Numerical;
        Ok(())
    }

    fn bounds(&self, col: usize) -> (f64, f64) {
        let v = &self.vars[self.structural[col]];
        (v.lower, v.upper)
    }

    fn solve(&mut self) -> LpStatus {
        self.diagnostics = None;
        let mut status = self.run();
        if status == LpStatus::Numerical
            || (status == LpStatus::Optimal && {
                self.compute_x();
                self.residual() > 1e-7
            })
        {
            // One cold restart before giving up.
            self.reset_basis();
            status = self.run();
            if status == LpStatus::Optimal {
                self.compute_x();
                let res = self.residual();
                if res > 1e-7 {
                    self.diagnostics = Some(format!("primal residual {res:e} after cold restart"));
                    status = LpStatus::Numerical;
                }
            }
        }
        self.status = self.finish(status);
        self.status
    }

    fn status(&self) -> LpStatus {
        self.status
    }

    fn objective(&self) -> f64 {
        self.objective
    }

    fn primal(&self) -> Vec<f64> {
        self.structural.iter().map(|&id| self.x.get(id).copied().unwrap_or(0.0)).collect()
    }

    fn duals(&self) -> Vec<f64> {
        if self.y.len() == self.m() {
            self.y.clone()
        } else {
            vec![0.0; self.m()]
        }
    }

    fn n_rows(&self) -> usize {
        self.m()
    }

    fn n_cols(&self) -> usize {
        self.structural.len()
    }

    fn diagnostics(&self) -> Option<String> {
        self.diagnostics.clone()
    }
}
