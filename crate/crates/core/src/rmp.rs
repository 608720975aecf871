//! Restricted master problem: set covering over team-route columns with
//! aggregate worker capacity rows, tour-count rows and forbidding cuts.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distrib::{chance_ok, expected_task_cost, hard_ok, initial_distribution, propagate};
use crate::lp::{solve_milp, LpBackend, LpStatus, MilpOptions, MilpResult, RevisedSimplex, RowSense};
use crate::model::{Instance, Loc, Time};

#[derive(Debug, Error, PartialEq)]
pub enum ColumnError {
    #[error("empty route")]
    Empty,
    #[error("task {0} visited twice")]
    Repeated(usize),
    #[error("task {0} not compatible with profile {1}")]
    Incompatible(usize, usize),
    #[error("negative leave time {0}")]
    NegativeLeave(Time),
    #[error("chance constraint violated at task {0}")]
    Chance(usize),
    #[error("extended latest finish violated at task {0}")]
    Extended(usize),
    #[error("return time {0} outside the horizon")]
    LateReturn(Time),
}

/// Identity of a column: two columns with equal keys are the same variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnKey {
    pub profile: usize,
    pub route: Vec<usize>,
    pub leave: Time,
}

/// A team route with its profile and depot leave time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub route: Vec<usize>,
    pub profile: usize,
    pub leave: Time,
    /// Return time to the depot under worst-case travel.
    pub ret: Time,
    /// Expected cost `E(c^r)`.
    pub cost: f64,
    /// Worst-case finish time of each visited task, in route order.
    pub finishes: Vec<Time>,
}

impl Column {
    /// Builds the column by propagating finish distributions along the route
    /// and checks both feasibility conditions and the horizon.
    pub fn evaluate(inst: &Instance, profile: usize, route: &[usize], leave: Time) -> Result<Column, ColumnError> {
        if route.is_empty() {
            return Err(ColumnError::Empty);
        }
        if leave < 0 {
            return Err(ColumnError::NegativeLeave(leave));
        }
        let mut seen = 0u128;
        let mut cost = 0.0;
        let mut finishes = Vec::with_capacity(route.len());
        let mut dist = None;
        let mut prev = Loc::Depot;
        for &i in route {
            if seen & (1u128 << i) != 0 {
                return Err(ColumnError::Repeated(i));
            }
            seen |= 1u128 << i;
            let task = &inst.tasks[i];
            let p = task.processing_time(profile).ok_or(ColumnError::Incompatible(i, profile))?;
            let t = inst.travel(prev, Loc::Task(i));
            let f = match &dist {
                None => initial_distribution(leave, t, p, task.earliest_start),
                Some(d) => propagate(d, t, p, task.earliest_start),
            };
            if !chance_ok(&f, task.latest_finish, inst.service_level) {
                return Err(ColumnError::Chance(i));
            }
            if !hard_ok(&f, task.extended_finish) {
                return Err(ColumnError::Extended(i));
            }
            cost += expected_task_cost(&f, task.weight, task.earliest_finish(), task.latest_finish);
            finishes.push(f.max_time());
            dist = Some(f);
            prev = Loc::Task(i);
        }
        let ret = finishes.last().copied().unwrap_or(leave) + inst.travel(prev, Loc::Depot).worst_case();
        if ret >= inst.horizon {
            return Err(ColumnError::LateReturn(ret));
        }
        Ok(Column { route: route.to_vec(), profile, leave, ret, cost, finishes })
    }

    pub fn key(&self) -> ColumnKey {
        ColumnKey { profile: self.profile, route: self.route.clone(), leave: self.leave }
    }

    pub fn covers(&self, task: usize) -> bool {
        self.route.contains(&task)
    }

    pub fn finish_of(&self, task: usize) -> Option<Time> {
        self.route.iter().position(|&i| i == task).map(|pos| self.finishes[pos])
    }

    /// `g_τ`: whether the team is away from the depot at `τ`.
    pub fn occupies(&self, tau: Time) -> bool {
        self.leave <= tau && tau <= self.ret
    }

    /// `b_{k,τ}`.
    pub fn usage(&self, inst: &Instance, k: usize, tau: Time) -> u32 {
        if self.occupies(tau) {
            inst.profiles[self.profile].requirements[k]
        } else {
            0
        }
    }
}

/// Dual values of the master rows, in the LP sign convention: `μ ≥ 0`,
/// `δ ≤ 0`, `ρ ≤ 0` (tour rows `≤`), `γ ≥ 0` (tour rows `≥`).
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub mu: Vec<f64>,
    /// `delta[k][τ]`.
    pub delta: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl DualSolution {
    pub fn zeros(inst: &Instance) -> Self {
        let h = inst.horizon as usize;
        Self {
            mu: vec![0.0; inst.n_tasks()],
            delta: vec![vec![0.0; h]; inst.n_skills()],
            rho: vec![0.0; h],
            gamma: vec![0.0; h],
        }
    }

    /// `ζ_τ(q) = Σ_k δ_{k,τ} ξ_{q,k} + ρ_τ + γ_τ`; subtracting it for every
    /// occupied time reproduces the master's reduced cost.
    pub fn zeta(&self, inst: &Instance, profile: usize, tau: Time) -> f64 {
        let t = tau as usize;
        let req = &inst.profiles[profile].requirements;
        let mut z = self.rho[t] + self.gamma[t];
        for (k, &x) in req.iter().enumerate() {
            z += self.delta[k][t] * x as f64;
        }
        z
    }

    pub fn zeta_vec(&self, inst: &Instance, profile: usize) -> Vec<f64> {
        (0..inst.horizon).map(|t| self.zeta(inst, profile, t)).collect()
    }

    /// Reduced cost from the unaggregated duals.
    pub fn reduced_cost(&self, inst: &Instance, col: &Column) -> f64 {
        let mut rc = col.cost;
        for &i in &col.route {
            rc -= self.mu[i];
        }
        for tau in col.leave..=col.ret {
            let t = tau as usize;
            for k in 0..inst.n_skills() {
                rc -= self.delta[k][t] * col.usage(inst, k, tau) as f64;
            }
            rc -= self.rho[t] + self.gamma[t];
        }
        rc
    }
}

/// Every column generated so far, shared by all tree nodes.
#[derive(Debug, Clone, Default)]
pub struct ColumnPool {
    columns: Vec<Column>,
    index: HashMap<ColumnKey, usize>,
}

impl ColumnPool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds the column unless an identical one exists; returns its id.
    pub fn insert(&mut self, col: Column) -> (usize, bool) {
        let key = col.key();
        if let Some(&id) = self.index.get(&key) {
            return (id, false);
        }
        self.columns.push(col);
        self.index.insert(key, self.columns.len() - 1);
        (self.columns.len() - 1, true)
    }

    pub fn get(&self, id: usize) -> &Column {
        &self.columns[id]
    }

    pub fn find(&self, key: &ColumnKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Column)> {
        self.columns.iter().enumerate()
    }

    /// One line per column: id, profile, leave, return, cost, route.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (id, c) in self.iter() {
            let route: Vec<String> = c.route.iter().map(|i| i.to_string()).collect();
            let _ = writeln!(
                s,
                "{id}\tq={}\ttl={}\ttr={}\tcost={:.6}\t[{}]",
                c.profile,
                c.leave,
                c.ret,
                c.cost,
                route.join(" ")
            );
        }
        s
    }
}

/// Every single-task route at the earliest leave time that is not
/// dominated by waiting at the depot.
pub fn initial_columns(inst: &Instance) -> Vec<Column> {
    let mut out = Vec::new();
    for (i, task) in inst.tasks.iter().enumerate() {
        let out_t = inst.travel(Loc::Depot, Loc::Task(i)).worst_case();
        let tl = (task.earliest_start - out_t).max(0);
        for &q in task.processing.keys() {
            if let Ok(c) = Column::evaluate(inst, q, &[i], tl) {
                out.push(c);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum MasterColumn {
    /// Artificial column covering one task at big-M cost.
    Slack(usize),
    /// Artificial big-M surplus of a `≥` tour row.
    Surplus {
        tau: Time,
        row: usize,
    },
    Route(Column),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmpStatus {
    Optimal,
    Infeasible,
    Numerical,
}

#[derive(Debug, Clone)]
struct TourRow {
    tau: Time,
    row: usize,
}

#[derive(Debug, Clone)]
struct CutRow {
    row: usize,
    members: Vec<ColumnKey>,
}

/// Restricted master LP.
#[derive(Debug, Clone)]
pub struct Rmp {
    lp: RevisedSimplex,
    requirements: Vec<Vec<u32>>,
    capacity: Vec<u32>,
    horizon: Time,
    cover: Vec<usize>,
    worker: HashMap<(usize, Time), usize>,
    tours_le: Vec<TourRow>,
    tours_ge: Vec<TourRow>,
    cuts: Vec<CutRow>,
    cols: Vec<MasterColumn>,
    index: HashMap<ColumnKey, usize>,
    big_m: f64,
    status: Option<RmpStatus>,
}

impl Rmp {
    /// Covering rows and one slack column per task.
    pub fn new(inst: &Instance) -> Self {
        let mut lp = RevisedSimplex::new();
        let big_m = 10.0 * inst.route_cost_bound().max(1.0);
        let cover: Vec<usize> =
            (0..inst.n_tasks()).map(|_| lp.add_row(RowSense::Ge, 1.0, &[]).expect("fresh row")).collect();
        let mut rmp = Self {
            lp,
            requirements: inst.profiles.iter().map(|p| p.requirements.clone()).collect(),
            capacity: inst.skills.iter().map(|s| s.at_least).collect(),
            horizon: inst.horizon,
            cover,
            worker: HashMap::new(),
            tours_le: Vec::new(),
            tours_ge: Vec::new(),
            cuts: Vec::new(),
            cols: Vec::new(),
            index: HashMap::new(),
            big_m,
            status: None,
        };
        for i in 0..inst.n_tasks() {
            rmp.lp.add_column(big_m, 0.0, f64::INFINITY, &[(rmp.cover[i], 1.0)]).expect("slack column");
            rmp.cols.push(MasterColumn::Slack(i));
        }
        rmp
    }

    /// [`Rmp::new`] plus [`initial_columns`].
    pub fn build_initial(inst: &Instance) -> Self {
        let mut rmp = Self::new(inst);
        for c in initial_columns(inst) {
            rmp.add_column(c);
        }
        rmp
    }

    pub fn big_m(&self) -> f64 {
        self.big_m
    }

    pub fn n_columns(&self) -> usize {
        self.cols.len()
    }

    pub fn column(&self, j: usize) -> &MasterColumn {
        &self.cols[j]
    }

    pub fn find(&self, key: &ColumnKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn contains(&self, key: &ColumnKey) -> bool {
        self.index.contains_key(key)
    }

    fn worker_row(&mut self, k: usize, tau: Time) -> usize {
        if let Some(&r) = self.worker.get(&(k, tau)) {
            return r;
        }
        let mut entries = Vec::new();
        for (j, c) in self.cols.iter().enumerate() {
            if let MasterColumn::Route(c) = c {
                let b = self.requirements[c.profile][k];
                if b > 0 && c.occupies(tau) {
                    entries.push((j, b as f64));
                }
            }
        }
        let r = self.lp.add_row(RowSense::Le, self.capacity[k] as f64, &entries).expect("existing columns");
        self.worker.insert((k, tau), r);
        r
    }

    /// Adds a route column; returns `None` when an identical column exists.
    pub fn add_column(&mut self, col: Column) -> Option<usize> {
        let key = col.key();
        if self.index.contains_key(&key) {
            return None;
        }
        let mut rows: Vec<usize> = Vec::new();
        for k in 0..self.capacity.len() {
            if self.requirements[col.profile][k] > 0 {
                for tau in col.leave..=col.ret {
                    rows.push(self.worker_row(k, tau));
                }
            }
        }
        let mut entries: Vec<(usize, f64)> = col.route.iter().map(|&i| (self.cover[i], 1.0)).collect();
        let mut wr = 0;
        for k in 0..self.capacity.len() {
            let b = self.requirements[col.profile][k];
            if b > 0 {
                for _ in col.leave..=col.ret {
                    entries.push((rows[wr], b as f64));
                    wr += 1;
                }
            }
        }
        for t in self.tours_le.iter().chain(&self.tours_ge) {
            if col.occupies(t.tau) {
                entries.push((t.row, 1.0));
            }
        }
        for cut in &self.cuts {
            if cut.members.contains(&key) {
                entries.push((cut.row, 1.0));
            }
        }
        let j = self.lp.add_column(col.cost, 0.0, f64::INFINITY, &entries).expect("valid column");
        debug_assert_eq!(j, self.cols.len());
        self.cols.push(MasterColumn::Route(col));
        self.index.insert(key, j);
        self.status = None;
        Some(j)
    }

    /// `Σ g_τ λ ≤ rhs` or `≥ rhs`.
    pub fn add_tour_row(&mut self, tau: Time, sense: RowSense, rhs: f64) {
        let entries: Vec<(usize, f64)> = self
            .cols
            .iter()
            .enumerate()
            .filter_map(|(j, c)| match c {
                MasterColumn::Route(c) if c.occupies(tau) => Some((j, 1.0)),
                _ => None,
            })
            .collect();
        let row = self.lp.add_row(sense, rhs, &entries).expect("existing columns");
        match sense {
            RowSense::Le => self.tours_le.push(TourRow { tau, row }),
            RowSense::Ge => {
                // Keeps the master feasible until pricing supplies enough tours.
                self.lp.add_column(self.big_m, 0.0, f64::INFINITY, &[(row, 1.0)]).expect("surplus column");
                self.cols.push(MasterColumn::Surplus { tau, row });
                self.tours_ge.push(TourRow { tau, row });
            }
            RowSense::Eq => panic!("tour rows are inequalities"),
        }
        self.status = None;
    }

    /// `Σ_{c ∈ members} λ_c ≤ |members| − 1`.
    pub fn add_forbid_cut(&mut self, members: &[ColumnKey]) {
        assert!(!members.is_empty(), "cut needs at least one column");
        let entries: Vec<(usize, f64)> = members.iter().filter_map(|k| self.index.get(k).map(|&j| (j, 1.0))).collect();
        let row = self.lp.add_row(RowSense::Le, members.len() as f64 - 1.0, &entries).expect("existing columns");
        self.cuts.push(CutRow { row, members: members.to_vec() });
        self.status = None;
    }

    pub fn n_cuts(&self) -> usize {
        self.cuts.len()
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lp.set_bounds(j, lower, upper).expect("valid column");
        self.status = None;
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        self.lp.bounds(j)
    }

    pub fn solve(&mut self) -> RmpStatus {
        let st = match self.lp.solve() {
            LpStatus::Optimal => RmpStatus::Optimal,
            LpStatus::Infeasible => RmpStatus::Infeasible,
            // Every column is bounded, so unboundedness means lost control.
            LpStatus::Unbounded | LpStatus::Numerical => {
                log::warn!("master LP failed: {:?}", self.lp.diagnostics());
                RmpStatus::Numerical
            }
        };
        self.status = Some(st);
        st
    }

    pub fn status(&self) -> Option<RmpStatus> {
        self.status
    }

    pub fn objective(&self) -> f64 {
        self.lp.objective()
    }

    pub fn values(&self) -> Vec<f64> {
        self.lp.primal()
    }

    pub fn duals(&self) -> DualSolution {
        let y = self.lp.duals();
        let h = self.horizon as usize;
        let mut d = DualSolution {
            mu: self.cover.iter().map(|&r| y[r]).collect(),
            delta: vec![vec![0.0; h]; self.capacity.len()],
            rho: vec![0.0; h],
            gamma: vec![0.0; h],
        };
        for (&(k, tau), &r) in &self.worker {
            d.delta[k][tau as usize] = y[r];
        }
        for t in &self.tours_le {
            d.rho[t.tau as usize] += y[t.row];
        }
        for t in &self.tours_ge {
            d.gamma[t.tau as usize] += y[t.row];
        }
        d
    }

    /// LP reduced cost of column `j` including every row, cuts included.
    pub fn lp_reduced_cost(&self, j: usize) -> f64 {
        let y = self.lp.duals();
        match &self.cols[j] {
            MasterColumn::Slack(i) => self.big_m - y[self.cover[*i]],
            MasterColumn::Surplus { row, .. } => self.big_m - y[*row],
            MasterColumn::Route(c) => {
                let key = c.key();
                let mut rc = c.cost;
                for &i in &c.route {
                    rc -= y[self.cover[i]];
                }
                for (&(k, tau), &r) in &self.worker {
                    if c.occupies(tau) {
                        rc -= y[r] * self.requirements[c.profile][k] as f64;
                    }
                }
                for t in self.tours_le.iter().chain(&self.tours_ge) {
                    if c.occupies(t.tau) {
                        rc -= y[t.row];
                    }
                }
                for cut in &self.cuts {
                    if cut.members.contains(&key) {
                        rc -= y[cut.row];
                    }
                }
                rc
            }
        }
    }

    /// Integer version of the current master on a copy: route columns are
    /// binary, slack and surplus columns integer. The LP itself is untouched.
    pub fn solve_integer(&self, opts: &MilpOptions) -> MilpResult {
        let mut lp = self.lp.clone();
        for (j, c) in self.cols.iter().enumerate() {
            if matches!(c, MasterColumn::Route(_)) {
                let (lo, hi) = lp.bounds(j);
                lp.set_bounds(j, lo, hi.min(1.0)).expect("valid column");
            }
        }
        let integers: Vec<usize> = (0..self.cols.len()).collect();
        solve_milp(&mut lp, &integers, opts, &mut |_| Vec::new())
    }

    /// Route columns with positive value in the last solution.
    pub fn support(&self, tol: f64) -> Vec<(usize, f64)> {
        let x = self.values();
        self.cols
            .iter()
            .enumerate()
            .filter(|(j, c)| matches!(c, MasterColumn::Route(_)) && x[*j] > tol)
            .map(|(j, _)| (j, x[j]))
            .collect()
    }

    /// Text dump of the current columns and their values.
    pub fn dump(&self) -> String {
        let x = if self.status == Some(RmpStatus::Optimal) { self.values() } else { vec![0.0; self.cols.len()] };
        let mut s = String::new();
        for (j, c) in self.cols.iter().enumerate() {
            match c {
                MasterColumn::Slack(i) => {
                    let _ = writeln!(s, "{j}\tslack task {i}\tcost={:.6}\tx={:.6}", self.big_m, x[j]);
                }
                MasterColumn::Surplus { tau, .. } => {
                    let _ = writeln!(s, "{j}\tsurplus tour row {tau}\tcost={:.6}\tx={:.6}", self.big_m, x[j]);
                }
                MasterColumn::Route(c) => {
                    let route: Vec<String> = c.route.iter().map(|i| i.to_string()).collect();
                    let _ = writeln!(
                        s,
                        "{j}\tq={}\ttl={}\ttr={}\tcost={:.6}\tx={:.6}\t[{}]",
                        c.profile,
                        c.leave,
                        c.ret,
                        c.cost,
                        x[j],
                        route.join(" ")
                    );
                }
            }
        }
        s
    }
}
