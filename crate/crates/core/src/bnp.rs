//! Branch-and-price: best-first node search, three branching rules, the
//! worker-assignment feasibility check with its no-good cuts, and an
//! integer fallback over the column pool.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featgraph::SampleRecord;
use crate::lp::{solve_milp, LazyRow, LpModel, MilpOptions, MilpStatus, RowSense};
use crate::model::{validate_instance, Instance, Time};
use crate::pcg::{cg_loop, CgLimits, CgStatus, PcgError, Strategy};
use crate::pricing::{BranchState, PricingError, PricingOptions};
use crate::rmp::{initial_columns, Column, ColumnKey, ColumnPool, MasterColumn, Rmp};

pub const INT_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum BnpError {
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error(transparent)]
    Strategy(PcgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    /// Stopped by a limit with a solution in hand.
    Feasible,
    /// The whole tree was explored without finding a solution.
    InfeasibleProved,
    /// Stopped for a reason other than time, without a solution.
    NoSolution,
    /// Out of time without a solution.
    Timeout,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::InfeasibleProved => "infeasible-proved",
            SolveStatus::NoSolution => "no-solution",
            SolveStatus::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Budget for the tree search.
    pub time_limit: Option<Duration>,
    /// Budget for the integer fallback after a search that ran out of time.
    pub heuristic_budget: Duration,
    pub node_limit: usize,
    pub pricing: PricingOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            time_limit: None,
            heuristic_budget: Duration::from_secs(15),
            node_limit: usize::MAX,
            pricing: PricingOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub routes: Vec<Column>,
    pub objective: f64,
}

impl Solution {
    pub fn new(routes: Vec<Column>) -> Self {
        let objective = routes.iter().map(|c| c.cost).sum();
        Self { routes, objective }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub node: usize,
    pub depth: usize,
    pub iteration: usize,
    pub lp_value: f64,
    pub selected: Vec<usize>,
    pub solved: Vec<usize>,
    pub negative: Vec<usize>,
    pub fallback: bool,
    pub columns_added: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub nodes: usize,
    pub cg_iterations: usize,
    pub pricing_solves: usize,
    pub columns: usize,
    pub cuts: usize,
    pub branchings: [usize; 3],
    /// Time spent choosing pricing problems, including features and prediction.
    pub select_secs: f64,
    pub pricing_secs: f64,
    pub heuristic_secs: f64,
    pub total_secs: f64,
    /// The solution came from the integer fallback.
    pub heuristic_solution: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub instance: String,
    pub strategy: String,
    pub status: SolveStatus,
    pub best: Option<Solution>,
    /// Lower bound on the optimum; `+inf` when infeasibility is proved.
    pub bound: f64,
    pub stats: SolveStats,
    pub trace: Vec<TraceEntry>,
}

impl SolveResult {
    pub fn objective(&self) -> Option<f64> {
        self.best.as_ref().map(|s| s.objective)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

/// Branching decisions accumulated along a path of the tree.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeConstraints {
    pub finish_upper: BTreeMap<usize, Time>,
    pub finish_lower: BTreeMap<usize, Time>,
    pub tours: Vec<(Time, RowSense, f64)>,
    pub fixed_one: Vec<ColumnKey>,
    pub fixed_zero: Vec<ColumnKey>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Branching {
    /// Rule 1: finish of `task` at most `tau`, or later than `tau`.
    Finish { task: usize, tau: Time },
    /// Rule 2: tours away at `tau` at most `floor(value)`, or at least `ceil(value)`.
    Tours { tau: Time, value: f64 },
    /// Rule 3: the column is used, or never.
    Variable { key: ColumnKey, value: f64 },
}

impl Branching {
    /// Constraints of the two children.
    pub fn children(&self, parent: &NodeConstraints) -> [NodeConstraints; 2] {
        let (mut a, mut b) = (parent.clone(), parent.clone());
        match self {
            Branching::Finish { task, tau } => {
                let up = a.finish_upper.entry(*task).or_insert(*tau);
                *up = (*up).min(*tau);
                let lo = b.finish_lower.entry(*task).or_insert(tau + 1);
                *lo = (*lo).max(tau + 1);
            }
            Branching::Tours { tau, value } => {
                a.tours.push((*tau, RowSense::Le, value.floor()));
                b.tours.push((*tau, RowSense::Ge, value.ceil()));
            }
            Branching::Variable { key, .. } => {
                a.fixed_one.push(key.clone());
                b.fixed_zero.push(key.clone());
            }
        }
        [a, b]
    }
}

fn frac(v: f64) -> f64 {
    let f = v - v.floor();
    f.min(1.0 - f)
}

/// Rule 1 on the positive route columns: the first task finished at two
/// different worst-case times, branching at the earliest of them.
pub fn branch_rule1(support: &[(&Column, f64)], n_tasks: usize) -> Option<Branching> {
    (0..n_tasks).find_map(|task| {
        let finishes: std::collections::BTreeSet<Time> =
            support.iter().filter_map(|(c, _)| c.finish_of(task)).collect();
        (finishes.len() > 1).then(|| Branching::Finish { task, tau: *finishes.first().unwrap() })
    })
}

/// Rule 2: most fractional number of tours away at some time, ties to the
/// earliest time.
pub fn branch_rule2(support: &[(&Column, f64)], horizon: Time) -> Option<Branching> {
    let mut best: Option<(f64, Time, f64)> = None;
    for tau in 0..horizon {
        let l: f64 = support.iter().filter(|(c, _)| c.occupies(tau)).map(|(_, x)| x).sum();
        let f = frac(l);
        if f > INT_TOL && best.is_none_or(|(bf, _, _)| f > bf + 1e-12) {
            best = Some((f, tau, l));
        }
    }
    best.map(|(_, tau, value)| Branching::Tours { tau, value })
}

/// Rule 3: most fractional route variable.
pub fn branch_rule3(support: &[(&Column, f64)]) -> Option<Branching> {
    let mut best: Option<(f64, usize)> = None;
    for (k, (_, x)) in support.iter().enumerate() {
        let f = frac(*x);
        if f > INT_TOL && best.is_none_or(|(bf, _)| f > bf + 1e-12) {
            best = Some((f, k));
        }
    }
    best.map(|(_, k)| Branching::Variable { key: support[k].0.key(), value: support[k].1 })
}

/// Whether the workers can be assigned to the routes: integer flows of
/// workers per skill level from the depot through routes that do not
/// overlap in time, covering every route's requirements, with all workers
/// leaving and returning.
pub fn feasibility_check(inst: &Instance, routes: &[Column]) -> bool {
    if routes.is_empty() {
        return true;
    }
    let model = flow_model(inst, routes);
    let mut lp = match model.build() {
        Ok(lp) => lp,
        Err(_) => return false,
    };
    let integers: Vec<usize> = (0..model.columns.len()).collect();
    let opts = MilpOptions { first_solution: true, ..Default::default() };
    let res = solve_milp(&mut lp, &integers, &opts, &mut |_| Vec::new());
    matches!(res.status, MilpStatus::Optimal | MilpStatus::Feasible)
}

fn flow_model(inst: &Instance, routes: &[Column]) -> LpModel {
    let n = routes.len();
    let n_k = inst.n_skills();
    let mut m = LpModel::default();
    // Rows: requirement (r, k), conservation (r, k), source k, sink k.
    let req: Vec<Vec<usize>> = (0..n)
        .map(|r| {
            let beta = &inst.profiles[routes[r].profile].requirements;
            (0..n_k).map(|k| m.add_row(RowSense::Ge, beta[k] as f64)).collect()
        })
        .collect();
    let cons: Vec<Vec<usize>> = (0..n).map(|_| (0..n_k).map(|_| m.add_row(RowSense::Eq, 0.0)).collect()).collect();
    let src: Vec<usize> = (0..n_k).map(|k| m.add_row(RowSense::Eq, inst.skills[k].exact as f64)).collect();
    let snk: Vec<usize> = (0..n_k).map(|k| m.add_row(RowSense::Eq, inst.skills[k].exact as f64)).collect();

    // An arc into route r at level k counts toward every requirement k' ≤ k.
    let into = |r: usize, k: usize, e: &mut Vec<(usize, f64)>| {
        for kk in 0..=k {
            e.push((req[r][kk], 1.0));
        }
        e.push((cons[r][k], 1.0));
    };
    for k in 0..n_k {
        for r in 0..n {
            let mut e = vec![(src[k], 1.0)];
            into(r, k, &mut e);
            m.add_column(0.0, 0.0, f64::INFINITY, e);
            m.add_column(0.0, 0.0, f64::INFINITY, vec![(cons[r][k], -1.0), (snk[k], 1.0)]);
            for s in 0..n {
                if s != r && routes[s].leave >= routes[r].ret {
                    let mut e = vec![(cons[r][k], -1.0)];
                    into(s, k, &mut e);
                    m.add_column(0.0, 0.0, f64::INFINITY, e);
                }
            }
        }
    }
    m
}

/// Best operationally feasible selection of pool columns found within the
/// budget, by branch-and-bound over the binary covering model with worker
/// capacities; integer points failing the feasibility check are cut off.
pub fn early_termination(
    inst: &Instance,
    columns: &[Column],
    cuts: &[Vec<ColumnKey>],
    budget: Duration,
) -> Option<Solution> {
    if columns.is_empty() && inst.n_tasks() > 0 {
        return None;
    }
    let mut m = LpModel::default();
    let cover: Vec<usize> = (0..inst.n_tasks()).map(|_| m.add_row(RowSense::Ge, 1.0)).collect();
    let mut cap: BTreeMap<(usize, Time), usize> = BTreeMap::new();
    for c in columns {
        for tau in c.leave..=c.ret {
            for k in 0..inst.n_skills() {
                if c.usage(inst, k, tau) > 0 {
                    cap.entry((k, tau)).or_insert_with(|| m.add_row(RowSense::Le, inst.skills[k].at_least as f64));
                }
            }
        }
    }
    let cut_rows: Vec<(usize, &Vec<ColumnKey>)> =
        cuts.iter().map(|members| (m.add_row(RowSense::Le, members.len() as f64 - 1.0), members)).collect();
    for c in columns {
        let key = c.key();
        let mut e: Vec<(usize, f64)> = c.route.iter().map(|&i| (cover[i], 1.0)).collect();
        for tau in c.leave..=c.ret {
            for k in 0..inst.n_skills() {
                let b = c.usage(inst, k, tau);
                if b > 0 {
                    e.push((cap[&(k, tau)], b as f64));
                }
            }
        }
        for (row, members) in &cut_rows {
            if members.contains(&key) {
                e.push((*row, 1.0));
            }
        }
        m.add_column(c.cost, 0.0, 1.0, e);
    }
    let mut lp = m.build().ok()?;
    let integers: Vec<usize> = (0..columns.len()).collect();
    let opts = MilpOptions { deadline: Some(Instant::now() + budget), ..Default::default() };
    let mut lazy = |x: &[f64]| -> Vec<LazyRow> {
        let chosen: Vec<usize> = (0..columns.len()).filter(|&j| x[j] > 0.5).collect();
        let routes: Vec<Column> = chosen.iter().map(|&j| columns[j].clone()).collect();
        if feasibility_check(inst, &routes) {
            Vec::new()
        } else {
            vec![(RowSense::Le, chosen.len() as f64 - 1.0, chosen.iter().map(|&j| (j, 1.0)).collect())]
        }
    };
    let res = solve_milp(&mut lp, &integers, &opts, &mut lazy);
    let x = res.values?;
    let routes: Vec<Column> = (0..columns.len()).filter(|&j| x[j] > 0.5).map(|j| columns[j].clone()).collect();
    Some(Solution::new(routes))
}

#[derive(Debug)]
struct OpenNode {
    id: usize,
    depth: usize,
    bound: f64,
    cons: NodeConstraints,
}

impl PartialEq for OpenNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenNode {}

impl PartialOrd for OpenNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenNode {
    /// Max-heap order: lowest bound first, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(self.depth.cmp(&other.depth)).then(other.id.cmp(&self.id))
    }
}

enum NodeResult {
    Pruned,
    Branched(Box<[NodeConstraints; 2]>, f64),
    /// Limit hit while processing; the node stays open at this bound.
    Stopped(f64, SolveStatus),
}

struct Search<'a> {
    inst: &'a Instance,
    strategy: &'a mut dyn Strategy,
    opts: &'a SolveOptions,
    deadline: Option<Instant>,
    pool: ColumnPool,
    cuts: Vec<Vec<ColumnKey>>,
    cut_members: HashSet<ColumnKey>,
    incumbent: Option<Solution>,
    stats: SolveStats,
    trace: Vec<TraceEntry>,
    /// A numerical failure or pricing limit means the tree was not fully
    /// explored even if it empties.
    inexact: bool,
    limit_status: Option<SolveStatus>,
    sampler: Option<&'a mut dyn FnMut(SampleRecord)>,
}

impl Search<'_> {
    fn branch_state(&self, cons: &NodeConstraints) -> BranchState {
        let mut b = BranchState {
            finish_upper: cons.finish_upper.clone(),
            finish_lower: cons.finish_lower.clone(),
            forbidden: Vec::new(),
        };
        let mut keys: Vec<&ColumnKey> =
            cons.fixed_zero.iter().chain(&cons.fixed_one).chain(&self.cut_members).collect();
        keys.sort();
        for k in keys {
            b.forbid_column(k.clone());
        }
        b
    }

    fn build_rmp(&self, cons: &NodeConstraints, branch: &BranchState) -> Option<Rmp> {
        let mut rmp = Rmp::new(self.inst);
        for (tau, sense, rhs) in &cons.tours {
            rmp.add_tour_row(*tau, *sense, *rhs);
        }
        for members in &self.cuts {
            rmp.add_forbid_cut(members);
        }
        for (_, c) in self.pool.iter() {
            if branch.admits(c) && !cons.fixed_zero.contains(&c.key()) {
                rmp.add_column(c.clone());
            }
        }
        for key in &cons.fixed_one {
            let j = rmp.find(key)?;
            rmp.set_bounds(j, 1.0, 1.0);
        }
        Some(rmp)
    }

    fn upper_cutoff(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |s| s.objective)
    }

    fn process(&mut self, node: &OpenNode) -> Result<NodeResult, BnpError> {
        loop {
            let branch = self.branch_state(&node.cons);
            let Some(mut rmp) = self.build_rmp(&node.cons, &branch) else {
                return Ok(NodeResult::Pruned);
            };
            let limits = CgLimits { deadline: self.deadline, pricing: self.opts.pricing };
            let out = match cg_loop(
                self.inst,
                &mut rmp,
                &branch,
                &mut *self.strategy,
                &limits,
                node.depth,
                self.sampler.as_mut().map(|f| &mut **f as &mut dyn FnMut(SampleRecord)),
            ) {
                Ok(out) => out,
                Err(PcgError::Pricing(PricingError::LabelLimit(n))) => {
                    log::warn!("node {}: label limit {n} reached", node.id);
                    return Ok(NodeResult::Stopped(node.bound, SolveStatus::NoSolution));
                }
                Err(e) => return Err(BnpError::Strategy(e)),
            };
            for c in &out.columns {
                self.pool.insert(c.clone());
            }
            self.stats.cg_iterations += out.iterations.len();
            self.stats.select_secs += out.select_time.as_secs_f64();
            self.stats.pricing_secs += out.pricing_time.as_secs_f64();
            for it in &out.iterations {
                self.stats.pricing_solves += it.solved.len();
                self.trace.push(TraceEntry {
                    node: node.id,
                    depth: node.depth,
                    iteration: it.iteration,
                    lp_value: it.lp_value,
                    selected: it.selected.clone(),
                    solved: it.solved.clone(),
                    negative: it
                        .values
                        .iter()
                        .filter(|(_, v)| v.is_some_and(|v| v < -crate::featgraph::NEGATIVE_TOL))
                        .map(|(q, _)| *q)
                        .collect(),
                    fallback: it.fallback,
                    columns_added: it.columns_added,
                });
            }
            match out.status {
                CgStatus::Optimal => {}
                CgStatus::Infeasible => return Ok(NodeResult::Pruned),
                CgStatus::Timeout => return Ok(NodeResult::Stopped(node.bound, SolveStatus::Timeout)),
                CgStatus::Numerical => {
                    log::warn!("node {}: master LP numerical trouble, node dropped", node.id);
                    self.inexact = true;
                    return Ok(NodeResult::Pruned);
                }
            }
            let bound = out.lp_value.max(node.bound);
            // Real solutions never cost more than this; anything above uses artificials.
            if bound > self.inst.route_cost_bound() + 1e-6 || bound >= self.upper_cutoff() - 1e-6 {
                return Ok(NodeResult::Pruned);
            }
            let x = rmp.values();
            let support: Vec<(&Column, f64)> = (0..rmp.n_columns())
                .filter(|&j| x[j] > INT_TOL)
                .filter_map(|j| match rmp.column(j) {
                    MasterColumn::Route(c) => Some((c, x[j])),
                    _ => None,
                })
                .collect();
            let integral = support.iter().all(|(_, v)| frac(*v) <= INT_TOL);
            if integral {
                let routes: Vec<Column> = support.iter().map(|(c, _)| (*c).clone()).collect();
                if feasibility_check(self.inst, &routes) {
                    let sol = Solution::new(routes);
                    if sol.objective < self.upper_cutoff() {
                        self.incumbent = Some(sol);
                    }
                    return Ok(NodeResult::Pruned);
                }
                let members: Vec<ColumnKey> = routes.iter().map(Column::key).collect();
                log::debug!("node {}: assignment infeasible, cutting {} routes", node.id, members.len());
                self.cut_members.extend(members.iter().cloned());
                self.cuts.push(members);
                self.stats.cuts += 1;
                continue;
            }
            let rule = branch_rule1(&support, self.inst.n_tasks())
                .map(|b| (b, 0))
                .or_else(|| branch_rule2(&support, self.inst.horizon).map(|b| (b, 1)))
                .or_else(|| branch_rule3(&support).map(|b| (b, 2)))
                .expect("fractional support admits a branching");
            self.stats.branchings[rule.1] += 1;
            return Ok(NodeResult::Branched(Box::new(rule.0.children(&node.cons)), bound));
        }
    }
}

/// Solves `inst` to optimality or until a limit, pricing with `strategy`.
pub fn solve(inst: &Instance, strategy: &mut dyn Strategy, opts: &SolveOptions) -> Result<SolveResult, BnpError> {
    solve_with_sampler(inst, strategy, opts, None)
}

/// [`solve`], reporting every pricing solve to `sampler`.
pub fn solve_with_sampler<'a>(
    inst: &'a Instance,
    strategy: &'a mut dyn Strategy,
    opts: &'a SolveOptions,
    sampler: Option<&'a mut dyn FnMut(SampleRecord)>,
) -> Result<SolveResult, BnpError> {
    let violations = validate_instance(inst);
    if let Some(v) = violations.first() {
        return Err(BnpError::Invalid(format!("{} ({} violations)", v, violations.len())));
    }
    let start = Instant::now();
    let name = strategy.name();
    let mut s = Search {
        inst,
        strategy,
        opts,
        deadline: opts.time_limit.map(|d| start + d),
        pool: ColumnPool::new(),
        cuts: Vec::new(),
        cut_members: HashSet::new(),
        incumbent: None,
        stats: SolveStats::default(),
        trace: Vec::new(),
        inexact: false,
        limit_status: None,
        sampler,
    };
    for c in initial_columns(inst) {
        s.pool.insert(c);
    }

    let mut open = BinaryHeap::new();
    open.push(OpenNode { id: 0, depth: 0, bound: f64::NEG_INFINITY, cons: NodeConstraints::default() });
    let mut next_id = 1;
    let mut stopped_bound: Option<f64> = None;

    while let Some(node) = open.pop() {
        if node.bound >= s.upper_cutoff() - 1e-6 {
            continue;
        }
        if s.deadline.is_some_and(|d| Instant::now() >= d) {
            s.limit_status = Some(SolveStatus::Timeout);
            stopped_bound = Some(node.bound);
            break;
        }
        if s.stats.nodes >= opts.node_limit {
            s.limit_status = Some(SolveStatus::NoSolution);
            stopped_bound = Some(node.bound);
            break;
        }
        s.stats.nodes += 1;
        match s.process(&node)? {
            NodeResult::Pruned => {}
            NodeResult::Branched(children, bound) => {
                for cons in *children {
                    open.push(OpenNode { id: next_id, depth: node.depth + 1, bound, cons });
                    next_id += 1;
                }
            }
            NodeResult::Stopped(bound, status) => {
                s.limit_status = Some(status);
                stopped_bound = Some(bound);
                break;
            }
        }
    }

    let open_bound = open.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let mut bound = stopped_bound.map_or(open_bound, |b| b.min(open_bound));
    let mut status = match (s.limit_status, &s.incumbent) {
        (None, Some(_)) if !s.inexact => SolveStatus::Optimal,
        (None, None) if !s.inexact => SolveStatus::InfeasibleProved,
        (None, Some(_)) => SolveStatus::Feasible,
        (None, None) => SolveStatus::NoSolution,
        (Some(_), Some(_)) => SolveStatus::Feasible,
        (Some(st), None) => st,
    };

    if s.limit_status.is_some() && !opts.heuristic_budget.is_zero() {
        let t = Instant::now();
        let columns: Vec<Column> = s.pool.iter().map(|(_, c)| c.clone()).collect();
        if let Some(sol) = early_termination(inst, &columns, &s.cuts, opts.heuristic_budget) {
            if sol.objective < s.upper_cutoff() - 1e-9 {
                s.incumbent = Some(sol);
                s.stats.heuristic_solution = true;
                status = SolveStatus::Feasible;
            }
        }
        s.stats.heuristic_secs = t.elapsed().as_secs_f64();
    }

    match (&s.incumbent, status) {
        (Some(sol), SolveStatus::Optimal) => bound = sol.objective,
        (Some(sol), _) => bound = bound.min(sol.objective),
        (None, SolveStatus::InfeasibleProved) => bound = f64::INFINITY,
        _ => {}
    }
    if !bound.is_finite() && status != SolveStatus::InfeasibleProved {
        bound = 0.0;
    }
    s.stats.columns = s.pool.len();
    s.stats.total_secs = start.elapsed().as_secs_f64();
    Ok(SolveResult {
        instance: inst.name.clone(),
        strategy: name,
        status,
        best: s.incumbent,
        bound: bound.max(0.0),
        stats: s.stats,
        trace: s.trace,
    })
}
