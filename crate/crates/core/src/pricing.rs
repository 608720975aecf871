//! Per-profile pricing: network construction with arc elimination and a
//! label-setting elementary shortest path over depot leave times.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use thiserror::Error;

use crate::distrib::{chance_ok, expected_task_cost, hard_ok, initial_distribution, propagate, FinishDistribution};
use crate::model::{Instance, Loc, Time};
use crate::rmp::{Column, ColumnKey, DualSolution};

#[derive(Debug, Error, PartialEq)]
pub enum PricingError {
    #[error("label limit {0} exceeded")]
    LabelLimit(usize),
}

/// Node-level restrictions from branching and cuts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BranchState {
    /// Worst-case finish of the task must not exceed the value.
    pub finish_upper: BTreeMap<usize, Time>,
    /// Worst-case finish of the task must be at least the value.
    pub finish_lower: BTreeMap<usize, Time>,
    /// Columns pricing must never return.
    pub forbidden: Vec<ColumnKey>,
}

impl BranchState {
    /// Extended latest finish tightened by any upper finish bound.
    pub fn extended_finish(&self, inst: &Instance, task: usize) -> Time {
        let lfe = inst.tasks[task].extended_finish;
        self.finish_upper.get(&task).map_or(lfe, |&u| u.min(lfe))
    }

    pub fn lower_finish(&self, task: usize) -> Option<Time> {
        self.finish_lower.get(&task).copied()
    }

    /// Whether a column respects every finish bound.
    pub fn admits(&self, col: &Column) -> bool {
        col.route.iter().zip(&col.finishes).all(|(&i, &f)| {
            self.finish_upper.get(&i).is_none_or(|&u| f <= u) && self.finish_lower.get(&i).is_none_or(|&l| f >= l)
        })
    }

    pub fn forbid_column(&mut self, key: ColumnKey) {
        if !self.forbidden.contains(&key) {
            self.forbidden.push(key);
        }
    }

    pub fn forbidden_for(&self, profile: usize) -> impl Iterator<Item = &ColumnKey> {
        self.forbidden.iter().filter(move |k| k.profile == profile)
    }

    pub fn has_forbidden(&self, profile: usize) -> bool {
        self.forbidden_for(profile).next().is_some()
    }
}

/// Pricing network of one profile after arc elimination.
#[derive(Debug, Clone, PartialEq)]
pub struct PricingNetwork {
    pub profile: usize,
    /// Compatible tasks, ascending.
    pub tasks: Vec<usize>,
    /// Surviving task-to-task arcs.
    pub arcs: Vec<(usize, usize)>,
    succ: Vec<Vec<usize>>,
}

impl PricingNetwork {
    pub fn successors(&self, task: usize) -> &[usize] {
        &self.succ[task]
    }

    pub fn has_arc(&self, from: usize, to: usize) -> bool {
        self.succ[from].contains(&to)
    }
}

/// Whether arc `(i, j)` survives the three elimination tests for profile `q`.
pub fn arc_survives(inst: &Instance, q: usize, branch: &BranchState, i: usize, j: usize) -> bool {
    let (ti, tj) = (&inst.tasks[i], &inst.tasks[j]);
    let (Some(pi), Some(pj)) = (ti.processing_time(q), tj.processing_time(q)) else {
        return false;
    };
    let t = inst.travel(Loc::Task(i), Loc::Task(j));
    let t_alpha = t.quantile(inst.service_level).expect("validated travel");
    if ti.earliest_start + pi + t_alpha > tj.latest_finish - pj {
        return false;
    }
    if ti.earliest_start + pi + t.worst_case() > branch.extended_finish(inst, j) - pj {
        return false;
    }
    let detour =
        inst.travel(Loc::Task(i), Loc::Depot).worst_case() + inst.travel(Loc::Depot, Loc::Task(j)).worst_case();
    tj.earliest_start - ti.extended_finish <= detour
}

pub fn build_network(inst: &Instance, q: usize, branch: &BranchState) -> PricingNetwork {
    let tasks = inst.tasks_for(q);
    let mut succ = vec![Vec::new(); inst.n_tasks()];
    let mut arcs = Vec::new();
    for &i in &tasks {
        for &j in &tasks {
            if i != j && arc_survives(inst, q, branch, i, j) {
                succ[i].push(j);
                arcs.push((i, j));
            }
        }
    }
    PricingNetwork { profile: q, tasks, arcs, succ }
}

/// Inclusive range of depot leave times worth trying when `task` is first.
pub fn leave_range(inst: &Instance, q: usize, branch: &BranchState, task: usize) -> Option<(Time, Time)> {
    let t = &inst.tasks[task];
    let p = t.processing_time(q)?;
    let out = inst.travel(Loc::Depot, Loc::Task(task)).worst_case();
    let lo = (t.earliest_start - out).max(0);
    let hi = branch.extended_finish(inst, task) - p - out;
    (lo <= hi).then_some((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricingOptions {
    pub label_cap: usize,
    pub dominance: bool,
}

impl Default for PricingOptions {
    fn default() -> Self {
        Self { label_cap: 2_000_000, dominance: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricingOutcome {
    /// Minimum reduced-cost column, if any feasible route exists.
    pub column: Option<Column>,
    /// Its reduced cost.
    pub value: Option<f64>,
    pub labels: usize,
}

const DIVERGED: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Label {
    node: usize,
    leave: Time,
    dist: FinishDistribution,
    worst: Time,
    cost: f64,
    visited: u128,
    matches: Vec<u32>,
    parent: Option<usize>,
    alive: bool,
}

/// Prefix sums over ζ: `sum(a, b)` is `Σ_{a < τ ≤ b} ζ_τ`.
struct Zeta {
    prefix: Vec<f64>,
    /// `pos_tail[t] = Σ_{τ > t} max(0, ζ_τ)`.
    pos_tail: Vec<f64>,
}

impl Zeta {
    fn new(z: &[f64]) -> Self {
        let mut prefix = vec![0.0; z.len() + 1];
        for (t, &v) in z.iter().enumerate() {
            prefix[t + 1] = prefix[t] + v;
        }
        let mut pos_tail = vec![0.0; z.len() + 1];
        for t in (0..z.len()).rev() {
            pos_tail[t] = pos_tail[t + 1] + z[t].max(0.0);
        }
        Self { prefix, pos_tail }
    }

    fn idx(&self, t: Time) -> usize {
        (t + 1).clamp(0, self.prefix.len() as Time - 1) as usize
    }

    fn sum(&self, a: Time, b: Time) -> f64 {
        if b <= a {
            return 0.0;
        }
        self.prefix[self.idx(b)] - self.prefix[self.idx(a)]
    }

    fn positive_after(&self, t: Time) -> f64 {
        let i = (t + 1).clamp(0, self.pos_tail.len() as Time - 1) as usize;
        self.pos_tail[i]
    }
}

struct Search<'a> {
    inst: &'a Instance,
    q: usize,
    branch: &'a BranchState,
    mu: &'a [f64],
    zeta: Zeta,
    forbidden: Vec<&'a ColumnKey>,
    lower_mask: u128,
    opts: PricingOptions,
    labels: Vec<Label>,
    buckets: Vec<Vec<usize>>,
    heap: BinaryHeap<Reverse<(Time, usize)>>,
    best: Option<(f64, usize)>,
}

impl Search<'_> {
    fn task_ok(&self, j: usize, f: &FinishDistribution) -> bool {
        let task = &self.inst.tasks[j];
        chance_ok(f, task.latest_finish, self.inst.service_level)
            && hard_ok(f, self.branch.extended_finish(self.inst, j))
            && self.branch.lower_finish(j).is_none_or(|l| f.max_time() >= l)
    }

    fn task_cost(&self, j: usize, f: &FinishDistribution) -> f64 {
        let task = &self.inst.tasks[j];
        expected_task_cost(f, task.weight, task.earliest_finish(), task.latest_finish) - self.mu[j]
    }

    /// `a` dominates `b`: every completion of `b` is matched by an equally
    /// good, feasible completion of `a`.
    fn dominates(&self, a: &Label, b: &Label) -> bool {
        if a.visited & !b.visited != 0 || a.worst > b.worst {
            return false;
        }
        if self.lower_mask & !b.visited != 0 && a.worst != b.worst {
            return false;
        }
        if a.matches.iter().zip(&b.matches).any(|(&x, &y)| x != DIVERGED && x != y) {
            return false;
        }
        // a's remaining occupancy may cost up to this much more than b's.
        let bound = a.cost - self.zeta.sum(a.worst, b.worst) + self.zeta.positive_after(a.worst);
        if bound > b.cost {
            return false;
        }
        a.dist.stochastically_le(&b.dist, 0.0)
    }

    fn push(&mut self, label: Label) -> Result<(), PricingError> {
        if self.labels.len() >= self.opts.label_cap {
            return Err(PricingError::LabelLimit(self.opts.label_cap));
        }
        let node = label.node;
        if self.opts.dominance {
            for &id in &self.buckets[node] {
                if self.labels[id].alive && self.dominates(&self.labels[id], &label) {
                    return Ok(());
                }
            }
        }
        let id = self.labels.len();
        self.close(&label, id);
        if self.opts.dominance {
            let bucket = std::mem::take(&mut self.buckets[node]);
            let mut keep = Vec::with_capacity(bucket.len() + 1);
            for other in bucket {
                if self.labels[other].alive && self.dominates(&label, &self.labels[other]) {
                    self.labels[other].alive = false;
                } else if self.labels[other].alive {
                    keep.push(other);
                }
            }
            keep.push(id);
            self.buckets[node] = keep;
        }
        self.heap.push(Reverse((label.worst, id)));
        self.labels.push(label);
        Ok(())
    }

    /// Evaluates returning to the depot from this label.
    fn close(&mut self, label: &Label, id: usize) {
        let back = self.inst.travel(Loc::Task(label.node), Loc::Depot).worst_case();
        let ret = label.worst + back;
        if ret >= self.inst.horizon {
            return;
        }
        let complete = self.forbidden.iter().zip(&label.matches).any(|(f, &m)| m as usize == f.route.len());
        if complete {
            return;
        }
        let value = label.cost - self.zeta.sum(label.worst, ret);
        if self.best.is_none_or(|(b, _)| value < b) {
            self.best = Some((value, id));
        }
    }

    fn seed(&mut self) -> Result<(), PricingError> {
        let tasks = self.inst.tasks_for(self.q);
        for j in tasks {
            let Some((lo, hi)) = leave_range(self.inst, self.q, self.branch, j) else {
                continue;
            };
            let task = &self.inst.tasks[j];
            let p = task.processing_time(self.q).expect("compatible");
            let t = self.inst.travel(Loc::Depot, Loc::Task(j));
            for tl in lo..=hi {
                let f = initial_distribution(tl, t, p, task.earliest_start);
                if !self.task_ok(j, &f) {
                    continue;
                }
                let worst = f.max_time();
                let cost = self.task_cost(j, &f) - self.zeta.sum(tl - 1, worst);
                let matches = self
                    .forbidden
                    .iter()
                    .map(|k| if k.leave == tl && k.route[0] == j { 1 } else { DIVERGED })
                    .collect();
                self.push(Label {
                    node: j,
                    leave: tl,
                    dist: f,
                    worst,
                    cost,
                    visited: 1u128 << j,
                    matches,
                    parent: None,
                    alive: true,
                })?;
            }
        }
        Ok(())
    }

    fn extend(&mut self, net: &PricingNetwork, id: usize) -> Result<(), PricingError> {
        let from = self.labels[id].node;
        for &j in net.successors(from) {
            let l = &self.labels[id];
            if l.visited & (1u128 << j) != 0 {
                continue;
            }
            let task = &self.inst.tasks[j];
            let p = task.processing_time(self.q).expect("compatible");
            let f = propagate(&l.dist, self.inst.travel(Loc::Task(from), Loc::Task(j)), p, task.earliest_start);
            if !self.task_ok(j, &f) {
                continue;
            }
            let worst = f.max_time();
            let cost = l.cost + self.task_cost(j, &f) - self.zeta.sum(l.worst, worst);
            let matches = self
                .forbidden
                .iter()
                .zip(&l.matches)
                .map(|(k, &m)| {
                    if m != DIVERGED && (m as usize) < k.route.len() && k.route[m as usize] == j {
                        m + 1
                    } else {
                        DIVERGED
                    }
                })
                .collect();
            let label = Label {
                node: j,
                leave: l.leave,
                dist: f,
                worst,
                cost,
                visited: l.visited | (1u128 << j),
                matches,
                parent: Some(id),
                alive: true,
            };
            self.push(label)?;
        }
        Ok(())
    }

    fn route_of(&self, mut id: usize) -> Vec<usize> {
        let mut route = vec![self.labels[id].node];
        while let Some(p) = self.labels[id].parent {
            route.push(self.labels[p].node);
            id = p;
        }
        route.reverse();
        route
    }
}

/// Minimum reduced-cost team route of profile `net.profile`.
pub fn solve_pp(
    inst: &Instance,
    net: &PricingNetwork,
    duals: &DualSolution,
    branch: &BranchState,
    opts: &PricingOptions,
) -> Result<PricingOutcome, PricingError> {
    let q = net.profile;
    let lower_mask =
        branch.finish_lower.keys().filter(|&&i| inst.tasks[i].is_compatible(q)).fold(0u128, |m, &i| m | (1u128 << i));
    let mut s = Search {
        inst,
        q,
        branch,
        mu: &duals.mu,
        zeta: Zeta::new(&duals.zeta_vec(inst, q)),
        forbidden: branch.forbidden_for(q).collect(),
        lower_mask,
        opts: *opts,
        labels: Vec::new(),
        buckets: vec![Vec::new(); inst.n_tasks()],
        heap: BinaryHeap::new(),
        best: None,
    };
    s.seed()?;
    while let Some(Reverse((_, id))) = s.heap.pop() {
        if !s.labels[id].alive {
            continue;
        }
        s.extend(net, id)?;
    }
    let labels = s.labels.len();
    match s.best {
        None => Ok(PricingOutcome { column: None, value: None, labels }),
        Some((value, id)) => {
            let route = s.route_of(id);
            let col = Column::evaluate(inst, q, &route, s.labels[id].leave).expect("labels only hold feasible routes");
            debug_assert!((duals.reduced_cost(inst, &col) - value).abs() < 1e-6);
            Ok(PricingOutcome { column: Some(col), value: Some(value), labels })
        }
    }
}
