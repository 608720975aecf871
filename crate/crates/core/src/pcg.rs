//! Column generation with partial pricing. Each iteration a [`Strategy`]
//! picks which pricing problems to solve; when none of them prices out, the
//! rest are solved before the loop may stop.

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featgraph::{build_graph, FeatureError, InputGraph, SampleRecord, NEGATIVE_TOL};
use crate::gnn::{GnnError, GnnModel};
use crate::model::Instance;
use crate::pricing::{build_network, solve_pp, BranchState, PricingError, PricingNetwork, PricingOptions};
use crate::rmp::{Column, DualSolution, Rmp, RmpStatus};

#[derive(Debug, Error)]
pub enum PcgError {
    #[error(transparent)]
    Pricing(#[from] PricingError),
    #[error(transparent)]
    Predict(#[from] GnnError),
    #[error(transparent)]
    Features(#[from] FeatureError),
}

/// Outcome of one pricing problem in one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpRecord {
    pub solved: bool,
    pub negative: bool,
    pub value: Option<f64>,
}

/// What a strategy may look at when choosing.
#[derive(Debug, Clone)]
pub struct IterationContext<'a> {
    /// 0-based iteration within the current loop.
    pub iteration: usize,
    /// One entry per finished iteration, one record per profile.
    pub history: &'a [Vec<PpRecord>],
    pub cursor: usize,
    pub depth: usize,
    pub root: bool,
    /// Profiles whose pricing carries forbidden-column resources.
    pub forbidden: &'a [bool],
}

impl IterationContext<'_> {
    pub fn n_profiles(&self) -> usize {
        self.forbidden.len()
    }
}

pub struct SelectInput<'a> {
    pub inst: &'a Instance,
    pub networks: &'a [PricingNetwork],
    pub duals: &'a DualSolution,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Selection {
    /// Profiles to solve, in order.
    pub order: Vec<usize>,
    /// Stop after this many of them returned a negative column.
    pub stop_after_negatives: Option<usize>,
    pub predictions: Vec<(usize, f32)>,
}

impl Selection {
    pub fn all(order: Vec<usize>) -> Self {
        Self { order, ..Default::default() }
    }
}

pub trait Strategy {
    fn name(&self) -> String;
    fn select(&mut self, ctx: &IterationContext, input: &SelectInput) -> Result<Selection, PcgError>;
}

/// Every pricing problem, every iteration.
#[derive(Debug, Clone, Default)]
pub struct Full;

impl Strategy for Full {
    fn name(&self) -> String {
        "full".into()
    }

    fn select(&mut self, ctx: &IterationContext, _: &SelectInput) -> Result<Selection, PcgError> {
        Ok(Selection::all((0..ctx.n_profiles()).collect()))
    }
}

/// Round robin from the cursor; stop once `max_negative` problems priced out.
#[derive(Debug, Clone)]
pub struct Gamache {
    pub max_negative: usize,
}

impl Strategy for Gamache {
    fn name(&self) -> String {
        format!("gamache:{}", self.max_negative)
    }

    fn select(&mut self, ctx: &IterationContext, _: &SelectInput) -> Result<Selection, PcgError> {
        let n = ctx.n_profiles();
        let order = (0..n).map(|k| (ctx.cursor + k) % n.max(1)).collect();
        Ok(Selection { order, stop_after_negatives: Some(self.max_negative.max(1)), predictions: Vec::new() })
    }
}

/// Only the problems that priced out in the previous iteration.
#[derive(Debug, Clone, Default)]
pub struct Rothenbaecher;

impl Strategy for Rothenbaecher {
    fn name(&self) -> String {
        "rothenbaecher".into()
    }

    fn select(&mut self, ctx: &IterationContext, _: &SelectInput) -> Result<Selection, PcgError> {
        let order = match ctx.history.last() {
            None => (0..ctx.n_profiles()).collect(),
            Some(prev) => prev.iter().enumerate().filter(|(_, r)| r.negative).map(|(q, _)| q).collect(),
        };
        Ok(Selection::all(order))
    }
}

/// Each problem independently with probability `p`.
#[derive(Debug, Clone)]
pub struct RandomSubset {
    pub p: f64,
    rng: ChaCha8Rng,
}

impl RandomSubset {
    pub fn new(p: f64, seed: u64) -> Self {
        Self { p: p.clamp(0.0, 1.0), rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Strategy for RandomSubset {
    fn name(&self) -> String {
        format!("random:{}", self.p)
    }

    fn select(&mut self, ctx: &IterationContext, _: &SelectInput) -> Result<Selection, PcgError> {
        let order = (0..ctx.n_profiles()).filter(|_| self.rng.gen_bool(self.p)).collect();
        Ok(Selection::all(order))
    }
}

/// Scores a pricing-problem graph with the probability that it prices out.
pub trait Predictor {
    fn predict(&mut self, graph: &InputGraph) -> Result<f32, GnnError>;
}

impl Predictor for GnnModel {
    fn predict(&mut self, graph: &InputGraph) -> Result<f32, GnnError> {
        GnnModel::predict(self, graph)
    }
}

/// Uniform random scores, for exercising the predictor path without weights.
#[derive(Debug, Clone)]
pub struct StubPredictor {
    rng: ChaCha8Rng,
}

impl StubPredictor {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Predictor for StubPredictor {
    fn predict(&mut self, _: &InputGraph) -> Result<f32, GnnError> {
        Ok(self.rng.gen::<f32>())
    }
}

/// Solves the problems whose predicted score reaches the threshold. Falls
/// back to all problems at the root (unless `apply_at_root`) and always
/// includes profiles with forbidden columns.
pub struct Gnn {
    pub predictor: Box<dyn Predictor>,
    pub threshold: f32,
    pub apply_at_root: bool,
    label: String,
}

impl Gnn {
    pub fn new(predictor: Box<dyn Predictor>, threshold: f32, label: impl Into<String>) -> Self {
        Self { predictor, threshold, apply_at_root: false, label: label.into() }
    }
}

impl fmt::Debug for Gnn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gnn").field("threshold", &self.threshold).field("label", &self.label).finish()
    }
}

impl Strategy for Gnn {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn select(&mut self, ctx: &IterationContext, input: &SelectInput) -> Result<Selection, PcgError> {
        let n = ctx.n_profiles();
        if ctx.root && !self.apply_at_root {
            return Ok(Selection::all((0..n).collect()));
        }
        let mut sel = Selection::default();
        for q in 0..n {
            if ctx.forbidden[q] {
                sel.order.push(q);
                continue;
            }
            let g = build_graph(input.inst, &input.networks[q], input.duals, ctx.iteration, ctx.depth)?;
            let y = self.predictor.predict(&g)?;
            sel.predictions.push((q, y));
            if y >= self.threshold {
                sel.order.push(q);
            }
        }
        Ok(sel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CgStatus {
    /// No pricing problem prices out.
    Optimal,
    /// The master LP is infeasible.
    Infeasible,
    Timeout,
    Numerical,
}

#[derive(Debug, Clone, Default)]
pub struct CgLimits {
    pub deadline: Option<Instant>,
    pub pricing: PricingOptions,
}

impl CgLimits {
    fn expired(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgIteration {
    pub iteration: usize,
    pub lp_value: f64,
    pub selected: Vec<usize>,
    pub solved: Vec<usize>,
    pub values: Vec<(usize, Option<f64>)>,
    pub predictions: Vec<(usize, f32)>,
    /// Whether unselected problems had to be solved.
    pub fallback: bool,
    pub columns_added: usize,
    pub wall: Duration,
    pub select_time: Duration,
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub status: CgStatus,
    /// Last master LP value; a valid bound only when `status` is optimal.
    pub lp_value: f64,
    pub iterations: Vec<CgIteration>,
    /// Route columns added to the master, in order.
    pub columns: Vec<Column>,
    pub select_time: Duration,
    pub pricing_time: Duration,
    pub total_time: Duration,
}

/// Column generation on `rmp` for the node described by `branch`.
///
/// Every solved pricing problem is reported to `sampler` with the raw feature
/// graph, when one is given.
#[allow(clippy::too_many_arguments)]
pub fn cg_loop(
    inst: &Instance,
    rmp: &mut Rmp,
    branch: &BranchState,
    strategy: &mut dyn Strategy,
    limits: &CgLimits,
    depth: usize,
    mut sampler: Option<&mut dyn FnMut(SampleRecord)>,
) -> Result<CgOutcome, PcgError> {
    let start = Instant::now();
    let n = inst.n_profiles();
    let networks: Vec<PricingNetwork> = (0..n).map(|q| build_network(inst, q, branch)).collect();
    let forbidden: Vec<bool> = (0..n).map(|q| branch.has_forbidden(q)).collect();
    let mut history: Vec<Vec<PpRecord>> = Vec::new();
    let mut iterations = Vec::new();
    let mut columns = Vec::new();
    let mut cursor = 0usize;
    let (mut select_time, mut pricing_time) = (Duration::ZERO, Duration::ZERO);

    let finish = |status, lp_value, iterations, columns, select_time, pricing_time| CgOutcome {
        status,
        lp_value,
        iterations,
        columns,
        select_time,
        pricing_time,
        total_time: start.elapsed(),
    };

    loop {
        let it_start = Instant::now();
        if limits.expired() {
            let v = if rmp.status() == Some(RmpStatus::Optimal) { rmp.objective() } else { f64::NAN };
            return Ok(finish(CgStatus::Timeout, v, iterations, columns, select_time, pricing_time));
        }
        match rmp.solve() {
            RmpStatus::Optimal => {}
            RmpStatus::Infeasible => {
                return Ok(finish(CgStatus::Infeasible, f64::INFINITY, iterations, columns, select_time, pricing_time))
            }
            RmpStatus::Numerical => {
                return Ok(finish(CgStatus::Numerical, f64::NAN, iterations, columns, select_time, pricing_time))
            }
        }
        let lp_value = rmp.objective();
        let duals = rmp.duals();
        let iteration = history.len();

        let t = Instant::now();
        let ctx =
            IterationContext { iteration, history: &history, cursor, depth, root: depth == 0, forbidden: &forbidden };
        let selection = strategy.select(&ctx, &SelectInput { inst, networks: &networks, duals: &duals })?;
        let elapsed = t.elapsed();
        select_time += elapsed;

        let mut records = vec![PpRecord { solved: false, negative: false, value: None }; n];
        let mut found: Vec<Column> = Vec::new();
        let mut solved = Vec::new();
        let mut values = Vec::new();
        let mut negatives = 0usize;
        let mut timed_out = false;

        let mut price = |q: usize,
                         records: &mut Vec<PpRecord>,
                         found: &mut Vec<Column>,
                         sampler: &mut Option<&mut dyn FnMut(SampleRecord)>|
         -> Result<bool, PcgError> {
            let t = Instant::now();
            let out = solve_pp(inst, &networks[q], &duals, branch, &limits.pricing)?;
            pricing_time += t.elapsed();
            let negative = out.value.is_some_and(|v| v < -NEGATIVE_TOL);
            records[q] = PpRecord { solved: true, negative, value: out.value };
            if let Some(sink) = sampler.as_mut() {
                let g = build_graph(inst, &networks[q], &duals, iteration, depth)?;
                sink(SampleRecord::new(g, out.value));
            }
            if negative {
                found.push(out.column.expect("value implies column"));
            }
            Ok(negative)
        };

        let mut selected_seen = vec![false; n];
        for &q in &selection.order {
            if q >= n || selected_seen[q] {
                continue;
            }
            selected_seen[q] = true;
            if limits.expired() {
                timed_out = true;
                break;
            }
            let neg = price(q, &mut records, &mut found, &mut sampler)?;
            solved.push(q);
            values.push((q, records[q].value));
            cursor = (q + 1) % n;
            if neg {
                negatives += 1;
                if selection.stop_after_negatives.is_some_and(|m| negatives >= m) {
                    break;
                }
            }
        }
        let mut fallback = false;
        if negatives == 0 && !timed_out {
            for q in 0..n {
                if records[q].solved {
                    continue;
                }
                if limits.expired() {
                    timed_out = true;
                    break;
                }
                fallback = true;
                if price(q, &mut records, &mut found, &mut sampler)? {
                    negatives += 1;
                }
                solved.push(q);
                values.push((q, records[q].value));
            }
        }

        let mut added = 0;
        for col in found {
            if rmp.add_column(col.clone()).is_some() {
                columns.push(col);
                added += 1;
            }
        }
        let selected: Vec<usize> = selection.order.iter().copied().filter(|&q| q < n).collect();
        iterations.push(CgIteration {
            iteration,
            lp_value,
            selected,
            solved,
            values,
            predictions: selection.predictions,
            fallback,
            columns_added: added,
            wall: it_start.elapsed(),
            select_time: elapsed,
        });
        history.push(records);

        if timed_out {
            return Ok(finish(CgStatus::Timeout, lp_value, iterations, columns, select_time, pricing_time));
        }
        if negatives == 0 {
            return Ok(finish(CgStatus::Optimal, lp_value, iterations, columns, select_time, pricing_time));
        }
        if added == 0 {
            log::warn!("pricing returned only columns already in the master; stopping column generation");
            return Ok(finish(CgStatus::Numerical, lp_value, iterations, columns, select_time, pricing_time));
        }
    }
}

/// Parses `full`, `gamache:<n>`, `rothenbaecher`, `random:<p>` and
/// `gnn:<weights>[:<threshold>]`.
pub fn parse_strategy(spec: &str, seed: u64) -> Result<Box<dyn Strategy>, String> {
    let (head, rest) = spec.split_once(':').map_or((spec, None), |(h, r)| (h, Some(r)));
    match (head, rest) {
        ("full", None) => Ok(Box::new(Full)),
        ("rothenbaecher" | "rothenbacher", None) => Ok(Box::new(Rothenbaecher)),
        ("gamache", Some(n)) => {
            let n: usize = n.parse().map_err(|_| format!("bad gamache count {n:?}"))?;
            if n == 0 {
                return Err("gamache count must be positive".into());
            }
            Ok(Box::new(Gamache { max_negative: n }))
        }
        ("random", Some(p)) => {
            let p: f64 = p.parse().map_err(|_| format!("bad probability {p:?}"))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("probability {p} outside [0, 1]"));
            }
            Ok(Box::new(RandomSubset::new(p, seed)))
        }
        ("gnn", Some(rest)) => {
            let (path, threshold) = match rest.rsplit_once(':') {
                Some((path, t)) if t.parse::<f32>().is_ok() => (path, t.parse::<f32>().unwrap()),
                _ => (rest, 0.5),
            };
            let model = GnnModel::load(path).map_err(|e| format!("loading {path}: {e}"))?;
            Ok(Box::new(Gnn::new(Box::new(model), threshold, spec)))
        }
        ("stub", None) => Ok(Box::new(Gnn::new(Box::new(StubPredictor::new(seed)), 0.5, "stub"))),
        _ => Err(format!("unknown strategy {spec:?}")),
    }
}
