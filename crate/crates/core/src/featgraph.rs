//! Feature graph of one pricing problem and the sample-log records built
//! from it.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnn::Matrix;
use crate::model::{Instance, Loc, StochasticTravelTime};
use crate::pricing::PricingNetwork;
use crate::rmp::DualSolution;

/// Scalar node features before the padded travel vector.
pub const NODE_BASE: usize = 5;
/// Scalar arc features before the padded travel vector.
pub const ARC_BASE: usize = 1;
pub const SUPP_FEATURES: usize = 1;
pub const EDGE_FEATURES: usize = 6;

pub const SAMPLE_VERSION: u32 = 1;
/// Pricing values below this count as negative.
pub const NEGATIVE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("travel distribution has {support} points but padding width is {width}")]
    Padding { support: usize, width: usize },
    #[error("statistics: {0}")]
    Stats(String),
    #[error("sample record: {0}")]
    Record(#[from] serde_json::Error),
    #[error("unsupported sample version {0}")]
    Version(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `[times] ∥ [worst time padding] ∥ [probabilities] ∥ [zero padding]`.
pub fn travel_vec(d: &StochasticTravelTime, width: usize) -> Result<Vec<f64>, FeatureError> {
    let pts = d.points();
    if pts.len() > width {
        return Err(FeatureError::Padding { support: pts.len(), width });
    }
    let mut v = Vec::with_capacity(2 * width);
    v.extend(pts.iter().map(|&(t, _)| t as f64));
    v.resize(width, d.worst_case() as f64);
    v.extend(pts.iter().map(|&(_, p)| p));
    v.resize(2 * width, 0.0);
    Ok(v)
}

/// Whether profile `q` is Pareto-optimal for `task` in crew requirements and
/// processing time among the compatible profiles.
pub fn non_dominated(inst: &Instance, task: usize, q: usize) -> bool {
    let t = &inst.tasks[task];
    let Some(p) = t.processing_time(q) else {
        return false;
    };
    let req = &inst.profiles[q].requirements;
    !t.processing.iter().any(|(&o, &po)| {
        if o == q {
            return false;
        }
        let ro = &inst.profiles[o].requirements;
        let weak = po <= p && ro.iter().zip(req).all(|(a, b)| a <= b);
        let strict = po < p || ro.iter().zip(req).any(|(a, b)| a < b);
        weak && strict
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub profile: usize,
    pub instance: String,
    pub iteration: usize,
    pub depth: usize,
    pub padding_width: usize,
    pub horizon: usize,
}

/// Partially bipartite input graph: transportation nodes and arcs, one
/// supplementary node per time step, and a complete bipartite edge set
/// between the two node kinds (edge `(i, τ)` in row `i·|T| + τ`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputGraph {
    pub meta: GraphMeta,
    /// Instance task index of every transportation node.
    pub tasks: Vec<usize>,
    /// Arc endpoints as transportation node positions.
    pub arcs: Vec<(usize, usize)>,
    pub node_features: Matrix,
    pub arc_features: Matrix,
    pub supp_features: Matrix,
    pub edge_features: Matrix,
}

impl InputGraph {
    pub fn n_nodes(&self) -> usize {
        self.tasks.len()
    }

    pub fn n_supp(&self) -> usize {
        self.supp_features.rows
    }

    /// Relabels transportation nodes: node `i` moves to position `perm[i]`.
    pub fn permute_nodes(&self, perm: &[usize]) -> InputGraph {
        let n = self.n_nodes();
        assert_eq!(perm.len(), n);
        let s = self.n_supp();
        let mut g = self.clone();
        for i in 0..n {
            g.tasks[perm[i]] = self.tasks[i];
            g.node_features.row_mut(perm[i]).copy_from_slice(self.node_features.row(i));
            for tau in 0..s {
                g.edge_features.row_mut(perm[i] * s + tau).copy_from_slice(self.edge_features.row(i * s + tau));
            }
        }
        for (a, &(i, j)) in self.arcs.iter().enumerate() {
            g.arcs[a] = (perm[i], perm[j]);
        }
        g
    }
}

/// Raw (unstandardized) graph of the pricing problem behind `network`.
pub fn build_graph(
    inst: &Instance,
    network: &PricingNetwork,
    duals: &DualSolution,
    iteration: usize,
    depth: usize,
) -> Result<InputGraph, FeatureError> {
    let q = network.profile;
    let m = inst.padding_width;
    let h = inst.horizon as usize;
    let pos: std::collections::HashMap<usize, usize> = network.tasks.iter().enumerate().map(|(k, &i)| (i, k)).collect();

    let mut nodes = Vec::with_capacity(network.tasks.len());
    let mut edges = Vec::with_capacity(network.tasks.len() * h);
    for &i in &network.tasks {
        let t = &inst.tasks[i];
        let p = t.processing_time(q).expect("network tasks are compatible");
        let mut f = vec![
            t.weight,
            p as f64,
            duals.mu[i],
            inst.travel(Loc::Depot, Loc::Task(i)).worst_case() as f64,
            if non_dominated(inst, i, q) { 1.0 } else { 0.0 },
        ];
        f.extend(travel_vec(inst.travel(Loc::Task(i), Loc::Depot), m)?);
        nodes.push(to_f32(&f));
        let marks = [
            t.earliest_start,
            t.latest_finish,
            t.extended_finish,
            t.earliest_finish(),
            t.earliest_start + p,
            t.extended_finish - p,
        ];
        for tau in 0..h as i64 {
            edges.push(marks.iter().map(|&x| if x >= tau { 1.0 } else { 0.0 }).collect());
        }
    }

    let mut arcs = Vec::with_capacity(network.arcs.len());
    let mut arc_rows = Vec::with_capacity(network.arcs.len());
    for &(i, j) in &network.arcs {
        let d = inst.travel(Loc::Task(i), Loc::Task(j));
        let mut f = vec![d.worst_case() as f64];
        f.extend(travel_vec(d, m)?);
        arc_rows.push(to_f32(&f));
        arcs.push((pos[&i], pos[&j]));
    }

    let supp: Vec<Vec<f32>> = duals.zeta_vec(inst, q).into_iter().map(|z| vec![z as f32]).collect();

    Ok(InputGraph {
        meta: GraphMeta { profile: q, instance: inst.name.clone(), iteration, depth, padding_width: m, horizon: h },
        tasks: network.tasks.clone(),
        arcs,
        node_features: Matrix::from_rows(&nodes, NODE_BASE + 2 * m),
        arc_features: Matrix::from_rows(&arc_rows, ARC_BASE + 2 * m),
        supp_features: Matrix::from_rows(&supp, SUPP_FEATURES),
        edge_features: Matrix::from_rows(&edges, EDGE_FEATURES),
    })
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Per-column mean and standard deviation for the continuous features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl ColumnStats {
    pub fn identity(n: usize) -> Self {
        Self { mean: vec![0.0; n], std: vec![1.0; n] }
    }

    /// Population statistics over the rows of several matrices.
    pub fn fit<'a>(mats: impl IntoIterator<Item = &'a Matrix>, n: usize) -> Self {
        let mut sum = vec![0.0f64; n];
        let mut sq = vec![0.0f64; n];
        let mut count = 0usize;
        for m in mats {
            for r in 0..m.rows {
                for (c, &v) in m.row(r).iter().enumerate() {
                    sum[c] += v as f64;
                    sq[c] += (v as f64) * (v as f64);
                }
                count += 1;
            }
        }
        if count == 0 {
            return Self::identity(n);
        }
        let c = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / c).collect();
        let std = sq.iter().zip(&mean).map(|(s, m)| ((s / c - m * m).max(0.0)).sqrt() as f32).collect();
        Self { mean: mean.into_iter().map(|m| m as f32).collect(), std }
    }

    fn apply(&self, m: &mut Matrix) {
        for r in 0..m.rows {
            for ((v, mu), sd) in m.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                if *sd >= 1e-9 {
                    *v = (*v - mu) / sd;
                }
            }
        }
    }
}

/// Standardization statistics stored in the weight manifest. Edge
/// indicators are never scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub node: ColumnStats,
    pub arc: ColumnStats,
    pub supp: ColumnStats,
}

impl FeatureStats {
    pub fn identity(padding_width: usize) -> Self {
        Self {
            node: ColumnStats::identity(NODE_BASE + 2 * padding_width),
            arc: ColumnStats::identity(ARC_BASE + 2 * padding_width),
            supp: ColumnStats::identity(SUPP_FEATURES),
        }
    }

    pub fn fit(graphs: &[InputGraph], padding_width: usize) -> Self {
        Self {
            node: ColumnStats::fit(graphs.iter().map(|g| &g.node_features), NODE_BASE + 2 * padding_width),
            arc: ColumnStats::fit(graphs.iter().map(|g| &g.arc_features), ARC_BASE + 2 * padding_width),
            supp: ColumnStats::fit(graphs.iter().map(|g| &g.supp_features), SUPP_FEATURES),
        }
    }

    pub fn check(&self, padding_width: usize) -> Result<(), FeatureError> {
        let want = [
            (&self.node, NODE_BASE + 2 * padding_width, "node"),
            (&self.arc, ARC_BASE + 2 * padding_width, "arc"),
            (&self.supp, SUPP_FEATURES, "supplementary"),
        ];
        for (s, n, what) in want {
            if s.mean.len() != n || s.std.len() != n {
                return Err(FeatureError::Stats(format!("{what} statistics need {n} entries")));
            }
        }
        Ok(())
    }

    pub fn apply(&self, g: &mut InputGraph) {
        self.node.apply(&mut g.node_features);
        self.arc.apply(&mut g.arc_features);
        self.supp.apply(&mut g.supp_features);
    }
}

/// One line of the sample log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub version: u32,
    pub label: bool,
    /// Optimal pricing value; `None` when the problem had no feasible column.
    pub value: Option<f64>,
    pub graph: InputGraph,
}

impl SampleRecord {
    pub fn new(graph: InputGraph, value: Option<f64>) -> Self {
        Self { version: SAMPLE_VERSION, label: label_for(value), value, graph }
    }
}

/// Positive iff the pricing problem yields a negative reduced cost column.
pub fn label_for(value: Option<f64>) -> bool {
    value.is_some_and(|v| v < -NEGATIVE_TOL)
}

/// Appends one JSON line.
pub fn emit_sample(record: &SampleRecord, sink: &mut impl Write) -> Result<(), FeatureError> {
    serde_json::to_writer(&mut *sink, record)?;
    sink.write_all(b"\n")?;
    Ok(())
}

pub fn read_samples(r: impl BufRead) -> Result<Vec<SampleRecord>, FeatureError> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord = serde_json::from_str(&line)?;
        if rec.version != SAMPLE_VERSION {
            return Err(FeatureError::Version(rec.version));
        }
        out.push(rec);
    }
    Ok(out)
}
