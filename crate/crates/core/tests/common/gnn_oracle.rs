//! Straight-line double-precision re-implementation of the network, used to
//! check the library layer by layer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use teamroute::featgraph::{GraphMeta, InputGraph, ARC_BASE, EDGE_FEATURES, NODE_BASE, SUPP_FEATURES};
use teamroute::gnn::{Conv, GnnModel, Matrix, Mlp};

pub type Rows = Vec<Vec<f64>>;

pub fn rows(m: &Matrix) -> Rows {
    (0..m.rows).map(|i| (0..m.cols).map(|j| m.data[i * m.cols + j] as f64).collect()).collect()
}

pub fn matrix(r: &Rows) -> Matrix {
    let cols = r.first().map_or(0, Vec::len);
    Matrix::from_rows(&r.iter().map(|x| x.iter().map(|&v| v as f32).collect()).collect::<Vec<_>>(), cols)
}

pub fn mlp(m: &Mlp, x: &[f64]) -> Vec<f64> {
    let mut hidden = vec![0.0; m.w1.rows];
    for r in 0..m.w1.rows {
        let mut s = m.b1[r] as f64;
        for c in 0..m.w1.cols {
            s += m.w1.data[r * m.w1.cols + c] as f64 * x[c];
        }
        hidden[r] = if s > 0.0 { s } else { 0.0 };
    }
    let mut out = vec![0.0; m.w2.rows];
    for r in 0..m.w2.rows {
        let mut s = m.b2[r] as f64;
        for c in 0..m.w2.cols {
            s += m.w2.data[r * m.w2.cols + c] as f64 * hidden[c];
        }
        out[r] = s;
    }
    out
}

pub fn pe(tau: usize, d: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    for i in 0..d.div_ceil(2) {
        let angle = tau as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
        v[2 * i] = angle.sin();
        if 2 * i + 1 < d {
            v[2 * i + 1] = angle.cos();
        }
    }
    v
}

fn gine(conv: &Conv, h: &[f64], messages: &[(&[f64], &[f64])]) -> Vec<f64> {
    let eps = conv.eps as f64;
    let mut z: Vec<f64> = h.iter().map(|v| (1.0 + eps) * v).collect();
    for (src, e) in messages {
        for k in 0..z.len() {
            let m = src[k] + e[k];
            if m > 0.0 {
                z[k] += m;
            }
        }
    }
    mlp(&conv.mlp, &z)
}

/// `incoming`: node `i` hears arcs `(j, i)`; otherwise arcs `(i, j)`.
pub fn conv_directed(conv: &Conv, h: &Rows, arcs: &[(usize, usize)], e: &Rows, incoming: bool) -> Rows {
    (0..h.len())
        .map(|i| {
            let msgs: Vec<(&[f64], &[f64])> = arcs
                .iter()
                .enumerate()
                .filter_map(|(a, &(from, to))| {
                    if incoming && to == i {
                        Some((h[from].as_slice(), e[a].as_slice()))
                    } else if !incoming && from == i {
                        Some((h[to].as_slice(), e[a].as_slice()))
                    } else {
                        None
                    }
                })
                .collect();
            gine(conv, &h[i], &msgs)
        })
        .collect()
}

/// Supplementary nodes to transportation nodes; edge `(i, τ)` in row `i·S + τ`.
pub fn conv_s2t(conv: &Conv, h_t: &Rows, h_s: &Rows, e: &Rows) -> Rows {
    let s = h_s.len();
    (0..h_t.len())
        .map(|i| {
            let msgs: Vec<(&[f64], &[f64])> = (0..s).map(|t| (h_s[t].as_slice(), e[i * s + t].as_slice())).collect();
            gine(conv, &h_t[i], &msgs)
        })
        .collect()
}

pub fn conv_t2s(conv: &Conv, h_s: &Rows, h_t: &Rows, e: &Rows) -> Rows {
    let s = h_s.len();
    (0..s)
        .map(|t| {
            let msgs: Vec<(&[f64], &[f64])> =
                (0..h_t.len()).map(|i| (h_t[i].as_slice(), e[i * s + t].as_slice())).collect();
            gine(conv, &h_s[t], &msgs)
        })
        .collect()
}

pub struct Embedded {
    pub nodes: Rows,
    pub arcs: Rows,
    pub supp: Rows,
    pub edges: Rows,
}

pub fn embed(model: &GnnModel, g: &InputGraph) -> Embedded {
    let apply = |m: &Mlp, x: &Matrix| rows(x).iter().map(|r| mlp(m, r)).collect::<Rows>();
    let mut supp = apply(&model.embed[2], &g.supp_features);
    for (tau, row) in supp.iter_mut().enumerate() {
        let p = pe(tau, row.len());
        for (v, q) in row.iter_mut().zip(p) {
            *v += q;
        }
    }
    Embedded {
        nodes: apply(&model.embed[0], &g.node_features),
        arcs: apply(&model.embed[1], &g.arc_features),
        supp,
        edges: apply(&model.embed[3], &g.edge_features),
    }
}

/// The whole pipeline on a standardized graph.
pub fn forward(model: &GnnModel, g: &InputGraph) -> f64 {
    let emb = embed(model, g);
    let c = &model.convs;
    let h = conv_s2t(&c[0], &emb.nodes, &emb.supp, &emb.edges);
    let h = conv_directed(&c[1], &h, &g.arcs, &emb.arcs, true);
    let s = conv_t2s(&c[2], &emb.supp, &h, &emb.edges);
    let h = conv_s2t(&c[3], &h, &s, &emb.edges);
    let h = conv_directed(&c[4], &h, &g.arcs, &emb.arcs, true);
    let h = conv_directed(&c[5], &h, &g.arcs, &emb.arcs, false);
    let mut pooled = vec![0.0; model.manifest.hidden];
    for row in &h {
        for (p, v) in pooled.iter_mut().zip(row) {
            *p += v;
        }
    }
    let y = mlp(&model.head, &pooled)[0];
    1.0 / (1.0 + (-y).exp())
}

/// Hand-built graph with three transportation nodes, two time steps and
/// seeded features.
pub fn three_node_graph(seed: u64, padding_width: usize, arcs: Vec<(usize, usize)>) -> InputGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dense = |r: usize, c: usize, binary: bool| {
        let data: Vec<Vec<f32>> = (0..r)
            .map(|_| {
                (0..c).map(|_| if binary { rng.gen_range(0..2) as f32 } else { rng.gen_range(-2.0f32..2.0) }).collect()
            })
            .collect();
        Matrix::from_rows(&data, c)
    };
    let (n, s) = (3, 2);
    InputGraph {
        meta: GraphMeta {
            profile: 0,
            instance: format!("fixture-{seed}"),
            iteration: 0,
            depth: 0,
            padding_width,
            horizon: s,
        },
        tasks: vec![0, 1, 2],
        node_features: dense(n, NODE_BASE + 2 * padding_width, false),
        arc_features: dense(arcs.len(), ARC_BASE + 2 * padding_width, false),
        supp_features: dense(s, SUPP_FEATURES, false),
        edge_features: dense(n * s, EDGE_FEATURES, true),
        arcs,
    }
}

/// Seeded model with non-zero ε so the self term is exercised.
pub fn model_with_eps(seed: u64, hidden: usize, padding_width: usize) -> GnnModel {
    let mut m = GnnModel::seeded(seed, hidden, hidden, padding_width);
    for (k, c) in m.convs.iter_mut().enumerate() {
        c.eps = 0.1 * k as f32 - 0.2;
    }
    m
}

pub fn max_diff(a: &Rows, b: &Rows) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs())).fold(0.0, f64::max)
}

/// Every layer of the library against the oracle on the three-node fixtures,
/// then the full pipeline. Returns the largest deviation.
pub fn layer_check(seed: u64) -> Result<f64, String> {
    use teamroute::gnn::{biconv_s2t, biconv_t2s, conv_in, conv_out};
    let arc_sets = [vec![(0, 1), (1, 2)], vec![(0, 1), (1, 2), (2, 0), (0, 2)], vec![(2, 1)], vec![]];
    let mut worst = 0.0f64;
    let mut note = |what: &str, d: f64| -> Result<(), String> {
        worst = worst.max(d);
        if d > 1e-5 {
            Err(format!("seed {seed}: {what} deviates by {d}"))
        } else {
            Ok(())
        }
    };
    for (k, arcs) in arc_sets.into_iter().enumerate() {
        let model = model_with_eps(seed * 10 + k as u64, 6, 2);
        let g = three_node_graph(seed * 31 + k as u64, 2, arcs);
        let lib = model.embed(&g).map_err(|e| e.to_string())?;
        let ora = embed(&model, &g);
        note("node embedding", max_diff(&rows(&lib.nodes), &ora.nodes))?;
        note("arc embedding", max_diff(&rows(&lib.arcs), &ora.arcs))?;
        note("supplementary embedding", max_diff(&rows(&lib.supp), &ora.supp))?;
        note("edge embedding", max_diff(&rows(&lib.edges), &ora.edges))?;

        let c = &model.convs;
        let h = biconv_s2t(&lib.nodes, &lib.supp, &lib.edges, &c[0]).map_err(|e| e.to_string())?;
        note("biconv s2t", max_diff(&rows(&h), &conv_s2t(&c[0], &ora.nodes, &ora.supp, &ora.edges)))?;
        let hin = conv_in(&h, &g.arcs, &lib.arcs, &c[1]).map_err(|e| e.to_string())?;
        note("inconv", max_diff(&rows(&hin), &conv_directed(&c[1], &rows(&h), &g.arcs, &ora.arcs, true)))?;
        let s = biconv_t2s(&lib.supp, &hin, &lib.edges, &c[2]).map_err(|e| e.to_string())?;
        note("biconv t2s", max_diff(&rows(&s), &conv_t2s(&c[2], &ora.supp, &rows(&hin), &ora.edges)))?;
        let hout = conv_out(&hin, &g.arcs, &lib.arcs, &c[5]).map_err(|e| e.to_string())?;
        note("outconv", max_diff(&rows(&hout), &conv_directed(&c[5], &rows(&hin), &g.arcs, &ora.arcs, false)))?;

        let y = model.forward(&g).map_err(|e| e.to_string())? as f64;
        note("prediction", (y - forward(&model, &g)).abs())?;
    }
    Ok(worst)
}

/// Largest prediction shift over `n` random relabelings of the
/// transportation nodes, and whether repeated calls were bitwise equal.
pub fn permutation_check(model: &GnnModel, g: &InputGraph, n: usize, seed: u64) -> Result<f64, String> {
    use rand::seq::SliceRandom;
    let base = model.predict(g).map_err(|e| e.to_string())?;
    if !(base > 0.0 && base < 1.0) {
        return Err(format!("prediction {base} outside (0, 1)"));
    }
    if model.predict(g).map_err(|e| e.to_string())?.to_bits() != base.to_bits() {
        return Err("repeated prediction differs".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let mut perm: Vec<usize> = (0..g.n_nodes()).collect();
        perm.shuffle(&mut rng);
        let y = model.predict(&g.permute_nodes(&perm)).map_err(|e| e.to_string())?;
        worst = worst.max((y - base).abs() as f64);
    }
    if worst >= 1e-6 {
        return Err(format!("prediction moved by {worst} under relabeling"));
    }
    Ok(worst)
}

/// Raw input graphs of every profile of a seeded pricing case.
pub fn real_graphs(seed: u64) -> Vec<InputGraph> {
    use teamroute::featgraph::build_graph;
    use teamroute::pricing::build_network;
    let case = super::pricing_case(seed);
    (0..case.inst.n_profiles())
        .map(|q| {
            let net = build_network(&case.inst, q, &case.branch);
            build_graph(&case.inst, &net, &case.duals, 3, 1).expect("padding fits")
        })
        .collect()
}
