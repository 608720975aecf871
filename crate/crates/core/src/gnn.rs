//! Inference engine for the pricing-problem classifier: embeddings with
//! positional encoding, GINE-style directed and bipartite convolutions,
//! sum pooling and a sigmoid head. Weights load from a binary bundle.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featgraph::{FeatureStats, InputGraph, ARC_BASE, EDGE_FEATURES, NODE_BASE, SUPP_FEATURES};

pub const MAGIC: &[u8; 8] = b"TRGNNW\0\0";
pub const FORMAT_VERSION: u32 = 1;

/// Fixed layer order of the architecture.
pub const LAYERS: [&str; 9] =
    ["embed", "biconv_s2t", "inconv", "biconv_t2s", "biconv_s2t", "inconv", "outconv", "pool", "final"];

const CONVS: [&str; 6] = ["conv1_s2t", "conv2_in", "conv3_t2s", "conv4_s2t", "conv5_in", "conv6_out"];
const EMBEDS: [&str; 4] = ["embed_node", "embed_arc", "embed_supp", "embed_edge"];

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported weight format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncation: weight file ends early")]
    Truncated,
    #[error("shape mismatch for {name}: expected {expected:?}, found {found:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("bad manifest: {0}")]
    Manifest(String),
    #[error("incompatible input: {0}")]
    Incompatible(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dense row-major matrix of 32-bit floats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f32>], cols: usize) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `self · x`.
    pub fn matvec(&self, x: &[f32]) -> Vec<f32> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }
}

/// `W2 · relu(W1 · x + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: Matrix,
    pub b1: Vec<f32>,
    pub w2: Matrix,
    pub b2: Vec<f32>,
}

impl Mlp {
    pub fn input_dim(&self) -> usize {
        self.w1.cols
    }

    pub fn output_dim(&self) -> usize {
        self.w2.rows
    }

    pub fn forward(&self, x: &[f32]) -> Result<Vec<f32>, GnnError> {
        if x.len() != self.w1.cols {
            return Err(GnnError::Incompatible(format!("mlp expects {} inputs, got {}", self.w1.cols, x.len())));
        }
        let mut h = self.w1.matvec(x);
        for (v, b) in h.iter_mut().zip(&self.b1) {
            *v = (*v + b).max(0.0);
        }
        let mut y = self.w2.matvec(&h);
        for (v, b) in y.iter_mut().zip(&self.b2) {
            *v += b;
        }
        Ok(y)
    }

    fn forward_rows(&self, m: &Matrix) -> Result<Matrix, GnnError> {
        let mut out = Matrix::zeros(m.rows, self.output_dim());
        for i in 0..m.rows {
            let y = self.forward(m.row(i))?;
            out.row_mut(i).copy_from_slice(&y);
        }
        Ok(out)
    }
}

/// One GINE update: `MLP((1 + ε) h + Σ relu(h_src + e))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub eps: f32,
    pub mlp: Mlp,
}

impl Conv {
    fn update(&self, h: &[f32], agg: &[f32]) -> Result<Vec<f32>, GnnError> {
        let z: Vec<f32> = h.iter().zip(agg).map(|(a, s)| (1.0 + self.eps) * a + s).collect();
        self.mlp.forward(&z)
    }
}

fn add_relu(acc: &mut [f32], h: &[f32], e: &[f32]) {
    for ((a, x), y) in acc.iter_mut().zip(h).zip(e) {
        *a += (x + y).max(0.0);
    }
}

/// Messages along arcs: node `i` aggregates over arcs `(j, i)`.
pub fn conv_in(h: &Matrix, arcs: &[(usize, usize)], e: &Matrix, conv: &Conv) -> Result<Matrix, GnnError> {
    directed(h, arcs, e, conv, true)
}

/// Messages against arcs: node `i` aggregates over arcs `(i, j)`.
pub fn conv_out(h: &Matrix, arcs: &[(usize, usize)], e: &Matrix, conv: &Conv) -> Result<Matrix, GnnError> {
    directed(h, arcs, e, conv, false)
}

fn directed(h: &Matrix, arcs: &[(usize, usize)], e: &Matrix, conv: &Conv, incoming: bool) -> Result<Matrix, GnnError> {
    let mut agg = Matrix::zeros(h.rows, h.cols);
    for (a, &(from, to)) in arcs.iter().enumerate() {
        let (target, source) = if incoming { (to, from) } else { (from, to) };
        add_relu(agg.row_mut(target), h.row(source), e.row(a));
    }
    let mut out = Matrix::zeros(h.rows, conv.mlp.output_dim());
    for i in 0..h.rows {
        let y = conv.update(h.row(i), agg.row(i))?;
        out.row_mut(i).copy_from_slice(&y);
    }
    Ok(out)
}

/// Supplementary to transportation: every transportation node `i` aggregates
/// over all supplementary nodes `τ`; edge `(i, τ)` sits in row `i·|T| + τ`.
pub fn biconv_s2t(h_t: &Matrix, h_s: &Matrix, e: &Matrix, conv: &Conv) -> Result<Matrix, GnnError> {
    let mut out = Matrix::zeros(h_t.rows, conv.mlp.output_dim());
    let mut agg = vec![0.0f32; h_t.cols];
    for i in 0..h_t.rows {
        agg.iter_mut().for_each(|v| *v = 0.0);
        for tau in 0..h_s.rows {
            add_relu(&mut agg, h_s.row(tau), e.row(i * h_s.rows + tau));
        }
        let y = conv.update(h_t.row(i), &agg)?;
        out.row_mut(i).copy_from_slice(&y);
    }
    Ok(out)
}

/// Transportation to supplementary.
pub fn biconv_t2s(h_s: &Matrix, h_t: &Matrix, e: &Matrix, conv: &Conv) -> Result<Matrix, GnnError> {
    let mut out = Matrix::zeros(h_s.rows, conv.mlp.output_dim());
    let mut agg = vec![0.0f32; h_s.cols];
    for tau in 0..h_s.rows {
        agg.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..h_t.rows {
            add_relu(&mut agg, h_t.row(i), e.row(i * h_s.rows + tau));
        }
        let y = conv.update(h_s.row(tau), &agg)?;
        out.row_mut(tau).copy_from_slice(&y);
    }
    Ok(out)
}

/// `pe[2i] = sin(τ / 10000^{2i/d})`, `pe[2i+1] = cos(τ / 10000^{2i/d})`.
pub fn positional_encoding(tau: usize, d: usize) -> Vec<f32> {
    (0..d)
        .map(|j| {
            let i2 = (j - j % 2) as f64;
            let angle = tau as f64 / 10000f64.powf(i2 / d as f64);
            if j % 2 == 0 {
                angle.sin() as f32
            } else {
                angle.cos() as f32
            }
        })
        .collect()
}

pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    /// `d_h`: width of every representation.
    pub hidden: usize,
    /// Width of the hidden layer inside every MLP.
    pub mlp_hidden: usize,
    /// `M`.
    pub padding_width: usize,
    pub layers: Vec<String>,
    pub stats: FeatureStats,
}

impl Manifest {
    pub fn node_features(&self) -> usize {
        NODE_BASE + 2 * self.padding_width
    }

    pub fn arc_features(&self) -> usize {
        ARC_BASE + 2 * self.padding_width
    }

    /// Expected tensor shapes in file order.
    pub fn tensor_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (d, m) = (self.hidden, self.mlp_hidden);
        let mut out = Vec::new();
        let mlp = |out: &mut Vec<(String, Vec<usize>)>, name: &str, input: usize, output: usize| {
            out.push((format!("{name}.w1"), vec![m, input]));
            out.push((format!("{name}.b1"), vec![m]));
            out.push((format!("{name}.w2"), vec![output, m]));
            out.push((format!("{name}.b2"), vec![output]));
        };
        let inputs = [self.node_features(), self.arc_features(), SUPP_FEATURES, EDGE_FEATURES];
        for (name, input) in EMBEDS.iter().zip(inputs) {
            mlp(&mut out, name, input, d);
        }
        for name in CONVS {
            out.push((format!("{name}.eps"), vec![1]));
            mlp(&mut out, &format!("{name}.mlp"), d, d);
        }
        mlp(&mut out, "final", d, 1);
        out
    }

    fn check(&self) -> Result<(), GnnError> {
        if self.version != FORMAT_VERSION {
            return Err(GnnError::UnsupportedVersion(self.version));
        }
        if self.layers.iter().map(String::as_str).ne(LAYERS) {
            return Err(GnnError::Manifest(format!("layer sequence {:?} differs from {:?}", self.layers, LAYERS)));
        }
        if self.hidden == 0 || self.mlp_hidden == 0 || self.padding_width == 0 {
            return Err(GnnError::Manifest("zero width".into()));
        }
        self.stats.check(self.padding_width).map_err(|e| GnnError::Manifest(e.to_string()))
    }
}

/// Named tensor as stored in the weight file.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

/// A loaded, validated model.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel {
    pub manifest: Manifest,
    pub embed: [Mlp; 4],
    pub convs: [Conv; 6],
    pub head: Mlp,
}

/// Per-element embeddings, all of width `d_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub nodes: Matrix,
    pub arcs: Matrix,
    pub supp: Matrix,
    pub edges: Matrix,
}

impl GnnModel {
    pub fn embed(&self, g: &InputGraph) -> Result<Embeddings, GnnError> {
        let nodes = self.embed[0].forward_rows(&g.node_features)?;
        let arcs = self.embed[1].forward_rows(&g.arc_features)?;
        let mut supp = self.embed[2].forward_rows(&g.supp_features)?;
        for tau in 0..supp.rows {
            let pe = positional_encoding(tau, supp.cols);
            for (v, p) in supp.row_mut(tau).iter_mut().zip(pe) {
                *v += p;
            }
        }
        let edges = self.embed[3].forward_rows(&g.edge_features)?;
        Ok(Embeddings { nodes, arcs, supp, edges })
    }

    /// Full pipeline on an already standardized graph.
    pub fn forward(&self, g: &InputGraph) -> Result<f32, GnnError> {
        self.check_graph(g)?;
        let emb = self.embed(g)?;
        let c = &self.convs;
        let h_t = biconv_s2t(&emb.nodes, &emb.supp, &emb.edges, &c[0])?;
        let h_t = conv_in(&h_t, &g.arcs, &emb.arcs, &c[1])?;
        let h_s = biconv_t2s(&emb.supp, &h_t, &emb.edges, &c[2])?;
        let h_t = biconv_s2t(&h_t, &h_s, &emb.edges, &c[3])?;
        let h_t = conv_in(&h_t, &g.arcs, &emb.arcs, &c[4])?;
        let h_t = conv_out(&h_t, &g.arcs, &emb.arcs, &c[5])?;
        let mut pooled = vec![0.0f32; h_t.cols];
        for i in 0..h_t.rows {
            for (p, v) in pooled.iter_mut().zip(h_t.row(i)) {
                *p += v;
            }
        }
        Ok(sigmoid(self.head.forward(&pooled)?[0]))
    }

    /// Standardizes a raw graph with the manifest statistics, then predicts.
    pub fn predict(&self, raw: &InputGraph) -> Result<f32, GnnError> {
        self.check_graph(raw)?;
        let mut g = raw.clone();
        self.manifest.stats.apply(&mut g);
        self.forward(&g)
    }

    fn check_graph(&self, g: &InputGraph) -> Result<(), GnnError> {
        let m = &self.manifest;
        if g.meta.padding_width != m.padding_width {
            return Err(GnnError::Incompatible(format!(
                "graph padding width {} differs from model {}",
                g.meta.padding_width, m.padding_width
            )));
        }
        let widths = [
            (g.node_features.cols, m.node_features(), "node"),
            (g.arc_features.cols, m.arc_features(), "arc"),
            (g.supp_features.cols, SUPP_FEATURES, "supplementary node"),
            (g.edge_features.cols, EDGE_FEATURES, "supplementary edge"),
        ];
        for (got, want, what) in widths {
            if got != want {
                return Err(GnnError::Incompatible(format!("{what} features have width {got}, model expects {want}")));
            }
        }
        if g.arc_features.rows != g.arcs.len() || g.edge_features.rows != g.node_features.rows * g.supp_features.rows {
            return Err(GnnError::Incompatible("feature rows do not match graph structure".into()));
        }
        Ok(())
    }

    /// Tensors in file order.
    pub fn tensors(&self) -> Vec<Tensor> {
        let mut out = Vec::new();
        let push_mlp = |out: &mut Vec<Tensor>, name: &str, mlp: &Mlp| {
            out.push(Tensor {
                name: format!("{name}.w1"),
                dims: vec![mlp.w1.rows, mlp.w1.cols],
                data: mlp.w1.data.clone(),
            });
            out.push(Tensor { name: format!("{name}.b1"), dims: vec![mlp.b1.len()], data: mlp.b1.clone() });
            out.push(Tensor {
                name: format!("{name}.w2"),
                dims: vec![mlp.w2.rows, mlp.w2.cols],
                data: mlp.w2.data.clone(),
            });
            out.push(Tensor { name: format!("{name}.b2"), dims: vec![mlp.b2.len()], data: mlp.b2.clone() });
        };
        for (name, mlp) in EMBEDS.iter().zip(&self.embed) {
            push_mlp(&mut out, name, mlp);
        }
        for (name, conv) in CONVS.iter().zip(&self.convs) {
            out.push(Tensor { name: format!("{name}.eps"), dims: vec![1], data: vec![conv.eps] });
            push_mlp(&mut out, &format!("{name}.mlp"), &conv.mlp);
        }
        push_mlp(&mut out, "final", &self.head);
        out
    }

    /// Builds a model from a manifest and tensors, checking every shape.
    pub fn from_tensors(manifest: Manifest, tensors: Vec<Tensor>) -> Result<Self, GnnError> {
        manifest.check()?;
        let expected = manifest.tensor_shapes();
        let mut map: std::collections::HashMap<String, Tensor> =
            tensors.into_iter().map(|t| (t.name.clone(), t)).collect();
        let mut take = |name: &str| -> Result<Tensor, GnnError> {
            let t = map.remove(name).ok_or_else(|| GnnError::MissingTensor(name.to_string()))?;
            let want = &expected.iter().find(|(n, _)| n == name).expect("known tensor").1;
            if &t.dims != want {
                return Err(GnnError::ShapeMismatch { name: name.into(), expected: want.clone(), found: t.dims });
            }
            Ok(t)
        };
        let mut mlp = |name: &str| -> Result<Mlp, GnnError> {
            let w1 = take(&format!("{name}.w1"))?;
            let b1 = take(&format!("{name}.b1"))?;
            let w2 = take(&format!("{name}.w2"))?;
            let b2 = take(&format!("{name}.b2"))?;
            Ok(Mlp {
                w1: Matrix { rows: w1.dims[0], cols: w1.dims[1], data: w1.data },
                b1: b1.data,
                w2: Matrix { rows: w2.dims[0], cols: w2.dims[1], data: w2.data },
                b2: b2.data,
            })
        };
        let embed = [mlp(EMBEDS[0])?, mlp(EMBEDS[1])?, mlp(EMBEDS[2])?, mlp(EMBEDS[3])?];
        let mut convs = Vec::with_capacity(6);
        for name in CONVS {
            let m = mlp(&format!("{name}.mlp"))?;
            convs.push(m);
        }
        let head = mlp("final")?;
        let mut eps = Vec::with_capacity(6);
        for name in CONVS {
            eps.push(take(&format!("{name}.eps"))?.data[0]);
        }
        if let Some(extra) = map.keys().next() {
            return Err(GnnError::Manifest(format!("unexpected tensor {extra}")));
        }
        let convs: Vec<Conv> = convs.into_iter().zip(eps).map(|(mlp, eps)| Conv { eps, mlp }).collect();
        Ok(Self { manifest, embed, convs: convs.try_into().expect("six convolutions"), head })
    }

    /// Model with weights drawn uniformly from `±1/sqrt(fan_in)`, ε = 0 and
    /// identity standardization.
    pub fn seeded(seed: u64, hidden: usize, mlp_hidden: usize, padding_width: usize) -> Self {
        let manifest = Manifest {
            version: FORMAT_VERSION,
            hidden,
            mlp_hidden,
            padding_width,
            layers: LAYERS.iter().map(|s| s.to_string()).collect(),
            stats: FeatureStats::identity(padding_width),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = manifest
            .tensor_shapes()
            .into_iter()
            .map(|(name, dims)| {
                let n: usize = dims.iter().product();
                let data = if name.ends_with(".eps") {
                    vec![0.0]
                } else {
                    let fan_in = if dims.len() == 2 { dims[1] } else { dims[0] };
                    let bound = 1.0 / (fan_in as f32).sqrt();
                    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
                };
                Tensor { name, dims, data }
            })
            .collect();
        Self::from_tensors(manifest, tensors).expect("shapes follow the manifest")
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), GnnError> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        let manifest = serde_json::to_vec(&self.manifest).map_err(|e| GnnError::Manifest(e.to_string()))?;
        w.write_all(&(manifest.len() as u32).to_le_bytes())?;
        w.write_all(&manifest)?;
        let tensors = self.tensors();
        w.write_all(&(tensors.len() as u32).to_le_bytes())?;
        for t in tensors {
            w.write_all(&(t.name.len() as u32).to_le_bytes())?;
            w.write_all(t.name.as_bytes())?;
            w.write_all(&(t.dims.len() as u32).to_le_bytes())?;
            for &d in &t.dims {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for v in t.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, GnnError> {
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(GnnError::BadMagic);
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(GnnError::UnsupportedVersion(version));
        }
        let len = read_u32(r)? as usize;
        let mut buf = vec![0u8; len];
        read_exact(r, &mut buf)?;
        let manifest: Manifest = serde_json::from_slice(&buf).map_err(|e| GnnError::Manifest(e.to_string()))?;
        let count = read_u32(r)? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let nlen = read_u32(r)? as usize;
            let mut name = vec![0u8; nlen];
            read_exact(r, &mut name)?;
            let name = String::from_utf8(name).map_err(|e| GnnError::Manifest(e.to_string()))?;
            let rank = read_u32(r)? as usize;
            let mut dims = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                dims.push(read_u32(r)? as usize);
            }
            let n: usize = dims.iter().product();
            let mut raw = vec![0u8; n * 4];
            read_exact(r, &mut raw)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            tensors.push(Tensor { name, dims, data });
        }
        Self::from_tensors(manifest, tensors)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GnnError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GnnError> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<(), GnnError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => GnnError::Truncated,
        _ => GnnError::Io(e),
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32, GnnError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_mlp(d: usize) -> Mlp {
        let mut eye = Matrix::zeros(d, d);
        for i in 0..d {
            eye.row_mut(i)[i] = 1.0;
        }
        Mlp { w1: eye.clone(), b1: vec![0.0; d], w2: eye, b2: vec![0.0; d] }
    }

    #[test]
    fn mlp_identity_and_bias() {
        let m = identity_mlp(3);
        assert_eq!(m.forward(&[1.0, 0.0, 2.5]).unwrap(), vec![1.0, 0.0, 2.5]);
        let z = Mlp { w1: Matrix::zeros(2, 3), b1: vec![0.0; 2], w2: Matrix::zeros(2, 2), b2: vec![0.5, -1.0] };
        assert_eq!(z.forward(&[3.0, 4.0, 5.0]).unwrap(), vec![0.5, -1.0]);
        assert!(matches!(z.forward(&[1.0]), Err(GnnError::Incompatible(_))));
    }

    #[test]
    fn mlp_matches_hand_computation() {
        let m = Mlp {
            w1: Matrix { rows: 2, cols: 2, data: vec![1.0, -2.0, 0.5, 1.0] },
            b1: vec![0.5, -3.0],
            w2: Matrix { rows: 1, cols: 2, data: vec![2.0, 1.0] },
            b2: vec![0.25],
        };
        // Hidden: relu(3 - 2 + 0.5) = 1.5, relu(1.5 + 1 - 3) = 0; out = 2 * 1.5 + 0.25.
        assert_eq!(m.forward(&[3.0, 1.0]).unwrap(), vec![3.25]);
    }

    #[test]
    fn positional_encoding_at_zero() {
        assert_eq!(positional_encoding(0, 6), vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_ne!(positional_encoding(1, 6), positional_encoding(2, 6));
    }

    #[test]
    fn directed_convs() {
        let conv = Conv { eps: 0.0, mlp: identity_mlp(2) };
        let h = Matrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 1.0], vec![0.5, 0.5]], 2);
        let e = Matrix::from_rows(&[vec![1.0, -5.0]], 2);
        let out = conv_in(&h, &[(1, 0)], &e, &conv).unwrap();
        // Node 0 gains relu(h_1 + e) = relu(-2, -4) = 0; isolated node 2 unchanged.
        assert_eq!(out.row(0), &[1.0, 2.0]);
        assert_eq!(out.row(2), &[0.5, 0.5]);
        let out = conv_out(&h, &[(2, 0)], &e, &conv).unwrap();
        assert_eq!(out.row(2), &[0.5 + 2.0, 0.5]);
    }

    #[test]
    fn bipartite_zero_messages() {
        let conv = Conv { eps: 0.5, mlp: identity_mlp(2) };
        let h_t = Matrix::from_rows(&[vec![1.0, 2.0]], 2);
        let h_s = Matrix::zeros(3, 2);
        let e = Matrix::zeros(3, 2);
        assert_eq!(biconv_s2t(&h_t, &h_s, &e, &conv).unwrap().row(0), &[1.5, 3.0]);
    }

    #[test]
    fn round_trip_and_errors() {
        let model = GnnModel::seeded(3, 4, 5, 2);
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        assert_eq!(GnnModel::read_from(&mut buf.as_slice()).unwrap(), model);
        let cut = &buf[..buf.len() - 3];
        assert!(matches!(GnnModel::read_from(&mut &cut[..]), Err(GnnError::Truncated)));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(GnnModel::read_from(&mut bad.as_slice()), Err(GnnError::BadMagic)));
        let mut v2 = buf.clone();
        v2[8] = 2;
        assert!(matches!(GnnModel::read_from(&mut v2.as_slice()), Err(GnnError::UnsupportedVersion(2))));
        let mut tensors = model.tensors();
        tensors[0].dims = vec![1, 1];
        tensors[0].data = vec![0.0];
        assert!(matches!(GnnModel::from_tensors(model.manifest.clone(), tensors), Err(GnnError::ShapeMismatch { .. })));
    }
}
