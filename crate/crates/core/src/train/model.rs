//! Dense layers for the two reference models and their hand-written backward pass.
//!
//! `mlp` layers compute `H W + b`. `meanagg` layers compute
//! `H W_self + mean_N(H) W_nbr + b`, where `mean_N` averages each node's
//! neighbor rows (zero for nodes without neighbors). Every layer but the
//! last applies a rectifier; the last layer produces class logits.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NeighborhoodMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlp,
    MeanAgg,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Mlp => "mlp",
            ModelKind::MeanAgg => "meanagg",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(ModelKind::Mlp),
            "meanagg" => Ok(ModelKind::MeanAgg),
            other => Err(Error::Config(format!(
                "unknown model {other:?} (expected mlp or meanagg)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w_self: Array2<f64>,
    pub w_nbr: Option<Array2<f64>>,
    pub bias: Array1<f64>,
}

/// Parameters of one model snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub kind: ModelKind,
    pub neighborhood: NeighborhoodMode,
    pub layers: Vec<Layer>,
}

impl Params {
    /// Layer widths `input -> hidden x (num_layers - 1) -> classes`. Weights
    /// are uniform in `±1/sqrt(fan_in)`, biases zero. Self weights and
    /// neighbor weights draw from separate ChaCha streams of `seed`, so an
    /// `mlp` and a `meanagg` model with equal widths share their self path.
    pub fn init(
        kind: ModelKind,
        neighborhood: NeighborhoodMode,
        dims: &[usize],
        seed: u64,
    ) -> Params {
        let mut self_rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nbr_rng = ChaCha8Rng::seed_from_u64(seed);
        nbr_rng.set_stream(1);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                let draw = |rng: &mut ChaCha8Rng| {
                    Array2::from_shape_fn((fan_in, fan_out), |_| dist.sample(rng))
                };
                let w_self = draw(&mut self_rng);
                let w_nbr = (kind == ModelKind::MeanAgg).then(|| draw(&mut nbr_rng));
                Layer {
                    w_self,
                    w_nbr,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Params {
            kind,
            neighborhood,
            layers,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn zero_like(&self) -> Params {
        Params {
            kind: self.kind,
            neighborhood: self.neighborhood,
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    w_self: Array2::zeros(l.w_self.raw_dim()),
                    w_nbr: l.w_nbr.as_ref().map(|w| Array2::zeros(w.raw_dim())),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    /// `self -= lr * grad`
    pub fn descend(&mut self, grad: &Params, lr: f64) {
        for (p, g) in self.layers.iter_mut().zip(&grad.layers) {
            p.w_self.scaled_add(-lr, &g.w_self);
            if let (Some(pw), Some(gw)) = (p.w_nbr.as_mut(), g.w_nbr.as_ref()) {
                pw.scaled_add(-lr, gw);
            }
            p.bias.scaled_add(-lr, &g.bias);
        }
    }

    /// All scalars in a fixed order (layer by layer: self, neighbor, bias).
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.w_self.iter());
            if let Some(w) = &l.w_nbr {
                out.extend(w.iter());
            }
            out.extend(l.bias.iter());
        }
        out
    }

    /// Mutable access to the `i`-th scalar in `flat` order.
    pub fn scalar_mut(&mut self, mut i: usize) -> &mut f64 {
        for l in &mut self.layers {
            let n = l.w_self.len();
            if i < n {
                return l.w_self.iter_mut().nth(i).unwrap();
            }
            i -= n;
            if let Some(w) = &mut l.w_nbr {
                if i < w.len() {
                    return w.iter_mut().nth(i).unwrap();
                }
                i -= w.len();
            }
            if i < l.bias.len() {
                return &mut l.bias[i];
            }
            i -= l.bias.len();
        }
        panic!("parameter index out of range");
    }
}

/// Intermediate values kept for the backward pass.
pub struct Forward {
    /// Input to each layer (`inputs[0]` is the feature matrix).
    pub inputs: Vec<Array2<f64>>,
    /// Neighbor means of each layer input (meanagg only).
    pub means: Vec<Option<Array2<f64>>>,
    /// Pre-activation of each layer; the last entry holds the logits.
    pub pre: Vec<Array2<f64>>,
    pub probs: Array2<f64>,
}

impl Forward {
    /// Activations fed into the final layer.
    pub fn penultimate(&self) -> &Array2<f64> {
        self.inputs.last().expect("at least one layer")
    }
}

fn neighbor_mean(graph: &Graph, mode: NeighborhoodMode, h: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(h.raw_dim());
    for v in 0..graph.num_nodes() {
        let nbrs = graph.neighbors(v, mode);
        if nbrs.is_empty() {
            continue;
        }
        let mut row = out.row_mut(v);
        for u in nbrs.iter() {
            row += &h.row(u);
        }
        row /= nbrs.len() as f64;
    }
    out
}

/// Transpose of `neighbor_mean`: routes each node's gradient back to its neighbors.
fn neighbor_mean_transpose(graph: &Graph, mode: NeighborhoodMode, g: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(g.raw_dim());
    for v in 0..graph.num_nodes() {
        let nbrs = graph.neighbors(v, mode);
        if nbrs.is_empty() {
            continue;
        }
        let share = g.row(v).to_owned() / nbrs.len() as f64;
        for u in nbrs.iter() {
            let mut row = out.row_mut(u);
            row += &share;
        }
    }
    out
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

pub fn forward(params: &Params, graph: &Graph, features: ArrayView2<f64>) -> Forward {
    let mut inputs = vec![features.to_owned()];
    let mut means = Vec::with_capacity(params.num_layers());
    let mut pre = Vec::with_capacity(params.num_layers());
    for (i, layer) in params.layers.iter().enumerate() {
        let h = inputs.last().unwrap();
        let mut z = h.dot(&layer.w_self);
        let mean = layer.w_nbr.as_ref().map(|w_nbr| {
            let m = neighbor_mean(graph, params.neighborhood, h.view());
            z += &m.dot(w_nbr);
            m
        });
        z += &layer.bias;
        means.push(mean);
        if i + 1 < params.num_layers() {
            inputs.push(z.mapv(|x| x.max(0.0)));
        }
        pre.push(z);
    }
    let probs = softmax_rows(pre.last().unwrap());
    Forward {
        inputs,
        means,
        pre,
        probs,
    }
}

/// Mean cross-entropy over `nodes`.
pub fn cross_entropy(probs: &Array2<f64>, labels: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let total: f64 = nodes.iter().map(|&v| -probs[[v, labels[v]]].ln()).sum();
    total / nodes.len() as f64
}

/// Gradient of `cross_entropy(.., nodes)` with respect to every parameter.
pub fn backward(
    params: &Params,
    graph: &Graph,
    fwd: &Forward,
    labels: &[usize],
    nodes: &[usize],
) -> Params {
    let mut grad = params.zero_like();
    let mut dz = Array2::<f64>::zeros(fwd.probs.raw_dim());
    let scale = 1.0 / nodes.len().max(1) as f64;
    for &v in nodes {
        let mut row = dz.row_mut(v);
        row.assign(&fwd.probs.row(v));
        row[labels[v]] -= 1.0;
        row *= scale;
    }
    for i in (0..params.num_layers()).rev() {
        let layer = &params.layers[i];
        let g = &mut grad.layers[i];
        g.w_self = fwd.inputs[i].t().dot(&dz);
        g.bias = dz.sum_axis(Axis(0));
        let mut dh = dz.dot(&layer.w_self.t());
        if let (Some(w_nbr), Some(mean)) = (&layer.w_nbr, &fwd.means[i]) {
            g.w_nbr = Some(mean.t().dot(&dz));
            let dmean = dz.dot(&w_nbr.t());
            dh += &neighbor_mean_transpose(graph, params.neighborhood, dmean.view());
        }
        if i == 0 {
            break;
        }
        let relu_pre = &fwd.pre[i - 1];
        dh.zip_mut_with(relu_pre, |d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
        dz = dh;
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;

    fn fixture() -> (Graph, Array2<f64>, Vec<usize>) {
        let edges = [(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (7, 8), (8, 9), (9, 4), (2, 7)];
        let g = Graph::from_edges(10, edges.iter().map(|&(a, b)| Edge::new(a, b)).collect(), false)
            .unwrap();
        let x = Array2::from_shape_fn((10, 3), |(i, j)| ((i * 7 + j * 3) % 5) as f64 / 2.0 - 0.8);
        let y = (0..10).map(|i| (i * 3 % 7) % 3).collect();
        (g, x, y)
    }

    fn loss(params: &Params, g: &Graph, x: &Array2<f64>, y: &[usize], nodes: &[usize]) -> f64 {
        cross_entropy(&forward(params, g, x.view()).probs, y, nodes)
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let (g, x, y) = fixture();
        let nodes: Vec<usize> = (0..10).collect();
        for kind in [ModelKind::Mlp, ModelKind::MeanAgg] {
            let params = Params::init(kind, NeighborhoodMode::Out, &[3, 5, 3], 4);
            let fwd = forward(&params, &g, x.view());
            let analytic = backward(&params, &g, &fwd, &y, &nodes).flat();
            let h = 1e-4;
            let mut worst = 0.0f64;
            for i in 0..analytic.len() {
                let mut plus = params.clone();
                *plus.scalar_mut(i) += h;
                let mut minus = params.clone();
                *minus.scalar_mut(i) -= h;
                let numeric = (loss(&plus, &g, &x, &y, &nodes) - loss(&minus, &g, &x, &y, &nodes)) / (2.0 * h);
                let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-8);
                worst = worst.max(rel);
            }
            assert!(worst <= 1e-4, "{kind}: worst relative error {worst}");
        }
    }

    #[test]
    fn edgeless_meanagg_matches_mlp() {
        let g = Graph::edgeless(6);
        let x = Array2::from_shape_fn((6, 4), |(i, j)| (i as f64 - j as f64) / 3.0);
        let mlp = Params::init(ModelKind::Mlp, NeighborhoodMode::Out, &[4, 8, 2], 9);
        let agg = Params::init(ModelKind::MeanAgg, NeighborhoodMode::Out, &[4, 8, 2], 9);
        for (a, b) in mlp.layers.iter().zip(&agg.layers) {
            assert_eq!(a.w_self, b.w_self);
        }
        let pa = forward(&mlp, &g, x.view()).probs;
        let pb = forward(&agg, &g, x.view()).probs;
        assert_eq!(pa, pb);
    }

    #[test]
    fn softmax_rows_are_stochastic() {
        let logits = Array2::from_shape_vec((2, 3), vec![1000.0, 0.0, -1000.0, 1.0, 2.0, 3.0]).unwrap();
        let p = softmax_rows(&logits);
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        assert!(p[[0, 0]] > 0.999);
    }
}
