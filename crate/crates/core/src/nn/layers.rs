//! Message-passing layers with hand-written reverse passes. Graph structure
//! is a constant: only features and parameters carry gradients.

use super::matrix::DenseMatrix;
use super::{Activation, LayerKind, LayerSpec, NnError, Param};
use crate::graph::EpipolarGraph;
use crate::Real;

const LEAKY_SLOPE: f64 = 0.2;

/// Node features plus the neighbor lists messages travel along.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput<T> {
    pub features: DenseMatrix<T>,
    /// `neighbors[i]` holds `(j, w_ij)`: node `i` aggregates from `j`.
    pub neighbors: Vec<Vec<(usize, T)>>,
    /// Rows of `D̃^{-1/2}(A+I)D̃^{-1/2}`, self entry included.
    gcn_rows: Vec<Vec<(usize, T)>>,
}

impl<T: Real> GraphInput<T> {
    pub fn new(features: DenseMatrix<T>, edges: &[(usize, usize, T)]) -> Result<Self, NnError> {
        let n = features.rows();
        let mut neighbors: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        for &(src, dst, w) in edges {
            if src >= n || dst >= n {
                return Err(NnError::Shape(format!("edge {src} -> {dst} out of range for {n} nodes")));
            }
            if src != dst {
                neighbors[src].push((dst, w));
            }
        }
        for l in &mut neighbors {
            l.sort_by_key(|&(j, _)| j);
        }
        let degree: Vec<T> = neighbors
            .iter()
            .map(|l| l.iter().fold(T::one(), |acc, &(_, w)| acc + w))
            .collect();
        let gcn_rows = neighbors
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let mut row: Vec<(usize, T)> = l
                    .iter()
                    .map(|&(j, w)| (j, w / (degree[i] * degree[j]).sqrt()))
                    .collect();
                row.push((i, T::one() / degree[i]));
                row
            })
            .collect();
        Ok(Self {
            features,
            neighbors,
            gcn_rows,
        })
    }

    /// Uses the graph's propagation edges (symmetrized when configured).
    pub fn from_graph(g: &EpipolarGraph) -> Result<Self, NnError> {
        let n = g.node_count();
        let features = DenseMatrix::from_fn(n, 6, |r, c| T::lit(g.node_features[r][c]));
        let edges: Vec<(usize, usize, T)> = g
            .propagation_edges()
            .iter()
            .map(|e| (e.src, e.dst, T::lit(e.weight)))
            .collect();
        Self::new(features, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.features.rows()
    }

    /// Same graph with node `i` moved to position `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, NnError> {
        let n = self.node_count();
        let mut features = DenseMatrix::zeros(n, self.features.cols());
        for i in 0..n {
            features.row_mut(perm[i]).copy_from_slice(self.features.row(i));
        }
        let edges: Vec<(usize, usize, T)> = self
            .neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.iter().map(move |&(j, w)| (perm[i], perm[j], w)))
            .collect();
        Self::new(features, &edges)
    }
}

fn propagate<T: Real>(rows: &[Vec<(usize, T)>], h: &DenseMatrix<T>) -> DenseMatrix<T> {
    let mut out = DenseMatrix::zeros(h.rows(), h.cols());
    for (i, row) in rows.iter().enumerate() {
        for &(j, c) in row {
            let src = h.row(j).to_vec();
            for (o, v) in out.row_mut(i).iter_mut().zip(src) {
                *o += c * v;
            }
        }
    }
    out
}

fn propagate_transpose<T: Real>(rows: &[Vec<(usize, T)>], g: &DenseMatrix<T>) -> DenseMatrix<T> {
    let mut out = DenseMatrix::zeros(g.rows(), g.cols());
    for (i, row) in rows.iter().enumerate() {
        for &(j, c) in row {
            let src = g.row(i).to_vec();
            for (o, v) in out.row_mut(j).iter_mut().zip(src) {
                *o += c * v;
            }
        }
    }
    out
}

impl Activation {
    pub fn apply<T: Real>(&self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
            Activation::None => x,
        }
    }

    /// Derivative given the pre-activation `x` and the output `y`.
    pub fn derivative<T: Real>(&self, x: T, y: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::None => T::one(),
        }
    }
}

fn activate<T: Real>(act: Activation, pre: &DenseMatrix<T>) -> DenseMatrix<T> {
    pre.map(|v| act.apply(v))
}

fn activation_backward<T: Real>(
    act: Activation,
    pre: &DenseMatrix<T>,
    out: &DenseMatrix<T>,
    d_out: &DenseMatrix<T>,
) -> DenseMatrix<T> {
    let mut d = d_out.clone();
    for ((g, &x), &y) in d.as_mut_slice().iter_mut().zip(pre.as_slice()).zip(out.as_slice()) {
        *g *= act.derivative(x, y);
    }
    d
}

fn linear<T: Real>(x: &DenseMatrix<T>, w: &DenseMatrix<T>, b: &DenseMatrix<T>) -> DenseMatrix<T> {
    let mut out = x.matmul(w);
    out.add_row_broadcast(b.as_slice());
    out
}

/// Accumulates weight and bias gradients of `x·w + b`; returns the input gradient.
fn linear_backward<T: Real>(
    x: &DenseMatrix<T>,
    w: &mut Param<T>,
    b: &mut Param<T>,
    d_pre: &DenseMatrix<T>,
) -> DenseMatrix<T> {
    w.grad.add_assign(&x.t_matmul(d_pre));
    for (g, s) in b.grad.as_mut_slice().iter_mut().zip(d_pre.column_sums()) {
        *g += s;
    }
    d_pre.matmul_t(&w.value)
}

#[derive(Debug, Clone)]
pub(crate) enum LayerCache<T> {
    Linear {
        input: DenseMatrix<T>,
        pre: DenseMatrix<T>,
        out: DenseMatrix<T>,
    },
    Gcn {
        propagated: DenseMatrix<T>,
        pre: DenseMatrix<T>,
        out: DenseMatrix<T>,
    },
    Gat {
        input: DenseMatrix<T>,
        projected: DenseMatrix<T>,
        /// Per head, per node: `(j, logit before leaky-relu, α_ij)` over `N(i) ∪ {i}`.
        attention: Vec<Vec<Vec<(usize, T, T)>>>,
        pre: DenseMatrix<T>,
        out: DenseMatrix<T>,
    },
    Gin {
        input: DenseMatrix<T>,
        aggregated: DenseMatrix<T>,
        hidden_pre: DenseMatrix<T>,
        hidden: DenseMatrix<T>,
        pre: DenseMatrix<T>,
        out: DenseMatrix<T>,
    },
}

impl<T> LayerCache<T> {
    pub(crate) fn output(&self) -> &DenseMatrix<T> {
        match self {
            LayerCache::Linear { out, .. }
            | LayerCache::Gcn { out, .. }
            | LayerCache::Gat { out, .. }
            | LayerCache::Gin { out, .. } => out,
        }
    }
}

/// Parameter tensors of one layer: `(name suffix, rows, cols)`.
pub(crate) fn parameter_shapes(spec: &LayerSpec) -> Vec<(&'static str, usize, usize)> {
    let (i, o) = (spec.in_dim, spec.out_dim);
    match spec.kind {
        LayerKind::Linear | LayerKind::Gcn => vec![("weight", i, o), ("bias", 1, o)],
        LayerKind::Gat => {
            let d = o / spec.heads;
            vec![
                ("weight", i, o),
                ("att_self", spec.heads, d),
                ("att_neighbor", spec.heads, d),
                ("bias", 1, o),
            ]
        }
        LayerKind::Gin => vec![
            ("eps", 1, 1),
            ("mlp0.weight", i, o),
            ("mlp0.bias", 1, o),
            ("mlp1.weight", o, o),
            ("mlp1.bias", 1, o),
        ],
    }
}

fn leaky<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x * T::lit(LEAKY_SLOPE)
    }
}

fn leaky_derivative<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        T::lit(LEAKY_SLOPE)
    }
}

pub(crate) fn layer_forward<T: Real>(
    spec: &LayerSpec,
    params: &[Param<T>],
    graph: &GraphInput<T>,
    h: &DenseMatrix<T>,
) -> Result<LayerCache<T>, NnError> {
    if h.cols() != spec.in_dim || h.rows() != graph.node_count() {
        return Err(NnError::Shape(format!(
            "{} layer expects {}x{} input, got {}x{}",
            spec.kind.name(),
            graph.node_count(),
            spec.in_dim,
            h.rows(),
            h.cols()
        )));
    }
    let act = spec.activation;
    Ok(match spec.kind {
        LayerKind::Linear => {
            let pre = linear(h, &params[0].value, &params[1].value);
            LayerCache::Linear {
                input: h.clone(),
                out: activate(act, &pre),
                pre,
            }
        }
        LayerKind::Gcn => {
            let propagated = propagate(&graph.gcn_rows, h);
            let pre = linear(&propagated, &params[0].value, &params[1].value);
            LayerCache::Gcn {
                propagated,
                out: activate(act, &pre),
                pre,
            }
        }
        LayerKind::Gat => {
            let heads = spec.heads;
            let d = spec.out_dim / heads;
            let projected = h.matmul(&params[0].value);
            let (a_self, a_nb) = (&params[1].value, &params[2].value);
            let n = h.rows();
            let mut pre = DenseMatrix::zeros(n, spec.out_dim);
            let mut attention = Vec::with_capacity(heads);
            for head in 0..heads {
                let cols = head * d..(head + 1) * d;
                let score = |a: &DenseMatrix<T>, node: usize| -> T {
                    a.row(head)
                        .iter()
                        .zip(&projected.row(node)[cols.clone()])
                        .fold(T::zero(), |acc, (&x, &y)| acc + x * y)
                };
                let self_scores: Vec<T> = (0..n).map(|i| score(a_self, i)).collect();
                let nb_scores: Vec<T> = (0..n).map(|j| score(a_nb, j)).collect();
                let mut per_node = Vec::with_capacity(n);
                for i in 0..n {
                    let members = graph.neighbors[i].iter().map(|&(j, _)| j).chain(std::iter::once(i));
                    let logits: Vec<(usize, T)> = members.map(|j| (j, self_scores[i] + nb_scores[j])).collect();
                    let max = logits
                        .iter()
                        .map(|&(_, s)| leaky(s))
                        .fold(T::min_value().unwrap(), |a, b| a.max(b));
                    let exps: Vec<T> = logits.iter().map(|&(_, s)| (leaky(s) - max).exp()).collect();
                    let total = exps.iter().fold(T::zero(), |a, &b| a + b);
                    let entries: Vec<(usize, T, T)> = logits
                        .iter()
                        .zip(&exps)
                        .map(|(&(j, s), &e)| (j, s, e / total))
                        .collect();
                    for &(j, _, alpha) in &entries {
                        let src = projected.row(j)[cols.clone()].to_vec();
                        for (o, v) in pre.row_mut(i)[cols.clone()].iter_mut().zip(src) {
                            *o += alpha * v;
                        }
                    }
                    per_node.push(entries);
                }
                attention.push(per_node);
            }
            pre.add_row_broadcast(params[3].value.as_slice());
            LayerCache::Gat {
                input: h.clone(),
                projected,
                attention,
                out: activate(act, &pre),
                pre,
            }
        }
        LayerKind::Gin => {
            let eps = params[0].value[(0, 0)];
            let mut aggregated = h.clone();
            aggregated.scale_mut(T::one() + eps);
            for (i, l) in graph.neighbors.iter().enumerate() {
                for &(j, w) in l {
                    let src = h.row(j).to_vec();
                    for (o, v) in aggregated.row_mut(i).iter_mut().zip(src) {
                        *o += w * v;
                    }
                }
            }
            let hidden_pre = linear(&aggregated, &params[1].value, &params[2].value);
            let hidden = activate(Activation::Relu, &hidden_pre);
            let pre = linear(&hidden, &params[3].value, &params[4].value);
            LayerCache::Gin {
                input: h.clone(),
                aggregated,
                hidden_pre,
                hidden,
                out: activate(act, &pre),
                pre,
            }
        }
    })
}

/// Accumulates parameter gradients and returns the gradient wrt the layer input.
pub(crate) fn layer_backward<T: Real>(
    spec: &LayerSpec,
    params: &mut [Param<T>],
    graph: &GraphInput<T>,
    cache: &LayerCache<T>,
    d_out: &DenseMatrix<T>,
) -> DenseMatrix<T> {
    let act = spec.activation;
    match cache {
        LayerCache::Linear { input, pre, out } => {
            let d_pre = activation_backward(act, pre, out, d_out);
            let (w, b) = params.split_at_mut(1);
            linear_backward(input, &mut w[0], &mut b[0], &d_pre)
        }
        LayerCache::Gcn { propagated, pre, out } => {
            let d_pre = activation_backward(act, pre, out, d_out);
            let (w, b) = params.split_at_mut(1);
            let d_prop = linear_backward(propagated, &mut w[0], &mut b[0], &d_pre);
            propagate_transpose(&graph.gcn_rows, &d_prop)
        }
        LayerCache::Gat {
            input,
            projected,
            attention,
            pre,
            out,
        } => {
            let d_pre = activation_backward(act, pre, out, d_out);
            for (g, s) in params[3].grad.as_mut_slice().iter_mut().zip(d_pre.column_sums()) {
                *g += s;
            }
            let heads = spec.heads;
            let d = spec.out_dim / heads;
            let mut d_proj = DenseMatrix::zeros(projected.rows(), projected.cols());
            for (head, per_node) in attention.iter().enumerate() {
                let cols = head * d..(head + 1) * d;
                let a_self = params[1].value.row(head).to_vec();
                let a_nb = params[2].value.row(head).to_vec();
                let mut g_self = vec![T::zero(); d];
                let mut g_nb = vec![T::zero(); d];
                for (i, entries) in per_node.iter().enumerate() {
                    let g_i = d_pre.row(i)[cols.clone()].to_vec();
                    let d_alpha: Vec<T> = entries
                        .iter()
                        .map(|&(j, _, _)| {
                            g_i.iter()
                                .zip(&projected.row(j)[cols.clone()])
                                .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
                        })
                        .collect();
                    let mean = entries
                        .iter()
                        .zip(&d_alpha)
                        .fold(T::zero(), |acc, (&(_, _, a), &da)| acc + a * da);
                    for (&(j, s, alpha), &da) in entries.iter().zip(&d_alpha) {
                        for (o, &g) in d_proj.row_mut(j)[cols.clone()].iter_mut().zip(&g_i) {
                            *o += alpha * g;
                        }
                        let d_logit = alpha * (da - mean) * leaky_derivative(s);
                        let zi = projected.row(i)[cols.clone()].to_vec();
                        let zj = projected.row(j)[cols.clone()].to_vec();
                        for k in 0..d {
                            g_self[k] += d_logit * zi[k];
                            g_nb[k] += d_logit * zj[k];
                        }
                        for (o, &a) in d_proj.row_mut(i)[cols.clone()].iter_mut().zip(&a_self) {
                            *o += d_logit * a;
                        }
                        for (o, &a) in d_proj.row_mut(j)[cols.clone()].iter_mut().zip(&a_nb) {
                            *o += d_logit * a;
                        }
                    }
                }
                for (o, g) in params[1].grad.row_mut(head).iter_mut().zip(g_self) {
                    *o += g;
                }
                for (o, g) in params[2].grad.row_mut(head).iter_mut().zip(g_nb) {
                    *o += g;
                }
            }
            params[0].grad.add_assign(&input.t_matmul(&d_proj));
            d_proj.matmul_t(&params[0].value)
        }
        LayerCache::Gin {
            input,
            aggregated,
            hidden_pre,
            hidden,
            pre,
            out,
        } => {
            let d_pre = activation_backward(act, pre, out, d_out);
            let (head, tail) = params.split_at_mut(3);
            let (w1, b1) = tail.split_at_mut(1);
            let d_hidden = linear_backward(hidden, &mut w1[0], &mut b1[0], &d_pre);
            let d_hidden_pre = activation_backward(Activation::Relu, hidden_pre, hidden, &d_hidden);
            let (eps, mlp0) = head.split_at_mut(1);
            let (w0, b0) = mlp0.split_at_mut(1);
            let d_agg = linear_backward(aggregated, &mut w0[0], &mut b0[0], &d_hidden_pre);
            let eps_value = eps[0].value[(0, 0)];
            eps[0].grad[(0, 0)] += d_agg
                .as_slice()
                .iter()
                .zip(input.as_slice())
                .fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            let mut d_in = d_agg.clone();
            d_in.scale_mut(T::one() + eps_value);
            for (i, l) in graph.neighbors.iter().enumerate() {
                for &(j, w) in l {
                    let src = d_agg.row(i).to_vec();
                    for (o, v) in d_in.row_mut(j).iter_mut().zip(src) {
                        *o += w * v;
                    }
                }
            }
            d_in
        }
    }
}
