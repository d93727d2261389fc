//! Dense message-passing network regressing a relative pose from an
//! epipolar graph, with exact reverse-mode gradients and Adam.

mod checkpoint;
mod gradcheck;
mod layers;
mod matrix;

pub use checkpoint::{load_checkpoint, parse_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use gradcheck::{check_gradients, GradCheckOptions, GradCheckReport, Objective, TensorCheck};
pub use layers::GraphInput;
pub use matrix::DenseMatrix;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geom::Quaternion;
use crate::Real;
use layers::{layer_backward, layer_forward, parameter_shapes, LayerCache};

/// Width of a node feature: two stacked homogeneous points.
pub const FEATURE_DIM: usize = 6;

pub const DEFAULT_WIDTH: usize = 64;
pub const DEFAULT_HEADS: usize = 4;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("backward called without a cached forward pass")]
    NoForwardPass,
    #[error("{0} head output has zero norm")]
    DegenerateOutput(&'static str),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("unsupported checkpoint version {0:?}")]
    Version(String),
    #[error("checkpoint does not match its config: {0}")]
    Schema(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Gcn,
    Gat,
    Gin,
    /// Node-wise affine map.
    Linear,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Gcn => "gcn",
            LayerKind::Gat => "gat",
            LayerKind::Gin => "gin",
            LayerKind::Linear => "linear",
        }
    }
}

impl FromStr for LayerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(LayerKind::Gcn),
            "gat" => Ok(LayerKind::Gat),
            "gin" => Ok(LayerKind::Gin),
            "linear" | "mlp" => Ok(LayerKind::Linear),
            _ => Err(format!("unknown layer kind {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    None,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::None => "none",
        }
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "none" => Ok(Activation::None),
            _ => Err(format!("unknown activation {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    /// Attention heads; 1 for every kind but GAT.
    pub heads: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(kind: LayerKind, in_dim: usize, out_dim: usize) -> Self {
        Self {
            kind,
            in_dim,
            out_dim,
            heads: if kind == LayerKind::Gat { DEFAULT_HEADS } else { 1 },
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.in_dim == 0 || self.out_dim == 0 || self.heads == 0 {
            return Err(NnError::InvalidConfig(format!("{self:?}: dimensions must be at least 1")));
        }
        if self.kind == LayerKind::Gat && self.out_dim % self.heads != 0 {
            return Err(NnError::InvalidConfig(format!(
                "GAT output {} not divisible by {} heads",
                self.out_dim, self.heads
            )));
        }
        if self.kind != LayerKind::Gat && self.heads != 1 {
            return Err(NnError::InvalidConfig(format!("{} layer with {} heads", self.kind.name(), self.heads)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Pooling {
    #[default]
    Mean,
    Sum,
}

impl Pooling {
    pub fn name(&self) -> &'static str {
        match self {
            Pooling::Mean => "mean",
            Pooling::Sum => "sum",
        }
    }
}

impl FromStr for Pooling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Pooling::Mean),
            "sum" => Ok(Pooling::Sum),
            _ => Err(format!("unknown pooling {s:?}")),
        }
    }
}

/// Named architectures.
pub const PRESETS: [&str; 3] = ["GAT+2GCN", "3GCN+GAT", "GIN_SumPool"];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    pub preset: Option<String>,
    pub layers: Vec<LayerSpec>,
    pub pooling: Pooling,
    /// Hidden width of the pose heads.
    pub width: usize,
}

impl ModelConfig {
    pub fn preset(name: &str, width: usize) -> Result<Self, NnError> {
        use LayerKind::*;
        let (kinds, pooling): (&[LayerKind], Pooling) = match name {
            "GAT+2GCN" => (&[Gcn, Gcn, Gat], Pooling::Mean),
            "3GCN+GAT" => (&[Gcn, Gcn, Gcn, Gat], Pooling::Mean),
            "GIN_SumPool" => (&[Gin, Gin, Gin], Pooling::Sum),
            _ => {
                return Err(NnError::InvalidConfig(format!(
                    "unknown preset {name:?} (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        };
        let mut config = Self::stack(kinds, width, pooling)?;
        config.preset = Some(name.to_string());
        Ok(config)
    }

    /// Layers of the given kinds, each `width` wide, relu between them.
    pub fn stack(kinds: &[LayerKind], width: usize, pooling: Pooling) -> Result<Self, NnError> {
        let layers = kinds
            .iter()
            .enumerate()
            .map(|(i, &k)| LayerSpec::new(k, if i == 0 { FEATURE_DIM } else { width }, width))
            .collect();
        let config = Self {
            preset: None,
            layers,
            pooling,
            width,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.width == 0 {
            return Err(NnError::InvalidConfig("width must be at least 1".into()));
        }
        let mut dim = FEATURE_DIM;
        for (i, l) in self.layers.iter().enumerate() {
            l.validate()?;
            if l.in_dim != dim {
                return Err(NnError::InvalidConfig(format!(
                    "layer {i} expects input width {}, previous output is {dim}",
                    l.in_dim
                )));
            }
            dim = l.out_dim;
        }
        Ok(())
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers.last().map_or(FEATURE_DIM, |l| l.out_dim)
    }

    /// Parameter names and shapes in storage order.
    pub fn parameter_layout(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            for (suffix, r, c) in parameter_shapes(l) {
                out.push((format!("layers.{i}.{}.{suffix}", l.kind.name()), r, c));
            }
        }
        let (e, w) = (self.embedding_dim(), self.width);
        out.push(("trunk.weight".into(), e, w));
        out.push(("trunk.bias".into(), 1, w));
        for head in ["translation", "rotation"] {
            out.push((format!("{head}.0.weight"), w, w));
            out.push((format!("{head}.0.bias"), 1, w));
            out.push((format!("{head}.1.weight"), w, 4));
            out.push((format!("{head}.1.bias"), 1, 4));
        }
        out
    }
}

/// A trainable tensor with its gradient and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: DenseMatrix<T>,
    pub grad: DenseMatrix<T>,
    pub m: DenseMatrix<T>,
    pub v: DenseMatrix<T>,
}

impl<T: Real> Param<T> {
    pub fn new(name: impl Into<String>, value: DenseMatrix<T>) -> Self {
        let (r, c) = value.shape();
        Self {
            name: name.into(),
            value,
            grad: DenseMatrix::zeros(r, c),
            m: DenseMatrix::zeros(r, c),
            v: DenseMatrix::zeros(r, c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelParams<T> {
    pub tensors: Vec<Param<T>>,
    /// Adam steps taken.
    pub step: u64,
}

impl<T: Real> ModelParams<T> {
    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.tensors.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.tensors.iter_mut().find(|p| p.name == name)
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.tensors {
            p.grad.fill(T::zero());
        }
    }

    pub fn scale_grad(&mut self, s: T) {
        for p in &mut self.tensors {
            p.grad.scale_mut(s);
        }
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|p| p.value.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam update from the accumulated gradients.
pub fn adam_step<T: Real>(params: &mut ModelParams<T>, cfg: &AdamConfig) {
    params.step += 1;
    let t = params.step as i32;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let correction1 = T::one() - T::lit(cfg.beta1.powi(t));
    let correction2 = T::one() - T::lit(cfg.beta2.powi(t));
    let (lr, eps) = (T::lit(cfg.lr), T::lit(cfg.eps));
    for p in &mut params.tensors {
        let n = p.value.len();
        let (value, grad) = (p.value.as_mut_slice(), p.grad.as_slice());
        let (m, v) = (p.m.as_mut_slice(), p.v.as_mut_slice());
        for k in 0..n {
            let g = grad[k];
            m[k] = b1 * m[k] + (T::one() - b1) * g;
            v[k] = b2 * v[k] + (T::one() - b2) * g * g;
            let m_hat = m[k] / correction1;
            let v_hat = v[k] / correction2;
            value[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Network output: unit quaternion, unit translation direction and a
/// nonnegative translation magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction<T> {
    pub q: Quaternion<T>,
    pub t_dir: Vector3<T>,
    pub t_raw: T,
}

impl<T: Real> Prediction<T> {
    /// Full translation `t_raw · t_dir`.
    pub fn translation(&self) -> Vector3<T> {
        self.t_dir * self.t_raw
    }
}

/// Loss gradient with respect to the prediction fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionGrad<T> {
    pub q: [T; 4],
    pub t_dir: Vector3<T>,
    pub t_raw: T,
}

impl<T: Real> PredictionGrad<T> {
    pub fn zero() -> Self {
        Self {
            q: [T::zero(); 4],
            t_dir: Vector3::zeros(),
            t_raw: T::zero(),
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            q: self.q.map(|v| v * s),
            t_dir: self.t_dir * s,
            t_raw: self.t_raw * s,
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        Self {
            q: [self.q[0] + o.q[0], self.q[1] + o.q[1], self.q[2] + o.q[2], self.q[3] + o.q[3]],
            t_dir: self.t_dir + o.t_dir,
            t_raw: self.t_raw + o.t_raw,
        }
    }
}

pub fn pool<T: Real>(h: &DenseMatrix<T>, mode: Pooling) -> Result<Vec<T>, NnError> {
    if h.rows() == 0 {
        return Err(NnError::EmptyGraph);
    }
    let mut z = h.column_sums();
    if mode == Pooling::Mean {
        let n = T::from_usize(h.rows()).expect("row count representable");
        z.iter_mut().for_each(|v| *v /= n);
    }
    Ok(z)
}

fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (T::one() + (-x.abs()).exp()).ln()
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Gradient through `u = v / ‖v‖`.
fn normalize_backward<T: Real>(u: &[T], norm: T, du: &[T]) -> Vec<T> {
    let dot = u.iter().zip(du).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
    u.iter().zip(du).map(|(&a, &g)| (g - a * dot) / norm).collect()
}

fn row<T: Real>(v: &[T]) -> DenseMatrix<T> {
    DenseMatrix::from_vec(1, v.len(), v.to_vec()).expect("row shape")
}

#[derive(Debug, Clone)]
struct DenseCache<T> {
    input: DenseMatrix<T>,
    pre: DenseMatrix<T>,
    out: DenseMatrix<T>,
}

/// Everything the reverse pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    graph: GraphInput<T>,
    layers: Vec<LayerCache<T>>,
    trunk: DenseCache<T>,
    translation: [DenseCache<T>; 2],
    rotation: [DenseCache<T>; 2],
    q_raw_norm: T,
    t_vec_norm: T,
    prediction: Prediction<T>,
}

impl<T: Real> ForwardCache<T> {
    pub fn prediction(&self) -> &Prediction<T> {
        &self.prediction
    }
}

pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ModelParams<T>,
    ranges: Vec<Range<usize>>,
    head_start: usize,
    cache: Option<ForwardCache<T>>,
}

impl<T: Real> Clone for Model<T> {
    fn clone(&self) -> Self {
        Self {
            config: self.config.clone(),
            params: self.params.clone(),
            ranges: self.ranges.clone(),
            head_start: self.head_start,
            cache: None,
        }
    }
}

impl<T: Real> fmt::Debug for Model<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("config", &self.config)
            .field("parameters", &self.params.count())
            .field("step", &self.params.step)
            .finish()
    }
}

fn layer_ranges(config: &ModelConfig) -> (Vec<Range<usize>>, usize) {
    let mut start = 0;
    let ranges = config
        .layers
        .iter()
        .map(|l| {
            let n = parameter_shapes(l).len();
            let r = start..start + n;
            start += n;
            r
        })
        .collect();
    (ranges, start)
}

impl<T: Real> Model<T> {
    /// Uniform `±sqrt(6/(fan_in + fan_out))` weights, zero biases, `ε = 0`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = config
            .parameter_layout()
            .into_iter()
            .map(|(name, r, c)| {
                let value = if name.ends_with("bias") || name.ends_with("eps") {
                    DenseMatrix::zeros(r, c)
                } else {
                    let (fan_in, fan_out) = if name.contains(".att_") { (2 * c, 1) } else { (r, c) };
                    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    DenseMatrix::from_fn(r, c, |_, _| T::lit(rng.random_range(-a..a)))
                };
                Param::new(name, value)
            })
            .collect();
        Self::from_params(
            config,
            ModelParams {
                tensors,
                step: 0,
            },
        )
    }

    /// Wraps existing parameters, checking names and shapes against the config.
    pub fn from_params(config: ModelConfig, params: ModelParams<T>) -> Result<Self, NnError> {
        config.validate()?;
        let layout = config.parameter_layout();
        if layout.len() != params.tensors.len() {
            return Err(NnError::Schema(format!(
                "config needs {} tensors, found {}",
                layout.len(),
                params.tensors.len()
            )));
        }
        for ((name, r, c), p) in layout.iter().zip(&params.tensors) {
            let shapes_ok = p.value.shape() == (*r, *c)
                && p.grad.shape() == (*r, *c)
                && p.m.shape() == (*r, *c)
                && p.v.shape() == (*r, *c);
            if &p.name != name || !shapes_ok {
                return Err(NnError::Schema(format!(
                    "expected {name} {r}x{c}, found {} {}x{}",
                    p.name,
                    p.value.rows(),
                    p.value.cols()
                )));
            }
        }
        let (ranges, head_start) = layer_ranges(&config);
        Ok(Self {
            config,
            params,
            ranges,
            head_start,
            cache: None,
        })
    }

    fn head(&self, k: usize) -> &Param<T> {
        &self.params.tensors[self.head_start + k]
    }

    fn dense(&self, x: &DenseMatrix<T>, k: usize, act: Activation) -> DenseCache<T> {
        let mut pre = x.matmul(&self.head(k).value);
        pre.add_row_broadcast(self.head(k + 1).value.as_slice());
        DenseCache {
            input: x.clone(),
            out: pre.map(|v| act.apply(v)),
            pre,
        }
    }

    /// Node embeddings after every layer; index 0 is the input features.
    pub fn embeddings(&self, graph: &GraphInput<T>) -> Result<Vec<DenseMatrix<T>>, NnError> {
        let mut out = vec![graph.features.clone()];
        for (spec, range) in self.config.layers.iter().zip(&self.ranges) {
            let h = out.last().expect("nonempty");
            let cache = layer_forward(spec, &self.params.tensors[range.clone()], graph, h)?;
            out.push(cache.output().clone());
        }
        Ok(out)
    }

    pub fn forward(&self, graph: &GraphInput<T>) -> Result<ForwardCache<T>, NnError> {
        if graph.node_count() == 0 {
            return Err(NnError::EmptyGraph);
        }
        if graph.features.cols() != FEATURE_DIM {
            return Err(NnError::Shape(format!(
                "node features have {} columns, expected {FEATURE_DIM}",
                graph.features.cols()
            )));
        }
        let mut layers = Vec::with_capacity(self.config.layers.len());
        for (spec, range) in self.config.layers.iter().zip(&self.ranges) {
            let h = layers.last().map_or(&graph.features, |c: &LayerCache<T>| c.output());
            let cache = layer_forward(spec, &self.params.tensors[range.clone()], graph, h)?;
            layers.push(cache);
        }
        let h = layers.last().map_or(&graph.features, |c| c.output());
        let z = row(&pool(h, self.config.pooling)?);
        let trunk = self.dense(&z, 0, Activation::Relu);
        let t0 = self.dense(&trunk.out, 2, Activation::Relu);
        let t1 = self.dense(&t0.out, 4, Activation::None);
        let r0 = self.dense(&trunk.out, 6, Activation::Relu);
        let r1 = self.dense(&r0.out, 8, Activation::None);

        let to = t1.out.as_slice();
        let v = Vector3::new(to[0], to[1], to[2]);
        let t_vec_norm = v.norm();
        if t_vec_norm <= T::lit(f64::MIN_POSITIVE) {
            return Err(NnError::DegenerateOutput("translation"));
        }
        let qo = r1.out.as_slice();
        let q_raw = Quaternion::new(qo[0], qo[1], qo[2], qo[3]);
        let q_raw_norm = q_raw.norm();
        if q_raw_norm <= T::lit(f64::MIN_POSITIVE) {
            return Err(NnError::DegenerateOutput("rotation"));
        }
        let prediction = Prediction {
            q: q_raw.scale(T::one() / q_raw_norm),
            t_dir: v / t_vec_norm,
            t_raw: softplus(to[3]),
        };
        Ok(ForwardCache {
            graph: graph.clone(),
            layers,
            trunk,
            translation: [t0, t1],
            rotation: [r0, r1],
            q_raw_norm,
            t_vec_norm,
            prediction,
        })
    }

    /// Runs forward and keeps the cache for [`Model::backward`].
    pub fn forward_cached(&mut self, graph: &GraphInput<T>) -> Result<Prediction<T>, NnError> {
        let cache = self.forward(graph)?;
        let p = cache.prediction;
        self.cache = Some(cache);
        Ok(p)
    }

    /// Consumes the cached forward pass; a second call without a new forward fails.
    pub fn backward(&mut self, grad: &PredictionGrad<T>) -> Result<(), NnError> {
        let cache = self.cache.take().ok_or(NnError::NoForwardPass)?;
        self.backward_from(&cache, grad);
        Ok(())
    }

    fn dense_backward(&mut self, c: &DenseCache<T>, k: usize, act: Activation, d_out: &DenseMatrix<T>) -> DenseMatrix<T> {
        let mut d_pre = d_out.clone();
        for ((g, &x), &y) in d_pre.as_mut_slice().iter_mut().zip(c.pre.as_slice()).zip(c.out.as_slice()) {
            *g *= act.derivative(x, y);
        }
        let base = self.head_start + k;
        self.params.tensors[base].grad.add_assign(&c.input.t_matmul(&d_pre));
        for (g, s) in self.params.tensors[base + 1]
            .grad
            .as_mut_slice()
            .iter_mut()
            .zip(d_pre.column_sums())
        {
            *g += s;
        }
        d_pre.matmul_t(&self.params.tensors[base].value)
    }

    /// Accumulates parameter gradients for the given upstream gradient.
    pub fn backward_from(&mut self, cache: &ForwardCache<T>, grad: &PredictionGrad<T>) {
        let p = &cache.prediction;
        let dv = normalize_backward(p.t_dir.as_slice(), cache.t_vec_norm, grad.t_dir.as_slice());
        let t_logit = cache.translation[1].pre.as_slice()[3];
        let d_t1 = row(&[dv[0], dv[1], dv[2], grad.t_raw * sigmoid(t_logit)]);
        let dq = normalize_backward(&p.q.to_array(), cache.q_raw_norm, &grad.q);
        let d_r1 = row(&dq);

        let d_t0 = self.dense_backward(&cache.translation[1], 4, Activation::None, &d_t1);
        let mut d_trunk = self.dense_backward(&cache.translation[0], 2, Activation::Relu, &d_t0);
        let d_r0 = self.dense_backward(&cache.rotation[1], 8, Activation::None, &d_r1);
        d_trunk.add_assign(&self.dense_backward(&cache.rotation[0], 6, Activation::Relu, &d_r0));
        let dz = self.dense_backward(&cache.trunk, 0, Activation::Relu, &d_trunk);

        let n = cache.graph.node_count();
        let scale = match self.config.pooling {
            Pooling::Mean => T::one() / T::from_usize(n).expect("node count representable"),
            Pooling::Sum => T::one(),
        };
        let mut d_h = DenseMatrix::from_fn(n, dz.cols(), |_, c| dz.as_slice()[c] * scale);
        for (i, layer_cache) in cache.layers.iter().enumerate().rev() {
            let spec = self.config.layers[i];
            let range = self.ranges[i].clone();
            d_h = layer_backward(&spec, &mut self.params.tensors[range], &cache.graph, layer_cache, &d_h);
        }
    }

    pub fn zero_grad(&mut self) {
        self.params.zero_grad();
    }
}
