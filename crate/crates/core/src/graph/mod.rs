//! Correspondence graphs: normalized match pairs as nodes, spatial
//! neighborhoods as edges, pruned by Sampson distance against an initial
//! essential matrix.

mod format;

pub use format::{export_graph, import_graph, parse_graph, write_graph};

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::epipolar::{E0Params, EpipolarError, MIN_PAIRS};
use crate::geom::{sampson_distance, EssentialMatrix, NormalizedPoint};
use crate::synth::{CorrespondenceSet, PairId};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{needed} correspondences needed, got {got}")]
    InsufficientCorrespondences { needed: usize, got: usize },
    #[error("no correspondence survived the Sampson filter (tau = {tau})")]
    EmptyGraph { tau: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Epipolar(#[from] EpipolarError),
    #[error("unsupported graph format version {0:?}")]
    Version(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid graph: {0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, PartialOrd, Ord)]
pub enum EdgeVariant {
    /// `i → j` for the k nearest `j`, weight 1.
    #[default]
    Hard,
    /// Hard support with Gaussian distance weights.
    Soft,
    /// Every pair closer than a fixed radius, weight 1.
    Radius,
    /// Hard edges kept only when reciprocated.
    Mutual,
}

impl EdgeVariant {
    pub const ALL: [EdgeVariant; 4] = [EdgeVariant::Hard, EdgeVariant::Soft, EdgeVariant::Radius, EdgeVariant::Mutual];

    pub fn name(&self) -> &'static str {
        match self {
            EdgeVariant::Hard => "hard",
            EdgeVariant::Soft => "soft",
            EdgeVariant::Radius => "radius",
            EdgeVariant::Mutual => "mutual",
        }
    }
}

impl fmt::Display for EdgeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EdgeVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EdgeVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown edge variant {s:?} (expected hard, soft, radius or mutual)"))
    }
}

/// Which image's normalized coordinates define spatial neighborhoods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum NeighborSource {
    #[default]
    First,
    Second,
}

impl NeighborSource {
    pub fn name(&self) -> &'static str {
        match self {
            NeighborSource::First => "first",
            NeighborSource::Second => "second",
        }
    }
}

impl FromStr for NeighborSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "first" => Ok(NeighborSource::First),
            "second" => Ok(NeighborSource::Second),
            _ => Err(format!("unknown neighbor source {s:?} (expected first or second)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

/// Result of a neighborhood search.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeSet {
    /// Sorted by `(src, dst)`.
    pub edges: Vec<Edge>,
    /// Neighbor count actually used.
    pub k: usize,
    /// Requested `k` exceeded `N − 1`.
    pub k_clamped: bool,
    pub radius: Option<f64>,
    /// Gaussian bandwidth of the soft variant.
    pub bandwidth: Option<f64>,
}

impl EdgeSet {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.src, e.dst)).collect()
    }
}

fn squared_distance(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a - b).norm_squared()
}

/// Indices of the `k` nearest neighbors of each point, closest first. Equal
/// distances order by index.
fn knn_lists(coords: &[Vector3<f64>], k: usize) -> Vec<Vec<(f64, usize)>> {
    let n = coords.len();
    (0..n)
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (squared_distance(&coords[i], &coords[j]), j))
                .collect();
            let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < cand.len() {
                cand.select_nth_unstable_by(k, by_key);
                cand.truncate(k);
            }
            cand.sort_unstable_by(by_key);
            cand
        })
        .collect()
}

/// Median distance to the `k`-th nearest neighbor, used when no radius is given.
pub fn default_radius(coords: &[Vector3<f64>], k: usize) -> f64 {
    if coords.len() < 2 || k == 0 {
        return 0.0;
    }
    let k = k.min(coords.len() - 1);
    let mut kth: Vec<f64> = knn_lists(coords, k)
        .iter()
        .map(|l| l[k - 1].0.sqrt())
        .collect();
    kth.sort_unstable_by(f64::total_cmp);
    let m = kth.len();
    if m % 2 == 1 {
        kth[m / 2]
    } else {
        0.5 * (kth[m / 2 - 1] + kth[m / 2])
    }
}

/// Directed neighborhood edges over `coords`. `radius` only applies to the
/// radius variant; `None` selects [`default_radius`].
pub fn build_edges(
    coords: &[Vector3<f64>],
    variant: EdgeVariant,
    k: usize,
    radius: Option<f64>,
) -> Result<EdgeSet, GraphError> {
    if k == 0 && variant != EdgeVariant::Radius {
        return Err(GraphError::InvalidParameter("k must be at least 1".into()));
    }
    if let Some(r) = radius {
        if !(r > 0.0) {
            return Err(GraphError::InvalidParameter(format!("radius {r} must be positive")));
        }
    }
    let n = coords.len();
    if n < 2 {
        return Ok(EdgeSet {
            k: 0,
            k_clamped: k > 0 && n > 0 && k > n.saturating_sub(1),
            ..EdgeSet::default()
        });
    }
    let k_eff = k.min(n - 1);
    let k_clamped = k_eff < k;
    let mut set = EdgeSet {
        k: k_eff,
        k_clamped,
        ..EdgeSet::default()
    };

    match variant {
        EdgeVariant::Radius => {
            let r = match radius {
                Some(r) => r,
                None => default_radius(coords, k_eff.max(1)),
            };
            set.radius = Some(r);
            for i in 0..n {
                for j in 0..n {
                    if i != j && squared_distance(&coords[i], &coords[j]).sqrt() < r {
                        set.edges.push(Edge { src: i, dst: j, weight: 1.0 });
                    }
                }
            }
        }
        EdgeVariant::Hard | EdgeVariant::Soft | EdgeVariant::Mutual => {
            let lists = knn_lists(coords, k_eff);
            let bandwidth = if variant == EdgeVariant::Soft {
                let mean_kth = lists.iter().map(|l| l[k_eff - 1].0.sqrt()).sum::<f64>() / n as f64;
                set.bandwidth = Some(mean_kth);
                Some(mean_kth)
            } else {
                None
            };
            let mut member = vec![Vec::new(); n];
            if variant == EdgeVariant::Mutual {
                for (i, l) in lists.iter().enumerate() {
                    member[i] = l.iter().map(|&(_, j)| j).collect::<Vec<_>>();
                    member[i].sort_unstable();
                }
            }
            for (i, l) in lists.iter().enumerate() {
                for &(d2, j) in l {
                    if variant == EdgeVariant::Mutual && member[j].binary_search(&i).is_err() {
                        continue;
                    }
                    let weight = match bandwidth {
                        Some(s) if s > 0.0 => (-d2 / (2.0 * s * s)).exp().max(f64::MIN_POSITIVE),
                        _ => 1.0,
                    };
                    set.edges.push(Edge { src: i, dst: j, weight });
                }
            }
        }
    }
    set.edges.sort_by(|a, b| (a.src, a.dst).cmp(&(b.src, b.dst)));
    Ok(set)
}

/// Adds the reverse of every edge that lacks one; sorted by `(src, dst)`.
pub fn symmetrize(edges: &[Edge]) -> Vec<Edge> {
    let mut out: Vec<Edge> = edges.to_vec();
    let mut present: Vec<(usize, usize)> = edges.iter().map(|e| (e.src, e.dst)).collect();
    present.sort_unstable();
    for e in edges {
        if present.binary_search(&(e.dst, e.src)).is_err() {
            out.push(Edge {
                src: e.dst,
                dst: e.src,
                weight: e.weight,
            });
        }
    }
    out.sort_by(|a, b| (a.src, a.dst).cmp(&(b.src, b.dst)));
    out.dedup_by(|a, b| a.src == b.src && a.dst == b.dst);
    out
}

/// Indices whose Sampson distance to `e0` is below `tau`, in input order.
/// A degenerate denominator counts as an infinite distance. `tau = +∞`
/// disables the filter.
pub fn sampson_filter(
    pairs: &[(NormalizedPoint<f64>, NormalizedPoint<f64>)],
    e0: &EssentialMatrix<f64>,
    tau: f64,
) -> Result<Vec<usize>, GraphError> {
    if !(tau > 0.0) {
        return Err(GraphError::InvalidParameter(format!("tau {tau} must be positive")));
    }
    let kept: Vec<usize> = if tau == f64::INFINITY {
        (0..pairs.len()).collect()
    } else {
        pairs
            .iter()
            .enumerate()
            .filter(|(_, (a, b))| matches!(sampson_distance(a, b, e0), Ok(d) if d < tau))
            .map(|(i, _)| i)
            .collect()
    };
    if kept.is_empty() {
        return Err(GraphError::EmptyGraph { tau });
    }
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphConfig {
    pub k: usize,
    pub tau: f64,
    pub variant: EdgeVariant,
    pub radius: Option<f64>,
    /// Propagate over both edge directions.
    pub symmetrize: bool,
    pub source: NeighborSource,
    pub e0: E0Params,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            k: 6,
            tau: 1e-4,
            variant: EdgeVariant::Hard,
            radius: None,
            symmetrize: true,
            source: NeighborSource::First,
            e0: E0Params::default(),
        }
    }
}

/// How a graph was built.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphMetadata {
    pub pair_id: PairId,
    pub k: usize,
    pub k_effective: usize,
    pub k_clamped: bool,
    pub tau: f64,
    pub variant: EdgeVariant,
    pub radius: Option<f64>,
    pub bandwidth: Option<f64>,
    pub symmetrize: bool,
    pub source: NeighborSource,
    /// Correspondence count before filtering.
    pub source_count: usize,
    /// Edge count of the unfiltered neighborhood graph.
    pub initial_edge_count: usize,
    pub e0: Option<Matrix3<f64>>,
}

/// Node features are the stacked homogeneous normalized points
/// `(x₁, y₁, 1, x₂, y₂, 1)`. Duplicate correspondences stay distinct nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EpipolarGraph {
    pub node_features: Vec<[f64; 6]>,
    /// Directed, without self-loops, sorted by `(src, dst)`.
    pub edges: Vec<Edge>,
    /// Original correspondence index of each node.
    pub kept_indices: Vec<usize>,
    pub metadata: GraphMetadata,
}

impl EpipolarGraph {
    pub fn node_count(&self) -> usize {
        self.node_features.len()
    }

    /// Edges used for message passing, symmetrized when the metadata says so.
    pub fn propagation_edges(&self) -> Vec<Edge> {
        if self.metadata.symmetrize {
            symmetrize(&self.edges)
        } else {
            self.edges.clone()
        }
    }

    pub fn out_degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e.src == node).count()
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        let n = self.node_count();
        if self.kept_indices.len() != n {
            return Err(GraphError::Validation(format!(
                "{} kept indices for {n} nodes",
                self.kept_indices.len()
            )));
        }
        if n > self.metadata.source_count {
            return Err(GraphError::Validation(format!(
                "{n} nodes exceed the {} source correspondences",
                self.metadata.source_count
            )));
        }
        for f in &self.node_features {
            if f[2] != 1.0 || f[5] != 1.0 || f.iter().any(|v| !v.is_finite()) {
                return Err(GraphError::Validation("node features must be finite homogeneous points".into()));
            }
        }
        for e in &self.edges {
            if e.src >= n || e.dst >= n {
                return Err(GraphError::Validation(format!(
                    "edge {} -> {} out of range for {n} nodes",
                    e.src, e.dst
                )));
            }
            if e.src == e.dst {
                return Err(GraphError::Validation(format!("self-loop on node {}", e.src)));
            }
            if !(e.weight > 0.0 && e.weight.is_finite()) {
                return Err(GraphError::Validation(format!(
                    "edge {} -> {} has weight {}",
                    e.src, e.dst, e.weight
                )));
            }
        }
        Ok(())
    }
}

fn neighbor_coords(
    pairs: &[(NormalizedPoint<f64>, NormalizedPoint<f64>)],
    source: NeighborSource,
) -> Vec<Vector3<f64>> {
    pairs
        .iter()
        .map(|(a, b)| match source {
            NeighborSource::First => *a.vector(),
            NeighborSource::Second => *b.vector(),
        })
        .collect()
}

/// Full construction: neighborhood graph on every match, initial essential
/// estimate, Sampson pruning, and edges rebuilt on the survivors.
pub fn build_graph(corr: &CorrespondenceSet, config: &GraphConfig) -> Result<EpipolarGraph, GraphError> {
    if corr.len() < MIN_PAIRS {
        return Err(GraphError::InsufficientCorrespondences {
            needed: MIN_PAIRS,
            got: corr.len(),
        });
    }
    let pairs = corr.normalized_pairs();
    let initial = build_edges(&neighbor_coords(&pairs, config.source), config.variant, config.k, config.radius)?;
    let e0 = corr.estimate_e0(&config.e0)?;
    build_graph_with_e0(corr, &e0, config, initial.len())
}

/// Construction against a given essential matrix, skipping the estimate.
pub fn build_graph_with_e0(
    corr: &CorrespondenceSet,
    e0: &EssentialMatrix<f64>,
    config: &GraphConfig,
    initial_edge_count: usize,
) -> Result<EpipolarGraph, GraphError> {
    let pairs = corr.normalized_pairs();
    let kept = sampson_filter(&pairs, e0, config.tau)?;
    let survivors: Vec<_> = kept.iter().map(|&i| pairs[i]).collect();
    let edges = build_edges(&neighbor_coords(&survivors, config.source), config.variant, config.k, config.radius)?;
    let node_features = survivors
        .iter()
        .map(|(a, b)| {
            let (a, b) = (a.vector(), b.vector());
            [a.x, a.y, a.z, b.x, b.y, b.z]
        })
        .collect();
    Ok(EpipolarGraph {
        node_features,
        edges: edges.edges,
        kept_indices: kept,
        metadata: GraphMetadata {
            pair_id: corr.pair_id.clone(),
            k: config.k,
            k_effective: edges.k,
            k_clamped: edges.k_clamped,
            tau: config.tau,
            variant: config.variant,
            radius: edges.radius,
            bandwidth: edges.bandwidth,
            symmetrize: config.symmetrize,
            source: config.source,
            source_count: corr.len(),
            initial_edge_count,
            e0: Some(e0.0),
        },
    })
}
