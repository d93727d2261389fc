//! Experiment driver: configuration, dataset I/O and the `epigraph` subcommands.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use epigraph::epipolar::recover_pose;
use epigraph::eval::{run_report, write_frames_csv, write_pairs_csv, write_summary, write_table, EvalOptions, EvalReport, PairResult};
use epigraph::geom::relative_pose;
use epigraph::graph::{build_edges, build_graph, symmetrize, EdgeVariant, EpipolarGraph, NeighborSource};
use epigraph::loss::{term_with_grad, GroundTruth, Term};
use epigraph::nn::{
    check_gradients, load_checkpoint, pool, Checkpoint, DenseMatrix, FEATURE_DIM, GradCheckOptions, GradCheckReport, GraphInput, Model, ModelConfig,
    NnError, Objective, Prediction, PredictionGrad, PRESETS,
};
use epigraph::synth::{
    generate_dataset, load_correspondences, load_trajectory, save_correspondences, save_trajectory, CorrespondenceSet,
    SynthError, Trajectory,
};
use epigraph::train::{evaluate, substream_seed, train, write_report, GraphCache, Substream, TrainError, TrainOutcome};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use config::{Baseline, ExperimentConfig, OUTPUT_ENV};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Failure(String),
    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    /// Process exit status: 1 tolerance failure, 2 usage or config, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failure(_) => 1,
            CliError::Config(_) | CliError::Run(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Io { path, source } => CliError::Io {
                path,
                message: source.to_string(),
            },
            other => CliError::Run(other.to_string()),
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::Io { path, source } => CliError::Io {
                path,
                message: source.to_string(),
            },
            other => CliError::Run(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Nn(e) => e.into(),
            TrainError::Config(m) => CliError::Config(m),
            other => CliError::Run(other.to_string()),
        }
    }
}

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn spacing_dir(spacing: f64) -> String {
    format!("s{spacing}")
}

/// Correspondence sets for the given spacings, from the generator or from files.
pub fn load_pairs(config: &ExperimentConfig, spacings: &[f64]) -> Result<Vec<CorrespondenceSet>, CliError> {
    let mut out = Vec::new();
    if config.dataset.source == "synthetic" {
        for &s in spacings {
            out.extend(generate_dataset(&config.dataset_spec(s)?)?.pairs);
        }
        return Ok(out);
    }
    let steps = spacings.iter().map(|&s| config.step(s)).collect::<Result<Vec<_>, _>>()?;
    let trajectory = match &config.dataset.trajectory {
        Some(p) => Some(load_trajectory(p, config.dataset.frame_rate)?),
        None => None,
    };
    let expected = config.intrinsics();
    let size = (config.dataset.image_width, config.dataset.image_height);
    for path in dataset_files(config)? {
        let mut set = load_correspondences(&path)?;
        let k = &set.intrinsics;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
        if !(close(k.fx, expected.fx) && close(k.fy, expected.fy) && close(k.cx, expected.cx) && close(k.cy, expected.cy))
            || set.image_size != size
        {
            return Err(CliError::Config(format!(
                "{}: intrinsics {:?} / image {:?} do not match the configured {:?} / {:?}",
                path.display(),
                set.intrinsics,
                set.image_size,
                expected,
                size
            )));
        }
        let id = &set.pair_id;
        if id.second <= id.first || !steps.contains(&(id.second - id.first)) {
            continue;
        }
        if set.gt_relative.is_none() {
            if let Some(t) = &trajectory {
                if id.second >= t.len() {
                    return Err(CliError::Config(format!(
                        "{}: frame {} beyond the {}-frame trajectory",
                        path.display(),
                        id.second,
                        t.len()
                    )));
                }
                set.gt_relative = Some(relative_pose(&t.poses[id.first], &t.poses[id.second]));
            }
        }
        out.push(set);
    }
    out.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    Ok(out)
}

/// Expands the correspondence globs; every pattern must match at least one file.
pub fn dataset_files(config: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    if let Some(t) = &config.dataset.trajectory {
        if !Path::new(t).is_file() {
            return Err(CliError::io(Path::new(t), "trajectory file not found"));
        }
    }
    for pattern in &config.dataset.correspondences {
        let paths = glob::glob(pattern).map_err(|e| CliError::Config(format!("pattern {pattern:?}: {e}")))?;
        let mut matched: Vec<PathBuf> = paths
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::io(e.path(), e.error()))?;
        if matched.is_empty() {
            return Err(CliError::io(Path::new(pattern), "no correspondence file matches"));
        }
        matched.sort();
        files.extend(matched);
    }
    files.dedup();
    Ok(files)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSpacing {
    pub spacing: f64,
    pub step: usize,
    pub manifest: PathBuf,
    pub pairs: usize,
}

/// Writes the trajectory and, per spacing, one correspondence file per pair
/// plus a manifest of pair ids.
pub fn cmd_generate(config: &ExperimentConfig) -> Result<Vec<GeneratedSpacing>, CliError> {
    config.validate()?;
    if config.dataset.source != "synthetic" {
        return Err(CliError::Config("generate needs dataset.source = \"synthetic\"".into()));
    }
    let base = config.output_root().join("data").join(&config.dataset.sequence);
    // Generate everything first so a sampling error leaves no partial output.
    let datasets = config
        .dataset
        .spacings
        .iter()
        .map(|&s| Ok((s, generate_dataset(&config.dataset_spec(s)?)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    fs::create_dir_all(&base).map_err(|e| CliError::io(&base, e))?;
    let mut out = Vec::new();
    for (i, (spacing, ds)) in datasets.iter().enumerate() {
        if i == 0 {
            save_trajectory(&ds.trajectory, base.join("trajectory.txt"))?;
        }
        let dir = base.join(spacing_dir(*spacing));
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let mut manifest = format!(
            "# sequence {} spacing {} step {} frames {}\n",
            config.dataset.sequence,
            spacing,
            ds.step,
            ds.trajectory.len()
        );
        for set in &ds.pairs {
            save_correspondences(set, dir.join(format!("{}.corr", set.pair_id)))?;
            let _ = writeln!(manifest, "{}", set.pair_id);
        }
        let manifest_path = dir.join("manifest.txt");
        write_file(&manifest_path, &manifest)?;
        out.push(GeneratedSpacing {
            spacing: *spacing,
            step: ds.step,
            manifest: manifest_path,
            pairs: ds.pairs.len(),
        });
    }
    Ok(out)
}

pub fn train_dir(config: &ExperimentConfig) -> PathBuf {
    config.output_root().join("train")
}

pub fn default_checkpoint(config: &ExperimentConfig) -> PathBuf {
    train_dir(config).join("best.ckpt")
}

/// Trains on every pair of the configured spacings; writes the effective
/// config, the per-epoch report and the best checkpoint.
pub fn cmd_train(config: &ExperimentConfig) -> Result<TrainOutcome, CliError> {
    config.validate()?;
    let train_config = config.train_config()?;
    let pairs = load_pairs(config, &config.dataset.spacings)?;
    let dir = train_dir(config);
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    write_file(&dir.join("config.toml"), &config.to_toml())?;
    let ckpt = default_checkpoint(config);
    let outcome = train(&train_config, &pairs, Some(&ckpt))?;
    write_file(&dir.join("report.csv"), &write_report(&outcome.report))?;
    Ok(outcome)
}

fn load_model_checkpoint(config: &ExperimentConfig, path: &Path) -> Result<Checkpoint<f64>, CliError> {
    let ckpt: Checkpoint<f64> = load_checkpoint(path)?;
    let expected: ModelConfig = config.model_config()?;
    if ckpt.config != expected {
        return Err(CliError::Config(format!(
            "{}: checkpoint model {:?} does not match the configured model {:?}",
            path.display(),
            ckpt.config.preset.as_deref().unwrap_or("custom stack"),
            expected.preset.as_deref().unwrap_or("custom stack"),
        )));
    }
    Ok(ckpt)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EvalRequest {
    /// Model checkpoint; `None` uses the train command's output.
    pub checkpoint: Option<PathBuf>,
    /// Evaluate only the classical baseline.
    pub baseline_only: bool,
}

fn baseline_results(pairs: &[CorrespondenceSet]) -> Result<Vec<PairResult>, CliError> {
    pairs
        .iter()
        .map(|set| {
            let gt = set
                .gt_relative
                .ok_or_else(|| CliError::Run(format!("{}: no ground-truth pose", set.pair_id)))?;
            let pred = recover_pose(&set.normalized_pairs()).map_err(|e| CliError::Run(format!("{}: {e}", set.pair_id)))?;
            Ok(PairResult {
                pair_id: set.pair_id.clone(),
                pred,
                gt,
            })
        })
        .collect()
}

/// Per spacing and estimator: pairs.csv, frames.csv, summary.json and the two
/// chained trajectories; table.csv collects every summary.
pub fn cmd_eval(config: &ExperimentConfig, request: &EvalRequest) -> Result<Vec<EvalReport>, CliError> {
    config.validate()?;
    let baseline = config.baseline()?;
    if request.baseline_only && baseline == Baseline::None {
        return Err(CliError::Config("baseline-only evaluation needs eval.baseline = \"eightpoint\"".into()));
    }
    let model = if request.baseline_only {
        None
    } else {
        let path = request.checkpoint.clone().unwrap_or_else(|| default_checkpoint(config));
        Some(load_model_checkpoint(config, &path)?)
    };
    let graph = config.graph_config()?;
    let loss = config.loss_config()?;
    let options = EvalOptions {
        align: config.eval.align,
    };
    let root = config.output_root().join("eval");
    let mut reports = Vec::new();
    for &spacing in &config.eval.spacings {
        let step = config.step(spacing)?;
        let pairs = load_pairs(config, &[spacing])?;
        let sequence = format!("{}_{}", config.dataset.sequence, spacing_dir(spacing));
        let mut estimators = Vec::new();
        if let Some(ckpt) = &model {
            let results = evaluate(ckpt, &pairs, &graph, &loss)?
                .into_iter()
                .map(|e| PairResult {
                    pair_id: e.pair_id,
                    pred: e.pred,
                    gt: e.gt,
                })
                .collect::<Vec<_>>();
            estimators.push(("model", results));
        }
        if baseline == Baseline::EightPoint {
            estimators.push(("eightpoint", baseline_results(&pairs)?));
        }
        for (name, results) in estimators {
            let report = run_report(&sequence, name, &results, step, &options).map_err(run_err)?;
            let dir = root.join(spacing_dir(spacing)).join(name);
            write_file(&dir.join("pairs.csv"), &write_pairs_csv(&report))?;
            write_file(&dir.join("frames.csv"), &write_frames_csv(&report))?;
            write_file(&dir.join("summary.json"), &write_summary(&report))?;
            let rate = config.dataset.frame_rate / step as f64;
            for (file, poses) in [
                ("trajectory_pred.txt", &report.predicted_trajectory),
                ("trajectory_gt.txt", &report.gt_trajectory),
            ] {
                let path = dir.join(file);
                let traj = Trajectory::new(poses.clone(), rate)?;
                save_trajectory(&traj, &path)?;
            }
            reports.push(report);
        }
    }
    write_file(&root.join("table.csv"), &write_table(&reports))?;
    Ok(reports)
}

/// Rows `pair_id,node,values…` of the chosen layer's node embeddings, followed
/// per pair by the pooled descriptor in a row whose node column is `pooled`.
pub fn cmd_export_embeddings(config: &ExperimentConfig, checkpoint: Option<&Path>, layer: usize) -> Result<PathBuf, CliError> {
    config.validate()?;
    let path = checkpoint.map_or_else(|| default_checkpoint(config), Path::to_path_buf);
    let model: Model<f64> = load_model_checkpoint(config, &path)?.into_model()?;
    let depth = model.config.layers.len();
    if layer > depth {
        return Err(CliError::Config(format!(
            "layer {layer} out of range: the model has layers 0..={depth}"
        )));
    }
    let dim = if layer == 0 {
        FEATURE_DIM
    } else {
        model.config.layers[layer - 1].out_dim
    };
    let mut out = String::from("pair_id,node");
    for c in 0..dim {
        let _ = write!(out, ",e{c}");
    }
    out.push('\n');
    let mut cache = GraphCache::new(config.graph_config()?);
    for set in load_pairs(config, &config.dataset.spacings)? {
        let input = cache.get(&set).map_err(|m| CliError::Run(format!("{}: {m}", set.pair_id)))?;
        let h = model.embeddings(input)?.swap_remove(layer);
        for r in 0..h.rows() {
            let _ = write!(out, "{},{r}", set.pair_id);
            for v in h.row(r) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        let _ = write!(out, "{},pooled", set.pair_id);
        for v in pool(&h, model.config.pooling)? {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    let file = config.output_root().join("embeddings").join(format!("layer{layer}.csv"));
    write_file(&file, &out)?;
    Ok(file)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradCheckRequest {
    /// Presets to check; `None` checks all of them.
    pub presets: Option<Vec<String>>,
    /// Restrict to these parameter tensors.
    pub tensors: Option<Vec<String>>,
    /// Perturb the analytic gradient of this tensor.
    pub corrupt: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckOutcome {
    pub reports: Vec<(String, GradCheckReport)>,
    pub path: PathBuf,
}

impl GradCheckOutcome {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|(_, r)| r.passed())
    }
}

/// Twelve random normalized matches joined by the configured neighborhood
/// edges, with the ground truth of the first synthetic pair.
pub fn gradcheck_graph(config: &ExperimentConfig) -> Result<(GraphInput<f64>, GroundTruth<f64>), CliError> {
    let graph = config.graph_config()?;
    let seed = substream_seed(config.seed, Substream::Dataset);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = DenseMatrix::from_fn(12, FEATURE_DIM, |_, c| {
        if c == 2 || c == 5 {
            1.0
        } else {
            rng.random_range(-0.5..0.5)
        }
    });
    let offset = if graph.source == NeighborSource::First { 0 } else { 3 };
    let coords: Vec<Vector3<f64>> = (0..12)
        .map(|r| Vector3::new(features[(r, offset)], features[(r, offset + 1)], 1.0))
        .collect();
    let mut edges = build_edges(&coords, graph.variant, graph.k, graph.radius).map_err(run_err)?.edges;
    if graph.symmetrize {
        edges = symmetrize(&edges);
    }
    let edges: Vec<(usize, usize, f64)> = edges.iter().map(|e| (e.src, e.dst, e.weight)).collect();
    let input = GraphInput::new(features, &edges)?;
    let mut spec = config.dataset_spec(config.dataset.spacings[0])?;
    spec.n_frames = spec.n_frames.max(config.step(config.dataset.spacings[0])? + 1);
    let pose = generate_dataset(&spec)?.pairs[0]
        .gt_relative
        .expect("synthetic pairs carry ground truth");
    let gt = GroundTruth::new(pose).map_err(run_err)?;
    Ok((input, gt))
}

/// Every preset against every loss term. Per preset and objective the CSV has
/// a `*` row with the relative error of the whole gradient, which decides
/// pass or fail, followed by per-tensor rows. A breach is a
/// [`CliError::Failure`] after the report is written.
pub fn cmd_gradcheck(config: &ExperimentConfig, request: &GradCheckRequest) -> Result<GradCheckOutcome, CliError> {
    config.validate()?;
    let presets = request
        .presets
        .clone()
        .unwrap_or_else(|| PRESETS.iter().map(|s| s.to_string()).collect());
    let loss = config.loss_config()?;
    let (input, gt) = gradcheck_graph(config)?;
    let options = GradCheckOptions {
        tensors: request.tensors.clone(),
        corrupt: request.corrupt.clone(),
        ..GradCheckOptions::default()
    };
    let closures: Vec<(Term, Box<dyn Fn(&Prediction<f64>) -> (f64, PredictionGrad<f64>)>)> = Term::ALL
        .iter()
        .map(|&term| {
            let (gt, loss) = (gt, loss);
            let f: Box<dyn Fn(&Prediction<f64>) -> (f64, PredictionGrad<f64>)> =
                Box::new(move |p| term_with_grad(term, p, &gt, &loss));
            (term, f)
        })
        .collect();
    let objectives: Vec<Objective<'_, f64>> = closures.iter().map(|(t, f)| (t.name(), f.as_ref() as _)).collect();
    let init_seed = substream_seed(config.seed, Substream::Init);
    let mut reports = Vec::new();
    for name in &presets {
        let model_config = ModelConfig::preset(name, config.model.width).map_err(|e| CliError::Config(e.to_string()))?;
        let model = Model::new(model_config, init_seed)?;
        for r in check_gradients(&model, &input, &objectives, &options)? {
            reports.push((name.clone(), r));
        }
    }
    let mut out = String::from("preset,objective,tensor,elements,analytic_norm,numeric_norm,relative_error,status\n");
    for (preset, r) in &reports {
        let status = if r.passed() { "ok" } else { "FAIL" };
        let total = |f: fn(&epigraph::nn::TensorCheck) -> f64| r.tensors.iter().map(|t| f(t).powi(2)).sum::<f64>().sqrt();
        let _ = writeln!(
            out,
            "{preset},{},*,{},{:e},{:e},{:e},{status}",
            r.objective,
            r.tensors.iter().map(|t| t.elements).sum::<usize>(),
            total(|t| t.analytic_norm),
            total(|t| t.numeric_norm),
            r.relative_error()
        );
        for t in &r.tensors {
            let _ = writeln!(
                out,
                "{preset},{},{},{},{:e},{:e},{:e},tensor",
                r.objective, t.name, t.elements, t.analytic_norm, t.numeric_norm, t.relative_error
            );
        }
    }
    let path = config.output_root().join("gradcheck").join("report.csv");
    write_file(&path, &out)?;
    let outcome = GradCheckOutcome { reports, path };
    if !outcome.passed() {
        let failed = outcome
            .reports
            .iter()
            .filter(|(_, r)| !r.passed())
            .map(|(p, r)| format!("{p}/{} ({:e})", r.objective, r.relative_error()))
            .collect::<Vec<_>>();
        return Err(CliError::Failure(format!(
            "gradient check failed for {} objective(s): {}",
            failed.len(),
            failed.join(", ")
        )));
    }
    Ok(outcome)
}

/// Structural statistics of one variant over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantRow {
    pub variant: EdgeVariant,
    pub graphs: usize,
    pub mean_nodes: f64,
    pub mean_edges: f64,
    pub min_weight: f64,
    pub max_weight: f64,
    pub structural_violations: Vec<String>,
    pub best_val_total: Option<f64>,
    pub report: EvalReport,
}

/// Violations of the per-variant invariants of `g`, given the hard-variant
/// graph `hard` of the same pair.
pub fn structural_violations(g: &EpipolarGraph, hard: &EpipolarGraph) -> Vec<String> {
    let id = &g.metadata.pair_id;
    let mut out = Vec::new();
    if g.kept_indices != hard.kept_indices {
        out.push(format!("{id}: node set differs from the hard graph"));
        return out;
    }
    match g.metadata.variant {
        EdgeVariant::Mutual => {
            for e in &g.edges {
                if !hard.edges.iter().any(|h| (h.src, h.dst) == (e.src, e.dst)) {
                    out.push(format!("{id}: mutual edge {}→{} missing from the hard graph", e.src, e.dst));
                }
            }
        }
        EdgeVariant::Radius => {
            let r = g.metadata.radius.unwrap_or(f64::NAN);
            let offset = if g.metadata.source == epigraph::graph::NeighborSource::First { 0 } else { 3 };
            for e in &g.edges {
                let (a, b) = (&g.node_features[e.src], &g.node_features[e.dst]);
                let d = (0..3).map(|c| (a[offset + c] - b[offset + c]).powi(2)).sum::<f64>().sqrt();
                if !(d <= r * (1.0 + 1e-12)) {
                    out.push(format!("{id}: radius edge {}→{} has length {d} > {r}", e.src, e.dst));
                }
            }
        }
        EdgeVariant::Soft => {
            for e in &g.edges {
                if !(e.weight > 0.0 && e.weight <= 1.0) {
                    out.push(format!("{id}: soft edge {}→{} weight {} outside (0, 1]", e.src, e.dst, e.weight));
                }
            }
        }
        EdgeVariant::Hard => {}
    }
    out
}

/// Builds, trains and evaluates every edge variant on the same pairs and
/// seed; writes `bench/knn.csv`. Structural violations are a failure after the
/// table is written.
pub fn cmd_bench_knn(config: &ExperimentConfig) -> Result<Vec<VariantRow>, CliError> {
    config.validate()?;
    let pairs = load_pairs(config, &config.dataset.spacings)?;
    let step = config.step(config.dataset.spacings[0])?;
    let base_graph = config.graph_config()?;
    let hard_config = epigraph::graph::GraphConfig {
        variant: EdgeVariant::Hard,
        ..base_graph.clone()
    };
    let hard: Vec<Option<EpipolarGraph>> = pairs.iter().map(|p| build_graph(p, &hard_config).ok()).collect();
    let mut rows = Vec::new();
    for variant in EdgeVariant::ALL {
        let mut train_config = config.train_config()?;
        train_config.graph.variant = variant;
        let mut violations = Vec::new();
        let (mut graphs, mut nodes, mut edges) = (0usize, 0usize, 0usize);
        let (mut wmin, mut wmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for (p, h) in pairs.iter().zip(&hard) {
            let Ok(g) = build_graph(p, &train_config.graph) else { continue };
            graphs += 1;
            nodes += g.node_count();
            edges += g.edges.len();
            for e in &g.edges {
                wmin = wmin.min(e.weight);
                wmax = wmax.max(e.weight);
            }
            match h {
                Some(h) => violations.extend(structural_violations(&g, h)),
                None => violations.push(format!("{}: hard graph failed to build", p.pair_id)),
            }
        }
        let outcome = train(&train_config, &pairs, None)?;
        let val: Vec<CorrespondenceSet> = pairs
            .iter()
            .filter(|p| outcome.report.val_pairs.contains(&p.pair_id))
            .cloned()
            .collect();
        let results = evaluate(&outcome.best, &val, &train_config.graph, &train_config.loss)?
            .into_iter()
            .map(|e| PairResult {
                pair_id: e.pair_id,
                pred: e.pred,
                gt: e.gt,
            })
            .collect::<Vec<_>>();
        let report = run_report(&config.dataset.sequence, variant.name(), &results, step, &EvalOptions::default())
            .map_err(run_err)?;
        let n = graphs.max(1) as f64;
        rows.push(VariantRow {
            variant,
            graphs,
            mean_nodes: nodes as f64 / n,
            mean_edges: edges as f64 / n,
            min_weight: if graphs > 0 { wmin } else { f64::NAN },
            max_weight: if graphs > 0 { wmax } else { f64::NAN },
            structural_violations: violations,
            best_val_total: outcome.report.best_val_total,
            report,
        });
    }
    let path = config.output_root().join("bench").join("knn.csv");
    write_file(&path, &write_bench_table(&rows))?;
    let violations: Vec<&String> = rows.iter().flat_map(|r| &r.structural_violations).collect();
    if !violations.is_empty() {
        return Err(CliError::Failure(format!(
            "{} structural violation(s), first: {}",
            violations.len(),
            violations[0]
        )));
    }
    Ok(rows)
}

pub fn write_bench_table(rows: &[VariantRow]) -> String {
    let mut out = String::from(
        "variant,graphs,mean_nodes,mean_edges,min_weight,max_weight,structural_ok,best_val_total,dre_deg,dte_deg,ate_m,ape_m,ape_r_deg\n",
    );
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in rows {
        let s = &r.report.summary;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.variant,
            r.graphs,
            r.mean_nodes,
            r.mean_edges,
            r.min_weight,
            r.max_weight,
            r.structural_violations.is_empty(),
            cell(r.best_val_total),
            cell(s.dre_mean_deg),
            cell(s.dte_mean_deg),
            cell(s.ate_m),
            cell(s.ape_mean_m),
            cell(s.ape_r_mean_deg),
        );
    }
    out
}
