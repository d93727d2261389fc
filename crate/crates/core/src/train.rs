//! Mini-batch training with a held-out validation split and checkpointing at
//! the best validation loss.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geom::Pose;
use crate::graph::{build_graph, GraphConfig};
use crate::loss::{total_loss_with_grad, GroundTruth, LossBreakdown, LossConfig, LossError};
use crate::nn::{adam_step, save_checkpoint, AdamConfig, Checkpoint, GraphInput, Model, ModelConfig, NnError, Prediction};
use crate::synth::{CorrespondenceSet, PairId};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("need at least 2 pairs to split, got {0}")]
    TooFewPairs(usize),
    #[error("epoch {epoch}: all {skipped} training graphs failed to build")]
    Dataset { epoch: usize, skipped: usize },
    #[error("{pair_id}: {message}")]
    Sample { pair_id: PairId, message: String },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Named random substreams derived from the top-level seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Substream {
    Dataset = 1,
    Init = 2,
    Split = 3,
    Shuffle = 4,
}

pub fn substream_seed(seed: u64, stream: Substream) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x5eed_0000 + stream as u64);
    rng.random()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Training share of the dataset.
    pub split: f64,
    pub seed: u64,
    pub loss: LossConfig,
    pub model: ModelConfig,
    pub graph: GraphConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            lr: 1e-4,
            epochs: 12,
            split: 0.8,
            seed: 0,
            loss: LossConfig::default(),
            model: ModelConfig::preset("3GCN+GAT", crate::nn::DEFAULT_WIDTH).expect("built-in preset"),
            graph: GraphConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(TrainError::Config(format!("split {} outside (0, 1)", self.split)));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Config(format!("learning rate {}", self.lr)));
        }
        self.loss.weights.validate()?;
        self.model.validate()?;
        Ok(())
    }
}

/// Deterministic shuffled split into sorted, disjoint, exhaustive index sets.
/// Both sides are nonempty.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), TrainError> {
    if n < 2 {
        return Err(TrainError::TooFewPairs(n));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(TrainError::Config(format!("split {fraction} outside (0, 1)")));
    }
    let n_train = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (mut train, mut val) = (order[..n_train].to_vec(), order[n_train..].to_vec());
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

pub fn split_dataset<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>), TrainError> {
    let (a, b) = split_indices(items.len(), fraction, seed)?;
    let pick = |idx: Vec<usize>| idx.into_iter().map(|i| items[i].clone()).collect();
    Ok((pick(a), pick(b)))
}

/// Built graphs keyed by pair id; cleared whenever the graph config changes.
#[derive(Debug, Clone)]
pub struct GraphCache {
    config: GraphConfig,
    entries: HashMap<PairId, Result<GraphInput<f64>, String>>,
}

impl GraphCache {
    pub fn new(config: GraphConfig) -> Self {
        Self {
            config,
            entries: HashMap::new(),
        }
    }

    pub fn config(&self) -> &GraphConfig {
        &self.config
    }

    pub fn set_config(&mut self, config: GraphConfig) {
        if config != self.config {
            self.entries.clear();
            self.config = config;
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&mut self, corr: &CorrespondenceSet) -> Result<&GraphInput<f64>, String> {
        let config = &self.config;
        self.entries
            .entry(corr.pair_id.clone())
            .or_insert_with(|| {
                let g = build_graph(corr, config).map_err(|e| e.to_string())?;
                GraphInput::from_graph(&g).map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(Clone::clone)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossMean {
    pub mean: LossBreakdown<f64>,
    pub processed: usize,
    pub skipped: usize,
}

#[derive(Default)]
struct Accumulator {
    sum: LossBreakdown<f64>,
    processed: usize,
    skipped: usize,
}

impl Accumulator {
    fn add(&mut self, b: &LossBreakdown<f64>) {
        let s = &mut self.sum;
        s.quat += b.quat;
        s.t_dir += b.t_dir;
        s.t_scale += b.t_scale;
        s.frob += b.frob;
        s.svd += b.svd;
        s.yaw += b.yaw;
        s.total += b.total;
        s.degenerate_translation |= b.degenerate_translation;
        self.processed += 1;
    }

    fn finish(self) -> LossMean {
        let n = self.processed.max(1) as f64;
        let s = self.sum;
        LossMean {
            mean: LossBreakdown {
                quat: s.quat / n,
                t_dir: s.t_dir / n,
                t_scale: s.t_scale / n,
                frob: s.frob / n,
                svd: s.svd / n,
                yaw: s.yaw / n,
                total: s.total / n,
                degenerate_translation: s.degenerate_translation,
            },
            processed: self.processed,
            skipped: self.skipped,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Running mean over the epoch's training steps.
    pub train: LossMean,
    pub val: LossMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch with the minimal validation total; `None` if no validation graph built.
    pub best_epoch: Option<usize>,
    pub best_val_total: Option<f64>,
    pub checkpoint: Option<PathBuf>,
    pub train_pairs: Vec<PairId>,
    pub val_pairs: Vec<PairId>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub final_model: Model<f64>,
    /// Parameters at the best validation epoch, or the final ones without validation.
    pub best: Checkpoint<f64>,
}

fn ground_truth(corr: &CorrespondenceSet) -> Result<GroundTruth<f64>, String> {
    let pose = corr.gt_relative.ok_or("no ground-truth pose")?;
    GroundTruth::new(pose).map_err(|e| e.to_string())
}

fn checkpoint_metadata(config: &TrainConfig, epoch: usize, val_total: Option<f64>) -> BTreeMap<String, String> {
    let w = &config.loss.weights;
    let g = &config.graph;
    [
        ("epoch", epoch.to_string()),
        ("val_total", val_total.map_or("none".into(), |v| v.to_string())),
        ("seed", config.seed.to_string()),
        ("lr", config.lr.to_string()),
        ("batch_size", config.batch_size.to_string()),
        ("loss.pose", w.pose.to_string()),
        ("loss.frob", w.frob.to_string()),
        ("loss.svd", w.svd.to_string()),
        ("loss.yaw", w.yaw.to_string()),
        ("loss.quat_norm", config.loss.quat_norm.to_string()),
        ("loss.normalized_essential", config.loss.normalized_essential.to_string()),
        ("graph.k", g.k.to_string()),
        ("graph.tau", g.tau.to_string()),
        ("graph.variant", g.variant.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn mean_loss(model: &Model<f64>, cache: &mut GraphCache, data: &[CorrespondenceSet], idx: &[usize], loss: &LossConfig) -> LossMean {
    let mut acc = Accumulator::default();
    for &i in idx {
        let mut step = || -> Result<LossBreakdown<f64>, String> {
            let gt = ground_truth(&data[i])?;
            let graph = cache.get(&data[i])?;
            let fwd = model.forward(graph).map_err(|e| e.to_string())?;
            let (b, _) = total_loss_with_grad(fwd.prediction(), &gt, loss).map_err(|e| e.to_string())?;
            Ok(b)
        };
        match step() {
            Ok(b) => acc.add(&b),
            Err(_) => acc.skipped += 1,
        }
    }
    acc.finish()
}

/// Trains from scratch, writing the best checkpoint to `checkpoint_path` at
/// every new validation minimum.
pub fn train(
    config: &TrainConfig,
    data: &[CorrespondenceSet],
    checkpoint_path: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let (train_idx, val_idx) = split_indices(data.len(), config.split, substream_seed(config.seed, Substream::Split))?;
    let mut model = Model::new(config.model.clone(), substream_seed(config.seed, Substream::Init))?;
    let mut shuffle = ChaCha8Rng::seed_from_u64(substream_seed(config.seed, Substream::Shuffle));
    let mut cache = GraphCache::new(config.graph.clone());
    let adam = AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    };

    let mut epochs = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Checkpoint<f64>)> = None;
    for epoch in 1..=config.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut shuffle);
        let mut acc = Accumulator::default();
        for batch in order.chunks(config.batch_size) {
            model.zero_grad();
            let mut used = 0usize;
            for &i in batch {
                let corr = &data[i];
                let step = |model: &mut Model<f64>, cache: &mut GraphCache| -> Result<LossBreakdown<f64>, String> {
                    let gt = ground_truth(corr)?;
                    let graph = cache.get(corr)?;
                    let fwd = model.forward(graph).map_err(|e| e.to_string())?;
                    let (b, g) = total_loss_with_grad(fwd.prediction(), &gt, &config.loss).map_err(|e| e.to_string())?;
                    model.backward_from(&fwd, &g);
                    Ok(b)
                };
                match step(&mut model, &mut cache) {
                    Ok(b) => {
                        acc.add(&b);
                        used += 1;
                    }
                    Err(_) => acc.skipped += 1,
                }
            }
            if used > 0 {
                model.params.scale_grad(1.0 / used as f64);
                adam_step(&mut model.params, &adam);
            }
        }
        let train_mean = acc.finish();
        if train_mean.processed == 0 {
            return Err(TrainError::Dataset {
                epoch,
                skipped: train_mean.skipped,
            });
        }
        let val = mean_loss(&model, &mut cache, data, &val_idx, &config.loss);
        if val.processed > 0 && best.as_ref().is_none_or(|b| val.mean.total < b.1) {
            let ckpt = Checkpoint::from_model(&model, checkpoint_metadata(config, epoch, Some(val.mean.total)));
            if let Some(path) = checkpoint_path {
                save_checkpoint(&ckpt, path)?;
            }
            best = Some((epoch, val.mean.total, ckpt));
        }
        epochs.push(EpochRecord {
            epoch,
            train: train_mean,
            val,
        });
    }

    let (best_epoch, best_val_total, best) = match best {
        Some((e, v, c)) => (Some(e), Some(v), c),
        None => {
            let ckpt = Checkpoint::from_model(&model, checkpoint_metadata(config, config.epochs, None));
            if let Some(path) = checkpoint_path {
                save_checkpoint(&ckpt, path)?;
            }
            (None, None, ckpt)
        }
    };
    let ids = |idx: &[usize]| idx.iter().map(|&i| data[i].pair_id.clone()).collect();
    Ok(TrainOutcome {
        report: TrainReport {
            epochs,
            best_epoch,
            best_val_total,
            checkpoint: checkpoint_path.map(Path::to_path_buf),
            train_pairs: ids(&train_idx),
            val_pairs: ids(&val_idx),
        },
        final_model: model,
        best,
    })
}

fn breakdown_fields(out: &mut String, b: &LossBreakdown<f64>) {
    for v in [b.quat, b.t_dir, b.t_scale, b.frob, b.svd, b.yaw, b.total] {
        let _ = write!(out, ",{v:e}");
    }
}

/// Per-epoch CSV followed by `# key value` summary lines.
pub fn write_report(report: &TrainReport) -> String {
    let mut out = String::new();
    let names = ["quat", "t_dir", "t_scale", "frob", "svd", "yaw", "total"];
    out.push_str("epoch,train_processed,train_skipped");
    for n in names {
        let _ = write!(out, ",train_{n}");
    }
    out.push_str(",val_processed,val_skipped");
    for n in names {
        let _ = write!(out, ",val_{n}");
    }
    out.push('\n');
    for e in &report.epochs {
        let _ = write!(out, "{},{},{}", e.epoch, e.train.processed, e.train.skipped);
        breakdown_fields(&mut out, &e.train.mean);
        let _ = write!(out, ",{},{}", e.val.processed, e.val.skipped);
        breakdown_fields(&mut out, &e.val.mean);
        out.push('\n');
    }
    let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
    let _ = writeln!(out, "# best_epoch {}", opt(report.best_epoch.map(|e| e.to_string())));
    let _ = writeln!(out, "# best_val_total {}", opt(report.best_val_total.map(|v| format!("{v:e}"))));
    let _ = writeln!(out, "# train_pairs {}", report.train_pairs.len());
    let _ = writeln!(out, "# val_pairs {}", report.val_pairs.len());
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub pair_id: PairId,
    pub prediction: Prediction<f64>,
    pub pred: Pose<f64>,
    pub gt: Pose<f64>,
    pub loss: LossBreakdown<f64>,
}

pub fn predict_pose(p: &Prediction<f64>) -> Pose<f64> {
    Pose {
        rotation: p.q,
        translation: p.translation(),
    }
}

/// Forward-only pass over `pairs`; any pair that fails to build is an error.
pub fn evaluate_model(
    model: &Model<f64>,
    pairs: &[CorrespondenceSet],
    graph: &GraphConfig,
    loss: &LossConfig,
) -> Result<Vec<Evaluation>, TrainError> {
    let mut cache = GraphCache::new(graph.clone());
    pairs
        .iter()
        .map(|corr| {
            let fail = |message: String| TrainError::Sample {
                pair_id: corr.pair_id.clone(),
                message,
            };
            let gt = ground_truth(corr).map_err(fail)?;
            let input = cache.get(corr).map_err(fail)?;
            let fwd = model.forward(input)?;
            let prediction = *fwd.prediction();
            let (b, _) = total_loss_with_grad(&prediction, &gt, loss)?;
            Ok(Evaluation {
                pair_id: corr.pair_id.clone(),
                prediction,
                pred: predict_pose(&prediction),
                gt: gt.pose,
                loss: b,
            })
        })
        .collect()
}

pub fn evaluate(
    checkpoint: &Checkpoint<f64>,
    pairs: &[CorrespondenceSet],
    graph: &GraphConfig,
    loss: &LossConfig,
) -> Result<Vec<Evaluation>, TrainError> {
    let model = checkpoint.clone().into_model()?;
    evaluate_model(&model, pairs, graph, loss)
}
