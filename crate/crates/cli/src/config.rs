use std::path::{Path, PathBuf};

use epigraph::geom::Intrinsics;
use epigraph::graph::{EdgeVariant, GraphConfig, NeighborSource};
use epigraph::loss::{LossConfig, LossWeights, QuatNorm};
use epigraph::nn::{LayerKind, ModelConfig, Pooling, DEFAULT_WIDTH};
use epigraph::synth::{DatasetSpec, MotionModel, SamplingSpec};
use epigraph::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable naming the directory relative output paths resolve against.
pub const OUTPUT_ENV: &str = "EPIGRAPH_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: DatasetSection,
    pub graph: GraphSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub loss: LossSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// `synthetic` or `files`.
    pub source: String,
    pub sequence: String,
    pub n_frames: usize,
    /// `forward`, `arc` or `random-walk`.
    pub motion: String,
    pub frame_rate: f64,
    /// Temporal spacings in seconds used by `generate` and `train`.
    pub spacings: Vec<f64>,
    pub n_points: usize,
    pub depth_min: f64,
    pub depth_max: f64,
    pub noise_px: f64,
    pub outlier_fraction: f64,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub image_width: u32,
    pub image_height: u32,
    /// Glob patterns of correspondence files (`files` source).
    pub correspondences: Vec<String>,
    /// Absolute poses, one line per frame; fills in missing pair ground truth.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<String>,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let spec = DatasetSpec::default();
        Self {
            source: "synthetic".into(),
            sequence: spec.sequence,
            n_frames: spec.n_frames,
            motion: spec.motion.name().into(),
            frame_rate: spec.frame_rate,
            spacings: vec![spec.spacing],
            n_points: spec.n_points,
            depth_min: spec.depth_range.0,
            depth_max: spec.depth_range.1,
            noise_px: spec.noise_px,
            outlier_fraction: spec.outlier_fraction,
            fx: spec.intrinsics.fx,
            fy: spec.intrinsics.fy,
            cx: spec.intrinsics.cx,
            cy: spec.intrinsics.cy,
            image_width: spec.image_size.0,
            image_height: spec.image_size.1,
            correspondences: Vec::new(),
            trajectory: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSection {
    pub k: usize,
    pub tau: f64,
    pub variant: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    pub symmetrize: bool,
    pub neighbors: String,
}

impl Default for GraphSection {
    fn default() -> Self {
        let g = GraphConfig::default();
        Self {
            k: g.k,
            tau: g.tau,
            variant: g.variant.name().into(),
            radius: g.radius,
            symmetrize: g.symmetrize,
            neighbors: g.source.name().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Named architecture; empty when `layers` is given.
    pub preset: String,
    /// Explicit stack of `gcn`, `gat` and `gin` layers.
    pub layers: Vec<String>,
    /// `mean`, `sum` or `max`; empty keeps the preset's pooling (mean for stacks).
    pub pooling: String,
    pub width: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            preset: "3GCN+GAT".into(),
            layers: Vec::new(),
            pooling: String::new(),
            width: DEFAULT_WIDTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub split: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            batch_size: t.batch_size,
            lr: t.lr,
            epochs: t.epochs,
            split: t.split,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub pose: f64,
    pub frob: f64,
    pub svd: f64,
    pub yaw: f64,
    pub quat_norm: String,
    pub normalized_essential: bool,
}

impl Default for LossSection {
    fn default() -> Self {
        let l = LossConfig::default();
        Self {
            pose: l.weights.pose,
            frob: l.weights.frob,
            svd: l.weights.svd,
            yaw: l.weights.yaw,
            quat_norm: l.quat_norm.name().into(),
            normalized_essential: l.normalized_essential,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub spacings: Vec<f64>,
    pub output_dir: String,
    /// Rigidly align the chained trajectory before APE/ATE.
    pub align: bool,
    /// `none` or `eightpoint`.
    pub baseline: String,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            spacings: vec![0.1],
            output_dir: "epigraph-out".into(),
            align: false,
            baseline: "none".into(),
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dataset: DatasetSection::default(),
            graph: GraphSection::default(),
            model: ModelSection::default(),
            train: TrainSection::default(),
            loss: LossSection::default(),
            eval: EvalSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    None,
    EightPoint,
}

impl std::str::FromStr for Baseline {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Baseline::None),
            "eightpoint" => Ok(Baseline::EightPoint),
            _ => Err(format!("unknown baseline {s:?} (expected none or eightpoint)")),
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies a `section.field=value` override. The value is read as a TOML
    /// literal and falls back to a bare string.
    pub fn set(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| config_err(format!("override {assignment:?} is not key=value")))?;
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut root = toml::Value::try_from(&*self).map_err(|e| config_err(e.to_string()))?;
        let path: Vec<&str> = key.trim().split('.').collect();
        let (last, parents) = path.split_last().expect("split yields one item");
        let mut node = &mut root;
        for p in parents {
            node = node
                .get_mut(*p)
                .filter(|v| v.is_table())
                .ok_or_else(|| config_err(format!("unknown config section {p:?} in {key:?}")))?;
        }
        node.as_table_mut()
            .ok_or_else(|| config_err(format!("{key:?} does not name a field")))?
            .insert(last.to_string(), value);
        *self = root
            .try_into()
            .map_err(|e: toml::de::Error| config_err(format!("override {key:?}: {e}")))?;
        Ok(())
    }

    /// Checks every field that can be checked without touching the filesystem.
    pub fn validate(&self) -> Result<(), CliError> {
        self.dataset_spec(self.dataset.spacings.first().copied().unwrap_or(0.1))?;
        if self.dataset.spacings.is_empty() {
            return Err(config_err("dataset.spacings is empty"));
        }
        if self.eval.spacings.is_empty() {
            return Err(config_err("eval.spacings is empty"));
        }
        for &s in self.dataset.spacings.iter().chain(&self.eval.spacings) {
            self.step(s)?;
        }
        match self.dataset.source.as_str() {
            "synthetic" => {}
            "files" if self.dataset.correspondences.is_empty() => {
                return Err(config_err("dataset.source = \"files\" needs dataset.correspondences"))
            }
            "files" => {}
            other => return Err(config_err(format!("unknown dataset.source {other:?} (expected synthetic or files)"))),
        }
        self.baseline()?;
        self.train_config()?.validate().map_err(|e| config_err(e.to_string()))
    }

    pub fn intrinsics(&self) -> Intrinsics<f64> {
        let d = &self.dataset;
        Intrinsics {
            fx: d.fx,
            fy: d.fy,
            cx: d.cx,
            cy: d.cy,
        }
    }

    pub fn motion(&self) -> Result<MotionModel, CliError> {
        match self.dataset.motion.as_str() {
            "forward" => Ok(MotionModel::forward()),
            "arc" => Ok(MotionModel::arc()),
            "random-walk" => Ok(MotionModel::random_walk()),
            other => Err(config_err(format!(
                "unknown dataset.motion {other:?} (expected forward, arc or random-walk)"
            ))),
        }
    }

    /// Frame step `d` for a temporal spacing.
    pub fn step(&self, spacing: f64) -> Result<usize, CliError> {
        SamplingSpec { spacing }
            .step(self.dataset.frame_rate)
            .map_err(|e| config_err(e.to_string()))
    }

    pub fn dataset_spec(&self, spacing: f64) -> Result<DatasetSpec, CliError> {
        let d = &self.dataset;
        let intrinsics = self.intrinsics();
        intrinsics.validate().map_err(|e| config_err(e.to_string()))?;
        if !(d.frame_rate > 0.0 && d.frame_rate.is_finite()) {
            return Err(config_err(format!("dataset.frame_rate {}", d.frame_rate)));
        }
        Ok(DatasetSpec {
            sequence: d.sequence.clone(),
            seed: epigraph::train::substream_seed(self.seed, epigraph::train::Substream::Dataset),
            n_frames: d.n_frames,
            motion: self.motion()?,
            frame_rate: d.frame_rate,
            spacing,
            intrinsics,
            image_size: (d.image_width, d.image_height),
            n_points: d.n_points,
            depth_range: (d.depth_min, d.depth_max),
            noise_px: d.noise_px,
            outlier_fraction: d.outlier_fraction,
        })
    }

    pub fn graph_config(&self) -> Result<GraphConfig, CliError> {
        let g = &self.graph;
        Ok(GraphConfig {
            k: g.k,
            tau: g.tau,
            variant: g.variant.parse::<EdgeVariant>().map_err(config_err)?,
            radius: g.radius,
            symmetrize: g.symmetrize,
            source: g.neighbors.parse::<NeighborSource>().map_err(config_err)?,
            ..GraphConfig::default()
        })
    }

    pub fn model_config(&self) -> Result<ModelConfig, CliError> {
        let m = &self.model;
        let pooling = if m.pooling.is_empty() {
            None
        } else {
            Some(m.pooling.parse::<Pooling>().map_err(|e| config_err(e.to_string()))?)
        };
        let nn = |e: epigraph::nn::NnError| config_err(e.to_string());
        match (m.preset.is_empty(), m.layers.is_empty()) {
            (false, false) => Err(config_err(format!(
                "model.preset {:?} conflicts with the explicit model.layers stack; set one of them",
                m.preset
            ))),
            (true, true) => Err(config_err("model needs a preset or an explicit layers stack")),
            (false, true) => {
                let config = ModelConfig::preset(&m.preset, m.width).map_err(nn)?;
                match pooling {
                    Some(p) if p != config.pooling => Err(config_err(format!(
                        "model.pooling {:?} conflicts with preset {:?}",
                        m.pooling, m.preset
                    ))),
                    _ => Ok(config),
                }
            }
            (true, false) => {
                let kinds = m
                    .layers
                    .iter()
                    .map(|s| s.parse::<LayerKind>().map_err(|e| config_err(e.to_string())))
                    .collect::<Result<Vec<_>, _>>()?;
                ModelConfig::stack(&kinds, m.width, pooling.unwrap_or(Pooling::Mean)).map_err(nn)
            }
        }
    }

    pub fn loss_config(&self) -> Result<LossConfig, CliError> {
        let l = &self.loss;
        let config = LossConfig {
            weights: LossWeights {
                pose: l.pose,
                frob: l.frob,
                svd: l.svd,
                yaw: l.yaw,
            },
            quat_norm: l.quat_norm.parse::<QuatNorm>().map_err(|e| config_err(e.to_string()))?,
            normalized_essential: l.normalized_essential,
        };
        config.weights.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(config)
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let t = &self.train;
        Ok(TrainConfig {
            batch_size: t.batch_size,
            lr: t.lr,
            epochs: t.epochs,
            split: t.split,
            seed: self.seed,
            loss: self.loss_config()?,
            model: self.model_config()?,
            graph: self.graph_config()?,
        })
    }

    pub fn baseline(&self) -> Result<Baseline, CliError> {
        self.eval.baseline.parse().map_err(config_err)
    }

    /// Output root: `eval.output_dir`, resolved against `$EPIGRAPH_OUT` when relative.
    pub fn output_root(&self) -> PathBuf {
        let dir = PathBuf::from(&self.eval.output_dir);
        match std::env::var_os(OUTPUT_ENV) {
            Some(base) if dir.is_relative() => PathBuf::from(base).join(dir),
            _ => dir,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let text = c.to_toml();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), c);
        assert_eq!(ExperimentConfig::parse("").unwrap(), c);
    }

    #[test]
    fn defaults_match_training_settings() {
        let c = ExperimentConfig::default();
        let t = c.train_config().unwrap();
        assert_eq!(t, TrainConfig::default());
        assert_eq!(t.batch_size, 4);
        assert_eq!(t.lr, 1e-4);
        assert_eq!(t.graph.tau, 1e-4);
        assert_eq!(t.model.preset.as_deref(), Some("3GCN+GAT"));
    }

    #[test]
    fn dotted_overrides() {
        let mut c = ExperimentConfig::default();
        c.set("train.epochs=3").unwrap();
        c.set("graph.variant=mutual").unwrap();
        c.set("graph.radius=0.25").unwrap();
        c.set("dataset.spacings=[0.1, 0.5]").unwrap();
        c.set("seed=7").unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.graph.variant, "mutual");
        assert_eq!(c.graph.radius, Some(0.25));
        assert_eq!(c.dataset.spacings, vec![0.1, 0.5]);
        assert_eq!(c.seed, 7);
        assert_eq!(ExperimentConfig::parse(&c.to_toml()).unwrap(), c);
        assert!(matches!(c.set("train.nope=1"), Err(CliError::Config(_))));
        assert!(matches!(c.set("nope.epochs=1"), Err(CliError::Config(_))));
        assert!(matches!(c.set("train.epochs=many"), Err(CliError::Config(_))));
        assert!(matches!(c.set("no_equals"), Err(CliError::Config(_))));
    }

    #[test]
    fn model_section_conflicts() {
        let mut c = ExperimentConfig::default();
        c.model.layers = vec!["gcn".into(), "gat".into()];
        assert!(c.model_config().unwrap_err().to_string().contains("conflicts"));
        c.model.preset.clear();
        let m = c.model_config().unwrap();
        assert_eq!(m.layers.len(), 2);
        assert_eq!(m.pooling, Pooling::Mean);
        c.model.layers.clear();
        assert!(c.model_config().is_err());
        let mut c = ExperimentConfig::default();
        c.model.pooling = "sum".into();
        assert!(c.model_config().is_err());
        c.model.preset = "GIN_SumPool".into();
        assert_eq!(c.model_config().unwrap().pooling, Pooling::Sum);
        c.model.preset = "nope".into();
        assert!(c.validate().is_err());
    }

    #[test]
    fn rejects_bad_values() {
        for (k, v) in [
            ("dataset.motion", "\"spiral\""),
            ("dataset.source", "\"db\""),
            ("dataset.source", "\"files\""),
            ("graph.variant", "\"fuzzy\""),
            ("loss.quat_norm", "\"l3\""),
            ("loss.frob", "-1.0"),
            ("train.split", "1.0"),
            ("eval.baseline", "\"ransac\""),
            ("eval.spacings", "[0.01]"),
        ] {
            let mut c = ExperimentConfig::default();
            c.set(&format!("{k}={v}")).unwrap();
            assert!(matches!(c.validate(), Err(CliError::Config(_))), "{k}={v}");
        }
        assert!(ExperimentConfig::parse("[train]\nbogus = 1\n").is_err());
    }
}
