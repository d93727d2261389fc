use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::{DenseMatrix, LayerKind, LayerSpec, Model, ModelConfig, ModelParams, NnError, Param};
use crate::Real;

const HEADER: &str = "# epigraph-ckpt";
const VERSION: &str = "v1";

/// Serialized model: config, parameters with optimizer state, and free-form
/// string metadata (sorted by key).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub config: ModelConfig,
    pub params: ModelParams<T>,
    pub metadata: BTreeMap<String, String>,
}

impl<T: Real> Checkpoint<T> {
    pub fn from_model(model: &Model<T>, metadata: BTreeMap<String, String>) -> Self {
        Self {
            config: model.config.clone(),
            params: model.params.clone(),
            metadata,
        }
    }

    pub fn into_model(self) -> Result<Model<T>, NnError> {
        Model::from_params(self.config, self.params)
    }
}

fn join<T: Real>(v: &[T]) -> String {
    let mut s = String::new();
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{x}");
    }
    s
}

pub fn write_checkpoint<T: Real>(ckpt: &Checkpoint<T>) -> String {
    let c = &ckpt.config;
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER} {VERSION}");
    let _ = writeln!(out, "preset {}", c.preset.as_deref().unwrap_or("none"));
    let _ = writeln!(out, "pooling {}", c.pooling.name());
    let _ = writeln!(out, "width {}", c.width);
    let _ = writeln!(out, "layers {}", c.layers.len());
    for l in &c.layers {
        let _ = writeln!(
            out,
            "layer {} {} {} {} {}",
            l.kind.name(),
            l.in_dim,
            l.out_dim,
            l.heads,
            l.activation.name()
        );
    }
    let _ = writeln!(out, "metadata {}", ckpt.metadata.len());
    for (k, v) in &ckpt.metadata {
        let _ = writeln!(out, "{k} {v}");
    }
    let _ = writeln!(out, "step {}", ckpt.params.step);
    let _ = writeln!(out, "tensors {}", ckpt.params.tensors.len());
    for p in &ckpt.params.tensors {
        let _ = writeln!(out, "tensor {} {} {}", p.name, p.value.rows(), p.value.cols());
        let _ = writeln!(out, "value {}", join(p.value.as_slice()));
        let _ = writeln!(out, "m {}", join(p.m.as_slice()));
        let _ = writeln!(out, "v {}", join(p.v.as_slice()));
    }
    out
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Reader<'a> {
    fn next(&mut self) -> Result<&'a str, NnError> {
        for (i, l) in self.lines.by_ref() {
            if !l.trim().is_empty() {
                self.line = i + 1;
                return Ok(l.trim());
            }
        }
        Err(self.err("unexpected end of file"))
    }

    fn err(&self, message: impl Into<String>) -> NnError {
        NnError::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    /// Next line as `key rest`, requiring `key`.
    fn keyed(&mut self, key: &str) -> Result<&'a str, NnError> {
        let l = self.next()?;
        match l.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest.trim()),
            None if l == key => Ok(""),
            _ => Err(self.err(format!("expected `{key}`"))),
        }
    }

    fn parse<F: FromStr>(&self, s: &str) -> Result<F, NnError> {
        s.parse().map_err(|_| self.err(format!("cannot parse {s:?}")))
    }

    fn values<T: Real>(&mut self, key: &str, n: usize) -> Result<Vec<T>, NnError> {
        let rest = self.keyed(key)?;
        let v: Vec<T> = rest
            .split_whitespace()
            .map(|s| self.parse(s))
            .collect::<Result<_, _>>()?;
        if v.len() != n {
            return Err(self.err(format!("{key}: expected {n} values, found {}", v.len())));
        }
        Ok(v)
    }
}

pub fn parse_checkpoint<T: Real>(text: &str) -> Result<Checkpoint<T>, NnError> {
    let mut r = Reader {
        lines: text.lines().enumerate(),
        line: 0,
    };
    let header = r.next()?;
    let version = header
        .strip_prefix(HEADER)
        .map(str::trim)
        .ok_or_else(|| r.err(format!("expected `{HEADER} {VERSION}` header")))?;
    if version != VERSION {
        return Err(NnError::Version(version.to_string()));
    }
    let preset = match r.keyed("preset")? {
        "none" => None,
        p => Some(p.to_string()),
    };
    let pooling = r.keyed("pooling")?;
    let pooling = pooling.parse().map_err(|e: String| r.err(e))?;
    let width = r.keyed("width")?;
    let width = r.parse(width)?;
    let n_layers = r.keyed("layers")?;
    let n_layers: usize = r.parse(n_layers)?;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let f: Vec<&str> = r.keyed("layer")?.split_whitespace().collect();
        if f.len() != 5 {
            return Err(r.err("layer: expected `kind in out heads activation`"));
        }
        layers.push(LayerSpec {
            kind: LayerKind::from_str(f[0]).map_err(|e| r.err(e))?,
            in_dim: r.parse(f[1])?,
            out_dim: r.parse(f[2])?,
            heads: r.parse(f[3])?,
            activation: f[4].parse().map_err(|e: String| r.err(e))?,
        });
    }
    let config = ModelConfig {
        preset,
        layers,
        pooling,
        width,
    };
    config.validate()?;
    if let Some(name) = &config.preset {
        let expected = ModelConfig::preset(name, config.width)?;
        if expected.layers != config.layers || expected.pooling != config.pooling {
            return Err(NnError::Schema(format!("layers do not match preset {name}")));
        }
    }

    let n_meta = r.keyed("metadata")?;
    let n_meta: usize = r.parse(n_meta)?;
    let mut metadata = BTreeMap::new();
    for _ in 0..n_meta {
        let l = r.next()?;
        let (k, v) = l.split_once(' ').unwrap_or((l, ""));
        metadata.insert(k.to_string(), v.to_string());
    }

    let step = r.keyed("step")?;
    let step = r.parse(step)?;
    let n_tensors = r.keyed("tensors")?;
    let n_tensors: usize = r.parse(n_tensors)?;
    let mut tensors = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let f: Vec<&str> = r.keyed("tensor")?.split_whitespace().collect();
        if f.len() != 3 {
            return Err(r.err("tensor: expected `name rows cols`"));
        }
        let (rows, cols): (usize, usize) = (r.parse(f[1])?, r.parse(f[2])?);
        let name = f[0].to_string();
        let mk = |v: Vec<T>| DenseMatrix::from_vec(rows, cols, v).expect("length checked");
        let value = mk(r.values("value", rows * cols)?);
        let m = mk(r.values("m", rows * cols)?);
        let v = mk(r.values("v", rows * cols)?);
        let mut p = Param::new(name, value);
        p.m = m;
        p.v = v;
        tensors.push(p);
    }
    let params = ModelParams { tensors, step };
    // Shape and name agreement with the config.
    Model::from_params(config.clone(), params.clone())?;
    Ok(Checkpoint {
        config,
        params,
        metadata,
    })
}

pub fn save_checkpoint<T: Real>(ckpt: &Checkpoint<T>, path: impl AsRef<Path>) -> Result<(), NnError> {
    let path = path.as_ref();
    std::fs::write(path, write_checkpoint(ckpt)).map_err(|source| NnError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<Checkpoint<T>, NnError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| NnError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_checkpoint(&text)
}
