use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Matrix3;

use super::{Edge, EdgeVariant, EpipolarGraph, GraphError, GraphMetadata, NeighborSource};
use crate::synth::PairId;

const MAGIC: &str = "# epigraph-graph";
const VERSION: &str = "v1";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

pub fn write_graph(g: &EpipolarGraph) -> String {
    let m = &g.metadata;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {VERSION}");
    let _ = writeln!(out, "nodes {}", g.node_count());
    for (f, idx) in g.node_features.iter().zip(&g.kept_indices) {
        let _ = writeln!(out, "{idx} {} {} {} {} {} {}", f[0], f[1], f[2], f[3], f[4], f[5]);
    }
    let _ = writeln!(out, "edges {}", g.edges.len());
    for e in &g.edges {
        let _ = writeln!(out, "{} {} {}", e.src, e.dst, e.weight);
    }
    let _ = writeln!(out, "metadata");
    let _ = writeln!(out, "pair_id {} {} {}", m.pair_id.sequence, m.pair_id.first, m.pair_id.second);
    let _ = writeln!(out, "k {}", m.k);
    let _ = writeln!(out, "k_effective {}", m.k_effective);
    let _ = writeln!(out, "k_clamped {}", m.k_clamped);
    let _ = writeln!(out, "tau {}", m.tau);
    let _ = writeln!(out, "variant {}", m.variant);
    let _ = writeln!(out, "radius {}", opt(m.radius));
    let _ = writeln!(out, "bandwidth {}", opt(m.bandwidth));
    let _ = writeln!(out, "symmetrize {}", m.symmetrize);
    let _ = writeln!(out, "source {}", m.source.name());
    let _ = writeln!(out, "source_count {}", m.source_count);
    let _ = writeln!(out, "initial_edge_count {}", m.initial_edge_count);
    match &m.e0 {
        Some(e) => {
            let vals: Vec<String> = e.transpose().iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "e0 {}", vals.join(" "));
        }
        None => {
            let _ = writeln!(out, "e0 none");
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str), GraphError> {
        for (i, l) in self.inner.by_ref() {
            let l = l.trim();
            if !l.is_empty() {
                self.last = i + 1;
                return Ok((i + 1, l));
            }
        }
        Err(GraphError::Parse {
            line: self.last + 1,
            message: "unexpected end of file".into(),
        })
    }
}

fn parse<F: FromStr>(s: &str, line: usize) -> Result<F, GraphError> {
    s.parse().map_err(|_| GraphError::Parse {
        line,
        message: format!("cannot parse {s:?}"),
    })
}

fn fields<'a>(line: &'a str, n: usize, ln: usize, what: &str) -> Result<Vec<&'a str>, GraphError> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() != n {
        return Err(GraphError::Parse {
            line: ln,
            message: format!("{what}: expected {n} fields, found {}", f.len()),
        });
    }
    Ok(f)
}

fn counted(lines: &mut Lines<'_>, keyword: &str) -> Result<usize, GraphError> {
    let (ln, l) = lines.next_line()?;
    let f = fields(l, 2, ln, keyword)?;
    if f[0] != keyword {
        return Err(GraphError::Parse {
            line: ln,
            message: format!("expected `{keyword} <count>`"),
        });
    }
    parse(f[1], ln)
}

fn opt_f64(s: &str, ln: usize) -> Result<Option<f64>, GraphError> {
    if s == "none" {
        Ok(None)
    } else {
        parse(s, ln).map(Some)
    }
}

pub fn parse_graph(text: &str) -> Result<EpipolarGraph, GraphError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (ln, header) = lines.next_line()?;
    let version = header.strip_prefix(MAGIC).map(str::trim).ok_or(GraphError::Parse {
        line: ln,
        message: format!("expected `{MAGIC} {VERSION}` header"),
    })?;
    if version != VERSION {
        return Err(GraphError::Version(version.to_string()));
    }

    let n = counted(&mut lines, "nodes")?;
    let mut node_features = Vec::with_capacity(n);
    let mut kept_indices = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, l) = lines.next_line()?;
        let f = fields(l, 7, ln, "node")?;
        kept_indices.push(parse(f[0], ln)?);
        let mut row = [0.0; 6];
        for (r, s) in row.iter_mut().zip(&f[1..]) {
            *r = parse(s, ln)?;
        }
        node_features.push(row);
    }

    let m = counted(&mut lines, "edges")?;
    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let (ln, l) = lines.next_line()?;
        let f = fields(l, 3, ln, "edge")?;
        edges.push(Edge {
            src: parse(f[0], ln)?,
            dst: parse(f[1], ln)?,
            weight: parse(f[2], ln)?,
        });
    }

    let (ln, l) = lines.next_line()?;
    if l != "metadata" {
        return Err(GraphError::Parse {
            line: ln,
            message: "expected `metadata`".into(),
        });
    }
    let mut next = |key: &str, n: usize| -> Result<(usize, Vec<String>), GraphError> {
        let (ln, l) = lines.next_line()?;
        let f = fields(l, n + 1, ln, key)?;
        if f[0] != key {
            return Err(GraphError::Parse {
                line: ln,
                message: format!("expected `{key}`"),
            });
        }
        Ok((ln, f[1..].iter().map(|s| s.to_string()).collect()))
    };
    let (ln, v) = next("pair_id", 3)?;
    let pair_id = PairId::new(v[0].clone(), parse(&v[1], ln)?, parse(&v[2], ln)?);
    let (ln, v) = next("k", 1)?;
    let k = parse(&v[0], ln)?;
    let (ln, v) = next("k_effective", 1)?;
    let k_effective = parse(&v[0], ln)?;
    let (ln, v) = next("k_clamped", 1)?;
    let k_clamped = parse(&v[0], ln)?;
    let (ln, v) = next("tau", 1)?;
    let tau = parse(&v[0], ln)?;
    let (ln, v) = next("variant", 1)?;
    let variant = EdgeVariant::from_str(&v[0]).map_err(|message| GraphError::Parse { line: ln, message })?;
    let (ln, v) = next("radius", 1)?;
    let radius = opt_f64(&v[0], ln)?;
    let (ln, v) = next("bandwidth", 1)?;
    let bandwidth = opt_f64(&v[0], ln)?;
    let (ln, v) = next("symmetrize", 1)?;
    let symmetrize = parse(&v[0], ln)?;
    let (ln, v) = next("source", 1)?;
    let source = NeighborSource::from_str(&v[0]).map_err(|message| GraphError::Parse { line: ln, message })?;
    let (ln, v) = next("source_count", 1)?;
    let source_count = parse(&v[0], ln)?;
    let (ln, v) = next("initial_edge_count", 1)?;
    let initial_edge_count = parse(&v[0], ln)?;

    let (ln, l) = lines.next_line()?;
    let f: Vec<&str> = l.split_whitespace().collect();
    let e0 = match f.as_slice() {
        ["e0", "none"] => None,
        ["e0", rest @ ..] if rest.len() == 9 => {
            let mut vals = [0.0; 9];
            for (v, s) in vals.iter_mut().zip(rest) {
                *v = parse(s, ln)?;
            }
            Some(Matrix3::from_row_slice(&vals))
        }
        _ => {
            return Err(GraphError::Parse {
                line: ln,
                message: "expected `e0 none` or nine values".into(),
            })
        }
    };

    let g = EpipolarGraph {
        node_features,
        edges,
        kept_indices,
        metadata: GraphMetadata {
            pair_id,
            k,
            k_effective,
            k_clamped,
            tau,
            variant,
            radius,
            bandwidth,
            symmetrize,
            source,
            source_count,
            initial_edge_count,
            e0,
        },
    };
    g.validate()?;
    Ok(g)
}

pub fn export_graph(g: &EpipolarGraph, path: impl AsRef<Path>) -> Result<(), GraphError> {
    let path = path.as_ref();
    std::fs::write(path, write_graph(g)).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn import_graph(path: impl AsRef<Path>) -> Result<EpipolarGraph, GraphError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_graph(&text)
}
