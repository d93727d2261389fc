use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector2, Vector3};

use super::{Correspondence, CorrespondenceSet, PairId, SynthError, Trajectory};
use crate::geom::{Intrinsics, Pose, Quaternion};

const CORR_MAGIC: &str = "epigraph-corr";
const CORR_VERSION: &str = "v1";

fn io_err(path: &Path, source: std::io::Error) -> SynthError {
    SynthError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_fields<F: std::str::FromStr>(fields: &[&str], line: usize) -> Result<Vec<F>, SynthError> {
    fields
        .iter()
        .map(|s| {
            s.parse::<F>().map_err(|_| SynthError::Parse {
                line,
                message: format!("cannot parse {s:?}"),
            })
        })
        .collect()
}

fn parse_floats(fields: &[&str], line: usize, expected: usize, what: &str) -> Result<Vec<f64>, SynthError> {
    if fields.len() != expected {
        return Err(SynthError::Parse {
            line,
            message: format!("{what}: expected {expected} fields, found {}", fields.len()),
        });
    }
    let v: Vec<f64> = parse_fields(fields, line)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(SynthError::Parse {
            line,
            message: format!("{what}: non-finite value"),
        });
    }
    Ok(v)
}

pub fn write_correspondences(set: &CorrespondenceSet) -> String {
    let k = &set.intrinsics;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# {CORR_MAGIC} {CORR_VERSION} {} {} {} {} {} {}",
        set.image_size.0, set.image_size.1, k.fx, k.fy, k.cx, k.cy
    );
    let id = &set.pair_id;
    let _ = writeln!(out, "# pair_id {} {} {}", id.sequence, id.first, id.second);
    for c in &set.pairs {
        let _ = writeln!(out, "{} {} {} {} {}", c.p1.x, c.p1.y, c.p2.x, c.p2.y, c.confidence);
    }
    if let Some(p) = &set.gt_relative {
        let q = p.rotation;
        let t = p.translation;
        let _ = writeln!(out, "# gt_relative {} {} {} {} {} {} {}", q.w, q.x, q.y, q.z, t.x, t.y, t.z);
    }
    out
}

/// Parses the text correspondence format. Pose lines are taken verbatim,
/// so a save/load cycle reproduces every field bit for bit.
pub fn parse_correspondences(text: &str) -> Result<CorrespondenceSet, SynthError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (ln, header) = lines
        .by_ref()
        .find(|(_, l)| !l.is_empty())
        .ok_or(SynthError::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() < 3 || fields[0] != "#" || fields[1] != CORR_MAGIC {
        return Err(SynthError::Parse {
            line: ln,
            message: format!("expected `# {CORR_MAGIC} {CORR_VERSION} ...` header"),
        });
    }
    if fields[2] != CORR_VERSION {
        return Err(SynthError::Parse {
            line: ln,
            message: format!("unsupported version {}", fields[2]),
        });
    }
    if fields.len() != 9 {
        return Err(SynthError::Parse {
            line: ln,
            message: format!("header: expected 9 fields, found {}", fields.len()),
        });
    }
    let size: Vec<u32> = parse_fields(&fields[3..5], ln)?;
    let k = parse_floats(&fields[5..9], ln, 4, "intrinsics")?;
    let intrinsics = Intrinsics {
        fx: k[0],
        fy: k[1],
        cx: k[2],
        cy: k[3],
    };

    let mut pairs = Vec::new();
    let mut gt_relative = None;
    let mut pair_id = PairId::new("unknown", 0, 0);
    for (ln, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if let Some(rest) = line.strip_prefix('#') {
            let tagged: Vec<&str> = rest.split_whitespace().collect();
            match tagged.first().copied() {
                Some("gt_relative") => {
                    let v = parse_floats(&tagged[1..], ln, 7, "gt_relative")?;
                    gt_relative = Some(Pose {
                        rotation: Quaternion::new(v[0], v[1], v[2], v[3]),
                        translation: Vector3::new(v[4], v[5], v[6]),
                    });
                }
                Some("pair_id") => {
                    if tagged.len() != 4 {
                        return Err(SynthError::Parse {
                            line: ln,
                            message: "pair_id: expected `sequence first second`".into(),
                        });
                    }
                    let idx: Vec<usize> = parse_fields(&tagged[2..], ln)?;
                    pair_id = PairId::new(tagged[1], idx[0], idx[1]);
                }
                _ => {}
            }
            continue;
        }
        if gt_relative.is_some() {
            return Err(SynthError::Parse {
                line: ln,
                message: "correspondence after the gt_relative block".into(),
            });
        }
        let v = parse_floats(&fields, ln, 5, "correspondence")?;
        pairs.push(Correspondence {
            p1: Vector2::new(v[0], v[1]),
            p2: Vector2::new(v[2], v[3]),
            confidence: v[4],
        });
    }
    if let Some(p) = &gt_relative {
        let n = p.rotation.norm();
        if (n - 1.0).abs() > 1e-6 {
            return Err(SynthError::Validation(format!("gt_relative quaternion norm {n}")));
        }
    }
    let set = CorrespondenceSet {
        pairs,
        intrinsics,
        image_size: (size[0], size[1]),
        gt_relative,
        pair_id,
    };
    set.validate()?;
    Ok(set)
}

pub fn save_correspondences(set: &CorrespondenceSet, path: impl AsRef<Path>) -> Result<(), SynthError> {
    let path = path.as_ref();
    std::fs::write(path, write_correspondences(set)).map_err(|e| io_err(path, e))
}

pub fn load_correspondences(path: impl AsRef<Path>) -> Result<CorrespondenceSet, SynthError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_correspondences(&text)
}

/// One `[R|t]` row-major line per frame.
pub fn write_trajectory(traj: &Trajectory) -> String {
    let mut out = String::new();
    for p in &traj.poses {
        let r = p.rotation_matrix();
        let t = p.translation;
        let vals = [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
        ];
        let line: Vec<String> = vals.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_trajectory(text: &str, frame_rate: f64) -> Result<Trajectory, SynthError> {
    let mut poses = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let v = parse_floats(&fields, i + 1, 12, "pose")?;
        let r = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        let pose = Pose::from_rt(&r, Vector3::new(v[3], v[7], v[11])).map_err(|e| SynthError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        poses.push(pose);
    }
    Trajectory::new(poses, frame_rate)
}

pub fn save_trajectory(traj: &Trajectory, path: impl AsRef<Path>) -> Result<(), SynthError> {
    let path = path.as_ref();
    std::fs::write(path, write_trajectory(traj)).map_err(|e| io_err(path, e))
}

pub fn load_trajectory(path: impl AsRef<Path>, frame_rate: f64) -> Result<Trajectory, SynthError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_trajectory(&text, frame_rate)
}

#[cfg(test)]
mod tests {
    use super::super::{generate_scene, generate_trajectory, MotionModel, SceneParams};
    use super::*;

    fn scene() -> CorrespondenceSet {
        let pose = Pose::new(
            Quaternion::from_axis_angle(&Vector3::new(0.3, 1.0, 0.2), 0.2).unwrap(),
            Vector3::new(0.4, 0.1, 0.5),
        )
        .unwrap();
        let mut p = SceneParams::thirty_percent_inliers(12, pose);
        p.noise_px = 0.7;
        p.pair_id = PairId::new("seq03", 40, 45);
        generate_scene(&p).unwrap().correspondences
    }

    #[test]
    fn correspondence_round_trip() {
        let set = scene();
        let back = parse_correspondences(&write_correspondences(&set)).unwrap();
        assert_eq!(back, set);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pair.txt");
        save_correspondences(&set, &path).unwrap();
        assert_eq!(load_correspondences(&path).unwrap(), set);
    }

    #[test]
    fn empty_set_is_valid() {
        let mut set = scene();
        set.pairs.clear();
        set.gt_relative = None;
        let back = parse_correspondences(&write_correspondences(&set)).unwrap();
        assert!(back.is_empty());
        assert_eq!(back, set);
    }

    #[test]
    fn short_line_names_its_line() {
        let text = "# epigraph-corr v1 640 480 500 500 320 240\n1 2 3 4 0.5\n1 2 3 4\n";
        match parse_correspondences(text) {
            Err(SynthError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn confidence_out_of_range_is_rejected() {
        let text = "# epigraph-corr v1 640 480 500 500 320 240\n1 2 3 4 1.5\n";
        assert!(matches!(parse_correspondences(text), Err(SynthError::Validation(_))));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let text = "# epigraph-corr v2 640 480 500 500 320 240\n";
        assert!(matches!(parse_correspondences(text), Err(SynthError::Parse { line: 1, .. })));
    }

    #[test]
    fn trajectory_round_trip() {
        let traj = generate_trajectory(2, 12, MotionModel::random_walk()).unwrap();
        let back = parse_trajectory(&write_trajectory(&traj), 10.0).unwrap();
        assert_eq!(back.len(), traj.len());
        for (a, b) in traj.poses.iter().zip(&back.poses) {
            assert!((a.rotation_matrix() - b.rotation_matrix()).norm() < 1e-12);
            assert_eq!(a.translation, b.translation);
        }
        assert!(matches!(
            parse_trajectory("1 0 0 0 0 1 0 0 0 0 1\n", 10.0),
            Err(SynthError::Parse { line: 1, .. })
        ));
    }
}
