//! Relative and absolute pose metrics, trajectory chaining and reports.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::geom::{is_rotation, relative_pose, GeomError, Pose};
use crate::synth::PairId;
use crate::Real;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("trajectory lengths differ: {pred} predicted vs {gt} ground truth")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("empty trajectory")]
    Empty,
    #[error(transparent)]
    Geom(#[from] GeomError),
}

trait Degrees {
    fn to_degrees_real(self) -> Self;
}

impl<T: Real> Degrees for T {
    fn to_degrees_real(self) -> T {
        self * T::lit(180.0) / T::pi()
    }
}

/// Geodesic angle between two rotations, degrees: `acos((tr(R_gtᵀR_pred) − 1)/2)`,
/// evaluated as an `atan2` of the sine and cosine parts to stay accurate near 0 and 180.
pub fn dre<T: Real>(r_pred: &Matrix3<T>, r_gt: &Matrix3<T>) -> Result<T, EvalError> {
    is_rotation(r_pred)?;
    is_rotation(r_gt)?;
    let m = r_gt.transpose() * r_pred;
    let two = T::lit(2.0);
    let cos = ((m.trace() - T::one()) / two).clamp(-T::one(), T::one());
    let axis = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    let sin = (axis.norm() / two).min(T::one());
    Ok(sin.atan2(cos).to_degrees_real())
}

pub fn dre_poses<T: Real>(pred: &Pose<T>, gt: &Pose<T>) -> Result<T, EvalError> {
    dre(&pred.rotation_matrix(), &gt.rotation_matrix())
}

/// Angle between translation directions, degrees. A zero-norm vector gives
/// 90 and the flag.
pub fn dte<T: Real>(t_pred: &Vector3<T>, t_gt: &Vector3<T>) -> (T, bool) {
    let (a, b) = (t_pred.norm(), t_gt.norm());
    if a <= T::zero() || b <= T::zero() {
        return (T::lit(90.0), true);
    }
    (t_pred.cross(t_gt).norm().atan2(t_pred.dot(t_gt)).to_degrees_real(), false)
}

/// `T₀ = I`, `T_k = T_{k−1}·T_rel,k`.
pub fn chain<T: Real>(relatives: &[Pose<T>]) -> Vec<Pose<T>> {
    let mut out = Vec::with_capacity(relatives.len() + 1);
    out.push(Pose::identity());
    for r in relatives {
        let last = out[out.len() - 1];
        out.push(last.compose(r));
    }
    out
}

/// Consecutive relative poses `T_i⁻¹T_{i+1}`.
pub fn relatives<T: Real>(traj: &[Pose<T>]) -> Vec<Pose<T>> {
    traj.windows(2).map(|w| relative_pose(&w[0], &w[1])).collect()
}

fn check_lengths<T>(pred: &[T], gt: &[T]) -> Result<(), EvalError> {
    if pred.len() != gt.len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    Ok(())
}

/// Per-frame position error, meters.
pub fn ape<T: Real>(pred: &[Pose<T>], gt: &[Pose<T>]) -> Result<Vec<T>, EvalError> {
    check_lengths(pred, gt)?;
    Ok(pred.iter().zip(gt).map(|(p, g)| (p.translation - g.translation).norm()).collect())
}

/// Per-frame rotation error through `R_gtᵀR_pred`, degrees.
pub fn ape_r<T: Real>(pred: &[Pose<T>], gt: &[Pose<T>]) -> Result<Vec<T>, EvalError> {
    check_lengths(pred, gt)?;
    pred.iter().zip(gt).map(|(p, g)| dre_poses(p, g)).collect()
}

/// RMS of the per-frame position errors.
pub fn ate<T: Real>(pred: &[Pose<T>], gt: &[Pose<T>]) -> Result<T, EvalError> {
    let e = ape(pred, gt)?;
    if e.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = T::from_usize(e.len()).expect("length fits");
    Ok((e.iter().fold(T::zero(), |a, &x| a + x * x) / n).sqrt())
}

/// Rigid (rotation + translation, no scale) least-squares alignment of the
/// predicted positions onto the ground truth, applied to the whole trajectory.
pub fn align_rigid<T: Real>(pred: &[Pose<T>], gt: &[Pose<T>]) -> Result<Vec<Pose<T>>, EvalError> {
    check_lengths(pred, gt)?;
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = T::from_usize(pred.len()).expect("length fits");
    let mean = |v: &[Pose<T>]| v.iter().fold(Vector3::zeros(), |a, p| a + p.translation) / n;
    let (mp, mg) = (mean(pred), mean(gt));
    let mut cov = Matrix3::zeros();
    for (p, g) in pred.iter().zip(gt) {
        cov += (g.translation - mg) * (p.translation - mp).transpose();
    }
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < T::zero() {
        d[(2, 2)] = -T::one();
    }
    let r = u * d * vt;
    let t = mg - r * mp;
    let align = Pose::from_rt(&r, t)?;
    Ok(pred.iter().map(|p| align.compose(p)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairMetrics {
    pub pair_id: PairId,
    pub dre_deg: f64,
    pub dte_deg: f64,
    /// Zero-norm translation; `dte_deg` is 90 by convention.
    pub dte_degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMetrics {
    /// Original frame index.
    pub frame: usize,
    pub ape_m: f64,
    pub ape_r_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub pairs: usize,
    pub frames: usize,
    pub ate_m: Option<f64>,
    pub ape_mean_m: Option<f64>,
    pub ape_r_mean_deg: Option<f64>,
    pub dte_mean_deg: Option<f64>,
    pub dte_median_deg: Option<f64>,
    pub dre_mean_deg: Option<f64>,
    pub dre_median_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub sequence: String,
    pub estimator: String,
    pub pairs: Vec<PairMetrics>,
    pub frames: Vec<FrameMetrics>,
    pub predicted_trajectory: Vec<Pose<f64>>,
    pub gt_trajectory: Vec<Pose<f64>>,
    pub summary: Summary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalOptions {
    pub align: bool,
}

/// One evaluated pair: predicted and ground-truth relative pose.
#[derive(Debug, Clone, PartialEq)]
pub struct PairResult {
    pub pair_id: PairId,
    pub pred: Pose<f64>,
    pub gt: Pose<f64>,
}

pub fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 { s[m] } else { (s[m - 1] + s[m]) / 2.0 })
}

/// Per-pair errors for every result, and a trajectory chained from the
/// non-overlapping pairs `(i₀, i₀+d), (i₀+d, i₀+2d), …` where `i₀` is the
/// smallest first frame. The ground-truth trajectory is chained the same way,
/// so both start at the origin.
pub fn run_report(
    sequence: &str,
    estimator: &str,
    results: &[PairResult],
    step: usize,
    options: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    let pairs = results
        .iter()
        .map(|r| {
            let (dte_deg, dte_degenerate) = dte(&r.pred.translation, &r.gt.translation);
            Ok(PairMetrics {
                pair_id: r.pair_id.clone(),
                dre_deg: dre_poses(&r.pred, &r.gt)?,
                dte_deg,
                dte_degenerate,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;

    let mut chained: Vec<&PairResult> = Vec::new();
    if let Some(start) = results.iter().map(|r| r.pair_id.first).min() {
        let mut frame = start;
        while let Some(r) = results.iter().find(|r| r.pair_id.first == frame && r.pair_id.second == frame + step) {
            chained.push(r);
            frame += step;
        }
    }
    let pred_rel: Vec<Pose<f64>> = chained.iter().map(|r| r.pred).collect();
    let gt_rel: Vec<Pose<f64>> = chained.iter().map(|r| r.gt).collect();
    let gt_traj = if chained.is_empty() { Vec::new() } else { chain(&gt_rel) };
    let mut pred_traj = if chained.is_empty() { Vec::new() } else { chain(&pred_rel) };
    if options.align && !pred_traj.is_empty() {
        pred_traj = align_rigid(&pred_traj, &gt_traj)?;
    }
    let apes = ape(&pred_traj, &gt_traj)?;
    let ape_rs = ape_r(&pred_traj, &gt_traj)?;
    let first = chained.first().map_or(0, |r| r.pair_id.first);
    let frames: Vec<FrameMetrics> = apes
        .iter()
        .zip(&ape_rs)
        .enumerate()
        .map(|(k, (&a, &r))| FrameMetrics {
            frame: first + k * step,
            ape_m: a,
            ape_r_deg: r,
        })
        .collect();

    let dres: Vec<f64> = pairs.iter().map(|p| p.dre_deg).collect();
    let dtes: Vec<f64> = pairs.iter().map(|p| p.dte_deg).collect();
    let summary = Summary {
        pairs: pairs.len(),
        frames: frames.len(),
        ate_m: if pred_traj.is_empty() { None } else { Some(ate(&pred_traj, &gt_traj)?) },
        ape_mean_m: mean(&apes),
        ape_r_mean_deg: mean(&ape_rs),
        dte_mean_deg: mean(&dtes),
        dte_median_deg: median(&dtes),
        dre_mean_deg: mean(&dres),
        dre_median_deg: median(&dres),
    };
    Ok(EvalReport {
        sequence: sequence.to_string(),
        estimator: estimator.to_string(),
        pairs,
        frames,
        predicted_trajectory: pred_traj,
        gt_trajectory: gt_traj,
        summary,
    })
}

pub fn write_pairs_csv(report: &EvalReport) -> String {
    let mut out = String::from("pair_id,dre_deg,dte_deg\n");
    for p in &report.pairs {
        let _ = writeln!(out, "{},{},{}", p.pair_id, p.dre_deg, p.dte_deg);
    }
    out
}

pub fn write_frames_csv(report: &EvalReport) -> String {
    let mut out = String::from("frame,ape_m,ape_r_deg\n");
    for f in &report.frames {
        let _ = writeln!(out, "{},{},{}", f.frame, f.ape_m, f.ape_r_deg);
    }
    out
}

fn json_number(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => x.to_string(),
        _ => "null".into(),
    }
}

/// JSON object with the aggregate metrics.
pub fn write_summary(report: &EvalReport) -> String {
    let s = &report.summary;
    let fields = [
        ("ate_m", s.ate_m),
        ("ape_mean_m", s.ape_mean_m),
        ("ape_r_mean_deg", s.ape_r_mean_deg),
        ("dte_mean_deg", s.dte_mean_deg),
        ("dte_median_deg", s.dte_median_deg),
        ("dre_mean_deg", s.dre_mean_deg),
        ("dre_median_deg", s.dre_median_deg),
    ];
    let mut out = String::from("{\n");
    let _ = writeln!(out, "  \"sequence\": \"{}\",", report.sequence);
    let _ = writeln!(out, "  \"estimator\": \"{}\",", report.estimator);
    let _ = writeln!(out, "  \"pairs\": {},", s.pairs);
    let _ = writeln!(out, "  \"frames\": {},", s.frames);
    for (i, (k, v)) in fields.iter().enumerate() {
        let sep = if i + 1 < fields.len() { "," } else { "" };
        let _ = writeln!(out, "  \"{k}\": {}{sep}", json_number(*v));
    }
    out.push_str("}\n");
    out
}

/// One row per report: sequence, estimator, ATE, APE, APE-R, DTE, DRE.
pub fn write_table(reports: &[EvalReport]) -> String {
    let mut out = String::from("sequence,estimator,ate_m,ape_m,ape_r_deg,dte_deg,dre_deg\n");
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in reports {
        let s = &r.summary;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.sequence,
            r.estimator,
            cell(s.ate_m),
            cell(s.ape_mean_m),
            cell(s.ape_r_mean_deg),
            cell(s.dte_mean_deg),
            cell(s.dre_mean_deg)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{unit_quat_to_rot, Quaternion};
    use crate::synth::{generate_trajectory, MotionModel};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose<f64> {
        let q = Quaternion::from_array(std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
        Pose::new(q, Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))).unwrap()
    }

    fn rot(axis: Vector3<f64>, deg: f64) -> Matrix3<f64> {
        unit_quat_to_rot(&Quaternion::from_axis_angle(&axis, deg.to_radians()).unwrap())
    }

    #[test]
    fn dre_examples() {
        let i = Matrix3::identity();
        assert_eq!(dre(&i, &i).unwrap(), 0.0);
        for axis in [Vector3::x(), Vector3::new(1.0, 2.0, -0.5)] {
            assert!((dre(&rot(axis, 30.0), &i).unwrap() - 30.0).abs() < 1e-9);
        }
        for theta in 1..180 {
            let v = dre(&rot(Vector3::z(), theta as f64), &i).unwrap();
            assert!((v - theta as f64).abs() < 1e-9, "{theta}: {v}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let (a, b) = (random_pose(&mut rng), random_pose(&mut rng));
            let oracle = (2.0 * a.rotation.dot(&b.rotation).abs().min(1.0).acos()).to_degrees();
            assert!((dre_poses(&a, &b).unwrap() - oracle).abs() < 1e-6);
        }
        assert!(dre(&(i * 1.1), &i).is_err());
    }

    #[test]
    fn dte_examples() {
        let t = Vector3::new(0.2f64, -0.4, 1.0);
        assert!(dte(&(t * 2.0), &t).0.abs() < 1e-6);
        assert!((dte(&Vector3::<f64>::x(), &Vector3::y()).0 - 90.0).abs() < 1e-12);
        assert_eq!(dte(&-t, &t).0, 180.0);
        assert_eq!(dte(&Vector3::zeros(), &t), (90.0, true));
    }

    #[test]
    fn chain_examples() {
        let still = chain(&[Pose::<f64>::identity(); 4]);
        assert_eq!(still.len(), 5);
        assert!(still.iter().all(|p| *p == Pose::identity()));
        let step = Pose::new(Quaternion::identity(), Vector3::new(0.0, 0.0, 0.1)).unwrap();
        for (k, p) in chain(&[step; 10]).iter().enumerate() {
            assert!((p.translation - Vector3::new(0.0, 0.0, 0.1 * k as f64)).norm() < 1e-12);
        }
        let traj = generate_trajectory(3, 30, MotionModel::random_walk()).unwrap();
        let back = chain(&relatives(&traj.poses));
        for (a, b) in back.iter().zip(&traj.poses) {
            assert!((a.translation - b.translation).norm() < 1e-9);
            assert!((a.rotation_matrix() - b.rotation_matrix()).amax() < 1e-9);
            assert!(dre_poses(a, b).unwrap() < 1e-9);
        }
    }

    #[test]
    fn absolute_error_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gt: Vec<Pose<f64>> = (0..6).map(|_| random_pose(&mut rng)).collect();
        assert!(ape(&gt, &gt).unwrap().iter().all(|&e| e == 0.0));
        assert_eq!(ate(&gt, &gt).unwrap(), 0.0);
        let shifted: Vec<Pose<f64>> = gt
            .iter()
            .map(|p| Pose {
                translation: p.translation + Vector3::x(),
                ..*p
            })
            .collect();
        assert!(ape(&shifted, &gt).unwrap().iter().all(|&e| (e - 1.0).abs() < 1e-12));
        assert!((ate(&shifted, &gt).unwrap() - 1.0).abs() < 1e-12);

        let two = [Pose::identity(), Pose::identity()];
        let off = [
            Pose::identity(),
            Pose {
                translation: Vector3::new(0.0, 2.0, 0.0),
                ..Pose::identity()
            },
        ];
        assert!((ate(&off, &two).unwrap() - 2f64.sqrt()).abs() < 1e-15);

        let noisy: Vec<Pose<f64>> = gt.iter().map(|p| p.compose(&random_pose(&mut rng))).collect();
        let e = ape(&noisy, &gt).unwrap();
        let r = ape_r(&noisy, &gt).unwrap();
        for k in 0..gt.len() {
            let d = noisy[k].translation - gt[k].translation;
            assert!((e[k] - (d.x * d.x + d.y * d.y + d.z * d.z).sqrt()).abs() < 1e-15);
            let rel = gt[k].rotation.conjugate().mul(&noisy[k].rotation);
            assert!((r[k] - rel.angle().to_degrees()).abs() < 1e-6);
        }
        assert!(matches!(ape(&gt[..2], &gt), Err(EvalError::LengthMismatch { pred: 2, gt: 6 })));
        assert!(matches!(ate::<f64>(&[], &[]), Err(EvalError::Empty)));
    }

    #[test]
    fn alignment_recovers_rigid_offset() {
        let traj = generate_trajectory(4, 20, MotionModel::arc()).unwrap().poses;
        let offset = Pose::new(Quaternion::from_axis_angle(&Vector3::y(), 0.3).unwrap(), Vector3::new(1.0, -2.0, 0.5)).unwrap();
        let moved: Vec<Pose<f64>> = traj.iter().map(|p| offset.compose(p)).collect();
        let aligned = align_rigid(&moved, &traj).unwrap();
        assert!(ate(&aligned, &traj).unwrap() < 1e-9);
    }

    fn results_from(traj: &[Pose<f64>], step: usize, noise: f64, seed: u64) -> Vec<PairResult> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..traj.len() - step)
            .map(|i| {
                let gt = relative_pose(&traj[i], &traj[i + step]);
                let q = gt.rotation.to_array();
                let pred = Pose::new(
                    Quaternion::from_array(std::array::from_fn(|k| q[k] + rng.random_range(-noise..=noise))),
                    gt.translation + Vector3::from_fn(|_, _| rng.random_range(-noise..=noise)),
                )
                .unwrap();
                PairResult {
                    pair_id: PairId::new("seq", i, i + step),
                    pred,
                    gt,
                }
            })
            .collect()
    }

    #[test]
    fn report_examples() {
        let empty = run_report("seq", "model", &[], 1, &EvalOptions::default()).unwrap();
        assert_eq!(write_pairs_csv(&empty), "pair_id,dre_deg,dte_deg\n");
        assert_eq!(write_frames_csv(&empty), "frame,ape_m,ape_r_deg\n");
        assert!(write_summary(&empty).contains("\"ate_m\": null"));

        let traj = generate_trajectory(5, 12, MotionModel::random_walk()).unwrap().poses;
        let one = &results_from(&traj, 1, 0.05, 1)[..1];
        let r = run_report("seq", "model", one, 1, &EvalOptions::default()).unwrap();
        assert_eq!(r.summary.dre_mean_deg, Some(r.pairs[0].dre_deg));
        assert_eq!(r.summary.dre_median_deg, Some(r.pairs[0].dre_deg));
        assert_eq!(r.summary.dte_mean_deg, Some(r.pairs[0].dte_deg));

        // Independent aggregation from the emitted CSV text.
        let results = results_from(&traj, 2, 0.05, 2);
        let r = run_report("seq", "model", &results, 2, &EvalOptions::default()).unwrap();
        let rows: Vec<Vec<f64>> = write_pairs_csv(&r)
            .lines()
            .skip(1)
            .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), 10);
        let dre_sum: f64 = rows.iter().map(|r| r[0]).sum();
        assert!((r.summary.dre_mean_deg.unwrap() - dre_sum / 10.0).abs() < 1e-12);
        let mut dtes: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        dtes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((r.summary.dte_median_deg.unwrap() - (dtes[4] + dtes[5]) / 2.0).abs() < 1e-12);
        // Frames 0, 2, …, 10 chained from the non-overlapping pairs.
        let frames: Vec<usize> = r.frames.iter().map(|f| f.frame).collect();
        assert_eq!(frames, vec![0, 2, 4, 6, 8, 10]);
        let apes: Vec<f64> = write_frames_csv(&r)
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        let rms = (apes.iter().map(|a| a * a).sum::<f64>() / apes.len() as f64).sqrt();
        assert!((r.summary.ate_m.unwrap() - rms).abs() < 1e-12);
        for (k, p) in r.gt_trajectory.iter().enumerate() {
            assert!((p.translation - relative_pose(&traj[0], &traj[2 * k]).translation).norm() < 1e-9);
        }
        let table = write_table(&[r]);
        assert_eq!(table.lines().count(), 2);
    }

    proptest! {
        #[test]
        fn dre_is_a_metric(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b, c) = (random_pose(&mut rng), random_pose(&mut rng), random_pose(&mut rng));
            let ab = dre_poses(&a, &b).unwrap();
            prop_assert!((ab - dre_poses(&b, &a).unwrap()).abs() < 1e-9);
            prop_assert!(ab <= dre_poses(&a, &c).unwrap() + dre_poses(&c, &b).unwrap() + 1e-9);
            prop_assert!((0.0..=180.0).contains(&ab));
        }

        #[test]
        fn dte_scale_invariant(seed in any::<u64>(), s1 in 0.01f64..100.0, s2 in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b) = (random_pose(&mut rng).translation, random_pose(&mut rng).translation);
            prop_assert!((dte(&(a * s1), &(b * s2)).0 - dte(&a, &b).0).abs() < 1e-6);
        }

        #[test]
        fn ate_zero_iff_ape_zero(seed in any::<u64>(), perturb in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gt: Vec<Pose<f64>> = (0..5).map(|_| random_pose(&mut rng)).collect();
            let mut pred = gt.clone();
            if perturb {
                pred[3].translation.x += 1e-3;
            }
            let all_zero = ape(&pred, &gt).unwrap().iter().all(|&e| e == 0.0);
            prop_assert_eq!(ate(&pred, &gt).unwrap() == 0.0, all_zero);
        }

        #[test]
        fn nearly_valid_rotations_never_give_nan(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = random_pose(&mut rng).rotation_matrix();
            let jitter = Matrix3::from_fn(|_, _| rng.random_range(-2e-7..2e-7));
            let v = dre(&(r + jitter), &r).unwrap();
            prop_assert!(v.is_finite());
            let v = dre(&r, &r).unwrap();
            prop_assert!(v.is_finite());
        }
    }
}
