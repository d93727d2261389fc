//! Classical essential-matrix estimation: linear constraint assembly,
//! normalized eight-point solve, projection onto the essential manifold,
//! four-fold decomposition and cheirality disambiguation.

use nalgebra::{DMatrix, Matrix3, Matrix4, RowVector4, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geom::{essential_from_pose, sampson_distance, EssentialMatrix, GeomError, NormalizedPoint, Pose};
use crate::Real;

pub type PointPair<T> = (NormalizedPoint<T>, NormalizedPoint<T>);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpipolarError {
    #[error("need at least {needed} correspondences, got {got}")]
    InsufficientCorrespondences { needed: usize, got: usize },
    #[error("degenerate configuration: constraint matrix rank below 8")]
    DegenerateConfiguration,
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
    #[error("matrix is not essential (singular values {0:?})")]
    InvalidEssential([f64; 3]),
    #[error("cheirality tie between candidates {tied:?} ({count} points in front)")]
    AmbiguousCheirality { tied: Vec<usize>, count: usize },
    #[error(transparent)]
    Geom(#[from] GeomError),
}

pub const MIN_PAIRS: usize = 8;

/// `N×9` matrix with `row·vec(E) = x̂₂ᵀ E x̂₁`, `vec` taken row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix<T: Real>(pub DMatrix<T>);

impl<T: Real> ConstraintMatrix<T> {
    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    /// `A·vec(E)`.
    pub fn apply(&self, e: &Matrix3<T>) -> Vec<T> {
        let v = DMatrix::from_iterator(9, 1, e.transpose().iter().copied());
        (&self.0 * v).iter().copied().collect()
    }

    /// Singular values in descending order (length 9; zero-padded when `N < 9`).
    pub fn singular_values(&self) -> Vec<T> {
        let padded = pad_to_square(&self.0);
        let mut s: Vec<T> = padded.singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        s
    }
}

fn pad_to_square<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    if a.nrows() >= 9 {
        return a.clone();
    }
    let mut p = DMatrix::zeros(9, 9);
    p.view_mut((0, 0), (a.nrows(), 9)).copy_from(a);
    p
}

pub fn build_constraint_matrix<T: Real>(pairs: &[PointPair<T>]) -> Result<ConstraintMatrix<T>, EpipolarError> {
    if pairs.len() < MIN_PAIRS {
        return Err(EpipolarError::InsufficientCorrespondences {
            needed: MIN_PAIRS,
            got: pairs.len(),
        });
    }
    Ok(ConstraintMatrix(constraint_rows(pairs)))
}

fn constraint_rows<T: Real>(pairs: &[PointPair<T>]) -> DMatrix<T> {
    let mut a = DMatrix::zeros(pairs.len(), 9);
    for (r, (x1, x2)) in pairs.iter().enumerate() {
        let (u, v) = (x1.vector(), x2.vector());
        for i in 0..3 {
            for j in 0..3 {
                a[(r, 3 * i + j)] = v[i] * u[j];
            }
        }
    }
    a
}

/// Similarity moving the centroid to the origin with mean distance √2.
fn isotropic_transform<T: Real>(pts: impl Iterator<Item = (T, T)> + Clone) -> Matrix3<T> {
    let n = T::from_usize(pts.clone().count()).unwrap_or_else(T::one);
    let (sx, sy) = pts.clone().fold((T::zero(), T::zero()), |(a, b), (x, y)| (a + x, b + y));
    let (cx, cy) = (sx / n, sy / n);
    let mean = pts
        .map(|(x, y)| ((x - cx) * (x - cx) + (y - cy) * (y - cy)).sqrt())
        .fold(T::zero(), |a, d| a + d)
        / n;
    let s = if mean > T::zero() { T::lit(std::f64::consts::SQRT_2) / mean } else { T::one() };
    let z = T::zero();
    Matrix3::new(s, z, -s * cx, z, s, -s * cy, z, z, T::one())
}

/// Normalized eight-point estimate, projected to the essential manifold and
/// canonicalized (unit Frobenius norm, largest entry positive).
pub fn solve_eight_point<T: Real>(pairs: &[PointPair<T>]) -> Result<EssentialMatrix<T>, EpipolarError> {
    if pairs.len() < MIN_PAIRS {
        return Err(EpipolarError::InsufficientCorrespondences {
            needed: MIN_PAIRS,
            got: pairs.len(),
        });
    }
    let t1 = isotropic_transform(pairs.iter().map(|(a, _)| (a.x(), a.y())));
    let t2 = isotropic_transform(pairs.iter().map(|(_, b)| (b.x(), b.y())));
    let conditioned: Vec<PointPair<T>> = pairs
        .iter()
        .map(|(a, b)| {
            let a = NormalizedPoint::from_homogeneous(&(t1 * a.vector())).expect("affine map keeps w = 1");
            let b = NormalizedPoint::from_homogeneous(&(t2 * b.vector())).expect("affine map keeps w = 1");
            (a, b)
        })
        .collect();
    let a = pad_to_square(&constraint_rows(&conditioned));
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(EpipolarError::DegenerateConfiguration)?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let s_max = svd.singular_values[order[0]];
    let s_eighth = svd.singular_values[order[7]];
    if s_max <= T::zero() || s_eighth <= T::lit(1e-9) * s_max {
        return Err(EpipolarError::DegenerateConfiguration);
    }
    let null = v_t.row(order[8]);
    let e_cond = Matrix3::from_row_slice(&null.iter().copied().collect::<Vec<_>>());
    let e = t2.transpose() * e_cond * t1;
    Ok(project_to_essential(&e)?.canonical())
}

/// Nearest matrix with singular values `(s, s, 0)`, `s = (σ₁ + σ₂)/2`.
pub fn project_to_essential<T: Real>(m: &Matrix3<T>) -> Result<EssentialMatrix<T>, EpipolarError> {
    if m.norm() <= T::zero() || !m.iter().all(|v| v.is_finite()) {
        return Err(EpipolarError::InvalidInput("zero or non-finite matrix"));
    }
    let (u, s, v_t) = sorted_svd(m);
    let mean = (s[0] + s[1]) / T::lit(2.0);
    let d = Matrix3::from_diagonal(&Vector3::new(mean, mean, T::zero()));
    Ok(EssentialMatrix(u * d * v_t))
}

/// SVD with singular values sorted descending.
pub(crate) fn sorted_svd<T: Real>(m: &Matrix3<T>) -> (Matrix3<T>, [T; 3], Matrix3<T>) {
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut su = Matrix3::zeros();
    let mut sv = Matrix3::zeros();
    let mut s = [T::zero(); 3];
    for (k, &i) in idx.iter().enumerate() {
        su.set_column(k, &u.column(i));
        sv.set_row(k, &v_t.row(i));
        s[k] = svd.singular_values[i];
    }
    (su, s, sv)
}

/// One rotation / unit-translation hypothesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate<T: Real> {
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> Candidate<T> {
    pub fn to_pose(&self) -> Result<Pose<T>, GeomError> {
        Pose::from_rt(&self.rotation, self.translation)
    }
}

/// The four `(R, ±t)` factorizations of an essential matrix, ordered
/// `(R₁, +u₃), (R₁, −u₃), (R₂, +u₃), (R₂, −u₃)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionCandidates<T: Real> {
    pub candidates: [Candidate<T>; 4],
}

pub fn decompose_essential<T: Real>(e: &EssentialMatrix<T>) -> Result<DecompositionCandidates<T>, EpipolarError> {
    let (mut u, s, mut v_t) = sorted_svd(e.matrix());
    let tol = T::lit(1e-6);
    if s[0] <= T::zero() || (s[0] - s[1]) > tol * s[0] || s[2] > tol * s[0] {
        return Err(EpipolarError::InvalidEssential(s.map(|v| v.to_f64_lossy())));
    }
    if u.determinant() < T::zero() {
        u = -u;
    }
    if v_t.determinant() < T::zero() {
        v_t = -v_t;
    }
    let (z, o) = (T::zero(), T::one());
    let w = Matrix3::new(z, -o, z, o, z, z, z, z, o);
    let r1 = u * w * v_t;
    let r2 = u * w.transpose() * v_t;
    let t: Vector3<T> = u.column(2).into();
    let c = |rotation, translation| Candidate { rotation, translation };
    Ok(DecompositionCandidates {
        candidates: [c(r1, t), c(r1, -t), c(r2, t), c(r2, -t)],
    })
}

/// Two-view DLT triangulation in the first camera frame. `None` for points
/// at infinity.
pub fn triangulate<T: Real>(
    x1: &NormalizedPoint<T>,
    x2: &NormalizedPoint<T>,
    rotation: &Matrix3<T>,
    translation: &Vector3<T>,
) -> Option<Vector3<T>> {
    let p1 = [
        RowVector4::new(T::one(), T::zero(), T::zero(), T::zero()),
        RowVector4::new(T::zero(), T::one(), T::zero(), T::zero()),
        RowVector4::new(T::zero(), T::zero(), T::one(), T::zero()),
    ];
    let row = |i: usize| RowVector4::new(rotation[(i, 0)], rotation[(i, 1)], rotation[(i, 2)], translation[i]);
    let p2 = [row(0), row(1), row(2)];
    let a = Matrix4::from_rows(&[
        p1[2] * x1.x() - p1[0],
        p1[2] * x1.y() - p1[1],
        p2[2] * x2.x() - p2[0],
        p2[2] * x2.y() - p2[1],
    ]);
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let (mut k, mut best) = (0, svd.singular_values[0]);
    for i in 1..4 {
        if svd.singular_values[i] < best {
            best = svd.singular_values[i];
            k = i;
        }
    }
    let x = v_t.row(k);
    if x[3].abs() <= T::default_epsilon() * x.norm() {
        return None;
    }
    Some(Vector3::new(x[0] / x[3], x[1] / x[3], x[2] / x[3]))
}

/// Number of correspondences triangulating in front of both cameras.
pub fn positive_depth_count<T: Real>(c: &Candidate<T>, pairs: &[PointPair<T>]) -> usize {
    pairs
        .iter()
        .filter(|(a, b)| match triangulate(a, b, &c.rotation, &c.translation) {
            Some(p) => p.z > T::zero() && (c.rotation * p + c.translation).z > T::zero(),
            None => false,
        })
        .count()
}

pub fn cheirality_select<T: Real>(
    candidates: &DecompositionCandidates<T>,
    pairs: &[PointPair<T>],
) -> Result<Pose<T>, EpipolarError> {
    if pairs.is_empty() {
        return Err(EpipolarError::InsufficientCorrespondences { needed: 1, got: 0 });
    }
    let counts: Vec<usize> = candidates
        .candidates
        .iter()
        .map(|c| positive_depth_count(c, pairs))
        .collect();
    let max = *counts.iter().max().expect("four candidates");
    let tied: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] == max).collect();
    if tied.len() > 1 {
        return Err(EpipolarError::AmbiguousCheirality { tied, count: max });
    }
    Ok(candidates.candidates[tied[0]].to_pose()?)
}

/// Eight-point → decomposition → cheirality. The translation is unit length.
pub fn recover_pose<T: Real>(pairs: &[PointPair<T>]) -> Result<Pose<T>, EpipolarError> {
    let e = solve_eight_point(pairs)?;
    let candidates = decompose_essential(&e)?;
    cheirality_select(&candidates, pairs)
}

/// Settings of the initial essential-matrix estimate used for graph pruning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct E0Params {
    /// Size of the confidence-ranked seed set.
    pub seed_size: usize,
    /// Number of random eight-point resamples.
    pub iterations: usize,
    /// Sampson inlier threshold.
    pub tau: f64,
    pub seed: u64,
}

impl Default for E0Params {
    fn default() -> Self {
        Self {
            seed_size: 16,
            iterations: 32,
            tau: 1e-4,
            seed: 0,
        }
    }
}

fn inlier_mask<T: Real>(pairs: &[PointPair<T>], e: &EssentialMatrix<T>, tau: T) -> Vec<bool> {
    pairs
        .iter()
        .map(|(a, b)| matches!(sampson_distance(a, b, e), Ok(d) if d < tau))
        .collect()
}

/// Initial essential matrix: eight-point on the `seed_size` most confident
/// pairs, challenged by `iterations` eight-pair resamples from the top
/// `2·seed_size`, scored by Sampson inlier count. Ties keep the earlier
/// hypothesis, so the seed solve wins unless strictly beaten. Deterministic
/// for a given seed.
pub fn estimate_e0<T: Real>(
    pairs: &[PointPair<T>],
    confidences: &[T],
    params: &E0Params,
) -> Result<EssentialMatrix<T>, EpipolarError> {
    if pairs.len() < MIN_PAIRS {
        return Err(EpipolarError::InsufficientCorrespondences {
            needed: MIN_PAIRS,
            got: pairs.len(),
        });
    }
    if confidences.len() != pairs.len() {
        return Err(EpipolarError::InvalidInput("confidence count differs from pair count"));
    }
    let tau = T::lit(params.tau);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&i, &j| {
        confidences[j]
            .partial_cmp(&confidences[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let pick = |idx: &[usize]| -> Vec<PointPair<T>> { idx.iter().map(|&i| pairs[i]).collect() };
    let score = |e: &EssentialMatrix<T>| inlier_mask(pairs, e, tau).iter().filter(|&&b| b).count();

    let mut best: Option<(EssentialMatrix<T>, usize)> = None;
    let consider = |e: EssentialMatrix<T>, best: &mut Option<(EssentialMatrix<T>, usize)>| {
        let s = score(&e);
        if best.as_ref().is_none_or(|(_, b)| s > *b) {
            *best = Some((e, s));
        }
    };

    let seed_n = params.seed_size.clamp(MIN_PAIRS, pairs.len());
    if let Ok(e) = solve_eight_point(&pick(&order[..seed_n])) {
        consider(e, &mut best);
    }
    let pool = (2 * params.seed_size).clamp(MIN_PAIRS, pairs.len());
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    for _ in 0..params.iterations {
        let subset: Vec<usize> = sample(&mut rng, pool, MIN_PAIRS).into_iter().map(|k| order[k]).collect();
        if let Ok(e) = solve_eight_point(&pick(&subset)) {
            consider(e, &mut best);
        }
    }
    best.map(|(e, _)| e).ok_or(EpipolarError::DegenerateConfiguration)
}

/// Canonicalized essential matrix of a pose, for comparisons with estimates.
pub fn canonical_essential<T: Real>(pose: &Pose<T>) -> EssentialMatrix<T> {
    essential_from_pose(pose).canonical()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{epipolar_residual, Quaternion};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    /// Noiseless correspondences of random points seen by `[I|0]` and `pose`.
    fn scene(pose: &Pose<f64>, n: usize, seed: u64) -> Vec<PointPair<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        while out.len() < n {
            let p = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-1.5..1.5), rng.random_range(2.0..8.0));
            let q = pose.transform_point(&p);
            if q.z > 0.1 {
                out.push((
                    NormalizedPoint::new(p.x / p.z, p.y / p.z),
                    NormalizedPoint::new(q.x / q.z, q.y / q.z),
                ));
            }
        }
        out
    }

    fn random_pose(seed: u64) -> Pose<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let q = Quaternion::from_axis_angle(&axis, rng.random_range(0.0..0.4)).unwrap();
        let t = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5), rng.random_range(-1.0..1.0));
        Pose::new(q, t).unwrap()
    }

    #[test]
    fn constraint_rows_reproduce_residuals() {
        let pose = random_pose(1);
        let pairs = scene(&pose, 8, 2);
        let a = build_constraint_matrix(&pairs).unwrap();
        let gt = essential_from_pose(&pose);
        let r = a.apply(gt.matrix());
        assert!(r.iter().all(|v| v.abs() < 1e-10));
        // Arbitrary matrix: rows are the bilinear form.
        let m = Matrix3::new(0.3, -1.0, 2.0, 0.5, 0.1, -0.7, 1.1, 0.0, 0.4);
        for (row, (x1, x2)) in a.apply(&m).iter().zip(&pairs) {
            assert_abs_diff_eq!(*row, epipolar_residual(x1, x2, &EssentialMatrix(m)), epsilon = 1e-12);
        }
    }

    #[test]
    fn constraint_matrix_rank_properties() {
        let pairs = scene(&random_pose(3), 10, 4);
        let a = build_constraint_matrix(&pairs).unwrap();
        let rank = |s: &[f64]| s.iter().filter(|v| **v > 1e-10 * s[0]).count();
        let r0 = rank(&a.singular_values());
        let mut dup = pairs.clone();
        dup.extend_from_slice(&pairs[..3]);
        assert_eq!(rank(&build_constraint_matrix(&dup).unwrap().singular_values()), r0);
        let center = vec![(NormalizedPoint::new(0.0, 0.0), NormalizedPoint::new(0.0, 0.0)); 9];
        assert_eq!(rank(&build_constraint_matrix(&center).unwrap().singular_values()), 1);
        assert!(matches!(
            build_constraint_matrix(&pairs[..7]),
            Err(EpipolarError::InsufficientCorrespondences { needed: 8, got: 7 })
        ));
    }

    #[test]
    fn eight_point_recovers_ground_truth() {
        for seed in 0..20 {
            let pose = random_pose(seed);
            let pairs = scene(&pose, 8 + seed as usize, seed + 100);
            let e = solve_eight_point(&pairs).unwrap();
            let gt = essential_from_pose(&pose);
            assert!(e.distance_up_to_scale(&gt) < 1e-6, "seed {seed}");
            assert_abs_diff_eq!(e.frobenius(), 1.0, epsilon = 1e-12);
            // Nullspace fidelity.
            let a = build_constraint_matrix(&pairs).unwrap();
            let s = a.singular_values();
            assert!(s[8] < 1e-8 * s[0]);
            assert!(a.apply(e.matrix()).iter().all(|r| r.abs() < 1e-6));
        }
    }

    #[test]
    fn pure_rotation_is_degenerate() {
        let pose = Pose::new(Quaternion::from_axis_angle(&Vector3::y(), 0.2).unwrap(), Vector3::zeros()).unwrap();
        let pairs = scene(&pose, 30, 5);
        assert_eq!(solve_eight_point(&pairs), Err(EpipolarError::DegenerateConfiguration));
    }

    #[test]
    fn projection_cases() {
        let e = essential_from_pose(&random_pose(9));
        assert_abs_diff_eq!(project_to_essential(e.matrix()).unwrap().0, e.0, epsilon = 1e-10);
        let p = project_to_essential(&Matrix3::<f64>::identity()).unwrap();
        let s = p.singular_values();
        assert_abs_diff_eq!(s[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s[2], 0.0, epsilon = 1e-12);
        assert!(project_to_essential(&Matrix3::<f64>::zeros()).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let m = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let p = project_to_essential(&m).unwrap();
            let s = p.singular_values();
            let oracle = m.singular_values();
            let mut o: [f64; 3] = [oracle[0], oracle[1], oracle[2]];
            o.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert_abs_diff_eq!(s[0], (o[0] + o[1]) / 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(s[1], s[0], epsilon = 1e-12);
            assert!(s[2] < 1e-12);
            let pp = project_to_essential(p.matrix()).unwrap();
            assert_abs_diff_eq!(pp.0, p.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn decomposition_contains_ground_truth() {
        let fwd = Pose::new(Quaternion::identity(), Vector3::new(0.0, 0.0, 1.0)).unwrap();
        let c = decompose_essential(&essential_from_pose(&fwd)).unwrap();
        assert!(c.candidates.iter().any(|c| {
            (c.rotation - Matrix3::identity()).abs().max() < 1e-8
                && (c.translation - Vector3::z()).abs().max() < 1e-8
        }));
        for seed in 0..30 {
            let pose = random_pose(seed);
            let e = essential_from_pose(&pose);
            let c = decompose_essential(&e).unwrap();
            let t = pose.translation.normalize();
            let r = pose.rotation_matrix();
            assert!(c.candidates.iter().any(|c| {
                (c.rotation - r).abs().max() < 1e-6 && (c.translation - t).abs().max() < 1e-6
            }));
            assert_eq!(c.candidates[0].translation, -c.candidates[1].translation);
            assert_eq!(c.candidates[2].translation, -c.candidates[3].translation);
            for cand in &c.candidates {
                assert_abs_diff_eq!(cand.rotation.determinant(), 1.0, epsilon = 1e-9);
                let back = EssentialMatrix(crate::geom::skew(&cand.translation) * cand.rotation);
                assert!(back.distance_up_to_scale(&e) < 1e-6);
            }
        }
        assert!(matches!(
            decompose_essential(&EssentialMatrix(Matrix3::<f64>::identity())),
            Err(EpipolarError::InvalidEssential(_))
        ));
    }

    #[test]
    fn cheirality_selects_ground_truth() {
        for seed in 0..20 {
            let pose = random_pose(seed);
            let pairs = scene(&pose, 40, seed);
            let e = essential_from_pose(&pose);
            let c = decompose_essential(&e).unwrap();
            let best = cheirality_select(&c, &pairs).unwrap();
            assert!((best.rotation_matrix() - pose.rotation_matrix()).abs().max() < 1e-8);
            assert!((best.translation - pose.translation.normalize()).norm() < 1e-8);
            let full = c
                .candidates
                .iter()
                .map(|c| positive_depth_count(c, &pairs))
                .max()
                .unwrap();
            assert_eq!(full, pairs.len());
        }
    }

    #[test]
    fn cheirality_with_point_behind_returns_a_maximal_candidate() {
        let pose = random_pose(4);
        let mut pairs = scene(&pose, 12, 6);
        // Mirror one correspondence so it triangulates behind the cameras.
        let (a, b) = pairs[0];
        pairs[0] = (NormalizedPoint::new(-a.x(), -a.y()), b);
        let c = decompose_essential(&essential_from_pose(&pose)).unwrap();
        let chosen = cheirality_select(&c, &pairs).unwrap();
        let counts: Vec<usize> = c.candidates.iter().map(|c| positive_depth_count(c, &pairs)).collect();
        let max = *counts.iter().max().unwrap();
        let idx = c
            .candidates
            .iter()
            .position(|c| (c.rotation - chosen.rotation_matrix()).abs().max() < 1e-9 && (c.translation - chosen.translation).norm() < 1e-9)
            .unwrap();
        assert_eq!(counts[idx], max);
    }

    #[test]
    fn cheirality_tie_is_an_error() {
        let pose = random_pose(2);
        let pairs = scene(&pose, 10, 3);
        let c = decompose_essential(&essential_from_pose(&pose)).unwrap();
        let same = DecompositionCandidates {
            candidates: [c.candidates[0]; 4],
        };
        match cheirality_select(&same, &pairs) {
            Err(EpipolarError::AmbiguousCheirality { tied, .. }) => assert_eq!(tied, vec![0, 1, 2, 3]),
            other => panic!("expected tie, got {other:?}"),
        }
    }

    #[test]
    fn e0_on_exact_inliers_matches_full_solve() {
        let pose = random_pose(12);
        let pairs = scene(&pose, 60, 13);
        let conf = vec![1.0; pairs.len()];
        let e0 = estimate_e0(&pairs, &conf, &E0Params::default()).unwrap();
        let full = solve_eight_point(&pairs).unwrap();
        assert!((e0.0 - full.0).abs().max() < 1e-6);
        assert!(matches!(
            estimate_e0(&pairs[..7], &conf[..7], &E0Params::default()),
            Err(EpipolarError::InsufficientCorrespondences { .. })
        ));
    }

    #[test]
    fn e0_survives_heavy_outliers() {
        let pose = random_pose(21);
        let mut pairs = scene(&pose, 30, 22);
        let mut conf = vec![1.0; 30];
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..70 {
            pairs.push((
                NormalizedPoint::new(rng.random_range(-0.6..0.6), rng.random_range(-0.5..0.5)),
                NormalizedPoint::new(rng.random_range(-0.6..0.6), rng.random_range(-0.5..0.5)),
            ));
            conf.push(rng.random_range(0.0..0.5));
        }
        let e0 = estimate_e0(&pairs, &conf, &E0Params::default()).unwrap();
        assert!(e0.distance_up_to_scale(&essential_from_pose(&pose)) < 1e-4);
        // Deterministic.
        assert_eq!(e0, estimate_e0(&pairs, &conf, &E0Params::default()).unwrap());
    }

    #[test]
    fn end_to_end_recovery_is_exact() {
        for seed in 0..10 {
            let pose = random_pose(seed + 40);
            let pairs = scene(&pose, 20, seed);
            let est = recover_pose(&pairs).unwrap();
            let dre = (est.rotation.dot(&pose.rotation).abs().min(1.0).acos() * 2.0).to_degrees();
            let cos = est.translation.normalize().dot(&pose.translation.normalize()).clamp(-1.0, 1.0);
            assert!(dre < 1e-4, "dre {dre}");
            assert!(cos.acos().to_degrees() < 1e-4);
        }
    }
}
