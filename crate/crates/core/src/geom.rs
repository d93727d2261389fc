//! Rigid-body and two-view primitives: quaternions, poses, intrinsics,
//! essential matrices and the epipolar residuals built on them.
//!
//! Relative poses follow the two-view convention `X₂ = R·X₁ + t`: a pose maps
//! coordinates expressed in the first camera frame into the second one, so
//! that `x̂₂ᵀ [t]× R x̂₁ = 0` holds for every noiseless correspondence.

use nalgebra::{Matrix3, Vector2, Vector3};
use thiserror::Error;

use crate::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("quaternion has zero norm")]
    ZeroNorm,
    #[error("matrix is not a proper rotation (orthogonality error {orthogonality:.3e}, det {det:.6})")]
    InvalidRotation { orthogonality: f64, det: f64 },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("degenerate epipolar geometry: Sampson denominator {0:.3e}")]
    DegenerateGeometry(f64),
}

/// Tolerance used to accept externally supplied rotations.
fn rotation_tolerance<T: Real>() -> T {
    T::lit(1e-6).max(T::default_epsilon() * T::lit(100.0))
}

/// Unit quaternion, `w` first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion<T> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Quaternion<T> {
    pub fn new(w: T, x: T, y: T, z: T) -> Self {
        Self { w, x, y, z }
    }

    pub fn identity() -> Self {
        Self::new(T::one(), T::zero(), T::zero(), T::zero())
    }

    pub fn from_array(v: [T; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_array(self) -> [T; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: &Vector3<T>, angle: T) -> Result<Self, GeomError> {
        let n = axis.norm();
        if n <= T::zero() {
            return Err(GeomError::ZeroNorm);
        }
        let half = angle / T::lit(2.0);
        let s = half.sin() / n;
        Ok(Self::new(half.cos(), axis.x * s, axis.y * s, axis.z * s))
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn dot(&self, other: &Self) -> T {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn normalized(&self) -> Result<Self, GeomError> {
        let n = self.norm();
        if n <= T::zero() || !n.is_finite() {
            return Err(GeomError::ZeroNorm);
        }
        Ok(self.scale(T::one() / n))
    }

    pub fn scale(&self, s: T) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn neg(&self) -> Self {
        self.scale(-T::one())
    }

    /// Representative of the same rotation with `w ≥ 0`.
    pub fn canonical(&self) -> Self {
        if self.w < T::zero() {
            self.neg()
        } else {
            *self
        }
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product `self ⊗ rhs`.
    pub fn mul(&self, rhs: &Self) -> Self {
        let (a1, b1, c1, d1) = (self.w, self.x, self.y, self.z);
        let (a2, b2, c2, d2) = (rhs.w, rhs.x, rhs.y, rhs.z);
        Self::new(
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        )
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn angle(&self) -> T {
        let w = self.w.abs().min(T::one());
        T::lit(2.0) * w.acos()
    }
}

/// Rotation matrix of a unit quaternion. Inputs off the unit sphere by more
/// than 1e-6 are renormalized first.
pub fn quat_to_rot<T: Real>(q: &Quaternion<T>) -> Result<Matrix3<T>, GeomError> {
    let n = q.norm();
    if n <= T::zero() || !n.is_finite() {
        return Err(GeomError::ZeroNorm);
    }
    let q = if (n - T::one()).abs() > T::lit(1e-6) {
        q.scale(T::one() / n)
    } else {
        *q
    };
    Ok(unit_quat_to_rot(&q))
}

/// Polynomial rotation formula; assumes `q` is already unit length.
pub fn unit_quat_to_rot<T: Real>(q: &Quaternion<T>) -> Matrix3<T> {
    let two = T::lit(2.0);
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    Matrix3::new(
        T::one() - two * (y * y + z * z),
        two * (x * y - w * z),
        two * (x * z + w * y),
        two * (x * y + w * z),
        T::one() - two * (x * x + z * z),
        two * (y * z - w * x),
        two * (x * z - w * y),
        two * (y * z + w * x),
        T::one() - two * (x * x + y * y),
    )
}

/// Derivatives of [`unit_quat_to_rot`] with respect to `(w, x, y, z)`.
pub fn unit_quat_to_rot_jacobian<T: Real>(q: &Quaternion<T>) -> [Matrix3<T>; 4] {
    let two = T::lit(2.0);
    let zero = T::zero();
    let (w, x, y, z) = (q.w * two, q.x * two, q.y * two, q.z * two);
    let dw = Matrix3::new(zero, -z, y, z, zero, -x, -y, x, zero);
    let dx = Matrix3::new(zero, y, z, y, -two * x, -w, z, w, -two * x);
    let dy = Matrix3::new(-two * y, x, w, x, zero, z, -w, z, -two * y);
    let dz = Matrix3::new(-two * z, -w, x, w, -two * z, y, x, y, zero);
    [dw, dx, dy, dz]
}

pub fn is_rotation<T: Real>(r: &Matrix3<T>) -> Result<(), GeomError> {
    let orth = (r.transpose() * r - Matrix3::identity()).abs().max();
    let det = r.determinant();
    let tol = rotation_tolerance::<T>();
    if orth > tol || (det - T::one()).abs() > tol {
        return Err(GeomError::InvalidRotation {
            orthogonality: orth.to_f64_lossy(),
            det: det.to_f64_lossy(),
        });
    }
    Ok(())
}

/// Unit quaternion of a rotation matrix, canonicalized to `w ≥ 0`.
pub fn rot_to_quat<T: Real>(r: &Matrix3<T>) -> Result<Quaternion<T>, GeomError> {
    is_rotation(r)?;
    let one = T::one();
    let two = T::lit(2.0);
    let quarter = T::lit(0.25);
    let trace = r.trace();
    // Shepperd: pivot on the largest of w², x², y², z².
    let q = if trace > r[(0, 0)] && trace > r[(1, 1)] && trace > r[(2, 2)] {
        let s = (trace + one).sqrt() * two;
        Quaternion::new(
            quarter * s,
            (r[(2, 1)] - r[(1, 2)]) / s,
            (r[(0, 2)] - r[(2, 0)]) / s,
            (r[(1, 0)] - r[(0, 1)]) / s,
        )
    } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
        let s = (one + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * two;
        Quaternion::new(
            (r[(2, 1)] - r[(1, 2)]) / s,
            quarter * s,
            (r[(0, 1)] + r[(1, 0)]) / s,
            (r[(0, 2)] + r[(2, 0)]) / s,
        )
    } else if r[(1, 1)] > r[(2, 2)] {
        let s = (one + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * two;
        Quaternion::new(
            (r[(0, 2)] - r[(2, 0)]) / s,
            (r[(0, 1)] + r[(1, 0)]) / s,
            quarter * s,
            (r[(1, 2)] + r[(2, 1)]) / s,
        )
    } else {
        let s = (one + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * two;
        Quaternion::new(
            (r[(1, 0)] - r[(0, 1)]) / s,
            (r[(0, 2)] + r[(2, 0)]) / s,
            (r[(1, 2)] + r[(2, 1)]) / s,
            quarter * s,
        )
    };
    Ok(q.normalized()?.canonical())
}

/// Rigid transform `X ↦ R·X + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T> {
    pub rotation: Quaternion<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> Pose<T> {
    /// Builds a pose, normalizing the rotation onto the `w ≥ 0` hemisphere.
    pub fn new(rotation: Quaternion<T>, translation: Vector3<T>) -> Result<Self, GeomError> {
        Ok(Self {
            rotation: rotation.normalized()?.canonical(),
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Quaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_rt(r: &Matrix3<T>, t: Vector3<T>) -> Result<Self, GeomError> {
        Ok(Self {
            rotation: rot_to_quat(r)?,
            translation: t,
        })
    }

    pub fn rotation_matrix(&self) -> Matrix3<T> {
        unit_quat_to_rot(&self.rotation)
    }

    pub fn transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation_matrix() * p + self.translation
    }

    /// `self ∘ rhs`: applies `rhs` first.
    pub fn compose(&self, rhs: &Self) -> Self {
        let r = self.rotation_matrix();
        let q = self.rotation.mul(&rhs.rotation);
        let q = q.normalized().unwrap_or_else(|_| Quaternion::identity());
        Self {
            rotation: q.canonical(),
            translation: r * rhs.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation_matrix().transpose();
        Self {
            rotation: self.rotation.conjugate().canonical(),
            translation: -(rt * self.translation),
        }
    }
}

/// `Tᵢ⁻¹ ∘ Tⱼ`, so that `Tᵢ ∘ relative_pose(Tᵢ, Tⱼ) = Tⱼ`.
pub fn relative_pose<T: Real>(ti: &Pose<T>, tj: &Pose<T>) -> Pose<T> {
    ti.inverse().compose(tj)
}

/// Pinhole intrinsics without skew.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
}

impl<T: Real> Intrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T) -> Result<Self, GeomError> {
        let k = Self { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        let finite = self.fx.is_finite() && self.fy.is_finite() && self.cx.is_finite() && self.cy.is_finite();
        if !finite || self.fx <= T::zero() || self.fy <= T::zero() {
            return Err(GeomError::InvalidIntrinsics(format!(
                "fx={}, fy={}, cx={}, cy={}",
                self.fx, self.fy, self.cx, self.cy
            )));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<T> {
        let (o, z) = (T::one(), T::zero());
        Matrix3::new(self.fx, z, self.cx, z, self.fy, self.cy, z, z, o)
    }

    /// `K⁻¹·(px, py, 1)`.
    pub fn normalize(&self, p: &Vector2<T>) -> Result<NormalizedPoint<T>, GeomError> {
        self.validate()?;
        Ok(NormalizedPoint::new((p.x - self.cx) / self.fx, (p.y - self.cy) / self.fy))
    }

    /// Pixel coordinates of a camera-frame point; `None` when `z ≤ 0`.
    pub fn project(&self, p: &Vector3<T>) -> Option<Vector2<T>> {
        if p.z <= T::zero() {
            return None;
        }
        Some(Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }
}

pub fn normalize_pixel<T: Real>(p: &Vector2<T>, k: &Intrinsics<T>) -> Result<NormalizedPoint<T>, GeomError> {
    k.normalize(p)
}

/// Homogeneous normalized image point with unit third component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedPoint<T: Real>(Vector3<T>);

impl<T: Real> NormalizedPoint<T> {
    pub fn new(x: T, y: T) -> Self {
        Self(Vector3::new(x, y, T::one()))
    }

    /// Dehomogenizes `v`; `None` when the third component vanishes.
    pub fn from_homogeneous(v: &Vector3<T>) -> Option<Self> {
        if v.z == T::zero() {
            return None;
        }
        Some(Self::new(v.x / v.z, v.y / v.z))
    }

    pub fn x(&self) -> T {
        self.0.x
    }

    pub fn y(&self) -> T {
        self.0.y
    }

    pub fn vector(&self) -> &Vector3<T> {
        &self.0
    }
}

/// 3×3 essential matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssentialMatrix<T: Real>(pub Matrix3<T>);

impl<T: Real> EssentialMatrix<T> {
    pub fn matrix(&self) -> &Matrix3<T> {
        &self.0
    }

    pub fn frobenius(&self) -> T {
        self.0.norm()
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> [T; 3] {
        let s = self.0.singular_values();
        let mut v = [s[0], s[1], s[2]];
        v.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        v
    }

    /// Unit Frobenius norm with the largest-magnitude entry made positive.
    /// The zero matrix is returned unchanged.
    pub fn canonical(&self) -> Self {
        let n = self.frobenius();
        if n <= T::zero() {
            return *self;
        }
        let mut best = self.0[0];
        for v in self.0.iter() {
            if v.abs() > best.abs() {
                best = *v;
            }
        }
        let s = if best < T::zero() { -T::one() } else { T::one() } / n;
        Self(self.0 * s)
    }

    /// `min(‖Â − B̂‖_F, ‖Â + B̂‖_F)` between Frobenius-normalized matrices.
    pub fn distance_up_to_scale(&self, other: &Self) -> T {
        let na = self.frobenius();
        let nb = other.frobenius();
        if na <= T::zero() || nb <= T::zero() {
            return (self.0 - other.0).norm();
        }
        let a = self.0 / na;
        let b = other.0 / nb;
        (a - b).norm().min((a + b).norm())
    }
}

/// `[t]×` such that `[t]×·v = t × v`.
pub fn skew<T: Real>(t: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -t.z, t.y, t.z, z, -t.x, -t.y, t.x, z)
}

/// `E = [t]×·R`. A zero translation yields the (degenerate) zero matrix.
pub fn essential_from_pose<T: Real>(pose: &Pose<T>) -> EssentialMatrix<T> {
    EssentialMatrix(skew(&pose.translation) * pose.rotation_matrix())
}

/// `x̂₂ᵀ·E·x̂₁`.
pub fn epipolar_residual<T: Real>(x1: &NormalizedPoint<T>, x2: &NormalizedPoint<T>, e: &EssentialMatrix<T>) -> T {
    x2.vector().dot(&(e.0 * x1.vector()))
}

/// Which norm enters the Sampson denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampsonDenominator {
    /// First two components of `E·x̂₁` and `Eᵀ·x̂₂` (classical first-order form).
    #[default]
    TwoComponent,
    /// Full 3-vector norms.
    Full,
}

impl SampsonDenominator {
    pub fn name(&self) -> &'static str {
        match self {
            SampsonDenominator::TwoComponent => "two-component",
            SampsonDenominator::Full => "full",
        }
    }
}

pub fn sampson_distance<T: Real>(
    x1: &NormalizedPoint<T>,
    x2: &NormalizedPoint<T>,
    e: &EssentialMatrix<T>,
) -> Result<T, GeomError> {
    sampson_distance_with(x1, x2, e, SampsonDenominator::TwoComponent)
}

pub fn sampson_distance_with<T: Real>(
    x1: &NormalizedPoint<T>,
    x2: &NormalizedPoint<T>,
    e: &EssentialMatrix<T>,
    mode: SampsonDenominator,
) -> Result<T, GeomError> {
    let ex1 = e.0 * x1.vector();
    let etx2 = e.0.transpose() * x2.vector();
    let r = x2.vector().dot(&ex1);
    let denom = match mode {
        SampsonDenominator::TwoComponent => {
            ex1.x * ex1.x + ex1.y * ex1.y + etx2.x * etx2.x + etx2.y * etx2.y
        }
        SampsonDenominator::Full => ex1.norm_squared() + etx2.norm_squared(),
    };
    if denom < T::lit(1e-18) {
        return Err(GeomError::DegenerateGeometry(denom.to_f64_lossy()));
    }
    Ok(r * r / denom)
}

/// Heading angle under the ZYX (yaw-pitch-roll) convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Yaw<T> {
    /// Radians in `(−π, π]`.
    pub angle: T,
    /// Pitch is within 1e-9 of ±π/2, where yaw and roll are not separable.
    pub gimbal_lock: bool,
}

pub fn yaw_of<T: Real>(q: &Quaternion<T>) -> Result<Yaw<T>, GeomError> {
    let r = quat_to_rot(q)?;
    Ok(yaw_of_matrix(&r))
}

pub fn yaw_of_matrix<T: Real>(r: &Matrix3<T>) -> Yaw<T> {
    let mut angle = r[(1, 0)].atan2(r[(0, 0)]);
    if angle <= -T::pi() {
        angle = T::pi();
    }
    Yaw {
        angle,
        gimbal_lock: r[(2, 0)].abs() >= T::one() - T::lit(1e-9),
    }
}

/// Wraps an angle difference into `(−π, π]`.
pub fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::two_pi();
    let mut v = a % two_pi;
    if v > T::pi() {
        v -= two_pi;
    } else if v <= -T::pi() {
        v += two_pi;
    }
    v
}
