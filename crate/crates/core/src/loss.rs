//! Composite pose objective: quaternion, translation direction and scale,
//! Frobenius alignment of the essential matrix, its spectral regularizer and
//! yaw, each with an analytic gradient with respect to the network outputs.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::geom::{skew, unit_quat_to_rot, unit_quat_to_rot_jacobian, wrap_angle, Pose, Quaternion};
use crate::nn::{Prediction, PredictionGrad};
use crate::Real;

const UNIT_TOLERANCE: f64 = 1e-6;
const GAP_GUARD: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("{which} quaternion has norm {norm}, expected 1")]
    NonUnit { which: &'static str, norm: f64 },
    #[error("ground-truth translation has zero norm")]
    ZeroTranslation,
    #[error("loss weight {name} = {value} must be finite and nonnegative")]
    InvalidWeight { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuatNorm {
    L1,
    #[default]
    L2,
}

impl QuatNorm {
    pub fn name(self) -> &'static str {
        match self {
            QuatNorm::L1 => "l1",
            QuatNorm::L2 => "l2",
        }
    }
}

impl fmt::Display for QuatNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QuatNorm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(QuatNorm::L1),
            "l2" => Ok(QuatNorm::L2),
            _ => Err(format!("unknown quaternion norm {s:?} (expected l1 or l2)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub pose: f64,
    pub frob: f64,
    pub svd: f64,
    pub yaw: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            pose: 1.0,
            frob: 1.0,
            svd: 1.0,
            yaw: 1.0,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            pose: 0.0,
            frob: 0.0,
            svd: 0.0,
            yaw: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        for (name, value) in [("pose", self.pose), ("frob", self.frob), ("svd", self.svd), ("yaw", self.yaw)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(LossError::InvalidWeight { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossConfig {
    pub weights: LossWeights,
    pub quat_norm: QuatNorm,
    /// Compare essential matrices built from unit translations.
    pub normalized_essential: bool,
}

/// Ground-truth relative pose with its essential matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth<T: Real> {
    pub pose: Pose<T>,
    /// `[t]×R` from the full translation.
    pub essential: Matrix3<T>,
    /// `[t/‖t‖]×R`.
    pub essential_unit: Matrix3<T>,
}

impl<T: Real> GroundTruth<T> {
    pub fn new(pose: Pose<T>) -> Result<Self, LossError> {
        let n = pose.translation.norm();
        if n <= T::zero() {
            return Err(LossError::ZeroTranslation);
        }
        let r = pose.rotation_matrix();
        Ok(Self {
            pose,
            essential: skew(&pose.translation) * r,
            essential_unit: skew(&(pose.translation / n)) * r,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown<T> {
    pub quat: T,
    pub t_dir: T,
    pub t_scale: T,
    pub frob: T,
    pub svd: T,
    pub yaw: T,
    pub total: T,
    /// The predicted translation had zero norm and `t_dir` was set to 1.
    pub degenerate_translation: bool,
}

impl<T: Real> LossBreakdown<T> {
    pub fn pose(&self) -> T {
        self.quat + self.t_dir + self.t_scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    Quat,
    TDir,
    TScale,
    Frob,
    Svd,
    Yaw,
}

impl Term {
    pub const ALL: [Term; 6] = [Term::Quat, Term::TDir, Term::TScale, Term::Frob, Term::Svd, Term::Yaw];

    pub fn name(self) -> &'static str {
        match self {
            Term::Quat => "quat",
            Term::TDir => "t_dir",
            Term::TScale => "t_scale",
            Term::Frob => "frob",
            Term::Svd => "svd",
            Term::Yaw => "yaw",
        }
    }
}

fn check_unit<T: Real>(q: &Quaternion<T>, which: &'static str) -> Result<(), LossError> {
    let norm = q.norm().to_f64_lossy();
    if (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(LossError::NonUnit { which, norm });
    }
    Ok(())
}

pub fn quat_loss<T: Real>(q_pred: &Quaternion<T>, q_gt: &Quaternion<T>, norm: QuatNorm) -> Result<T, LossError> {
    check_unit(q_pred, "predicted")?;
    check_unit(q_gt, "ground-truth")?;
    Ok(quat_term(q_pred, q_gt, norm).0)
}

/// Value and gradient with respect to `q_pred`; the hemisphere sign is held fixed.
fn quat_term<T: Real>(q_pred: &Quaternion<T>, q_gt: &Quaternion<T>, norm: QuatNorm) -> (T, [T; 4]) {
    let sign = if q_pred.dot(q_gt) >= T::zero() { T::one() } else { -T::one() };
    let (p, g) = (q_pred.to_array(), q_gt.to_array());
    let d: [T; 4] = std::array::from_fn(|k| sign * p[k] - g[k]);
    match norm {
        QuatNorm::L2 => {
            let n = d.iter().fold(T::zero(), |a, &x| a + x * x).sqrt();
            if n <= T::zero() {
                return (n, [T::zero(); 4]);
            }
            (n, std::array::from_fn(|k| sign * d[k] / n))
        }
        QuatNorm::L1 => {
            let v = d.iter().fold(T::zero(), |a, &x| a + x.abs());
            (v, std::array::from_fn(|k| sign * signum0(d[k])))
        }
    }
}

fn signum0<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// `1 − cos∠(t_pred, t_gt)`; a zero prediction yields 1 and the flag.
pub fn t_dir_loss<T: Real>(t_pred: &Vector3<T>, t_gt: &Vector3<T>) -> (T, bool) {
    let (v, _, degenerate) = t_dir_term(t_pred, t_gt);
    (v, degenerate)
}

fn t_dir_term<T: Real>(t: &Vector3<T>, g: &Vector3<T>) -> (T, Vector3<T>, bool) {
    let (nt, ng) = (t.norm(), g.norm());
    if nt <= T::zero() || ng <= T::zero() {
        return (T::one(), Vector3::zeros(), nt <= T::zero());
    }
    let (u, w) = (t / nt, g / ng);
    let c = u.dot(&w);
    (T::one() - c, -(w - u * c) / nt, false)
}

pub fn t_scale_loss<T: Real>(t_pred: &Vector3<T>, t_gt: &Vector3<T>) -> T {
    t_scale_term(t_pred, t_gt).0
}

fn t_scale_term<T: Real>(t: &Vector3<T>, g: &Vector3<T>) -> (T, Vector3<T>) {
    let nt = t.norm();
    let d = nt - g.norm();
    let grad = if nt > T::zero() { t * (signum0(d) / nt) } else { Vector3::zeros() };
    (d.abs(), grad)
}

/// `‖[t]×R(q) − E_gt‖_F`.
pub fn frob_loss<T: Real>(q_pred: &Quaternion<T>, t_pred: &Vector3<T>, e_gt: &Matrix3<T>) -> T {
    frob_term(q_pred, t_pred, e_gt).0
}

fn frob_term<T: Real>(q: &Quaternion<T>, t: &Vector3<T>, e_gt: &Matrix3<T>) -> (T, [T; 4], Vector3<T>) {
    let r = unit_quat_to_rot(q);
    let diff = skew(t) * r - e_gt;
    let l = diff.norm();
    if l <= T::zero() {
        return (l, [T::zero(); 4], Vector3::zeros());
    }
    let g = diff / l;
    let (dq, dt) = chain_essential(q, t, &r, &g);
    (l, dq, dt)
}

/// Pulls `dL/dE` for `E = [t]×R(q)` back to `q` and `t`.
fn chain_essential<T: Real>(q: &Quaternion<T>, t: &Vector3<T>, r: &Matrix3<T>, g: &Matrix3<T>) -> ([T; 4], Vector3<T>) {
    let d_r = skew(t).transpose() * g;
    let jac = unit_quat_to_rot_jacobian(q);
    let dq = std::array::from_fn(|k| jac[k].component_mul(&d_r).sum());
    let dt = Vector3::from_fn(|k, _| (skew(&Vector3::ith(k, T::one())) * r).component_mul(g).sum());
    (dq, dt)
}

fn sorted_svd<T: Real>(m: &Matrix3<T>) -> ([T; 3], [Vector3<T>; 3], [Vector3<T>; 3]) {
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap_or(std::cmp::Ordering::Equal));
    (
        idx.map(|i| svd.singular_values[i]),
        idx.map(|i| u.column(i).into_owned()),
        idx.map(|i| vt.row(i).transpose()),
    )
}

/// `(σ₁ − σ₂)² + σ₃²` of an arbitrary matrix, with its gradient.
pub fn svd_loss_matrix<T: Real>(m: &Matrix3<T>) -> (T, Matrix3<T>) {
    let (s, u, v) = sorted_svd(m);
    let gap = s[0] - s[1];
    let value = gap * gap + s[2] * s[2];
    let two = T::lit(2.0);
    let mut grad = u[2] * v[2].transpose() * (two * s[2]);
    if gap > T::lit(GAP_GUARD) {
        grad += (u[0] * v[0].transpose() - u[1] * v[1].transpose()) * (two * gap);
    }
    (value, grad)
}

pub fn svd_loss<T: Real>(q_pred: &Quaternion<T>, t_pred: &Vector3<T>) -> T {
    svd_loss_matrix(&(skew(t_pred) * unit_quat_to_rot(q_pred))).0
}

fn svd_term<T: Real>(q: &Quaternion<T>, t: &Vector3<T>) -> (T, [T; 4], Vector3<T>) {
    let r = unit_quat_to_rot(q);
    let (v, g) = svd_loss_matrix(&(skew(t) * r));
    let (dq, dt) = chain_essential(q, t, &r, &g);
    (v, dq, dt)
}

pub fn yaw_loss<T: Real>(q_pred: &Quaternion<T>, q_gt: &Quaternion<T>) -> T {
    yaw_term(q_pred, q_gt).0
}

fn yaw_term<T: Real>(q: &Quaternion<T>, q_gt: &Quaternion<T>) -> (T, [T; 4]) {
    let (r, rg) = (unit_quat_to_rot(q), unit_quat_to_rot(q_gt));
    let yaw = |m: &Matrix3<T>| m[(1, 0)].atan2(m[(0, 0)]);
    let d = wrap_angle(yaw(&r) - yaw(&rg));
    let den = r[(0, 0)] * r[(0, 0)] + r[(1, 0)] * r[(1, 0)];
    if den <= T::zero() {
        return (d.abs(), [T::zero(); 4]);
    }
    let s = signum0(d);
    let mut d_r = Matrix3::zeros();
    d_r[(0, 0)] = -s * r[(1, 0)] / den;
    d_r[(1, 0)] = s * r[(0, 0)] / den;
    let jac = unit_quat_to_rot_jacobian(q);
    (d.abs(), std::array::from_fn(|k| jac[k].component_mul(&d_r).sum()))
}

/// One unweighted term and its gradient with respect to the prediction.
pub fn term_with_grad<T: Real>(
    term: Term,
    pred: &Prediction<T>,
    gt: &GroundTruth<T>,
    config: &LossConfig,
) -> (T, PredictionGrad<T>) {
    let t = pred.translation();
    let g_t = gt.pose.translation;
    let from_t = |v: T, dq: [T; 4], dt: Vector3<T>| {
        (
            v,
            PredictionGrad {
                q: dq,
                t_dir: dt * pred.t_raw,
                t_raw: dt.dot(&pred.t_dir),
            },
        )
    };
    let zero3 = Vector3::zeros();
    match term {
        Term::Quat => {
            let (v, dq) = quat_term(&pred.q, &gt.pose.rotation, config.quat_norm);
            from_t(v, dq, zero3)
        }
        Term::TDir => {
            let (v, dt, _) = t_dir_term(&t, &g_t);
            from_t(v, [T::zero(); 4], dt)
        }
        Term::TScale => {
            let (v, dt) = t_scale_term(&t, &g_t);
            from_t(v, [T::zero(); 4], dt)
        }
        Term::Frob if config.normalized_essential => {
            let (v, dq, dt) = frob_term(&pred.q, &pred.t_dir, &gt.essential_unit);
            (
                v,
                PredictionGrad {
                    q: dq,
                    t_dir: dt,
                    t_raw: T::zero(),
                },
            )
        }
        Term::Frob => {
            let (v, dq, dt) = frob_term(&pred.q, &t, &gt.essential);
            from_t(v, dq, dt)
        }
        Term::Svd => {
            let (v, dq, dt) = svd_term(&pred.q, &t);
            from_t(v, dq, dt)
        }
        Term::Yaw => {
            let (v, dq) = yaw_term(&pred.q, &gt.pose.rotation);
            from_t(v, dq, zero3)
        }
    }
}

fn weight_of(term: Term, w: &LossWeights) -> f64 {
    match term {
        Term::Quat | Term::TDir | Term::TScale => w.pose,
        Term::Frob => w.frob,
        Term::Svd => w.svd,
        Term::Yaw => w.yaw,
    }
}

/// Weighted total with its gradient.
pub fn total_loss_with_grad<T: Real>(
    pred: &Prediction<T>,
    gt: &GroundTruth<T>,
    config: &LossConfig,
) -> Result<(LossBreakdown<T>, PredictionGrad<T>), LossError> {
    config.weights.validate()?;
    check_unit(&pred.q, "predicted")?;
    check_unit(&gt.pose.rotation, "ground-truth")?;
    let mut out = LossBreakdown {
        degenerate_translation: pred.translation().norm() <= T::zero(),
        ..LossBreakdown::default()
    };
    let mut grad = PredictionGrad::zero();
    for term in Term::ALL {
        let (v, g) = term_with_grad(term, pred, gt, config);
        match term {
            Term::Quat => out.quat = v,
            Term::TDir => out.t_dir = v,
            Term::TScale => out.t_scale = v,
            Term::Frob => out.frob = v,
            Term::Svd => out.svd = v,
            Term::Yaw => out.yaw = v,
        }
        let w = T::lit(weight_of(term, &config.weights));
        out.total += w * v;
        grad = grad.add(&g.scaled(w));
    }
    Ok((out, grad))
}

pub fn total_loss<T: Real>(
    pred: &Prediction<T>,
    gt: &GroundTruth<T>,
    config: &LossConfig,
) -> Result<LossBreakdown<T>, LossError> {
    total_loss_with_grad(pred, gt, config).map(|(b, _)| b)
}
