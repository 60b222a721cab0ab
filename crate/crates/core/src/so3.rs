//! Rotation-group primitives.
//!
//! Everything here works on plain `nalgebra` 3-vectors and 3×3 matrices. The
//! [`Rotation`] newtype carries the orthonormality invariant; [`AxisAngle`]
//! is the canonical exponential coordinate with the angle in `[0, π]`.
//!
//! Two attitude error functions are provided:
//!
//! * the chordal metric `Ψ(R) = ½ tr(I − R)` with error vector
//!   `e_R = ½ (R − Rᵀ)^∨` and derivative map [`e_map`];
//! * `Ψ_q(R) = 2 − √(1 + tr R)` with error vector
//!   `e_q = (R − Rᵀ)^∨ / (2√(1 + tr R))` and derivative map [`e_q_map`].

use nalgebra::{Matrix3, SymmetricEigen, Unit, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Default tolerance on `‖M + Mᵀ‖_F` accepted by [`vee`].
pub const SKEW_TOL: f64 = 1e-9;
/// Smallest admissible `1 + tr R` for the `Ψ_q` error vector.
pub const ANTIPODAL_GUARD: f64 = 1e-10;
/// Orthonormality tolerance used by [`Rotation::from_matrix`].
pub const ROTATION_TOL: f64 = 1e-9;

const SMALL_ANGLE: f64 = 1e-4;
const NEAR_PI: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum So3Error {
    #[error("matrix is not skew-symmetric (‖M + Mᵀ‖ = {residual:.3e})")]
    NotSkew { residual: f64 },
    #[error("attitude error is antipodal: 1 + tr R = {margin:.3e} is below the guard")]
    NearAntipodal { margin: f64 },
    #[error("matrix is singular or has nonpositive determinant (det = {det:.3e})")]
    Degenerate { det: f64 },
    #[error("matrix is not a rotation (‖RᵀR − I‖ = {orth:.3e}, det = {det:.6})")]
    NotRotation { orth: f64, det: f64 },
}

/// `v^×`, the skew matrix with `hat(v) w = v × w`.
pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`]; rejects matrices that are not skew within [`SKEW_TOL`].
pub fn vee(m: &Mat3) -> Result<Vec3, So3Error> {
    vee_tol(m, SKEW_TOL)
}

pub fn vee_tol(m: &Mat3, tol: f64) -> Result<Vec3, So3Error> {
    let residual = (m + m.transpose()).norm();
    if residual > tol {
        return Err(So3Error::NotSkew { residual });
    }
    Ok(vee_unchecked(m))
}

/// Vee of the skew part of `m`, `((m − mᵀ)/2)^∨`, without any check.
pub fn vee_unchecked(m: &Mat3) -> Vec3 {
    Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// `(m − mᵀ)^∨`, twice the vee of the skew part.
fn antisym_vee(m: &Mat3) -> Vec3 {
    Vec3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    )
}

/// A 3×3 orthonormal matrix with unit determinant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Validates orthonormality and determinant to [`ROTATION_TOL`].
    pub fn from_matrix(m: Mat3) -> Result<Self, So3Error> {
        let orth = (m.transpose() * m - Mat3::identity()).norm();
        let det = m.determinant();
        if !m.iter().all(|x| x.is_finite()) || orth > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL
        {
            return Err(So3Error::NotRotation { orth, det });
        }
        Ok(Rotation(m))
    }

    /// Wraps a matrix the caller knows to be a rotation (e.g. a product of
    /// rotations). No check is performed.
    pub fn from_matrix_unchecked(m: Mat3) -> Self {
        Rotation(m)
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        exp_so3(&AxisAngle::new(*axis, angle))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn into_inner(self) -> Mat3 {
        self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let s = 0.5 * antisym_vee(&self.0).norm();
        let c = 0.5 * (self.0.trace() - 1.0);
        s.atan2(c)
    }

    /// Frobenius distance of `RᵀR` from the identity.
    pub fn orthonormality_residual(&self) -> f64 {
        (self.0.transpose() * self.0 - Mat3::identity()).norm()
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl std::ops::Mul<&Vec3> for &Rotation {
    type Output = Vec3;
    fn mul(self, rhs: &Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl fmt::Display for Rotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Unit axis and angle (rad). Canonical values from [`log_so3`] keep the
/// angle in `[0, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngle {
    pub axis: Unit<Vec3>,
    pub angle: f64,
}

impl AxisAngle {
    /// Normalizes `axis`; a zero axis falls back to `e₁`.
    pub fn new(axis: Vec3, angle: f64) -> Self {
        let axis = Unit::try_new(axis, 1e-300).unwrap_or_else(|| Unit::new_unchecked(Vec3::x()));
        AxisAngle { axis, angle }
    }

    /// Rotation vector `θα`.
    pub fn rotation_vector(&self) -> Vec3 {
        self.axis.into_inner() * self.angle
    }

    pub fn from_rotation_vector(v: &Vec3) -> Self {
        let angle = v.norm();
        if angle == 0.0 {
            AxisAngle::new(Vec3::x(), 0.0)
        } else {
            AxisAngle::new(v / angle, angle)
        }
    }
}

/// Rodrigues formula `I + sinθ α^× + (1 − cosθ) α^× α^×`.
pub fn exp_so3(aa: &AxisAngle) -> Rotation {
    let k = hat(&aa.axis);
    let (s, c) = aa.angle.sin_cos();
    Rotation(Mat3::identity() + k * s + k * k * (1.0 - c))
}

/// Exponential of a rotation vector, with a series branch for tiny angles.
pub fn exp_vec(v: &Vec3) -> Rotation {
    let theta2 = v.norm_squared();
    let k = hat(v);
    let (a, b) = if theta2 < 1e-8 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Rotation(Mat3::identity() + k * a + k * k * b)
}

/// Canonical axis-angle of a rotation, angle in `[0, π]`.
///
/// At the identity the axis is `e₁`. At exactly `π` the axis sign is fixed by
/// making its largest-magnitude component positive.
pub fn log_so3(r: &Rotation) -> AxisAngle {
    let m = &r.0;
    let w = antisym_vee(m); // 2 sinθ α
    let sin_t = 0.5 * w.norm();
    let cos_t = 0.5 * (m.trace() - 1.0);
    let angle = sin_t.atan2(cos_t);

    if angle < SMALL_ANGLE {
        // sinθ/θ = 1 − θ²/6 + …
        let sinc = 1.0 - angle * angle / 6.0;
        let v = w * (0.5 / sinc);
        let n = v.norm();
        return if n == 0.0 {
            AxisAngle::new(Vec3::x(), 0.0)
        } else {
            AxisAngle::new(v / n, angle)
        };
    }

    if PI - angle < NEAR_PI {
        // (R + Rᵀ)/2 = cosθ I + (1 − cosθ) ααᵀ
        let s = (m + m.transpose()) * 0.5;
        let aat = (s - Mat3::identity() * cos_t) / (1.0 - cos_t);
        let d = aat.diagonal();
        let i = d.imax();
        let mut axis = aat.column(i).into_owned() / d[i].max(f64::MIN_POSITIVE).sqrt();
        axis.normalize_mut();
        let dot = axis.dot(&w);
        if dot < 0.0 {
            axis = -axis;
        } else if dot == 0.0 {
            // exactly antipodal: largest-magnitude component positive
            let j = axis.iamax();
            if axis[j] < 0.0 {
                axis = -axis;
            }
        }
        return AxisAngle::new(axis, angle);
    }

    AxisAngle::new(w / w.norm(), angle)
}

/// Rotation vector `θα` of [`log_so3`].
pub fn log_vec(r: &Rotation) -> Vec3 {
    log_so3(r).rotation_vector()
}

/// Chordal metric `½ tr(I − R)`, in `[0, 2]`.
pub fn chordal_psi(r: &Rotation) -> f64 {
    0.5 * (3.0 - r.0.trace())
}

/// `e_R = ½ (R − Rᵀ)^∨ = sinθ α`.
pub fn err_vec_chordal(r: &Rotation) -> Vec3 {
    vee_unchecked(&r.0)
}

/// `E(M) = ½ (tr M · I − Mᵀ)`; `ė_R = E(R_e) ω_e`.
pub fn e_map(m: &Mat3) -> Mat3 {
    (Mat3::identity() * m.trace() - m.transpose()) * 0.5
}

/// `Ψ_q(R) = 2 − √(1 + tr R)`, in `[0, 2]`.
pub fn psi_q(r: &Rotation) -> f64 {
    2.0 - (1.0 + r.0.trace()).max(0.0).sqrt()
}

/// `e_q = (R − Rᵀ)^∨ / (2√(1 + tr R))`.
pub fn err_vec_q(r: &Rotation) -> Result<Vec3, So3Error> {
    err_vec_q_guarded(r, ANTIPODAL_GUARD)
}

pub fn err_vec_q_guarded(r: &Rotation, guard: f64) -> Result<Vec3, So3Error> {
    let margin = 1.0 + r.0.trace();
    if margin < guard {
        return Err(So3Error::NearAntipodal { margin });
    }
    Ok(antisym_vee(&r.0) / (2.0 * margin.sqrt()))
}

/// `e_q` with `1 + tr R` clamped to the guard instead of failing.
pub(crate) fn err_vec_q_clamped(r: &Rotation) -> (Vec3, bool) {
    let margin = 1.0 + r.0.trace();
    let clamped = margin < ANTIPODAL_GUARD;
    (antisym_vee(&r.0) / (2.0 * margin.max(ANTIPODAL_GUARD).sqrt()), clamped)
}

/// `E_q(α, θ) = [(1 + cosθ) I + sinθ α^×] / √(2 + 2cosθ)`; `ė_q = ½ E_q ω_e`.
/// Evaluated in the half-angle form `cos(θ/2) I + sin(θ/2) α^×`.
pub fn e_q_map(aa: &AxisAngle) -> Result<Mat3, So3Error> {
    let margin = 2.0 + 2.0 * aa.angle.cos();
    // 1 + tr R = 2 + 2cosθ
    if margin < ANTIPODAL_GUARD {
        return Err(So3Error::NearAntipodal { margin });
    }
    let (sh, ch) = (0.5 * aa.angle).sin_cos();
    Ok(Mat3::identity() * ch + hat(&aa.axis) * sh)
}

/// [`e_q_map`] evaluated at the canonical axis-angle of `r`.
pub fn e_q_map_rot(r: &Rotation) -> Result<Mat3, So3Error> {
    e_q_map(&log_so3(r))
}

/// Closest rotation in Frobenius norm (orthogonal polar factor).
pub fn project_so3(m: &Mat3) -> Result<Rotation, So3Error> {
    let det = m.determinant();
    if !(det > 0.0) || !det.is_finite() {
        return Err(So3Error::Degenerate { det });
    }
    // polar factor R = M (MᵀM)^{-1/2}
    let eig = SymmetricEigen::new(m.transpose() * m);
    if eig.eigenvalues.min() <= f64::EPSILON * eig.eigenvalues.max() {
        return Err(So3Error::Degenerate { det });
    }
    let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    let q = eig.eigenvectors;
    let r = m * (q * Mat3::from_diagonal(&inv_sqrt) * q.transpose());
    Ok(Rotation(r))
}

/// Attitude error function choice; selects `(Ψ, e_R, E)` or `(Ψ_q, e_q, E_q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Chordal,
    PsiQ,
}

impl Metric {
    pub fn potential(self, r: &Rotation) -> f64 {
        match self {
            Metric::Chordal => chordal_psi(r),
            Metric::PsiQ => psi_q(r),
        }
    }

    /// Error vector; for `PsiQ` the antipodal guard is clamped rather than
    /// reported, the returned flag says whether that happened.
    pub fn error_vector(self, r: &Rotation) -> (Vec3, bool) {
        match self {
            Metric::Chordal => (err_vec_chordal(r), false),
            Metric::PsiQ => err_vec_q_clamped(r),
        }
    }

    /// Matrix `D` with `ė = D ω_e` (i.e. `E(R)` or `½ E_q`).
    pub fn error_rate_map(self, r: &Rotation) -> Mat3 {
        match self {
            Metric::Chordal => e_map(r.matrix()),
            Metric::PsiQ => {
                let aa = log_so3(r);
                let (s, c) = aa.angle.sin_cos();
                let margin = (2.0 + 2.0 * c).max(ANTIPODAL_GUARD);
                (Mat3::identity() * (1.0 + c) + hat(&aa.axis) * s) * (0.5 / margin.sqrt())
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Chordal => "chordal",
            Metric::PsiQ => "psi_q",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "chordal" => Ok(Metric::Chordal),
            "psi_q" => Ok(Metric::PsiQ),
            other => Err(format!("unknown metric `{other}` (expected chordal or psi_q)")),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Mat3, b: &Mat3, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn hat_matches_definition() {
        let m = hat(&Vec3::new(1.0, 2.0, 3.0));
        let expected = Mat3::new(0.0, -3.0, 2.0, 3.0, 0.0, -1.0, -2.0, 1.0, 0.0);
        assert_eq!(m, expected);
        assert_eq!(hat(&Vec3::zeros()), Mat3::zeros());
        assert_eq!(hat(&Vec3::z()) * Vec3::x(), Vec3::y());
    }

    #[test]
    fn vee_inverts_hat_and_rejects_symmetric() {
        let v = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(vee(&hat(&v)).unwrap(), v);
        assert_eq!(vee(&Mat3::zeros()).unwrap(), Vec3::zeros());
        // ‖M + Mᵀ‖_F = 1
        let mut m = Mat3::zeros();
        m[(0, 0)] = 0.5;
        match vee(&m) {
            Err(So3Error::NotSkew { residual }) => assert!((residual - 1.0).abs() < 1e-15),
            other => panic!("expected NotSkew, got {other:?}"),
        }
    }

    #[test]
    fn exp_quarter_and_full_turn() {
        let r = Rotation::from_axis_angle(&Vec3::z(), PI / 2.0);
        let expected = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!(close(r.matrix(), &expected, 1e-15));
        let full = Rotation::from_axis_angle(&Vec3::x(), 2.0 * PI);
        assert!(close(full.matrix(), &Mat3::identity(), 1e-15));
        let zero = Rotation::from_axis_angle(&Vec3::new(0.3, -0.2, 0.9), 0.0);
        assert_eq!(*zero.matrix(), Mat3::identity());
    }

    #[test]
    fn log_branches() {
        let id = log_so3(&Rotation::identity());
        assert_eq!(id.angle, 0.0);
        assert_eq!(id.axis.into_inner(), Vec3::x());

        let aa = log_so3(&Rotation::from_axis_angle(&Vec3::y(), 0.3));
        assert!((aa.angle - 0.3).abs() < 1e-15);
        assert!((aa.axis.into_inner() - Vec3::y()).norm() < 1e-15);

        let half = log_so3(&Rotation::from_axis_angle(&Vec3::x(), PI));
        assert!((half.angle - PI).abs() < 1e-12);
        assert!((half.axis.into_inner() - Vec3::x()).norm() < 1e-12);
        // tie-break at exactly π: largest-magnitude component positive
        let exact = Rotation::from_matrix(Mat3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0))).unwrap();
        let flip = log_so3(&exact);
        assert_eq!(flip.angle, PI);
        assert_eq!(flip.axis.into_inner(), Vec3::x());
        // just short of π the vee part fixes the sign
        let neg = log_so3(&Rotation::from_axis_angle(&-Vec3::x(), PI - 1e-6));
        assert!((neg.axis.into_inner() + Vec3::x()).norm() < 1e-9);

        let tiny = log_so3(&Rotation::from_axis_angle(&Vec3::z(), 1e-7));
        assert!((tiny.angle - 1e-7).abs() < 1e-20);
        assert!((tiny.axis.into_inner() - Vec3::z()).norm() < 1e-9);
    }

    #[test]
    fn chordal_values() {
        assert_eq!(chordal_psi(&Rotation::identity()), 0.0);
        assert!((chordal_psi(&Rotation::from_axis_angle(&Vec3::x(), PI)) - 2.0).abs() < 1e-15);
        assert!((chordal_psi(&Rotation::from_axis_angle(&Vec3::z(), PI / 2.0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn chordal_error_vector() {
        assert_eq!(err_vec_chordal(&Rotation::identity()), Vec3::zeros());
        for &t in &[0.1, 1.0, 2.5, -0.7] {
            let e = err_vec_chordal(&Rotation::from_axis_angle(&Vec3::z(), t));
            assert!((e - Vec3::new(0.0, 0.0, t.sin())).norm() < 1e-15);
        }
        let e = err_vec_chordal(&Rotation::from_axis_angle(&Vec3::x(), PI));
        assert!(e.norm() < 1e-15);
    }

    #[test]
    fn e_map_identity_and_quarter_turn() {
        assert_eq!(e_map(&Mat3::identity()), Mat3::identity());
        let r = Rotation::from_axis_angle(&Vec3::y(), PI / 2.0);
        let e = e_map(r.matrix());
        let mut ev: Vec<f64> = SymmetricEigen::new(e.transpose() * e).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(ev[0].abs() < 1e-15);
        assert!((ev[1] - 0.5).abs() < 1e-15 && (ev[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn psi_q_values() {
        assert_eq!(psi_q(&Rotation::identity()), 0.0);
        assert!((psi_q(&Rotation::from_axis_angle(&Vec3::x(), PI)) - 2.0).abs() < 1e-7);
        let q = psi_q(&Rotation::from_axis_angle(&Vec3::x(), PI / 2.0));
        assert!((q - (2.0 - 2f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn e_q_values_and_guard() {
        assert_eq!(err_vec_q(&Rotation::identity()).unwrap(), Vec3::zeros());
        let e = err_vec_q(&Rotation::from_axis_angle(&Vec3::z(), PI / 2.0)).unwrap();
        assert!((e - Vec3::new(0.0, 0.0, 1.0 / 2f64.sqrt())).norm() < 1e-15);
        let near = Rotation::from_axis_angle(&Vec3::x(), PI - 1e-12);
        assert!(matches!(err_vec_q(&near), Err(So3Error::NearAntipodal { .. })));
    }

    #[test]
    fn e_q_map_values() {
        let id = e_q_map(&AxisAngle::new(Vec3::z(), 0.0)).unwrap();
        assert!(close(&id, &Mat3::identity(), 1e-15));
        let m = e_q_map(&AxisAngle::new(Vec3::z(), PI / 2.0)).unwrap();
        let mut ev: Vec<f64> = SymmetricEigen::new(m.transpose() * m).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ev[0] - 0.5).abs() < 1e-14);
        assert!((ev[1] - 1.0).abs() < 1e-14 && (ev[2] - 1.0).abs() < 1e-14);
        assert!(matches!(
            e_q_map(&AxisAngle::new(Vec3::x(), PI)),
            Err(So3Error::NearAntipodal { .. })
        ));
    }

    #[test]
    fn projection() {
        let r = Rotation::from_axis_angle(&Vec3::new(1.0, 2.0, -0.5), 1.1);
        let p = project_so3(r.matrix()).unwrap();
        assert!(close(p.matrix(), r.matrix(), 1e-14));
        let p = project_so3(&(r.matrix() * 1.001)).unwrap();
        assert!(close(p.matrix(), r.matrix(), 1e-13));
        let mut noisy = *r.matrix();
        noisy[(0, 1)] += 1e-6;
        noisy[(2, 0)] -= 1e-6;
        let p = project_so3(&noisy).unwrap();
        assert!(p.orthonormality_residual() < 1e-14);
        assert!(close(p.matrix(), r.matrix(), 1e-5));
        assert!(matches!(project_so3(&Mat3::zeros()), Err(So3Error::Degenerate { .. })));
        assert!(matches!(project_so3(&-Mat3::identity()), Err(So3Error::Degenerate { .. })));
    }

    #[test]
    fn rotation_validation() {
        assert!(Rotation::from_matrix(Mat3::identity()).is_ok());
        assert!(Rotation::from_matrix(Mat3::identity() * 1.01).is_err());
        assert!(Rotation::from_matrix(-Mat3::identity()).is_err());
    }

    #[test]
    fn metric_parse() {
        assert_eq!("psi_q".parse::<Metric>().unwrap(), Metric::PsiQ);
        assert_eq!(serde_json::to_string(&Metric::Chordal).unwrap(), "\"chordal\"");
        assert!("geodesic".parse::<Metric>().is_err());
    }
}
