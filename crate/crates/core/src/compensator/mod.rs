//! Dynamic compensators `ẋ_K = A_K x_K + B_θ e + B_ω ω_e`, `u = C_K x_K + D_θ e + D_ω ω_e`.
//!
//! The builders cover the PID family (baseline PID, cascade P/PI, cascade
//! P/PID with filtered acceleration feedback) and geometrization of a
//! per-axis cascade of transfer functions.

mod file;
pub mod presets;
mod tf;

pub use file::{ControllerSpec, SpecFileError};
pub use tf::{blockdiag_axes, series, tf_to_ss, StateSpace, TransferFunction};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::so3::{Mat3, Vec3};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompensatorError {
    #[error("gain `{name}` must be positive, got {value}")]
    NonPositiveGain { name: &'static str, value: f64 },
    #[error("gain `{0}` must be symmetric positive definite")]
    NotSPD(&'static str),
    #[error("gain `{0}` must be symmetric positive semidefinite")]
    NotPSD(&'static str),
    #[error("filter gain `N` must be diagonal with positive entries")]
    BadFilterGain,
    #[error("transfer function is improper (numerator degree {num_deg} > denominator degree {den_deg})")]
    ImproperTF { num_deg: usize, den_deg: usize },
    #[error("transfer function denominator is zero")]
    ZeroDenominator,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// State-space matrices of a compensator with `n` internal states.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensatorRealization {
    pub a_k: DMatrix<f64>,
    pub b_theta: DMatrix<f64>,
    pub b_omega: DMatrix<f64>,
    pub c_k: DMatrix<f64>,
    pub d_theta: Mat3,
    pub d_omega: Mat3,
    /// Known linear damping `Γ = Γᵀ ⪰ 0` of the plant. It is compensated in
    /// the cancellation torque and enters the error dynamics as `D_ω − Γ`.
    pub gamma: Option<Mat3>,
    /// The realization assumes `ω_e = ω` (regulation / setpoint tracking).
    pub regulation_only: bool,
}

impl CompensatorRealization {
    pub fn new(
        a_k: DMatrix<f64>,
        b_theta: DMatrix<f64>,
        b_omega: DMatrix<f64>,
        c_k: DMatrix<f64>,
        d_theta: Mat3,
        d_omega: Mat3,
    ) -> Result<Self, CompensatorError> {
        let n = a_k.nrows();
        let dims_ok = a_k.ncols() == n
            && b_theta.shape() == (n, 3)
            && b_omega.shape() == (n, 3)
            && c_k.shape() == (3, n);
        if !dims_ok {
            return Err(CompensatorError::DimensionMismatch(format!(
                "A_K {:?}, B_theta {:?}, B_omega {:?}, C_K {:?} for n = {n}",
                a_k.shape(),
                b_theta.shape(),
                b_omega.shape(),
                c_k.shape()
            )));
        }
        Ok(CompensatorRealization { a_k, b_theta, b_omega, c_k, d_theta, d_omega, gamma: None, regulation_only: false })
    }

    /// Static law `u = D_θ e + D_ω ω_e`.
    pub fn static_gain(d_theta: Mat3, d_omega: Mat3) -> Self {
        Self::new(DMatrix::zeros(0, 0), DMatrix::zeros(0, 3), DMatrix::zeros(0, 3), DMatrix::zeros(3, 0), d_theta, d_omega)
            .expect("static dimensions")
    }

    pub fn with_damping(mut self, gamma: Mat3) -> Result<Self, CompensatorError> {
        if !is_psd(&gamma) {
            return Err(CompensatorError::NotPSD("Gamma"));
        }
        self.gamma = Some(gamma);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.a_k.nrows()
    }

    pub fn gamma_or_zero(&self) -> Mat3 {
        self.gamma.unwrap_or_else(Mat3::zeros)
    }

    /// Velocity feedback seen by the error dynamics, `D_ω − Γ`.
    pub fn effective_d_omega(&self) -> Mat3 {
        self.d_omega - self.gamma_or_zero()
    }

    pub fn output(&self, x_k: &DVector<f64>, e: &Vec3, w: &Vec3) -> Vec3 {
        let ck = &self.c_k * x_k;
        Vec3::new(ck[0], ck[1], ck[2]) + self.d_theta * e + self.d_omega * w
    }

    pub fn state_derivative(&self, x_k: &DVector<f64>, e: &Vec3, w: &Vec3) -> DVector<f64> {
        &self.a_k * x_k + &self.b_theta * DVector::from_column_slice(e.as_slice())
            + &self.b_omega * DVector::from_column_slice(w.as_slice())
    }
}

pub(crate) fn is_symmetric(m: &Mat3) -> bool {
    (m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0)
}

fn is_spd(m: &Mat3) -> bool {
    is_symmetric(m) && m.cholesky().is_some()
}

fn is_psd(m: &Mat3) -> bool {
    is_symmetric(m) && SymmetricEigen::new(*m).eigenvalues.min() >= -1e-12 * m.amax().max(1.0)
}

fn m3(m: &Mat3) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 3, m.as_slice())
}

/// Geometric PID `u = −k_P e_R − k_D ω_e − k_I e_I`, `ė_I = c e_R + ω_e`.
pub fn build_baseline_pid(kp: f64, kd: f64, ki: f64, c: f64) -> Result<CompensatorRealization, CompensatorError> {
    for (name, value) in [("kP", kp), ("kD", kd), ("kI", ki), ("c", c)] {
        if !(value > 0.0) {
            return Err(CompensatorError::NonPositiveGain { name, value });
        }
    }
    let i = Mat3::identity();
    CompensatorRealization::new(DMatrix::zeros(3, 3), m3(&(i * c)), m3(&i), m3(&(i * -ki)), i * -kp, i * -kd)
}

/// Cascade P/PI: attitude loop `ω_ref = −K_R e_R + R_eᵀω_d`, rate loop
/// `u = K_ω e_ω + K_I e_I`. The integrator state is stored as `−e_I`.
pub fn build_cascade_ppi(k_r: &Mat3, k_w: &Mat3, k_i: &Mat3) -> Result<CompensatorRealization, CompensatorError> {
    for (name, m) in [("K_R", k_r), ("K_w", k_w), ("K_I", k_i)] {
        if !is_spd(m) {
            return Err(CompensatorError::NotSPD(name));
        }
    }
    CompensatorRealization::new(DMatrix::zeros(3, 3), m3(k_r), m3(&Mat3::identity()), m3(&-k_i), -k_w * k_r, -k_w)
}

/// Cascade P/PID: cascade P/PI plus `−K_A σ` with the filtered angular
/// acceleration `q̇ = −N q − N ω`, `σ = N q + N ω`.
///
/// Valid for regulation and setpoint tracking only (`ω_d = 0`).
pub fn build_cascade_ppid(
    k_r: &Mat3,
    k_w: &Mat3,
    k_i: &Mat3,
    k_a: &Mat3,
    filter: &Mat3,
) -> Result<CompensatorRealization, CompensatorError> {
    for (name, m) in [("K_R", k_r), ("K_w", k_w), ("K_I", k_i)] {
        if !is_spd(m) {
            return Err(CompensatorError::NotSPD(name));
        }
    }
    if !is_psd(k_a) {
        return Err(CompensatorError::NotPSD("K_A"));
    }
    let diag_ok = (0..3).all(|i| filter[(i, i)] > 0.0)
        && (0..3).all(|i| (0..3).all(|j| i == j || filter[(i, j)] == 0.0));
    if !diag_ok {
        return Err(CompensatorError::BadFilterGain);
    }

    let mut a = DMatrix::zeros(6, 6);
    a.view_mut((3, 3), (3, 3)).copy_from(&m3(&-filter));
    let mut b_theta = DMatrix::zeros(6, 3);
    b_theta.view_mut((0, 0), (3, 3)).copy_from(&m3(k_r));
    let mut b_omega = DMatrix::zeros(6, 3);
    b_omega.view_mut((0, 0), (3, 3)).copy_from(&m3(&Mat3::identity()));
    b_omega.view_mut((3, 0), (3, 3)).copy_from(&m3(&-filter));
    let mut c = DMatrix::zeros(3, 6);
    c.view_mut((0, 0), (3, 3)).copy_from(&m3(&-k_i));
    c.view_mut((0, 3), (3, 3)).copy_from(&m3(&-(k_a * filter)));
    let mut out = CompensatorRealization::new(a, b_theta, b_omega, c, -k_w * k_r, -(k_w + k_a * filter))?;
    out.regulation_only = true;
    Ok(out)
}

/// Geometrized per-axis cascade `u = −K_ω(s)[K_R(s) e + ω_e]`, with the
/// same filters on every axis. States are grouped by axis: the `K_R`
/// states followed by the `K_ω` states.
pub fn geometrize_cascade(
    k_r: &TransferFunction,
    k_w: &TransferFunction,
) -> Result<CompensatorRealization, CompensatorError> {
    let r = tf_to_ss(k_r)?;
    let w = tf_to_ss(k_w)?;
    let (nr, nw) = (r.states(), w.states());
    let k = nr + nw;
    let n = 3 * k;
    let (dr, dw) = (r.d[(0, 0)], w.d[(0, 0)]);

    // one axis: x = [x_r; x_w]
    let mut a1 = DMatrix::zeros(k, k);
    a1.view_mut((0, 0), (nr, nr)).copy_from(&r.a);
    a1.view_mut((nr, 0), (nw, nr)).copy_from(&(&w.b * &r.c));
    a1.view_mut((nr, nr), (nw, nw)).copy_from(&w.a);
    let mut bt1 = DMatrix::zeros(k, 1);
    bt1.view_mut((0, 0), (nr, 1)).copy_from(&r.b);
    bt1.view_mut((nr, 0), (nw, 1)).copy_from(&(&w.b * dr));
    let mut bw1 = DMatrix::zeros(k, 1);
    bw1.view_mut((nr, 0), (nw, 1)).copy_from(&w.b);
    let mut c1 = DMatrix::zeros(1, k);
    c1.view_mut((0, 0), (1, nr)).copy_from(&(&r.c * -dw));
    c1.view_mut((0, nr), (1, nw)).copy_from(&-&w.c);

    let mut a = DMatrix::zeros(n, n);
    let mut bt = DMatrix::zeros(n, 3);
    let mut bw = DMatrix::zeros(n, 3);
    let mut c = DMatrix::zeros(3, n);
    for axis in 0..3 {
        let o = axis * k;
        a.view_mut((o, o), (k, k)).copy_from(&a1);
        bt.view_mut((o, axis), (k, 1)).copy_from(&bt1);
        bw.view_mut((o, axis), (k, 1)).copy_from(&bw1);
        c.view_mut((axis, o), (1, k)).copy_from(&c1);
    }
    let i = Mat3::identity();
    CompensatorRealization::new(a, bt, bw, c, i * (-dw * dr), i * -dw)
}

/// Numerical ranks of the controllability and observability matrices.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MinimalityReport {
    pub n: usize,
    pub controllable_rank: usize,
    pub observable_rank: usize,
    pub minimal: bool,
    pub warnings: Vec<String>,
}

pub fn minimality_report(c: &CompensatorRealization) -> MinimalityReport {
    let n = c.n();
    if n == 0 {
        return MinimalityReport { n, controllable_rank: 0, observable_rank: 0, minimal: true, warnings: Vec::new() };
    }
    let mut b = DMatrix::zeros(n, 6);
    b.view_mut((0, 0), (n, 3)).copy_from(&c.b_theta);
    b.view_mut((0, 3), (n, 3)).copy_from(&c.b_omega);

    let mut ctrb = DMatrix::zeros(n, 6 * n);
    let mut blk = b.clone();
    for k in 0..n {
        ctrb.view_mut((0, 6 * k), (n, 6)).copy_from(&blk);
        blk = &c.a_k * blk;
    }
    let mut obsv = DMatrix::zeros(3 * n, n);
    let mut blk = c.c_k.clone();
    for k in 0..n {
        obsv.view_mut((3 * k, 0), (3, n)).copy_from(&blk);
        blk *= &c.a_k;
    }
    let controllable_rank = numerical_rank(&ctrb);
    let observable_rank = numerical_rank(&obsv);
    let mut warnings = Vec::new();
    if controllable_rank < n {
        warnings.push(format!("controllability rank {controllable_rank} < n = {n}"));
    }
    if observable_rank < n {
        warnings.push(format!("observability rank {observable_rank} < n = {n}"));
    }
    MinimalityReport { n, controllable_rank, observable_rank, minimal: warnings.is_empty(), warnings }
}

fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let tol = sv.max() * 1e-9 * (m.nrows().max(m.ncols()) as f64);
    sv.iter().filter(|s| **s > tol).count()
}
