//! The Lyapunov candidate
//!
//! ```text
//! V = 2 p₁₁ Ψ(R_e) + ω_e·P₂₂Jω_e + 2 e·P₂₁ᵀJω_e + x_K·P₃₃x_K + 2 x_K·P₃₁e + 2 x_K·P₃₂Jω_e
//! ```
//!
//! its rate along the closed loop, and the matrices whose definiteness
//! certifies almost-global asymptotic stability.
//!
//! All block builders here take concrete coefficients. The affine LMI
//! representation in [`lmi`] is obtained by probing these builders, so the
//! solver and the independent verifier see exactly the same algebra.

mod certificate;
pub mod lmi;

pub use certificate::{verify_certificate, Certificate, CertificateError, CertificateReport};
pub use lmi::{
    assemble_certification_lmis, assemble_m0, assemble_p, certification_blocks, default_epsilon, AffineSymBlock, CertificationLmi, LinearEquality,
    LmiProblem, LyapLayout, NamedSlice, Sense,
};
pub use crate::sdp::BlockMargin;

use nalgebra::{DMatrix, DVector};

use crate::compensator::CompensatorRealization;
use crate::so3::{Mat3, Metric, Rotation, Vec3};

/// Lyapunov coefficients `(p₁₁, P₂₁, P₂₂, P₃₁, P₃₂, P₃₃)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapCoeffs {
    pub p11: f64,
    pub p21: Mat3,
    pub p22: Mat3,
    /// `n × 3`
    pub p31: DMatrix<f64>,
    /// `n × 3`
    pub p32: DMatrix<f64>,
    /// `n × n`, symmetric
    pub p33: DMatrix<f64>,
}

impl LyapCoeffs {
    pub fn zeros(n: usize) -> Self {
        LyapCoeffs {
            p11: 0.0,
            p21: Mat3::zeros(),
            p22: Mat3::zeros(),
            p31: DMatrix::zeros(n, 3),
            p32: DMatrix::zeros(n, 3),
            p33: DMatrix::zeros(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.p33.nrows()
    }
}

/// Relaxation slacks `(τ₁, τ₂, N₂, N₃)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlackVars {
    pub tau1: f64,
    pub tau2: f64,
    pub n2: Mat3,
    pub n3: DMatrix<f64>,
}

impl SlackVars {
    pub fn zeros(n: usize) -> Self {
        SlackVars { tau1: 0.0, tau2: 0.0, n2: Mat3::zeros(), n3: DMatrix::zeros(n, n) }
    }
}

/// Closed-loop error state `(R_e, ω_e, x_K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorState {
    pub r_e: Rotation,
    pub w_e: Vec3,
    pub x_k: DVector<f64>,
}

pub(crate) fn dm(m: &Mat3) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 3, m.as_slice())
}

fn dv(v: &Vec3) -> DVector<f64> {
    DVector::from_column_slice(v.as_slice())
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Assemble a symmetric 3×3 block matrix from its lower blocks.
fn block3(b11: &DMatrix<f64>, b21: &DMatrix<f64>, b22: &DMatrix<f64>, b31: &DMatrix<f64>, b32: &DMatrix<f64>, b33: &DMatrix<f64>) -> DMatrix<f64> {
    let (k1, k2, k3) = (b11.nrows(), b22.nrows(), b33.nrows());
    let n = k1 + k2 + k3;
    let mut m = DMatrix::zeros(n, n);
    m.view_mut((0, 0), (k1, k1)).copy_from(b11);
    m.view_mut((k1, 0), (k2, k1)).copy_from(b21);
    m.view_mut((0, k1), (k1, k2)).copy_from(&b21.transpose());
    m.view_mut((k1, k1), (k2, k2)).copy_from(b22);
    m.view_mut((k1 + k2, 0), (k3, k1)).copy_from(b31);
    m.view_mut((0, k1 + k2), (k1, k3)).copy_from(&b31.transpose());
    m.view_mut((k1 + k2, k1), (k3, k2)).copy_from(b32);
    m.view_mut((k1, k1 + k2), (k2, k3)).copy_from(&b32.transpose());
    m.view_mut((k1 + k2, k1 + k2), (k3, k3)).copy_from(b33);
    m
}

/// `𝒫`: `[[p₁₁I, *, *], [JP₂₁, P₂₂J, *], [P₃₁, P₃₂J, P₃₃]]`, with `2p₁₁I`
/// in the corner for `Ψ_q`. `P₂₂J` and `P₃₃` enter through their symmetric
/// parts.
pub fn p_matrix(c: &LyapCoeffs, j: &Mat3, metric: Metric) -> DMatrix<f64> {
    let corner = match metric {
        Metric::Chordal => c.p11,
        Metric::PsiQ => 2.0 * c.p11,
    };
    let jd = dm(j);
    block3(
        &DMatrix::from_diagonal_element(3, 3, corner),
        &dm(&(j * c.p21)),
        &sym(&dm(&(c.p22 * j))),
        &c.p31,
        &(&c.p32 * &jd),
        &sym(&c.p33),
    )
}

/// Blocks `(M₁₁, M₂₁, M₂₂, M₃₁, M₃₂, M₃₃)` of `𝓜₀`, with `D_ω − Γ` in place
/// of `D_ω`.
pub fn m0_blocks(c: &LyapCoeffs, k: &CompensatorRealization, j: &Mat3) -> [DMatrix<f64>; 6] {
    let jd = dm(j);
    let p21 = dm(&c.p21);
    let p22 = dm(&c.p22);
    let dt = dm(&k.d_theta);
    let dw = dm(&k.effective_d_omega());
    let (a, bt, bw, ck) = (&k.a_k, &k.b_theta, &k.b_omega, &k.c_k);
    let (p31, p32, p33) = (&c.p31, &c.p32, &sym(&c.p33));
    let p32j = p32 * &jd;

    let m11 = sym(&((p21.transpose() * &dt + p31.transpose() * bt) * 2.0));
    // ω·P₂₂Jω̇_e = (P₂₂ᵀω)·(Jω̇_e) once P₂₂J is symmetric
    let m22 = sym(&((&p22 * &dw + p32j.transpose() * bw) * 2.0));
    let m21 = DMatrix::from_diagonal_element(3, 3, c.p11) + &p22 * &dt + dw.transpose() * &p21
        + p32j.transpose() * bt
        + bw.transpose() * p31;
    let m33 = sym(&((p32 * ck + p33 * a) * 2.0));
    let m31 = p32 * &dt + ck.transpose() * &p21 + a.transpose() * p31 + p33 * bt;
    let m32 = p32 * &dw + ck.transpose() * p22.transpose() + a.transpose() * &p32j + p33 * bw;
    [m11, m21, m22, m31, m32, m33]
}

/// `𝓜₀` assembled from [`m0_blocks`].
pub fn m0_matrix(c: &LyapCoeffs, k: &CompensatorRealization, j: &Mat3) -> DMatrix<f64> {
    let [m11, m21, m22, m31, m32, m33] = m0_blocks(c, k, j);
    block3(&m11, &m21, &m22, &m31, &m32, &m33)
}

/// Relaxed rate matrix (`𝓜₂`, or `𝓜₃` for `Ψ_q`): `𝓜₀` plus
/// `(τ₁ + τ₂)I + N₂` on the velocity block and `N₃` on the compensator block.
pub fn m_relaxed(c: &LyapCoeffs, s: &SlackVars, k: &CompensatorRealization, j: &Mat3) -> DMatrix<f64> {
    let mut m = m0_matrix(c, k, j);
    let n = k.n();
    let mut vel = m.view_mut((3, 3), (3, 3));
    vel += dm(&(Mat3::identity() * (s.tau1 + s.tau2) + sym3(&s.n2)));
    let mut comp = m.view_mut((6, 6), (n, n));
    comp += sym(&s.n3);
    m
}

fn sym3(m: &Mat3) -> Mat3 {
    (m + m.transpose()) * 0.5
}

fn slack_factor(metric: Metric) -> f64 {
    match metric {
        Metric::Chordal => 1.0,
        Metric::PsiQ => 4.0,
    }
}

/// `[[N₂, JP₂₁], [P₂₁ᵀJ, τ₂I]]` (`4τ₂I` for `Ψ_q`).
pub fn schur_n2(c: &LyapCoeffs, s: &SlackVars, j: &Mat3, metric: Metric) -> DMatrix<f64> {
    let jp = dm(&(j * c.p21));
    let mut m = DMatrix::zeros(6, 6);
    m.view_mut((0, 0), (3, 3)).copy_from(&dm(&sym3(&s.n2)));
    m.view_mut((0, 3), (3, 3)).copy_from(&jp);
    m.view_mut((3, 0), (3, 3)).copy_from(&jp.transpose());
    m.view_mut((3, 3), (3, 3)).copy_from(&DMatrix::from_diagonal_element(3, 3, slack_factor(metric) * s.tau2));
    m
}

/// `[[N₃, P₃₁], [P₃₁ᵀ, τ₁I]]` (`4τ₁I` for `Ψ_q`).
pub fn schur_n3(c: &LyapCoeffs, s: &SlackVars, metric: Metric) -> DMatrix<f64> {
    let n = c.n();
    let mut m = DMatrix::zeros(n + 3, n + 3);
    m.view_mut((0, 0), (n, n)).copy_from(&sym(&s.n3));
    m.view_mut((0, n), (n, 3)).copy_from(&c.p31);
    m.view_mut((n, 0), (3, n)).copy_from(&c.p31.transpose());
    m.view_mut((n, n), (3, 3)).copy_from(&DMatrix::from_diagonal_element(3, 3, slack_factor(metric) * s.tau1));
    m
}

/// `diag(τ₁, τ₂)`.
pub fn tau_matrix(s: &SlackVars) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_vec(vec![s.tau1, s.tau2]))
}

/// Unrelaxed rate matrix `𝓜₁` with `M̃₂₂ = M₂₂ + (τ₁+τ₂)I + JP₂₁P₂₁ᵀJ/τ₂`
/// and `M̃₃₃ = M₃₃ + P₃₁P₃₁ᵀ/τ₁` (the `1/τ` terms become `1/(4τ)` for `Ψ_q`).
pub fn m_tilde(c: &LyapCoeffs, tau1: f64, tau2: f64, k: &CompensatorRealization, j: &Mat3, metric: Metric) -> DMatrix<f64> {
    let f = slack_factor(metric);
    let mut m = m0_matrix(c, k, j);
    let n = k.n();
    let jp = dm(&(j * c.p21));
    let mut vel = m.view_mut((3, 3), (3, 3));
    vel += DMatrix::from_diagonal_element(3, 3, tau1 + tau2) + &jp * jp.transpose() / (f * tau2);
    let mut comp = m.view_mut((6, 6), (n, n));
    comp += &c.p31 * c.p31.transpose() / (f * tau1);
    m
}

/// Lyapunov candidate at an error state.
pub fn eval_v(c: &LyapCoeffs, j: &Mat3, metric: Metric, state: &ErrorState) -> f64 {
    let (e, _) = metric.error_vector(&state.r_e);
    let w = &state.w_e;
    let x = &state.x_k;
    let jw = j * w;
    2.0 * c.p11 * metric.potential(&state.r_e)
        + w.dot(&(c.p22 * jw))
        + 2.0 * e.dot(&(c.p21.transpose() * jw))
        + x.dot(&(&c.p33 * x))
        + 2.0 * x.dot(&(&c.p31 * dv(&e)))
        + 2.0 * x.dot(&(&c.p32 * dv(&jw)))
}

/// `V̇ = ζᵀ𝓜₀ζ + 2ω_e·JP₂₁Dω_e + 2x_K·P₃₁Dω_e` with `ζ = (e, ω_e, x_K)` and
/// `D` the error-rate map (`E(R_e)` or `½E_q`).
pub fn eval_vdot_analytic(c: &LyapCoeffs, k: &CompensatorRealization, j: &Mat3, metric: Metric, state: &ErrorState) -> f64 {
    let (e, _) = metric.error_vector(&state.r_e);
    let n = k.n();
    let mut z = DVector::zeros(6 + n);
    z.rows_mut(0, 3).copy_from(&dv(&e));
    z.rows_mut(3, 3).copy_from(&dv(&state.w_e));
    z.rows_mut(6, n).copy_from(&state.x_k);
    let m0 = m0_matrix(c, k, j);
    let dw = metric.error_rate_map(&state.r_e) * state.w_e;
    z.dot(&(&m0 * &z)) + 2.0 * state.w_e.dot(&(j * c.p21 * dw)) + 2.0 * state.x_k.dot(&(&c.p31 * dv(&dw)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compensator::presets::{inertia, default_pid};
    use std::f64::consts::PI;

    #[test]
    fn p_block_identity_case() {
        let j = inertia();
        let mut c = LyapCoeffs::zeros(0);
        c.p11 = 1.0;
        c.p22 = j.try_inverse().unwrap();
        let p = p_matrix(&c, &j, Metric::Chordal);
        assert!((p - DMatrix::identity(6, 6)).amax() < 1e-14);
        c.p11 = 0.0;
        let p = p_matrix(&c, &j, Metric::Chordal);
        assert!(p.symmetric_eigenvalues().min().abs() < 1e-14);
    }

    #[test]
    fn psi_q_doubles_only_the_corner() {
        let j = inertia();
        let mut c = LyapCoeffs::zeros(2);
        c.p11 = 0.7;
        c.p21 = Mat3::new(1.0, 2.0, 0.0, 0.5, -1.0, 0.3, 0.0, 0.1, 0.2);
        c.p31 = DMatrix::from_element(2, 3, 0.4);
        let a = p_matrix(&c, &j, Metric::Chordal);
        let b = p_matrix(&c, &j, Metric::PsiQ);
        let diff = b - a;
        assert!((diff.view((0, 0), (3, 3)) - DMatrix::from_diagonal_element(3, 3, 0.7)).amax() < 1e-15);
        assert_eq!(diff.view((3, 0), (5, 8)).amax(), 0.0);
    }

    #[test]
    fn m0_with_only_p11_is_cross_term() {
        let mut c = LyapCoeffs::zeros(3);
        c.p11 = 2.5;
        let m = m0_matrix(&c, &default_pid(), &inertia());
        let mut expected = DMatrix::zeros(9, 9);
        for i in 0..3 {
            expected[(3 + i, i)] = 2.5;
            expected[(i, 3 + i)] = 2.5;
        }
        assert_eq!(m, expected);
    }

    #[test]
    fn m0_pid_symbolic_expansion() {
        // P₂₁ = εI, P₂₂ = ½J⁻¹, rest 0, baseline PID (B_θ = cI, B_ω = I, C = −k_I I)
        let (kp, kd, ki, _) = crate::compensator::presets::PID_GAINS;
        let j = inertia();
        let jinv = j.try_inverse().unwrap();
        let eps = 0.3;
        let mut c = LyapCoeffs::zeros(3);
        c.p11 = 1.1;
        c.p21 = Mat3::identity() * eps;
        c.p22 = jinv * 0.5;
        let [m11, m21, m22, m31, m32, m33] = m0_blocks(&c, &default_pid(), &j);
        // hand expansion of the defining formulas
        assert!((m11 - dm(&(Mat3::identity() * (-2.0 * eps * kp)))).amax() < 1e-14);
        assert!((m22 - dm(&(jinv * -kd))).amax() < 1e-12);
        assert!((m21 - dm(&(Mat3::identity() * (1.1 - eps * kd) - jinv * (0.5 * kp)))).amax() < 1e-12);
        assert!((m31 - dm(&(Mat3::identity() * (-ki * eps)))).amax() < 1e-14);
        assert!((m32 - dm(&(jinv * (-0.5 * ki)))).amax() < 1e-12);
        assert_eq!(m33.amax(), 0.0);
    }

    #[test]
    fn m0_is_symmetric() {
        let mut c = LyapCoeffs::zeros(3);
        c.p11 = 1.0;
        c.p21 = Mat3::new(0.1, 0.2, 0.3, -0.4, 0.5, 0.6, 0.7, 0.8, -0.9);
        c.p22 = Mat3::new(1.0, 0.2, 0.0, 0.3, 2.0, 0.1, 0.0, -0.1, 3.0);
        c.p31 = DMatrix::from_fn(3, 3, |i, k| (i + 2 * k) as f64 * 0.1);
        c.p32 = DMatrix::from_fn(3, 3, |i, k| (i as f64 - k as f64) * 0.2);
        c.p33 = DMatrix::from_fn(3, 3, |i, k| 1.0 / (1 + i + k) as f64);
        let m = m0_matrix(&c, &default_pid(), &inertia());
        assert_eq!(m, m.transpose());
    }

    #[test]
    fn v_at_equilibria() {
        let j = inertia();
        let mut c = LyapCoeffs::zeros(3);
        c.p11 = 1.7;
        c.p21 = Mat3::identity() * 0.2;
        c.p22 = Mat3::identity();
        let eq = ErrorState { r_e: Rotation::identity(), w_e: Vec3::zeros(), x_k: DVector::zeros(3) };
        assert_eq!(eval_v(&c, &j, Metric::Chordal, &eq), 0.0);
        assert_eq!(eval_vdot_analytic(&c, &default_pid(), &j, Metric::Chordal, &eq), 0.0);
        let anti = ErrorState { r_e: Rotation::from_axis_angle(&Vec3::x(), PI), ..eq };
        assert!((eval_v(&c, &j, Metric::Chordal, &anti) - 4.0 * 1.7).abs() < 1e-12);
    }
}
