//! Multicopter case-study inertia and controller gains.

use super::{build_baseline_pid, build_cascade_ppi, build_cascade_ppid, geometrize_cascade, CompensatorRealization, TransferFunction};
use crate::so3::Mat3;

/// Body inertia (kg·m²), including the off-diagonal products of inertia.
pub fn inertia() -> Mat3 {
    Mat3::new(0.0411, 0.002, -0.001, 0.002, 0.0478, 0.003, -0.001, 0.003, 0.0599)
}

/// `(k_P, k_D, k_I, c)` of the baseline geometric PID.
pub const PID_GAINS: (f64, f64, f64, f64) = (7.3878, 1.7238, 0.9358, 5.0);

/// Attitude gain and rate-loop natural frequency of the cascade designs.
pub const CASCADE_K_R: f64 = 4.383;
pub const CASCADE_OMEGA_N: f64 = 15.0;
/// Acceleration feedback gain and derivative filter bandwidth of P/PID.
pub const PPID_K_A: f64 = 0.00263;
pub const PPID_N: f64 = 75.0;

pub fn default_pid() -> CompensatorRealization {
    let (kp, kd, ki, c) = PID_GAINS;
    build_baseline_pid(kp, kd, ki, c).expect("positive gains")
}

/// `(K_R, K_ω, K_I) = (4.383 I, 2ω_n J, ω_n² J)` for inertia `j`.
pub fn ppi_gains(j: &Mat3) -> (Mat3, Mat3, Mat3) {
    let wn = CASCADE_OMEGA_N;
    (Mat3::identity() * CASCADE_K_R, j * (2.0 * wn), j * (wn * wn))
}

pub fn default_ppi() -> CompensatorRealization {
    let (k_r, k_w, k_i) = ppi_gains(&inertia());
    build_cascade_ppi(&k_r, &k_w, &k_i).expect("SPD gains")
}

pub fn default_ppid() -> CompensatorRealization {
    ppid_with(PPID_K_A)
}

pub fn ppid_with(k_a: f64) -> CompensatorRealization {
    let (k_r, k_w, k_i) = ppi_gains(&inertia());
    build_cascade_ppid(&k_r, &k_w, &k_i, &(Mat3::identity() * k_a), &(Mat3::identity() * PPID_N)).expect("valid gains")
}

/// `(K_R(s), K_ω(s))` of the lead-lag cascade.
pub fn leadlag_filters() -> (TransferFunction, TransferFunction) {
    let k_r = TransferFunction::zpk(&[-1.653, -0.05042], &[-2.5, -0.01], 37.5).expect("proper");
    let k_w = TransferFunction::zpk(&[-2.0], &[-2.5], 5.0).expect("proper");
    (k_r, k_w)
}

/// The 9-state geometrized lead-lag cascade.
pub fn default_leadlag() -> CompensatorRealization {
    let (k_r, k_w) = leadlag_filters();
    geometrize_cascade(&k_r, &k_w).expect("proper filters")
}
