//! Closed-loop attitude tracking simulation.
//!
//! The plant is the full rigid body `Ṙ = Rω^×`, `Jω̇ = −ω×Jω − Γω + τ` driven
//! by `τ = u_C + u`, where `u_C` cancels gyroscopic and reference terms and
//! `u` is the dynamic compensator acting on the tracking error
//! `R_e = R_dᵀR`, `ω_e = ω − R_eᵀω_d`. The reference `(R_d, ω_d)` is itself
//! integrated alongside the body.
//!
//! Attitudes are advanced with a four-stage Runge–Kutta–Munthe-Kaas scheme,
//! the Euclidean states with classical RK4 on the same stages.

mod montecarlo;

pub use montecarlo::{monte_carlo_agas, sample_initial_attitude, McOptions, McReport, McRun};

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DVector;
use serde::Serialize;

use crate::compensator::CompensatorRealization;
use crate::lyapunov::{eval_v, eval_vdot_analytic, ErrorState, LyapCoeffs};
use crate::so3::{exp_vec, log_vec, project_so3, Mat3, Metric, Rotation, Vec3};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 6.0;
/// Steps between re-orthonormalizations of the integrated attitudes.
pub const REPROJECT_EVERY: usize = 1000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("time step {0} outside (0, 0.01]")]
    BadStep(f64),
    #[error("horizon {0} must be nonnegative and finite")]
    BadHorizon(f64),
    #[error("inertia is not invertible")]
    SingularInertia,
    #[error("initial compensator state has length {found}, expected {expected}")]
    StateLength { expected: usize, found: usize },
    #[error("state became non-finite at t = {0}")]
    Diverged(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyState {
    pub r: Rotation,
    pub w: Vec3,
}

impl RigidBodyState {
    pub fn at_rest(r: Rotation) -> Self {
        RigidBodyState { r, w: Vec3::zeros() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceState {
    pub r_d: Rotation,
    pub w_d: Vec3,
    pub w_d_dot: Vec3,
}

impl ReferenceState {
    pub fn fixed(r_d: Rotation) -> Self {
        ReferenceState { r_d, w_d: Vec3::zeros(), w_d_dot: Vec3::zeros() }
    }
}

/// Piecewise target attitude: a full roll flip on `[0, 2]`, a full pitch flip
/// on `(2.5, 4.5]`, identity otherwise.
pub fn flip_reference(t: f64) -> Rotation {
    if (0.0..=2.0).contains(&t) {
        exp_vec(&(Vec3::x() * (2.0 * PI * t)))
    } else if t > 2.5 && t <= 4.5 {
        exp_vec(&(Vec3::y() * (2.0 * PI * (t - 2.5))))
    } else {
        Rotation::identity()
    }
}

/// Time-varying target for the reference filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Fixed(Rotation),
    Flip,
}

impl Target {
    pub fn at(&self, t: f64) -> Rotation {
        match self {
            Target::Fixed(r) => *r,
            Target::Flip => flip_reference(t),
        }
    }
}

/// How `ω_d` evolves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceDynamics {
    /// `ω̇_d = 0`; with `ω_d = 0` the reference is fixed.
    ConstantRate,
    /// `ω̇_d = ω_n² log(R_dᵀR̄)^∨ − 2ζω_n ω_d`.
    Filter { target: Target, omega_n: f64, zeta: f64 },
}

impl ReferenceDynamics {
    pub fn flip_filter() -> Self {
        ReferenceDynamics::Filter { target: Target::Flip, omega_n: 15.0, zeta: 0.707 }
    }

    pub fn accel(&self, t: f64, r_d: &Rotation, w_d: &Vec3) -> Vec3 {
        match self {
            ReferenceDynamics::ConstantRate => Vec3::zeros(),
            ReferenceDynamics::Filter { target, omega_n, zeta } => {
                let err = log_vec(&(r_d.transpose() * target.at(t)));
                err * (omega_n * omega_n) - w_d * (2.0 * zeta * omega_n)
            }
        }
    }
}

/// `ξ + ½Θ×ξ + (1/12)Θ×(Θ×ξ)`, the truncated inverse of the right-trivialized
/// exponential differential.
fn dexpinv(theta: &Vec3, xi: &Vec3) -> Vec3 {
    let c = theta.cross(xi);
    xi + c * 0.5 + theta.cross(&c) / 12.0
}

/// One step of the reference filter toward a fixed `target`.
pub fn ref_filter_step(state: &ReferenceState, target: &Rotation, omega_n: f64, zeta: f64, dt: f64) -> ReferenceState {
    let dynamics = ReferenceDynamics::Filter { target: Target::Fixed(*target), omega_n, zeta };
    let f = |theta: &Vec3, w: &Vec3| {
        let r = state.r_d * exp_vec(theta);
        (*w, dynamics.accel(0.0, &r, w))
    };
    let (o1, a1) = f(&Vec3::zeros(), &state.w_d);
    let k1 = (dexpinv(&Vec3::zeros(), &o1) * dt, a1 * dt);
    let (o2, a2) = f(&(k1.0 * 0.5), &(state.w_d + k1.1 * 0.5));
    let k2 = (dexpinv(&(k1.0 * 0.5), &o2) * dt, a2 * dt);
    let (o3, a3) = f(&(k2.0 * 0.5), &(state.w_d + k2.1 * 0.5));
    let k3 = (dexpinv(&(k2.0 * 0.5), &o3) * dt, a3 * dt);
    let (o4, a4) = f(&k3.0, &(state.w_d + k3.1));
    let k4 = (dexpinv(&k3.0, &o4) * dt, a4 * dt);
    let theta = (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) / 6.0;
    let w_d = state.w_d + (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) / 6.0;
    let r_d = state.r_d * exp_vec(&theta);
    ReferenceState { r_d, w_d, w_d_dot: dynamics.accel(0.0, &r_d, &w_d) }
}

/// `ω̇_v = −ω_e×(R_eᵀω_d) + R_eᵀω̇_d` for `ω_v = R_eᵀω_d`.
pub fn omega_v_dot(r_e: &Rotation, w: &Vec3, w_d: &Vec3, w_d_dot: &Vec3) -> Vec3 {
    let rt = r_e.transpose();
    let w_v = &rt * w_d;
    let w_e = w - w_v;
    -w_e.cross(&w_v) + &rt * w_d_dot
}

/// `u_C = ω×Jω + Jω̇_v (+ ΓR_eᵀω_d)`.
pub fn cancellation_torque(j: &Mat3, r_e: &Rotation, w: &Vec3, w_d: &Vec3, w_d_dot: &Vec3, gamma: Option<&Mat3>) -> Vec3 {
    let mut u = w.cross(&(j * w)) + j * omega_v_dot(r_e, w, w_d, w_d_dot);
    if let Some(g) = gamma {
        u += g * (&r_e.transpose() * w_d);
    }
    u
}

/// Plant, compensator and attitude error function.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop {
    pub controller: CompensatorRealization,
    pub j: Mat3,
    pub metric: Metric,
    j_inv: Mat3,
}

/// Full simulation state.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub body: RigidBodyState,
    pub reference: ReferenceState,
    pub x_k: DVector<f64>,
}

impl SimState {
    pub fn new(body: RigidBodyState, reference: ReferenceState, x_k: DVector<f64>) -> Self {
        SimState { t: 0.0, body, reference, x_k }
    }

    pub fn error_state(&self) -> ErrorState {
        let r_e = self.reference.r_d.transpose() * self.body.r;
        let w_e = self.body.w - &r_e.transpose() * &self.reference.w_d;
        ErrorState { r_e, w_e, x_k: self.x_k.clone() }
    }
}

/// Everything the vector field produces at one stage.
#[derive(Debug, Clone)]
struct Eval {
    w_dot: Vec3,
    w_d_dot: Vec3,
    x_dot: DVector<f64>,
    e: Vec3,
    w_e: Vec3,
    u: Vec3,
    u_c: Vec3,
    clamped: bool,
}

impl ClosedLoop {
    pub fn new(controller: CompensatorRealization, j: Mat3, metric: Metric) -> Result<Self, SimError> {
        let j_inv = j.try_inverse().ok_or(SimError::SingularInertia)?;
        Ok(ClosedLoop { controller, j, metric, j_inv })
    }

    fn eval(&self, t: f64, r: &Rotation, w: &Vec3, r_d: &Rotation, w_d: &Vec3, x_k: &DVector<f64>, refdyn: &ReferenceDynamics) -> Eval {
        let r_e = r_d.transpose() * *r;
        let w_e = w - &r_e.transpose() * w_d;
        let w_d_dot = refdyn.accel(t, r_d, w_d);
        let (e, clamped) = self.metric.error_vector(&r_e);
        let k = &self.controller;
        let u = k.output(x_k, &e, &w_e);
        let u_c = cancellation_torque(&self.j, &r_e, w, w_d, &w_d_dot, k.gamma.as_ref());
        let tau = u_c + u;
        let w_dot = self.j_inv * (tau - w.cross(&(self.j * w)) - k.gamma_or_zero() * w);
        let x_dot = k.state_derivative(x_k, &e, &w_e);
        Eval { w_dot, w_d_dot, x_dot, e, w_e, u, u_c, clamped }
    }

    /// One RKMK4 step of length `dt`.
    pub fn step(&self, s: &SimState, refdyn: &ReferenceDynamics, dt: f64) -> Result<SimState, SimError> {
        if !(dt > 0.0 && dt <= 0.01) {
            return Err(SimError::BadStep(dt));
        }
        let (r0, rd0) = (s.body.r, s.reference.r_d);
        let stage = |c: f64, th: &Vec3, thd: &Vec3, dw: &Vec3, dwd: &Vec3, dx: &DVector<f64>| {
            let r = r0 * exp_vec(th);
            let rd = rd0 * exp_vec(thd);
            let w = s.body.w + dw;
            let wd = s.reference.w_d + dwd;
            let x = &s.x_k + dx;
            let ev = self.eval(s.t + c * dt, &r, &w, &rd, &wd, &x, refdyn);
            (dexpinv(th, &w) * dt, dexpinv(thd, &wd) * dt, ev.w_dot * dt, ev.w_d_dot * dt, ev.x_dot * dt)
        };
        let z3 = Vec3::zeros();
        let zx = DVector::zeros(s.x_k.len());
        let k1 = stage(0.0, &z3, &z3, &z3, &z3, &zx);
        let k2 = stage(0.5, &(k1.0 * 0.5), &(k1.1 * 0.5), &(k1.2 * 0.5), &(k1.3 * 0.5), &(&k1.4 * 0.5));
        let k3 = stage(0.5, &(k2.0 * 0.5), &(k2.1 * 0.5), &(k2.2 * 0.5), &(k2.3 * 0.5), &(&k2.4 * 0.5));
        let k4 = stage(1.0, &k3.0, &k3.1, &k3.2, &k3.3, &k3.4);
        let comb = |a: Vec3, b: Vec3, c: Vec3, d: Vec3| (a + b * 2.0 + c * 2.0 + d) / 6.0;
        let theta = comb(k1.0, k2.0, k3.0, k4.0);
        let theta_d = comb(k1.1, k2.1, k3.1, k4.1);
        let w = s.body.w + comb(k1.2, k2.2, k3.2, k4.2);
        let w_d = s.reference.w_d + comb(k1.3, k2.3, k3.3, k4.3);
        let x_k = &s.x_k + (&k1.4 + &k2.4 * 2.0 + &k3.4 * 2.0 + &k4.4) / 6.0;
        let t = s.t + dt;
        let r_d = rd0 * exp_vec(&theta_d);
        let next = SimState {
            t,
            body: RigidBodyState { r: r0 * exp_vec(&theta), w },
            reference: ReferenceState { r_d, w_d, w_d_dot: refdyn.accel(t, &r_d, &w_d) },
            x_k,
        };
        if !(next.body.w.iter().chain(next.x_k.iter()).all(|v| v.is_finite()) && next.body.r.matrix().iter().all(|v| v.is_finite())) {
            return Err(SimError::Diverged(t));
        }
        Ok(next)
    }

    fn record(&self, s: &SimState, refdyn: &ReferenceDynamics, coeffs: Option<&LyapCoeffs>) -> Sample {
        let ev = self.eval(s.t, &s.body.r, &s.body.w, &s.reference.r_d, &s.reference.w_d, &s.x_k, refdyn);
        let es = s.error_state();
        let (v, v_dot) = match coeffs {
            Some(c) => (eval_v(c, &self.j, self.metric, &es), eval_vdot_analytic(c, &self.controller, &self.j, self.metric, &es)),
            None => (f64::NAN, f64::NAN),
        };
        Sample {
            t: s.t,
            r: s.body.r,
            w: s.body.w,
            x_k: s.x_k.clone(),
            r_d: s.reference.r_d,
            w_d: s.reference.w_d,
            e: ev.e,
            w_e: ev.w_e,
            theta_e: es.r_e.angle(),
            u: ev.u,
            u_c: ev.u_c,
            v,
            v_dot,
            clamped: ev.clamped,
        }
    }

    /// Integrates from `initial` over `[0, horizon]` with `floor(horizon/dt)`
    /// steps. With `coeffs`, the `V` and `V̇` columns are filled.
    pub fn simulate(
        &self,
        initial: SimState,
        refdyn: &ReferenceDynamics,
        coeffs: Option<&LyapCoeffs>,
        dt: f64,
        horizon: f64,
    ) -> Result<Trajectory, SimError> {
        if !(dt > 0.0 && dt <= 0.01) {
            return Err(SimError::BadStep(dt));
        }
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(SimError::BadHorizon(horizon));
        }
        if initial.x_k.len() != self.controller.n() {
            return Err(SimError::StateLength { expected: self.controller.n(), found: initial.x_k.len() });
        }
        let steps = (horizon / dt + 1e-9).floor() as usize;
        let mut samples = Vec::with_capacity(steps + 1);
        let mut s = initial;
        s.reference.w_d_dot = refdyn.accel(s.t, &s.reference.r_d, &s.reference.w_d);
        samples.push(self.record(&s, refdyn, coeffs));
        for i in 1..=steps {
            let mut next = self.step(&s, refdyn, dt)?;
            next.t = i as f64 * dt;
            if i % REPROJECT_EVERY == 0 {
                next.body.r = project_so3(next.body.r.matrix()).map_err(|_| SimError::Diverged(next.t))?;
                next.reference.r_d = project_so3(next.reference.r_d.matrix()).map_err(|_| SimError::Diverged(next.t))?;
            }
            s = next;
            samples.push(self.record(&s, refdyn, coeffs));
        }
        Ok(Trajectory { dt, samples })
    }

    /// Initial state with `x_K = 0`.
    pub fn start(&self, body: RigidBodyState, reference: ReferenceState) -> SimState {
        SimState::new(body, reference, DVector::zeros(self.controller.n()))
    }

    /// Regulation to `R_d = I` from an error `(R_e, ω_e)` with `x_K = 0`.
    pub fn regulation_start(&self, r0: Rotation, w0: Vec3) -> SimState {
        self.start(RigidBodyState { r: r0, w: w0 }, ReferenceState::fixed(Rotation::identity()))
    }
}

/// One trajectory record.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub r: Rotation,
    pub w: Vec3,
    pub x_k: DVector<f64>,
    pub r_d: Rotation,
    pub w_d: Vec3,
    /// `e_R` or `e_q`, per the metric.
    pub e: Vec3,
    pub w_e: Vec3,
    pub theta_e: f64,
    pub u: Vec3,
    pub u_c: Vec3,
    pub v: f64,
    pub v_dot: f64,
    /// The `Ψ_q` error vector was clamped at the antipodal guard.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySummary {
    pub samples: usize,
    pub horizon: f64,
    pub max_theta_e_deg: f64,
    pub final_theta_e_deg: f64,
    pub final_omega_e_norm: f64,
    pub max_v_increase: Option<f64>,
    pub clamped_samples: usize,
}

pub const CSV_HEADER: &str = "t,theta_e_deg,eR_x,eR_y,eR_z,we_x,we_y,we_z,u_x,u_y,u_z,V,Vdot";

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("at least the initial sample")
    }

    /// Largest single-step increase of `V` (negative when strictly decreasing).
    pub fn max_v_increase(&self) -> Option<f64> {
        if self.samples.iter().any(|s| s.v.is_nan()) {
            return None;
        }
        Some(self.samples.windows(2).map(|w| w[1].v - w[0].v).fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn max_theta_e(&self) -> f64 {
        self.samples.iter().map(|s| s.theta_e).fold(0.0, f64::max)
    }

    pub fn summary(&self) -> TrajectorySummary {
        let last = self.last();
        TrajectorySummary {
            samples: self.samples.len(),
            horizon: last.t,
            max_theta_e_deg: self.max_theta_e().to_degrees(),
            final_theta_e_deg: last.theta_e.to_degrees(),
            final_omega_e_norm: last.w_e.norm(),
            max_v_increase: self.max_v_increase(),
            clamped_samples: self.samples.iter().filter(|s| s.clamped).count(),
        }
    }

    /// Writes the trajectory as CSV with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for s in &self.samples {
            let vals = [
                s.t,
                s.theta_e.to_degrees(),
                s.e.x,
                s.e.y,
                s.e.z,
                s.w_e.x,
                s.w_e.y,
                s.w_e.z,
                s.u.x,
                s.u.y,
                s.u.z,
                s.v,
                s.v_dot,
            ];
            let line: Vec<String> = vals.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}
