use nalgebra::DVector;

use geoatt::compensator::presets::{inertia, default_leadlag, default_pid};
use geoatt::compensator::CompensatorRealization;
use geoatt::linear::linearize_closed_loop;
use geoatt::lyapunov::{assemble_certification_lmis, default_epsilon, LyapCoeffs};
use geoatt::sdp::{solve_feasibility, SolverOptions};
use geoatt::sim::{ClosedLoop, ReferenceDynamics, ReferenceState, RigidBodyState, SimState};
use geoatt::so3::{exp_vec, hat, log_vec, Mat3, Metric, Rotation, Vec3};

fn certify(k: &CompensatorRealization) -> LyapCoeffs {
    let j = inertia();
    let lmi = assemble_certification_lmis(k, &j, Metric::Chordal, default_epsilon(&j));
    let r = solve_feasibility(&lmi.problem, &SolverOptions::default()).unwrap();
    let c = lmi.layout.unpack(r.x.as_slice()).0;
    normalized(&c)
}

/// Any positive multiple of a certificate is a certificate; fix `p₁₁ = 1`.
fn normalized(c: &LyapCoeffs) -> LyapCoeffs {
    let k = 1.0 / c.p11;
    LyapCoeffs { p11: 1.0, p21: c.p21 * k, p22: c.p22 * k, p31: &c.p31 * k, p32: &c.p32 * k, p33: &c.p33 * k }
}

fn e_r(r: &Mat3) -> Vec3 {
    let a = (r - r.transpose()) * 0.5;
    Vec3::new(a[(2, 1)], a[(0, 2)], a[(1, 0)])
}

/// Error dynamics `Ṙ_e = R_eω_e^×`, `Jω̇_e = u`, `ẋ_K = Ax + B_θe_R + B_ωω_e`,
/// integrated with classical RK4 on the nine entries of `R_e`.
fn error_system(k: &CompensatorRealization, j: &Mat3, r0: Mat3, w0: Vec3, x0: DVector<f64>, dt: f64, steps: usize) -> (Mat3, Vec3, DVector<f64>) {
    let ji = j.try_inverse().unwrap();
    let f = |r: &Mat3, w: &Vec3, x: &DVector<f64>| {
        let e = e_r(r);
        let u = &k.c_k * x + nalgebra::DVector::from_column_slice((k.d_theta * e + k.d_omega * w).as_slice());
        let u = Vec3::new(u[0], u[1], u[2]);
        let xd = &k.a_k * x + &k.b_theta * DVector::from_column_slice(e.as_slice()) + &k.b_omega * DVector::from_column_slice(w.as_slice());
        (r * hat(w), ji * u, xd)
    };
    let (mut r, mut w, mut x) = (r0, w0, x0);
    for _ in 0..steps {
        let k1 = f(&r, &w, &x);
        let k2 = f(&(r + k1.0 * (dt / 2.0)), &(w + k1.1 * (dt / 2.0)), &(&x + &k1.2 * (dt / 2.0)));
        let k3 = f(&(r + k2.0 * (dt / 2.0)), &(w + k2.1 * (dt / 2.0)), &(&x + &k2.2 * (dt / 2.0)));
        let k4 = f(&(r + k3.0 * dt), &(w + k3.1 * dt), &(&x + &k3.2 * dt));
        r += (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * (dt / 6.0);
        w += (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (dt / 6.0);
        x += (&k1.2 + &k2.2 * 2.0 + &k3.2 * 2.0 + &k4.2) * (dt / 6.0);
    }
    (r, w, x)
}

#[test]
fn full_system_matches_error_system_while_tracking() {
    let j = inertia();
    for k in [default_pid(), default_leadlag()] {
        let sys = ClosedLoop::new(k.clone(), j, Metric::Chordal).unwrap();
        let body = RigidBodyState { r: exp_vec(&Vec3::new(0.6, -0.4, 0.9)), w: Vec3::new(0.3, -0.2, 0.1) };
        let s0 = sys.start(body, ReferenceState::fixed(Rotation::identity()));
        let tr = sys.simulate(s0.clone(), &ReferenceDynamics::flip_filter(), None, 1e-3, 1.0).unwrap();
        assert!(tr.samples.iter().any(|s| s.w_d.norm() > 1.0));
        let e0 = s0.error_state();
        let (r, w, x) = error_system(&k, &j, *e0.r_e.matrix(), e0.w_e, e0.x_k, 1e-4, 10_000);
        let last = tr.last();
        let r_e = last.r_d.transpose() * last.r;
        assert!((r_e.matrix() - r).norm() < 1e-8, "{}", (r_e.matrix() - r).norm());
        assert!((last.w_e - w).norm() < 1e-8, "{}", (last.w_e - w).norm());
        assert!((&last.x_k - x).norm() < 1e-8);
    }
}

#[test]
fn orthogonality_drift_over_a_million_steps() {
    let sys = ClosedLoop::new(default_pid(), inertia(), Metric::Chordal).unwrap();
    let mut s = sys.start(
        RigidBodyState { r: exp_vec(&Vec3::new(0.1, 0.2, 0.3)), w: Vec3::new(2.0, -1.0, 0.5) },
        ReferenceState { r_d: Rotation::identity(), w_d: Vec3::new(0.0, 0.0, 1.0), w_d_dot: Vec3::zeros() },
    );
    for _ in 0..1_000_000 {
        s = sys.step(&s, &ReferenceDynamics::ConstantRate, 1e-3).unwrap();
    }
    assert!(s.body.r.orthonormality_residual() <= 1e-9, "{}", s.body.r.orthonormality_residual());
    assert!(s.reference.r_d.orthonormality_residual() <= 1e-9);
}

#[test]
fn v_nonincreasing_and_vdot_agrees_with_differences() {
    let j = inertia();
    for k in [default_pid(), default_leadlag()] {
        let c = certify(&k);
        let sys = ClosedLoop::new(k, j, Metric::Chordal).unwrap();
        let start = sys.regulation_start(exp_vec(&Vec3::new(2.0, -1.0, 0.5)), Vec3::new(1.0, 0.5, -0.5));
        let tr = sys.simulate(start.clone(), &ReferenceDynamics::ConstantRate, Some(&c), 1e-3, 3.0).unwrap();
        assert!(tr.max_v_increase().unwrap() <= 1e-9);
        assert!(tr.samples.iter().all(|s| s.v_dot < 0.0 || s.theta_e < 1e-6));

        // forward differences are first order in dt
        let err = |dt: f64| {
            let tr = sys.simulate(start.clone(), &ReferenceDynamics::ConstantRate, Some(&c), dt, 0.2).unwrap();
            tr.samples.windows(2).map(|w| ((w[1].v - w[0].v) / dt - w[0].v_dot).abs()).fold(0.0, f64::max)
        };
        let (a, b) = (err(2e-4), err(1e-4));
        assert!((1.8..2.2).contains(&(a / b)), "{a} {b}");
        let central = sys.simulate(start.clone(), &ReferenceDynamics::ConstantRate, Some(&c), 1e-5, 0.05).unwrap();
        let worst = central.samples.windows(3).map(|w| ((w[2].v - w[0].v) / 2e-5 - w[1].v_dot).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-4, "{worst}");
    }
}

#[test]
fn nonlinear_matches_linearization_for_small_errors() {
    let j = inertia();
    for k in [default_pid(), default_leadlag()] {
        let n = k.n();
        let lin = linearize_closed_loop(&k, &j).unwrap();
        let sys = ClosedLoop::new(k, j, Metric::Chordal).unwrap();
        let xi0 = Vec3::new(1e-3, -5e-4, 7e-4);
        let tr = sys.simulate(sys.regulation_start(exp_vec(&xi0), Vec3::zeros()), &ReferenceDynamics::ConstantRate, None, 1e-3, 0.5).unwrap();
        let mut z0 = DVector::zeros(6 + n);
        z0.rows_mut(0, 3).copy_from(&xi0);
        let phi = (&lin.a * 0.5).exp();
        let z = phi * z0;
        let last = tr.last();
        let xi = log_vec(&(last.r_d.transpose() * last.r));
        let diff = (xi - Vec3::new(z[0], z[1], z[2])).norm() + (last.w_e - Vec3::new(z[3], z[4], z[5])).norm();
        assert!(diff < 1e-5, "{diff}");
    }
}

#[test]
fn antipodal_start_stalls_and_nudge_escapes() {
    let sys = ClosedLoop::new(default_pid(), inertia(), Metric::Chordal).unwrap();
    let at_pi = Rotation::from_matrix(Mat3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0))).unwrap();
    let tr = sys.simulate(sys.regulation_start(at_pi, Vec3::zeros()), &ReferenceDynamics::ConstantRate, None, 1e-3, 5.0).unwrap();
    assert!(tr.samples.iter().all(|s| s.e.norm() < 1e-15 && (s.theta_e - std::f64::consts::PI).abs() < 1e-12));
    let nudged = exp_vec(&(Vec3::x() * (std::f64::consts::PI - 1e-6)));
    let tr = sys.simulate(sys.regulation_start(nudged, Vec3::zeros()), &ReferenceDynamics::ConstantRate, None, 1e-3, 20.0).unwrap();
    assert!(tr.last().theta_e < 1e-4 && tr.last().w_e.norm() < 1e-4);
}

#[test]
fn zero_horizon_gives_one_record() {
    let sys = ClosedLoop::new(default_pid(), inertia(), Metric::PsiQ).unwrap();
    let tr = sys.simulate(sys.regulation_start(Rotation::identity(), Vec3::zeros()), &ReferenceDynamics::ConstantRate, None, 1e-3, 0.0).unwrap();
    assert_eq!(tr.samples.len(), 1);
    let _: &SimState;
}
