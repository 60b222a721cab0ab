use std::f64::consts::PI;

use proptest::prelude::*;

use geoatt::so3::{
    chordal_psi, e_map, err_vec_chordal, err_vec_q, exp_so3, exp_vec, hat, log_so3, project_so3, psi_q, vee, AxisAngle, Mat3, Metric,
    Rotation, Vec3,
};

fn unit() -> impl Strategy<Value = Vec3> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
        .prop_filter("nonzero", |(x, y, z)| x * x + y * y + z * z > 1e-4)
        .prop_map(|(x, y, z)| Vec3::new(x, y, z).normalize())
}

fn vec3() -> impl Strategy<Value = Vec3> {
    (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn rotation() -> impl Strategy<Value = Rotation> {
    (unit(), 0.0..PI).prop_map(|(a, t)| exp_so3(&AxisAngle::new(a, t)))
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(2000) })]

    #[test]
    fn exp_log_round_trip(axis in unit(), theta in 0.0..(PI - 1e-6)) {
        let r = exp_so3(&AxisAngle::new(axis, theta));
        let back = log_so3(&r);
        prop_assert!((back.angle - theta).abs() < 1e-8);
        if theta > 1e-6 {
            prop_assert!((back.rotation_vector() - axis * theta).norm() < 1e-8);
        }
        prop_assert!(r.orthonormality_residual() < 1e-12);
        prop_assert!((r.matrix().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hat_vee_inverse(v in vec3()) {
        prop_assert_eq!(vee(&hat(&v)).unwrap(), v);
        prop_assert!((hat(&v) + hat(&v).transpose()).norm() == 0.0);
    }

    #[test]
    fn projection_is_idempotent_on_rotations(r in rotation(), noise in vec3()) {
        let p = project_so3(r.matrix()).unwrap();
        prop_assert!((p.matrix() - r.matrix()).norm() < 1e-12);
        let bumped = r.matrix() + Mat3::from_diagonal(&(noise * 1e-4));
        let q = project_so3(&bumped).unwrap();
        prop_assert!(q.orthonormality_residual() < 1e-12);
        prop_assert!((q.matrix() - r.matrix()).norm() < 1e-2);
    }

    #[test]
    fn potentials_are_invariant_under_conjugation(r in rotation(), s in rotation()) {
        let c = s * r * s.transpose();
        prop_assert!((chordal_psi(&c) - chordal_psi(&r)).abs() < 1e-12);
        let margin = (1.0 + r.trace()).max(f64::MIN_POSITIVE);
        prop_assert!((psi_q(&c) - psi_q(&r)).abs() < 1e-12 + 1e-15 / margin.sqrt());
        prop_assert!((err_vec_chordal(&c) - s.matrix() * err_vec_chordal(&r)).norm() < 1e-12);
    }

    #[test]
    fn potentials_closed_form(axis in unit(), theta in 0.0..PI) {
        let r = exp_so3(&AxisAngle::new(axis, theta));
        prop_assert!((chordal_psi(&r) - (1.0 - theta.cos())).abs() < 1e-12);
        let margin = (1.0 + r.trace()).max(f64::MIN_POSITIVE);
        prop_assert!((psi_q(&r) - 2.0 * (1.0 - (0.5 * theta).cos())).abs() < 1e-12 + 1e-15 / margin.sqrt());
        prop_assert!((err_vec_chordal(&r) - axis * theta.sin()).norm() < 1e-12);
        if theta < PI - 1e-3 {
            // e_q from a rounded matrix is conditioned like 1/(1 + tr R)
            let tol = 1e-12 + 1e-15 / margin;
            prop_assert!((err_vec_q(&r).unwrap() - axis * (0.5 * theta).sin()).norm() < tol);
        }
    }
}

#[test]
fn e_map_at_identity_and_pi() {
    assert_eq!(e_map(&Mat3::identity()), Mat3::identity());
    let r = Rotation::from_matrix(Mat3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0))).unwrap();
    let e = e_map(r.matrix());
    let ev = (e.transpose() * e).symmetric_eigenvalues();
    for (got, want) in [ev.min(), ev.max()].into_iter().zip([0.0, 1.0]) {
        assert!((got - want).abs() < 1e-15);
    }
}

#[test]
fn metric_parses_and_prints() {
    for m in [Metric::Chordal, Metric::PsiQ] {
        assert_eq!(m.to_string().parse::<Metric>().unwrap(), m);
    }
    assert!("geodesic".parse::<Metric>().is_err());
}

#[test]
fn exp_of_small_vector_is_first_order() {
    let v = Vec3::new(1e-9, -2e-9, 3e-9);
    let r = exp_vec(&v);
    assert!((r.matrix() - (Mat3::identity() + hat(&v))).norm() < 1e-17);
}
