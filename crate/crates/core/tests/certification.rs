use geoatt::compensator::presets::{inertia, default_leadlag, default_pid, default_ppi, default_ppid};
use geoatt::compensator::CompensatorRealization;
use geoatt::lyapunov::{assemble_certification_lmis, default_epsilon, verify_certificate};
use geoatt::sdp::{solve_feasibility, SolverOptions};
use geoatt::so3::Metric;

fn certify(k: &CompensatorRealization, metric: Metric) {
    let j = inertia();
    let eps = default_epsilon(&j);
    let lmi = assemble_certification_lmis(k, &j, metric, eps);
    let t = std::time::Instant::now();
    let r = solve_feasibility(&lmi.problem, &SolverOptions::default()).unwrap();
    eprintln!("{:?} margin {:.3e} outer {} newton {} in {:?}", r.status, r.margin, r.iterations, r.newton_steps, t.elapsed());
    for m in &r.block_margins {
        eprintln!("  {} {:.3e}", m.name, m.min_eig);
    }
    assert!(r.is_feasible());
    let (c, s) = lmi.layout.unpack(r.x.as_slice());
    let report = verify_certificate(&c, &s, k, &j, metric, eps);
    assert!(report.pass, "{report:?}");
}

#[test]
fn pid_chordal() {
    certify(&default_pid(), Metric::Chordal);
}

#[test]
fn pid_psi_q() {
    certify(&default_pid(), Metric::PsiQ);
}

#[test]
fn ppi_chordal() {
    certify(&default_ppi(), Metric::Chordal);
}

#[test]
fn ppid_chordal() {
    certify(&default_ppid(), Metric::Chordal);
}

#[test]
fn leadlag_chordal() {
    certify(&default_leadlag(), Metric::Chordal);
}
