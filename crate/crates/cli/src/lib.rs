//! Batch workflows behind the `geoatt` binary.
//!
//! Exit codes: `0` success or certified, `1` input error, `2` certificate
//! not found, `3` analysis failure.

use std::path::{Path, PathBuf};

use serde::Serialize;

use geoatt::compensator::presets::{self, inertia, PID_GAINS, PPID_K_A, PPID_N};
use geoatt::compensator::{build_baseline_pid, build_cascade_ppi, build_cascade_ppid, CompensatorError, ControllerSpec, SpecFileError};
use geoatt::linear::{axis_metrics, AxisMetrics, LinearError};
use geoatt::lyapunov::{assemble_certification_lmis, default_epsilon, verify_certificate, Certificate, CertificateError, CertificateReport};
use geoatt::sdp::{solve_feasibility, FeasibilityResult, SdpError, SolverOptions};
use geoatt::sim::{
    monte_carlo_agas, ClosedLoop, McOptions, McReport, ReferenceDynamics, ReferenceState, RigidBodyState, SimError, Trajectory, TrajectorySummary,
};
use geoatt::so3::{exp_vec, Mat3, Metric, Rotation, Vec3};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CERTIFIED: i32 = 2;
pub const EXIT_ANALYSIS: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("unknown controller `{0}` (expected pid, ppi, ppid or leadlag)")]
    UnknownController(String),
    #[error(transparent)]
    Spec(#[from] SpecFileError),
    #[error(transparent)]
    Compensator(#[from] CompensatorError),
    #[error(transparent)]
    Certificate(#[from] CertificateError),
    #[error(transparent)]
    Solver(#[from] SdpError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Linear(_) => EXIT_ANALYSIS,
            _ => EXIT_INPUT,
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}

/// Parses nine comma-separated row-major entries.
pub fn parse_inertia(text: &str) -> Result<Mat3, CliError> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("bad inertia `{text}`: {e}")))?;
    if v.len() != 9 {
        return Err(CliError::Usage(format!("inertia needs 9 entries, got {}", v.len())));
    }
    Ok(Mat3::from_row_slice(&v))
}

pub fn parse_vec3(text: &str) -> Result<Vec3, CliError> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("bad vector `{text}`: {e}")))?;
    if v.len() != 3 {
        return Err(CliError::Usage(format!("vector needs 3 entries, got {}", v.len())));
    }
    Ok(Vec3::from_row_slice(&v))
}

/// Optional gain overrides for [`cmd_gen_controller`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GainOverrides {
    pub kp: Option<f64>,
    pub kd: Option<f64>,
    pub ki: Option<f64>,
    pub c: Option<f64>,
    pub k_r: Option<f64>,
    pub omega_n: Option<f64>,
    pub k_a: Option<f64>,
    pub filter_n: Option<f64>,
}

/// Builds one of the named controller families with default gains, for the
/// given inertia.
pub fn cmd_gen_controller(name: &str, g: &GainOverrides, j: &Mat3) -> Result<ControllerSpec, CliError> {
    let id = Mat3::identity();
    let cascade = || {
        let wn = g.omega_n.unwrap_or(presets::CASCADE_OMEGA_N);
        (id * g.k_r.unwrap_or(presets::CASCADE_K_R), j * (2.0 * wn), j * (wn * wn))
    };
    let realization = match name {
        "pid" => {
            let (kp, kd, ki, c) = PID_GAINS;
            build_baseline_pid(g.kp.unwrap_or(kp), g.kd.unwrap_or(kd), g.ki.unwrap_or(ki), g.c.unwrap_or(c))?
        }
        "ppi" => {
            let (k_r, k_w, k_i) = cascade();
            build_cascade_ppi(&k_r, &k_w, &k_i)?
        }
        "ppid" => {
            let (k_r, k_w, k_i) = cascade();
            build_cascade_ppid(&k_r, &k_w, &k_i, &(id * g.k_a.unwrap_or(PPID_K_A)), &(id * g.filter_n.unwrap_or(PPID_N)))?
        }
        "leadlag" => presets::default_leadlag(),
        other => return Err(CliError::UnknownController(other.to_string())),
    };
    Ok(ControllerSpec::new(realization, Metric::Chordal))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertifyConfig {
    pub controller: PathBuf,
    pub inertia: Mat3,
    /// Overrides the metric stored in the controller file.
    pub metric: Option<Metric>,
    pub epsilon: Option<f64>,
    pub out: Option<PathBuf>,
    pub solver: SolverOptions,
}

impl CertifyConfig {
    pub fn new(controller: impl Into<PathBuf>) -> Self {
        CertifyConfig { controller: controller.into(), inertia: inertia(), metric: None, epsilon: None, out: None, solver: SolverOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct CertifyOutcome {
    pub metric: Metric,
    pub epsilon: f64,
    pub result: FeasibilityResult,
    pub report: CertificateReport,
    pub certificate: Option<Certificate>,
}

impl CertifyOutcome {
    pub fn certified(&self) -> bool {
        self.certificate.is_some()
    }

    pub fn exit_code(&self) -> i32 {
        if self.certified() {
            EXIT_OK
        } else {
            EXIT_NOT_CERTIFIED
        }
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "metric {}  epsilon {:.3e}  status {:?}  margin {:.6e}  outer {}  newton {}\n",
            self.metric, self.epsilon, self.result.status, self.result.margin, self.result.iterations, self.result.newton_steps
        );
        for m in &self.report.margins {
            s += &format!("  {:<10} min-eig {:>14.6e}  required {:>10.3e}  {}\n", m.name, m.min_eig, m.required, if m.pass { "ok" } else { "FAIL" });
        }
        s += &format!("  P22*J symmetry residual {:.3e}\n", self.report.symmetry_residual);
        s += if self.certified() { "certified\n" } else { "certificate not found\n" };
        s
    }
}

/// Assembles and solves the certification LMIs, then re-verifies the point.
/// A certificate is produced only when the independent check passes.
pub fn certify_spec(spec: &ControllerSpec, cfg: &CertifyConfig) -> Result<CertifyOutcome, CliError> {
    let metric = cfg.metric.unwrap_or(spec.metric);
    let epsilon = cfg.epsilon.unwrap_or_else(|| default_epsilon(&cfg.inertia));
    if !(epsilon > 0.0) {
        return Err(CliError::Usage(format!("epsilon must be positive, got {epsilon}")));
    }
    let k = &spec.realization;
    let lmi = assemble_certification_lmis(k, &cfg.inertia, metric, epsilon);
    let result = solve_feasibility(&lmi.problem, &cfg.solver)?;
    let (c, s) = lmi.layout.unpack(result.x.as_slice());
    let report = verify_certificate(&c, &s, k, &cfg.inertia, metric, epsilon);
    let certificate = (result.is_feasible() && report.pass).then(|| Certificate::new(&c, &s, metric, epsilon, &report));
    Ok(CertifyOutcome { metric, epsilon, result, report, certificate })
}

pub fn cmd_certify(cfg: &CertifyConfig) -> Result<CertifyOutcome, CliError> {
    let spec = ControllerSpec::load(&cfg.controller)?;
    let outcome = certify_spec(&spec, cfg)?;
    if let (Some(cert), Some(out)) = (&outcome.certificate, &cfg.out) {
        write_file(out, &(cert.to_json() + "\n"))?;
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario {
    /// Two flips through the reference filter, starting at rest at identity.
    Flip,
    /// Regulation to identity from an initial attitude error.
    Regulation { initial: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    pub controller: PathBuf,
    pub inertia: Mat3,
    pub metric: Option<Metric>,
    pub certificate: Option<PathBuf>,
    pub scenario: Scenario,
    pub dt: f64,
    pub horizon: f64,
    pub out: Option<PathBuf>,
    pub summary: Option<PathBuf>,
}

impl SimulateConfig {
    pub fn new(controller: impl Into<PathBuf>) -> Self {
        SimulateConfig {
            controller: controller.into(),
            inertia: inertia(),
            metric: None,
            certificate: None,
            scenario: Scenario::Flip,
            dt: geoatt::sim::DEFAULT_DT,
            horizon: geoatt::sim::DEFAULT_HORIZON,
            out: None,
            summary: None,
        }
    }
}

/// Rate error one second after a maneuver segment ends.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentCheck {
    pub segment_end: f64,
    pub t: f64,
    pub omega_e_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    #[serde(flatten)]
    pub trajectory: TrajectorySummary,
    pub metric: Metric,
    pub segments: Vec<SegmentCheck>,
}

/// Flip segments end at `2 s` and `4.5 s`.
pub const FLIP_SEGMENT_ENDS: [f64; 2] = [2.0, 4.5];

pub fn summarize(tr: &Trajectory, metric: Metric, scenario: Scenario) -> SimulationSummary {
    let segments = match scenario {
        Scenario::Flip => FLIP_SEGMENT_ENDS
            .iter()
            .filter_map(|&end| {
                let t = end + 1.0;
                let i = (t / tr.dt).round() as usize;
                tr.samples.get(i).map(|s| SegmentCheck { segment_end: end, t: s.t, omega_e_norm: s.w_e.norm() })
            })
            .collect(),
        Scenario::Regulation { .. } => Vec::new(),
    };
    SimulationSummary { trajectory: tr.summary(), metric, segments }
}

pub fn simulate_spec(spec: &ControllerSpec, cfg: &SimulateConfig) -> Result<(Trajectory, SimulationSummary), CliError> {
    let metric = cfg.metric.unwrap_or(spec.metric);
    let coeffs = match &cfg.certificate {
        Some(p) => Some(Certificate::load(p)?.coeffs()?.0),
        None => None,
    };
    if let Some(c) = &coeffs {
        if c.n() != spec.realization.n() {
            return Err(CliError::Usage(format!("certificate has n = {}, controller has n = {}", c.n(), spec.realization.n())));
        }
    }
    let sys = ClosedLoop::new(spec.realization.clone(), cfg.inertia, metric)?;
    let (start, refdyn) = match cfg.scenario {
        Scenario::Flip => (
            sys.start(RigidBodyState::at_rest(Rotation::identity()), ReferenceState::fixed(Rotation::identity())),
            ReferenceDynamics::flip_filter(),
        ),
        Scenario::Regulation { initial } => (sys.regulation_start(exp_vec(&Vec3::from(initial)), Vec3::zeros()), ReferenceDynamics::ConstantRate),
    };
    let tr = sys.simulate(start, &refdyn, coeffs.as_ref(), cfg.dt, cfg.horizon)?;
    let summary = summarize(&tr, metric, cfg.scenario);
    Ok((tr, summary))
}

pub fn cmd_simulate(cfg: &SimulateConfig) -> Result<SimulationSummary, CliError> {
    let spec = ControllerSpec::load(&cfg.controller)?;
    let (tr, summary) = simulate_spec(&spec, cfg)?;
    if let Some(out) = &cfg.out {
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).expect("in-memory write");
        std::fs::write(out, buf).map_err(|source| CliError::Write { path: out.clone(), source })?;
    }
    if let Some(p) = &cfg.summary {
        write_file(p, &(serde_json::to_string_pretty(&summary).expect("plain data") + "\n"))?;
    }
    Ok(summary)
}

pub fn linear_spec(spec: &ControllerSpec, j: &Mat3) -> Result<Vec<AxisMetrics>, CliError> {
    Ok(axis_metrics(&spec.realization, j)?)
}

pub fn cmd_linear(controller: &Path, j: &Mat3, out: Option<&Path>) -> Result<Vec<AxisMetrics>, CliError> {
    let spec = ControllerSpec::load(controller)?;
    let metrics = linear_spec(&spec, j)?;
    if let Some(out) = out {
        write_file(out, &(serde_json::to_string_pretty(&metrics).expect("plain data") + "\n"))?;
    }
    Ok(metrics)
}

pub fn cmd_monte_carlo(
    controller: &Path,
    j: &Mat3,
    metric: Option<Metric>,
    certificate: Option<&Path>,
    opts: &McOptions,
    out: Option<&Path>,
) -> Result<McReport, CliError> {
    let spec = ControllerSpec::load(controller)?;
    let coeffs = match certificate {
        Some(p) => Some(Certificate::load(p)?.coeffs()?.0),
        None => None,
    };
    let sys = ClosedLoop::new(spec.realization, *j, metric.unwrap_or(spec.metric))?;
    let report = monte_carlo_agas(&sys, coeffs.as_ref(), opts)?;
    if let Some(out) = out {
        write_file(out, &(serde_json::to_string_pretty(&report).expect("plain data") + "\n"))?;
    }
    Ok(report)
}
