use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use geoatt::compensator::presets::inertia;
use geoatt::sim::McOptions;
use geoatt::so3::{Mat3, Metric};
use geoatt_cli::*;

#[derive(Parser)]
#[command(name = "geoatt", version, about = "Certify, simulate and analyze geometric attitude controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Controller spec (JSON)
    #[arg(long)]
    controller: PathBuf,
    /// Inertia as nine comma-separated row-major entries
    #[arg(long)]
    inertia: Option<String>,
    /// Override the metric stored in the controller file: chordal or psi_q
    #[arg(long)]
    metric: Option<Metric>,
}

impl Common {
    fn inertia(&self) -> Result<Mat3, CliError> {
        self.inertia.as_deref().map_or(Ok(inertia()), parse_inertia)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a controller spec for a named family
    GenController {
        /// pid, ppi, ppid or leadlag
        name: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        inertia: Option<String>,
        #[arg(long)]
        metric: Option<Metric>,
        #[arg(long)]
        kp: Option<f64>,
        #[arg(long)]
        kd: Option<f64>,
        #[arg(long)]
        ki: Option<f64>,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        k_r: Option<f64>,
        #[arg(long)]
        omega_n: Option<f64>,
        #[arg(long)]
        k_a: Option<f64>,
        #[arg(long)]
        filter_n: Option<f64>,
    },
    /// Search for a Lyapunov certificate
    Certify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Certificate output (JSON)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-loop simulation to CSV
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Certificate used to fill the V and Vdot columns
        #[arg(long)]
        certificate: Option<PathBuf>,
        /// Regulate from this rotation vector instead of flying the flips
        #[arg(long)]
        initial: Option<String>,
        #[arg(long, default_value_t = geoatt::sim::DEFAULT_DT)]
        dt: f64,
        #[arg(long = "T", default_value_t = geoatt::sim::DEFAULT_HORIZON)]
        horizon: f64,
        /// Trajectory output (CSV)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Summary output (JSON); printed to stdout regardless
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Per-axis step metrics and crossover of the linearized loops
    Linear {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regulation runs from random initial errors
    MonteCarlo {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        certificate: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long = "T", default_value_t = 20.0)]
        horizon: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data")
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::GenController { name, out, inertia: j, metric, kp, kd, ki, c, k_r, omega_n, k_a, filter_n } => {
            let j = j.as_deref().map_or(Ok(inertia()), parse_inertia)?;
            let g = GainOverrides { kp, kd, ki, c, k_r, omega_n, k_a, filter_n };
            let mut spec = cmd_gen_controller(&name, &g, &j)?;
            if let Some(m) = metric {
                spec.metric = m;
            }
            spec.save(&out)?;
            println!("wrote {} (n = {})", out.display(), spec.realization.n());
            Ok(EXIT_OK)
        }
        Command::Certify { common, epsilon, out } => {
            let cfg = CertifyConfig { inertia: common.inertia()?, metric: common.metric, epsilon, out, ..CertifyConfig::new(&common.controller) };
            let outcome = cmd_certify(&cfg)?;
            print!("{}", outcome.render());
            Ok(outcome.exit_code())
        }
        Command::Simulate { common, certificate, initial, dt, horizon, out, summary } => {
            let scenario = match initial {
                Some(v) => Scenario::Regulation { initial: parse_vec3(&v)?.into() },
                None => Scenario::Flip,
            };
            let cfg = SimulateConfig {
                inertia: common.inertia()?,
                metric: common.metric,
                certificate,
                scenario,
                dt,
                horizon,
                out,
                summary,
                ..SimulateConfig::new(&common.controller)
            };
            println!("{}", json(&cmd_simulate(&cfg)?));
            Ok(EXIT_OK)
        }
        Command::Linear { common, out } => {
            let metrics = cmd_linear(&common.controller, &common.inertia()?, out.as_deref())?;
            println!("{}", json(&metrics));
            Ok(EXIT_OK)
        }
        Command::MonteCarlo { common, certificate, samples, seed, dt, horizon, out } => {
            let opts = McOptions { samples, seed, dt, horizon, ..McOptions::default() };
            let report = cmd_monte_carlo(&common.controller, &common.inertia()?, common.metric, certificate.as_deref(), &opts, out.as_deref())?;
            println!(
                "converged {}/{}  V nonincreasing {:?}  worst final theta {:.3e} rad  worst final |w_e| {:.3e} rad/s",
                report.converged, samples, report.v_monotone_runs, report.worst_final_theta, report.worst_final_w
            );
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = run(cli).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
