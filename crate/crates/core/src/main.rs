//! Command-line front end: calibration, single-point certification, loss
//! sweeps, and a self-check suite.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 solver or
//! certification failure, 4 model-validity failure (spectral gap). No
//! partial "secure" output is emitted on a non-zero exit.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use phasekey_core::calibration::{q_from_visibility, sigma_from_visibility};
use phasekey_core::channel::{
    self, observation_set, ChannelParams, Intensities, ObservationSet,
};
use phasekey_core::config::{load_config, ProtocolConfig};
use phasekey_core::error::{Error, Result};
use phasekey_core::fock::Encoding;
use phasekey_core::rate::{
    certify_observations, optimize_mu_s, sweep_loss, write_csv, KeyRatePoint,
};
use phasekey_core::sdp::{
    build_phase_error_problem, build_yield_problem, solve, virtual_states, ModelSet,
};

#[derive(Parser)]
#[command(
    name = "phasekey",
    version,
    about = "Certified decoy-state BB84 key rates under imperfect phase randomisation"
)]
struct Cli {
    /// Configuration file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the uniformity parameter q directly.
    #[arg(long, global = true, conflicts_with = "visibility")]
    q: Option<f64>,

    /// Override q via a measured fringe visibility.
    #[arg(long, global = true)]
    visibility: Option<f64>,

    /// Worker threads for sweeps (defaults to the core count).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a fringe visibility into sigma and q.
    Calibrate,
    /// Certify the key rate at one loss point.
    Keyrate {
        /// Overall system loss in dB.
        #[arg(long)]
        loss: f64,
        /// Write the result as CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use measured statistics from this observations CSV instead of the
        /// analytic channel model (intensities are taken from the file).
        #[arg(long)]
        observations: Option<PathBuf>,
    },
    /// Sweep the configured loss grid and emit CSV.
    Sweep {
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the honest-channel feasibility, sandwich and Monte-Carlo checks.
    Selfcheck {
        /// Seed for the Monte-Carlo oracle.
        #[arg(long, default_value_t = 1234)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
    }

    let mut config = match &cli.config {
        Some(path) => load_config(path)?,
        None => ProtocolConfig::default(),
    };
    if let Some(q) = cli.q {
        config.q = q;
        config.visibility = None;
    }
    if let Some(v) = cli.visibility {
        config.apply_visibility(v)?;
    }
    config.validate()?;

    match cli.command {
        Command::Calibrate => calibrate(&config),
        Command::Keyrate { loss, out, observations } => {
            keyrate(&config, loss, out, observations)
        }
        Command::Sweep { out } => sweep(&config, out),
        Command::Selfcheck { seed } => selfcheck(&config, seed),
    }
}

fn calibrate(config: &ProtocolConfig) -> Result<()> {
    let visibility = config.visibility.ok_or_else(|| {
        Error::Config("calibrate needs a visibility (config key or --visibility)".into())
    })?;
    let sigma = sigma_from_visibility(visibility)?;
    let minimum = q_from_visibility(visibility)?;
    println!("visibility = {visibility}");
    println!("sigma      = {sigma:.6}");
    println!("q          = {:.6}", minimum.q);
    println!(
        "minimizer  = (phi_mid = {:.6}, phi_end = {:.6}) with the first phase at 0",
        minimum.phi_mid, minimum.phi_end
    );
    Ok(())
}

fn write_points(points: &[KeyRatePoint], l_c: u32, out: Option<PathBuf>) -> Result<()> {
    match out {
        Some(path) => {
            let mut file = std::fs::File::create(&path)?;
            write_csv(points, l_c, &mut file)?;
            file.flush()?;
            eprintln!("wrote {} point(s) to {}", points.len(), path.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            write_csv(points, l_c, &mut stdout)?;
        }
    }
    Ok(())
}

fn keyrate(
    config: &ProtocolConfig,
    loss: f64,
    out: Option<PathBuf>,
    observations: Option<PathBuf>,
) -> Result<()> {
    let point = match observations {
        Some(path) => {
            let text = std::fs::read_to_string(&path).map_err(|e| {
                Error::Config(format!("cannot read observations {}: {e}", path.display()))
            })?;
            let obs = ObservationSet::from_csv(&text)?;
            let eval = certify_observations(config, &obs, loss)?;
            KeyRatePoint {
                loss_db: loss,
                q: config.q,
                mu_s_opt: eval.mu_s,
                yield_lower: eval.yield_lower,
                e_ph_upper: eval.e_ph_upper,
                gain_z: eval.gain_z,
                error_z: eval.error_z,
                rate: eval.rate,
                reference_rate: eval.reference_rate,
                degraded: false,
            }
        }
        None => optimize_mu_s(config, loss)?,
    };
    write_points(&[point], config.l_c, out)
}

fn sweep(config: &ProtocolConfig, out: Option<PathBuf>) -> Result<()> {
    let points = sweep_loss(config)?;
    write_points(&points, config.l_c, out)
}

struct CheckReport {
    failures: u32,
}

impl CheckReport {
    fn record(&mut self, name: &str, pass: bool, detail: String) {
        println!("{}: {name} ({detail})", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failures += 1;
        }
    }
}

fn selfcheck(config: &ProtocolConfig, seed: u64) -> Result<()> {
    let mut report = CheckReport { failures: 0 };
    let loss = 20.0;
    let mu_s = 0.5;
    let params = ChannelParams::new(loss, config.p_d)?;
    let intensities = Intensities::new(mu_s, mu_s * config.mu_w_ratio, 0.0)?;
    let obs = observation_set(&intensities, &params);

    for q in [config.q, 1.0] {
        let models = ModelSet::build(mu_s, mu_s * config.mu_w_ratio, 0.0, q, config.truncation)?;

        // honest-channel operators must satisfy every interval constraint
        let j_honest = channel::honest_z_operator(&params, config.truncation);
        let yield_problem = build_yield_problem(&models, &obs)?;
        let mut violations = 0u32;
        for (a, interval) in &yield_problem.constraints {
            let trace = a.trace_product(&j_honest)?;
            if !interval.contains(trace) {
                violations += 1;
            }
        }
        let vsp = virtual_states(models.signal.eigenvector(1))?;
        for beta in 0..2 {
            let l_honest = channel::honest_x_operator(&params, config.truncation, 1 - beta);
            let problem = build_phase_error_problem(beta, &models, &obs, &vsp)?;
            for (a, interval) in &problem.constraints {
                let trace = a.trace_product(&l_honest)?;
                if !interval.contains(trace) {
                    violations += 1;
                }
            }
        }
        report.record(
            &format!("honest-channel feasibility (q = {q})"),
            violations == 0,
            format!("{violations} violated constraint(s)"),
        );

        // certified bounds must sandwich the honest-channel truth
        let truth = channel::true_tagged_quantities(&models.signal, &params)?;
        let yield_cert = solve(&yield_problem, config.solver_tol)?;
        let y_l = phasekey_core::sdp::yield_lower_bound(&yield_cert, &models.signal)?;
        let cert0 = solve(&build_phase_error_problem(0, &models, &obs, &vsp)?, config.solver_tol)?;
        let cert1 = solve(&build_phase_error_problem(1, &models, &obs, &vsp)?, config.solver_tol)?;
        let e_u = phasekey_core::sdp::phase_error_upper_bound(
            [&cert0, &cert1],
            &models.signal,
            y_l,
        )?;
        report.record(
            &format!("yield sandwich (q = {q})"),
            y_l <= truth.yield_tag1,
            format!("certified {y_l:.6e} <= true {:.6e}", truth.yield_tag1),
        );
        report.record(
            &format!("phase-error sandwich (q = {q})"),
            e_u >= truth.phase_error_tag1,
            format!("certified {e_u:.6e} >= true {:.6e}", truth.phase_error_tag1),
        );
    }

    // Monte-Carlo oracle cross-check of the analytic statistics
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let samples = 1_000_000u64;
    let (qz, ez) = channel::z_basis_stats(mu_s, &params);
    let zc = channel::mc::simulate_z(mu_s, &params, samples, &mut rng);
    let sigma_gain = (qz * (1.0 - qz) / samples as f64).sqrt();
    let gain_hat = zc.conclusive as f64 / samples as f64;
    report.record(
        "Monte-Carlo Z gain",
        (gain_hat - qz).abs() <= 3.0 * sigma_gain,
        format!("simulated {gain_hat:.6e} vs analytic {qz:.6e}"),
    );
    let joint = qz * ez;
    let err_hat = zc.wrong_bit as f64 / samples as f64;
    let sigma_err = (joint * (1.0 - joint) / samples as f64).sqrt().max(3.0 / samples as f64);
    report.record(
        "Monte-Carlo Z errors",
        (err_hat - joint).abs() <= 3.0 * sigma_err,
        format!("simulated {err_hat:.6e} vs analytic {joint:.6e}"),
    );
    for setting in Encoding::ALL {
        let (q0, q1) = channel::x_basis_stats(mu_s, setting, &params);
        let xc = channel::mc::simulate_x(mu_s, setting, &params, samples, &mut rng);
        let mut ok = true;
        for (count, expect) in [(xc.outcome0, q0), (xc.outcome1, q1)] {
            let sigma =
                (expect * (1.0 - expect) / samples as f64).sqrt().max(3.0 / samples as f64);
            if (count as f64 / samples as f64 - expect).abs() > 3.0 * sigma {
                ok = false;
            }
        }
        report.record(
            &format!("Monte-Carlo X rates ({})", setting.label()),
            ok,
            format!("{} / {} outcomes", xc.outcome0, xc.outcome1),
        );
    }

    if report.failures > 0 {
        Err(Error::SolverAccuracy(format!(
            "selfcheck: {} check(s) failed",
            report.failures
        )))
    } else {
        println!("selfcheck: all checks passed");
        Ok(())
    }
}
