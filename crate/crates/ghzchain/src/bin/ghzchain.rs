//! Batch front-end for the chain simulator.
//!
//! Every subcommand resolves a [`ChainSpec`] from an optional TOML config
//! plus flag overrides, runs one experiment, and writes plot-ready CSV/JSON
//! artifacts named by a content hash of the resolved parameters, together
//! with a manifest that records exactly what produced them.
//!
//! Durations on the command line (`--g0T`) are quoted at transfer
//! completion, matching how protocol times are usually reported; the
//! simulated pulse window extends past that point by a third to let the
//! envelopes decay, so a config file's raw `T` equals 4/3 of the quoted
//! duration.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use ghzchain::dynamics::{
    evolve_in_frame, ghz_initial_state, ideal_ghz_state, left_edge_state, populations,
    right_edge_state, time_grid,
};
use ghzchain::experiments::{
    disorder_sweep, fit_quadratic, largest_scale_above, loss_sweep, production_control,
    reference_threshold_fit, scale_study, threshold_time, window_for, ScaleStudyConfig,
    DEFAULT_DISORDER_SAMPLES, DEFAULT_TARGET_FIDELITY,
};
use ghzchain::model::{DisorderRealization, Frame, Rate};
use ghzchain::oracle::compare_subspace_oracle;
use ghzchain::output::{artifact_name, table_to_csv, write_atomic, RunManifest};
use ghzchain::spectral::{energy_gap, spectral_flow, zero_mode_distribution};
use ghzchain::sta::{counterdiabatic_control, evolve_with_sta, ControlMode};
use ghzchain::{ChainSpec, Error, Result, Scheme};

/// Step tolerance for single-trace runs; sweeps own their calibration.
const TRACE_STEP_TOL: f64 = 1e-7;

#[derive(Parser)]
#[command(
    name = "ghzchain",
    version,
    about = "Simulator for GHZ-state generation on a qutrit-resonator chain",
    long_about = "Simulates excitation transfer and GHZ-state generation through the \
                  topological edge mode of a qutrit-resonator chain, including disorder, \
                  photon/qutrit loss, threshold-time scaling, physical-scale studies, and \
                  counterdiabatic shortcuts. Each subcommand writes CSV/JSON artifacts plus \
                  a manifest naming the resolved parameters."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML config with ChainSpec keys (N, scheme, g0, T, tau, delta1, delta2,
    /// jprime_scale, omega_edge, gamma, kappa, disorder_delta, seed); flags
    /// override file values.
    #[arg(long, value_name = "FILE", global = false)]
    config: Option<PathBuf>,

    /// Number of qutrits (chain length 2N-1).
    #[arg(long = "N")]
    n: Option<usize>,

    /// Coupling scheme: A (flux-tunable), B (edge-driven), C (resonator-mediated).
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<Scheme>,

    /// Protocol duration in units of 1/g0, quoted at transfer completion;
    /// the simulated window is 4/3 of this.
    #[arg(long = "g0T", value_name = "G0T")]
    g0t: Option<f64>,

    /// Half-width of the uniform bond-disorder distribution (fraction of the
    /// nominal coupling).
    #[arg(long)]
    delta: Option<f64>,

    /// Uniform qutrit decay rate in units of g0.
    #[arg(long)]
    gamma: Option<f64>,

    /// Uniform resonator decay rate in units of g0.
    #[arg(long)]
    kappa: Option<f64>,

    /// RNG seed for disorder sampling.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory for artifacts (created if absent).
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,

    /// Sample count: time samples for traces, disorder realizations for sweeps.
    #[arg(long)]
    samples: Option<usize>,
}

fn parse_scheme(s: &str) -> std::result::Result<Scheme, String> {
    match s.trim().to_ascii_uppercase().as_str() {
        "A" => Ok(Scheme::A),
        "B" => Ok(Scheme::B),
        "C" => Ok(Scheme::C),
        other => Err(format!("unknown scheme '{other}' (expected A, B, or C)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Instantaneous eigenvalues of the chain over the pulse window
    /// (columns: t, e1..e_dim, gap).
    Spectrum {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Site amplitudes of the protected zero mode over the window
    /// (columns: t, a1..a_{2N-1}).
    ZeroMode {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Propagate a left-edge excitation and record site populations
    /// (columns: t, norm, p1..p_{2N-1}).
    Evolve {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the GHZ protocol from (|G> + |left edge>)/sqrt(2) and record the
    /// ideal-state population (columns: t, p_ideal, p_ground, p_left,
    /// p_right, norm).
    Ghz {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Mean GHZ fidelity versus bond-disorder strength, averaged over
    /// seeded realizations.
    DisorderSweep {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Final GHZ fidelity on a grid of qutrit/resonator decay rates.
    LossSweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Hold the two edge qutrits lossless while the bulk decays.
        #[arg(long)]
        edge_lossless: bool,
    },
    /// Smallest quoted duration reaching the target GHZ fidelity for this N.
    Threshold {
        #[command(flatten)]
        common: CommonArgs,
        /// Target fidelity for the search.
        #[arg(long, default_value_t = DEFAULT_TARGET_FIDELITY)]
        target: f64,
    },
    /// Threshold durations over an N grid with a least-squares quadratic fit.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 10)]
        n_min: usize,
        #[arg(long, default_value_t = 60)]
        n_max: usize,
        #[arg(long, default_value_t = 5)]
        n_step: usize,
        /// Target fidelity for each threshold search.
        #[arg(long, default_value_t = DEFAULT_TARGET_FIDELITY)]
        target: f64,
    },
    /// Transfer survival versus N at a physical coupling and coherence time,
    /// with protocol durations taken from the reference threshold fit.
    ScaleStudy {
        #[command(flatten)]
        common: CommonArgs,
        /// Coupling peak g0/2pi in MHz.
        #[arg(long, default_value_t = 50.0)]
        g0_mhz: f64,
        /// Qutrit coherence time in microseconds.
        #[arg(long, default_value_t = 1000.0)]
        tau_a_us: f64,
        /// Resonator coherence time in microseconds.
        #[arg(long, default_value_t = 1000.0)]
        tau_b_us: f64,
        #[arg(long, default_value_t = 10)]
        n_min: usize,
        #[arg(long, default_value_t = 150)]
        n_max: usize,
        #[arg(long, default_value_t = 10)]
        n_step: usize,
        /// Also report the largest N whose survival stays above this level.
        #[arg(long)]
        crossing: Option<f64>,
    },
    /// Counterdiabatically accelerated transfer (columns: t, p_right, norm),
    /// plus the control-coupling profile alpha_k(t).
    Sta {
        #[command(flatten)]
        common: CommonArgs,
        /// Control truncation: full-rank or nnn (next-nearest-neighbor band).
        #[arg(long, value_parser = parse_mode, default_value = "full-rank")]
        mode: ControlMode,
        /// Window compression relative to --g0T (or the reference threshold
        /// duration for this N when --g0T is absent).
        #[arg(long, default_value_t = 10.0)]
        speedup: f64,
    },
    /// Cross-check the excitation-subspace propagation against an
    /// independent full-Hilbert-space evolution (small N only).
    OracleCheck {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn parse_mode(s: &str) -> std::result::Result<ControlMode, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "full-rank" | "full_rank" | "full" => Ok(ControlMode::FullRank),
        "nnn" | "truncated" => Ok(ControlMode::NnnTruncated),
        other => Err(format!("unknown control mode '{other}' (expected full-rank or nnn)")),
    }
}

fn main() -> std::process::ExitCode {
    env_logger::init();
    if let Ok(raw) = std::env::var("GHZCHAIN_WORKERS") {
        match raw.parse::<usize>() {
            Ok(w) if w > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
            }
            _ => {
                eprintln!("error: GHZCHAIN_WORKERS must be a positive integer, got '{raw}'");
                return std::process::ExitCode::from(2u8);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Resolve the chain parameters from config file plus overrides; `--g0T`
/// is quoted at transfer completion and becomes the full window here.
fn resolve_spec(common: &CommonArgs) -> Result<ChainSpec> {
    let mut spec = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::ConfigParse(format!("cannot read {}: {e}", path.display()))
            })?;
            ChainSpec::from_toml(&text)?
        }
        None => ChainSpec::default(),
    };
    if let Some(n) = common.n {
        spec.n = n;
    }
    if let Some(scheme) = common.scheme {
        spec.scheme = scheme;
    }
    if let Some(g0t) = common.g0t {
        spec.t_total = window_for(g0t);
    }
    if let Some(delta) = common.delta {
        spec.disorder_delta = delta;
    }
    if let Some(gamma) = common.gamma {
        spec.gamma = Rate::Uniform(gamma);
    }
    if let Some(kappa) = common.kappa {
        spec.kappa = Rate::Uniform(kappa);
    }
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    Ok(spec)
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Write the run manifest listing every artifact this invocation produced.
fn write_manifest(
    sub: &str,
    spec: &ChainSpec,
    out_dir: &Path,
    outputs: &[PathBuf],
    started: Instant,
) -> Result<()> {
    let listed: Vec<String> = outputs.iter().map(|p| p.display().to_string()).collect();
    let manifest = RunManifest::new(sub, spec, listed, started.elapsed().as_secs_f64());
    let path = out_dir.join(artifact_name(&format!("{sub}-manifest"), spec, "json"));
    manifest.write(&path)?;
    println!("manifest: {}", path.display());
    Ok(())
}

fn write_csv(path: &Path, headers: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let refs: Vec<&str> = headers.iter().map(String::as_str).collect();
    write_atomic(path, &table_to_csv(&refs, rows))
}

fn lossy(spec: &ChainSpec) -> bool {
    !spec.gamma.is_zero() || !spec.kappa.is_zero()
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Spectrum { common } => run_spectrum(&common),
        Command::ZeroMode { common } => run_zero_mode(&common),
        Command::Evolve { common } => run_evolve(&common),
        Command::Ghz { common } => run_ghz(&common),
        Command::DisorderSweep { common } => run_disorder_sweep(&common),
        Command::LossSweep { common, edge_lossless } => run_loss_sweep(&common, edge_lossless),
        Command::Threshold { common, target } => run_threshold(&common, target),
        Command::Fit { common, n_min, n_max, n_step, target } => {
            run_fit(&common, n_min, n_max, n_step, target)
        }
        Command::ScaleStudy {
            common,
            g0_mhz,
            tau_a_us,
            tau_b_us,
            n_min,
            n_max,
            n_step,
            crossing,
        } => run_scale_study(&common, g0_mhz, tau_a_us, tau_b_us, n_min, n_max, n_step, crossing),
        Command::Sta { common, mode, speedup } => run_sta(&common, mode, speedup),
        Command::OracleCheck { common } => run_oracle_check(&common),
    }
}

fn run_spectrum(common: &CommonArgs) -> Result<()> {
    let started = Instant::now();
    let spec = resolve_spec(common)?;
    ensure_out_dir(&common.out)?;
    let times = time_grid(spec.t_total, common.samples.unwrap_or(201));
    let flow = spectral_flow(&spec, &times)?;

    let dim = flow[0].dim();
    let mut headers = vec!["t".to_string()];
    headers.extend((1..=dim).map(|k| format!("e{k}")));
    headers.push("gap".to_string());
    let mut min_gap = f64::INFINITY;
    let rows: Vec<Vec<f64>> = times
        .iter()
        .zip(&flow)
        .map(|(&t, s)| {
            let gap = energy_gap(s);
            min_gap = min_gap.min(gap);
            let mut row = vec![t];
            row.extend_from_slice(&s.eigenvalues);
            row.push(gap);
            row
        })
        .collect();

    let csv_path = common.out.join(artifact_name("spectrum", &spec, "csv"));
    write_csv(&csv_path, &headers, &rows)?;
    let summary = json!({
        "n": spec.n,
        "scheme": spec.scheme,
        "window": spec.t_total,
        "min_gap": min_gap,
        "zero_mode_energy_max": flow
            .iter()
            .map(|s| s.zero_energy().abs())
            .fold(0.0f64, f64::max),
    });
    let summary_path = common.out.join(artifact_name("spectrum-summary", &spec, "json"));
    write_atomic(&summary_path, &serde_json::to_string_pretty(&summary).expect("serializes"))?;

    println!("minimum gap to the zero mode over the window: {min_gap:.3e}");
    println!("wrote {}", csv_path.display());
    write_manifest("spectrum", &spec, &common.out, &[csv_path, summary_path], started)
}

fn run_zero_mode(common: &CommonArgs) -> Result<()> {
    let started = Instant::now();
    let spec = resolve_spec(common)?;
    ensure_out_dir(&common.out)?;
    let times = time_grid(spec.t_total, common.samples.unwrap_or(201));
    let dist = zero_mode_distribution(&spec, &times)?;

    let sites = dist[0].len();
    let mut headers = vec!["t".to_string()];
    headers.extend((1..=sites).map(|k| format!("a{k}")));
    let rows: Vec<Vec<f64>> = times
        .iter()
        .zip(&dist)
        .map(|(&t, amps)| {
            let mut row = vec![t];
            row.extend_from_slice(amps);
            row
        })
        .collect();

    let first = dist.first().expect("grid is nonempty");
    let last = dist.last().expect("grid is nonempty");
    let csv_path = common.out.join(artifact_name("zero-mode", &spec, "csv"));
    write_csv(&csv_path, &headers, &rows)?;
    let summary = json!({
        "n": spec.n,
        "scheme": spec.scheme,
        "window": spec.t_total,
        "initial_left_weight": first[0] * first[0],
        "final_right_weight": last[sites - 1] * last[sites - 1],
    });
    let summary_path = common.out.join(artifact_name("zero-mode-summary", &spec, "json"));
    write_atomic(&summary_path, &serde_json::to_string_pretty(&summary).expect("serializes"))?;

    println!(
        "zero-mode weight: left {:.6} at t=0, right {:.6} at t=T",
        first[0] * first[0],
        last[sites - 1] * last[sites - 1]
    );
    println!("wrote {}", csv_path.display());
    write_manifest("zero-mode", &spec, &common.out, &[csv_path, summary_path], started)
}

fn run_evolve(common: &CommonArgs) -> Result<()> {
    let started = Instant::now();
    let spec = resolve_spec(common)?;
    ensure_out_dir(&common.out)?;
    let grid = time_grid(spec.t_total, common.samples.unwrap_or(801));
    let realization = DisorderRealization::sample(&spec, 0);
    let psi0 = left_edge_state(&spec);
    let control = production_control(&spec, TRACE_STEP_TOL)?;
    let (trace, _) = evolve_in_frame(
        &spec,
        &realization,
        &psi0,
        &grid,
        lossy(&spec),
        Frame::Static,
        control,
    )?;

    let dim = psi0.dim();
    let mut headers = vec!["t".to_string(), "norm".to_string()];
    headers.extend((1..=dim).map(|k| format!("p{k}")));
    let rows: Vec<Vec<f64>> = trace
        .times
        .iter()
        .zip(&trace.states)
        .map(|(&t, state)| {
            let mut row = vec![t, state.norm()];
            row.extend(state.amps.iter().map(|a| a.norm_sqr()));
            row
        })
        .collect();

    let final_state = trace.final_state();
    let final_norm = final_state.norm();
    let p_right = final_state.amps[dim - 1].norm_sqr();
    let csv_path = common.out.join(artifact_name("evolve-trace", &spec, "csv"));
    write_csv(&csv_path, &headers, &rows)?;
    let summary = json!({
        "n": spec.n,
        "scheme": spec.scheme,
        "window": spec.t_total,
        "lossy": lossy(&spec),
        "final_norm": final_norm,
        "final_right_population": p_right,
    });
    let summary_path = common.out.join(artifact_name("evolve-summary", &spec, "json"));
    write_atomic(&summary_path, &serde_json::to_string_pretty(&summary).expect("serializes"))?;

    println!("final norm = {final_norm:.12}");
    println!("final right-edge population = {p_right:.6}");
    println!("wrote {}", csv_path.display());
    write_manifest("evolve", &spec, &common.out, &[csv_path, summary_path], started)
}

fn run_ghz(common: &CommonArgs) -> Result<()> {
    let started = Instant::now();
    let spec = resolve_spec(common)?;
    ensure_out_dir(&common.out)?;
    let grid = time_grid(spec.t_total, common.samples.unwrap_or(801));
    let realization = DisorderRealization::sample(&spec, 0);
    let psi0 = ghz_initial_state(&spec);
    let ideal = ideal_ghz_state(&spec);
    let control = production_control(&spec, TRACE_STEP_TOL)?;
    let (trace, _) = evolve_in_frame(
        &spec,
        &realization,
        &psi0,
        &grid,
        lossy(&spec),
        Frame::Static,
        control,
    )?;

    let targets = [left_edge_state(&spec), right_edge_state(&spec)];
    let edge_curves = populations(&trace, &targets);
    let headers: Vec<String> = ["t", "p_ideal", "p_ground", "p_left", "p_right", "norm"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<f64>> = trace
        .times
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let state = &trace.states[i];
            vec![
                t,
                state.overlap(&ideal).norm_sqr(),
                state.ground.norm_sqr(),
                edge_curves[0][i],
                edge_curves[1][i],
                state.norm(),
            ]
        })
        .collect();

    let final_state = trace.final_state();
    let final_fidelity = final_state.overlap(&ideal).norm_sqr();
    let csv_path = common.out.join(artifact_name("ghz-trace", &spec, "csv"));
    write_csv(&csv_path, &headers, &rows)?;
    let summary = json!({
        "n": spec.n,
        "scheme": spec.scheme,
        "window": spec.t_total,
        "lossy": lossy(&spec),
        "final_fidelity": final_fidelity,
        "final_norm": final_state.norm(),
    });
    let summary_path = common.out.join(artifact_name("ghz-summary", &spec, "json"));
    write_atomic(&summary_path, &serde_json::to_string_pretty(&summary).expect("serializes"))?;

    println!("final GHZ fidelity = {final_fidelity:.6}");
    println!("wrote {}", csv_path.display());
    write_manifest("ghz", &spec, &common.out, &[csv_path, summary_path], started)
}

fn run_disorder_sweep(common: &CommonArgs) -> Result<()> {
    let started = Instant::now();
    let spec = resolve_spec(common)?;
    ensure_out_dir(&common.out)?;
    let grid: Vec<f64> = match common.delta {
        Some(d) => vec![d],
        None => (0..=5).map(|k| k as f64 * 0.1).collect(),
    };
    let samples = common.samples.unwrap_or(DEFAULT_DISORDER_SAMPLES);
    let sweep = disorder_sweep(&spec, &grid, samples)?;

    let csv_path = common.out.join(artifact_name("disorder-sweep", &spec, "csv"));
    write_atomic(&csv_path, &sweep.to_csv())?;
    let summary_path = common.out.join(artifact_name("disorder-sweep-summary", &spec, "json"));
    write_atomic(&summary_path, &serde_json::to_string_pretty(&sweep).expect("serializes"))?;

    for p in &sweep.points {
        println!(
            "delta = {:>4.2}: mean F = {:.6} +- {:.6} ({} samples)",
            p.coords[0], p.mean, p.stderr, p.count
        );
    }
    println!("wrote {}", csv_path.display());
    write_manifest("disorder-sweep", &spec, &common.out, &[csv_path, summary_path], started)
}

fn run_loss_sweep(common: &CommonArgs, edge_lossless: bool) -> Result<()> {
    let started = Instant::now();
    let spec = resolve_spec(common)?;
    ensure_out_dir(&common.out)?;
    let gamma_grid: Vec<f64> = match common.gamma {
        Some(g) => vec![g],
        None => vec![0.0, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05],
    };
    let kappa_grid: Vec<f64> = match common.kappa {
        Some(k) => vec![k],
        None => vec![0.0],
    };
    let sweep = loss_sweep(&spec, &gamma_grid, &kappa_grid, edge_lossless)?;

    let csv_path = common.out.join(artifact_name("loss-sweep", &spec, "csv"));
    write_atomic(&csv_path, &sweep.to_csv())?;
    let summary_path = common.out.join(artifact_name("loss-sweep-summary", &spec, "json"));
    write_atomic(&summary_path, &serde_json::to_string_pretty(&sweep).expect("serializes"))?;

    for p in &sweep.points {
        println!(
            "gamma = {:>7.4}, kappa = {:>7.4}: F = {:.6}",
            p.coords[0], p.coords[1], p.mean
        );
    }
    println!("wrote {}", csv_path.display());
    write_manifest("loss-sweep", &spec, &common.out, &[csv_path, summary_path], started)
}

fn run_threshold(common: &CommonArgs, target: f64) -> Result<()> {
    let started = Instant::now();
    let spec = resolve_spec(common)?;
    ensure_out_dir(&common.out)?;
    let t = threshold_time(spec.n, spec.scheme, target)?;

    let summary = json!({
        "n": spec.n,
        "scheme": spec.scheme,
        "target_fidelity": target,
        "threshold_g0t": t,
        "window": window_for(t),
    });
    let summary_path = common.out.join(artifact_name("threshold-summary", &spec, "json"));
    write_atomic(&summary_path, &serde_json::to_string_pretty(&summary).expect("serializes"))?;

    println!("threshold g0 t = {t:.0}");
    write_manifest("threshold", &spec, &common.out, &[summary_path], started)
}

fn run_fit(
    common: &CommonArgs,
    n_min: usize,
    n_max: usize,
    n_step: usize,
    target: f64,
) -> Result<()> {
    use rayon::prelude::*;
    let started = Instant::now();
    let spec = resolve_spec(common)?;
    ensure_out_dir(&common.out)?;
    if n_step == 0 || n_max < n_min {
        return Err(Error::Config {
            key: "n_step",
            reason: format!("need n_min <= n_max and n_step > 0, got {n_min}..={n_max} step {n_step}"),
        });
    }
    let ns: Vec<usize> = (n_min..=n_max).step_by(n_step).collect();
    let points: Vec<(f64, f64)> = ns
        .par_iter()
        .map(|&n| threshold_time(n, spec.scheme, target).map(|t| (n as f64, t)))
        .collect::<Result<_>>()?;
    let fit = fit_quadratic(&points)?;

    let headers = vec!["N".to_string(), "threshold_g0t".to_string()];
    let rows: Vec<Vec<f64>> = points.iter().map(|&(n, t)| vec![n, t]).collect();
    let csv_path = common.out.join(artifact_name("fit-points", &spec, "csv"));
    write_csv(&csv_path, &headers, &rows)?;
    let summary = json!({
        "scheme": spec.scheme,
        "target_fidelity": target,
        "a": fit.a,
        "b": fit.b,
        "c": fit.c,
        "residual_norm": fit.residual_norm,
        "points": points,
    });
    let summary_path = common.out.join(artifact_name("fit-summary", &spec, "json"));
    write_atomic(&summary_path, &serde_json::to_string_pretty(&summary).expect("serializes"))?;

    for &(n, t) in &points {
        println!("N = {n:>3.0}: threshold g0 t = {t:.0}");
    }
    println!("fit: g0 t = {:.4} N^2 + {:.4} N + {:.4}", fit.a, fit.b, fit.c);
    println!("wrote {}", csv_path.display());
    write_manifest("fit", &spec, &common.out, &[csv_path, summary_path], started)
}

#[allow(clippy::too_many_arguments)]
fn run_scale_study(
    common: &CommonArgs,
    g0_mhz: f64,
    tau_a_us: f64,
    tau_b_us: f64,
    n_min: usize,
    n_max: usize,
    n_step: usize,
    crossing: Option<f64>,
) -> Result<()> {
    let started = Instant::now();
    let spec = resolve_spec(common)?;
    ensure_out_dir(&common.out)?;
    if n_step == 0 || n_max < n_min {
        return Err(Error::Config {
            key: "n_step",
            reason: format!("need n_min <= n_max and n_step > 0, got {n_min}..={n_max} step {n_step}"),
        });
    }
    let config = ScaleStudyConfig {
        g0_physical: std::f64::consts::TAU * g0_mhz * 1e6,
        tau_a: tau_a_us * 1e-6,
        tau_b: tau_b_us * 1e-6,
        n_grid: (n_min..=n_max).step_by(n_step).collect(),
    };
    let fit = reference_threshold_fit();
    let sweep = scale_study(&config, spec.scheme, &fit)?;
    let largest = match crossing {
        Some(level) => Some(largest_scale_above(&config, spec.scheme, &fit, level)?),
        None => None,
    };

    let csv_path = common.out.join(artifact_name("scale-study", &spec, "csv"));
    write_atomic(&csv_path, &sweep.to_csv())?;
    let summary = json!({
        "scheme": spec.scheme,
        "g0_mhz": g0_mhz,
        "tau_a_us": tau_a_us,
        "tau_b_us": tau_b_us,
        "gamma_over_g0": config.gamma_over_g0(),
        "kappa_over_g0": config.kappa_over_g0(),
        "fit": { "a": fit.a, "b": fit.b, "c": fit.c },
        "crossing_level": crossing,
        "largest_n_above_level": largest,
        "points": sweep.points.iter().map(|p| (p.coords[0], p.mean)).collect::<Vec<_>>(),
    });
    let summary_path = common.out.join(artifact_name("scale-study-summary", &spec, "json"));
    write_atomic(&summary_path, &serde_json::to_string_pretty(&summary).expect("serializes"))?;

    for p in &sweep.points {
        println!("N = {:>4.0}: transfer survival = {:.6}", p.coords[0], p.mean);
    }
    if let (Some(level), Some(n)) = (crossing, largest) {
        println!("largest N with survival above {level}: {n}");
    }
    println!("wrote {}", csv_path.display());
    write_manifest("scale-study", &spec, &common.out, &[csv_path, summary_path], started)
}

fn run_sta(common: &CommonArgs, mode: ControlMode, speedup: f64) -> Result<()> {
    let started = Instant::now();
    let mut spec = resolve_spec(common)?;
    ensure_out_dir(&common.out)?;
    if !(speedup > 0.0) {
        return Err(Error::Config {
            key: "speedup",
            reason: format!("must be positive, got {speedup}"),
        });
    }
    let quoted = common
        .g0t
        .unwrap_or_else(|| reference_threshold_fit().time_for(spec.n));
    spec.t_total = window_for(quoted) / speedup;
    spec.validate()?;

    let samples = common.samples.unwrap_or(801);
    let grid = time_grid(spec.t_total, samples);
    let trace = evolve_with_sta(&spec, mode, &grid)?;
    let right = right_edge_state(&spec);
    let transfer_curve = &populations(&trace, std::slice::from_ref(&right))[0];

    let headers: Vec<String> =
        ["t", "p_right", "norm"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<f64>> = trace
        .times
        .iter()
        .enumerate()
        .map(|(i, &t)| vec![t, transfer_curve[i], trace.states[i].norm()])
        .collect();
    let csv_path = common.out.join(artifact_name("sta-trace", &spec, "csv"));
    write_csv(&csv_path, &headers, &rows)?;

    // Control-coupling profile on a coarser grid; columns are the
    // next-nearest-neighbor pair couplings alpha_1..alpha_{N-1}.
    let alpha_grid = time_grid(spec.t_total, 201);
    let mut alpha_headers = vec!["t".to_string()];
    alpha_headers.extend((1..spec.n).map(|k| format!("alpha{k}")));
    let alpha_rows: Vec<Vec<f64>> = alpha_grid
        .iter()
        .map(|&t| -> Result<Vec<f64>> {
            let control = counterdiabatic_control(&spec, t)?;
            let mut row = vec![t];
            row.extend_from_slice(&control.alpha);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let alpha_path = common.out.join(artifact_name("sta-alpha", &spec, "csv"));
    write_csv(&alpha_path, &alpha_headers, &alpha_rows)?;

    let final_state = trace.final_state();
    let transfer = final_state.overlap(&right).norm_sqr();
    let summary = json!({
        "n": spec.n,
        "scheme": spec.scheme,
        "mode": match mode {
            ControlMode::FullRank => "full-rank",
            ControlMode::NnnTruncated => "nnn",
        },
        "quoted_g0t": quoted,
        "speedup": speedup,
        "window": spec.t_total,
        "final_transfer": transfer,
        "final_norm": final_state.norm(),
    });
    let summary_path = common.out.join(artifact_name("sta-summary", &spec, "json"));
    write_atomic(&summary_path, &serde_json::to_string_pretty(&summary).expect("serializes"))?;

    println!("window = {:.3} (speedup {speedup} over quoted g0 t = {quoted:.1})", spec.t_total);
    println!("final transfer population = {transfer:.6}");
    println!("wrote {}", csv_path.display());
    write_manifest("sta", &spec, &common.out, &[csv_path, alpha_path, summary_path], started)
}

fn run_oracle_check(common: &CommonArgs) -> Result<()> {
    let started = Instant::now();
    let mut spec = resolve_spec(common)?;
    // Small defaults: the cross-check evolves the full Hilbert space, which
    // only exists at desk scale for a handful of qutrits and short windows.
    if common.n.is_none() && common.config.is_none() {
        spec.n = 3;
    }
    if common.g0t.is_none() && common.config.is_none() {
        spec.t_total = window_for(75.0);
    }
    spec.validate()?;
    ensure_out_dir(&common.out)?;

    let grid = time_grid(spec.t_total, common.samples.unwrap_or(9));
    let report = compare_subspace_oracle(&spec, &grid)?;

    let summary = json!({
        "n": spec.n,
        "scheme": spec.scheme,
        "window": spec.t_total,
        "disorder_delta": spec.disorder_delta,
        "lossy": lossy(&spec),
        "max_deviation": report.max_deviation,
        "max_leakage": report.max_leakage,
        "max_cutoff_boundary": report.max_cutoff_boundary,
        "dt": report.dt,
    });
    let summary_path = common.out.join(artifact_name("oracle-check-summary", &spec, "json"));
    write_atomic(&summary_path, &serde_json::to_string_pretty(&summary).expect("serializes"))?;

    println!("max amplitude deviation vs full Hilbert space = {:.3e}", report.max_deviation);
    println!("max leakage out of the excitation subspace    = {:.3e}", report.max_leakage);
    println!("max population at the excitation cutoff       = {:.3e}", report.max_cutoff_boundary);
    write_manifest("oracle-check", &spec, &common.out, &[summary_path], started)
}
