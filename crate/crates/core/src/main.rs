use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde_json::json;

use tlf_grape::experiments::check::run_invariants;
use tlf_grape::experiments::config::RunConfig;
use tlf_grape::experiments::{self, build_info, write_rows_to};
use tlf_grape::grape::{self, GradientMode};
use tlf_grape::hilbert;
use tlf_grape::propagation;
use tlf_grape::redfield::ModelParams;
use tlf_grape::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "tlf-grape", version, about = "Open-system GRAPE for a qubit next to a two-level fluctuator")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    gradient_mode: Option<GradientMode>,
    /// Keep principal-value terms in the rate tensors
    #[arg(long, global = true)]
    lamb_shift: bool,
    #[arg(long, global = true, overrides_with = "no_penalty")]
    penalty: bool,
    #[arg(long, global = true, overrides_with = "penalty")]
    no_penalty: bool,
    /// Gate time in 1/Δ
    #[arg(long, global = true)]
    tg: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimize one pulse; writes result JSON, pulse CSV and trajectory CSV
    Optimize,
    /// Evaluate the calibrated resonant baseline
    Rabi,
    /// Gate error against gate time
    SweepTg,
    /// Gate error against flip rate
    SweepGamma,
    /// Error maximum location against temperature
    SweepTemp,
    /// Run the numerical invariant suite
    Check,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidParams(_) | Error::InvalidPulse(_) | Error::UnsupportedGate(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(m) = g.gradient_mode {
        cfg.gradient_mode = m;
    }
    if g.lamb_shift {
        cfg.lamb_shift = true;
    }
    if g.penalty {
        cfg.penalty = true;
    }
    if g.no_penalty {
        cfg.penalty = false;
    }
    if let Some(t) = g.tg {
        cfg.tg = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let cfg = load_config(g)?;
    for w in cfg.model().validate()? {
        warn!("{w}");
    }
    fs::create_dir_all(&g.out)?;
    let out = &g.out;

    match cli.command {
        Command::Optimize => {
            let (p, gate, opt, pp) = (cfg.model(), cfg.gate()?, cfg.optimizer(), cfg.penalty_params());
            let r = grape::optimize(&p, cfg.tg, gate, &opt, &pp)?;
            info!(
                "t_g {}: gate error {:.4e} after {} steps ({:?}, start {})",
                cfg.tg, r.gate_error, r.iterations, r.stop_reason, r.restart_index
            );
            write_json(
                &out.join("result.json"),
                &json!({
                    "build": build_info(),
                    "config": cfg,
                    "result": r.record(&p, gate, &opt, &pp),
                    "fidelity_history": r.fidelity_history,
                    "starts": r.starts,
                }),
            )?;
            r.pulse.write_csv(fs::File::create(out.join("pulse.csv"))?)?;
            let rho0 = initial_state(&p);
            let traj = propagation::evolve_state(&p, &r.pulse, &rho0, cfg.trajectory_samples)?;
            propagation::write_trajectory_csv(&traj, fs::File::create(out.join("trajectory.csv"))?)?;
            println!("{:.10e}", r.gate_error);
        }
        Command::Rabi => {
            let (p, gate) = (cfg.model(), cfg.gate()?);
            let cal = grape::calibrate_rabi(&p, gate, cfg.tg, cfg.dt)?;
            let pulse = grape::rabi_pulse(&p, cfg.tg, cfg.dt, cal.amplitude, cal.phase)?;
            let fidelity = grape::gate_fidelity(&p, gate, &pulse)?;
            write_json(
                &out.join("rabi.json"),
                &json!({
                    "build": build_info(),
                    "config": cfg,
                    "amplitude": cal.amplitude,
                    "phase": cal.phase,
                    "closed_fidelity": cal.closed_fidelity,
                    "fidelity": fidelity,
                    "gate_error": 1.0 - fidelity,
                }),
            )?;
            pulse.write_csv(fs::File::create(out.join("rabi_pulse.csv"))?)?;
            println!("{:.10e}", 1.0 - fidelity);
        }
        Command::SweepTg => {
            let spec = cfg.tg_sweep()?;
            let s = experiments::sweep_tg(&spec)?;
            write_rows_to(&s.rows, &out.join("sweep_tg.csv"))?;
            write_json(
                &out.join("sweep_tg.json"),
                &json!({ "spec": spec, "build": build_info(), "rows": s.rows, "results": records(&s.results, &spec, &vec![spec.base_params.kappa; s.rows.len()]) }),
            )?;
        }
        Command::SweepGamma => {
            let spec = cfg.gamma_sweep()?;
            let s = experiments::sweep_gamma(&spec)?;
            write_rows_to(&s.rows, &out.join("sweep_gamma.csv"))?;
            write_json(
                &out.join("sweep_gamma.json"),
                &json!({
                    "spec": spec,
                    "build": build_info(),
                    "rows": s.rows,
                    "results": records(&s.results, &spec, &s.rows.iter().map(|r| r.kappa).collect::<Vec<_>>()),
                    "fits": experiments::standard_fits(&s.rows),
                    "gamma_max": s.peak,
                }),
            )?;
            println!("gamma_max {:.6} error {:.6e}", s.peak.x, s.peak.y);
        }
        Command::SweepTemp => {
            let spec = cfg.temperature_sweep()?;
            let s = experiments::sweep_temperature(&spec)?;
            write_rows_to(&s.rows, &out.join("sweep_temp.csv"))?;
            for sw in &s.sweeps {
                write_rows_to(&sw.rows, &out.join(format!("sweep_gamma_T{}.csv", sw.temperature)))?;
            }
            let per_t: Vec<_> = s
                .sweeps
                .iter()
                .map(|sw| {
                    json!({
                        "temperature": sw.temperature,
                        "rows": sw.rows,
                        "fits": experiments::standard_fits(&sw.rows),
                        "gamma_max": sw.peak,
                    })
                })
                .collect();
            write_json(
                &out.join("sweep_temp.json"),
                &json!({ "spec": spec, "build": build_info(), "rows": s.rows, "sweeps": per_t }),
            )?;
        }
        Command::Check => {
            let outcomes = run_invariants(cfg.seed)?;
            for c in &outcomes {
                println!(
                    "{} {:<32} {:.3e} in [{:.1e}, {:.1e}]",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.bounds.0,
                    c.bounds.1
                );
            }
            write_json(&out.join("check.json"), &outcomes)?;
            if outcomes.iter().any(|c| !c.passed) {
                return Ok(2);
            }
        }
    }
    Ok(0)
}

fn records(
    results: &[grape::OptimizationResult],
    spec: &experiments::SweepSpec,
    kappas: &[f64],
) -> Vec<grape::ResultRecord> {
    results
        .iter()
        .zip(kappas)
        .enumerate()
        .map(|(i, (r, &kappa))| {
            let opt = grape::OptimizerConfig {
                seed: experiments::point_seed(spec.optimizer.seed, i),
                ..spec.optimizer.clone()
            };
            r.record(&spec.base_params.with_kappa(kappa), spec.gate, &opt, &spec.penalty)
        })
        .collect()
}

/// Qubit in |+⟩ next to the thermal fluctuator.
fn initial_state(p: &ModelParams) -> hilbert::Operator {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let plus = hilbert::projector(&[h.into(), h.into()]);
    plus.kronecker(&propagation::thermal_tlf_state(p))
}
