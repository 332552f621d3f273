use std::fs;
use std::process::Command;

use approx::assert_relative_eq;
use tlf_grape::experiments::{self, write_rows, Grid, SweepSpec};
use tlf_grape::grape::{self, Gate, OptimizerConfig, PenaltyParams};
use tlf_grape::propagation::{self, ControlPulse};
use tlf_grape::redfield::ModelParams;

fn tiny() -> OptimizerConfig {
    OptimizerConfig {
        restarts: 3,
        max_iterations: 15,
        dt: 0.1,
        seed: 5,
        ..OptimizerConfig::default()
    }
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tlf-grape"));
    c.env("RUST_LOG", "error");
    c
}

#[test]
fn gamma_sweep_is_byte_identical_across_runs() {
    let spec = SweepSpec {
        grid: Grid::log(0.01, 1.0, 3),
        optimizer: tiny(),
        gate_time: 2.0,
        ..SweepSpec::gamma(&ModelParams::default())
    };
    let csv = || {
        let s = experiments::sweep_gamma(&spec).unwrap();
        let mut buf = Vec::new();
        write_rows(&s.rows, &mut buf).unwrap();
        buf
    };
    assert_eq!(csv(), csv());
}

#[test]
fn tg_sweep_rows_follow_grid_and_bound_rabi() {
    let spec = SweepSpec {
        grid: Grid::linear(1.5, 2.5, 3),
        optimizer: tiny(),
        penalty: PenaltyParams::disabled(),
        ..SweepSpec::gate_time(&ModelParams::default())
    };
    let s = experiments::sweep_tg(&spec).unwrap();
    let ts: Vec<f64> = s.rows.iter().map(|r| r.t_g).collect();
    assert_eq!(ts, vec![1.5, 2.0, 2.5]);
    for r in &s.rows {
        assert!(r.gate_error_grape <= r.gate_error_rabi + 1e-12, "{r:?}");
        assert!(r.t2_reference <= r.t1_reference);
    }
}

#[test]
fn warm_started_point_is_no_worse_than_zero_start() {
    let p = ModelParams::default().with_kappa(0.02);
    let cfg = tiny();
    let cold = grape::optimize(&p, 2.0, Gate::Z, &cfg, &PenaltyParams::default()).unwrap();
    let warm = grape::optimize_with_starts(&p, 2.0, Gate::Z, &cfg, &PenaltyParams::default(), std::slice::from_ref(&cold.pulse))
        .unwrap();
    assert!(warm.penalized_fidelity >= cold.penalized_fidelity);
    assert!(warm.starts[0].penalized_fidelity <= warm.penalized_fidelity);
}

#[test]
fn reported_fidelity_matches_re_evaluation() {
    let p = ModelParams::default();
    let r = grape::optimize(&p, 2.0, Gate::Z, &tiny(), &PenaltyParams::disabled()).unwrap();
    assert_relative_eq!(
        grape::gate_fidelity(&p, Gate::Z, &r.pulse).unwrap(),
        r.fidelity,
        epsilon = 1e-12
    );
}

#[test]
fn trajectory_starts_pure_and_stays_physical() {
    let p = ModelParams::default().with_kappa(0.05);
    let pulse = ControlPulse::from_fn(2.0, 0.05, |t| (3.0 * t).sin()).unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let rho0 = tlf_grape::hilbert::projector(&[h.into(), h.into()]).kronecker(&propagation::thermal_tlf_state(&p));
    let traj = propagation::evolve_state(&p, &pulse, &rho0, 2).unwrap();
    assert_eq!(traj.len(), 2 * pulse.len() + 1);
    assert_relative_eq!(traj[0].bloch[0], 1.0, epsilon = 1e-12);
    assert!(traj[0].entropy.abs() < 1e-9);
    for pt in &traj {
        let r = pt.bloch.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(r <= 1.0 + 1e-9);
        assert!(pt.entropy >= -1e-12 && pt.entropy <= std::f64::consts::LN_2 + 1e-12);
    }
}

#[test]
fn cli_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["check", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(dir.path().join("check.json").exists());
}

#[test]
fn cli_rejects_bad_input_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().arg("--frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "kapa = 0.01\n").unwrap();
    let out = bin().args(["rabi", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    fs::write(&cfg, "temperature = -0.2\n").unwrap();
    let out = bin().args(["rabi", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn cli_optimize_writes_result_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "kappa = 0.05\ntg = 1.5\ndt = 0.1\nrestarts = 2\nmax_iterations = 10\ntrajectory_samples = 1\n",
    )
    .unwrap();
    let out = bin()
        .args(["optimize", "--no-penalty", "--seed", "3", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("result.json")).unwrap()).unwrap();
    assert_eq!(json["result"]["seed"], 3);
    assert_eq!(json["result"]["penalty"]["enabled"], false);
    let pulse = ControlPulse::read_csv(fs::File::open(dir.path().join("pulse.csv")).unwrap()).unwrap();
    assert_eq!(pulse.len(), 15);
    let err = json["result"]["gate_error"].as_f64().unwrap();
    let p = ModelParams::default().with_kappa(0.05);
    assert_relative_eq!(1.0 - grape::gate_fidelity(&p, Gate::Z, &pulse).unwrap(), err, epsilon = 1e-12);
    let traj = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1 + 16);
}
