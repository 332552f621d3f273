//! Flat TOML run configuration. All energies in units of Δ, times in 1/Δ.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{Grid, Spacing, SweepSpec, Variable};
use crate::grape::{Gate, GradientMode, OptimizerConfig, PenaltyParams, PenaltyShape};
use crate::propagation::{DEFAULT_AMPLITUDE_CAP, DEFAULT_DT};
use crate::redfield::ModelParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub delta: f64,
    pub e2: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub temperature: f64,
    pub omega_c: f64,
    pub lamb_shift: bool,

    pub gate: String,
    pub tg: f64,
    pub dt: f64,
    pub seed: u64,
    pub restarts: usize,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub stall_tolerance: f64,
    pub amplitude_cap: f64,
    pub gradient_mode: GradientMode,

    pub penalty: bool,
    pub alpha0: f64,
    pub t0: f64,
    pub penalty_shape: PenaltyShape,

    pub warm_start: bool,
    pub tg_start: f64,
    pub tg_stop: f64,
    pub tg_count: usize,
    pub gamma_start: f64,
    pub gamma_stop: f64,
    pub gamma_count: usize,
    /// γ-sweep gate time.
    pub gamma_tg: f64,
    pub temperatures: Vec<f64>,
    /// Samples per slice in the exported state trajectory.
    pub trajectory_samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelParams::default();
        let o = OptimizerConfig::default();
        let pp = PenaltyParams::default();
        RunConfig {
            delta: m.delta,
            e2: m.e2,
            lambda: m.lambda,
            kappa: m.kappa,
            temperature: m.temperature,
            omega_c: m.omega_c,
            lamb_shift: m.lamb_shift,
            gate: "Z".into(),
            tg: 2.0 * std::f64::consts::PI,
            dt: DEFAULT_DT,
            seed: o.seed,
            restarts: o.restarts,
            max_iterations: o.max_iterations,
            gradient_tolerance: o.gradient_tolerance,
            stall_tolerance: o.stall_tolerance,
            amplitude_cap: DEFAULT_AMPLITUDE_CAP,
            gradient_mode: o.gradient_mode,
            penalty: pp.enabled,
            alpha0: pp.alpha0,
            t0: pp.t0,
            penalty_shape: pp.shape,
            warm_start: true,
            tg_start: 1.0,
            tg_stop: 8.0,
            tg_count: 41,
            gamma_start: 1e-3,
            gamma_stop: 10.0,
            gamma_count: 25,
            gamma_tg: 5.0,
            temperatures: vec![0.1, 0.2, 0.4],
            trajectory_samples: 4,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.model().validate()?;
        self.optimizer().validate()?;
        self.penalty_params().validate()?;
        self.gate()?;
        if !(self.tg > 0.0 && self.tg.is_finite()) {
            return Err(Error::Config(format!("tg must be positive, got {}", self.tg)));
        }
        Ok(())
    }

    pub fn model(&self) -> ModelParams {
        ModelParams {
            delta: self.delta,
            e2: self.e2,
            lambda: self.lambda,
            kappa: self.kappa,
            temperature: self.temperature,
            omega_c: self.omega_c,
            lamb_shift: self.lamb_shift,
        }
    }

    pub fn gate(&self) -> Result<Gate> {
        self.gate.parse()
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            stall_tolerance: self.stall_tolerance,
            restarts: self.restarts,
            seed: self.seed,
            amplitude_cap: self.amplitude_cap,
            gradient_mode: self.gradient_mode,
            dt: self.dt,
            ..OptimizerConfig::default()
        }
    }

    pub fn penalty_params(&self) -> PenaltyParams {
        PenaltyParams {
            alpha0: self.alpha0,
            t0: self.t0,
            enabled: self.penalty,
            shape: self.penalty_shape,
        }
    }

    fn sweep(&self, variable: Variable, grid: Grid) -> Result<SweepSpec> {
        Ok(SweepSpec {
            variable,
            grid,
            base_params: self.model(),
            gate: self.gate()?,
            optimizer: self.optimizer(),
            penalty: self.penalty_params(),
            warm_start: self.warm_start,
            gate_time: self.gamma_tg,
            gamma_grid: Some(self.gamma_grid()),
        })
    }

    fn gamma_grid(&self) -> Grid {
        Grid::Range {
            start: self.gamma_start,
            stop: self.gamma_stop,
            count: self.gamma_count,
            spacing: Spacing::Log,
        }
    }

    /// Gate-time sweeps run their points independently; warm starts are
    /// only used along γ.
    pub fn tg_sweep(&self) -> Result<SweepSpec> {
        let mut spec = self.sweep(
            Variable::GateTime,
            Grid::linear(self.tg_start, self.tg_stop, self.tg_count),
        )?;
        spec.warm_start = false;
        spec.gamma_grid = None;
        Ok(spec)
    }

    pub fn gamma_sweep(&self) -> Result<SweepSpec> {
        self.sweep(Variable::Gamma, self.gamma_grid())
    }

    pub fn temperature_sweep(&self) -> Result<SweepSpec> {
        self.sweep(Variable::Temperature, Grid::Explicit(self.temperatures.clone()))
    }
}
