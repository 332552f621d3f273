//! Parameter sweeps over gate time, flip rate and temperature, curve fits,
//! and their CSV/JSON outputs.

pub mod check;
pub mod config;

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grape::{self, Gate, OptimizationResult, OptimizerConfig, PenaltyParams};
use crate::propagation::{fmt_f64, ControlPulse};
use crate::redfield::{self, ModelParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variable {
    GateTime,
    Gamma,
    Temperature,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Explicit(Vec<f64>),
    Range {
        start: f64,
        stop: f64,
        count: usize,
        #[serde(default)]
        spacing: Spacing,
    },
}

impl Grid {
    pub fn linear(start: f64, stop: f64, count: usize) -> Self {
        Grid::Range {
            start,
            stop,
            count,
            spacing: Spacing::Linear,
        }
    }

    pub fn log(start: f64, stop: f64, count: usize) -> Self {
        Grid::Range {
            start,
            stop,
            count,
            spacing: Spacing::Log,
        }
    }

    /// Grid values; errors unless there are at least two, finite and
    /// strictly increasing.
    pub fn points(&self) -> Result<Vec<f64>> {
        let pts = match self {
            Grid::Explicit(v) => v.clone(),
            Grid::Range {
                start,
                stop,
                count,
                spacing,
            } => {
                if *count < 2 {
                    return Err(Error::Config(format!("grid count must be ≥ 2, got {count}")));
                }
                let (a, b) = match spacing {
                    Spacing::Linear => (*start, *stop),
                    Spacing::Log => {
                        if !(*start > 0.0) {
                            return Err(Error::Config("log grid needs a positive start".into()));
                        }
                        (start.ln(), stop.ln())
                    }
                };
                let last = (*count - 1) as f64;
                (0..*count)
                    .map(|k| {
                        let x = a + (b - a) * k as f64 / last;
                        match spacing {
                            Spacing::Linear => x,
                            Spacing::Log => x.exp(),
                        }
                    })
                    .collect()
            }
        };
        if pts.len() < 2 {
            return Err(Error::Config("grid needs at least two points".into()));
        }
        if pts.iter().any(|x| !x.is_finite()) || pts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("grid must be strictly increasing: {pts:?}")));
        }
        Ok(pts)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSpec {
    pub variable: Variable,
    pub grid: Grid,
    pub base_params: ModelParams,
    pub gate: Gate,
    pub optimizer: OptimizerConfig,
    pub penalty: PenaltyParams,
    /// Seed each point with the previous point's optimum. Points then run in
    /// grid order instead of concurrently.
    pub warm_start: bool,
    /// Gate time for γ and temperature sweeps.
    pub gate_time: f64,
    /// Inner γ grid of a temperature sweep.
    pub gamma_grid: Option<Grid>,
}

impl SweepSpec {
    /// Gate-time sweep over 41 points on [1/Δ, 8/Δ].
    pub fn gate_time(params: &ModelParams) -> Self {
        SweepSpec {
            variable: Variable::GateTime,
            grid: Grid::linear(1.0, 8.0, 41),
            base_params: params.clone(),
            gate: Gate::Z,
            optimizer: OptimizerConfig::default(),
            penalty: PenaltyParams::default(),
            warm_start: false,
            gate_time: 5.0,
            gamma_grid: None,
        }
    }

    /// Flip-rate sweep over 25 log-spaced points on [1e-3Δ, 10Δ] at t_g = 5/Δ.
    pub fn gamma(params: &ModelParams) -> Self {
        SweepSpec {
            variable: Variable::Gamma,
            grid: Grid::log(1e-3, 10.0, 25),
            warm_start: true,
            ..Self::gate_time(params)
        }
    }

    /// Temperature sweep over {0.1Δ, 0.2Δ, 0.4Δ}, each with the default γ grid.
    pub fn temperature(params: &ModelParams) -> Self {
        SweepSpec {
            variable: Variable::Temperature,
            grid: Grid::Explicit(vec![0.1, 0.2, 0.4]),
            gamma_grid: Some(Grid::log(1e-3, 10.0, 25)),
            ..Self::gamma(params)
        }
    }

    fn expect(&self, variable: Variable) -> Result<()> {
        if self.variable != variable {
            return Err(Error::Config(format!(
                "sweep over {:?} run as {variable:?}",
                self.variable
            )));
        }
        self.optimizer.validate()?;
        self.penalty.validate()?;
        Ok(())
    }
}

/// Per-point RNG seed, a SplitMix64 hash of the master seed and point index.
pub fn point_seed(master: u64, index: usize) -> u64 {
    let mut z = master ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stretch a pulse onto `n` slices over `t_g`, sampling at relative time.
pub fn resample(pulse: &ControlPulse, t_g: f64, n: usize) -> Result<ControlPulse> {
    let m = pulse.len();
    let amps = (0..n)
        .map(|k| {
            let rel = (k as f64 + 0.5) / n as f64;
            pulse.amplitudes[((rel * m as f64) as usize).min(m - 1)]
        })
        .collect();
    ControlPulse::new(amps, t_g / n as f64)
}

/// Optimize every grid point. Without warm starts the points run
/// concurrently; with them, in order, each seeded by its predecessor.
fn run_points<F>(spec: &SweepSpec, points: &[(f64, ModelParams)], prepare: F) -> Result<Vec<OptimizationResult>>
where
    F: Fn(&ModelParams) -> Result<()> + Sync,
{
    let one = |i: usize, t_g: f64, p: &ModelParams, warm: &[ControlPulse]| -> Result<OptimizationResult> {
        prepare(p)?;
        let config = OptimizerConfig {
            seed: point_seed(spec.optimizer.seed, i),
            ..spec.optimizer.clone()
        };
        let r = grape::optimize_with_starts(p, t_g, spec.gate, &config, &spec.penalty, warm)?;
        log::info!(
            "point {i}: t_g {t_g:.4}, κ {:.4e}, T {:.3}: error {:.4e} ({} steps, {:?})",
            p.kappa,
            p.temperature,
            r.gate_error,
            r.iterations,
            r.stop_reason
        );
        Ok(r)
    };
    if !spec.warm_start {
        return points
            .par_iter()
            .enumerate()
            .map(|(i, (t_g, p))| one(i, *t_g, p, &[]))
            .collect();
    }
    let mut out: Vec<OptimizationResult> = Vec::with_capacity(points.len());
    for (i, (t_g, p)) in points.iter().enumerate() {
        let warm = match out.last() {
            Some(prev) => {
                let n = ControlPulse::slice_count(*t_g, spec.optimizer.dt);
                vec![resample(&prev.pulse, *t_g, n)?]
            }
            None => Vec::new(),
        };
        out.push(one(i, *t_g, p, &warm)?);
    }
    Ok(out)
}

fn checked_params(p: &ModelParams) -> Result<()> {
    for w in p.validate()? {
        log::warn!("{w}");
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TgRow {
    pub t_g: f64,
    pub gate_error_grape: f64,
    pub gate_error_rabi: f64,
    /// `1 − exp(−t_g/T₁)` with T₁ at zero bias.
    pub t1_reference: f64,
    /// `1 − exp(−t_g/(2T₁))`.
    pub t2_reference: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TgSweep {
    pub rows: Vec<TgRow>,
    pub results: Vec<OptimizationResult>,
}

pub fn sweep_tg(spec: &SweepSpec) -> Result<TgSweep> {
    spec.expect(Variable::GateTime)?;
    checked_params(&spec.base_params)?;
    let p = &spec.base_params;
    let grid = spec.grid.points()?;
    if grid[0] <= 0.0 {
        return Err(Error::Config("gate times must be positive".into()));
    }
    let points: Vec<(f64, ModelParams)> = grid.iter().map(|&t| (t, p.clone())).collect();
    let results = run_points(spec, &points, |_| Ok(()))?;
    let (r1, _) = redfield::t1_t2_rates(p, 0.0);
    let rows = grid
        .par_iter()
        .zip(&results)
        .map(|(&t_g, r)| {
            let rabi = grape::rabi_baseline(p, spec.gate, t_g, spec.optimizer.dt, true)?;
            Ok(TgRow {
                t_g,
                gate_error_grape: r.gate_error,
                gate_error_rabi: 1.0 - grape::gate_fidelity(p, spec.gate, &rabi)?,
                t1_reference: -(-t_g * r1).exp_m1(),
                t2_reference: -(-0.5 * t_g * r1).exp_m1(),
                iterations: r.iterations,
                converged: r.converged,
            })
        })
        .collect::<Result<_>>()?;
    Ok(TgSweep { rows, results })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaRow {
    pub gamma: f64,
    pub kappa: f64,
    pub gate_error: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GammaSweep {
    pub temperature: f64,
    pub rows: Vec<GammaRow>,
    pub results: Vec<OptimizationResult>,
    pub peak: Peak,
}

/// Gate error against the TLF flip rate at fixed gate time and temperature.
pub fn sweep_gamma(spec: &SweepSpec) -> Result<GammaSweep> {
    spec.expect(Variable::Gamma)?;
    gamma_sweep_at(spec, &spec.grid, &spec.base_params)
}

fn gamma_sweep_at(spec: &SweepSpec, grid: &Grid, base: &ModelParams) -> Result<GammaSweep> {
    let gammas = grid.points()?;
    let points: Vec<(f64, ModelParams)> = gammas
        .iter()
        .map(|&g| Ok((spec.gate_time, base.with_kappa(redfield::kappa_for_gamma(g, base)?))))
        .collect::<Result<_>>()?;
    let results = run_points(spec, &points, checked_params)?;
    let rows: Vec<GammaRow> = gammas
        .iter()
        .zip(&points)
        .zip(&results)
        .map(|((&gamma, (_, p)), r)| GammaRow {
            gamma,
            kappa: p.kappa,
            gate_error: r.gate_error,
            iterations: r.iterations,
            converged: r.converged,
        })
        .collect();
    let table: Vec<(f64, f64)> = rows.iter().map(|r| (r.gamma, r.gate_error)).collect();
    let log_x = matches!(grid, Grid::Range { spacing: Spacing::Log, .. });
    Ok(GammaSweep {
        temperature: base.temperature,
        peak: peak(&table, log_x)?,
        rows,
        results,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub x: f64,
    pub y: f64,
    /// Index of the largest grid value.
    pub index: usize,
}

/// Maximum of a sampled curve refined by a parabola through the largest
/// sample and its neighbours, in ln x when `log_x`. Edge maxima are returned
/// unrefined.
pub fn peak(table: &[(f64, f64)], log_x: bool) -> Result<Peak> {
    if table.is_empty() {
        return Err(Error::DegenerateFit("empty table".into()));
    }
    let mut k = 0;
    for (i, &(_, y)) in table.iter().enumerate() {
        if y > table[k].1 {
            k = i;
        }
    }
    let (x_k, y_k) = table[k];
    if k == 0 || k + 1 == table.len() {
        return Ok(Peak { x: x_k, y: y_k, index: k });
    }
    let tx = |x: f64| if log_x { x.ln() } else { x };
    let (x0, x1, x2) = (tx(table[k - 1].0), tx(x_k), tx(table[k + 1].0));
    let (y0, y1, y2) = (table[k - 1].1, y_k, table[k + 1].1);
    // Lagrange parabola through the three samples
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curv = (d12 - d01) / (x2 - x0);
    if !(curv < 0.0) {
        return Ok(Peak { x: x_k, y: y_k, index: k });
    }
    let slope = d01 - curv * (x0 + x1);
    let xv = (-slope / (2.0 * curv)).clamp(x0, x2);
    let yv = y0 + d01 * (xv - x0) + curv * (xv - x0) * (xv - x1);
    Ok(Peak {
        x: if log_x { xv.exp() } else { xv },
        y: yv,
        index: k,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TempRow {
    pub temperature: f64,
    pub gamma_max: f64,
    pub error_at_gamma_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TemperatureSweep {
    pub rows: Vec<TempRow>,
    pub sweeps: Vec<GammaSweep>,
}

/// γ sweeps at each temperature, reduced to the location and height of the
/// error maximum.
pub fn sweep_temperature(spec: &SweepSpec) -> Result<TemperatureSweep> {
    spec.expect(Variable::Temperature)?;
    let temps = spec.grid.points()?;
    if temps[0] <= 0.0 {
        return Err(Error::Config("temperatures must be positive".into()));
    }
    let inner = spec
        .gamma_grid
        .clone()
        .unwrap_or_else(|| Grid::log(1e-3, 10.0, 25));
    let sweeps: Vec<GammaSweep> = temps
        .iter()
        .map(|&t| {
            let base = ModelParams {
                temperature: t,
                ..spec.base_params.clone()
            };
            gamma_sweep_at(spec, &inner, &base)
        })
        .collect::<Result<_>>()?;
    let rows = sweeps
        .iter()
        .map(|s| TempRow {
            temperature: s.temperature,
            gamma_max: s.peak.x,
            error_at_gamma_max: s.peak.y,
        })
        .collect();
    Ok(TemperatureSweep { rows, sweeps })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    /// `a + bγ`
    Linear,
    /// `c + d/γ`
    Hyperbolic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    /// `(a, b)` or `(c, d)`.
    pub coefficients: [f64; 2],
    pub residual_rms: f64,
    /// Mean of the fitted values in the window.
    pub mean: f64,
    pub window: (f64, f64),
    pub points: usize,
}

/// Ordinary least squares of `y` on `γ` (linear) or `1/γ` (hyperbolic) over
/// the samples with `γ` inside `window`.
pub fn fit_curve(table: &[(f64, f64)], model: FitModel, window: (f64, f64)) -> Result<FitResult> {
    let pts: Vec<(f64, f64)> = table
        .iter()
        .filter(|(g, _)| *g >= window.0 * (1.0 - 1e-9) && *g <= window.1 * (1.0 + 1e-9))
        .map(|&(g, y)| match model {
            FitModel::Linear => (g, y),
            FitModel::Hyperbolic => (1.0 / g, y),
        })
        .collect();
    if pts.len() < 3 {
        return Err(Error::DegenerateFit(format!(
            "{} points in window [{}, {}]",
            pts.len(),
            window.0,
            window.1
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateFit("all abscissae coincide".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual_rms = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(FitResult {
        model,
        coefficients: [intercept, slope],
        residual_rms,
        mean: my,
        window,
        points: pts.len(),
    })
}

/// Rows that can be written as CSV with full double precision.
pub trait CsvRow {
    fn header() -> &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

impl CsvRow for TgRow {
    fn header() -> &'static [&'static str] {
        &[
            "t_g",
            "gate_error_grape",
            "gate_error_rabi",
            "t1_reference",
            "t2_reference",
            "iterations",
            "converged",
        ]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            fmt_f64(self.t_g),
            fmt_f64(self.gate_error_grape),
            fmt_f64(self.gate_error_rabi),
            fmt_f64(self.t1_reference),
            fmt_f64(self.t2_reference),
            self.iterations.to_string(),
            self.converged.to_string(),
        ]
    }
}

impl CsvRow for GammaRow {
    fn header() -> &'static [&'static str] {
        &["gamma", "kappa", "gate_error", "iterations", "converged"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            fmt_f64(self.gamma),
            fmt_f64(self.kappa),
            fmt_f64(self.gate_error),
            self.iterations.to_string(),
            self.converged.to_string(),
        ]
    }
}

impl CsvRow for TempRow {
    fn header() -> &'static [&'static str] {
        &["temperature", "gamma_max", "error_at_gamma_max"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            fmt_f64(self.temperature),
            fmt_f64(self.gamma_max),
            fmt_f64(self.error_at_gamma_max),
        ]
    }
}

pub fn write_rows<R: CsvRow, W: Write>(rows: &[R], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(R::header())?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rows_to<R: CsvRow>(rows: &[R], path: &Path) -> Result<()> {
    write_rows(rows, fs::File::create(path)?)
}

/// Package name and version for output provenance.
pub fn build_info() -> serde_json::Value {
    serde_json::json!({
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "profile": if cfg!(debug_assertions) { "debug" } else { "release" },
    })
}

/// Default fit windows: low-γ linear and high-γ hyperbolic.
pub const LOW_GAMMA_WINDOW: (f64, f64) = (1e-3, 2e-2);
pub const HIGH_GAMMA_WINDOW: (f64, f64) = (2.0, 10.0);

/// Linear and hyperbolic fits over the default windows, skipping windows
/// that hold fewer than three samples.
pub fn standard_fits(rows: &[GammaRow]) -> Vec<FitResult> {
    let table: Vec<(f64, f64)> = rows.iter().map(|r| (r.gamma, r.gate_error)).collect();
    [
        (FitModel::Linear, LOW_GAMMA_WINDOW),
        (FitModel::Hyperbolic, HIGH_GAMMA_WINDOW),
    ]
    .into_iter()
    .filter_map(|(m, w)| fit_curve(&table, m, w).ok())
    .collect()
}
