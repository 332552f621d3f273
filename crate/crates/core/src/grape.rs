//! Open-system GRAPE: target maps, trace fidelity, the edge penalty, the
//! slicewise gradient and a multi-start ascent loop, plus the Rabi baseline.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{self, Operator, PauliFrame, SuperOp};
use crate::propagation::{self, ControlPulse, DEFAULT_AMPLITUDE_CAP, DEFAULT_DT, GAMMA_FD_STEP};
use crate::redfield::{self, ModelParams};

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gate {
    Z,
}

impl Gate {
    /// Target unitary on the qubit; `Z = exp(−iπσ_z/2)`.
    pub fn unitary(self) -> Operator {
        match self {
            Gate::Z => {
                let mut u = DMatrix::zeros(2, 2);
                u[(0, 0)] = C64::new(0.0, -1.0);
                u[(1, 1)] = C64::new(0.0, 1.0);
                u
            }
        }
    }
}

impl FromStr for Gate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "Z" | "z" => Ok(Gate::Z),
            other => Err(Error::UnsupportedGate(other.to_string())),
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gate::Z => write!(f, "Z"),
        }
    }
}

/// 4×4 conjugation map of the gate unitary.
pub fn target_superop(gate: Gate) -> SuperOp {
    let u = gate.unitary();
    u.map(|z| z.conj()).kronecker(&u)
}

/// `Re tr(F_U† F_R) / tr(F_U† F_U)` for a unitary target, i.e. divided by d².
pub fn fidelity(f_r: &SuperOp, f_u: &SuperOp) -> Result<f64> {
    if f_r.shape() != f_u.shape() || !f_u.is_square() {
        return Err(Error::Dimension {
            expected: f_u.nrows(),
            rows: f_r.nrows(),
            cols: f_r.ncols(),
        });
    }
    let overlap: C64 = f_u
        .iter()
        .zip(f_r.iter())
        .map(|(u, r)| u.conj() * r)
        .sum();
    Ok(overlap.re / f_u.nrows() as f64)
}

/// Time profile of the penalty strength α(t).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyShape {
    /// `α₀(2 − tanh(t/t₀) − tanh((t_g − t)/t₀))`: vanishes in the bulk and
    /// rises to α₀ at both ends.
    #[default]
    Edge,
    /// `α₀(2 − tanh(t/t₀) + tanh((t_g − t)/t₀))`: 2α₀ in the bulk.
    Bulk,
}

impl FromStr for PenaltyShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "edge" => Ok(PenaltyShape::Edge),
            "bulk" => Ok(PenaltyShape::Bulk),
            other => Err(Error::Config(format!("unknown penalty shape '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PenaltyParams {
    pub alpha0: f64,
    pub t0: f64,
    pub enabled: bool,
    pub shape: PenaltyShape,
}

impl Default for PenaltyParams {
    fn default() -> Self {
        PenaltyParams {
            alpha0: 2.0,
            t0: 0.02,
            enabled: true,
            shape: PenaltyShape::default(),
        }
    }
}

impl PenaltyParams {
    pub fn disabled() -> Self {
        PenaltyParams {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 >= 0.0 && self.alpha0.is_finite()) {
            return Err(Error::InvalidParams(format!("alpha0 = {}", self.alpha0)));
        }
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return Err(Error::InvalidParams(format!("t0 = {}", self.t0)));
        }
        Ok(())
    }
}

/// α(t) for a pulse of length `t_g`; zero when the penalty is disabled.
pub fn penalty_weight(t: f64, t_g: f64, pp: &PenaltyParams) -> f64 {
    if !pp.enabled {
        return 0.0;
    }
    let rise = (t / pp.t0).tanh();
    let fall = ((t_g - t) / pp.t0).tanh();
    match pp.shape {
        PenaltyShape::Edge => pp.alpha0 * (2.0 - rise - fall),
        PenaltyShape::Bulk => pp.alpha0 * (2.0 - rise + fall),
    }
}

/// Midpoint Riemann sum of `α(t) E₁(t)²`.
pub fn penalty(pulse: &ControlPulse, pp: &PenaltyParams) -> f64 {
    penalty_terms(pulse, pp)
        .map(|(w, a)| w * a * a * pulse.dt)
        .sum()
}

fn penalty_terms<'a>(
    pulse: &'a ControlPulse,
    pp: &'a PenaltyParams,
) -> impl Iterator<Item = (f64, f64)> + 'a {
    let t_g = pulse.gate_time();
    pulse
        .midpoints()
        .zip(&pulse.amplitudes)
        .map(move |(t, &a)| (penalty_weight(t, t_g, pp), a))
}

/// How the derivative of each slice exponential is formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// Exact Fréchet derivative of `exp(LΔt)` along `∂L Δt`.
    #[default]
    ExactDirectional,
    /// `Δt ∂L · F_j`, correct to first order in Δt.
    FirstOrder,
}

impl FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('_', "-").as_str() {
            "exact" | "exact-directional" => Ok(GradientMode::ExactDirectional),
            "first-order" => Ok(GradientMode::FirstOrder),
            other => Err(Error::Config(format!("unknown gradient mode '{other}'"))),
        }
    }
}

impl fmt::Display for GradientMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GradientMode::ExactDirectional => write!(f, "exact-directional"),
            GradientMode::FirstOrder => write!(f, "first-order"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Smallest penalized-fidelity gain over `stall_window` accepted steps.
    pub stall_tolerance: f64,
    pub stall_window: usize,
    pub restarts: usize,
    pub seed: u64,
    pub amplitude_cap: f64,
    pub gradient_mode: GradientMode,
    /// Upper bound on the slice length; the pulse uses `t_g / ceil(t_g / dt)`.
    pub dt: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iterations: 10_000,
            gradient_tolerance: 1e-8,
            stall_tolerance: 1e-10,
            stall_window: 10,
            restarts: 8,
            seed: 0,
            amplitude_cap: DEFAULT_AMPLITUDE_CAP,
            gradient_mode: GradientMode::default(),
            dt: DEFAULT_DT,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gradient_tolerance", self.gradient_tolerance),
            ("stall_tolerance", self.stall_tolerance),
            ("amplitude_cap", self.amplitude_cap),
            ("dt", self.dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParams("restarts must be at least 1".into()));
        }
        if self.stall_window == 0 {
            return Err(Error::InvalidParams("stall_window must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub fidelity: f64,
    pub penalty: f64,
    pub penalized: f64,
}

/// Penalized reduced-map fidelity of a pulse and its gradient.
///
/// Works in the real Pauli frame, where every slice map is a real 16×16
/// matrix. Owns a cache of relaxation superoperators keyed by amplitude, so
/// each worker thread should build its own.
pub struct Objective {
    params: ModelParams,
    target: SuperOp,
    frame: PauliFrame,
    /// Thermal-TLF embedding, 16×4.
    embed: DMatrix<f64>,
    /// `M_Uᵀ M_P`, the costate at the final time, 4×16.
    costate: DMatrix<f64>,
    /// `−i[H(E₁ = 0), ·]`.
    drift: DMatrix<f64>,
    /// `−i[σ_z ⊗ 𝟙, ·]`.
    control: DMatrix<f64>,
    penalty: PenaltyParams,
    mode: GradientMode,
    cache: HashMap<u64, Arc<Relaxation>>,
}

struct Relaxation {
    gamma: DMatrix<f64>,
    derivative: Option<DMatrix<f64>>,
}

const CACHE_LIMIT: usize = 20_000;

impl Objective {
    pub fn new(
        params: &ModelParams,
        gate: Gate,
        penalty: &PenaltyParams,
        mode: GradientMode,
    ) -> Result<Self> {
        Self::with_target(params, target_superop(gate), penalty, mode)
    }

    /// Objective against an arbitrary 4×4 target map.
    pub fn with_target(
        params: &ModelParams,
        target: SuperOp,
        penalty: &PenaltyParams,
        mode: GradientMode,
    ) -> Result<Self> {
        params.validate()?;
        penalty.validate()?;
        if target.shape() != (4, 4) {
            return Err(Error::Dimension {
                expected: 4,
                rows: target.nrows(),
                cols: target.ncols(),
            });
        }
        let frame = PauliFrame::new(4)?;
        let qubit = PauliFrame::new(2)?;
        let (embed, reduce) = hilbert::embed_and_reduce(&propagation::thermal_tlf_state(params))?;
        let embed = hilbert::real_superop(&embed, &frame, &qubit);
        let reduce = hilbert::real_superop(&reduce, &qubit, &frame);
        // Re tr(F_U† X) only sees the real part of the target's frame matrix
        let costate = hilbert::real_superop(&target, &qubit, &qubit).transpose() * reduce;
        let minus_i = C64::new(0.0, -1.0);
        let drift = hilbert::real_superop(
            &(hilbert::commutator_superop(&redfield::hamiltonian(params, 0.0)) * minus_i),
            &frame,
            &frame,
        );
        let control = hilbert::real_superop(
            &(hilbert::commutator_superop(&redfield::control_operator()) * minus_i),
            &frame,
            &frame,
        );
        Ok(Objective {
            params: params.clone(),
            target,
            frame,
            embed,
            costate,
            drift,
            control,
            penalty: penalty.clone(),
            mode,
            cache: HashMap::new(),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn target(&self) -> &SuperOp {
        &self.target
    }

    fn finish(&self, x: &DMatrix<f64>, pulse: &ControlPulse) -> Result<Evaluation> {
        let fidelity = (&self.costate * x).trace() / self.target.nrows() as f64;
        if !fidelity.is_finite() {
            return Err(Error::Numerical("non-finite fidelity".into()));
        }
        let penalty = penalty(pulse, &self.penalty);
        Ok(Evaluation {
            fidelity,
            penalty,
            penalized: fidelity - penalty,
        })
    }

    /// Build missing Γ (and ∂Γ/∂E₁ by central difference) in parallel.
    fn prime(&mut self, amplitudes: &[f64], with_derivative: bool) -> Result<()> {
        if self.cache.len() > CACHE_LIMIT {
            self.cache.clear();
        }
        let mut missing: Vec<f64> = amplitudes
            .iter()
            .copied()
            .filter(|a| match self.cache.get(&a.to_bits()) {
                None => true,
                Some(r) => with_derivative && r.derivative.is_none(),
            })
            .collect();
        missing.sort_by(f64::total_cmp);
        missing.dedup();
        let p = &self.params;
        let frame = &self.frame;
        let built: Vec<(u64, Relaxation)> = missing
            .par_iter()
            .map(|&a| {
                let gamma = hilbert::real_superop(&redfield::relaxation_superop(p, a)?, frame, frame);
                let derivative = if !with_derivative {
                    None
                } else if p.kappa == 0.0 {
                    Some(DMatrix::zeros(16, 16))
                } else {
                    let h = GAMMA_FD_STEP;
                    let diff = redfield::relaxation_superop(p, a + h)?
                        - redfield::relaxation_superop(p, a - h)?;
                    Some(hilbert::real_superop(&diff, frame, frame) * (0.5 / h))
                };
                Ok((a.to_bits(), Relaxation { gamma, derivative }))
            })
            .collect::<Result<_>>()?;
        for (k, r) in built {
            self.cache.insert(k, Arc::new(r));
        }
        Ok(())
    }

    fn relaxations(&mut self, pulse: &ControlPulse, with_derivative: bool) -> Result<Vec<Arc<Relaxation>>> {
        check_pulse(pulse)?;
        self.prime(&pulse.amplitudes, with_derivative)?;
        Ok(pulse
            .amplitudes
            .iter()
            .map(|a| self.cache[&a.to_bits()].clone())
            .collect())
    }

    fn generator(&self, e1: f64, relax: &Relaxation) -> DMatrix<f64> {
        &self.drift + &self.control * e1 - &relax.gamma
    }

    pub fn evaluate(&mut self, pulse: &ControlPulse) -> Result<Evaluation> {
        let relax = self.relaxations(pulse, false)?;
        let dt = pulse.dt;
        let maps: Vec<DMatrix<f64>> = pulse
            .amplitudes
            .par_iter()
            .zip(relax.par_iter())
            .map(|(&a, r)| hilbert::expm(&(self.generator(a, r) * dt)))
            .collect();
        let x = maps.iter().fold(self.embed.clone(), |x, f| f * x);
        self.finish(&x, pulse)
    }

    /// Value and gradient with respect to every slice amplitude.
    pub fn evaluate_with_gradient(&mut self, pulse: &ControlPulse) -> Result<(Evaluation, Vec<f64>)> {
        let relax = self.relaxations(pulse, true)?;
        let dt = pulse.dt;
        let mode = self.mode;
        let slices: Vec<(DMatrix<f64>, DMatrix<f64>)> = pulse
            .amplitudes
            .par_iter()
            .zip(relax.par_iter())
            .map(|(&a, r)| {
                let l = self.generator(a, r) * dt;
                let dg = r.derivative.as_ref().expect("derivative primed");
                let dl = (&self.control - dg) * dt;
                match mode {
                    GradientMode::ExactDirectional => hilbert::expm_frechet(&l, &dl),
                    GradientMode::FirstOrder => {
                        let f = hilbert::expm(&l);
                        let d = dl * &f;
                        (f, d)
                    }
                }
            })
            .collect();

        let mut prefixes = Vec::with_capacity(slices.len() + 1);
        prefixes.push(self.embed.clone());
        for (f, _) in &slices {
            let next = f * prefixes.last().expect("non-empty");
            prefixes.push(next);
        }
        let eval = self.finish(prefixes.last().expect("non-empty"), pulse)?;

        let norm = self.target.nrows() as f64;
        let mut grad = vec![0.0; slices.len()];
        let mut costate = self.costate.clone();
        for (j, (f, d)) in slices.iter().enumerate().rev() {
            grad[j] = (&costate * d * &prefixes[j]).trace() / norm;
            costate *= f;
        }
        for (g, (w, a)) in grad.iter_mut().zip(penalty_terms(pulse, &self.penalty)) {
            *g -= 2.0 * w * a * pulse.dt;
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical("non-finite gradient".into()));
        }
        Ok((eval, grad))
    }
}

fn check_pulse(pulse: &ControlPulse) -> Result<()> {
    if pulse.is_empty() || !(pulse.dt > 0.0) || pulse.amplitudes.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidPulse(format!(
            "{} slices, dt = {}",
            pulse.len(),
            pulse.dt
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    GradientTolerance,
    Stalled,
    MaxIterations,
    LineSearchFailed,
}

impl StopReason {
    pub fn converged(self) -> bool {
        matches!(self, StopReason::GradientTolerance | StopReason::Stalled)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartKind {
    Zero,
    Rabi,
    Random,
    Warm,
}

/// Outcome of one ascent from one starting pulse.
#[derive(Clone, Debug, Serialize)]
pub struct Ascent {
    pub start: StartKind,
    pub pulse: ControlPulse,
    pub evaluation: Evaluation,
    pub iterations: usize,
    /// Penalized fidelity after every accepted step, starting value first.
    pub history: Vec<f64>,
    pub stop_reason: StopReason,
}

/// Gradient components that would push an amplitude past the cap are dropped.
fn projected(grad: &[f64], amps: &[f64], cap: f64) -> Vec<f64> {
    grad.iter()
        .zip(amps)
        .map(|(&g, &a)| {
            if (a >= cap && g > 0.0) || (a <= -cap && g < 0.0) {
                0.0
            } else {
                g
            }
        })
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Projected gradient ascent with Armijo backtracking from one start.
pub fn ascend(
    objective: &mut Objective,
    start: ControlPulse,
    kind: StartKind,
    config: &OptimizerConfig,
) -> Result<Ascent> {
    let cap = config.amplitude_cap;
    let mut pulse = start.clipped(cap);
    let mut eval = objective.evaluate(&pulse)?;
    let (_, raw) = objective.evaluate_with_gradient(&pulse)?;
    let mut grad = projected(&raw, &pulse.amplitudes, cap);
    let mut history = vec![eval.penalized];
    let mut step = 0.1 / inf_norm(&grad).max(f64::MIN_POSITIVE);
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        if inf_norm(&grad) < config.gradient_tolerance {
            stop = StopReason::GradientTolerance;
            break;
        }
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let amps: Vec<f64> = pulse
                .amplitudes
                .iter()
                .zip(&grad)
                .map(|(a, g)| (a + step * g).clamp(-cap, cap))
                .collect();
            let gain: f64 = amps
                .iter()
                .zip(&pulse.amplitudes)
                .zip(&grad)
                .map(|((t, a), g)| (t - a) * g)
                .sum();
            let trial = ControlPulse {
                amplitudes: amps,
                dt: pulse.dt,
            };
            let value = objective.evaluate(&trial)?;
            if gain > 0.0 && value.penalized >= eval.penalized + ARMIJO_C * gain {
                accepted = Some((trial, value));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, value)) = accepted else {
            stop = StopReason::LineSearchFailed;
            break;
        };
        pulse = trial;
        eval = value;
        let (_, raw) = objective.evaluate_with_gradient(&pulse)?;
        grad = projected(&raw, &pulse.amplitudes, cap);
        history.push(eval.penalized);
        iterations += 1;
        step *= 2.0;

        let w = config.stall_window;
        if history.len() > w && history[history.len() - 1] - history[history.len() - 1 - w] < config.stall_tolerance {
            stop = StopReason::Stalled;
            break;
        }
    }
    log::debug!(
        "{kind:?} start: fidelity {:.6e} after {iterations} steps ({stop:?})",
        eval.fidelity
    );
    Ok(Ascent {
        start: kind,
        pulse,
        evaluation: eval,
        iterations,
        history,
        stop_reason: stop,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StartSummary {
    pub index: usize,
    pub kind: StartKind,
    pub fidelity: f64,
    pub penalized_fidelity: f64,
    pub iterations: usize,
    pub stop_reason: StopReason,
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimizationResult {
    pub pulse: ControlPulse,
    pub fidelity: f64,
    pub gate_error: f64,
    pub penalized_fidelity: f64,
    pub iterations: usize,
    pub fidelity_history: Vec<f64>,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub restart_index: usize,
    pub starts: Vec<StartSummary>,
}

/// Starting pulses in restart order: zero, calibrated Rabi, seeded random
/// pulses uniform in [−Δ, Δ], then any warm starts. The first three groups
/// share the `restarts` budget.
pub fn starting_pulses(
    params: &ModelParams,
    gate: Gate,
    t_g: f64,
    config: &OptimizerConfig,
    warm: &[ControlPulse],
) -> Result<Vec<(StartKind, ControlPulse)>> {
    let n = ControlPulse::slice_count(t_g, config.dt);
    let mut starts = vec![(StartKind::Zero, ControlPulse::zeros(t_g, config.dt)?)];
    if config.restarts >= 2 {
        starts.push((StartKind::Rabi, rabi_baseline(params, gate, t_g, config.dt, true)?));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 2..config.restarts {
        let amps = (0..n)
            .map(|_| rng.random_range(-1.0..=1.0) * params.delta)
            .collect();
        starts.push((StartKind::Random, ControlPulse::new(amps, t_g / n as f64)?));
    }
    for w in warm {
        if w.len() != n || (w.gate_time() - t_g).abs() > 1e-9 * t_g {
            return Err(Error::InvalidPulse(format!(
                "warm start has {} slices over {}, expected {n} over {t_g}",
                w.len(),
                w.gate_time()
            )));
        }
        starts.push((StartKind::Warm, w.clone()));
    }
    Ok(starts)
}

pub fn optimize(
    params: &ModelParams,
    t_g: f64,
    gate: Gate,
    config: &OptimizerConfig,
    penalty: &PenaltyParams,
) -> Result<OptimizationResult> {
    optimize_with_starts(params, t_g, gate, config, penalty, &[])
}

/// Multi-start ascent. Starts run concurrently; the best penalized fidelity
/// wins, ties going to the lowest start index.
pub fn optimize_with_starts(
    params: &ModelParams,
    t_g: f64,
    gate: Gate,
    config: &OptimizerConfig,
    penalty: &PenaltyParams,
    warm: &[ControlPulse],
) -> Result<OptimizationResult> {
    config.validate()?;
    if !(t_g > 0.0 && t_g.is_finite()) {
        return Err(Error::InvalidParams(format!("gate time must be positive, got {t_g}")));
    }
    let starts = starting_pulses(params, gate, t_g, config, warm)?;
    let runs: Vec<Ascent> = starts
        .into_par_iter()
        .map(|(kind, pulse)| {
            let mut objective = Objective::new(params, gate, penalty, config.gradient_mode)?;
            ascend(&mut objective, pulse, kind, config)
        })
        .collect::<Result<_>>()?;

    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.evaluation.penalized > runs[best].evaluation.penalized {
            best = i;
        }
    }
    let starts = runs
        .iter()
        .enumerate()
        .map(|(index, r)| StartSummary {
            index,
            kind: r.start,
            fidelity: r.evaluation.fidelity,
            penalized_fidelity: r.evaluation.penalized,
            iterations: r.iterations,
            stop_reason: r.stop_reason,
        })
        .collect();
    let win = runs.into_iter().nth(best).expect("at least one start");
    Ok(OptimizationResult {
        fidelity: win.evaluation.fidelity,
        gate_error: 1.0 - win.evaluation.fidelity,
        penalized_fidelity: win.evaluation.penalized,
        iterations: win.iterations,
        converged: win.stop_reason.converged(),
        stop_reason: win.stop_reason,
        fidelity_history: win.history,
        pulse: win.pulse,
        restart_index: best,
        starts,
    })
}

/// Serialized form of an optimization run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultRecord {
    pub params: ModelParams,
    pub gate: Gate,
    pub t_g: f64,
    pub dt: f64,
    pub amplitudes: Vec<f64>,
    pub fidelity: f64,
    pub gate_error: f64,
    pub penalized_fidelity: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub restart_index: usize,
    pub seed: u64,
    pub gradient_mode: GradientMode,
    pub penalty: PenaltyParams,
}

impl OptimizationResult {
    pub fn record(
        &self,
        params: &ModelParams,
        gate: Gate,
        config: &OptimizerConfig,
        penalty: &PenaltyParams,
    ) -> ResultRecord {
        ResultRecord {
            params: params.clone(),
            gate,
            t_g: self.pulse.gate_time(),
            dt: self.pulse.dt,
            amplitudes: self.pulse.amplitudes.clone(),
            fidelity: self.fidelity,
            gate_error: self.gate_error,
            penalized_fidelity: self.penalized_fidelity,
            iterations: self.iterations,
            converged: self.converged,
            stop_reason: self.stop_reason,
            restart_index: self.restart_index,
            seed: config.seed,
            gradient_mode: config.gradient_mode,
            penalty: penalty.clone(),
        }
    }
}

/// Unpenalized open-system fidelity of a pulse.
pub fn gate_fidelity(params: &ModelParams, gate: Gate, pulse: &ControlPulse) -> Result<f64> {
    let mut objective = Objective::new(params, gate, &PenaltyParams::disabled(), GradientMode::default())?;
    Ok(objective.evaluate(pulse)?.fidelity)
}

/// Rotating-wave amplitude of a resonant π rotation in time `t_g`.
pub fn nominal_rabi_amplitude(t_g: f64) -> f64 {
    PI / t_g
}

/// `E₁(t) = A cos(2Δt + φ)` sampled at slice midpoints.
pub fn rabi_pulse(
    params: &ModelParams,
    t_g: f64,
    dt: f64,
    amplitude: f64,
    phase: f64,
) -> Result<ControlPulse> {
    let omega = 2.0 * params.delta;
    ControlPulse::from_fn(t_g, dt, |t| amplitude * (omega * t + phase).cos())
}

fn qubit_step(delta: f64, e1: f64, dt: f64) -> Matrix2<C64> {
    let r = (delta * delta + e1 * e1).sqrt();
    let (s, c) = (r * dt).sin_cos();
    let k = if r > 0.0 { s / r } else { dt };
    Matrix2::new(
        C64::new(c, -k * e1),
        C64::new(0.0, -k * delta),
        C64::new(0.0, -k * delta),
        C64::new(c, k * e1),
    )
}

/// Closed-system fidelity of the bare qubit, `|tr(U_t† U)|² / 4`.
pub fn closed_qubit_fidelity(delta: f64, gate: Gate, pulse: &ControlPulse) -> f64 {
    let u = pulse
        .amplitudes
        .iter()
        .fold(Matrix2::identity(), |u, &a| qubit_step(delta, a, pulse.dt) * u);
    let t = gate.unitary();
    let overlap: C64 = (0..2)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .map(|(i, j)| t[(i, j)].conj() * u[(i, j)])
        .sum();
    overlap.norm_sqr() / 4.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RabiCalibration {
    pub amplitude: f64,
    pub phase: f64,
    pub closed_fidelity: f64,
}

/// Tune (A, φ) for the best closed-system, TLF-free fidelity: a 21 × 24 grid
/// around the nominal amplitude, then compass search.
pub fn calibrate_rabi(params: &ModelParams, gate: Gate, t_g: f64, dt: f64) -> Result<RabiCalibration> {
    let nominal = nominal_rabi_amplitude(t_g);
    let score = |a: f64, phi: f64| -> Result<f64> {
        Ok(closed_qubit_fidelity(params.delta, gate, &rabi_pulse(params, t_g, dt, a, phi)?))
    };
    let mut best = (nominal, 0.0, score(nominal, 0.0)?);
    for i in 0..21 {
        let a = nominal * (0.5 + 0.05 * i as f64);
        for k in 0..24 {
            let phi = 2.0 * PI * k as f64 / 24.0;
            let f = score(a, phi)?;
            if f > best.2 {
                best = (a, phi, f);
            }
        }
    }
    let (mut ha, mut hp) = (0.025 * nominal, PI / 24.0);
    let mut rounds = 0;
    while (ha > 1e-12 * nominal || hp > 1e-12) && rounds < 2000 {
        rounds += 1;
        let mut moved = false;
        for (da, dp) in [(ha, 0.0), (-ha, 0.0), (0.0, hp), (0.0, -hp)] {
            let f = score(best.0 + da, best.1 + dp)?;
            if f > best.2 {
                best = (best.0 + da, best.1 + dp, f);
                moved = true;
            }
        }
        if !moved {
            ha *= 0.5;
            hp *= 0.5;
        }
    }
    Ok(RabiCalibration {
        amplitude: best.0,
        phase: best.1.rem_euclid(2.0 * PI),
        closed_fidelity: best.2,
    })
}

/// The resonant-drive baseline, calibrated or at nominal (A = π/t_g, φ = 0).
pub fn rabi_baseline(
    params: &ModelParams,
    gate: Gate,
    t_g: f64,
    dt: f64,
    calibrate: bool,
) -> Result<ControlPulse> {
    if !(t_g > 0.0 && t_g.is_finite()) {
        return Err(Error::InvalidParams(format!("gate time must be positive, got {t_g}")));
    }
    if calibrate {
        let c = calibrate_rabi(params, gate, t_g, dt)?;
        rabi_pulse(params, t_g, dt, c.amplitude, c.phase)
    } else {
        rabi_pulse(params, t_g, dt, nominal_rabi_amplitude(t_g), 0.0)
    }
}

#[cfg(test)]
#[path = "grape_tests.rs"]
mod tests;
