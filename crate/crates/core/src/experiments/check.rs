//! Numerical invariant suite behind the `check` subcommand.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::grape::{Gate, GradientMode, Objective, PenaltyParams};
use crate::hilbert::{self, Axis, Operator, Subsystem, SuperOp};
use crate::propagation::{self, ControlPulse, DEFAULT_DT};
use crate::redfield::{self, ModelParams};

#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub value: f64,
    /// Accepted range `[lo, hi]`.
    pub bounds: (f64, f64),
    pub passed: bool,
}

impl CheckOutcome {
    fn new(name: &'static str, value: f64, bounds: (f64, f64)) -> Self {
        CheckOutcome {
            name,
            value,
            bounds,
            passed: value >= bounds.0 && value <= bounds.1,
        }
    }
}

fn random_pulse(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Result<ControlPulse> {
    ControlPulse::new(
        (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect(),
        DEFAULT_DT,
    )
}

fn random_hermitian(rng: &mut ChaCha8Rng) -> Operator {
    let m = DMatrix::from_fn(4, 4, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    (&m + m.adjoint()) * C64::new(0.5, 0.0)
}

fn maps(rng: &mut ChaCha8Rng, kappa: f64, count: usize) -> Result<Vec<SuperOp>> {
    let p = ModelParams::default().with_kappa(kappa);
    (0..count)
        .map(|_| {
            let pulse = random_pulse(rng, 40, 2.0)?;
            Ok(propagation::full_map(&p, &pulse)?.final_map)
        })
        .collect()
}

/// Largest `|tr F(X) − tr X|` over basis inputs.
pub fn trace_defect(f: &SuperOp) -> f64 {
    let row = hilbert::vec(&hilbert::identity(4)).transpose();
    hilbert::max_abs(&(&row * f - &row))
}

/// Hermiticity defect of `F(ρ)` for a random Hermitian `ρ`.
pub fn hermiticity_defect(f: &SuperOp, rho: &Operator) -> Result<f64> {
    let out = hilbert::unvec(&(f * hilbert::vec(rho)))?;
    Ok(hilbert::hermiticity_defect(&out))
}

/// Largest relative deviation of the analytic gradient from central
/// differences (step 1e-6) over `count` random pulses.
pub fn gradient_error(rng: &mut ChaCha8Rng, count: usize, slices: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for k in 0..count {
        let kappa = [0.0, 0.005, 0.05][k % 3];
        let p = ModelParams::default().with_kappa(kappa);
        let pulse = random_pulse(rng, slices, 1.0)?;
        let mut objective = Objective::new(
            &p,
            Gate::Z,
            &PenaltyParams::default(),
            GradientMode::ExactDirectional,
        )?;
        let (_, grad) = objective.evaluate_with_gradient(&pulse)?;
        let h = 1e-6;
        let mut fd = Vec::with_capacity(slices);
        for j in 0..slices {
            let mut up = pulse.clone();
            up.amplitudes[j] += h;
            let mut down = pulse.clone();
            down.amplitudes[j] -= h;
            fd.push(
                (objective.evaluate(&up)?.penalized - objective.evaluate(&down)?.penalized)
                    / (2.0 * h),
            );
        }
        let scale = fd.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let diff = grad.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(diff / scale);
    }
    Ok(worst)
}

/// Fitted decay rate of `⟨τ_z⟩` toward equilibrium at zero bias, relative
/// to `2κE₂ coth(E₂/T)`.
pub fn thermalization_ratio(p: &ModelParams) -> Result<f64> {
    let l = redfield::generator(p, 0.0)?;
    let mut rho0 = DMatrix::zeros(4, 4);
    rho0[(0, 0)] = C64::new(1.0, 0.0);
    let tz = hilbert::pauli(Axis::Z, Subsystem::Tlf);
    let eq = -(p.e2 / p.temperature).tanh();
    let gamma = redfield::rtn_gamma(p);
    let times: Vec<f64> = [0.0, 0.25, 0.5, 1.0, 2.0].iter().map(|x| x / gamma).collect();
    let pts: Vec<(f64, f64)> = times
        .iter()
        .map(|&t| {
            let f = hilbert::expm(&(&l * C64::new(t, 0.0)));
            let rho = hilbert::unvec(&(f * hilbert::vec(&rho0)))?;
            Ok((t, ((&tz * rho).trace().re - eq).ln()))
        })
        .collect::<Result<_>>()?;
    Ok(-slope(&pts) / gamma)
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>()
}

/// Log-log slope of successive full-map differences under slice halving,
/// for a smooth pulse sampled at midpoints.
pub fn refinement_slope(p: &ModelParams) -> Result<f64> {
    let dts = [0.2, 0.1, 0.05, 0.025, 0.0125];
    let finals: Vec<SuperOp> = dts
        .iter()
        .map(|&dt| {
            let pulse = ControlPulse::from_fn(3.0, dt, |t| 0.8 * (2.0 * t).sin() + 0.3)?;
            Ok(propagation::full_map(p, &pulse)?.final_map)
        })
        .collect::<Result<_>>()?;
    let pts: Vec<(f64, f64)> = finals
        .windows(2)
        .zip(&dts)
        .map(|(w, &dt)| (dt.ln(), hilbert::max_abs(&(&w[0] - &w[1])).ln()))
        .collect();
    Ok(slope(&pts))
}

/// Run every invariant. Deterministic for a given seed.
pub fn run_invariants(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut trace = 0.0f64;
    let mut herm = 0.0f64;
    for kappa in [0.005, 0.05, 0.5] {
        for f in maps(&mut rng, kappa, 3)? {
            trace = trace.max(trace_defect(&f));
            herm = herm.max(hermiticity_defect(&f, &random_hermitian(&mut rng))?);
        }
    }
    out.push(CheckOutcome::new("trace preservation", trace, (0.0, 1e-10)));
    out.push(CheckOutcome::new("hermiticity preservation", herm, (0.0, 1e-10)));

    let unitary = maps(&mut rng, 0.0, 3)?
        .iter()
        .map(hilbert::unitarity_defect)
        .fold(0.0, f64::max);
    out.push(CheckOutcome::new("closed-system unitarity", unitary, (0.0, 1e-10)));

    out.push(CheckOutcome::new(
        "gradient vs finite differences",
        gradient_error(&mut rng, 20, 16)?,
        (0.0, 1e-5),
    ));

    let decoupled = ModelParams {
        lambda: 0.0,
        kappa: 0.05,
        ..ModelParams::default()
    };
    out.push(CheckOutcome::new(
        "TLF thermalization rate / γ",
        thermalization_ratio(&decoupled)?,
        (0.9, 1.1),
    ));

    out.push(CheckOutcome::new(
        "dt refinement order",
        refinement_slope(&ModelParams::default().with_kappa(0.05))?,
        (1.7, 2.3),
    ));
    Ok(out)
}
