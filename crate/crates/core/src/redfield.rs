//! Bloch–Redfield generator for the qubit ⊗ TLF system.
//!
//! The TLF couples to an Ohmic bosonic bath through `τ⁺b + τ⁻b†`. The bath is
//! eliminated analytically: it enters only through `J(ω)(n(ω) + s)`. Rate
//! tensors are assembled in the eigenbasis of the control-dependent system
//! Hamiltonian, so Γ depends on the instantaneous bias `E₁`.
//!
//! Bath correlation functions are normalized as `∫dω/2π J(ω)(n(ω)+s)e^{∓iωt}`.
//! With this normalization the Λ → 0 fluctuator flips at exactly
//! `γ = 2κE₂ coth(E₂/T)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    self, commutator_superop, eig_hermitian, pauli, Axis, Ladder, Operator, SuperOp, Subsystem,
};

/// Bohr frequencies closer to zero than this use the `ω → 0` bath limit.
pub const DEGENERATE_BOHR: f64 = 1e-9;

/// Physical constants in units where ħ = k_B = 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    /// Qubit σ_x splitting Δ; sets the energy scale.
    pub delta: f64,
    /// TLF splitting E₂.
    pub e2: f64,
    /// Qubit–TLF coupling Λ.
    pub lambda: f64,
    /// Dimensionless Ohmic damping κ.
    pub kappa: f64,
    pub temperature: f64,
    /// High-frequency bath cutoff ω_c.
    pub omega_c: f64,
    /// Keep the principal-value (Lamb shift) part of the rate tensors.
    pub lamb_shift: bool,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            delta: 1.0,
            e2: 0.1,
            lambda: 0.1,
            kappa: 0.005,
            temperature: 0.2,
            omega_c: 100.0,
            lamb_shift: false,
        }
    }
}

impl ModelParams {
    /// Checks hard constraints; returns soft warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let finite = [
            self.delta,
            self.e2,
            self.lambda,
            self.kappa,
            self.temperature,
            self.omega_c,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParams("non-finite parameter".into()));
        }
        if self.delta <= 0.0 {
            return Err(Error::InvalidParams("delta must be positive".into()));
        }
        if self.e2 <= 0.0 {
            return Err(Error::InvalidParams("e2 must be positive".into()));
        }
        if self.kappa < 0.0 {
            return Err(Error::InvalidParams("kappa must be non-negative".into()));
        }
        if self.temperature <= 0.0 {
            return Err(Error::InvalidParams("temperature must be positive".into()));
        }
        let scale = self
            .delta
            .max(self.e2)
            .max(self.lambda.abs())
            .max(self.temperature);
        if self.omega_c < 10.0 * scale {
            return Err(Error::InvalidParams(format!(
                "omega_c = {} must be at least 10x the largest system scale ({scale})",
                self.omega_c
            )));
        }
        let mut warnings = Vec::new();
        if !self.motional_narrowing_ok() {
            warnings.push(format!(
                "temperature {} <= kappa*e2 = {}: outside the motional-narrowing regime",
                self.temperature,
                self.kappa * self.e2
            ));
        }
        Ok(warnings)
    }

    pub fn motional_narrowing_ok(&self) -> bool {
        self.temperature > self.kappa * self.e2
    }

    pub fn with_kappa(&self, kappa: f64) -> Self {
        ModelParams {
            kappa,
            ..self.clone()
        }
    }
}

/// `E₁σ_z + Δσ_x + E₂τ_z + Λσ_zτ_z`.
pub fn hamiltonian(p: &ModelParams, e1: f64) -> Operator {
    let sz = pauli(Axis::Z, Subsystem::Qubit);
    let sx = pauli(Axis::X, Subsystem::Qubit);
    let tz = pauli(Axis::Z, Subsystem::Tlf);
    &sz * C64::from(e1)
        + sx * C64::from(p.delta)
        + &tz * C64::from(p.e2)
        + sz * tz * C64::from(p.lambda)
}

/// ∂H/∂E₁ = σ_z ⊗ 𝟙.
pub fn control_operator() -> Operator {
    pauli(Axis::Z, Subsystem::Qubit)
}

/// Ohmic spectral density with a hard cutoff: κω on (0, ω_c].
pub fn spectral_density(omega: f64, p: &ModelParams) -> f64 {
    if omega > 0.0 && omega <= p.omega_c {
        p.kappa * omega
    } else {
        0.0
    }
}

pub fn bose(omega: f64, temperature: f64) -> f64 {
    1.0 / (omega / temperature).exp_m1()
}

/// `J(ω)(n(ω) + s)` for `s ∈ {0, 1}`, continuous at ω → 0⁺ where it tends to κT.
pub fn bath_weight(omega: f64, s: u8, p: &ModelParams) -> f64 {
    if omega.abs() < DEGENERATE_BOHR {
        return p.kappa * p.temperature;
    }
    let j = spectral_density(omega, p);
    if j == 0.0 {
        return 0.0;
    }
    j * (bose(omega, p.temperature) + s as f64)
}

// Analytic continuation of κω(n(ω)+s) through ω = 0, used by the
// principal-value subtraction.
fn smooth_weight(omega: f64, s: u8, p: &ModelParams) -> f64 {
    let x = omega / p.temperature;
    let thermal = if x.abs() < 1e-8 {
        p.temperature * (1.0 - 0.5 * x)
    } else {
        omega / x.exp_m1()
    };
    p.kappa * (thermal + s as f64 * omega)
}

const GL8: [(f64, f64); 4] = [
    (0.1834346424956498, 0.3626837833783620),
    (0.5255324099163290, 0.3137066458778873),
    (0.7966664774136267, 0.2223810344533745),
    (0.9602898564975363, 0.1012285362903763),
];

fn gauss8(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    GL8.iter()
        .map(|&(x, w)| w * (f(mid + half * x) + f(mid - half * x)))
        .sum::<f64>()
        * half
}

fn adaptive_gauss(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let mid = 0.5 * (a + b);
    let left = gauss8(f, a, mid);
    let right = gauss8(f, mid, b);
    if depth == 0 || (left + right - whole).abs() <= tol {
        return left + right;
    }
    adaptive_gauss(f, a, mid, left, 0.5 * tol, depth - 1)
        + adaptive_gauss(f, mid, b, right, 0.5 * tol, depth - 1)
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    adaptive_gauss(f, a, b, gauss8(f, a, b), tol, 40)
}

/// Principal value `P∫₀^{ω_c} J(ω)(n(ω)+s)/(ω − x) dω`.
///
/// Singularity subtraction: the smooth remainder is integrated by adaptive
/// Gauss–Legendre and the pole contributes `f(x)·ln|(ω_c − x)/x|`. The
/// integral diverges logarithmically at x = 0; that case returns 0.
pub fn principal_value(x: f64, s: u8, p: &ModelParams) -> f64 {
    if x.abs() < DEGENERATE_BOHR || p.kappa == 0.0 {
        return 0.0;
    }
    let wc = p.omega_c;
    let fx = smooth_weight(x, s, p);
    let remainder = |w: f64| (smooth_weight(w, s, p) - fx) / (w - x);
    let tol = 1e-12 * p.kappa * wc.max(1.0);
    let body = if x > 0.0 && x < wc {
        integrate(&remainder, 0.0, x, tol) + integrate(&remainder, x, wc, tol)
    } else {
        integrate(&remainder, 0.0, wc, tol)
    };
    body + fx * ((wc - x).abs() / x.abs()).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

/// The four rate tensors Σ_s^± at one control value.
#[derive(Clone, Debug)]
pub struct RateTensors {
    // [s][0 = plus, 1 = minus]
    sigma: [[Operator; 2]; 2],
}

impl RateTensors {
    pub fn new(p: &ModelParams, e1: f64) -> Result<Self> {
        if p.kappa == 0.0 {
            let zero = DMatrix::zeros(4, 4);
            return Ok(RateTensors {
                sigma: [[zero.clone(), zero.clone()], [zero.clone(), zero]],
            });
        }
        let (energies, basis) = eig_hermitian(&hamiltonian(p, e1))?;
        let build = |tau: &Operator, s: u8, dir: f64| -> Operator {
            let weighted = DMatrix::from_fn(4, 4, |a, b| {
                let t = tau[(a, b)];
                if t.norm() == 0.0 {
                    return C64::new(0.0, 0.0);
                }
                let x = dir * (energies[a] - energies[b]);
                let mut w = C64::new(0.5 * bath_weight(x, s, p), 0.0);
                if p.lamb_shift {
                    w.im += dir * principal_value(x, s, p) / (2.0 * PI);
                }
                // (1/iħ)² = −1
                -t * w
            });
            &basis * weighted * basis.adjoint()
        };
        let raise = basis.adjoint() * hilbert::ladder_tlf(Ladder::Raise) * &basis;
        let lower = raise.adjoint();
        Ok(RateTensors {
            sigma: [
                [build(&raise, 0, 1.0), build(&lower, 0, -1.0)],
                [build(&raise, 1, 1.0), build(&lower, 1, -1.0)],
            ],
        })
    }

    pub fn get(&self, s: u8, sign: Sign) -> &Operator {
        let k = match sign {
            Sign::Plus => 0,
            Sign::Minus => 1,
        };
        &self.sigma[s as usize][k]
    }

    /// The dissipative part of ρ̇ applied to ρ directly.
    pub fn apply(&self, rho: &Operator) -> Operator {
        let up = hilbert::ladder_tlf(Ladder::Raise);
        let down = hilbert::ladder_tlf(Ladder::Lower);
        let s1m = self.get(1, Sign::Minus);
        let s0p = self.get(0, Sign::Plus);
        let s1p = self.get(1, Sign::Plus);
        let s0m = self.get(0, Sign::Minus);
        hilbert::commutator(&up, &(s1m * rho)) + hilbert::commutator(&down, &(s0p * rho))
            - hilbert::commutator(&down, &(rho * s1p))
            - hilbert::commutator(&up, &(rho * s0m))
    }

    /// Superoperator of [`RateTensors::apply`].
    pub fn dissipator(&self) -> SuperOp {
        let up = hilbert::ladder_tlf(Ladder::Raise);
        let down = hilbert::ladder_tlf(Ladder::Lower);
        let s1m = self.get(1, Sign::Minus);
        let s0p = self.get(0, Sign::Plus);
        let s1p = self.get(1, Sign::Plus);
        let s0m = self.get(0, Sign::Minus);
        // expanded: Xρ + ρY − Σ₁⁻ρτ⁺ − Σ₀⁺ρτ⁻ − τ⁻ρΣ₁⁺ − τ⁺ρΣ₀⁻
        let x = &up * s1m + &down * s0p;
        let y = s1p * &down + s0m * &up;
        let mut out = DMatrix::zeros(16, 16);
        // vec(PρQ) = (Qᵀ ⊗ P) vec ρ: entry (i + 4j, k + 4l) is P[i,k] Q[l,j]
        for (pm, qm) in [(s1m, &up), (s0p, &down), (&down, s1p), (&up, s0m)] {
            for l in 0..4 {
                for j in 0..4 {
                    let q = qm[(l, j)];
                    if q.norm_sqr() == 0.0 {
                        continue;
                    }
                    for k in 0..4 {
                        for i in 0..4 {
                            out[(i + 4 * j, k + 4 * l)] -= pm[(i, k)] * q;
                        }
                    }
                }
            }
        }
        for j in 0..4 {
            for k in 0..4 {
                for i in 0..4 {
                    out[(i + 4 * j, k + 4 * j)] += x[(i, k)];
                    out[(k + 4 * i, k + 4 * j)] += y[(j, i)];
                }
            }
        }
        out
    }
}

/// One rate tensor Σ_s^± at bias `e1`.
pub fn sigma_tensor(p: &ModelParams, e1: f64, s: u8, sign: Sign) -> Result<Operator> {
    Ok(RateTensors::new(p, e1)?.get(s, sign).clone())
}

/// Γ(E₁) such that ρ̇ = −(iℋ + Γ)ρ.
pub fn relaxation_superop(p: &ModelParams, e1: f64) -> Result<SuperOp> {
    if p.kappa == 0.0 {
        return Ok(DMatrix::zeros(16, 16));
    }
    Ok(-RateTensors::new(p, e1)?.dissipator())
}

/// Assemble `−(iℋ + Γ)` from a precomputed Γ.
pub fn generator_from(p: &ModelParams, e1: f64, gamma: &SuperOp) -> SuperOp {
    -(commutator_superop(&hamiltonian(p, e1)) * C64::new(0.0, 1.0) + gamma)
}

/// L(E₁) = −(iℋ(E₁) + Γ(E₁)), acting on column-stacked 4×4 density matrices.
pub fn generator(p: &ModelParams, e1: f64) -> Result<SuperOp> {
    Ok(generator_from(p, e1, &relaxation_superop(p, e1)?))
}

/// Stationary state of the generator at fixed bias, from `L x = 0` with
/// unit trace.
pub fn steady_state(p: &ModelParams, e1: f64) -> Result<Operator> {
    let mut l = generator(p, e1)?;
    let trace_row = hilbert::vec(&hilbert::identity(4)).transpose();
    l.set_row(0, &trace_row);
    let mut rhs = DVector::zeros(16);
    rhs[0] = C64::new(1.0, 0.0);
    let x = l
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular steady-state system".into()))?;
    hilbert::unvec(&x)
}

/// TLF flip rate γ = 2κE₂ coth(E₂/T), the sum of excitation and relaxation rates.
pub fn rtn_gamma(p: &ModelParams) -> f64 {
    2.0 * p.kappa * p.e2 / (p.e2 / p.temperature).tanh()
}

/// Damping κ that produces the requested flip rate at the given E₂ and T.
pub fn kappa_for_gamma(gamma_target: f64, p: &ModelParams) -> Result<f64> {
    if !(gamma_target > 0.0) || !gamma_target.is_finite() {
        return Err(Error::InvalidParams(format!(
            "target flip rate must be positive, got {gamma_target}"
        )));
    }
    Ok(gamma_target * (p.e2 / p.temperature).tanh() / (2.0 * p.e2))
}

/// Random-telegraph noise spectrum Λ²γ/(ω² + γ²).
pub fn rtn_spectrum(omega: f64, p: &ModelParams) -> f64 {
    let g = rtn_gamma(p);
    if g == 0.0 {
        return if omega == 0.0 { f64::INFINITY } else { 0.0 };
    }
    p.lambda * p.lambda * g / (omega * omega + g * g)
}

/// `(1/T₁, 1/T₂)` of the qubit at fixed bias in the Λ → 0 noise picture.
pub fn t1_t2_rates(p: &ModelParams, e1: f64) -> (f64, f64) {
    let e_sq = p.delta * p.delta + e1 * e1;
    let r1 = p.delta * p.delta / e_sq * rtn_spectrum(2.0 * e_sq.sqrt(), p);
    let dephasing = if e1 == 0.0 {
        0.0
    } else {
        e1 * e1 / e_sq * rtn_spectrum(0.0, p)
    };
    (r1, 0.5 * r1 + dephasing)
}

/// Closed-form RTN quantities at one bias point.
#[derive(Clone, Debug, Serialize)]
pub struct RtnAnalytics {
    pub gamma: f64,
    pub lambda: f64,
    pub t1_rate: f64,
    pub t2_rate: f64,
}

impl RtnAnalytics {
    pub fn new(p: &ModelParams, e1: f64) -> Self {
        let (t1_rate, t2_rate) = t1_t2_rates(p, e1);
        RtnAnalytics {
            gamma: rtn_gamma(p),
            lambda: p.lambda,
            t1_rate,
            t2_rate,
        }
    }

    pub fn s_of_omega(&self, omega: f64) -> f64 {
        self.lambda * self.lambda * self.gamma / (omega * omega + self.gamma * self.gamma)
    }
}

#[cfg(test)]
#[path = "redfield_tests.rs"]
mod tests;
