//! Piecewise-constant propagation of the qubit ⊗ TLF quantum map.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{self, Operator, SuperOp};
use crate::redfield::{self, ModelParams};

/// Default slice duration in units of 1/Δ.
pub const DEFAULT_DT: f64 = 0.025;
/// Default bound on |E₁| in units of Δ.
pub const DEFAULT_AMPLITUDE_CAP: f64 = 10.0;

/// Piecewise-constant control `E₁(j)` on `N` slices of equal length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPulse {
    pub amplitudes: Vec<f64>,
    pub dt: f64,
}

impl ControlPulse {
    pub fn new(amplitudes: Vec<f64>, dt: f64) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidPulse("pulse needs at least one slice".into()));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidPulse(format!("slice duration {dt} must be positive")));
        }
        if amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidPulse("non-finite amplitude".into()));
        }
        Ok(ControlPulse { amplitudes, dt })
    }

    /// Number of slices covering `t_g` with slices no longer than `dt_max`.
    pub fn slice_count(t_g: f64, dt_max: f64) -> usize {
        ((t_g / dt_max) - 1e-9).ceil().max(1.0) as usize
    }

    /// Pulse of gate time exactly `t_g`, sampling `f` at slice midpoints.
    pub fn from_fn(t_g: f64, dt_max: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        if !(t_g > 0.0) {
            return Err(Error::InvalidPulse(format!("gate time {t_g} must be positive")));
        }
        let n = Self::slice_count(t_g, dt_max);
        let dt = t_g / n as f64;
        Self::new((0..n).map(|j| f((j as f64 + 0.5) * dt)).collect(), dt)
    }

    pub fn zeros(t_g: f64, dt_max: f64) -> Result<Self> {
        Self::from_fn(t_g, dt_max, |_| 0.0)
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn gate_time(&self) -> f64 {
        self.dt * self.amplitudes.len() as f64
    }

    pub fn midpoints(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |j| (j as f64 + 0.5) * self.dt)
    }

    pub fn max_abs(&self) -> f64 {
        self.amplitudes.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    pub fn check_cap(&self, cap: f64) -> Result<()> {
        if self.max_abs() > cap {
            return Err(Error::InvalidPulse(format!(
                "amplitude {} exceeds cap {cap}",
                self.max_abs()
            )));
        }
        Ok(())
    }

    pub fn clipped(mut self, cap: f64) -> Self {
        for a in &mut self.amplitudes {
            *a = a.clamp(-cap, cap);
        }
        self
    }

    /// Write `slice_index, t_mid, E1` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["slice_index", "t_mid", "E1"])?;
        for (j, (t, a)) in self.midpoints().zip(&self.amplitudes).enumerate() {
            w.write_record([j.to_string(), fmt_f64(t), fmt_f64(*a)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a pulse written by [`ControlPulse::write_csv`]. The slice length
    /// is recovered from the midpoint spacing.
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut rows: Vec<(usize, f64, f64)> = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidPulse(format!("bad field {k} in pulse row")))
            };
            rows.push((parse(0)? as usize, parse(1)?, parse(2)?));
        }
        rows.sort_by_key(|r| r.0);
        if rows.iter().enumerate().any(|(k, r)| r.0 != k) {
            return Err(Error::InvalidPulse("slice indices must be 0..N".into()));
        }
        let dt = match rows.len() {
            0 => return Err(Error::InvalidPulse("empty pulse file".into())),
            1 => 2.0 * rows[0].1,
            n => (rows[n - 1].1 - rows[0].1) / (n - 1) as f64,
        };
        Self::new(rows.into_iter().map(|r| r.2).collect(), dt)
    }
}

/// Shortest round-trip representation, always with 17 significant digits
/// available to the parser.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Equilibrium TLF state `exp(−E₂τ_z/T)/Z`, ordered (excited, ground).
pub fn thermal_tlf_state(p: &ModelParams) -> Operator {
    // logistic form stays finite as T → 0⁺
    let excited = 1.0 / (1.0 + (2.0 * p.e2 / p.temperature).exp());
    DMatrix::from_diagonal(&DVector::from_vec(vec![
        C64::new(excited, 0.0),
        C64::new(1.0 - excited, 0.0),
    ]))
}

/// Memoized Γ(E₁) and ∂Γ/∂E₁ keyed by the exact amplitude bits.
///
/// One cache per worker; it is not shared between threads.
#[derive(Debug)]
pub struct RelaxationCache {
    params: ModelParams,
    gamma: HashMap<u64, Arc<SuperOp>>,
    derivative: HashMap<u64, Arc<SuperOp>>,
    limit: usize,
}

/// Central-difference step for ∂Γ/∂E₁.
pub const GAMMA_FD_STEP: f64 = 1e-5;

impl RelaxationCache {
    pub fn new(params: &ModelParams) -> Self {
        RelaxationCache {
            params: params.clone(),
            gamma: HashMap::new(),
            derivative: HashMap::new(),
            limit: 20_000,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    fn zero() -> SuperOp {
        DMatrix::zeros(16, 16)
    }

    /// Ensure Γ (and optionally ∂Γ) is cached for every amplitude, computing
    /// missing entries in parallel.
    pub fn prime(&mut self, amplitudes: &[f64], with_derivative: bool) -> Result<()> {
        if self.gamma.len() + self.derivative.len() > self.limit {
            self.gamma.clear();
            self.derivative.clear();
        }
        let mut missing: Vec<f64> = amplitudes
            .iter()
            .copied()
            .filter(|a| !self.gamma.contains_key(&a.to_bits()))
            .collect();
        missing.sort_by(f64::total_cmp);
        missing.dedup();
        let p = &self.params;
        let built: Vec<(u64, SuperOp)> = missing
            .par_iter()
            .map(|&a| Ok((a.to_bits(), redfield::relaxation_superop(p, a)?)))
            .collect::<Result<_>>()?;
        for (k, g) in built {
            self.gamma.insert(k, Arc::new(g));
        }
        if with_derivative {
            let mut missing: Vec<f64> = amplitudes
                .iter()
                .copied()
                .filter(|a| !self.derivative.contains_key(&a.to_bits()))
                .collect();
            missing.sort_by(f64::total_cmp);
            missing.dedup();
            let built: Vec<(u64, SuperOp)> = missing
                .par_iter()
                .map(|&a| {
                    if p.kappa == 0.0 {
                        return Ok((a.to_bits(), Self::zero()));
                    }
                    let h = GAMMA_FD_STEP;
                    let up = redfield::relaxation_superop(p, a + h)?;
                    let down = redfield::relaxation_superop(p, a - h)?;
                    Ok((a.to_bits(), (up - down) * C64::new(0.5 / h, 0.0)))
                })
                .collect::<Result<_>>()?;
            for (k, g) in built {
                self.derivative.insert(k, Arc::new(g));
            }
        }
        Ok(())
    }

    pub fn gamma(&mut self, e1: f64) -> Result<Arc<SuperOp>> {
        if let Some(g) = self.gamma.get(&e1.to_bits()) {
            return Ok(g.clone());
        }
        self.prime(&[e1], false)?;
        Ok(self.gamma[&e1.to_bits()].clone())
    }

    pub fn gamma_derivative(&mut self, e1: f64) -> Result<Arc<SuperOp>> {
        if let Some(g) = self.derivative.get(&e1.to_bits()) {
            return Ok(g.clone());
        }
        self.prime(&[e1], true)?;
        Ok(self.derivative[&e1.to_bits()].clone())
    }

    pub fn generator(&mut self, e1: f64) -> Result<SuperOp> {
        let g = self.gamma(e1)?;
        Ok(redfield::generator_from(&self.params, e1, &g))
    }
}

/// `F_j = exp(Δt · L(E₁(j)))`.
pub fn slice_propagator(p: &ModelParams, e1: f64, dt: f64) -> Result<SuperOp> {
    let l = redfield::generator(p, e1)?;
    Ok(hilbert::expm(&(l * C64::new(dt, 0.0))))
}

/// Slice maps of a pulse and their ordered product.
#[derive(Clone, Debug)]
pub struct MapTrajectory {
    pub slice_maps: Vec<SuperOp>,
    /// Forward prefixes `F_j ⋯ F_1`, j = 1..N, when requested.
    pub cumulative: Option<Vec<SuperOp>>,
    pub final_map: SuperOp,
}

impl MapTrajectory {
    /// Recompute `F_N ⋯ F_1` from the stored slices.
    pub fn recompose(&self) -> SuperOp {
        self.slice_maps
            .iter()
            .fold(hilbert::identity(16), |acc, f| f * acc)
    }
}

fn slice_maps(cache: &mut RelaxationCache, pulse: &ControlPulse) -> Result<Vec<SuperOp>> {
    cache.prime(&pulse.amplitudes, false)?;
    let gens: Vec<SuperOp> = pulse
        .amplitudes
        .iter()
        .map(|&a| cache.generator(a))
        .collect::<Result<_>>()?;
    let dt = C64::new(pulse.dt, 0.0);
    Ok(gens.par_iter().map(|l| hilbert::expm(&(l * dt))).collect())
}

/// Propagate a pulse through the full 16-dimensional map. Later slices
/// multiply on the left.
pub fn full_map(p: &ModelParams, pulse: &ControlPulse) -> Result<MapTrajectory> {
    full_map_with(&mut RelaxationCache::new(p), pulse, false)
}

pub fn full_map_with(
    cache: &mut RelaxationCache,
    pulse: &ControlPulse,
    keep_prefixes: bool,
) -> Result<MapTrajectory> {
    let maps = slice_maps(cache, pulse)?;
    let mut acc = hilbert::identity(16);
    let mut prefixes = keep_prefixes.then(|| Vec::with_capacity(maps.len()));
    for f in &maps {
        acc = f * &acc;
        if let Some(v) = prefixes.as_mut() {
            v.push(acc.clone());
        }
    }
    Ok(MapTrajectory {
        slice_maps: maps,
        cumulative: prefixes,
        final_map: acc,
    })
}

/// `F^R = P · F · E` with the TLF starting in equilibrium.
pub fn reduced_map(full: &SuperOp, p: &ModelParams) -> Result<SuperOp> {
    let (embed, reduce) = hilbert::embed_and_reduce(&thermal_tlf_state(p))?;
    if full.nrows() != 16 || full.ncols() != 16 {
        return Err(Error::Dimension {
            expected: 16,
            rows: full.nrows(),
            cols: full.ncols(),
        });
    }
    Ok(reduce * full * embed)
}

/// One sample of a state trajectory.
#[derive(Clone, Debug)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub rho: Operator,
    pub bloch: [f64; 3],
    pub entropy: f64,
    pub e1: f64,
}

/// Sample `ρ(t)` inside every slice with `samples_per_slice` sub-steps.
pub fn evolve_state(
    p: &ModelParams,
    pulse: &ControlPulse,
    rho0: &Operator,
    samples_per_slice: usize,
) -> Result<Vec<TrajectoryPoint>> {
    if rho0.nrows() != 4 || rho0.ncols() != 4 {
        return Err(Error::Dimension {
            expected: 4,
            rows: rho0.nrows(),
            cols: rho0.ncols(),
        });
    }
    let tr = rho0.trace();
    if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
        return Err(Error::TraceNotUnity(tr.re));
    }
    let m = samples_per_slice.max(1);
    let mut cache = RelaxationCache::new(p);
    let sample = |t: f64, v: &DVector<C64>, e1: f64| -> Result<TrajectoryPoint> {
        let rho = hilbert::unvec(v)?;
        let qubit = hilbert::partial_trace_tlf(&rho)?;
        Ok(TrajectoryPoint {
            t,
            bloch: hilbert::bloch_vector(&qubit)?,
            entropy: hilbert::entropy(&qubit)?,
            rho,
            e1,
        })
    };
    let mut state = hilbert::vec(rho0);
    let mut out = vec![sample(0.0, &state, pulse.amplitudes[0])?];
    let sub = pulse.dt / m as f64;
    for (j, &a) in pulse.amplitudes.iter().enumerate() {
        let step = hilbert::expm(&(cache.generator(a)? * C64::new(sub, 0.0)));
        for k in 1..=m {
            state = &step * &state;
            let t = j as f64 * pulse.dt + k as f64 * sub;
            out.push(sample(t, &state, a)?);
        }
    }
    Ok(out)
}

/// Write `t, bloch_x, bloch_y, bloch_z, entropy_nats, E1` rows.
pub fn write_trajectory_csv<W: Write>(points: &[TrajectoryPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "bloch_x", "bloch_y", "bloch_z", "entropy_nats", "E1"])?;
    for pt in points {
        w.write_record([
            fmt_f64(pt.t),
            fmt_f64(pt.bloch[0]),
            fmt_f64(pt.bloch[1]),
            fmt_f64(pt.bloch[2]),
            fmt_f64(pt.entropy),
            fmt_f64(pt.e1),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
#[path = "propagation_tests.rs"]
mod tests;
