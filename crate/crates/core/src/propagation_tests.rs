use super::*;
use crate::hilbert::{
    conjugation_superop, expm, max_abs, pauli, pauli2, projector, unitarity_defect, unvec, vec,
    Axis, Subsystem,
};
use proptest::prelude::*;
use std::f64::consts::PI;

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn closed_decoupled() -> ModelParams {
    ModelParams {
        kappa: 0.0,
        lambda: 0.0,
        ..ModelParams::default()
    }
}

fn smooth_pulse(t_g: f64, dt: f64) -> ControlPulse {
    ControlPulse::from_fn(t_g, dt, |t| 0.8 * (1.3 * t).sin() + 0.3 * (2.1 * t).cos()).unwrap()
}

fn qubit_unitary(pulse: &ControlPulse, delta: f64) -> Operator {
    pulse.amplitudes.iter().fold(hilbert::identity(2), |acc, &a| {
        let h = pauli2(Axis::Z) * c(a) + pauli2(Axis::X) * c(delta);
        expm(&(h * C64::new(0.0, -pulse.dt))) * acc
    })
}

#[test]
fn pulse_construction() {
    let p = ControlPulse::zeros(2.0 * PI, DEFAULT_DT).unwrap();
    assert_eq!(p.len(), 252);
    assert!((p.gate_time() - 2.0 * PI).abs() < 1e-12);
    assert_eq!(ControlPulse::slice_count(1.0, 0.025), 40);
    assert!(ControlPulse::new(vec![], 0.1).is_err());
    assert!(ControlPulse::new(vec![1.0], 0.0).is_err());
    assert!(ControlPulse::new(vec![f64::NAN], 0.1).is_err());
    let big = ControlPulse::new(vec![11.0, -3.0], 0.1).unwrap();
    assert!(big.check_cap(DEFAULT_AMPLITUDE_CAP).is_err());
    assert_eq!(big.clipped(10.0).amplitudes, vec![10.0, -3.0]);
}

#[test]
fn pulse_csv_roundtrip() {
    let pulse = smooth_pulse(1.3, 0.1);
    let mut buf = Vec::new();
    pulse.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("slice_index,t_mid,E1\n"));
    let back = ControlPulse::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.amplitudes, pulse.amplitudes);
    assert!((back.dt - pulse.dt).abs() < 1e-14);
}

#[test]
fn thermal_state_limits() {
    let p = ModelParams::default();
    let rho = thermal_tlf_state(&p);
    assert!((rho[(0, 0)].re - 0.2689414213699951).abs() < 1e-15);
    assert!((rho[(1, 1)].re - 0.7310585786300049).abs() < 1e-15);
    let hot = thermal_tlf_state(&ModelParams {
        temperature: 1e12,
        ..p.clone()
    });
    assert!(max_abs(&(hot - hilbert::identity(2) * c(0.5))) < 1e-12);
    let cold = thermal_tlf_state(&ModelParams {
        temperature: 1e-6,
        ..p
    });
    assert_eq!(cold[(0, 0)].re, 0.0);
    assert_eq!(cold[(1, 1)].re, 1.0);
}

#[test]
fn slice_propagator_cases() {
    let p = ModelParams {
        kappa: 0.05,
        ..ModelParams::default()
    };
    let tiny = slice_propagator(&p, 0.3, 1e-14).unwrap();
    assert!(max_abs(&(tiny - hilbert::identity(16))) < 1e-12);

    let closed = closed_decoupled();
    let full_loop = slice_propagator(&closed, 0.0, PI).unwrap();
    let reduced = reduced_map(&full_loop, &closed).unwrap();
    assert!(max_abs(&(reduced - hilbert::identity(4))) < 1e-12);

    let closed_coupled = ModelParams {
        kappa: 0.0,
        ..ModelParams::default()
    };
    let f = slice_propagator(&closed_coupled, 0.7, 0.03).unwrap();
    let u = expm(&(crate::redfield::hamiltonian(&closed_coupled, 0.7) * C64::new(0.0, -0.03)));
    assert!(max_abs(&(f - conjugation_superop(&u).unwrap())) < 1e-13);
}

// A non-unital relaxation raises the purity of the maximally mixed state, so
// slice maps are not Hilbert–Schmidt contractions: the largest singular value
// exceeds one by O(rate · dt) and equals one exactly when κ = 0. Redfield maps
// are also not completely positive, so trace distances may grow by a similar
// small amount.
#[test]
fn slice_map_norm_growth_is_bounded_by_rate() {
    for e1 in [0.0, 0.4, 2.0] {
        let closed = ModelParams::default().with_kappa(0.0);
        let f = slice_propagator(&closed, e1, DEFAULT_DT).unwrap();
        assert!((f.svd(false, false).singular_values.max() - 1.0).abs() < 1e-10);
        for kappa in [0.005, 0.05] {
            let p = ModelParams::default().with_kappa(kappa);
            let f = slice_propagator(&p, e1, DEFAULT_DT).unwrap();
            let excess = f.clone().svd(false, false).singular_values.max() - 1.0;
            assert!(excess > 0.0 && excess < kappa * DEFAULT_DT, "κ={kappa}: {excess}");
        }
    }
    let p = ModelParams::default().with_kappa(0.05);
    let f = slice_propagator(&p, 0.4, DEFAULT_DT).unwrap();
    let states = [
        projector(&[c(1.0), c(0.0), c(0.0), c(0.0)]),
        projector(&[c(0.0), c(0.0), c(0.6), C64::new(0.0, 0.8)]),
        projector(&[c(0.5), c(0.5), c(0.5), c(0.5)]),
        hilbert::identity(4) * c(0.25),
    ];
    let trace_norm = |m: &Operator| {
        let (ev, _) = hilbert::eig_hermitian(&((m + m.adjoint()) * c(0.5))).unwrap();
        ev.iter().map(|v| v.abs()).sum::<f64>()
    };
    for a in &states {
        for b in &states {
            let before = trace_norm(&(a - b));
            let after = trace_norm(&(unvec(&(&f * vec(&(a - b)))).unwrap()));
            assert!(after <= before + p.kappa * DEFAULT_DT * 0.01, "{before} -> {after}");
        }
    }
}

#[test]
fn full_map_cases() {
    let closed = closed_decoupled();
    let idle = ControlPulse::zeros(2.0 * PI, DEFAULT_DT).unwrap();
    let traj = full_map(&closed, &idle).unwrap();
    let reduced = reduced_map(&traj.final_map, &closed).unwrap();
    assert!(max_abs(&(reduced - hilbert::identity(4))) < 1e-10);

    let p = ModelParams {
        kappa: 0.05,
        ..ModelParams::default()
    };
    let single = ControlPulse::new(vec![0.37], 0.2).unwrap();
    let direct = slice_propagator(&p, 0.37, 0.2).unwrap();
    assert!(max_abs(&(full_map(&p, &single).unwrap().final_map - direct)) < 1e-15);

    let whole = smooth_pulse(2.0, 0.05);
    let (head, tail) = whole.amplitudes.split_at(17);
    let first = ControlPulse::new(head.to_vec(), whole.dt).unwrap();
    let second = ControlPulse::new(tail.to_vec(), whole.dt).unwrap();
    let composed = full_map(&p, &second).unwrap().final_map * full_map(&p, &first).unwrap().final_map;
    let traj = full_map(&p, &whole).unwrap();
    assert!(max_abs(&(composed - &traj.final_map)) < 1e-12);
    assert!(max_abs(&(traj.recompose() - &traj.final_map)) < 1e-12);

    let mut cache = RelaxationCache::new(&p);
    let with_prefixes = full_map_with(&mut cache, &whole, true).unwrap();
    let prefixes = with_prefixes.cumulative.unwrap();
    assert_eq!(prefixes.len(), whole.len());
    assert!(max_abs(&(prefixes.last().unwrap() - &traj.final_map)) < 1e-15);
}

#[test]
fn reduced_map_cases() {
    let p = ModelParams::default();
    assert!(max_abs(&(reduced_map(&hilbert::identity(16), &p).unwrap() - hilbert::identity(4))) < 1e-15);

    let closed = closed_decoupled();
    let pulse = smooth_pulse(1.7, 0.05);
    let reduced = reduced_map(&full_map(&closed, &pulse).unwrap().final_map, &closed).unwrap();
    let expected = conjugation_superop(&qubit_unitary(&pulse, closed.delta)).unwrap();
    assert!(max_abs(&(reduced - expected)) < 1e-10);

    let lossy = ModelParams {
        kappa: 0.3,
        ..ModelParams::default()
    };
    let reduced = reduced_map(&full_map(&lossy, &pulse).unwrap().final_map, &lossy).unwrap();
    let row = vec(&hilbert::identity(2)).transpose();
    assert!(max_abs(&(&row * reduced - &row)) < 1e-12);
    assert!(reduced_map(&hilbert::identity(4), &p).is_err());
}

#[test]
fn evolve_state_cases() {
    let closed = closed_decoupled();
    let rho_eq = thermal_tlf_state(&closed);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let plus = projector(&[c(s), c(s)]);
    let idle = ControlPulse::zeros(3.0, 0.1).unwrap();
    let pts = evolve_state(&closed, &idle, &plus.kronecker(&rho_eq), 4).unwrap();
    assert_eq!(pts.len(), 1 + 4 * idle.len());
    for pt in &pts {
        assert!((pt.bloch[0] - 1.0).abs() < 1e-12);
        assert!(pt.bloch[1].abs() < 1e-12 && pt.bloch[2].abs() < 1e-12);
    }

    let zero = projector(&[c(1.0), c(0.0)]);
    let pts = evolve_state(&closed, &idle, &zero.kronecker(&rho_eq), 3).unwrap();
    for pt in &pts {
        assert!((pt.bloch[2] - (2.0 * closed.delta * pt.t).cos()).abs() < 1e-10, "t={}", pt.t);
    }

    let lossy = ModelParams {
        kappa: 0.5,
        ..ModelParams::default()
    };
    let pulse = smooth_pulse(2.0, 0.1);
    let pts = evolve_state(&lossy, &pulse, &zero.kronecker(&rho_eq), 2).unwrap();
    for pt in &pts {
        assert!((pt.rho.trace() - c(1.0)).norm() < 1e-10);
    }
    let mut buf = Vec::new();
    write_trajectory_csv(&pts, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("t,bloch_x,bloch_y,bloch_z,entropy_nats,E1\n"));
    assert_eq!(text.lines().count(), pts.len() + 1);
    assert!(evolve_state(&lossy, &pulse, &(hilbert::identity(4) * c(0.5)), 1).is_err());
}

#[test]
fn closed_maps_are_unitary_along_trajectory() {
    let closed = ModelParams {
        kappa: 0.0,
        ..ModelParams::default()
    };
    let pulse = smooth_pulse(3.0, DEFAULT_DT);
    let mut cache = RelaxationCache::new(&closed);
    let traj = full_map_with(&mut cache, &pulse, true).unwrap();
    for f in traj.cumulative.unwrap().iter().step_by(10) {
        assert!(unitarity_defect(f) < 1e-10);
    }
}

#[test]
fn trace_preserved_along_trajectory() {
    let p = ModelParams {
        kappa: 0.2,
        ..ModelParams::default()
    };
    let pulse = smooth_pulse(4.0, DEFAULT_DT);
    let mut cache = RelaxationCache::new(&p);
    let traj = full_map_with(&mut cache, &pulse, true).unwrap();
    let row = vec(&hilbert::identity(4)).transpose();
    for f in traj.cumulative.unwrap() {
        assert!(max_abs(&(&row * f - &row)) < 1e-10);
    }
}

#[test]
fn refinement_converges_at_second_order() {
    let p = ModelParams {
        kappa: 0.05,
        ..ModelParams::default()
    };
    let dts = [0.2, 0.1, 0.05, 0.025, 0.0125];
    let finals: Vec<SuperOp> = dts
        .iter()
        .map(|&dt| full_map(&p, &smooth_pulse(3.0, dt)).unwrap().final_map)
        .collect();
    let pts: Vec<(f64, f64)> = finals
        .windows(2)
        .zip(&dts)
        .map(|(w, &dt)| (dt.ln(), max_abs(&(&w[0] - &w[1])).ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!((1.7..=2.3).contains(&slope), "slope {slope}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn maps_preserve_hermiticity(
        amps in prop::collection::vec(-3.0f64..3.0, 1..12),
        kappa in 0.0f64..0.5,
        re in prop::collection::vec(-1.0f64..1.0, 16),
    ) {
        let p = ModelParams { kappa, ..ModelParams::default() };
        let pulse = ControlPulse::new(amps, 0.05).unwrap();
        let f = full_map(&p, &pulse).unwrap().final_map;
        let m = DMatrix::from_fn(4, 4, |i, j| C64::new(re[4 * i + j], re[4 * j + i]));
        let rho = (&m + m.adjoint()) * c(0.5);
        let out = unvec(&(f * vec(&rho))).unwrap();
        prop_assert!(hilbert::hermiticity_defect(&out) < 1e-10);
    }
}

#[test]
fn qubit_partial_ops_consistent() {
    // σ_z ⊗ 𝟙 commutes with TLF-only operators
    let a = pauli(Axis::Z, Subsystem::Qubit);
    let b = pauli(Axis::X, Subsystem::Tlf);
    assert!(max_abs(&(&a * &b - &b * &a)) == 0.0);
}
