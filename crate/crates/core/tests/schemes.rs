//! Cross-scheme and refinement checks of the two integrators.

use batchelor_core::initial::InitialCondition;
use batchelor_core::integrators::{simulate, splitting_step, EmStepper, Schedule, Scheme, StepPlan};
use batchelor_core::models::{build_noise_matrix, extract_xy, ModelSpec};
use batchelor_core::noise::{NoiseDraw, NoiseSource};
use batchelor_core::stats::{fit_line, mean_stderr};
use batchelor_core::{Dimension, ModeIndex, SpectralField};
use num_complex::Complex64;
use std::f64::consts::PI;

fn low_sq(f: &SpectralField) -> f64 {
    f.project_low_modes().sobolev_norm_sq(0.0)
}

/// Low modes, their `‖k‖² = 2` neighbours and a few outer modes.
fn test_field(cutoff: usize) -> SpectralField {
    SpectralField::new(
        Dimension::Two,
        cutoff,
        [
            (ModeIndex::new2(1, 0), Complex64::new(0.5, 0.2)),
            (ModeIndex::new2(0, 1), Complex64::new(0.3, 0.0)),
            (ModeIndex::new2(1, 1), Complex64::new(0.0, 0.4)),
            (ModeIndex::new2(1, -1), Complex64::new(0.25, -0.1)),
            (ModeIndex::new2(2, 1), Complex64::new(0.3, 0.1)),
            (ModeIndex::new2(0, 3), Complex64::new(-0.2, 0.2)),
        ],
    )
    .unwrap()
}

#[test]
fn splitting_and_euler_maruyama_agree_weakly_after_one_step() {
    let spec = ModelSpec::new(Dimension::Two, 0.01, 8).unwrap();
    let dt = 1e-3;
    let f = test_field(8);
    let n = 100_000u64;
    let plan = StepPlan::new(&spec, dt, Scheme::Splitting, 0).unwrap();
    let split_noise = NoiseSource::new(11, 4);
    let split: Vec<f64> =
        (0..n).map(|i| low_sq(&splitting_step(&f, &spec, &plan, &split_noise.draw(i, dt, 1)).unwrap())).collect();
    let em = EmStepper::new(&spec).unwrap();
    let em_noise = NoiseSource::new(12, 4);
    let euler: Vec<f64> = (0..n)
        .map(|i| {
            let mut g = f.clone();
            em.step(&mut g, dt, &em_noise.draw(i, dt, 1)).unwrap();
            low_sq(&g)
        })
        .collect();
    let (ms, ss) = mean_stderr(&split).unwrap();
    let (me, se) = mean_stderr(&euler).unwrap();
    let tol = 3.0 * (ss * ss + se * se).sqrt();
    assert!((ms - me).abs() <= tol, "splitting {ms} ± {ss}, EM {me} ± {se}");
    // the comparison must be sharper than the one-step change it tests
    assert!((ms - low_sq(&f)).abs() > 5.0 * tol);
}

/// `E‖Π≤1 f_dt‖²` for one Euler–Maruyama step, exactly, by linearity in
/// the increments: the drift-only step plus `dt` times the squared noise
/// columns.
fn em_expected_low_sq(em: &EmStepper, f: &SpectralField, dt: f64, count: usize) -> f64 {
    let mut base = f.clone();
    em.step(&mut base, dt, &NoiseDraw::zeros(count)).unwrap();
    let mut total = low_sq(&base);
    for i in 0..count {
        let mut unit = NoiseDraw::zeros(count);
        unit.0[i] = 1.0;
        let mut g = f.clone();
        em.step(&mut g, dt, &unit).unwrap();
        total += dt * low_sq(&g.sub(&base).unwrap());
    }
    total
}

#[test]
fn euler_maruyama_one_step_matches_ito_trace_term() {
    for dim in [Dimension::Two, Dimension::Three] {
        let spec = ModelSpec::new(dim, 0.03, 4).unwrap();
        let f = InitialCondition::RandomShell { radius: 1, seed: 5 }.build(dim, 4).unwrap();
        let mut f = f;
        let outer = InitialCondition::RandomShell { radius: 2, seed: 6 }.build(dim, 4).unwrap();
        for (k, c) in outer.canonical() {
            if c.norm() > 0.0 {
                f.set(k, c).unwrap();
            }
        }
        let (x, y) = extract_xy(&f);
        let a = build_noise_matrix(&y).unwrap();
        let x2 = x.norm().powi(2);
        let fr2 = a.0.norm_squared();
        let gamma = spec.gamma();
        let em = EmStepper::new(&spec).unwrap();
        for dt in [1e-3, 1e-4, 1e-5] {
            let exact = em_expected_low_sq(&em, &f, dt, spec.noise_count()) - low_sq(&f);
            // ‖Π≤1 f‖² counts each low mode and its conjugate: 2‖X‖²
            let ito = 2.0 * (-2.0 * gamma * x2 + PI * PI * fr2) * dt;
            let residual = exact - ito;
            let second_order = 2.0 * gamma * gamma * x2 * dt * dt;
            assert!(
                (residual - second_order).abs() <= 1e-9 * ito.abs(),
                "{dim:?} dt={dt}: {residual} vs {second_order}"
            );
        }

        let dt = 1e-4;
        let noise = NoiseSource::new(3, spec.noise_count());
        let samples: Vec<f64> = (0..100_000u64)
            .map(|i| {
                let mut g = f.clone();
                em.step(&mut g, dt, &noise.draw(i, dt, 1)).unwrap();
                low_sq(&g) - low_sq(&f)
            })
            .collect();
        let (mean, se) = mean_stderr(&samples).unwrap();
        let ito = 2.0 * (-2.0 * gamma * x2 + PI * PI * fr2) * dt;
        assert!((mean - ito).abs() <= 3.0 * se + 4.0 * gamma * gamma * x2 * dt * dt, "{dim:?}: {mean} ± {se} vs {ito}");
    }
}

/// Strong order of Lie splitting with non-commuting shears is 1/2, and
/// the asymptotic regime needs `dt` well below `(2π)^{-4}`, hence the short
/// horizon and small steps.
#[test]
fn splitting_converges_strongly_under_dt_refinement() {
    let spec = ModelSpec::new(Dimension::Two, 0.01, 8).unwrap();
    let f0 = InitialCondition::RandomShell { radius: 1, seed: 1 }.build(Dimension::Two, 8).unwrap();
    let horizon = 0.05;
    let fine = 1e-5;
    let schedule = Schedule { diag_every: u64::MAX, ..Schedule::default() };
    let observe = |seed: u64, refine: u64| {
        let mut plan = StepPlan::new(&spec, fine * refine as f64, Scheme::Splitting, seed).unwrap();
        plan.fine_per_step = refine;
        let out = simulate(&f0, &spec, &plan, horizon, &schedule).unwrap();
        low_sq(&out.final_field).sqrt()
    };
    let refinements = [64u64, 32, 16, 8, 4];
    let seeds = 64;
    // errors[level][seed] against the finest path
    let mut errors = vec![Vec::new(); refinements.len()];
    for seed in 0..seeds {
        let reference = observe(seed, 1);
        for (e, &r) in errors.iter_mut().zip(&refinements) {
            e.push((observe(seed, r) - reference).abs());
        }
    }
    let order = |skip: Option<usize>| {
        let points: Vec<(f64, f64)> = refinements
            .iter()
            .zip(&errors)
            .map(|(&r, e)| {
                let kept: Vec<f64> = e.iter().enumerate().filter(|&(i, _)| Some(i) != skip).map(|(_, v)| *v).collect();
                ((fine * r as f64).ln(), mean_stderr(&kept).unwrap().0.ln())
            })
            .collect();
        fit_line(&points).unwrap().slope
    };
    let estimate = order(None);
    let jack: Vec<f64> = (0..seeds as usize).map(|i| order(Some(i))).collect();
    let (jm, _) = mean_stderr(&jack).unwrap();
    let n = jack.len() as f64;
    let se = ((n - 1.0) / n * jack.iter().map(|v| (v - jm).powi(2)).sum::<f64>()).sqrt();
    assert!(estimate >= 0.5, "observed order {estimate} ± {se}");
}

#[test]
fn zero_diffusivity_conserves_the_grid_norm() {
    let spec = ModelSpec::new(Dimension::Two, 0.0, 64).unwrap();
    let f0 = InitialCondition::RandomShell { radius: 2, seed: 4 }.build(Dimension::Two, 64).unwrap();
    let plan = StepPlan::new(&spec, 2e-4, Scheme::Splitting, 8).unwrap();
    let out = simulate(&f0, &spec, &plan, 2.0, &Schedule { diag_every: 1000, ..Schedule::default() }).unwrap();
    assert_eq!(out.steps, 10_000);
    let drift = (out.final_log_l2_grid - f0.l2_norm().ln()).abs();
    assert!(drift < 1e-9, "|Δ log ‖f‖| = {drift:e}");
}

#[test]
fn diffusive_norm_decreases_monotonically() {
    let spec = ModelSpec::new(Dimension::Two, 0.04, 64).unwrap();
    let f0 = InitialCondition::RandomShell { radius: 2, seed: 2 }.build(Dimension::Two, 64).unwrap();
    let plan = StepPlan::new(&spec, 1e-3, Scheme::Splitting, 3).unwrap();
    let out = simulate(&f0, &spec, &plan, 10.0, &Schedule { diag_every: 10, ..Schedule::default() }).unwrap();
    assert!(out.records.windows(2).all(|w| w[1].log_l2.unwrap() < w[0].log_l2.unwrap()));
}

#[test]
fn identical_seeds_replay_bit_for_bit() {
    for scheme in [Scheme::Splitting, Scheme::EulerMaruyama] {
        let spec = ModelSpec::new(Dimension::Two, 0.02, 6).unwrap();
        let f0 = test_field(6);
        let plan = StepPlan::new(&spec, 5e-5, scheme, 77).unwrap();
        let schedule = Schedule { diag_every: 20, s_values: vec![0.5, 1.0], ..Schedule::default() };
        let a = simulate(&f0, &spec, &plan, 0.01, &schedule).unwrap();
        let b = simulate(&f0, &spec, &plan, 0.01, &schedule).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.final_field.raw(), b.final_field.raw());
        let other = StepPlan { seed: 78, ..plan.clone() };
        let c = simulate(&f0, &spec, &other, 0.01, &schedule).unwrap();
        assert_ne!(a.final_field.raw(), c.final_field.raw());
    }
}

#[test]
fn zero_horizon_and_zero_field() {
    let spec = ModelSpec::new(Dimension::Two, 0.01, 4).unwrap();
    let f0 = test_field(4);
    let plan = StepPlan::new(&spec, 1e-3, Scheme::Splitting, 1).unwrap();
    let out = simulate(&f0, &spec, &plan, 0.0, &Schedule::default()).unwrap();
    assert_eq!((out.records.len(), out.snapshots.len(), out.steps), (1, 1, 0));
    assert_eq!(out.records[0].t, 0.0);

    let zero = SpectralField::zeros(Dimension::Two, 4).unwrap();
    let out = simulate(&zero, &spec, &plan, 0.05, &Schedule { diag_every: 5, ..Schedule::default() }).unwrap();
    let s = out.summary(&spec, 1, None);
    assert_eq!((s.rate_global, s.rate_limsup_proxy, s.ell_mean, s.spectrum_radius_95), (None, None, None, None));
}
