//! Parameter identification and single-cycle impedance calibration on
//! synthetic data.

use celltherm::drive_cycle::{heat_series, Column, HevCycleGenerator};
use celltherm::estimation::{EstimatorConfig, EstimatorSetup};
use celltherm::impedance::ImpedanceCalibration;
use celltherm::optimize::MultiStartOptions;
use celltherm::sysid::{calibrate_pipeline, identify, rmse, uniform_estimator_state, Bound, FreeParameter, IdProblem, Pairing};
use celltherm::twin::{build_twin_cycle, TruthSource, TwinSpec};
use celltherm::{discretize, CellGeometry, Error, SpectralConfig, StateSpaceModel, ThermalParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn problem(truth: ThermalParams, free: &[FreeParameter], duration: f64, noise: f64, seed: u64) -> IdProblem {
    let g = CellGeometry::a123_32113();
    let gen = HevCycleGenerator::default();
    let cycle = gen.generate(100, duration).unwrap();
    let q = heat_series(&cycle, &gen.ocv, &gen.cell, &g).volumetric;
    let mut p = IdProblem {
        free: free.iter().map(|&f| Bound::default_for(f)).collect(),
        fixed: truth,
        geometry: g,
        spectral: SpectralConfig::default(),
        dt: 1.0,
        measured: vec![[0.0; 4]; q.len()],
        q,
        initial_temperature: truth.t_ambient,
    };
    let clean = p.simulate(truth).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise).unwrap();
    p.measured = clean
        .into_iter()
        .map(|mut row| {
            for v in row.iter_mut() {
                *v += normal.sample(&mut rng);
            }
            row
        })
        .collect();
    p
}

fn theta_of(p: &ThermalParams, free: &[FreeParameter]) -> Vec<f64> {
    free.iter().map(|f| f.get(p)).collect()
}

#[test]
fn model_generated_data_has_zero_residual() {
    let truth = ThermalParams::config1();
    let p = problem(truth, &FreeParameter::ALL, 600.0, 0.0, 0);
    let eps = p.residual(&theta_of(&truth, &FreeParameter::ALL)).unwrap();
    assert!(eps.iter().flatten().all(|e| *e == 0.0));
    assert_eq!(p.objective(&theta_of(&truth, &FreeParameter::ALL)), 0.0);
}

#[test]
fn side_cooling_perturbation_shows_on_curved_surface_probes() {
    let truth = ThermalParams::config2();
    let p = problem(truth, &FreeParameter::ALL, 3600.0, 0.0, 0);
    let mut theta = theta_of(&truth, &FreeParameter::ALL);
    theta[3] *= 1.1;
    let r = rmse(&p.residual(&theta).unwrap());
    assert!(r.iter().all(|v| *v > 0.0));
    for surface in &r[1..] {
        assert!(*surface > r[0], "{r:?}");
    }
}

#[test]
fn zero_data_against_warm_simulation_scores_high() {
    let truth = ThermalParams::config1();
    let mut p = problem(truth, &FreeParameter::ALL, 600.0, 0.0, 0);
    p.measured.iter_mut().for_each(|r| *r = [0.0; 4]);
    let f = p.objective(&theta_of(&truth, &FreeParameter::ALL));
    assert!(f > 600.0 * 2.0 * 8.0, "{f}");
}

#[test]
fn out_of_bounds_candidate_is_rejected_not_fatal() {
    let truth = ThermalParams::config1();
    let p = problem(truth, &FreeParameter::ALL, 300.0, 0.0, 0);
    assert!(p.residual(&[1000.0, 155.0, 23.3, 16.9]).is_err());
    assert_eq!(p.objective(&[1000.0, 155.0, 23.3, 16.9]), f64::INFINITY);
}

#[test]
fn noise_free_recovery_within_half_percent() {
    let truth = ThermalParams::config1();
    let p = problem(truth, &FreeParameter::ALL, 3600.0, 0.0, 0);
    let r = identify(&p, &MultiStartOptions::default()).unwrap();
    for (param, v) in &r.values {
        let rel = (v / param.get(&truth) - 1.0).abs();
        assert!(rel < 5e-3, "{}: {v}", param.name());
    }
    assert!(r.objective <= r.best_start_objective);
}

#[test]
fn config2_with_known_axial_conductivity_identifies_three_coefficients() {
    let truth = ThermalParams::config2();
    let free = [FreeParameter::HLeft, FreeParameter::HRight, FreeParameter::HSide];
    let p = problem(truth, &free, 3600.0, 0.1, 3);
    let r = identify(&p, &MultiStartOptions { seed: 3, ..Default::default() }).unwrap();
    assert_eq!(r.values.len(), 3);
    assert_eq!(r.params.k_z, truth.k_z);
    for (param, v) in &r.values {
        let rel = (v / param.get(&truth) - 1.0).abs();
        assert!(rel < 0.1, "{}: {v}", param.name());
    }
}

#[test]
fn objective_is_invariant_to_a_consistent_temperature_shift() {
    let truth = ThermalParams::config1();
    let p = problem(truth, &FreeParameter::ALL, 900.0, 0.1, 1);
    let shift = 12.5;
    let mut shifted = p.clone();
    shifted.fixed.t_ambient += shift;
    shifted.initial_temperature += shift;
    shifted.measured.iter_mut().for_each(|r| r.iter_mut().for_each(|v| *v += shift));
    for theta in [[19.3, 155.0, 23.3, 16.9], [5.0, 40.0, 200.0, 3.0], [80.0, 1.0, 0.5, 100.0]] {
        let a = p.objective(&theta);
        let b = shifted.objective(&theta);
        assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{a} vs {b}");
    }
}

#[test]
fn sensor_noise_gives_table_scale_rmse() {
    let truth = ThermalParams::config1();
    let p = problem(truth, &FreeParameter::ALL, 3600.0, 0.3, 7);
    let r = identify(&p, &MultiStartOptions { seed: 7, ..Default::default() }).unwrap();
    for v in r.rmse {
        assert!(v > 0.1 && v < 1.0, "{:?}", r.rmse);
    }
}

#[test]
fn bad_bounds_are_rejected() {
    let truth = ThermalParams::config1();
    let mut p = problem(truth, &FreeParameter::ALL, 120.0, 0.0, 0);
    p.free[0] = Bound { param: FreeParameter::KZ, lo: 10.0, hi: 5.0 };
    assert!(matches!(identify(&p, &MultiStartOptions::default()), Err(Error::InvalidParameter { .. })));
}

fn calibration_twin(z_noise: f64) -> (celltherm::drive_cycle::DriveCycle, Vec<f64>, ImpedanceCalibration) {
    let params = ThermalParams::config1();
    let cal = ImpedanceCalibration::synthetic_default();
    let spec = TwinSpec { seed: 11, z_noise, temp_noise: 0.0, ..TwinSpec::default() };
    let gen = HevCycleGenerator { i_max: 35.0, ..HevCycleGenerator::default() };
    let (cycle, q, _) = build_twin_cycle(
        &spec,
        &gen,
        CellGeometry::a123_32113(),
        params,
        SpectralConfig::default(),
        TruthSource::Spectral,
        &cal,
    )
    .unwrap();
    (cycle, q, cal)
}

fn run_pipeline(cycle: &celltherm::drive_cycle::DriveCycle, q: &[f64]) -> celltherm::Result<celltherm::sysid::PipelineCalibration> {
    let params = ThermalParams::config1();
    let model = StateSpaceModel::assemble(CellGeometry::a123_32113(), params, SpectralConfig::default()).unwrap();
    let disc = discretize(&model, 1.0).unwrap();
    let cfg = EstimatorConfig::kf_default();
    let setup = EstimatorSetup { model: &model, discrete: &disc, calibration: None, config: &cfg };
    let initial = uniform_estimator_state(&model, 8.0, 1.0, 0.1);
    calibrate_pipeline(cycle, q, &setup, initial, Pairing::KfT3, 215.0)
}

#[test]
fn noiseless_pipeline_recovers_generating_quadratic() {
    let (cycle, q, truth) = calibration_twin(0.0);
    let fit = run_pipeline(&cycle, &q).unwrap().calibration;
    for (a, b) in [(fit.a1, truth.a1), (fit.a2, truth.a2), (fit.a3, truth.a3)] {
        assert!((a / b - 1.0).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn noisy_pipeline_predicts_within_two_sigma() {
    let sigma = 3e-5;
    let (cycle, q, truth) = calibration_twin(sigma);
    let fit = run_pipeline(&cycle, &q).unwrap().calibration;
    let (lo, hi) = fit.t_range;
    for i in 0..=100 {
        let t = lo + (hi - lo) * i as f64 / 100.0;
        assert!((fit.predict_z(t) - truth.predict_z(t)).abs() < 2.0 * sigma, "t = {t}");
    }
}

#[test]
fn pipeline_requires_impedance_column() {
    let (mut cycle, q, _) = calibration_twin(0.0);
    cycle.samples.iter_mut().for_each(|s| s.set(Column::ZImag, None));
    assert!(matches!(run_pipeline(&cycle, &q), Err(Error::MissingColumn("z_imag"))));
}

#[test]
fn pipeline_needs_three_impedance_samples() {
    let (mut cycle, q, _) = calibration_twin(0.0);
    let mut kept = 0;
    for s in cycle.samples.iter_mut() {
        if s.z_imag.is_some() {
            kept += 1;
            if kept > 2 {
                s.z_imag = None;
            }
        }
    }
    assert!(matches!(run_pipeline(&cycle, &q), Err(Error::Calibration(_))));
}
