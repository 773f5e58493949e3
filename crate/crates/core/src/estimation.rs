//! Kalman filtering on the discretized thermal model.
//!
//! Two measurement channels are supported: the imaginary impedance, which
//! depends nonlinearly on the state through the mean temperature (EKF),
//! and a single surface thermocouple, which is a linear output (KF).
//! Covariance updates use the Joseph form and are re-symmetrised after
//! every step.

use std::io::Write;

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::discrete::DiscreteStateSpace;
use crate::drive_cycle::{Column, DriveCycle};
use crate::error::{Error, Result};
use crate::impedance::ImpedanceCalibration;
use crate::model::{OutputMap, ScalarOutput, StateSpaceModel};

/// Filter tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Measurement noise variance: Ω² for impedance, °C² for temperature.
    pub r_meas: f64,
    /// Process-noise scale β_v.
    pub q_proc_beta: f64,
    /// Multiplier `c` in `Rᵛ = c · β_v² · I`.
    pub process_noise_diag: f64,
    /// Interval between measurement updates, s.
    pub meas_period: f64,
    /// Time-update interval, s.
    pub dt: f64,
}

impl EstimatorConfig {
    /// Impedance EKF: σ_n = 3e-5 Ω, β_v = 5e-3, updates every 24 s.
    pub fn ekf_default() -> Self {
        Self {
            r_meas: 3e-5f64.powi(2),
            q_proc_beta: 5e-3,
            process_noise_diag: 2.0,
            meas_period: 24.0,
            dt: 1.0,
        }
    }

    /// Surface-thermocouple KF: σ_n = 5e-4 °C, β_v = 0.05.
    pub fn kf_default() -> Self {
        Self {
            r_meas: 5e-4f64.powi(2),
            q_proc_beta: 0.05,
            process_noise_diag: 2.0,
            meas_period: 1.0,
            dt: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(self.r_meas > 0.0) {
            return bad("r_meas", format!("must be positive, got {}", self.r_meas));
        }
        if !(self.q_proc_beta >= 0.0) {
            return bad("q_proc_beta", format!("must be non-negative, got {}", self.q_proc_beta));
        }
        if !(self.process_noise_diag >= 0.0) {
            return bad("process_noise_diag", format!("must be non-negative, got {}", self.process_noise_diag));
        }
        if !(self.dt > 0.0) {
            return bad("dt", format!("must be positive, got {}", self.dt));
        }
        let ratio = self.meas_period / self.dt;
        if !(ratio >= 1.0 - 1e-9) || (ratio - ratio.round()).abs() > 1e-9 {
            return bad("meas_period", format!("{} s is not a positive multiple of dt = {} s", self.meas_period, self.dt));
        }
        Ok(())
    }

    pub fn process_covariance(&self, n: usize) -> DMatrix<f64> {
        DMatrix::identity(n, n) * (self.process_noise_diag * self.q_proc_beta * self.q_proc_beta)
    }
}

/// `x̂`, `P` and the step index.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub x_hat: DVector<f64>,
    pub p: DMatrix<f64>,
    pub k: usize,
}

impl EstimatorState {
    pub fn new(x_hat: DVector<f64>, p: DMatrix<f64>) -> Result<Self> {
        if p.nrows() != x_hat.len() || p.ncols() != x_hat.len() {
            return Err(Error::Dimension(format!(
                "covariance is {}x{} for a state of length {}",
                p.nrows(),
                p.ncols(),
                x_hat.len()
            )));
        }
        Ok(Self { x_hat, p, k: 0 })
    }

    /// Smallest eigenvalue of `P`, scaled by its trace.
    pub fn min_relative_eigenvalue(&self) -> f64 {
        let tr = self.p.trace().abs().max(f64::MIN_POSITIVE);
        self.p.clone().symmetric_eigenvalues().min() / tr
    }

    /// Symmetric and positive semi-definite to `1e-10 · trace`.
    pub fn covariance_is_valid(&self) -> bool {
        (&self.p - self.p.transpose()).amax() == 0.0 && self.min_relative_eigenvalue() >= -1e-10
    }
}

/// Prior covariance for an uncertain uniform starting temperature: variance
/// `sigma_uniform²` on the constant mode plus `sigma_mode²` on every mode.
pub fn initial_covariance(n: usize, sigma_uniform: f64, sigma_mode: f64) -> DMatrix<f64> {
    let mut p = DMatrix::identity(n, n) * (sigma_mode * sigma_mode);
    p[(0, 0)] += sigma_uniform * sigma_uniform;
    p
}

/// Outcome of a scalar measurement update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Innovation {
    /// Measurement minus prediction.
    pub value: f64,
    /// Innovation variance `H P⁻ Hᵀ + R`.
    pub variance: f64,
    pub predicted: f64,
}

fn symmetrize(p: &DMatrix<f64>) -> DMatrix<f64> {
    (p + p.transpose()) * 0.5
}

/// `x̂⁻ = Ā x̂ + B̄ u`, `P⁻ = Ā P Āᵀ + Rᵛ`.
pub fn time_update(
    state: &EstimatorState,
    model: &DiscreteStateSpace,
    u: &DVector<f64>,
    cfg: &EstimatorConfig,
) -> EstimatorState {
    let n = state.x_hat.len();
    let p = &model.a_bar * &state.p * model.a_bar.transpose() + cfg.process_covariance(n);
    EstimatorState {
        x_hat: model.step(&state.x_hat, u),
        p: symmetrize(&p),
        k: state.k + 1,
    }
}

fn scalar_update(
    state: &EstimatorState,
    h: &RowDVector<f64>,
    measured: f64,
    predicted: f64,
    r: f64,
) -> Result<(EstimatorState, Innovation)> {
    let ph = &state.p * h.transpose();
    let s = (h * &ph)[(0, 0)] + r;
    if !(s > 0.0) {
        return Err(Error::FilterDivergence(s));
    }
    let gain = ph / s;
    let innovation = measured - predicted;
    let x_hat = &state.x_hat + &gain * innovation;
    let n = state.x_hat.len();
    let i_kh = DMatrix::identity(n, n) - &gain * h;
    let p = &i_kh * &state.p * i_kh.transpose() + &gain * gain.transpose() * r;
    Ok((
        EstimatorState { x_hat, p: symmetrize(&p), k: state.k },
        Innovation { value: innovation, variance: s, predicted },
    ))
}

/// Impedance prediction `f(x) = Z″(c̄·x + offset)` and its Jacobian
/// `(a2 + 2 a3 T̄) c̄`.
pub fn impedance_jacobian(
    x: &DVector<f64>,
    cal: &ImpedanceCalibration,
    mean_row: &ScalarOutput,
) -> (f64, RowDVector<f64>) {
    let t_mean = mean_row.eval(x);
    (cal.predict_z(t_mean), &mean_row.row * cal.slope(t_mean))
}

/// EKF update with an impedance measurement.
pub fn ekf_measurement_update(
    state: &EstimatorState,
    z_meas: f64,
    cal: &ImpedanceCalibration,
    mean_row: &ScalarOutput,
    cfg: &EstimatorConfig,
) -> Result<(EstimatorState, Innovation)> {
    let (predicted, h) = impedance_jacobian(&state.x_hat, cal, mean_row);
    if cal.slope(mean_row.eval(&state.x_hat)) == 0.0 {
        return Err(Error::Calibration(
            "impedance map has zero slope at the estimated mean temperature".into(),
        ));
    }
    scalar_update(state, &h, z_meas, predicted, cfg.r_meas)
}

/// Linear KF update with a temperature measurement `y = row·x + offset`.
pub fn kf_measurement_update(
    state: &EstimatorState,
    t_meas: f64,
    output_row: &ScalarOutput,
    cfg: &EstimatorConfig,
) -> Result<(EstimatorState, Innovation)> {
    let predicted = output_row.eval(&state.x_hat);
    scalar_update(state, &output_row.row, t_meas, predicted, cfg.r_meas)
}

/// Which measurement, if any, drives the filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    EkfZ,
    KfT3,
    OpenLoop,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::EkfZ => "ekf_z",
            Mode::KfT3 => "kf_t3",
            Mode::OpenLoop => "open_loop",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Mode::EkfZ, Mode::KfT3, Mode::OpenLoop].into_iter().find(|m| m.name() == s)
    }
}

/// One row of an estimator trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub x_hat: DVector<f64>,
    /// T1..T4
    pub temps: [f64; 4],
    pub t_mean: f64,
    pub z_pred: Option<f64>,
    pub z_meas: Option<f64>,
    pub innovation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorTrace {
    pub mode: Mode,
    pub rows: Vec<TraceRow>,
    pub final_state: EstimatorState,
}

impl EstimatorTrace {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x_norm,T1,T2,T3,T4,Tmean,z_pred,z_meas,innovation")?;
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.t,
                r.x_hat.norm(),
                r.temps[0],
                r.temps[1],
                r.temps[2],
                r.temps[3],
                r.t_mean,
                opt(r.z_pred),
                opt(r.z_meas),
                opt(r.innovation)
            )?;
        }
        Ok(())
    }

    /// Series of output `i` (0..4 for T1..T4).
    pub fn temp_series(&self, i: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.temps[i]).collect()
    }
}

/// Everything the runner needs besides the data.
#[derive(Debug, Clone)]
pub struct EstimatorSetup<'a> {
    pub model: &'a StateSpaceModel,
    pub discrete: &'a DiscreteStateSpace,
    pub calibration: Option<&'a ImpedanceCalibration>,
    pub config: &'a EstimatorConfig,
}

/// Runs the filter over a cycle.
///
/// Row `k` holds the estimate at `t_k`: for `k ≥ 1` a time update with the
/// heat input `q[k−1]`, then a measurement update if the mode's column has
/// a value at `t_k` and `t_k − t_0` is a multiple of `meas_period`.
pub fn run_estimator(
    cycle: &DriveCycle,
    q: &[f64],
    setup: &EstimatorSetup<'_>,
    mode: Mode,
    initial: EstimatorState,
) -> Result<EstimatorTrace> {
    let cfg = setup.config;
    match mode {
        Mode::EkfZ => {
            cycle.require(&[Column::ZImag])?;
            if setup.calibration.is_none() {
                return Err(Error::Calibration("ekf_z mode requires an impedance calibration".into()));
            }
        }
        Mode::KfT3 => cycle.require(&[Column::T3])?,
        Mode::OpenLoop => {}
    }
    cfg.validate()?;
    if q.len() != cycle.len() {
        return Err(Error::Dimension(format!("{} heat samples for {} cycle samples", q.len(), cycle.len())));
    }
    if cycle.is_empty() {
        return Err(Error::Cycle("cycle has no samples".into()));
    }
    if cycle.len() > 1 {
        let dt = cycle.uniform_dt()?;
        if ((dt - cfg.dt) / cfg.dt).abs() > 1e-6 || ((setup.discrete.dt - cfg.dt) / cfg.dt).abs() > 1e-9 {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!(
                    "cycle spacing {dt} s, estimator dt {} s and model dt {} s must agree",
                    cfg.dt, setup.discrete.dt
                ),
            });
        }
    }
    if initial.x_hat.len() != setup.model.state_dim() {
        return Err(Error::Dimension(format!(
            "initial state has {} entries, model has {}",
            initial.x_hat.len(),
            setup.model.state_dim()
        )));
    }

    let outputs: OutputMap = setup.model.default_output_map();
    let t3 = outputs.row(2);
    let mean_row = setup.model.mean_temperature_row();
    let t0 = cycle.samples[0].t;
    let is_meas_time = |t: f64| {
        let m = (t - t0) / cfg.meas_period;
        (m - m.round()).abs() < 1e-6
    };

    let mut state = initial;
    let mut rows = Vec::with_capacity(cycle.len());
    for (k, sample) in cycle.samples.iter().enumerate() {
        if k > 0 {
            state = time_update(&state, setup.discrete, &StateSpaceModel::input(q[k - 1]), cfg);
        }
        let mut innovation = None;
        if is_meas_time(sample.t) {
            let update = match mode {
                Mode::EkfZ => sample.z_imag.map(|z| {
                    let cal = setup.calibration.expect("checked above");
                    ekf_measurement_update(&state, z, cal, &mean_row, cfg)
                }),
                Mode::KfT3 => sample.temps[2].map(|y| kf_measurement_update(&state, y, &t3, cfg)),
                Mode::OpenLoop => None,
            };
            if let Some(res) = update {
                let (next, inn) = res?;
                state = next;
                innovation = Some(inn.value);
            }
        }
        let y = outputs.apply(&state.x_hat);
        let t_mean = mean_row.eval(&state.x_hat);
        rows.push(TraceRow {
            t: sample.t,
            x_hat: state.x_hat.clone(),
            temps: [y[0], y[1], y[2], y[3]],
            t_mean,
            z_pred: setup.calibration.map(|c| c.predict_z(t_mean)),
            z_meas: sample.z_imag,
            innovation,
        });
    }
    Ok(EstimatorTrace { mode, rows, final_state: state })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::discretize;
    use crate::drive_cycle::DriveCycleSample;
    use crate::params::{CellGeometry, SpectralConfig, ThermalParams};
    use proptest::prelude::*;

    fn scalar_disc(a: f64, b: f64) -> DiscreteStateSpace {
        DiscreteStateSpace {
            a_bar: DMatrix::from_element(1, 1, a),
            b_bar: DMatrix::from_row_slice(1, 2, &[b, 0.0]),
            dt: 1.0,
        }
    }

    #[test]
    fn scalar_time_update() {
        let cfg = EstimatorConfig { q_proc_beta: (0.05f64).sqrt(), process_noise_diag: 2.0, ..EstimatorConfig::kf_default() };
        let s = EstimatorState::new(DVector::from_element(1, 2.0), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let next = time_update(&s, &scalar_disc(0.5, 1.0), &DVector::from_vec(vec![1.0, 0.0]), &cfg);
        assert!((next.x_hat[0] - 2.0).abs() < 1e-15);
        assert!((next.p[(0, 0)] - 0.35).abs() < 1e-15);
        assert_eq!(next.k, 1);
    }

    #[test]
    fn scalar_gain() {
        let cfg = EstimatorConfig { r_meas: 1.0, ..EstimatorConfig::kf_default() };
        let s = EstimatorState::new(DVector::from_element(1, 0.0), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let row = ScalarOutput { row: RowDVector::from_element(1, 1.0), offset: 0.0 };
        let (next, inn) = kf_measurement_update(&s, 2.0, &row, &cfg).unwrap();
        assert!((next.x_hat[0] - 1.0).abs() < 1e-15); // K = 0.5
        assert!((next.p[(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(inn.value, 2.0);
        assert_eq!(inn.variance, 2.0);
        let (same, _) = kf_measurement_update(&s, 0.0, &row, &cfg).unwrap();
        assert_eq!(same.x_hat, s.x_hat);
    }

    #[test]
    fn negative_innovation_variance_is_divergence() {
        let cfg = EstimatorConfig { r_meas: 1e-6, ..EstimatorConfig::kf_default() };
        let s = EstimatorState::new(DVector::from_element(1, 0.0), DMatrix::from_element(1, 1, -1.0)).unwrap();
        let row = ScalarOutput { row: RowDVector::from_element(1, 1.0), offset: 0.0 };
        assert!(matches!(kf_measurement_update(&s, 1.0, &row, &cfg), Err(Error::FilterDivergence(_))));
    }

    fn thermal() -> (StateSpaceModel, DiscreteStateSpace) {
        let m = StateSpaceModel::assemble(CellGeometry::a123_32113(), ThermalParams::config1(), SpectralConfig::default()).unwrap();
        let d = discretize(&m, 1.0).unwrap();
        (m, d)
    }

    #[test]
    fn zero_innovation_leaves_state() {
        let (m, _) = thermal();
        let cal = ImpedanceCalibration::synthetic_default();
        let x = m.uniform_state(15.0);
        let s = EstimatorState::new(x.clone(), initial_covariance(25, 5.0, 0.1)).unwrap();
        let mean = m.mean_temperature_row();
        let z = cal.predict_z(mean.eval(&x));
        let (next, inn) = ekf_measurement_update(&s, z, &cal, &mean, &EstimatorConfig::ekf_default()).unwrap();
        assert_eq!(inn.value, 0.0);
        assert_eq!(next.x_hat, x);
    }

    #[test]
    fn ekf_jacobian_matches_central_differences() {
        use rand::{Rng, SeedableRng};
        let (m, _) = thermal();
        let cal = ImpedanceCalibration::synthetic_default();
        let mean = m.mean_temperature_row();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let x = DVector::from_fn(25, |_, _| rng.random_range(-5.0..20.0));
            let (_, h) = impedance_jacobian(&x, &cal, &mean);
            let f = |x: &DVector<f64>| cal.predict_z(mean.eval(x));
            let step = 1e-3;
            let mut fd = RowDVector::zeros(25);
            for i in 0..25 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += step;
                xm[i] -= step;
                fd[i] = (f(&xp) - f(&xm)) / (2.0 * step);
            }
            assert!((&h - &fd).norm() <= 1e-6 * h.norm(), "{h} vs {fd}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn covariance_stays_symmetric_psd(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let (m, d) = thermal();
            let cal = ImpedanceCalibration::synthetic_default();
            let mean = m.mean_temperature_row();
            let t3 = m.default_output_map().row(2);
            let cfg = EstimatorConfig::ekf_default();
            let kf = EstimatorConfig::kf_default();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut s = EstimatorState::new(m.uniform_state(20.0), initial_covariance(25, 10.0, 0.5)).unwrap();
            for step in 0..10_000usize {
                s = time_update(&s, &d, &StateSpaceModel::input(rng.random_range(0.0..1e5)), &cfg);
                if step % 24 == 0 {
                    let z = cal.predict_z(rng.random_range(5.0..30.0));
                    s = ekf_measurement_update(&s, z, &cal, &mean, &cfg).unwrap().0;
                }
                if step % 7 == 0 {
                    s = kf_measurement_update(&s, rng.random_range(5.0..30.0), &t3, &kf).unwrap().0;
                }
                if step % 500 == 0 {
                    prop_assert!(s.covariance_is_valid(), "step {}: {}", step, s.min_relative_eigenvalue());
                }
            }
            prop_assert!(s.covariance_is_valid());
        }
    }

    /// Textbook KF with explicit inverse, measurement every step.
    fn dense_reference(
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        h: &RowDVector<f64>,
        q: &DMatrix<f64>,
        r: f64,
        mut x: DVector<f64>,
        mut p: DMatrix<f64>,
        us: &[DVector<f64>],
        ys: &[f64],
    ) -> Vec<DVector<f64>> {
        let mut out = vec![];
        for (k, y) in ys.iter().enumerate() {
            if k > 0 {
                x = a * &x + b * &us[k - 1];
                p = a * &p * a.transpose() + q;
            }
            let s = h * &p * h.transpose() + DMatrix::from_element(1, 1, r);
            let kg = &p * h.transpose() * s.try_inverse().unwrap();
            x = &x + &kg * (y - (h * &x)[(0, 0)]);
            p = (DMatrix::identity(3, 3) - &kg * h) * &p;
            out.push(x.clone());
        }
        out
    }

    #[test]
    fn per_step_updates_match_textbook_filter() {
        let a = DMatrix::from_row_slice(3, 3, &[0.9, 0.05, 0.0, 0.02, 0.8, 0.1, 0.0, 0.03, 0.95]);
        let b = DMatrix::from_row_slice(3, 2, &[0.1, 0.0, 0.0, 0.0, 0.05, 0.0]);
        let disc = DiscreteStateSpace { a_bar: a.clone(), b_bar: b.clone(), dt: 1.0 };
        let cfg = EstimatorConfig { r_meas: 0.04, q_proc_beta: 0.1, process_noise_diag: 2.0, meas_period: 1.0, dt: 1.0 };
        let row = ScalarOutput { row: RowDVector::from_row_slice(&[0.2, 0.5, 0.3]), offset: 0.0 };
        let us: Vec<_> = (0..40).map(|k| DVector::from_vec(vec![(k as f64 * 0.3).sin(), 1.0])).collect();
        let ys: Vec<f64> = (0..40).map(|k| (k as f64 * 0.17).cos()).collect();
        let x0 = DVector::from_vec(vec![1.0, -0.5, 0.2]);
        let p0 = DMatrix::identity(3, 3) * 0.7;
        let reference = dense_reference(&a, &b, &row.row, &cfg.process_covariance(3), cfg.r_meas, x0.clone(), p0.clone(), &us, &ys);
        let mut s = EstimatorState::new(x0, p0).unwrap();
        for (k, y) in ys.iter().enumerate() {
            if k > 0 {
                s = time_update(&s, &disc, &us[k - 1], &cfg);
            }
            s = kf_measurement_update(&s, *y, &row, &cfg).unwrap().0;
            assert!((&s.x_hat - &reference[k]).amax() < 1e-12);
        }
    }

    fn cycle_with(n: usize, z: Option<f64>, t3: Option<f64>) -> DriveCycle {
        DriveCycle::new(
            (0..n)
                .map(|k| {
                    let mut s = DriveCycleSample { t: k as f64, ..Default::default() };
                    s.z_imag = z;
                    s.temps[2] = t3;
                    s
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn runner_checks_columns_before_running() {
        let (m, d) = thermal();
        let cal = ImpedanceCalibration::synthetic_default();
        let cfg = EstimatorConfig::ekf_default();
        let setup = EstimatorSetup { model: &m, discrete: &d, calibration: Some(&cal), config: &cfg };
        let init = EstimatorState::new(m.uniform_state(8.0), initial_covariance(25, 1.0, 0.1)).unwrap();
        let c = cycle_with(10, None, Some(8.0));
        assert!(matches!(run_estimator(&c, &[0.0; 10], &setup, Mode::EkfZ, init.clone()), Err(Error::MissingColumn("z_imag"))));
        let c = cycle_with(10, Some(8e-4), None);
        assert!(matches!(run_estimator(&c, &[0.0; 10], &setup, Mode::KfT3, init.clone()), Err(Error::MissingColumn("T3"))));
        let no_cal = EstimatorSetup { calibration: None, ..setup.clone() };
        assert!(run_estimator(&c, &[0.0; 10], &no_cal, Mode::EkfZ, init).is_err());
    }

    #[test]
    fn open_loop_matches_simulation() {
        let (m, d) = thermal();
        let cfg = EstimatorConfig::ekf_default();
        let setup = EstimatorSetup { model: &m, discrete: &d, calibration: None, config: &cfg };
        let q: Vec<f64> = (0..300).map(|k| 5e4 * ((k / 17) % 2) as f64).collect();
        let c = cycle_with(300, None, None);
        let x0 = m.uniform_state(8.0);
        let init = EstimatorState::new(x0.clone(), initial_covariance(25, 1.0, 0.1)).unwrap();
        let trace = run_estimator(&c, &q, &setup, Mode::OpenLoop, init).unwrap();
        let states = crate::discrete::simulate_heat(&d, &x0, &q);
        for (k, row) in trace.rows.iter().enumerate() {
            assert_eq!(row.x_hat, states[k]);
            assert!(row.innovation.is_none());
        }
    }

    #[test]
    fn noiseless_exact_filter_has_zero_innovations() {
        let (m, d) = thermal();
        let cal = ImpedanceCalibration::synthetic_default();
        let cfg = EstimatorConfig { q_proc_beta: 0.0, ..EstimatorConfig::ekf_default() };
        let kcfg = EstimatorConfig { q_proc_beta: 0.0, meas_period: 24.0, ..EstimatorConfig::kf_default() };
        let q: Vec<f64> = (0..600).map(|k| 8e4 * (1.0 + (k as f64 * 0.05).sin())).collect();
        let x0 = m.uniform_state(8.0);
        let states = crate::discrete::simulate_heat(&d, &x0, &q);
        let mean = m.mean_temperature_row();
        let t3 = m.default_output_map().row(2);
        let samples = (0..600)
            .map(|k| {
                let mut s = DriveCycleSample { t: k as f64, ..Default::default() };
                s.z_imag = Some(cal.predict_z(mean.eval(&states[k])));
                s.temps[2] = Some(t3.eval(&states[k]));
                s
            })
            .collect();
        let c = DriveCycle::new(samples).unwrap();
        for (mode, config) in [(Mode::EkfZ, &cfg), (Mode::KfT3, &kcfg)] {
            let setup = EstimatorSetup { model: &m, discrete: &d, calibration: Some(&cal), config };
            let init = EstimatorState::new(x0.clone(), initial_covariance(25, 1.0, 0.1)).unwrap();
            let trace = run_estimator(&c, &q, &setup, mode, init).unwrap();
            let innovations: Vec<f64> = trace.rows.iter().filter_map(|r| r.innovation).collect();
            assert_eq!(innovations.len(), 25);
            let scale = if mode == Mode::EkfZ { 1e-3 } else { 1.0 };
            assert!(innovations.iter().all(|v| v.abs() < 1e-9 * scale), "{mode:?}: {innovations:?}");
        }
    }

    #[test]
    fn meas_period_must_be_multiple_of_dt() {
        let cfg = EstimatorConfig { meas_period: 2.5, ..EstimatorConfig::ekf_default() };
        assert!(cfg.validate().is_err());
        assert!(EstimatorConfig::ekf_default().validate().is_ok());
    }
}
