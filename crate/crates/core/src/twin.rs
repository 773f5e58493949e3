//! Synthetic twin experiments: a truth simulator generates noisy sensor
//! data which the estimators then consume.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::discrete::{discretize, simulate_heat_outputs};
use crate::drive_cycle::{heat_series, DriveCycle, HevCycleGenerator};
use crate::error::{Error, Result};
use crate::estimation::{initial_covariance, run_estimator, EstimatorConfig, EstimatorSetup, EstimatorState, EstimatorTrace, Mode};
use crate::fd::{FdGrid, FdSolver};
use crate::impedance::ImpedanceCalibration;
use crate::model::{default_probe_points, StateSpaceModel};
use crate::params::{CellGeometry, SpectralConfig, ThermalParams};

/// Simulator that produces the true temperatures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruthSource {
    /// The spectral model itself (no model mismatch).
    Spectral,
    /// The finite-volume oracle at the given resolution.
    Fd(FdGrid),
}

/// True probe temperatures and mean temperature at every cycle sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTrace {
    pub t: Vec<f64>,
    pub temps: Vec<[f64; 4]>,
    pub mean: Vec<f64>,
}

/// Simulates the truth from a uniform initial temperature.
pub fn simulate_truth(
    source: TruthSource,
    geometry: CellGeometry,
    params: ThermalParams,
    spectral: SpectralConfig,
    cycle: &DriveCycle,
    q: &[f64],
    initial_temperature: f64,
) -> Result<TruthTrace> {
    if q.len() != cycle.len() || cycle.is_empty() {
        return Err(Error::Dimension(format!("{} heat samples for {} cycle samples", q.len(), cycle.len())));
    }
    let dt = cycle.uniform_dt()?;
    let steps = &q[..q.len() - 1];
    let t: Vec<f64> = cycle.samples.iter().map(|s| s.t).collect();
    match source {
        TruthSource::Spectral => {
            let model = StateSpaceModel::assemble(geometry, params, spectral)?;
            let disc = discretize(&model, dt)?;
            let mut outputs = model.default_output_map();
            let mean = model.mean_temperature_row();
            outputs.c = outputs.c.insert_row(4, 0.0);
            outputs.c.row_mut(4).copy_from(&mean.row);
            outputs.offset = outputs.offset.insert_row(4, mean.offset);
            outputs.labels.push("Tmean".into());
            let ys = simulate_heat_outputs(&disc, &model.uniform_state(initial_temperature), steps, &outputs);
            Ok(TruthTrace {
                t,
                temps: ys.iter().map(|y| [y[0], y[1], y[2], y[3]]).collect(),
                mean: ys.iter().map(|y| y[4]).collect(),
            })
        }
        TruthSource::Fd(grid) => {
            let solver = FdSolver::new(geometry, params, grid)?;
            let run = solver.run(steps, dt, solver.uniform(initial_temperature), &default_probe_points(&geometry))?;
            let temps = (0..run.mean.len())
                .map(|k| [run.probes[0][k], run.probes[1][k], run.probes[2][k], run.probes[3][k]])
                .collect();
            Ok(TruthTrace { t, temps, mean: run.mean })
        }
    }
}

/// Settings of a twin experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinSpec {
    pub seed: u64,
    /// Cycle length, s.
    pub duration: f64,
    /// Uniform starting temperature of the truth, °C.
    pub true_initial: f64,
    /// Uniform starting temperature assumed by every estimator, °C.
    pub estimator_initial: f64,
    /// Prior standard deviation of the uniform mode, °C.
    pub p0_uniform_sigma: f64,
    /// Prior standard deviation added on every mode.
    pub p0_mode_sigma: f64,
    /// Impedance noise standard deviation, Ω.
    pub z_noise: f64,
    /// Thermocouple noise standard deviation, °C.
    pub temp_noise: f64,
    /// Impedance sampling interval, s.
    pub z_period: f64,
    /// Errors before this time are excluded from RMSE and histograms, s.
    pub settle_time: f64,
    /// Histogram bin width, °C.
    pub hist_bin: f64,
    /// Histogram half-range, °C.
    pub hist_range: f64,
}

impl Default for TwinSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            duration: 3600.0,
            true_initial: 8.0,
            estimator_initial: 25.0,
            p0_uniform_sigma: 17.0,
            p0_mode_sigma: 1.0,
            z_noise: 3e-5,
            temp_noise: 5e-4,
            z_period: 24.0,
            settle_time: 300.0,
            hist_bin: 0.1,
            hist_range: 2.0,
        }
    }
}

impl TwinSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(self.z_noise >= 0.0 && self.temp_noise >= 0.0) {
            return bad("noise", "noise levels must be non-negative".into());
        }
        if !(self.z_period > 0.0) {
            return bad("z_period", format!("must be positive, got {}", self.z_period));
        }
        if !(self.p0_uniform_sigma >= 0.0 && self.p0_mode_sigma > 0.0) {
            return bad("p0", "prior deviations must be positive".into());
        }
        if !(self.settle_time >= 0.0 && self.settle_time < self.duration) {
            return bad("settle_time", format!("must lie in [0, duration), got {}", self.settle_time));
        }
        if !(self.hist_bin > 0.0 && self.hist_range > self.hist_bin) {
            return bad("histogram", "need 0 < bin < range".into());
        }
        Ok(())
    }
}

/// Generates the cycle, simulates the truth and attaches noisy T1..T4
/// samples at every step and impedance samples every `z_period`.
pub fn build_twin_cycle(
    spec: &TwinSpec,
    generator: &HevCycleGenerator,
    geometry: CellGeometry,
    params: ThermalParams,
    spectral: SpectralConfig,
    source: TruthSource,
    calibration: &ImpedanceCalibration,
) -> Result<(DriveCycle, Vec<f64>, TruthTrace)> {
    spec.validate()?;
    let mut cycle = generator.generate(spec.seed, spec.duration)?;
    let q = heat_series(&cycle, &generator.ocv, &generator.cell, &geometry).volumetric;
    let truth = simulate_truth(source, geometry, params, spectral, &cycle, &q, spec.true_initial)?;

    let mut temp_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x7465_6d70);
    let mut z_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x696d_7064);
    let temp_noise = Normal::new(0.0, spec.temp_noise).map_err(|e| Error::InvalidParameter { name: "temp_noise", reason: e.to_string() })?;
    let t0 = cycle.samples[0].t;
    for (k, s) in cycle.samples.iter_mut().enumerate() {
        for i in 0..4 {
            s.temps[i] = Some(truth.temps[k][i] + temp_noise.sample(&mut temp_rng));
        }
        s.t_chamber = Some(params.t_ambient);
        let m = (s.t - t0) / spec.z_period;
        if (m - m.round()).abs() < 1e-6 {
            s.z_imag = Some(calibration.synth_with(truth.mean[k], spec.z_noise, &mut z_rng)?);
        }
    }
    Ok((cycle, q, truth))
}

/// Error statistics of one estimator against the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeMetrics {
    pub mode: String,
    /// RMSE of T1..T4 after the settling time, °C.
    pub rmse: [f64; 4],
    pub rmse_mean: f64,
    /// First time after which the T1 error stays below 1 °C, if any.
    pub convergence_time: Option<f64>,
}

/// Counts of estimation errors per bin for one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub mode: Mode,
    pub sensor: &'static str,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Result bundle of a twin experiment.
#[derive(Debug, Clone)]
pub struct TwinOutcome {
    pub cycle: DriveCycle,
    pub q: Vec<f64>,
    pub truth: TruthTrace,
    pub traces: Vec<EstimatorTrace>,
    pub metrics: Vec<ModeMetrics>,
    pub histograms: Vec<Histogram>,
}

impl TwinOutcome {
    pub fn metrics_for(&self, mode: Mode) -> Option<&ModeMetrics> {
        self.metrics.iter().find(|m| m.mode == mode.name())
    }

    pub fn trace_for(&self, mode: Mode) -> Option<&EstimatorTrace> {
        self.traces.iter().find(|t| t.mode == mode)
    }

    /// Summary table with one row per mode.
    pub fn write_summary_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "mode,rmse_T1,rmse_T2,rmse_T3,rmse_T4,rmse_Tmean,convergence_time")?;
        for m in &self.metrics {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                m.mode,
                m.rmse[0],
                m.rmse[1],
                m.rmse[2],
                m.rmse[3],
                m.rmse_mean,
                m.convergence_time.map(|t| t.to_string()).unwrap_or_default()
            )?;
        }
        Ok(())
    }

    /// All histograms in long format.
    pub fn write_histograms_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "mode,sensor,bin_lo,bin_hi,count")?;
        for h in &self.histograms {
            for (i, c) in h.counts.iter().enumerate() {
                writeln!(w, "{},{},{},{},{}", h.mode.name(), h.sensor, h.edges[i], h.edges[i + 1], c)?;
            }
        }
        Ok(())
    }
}

/// Scores an estimator trace against the truth.
pub fn score(trace: &EstimatorTrace, truth: &TruthTrace, settle_time: f64) -> ModeMetrics {
    let t0 = truth.t[0];
    let mut sq = [0.0; 5];
    let mut n = 0usize;
    let mut last_bad: Option<usize> = None;
    for (k, row) in trace.rows.iter().enumerate() {
        if (row.temps[0] - truth.temps[k][0]).abs() >= 1.0 {
            last_bad = Some(k);
        }
        if row.t - t0 >= settle_time - 1e-9 {
            for i in 0..4 {
                sq[i] += (row.temps[i] - truth.temps[k][i]).powi(2);
            }
            sq[4] += (row.t_mean - truth.mean[k]).powi(2);
            n += 1;
        }
    }
    let r = |s: f64| if n == 0 { f64::NAN } else { (s / n as f64).sqrt() };
    let convergence_time = match last_bad {
        None => Some(0.0),
        Some(k) if k + 1 < trace.rows.len() => Some(trace.rows[k + 1].t - t0),
        Some(_) => None,
    };
    ModeMetrics {
        mode: trace.mode.name().to_string(),
        rmse: [r(sq[0]), r(sq[1]), r(sq[2]), r(sq[3])],
        rmse_mean: r(sq[4]),
        convergence_time,
    }
}

/// Histogram of post-settling errors of one sensor (0-based index).
pub fn error_histogram(trace: &EstimatorTrace, truth: &TruthTrace, sensor: usize, spec: &TwinSpec) -> Histogram {
    let bins = (2.0 * spec.hist_range / spec.hist_bin).round() as usize;
    let edges: Vec<f64> = (0..=bins).map(|i| -spec.hist_range + i as f64 * spec.hist_bin).collect();
    let mut counts = vec![0usize; bins];
    let t0 = truth.t[0];
    for (k, row) in trace.rows.iter().enumerate() {
        if row.t - t0 < spec.settle_time - 1e-9 {
            continue;
        }
        let e = row.temps[sensor] - truth.temps[k][sensor];
        let idx = ((e + spec.hist_range) / spec.hist_bin).floor();
        let idx = idx.clamp(0.0, (bins - 1) as f64) as usize;
        counts[idx] += 1;
    }
    Histogram { mode: trace.mode, sensor: ["T1", "T2", "T3", "T4"][sensor], edges, counts }
}

/// Everything a twin experiment needs.
#[derive(Debug, Clone)]
pub struct TwinSetup {
    pub spec: TwinSpec,
    pub generator: HevCycleGenerator,
    pub geometry: CellGeometry,
    pub params: ThermalParams,
    pub spectral: SpectralConfig,
    pub truth: TruthSource,
    pub calibration: ImpedanceCalibration,
    pub ekf: EstimatorConfig,
    pub kf: EstimatorConfig,
}

impl TwinSetup {
    /// Synthetic calibration, default filter tunings, FD truth on the
    /// default grid and a 35 A peak current, which keeps the mean
    /// temperature inside the calibration's validity range.
    pub fn standard(params: ThermalParams, seed: u64) -> Self {
        Self {
            spec: TwinSpec { seed, ..TwinSpec::default() },
            generator: HevCycleGenerator { i_max: 35.0, ..HevCycleGenerator::default() },
            geometry: CellGeometry::a123_32113(),
            params,
            spectral: SpectralConfig::default(),
            truth: TruthSource::Fd(FdGrid::default()),
            calibration: ImpedanceCalibration::synthetic_default(),
            ekf: EstimatorConfig::ekf_default(),
            kf: EstimatorConfig::kf_default(),
        }
    }
}

/// Uniform estimator start with the twin's prior.
pub fn twin_initial_state(model: &StateSpaceModel, spec: &TwinSpec) -> EstimatorState {
    EstimatorState {
        x_hat: model.uniform_state(spec.estimator_initial),
        p: initial_covariance(model.state_dim(), spec.p0_uniform_sigma, spec.p0_mode_sigma),
        k: 0,
    }
}

/// Runs open loop, the T3 Kalman filter and the impedance EKF on the same
/// synthetic cycle.
pub fn run_twin(setup: &TwinSetup) -> Result<TwinOutcome> {
    let (cycle, q, truth) = build_twin_cycle(
        &setup.spec,
        &setup.generator,
        setup.geometry,
        setup.params,
        setup.spectral,
        setup.truth,
        &setup.calibration,
    )?;
    let dt = cycle.uniform_dt()?;
    let model = StateSpaceModel::assemble(setup.geometry, setup.params, setup.spectral)?;
    let disc = discretize(&model, dt)?;
    let initial = twin_initial_state(&model, &setup.spec);

    let runs = [
        (Mode::OpenLoop, &setup.kf),
        (Mode::KfT3, &setup.kf),
        (Mode::EkfZ, &setup.ekf),
    ];
    let traces: Vec<Result<EstimatorTrace>> = std::thread::scope(|s| {
        let handles: Vec<_> = runs
            .iter()
            .map(|&(mode, cfg)| {
                let setup = EstimatorSetup {
                    model: &model,
                    discrete: &disc,
                    calibration: Some(&setup.calibration),
                    config: cfg,
                };
                let (cycle, q, initial) = (&cycle, &q, initial.clone());
                s.spawn(move || run_estimator(cycle, q, &setup, mode, initial))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("estimator thread panicked")).collect()
    });
    let traces = traces.into_iter().collect::<Result<Vec<_>>>()?;

    let metrics = traces.iter().map(|t| score(t, &truth, setup.spec.settle_time)).collect();
    let histograms = traces
        .iter()
        .flat_map(|t| [0, 2].map(|i| error_histogram(t, &truth, i, &setup.spec)))
        .collect();
    Ok(TwinOutcome { cycle, q, truth, traces, metrics, histograms })
}
