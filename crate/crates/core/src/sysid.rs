//! Offline identification of the unknown thermal parameters and the
//! single-cycle impedance calibration.

use serde::{Deserialize, Serialize};

use crate::discrete::{discretize, simulate_heat_outputs};
use crate::drive_cycle::{Column, DriveCycle};
use crate::error::{Error, Result};
use crate::estimation::{run_estimator, EstimatorSetup, EstimatorState, Mode};
use crate::impedance::{calibrate, ImpedanceCalibration};
use crate::model::StateSpaceModel;
use crate::optimize::{minimize_box, MultiStartOptions};
use crate::params::{CellGeometry, SpectralConfig, ThermalParams};

/// Parameters that may be identified. ρ, cp and k_r are always fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeParameter {
    KZ,
    HLeft,
    HRight,
    HSide,
}

impl FreeParameter {
    pub const ALL: [FreeParameter; 4] = [Self::KZ, Self::HLeft, Self::HRight, Self::HSide];

    pub fn name(self) -> &'static str {
        match self {
            Self::KZ => "k_z",
            Self::HLeft => "h_left",
            Self::HRight => "h_right",
            Self::HSide => "h_side",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }

    pub fn get(self, p: &ThermalParams) -> f64 {
        match self {
            Self::KZ => p.k_z,
            Self::HLeft => p.h_left,
            Self::HRight => p.h_right,
            Self::HSide => p.h_side,
        }
    }

    pub fn set(self, p: &mut ThermalParams, v: f64) {
        match self {
            Self::KZ => p.k_z = v,
            Self::HLeft => p.h_left = v,
            Self::HRight => p.h_right = v,
            Self::HSide => p.h_side = v,
        }
    }

    /// k_z in [1, 100] W/(m K); convection in [0.1, 500] W/(m² K).
    pub fn default_bounds(self) -> (f64, f64) {
        match self {
            Self::KZ => (1.0, 100.0),
            _ => (0.1, 500.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub param: FreeParameter,
    pub lo: f64,
    pub hi: f64,
}

impl Bound {
    pub fn default_for(param: FreeParameter) -> Self {
        let (lo, hi) = param.default_bounds();
        Self { param, lo, hi }
    }

    /// Log-uniform map from `u ∈ [0, 1]`.
    fn at_unit(&self, u: f64) -> f64 {
        self.lo * (self.hi / self.lo).powf(u.clamp(0.0, 1.0))
    }
}

/// Identification data and the parameters held fixed.
#[derive(Debug, Clone)]
pub struct IdProblem {
    pub free: Vec<Bound>,
    pub fixed: ThermalParams,
    pub geometry: CellGeometry,
    pub spectral: SpectralConfig,
    pub dt: f64,
    /// Volumetric heat per sample, W·m⁻³.
    pub q: Vec<f64>,
    /// Measured T1..T4 per sample, °C.
    pub measured: Vec<[f64; 4]>,
    /// Uniform starting temperature of the simulation, °C.
    pub initial_temperature: f64,
}

impl IdProblem {
    /// Takes the four thermocouple columns from `cycle` and starts the
    /// simulation from their mean at the first sample.
    pub fn from_cycle(
        cycle: &DriveCycle,
        q: Vec<f64>,
        geometry: CellGeometry,
        fixed: ThermalParams,
        spectral: SpectralConfig,
        free: Vec<Bound>,
    ) -> Result<Self> {
        cycle.require(&[Column::T1, Column::T2, Column::T3, Column::T4])?;
        let measured = cycle
            .samples
            .iter()
            .map(|s| {
                let mut row = [0.0; 4];
                for (i, v) in s.temps.iter().enumerate() {
                    row[i] = v.ok_or_else(|| Error::Cycle(format!("T{} missing at t = {}", i + 1, s.t)))?;
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        let initial_temperature = measured.first().map(|r| r.iter().sum::<f64>() / 4.0).unwrap_or(fixed.t_ambient);
        let p = Self {
            free,
            fixed,
            geometry,
            spectral,
            dt: cycle.uniform_dt()?,
            q,
            measured,
            initial_temperature,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.free.is_empty() {
            return Err(Error::Identification("no free parameters".into()));
        }
        for b in &self.free {
            if !(b.lo > 0.0 && b.lo < b.hi && b.hi.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: b.param.name(),
                    reason: format!("bounds must satisfy 0 < lo < hi, got [{}, {}]", b.lo, b.hi),
                });
            }
        }
        if self.q.len() != self.measured.len() || self.measured.is_empty() {
            return Err(Error::Dimension(format!(
                "{} heat samples for {} measurement rows",
                self.q.len(),
                self.measured.len()
            )));
        }
        Ok(())
    }

    /// Thermal parameters with `theta` substituted for the free entries.
    pub fn params_for(&self, theta: &[f64]) -> Result<ThermalParams> {
        if theta.len() != self.free.len() {
            return Err(Error::Dimension(format!("{} values for {} free parameters", theta.len(), self.free.len())));
        }
        let mut p = self.fixed;
        for (b, &v) in self.free.iter().zip(theta) {
            if !(v >= b.lo && v <= b.hi) {
                return Err(Error::InvalidParameter {
                    name: b.param.name(),
                    reason: format!("{v} outside bounds [{}, {}]", b.lo, b.hi),
                });
            }
            b.param.set(&mut p, v);
        }
        Ok(p)
    }

    /// Open-loop model outputs T1..T4 at every sample for the given params.
    pub fn simulate(&self, params: ThermalParams) -> Result<Vec<[f64; 4]>> {
        let model = StateSpaceModel::assemble(self.geometry, params, self.spectral)?;
        let disc = discretize(&model, self.dt)?;
        let out = model.default_output_map();
        let x0 = model.uniform_state(self.initial_temperature);
        let n = self.measured.len();
        let ys = simulate_heat_outputs(&disc, &x0, &self.q[..n - 1], &out);
        Ok(ys.iter().map(|y| [y[0], y[1], y[2], y[3]]).collect())
    }

    /// `ε(k) = T_model(k) − T_measured(k)` for every sample.
    pub fn residual(&self, theta: &[f64]) -> Result<Vec<[f64; 4]>> {
        let params = self.params_for(theta)?;
        let sim = self.simulate(params)?;
        let mut eps = Vec::with_capacity(sim.len());
        for (k, (m, d)) in sim.iter().zip(&self.measured).enumerate() {
            let e = [m[0] - d[0], m[1] - d[1], m[2] - d[2], m[3] - d[3]];
            if e.iter().any(|v| !v.is_finite()) || m.iter().any(|v| v.abs() > 1e3) {
                return Err(Error::Divergence { scheme: "spectral model", t: k as f64 * self.dt });
            }
            eps.push(e);
        }
        Ok(eps)
    }

    /// `Σₖ ‖ε(k)‖₂`; +∞ for any candidate that cannot be simulated.
    pub fn objective(&self, theta: &[f64]) -> f64 {
        match self.residual(theta) {
            Ok(eps) => eps.iter().map(|e| e.iter().map(|v| v * v).sum::<f64>().sqrt()).sum(),
            Err(_) => f64::INFINITY,
        }
    }

    fn theta_from_unit(&self, u: &[f64]) -> Vec<f64> {
        self.free.iter().zip(u).map(|(b, &u)| b.at_unit(u)).collect()
    }
}

/// Per-sensor RMSE of a residual series.
pub fn rmse(eps: &[[f64; 4]]) -> [f64; 4] {
    let mut out = [0.0; 4];
    if eps.is_empty() {
        return out;
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o = (eps.iter().map(|e| e[i] * e[i]).sum::<f64>() / eps.len() as f64).sqrt();
    }
    out
}

/// Identified parameters and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdResult {
    pub params: ThermalParams,
    pub values: Vec<(FreeParameter, f64)>,
    pub bounds: Vec<Bound>,
    pub objective: f64,
    /// RMSE of T1..T4 at the optimum, °C.
    pub rmse: [f64; 4],
    pub evaluations: usize,
    pub iterations: usize,
    /// Best objective among the Latin-hypercube starts.
    pub best_start_objective: f64,
}

/// `θ* = argmin Σₖ ‖ε(k, θ)‖₂` over the bound box.
pub fn identify(problem: &IdProblem, opts: &MultiStartOptions) -> Result<IdResult> {
    problem.validate()?;
    let d = problem.free.len();
    let result = minimize_box(|u| problem.objective(&problem.theta_from_unit(u)), d, opts);
    if !result.best.f.is_finite() {
        return Err(Error::Identification("no candidate in the bound box produced a finite objective".into()));
    }
    let theta = problem.theta_from_unit(&result.best.x);
    let params = problem.params_for(&theta)?;
    let eps = problem.residual(&theta)?;
    Ok(IdResult {
        params,
        values: problem.free.iter().map(|b| b.param).zip(theta.iter().copied()).collect(),
        bounds: problem.free.clone(),
        objective: result.best.f,
        rmse: rmse(&eps),
        evaluations: result.total_evals,
        iterations: result.total_iterations,
        best_start_objective: result.sample_values.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

/// Which estimate of the mean temperature is paired with each impedance
/// sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Kalman filter driven by the T3 thermocouple.
    KfT3,
    OpenLoop,
}

/// Calibration and the `(T̄, Z″)` pairs it was fitted to.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineCalibration {
    pub calibration: ImpedanceCalibration,
    pub pairs: Vec<(f64, f64)>,
}

/// Runs the model over the cycle (KF on T3 or open loop), pairs the mean
/// temperature estimate with every measured impedance sample and fits the
/// quadratic map.
pub fn calibrate_pipeline(
    cycle: &DriveCycle,
    q: &[f64],
    setup: &EstimatorSetup<'_>,
    initial: EstimatorState,
    pairing: Pairing,
    frequency: f64,
) -> Result<PipelineCalibration> {
    cycle.require(&[Column::ZImag])?;
    let mode = match pairing {
        Pairing::KfT3 => {
            cycle.require(&[Column::T3])?;
            Mode::KfT3
        }
        Pairing::OpenLoop => Mode::OpenLoop,
    };
    let available = cycle.samples.iter().filter(|s| s.z_imag.is_some()).count();
    if available < 3 {
        return Err(Error::Calibration(format!("need at least 3 impedance samples, cycle has {available}")));
    }
    let setup = EstimatorSetup { calibration: None, ..setup.clone() };
    let trace = run_estimator(cycle, q, &setup, mode, initial)?;
    let pairs: Vec<(f64, f64)> = trace
        .rows
        .iter()
        .filter_map(|r| r.z_meas.map(|z| (r.t_mean, z)))
        .collect();
    let mut calibration = calibrate(&pairs, frequency)?;
    calibration.provenance = format!(
        "single-cycle calibration: {} pairs, mean temperature from {}",
        pairs.len(),
        match pairing {
            Pairing::KfT3 => "T3 Kalman filter",
            Pairing::OpenLoop => "open-loop model",
        }
    );
    Ok(PipelineCalibration { calibration, pairs })
}

/// Uniform initial state helper for an estimator started at `t`.
pub fn uniform_estimator_state(model: &StateSpaceModel, t: f64, sigma_uniform: f64, sigma_mode: f64) -> EstimatorState {
    EstimatorState {
        x_hat: model.uniform_state(t),
        p: crate::estimation::initial_covariance(model.state_dim(), sigma_uniform, sigma_mode),
        k: 0,
    }
}
