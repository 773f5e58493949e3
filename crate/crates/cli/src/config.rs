//! Run configuration file. Every section is optional; unknown keys are
//! rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use celltherm::drive_cycle::{CellElectrical, HevCycleGenerator, OcvTable};
use celltherm::estimation::EstimatorConfig;
use celltherm::fd::FdGrid;
use celltherm::optimize::{MultiStartOptions, NelderMeadOptions};
use celltherm::sysid::{Bound, FreeParameter, Pairing};
use celltherm::twin::{TruthSource, TwinSpec};
use celltherm::{CellGeometry, SpectralConfig, ThermalParams};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub thermal: ThermalSection,
    #[serde(default)]
    pub spectral: SpectralSection,
    #[serde(default)]
    pub electrical: ElectricalSection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub identify: IdentifySection,
    #[serde(default)]
    pub calibrate: CalibrateSection,
    #[serde(default)]
    pub twin: TwinSection,
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub r_in: f64,
    pub r_out: f64,
    pub height: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        let g = CellGeometry::a123_32113();
        Self { r_in: g.r_in, r_out: g.r_out, height: g.height }
    }
}

/// A named preset with optional per-field overrides.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalSection {
    pub preset: String,
    pub rho: Option<f64>,
    pub cp: Option<f64>,
    pub k_r: Option<f64>,
    pub k_z: Option<f64>,
    pub h_left: Option<f64>,
    pub h_right: Option<f64>,
    pub h_side: Option<f64>,
    pub t_ambient: Option<f64>,
}

impl Default for ThermalSection {
    fn default() -> Self {
        Self {
            preset: "config1".into(),
            rho: None,
            cp: None,
            k_r: None,
            k_z: None,
            h_left: None,
            h_right: None,
            h_side: None,
            t_ambient: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSection {
    pub n_r: usize,
    pub n_z: usize,
}

impl Default for SpectralSection {
    fn default() -> Self {
        let s = SpectralConfig::default();
        Self { n_r: s.n_r, n_z: s.n_z }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElectricalSection {
    pub capacity: f64,
    pub soc0: f64,
    /// OCV table breakpoints; a flat 3.3 V curve when omitted.
    pub ocv_soc: Option<Vec<f64>>,
    pub ocv_volts: Option<Vec<f64>>,
}

impl Default for ElectricalSection {
    fn default() -> Self {
        let c = CellElectrical::default();
        Self { capacity: c.capacity, soc0: c.soc0, ocv_soc: None, ocv_volts: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    /// Measurement noise standard deviation (Ω or °C).
    pub sigma_n: f64,
    pub beta_v: f64,
    pub process_noise_diag: f64,
    pub meas_period: f64,
}

impl FilterSection {
    fn from_config(c: &EstimatorConfig) -> Self {
        Self {
            sigma_n: c.r_meas.sqrt(),
            beta_v: c.q_proc_beta,
            process_noise_diag: c.process_noise_diag,
            meas_period: c.meas_period,
        }
    }

    fn to_config(&self, dt: f64) -> EstimatorConfig {
        EstimatorConfig {
            r_meas: self.sigma_n * self.sigma_n,
            q_proc_beta: self.beta_v,
            process_noise_diag: self.process_noise_diag,
            meas_period: self.meas_period,
            dt,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    /// Uniform temperature of the initial estimate, °C.
    pub initial_temperature: f64,
    pub p0_uniform_sigma: f64,
    pub p0_mode_sigma: f64,
    #[serde(default = "ekf_section")]
    pub ekf: FilterSection,
    #[serde(default = "kf_section")]
    pub kf: FilterSection,
}

fn ekf_section() -> FilterSection {
    FilterSection::from_config(&EstimatorConfig::ekf_default())
}

fn kf_section() -> FilterSection {
    FilterSection::from_config(&EstimatorConfig::kf_default())
}

impl Default for EstimatorSection {
    fn default() -> Self {
        let t = TwinSpec::default();
        Self {
            initial_temperature: t.estimator_initial,
            p0_uniform_sigma: t.p0_uniform_sigma,
            p0_mode_sigma: t.p0_mode_sigma,
            ekf: ekf_section(),
            kf: kf_section(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdSection {
    pub n_r_cells: usize,
    pub n_z_cells: usize,
    pub dt_solver: f64,
}

impl Default for FdSection {
    fn default() -> Self {
        let g = FdGrid::default();
        Self { n_r_cells: g.n_r_cells, n_z_cells: g.n_z_cells, dt_solver: g.dt_solver }
    }
}

impl FdSection {
    pub fn grid(&self) -> Result<FdGrid, CliError> {
        Ok(FdGrid::new(self.n_r_cells, self.n_z_cells, self.dt_solver)?)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    /// Uniform starting temperature, °C; ambient when omitted.
    pub initial_temperature: Option<f64>,
    #[serde(default)]
    pub oracle: FdSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentifySection {
    pub free: Vec<String>,
    /// Per-parameter `[lo, hi]` overrides of the default bounds.
    #[serde(default)]
    pub bounds: BTreeMap<String, [f64; 2]>,
    pub n_samples: usize,
    pub n_local: usize,
    pub restarts: usize,
    pub max_evals: usize,
    /// Uniform starting temperature; mean of the first T1..T4 row when omitted.
    pub initial_temperature: Option<f64>,
}

impl Default for IdentifySection {
    fn default() -> Self {
        let m = MultiStartOptions::default();
        Self {
            free: FreeParameter::ALL.iter().map(|p| p.name().to_string()).collect(),
            bounds: BTreeMap::new(),
            n_samples: m.n_samples,
            n_local: m.n_local,
            restarts: m.restarts,
            max_evals: m.local.max_evals,
            initial_temperature: None,
        }
    }
}

impl IdentifySection {
    pub fn bounds(&self) -> Result<Vec<Bound>, CliError> {
        for name in self.bounds.keys() {
            if !self.free.contains(name) {
                return Err(CliError::Input(format!("identify.bounds.{name}: not a free parameter")));
            }
        }
        self.free
            .iter()
            .map(|name| {
                let param = FreeParameter::parse(name).ok_or_else(|| {
                    CliError::Input(format!("identify.free: unknown parameter `{name}` (expected k_z, h_left, h_right or h_side)"))
                })?;
                Ok(match self.bounds.get(name) {
                    Some([lo, hi]) => Bound { param, lo: *lo, hi: *hi },
                    None => Bound::default_for(param),
                })
            })
            .collect()
    }

    pub fn options(&self, seed: u64) -> MultiStartOptions {
        MultiStartOptions {
            seed,
            n_samples: self.n_samples,
            n_local: self.n_local,
            restarts: self.restarts,
            local: NelderMeadOptions { max_evals: self.max_evals, ..NelderMeadOptions::default() },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateSection {
    pub pairing: Pairing,
    pub frequency: f64,
    /// Uniform starting temperature; first T3 sample when omitted.
    pub initial_temperature: Option<f64>,
}

impl Default for CalibrateSection {
    fn default() -> Self {
        Self { pairing: Pairing::KfT3, frequency: 215.0, initial_temperature: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthKind {
    Fd,
    Spectral,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwinSection {
    pub duration: f64,
    pub true_initial: f64,
    pub z_noise: f64,
    pub temp_noise: f64,
    pub z_period: f64,
    pub settle_time: f64,
    pub hist_bin: f64,
    pub hist_range: f64,
    pub i_max: f64,
    pub r0: f64,
    pub truth: TruthKind,
    #[serde(default)]
    pub oracle: FdSection,
}

impl Default for TwinSection {
    fn default() -> Self {
        let t = TwinSpec::default();
        Self {
            duration: t.duration,
            true_initial: t.true_initial,
            z_noise: t.z_noise,
            temp_noise: t.temp_noise,
            z_period: t.z_period,
            settle_time: t.settle_time,
            hist_bin: t.hist_bin,
            hist_range: t.hist_range,
            i_max: 35.0,
            r0: HevCycleGenerator::default().r0,
            truth: TruthKind::Fd,
            oracle: FdSection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub cycle: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub field_n_r: usize,
    pub field_n_z: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { field_n_r: 100, field_n_z: 100 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every section that can be checked without data.
    pub fn validate(&self) -> Result<(), CliError> {
        self.geometry()?;
        self.thermal()?;
        self.spectral()?;
        self.ocv()?;
        self.cell()?;
        self.identify.bounds()?;
        if !(self.output.field_n_r >= 2 && self.output.field_n_z >= 2) {
            return Err(CliError::Input("output: field grid needs at least 2x2 points".into()));
        }
        self.estimator_config(celltherm::estimation::Mode::EkfZ, 1.0).validate()?;
        self.estimator_config(celltherm::estimation::Mode::KfT3, 1.0).validate()?;
        if !(self.estimator.p0_uniform_sigma >= 0.0 && self.estimator.p0_mode_sigma > 0.0) {
            return Err(CliError::Input("estimator: prior deviations must be positive".into()));
        }
        self.twin_spec(0).validate()?;
        Ok(())
    }

    pub fn geometry(&self) -> Result<CellGeometry, CliError> {
        Ok(CellGeometry::new(self.geometry.r_in, self.geometry.r_out, self.geometry.height)?)
    }

    pub fn thermal(&self) -> Result<ThermalParams, CliError> {
        let t = &self.thermal;
        let mut p = ThermalParams::preset(&t.preset)
            .ok_or_else(|| CliError::Input(format!("thermal.preset: unknown preset `{}` (expected config1 or config2)", t.preset)))?;
        let overrides = [
            (t.rho, &mut p.rho),
            (t.cp, &mut p.cp),
            (t.k_r, &mut p.k_r),
            (t.k_z, &mut p.k_z),
            (t.h_left, &mut p.h_left),
            (t.h_right, &mut p.h_right),
            (t.h_side, &mut p.h_side),
            (t.t_ambient, &mut p.t_ambient),
        ];
        for (value, slot) in overrides {
            if let Some(v) = value {
                *slot = v;
            }
        }
        p.validate()?;
        Ok(p)
    }

    pub fn spectral(&self) -> Result<SpectralConfig, CliError> {
        Ok(SpectralConfig::new(self.spectral.n_r, self.spectral.n_z)?)
    }

    pub fn ocv(&self) -> Result<OcvTable, CliError> {
        match (&self.electrical.ocv_soc, &self.electrical.ocv_volts) {
            (None, None) => Ok(OcvTable::default()),
            (Some(s), Some(v)) => Ok(OcvTable::new(s.clone(), v.clone())?),
            _ => Err(CliError::Input("electrical: ocv_soc and ocv_volts must be given together".into())),
        }
    }

    pub fn cell(&self) -> Result<CellElectrical, CliError> {
        let c = CellElectrical { capacity: self.electrical.capacity, soc0: self.electrical.soc0 };
        c.validate()?;
        Ok(c)
    }

    pub fn estimator_config(&self, mode: celltherm::estimation::Mode, dt: f64) -> EstimatorConfig {
        match mode {
            celltherm::estimation::Mode::EkfZ => self.estimator.ekf.to_config(dt),
            _ => self.estimator.kf.to_config(dt),
        }
    }

    pub fn twin_spec(&self, seed: u64) -> TwinSpec {
        let t = &self.twin;
        TwinSpec {
            seed,
            duration: t.duration,
            true_initial: t.true_initial,
            estimator_initial: self.estimator.initial_temperature,
            p0_uniform_sigma: self.estimator.p0_uniform_sigma,
            p0_mode_sigma: self.estimator.p0_mode_sigma,
            z_noise: t.z_noise,
            temp_noise: t.temp_noise,
            z_period: t.z_period,
            settle_time: t.settle_time,
            hist_bin: t.hist_bin,
            hist_range: t.hist_range,
        }
    }

    pub fn twin_truth(&self) -> Result<TruthSource, CliError> {
        Ok(match self.twin.truth {
            TruthKind::Fd => TruthSource::Fd(self.twin.oracle.grid()?),
            TruthKind::Spectral => TruthSource::Spectral,
        })
    }

    pub fn generator(&self) -> Result<HevCycleGenerator, CliError> {
        Ok(HevCycleGenerator {
            i_max: self.twin.i_max,
            r0: self.twin.r0,
            cell: self.cell()?,
            ocv: self.ocv()?,
            ..HevCycleGenerator::default()
        })
    }

    /// Makes relative paths in `[paths]` relative to the config file.
    pub fn rebase_paths(&mut self, base: &Path) {
        for p in [&mut self.paths.cycle, &mut self.paths.calibration, &mut self.paths.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}
