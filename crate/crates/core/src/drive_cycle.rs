//! Drive-cycle samples, coulomb counting and ohmic heat generation.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::CellGeometry;

/// One row of a drive cycle. Positive current charges the cell.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DriveCycleSample {
    pub t: f64,
    pub current: f64,
    pub voltage: f64,
    pub temps: [Option<f64>; 4],
    pub z_imag: Option<f64>,
    pub t_chamber: Option<f64>,
}

/// Columns that may be absent from a cycle file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    T1,
    T2,
    T3,
    T4,
    ZImag,
    TChamber,
}

impl Column {
    pub const ALL: [Column; 6] = [Column::T1, Column::T2, Column::T3, Column::T4, Column::ZImag, Column::TChamber];

    pub fn name(self) -> &'static str {
        match self {
            Column::T1 => "T1",
            Column::T2 => "T2",
            Column::T3 => "T3",
            Column::T4 => "T4",
            Column::ZImag => "z_imag",
            Column::TChamber => "t_chamber",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Column::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl DriveCycleSample {
    pub fn get(&self, col: Column) -> Option<f64> {
        match col {
            Column::T1 => self.temps[0],
            Column::T2 => self.temps[1],
            Column::T3 => self.temps[2],
            Column::T4 => self.temps[3],
            Column::ZImag => self.z_imag,
            Column::TChamber => self.t_chamber,
        }
    }

    pub fn set(&mut self, col: Column, v: Option<f64>) {
        match col {
            Column::T1 => self.temps[0] = v,
            Column::T2 => self.temps[1] = v,
            Column::T3 => self.temps[2] = v,
            Column::T4 => self.temps[3] = v,
            Column::ZImag => self.z_imag = v,
            Column::TChamber => self.t_chamber = v,
        }
    }
}

/// A time-ordered drive cycle.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DriveCycle {
    pub samples: Vec<DriveCycleSample>,
}

impl DriveCycle {
    pub fn new(samples: Vec<DriveCycleSample>) -> Result<Self> {
        let c = Self { samples };
        c.validate()?;
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::Cycle(format!(
                    "time must be strictly increasing (t = {} followed by {})",
                    w[0].t, w[1].t
                )));
            }
        }
        Ok(())
    }

    /// Whether any sample carries the column.
    pub fn has(&self, col: Column) -> bool {
        self.samples.iter().any(|s| s.get(col).is_some())
    }

    /// Error naming the first column a caller needs but the cycle lacks.
    pub fn require(&self, cols: &[Column]) -> Result<()> {
        match cols.iter().find(|c| !self.has(**c)) {
            Some(c) => Err(Error::MissingColumn(c.name())),
            None => Ok(()),
        }
    }

    /// Uniform sample spacing, checked to 1e-6 relative.
    pub fn uniform_dt(&self) -> Result<f64> {
        if self.samples.len() < 2 {
            return Err(Error::Cycle("need at least two samples to infer the time step".into()));
        }
        let dt = self.samples[1].t - self.samples[0].t;
        for w in self.samples.windows(2) {
            let d = w[1].t - w[0].t;
            if ((d - dt) / dt).abs() > 1e-6 {
                return Err(Error::Cycle(format!(
                    "non-uniform sampling: step {d} s at t = {} differs from {dt} s",
                    w[0].t
                )));
            }
        }
        Ok(dt)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let mut base = [None::<usize>; 3];
        let mut optional: Vec<(usize, Column)> = Vec::new();
        for (idx, name) in headers.iter().enumerate() {
            let name = name.trim();
            match name {
                "t" => base[0] = Some(idx),
                "current" => base[1] = Some(idx),
                "voltage" => base[2] = Some(idx),
                other => match Column::from_name(other) {
                    Some(c) => optional.push((idx, c)),
                    None => return Err(Error::Cycle(format!("unknown column `{other}`"))),
                },
            }
        }
        let [Some(it), Some(ic), Some(iv)] = base else {
            return Err(Error::Cycle("header must contain t, current and voltage".into()));
        };
        let mut samples = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = line + 2;
            let field = |idx: usize| -> Result<Option<f64>> {
                let raw = rec.get(idx).unwrap_or("").trim();
                if raw.is_empty() {
                    return Ok(None);
                }
                raw.parse::<f64>()
                    .map(Some)
                    .map_err(|_| Error::Cycle(format!("line {row}: `{raw}` in column `{}` is not a number", &headers[idx])))
            };
            let need = |idx: usize| -> Result<f64> {
                field(idx)?.ok_or_else(|| Error::Cycle(format!("line {row}: column `{}` is empty", &headers[idx])))
            };
            let mut s = DriveCycleSample {
                t: need(it)?,
                current: need(ic)?,
                voltage: need(iv)?,
                ..Default::default()
            };
            for &(idx, col) in &optional {
                s.set(col, field(idx)?);
            }
            samples.push(s);
        }
        Self::new(samples)
    }

    /// Optional columns are written when any sample has them; missing
    /// values are empty fields. Floats use shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let cols: Vec<Column> = Column::ALL.into_iter().filter(|c| self.has(*c)).collect();
        let mut w = csv::WriterBuilder::new().from_writer(writer);
        let mut header = vec!["t", "current", "voltage"];
        header.extend(cols.iter().map(|c| c.name()));
        w.write_record(&header)?;
        for s in &self.samples {
            let mut rec = vec![s.t.to_string(), s.current.to_string(), s.voltage.to_string()];
            rec.extend(cols.iter().map(|c| s.get(*c).map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Piecewise-linear open-circuit voltage against state of charge, clamped
/// at the ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcvTable {
    pub soc_points: Vec<f64>,
    pub ocv_points: Vec<f64>,
}

impl OcvTable {
    pub fn new(soc_points: Vec<f64>, ocv_points: Vec<f64>) -> Result<Self> {
        let t = Self { soc_points, ocv_points };
        t.validate()?;
        Ok(t)
    }

    /// Constant OCV; the default uses the 3.3 V nominal voltage.
    pub fn flat(v: f64) -> Self {
        Self { soc_points: vec![0.0, 1.0], ocv_points: vec![v, v] }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidParameter { name: "ocv table", reason };
        if self.soc_points.is_empty() || self.soc_points.len() != self.ocv_points.len() {
            return Err(invalid("soc and ocv points must be non-empty and equally long".into()));
        }
        if self.soc_points.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(invalid("soc points must lie in [0, 1]".into()));
        }
        if self.soc_points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("soc points must be strictly increasing".into()));
        }
        if self.ocv_points.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("ocv points must be non-decreasing".into()));
        }
        Ok(())
    }

    pub fn eval(&self, soc: f64) -> f64 {
        let s = &self.soc_points;
        let v = &self.ocv_points;
        if soc <= s[0] {
            return v[0];
        }
        if soc >= s[s.len() - 1] {
            return v[v.len() - 1];
        }
        let k = s.partition_point(|x| *x <= soc) - 1;
        let t = (soc - s[k]) / (s[k + 1] - s[k]);
        v[k] + t * (v[k + 1] - v[k])
    }
}

impl Default for OcvTable {
    fn default() -> Self {
        Self::flat(3.3)
    }
}

/// Capacity and initial state of charge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellElectrical {
    pub capacity: f64,
    pub soc0: f64,
}

impl Default for CellElectrical {
    fn default() -> Self {
        Self { capacity: 4.4, soc0: 0.5 }
    }
}

impl CellElectrical {
    pub fn validate(&self) -> Result<()> {
        if !(self.capacity > 0.0) {
            return Err(Error::InvalidParameter { name: "capacity", reason: format!("must be positive, got {}", self.capacity) });
        }
        if !(0.0..=1.0).contains(&self.soc0) {
            return Err(Error::InvalidParameter { name: "soc0", reason: format!("must lie in [0, 1], got {}", self.soc0) });
        }
        Ok(())
    }
}

/// Ohmic heat `Q = I (V − U_OCV)` in W.
pub fn heat_power(sample: &DriveCycleSample, ocv: f64) -> f64 {
    sample.current * (sample.voltage - ocv)
}

/// Uniform volumetric heat `q = Q / V_b` in W·m⁻³.
pub fn volumetric_heat(q_watts: f64, geometry: &CellGeometry) -> f64 {
    q_watts / geometry.volume()
}

/// Coulomb counting: `soc + I dt / (3600 C)`, clamped to [0, 1].
pub fn soc_update(soc: f64, current: f64, dt: f64, capacity_ah: f64) -> f64 {
    (soc + current * dt / (3600.0 * capacity_ah)).clamp(0.0, 1.0)
}

/// Per-sample heat generation of a cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatSeries {
    pub soc: Vec<f64>,
    /// W
    pub power: Vec<f64>,
    /// W·m⁻³
    pub volumetric: Vec<f64>,
    /// Fraction of samples with negative heat, a hint of a sign-convention
    /// error in the input data.
    pub negative_fraction: f64,
}

impl HeatSeries {
    pub fn mean_power(&self) -> f64 {
        if self.power.is_empty() {
            0.0
        } else {
            self.power.iter().sum::<f64>() / self.power.len() as f64
        }
    }
}

/// Heat at sample `k` uses only sample `k` and the SoC accumulated before it.
pub fn heat_series(cycle: &DriveCycle, ocv: &OcvTable, cell: &CellElectrical, geometry: &CellGeometry) -> HeatSeries {
    let n = cycle.samples.len();
    let mut soc = Vec::with_capacity(n);
    let mut power = Vec::with_capacity(n);
    let mut s = cell.soc0;
    for (k, sample) in cycle.samples.iter().enumerate() {
        soc.push(s);
        power.push(heat_power(sample, ocv.eval(s)));
        if let Some(next) = cycle.samples.get(k + 1) {
            s = soc_update(s, sample.current, next.t - sample.t, cell.capacity);
        }
    }
    let negative = power.iter().filter(|p| **p < 0.0).count();
    HeatSeries {
        soc,
        volumetric: power.iter().map(|p| volumetric_heat(*p, geometry)).collect(),
        power,
        negative_fraction: if n == 0 { 0.0 } else { negative as f64 / n as f64 },
    }
}

/// Seeded stand-in for a looped, current-scaled HEV profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HevCycleGenerator {
    /// Peak current magnitude, A.
    pub i_max: f64,
    /// Series resistance used to synthesise the voltage, Ω.
    pub r0: f64,
    pub cell: CellElectrical,
    pub ocv: OcvTable,
    /// Sample spacing, s.
    pub dt: f64,
    /// Load is interrupted for `pause` seconds at the start of every
    /// `pause_period` seconds (impedance measurement windows). Zero disables.
    pub pause_period: f64,
    pub pause: f64,
}

impl Default for HevCycleGenerator {
    fn default() -> Self {
        Self {
            i_max: 50.0,
            r0: 0.02,
            cell: CellElectrical::default(),
            ocv: OcvTable::default(),
            dt: 1.0,
            pause_period: 24.0,
            pause: 4.0,
        }
    }
}

impl HevCycleGenerator {
    /// Bursts of 2–8 s with magnitude mostly in 5–70 % of `i_max` and an
    /// occasional full-scale peak. Each burst's sign opposes the charge
    /// accumulated so far, keeping the profile zero-mean and the SoC
    /// excursion within one burst (at most 8 s at `i_max`). About 30 % of
    /// segments are rests.
    pub fn generate(&self, seed: u64, duration: f64) -> Result<DriveCycle> {
        if !(duration >= 60.0) {
            return Err(Error::InvalidParameter { name: "duration", reason: format!("must be at least 60 s, got {duration}") });
        }
        self.cell.validate()?;
        self.ocv.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = (duration / self.dt).round() as usize + 1;
        let mut currents = Vec::with_capacity(n);
        let mut charge = 0.0;
        while currents.len() < n {
            let len = rng.random_range(2..=8usize);
            let current = if rng.random_bool(0.3) {
                0.0
            } else {
                let mag = if rng.random_bool(0.08) {
                    self.i_max
                } else {
                    self.i_max * rng.random_range(0.05..0.7)
                };
                let sign = if charge > 0.0 {
                    -1.0
                } else if charge < 0.0 {
                    1.0
                } else if rng.random_bool(0.5) {
                    1.0
                } else {
                    -1.0
                };
                sign * mag
            };
            for _ in 0..len {
                if currents.len() == n {
                    break;
                }
                let t = currents.len() as f64 * self.dt;
                let paused = self.pause_period > 0.0 && t.rem_euclid(self.pause_period) < self.pause - 1e-9;
                let i = if paused { 0.0 } else { current };
                charge += i * self.dt;
                currents.push(i);
            }
        }
        let mut soc = self.cell.soc0;
        let samples = currents
            .into_iter()
            .enumerate()
            .map(|(k, current)| {
                let s = DriveCycleSample {
                    t: k as f64 * self.dt,
                    current,
                    voltage: self.ocv.eval(soc) + current * self.r0,
                    ..Default::default()
                };
                soc = soc_update(soc, current, self.dt, self.cell.capacity);
                s
            })
            .collect();
        DriveCycle::new(samples)
    }
}

/// Constant-current cycle of `n` samples at spacing `dt` producing a heat
/// step of `q_watts` through `r0` (`I = sqrt(Q / R₀)`).
pub fn constant_heat_cycle(q_watts: f64, r0: f64, n: usize, dt: f64, ocv: f64) -> DriveCycle {
    let current = (q_watts / r0).sqrt();
    DriveCycle {
        samples: (0..n)
            .map(|k| DriveCycleSample {
                t: k as f64 * dt,
                current,
                voltage: ocv + current * r0,
                ..Default::default()
            })
            .collect(),
    }
}
