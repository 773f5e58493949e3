//! Quadratic map from volume-average temperature to the imaginary part of
//! the impedance at a fixed excitation frequency.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum temperature spread for a well-conditioned quadratic fit, °C.
pub const MIN_SPREAD: f64 = 2.0;

/// `Z″ = a1 + a2 T̄ + a3 T̄²` at `frequency`, trusted on `t_range`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpedanceCalibration {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub frequency: f64,
    pub t_range: (f64, f64),
    /// RMS fit residual in Ω, when the map came from data.
    #[serde(default)]
    pub rms_residual: Option<f64>,
    #[serde(default)]
    pub provenance: String,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ImpedanceCalibration {
    /// Synthetic coefficients giving Z″ of order 1e-4..1e-3 Ω over 5–35 °C,
    /// monotonically decreasing there. Not measured values.
    pub fn synthetic_default() -> Self {
        Self {
            a1: 1e-3,
            a2: -2e-5,
            a3: 2e-7,
            frequency: 215.0,
            t_range: (5.0, 35.0),
            rms_residual: None,
            provenance: "synthetic default coefficients".into(),
            warnings: Vec::new(),
        }
    }

    /// Finite coefficients, positive frequency and an ordered range.
    pub fn validate(&self) -> Result<()> {
        if ![self.a1, self.a2, self.a3].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter { name: "calibration", reason: "coefficients must be finite".into() });
        }
        if !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return Err(Error::InvalidParameter { name: "frequency", reason: format!("must be positive, got {}", self.frequency) });
        }
        if !(self.t_range.0 < self.t_range.1) {
            return Err(Error::InvalidParameter {
                name: "t_range",
                reason: format!("must be increasing, got ({}, {})", self.t_range.0, self.t_range.1),
            });
        }
        Ok(())
    }

    pub fn predict_z(&self, t_mean: f64) -> f64 {
        self.a1 + self.a2 * t_mean + self.a3 * t_mean * t_mean
    }

    /// `dZ″/dT̄`.
    pub fn slope(&self, t_mean: f64) -> f64 {
        self.a2 + 2.0 * self.a3 * t_mean
    }

    pub fn in_range(&self, t_mean: f64) -> bool {
        t_mean >= self.t_range.0 && t_mean <= self.t_range.1
    }

    /// Strict monotonicity over `t_range`: the derivative is linear in T, so
    /// checking its sign at both ends suffices.
    pub fn is_monotonic(&self) -> bool {
        let lo = self.slope(self.t_range.0);
        let hi = self.slope(self.t_range.1);
        lo * hi > 0.0
    }

    /// Noisy synthetic measurement, deterministic per seed.
    pub fn synth_measurement(&self, t_mean: f64, noise_sigma: f64, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.synth_with(t_mean, noise_sigma, &mut rng)
    }

    pub fn synth_with<R: rand::Rng>(&self, t_mean: f64, noise_sigma: f64, rng: &mut R) -> Result<f64> {
        if !(noise_sigma >= 0.0) {
            return Err(Error::InvalidParameter { name: "noise_sigma", reason: format!("must be non-negative, got {noise_sigma}") });
        }
        let z = self.predict_z(t_mean);
        if noise_sigma == 0.0 {
            return Ok(z);
        }
        let n = Normal::new(0.0, noise_sigma).expect("sigma is positive and finite");
        Ok(z + n.sample(rng))
    }
}

/// Least-squares quadratic through `(T̄, Z″)` pairs.
///
/// The fit runs on the centred and scaled variable `s = (T − c)/w` and is
/// mapped back to raw coefficients, which keeps the normal equations well
/// conditioned for narrow temperature windows.
pub fn calibrate(pairs: &[(f64, f64)], frequency: f64) -> Result<ImpedanceCalibration> {
    if pairs.len() < 3 {
        return Err(Error::Calibration(format!("need at least 3 pairs, got {}", pairs.len())));
    }
    if pairs.iter().any(|(t, z)| !t.is_finite() || !z.is_finite()) {
        return Err(Error::Calibration("pairs contain non-finite values".into()));
    }
    let lo = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = pairs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let spread = hi - lo;
    if spread < MIN_SPREAD {
        return Err(Error::Calibration(format!(
            "temperature spread {spread:.3} degC is below the {MIN_SPREAD} degC needed for a quadratic fit"
        )));
    }
    let c = 0.5 * (lo + hi);
    let w = 0.5 * spread;
    let n = pairs.len();
    let design = DMatrix::from_fn(n, 3, |i, j| ((pairs[i].0 - c) / w).powi(j as i32));
    let rhs = DVector::from_iterator(n, pairs.iter().map(|p| p.1));
    let coef = design
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Calibration(format!("least-squares solve failed: {e}")))?;
    let (b0, b1, b2) = (coef[0], coef[1], coef[2]);
    // Z = b0 + b1 (T − c)/w + b2 (T − c)²/w²
    let a3 = b2 / (w * w);
    let a2 = b1 / w - 2.0 * b2 * c / (w * w);
    let a1 = b0 - b1 * c / w + b2 * c * c / (w * w);
    let resid = &design * &coef - &rhs;
    let rms = (resid.norm_squared() / n as f64).sqrt();

    let mut cal = ImpedanceCalibration {
        a1,
        a2,
        a3,
        frequency,
        t_range: (lo, hi),
        rms_residual: Some(rms),
        provenance: format!("least-squares fit of {n} pairs"),
        warnings: Vec::new(),
    };
    if !cal.is_monotonic() {
        cal.warnings.push(format!(
            "fitted map is not monotonic on [{lo:.2}, {hi:.2}] degC; temperature is unobservable near the turning point"
        ));
    }
    Ok(cal)
}
