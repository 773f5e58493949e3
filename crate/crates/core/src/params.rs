//! Cell geometry, thermal parameters and the two reference cooling
//! configurations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Jelly-roll dimensions of the annular cylindrical domain, in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellGeometry {
    pub r_in: f64,
    pub r_out: f64,
    pub height: f64,
}

impl CellGeometry {
    pub fn new(r_in: f64, r_out: f64, height: f64) -> Result<Self> {
        let g = Self { r_in, r_out, height };
        g.validate()?;
        Ok(g)
    }

    /// A123 AHR-32113 jelly roll: 1 mm mandrel, 16 mm outer radius, 100 mm long.
    pub fn a123_32113() -> Self {
        Self { r_in: 0.001, r_out: 0.016, height: 0.1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_in > 0.0 && self.r_in.is_finite()) {
            return Err(invalid("r_in", format!("must be positive, got {}", self.r_in)));
        }
        if !(self.r_out > self.r_in && self.r_out.is_finite()) {
            return Err(invalid("r_out", format!("must exceed r_in = {}, got {}", self.r_in, self.r_out)));
        }
        if !(self.height > 0.0 && self.height.is_finite()) {
            return Err(invalid("height", format!("must be positive, got {}", self.height)));
        }
        Ok(())
    }

    /// Jelly-roll volume in m³.
    pub fn volume(&self) -> f64 {
        std::f64::consts::PI * (self.r_out * self.r_out - self.r_in * self.r_in) * self.height
    }

    /// Area of one end face in m².
    pub fn end_area(&self) -> f64 {
        std::f64::consts::PI * (self.r_out * self.r_out - self.r_in * self.r_in)
    }

    /// Area of the curved outer surface in m².
    pub fn side_area(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.r_out * self.height
    }

    /// Whether `(r, z)` lies in the closed domain, allowing a relative slack
    /// of 1e-9 of the domain size for round-off at the faces.
    pub fn contains(&self, r: f64, z: f64) -> bool {
        let sr = 1e-9 * (self.r_out - self.r_in);
        let sz = 1e-9 * self.height;
        r >= self.r_in - sr && r <= self.r_out + sr && z >= -sz && z <= self.height + sz
    }
}

/// Homogenised thermal properties plus per-face convection.
///
/// `h_left` acts on the z = 0 end, `h_right` on the z = H end and `h_side`
/// on the curved surface at r = r_out. The mandrel face r = r_in is always
/// adiabatic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    pub rho: f64,
    pub cp: f64,
    pub k_r: f64,
    pub k_z: f64,
    pub h_left: f64,
    pub h_right: f64,
    pub h_side: f64,
    pub t_ambient: f64,
}

impl ThermalParams {
    /// Heat sink on the left end, auxiliary fan, right end and curved
    /// surface insulated.
    pub fn config1() -> Self {
        Self {
            rho: 2680.0,
            cp: 958.0,
            k_r: 0.35,
            k_z: 19.3,
            h_left: 155.0,
            h_right: 23.3,
            h_side: 16.9,
            t_ambient: 8.0,
        }
    }

    /// Heat sink on the left end, only the right end insulated.
    pub fn config2() -> Self {
        Self {
            rho: 2680.0,
            cp: 958.0,
            k_r: 0.35,
            k_z: 19.3,
            h_left: 98.2,
            h_right: 7.2,
            h_side: 56.2,
            t_ambient: 8.0,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "config1" => Some(Self::config1()),
            "config2" => Some(Self::config2()),
            _ => None,
        }
    }

    pub fn adiabatic(mut self) -> Self {
        self.h_left = 0.0;
        self.h_right = 0.0;
        self.h_side = 0.0;
        self
    }

    pub fn is_adiabatic(&self) -> bool {
        self.h_left == 0.0 && self.h_right == 0.0 && self.h_side == 0.0
    }

    /// Volumetric heat capacity ρ·cp in J·m⁻³·K⁻¹.
    pub fn heat_capacity(&self) -> f64 {
        self.rho * self.cp
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rho", self.rho), ("cp", self.cp), ("k_r", self.k_r), ("k_z", self.k_z)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be strictly positive, got {v}")));
            }
        }
        for (name, v) in [("h_left", self.h_left), ("h_right", self.h_right), ("h_side", self.h_side)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be non-negative, got {v}")));
            }
        }
        if !self.t_ambient.is_finite() {
            return Err(invalid("t_ambient", "must be finite".into()));
        }
        Ok(())
    }
}

/// Number of polynomial modes in each direction of the tensor basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectralConfig {
    pub n_r: usize,
    pub n_z: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self { n_r: 5, n_z: 5 }
    }
}

impl SpectralConfig {
    pub fn new(n_r: usize, n_z: usize) -> Result<Self> {
        let c = Self { n_r, n_z };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_r < 2 {
            return Err(invalid("n_r", format!("need at least 2 radial modes, got {}", self.n_r)));
        }
        if self.n_z < 2 {
            return Err(invalid("n_z", format!("need at least 2 axial modes, got {}", self.n_z)));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.n_r * self.n_z
    }
}

pub(crate) fn invalid(name: &'static str, reason: String) -> Error {
    Error::InvalidParameter { name, reason }
}
