//! Temperature-field estimation for cylindrical lithium-ion cells.
//!
//! A low-order spectral-Galerkin model of radial–axial heat conduction is
//! fused with impedance-derived mean-temperature measurements in an
//! extended Kalman filter. The crate also carries the offline steps that
//! make the model usable: thermal parameter identification from drive-cycle
//! thermocouple data, and calibration of the impedance–temperature map from
//! a single drive cycle.
//!
//! Module map:
//!
//! - [`model`], [`discrete`]: the reduced state-space model and its exact
//!   discretization.
//! - [`fd`]: a dense finite-volume solver of the same boundary-value
//!   problem, used as ground truth.
//! - [`drive_cycle`]: cycle CSV I/O, coulomb counting, ohmic heat.
//! - [`impedance`]: the quadratic impedance–temperature map.
//! - [`estimation`]: KF/EKF recursions and the multi-rate runner.
//! - [`sysid`]: parameter identification and impedance calibration.
//! - [`twin`]: synthetic twin experiments.

pub mod basis;
pub mod discrete;
pub mod drive_cycle;
pub mod error;
pub mod estimation;
pub mod fd;
pub mod field;
pub mod impedance;
pub mod model;
pub mod optimize;
pub mod params;
pub mod sysid;
pub mod twin;

pub use discrete::{discretize, DiscreteStateSpace};
pub use error::{Error, Result};
pub use field::Field;
pub use model::{OutputMap, ScalarOutput, StateSpaceModel};
pub use params::{CellGeometry, SpectralConfig, ThermalParams};
