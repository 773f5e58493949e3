//! Cell-centred finite-volume solver for the same boundary-value problem.
//!
//! Fluxes are second-order central differences through cell faces at
//! `r ± dr/2`, so the `(1/r) ∂/∂r (r ∂T/∂r)` term is conservative. Robin
//! faces use the half-cell ghost relation, which puts the face conductance
//! `dx/(2k)` in series with `1/h`. Time stepping is implicit Euler.
//!
//! The discrete operator is a Kronecker sum `L = Lr ⊕ Lz` of two
//! one-dimensional operators, each similar to a symmetric matrix. Both are
//! diagonalised once; every implicit step is then a diagonal solve in the
//! modal basis (fast diagonalisation), and a run of identical steps under a
//! constant source collapses to a closed-form geometric sum.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::params::{CellGeometry, ThermalParams};

const SCHEME: &str = "implicit-Euler finite-volume oracle";

/// Oracle resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdGrid {
    pub n_r_cells: usize,
    pub n_z_cells: usize,
    pub dt_solver: f64,
}

impl Default for FdGrid {
    fn default() -> Self {
        Self { n_r_cells: 200, n_z_cells: 200, dt_solver: 0.1 }
    }
}

impl FdGrid {
    pub fn new(n_r_cells: usize, n_z_cells: usize, dt_solver: f64) -> Result<Self> {
        let g = Self { n_r_cells, n_z_cells, dt_solver };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_r_cells < 10 || self.n_z_cells < 10 {
            return Err(Error::InvalidParameter {
                name: "fd grid",
                reason: format!("need at least 10x10 cells, got {}x{}", self.n_r_cells, self.n_z_cells),
            });
        }
        if !(self.dt_solver > 0.0 && self.dt_solver.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt_solver",
                reason: format!("must be positive, got {}", self.dt_solver),
            });
        }
        Ok(())
    }
}

/// One direction of the separable operator, `L = V diag(μ) V⁻¹`.
#[derive(Debug, Clone)]
struct Axis {
    centres: Vec<f64>,
    /// Face value = `face_gain_hi · θ[last]` (Robin) or `θ[last]` (adiabatic).
    gain_lo: f64,
    gain_hi: f64,
    lo: f64,
    hi: f64,
    mu: DVector<f64>,
    v: DMatrix<f64>,
    v_inv: DMatrix<f64>,
}

impl Axis {
    /// `capacity[i] dθᵢ/dt = Σ conductance (θⱼ − θᵢ) − sink[i] θᵢ`
    fn build(
        lo: f64,
        hi: f64,
        centres: Vec<f64>,
        capacity: Vec<f64>,
        inner_conductance: Vec<f64>,
        sink_lo: f64,
        sink_hi: f64,
        gain_lo: f64,
        gain_hi: f64,
    ) -> Self {
        let n = centres.len();
        let mut k = DMatrix::<f64>::zeros(n, n);
        for (i, g) in inner_conductance.iter().enumerate() {
            k[(i, i)] += g;
            k[(i + 1, i + 1)] += g;
            k[(i, i + 1)] -= g;
            k[(i + 1, i)] -= g;
        }
        k[(0, 0)] += sink_lo;
        k[(n - 1, n - 1)] += sink_hi;
        let d_half: Vec<f64> = capacity.iter().map(|c| c.sqrt()).collect();
        let s = DMatrix::from_fn(n, n, |i, j| k[(i, j)] / (d_half[i] * d_half[j]));
        let eig = s.symmetric_eigen();
        let q = eig.eigenvectors;
        let v = DMatrix::from_fn(n, n, |i, j| q[(i, j)] / d_half[i]);
        let v_inv = DMatrix::from_fn(n, n, |i, j| q[(j, i)] * d_half[j]);
        Self {
            centres,
            gain_lo,
            gain_hi,
            lo,
            hi,
            mu: -eig.eigenvalues,
            v,
            v_inv,
        }
    }

    /// Weights over cell values for linear interpolation at `x`, using face
    /// values at the two ends.
    fn interpolation_weights(&self, x: f64) -> DVector<f64> {
        let n = self.centres.len();
        let mut ext_x = Vec::with_capacity(n + 2);
        ext_x.push(self.lo);
        ext_x.extend_from_slice(&self.centres);
        ext_x.push(self.hi);
        // Extension map from cell values to [face_lo, cells.., face_hi].
        let ext_weight = |k: usize| -> (usize, f64) {
            if k == 0 {
                (0, self.gain_lo)
            } else if k == n + 1 {
                (n - 1, self.gain_hi)
            } else {
                (k - 1, 1.0)
            }
        };
        let x = x.clamp(self.lo, self.hi);
        let seg = ext_x.partition_point(|v| *v <= x).clamp(1, n + 1) - 1;
        let (x0, x1) = (ext_x[seg], ext_x[seg + 1]);
        let t = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
        let mut w = DVector::zeros(n);
        let (i0, g0) = ext_weight(seg);
        let (i1, g1) = ext_weight(seg + 1);
        w[i0] += (1.0 - t) * g0;
        w[i1] += t * g1;
        w
    }

    fn extended_coords(&self) -> Vec<f64> {
        let mut v = vec![self.lo];
        v.extend_from_slice(&self.centres);
        v.push(self.hi);
        v
    }
}

/// Precomputed oracle for one geometry, parameter set and grid.
#[derive(Debug, Clone)]
pub struct FdSolver {
    pub geometry: CellGeometry,
    pub params: ThermalParams,
    pub grid: FdGrid,
    radial: Axis,
    axial: Axis,
    /// Annular area per radian of each radial cell, `∫ r dr`.
    ring_area: Vec<f64>,
    dz: f64,
    dr: f64,
    /// Modal image of the unit source `1/(ρ cp)`.
    source: DMatrix<f64>,
}

/// Oracle state in modal coordinates (deviation from ambient).
#[derive(Debug, Clone, PartialEq)]
pub struct FdState {
    modal: DMatrix<f64>,
    pub time: f64,
}

/// A linear functional `prᵀ Y pz` of the modal state.
#[derive(Debug, Clone)]
pub struct FdProbe {
    pr: DVector<f64>,
    pz: DVector<f64>,
}

fn series_conductance(half_cell: f64, k: f64, h: f64) -> f64 {
    if h == 0.0 {
        0.0
    } else {
        1.0 / (half_cell / k + 1.0 / h)
    }
}

fn face_gain(half_cell: f64, k: f64, h: f64) -> f64 {
    let c = k / half_cell;
    c / (c + h)
}

impl FdSolver {
    pub fn new(geometry: CellGeometry, params: ThermalParams, grid: FdGrid) -> Result<Self> {
        geometry.validate()?;
        params.validate()?;
        grid.validate()?;
        let rc = params.heat_capacity();
        let nr = grid.n_r_cells;
        let nz = grid.n_z_cells;
        let dr = (geometry.r_out - geometry.r_in) / nr as f64;
        let dz = geometry.height / nz as f64;
        let face_r = |i: usize| geometry.r_in + i as f64 * dr;
        let r_centres: Vec<f64> = (0..nr).map(|i| geometry.r_in + (i as f64 + 0.5) * dr).collect();
        let ring_area: Vec<f64> = (0..nr)
            .map(|i| 0.5 * (face_r(i + 1).powi(2) - face_r(i).powi(2)))
            .collect();

        // Radial balance per unit height and radian.
        let radial = Axis::build(
            geometry.r_in,
            geometry.r_out,
            r_centres,
            ring_area.iter().map(|a| rc * a).collect(),
            (1..nr).map(|i| params.k_r * face_r(i) / dr).collect(),
            0.0,
            geometry.r_out * series_conductance(0.5 * dr, params.k_r, params.h_side),
            1.0,
            face_gain(0.5 * dr, params.k_r, params.h_side),
        );
        // Axial balance per unit cross-section.
        let axial = Axis::build(
            0.0,
            geometry.height,
            (0..nz).map(|j| (j as f64 + 0.5) * dz).collect(),
            vec![rc * dz; nz],
            vec![params.k_z / dz; nz - 1],
            series_conductance(0.5 * dz, params.k_z, params.h_left),
            series_conductance(0.5 * dz, params.k_z, params.h_right),
            face_gain(0.5 * dz, params.k_z, params.h_left),
            face_gain(0.5 * dz, params.k_z, params.h_right),
        );
        let ones_r = DVector::from_element(nr, 1.0 / rc);
        let ones_z = DVector::from_element(nz, 1.0);
        let source = (&radial.v_inv * ones_r) * (&axial.v_inv * ones_z).transpose();
        Ok(Self {
            geometry,
            params,
            grid,
            radial,
            axial,
            ring_area,
            dz,
            dr,
            source,
        })
    }

    pub fn uniform(&self, t: f64) -> FdState {
        let theta = DMatrix::from_element(self.grid.n_r_cells, self.grid.n_z_cells, t - self.params.t_ambient);
        self.from_cells(&theta)
    }

    /// State from cell-centre deviations `θ = T − T∞`.
    pub fn from_cells(&self, theta: &DMatrix<f64>) -> FdState {
        FdState {
            modal: &self.radial.v_inv * theta * self.axial.v_inv.transpose(),
            time: 0.0,
        }
    }

    /// Absolute cell-centre temperatures.
    pub fn cells(&self, state: &FdState) -> DMatrix<f64> {
        (&self.radial.v * &state.modal * self.axial.v.transpose()).add_scalar(self.params.t_ambient)
    }

    /// Advance by `duration` under constant volumetric heat `q`, in implicit
    /// Euler steps of at most `dt_solver`.
    pub fn advance(&self, state: &mut FdState, q: f64, duration: f64) -> Result<()> {
        let steps = (duration / self.grid.dt_solver).round().max(1.0);
        let h = duration / steps;
        let n = steps as i32;
        for j in 0..self.grid.n_z_cells {
            for i in 0..self.grid.n_r_cells {
                let mu = self.radial.mu[i] + self.axial.mu[j];
                let s = self.source[(i, j)] * q;
                let y = &mut state.modal[(i, j)];
                if mu == 0.0 {
                    *y += duration * s;
                } else {
                    // aⁿ − 1 without cancellation for the near-zero adiabatic mode.
                    let an_m1 = (-(n as f64) * (-h * mu).ln_1p()).exp_m1();
                    *y += an_m1 * (*y + s / mu);
                }
            }
        }
        state.time += duration;
        Ok(())
    }

    pub fn probe(&self, r: f64, z: f64) -> Result<FdProbe> {
        if !self.geometry.contains(r, z) {
            return Err(Error::OutsideDomain { r, z });
        }
        let wr = self.radial.interpolation_weights(r);
        let wz = self.axial.interpolation_weights(z);
        Ok(FdProbe {
            pr: self.radial.v.transpose() * wr,
            pz: self.axial.v.transpose() * wz,
        })
    }

    /// Volume-average functional.
    pub fn mean_probe(&self) -> FdProbe {
        let total: f64 = self.ring_area.iter().sum();
        let wr = DVector::from_iterator(self.ring_area.len(), self.ring_area.iter().map(|a| a / total));
        let wz = DVector::from_element(self.grid.n_z_cells, 1.0 / self.grid.n_z_cells as f64);
        FdProbe {
            pr: self.radial.v.transpose() * wr,
            pz: self.axial.v.transpose() * wz,
        }
    }

    pub fn eval(&self, probe: &FdProbe, state: &FdState) -> f64 {
        (probe.pr.transpose() * &state.modal * &probe.pz)[(0, 0)] + self.params.t_ambient
    }

    /// Field on the cell centres plus boundary faces, spanning the closed
    /// domain.
    pub fn field(&self, state: &FdState) -> Field {
        let theta = &self.radial.v * &state.modal * self.axial.v.transpose();
        let nr = self.grid.n_r_cells;
        let nz = self.grid.n_z_cells;
        let ext = |k: usize, n: usize, lo: f64, hi: f64| -> (usize, f64) {
            if k == 0 {
                (0, lo)
            } else if k == n + 1 {
                (n - 1, hi)
            } else {
                (k - 1, 1.0)
            }
        };
        let values = DMatrix::from_fn(nr + 2, nz + 2, |a, b| {
            let (i, gi) = ext(a, nr, self.radial.gain_lo, self.radial.gain_hi);
            let (j, gj) = ext(b, nz, self.axial.gain_lo, self.axial.gain_hi);
            gi * gj * theta[(i, j)] + self.params.t_ambient
        });
        Field {
            r: self.radial.extended_coords(),
            z: self.axial.extended_coords(),
            values,
        }
    }

    /// Stored thermal energy relative to ambient, J (full 2π revolution).
    pub fn stored_energy(&self, state: &FdState) -> f64 {
        let theta = &self.radial.v * &state.modal * self.axial.v.transpose();
        let mut e = 0.0;
        for i in 0..self.grid.n_r_cells {
            e += self.ring_area[i] * theta.row(i).sum();
        }
        2.0 * std::f64::consts::PI * self.params.heat_capacity() * self.dz * e
    }

    /// Convective loss through all faces, W.
    pub fn boundary_loss(&self, state: &FdState) -> f64 {
        let theta = &self.radial.v * &state.modal * self.axial.v.transpose();
        let p = &self.params;
        let nr = self.grid.n_r_cells;
        let nz = self.grid.n_z_cells;
        let side = self.geometry.r_out * self.dz * series_conductance(0.5 * self.dr, p.k_r, p.h_side);
        let left = series_conductance(0.5 * self.dz, p.k_z, p.h_left);
        let right = series_conductance(0.5 * self.dz, p.k_z, p.h_right);
        let mut loss = side * theta.row(nr - 1).sum();
        for i in 0..nr {
            loss += self.ring_area[i] * (left * theta[(i, 0)] + right * theta[(i, nz - 1)]);
        }
        2.0 * std::f64::consts::PI * loss
    }

    pub fn check_bounded(&self, state: &FdState) -> Result<()> {
        let probe = self.mean_probe();
        let worst = self.cells(state).amax().max(self.eval(&probe, state).abs());
        if !(worst <= 1e3) {
            return Err(Error::Divergence { scheme: SCHEME, t: state.time });
        }
        Ok(())
    }
}

/// Probe traces and final field of a transient oracle run.
#[derive(Debug, Clone)]
pub struct FdTransient {
    /// Sample times, `N + 1` entries starting at 0.
    pub times: Vec<f64>,
    /// `probes[p][k]`: probe `p` at `times[k]`.
    pub probes: Vec<Vec<f64>>,
    /// Volume-average temperature at each time.
    pub mean: Vec<f64>,
    pub final_field: Field,
}

/// Transient response to a heat series `q[k]` held over `[k·dt, (k+1)·dt)`.
pub fn solve_transient(
    geometry: CellGeometry,
    params: ThermalParams,
    q_series: &[f64],
    dt: f64,
    t0_field: f64,
    grid: FdGrid,
    probes: &[(f64, f64)],
) -> Result<FdTransient> {
    let solver = FdSolver::new(geometry, params, grid)?;
    solver.run(q_series, dt, solver.uniform(t0_field), probes)
}

impl FdSolver {
    /// As [`solve_transient`], from an arbitrary initial state.
    pub fn run(&self, q_series: &[f64], dt: f64, mut state: FdState, probes: &[(f64, f64)]) -> Result<FdTransient> {
        if !(dt >= self.grid.dt_solver * (1.0 - 1e-9)) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("sample spacing {dt} s is finer than the solver step {} s", self.grid.dt_solver),
            });
        }
        let funcs = probes
            .iter()
            .map(|&(r, z)| self.probe(r, z))
            .collect::<Result<Vec<_>>>()?;
        let mean = self.mean_probe();
        let mut out = FdTransient {
            times: Vec::with_capacity(q_series.len() + 1),
            probes: vec![Vec::with_capacity(q_series.len() + 1); probes.len()],
            mean: Vec::with_capacity(q_series.len() + 1),
            final_field: Field { r: vec![], z: vec![], values: DMatrix::zeros(0, 0) },
        };
        let t0 = state.time;
        let record = |state: &FdState, out: &mut FdTransient| -> Result<()> {
            out.times.push(state.time - t0);
            for (series, f) in out.probes.iter_mut().zip(&funcs) {
                let v = self.eval(f, state);
                if !(v.abs() <= 1e3) {
                    return Err(Error::Divergence { scheme: SCHEME, t: state.time });
                }
                series.push(v);
            }
            out.mean.push(self.eval(&mean, state));
            Ok(())
        };
        record(&state, &mut out)?;
        for &q in q_series {
            self.advance(&mut state, q, dt)?;
            record(&state, &mut out)?;
        }
        self.check_bounded(&state)?;
        out.final_field = self.field(&state);
        Ok(out)
    }

    /// Direct solution of the steady problem under constant `q`.
    pub fn steady_state(&self, q: f64) -> Result<FdState> {
        let mut modal = DMatrix::zeros(self.grid.n_r_cells, self.grid.n_z_cells);
        if q != 0.0 {
            if self.params.is_adiabatic() {
                return Err(Error::NoSteadyState { q });
            }
            for j in 0..self.grid.n_z_cells {
                for i in 0..self.grid.n_r_cells {
                    let mu = self.radial.mu[i] + self.axial.mu[j];
                    modal[(i, j)] = -self.source[(i, j)] * q / mu;
                }
            }
        }
        Ok(FdState { modal, time: f64::INFINITY })
    }
}

/// Steady temperature field under constant `q` on the given grid.
pub fn steady_state(geometry: CellGeometry, params: ThermalParams, q_const: f64, grid: FdGrid) -> Result<Field> {
    let solver = FdSolver::new(geometry, params, grid)?;
    let state = solver.steady_state(q_const)?;
    Ok(solver.field(&state))
}
