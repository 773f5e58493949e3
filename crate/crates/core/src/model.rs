//! Spectral-Galerkin reduction of the 2-D cylindrical heat equation.
//!
//! The temperature deviation `θ = T − T∞` is expanded in a tensor product
//! of Legendre polynomials, `θ(r, z) = Σ x[i·n_z + j] Pᵢ(ξ(r)) Pⱼ(η(z))`,
//! on the annulus `[r_in, r_out] × [0, H]`. Testing the heat equation with
//! the same functions under the cylindrical weight `r` gives
//!
//! ```text
//! E ẋ = A x + B u,   u = [q, 1]ᵀ
//! ```
//!
//! Robin conditions enter `A` through the surface integrals of the weak
//! form, so no basis function depends on the convection coefficients.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::basis::{Basis1d, Operators1d};
use crate::error::{Error, Result};
use crate::field::{linspace, Field};
use crate::params::{CellGeometry, SpectralConfig, ThermalParams};

/// Continuous-time reduced model `E ẋ = A x + B u`, `y = C x + T∞`.
#[derive(Debug, Clone)]
pub struct StateSpaceModel {
    pub e: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub geometry: CellGeometry,
    pub params: ThermalParams,
    pub config: SpectralConfig,
    radial: Basis1d,
    axial: Basis1d,
    radial_ops: Operators1d,
    axial_ops: Operators1d,
}

/// Linear output map `y = C x + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputMap {
    pub c: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub labels: Vec<String>,
}

impl OutputMap {
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.c * x + &self.offset
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Row `i` and its offset as a scalar map.
    pub fn row(&self, i: usize) -> ScalarOutput {
        ScalarOutput {
            row: self.c.row(i).into_owned(),
            offset: self.offset[i],
        }
    }
}

/// A single linear functional of the state, `row · x + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarOutput {
    pub row: RowDVector<f64>,
    pub offset: f64,
}

impl ScalarOutput {
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.row.dot(&x.transpose()) + self.offset
    }
}

/// Probe positions of the four thermocouples: core at mid-height, then the
/// curved surface at the left end, mid-height and right end.
pub fn default_probe_points(g: &CellGeometry) -> Vec<(f64, f64)> {
    vec![
        (g.r_in, 0.5 * g.height),
        (g.r_out, 0.0),
        (g.r_out, 0.5 * g.height),
        (g.r_out, g.height),
    ]
}

pub const DEFAULT_PROBE_LABELS: [&str; 4] = ["T1", "T2", "T3", "T4"];

impl StateSpaceModel {
    pub fn assemble(
        geometry: CellGeometry,
        params: ThermalParams,
        config: SpectralConfig,
    ) -> Result<Self> {
        geometry.validate()?;
        params.validate()?;
        config.validate()?;

        let radial = Basis1d::new(geometry.r_in, geometry.r_out, config.n_r, true);
        let axial = Basis1d::new(0.0, geometry.height, config.n_z, false);
        let ro = radial.operators();
        let zo = axial.operators();

        let rho_cp = params.heat_capacity();
        let e = ro.mass.kronecker(&zo.mass) * rho_cp;

        let conduction =
            ro.stiffness.kronecker(&zo.mass) * params.k_r + ro.mass.kronecker(&zo.stiffness) * params.k_z;
        // Surface integrals: the curved face carries the extra factor r_out
        // from the cylindrical weight, the end faces integrate over r·dr.
        let side = (&ro.at_hi * ro.at_hi.transpose()).kronecker(&zo.mass)
            * (params.h_side * geometry.r_out);
        let left = ro.mass.kronecker(&(&zo.at_lo * zo.at_lo.transpose())) * params.h_left;
        let right = ro.mass.kronecker(&(&zo.at_hi * zo.at_hi.transpose())) * params.h_right;
        let a = -(conduction + side + left + right);

        let n = config.state_dim();
        let mut b = DMatrix::zeros(n, 2);
        b.set_column(0, &ro.load.kronecker(&zo.load));
        // Column 1 multiplies the constant input; in deviation coordinates a
        // uniform ambient leaves no residual forcing.

        if e.clone().cholesky().is_none() {
            return Err(Error::MassNotSpd);
        }

        Ok(Self {
            e,
            a,
            b,
            geometry,
            params,
            config,
            radial,
            axial,
            radial_ops: ro,
            axial_ops: zo,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.config.state_dim()
    }

    /// Input vector `[q, 1]`.
    pub fn input(q: f64) -> DVector<f64> {
        DVector::from_vec(vec![q, 1.0])
    }

    fn mass_cholesky(&self) -> nalgebra::Cholesky<f64, nalgebra::Dyn> {
        self.e.clone().cholesky().expect("mass matrix checked SPD at assembly")
    }

    /// `E⁻¹A`.
    pub fn system_matrix(&self) -> DMatrix<f64> {
        self.mass_cholesky().solve(&self.a)
    }

    /// `E⁻¹B`.
    pub fn input_matrix(&self) -> DMatrix<f64> {
        self.mass_cholesky().solve(&self.b)
    }

    /// `ẋ = E⁻¹(A x + B u)`.
    pub fn derivative(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.mass_cholesky().solve(&(&self.a * x + &self.b * u))
    }

    /// Eigenvalues of `E⁻¹A`, ascending. The pencil is symmetric-definite so
    /// they are real.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let l = self.mass_cholesky().l();
        let linv = l.clone().try_inverse().expect("Cholesky factor is invertible");
        let s = &linv * &self.a * linv.transpose();
        let s = (&s + s.transpose()) * 0.5;
        let mut ev: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    /// Time constant of the slowest decaying mode, `-1/λ` for the eigenvalue
    /// closest to zero that is not the adiabatic constant mode.
    pub fn dominant_time_constant(&self) -> f64 {
        let ev = self.eigenvalues();
        let scale = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        ev.iter()
            .filter(|v| **v < -1e-12 * scale)
            .map(|v| -1.0 / v)
            .fold(0.0, f64::max)
    }

    /// Basis values at `(r, z)` as a state row. Callers must check the
    /// domain; points are clamped onto it.
    fn basis_row(&self, r: f64, z: f64) -> RowDVector<f64> {
        let pr = self.radial.eval(r);
        let pz = self.axial.eval(z);
        let mut row = RowDVector::zeros(self.state_dim());
        for (i, a) in pr.iter().enumerate() {
            for (j, b) in pz.iter().enumerate() {
                row[i * self.config.n_z + j] = a * b;
            }
        }
        row
    }

    pub fn point_output(&self, r: f64, z: f64) -> Result<ScalarOutput> {
        if !self.geometry.contains(r, z) {
            return Err(Error::OutsideDomain { r, z });
        }
        Ok(ScalarOutput {
            row: self.basis_row(r, z),
            offset: self.params.t_ambient,
        })
    }

    pub fn output_map_for_points(&self, points: &[(f64, f64)]) -> Result<OutputMap> {
        let labels = (1..=points.len()).map(|i| format!("T{i}")).collect();
        self.output_map_labelled(points, labels)
    }

    pub fn output_map_labelled(&self, points: &[(f64, f64)], labels: Vec<String>) -> Result<OutputMap> {
        if labels.len() != points.len() {
            return Err(Error::Dimension(format!(
                "{} labels for {} points",
                labels.len(),
                points.len()
            )));
        }
        let mut c = DMatrix::zeros(points.len(), self.state_dim());
        for (i, &(r, z)) in points.iter().enumerate() {
            c.set_row(i, &self.point_output(r, z)?.row);
        }
        Ok(OutputMap {
            c,
            offset: DVector::from_element(points.len(), self.params.t_ambient),
            labels,
        })
    }

    /// T1..T4 at the thermocouple positions.
    pub fn default_output_map(&self) -> OutputMap {
        self.output_map_labelled(
            &default_probe_points(&self.geometry),
            DEFAULT_PROBE_LABELS.iter().map(|s| s.to_string()).collect(),
        )
        .expect("default probes lie on the domain boundary")
    }

    /// Volume-averaged temperature `(2 / ((r_out² − r_in²) H)) ∫∫ T r dr dz`
    /// as a linear functional of the state, integrated exactly.
    pub fn mean_temperature_row(&self) -> ScalarOutput {
        let volume = self.radial_ops.measure * self.axial_ops.measure;
        let row = self.radial_ops.load.kronecker(&self.axial_ops.load).transpose() / volume;
        ScalarOutput { row, offset: self.params.t_ambient }
    }

    /// State of a spatially uniform field at `t`.
    pub fn uniform_state(&self, t: f64) -> DVector<f64> {
        let mut x = DVector::zeros(self.state_dim());
        x[0] = t - self.params.t_ambient;
        x
    }

    /// Equilibrium state under constant `q`, solving `A x = −B u`.
    pub fn steady_state(&self, q: f64) -> Result<DVector<f64>> {
        if self.params.is_adiabatic() {
            if q == 0.0 {
                return Ok(DVector::zeros(self.state_dim()));
            }
            return Err(Error::NoSteadyState { q });
        }
        let rhs = -(&self.b * Self::input(q));
        self.a
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or(Error::NoSteadyState { q })
    }

    /// Weighted L2 projection of an absolute temperature field onto the basis.
    pub fn project<F: Fn(f64, f64) -> f64>(&self, field: F) -> DVector<f64> {
        let nq_r = self.config.n_r + 12;
        let nq_z = self.config.n_z + 12;
        let (xr, wr) = crate::basis::gauss_legendre(nq_r);
        let (xz, wz) = crate::basis::gauss_legendre(nq_z);
        let jr = 0.5 * (self.geometry.r_out - self.geometry.r_in);
        let jz = 0.5 * self.geometry.height;
        let mut rhs = DVector::zeros(self.state_dim());
        for (&a, &wa) in xr.iter().zip(&wr) {
            let r = self.radial.to_physical(a);
            for (&b, &wb) in xz.iter().zip(&wz) {
                let z = self.axial.to_physical(b);
                let w = wa * wb * jr * jz * r;
                let theta = field(r, z) - self.params.t_ambient;
                rhs += self.basis_row(r, z).transpose() * (w * theta);
            }
        }
        let mass = self.radial_ops.mass.kronecker(&self.axial_ops.mass);
        mass.cholesky().expect("mass matrix is SPD").solve(&rhs)
    }

    /// Absolute temperature on an `n_r_pts × n_z_pts` tensor grid spanning
    /// the whole domain.
    pub fn reconstruct_field(&self, state: &DVector<f64>, n_r_pts: usize, n_z_pts: usize) -> Result<Field> {
        if n_r_pts < 2 || n_z_pts < 2 {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: format!("need at least 2x2 points, got {n_r_pts}x{n_z_pts}"),
            });
        }
        if state.len() != self.state_dim() {
            return Err(Error::Dimension(format!(
                "state has {} entries, model has {}",
                state.len(),
                self.state_dim()
            )));
        }
        let r = linspace(self.geometry.r_in, self.geometry.r_out, n_r_pts);
        let z = linspace(0.0, self.geometry.height, n_z_pts);
        // Separable evaluation: T = Φr X Φzᵀ + T∞.
        let coeffs = DMatrix::from_row_slice(self.config.n_r, self.config.n_z, state.as_slice());
        let phi_r = DMatrix::from_fn(n_r_pts, self.config.n_r, |i, k| self.radial.eval(r[i])[k]);
        let phi_z = DMatrix::from_fn(n_z_pts, self.config.n_z, |j, k| self.axial.eval(z[j])[k]);
        let values = (phi_r * coeffs * phi_z.transpose()).add_scalar(self.params.t_ambient);
        Ok(Field { r, z, values })
    }
}
