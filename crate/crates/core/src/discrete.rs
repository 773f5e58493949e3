//! Exact zero-order-hold discretization and open-loop simulation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::StateSpaceModel;

/// `x[k+1] = Ā x[k] + B̄ u[k]`.
#[derive(Debug, Clone)]
pub struct DiscreteStateSpace {
    pub a_bar: DMatrix<f64>,
    pub b_bar: DMatrix<f64>,
    pub dt: f64,
}

impl DiscreteStateSpace {
    /// Zero-order-hold discretization of `ẋ = F x + G u`.
    ///
    /// Both blocks come from one exponential of the augmented generator
    /// `[[F, G], [0, 0]]·dt`, whose upper-right block is
    /// `∫₀^dt exp(F s) ds · G`. This equals `F⁻¹(Ā − I)G` whenever `F` is
    /// invertible and stays defined when it is not.
    pub fn from_continuous(f: &DMatrix<f64>, g: &DMatrix<f64>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("time step must be positive, got {dt}"),
            });
        }
        let n = f.nrows();
        if f.ncols() != n || g.nrows() != n {
            return Err(Error::Dimension(format!(
                "F is {}x{}, G is {}x{}",
                f.nrows(),
                f.ncols(),
                g.nrows(),
                g.ncols()
            )));
        }
        let m = g.ncols();
        let mut aug = DMatrix::zeros(n + m, n + m);
        aug.view_mut((0, 0), (n, n)).copy_from(&(f * dt));
        aug.view_mut((0, n), (n, m)).copy_from(&(g * dt));
        let phi = aug.exp();
        Ok(Self {
            a_bar: phi.view((0, 0), (n, n)).into_owned(),
            b_bar: phi.view((0, n), (n, m)).into_owned(),
            dt,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a_bar.nrows()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(x.len());
        self.step_into(x, u, &mut out);
        out
    }

    /// Allocation-free [`step`](Self::step); `out` must not alias `x`.
    pub fn step_into(&self, x: &DVector<f64>, u: &DVector<f64>, out: &mut DVector<f64>) {
        out.gemv(1.0, &self.a_bar, x, 0.0);
        out.gemv(1.0, &self.b_bar, u, 1.0);
    }

    /// Largest eigenvalue modulus of `Ā`.
    pub fn spectral_radius(&self) -> f64 {
        self.a_bar
            .complex_eigenvalues()
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }

    /// States `x[0..=N]` for inputs `u[0..N]`, `x[0] = x0`.
    pub fn simulate(&self, x0: &DVector<f64>, inputs: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let mut states = Vec::with_capacity(inputs.len() + 1);
        states.push(x0.clone());
        for u in inputs {
            let next = self.step(states.last().expect("non-empty"), u);
            states.push(next);
        }
        states
    }
}

/// Discretize the reduced thermal model with sampling time `dt`.
pub fn discretize(model: &StateSpaceModel, dt: f64) -> Result<DiscreteStateSpace> {
    DiscreteStateSpace::from_continuous(&model.system_matrix(), &model.input_matrix(), dt)
}

/// Open-loop response to a volumetric heat series `q[0..N]` (W·m⁻³), held
/// constant over each step. Returns `N + 1` states.
pub fn simulate_heat(
    disc: &DiscreteStateSpace,
    x0: &DVector<f64>,
    q: &[f64],
) -> Vec<DVector<f64>> {
    let inputs: Vec<_> = q.iter().map(|&q| StateSpaceModel::input(q)).collect();
    disc.simulate(x0, &inputs)
}

/// Outputs `C x[k] + offset` for `k = 0..=N` under a heat series, without
/// storing the states. Bitwise identical to mapping [`simulate_heat`].
pub fn simulate_heat_outputs(
    disc: &DiscreteStateSpace,
    x0: &DVector<f64>,
    q: &[f64],
    outputs: &crate::model::OutputMap,
) -> Vec<DVector<f64>> {
    let mut x = x0.clone();
    let mut next = DVector::zeros(x.len());
    let mut u = StateSpaceModel::input(0.0);
    let mut ys = Vec::with_capacity(q.len() + 1);
    ys.push(outputs.apply(&x));
    for &qk in q {
        u[0] = qk;
        disc.step_into(&x, &u, &mut next);
        std::mem::swap(&mut x, &mut next);
        ys.push(outputs.apply(&x));
    }
    ys
}
