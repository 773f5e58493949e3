//! Legendre modal basis on a mapped interval and the Gauss–Legendre rule
//! used to integrate it exactly.

use nalgebra::{DMatrix, DVector};

/// Values `P_0(x)..P_{n-1}(x)` and their derivatives `P_k'(x)`.
pub fn legendre(n: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    let mut p = vec![0.0; n];
    let mut dp = vec![0.0; n];
    if n == 0 {
        return (p, dp);
    }
    p[0] = 1.0;
    if n > 1 {
        p[1] = x;
        dp[1] = 1.0;
    }
    for k in 1..n.saturating_sub(1) {
        let kf = k as f64;
        p[k + 1] = ((2.0 * kf + 1.0) * x * p[k] - kf * p[k - 1]) / (kf + 1.0);
        dp[k + 1] = dp[k - 1] + (2.0 * kf + 1.0) * p[k];
    }
    (p, dp)
}

/// Gauss–Legendre nodes and weights on [-1, 1]; exact for polynomials of
/// degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dpn = 1.0;
        for _ in 0..100 {
            let (p, dp) = legendre(n + 1, x);
            let step = p[n] / dp[n];
            x -= step;
            dpn = dp[n];
            if step.abs() < 1e-16 {
                let (_, dp) = legendre(n + 1, x);
                dpn = dp[n];
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dpn * dpn);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// One-dimensional Legendre basis mapped onto `[lo, hi]`.
///
/// With `radial` set, every integral carries the cylindrical weight `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis1d {
    pub lo: f64,
    pub hi: f64,
    pub modes: usize,
    pub radial: bool,
}

/// Integrals of one direction of the tensor basis.
#[derive(Debug, Clone)]
pub struct Operators1d {
    /// ∫ φᵢ φⱼ w
    pub mass: DMatrix<f64>,
    /// ∫ φᵢ' φⱼ' w
    pub stiffness: DMatrix<f64>,
    /// ∫ φᵢ w
    pub load: DVector<f64>,
    /// φᵢ(lo)
    pub at_lo: DVector<f64>,
    /// φᵢ(hi)
    pub at_hi: DVector<f64>,
    /// ∫ w
    pub measure: f64,
}

impl Basis1d {
    pub fn new(lo: f64, hi: f64, modes: usize, radial: bool) -> Self {
        Self { lo, hi, modes, radial }
    }

    fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn to_reference(&self, x: f64) -> f64 {
        (2.0 * (x - self.lo) / (self.hi - self.lo) - 1.0).clamp(-1.0, 1.0)
    }

    pub fn to_physical(&self, xi: f64) -> f64 {
        self.lo + (xi + 1.0) * self.half_width()
    }

    /// Basis values at physical coordinate `x`.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        legendre(self.modes, self.to_reference(x)).0
    }

    /// Products reach degree `2(modes-1) + 1` with the radial weight; two
    /// extra nodes keep every assembled integral exact.
    pub fn quadrature_order(&self) -> usize {
        self.modes + 2
    }

    pub fn operators(&self) -> Operators1d {
        let n = self.modes;
        let (nodes, weights) = gauss_legendre(self.quadrature_order());
        let jac = self.half_width();
        let mut mass = DMatrix::zeros(n, n);
        let mut stiffness = DMatrix::zeros(n, n);
        let mut load = DVector::zeros(n);
        let mut measure = 0.0;
        for (&xi, &w) in nodes.iter().zip(&weights) {
            let x = self.to_physical(xi);
            let wt = w * jac * if self.radial { x } else { 1.0 };
            let (p, dp) = legendre(n, xi);
            measure += wt;
            for i in 0..n {
                load[i] += wt * p[i];
                for j in 0..n {
                    mass[(i, j)] += wt * p[i] * p[j];
                    stiffness[(i, j)] += wt * dp[i] * dp[j] / (jac * jac);
                }
            }
        }
        let (lo, _) = legendre(n, -1.0);
        let (hi, _) = legendre(n, 1.0);
        Operators1d {
            mass,
            stiffness,
            load,
            at_lo: DVector::from_vec(lo),
            at_hi: DVector::from_vec(hi),
            measure,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_known_values() {
        let (p, dp) = legendre(5, 0.5);
        assert!((p[2] - (3.0 * 0.25 - 1.0) / 2.0).abs() < 1e-15);
        assert!((p[3] - (5.0 * 0.125 - 3.0 * 0.5) / 2.0).abs() < 1e-15);
        assert!((dp[2] - 3.0 * 0.5).abs() < 1e-15);
        assert!((dp[4] - (35.0 * 4.0 * 0.125 - 30.0 * 2.0 * 0.5) / 8.0).abs() < 1e-14);
        let (p, _) = legendre(6, 1.0);
        assert!(p.iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn gauss_rule_integrates_monomials_exactly() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg} q={q}");
            }
        }
    }

    #[test]
    fn radial_operators_match_closed_forms() {
        let b = Basis1d::new(0.001, 0.016, 4, true);
        let ops = b.operators();
        let measure = 0.5 * (0.016f64.powi(2) - 0.001f64.powi(2));
        assert!((ops.measure - measure).abs() < 1e-18);
        assert!((ops.load[0] - measure).abs() < 1e-18);
        assert!((ops.mass[(0, 0)] - measure).abs() < 1e-18);
        // Constants have no gradient.
        assert!(ops.stiffness.row(0).iter().all(|v| v.abs() < 1e-12));
        assert!(ops.mass.clone().cholesky().is_some());
    }

    #[test]
    fn axial_mass_is_diagonal() {
        let b = Basis1d::new(0.0, 0.1, 5, false);
        let ops = b.operators();
        for i in 0..5 {
            for j in 0..5 {
                let expected = if i == j { 0.05 * 2.0 / (2.0 * i as f64 + 1.0) } else { 0.0 };
                assert!((ops.mass[(i, j)] - expected).abs() < 1e-15);
            }
        }
    }
}
