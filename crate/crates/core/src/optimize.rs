//! Box-constrained Nelder–Mead with Latin-hypercube multi-start.
//!
//! The search runs on the unit cube; callers map it onto their parameter
//! box. Trial points are projected back onto the cube, and non-finite
//! objective values rank as +∞ so a failed evaluation simply loses.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when every vertex is within this distance of the best one.
    pub x_tol: f64,
    /// ... and the objective spread is below `f_tol · (|f_best| + 1e-12)`.
    pub f_tol: f64,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_evals: 1500, x_tol: 1e-7, f_tol: 1e-10, initial_step: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub iterations: usize,
}

fn clamp_unit(x: &mut [f64]) {
    for v in x {
        *v = v.clamp(0.0, 1.0);
    }
}

fn sanitize(f: f64) -> f64 {
    if f.is_nan() {
        f64::INFINITY
    } else {
        f
    }
}

/// Nelder–Mead on `[0, 1]^d` from `x0`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let d = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        sanitize(f(x))
    };
    let mut start = x0.to_vec();
    clamp_unit(&mut start);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let f0 = eval(&start, &mut evals);
    simplex.push((start.clone(), f0));
    for i in 0..d {
        let mut v = start.clone();
        // Step inward when the start sits near the upper face.
        v[i] += if v[i] + opts.initial_step <= 1.0 { opts.initial_step } else { -opts.initial_step };
        clamp_unit(&mut v);
        let fv = eval(&v, &mut evals);
        simplex.push((v, fv));
    }

    let mut iterations = 0;
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[d].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter < opts.x_tol && (worst - best).abs() <= opts.f_tol * (best.abs() + 1e-12) {
            break;
        }
        if diameter < 1e-3 * opts.x_tol {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|(v, _)| v[j]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid.iter().zip(&simplex[d].0).map(|(c, w)| c + t * (c - w)).collect();
            clamp_unit(&mut p);
            p
        };

        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < simplex[d].1 {
            let x = along(0.5);
            let fx = eval(&x, &mut evals);
            (x, fx)
        } else {
            let x = along(-0.5);
            let fx = eval(&x, &mut evals);
            (x, fx)
        };
        if fc < simplex[d].1.min(fr) {
            simplex[d] = (xc, fc);
            continue;
        }
        // Shrink towards the best vertex.
        let best_x = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let mut v: Vec<f64> = best_x.iter().zip(&vertex.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
            clamp_unit(&mut v);
            let fv = eval(&v, &mut evals);
            *vertex = (v, fv);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    Minimum { x, f, evals, iterations }
}

/// Stratified sample of `n` points in `[0, 1]^d`.
pub fn latin_hypercube<R: Rng>(n: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; d]; n];
    for j in 0..d {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (i, s) in strata.into_iter().enumerate() {
            points[i][j] = (s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    points
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiStartOptions {
    pub seed: u64,
    /// Latin-hypercube points evaluated before any local search.
    pub n_samples: usize,
    /// Local searches started from the best samples.
    pub n_local: usize,
    /// Extra Nelder–Mead restarts from each local result.
    pub restarts: usize,
    pub local: NelderMeadOptions,
}

impl Default for MultiStartOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            n_samples: 16,
            n_local: 2,
            restarts: 2,
            local: NelderMeadOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiStartResult {
    pub best: Minimum,
    /// Objective at every Latin-hypercube sample.
    pub sample_values: Vec<f64>,
    pub total_evals: usize,
    pub total_iterations: usize,
}

/// Global-ish minimisation over `[0, 1]^d`. Deterministic in `opts.seed`.
/// The returned point is never worse than any sample evaluated.
pub fn minimize_box<F: FnMut(&[f64]) -> f64>(mut f: F, d: usize, opts: &MultiStartOptions) -> MultiStartResult {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let samples = latin_hypercube(opts.n_samples.max(1), d, &mut rng);
    let values: Vec<f64> = samples.iter().map(|x| sanitize(f(x))).collect();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|a, b| values[*a].total_cmp(&values[*b]));

    let mut best = Minimum { x: samples[order[0]].clone(), f: values[order[0]], evals: 0, iterations: 0 };
    let mut total_evals = samples.len();
    let mut total_iterations = 0;
    for &idx in order.iter().take(opts.n_local.max(1)) {
        if !values[idx].is_finite() {
            continue;
        }
        let mut m = nelder_mead(&mut f, &samples[idx], &opts.local);
        total_evals += m.evals;
        total_iterations += m.iterations;
        for _ in 0..opts.restarts {
            let again = nelder_mead(&mut f, &m.x, &NelderMeadOptions { initial_step: 0.02, ..opts.local });
            total_evals += again.evals;
            total_iterations += again.iterations;
            if again.f <= m.f {
                m = again;
            }
        }
        if m.f < best.f {
            best = m;
        }
    }
    best.evals = total_evals;
    best.iterations = total_iterations;
    MultiStartResult { best, sample_values: values, total_evals, total_iterations }
}
