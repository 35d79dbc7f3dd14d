//! Derivative-free minimization: Nelder–Mead with dimension-adaptive
//! coefficients and restarts.

use serde::{Deserialize, Serialize};

/// Options for [`nelder_mead`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NelderMeadOptions {
    /// Total function-evaluation budget across all restarts.
    pub max_evals: usize,
    /// Converged when best and worst vertex differ by less than this.
    pub ftol: f64,
    /// ... and the simplex diameter is below this.
    pub xtol: f64,
    pub initial_step: f64,
    /// Fresh simplices built around the incumbent after convergence.
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_evals: 4000,
            ftol: 1e-6,
            xtol: 1e-5,
            initial_step: 0.3,
            restarts: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Best value after each iteration.
    pub trace: Vec<f64>,
}

/// Minimizes `f` from `x0`. Non-finite values are treated as `+∞`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum {
    let d = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut best_x = x0.to_vec();
    let mut best_f = eval(x0, &mut evals);
    let mut trace = vec![best_f];
    let mut iterations = 0;
    let mut converged = false;
    if d == 0 {
        return Minimum {
            x: best_x,
            f: best_f,
            evals,
            iterations,
            converged: true,
            trace,
        };
    }
    let df = d as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / df, 0.75 - 0.5 / df, 1.0 - 1.0 / df);

    for round in 0..=opts.restarts {
        let start_f = best_f;
        let step = opts.initial_step * 0.5f64.powi(round as i32);
        let mut simplex: Vec<(Vec<f64>, f64)> = vec![(best_x.clone(), best_f)];
        for j in 0..d {
            let mut x = best_x.clone();
            x[j] += if x[j].abs() > 1e-8 { step * x[j].abs().max(1.0) } else { step };
            let fx = eval(&x, &mut evals);
            simplex.push((x, fx));
        }
        converged = false;
        while evals < opts.max_evals {
            iterations += 1;
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            trace.push(simplex[0].1);
            let spread = simplex[d].1 - simplex[0].1;
            let diameter = simplex[1..]
                .iter()
                .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            if spread.abs() <= opts.ftol && diameter <= opts.xtol.max(1e-12) || (spread == 0.0 && simplex[0].1.is_infinite()) {
                converged = true;
                break;
            }
            let centroid: Vec<f64> = (0..d).map(|j| simplex[..d].iter().map(|(x, _)| x[j]).sum::<f64>() / df).collect();
            let worst = simplex[d].clone();
            let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect() };
            let xr = along(alpha);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = along(alpha * beta);
                let fe = eval(&xe, &mut evals);
                simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[d - 1].1 {
                simplex[d] = (xr, fr);
            } else {
                let (xc, fc) = if fr < worst.1 {
                    let xc = along(alpha * gamma);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                } else {
                    let xc = along(-gamma);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                };
                if fc < fr.min(worst.1) {
                    simplex[d] = (xc, fc);
                } else {
                    // shrink towards the best vertex
                    let x0 = simplex[0].0.clone();
                    for v in simplex.iter_mut().skip(1) {
                        let x: Vec<f64> = x0.iter().zip(&v.0).map(|(b, x)| b + delta * (x - b)).collect();
                        let fx = eval(&x, &mut evals);
                        *v = (x, fx);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[0].1 < best_f {
            best_f = simplex[0].1;
            best_x = simplex[0].0.clone();
        }
        if evals >= opts.max_evals {
            converged = false;
            break;
        }
        if round > 0 && start_f - best_f < opts.ftol {
            break;
        }
    }
    trace.push(best_f);
    Minimum {
        x: best_x,
        f: best_f,
        evals,
        iterations,
        converged,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions {
            ftol: 1e-14,
            xtol: 1e-9,
            max_evals: 10_000,
            ..Default::default()
        };
        let m = nelder_mead(f, &[-1.2, 1.0], &opts);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{:?}", m.x);
    }

    #[test]
    fn higher_dimensional_quadratic() {
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * (v - 0.5).powi(2)).sum::<f64>();
        let m = nelder_mead(f, &[0.0; 8], &NelderMeadOptions::default());
        assert!(m.f < 1e-6, "{}", m.f);
    }

    #[test]
    fn infinite_region_is_avoided() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 2.0).powi(2) };
        let m = nelder_mead(f, &[0.5], &NelderMeadOptions::default());
        assert!((m.x[0] - 2.0).abs() < 1e-3);
    }

    #[test]
    fn never_worse_than_start() {
        let f = |x: &[f64]| (x[0] * 3.0).sin() + 0.1 * x[1] * x[1];
        let x0 = [0.3, -0.2];
        let m = nelder_mead(f, &x0, &NelderMeadOptions::default());
        assert!(m.f <= f(&x0));
    }
}
