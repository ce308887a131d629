//! Box-constrained Levenberg-Marquardt for small dense parameter vectors.
//!
//! Minimizes `sum_i r_i(x)^2` subject to `lo <= x <= hi`. Each iteration
//! freezes variables sitting on a bound whose gradient points outward,
//! solves the damped normal equations for the rest and projects the step
//! back onto the box. Damping follows Nielsen's gain-ratio update.

use nalgebra::{SMatrix, SVector};

/// Normal-equation data at one parameter vector.
#[derive(Debug, Clone)]
pub struct Linearization<const N: usize> {
    /// `sum r_i^2`.
    pub cost: f64,
    /// `J^T J`.
    pub jtj: SMatrix<f64, N, N>,
    /// `J^T r`.
    pub jtr: SVector<f64, N>,
}

pub trait LeastSquaresProblem<const N: usize> {
    fn cost(&self, x: &[f64; N]) -> f64;

    fn linearize(&self, x: &[f64; N]) -> Linearization<N>;

    /// Maps a parameter vector to its canonical form (e.g. wrapping angles).
    fn normalize(&self, _x: &mut [f64; N]) {}
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iters: usize,
    /// Stop when an accepted step reduces the cost by less than
    /// `ftol * cost`.
    pub ftol: f64,
    /// Stop when `|step| <= xtol * (|x| + xtol)`.
    pub xtol: f64,
    /// Stop when the projected gradient's max-norm falls below this.
    pub gtol: f64,
    /// Initial damping relative to the largest diagonal entry of `J^T J`.
    pub tau: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iters: 60,
            ftol: 1e-10,
            xtol: 1e-10,
            gtol: 1e-14,
            tau: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    CostReduction,
    StepSize,
    DampingExhausted,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LmReport<const N: usize> {
    pub x: [f64; N],
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonFiniteStart;

fn project<const N: usize>(x: &mut [f64; N], lo: &[f64; N], hi: &[f64; N]) {
    for j in 0..N {
        x[j] = x[j].clamp(lo[j], hi[j]);
    }
}

/// Runs the solver from `x0` (projected onto the box first).
///
/// Returns `Err` only if the cost at the start point is not finite; a step
/// that produces non-finite residuals is treated as a rejected step.
pub fn minimize<const N: usize, P: LeastSquaresProblem<N>>(
    problem: &P,
    x0: [f64; N],
    lo: &[f64; N],
    hi: &[f64; N],
    opts: &LmOptions,
) -> Result<LmReport<N>, NonFiniteStart> {
    let mut x = x0;
    project(&mut x, lo, hi);
    problem.normalize(&mut x);
    let mut lin = problem.linearize(&x);
    if !lin.cost.is_finite() || lin.jtr.iter().any(|v| !v.is_finite()) {
        return Err(NonFiniteStart);
    }
    let initial_cost = lin.cost;
    let max_diag = (0..N).map(|j| lin.jtj[(j, j)]).fold(0.0, f64::max);
    let mut lambda = opts.tau * max_diag.max(1e-300);
    let mut nu = 2.0;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    'outer: while iterations < opts.max_iters {
        iterations += 1;
        let g = lin.jtr;
        let free: [bool; N] = std::array::from_fn(|j| {
            let at_lo = x[j] <= lo[j] && g[j] > 0.0;
            let at_hi = x[j] >= hi[j] && g[j] < 0.0;
            !(at_lo || at_hi)
        });
        let gmax = (0..N).filter(|&j| free[j]).map(|j| g[j].abs()).fold(0.0, f64::max);
        if gmax <= opts.gtol {
            termination = Termination::Gradient;
            break;
        }
        let diag_floor = 1e-12 * (0..N).map(|j| lin.jtj[(j, j)]).fold(0.0, f64::max).max(1e-300);

        loop {
            let mut a = lin.jtj;
            let mut b = -g;
            for j in 0..N {
                if free[j] {
                    a[(j, j)] += lambda * lin.jtj[(j, j)].max(diag_floor);
                } else {
                    for k in 0..N {
                        a[(j, k)] = 0.0;
                        a[(k, j)] = 0.0;
                    }
                    a[(j, j)] = 1.0;
                    b[j] = 0.0;
                }
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&b),
                None => {
                    lambda *= nu;
                    nu *= 2.0;
                    if lambda > 1e20 {
                        termination = Termination::DampingExhausted;
                        break 'outer;
                    }
                    continue;
                }
            };
            let mut x_new = x;
            for j in 0..N {
                x_new[j] += step[j];
            }
            project(&mut x_new, lo, hi);
            let taken = SVector::<f64, N>::from_fn(|j, _| x_new[j] - x[j]);
            let step_norm = taken.norm();
            let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if step_norm <= opts.xtol * (x_norm + opts.xtol) {
                termination = Termination::StepSize;
                break 'outer;
            }
            problem.normalize(&mut x_new);
            let cost_new = problem.cost(&x_new);
            // linear model: |r + J d|^2 = cost + 2 d.g + d' JtJ d
            let predicted = -(2.0 * taken.dot(&g) + (taken.transpose() * lin.jtj * taken)[(0, 0)]);
            if cost_new.is_finite() && cost_new < lin.cost {
                let rho = if predicted > 0.0 {
                    (lin.cost - cost_new) / predicted
                } else {
                    1.0
                };
                lambda *= (1.0 / 3.0f64).max(1.0 - (2.0 * rho - 1.0).powi(3));
                nu = 2.0;
                let reduction = lin.cost - cost_new;
                let prev_cost = lin.cost;
                x = x_new;
                lin = problem.linearize(&x);
                if reduction <= opts.ftol * prev_cost {
                    termination = Termination::CostReduction;
                    break 'outer;
                }
                break;
            }
            lambda *= nu;
            nu *= 2.0;
            if lambda > 1e20 || !lambda.is_finite() {
                termination = Termination::DampingExhausted;
                break 'outer;
            }
        }
    }

    Ok(LmReport {
        x,
        cost: lin.cost,
        initial_cost,
        iterations,
        termination,
    })
}
