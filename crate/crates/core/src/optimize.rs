//! Damped Gauss-Newton (Levenberg-Marquardt) least squares.
//!
//! Minimizes `0.5 * |r(x)|²` for a residual vector `r` with an analytic
//! Jacobian. A trial step solves `(JᵀJ + λ·D) δ = -Jᵀr` where `D` is the
//! diagonal of `JᵀJ`. Accepted steps (strict cost decrease) divide `λ` by 3,
//! rejected ones multiply it by 10, so the cost never increases between
//! accepted iterates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A residual vector with its Jacobian.
pub trait LeastSquaresProblem: Sync {
    fn parameter_count(&self) -> usize;

    fn residuals(&self, params: &[f64]) -> Vec<f64>;

    /// Row-major `m x n` Jacobian of [`residuals`](Self::residuals).
    fn jacobian(&self, params: &[f64]) -> DMatrix<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Converged when an accepted step lowers the cost by less than this fraction.
    pub relative_tolerance: f64,
    /// Converged when the infinity norm of the gradient falls below this.
    pub gradient_tolerance: f64,
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            relative_tolerance: 1e-10,
            gradient_tolerance: 1e-12,
            initial_damping: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 3.0,
        }
    }
}

/// Outcome of a converged minimization.
#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: Vec<f64>,
    /// Final `0.5 * |r|²`.
    pub cost: f64,
    pub iterations: usize,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
    /// `JᵀJ` at the solution.
    pub normal_matrix: DMatrix<f64>,
    pub residual_count: usize,
}

/// Damping beyond which no step can make progress; treated as a stationary point.
const MAX_DAMPING: f64 = 1e16;
/// Relative singular value below which the column-scaled Jacobian is rank-deficient.
const RANK_TOLERANCE: f64 = 1e-10;

fn cost_of(residuals: &[f64]) -> f64 {
    0.5 * residuals.iter().map(|r| r * r).sum::<f64>()
}

/// Fails with `InsufficientData` when the Jacobian has fewer rows than
/// columns, an all-zero column, or a column-scaled singular value spread
/// beyond `1e10`.
pub fn check_rank(jacobian: &DMatrix<f64>) -> Result<()> {
    let (m, n) = jacobian.shape();
    if m < n {
        return Err(Error::InsufficientData(format!("{m} residuals for {n} parameters")));
    }
    let mut scaled = jacobian.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        let norm = col.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InsufficientData(format!("parameter {j} is unconstrained")));
        }
        col /= norm;
    }
    let sv = scaled.singular_values();
    if sv.min() < RANK_TOLERANCE * sv.max() {
        return Err(Error::InsufficientData("normal equations are rank-deficient".into()));
    }
    Ok(())
}

pub fn minimize<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    initial: &[f64],
    options: &LmOptions,
) -> Result<LmReport> {
    let n = problem.parameter_count();
    if initial.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} initial values for {n} parameters",
            initial.len()
        )));
    }
    let mut x = initial.to_vec();
    let mut r = problem.residuals(&x);
    let mut cost = cost_of(&r);
    if !cost.is_finite() {
        return Err(Error::InvalidParameter("non-finite residual at the initial point".into()));
    }
    let mut jac = problem.jacobian(&x);
    check_rank(&jac)?;

    let mut lambda = options.initial_damping;
    let mut history = vec![cost];
    let mut iterations = 0;

    let finish = |x: Vec<f64>, cost, iterations, history, jac: &DMatrix<f64>| LmReport {
        params: x,
        cost,
        iterations,
        cost_history: history,
        normal_matrix: jac.transpose() * jac,
        residual_count: jac.nrows(),
    };

    loop {
        let jt = jac.transpose();
        let normal = &jt * &jac;
        let gradient = &jt * DVector::from_column_slice(&r);
        if cost == 0.0 || gradient.amax() < options.gradient_tolerance {
            return Ok(finish(x, cost, iterations, history, &jac));
        }
        if iterations >= options.max_iterations {
            return Err(Error::NoConvergence { iterations });
        }
        iterations += 1;

        loop {
            let mut damped = normal.clone();
            for j in 0..n {
                let d = normal[(j, j)].max(f64::MIN_POSITIVE);
                damped[(j, j)] += lambda * d;
            }
            let step = damped.cholesky().map(|c| c.solve(&(-&gradient)));
            let Some(step) = step else {
                lambda *= options.damping_increase;
                if lambda > MAX_DAMPING {
                    return Ok(finish(x, cost, iterations, history, &jac));
                }
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let trial_r = problem.residuals(&trial);
            let trial_cost = cost_of(&trial_r);
            if trial_cost.is_finite() && trial_cost < cost {
                let relative = (cost - trial_cost) / cost;
                x = trial;
                r = trial_r;
                cost = trial_cost;
                history.push(cost);
                lambda = (lambda / options.damping_decrease).max(1e-15);
                jac = problem.jacobian(&x);
                if relative < options.relative_tolerance {
                    return Ok(finish(x, cost, iterations, history, &jac));
                }
                break;
            }
            lambda *= options.damping_increase;
            if lambda > MAX_DAMPING {
                return Ok(finish(x, cost, iterations, history, &jac));
            }
        }
    }
}

impl LmReport {
    /// Diagonal of `σ² (JᵀJ)⁻¹` with `σ² = |r|² / (m - n)`; zeros if the
    /// normal matrix cannot be inverted or there are no spare degrees of freedom.
    pub fn covariance_diagonal(&self) -> Vec<f64> {
        let n = self.params.len();
        let dof = self.residual_count.saturating_sub(n);
        let Some(inv) = (dof > 0).then(|| self.normal_matrix.clone().try_inverse()).flatten() else {
            return vec![0.0; n];
        };
        let variance = 2.0 * self.cost / dof as f64;
        (0..n).map(|j| variance * inv[(j, j)]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y = a * exp(b * t)
    struct Exponential {
        t: Vec<f64>,
        y: Vec<f64>,
    }

    impl LeastSquaresProblem for Exponential {
        fn parameter_count(&self) -> usize {
            2
        }

        fn residuals(&self, p: &[f64]) -> Vec<f64> {
            self.t.iter().zip(&self.y).map(|(t, y)| p[0] * (p[1] * t).exp() - y).collect()
        }

        fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
            DMatrix::from_fn(self.t.len(), 2, |i, j| {
                let e = (p[1] * self.t[i]).exp();
                if j == 0 {
                    e
                } else {
                    p[0] * self.t[i] * e
                }
            })
        }
    }

    #[test]
    fn recovers_exponential() {
        let t: Vec<f64> = (0..20).map(|k| k as f64 * 0.1).collect();
        let y = t.iter().map(|t| 2.5 * (-1.3 * t).exp()).collect();
        let problem = Exponential { t, y };
        let report = minimize(&problem, &[1.0, 0.0], &LmOptions::default()).unwrap();
        assert!((report.params[0] - 2.5).abs() < 1e-8);
        assert!((report.params[1] + 1.3).abs() < 1e-8);
        assert!(report.cost_history.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn rank_deficiency_detected() {
        let problem = Exponential { t: vec![0.0; 5], y: vec![1.0; 5] };
        assert!(matches!(
            minimize(&problem, &[1.0, 0.5], &LmOptions::default()),
            Err(Error::InsufficientData(_))
        ));
        let short = Exponential { t: vec![0.3], y: vec![1.0] };
        assert!(matches!(
            minimize(&short, &[1.0, 0.5], &LmOptions::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn iteration_cap() {
        let t: Vec<f64> = (0..20).map(|k| k as f64 * 0.1).collect();
        let y = t.iter().map(|t| 2.5 * (-1.3 * t).exp()).collect();
        let problem = Exponential { t, y };
        let options = LmOptions { max_iterations: 1, ..LmOptions::default() };
        assert!(matches!(
            minimize(&problem, &[1.0, 0.0], &options),
            Err(Error::NoConvergence { iterations: 1 })
        ));
    }
}
