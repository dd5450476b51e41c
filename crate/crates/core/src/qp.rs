//! Dense inequality-constrained QP solved by Hildreth's procedure.
//!
//! Minimizes `0.5 x'Ex + x'f` subject to `Mx <= gamma` by cyclic coordinate
//! ascent on the dual: every multiplier is updated in turn using the latest
//! values of the others and clipped at zero.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Sweep cap used by the controller.
pub const DEFAULT_MAX_SWEEPS: usize = 38;
/// Stop when the squared change of the multipliers over one sweep drops below this.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Constraint slack tolerated when checking feasibility.
pub const FEAS_TOL: f64 = 1e-9;
/// Dual diagonal entries below this are skipped.
pub const PIVOT_EPS: f64 = 1e-12;
/// Relative duality-gap tolerance certifying convergence: the gap bounds the
/// objective error of a feasible iterate, so a small gap pins `x` down.
pub const GAP_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    /// Symmetric positive definite Hessian `E`.
    pub hessian: DMatrix<f64>,
    /// Linear term `f`.
    pub linear: DVector<f64>,
    /// Constraint matrix `M`, one row per inequality.
    pub constraints: DMatrix<f64>,
    /// Right-hand side `gamma`.
    pub bounds: DVector<f64>,
}

impl QpProblem {
    pub fn unconstrained(hessian: DMatrix<f64>, linear: DVector<f64>) -> Self {
        let n = linear.len();
        Self {
            hessian,
            linear,
            constraints: DMatrix::zeros(0, n),
            bounds: DVector::zeros(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.bounds.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + x.dot(&self.linear)
    }

    /// Largest `(Mx - gamma)_i`, or `-inf` without constraints.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        (&self.constraints * x - &self.bounds)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn check(&self) -> Result<()> {
        let n = self.dim();
        let c = self.num_constraints();
        if self.hessian.shape() != (n, n) {
            return Err(Error::Config(format!(
                "hessian is {:?}, expected ({n}, {n})",
                self.hessian.shape()
            )));
        }
        if self.constraints.shape() != (c, n) {
            return Err(Error::Config(format!(
                "constraint matrix is {:?}, expected ({c}, {n})",
                self.constraints.shape()
            )));
        }
        let finite = self.hessian.iter().all(|v| v.is_finite())
            && self.linear.iter().all(|v| v.is_finite())
            && self.constraints.iter().all(|v| v.is_finite())
            && self.bounds.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("QP data"));
        }
        let asym = (&self.hessian - self.hessian.transpose()).amax();
        if asym > SYMMETRY_TOL * self.hessian.amax().max(1.0) {
            return Err(Error::Solver(format!("hessian is not symmetric (max diff {asym:e})")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Dual multipliers, elementwise nonnegative.
    pub lambda: DVector<f64>,
    /// Full sweeps over the constraints; zero when the unconstrained optimum is feasible.
    pub iterations: usize,
    pub converged: bool,
    /// `max_i (Mx - gamma)_i`; `-inf` without constraints.
    pub max_violation: f64,
}

impl QpSolution {
    pub fn any_active(&self) -> bool {
        self.lambda.iter().any(|&l| l > 0.0)
    }
}

fn factor(hessian: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(hessian.clone())
        .ok_or_else(|| Error::Solver("hessian is not positive definite".into()))
}

/// Primal feasible to [`FEAS_TOL`] with duality gap `sum lambda_i (gamma - Mx)_i`
/// within [`GAP_TOL`] relative to the objective.
fn certified(problem: &QpProblem, x: &DVector<f64>, lambda: &DVector<f64>) -> bool {
    let slack = &problem.bounds - &problem.constraints * x;
    if slack.min() < -FEAS_TOL {
        return false;
    }
    let gap: f64 = lambda.iter().zip(slack.iter()).map(|(l, s)| (l * s).abs()).sum();
    gap <= GAP_TOL * (1.0 + problem.objective(x).abs())
}

/// Solves the QP with at most `max_sweeps` Hildreth sweeps.
///
/// The unconstrained minimizer is returned directly when it already
/// satisfies every constraint. Otherwise the dual is iterated until the
/// squared multiplier change of a sweep falls below `tol` and the primal
/// point is feasible with a negligible duality gap; when the cap is hit
/// first the last iterate is returned with `converged = false`.
pub fn solve_hildreth(problem: &QpProblem, max_sweeps: usize, tol: f64) -> Result<QpSolution> {
    problem.check()?;
    let chol = factor(&problem.hessian)?;
    let m = &problem.constraints;
    let c = problem.num_constraints();

    let e_inv_f = chol.solve(&problem.linear);
    let x0 = -&e_inv_f;
    let viol0 = problem.max_violation(&x0);
    if c == 0 || viol0 <= FEAS_TOL {
        return Ok(QpSolution {
            x: x0,
            lambda: DVector::zeros(c),
            iterations: 0,
            converged: true,
            max_violation: viol0,
        });
    }

    // H = M E^-1 M', K = gamma + M E^-1 f
    let e_inv_mt = chol.solve(&m.transpose());
    let h = m * &e_inv_mt;
    let k = &problem.bounds + m * &e_inv_f;
    if !(h.iter().all(|v| v.is_finite()) && k.iter().all(|v| v.is_finite())) {
        return Err(Error::NonFinite("Hildreth dual data"));
    }

    let primal = |lambda: &DVector<f64>| -(&e_inv_f + &e_inv_mt * lambda);

    let mut lambda = DVector::<f64>::zeros(c);
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut change = 0.0;
        for i in 0..c {
            let hii = h[(i, i)];
            if hii.abs() < PIVOT_EPS {
                continue;
            }
            let mut w = k[i];
            for j in 0..c {
                if j != i {
                    w += h[(i, j)] * lambda[j];
                }
            }
            let updated = (-w / hii).max(0.0);
            change += (updated - lambda[i]).powi(2);
            lambda[i] = updated;
        }
        if !change.is_finite() {
            return Err(Error::NonFinite("Hildreth multipliers"));
        }
        if change < tol && certified(problem, &primal(&lambda), &lambda) {
            converged = true;
            break;
        }
    }

    let x = primal(&lambda);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Hildreth primal solution"));
    }
    let max_violation = problem.max_violation(&x);
    Ok(QpSolution {
        x,
        lambda,
        iterations: sweeps,
        converged,
        max_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(e: f64, f: f64, m: Option<(f64, f64)>) -> QpProblem {
        let mut p = QpProblem::unconstrained(DMatrix::from_element(1, 1, e), DVector::from_element(1, f));
        if let Some((row, g)) = m {
            p.constraints = DMatrix::from_element(1, 1, row);
            p.bounds = DVector::from_element(1, g);
        }
        p
    }

    #[test]
    fn unconstrained_minimum() {
        let sol = solve_hildreth(&scalar(1.0, -1.0, None), 38, DEFAULT_TOL).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-15);
        assert_eq!(sol.iterations, 0);
        assert!(sol.converged);
    }

    #[test]
    fn single_active_bound() {
        let sol = solve_hildreth(&scalar(1.0, -1.0, Some((1.0, 0.5))), 38, DEFAULT_TOL).unwrap();
        assert!((sol.x[0] - 0.5).abs() < 1e-12);
        assert!((sol.lambda[0] - 0.5).abs() < 1e-12);
        assert!(sol.converged);
        assert!(sol.any_active());
    }

    #[test]
    fn inactive_bound_exits_early() {
        let sol = solve_hildreth(&scalar(1.0, -1.0, Some((1.0, 2.0))), 38, DEFAULT_TOL).unwrap();
        assert_eq!(sol.iterations, 0);
        assert_eq!(sol.lambda[0], 0.0);
    }

    #[test]
    fn rejects_indefinite_and_asymmetric() {
        assert!(matches!(
            solve_hildreth(&scalar(-1.0, 0.0, None), 38, DEFAULT_TOL),
            Err(Error::Solver(_))
        ));
        let p = QpProblem::unconstrained(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
            DVector::zeros(2),
        );
        assert!(solve_hildreth(&p, 38, DEFAULT_TOL).is_err());
        let nan = scalar(1.0, f64::NAN, None);
        assert!(matches!(solve_hildreth(&nan, 38, DEFAULT_TOL), Err(Error::NonFinite(_))));
    }

    #[test]
    fn degenerate_row_is_skipped() {
        // second row is all zero, so its dual diagonal vanishes
        let mut p = scalar(1.0, -1.0, Some((1.0, 0.5)));
        p.constraints = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        p.bounds = DVector::from_column_slice(&[0.5, 1.0]);
        let sol = solve_hildreth(&p, 38, DEFAULT_TOL).unwrap();
        assert!((sol.x[0] - 0.5).abs() < 1e-12);
        assert_eq!(sol.lambda[1], 0.0);
    }

    #[test]
    fn sweep_cap_reports_non_convergence() {
        let p = QpProblem {
            hessian: DMatrix::identity(2, 2),
            linear: DVector::from_column_slice(&[-1.0, -1.0]),
            constraints: DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0001]),
            bounds: DVector::from_column_slice(&[0.0, 0.0]),
        };
        let sol = solve_hildreth(&p, 1, DEFAULT_TOL).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(!sol.converged);
        assert!(sol.lambda.iter().all(|&l| l >= 0.0));
    }
}
