//! Local minimizers for sums of squared residuals.
//!
//! Both backends only need residuals plus either the Jacobian
//! (Levenberg-Marquardt) or the gradient (L-BFGS).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Cost `f(x) = |r(x)|^2`.
pub trait LeastSquares {
    fn n_vars(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, x: &[f64], r: &mut [f64]);
    /// Fills residuals and the `n_residuals x n_vars` Jacobian.
    fn jacobian(&self, x: &[f64], r: &mut [f64], jac: &mut DMatrix<f64>);
    /// Returns the cost and fills its gradient.
    fn cost_gradient(&self, x: &[f64], g: &mut [f64]) -> f64 {
        let mut r = vec![0.0; self.n_residuals()];
        let mut jac = DMatrix::zeros(self.n_residuals(), self.n_vars());
        self.jacobian(x, &mut r, &mut jac);
        let rv = DVector::from_column_slice(&r);
        let grad = jac.tr_mul(&rv) * 2.0;
        g.copy_from_slice(grad.as_slice());
        rv.norm_squared()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    LevenbergMarquardt,
    Lbfgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Stop once the cost drops below this value.
    pub cost_tolerance: f64,
    pub gradient_tolerance: f64,
    /// Relative step size below which the iteration is considered stalled.
    pub step_tolerance: f64,
    /// L-BFGS history length.
    pub memory: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            cost_tolerance: 1e-16,
            gradient_tolerance: 1e-15,
            step_tolerance: 1e-15,
            memory: 12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    CostTolerance,
    Gradient,
    Stalled,
    Budget,
    NonFinite,
}

impl Status {
    pub fn converged(self) -> bool {
        matches!(self, Status::CostTolerance | Status::Gradient)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverOutcome {
    pub x: Vec<f64>,
    pub cost: f64,
    /// Best cost after each iteration, starting with the initial point.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: Status,
}

pub fn minimize<P: LeastSquares + ?Sized>(problem: &P, x0: &[f64], backend: Backend, opts: &SolverOptions) -> SolverOutcome {
    match backend {
        Backend::LevenbergMarquardt => levenberg_marquardt(problem, x0, opts),
        Backend::Lbfgs => lbfgs(problem, x0, opts),
    }
}

fn non_finite(x: Vec<f64>, history: Vec<f64>, iterations: usize, evaluations: usize) -> SolverOutcome {
    SolverOutcome {
        x,
        cost: f64::NAN,
        history,
        iterations,
        evaluations,
        status: Status::NonFinite,
    }
}

/// Levenberg-Marquardt with Nielsen's damping update. The normal equations are
/// solved in whichever of the residual or variable spaces is smaller.
pub fn levenberg_marquardt<P: LeastSquares + ?Sized>(problem: &P, x0: &[f64], opts: &SolverOptions) -> SolverOutcome {
    let n = problem.n_vars();
    let m = problem.n_residuals();
    let mut x = DVector::from_column_slice(x0);
    let mut r = vec![0.0; m];
    let mut jac = DMatrix::zeros(m, n);
    problem.jacobian(x.as_slice(), &mut r, &mut jac);
    let mut evaluations = 1;
    let mut rv = DVector::from_column_slice(&r);
    let mut cost = rv.norm_squared();
    let mut history = vec![cost];
    if !cost.is_finite() {
        return non_finite(x0.to_vec(), history, 0, evaluations);
    }
    let wide = m <= n;
    let mut normal = if wide { &jac * jac.transpose() } else { jac.tr_mul(&jac) };
    let mut grad = jac.tr_mul(&rv);
    let max_diag = (0..normal.nrows()).map(|i| normal[(i, i)]).fold(0.0_f64, f64::max);
    let mut lambda = 1e-3 * max_diag.max(1e-300);
    let mut nu = 2.0;
    let mut r_trial = vec![0.0; m];
    let mut status = Status::Budget;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        if cost <= opts.cost_tolerance {
            status = Status::CostTolerance;
            break;
        }
        if 2.0 * grad.amax() <= opts.gradient_tolerance {
            status = Status::Gradient;
            break;
        }
        iterations += 1;
        let mut a = normal.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += lambda;
        }
        let step = match a.cholesky() {
            Some(ch) => {
                if wide {
                    -(jac.tr_mul(&ch.solve(&rv)))
                } else {
                    -ch.solve(&grad)
                }
            }
            None => {
                lambda *= nu;
                nu *= 2.0;
                history.push(cost);
                continue;
            }
        };
        let jd = &jac * &step;
        let predicted = -2.0 * grad.dot(&step) - jd.norm_squared();
        let x_trial = &x + &step;
        problem.residuals(x_trial.as_slice(), &mut r_trial);
        evaluations += 1;
        let trial_cost: f64 = r_trial.iter().map(|v| v * v).sum();
        let rho = (cost - trial_cost) / predicted;
        if trial_cost.is_finite() && predicted > 0.0 && rho > 0.0 {
            let small = step.norm() <= opts.step_tolerance * (x.norm() + opts.step_tolerance);
            let flat = cost - trial_cost <= 1e-15 * cost;
            x = x_trial;
            problem.jacobian(x.as_slice(), &mut r, &mut jac);
            evaluations += 1;
            rv = DVector::from_column_slice(&r);
            cost = rv.norm_squared();
            normal = if wide { &jac * jac.transpose() } else { jac.tr_mul(&jac) };
            grad = jac.tr_mul(&rv);
            lambda *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
            history.push(cost);
            if small && flat {
                status = Status::Stalled;
                break;
            }
        } else {
            lambda *= nu;
            nu *= 2.0;
            history.push(cost);
            if !lambda.is_finite() || lambda > 1e30 * max_diag.max(1.0) {
                status = Status::Stalled;
                break;
            }
        }
    }
    if status == Status::Budget && cost <= opts.cost_tolerance {
        status = Status::CostTolerance;
    }
    SolverOutcome {
        x: x.as_slice().to_vec(),
        cost,
        history,
        iterations,
        evaluations,
        status,
    }
}

/// Limited-memory BFGS with a backtracking Armijo line search.
pub fn lbfgs<P: LeastSquares + ?Sized>(problem: &P, x0: &[f64], opts: &SolverOptions) -> SolverOutcome {
    let n = problem.n_vars();
    let mut x = DVector::from_column_slice(x0);
    let mut g = vec![0.0; n];
    let mut f = problem.cost_gradient(x.as_slice(), &mut g);
    let mut gv = DVector::from_column_slice(&g);
    let mut evaluations = 1;
    let mut history = vec![f];
    if !f.is_finite() {
        return non_finite(x0.to_vec(), history, 0, evaluations);
    }
    let mut s_hist: Vec<DVector<f64>> = Vec::new();
    let mut y_hist: Vec<DVector<f64>> = Vec::new();
    let mut status = Status::Budget;
    let mut iterations = 0;
    let mut g_new = vec![0.0; n];

    while iterations < opts.max_iterations {
        if f <= opts.cost_tolerance {
            status = Status::CostTolerance;
            break;
        }
        if gv.amax() <= opts.gradient_tolerance {
            status = Status::Gradient;
            break;
        }
        iterations += 1;
        // Two-loop recursion.
        let mut q = gv.clone();
        let k = s_hist.len();
        let mut alphas = vec![0.0; k];
        for i in (0..k).rev() {
            let rho = 1.0 / y_hist[i].dot(&s_hist[i]);
            alphas[i] = rho * s_hist[i].dot(&q);
            q -= &y_hist[i] * alphas[i];
        }
        let gamma = if k > 0 {
            s_hist[k - 1].dot(&y_hist[k - 1]) / y_hist[k - 1].norm_squared()
        } else {
            1.0 / gv.norm().max(1e-300)
        };
        q *= gamma;
        for i in 0..k {
            let rho = 1.0 / y_hist[i].dot(&s_hist[i]);
            let beta = rho * y_hist[i].dot(&q);
            q += &s_hist[i] * (alphas[i] - beta);
        }
        let mut dir = -q;
        let mut slope = gv.dot(&dir);
        if !(slope < 0.0) {
            s_hist.clear();
            y_hist.clear();
            dir = -gv.clone() / gv.norm().max(1e-300);
            slope = gv.dot(&dir);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xt = &x + &dir * t;
            let ft = problem.cost_gradient(xt.as_slice(), &mut g_new);
            evaluations += 1;
            if ft.is_finite() && ft <= f + 1e-4 * t * slope {
                accepted = Some((xt, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((xt, ft)) = accepted else {
            status = Status::Stalled;
            history.push(f);
            break;
        };
        let gt = DVector::from_column_slice(&g_new);
        let s = &xt - &x;
        let y = &gt - &gv;
        let small = s.norm() <= opts.step_tolerance * (x.norm() + opts.step_tolerance);
        if s.dot(&y) > 1e-12 * s.norm() * y.norm() {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        let flat = f - ft <= 1e-15 * f;
        x = xt;
        f = ft;
        gv = gt;
        history.push(f);
        if small && flat {
            status = Status::Stalled;
            break;
        }
    }
    if status == Status::Budget && f <= opts.cost_tolerance {
        status = Status::CostTolerance;
    }
    SolverOutcome {
        x: x.as_slice().to_vec(),
        cost: f,
        history,
        iterations,
        evaluations,
        status,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rosenbrock as residuals `(1 - x, 10 (y - x^2))`.
    struct Rosenbrock;

    impl LeastSquares for Rosenbrock {
        fn n_vars(&self) -> usize {
            2
        }
        fn n_residuals(&self) -> usize {
            2
        }
        fn residuals(&self, x: &[f64], r: &mut [f64]) {
            r[0] = 1.0 - x[0];
            r[1] = 10.0 * (x[1] - x[0] * x[0]);
        }
        fn jacobian(&self, x: &[f64], r: &mut [f64], jac: &mut DMatrix<f64>) {
            self.residuals(x, r);
            jac[(0, 0)] = -1.0;
            jac[(0, 1)] = 0.0;
            jac[(1, 0)] = -20.0 * x[0];
            jac[(1, 1)] = 10.0;
        }
    }

    /// Underdetermined: one residual `x0 + 2 x1 + x2^2 - 3`.
    struct Plane;

    impl LeastSquares for Plane {
        fn n_vars(&self) -> usize {
            3
        }
        fn n_residuals(&self) -> usize {
            1
        }
        fn residuals(&self, x: &[f64], r: &mut [f64]) {
            r[0] = x[0] + 2.0 * x[1] + x[2] * x[2] - 3.0;
        }
        fn jacobian(&self, x: &[f64], r: &mut [f64], jac: &mut DMatrix<f64>) {
            self.residuals(x, r);
            jac[(0, 0)] = 1.0;
            jac[(0, 1)] = 2.0;
            jac[(0, 2)] = 2.0 * x[2];
        }
    }

    #[test]
    fn lm_solves_rosenbrock() {
        let out = levenberg_marquardt(&Rosenbrock, &[-1.2, 1.0], &SolverOptions::default());
        assert!(out.status.converged(), "{:?}", out.status);
        assert!((out.x[0] - 1.0).abs() < 1e-7 && (out.x[1] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn lbfgs_solves_rosenbrock() {
        let opts = SolverOptions {
            cost_tolerance: 1e-20,
            ..Default::default()
        };
        let out = lbfgs(&Rosenbrock, &[-1.2, 1.0], &opts);
        assert!(out.cost < 1e-14, "{} {:?}", out.cost, out.status);
    }

    #[test]
    fn lm_wide_form() {
        let out = levenberg_marquardt(&Plane, &[0.0, 0.0, 0.5], &SolverOptions::default());
        assert!(out.cost <= 1e-16);
    }

    #[test]
    fn histories_never_increase() {
        for backend in [Backend::LevenbergMarquardt, Backend::Lbfgs] {
            let out = minimize(&Rosenbrock, &[-1.2, 1.0], backend, &SolverOptions::default());
            assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}
