use super::qp::{qp_solve, QpProblem, QpSolution, MAX_ITERATIONS};
use super::MomentEstimate;
use crate::agents::WeightVector;
use crate::linalg::{lu_solve, matvec, quad_form};
use crate::{Error, Result, Scalar};

/// Acceptance bound on `max_i |RC_i − σ²/N| / σ²` for risk parity.
pub const RISK_PARITY_TOL: f64 = 1e-8;

fn solver_tol<T: Scalar>() -> T {
    T::of(1e-9).max(T::epsilon().sqrt())
}

pub fn equal_weight<T: Scalar>(n: usize) -> Result<WeightVector<T>> {
    if n == 0 {
        return Err(Error::arg("equal_weight needs at least one asset"));
    }
    Ok(WeightVector::uniform(n))
}

fn simplex_problem<T: Scalar>(m: &MomentEstimate<T>) -> Result<QpProblem<T>> {
    let n = m.n();
    QpProblem::new(m.omega.clone(), vec![T::zero(); n])?
        .with_equalities(vec![T::one(); n], vec![T::one()])?
        .with_lower_bounds(T::zero())
}

/// Cross-sectional mean of the expected returns; the default baseline for [`mean_variance`].
pub fn default_baseline<T: Scalar>(m: &MomentEstimate<T>) -> T {
    m.mu.iter().copied().sum::<T>() / T::of(m.n() as f64)
}

/// Full QP output for the long-only mean-variance problem.
pub fn mean_variance_solution<T: Scalar>(m: &MomentEstimate<T>, mu_b: T) -> Result<QpSolution<T>> {
    let best = m.mu.iter().copied().fold(T::neg_infinity(), T::max);
    if mu_b > best {
        return Err(Error::Infeasible(format!("baseline return {mu_b} exceeds the best expected return {best}")));
    }
    let neg_mu = m.mu.iter().map(|&v| -v).collect();
    let problem = simplex_problem(m)?.with_inequalities(neg_mu, vec![-mu_b])?;
    qp_solve(&problem)
}

/// `min ½wᵀΩw` subject to `μᵀw ≥ μ_b`, `Σw = 1`, `w ≥ 0`.
pub fn mean_variance<T: Scalar>(m: &MomentEstimate<T>, mu_b: T) -> Result<WeightVector<T>> {
    WeightVector::from_solver(mean_variance_solution(m, mu_b)?.x, solver_tol())
}

pub fn min_variance_solution<T: Scalar>(m: &MomentEstimate<T>) -> Result<QpSolution<T>> {
    qp_solve(&simplex_problem(m)?)
}

/// `min wᵀΩw` subject to `Σw = 1`, `w ≥ 0`.
pub fn min_variance<T: Scalar>(m: &MomentEstimate<T>) -> Result<WeightVector<T>> {
    WeightVector::from_solver(min_variance_solution(m)?.x, solver_tol())
}

/// Minimum variance scaled down to a volatility target. Returns `N + 1` weights with cash
/// first; cash holds `1 − min(1, σ_target/σ(w))`.
pub fn min_variance_vol_target<T: Scalar>(m: &MomentEstimate<T>, sigma_target: T) -> Result<WeightVector<T>> {
    if !(sigma_target > T::zero()) {
        return Err(Error::arg(format!("volatility target must be positive, got {sigma_target}")));
    }
    let w = min_variance(m)?;
    let sigma = quad_form(&m.omega, &w).sqrt();
    let k = if sigma > sigma_target { sigma_target / sigma } else { T::one() };
    let mut out = Vec::with_capacity(w.len() + 1);
    out.push(T::one() - k);
    out.extend(w.iter().map(|&v| v * k));
    WeightVector::from_solver(out, solver_tol())
}

/// Risk contributions `w_i·(Ωw)_i`.
pub fn risk_contributions<T: Scalar>(omega: &[T], w: &[T]) -> Vec<T> {
    matvec(omega, w).iter().zip(w).map(|(&s, &v)| s * v).collect()
}

/// `Σ_i [w_i − wᵀΩw / (N·(Ωw)_i)]²`.
pub fn risk_parity_objective<T: Scalar>(omega: &[T], w: &[T]) -> T {
    residuals(omega, w).iter().map(|&r| r * r).sum()
}

fn residuals<T: Scalar>(omega: &[T], w: &[T]) -> Vec<T> {
    let n = T::of(w.len() as f64);
    let ow = matvec(omega, w);
    let var: T = ow.iter().zip(w).map(|(&a, &b)| a * b).sum();
    w.iter().zip(&ow).map(|(&wi, &oi)| wi - var / (n * oi)).collect()
}

/// Worst relative deviation of risk contributions from their mean `σ²/N`.
pub fn risk_parity_gap<T: Scalar>(omega: &[T], w: &[T]) -> T {
    let rc = risk_contributions(omega, w);
    let var: T = rc.iter().copied().sum();
    let target = var / T::of(w.len() as f64);
    rc.iter().fold(T::zero(), |m, &r| m.max((r - target).abs())) / var
}

/// Starting point for [`risk_parity`]: the minimizer of `½yᵀΩy − (1/N)·Σ ln y_i`, found by
/// damped Newton and normalized to the simplex. The function is strictly convex on `y > 0` and
/// its stationarity condition `y_i·(Ωy)_i = 1/N` is exactly equal risk contribution, so this
/// lands next to the least-squares minimizer even when negative covariances create spurious
/// stationary points of that objective.
fn barrier_start<T: Scalar>(m: &MomentEstimate<T>) -> Result<Vec<T>> {
    let n = m.n();
    let nf = T::of(n as f64);
    let omega = &m.omega;
    let f = |y: &[T]| quad_form(omega, y) / T::of(2.0) - y.iter().map(|&v| v.ln()).sum::<T>() / nf;
    // Inverse-vol direction, scaled to unit portfolio variance.
    let inv_vol: Vec<T> = (0..n).map(|i| T::one() / m.cov(i, i).sqrt()).collect();
    let scale = T::one() / quad_form(omega, &inv_vol).sqrt();
    let mut y: Vec<T> = inv_vol.iter().map(|&v| v * scale).collect();
    let mut fy = f(&y);
    for _ in 0..MAX_ITERATIONS {
        let oy = matvec(omega, &y);
        let grad: Vec<T> = oy.iter().zip(&y).map(|(&a, &v)| a - T::one() / (nf * v)).collect();
        let mut hess = omega.clone();
        for i in 0..n {
            hess[i * n + i] += T::one() / (nf * y[i] * y[i]);
        }
        let neg: Vec<T> = grad.iter().map(|&g| -g).collect();
        let Some(step) = lu_solve(&hess, &neg) else { break };
        let decrement: T = -grad.iter().zip(&step).map(|(&g, &d)| g * d).sum::<T>();
        if decrement <= T::epsilon() * T::of(16.0) * (T::one() + fy.abs()) {
            break;
        }
        let mut alpha = T::one();
        let mut moved = false;
        for _ in 0..60 {
            let trial: Vec<T> = y.iter().zip(&step).map(|(&a, &d)| a + alpha * d).collect();
            if trial.iter().all(|&v| v > T::zero()) {
                let ft = f(&trial);
                if ft <= fy - T::of(1e-4) * alpha * decrement {
                    y = trial;
                    fy = ft;
                    moved = true;
                    break;
                }
            }
            alpha /= T::of(2.0);
        }
        if !moved {
            break;
        }
    }
    let total: T = y.iter().copied().sum();
    if !(total > T::zero()) || !total.is_finite() {
        return Err(Error::Convergence { iterations: MAX_ITERATIONS, residual: f64::NAN });
    }
    Ok(y.iter().map(|&v| v / total).collect())
}

/// Equal-risk-contribution weights by damped Gauss–Newton on the least-squares objective,
/// with `Σw = 1` appended as an extra residual row, started from [`barrier_start`].
pub fn risk_parity<T: Scalar>(m: &MomentEstimate<T>) -> Result<WeightVector<T>> {
    let n = m.n();
    let omega = &m.omega;
    if (0..n).any(|i| !(m.cov(i, i) > T::zero())) {
        return Err(Error::arg("risk_parity needs positive variances"));
    }
    let mut w = barrier_start(m)?;
    let merit = |w: &[T]| -> T {
        let s: T = w.iter().copied().sum();
        risk_parity_objective(omega, w) + (s - T::one()) * (s - T::one())
    };
    let nf = T::of(n as f64);
    let mut f = merit(&w);
    for iteration in 0..MAX_ITERATIONS {
        let ow = matvec(omega, &w);
        let var: T = ow.iter().zip(&w).map(|(&a, &b)| a * b).sum();
        let mut res = residuals(omega, &w);
        res.push(w.iter().copied().sum::<T>() - T::one());
        // Jacobian rows: ∂r_i/∂w_j = δ_ij − [2(Ωw)_j(Ωw)_i − σ²Ω_ij] / (N(Ωw)_i²), then a row of ones.
        let mut jac = vec![T::zero(); (n + 1) * n];
        for i in 0..n {
            for j in 0..n {
                let delta = if i == j { T::one() } else { T::zero() };
                jac[i * n + j] = delta - (T::of(2.0) * ow[j] * ow[i] - var * omega[i * n + j]) / (nf * ow[i] * ow[i]);
            }
        }
        for j in 0..n {
            jac[n * n + j] = T::one();
        }
        let mut jtj = vec![T::zero(); n * n];
        let mut jtr = vec![T::zero(); n];
        for k in 0..=n {
            for i in 0..n {
                jtr[i] += jac[k * n + i] * res[k];
                for j in 0..n {
                    jtj[i * n + j] += jac[k * n + i] * jac[k * n + j];
                }
            }
        }
        let grad_norm = jtr.iter().fold(T::zero(), |a, v| a.max(v.abs()));
        if grad_norm <= T::of(1e-10).max(T::epsilon()) && risk_parity_gap(omega, &w) <= T::of(RISK_PARITY_TOL) {
            break;
        }
        let neg: Vec<T> = jtr.iter().map(|&v| -v).collect();
        let Some(step) = lu_solve(&jtj, &neg) else { break };
        let mut alpha = T::one();
        let mut improved = false;
        for _ in 0..60 {
            let trial: Vec<T> = w.iter().zip(&step).map(|(&a, &d)| a + alpha * d).collect();
            if trial.iter().all(|&v| v > T::zero()) {
                let ft = merit(&trial);
                if ft < f {
                    w = trial;
                    f = ft;
                    improved = true;
                    break;
                }
            }
            alpha /= T::of(2.0);
        }
        if !improved {
            log::debug!("risk_parity stalled after {iteration} iterations at merit {f}");
            break;
        }
    }
    let s: T = w.iter().copied().sum();
    let w: Vec<T> = w.iter().map(|&v| v / s).collect();
    let gap = risk_parity_gap(omega, &w);
    if !(gap <= T::of(RISK_PARITY_TOL).max(T::epsilon().sqrt())) {
        return Err(Error::Convergence { iterations: MAX_ITERATIONS, residual: gap.as_f64() });
    }
    WeightVector::from_solver(w, solver_tol())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64], mu: &[f64]) -> MomentEstimate<f64> {
        let n = v.len();
        let mut o = vec![0.0; n * n];
        for i in 0..n {
            o[i * n + i] = v[i];
        }
        MomentEstimate::new(mu.to_vec(), o).unwrap()
    }

    #[test]
    fn closed_forms() {
        let m = diag(&[0.04, 0.01], &[0.002, 0.001]);
        let rp = risk_parity(&m).unwrap();
        assert!((rp[0] - 1.0 / 3.0).abs() < 1e-9 && (rp[1] - 2.0 / 3.0).abs() < 1e-9);
        let mv = min_variance(&m).unwrap();
        assert!((mv[0] - 0.2).abs() < 1e-9 && (mv[1] - 0.8).abs() < 1e-9);
        let bound = mean_variance(&m, 0.002).unwrap();
        assert!((bound[0] - 1.0).abs() < 1e-9 && bound[1].abs() < 1e-9);
        assert!(matches!(mean_variance(&m, 0.0021), Err(Error::Infeasible(_))));
    }

    #[test]
    fn inactive_return_constraint_gives_min_variance() {
        let m = diag(&[0.04, 0.01], &[0.002, 0.001]);
        let mv = min_variance(&m).unwrap();
        let mvo = mean_variance(&m, 0.0012).unwrap();
        for i in 0..2 {
            assert!((mv[i] - mvo[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn isotropic_cases_are_uniform() {
        for n in [1, 2, 5, 24] {
            let m = diag(&vec![0.02; n], &vec![0.0; n]);
            for w in [risk_parity(&m).unwrap(), min_variance(&m).unwrap(), equal_weight(n).unwrap()] {
                assert!(w.iter().all(|&v| (v - 1.0 / n as f64).abs() < 1e-12));
            }
        }
        assert!(equal_weight::<f64>(0).is_err());
    }

    #[test]
    fn negative_covariance() {
        let o = vec![0.0004, -0.00035, 0.0001, -0.00035, 0.0004, -0.0001, 0.0001, -0.0001, 0.0002];
        let m = MomentEstimate::new(vec![0.0; 3], o).unwrap();
        let w = risk_parity(&m).unwrap();
        assert!(risk_parity_gap(&m.omega, &w) <= 1e-10);
    }

    #[test]
    fn vol_target_moves_to_cash() {
        let m = diag(&[0.04, 0.01], &[0.0, 0.0]);
        // σ(w*) = sqrt(0.008) ≈ 0.0894
        let w = min_variance_vol_target(&m, 0.0447213595499958).unwrap();
        assert_eq!(w.len(), 3);
        assert!((w[0] - 0.5).abs() < 1e-9);
        let relaxed = min_variance_vol_target(&m, 1.0).unwrap();
        assert_eq!(relaxed[0], 0.0);
    }
}
