//! Dense convex QP via a primal-dual active-set method (Goldfarb–Idnani style).
//!
//! Problem form:
//!
//! ```text
//! minimize    ½ xᵀPx + qᵀx
//! subject to  Ax = b,  Gx ≤ h
//! ```
//!
//! Multipliers follow the convention `Px + q + Aᵀλ + Gᵀν = 0` with `ν ≥ 0`.

use crate::linalg::{cholesky, dot, is_symmetric, lu_solve_refined, matvec, quad_form};
use crate::{Error, Result, Scalar};

/// Iteration cap shared by the allocator solvers.
pub const MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem<T> {
    n: usize,
    p: Vec<T>,
    q: Vec<T>,
    a: Vec<T>,
    b: Vec<T>,
    g: Vec<T>,
    h: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution<T> {
    pub x: Vec<T>,
    /// λ for `Ax = b`.
    pub eq_multipliers: Vec<T>,
    /// ν ≥ 0 for `Gx ≤ h`.
    pub ineq_multipliers: Vec<T>,
    /// Inequalities active at the solution, in the order they were added.
    pub active: Vec<usize>,
    pub objective: T,
    pub iterations: usize,
}

/// Maximum absolute KKT violations of a candidate primal-dual pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals<T> {
    pub stationarity: T,
    pub primal_equality: T,
    pub primal_inequality: T,
    pub dual_feasibility: T,
    pub complementarity: T,
}

impl<T: Scalar> KktResiduals<T> {
    pub fn max(&self) -> T {
        [self.stationarity, self.primal_equality, self.primal_inequality, self.dual_feasibility, self.complementarity]
            .into_iter()
            .fold(T::zero(), T::max)
    }
}

impl<T: Scalar> QpProblem<T> {
    /// Unconstrained problem `½xᵀPx + qᵀx`; `p` is row-major `n × n`.
    pub fn new(p: Vec<T>, q: Vec<T>) -> Result<Self> {
        let n = q.len();
        if n == 0 || p.len() != n * n {
            return Err(Error::arg(format!("P has {} entries, expected {}", p.len(), n * n)));
        }
        let scale = p.iter().fold(T::zero(), |m, v| m.max(v.abs())).max(T::min_positive_value());
        if !is_symmetric(&p, n, T::of(1e-12) * scale) {
            return Err(Error::arg("P must be symmetric"));
        }
        Ok(Self { n, p, q, a: Vec::new(), b: Vec::new(), g: Vec::new(), h: Vec::new() })
    }

    /// Adds equality rows `a_k · x = b_k` (`a` row-major, `b.len()` rows).
    pub fn with_equalities(mut self, a: Vec<T>, b: Vec<T>) -> Result<Self> {
        if a.len() != b.len() * self.n {
            return Err(Error::arg(format!("A must be {}×{}", b.len(), self.n)));
        }
        self.a.extend(a);
        self.b.extend(b);
        Ok(self)
    }

    /// Adds inequality rows `g_k · x ≤ h_k`.
    pub fn with_inequalities(mut self, g: Vec<T>, h: Vec<T>) -> Result<Self> {
        if g.len() != h.len() * self.n {
            return Err(Error::arg(format!("G must be {}×{}", h.len(), self.n)));
        }
        self.g.extend(g);
        self.h.extend(h);
        Ok(self)
    }

    /// Adds `lo ≤ x_i` for every coordinate.
    pub fn with_lower_bounds(self, lo: T) -> Result<Self> {
        let n = self.n;
        let mut g = vec![T::zero(); n * n];
        for i in 0..n {
            g[i * n + i] = -T::one();
        }
        self.with_inequalities(g, vec![-lo; n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_equalities(&self) -> usize {
        self.b.len()
    }

    pub fn n_inequalities(&self) -> usize {
        self.h.len()
    }

    pub fn p(&self) -> &[T] {
        &self.p
    }

    pub fn q(&self) -> &[T] {
        &self.q
    }

    pub fn eq_row(&self, k: usize) -> (&[T], T) {
        (&self.a[k * self.n..(k + 1) * self.n], self.b[k])
    }

    pub fn ineq_row(&self, k: usize) -> (&[T], T) {
        (&self.g[k * self.n..(k + 1) * self.n], self.h[k])
    }

    pub fn objective(&self, x: &[T]) -> T {
        T::of(0.5) * quad_form(&self.p, x) + dot(&self.q, x)
    }
}

/// Straight-line KKT residuals, independent of the solver's internal bookkeeping.
pub fn kkt_residuals<T: Scalar>(problem: &QpProblem<T>, x: &[T], lambda: &[T], nu: &[T]) -> KktResiduals<T> {
    let n = problem.n;
    let mut grad = matvec(&problem.p, x);
    for i in 0..n {
        grad[i] += problem.q[i];
    }
    let mut primal_equality = T::zero();
    for k in 0..problem.n_equalities() {
        let (row, rhs) = problem.eq_row(k);
        for i in 0..n {
            grad[i] += row[i] * lambda[k];
        }
        primal_equality = primal_equality.max((dot(row, x) - rhs).abs());
    }
    let (mut primal_inequality, mut dual_feasibility, mut complementarity) = (T::zero(), T::zero(), T::zero());
    for k in 0..problem.n_inequalities() {
        let (row, rhs) = problem.ineq_row(k);
        for i in 0..n {
            grad[i] += row[i] * nu[k];
        }
        let slack = rhs - dot(row, x);
        primal_inequality = primal_inequality.max(-slack);
        dual_feasibility = dual_feasibility.max(-nu[k]);
        complementarity = complementarity.max((nu[k] * slack).abs());
    }
    KktResiduals {
        stationarity: grad.iter().fold(T::zero(), |m, v| m.max(v.abs())),
        primal_equality,
        primal_inequality,
        dual_feasibility,
        complementarity,
    }
}

/// One constraint in the internal `nᵀx ≥ c` orientation.
#[derive(Debug, Clone)]
struct Row<T> {
    normal: Vec<T>,
    rhs: T,
    source: Source,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Source {
    /// Equality `k`; `flipped` when oriented as `−a·x ≥ −b`.
    Eq { k: usize, flipped: bool },
    Ineq(usize),
}

struct Solver<'a, T> {
    problem: &'a QpProblem<T>,
    x: Vec<T>,
    active: Vec<Row<T>>,
    u: Vec<T>,
    iterations: usize,
}

/// Solves the QP. `P` must be positive definite.
pub fn qp_solve<T: Scalar>(problem: &QpProblem<T>) -> Result<QpSolution<T>> {
    let n = problem.n;
    let scale = problem.p.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if cholesky(&problem.p, n, T::zero()).is_none_or(|l| (0..n).any(|i| l[i * n + i] <= T::epsilon().sqrt() * scale.sqrt())) {
        return Err(Error::arg("qp_solve needs a positive definite P"));
    }
    let neg_q: Vec<T> = problem.q.iter().map(|&v| -v).collect();
    let x = lu_solve_refined(&problem.p, &neg_q).ok_or_else(|| Error::arg("P is singular"))?;
    let mut s = Solver { problem, x, active: Vec::new(), u: Vec::new(), iterations: 0 };

    for k in 0..problem.n_equalities() {
        let (row, rhs) = problem.eq_row(k);
        let flipped = dot(row, &s.x) > rhs;
        let sign = if flipped { -T::one() } else { T::one() };
        let c = Row { normal: row.iter().map(|&v| v * sign).collect(), rhs: rhs * sign, source: Source::Eq { k, flipped } };
        s.add(c)?;
    }
    while let Some(k) = s.most_violated() {
        let (row, rhs) = problem.ineq_row(k);
        let c = Row { normal: row.iter().map(|&v| -v).collect(), rhs: -rhs, source: Source::Ineq(k) };
        s.add(c)?;
    }
    s.polish();
    s.finish()
}

impl<T: Scalar> Solver<'_, T> {
    fn violation_tol(&self, row: &[T], rhs: T) -> T {
        let xs = self.x.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let rs = row.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        T::of(1e-12) * (T::one() + rhs.abs() + rs * xs)
    }

    /// Index of the most violated inactive inequality; ties go to the lowest index.
    fn most_violated(&self) -> Option<usize> {
        let mut best: Option<(usize, T)> = None;
        for k in 0..self.problem.n_inequalities() {
            if self.active.iter().any(|r| r.source == Source::Ineq(k)) {
                continue;
            }
            let (row, rhs) = self.problem.ineq_row(k);
            let excess = dot(row, &self.x) - rhs;
            if excess > self.violation_tol(row, rhs) && best.is_none_or(|(_, e)| excess > e) {
                best = Some((k, excess));
            }
        }
        best.map(|(k, _)| k)
    }

    /// Solves `[P −Nᵀ; N 0][z; d] = [rhs_top; rhs_bot]`.
    fn kkt_solve(&self, top: &[T], bottom: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let n = self.problem.n;
        let m = self.active.len();
        let dim = n + m;
        let mut k = vec![T::zero(); dim * dim];
        for i in 0..n {
            k[i * dim..i * dim + n].copy_from_slice(&self.problem.p[i * n..(i + 1) * n]);
        }
        for (j, row) in self.active.iter().enumerate() {
            for i in 0..n {
                k[i * dim + n + j] = -row.normal[i];
                k[(n + j) * dim + i] = row.normal[i];
            }
        }
        let rhs: Vec<T> = top.iter().chain(bottom).copied().collect();
        let sol = lu_solve_refined(&k, &rhs).ok_or_else(|| Error::Contract("singular KKT system in qp_solve".into()))?;
        let (z, d) = sol.split_at(n);
        Ok((z.to_vec(), d.to_vec()))
    }

    fn bump(&mut self) -> Result<()> {
        self.iterations += 1;
        if self.iterations > MAX_ITERATIONS {
            return Err(Error::Convergence { iterations: self.iterations, residual: self.max_violation().as_f64() });
        }
        Ok(())
    }

    fn max_violation(&self) -> T {
        (0..self.problem.n_inequalities())
            .map(|k| {
                let (row, rhs) = self.problem.ineq_row(k);
                dot(row, &self.x) - rhs
            })
            .fold(T::zero(), T::max)
    }

    fn add(&mut self, c: Row<T>) -> Result<()> {
        let n = self.problem.n;
        let unconstrained = lu_solve_refined(&self.problem.p, &c.normal).ok_or_else(|| Error::arg("P is singular"))?;
        let curvature = dot(&unconstrained, &c.normal);
        let mut u_new = T::zero();
        loop {
            self.bump()?;
            let (z, d) = self.kkt_solve(&c.normal, &vec![T::zero(); self.active.len()])?;
            let r: Vec<T> = d.iter().map(|&v| -v).collect();
            // Partial step: the first active inequality whose multiplier reaches zero.
            let mut block: Option<(usize, T)> = None;
            for (j, row) in self.active.iter().enumerate() {
                if matches!(row.source, Source::Ineq(_)) && r[j] > T::zero() {
                    let ratio = self.u[j] / r[j];
                    if block.is_none_or(|(_, b)| ratio < b) {
                        block = Some((j, ratio));
                    }
                }
            }
            let gain = dot(&z, &c.normal);
            let slack = dot(&c.normal, &self.x) - c.rhs;
            if gain <= T::of(1e-12) * curvature {
                let Some((l, t1)) = block else {
                    if matches!(c.source, Source::Eq { .. }) && slack.abs() <= self.violation_tol(&c.normal, c.rhs) {
                        // Redundant equality already satisfied.
                        return Ok(());
                    }
                    return Err(Error::Infeasible(format!(
                        "{} cannot hold together with constraints {:?}",
                        describe(c.source),
                        self.active.iter().map(|r| describe(r.source)).collect::<Vec<_>>()
                    )));
                };
                self.shift_multipliers(&r, t1, &mut u_new);
                self.drop(l);
                continue;
            }
            let full = -slack / gain;
            match block {
                Some((l, t1)) if t1 < full => {
                    for i in 0..n {
                        self.x[i] += t1 * z[i];
                    }
                    self.shift_multipliers(&r, t1, &mut u_new);
                    self.drop(l);
                }
                _ => {
                    let t = full.max(T::zero());
                    for i in 0..n {
                        self.x[i] += t * z[i];
                    }
                    self.shift_multipliers(&r, t, &mut u_new);
                    self.active.push(c);
                    self.u.push(u_new);
                    return Ok(());
                }
            }
        }
    }

    fn shift_multipliers(&mut self, r: &[T], t: T, u_new: &mut T) {
        for (u, &rj) in self.u.iter_mut().zip(r) {
            *u -= t * rj;
        }
        *u_new += t;
    }

    fn drop(&mut self, l: usize) {
        self.active.remove(l);
        self.u.remove(l);
    }

    /// Re-solves the final equality-constrained system for clean `x` and multipliers.
    fn polish(&mut self) {
        let neg_q: Vec<T> = self.problem.q.iter().map(|&v| -v).collect();
        let rhs: Vec<T> = self.active.iter().map(|r| r.rhs).collect();
        if let Ok((x, u)) = self.kkt_solve(&neg_q, &rhs) {
            if x.iter().chain(&u).all(|v| v.is_finite()) {
                self.x = x;
                self.u = u;
            }
        }
    }

    fn finish(self) -> Result<QpSolution<T>> {
        let p = self.problem;
        let mut eq = vec![T::zero(); p.n_equalities()];
        let mut ineq = vec![T::zero(); p.n_inequalities()];
        let mut active = Vec::new();
        for (row, &u) in self.active.iter().zip(&self.u) {
            match row.source {
                Source::Eq { k, flipped } => eq[k] = if flipped { u } else { -u },
                Source::Ineq(k) => {
                    ineq[k] = u.max(T::zero());
                    active.push(k);
                }
            }
        }
        if let Some(v) = self.x.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("qp_solve produced {v}")));
        }
        let objective = p.objective(&self.x);
        let sol = QpSolution { x: self.x, eq_multipliers: eq, ineq_multipliers: ineq, active, objective, iterations: self.iterations };
        if cfg!(debug_assertions) {
            let res = kkt_residuals(p, &sol.x, &sol.eq_multipliers, &sol.ineq_multipliers);
            let scale = p.p.iter().chain(&p.q).chain(&p.h).chain(&p.b).fold(T::one(), |m, v| m.max(v.abs()));
            debug_assert!(res.max() <= T::of(1e-6) * scale, "qp_solve KKT residuals {res:?}");
        }
        Ok(sol)
    }
}

fn describe(source: Source) -> String {
    match source {
        Source::Eq { k, .. } => format!("equality {k}"),
        Source::Ineq(k) => format!("inequality {k}"),
    }
}
