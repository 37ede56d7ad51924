//! Small dense linear algebra on row-major square matrices.
//!
//! Problem sizes here are tiny (at most a few dozen assets), so everything is
//! straightforward O(n³) code without blocking.

use crate::Scalar;

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `y = M x` for an `rows × x.len()` row-major matrix.
pub fn matvec<T: Scalar>(m: &[T], x: &[T]) -> Vec<T> {
    let cols = x.len();
    debug_assert_eq!(m.len() % cols.max(1), 0);
    m.chunks(cols).map(|row| dot(row, x)).collect()
}

/// `y = Mᵀ x` for an `x.len() × cols` row-major matrix.
pub fn matvec_t<T: Scalar>(m: &[T], x: &[T], cols: usize) -> Vec<T> {
    let mut y = vec![T::zero(); cols];
    for (row, &xi) in m.chunks(cols).zip(x) {
        for (yj, &mij) in y.iter_mut().zip(row) {
            *yj += mij * xi;
        }
    }
    y
}

/// `xᵀ M x`.
pub fn quad_form<T: Scalar>(m: &[T], x: &[T]) -> T {
    dot(x, &matvec(m, x))
}

pub fn is_symmetric<T: Scalar>(m: &[T], n: usize, tol: T) -> bool {
    (0..n).all(|i| (0..i).all(|j| (m[i * n + j] - m[j * n + i]).abs() <= tol))
}

/// Solves `A x = b` by LU decomposition with partial pivoting.
///
/// Returns `None` when a pivot falls below `n · ε · max|A|`.
pub fn lu_solve<T: Scalar>(a: &[T], b: &[T]) -> Option<Vec<T>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    let mut lu = a.to_vec();
    let mut x = b.to_vec();
    let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let tiny = scale * T::epsilon() * T::of(n as f64);
    for k in 0..n {
        let (p, pivot) = (k..n)
            .map(|i| (i, lu[i * n + k].abs()))
            .fold((k, T::neg_infinity()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pivot > tiny) {
            return None;
        }
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
            x.swap(k, p);
        }
        let d = lu[k * n + k];
        for i in k + 1..n {
            let f = lu[i * n + k] / d;
            if f == T::zero() {
                continue;
            }
            lu[i * n + k] = f;
            for j in k + 1..n {
                let v = lu[k * n + j];
                lu[i * n + j] -= f * v;
            }
            let xk = x[k];
            x[i] -= f * xk;
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for j in k + 1..n {
            s -= lu[k * n + j] * x[j];
        }
        x[k] = s / lu[k * n + k];
    }
    Some(x)
}

/// [`lu_solve`] followed by one step of iterative refinement.
pub fn lu_solve_refined<T: Scalar>(a: &[T], b: &[T]) -> Option<Vec<T>> {
    let mut x = lu_solve(a, b)?;
    let ax = matvec(a, &x);
    let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &axi)| bi - axi).collect();
    if let Some(dx) = lu_solve(a, &r) {
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
    }
    Some(x)
}

/// Lower Cholesky factor `L` with `A = L Lᵀ`.
///
/// Pivots in `(-tol, tol]` are treated as zero, which admits positive semi-definite input;
/// anything more negative returns `None`.
pub fn cholesky<T: Scalar>(a: &[T], n: usize, tol: T) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d < -tol {
            return None;
        }
        let ljj = if d > tol { d.sqrt() } else { T::zero() };
        l[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if ljj > T::zero() {
                l[i * n + j] = s / ljj;
            } else if s.abs() > tol.sqrt() {
                return None;
            }
        }
    }
    Some(l)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues<T: Scalar>(a: &[T], n: usize) -> Vec<T> {
    let mut m = a.to_vec();
    let two = T::of(2.0);
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        let diag: T = (0..n).map(|i| m[i * n + i] * m[i * n + i]).sum();
        if off <= T::epsilon() * T::epsilon() * diag || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<T> = (0..n).map(|i| m[i * n + i]).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}
