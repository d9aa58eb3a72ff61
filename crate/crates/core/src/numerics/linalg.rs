//! Factorizations for the small (M ≤ 8, at most 64) complex matrices that the
//! detectors work with. Performance at this size is irrelevant; the
//! algorithms are picked for robustness.

use num_complex::Complex64;

use super::matrix::ComplexMatrix;
use crate::error::{Error, Result};

/// Condition number above which a system is reported singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Pivot-ratio level at which the full SVD condition estimate is computed.
const CHEAP_CONDITION_FLAG: f64 = 1e6;

const JACOBI_MAX_SWEEPS: usize = 100;

/// Singular value decomposition `A = U Σ V^H`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// Descending, non-negative.
    pub singular_values: Vec<f64>,
    pub left_vectors: ComplexMatrix,
    pub right_vectors: ComplexMatrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let sigma = ComplexMatrix::from_diag(&self.singular_values);
        self.left_vectors
            .matmul(&sigma)
            .matmul(&self.right_vectors.adjoint())
    }

    /// Ratio of largest to smallest singular value (infinite if rank deficient).
    pub fn condition(&self) -> f64 {
        let max = self.singular_values.first().copied().unwrap_or(0.0);
        let min = self.singular_values.last().copied().unwrap_or(0.0);
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

/// LU factorization with partial pivoting, packed in place.
struct Lu {
    lu: ComplexMatrix,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(a: &ComplexMatrix) -> Self {
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let pivot_row = (k..n)
                .max_by(|&i, &j| lu[(i, k)].norm().total_cmp(&lu[(j, k)].norm()))
                .unwrap_or(k);
            if pivot_row != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(pivot_row, j)];
                    lu[(pivot_row, j)] = tmp;
                }
                perm.swap(k, pivot_row);
            }
            let pivot = lu[(k, k)];
            if pivot == Complex64::new(0.0, 0.0) {
                continue;
            }
            for i in k + 1..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                for j in k + 1..n {
                    let t = lu[(k, j)];
                    lu[(i, j)] -= factor * t;
                }
            }
        }
        Self { lu, perm }
    }

    fn pivot_ratio(&self) -> f64 {
        let n = self.lu.rows();
        let mags: Vec<f64> = (0..n).map(|i| self.lu[(i, i)].norm()).collect();
        let max = mags.iter().copied().fold(0.0, f64::max);
        let min = mags.iter().copied().fold(f64::INFINITY, f64::min);
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    fn solve(&self, b: &ComplexMatrix) -> ComplexMatrix {
        let n = self.lu.rows();
        let mut x = ComplexMatrix::from_fn(n, b.cols(), |i, j| b[(self.perm[i], j)]);
        for col in 0..b.cols() {
            for i in 0..n {
                let mut acc = x[(i, col)];
                for k in 0..i {
                    acc -= self.lu[(i, k)] * x[(k, col)];
                }
                x[(i, col)] = acc;
            }
            for i in (0..n).rev() {
                let mut acc = x[(i, col)];
                for k in i + 1..n {
                    acc -= self.lu[(i, k)] * x[(k, col)];
                }
                x[(i, col)] = acc / self.lu[(i, i)];
            }
        }
        x
    }
}

/// Solves `A X = B` by LU decomposition with partial pivoting.
///
/// Fails with [`Error::SingularMatrix`] when the condition number of `A`
/// exceeds [`CONDITION_LIMIT`]. The SVD-based condition number is only
/// computed when the LU pivot ratio looks suspicious.
pub fn solve_linear(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() {
        return Err(Error::Contract(format!(
            "solve_linear needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if b.rows() != a.rows() {
        return Err(Error::Contract(format!(
            "right-hand side has {} rows, expected {}",
            b.rows(),
            a.rows()
        )));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::Contract("non-finite matrix entries".into()));
    }
    let lu = Lu::factor(a);
    let ratio = lu.pivot_ratio();
    if ratio > CHEAP_CONDITION_FLAG {
        let condition = svd(a)?.condition();
        if condition.is_nan() || condition > CONDITION_LIMIT {
            return Err(Error::SingularMatrix { condition });
        }
    }
    Ok(lu.solve(b))
}

/// Cholesky factor `L` (lower triangular) with `L L^H = A` for Hermitian
/// positive definite `A`.
pub fn cholesky(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !a.is_square() {
        return Err(Error::Contract("cholesky needs a square matrix".into()));
    }
    let n = a.rows();
    let scale = (0..n).map(|i| a[(i, i)].re.abs()).fold(0.0, f64::max);
    let floor = scale / CONDITION_LIMIT;
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d.is_nan() || d <= floor {
            return Err(Error::SingularMatrix {
                condition: if d > 0.0 { scale / d } else { f64::INFINITY },
            });
        }
        let d = d.sqrt();
        l[(j, j)] = Complex64::new(d, 0.0);
        for i in j + 1..n {
            let mut acc = a[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = acc / d;
        }
    }
    Ok(l)
}

/// Solves `L X = B` for lower-triangular `L`.
pub fn forward_substitute(l: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let n = l.rows();
    let mut x = b.clone();
    for col in 0..b.cols() {
        for i in 0..n {
            let mut acc = x[(i, col)];
            for k in 0..i {
                acc -= l[(i, k)] * x[(k, col)];
            }
            x[(i, col)] = acc / l[(i, i)];
        }
    }
    x
}

/// Returns `L^{-1} B L^{-H}` for a Cholesky factor `L`. Hermitian input
/// gives Hermitian output.
pub fn whiten_congruence(l: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let y = forward_substitute(l, b);
    forward_substitute(l, &y.adjoint()).adjoint()
}

/// Lower Cholesky factor of the Toeplitz matrix with entries `rho^|i-j|`.
pub fn cholesky_toeplitz_rho(m: usize, rho: f64) -> Result<ComplexMatrix> {
    if m == 0 {
        return Err(Error::Contract("matrix order must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Contract(format!(
            "rho must lie in [0, 1) for a Cholesky factor, got {rho}"
        )));
    }
    cholesky(&toeplitz_rho(m, rho))
}

/// `T[i][j] = rho^|i-j|`.
pub fn toeplitz_rho(m: usize, rho: f64) -> ComplexMatrix {
    ComplexMatrix::from_fn(m, m, |i, j| {
        Complex64::new(rho.powi(i.abs_diff(j) as i32), 0.0)
    })
}

/// One-sided (Hestenes) Jacobi SVD of a square complex matrix.
pub fn svd(a: &ComplexMatrix) -> Result<SvdResult> {
    if !a.is_square() {
        return Err(Error::Contract(format!(
            "svd expects a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_finite() {
        return Err(Error::Contract("svd input has non-finite entries".into()));
    }
    let n = a.rows();
    // Column-major working copies.
    let mut w: Vec<Vec<Complex64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<Complex64>> = (0..n)
        .map(|j| {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[j] = Complex64::new(1.0, 0.0);
            e
        })
        .collect();

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = w[p].iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = w[q].iter().map(|z| z.norm_sqr()).sum();
                let gamma: Complex64 = w[p].iter().zip(&w[q]).map(|(x, y)| x.conj() * y).sum();
                let g = gamma.norm();
                if g == 0.0 || g <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = (gamma / g).conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s, phase);
                rotate(&mut v, p, q, c, s, phase);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = w
        .iter()
        .map(|col| col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let sigma_max = norms[order[0]];
    let tol = n as f64 * f64::EPSILON * sigma_max;
    let singular_values: Vec<f64> = order.iter().map(|&j| norms[j]).collect();

    let mut u_cols: Vec<Option<Vec<Complex64>>> = order
        .iter()
        .map(|&j| {
            (norms[j] > tol && norms[j] > 0.0).then(|| w[j].iter().map(|z| z / norms[j]).collect())
        })
        .collect();
    complete_orthonormal(&mut u_cols, n);

    let left = ComplexMatrix::from_fn(n, n, |i, k| u_cols[k].as_ref().unwrap()[i]);
    let right = ComplexMatrix::from_fn(n, n, |i, k| v[order[k]][i]);
    Ok(SvdResult {
        singular_values,
        left_vectors: left,
        right_vectors: right,
    })
}

fn rotate(cols: &mut [Vec<Complex64>], p: usize, q: usize, c: f64, s: f64, phase: Complex64) {
    let (head, tail) = cols.split_at_mut(q);
    let (cp, cq) = (&mut head[p], &mut tail[0]);
    for (xp, xq) in cp.iter_mut().zip(cq.iter_mut()) {
        let a = *xp;
        let b = *xq * phase;
        *xp = a * c - b * s;
        *xq = a * s + b * c;
    }
}

/// Fills missing columns with unit vectors orthogonal to the present ones.
fn complete_orthonormal(cols: &mut [Option<Vec<Complex64>>], n: usize) {
    let mut candidate = 0;
    for k in 0..cols.len() {
        if cols[k].is_some() {
            continue;
        }
        while candidate < n {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[candidate] = Complex64::new(1.0, 0.0);
            candidate += 1;
            // Two Gram-Schmidt passes.
            for _ in 0..2 {
                for other in cols.iter().flatten() {
                    let proj: Complex64 = other.iter().zip(&e).map(|(o, x)| o.conj() * x).sum();
                    for (x, o) in e.iter_mut().zip(other) {
                        *x -= proj * o;
                    }
                }
            }
            let norm = e.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 1e-8 {
                cols[k] = Some(e.into_iter().map(|z| z / norm).collect());
                break;
            }
        }
    }
}
