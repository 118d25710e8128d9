//! Small dense linear-algebra kernels.
//!
//! Everything here is hand-rolled with a fixed summation order so results are
//! bit-reproducible regardless of backend or thread count.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = R::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

pub fn norm2<R: Real>(a: &[R]) -> R {
    dot(a, a).sqrt()
}

pub fn axpy<R: Real>(alpha: R, x: &[R], y: &mut [R]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// Frobenius inner product of two square matrices.
pub fn frob_inner<R: Real>(a: &Array2<R>, b: &Array2<R>) -> R {
    debug_assert_eq!(a.dim(), b.dim());
    let mut acc = R::zero();
    for (x, y) in a.iter().zip(b.iter()) {
        acc += *x * *y;
    }
    acc
}

pub fn frob_norm<R: Real>(a: &Array2<R>) -> R {
    frob_inner(a, a).sqrt()
}

/// `(A + A^T) / 2`.
pub fn symmetrize<R: Real>(a: &Array2<R>) -> Array2<R> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let half = R::of(0.5);
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            out[[i, j]] = (a[[i, j]] + a[[j, i]]) * half;
        }
    }
    out
}

/// Solve `A x = b` for symmetric positive definite `A` via Cholesky.
///
/// Fails with [`Error::Singular`] when a pivot drops below `1e-14` times the
/// largest diagonal entry.
pub fn cholesky_solve<R: Real>(a: &Array2<R>, b: &[R]) -> Result<Vec<R>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
            context: "cholesky_solve",
        });
    }
    let mut diag_max = R::zero();
    for i in 0..n {
        diag_max = diag_max.max(a[[i, i]].abs());
    }
    let floor = R::of(1e-14) * diag_max.max(R::one());

    // Lower-triangular factor, row-major.
    let mut l = vec![R::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= floor {
                    return Err(Error::Singular(format!(
                        "cholesky pivot {} at row {i} (floor {})",
                        sum.as_f64(),
                        floor.as_f64()
                    )));
                }
                l[i * n + j] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }

    // Forward then back substitution.
    let mut y = vec![R::zero(); n];
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    let mut x = vec![R::zero(); n];
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l[k * n + i] * x[k];
        }
        x[i] = sum / l[i * n + i];
    }
    Ok(x)
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Sweeps upper-triangle pairs in a fixed order until the off-diagonal
/// Frobenius norm falls below `tol` relative to the matrix norm. Returns
/// eigenvalues ascending with matching eigenvector columns.
pub struct SymEigen<R: Real> {
    pub values: Vec<R>,
    /// Column `j` is the eigenvector for `values[j]`.
    pub vectors: Array2<R>,
    pub sweeps: usize,
}

pub fn sym_eigen<R: Real>(a: &Array2<R>, tol: R, max_sweeps: usize) -> Result<SymEigen<R>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
            context: "sym_eigen",
        });
    }
    let mut m = a.clone();
    let mut v: Array2<R> = Array2::eye(n);
    let scale = frob_norm(&m).max(R::of(1e-300));
    let threshold = tol * scale;

    let off = |m: &Array2<R>| -> R {
        let mut s = R::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                s += m[[p, q]] * m[[p, q]];
            }
        }
        (s + s).sqrt()
    };

    let mut sweeps = 0;
    while off(&m) > threshold && sweeps < max_sweeps {
        sweeps += 1;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= threshold * R::of(1e-3) {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (R::of(2.0) * apq);
                let t = {
                    let s = theta.abs() + (R::one() + theta * theta).sqrt();
                    let t = R::one() / s;
                    if theta < R::zero() {
                        -t
                    } else {
                        t
                    }
                };
                let c = R::one() / (R::one() + t * t).sqrt();
                let s = t * c;

                for i in 0..n {
                    let mip = m[[i, p]];
                    let miq = m[[i, q]];
                    m[[i, p]] = c * mip - s * miq;
                    m[[i, q]] = s * mip + c * miq;
                }
                for i in 0..n {
                    let mpi = m[[p, i]];
                    let mqi = m[[q, i]];
                    m[[p, i]] = c * mpi - s * mqi;
                    m[[q, i]] = s * mpi + c * mqi;
                }
                for i in 0..n {
                    let vip = v[[i, p]];
                    let viq = v[[i, q]];
                    v[[i, p]] = c * vip - s * viq;
                    v[[i, q]] = s * vip + c * viq;
                }
            }
        }
    }
    if off(&m) > threshold {
        return Err(Error::NotConverged(format!(
            "jacobi off-diagonal {} above {} after {max_sweeps} sweeps",
            off(&m).as_f64(),
            threshold.as_f64()
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<R> = (0..n).map(|i| m[[i, i]]).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap());
    let values: Vec<R> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[[row, col]] = v[[row, src]];
        }
    }
    Ok(SymEigen {
        values,
        vectors,
        sweeps,
    })
}

/// Nearest positive semidefinite matrix in Frobenius norm: eigendecompose and
/// clip negative eigenvalues.
pub fn psd_project<R: Real>(a: &Array2<R>, tol: R, max_sweeps: usize) -> Result<Array2<R>> {
    let n = a.nrows();
    let eig = sym_eigen(a, tol, max_sweeps)?;
    let mut out: Array2<R> = Array2::zeros((n, n));
    for (j, &lam) in eig.values.iter().enumerate() {
        if lam <= R::zero() {
            continue;
        }
        for r in 0..n {
            let vr = eig.vectors[[r, j]] * lam;
            if vr == R::zero() {
                continue;
            }
            for c in 0..n {
                out[[r, c]] += vr * eig.vectors[[c, j]];
            }
        }
    }
    Ok(symmetrize(&out))
}

/// Spearman rank correlation with average ranks for ties.
///
/// Returns `None` when either input is constant (correlation undefined).
pub fn spearman<R: Real>(a: &[R], b: &[R]) -> Option<R> {
    debug_assert_eq!(a.len(), b.len());
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    pearson(&ra, &rb)
}

fn average_ranks<R: Real>(xs: &[R]) -> Vec<R> {
    let n = xs.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| xs[i].partial_cmp(&xs[j]).unwrap());
    let mut ranks = vec![R::zero(); n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        // ranks are 1-based; ties share the average rank
        let avg = R::of((i + j + 2) as f64 / 2.0);
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson<R: Real>(a: &[R], b: &[R]) -> Option<R> {
    let n = R::of(a.len() as f64);
    let ma = a.iter().copied().sum::<R>() / n;
    let mb = b.iter().copied().sum::<R>() / n;
    let mut sab = R::zero();
    let mut saa = R::zero();
    let mut sbb = R::zero();
    for (x, y) in a.iter().zip(b) {
        let dx = *x - ma;
        let dy = *y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == R::zero() || sbb == R::zero() {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

/// Arithmetic mean of a slice.
pub fn mean<R: Real>(xs: &[R]) -> R {
    debug_assert!(!xs.is_empty());
    xs.iter().copied().sum::<R>() / R::of(xs.len() as f64)
}

pub fn vec_to_array<R: Real>(v: Vec<R>) -> Array1<R> {
    Array1::from_vec(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use ndarray::array;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0f64]];
        let x_true = [1.0, -2.0, 0.5];
        let b: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| a[[i, j]] * x_true[j]).sum())
            .collect();
        let x = cholesky_solve(&a, &b).unwrap();
        for (xi, ti) in x.iter().zip(x_true.iter()) {
            assert!((xi - ti).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_singular() {
        let a = array![[1.0, 1.0], [1.0, 1.0f64]];
        assert!(cholesky_solve(&a, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        // tridiagonal (2, -1) matrix: eigenvalues 2 - sqrt(2), 2, 2 + sqrt(2)
        let a = array![[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0f64]];
        let eig = sym_eigen(&a, 1e-11, 50).unwrap();
        let s2 = 2f64.sqrt();
        assert!((eig.values[0] - (2.0 - s2)).abs() < 1e-9);
        assert!((eig.values[1] - 2.0).abs() < 1e-9);
        assert!((eig.values[2] - (2.0 + s2)).abs() < 1e-9);
        // A v = lambda v for each column.
        for j in 0..3 {
            for i in 0..3 {
                let av: f64 = (0..3).map(|k| a[[i, k]] * eig.vectors[[k, j]]).sum();
                assert!((av - eig.values[j] * eig.vectors[[i, j]]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn jacobi_random_reconstruction() {
        let mut s = Stream::new(5);
        for trial in 0..5 {
            let n = 4 + trial;
            let mut a = Array2::<f64>::zeros((n, n));
            for i in 0..n {
                for j in 0..=i {
                    let v = s.next_gaussian();
                    a[[i, j]] = v;
                    a[[j, i]] = v;
                }
            }
            let eig = sym_eigen(&a, 1e-12, 60).unwrap();
            // Reconstruct V diag(values) V^T.
            let mut rec = Array2::<f64>::zeros((n, n));
            for j in 0..n {
                for r in 0..n {
                    for c in 0..n {
                        rec[[r, c]] += eig.values[j] * eig.vectors[[r, j]] * eig.vectors[[c, j]];
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    assert!((rec[[i, j]] - a[[i, j]]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn psd_projection_clips_negative_part() {
        let a = array![[1.0, 0.0], [0.0, -2.0f64]];
        let p = psd_project(&a, 1e-12, 50).unwrap();
        assert!((p[[0, 0]] - 1.0).abs() < 1e-12);
        assert!(p[[1, 1]].abs() < 1e-12);
        // Idempotent on PSD input.
        let q = psd_project(&p, 1e-12, 50).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((p[[i, j]] - q[[i, j]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spearman_basics() {
        let a = [1.0, 2.0, 3.0, 4.0f64];
        let b = [10.0, 20.0, 30.0, 41.0];
        assert!((spearman(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let c = [4.0, 3.0, 2.0, 1.0];
        assert!((spearman(&a, &c).unwrap() + 1.0).abs() < 1e-12);
        let konst = [5.0, 5.0, 5.0, 5.0];
        assert!(spearman(&a, &konst).is_none());
    }
}
