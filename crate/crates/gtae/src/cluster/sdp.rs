//! First-order splitting solver for the density SDP relaxation.
//!
//! Maximizes `<T, X>` over `{X : Xe = e, tr X = k} ∩ PSD ∩ {X >= 0}` by
//! consensus splitting: one copy of `X` per constraint set, each updated by
//! projection with a Dykstra-style running correction, and a consensus step
//! that also takes the (constant) gradient `T` of the linear objective.
//! The affine set has a closed-form projection; the PSD projection uses the
//! internal cyclic-Jacobi eigendecomposition.
//!
//! After the splitting iterations converge, the consensus point is polished
//! with exact cyclic Dykstra projections onto the intersection so the
//! returned `X` meets the feasibility residuals directly, and the objective
//! is reported at that feasible point.

use ndarray::Array2;

use crate::affinity::AffinityMatrix;
use crate::error::{Error, Result};
use crate::linalg::{frob_inner, frob_norm, sym_eigen, symmetrize};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
pub struct SdpOptions {
    /// Consensus penalty; `None` scales `||T||_F / n` (keeps the iterate
    /// trajectory invariant under rescaling of `T`).
    pub rho: Option<f64>,
    pub max_iter: usize,
    /// Feasibility tolerance the returned solution must meet.
    pub residual_tol: f64,
    /// Relative objective-change stopping tolerance.
    pub objective_tol: f64,
    /// Off-diagonal tolerance of the Jacobi eigendecomposition.
    pub jacobi_tol: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            rho: None,
            max_iter: 20_000,
            residual_tol: 1e-6,
            objective_tol: 1e-8,
            jacobi_tol: 1e-11,
        }
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SdpResiduals {
    /// `max_i |(X e)_i - 1|`
    pub row_sum: f64,
    /// `|tr X - k|`
    pub trace: f64,
    pub min_entry: f64,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution<R: Real> {
    pub x_hat: Array2<R>,
    pub objective: R,
    pub residuals: SdpResiduals,
    pub iterations: usize,
    pub converged: bool,
}

/// Solve the relaxation for a (symmetrized) affinity matrix.
pub fn solve_sdp<R: Real>(
    t: &AffinityMatrix<R>,
    k: usize,
    opts: &SdpOptions,
) -> Result<SdpSolution<R>> {
    let n = t.n();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} out of range for n = {n}"
        )));
    }
    // <T, X> = <sym(T), X> for symmetric X, so symmetrizing loses nothing.
    let t_sym = symmetrize(&t.values);
    let scale = frob_norm(&t_sym).max(R::of(1e-12));
    let rho = match opts.rho {
        Some(r) => R::of(r),
        None => scale / R::of(n as f64),
    };
    let jac_sweeps = 80;
    let jtol = R::of(opts.jacobi_tol);

    // Feasible start: a I + b ee^T with Xe = e, tr X = k.
    let a0 = R::of((k as f64 - 1.0) / (n as f64 - 1.0).max(1.0));
    let b0 = if n > 1 {
        R::of((n - k) as f64 / (n * (n - 1)) as f64)
    } else {
        R::zero()
    };
    let mut z: Array2<R> = Array2::from_elem((n, n), b0);
    for i in 0..n {
        z[[i, i]] += a0;
    }

    let mut y_aff = z.clone();
    let mut y_psd = z.clone();
    let mut y_pos = z.clone();
    let mut u_aff: Array2<R> = Array2::zeros((n, n));
    let mut u_psd: Array2<R> = Array2::zeros((n, n));
    let mut u_pos: Array2<R> = Array2::zeros((n, n));

    let third = R::of(1.0 / 3.0);
    let grad_step = t_sym.mapv(|v| v / (R::of(3.0) * rho));
    let mut prev_obj = frob_inner(&t_sym, &z);
    let obj_tol = R::of(opts.objective_tol) * scale.max(R::one());
    // inner splitting tolerance; final feasibility comes from the polish
    let res_target = R::of(1e-9) * R::of(n as f64).sqrt();

    let mut iterations = 0;
    let mut splitting_converged = false;
    while iterations < opts.max_iter {
        iterations += 1;

        project_affine(&mut y_aff, &z, &u_aff, k);
        project_psd_into(&mut y_psd, &z, &u_psd, jtol, jac_sweeps)?;
        project_nonneg(&mut y_pos, &z, &u_pos);

        let mut z_new: Array2<R> = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                z_new[[i, j]] = (y_aff[[i, j]]
                    + u_aff[[i, j]]
                    + y_psd[[i, j]]
                    + u_psd[[i, j]]
                    + y_pos[[i, j]]
                    + u_pos[[i, j]])
                    * third
                    + grad_step[[i, j]];
            }
        }

        let mut primal = R::zero();
        for i in 0..n {
            for j in 0..n {
                let za = y_aff[[i, j]] - z_new[[i, j]];
                let zp = y_psd[[i, j]] - z_new[[i, j]];
                let zo = y_pos[[i, j]] - z_new[[i, j]];
                u_aff[[i, j]] += za;
                u_psd[[i, j]] += zp;
                u_pos[[i, j]] += zo;
                primal = primal.max(za.abs()).max(zp.abs()).max(zo.abs());
            }
        }
        let dual: R = {
            let mut acc = R::zero();
            for i in 0..n {
                for j in 0..n {
                    let d = z_new[[i, j]] - z[[i, j]];
                    acc += d * d;
                }
            }
            acc.sqrt()
        };
        z = z_new;

        let obj = frob_inner(&t_sym, &z);
        let obj_change = (obj - prev_obj).abs();
        prev_obj = obj;
        if primal <= res_target && dual <= res_target && obj_change <= obj_tol {
            splitting_converged = true;
            break;
        }
    }

    // Polish to exact feasibility with cyclic Dykstra projections.
    let polished = dykstra_project(&z, k, R::of(1e-10), jtol, jac_sweeps, 4000)?;
    let x_hat = polished;
    let residuals = measure_residuals(&x_hat, k, jtol, jac_sweeps)?;
    let worst = residuals
        .row_sum
        .max(residuals.trace)
        .max((-residuals.min_entry).max(0.0))
        .max((-residuals.min_eigenvalue).max(0.0));
    let converged = splitting_converged && worst <= opts.residual_tol;
    if !converged && worst > 1e-4 {
        return Err(Error::NotConverged(format!(
            "sdp solver: worst residual {worst:.3e} after {iterations} iterations"
        )));
    }
    let objective = frob_inner(&t_sym, &x_hat);
    Ok(SdpSolution {
        x_hat,
        objective,
        residuals,
        iterations,
        converged,
    })
}

/// Projection onto `{X symmetric : Xe = e, tr X = k}` of `base + correction`.
fn project_affine<R: Real>(out: &mut Array2<R>, z: &Array2<R>, u: &Array2<R>, k: usize) {
    let n = z.nrows();
    let mut b: Array2<R> = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            b[[i, j]] = z[[i, j]] - u[[i, j]];
        }
    }
    let b = symmetrize(&b);
    // X = B + e a^T + a e^T + g I with Xe = e and tr X = k:
    //   g = (k - tr B - 1 + e^T B e / n) / (n - 1)
    //   s = (1 - e^T B e / n - g) / 2
    //   a = (e - B e - (s + g) e) / n
    let row_sums: Vec<R> = (0..n)
        .map(|i| (0..n).map(|j| b[[i, j]]).sum::<R>())
        .collect();
    let total: R = row_sums.iter().copied().sum();
    let trace: R = (0..n).map(|i| b[[i, i]]).sum();
    let n_r = R::of(n as f64);
    let g = if n > 1 {
        (R::of(k as f64) - trace - R::one() + total / n_r) / R::of((n - 1) as f64)
    } else {
        R::of(k as f64) - trace
    };
    let s = (R::one() - total / n_r - g) / R::of(2.0);
    let alpha: Vec<R> = (0..n)
        .map(|i| (R::one() - row_sums[i] - (s + g)) / n_r)
        .collect();
    for i in 0..n {
        for j in 0..n {
            let mut v = b[[i, j]] + alpha[i] + alpha[j];
            if i == j {
                v += g;
            }
            out[[i, j]] = v;
        }
    }
}

fn project_psd_into<R: Real>(
    out: &mut Array2<R>,
    z: &Array2<R>,
    u: &Array2<R>,
    jtol: R,
    sweeps: usize,
) -> Result<()> {
    let n = z.nrows();
    let mut b: Array2<R> = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            b[[i, j]] = z[[i, j]] - u[[i, j]];
        }
    }
    let b = symmetrize(&b);
    *out = crate::linalg::psd_project(&b, jtol, sweeps)?;
    Ok(())
}

fn project_nonneg<R: Real>(out: &mut Array2<R>, z: &Array2<R>, u: &Array2<R>) {
    let n = z.nrows();
    for i in 0..n {
        for j in 0..n {
            out[[i, j]] = (z[[i, j]] - u[[i, j]]).max(R::zero());
        }
    }
}

/// Exact projection onto the intersection via cyclic Dykstra.
fn dykstra_project<R: Real>(
    x0: &Array2<R>,
    k: usize,
    tol: R,
    jtol: R,
    sweeps: usize,
    max_cycles: usize,
) -> Result<Array2<R>> {
    let n = x0.nrows();
    let mut x = symmetrize(x0);
    let zero: Array2<R> = Array2::zeros((n, n));
    let mut p_aff = zero.clone();
    let mut p_psd = zero.clone();
    let mut p_pos = zero;

    for _ in 0..max_cycles {
        // affine
        let mut y: Array2<R> = Array2::zeros((n, n));
        project_affine(&mut y, &(&x + &p_aff), &Array2::zeros((n, n)), k);
        p_aff = &x + &p_aff - &y;
        x = y;
        // psd
        let arg = &x + &p_psd;
        let y = crate::linalg::psd_project(&symmetrize(&arg), jtol, sweeps)?;
        p_psd = arg - &y;
        x = y;
        // nonneg
        let arg = &x + &p_pos;
        let y = arg.mapv(|v| v.max(R::zero()));
        p_pos = arg - &y;
        x = y;

        // cheap residuals; eigenvalue re-checked by the caller
        let mut row = R::zero();
        let mut trace = R::zero();
        for i in 0..n {
            let rs: R = (0..n).map(|j| x[[i, j]]).sum();
            row = row.max((rs - R::one()).abs());
            trace += x[[i, i]];
        }
        let trace_err = (trace - R::of(k as f64)).abs();
        let min_entry = x.iter().fold(R::zero(), |m, &v| m.min(v));
        if row <= tol && trace_err <= tol && min_entry >= -tol {
            break;
        }
    }
    Ok(x)
}

fn measure_residuals<R: Real>(
    x: &Array2<R>,
    k: usize,
    jtol: R,
    sweeps: usize,
) -> Result<SdpResiduals> {
    let n = x.nrows();
    let mut row = 0.0f64;
    let mut trace = 0.0f64;
    let mut min_entry = f64::INFINITY;
    for i in 0..n {
        let rs: f64 = (0..n).map(|j| x[[i, j]].as_f64()).sum();
        row = row.max((rs - 1.0).abs());
        trace += x[[i, i]].as_f64();
        for j in 0..n {
            min_entry = min_entry.min(x[[i, j]].as_f64());
        }
    }
    let eig = sym_eigen(x, jtol, sweeps)?;
    Ok(SdpResiduals {
        row_sum: row,
        trace: (trace - k as f64).abs(),
        min_entry,
        min_eigenvalue: eig.values[0].as_f64(),
    })
}
