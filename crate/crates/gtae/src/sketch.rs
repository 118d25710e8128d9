//! Seeded Gaussian random projection of gradient features, and the lift back
//! to parameter space.
//!
//! The implied `p x d` matrix `P` has i.i.d. `N(0, 1/d)` entries. Entry
//! `(i, j)` is `z(i, j) / sqrt(d)` where `z(i, j)` is a counter-based
//! standard Gaussian keyed by `(seed, row i, column j)` - so the same
//! `(p, d, seed)` always denotes the same matrix, entries can be produced in
//! any order, no storage is required for large `p`, and projections at a
//! smaller `d` under the same seed are column prefixes of larger ones (up to
//! the `1/sqrt(d)` scale).

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::linalg;
use crate::models::ModelParams;
use crate::rng::{derive, gaussian};
use crate::scalar::Real;

/// Seed value reserved for the identity projection.
const IDENTITY_SEED: u64 = u64::MAX;

/// Above this many entries the matrix is generated on the fly instead of
/// being materialized.
const MATERIALIZE_LIMIT: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenMode {
    /// Rows stored up front; right choice for small `p * d`.
    Materialized,
    /// Rows regenerated from counters on every use.
    OnTheFly,
    /// `P = I` (requires `d == p`); used for exact-regime checks.
    Identity,
}

/// A seeded projection `R^p -> R^d`.
#[derive(Debug, Clone)]
pub struct ProjectionHandle<R: Real> {
    pub p: usize,
    pub d: usize,
    pub seed: u64,
    pub mode: GenMode,
    rows: Option<Vec<R>>,
}

impl<R: Real> ProjectionHandle<R> {
    /// Gaussian projection with automatic storage mode.
    pub fn gaussian(p: usize, d: usize, seed: u64) -> Result<Self> {
        let mode = if p.saturating_mul(d) <= MATERIALIZE_LIMIT {
            GenMode::Materialized
        } else {
            GenMode::OnTheFly
        };
        Self::gaussian_with(p, d, seed, mode)
    }

    pub fn gaussian_with(p: usize, d: usize, seed: u64, mode: GenMode) -> Result<Self> {
        if p == 0 || d == 0 {
            return Err(Error::InvalidArgument("projection dims must be >= 1".into()));
        }
        if seed == IDENTITY_SEED {
            return Err(Error::InvalidArgument(
                "seed u64::MAX is reserved for the identity projection".into(),
            ));
        }
        if mode == GenMode::Identity {
            return Self::identity(p).and_then(|h| {
                if d == p {
                    Ok(h)
                } else {
                    Err(Error::InvalidArgument("identity projection needs d == p".into()))
                }
            });
        }
        let rows = match mode {
            GenMode::Materialized => {
                let mut rows = Vec::with_capacity(p * d);
                let mut buf = vec![R::zero(); d];
                for i in 0..p {
                    fill_row::<R>(seed, i, &mut buf);
                    rows.extend_from_slice(&buf);
                }
                Some(rows)
            }
            _ => None,
        };
        Ok(ProjectionHandle {
            p,
            d,
            seed,
            mode,
            rows,
        })
    }

    /// Identity projection (`d == p`).
    pub fn identity(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidArgument("projection dims must be >= 1".into()));
        }
        Ok(ProjectionHandle {
            p,
            d: p,
            seed: IDENTITY_SEED,
            mode: GenMode::Identity,
            rows: None,
        })
    }

    /// Reconstruct a handle from a gradient-cache header.
    pub fn from_header(p: usize, d: usize, seed: u64) -> Result<Self> {
        if seed == IDENTITY_SEED && d == p {
            Self::identity(p)
        } else {
            Self::gaussian(p, d, seed)
        }
    }

    fn with_row<T>(&self, i: usize, buf: &mut Vec<R>, f: impl FnOnce(&[R]) -> T) -> T {
        match self.mode {
            GenMode::Materialized => f(&self.rows.as_ref().unwrap()[i * self.d..(i + 1) * self.d]),
            GenMode::OnTheFly => {
                buf.resize(self.d, R::zero());
                fill_row::<R>(self.seed, i, buf);
                f(buf)
            }
            GenMode::Identity => unreachable!("identity handled by callers"),
        }
    }

    /// Project one gradient: `g_tilde = P^T g`.
    pub fn project(&self, g: &[R]) -> Result<Array1<R>> {
        Ok(self.project_batch(std::slice::from_ref(&g))?.pop().unwrap())
    }

    /// Project many gradients with each row of `P` generated once. The
    /// accumulation order (rows ascending) matches [`Self::project`] exactly,
    /// so single and batched projection agree bitwise.
    pub fn project_batch(&self, gs: &[&[R]]) -> Result<Vec<Array1<R>>> {
        for g in gs {
            if g.len() != self.p {
                return Err(Error::DimensionMismatch {
                    expected: self.p,
                    got: g.len(),
                    context: "project",
                });
            }
        }
        if self.mode == GenMode::Identity {
            return Ok(gs.iter().map(|g| Array1::from_vec(g.to_vec())).collect());
        }
        let mut outs: Vec<Vec<R>> = gs.iter().map(|_| vec![R::zero(); self.d]).collect();
        let mut buf = Vec::new();
        for i in 0..self.p {
            self.with_row(i, &mut buf, |row| {
                for (g, out) in gs.iter().zip(outs.iter_mut()) {
                    let gi = g[i];
                    if gi == R::zero() {
                        continue;
                    }
                    for (o, r) in out.iter_mut().zip(row) {
                        *o += gi * *r;
                    }
                }
            });
        }
        Ok(outs.into_iter().map(Array1::from_vec).collect())
    }

    /// Map a projected solution back: `theta_star + P w_d`.
    pub fn lift(&self, w_d: &[R], theta_star: &ModelParams<R>) -> Result<ModelParams<R>> {
        if w_d.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: w_d.len(),
                context: "lift",
            });
        }
        if theta_star.theta.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                got: theta_star.theta.len(),
                context: "lift anchor",
            });
        }
        let mut out = theta_star.clone();
        if self.mode == GenMode::Identity {
            for (t, w) in out.theta.iter_mut().zip(w_d) {
                *t += *w;
            }
            return Ok(out);
        }
        let mut buf = Vec::new();
        for i in 0..self.p {
            let delta = self.with_row(i, &mut buf, |row| linalg::dot(row, w_d));
            out.theta[i] += delta;
        }
        Ok(out)
    }

    /// Materialized copy of `P` (test/debug helper; refuses huge matrices).
    pub fn dense(&self) -> Result<ndarray::Array2<R>> {
        if self.p.saturating_mul(self.d) > MATERIALIZE_LIMIT {
            return Err(Error::Unsupported("projection too large to densify".into()));
        }
        let mut out = ndarray::Array2::zeros((self.p, self.d));
        if self.mode == GenMode::Identity {
            for i in 0..self.p {
                out[[i, i]] = R::one();
            }
            return Ok(out);
        }
        let mut buf = Vec::new();
        for i in 0..self.p {
            self.with_row(i, &mut buf, |row| {
                for j in 0..self.d {
                    out[[i, j]] = row[j];
                }
            });
        }
        Ok(out)
    }
}

fn fill_row<R: Real>(seed: u64, row: usize, buf: &mut [R]) {
    let key = derive(seed, "jl-row", row as u64);
    let scale = 1.0 / (buf.len() as f64).sqrt();
    for (j, slot) in buf.iter_mut().enumerate() {
        *slot = R::of(gaussian(key, j as u64) * scale);
    }
}

/// Projected dimension heuristic: `ceil(15 ln(p) / eps^2)` clamped to
/// `[8, p]`. At `eps = 1` this is the plain `15 ln p` rule.
pub fn choose_dim(p: usize, eps: f64) -> Result<usize> {
    let raw = choose_dim_raw(p, eps)?;
    Ok(raw.max(8).min(p))
}

/// The unclamped dimension rule.
pub fn choose_dim_raw(p: usize, eps: f64) -> Result<usize> {
    if p < 2 {
        return Err(Error::InvalidArgument("choose_dim needs p >= 2".into()));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument("eps must be in (0, 1]".into()));
    }
    Ok((15.0 * (p as f64).ln() / (eps * eps)).ceil() as usize)
}
