//! Seeded Lloyd iterations with k-means++ initialization.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::rng::{derive, Stream};
use crate::scalar::Real;

/// Cluster the rows of `points` into `k` groups; returns per-row labels and
/// the within-cluster sum of squares of the best of `restarts` runs.
///
/// Deterministic: restarts are seeded from `seed`, assignment ties go to the
/// lowest center index, and an emptied cluster is re-seeded at the point
/// farthest from its center (ties to the lowest row index).
pub fn kmeans<R: Real>(
    points: &Array2<R>,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<(Vec<usize>, R)> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "kmeans: k = {k} out of range for {n} points"
        )));
    }
    if restarts == 0 {
        return Err(Error::InvalidArgument("kmeans needs >= 1 restart".into()));
    }
    let mut best: Option<(Vec<usize>, R)> = None;
    for r in 0..restarts {
        let (labels, sse) = lloyd_once(points, k, derive(seed, "kmeans-restart", r as u64));
        let better = match &best {
            None => true,
            Some((_, best_sse)) => sse < *best_sse,
        };
        if better {
            best = Some((labels, sse));
        }
    }
    Ok(best.unwrap())
}

fn dist2<R: Real>(points: &Array2<R>, row: usize, center: &[R]) -> R {
    let dim = points.ncols();
    let mut acc = R::zero();
    for c in 0..dim {
        let d = points[[row, c]] - center[c];
        acc += d * d;
    }
    acc
}

fn lloyd_once<R: Real>(points: &Array2<R>, k: usize, seed: u64) -> (Vec<usize>, R) {
    let n = points.nrows();
    let dim = points.ncols();
    let mut stream = Stream::new(seed);

    // k-means++ seeding
    let mut centers: Vec<Vec<R>> = Vec::with_capacity(k);
    let first = stream.below(n as u64) as usize;
    centers.push(points.row(first).to_vec());
    let mut d2: Vec<R> = (0..n).map(|i| dist2(points, i, &centers[0])).collect();
    while centers.len() < k {
        let total: R = d2.iter().copied().sum();
        let next = if total <= R::zero() {
            // all points coincide with existing centers: take the lowest
            // index not yet chosen
            (0..n)
                .find(|i| !centers.iter().any(|c| dist2(points, *i, c) == R::zero()))
                .unwrap_or(centers.len() % n)
        } else {
            let mut target = R::of(stream.next_f64()) * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        };
        centers.push(points.row(next).to_vec());
        for i in 0..n {
            let nd = dist2(points, i, centers.last().unwrap());
            if nd < d2[i] {
                d2[i] = nd;
            }
        }
    }

    let mut labels = vec![0usize; n];
    for _ in 0..200 {
        // assignment
        let mut changed = false;
        for i in 0..n {
            let mut best_c = 0usize;
            let mut best_d = dist2(points, i, &centers[0]);
            for (c, center) in centers.iter().enumerate().skip(1) {
                let d = dist2(points, i, center);
                if d < best_d {
                    best_d = d;
                    best_c = c;
                }
            }
            if labels[i] != best_c {
                labels[i] = best_c;
                changed = true;
            }
        }

        // update, re-seeding empty clusters at the worst-fit point
        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![R::zero(); dim]; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for c in 0..dim {
                sums[labels[i]][c] += points[[i, c]];
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let mut far = 0usize;
                let mut far_d = R::neg_infinity();
                for i in 0..n {
                    let d = dist2(points, i, &centers[labels[i]]);
                    if d > far_d {
                        far_d = d;
                        far = i;
                    }
                }
                centers[c] = points.row(far).to_vec();
                labels[far] = c;
                changed = true;
            } else {
                let inv = R::one() / R::of(counts[c] as f64);
                for j in 0..dim {
                    centers[c][j] = sums[c][j] * inv;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut sse = R::zero();
    for i in 0..n {
        sse += dist2(points, i, &centers[labels[i]]);
    }
    (labels, sse)
}
