//! Lloyd's k-means with k-means++ seeding and restarts.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{BvaeError, Result};
use crate::rng::{self, Rng};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KmeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    /// Convergence threshold on the largest centroid displacement.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        Self {
            k: 10,
            restarts: 10,
            max_iter: 300,
            tol: 1e-4,
            seed: 0,
        }
    }
}

/// Cluster assignment of every point with its centroids.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub assignments: Vec<usize>,
    pub k: usize,
    /// `[k × dim]`.
    pub centroids: Vec<f64>,
    pub wcss: f64,
    /// WCSS after each assignment step of the returned run.
    pub history: Vec<f64>,
    pub restart: usize,
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus(x: &[f64], dim: usize, k: usize, rng: &mut Rng) -> Vec<f64> {
    let n = x.len() / dim;
    let mut cent = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    cent.extend_from_slice(&x[first * dim..(first + 1) * dim]);
    let mut d2: Vec<f64> = (0..n).map(|i| sq(&x[i * dim..(i + 1) * dim], &cent[..dim])).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        cent.extend_from_slice(&x[pick * dim..(pick + 1) * dim]);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq(&x[i * dim..(i + 1) * dim], &cent[c * dim..(c + 1) * dim]));
        }
    }
    cent
}

/// Assigns each point to its nearest centroid (lowest index on ties);
/// returns the WCSS.
fn assign(x: &[f64], dim: usize, cent: &[f64], k: usize, out: &mut [usize], dist: &mut [f64]) -> f64 {
    let mut wcss = 0.0;
    for (i, p) in x.chunks_exact(dim).enumerate() {
        let mut best = (f64::INFINITY, 0);
        for c in 0..k {
            let d = sq(p, &cent[c * dim..(c + 1) * dim]);
            if d < best.0 {
                best = (d, c);
            }
        }
        out[i] = best.1;
        dist[i] = best.0;
        wcss += best.0;
    }
    wcss
}

/// Moves the point farthest from its centroid (taken from a cluster with
/// more than one member) into each empty cluster.
fn repair_empty(
    x: &[f64],
    dim: usize,
    cent: &mut [f64],
    asg: &mut [usize],
    dist: &mut [f64],
    counts: &mut [usize],
    mut sums: Option<&mut Vec<f64>>,
) {
    for c in 0..counts.len() {
        if counts[c] > 0 {
            continue;
        }
        let far = (0..asg.len())
            .filter(|&i| counts[asg[i]] > 1)
            .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)));
        let Some(i) = far else { continue };
        let p = &x[i * dim..(i + 1) * dim];
        let old = asg[i];
        counts[old] -= 1;
        counts[c] = 1;
        if let Some(s) = sums.as_deref_mut() {
            s[old * dim..(old + 1) * dim].iter_mut().zip(p).for_each(|(s, v)| *s -= v);
            s[c * dim..(c + 1) * dim].copy_from_slice(p);
        }
        cent[c * dim..(c + 1) * dim].copy_from_slice(p);
        asg[i] = c;
        dist[i] = 0.0;
    }
}

fn lloyd(x: &[f64], dim: usize, cfg: &KmeansConfig, rng: &mut Rng) -> (Vec<usize>, Vec<f64>, f64, Vec<f64>) {
    let n = x.len() / dim;
    let k = cfg.k;
    let mut cent = plus_plus(x, dim, k, rng);
    let mut asg = vec![0; n];
    let mut dist = vec![0.0; n];
    let mut history = Vec::new();
    for _ in 0..cfg.max_iter {
        history.push(assign(x, dim, &cent, k, &mut asg, &mut dist));
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (i, p) in x.chunks_exact(dim).enumerate() {
            counts[asg[i]] += 1;
            sums[asg[i] * dim..(asg[i] + 1) * dim].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        repair_empty(x, dim, &mut cent, &mut asg, &mut dist, &mut counts, Some(&mut sums));
        let mut shift = 0.0f64;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            for d in 0..dim {
                let m = sums[c * dim + d] / counts[c] as f64;
                shift = shift.max((m - cent[c * dim + d]).abs());
                cent[c * dim + d] = m;
            }
        }
        if shift <= cfg.tol {
            break;
        }
    }
    assign(x, dim, &cent, k, &mut asg, &mut dist);
    let mut counts = vec![0usize; k];
    asg.iter().for_each(|&c| counts[c] += 1);
    repair_empty(x, dim, &mut cent, &mut asg, &mut dist, &mut counts, None);
    let wcss = dist.iter().sum();
    history.push(wcss);
    (asg, cent, wcss, history)
}

/// Best of `restarts` k-means runs by WCSS (earlier restart on ties).
pub fn kmeans<T: Scalar>(points: &Tensor<T>, cfg: &KmeansConfig) -> Result<Partition> {
    if points.ndim() != 2 {
        return Err(BvaeError::dim("kmeans", format!("points {:?}", points.shape())));
    }
    let n = points.rows();
    if cfg.k == 0 || n < cfg.k {
        return Err(BvaeError::Config(format!("k-means needs at least k={} points, got {n}", cfg.k)));
    }
    let dim = points.row_len();
    let x: Vec<f64> = points.data().iter().map(|v| v.as_f64()).collect();
    let mut best: Option<Partition> = None;
    for r in 0..cfg.restarts.max(1) {
        let mut rng = rng::stream(cfg.seed, "kmeans", r as u64);
        let (assignments, centroids, wcss, history) = lloyd(&x, dim, cfg, &mut rng);
        if best.as_ref().is_none_or(|b| wcss < b.wcss) {
            best = Some(Partition {
                assignments,
                k: cfg.k,
                centroids,
                wcss,
                history,
                restart: r,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}
