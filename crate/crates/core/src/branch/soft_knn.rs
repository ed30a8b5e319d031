//! Differentiable nearest-neighbour vote: a temperature softmax over the
//! negative squared distances to the `k` closest context points.

use crate::error::{BvaeError, Result};
use crate::NUM_CLASSES;

/// Probability clamp applied before taking the log of a vote share.
pub const PROB_FLOOR: f64 = 1e-7;

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` smallest `(distance, index)` pairs, nearest first.
pub(crate) fn k_nearest(dist: &mut [(f64, usize)], k: usize) -> &[(f64, usize)] {
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, cmp);
    }
    let top = &mut dist[..k];
    top.sort_unstable_by(cmp);
    top
}

/// Softmax weights of `-d/τ` over the selected neighbours.
pub(crate) fn neighbour_weights(near: &[(f64, usize)], tau: f64) -> Vec<f64> {
    let s_max = near.iter().map(|&(d, _)| -d / tau).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = near.iter().map(|&(d, _)| (-d / tau - s_max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

fn check(k: usize, tau: f64, available: usize) -> Result<()> {
    if !(tau > 0.0) {
        return Err(BvaeError::Config(format!("soft-kNN temperature must be positive, got {tau}")));
    }
    if available == 0 {
        return Err(BvaeError::Config("soft-kNN needs a non-empty context".into()));
    }
    if k == 0 || k > available {
        return Err(BvaeError::Config(format!(
            "soft-kNN asks for {k} neighbours but the context holds {available}"
        )));
    }
    Ok(())
}

/// Class probabilities of `query` against `context` (row-major, `dim`
/// columns) with the given context labels.
pub fn soft_knn_probs(
    query: &[f64],
    context: &[f64],
    labels: &[u8],
    k: usize,
    tau: f64,
) -> Result<[f64; NUM_CLASSES]> {
    let dim = query.len();
    if dim == 0 || context.len() != labels.len() * dim {
        return Err(BvaeError::dim(
            "soft_knn_probs",
            format!("context of {} values for {} labels of dim {dim}", context.len(), labels.len()),
        ));
    }
    check(k, tau, labels.len())?;
    let mut dist: Vec<(f64, usize)> = context
        .chunks_exact(dim)
        .enumerate()
        .map(|(j, c)| (sq_dist(query, c), j))
        .collect();
    let near = k_nearest(&mut dist, k);
    let w = neighbour_weights(near, tau);
    let mut p = [0.0; NUM_CLASSES];
    for (&(_, j), wj) in near.iter().zip(w) {
        p[labels[j] as usize] += wj;
    }
    Ok(p)
}

/// Per-sample neighbourhood inside a batch (self excluded).
#[derive(Clone, Debug)]
pub(crate) struct Neighbourhood {
    pub neighbours: Vec<(usize, f64)>,
    pub probs: [f64; NUM_CLASSES],
}

/// Neighbourhoods of every batch row against all other rows.
pub(crate) fn batch_neighbourhoods(
    z: &[f64],
    dim: usize,
    labels: &[u8],
    k: usize,
    tau: f64,
) -> Result<Vec<Neighbourhood>> {
    let b = labels.len();
    check(k, tau, b.saturating_sub(1))?;
    let rows: Vec<&[f64]> = z.chunks_exact(dim).collect();
    let mut dist = Vec::with_capacity(b);
    let mut out = Vec::with_capacity(b);
    for i in 0..b {
        dist.clear();
        dist.extend((0..b).filter(|&j| j != i).map(|j| (sq_dist(rows[i], rows[j]), j)));
        let near = k_nearest(&mut dist, k);
        let w = neighbour_weights(near, tau);
        let mut probs = [0.0; NUM_CLASSES];
        for (&(_, j), &wj) in near.iter().zip(&w) {
            probs[labels[j] as usize] += wj;
        }
        out.push(Neighbourhood {
            neighbours: near.iter().map(|&(_, j)| j).zip(w).collect(),
            probs,
        });
    }
    Ok(out)
}

/// Gradient of `Σ_i a_i · (-ln max(p_i[y_i], floor))` w.r.t. the batch codes.
pub(crate) fn batch_grad(
    z: &[f64],
    dim: usize,
    labels: &[u8],
    hoods: &[Neighbourhood],
    coef: &[f64],
    tau: f64,
) -> Vec<f64> {
    let mut g = vec![0.0; z.len()];
    for (i, hood) in hoods.iter().enumerate() {
        let p = hood.probs[labels[i] as usize];
        if p <= PROB_FLOOR || coef[i] == 0.0 {
            continue;
        }
        for &(j, wj) in &hood.neighbours {
            let delta = if labels[j] == labels[i] { 1.0 } else { 0.0 };
            // dL/ds_j with s_j = -|z_i - z_j|^2 / tau
            let dl_ds = coef[i] * wj * (1.0 - delta / p);
            let scale = -2.0 * dl_ds / tau;
            for d in 0..dim {
                let diff = z[i * dim + d] - z[j * dim + d];
                g[i * dim + d] += scale * diff;
                g[j * dim + d] -= scale * diff;
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_context() {
        let p = soft_knn_probs(&[0.5, 0.5], &[1.0, 2.0], &[3], 1, 1.0).unwrap();
        assert_eq!(p[3], 1.0);
    }

    #[test]
    fn equidistant_pair_splits_evenly() {
        for tau in [1e-3, 0.5, 20.0] {
            let p = soft_knn_probs(&[0.0, 0.0], &[1.0, 0.0, -1.0, 0.0], &[2, 7], 2, tau).unwrap();
            assert!((p[2] - 0.5).abs() < 1e-15 && (p[7] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn shared_class_is_certain() {
        let ctx = [0.0, 1.0, 2.0, 5.0, 3.0, -1.0];
        let p = soft_knn_probs(&[0.1, 0.2], &ctx, &[4, 4, 4], 3, 0.3).unwrap();
        assert!((p[4] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cold_limit_is_nearest_neighbour() {
        let ctx = [0.0, 0.0, 1.0, 0.0, 0.0, 3.0];
        let p = soft_knn_probs(&[0.7, 0.1], &ctx, &[1, 5, 9], 3, 1e-4).unwrap();
        assert!((p[5] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_or_small_context_is_config_error() {
        assert!(matches!(soft_knn_probs(&[0.0], &[], &[], 1, 1.0), Err(BvaeError::Config(_))));
        assert!(matches!(soft_knn_probs(&[0.0], &[1.0], &[0], 2, 1.0), Err(BvaeError::Config(_))));
        assert!(matches!(soft_knn_probs(&[0.0], &[1.0], &[0], 1, 0.0), Err(BvaeError::Config(_))));
    }
}
