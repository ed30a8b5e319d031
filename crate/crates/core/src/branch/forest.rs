//! Random forest of Gini CART trees with bootstrap sampling and `√d`
//! feature subsampling.

use rand::seq::index;
use rand::Rng as _;

use crate::error::{BvaeError, Result};
use crate::rng::{self, Rng};
use crate::tensor::{Scalar, Tensor};
use crate::NUM_CLASSES;

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf([f64; NUM_CLASSES]),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomForest {
    dim: usize,
    trees: Vec<DecisionTree>,
}

fn gini(counts: &[usize; NUM_CLASSES], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

struct Builder<'a> {
    x: &'a [f64],
    y: &'a [u8],
    dim: usize,
    max_depth: usize,
    mtry: usize,
    rng: Rng,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let mut dist = [0.0; NUM_CLASSES];
        for &i in idx {
            dist[self.y[i] as usize] += 1.0;
        }
        dist.iter_mut().for_each(|v| *v /= idx.len().max(1) as f64);
        self.nodes.push(Node::Leaf(dist));
        self.nodes.len() - 1
    }

    /// Best `(impurity, feature, threshold)` over the sampled features.
    fn best_split(&mut self, idx: &[usize]) -> Option<(f64, usize, f64)> {
        let features = index::sample(&mut self.rng, self.dim, self.mtry).into_vec();
        let mut total = [0usize; NUM_CLASSES];
        for &i in idx {
            total[self.y[i] as usize] += 1;
        }
        let n = idx.len();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for f in features {
            let val = |i: usize| self.x[i * self.dim + f];
            order.sort_by(|&a, &b| val(a).total_cmp(&val(b)).then(a.cmp(&b)));
            let mut left = [0usize; NUM_CLASSES];
            for s in 0..n - 1 {
                left[self.y[order[s]] as usize] += 1;
                let (a, b) = (val(order[s]), val(order[s + 1]));
                if a == b {
                    continue;
                }
                let nl = s + 1;
                let mut right = total;
                right.iter_mut().zip(&left).for_each(|(r, l)| *r -= l);
                let imp = (nl as f64 * gini(&left, nl) + (n - nl) as f64 * gini(&right, n - nl)) / n as f64;
                if best.is_none_or(|(bi, _, _)| imp < bi) {
                    best = Some((imp, f, 0.5 * (a + b)));
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let pure = idx.windows(2).all(|w| self.y[w[0]] == self.y[w[1]]);
        if depth >= self.max_depth || idx.len() < 2 || pure {
            return self.leaf(&idx);
        }
        let Some((_, feature, threshold)) = self.best_split(&idx) else {
            return self.leaf(&idx);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i * self.dim + feature] <= threshold);
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf([0.0; NUM_CLASSES]));
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[me] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        me
    }
}

impl DecisionTree {
    fn proba(&self, q: &[f64]) -> &[f64; NUM_CLASSES] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(d) => return d,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if q[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn rec(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + rec(nodes, *left).max(rec(nodes, *right)),
            }
        }
        rec(&self.nodes, 0)
    }
}

/// Fits `n_estimators` trees, each on its own bootstrap sample drawn from
/// a stream derived from `seed` and the tree index.
pub fn fit_random_forest<T: Scalar>(
    train_z: &Tensor<T>,
    train_labels: &[u8],
    n_estimators: usize,
    max_depth: usize,
    seed: u64,
) -> Result<RandomForest> {
    if train_z.ndim() != 2 || train_z.rows() != train_labels.len() || train_labels.is_empty() {
        return Err(BvaeError::dim(
            "fit_random_forest",
            format!("codes {:?} vs {} labels", train_z.shape(), train_labels.len()),
        ));
    }
    if n_estimators == 0 {
        return Err(BvaeError::Config("random forest needs at least one estimator".into()));
    }
    let dim = train_z.row_len();
    let x: Vec<f64> = train_z.data().iter().map(|v| v.as_f64()).collect();
    let n = train_labels.len();
    let mtry = ((dim as f64).sqrt().floor() as usize).clamp(1, dim);
    let trees = (0..n_estimators)
        .map(|t| {
            let mut rng = rng::stream(seed, "forest-tree", t as u64);
            let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut b = Builder {
                x: &x,
                y: train_labels,
                dim,
                max_depth,
                mtry,
                rng,
                nodes: Vec::new(),
            };
            b.grow(sample, 0);
            DecisionTree { nodes: b.nodes }
        })
        .collect();
    Ok(RandomForest { dim, trees })
}

impl RandomForest {
    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    /// Mean of the per-tree leaf class distributions, `[B × 10]`.
    pub fn predict_proba<T: Scalar>(&self, q: &Tensor<T>) -> Result<Tensor<f64>> {
        if q.ndim() != 2 || q.row_len() != self.dim {
            return Err(BvaeError::dim("forest predict", format!("query {:?}, dim {}", q.shape(), self.dim)));
        }
        let mut out = Tensor::zeros(&[q.rows(), NUM_CLASSES]);
        let inv = 1.0 / self.trees.len() as f64;
        for r in 0..q.rows() {
            let qr: Vec<f64> = q.row(r).iter().map(|v| v.as_f64()).collect();
            let row = out.row_mut(r);
            for t in &self.trees {
                for (o, p) in row.iter_mut().zip(t.proba(&qr)) {
                    *o += p * inv;
                }
            }
        }
        Ok(out)
    }

    pub fn predict<T: Scalar>(&self, q: &Tensor<T>) -> Result<Vec<u8>> {
        Ok(super::knn::argmax_rows(&self.predict_proba(q)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_class_everywhere() {
        let z = Tensor::from_vec(&[3, 2], vec![0.0f64, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let f = fit_random_forest(&z, &[6, 6, 6], 5, 4, 1).unwrap();
        let q = Tensor::from_vec(&[2, 2], vec![-10.0f64, 0.0, 99.0, 7.0]).unwrap();
        assert_eq!(f.predict(&q).unwrap(), vec![6, 6]);
    }

    #[test]
    fn stump_separates_threshold_data() {
        // a wide gap keeps every bootstrap threshold between the classes
        let xs: Vec<f64> = (0..20).map(|i| if i < 9 { i as f64 } else { 100.0 + i as f64 }).collect();
        let labels: Vec<u8> = (0..20).map(|i| if i < 9 { 1 } else { 4 }).collect();
        let z = Tensor::from_vec(&[20, 1], xs).unwrap();
        let f = fit_random_forest(&z, &labels, 15, 1, 3).unwrap();
        assert!(f.trees().iter().all(|t| t.depth() <= 1));
        let pred = f.predict(&z).unwrap();
        let acc = pred.iter().zip(&labels).filter(|(a, b)| a == b).count();
        assert_eq!(acc, 20);
    }

    #[test]
    fn same_seed_same_forest() {
        let z = Tensor::from_vec(&[8, 2], (0..16).map(|i| ((i * 7) % 11) as f64).collect()).unwrap();
        let labels = [0, 1, 2, 0, 1, 2, 0, 1];
        let a = fit_random_forest(&z, &labels, 6, 5, 42).unwrap();
        let b = fit_random_forest(&z, &labels, 6, 5, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.predict_proba(&z).unwrap(), b.predict_proba(&z).unwrap());
    }

    #[test]
    fn single_sample_is_single_leaf() {
        let z = Tensor::from_vec(&[1, 2], vec![0.5f64, 0.5]).unwrap();
        let f = fit_random_forest(&z, &[3], 3, 5, 0).unwrap();
        assert!(f.trees().iter().all(|t| t.depth() == 0));
    }
}
