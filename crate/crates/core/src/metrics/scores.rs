//! Partition agreement scores: ACC, NMI, ARI and the confusion matrix.

use serde::{Deserialize, Serialize};

use super::hungarian::hungarian;
use crate::error::{BvaeError, Result};
use crate::NUM_CLASSES;

/// Joint counts `table[l][c]` of two labelings with compacted ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Contingency {
    pub rows: usize,
    pub cols: usize,
    pub table: Vec<u64>,
    pub n: u64,
}

impl Contingency {
    pub fn new(labels: &[usize], clusters: &[usize]) -> Result<Self> {
        if labels.len() != clusters.len() {
            return Err(BvaeError::dim(
                "contingency",
                format!("{} labels vs {} cluster ids", labels.len(), clusters.len()),
            ));
        }
        let rows = labels.iter().max().map_or(0, |m| m + 1);
        let cols = clusters.iter().max().map_or(0, |m| m + 1);
        let mut table = vec![0u64; rows * cols];
        for (&l, &c) in labels.iter().zip(clusters) {
            table[l * cols + c] += 1;
        }
        Ok(Self {
            rows,
            cols,
            table,
            n: labels.len() as u64,
        })
    }

    pub fn at(&self, r: usize, c: usize) -> u64 {
        self.table[r * self.cols + c]
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.rows).map(|r| (0..self.cols).map(|c| self.at(r, c)).sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.cols).map(|c| (0..self.rows).map(|r| self.at(r, c)).sum()).collect()
    }
}

/// Best one-to-one mapping accuracy of clusters onto labels.
pub fn acc(labels: &[usize], clusters: &[usize]) -> Result<f64> {
    let t = Contingency::new(labels, clusters)?;
    if t.n == 0 {
        return Ok(0.0);
    }
    let n = t.rows.max(t.cols);
    // cost[c][l] = -count, padded with zeros to a square matrix
    let mut cost = vec![0.0; n * n];
    for r in 0..t.rows {
        for c in 0..t.cols {
            cost[c * n + r] = -(t.at(r, c) as f64);
        }
    }
    let perm = hungarian(&cost, n)?;
    let hit: u64 = perm
        .iter()
        .enumerate()
        .filter(|&(c, &l)| c < t.cols && l < t.rows)
        .map(|(c, &l)| t.at(l, c))
        .sum();
    Ok(hit as f64 / t.n as f64)
}

fn entropy(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information in nats.
pub fn mutual_information(t: &Contingency) -> f64 {
    let n = t.n as f64;
    let (rs, cs) = (t.row_sums(), t.col_sums());
    let mut mi = 0.0;
    for r in 0..t.rows {
        for c in 0..t.cols {
            let nij = t.at(r, c);
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (rs[r] as f64 * cs[c] as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// `MI / max(H(labels), H(clusters))`. Two constant partitions count as
/// identical (1); a single constant partition scores 0.
pub fn nmi(labels: &[usize], clusters: &[usize]) -> Result<f64> {
    let t = Contingency::new(labels, clusters)?;
    if t.n == 0 {
        return Err(BvaeError::Validation("NMI of empty partitions".into()));
    }
    let n = t.n as f64;
    let hl = entropy(&t.row_sums(), n);
    let hc = entropy(&t.col_sums(), n);
    let denom = hl.max(hc);
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((mutual_information(&t) / denom).min(1.0))
}

fn comb2(x: u64) -> f64 {
    x as f64 * (x as f64 - 1.0) / 2.0
}

/// Pair counts behind the Rand index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairCounts {
    /// Same label, same cluster.
    pub a: f64,
    /// Different label, different cluster.
    pub b: f64,
    pub total: f64,
}

pub fn pair_counts(labels: &[usize], clusters: &[usize]) -> Result<PairCounts> {
    let t = Contingency::new(labels, clusters)?;
    let a: f64 = t.table.iter().map(|&v| comb2(v)).sum();
    let same_l: f64 = t.row_sums().iter().map(|&v| comb2(v)).sum();
    let same_c: f64 = t.col_sums().iter().map(|&v| comb2(v)).sum();
    let total = comb2(t.n);
    Ok(PairCounts {
        a,
        b: total - same_l - same_c + a,
        total,
    })
}

/// Adjusted Rand index from the contingency table. Degenerate cases where
/// both partitions are trivial in the same way score 1.
pub fn ari(labels: &[usize], clusters: &[usize]) -> Result<f64> {
    let t = Contingency::new(labels, clusters)?;
    if t.n < 2 {
        return Err(BvaeError::Validation("ARI needs at least two points".into()));
    }
    let index: f64 = t.table.iter().map(|&v| comb2(v)).sum();
    let sa: f64 = t.row_sums().iter().map(|&v| comb2(v)).sum();
    let sb: f64 = t.col_sums().iter().map(|&v| comb2(v)).sum();
    let total = comb2(t.n);
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// `[true][predicted]` counts over the ten digit classes.
pub fn confusion_matrix(truth: &[u8], predicted: &[u8]) -> Result<[[u64; NUM_CLASSES]; NUM_CLASSES]> {
    if truth.len() != predicted.len() {
        return Err(BvaeError::dim(
            "confusion_matrix",
            format!("{} labels vs {} predictions", truth.len(), predicted.len()),
        ));
    }
    let mut m = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t as usize >= NUM_CLASSES || p as usize >= NUM_CLASSES {
            return Err(BvaeError::Validation(format!("label pair ({t}, {p}) outside 0..9")));
        }
        m[t as usize][p as usize] += 1;
    }
    Ok(m)
}
