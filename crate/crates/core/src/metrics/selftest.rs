//! Brute-force oracles for the partition metrics, run by the
//! `metrics-selftest` command.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{acc, ari, nmi};
use crate::error::Result;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfTestResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Calls `f` on every permutation of `0..n` (Heap's algorithm).
fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    let mut p: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    f(&p);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                p.swap(0, i);
            } else {
                p.swap(c[i], i);
            }
            f(&p);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Best accuracy over every one-to-one relabeling of cluster ids.
pub fn acc_exhaustive(labels: &[usize], clusters: &[usize], k: usize) -> f64 {
    let mut best = 0usize;
    for_each_permutation(k, |m| {
        let hits = labels.iter().zip(clusters).filter(|(&l, &c)| m[c] == l).count();
        best = best.max(hits);
    });
    best as f64 / labels.len() as f64
}

/// ARI from explicit pair enumeration; `None` when the pair-confusion
/// denominator vanishes.
pub fn ari_pairwise(labels: &[usize], clusters: &[usize]) -> Option<f64> {
    let (mut n11, mut n00, mut n10, mut n01) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            match (labels[i] == labels[j], clusters[i] == clusters[j]) {
                (true, true) => n11 += 1.0,
                (false, false) => n00 += 1.0,
                (true, false) => n10 += 1.0,
                (false, true) => n01 += 1.0,
            }
        }
    }
    let denom = (n11 + n01) * (n01 + n00) + (n11 + n10) * (n10 + n00);
    (denom != 0.0).then(|| 2.0 * (n11 * n00 - n10 * n01) / denom)
}

fn random_partition(r: &mut rng::Rng, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| r.random_range(0..k)).collect()
}

fn check(name: &str, worst: f64, tol: f64, cases: usize) -> SelfTestResult {
    SelfTestResult {
        name: name.into(),
        passed: worst <= tol,
        detail: format!("{cases} cases, worst deviation {worst:.3e} (tolerance {tol:.0e})"),
    }
}

/// Runs every oracle comparison with instances drawn from `seed`.
pub fn run_selftest(seed: u64) -> Result<Vec<SelfTestResult>> {
    let mut out = Vec::new();
    let mut r = rng::stream(seed, "metrics-selftest", 0);

    let mut worst = 0.0f64;
    for _ in 0..200 {
        let k = r.random_range(1..=6);
        let n = r.random_range(1..=40);
        let l = random_partition(&mut r, n, k);
        let c = random_partition(&mut r, n, k);
        worst = worst.max((acc(&l, &c)? - acc_exhaustive(&l, &c, k)).abs());
    }
    out.push(check("ACC (Hungarian) equals exhaustive mapping, K <= 6", worst, 1e-12, 200));

    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = r.random_range(2..=12);
        let (kl, kc) = (r.random_range(1..=4), r.random_range(1..=4));
        let l = random_partition(&mut r, n, kl);
        let c = random_partition(&mut r, n, kc);
        let expect = ari_pairwise(&l, &c).unwrap_or(1.0);
        worst = worst.max((ari(&l, &c)? - expect).abs());
    }
    out.push(check("ARI equals pair-counting oracle, N <= 12", worst, 1e-12, 200));

    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = r.random_range(2..=60);
        let l = random_partition(&mut r, n, 5);
        worst = worst.max((nmi(&l, &l)? - 1.0).abs());
    }
    out.push(check("NMI of identical partitions is 1", worst, 1e-12, 50));

    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = r.random_range(2..=60);
        let l = random_partition(&mut r, n, 5);
        if l.iter().all(|&v| v == l[0]) {
            continue;
        }
        worst = worst.max(nmi(&l, &vec![0; n])?.abs());
    }
    out.push(check("NMI against a constant clustering is 0", worst, 1e-12, 50));

    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = r.random_range(2..=50);
        let k = r.random_range(1..=8);
        let l = random_partition(&mut r, n, k);
        let c = random_partition(&mut r, n, k);
        let mut perm: Vec<usize> = (0..k).collect();
        for i in (1..k).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        let c2: Vec<usize> = c.iter().map(|&v| perm[v]).collect();
        let l2: Vec<usize> = l.iter().map(|&v| perm[(v + 1) % k]).collect();
        worst = worst
            .max((acc(&l, &c)? - acc(&l2, &c2)?).abs())
            .max((nmi(&l, &c)? - nmi(&l2, &c2)?).abs())
            .max((ari(&l, &c)? - ari(&l2, &c2)?).abs());
    }
    out.push(check("ACC, NMI and ARI are relabeling-invariant", worst, 1e-12, 100));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutations_are_complete() {
        let mut n = 0;
        let mut seen = std::collections::HashSet::new();
        for_each_permutation(4, |p| {
            n += 1;
            seen.insert(p.to_vec());
        });
        assert_eq!((n, seen.len()), (24, 24));
    }

    #[test]
    fn pairwise_ari_hand_value() {
        // [0,0,1,1] vs [0,0,1,2]: n11 = 1, n10 = 1, n01 = 0, n00 = 4, denominator 4 + 10
        let a = ari_pairwise(&[0, 0, 1, 1], &[0, 0, 1, 2]).unwrap();
        assert!((a - 8.0 / 14.0).abs() < 1e-15);
    }

    #[test]
    fn selftest_passes() {
        for r in run_selftest(3).unwrap() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
