//! Randomized invariants of the numeric building blocks.

use proptest::prelude::*;

use bvae::metrics::{acc, ari, assignment_cost, confusion_matrix, hungarian, kmeans, nmi, KmeansConfig};
use bvae::nn::{activation, conv2d_forward, conv2d_transpose_forward, Activation};
use bvae::tensor::Tensor;
use bvae::vae::kl_per_sample;

fn partitions(max_n: usize, max_k: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (2..=max_n).prop_flat_map(move |n| {
        (
            proptest::collection::vec(0..max_k, n),
            proptest::collection::vec(0..max_k, n),
        )
    })
}

fn relabel(p: &[usize], shift: usize, k: usize) -> Vec<usize> {
    p.iter().map(|&v| (v + shift) % k).collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    permutations(n - 1)
        .into_iter()
        .flat_map(|p| {
            (0..=p.len()).map(move |i| {
                let mut q = p.clone();
                q.insert(i, n - 1);
                q
            })
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metric_bounds((l, c) in partitions(40, 6)) {
        let n = l.len() as f64;
        let a = acc(&l, &c).unwrap();
        prop_assert!(a > 0.0 && a <= 1.0);
        // the largest joint count is always achievable
        let best = (0..6).flat_map(|x| (0..6).map(move |y| (x, y)))
            .map(|(x, y)| l.iter().zip(&c).filter(|(&p, &q)| p == x && q == y).count())
            .max().unwrap() as f64;
        prop_assert!(a >= best / n - 1e-12);
        let m = nmi(&l, &c).unwrap();
        prop_assert!((0.0..=1.0).contains(&m));
        prop_assert!(ari(&l, &c).unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn metrics_are_symmetric_and_relabeling_invariant((l, c) in partitions(30, 5), shift in 1usize..5) {
        let c2 = relabel(&c, shift, 5);
        prop_assert!((acc(&l, &c).unwrap() - acc(&l, &c2).unwrap()).abs() < 1e-12);
        prop_assert!((nmi(&l, &c).unwrap() - nmi(&l, &c2).unwrap()).abs() < 1e-12);
        prop_assert!((ari(&l, &c).unwrap() - ari(&l, &c2).unwrap()).abs() < 1e-12);
        prop_assert!((nmi(&l, &c).unwrap() - nmi(&c, &l).unwrap()).abs() < 1e-12);
        prop_assert!((ari(&l, &c).unwrap() - ari(&c, &l).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn hungarian_is_optimal(n in 1usize..=6, seed in any::<u64>()) {
        let mut s = seed;
        let cost: Vec<f64> = (0..n * n).map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 33) % 1000) as f64 - 500.0
        }).collect();
        let perm = hungarian(&cost, n).unwrap();
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        let best = permutations(n).iter().map(|p| assignment_cost(&cost, n, p)).fold(f64::INFINITY, f64::min);
        prop_assert!((assignment_cost(&cost, n, &perm) - best).abs() < 1e-9);
    }

    #[test]
    fn kmeans_wcss_never_increases(
        pts in proptest::collection::vec(-5.0f64..5.0, 40..120),
        k in 1usize..6,
        seed in any::<u64>(),
    ) {
        let n = pts.len() / 2;
        let x = Tensor::from_vec(&[n, 2], pts[..n * 2].to_vec()).unwrap();
        let p = kmeans(&x, &KmeansConfig { k, restarts: 2, seed, ..KmeansConfig::default() }).unwrap();
        for w in p.history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", p.history);
        }
        prop_assert!(p.assignments.iter().all(|&a| a < k));
        // reported WCSS equals the sum of squared distances to assigned centroids
        let direct: f64 = (0..n).map(|i| {
            let c = &p.centroids[p.assignments[i] * 2..p.assignments[i] * 2 + 2];
            (x.row(i)[0] - c[0]).powi(2) + (x.row(i)[1] - c[1]).powi(2)
        }).sum();
        prop_assert!((direct - p.wcss).abs() <= 1e-9 * direct.max(1.0));
    }

    /// Transposed "same" convolution upsamples by exactly `stride`, so it is
    /// the adjoint only when the input extent is a multiple of the stride.
    #[test]
    fn conv_transpose_is_the_adjoint(
        hs in 1usize..6, ws in 1usize..6, c in 1usize..4, f in 1usize..4, stride in 1usize..=2,
        seed in any::<u64>(),
    ) {
        let (h, w) = (hs * stride, ws * stride);
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let mut rand = |shape: &[usize]| {
            let n = shape.iter().product();
            Tensor::<f64>::from_vec(shape, (0..n).map(|_| next()).collect()).unwrap()
        };
        let k = rand(&[3, 3, c, f]);
        let x = rand(&[1, h, w, c]);
        let cx = conv2d_forward(&x, &k, stride).unwrap();
        let y = rand(cx.shape());
        let lhs = cx.dot(&y);
        let rhs = x.dot(&conv2d_transpose_forward(&y, &k, stride).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()).max(1.0));
    }

    #[test]
    fn kl_is_nonnegative_and_zero_at_the_prior(
        mu in proptest::collection::vec(-4.0f64..4.0, 3),
        lv in proptest::collection::vec(-4.0f64..4.0, 3),
    ) {
        let t = |v: &[f64]| Tensor::from_vec(&[1, 3], v.to_vec()).unwrap();
        let kl = kl_per_sample(&t(&mu), &t(&lv))[0];
        prop_assert!(kl >= -1e-12);
        prop_assert!(kl_per_sample(&t(&[0.0; 3]), &t(&[0.0; 3]))[0].abs() < 1e-15);
    }

    #[test]
    fn softmax_rows_are_distributions(v in proptest::collection::vec(-50.0f64..50.0, 10)) {
        let y = activation(Activation::Softmax, &Tensor::from_vec(&[1, 10], v).unwrap());
        prop_assert!((y.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(y.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn confusion_counts_every_sample(pairs in proptest::collection::vec((0u8..10, 0u8..10), 0..200)) {
        let (t, p): (Vec<u8>, Vec<u8>) = pairs.iter().copied().unzip();
        let m = confusion_matrix(&t, &p).unwrap();
        prop_assert_eq!(m.iter().flatten().sum::<u64>() as usize, t.len());
        let hits = t.iter().zip(&p).filter(|(a, b)| a == b).count() as u64;
        prop_assert_eq!((0..10).map(|i| m[i][i]).sum::<u64>(), hits);
    }
}
