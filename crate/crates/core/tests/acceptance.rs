//! Acceptance suite. Every criterion prints one line, also under a plain
//! `cargo test`:
//!
//! ```text
//! [acceptance] <id> PASS|FAIL|NOT RUN  <criterion>: <detail>
//! ```
//!
//! Property criteria run on every `cargo test`. Desk-scale criteria need
//! full MNIST training runs: `desk_scale_status` reports them from whatever
//! completed runs exist under `BVAE_RUNS_DIR` (default `<workspace>/runs`)
//! without asserting, and the `#[ignore]`d `desk_*` tests train the missing
//! runs (reusing finished ones) and assert.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use bvae::branch::BranchKind;
use bvae::data::{blob_bundle, DataBundle};
use bvae::experiments::{preset, run_experiment, DataCache, ExperimentSpec, RunRecord};
use bvae::metrics::{acc, ari, kmeans, nmi, run_selftest, KmeansConfig};
use bvae::nn::{conv2d_forward, conv2d_transpose_forward, layer_grad_checks};
use bvae::tensor::Tensor;
use bvae::train::{
    checkpoint_bytes, continue_training, end_to_end_grad_check, load_checkpoint, train, Checkpoint, TrainConfig,
    TrainOptions,
};
use bvae::vae::{kl_per_sample, ReconMode};

fn line(id: &str, status: Option<bool>, criterion: &str, detail: &str) {
    let s = match status {
        Some(true) => "PASS",
        Some(false) => "FAIL",
        None => "NOT RUN",
    };
    emit(&format!("[acceptance] {id} {s:<7} {criterion}: {detail}"));
}

/// Writes past the test harness's output capture so the lines show in a
/// plain `cargo test` log.
fn emit(msg: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{msg}");
    let _ = out.flush();
}

// ---------------------------------------------------------------------------
// Property suite
// ---------------------------------------------------------------------------

#[test]
fn p1_gradient_checks() {
    let mut worst_layer = (0.0f64, "");
    for (name, r) in layer_grad_checks(5).unwrap() {
        if r.max_relative_error >= worst_layer.0 {
            worst_layer = (r.max_relative_error, name);
        }
    }
    let cases = [
        ("vae-bce", None, ReconMode::Bce),
        ("vae-mse", None, ReconMode::Mse),
        ("mlp", Some(BranchKind::Mlp), ReconMode::Bce),
        ("linear", Some(BranchKind::Linear), ReconMode::Bce),
        ("soft-knn", Some(BranchKind::SoftKnn { k: 3, tau: 1.0 }), ReconMode::Bce),
        ("class-mean", Some(BranchKind::ClassMean { tau: 1.0 }), ReconMode::Bce),
    ];
    let mut worst_e2e = (0.0f64, "");
    for (name, kind, recon) in cases {
        let r = end_to_end_grad_check(kind, recon, 11).unwrap();
        if r.max_relative_error >= worst_e2e.0 {
            worst_e2e = (r.max_relative_error, name);
        }
    }
    let ok = worst_layer.0 <= 1e-4 && worst_e2e.0 <= 1e-3;
    line(
        "P1",
        Some(ok),
        "layer (1e-4) and end-to-end (1e-3) gradient checks at f64",
        &format!(
            "worst layer {} {:.2e}, worst end-to-end {} {:.2e}",
            worst_layer.1, worst_layer.0, worst_e2e.1, worst_e2e.0
        ),
    );
    assert!(ok);
}

/// Monte-Carlo KL(q || p) with antithetic pairs, from the two log densities.
fn kl_monte_carlo(mu: &[f64], lv: &[f64], samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let log_ratio = |eps: &[f64]| -> f64 {
        let mut s = 0.0;
        for j in 0..mu.len() {
            let sigma = (0.5 * lv[j]).exp();
            let z = mu[j] + sigma * eps[j];
            let log_q = -0.5 * (ln2pi + lv[j] + ((z - mu[j]) / sigma).powi(2));
            let log_p = -0.5 * (ln2pi + z * z);
            s += log_q - log_p;
        }
        s
    };
    let mut total = 0.0;
    let mut eps = vec![0.0; mu.len()];
    for _ in 0..samples / 2 {
        for e in eps.iter_mut() {
            *e = rng.sample(StandardNormal);
        }
        total += log_ratio(&eps);
        for e in eps.iter_mut() {
            *e = -*e;
        }
        total += log_ratio(&eps);
    }
    total / (samples / 2 * 2) as f64
}

#[test]
fn p2_kl_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mu: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lv: Vec<f64> = (0..2).map(|_| rng.random_range(-2.5..2.5)).collect();
        let closed = kl_per_sample(
            &Tensor::from_vec(&[1, 2], mu.clone()).unwrap(),
            &Tensor::from_vec(&[1, 2], lv.clone()).unwrap(),
        )[0];
        let mc = kl_monte_carlo(&mu, &lv, 1_000_000, &mut rng);
        worst = worst.max((mc - closed).abs() / closed);
    }
    let ok = worst <= 0.01;
    line(
        "P2",
        Some(ok),
        "closed-form KL within 1% of Monte Carlo (1e6 samples, 20 draws)",
        &format!("worst relative deviation {worst:.2e}"),
    );
    assert!(ok);
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

fn acc_oracle(labels: &[usize], clusters: &[usize], k: usize) -> f64 {
    permutations(k)
        .iter()
        .map(|m| labels.iter().zip(clusters).filter(|(&l, &c)| m[c] == l).count())
        .max()
        .unwrap() as f64
        / labels.len() as f64
}

fn ari_oracle(labels: &[usize], clusters: &[usize]) -> f64 {
    let (mut n11, mut n00, mut n10, mut n01) = (0.0, 0.0, 0.0, 0.0);
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
    let den = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11);
    if den == 0.0 {
        1.0
    } else {
        2.0 * (n00 * n11 - n01 * n10) / den
    }
}

fn random_partition(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

#[test]
fn p3_metric_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut failures = Vec::new();

    let mut acc_dev = 0.0f64;
    for _ in 0..200 {
        let k = rng.random_range(2..=6);
        let n = rng.random_range(k..=40);
        let (l, c) = (random_partition(n, k, &mut rng), random_partition(n, k, &mut rng));
        acc_dev = acc_dev.max((acc(&l, &c).unwrap() - acc_oracle(&l, &c, k)).abs());
    }
    if acc_dev > 1e-12 {
        failures.push(format!("ACC deviates from enumeration by {acc_dev:.1e}"));
    }

    let mut ari_dev = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(2..=12);
        let (ka, kb) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let (l, c) = (random_partition(n, ka, &mut rng), random_partition(n, kb, &mut rng));
        ari_dev = ari_dev.max((ari(&l, &c).unwrap() - ari_oracle(&l, &c)).abs());
    }
    // hand-computed: labels {0,0,1,1}, clusters {0,0,0,1} gives ARI 0
    ari_dev = ari_dev.max(ari(&[0, 0, 1, 1], &[0, 0, 0, 1]).unwrap().abs());
    if ari_dev > 1e-12 {
        failures.push(format!("ARI deviates from pair counting by {ari_dev:.1e}"));
    }

    for _ in 0..50 {
        let n = rng.random_range(10..60);
        let k = rng.random_range(2..8);
        let l = random_partition(n, k, &mut rng);
        let nmi_same = nmi(&l, &l).unwrap();
        let nmi_const = nmi(&l, &vec![0; n]).unwrap();
        let distinct = l.iter().collect::<std::collections::HashSet<_>>().len();
        if distinct > 1 && ((nmi_same - 1.0).abs() > 1e-12 || nmi_const != 0.0) {
            failures.push(format!("NMI identical {nmi_same} constant {nmi_const}"));
        }

        let c = random_partition(n, k, &mut rng);
        let mut perm: Vec<usize> = (0..k).collect();
        for i in (1..k).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let c2: Vec<usize> = c.iter().map(|&v| perm[v]).collect();
        let l2: Vec<usize> = l.iter().map(|&v| perm[v]).collect();
        for (name, f) in [("ACC", acc as fn(&[usize], &[usize]) -> _), ("NMI", nmi), ("ARI", ari)] {
            let base = f(&l, &c).unwrap();
            for (a, b) in [(&l, &c2), (&l2, &c), (&l2, &c2)] {
                if (f(a, b).unwrap() - base).abs() > 1e-12 {
                    failures.push(format!("{name} changes under relabeling"));
                }
            }
        }
    }

    for r in run_selftest(3).unwrap() {
        if !r.passed {
            failures.push(format!("self-test {}: {}", r.name, r.detail));
        }
    }

    let ok = failures.is_empty();
    let detail = if ok {
        format!("ACC max dev {acc_dev:.1e}, ARI max dev {ari_dev:.1e}, NMI bounds and relabeling hold")
    } else {
        failures.join("; ")
    };
    line("P3", Some(ok), "ACC/ARI/NMI oracles and relabeling invariance", &detail);
    assert!(ok);
}

fn small_data() -> DataBundle {
    blob_bundle(256, 128, 4).unwrap()
}

fn small_config(branch: Option<BranchKind>, lambda: f64) -> TrainConfig {
    TrainConfig {
        branch,
        lambda,
        epochs: 2,
        batch_size: 64,
        train_samples: Some(256),
        seed: 9,
        ..TrainConfig::default()
    }
}

fn vae_params(ck: &Checkpoint) -> Vec<Tensor<f32>> {
    ck.model.encoder.params().chain(ck.model.decoder.params()).cloned().collect()
}

#[test]
fn p4_kmeans_adjoint_resume_lambda0() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut failures = Vec::new();

    // k-means: WCSS after every assignment step never increases
    for trial in 0..10 {
        let n = 200;
        let pts: Vec<f64> = (0..n * 2)
            .map(|i| (i / 2 % 5) as f64 * 1.5 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let x = Tensor::from_vec(&[n, 2], pts).unwrap();
        let part = kmeans(
            &x,
            &KmeansConfig {
                k: 5,
                restarts: 1,
                seed: trial,
                ..KmeansConfig::default()
            },
        )
        .unwrap();
        if part.history.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-12)) {
            failures.push(format!("WCSS increased: {:?}", part.history));
        }
    }

    // <conv(x), y> = <x, conv_t(y)>
    let mut adjoint_dev = 0.0f64;
    for &(h, w, c, f, s) in &[(6, 6, 2, 3, 2), (7, 5, 3, 2, 1), (28, 28, 1, 4, 2), (14, 14, 4, 3, 2)] {
        let rand = |shape: &[usize], rng: &mut ChaCha8Rng| {
            let n = shape.iter().product();
            Tensor::<f64>::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
        };
        let k = rand(&[3, 3, c, f], &mut rng);
        let x = rand(&[2, h, w, c], &mut rng);
        let cx = conv2d_forward(&x, &k, s).unwrap();
        let y = rand(cx.shape(), &mut rng);
        let (lhs, rhs) = (cx.dot(&y), x.dot(&conv2d_transpose_forward(&y, &k, s).unwrap()));
        adjoint_dev = adjoint_dev.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0));
    }
    if adjoint_dev > 1e-10 {
        failures.push(format!("adjoint identity off by {adjoint_dev:.1e}"));
    }

    // resume after one epoch equals an uninterrupted run, byte for byte
    let data = small_data();
    let cfg = small_config(Some(BranchKind::Mlp), 1.0);
    let straight = train(&cfg, &data, &TrainOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ckpt");
    let opts = TrainOptions {
        checkpoint_path: Some(path.clone()),
        stop_after: Some(1),
    };
    train(&cfg, &data, &opts).unwrap();
    let mut resumed = load_checkpoint(&path).unwrap();
    continue_training(&mut resumed, &data, &TrainOptions::default()).unwrap();
    if checkpoint_bytes(&straight).unwrap() != checkpoint_bytes(&resumed).unwrap() {
        failures.push("resumed checkpoint differs".into());
    }

    // λ = 0 with a branch trains exactly the plain VAE
    let plain = train(&small_config(None, 0.0), &data, &TrainOptions::default()).unwrap();
    let branched = train(&small_config(Some(BranchKind::Mlp), 0.0), &data, &TrainOptions::default()).unwrap();
    if vae_params(&plain) != vae_params(&branched) {
        failures.push("lambda = 0 changes VAE parameters".into());
    }

    let ok = failures.is_empty();
    let detail = if ok {
        format!("WCSS monotone over 10 runs, adjoint dev {adjoint_dev:.1e}, resume and lambda=0 bit-exact")
    } else {
        failures.join("; ")
    };
    line("P4", Some(ok), "k-means WCSS monotone, conv adjoint 1e-10, resume and lambda=0 bit-exact", &detail);
    assert!(ok);
}

// ---------------------------------------------------------------------------
// Desk-scale reproduction
// ---------------------------------------------------------------------------

const DESK_REPEAT: usize = 3;

fn runs_dir() -> PathBuf {
    std::env::var_os("BVAE_RUNS_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../runs"))
}

/// The preset as the CLI runs it with the default seed.
fn spec(name: &str) -> ExperimentSpec {
    ExperimentSpec {
        name: name.into(),
        variants: preset(name, 0, false).unwrap(),
        repeat: DESK_REPEAT,
        out_dir: runs_dir(),
        force: false,
    }
}

/// Completed repeats of one variant whose config matches the preset.
fn records(experiment: &str, variant: &str) -> Vec<RunRecord> {
    let s = spec(experiment);
    let Some(v) = s.variants.iter().find(|v| v.name == variant) else {
        return vec![];
    };
    (0..DESK_REPEAT)
        .filter_map(|r| {
            let p = s.dir().join(variant).join(format!("run-{r}.json"));
            let rec: RunRecord = serde_json::from_str(&std::fs::read_to_string(p).ok()?).ok()?;
            (rec.config_hash == s.run_config(v, r).hash() && !rec.fixed_data).then_some(rec)
        })
        .collect()
}

/// Mean scores over the available repeats.
struct Scores {
    n: usize,
    nmi: f64,
    acc: f64,
    ari: f64,
    probe: f64,
    confusion: [[u64; 10]; 10],
}

fn scores(experiment: &str, variant: &str) -> Option<Scores> {
    let recs = records(experiment, variant);
    if recs.is_empty() {
        return None;
    }
    let n = recs.len();
    let m = |f: fn(&RunRecord) -> f64| recs.iter().map(f).sum::<f64>() / n as f64;
    let mut confusion = [[0u64; 10]; 10];
    for r in &recs {
        for (t, row) in r.metrics.confusion.iter().enumerate() {
            for (p, &v) in row.iter().enumerate() {
                confusion[t][p] += v;
            }
        }
    }
    Some(Scores {
        n,
        nmi: m(|r| r.metrics.nmi),
        acc: m(|r| r.metrics.acc),
        ari: m(|r| r.metrics.ari),
        probe: m(|r| r.metrics.probe_accuracy),
        confusion,
    })
}

struct Outcome {
    id: &'static str,
    criterion: &'static str,
    status: Option<bool>,
    detail: String,
}

fn reps(s: &[&Scores]) -> String {
    let n: Vec<String> = s.iter().map(|s| s.n.to_string()).collect();
    format!("repeats {}/{DESK_REPEAT}", n.join(","))
}

/// `Some(all)` when every input is present, else `None` with the names missing.
fn need<'a>(items: &'a [(&str, &Option<Scores>)]) -> Result<Vec<&'a Scores>, String> {
    let missing: Vec<&str> = items.iter().filter(|(_, s)| s.is_none()).map(|(n, _)| *n).collect();
    if missing.is_empty() {
        Ok(items.iter().map(|(_, s)| s.as_ref().unwrap()).collect())
    } else {
        Err(format!("no completed runs for {}", missing.join(", ")))
    }
}

fn outcome(id: &'static str, criterion: &'static str, r: Result<(bool, String), String>) -> Outcome {
    match r {
        Ok((ok, detail)) => Outcome {
            id,
            criterion,
            status: Some(ok),
            detail,
        },
        Err(detail) => Outcome {
            id,
            criterion,
            status: None,
            detail,
        },
    }
}

fn d1() -> Outcome {
    let vae = scores("table1", "vae");
    outcome(
        "D1",
        "standard VAE probe accuracy 0.672 +- 0.08",
        need(&[("table1/vae", &vae)]).map(|s| {
            let p = s[0].probe;
            ((p - 0.672).abs() <= 0.08, format!("probe {p:.4}; {}", reps(&s)))
        }),
    )
}

fn d2() -> Outcome {
    let (vae, b) = (scores("table1", "vae"), scores("table1", "bvae-lambda100"));
    outcome(
        "D2",
        "BVAE lambda=100 probe >= 0.94 and NMI/ACC/ARI each >= VAE + 0.15",
        need(&[("table1/vae", &vae), ("table1/bvae-lambda100", &b)]).map(|s| {
            let (v, b) = (s[0], s[1]);
            let deltas = [b.nmi - v.nmi, b.acc - v.acc, b.ari - v.ari];
            let ok = b.probe >= 0.94 && deltas.iter().all(|&d| d >= 0.15);
            (
                ok,
                format!(
                    "probe {:.4}; deltas NMI {:+.3} ACC {:+.3} ARI {:+.3}; {}",
                    b.probe,
                    deltas[0],
                    deltas[1],
                    deltas[2],
                    reps(&s)
                ),
            )
        }),
    )
}

fn d3() -> Outcome {
    let (a, b) = (scores("table1", "bvae-alpha0.01"), scores("table1", "bvae-lambda100"));
    outcome(
        "D3",
        "NMI(alpha=0.01) - NMI(lambda=100) >= 0.05",
        need(&[("table1/bvae-alpha0.01", &a), ("table1/bvae-lambda100", &b)]).map(|s| {
            let d = s[0].nmi - s[1].nmi;
            (d >= 0.05, format!("NMI {:.4} vs {:.4} (diff {d:+.4}); {}", s[0].nmi, s[1].nmi, reps(&s)))
        }),
    )
}

fn d4() -> Outcome {
    let f = scores("table1", "vae-fixed");
    let g = scores("table2", "fixed-gaussian");
    let q = scores("table2", "fixed-square");
    let w = scores("table2", "fixed-wavelet");
    outcome(
        "D4",
        "fixed exemplar probe >= 0.93; gaussian/square/wavelet targets each >= 0.92",
        need(&[
            ("table1/vae-fixed", &f),
            ("table2/fixed-gaussian", &g),
            ("table2/fixed-square", &q),
            ("table2/fixed-wavelet", &w),
        ])
        .map(|s| {
            let ok = s[0].probe >= 0.93 && s[1..].iter().all(|x| x.probe >= 0.92);
            (
                ok,
                format!(
                    "exemplar {:.4}, gaussian {:.4}, square {:.4}, wavelet {:.4}; {}",
                    s[0].probe,
                    s[1].probe,
                    s[2].probe,
                    s[3].probe,
                    reps(&s)
                ),
            )
        }),
    )
}

/// Share of off-diagonal confusion mass in the {6,9} and {3,8} pairs.
fn pair_share(c: &[[u64; 10]; 10]) -> f64 {
    let off: u64 = (0..10).flat_map(|t| (0..10).map(move |p| (t, p))).filter(|(t, p)| t != p).map(|(t, p)| c[t][p]).sum();
    let pairs = c[6][9] + c[9][6] + c[3][8] + c[8][3];
    if off == 0 {
        0.0
    } else {
        pairs as f64 / off as f64
    }
}

fn d5() -> Outcome {
    let (v, b) = (scores("table3", "vae"), scores("table3", "bvae-lambda100"));
    outcome(
        "D5",
        "rotated digits: VAE 0.31 +- 0.08, BVAE >= 0.75, {6,9}+{3,8} >= 50% of BVAE confusions",
        need(&[("table3/vae", &v), ("table3/bvae-lambda100", &b)]).map(|s| {
            let share = pair_share(&s[1].confusion);
            let ok = (s[0].probe - 0.31).abs() <= 0.08 && s[1].probe >= 0.75 && share >= 0.5;
            (
                ok,
                format!("VAE {:.4}, BVAE {:.4}, pair share {share:.3}; {}", s[0].probe, s[1].probe, reps(&s)),
            )
        }),
    )
}

fn d6() -> Outcome {
    let ks = [2usize, 3, 5, 10];
    let names: Vec<String> = ["vae", "vae-fixed", "bvae"]
        .iter()
        .flat_map(|f| ks.iter().map(move |k| format!("{f}-k{k}")))
        .collect();
    let all: Vec<Option<Scores>> = names.iter().map(|n| scores("table4", n)).collect();
    let labelled: Vec<(String, &Option<Scores>)> = names.iter().map(|n| format!("table4/{n}")).zip(&all).collect();
    let items: Vec<(&str, &Option<Scores>)> = labelled.iter().map(|(n, s)| (n.as_str(), *s)).collect();
    outcome(
        "D6",
        "probe accuracy non-decreasing in k (0.02 slack) per framework; BVAE k=2 > VAE k=10 - 0.02",
        need(&items).map(|s| {
            let probe = |f: usize, i: usize| s[f * 4 + i].probe;
            let mut violations = Vec::new();
            for (f, name) in ["vae", "vae-fixed", "bvae"].iter().enumerate() {
                for i in 0..3 {
                    if probe(f, i + 1) < probe(f, i) - 0.02 {
                        violations.push(format!("{name} k{}->k{}", ks[i], ks[i + 1]));
                    }
                }
            }
            let cross = probe(2, 0) > probe(0, 3) - 0.02;
            let rows: Vec<String> = ["vae", "vae-fixed", "bvae"]
                .iter()
                .enumerate()
                .map(|(f, n)| format!("{n} [{}]", (0..4).map(|i| format!("{:.3}", probe(f, i))).collect::<Vec<_>>().join(" ")))
                .collect();
            (
                violations.is_empty() && cross,
                format!("{}; drops: {:?}; {}", rows.join(", "), violations, reps(&s)),
            )
        }),
    )
}

fn d7() -> Outcome {
    let (u, x) = (scores("knn-weighting", "knn40-uniform"), scores("knn-weighting", "knn40-x10"));
    outcome(
        "D7",
        "kNN branch with x10 class weights improves probe accuracy by >= 0.05 over uniform",
        need(&[("knn-weighting/knn40-uniform", &u), ("knn-weighting/knn40-x10", &x)]).map(|s| {
            let d = s[1].probe - s[0].probe;
            (d >= 0.05, format!("uniform {:.4}, x10 {:.4} (diff {d:+.4}); {}", s[0].probe, s[1].probe, reps(&s)))
        }),
    )
}

fn desk_outcomes() -> Vec<Outcome> {
    vec![d1(), d2(), d3(), d4(), d5(), d6(), d7()]
}

/// Reports every desk-scale criterion from existing runs; never asserts.
#[test]
fn desk_scale_status() {
    emit(&format!("[acceptance] desk-scale results read from {}", runs_dir().display()));
    for o in desk_outcomes() {
        line(o.id, o.status, o.criterion, &o.detail);
    }
}

/// Trains (or reuses) the runs behind one criterion, then asserts it.
fn desk(runs: &[(&str, &[&str])], check: fn() -> Outcome) {
    let mut data = DataCache::new(bvae::data::data_dir());
    for (exp, only) in runs {
        let only: Vec<String> = only.iter().map(|s| s.to_string()).collect();
        run_experiment(&spec(exp), &mut data, &only).unwrap();
    }
    let o = check();
    line(o.id, o.status, o.criterion, &o.detail);
    assert_eq!(o.status, Some(true), "{}", o.detail);
}

#[test]
#[ignore = "desk-scale: trains full MNIST runs"]
fn desk_d1_vae_probe() {
    desk(&[("table1", &["vae"])], d1);
}

#[test]
#[ignore = "desk-scale: trains full MNIST runs"]
fn desk_d2_bvae_lambda100() {
    desk(&[("table1", &["vae", "bvae-lambda100"])], d2);
}

#[test]
#[ignore = "desk-scale: trains full MNIST runs"]
fn desk_d3_alpha_improves_clustering() {
    desk(&[("table1", &["bvae-alpha0.01", "bvae-lambda100"])], d3);
}

#[test]
#[ignore = "desk-scale: trains full MNIST runs"]
fn desk_d4_fixed_targets() {
    desk(
        &[
            ("table1", &["vae-fixed"]),
            ("table2", &["fixed-gaussian", "fixed-square", "fixed-wavelet"]),
        ],
        d4,
    );
}

#[test]
#[ignore = "desk-scale: trains full MNIST runs"]
fn desk_d5_rotated_digits() {
    desk(&[("table3", &["vae", "bvae-lambda100"])], d5);
}

#[test]
#[ignore = "desk-scale: trains full MNIST runs"]
fn desk_d6_latent_dim_monotonicity() {
    desk(&[("table4", &[])], d6);
}

#[test]
#[ignore = "desk-scale: trains full MNIST runs"]
fn desk_d7_knn_class_weighting() {
    desk(&[("knn-weighting", &["knn40-uniform", "knn40-x10"])], d7);
}
