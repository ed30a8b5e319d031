//! Experiment presets, repeated runs and aggregated tables.
//!
//! Output layout under `<out>/<experiment>/`:
//!
//! ```text
//! <variant>/run-<r>.json   one RunRecord per repeat
//! <variant>/run-<r>.ckpt   final checkpoint of that repeat
//! summary.csv              mean over repeats, one row per variant
//! ```

pub mod export;

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::branch::BranchKind;
use crate::data::{load_bundle, ClassWeights, DataBundle, DatasetKind, TargetKind};
use crate::error::{BvaeError, Result};
use crate::metrics::MetricsReport;
use crate::train::{
    continue_training, evaluate, load_checkpoint, training_split, Checkpoint, EpochRecord, TargetMode, TrainConfig,
    TrainOptions,
};

pub use export::{
    export_confusion, export_decoder_grid, export_latent_scatter, export_sampled_reconstruction, read_pgm,
    write_pgm, OutputMeta, GRID_RANGE, GRID_STEPS,
};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Repeats per variant unless overridden.
pub const DEFAULT_REPEAT: usize = 3;
/// Training samples and epochs of the `--quick` profile.
pub const QUICK_SAMPLES: usize = 10_000;
pub const QUICK_EPOCHS: usize = 10;

/// Preset names accepted by [`preset`].
pub const PRESETS: [&str; 6] = ["table1", "table2", "table3", "table4", "knn-weighting", "classifiers"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub config: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub variants: Vec<Variant>,
    pub repeat: usize,
    pub out_dir: PathBuf,
    /// Allows existing per-run outputs to be replaced.
    pub force: bool,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.repeat == 0 {
            return Err(BvaeError::Config("repeat must be at least 1".into()));
        }
        let mut seen = HashSet::new();
        for v in &self.variants {
            if !seen.insert(v.name.as_str()) {
                return Err(BvaeError::Config(format!("duplicate variant name {:?}", v.name)));
            }
            if v.name.is_empty() || v.name.contains(['/', '\\']) {
                return Err(BvaeError::Config(format!("variant name {:?} is not a valid directory name", v.name)));
            }
            v.config.validate()?;
        }
        Ok(())
    }

    pub fn dir(&self) -> PathBuf {
        self.out_dir.join(&self.name)
    }

    /// Seed of repeat `r`.
    pub fn run_config(&self, v: &Variant, r: usize) -> TrainConfig {
        TrainConfig {
            seed: v.config.seed + r as u64,
            ..v.config.clone()
        }
    }
}

fn variant(name: &str, config: TrainConfig) -> Variant {
    Variant {
        name: name.into(),
        config: config.normalized(),
    }
}

fn fixed(kind: TargetKind, lambda: f64) -> TrainConfig {
    TrainConfig {
        target_mode: TargetMode::Fixed(kind),
        lambda,
        branch: (lambda > 0.0).then_some(BranchKind::Mlp),
        ..TrainConfig::default()
    }
}

/// The six framework rows shared by the MNIST and rotated-digit tables.
fn framework_rows(dataset: DatasetKind, latent_dim: usize) -> Vec<Variant> {
    let base = |c: TrainConfig| TrainConfig {
        dataset,
        latent_dim,
        ..c
    };
    vec![
        variant("vae", base(TrainConfig::vae())),
        variant("vae-fixed", base(fixed(TargetKind::Exemplar, 0.0))),
        variant("bvae-lambda10", base(TrainConfig::bvae(10.0))),
        variant("bvae-lambda100", base(TrainConfig::bvae(100.0))),
        variant(
            "bvae-alpha0.01",
            base(TrainConfig {
                alpha: 0.01,
                ..TrainConfig::bvae(1.0)
            }),
        ),
        variant("bvae-fixed", base(fixed(TargetKind::Exemplar, 100.0))),
    ]
}

/// Variants of a named preset. `quick` switches every variant to the
/// 10000-sample / 10-epoch profile.
pub fn preset(name: &str, seed: u64, quick: bool) -> Result<Vec<Variant>> {
    let mut variants = match name {
        "table1" => framework_rows(DatasetKind::Mnist, 2),
        "table2" => TargetKind::ALL
            .iter()
            .map(|&k| variant(&format!("fixed-{}", k.name()), fixed(k, 0.0)))
            .collect(),
        "table3" => framework_rows(DatasetKind::MnistRotated, 2),
        "table4" => [2usize, 3, 5, 10]
            .iter()
            .flat_map(|&k| {
                let rot = |c: TrainConfig| TrainConfig {
                    dataset: DatasetKind::MnistRotated,
                    latent_dim: k,
                    ..c
                };
                [
                    variant(&format!("vae-k{k}"), rot(TrainConfig::vae())),
                    variant(&format!("vae-fixed-k{k}"), rot(fixed(TargetKind::Exemplar, 0.0))),
                    variant(&format!("bvae-k{k}"), rot(TrainConfig::bvae(100.0))),
                ]
            })
            .collect(),
        "knn-weighting" => ["uniform", "x10", "x2a", "x2b"]
            .iter()
            .map(|w| {
                Ok(variant(
                    &format!("knn40-{w}"),
                    TrainConfig {
                        lambda: 10.0,
                        branch: Some(BranchKind::ExactKnn { n: 40 }),
                        class_weights: ClassWeights::preset(w)?,
                        ..TrainConfig::default()
                    },
                ))
            })
            .collect::<Result<_>>()?,
        "classifiers" => [5usize, 20, 40, 50]
            .iter()
            .flat_map(|&n| {
                let c = |kind| TrainConfig {
                    lambda: 10.0,
                    branch: Some(kind),
                    ..TrainConfig::default()
                };
                [
                    variant(&format!("knn-n{n}"), c(BranchKind::ExactKnn { n })),
                    variant(
                        &format!("rf-n{n}"),
                        c(BranchKind::RandomForest {
                            n_estimators: n,
                            max_depth: 12,
                        }),
                    ),
                ]
            })
            .collect(),
        _ => {
            return Err(BvaeError::Usage(format!(
                "unknown preset {name:?}; expected one of {}",
                PRESETS.join(", ")
            )))
        }
    };
    for v in &mut variants {
        v.config.seed = seed;
        if quick {
            apply_quick(&mut v.config);
        }
    }
    Ok(variants)
}

pub fn apply_quick(cfg: &mut TrainConfig) {
    cfg.train_samples = Some(QUICK_SAMPLES);
    cfg.epochs = QUICK_EPOCHS;
}

/// Everything recorded about one finished run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    pub variant: String,
    pub repeat: usize,
    pub seed: u64,
    pub config_hash: String,
    pub code_version: String,
    pub config: TrainConfig,
    pub metrics: MetricsReport,
    pub history: Vec<EpochRecord>,
    /// Trained on a fixed (e.g. synthetic) bundle instead of the named dataset.
    #[serde(default)]
    pub fixed_data: bool,
}

/// Mean over the repeats of one variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub variant: String,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub config_hashes: Vec<String>,
    pub code_version: String,
    pub nmi: f64,
    pub acc: f64,
    pub ari: f64,
    pub probe_accuracy: f64,
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

pub fn aggregate(variant: &str, runs: &[RunRecord]) -> AggregateRow {
    AggregateRow {
        variant: variant.into(),
        runs: runs.len(),
        seeds: runs.iter().map(|r| r.seed).collect(),
        config_hashes: runs.iter().map(|r| r.config_hash.clone()).collect(),
        code_version: CODE_VERSION.into(),
        nmi: mean(runs.iter().map(|r| r.metrics.nmi)),
        acc: mean(runs.iter().map(|r| r.metrics.acc)),
        ari: mean(runs.iter().map(|r| r.metrics.ari)),
        probe_accuracy: mean(runs.iter().map(|r| r.metrics.probe_accuracy)),
    }
}

pub const SUMMARY_HEADER: [&str; 9] = [
    "variant",
    "runs",
    "seeds",
    "config_hashes",
    "code_version",
    "NMI",
    "ACC",
    "ARI",
    "Classification Accuracy",
];

pub fn write_summary(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(SUMMARY_HEADER).map_err(|e| csv_err(path, e))?;
    for r in rows {
        let join = |v: Vec<String>| v.join(";");
        w.write_record([
            r.variant.clone(),
            r.runs.to_string(),
            join(r.seeds.iter().map(u64::to_string).collect()),
            join(r.config_hashes.clone()),
            r.code_version.clone(),
            r.nmi.to_string(),
            r.acc.to_string(),
            r.ari.to_string(),
            r.probe_accuracy.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| BvaeError::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| BvaeError::Format {
                path: path.into(),
                detail: format!("bad number {:?}", &rec[i]),
            })
        };
        let split = |s: &str| -> Vec<String> { s.split(';').filter(|t| !t.is_empty()).map(String::from).collect() };
        rows.push(AggregateRow {
            variant: rec[0].to_string(),
            runs: num(1)? as usize,
            seeds: split(&rec[2]).iter().filter_map(|s| s.parse().ok()).collect(),
            config_hashes: split(&rec[3]),
            code_version: rec[4].to_string(),
            nmi: num(5)?,
            acc: num(6)?,
            ari: num(7)?,
            probe_accuracy: num(8)?,
        });
    }
    Ok(rows)
}

fn csv_err(path: &Path, e: csv::Error) -> BvaeError {
    BvaeError::Format {
        path: path.into(),
        detail: e.to_string(),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| BvaeError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| BvaeError::io(path, e))
}

/// Loads datasets on first use.
pub struct DataCache {
    dir: PathBuf,
    bundles: HashMap<(DatasetKind, u64), DataBundle>,
    /// Served for every dataset kind when set.
    fallback: Option<DataBundle>,
}

impl DataCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            bundles: HashMap::new(),
            fallback: None,
        }
    }

    /// Serves `bundle` for every config, e.g. synthetic data.
    pub fn fixed(bundle: DataBundle) -> Self {
        Self {
            fallback: Some(bundle),
            ..Self::new(PathBuf::new())
        }
    }

    pub fn is_fixed(&self) -> bool {
        self.fallback.is_some()
    }

    pub fn get(&mut self, cfg: &TrainConfig) -> Result<&DataBundle> {
        if let Some(b) = &self.fallback {
            return Ok(b);
        }
        let key = (cfg.dataset, cfg.rotation_seed);
        if !self.bundles.contains_key(&key) {
            log::info!("loading {:?} from {}", cfg.dataset, self.dir.display());
            let b = load_bundle(&self.dir, cfg.dataset, cfg.rotation_seed)?;
            self.bundles.insert(key, b);
        }
        Ok(&self.bundles[&key])
    }
}

/// A finished run of the same config anywhere under `out_dir/*/*/`.
fn find_completed(out_dir: &Path, hash: &str, fixed_data: bool) -> Result<Option<(RunRecord, PathBuf)>> {
    let Ok(experiments) = std::fs::read_dir(out_dir) else {
        return Ok(None);
    };
    let mut candidates = Vec::new();
    for e in experiments.flatten() {
        let Ok(variants) = std::fs::read_dir(e.path()) else {
            continue;
        };
        for v in variants.flatten() {
            let Ok(files) = std::fs::read_dir(v.path()) else {
                continue;
            };
            for f in files.flatten() {
                let p = f.path();
                let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
                if name.starts_with("run-") && name.ends_with(".json") {
                    candidates.push(p);
                }
            }
        }
    }
    candidates.sort();
    for p in candidates {
        if let Ok(rec) = read_json::<RunRecord>(&p) {
            if rec.config_hash == hash && rec.fixed_data == fixed_data {
                return Ok(Some((rec, p)));
            }
        }
    }
    Ok(None)
}

/// Runs (or resumes) one repeat and writes its record and checkpoint.
pub fn run_one(spec: &ExperimentSpec, v: &Variant, r: usize, data: &mut DataCache) -> Result<RunRecord> {
    let cfg = spec.run_config(v, r);
    let dir = spec.dir().join(&v.name);
    std::fs::create_dir_all(&dir).map_err(|e| BvaeError::io(&dir, e))?;
    let json_path = dir.join(format!("run-{r}.json"));
    let ckpt_path = dir.join(format!("run-{r}.ckpt"));
    let hash = cfg.hash();
    if json_path.exists() && !spec.force {
        let rec: RunRecord = read_json(&json_path)?;
        if rec.config_hash == hash {
            log::info!("{}: reusing {}", v.name, json_path.display());
            return Ok(rec);
        }
        return Err(BvaeError::Usage(format!(
            "{} holds a run of a different config ({} vs {hash}); pass --force to replace it",
            json_path.display(),
            rec.config_hash
        )));
    }
    if !spec.force {
        if let Some((rec, src)) = find_completed(&spec.out_dir, &hash, data.is_fixed())? {
            log::info!("{}: reusing identical run {}", v.name, src.display());
            let src_ckpt = src.with_extension("ckpt");
            if src_ckpt.exists() && !ckpt_path.exists() {
                std::fs::copy(&src_ckpt, &ckpt_path).map_err(|e| BvaeError::io(&ckpt_path, e))?;
            }
            let rec = RunRecord {
                experiment: spec.name.clone(),
                variant: v.name.clone(),
                repeat: r,
                ..rec
            };
            write_json(&json_path, &rec)?;
            return Ok(rec);
        }
    }
    let bundle = data.get(&cfg)?;
    let mut ck = match (!spec.force && ckpt_path.exists()).then(|| load_checkpoint(&ckpt_path)) {
        Some(Ok(ck)) if ck.config == cfg => {
            log::info!("{}: resuming at epoch {}", v.name, ck.epoch);
            ck
        }
        Some(Ok(_)) => {
            return Err(BvaeError::Usage(format!(
                "{} belongs to a different config; pass --force to replace it",
                ckpt_path.display()
            )))
        }
        Some(Err(e)) => return Err(e),
        None => Checkpoint::init(&cfg)?,
    };
    let opts = TrainOptions {
        checkpoint_path: Some(ckpt_path),
        stop_after: None,
    };
    continue_training(&mut ck, bundle, &opts)?;
    let metrics = evaluate(&ck, &training_split(&cfg, bundle), &bundle.test)?;
    log::info!(
        "{} run {r}: NMI {:.3} ACC {:.3} ARI {:.3} probe {:.3}",
        v.name,
        metrics.nmi,
        metrics.acc,
        metrics.ari,
        metrics.probe_accuracy
    );
    let rec = RunRecord {
        experiment: spec.name.clone(),
        variant: v.name.clone(),
        repeat: r,
        seed: cfg.seed,
        config_hash: hash,
        code_version: CODE_VERSION.into(),
        config: cfg,
        metrics,
        history: ck.history.clone(),
        fixed_data: data.is_fixed(),
    };
    write_json(&json_path, &rec)?;
    Ok(rec)
}

/// Trains every variant × repeat (optionally only variants named in
/// `only`) and writes `summary.csv` over the variants whose repeats are
/// all complete.
pub fn run_experiment(spec: &ExperimentSpec, data: &mut DataCache, only: &[String]) -> Result<Vec<AggregateRow>> {
    spec.validate()?;
    for name in only {
        if !spec.variants.iter().any(|v| &v.name == name) {
            return Err(BvaeError::Usage(format!("experiment {} has no variant {name:?}", spec.name)));
        }
    }
    let dir = spec.dir();
    std::fs::create_dir_all(&dir).map_err(|e| BvaeError::io(&dir, e))?;
    write_json(&dir.join("spec.json"), spec)?;
    for v in &spec.variants {
        if !only.is_empty() && !only.contains(&v.name) {
            continue;
        }
        for r in 0..spec.repeat {
            run_one(spec, v, r, data)?;
        }
    }
    let rows = collect_rows(spec)?;
    write_summary(&dir.join("summary.csv"), &rows)?;
    Ok(rows)
}

/// Aggregates completed runs already on disk.
pub fn collect_rows(spec: &ExperimentSpec) -> Result<Vec<AggregateRow>> {
    let mut rows = Vec::new();
    for v in &spec.variants {
        let mut runs = Vec::new();
        for r in 0..spec.repeat {
            let p = spec.dir().join(&v.name).join(format!("run-{r}.json"));
            if p.exists() {
                let rec: RunRecord = read_json(&p)?;
                if rec.config_hash == spec.run_config(v, r).hash() {
                    runs.push(rec);
                }
            }
        }
        if runs.len() == spec.repeat {
            rows.push(aggregate(&v.name, &runs));
        }
    }
    Ok(rows)
}
