//! `bvae` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bvae::branch::BranchKind;
use bvae::data::{blob_bundle, data_dir, load_bundle, ClassWeights, DataBundle, DATA_DIR_ENV};
use bvae::experiments::{
    apply_quick, collect_rows, export_confusion, export_decoder_grid, export_latent_scatter,
    export_sampled_reconstruction, preset, run_experiment, write_json, DataCache, ExperimentSpec, OutputMeta,
    DEFAULT_REPEAT,
};
use bvae::metrics::run_selftest;
use bvae::train::{
    continue_training, end_to_end_grad_check, evaluate, evaluate_probe, load_checkpoint, training_split, Checkpoint,
    ProbeConfig, TrainConfig, TrainOptions,
};
use bvae::vae::ReconMode;
use bvae::{BvaeError, Result};

#[derive(Parser)]
#[command(name = "bvae", version, about = "Branched variational autoencoder workbench")]
struct Cli {
    /// Master seed (overrides config files).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// 10000-sample / 10-epoch smoke profile.
    #[arg(long, global = true)]
    quick: bool,
    /// Output directory.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Replace existing outputs.
    #[arg(long, global = true)]
    force: bool,
    /// Use generated blob images instead of MNIST (N training samples).
    #[arg(long, global = true, value_name = "N")]
    synthetic: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train one model from a config file or preset variant.
    Train(TrainArgs),
    /// Clustering metrics and probe accuracy of a checkpoint.
    Eval {
        checkpoint: PathBuf,
    },
    /// Write scatter CSV, decoder grid, confusion matrix or a decoded sample.
    Export(ExportArgs),
    /// MNIST framework comparison.
    Table1(TableArgs),
    /// Fixed-output target sets.
    Table2(TableArgs),
    /// Framework comparison on rotated digits.
    Table3(TableArgs),
    /// Latent dimension sweep on rotated digits.
    Table4(TableArgs),
    /// Any named preset (table1-4, knn-weighting, classifiers).
    Experiment {
        preset: String,
        #[command(flatten)]
        args: TableArgs,
    },
    /// Print the variant configs of a preset as JSON.
    Preset {
        name: String,
    },
    /// Print the JSON schema of config files.
    Schema,
    /// Finite-difference check of the full objective on a reduced model.
    GradCheck,
    /// Metric implementations against brute-force oracles.
    MetricsSelftest,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON config file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Preset name, used with --variant.
    #[arg(long, requires = "variant")]
    preset: Option<String>,
    #[arg(long)]
    variant: Option<String>,
    /// Checkpoint path (default <out>/train/<config hash>.ckpt). An
    /// existing checkpoint of the same config is resumed.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Branch as JSON, e.g. '{"kind":"exact_knn","n":40}'.
    #[arg(long)]
    branch: Option<String>,
    /// Class-weight preset: uniform, x10, x2a, x2b.
    #[arg(long)]
    weights: Option<String>,
    /// Train on the first N samples.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportKind {
    Scatter,
    Grid,
    Confusion,
    Sample,
    All,
}

#[derive(Args)]
struct ExportArgs {
    checkpoint: PathBuf,
    #[arg(value_enum, default_value = "all")]
    what: ExportKind,
    /// Latent point for `sample`, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    z: Vec<f64>,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long, default_value_t = DEFAULT_REPEAT)]
    repeat: usize,
    /// Run only these variants (repeatable); the summary covers every
    /// variant whose runs are complete.
    #[arg(long)]
    only: Vec<String>,
    /// Aggregate existing runs without training.
    #[arg(long)]
    summarize: bool,
}

const SCHEMA: &str = include_str!("../config.schema.json");

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn,bvae=info",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn data_cache(cli: &Cli) -> Result<DataCache> {
    match cli.synthetic {
        Some(n) => Ok(DataCache::fixed(blob_bundle(n, (n / 6).max(10), cli.seed.unwrap_or(0))?)),
        None => Ok(DataCache::new(data_dir())),
    }
}

fn bundle_for(cli: &Cli, cfg: &TrainConfig) -> Result<DataBundle> {
    match cli.synthetic {
        Some(n) => blob_bundle(n, (n / 6).max(10), cfg.seed),
        None => load_bundle(&data_dir(), cfg.dataset, cfg.rotation_seed).map_err(|e| match e {
            BvaeError::MissingData(m) => BvaeError::MissingData(format!("{m} (set {DATA_DIR_ENV})")),
            other => other,
        }),
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Train(a) => cmd_train(cli, a),
        Cmd::Eval { checkpoint } => cmd_eval(cli, checkpoint),
        Cmd::Export(a) => cmd_export(cli, a),
        Cmd::Table1(a) => cmd_table(cli, "table1", a),
        Cmd::Table2(a) => cmd_table(cli, "table2", a),
        Cmd::Table3(a) => cmd_table(cli, "table3", a),
        Cmd::Table4(a) => cmd_table(cli, "table4", a),
        Cmd::Experiment { preset, args } => cmd_table(cli, preset, args),
        Cmd::Preset { name } => {
            let v = preset(name, cli.seed.unwrap_or(0), cli.quick)?;
            println!("{}", serde_json::to_string_pretty(&v)?);
            Ok(())
        }
        Cmd::Schema => {
            print!("{SCHEMA}");
            Ok(())
        }
        Cmd::GradCheck => cmd_grad_check(cli),
        Cmd::MetricsSelftest => {
            let results = run_selftest(cli.seed.unwrap_or(0))?;
            let failed = results.iter().filter(|r| !r.passed).count();
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            if failed > 0 {
                return Err(BvaeError::Validation(format!("{failed} metric self-tests failed")));
            }
            Ok(())
        }
    }
}

fn train_config(cli: &Cli, a: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match (&a.config, &a.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| BvaeError::Io {
                path: path.clone(),
                source: e,
            })?;
            TrainConfig::from_json(&text)?
        }
        (None, Some(p)) => {
            let name = a.variant.as_deref().unwrap_or_default();
            preset(p, 0, false)?
                .into_iter()
                .find(|v| v.name == name)
                .ok_or_else(|| BvaeError::Usage(format!("preset {p} has no variant {name:?}")))?
                .config
        }
        (None, None) => TrainConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.quick {
        apply_quick(&mut cfg);
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = a.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = a.latent_dim {
        cfg.latent_dim = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(b) = &a.branch {
        cfg.branch = Some(serde_json::from_str::<BranchKind>(b)?);
    }
    if let Some(w) = &a.weights {
        cfg.class_weights = ClassWeights::preset(w)?;
    }
    if let Some(n) = a.samples {
        cfg.train_samples = Some(n);
    }
    let cfg = cfg.normalized();
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let cfg = train_config(cli, a)?;
    let path = a
        .checkpoint
        .clone()
        .unwrap_or_else(|| cli.out.join("train").join(format!("{}.ckpt", cfg.hash())));
    let data = bundle_for(cli, &cfg)?;
    let mut ck = if path.exists() && !cli.force {
        let ck = load_checkpoint(&path)?;
        if ck.config != cfg {
            return Err(BvaeError::Usage(format!(
                "{} holds a different config; pass --force to start over",
                path.display()
            )));
        }
        log::info!("resuming {} at epoch {}", path.display(), ck.epoch);
        ck
    } else {
        Checkpoint::init(&cfg)?
    };
    log::info!("config {} -> {}", cfg.hash(), path.display());
    let opts = TrainOptions {
        checkpoint_path: Some(path.clone()),
        stop_after: None,
    };
    continue_training(&mut ck, &data, &opts)?;
    if let Some(last) = ck.history.last() {
        println!("{}", serde_json::to_string(last)?);
    }
    println!("checkpoint: {}", path.display());
    Ok(())
}

fn cmd_eval(cli: &Cli, path: &Path) -> Result<()> {
    let ck = load_checkpoint(path)?;
    let data = bundle_for(cli, &ck.config)?;
    let report = evaluate(&ck, &training_split(&ck.config, &data), &data.test)?;
    let out = serde_json::json!({
        "checkpoint": path,
        "meta": OutputMeta::of(&ck),
        "metrics": report,
    });
    let dest = path.with_extension("eval.json");
    if dest.exists() && !cli.force {
        return Err(BvaeError::Usage(format!("{} exists; pass --force to replace it", dest.display())));
    }
    write_json(&dest, &out)?;
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_export(cli: &Cli, a: &ExportArgs) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let stem = a
        .checkpoint
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    let dir = cli.out.join("export").join(&stem);
    std::fs::create_dir_all(&dir).map_err(|e| BvaeError::Io {
        path: dir.clone(),
        source: e,
    })?;
    let guard = |p: PathBuf| -> Result<PathBuf> {
        if p.exists() && !cli.force {
            Err(BvaeError::Usage(format!("{} exists; pass --force to replace it", p.display())))
        } else {
            Ok(p)
        }
    };
    let all = matches!(a.what, ExportKind::All);
    let needs_data = all || matches!(a.what, ExportKind::Scatter | ExportKind::Confusion);
    let data = if needs_data { Some(bundle_for(cli, &ck.config)?) } else { None };
    if all || matches!(a.what, ExportKind::Scatter) {
        let p = guard(dir.join("latent_scatter.csv"))?;
        export_latent_scatter(&ck, &data.as_ref().expect("data loaded").test, &p)?;
        println!("{}", p.display());
    }
    if (all && ck.model.latent_dim() == 2) || matches!(a.what, ExportKind::Grid) {
        let p = guard(dir.join("decoder_grid.pgm"))?;
        export_decoder_grid(&ck, &p)?;
        println!("{}", p.display());
    }
    if all || matches!(a.what, ExportKind::Confusion) {
        let data = data.as_ref().expect("data loaded");
        let cfg = ProbeConfig {
            seed: ck.config.seed,
            ..ProbeConfig::default()
        };
        let pr = evaluate_probe(&ck, &training_split(&ck.config, data), &data.test, &cfg)?;
        let (c, g) = (guard(dir.join("confusion.csv"))?, guard(dir.join("confusion.pgm"))?);
        export_confusion(&pr.confusion, &OutputMeta::of(&ck), &c, &g)?;
        println!("{} (probe accuracy {:.4})", c.display(), pr.accuracy);
    }
    if matches!(a.what, ExportKind::Sample) || (all && !a.z.is_empty()) {
        let z = if a.z.is_empty() { vec![0.0; ck.model.latent_dim()] } else { a.z.clone() };
        let tag: Vec<String> = z.iter().map(|v| format!("{v}")).collect();
        let p = guard(dir.join(format!("sample_{}.pgm", tag.join("_"))))?;
        export_sampled_reconstruction(&ck, &z, &p)?;
        println!("{}", p.display());
    }
    Ok(())
}

fn cmd_table(cli: &Cli, name: &str, a: &TableArgs) -> Result<()> {
    let spec = ExperimentSpec {
        name: if cli.quick { format!("{name}-quick") } else { name.to_string() },
        variants: preset(name, cli.seed.unwrap_or(0), cli.quick)?,
        repeat: a.repeat,
        out_dir: cli.out.clone(),
        force: cli.force,
    };
    let rows = if a.summarize {
        let rows = collect_rows(&spec)?;
        bvae::experiments::write_summary(&spec.dir().join("summary.csv"), &rows)?;
        rows
    } else {
        run_experiment(&spec, &mut data_cache(cli)?, &a.only)?
    };
    println!("{:<20} {:>6} {:>6} {:>6} {:>8}", "variant", "NMI", "ACC", "ARI", "probe");
    for r in &rows {
        println!(
            "{:<20} {:>6.3} {:>6.3} {:>6.3} {:>8.3}",
            r.variant, r.nmi, r.acc, r.ari, r.probe_accuracy
        );
    }
    println!("summary: {}", spec.dir().join("summary.csv").display());
    Ok(())
}

fn cmd_grad_check(cli: &Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(11);
    let kinds: Vec<(&str, Option<BranchKind>, ReconMode)> = vec![
        ("vae (bce)", None, ReconMode::Bce),
        ("vae (mse)", None, ReconMode::Mse),
        ("mlp branch", Some(BranchKind::Mlp), ReconMode::Bce),
        ("linear branch", Some(BranchKind::Linear), ReconMode::Bce),
        ("soft-knn branch", Some(BranchKind::SoftKnn { k: 3, tau: 1.0 }), ReconMode::Bce),
        ("class-mean branch", Some(BranchKind::ClassMean { tau: 1.0 }), ReconMode::Bce),
    ];
    let mut failed = 0;
    for (name, r) in bvae::nn::layer_grad_checks(seed)? {
        let ok = r.max_relative_error <= 1e-4;
        failed += usize::from(!ok);
        println!(
            "{} layer {name}: max relative error {:.2e} over {} coordinates",
            if ok { "PASS" } else { "FAIL" },
            r.max_relative_error,
            r.checked
        );
    }
    for (name, kind, recon) in kinds {
        let r = end_to_end_grad_check(kind, recon, seed)?;
        let ok = r.max_relative_error <= 1e-3;
        failed += usize::from(!ok);
        println!(
            "{} {name}: max relative error {:.2e} over {} coordinates",
            if ok { "PASS" } else { "FAIL" },
            r.max_relative_error,
            r.checked
        );
    }
    if failed > 0 {
        return Err(BvaeError::Validation(format!("{failed} gradient checks exceeded their tolerance")));
    }
    Ok(())
}
