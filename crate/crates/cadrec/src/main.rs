//! Command-line entry point: `train`, `eval`, `synth`, `diagnose`, `split`.
//! Exit codes: 0 success, 2 config error, 3 data error, 4 model error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cadrec::checkpoint::{load_checkpoint, save_checkpoint};
use cadrec::config::RunConfig;
use cadrec::dataio;
use cadrec::report;
use cadrec::trainer::{self, EvalSplit, TrainSettings};
use cadrec::{AppError, AppResult};
use cadrec_core::encoders::ModelParams;
use cadrec_core::evaluation::{pop_correlation, sd_gap};
use cadrec_core::hypergraph::{build_cooccurrence, HyperGraph};
use cadrec_core::interactions::{item_popularity, temporal_split, SplitDataset};
use cadrec_core::synth::{self, gini, item_counts};

#[derive(Parser)]
#[command(name = "cadrec", version, about = "Hypergraph recommender with popularity disentanglement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and save the best-validation checkpoint.
    Train(CommonArgs),
    /// Score a checkpoint on the held-out splits.
    Eval(EvalArgs),
    /// Generate a synthetic corpus with planted biases.
    Synth(SynthArgs),
    /// Popularity diagnostics for a trained checkpoint.
    Diagnose(DiagnoseArgs),
    /// Split a corpus and write the manifest and id maps.
    Split(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key=value config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all hardware threads).
    #[arg(long)]
    threads: Option<usize>,
    /// Named ablation to apply; repeatable.
    #[arg(long = "ablate", value_name = "NAME")]
    ablate: Vec<String>,
    /// Output directory; created if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the interactions file path.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Checkpoint to score.
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Checkpoint to diagnose.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Second checkpoint for a paired gap comparison.
    #[arg(long)]
    compare: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated popularity exponents; one corpus per value.
    #[arg(long, value_name = "LIST")]
    alpha_sweep: Option<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CADREC_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Diagnose(args) => cmd_diagnose(args),
        Command::Split(args) => cmd_split(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(common: &CommonArgs) -> AppResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(data) = &common.data {
        cfg.data = Some(data.clone());
    }
    for name in &common.ablate {
        cfg.ablations.insert(name.parse()?);
    }
    cfg.apply_ablations();
    cfg.validate()?;
    if let Some(threads) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| AppError::config(format!("cannot set thread pool: {e}")))?;
    }
    Ok(cfg)
}

/// Create the output directory and snapshot the effective configuration so
/// the run is reproducible from the artifacts alone.
fn prepare_out_dir(cfg: &RunConfig) -> AppResult<()> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| {
        AppError::data(format!("cannot create {}: {e}", cfg.out_dir.display()))
    })?;
    std::fs::write(cfg.out_dir.join("config_snapshot.cfg"), cfg.to_key_values())
        .map_err(|e| AppError::data(format!("cannot write config snapshot: {e}")))
}

fn load_split(cfg: &RunConfig) -> AppResult<(dataio::LoadedData, SplitDataset, HyperGraph)> {
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| AppError::config("no data path: set `data` in the config or pass --data"))?;
    let data = dataio::load_interactions(path, cfg.delimiter)?;
    let split = temporal_split(&data.log, &cfg.split_options())?;
    let graph = build_cooccurrence(&split)?;
    Ok((data, split, graph))
}

fn check_dims(params: &ModelParams, split: &SplitDataset) -> AppResult<()> {
    if params.num_items() != split.num_items || params.num_users() != split.num_users() {
        return Err(AppError::model(format!(
            "checkpoint is for {} users x {} items, data has {} x {}",
            params.num_users(),
            params.num_items(),
            split.num_users(),
            split.num_items
        )));
    }
    Ok(())
}

fn cmd_train(args: &CommonArgs) -> AppResult<()> {
    let cfg = load_config(args)?;
    prepare_out_dir(&cfg)?;
    let (_, split, graph) = load_split(&cfg)?;
    let settings = TrainSettings {
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        patience: cfg.patience,
        seed: cfg.seed,
        optimizer: cfg.optimizer_kind(),
        reg_form: cfg.reg_form,
        val_k: 20,
    };
    let outcome = trainer::train(&split, &graph, cfg.hp.clone(), &settings)?;
    save_checkpoint(&cfg.out_dir.join("model.ckpt"), &outcome.params)?;
    report::write_training_log(&cfg.out_dir.join("train.log"), &outcome.history, settings.val_k)?;
    let test = trainer::evaluate_split(&outcome.params, &graph, &split, EvalSplit::Test, &cfg.eval_ks)?;
    report::write_metrics_report(&cfg.out_dir.join("metrics.txt"), &test)?;
    println!("best_epoch={}", outcome.best_epoch);
    println!("best_val_ndcg@20={}", outcome.best_ndcg);
    for (k, m) in &test {
        println!("test_recall@{k}={}", m.recall);
        println!("test_ndcg@{k}={}", m.ndcg);
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> AppResult<()> {
    let cfg = load_config(&args.common)?;
    prepare_out_dir(&cfg)?;
    let params = load_checkpoint(&args.checkpoint)?;
    let (_, split, graph) = load_split(&cfg)?;
    check_dims(&params, &split)?;
    let test = trainer::evaluate_split(&params, &graph, &split, EvalSplit::Test, &cfg.eval_ks)?;
    report::write_metrics_report(&cfg.out_dir.join("eval_metrics.txt"), &test)?;
    let mut val_ks = cfg.eval_ks.clone();
    if !val_ks.contains(&20) {
        val_ks.push(20);
    }
    let val = trainer::evaluate_split(&params, &graph, &split, EvalSplit::Val, &val_ks)?;
    report::write_metrics_report(&cfg.out_dir.join("val_metrics.txt"), &val)?;
    report::write_embedding_dump(&cfg.out_dir.join("embeddings.txt"), &params)?;
    for (k, m) in &test {
        println!("test_recall@{k}={}", m.recall);
        println!("test_ndcg@{k}={}", m.ndcg);
    }
    for (k, m) in &val {
        println!("val_recall@{k}={}", m.recall);
        println!("val_ndcg@{k}={}", m.ndcg);
    }
    Ok(())
}

fn gap_rows(params: &ModelParams, split: &SplitDataset) -> AppResult<Vec<(usize, f64, f64)>> {
    let pop = item_popularity(split);
    let n = split.num_items;
    let mut rows = Vec::new();
    let mut seen = BTreeMap::new();
    for k in [50usize, 100, 500, 1000] {
        let clamped = k.min(n / 2);
        if clamped == 0 {
            continue;
        }
        if clamped < k {
            log::warn!("sd_gap k={k} clamped to {clamped} (catalog has {n} items)");
        }
        if seen.insert(clamped, ()).is_some() {
            continue;
        }
        let (top, bottom) = sd_gap(&params.item_embeddings, &pop, clamped)?;
        rows.push((clamped, top, bottom));
    }
    Ok(rows)
}

fn cmd_diagnose(args: &DiagnoseArgs) -> AppResult<()> {
    let cfg = load_config(&args.common)?;
    prepare_out_dir(&cfg)?;
    let params = load_checkpoint(&args.checkpoint)?;
    let (_, split, graph) = load_split(&cfg)?;
    check_dims(&params, &split)?;

    let rows = gap_rows(&params, &split)?;
    let mean = trainer::mean_item_scores(&params, &graph, &split)?;
    let pop = item_popularity(&split);
    let (rho, degenerate) = pop_correlation(&mean, &pop)?;
    report::write_diagnostics(&cfg.out_dir.join("diagnostics.txt"), &rows, rho, degenerate)?;
    println!("pop_correlation={rho}");
    for (k, top, bottom) in &rows {
        println!("sd_gap@{k}: top={top} bottom={bottom}");
    }

    if let Some(other_path) = &args.compare {
        let other = load_checkpoint(other_path)?;
        check_dims(&other, &split)?;
        let other_rows = gap_rows(&other, &split)?;
        let label_a = label_for(&args.checkpoint);
        let label_b = label_for(other_path);
        report::write_gap_comparison(
            &cfg.out_dir.join("gap_comparison.csv"),
            &label_a,
            &rows,
            &label_b,
            &other_rows,
        )?;
    }
    Ok(())
}

fn label_for(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint".to_string())
}

fn cmd_synth(args: &SynthArgs) -> AppResult<()> {
    let cfg = load_config(&args.common)?;
    prepare_out_dir(&cfg)?;
    let alphas: Vec<f64> = match &args.alpha_sweep {
        Some(list) => list
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| AppError::config(format!("bad alpha value `{t}`")))
            })
            .collect::<AppResult<_>>()?,
        None => vec![cfg.synth_alpha_pop],
    };
    for alpha in alphas {
        let mut synth_cfg = cfg.synth_config();
        synth_cfg.alpha_pop = alpha;
        let (log, truth) = synth::generate(&synth_cfg)?;
        let (corpus_path, truth_path) = if args.alpha_sweep.is_some() {
            (
                cfg.out_dir.join(format!("synth_alpha_{alpha}.tsv")),
                cfg.out_dir.join(format!("synth_alpha_{alpha}_truth.tsv")),
            )
        } else {
            (cfg.out_dir.join("synth.tsv"), cfg.out_dir.join("synth_truth.tsv"))
        };
        dataio::save_interactions(&corpus_path, &log, '\t')?;
        dataio::save_truth_sidecar(
            &truth_path,
            &truth,
            synth_cfg.seed,
            synth_cfg.alpha_pop,
            synth_cfg.sigma_indi,
        )?;
        println!(
            "alpha_pop={alpha} events={} gini={}",
            log.events.len(),
            gini(&item_counts(&log))
        );
    }
    Ok(())
}

fn cmd_split(args: &CommonArgs) -> AppResult<()> {
    let cfg = load_config(args)?;
    prepare_out_dir(&cfg)?;
    let (data, split, _) = load_split(&cfg)?;
    dataio::save_split_manifest(&cfg.out_dir.join("split.manifest"), &split)?;
    dataio::save_index_map(&cfg.out_dir.join("user_index.tsv"), &data.user_ids)?;
    dataio::save_index_map(&cfg.out_dir.join("item_index.tsv"), &data.item_ids)?;
    println!(
        "users={} items={} trained_users={} train_events={}",
        split.num_users(),
        split.num_items,
        split.trained_users().count(),
        split.num_train_events()
    );
    Ok(())
}
