//! Command-line front end: pretraining, training, evaluation, baseline
//! comparison and relation-storage inspection.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use relprove::complex::{pretrain_embeddings, Pretrained};
use relprove::eval::{compute_efficiency, results_csv, ResultRow};
use relprove::generator::RelationStorage;
use relprove::trainer::{
    em_iteration, evaluate, initial_state, load_checkpoint, run_training, save_checkpoint, Scorer, TrainContext,
};
use relprove::{Embeddings, Error, ParameterStore, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "relprove", version, about = "Generator-guided neural theorem proving for link prediction")]
struct Cli {
    /// Worker threads (0 uses all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pretrain ComplEx embeddings and save them in the run directory.
    Pretrain(RunArgs),
    /// Run the alternating training loop and evaluate the best state.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split.
    Eval(EvalArgs),
    /// Time the selected-KB mode against the full-KB baseline.
    CompareBaseline(RunArgs),
    /// Print a checkpoint's relation storage, or replace it from a file.
    InspectStorage(InspectArgs),
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config override `key=value`; repeatable, wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Dataset name (looked up under $RELPROVE_DATA_DIR, default `data`) or path.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Parent of the per-config run directories.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Resume from this checkpoint directory.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Storage dump to load into the checkpoint (after validation).
    #[arg(long)]
    load: Option<PathBuf>,
}

/// Error raised for bad input rather than a failed run.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage_if_input(e: Error) -> anyhow::Error {
    match e {
        Error::Config(_) | Error::MissingDataset(_) | Error::Parse { .. } | Error::Lookup(_) => Usage(e.to_string()).into(),
        other => other.into(),
    }
}

/// Builds the config from (in increasing precedence) `fallback_config`,
/// `--config`, `--set`, `--dataset` and `--seed`.
fn load_config(args: &RunArgs, fallback_config: Option<&Path>) -> Result<RunConfig> {
    let path = args.config.as_deref().or(fallback_config);
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| Usage(format!("cannot read config {}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut overrides = Vec::new();
    for s in &args.set {
        overrides.push(RunConfig::parse_override(s).map_err(usage_if_input)?);
    }
    if let Some(d) = &args.dataset {
        overrides.push(("dataset".into(), format!("{d:?}")));
    }
    if let Some(s) = args.seed {
        overrides.push(("seed".into(), s.to_string()));
    }
    RunConfig::load(&text, &overrides).map_err(usage_if_input)
}

fn run_dir(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let name = Path::new(&cfg.dataset)
        .file_name()
        .map_or_else(|| "run".to_string(), |n| n.to_string_lossy().into_owned());
    let dir = out.join(format!("{name}-{}", cfg.hash()));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(dir)
}

fn context(cfg: RunConfig) -> Result<TrainContext> {
    TrainContext::from_config(cfg).map_err(usage_if_input)
}

fn pretrained_path(dir: &Path) -> PathBuf {
    dir.join("pretrained.json")
}

fn load_pretrained(dir: &Path) -> Result<Option<Pretrained>> {
    let p = pretrained_path(dir);
    if !p.is_file() {
        return Ok(None);
    }
    let store = ParameterStore::from_json(&fs::read_to_string(&p)?)?;
    let embeddings = Embeddings::from_store(&store)?;
    log::info!("reusing pretrained embeddings from {}", p.display());
    Ok(Some(Pretrained { store, embeddings, losses: Vec::new() }))
}

fn write_results(dir: &Path, ctx: &TrainContext, metrics: &std::collections::BTreeMap<String, f64>) -> Result<()> {
    let rows: Vec<ResultRow> = metrics
        .iter()
        .map(|(k, v)| ResultRow {
            dataset: ctx.dataset.name.clone(),
            metric: k.clone(),
            value: *v,
            seed: ctx.config.seed,
            config_hash: ctx.config.hash(),
        })
        .collect();
    fs::write(dir.join("results.csv"), results_csv(&rows))?;
    for r in &rows {
        println!("{}\t{}\t{:.4}", r.dataset, r.metric, r.value);
    }
    Ok(())
}

fn cmd_pretrain(args: &RunArgs) -> Result<()> {
    let cfg = load_config(args, None)?;
    let ctx = context(cfg)?;
    let dir = run_dir(&ctx.config, &args.out)?;
    let pre = pretrain_embeddings(&ctx.dataset.split.train, &ctx.dataset.vocab, &ctx.config.pretrain())?;
    fs::write(pretrained_path(&dir), pre.store.to_json()?)?;
    let mut csv = String::from("epoch,loss\n");
    for (i, l) in pre.losses.iter().enumerate() {
        let _ = writeln!(csv, "{i},{l}");
    }
    fs::write(dir.join("pretrain_loss.csv"), csv)?;
    println!(
        "pretrained {} epochs: loss {:.4} -> {:.4}; wrote {}",
        ctx.config.pretrain_epochs,
        pre.losses.first().copied().unwrap_or(f64::NAN),
        pre.losses.last().copied().unwrap_or(f64::NAN),
        dir.display()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let fallback = args.checkpoint.as_ref().map(|c| c.join("../config.toml")).filter(|p| p.is_file());
    let cfg = load_config(&args.run, fallback.as_deref())?;
    let ctx = context(cfg)?;
    let dir = run_dir(&ctx.config, &args.run.out)?;
    let state = match &args.checkpoint {
        Some(c) => load_checkpoint(&ctx, c)?,
        None => initial_state(&ctx, load_pretrained(&dir)?.as_ref())?,
    };
    let outcome = run_training(&ctx, state, Some(&dir))?;
    save_checkpoint(&ctx, &outcome.last, &dir.join("last"))?;
    if outcome.stopped_early {
        log::info!("stopped early after {} iterations", outcome.last.iteration);
    }
    let (metrics, records) = evaluate(&ctx, &outcome.best, ctx.config.test_sample)?;
    write_ranks(&dir, &ctx, &records)?;
    write_results(&dir, &ctx, &metrics)?;
    println!("run directory: {}", dir.display());
    Ok(())
}

fn write_ranks(dir: &Path, ctx: &TrainContext, records: &[relprove::RankRecord]) -> Result<()> {
    if records.is_empty() {
        return Ok(());
    }
    let mut out = String::from("fact\trank\tcandidates\tscore\n");
    for r in records {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", ctx.vocab.format_triple(&r.fact), r.rank, r.candidate_count, r.score);
    }
    fs::write(dir.join("ranks.tsv"), out)?;
    Ok(())
}

fn checkpoint_config(checkpoint: &Path) -> Option<PathBuf> {
    Some(checkpoint.join("../config.toml")).filter(|p| p.is_file())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let cfg = load_config(&args.run, checkpoint_config(&args.checkpoint).as_deref())?;
    let ctx = context(cfg)?;
    let state = load_checkpoint(&ctx, &args.checkpoint)?;
    let dir = run_dir(&ctx.config, &args.run.out)?;
    let (metrics, records) = evaluate(&ctx, &state, ctx.config.test_sample)?;
    if ctx.config.trace {
        let scorer = Scorer::new(&ctx, &state)?;
        let mut lines = String::new();
        for f in &ctx.dataset.split.test {
            for l in scorer.trace(f) {
                lines.push_str(&l);
                lines.push('\n');
            }
        }
        fs::write(dir.join("traces.txt"), lines)?;
    }
    write_ranks(&dir, &ctx, &records)?;
    write_results(&dir, &ctx, &metrics)?;
    Ok(())
}

fn cmd_compare(args: &RunArgs) -> Result<()> {
    let cfg = load_config(args, None)?;
    let ctx = context(cfg)?;
    let dir = run_dir(&ctx.config, &args.out)?;
    let base_ctx = ctx.as_baseline();
    let init = initial_state(&ctx, load_pretrained(&dir)?.as_ref())?;
    let mut model = init.clone();
    let mut base = init;
    for _ in 0..ctx.config.iterations {
        model = em_iteration(&ctx, &model)?;
        base = em_iteration(&base_ctx, &base)?;
    }
    let m: Vec<_> = model.metrics.iter().map(|r| r.efficiency()).collect();
    let b: Vec<_> = base.metrics.iter().map(|r| r.efficiency()).collect();
    let eff = compute_efficiency(&m, &b)?;
    let mut csv = String::from("mode,iterations,mean_attp_ms,traversed,established,utilization,attp_ratio\n");
    for (mode, recs, util, ratio) in [
        ("selected", &m, eff.utilization, eff.attp_ratio),
        ("baseline", &b, eff.baseline_utilization, 1.0),
    ] {
        let ms = recs.iter().map(|r| r.wall_ms).sum::<f64>() / recs.len() as f64;
        let t: u64 = recs.iter().map(|r| r.traversed).sum();
        let e: u64 = recs.iter().map(|r| r.established).sum();
        let _ = writeln!(csv, "{mode},{},{ms},{t},{e},{util},{ratio}", recs.len());
    }
    fs::write(dir.join("efficiency.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_inspect(args: &InspectArgs) -> Result<()> {
    let cfg = load_config(&args.run, checkpoint_config(&args.checkpoint).as_deref())?;
    let ctx = context(cfg)?;
    match &args.load {
        None => {
            let state = load_checkpoint(&ctx, &args.checkpoint)?;
            print!("{}", state.storage.dump(&ctx.vocab));
        }
        Some(file) => {
            let text = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
            let c = &ctx.config;
            let storage = RelationStorage::load(&text, &ctx.vocab, c.ep.clone(), c.batch_size, c.max_size())
                .map_err(usage_if_input)?;
            fs::write(args.checkpoint.join("storage.tsv"), storage.dump(&ctx.vocab))?;
            println!("loaded {} storage entries into {}", storage.len(), args.checkpoint.display());
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::CompareBaseline(a) => cmd_compare(a),
        Command::InspectStorage(a) => cmd_inspect(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
