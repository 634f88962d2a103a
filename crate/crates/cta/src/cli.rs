//! Config-driven command-line entry point with a filesystem run registry.
//!
//! Every invocation materializes one directory under the output root,
//! named `<timestamp>-<confighash12>-<subcommand>`, and writes all of its
//! artifacts there: a frozen copy of the effective config, checkpoints,
//! CSVs, and charts. Nothing outside the run directory is ever touched,
//! so the registry is append-only and safe to share between runs.
//!
//! CSV rows carry the config-hash part of the run id only; re-running an
//! identical config reproduces every CSV byte for byte even though the
//! directory name embeds a fresh timestamp.

use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::adapt::{make_adapter, AdaptMethod, Adapter};
use crate::config::{parse_config_str, ExperimentConfig};
use crate::error::{CtaError, Result};
use crate::harness::{
    aggregate_seeds, aggregate_csv, confidence_chart, long_term_chart, results_csv, sweep_chart,
    sweep_csv, telemetry_csv, AggregateReport, ProtocolKind, ProtocolRun, RunReport, SweepReport,
};
use crate::model::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
use crate::model::network::{build_model, Network};
use crate::model::params::ParamStore;
use crate::model::train::train_source;
use crate::numerics::optim::{OptimizerKind, OptimizerState};
use crate::rng::derive_seed;
use crate::shiftgen::{generate_domain, ingest_folder, split_train_val, SyntheticDataset};

pub const CHECKPOINT_FILE: &str = "model.ctab";
pub const FROZEN_CONFIG_FILE: &str = "config.json";
/// Tag under which replica run seeds derive from the master seed.
pub const REPLICA_SEED_TAG: u64 = 0x7265_706c;
/// Panels per adapter in the inspect chart.
pub const INSPECT_SAMPLES: usize = 10;

#[derive(Debug, Parser)]
#[command(name = "cta", version, about = "Continual test-time adaptation benchmark harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the source model and register its checkpoint.
    TrainSource(CommonArgs),
    /// One-pass adaptation across the short-term benchmark.
    AdaptShort(CommonArgs),
    /// Multi-epoch adaptation with source bookkeeping per epoch.
    AdaptLong(CommonArgs),
    /// Batch-size sweep of the BN recalibration gain.
    Sweep(CommonArgs),
    /// Per-sample confidence charts for every adapter.
    Inspect(CommonArgs),
    /// Validate an image-folder dataset without running an experiment.
    IngestCheck(IngestArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment config; documented defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run registry root; overrides CTA_OUTPUT_DIR and the config.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Overrides the config's master_seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of seed replicas, run concurrently.
    #[arg(long)]
    pub parallel_seeds: Option<usize>,
    /// Chatty progress logging.
    #[arg(long, short)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Dataset root laid out as <domain>/<class>/<image files>.
    pub path: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

impl Cli {
    pub fn verbose(&self) -> bool {
        match &self.command {
            Command::TrainSource(a)
            | Command::AdaptShort(a)
            | Command::AdaptLong(a)
            | Command::Sweep(a)
            | Command::Inspect(a) => a.verbose,
            Command::IngestCheck(a) => a.common.verbose,
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainSource(a) => train_source_cmd(&prepare(&a, "train-source")?),
        Command::AdaptShort(a) => adapt_cmd(&prepare(&a, "adapt-short")?, ProtocolKind::Short),
        Command::AdaptLong(a) => adapt_cmd(&prepare(&a, "adapt-long")?, ProtocolKind::Long),
        Command::Sweep(a) => sweep_cmd(&prepare(&a, "sweep")?),
        Command::Inspect(a) => inspect_cmd(&prepare(&a, "inspect")?),
        Command::IngestCheck(a) => ingest_check_cmd(&a),
    }
}

/// Everything a subcommand needs: the validated config, its own freshly
/// created run directory, and the replica plan.
pub struct RunContext {
    pub cfg: ExperimentConfig,
    pub run_id: String,
    pub run_dir: PathBuf,
    pub replicas: usize,
    pub concurrent: bool,
}

fn prepare(args: &CommonArgs, subcommand: &str) -> Result<RunContext> {
    let cfg = load_config(args)?;
    check_kind(&cfg, subcommand)?;
    let replicas = args.parallel_seeds.unwrap_or(cfg.protocol.seeds).max(1);
    let run_id = cfg.content_hash()[..12].to_string();
    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CtaError::io(cfg.output_dir.display().to_string(), e))?;
    // Timestamps resolve to one second; a rerun inside the same second gets
    // a numbered sibling instead of sharing (and clobbering) the directory.
    let base = format!("{}-{run_id}-{subcommand}", timestamp());
    let mut run_dir = cfg.output_dir.join(&base);
    let mut attempt = 1usize;
    loop {
        match fs::create_dir(&run_dir) {
            Ok(()) => break,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                attempt += 1;
                run_dir = cfg.output_dir.join(format!("{base}-{attempt}"));
            }
            Err(e) => return Err(CtaError::io(run_dir.display().to_string(), e)),
        }
    }
    write_text(&run_dir.join(FROZEN_CONFIG_FILE), &cfg.effective_json())?;
    info!("run directory {}", run_dir.display());
    Ok(RunContext {
        cfg,
        run_id,
        run_dir,
        replicas,
        concurrent: args.parallel_seeds.is_some(),
    })
}

/// Reads the config file (or starts from defaults) with the command-line
/// overrides spliced into the raw document, so one validation pass sees the
/// final values.
fn load_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let text = match &args.config {
        Some(path) => fs::read_to_string(path).map_err(|e| CtaError::io(path.display().to_string(), e))?,
        None => "{}".into(),
    };
    let mut root: serde_json::Value = serde_json::from_str(&text)?;
    if let Some(map) = root.as_object_mut() {
        if let Some(seed) = args.seed {
            map.insert("master_seed".into(), seed.into());
        }
        let flag = args.output_dir.as_ref().map(|p| p.display().to_string());
        let env = std::env::var("CTA_OUTPUT_DIR").ok().filter(|s| !s.is_empty());
        if let Some(dir) = flag.or(env) {
            map.insert("output_dir".into(), dir.into());
        }
    }
    parse_config_str(&serde_json::to_string(&root)?)
}

/// A config may pin its protocol kind; if it does, it must agree with the
/// subcommand instead of being silently overridden.
fn check_kind(cfg: &ExperimentConfig, subcommand: &str) -> Result<()> {
    let required = match subcommand {
        "adapt-short" => Some(ProtocolKind::Short),
        "adapt-long" => Some(ProtocolKind::Long),
        "sweep" => Some(ProtocolKind::Sweep),
        _ => None,
    };
    match (cfg.protocol.kind, required) {
        (Some(got), Some(want)) if got != want => Err(CtaError::ConfigInvalid(vec![format!(
            "protocol.kind: config pins `{got:?}` but the subcommand runs `{want:?}`"
        )])),
        _ => Ok(()),
    }
}

fn timestamp() -> String {
    let t = time::OffsetDateTime::now_utc();
    format!(
        "{:04}{:02}{:02}T{:02}{:02}{:02}Z",
        t.year(),
        u8::from(t.month()),
        t.day(),
        t.hour(),
        t.minute(),
        t.second()
    )
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| CtaError::io(path.display().to_string(), e))
}

/// Hash of everything that determines the trained source model: the
/// architecture, the training recipe, the source domain, and the master
/// seed. Adaptation runs use it to find a compatible checkpoint.
pub fn source_fingerprint(cfg: &ExperimentConfig) -> String {
    use sha2::{Digest, Sha256};
    let source = cfg.domain(&cfg.protocol.source_domains[0]);
    let doc = serde_json::json!({
        "model": cfg.model,
        "source_training": cfg.source_training,
        "source_domain": source,
        "master_seed": cfg.master_seed,
    });
    let digest = Sha256::digest(serde_json::to_string(&doc).expect("fingerprint serializes").as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// The source dataset and its deterministic train/val split.
fn source_split(cfg: &ExperimentConfig) -> Result<(SyntheticDataset, SyntheticDataset)> {
    let id = &cfg.protocol.source_domains[0];
    let spec = cfg
        .domain(id)
        .ok_or_else(|| CtaError::invalid("protocol.source_domains", format!("unknown domain `{id}`")))?;
    let full = generate_domain(spec, cfg.source_training.per_class)?;
    split_train_val(&full, 1.0 - cfg.source_training.val_fraction, cfg.master_seed)
}

fn train_source_cmd(ctx: &RunContext) -> Result<()> {
    let cfg = &ctx.cfg;
    let (train, val) = source_split(cfg)?;
    info!("source split: {} train, {} val", train.len(), val.len());
    let (net, mut params) = build_model(cfg.model.spec(), cfg.master_seed)?;
    let mut opt = OptimizerState::new(
        OptimizerKind::sgd(cfg.source_training.momentum),
        cfg.source_training.learning_rate,
    )?;
    let history = train_source(
        &net,
        &mut params,
        &train.images,
        &train.labels,
        &val.images,
        &val.labels,
        cfg.source_training.epochs,
        cfg.source_training.batch_size,
        &mut opt,
        cfg.master_seed,
    )?;

    let ckpt = Checkpoint {
        spec: cfg.model.spec(),
        params,
        metadata: CheckpointMeta {
            seed: cfg.master_seed,
            epochs: cfg.source_training.epochs,
            final_val_accuracy: history.final_val_accuracy,
            source_hash: source_fingerprint(cfg),
        },
    };
    save_checkpoint(&ctx.run_dir.join(CHECKPOINT_FILE), &ckpt)?;

    let mut csv = String::from("run_id,epoch,train_loss,val_accuracy\n");
    for e in &history.epochs {
        csv.push_str(&format!(
            "{},{},{:.6},{:.6}\n",
            ctx.run_id, e.epoch, e.train_loss, e.val_accuracy
        ));
    }
    write_text(&ctx.run_dir.join("train_history.csv"), &csv)?;
    println!(
        "trained source model: final val accuracy {:.2}% -> {}",
        100.0 * history.final_val_accuracy,
        ctx.run_dir.join(CHECKPOINT_FILE).display()
    );
    Ok(())
}

/// Finds the newest checkpoint in the registry whose recorded source hash
/// matches this config.
pub fn find_checkpoint(cfg: &ExperimentConfig) -> Result<Checkpoint> {
    let fingerprint = source_fingerprint(cfg);
    let mut dirs: Vec<PathBuf> = match fs::read_dir(&cfg.output_dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect(),
        Err(_) => Vec::new(),
    };
    dirs.sort();
    for dir in dirs.iter().rev() {
        let candidate = dir.join(CHECKPOINT_FILE);
        if !candidate.is_file() {
            continue;
        }
        match load_checkpoint(&candidate) {
            Ok(ckpt) if ckpt.metadata.source_hash == fingerprint => {
                info!("using checkpoint {}", candidate.display());
                return Ok(ckpt);
            }
            _ => continue,
        }
    }
    Err(CtaError::CheckpointMissing {
        search_dir: cfg.output_dir.display().to_string(),
        source_hash: fingerprint,
    })
}

/// Checkpoint architecture must match the config that is about to use it.
fn check_architecture(cfg: &ExperimentConfig, ckpt: &Checkpoint) -> Result<()> {
    if ckpt.spec != cfg.model.spec() {
        return Err(CtaError::CheckpointFormat(format!(
            "architecture mismatch: checkpoint was trained for input {:?} with {} classes, config asks for {:?} with {}",
            ckpt.spec.input_shape, ckpt.spec.classes, cfg.model.input_shape, cfg.model.classes
        )));
    }
    Ok(())
}

/// Builds the benchmark once: the model from its checkpoint, the source
/// validation split, and the target datasets for the given protocol kind.
struct Bench {
    net: Network,
    params: ParamStore,
    val: SyntheticDataset,
    targets: Vec<SyntheticDataset>,
}

fn load_bench(cfg: &ExperimentConfig, kind: ProtocolKind) -> Result<Bench> {
    let ckpt = find_checkpoint(cfg)?;
    check_architecture(cfg, &ckpt)?;
    let (_, val) = source_split(cfg)?;
    let mut targets = Vec::new();
    for id in cfg.targets_for(kind) {
        let spec = cfg
            .domain(&id)
            .ok_or_else(|| CtaError::invalid("protocol.target_domains", format!("unknown domain `{id}`")))?;
        targets.push(generate_domain(spec, cfg.protocol.per_class)?);
    }
    let net = Network::new(ckpt.spec)?;
    Ok(Bench { net, params: ckpt.params, val, targets })
}

fn replica_seed(cfg: &ExperimentConfig, replica: usize) -> u64 {
    derive_seed(cfg.master_seed, &[REPLICA_SEED_TAG, replica as u64])
}

/// Runs every (replica, method) pair of the roster, replicas concurrently
/// when requested, and returns reports grouped by method in roster order.
fn run_replicas(
    ctx: &RunContext,
    bench: &Bench,
    kind: ProtocolKind,
) -> Result<Vec<(AdaptMethod, Vec<RunReport>)>> {
    let cfg = &ctx.cfg;
    let roster = cfg.adapter.roster();
    let one_replica = |replica: usize| -> Result<Vec<RunReport>> {
        let run_seed = replica_seed(cfg, replica);
        let mut reports = Vec::with_capacity(roster.len());
        for &method in &roster {
            let spec = cfg.protocol_spec(kind, cfg.adapter.config_for(method));
            spec.validate()?;
            let run = ProtocolRun {
                spec: &spec,
                net: &bench.net,
                params: &bench.params,
                source_val: &bench.val,
                targets: &bench.targets,
            };
            let report = match kind {
                ProtocolKind::Long => run.run_long_term(run_seed)?,
                _ => run.run_short_term(run_seed)?,
            };
            info!(
                "replica {replica} {}: mean accuracy {:.2}%",
                method.name(),
                report.mean_accuracy
            );
            reports.push(report);
        }
        Ok(reports)
    };

    let per_replica: Vec<Vec<RunReport>> = if ctx.concurrent && ctx.replicas > 1 {
        thread::scope(|scope| {
            let handles: Vec<_> = (0..ctx.replicas).map(|r| scope.spawn(move || one_replica(r))).collect();
            handles.into_iter().map(|h| h.join().expect("replica thread panicked")).collect::<Vec<_>>()
        })
    } else {
        (0..ctx.replicas).map(one_replica).collect()
    }
    .into_iter()
    .collect::<Result<_>>()?;

    let mut grouped: Vec<(AdaptMethod, Vec<RunReport>)> =
        roster.iter().map(|&m| (m, Vec::with_capacity(ctx.replicas))).collect();
    for replica_reports in per_replica {
        for (slot, report) in grouped.iter_mut().zip(replica_reports) {
            slot.1.push(report);
        }
    }
    Ok(grouped)
}

fn write_report_csvs(ctx: &RunContext, grouped: &[(AdaptMethod, Vec<RunReport>)]) -> Result<Vec<AggregateReport>> {
    let ordered: Vec<&RunReport> = grouped.iter().flat_map(|(_, rs)| rs.iter()).collect();
    write_text(&ctx.run_dir.join("results.csv"), &results_csv(&ctx.run_id, &ordered))?;
    write_text(&ctx.run_dir.join("telemetry.csv"), &telemetry_csv(&ctx.run_id, &ordered))?;
    let aggregates: Vec<AggregateReport> = grouped
        .iter()
        .map(|(_, rs)| aggregate_seeds(rs))
        .collect::<Result<_>>()?;
    let agg_refs: Vec<&AggregateReport> = aggregates.iter().collect();
    write_text(&ctx.run_dir.join("aggregate.csv"), &aggregate_csv(&ctx.run_id, &agg_refs))?;
    Ok(aggregates)
}

fn adapt_cmd(ctx: &RunContext, kind: ProtocolKind) -> Result<()> {
    let bench = load_bench(&ctx.cfg, kind)?;
    let grouped = run_replicas(ctx, &bench, kind)?;
    let aggregates = write_report_csvs(ctx, &grouped)?;

    if kind == ProtocolKind::Long {
        let accuracy_curves: Vec<(String, Vec<(usize, f64)>)> = aggregates
            .iter()
            .map(|agg| (agg.adapter.clone(), epoch_target_means(agg)))
            .collect();
        write_text(
            &ctx.run_dir.join("long_accuracy.svg"),
            &long_term_chart("target accuracy by epoch", "accuracy (%)", &accuracy_curves),
        )?;
        let forget_curves: Vec<(String, Vec<(usize, f64)>)> = aggregates
            .iter()
            .map(|agg| {
                (
                    agg.adapter.clone(),
                    agg.forget_rates.iter().map(|&(epoch, mean, _)| (epoch, mean)).collect(),
                )
            })
            .collect();
        write_text(
            &ctx.run_dir.join("long_forgetting.svg"),
            &long_term_chart("source forgetting by epoch", "forget rate (points)", &forget_curves),
        )?;
    }

    for agg in &aggregates {
        println!(
            "{:6} mean accuracy {:6.2}% (std {:.2}, {} seed{})",
            agg.adapter,
            agg.mean_accuracy,
            agg.std_mean_accuracy,
            agg.seeds.len(),
            if agg.seeds.len() == 1 { "" } else { "s" }
        );
    }
    println!("artifacts in {}", ctx.run_dir.display());
    Ok(())
}

/// Per-epoch mean accuracy over target stages only (source bookends carry
/// epoch numbers too and must not dilute the curve).
fn epoch_target_means(agg: &AggregateReport) -> Vec<(usize, f64)> {
    let mut per_epoch: Vec<(usize, Vec<f64>)> = Vec::new();
    for stage in &agg.stages {
        if stage.name.starts_with("source_val") {
            continue;
        }
        match per_epoch.iter_mut().find(|(e, _)| *e == stage.epoch) {
            Some((_, vals)) => vals.push(stage.mean_accuracy),
            None => per_epoch.push((stage.epoch, vec![stage.mean_accuracy])),
        }
    }
    per_epoch
        .into_iter()
        .map(|(e, vals)| (e, vals.iter().sum::<f64>() / vals.len() as f64))
        .collect()
}

fn sweep_cmd(ctx: &RunContext) -> Result<()> {
    let cfg = &ctx.cfg;
    let bench = load_bench(cfg, ProtocolKind::Sweep)?;
    let spec = cfg.protocol_spec(ProtocolKind::Sweep, cfg.adapter.config_for(AdaptMethod::Bn));
    spec.validate()?;

    let one_replica = |replica: usize| -> Result<SweepReport> {
        let run = ProtocolRun {
            spec: &spec,
            net: &bench.net,
            params: &bench.params,
            source_val: &bench.val,
            targets: &bench.targets,
        };
        run.run_batch_sweep(replica_seed(cfg, replica))
    };
    let reports: Vec<SweepReport> = if ctx.concurrent && ctx.replicas > 1 {
        thread::scope(|scope| {
            let handles: Vec<_> = (0..ctx.replicas).map(|r| scope.spawn(move || one_replica(r))).collect();
            handles.into_iter().map(|h| h.join().expect("sweep thread panicked")).collect::<Vec<_>>()
        })
    } else {
        (0..ctx.replicas).map(one_replica).collect()
    }
    .into_iter()
    .collect::<Result<_>>()?;

    let refs: Vec<&SweepReport> = reports.iter().collect();
    write_text(&ctx.run_dir.join("sweep.csv"), &sweep_csv(&ctx.run_id, &refs))?;

    let mut curves: Vec<(String, Vec<(usize, f64)>)> = reports
        .iter()
        .enumerate()
        .map(|(i, r)| (format!("replica {i}"), r.curve.clone()))
        .collect();
    if reports.len() > 1 {
        let mean_curve: Vec<(usize, f64)> = reports[0]
            .curve
            .iter()
            .enumerate()
            .map(|(k, &(b, _))| {
                let mean = reports.iter().map(|r| r.curve[k].1).sum::<f64>() / reports.len() as f64;
                (b, mean)
            })
            .collect();
        curves.push(("mean".into(), mean_curve));
    }
    write_text(&ctx.run_dir.join("sweep_gain.svg"), &sweep_chart(&curves))?;

    for (batch, gain) in &reports[0].curve {
        println!("batch {batch:4}: replica-0 mean BN gain {gain:+.2} points");
    }
    println!("artifacts in {}", ctx.run_dir.display());
    Ok(())
}

fn inspect_cmd(ctx: &RunContext) -> Result<()> {
    let cfg = &ctx.cfg;
    let bench = load_bench(cfg, ProtocolKind::Short)?;
    let domain = &bench.targets[0];
    let run_seed = replica_seed(cfg, 0);

    // TENT and CoTTA are charted after one adaptation pass over the
    // inspected domain; Source and BN have no state to adapt.
    let roster = cfg.adapter.roster();
    let mut adapters: Vec<(String, Adapter)> = Vec::with_capacity(roster.len());
    for &method in &roster {
        let mut adapter = make_adapter(&bench.net, &bench.params, cfg.adapter.config_for(method))?;
        if matches!(method, AdaptMethod::Tent | AdaptMethod::Cotta) {
            let stream = crate::shiftgen::stream_batches(
                std::slice::from_ref(domain),
                cfg.protocol.batch_size,
                derive_seed(run_seed, &[REPLICA_SEED_TAG]),
            )?;
            for batch in stream {
                adapter.step(&batch.images)?;
            }
        }
        adapters.push((method.name().to_string(), adapter));
    }

    let mut eval_stream =
        crate::shiftgen::stream_batches(std::slice::from_ref(domain), cfg.protocol.batch_size, run_seed)?;
    let eval = eval_stream
        .next()
        .ok_or_else(|| CtaError::EmptyInput("inspect batch".into()))?;
    let count = INSPECT_SAMPLES.min(eval.labels.len());
    let indices: Vec<usize> = (0..count).collect();
    let named: Vec<(String, &Adapter)> = adapters.iter().map(|(n, a)| (n.clone(), a)).collect();
    let (svg, csv) = confidence_chart(&named, &eval.images, &eval.labels, &indices)?;
    write_text(&ctx.run_dir.join("inspect.svg"), &svg)?;
    write_text(&ctx.run_dir.join("confidence.csv"), &csv)?;
    println!(
        "{} adapters x {count} samples from `{}` -> {}",
        named.len(),
        domain.domain_id,
        ctx.run_dir.join("inspect.svg").display()
    );
    Ok(())
}

fn ingest_check_cmd(args: &IngestArgs) -> Result<()> {
    let ctx = prepare(&args.common, "ingest-check")?;
    let domains = ingest_folder(&args.path)?;
    let mut csv = String::from("run_id,domain_id,samples,classes\n");
    for ds in &domains {
        let classes = ds.labels.iter().max().map_or(0, |m| m + 1);
        csv.push_str(&format!("{},{},{},{}\n", ctx.run_id, ds.domain_id, ds.len(), classes));
        println!("{}: {} samples across {} classes", ds.domain_id, ds.len(), classes);
    }
    write_text(&ctx.run_dir.join("ingest.csv"), &csv)?;
    println!("dataset at {} is ingestible", args.path.display());
    Ok(())
}
