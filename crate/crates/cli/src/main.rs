use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rdclass::clean::DedupKey;
use rdclass::evaluate::ZeroDivision;
use rdclass::models::{ModelFamily, TrainConfig};
use rdclass::vectorize::SizeClass;
use rdclass_cli::artifacts::{atomic_write, Manifest};
use rdclass_cli::config::PipelineConfig;
use rdclass_cli::stages::{self, EvalInput, GridPlan, Workspace};
use rdclass_cli::{serve, CliError};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "rdclass", version, about = "Classify research-data metadata by discipline")]
struct Cli {
    /// Pipeline config file (TOML). Defaults to ./rdclass.toml when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Place every artifact under this directory instead of the configured paths.
    #[arg(long, global = true)]
    workspace: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Harvest records from an OAI-PMH endpoint.
    Harvest {
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        until: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        metadata_prefix: Option<String>,
    },
    /// Read saved ListRecords XML documents instead of harvesting.
    IngestFile {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Map subjects, deduplicate and build payloads.
    Clean {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[arg(long)]
        dedup_key: Option<DedupKey>,
        #[arg(long)]
        english_threshold: Option<f64>,
    },
    /// Print per-discipline statistics of the cleaned dataset as CSV.
    Stats {
        #[arg(long = "in")]
        input: Option<PathBuf>,
    },
    /// Stratified train/holdout split, plus fit/validation inside train.
    Split {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        train_out: Option<PathBuf>,
        #[arg(long)]
        holdout_out: Option<PathBuf>,
    },
    /// Fit tf-idf on the training split and select features.
    Vectorize {
        #[arg(long)]
        size: Option<SizeClass>,
        /// Directory holding the split files.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Directory for the vectorizer, selection and matrices.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Train one model family.
    Train {
        #[arg(long)]
        family: ModelFamily,
        #[arg(long)]
        size: Option<SizeClass>,
        /// Training seed; defaults to the master seed plus a fixed offset.
        #[arg(long = "train-seed")]
        train_seed: Option<u64>,
        /// Model parameters (TOML, same layout as the `[model]` section).
        #[arg(long)]
        model_config: Option<PathBuf>,
        /// Sequential grid-search plan (TOML).
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Score trained models on the holdout split and write report tables.
    Evaluate {
        #[arg(long)]
        size: Option<SizeClass>,
        /// Model files; defaults to every configured family of the size.
        #[arg(long)]
        model: Vec<PathBuf>,
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// `exclude` drops labels with no positives in truth or prediction from the macro mean.
        #[arg(long, default_value = "zero")]
        zero_division: String,
    },
    /// Classify one text with a trained model.
    Predict {
        #[arg(long)]
        text: String,
        #[arg(long, default_value = "mlp")]
        family: ModelFamily,
        #[arg(long)]
        size: Option<SizeClass>,
        /// Print a table instead of JSON.
        #[arg(long)]
        table: bool,
    },
    /// Serve POST /classify on localhost.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value = "mlp")]
        family: ModelFamily,
        #[arg(long)]
        size: Option<SizeClass>,
        #[arg(long, default_value_t = 4)]
        threads: usize,
    },
    /// Run every stage from raw records to evaluation reports.
    Run {
        /// Saved ListRecords XML documents to ingest first.
        #[arg(long)]
        xml: Vec<PathBuf>,
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Check every manifest entry against the file on disk.
    Verify,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None if Path::new("rdclass.toml").is_file() => PipelineConfig::load(Path::new("rdclass.toml"))?,
        None => PipelineConfig::default(),
    };
    if let Some(dir) = &cli.workspace {
        let keep = cfg.clone();
        cfg = PipelineConfig { paths: PipelineConfig::in_workspace(dir).paths, ..keep };
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("value serializes"));
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Harvest { endpoint, from, until, out, metadata_prefix } => {
            let h = &mut cfg.harvest;
            h.endpoint = endpoint.or(h.endpoint.take());
            h.from = from.or(h.from.take());
            h.until = until.or(h.until.take());
            if let Some(p) = metadata_prefix {
                h.metadata_prefix = p;
            }
            if let Some(out) = out {
                cfg.paths.raw = out;
            }
            let stats = stages::harvest(&mut Workspace::open(&cfg)?)?;
            print_json(&stats);
        }
        Command::IngestFile { files, out } => {
            if let Some(out) = out {
                cfg.paths.raw = out;
            }
            let stats = stages::ingest_files(&mut Workspace::open(&cfg)?, &files)?;
            print_json(&stats);
        }
        Command::Clean { input, out, mapping, dedup_key, english_threshold } => {
            if let Some(p) = input {
                cfg.paths.raw = p;
            }
            if let Some(p) = out {
                cfg.paths.cleaned = p;
            }
            if mapping.is_some() {
                cfg.paths.mapping = mapping;
            }
            if let Some(k) = dedup_key {
                cfg.dedup_key = k;
            }
            if let Some(t) = english_threshold {
                cfg.english_threshold = t;
            }
            let stats = stages::clean(&mut Workspace::open(&cfg)?)?;
            print_json(&stats);
        }
        Command::Stats { input } => {
            if let Some(p) = input {
                cfg.paths.cleaned = p;
            }
            let st = stages::stats(&mut Workspace::open(&cfg)?)?;
            print!("{}", st.to_csv());
        }
        Command::Split { input, ratio, out_dir, train_out, holdout_out } => {
            if let Some(p) = input {
                cfg.paths.cleaned = p;
            }
            if let Some(r) = ratio {
                cfg.holdout_ratio = r;
            }
            if let Some(d) = out_dir {
                cfg.paths.splits = d;
            }
            let sizes = stages::split(&mut Workspace::open(&cfg)?)?;
            for (part, target) in [("train", train_out), ("holdout", holdout_out)] {
                if let Some(target) = target {
                    atomic_write(&target, &std::fs::read(cfg.split_path(part))?)?;
                }
            }
            print_json(&sizes);
        }
        Command::Vectorize { size, input, out_dir } => {
            if let Some(d) = input {
                cfg.paths.splits = d;
            }
            if let Some(d) = out_dir {
                cfg.paths.models = d;
            }
            let size = size.unwrap_or(cfg.size_class);
            let summary = stages::vectorize(&mut Workspace::open(&cfg)?, size)?;
            print_json(&summary);
        }
        Command::Train { family, size, train_seed, model_config, grid } => {
            if let Some(p) = model_config {
                rdclass_cli::artifacts::require(&p)?;
                let text = std::fs::read_to_string(&p)?;
                cfg.model = toml::from_str::<TrainConfig>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                cfg.validate()?;
            }
            let plan = grid.as_deref().map(GridPlan::load).transpose()?;
            let size = size.unwrap_or(cfg.size_class);
            let summary = stages::train(&mut Workspace::open(&cfg)?, family, size, train_seed, plan.as_ref())?;
            print_json(&summary);
        }
        Command::Evaluate { size, model, matrix, truth, out_dir, zero_division } => {
            let zd = match zero_division.as_str() {
                "zero" => ZeroDivision::Zero,
                "exclude" => ZeroDivision::Exclude,
                other => return Err(CliError::Config(format!("unknown zero-division mode {other:?} (zero|exclude)"))),
            };
            let size = size.unwrap_or(cfg.size_class);
            let inputs = if model.is_empty() {
                stages::default_eval_inputs(&cfg, size)
            } else {
                model
                    .into_iter()
                    .map(|m| EvalInput {
                        model: m,
                        matrix: matrix.clone().unwrap_or_else(|| cfg.matrix_path("holdout", size)),
                        truth: truth.clone().unwrap_or_else(|| cfg.split_path("holdout")),
                        size_class: size.to_string(),
                    })
                    .collect()
            };
            let report = stages::evaluate(&mut Workspace::open(&cfg)?, &inputs, out_dir.as_deref(), zd)?;
            print!("{}", report.aggregate_markdown());
        }
        Command::Predict { text, family, size, table } => {
            let artifact = stages::Artifact::load(&cfg, family, size.unwrap_or(cfg.size_class))?;
            let p = artifact.classify(&text)?;
            if table {
                print!("{}", p.table());
                for w in &p.warnings {
                    eprintln!("warning: {w}");
                }
            } else {
                print_json(&p);
            }
        }
        Command::Serve { port, host, family, size, threads } => {
            let addr = format!("{host}:{}", port.unwrap_or(cfg.port));
            let size = size.unwrap_or(cfg.size_class);
            let load_cfg = cfg.clone();
            let handle = serve::serve(&addr, threads, move || stages::Artifact::load(&load_cfg, family, size))?;
            eprintln!("listening on http://{}/classify", handle.addr());
            handle.join();
        }
        Command::Run { xml, grid } => {
            let plan = grid.as_deref().map(GridPlan::load).transpose()?;
            let report = stages::run_all(&mut Workspace::open(&cfg)?, &xml, plan.as_ref())?;
            print!("{}", report.aggregate_markdown());
        }
        Command::Verify => {
            let manifest = Manifest::load_or_default(&cfg.manifest_path())?;
            let bad = manifest.verify(&cfg.paths.workspace);
            for key in &bad {
                println!("MISMATCH {key}");
            }
            println!("{} artifacts, {} mismatched", manifest.artifacts.len(), bad.len());
            if let Some(first) = bad.into_iter().next() {
                return Err(CliError::HashMismatch(first));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
