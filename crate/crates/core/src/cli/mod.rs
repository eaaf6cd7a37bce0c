//! The `dian` command-line tool: generate, train, eval, gradcheck, predict.

mod config;
mod gradcheck;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Serialize;

pub use config::{config_keys_help, RunConfig};
pub use gradcheck::{run_gradcheck, GRADCHECK_TOLERANCE};

use crate::datamodel::io::{read_jsonl, write_jsonl};
use crate::datamodel::{encode_sessions, EncodedBatch, OovPolicy, SeqCaps, SessionRecord};
use crate::error::{Error, Result};
use crate::models::{Checkpoint, DianModel, Variant};
use crate::synthgen::{generate_dataset, generate_world, split_train_test, summarize, Sidecar};
use crate::training::{evaluate, evaluate_oracle, train, MetricsLine};

pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const SIDECAR_FILE: &str = "sidecar.json";

#[derive(Debug, Parser)]
#[command(name = "dian", version, about = "Intention-aware CTR models on synthetic trigger-induced sessions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct ConfigArgs {
    /// JSON run configuration; missing keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dotted-path override, e.g. `--set gen.sessions=1000`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a world and a dataset; write train/test JSONL plus a sidecar.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model variant and write its checkpoint and metrics log.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory written by `generate`.
        #[arg(long)]
        data: PathBuf,
        /// Overrides `model.variant`.
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        out: PathBuf,
        /// Metrics log path [default: <out>.metrics.jsonl].
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Evaluate a checkpoint (or the generator's oracle) and print JSON.
    Eval {
        #[arg(long, required_unless_present = "oracle", conflicts_with = "oracle")]
        checkpoint: Option<PathBuf>,
        /// Score with the Bayes-optimal oracle from the sidecar's world.
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        data: PathBuf,
        /// Which split to score.
        #[arg(long, default_value = "test", value_parser = ["train", "test"])]
        split: String,
        /// Add the oracle AUC and gap (needs a world in the sidecar).
        #[arg(long, value_parser = ["oracle"])]
        compare: Option<String>,
    },
    /// Finite-difference check of the full model gradient.
    Gradcheck {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Number of coordinates to probe.
        #[arg(long, default_value_t = 240)]
        coords: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corrupt one analytic gradient entry before checking.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Score one SessionRecord read from stdin.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

/// Parses `args` and runs the command, mapping errors to exit codes
/// (2: invalid input or configuration, 3: runtime or numeric failure).
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = Cli::command()
        .after_long_help(config_keys_help())
        .get_matches_from(args);
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Generate { cfg, out: dir } => cmd_generate(&cfg.load()?, &dir, out),
        Command::Train {
            cfg,
            data,
            variant,
            out: ckpt,
            metrics,
        } => {
            let mut cfg = cfg.load()?;
            if let Some(v) = variant {
                cfg.model.variant = v;
            }
            let metrics = metrics.unwrap_or_else(|| {
                let mut p = ckpt.clone().into_os_string();
                p.push(".metrics.jsonl");
                PathBuf::from(p)
            });
            cmd_train(&cfg, &data, &ckpt, &metrics, out)
        }
        Command::Eval {
            checkpoint,
            oracle,
            data,
            split,
            compare,
        } => cmd_eval(checkpoint.as_deref(), oracle, &data, &split, compare.is_some(), out),
        Command::Gradcheck {
            cfg,
            coords,
            seed,
            inject_fault,
        } => {
            let cfg = cfg.load()?;
            cfg.model.validate()?;
            let report = run_gradcheck(&cfg, coords, seed, inject_fault)?;
            writeln!(
                out,
                "gradcheck: {} coordinates over {} tables, max relative error {:.3e} (tolerance {GRADCHECK_TOLERANCE:e})",
                report.checks.len(),
                report.tables_covered().len(),
                report.max_rel_err
            )?;
            if report.max_rel_err < GRADCHECK_TOLERANCE {
                writeln!(out, "PASS")?;
                Ok(())
            } else {
                let worst: Vec<String> = report
                    .worst(5)
                    .iter()
                    .map(|c| {
                        format!(
                            "{}[{}] analytic {:.6e} numeric {:.6e} rel {:.3e}",
                            c.coord.name, c.coord.index, c.analytic, c.numeric, c.rel_err
                        )
                    })
                    .collect();
                Err(Error::GradCheck(format!("worst coordinates:\n  {}", worst.join("\n  "))))
            }
        }
        Command::Predict { checkpoint } => {
            let mut text = String::new();
            std::io::stdin().read_to_string(&mut text)?;
            let record: SessionRecord = serde_json::from_str(&text)?;
            cmd_predict(&checkpoint, &record, out)
        }
    }
}

pub fn cmd_generate(cfg: &RunConfig, dir: &Path, out: &mut dyn Write) -> Result<()> {
    cfg.gen.validate()?;
    std::fs::create_dir_all(dir)?;
    let world = generate_world(&cfg.gen);
    let records = generate_dataset(&world, &cfg.gen);
    let summary = summarize(&records);
    let (train_set, test_set) = split_train_test(records, cfg.gen.test_fraction);
    write_jsonl(&dir.join(TRAIN_FILE), &train_set)?;
    write_jsonl(&dir.join(TEST_FILE), &test_set)?;
    let sidecar = Sidecar::for_world(&world, &cfg.gen);
    std::fs::write(dir.join(SIDECAR_FILE), serde_json::to_vec_pretty(&sidecar)?)?;
    writeln!(out, "wrote {} train / {} test sessions to {}", train_set.len(), test_set.len(), dir.display())?;
    writeln!(out, "{summary}")?;
    Ok(())
}

fn load_sidecar(dir: &Path) -> Result<Sidecar> {
    let path = dir.join(SIDECAR_FILE);
    let bytes = std::fs::read(&path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

fn load_split(dir: &Path, file: &str, sidecar: &Sidecar, caps: SeqCaps) -> Result<EncodedBatch> {
    let path = dir.join(file);
    if !path.exists() {
        return Err(Error::Validation(format!("missing {}", path.display())));
    }
    let records = read_jsonl(&path)?;
    encode_sessions(&records, &sidecar.vocab, caps, OovPolicy::Reject)
}

fn caps_of(model: &DianModel) -> SeqCaps {
    SeqCaps {
        short: model.config.k_short,
        long: model.config.k_long,
    }
}

pub fn cmd_train(cfg: &RunConfig, data: &Path, ckpt: &Path, metrics: &Path, out: &mut dyn Write) -> Result<()> {
    cfg.model.validate()?;
    cfg.train.validate()?;
    let sidecar = load_sidecar(data)?;
    let model = DianModel::new(cfg.model.clone(), sidecar.vocab)?;
    let caps = caps_of(&model);
    let train_set = load_split(data, TRAIN_FILE, &sidecar, caps)?;
    let test_path = data.join(TEST_FILE);
    let test_set = if test_path.exists() {
        Some(load_split(data, TEST_FILE, &sidecar, caps)?)
    } else {
        None
    };
    let mut log = BufWriter::new(File::create(metrics)?);
    let outcome = train(
        &model,
        &train_set,
        test_set.as_ref().filter(|t| t.num_rows() > 0),
        sidecar.world.as_ref(),
        &cfg.train,
        |line: &MetricsLine| {
            serde_json::to_writer(&mut log, line)?;
            log.write_all(b"\n")?;
            Ok(())
        },
    )?;
    log.flush()?;
    Checkpoint::from_store(&model, &outcome.store).save(ckpt)?;
    writeln!(
        out,
        "trained {} for {} steps; checkpoint {}",
        model.variant(),
        outcome.steps,
        ckpt.display()
    )?;
    if let Some(eval) = outcome.history.last().and_then(|l| l.eval.as_ref()) {
        writeln!(out, "{}", serde_json::to_string(eval)?)?;
    }
    Ok(())
}

pub fn cmd_eval(
    checkpoint: Option<&Path>,
    oracle: bool,
    data: &Path,
    split: &str,
    compare_oracle: bool,
    out: &mut dyn Write,
) -> Result<()> {
    let sidecar = load_sidecar(data)?;
    let file = if split == "train" { TRAIN_FILE } else { TEST_FILE };
    let world = if compare_oracle || oracle {
        Some(sidecar.world.as_ref().ok_or_else(|| {
            Error::Validation("oracle comparison needs a world in the sidecar, but it has none".into())
        })?)
    } else {
        None
    };
    let report = if oracle {
        let caps = SeqCaps::default();
        let batch = load_split(data, file, &sidecar, caps)?;
        evaluate_oracle(world.expect("checked above"), &batch)?
    } else {
        let path = checkpoint.ok_or_else(|| Error::Validation("--checkpoint is required".into()))?;
        let (model, store) = Checkpoint::load(path)?.into_model()?;
        if model.vocab != sidecar.vocab {
            return Err(Error::Validation(format!(
                "checkpoint vocabulary {:?} does not match the dataset's {:?}",
                model.vocab, sidecar.vocab
            )));
        }
        let batch = load_split(data, file, &sidecar, caps_of(&model))?;
        evaluate(&model, &store, &batch, world)?
    };
    writeln!(out, "{}", serde_json::to_string(&report)?)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct CandidateScore {
    item_id: usize,
    category_id: usize,
    y_hat: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    y_int: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y_tan: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    y_tfn: Option<f64>,
}

pub fn cmd_predict(checkpoint: &Path, record: &SessionRecord, out: &mut dyn Write) -> Result<()> {
    let (model, store) = Checkpoint::load(checkpoint)?.into_model()?;
    let batch = encode_sessions(
        std::slice::from_ref(record),
        &model.vocab,
        caps_of(&model),
        OovPolicy::MapToUnknown,
    )?;
    let trace = model.forward(&store, &batch)?;
    for (r, cand) in record.candidates.iter().enumerate() {
        let score = CandidateScore {
            item_id: cand.item.item_id,
            category_id: cand.item.category_id,
            y_hat: trace.y_hat[r],
            y_int: trace.y_int.as_ref().map(|v| v[r]),
            y_tan: trace.y_tan.as_ref().map(|v| v[r]),
            y_tfn: trace.y_tfn.as_ref().map(|v| v[r]),
        };
        writeln!(out, "{}", serde_json::to_string(&score)?)?;
    }
    Ok(())
}
