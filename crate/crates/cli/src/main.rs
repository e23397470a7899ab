//! `unitdub`: corpus generation, speed adaptation, training, sampling and
//! evaluation for the toy unit-translation task.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod exit;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use unitdub::diffusion::UnmaskRule;

use crate::commands::{Ctx, NfeChoice, TranslateArgs};
use crate::config::RunConfig;
use crate::exit::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "unitdub", version, about)]
struct Cli {
    /// JSON run configuration; missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for data-parallel loops. Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Directory that output files are written to.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DenoiserKind {
    Count,
    Oracle,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RuleArg {
    Confidence,
    Random,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Trained count model artifact.
    #[arg(long)]
    model: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "count")]
    denoiser: DenoiserKind,
}

impl ModelArgs {
    fn oracle(&self) -> bool {
        matches!(self.denoiser, DenoiserKind::Oracle)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a parallel toy corpus.
    GenCorpus {
        #[arg(long)]
        n_pairs: Option<usize>,
        #[arg(long, default_value = "corpus.jsonl")]
        output: PathBuf,
    },
    /// Fill `tgt_adapted_units` by matching target speed to the source.
    Adapt {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "corpus.adapted.jsonl")]
        output: PathBuf,
        /// Copy the raw targets instead of adapting them.
        #[arg(long, conflicts_with = "on")]
        off: bool,
        /// Adapt targets (the default).
        #[arg(long)]
        on: bool,
    },
    /// Fit a count denoiser on a corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "model.json")]
        output: PathBuf,
    },
    /// Sample a translation for every pair at the source length.
    Translate {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Denoiser calls per sequence, or `len` for one per position.
        #[arg(long)]
        nfe: Option<NfeChoice>,
        #[arg(long, value_enum)]
        unmask_rule: Option<RuleArg>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long, default_value = "outputs.jsonl")]
        output: PathBuf,
    },
    /// Duration and speed compliance of translations against their sources.
    Eval {
        #[arg(long)]
        outputs: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Skeleton accuracy across NFE values.
    NfeSweep {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<usize>>,
        #[arg(long, default_value = "nfe_sweep.csv")]
        output: PathBuf,
    },
    /// Output and dedup lengths across target-length ratios.
    DurationSweep {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
        #[arg(long, default_value = "duration_sweep.csv")]
        output: PathBuf,
    },
    /// Run the flow-matching Gaussian suite.
    FlowTest {
        #[arg(long, default_value = "flow_report.json")]
        output: PathBuf,
    },
}

fn init_workers(workers: Option<usize>) -> CliResult<()> {
    let Some(n) = workers else {
        return Ok(());
    };
    if n == 0 {
        return Err(CliError::config("--workers must be at least 1"));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(CliError::internal)?;
    #[cfg(not(feature = "parallel"))]
    if n > 1 {
        log::warn!("built without the parallel feature; --workers {n} is ignored");
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    init_workers(cli.workers)?;
    let cfg = RunConfig::resolve(cli.config.as_deref(), cli.seed)?;
    let ctx = Ctx {
        cfg,
        out_dir: cli.out,
    };
    match cli.command {
        Command::GenCorpus { n_pairs, output } => commands::gen_corpus(&ctx, n_pairs, &output),
        Command::Adapt {
            input, output, off, ..
        } => commands::adapt(&ctx, &input, &output, !off),
        Command::Train { corpus, output } => commands::train(&ctx, &corpus, &output),
        Command::Translate {
            corpus,
            model,
            nfe,
            unmask_rule,
            temperature,
            output,
        } => {
            let mut sampler = ctx.cfg.sampler;
            if let Some(rule) = unmask_rule {
                sampler.unmask_rule = match rule {
                    RuleArg::Confidence => UnmaskRule::Confidence,
                    RuleArg::Random => UnmaskRule::Random,
                };
            }
            if let Some(t) = temperature {
                sampler.temperature = t;
            }
            if let Some(NfeChoice::Fixed(n)) = nfe {
                sampler.nfe = n;
            }
            commands::translate(
                &ctx,
                TranslateArgs {
                    corpus: &corpus,
                    model: model.model.as_deref(),
                    oracle: model.oracle(),
                    nfe,
                    sampler,
                    output: &output,
                },
            )
        }
        Command::Eval { outputs, corpus } => commands::eval(&ctx, &outputs, &corpus),
        Command::NfeSweep {
            corpus,
            model,
            grid,
            output,
        } => commands::nfe_sweep(
            &ctx,
            model.model.as_deref(),
            model.oracle(),
            &corpus,
            grid,
            &output,
        ),
        Command::DurationSweep {
            corpus,
            model,
            ratios,
            output,
        } => commands::duration_sweep(
            &ctx,
            model.model.as_deref(),
            model.oracle(),
            &corpus,
            ratios,
            &output,
        ),
        Command::FlowTest { output } => commands::flow_test(&ctx, &output),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                exit::CONFIG as u8
            } else {
                0
            });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
