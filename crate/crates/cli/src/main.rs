//! `expohedron` command line: Pareto fronts, decompositions, delivery and
//! evaluation for ranking queries under the DBN exposure model.

mod commands;
mod ingest;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use expohedron::{DbnParams, Fairness, MeritVector, QueryInstance, RelevanceVector};

use commands::{EvaluateOptions, Knobs, MethodName, Settings};
use ingest::{IngestOptions, InputFormat};
use output::OutputFormat;

#[derive(Parser)]
#[command(
    name = "expohedron",
    version,
    about = "Fairness and utility trade-offs for rankings under the DBN exposure model"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Continuation probability of the DBN model.
    #[arg(long, global = true, default_value_t = 0.5)]
    gamma: f64,
    /// Satisfaction scale of the DBN model.
    #[arg(long, global = true, default_value_t = 0.7)]
    kappa: f64,
    #[arg(long, global = true, value_enum, default_value_t = FairnessArg::Meritocratic)]
    fairness: FairnessArg,
    /// Utility weight of the scalarized trade-off, in [0, 1].
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Number of rankings to deliver.
    #[arg(long = "T", global = true, default_value_t = 1000)]
    horizon: usize,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
    /// Worker threads for per-query work.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Query file (JSONL or CSV).
    #[arg(long, global = true, conflicts_with = "relevances")]
    input: Option<PathBuf>,
    /// Input format; inferred from the file extension when absent.
    #[arg(long, global = true, value_enum)]
    input_format: Option<InputFormat>,
    /// A single inline query, e.g. `--relevances 0.1,0.5,0.9`.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    relevances: Option<Vec<f64>>,
    /// Merits of the inline query, for `--fairness custom`.
    #[arg(long, global = true, value_delimiter = ',', requires = "relevances")]
    merits: Option<Vec<f64>>,
    /// Divide graded labels by this maximum.
    #[arg(long, global = true)]
    scale_labels: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FairnessArg {
    Meritocratic,
    Demographic,
    Custom,
}

impl From<FairnessArg> for Fairness {
    fn from(f: FairnessArg) -> Self {
        match f {
            FairnessArg::Meritocratic => Fairness::Meritocratic,
            FairnessArg::Demographic => Fairness::Demographic,
            FairnessArg::Custom => Fairness::Custom,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Pareto front vertices with their (nU, nF).
    Pareto,
    /// Rankings and weights realizing a front point or an explicit exposure.
    Decompose {
        /// Exposure vector to decompose instead of a front point.
        #[arg(long, value_delimiter = ',')]
        target: Option<Vec<f64>>,
    },
    /// Ranking sequence of length T with its nF trace.
    Deliver {
        #[arg(long, value_enum, default_value_t = MethodName::Expo)]
        method: MethodName,
        #[arg(long)]
        gain: Option<f64>,
        #[arg(long)]
        temperature: Option<f64>,
        /// Deliver atoms written by `decompose` instead of recomputing them.
        #[arg(long)]
        distribution: Option<PathBuf>,
    },
    /// Method sweeps averaged over queries.
    Evaluate {
        /// Method to run; all three when absent.
        #[arg(long, value_enum)]
        method: Option<MethodName>,
        /// Pins the CTRL gain instead of sweeping it.
        #[arg(long)]
        gain: Option<f64>,
        /// Pins the PL temperature instead of sweeping it.
        #[arg(long)]
        temperature: Option<f64>,
        /// Record nF after every delivered ranking.
        #[arg(long)]
        trace: bool,
        /// One CSV row per query instead of per method setting.
        #[arg(long)]
        per_query: bool,
        /// Score sequences written by `deliver` instead of running methods.
        #[arg(long)]
        rankings: Option<PathBuf>,
    },
    /// Generic DBN parameters of CM, SDBN, DCM or CCM specs.
    Reduce {
        /// JSON file holding one spec or an array of specs.
        spec: PathBuf,
    },
}

fn load_queries(c: &Common) -> Result<Vec<QueryInstance>> {
    let options = IngestOptions {
        scale: c.scale_labels,
    };
    if let Some(s) = c.scale_labels {
        if s.is_nan() || s <= 0.0 {
            bail!("--scale-labels must be positive, got {s}");
        }
    }
    match (&c.input, &c.relevances) {
        (Some(path), _) => Ok(ingest::read_queries(path, c.input_format, options)?),
        (None, Some(r)) => {
            let scaled = r
                .iter()
                .map(|x| x / c.scale_labels.unwrap_or(1.0))
                .collect();
            let merits = c.merits.clone().map(MeritVector::new).transpose()?;
            Ok(vec![QueryInstance::new(
                "q",
                RelevanceVector::new(scaled)?,
                merits,
            )?])
        }
        (None, None) => bail!("no queries: pass --input <file> or --relevances <list>"),
    }
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    if let Some(jobs) = c.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()?;
    }
    if let Some(a) = c.alpha {
        if !(0.0..=1.0).contains(&a) {
            bail!("--alpha must lie in [0, 1], got {a}");
        }
    }
    if c.horizon == 0 {
        bail!("--T must be at least 1");
    }
    let settings = Settings {
        params: DbnParams::new(c.gamma, c.kappa)?,
        fairness: c.fairness.into(),
        alpha: c.alpha,
        horizon: c.horizon,
        seed: c.seed,
        out: c.out.clone(),
        format: c.format,
    };
    match cli.command {
        Command::Reduce { spec } => commands::reduce(&spec, &settings),
        Command::Pareto => commands::pareto(&load_queries(c)?, &settings),
        Command::Decompose { target } => {
            commands::decompose_cmd(&load_queries(c)?, target.as_deref(), &settings)
        }
        Command::Deliver {
            method,
            gain,
            temperature,
            distribution,
        } => {
            let knobs = Knobs {
                alpha: c.alpha,
                gain,
                temperature,
            };
            commands::deliver(
                &load_queries(c)?,
                method,
                knobs,
                distribution.as_deref(),
                &settings,
            )
        }
        Command::Evaluate {
            method,
            gain,
            temperature,
            trace,
            per_query,
            rankings,
        } => {
            let opts = EvaluateOptions {
                methods: match method {
                    Some(m) => vec![m],
                    None => vec![MethodName::Expo, MethodName::Ctrl, MethodName::Pl],
                },
                knobs: Knobs {
                    alpha: c.alpha,
                    gain,
                    temperature,
                },
                trace,
                per_query,
                rankings: rankings.as_deref(),
            };
            commands::evaluate(&load_queries(c)?, opts, &settings)
        }
    }
}

/// 2 for infeasible or degenerate geometry, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|cause| cause.downcast_ref::<expohedron::Error>())
        .map_or(1, |e| if e.is_infeasibility() { 2 } else { 1 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
