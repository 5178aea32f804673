use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ital_core::gridworld::{self, HumanMap, MapKind};
use ital_core::harness::{self, emit, summarize, ExperimentConfig, LearnerKind, OutputFormat, TaskConfig};
use ital_core::pedagogy::{BetaSchedule, TeacherMode};
use ital_core::session::{self, replay_log, ServeOptions};
use ital_core::Error;

#[derive(Parser)]
#[command(name = "ital", version, about = "Teacher-aware iterative learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seed sweep and write per-learner CSVs plus a manifest.
    Run(RunArgs),
    /// Summarize one or more learner CSVs.
    Summarize {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        /// Emit JSON instead of a text table.
        #[arg(long)]
        json: bool,
    },
    /// Reward map utilities.
    Maps {
        #[command(subcommand)]
        command: MapsCommand,
    },
    /// Grid-search the largest beta whose selection distribution is not a delta.
    TuneBeta {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 20)]
        rounds: usize,
        #[arg(long, default_value_t = 0.99)]
        threshold: f64,
        /// Comma-separated grid; defaults to 1e4 * 2^k for k in -6..=6.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Rebuild a teaching session from its event log.
    Replay { log: PathBuf },
    /// Serve the teaching-session HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        log_dir: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory of static UI assets served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum MapsCommand {
    /// Write map files (numeric, plus tiles for the human maps).
    Generate {
        #[arg(long, default_value = "dense")]
        kind: String,
        #[arg(long, default_value_t = 8)]
        width: usize,
        #[arg(long, default_value_t = 8)]
        height: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "maps")]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// regression | classification | gridworld | gridworld-sparse
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    teacher: Option<TeacherMode>,
    /// Comma-separated, e.g. `sgd,batch,imt,ital-1,ital-19`.
    #[arg(long, value_delimiter = ',')]
    learner: Option<Vec<LearnerKind>>,
    #[arg(long)]
    eta: Option<f64>,
    /// Magnitude of a constant beta; the sign follows the teacher mode.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => {
                let task = TaskConfig::preset(self.task.as_deref().unwrap_or("regression"))?;
                ExperimentConfig::new(
                    task,
                    TeacherMode::FeedbackCooperative,
                    vec![
                        LearnerKind::Batch,
                        LearnerKind::Sgd,
                        LearnerKind::ImtNaive,
                        LearnerKind::Ital(1),
                        LearnerKind::Ital(19),
                    ],
                )
            }
        };
        if let (Some(t), Some(_)) = (&self.task, &self.config) {
            cfg.task = TaskConfig::preset(t)?;
        }
        if let Some(t) = self.teacher {
            cfg.teacher = t;
        }
        if let Some(l) = &self.learner {
            cfg.learners = l.clone();
        }
        if let Some(e) = self.eta {
            cfg.eta = e;
        }
        if let Some(b) = self.beta {
            cfg.beta = Some(BetaSchedule::Constant(b));
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if let Some(i) = self.iters {
            cfg.iterations = i;
        }
        if let Some(s) = self.seeds {
            cfg.seeds = s;
        }
        if let Some(o) = &self.out {
            cfg.output = Some(o.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Run(args) => {
            let cfg = args.resolve()?;
            let started = chrono::Utc::now();
            let out = harness::run_experiment(&cfg)?;
            let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from("runs/latest"));
            let format = match args.format {
                Format::Csv => OutputFormat::Csv,
                Format::Json => OutputFormat::Json,
            };
            emit(&out, &cfg, &dir, format, started)?;
            if !out.traces.is_empty() {
                print!("{}", summarize(&out.traces)?.render());
            }
            println!("wrote {}", dir.display());
            if out.failures.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                for f in &out.failures {
                    eprintln!("seed {} failed: {}", f.seed, f.message);
                }
                Ok(ExitCode::from(if out.failures.iter().any(|f| f.numeric) {
                    3
                } else {
                    2
                }))
            }
        }
        Command::Summarize { csv, json } => {
            let mut traces = Vec::new();
            for p in &csv {
                traces.extend(harness::load_csv(p)?);
            }
            let summary = summarize(&traces)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&summary)?);
            } else {
                print!("{}", summary.render());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Maps {
            command:
                MapsCommand::Generate {
                    kind,
                    width,
                    height,
                    count,
                    seed,
                    out,
                },
        } => {
            std::fs::create_dir_all(&out)?;
            if kind == "human" {
                for m in HumanMap::ALL {
                    let grid = m.map();
                    std::fs::write(
                        out.join(format!("human-{}.txt", m.id())),
                        grid.to_tile_text().unwrap_or_default(),
                    )?;
                }
                println!("wrote 5 human maps to {}", out.display());
                return Ok(ExitCode::SUCCESS);
            }
            let kind = match kind.as_str() {
                "dense" => MapKind::DenseRandom,
                "sparse" => MapKind::Sparse,
                other => return Err(Error::Config(format!("unknown map kind `{other}`"))),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in 0..count {
                let grid = gridworld::make_map(kind, width, height, &mut rng)?;
                std::fs::write(out.join(format!("map-{i:03}.txt")), grid.to_numeric_text())?;
            }
            println!("wrote {count} maps to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::TuneBeta {
            run,
            rounds,
            threshold,
            grid,
        } => {
            let cfg = run.resolve()?;
            let grid = grid.unwrap_or_else(harness::tune::default_beta_grid);
            let t = harness::tune_beta(&cfg, &grid, rounds, threshold)?;
            println!("{:>14} {:>10}", "beta", "peak q");
            for (b, p) in &t.grid {
                println!("{b:>14.1} {p:>10.4}");
            }
            match t.chosen {
                Some(b) => println!("chosen beta: {b}"),
                None => println!("no beta keeps the peak probability at or below {threshold}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { log } => {
            let replayed = replay_log(&log)?;
            println!("{}", serde_json::to_string_pretty(&replayed.summary())?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve {
            port,
            log_dir,
            host,
            static_dir,
        } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(session::serve(ServeOptions {
                host,
                port,
                log_dir,
                static_dir,
            }))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
