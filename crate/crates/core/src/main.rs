use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lstoc::contrastive::{discover_next, ContrastiveConfig};
use lstoc::driver::{emit_metrics, run_comparison, RunConfig, Variant};
use lstoc::explorer::{Explorer, ExplorerConfig};
use lstoc::gridworld::World;
use lstoc::labeler::LabelingProblem;
use lstoc::tl::{Formula, Fsm};
use lstoc::trajectory::{conditioned_on, read_jsonl, write_jsonl, Buffers, StateKey};
use lstoc::{Error, Result};

#[derive(Parser)]
#[command(name = "lstoc", version, about = "Learn hidden subgoals from task-completion labels")]
struct Cli {
    /// Seed for every random stream the command uses; overrides a config file's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for metric files.
    #[arg(long, global = true, env = "LSTOC_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile a formula and print the machine as DOT.
    Compile {
        formula: String,
    },
    /// Run the full method on a configuration file.
    Run {
        config: PathBuf,
    },
    /// Run one variant under the same budget and seed schedule.
    Compare {
        config: PathBuf,
        #[arg(long)]
        variant: Variant,
    },
    /// Train one importance table and print it as CSV.
    Discover {
        /// Trajectory files (JSON lines), positives and negatives mixed.
        #[arg(required = true)]
        buffers: Vec<PathBuf>,
        /// JSON array of hex keys already on the path.
        #[arg(long)]
        path: Option<PathBuf>,
        /// Contrastive configuration as JSON.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Ground key states to symbols and print the verdict.
    Label {
        formula: String,
        /// JSON array of satisfying key sequences.
        sequences: PathBuf,
        /// JSON array of key states.
        keys: PathBuf,
    },
    /// Re-execute recorded trajectories and check their keys and labels.
    Replay {
        trajectories: PathBuf,
        #[arg(long)]
        env: String,
    },
    /// Write random-policy trajectories as JSON lines.
    Sample {
        env: String,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<()> {
    let mut out = io::stdout().lock();
    match cli.cmd {
        Cmd::Compile { formula } => {
            let fsm = Fsm::compile(&Formula::parse_open(&formula)?);
            out.write_all(fsm.to_dot().as_bytes())?;
        }
        Cmd::Run { config } => compare(&config, None, cli.seed, cli.output_dir, &mut out)?,
        Cmd::Compare { config, variant } => compare(&config, Some(variant), cli.seed, cli.output_dir, &mut out)?,
        Cmd::Discover { buffers, path, config } => {
            let mut all = Buffers::new();
            for b in &buffers {
                all.extend(read_jsonl(BufReader::new(File::open(b)?))?);
            }
            let path: Vec<StateKey> = match path {
                Some(p) => read_json(&p)?,
                None => Vec::new(),
            };
            let mut cfg: ContrastiveConfig = match config {
                Some(p) => read_json(&p)?,
                None => ContrastiveConfig::default(),
            };
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            let pos: Vec<_> = all.positives().iter().filter(|t| conditioned_on(t, &path).is_some()).collect();
            let neg: Vec<_> = all.negatives().iter().filter(|t| conditioned_on(t, &path).is_some()).collect();
            let d = discover_next(&pos, &neg, &path, &cfg)?;
            eprintln!("discovered {}", d.key);
            d.write_csv(&mut out)?;
        }
        Cmd::Label { formula, sequences, keys } => {
            let fsm = Fsm::compile(&Formula::parse_open(&formula)?);
            let problem = LabelingProblem::new(fsm, read_json(&sequences)?, read_json(&keys)?)?;
            let verdict = problem.solve()?;
            writeln!(out, "{}", serde_json::to_string_pretty(&verdict.to_json())?)?;
        }
        Cmd::Replay { trajectories, env } => {
            let world = World::load(&env)?;
            let ts = read_jsonl(BufReader::new(File::open(&trajectories)?))?;
            let mut mismatches = 0;
            for (i, t) in ts.iter().enumerate() {
                let replayed = world.replay(cli.seed.unwrap_or(0), &t.actions)?.into_trajectory();
                let same = replayed == *t;
                mismatches += usize::from(!same);
                writeln!(out, "{i}\tsteps={}\tlabel={}\tmatches={same}", t.steps(), replayed.label)?;
            }
            if mismatches > 0 {
                return Err(Error::Config(format!("{mismatches} of {} trajectories differ on replay", ts.len())));
            }
        }
        Cmd::Sample { env, episodes, epsilon } => {
            let world = World::load(&env)?;
            let mut ex = Explorer::new(world, ExplorerConfig::default(), cli.seed.unwrap_or(0));
            ex.policy.frozen = true;
            let ts = (0..episodes).map(|_| ex.episode(&[], epsilon)).collect::<Result<Vec<_>>>()?;
            write_jsonl(&mut out, &ts)?;
        }
    }
    Ok(())
}

fn compare(config: &Path, variant: Option<Variant>, seed: Option<u64>, dir: Option<PathBuf>, out: &mut impl Write) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    cfg.seed = seed.unwrap_or(cfg.seed);
    if dir.is_some() {
        cfg.output_dir = dir;
    }
    let report = run_comparison(&cfg, variant.unwrap_or(cfg.variant))?;
    if let Some(d) = &cfg.output_dir {
        for p in emit_metrics(&report, d)? {
            eprintln!("wrote {}", p.display());
        }
    }
    writeln!(out, "{}", serde_json::to_string_pretty(&report.summary_json())?)?;
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
