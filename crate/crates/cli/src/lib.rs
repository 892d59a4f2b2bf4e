//! Command-line front end: argument parsing and subcommand execution.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use skirmish_core::batch::DEFAULT_EPISODES;
use skirmish_core::dataset::{self, DatasetMode};
use skirmish_core::external::ExternalConfig;
use skirmish_core::{default_matrix, oracle, render, run_batch, run_episode, BatchSpec, CommanderSpec, Matchup, Replay, ScenarioConfig};

#[derive(Parser)]
#[command(name = "skirmish", version, about = "Multi-UGV confrontation simulator and evaluation harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Args)]
pub struct ExternalArgs {
    /// Chat-completion endpoint for `external` commanders; defaults to $ENDPOINT_URL.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long, default_value = "default")]
    pub model: String,
    /// Per-request timeout, seconds.
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
}

impl ExternalArgs {
    fn commander(&self, name: &str) -> Result<CommanderSpec> {
        if let Some(spec) = CommanderSpec::parse(name) {
            return Ok(spec);
        }
        if name != "external" {
            bail!("unknown commander {name:?}; expected expert, scripted, random or external");
        }
        let mut cfg = ExternalConfig::from_env(&self.model, self.timeout).unwrap_or_else(|| ExternalConfig {
            endpoint: String::new(),
            model: self.model.clone(),
            api_key: std::env::var("API_KEY").ok(),
            timeout_secs: self.timeout,
            temperature: 0.0,
        });
        if let Some(e) = &self.endpoint {
            cfg.endpoint = e.clone();
        }
        if cfg.endpoint.is_empty() {
            bail!("external commander needs --endpoint or ENDPOINT_URL");
        }
        Ok(CommanderSpec::External(cfg))
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Mode {
    Sft,
    Dpo,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Format {
    Svg,
    Curve,
}

#[derive(Subcommand)]
pub enum Command {
    /// Run one episode and print its metrics as JSON.
    Run {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scenario config (JSON); defaults apply otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "expert")]
        allied: String,
        #[arg(long, default_value = "scripted")]
        enemy: String,
        /// Write the JSONL replay here.
        #[arg(long)]
        replay_out: Option<PathBuf>,
        #[command(flatten)]
        external: ExternalArgs,
    },
    /// Run a matrix of matchups and print the summary table.
    Batch {
        #[arg(long, default_value_t = DEFAULT_EPISODES)]
        episodes: usize,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// JSON array of matchups; a default matrix otherwise.
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Base config for the default matrix.
        #[arg(long, conflicts_with = "matrix")]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Include wall-clock decision time (makes the report nondeterministic).
        #[arg(long)]
        timing: bool,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Do not print the summary table.
        #[arg(long)]
        quiet: bool,
    },
    /// Export training records from replays.
    Dataset {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Seed for the corruption choices of preference pairs.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Draw a replay as a trajectory plot or a survival curve.
    Render {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "svg")]
        format: Format,
    },
    /// Cross-check the fast paths against brute-force references.
    Oracle {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(path: Option<&Path>) -> Result<ScenarioConfig> {
    match path {
        None => Ok(ScenarioConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ScenarioConfig::from_json(&text).with_context(|| format!("config {}", p.display()))
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn load_replay(path: &Path) -> Result<Replay> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let (replay, warnings) = Replay::load_lenient(BufReader::new(file)).with_context(|| format!("replay {}", path.display()))?;
    for w in warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(replay)
}

pub fn execute(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run { seed, config, allied, enemy, replay_out, external } => {
            let cfg = load_config(config.as_deref())?;
            let (allied, enemy) = (external.commander(&allied)?, external.commander(&enemy)?);
            let result = run_episode(&cfg, &allied, &enemy, seed, replay_out.is_some())?;
            if let (Some(path), Some(replay)) = (&replay_out, &result.replay) {
                let mut out = create(path)?;
                replay.save(&mut out)?;
                out.flush()?;
            }
            writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&result.metrics)?)?;
        }
        Command::Batch { episodes, parallel, matrix, config, seed, timing, out, quiet } => {
            let matchups: Vec<Matchup> = match matrix {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    let m: Vec<Matchup> = serde_json::from_str(&text).with_context(|| format!("matrix {}", p.display()))?;
                    for row in &m {
                        row.config.validate().with_context(|| format!("matchup {:?}", row.name))?;
                    }
                    m
                }
                None => default_matrix(&load_config(config.as_deref())?),
            };
            let report = run_batch(&BatchSpec { matchups, episodes, master_seed: seed }, parallel, timing)?;
            if !quiet {
                std::io::stdout().write_all(report.to_text().as_bytes())?;
            }
            if let Some(path) = out {
                let mut f = create(&path)?;
                f.write_all(report.to_json().as_bytes())?;
                f.write_all(b"\n")?;
                f.flush()?;
            }
        }
        Command::Dataset { mode, inputs, out, seed } => {
            let replays = inputs.iter().map(|p| load_replay(p)).collect::<Result<Vec<_>>>()?;
            let mode = match mode {
                Mode::Sft => DatasetMode::Sft,
                Mode::Dpo => DatasetMode::Dpo,
            };
            let mut f = create(&out)?;
            let stats = dataset::export(&replays, mode, seed, &mut f)?;
            f.flush()?;
            eprintln!("wrote {} records, skipped {} epochs", stats.records, stats.skipped);
        }
        Command::Render { input, out, format } => {
            let replay = load_replay(&input)?;
            let svg = match format {
                Format::Svg => render::render_svg(&replay),
                Format::Curve => render::render_survival_curve(&replay),
            };
            std::fs::write(&out, svg).with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Oracle { seed } => {
            let results = oracle::run_suite(seed);
            let mut ok = true;
            for r in &results {
                ok &= r.passed();
                let status = if r.passed() { "PASS" } else { "FAIL" };
                println!(
                    "{status} {:<14} cases {:>5}  comparisons {:>6}  mismatches {}  grazing {}",
                    r.name, r.cases, r.comparisons, r.mismatches, r.grazing
                );
                if let Some(m) = &r.first_mismatch {
                    println!("  first mismatch: {m}");
                }
            }
            return Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> Result<ExitCode>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    execute(Cli::try_parse_from(args)?.command)
}
