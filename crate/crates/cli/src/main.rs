use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use oran_lab::config::LabConfig;
use oran_lab::experiment::{execute, replay, Stage};
use oran_lab::LabError;

/// Waypoint audio-goal navigation experiments: worlds, teacher and student
/// training, evaluation, ensembles, k sweeps, renders and exact replays.
///
/// Every command writes a run directory (manifest.json, config.json, ckpt/,
/// logs/, metrics.csv, renders/). ORAN_LAB_SEED overrides the config seed.
#[derive(Debug, Parser)]
#[command(name = "oran-lab", version)]
struct Cli {
    /// JSON configuration file (missing keys take their defaults).
    #[arg(long, global = true, conflicts_with = "preset")]
    config: Option<PathBuf>,

    /// Built-in configuration: teacher, baseline, ccpd, oig-eval, ensemble.
    #[arg(long, global = true)]
    preset: Option<String>,

    /// Override one configuration key (repeatable), e.g. --set k=50.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = parse_pair)]
    overrides: Vec<(String, String)>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the train/val/test worlds and score oracle and random agents.
    GenWorlds(Out),
    /// Train the point-goal teacher and the audio direction predictor.
    TrainTeacher(Out),
    /// Train an audio-goal student (distilling when lambda_cd > 0) and its stop classifier.
    TrainStudent {
        /// Teacher checkpoint stem or train-teacher run directory.
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[command(flatten)]
        out: Out,
    },
    /// Evaluate one checkpoint on the held-out episode set.
    Eval {
        /// Checkpoint stem or run directory.
        #[arg(long)]
        ckpt: PathBuf,
        /// Gather observations from every configured direction and aggregate.
        #[arg(long)]
        oig: bool,
        #[command(flatten)]
        mode: Mode,
        /// Stop classifier (stem or train-student run directory).
        #[arg(long)]
        stop_net: Option<PathBuf>,
        /// Direction predictor for a teacher (pseudo-GPS).
        #[arg(long)]
        predictor: Option<PathBuf>,
        #[command(flatten)]
        out: Out,
    },
    /// Evaluate each checkpoint alone, their averaged ensemble, and the ensemble with OIG.
    EnsembleEval {
        /// Checkpoint stem or run directory (repeat for each member).
        #[arg(long = "ckpt", required = true)]
        ckpts: Vec<PathBuf>,
        #[command(flatten)]
        mode: Mode,
        #[command(flatten)]
        out: Out,
    },
    /// Train and evaluate one distilled student per k (and seed).
    SweepK {
        #[arg(long)]
        teacher: PathBuf,
        /// Comma-separated k values.
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<usize>,
        /// Comma-separated training seeds (default: the config seed).
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[command(flatten)]
        out: Out,
    },
    /// Draw evaluated trajectories of an earlier run as SVG.
    Render {
        /// Run directory holding logs/eval_*.jsonl.
        #[arg(long)]
        run: PathBuf,
        /// Comma-separated episode indices.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        episodes: Vec<usize>,
        #[command(flatten)]
        out: Out,
    },
    /// Re-run a recorded run from its manifest and compare metrics.csv.
    Replay {
        #[arg(long)]
        run: PathBuf,
        #[command(flatten)]
        out: Out,
    },
}

#[derive(Debug, Args)]
struct Out {
    /// Output run directory (must not already hold a run).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct Mode {
    /// Take the most likely waypoint (the config default).
    #[arg(long, conflicts_with = "sampled")]
    greedy: bool,
    /// Sample waypoints from the action map.
    #[arg(long)]
    sampled: bool,
}

impl Mode {
    fn greedy(&self, cfg: &LabConfig) -> bool {
        if self.sampled {
            false
        } else {
            self.greedy || cfg.greedy
        }
    }
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn preset(name: &str) -> Option<&'static str> {
    Some(match name {
        "teacher" => include_str!("../../../presets/teacher.json"),
        "baseline" => include_str!("../../../presets/baseline.json"),
        "ccpd" => include_str!("../../../presets/ccpd.json"),
        "oig-eval" => include_str!("../../../presets/oig-eval.json"),
        "ensemble" => include_str!("../../../presets/ensemble.json"),
        _ => return None,
    })
}

fn load_config(cli: &Cli) -> Result<LabConfig, LabError> {
    let base = match (&cli.config, &cli.preset) {
        (Some(path), _) => LabConfig::load(path)?,
        (None, Some(name)) => {
            let text = preset(name).ok_or_else(|| LabError::Config(vec![format!("unknown preset {name:?}")]))?;
            LabConfig::from_json(text)?
        }
        (None, None) => LabConfig::default(),
    };
    base.with_overrides(&cli.overrides)?.with_env_overrides()
}

/// Absolute form of an input path so manifests replay from any directory.
fn absolute(p: &Path) -> Result<PathBuf, LabError> {
    if p.exists() {
        Ok(p.canonicalize()?)
    } else {
        // Checkpoint stems name files with an added extension.
        let parent = match p.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.canonicalize()?,
            _ => std::env::current_dir()?,
        };
        Ok(parent.join(p.file_name().unwrap_or_default()))
    }
}

fn absolute_opt(p: &Option<PathBuf>) -> Result<Option<PathBuf>, LabError> {
    p.as_deref().map(absolute).transpose()
}

fn run(cli: Cli) -> Result<ExitCode, LabError> {
    let mut progress = |line: &str| eprintln!("{line}");
    if let Command::Replay { run, out } = &cli.command {
        let report = replay(run, &out.out, &mut progress)?;
        return Ok(if report.identical {
            println!("replay identical: {}", out.out.join("metrics.csv").display());
            ExitCode::SUCCESS
        } else {
            eprintln!("replay differs from {}", run.join("metrics.csv").display());
            ExitCode::from(3)
        });
    }
    let cfg = load_config(&cli)?;
    let (stage, out) = match &cli.command {
        Command::GenWorlds(out) => (Stage::GenWorlds, out),
        Command::TrainTeacher(out) => (Stage::TrainTeacher, out),
        Command::TrainStudent { teacher, out } => (
            Stage::TrainStudent {
                teacher: absolute_opt(teacher)?,
            },
            out,
        ),
        Command::Eval {
            ckpt,
            oig,
            mode,
            stop_net,
            predictor,
            out,
        } => (
            Stage::Eval {
                ckpt: absolute(ckpt)?,
                oig: *oig,
                greedy: mode.greedy(&cfg),
                stop_net: absolute_opt(stop_net)?,
                predictor: absolute_opt(predictor)?,
            },
            out,
        ),
        Command::EnsembleEval { ckpts, mode, out } => (
            Stage::EnsembleEval {
                ckpts: ckpts.iter().map(|c| absolute(c)).collect::<Result<_, _>>()?,
                greedy: mode.greedy(&cfg),
            },
            out,
        ),
        Command::SweepK { teacher, k, seeds, out } => (
            Stage::SweepK {
                teacher: absolute(teacher)?,
                ks: k.clone(),
                seeds: if seeds.is_empty() {
                    vec![cfg.seed]
                } else {
                    seeds.clone()
                },
            },
            out,
        ),
        Command::Render { run, episodes, out } => (
            Stage::Render {
                run: absolute(run)?,
                episodes: episodes.clone(),
            },
            out,
        ),
        Command::Replay { .. } => unreachable!("handled above"),
    };
    let manifest = execute(&stage, &cfg, &out.out, &mut progress)?;
    print!("{}", std::fs::read_to_string(out.out.join("metrics.csv"))?);
    Ok(match manifest.failure {
        Some(f) => {
            eprintln!("error: {f}");
            ExitCode::from(3)
        }
        None => ExitCode::SUCCESS,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
