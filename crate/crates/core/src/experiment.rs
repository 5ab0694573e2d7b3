//! Run directories, manifests, and the pipeline stages behind each
//! command: world generation, teacher and student training, evaluation,
//! ensembles, k sweeps, rendering and manifest replay.
//!
//! Every stage writes into a fresh run directory:
//!
//! ```text
//! manifest.json   stage, config hash, seeds, input and output content hashes
//! config.json     the exact configuration used
//! ckpt/           checkpoints (*.json + *.bin)
//! logs/           training curves and evaluated trajectories (*.jsonl)
//! metrics.csv     one row per evaluated agent
//! renders/        trajectory drawings (*.svg)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::LabConfig;
use crate::evalx::{
    angular_error, collect_direction_samples, render_trajectory_svg, run_eval, sample_episode_set, DirectionPredictor,
    DirectionSample, EvalRun, EvalSet, GoalSource, Metrics, OracleAgent, PolicyAgent, RandomAgent, TrajectoryLog,
};
use crate::nnet::checkpoint::content_hash;
use crate::nnet::{FitConfig, NetKind, PolicyNet};
use crate::oig::{collect_stop_samples, StopNet};
use crate::rl::{train_policy, train_teacher, EpisodeSource, TeacherOutcome, TrainOutcome, Trainer, UpdateLog};
use crate::world::{generate_world, sample_episode, GridWorld, SoundSplit};
use crate::{LabError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.csv";

pub const TEACHER_CKPT: &str = "teacher";
pub const STUDENT_CKPT: &str = "student";
pub const STOP_CKPT: &str = "stop_net";
pub const PREDICTOR_CKPT: &str = "direction_predictor";

/// Episodes drawn per evaluation log when rendering automatically.
const AUTO_RENDERS: usize = 3;
const RENDER_PX: usize = 24;

/// Deterministic sub-seed for a named purpose.
pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update(tag.as_bytes());
    h.update(index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// SHA-256 of a file's bytes, hex encoded.
pub fn file_hash(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Disjoint training, validation and test worlds.
#[derive(Debug, Clone)]
pub struct WorldSets {
    pub train: Vec<Arc<GridWorld>>,
    pub val: Vec<Arc<GridWorld>>,
    pub test: Vec<Arc<GridWorld>>,
}

impl WorldSets {
    /// Generated from `world_seed`; worlds without a valid episode start are
    /// redrawn.
    pub fn generate(cfg: &LabConfig) -> Result<WorldSets> {
        let make = |tag: &str, n: usize| -> Result<Vec<Arc<GridWorld>>> {
            (0..n as u64).map(|i| usable_world(cfg, tag, i).map(Arc::new)).collect()
        };
        Ok(WorldSets {
            train: make("train", cfg.train_worlds)?,
            val: make("val", cfg.val_worlds)?,
            test: make("test", cfg.test_worlds)?,
        })
    }

    /// Training episodes on the training worlds.
    pub fn source(&self, cfg: &LabConfig) -> EpisodeSource {
        EpisodeSource {
            worlds: self.train.clone(),
            bounds: cfg.bounds(),
            split: SoundSplit::Heard,
            env: cfg.env_params(),
        }
    }

    /// The fixed held-out evaluation protocol (test worlds, `eval_split`).
    pub fn test_set(&self, cfg: &LabConfig) -> Result<EvalSet> {
        episode_set(cfg, &self.test, cfg.eval_episodes, cfg.eval_split, "test")
    }

    /// Validation probe used during training (heard sounds).
    pub fn probe_set(&self, cfg: &LabConfig) -> Result<EvalSet> {
        episode_set(cfg, &self.val, cfg.probe_episodes, SoundSplit::Heard, "probe")
    }
}

fn usable_world(cfg: &LabConfig, tag: &str, index: u64) -> Result<GridWorld> {
    let base = derive_seed(cfg.world_seed, tag, index);
    let mut last = None;
    for attempt in 0..32 {
        let world = generate_world(
            derive_seed(base, "attempt", attempt),
            cfg.world_height,
            cfg.world_width,
            cfg.obstacle_density,
        );
        let checked = world.and_then(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            sample_episode(&w, 0, &cfg.bounds(), SoundSplit::Heard, &mut rng).map(|_| w)
        });
        match checked {
            Ok(w) => return Ok(w),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

pub fn episode_set(
    cfg: &LabConfig,
    worlds: &[Arc<GridWorld>],
    n: usize,
    split: SoundSplit,
    tag: &str,
) -> Result<EvalSet> {
    Ok(EvalSet {
        worlds: worlds.to_vec(),
        episodes: sample_episode_set(worlds, n, &cfg.bounds(), split, derive_seed(cfg.world_seed, tag, 0))?,
        env: cfg.env_params(),
        seed: derive_seed(cfg.world_seed, tag, 1),
    })
}

/// PPO-trains the point-goal teacher for `teacher_updates` and keeps the
/// best validation probe, checked against `teacher_target_sr` and
/// `teacher_target_spl`.
pub fn train_teacher_net(
    cfg: &LabConfig,
    worlds: &WorldSets,
    on_log: &mut dyn FnMut(&UpdateLog),
) -> Result<TeacherOutcome> {
    let net = PolicyNet::new(
        NetKind::Teacher,
        cfg.net_config(),
        derive_seed(cfg.seed, "teacher-init", 0),
    );
    let trainer = Trainer::new(
        net,
        cfg.teacher_train_config(cfg.teacher_updates),
        worlds.source(cfg),
        None,
        Some(worlds.probe_set(cfg)?),
        derive_seed(cfg.seed, "teacher-train", 0),
    )?;
    train_teacher(trainer, cfg.teacher_target(), on_log)
}

/// Trains an audio-goal student for `student_updates`; distills from
/// `teacher` when `lambda_cd > 0`.
pub fn train_student_net(
    cfg: &LabConfig,
    worlds: &WorldSets,
    teacher: Option<&PolicyNet>,
    on_log: &mut dyn FnMut(&UpdateLog),
) -> Result<TrainOutcome> {
    if cfg.lambda_cd > 0.0 && teacher.is_none() {
        return Err(LabError::Config(
            vec!["lambda_cd > 0 needs a teacher checkpoint".into()],
        ));
    }
    if let Some(t) = teacher {
        if t.kind != NetKind::Teacher || t.m() != cfg.m {
            return Err(LabError::Config(vec![format!(
                "distillation needs a teacher with m = {}, got a {:?} with m = {}",
                cfg.m,
                t.kind,
                t.m()
            )]));
        }
    }
    let net = PolicyNet::new(
        NetKind::Student,
        cfg.net_config(),
        derive_seed(cfg.seed, "student-init", 0),
    );
    let trainer = Trainer::new(
        net,
        cfg.train_config(cfg.student_updates),
        worlds.source(cfg),
        teacher.filter(|_| cfg.lambda_cd > 0.0).cloned(),
        Some(worlds.probe_set(cfg)?),
        derive_seed(cfg.seed, "student-train", 0),
    )?;
    train_policy(trainer, |l| on_log(l))
}

/// Held-out quality of a direction predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorReport {
    pub train_loss: f64,
    /// Mean angular error (radians) on validation-world samples.
    pub angular_error: f64,
    /// Same, for the best constant direction (mean training direction).
    pub constant_error: f64,
}

pub fn train_direction_predictor(cfg: &LabConfig, worlds: &WorldSets) -> Result<(DirectionPredictor, PredictorReport)> {
    let source = worlds.source(cfg);
    let samples = collect_direction_samples(
        &source,
        cfg.predictor_samples,
        derive_seed(cfg.seed, "predictor-data", 0),
    );
    let mut p = DirectionPredictor::new(cfg.predictor_hidden, derive_seed(cfg.seed, "predictor-init", 0));
    let train_loss = p.train(
        &samples,
        FitConfig {
            epochs: cfg.predictor_epochs,
            batch: 32,
            lr: 1e-3,
            seed: derive_seed(cfg.seed, "predictor-fit", 0),
        },
    )?;
    let held_out = EpisodeSource {
        worlds: worlds.val.clone(),
        ..source
    };
    let test = collect_direction_samples(&held_out, 1000, derive_seed(cfg.seed, "predictor-test", 0));
    let mean_dir = samples.iter().fold((0.0, 0.0), |acc, s| {
        let n = (s.goal.0 * s.goal.0 + s.goal.1 * s.goal.1).sqrt().max(1e-12);
        (acc.0 + s.goal.0 / n, acc.1 + s.goal.1 / n)
    });
    let err = |f: &dyn Fn(&DirectionSample) -> (f64, f64)| {
        test.iter().map(|s| angular_error(f(s), s.goal)).sum::<f64>() / test.len().max(1) as f64
    };
    let angular = err(&|s| {
        p.model.forward(&s.features)[..2]
            .try_into()
            .map(|a: [f64; 2]| (a[0], a[1]))
            .unwrap()
    });
    let constant = err(&|_| mean_dir);
    Ok((
        p,
        PredictorReport {
            train_loss,
            angular_error: angular,
            constant_error: constant,
        },
    ))
}

/// Stop classifier fitted on the student's (and an oracle's) decision
/// points; returns the net and its final training loss.
pub fn train_stop_net(cfg: &LabConfig, worlds: &WorldSets, student: &PolicyNet) -> Result<(StopNet, f64)> {
    let samples = collect_stop_samples(
        &worlds.source(cfg),
        student,
        cfg.stop_episodes,
        derive_seed(cfg.seed, "stop-data", 0),
    )?;
    let mut stop = StopNet::new(2 * cfg.m - 1, cfg.stop_hidden, derive_seed(cfg.seed, "stop-init", 0));
    let loss = stop.train(
        &samples,
        FitConfig {
            epochs: cfg.stop_epochs,
            batch: 32,
            lr: 1e-3,
            seed: derive_seed(cfg.seed, "stop-fit", 0),
        },
    )?;
    Ok((stop, loss))
}

/// A policy agent over one or more checkpoints, optionally with
/// omnidirectional gathering over `cfg.oig_directions`.
pub fn policy_agent(nets: Vec<PolicyNet>, cfg: &LabConfig, greedy: bool, oig: bool) -> Result<PolicyAgent> {
    let agent = PolicyAgent::new(nets, greedy);
    Ok(if oig { agent.with_oig(cfg.directions()?) } else { agent })
}

/// One stage of the pipeline; recorded verbatim in the manifest so the
/// run can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "kebab-case")]
pub enum Stage {
    GenWorlds,
    TrainTeacher,
    TrainStudent {
        teacher: Option<PathBuf>,
    },
    Eval {
        ckpt: PathBuf,
        oig: bool,
        greedy: bool,
        stop_net: Option<PathBuf>,
        predictor: Option<PathBuf>,
    },
    EnsembleEval {
        ckpts: Vec<PathBuf>,
        greedy: bool,
    },
    SweepK {
        teacher: PathBuf,
        ks: Vec<usize>,
        seeds: Vec<u64>,
    },
    Render {
        run: PathBuf,
        episodes: Vec<usize>,
    },
}

impl Stage {
    /// Checkpoint stems (or, for rendering, files) this stage reads.
    fn inputs(&self) -> Result<Vec<PathBuf>> {
        Ok(match self {
            Stage::GenWorlds | Stage::TrainTeacher => vec![],
            Stage::TrainStudent { teacher } => teacher
                .iter()
                .map(|t| resolve_stem(t, TEACHER_CKPT))
                .collect::<Result<_>>()?,
            Stage::Eval {
                ckpt,
                stop_net,
                predictor,
                ..
            } => {
                let mut v = vec![resolve_stem(ckpt, STUDENT_CKPT).or_else(|_| resolve_stem(ckpt, TEACHER_CKPT))?];
                if let Some(s) = stop_net {
                    v.push(resolve_stem(s, STOP_CKPT)?);
                }
                if let Some(p) = predictor {
                    v.push(resolve_stem(p, PREDICTOR_CKPT)?);
                }
                v
            }
            Stage::EnsembleEval { ckpts, .. } => ckpts
                .iter()
                .map(|c| resolve_stem(c, STUDENT_CKPT))
                .collect::<Result<_>>()?,
            Stage::SweepK { teacher, .. } => vec![resolve_stem(teacher, TEACHER_CKPT)?],
            Stage::Render { run, .. } => vec![run.join(CONFIG_FILE), trajectory_log(run)?],
        })
    }
}

/// Accepts a checkpoint stem or a run directory (whose `ckpt/<name>` is
/// used); fails when no checkpoint exists there.
pub fn resolve_stem(path: &Path, name: &str) -> Result<PathBuf> {
    let stem = if path.join(MANIFEST_FILE).exists() {
        path.join("ckpt").join(name)
    } else {
        path.to_path_buf()
    };
    let meta = PathBuf::from(format!("{}.json", stem.display()));
    if meta.is_file() {
        Ok(stem)
    } else {
        Err(LabError::Checkpoint {
            path: stem,
            msg: "no checkpoint found".into(),
        })
    }
}

fn trajectory_log(run: &Path) -> Result<PathBuf> {
    let dir = run.join("logs");
    let mut logs: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| LabError::Format {
            path: dir.clone(),
            msg: format!("cannot list logs: {e}"),
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("eval") && n.ends_with(".jsonl"))
        })
        .collect();
    logs.sort();
    logs.into_iter().next().ok_or(LabError::Format {
        path: dir,
        msg: "run has no evaluation trajectories".into(),
    })
}

fn input_hash(path: &Path) -> Result<String> {
    if path.extension().is_some_and(|e| e == "json" || e == "jsonl") && path.is_file() {
        file_hash(path)
    } else {
        content_hash(path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub stage: Stage,
    pub config_hash: String,
    pub seed: u64,
    pub world_seed: u64,
    /// Input artifact → content hash at run time.
    pub inputs: BTreeMap<String, String>,
    /// Run-relative output path → content hash.
    pub outputs: BTreeMap<String, String>,
    /// Set when the stage completed but missed its goal (e.g. the teacher
    /// never reached its target success rate).
    pub failure: Option<String>,
}

impl Manifest {
    pub fn load(run: &Path) -> Result<Manifest> {
        let path = run.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| LabError::Format {
            path: path.clone(),
            msg: format!("cannot read manifest: {e}"),
        })?;
        serde_json::from_str(&text).map_err(|e| LabError::Format {
            path,
            msg: e.to_string(),
        })
    }
}

/// Output layout of one run.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    /// Creates the layout; refuses a directory that already holds a run.
    pub fn create(root: &Path) -> Result<RunDir> {
        if root.join(MANIFEST_FILE).exists() {
            return Err(LabError::Format {
                path: root.to_path_buf(),
                msg: "already contains a run; choose a fresh output directory".into(),
            });
        }
        for sub in ["ckpt", "logs", "renders"] {
            fs::create_dir_all(root.join(sub))?;
        }
        Ok(RunDir {
            root: root.to_path_buf(),
        })
    }

    pub fn ckpt(&self, name: &str) -> PathBuf {
        self.root.join("ckpt").join(name)
    }

    pub fn log(&self, name: &str) -> PathBuf {
        self.root.join("logs").join(format!("{name}.jsonl"))
    }

    pub fn render(&self, name: &str) -> PathBuf {
        self.root.join("renders").join(format!("{name}.svg"))
    }

    fn write_jsonl<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<()> {
        let mut s = String::new();
        for r in rows {
            s.push_str(&serde_json::to_string(r)?);
            s.push('\n');
        }
        fs::write(self.log(name), s)?;
        Ok(())
    }

    /// Writes an evaluation's trajectories and draws its first episodes.
    fn record_eval(&self, name: &str, run: &EvalRun, set: &EvalSet) -> Result<()> {
        fs::write(self.log(&format!("eval_{name}")), run.to_jsonl()?)?;
        for t in run.trajectories.iter().take(AUTO_RENDERS) {
            let svg = render_trajectory_svg(&set.worlds[t.world_id], &t.poses, RENDER_PX);
            fs::write(self.render(&format!("{name}_ep{}", t.episode)), svg)?;
        }
        Ok(())
    }

    fn outputs(&self) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        let mut stack = vec![self.root.clone()];
        while let Some(dir) = stack.pop() {
            for entry in fs::read_dir(&dir)? {
                let path = entry?.path();
                if path.is_dir() {
                    stack.push(path);
                } else if path.file_name().is_some_and(|n| n != MANIFEST_FILE) {
                    let rel = path
                        .strip_prefix(&self.root)
                        .expect("inside the run")
                        .to_string_lossy()
                        .into_owned();
                    out.insert(rel, file_hash(&path)?);
                }
            }
        }
        Ok(out)
    }
}

/// Metrics table in CSV form (header plus one row per label).
pub fn metrics_csv(rows: &[(String, Metrics)]) -> String {
    let mut s = String::from(Metrics::CSV_HEADER);
    s.push('\n');
    for (label, m) in rows {
        s.push_str(&m.csv_row(label));
        s.push('\n');
    }
    s
}

/// Runs `stage` under `cfg`, writing a complete run directory at `out`.
/// `progress` receives one human-readable line per notable event.
pub fn execute(stage: &Stage, cfg: &LabConfig, out: &Path, progress: &mut dyn FnMut(&str)) -> Result<Manifest> {
    cfg.validate()?;
    let mut inputs = BTreeMap::new();
    for p in stage.inputs()? {
        inputs.insert(p.display().to_string(), input_hash(&p)?);
    }
    let run = RunDir::create(out)?;
    fs::write(run.root.join(CONFIG_FILE), cfg.to_json())?;
    let worlds = WorldSets::generate(cfg)?;
    let mut failure = None;
    let rows = match stage {
        Stage::GenWorlds => gen_worlds(cfg, &worlds, &run)?,
        Stage::TrainTeacher => {
            let (rows, fail) = teacher_stage(cfg, &worlds, &run, progress)?;
            failure = fail;
            rows
        }
        Stage::TrainStudent { teacher } => {
            let teacher = match teacher {
                Some(t) => Some(PolicyNet::load(&resolve_stem(t, TEACHER_CKPT)?)?.0),
                None => None,
            };
            student_stage(cfg, &worlds, &run, teacher.as_ref(), progress)?
        }
        Stage::Eval {
            ckpt,
            oig,
            greedy,
            stop_net,
            predictor,
        } => eval_stage(
            cfg,
            &worlds,
            &run,
            ckpt,
            *oig,
            *greedy,
            stop_net.as_deref(),
            predictor.as_deref(),
        )?,
        Stage::EnsembleEval { ckpts, greedy } => ensemble_stage(cfg, &worlds, &run, ckpts, *greedy)?,
        Stage::SweepK { teacher, ks, seeds } => {
            let (teacher, _) = PolicyNet::load(&resolve_stem(teacher, TEACHER_CKPT)?)?;
            sweep_stage(cfg, &worlds, &run, &teacher, ks, seeds, progress)?
        }
        Stage::Render { run: src, episodes } => render_stage(&run, src, episodes)?,
    };
    fs::write(run.root.join(METRICS_FILE), metrics_csv(&rows))?;
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        stage: stage.clone(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        world_seed: cfg.world_seed,
        inputs,
        outputs: run.outputs()?,
        failure,
    };
    fs::write(run.root.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

fn gen_worlds(cfg: &LabConfig, worlds: &WorldSets, run: &RunDir) -> Result<Vec<(String, Metrics)>> {
    let dir = run.root.join("worlds");
    fs::create_dir_all(&dir)?;
    for (tag, set) in [("train", &worlds.train), ("val", &worlds.val), ("test", &worlds.test)] {
        for (i, w) in set.iter().enumerate() {
            w.save(&dir.join(format!("{tag}_{i:03}.json")))?;
        }
    }
    let set = worlds.test_set(cfg)?;
    let oracle = run_eval(&mut OracleAgent, &set)?;
    let random = run_eval(&mut RandomAgent { m: cfg.m }, &set)?;
    run.record_eval("oracle", &oracle, &set)?;
    Ok(vec![
        ("oracle".into(), oracle.metrics()),
        ("random".into(), random.metrics()),
    ])
}

type StageRows = Vec<(String, Metrics)>;

fn teacher_stage(
    cfg: &LabConfig,
    worlds: &WorldSets,
    run: &RunDir,
    progress: &mut dyn FnMut(&str),
) -> Result<(StageRows, Option<String>)> {
    let mut logs = Vec::new();
    let outcome = train_teacher_net(cfg, worlds, &mut |l| {
        if let Some(p) = &l.probe {
            progress(&format!(
                "teacher update {}: val SR {:.3} SPL {:.3}",
                l.update, p.sr, p.spl
            ));
        }
        logs.push(l.clone());
    })?;
    run.write_jsonl("train", &logs)?;
    outcome
        .net
        .save(&run.ckpt(TEACHER_CKPT), &cfg.hash(), outcome.env_steps as u64)?;
    let failure = (!outcome.passed).then(|| {
        LabError::TeacherBudget {
            sr: outcome.val_sr,
            spl: outcome.val_spl,
            steps: outcome.env_steps,
            target_sr: cfg.teacher_target_sr,
            target_spl: cfg.teacher_target_spl,
        }
        .to_string()
    });

    progress("training direction predictor");
    let (predictor, report) = train_direction_predictor(cfg, worlds)?;
    predictor.save(&run.ckpt(PREDICTOR_CKPT), &cfg.hash())?;
    run.write_jsonl("predictor", std::slice::from_ref(&report))?;

    let set = worlds.test_set(cfg)?;
    let truth = run_eval(
        &mut policy_agent(vec![outcome.net.clone()], cfg, cfg.greedy, false)?,
        &set,
    )?;
    run.record_eval("teacher", &truth, &set)?;
    let mut pseudo =
        policy_agent(vec![outcome.net], cfg, cfg.greedy, false)?.with_goal(GoalSource::Predicted(predictor));
    let pseudo = run_eval(&mut pseudo, &set)?;
    run.record_eval("teacher_pseudo_gps", &pseudo, &set)?;
    Ok((
        vec![
            ("teacher".into(), truth.metrics()),
            ("teacher_pseudo_gps".into(), pseudo.metrics()),
        ],
        failure,
    ))
}

fn student_stage(
    cfg: &LabConfig,
    worlds: &WorldSets,
    run: &RunDir,
    teacher: Option<&PolicyNet>,
    progress: &mut dyn FnMut(&str),
) -> Result<StageRows> {
    let mut logs = Vec::new();
    let outcome = train_student_net(cfg, worlds, teacher, &mut |l| {
        if let Some(p) = &l.probe {
            progress(&format!(
                "student update {}: val SR {:.3} SPL {:.3}",
                l.update, p.sr, p.spl
            ));
        }
        logs.push(l.clone());
    })?;
    run.write_jsonl("train", &logs)?;
    outcome
        .net
        .save(&run.ckpt(STUDENT_CKPT), &cfg.hash(), outcome.env_steps as u64)?;

    progress("training stop classifier");
    let (stop, loss) = train_stop_net(cfg, worlds, &outcome.net)?;
    stop.save(&run.ckpt(STOP_CKPT), &cfg.hash())?;
    run.write_jsonl("stop_net", &[serde_json::json!({ "train_loss": loss })])?;

    let set = worlds.test_set(cfg)?;
    let mut rows = Vec::new();
    for (label, oig, with_stop) in [
        ("student", false, false),
        ("student_oig", true, false),
        ("student_stop", false, true),
    ] {
        let mut agent = policy_agent(vec![outcome.net.clone()], cfg, cfg.greedy, oig)?;
        if with_stop {
            agent = agent.with_stop(stop.clone());
        }
        let r = run_eval(&mut agent, &set)?;
        run.record_eval(label, &r, &set)?;
        rows.push((label.to_string(), r.metrics()));
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn eval_stage(
    cfg: &LabConfig,
    worlds: &WorldSets,
    run: &RunDir,
    ckpt: &Path,
    oig: bool,
    greedy: bool,
    stop_net: Option<&Path>,
    predictor: Option<&Path>,
) -> Result<StageRows> {
    let stem = resolve_stem(ckpt, STUDENT_CKPT).or_else(|_| resolve_stem(ckpt, TEACHER_CKPT))?;
    let (net, _) = PolicyNet::load(&stem)?;
    let mut label = match net.kind {
        NetKind::Student => "student".to_string(),
        NetKind::Teacher => "teacher".to_string(),
    };
    let mut agent = policy_agent(vec![net.clone()], cfg, greedy, oig)?;
    if oig {
        label.push_str("_oig");
    }
    if let Some(s) = stop_net {
        agent = agent.with_stop(StopNet::load(&resolve_stem(s, STOP_CKPT)?)?);
        label.push_str("_stop");
    }
    if let Some(p) = predictor {
        if net.kind != NetKind::Teacher {
            return Err(LabError::Config(vec![
                "--predictor applies to teacher checkpoints only".into(),
            ]));
        }
        agent = agent.with_goal(GoalSource::Predicted(DirectionPredictor::load(&resolve_stem(
            p,
            PREDICTOR_CKPT,
        )?)?));
        label.push_str("_pseudo_gps");
    }
    if !greedy {
        label.push_str("_sampled");
    }
    let set = worlds.test_set(cfg)?;
    let r = run_eval(&mut agent, &set)?;
    run.record_eval(&label, &r, &set)?;
    Ok(vec![(label, r.metrics())])
}

fn ensemble_stage(
    cfg: &LabConfig,
    worlds: &WorldSets,
    run: &RunDir,
    ckpts: &[PathBuf],
    greedy: bool,
) -> Result<StageRows> {
    if ckpts.is_empty() {
        return Err(LabError::Config(vec!["ensemble needs at least one checkpoint".into()]));
    }
    let nets = ckpts
        .iter()
        .map(|c| Ok(PolicyNet::load(&resolve_stem(c, STUDENT_CKPT)?)?.0))
        .collect::<Result<Vec<_>>>()?;
    if nets.iter().any(|n| n.m() != nets[0].m()) {
        return Err(LabError::Config(vec!["ensemble members disagree on m".into()]));
    }
    let set = worlds.test_set(cfg)?;
    let mut rows = Vec::new();
    for (i, n) in nets.iter().enumerate() {
        let r = run_eval(&mut policy_agent(vec![n.clone()], cfg, greedy, false)?, &set)?;
        rows.push((format!("model_{i}"), r.metrics()));
    }
    for (label, oig) in [("ensemble", false), ("ensemble_oig", true)] {
        let r = run_eval(&mut policy_agent(nets.clone(), cfg, greedy, oig)?, &set)?;
        run.record_eval(label, &r, &set)?;
        rows.push((label.to_string(), r.metrics()));
    }
    Ok(rows)
}

fn sweep_stage(
    cfg: &LabConfig,
    worlds: &WorldSets,
    run: &RunDir,
    teacher: &PolicyNet,
    ks: &[usize],
    seeds: &[u64],
    progress: &mut dyn FnMut(&str),
) -> Result<StageRows> {
    if ks.is_empty() || seeds.is_empty() {
        return Err(LabError::Config(vec!["sweep needs at least one k and one seed".into()]));
    }
    let set = worlds.test_set(cfg)?;
    let mut rows = Vec::new();
    for &k in ks {
        let mut pooled = Vec::new();
        for &seed in seeds {
            let c = LabConfig { k, seed, ..cfg.clone() };
            c.validate()?;
            progress(&format!("k = {k}, seed = {seed}"));
            let mut logs = Vec::new();
            let outcome = train_student_net(&c, worlds, Some(teacher), &mut |l| logs.push(l.clone()))?;
            let name = format!("k{k}_s{seed}");
            run.write_jsonl(&format!("train_{name}"), &logs)?;
            outcome.net.save(
                &run.ckpt(&format!("student_{name}")),
                &c.hash(),
                outcome.env_steps as u64,
            )?;
            let r = run_eval(&mut policy_agent(vec![outcome.net], &c, c.greedy, false)?, &set)?;
            rows.push((name, r.metrics()));
            pooled.extend(r.results);
        }
        rows.push((format!("k{k}"), crate::evalx::metrics(&pooled)));
    }
    Ok(rows)
}

fn render_stage(run: &RunDir, src: &Path, episodes: &[usize]) -> Result<StageRows> {
    let cfg = LabConfig::load(&src.join(CONFIG_FILE))?;
    let worlds = WorldSets::generate(&cfg)?;
    let log_path = trajectory_log(src)?;
    let text = fs::read_to_string(&log_path)?;
    let logs: Vec<TrajectoryLog> = text
        .lines()
        .map(|l| {
            serde_json::from_str(l).map_err(|e| LabError::Format {
                path: log_path.clone(),
                msg: e.to_string(),
            })
        })
        .collect::<Result<_>>()?;
    let mut results = Vec::new();
    for &i in episodes {
        let t = logs.get(i).ok_or_else(|| LabError::Format {
            path: log_path.clone(),
            msg: format!("no episode {i} (log holds {})", logs.len()),
        })?;
        let world = worlds.test.get(t.world_id).ok_or_else(|| LabError::Format {
            path: log_path.clone(),
            msg: format!("episode {i} names missing world {}", t.world_id),
        })?;
        fs::write(
            run.render(&format!("episode_{i}")),
            render_trajectory_svg(world, &t.poses, RENDER_PX),
        )?;
        results.push(t.result.clone());
    }
    Ok(vec![("rendered".into(), crate::evalx::metrics(&results))])
}

/// Outcome of re-running a recorded stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub manifest: Manifest,
    /// metrics.csv of the replay equals the original byte for byte.
    pub identical: bool,
}

/// Re-executes the stage recorded in `run` with its saved configuration,
/// writing to `out`, after checking that every input still has the
/// recorded content hash.
pub fn replay(run: &Path, out: &Path, progress: &mut dyn FnMut(&str)) -> Result<ReplayReport> {
    let recorded = Manifest::load(run)?;
    let cfg = LabConfig::load(&run.join(CONFIG_FILE))?;
    if cfg.hash() != recorded.config_hash {
        return Err(LabError::Format {
            path: run.join(CONFIG_FILE),
            msg: "configuration no longer matches the manifest hash".into(),
        });
    }
    for (path, hash) in &recorded.inputs {
        let now = input_hash(Path::new(path))?;
        if &now != hash {
            return Err(LabError::Checkpoint {
                path: PathBuf::from(path),
                msg: "content changed since the recorded run".into(),
            });
        }
    }
    let manifest = execute(&recorded.stage, &cfg, out, progress)?;
    let identical = fs::read(run.join(METRICS_FILE))? == fs::read(out.join(METRICS_FILE))?;
    Ok(ReplayReport { manifest, identical })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_tag_and_index() {
        let a = derive_seed(1, "train", 0);
        assert_eq!(a, derive_seed(1, "train", 0));
        assert_ne!(a, derive_seed(1, "train", 1));
        assert_ne!(a, derive_seed(1, "test", 0));
        assert_ne!(a, derive_seed(2, "train", 0));
    }

    #[test]
    fn world_sets_are_disjoint_and_reproducible() {
        let cfg = LabConfig {
            train_worlds: 3,
            val_worlds: 2,
            test_worlds: 2,
            ..LabConfig::default()
        };
        let a = WorldSets::generate(&cfg).unwrap();
        let b = WorldSets::generate(&cfg).unwrap();
        assert_eq!(a.test, b.test);
        assert!(a.train.iter().all(|w| !a.test.contains(w)));
        let other = WorldSets::generate(&LabConfig {
            seed: 99,
            ..cfg.clone()
        })
        .unwrap();
        assert_eq!(a.train, other.train, "the training seed leaves worlds alone");
    }

    #[test]
    fn csv_has_header_and_rows() {
        let m = crate::evalx::metrics(&[]);
        let csv = metrics_csv(&[("a".into(), m.clone()), ("b".into(), m)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], Metrics::CSV_HEADER);
        assert!(lines[1].starts_with("a,0,") && lines[2].starts_with("b,0,"));
    }
}
