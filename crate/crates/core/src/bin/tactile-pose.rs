use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;

use tactile_pose::config::{ConfigError, ExperimentConfig, ProposerKind, ENV_OUT_DIR, ENV_SEED};
use tactile_pose::contact::ContactConfig;
use tactile_pose::experiments::samples::{draw_hypotheses, eval_samples, ground_truth_cases};
use tactile_pose::experiments::tracking::{replay, run_rng, run_static_estimation, Tracker};
use tactile_pose::experiments::{ablation, pushing, report, ArtifactStore, ExperimentError, ObjectContext};
use tactile_pose::filter::{write_snapshots, Belief, TransitionModel};
use tactile_pose::mesh::load_mesh;
use tactile_pose::metrics::map_hypothesis;
use tactile_pose::sdf::{build_sdf, Aabb};
use tactile_pose::tactile::read_observation_log;

#[derive(Parser)]
#[command(name = "tactile-pose", version, about = "Tactile object pose estimation experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Overrides applied on top of the config file and the environment.
#[derive(Args)]
struct Common {
    /// TOML configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Object id or name fragment, e.g. `035` or `mustard`.
    #[arg(long, global = true)]
    object: Option<String>,
    /// Taxel density (taxels per cm²).
    #[arg(long, global = true)]
    density: Option<f64>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts and reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Log level filter (error, warn, info, debug).
    #[arg(long, global = true, default_value = "info")]
    log: String,
}

#[derive(Subcommand)]
enum Command {
    /// Voxelize a mesh into a signed distance grid.
    BuildSdf {
        /// OBJ or binary STL mesh; without it the configured object is used.
        #[arg(long)]
        mesh: Option<PathBuf>,
        /// Box extent `ex,ey,ez` centered on the mesh, or `minx,miny,minz,maxx,maxy,maxz`.
        #[arg(long, value_delimiter = ',')]
        bbox: Vec<f64>,
        /// Nodes per axis.
        #[arg(long)]
        res: Option<usize>,
        /// Destination file. A global `--out` ending in `.sdfgrid` is
        /// taken as the destination too.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Simulate the training set for the configured object and density.
    GenData {
        /// Number of simulated records.
        #[arg(long)]
        size: Option<usize>,
    },
    /// Train the inverse model on an existing dataset.
    Train {
        /// Training epochs.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Draw pose hypotheses for one observation.
    Sample {
        #[arg(long, value_enum, default_value = "ddim")]
        proposer: ProposerKind,
        /// Hypotheses to draw.
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Observation log; the record selected by `--record` is used.
        #[arg(long)]
        obs: Option<PathBuf>,
        /// Index into the observation log.
        #[arg(long, default_value_t = 0)]
        record: usize,
        /// Simulated ground-truth contact used when no log is given.
        #[arg(long, default_value_t = 0)]
        case: usize,
    },
    /// Average log-likelihood and MAP accuracy of the hypothesis sources.
    EvalSamples {
        #[arg(long, value_enum, value_delimiter = ',')]
        proposer: Vec<ProposerKind>,
        /// Fail with exit code 4 if the first method's median exceeds this.
        #[arg(long)]
        max_median: Option<f64>,
    },
    /// Filter from a uniform prior over random static contacts.
    EstimateStatic {
        #[arg(long, value_enum, value_delimiter = ',')]
        proposer: Vec<ProposerKind>,
        /// Episodes per method.
        #[arg(long)]
        episodes: Option<usize>,
        /// Contacts per episode.
        #[arg(long)]
        contacts: Option<usize>,
        /// Replay an observation log instead of simulating contacts.
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Fail with exit code 4 if the first method has fewer successes.
        #[arg(long)]
        min_success: Option<usize>,
    },
    /// Track a pushed object.
    TrackPush {
        #[arg(long, value_enum, value_delimiter = ',')]
        proposer: Vec<ProposerKind>,
        /// Scripted push recordings.
        #[arg(long)]
        pushes: Option<usize>,
        /// Filter reruns per recording.
        #[arg(long)]
        reruns: Option<usize>,
        #[arg(long)]
        replay: Option<PathBuf>,
        #[arg(long)]
        min_success: Option<usize>,
    },
    /// Taxel-density and sample-count sweeps with existing checkpoints.
    Ablate,
    /// Rewrite CSV tables and SVG plots from the JSON reports in a run directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

enum Failure {
    Experiment(ExperimentError),
    Threshold(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        Failure::Experiment(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Experiment(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(&cli.common.log)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Threshold(msg)) => {
            eprintln!("threshold not met: {msg}");
            ExitCode::from(4)
        }
        Err(Failure::Experiment(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                ExperimentError::Config(_) | ExperimentError::Object(_) => 2,
                ExperimentError::MissingArtifact { .. } => 3,
                _ => 1,
            })
        }
    }
}

/// Defaults, then the file, then the environment, then flags.
fn resolve(c: &Common, out_dir: Option<PathBuf>) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_env()?;
    if let Some(o) = &c.object {
        cfg.object.id = o.clone();
    }
    if let Some(d) = c.density {
        cfg.sensor.density = d;
    }
    cfg.apply_overrides(c.seed.map(|s| s.to_string()).as_deref(), out_dir)?;
    Ok(cfg)
}

/// Validates, prints and stores the configuration of a run.
fn announce(cfg: &ExperimentConfig, dir: Option<&Path>) -> Result<(), Failure> {
    cfg.validate()?;
    eprintln!("# resolved configuration {} (env {ENV_SEED}, {ENV_OUT_DIR})\n{}", cfg.hash(), cfg.to_toml());
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io { path: dir.into(), source })?;
        let path = dir.join("config.toml");
        std::fs::write(&path, cfg.to_toml()).map_err(|source| ExperimentError::Io { path, source })?;
    }
    Ok(())
}

fn written(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (out_file, out_dir) = match cli.common.out.clone() {
        Some(p) if p.extension().is_some_and(|e| e == "sdfgrid") => (Some(p), None),
        other => (None, other),
    };
    let mut cfg = resolve(&cli.common, out_dir)?;
    let store = ArtifactStore::for_config(&cfg);
    match cli.command {
        Command::BuildSdf { mesh, bbox, res, file } => {
            let file = file.or(out_file);
            if let Some(r) = res {
                cfg.object.grid_resolution = r;
            }
            announce(&cfg, None)?;
            let Some(mesh_path) = mesh else {
                let grid = store.ensure_sdf(&cfg)?;
                let path = file.unwrap_or(store.sdf_path(&cfg)?);
                grid.save(&path).map_err(ExperimentError::from)?;
                written(&[path]);
                return Ok(());
            };
            let m = load_mesh(&mesh_path).map_err(ExperimentError::from)?;
            let (lo, hi) = m.bounds().ok_or_else(|| ExperimentError::Failed(format!("{} has no vertices", mesh_path.display())))?;
            let bx = match bbox.as_slice() {
                [] => Aabb::centered((lo + hi) / 2.0, (hi - lo) * 1.5),
                [x, y, z] => Aabb::centered((lo + hi) / 2.0, Vector3::new(*x, *y, *z)),
                [a, b, c, d, e, f] => Aabb::new(Vector3::new(*a, *b, *c), Vector3::new(*d, *e, *f)),
                other => {
                    return Err(ConfigError::Invalid { key: "--bbox".into(), reason: format!("expected 3 or 6 numbers, got {}", other.len()) }.into())
                }
            };
            let n = cfg.object.grid_resolution;
            let grid = build_sdf(&m, bx, [n; 3]).map_err(ExperimentError::from)?;
            let path = file.unwrap_or_else(|| mesh_path.with_extension("sdfgrid"));
            grid.save(&path).map_err(ExperimentError::from)?;
            written(&[path]);
        }
        Command::GenData { size } => {
            if let Some(s) = size {
                cfg.diffusion.dataset_size = s;
            }
            announce(&cfg, None)?;
            let ctx = ObjectContext::prepare(&cfg, &store)?;
            let data = store.generate_dataset(&cfg, &ctx)?;
            eprintln!("{} records", data.records.len());
            written(&[store.dataset_path(&cfg)?]);
        }
        Command::Train { epochs } => {
            if let Some(e) = epochs {
                cfg.diffusion.train.epochs = e;
            }
            announce(&cfg, None)?;
            let data = store.load_dataset(&cfg)?;
            let (_, rep) = store.train(&cfg, &data)?;
            eprintln!("best validation loss {:.5} at epoch {}", rep.best_loss, rep.best_epoch);
            written(&[store.model_path(&cfg)?]);
        }
        Command::Sample { proposer, n, obs, record, case } => {
            let dir = store.run_dir(&cfg, "sample")?;
            announce(&cfg, Some(&dir))?;
            let ctx = ObjectContext::prepare(&cfg, &store)?;
            let model = if proposer.needs_model() { Some(store.load_model(&cfg)?) } else { None };
            let mut gt = ground_truth_cases(&ctx, &cfg, case + 1, cfg.experiment.seed).pop().expect("case + 1 > 0");
            let simulated = obs.is_none();
            if let Some(path) = &obs {
                let recs = read_observation_log(path).map_err(ExperimentError::from)?;
                let rec = recs.get(record).ok_or_else(|| ExperimentError::Failed(format!("{} has {} records", path.display(), recs.len())))?;
                gt.obs = rec.z.clone();
                gt.config = ContactConfig::new(gt.config.object, rec.u);
            }
            let mut rng = run_rng(cfg.experiment.seed, case);
            let hyps = draw_hypotheses(proposer, &ctx, &cfg, model.as_ref(), &gt, n, &mut rng)?;
            let sensor = gt.config.sensor;
            let mut csv = String::from("x,y,theta,x_rel,y_rel,theta_rel\n");
            for h in &hyps {
                let w = sensor.compose(h);
                csv.push_str(&format!("{},{},{},{},{},{}\n", w.x, w.y, w.theta, h.x, h.y, h.theta));
            }
            let path = dir.join("hypotheses.csv");
            std::fs::write(&path, csv).map_err(|source| ExperimentError::Io { path: path.clone(), source })?;
            if simulated {
                if let Some(m) = map_hypothesis(&gt, &hyps, &ctx.model, &cfg.filter.likelihood) {
                    eprintln!("MAP normalized error {:.4}", ctx.metric.error(&sensor.compose(&m), &gt.config.object));
                }
            }
            written(&[path]);
        }
        Command::EvalSamples { proposer, max_median } => {
            let methods = if proposer.is_empty() { vec![ProposerKind::Ddim, ProposerKind::DdimNoSdf, ProposerKind::Sdf] } else { proposer };
            let dir = store.run_dir(&cfg, "samples")?;
            announce(&cfg, Some(&dir))?;
            let ctx = ObjectContext::prepare(&cfg, &store)?;
            let model = if methods.iter().any(|m| m.needs_model()) { Some(store.load_model(&cfg)?) } else { None };
            let rep = eval_samples(&ctx, &cfg, model.as_ref(), &methods, &[cfg.experiment.n_samples])?;
            written(&report::write_sample_eval(&dir, &rep)?);
            if let Some(limit) = max_median {
                let m = &rep.methods[0];
                if !(m.map_summary.median <= limit) {
                    return Err(Failure::Threshold(format!("{} MAP median {:.4} > {limit}", m.method.label(), m.map_summary.median)));
                }
            }
        }
        Command::EstimateStatic { proposer, episodes, contacts, replay: log, min_success } => {
            if !proposer.is_empty() {
                cfg.experiment.proposers = proposer;
            }
            if let Some(e) = episodes {
                cfg.experiment.episodes = e;
            }
            if let Some(c) = contacts {
                cfg.experiment.contacts = c;
            }
            estimate(&cfg, &store, "static", TransitionModel::Static, log, min_success)?;
        }
        Command::TrackPush { proposer, pushes, reruns, replay: log, min_success } => {
            if !proposer.is_empty() {
                cfg.experiment.proposers = proposer;
            }
            if let Some(p) = pushes {
                cfg.experiment.pushes = p;
            }
            if let Some(r) = reruns {
                cfg.experiment.reruns = r;
            }
            let transition = TransitionModel::Pusher(cfg.pusher);
            estimate(&cfg, &store, "push", transition, log, min_success)?;
        }
        Command::Ablate => {
            let dir = store.run_dir(&cfg, "ablation")?;
            announce(&cfg, Some(&dir))?;
            let rep = ablation::run_ablations(&cfg, &store)?;
            for g in &rep.gaps {
                eprintln!("gap: {g}");
            }
            written(&report::write_ablation(&dir, &rep)?);
        }
        Command::Report { dir } => {
            let paths = report::regenerate(&dir)?;
            if paths.is_empty() {
                return Err(ExperimentError::MissingArtifact { what: "report", path: dir, hint: "tactile-pose eval-samples".into() }.into());
            }
            written(&paths);
        }
    }
    Ok(())
}

fn estimate(
    cfg: &ExperimentConfig,
    store: &ArtifactStore,
    scenario: &str,
    transition: TransitionModel,
    log: Option<PathBuf>,
    min_success: Option<usize>,
) -> Result<(), Failure> {
    let dir = store.run_dir(cfg, if log.is_some() { "replay" } else { scenario })?;
    announce(cfg, Some(&dir))?;
    let ctx = ObjectContext::prepare(cfg, store)?;
    let model = if cfg.experiment.proposers.iter().any(|m| m.needs_model()) { Some(Arc::new(store.load_model(cfg)?)) } else { None };
    if let Some(path) = log {
        let records = read_observation_log(&path).map_err(ExperimentError::from)?;
        let kind = cfg.experiment.proposers[0];
        let tracker = Tracker::new(&ctx, cfg, kind, model, transition)?;
        let mut rng = run_rng(cfg.experiment.seed, 0);
        let prior = Belief::uniform(tracker.filter.n_particles, &cfg.workspace(&ctx.spec), tracker.filter.h_max, &mut rng);
        let snaps = replay(&tracker, prior, &records, &mut rng);
        let out = dir.join("beliefs.jsonl");
        write_snapshots(&out, &snaps).map_err(ExperimentError::from)?;
        if let Some(last) = snaps.last() {
            eprintln!("final estimate {:?}", last.estimate);
        }
        written(&[out]);
        return Ok(());
    }
    let rep = match scenario {
        "static" => run_static_estimation(&ctx, cfg, model)?,
        _ => pushing::run_push_tracking(&ctx, cfg, model)?,
    };
    written(&report::write_estimation(&dir, &rep)?);
    for m in &rep.methods {
        eprintln!("{}: {}/{} successes, {:.1} ms per step", m.method.label(), m.successes, rep.runs, m.mean_step_ms);
    }
    if let (Some(min), Some(first)) = (min_success, rep.methods.first()) {
        if first.successes < min {
            return Err(Failure::Threshold(format!("{} succeeded {} times, fewer than {min}", first.method.label(), first.successes)));
        }
    }
    Ok(())
}
