//! Subcommand front-end. [`run`] returns the process exit status.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use thermosplat_core::config::Config;
use thermosplat_core::dataset::{Dataset, Split};
use thermosplat_core::scene::Scene;
use thermosplat_core::synth::synthesize;
use thermosplat_core::train::{
    evaluate, material_emissivity, mean_metrics, predict, predict_curves, render_temps, run_ablation,
    train_stage1, train_stage2, MetricsRow, Model, Predictor,
};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::json::{config_keys, load_config, write_json};
use crate::run_dir::{frame_stem, load_dataset, write_frame, write_synth, RunDir, Sidecar};
use crate::tables;

pub const THREADS_ENV: &str = "NTR_THREADS";

#[derive(Parser, Debug)]
#[command(name = "thermosplat", version, about = "Nighttime thermal-field reconstruction over Gaussian splats")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON config; keys left out take their defaults.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Run directory for every output.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; falls back to NTR_THREADS. Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct Data {
    /// Directory holding `synth` outputs; defaults to --out.
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PredictorArg {
    Direct,
    Integral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic scene, its ground truth and captures.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the model; writes stage checkpoints, metrics.csv and emissivity.csv.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[arg(long, value_enum, default_value = "all")]
        stage: StageArg,
    },
    /// Render every camera at one time into renders/.
    Render {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        /// Seconds.
        #[arg(long, allow_negative_numbers = true)]
        time: f64,
        /// Defaults to integral when stage2.ckpt exists, else direct.
        #[arg(long, value_enum)]
        predictor: Option<PredictorArg>,
    },
    /// Score a split; writes metrics.csv (test) or metrics_train.csv.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Defaults to integral when stage2.ckpt exists, else direct.
        #[arg(long, value_enum)]
        predictor: Option<PredictorArg>,
    },
    /// Integrated per-gaussian trajectories into curves.csv.
    PredictCurve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        /// End time in seconds; defaults to the last training time.
        #[arg(long, allow_negative_numbers = true)]
        time: Option<f64>,
        /// Euler steps; defaults to the training density.
        #[arg(long)]
        substeps: Option<usize>,
    },
    /// Train every ablation variant and score each on the test split.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Synth { common }
            | Command::Train { common, .. }
            | Command::Render { common, .. }
            | Command::Eval { common, .. }
            | Command::PredictCurve { common, .. }
            | Command::Ablate { common, .. } => common,
        }
    }
}

/// Config keys and defaults, appended to every `--help`.
pub fn keys_help() -> String {
    let keys = config_keys();
    let width = keys.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut s = String::from("Config keys (JSON file given by --config) and defaults:\n");
    for (k, v) in keys {
        s.push_str(&format!("  {k:width$}  {v}\n"));
    }
    s
}

pub fn command() -> clap::Command {
    let help = keys_help();
    Cli::command()
        .after_help(help.clone())
        .mut_subcommands(|c| c.after_help(help.clone()))
}

/// Parses `argv` and runs it, printing a one-line error on failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match command()
        .try_get_matches_from(argv)
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[E_USAGE]: {first}");
            return 1;
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.code());
            e.exit_code()
        }
    }
}

fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => Some(
                v.trim()
                    .parse()
                    .map_err(|_| Error::Usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?,
            ),
            _ => None,
        },
    };
    if n == Some(0) {
        return Err(Error::Usage("--threads must be at least 1".into()));
    }
    Ok(n)
}

/// Config, run directory and worker pool shared by every subcommand.
fn prepare(common: &Common) -> Result<(Config, RunDir)> {
    if let Some(n) = resolve_threads(common.threads)? {
        // Only the first call in a process takes effect; output never
        // depends on the worker count.
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::debug!("worker pool already initialized");
        }
    }
    let mut cfg = load_config(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let run = RunDir::new(&common.out);
    run.create()?;
    write_json(&run.config(), &cfg)?;
    Ok((cfg, run))
}

fn data_dir(run: &RunDir, data: &Data) -> RunDir {
    match &data.data {
        Some(d) => RunDir::new(d),
        None => run.clone(),
    }
}

fn save_model(model: &Model, cfg: &Config, stage: u32, path: &Path) -> Result<()> {
    Checkpoint {
        stage,
        seed: cfg.seed,
        arrays: model.named_arrays(),
    }
    .save(path)
}

fn load_stage(scene: &Scene, dataset: &Dataset, cfg: &Config, path: &Path) -> Result<Model> {
    let ckpt = Checkpoint::load(path)?;
    let mut model = Model::new(scene, dataset, cfg)?;
    model
        .load_arrays(&ckpt.arrays)
        .map_err(|e| Error::format(path, format!("checkpoint does not fit this config: {e}")))?;
    Ok(model)
}

/// The most trained checkpoint in `run`: stage 2 if present, else stage 1.
fn load_latest(run: &RunDir, scene: &Scene, dataset: &Dataset, cfg: &Config) -> Result<(Model, u32)> {
    for stage in [2, 1] {
        let path = run.checkpoint(stage);
        if path.is_file() {
            return Ok((load_stage(scene, dataset, cfg, &path)?, stage));
        }
    }
    Err(Error::format(&run.checkpoint(1), "checkpoint not found; run `train` first"))
}

fn default_predictor(arg: Option<PredictorArg>, stage: u32) -> Predictor {
    match arg {
        Some(PredictorArg::Direct) => Predictor::Direct,
        Some(PredictorArg::Integral) => Predictor::Integral,
        None if stage >= 2 => Predictor::Integral,
        None => Predictor::Direct,
    }
}

fn report(label: &str, rows: &[MetricsRow]) {
    let mut out = std::io::stdout().lock();
    match mean_metrics(rows) {
        Some(m) => {
            let _ = writeln!(
                out,
                "{label}: {} captures, psnr {:.3} dB, ssim {:.5}, mae {:.4} C",
                rows.len(),
                m.psnr_db,
                m.ssim,
                m.mae_c
            );
        }
        None => {
            let _ = writeln!(out, "{label}: no captures");
        }
    }
}

pub fn dispatch(cmd: &Command) -> Result<()> {
    let (cfg, run) = prepare(cmd.common())?;
    match cmd {
        Command::Synth { .. } => {
            let out = synthesize(&cfg.synth, &cfg.render, cfg.seed)?;
            write_synth(&run, &out)?;
            println!(
                "wrote {} gaussians and {} captures to {}",
                out.scene.gaussians.len(),
                out.dataset.captures.len(),
                run.root.display()
            );
        }
        Command::Train { data, stage, .. } => {
            let (scene, dataset) = load_dataset(&data_dir(&run, data))?;
            let mut model = if *stage == StageArg::Two {
                load_stage(&scene, &dataset, &cfg, &run.checkpoint(1))?
            } else {
                let mut model = Model::new(&scene, &dataset, &cfg)?;
                train_stage1(&mut model, &dataset, &cfg)?;
                save_model(&model, &cfg, 1, &run.checkpoint(1))?;
                model
            };
            let predictor = if *stage == StageArg::One {
                Predictor::Direct
            } else {
                train_stage2(&mut model, &dataset, &cfg)?;
                save_model(&model, &cfg, 2, &run.checkpoint(2))?;
                tables::write_emissivity(&run.path("emissivity.csv"), "full", &material_emissivity(&model, &cfg)?)?;
                Predictor::Integral
            };
            let rows = evaluate(&model, dataset.test(), predictor, &cfg)?;
            tables::write_metrics(&run.path("metrics.csv"), &rows)?;
            report("test", &rows);
        }
        Command::Render {
            data, time, predictor, ..
        } => {
            let (scene, dataset) = load_dataset(&data_dir(&run, data))?;
            let (model, stage) = load_latest(&run, &scene, &dataset, &cfg)?;
            let temps = predict(&model, default_predictor(*predictor, stage), *time, &cfg)?;
            let dir = run.renders();
            fs::create_dir_all(&dir).map_err(Error::io(&dir))?;
            let mut views: Vec<_> = dataset.captures.iter().map(|c| (c.view_id, c.camera)).collect();
            views.sort_by_key(|v| v.0);
            views.dedup_by_key(|v| v.0);
            for (view_id, camera) in &views {
                let img = render_temps(&model, &temps, camera, *time, &cfg)?;
                let meta = Sidecar {
                    timestamp: *time,
                    view_id: *view_id,
                    split: None,
                    camera: *camera,
                };
                write_frame(&dir, &frame_stem(*view_id, *time), &img, &meta)?;
            }
            println!("rendered {} views at t = {time} s", views.len());
        }
        Command::Eval {
            data, split, predictor, ..
        } => {
            let (scene, dataset) = load_dataset(&data_dir(&run, data))?;
            let (model, stage) = load_latest(&run, &scene, &dataset, &cfg)?;
            let which = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            let caps = dataset.captures.iter().filter(|c| c.split == which);
            let rows = evaluate(&model, caps, default_predictor(*predictor, stage), &cfg)?;
            let name = match split {
                SplitArg::Test => "metrics.csv",
                SplitArg::Train => "metrics_train.csv",
            };
            tables::write_metrics(&run.path(name), &rows)?;
            report(if which == Split::Test { "test" } else { "train" }, &rows);
        }
        Command::PredictCurve { data, time, substeps, .. } => {
            let (scene, dataset) = load_dataset(&data_dir(&run, data))?;
            let model = load_stage(&scene, &dataset, &cfg, &run.checkpoint(2))?;
            let t = time.unwrap_or(model.t_end);
            let n = substeps.unwrap_or_else(|| cfg.thermo.steps_for(model.t0, t, model.span()));
            let curves = predict_curves(&model, t, n)?;
            tables::write_curves(&run.path("curves.csv"), &curves)?;
            println!("wrote {} curves with {n} substeps", curves.len());
        }
        Command::Ablate { data, .. } => {
            let (scene, dataset) = load_dataset(&data_dir(&run, data))?;
            let runs = run_ablation(&scene, &dataset, &cfg)?;
            tables::write_ablation(&run.root, &runs)?;
            for r in &runs {
                report(&r.name, &r.rows);
            }
        }
    }
    Ok(())
}
