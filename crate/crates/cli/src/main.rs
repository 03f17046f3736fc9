use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use steadypath_core::config::RunConfig;
use steadypath_core::dataset::Dataset;
use steadypath_core::engine::{bench_smoothing, stabilize_stream, StreamPaths};
use steadypath_core::eval::evaluate;
use steadypath_core::net::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, SmootherConfig, SmootherParams};
use steadypath_core::synth::{gen_unstable_motion, TrajectoryConfig};
use steadypath_core::train::{grad_check, write_loss_history, GradCheckOptions, Trainer};
use steadypath_core::{mseq, Error};

/// Minimum-latency online video stabilization from motion fields.
#[derive(Parser, Debug)]
#[command(name = "steadypath", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// key=value configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shortcut for --set seed=N.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize a training dataset, or a single shaky motion stream.
    Synth {
        /// Dataset directory to create.
        #[arg(long, value_name = "DIR", required_unless_present = "stream", conflicts_with = "stream")]
        out: Option<PathBuf>,
        /// Write one shaky stream (MSEQ) instead of a dataset.
        #[arg(long, value_name = "FILE")]
        stream: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train the smoother on a dataset directory.
    Train {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Checkpoint to write.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Start from this checkpoint instead of a fresh initialization.
        #[arg(long, value_name = "FILE")]
        init: Option<PathBuf>,
        /// Loss history file [default: <out>.loss.txt].
        #[arg(long, value_name = "FILE")]
        history: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Stream motions through a trained smoother, one warp per motion.
    Stabilize {
        #[arg(long, value_name = "FILE")]
        motions: PathBuf,
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Warp fields to write (MSEQ).
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        /// Shaky frames (PGM/PPM), one per motion, to render.
        #[arg(long, value_name = "DIR", requires = "render")]
        frames: Option<PathBuf>,
        /// Output directory for rendered frames and masks.
        #[arg(long, value_name = "DIR", requires = "frames")]
        render: Option<PathBuf>,
        /// Stage timing report [default: <out>.timing.txt].
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Cropping ratio, distortion value and stability score of a result.
    Eval {
        /// Input (shaky) motions.
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        /// Warps produced by `stabilize`.
        #[arg(long, value_name = "FILE")]
        warps: PathBuf,
        /// Report file.
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Compare analytic and finite-difference gradients on a tiny network.
    Gradcheck {
        #[command(flatten)]
        common: Common,
    },
    /// Measure smoothing latency per frame.
    Bench {
        /// Checkpoint to time [default: fresh weights from the configuration].
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Synth { common, .. }
            | Command::Train { common, .. }
            | Command::Stabilize { common, .. }
            | Command::Eval { common, .. }
            | Command::Gradcheck { common }
            | Command::Bench { common, .. } => common,
        }
    }
}

/// Largest acceptable gradient-check error.
const GRADCHECK_TOLERANCE: f64 = 1e-4;

enum Failure {
    Usage(String),
    Run(Error),
    Check { kind: &'static str, message: String },
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Usage(m),
            other => Failure::Run(other),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn load_config(common: &Common) -> std::result::Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::read(path)?,
        None => RunConfig::default(),
    };
    for kv in &common.overrides {
        cfg.apply_override(kv)?;
    }
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    Ok(cfg)
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn synth(cfg: &RunConfig, out: Option<&Path>, stream: Option<&Path>) -> Outcome {
    if let Some(path) = stream {
        let spec = cfg.dataset()?;
        let traj = TrajectoryConfig {
            seed: cfg.seed,
            ..cfg.trajectory.clone()
        };
        let motions = gen_unstable_motion(&traj, spec.geometry)?;
        mseq::write_file(path, spec.geometry, &motions)?;
        cfg.write(&sidecar(path, ".config.txt"))?;
        println!("synth stream frames={} out={}", motions.len(), path.display());
        return Ok(());
    }
    let dir = out.expect("clap requires --out or --stream");
    let data = Dataset::synthesize(&cfg.dataset()?)?;
    data.write(dir)?;
    cfg.write(&dir.join("effective_config.txt"))?;
    println!(
        "synth sequences={} samples={} out={}",
        data.sequences.len(),
        data.len(),
        dir.display()
    );
    Ok(())
}

/// Takes `r` and geometry from the dataset unless set explicitly, in which
/// case they must agree.
fn adopt_dataset_shape(cfg: &mut RunConfig, data: &Dataset) -> Outcome {
    let g = &data.geometry;
    let pairs = [
        ("r", data.r),
        ("frame_width", g.frame_width),
        ("frame_height", g.frame_height),
        ("grid_width", g.grid_width),
        ("grid_height", g.grid_height),
        ("scale", g.scale),
    ];
    for (key, value) in pairs {
        let current = cfg.get(key).expect("known key");
        if cfg.is_explicit(key) {
            if current != value.to_string() {
                return Err(Failure::Usage(format!(
                    "{key}={current} was set but the dataset was built with {key}={value}"
                )));
            }
        } else {
            cfg.set(key, &value.to_string())?;
        }
    }
    Ok(())
}

fn train(mut cfg: RunConfig, data_dir: &Path, out: &Path, init: Option<&Path>, history: Option<&Path>) -> Outcome {
    let data = Dataset::read(data_dir)?;
    adopt_dataset_shape(&mut cfg, &data)?;
    let smoother = cfg.smoother()?;
    let params = match init {
        Some(path) => load_checkpoint_expecting(path, &smoother)?,
        None => SmootherParams::<f32>::init(&smoother, cfg.seed)?,
    };
    let mut trainer = Trainer::new(params, cfg.training()?)?;
    let total = cfg.iterations;
    trainer.run(&data, |i, loss| {
        if i % 100 == 0 || i + 1 == total {
            eprintln!("iteration {i} loss {loss:.6}");
        }
    })?;
    let hist = trainer.history().to_vec();
    save_checkpoint(trainer.params(), out)?;
    let history = history.map_or_else(|| sidecar(out, ".loss.txt"), Path::to_path_buf);
    write_loss_history(&history, &hist)?;
    cfg.write(&sidecar(out, ".config.txt"))?;
    println!(
        "train iterations={} initial_loss={:.6} final_loss={:.6} parameters={} out={}",
        hist.len(),
        hist.first().copied().unwrap_or(f64::NAN),
        hist.last().copied().unwrap_or(f64::NAN),
        trainer.params().parameter_count(),
        out.display()
    );
    Ok(())
}

fn stabilize(cfg: &RunConfig, paths: StreamPaths) -> Outcome {
    let summary = stabilize_stream(&paths)?;
    cfg.write(&sidecar(paths.warps_out, ".config.txt"))?;
    let smooth = &summary.timings.smooth;
    println!(
        "stabilize frames={} smooth_mean_ms={:.3} smooth_p95_ms={:.3} out={}",
        summary.frames,
        smooth.mean_ms(),
        smooth.p95_ms(),
        paths.warps_out.display()
    );
    Ok(())
}

fn eval(cfg: &RunConfig, input: &Path, warps: &Path, out: &Path) -> Outcome {
    let (gi, inputs) = mseq::read_file(input)?;
    let (gw, warp_fields) = mseq::read_file(warps)?;
    gi.ensure_same(&gw)?;
    let report = evaluate(&inputs, &warp_fields)?;
    report.write(out)?;
    cfg.write(&sidecar(out, ".config.txt"))?;
    println!(
        "eval frames={} C={:.4} D={:.4} S={:.4} S_input={:.4} skipped={} out={}",
        inputs.len(),
        report.cropping_ratio(),
        report.distortion_value(),
        report.stability_score(),
        report.input_stability.score,
        report.cropping.skipped,
        out.display()
    );
    Ok(())
}

fn gradcheck(cfg: &RunConfig) -> Outcome {
    let opts = GradCheckOptions {
        samples: cfg.gradcheck_samples,
        step: cfg.gradcheck_step,
        zero_inputs: false,
        weights: cfg.loss,
    };
    let report = grad_check(&SmootherConfig::tiny(), cfg.seed, &opts)?;
    println!("gradcheck {}", report.summary());
    if report.max_relative_error > GRADCHECK_TOLERANCE || report.checked == 0 {
        return Err(Failure::Check {
            kind: "gradcheck",
            message: format!(
                "max relative error {:.3e} exceeds {GRADCHECK_TOLERANCE:e}",
                report.max_relative_error
            ),
        });
    }
    Ok(())
}

fn bench(cfg: &RunConfig, checkpoint: Option<&Path>) -> Outcome {
    let params = match checkpoint {
        Some(path) => load_checkpoint(path)?,
        None => SmootherParams::<f32>::init(&cfg.smoother()?, cfg.seed)?,
    };
    let stats = bench_smoothing(params, cfg.bench_frames, cfg.seed)?;
    println!(
        "bench frames={} smooth_mean_ms={:.3} smooth_p95_ms={:.3} budget_ms={}",
        stats.count(),
        stats.mean_ms(),
        stats.p95_ms(),
        cfg.budget_ms
    );
    if cfg.budget_ms > 0.0 && stats.mean_ms() > cfg.budget_ms {
        return Err(Failure::Check {
            kind: "budget",
            message: format!("mean smoothing latency {:.3} ms exceeds budget {} ms", stats.mean_ms(), cfg.budget_ms),
        });
    }
    Ok(())
}

fn run(command: Command) -> Outcome {
    let cfg = load_config(command.common())?;
    match command {
        Command::Synth { out, stream, .. } => synth(&cfg, out.as_deref(), stream.as_deref()),
        Command::Train {
            data,
            out,
            init,
            history,
            ..
        } => train(cfg, &data, &out, init.as_deref(), history.as_deref()),
        Command::Stabilize {
            motions,
            checkpoint,
            out,
            frames,
            render,
            report,
            ..
        } => {
            let report = report.unwrap_or_else(|| sidecar(&out, ".timing.txt"));
            stabilize(
                &cfg,
                StreamPaths {
                    motions: &motions,
                    checkpoint: &checkpoint,
                    warps_out: &out,
                    frames: frames.as_deref(),
                    render_dir: render.as_deref(),
                    report: Some(&report),
                },
            )
        }
        Command::Eval { input, warps, out, .. } => eval(&cfg, &input, &warps, &out),
        Command::Gradcheck { .. } => gradcheck(&cfg),
        Command::Bench { checkpoint, .. } => bench(&cfg, checkpoint.as_deref()),
    }
}

fn error_line(kind: &str, message: &str) -> String {
    let flat = message.split_whitespace().collect::<Vec<_>>().join(" ");
    format!("error kind={kind} message=\"{}\"", flat.replace('\\', "\\\\").replace('"', "\\\""))
}

fn command() -> clap::Command {
    let keys = RunConfig::help_text();
    let mut cmd = Cli::command();
    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    for name in names {
        let keys = keys.clone();
        cmd = cmd.mut_subcommand(name, move |s| s.after_long_help(keys));
    }
    cmd.after_long_help(keys)
}

fn main() -> ExitCode {
    let matches = match command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", error_line("usage", first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}", error_line("usage", &e.to_string()));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("{}", error_line("config", &m));
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            ExitCode::from(1)
        }
        Err(Failure::Check { kind, message }) => {
            eprintln!("{}", error_line(kind, &message));
            ExitCode::from(1)
        }
    }
}
