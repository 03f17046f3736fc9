//! `key=value` run configuration shared by every subcommand.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::adam::AdamConfig;
use crate::dataset::DatasetSpec;
use crate::error::{Error, Result};
use crate::loss::LossWeights;
use crate::motion::GridGeometry;
use crate::net::SmootherConfig;
use crate::synth::TrajectoryConfig;
use crate::train::{GradCheckOptions, TrainingConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub geometry: GridGeometry,
    pub r: usize,
    pub stage_channels: [usize; 4],
    pub se_reduction: usize,
    pub input_attention: bool,
    pub bottleneck_attention: bool,
    pub sequences: usize,
    pub trajectory: TrajectoryConfig,
    pub loss: LossWeights,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub iterations: usize,
    pub gradcheck_samples: usize,
    pub gradcheck_step: f64,
    pub bench_frames: usize,
    /// Mean smoothing latency allowed by `bench`; 0 disables the check.
    pub budget_ms: f64,
    explicit: BTreeSet<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = SmootherConfig::default();
        let t = TrainingConfig::default();
        RunConfig {
            seed: 0,
            geometry: s.geometry,
            r: s.r,
            stage_channels: s.stage_channels,
            se_reduction: s.se_reduction,
            input_attention: s.input_attention,
            bottleneck_attention: s.bottleneck_attention,
            sequences: DatasetSpec::default().sequences,
            trajectory: TrajectoryConfig::default(),
            loss: t.loss,
            adam: t.adam,
            batch_size: t.batch_size,
            iterations: t.iterations,
            gradcheck_samples: GradCheckOptions::default().samples,
            gradcheck_step: GradCheckOptions::default().step,
            bench_frames: 200,
            budget_ms: 0.0,
            explicit: BTreeSet::new(),
        }
    }
}

/// Every key in file order with its type name and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "unsigned integer", "master seed for data, init and batching"),
    ("frame_width", "unsigned integer", "frame width in pixels"),
    ("frame_height", "unsigned integer", "frame height in pixels"),
    ("grid_width", "unsigned integer", "motion grid columns"),
    ("grid_height", "unsigned integer", "motion grid rows"),
    ("scale", "unsigned integer", "pixels per grid cell"),
    ("r", "unsigned integer", "window size; the network sees r-1 motions"),
    ("stage_channels", "list of 4 unsigned integers", "encoder channels per stage"),
    ("se_reduction", "unsigned integer", "channel-attention bottleneck ratio"),
    ("input_attention", "boolean", "attention over stacked input motions"),
    ("bottleneck_attention", "boolean", "attention at the encoder bottleneck"),
    ("sequences", "unsigned integer", "sequences synthesized by `synth`"),
    ("length", "unsigned integer", "frames per synthesized sequence"),
    ("stable_band", "number", "highest smooth-trajectory frequency (cycles/frame)"),
    ("sinusoids", "unsigned integer", "sinusoids per smooth channel"),
    ("translation_amplitude", "number", "smooth translation amplitude (px)"),
    ("rotation_amplitude", "number", "smooth rotation amplitude (rad)"),
    ("zoom_amplitude", "number", "smooth zoom amplitude (relative)"),
    ("parallax_strength", "number", "depth-dependent translation gain"),
    ("jitter_amplitude", "number", "peak shake at the frame corner (px)"),
    ("jitter_low", "number", "low edge of the shake band (cycles/frame)"),
    ("jitter_high", "number", "high edge of the shake band (cycles/frame)"),
    ("alpha", "number", "shape-consistency weight"),
    ("beta", "number", "scale-preservation weight"),
    ("sp_vertical", "boolean", "also apply scale preservation to vertical edges"),
    ("learning_rate", "number", "Adam step size"),
    ("beta1", "number", "Adam first-moment decay"),
    ("beta2", "number", "Adam second-moment decay"),
    ("epsilon", "number", "Adam denominator offset"),
    ("batch_size", "unsigned integer", "samples per iteration"),
    ("iterations", "unsigned integer", "training iterations"),
    ("gradcheck_samples", "unsigned integer", "parameters compared by `gradcheck`"),
    ("gradcheck_step", "number", "central-difference step of `gradcheck`"),
    ("bench_frames", "unsigned integer", "frames pushed by `bench`"),
    ("budget_ms", "number", "mean smoothing latency allowed by `bench` (0 = no check)"),
];

fn type_error(key: &str, kind: &str, value: &str) -> Error {
    Error::Config(format!("key {key}: expected {kind}, got \"{value}\""))
}

fn parse_num<T: std::str::FromStr>(key: &str, kind: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| type_error(key, kind, v))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = parse_num(key, "number", v)?;
    if !x.is_finite() {
        return Err(type_error(key, "finite number", v));
    }
    Ok(x)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(type_error(key, "boolean", v)),
    }
}

impl RunConfig {
    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let uint = |v: &str| parse_num::<usize>(key, "unsigned integer", v);
        let g = &mut self.geometry;
        let t = &mut self.trajectory;
        match key {
            "seed" => self.seed = parse_num(key, "unsigned integer", v)?,
            "frame_width" => g.frame_width = uint(v)?,
            "frame_height" => g.frame_height = uint(v)?,
            "grid_width" => g.grid_width = uint(v)?,
            "grid_height" => g.grid_height = uint(v)?,
            "scale" => g.scale = uint(v)?,
            "r" => self.r = uint(v)?,
            "stage_channels" => {
                let kind = "list of 4 unsigned integers";
                let parts: Vec<usize> = v
                    .split(',')
                    .map(|p| p.trim().parse().map_err(|_| type_error(key, kind, v)))
                    .collect::<Result<_>>()?;
                self.stage_channels = parts.try_into().map_err(|_| type_error(key, kind, v))?;
            }
            "se_reduction" => self.se_reduction = uint(v)?,
            "input_attention" => self.input_attention = parse_bool(key, v)?,
            "bottleneck_attention" => self.bottleneck_attention = parse_bool(key, v)?,
            "sequences" => self.sequences = uint(v)?,
            "length" => t.length = uint(v)?,
            "stable_band" => t.stable_band = parse_f64(key, v)?,
            "sinusoids" => t.sinusoids = uint(v)?,
            "translation_amplitude" => t.translation_amplitude = parse_f64(key, v)?,
            "rotation_amplitude" => t.rotation_amplitude = parse_f64(key, v)?,
            "zoom_amplitude" => t.zoom_amplitude = parse_f64(key, v)?,
            "parallax_strength" => t.parallax_strength = parse_f64(key, v)?,
            "jitter_amplitude" => t.jitter_amplitude = parse_f64(key, v)?,
            "jitter_low" => t.jitter_band.0 = parse_f64(key, v)?,
            "jitter_high" => t.jitter_band.1 = parse_f64(key, v)?,
            "alpha" => self.loss.alpha = parse_f64(key, v)?,
            "beta" => self.loss.beta = parse_f64(key, v)?,
            "sp_vertical" => self.loss.sp_vertical = parse_bool(key, v)?,
            "learning_rate" => self.adam.learning_rate = parse_f64(key, v)?,
            "beta1" => self.adam.beta1 = parse_f64(key, v)?,
            "beta2" => self.adam.beta2 = parse_f64(key, v)?,
            "epsilon" => self.adam.epsilon = parse_f64(key, v)?,
            "batch_size" => self.batch_size = uint(v)?,
            "iterations" => self.iterations = uint(v)?,
            "gradcheck_samples" => self.gradcheck_samples = uint(v)?,
            "gradcheck_step" => self.gradcheck_step = parse_f64(key, v)?,
            "bench_frames" => self.bench_frames = uint(v)?,
            "budget_ms" => self.budget_ms = parse_f64(key, v)?,
            _ => return Err(Error::Config(format!("unknown key \"{key}\""))),
        }
        self.explicit.insert(key.to_string());
        Ok(())
    }

    /// Text value of `key` as written by [`RunConfig::to_text`].
    pub fn get(&self, key: &str) -> Option<String> {
        let g = &self.geometry;
        let t = &self.trajectory;
        let b = |v: bool| v.to_string();
        Some(match key {
            "seed" => self.seed.to_string(),
            "frame_width" => g.frame_width.to_string(),
            "frame_height" => g.frame_height.to_string(),
            "grid_width" => g.grid_width.to_string(),
            "grid_height" => g.grid_height.to_string(),
            "scale" => g.scale.to_string(),
            "r" => self.r.to_string(),
            "stage_channels" => self.stage_channels.map(|c| c.to_string()).join(","),
            "se_reduction" => self.se_reduction.to_string(),
            "input_attention" => b(self.input_attention),
            "bottleneck_attention" => b(self.bottleneck_attention),
            "sequences" => self.sequences.to_string(),
            "length" => t.length.to_string(),
            "stable_band" => t.stable_band.to_string(),
            "sinusoids" => t.sinusoids.to_string(),
            "translation_amplitude" => t.translation_amplitude.to_string(),
            "rotation_amplitude" => t.rotation_amplitude.to_string(),
            "zoom_amplitude" => t.zoom_amplitude.to_string(),
            "parallax_strength" => t.parallax_strength.to_string(),
            "jitter_amplitude" => t.jitter_amplitude.to_string(),
            "jitter_low" => t.jitter_band.0.to_string(),
            "jitter_high" => t.jitter_band.1.to_string(),
            "alpha" => self.loss.alpha.to_string(),
            "beta" => self.loss.beta.to_string(),
            "sp_vertical" => b(self.loss.sp_vertical),
            "learning_rate" => self.adam.learning_rate.to_string(),
            "beta1" => self.adam.beta1.to_string(),
            "beta2" => self.adam.beta2.to_string(),
            "epsilon" => self.adam.epsilon.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "iterations" => self.iterations.to_string(),
            "gradcheck_samples" => self.gradcheck_samples.to_string(),
            "gradcheck_step" => self.gradcheck_step.to_string(),
            "bench_frames" => self.bench_frames.to_string(),
            "budget_ms" => self.budget_ms.to_string(),
            _ => return None,
        })
    }

    /// Whether `key` was set from a file or override rather than defaulted.
    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    /// Applies a `key=value` file. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("{source}:{}: expected key=value, got \"{line}\"", i + 1)));
            };
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("{source}:{}: {}", i + 1, strip_prefix(&e))))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str, source: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_text(text, source)?;
        Ok(c)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_text(&text, &path.display().to_string())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override \"{kv}\" is not key=value")))?;
        self.set(k.trim(), v)
    }

    /// Every key, one per line, in a form [`RunConfig::from_text`] reads back.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, _, _) in KEYS {
            let _ = writeln!(out, "{k}={}", self.get(k).expect("listed key"));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Key reference with defaults, for `--help`.
    pub fn help_text() -> String {
        let d = RunConfig::default();
        let mut out = String::from("Configuration keys (file lines or --set key=value):\n");
        for (k, kind, help) in KEYS {
            let _ = writeln!(out, "  {k:<22} {help} [{kind}, default {}]", d.get(k).unwrap());
        }
        out
    }

    pub fn smoother(&self) -> Result<SmootherConfig> {
        let g = GridGeometry::with_frame(
            self.geometry.frame_width,
            self.geometry.frame_height,
            self.geometry.grid_width,
            self.geometry.grid_height,
            self.geometry.scale,
        )?;
        let c = SmootherConfig {
            geometry: g,
            r: self.r,
            stage_channels: self.stage_channels,
            se_reduction: self.se_reduction,
            input_attention: self.input_attention,
            bottleneck_attention: self.bottleneck_attention,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn training(&self) -> Result<TrainingConfig> {
        let t = TrainingConfig {
            loss: self.loss,
            adam: self.adam,
            batch_size: self.batch_size,
            iterations: self.iterations,
            seed: self.seed,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn dataset(&self) -> Result<DatasetSpec> {
        let spec = DatasetSpec {
            geometry: self.smoother()?.geometry,
            r: self.r,
            sequences: self.sequences,
            trajectory: self.trajectory.clone(),
            seed: self.seed,
        };
        spec.trajectory.validate_for_window(self.r)?;
        Ok(spec)
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}
