//! Streaming stabilizer: one warp per incoming motion, using only the past.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::motion::{GridGeometry, MotionField, MotionWindow};
use crate::mseq::{MseqReader, MseqWriter};
use crate::net::{load_checkpoint, SmootherParams};
use crate::warp;

const BUCKETS_PER_DECADE: usize = 20;
const MIN_MS: f64 = 1e-3;
const DECADES: usize = 8;

/// Latency statistics in fixed memory: count, sum and a log-spaced histogram
/// (1 µs to 100 s, 20 buckets per decade) for percentiles.
#[derive(Clone, Debug, PartialEq)]
pub struct StageStats {
    pub name: &'static str,
    count: u64,
    total_ms: f64,
    max_ms: f64,
    buckets: Vec<u64>,
}

impl StageStats {
    pub fn new(name: &'static str) -> Self {
        StageStats {
            name,
            count: 0,
            total_ms: 0.0,
            max_ms: 0.0,
            buckets: vec![0; BUCKETS_PER_DECADE * DECADES + 1],
        }
    }

    pub fn record(&mut self, d: Duration) {
        let ms = d.as_secs_f64() * 1e3;
        self.count += 1;
        self.total_ms += ms;
        self.max_ms = self.max_ms.max(ms);
        let pos = ((ms / MIN_MS).log10() * BUCKETS_PER_DECADE as f64).ceil();
        let i = if pos.is_finite() && pos > 0.0 { pos as usize } else { 0 };
        let last = self.buckets.len() - 1;
        self.buckets[i.min(last)] += 1;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean_ms(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.total_ms / self.count as f64
        }
    }

    /// Upper edge of the histogram bucket holding the `q` quantile, capped at
    /// the observed maximum.
    pub fn quantile_ms(&self, q: f64) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        let rank = ((q * self.count as f64).ceil() as u64).max(1);
        let mut seen = 0;
        for (i, &c) in self.buckets.iter().enumerate() {
            seen += c;
            if seen >= rank {
                let edge = MIN_MS * 10f64.powf(i as f64 / BUCKETS_PER_DECADE as f64);
                return edge.min(self.max_ms);
            }
        }
        self.max_ms
    }

    pub fn p95_ms(&self) -> f64 {
        self.quantile_ms(0.95)
    }
}

/// Per-stage statistics for the three pipeline stages.
#[derive(Clone, Debug, PartialEq)]
pub struct StageTimings {
    pub motion_ingest: StageStats,
    pub smooth: StageStats,
    pub render: StageStats,
}

impl Default for StageTimings {
    fn default() -> Self {
        StageTimings {
            motion_ingest: StageStats::new("motion_ingest"),
            smooth: StageStats::new("smooth"),
            render: StageStats::new("render"),
        }
    }
}

impl StageTimings {
    pub fn stages(&self) -> [&StageStats; 3] {
        [&self.motion_ingest, &self.smooth, &self.render]
    }

    /// One line per stage: `name count mean_ms p95_ms`.
    pub fn report(&self) -> String {
        let mut out = String::from("# stage count mean_ms p95_ms\n");
        for s in self.stages() {
            let _ = writeln!(out, "{} {} {:.4} {:.4}", s.name, s.count(), s.mean_ms(), s.p95_ms());
        }
        out
    }
}

/// Online smoother state for one stream.
pub struct Engine {
    params: SmootherParams<f32>,
    window: MotionWindow,
    frame_index: u64,
    timings: StageTimings,
}

impl Engine {
    pub fn new(params: SmootherParams<f32>) -> Result<Self> {
        let cfg = params.config();
        let window = MotionWindow::new(cfg.geometry, cfg.r - 1)?;
        Ok(Engine {
            params,
            window,
            frame_index: 0,
            timings: StageTimings::default(),
        })
    }

    /// Loads a checkpoint, rejecting it if `geometry` is given and differs.
    pub fn from_checkpoint(path: &Path, geometry: Option<&GridGeometry>) -> Result<Self> {
        let params = load_checkpoint(path)?;
        if let Some(g) = geometry {
            params.config().geometry.ensure_same(g)?;
        }
        Engine::new(params)
    }

    pub fn geometry(&self) -> &GridGeometry {
        self.window.geometry()
    }

    pub fn window(&self) -> &MotionWindow {
        &self.window
    }

    /// Number of motions pushed so far.
    pub fn frame_index(&self) -> u64 {
        self.frame_index
    }

    pub fn params(&self) -> &SmootherParams<f32> {
        &self.params
    }

    pub fn timings(&self) -> &StageTimings {
        &self.timings
    }

    pub fn timings_mut(&mut self) -> &mut StageTimings {
        &mut self.timings
    }

    /// Bytes held by the mutable state (window and timing histograms).
    pub fn state_bytes(&self) -> usize {
        let window = self.window.entries().map(|f| f.data().len() * 4).sum::<usize>();
        let hist = self.timings.stages().iter().map(|s| s.buckets.len() * 8).sum::<usize>();
        window + hist + std::mem::size_of::<Self>()
    }

    /// Appends `f_t` to the window and returns the warp for frame `t`.
    pub fn push_motion(&mut self, f: &MotionField) -> Result<MotionField> {
        self.geometry().ensure_same(f.geometry())?;
        if let Some(index) = f.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let start = Instant::now();
        self.window.push(f.clone())?;
        let out = self.params.forward(&self.window)?;
        self.timings.smooth.record(start.elapsed());
        self.frame_index += 1;
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamSummary {
    pub frames: usize,
    pub timings: StageTimings,
}

/// Inputs and outputs of [`stabilize_stream`].
#[derive(Clone, Copy, Debug)]
pub struct StreamPaths<'a> {
    pub motions: &'a Path,
    pub checkpoint: &'a Path,
    pub warps_out: &'a Path,
    /// Shaky frames, one per motion, to render.
    pub frames: Option<&'a Path>,
    /// Where rendered frames and masks go; required with `frames`.
    pub render_dir: Option<&'a Path>,
    pub report: Option<&'a Path>,
}

fn mask_image(frame: &warp::WarpedFrame) -> Result<Image> {
    let data = frame.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    Image::new(frame.image.width, frame.image.height, 1, data)
}

/// Streams a motion file through the engine, writing one warp per motion and
/// optionally rendering the matching frames.
pub fn stabilize_stream(paths: &StreamPaths) -> Result<StreamSummary> {
    let mut reader = MseqReader::open(paths.motions)?;
    let header = *reader.header();
    let mut engine = Engine::from_checkpoint(paths.checkpoint, Some(&header.geometry))?;
    let frames = match paths.frames {
        Some(dir) => {
            let list = warp::list_frames(dir)?;
            if list.len() != header.frame_count {
                return Err(Error::InvalidInput(format!(
                    "{} motions but {} frames in {}",
                    header.frame_count,
                    list.len(),
                    dir.display()
                )));
            }
            let out = paths
                .render_dir
                .ok_or_else(|| Error::InvalidInput("rendering frames needs an output directory".into()))?;
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            Some((list, out))
        }
        None => None,
    };
    let mut writer = MseqWriter::create(paths.warps_out, header.geometry, header.frame_count)?;
    let mut coverage = String::new();
    for t in 0..header.frame_count {
        let start = Instant::now();
        let field = reader.next().expect("frame count from header")?;
        let frame = match &frames {
            Some((list, _)) => Some(Image::read(&list[t])?),
            None => None,
        };
        engine.timings.motion_ingest.record(start.elapsed());
        let b = engine.push_motion(&field)?;
        writer.write(&b)?;
        if let (Some(img), Some((_, dir))) = (frame, &frames) {
            let start = Instant::now();
            let out = warp::render_stable(&img, &b)?;
            out.image.write(&dir.join(warp::frame_file_name(t, out.image.channels)))?;
            mask_image(&out)?.write(&dir.join(format!("mask_{t:06}.pgm")))?;
            let _ = writeln!(coverage, "{:.6}", out.coverage());
            engine.timings.render.record(start.elapsed());
        }
    }
    reader.expect_end()?;
    writer.finish()?;
    if let Some((_, dir)) = &frames {
        let path = dir.join("coverage.txt");
        std::fs::write(&path, coverage).map_err(|e| Error::io(&path, e))?;
    }
    if let Some(path) = paths.report {
        std::fs::write(path, engine.timings.report()).map_err(|e| Error::io(path, e))?;
    }
    Ok(StreamSummary {
        frames: header.frame_count,
        timings: engine.timings,
    })
}

/// Smoothing latency of `params` on `frames` random motions.
pub fn bench_smoothing(params: SmootherParams<f32>, frames: usize, seed: u64) -> Result<StageStats> {
    let mut engine = Engine::new(params)?;
    let g = *engine.geometry();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..frames {
        let f = MotionField::from_fn(g, |_, _| [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)])?;
        engine.push_motion(&f)?;
    }
    Ok(engine.timings.smooth.clone())
}
