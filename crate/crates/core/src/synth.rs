//! Procedural stable/shaky motion sequences and motion-transfer pairs.
//!
//! Camera motion is modelled as a global similarity trajectory (translation,
//! rotation, zoom about the frame center) plus a depth-like parallax term that
//! modulates translation across the grid. Each frame's motion is the
//! difference of consecutive position fields, so accumulating the motions
//! reproduces the trajectory exactly.
//!
//! Shaky sequences add band-passed jitter to every trajectory channel. The
//! shaky counterpart of a stable sequence is built by motion transfer:
//! `syn_t = stb_t + ust_{t-1} - ust_t`, whose stabilizing warp is `-ust_t`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::motion::{GridGeometry, MotionField, MotionWindow};

/// Parameters of a procedural camera trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryConfig {
    /// Number of motions (frames) to generate.
    pub length: usize,
    pub seed: u64,
    /// Highest temporal frequency of the intended motion, cycles/frame.
    pub stable_band: f64,
    /// Sinusoids per smooth channel, 1 to 3.
    pub sinusoids: usize,
    /// Peak translation of the smooth path, pixels.
    pub translation_amplitude: f64,
    /// Peak rotation of the smooth path, radians.
    pub rotation_amplitude: f64,
    /// Peak relative zoom of the smooth path.
    pub zoom_amplitude: f64,
    /// Spatial variation of translation across the frame, 0 = planar scene.
    pub parallax_strength: f64,
    /// Peak shake displacement, pixels. Rotation and zoom shake use the same
    /// displacement measured at the frame corner.
    pub jitter_amplitude: f64,
    /// Shake frequency range `(low, high)`, cycles/frame.
    pub jitter_band: (f64, f64),
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig {
            length: 120,
            seed: 0,
            stable_band: 0.02,
            sinusoids: 3,
            translation_amplitude: 6.0,
            rotation_amplitude: 0.01,
            zoom_amplitude: 0.01,
            parallax_strength: 0.2,
            jitter_amplitude: 8.0,
            jitter_band: (0.08, 0.35),
        }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.length < 2 {
            return bad(format!("trajectory length must be >= 2, got {}", self.length));
        }
        if !(1..=3).contains(&self.sinusoids) {
            return bad(format!("sinusoids must be 1..=3, got {}", self.sinusoids));
        }
        let (lo, hi) = self.jitter_band;
        if !(self.stable_band > 0.0 && self.stable_band < lo && lo < hi && hi <= 0.5) {
            return bad(format!(
                "need 0 < stable_band < jitter_low < jitter_high <= 0.5, got {} / ({lo}, {hi})",
                self.stable_band
            ));
        }
        for (name, v) in [
            ("translation_amplitude", self.translation_amplitude),
            ("rotation_amplitude", self.rotation_amplitude),
            ("zoom_amplitude", self.zoom_amplitude),
            ("parallax_strength", self.parallax_strength),
            ("jitter_amplitude", self.jitter_amplitude),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        Ok(())
    }

    /// Additionally requires enough frames for at least one training sample
    /// with window size `r`.
    pub fn validate_for_window(&self, r: usize) -> Result<()> {
        self.validate()?;
        if self.length < r + 1 {
            return Err(Error::Config(format!(
                "trajectory length {} is shorter than r + 1 = {}",
                self.length,
                r + 1
            )));
        }
        Ok(())
    }
}

/// One smooth component `amplitude · sin(2π·frequency·t + phase)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl Sinusoid {
    pub fn at(&self, t: f64) -> f64 {
        self.amplitude * (2.0 * PI * self.frequency * t + self.phase).sin()
    }
}

/// Index of each global trajectory channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Channel {
    TranslationX = 0,
    TranslationY = 1,
    Rotation = 2,
    Zoom = 3,
}

const CHANNELS: usize = 4;

/// Smooth trajectory drawn from a config seed.
#[derive(Clone, Debug)]
pub struct SmoothTrajectory {
    pub channels: [Vec<Sinusoid>; CHANNELS],
    /// `(amplitude, fx, fy, phase)` terms of the parallax modulation.
    parallax_terms: Vec<(f64, f64, f64, f64)>,
    parallax_strength: f64,
}

impl SmoothTrajectory {
    pub fn from_config(cfg: &TrajectoryConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let amplitudes = [
            cfg.translation_amplitude,
            cfg.translation_amplitude,
            cfg.rotation_amplitude,
            cfg.zoom_amplitude,
        ];
        let channels = amplitudes.map(|amp| {
            let draws: Vec<(f64, f64, f64)> = (0..cfg.sinusoids)
                .map(|_| {
                    (
                        rng.random_range(0.2..1.0),
                        rng.random_range(0.2..0.8) * cfg.stable_band,
                        rng.random_range(0.0..2.0 * PI),
                    )
                })
                .collect();
            let total: f64 = draws.iter().map(|d| d.0).sum();
            draws
                .into_iter()
                .map(|(w, frequency, phase)| Sinusoid {
                    amplitude: amp * w / total,
                    frequency,
                    phase,
                })
                .collect()
        });
        let raw: Vec<(f64, f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.random_range(0.2..1.0),
                    rng.random_range(0.0..1.5),
                    rng.random_range(0.0..1.5),
                    rng.random_range(0.0..2.0 * PI),
                )
            })
            .collect();
        let total: f64 = raw.iter().map(|t| t.0).sum();
        let parallax_terms = raw.into_iter().map(|(a, fx, fy, ph)| (a / total, fx, fy, ph)).collect();
        SmoothTrajectory {
            channels,
            parallax_terms,
            parallax_strength: cfg.parallax_strength,
        }
    }

    pub fn value(&self, channel: Channel, t: f64) -> f64 {
        self.channels[channel as usize].iter().map(|s| s.at(t)).sum()
    }

    /// Depth-like modulation in `[-1, 1]` at normalized frame position.
    fn parallax(&self, u: f64, v: f64) -> f64 {
        self.parallax_terms
            .iter()
            .map(|&(a, fx, fy, ph)| a * (2.0 * PI * (fx * u + fy * v) + ph).cos())
            .sum()
    }
}

/// Pose parameters of one frame.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Pose {
    tx: f64,
    ty: f64,
    theta: f64,
    zoom: f64,
}

/// Per-cell geometry reused across all frames of a sequence.
struct CellFrame {
    /// `(x - cx, y - cy)` for every cell center.
    offsets: Vec<(f64, f64)>,
    /// Translation multiplier `1 + λ·m(q)`.
    depth: Vec<f64>,
}

impl CellFrame {
    fn new(geometry: &GridGeometry, traj: &SmoothTrajectory) -> Self {
        let (cx, cy) = geometry.frame_center();
        let mut offsets = Vec::with_capacity(geometry.cell_count());
        let mut depth = Vec::with_capacity(geometry.cell_count());
        for iy in 0..geometry.grid_height {
            for ix in 0..geometry.grid_width {
                let (x, y) = geometry.cell_center(ix, iy);
                offsets.push((x - cx, y - cy));
                let m = traj.parallax(x / geometry.frame_width as f64, y / geometry.frame_height as f64);
                depth.push(1.0 + traj.parallax_strength * m);
            }
        }
        CellFrame { offsets, depth }
    }

    /// Position field `T(q) - q` of a pose, in f64.
    fn position(&self, pose: &Pose) -> Vec<f64> {
        let (sin, cos) = pose.theta.sin_cos();
        let k = 1.0 + pose.zoom;
        let mut out = Vec::with_capacity(2 * self.offsets.len());
        for (&(ox, oy), &d) in self.offsets.iter().zip(&self.depth) {
            out.push(k * (cos * ox - sin * oy) - ox + d * pose.tx);
            out.push(k * (sin * ox + cos * oy) - oy + d * pose.ty);
        }
        out
    }
}

fn motions_from_poses(geometry: GridGeometry, traj: &SmoothTrajectory, poses: &[Pose]) -> Result<Vec<MotionField>> {
    let cells = CellFrame::new(&geometry, traj);
    let mut prev = cells.position(&poses[0]);
    let mut out = Vec::with_capacity(poses.len() - 1);
    for pose in &poses[1..] {
        let next = cells.position(pose);
        let data = next.iter().zip(&prev).map(|(b, a)| (b - a) as f32).collect();
        out.push(MotionField::new(geometry, data)?);
        prev = next;
    }
    Ok(out)
}

fn smooth_poses(cfg: &TrajectoryConfig, traj: &SmoothTrajectory) -> Vec<Pose> {
    (0..=cfg.length)
        .map(|t| {
            let t = t as f64;
            Pose {
                tx: traj.value(Channel::TranslationX, t),
                ty: traj.value(Channel::TranslationY, t),
                theta: traj.value(Channel::Rotation, t),
                zoom: traj.value(Channel::Zoom, t),
            }
        })
        .collect()
}

/// Smooth, intentional camera motion: one field per frame.
pub fn gen_stable_motion(cfg: &TrajectoryConfig, geometry: GridGeometry) -> Result<Vec<MotionField>> {
    cfg.validate()?;
    let traj = SmoothTrajectory::from_config(cfg);
    motions_from_poses(geometry, &traj, &smooth_poses(cfg, &traj))
}

/// The smooth motion of [`gen_stable_motion`] plus band-passed shake on every
/// trajectory channel.
pub fn gen_unstable_motion(cfg: &TrajectoryConfig, geometry: GridGeometry) -> Result<Vec<MotionField>> {
    cfg.validate()?;
    let traj = SmoothTrajectory::from_config(cfg);
    let mut poses = smooth_poses(cfg, &traj);
    let jitter = jitter_channels(cfg, &geometry);
    for (t, pose) in poses.iter_mut().enumerate() {
        pose.tx += jitter[0][t];
        pose.ty += jitter[1][t];
        pose.theta += jitter[2][t];
        pose.zoom += jitter[3][t];
    }
    motions_from_poses(geometry, &traj, &poses)
}

/// Band-passed noise per channel, `length + 1` samples each, scaled so each
/// channel's peak equals the configured amplitude in its own units.
fn jitter_channels(cfg: &TrajectoryConfig, geometry: &GridGeometry) -> [Vec<f64>; CHANNELS] {
    let n = cfg.length + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let (cx, cy) = geometry.frame_center();
    let corner = (cx * cx + cy * cy).sqrt();
    let peaks = [
        cfg.jitter_amplitude,
        cfg.jitter_amplitude,
        cfg.jitter_amplitude / corner,
        cfg.jitter_amplitude / corner,
    ];
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    peaks.map(|peak| {
        let mut buf: Vec<Complex<f64>> = (0..n)
            .map(|_| Complex::new(rng.random_range(-1.0..1.0), 0.0))
            .collect();
        if peak == 0.0 {
            return vec![0.0; n];
        }
        forward.process(&mut buf);
        let (lo, hi) = cfg.jitter_band;
        for (k, c) in buf.iter_mut().enumerate() {
            let f = k.min(n - k) as f64 / n as f64;
            if !(lo..=hi).contains(&f) {
                *c = Complex::new(0.0, 0.0);
            }
        }
        inverse.process(&mut buf);
        let signal: Vec<f64> = buf.iter().map(|c| c.re).collect();
        let max = signal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max == 0.0 {
            return vec![0.0; n];
        }
        signal.iter().map(|v| v * peak / max).collect()
    })
}

/// One step of motion transfer. Returns `(syn_t, label_t)` with
/// `syn_t = stb_t + ust_{t-1} - ust_t` and `label_t = -ust_t`.
pub fn synthesize_pair(
    f_stb_t: &MotionField,
    f_ust_prev: &MotionField,
    f_ust_t: &MotionField,
) -> Result<(MotionField, MotionField)> {
    f_stb_t.geometry().ensure_same(f_ust_prev.geometry())?;
    f_stb_t.geometry().ensure_same(f_ust_t.geometry())?;
    let data = f_stb_t
        .data()
        .iter()
        .zip(f_ust_prev.data())
        .zip(f_ust_t.data())
        .map(|((&s, &p), &c)| (s as f64 + p as f64 - c as f64) as f32)
        .collect();
    Ok((MotionField::new(*f_stb_t.geometry(), data)?, f_ust_t.negate()))
}

/// Motion transfer over whole sequences; `ust_{-1}` is the zero field.
pub fn synthesize_sequence(
    stable: &[MotionField],
    unstable: &[MotionField],
) -> Result<(Vec<MotionField>, Vec<MotionField>)> {
    if stable.len() != unstable.len() || stable.is_empty() {
        return Err(Error::InvalidInput(format!(
            "stable ({}) and unstable ({}) sequences must be non-empty and aligned",
            stable.len(),
            unstable.len()
        )));
    }
    let zero = MotionField::zeros(*stable[0].geometry());
    let mut syn = Vec::with_capacity(stable.len());
    let mut labels = Vec::with_capacity(stable.len());
    for t in 0..stable.len() {
        let prev = if t == 0 { &zero } else { &unstable[t - 1] };
        let (s, l) = synthesize_pair(&stable[t], prev, &unstable[t])?;
        syn.push(s);
        labels.push(l);
    }
    Ok((syn, labels))
}

/// Two adjacent input windows with their ground-truth warp labels.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionPairSample {
    pub window_prev: MotionWindow,
    pub window_curr: MotionWindow,
    pub label_prev: MotionField,
    pub label_curr: MotionField,
}

/// The `capacity` motions ending at index `t`, zero-padded before the start
/// of the sequence.
pub fn window_ending_at(seq: &[MotionField], t: usize, capacity: usize) -> Result<MotionWindow> {
    let geometry = *seq
        .first()
        .ok_or_else(|| Error::InvalidInput("empty sequence".into()))?
        .geometry();
    let start = (t + 1).saturating_sub(capacity);
    MotionWindow::from_fields(geometry, capacity, &seq[start..=t])
}

/// Sample timestamps for a sequence of `len` frames with window size `r`.
pub fn sample_timestamps(len: usize, r: usize) -> Result<std::ops::Range<usize>> {
    if r < 2 {
        return Err(Error::InvalidInput(format!("window size r must be >= 2, got {r}")));
    }
    if len < r + 1 {
        return Err(Error::InvalidInput(format!(
            "sequence of {len} frames is too short for r = {r} (need {})",
            r + 1
        )));
    }
    Ok(r..len)
}

/// Builds the sample for timestamp `t` from an aligned sequence pair.
pub fn sample_at(syn: &[MotionField], labels: &[MotionField], r: usize, t: usize) -> Result<MotionPairSample> {
    Ok(MotionPairSample {
        window_prev: window_ending_at(syn, t - 1, r - 1)?,
        window_curr: window_ending_at(syn, t, r - 1)?,
        label_prev: labels[t - 1].clone(),
        label_curr: labels[t].clone(),
    })
}

/// One sample per timestamp `t` in `[r, len-1]`.
pub fn build_samples(syn: &[MotionField], labels: &[MotionField], r: usize) -> Result<Vec<MotionPairSample>> {
    if syn.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} inputs but {} labels",
            syn.len(),
            labels.len()
        )));
    }
    sample_timestamps(syn.len(), r)?
        .map(|t| sample_at(syn, labels, r, t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::accumulate_path;

    fn geom() -> GridGeometry {
        GridGeometry::new(10, 6, 8).unwrap()
    }

    fn quiet() -> TrajectoryConfig {
        TrajectoryConfig {
            translation_amplitude: 0.0,
            rotation_amplitude: 0.0,
            zoom_amplitude: 0.0,
            parallax_strength: 0.0,
            jitter_amplitude: 0.0,
            ..TrajectoryConfig::default()
        }
    }

    /// Naive DFT power of a real signal at bins `0..=n/2`.
    fn power_spectrum(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, v) in x.iter().enumerate() {
                    let a = -2.0 * PI * (k * t) as f64 / n as f64;
                    re += v * a.cos();
                    im += v * a.sin();
                }
                re * re + im * im
            })
            .collect()
    }

    fn mean_x_path(motions: &[MotionField]) -> Vec<f64> {
        accumulate_path(motions)
            .unwrap()
            .mean_translation()
            .iter()
            .map(|p| p[0])
            .collect()
    }

    #[test]
    fn config_validation() {
        assert!(TrajectoryConfig::default().validate().is_ok());
        let mut c = TrajectoryConfig::default();
        c.stable_band = 0.1;
        assert!(c.validate().is_err());
        let mut c = TrajectoryConfig::default();
        c.jitter_amplitude = -1.0;
        assert!(c.validate().is_err());
        let c = TrajectoryConfig {
            length: 10,
            ..TrajectoryConfig::default()
        };
        assert!(c.validate_for_window(15).is_err());
        assert!(gen_stable_motion(&TrajectoryConfig { sinusoids: 0, ..quiet() }, geom()).is_err());
    }

    #[test]
    fn zero_amplitudes_give_zero_sequence() {
        let m = gen_stable_motion(&quiet(), geom()).unwrap();
        assert_eq!(m.len(), 120);
        assert!(m.iter().all(MotionField::is_zero));
    }

    #[test]
    fn single_sinusoid_translation_traces_first_difference() {
        let cfg = TrajectoryConfig {
            sinusoids: 1,
            translation_amplitude: 5.0,
            seed: 7,
            ..quiet()
        };
        let traj = SmoothTrajectory::from_config(&cfg);
        let s = traj.channels[0][0];
        assert!((s.amplitude - 5.0).abs() < 1e-12);
        let m = gen_stable_motion(&cfg, geom()).unwrap();
        for (t, f) in m.iter().enumerate() {
            let expect = s.at(t as f64 + 1.0) - s.at(t as f64);
            assert!((f.mean()[0] - expect).abs() < 1e-5, "frame {t}");
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let cfg = TrajectoryConfig {
            seed: 42,
            ..TrajectoryConfig::default()
        };
        assert_eq!(gen_stable_motion(&cfg, geom()).unwrap(), gen_stable_motion(&cfg, geom()).unwrap());
        assert_eq!(
            gen_unstable_motion(&cfg, geom()).unwrap(),
            gen_unstable_motion(&cfg, geom()).unwrap()
        );
        let other = TrajectoryConfig { seed: 43, ..cfg.clone() };
        assert_ne!(gen_stable_motion(&cfg, geom()).unwrap(), gen_stable_motion(&other, geom()).unwrap());
    }

    #[test]
    fn zero_jitter_degenerates_to_stable() {
        let cfg = TrajectoryConfig {
            jitter_amplitude: 0.0,
            seed: 3,
            ..TrajectoryConfig::default()
        };
        assert_eq!(gen_unstable_motion(&cfg, geom()).unwrap(), gen_stable_motion(&cfg, geom()).unwrap());
    }

    #[test]
    fn jitter_energy_sits_in_band() {
        let cfg = TrajectoryConfig {
            length: 256,
            seed: 11,
            translation_amplitude: 0.5,
            jitter_amplitude: 10.0,
            ..TrajectoryConfig::default()
        };
        let path = mean_x_path(&gen_unstable_motion(&cfg, geom()).unwrap());
        let p = power_spectrum(&path);
        let n = path.len() as f64;
        let (lo, hi) = cfg.jitter_band;
        let total: f64 = p[1..].iter().sum();
        let inside: f64 = p
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(k, _)| (lo..=hi).contains(&(*k as f64 / n)))
            .map(|(_, v)| v)
            .sum();
        assert!(inside / total >= 0.6, "in-band fraction {}", inside / total);
    }

    #[test]
    fn stable_path_is_band_limited() {
        // Hann-windowed periodogram over a long run so the measurement is not
        // dominated by leakage of non-integer-bin sinusoids: at 120 frames
        // the whole stable band spans barely two DFT bins.
        for seed in 0..5 {
            let cfg = TrajectoryConfig {
                seed,
                length: 1024,
                ..TrajectoryConfig::default()
            };
            let path = mean_x_path(&gen_stable_motion(&cfg, geom()).unwrap());
            let n = path.len();
            let mean = path.iter().sum::<f64>() / n as f64;
            let windowed: Vec<f64> = path
                .iter()
                .enumerate()
                .map(|(t, v)| (v - mean) * 0.5 * (1.0 - (2.0 * PI * t as f64 / (n - 1) as f64).cos()))
                .collect();
            let p = power_spectrum(&windowed);
            let total: f64 = p[1..].iter().sum();
            let above: f64 = p
                .iter()
                .enumerate()
                .filter(|(k, _)| *k as f64 / n as f64 > cfg.stable_band)
                .map(|(_, v)| v)
                .sum();
            assert!(above / total < 0.05, "seed {seed}: {}", above / total);
        }
    }

    #[test]
    fn synthesize_pair_arithmetic() {
        let g = geom();
        let u = |x: f32| MotionField::uniform(g, x, 0.0).unwrap();
        let (syn, label) = synthesize_pair(&u(1.0), &u(2.0), &u(3.0)).unwrap();
        assert!(syn.is_zero());
        assert_eq!(label, u(-3.0));
        let z = MotionField::zeros(g);
        let (syn, label) = synthesize_pair(&z, &z, &z).unwrap();
        assert!(syn.is_zero() && label.is_zero());
        let other = MotionField::zeros(GridGeometry::new(4, 4, 8).unwrap());
        assert!(synthesize_pair(&z, &other, &z).is_err());
    }

    #[test]
    fn synthesized_sequences_satisfy_transfer_identities() {
        let g = geom();
        let stb = gen_stable_motion(&TrajectoryConfig { seed: 1, ..Default::default() }, g).unwrap();
        let ust = gen_unstable_motion(&TrajectoryConfig { seed: 2, ..Default::default() }, g).unwrap();
        let (syn, labels) = synthesize_sequence(&stb, &ust).unwrap();
        for t in 1..syn.len() {
            // ust_t + syn_t == stb_t + ust_{t-1}, both sides computed independently.
            for i in 0..g.value_count() {
                let lhs = ust[t].data()[i] as f64 + syn[t].data()[i] as f64;
                let rhs = stb[t].data()[i] as f64 + ust[t - 1].data()[i] as f64;
                assert!((lhs - rhs).abs() <= 1e-5 * (1.0 + rhs.abs()));
                // syn_t - stb_t == label_t - label_{t-1}
                let a = syn[t].data()[i] as f64 - stb[t].data()[i] as f64;
                let b = labels[t].data()[i] as f64 - labels[t - 1].data()[i] as f64;
                assert!((a - b).abs() <= 1e-5 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn build_samples_counts_and_overlap() {
        let g = geom();
        let r = 5;
        let seq: Vec<_> = (0..12).map(|i| MotionField::uniform(g, i as f32, 0.0).unwrap()).collect();
        let labels: Vec<_> = seq.iter().map(MotionField::negate).collect();
        assert_eq!(build_samples(&seq[..r + 1], &labels[..r + 1], r).unwrap().len(), 1);
        assert!(build_samples(&seq[..r], &labels[..r], r).is_err());
        for len in r + 1..=12 {
            // Enumeration oracle: count t in [r, len-1].
            let expect = (0..len).filter(|&t| t >= r).count();
            assert_eq!(build_samples(&seq[..len], &labels[..len], r).unwrap().len(), expect);
        }
        let samples = build_samples(&seq, &labels, r).unwrap();
        for s in &samples {
            let prev: Vec<_> = s.window_prev.entries().collect();
            let curr: Vec<_> = s.window_curr.entries().collect();
            assert_eq!(prev[1..], curr[..r - 2]);
            assert_eq!(s.window_prev.pushed(curr[r - 2].clone()).unwrap(), s.window_curr);
        }
        for pair in samples.windows(2) {
            let a: Vec<_> = pair[0].window_curr.entries().collect();
            let b: Vec<_> = pair[1].window_curr.entries().collect();
            let shared = a.iter().filter(|f| b.contains(f)).count();
            assert_eq!(shared, r - 2);
        }
        assert_eq!(samples[0].label_curr, labels[r]);
        assert_eq!(samples[0].label_prev, labels[r - 1]);
        assert_eq!(samples[0].window_curr.newest(), &seq[r]);
    }

    #[test]
    fn windows_pad_with_zeros_at_sequence_start() {
        let g = geom();
        let seq: Vec<_> = (1..4).map(|i| MotionField::uniform(g, i as f32, 0.0).unwrap()).collect();
        let w = window_ending_at(&seq, 1, 4).unwrap();
        let entries: Vec<_> = w.entries().collect();
        assert!(entries[0].is_zero() && entries[1].is_zero());
        assert_eq!(entries[2], &seq[0]);
        assert_eq!(entries[3], &seq[1]);
    }
}
