//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Criterion 5 trains a small network for real (roughly ten minutes on one
//! core); criterion 8 reuses that model.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use steadypath_core::adam::{AdamConfig, AdamState};
use steadypath_core::dataset::{Dataset, DatasetSpec};
use steadypath_core::engine::Engine;
use steadypath_core::eval::{distortion_value, evaluate, fit_homography, frame_correspondences, stability_score, Homography};
use steadypath_core::loss::{sc, sc_parts, sp, MeshGrid};
use steadypath_core::net::{ParamTensor, SmootherConfig, SmootherParams};
use steadypath_core::synth::{gen_unstable_motion, synthesize_pair, window_ending_at, TrajectoryConfig};
use steadypath_core::train::{endpoint_error, grad_check, train, GradCheckOptions, TrainingConfig};
use steadypath_core::{GridGeometry, MotionField};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    check(elapsed < limit, format!("{detail}; {:.1}s (limit {}s)", elapsed.as_secs_f64(), limit.as_secs()))
}

fn synthesis_identity() -> Outcome {
    let start = Instant::now();
    let g = GridGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let mut field = || MotionField::from_fn(g, |_, _| [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)]).unwrap();
        let (stb, prev, curr) = (field(), field(), field());
        let (syn, label) = synthesize_pair(&stb, &prev, &curr).unwrap();
        for i in 0..g.value_count() {
            // F_syn + F_ust,t = F_stb + F_ust,t-1
            let lhs = syn.data()[i] as f64 + curr.data()[i] as f64;
            let rhs = stb.data()[i] as f64 + prev.data()[i] as f64;
            let scale = [syn.data()[i], curr.data()[i], stb.data()[i], prev.data()[i]]
                .iter()
                .fold(1.0f64, |m, v| m.max(v.abs() as f64));
            worst = worst.max((lhs - rhs).abs() / scale);
            if label.data()[i] != -curr.data()[i] {
                return Err(format!("label differs at {i}"));
            }
        }
    }
    let detail = format!("worst relative mismatch {worst:.2e}");
    if worst > 1e-6 {
        return Err(detail);
    }
    within(start.elapsed(), Duration::from_secs(5), detail)
}

fn warp_from(m: &MeshGrid, f: impl Fn(f64, f64) -> (f64, f64)) -> Vec<f64> {
    let mut out = Vec::new();
    for row in 0..m.rows {
        for col in 0..m.cols {
            let (x, y) = (col as f64 * m.spacing, row as f64 * m.spacing);
            let (vx, vy) = f(x, y);
            out.push(vx - x);
            out.push(vy - y);
        }
    }
    out
}

fn loss_cases() -> Outcome {
    let start = Instant::now();
    let m = MeshGrid { cols: 12, rows: 9, spacing: 8.0 };
    let zero = vec![0.0; 2 * 12 * 9];
    let (sc0, sp0) = (sc(&m, &zero).unwrap(), sp(&m, &zero, false).unwrap());
    let sp2 = sp(&m, &warp_from(&m, |x, y| (2.0 * x, 2.0 * y)), false).unwrap();
    let (intra, _) = sc_parts(&m, &warp_from(&m, |x, y| (x + 0.5 * y, y))).unwrap();
    let (s, c) = 0.3f64.sin_cos();
    let rot = warp_from(&m, |x, y| (c * x - s * y + 5.0, s * x + c * y - 2.0));
    let (sc_rot, sp_rot) = (sc(&m, &rot).unwrap(), sp(&m, &rot, false).unwrap());
    let ok = sc0 == 0.0
        && sp0 == 0.0
        && (sp2 - 1.0).abs() <= 1e-6
        && (intra - 32.0).abs() <= 1e-4
        && sc_rot.abs() <= 1e-6
        && sp_rot.abs() <= 1e-6;
    let detail = format!("zero SC={sc0} SP={sp0}; doubling SP={sp2:.9}; shear intra={intra:.6}; rotation SC={sc_rot:.1e} SP={sp_rot:.1e}");
    if !ok {
        return Err(detail);
    }
    within(start.elapsed(), Duration::from_secs(1), detail)
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let r = grad_check(&SmootherConfig::tiny(), 0, &GradCheckOptions::default()).map_err(|e| e.to_string())?;
    let detail = r.summary();
    if r.checked < 200 || r.max_relative_error > 1e-4 {
        return Err(detail);
    }
    within(start.elapsed(), Duration::from_secs(120), detail)
}

fn scalar(v: f64) -> Vec<ParamTensor<f64>> {
    vec![ParamTensor { name: "w".into(), shape: vec![1], data: vec![v] }]
}

fn optimizer() -> Outcome {
    // First step: m̂ = g and v̂ = g², so θ moves by lr·g/(|g|+ε).
    let cfg = AdamConfig::default();
    let mut first_err = 0.0f64;
    for g in [0.3, -7.0, 1e-3, 42.0] {
        let mut p = scalar(1.5);
        AdamState::new(cfg, &p).unwrap().step(&mut p, &[Some(vec![g])]).unwrap();
        let expect = 1.5 - cfg.learning_rate * g / (g.abs() + cfg.epsilon);
        first_err = first_err.max((p[0].data[0] - expect).abs());
    }

    let mut p = scalar(1.5);
    let mut adam = AdamState::new(cfg, &p).unwrap();
    adam.step(&mut p, &[Some(vec![0.0])]).unwrap();
    let noop = p[0].data[0] == 1.5;

    let cfg2 = AdamConfig { learning_rate: 0.05, beta1: 0.8, beta2: 0.9, epsilon: 1e-6 };
    let mut p = scalar(0.25);
    let mut adam = AdamState::new(cfg2, &p).unwrap();
    let (mut theta, mut m, mut v) = (0.25f64, 0.0f64, 0.0f64);
    for (t, g) in [(1, 0.7f64), (2, -0.2)] {
        adam.step(&mut p, &[Some(vec![g])]).unwrap();
        m = 0.8 * m + 0.2 * g;
        v = 0.9 * v + 0.1 * g * g;
        let mh = m / (1.0 - 0.8f64.powi(t));
        let vh = v / (1.0 - 0.9f64.powi(t));
        theta -= 0.05 * mh / (vh.sqrt() + 1e-6);
    }
    let two_err = (p[0].data[0] - theta).abs();
    check(
        first_err <= 1e-9 && noop && two_err <= 1e-12,
        format!("first-step error {first_err:.1e}; zero-gradient no-op {noop}; two-step error {two_err:.1e}"),
    )
}

const HELD_OUT_SEED: u64 = 0x005e_ed0f_4e1d;

fn training_smoke(model: &mut Option<SmootherParams<f32>>) -> Outcome {
    let start = Instant::now();
    let g = GridGeometry::default();
    let r = 15;
    let data = Dataset::synthesize(&DatasetSpec { geometry: g, r, sequences: 64, seed: 0, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let held = Dataset::synthesize(&DatasetSpec { geometry: g, r, sequences: 4, seed: HELD_OUT_SEED, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let cfg = TrainingConfig {
        iterations: 1000,
        batch_size: 16,
        seed: 0,
        adam: AdamConfig { learning_rate: 1e-3, ..Default::default() },
        ..Default::default()
    };
    let init = SmootherParams::init(&SmootherConfig::small(g, r), 0).map_err(|e| e.to_string())?;
    let (params, history) = train(&data, init, &cfg, |_, _| {}).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (initial, last) = (mean(&history[..20]), mean(&history[history.len() - 100..]));
    let indices: Vec<usize> = (0..held.len()).step_by(7).collect();
    let epe = endpoint_error(&params, &held, &indices).map_err(|e| e.to_string())?;
    let ratio = last / initial;
    let gain = 1.0 - epe.model / epe.zero_baseline;
    *model = Some(params);
    let detail = format!(
        "{} samples; loss {initial:.3} -> {last:.3} (ratio {ratio:.3}); held-out EPE {:.3} vs zero {:.3} ({:.0}% lower)",
        data.len(),
        epe.model,
        epe.zero_baseline,
        100.0 * gain
    );
    if ratio > 0.5 || gain < 0.3 {
        return Err(detail);
    }
    within(elapsed, Duration::from_secs(30 * 60), detail)
}

fn random_stream(g: GridGeometry, n: usize, seed: u64) -> Vec<MotionField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| MotionField::from_fn(g, |_, _| [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)]).unwrap())
        .collect()
}

fn online_contract() -> Outcome {
    let cfg = SmootherConfig::tiny();
    let params = SmootherParams::<f32>::init(&cfg, 3).unwrap();
    let base = random_stream(cfg.geometry, 40, 1);
    let run = |s: &[MotionField]| {
        let mut e = Engine::new(params.clone()).unwrap();
        s.iter().map(|m| e.push_motion(m).unwrap()).collect::<Vec<_>>()
    };
    let reference = run(&base);
    for cut in [0usize, 5, 13, 27, 38] {
        let mut altered = base.clone();
        altered[cut + 1..].clone_from_slice(&random_stream(cfg.geometry, 40 - cut - 1, 100 + cut as u64));
        if run(&altered)[..=cut] != reference[..=cut] {
            return Err(format!("output through frame {cut} changed with later inputs"));
        }
    }
    for (t, w) in reference.iter().enumerate() {
        let batch = params.forward(&window_ending_at(&base, t, cfg.r - 1).unwrap()).unwrap();
        if batch.data() != w.data() {
            return Err(format!("streaming and batched outputs differ at frame {t}"));
        }
    }
    let mut e = Engine::new(params.clone()).unwrap();
    let mut sizes = Vec::new();
    for t in 0..10_000 {
        e.push_motion(&base[t % base.len()]).unwrap();
        if t % 1000 == 999 {
            sizes.push(e.state_bytes());
        }
    }
    check(
        sizes.windows(2).all(|w| w[0] == w[1]),
        format!("prefix agreement at 5 cut points; streaming == batched over 40 frames; state {} bytes at every 1000th of 10000 frames", sizes[0]),
    )
}

fn sinusoid_motions(g: GridGeometry, n: usize, bin: f64) -> Vec<MotionField> {
    let path = |t: usize, amp: f64| amp * (2.0 * std::f64::consts::PI * bin * t as f64 / n as f64).sin();
    let (cx, cy) = g.frame_center();
    (0..n)
        .map(|t| {
            let prev = if t == 0 { (0.0, 0.0) } else { (path(t - 1, 5.0), path(t - 1, 0.01)) };
            let (d, dr) = (path(t, 5.0) - prev.0, path(t, 0.01) - prev.1);
            let (s, c) = dr.sin_cos();
            MotionField::from_fn(g, |ix, iy| {
                let (x, y) = g.cell_center(ix, iy);
                let (x, y) = (x - cx, y - cy);
                [(c * x - s * y - x + d) as f32, (s * x + c * y - y + d) as f32]
            })
            .unwrap()
        })
        .collect()
}

fn metrics() -> Outcome {
    let g = GridGeometry::default();
    let inputs = sinusoid_motions(g, 128, 7.0);
    let ident = evaluate(&inputs, &vec![MotionField::zeros(g); 128]).map_err(|e| e.to_string())?;
    let (c, d) = (ident.cropping.value, ident.distortion.value);

    // Output q reads input (x, y / 0.8): the input->output map is diag(1, 0.8).
    let squash = MotionField::from_fn(g, |ix, iy| [0.0, (g.cell_center(ix, iy).1 * 0.25) as f32]).unwrap();
    let mut hs = vec![Homography::identity(); 10];
    hs[4] = fit_homography(&frame_correspondences(&squash)).map_err(|e| e.to_string())?.homography;
    let d_inj = distortion_value(&hs).map_err(|e| e.to_string())?.value;

    let s3 = stability_score(&sinusoid_motions(g, 128, 3.0)).map_err(|e| e.to_string())?.score;
    let s20 = stability_score(&sinusoid_motions(g, 128, 20.0)).map_err(|e| e.to_string())?.score;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut fit_err = 0.0f64;
    for _ in 0..20 {
        let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
        let truth = Homography::new(Matrix3::new(
            u(0.8, 1.2), u(-0.1, 0.1), u(-20.0, 20.0),
            u(-0.1, 0.1), u(0.8, 1.2), u(-20.0, 20.0),
            u(-2e-4, 2e-4), u(-2e-4, 2e-4), 1.0,
        ))
        .unwrap();
        let pairs: Vec<_> = (0..g.grid_height)
            .flat_map(|iy| (0..g.grid_width).map(move |ix| g.cell_center(ix, iy)))
            .map(|p| (p, truth.apply(p)))
            .collect();
        let fit = fit_homography(&pairs).map_err(|e| e.to_string())?;
        for (a, b) in fit.homography.0.iter().zip(truth.0.iter()) {
            fit_err = fit_err.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    check(
        (c - 1.0).abs() <= 1e-3
            && (d - 1.0).abs() <= 1e-3
            && (d_inj - 0.8).abs() <= 1e-3
            && (s3 - 1.0).abs() <= 1e-3
            && s20 <= 1e-3
            && fit_err <= 1e-6,
        format!("identity C={c:.6} D={d:.6}; injected D={d_inj:.6}; S(bin 3)={s3:.6} S(bin 20)={s20:.2e}; homography fit error {fit_err:.1e}"),
    )
}

fn end_to_end(model: Option<&SmootherParams<f32>>) -> Outcome {
    let params = model.ok_or("no trained model (criterion 5 did not produce one)")?;
    let start = Instant::now();
    let g = params.config().geometry;
    let cfg = TrajectoryConfig { length: 300, seed: HELD_OUT_SEED, ..Default::default() };
    let motions = gen_unstable_motion(&cfg, g).map_err(|e| e.to_string())?;
    let mut engine = Engine::new(params.clone()).map_err(|e| e.to_string())?;
    let warps = motions.iter().map(|m| engine.push_motion(m)).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    let report = evaluate(&motions, &warps).map_err(|e| e.to_string())?;
    let (s_in, s_out, c) = (report.input_stability.score, report.stability.score, report.cropping.value);
    let detail = format!("S {s_in:.3} -> {s_out:.3} (+{:.3}); C={c:.3}; D={:.3}", s_out - s_in, report.distortion.value);
    if s_out - s_in < 0.15 || c < 0.8 {
        return Err(detail);
    }
    within(start.elapsed(), Duration::from_secs(60), detail)
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn pipeline(dir: &Path) -> Result<(), String> {
    let tiny = [
        "--seed", "17", "--set", "frame_width=96", "--set", "frame_height=64", "--set", "grid_width=12",
        "--set", "grid_height=8", "--set", "r=5", "--set", "stage_channels=4,6,8,12", "--set", "sequences=3",
        "--set", "length=40", "--set", "iterations=10", "--set", "batch_size=4",
    ];
    let steps: [&[&str]; 5] = [
        &["synth", "--out", "data"],
        &["train", "--data", "data", "--out", "model.npsm"],
        &["synth", "--stream", "shaky.mseq", "--set", "length=64"],
        &["stabilize", "--motions", "shaky.mseq", "--checkpoint", "model.npsm", "--out", "warps.mseq"],
        &["eval", "--input", "shaky.mseq", "--warps", "warps.mseq", "--out", "report.txt"],
    ];
    for step in steps {
        let mut args = vec![step[0]];
        if step[0] == "synth" || step[0] == "train" {
            args.extend_from_slice(&tiny);
        }
        args.extend_from_slice(&step[1..]);
        let out = Command::new(env!("CARGO_BIN_EXE_steadypath")).current_dir(dir).args(&args).output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{} failed: {}", step[0], String::from_utf8_lossy(&out.stderr).trim()));
        }
    }
    Ok(())
}

fn reproducibility() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path())?;
    pipeline(b.path())?;
    let (fa, fb) = (files(a.path()), files(b.path()));
    if fa != fb {
        return Err(format!("artifact sets differ: {fa:?} vs {fb:?}"));
    }
    let mut compared = 0;
    for f in &fa {
        if f.to_string_lossy().ends_with(".timing.txt") {
            continue;
        }
        if std::fs::read(a.path().join(f)).unwrap() != std::fs::read(b.path().join(f)).unwrap() {
            return Err(format!("{} differs between runs", f.display()));
        }
        compared += 1;
    }
    check(compared >= 10, format!("{compared} artifacts byte-identical across two runs (timing reports excluded)"))
}

fn main() {
    let mut model = None;
    let mut failed = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome| {
        let (status, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n} {status} {name}: {detail}");
    };
    report(1, "synthesis identity", synthesis_identity());
    report(2, "loss analytic cases", loss_cases());
    report(3, "gradient correctness", gradient_check());
    report(4, "optimizer", optimizer());
    report(5, "training smoke", training_smoke(&mut model));
    report(6, "online contract", online_contract());
    report(7, "metrics", metrics());
    report(8, "end-to-end improvement", end_to_end(model.as_ref()));
    report(9, "reproducibility", reproducibility());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
