use steadypath_core::adam::AdamConfig;
use steadypath_core::dataset::{Dataset, DatasetSpec};
use steadypath_core::engine::{stabilize_stream, Engine, StreamPaths};
use steadypath_core::eval::evaluate;
use steadypath_core::mseq;
use steadypath_core::net::{load_checkpoint, save_checkpoint, SmootherConfig, SmootherParams};
use steadypath_core::synth::{gen_unstable_motion, TrajectoryConfig};
use steadypath_core::train::{train, TrainingConfig};
use steadypath_core::GridGeometry;

fn geometry() -> GridGeometry {
    GridGeometry::with_frame(96, 64, 12, 8, 8).unwrap()
}

fn spec() -> DatasetSpec {
    DatasetSpec {
        geometry: geometry(),
        r: 5,
        sequences: 3,
        trajectory: TrajectoryConfig { length: 40, ..Default::default() },
        seed: 11,
    }
}

fn config() -> SmootherConfig {
    SmootherConfig { stage_channels: [4, 6, 8, 12], ..SmootherConfig::small(geometry(), 5) }
}

fn trained(data: &Dataset) -> (SmootherParams<f32>, Vec<f64>) {
    let cfg = TrainingConfig {
        iterations: 8,
        batch_size: 4,
        seed: 2,
        adam: AdamConfig { learning_rate: 1e-3, ..Default::default() },
        ..Default::default()
    };
    train(data, SmootherParams::init(&config(), 2).unwrap(), &cfg, |_, _| {}).unwrap()
}

#[test]
fn dataset_survives_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = Dataset::synthesize(&spec()).unwrap();
    data.write(dir.path()).unwrap();
    let back = Dataset::read(dir.path()).unwrap();
    assert_eq!(back, data);
    assert_eq!(back.len(), 3 * (40 - 5));
}

#[test]
fn training_is_reproducible_and_moves_the_loss() {
    let data = Dataset::synthesize(&spec()).unwrap();
    let (a, ha) = trained(&data);
    let (b, hb) = trained(&data);
    assert_eq!(ha, hb);
    assert_eq!(a.tensors(), b.tensors());
    assert_eq!(ha.len(), 8);
    assert!(ha.iter().all(|l| l.is_finite() && *l > 0.0));
}

#[test]
fn checkpoint_stream_and_report_fit_together() {
    let dir = tempfile::tempdir().unwrap();
    let data = Dataset::synthesize(&spec()).unwrap();
    let (params, _) = trained(&data);
    let ckpt = dir.path().join("m.npsm");
    save_checkpoint(&params, &ckpt).unwrap();
    assert_eq!(load_checkpoint(&ckpt).unwrap().tensors(), params.tensors());

    let motions = gen_unstable_motion(&TrajectoryConfig { length: 64, seed: 5, ..Default::default() }, geometry()).unwrap();
    let input = dir.path().join("in.mseq");
    mseq::write_file(&input, geometry(), &motions).unwrap();
    let (warps_out, timing) = (dir.path().join("w.mseq"), dir.path().join("timing.txt"));
    let paths = StreamPaths {
        motions: &input,
        checkpoint: &ckpt,
        warps_out: &warps_out,
        frames: None,
        render_dir: None,
        report: Some(&timing),
    };
    let summary = stabilize_stream(&paths).unwrap();
    assert_eq!(summary.frames, 64);
    let (_, warps) = mseq::read_file(&warps_out).unwrap();

    let mut engine = Engine::new(params).unwrap();
    for (m, w) in motions.iter().zip(&warps) {
        assert_eq!(&engine.push_motion(m).unwrap(), w);
    }

    let report = evaluate(&motions, &warps).unwrap();
    assert_eq!(report.residuals.len(), 64);
    assert!(report.cropping.value > 0.0 && report.cropping.value <= 1.0);
    assert!(report.distortion.value > 0.0 && report.distortion.value <= 1.0);
    let text = report.to_text();
    assert!(text.starts_with("format=steadypath-eval\n"));
    let timing = std::fs::read_to_string(&timing).unwrap();
    assert!(timing.lines().any(|l| l.starts_with("smooth 64 ")));
}

#[test]
fn engine_state_is_constant_over_long_streams() {
    let cfg = SmootherConfig::tiny();
    let mut engine = Engine::new(SmootherParams::init(&cfg, 0).unwrap()).unwrap();
    let motions = gen_unstable_motion(&TrajectoryConfig { length: 50, seed: 1, ..Default::default() }, cfg.geometry).unwrap();
    let mut sizes = Vec::new();
    for t in 0..2_000 {
        engine.push_motion(&motions[t % motions.len()]).unwrap();
        if t % 500 == 0 {
            sizes.push(engine.state_bytes());
        }
    }
    assert!(sizes.windows(2).all(|w| w[0] == w[1]), "{sizes:?}");
    assert_eq!(engine.window().len(), cfg.r - 1);
}
