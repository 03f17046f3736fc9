//! Training loop, endpoint-error evaluation and end-to-end gradient checking.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adam::{AdamConfig, AdamState};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::loss::{self, KinkSignature, LossBreakdown, LossWeights, MeshGrid};
use crate::motion::{MotionField, MotionWindow};
use crate::net::{self, ParamGrads, SmootherConfig, SmootherParams};
use crate::scalar::Scalar;
use crate::synth::MotionPairSample;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub loss: LossWeights,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            loss: LossWeights::default(),
            adam: AdamConfig::default(),
            batch_size: 16,
            iterations: 2000,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        for (name, v) in [("alpha", self.loss.alpha), ("beta", self.loss.beta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

fn check_window(cfg: &SmootherConfig, w: &MotionWindow) -> Result<()> {
    cfg.geometry.ensure_same(w.geometry())?;
    if w.capacity() != cfg.r - 1 {
        return Err(Error::InvalidInput(format!(
            "window holds {} fields, network expects r - 1 = {}",
            w.capacity(),
            cfg.r - 1
        )));
    }
    Ok(())
}

fn field_values<T: Scalar>(f: &MotionField) -> Vec<T> {
    f.data().iter().map(|&v| T::from_f32_exact(v)).collect()
}

struct SampleEval<T> {
    loss: loss::LossWithGrad<T>,
    traces: [net::Trace<T>; 2],
}

fn evaluate_sample<T: Scalar>(params: &SmootherParams<T>, s: &MotionPairSample, w: &LossWeights) -> Result<SampleEval<T>> {
    let cfg = params.config();
    check_window(cfg, &s.window_prev)?;
    check_window(cfg, &s.window_curr)?;
    let tp = params.forward_trace(net::stack_window(&s.window_prev))?;
    let tc = params.forward_trace(net::stack_window(&s.window_curr))?;
    let loss = loss::total(
        &MeshGrid::from(&cfg.geometry),
        w,
        &net::planar_to_interleaved(&tp.output),
        &net::planar_to_interleaved(&tc.output),
        &field_values(&s.label_prev),
        &field_values(&s.label_curr),
    )?;
    Ok(SampleEval { loss, traces: [tp, tc] })
}

/// Loss of one sample and its gradient, backpropagated through both forwards.
pub fn sample_gradients<T: Scalar>(
    params: &SmootherParams<T>,
    sample: &MotionPairSample,
    weights: &LossWeights,
) -> Result<(LossBreakdown, ParamGrads<T>)> {
    let e = evaluate_sample(params, sample, weights)?;
    let g = params.config().geometry;
    let (h, w) = (g.grid_height, g.grid_width);
    let [tp, tc] = &e.traces;
    let (mut grads, _) = params.backward(tp, &net::interleaved_to_planar(&e.loss.d_prev, h, w), None)?;
    let (gc, _) = params.backward(tc, &net::interleaved_to_planar(&e.loss.d_curr, h, w), None)?;
    grads.accumulate(&gc);
    Ok((e.loss.value, grads))
}

/// Loss value plus everything that identifies the smooth piece it lies on.
fn sample_loss<T: Scalar>(
    params: &SmootherParams<T>,
    sample: &MotionPairSample,
    weights: &LossWeights,
) -> Result<(f64, (u64, u64, KinkSignature))> {
    let e = evaluate_sample(params, sample, weights)?;
    let [tp, tc] = &e.traces;
    Ok((e.loss.value.total, (tp.activation_pattern(), tc.activation_pattern(), e.loss.kinks)))
}

pub struct Trainer<T> {
    params: SmootherParams<T>,
    optimizer: AdamState<T>,
    config: TrainingConfig,
    rng: ChaCha8Rng,
    history: Vec<f64>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(params: SmootherParams<T>, config: TrainingConfig) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            optimizer: AdamState::new(config.adam, params.tensors())?,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            params,
            config,
            history: Vec::new(),
        })
    }

    pub fn params(&self) -> &SmootherParams<T> {
        &self.params
    }

    pub fn into_params(self) -> SmootherParams<T> {
        self.params
    }

    /// Mean batch loss of every completed iteration.
    pub fn history(&self) -> &[f64] {
        &self.history
    }

    fn check_dataset(&self, data: &Dataset) -> Result<()> {
        let cfg = self.params.config();
        cfg.geometry.ensure_same(&data.geometry)?;
        if data.r != cfg.r {
            return Err(Error::Config(format!("dataset was built for r = {}, network has r = {}", data.r, cfg.r)));
        }
        if data.is_empty() {
            return Err(Error::InvalidInput("dataset has no samples".into()));
        }
        Ok(())
    }

    /// One optimizer step on a batch drawn uniformly with replacement.
    pub fn step(&mut self, data: &Dataset) -> Result<f64> {
        self.check_dataset(data)?;
        let iteration = self.history.len();
        let indices: Vec<usize> = (0..self.config.batch_size)
            .map(|_| self.rng.random_range(0..data.len()))
            .collect();
        let mut total = ParamGrads {
            tensors: vec![None; self.params.tensors().len()],
        };
        let mut loss_sum = 0.0;
        for &i in &indices {
            let (l, g) = sample_gradients(&self.params, &data.sample(i)?, &self.config.loss)?;
            if !l.total.is_finite() {
                return Err(Error::Diverged { iteration, loss: l.total });
            }
            loss_sum += l.total;
            total.accumulate(&g);
        }
        let n = self.config.batch_size as f64;
        total.scale(T::from_f64_lossy(1.0 / n));
        let loss = loss_sum / n;
        self.optimizer.step(self.params.tensors_mut(), &total.tensors)?;
        self.history.push(loss);
        Ok(loss)
    }

    /// Runs the configured number of iterations; `progress` sees each
    /// iteration index and its loss.
    pub fn run(&mut self, data: &Dataset, mut progress: impl FnMut(usize, f64)) -> Result<()> {
        for _ in 0..self.config.iterations {
            let loss = self.step(data)?;
            progress(self.history.len() - 1, loss);
        }
        Ok(())
    }
}

/// Trains `params` on `data`, returning the final weights and loss history.
pub fn train<T: Scalar>(
    data: &Dataset,
    params: SmootherParams<T>,
    config: &TrainingConfig,
    progress: impl FnMut(usize, f64),
) -> Result<(SmootherParams<T>, Vec<f64>)> {
    let mut trainer = Trainer::new(params, config.clone())?;
    trainer.run(data, progress)?;
    let history = trainer.history.clone();
    Ok((trainer.into_params(), history))
}

pub fn format_loss_history(history: &[f64]) -> String {
    let mut out = String::from("iteration loss\n");
    for (i, l) in history.iter().enumerate() {
        let _ = writeln!(out, "{i} {l:e}");
    }
    out
}

pub fn write_loss_history(path: &Path, history: &[f64]) -> Result<()> {
    std::fs::write(path, format_loss_history(history)).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EndpointError {
    /// Mean Euclidean distance between predicted and label warps per cell.
    pub model: f64,
    /// The same for an all-zero prediction.
    pub zero_baseline: f64,
    pub samples: usize,
}

/// Mean endpoint error of `forward(window_curr)` against `label_curr` over
/// the given sample indices.
pub fn endpoint_error<T: Scalar>(params: &SmootherParams<T>, data: &Dataset, indices: &[usize]) -> Result<EndpointError> {
    let (mut model, mut zero, mut cells) = (0.0, 0.0, 0usize);
    for &i in indices {
        let s = data.sample(i)?;
        check_window(params.config(), &s.window_curr)?;
        let out = net::planar_to_interleaved(&params.forward_trace(net::stack_window::<T>(&s.window_curr))?.output);
        for (p, l) in out.chunks_exact(2).zip(s.label_curr.data().chunks_exact(2)) {
            let (lx, ly) = (l[0] as f64, l[1] as f64);
            let (px, py) = (p[0].to_f64_lossless(), p[1].to_f64_lossless());
            model += ((px - lx).powi(2) + (py - ly).powi(2)).sqrt();
            zero += (lx * lx + ly * ly).sqrt();
            cells += 1;
        }
    }
    if cells == 0 {
        return Err(Error::InvalidInput("no samples to evaluate".into()));
    }
    Ok(EndpointError {
        model: model / cells as f64,
        zero_baseline: zero / cells as f64,
        samples: indices.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckOptions {
    /// Parameters to compare, spread round-robin over tensors; probes that
    /// straddle a kink are redrawn.
    pub samples: usize,
    /// Central-difference step.
    pub step: f64,
    /// Use all-zero windows and labels, leaving only SC/SP gradients.
    pub zero_inputs: bool,
    pub weights: LossWeights,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            samples: 256,
            step: 1e-3,
            zero_inputs: false,
            weights: LossWeights::default(),
        }
    }
}

/// Gradients smaller than this are compared absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub parameter_count: usize,
    pub checked: usize,
    /// Probes skipped because `θ ± h` crossed a ReLU or `|·|` kink.
    pub skipped: usize,
    pub max_relative_error: f64,
    pub mean_relative_error: f64,
    /// Tensor and index of the worst probe.
    pub worst: (String, usize),
    pub loss: f64,
}

impl GradCheckReport {
    pub fn summary(&self) -> String {
        format!(
            "max_relative_error={:.3e} mean_relative_error={:.3e} checked={} skipped={} parameters={} worst={}[{}]",
            self.max_relative_error,
            self.mean_relative_error,
            self.checked,
            self.skipped,
            self.parameter_count,
            self.worst.0,
            self.worst.1
        )
    }
}

fn random_field(cfg: &SmootherConfig, rng: &mut ChaCha8Rng, amp: f32) -> Result<MotionField> {
    MotionField::from_fn(cfg.geometry, |_, _| [rng.random_range(-amp..amp), rng.random_range(-amp..amp)])
}

/// Compares analytic parameter gradients of the total loss against central
/// differences in f64.
pub fn grad_check(cfg: &SmootherConfig, seed: u64, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut params = SmootherParams::<f64>::init(cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6772_6164);
    // Nonzero biases and head so every path, including the zero-input case,
    // carries signal.
    for t in params.tensors_mut() {
        if t.name.ends_with(".bias") {
            t.data.iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
        } else if t.name == "head.weight" {
            t.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        }
    }
    let sample = if opts.zero_inputs {
        let z = MotionField::zeros(cfg.geometry);
        let w = MotionWindow::new(cfg.geometry, cfg.r - 1)?;
        MotionPairSample {
            window_prev: w.clone(),
            window_curr: w,
            label_prev: z.clone(),
            label_curr: z,
        }
    } else {
        let seq: Vec<MotionField> = (0..cfg.r).map(|_| random_field(cfg, &mut rng, 4.0)).collect::<Result<_>>()?;
        MotionPairSample {
            window_prev: MotionWindow::from_fields(cfg.geometry, cfg.r - 1, &seq[..cfg.r - 1])?,
            window_curr: MotionWindow::from_fields(cfg.geometry, cfg.r - 1, &seq[1..])?,
            label_prev: random_field(cfg, &mut rng, 2.0)?,
            label_curr: random_field(cfg, &mut rng, 2.0)?,
        }
    };
    let (value, grads) = sample_gradients(&params, &sample, &opts.weights)?;
    let (_, base_sig) = sample_loss(&params, &sample, &opts.weights)?;

    let n_tensors = params.tensors().len();
    let mut probe = params.clone();
    let (mut checked, mut skipped, mut max_err, mut sum_err) = (0, 0, 0.0f64, 0.0);
    let mut worst = (String::new(), 0);
    let mut k = 0;
    while checked < opts.samples && k < 16 * opts.samples {
        let ti = k % n_tensors;
        let len = params.tensors()[ti].data.len();
        let j = rng.random_range(0..len);
        let orig = params.tensors()[ti].data[j];
        let mut eval = |d: f64| -> Result<(f64, (u64, u64, KinkSignature))> {
            probe.tensors_mut()[ti].data[j] = orig + d;
            let r = sample_loss(&probe, &sample, &opts.weights);
            probe.tensors_mut()[ti].data[j] = orig;
            r
        };
        k += 1;
        let (plus, sp) = eval(opts.step)?;
        let (minus, sm) = eval(-opts.step)?;
        if sp != base_sig || sm != base_sig {
            skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * opts.step);
        let analytic = grads.tensors[ti].as_ref().map_or(0.0, |g| g[j]);
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        checked += 1;
        sum_err += err;
        if err > max_err || worst.0.is_empty() {
            max_err = max_err.max(err);
            worst = (params.tensors()[ti].name.clone(), j);
        }
    }
    Ok(GradCheckReport {
        parameter_count: params.parameter_count(),
        checked,
        skipped,
        max_relative_error: max_err,
        mean_relative_error: if checked > 0 { sum_err / checked as f64 } else { 0.0 },
        worst,
        loss: value.total,
    })
}
