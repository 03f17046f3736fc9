//! Path-smoothing network: a 4-stage encoder-decoder with skip connections
//! and channel attention, mapping `r - 1` stacked motion fields to the warp
//! field of the newest frame.
//!
//! Layer graph (H, W padded up to multiples of 8):
//!
//! ```text
//! input (2(r-1)) -> [input CA] -> pad
//!   enc1: conv3x3+relu, conv3x3+relu           -> skip1 -> down 2x2/2+relu
//!   enc2: ...                                  -> skip2 -> down
//!   enc3: ...                                  -> skip3 -> down
//!   enc4: conv3x3+relu, conv3x3+relu -> [bottleneck CA]
//!   dec3: up2x, conv3x3+relu, concat skip3, conv3x3+relu, conv3x3+relu
//!   dec2, dec1 likewise
//!   head: conv1x1 -> 2 channels -> crop
//! ```

mod checkpoint;
pub mod ops;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, CHECKPOINT_VERSION};
pub use ops::Tensor;

use crate::error::{Error, Result};
use crate::motion::{GridGeometry, MotionField, MotionWindow};
use crate::scalar::Scalar;
use ops::{CaCache, CaWeights, ConvShape};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SmootherConfig {
    pub geometry: GridGeometry,
    /// Window size; the network sees the `r - 1` most recent motions.
    pub r: usize,
    pub stage_channels: [usize; 4],
    pub se_reduction: usize,
    pub input_attention: bool,
    pub bottleneck_attention: bool,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        SmootherConfig {
            geometry: GridGeometry::default(),
            r: 15,
            stage_channels: [16, 32, 64, 128],
            se_reduction: 4,
            input_attention: true,
            bottleneck_attention: true,
        }
    }
}

impl SmootherConfig {
    /// Channel widths used for quick CPU training runs.
    pub const SMALL_CHANNELS: [usize; 4] = [8, 16, 32, 64];
    /// Channel widths of the large GPU-scale network.
    pub const LARGE_CHANNELS: [usize; 4] = [64, 128, 256, 512];

    pub fn small(geometry: GridGeometry, r: usize) -> Self {
        SmootherConfig {
            geometry,
            r,
            stage_channels: Self::SMALL_CHANNELS,
            ..Default::default()
        }
    }

    /// Minimal configuration for gradient checks.
    pub fn tiny() -> Self {
        SmootherConfig {
            geometry: GridGeometry::new(16, 16, 8).expect("valid tiny geometry"),
            r: 5,
            stage_channels: [4, 8, 16, 32],
            se_reduction: 4,
            input_attention: true,
            bottleneck_attention: true,
        }
    }

    pub fn input_channels(&self) -> usize {
        2 * (self.r - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r < 2 {
            return Err(Error::Config(format!("r must be >= 2, got {}", self.r)));
        }
        let c = self.stage_channels;
        if c[0] == 0 || !c.windows(2).all(|p| p[0] < p[1]) {
            return Err(Error::Config(format!(
                "stage_channels must be positive and strictly ascending, got {c:?}"
            )));
        }
        if self.se_reduction == 0 {
            return Err(Error::Config("se_reduction must be >= 1".into()));
        }
        Ok(())
    }

    /// Internal spatial size after zero-padding to multiples of 8.
    pub fn padded_dims(&self) -> (usize, usize) {
        let up = |n: usize| n.div_ceil(8) * 8;
        (up(self.geometry.grid_height), up(self.geometry.grid_width))
    }

    fn hidden(&self, c: usize) -> usize {
        (c / self.se_reduction).max(1)
    }
}

/// One named parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Per-tensor gradients aligned with [`SmootherParams::tensors`]; `None` for
/// frozen tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads<T> {
    pub tensors: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> ParamGrads<T> {
    /// Adds `other` into `self`, tensor by tensor in a fixed order.
    pub fn accumulate(&mut self, other: &ParamGrads<T>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            match (a, b) {
                (Some(a), Some(b)) => a.iter_mut().zip(b).for_each(|(x, &y)| *x += y),
                (a @ None, Some(b)) => *a = Some(b.clone()),
                _ => {}
            }
        }
    }

    pub fn scale(&mut self, k: T) {
        for g in self.tensors.iter_mut().flatten() {
            g.iter_mut().for_each(|v| *v *= k);
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct ConvLayer {
    weight: usize,
    bias: usize,
    shape: ConvShape,
}

#[derive(Clone, Copy, Debug)]
struct CaLayer {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    hidden: usize,
}

/// Indices into the parameter list for every layer.
#[derive(Clone, Debug)]
struct Arch {
    in_ca: Option<CaLayer>,
    enc: [[ConvLayer; 2]; 4],
    down: [ConvLayer; 3],
    bott_ca: Option<CaLayer>,
    up: [ConvLayer; 3],
    dec: [[ConvLayer; 2]; 3],
    head: ConvLayer,
}

struct LayoutBuilder {
    entries: Vec<(String, Vec<usize>)>,
}

impl LayoutBuilder {
    fn push(&mut self, name: String, shape: Vec<usize>) -> usize {
        self.entries.push((name, shape));
        self.entries.len() - 1
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize, pad: usize) -> ConvLayer {
        ConvLayer {
            weight: self.push(format!("{name}.weight"), vec![cout, cin, k, k]),
            bias: self.push(format!("{name}.bias"), vec![cout]),
            shape: ConvShape { cin, cout, k, stride, pad },
        }
    }

    fn conv3(&mut self, name: &str, cin: usize, cout: usize) -> ConvLayer {
        self.conv(name, cin, cout, 3, 1, 1)
    }

    fn ca(&mut self, name: &str, c: usize, hidden: usize) -> CaLayer {
        CaLayer {
            w1: self.push(format!("{name}.fc1.weight"), vec![hidden, c]),
            b1: self.push(format!("{name}.fc1.bias"), vec![hidden]),
            w2: self.push(format!("{name}.fc2.weight"), vec![c, hidden]),
            b2: self.push(format!("{name}.fc2.bias"), vec![c]),
            hidden,
        }
    }
}

fn architecture(cfg: &SmootherConfig) -> (Arch, Vec<(String, Vec<usize>)>) {
    let mut b = LayoutBuilder { entries: Vec::new() };
    let cin = cfg.input_channels();
    let c = cfg.stage_channels;
    let in_ca = cfg.input_attention.then(|| b.ca("in_ca", cin, cfg.hidden(cin)));
    let mut enc = Vec::new();
    let mut down = Vec::new();
    let mut prev = cin;
    for s in 0..4 {
        enc.push([
            b.conv3(&format!("enc{}.conv1", s + 1), prev, c[s]),
            b.conv3(&format!("enc{}.conv2", s + 1), c[s], c[s]),
        ]);
        if s < 3 {
            down.push(b.conv(&format!("down{}", s + 1), c[s], c[s], 2, 2, 0));
        }
        prev = c[s];
    }
    let bott_ca = cfg.bottleneck_attention.then(|| b.ca("bott_ca", c[3], cfg.hidden(c[3])));
    let mut up = [None; 3];
    let mut dec = [None; 3];
    for lvl in (0..3).rev() {
        up[lvl] = Some(b.conv3(&format!("dec{}.up", lvl + 1), c[lvl + 1], c[lvl]));
        dec[lvl] = Some([
            b.conv3(&format!("dec{}.conv1", lvl + 1), 2 * c[lvl], c[lvl]),
            b.conv3(&format!("dec{}.conv2", lvl + 1), c[lvl], c[lvl]),
        ]);
    }
    let head = b.conv("head", c[0], 2, 1, 1, 0);
    let arch = Arch {
        in_ca,
        enc: enc.try_into().expect("four stages"),
        down: down.try_into().expect("three downsamples"),
        bott_ca,
        up: up.map(Option::unwrap),
        dec: dec.map(Option::unwrap),
        head,
    };
    (arch, b.entries)
}

/// Weights and biases of the network, stored as a flat list of named tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct SmootherParams<T> {
    config: SmootherConfig,
    tensors: Vec<ParamTensor<T>>,
}

/// Activations kept from a forward pass for the matching backward pass.
#[derive(Clone, Debug)]
pub struct Trace<T> {
    pub input: Tensor<T>,
    in_ca: Option<CaCache<T>>,
    x0: Tensor<T>,
    enc_a: Vec<Tensor<T>>,
    enc_b: Vec<Tensor<T>>,
    down: Vec<Tensor<T>>,
    bott_ca: Option<CaCache<T>>,
    up_in: Vec<Tensor<T>>,
    up_out: Vec<Tensor<T>>,
    cat: Vec<Tensor<T>>,
    dec_a: Vec<Tensor<T>>,
    dec_b: Vec<Tensor<T>>,
    /// Network output, `2 × grid_height × grid_width`.
    pub output: Tensor<T>,
}

impl<T: Scalar> Trace<T> {
    /// Hash of every ReLU on/off decision; equal patterns mean the network is
    /// locally the same smooth function.
    pub fn activation_pattern(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |on: bool| {
            h ^= on as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        for t in self
            .enc_a
            .iter()
            .chain(&self.enc_b)
            .chain(&self.down)
            .chain(&self.up_out)
            .chain(&self.dec_a)
            .chain(&self.dec_b)
        {
            t.data.iter().for_each(|&v| feed(v > T::zero()));
        }
        for ca in self.in_ca.iter().chain(&self.bott_ca) {
            ca.hidden.iter().for_each(|&v| feed(v > T::zero()));
        }
        h
    }
}

impl<T: Scalar> SmootherParams<T> {
    /// He-normal weights (variance `2 / fan_in`), zero biases, and a zero
    /// output head so an untrained network predicts the identity warp.
    pub fn init(config: &SmootherConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (_, layout) = architecture(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = layout
            .into_iter()
            .map(|(name, shape)| {
                let len: usize = shape.iter().product();
                let data = if name.ends_with(".bias") || name == "head.weight" {
                    vec![T::zero(); len]
                } else {
                    let fan_in: usize = shape[1..].iter().product();
                    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                    (0..len).map(|_| T::from_f64_lossy(normal.sample(&mut rng))).collect()
                };
                ParamTensor { name, shape, data }
            })
            .collect();
        Ok(SmootherParams {
            config: config.clone(),
            tensors,
        })
    }

    /// Wraps existing tensors after checking names and shapes.
    pub fn from_tensors(config: &SmootherConfig, tensors: Vec<ParamTensor<T>>) -> Result<Self> {
        config.validate()?;
        let (_, layout) = architecture(config);
        if layout.len() != tensors.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, got {}",
                layout.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in layout.iter().zip(&tensors) {
            if name != &t.name || shape != &t.shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Config(format!(
                    "parameter {} {:?} does not match expected {name} {shape:?}",
                    t.name, t.shape
                )));
            }
            if let Some(i) = t.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index: i });
            }
        }
        Ok(SmootherParams {
            config: config.clone(),
            tensors,
        })
    }

    pub fn config(&self) -> &SmootherConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[ParamTensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [ParamTensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamTensor<T>> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> SmootherParams<U> {
        SmootherParams {
            config: self.config.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| ParamTensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|v| U::from_f64_lossy(v.to_f64_lossless())).collect(),
                })
                .collect(),
        }
    }

    fn w(&self, i: usize) -> &[T] {
        &self.tensors[i].data
    }

    fn conv(&self, x: &Tensor<T>, l: &ConvLayer, relu: bool) -> Tensor<T> {
        let mut y = ops::conv_forward(x, self.w(l.weight), self.w(l.bias), &l.shape);
        if relu {
            ops::relu_inplace(&mut y);
        }
        y
    }

    fn ca_weights(&self, l: &CaLayer) -> CaWeights<'_, T> {
        CaWeights {
            w1: self.w(l.w1),
            b1: self.w(l.b1),
            w2: self.w(l.w2),
            b2: self.w(l.b2),
            hidden: l.hidden,
        }
    }

    /// Runs the network on a stacked input tensor, keeping activations.
    pub fn forward_trace(&self, input: Tensor<T>) -> Result<Trace<T>> {
        let cfg = &self.config;
        let (gh, gw) = (cfg.geometry.grid_height, cfg.geometry.grid_width);
        if (input.c, input.h, input.w) != (cfg.input_channels(), gh, gw) {
            return Err(Error::InvalidInput(format!(
                "network input is {}x{}x{}, expected {}x{gh}x{gw}",
                input.c,
                input.h,
                input.w,
                cfg.input_channels()
            )));
        }
        let (arch, _) = architecture(cfg);
        let (hp, wp) = cfg.padded_dims();
        let (gated, in_ca) = match &arch.in_ca {
            Some(l) => {
                let (y, cache) = ops::ca_forward(&input, &self.ca_weights(l));
                (y, Some(cache))
            }
            None => (input.clone(), None),
        };
        let x0 = ops::pad_to(&gated, hp, wp);
        drop(gated);
        let mut enc_a = Vec::with_capacity(4);
        let mut enc_b = Vec::with_capacity(4);
        let mut down = Vec::with_capacity(3);
        for s in 0..4 {
            let src = if s == 0 { &x0 } else { &down[s - 1] };
            let a = self.conv(src, &arch.enc[s][0], true);
            let b = self.conv(&a, &arch.enc[s][1], true);
            if s < 3 {
                down.push(self.conv(&b, &arch.down[s], true));
            }
            enc_a.push(a);
            enc_b.push(b);
        }
        let (bott, bott_ca) = match &arch.bott_ca {
            Some(l) => {
                let (y, cache) = ops::ca_forward(&enc_b[3], &self.ca_weights(l));
                (y, Some(cache))
            }
            None => (enc_b[3].clone(), None),
        };
        let mut up_in = vec![Tensor::zeros(0, 0, 0); 3];
        let mut up_out = vec![Tensor::zeros(0, 0, 0); 3];
        let mut cat = vec![Tensor::zeros(0, 0, 0); 3];
        let mut dec_a = vec![Tensor::zeros(0, 0, 0); 3];
        let mut dec_b = vec![Tensor::zeros(0, 0, 0); 3];
        for lvl in (0..3).rev() {
            let src = if lvl == 2 { &bott } else { &dec_b[lvl + 1] };
            let u = ops::upsample2(src);
            let uo = self.conv(&u, &arch.up[lvl], true);
            let c = ops::concat(&uo, &enc_b[lvl]);
            let a = self.conv(&c, &arch.dec[lvl][0], true);
            let b = self.conv(&a, &arch.dec[lvl][1], true);
            up_in[lvl] = u;
            up_out[lvl] = uo;
            cat[lvl] = c;
            dec_a[lvl] = a;
            dec_b[lvl] = b;
        }
        let head = self.conv(&dec_b[0], &arch.head, false);
        let output = ops::crop(&head, gh, gw);
        Ok(Trace {
            input,
            in_ca,
            x0,
            enc_a,
            enc_b,
            down,
            bott_ca,
            up_in,
            up_out,
            cat,
            dec_a,
            dec_b,
            output,
        })
    }

    /// Gradients of `<upstream, output>` w.r.t. every trainable tensor and the
    /// input. `trainable` (one flag per tensor, default all) marks tensors
    /// whose gradients are formed at all.
    pub fn backward(
        &self,
        trace: &Trace<T>,
        upstream: &Tensor<T>,
        trainable: Option<&[bool]>,
    ) -> Result<(ParamGrads<T>, Tensor<T>)> {
        if !upstream.same_shape(&trace.output) {
            return Err(Error::InvalidInput(format!(
                "upstream gradient is {}x{}x{}, expected {}x{}x{}",
                upstream.c, upstream.h, upstream.w, trace.output.c, trace.output.h, trace.output.w
            )));
        }
        let n_tensors = self.tensors.len();
        if let Some(t) = trainable {
            if t.len() != n_tensors {
                return Err(Error::InvalidInput(format!(
                    "trainable mask has {} entries, expected {n_tensors}",
                    t.len()
                )));
            }
        }
        let train = |i: usize| trainable.is_none_or(|t| t[i]);
        let mut grads: Vec<Option<Vec<T>>> = vec![None; n_tensors];
        let (arch, _) = architecture(&self.config);
        let (hp, wp) = self.config.padded_dims();

        let mut conv_back = |x: &Tensor<T>, l: &ConvLayer, dy: &Tensor<T>| -> Tensor<T> {
            let g = ops::conv_backward(x, self.w(l.weight), dy, &l.shape, train(l.weight), train(l.bias));
            grads[l.weight] = g.dw;
            grads[l.bias] = g.db;
            g.dx
        };

        let dhead = ops::pad_to(upstream, hp, wp);
        let mut dsrc = conv_back(&trace.dec_b[0], &arch.head, &dhead);
        let mut dskip: Vec<Tensor<T>> = Vec::with_capacity(3);
        for lvl in 0..3 {
            ops::relu_backward(&mut dsrc, &trace.dec_b[lvl]);
            let mut da = conv_back(&trace.dec_a[lvl], &arch.dec[lvl][1], &dsrc);
            ops::relu_backward(&mut da, &trace.dec_a[lvl]);
            let dcat = conv_back(&trace.cat[lvl], &arch.dec[lvl][0], &da);
            let (mut duo, ds) = ops::split(dcat, trace.up_out[lvl].c);
            dskip.push(ds);
            ops::relu_backward(&mut duo, &trace.up_out[lvl]);
            let du = conv_back(&trace.up_in[lvl], &arch.up[lvl], &duo);
            dsrc = ops::upsample2_backward(&du);
        }
        let mut denc_b = match (&arch.bott_ca, &trace.bott_ca) {
            (Some(l), Some(cache)) => {
                let need = [train(l.w1), train(l.b1), train(l.w2), train(l.b2)];
                let (dx, g) = ops::ca_backward(&trace.enc_b[3], cache, &dsrc, &self.ca_weights(l), need);
                let [g1, g2, g3, g4] = g;
                grads[l.w1] = g1;
                grads[l.b1] = g2;
                grads[l.w2] = g3;
                grads[l.b2] = g4;
                dx
            }
            _ => dsrc,
        };
        let mut conv_back = |x: &Tensor<T>, l: &ConvLayer, dy: &Tensor<T>| -> Tensor<T> {
            let g = ops::conv_backward(x, self.w(l.weight), dy, &l.shape, train(l.weight), train(l.bias));
            grads[l.weight] = g.dw;
            grads[l.bias] = g.db;
            g.dx
        };
        let mut dx0 = Tensor::zeros(0, 0, 0);
        for s in (0..4).rev() {
            ops::relu_backward(&mut denc_b, &trace.enc_b[s]);
            let mut da = conv_back(&trace.enc_a[s], &arch.enc[s][1], &denc_b);
            ops::relu_backward(&mut da, &trace.enc_a[s]);
            let src = if s == 0 { &trace.x0 } else { &trace.down[s - 1] };
            let mut dsrc = conv_back(src, &arch.enc[s][0], &da);
            if s == 0 {
                dx0 = dsrc;
                break;
            }
            ops::relu_backward(&mut dsrc, &trace.down[s - 1]);
            let mut d = conv_back(&trace.enc_b[s - 1], &arch.down[s - 1], &dsrc);
            for (a, &b) in d.data.iter_mut().zip(&dskip[s - 1].data) {
                *a += b;
            }
            denc_b = d;
        }
        let dgated = ops::crop(&dx0, trace.input.h, trace.input.w);
        let dinput = match (&arch.in_ca, &trace.in_ca) {
            (Some(l), Some(cache)) => {
                let need = [train(l.w1), train(l.b1), train(l.w2), train(l.b2)];
                let (dx, g) = ops::ca_backward(&trace.input, cache, &dgated, &self.ca_weights(l), need);
                let [g1, g2, g3, g4] = g;
                grads[l.w1] = g1;
                grads[l.b1] = g2;
                grads[l.w2] = g3;
                grads[l.b2] = g4;
                dx
            }
            _ => dgated,
        };
        Ok((ParamGrads { tensors: grads }, dinput))
    }

    fn check_window(&self, window: &MotionWindow) -> Result<()> {
        self.config.geometry.ensure_same(window.geometry())?;
        if window.capacity() != self.config.r - 1 {
            return Err(Error::InvalidInput(format!(
                "window holds {} fields, network expects r - 1 = {}",
                window.capacity(),
                self.config.r - 1
            )));
        }
        Ok(())
    }

    /// Predicted stabilizing warp for the newest frame of `window`.
    pub fn forward(&self, window: &MotionWindow) -> Result<MotionField> {
        self.check_window(window)?;
        let trace = self.forward_trace(stack_window(window))?;
        planar_to_field(&trace.output, self.config.geometry)
    }

    /// Gradients of `<upstream, forward(window)>`.
    pub fn backward_field(
        &self,
        window: &MotionWindow,
        upstream: &MotionField,
        trainable: Option<&[bool]>,
    ) -> Result<(ParamGrads<T>, Tensor<T>)> {
        self.check_window(window)?;
        self.config.geometry.ensure_same(upstream.geometry())?;
        let trace = self.forward_trace(stack_window(window))?;
        self.backward(&trace, &field_to_planar(upstream.data(), self.config.geometry), trainable)
    }
}

/// Stacks window entries oldest-to-newest as `[dx, dy]` channel pairs.
pub fn stack_window<T: Scalar>(window: &MotionWindow) -> Tensor<T> {
    let g = window.geometry();
    let (h, w) = (g.grid_height, g.grid_width);
    let mut out = Tensor::zeros(2 * window.len(), h, w);
    for (j, f) in window.entries().enumerate() {
        let planar = field_to_planar::<T>(f.data(), *g);
        out.data[2 * j * h * w..][..2 * h * w].copy_from_slice(&planar.data);
    }
    out
}

/// Interleaved `[dx, dy]` cell values to a `2 × H × W` tensor.
pub fn field_to_planar<T: Scalar>(data: &[f32], g: GridGeometry) -> Tensor<T> {
    let n = g.cell_count();
    let mut out = Tensor::zeros(2, g.grid_height, g.grid_width);
    for i in 0..n {
        out.data[i] = T::from_f32_exact(data[2 * i]);
        out.data[n + i] = T::from_f32_exact(data[2 * i + 1]);
    }
    out
}

/// Interleaves a `2 × H × W` tensor into cell-major `[dx, dy]` values.
pub fn planar_to_interleaved<T: Scalar>(t: &Tensor<T>) -> Vec<T> {
    let n = t.h * t.w;
    (0..n).flat_map(|i| [t.data[i], t.data[n + i]]).collect()
}

/// Interleaved values back to a planar tensor.
pub fn interleaved_to_planar<T: Scalar>(data: &[T], h: usize, w: usize) -> Tensor<T> {
    let n = h * w;
    let mut out = Tensor::zeros(2, h, w);
    for i in 0..n {
        out.data[i] = data[2 * i];
        out.data[n + i] = data[2 * i + 1];
    }
    out
}

pub fn planar_to_field<T: Scalar>(t: &Tensor<T>, g: GridGeometry) -> Result<MotionField> {
    MotionField::new(g, planar_to_interleaved(t).into_iter().map(T::to_f32_lossy).collect())
}
