//! Dense CHW tensor kernels with hand-written backward passes.

use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Tensor {
            c,
            h,
            w,
            data: vec![T::zero(); c * h * w],
        }
    }

    pub fn plane(&self, ch: usize) -> &[T] {
        let n = self.h * self.w;
        &self.data[ch * n..(ch + 1) * n]
    }

    pub fn same_shape(&self, other: &Tensor<T>) -> bool {
        (self.c, self.h, self.w) == (other.c, other.h, other.w)
    }
}

/// Geometry of one convolution layer; weights are `[cout, cin, k, k]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvShape {
    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.k) / self.stride + 1,
            (w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.k * self.k
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

/// Output columns `ox` whose tap `kx` lands inside `[0, w)`.
fn valid_columns(s: &ConvShape, kx: usize, w: usize, wo: usize) -> std::ops::Range<usize> {
    let lo = s.pad.saturating_sub(kx).div_ceil(s.stride);
    let hi = if w + s.pad > kx { (w + s.pad - kx - 1) / s.stride + 1 } else { 0 };
    lo.min(wo)..hi.min(wo).max(lo.min(wo))
}

fn im2col<T: Scalar>(x: &Tensor<T>, s: &ConvShape, ho: usize, wo: usize) -> Vec<T> {
    let k = s.k;
    let hw = ho * wo;
    let mut col = vec![T::zero(); s.cin * k * k * hw];
    for c in 0..s.cin {
        let plane = x.plane(c);
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((c * k + ky) * k + kx) * hw..][..hw];
                let cols = valid_columns(s, kx, x.w, wo);
                if cols.is_empty() {
                    continue;
                }
                let ix0 = cols.start * s.stride + kx - s.pad;
                for oy in 0..ho {
                    let iy = (oy * s.stride + ky) as isize - s.pad as isize;
                    if iy < 0 || iy >= x.h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * x.w + ix0..];
                    let dst = &mut row[oy * wo + cols.start..oy * wo + cols.end];
                    if s.stride == 1 {
                        dst.copy_from_slice(&src[..dst.len()]);
                    } else {
                        for (d, v) in dst.iter_mut().zip(src.iter().step_by(s.stride)) {
                            *d = *v;
                        }
                    }
                }
            }
        }
    }
    col
}

fn col2im<T: Scalar>(col: &[T], s: &ConvShape, h: usize, w: usize, ho: usize, wo: usize) -> Tensor<T> {
    let k = s.k;
    let hw = ho * wo;
    let mut out = Tensor::zeros(s.cin, h, w);
    for c in 0..s.cin {
        let plane = &mut out.data[c * h * w..][..h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((c * k + ky) * k + kx) * hw..][..hw];
                let cols = valid_columns(s, kx, w, wo);
                if cols.is_empty() {
                    continue;
                }
                let ix0 = cols.start * s.stride + kx - s.pad;
                for oy in 0..ho {
                    let iy = (oy * s.stride + ky) as isize - s.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w + ix0..(iy as usize + 1) * w];
                    let src = &row[oy * wo + cols.start..oy * wo + cols.end];
                    if s.stride == 1 {
                        for (d, &v) in dst[..src.len()].iter_mut().zip(src) {
                            *d += v;
                        }
                    } else {
                        for (d, &v) in dst.iter_mut().step_by(s.stride).zip(src) {
                            *d += v;
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn conv_forward<T: Scalar>(x: &Tensor<T>, weight: &[T], bias: &[T], s: &ConvShape) -> Tensor<T> {
    debug_assert_eq!(x.c, s.cin);
    let (ho, wo) = s.out_dims(x.h, x.w);
    let hw = ho * wo;
    let mut out = Tensor::zeros(s.cout, ho, wo);
    for (o, &b) in bias.iter().enumerate() {
        out.data[o * hw..(o + 1) * hw].fill(b);
    }
    let kk = s.cin * s.k * s.k;
    if s.is_pointwise() {
        T::gemm(s.cout, kk, hw, weight, false, &x.data, false, T::one(), &mut out.data);
    } else {
        let col = im2col(x, s, ho, wo);
        T::gemm(s.cout, kk, hw, weight, false, &col, false, T::one(), &mut out.data);
    }
    out
}

/// Gradients of one convolution. Weight and bias gradients are only formed
/// when requested.
pub struct ConvGrads<T> {
    pub dx: Tensor<T>,
    pub dw: Option<Vec<T>>,
    pub db: Option<Vec<T>>,
}

pub fn conv_backward<T: Scalar>(
    x: &Tensor<T>,
    weight: &[T],
    dy: &Tensor<T>,
    s: &ConvShape,
    need_dw: bool,
    need_db: bool,
) -> ConvGrads<T> {
    let (ho, wo) = (dy.h, dy.w);
    let hw = ho * wo;
    let kk = s.cin * s.k * s.k;
    let owned;
    let col: &[T] = if s.is_pointwise() {
        &x.data
    } else {
        owned = im2col(x, s, ho, wo);
        &owned
    };
    let dw = need_dw.then(|| {
        let mut dw = vec![T::zero(); s.weight_len()];
        T::gemm(s.cout, hw, kk, &dy.data, false, col, true, T::zero(), &mut dw);
        dw
    });
    let db = need_db.then(|| (0..s.cout).map(|o| dy.data[o * hw..(o + 1) * hw].iter().copied().sum()).collect());
    let mut dcol = vec![T::zero(); kk * hw];
    T::gemm(kk, s.cout, hw, weight, true, &dy.data, false, T::zero(), &mut dcol);
    let dx = if s.is_pointwise() {
        Tensor {
            c: s.cin,
            h: x.h,
            w: x.w,
            data: dcol,
        }
    } else {
        col2im(&dcol, s, x.h, x.w, ho, wo)
    };
    ConvGrads { dx, dw, db }
}

pub fn relu_inplace<T: Scalar>(t: &mut Tensor<T>) {
    for v in &mut t.data {
        if *v <= T::zero() {
            *v = T::zero();
        }
    }
}

/// Masks `dy` by the positive part of a ReLU output; the subgradient at 0 is 0.
pub fn relu_backward<T: Scalar>(dy: &mut Tensor<T>, y: &Tensor<T>) {
    for (d, &v) in dy.data.iter_mut().zip(&y.data) {
        if v <= T::zero() {
            *d = T::zero();
        }
    }
}

pub fn upsample2<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let (h2, w2) = (2 * x.h, 2 * x.w);
    let mut out = Tensor::zeros(x.c, h2, w2);
    for c in 0..x.c {
        let src = x.plane(c);
        let dst = &mut out.data[c * h2 * w2..][..h2 * w2];
        for y in 0..h2 {
            for xx in 0..w2 {
                dst[y * w2 + xx] = src[(y / 2) * x.w + xx / 2];
            }
        }
    }
    out
}

pub fn upsample2_backward<T: Scalar>(dy: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (dy.h / 2, dy.w / 2);
    let mut out = Tensor::zeros(dy.c, h, w);
    for c in 0..dy.c {
        let src = dy.plane(c);
        let dst = &mut out.data[c * h * w..][..h * w];
        for y in 0..dy.h {
            for x in 0..dy.w {
                dst[(y / 2) * w + x / 2] += src[y * dy.w + x];
            }
        }
    }
    out
}

pub fn concat<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!((a.h, a.w), (b.h, b.w));
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Tensor {
        c: a.c + b.c,
        h: a.h,
        w: a.w,
        data,
    }
}

/// Inverse of [`concat`] for gradients: the first `ca` channels and the rest.
pub fn split<T: Scalar>(t: Tensor<T>, ca: usize) -> (Tensor<T>, Tensor<T>) {
    let n = ca * t.h * t.w;
    let mut data = t.data;
    let rest = data.split_off(n);
    (
        Tensor {
            c: ca,
            h: t.h,
            w: t.w,
            data,
        },
        Tensor {
            c: t.c - ca,
            h: t.h,
            w: t.w,
            data: rest,
        },
    )
}

/// Zero-pads at the bottom and right.
pub fn pad_to<T: Scalar>(x: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    if (x.h, x.w) == (h, w) {
        return x.clone();
    }
    let mut out = Tensor::zeros(x.c, h, w);
    for c in 0..x.c {
        for y in 0..x.h {
            out.data[(c * h + y) * w..][..x.w].copy_from_slice(&x.data[(c * x.h + y) * x.w..][..x.w]);
        }
    }
    out
}

/// Keeps the top-left `h × w` window.
pub fn crop<T: Scalar>(x: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    if (x.h, x.w) == (h, w) {
        return x.clone();
    }
    let mut out = Tensor::zeros(x.c, h, w);
    for c in 0..x.c {
        for y in 0..h {
            out.data[(c * h + y) * w..][..w].copy_from_slice(&x.data[(c * x.h + y) * x.w..][..w]);
        }
    }
    out
}

/// Channel-attention parameters: `fc1` is `[hidden, c]`, `fc2` is `[c, hidden]`.
pub struct CaWeights<'a, T> {
    pub w1: &'a [T],
    pub b1: &'a [T],
    pub w2: &'a [T],
    pub b2: &'a [T],
    pub hidden: usize,
}

#[derive(Clone, Debug)]
pub struct CaCache<T> {
    pub mean: Vec<T>,
    /// Hidden activations after the ReLU.
    pub hidden: Vec<T>,
    pub logit: Vec<T>,
    pub gate: Vec<T>,
}

/// Gate logits are clamped here so gates stay strictly inside (0, 1) even in
/// single precision.
const GATE_LOGIT_LIMIT: f64 = 15.0;

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

pub fn ca_forward<T: Scalar>(x: &Tensor<T>, p: &CaWeights<T>) -> (Tensor<T>, CaCache<T>) {
    let n = T::from_usize(x.h * x.w).unwrap();
    let mean: Vec<T> = (0..x.c).map(|c| x.plane(c).iter().copied().sum::<T>() / n).collect();
    let hidden: Vec<T> = (0..p.hidden)
        .map(|j| {
            let z = p.b1[j] + (0..x.c).map(|c| p.w1[j * x.c + c] * mean[c]).sum::<T>();
            z.max(T::zero())
        })
        .collect();
    let limit = T::from_f64_lossy(GATE_LOGIT_LIMIT);
    let logit: Vec<T> = (0..x.c)
        .map(|c| p.b2[c] + (0..p.hidden).map(|j| p.w2[c * p.hidden + j] * hidden[j]).sum::<T>())
        .collect();
    let gate: Vec<T> = logit.iter().map(|&z| sigmoid(z.max(-limit).min(limit))).collect();
    let mut y = x.clone();
    let hw = x.h * x.w;
    for (c, &g) in gate.iter().enumerate() {
        for v in &mut y.data[c * hw..(c + 1) * hw] {
            *v *= g;
        }
    }
    (
        y,
        CaCache {
            mean,
            hidden,
            logit,
            gate,
        },
    )
}

/// Returns `dx` and, when `need_params`, `[dw1, db1, dw2, db2]`.
pub fn ca_backward<T: Scalar>(
    x: &Tensor<T>,
    cache: &CaCache<T>,
    dy: &Tensor<T>,
    p: &CaWeights<T>,
    need_params: [bool; 4],
) -> (Tensor<T>, [Option<Vec<T>>; 4]) {
    let c_n = x.c;
    let hw = x.h * x.w;
    let n = T::from_usize(hw).unwrap();
    let limit = T::from_f64_lossy(GATE_LOGIT_LIMIT);
    // Gradient w.r.t. each gate, then through the (clamped) sigmoid.
    let dz2: Vec<T> = (0..c_n)
        .map(|c| {
            if cache.logit[c].abs() > limit {
                return T::zero();
            }
            let dg: T = dy.plane(c).iter().zip(x.plane(c)).map(|(&a, &b)| a * b).sum();
            let g = cache.gate[c];
            dg * g * (T::one() - g)
        })
        .collect();
    let dh: Vec<T> = (0..p.hidden)
        .map(|j| {
            if cache.hidden[j] > T::zero() {
                (0..c_n).map(|c| p.w2[c * p.hidden + j] * dz2[c]).sum()
            } else {
                T::zero()
            }
        })
        .collect();
    let dmean: Vec<T> = (0..c_n)
        .map(|c| (0..p.hidden).map(|j| p.w1[j * c_n + c] * dh[j]).sum())
        .collect();
    let mut dx = dy.clone();
    for c in 0..c_n {
        let g = cache.gate[c];
        let add = dmean[c] / n;
        for v in &mut dx.data[c * hw..(c + 1) * hw] {
            *v = *v * g + add;
        }
    }
    let outer = |rows: &[T], cols: &[T]| -> Vec<T> {
        rows.iter().flat_map(|&a| cols.iter().map(move |&b| a * b)).collect()
    };
    let grads = [
        need_params[0].then(|| outer(&dh, &cache.mean)),
        need_params[1].then(|| dh.clone()),
        need_params[2].then(|| outer(&dz2, &cache.hidden)),
        need_params[3].then(|| dz2.clone()),
    ];
    (dx, grads)
}
