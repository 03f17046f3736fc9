//! Hybrid training loss: motion continuity (MC), shape consistency (SC) and
//! scale preservation (SP), with exact subgradients.
//!
//! Warp fields are read as mesh deformations: vertex `(row, col)` sits at
//! `(col·s, row·s) + B(row, col)`. Neighbors are right (`v¹`), down (`v²`) and
//! left (`v³`); vertices lacking a neighbor a term needs do not participate,
//! and each term is a mean over its participants.
//!
//! All functions take interleaved `[dx, dy]` cell slices so they run in either
//! precision. `sign(0)` is taken as 0 everywhere, including zero-length edges.

use crate::error::{Error, Result};
use crate::motion::{GridGeometry, MotionField};
use crate::scalar::Scalar;

/// Mesh dimensions the losses need.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeshGrid {
    pub cols: usize,
    pub rows: usize,
    pub spacing: f64,
}

impl From<&GridGeometry> for MeshGrid {
    fn from(g: &GridGeometry) -> Self {
        MeshGrid {
            cols: g.grid_width,
            rows: g.grid_height,
            spacing: g.scale as f64,
        }
    }
}

impl MeshGrid {
    fn values(&self) -> usize {
        2 * self.cols * self.rows
    }

    fn check(&self, fields: &[&[impl Scalar]]) -> Result<()> {
        for f in fields {
            if f.len() != self.values() {
                return Err(Error::GeometryMismatch {
                    expected: format!("{} values ({}x{} grid)", self.values(), self.cols, self.rows),
                    got: format!("{} values", f.len()),
                });
            }
        }
        Ok(())
    }

    #[inline]
    fn at(&self, row: usize, col: usize) -> usize {
        2 * (row * self.cols + col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    /// Also apply SP to vertical edges.
    pub sp_vertical: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 0.01,
            beta: 0.01,
            sp_vertical: false,
        }
    }
}

#[inline]
fn sign<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Records the sign of every `|·|` argument so callers can tell whether two
/// evaluations lie on the same smooth piece.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KinkSignature(u64);

impl KinkSignature {
    fn new() -> Self {
        KinkSignature(0xcbf2_9ce4_8422_2325)
    }

    fn feed<T: Scalar>(&mut self, x: T) {
        let s = if x > T::zero() { 1 } else if x < T::zero() { 2 } else { 3 };
        self.0 = (self.0 ^ s).wrapping_mul(0x0000_0100_0000_01b3);
    }
}

/// Gradient sink: `grad[i] += weight · ∂term/∂b[i]`.
struct Sink<'a, T> {
    grad: Option<&'a mut [T]>,
    weight: T,
    kinks: Option<&'a mut KinkSignature>,
}

impl<T: Scalar> Sink<'_, T> {
    fn none() -> Self {
        Sink {
            grad: None,
            weight: T::zero(),
            kinks: None,
        }
    }

    #[inline]
    fn add(&mut self, i: usize, v: T) {
        if let Some(g) = self.grad.as_deref_mut() {
            g[i] += self.weight * v;
        }
    }

    #[inline]
    fn kink(&mut self, x: T) {
        if let Some(k) = self.kinks.as_deref_mut() {
            k.feed(x);
        }
    }
}

fn mc_impl<T: Scalar>(bp: &[T], bc: &[T], lp: &[T], lc: &[T], grads: Option<(&mut [T], &mut [T])>, mut kinks: Option<&mut KinkSignature>) -> T {
    let n = T::from_usize(bp.len()).unwrap();
    let mut acc = T::zero();
    let mut grads = grads;
    for i in 0..bp.len() {
        let r = bp[i] - bc[i] - lp[i] + lc[i];
        acc += r.abs();
        if let Some((gp, gc)) = grads.as_mut() {
            let s = sign(r) / n;
            gp[i] += s;
            gc[i] -= s;
        }
        if let Some(k) = kinks.as_deref_mut() {
            k.feed(r);
        }
    }
    acc / n
}

/// Mean over all cells and components of `|b_prev - b_curr - label_prev + label_curr|`.
pub fn mc<T: Scalar>(m: &MeshGrid, b_prev: &[T], b_curr: &[T], label_prev: &[T], label_curr: &[T]) -> Result<T> {
    m.check(&[b_prev, b_curr, label_prev, label_curr])?;
    Ok(mc_impl(b_prev, b_curr, label_prev, label_curr, None, None))
}

fn intra_impl<T: Scalar>(m: &MeshGrid, b: &[T], sink: &mut Sink<T>) -> T {
    let s = T::from_f64_lossy(m.spacing);
    let n = T::from_usize((m.rows - 1) * (m.cols - 1)).unwrap();
    let mut acc = T::zero();
    for row in 0..m.rows - 1 {
        for col in 0..m.cols - 1 {
            let (k, kr, kd) = (m.at(row, col), m.at(row, col + 1), m.at(row + 1, col));
            let e1 = (s + b[kr] - b[k], b[kr + 1] - b[k + 1]);
            let e2 = (b[kd] - b[k], s + b[kd + 1] - b[k + 1]);
            let d = e1.0 * e2.0 + e1.1 * e2.1;
            acc += d.abs();
            sink.kink(d);
            let g = sign(d) / n;
            sink.add(kr, g * e2.0);
            sink.add(kr + 1, g * e2.1);
            sink.add(kd, g * e1.0);
            sink.add(kd + 1, g * e1.1);
            sink.add(k, -g * (e1.0 + e2.0));
            sink.add(k + 1, -g * (e1.1 + e2.1));
        }
    }
    acc / n
}

fn inter_impl<T: Scalar>(m: &MeshGrid, b: &[T], sink: &mut Sink<T>) -> T {
    let n = T::from_usize(m.rows * (m.cols - 2)).unwrap();
    let two = T::from_f64_lossy(2.0);
    let mut acc = T::zero();
    for row in 0..m.rows {
        for col in 1..m.cols - 1 {
            let (k, kr, kl) = (m.at(row, col), m.at(row, col + 1), m.at(row, col - 1));
            for c in 0..2 {
                // (v¹ - v) - (v - v³); the undeformed offsets cancel.
                let u = b[kr + c] - two * b[k + c] + b[kl + c];
                acc += u.abs();
                sink.kink(u);
                let g = sign(u) / n;
                sink.add(kr + c, g);
                sink.add(kl + c, g);
                sink.add(k + c, -two * g);
            }
        }
    }
    acc / n
}

fn sp_impl<T: Scalar>(m: &MeshGrid, b: &[T], vertical: bool, sink: &mut Sink<T>) -> T {
    let s = T::from_f64_lossy(m.spacing);
    let horizontal = m.rows * (m.cols - 1);
    let count = horizontal + if vertical { (m.rows - 1) * m.cols } else { 0 };
    let n = T::from_usize(count).unwrap();
    let mut acc = T::zero();
    let mut edge = |k: usize, k2: usize, e: (T, T), sink: &mut Sink<T>| {
        let len = (e.0 * e.0 + e.1 * e.1).sqrt();
        let r = len / s - T::one();
        acc += r.abs();
        sink.kink(r);
        sink.kink(len);
        if len > T::zero() {
            let g = sign(r) / (n * s * len);
            sink.add(k2, g * e.0);
            sink.add(k2 + 1, g * e.1);
            sink.add(k, -g * e.0);
            sink.add(k + 1, -g * e.1);
        }
    };
    for row in 0..m.rows {
        for col in 0..m.cols - 1 {
            let (k, kr) = (m.at(row, col), m.at(row, col + 1));
            edge(k, kr, (s + b[kr] - b[k], b[kr + 1] - b[k + 1]), sink);
        }
    }
    if vertical {
        for row in 0..m.rows - 1 {
            for col in 0..m.cols {
                let (k, kd) = (m.at(row, col), m.at(row + 1, col));
                edge(k, kd, (b[kd] - b[k], s + b[kd + 1] - b[k + 1]), sink);
            }
        }
    }
    acc / n
}

/// `(L_intra, L_inter)`; SC is their sum.
pub fn sc_parts<T: Scalar>(m: &MeshGrid, b: &[T]) -> Result<(T, T)> {
    if m.cols < 3 || m.rows < 3 {
        return Err(Error::InvalidGeometry(format!(
            "shape-consistency loss needs a grid of at least 3x3, got {}x{}",
            m.cols, m.rows
        )));
    }
    m.check(&[b])?;
    Ok((intra_impl(m, b, &mut Sink::none()), inter_impl(m, b, &mut Sink::none())))
}

pub fn sc<T: Scalar>(m: &MeshGrid, b: &[T]) -> Result<T> {
    sc_parts(m, b).map(|(a, b)| a + b)
}

pub fn sp<T: Scalar>(m: &MeshGrid, b: &[T], vertical: bool) -> Result<T> {
    check_sp(m, vertical)?;
    m.check(&[b])?;
    Ok(sp_impl(m, b, vertical, &mut Sink::none()))
}

fn check_sp(m: &MeshGrid, vertical: bool) -> Result<()> {
    if m.cols < 2 || (vertical && m.rows < 2) {
        return Err(Error::InvalidGeometry(format!(
            "scale-preservation loss needs at least 2 columns{}, got {}x{}",
            if vertical { " and 2 rows" } else { "" },
            m.cols,
            m.rows
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub mc: f64,
    pub sc_prev: f64,
    pub sc_curr: f64,
    pub sp_prev: f64,
    pub sp_curr: f64,
}

/// Total loss of one sample and its gradients w.r.t. both predictions.
pub struct LossWithGrad<T> {
    pub value: LossBreakdown,
    pub d_prev: Vec<T>,
    pub d_curr: Vec<T>,
    pub kinks: KinkSignature,
}

/// `MC + α(SC_prev + SC_curr)/2 + β(SP_prev + SP_curr)/2`.
pub fn total<T: Scalar>(
    m: &MeshGrid,
    w: &LossWeights,
    b_prev: &[T],
    b_curr: &[T],
    label_prev: &[T],
    label_curr: &[T],
) -> Result<LossWithGrad<T>> {
    m.check(&[b_prev, b_curr, label_prev, label_curr])?;
    sc_parts::<T>(m, b_prev)?;
    check_sp(m, w.sp_vertical)?;
    let mut d_prev = vec![T::zero(); b_prev.len()];
    let mut d_curr = vec![T::zero(); b_curr.len()];
    let mut kinks = KinkSignature::new();
    let mc = mc_impl(b_prev, b_curr, label_prev, label_curr, Some((&mut d_prev, &mut d_curr)), Some(&mut kinks));
    let half = T::from_f64_lossy(0.5);
    let alpha = T::from_f64_lossy(w.alpha) * half;
    let beta = T::from_f64_lossy(w.beta) * half;
    let regularize = |b: &[T], d: &mut [T], kinks: &mut KinkSignature| -> (T, T) {
        let mut sink = Sink {
            grad: Some(d),
            weight: alpha,
            kinks: Some(kinks),
        };
        let sc = intra_impl(m, b, &mut sink) + inter_impl(m, b, &mut sink);
        sink.weight = beta;
        let sp = sp_impl(m, b, w.sp_vertical, &mut sink);
        (sc, sp)
    };
    let (sc_prev, sp_prev) = regularize(b_prev, &mut d_prev, &mut kinks);
    let (sc_curr, sp_curr) = regularize(b_curr, &mut d_curr, &mut kinks);
    let total = mc + alpha * (sc_prev + sc_curr) + beta * (sp_prev + sp_curr);
    let f = |v: T| v.to_f64_lossless();
    Ok(LossWithGrad {
        value: LossBreakdown {
            total: f(total),
            mc: f(mc),
            sc_prev: f(sc_prev),
            sc_curr: f(sc_curr),
            sp_prev: f(sp_prev),
            sp_curr: f(sp_curr),
        },
        d_prev,
        d_curr,
        kinks,
    })
}

fn to_f64(f: &MotionField) -> Vec<f64> {
    f.data().iter().map(|&v| v as f64).collect()
}

fn same_geometry(fields: &[&MotionField]) -> Result<MeshGrid> {
    let g = fields[0].geometry();
    for f in &fields[1..] {
        g.ensure_same(f.geometry())?;
    }
    Ok(MeshGrid::from(g))
}

/// Field-level MC, evaluated in f64.
pub fn loss_mc(b_prev: &MotionField, b_curr: &MotionField, label_prev: &MotionField, label_curr: &MotionField) -> Result<f64> {
    let m = same_geometry(&[b_prev, b_curr, label_prev, label_curr])?;
    mc(&m, &to_f64(b_prev), &to_f64(b_curr), &to_f64(label_prev), &to_f64(label_curr))
}

/// Field-level SC, evaluated in f64.
pub fn loss_sc(b: &MotionField) -> Result<f64> {
    sc(&MeshGrid::from(b.geometry()), &to_f64(b))
}

/// Field-level SP, evaluated in f64.
pub fn loss_sp(b: &MotionField, vertical: bool) -> Result<f64> {
    sp(&MeshGrid::from(b.geometry()), &to_f64(b), vertical)
}

/// Field-level total loss with gradients, evaluated in f64.
pub fn loss_total(
    w: &LossWeights,
    b_prev: &MotionField,
    b_curr: &MotionField,
    label_prev: &MotionField,
    label_curr: &MotionField,
) -> Result<LossWithGrad<f64>> {
    let m = same_geometry(&[b_prev, b_curr, label_prev, label_curr])?;
    total(&m, w, &to_f64(b_prev), &to_f64(b_curr), &to_f64(label_prev), &to_f64(label_curr))
}
