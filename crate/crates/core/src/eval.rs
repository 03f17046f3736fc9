//! Cropping ratio, distortion value and stability score, plus the homography
//! and similarity fits they rest on.
//!
//! Warps are backward: output pixel `q` reads input `q + B(q)`, so each grid
//! cell center gives the correspondence `(q + B(q)) -> q`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, Matrix2, Matrix3, Vector3};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::motion::MotionField;

pub type Point = (f64, f64);

/// 3×3 projective map, scaled so the bottom-right entry is 1 when nonzero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography(pub Matrix3<f64>);

impl Homography {
    pub fn identity() -> Self {
        Homography(Matrix3::identity())
    }

    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("homography has non-finite entries".into()));
        }
        let h = m[(2, 2)];
        Ok(Homography(if h.abs() > 1e-12 { m / h } else { m }))
    }

    pub fn apply(&self, p: Point) -> Point {
        let v = self.0 * Vector3::new(p.0, p.1, 1.0);
        (v.x / v.z, v.y / v.z)
    }

    /// Upper-left 2×2 block of the normalized matrix.
    pub fn affine_block(&self) -> Matrix2<f64> {
        self.0.fixed_view::<2, 2>(0, 0).into_owned()
    }

    /// Singular values `(σ₁, σ₂)` of the affine block, `σ₁ ≥ σ₂`.
    pub fn affine_singular_values(&self) -> (f64, f64) {
        let s = self.affine_block().singular_values();
        (s[0].max(s[1]), s[0].min(s[1]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HomographyFit {
    pub homography: Homography,
    /// RMS transfer error over the correspondences, in pixels.
    pub residual: f64,
}

/// Smallest acceptable ratio of the second-smallest to the largest singular
/// value of the normalized design matrix.
pub const DEGENERACY_RATIO: f64 = 1e-8;

fn normalizer(points: impl Iterator<Item = Point> + Clone) -> Matrix3<f64> {
    let n = points.clone().count() as f64;
    let (mx, my) = points.clone().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (mx, my) = (mx / n, my / n);
    let spread = points.map(|p| ((p.0 - mx).powi(2) + (p.1 - my).powi(2)).sqrt()).sum::<f64>() / n;
    let k = if spread > 0.0 { std::f64::consts::SQRT_2 / spread } else { 1.0 };
    Matrix3::new(k, 0.0, -k * mx, 0.0, k, -k * my, 0.0, 0.0, 1.0)
}

/// Least-squares homography mapping each `.0` point to its `.1` point
/// (normalized direct linear transform).
pub fn fit_homography(pairs: &[(Point, Point)]) -> Result<HomographyFit> {
    if pairs.len() < 4 {
        return Err(Error::Degenerate(format!("homography needs at least 4 correspondences, got {}", pairs.len())));
    }
    if pairs.iter().any(|(a, b)| !(a.0.is_finite() && a.1.is_finite() && b.0.is_finite() && b.1.is_finite())) {
        return Err(Error::Degenerate("non-finite correspondence".into()));
    }
    let t_in = normalizer(pairs.iter().map(|p| p.0));
    let t_out = normalizer(pairs.iter().map(|p| p.1));
    let norm = |t: &Matrix3<f64>, p: Point| {
        let v = t * Vector3::new(p.0, p.1, 1.0);
        (v.x, v.y)
    };
    let mut a = DMatrix::<f64>::zeros(2 * pairs.len(), 9);
    for (i, (src, dst)) in pairs.iter().enumerate() {
        let (x, y) = norm(&t_in, *src);
        let (u, v) = norm(&t_out, *dst);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for j in 0..9 {
            a[(2 * i, j)] = r0[j];
            a[(2 * i + 1, j)] = r1[j];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V");
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s = &svd.singular_values;
    if s[order[0]] == 0.0 || s[order[7]] / s[order[0]] < DEGENERACY_RATIO {
        return Err(Error::Degenerate("correspondences do not determine a homography (rank-deficient design)".into()));
    }
    let h = v_t.row(order[8]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_out_inv = t_out.try_inverse().expect("similarity normalizer is invertible");
    let homography = Homography::new(t_out_inv * hn * t_in)?;
    let sq: f64 = pairs
        .iter()
        .map(|(src, dst)| {
            let p = homography.apply(*src);
            (p.0 - dst.0).powi(2) + (p.1 - dst.1).powi(2)
        })
        .sum();
    Ok(HomographyFit {
        homography,
        residual: (sq / pairs.len() as f64).sqrt(),
    })
}

/// `(input, output)` pairs `(q + B(q), q)` at every cell center `q`.
pub fn frame_correspondences(b: &MotionField) -> Vec<(Point, Point)> {
    let g = b.geometry();
    let mut out = Vec::with_capacity(g.cell_count());
    for iy in 0..g.grid_height {
        for ix in 0..g.grid_width {
            let q = g.cell_center(ix, iy);
            let [dx, dy] = b.get(ix, iy);
            out.push(((q.0 + dx as f64, q.1 + dy as f64), q));
        }
    }
    out
}

/// Per-frame values of a metric plus frames whose affine block was singular.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameMetric {
    pub value: f64,
    /// `None` for skipped frames.
    pub per_frame: Vec<Option<f64>>,
    pub skipped: usize,
}

fn per_frame(hs: &[Homography], f: impl Fn(f64, f64) -> f64) -> Result<Vec<Option<f64>>> {
    if hs.is_empty() {
        return Err(Error::InvalidInput("no frames to evaluate".into()));
    }
    Ok(hs
        .iter()
        .map(|h| {
            let (s1, s2) = h.affine_singular_values();
            (s1.is_finite() && s2 > 1e-12 * s1.max(1.0)).then(|| f(s1, s2))
        })
        .collect())
}

fn collect(values: Vec<Option<f64>>, reduce: impl Fn(&[f64]) -> f64) -> Result<FrameMetric> {
    let valid: Vec<f64> = values.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(Error::Degenerate("every frame has a singular affine block".into()));
    }
    Ok(FrameMetric {
        value: reduce(&valid),
        skipped: values.len() - valid.len(),
        per_frame: values,
    })
}

/// Mean over frames of `min(1, √(σ₁σ₂))`.
pub fn cropping_ratio(hs: &[Homography]) -> Result<FrameMetric> {
    collect(per_frame(hs, |a, b| (a * b).sqrt().min(1.0))?, |v| v.iter().sum::<f64>() / v.len() as f64)
}

/// Minimum over frames of `σ₂ / σ₁`.
pub fn distortion_value(hs: &[Homography]) -> Result<FrameMetric> {
    collect(per_frame(hs, |a, b| b / a)?, |v| v.iter().copied().fold(f64::INFINITY, f64::min))
}

/// `F'_t = f_t + b_prev - b_curr`.
pub fn stabilized_inter_motion(f: &MotionField, b_prev: &MotionField, b_curr: &MotionField) -> Result<MotionField> {
    f.geometry().ensure_same(b_prev.geometry())?;
    f.geometry().ensure_same(b_curr.geometry())?;
    let data = f
        .data()
        .iter()
        .zip(b_prev.data())
        .zip(b_curr.data())
        .map(|((&a, &p), &c)| (a as f64 + p as f64 - c as f64) as f32)
        .collect();
    MotionField::new(*f.geometry(), data)
}

/// Rotation-scale-translation about the frame center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
}

/// Least-squares similarity `p ↦ sR(θ)p + t` for points already expressed
/// relative to some origin.
pub fn fit_similarity(pairs: &[(Point, Point)]) -> Result<Similarity> {
    let n = pairs.len() as f64;
    if pairs.len() < 2 {
        return Err(Error::Degenerate("similarity needs at least 2 correspondences".into()));
    }
    let mean = |f: &dyn Fn(&(Point, Point)) -> f64| pairs.iter().map(f).sum::<f64>() / n;
    let (px, py) = (mean(&|p| p.0 .0), mean(&|p| p.0 .1));
    let (qx, qy) = (mean(&|p| p.1 .0), mean(&|p| p.1 .1));
    let (mut sa, mut sb, mut ss) = (0.0, 0.0, 0.0);
    for ((x, y), (u, v)) in pairs {
        let (x, y, u, v) = (x - px, y - py, u - qx, v - qy);
        sa += x * u + y * v;
        sb += x * v - y * u;
        ss += x * x + y * y;
    }
    if ss <= 0.0 {
        return Err(Error::Degenerate("similarity fit on coincident points".into()));
    }
    let (a, b) = (sa / ss, sb / ss);
    Ok(Similarity {
        scale: a.hypot(b),
        theta: b.atan2(a),
        tx: qx - (a * px - b * py),
        ty: qy - (b * px + a * py),
    })
}

/// Similarity of the motion `q ↦ q + f(q)` in frame-centered coordinates.
pub fn motion_similarity(f: &MotionField) -> Result<Similarity> {
    let g = f.geometry();
    let (cx, cy) = g.frame_center();
    let pairs: Vec<(Point, Point)> = (0..g.grid_height)
        .flat_map(|iy| (0..g.grid_width).map(move |ix| (ix, iy)))
        .map(|(ix, iy)| {
            let (x, y) = g.cell_center(ix, iy);
            let [dx, dy] = f.get(ix, iy);
            ((x - cx, y - cy), (x - cx + dx as f64, y - cy + dy as f64))
        })
        .collect();
    fit_similarity(&pairs)
}

/// Lowest and highest bin of the numerator band.
pub const LOW_BAND: (usize, usize) = (2, 6);
pub const MIN_STABILITY_FRAMES: usize = 16;
pub const STABILITY_FORMULA: &str = "sum_k=2..6 |X_k|^2 / sum_k=2..N/2 |X_k|^2 on cumulative tx,ty (pooled) and theta; mean of both";

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityScore {
    pub score: f64,
    pub translation: f64,
    pub rotation: f64,
    /// Cumulative `tx`, `ty`, `θ` paths.
    pub paths: [Vec<f64>; 3],
    /// `|X_k|²` for `k = 0..=N/2` of each path.
    pub spectra: [Vec<f64>; 3],
}

fn power_spectrum(signal: &[f64]) -> Vec<f64> {
    let n = signal.len();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.process(&mut buf);
    buf[..=n / 2].iter().map(|c| c.norm_sqr()).collect()
}

fn band_ratio(spectra: &[&Vec<f64>]) -> f64 {
    let sum = |lo: usize, hi: usize| -> f64 { spectra.iter().map(|s| s[lo..=hi.min(s.len() - 1)].iter().sum::<f64>()).sum() };
    let half = spectra[0].len() - 1;
    let den = sum(LOW_BAND.0, half);
    if den < 1e-12 {
        1.0
    } else {
        sum(LOW_BAND.0, LOW_BAND.1) / den
    }
}

/// Low-frequency energy fraction of the camera path traced by `motions`.
pub fn stability_score(motions: &[MotionField]) -> Result<StabilityScore> {
    if motions.len() < MIN_STABILITY_FRAMES {
        return Err(Error::InvalidInput(format!(
            "stability score needs at least {MIN_STABILITY_FRAMES} frames, got {}",
            motions.len()
        )));
    }
    let mut paths: [Vec<f64>; 3] = Default::default();
    let mut acc = [0.0; 3];
    for f in motions {
        let s = motion_similarity(f)?;
        for (i, v) in [s.tx, s.ty, s.theta].into_iter().enumerate() {
            acc[i] += v;
            paths[i].push(acc[i]);
        }
    }
    let spectra = [power_spectrum(&paths[0]), power_spectrum(&paths[1]), power_spectrum(&paths[2])];
    let translation = band_ratio(&[&spectra[0], &spectra[1]]);
    let rotation = band_ratio(&[&spectra[2]]);
    Ok(StabilityScore {
        score: 0.5 * (translation + rotation),
        translation,
        rotation,
        paths,
        spectra,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub cropping: FrameMetric,
    pub distortion: FrameMetric,
    pub stability: StabilityScore,
    /// Stability of the unprocessed input path.
    pub input_stability: StabilityScore,
    /// RMS homography residual per frame.
    pub residuals: Vec<f64>,
}

impl StabilityReport {
    pub fn cropping_ratio(&self) -> f64 {
        self.cropping.value
    }

    pub fn distortion_value(&self) -> f64 {
        self.distortion.value
    }

    pub fn stability_score(&self) -> f64 {
        self.stability.score
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let kv: [(&str, String); 11] = [
            ("format", "steadypath-eval".into()),
            ("version", "1".into()),
            ("frames", self.residuals.len().to_string()),
            ("cropping_ratio", format!("{:.6}", self.cropping.value)),
            ("distortion_value", format!("{:.6}", self.distortion.value)),
            ("stability_score", format!("{:.6}", self.stability.score)),
            ("stability_translation", format!("{:.6}", self.stability.translation)),
            ("stability_rotation", format!("{:.6}", self.stability.rotation)),
            ("input_stability_score", format!("{:.6}", self.input_stability.score)),
            ("skipped_frames", self.cropping.skipped.to_string()),
            ("stability_formula", STABILITY_FORMULA.into()),
        ];
        for (k, v) in kv {
            let _ = writeln!(out, "{k}={v}");
        }
        let cell = |v: Option<f64>| v.map_or("nan".to_string(), |v| format!("{v:.6}"));
        out.push_str("\n[per_frame]\nframe,scale,distortion,residual\n");
        for t in 0..self.residuals.len() {
            let _ = writeln!(
                out,
                "{t},{},{},{:.6e}",
                cell(self.cropping.per_frame[t]),
                cell(self.distortion.per_frame[t]),
                self.residuals[t]
            );
        }
        out.push_str("\n[spectra]\nbin,tx,ty,theta,input_tx,input_ty,input_theta\n");
        let (s, i) = (&self.stability.spectra, &self.input_stability.spectra);
        for k in 0..s[0].len() {
            let _ = writeln!(
                out,
                "{k},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}",
                s[0][k], s[1][k], s[2][k], i[0][k], i[1][k], i[2][k]
            );
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Stabilized inter-frame motions of a stream, with `B_{-1} = 0`.
pub fn stabilized_motions(inputs: &[MotionField], warps: &[MotionField]) -> Result<Vec<MotionField>> {
    if inputs.len() != warps.len() {
        return Err(Error::InvalidInput(format!("{} input motions but {} warps", inputs.len(), warps.len())));
    }
    let Some(first) = inputs.first() else {
        return Ok(Vec::new());
    };
    let mut prev = MotionField::zeros(*first.geometry());
    let mut out = Vec::with_capacity(inputs.len());
    for (f, b) in inputs.iter().zip(warps) {
        out.push(stabilized_inter_motion(f, &prev, b)?);
        prev = b.clone();
    }
    Ok(out)
}

/// All three metrics for a stream of input motions and per-frame warps.
pub fn evaluate(inputs: &[MotionField], warps: &[MotionField]) -> Result<StabilityReport> {
    let stabilized = stabilized_motions(inputs, warps)?;
    let fits = warps
        .iter()
        .map(|b| fit_homography(&frame_correspondences(b)))
        .collect::<Result<Vec<_>>>()?;
    let hs: Vec<Homography> = fits.iter().map(|f| f.homography).collect();
    Ok(StabilityReport {
        cropping: cropping_ratio(&hs)?,
        distortion: distortion_value(&hs)?,
        stability: stability_score(&stabilized)?,
        input_stability: stability_score(inputs)?,
        residuals: fits.iter().map(|f| f.residual).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::GridGeometry;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geom() -> GridGeometry {
        GridGeometry::with_frame(160, 96, 20, 12, 8).unwrap()
    }

    fn known() -> Matrix3<f64> {
        Matrix3::new(1.05, 0.02, 3.0, -0.03, 0.97, -2.0, 1e-4, -5e-5, 1.0)
    }

    fn rel_frobenius(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn recovers_a_known_homography() {
        let h = Homography::new(known()).unwrap();
        let pairs: Vec<(Point, Point)> = (0..30)
            .map(|i| {
                let p = ((i % 6) as f64 * 40.0, (i / 6) as f64 * 30.0);
                (p, h.apply(p))
            })
            .collect();
        let fit = fit_homography(&pairs).unwrap();
        assert!(rel_frobenius(&fit.homography.0, &known()) < 1e-6);
        assert!(fit.residual < 1e-6);
    }

    #[test]
    fn identity_and_degenerate_cases() {
        let square = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.5, 0.3)];
        let pairs: Vec<(Point, Point)> = square.iter().map(|&p| (p, p)).collect();
        let fit = fit_homography(&pairs).unwrap();
        assert!((fit.homography.0 - Matrix3::identity()).norm() < 1e-9);
        assert!(matches!(fit_homography(&pairs[..3]), Err(Error::Degenerate(_))));
        let line: Vec<(Point, Point)> = (0..6).map(|i| ((i as f64, 2.0 * i as f64), (i as f64, 2.0 * i as f64))).collect();
        assert!(matches!(fit_homography(&line), Err(Error::Degenerate(_))));
    }

    #[test]
    fn correspondences_of_simple_warps() {
        let g = geom();
        let zero = fit_homography(&frame_correspondences(&MotionField::zeros(g))).unwrap();
        assert!((zero.homography.0 - Matrix3::identity()).norm() < 1e-9);
        let shift = fit_homography(&frame_correspondences(&MotionField::uniform(g, 3.0, -2.0).unwrap())).unwrap();
        let expect = Matrix3::new(1.0, 0.0, -3.0, 0.0, 1.0, 2.0, 0.0, 0.0, 1.0);
        assert!((shift.homography.0 - expect).norm() < 1e-9);
    }

    #[test]
    fn warp_sampled_from_a_projective_map_is_recovered() {
        // Output q reads input H(q); the fit maps input to output, i.e. H⁻¹.
        let g = geom();
        let h = Homography::new(known()).unwrap();
        let b = MotionField::from_fn(g, |ix, iy| {
            let q = g.cell_center(ix, iy);
            let p = h.apply(q);
            [(p.0 - q.0) as f32, (p.1 - q.1) as f32]
        })
        .unwrap();
        let fit = fit_homography(&frame_correspondences(&b)).unwrap();
        let inv = Homography::new(known().try_inverse().unwrap()).unwrap();
        assert!(rel_frobenius(&fit.homography.0, &inv.0) < 1e-5);
    }

    fn diag(a: f64, b: f64) -> Homography {
        Homography::new(Matrix3::new(a, 0.0, 0.0, 0.0, b, 0.0, 0.0, 0.0, 1.0)).unwrap()
    }

    #[test]
    fn crop_and_distortion_closed_forms() {
        let ids = vec![Homography::identity(); 5];
        assert_eq!(cropping_ratio(&ids).unwrap().value, 1.0);
        assert_eq!(distortion_value(&ids).unwrap().value, 1.0);
        let shrink = vec![diag(0.8, 0.8); 4];
        assert!((cropping_ratio(&shrink).unwrap().value - 0.8).abs() < 1e-12);
        let mut one = ids.clone();
        one[2] = diag(1.0, 0.8);
        assert!((distortion_value(&one).unwrap().value - 0.8).abs() < 1e-12);
        assert_eq!(cropping_ratio(&[diag(1.5, 1.5)]).unwrap().value, 1.0);
        assert!(cropping_ratio(&[]).is_err());
    }

    #[test]
    fn singular_frames_are_skipped() {
        let hs = [Homography::identity(), diag(1.0, 0.0), diag(0.9, 0.9)];
        let c = cropping_ratio(&hs).unwrap();
        assert_eq!(c.skipped, 1);
        assert_eq!(c.per_frame[1], None);
        assert!((c.value - 0.95).abs() < 1e-12);
        assert!(cropping_ratio(&[diag(0.0, 0.0)]).is_err());
    }

    /// Singular values of a 2×2 block from the closed form of `AᵀA`.
    fn sv_oracle(m: &Matrix2<f64>) -> (f64, f64) {
        let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        let p = a * a + b * b + c * c + d * d;
        let q = (a * d - b * c).abs();
        let disc = (p * p - 4.0 * q * q).max(0.0).sqrt();
        (((p + disc) / 2.0).sqrt(), ((p - disc) / 2.0).sqrt())
    }

    #[test]
    fn metrics_match_singular_value_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let hs: Vec<Homography> = (0..20)
            .map(|_| {
                let mut m = Matrix3::identity();
                for i in 0..2 {
                    for j in 0..3 {
                        m[(i, j)] += rng.random_range(-0.3..0.3);
                    }
                }
                Homography::new(m).unwrap()
            })
            .collect();
        let (mut c, mut d) = (0.0, f64::INFINITY);
        for h in &hs {
            let (s1, s2) = sv_oracle(&h.affine_block());
            c += (s1 * s2).sqrt().min(1.0);
            d = d.min(s2 / s1);
        }
        assert!((cropping_ratio(&hs).unwrap().value - c / 20.0).abs() < 1e-6);
        assert!((distortion_value(&hs).unwrap().value - d).abs() < 1e-6);
    }

    #[test]
    fn inter_motion_cases() {
        let g = geom();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut rnd = || MotionField::from_fn(g, |_, _| [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).unwrap();
        let (f, b) = (rnd(), rnd());
        assert_eq!(stabilized_inter_motion(&f, &b, &b).unwrap(), f);
        let c = MotionField::uniform(g, 1.5, -0.5).unwrap();
        let z = MotionField::zeros(g);
        assert_eq!(stabilized_inter_motion(&z, &z, &c).unwrap(), c.negate());
        let (bp, bc) = (rnd(), rnd());
        let out = stabilized_inter_motion(&f, &bp, &bc).unwrap();
        for i in 0..out.data().len() {
            let expect = f.data()[i] as f64 + bp.data()[i] as f64 - bc.data()[i] as f64;
            assert!((out.data()[i] as f64 - expect).abs() < 1e-5);
        }
    }

    #[test]
    fn similarity_fit_recovers_rigid_motion() {
        let pairs: Vec<(Point, Point)> = (0..20)
            .map(|i| {
                let p = ((i % 5) as f64 * 10.0 - 20.0, (i / 5) as f64 * 7.0 - 10.0);
                let (s, c) = 0.05f64.sin_cos();
                (p, (1.1 * (c * p.0 - s * p.1) + 3.0, 1.1 * (s * p.0 + c * p.1) - 1.0))
            })
            .collect();
        let s = fit_similarity(&pairs).unwrap();
        assert!((s.theta - 0.05).abs() < 1e-12 && (s.scale - 1.1).abs() < 1e-12);
        assert!((s.tx - 3.0).abs() < 1e-10 && (s.ty + 1.0).abs() < 1e-10);
    }

    /// Motions whose cumulative path is `path[t]` in x and y and
    /// `rot[t]` in rotation about the frame center.
    fn motions_for_path(g: GridGeometry, path: &[f64], rot: &[f64]) -> Vec<MotionField> {
        let (cx, cy) = g.frame_center();
        (0..path.len())
            .map(|t| {
                let prev = if t == 0 { (0.0, 0.0) } else { (path[t - 1], rot[t - 1]) };
                let (d, dr) = (path[t] - prev.0, rot[t] - prev.1);
                MotionField::from_fn(g, |ix, iy| {
                    let (x, y) = g.cell_center(ix, iy);
                    let (x, y) = (x - cx, y - cy);
                    let (s, c) = dr.sin_cos();
                    [(c * x - s * y - x + d) as f32, (s * x + c * y - y + d) as f32]
                })
                .unwrap()
            })
            .collect()
    }

    fn sinusoid(n: usize, bin: f64, amp: f64) -> Vec<f64> {
        (0..n).map(|t| amp * (2.0 * std::f64::consts::PI * bin * t as f64 / n as f64).sin()).collect()
    }

    #[test]
    fn stability_of_reference_paths() {
        let g = geom();
        let zero = vec![MotionField::zeros(g); 32];
        assert_eq!(stability_score(&zero).unwrap().score, 1.0);
        let n = 128;
        let low = motions_for_path(g, &sinusoid(n, 3.0, 5.0), &sinusoid(n, 3.0, 0.01));
        assert!((stability_score(&low).unwrap().score - 1.0).abs() < 1e-3);
        let high = motions_for_path(g, &sinusoid(n, 20.0, 5.0), &sinusoid(n, 20.0, 0.01));
        assert!(stability_score(&high).unwrap().score <= 1e-3);
        assert!(stability_score(&zero[..15]).is_err());
    }

    #[test]
    fn stability_ignores_a_constant_path_offset() {
        let g = geom();
        let n = 64;
        let mut path = sinusoid(n, 4.0, 3.0);
        for (t, v) in sinusoid(n, 11.0, 1.0).iter().enumerate() {
            path[t] += v;
        }
        let rot = vec![0.0; n];
        let base = stability_score(&motions_for_path(g, &path, &rot)).unwrap();
        // Shifting the whole path changes only the first motion.
        let shifted: Vec<f64> = path.iter().map(|v| v + 7.0).collect();
        let moved = stability_score(&motions_for_path(g, &shifted, &rot)).unwrap();
        assert!((base.score - moved.score).abs() < 1e-6);
    }

    #[test]
    fn zero_warps_are_an_identity_stabilizer() {
        let g = geom();
        let n = 40;
        let inputs = motions_for_path(g, &sinusoid(n, 9.0, 4.0), &vec![0.0; n]);
        let warps = vec![MotionField::zeros(g); n];
        let r = evaluate(&inputs, &warps).unwrap();
        assert!((r.cropping_ratio() - 1.0).abs() < 1e-3);
        assert!((r.distortion_value() - 1.0).abs() < 1e-3);
        assert!((r.stability_score() - stability_score(&inputs).unwrap().score).abs() < 1e-12);
        let text = r.to_text();
        assert!(text.starts_with("format=steadypath-eval\nversion=1\n"));
        assert!(text.contains("\n[per_frame]\nframe,scale,distortion,residual\n0,1.000000,1.000000,"));
        assert!(text.contains("\n[spectra]\n"));
    }

    #[test]
    fn misaligned_streams_are_rejected() {
        let g = geom();
        assert!(evaluate(&vec![MotionField::zeros(g); 20], &vec![MotionField::zeros(g); 19]).is_err());
    }

    proptest! {
        #[test]
        fn distortion_ignores_rotation_and_uniform_scale(theta in -3.0f64..3.0, k in 0.2f64..3.0, a in 0.3f64..1.0) {
            let (s, c) = theta.sin_cos();
            let m = Matrix3::new(k * c, -k * s, 0.0, k * s, k * c, 0.0, 0.0, 0.0, 1.0) * diag(1.0, a).0;
            let d = distortion_value(&[Homography::new(m).unwrap()]).unwrap().value;
            prop_assert!((d - a).abs() < 1e-9);
        }

        #[test]
        fn uniform_scale_crop_is_clipped_scale(alpha in 0.1f64..3.0) {
            let c = cropping_ratio(&[diag(alpha, alpha)]).unwrap().value;
            prop_assert!((c - alpha.min(1.0)).abs() < 1e-12);
        }
    }
}
