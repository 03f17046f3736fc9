//! Grid-to-pixel upsampling and backward warping of frames.
//!
//! Warp fields are source-pointing: output pixel `q` reads the source at
//! `q + B(q)`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::motion::MotionField;

/// Dense per-pixel displacement, interleaved `(dx, dy)`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Flow {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Flow {
    pub fn uniform(width: usize, height: usize, dx: f32, dy: f32) -> Self {
        Flow {
            width,
            height,
            data: std::iter::repeat_n([dx, dy], width * height).flatten().collect(),
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 2] {
        let i = 2 * (y * self.width + x);
        [self.data[i], self.data[i + 1]]
    }
}

/// A rendered frame plus the pixels whose sample fell inside the source.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpedFrame {
    pub image: Image,
    pub mask: Vec<bool>,
}

impl WarpedFrame {
    /// Fraction of valid pixels.
    pub fn coverage(&self) -> f64 {
        if self.mask.is_empty() {
            return 0.0;
        }
        self.mask.iter().filter(|&&m| m).count() as f64 / self.mask.len() as f64
    }
}

/// Bilinear upsampling of a grid field to every frame pixel. Grid samples sit
/// at cell centers; pixels beyond the outermost centers clamp to the border.
pub fn upsample_field(field: &MotionField) -> Flow {
    let g = field.geometry();
    let s = g.scale as f64;
    let axis = |n_pixels: usize, n_cells: usize| -> Vec<(usize, usize, f32)> {
        (0..n_pixels)
            .map(|p| {
                let u = ((p as f64 + 0.5) / s - 0.5).clamp(0.0, n_cells as f64 - 1.0);
                let i0 = u.floor() as usize;
                let i1 = (i0 + 1).min(n_cells - 1);
                (i0, i1, (u - i0 as f64) as f32)
            })
            .collect()
    };
    let xs = axis(g.frame_width, g.grid_width);
    let ys = axis(g.frame_height, g.grid_height);
    let mut data = Vec::with_capacity(2 * g.frame_width * g.frame_height);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let (a, b, c, d) = (field.get(x0, y0), field.get(x1, y0), field.get(x0, y1), field.get(x1, y1));
            for k in 0..2 {
                let top = a[k] + (b[k] - a[k]) * fx;
                let bottom = c[k] + (d[k] - c[k]) * fx;
                data.push(top + (bottom - top) * fy);
            }
        }
    }
    Flow {
        width: g.frame_width,
        height: g.frame_height,
        data,
    }
}

/// `output(q) = src(q + flow(q))` with bilinear sampling. Samples outside
/// `[0, W-1] × [0, H-1]` produce 0 and a false mask entry.
pub fn backward_warp(src: &Image, flow: &Flow) -> Result<WarpedFrame> {
    if src.width != flow.width || src.height != flow.height {
        return Err(Error::GeometryMismatch {
            expected: format!("{}x{} image", src.width, src.height),
            got: format!("{}x{} flow", flow.width, flow.height),
        });
    }
    let (w, h, ch) = (src.width, src.height, src.channels);
    let mut image = Image::zeros(w, h, ch);
    let mut mask = vec![false; w * h];
    let max_x = (w - 1) as f32;
    let max_y = (h - 1) as f32;
    for y in 0..h {
        for x in 0..w {
            let [dx, dy] = flow.get(x, y);
            let sx = x as f32 + dx;
            let sy = y as f32 + dy;
            if !(0.0..=max_x).contains(&sx) || !(0.0..=max_y).contains(&sy) {
                continue;
            }
            let x0 = sx.floor() as usize;
            let y0 = sy.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let fx = sx - x0 as f32;
            let fy = sy - y0 as f32;
            let weights = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
            let out = (y * w + x) * ch;
            for c in 0..ch {
                image.data[out + c] = src.get(x0, y0, c) * weights[0]
                    + src.get(x1, y0, c) * weights[1]
                    + src.get(x0, y1, c) * weights[2]
                    + src.get(x1, y1, c) * weights[3];
            }
            mask[y * w + x] = true;
        }
    }
    Ok(WarpedFrame { image, mask })
}

/// Warps a shaky frame to its stabilized position with a grid warp field.
pub fn render_stable(frame: &Image, warp: &MotionField) -> Result<WarpedFrame> {
    let g = warp.geometry();
    if frame.width != g.frame_width || frame.height != g.frame_height {
        return Err(Error::GeometryMismatch {
            expected: format!("{}x{} frame", g.frame_width, g.frame_height),
            got: format!("{}x{} image", frame.width, frame.height),
        });
    }
    backward_warp(frame, &upsample_field(warp))
}

/// File name used for frame `index` in rendered and input sequences.
pub fn frame_file_name(index: usize, channels: usize) -> String {
    let ext = if channels == 1 { "pgm" } else { "ppm" };
    format!("frame_{index:06}.{ext}")
}

/// Writes numbered frames plus `coverage.txt` (one mask fraction per line).
pub fn write_rendered_sequence(dir: &Path, frames: &[WarpedFrame]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut coverage = String::new();
    for (i, f) in frames.iter().enumerate() {
        f.image.write(&dir.join(frame_file_name(i, f.image.channels)))?;
        writeln!(coverage, "{:.6}", f.coverage()).unwrap();
    }
    let path = dir.join("coverage.txt");
    std::fs::write(&path, coverage).map_err(|e| Error::io(&path, e))
}

/// Lists `*.pgm` / `*.ppm` files of a directory in name order, excluding
/// nothing else; the caller checks the count.
pub fn list_frames(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if matches!(path.extension().and_then(|e| e.to_str()), Some("pgm" | "ppm")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::GridGeometry;

    fn geom() -> GridGeometry {
        GridGeometry::new(8, 6, 8).unwrap()
    }

    /// Smooth, band-limited test image.
    fn smooth_image(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, 1, |x, y, _| {
            let (x, y) = (x as f32, y as f32);
            0.5 + 0.25 * (x * 0.09).sin() * (y * 0.07).cos() + 0.1 * (0.05 * (x + y)).sin()
        })
        .unwrap()
    }

    #[test]
    fn upsample_uniform_and_zero() {
        let f = MotionField::uniform(geom(), 4.0, -2.0).unwrap();
        assert_eq!(upsample_field(&f), Flow::uniform(64, 48, 4.0, -2.0));
        assert!(upsample_field(&MotionField::zeros(geom())).data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn upsample_ramp_matches_closed_form() {
        let g = geom();
        let f = MotionField::from_fn(g, |ix, _| [ix as f32, 0.0]).unwrap();
        let flow = upsample_field(&f);
        for y in 0..g.frame_height {
            for x in 0..g.frame_width {
                let expect = ((x as f64 + 0.5) / 8.0 - 0.5).clamp(0.0, 7.0);
                let got = flow.get(x, y);
                assert!((got[0] as f64 - expect).abs() < 1e-4, "pixel {x}");
                assert_eq!(got[1], 0.0);
            }
        }
    }

    #[test]
    fn zero_flow_is_bit_exact_identity() {
        let img = Image::from_fn(13, 9, 3, |x, y, c| ((x * 31 + y * 17 + c * 7) % 97) as f32 / 96.0).unwrap();
        let out = backward_warp(&img, &Flow::uniform(13, 9, 0.0, 0.0)).unwrap();
        assert_eq!(out.image, img);
        assert!(out.mask.iter().all(|&m| m));
    }

    #[test]
    fn integer_shift_matches_index_oracle() {
        let img = Image::from_fn(40, 20, 1, |x, y, _| (x + 2 * y) as f32 / 80.0).unwrap();
        let out = backward_warp(&img, &Flow::uniform(40, 20, 10.0, 0.0)).unwrap();
        for y in 0..20 {
            for x in 0..40 {
                let i = y * 40 + x;
                if x + 10 < 40 {
                    assert!(out.mask[i]);
                    assert_eq!(out.image.data[i], img.get(x + 10, y, 0));
                } else {
                    assert!(!out.mask[i]);
                    assert_eq!(out.image.data[i], 0.0);
                }
            }
        }
    }

    #[test]
    fn all_out_of_bounds_gives_empty_frame() {
        let img = smooth_image(16, 16);
        let out = backward_warp(&img, &Flow::uniform(16, 16, 100.0, -100.0)).unwrap();
        assert!(out.image.data.iter().all(|&v| v == 0.0));
        assert_eq!(out.coverage(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let img = smooth_image(16, 16);
        assert!(backward_warp(&img, &Flow::uniform(15, 16, 0.0, 0.0)).is_err());
        assert!(render_stable(&img, &MotionField::zeros(geom())).is_err());
    }

    #[test]
    fn render_zero_and_diagonal_shift() {
        let g = geom();
        let img = smooth_image(64, 48);
        let same = render_stable(&img, &MotionField::zeros(g)).unwrap();
        assert_eq!(same.image, img);
        let out = render_stable(&img, &MotionField::uniform(g, 8.0, 8.0).unwrap()).unwrap();
        for y in 0..48 {
            for x in 0..64 {
                let inside = x + 8 < 64 && y + 8 < 48;
                assert_eq!(out.mask[y * 64 + x], inside);
                if inside {
                    assert_eq!(out.image.data[y * 64 + x], img.get(x + 8, y + 8, 0));
                }
            }
        }
    }

    #[test]
    fn apply_then_undo_recovers_interior() {
        let g = GridGeometry::new(16, 12, 8).unwrap();
        let img = smooth_image(128, 96);
        for &(dx, dy) in &[(3.3f32, -1.7f32), (12.5, 9.25), (-16.0, 4.5)] {
            let shaken = render_stable(&img, &MotionField::uniform(g, dx, dy).unwrap()).unwrap();
            let undone = render_stable(&shaken.image, &MotionField::uniform(g, -dx, -dy).unwrap()).unwrap();
            let mut err = 0.0f64;
            let mut n = 0usize;
            for y in 0..96 {
                for x in 0..128 {
                    // Interior: every shaken pixel feeding this one was valid.
                    if !undone.mask[y * 128 + x] {
                        continue;
                    }
                    let sx = x as f32 - dx;
                    let sy = y as f32 - dy;
                    let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
                    let (x1, y1) = ((x0 + 1).min(127), (y0 + 1).min(95));
                    let feeds_valid = [(x0, y0), (x1, y0), (x0, y1), (x1, y1)]
                        .iter()
                        .all(|&(px, py)| shaken.mask[py * 128 + px]);
                    if feeds_valid {
                        err += (undone.image.data[y * 128 + x] - img.get(x, y, 0)).abs() as f64;
                        n += 1;
                    }
                }
            }
            assert!(n > 0);
            assert!(err / (n as f64) < 2e-2, "shift ({dx},{dy}): {}", err / n as f64);
        }
    }

    #[test]
    fn warped_values_stay_within_neighbourhood_range() {
        let img = Image::from_fn(20, 20, 1, |x, y, _| ((x * 7 + y * 3) % 11) as f32 / 10.0).unwrap();
        let flow = Flow {
            width: 20,
            height: 20,
            data: (0..800).map(|i| ((i * 37 % 23) as f32 - 11.0) * 0.37).collect(),
        };
        let out = backward_warp(&img, &flow).unwrap();
        for y in 0..20 {
            for x in 0..20 {
                if !out.mask[y * 20 + x] {
                    assert_eq!(out.image.data[y * 20 + x], 0.0);
                    continue;
                }
                let [dx, dy] = flow.get(x, y);
                let sx = x as f32 + dx;
                let sy = y as f32 + dy;
                let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
                let (x1, y1) = ((x0 + 1).min(19), (y0 + 1).min(19));
                let vals = [img.get(x0, y0, 0), img.get(x1, y0, 0), img.get(x0, y1, 0), img.get(x1, y1, 0)];
                let lo = vals.iter().cloned().fold(f32::INFINITY, f32::min);
                let hi = vals.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                let v = out.image.data[y * 20 + x];
                assert!(v >= lo - 1e-6 && v <= hi + 1e-6);
            }
        }
    }

    #[test]
    fn mask_false_iff_sample_leaves_frame() {
        let img = smooth_image(10, 10);
        for &(dx, dy) in &[(0.0f32, 0.0f32), (0.5, 0.0), (-0.25, 9.0), (9.0, 9.0), (9.01, 0.0)] {
            let out = backward_warp(&img, &Flow::uniform(10, 10, dx, dy)).unwrap();
            for y in 0..10 {
                for x in 0..10 {
                    let sx = x as f32 + dx;
                    let sy = y as f32 + dy;
                    let inside = (0.0..=9.0).contains(&sx) && (0.0..=9.0).contains(&sy);
                    assert_eq!(out.mask[y * 10 + x], inside);
                }
            }
        }
    }

    #[test]
    fn rendered_sequence_writes_frames_and_coverage() {
        let dir = tempfile::tempdir().unwrap();
        let img = smooth_image(16, 8);
        let frames = vec![
            backward_warp(&img, &Flow::uniform(16, 8, 0.0, 0.0)).unwrap(),
            backward_warp(&img, &Flow::uniform(16, 8, 8.0, 0.0)).unwrap(),
        ];
        write_rendered_sequence(dir.path(), &frames).unwrap();
        let listed = list_frames(dir.path()).unwrap();
        assert_eq!(listed.len(), 2);
        let cov = std::fs::read_to_string(dir.path().join("coverage.txt")).unwrap();
        assert_eq!(cov, "1.000000\n0.500000\n");
    }
}
