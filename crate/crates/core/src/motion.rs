//! Motion-field geometry and the additive motion algebra.
//!
//! A [`MotionField`] is a grid of per-cell displacements in full-resolution
//! pixel units, component order `(dx, dy)`, stored row-major. Inter-frame
//! motions describe where content moves between consecutive frames; warp
//! fields describe, for every output cell, where to read the source frame.
//! Both compose by element-wise addition.

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};

/// Frame and grid dimensions shared by every field in a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridGeometry {
    pub frame_width: usize,
    pub frame_height: usize,
    pub grid_width: usize,
    pub grid_height: usize,
    /// Pixels per grid cell along each axis.
    pub scale: usize,
}

impl Default for GridGeometry {
    /// 640×360 frames on an 80×45 grid with 8-pixel cells.
    fn default() -> Self {
        GridGeometry {
            frame_width: 640,
            frame_height: 360,
            grid_width: 80,
            grid_height: 45,
            scale: 8,
        }
    }
}

impl fmt::Display for GridGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{} frame, {}x{} grid, scale {}",
            self.frame_width, self.frame_height, self.grid_width, self.grid_height, self.scale
        )
    }
}

impl GridGeometry {
    /// Geometry with the frame size derived from the grid and scale.
    pub fn new(grid_width: usize, grid_height: usize, scale: usize) -> Result<Self> {
        Self::with_frame(
            grid_width * scale,
            grid_height * scale,
            grid_width,
            grid_height,
            scale,
        )
    }

    /// Fully specified geometry; the frame must be exactly `grid × scale`.
    pub fn with_frame(
        frame_width: usize,
        frame_height: usize,
        grid_width: usize,
        grid_height: usize,
        scale: usize,
    ) -> Result<Self> {
        if scale < 1 {
            return Err(Error::InvalidGeometry("scale must be >= 1".into()));
        }
        if grid_width < 2 || grid_height < 2 || frame_width < 2 || frame_height < 2 {
            return Err(Error::InvalidGeometry(format!(
                "all dimensions must be >= 2 (frame {frame_width}x{frame_height}, grid {grid_width}x{grid_height})"
            )));
        }
        if frame_width != grid_width * scale || frame_height != grid_height * scale {
            return Err(Error::InvalidGeometry(format!(
                "frame {frame_width}x{frame_height} is not grid {grid_width}x{grid_height} times scale {scale}"
            )));
        }
        Ok(GridGeometry {
            frame_width,
            frame_height,
            grid_width,
            grid_height,
            scale,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.grid_width * self.grid_height
    }

    /// Number of scalar values in a field: two per cell.
    pub fn value_count(&self) -> usize {
        2 * self.cell_count()
    }

    /// Center of grid cell `(ix, iy)` in frame pixel coordinates, where pixel
    /// `j` has its center at coordinate `j`.
    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        let s = self.scale as f64;
        ((ix as f64 + 0.5) * s - 0.5, (iy as f64 + 0.5) * s - 0.5)
    }

    /// Center of the frame in pixel coordinates.
    pub fn frame_center(&self) -> (f64, f64) {
        (
            (self.frame_width as f64 - 1.0) / 2.0,
            (self.frame_height as f64 - 1.0) / 2.0,
        )
    }

    /// Largest displacement magnitude a valid field may carry.
    pub fn displacement_bound(&self) -> f32 {
        2.0 * self.frame_width.max(self.frame_height) as f32
    }

    pub fn ensure_same(&self, other: &GridGeometry) -> Result<()> {
        if self != other {
            return Err(Error::GeometryMismatch {
                expected: self.to_string(),
                got: other.to_string(),
            });
        }
        Ok(())
    }
}

/// A validated grid of 2D displacements.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionField {
    geometry: GridGeometry,
    data: Vec<f32>,
}

impl MotionField {
    /// Wraps raw interleaved `(dx, dy)` data, checking length, finiteness and
    /// the displacement sanity bound.
    pub fn new(geometry: GridGeometry, data: Vec<f32>) -> Result<Self> {
        if data.len() != geometry.value_count() {
            return Err(Error::InvalidInput(format!(
                "field has {} values, geometry needs {}",
                data.len(),
                geometry.value_count()
            )));
        }
        validate_values(&geometry, &data)?;
        Ok(MotionField { geometry, data })
    }

    pub fn zeros(geometry: GridGeometry) -> Self {
        MotionField {
            geometry,
            data: vec![0.0; geometry.value_count()],
        }
    }

    pub fn uniform(geometry: GridGeometry, dx: f32, dy: f32) -> Result<Self> {
        let data = std::iter::repeat_n([dx, dy], geometry.cell_count())
            .flatten()
            .collect();
        Self::new(geometry, data)
    }

    /// Builds a field by evaluating `f(ix, iy)` for every cell.
    pub fn from_fn(geometry: GridGeometry, mut f: impl FnMut(usize, usize) -> [f32; 2]) -> Result<Self> {
        let mut data = Vec::with_capacity(geometry.value_count());
        for iy in 0..geometry.grid_height {
            for ix in 0..geometry.grid_width {
                data.extend_from_slice(&f(ix, iy));
            }
        }
        Self::new(geometry, data)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, ix: usize, iy: usize) -> [f32; 2] {
        let i = 2 * (iy * self.geometry.grid_width + ix);
        [self.data[i], self.data[i + 1]]
    }

    /// Element-wise sum `self + other`.
    pub fn compose(&self, other: &MotionField) -> Result<MotionField> {
        self.zip_with(other, |a, b| a + b)
    }

    /// Element-wise difference `self - other`.
    pub fn difference(&self, other: &MotionField) -> Result<MotionField> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn negate(&self) -> MotionField {
        MotionField {
            geometry: self.geometry,
            data: self.data.iter().map(|v| -v).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Mean displacement over all cells, accumulated in f64.
    pub fn mean(&self) -> [f64; 2] {
        let mut acc = [0.0f64; 2];
        for cell in self.data.chunks_exact(2) {
            acc[0] += cell[0] as f64;
            acc[1] += cell[1] as f64;
        }
        let n = self.geometry.cell_count() as f64;
        [acc[0] / n, acc[1] / n]
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    fn zip_with(&self, other: &MotionField, op: impl Fn(f32, f32) -> f32) -> Result<MotionField> {
        self.geometry.ensure_same(&other.geometry)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| op(a, b))
            .collect();
        MotionField::new(self.geometry, data)
    }
}

fn validate_values(geometry: &GridGeometry, data: &[f32]) -> Result<()> {
    let bound = geometry.displacement_bound();
    for (index, &value) in data.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite { index });
        }
        if value.abs() > bound {
            return Err(Error::OutOfBounds { index, value, bound });
        }
    }
    Ok(())
}

/// `a + b`, element-wise.
pub fn compose_additive(a: &MotionField, b: &MotionField) -> Result<MotionField> {
    a.compose(b)
}

pub fn negate(a: &MotionField) -> MotionField {
    a.negate()
}

/// Sparse motions sampled on a uniform vertex mesh covering a frame.
///
/// Vertex `(row, col)` sits at pixel coordinate
/// `(col * (W-1)/(cols-1), row * (H-1)/(rows-1))`, so the mesh spans the
/// frame's pixel centers edge to edge.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexMotions {
    pub frame_width: usize,
    pub frame_height: usize,
    pub rows: usize,
    pub cols: usize,
    /// `rows × cols` displacements, row-major.
    pub motions: Vec<[f32; 2]>,
}

impl VertexMotions {
    pub fn from_fn(
        frame_width: usize,
        frame_height: usize,
        rows: usize,
        cols: usize,
        mut f: impl FnMut(f64, f64) -> [f32; 2],
    ) -> Self {
        let mut motions = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let (x, y) = vertex_position(frame_width, frame_height, rows, cols, r, c);
                motions.push(f(x, y));
            }
        }
        VertexMotions {
            frame_width,
            frame_height,
            rows,
            cols,
            motions,
        }
    }

    pub fn vertex_position(&self, row: usize, col: usize) -> (f64, f64) {
        vertex_position(self.frame_width, self.frame_height, self.rows, self.cols, row, col)
    }
}

fn vertex_position(w: usize, h: usize, rows: usize, cols: usize, r: usize, c: usize) -> (f64, f64) {
    let sx = (w as f64 - 1.0) / (cols as f64 - 1.0);
    let sy = (h as f64 - 1.0) / (rows as f64 - 1.0);
    (c as f64 * sx, r as f64 * sy)
}

/// Densifies sparse vertex motions onto the grid: each cell takes the
/// bilinear interpolation of its four enclosing vertices, evaluated at the
/// cell center.
pub fn rasterize_mesh(vertices: &VertexMotions, geometry: GridGeometry) -> Result<MotionField> {
    let VertexMotions {
        frame_width,
        frame_height,
        rows,
        cols,
        ref motions,
    } = *vertices;
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidInput(format!(
            "vertex mesh must be at least 2x2, got {rows}x{cols}"
        )));
    }
    if motions.len() != rows * cols {
        return Err(Error::InvalidInput(format!(
            "vertex mesh {rows}x{cols} carries {} motions",
            motions.len()
        )));
    }
    if frame_width != geometry.frame_width || frame_height != geometry.frame_height {
        return Err(Error::GeometryMismatch {
            expected: format!("{}x{} frame", geometry.frame_width, geometry.frame_height),
            got: format!("vertex mesh over {frame_width}x{frame_height} frame"),
        });
    }
    let to_u = (cols as f64 - 1.0) / (frame_width as f64 - 1.0);
    let to_v = (rows as f64 - 1.0) / (frame_height as f64 - 1.0);
    MotionField::from_fn(geometry, |ix, iy| {
        let (px, py) = geometry.cell_center(ix, iy);
        let (c0, fx) = split_coordinate(px * to_u, cols);
        let (r0, fy) = split_coordinate(py * to_v, rows);
        let at = |r: usize, c: usize| motions[r * cols + c];
        let (m00, m01, m10, m11) = (at(r0, c0), at(r0, c0 + 1), at(r0 + 1, c0), at(r0 + 1, c0 + 1));
        let mut out = [0.0f32; 2];
        for k in 0..2 {
            let top = m00[k] as f64 * (1.0 - fx) + m01[k] as f64 * fx;
            let bottom = m10[k] as f64 * (1.0 - fx) + m11[k] as f64 * fx;
            out[k] = (top * (1.0 - fy) + bottom * fy) as f32;
        }
        out
    })
}

/// Splits a continuous mesh coordinate into a base index in `[0, n-2]` and a
/// fractional weight.
fn split_coordinate(u: f64, n: usize) -> (usize, f64) {
    let u = u.clamp(0.0, n as f64 - 1.0);
    let i = (u.floor() as usize).min(n - 2);
    (i, u - i as f64)
}

/// Fixed-capacity FIFO of the most recent motion fields, oldest first.
///
/// The window always holds exactly `capacity` entries; before enough motions
/// have arrived the oldest slots are zero fields.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionWindow {
    geometry: GridGeometry,
    capacity: usize,
    entries: VecDeque<MotionField>,
}

impl MotionWindow {
    /// Zero-filled window.
    pub fn new(geometry: GridGeometry, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidInput("window capacity must be >= 1".into()));
        }
        let mut entries = VecDeque::with_capacity(capacity);
        entries.extend(std::iter::repeat_n(MotionField::zeros(geometry), capacity));
        Ok(MotionWindow {
            geometry,
            capacity,
            entries,
        })
    }

    /// Window holding `fields` as its newest entries, zero-padded at the old
    /// end. Extra leading fields beyond the capacity are dropped.
    pub fn from_fields<'a>(
        geometry: GridGeometry,
        capacity: usize,
        fields: impl IntoIterator<Item = &'a MotionField>,
    ) -> Result<Self> {
        let mut window = Self::new(geometry, capacity)?;
        for f in fields {
            window.push(f.clone())?;
        }
        Ok(window)
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Drops the oldest entry and appends `field`.
    pub fn push(&mut self, field: MotionField) -> Result<()> {
        self.geometry.ensure_same(field.geometry())?;
        self.entries.pop_front();
        self.entries.push_back(field);
        Ok(())
    }

    /// Non-mutating form of [`push`](Self::push).
    pub fn pushed(&self, field: MotionField) -> Result<Self> {
        let mut next = self.clone();
        next.push(field)?;
        Ok(next)
    }

    /// Entries from oldest to newest.
    pub fn entries(&self) -> impl ExactSizeIterator<Item = &MotionField> {
        self.entries.iter()
    }

    pub fn newest(&self) -> &MotionField {
        self.entries.back().expect("window is never empty")
    }

    pub fn is_all_zero(&self) -> bool {
        self.entries.iter().all(MotionField::is_zero)
    }
}

/// Cumulative camera path: `positions[t]` is the sum of the first `t`
/// motions, with `positions[0]` the zero field. Sums are kept in f64.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraPath {
    geometry: GridGeometry,
    positions: Vec<Vec<f64>>,
}

impl CameraPath {
    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    /// Number of positions, one more than the number of motions.
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, t: usize) -> &[f64] {
        &self.positions[t]
    }

    /// Position `t` rounded to a 32-bit field.
    pub fn position_field(&self, t: usize) -> Result<MotionField> {
        MotionField::new(
            self.geometry,
            self.positions[t].iter().map(|&v| v as f32).collect(),
        )
    }

    /// First differences of the path, i.e. the motions it was built from.
    pub fn differences(&self) -> Vec<Vec<f64>> {
        self.positions
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect())
            .collect()
    }

    /// Mean `(x, y)` position over all cells at every timestamp.
    pub fn mean_translation(&self) -> Vec<[f64; 2]> {
        let n = self.geometry.cell_count() as f64;
        self.positions
            .iter()
            .map(|p| {
                let mut acc = [0.0; 2];
                for c in p.chunks_exact(2) {
                    acc[0] += c[0];
                    acc[1] += c[1];
                }
                [acc[0] / n, acc[1] / n]
            })
            .collect()
    }
}

/// Prefix sums of `motions`, with a zero field prepended.
pub fn accumulate_path(motions: &[MotionField]) -> Result<CameraPath> {
    let first = motions
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot accumulate an empty motion sequence".into()))?;
    let geometry = *first.geometry();
    let mut positions = Vec::with_capacity(motions.len() + 1);
    let mut current = vec![0.0f64; geometry.value_count()];
    positions.push(current.clone());
    for m in motions {
        geometry.ensure_same(m.geometry())?;
        for (p, &v) in current.iter_mut().zip(m.data()) {
            *p += v as f64;
        }
        positions.push(current.clone());
    }
    Ok(CameraPath {
        geometry,
        positions,
    })
}
