//! Dense float64 containers: images, per-pixel 2-vector fields and sinograms.

use crate::error::{Error, Result};

/// Flat float64 storage with the Euclidean inner product.
pub trait VectorSpace: Clone {
    fn as_slice(&self) -> &[f64];
    fn as_mut_slice(&mut self) -> &mut [f64];

    /// Zero element with the same shape as `self`.
    fn zeros_like(&self) -> Self;

    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn is_empty(&self) -> bool {
        self.as_slice().is_empty()
    }

    fn dot(&self, other: &Self) -> f64 {
        self.as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| a * b)
            .sum()
    }

    fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `self += alpha * x`
    fn axpy(&mut self, alpha: f64, x: &Self) {
        for (a, b) in self.as_mut_slice().iter_mut().zip(x.as_slice()) {
            *a += alpha * b;
        }
    }

    fn scale(&mut self, alpha: f64) {
        for a in self.as_mut_slice() {
            *a *= alpha;
        }
    }

    fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    /// `a * self + b * other`, evaluated entrywise as `a*x + b*y`.
    fn lin_comb(&self, a: f64, other: &Self, b: f64) -> Self {
        let mut out = self.zeros_like();
        for ((o, x), y) in out
            .as_mut_slice()
            .iter_mut()
            .zip(self.as_slice())
            .zip(other.as_slice())
        {
            *o = a * x + b * y;
        }
        out
    }

    fn sub(&self, other: &Self) -> Self {
        let mut out = self.zeros_like();
        for ((o, x), y) in out
            .as_mut_slice()
            .iter_mut()
            .zip(self.as_slice())
            .zip(other.as_slice())
        {
            *o = x - y;
        }
        out
    }

    fn add(&self, other: &Self) -> Self {
        let mut out = self.zeros_like();
        for ((o, x), y) in out
            .as_mut_slice()
            .iter_mut()
            .zip(self.as_slice())
            .zip(other.as_slice())
        {
            *o = x + y;
        }
        out
    }

    fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }

    fn max_abs(&self) -> f64 {
        self.as_slice().iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Size in bytes of the float64 payload.
    fn byte_len(&self) -> usize {
        self.len() * std::mem::size_of::<f64>()
    }
}

/// Row-major 2D scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Image {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "image {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Image { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Image { rows, cols, data }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn ensure_shape(&self, shape: (usize, usize)) -> Result<()> {
        if self.shape() == shape {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: shape,
                found: self.shape(),
            })
        }
    }
}

impl VectorSpace for Image {
    fn as_slice(&self) -> &[f64] {
        &self.data
    }

    fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn zeros_like(&self) -> Self {
        Image::zeros(self.rows, self.cols)
    }
}

/// Per-pixel 2-vector field `(w_x, w_y)` living in the codomain of the
/// discrete gradient. Stored as two consecutive row-major planes.
#[derive(Debug, Clone, PartialEq)]
pub struct DualField {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DualField {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DualField {
            rows,
            cols,
            data: vec![0.0; 2 * rows * cols],
        }
    }

    pub fn from_planes(x: Image, y: Image) -> Result<Self> {
        y.ensure_shape(x.shape())?;
        let (rows, cols) = x.shape();
        let mut data = x.into_vec();
        data.extend(y.into_vec());
        Ok(DualField { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn x(&self) -> &[f64] {
        &self.data[..self.pixels()]
    }

    pub fn y(&self) -> &[f64] {
        &self.data[self.pixels()..]
    }

    pub fn planes_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        let n = self.pixels();
        self.data.split_at_mut(n)
    }

    pub fn pixel(&self, p: usize) -> (f64, f64) {
        (self.data[p], self.data[self.pixels() + p])
    }

    pub fn set_pixel(&mut self, p: usize, value: (f64, f64)) {
        let n = self.pixels();
        self.data[p] = value.0;
        self.data[n + p] = value.1;
    }

    pub fn x_plane(&self) -> Image {
        Image {
            rows: self.rows,
            cols: self.cols,
            data: self.x().to_vec(),
        }
    }

    pub fn y_plane(&self) -> Image {
        Image {
            rows: self.rows,
            cols: self.cols,
            data: self.y().to_vec(),
        }
    }

    /// Pointwise Euclidean norm `|w|_2`, evaluated as `sqrt(x*x + y*y)`.
    pub fn pointwise_norm(&self) -> Image {
        let data = self
            .x()
            .iter()
            .zip(self.y())
            .map(|(a, b)| pixel_norm(*a, *b))
            .collect();
        Image {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }
}

impl VectorSpace for DualField {
    fn as_slice(&self) -> &[f64] {
        &self.data
    }

    fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn zeros_like(&self) -> Self {
        DualField::zeros(self.rows, self.cols)
    }
}

#[inline]
pub(crate) fn pixel_norm(x: f64, y: f64) -> f64 {
    (x * x + y * y).sqrt()
}

/// Parallel-beam projection data: one row per angle, `n_det` detector bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    angles: Vec<f64>,
    n_det: usize,
    data: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(angles: Vec<f64>, n_det: usize) -> Self {
        let len = angles.len() * n_det;
        Sinogram {
            angles,
            n_det,
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(angles: Vec<f64>, n_det: usize, data: Vec<f64>) -> Result<Self> {
        validate_angles(&angles)?;
        if n_det == 0 {
            return Err(Error::invalid("sinogram needs at least one detector bin"));
        }
        if data.len() != angles.len() * n_det {
            return Err(Error::invalid(format!(
                "sinogram {}x{n_det} needs {} values, got {}",
                angles.len(),
                angles.len() * n_det,
                data.len()
            )));
        }
        Ok(Sinogram {
            angles,
            n_det,
            data,
        })
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn n_det(&self) -> usize {
        self.n_det
    }

    pub fn row(&self, a: usize) -> &[f64] {
        &self.data[a * self.n_det..(a + 1) * self.n_det]
    }

    pub fn row_mut(&mut self, a: usize) -> &mut [f64] {
        &mut self.data[a * self.n_det..(a + 1) * self.n_det]
    }

    /// View the payload as an image (angles down, detector bins across).
    pub fn to_image(&self) -> Image {
        Image {
            rows: self.n_angles(),
            cols: self.n_det,
            data: self.data.clone(),
        }
    }
}

impl VectorSpace for Sinogram {
    fn as_slice(&self) -> &[f64] {
        &self.data
    }

    fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn zeros_like(&self) -> Self {
        Sinogram::zeros(self.angles.clone(), self.n_det)
    }
}

/// Angles must be non-empty, strictly increasing and inside `[0, pi)`.
pub fn validate_angles(angles: &[f64]) -> Result<()> {
    if angles.is_empty() {
        return Err(Error::invalid("angle list is empty"));
    }
    if angles
        .iter()
        .any(|a| !a.is_finite() || *a < 0.0 || *a >= std::f64::consts::PI)
    {
        return Err(Error::invalid("angles must lie in [0, pi)"));
    }
    if angles.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("angles must be strictly increasing"));
    }
    Ok(())
}

/// `n` angles uniformly spaced in `[0, pi)`.
pub fn uniform_angles(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| k as f64 * std::f64::consts::PI / n as f64)
        .collect()
}
