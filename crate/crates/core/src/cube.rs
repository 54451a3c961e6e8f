//! Hyperspectral cube and observation-mask data model.
//!
//! A cube stores `n_bands` band images over a `width x height` pixel grid in
//! band-sequential order: all of band 0 row-major, then band 1, and so on.
//! The matrix view is the `n_bands x n` array whose column `i` is the
//! spectrum of pixel `i`, with `i = row * width + col`; because of the
//! band-sequential layout that view is exactly the stored buffer.

use ndarray::{Array2, ArrayView2, ArrayViewMut2};

use crate::error::{Error, Result};

/// Storage precision of a cube on disk. Values are always `f64` in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

/// A hyperspectral data cube (reflectance or count units, dimensionless).
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    width: usize,
    height: usize,
    n_bands: usize,
    /// `width * height * n_bands` samples, band-sequential.
    values: Vec<f64>,
    /// Precision to use when the cube is written back to disk.
    pub dtype: Dtype,
}

impl HsiCube {
    pub fn new(width: usize, height: usize, n_bands: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || n_bands == 0 {
            return Err(Error::InvalidArg(format!(
                "cube dimensions must be positive, got {width}x{height}x{n_bands}"
            )));
        }
        if values.len() != width * height * n_bands {
            return Err(Error::DimMismatch(format!(
                "cube {width}x{height}x{n_bands} needs {} values, got {}",
                width * height * n_bands,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value {} at flat index {pos}",
                values[pos]
            )));
        }
        Ok(HsiCube {
            width,
            height,
            n_bands,
            values,
            dtype: Dtype::F64,
        })
    }

    pub fn zeros(width: usize, height: usize, n_bands: usize) -> Self {
        HsiCube::new(width, height, n_bands, vec![0.0; width * height * n_bands])
            .expect("positive dimensions")
    }

    /// Build a cube from its `n_bands x n` matrix view.
    pub fn from_matrix(width: usize, height: usize, m: &Array2<f64>) -> Result<Self> {
        if m.ncols() != width * height {
            return Err(Error::DimMismatch(format!(
                "matrix has {} columns, grid has {} pixels",
                m.ncols(),
                width * height
            )));
        }
        let values = if let Some(s) = m.as_slice() {
            s.to_vec()
        } else {
            m.iter().copied().collect()
        };
        HsiCube::new(width, height, m.nrows(), values)
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn n_bands(&self) -> usize {
        self.n_bands
    }
    /// Pixel count `n = width * height`.
    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `n_bands x n` matrix view (no copy).
    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.n_bands, self.n_pixels()), &self.values)
            .expect("length invariant")
    }

    pub fn matrix_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        let n = self.n_pixels();
        ArrayViewMut2::from_shape((self.n_bands, n), &mut self.values).expect("length invariant")
    }

    /// Band `b` as a `height x width` image view (no copy).
    pub fn band(&self, b: usize) -> ArrayView2<'_, f64> {
        let n = self.n_pixels();
        ArrayView2::from_shape((self.height, self.width), &self.values[b * n..(b + 1) * n])
            .expect("length invariant")
    }

    /// Spectrum of pixel `i` as an owned vector.
    pub fn spectrum(&self, pixel: usize) -> Vec<f64> {
        let n = self.n_pixels();
        (0..self.n_bands)
            .map(|b| self.values[b * n + pixel])
            .collect()
    }

    pub fn set_spectrum(&mut self, pixel: usize, spectrum: &[f64]) {
        let n = self.n_pixels();
        for (b, &v) in spectrum.iter().enumerate() {
            self.values[b * n + pixel] = v;
        }
    }

    /// Checked against the finite-values invariant after in-place edits.
    pub fn validate(&self) -> Result<()> {
        if let Some(pos) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value at flat index {pos}")));
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &HsiCube) -> bool {
        self.width == other.width && self.height == other.height && self.n_bands == other.n_bands
    }
}

/// Per-(pixel, band) observation flags; `true` means the sample exists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationMask {
    width: usize,
    height: usize,
    n_bands: usize,
    /// `bits[band * n + pixel]`, matching the cube layout.
    bits: Vec<bool>,
}

impl ObservationMask {
    pub fn new(width: usize, height: usize, n_bands: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || n_bands == 0 {
            return Err(Error::InvalidArg("mask dimensions must be positive".into()));
        }
        if bits.len() != width * height * n_bands {
            return Err(Error::DimMismatch(format!(
                "mask {width}x{height}x{n_bands} needs {} bits, got {}",
                width * height * n_bands,
                bits.len()
            )));
        }
        Ok(ObservationMask {
            width,
            height,
            n_bands,
            bits,
        })
    }

    pub fn all_observed(width: usize, height: usize, n_bands: usize) -> Self {
        ObservationMask::new(width, height, n_bands, vec![true; width * height * n_bands])
            .expect("positive dimensions")
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn n_bands(&self) -> usize {
        self.n_bands
    }
    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn matches_cube(&self, cube: &HsiCube) -> bool {
        self.width == cube.width() && self.height == cube.height() && self.n_bands == cube.n_bands()
    }

    #[inline]
    pub fn is_observed(&self, pixel: usize, band: usize) -> bool {
        self.bits[band * self.n_pixels() + pixel]
    }

    pub fn set(&mut self, pixel: usize, band: usize, observed: bool) {
        let n = self.n_pixels();
        self.bits[band * n + pixel] = observed;
    }

    /// Number of observed bands at `pixel`.
    pub fn observed_count(&self, pixel: usize) -> usize {
        (0..self.n_bands)
            .filter(|&b| self.is_observed(pixel, b))
            .count()
    }

    /// Indices of observed bands at `pixel`, ascending.
    pub fn observed_bands(&self, pixel: usize) -> Vec<usize> {
        (0..self.n_bands)
            .filter(|&b| self.is_observed(pixel, b))
            .collect()
    }

    pub fn is_complete(&self, pixel: usize) -> bool {
        (0..self.n_bands).all(|b| self.is_observed(pixel, b))
    }

    pub fn complete_pixels(&self) -> Vec<usize> {
        (0..self.n_pixels())
            .filter(|&i| self.is_complete(i))
            .collect()
    }

    pub fn incomplete_pixels(&self) -> Vec<usize> {
        (0..self.n_pixels())
            .filter(|&i| !self.is_complete(i))
            .collect()
    }

    pub fn is_all_observed(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }
}

/// Per-band `(min, max)` recorded by [`normalize_bands`], in the input's
/// units; inverts the normalization exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct BandScaling {
    pub ranges: Vec<(f64, f64)>,
}

/// Affinely map every band onto `[0, 1]`, recording the per-band ranges.
///
/// Constant bands are a hard error: mapping them to zero would lose the
/// information needed to invert.
pub fn normalize_bands(cube: &HsiCube) -> Result<(HsiCube, BandScaling)> {
    let n = cube.n_pixels();
    let mut out = cube.clone();
    let mut ranges = Vec::with_capacity(cube.n_bands());
    for b in 0..cube.n_bands() {
        let band = &cube.values()[b * n..(b + 1) * n];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in band {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi <= lo {
            return Err(Error::DegenerateBand { band: b, value: lo });
        }
        let scale = 1.0 / (hi - lo);
        for v in &mut out.values[b * n..(b + 1) * n] {
            *v = (*v - lo) * scale;
        }
        ranges.push((lo, hi));
    }
    Ok((out, BandScaling { ranges }))
}

/// Invert [`normalize_bands`] using the recorded per-band ranges.
pub fn denormalize_bands(cube: &HsiCube, scaling: &BandScaling) -> Result<HsiCube> {
    if scaling.ranges.len() != cube.n_bands() {
        return Err(Error::DimMismatch(format!(
            "scaling has {} bands, cube has {}",
            scaling.ranges.len(),
            cube.n_bands()
        )));
    }
    let n = cube.n_pixels();
    let mut out = cube.clone();
    for (b, &(lo, hi)) in scaling.ranges.iter().enumerate() {
        for v in &mut out.values[b * n..(b + 1) * n] {
            *v = *v * (hi - lo) + lo;
        }
    }
    Ok(out)
}
