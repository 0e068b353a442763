//! Discrete Fourier transform geometry and the complex k-space field.
//!
//! Frequencies along an axis of length `N` are indexed by the centered range
//! `{-N/2, ..., 0, ..., N/2 - 1}` so that parameter functions can be written
//! in terms of distance from the k-space origin. Internally values are stored
//! in standard DFT order (row-major, frequency 0 first); [`KGrid::storage_index`]
//! maps a centered index pair to its storage slot.
//!
//! Transforms use the unitary (orthonormal) convention: both directions carry
//! a `1/sqrt(n_x * n_y)` factor, so total power is preserved and Parseval's
//! identity holds without extra scaling.
//!
//! Real images have conjugate (Hermitian) symmetric transforms. The
//! independent half-plane used throughout this crate is `k_y > 0` together
//! with the `k_x > 0` parts of the two self-reflecting rows `k_y = 0` and
//! `k_y = -N_y/2`; the four points that are their own conjugate reflection
//! (`(0,0)`, `(-N_x/2,0)`, `(0,-N_y/2)`, `(-N_x/2,-N_y/2)`) are constrained
//! to be real.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// k-space geometry of an even-sized 2-D grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KGrid {
    n_x: usize,
    n_y: usize,
    fov_x: f64,
    fov_y: f64,
}

impl KGrid {
    /// Grid with unit field of view per pixel (physical radius = index radius).
    pub fn new(n_x: usize, n_y: usize) -> Result<Self> {
        Self::with_fov(n_x, n_y, n_x as f64, n_y as f64)
    }

    pub fn with_fov(n_x: usize, n_y: usize, fov_x: f64, fov_y: f64) -> Result<Self> {
        if n_x == 0 || n_y == 0 || n_x % 2 != 0 || n_y % 2 != 0 {
            return Err(Error::Dimension(format!(
                "grid dimensions must be positive and even, got {n_x}x{n_y}"
            )));
        }
        if !(fov_x > 0.0 && fov_y > 0.0) {
            return Err(Error::Dimension(format!(
                "field of view must be positive, got {fov_x}x{fov_y}"
            )));
        }
        Ok(KGrid {
            n_x,
            n_y,
            fov_x,
            fov_y,
        })
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn fov_x(&self) -> f64 {
        self.fov_x
    }

    pub fn fov_y(&self) -> f64 {
        self.fov_y
    }

    /// Number of k-space points (= number of pixels).
    pub fn len(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn half_x(&self) -> i32 {
        (self.n_x / 2) as i32
    }

    fn half_y(&self) -> i32 {
        (self.n_y / 2) as i32
    }

    /// True when the centered index pair lies in range.
    pub fn contains(&self, kx: i32, ky: i32) -> bool {
        kx >= -self.half_x() && kx < self.half_x() && ky >= -self.half_y() && ky < self.half_y()
    }

    /// Storage slot (standard DFT order) of a centered index pair.
    pub fn storage_index(&self, kx: i32, ky: i32) -> usize {
        debug_assert!(self.contains(kx, ky), "k=({kx},{ky}) out of range");
        let ix = kx.rem_euclid(self.n_x as i32) as usize;
        let iy = ky.rem_euclid(self.n_y as i32) as usize;
        iy * self.n_x + ix
    }

    /// Centered index pair of a storage slot.
    pub fn frequency_at(&self, index: usize) -> (i32, i32) {
        let ix = (index % self.n_x) as i32;
        let iy = (index / self.n_x) as i32;
        let kx = if ix < self.half_x() {
            ix
        } else {
            ix - self.n_x as i32
        };
        let ky = if iy < self.half_y() {
            iy
        } else {
            iy - self.n_y as i32
        };
        (kx, ky)
    }

    /// Index radius `|k| = sqrt(k_x^2 + k_y^2)`.
    pub fn radius(&self, kx: i32, ky: i32) -> f64 {
        ((kx as f64).powi(2) + (ky as f64).powi(2)).sqrt()
    }

    /// Physical radius `sqrt((k_x/fov_x)^2 + (k_y/fov_y)^2)`, invariant under
    /// resolution changes at fixed field of view.
    pub fn physical_radius(&self, kx: i32, ky: i32) -> f64 {
        ((kx as f64 / self.fov_x).powi(2) + (ky as f64 / self.fov_y).powi(2)).sqrt()
    }

    /// Conjugate reflection of a centered index pair, wrapped back into range.
    pub fn conjugate(&self, kx: i32, ky: i32) -> (i32, i32) {
        (self.wrap_x(-kx), self.wrap_y(-ky))
    }

    fn wrap_x(&self, kx: i32) -> i32 {
        if kx >= self.half_x() {
            kx - self.n_x as i32
        } else if kx < -self.half_x() {
            kx + self.n_x as i32
        } else {
            kx
        }
    }

    fn wrap_y(&self, ky: i32) -> i32 {
        if ky >= self.half_y() {
            ky - self.n_y as i32
        } else if ky < -self.half_y() {
            ky + self.n_y as i32
        } else {
            ky
        }
    }

    /// Points equal to their own conjugate reflection; their Fourier values
    /// must be real for a real image.
    pub fn is_self_conjugate(&self, kx: i32, ky: i32) -> bool {
        (kx == 0 || kx == -self.half_x()) && (ky == 0 || ky == -self.half_y())
    }

    /// Membership in the independent half-plane. Exactly one of each
    /// non-self-conjugate pair `(k, -k)` is canonical.
    pub fn is_canonical(&self, kx: i32, ky: i32) -> bool {
        ky > 0 || ((ky == 0 || ky == -self.half_y()) && kx > 0)
    }

    /// The four self-conjugate points.
    pub fn self_conjugate_points(&self) -> [(i32, i32); 4] {
        [
            (0, 0),
            (-self.half_x(), 0),
            (0, -self.half_y()),
            (-self.half_x(), -self.half_y()),
        ]
    }

    /// All centered index pairs in storage order.
    pub fn points(&self) -> impl Iterator<Item = (i32, i32)> + '_ {
        (0..self.len()).map(move |i| self.frequency_at(i))
    }

    /// The canonical half-plane, excluding self-conjugate points.
    pub fn canonical_points(&self) -> Vec<(i32, i32)> {
        self.points()
            .filter(|&(kx, ky)| self.is_canonical(kx, ky))
            .collect()
    }
}

/// Whether a [`ComplexField`] is known to satisfy the Hermitian invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymmetryState {
    Unconstrained,
    Hermitian,
}

/// Complex values over a [`KGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: KGrid,
    values: Vec<Complex64>,
    symmetry: SymmetryState,
}

impl ComplexField {
    pub fn zeros(grid: KGrid) -> Self {
        ComplexField {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
            // The zero field is trivially symmetric.
            symmetry: SymmetryState::Hermitian,
        }
    }

    /// Wrap raw values (storage order); symmetry is not assumed.
    pub fn from_values(grid: KGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "expected {} values for a {}x{} grid, got {}",
                grid.len(),
                grid.n_x(),
                grid.n_y(),
                values.len()
            )));
        }
        Ok(ComplexField {
            grid,
            values,
            symmetry: SymmetryState::Unconstrained,
        })
    }

    pub fn grid(&self) -> &KGrid {
        &self.grid
    }

    pub fn symmetry(&self) -> SymmetryState {
        self.symmetry
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn value_at(&self, kx: i32, ky: i32) -> Complex64 {
        self.values[self.grid.storage_index(kx, ky)]
    }

    /// Set a single value. The field can no longer be assumed symmetric.
    pub fn set_value(&mut self, kx: i32, ky: i32, value: Complex64) {
        let idx = self.grid.storage_index(kx, ky);
        self.values[idx] = value;
        self.symmetry = SymmetryState::Unconstrained;
    }

    pub fn modulus_at(&self, kx: i32, ky: i32) -> f64 {
        self.value_at(kx, ky).norm()
    }

    /// Argument in `[-pi, pi)`; the argument of a zero value is 0.
    pub fn argument_at(&self, kx: i32, ky: i32) -> f64 {
        argument(self.value_at(kx, ky))
    }

    /// Total power `sum |F_k|^2`.
    pub fn power(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Power over all points except the origin.
    pub fn off_origin_power(&self) -> f64 {
        self.power() - self.value_at(0, 0).norm_sqr()
    }
}

/// Argument in `[-pi, pi)` with the zero-value convention `arg(0) = 0`.
pub fn argument(value: Complex64) -> f64 {
    if value.re == 0.0 && value.im == 0.0 {
        return 0.0;
    }
    let a = value.im.atan2(value.re);
    // atan2 returns +pi for the negative real half-line; fold into [-pi, pi).
    if a >= std::f64::consts::PI {
        a - 2.0 * std::f64::consts::PI
    } else {
        a
    }
}

/// Real-valued image grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RealGrid {
    n_x: usize,
    n_y: usize,
    data: Vec<f64>,
    units: Option<String>,
}

impl RealGrid {
    pub fn zeros(n_x: usize, n_y: usize) -> Self {
        RealGrid {
            n_x,
            n_y,
            data: vec![0.0; n_x * n_y],
            units: None,
        }
    }

    pub fn from_vec(n_x: usize, n_y: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_x * n_y {
            return Err(Error::Dimension(format!(
                "expected {} pixels for {n_x}x{n_y}, got {}",
                n_x * n_y,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite pixel value {bad}")));
        }
        Ok(RealGrid {
            n_x,
            n_y,
            data,
            units: None,
        })
    }

    pub fn with_units(mut self, units: impl Into<String>) -> Self {
        self.units = Some(units.into());
        self
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn units(&self) -> Option<&str> {
        self.units.as_deref()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.n_x + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.n_x + x] = value;
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Circularly shifted copy (`dx`, `dy` in pixels).
    pub fn circular_shift(&self, dx: i64, dy: i64) -> RealGrid {
        let mut out = RealGrid::zeros(self.n_x, self.n_y);
        for y in 0..self.n_y {
            for x in 0..self.n_x {
                let sx = (x as i64 + dx).rem_euclid(self.n_x as i64) as usize;
                let sy = (y as i64 + dy).rem_euclid(self.n_y as i64) as usize;
                out.set(sx, sy, self.at(x, y));
            }
        }
        out
    }
}

fn fft_2d(n_x: usize, n_y: usize, buf: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::new();
    let direction = if inverse {
        rustfft::FftDirection::Inverse
    } else {
        rustfft::FftDirection::Forward
    };
    let fft_row = planner.plan_fft(n_x, direction);
    let mut scratch = vec![Complex64::default(); fft_row.get_inplace_scratch_len()];
    for row in buf.chunks_exact_mut(n_x) {
        fft_row.process_with_scratch(row, &mut scratch);
    }

    // Columns: transpose, transform rows, transpose back.
    let mut transposed = vec![Complex64::default(); buf.len()];
    for y in 0..n_y {
        for x in 0..n_x {
            transposed[x * n_y + y] = buf[y * n_x + x];
        }
    }
    let fft_col = planner.plan_fft(n_y, direction);
    scratch.resize(fft_col.get_inplace_scratch_len(), Complex64::default());
    for col in transposed.chunks_exact_mut(n_y) {
        fft_col.process_with_scratch(col, &mut scratch);
    }
    for x in 0..n_x {
        for y in 0..n_y {
            buf[y * n_x + x] = transposed[x * n_y + y];
        }
    }
}

/// Unitary forward transform of a real image.
///
/// The output is Hermitian-symmetric up to floating point noise and is
/// marked as such.
pub fn forward_transform(image: &RealGrid) -> Result<ComplexField> {
    let (n_x, n_y) = (image.n_x(), image.n_y());
    if n_x % 2 != 0 || n_y % 2 != 0 || n_x < 4 || n_y < 4 {
        return Err(Error::Dimension(format!(
            "transform requires even dimensions >= 4, got {n_x}x{n_y}"
        )));
    }
    let grid = KGrid::new(n_x, n_y)?;
    let mut buf: Vec<Complex64> = image
        .data()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    fft_2d(n_x, n_y, &mut buf, false);
    let scale = 1.0 / ((n_x * n_y) as f64).sqrt();
    for v in &mut buf {
        *v *= scale;
    }
    Ok(ComplexField {
        grid,
        values: buf,
        symmetry: SymmetryState::Hermitian,
    })
}

/// Unitary inverse transform back to a real image.
///
/// The field must be Hermitian-symmetric (symmetrize first if needed). Any
/// residual imaginary power above `1e-9` of the field power is an error;
/// below that it is discarded as floating point noise.
pub fn inverse_transform(field: &ComplexField) -> Result<RealGrid> {
    if field.symmetry != SymmetryState::Hermitian {
        return Err(Error::Symmetry(
            "inverse_transform requires a Hermitian field; call hermitian_symmetrize".into(),
        ));
    }
    let (n_x, n_y) = (field.grid.n_x(), field.grid.n_y());
    let mut buf = field.values.clone();
    fft_2d(n_x, n_y, &mut buf, true);
    let scale = 1.0 / ((n_x * n_y) as f64).sqrt();
    for v in &mut buf {
        *v *= scale;
    }
    let power = field.power();
    let imag_power: f64 = buf.iter().map(|v| v.im * v.im).sum();
    if power > 0.0 && imag_power > 1e-9 * power {
        return Err(Error::Numerical(format!(
            "residual imaginary power {imag_power:.3e} exceeds 1e-9 of field power {power:.3e}"
        )));
    }
    RealGrid::from_vec(n_x, n_y, buf.iter().map(|v| v.re).collect())
}

/// Project a field onto the Hermitian-symmetric subspace.
///
/// Canonical half-plane values are kept verbatim, their reflections are
/// overwritten with conjugates, and self-conjugate points are projected to
/// their real parts. Idempotent.
pub fn hermitian_symmetrize(field: &ComplexField) -> ComplexField {
    let grid = field.grid;
    let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
    for i in 0..grid.len() {
        let (kx, ky) = grid.frequency_at(i);
        values[i] = if grid.is_self_conjugate(kx, ky) {
            Complex64::new(field.values[i].re, 0.0)
        } else if grid.is_canonical(kx, ky) {
            field.values[i]
        } else {
            let (cx, cy) = grid.conjugate(kx, ky);
            field.values[grid.storage_index(cx, cy)].conj()
        };
    }
    ComplexField {
        grid,
        values,
        symmetry: SymmetryState::Hermitian,
    }
}

/// Split a field into modulus and argument planes (storage order).
pub fn polar_decompose(field: &ComplexField) -> (Vec<f64>, Vec<f64>) {
    let modulus = field.values.iter().map(|v| v.norm()).collect();
    let arg = field.values.iter().map(|&v| argument(v)).collect();
    (modulus, arg)
}

/// Rebuild a field from modulus and argument planes.
pub fn from_polar(grid: KGrid, modulus: &[f64], arg: &[f64]) -> Result<ComplexField> {
    if modulus.len() != grid.len() || arg.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "polar planes must have {} entries",
            grid.len()
        )));
    }
    if let Some(m) = modulus.iter().find(|&&m| m < 0.0 || !m.is_finite()) {
        return Err(Error::Domain(format!("modulus must be nonnegative, got {m}")));
    }
    let values = modulus
        .iter()
        .zip(arg)
        .map(|(&m, &a)| Complex64::from_polar(m, a))
        .collect();
    ComplexField::from_values(grid, values)
}
