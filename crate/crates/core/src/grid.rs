//! Uniform periodic collocation grids with Fourier-spectral operators.
//!
//! Points are `x_j = j * h` with `h = length / n`; 2D data is stored row-major
//! with index `iy * n + ix`. Spectral coefficients use the unnormalised DFT
//! ordering produced by `rustfft`, so mode `j >= n/2` carries wavenumber
//! `(j - n) * 2π / length`.
//!
//! The discrete Laplacian is the Fourier multiplier `-|k|^2`. It is real and
//! symmetric in mode space, which makes it self-adjoint and negative
//! semi-definite under the rectangle-rule inner product `h^d Σ f g`.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub struct PeriodicGrid<T: Real> {
    dim: usize,
    n: usize,
    length: T,
    spacing: T,
    cell_volume: T,
    laplacian_symbol: Vec<T>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> fmt::Debug for PeriodicGrid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicGrid")
            .field("dim", &self.dim)
            .field("n", &self.n)
            .field("length", &self.length)
            .finish()
    }
}

impl<T: Real> PeriodicGrid<T> {
    /// Builds a `dim`-dimensional grid with `n` points per direction on `[0, length)^dim`.
    pub fn new(dim: usize, n: usize, length: T) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        if n < 8 || !n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "n must be even and >= 8, got {n}"
            )));
        }
        if !(length.is_finite() && length > T::zero()) {
            return Err(Error::InvalidGrid(format!(
                "length must be positive and finite, got {length}"
            )));
        }

        let spacing = length / T::from_count(n);
        let cell_volume = spacing.powi(dim as i32);

        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);

        let k: Vec<T> = (0..n).map(|j| wavenumber(j, n, length)).collect();
        let laplacian_symbol = match dim {
            1 => k.iter().map(|&kx| -(kx * kx)).collect(),
            _ => {
                let mut sym = Vec::with_capacity(n * n);
                for &ky in &k {
                    for &kx in &k {
                        sym.push(-(kx * kx + ky * ky));
                    }
                }
                sym
            }
        };

        Ok(Self {
            dim,
            n,
            length,
            spacing,
            cell_volume,
            laplacian_symbol,
            forward,
            inverse,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per direction.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of grid points, `n^dim`.
    pub fn len(&self) -> usize {
        self.laplacian_symbol.len()
    }

    pub fn is_empty(&self) -> bool {
        self.laplacian_symbol.is_empty()
    }

    pub fn length(&self) -> T {
        self.length
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    pub fn cell_volume(&self) -> T {
        self.cell_volume
    }

    /// `|Ω| = length^dim`.
    pub fn domain_measure(&self) -> T {
        self.length.powi(self.dim as i32)
    }

    /// Per-mode eigenvalue `-|k|^2` of the spectral Laplacian.
    pub fn laplacian_symbol(&self) -> &[T] {
        &self.laplacian_symbol
    }

    /// Physical coordinates of point `index`; `y` is zero on 1D grids.
    pub fn point(&self, index: usize) -> (T, T) {
        let ix = index % self.n;
        let iy = index / self.n;
        (
            T::from_count(ix) * self.spacing,
            T::from_count(iy) * self.spacing,
        )
    }

    pub(crate) fn same_as(&self, other: &Self) -> bool {
        std::ptr::eq(self, other)
            || (self.dim == other.dim && self.n == other.n && self.length == other.length)
    }

    /// Unnormalised forward DFT of real samples.
    pub fn forward(&self, values: &[T]) -> Vec<Complex<T>> {
        assert_eq!(values.len(), self.len(), "sample count does not match grid");
        let mut buf: Vec<Complex<T>> = values.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.transform(&mut buf, &self.forward);
        buf
    }

    /// Inverse DFT (normalised by `1/len`) returning the real part.
    ///
    /// Input spectra are expected to be conjugate symmetric; the imaginary
    /// residue left after the transform is roundoff and is discarded. It
    /// scales with the largest multiplier applied in between (up to `|k|⁴`),
    /// so it is not checked here.
    pub fn inverse(&self, mut spectrum: Vec<Complex<T>>) -> Vec<T> {
        assert_eq!(spectrum.len(), self.len(), "mode count does not match grid");
        self.transform(&mut spectrum, &self.inverse);
        let scale = T::one() / T::from_count(self.len());
        spectrum.iter().map(|z| z.re * scale).collect()
    }

    fn transform(&self, buf: &mut [Complex<T>], plan: &Arc<dyn Fft<T>>) {
        // rows (and the whole signal in 1D)
        plan.process(buf);
        if self.dim == 2 {
            let n = self.n;
            transpose_in_place(buf, n);
            plan.process(buf);
            transpose_in_place(buf, n);
        }
    }

    /// Applies the Fourier multiplier `m(-|k|^2)` to real samples.
    pub fn apply_multiplier(&self, values: &[T], m: impl Fn(T) -> T) -> Vec<T> {
        let mut spectrum = self.forward(values);
        for (z, &sym) in spectrum.iter_mut().zip(&self.laplacian_symbol) {
            *z = *z * m(sym);
        }
        self.inverse(spectrum)
    }

    pub fn laplacian_values(&self, values: &[T]) -> Vec<T> {
        self.apply_multiplier(values, |sym| sym)
    }

    /// Rectangle rule `h^d Σ f`.
    pub fn quadrature_values(&self, values: &[T]) -> T {
        values.iter().fold(T::zero(), |acc, &v| acc + v) * self.cell_volume
    }

    /// Discrete `L²` inner product `h^d Σ f g`.
    pub fn dot_values(&self, f: &[T], g: &[T]) -> T {
        f.iter().zip(g).fold(T::zero(), |acc, (&a, &b)| acc + a * b) * self.cell_volume
    }

    /// `∫|∇f|²` through Parseval: `h^d / N · Σ |k|² |f̂_k|²`.
    pub fn grad_norm_sq_values(&self, values: &[T]) -> T {
        let spectrum = self.forward(values);
        let sum = spectrum
            .iter()
            .zip(&self.laplacian_symbol)
            .fold(T::zero(), |acc, (z, &sym)| acc - sym * z.norm_sqr());
        sum * self.cell_volume / T::from_count(self.len())
    }
}

fn wavenumber<T: Real>(j: usize, n: usize, length: T) -> T {
    let base = T::TAU() / length;
    if j <= n / 2 {
        T::from_count(j) * base
    } else {
        -T::from_count(n - j) * base
    }
}

fn transpose_in_place<T: Copy>(buf: &mut [T], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf.swap(i * n + j, j * n + i);
        }
    }
}

/// Real grid function. Values are finite at construction.
#[derive(Clone, Debug)]
pub struct ScalarField<T: Real> {
    grid: Arc<PeriodicGrid<T>>,
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn new(grid: &Arc<PeriodicGrid<T>>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self::from_raw(grid, values))
    }

    pub(crate) fn from_raw(grid: &Arc<PeriodicGrid<T>>, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn constant(grid: &Arc<PeriodicGrid<T>>, value: T) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()])
    }

    pub fn zeros(grid: &Arc<PeriodicGrid<T>>) -> Self {
        Self::from_raw(grid, vec![T::zero(); grid.len()])
    }

    /// Samples `f(x, y)` at every grid point (`y = 0` in 1D).
    pub fn from_fn(grid: &Arc<PeriodicGrid<T>>, f: impl Fn(T, T) -> T) -> Result<Self> {
        let values = (0..grid.len())
            .map(|i| {
                let (x, y) = grid.point(i);
                f(x, y)
            })
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<PeriodicGrid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.grid.same_as(&other.grid)
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }

    pub fn is_finite(&self) -> bool {
        self.first_non_finite().is_none()
    }

    pub fn laplacian(&self) -> Self {
        Self::from_raw(&self.grid, self.grid.laplacian_values(&self.values))
    }

    pub fn quadrature(&self) -> T {
        self.grid.quadrature_values(&self.values)
    }

    pub fn inner_product(&self, other: &Self) -> Result<T> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        Ok(self.grid.dot_values(&self.values, &other.values))
    }

    pub fn grad_norm_sq(&self) -> T {
        self.grid.grad_norm_sq_values(&self.values)
    }

    /// Discrete `L²` norm.
    pub fn l2_norm(&self) -> T {
        self.grid.dot_values(&self.values, &self.values).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    pub fn l2_distance(&self, other: &Self) -> Result<T> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        let d: Vec<T> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(self.grid.dot_values(&d, &d).sqrt())
    }

    pub(crate) fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_raw(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub(crate) fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert!(self.same_grid(other), "fields live on different grids");
        Self::from_raw(
            &self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn line(n: usize) -> Arc<PeriodicGrid<f64>> {
        Arc::new(PeriodicGrid::new(1, n, 2.0 * PI).unwrap())
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(PeriodicGrid::<f64>::new(3, 16, 1.0).is_err());
        assert!(PeriodicGrid::<f64>::new(1, 15, 1.0).is_err());
        assert!(PeriodicGrid::<f64>::new(1, 6, 1.0).is_err());
        assert!(PeriodicGrid::<f64>::new(1, 16, -1.0).is_err());
        assert!(PeriodicGrid::<f64>::new(2, 16, f64::NAN).is_err());
    }

    #[test]
    fn symbol_is_nonpositive_with_zero_mean_mode() {
        for dim in [1, 2] {
            let g = PeriodicGrid::<f64>::new(dim, 16, 3.0).unwrap();
            assert_eq!(g.laplacian_symbol()[0], 0.0);
            assert!(g.laplacian_symbol().iter().all(|&s| s <= 0.0));
        }
    }

    #[test]
    fn rejects_non_finite_values() {
        let g = line(8);
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        assert_eq!(
            ScalarField::new(&g, v).unwrap_err(),
            Error::NonFinite { index: 3 }
        );
        assert!(ScalarField::new(&g, vec![0.0; 7]).is_err());
    }

    #[test]
    fn laplacian_of_resolved_modes() {
        let g = line(64);
        let c = ScalarField::constant(&g, 3.5).unwrap();
        assert!(c.laplacian().max_abs() <= 1e-12);

        let s1 = ScalarField::from_fn(&g, |x, _| x.sin()).unwrap();
        let want = ScalarField::from_fn(&g, |x, _| -x.sin()).unwrap();
        assert!(s1.laplacian().max_abs_diff(&want).unwrap() <= 1e-12);

        let s3 = ScalarField::from_fn(&g, |x, _| (3.0 * x).sin()).unwrap();
        let want = ScalarField::from_fn(&g, |x, _| -9.0 * (3.0 * x).sin()).unwrap();
        assert!(s3.laplacian().max_abs_diff(&want).unwrap() <= 1e-12);
    }

    #[test]
    fn laplacian_2d_mixed_mode() {
        let g = Arc::new(PeriodicGrid::new(2, 32, 2.0 * PI).unwrap());
        let f = ScalarField::from_fn(&g, |x, y| x.sin() * (2.0 * y).cos()).unwrap();
        let want = ScalarField::from_fn(&g, |x, y| -5.0 * x.sin() * (2.0 * y).cos()).unwrap();
        assert!(f.laplacian().max_abs_diff(&want).unwrap() <= 1e-12);
    }

    #[test]
    fn inner_products_on_trig_functions() {
        let g = line(64);
        let one = ScalarField::constant(&g, 1.0).unwrap();
        assert!((one.inner_product(&one).unwrap() - 2.0 * PI).abs() <= 1e-12);
        let s = ScalarField::from_fn(&g, |x, _| x.sin()).unwrap();
        let c = ScalarField::from_fn(&g, |x, _| x.cos()).unwrap();
        assert!((s.inner_product(&s).unwrap() - PI).abs() <= 1e-12);
        assert!(s.inner_product(&c).unwrap().abs() <= 1e-12);
        assert!((one.quadrature() - g.domain_measure()).abs() <= 1e-12);
    }

    #[test]
    fn inner_product_rejects_grid_mismatch() {
        let a = ScalarField::zeros(&line(16));
        let b = ScalarField::zeros(&line(32));
        assert_eq!(a.inner_product(&b).unwrap_err(), Error::GridMismatch);
    }

    #[test]
    fn grad_norm_of_sine() {
        let g = line(64);
        let s = ScalarField::from_fn(&g, |x, _| x.sin()).unwrap();
        assert!((s.grad_norm_sq() - PI).abs() <= 1e-12);
        let c = ScalarField::constant(&g, -2.0).unwrap();
        assert!(c.grad_norm_sq().abs() <= 1e-20);
    }

    #[test]
    fn single_precision_grid() {
        let g = Arc::new(PeriodicGrid::<f32>::new(1, 32, std::f32::consts::TAU).unwrap());
        let s = ScalarField::from_fn(&g, |x, _| x.sin()).unwrap();
        assert!((s.grad_norm_sq() - std::f32::consts::PI).abs() <= 1e-5);
    }
}
