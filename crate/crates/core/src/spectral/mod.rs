//! Periodic cubic grid, discrete Fourier transforms and multipliers.
//!
//! Convention: `f̂(k) = (2π)^{-3/2} dx³ Σ_x f(x) e^{-ik·x}` on the position
//! lattice `x_j = -L/2 + j·dx`, with the exact inverse
//! `f(x) = (2π)^{-3/2} dk³ Σ_k f̂(k) e^{ik·x}`. Both inner products
//! (`dx³Σ` and `dk³Σ`) then agree (discrete Plancherel).

mod fft3;

use std::f64::consts::PI;
use std::fmt;
use std::marker::PhantomData;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::parallel::chunked_sum;
use fft3::{Direction, Fft3};

/// `(2π)^{-3/2}`.
pub const INV_TWO_PI_3_2: f64 = 0.063_493_635_934_240_97;
/// `(2π)^{3/2}`.
pub const TWO_PI_3_2: f64 = 15.749_609_945_722_419;
/// `(2π)^3`.
pub const TWO_PI_3: f64 = 248.050_213_442_398_56;

struct GridData {
    n: usize,
    length: f64,
    k_axis: Vec<f64>,
    x_axis: Vec<f64>,
    k2: Vec<f64>,
    fft: Fft3,
}

/// Periodic cubic grid with `n` points per axis on a box of side `L`.
///
/// Cloning is cheap; clones share the precomputed tables and FFT plans.
#[derive(Clone)]
pub struct Grid(Arc<GridData>);

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.0.n)
            .field("length", &self.0.length)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
            || (self.0.n == other.0.n && self.0.length.to_bits() == other.0.length.to_bits())
    }
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("n = {n} must be even and at least 8")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("box length {length} must be positive")));
        }
        let dx = length / n as f64;
        let dk = 2.0 * PI / length;
        let k_axis: Vec<f64> = (0..n).map(|m| signed_index(m, n) as f64 * dk).collect();
        let x_axis: Vec<f64> = (0..n).map(|j| -0.5 * length + j as f64 * dx).collect();
        let n2 = n * n;
        let mut k2 = vec![0.0; n2 * n];
        k2.par_chunks_mut(n2).enumerate().for_each(|(i, slab)| {
            let kx2 = k_axis[i] * k_axis[i];
            for j in 0..n {
                let kxy2 = kx2 + k_axis[j] * k_axis[j];
                for l in 0..n {
                    slab[j * n + l] = kxy2 + k_axis[l] * k_axis[l];
                }
            }
        });
        Ok(Self(Arc::new(GridData {
            n,
            length,
            k_axis,
            x_axis,
            k2,
            fft: Fft3::new(n),
        })))
    }

    pub fn n(&self) -> usize {
        self.0.n
    }

    /// Number of lattice sites, `n³`.
    pub fn size(&self) -> usize {
        self.0.n * self.0.n * self.0.n
    }

    pub fn length(&self) -> f64 {
        self.0.length
    }

    pub fn dx(&self) -> f64 {
        self.0.length / self.0.n as f64
    }

    pub fn dk(&self) -> f64 {
        2.0 * PI / self.0.length
    }

    pub fn dx3(&self) -> f64 {
        self.dx().powi(3)
    }

    pub fn dk3(&self) -> f64 {
        self.dk().powi(3)
    }

    /// Largest axis frequency magnitude, `π n / L` (the Nyquist mode).
    pub fn k_max(&self) -> f64 {
        PI * self.0.n as f64 / self.0.length
    }

    /// Per-axis frequencies in transform order: `0, dk, …, -π n/L, …, -dk`.
    pub fn k_axis(&self) -> &[f64] {
        &self.0.k_axis
    }

    /// Per-axis positions `-L/2 + j·dx`.
    pub fn x_axis(&self) -> &[f64] {
        &self.0.x_axis
    }

    /// `|k|²` at every frequency site.
    pub fn k2(&self) -> &[f64] {
        &self.0.k2
    }

    /// Splits a flat index into its three axis indices.
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let n = self.0.n;
        [idx / (n * n), (idx / n) % n, idx % n]
    }

    pub fn ravel(&self, ijk: [usize; 3]) -> usize {
        let n = self.0.n;
        (ijk[0] * n + ijk[1]) * n + ijk[2]
    }

    pub fn k_at(&self, idx: usize) -> [f64; 3] {
        let [i, j, l] = self.unravel(idx);
        let k = &self.0.k_axis;
        [k[i], k[j], k[l]]
    }

    pub fn x_at(&self, idx: usize) -> [f64; 3] {
        let [i, j, l] = self.unravel(idx);
        let x = &self.0.x_axis;
        [x[i], x[j], x[l]]
    }

    /// Flat index of the frequency `-k` for the site holding `k`.
    pub fn negated_index(&self, idx: usize) -> usize {
        let n = self.0.n;
        let [i, j, l] = self.unravel(idx);
        self.ravel([(n - i) % n, (n - j) % n, (n - l) % n])
    }

    /// Samples `f(k)` on the frequency lattice.
    pub fn sample_k<T: Send, F: Fn([f64; 3]) -> T + Sync>(&self, f: F) -> Vec<T> {
        (0..self.size()).into_par_iter().map(|i| f(self.k_at(i))).collect()
    }

    /// Samples `f(x)` on the position lattice.
    pub fn sample_x<T: Send, F: Fn([f64; 3]) -> T + Sync>(&self, f: F) -> Vec<T> {
        (0..self.size()).into_par_iter().map(|i| f(self.x_at(i))).collect()
    }

    /// Samples a radial profile `f(|k|)` on the frequency lattice.
    pub fn sample_radial<F: Fn(f64) -> f64 + Sync>(&self, f: F) -> Vec<f64> {
        self.0.k2.par_iter().map(|&k2| f(k2.sqrt())).collect()
    }

    pub(crate) fn fft(&self, data: &mut [Complex64], forward: bool) {
        let dir = if forward { Direction::Forward } else { Direction::Backward };
        self.0.fft.process(data, dir);
    }

    fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

fn signed_index(m: usize, n: usize) -> i64 {
    if m < n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

/// Parity sign `(-1)^{i+j+l}` of a flat index; it carries the `-L/2` lattice offset.
#[inline]
fn parity_sign(grid_n: usize, idx: usize) -> f64 {
    let n = grid_n;
    let s = idx / (n * n) + (idx / n) % n + idx % n;
    if s % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Marker for the lattice a field is sampled on.
pub trait Space: Copy + fmt::Debug + Send + Sync + 'static {
    const NAME: &'static str;
    fn cell_volume(grid: &Grid) -> f64;
}

#[derive(Clone, Copy, Debug)]
pub struct Position;

#[derive(Clone, Copy, Debug)]
pub struct Frequency;

impl Space for Position {
    const NAME: &'static str = "position field";
    fn cell_volume(grid: &Grid) -> f64 {
        grid.dx3()
    }
}

impl Space for Frequency {
    const NAME: &'static str = "frequency field";
    fn cell_volume(grid: &Grid) -> f64 {
        grid.dk3()
    }
}

/// Complex samples on one of the two lattices, row-major with the last axis fastest.
#[derive(Clone)]
pub struct Field<S: Space> {
    grid: Grid,
    values: Vec<Complex64>,
    _space: PhantomData<S>,
}

pub type ScalarFieldX = Field<Position>;
pub type ScalarFieldK = Field<Frequency>;

impl<S: Space> fmt::Debug for Field<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct(S::NAME)
            .field("grid", &self.grid)
            .field("norm", &self.norm())
            .finish()
    }
}

impl<S: Space> Field<S> {
    pub fn zeros(grid: &Grid) -> Self {
        Self::from_raw(grid, vec![Complex64::default(); grid.size()])
    }

    /// Wraps samples, checking count and finiteness.
    pub fn from_values(grid: &Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.size() {
            return Err(Error::InvalidArgument(format!(
                "{} has {} samples, grid needs {}",
                S::NAME,
                values.len(),
                grid.size()
            )));
        }
        if !values.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite(S::NAME));
        }
        Ok(Self::from_raw(grid, values))
    }

    pub(crate) fn from_raw(grid: &Grid, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.size());
        Self {
            grid: grid.clone(),
            values,
            _space: PhantomData,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Discrete inner product `⟨self, other⟩`, antilinear in `self`.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        self.grid.check_same(&other.grid)?;
        Ok(self.inner_unchecked(other))
    }

    pub(crate) fn inner_unchecked(&self, other: &Self) -> Complex64 {
        let (a, b) = (&self.values, &other.values);
        let s = chunked_sum(a.len(), |r| {
            a[r.clone()]
                .iter()
                .zip(&b[r])
                .map(|(x, y)| x.conj() * y)
                .sum::<Complex64>()
        });
        s * S::cell_volume(&self.grid)
    }

    pub fn norm_sq(&self) -> f64 {
        let a = &self.values;
        chunked_sum(a.len(), |r| a[r].iter().map(|z| z.norm_sqr()).sum::<f64>())
            * S::cell_volume(&self.grid)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `cell · Σ w |f|²` for real pointwise weights.
    pub fn weighted_norm_sq(&self, weights: &[f64]) -> f64 {
        let a = &self.values;
        chunked_sum(a.len(), |r| {
            a[r.clone()]
                .iter()
                .zip(&weights[r])
                .map(|(z, w)| w * z.norm_sqr())
                .sum::<f64>()
        }) * S::cell_volume(&self.grid)
    }

    pub fn scale(&mut self, c: Complex64) {
        self.values.par_iter_mut().for_each(|z| *z *= c);
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        out.scale(c);
        out
    }

    /// `self += a · x`.
    pub fn axpy(&mut self, a: Complex64, x: &Self) {
        debug_assert!(self.grid == x.grid);
        self.values
            .par_iter_mut()
            .zip(x.values.par_iter())
            .for_each(|(z, w)| *z += a * w);
    }

    /// Pointwise product with real samples.
    pub fn mul_real(&self, m: &[f64]) -> Self {
        let values = self
            .values
            .par_iter()
            .zip(m.par_iter())
            .map(|(z, w)| z * w)
            .collect();
        Self::from_raw(&self.grid, values)
    }

    /// Pointwise product with complex samples.
    pub fn mul_complex(&self, m: &[Complex64]) -> Self {
        let values = self
            .values
            .par_iter()
            .zip(m.par_iter())
            .map(|(z, w)| z * w)
            .collect();
        Self::from_raw(&self.grid, values)
    }

    pub fn sub(&self, other: &Self) -> Self {
        let values = self
            .values
            .par_iter()
            .zip(other.values.par_iter())
            .map(|(a, b)| a - b)
            .collect();
        Self::from_raw(&self.grid, values)
    }

    pub fn add(&self, other: &Self) -> Self {
        let values = self
            .values
            .par_iter()
            .zip(other.values.par_iter())
            .map(|(a, b)| a + b)
            .collect();
        Self::from_raw(&self.grid, values)
    }

    pub fn conj(&self) -> Self {
        Self::from_raw(&self.grid, self.values.par_iter().map(|z| z.conj()).collect())
    }

    pub fn real_part(&self) -> Self {
        let values = self.values.par_iter().map(|z| Complex64::new(z.re, 0.0)).collect();
        Self::from_raw(&self.grid, values)
    }

    pub fn imag_part(&self) -> Self {
        let values = self.values.par_iter().map(|z| Complex64::new(z.im, 0.0)).collect();
        Self::from_raw(&self.grid, values)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, z| m.max(z.norm()))
    }
}

impl ScalarFieldX {
    pub fn from_fn<F: Fn([f64; 3]) -> Complex64 + Sync>(grid: &Grid, f: F) -> Self {
        Self::from_raw(grid, grid.sample_x(f))
    }

    pub fn from_real(grid: &Grid, re: &[f64]) -> Self {
        Self::from_raw(grid, re.par_iter().map(|&r| Complex64::new(r, 0.0)).collect())
    }

    /// Pointwise `|ψ|²`.
    pub fn density(&self) -> Vec<f64> {
        self.values.par_iter().map(|z| z.norm_sqr()).collect()
    }

    /// Returns `self / ‖self‖`.
    pub fn normalized(&self) -> Self {
        self.scaled(Complex64::new(1.0 / self.norm(), 0.0))
    }

    pub fn forward(&self) -> ScalarFieldK {
        forward_transform(self)
    }
}

impl ScalarFieldK {
    pub fn from_fn<F: Fn([f64; 3]) -> Complex64 + Sync>(grid: &Grid, f: F) -> Self {
        Self::from_raw(grid, grid.sample_k(f))
    }

    pub fn inverse(&self) -> ScalarFieldX {
        inverse_transform(self)
    }
}

/// Forward transform under the fixed `(2π)^{-3/2}` convention.
pub fn forward_transform(f: &ScalarFieldX) -> ScalarFieldK {
    let grid = f.grid();
    let mut data = f.values().to_vec();
    grid.fft(&mut data, true);
    let c = INV_TWO_PI_3_2 * grid.dx3();
    let n = grid.n();
    data.par_iter_mut()
        .enumerate()
        .for_each(|(i, z)| *z *= c * parity_sign(n, i));
    ScalarFieldK::from_raw(grid, data)
}

/// Exact inverse of [`forward_transform`].
pub fn inverse_transform(g: &ScalarFieldK) -> ScalarFieldX {
    let grid = g.grid();
    let n = grid.n();
    let c = INV_TWO_PI_3_2 * grid.dk3();
    let mut data: Vec<Complex64> = g
        .values()
        .par_iter()
        .enumerate()
        .map(|(i, z)| z * (c * parity_sign(n, i)))
        .collect();
    grid.fft(&mut data, false);
    ScalarFieldX::from_raw(grid, data)
}

/// Pointwise `m(k)·g(k)` with `m` evaluated at the signed lattice frequency.
pub fn apply_multiplier<F>(g: &ScalarFieldK, m: F) -> ScalarFieldK
where
    F: Fn([f64; 3]) -> Complex64 + Sync,
{
    let grid = g.grid();
    let values = g
        .values()
        .par_iter()
        .enumerate()
        .map(|(i, z)| m(grid.k_at(i)) * z)
        .collect();
    ScalarFieldK::from_raw(grid, values)
}

/// `(w * f)(x)` for `w(x) = ∫ W(k) e^{ik·x} dk`, with `W` given by its lattice samples.
///
/// Real input yields real output; the round-off imaginary residue is dropped.
pub fn convolve_kernel(f: &ScalarFieldX, kernel: &[f64]) -> ScalarFieldX {
    let fhat = forward_transform(f).mul_real(kernel);
    let mut out = inverse_transform(&fhat);
    out.scale(Complex64::new(TWO_PI_3, 0.0));
    if f.values().iter().all(|z| z.im == 0.0) {
        out.values_mut().par_iter_mut().for_each(|z| z.im = 0.0);
    }
    out
}

/// Real-input convenience for [`convolve_kernel`].
pub fn convolve_real(f: &[f64], grid: &Grid, kernel: &[f64]) -> Vec<f64> {
    let field = ScalarFieldX::from_real(grid, f);
    convolve_kernel(&field, kernel)
        .values()
        .par_iter()
        .map(|z| z.re)
        .collect()
}

/// Spectral partial derivative `∂_axis f`.
pub fn derivative(f: &ScalarFieldX, axis: usize) -> ScalarFieldX {
    let g = apply_multiplier(&forward_transform(f), |k| Complex64::new(0.0, k[axis]));
    inverse_transform(&g)
}

/// Smallest even `n ≥ min` whose only prime factors are 2, 3, 5 and 7.
pub fn smooth_even_at_least(min: usize) -> usize {
    let mut n = min.max(8);
    if n % 2 == 1 {
        n += 1;
    }
    loop {
        let mut m = n;
        for p in [2, 3, 5, 7] {
            while m % p == 0 {
                m /= p;
            }
        }
        if m == 1 {
            return n;
        }
        n += 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_match_their_definitions() {
        let two_pi = 2.0 * PI;
        assert!((TWO_PI_3 - two_pi.powi(3)).abs() < 1e-12 * TWO_PI_3);
        assert!((TWO_PI_3_2 - two_pi.powf(1.5)).abs() < 1e-13 * TWO_PI_3_2);
        assert!((INV_TWO_PI_3_2 * TWO_PI_3_2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn grid_rejects_odd_or_small_n() {
        assert!(Grid::new(7, 1.0).is_err());
        assert!(Grid::new(6, 1.0).is_err());
        assert!(Grid::new(8, -1.0).is_err());
        assert!(Grid::new(8, 1.0).is_ok());
    }

    #[test]
    fn axes_follow_transform_order() {
        let g = Grid::new(8, 4.0).unwrap();
        let dk = g.dk();
        let expect = [0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0];
        for (k, e) in g.k_axis().iter().zip(expect) {
            assert_eq!(*k, e * dk);
        }
        assert_eq!(g.x_axis()[0], -2.0);
        assert!((g.dx() * 8.0 - 4.0).abs() == 0.0);
        let nyquist = g.k_axis().iter().filter(|k| (k.abs() - g.k_max()).abs() < 1e-12).count();
        assert_eq!(nyquist, 1);
    }

    #[test]
    fn negated_index_maps_k_to_minus_k() {
        let g = Grid::new(8, 3.0).unwrap();
        for idx in [0, 1, 9, 100, 511, 260] {
            let k = g.k_at(idx);
            let km = g.k_at(g.negated_index(idx));
            for a in 0..3 {
                // The Nyquist mode is its own negative.
                assert!(km[a] == -k[a] || (k[a] == -g.k_max() && km[a] == k[a]));
            }
        }
    }

    #[test]
    fn smooth_sizes() {
        assert_eq!(smooth_even_at_least(7), 8);
        assert_eq!(smooth_even_at_least(61), 64);
        assert_eq!(smooth_even_at_least(71), 72);
        assert_eq!(smooth_even_at_least(83), 84);
        assert_eq!(smooth_even_at_least(97), 98);
    }

    #[test]
    fn zero_maps_to_zero() {
        let g = Grid::new(8, 2.0).unwrap();
        let f = ScalarFieldX::zeros(&g);
        assert_eq!(forward_transform(&f).max_abs(), 0.0);
        assert_eq!(inverse_transform(&ScalarFieldK::zeros(&g)).max_abs(), 0.0);
        assert_eq!(convolve_kernel(&f, &vec![1.0; g.size()]).max_abs(), 0.0);
    }

    #[test]
    fn inner_rejects_grid_mismatch() {
        let a = ScalarFieldX::zeros(&Grid::new(8, 2.0).unwrap());
        let b = ScalarFieldX::zeros(&Grid::new(8, 3.0).unwrap());
        assert!(matches!(a.inner(&b), Err(Error::GridMismatch)));
    }

    #[test]
    fn from_values_checks_count_and_finiteness() {
        let g = Grid::new(8, 2.0).unwrap();
        assert!(ScalarFieldX::from_values(&g, vec![Complex64::default(); 10]).is_err());
        let mut v = vec![Complex64::default(); g.size()];
        v[3] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(ScalarFieldX::from_values(&g, v), Err(Error::NonFinite(_))));
    }
}
