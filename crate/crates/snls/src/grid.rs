//! Periodic one-dimensional lattice on `[-L, L)` and complex lattice functions
//! with Fourier calculus.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    n_points: usize,
    half_length: f64,
    spacing: f64,
}

impl Grid {
    pub fn new(n_points: usize, half_length: f64) -> Result<Self> {
        if n_points < 16 || !n_points.is_power_of_two() {
            return Err(invalid(format!(
                "n_points must be a power of two >= 16, got {n_points}"
            )));
        }
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(invalid(format!("half_length must be positive, got {half_length}")));
        }
        Ok(Self {
            n_points,
            half_length,
            spacing: 2.0 * half_length / n_points as f64,
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.half_length + j as f64 * self.spacing
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.x(j)).collect()
    }

    /// Index of x = 0.
    pub fn center_index(&self) -> usize {
        self.n_points / 2
    }

    /// Index of -x_j.
    pub fn mirror_index(&self, j: usize) -> usize {
        (self.n_points - j) % self.n_points
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n_points as i64;
        let k0 = PI / self.half_length;
        (0..n)
            .map(|j| if j < n / 2 { j as f64 * k0 } else { (j - n) as f64 * k0 })
            .collect()
    }

    /// Largest resolved wavenumber.
    pub fn k_max(&self) -> f64 {
        PI / self.spacing
    }

    pub fn with_points(&self, n_points: usize) -> Result<Self> {
        Self::new(n_points, self.half_length)
    }
}

type Plans = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<usize, Plans>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plans(n: usize) -> Plans {
    PLANS.with(|cell| {
        let mut guard = cell.borrow_mut();
        let (planner, cache) = &mut *guard;
        if let Some(p) = cache.get(&n) {
            return p.clone();
        }
        let p = (planner.plan_fft_forward(n), planner.plan_fft_inverse(n));
        cache.insert(n, p.clone());
        p
    })
}

/// Unnormalized forward transform in place.
pub fn fft_forward(buf: &mut [C64]) {
    plans(buf.len()).0.process(buf);
}

/// Inverse transform in place, normalized by 1/N.
pub fn fft_inverse(buf: &mut [C64]) {
    let n = buf.len();
    plans(n).1.process(buf);
    let s = 1.0 / n as f64;
    for z in buf.iter_mut() {
        *z *= s;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<C64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.n_points {
            return Err(invalid(format!(
                "field has {} values but the grid has {} points",
                values.len(),
                grid.n_points
            )));
        }
        if values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(invalid("field contains non-finite values"));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_vec(grid: Grid, values: Vec<C64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_points);
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::from_vec(grid, vec![C64::new(0.0, 0.0); grid.n_points])
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> C64) -> Self {
        Self::from_vec(grid, (0..grid.n_points).map(|j| f(grid.x(j))).collect())
    }

    pub fn from_real_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, |x| C64::new(f(x), 0.0))
    }

    pub fn from_real(grid: Grid, values: &[f64]) -> Result<Self> {
        Self::new(grid, values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.im).collect()
    }

    pub fn real_part(&self) -> Field {
        self.map(|z| C64::new(z.re, 0.0))
    }

    pub fn imag_part(&self) -> Field {
        self.map(|z| C64::new(z.im, 0.0))
    }

    pub fn conj(&self) -> Field {
        self.map(|z| z.conj())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Field {
        Field::from_vec(self.grid, self.values.iter().map(|&z| f(z)).collect())
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(C64, C64) -> C64) -> Result<Field> {
        same_grid(self, other)?;
        Ok(Field::from_vec(
            self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub fn scale(&self, s: C64) -> Field {
        self.map(|z| z * s)
    }

    /// self += s * other
    pub fn axpy(&mut self, s: C64, other: &Field) {
        assert_eq!(self.grid, other.grid, "axpy on incompatible grids");
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn at_origin(&self) -> C64 {
        self.values[self.grid.center_index()]
    }

    /// Unnormalized discrete Fourier coefficients.
    pub fn spectrum(&self) -> Vec<C64> {
        let mut buf = self.values.clone();
        fft_forward(&mut buf);
        buf
    }

    pub fn from_spectrum(grid: Grid, mut spectrum: Vec<C64>) -> Self {
        fft_inverse(&mut spectrum);
        Self::from_vec(grid, spectrum)
    }

    /// Applies a Fourier multiplier.
    pub fn apply_symbol(&self, symbol: impl Fn(f64) -> C64) -> Field {
        let mut buf = self.spectrum();
        for (z, k) in buf.iter_mut().zip(self.grid.wavenumbers()) {
            *z *= symbol(k);
        }
        Field::from_spectrum(self.grid, buf)
    }

    /// Periodic translate x -> f(x - c).
    pub fn shifted(&self, c: f64) -> Field {
        self.apply_symbol(|k| C64::from_polar(1.0, -k * c))
    }

    /// Trigonometric interpolant evaluated at arbitrary points (periodic).
    pub fn interpolate(&self, points: &[f64]) -> Vec<C64> {
        let n = self.grid.n_points;
        let spec = self.spectrum();
        let k0 = PI / self.grid.half_length;
        let half = n / 2;
        points
            .iter()
            .map(|&x| {
                let theta = k0 * (x + self.grid.half_length);
                let mut acc = spec[0];
                let step = C64::from_polar(1.0, theta);
                let mut z = C64::new(1.0, 0.0);
                for j in 1..half {
                    if j % 64 == 0 {
                        z = C64::from_polar(1.0, theta * j as f64);
                    } else {
                        z *= step;
                    }
                    acc += spec[j] * z + spec[n - j] * z.conj();
                }
                acc += spec[half] * (theta * half as f64).cos();
                acc / n as f64
            })
            .collect()
    }

    /// Zero-padded (or truncated) Fourier resampling onto a grid with the same
    /// half-length and a different number of points.
    pub fn resample(&self, target: Grid) -> Result<Field> {
        if target.half_length != self.grid.half_length {
            return Err(Error::IncompatibleGrids);
        }
        let n = self.grid.n_points;
        let m = target.n_points;
        if m == n {
            return Ok(self.clone());
        }
        let spec = self.spectrum();
        let mut out = vec![C64::new(0.0, 0.0); m];
        let half = n.min(m) / 2;
        for j in 0..half {
            out[j] = spec[j];
            if j > 0 {
                out[m - j] = spec[n - j];
            }
        }
        // split or fold the Nyquist mode
        if m > n {
            out[half] = spec[half] * 0.5;
            out[m - half] = spec[half] * 0.5;
        } else {
            out[half] = spec[half] + spec[n - half];
        }
        let s = m as f64 / n as f64;
        for z in out.iter_mut() {
            *z *= s;
        }
        Ok(Field::from_spectrum(target, out))
    }
}

pub(crate) fn same_grid(f: &Field, g: &Field) -> Result<()> {
    if f.grid == g.grid {
        Ok(())
    } else {
        Err(Error::IncompatibleGrids)
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a + b).expect("add on incompatible grids")
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a - b).expect("sub on incompatible grids")
    }
}

impl Mul<&Field> for &Field {
    type Output = Field;
    fn mul(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a * b).expect("mul on incompatible grids")
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, s: f64) -> Field {
        self.map(|z| z * s)
    }
}

impl Mul<C64> for &Field {
    type Output = Field;
    fn mul(self, s: C64) -> Field {
        self.map(|z| z * s)
    }
}

impl Neg for &Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.map(|z| -z)
    }
}

/// Spectral derivative of order 1 or 2.
pub fn derivative(f: &Field, order: u32) -> Result<Field> {
    let nyq = f.grid.k_max();
    match order {
        1 => Ok(f.apply_symbol(|k| if k.abs() >= nyq { C64::new(0.0, 0.0) } else { C64::new(0.0, k) })),
        2 => Ok(f.apply_symbol(|k| C64::new(-k * k, 0.0))),
        _ => Err(invalid(format!("derivative order must be 1 or 2, got {order}"))),
    }
}

pub(crate) fn d1(f: &Field) -> Field {
    derivative(f, 1).expect("order 1")
}

pub(crate) fn d2(f: &Field) -> Field {
    derivative(f, 2).expect("order 2")
}

/// Rectangle-rule quadrature of f * conj(g).
pub fn inner_product(f: &Field, g: &Field) -> Result<C64> {
    same_grid(f, g)?;
    let s: C64 = f.values.iter().zip(&g.values).map(|(a, b)| a * b.conj()).sum();
    Ok(s * f.grid.spacing)
}

pub(crate) fn inner(f: &Field, g: &Field) -> C64 {
    inner_product(f, g).expect("inner product on incompatible grids")
}

/// Real quadrature of a real-valued integrand given pointwise.
pub fn integrate(grid: &Grid, values: impl Iterator<Item = f64>) -> f64 {
    values.sum::<f64>() * grid.spacing
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormKind {
    L2,
    H1,
    Lp(f64),
}

pub fn norm(f: &Field, kind: NormKind) -> Result<f64> {
    let h = f.grid.spacing;
    match kind {
        NormKind::L2 => Ok(mass(f).sqrt()),
        NormKind::H1 => Ok((mass(f) + mass(&d1(f))).sqrt()),
        NormKind::Lp(p) => {
            if !(p >= 1.0) {
                return Err(invalid(format!("Lp norm needs p >= 1, got {p}")));
            }
            if p.is_infinite() {
                return Ok(f.max_abs());
            }
            let s: f64 = f.values.iter().map(|z| z.norm().powf(p)).sum();
            Ok((s * h).powf(1.0 / p))
        }
    }
}

/// Squared L2 norm.
pub fn mass(f: &Field) -> f64 {
    f.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * f.grid.spacing
}

pub fn h1_norm(f: &Field) -> f64 {
    norm(f, NormKind::H1).expect("H1 norm")
}

pub fn l2_norm(f: &Field) -> f64 {
    mass(f).sqrt()
}
