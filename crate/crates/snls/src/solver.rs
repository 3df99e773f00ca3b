//! Forward and backward integration of the rescaled random NLS
//! `i∂u + (Δ + b*·∂ + c*)u + |u|^{p-1}u = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{d1, d2, fft_forward, fft_inverse, Field, Grid, C64, I};
use crate::noise::NoiseRealization;

pub const BLOWUP_THRESHOLD: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    StrangSplit,
    Rk4Spectral,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub cfl_guard: f64,
    pub p: f64,
    /// Order of the symmetric composition of Strang steps (2 = plain Strang).
    #[serde(default = "default_order")]
    pub order: u32,
}

fn default_order() -> u32 {
    2
}

const KAHAN_LI_6: [f64; 5] = [
    0.392_161_444_007_314_1,
    0.332_599_136_789_359_4,
    -0.706_246_172_557_639_4,
    0.082_213_596_293_550_8,
    0.798_543_990_934_83,
];

const KAHAN_LI_8: [f64; 8] = [
    0.741_670_364_350_613,
    -0.409_100_825_800_031_6,
    0.190_754_710_296_238_4,
    -0.573_862_471_116_082_3,
    0.299_064_181_303_655_9,
    0.334_624_918_245_298_2,
    0.315_293_092_396_766_6,
    -0.796_887_939_352_916_4,
];

fn palindrome(half: &[f64]) -> Vec<f64> {
    let mut w = half.to_vec();
    w.extend(half[..half.len() - 1].iter().rev());
    w
}

/// Weights of the symmetric Strang composition of the given order.
fn composition_weights(order: u32) -> Vec<f64> {
    match order {
        4 => {
            let x1 = 1.0 / (2.0 - 2f64.cbrt());
            vec![x1, 1.0 - 2.0 * x1, x1]
        }
        6 => palindrome(&KAHAN_LI_6),
        8 => palindrome(&KAHAN_LI_8),
        _ => vec![1.0],
    }
}

impl SolverConfig {
    pub fn strang(dt: f64, p: f64) -> Self {
        Self { dt, scheme: Scheme::StrangSplit, cfl_guard: 0.25, p, order: 2 }
    }

    pub fn composed(dt: f64, p: f64, order: u32) -> Self {
        Self { order, ..Self::strang(dt, p) }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(invalid("dt must be positive"));
        }
        if !(self.p > 5.0) {
            return Err(invalid(format!("p must exceed 5, got {}", self.p)));
        }
        if ![2, 4, 6, 8].contains(&self.order) {
            return Err(invalid(format!("composition order must be 2, 4, 6 or 8, got {}", self.order)));
        }
        match self.scheme {
            Scheme::StrangSplit if self.dt > 0.1 => {
                Err(invalid(format!("Strang step {} exceeds 0.1", self.dt)))
            }
            Scheme::Rk4Spectral if self.dt > self.cfl_guard * grid.spacing().powi(2) => Err(invalid(
                format!(
                    "RK4 step {} exceeds cfl_guard·h² = {}",
                    self.dt,
                    self.cfl_guard * grid.spacing().powi(2)
                ),
            )),
            _ => Ok(()),
        }
    }
}

/// `e^{iθ} - 1` without cancellation.
fn expm1_i(theta: f64) -> C64 {
    let s = (0.5 * theta).sin();
    C64::new(-2.0 * s * s, theta.sin())
}

fn power(z: C64, p: f64) -> f64 {
    z.norm_sqr().powf(0.5 * (p - 1.0))
}

/// `∂u = i(Δu + b*∂u + c*u + |u|^{p-1}u)`.
pub fn rhs(u: &Field, t: f64, noise: Option<&NoiseRealization>, p: f64) -> Result<Field> {
    let lap = d2(u);
    let mut out = lap.zip_map(u, |a, b| I * (a + power(b, p) * b))?;
    if let Some(nz) = noise {
        let (b, c) = nz.coefficients(t, u.grid())?;
        let du = d1(u);
        for (j, z) in out.values_mut().iter_mut().enumerate() {
            *z += I * (b.values()[j] * du.values()[j] + c.values()[j] * u.values()[j]);
        }
    }
    if !out.is_finite() {
        return Err(Error::NumericalBlowup { t });
    }
    Ok(out)
}

/// Stepper with per-grid caches.
pub struct Integrator<'a> {
    grid: Grid,
    config: SolverConfig,
    noise: Option<&'a NoiseRealization>,
    k2: Vec<f64>,
    linear_cache: Vec<(f64, Vec<C64>)>,
    profiles: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl<'a> Integrator<'a> {
    pub fn new(grid: Grid, config: SolverConfig, noise: Option<&'a NoiseRealization>) -> Result<Self> {
        config.validate(&grid)?;
        let profiles = noise
            .map(|n| n.spec().profiles.iter().map(|p| p.sample(&grid, 0)).collect())
            .unwrap_or_default();
        Ok(Self {
            grid,
            config,
            noise,
            k2: grid.wavenumbers().iter().map(|k| k * k).collect(),
            linear_cache: Vec::new(),
            profiles,
            weights: composition_weights(config.order),
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Exact flow of `i∂u + Δu = 0` over h, applied in increment form.
    fn linear(&mut self, buf: &mut [C64], h: f64) {
        let idx = match self.linear_cache.iter().position(|(c, _)| *c == h) {
            Some(i) => i,
            None => {
                let m = self.k2.iter().map(|k2| expm1_i(-h * k2)).collect();
                self.linear_cache.push((h, m));
                self.linear_cache.len() - 1
            }
        };
        let m = &self.linear_cache[idx].1;
        fft_forward(buf);
        for (z, d) in buf.iter_mut().zip(m) {
            *z += *z * d;
        }
        fft_inverse(buf);
    }

    fn nonlinear(&self, buf: &mut [C64], h: f64) {
        let p = self.config.p;
        for z in buf.iter_mut() {
            *z += *z * expm1_i(h * power(*z, p));
        }
    }

    /// ψ with `W* = -iψ` at time t.
    fn psi(&self, t: f64) -> Option<Vec<f64>> {
        let nz = self.noise?;
        let t = t.clamp(0.0, nz.horizon());
        let mut psi = vec![0.0; self.grid.n_points()];
        let mut any = false;
        for (k, prof) in self.profiles.iter().enumerate() {
            let b = nz.tail_at(k, t);
            if b != 0.0 {
                any = true;
                for (s, f) in psi.iter_mut().zip(prof) {
                    *s += f * b;
                }
            }
        }
        any.then_some(psi)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if let Some(nz) = self.noise {
            if t < -1e-12 || t > nz.horizon() + 1e-9 {
                return Err(invalid(format!("time {t} outside the noise horizon")));
            }
        }
        Ok(())
    }

    pub fn step(&mut self, u: &Field, t: f64, dt: f64) -> Result<Field> {
        if u.grid() != &self.grid {
            return Err(Error::IncompatibleGrids);
        }
        if dt.abs() > self.config.dt * (1.0 + 1e-12) {
            return Err(invalid(format!("step {dt} exceeds configured dt {}", self.config.dt)));
        }
        self.check_time(t)?;
        self.check_time(t + dt)?;
        let out = match self.config.scheme {
            Scheme::StrangSplit if self.noise.is_none() => self.composed(u, dt),
            Scheme::StrangSplit => {
                let mut cur = u.clone();
                let mut s = t;
                for i in 0..self.weights.len() {
                    let h = self.weights[i] * dt;
                    cur = self.strang(&cur, s, h);
                    s += h;
                }
                cur
            }
            Scheme::Rk4Spectral => self.rk4(u, t, dt)?,
        };
        let t1 = t + dt;
        if !out.is_finite() || out.max_abs() > BLOWUP_THRESHOLD {
            return Err(Error::NumericalBlowup { t: t1 });
        }
        Ok(out)
    }

    /// `e^{-W} S_NLS(dt) e^{W}` with W frozen at the midpoint.
    fn strang(&mut self, u: &Field, t: f64, dt: f64) -> Field {
        let psi = self.psi(t + 0.5 * dt);
        let mut buf = u.values().to_vec();
        if let Some(psi) = &psi {
            for (z, s) in buf.iter_mut().zip(psi) {
                *z *= C64::from_polar(1.0, -s);
            }
        }
        self.linear(&mut buf, 0.5 * dt);
        self.nonlinear(&mut buf, dt);
        self.linear(&mut buf, 0.5 * dt);
        if let Some(psi) = &psi {
            for (z, s) in buf.iter_mut().zip(psi) {
                *z *= C64::from_polar(1.0, *s);
            }
        }
        Field::from_vec(self.grid, buf)
    }

    /// Composition without noise; adjacent linear half steps are merged.
    fn composed(&mut self, u: &Field, dt: f64) -> Field {
        let w = self.weights.clone();
        let mut buf = u.values().to_vec();
        self.linear(&mut buf, 0.5 * w[0] * dt);
        for i in 0..w.len() {
            self.nonlinear(&mut buf, w[i] * dt);
            let next = w.get(i + 1).copied().unwrap_or(0.0);
            self.linear(&mut buf, 0.5 * (w[i] + next) * dt);
        }
        Field::from_vec(self.grid, buf)
    }

    fn rk4(&self, u: &Field, t: f64, dt: f64) -> Result<Field> {
        let p = self.config.p;
        let k1 = rhs(u, t, self.noise, p)?;
        let mut u2 = u.clone();
        u2.axpy(C64::new(0.5 * dt, 0.0), &k1);
        let k2 = rhs(&u2, t + 0.5 * dt, self.noise, p)?;
        let mut u3 = u.clone();
        u3.axpy(C64::new(0.5 * dt, 0.0), &k2);
        let k3 = rhs(&u3, t + 0.5 * dt, self.noise, p)?;
        let mut u4 = u.clone();
        u4.axpy(C64::new(dt, 0.0), &k3);
        let k4 = rhs(&u4, t + dt, self.noise, p)?;
        let mut out = u.clone();
        out.axpy(C64::new(dt / 6.0, 0.0), &k1);
        out.axpy(C64::new(dt / 3.0, 0.0), &k2);
        out.axpy(C64::new(dt / 3.0, 0.0), &k3);
        out.axpy(C64::new(dt / 6.0, 0.0), &k4);
        Ok(out)
    }

    /// Integrates from t0 to t1 in uniform sub-steps no larger than dt.
    pub fn advance(&mut self, u: &Field, t0: f64, t1: f64) -> Result<Field> {
        let span = t1 - t0;
        if span == 0.0 {
            return Ok(u.clone());
        }
        let n = ((span.abs() / self.config.dt) - 1e-9).ceil().max(1.0) as usize;
        let h = span / n as f64;
        let mut cur = u.clone();
        for i in 0..n {
            cur = self.step(&cur, t0 + i as f64 * h, h)?;
        }
        Ok(cur)
    }

    /// Integrates with an observer at `t0` and every `cadence` after it; the
    /// observer returns `false` to stop. Returns the time reached and field.
    pub fn evolve(
        &mut self,
        u0: &Field,
        t0: f64,
        t1: f64,
        cadence: Option<f64>,
        observer: &mut dyn FnMut(f64, &Field) -> bool,
    ) -> Result<(f64, Field)> {
        let span = t1 - t0;
        let samples = match cadence {
            Some(c) if c > 0.0 => ((span.abs() / c) - 1e-9).ceil().max(1.0) as usize,
            Some(_) => return Err(invalid("cadence must be positive")),
            None => 1,
        };
        if !observer(t0, u0) {
            return Ok((t0, u0.clone()));
        }
        let mut cur = u0.clone();
        let mut t = t0;
        for s in 1..=samples {
            let next = if s == samples { t1 } else { t0 + span * s as f64 / samples as f64 };
            cur = self.advance(&cur, t, next)?;
            t = next;
            if !observer(t, &cur) {
                break;
            }
        }
        Ok((t, cur))
    }
}

pub fn step(
    u: &Field,
    t: f64,
    dt_signed: f64,
    noise: Option<&NoiseRealization>,
    config: &SolverConfig,
) -> Result<Field> {
    Integrator::new(*u.grid(), *config, noise)?.step(u, t, dt_signed)
}

pub fn evolve(
    u0: &Field,
    t0: f64,
    t1: f64,
    noise: Option<&NoiseRealization>,
    config: &SolverConfig,
    cadence: Option<f64>,
    observer: &mut dyn FnMut(f64, &Field) -> bool,
) -> Result<Field> {
    let mut it = Integrator::new(*u0.grid(), *config, noise)?;
    Ok(it.evolve(u0, t0, t1, cadence, observer)?.1)
}

/// `X = e^{W*}u`.
pub fn to_physical(u: &Field, noise: Option<&NoiseRealization>, t: f64) -> Result<Field> {
    match noise {
        None => Ok(u.clone()),
        Some(nz) => {
            let w = nz.phase_field_w(t, u.grid())?;
            u.zip_map(&w, |a, b| a * b.exp())
        }
    }
}

/// Inverse of [`to_physical`].
pub fn from_physical(x: &Field, noise: Option<&NoiseRealization>, t: f64) -> Result<Field> {
    match noise {
        None => Ok(x.clone()),
        Some(nz) => {
            let w = nz.phase_field_w(t, x.grid())?;
            x.zip_map(&w, |a, b| a * (-b).exp())
        }
    }
}
