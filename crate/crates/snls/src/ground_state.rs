//! Ground state of `Q'' - Q + Q^p = 0`, its rescalings and traveling solitons.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{d1, d2, fft_forward, fft_inverse, l2_norm, Field, Grid, C64};
use crate::krylov::gmres;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonParams {
    pub w: f64,
    pub v: f64,
    pub alpha0: f64,
    pub theta0: f64,
}

impl SolitonParams {
    pub fn new(w: f64, v: f64, alpha0: f64, theta0: f64) -> Result<Self> {
        let s = Self { w, v, alpha0, theta0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.w, self.v, self.alpha0, self.theta0].iter().all(|a| a.is_finite()) {
            return Err(invalid("soliton parameters must be finite"));
        }
        if self.w <= 0.0 {
            return Err(invalid(format!("soliton scale must be positive, got {}", self.w)));
        }
        Ok(())
    }

    /// Center of the unmodulated soliton at time t.
    pub fn center(&self, t: f64) -> f64 {
        self.v * t + self.alpha0
    }

    /// Phase (without the modulation) at time t and position x.
    pub fn phase(&self, t: f64, x: f64, theta: f64) -> f64 {
        0.5 * self.v * x - 0.25 * self.v * self.v * t + t / (self.w * self.w) + theta
    }
}

pub fn validate_family(family: &[SolitonParams]) -> Result<()> {
    for s in family {
        s.validate()?;
    }
    for i in 0..family.len() {
        for j in i + 1..family.len() {
            if family[i].v == family[j].v {
                return Err(invalid(format!(
                    "solitons {} and {} share the velocity {}",
                    i + 1,
                    j + 1,
                    family[i].v
                )));
            }
        }
    }
    Ok(())
}

/// The explicit one-dimensional ground state.
pub fn closed_form(p: f64, x: f64) -> f64 {
    let a = ((p + 1.0) / 2.0).powf(1.0 / (p - 1.0));
    a * (1.0 / (0.5 * (p - 1.0) * x).cosh()).powf(2.0 / (p - 1.0))
}

#[derive(Clone, Debug)]
pub struct GroundState {
    p: f64,
    profile: Field,
    decay_rate: f64,
}

impl GroundState {
    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn profile(&self) -> &Field {
        &self.profile
    }

    pub fn grid(&self) -> &Grid {
        self.profile.grid()
    }

    pub fn decay_rate(&self) -> f64 {
        self.decay_rate
    }

    /// Values of Q as reals.
    pub fn values(&self) -> Vec<f64> {
        self.profile.re()
    }

    /// ‖Q'' - Q + Q^p‖ in L2.
    pub fn residual(&self) -> f64 {
        l2_norm(&residual_field(&self.profile, self.p))
    }

    /// Refits the decay rate on a different window.
    pub fn fit_decay(&self, window: (f64, f64)) -> Result<f64> {
        fit_decay_rate(&self.profile, window)
    }
}

fn nonlinearity(q: f64, p: f64) -> f64 {
    q.abs().powf(p - 1.0) * q
}

fn residual_field(q: &Field, p: f64) -> Field {
    let q2 = d2(q);
    q2.zip_map(q, |a, b| C64::new(a.re - b.re + nonlinearity(b.re, p), 0.0))
        .expect("same grid")
}

/// Applies `(1 - d^2)^{-1}` to a real vector.
pub(crate) fn helmholtz_inverse(grid: &Grid, f: &[f64]) -> Vec<f64> {
    let mut buf: Vec<C64> = f.iter().map(|&a| C64::new(a, 0.0)).collect();
    fft_forward(&mut buf);
    for (z, k) in buf.iter_mut().zip(grid.wavenumbers()) {
        *z /= 1.0 + k * k;
    }
    fft_inverse(&mut buf);
    buf.iter().map(|z| z.re).collect()
}

/// `-f'' + f - c f` for real vectors with pointwise potential `c`.
pub(crate) fn schrodinger_apply(grid: &Grid, f: &[f64], potential: &[f64]) -> Vec<f64> {
    let mut buf: Vec<C64> = f.iter().map(|&a| C64::new(a, 0.0)).collect();
    fft_forward(&mut buf);
    for (z, k) in buf.iter_mut().zip(grid.wavenumbers()) {
        *z *= 1.0 + k * k;
    }
    fft_inverse(&mut buf);
    buf.iter()
        .zip(f)
        .zip(potential)
        .map(|((z, a), c)| z.re - c * a)
        .collect()
}

pub const DEFAULT_DECAY_WINDOW: (f64, f64) = (5.0, 15.0);

pub fn solve_ground_state(p: f64, grid: Grid, tol: f64) -> Result<GroundState> {
    if !(p > 5.0 && p.is_finite()) {
        return Err(invalid(format!("need a mass-supercritical exponent p > 5, got {p}")));
    }
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    let n = grid.n_points();
    let mut q: Vec<f64> = grid.coords().iter().map(|&x| closed_form(p, x)).collect();
    let mut res = f64::INFINITY;
    for _ in 0..30 {
        let field = Field::from_real(grid, &q)?;
        let r = residual_field(&field, p);
        res = l2_norm(&r);
        if res <= tol * 1e-2 {
            break;
        }
        let pot: Vec<f64> = q.iter().map(|&a| p * a.abs().powf(p - 1.0)).collect();
        let rhs = r.re();
        let op = |x: &[f64]| schrodinger_apply(&grid, x, &pot);
        let prec = |x: &[f64]| helmholtz_inverse(&grid, x);
        let out = gmres(&op, &prec, &rhs, 1e-14, 80, 400);
        let prev = res;
        for (a, d) in q.iter_mut().zip(&out.solution) {
            *a += d;
        }
        let trial = l2_norm(&residual_field(&Field::from_real(grid, &q)?, p));
        if !(trial < prev) {
            // Newton stalled at round-off; undo and stop
            for (a, d) in q.iter_mut().zip(&out.solution) {
                *a -= d;
            }
            break;
        }
    }
    // symmetrize and fix sign
    let sym: Vec<f64> = (0..n)
        .map(|j| 0.5 * (q[j] + q[grid.mirror_index(j)]))
        .collect();
    let sign = if sym[grid.center_index()] < 0.0 { -1.0 } else { 1.0 };
    let q: Vec<f64> = sym.iter().map(|a| a * sign).collect();
    let profile = Field::from_real(grid, &q)?;
    res = res.min(l2_norm(&residual_field(&profile, p)));
    if !(res <= tol) {
        return Err(Error::SolverFailure { residual: res });
    }
    let decay_rate = fit_decay_rate(&profile, DEFAULT_DECAY_WINDOW)?;
    Ok(GroundState { p, profile, decay_rate })
}

/// Least-squares slope of `(x, y)`; returns (slope, intercept, rms residual).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return Err(Error::FitFailure(format!("need at least two points, got {n}")));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::FitFailure("degenerate abscissae".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rms = (xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - icpt - slope * x).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    Ok((slope, icpt, rms))
}

/// Exponential decay rate of |f| fitted on `a <= |x| <= b`.
pub fn fit_decay_rate(f: &Field, window: (f64, f64)) -> Result<f64> {
    let g = f.grid();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (j, z) in f.values().iter().enumerate() {
        let ax = g.x(j).abs();
        if ax >= window.0 && ax <= window.1 && z.norm() > 1e-300 {
            xs.push(ax);
            ys.push(z.norm().ln());
        }
    }
    Ok(-linear_fit(&xs, &ys)?.0)
}

/// `Q_w(x) = w^{-2/(p-1)} Q(x/w)` by trigonometric interpolation of Q.
pub fn rescale(q: &GroundState, w: f64) -> Result<Field> {
    Ok(dilate(&q.profile, w, w.powf(-2.0 / (q.p - 1.0)))?.real_part())
}

/// `amp·f(x/w)`, zero where `x/w` leaves the domain.
pub(crate) fn dilate(f: &Field, w: f64, amp: f64) -> Result<Field> {
    if !(w > 0.0 && w.is_finite()) {
        return Err(invalid(format!("scale must be positive, got {w}")));
    }
    let grid = *f.grid();
    if w == 1.0 {
        return Ok(f.scale(C64::new(amp, 0.0)));
    }
    let l = grid.half_length();
    let inside: Vec<(usize, f64)> = grid
        .coords()
        .iter()
        .enumerate()
        .map(|(j, &x)| (j, x / w))
        .filter(|(_, y)| *y >= -l && *y < l)
        .collect();
    let pts: Vec<f64> = inside.iter().map(|&(_, y)| y).collect();
    let vals = f.interpolate(&pts);
    let mut out = vec![C64::new(0.0, 0.0); grid.n_points()];
    for ((j, _), v) in inside.iter().zip(vals) {
        out[*j] = v * amp;
    }
    Field::new(grid, out)
}

/// Residual of `Q_w'' - w^{-2} Q_w + Q_w^p`.
pub fn rescaled_residual(qw: &Field, w: f64, p: f64) -> f64 {
    let q2 = d2(qw);
    let r = q2
        .zip_map(qw, |a, b| C64::new(a.re - b.re / (w * w) + nonlinearity(b.re, p), 0.0))
        .expect("same grid");
    l2_norm(&r)
}

pub(crate) fn check_center(grid: &Grid, center: f64) -> Result<()> {
    if center.abs() > grid.half_length() - 10.0 * grid.spacing() || !center.is_finite() {
        return Err(Error::DomainExceeded { center });
    }
    Ok(())
}

/// Traveling soliton `Q_w(x - vt - α0) e^{i(vx/2 - v²t/4 + t/w² + θ0)}`.
pub fn soliton(params: &SolitonParams, q: &GroundState, t: f64, grid: &Grid) -> Result<Field> {
    if grid != q.grid() {
        return Err(Error::IncompatibleGrids);
    }
    params.validate()?;
    let c = params.center(t);
    check_center(grid, c)?;
    let qw = rescale(q, params.w)?.shifted(c);
    let mut out = qw;
    for (j, z) in out.values_mut().iter_mut().enumerate() {
        let x = grid.x(j);
        *z = C64::from_polar(z.re, params.phase(t, x, params.theta0));
    }
    Ok(out)
}

/// Translation-kernel direction Q'.
pub fn derivative_profile(q: &GroundState) -> Field {
    d1(&q.profile).real_part()
}
