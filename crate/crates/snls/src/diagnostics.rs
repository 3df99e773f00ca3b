//! Lyapunov functional, localization, the quadratic form H(ε), remainder
//! control and decay-rate fits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{d1, inner, integrate, Field, Grid, C64, I};
use crate::ground_state::SolitonParams;
use crate::modulation::{ModulationState, ProfileBank};
use crate::noise::NoiseCase;

/// Smoothstep `6s⁵ - 15s⁴ + 10s³` on `[-a0, a0]`, 0 to the left and 1 to the right.
pub fn psi(x: f64, a0: f64) -> f64 {
    let s = ((x + a0) / (2.0 * a0)).clamp(0.0, 1.0);
    s * s * s * (s * (6.0 * s - 15.0) + 10.0)
}

/// `(Ψ', Ψ'', Ψ''')`.
pub fn psi_derivatives(x: f64, a0: f64) -> (f64, f64, f64) {
    let s = (x + a0) / (2.0 * a0);
    if !(0.0..=1.0).contains(&s) {
        return (0.0, 0.0, 0.0);
    }
    let c = 1.0 / (2.0 * a0);
    let d1 = 30.0 * s * s * (s - 1.0).powi(2);
    let d2 = 60.0 * s * (2.0 * s * s - 3.0 * s + 1.0);
    let d3 = 60.0 * (6.0 * s * s - 6.0 * s + 1.0);
    (d1 * c, d2 * c * c, d3 * c * c * c)
}

/// Localization functions `φ_k(t, x)` built from Ψ with the soliton
/// velocities sorted increasingly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalizationSet {
    pub a0: f64,
    /// Midpoints `A_k`, one per adjacent pair in sorted order.
    pub midpoints: Vec<f64>,
    /// `order[j]` is the soliton index with the j-th smallest velocity.
    pub order: Vec<usize>,
    pub params: Vec<SolitonParams>,
}

impl LocalizationSet {
    pub fn new(params: &[SolitonParams]) -> Result<Self> {
        crate::ground_state::validate_family(params)?;
        let mut order: Vec<usize> = (0..params.len()).collect();
        order.sort_by(|&a, &b| params[a].v.total_cmp(&params[b].v));
        let vs: Vec<f64> = order.iter().map(|&k| params[k].v).collect();
        let gaps: Vec<f64> = vs.windows(2).map(|w| w[1] - w[0]).collect();
        let a0 = if gaps.is_empty() { 1.0 } else { 0.25 * gaps.iter().cloned().fold(f64::INFINITY, f64::min) };
        let midpoints = vs.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Ok(Self { a0, midpoints, order, params: params.to_vec() })
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    fn step(&self, j: usize, t: f64, x: f64) -> f64 {
        psi((x - self.midpoints[j] * t) / t, self.a0)
    }

    /// `φ_k(t, x)` for the soliton with index k.
    pub fn phi(&self, k: usize, t: f64, x: f64) -> f64 {
        let n = self.len();
        let j = self.order.iter().position(|&o| o == k).expect("index in range");
        if n == 1 {
            return 1.0;
        }
        let left = if j == 0 { 1.0 } else { self.step(j - 1, t, x) };
        let right = if j == n - 1 { 0.0 } else { self.step(j, t, x) };
        left - right
    }

    pub fn sample(&self, k: usize, t: f64, grid: &Grid) -> Vec<f64> {
        grid.coords().iter().map(|&x| self.phi(k, t, x)).collect()
    }

    /// Smallest C with `(Ψ')² ≤ CΨ` and `(Ψ'')² ≤ CΨ'` on a fine grid.
    pub fn psi_constant(&self, samples: usize) -> f64 {
        let mut c: f64 = 0.0;
        for i in 1..samples {
            let x = -self.a0 + 2.0 * self.a0 * i as f64 / samples as f64;
            let (d1, d2, _) = psi_derivatives(x, self.a0);
            let p = psi(x, self.a0);
            if p > 0.0 {
                c = c.max(d1 * d1 / p);
            }
            if d1 > 0.0 {
                c = c.max(d2 * d2 / d1);
            }
        }
        c
    }

    /// `sup_x (|∂ₓφ_k| + |∂ₓ³φ_k| + |∂ₜφ_k|)·t` at time t, over all k.
    pub fn derivative_constant(&self, t: f64, grid: &Grid) -> f64 {
        let mut worst: f64 = 0.0;
        for &x in &grid.coords() {
            for k in 0..self.len() {
                let j = self.order.iter().position(|&o| o == k).expect("index");
                let mut dx = 0.0;
                let mut dx3 = 0.0;
                let mut dt = 0.0;
                let mut add = |m: usize, sign: f64| {
                    let y = (x - self.midpoints[m] * t) / t;
                    let (p1, _, p3) = psi_derivatives(y, self.a0);
                    dx += sign * p1 / t;
                    dx3 += sign * p3 / t.powi(3);
                    dt += sign * p1 * (-x / (t * t));
                };
                if self.len() > 1 {
                    if j > 0 {
                        add(j - 1, 1.0);
                    }
                    if j < self.len() - 1 {
                        add(j, -1.0);
                    }
                }
                worst = worst.max((dx.abs() + dx3.abs() + dt.abs()) * t);
            }
        }
        worst
    }
}

fn power(z: C64, q: f64) -> f64 {
    z.norm_sqr().powf(0.5 * q)
}

/// Localized energy-mass-momentum functional 𝒢(t).
pub fn lyapunov(u: &Field, t: f64, locs: &LocalizationSet, p: f64) -> Result<f64> {
    if t < 1.0 {
        return Err(invalid(format!("the functional needs t ≥ 1, got {t}")));
    }
    let g = *u.grid();
    let du = d1(u);
    let grad = integrate(&g, du.values().iter().map(|z| z.norm_sqr()));
    let pot = integrate(&g, u.values().iter().map(|z| power(*z, p + 1.0)));
    let mut out = grad - 2.0 / (p + 1.0) * pot;
    for (k, s) in locs.params.iter().enumerate() {
        let phi = locs.sample(k, t, &g);
        let m = integrate(&g, u.values().iter().zip(&phi).map(|(z, f)| z.norm_sqr() * f));
        let mom = integrate(&g, du.values().iter().zip(u.values()).zip(&phi).map(|((a, b), f)| (a * b.conj()).im * f));
        out += (s.w.powi(-2) + 0.25 * s.v * s.v) * m - s.v * mom;
    }
    Ok(out)
}

/// `Σ_k (‖Q'_{w_k}‖² - (2/(p+1))‖Q_{w_k}‖^{p+1}_{p+1} + w_k^{-2}‖Q_{w_k}‖²)`.
pub fn lyapunov_reference(bank: &ProfileBank) -> Result<f64> {
    let g = *bank.grid();
    let p = bank.p();
    let mut out = 0.0;
    for (k, s) in bank.params().iter().enumerate() {
        let q = bank.profile(k, 0.0, 0.0, 0.0)?.map(|z| C64::new(z.norm(), 0.0));
        let dq = d1(&q);
        out += integrate(&g, dq.values().iter().map(|z| z.norm_sqr()))
            - 2.0 / (p + 1.0) * integrate(&g, q.values().iter().map(|z| power(*z, p + 1.0)))
            + s.w.powi(-2) * integrate(&g, q.values().iter().map(|z| z.norm_sqr()));
    }
    Ok(out)
}

/// Quadratic part H(ε) of 𝒢 around `Σ R̃_k(α, θ)` at time t.
pub fn quadratic_h(
    eps: &Field,
    alpha: &[f64],
    theta: &[f64],
    t: f64,
    locs: &LocalizationSet,
    bank: &ProfileBank,
) -> Result<f64> {
    if t < 1.0 {
        return Err(invalid(format!("the functional needs t ≥ 1, got {t}")));
    }
    let g = *eps.grid();
    let p = bank.p();
    let de = d1(eps);
    let mut out = integrate(&g, de.values().iter().map(|z| z.norm_sqr()));
    for (k, s) in bank.params().iter().enumerate() {
        let r = bank.profile(k, alpha[k], theta[k], t)?;
        out -= integrate(
            &g,
            r.values().iter().zip(eps.values()).map(|(a, e)| {
                let m = a.norm();
                if m == 0.0 {
                    return 0.0;
                }
                let re = (a * e.conj()).re;
                m.powf(p - 1.0) * e.norm_sqr() + (p - 1.0) * m.powf(p - 3.0) * re * re
            }),
        );
        let phi = locs.sample(k, t, &g);
        let m = integrate(&g, eps.values().iter().zip(&phi).map(|(z, f)| z.norm_sqr() * f));
        let mom = integrate(&g, de.values().iter().zip(eps.values()).zip(&phi).map(|((a, b), f)| (a * b.conj()).im * f));
        out += (s.w.powi(-2) + 0.25 * s.v * s.v) * m - s.v * mom;
    }
    Ok(out)
}

/// H(ε) of a decomposed state.
pub fn quadratic_h_state(state: &ModulationState, locs: &LocalizationSet, bank: &ProfileBank) -> Result<f64> {
    quadratic_h(state.epsilon()?, &state.alpha, &state.theta, state.t, locs, bank)
}

/// Real-orthogonal projection of ε away from the translation, phase and
/// unstable directions of every soliton.
pub fn project_admissible(eps: &Field, alpha: &[f64], theta: &[f64], t: f64, bank: &ProfileBank) -> Result<Field> {
    let mut dirs = Vec::new();
    for k in 0..bank.len() {
        let r = bank.profile(k, alpha[k], theta[k], t)?;
        dirs.push(d1(&r));
        dirs.push(&r * (-I));
        dirs.push(&bank.eigenfunction(k, true, alpha[k], theta[k], t)? * (-I));
        dirs.push(&bank.eigenfunction(k, false, alpha[k], theta[k], t)? * (-I));
    }
    let m = dirs.len();
    let gram = DMatrix::from_fn(m, m, |i, j| inner(&dirs[i], &dirs[j]).re);
    let rhs = DVector::from_fn(m, |i, _| inner(&dirs[i], eps).re);
    let coef = gram
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::SpectralFailure(e.to_string()))?;
    let mut out = eps.clone();
    for (d, c) in dirs.iter().zip(coef.iter()) {
        out.axpy(C64::new(-c, 0.0), d);
    }
    Ok(out)
}

/// One row of the remainder-control inputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RemainderSample {
    pub t: f64,
    pub eps_h1: f64,
    pub a_minus: Vec<f64>,
    pub b_star: f64,
    /// Measured cubic-remainder ratio at t.
    pub beta: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RemainderModel {
    pub delta1: f64,
    pub delta2: f64,
    pub case: NoiseCase,
    pub p: f64,
    /// Norm of the final-time target `|a⁻|`.
    pub target: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RemainderReport {
    pub t: Vec<f64>,
    /// Per time: the six right-hand terms in order (interaction integral,
    /// superlinear integral, noise integral, squared noise integral,
    /// unstable/interaction term, cubic remainder).
    pub terms: Vec<[f64; 6]>,
    pub lhs: Vec<f64>,
    pub constant: f64,
}

impl RemainderReport {
    pub fn dominated(&self, limit: f64) -> bool {
        self.constant <= limit
    }
}

/// Evaluates the right-hand terms of the remainder control and the smallest
/// constant C with `‖ε(t)‖² ≤ C·Σ terms` on the samples. Integrals run from
/// t to the last sample.
pub fn remainder_control_report(samples: &[RemainderSample], model: &RemainderModel) -> Result<RemainderReport> {
    if samples.len() < 2 {
        return Err(invalid("remainder control needs at least two samples"));
    }
    let mut rows: Vec<&RemainderSample> = samples.iter().collect();
    rows.sort_by(|a, b| a.t.total_cmp(&b.t));
    let n = rows.len();
    let q = model.p.min(2.0);
    // suffix trapezoid integrals
    let mut i1 = vec![0.0; n];
    let mut i2 = vec![0.0; n];
    let mut i3 = vec![0.0; n];
    for i in (0..n - 1).rev() {
        let (a, b) = (rows[i], rows[i + 1]);
        let h = b.t - a.t;
        let f1 = |r: &RemainderSample| (1.0 / r.t + r.b_star) * r.eps_h1 * r.eps_h1;
        let f2 = |r: &RemainderSample| r.eps_h1.powf(q);
        let f3 = |r: &RemainderSample| r.b_star * model.case.phi(model.delta1 * r.t);
        i1[i] = i1[i + 1] + 0.5 * h * (f1(a) + f1(b));
        i2[i] = i2[i + 1] + 0.5 * h * (f2(a) + f2(b));
        i3[i] = i3[i + 1] + 0.5 * h * (f3(a) + f3(b));
    }
    let mut report = RemainderReport { t: Vec::new(), terms: Vec::new(), lhs: Vec::new(), constant: 0.0 };
    for (i, r) in rows.iter().enumerate() {
        let am: f64 = r.a_minus.iter().map(|a| a * a).sum();
        let terms = [
            i1[i],
            i2[i] * i2[i],
            i3[i],
            i3[i] * i3[i],
            am + model.target * model.target + (-model.delta2 * r.t).exp(),
            r.beta * r.eps_h1 * r.eps_h1,
        ];
        let lhs = r.eps_h1 * r.eps_h1;
        let sum: f64 = terms.iter().sum();
        if lhs > 0.0 {
            report.constant = report.constant.max(if sum > 0.0 { lhs / sum } else { f64::INFINITY });
        }
        report.t.push(r.t);
        report.terms.push(terms);
        report.lhs.push(lhs);
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Case I: exponential rate b in `err ≈ C t^c e^{bt}`; Case II: exponent in `err ≈ C t^b`.
    pub rate: f64,
    /// Case I: the fitted power c of t; Case II: 0.
    pub log_power: f64,
    pub constant: f64,
    pub residual: f64,
}

/// Least-squares decay fit of `(t, err)` samples. Case I fits
/// `log err = a + b t + c log t`; Case II fits `log err = a + b log t`.
pub fn decay_fit(series: &[(f64, f64)], case: NoiseCase) -> Result<DecayFit> {
    decay_fit_shape(series, case, None)
}

/// As [`decay_fit`], with the Case I power of t optionally fixed.
pub fn decay_fit_shape(series: &[(f64, f64)], case: NoiseCase, log_power: Option<f64>) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = series.iter().cloned().filter(|&(t, e)| e > 1e-12 && t > 0.0 && e.is_finite()).collect();
    if pts.len() < 10 {
        return Err(Error::FitFailure(format!("{} usable samples, at least 10 required", pts.len())));
    }
    let cols = match (case, log_power) {
        (NoiseCase::Exponential, None) => 3,
        _ => 2,
    };
    let a = DMatrix::from_fn(pts.len(), cols, |i, j| {
        let t = pts[i].0;
        match (case, j) {
            (_, 0) => 1.0,
            (NoiseCase::Exponential, 1) => t,
            (NoiseCase::Polynomial { .. }, 1) => t.ln(),
            _ => t.ln(),
        }
    });
    let shift = |t: f64| match (case, log_power) {
        (NoiseCase::Exponential, Some(c)) => c * t.ln(),
        _ => 0.0,
    };
    let y = DVector::from_iterator(pts.len(), pts.iter().map(|&(t, e)| e.ln() - shift(t)));
    let tmin = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let tmax = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if !(tmax > tmin) {
        return Err(Error::FitFailure("degenerate fit window".into()));
    }
    let coef = a
        .clone()
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| Error::FitFailure(e.to_string()))?;
    let res = &a * &coef - &y;
    let rms = (res.norm_squared() / pts.len() as f64).sqrt();
    let c = match (case, log_power) {
        (NoiseCase::Exponential, None) => coef[2],
        (NoiseCase::Exponential, Some(c)) => c,
        _ => 0.0,
    };
    Ok(DecayFit { rate: coef[1], log_power: c, constant: coef[0].exp(), residual: rms })
}
