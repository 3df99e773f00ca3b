//! Geometric decomposition `u = Σ R̃_k + ε` and the unstable-direction
//! functionals `a_k^± = Im ∫ Ỹ_k^± ε̄`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{d1, d2, h1_norm, inner, Field, Grid, C64, I};
use crate::ground_state::{check_center, dilate, linear_fit, rescale, GroundState, SolitonParams};
use crate::linearized::Eigenpair;

pub const NEWTON_TOL: f64 = 1e-11;
pub const MAX_NEWTON: usize = 50;

/// Rescaled profiles of one soliton, stored as spectra for fast translation.
#[derive(Clone, Debug)]
struct Profiles {
    q: Vec<C64>,
    dq: Vec<C64>,
    d2q: Vec<C64>,
    y: Vec<C64>,
    q_h1: f64,
}

/// Per-soliton caches of `Q_w`, its derivatives and `Y^+_w`.
#[derive(Clone, Debug)]
pub struct ProfileBank {
    grid: Grid,
    p: f64,
    e0: f64,
    y_star: f64,
    params: Vec<SolitonParams>,
    profiles: Vec<Profiles>,
}

impl ProfileBank {
    pub fn new(q: &GroundState, eig: &Eigenpair, params: &[SolitonParams]) -> Result<Self> {
        if eig.grid() != q.grid() {
            return Err(Error::IncompatibleGrids);
        }
        if params.is_empty() {
            return Err(invalid("at least one soliton is required"));
        }
        crate::ground_state::validate_family(params)?;
        let p = q.p();
        let profiles = params
            .iter()
            .map(|s| {
                let qw = rescale(q, s.w)?;
                let dq = d1(&qw).real_part();
                let d2q = d2(&qw).real_part();
                let yw = dilate(eig.yplus(), s.w, s.w.powf(-2.0 / (p - 1.0)))?;
                Ok(Profiles {
                    q: qw.spectrum(),
                    dq: dq.spectrum(),
                    d2q: d2q.spectrum(),
                    y: yw.spectrum(),
                    q_h1: h1_norm(&qw),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { grid: *q.grid(), p, e0: eig.e0(), y_star: eig.y_star(), params: params.to_vec(), profiles })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn e0(&self) -> f64 {
        self.e0
    }

    pub fn y_star(&self) -> f64 {
        self.y_star
    }

    pub fn params(&self) -> &[SolitonParams] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Default proximity radius `0.3·min_k ‖Q_{w_k}‖_{H¹}`.
    pub fn delta_star(&self) -> f64 {
        0.3 * self.profiles.iter().map(|p| p.q_h1).fold(f64::INFINITY, f64::min)
    }

    /// Exponential rate `e0·w_k^{-2}` of the k-th unstable pair.
    pub fn rate(&self, k: usize) -> f64 {
        self.e0 / self.params[k].w.powi(2)
    }

    fn translate(&self, spec: &[C64], c: f64) -> Field {
        let ks = self.grid.wavenumbers();
        let shifted = spec.iter().zip(ks).map(|(z, k)| z * C64::from_polar(1.0, -k * c)).collect();
        Field::from_spectrum(self.grid, shifted)
    }

    fn phase(&self, k: usize, theta: f64, t: f64) -> Vec<C64> {
        let s = &self.params[k];
        self.grid.coords().iter().map(|&x| C64::from_polar(1.0, s.phase(t, x, theta))).collect()
    }

    fn check(&self, k: usize, alpha: f64, t: f64) -> Result<f64> {
        if k >= self.len() {
            return Err(invalid(format!("soliton index {k} out of range")));
        }
        let c = self.params[k].v * t + alpha;
        check_center(&self.grid, c)?;
        Ok(c)
    }

    fn modulate(&self, base: Field, k: usize, theta: f64, t: f64) -> Field {
        let ph = self.phase(k, theta, t);
        let vals = base.values().iter().zip(ph).map(|(a, e)| a * e).collect();
        Field::new(self.grid, vals).expect("same grid")
    }

    /// `R̃_k = Q_{w_k}(x - v_k t - α_k) e^{iΦ_k}`.
    pub fn profile(&self, k: usize, alpha: f64, theta: f64, t: f64) -> Result<Field> {
        let c = self.check(k, alpha, t)?;
        Ok(self.modulate(self.translate(&self.profiles[k].q, c), k, theta, t))
    }

    /// `Ỹ_k^± = Y^±_{w_k}(x - v_k t - α_k) e^{iΦ_k}`.
    pub fn eigenfunction(&self, k: usize, plus: bool, alpha: f64, theta: f64, t: f64) -> Result<Field> {
        let c = self.check(k, alpha, t)?;
        let mut y = self.translate(&self.profiles[k].y, c);
        if !plus {
            y = y.conj();
        }
        Ok(self.modulate(y, k, theta, t))
    }

    /// `Σ_k R̃_k`.
    pub fn sum_profiles(&self, alpha: &[f64], theta: &[f64], t: f64) -> Result<Field> {
        self.check_len(alpha, theta)?;
        let mut out = Field::zeros(self.grid);
        for k in 0..self.len() {
            out.axpy(C64::new(1.0, 0.0), &self.profile(k, alpha[k], theta[k], t)?);
        }
        Ok(out)
    }

    /// The unmodulated multi-soliton `R(t)`.
    pub fn reference(&self, t: f64) -> Result<Field> {
        let (a, th) = self.unmodulated();
        self.sum_profiles(&a, &th, t)
    }

    /// `(α⁰, θ⁰)` of every soliton.
    pub fn unmodulated(&self) -> (Vec<f64>, Vec<f64>) {
        (self.params.iter().map(|s| s.alpha0).collect(), self.params.iter().map(|s| s.theta0).collect())
    }

    fn check_len(&self, alpha: &[f64], theta: &[f64]) -> Result<()> {
        if alpha.len() != self.len() || theta.len() != self.len() {
            return Err(invalid(format!(
                "expected {} modulation parameters, got {} and {}",
                self.len(),
                alpha.len(),
                theta.len()
            )));
        }
        Ok(())
    }

    /// Fields `R̃`, `Q'(y)e^{iΦ}` and `Q''(y)e^{iΦ}` of soliton k.
    fn pieces(&self, k: usize, alpha: f64, theta: f64, t: f64) -> Result<[Field; 3]> {
        let c = self.check(k, alpha, t)?;
        let pr = &self.profiles[k];
        Ok([
            self.modulate(self.translate(&pr.q, c), k, theta, t),
            self.modulate(self.translate(&pr.dq, c), k, theta, t),
            self.modulate(self.translate(&pr.d2q, c), k, theta, t),
        ])
    }
}

/// Free-standing evaluation of `R̃_k` for one soliton.
pub fn modulated_profile(
    alpha: f64,
    theta: f64,
    t: f64,
    params: &SolitonParams,
    q: &GroundState,
) -> Result<Field> {
    let grid = *q.grid();
    let c = params.v * t + alpha;
    check_center(&grid, c)?;
    let qw = rescale(q, params.w)?.shifted(c);
    let vals = grid
        .coords()
        .iter()
        .zip(qw.values())
        .map(|(&x, z)| C64::from_polar(z.re, params.phase(t, x, theta)))
        .collect();
    Field::new(grid, vals)
}

/// Free-standing evaluation of `Ỹ^±` for one soliton.
pub fn modulated_eigenfunction(
    plus: bool,
    alpha: f64,
    theta: f64,
    t: f64,
    params: &SolitonParams,
    q: &GroundState,
    eig: &Eigenpair,
) -> Result<Field> {
    ProfileBank::new(q, eig, std::slice::from_ref(params))?.eigenfunction(0, plus, alpha, theta, t)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModulationState {
    pub t: f64,
    pub alpha: Vec<f64>,
    pub theta: Vec<f64>,
    #[serde(skip)]
    pub epsilon: Option<Field>,
    pub a_plus: Vec<f64>,
    pub a_minus: Vec<f64>,
    pub eps_h1: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl ModulationState {
    pub fn epsilon(&self) -> Result<&Field> {
        self.epsilon.as_ref().ok_or_else(|| invalid("remainder was not retained"))
    }

    /// `Σ R̃_k + ε`.
    pub fn reconstruct(&self, bank: &ProfileBank) -> Result<Field> {
        Ok(&bank.sum_profiles(&self.alpha, &self.theta, self.t)? + self.epsilon()?)
    }

    /// `Σ_k (|α_k - α_k⁰| + |θ_k - θ_k⁰|)`.
    pub fn parameter_drift(&self, bank: &ProfileBank) -> f64 {
        bank.params()
            .iter()
            .enumerate()
            .map(|(k, s)| (self.alpha[k] - s.alpha0).abs() + (self.theta[k] - s.theta0).abs())
            .sum()
    }

    /// Drops the stored remainder.
    pub fn compact(mut self) -> Self {
        self.epsilon = None;
        self
    }
}

/// Orthogonality residuals `(Re∫∂ₓR̃_k ε̄, Im∫R̃_k ε̄)` and the exact Jacobian.
fn system(bank: &ProfileBank, u: &Field, alpha: &[f64], theta: &[f64], t: f64) -> Result<(DVector<f64>, DMatrix<f64>, Field)> {
    let n = bank.len();
    let mut pieces = Vec::with_capacity(n);
    let mut eps = u.clone();
    for k in 0..n {
        let pc = bank.pieces(k, alpha[k], theta[k], t)?;
        eps.axpy(C64::new(-1.0, 0.0), &pc[0]);
        pieces.push(pc);
    }
    // ∂ₓR̃ = Q'e^{iΦ} + (iv/2)R̃ and ∂_α of it
    let xs: Vec<Field> = (0..n)
        .map(|k| {
            let half = C64::new(0.0, 0.5 * bank.params[k].v);
            &pieces[k][1] + &(&pieces[k][0] * half)
        })
        .collect();
    let mut f = DVector::zeros(2 * n);
    let mut jac = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..n {
        let [r, d, e] = &pieces[k];
        let x = &xs[k];
        let half = C64::new(0.0, 0.5 * bank.params[k].v);
        let dx_alpha = -&(e + &(d * half));
        f[k] = inner(x, &eps).re;
        f[n + k] = inner(r, &eps).im;
        for j in 0..n {
            let [rj, dj, _] = &pieces[j];
            // ∂ε/∂α_j = Q'_j e^{iΦ_j}, ∂ε/∂θ_j = -iR̃_j
            jac[(k, j)] = inner(x, dj).re;
            jac[(k, n + j)] = (I * inner(x, rj)).re;
            jac[(n + k, j)] = inner(r, dj).im;
            jac[(n + k, n + j)] = (I * inner(r, rj)).im;
        }
        jac[(k, k)] += inner(&dx_alpha, &eps).re;
        jac[(k, n + k)] += (I * inner(x, &eps)).re;
        jac[(n + k, k)] += (-inner(d, &eps)).im;
        jac[(n + k, n + k)] += (I * inner(r, &eps)).im;
    }
    Ok((f, jac, eps))
}

/// Newton solve of the orthogonality conditions starting from `guess`.
pub fn decompose(bank: &ProfileBank, u: &Field, t: f64, guess: (&[f64], &[f64])) -> Result<ModulationState> {
    decompose_with(bank, u, t, guess, bank.delta_star())
}

pub fn decompose_with(
    bank: &ProfileBank,
    u: &Field,
    t: f64,
    guess: (&[f64], &[f64]),
    delta_star: f64,
) -> Result<ModulationState> {
    if u.grid() != bank.grid() {
        return Err(Error::IncompatibleGrids);
    }
    bank.check_len(guess.0, guess.1)?;
    let n = bank.len();
    let mut alpha = guess.0.to_vec();
    let mut theta = guess.1.to_vec();
    let start = bank.sum_profiles(&alpha, &theta, t)?;
    let distance = h1_norm(&(u - &start));
    if distance > delta_star {
        return Err(Error::OutOfBasin { distance, radius: delta_star });
    }
    let scale = 1.0 + h1_norm(u);
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let (f, jac, eps) = system(bank, u, &alpha, &theta, t)?;
        let res = f.amax();
        history.push(res);
        let stalled = history.len() > 3 && res >= 0.5 * history[history.len() - 4];
        if (iterations > 0 && res <= NEWTON_TOL * scale) || (stalled && res <= 10.0 * NEWTON_TOL * scale) {
            let (a_plus, a_minus) = unstable_directions_raw(bank, &alpha, &theta, t, &eps)?;
            return Ok(ModulationState {
                t,
                eps_h1: h1_norm(&eps),
                alpha,
                theta,
                epsilon: Some(eps),
                a_plus,
                a_minus,
                iterations,
                residual: res,
            });
        }
        if iterations >= MAX_NEWTON || stalled || !res.is_finite() {
            return Err(Error::DecompositionFailure { history });
        }
        let step = jac.lu().solve(&(-f)).ok_or_else(|| Error::DecompositionFailure { history: history.clone() })?;
        for k in 0..n {
            alpha[k] += step[k];
            theta[k] += step[n + k];
        }
        iterations += 1;
    }
}

fn unstable_directions_raw(
    bank: &ProfileBank,
    alpha: &[f64],
    theta: &[f64],
    t: f64,
    eps: &Field,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut plus = Vec::with_capacity(bank.len());
    let mut minus = Vec::with_capacity(bank.len());
    for k in 0..bank.len() {
        plus.push(inner(&bank.eigenfunction(k, true, alpha[k], theta[k], t)?, eps).im);
        minus.push(inner(&bank.eigenfunction(k, false, alpha[k], theta[k], t)?, eps).im);
    }
    Ok((plus, minus))
}

/// `a_k^± = Im ∫ Ỹ_k^± ε̄` for a decomposed state.
pub fn unstable_directions(bank: &ProfileBank, state: &ModulationState) -> Result<(Vec<f64>, Vec<f64>)> {
    unstable_directions_raw(bank, &state.alpha, &state.theta, state.t, state.epsilon()?)
}

fn centered(ts: &[f64], ys: &[f64], i: usize) -> f64 {
    (ys[i + 1] - ys[i - 1]) / (ts[i + 1] - ts[i - 1])
}

fn check_slice(states: &[ModulationState], extra: &[f64]) -> Result<()> {
    if states.len() < 3 {
        return Err(invalid("at least three decomposed states are required"));
    }
    if extra.len() != states.len() {
        return Err(invalid("one forcing value per state is required"));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModulationReport {
    pub t: Vec<f64>,
    pub alpha_dot: Vec<Vec<f64>>,
    pub theta_dot: Vec<Vec<f64>>,
    pub ratio: Vec<f64>,
    pub constant: f64,
}

/// Centered-difference `α̇, θ̇` against `‖ε‖_{H¹} + extra(t)`, where `extra`
/// carries the noise and interaction terms at each state.
pub fn modulation_residual(states: &[ModulationState], extra: &[f64]) -> Result<ModulationReport> {
    check_slice(states, extra)?;
    let k = states[0].alpha.len();
    let ts: Vec<f64> = states.iter().map(|s| s.t).collect();
    let mut report = ModulationReport { t: Vec::new(), alpha_dot: Vec::new(), theta_dot: Vec::new(), ratio: Vec::new(), constant: 0.0 };
    for i in 1..states.len() - 1 {
        let mut ad = Vec::with_capacity(k);
        let mut td = Vec::with_capacity(k);
        for j in 0..k {
            let a: Vec<f64> = states.iter().map(|s| s.alpha[j]).collect();
            let th: Vec<f64> = states.iter().map(|s| s.theta[j]).collect();
            ad.push(centered(&ts, &a, i));
            td.push(centered(&ts, &th, i));
        }
        let lhs: f64 = ad.iter().chain(&td).map(|x| x.abs()).sum();
        let rhs = states[i].eps_h1 + extra[i];
        let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
        report.constant = report.constant.max(ratio);
        report.t.push(ts[i]);
        report.alpha_dot.push(ad);
        report.theta_dot.push(td);
        report.ratio.push(ratio);
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UnstableOdeReport {
    pub t: Vec<f64>,
    pub residual_plus: Vec<Vec<f64>>,
    pub residual_minus: Vec<Vec<f64>>,
    pub bound: Vec<f64>,
    pub constant: f64,
}

/// Residuals `|ȧ_k^± ∓ e0 w_k^{-2} a_k^±|` against `‖ε‖^{p∧2}_{H¹} + extra(t)`.
pub fn aminus_ode_residual(states: &[ModulationState], bank: &ProfileBank, extra: &[f64]) -> Result<UnstableOdeReport> {
    check_slice(states, extra)?;
    let ts: Vec<f64> = states.iter().map(|s| s.t).collect();
    let power = bank.p().min(2.0);
    let mut report = UnstableOdeReport { t: Vec::new(), residual_plus: Vec::new(), residual_minus: Vec::new(), bound: Vec::new(), constant: 0.0 };
    for i in 1..states.len() - 1 {
        let mut rp = Vec::new();
        let mut rm = Vec::new();
        for k in 0..bank.len() {
            let ap: Vec<f64> = states.iter().map(|s| s.a_plus[k]).collect();
            let am: Vec<f64> = states.iter().map(|s| s.a_minus[k]).collect();
            rp.push((centered(&ts, &ap, i) - bank.rate(k) * ap[i]).abs());
            rm.push((centered(&ts, &am, i) + bank.rate(k) * am[i]).abs());
        }
        let bound = states[i].eps_h1.powf(power) + extra[i];
        let worst = rp.iter().chain(&rm).cloned().fold(0.0, f64::max);
        if bound > 0.0 {
            report.constant = report.constant.max(worst / bound);
        }
        report.t.push(ts[i]);
        report.residual_plus.push(rp);
        report.residual_minus.push(rm);
        report.bound.push(bound);
    }
    Ok(report)
}

/// `∫|Q_{w_1}(x - v_1 t - α_1)||Q_{w_2}(x - v_2 t - α_2)| dx`.
pub fn overlap(bank: &ProfileBank, i: usize, j: usize, t: f64) -> Result<f64> {
    let a = bank.profile(i, bank.params[i].alpha0, 0.0, t)?;
    let b = bank.profile(j, bank.params[j].alpha0, 0.0, t)?;
    let h = bank.grid.spacing();
    Ok(a.values().iter().zip(b.values()).map(|(x, y)| x.norm() * y.norm()).sum::<f64>() * h)
}

/// Fitted exponential decay rate of the pairwise overlap on `window`.
pub fn overlap_decay(bank: &ProfileBank, i: usize, j: usize, window: (f64, f64), samples: usize) -> Result<f64> {
    if samples < 3 || !(window.1 > window.0) {
        return Err(Error::FitFailure("overlap fit needs at least three samples on a proper window".into()));
    }
    let mut ts = Vec::with_capacity(samples);
    let mut ys = Vec::with_capacity(samples);
    for s in 0..samples {
        let t = window.0 + (window.1 - window.0) * s as f64 / (samples - 1) as f64;
        let o = overlap(bank, i, j, t)?;
        if o <= 0.0 {
            return Err(Error::FitFailure(format!("overlap vanished at t = {t}")));
        }
        ts.push(t);
        ys.push(o.ln());
    }
    Ok(-linear_fit(&ts, &ys)?.0)
}
