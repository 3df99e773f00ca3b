//! Modulated final data, backward runs of the rescaled equation inside the
//! bootstrap tube, and shooting on the final value of `a⁻`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    decay_fit, lyapunov, lyapunov_reference, quadratic_h_state, remainder_control_report, DecayFit,
    LocalizationSet, RemainderModel, RemainderReport, RemainderSample,
};
use crate::error::{invalid, Error, Result};
use crate::grid::{h1_norm, l2_norm, mass, Field, I};
use crate::ground_state::linear_fit;
use crate::modulation::{decompose, overlap_decay, ModulationState, ProfileBank};
use crate::noise::{NoiseCase, NoiseRealization, NoiseSpec};
use crate::solver::{to_physical, Integrator, SolverConfig};

/// Default bound η on the final-data vector.
pub const DEFAULT_ETA: f64 = 0.5;
/// Default radius r for final-time targets of `a⁻`.
pub const DEFAULT_RADIUS: f64 = 0.05;
/// Tolerance on `|(a⁺, a⁻ − target)|` in [`solve_final_b`].
pub const FINAL_TOL: f64 = 1e-9;

/// Time-dependent tube around the multi-soliton.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubeSpec {
    pub delta_tilde: f64,
    pub case: NoiseCase,
    pub slack: f64,
    /// Sampling cadence of the tube checks.
    pub cadence: f64,
}

impl TubeSpec {
    pub fn new(delta_tilde: f64, case: NoiseCase, slack: f64) -> Result<Self> {
        let t = Self { delta_tilde, case, slack, cadence: 0.1 };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_tilde > 0.0 && self.delta_tilde.is_finite()) {
            return Err(invalid(format!("delta_tilde must be positive and finite, got {}", self.delta_tilde)));
        }
        if !(self.slack > 0.0 && self.slack.is_finite()) {
            return Err(invalid("tube slack must be positive"));
        }
        if !(self.cadence > 0.0) {
            return Err(invalid("tube cadence must be positive"));
        }
        Ok(())
    }

    fn phi(&self, t: f64) -> f64 {
        self.case.phi(self.delta_tilde * t)
    }

    pub fn eps_bound(&self, t: f64) -> f64 {
        self.slack * self.phi(t).sqrt()
    }

    pub fn aplus_bound(&self, t: f64) -> f64 {
        self.slack * self.phi(t).sqrt()
    }

    pub fn aminus_bound(&self, t: f64) -> f64 {
        self.slack * self.phi(t).powf(0.75)
    }

    pub fn param_bound(&self, t: f64) -> f64 {
        self.slack * t * self.phi(t).sqrt()
    }

    /// `t φ^{1/2}(δ̃t)`, the shape of the distance bound to `R(t)`.
    pub fn theorem_shape(&self, t: f64) -> f64 {
        t * self.phi(t).sqrt()
    }

    /// `𝒩(t, a⁻) = |φ^{-3/4}(δ̃t) a⁻|²`.
    pub fn n_functional(&self, t: f64, a_minus: &[f64]) -> f64 {
        a_minus.iter().map(|a| a * a).sum::<f64>() / self.phi(t).powf(1.5)
    }

    /// Radius of the shooting ball at the final time n.
    pub fn ball_radius(&self, n: f64, r: f64) -> f64 {
        self.aminus_bound(n).min(r)
    }
}

/// Decay constants entering δ̃.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DeltaEstimates {
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub delta_tilde: f64,
}

fn noise_overlap(bank: &ProfileBank, spec: &NoiseSpec, t: f64) -> Result<f64> {
    let g = *bank.grid();
    let h = g.spacing();
    let profiles: Vec<Vec<f64>> = spec.profiles.iter().map(|p| p.sample(&g, 0)).collect();
    let mut worst: f64 = 0.0;
    for k in 0..bank.len() {
        let s0 = bank.params()[k];
        let r = bank.profile(k, s0.alpha0, s0.theta0, t)?;
        let s: f64 = profiles
            .iter()
            .map(|p| p.iter().zip(r.values()).map(|(a, b)| a.abs() * b.norm()).sum::<f64>() * h)
            .sum();
        worst = worst.max(s);
    }
    Ok(worst)
}

/// δ₃ from the eigenvalue, δ₂ from the pairwise overlap decay and δ₁ from
/// the overlap of the noise profiles with the solitons on `window`.
/// Without noise δ₁ is infinite and the tube uses the exponential case.
pub fn estimate_deltas(bank: &ProfileBank, noise: Option<&NoiseSpec>, window: (f64, f64)) -> Result<DeltaEstimates> {
    let delta3 = 0.5 * (0..bank.len()).map(|k| bank.rate(k)).fold(f64::INFINITY, f64::min);
    let mut delta2 = f64::INFINITY;
    for i in 0..bank.len() {
        for j in i + 1..bank.len() {
            delta2 = delta2.min(overlap_decay(bank, i, j, window, 21)?);
        }
    }
    let samples = 21;
    let ts: Vec<f64> = (0..samples).map(|s| window.0 + (window.1 - window.0) * s as f64 / (samples - 1) as f64).collect();
    let (delta1, case) = match noise {
        None => (f64::INFINITY, NoiseCase::Exponential),
        Some(spec) => {
            let ov = ts.iter().map(|&t| noise_overlap(bank, spec, t)).collect::<Result<Vec<f64>>>()?;
            if ov.iter().any(|&o| !(o > 0.0)) {
                return Err(Error::FitFailure("noise overlap vanished on the fit window".into()));
            }
            match spec.case {
                NoiseCase::Exponential => {
                    let ys: Vec<f64> = ov.iter().map(|o| o.ln()).collect();
                    (-linear_fit(&ts, &ys)?.0, spec.case)
                }
                NoiseCase::Polynomial { nu_star } => {
                    let d = ts.iter().zip(&ov).map(|(t, o)| o.powf(-1.0 / nu_star) / t).fold(f64::INFINITY, f64::min);
                    (d, spec.case)
                }
            }
        }
    };
    let delta_tilde = match case {
        NoiseCase::Exponential => 0.5 * delta1.min(delta2).min(delta3),
        NoiseCase::Polynomial { .. } => delta1,
    };
    if !(delta_tilde > 0.0 && delta_tilde.is_finite()) {
        return Err(Error::FitFailure(format!("delta_tilde = {delta_tilde} is not positive and finite")));
    }
    Ok(DeltaEstimates { delta1, delta2, delta3, delta_tilde })
}

fn check_b(bank: &ProfileBank, b: &[f64]) -> Result<()> {
    if b.len() != 2 * bank.len() {
        return Err(invalid(format!("b needs {} entries, got {}", 2 * bank.len(), b.len())));
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `u(n) = R(n) + i Σ_k (b_k⁺ Y_k⁺(n) + b_k⁻ Y_k⁻(n))` with
/// `b = (b_1⁺, …, b_K⁺, b_1⁻, …, b_K⁻)`.
pub fn final_data(bank: &ProfileBank, b: &[f64], n: f64, eta: f64) -> Result<Field> {
    check_b(bank, b)?;
    if norm(b) > eta {
        return Err(invalid(format!("|b| = {:.3e} exceeds eta = {eta}", norm(b))));
    }
    let k = bank.len();
    let mut u = bank.reference(n)?;
    for (j, s) in bank.params().iter().enumerate() {
        for (plus, coef) in [(true, b[j]), (false, b[k + j])] {
            if coef != 0.0 {
                let y = bank.eigenfunction(j, plus, s.alpha0, s.theta0, n)?;
                u.axpy(I * coef, &y);
            }
        }
    }
    Ok(u)
}

/// Leading-order Jacobian of `b ↦ (a⁺(n), a⁻(n))`: `[[A, y*A], [y*A, A]]`
/// with `A = diag(−w_k^{1−4/(p−1)})`.
pub fn leading_jacobian(bank: &ProfileBank) -> DMatrix<f64> {
    let k = bank.len();
    let y = bank.y_star();
    let e = 1.0 - 4.0 / (bank.p() - 1.0);
    let mut j = DMatrix::zeros(2 * k, 2 * k);
    for (i, s) in bank.params().iter().enumerate() {
        let a = -s.w.powf(e);
        j[(i, i)] = a;
        j[(k + i, k + i)] = a;
        j[(i, k + i)] = y * a;
        j[(k + i, i)] = y * a;
    }
    j
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FinalData {
    pub b: Vec<f64>,
    pub a_plus: Vec<f64>,
    pub a_minus: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Unstable coordinates `(a⁺, a⁻)` of `final_data(b, n)`.
pub fn final_coordinates(bank: &ProfileBank, b: &[f64], n: f64, eta: f64) -> Result<ModulationState> {
    let u = final_data(bank, b, n, eta)?;
    let (a0, t0) = bank.unmodulated();
    let s = decompose(bank, &u, n, (&a0, &t0))?;
    decompose(bank, &u, n, (&s.alpha, &s.theta))
}

/// Solves `a⁺(n) = 0`, `a⁻(n) = target` for b by quasi-Newton iteration
/// started from the leading-order Jacobian.
pub fn solve_final_b(bank: &ProfileBank, target: &[f64], n: f64, eta: f64) -> Result<FinalData> {
    let k = bank.len();
    if target.len() != k {
        return Err(invalid(format!("target needs {k} entries, got {}", target.len())));
    }
    let map = |b: &[f64]| -> Result<(DVector<f64>, FinalData)> {
        let s = final_coordinates(bank, b, n, eta).map_err(|e| Error::ModulatedDataFailure(e.to_string()))?;
        let mut g = DVector::zeros(2 * k);
        for j in 0..k {
            g[j] = s.a_plus[j];
            g[k + j] = s.a_minus[j] - target[j];
        }
        let fd = FinalData { b: b.to_vec(), a_plus: s.a_plus, a_minus: s.a_minus, residual: g.amax(), iterations: 0 };
        Ok((g, fd))
    };
    let mut jac = leading_jacobian(bank);
    let mut b = DVector::zeros(2 * k);
    let (mut g, mut best) = map(b.as_slice())?;
    for it in 1..=40 {
        if g.amax() <= 1e-14 {
            break;
        }
        let step = jac
            .clone()
            .lu()
            .solve(&(-&g))
            .ok_or_else(|| Error::ModulatedDataFailure("singular Jacobian".into()))?;
        let nb = &b + &step;
        let (ng, fd) = map(nb.as_slice())?;
        let dg = &ng - &g;
        let ss = step.norm_squared();
        if ss > 0.0 {
            jac += (dg - &jac * &step) * step.transpose() / ss;
        }
        let improved = ng.amax() < g.amax();
        b = nb;
        g = ng;
        if improved || fd.residual <= best.residual {
            best = FinalData { iterations: it, ..fd };
        } else if it > 5 && g.amax() > 1e3 * best.residual {
            break;
        }
    }
    if !(best.residual <= FINAL_TOL) {
        return Err(Error::ModulatedDataFailure(format!("residual {:.3e} above {FINAL_TOL:e}", best.residual)));
    }
    Ok(best)
}

/// Central finite-difference Jacobian of `b ↦ (a⁺(n), a⁻(n))` at b.
pub fn final_jacobian_fd(bank: &ProfileBank, b: &[f64], n: f64, eta: f64, h: f64) -> Result<DMatrix<f64>> {
    let k = bank.len();
    let mut j = DMatrix::zeros(2 * k, 2 * k);
    for c in 0..2 * k {
        let mut bp = b.to_vec();
        let mut bm = b.to_vec();
        bp[c] += h;
        bm[c] -= h;
        let sp = final_coordinates(bank, &bp, n, eta)?;
        let sm = final_coordinates(bank, &bm, n, eta)?;
        for r in 0..k {
            j[(r, c)] = (sp.a_plus[r] - sm.a_plus[r]) / (2.0 * h);
            j[(k + r, c)] = (sp.a_minus[r] - sm.a_minus[r]) / (2.0 * h);
        }
    }
    Ok(j)
}

/// One sampled time of a backward run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub eps_h1: f64,
    pub a_plus: Vec<f64>,
    pub a_minus: Vec<f64>,
    pub alpha: Vec<f64>,
    pub theta: Vec<f64>,
    pub b_star: f64,
    pub lyapunov: f64,
    pub quadratic: f64,
    pub n_functional: f64,
    pub tube_eps: f64,
    pub tube_aplus: f64,
    pub tube_aminus: f64,
    pub tube_param: f64,
    pub mass: f64,
    /// `‖u(t) − R(t)‖_{H¹}`.
    pub distance: f64,
    /// `‖X(t) − R(t)‖_{H¹}` for the physical solution.
    pub physical_distance: f64,
    pub param_drift: f64,
}

impl TrajectoryRow {
    /// Whether every tube bound holds at this row.
    pub fn inside(&self) -> Option<ExitCause> {
        if !(self.eps_h1 <= self.tube_eps) {
            Some(ExitCause::Epsilon)
        } else if !(norm(&self.a_plus) <= self.tube_aplus) {
            Some(ExitCause::APlus)
        } else if !(norm(&self.a_minus) <= self.tube_aminus) {
            Some(ExitCause::AMinus)
        } else if !(self.param_drift <= self.tube_param) {
            Some(ExitCause::Parameters)
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
    /// Field at the last time reached.
    #[serde(skip)]
    pub last_field: Option<Field>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitCause {
    Survived,
    Epsilon,
    APlus,
    AMinus,
    Parameters,
    Decomposition,
    Blowup,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BackwardRun {
    pub trajectory: Trajectory,
    pub exit_time: f64,
    pub cause: ExitCause,
}

impl BackwardRun {
    pub fn survived(&self) -> bool {
        self.cause == ExitCause::Survived
    }

    /// `a⁻_k(τ) e^{−λ_k (n − τ)}` at the last decomposed row τ.
    pub fn exit_functional(&self, bank: &ProfileBank, n: f64) -> Vec<f64> {
        match self.trajectory.rows.last() {
            None => vec![0.0; bank.len()],
            Some(r) => (0..bank.len()).map(|k| r.a_minus[k] * (-bank.rate(k) * (n - r.t)).exp()).collect(),
        }
    }
}

/// Everything a backward run needs besides b and the time window.
pub struct Setup<'a> {
    pub bank: &'a ProfileBank,
    pub locs: LocalizationSet,
    pub solver: SolverConfig,
    pub noise: Option<&'a NoiseRealization>,
    pub eta: f64,
    pub radius: f64,
    /// `Σ_k 𝒢` of the bare solitons.
    pub lyapunov_ref: f64,
}

impl<'a> Setup<'a> {
    pub fn new(bank: &'a ProfileBank, solver: SolverConfig, noise: Option<&'a NoiseRealization>) -> Result<Self> {
        Ok(Self {
            bank,
            locs: LocalizationSet::new(bank.params())?,
            solver,
            noise,
            eta: DEFAULT_ETA,
            radius: DEFAULT_RADIUS,
            lyapunov_ref: lyapunov_reference(bank)?,
        })
    }

    fn b_star(&self, t: f64) -> f64 {
        self.noise.map(|n| n.b_star(t)).unwrap_or(0.0)
    }

    /// Tube row of a decomposed state.
    pub fn row(&self, s: &ModulationState, u: &Field, tube: &TubeSpec) -> Result<TrajectoryRow> {
        let t = s.t;
        let reference = self.bank.reference(t)?;
        let distance = h1_norm(&(u - &reference));
        let physical_distance = match self.noise {
            None => distance,
            Some(_) => h1_norm(&(&to_physical(u, self.noise, t)? - &reference)),
        };
        Ok(TrajectoryRow {
            t,
            eps_h1: s.eps_h1,
            a_plus: s.a_plus.clone(),
            a_minus: s.a_minus.clone(),
            alpha: s.alpha.clone(),
            theta: s.theta.clone(),
            b_star: self.b_star(t),
            lyapunov: lyapunov(u, t, &self.locs, self.bank.p())?,
            quadratic: quadratic_h_state(s, &self.locs, self.bank)?,
            n_functional: tube.n_functional(t, &s.a_minus),
            tube_eps: tube.eps_bound(t),
            tube_aplus: tube.aplus_bound(t),
            tube_aminus: tube.aminus_bound(t),
            tube_param: tube.param_bound(t),
            mass: mass(u),
            distance,
            physical_distance,
            param_drift: s.parameter_drift(self.bank),
        })
    }
}

/// Integrates backward from `final_data(b, n)` to `t_floor`, decomposing and
/// checking the tube every `tube.cadence`. Stops at the first violation.
pub fn backward_run(setup: &Setup, b: &[f64], n: f64, t_floor: f64, tube: &TubeSpec) -> Result<BackwardRun> {
    tube.validate()?;
    if !(t_floor >= 1.0) || !(n > t_floor) {
        return Err(invalid(format!("need 1 ≤ t_floor < n, got t_floor = {t_floor}, n = {n}")));
    }
    let bank = setup.bank;
    let u0 = final_data(bank, b, n, setup.eta)?;
    let mut it = Integrator::new(*bank.grid(), setup.solver, setup.noise)?;
    let (a0, t0) = bank.unmodulated();
    let mut guess = (a0, t0);
    let mut rows = Vec::new();
    let mut cause = ExitCause::Survived;
    let mut exit_time = t_floor;
    let mut failure: Option<Error> = None;
    let mut last_field = None;
    let outcome = it.evolve(&u0, n, t_floor, Some(tube.cadence), &mut |t, u| {
        last_field = Some(u.clone());
        let state = match decompose(bank, u, t, (&guess.0, &guess.1)) {
            Ok(s) => s,
            Err(Error::DecompositionFailure { .. }) | Err(Error::OutOfBasin { .. }) => {
                cause = ExitCause::Decomposition;
                exit_time = t;
                return false;
            }
            Err(e) => {
                failure = Some(e);
                return false;
            }
        };
        match setup.row(&state, u, tube) {
            Ok(row) => {
                let out = row.inside();
                rows.push(row);
                guess = (state.alpha, state.theta);
                if let Some(c) = out {
                    cause = c;
                    exit_time = t;
                    return false;
                }
                true
            }
            Err(e) => {
                failure = Some(e);
                false
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    match outcome {
        Ok(_) => {}
        Err(Error::NumericalBlowup { t }) => {
            cause = ExitCause::Blowup;
            exit_time = t;
        }
        Err(e) => return Err(e),
    }
    Ok(BackwardRun { trajectory: Trajectory { rows, last_field }, exit_time, cause })
}

/// Integrates forward from `u0` at `t0` to `t1`, recording a tube row every
/// `tube.cadence` without stopping at tube exits. The record ends early if
/// the decomposition is lost.
pub fn forward_run(setup: &Setup, u0: &Field, t0: f64, t1: f64, tube: &TubeSpec) -> Result<Trajectory> {
    tube.validate()?;
    if !(t0 >= 1.0) || !(t1 > t0) {
        return Err(invalid(format!("need 1 ≤ t0 < t1, got t0 = {t0}, t1 = {t1}")));
    }
    let bank = setup.bank;
    let mut it = Integrator::new(*bank.grid(), setup.solver, setup.noise)?;
    let (a0, th0) = bank.unmodulated();
    let mut guess = (a0, th0);
    let mut rows = Vec::new();
    let mut failure: Option<Error> = None;
    let mut last_field = None;
    it.evolve(u0, t0, t1, Some(tube.cadence), &mut |t, u| {
        last_field = Some(u.clone());
        let state = match decompose(bank, u, t, (&guess.0, &guess.1)) {
            Ok(s) => s,
            Err(Error::DecompositionFailure { .. }) | Err(Error::OutOfBasin { .. }) => return false,
            Err(e) => {
                failure = Some(e);
                return false;
            }
        };
        match setup.row(&state, u, tube) {
            Ok(row) => {
                rows.push(row);
                guess = (state.alpha, state.theta);
                true
            }
            Err(e) => {
                failure = Some(e);
                false
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(Trajectory { rows, last_field })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShootingMethod {
    /// Bracketing on the signed exit functional (K = 1).
    Bisection,
    /// Quasi-Newton on the exit map with multi-start (K = 2).
    Newton,
}

impl ShootingMethod {
    pub fn for_count(k: usize) -> Result<Self> {
        match k {
            1 => Ok(Self::Bisection),
            2 => Ok(Self::Newton),
            _ => Err(invalid(format!("shooting supports one or two solitons, got {k}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ShootingOptions {
    pub method: ShootingMethod,
    /// Stop once the exit functional is below this and the run survived.
    pub f_tol: f64,
    pub max_evaluations: usize,
}

impl ShootingOptions {
    pub fn new(method: ShootingMethod) -> Self {
        Self { method, f_tol: 1e-14, max_evaluations: 80 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShootingResult {
    pub n: f64,
    pub a_minus_final: Vec<f64>,
    pub b: Vec<f64>,
    pub exit_time: f64,
    pub cause: ExitCause,
    pub trajectory: Trajectory,
    pub evaluations: usize,
    /// Exit functional of the returned candidate.
    pub exit_functional: Vec<f64>,
    /// K = 1: the ends of the ball exited on opposite sides.
    pub bracket_signs: Option<(f64, f64)>,
    pub ball_radius: f64,
}

struct Candidate {
    a: Vec<f64>,
    b: Vec<f64>,
    run: BackwardRun,
    f: Vec<f64>,
}

impl Candidate {
    fn score(&self) -> (bool, f64, f64) {
        (self.run.survived(), self.run.exit_time, self.f.iter().fold(0.0, |m: f64, x| m.max(x.abs())))
    }
}

fn evaluate(setup: &Setup, a: &[f64], n: f64, t_floor: f64, tube: &TubeSpec) -> Result<Candidate> {
    let fd = solve_final_b(setup.bank, a, n, setup.eta)?;
    let run = backward_run(setup, &fd.b, n, t_floor, tube)?;
    let f = run.exit_functional(setup.bank, n);
    Ok(Candidate { a: a.to_vec(), b: fd.b, run, f })
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    let (sa, ea, fa) = a.score();
    let (sb, eb, fb) = b.score();
    match (sa, sb) {
        (true, false) => true,
        (false, true) => false,
        (true, true) => fa < fb,
        (false, false) => ea < eb || (ea == eb && fa < fb),
    }
}

fn finish(best: Candidate, n: f64, evaluations: usize, signs: Option<(f64, f64)>, radius: f64) -> Result<ShootingResult> {
    if !best.run.survived() {
        return Err(Error::ShootingFailure {
            reason: format!("best candidate exits at t = {} ({:?})", best.run.exit_time, best.run.cause),
            best_a_minus: best.a,
            best_exit_time: best.run.exit_time,
        });
    }
    Ok(ShootingResult {
        n,
        a_minus_final: best.a,
        b: best.b,
        exit_time: best.run.exit_time,
        cause: best.run.cause,
        trajectory: best.run.trajectory,
        evaluations,
        exit_functional: best.f,
        bracket_signs: signs,
        ball_radius: radius,
    })
}

/// Chooses `a⁻(n)` in the ball of radius `min(slack φ^{3/4}(δ̃n), r)` so that
/// the backward run stays in the tube down to `t_floor`.
pub fn shoot(setup: &Setup, n: f64, tube: &TubeSpec, t_floor: f64, options: &ShootingOptions) -> Result<ShootingResult> {
    let k = setup.bank.len();
    let expected = ShootingMethod::for_count(k)?;
    if options.method != expected {
        return Err(invalid(format!("{:?} shooting does not apply to {k} solitons", options.method)));
    }
    let rho = tube.ball_radius(n, setup.radius);
    match options.method {
        ShootingMethod::Bisection => bisect(setup, n, tube, t_floor, options, rho),
        ShootingMethod::Newton => newton(setup, n, tube, t_floor, options, rho),
    }
}

fn bisect(setup: &Setup, n: f64, tube: &TubeSpec, t_floor: f64, options: &ShootingOptions, rho: f64) -> Result<ShootingResult> {
    let (lo, hi) = std::thread::scope(|s| {
        let a = s.spawn(|| evaluate(setup, &[-rho], n, t_floor, tube));
        let b = evaluate(setup, &[rho], n, t_floor, tube);
        (a.join().expect("shooting worker panicked"), b)
    });
    let (lo, hi) = (lo?, hi?);
    let signs = (lo.f[0], hi.f[0]);
    let mut evaluations = 2;
    let mut best = if better(&lo, &hi) { lo } else { hi };
    if !(signs.0 < 0.0 && signs.1 > 0.0) {
        return Err(Error::ShootingFailure {
            reason: format!("no sign change of the exit functional on the ball: {signs:?}"),
            best_a_minus: best.a,
            best_exit_time: best.run.exit_time,
        });
    }
    let (mut lo, mut hi) = ((-rho, signs.0), (rho, signs.1));
    // Illinois variant of regula falsi
    let mut side = 0i32;
    while evaluations < options.max_evaluations {
        let fl = if side == -1 { 0.5 * lo.1 } else { lo.1 };
        let fh = if side == 1 { 0.5 * hi.1 } else { hi.1 };
        let mut x = (lo.0 * fh - hi.0 * fl) / (fh - fl);
        if !(x > lo.0 && x < hi.0) {
            x = 0.5 * (lo.0 + hi.0);
        }
        let c = evaluate(setup, &[x], n, t_floor, tube)?;
        evaluations += 1;
        let fc = c.f[0];
        let done = fc == 0.0 || (c.run.survived() && fc.abs() <= options.f_tol);
        if fc < 0.0 {
            lo = (x, fc);
            side = if side == -1 { 0 } else { 1 };
        } else if fc > 0.0 {
            hi = (x, fc);
            side = if side == 1 { 0 } else { -1 };
        }
        if better(&c, &best) {
            best = c;
        }
        let narrow = hi.0 - lo.0 <= 4.0 * f64::EPSILON * lo.0.abs().max(hi.0.abs());
        if done || narrow {
            break;
        }
    }
    finish(best, n, evaluations, Some(signs), rho)
}

fn project_ball(a: DVector<f64>, rho: f64) -> DVector<f64> {
    let r = a.norm();
    if r > rho {
        a * (rho / r)
    } else {
        a
    }
}

fn newton(setup: &Setup, n: f64, tube: &TubeSpec, t_floor: f64, options: &ShootingOptions, rho: f64) -> Result<ShootingResult> {
    let k = setup.bank.len();
    let mut starts = vec![DVector::zeros(k)];
    for j in 0..k {
        let mut e = DVector::zeros(k);
        e[j] = 0.5 * rho;
        starts.push(e.clone());
        starts.push(-e);
    }
    let mut best: Option<Candidate> = None;
    let mut evaluations = 0;
    for start in starts {
        let mut a = project_ball(start, rho);
        let mut cur = evaluate(setup, a.as_slice(), n, t_floor, tube)?;
        evaluations += 1;
        let mut jac = DMatrix::<f64>::identity(k, k);
        while evaluations < options.max_evaluations {
            let f = DVector::from_column_slice(&cur.f);
            if cur.run.survived() && f.amax() <= options.f_tol {
                break;
            }
            let Some(step) = jac.clone().lu().solve(&(-&f)) else { break };
            let mut accepted = None;
            let mut scale = 1.0;
            for _ in 0..6 {
                let trial = project_ball(&a + &step * scale, rho);
                let c = evaluate(setup, trial.as_slice(), n, t_floor, tube)?;
                evaluations += 1;
                let fc = DVector::from_column_slice(&c.f);
                let da = &trial - &a;
                let ss = da.norm_squared();
                if ss > 0.0 {
                    jac += (&fc - &f - &jac * &da) * da.transpose() / ss;
                }
                if fc.amax() < f.amax() || better(&c, &cur) {
                    accepted = Some((trial, c));
                    break;
                }
                scale *= 0.5;
            }
            match accepted {
                Some((trial, c)) => {
                    a = trial;
                    cur = c;
                }
                None => break,
            }
        }
        let done = cur.run.survived() && cur.f.iter().all(|x| x.abs() <= options.f_tol);
        match &best {
            Some(b) if !better(&cur, b) => {}
            _ => best = Some(cur),
        }
        if done || evaluations >= options.max_evaluations {
            break;
        }
    }
    finish(best.expect("at least one start"), n, evaluations, None, rho)
}

/// Per-n summary inside a [`ConstructionReport`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub n: f64,
    pub a_minus: Vec<f64>,
    pub b: Vec<f64>,
    pub exit_time: f64,
    pub evaluations: usize,
    /// `max_t ‖u_n(t) − R(t)‖_{H¹} / (t φ^{1/2}(δ̃t))`.
    #[serde(rename = "fitted_C")]
    pub fitted_c: f64,
    pub decay: Option<DecayFit>,
    pub remainder: Option<RemainderReport>,
    /// `max_t ‖X(t) − R(t)‖_{H¹} / (L(t) + t φ^{1/2}(δ̃t))`.
    pub physical_c: f64,
    pub tube_held: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstructionReport {
    pub deltas: DeltaEstimates,
    pub tube: TubeSpec,
    pub tube_slack: f64,
    pub t_floor: f64,
    pub seed: Option<u64>,
    pub runs: Vec<RunSummary>,
    pub uniform_c: f64,
    /// Ratio of the largest to the smallest per-n constant.
    pub c_spread: f64,
    /// `(n₁, n₂, ‖u_{n₂}(T₀) − u_{n₁}(T₀)‖_{L²})` over consecutive n.
    pub cauchy: Vec<(f64, f64, f64)>,
    pub cauchy_decreasing: bool,
    #[serde(skip)]
    pub results: Vec<ShootingResult>,
}

/// `Σ_k (G_k log(1/G_k))^{1/2}` with `G_k = ∫_t^∞ g_k²`.
pub fn tail_term(noise: Option<&NoiseRealization>, t: f64) -> f64 {
    noise
        .map(|nz| {
            nz.spec()
                .weights
                .iter()
                .map(|w| {
                    let g = w.tail_l2(t);
                    if g > 0.0 && g < 1.0 {
                        (g * (1.0 / g).ln()).sqrt()
                    } else {
                        0.0
                    }
                })
                .sum()
        })
        .unwrap_or(0.0)
}

/// Fits the per-run diagnostics of a successful shooting result.
pub fn summarize(setup: &Setup, tube: &TubeSpec, deltas: &DeltaEstimates, res: &ShootingResult) -> RunSummary {
    let rows = &res.trajectory.rows;
    let fitted_c = rows.iter().map(|r| r.distance / tube.theorem_shape(r.t)).fold(0.0, f64::max);
    let physical_c = rows
        .iter()
        .map(|r| r.physical_distance / (tail_term(setup.noise, r.t) + tube.theorem_shape(r.t)))
        .fold(0.0, f64::max);
    let series: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.distance)).collect();
    let decay = decay_fit(&series, tube.case).ok();
    let samples: Vec<RemainderSample> = rows
        .iter()
        .map(|r| {
            let e2 = r.eps_h1 * r.eps_h1;
            let beta = if e2 > 0.0 { (r.lyapunov - setup.lyapunov_ref - r.quadratic).abs() / e2 } else { 0.0 };
            RemainderSample { t: r.t, eps_h1: r.eps_h1, a_minus: r.a_minus.clone(), b_star: r.b_star, beta }
        })
        .collect();
    let model = RemainderModel {
        delta1: if deltas.delta1.is_finite() { deltas.delta1 } else { 0.0 },
        delta2: if deltas.delta2.is_finite() { deltas.delta2 } else { deltas.delta3 },
        case: tube.case,
        p: setup.bank.p(),
        target: norm(&res.a_minus_final),
    };
    let remainder = remainder_control_report(&samples, &model).ok();
    RunSummary {
        n: res.n,
        a_minus: res.a_minus_final.clone(),
        b: res.b.clone(),
        exit_time: res.exit_time,
        evaluations: res.evaluations,
        fitted_c,
        decay,
        remainder,
        physical_c,
        tube_held: rows.iter().all(|r| r.inside().is_none()),
    }
}

/// Shoots for every n in `n_list` and collects the uniform-bound and
/// finite-n Cauchy diagnostics.
pub fn construct(
    setup: &Setup,
    n_list: &[f64],
    t_floor: f64,
    tube: &TubeSpec,
    deltas: &DeltaEstimates,
    options: &ShootingOptions,
) -> Result<ConstructionReport> {
    if n_list.is_empty() || n_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("n_list must be nonempty and increasing"));
    }
    let mut results = Vec::new();
    for &n in n_list {
        results.push(shoot(setup, n, tube, t_floor, options)?);
    }
    let runs: Vec<RunSummary> = results.iter().map(|r| summarize(setup, tube, deltas, r)).collect();
    let cs: Vec<f64> = runs.iter().map(|r| r.fitted_c).collect();
    let uniform_c = cs.iter().cloned().fold(0.0, f64::max);
    let min_c = cs.iter().cloned().fold(f64::INFINITY, f64::min);
    let c_spread = if min_c > 0.0 { uniform_c / min_c } else { f64::INFINITY };
    let mut cauchy = Vec::new();
    for w in results.windows(2) {
        let a = w[0].trajectory.last_field.as_ref().ok_or_else(|| invalid("missing final field"))?;
        let b = w[1].trajectory.last_field.as_ref().ok_or_else(|| invalid("missing final field"))?;
        cauchy.push((w[0].n, w[1].n, l2_norm(&(b - a))));
    }
    let cauchy_decreasing = cauchy.windows(2).all(|w| w[1].2 < w[0].2);
    Ok(ConstructionReport {
        deltas: *deltas,
        tube: *tube,
        tube_slack: tube.slack,
        t_floor,
        seed: setup.noise.map(|n| n.seed()),
        runs,
        uniform_c,
        c_spread,
        cauchy,
        cauchy_decreasing,
        results,
    })
}
