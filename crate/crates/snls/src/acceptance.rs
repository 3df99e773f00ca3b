//! The acceptance suite: one check per criterion, each returning a verdict
//! with the measured quantities.

use std::sync::OnceLock;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::Preset;
use crate::construction::{
    construct, estimate_deltas, final_jacobian_fd, shoot, solve_final_b, ConstructionReport, Setup, ShootingMethod,
    ShootingOptions, TubeSpec,
};
use crate::error::{Error, Result};
use crate::grid::{h1_norm, l2_norm, mass, Grid, I};
use crate::ground_state::{soliton, solve_ground_state, GroundState, SolitonParams};
use crate::linearized::{coercivity_gap, orthogonality_identities, solve_eigenpair, unconstrained_min, Eigenpair};
use crate::modulation::{decompose, ProfileBank};
use crate::noise::{
    ito_enhancement, rough_integral, sample_brownian, tail_log_constant, ControlledPath, NoiseRealization,
};
use crate::solver::{evolve, SolverConfig};

pub const CRITERIA: [(u8, &str); 11] = [
    (1, "ground state"),
    (2, "eigenpair"),
    (3, "coercivity"),
    (4, "solver accuracy"),
    (5, "rough paths"),
    (6, "mass conservation with noise"),
    (7, "modulated final data"),
    (8, "linearized dynamics"),
    (9, "deterministic construction"),
    (10, "stochastic construction"),
    (11, "finite-n Cauchy"),
];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Verdict {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Verdict {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} [{}] {}: {} ({:.1} s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.seconds
        )
    }
}

type Shared<T> = OnceLock<std::result::Result<T, Error>>;

fn shared<T>(cell: &Shared<T>, f: impl FnOnce() -> Result<T>) -> Result<&T> {
    cell.get_or_init(f).as_ref().map_err(Clone::clone)
}

fn spectral(n: usize, l: f64, eig_tol: f64) -> Result<(GroundState, Eigenpair)> {
    let q = solve_ground_state(6.0, Grid::new(n, l)?, 1e-9)?;
    let e = solve_eigenpair(&q, eig_tol)?;
    Ok((q, e))
}

/// Lazily computed resources shared between criteria.
#[derive(Default)]
pub struct Lab {
    fine: Shared<(GroundState, Eigenpair, f64)>,
    coarse: Shared<(GroundState, Eigenpair)>,
    wide: Shared<(GroundState, Eigenpair)>,
    small: Shared<(GroundState, Eigenpair)>,
    deterministic: Shared<ConstructionReport>,
}

impl Lab {
    pub fn new() -> Self {
        Self::default()
    }

    /// N = 2048, L = 60, with the eigenpair solve time.
    fn fine(&self) -> Result<&(GroundState, Eigenpair, f64)> {
        shared(&self.fine, || {
            let q = solve_ground_state(6.0, Grid::new(2048, 60.0)?, 1e-9)?;
            let start = Instant::now();
            let e = solve_eigenpair(&q, 1e-8)?;
            Ok((q, e, start.elapsed().as_secs_f64()))
        })
    }

    /// N = 1024, L = 60.
    fn coarse(&self) -> Result<&(GroundState, Eigenpair)> {
        shared(&self.coarse, || spectral(1024, 60.0, 1e-8))
    }

    /// The preset grid N = 2048, L = 80.
    pub fn wide(&self) -> Result<&(GroundState, Eigenpair)> {
        shared(&self.wide, || spectral(2048, 80.0, 1e-9))
    }

    /// N = 1024, L = 40.
    fn small(&self) -> Result<&(GroundState, Eigenpair)> {
        shared(&self.small, || spectral(1024, 40.0, 1e-9))
    }

    /// The deterministic preset run shared by criteria 9 and 11.
    pub fn deterministic(&self) -> Result<&ConstructionReport> {
        shared(&self.deterministic, || {
            let cfg = Preset::Deterministic2Sol.config();
            let (q, e) = self.wide()?;
            let bank = ProfileBank::new(q, e, &cfg.solitons)?;
            let c = &cfg.construction;
            let n_max = c.n_list[c.n_list.len() - 1];
            let deltas = estimate_deltas(&bank, None, (c.t_floor, n_max))?;
            let tube = TubeSpec::new(deltas.delta_tilde, crate::noise::NoiseCase::Exponential, c.slack)?;
            let mut setup = Setup::new(&bank, cfg.solver_config(), None)?;
            setup.eta = c.eta;
            setup.radius = c.radius;
            construct(&setup, &c.n_list, c.t_floor, &tube, &deltas, &ShootingOptions::new(cfg.method()?))
        })
    }
}

/// Runs one criterion; errors count as failures.
pub fn run(id: u8, lab: &Lab) -> Verdict {
    let name = CRITERIA.iter().find(|c| c.0 == id).map(|c| c.1).unwrap_or("unknown");
    let start = Instant::now();
    let outcome = match id {
        1 => ground_state(),
        2 => eigenpair(lab),
        3 => coercivity(lab),
        4 => solver_accuracy(),
        5 => rough_paths(),
        6 => mass_with_noise(lab),
        7 => final_data(lab),
        8 => linearized_rates(lab),
        9 => deterministic(lab),
        10 => stochastic(lab),
        11 => cauchy(lab),
        _ => Err(Error::InvalidArgument(format!("no criterion {id}"))),
    };
    let (passed, detail) = match outcome {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    Verdict { id, name: name.to_string(), passed, detail, seconds: start.elapsed().as_secs_f64() }
}

pub fn run_all(lab: &Lab) -> Vec<Verdict> {
    CRITERIA.iter().map(|c| run(c.0, lab)).collect()
}

type Outcome = Result<(bool, String)>;

fn ground_state() -> Outcome {
    let start = Instant::now();
    let q = solve_ground_state(6.0, Grid::new(2048, 60.0)?, 1e-9)?;
    let secs = start.elapsed().as_secs_f64();
    let peak = 3.5f64.powf(0.2);
    let err = (q.profile().at_origin().re - peak).abs();
    let res = q.residual();
    let ok = res <= 1e-9 && err <= 1e-8 && secs < 5.0;
    Ok((ok, format!("residual {res:.2e}, |Q(0) - 3.5^0.2| {err:.2e}, solve {secs:.2} s")))
}

fn eigenpair(lab: &Lab) -> Outcome {
    let (q, e, secs) = lab.fine()?;
    let (_, coarse) = lab.coarse()?;
    let res = e.residual(q, true)?;
    let unit = (l2_norm(e.yplus()) - 1.0).abs();
    let ids = orthogonality_identities(q, e)?.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let y2 = e.y_star().powi(2);
    let drift = (coarse.e0() - e.e0()).abs() / e.e0();
    let ok = res <= 1e-8 && unit <= 1e-10 && ids <= 1e-8 && y2 < 1.0 && drift <= 1e-6 && *secs < 120.0;
    Ok((
        ok,
        format!(
            "e0 {:.10}, residual {res:.2e}, |‖Y‖-1| {unit:.1e}, identities {ids:.1e}, y*² {y2:.4}, N-drift {drift:.1e}, solve {secs:.1} s",
            e.e0()
        ),
    ))
}

fn coercivity(lab: &Lab) -> Outcome {
    let (q2, e2, _) = lab.fine()?;
    let (q1, e1) = lab.coarse()?;
    let g1 = coercivity_gap(q1, e1)?;
    let g2 = coercivity_gap(q2, e2)?;
    let neg = unconstrained_min(q2)?;
    let ok = g1 > 0.0 && g2 > 0.0 && (g1 - g2).abs() <= 0.05 * g2 && neg < 0.0;
    Ok((ok, format!("gap {g1:.6} (N=1024) {g2:.6} (N=2048), unconstrained minimum {neg:.4}")))
}

fn solver_accuracy() -> Outcome {
    let start = Instant::now();
    let q = solve_ground_state(6.0, Grid::new(2048, 60.0)?, 1e-9)?;
    let g = *q.grid();
    let s = SolitonParams::new(1.0, 1.0, 0.0, 0.0)?;
    let u0 = soliton(&s, &q, 0.0, &g)?;
    let exact = soliton(&s, &q, 10.0, &g)?;
    let run = |dt: f64| -> Result<(f64, f64)> {
        let u = evolve(&u0, 0.0, 10.0, None, &SolverConfig::composed(dt, 6.0, 6), None, &mut |_, _| true)?;
        Ok((h1_norm(&(&u - &exact)), (mass(&u) - mass(&u0)).abs()))
    };
    let (coarse, _) = run(4e-3)?;
    let (err, drift) = run(2e-3)?;
    let ratio = coarse / err;
    let secs = start.elapsed().as_secs_f64();
    let ok = err <= 1e-4 && drift <= 1e-8 && ratio >= 3.5 && secs < 60.0;
    Ok((ok, format!("H1 error {err:.2e}, mass drift {drift:.1e}, halving gain {ratio:.1}")))
}

fn rough_paths() -> Outcome {
    let p = sample_brownian(3, 5.0, 1e-3, 2)?;
    let e = ito_enhancement(&p);
    let n = p.n_steps();
    let mut chen: f64 = 0.0;
    let mut triples = 0;
    for s in (0..n - 2).step_by(17) {
        for (du, dt) in [(1, 1), (7, 300), (250, 40), (999, 2000)] {
            let u = (s + du).min(n - 1);
            let t = (u + dt).min(n);
            for j in 0..2 {
                for k in 0..2 {
                    let lhs = e.levy_area(&p, j, k, s, t);
                    let cross = (p.values(j)[u] - p.values(j)[s]) * (p.values(k)[t] - p.values(k)[u]);
                    let rhs = e.levy_area(&p, j, k, s, u) + e.levy_area(&p, j, k, u, t) + cross;
                    chen = chen.max((lhs - rhs).abs());
                }
            }
            triples += 1;
        }
    }
    let (t, m) = (0.01, 100);
    let mut mae = 0.0;
    for seed in 0..m {
        let path = sample_brownian(1000 + seed, t, 1e-4, 1)?;
        let enh = ito_enhancement(&path);
        let v = rough_integral(&ControlledPath::identity(&path), &path, &enh, (0.0, t), 0)?;
        let bt = path.values(0)[path.n_steps()];
        mae += (v - 0.5 * (bt * bt - t)).abs() / m as f64;
    }
    let ok = chen <= 1e-12 && mae <= 1e-3;
    Ok((ok, format!("Chen defect {chen:.1e} over {triples} triples, Itô mean abs error {mae:.2e} over {m} seeds")))
}

fn mass_with_noise(lab: &Lab) -> Outcome {
    let cfg = Preset::CaseI2Sol.config();
    let spec = cfg.noise_spec().expect("noisy preset");
    let (q, _) = lab.wide()?;
    let g = *q.grid();
    let mut u0 = soliton(&cfg.solitons[0], q, 0.0, &g)?;
    for s in &cfg.solitons[1..] {
        u0 = &u0 + &soliton(s, q, 0.0, &g)?;
    }
    let m0 = mass(&u0);
    let mut worst: f64 = 0.0;
    let seeds = 20;
    for seed in 0..seeds {
        let nz = NoiseRealization::sample(spec.clone(), seed)?;
        evolve(&u0, 0.0, 10.0, Some(&nz), &cfg.solver_config(), Some(1.0), &mut |t, u| {
            if t > 0.0 {
                worst = worst.max((mass(u) - m0).abs() / t);
            }
            true
        })?;
    }
    Ok((worst <= 1e-7, format!("worst mass drift {worst:.2e} per unit time over {seeds} seeds on [0, 10]")))
}

fn final_data(lab: &Lab) -> Outcome {
    let cfg = Preset::Deterministic2Sol.config();
    let (q, e) = lab.wide()?;
    let bank = ProfileBank::new(q, e, &cfg.solitons)?;
    let n = 20.0;
    let target = [3e-4, -2e-4];
    let fd = solve_final_b(&bank, &target, n, cfg.construction.eta)?;
    let hit = fd
        .a_plus
        .iter()
        .map(|a| a.abs())
        .chain(fd.a_minus.iter().zip(&target).map(|(a, t)| (a - t).abs()))
        .fold(0.0, f64::max);
    let j = final_jacobian_fd(&bank, &[0.0; 4], n, cfg.construction.eta, 1e-6)?;
    let y = bank.y_star();
    let mut worst: f64 = 0.0;
    for k in 0..2 {
        worst = worst.max((j[(k, 2 + k)] / j[(k, k)] - y).abs() / y.abs());
        worst = worst.max((j[(2 + k, k)] / j[(2 + k, 2 + k)] - y).abs() / y.abs());
    }
    let ok = hit <= 1e-9 && worst <= 0.05;
    Ok((ok, format!("target miss {hit:.1e}, block ratio vs y* = {y:.5}: worst relative deviation {worst:.2e}")))
}

fn seeded_rate(bank: &ProfileBank, plus: bool) -> Result<f64> {
    let delta = 1e-5;
    let y = bank.eigenfunction(0, plus, 0.0, 0.0, 0.0)?;
    let u0 = &bank.reference(0.0)? + &(&y * (I * delta));
    let (mut a, mut th) = bank.unmodulated();
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    let mut failure = None;
    evolve(&u0, 0.0, 0.5, None, &SolverConfig::composed(2e-3, 6.0, 6), Some(0.05), &mut |t, u| {
        match decompose(bank, u, t, (&a, &th)) {
            Ok(s) => {
                ts.push(t);
                ys.push(if plus { s.a_plus[0] } else { s.a_minus[0] }.abs().ln());
                a = s.alpha;
                th = s.theta;
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
    Ok(crate::ground_state::linear_fit(&ts, &ys)?.0)
}

fn linearized_rates(lab: &Lab) -> Outcome {
    let (q, e) = lab.small()?;
    let bank = ProfileBank::new(q, e, &[SolitonParams::new(1.0, 0.0, 0.0, 0.0)?])?;
    let rate = e.e0();
    let plus = seeded_rate(&bank, true)?;
    let minus = seeded_rate(&bank, false)?;
    let ok = (plus - rate).abs() <= 0.1 * rate && (minus + rate).abs() <= 0.1 * rate;
    Ok((ok, format!("a+ rate {plus:.4}, a- rate {minus:.4}, expected ±{rate:.4}")))
}

fn deterministic(lab: &Lab) -> Outcome {
    let rep = lab.deterministic()?;
    let t_floor = rep.t_floor;
    let threshold = -0.8 * rep.deltas.delta_tilde / 2.0;
    let mut ok = rep.c_spread < 2.0;
    let mut slopes = Vec::new();
    for (run, res) in rep.runs.iter().zip(&rep.results) {
        let bounds = res.trajectory.rows.iter().all(|r| r.inside().is_none());
        let reached = run.exit_time == t_floor && res.trajectory.rows.last().map(|r| (r.t - t_floor).abs() < 1e-9) == Some(true);
        let slope = run.decay.as_ref().map(|d| d.rate).unwrap_or(f64::NAN);
        ok &= bounds && reached && run.tube_held && slope <= threshold;
        slopes.push(format!("{slope:.3}"));
    }
    Ok((
        ok,
        format!(
            "n = {:?}, δ̃ = {:.4}, slopes [{}] vs ≤ {threshold:.4}, C spread {:.3}, tube held to T_floor = {t_floor}",
            rep.runs.iter().map(|r| r.n).collect::<Vec<_>>(),
            rep.deltas.delta_tilde,
            slopes.join(", "),
            rep.c_spread
        ),
    ))
}

fn cauchy(lab: &Lab) -> Outcome {
    let rep = lab.deterministic()?;
    let d: Vec<String> = rep.cauchy.iter().map(|c| format!("({}, {}) {:.3e}", c.0, c.1, c.2)).collect();
    let ok = rep.cauchy.len() >= 2 && rep.cauchy_decreasing;
    Ok((ok, format!("L2 distances at T0 = {}: {}", rep.t_floor, d.join(", "))))
}

/// Per-seed outcome of the single-soliton stochastic construction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub succeeded: bool,
    pub exit_time: f64,
    /// `max_t ‖u_n(t) − R(t)‖_{H¹} / (slack t φ^{1/2}(δ̃t))`.
    pub worst_ratio: f64,
    pub sigma_hat: f64,
    /// `sup t B*(t)` on `[σ̂, n]`.
    pub weighted_tail: f64,
    /// `2 Σ_k (2 c*_k)^{1/2}` with `c*_k` fitted on `[σ̂, n]`.
    pub tail_bound: f64,
    pub message: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StochasticSummary {
    pub preset: String,
    pub n: f64,
    pub delta_tilde: f64,
    pub seeds: Vec<SeedOutcome>,
    /// Smallest T_floor reached across the successful seeds.
    pub t0_empirical: f64,
}

impl StochasticSummary {
    pub fn successes(&self) -> usize {
        self.seeds.iter().filter(|s| s.succeeded).count()
    }

    pub fn shape_holds(&self) -> bool {
        self.seeds.iter().filter(|s| s.succeeded).all(|s| s.worst_ratio <= 1.0)
    }

    pub fn tail_fraction(&self) -> f64 {
        let ok = self.seeds.iter().filter(|s| s.weighted_tail <= s.tail_bound).count();
        ok as f64 / self.seeds.len().max(1) as f64
    }
}

/// Shoots the v = +1 soliton of a noisy preset at n = 20 on each preset seed.
pub fn stochastic_single(lab: &Lab, preset: Preset) -> Result<StochasticSummary> {
    let cfg = preset.config();
    let nz_cfg = cfg.noise.as_ref().ok_or_else(|| Error::InvalidArgument("preset has no noise".into()))?;
    let spec = nz_cfg.spec();
    let soliton = *cfg.solitons.iter().find(|s| s.v > 0.0).expect("preset has a right-moving soliton");
    let (q, e) = lab.wide()?;
    let bank = ProfileBank::new(q, e, &[soliton])?;
    let (n, t_floor) = (20.0, cfg.construction.t_floor);
    let deltas = estimate_deltas(&bank, Some(&spec), (t_floor, n))?;
    let tube = TubeSpec::new(deltas.delta_tilde, spec.case, cfg.construction.slack)?;
    let options = ShootingOptions::new(ShootingMethod::Bisection);
    let mut seeds = Vec::new();
    for seed in nz_cfg.seed_list() {
        let nz = NoiseRealization::sample(spec.clone(), seed)?;
        let sigma_hat = nz.sigma_hat();
        let t_min = sigma_hat.max(spec.dt);
        let tail_bound: f64 = spec.weights.iter().map(|w| 2.0 * (2.0 * tail_log_constant(w, t_min, n)).sqrt()).sum();
        let weighted_tail = nz.weighted_tail_sup(sigma_hat, n);
        let mut setup = Setup::new(&bank, cfg.solver_config(), Some(&nz))?;
        setup.eta = cfg.construction.eta;
        setup.radius = cfg.construction.radius;
        let outcome = match shoot(&setup, n, &tube, t_floor, &options) {
            Ok(res) => {
                let worst = res
                    .trajectory
                    .rows
                    .iter()
                    .map(|r| r.distance / (tube.slack * tube.theorem_shape(r.t)))
                    .fold(0.0, f64::max);
                SeedOutcome {
                    seed,
                    succeeded: true,
                    exit_time: res.exit_time,
                    worst_ratio: worst,
                    sigma_hat,
                    weighted_tail,
                    tail_bound,
                    message: format!("{} evaluations", res.evaluations),
                }
            }
            Err(e @ Error::ShootingFailure { .. }) => SeedOutcome {
                seed,
                succeeded: false,
                exit_time: match &e {
                    Error::ShootingFailure { best_exit_time, .. } => *best_exit_time,
                    _ => f64::NAN,
                },
                worst_ratio: f64::NAN,
                sigma_hat,
                weighted_tail,
                tail_bound,
                message: e.to_string(),
            },
            Err(e) => return Err(e),
        };
        seeds.push(outcome);
    }
    let t0_empirical = seeds.iter().filter(|s| s.succeeded).map(|s| s.exit_time).fold(f64::INFINITY, f64::min);
    Ok(StochasticSummary {
        preset: preset.name().to_string(),
        n,
        delta_tilde: deltas.delta_tilde,
        seeds,
        t0_empirical,
    })
}

fn stochastic(lab: &Lab) -> Outcome {
    let one = stochastic_single(lab, Preset::CaseI2Sol)?;
    let two = stochastic_single(lab, Preset::CaseII2Sol)?;
    let need = |s: &StochasticSummary| 5 * s.successes() >= 4 * s.seeds.len();
    let worst = |s: &StochasticSummary| s.seeds.iter().map(|x| x.worst_ratio).fold(0.0, f64::max);
    let tail_sup = two.seeds.iter().map(|x| x.weighted_tail).fold(0.0, f64::max);
    let tail_bound = two.seeds.iter().map(|x| x.tail_bound).fold(f64::INFINITY, f64::min);
    let ok = need(&one) && one.shape_holds() && need(&two) && two.shape_holds() && two.tail_fraction() >= 0.9;
    Ok((
        ok,
        format!(
            "Case I {}/{} (δ̃ {:.4}, worst ratio {:.2e}, T0 {}); Case II {}/{} (δ̃ {:.4}, worst ratio {:.2e}, T0 {}); sup t·B* {:.3e} ≤ {:.3e} on {:.0}% of seeds",
            one.successes(),
            one.seeds.len(),
            one.delta_tilde,
            worst(&one),
            one.t0_empirical,
            two.successes(),
            two.seeds.len(),
            two.delta_tilde,
            worst(&two),
            two.t0_empirical,
            tail_sup,
            tail_bound,
            100.0 * two.tail_fraction()
        ),
    ))
}
