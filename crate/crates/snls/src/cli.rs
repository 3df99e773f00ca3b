//! Experiment runner behind the `snls` binary.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::acceptance::{run_all, Lab, Verdict};
use crate::config::{ExperimentConfig, Preset};
use crate::construction::{construct, estimate_deltas, forward_run, ConstructionReport, Setup, ShootingOptions, TubeSpec};
use crate::error::{Error, Result};
use crate::ground_state::{solve_ground_state, GroundState};
use crate::io::{save_csv, save_json, save_snapshot};
use crate::linearized::{coercivity_gap, orthogonality_identities, solve_eigenpair, unconstrained_min, Eigenpair};
use crate::modulation::ProfileBank;
use crate::noise::{tail_log_constant, NoiseCase, NoiseRealization, NoiseSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_ACCEPTANCE: i32 = 4;

/// Environment variable that may supply the output directory.
pub const OUT_ENV: &str = "SNLS_OUT";

#[derive(Debug, Parser)]
#[command(name = "snls", version, about = "Multi-soliton lab for the stochastic supercritical NLS")]
pub struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Noise seed; overrides the configured seeds.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Named configuration used when no --config is given.
    #[arg(long, global = true, value_parser = ["deterministic-2sol", "caseI-2sol", "caseII-2sol"])]
    pub preset: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Solve for Q and report the residuals.
    GroundState,
    /// Eigenpair, orthogonality identities and coercivity gap.
    Spectrum,
    /// Sample the noise and report B* with its validators.
    Noise,
    /// Forward run from the soliton sum with the observer CSV.
    Evolve,
    /// Shooting over the n-ladder with the convergence report.
    Construct,
    /// Run the acceptance suite.
    Verify,
}

/// Resolves the configuration from --config, --preset and --seed.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(_), Some(_)) => {
            return Err(Error::Config { path: "--preset".into(), message: "give either --config or --preset".into() })
        }
        (Some(path), None) => ExperimentConfig::load(path)?,
        (None, Some(name)) => name.parse::<Preset>()?.config(),
        (None, None) => Preset::Deterministic2Sol.config(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    Ok(cfg)
}

pub fn output_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| cfg.output.directory.clone())
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

/// Parses, runs and maps the outcome to an exit status, printing to stdout
/// and stderr.
pub fn main_with(cli: Cli) -> i32 {
    let result = resolve_config(&cli).and_then(|cfg| {
        let out = output_dir(&cli, &cfg);
        run(cli.command, &cfg, &out)
    });
    match result {
        Ok(lines) => {
            let failed = lines.iter().any(|l| l.contains("[FAIL]"));
            for l in lines {
                println!("{l}");
            }
            if failed {
                EXIT_ACCEPTANCE
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs a subcommand, writing artifacts to `out`; returns the summary lines.
pub fn run(command: Command, cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    cfg.validate()?;
    fs::create_dir_all(out)?;
    match command {
        Command::GroundState => ground_state(cfg, out),
        Command::Spectrum => spectrum(cfg, out),
        Command::Noise => noise(cfg, out),
        Command::Evolve => evolve(cfg, out),
        Command::Construct => construct_cmd(cfg, out),
        Command::Verify => verify(out),
    }
}

fn solve_q(cfg: &ExperimentConfig) -> Result<GroundState> {
    solve_ground_state(cfg.p, cfg.grid()?, 1e-9)
}

fn solve_pair(cfg: &ExperimentConfig) -> Result<(GroundState, Eigenpair)> {
    let q = solve_q(cfg)?;
    let e = solve_eigenpair(&q, 1e-9)?;
    Ok((q, e))
}

#[derive(Serialize)]
struct GroundStateReport {
    p: f64,
    n_points: usize,
    half_length: f64,
    residual: f64,
    peak: f64,
    closed_form_peak: f64,
    decay_rate: f64,
}

fn ground_state(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    let q = solve_q(cfg)?;
    let rep = GroundStateReport {
        p: cfg.p,
        n_points: cfg.grid.n_points,
        half_length: cfg.grid.half_length,
        residual: q.residual(),
        peak: q.profile().at_origin().re,
        closed_form_peak: ((cfg.p + 1.0) / 2.0).powf(1.0 / (cfg.p - 1.0)),
        decay_rate: q.decay_rate(),
    };
    save_json(&out.join("ground_state.json"), &rep)?;
    save_snapshot(&out.join("ground_state.snap"), q.profile(), 0.0)?;
    Ok(vec![format!("residual {:.3e}", rep.residual), format!("Q(0) {:.15}", rep.peak)])
}

#[derive(Serialize)]
struct SpectrumReport {
    e0: f64,
    y_star: f64,
    residual_plus: f64,
    residual_minus: f64,
    orthogonality: [f64; 4],
    coercivity_gap: f64,
    unconstrained_min: f64,
}

fn spectrum(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    let (q, e) = solve_pair(cfg)?;
    let rep = SpectrumReport {
        e0: e.e0(),
        y_star: e.y_star(),
        residual_plus: e.residual(&q, true)?,
        residual_minus: e.residual(&q, false)?,
        orthogonality: orthogonality_identities(&q, &e)?,
        coercivity_gap: coercivity_gap(&q, &e)?,
        unconstrained_min: unconstrained_min(&q)?,
    };
    save_json(&out.join("spectrum.json"), &rep)?;
    save_snapshot(&out.join("eigenfunction.snap"), e.yplus(), 0.0)?;
    Ok(vec![
        format!("e0 {:.12}", rep.e0),
        format!("y* {:.12}", rep.y_star),
        format!("coercivity gap {:.6e}", rep.coercivity_gap),
    ])
}

fn require_noise(cfg: &ExperimentConfig) -> Result<NoiseSpec> {
    cfg.noise_spec()
        .ok_or_else(|| Error::Config { path: "noise".into(), message: "this subcommand needs a [noise] section".into() })
}

#[derive(Serialize)]
struct NoiseSeedReport {
    seed: u64,
    sigma_hat: f64,
    weighted_tail_sup: f64,
    t: Vec<f64>,
    b_star: Vec<f64>,
}

#[derive(Serialize)]
struct NoiseReport {
    horizon: f64,
    dt: f64,
    tail_beyond_horizon: f64,
    c_star: Vec<f64>,
    edge_flatness: f64,
    profile_decay: Option<f64>,
    seeds: Vec<NoiseSeedReport>,
}

fn noise(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    let spec = require_noise(cfg)?;
    let grid = cfg.grid()?;
    let span = cfg.construction.n_list[cfg.construction.n_list.len() - 1];
    let steps = (span / cfg.output.cadence).round() as usize;
    let t: Vec<f64> = (0..=steps).map(|i| i as f64 * cfg.output.cadence).collect();
    let mut seeds = Vec::new();
    let mut lines = Vec::new();
    for seed in cfg.noise.as_ref().map(|n| n.seed_list()).unwrap_or_default() {
        let nz = NoiseRealization::sample(spec.clone(), seed)?;
        let rep = NoiseSeedReport {
            seed,
            sigma_hat: nz.sigma_hat(),
            weighted_tail_sup: nz.weighted_tail_sup(nz.sigma_hat(), span),
            b_star: t.iter().map(|&s| nz.b_star(s)).collect(),
            t: t.clone(),
        };
        lines.push(format!("seed {seed}: sigma_hat {:.3}, sup t·B* {:.3e}", rep.sigma_hat, rep.weighted_tail_sup));
        seeds.push(rep);
    }
    let rep = NoiseReport {
        horizon: spec.horizon,
        dt: spec.dt,
        tail_beyond_horizon: spec.tail_beyond_horizon(),
        c_star: spec.weights.iter().map(|w| tail_log_constant(w, 1.0, span.max(2.0))).collect(),
        edge_flatness: spec.edge_flatness(&grid),
        profile_decay: spec.profile_decay(&grid).ok(),
        seeds,
    };
    save_json(&out.join("noise.json"), &rep)?;
    Ok(lines)
}

fn realization(cfg: &ExperimentConfig) -> Result<Option<NoiseRealization>> {
    match (cfg.noise_spec(), &cfg.noise) {
        (Some(spec), Some(n)) => Ok(Some(NoiseRealization::sample(spec, n.seed)?)),
        _ => Ok(None),
    }
}

fn case(cfg: &ExperimentConfig) -> NoiseCase {
    cfg.noise.as_ref().map(|n| n.case).unwrap_or(NoiseCase::Exponential)
}

fn evolve(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    let (q, e) = solve_pair(cfg)?;
    let bank = ProfileBank::new(&q, &e, &cfg.solitons)?;
    let nz = realization(cfg)?;
    let (t0, t1) = (cfg.evolve.t0, cfg.evolve.t1);
    let deltas = estimate_deltas(&bank, cfg.noise_spec().as_ref(), (t0, t1))?;
    let mut tube = TubeSpec::new(deltas.delta_tilde, case(cfg), cfg.construction.slack)?;
    tube.cadence = cfg.output.cadence;
    let setup = Setup::new(&bank, cfg.solver_config(), nz.as_ref())?;
    let u0 = bank.reference(t0)?;
    let traj = forward_run(&setup, &u0, t0, t1, &tube)?;
    save_csv(&out.join("evolve.csv"), &traj.rows, bank.len())?;
    if let (Some(u), Some(r)) = (&traj.last_field, traj.rows.last()) {
        save_snapshot(&out.join("evolve_final.snap"), u, r.t)?;
    }
    let last = traj.rows.last().map(|r| r.t).unwrap_or(t0);
    Ok(vec![format!("{} rows from t = {t0} to t = {last}", traj.rows.len())])
}

fn construction_report(cfg: &ExperimentConfig) -> Result<(ConstructionReport, usize)> {
    let (q, e) = solve_pair(cfg)?;
    let bank = ProfileBank::new(&q, &e, &cfg.solitons)?;
    let nz = realization(cfg)?;
    let c = &cfg.construction;
    let n_max = c.n_list[c.n_list.len() - 1];
    let deltas = estimate_deltas(&bank, cfg.noise_spec().as_ref(), (c.t_floor, n_max))?;
    let mut tube = TubeSpec::new(deltas.delta_tilde, case(cfg), c.slack)?;
    tube.cadence = cfg.output.cadence;
    let mut setup = Setup::new(&bank, cfg.solver_config(), nz.as_ref())?;
    setup.eta = c.eta;
    setup.radius = c.radius;
    let rep = construct(&setup, &c.n_list, c.t_floor, &tube, &deltas, &ShootingOptions::new(cfg.method()?))?;
    Ok((rep, bank.len()))
}

fn construct_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    let (rep, k) = construction_report(cfg)?;
    let mut lines = Vec::new();
    for res in &rep.results {
        save_csv(&out.join(format!("construct_n{}.csv", res.n)), &res.trajectory.rows, k)?;
    }
    for r in &rep.runs {
        lines.push(format!(
            "n {}: a_minus {:?}, exit_time {}, fitted_C {:.4e}, evaluations {}",
            r.n, r.a_minus, r.exit_time, r.fitted_c, r.evaluations
        ));
    }
    lines.push(format!("uniform C {:.4e}, spread {:.3}, Cauchy decreasing {}", rep.uniform_c, rep.c_spread, rep.cauchy_decreasing));
    save_json(&out.join("construct_report.json"), &rep)?;
    Ok(lines)
}

fn verify(out: &Path) -> Result<Vec<String>> {
    let lab = Lab::new();
    let verdicts: Vec<Verdict> = run_all(&lab);
    save_json(&out.join("acceptance.json"), &verdicts)?;
    let passed = verdicts.iter().filter(|v| v.passed).count();
    let mut lines: Vec<String> = verdicts.iter().map(Verdict::line).collect();
    lines.push(format!("{passed}/{} criteria passed", verdicts.len()));
    Ok(lines)
}
