//! Experiment configuration (TOML) and the named presets.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::construction::{ShootingMethod, DEFAULT_ETA, DEFAULT_RADIUS};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::ground_state::SolitonParams;
use crate::noise::{NoiseCase, NoiseSpec, SpatialProfile, TemporalWeight};
use crate::solver::{Scheme, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_points: usize,
    pub half_length: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Channel {
    pub profile: SpatialProfile,
    pub weight: TemporalWeight,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub case: NoiseCase,
    pub channels: Vec<Channel>,
    /// Defaults to the smallest whole horizon meeting the tail contract.
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default = "default_noise_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    /// Seed ensemble for Monte Carlo runs; defaults to `[seed]`.
    #[serde(default)]
    pub seeds: Vec<u64>,
}

fn default_noise_dt() -> f64 {
    1e-3
}

impl NoiseSection {
    pub fn spec(&self) -> NoiseSpec {
        let weights: Vec<TemporalWeight> = self.channels.iter().map(|c| c.weight).collect();
        NoiseSpec {
            profiles: self.channels.iter().map(|c| c.profile).collect(),
            horizon: self.horizon.unwrap_or_else(|| NoiseSpec::minimal_horizon(&weights, 1.0)),
            weights,
            case: self.case,
            dt: self.dt,
        }
    }

    pub fn seed_list(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.seeds.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub dt: f64,
    #[serde(default = "default_order")]
    pub order: u32,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_cfl")]
    pub cfl_guard: f64,
}

fn default_order() -> u32 {
    6
}

fn default_scheme() -> Scheme {
    Scheme::StrangSplit
}

fn default_cfl() -> f64 {
    0.25
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructionSection {
    pub n_list: Vec<f64>,
    #[serde(rename = "T_floor")]
    pub t_floor: f64,
    #[serde(default = "default_slack")]
    pub slack: f64,
    /// Inferred from the soliton count when absent.
    #[serde(default)]
    pub method: Option<ShootingMethod>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_radius")]
    pub radius: f64,
}

fn default_slack() -> f64 {
    4.0
}

fn default_eta() -> f64 {
    DEFAULT_ETA
}

fn default_radius() -> f64 {
    DEFAULT_RADIUS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_cadence")]
    pub cadence: f64,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

fn default_cadence() -> f64 {
    0.1
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: default_directory(), cadence: default_cadence() }
    }
}

/// Forward-run window of the `evolve` subcommand.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveSection {
    pub t0: f64,
    pub t1: f64,
}

impl Default for EvolveSection {
    fn default() -> Self {
        Self { t0: 1.0, t1: 10.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub p: f64,
    pub grid: GridSection,
    pub solitons: Vec<SolitonParams>,
    #[serde(default)]
    pub noise: Option<NoiseSection>,
    pub solver: SolverSection,
    pub construction: ConstructionSection,
    #[serde(default)]
    pub evolve: EvolveSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn config_err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config { path: path.into(), message: message.into() }
}

fn positive(path: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(config_err(path, format!("must be positive and finite, got {x}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| config_err("<toml>", e.to_string().trim_end()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(path.display().to_string(), e.to_string()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 5.0 && self.p.is_finite()) {
            return Err(config_err("p", format!("must exceed 5, got {}", self.p)));
        }
        Grid::new(self.grid.n_points, self.grid.half_length).map_err(|e| config_err("grid", e.to_string()))?;
        if self.solitons.is_empty() {
            return Err(config_err("solitons", "at least one soliton is required"));
        }
        for (i, s) in self.solitons.iter().enumerate() {
            s.validate().map_err(|e| config_err(format!("solitons[{i}]"), e.to_string()))?;
            for j in 0..i {
                if self.solitons[j].v == s.v {
                    return Err(config_err(
                        format!("solitons[{i}].v"),
                        format!("velocity {} repeats solitons[{j}].v", s.v),
                    ));
                }
            }
        }
        let c = &self.construction;
        if c.n_list.is_empty() {
            return Err(config_err("construction.n_list", "must not be empty"));
        }
        for (i, w) in c.n_list.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(config_err(format!("construction.n_list[{}]", i + 1), "n_list must be increasing"));
            }
        }
        if !(c.t_floor >= 1.0) {
            return Err(config_err("construction.T_floor", format!("must be at least 1, got {}", c.t_floor)));
        }
        if !(c.n_list[0] > c.t_floor) {
            return Err(config_err("construction.n_list[0]", "every n must exceed T_floor"));
        }
        positive("construction.slack", c.slack)?;
        positive("construction.eta", c.eta)?;
        positive("construction.radius", c.radius)?;
        if let Some(m) = c.method {
            if ShootingMethod::for_count(self.solitons.len()).ok() != Some(m) {
                return Err(config_err(
                    "construction.method",
                    format!("{m:?} shooting does not apply to {} solitons", self.solitons.len()),
                ));
            }
        }
        positive("output.cadence", self.output.cadence)?;
        if !(self.evolve.t0 >= 1.0 && self.evolve.t1 > self.evolve.t0) {
            return Err(config_err("evolve", "need 1 ≤ t0 < t1"));
        }
        self.solver_config()
            .validate(&self.grid()?)
            .map_err(|e| config_err("solver", e.to_string()))?;
        if let Some(nz) = &self.noise {
            if nz.channels.is_empty() {
                return Err(config_err("noise.channels", "at least one channel is required"));
            }
            let spec = nz.spec();
            spec.validate().map_err(|e| config_err("noise", e.to_string()))?;
            let n_max = c.n_list[c.n_list.len() - 1];
            if n_max > spec.horizon {
                return Err(config_err(
                    "construction.n_list",
                    format!("n = {n_max} lies beyond the noise horizon {}", spec.horizon),
                ));
            }
            if self.evolve.t1 > spec.horizon {
                return Err(config_err("evolve.t1", format!("beyond the noise horizon {}", spec.horizon)));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.n_points, self.grid.half_length)
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig { dt: s.dt, scheme: s.scheme, cfl_guard: s.cfl_guard, p: self.p, order: s.order }
    }

    pub fn noise_spec(&self) -> Option<NoiseSpec> {
        self.noise.as_ref().map(NoiseSection::spec)
    }

    pub fn method(&self) -> Result<ShootingMethod> {
        match self.construction.method {
            Some(m) => Ok(m),
            None => ShootingMethod::for_count(self.solitons.len()),
        }
    }

    /// Replaces the noise seed; the ensemble collapses to that seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        if let Some(nz) = self.noise.as_mut() {
            nz.seed = seed;
            nz.seeds = vec![seed];
        }
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Deterministic2Sol,
    CaseI2Sol,
    CaseII2Sol,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Deterministic2Sol, Preset::CaseI2Sol, Preset::CaseII2Sol];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Deterministic2Sol => "deterministic-2sol",
            Self::CaseI2Sol => "caseI-2sol",
            Self::CaseII2Sol => "caseII-2sol",
        }
    }

    pub fn config(&self) -> ExperimentConfig {
        let pair = vec![
            SolitonParams { w: 2.0, v: -1.0, alpha0: -3.0, theta0: 0.0 },
            SolitonParams { w: 2.0, v: 1.0, alpha0: 3.0, theta0: 0.0 },
        ];
        let noise = match self {
            Self::Deterministic2Sol => None,
            Self::CaseI2Sol => Some(NoiseSection {
                case: NoiseCase::Exponential,
                channels: vec![Channel {
                    profile: SpatialProfile::Sech { c: 1.0, center: 0.0 },
                    weight: TemporalWeight::Exp { amp: 0.1, rate: 0.25 },
                }],
                horizon: None,
                dt: 1e-3,
                seed: 0,
                seeds: (0..5).collect(),
            }),
            Self::CaseII2Sol => {
                let weight = TemporalWeight::Poly { amp: 0.1, power: 2.0 };
                Some(NoiseSection {
                    case: NoiseCase::Polynomial { nu_star: 8.0 },
                    channels: vec![Channel { profile: SpatialProfile::Algebraic { nu: 8.0, center: 0.0 }, weight }],
                    horizon: Some(NoiseSpec::minimal_horizon(&[weight], 10.0)),
                    dt: 1e-3,
                    seed: 0,
                    seeds: (0..5).collect(),
                })
            }
        };
        ExperimentConfig {
            p: 6.0,
            grid: GridSection { n_points: 2048, half_length: 80.0 },
            solitons: pair,
            noise,
            solver: SolverSection { dt: 0.025, order: 6, scheme: Scheme::StrangSplit, cfl_guard: 0.25 },
            construction: ConstructionSection {
                n_list: vec![12.0, 16.0, 20.0],
                t_floor: 2.0,
                slack: 4.0,
                method: Some(ShootingMethod::Newton),
                eta: DEFAULT_ETA,
                radius: DEFAULT_RADIUS,
            },
            evolve: EvolveSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| config_err("--preset", format!("unknown preset `{s}`")))
    }
}
