//! Brownian rough paths, tail integrals and the coefficients of the rescaled
//! random equation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{Field, Grid, C64};

/// Largest admissible `∫_horizon^∞ g²`.
pub const TAIL_CONTRACT: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct BrownianPath {
    dt: f64,
    n_steps: usize,
    seed: u64,
    increments: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

impl BrownianPath {
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_channels(&self) -> usize {
        self.increments.len()
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn increments(&self, k: usize) -> &[f64] {
        &self.increments[k]
    }

    /// Path values `B_k(t_i)`, `i = 0..=n_steps`.
    pub fn values(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    /// Partition index of a time lying on the partition.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let x = t / self.dt;
        let i = x.round();
        if !(i >= 0.0 && i <= self.n_steps as f64) || (x - i).abs() > 1e-6 {
            return Err(invalid(format!("time {t} is not a partition point in [0, {}]", self.horizon())));
        }
        Ok(i as usize)
    }
}

pub fn sample_brownian(seed: u64, horizon: f64, dt: f64, n_channels: usize) -> Result<BrownianPath> {
    if !(dt > 0.0 && horizon > 0.0) {
        return Err(invalid("horizon and dt must be positive"));
    }
    let steps = horizon / dt;
    let n = steps.round();
    if (steps - n).abs() > 1e-9 * steps.max(1.0) || n < 1.0 {
        return Err(invalid(format!("horizon/dt = {steps} is not an integer")));
    }
    let n = n as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = dt.sqrt();
    let mut increments = vec![Vec::with_capacity(n); n_channels];
    for _ in 0..n {
        for inc in increments.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            inc.push(sd * z);
        }
    }
    let values = increments
        .iter()
        .map(|inc| {
            let mut v = Vec::with_capacity(n + 1);
            let mut acc = 0.0;
            v.push(0.0);
            for d in inc {
                acc += d;
                v.push(acc);
            }
            v
        })
        .collect();
    Ok(BrownianPath { dt, n_steps: n, seed, increments, values })
}

/// Itô enhancement stored as cumulative left-point areas
/// `A_jk(t_i) = Σ_{l<i} B_j(t_l) ΔB_k(l)`.
#[derive(Clone, Debug)]
pub struct RoughEnhancement {
    n_channels: usize,
    areas: Vec<Vec<f64>>,
}

impl RoughEnhancement {
    /// `𝔹_jk(s, t) = ∫_s^t (B_j(r) - B_j(s)) dB_k(r)` between partition indices.
    pub fn levy_area(&self, path: &BrownianPath, j: usize, k: usize, s: usize, t: usize) -> f64 {
        if t <= s + 1 {
            return 0.0;
        }
        let a = &self.areas[j * self.n_channels + k];
        let bj = path.values(j);
        let bk = path.values(k);
        a[t] - a[s] - bj[s] * (bk[t] - bk[s])
    }
}

pub fn ito_enhancement(path: &BrownianPath) -> RoughEnhancement {
    let m = path.n_channels();
    let mut areas = Vec::with_capacity(m * m);
    for j in 0..m {
        for k in 0..m {
            let bj = path.values(j);
            let dk = path.increments(k);
            let mut a = Vec::with_capacity(path.n_steps + 1);
            let mut acc = 0.0;
            a.push(0.0);
            for l in 0..path.n_steps {
                acc += bj[l] * dk[l];
                a.push(acc);
            }
            areas.push(a);
        }
    }
    RoughEnhancement { n_channels: m, areas }
}

/// Controlled integrand `g_k` with Gubinelli derivative `g'_{kj}` sampled on
/// the path partition.
#[derive(Clone, Debug)]
pub struct ControlledPath {
    pub g: Vec<Vec<f64>>,
    pub gubinelli_derivative: Vec<Vec<Vec<f64>>>,
}

impl ControlledPath {
    /// The path itself as integrand, so `g'_{kj} = δ_kj`.
    pub fn identity(path: &BrownianPath) -> Self {
        let m = path.n_channels();
        let n = path.n_steps + 1;
        let g = (0..m).map(|k| path.values(k).to_vec()).collect();
        let gp = (0..m)
            .map(|k| (0..m).map(|j| vec![if j == k { 1.0 } else { 0.0 }; n]).collect())
            .collect();
        Self { g, gubinelli_derivative: gp }
    }

    pub fn constant(path: &BrownianPath, value: f64) -> Self {
        let m = path.n_channels();
        let n = path.n_steps + 1;
        Self {
            g: vec![vec![value; n]; m],
            gubinelli_derivative: vec![vec![vec![0.0; n]; m]; m],
        }
    }

    /// Largest `|R(s,t)| / |t-s|^{2α}` over dyadic sub-intervals of the given
    /// length in steps, with `R = δg - g' δB`.
    pub fn remainder_ratio(&self, path: &BrownianPath, k: usize, span: usize, alpha: f64) -> f64 {
        let m = path.n_channels();
        let n = path.n_steps;
        let mut worst: f64 = 0.0;
        let mut s = 0;
        while s + span <= n {
            let t = s + span;
            let mut r = self.g[k][t] - self.g[k][s];
            for j in 0..m {
                r -= self.gubinelli_derivative[k][j][s] * (path.values(j)[t] - path.values(j)[s]);
            }
            worst = worst.max(r.abs() / (span as f64 * path.dt).powf(2.0 * alpha));
            s += span;
        }
        worst
    }
}

/// Compensated Riemann sum `Σ g_k δB_k + Σ_j g'_{kj} 𝔹_{jk}` over the stored
/// partition of `[s, t]`.
pub fn rough_integral(
    controlled: &ControlledPath,
    path: &BrownianPath,
    enhancement: &RoughEnhancement,
    interval: (f64, f64),
    channel: usize,
) -> Result<f64> {
    rough_integral_coarse(controlled, path, enhancement, interval, channel, 1)
}

/// Same sum on the sub-partition taking every `stride`-th point.
pub fn rough_integral_coarse(
    controlled: &ControlledPath,
    path: &BrownianPath,
    enhancement: &RoughEnhancement,
    interval: (f64, f64),
    channel: usize,
    stride: usize,
) -> Result<f64> {
    let (s, t) = interval;
    if !(s <= t) {
        return Err(invalid("interval must satisfy s <= t"));
    }
    if channel >= path.n_channels() || stride == 0 {
        return Err(invalid("channel or stride out of range"));
    }
    let i0 = path.index_of(s)?;
    let i1 = path.index_of(t)?;
    let m = path.n_channels();
    let bk = path.values(channel);
    let mut acc = 0.0;
    let mut l = i0;
    while l < i1 {
        let r = (l + stride).min(i1);
        acc += controlled.g[channel][l] * (bk[r] - bk[l]);
        for j in 0..m {
            let gp = controlled.gubinelli_derivative[channel][j][l];
            if gp != 0.0 {
                acc += gp * enhancement.levy_area(path, j, channel, l, r);
            }
        }
        l = r;
    }
    Ok(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TemporalWeight {
    /// `amp e^{-rate t}`
    Exp { amp: f64, rate: f64 },
    /// `amp (1+t)^{-power}`
    Poly { amp: f64, power: f64 },
    /// `amp e^{-rate t} (1 + kappa tanh B_k(t))`
    Controlled { amp: f64, rate: f64, kappa: f64 },
}

impl TemporalWeight {
    pub fn envelope(&self, t: f64) -> f64 {
        match *self {
            Self::Exp { amp, rate } => amp * (-rate * t).exp(),
            Self::Poly { amp, power } => amp * (1.0 + t).powf(-power),
            Self::Controlled { amp, rate, kappa } => amp * (1.0 + kappa.abs()) * (-rate * t).exp(),
        }
    }

    pub fn value(&self, t: f64, b: f64) -> f64 {
        match *self {
            Self::Controlled { amp, rate, kappa } => amp * (-rate * t).exp() * (1.0 + kappa * b.tanh()),
            _ => self.envelope(t),
        }
    }

    /// Gubinelli derivative with respect to the own channel.
    pub fn derivative(&self, t: f64, b: f64) -> f64 {
        match *self {
            Self::Controlled { amp, rate, kappa } => {
                amp * (-rate * t).exp() * kappa / b.cosh().powi(2)
            }
            _ => 0.0,
        }
    }

    /// `∫_t^∞ g²` (an upper bound in the controlled case).
    pub fn tail_l2(&self, t: f64) -> f64 {
        match *self {
            Self::Exp { amp, rate } | Self::Controlled { amp, rate, .. } => {
                let a = self.envelope(0.0).max(amp.abs());
                if rate <= 0.0 {
                    return if a == 0.0 { 0.0 } else { f64::INFINITY };
                }
                a * a * (-2.0 * rate * t).exp() / (2.0 * rate)
            }
            Self::Poly { amp, power } => {
                if power <= 0.5 {
                    return if amp == 0.0 { 0.0 } else { f64::INFINITY };
                }
                amp * amp * (1.0 + t).powf(1.0 - 2.0 * power) / (2.0 * power - 1.0)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Exp { amp, rate } => amp.is_finite() && rate > 0.0,
            Self::Poly { amp, power } => amp.is_finite() && power > 0.5,
            Self::Controlled { amp, rate, kappa } => amp.is_finite() && rate > 0.0 && kappa.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("temporal weight {self:?} is not square integrable")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpatialProfile {
    /// `sech(c (x - center))`
    Sech { c: f64, center: f64 },
    /// `(1 + (x - center)²)^{-nu/2}`
    Algebraic { nu: f64, center: f64 },
}

impl SpatialProfile {
    /// (φ, φ', φ'') at x.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        match *self {
            Self::Sech { c, center } => {
                let y = c * (x - center);
                let s = 1.0 / y.cosh();
                let th = y.tanh();
                (s, -c * s * th, c * c * s * (th * th - s * s))
            }
            Self::Algebraic { nu, center } => {
                let y = x - center;
                let r = 1.0 + y * y;
                let f = r.powf(-0.5 * nu);
                (f, -nu * y * f / r, -nu * f / r + nu * (nu + 2.0) * y * y * f / (r * r))
            }
        }
    }

    pub fn sample(&self, grid: &Grid, order: usize) -> Vec<f64> {
        grid.coords()
            .iter()
            .map(|&x| {
                let e = self.eval(x);
                match order {
                    0 => e.0,
                    1 => e.1,
                    _ => e.2,
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Sech { c, center } => c > 0.0 && center.is_finite(),
            Self::Algebraic { nu, center } => nu > 0.0 && center.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("spatial profile {self:?} is invalid")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseCase {
    /// Exponentially decaying profiles, `φ(x) = e^{-|x|}`.
    Exponential,
    /// Algebraically decaying profiles, `φ(x) = |x|^{-nu_star}`.
    Polynomial { nu_star: f64 },
}

impl NoiseCase {
    /// The decay function of the tube bounds.
    pub fn phi(&self, x: f64) -> f64 {
        match *self {
            Self::Exponential => (-x.abs()).exp(),
            Self::Polynomial { nu_star } => x.abs().powf(-nu_star),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub profiles: Vec<SpatialProfile>,
    pub weights: Vec<TemporalWeight>,
    pub case: NoiseCase,
    pub horizon: f64,
    pub dt: f64,
}

impl NoiseSpec {
    pub fn n_channels(&self) -> usize {
        self.profiles.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.profiles.len() != self.weights.len() {
            return Err(invalid("profiles and weights must have one entry per channel"));
        }
        if !(self.horizon > 0.0 && self.dt > 0.0) {
            return Err(invalid("horizon and dt must be positive"));
        }
        for p in &self.profiles {
            p.validate()?;
        }
        for w in &self.weights {
            w.validate()?;
        }
        if let NoiseCase::Polynomial { nu_star } = self.case {
            if !(nu_star >= 4.0) {
                return Err(invalid(format!("nu_star must be at least 4, got {nu_star}")));
            }
        }
        let tail = self.tail_beyond_horizon();
        if !(tail <= TAIL_CONTRACT) {
            return Err(Error::TruncationError { tail });
        }
        Ok(())
    }

    pub fn tail_beyond_horizon(&self) -> f64 {
        self.weights.iter().map(|w| w.tail_l2(self.horizon)).fold(0.0, f64::max)
    }

    /// Smallest horizon meeting the tail contract, rounded up to a multiple
    /// of `round_to`.
    pub fn minimal_horizon(weights: &[TemporalWeight], round_to: f64) -> f64 {
        let mut h = round_to;
        while weights.iter().any(|w| w.tail_l2(h) > TAIL_CONTRACT) {
            h += round_to;
        }
        h
    }

    pub fn spatial_profiles(&self, grid: &Grid) -> Vec<Field> {
        self.profiles
            .iter()
            .map(|p| Field::from_real(*grid, &p.sample(grid, 0)).expect("finite profile"))
            .collect()
    }

    /// Stratonovich correction `μ = ½ Σ φ_k² g_k²` for deterministic weights.
    pub fn stratonovich_correction(&self, t: f64, grid: &Grid) -> Vec<f64> {
        let mut mu = vec![0.0; grid.n_points()];
        for (p, w) in self.profiles.iter().zip(&self.weights) {
            let g = w.envelope(t);
            for (m, f) in mu.iter_mut().zip(p.sample(grid, 0)) {
                *m += 0.5 * f * f * g * g;
            }
        }
        mu
    }

    /// `max x² (|φ'| + |φ''|)` over the outer tenth of the domain.
    pub fn edge_flatness(&self, grid: &Grid) -> f64 {
        let l = grid.half_length();
        let mut worst: f64 = 0.0;
        for p in &self.profiles {
            for x in grid.coords() {
                if x.abs() >= 0.9 * l {
                    let (_, a, b) = p.eval(x);
                    worst = worst.max(x * x * (a.abs() + b.abs()));
                }
            }
        }
        worst
    }

    /// Fitted decay of `Σ_ν |∂^ν φ_k|` on `|x| ∈ [5, L-5]`: the exponential
    /// rate (Case I) or the algebraic exponent (Case II), minimized over k.
    pub fn profile_decay(&self, grid: &Grid) -> Result<f64> {
        let l = grid.half_length();
        let mut best = f64::INFINITY;
        for p in &self.profiles {
            let center = match *p {
                SpatialProfile::Sech { center, .. } | SpatialProfile::Algebraic { center, .. } => center,
            };
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for x in grid.coords() {
                let r = (x - center).abs();
                if r >= 5.0 && x.abs() <= l - 5.0 {
                    let (a, b, c) = p.eval(x);
                    let s = a.abs() + b.abs() + c.abs();
                    if s > 1e-300 {
                        xs.push(match self.case {
                            NoiseCase::Exponential => r,
                            NoiseCase::Polynomial { .. } => r.ln(),
                        });
                        ys.push(s.ln());
                    }
                }
            }
            let (slope, _, _) = crate::ground_state::linear_fit(&xs, &ys)?;
            best = best.min(-slope);
        }
        Ok(best)
    }
}

/// Fitted `c*` with `G log(1/G) ≤ c*/t²` on `[t_min, t_max]`, `G = ∫_t^∞ g²`,
/// sampled on a geometric grid and inflated by 0.1%.
pub fn tail_log_constant(weight: &TemporalWeight, t_min: f64, t_max: f64) -> f64 {
    let n = 20000;
    let ratio = (t_max / t_min).ln();
    let mut c: f64 = 0.0;
    for i in 0..=n {
        let t = t_min * (ratio * i as f64 / n as f64).exp();
        let g = weight.tail_l2(t);
        if g > 0.0 && g < 1.0 {
            c = c.max(t * t * g * (1.0 / g).ln());
        }
    }
    c * 1.001
}

/// A sampled noise realization with its tail processes.
#[derive(Clone, Debug)]
pub struct NoiseRealization {
    spec: NoiseSpec,
    path: BrownianPath,
    enhancement: RoughEnhancement,
    controlled: ControlledPath,
    tails: Vec<Vec<f64>>,
    b_star: Vec<f64>,
    sigma_hat: f64,
}

/// Tail integrals `B_{*,k}(t_i)` and `B*(t_i)` together with σ̂.
pub fn tail_processes(spec: &NoiseSpec, path: &BrownianPath) -> Result<(Vec<Vec<f64>>, Vec<f64>, f64)> {
    let tail = spec.tail_beyond_horizon();
    if !(tail <= TAIL_CONTRACT) {
        return Err(Error::TruncationError { tail });
    }
    let controlled = controlled_weights(spec, path);
    Ok(tails_from(&controlled, path))
}

fn controlled_weights(spec: &NoiseSpec, path: &BrownianPath) -> ControlledPath {
    let m = path.n_channels();
    let n = path.n_steps + 1;
    let mut g = Vec::with_capacity(m);
    let mut gp = Vec::with_capacity(m);
    for k in 0..m {
        let w = spec.weights[k];
        let b = path.values(k);
        g.push((0..n).map(|i| w.value(path.time(i), b[i])).collect::<Vec<f64>>());
        let mut row = vec![vec![0.0; n]; m];
        row[k] = (0..n).map(|i| w.derivative(path.time(i), b[i])).collect();
        gp.push(row);
    }
    ControlledPath { g, gubinelli_derivative: gp }
}

fn tails_from(controlled: &ControlledPath, path: &BrownianPath) -> (Vec<Vec<f64>>, Vec<f64>, f64) {
    let m = path.n_channels();
    let n = path.n_steps;
    let mut tails = Vec::with_capacity(m);
    for k in 0..m {
        let inc = path.increments(k);
        let g = &controlled.g[k];
        let mut t = vec![0.0; n + 1];
        for i in (0..n).rev() {
            t[i] = t[i + 1] + g[i] * inc[i];
        }
        tails.push(t);
    }
    let mut b_star = vec![0.0; n + 1];
    let mut run: f64 = 0.0;
    for i in (0..=n).rev() {
        let s: f64 = tails.iter().map(|t| t[i].abs()).sum();
        run = run.max(s);
        b_star[i] = run;
    }
    let first = b_star.iter().position(|&b| b <= 1.0).unwrap_or(n);
    (tails, b_star, path.time(first))
}

impl NoiseRealization {
    pub fn sample(spec: NoiseSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let path = sample_brownian(seed, spec.horizon, spec.dt, spec.n_channels())?;
        let enhancement = ito_enhancement(&path);
        let controlled = controlled_weights(&spec, &path);
        let (tails, b_star, sigma_hat) = tails_from(&controlled, &path);
        Ok(Self { spec, path, enhancement, controlled, tails, b_star, sigma_hat })
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn path(&self) -> &BrownianPath {
        &self.path
    }

    pub fn enhancement(&self) -> &RoughEnhancement {
        &self.enhancement
    }

    pub fn controlled(&self) -> &ControlledPath {
        &self.controlled
    }

    pub fn horizon(&self) -> f64 {
        self.path.horizon()
    }

    pub fn seed(&self) -> u64 {
        self.path.seed
    }

    /// First time after which B* stays below one.
    pub fn sigma_hat(&self) -> f64 {
        self.sigma_hat
    }

    pub fn tails(&self, k: usize) -> &[f64] {
        &self.tails[k]
    }

    pub fn b_star_samples(&self) -> &[f64] {
        &self.b_star
    }

    fn interp(&self, arr: &[f64], t: f64) -> f64 {
        let n = self.path.n_steps;
        if t >= self.horizon() {
            return 0.0;
        }
        let x = (t.max(0.0)) / self.path.dt;
        let i = (x.floor() as usize).min(n - 1);
        let f = x - i as f64;
        arr[i] * (1.0 - f) + arr[i + 1] * f
    }

    /// `B_{*,k}(t)`, linear between partition points.
    pub fn tail_at(&self, k: usize, t: f64) -> f64 {
        self.interp(&self.tails[k], t)
    }

    pub fn b_star(&self, t: f64) -> f64 {
        self.interp(&self.b_star, t)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0 && t <= self.horizon() + 1e-12) {
            return Err(invalid(format!("time {t} outside the noise horizon {}", self.horizon())));
        }
        Ok(())
    }

    /// Real ψ with `W* = -iψ`, i.e. `ψ = Σ φ_k B_{*,k}(t)`, and its first two
    /// derivatives.
    pub fn phase_profile(&self, t: f64, grid: &Grid) -> [Vec<f64>; 3] {
        let n = grid.n_points();
        let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for (k, p) in self.spec.profiles.iter().enumerate() {
            let b = self.tail_at(k, t);
            if b == 0.0 {
                continue;
            }
            for (j, x) in grid.coords().into_iter().enumerate() {
                let (a, d, dd) = p.eval(x);
                out[0][j] += a * b;
                out[1][j] += d * b;
                out[2][j] += dd * b;
            }
        }
        out
    }

    pub fn phase_field_w(&self, t: f64, grid: &Grid) -> Result<Field> {
        self.check_time(t)?;
        let [psi, _, _] = self.phase_profile(t, grid);
        Field::new(*grid, psi.iter().map(|&a| C64::new(0.0, -a)).collect())
    }

    /// `b* = 2∂W*` and `c* = (∂W*)² + ∂²W*`.
    pub fn coefficients(&self, t: f64, grid: &Grid) -> Result<(Field, Field)> {
        self.check_time(t)?;
        let [_, d, dd] = self.phase_profile(t, grid);
        let b = Field::new(*grid, d.iter().map(|&a| C64::new(0.0, -2.0 * a)).collect())?;
        let c = Field::new(*grid, d.iter().zip(&dd).map(|(&a, &s)| C64::new(-a * a, -s)).collect())?;
        Ok((b, c))
    }

    /// `sup t·B*(t)` over `[t0, t1]`.
    pub fn weighted_tail_sup(&self, t0: f64, t1: f64) -> f64 {
        let mut best: f64 = 0.0;
        for (i, &b) in self.b_star.iter().enumerate() {
            let t = self.path.time(i);
            if t >= t0 && t <= t1 {
                best = best.max(t * b);
            }
        }
        best
    }
}

pub fn phase_field_w(noise: &NoiseRealization, t: f64, grid: &Grid) -> Result<Field> {
    noise.phase_field_w(t, grid)
}

pub fn coefficients(noise: &NoiseRealization, t: f64, grid: &Grid) -> Result<(Field, Field)> {
    noise.coefficients(t, grid)
}
