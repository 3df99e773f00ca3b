use snls::grid::{derivative, h1_norm, l2_norm, mass, Field, Grid, C64, I};
use snls::ground_state::{rescale, soliton, solve_ground_state, GroundState, SolitonParams};
use snls::noise::{NoiseCase, NoiseRealization, NoiseSpec, SpatialProfile, TemporalWeight};
use snls::solver::{evolve, rhs, step, to_physical, Integrator, Scheme, SolverConfig};

fn ground(n: usize, l: f64) -> GroundState {
    solve_ground_state(6.0, Grid::new(n, l).unwrap(), 1e-9).unwrap()
}

fn case_one(amp: f64, seed: u64) -> NoiseRealization {
    let w = vec![TemporalWeight::Exp { amp, rate: 0.25 }];
    let spec = NoiseSpec {
        profiles: vec![SpatialProfile::Sech { c: 1.0, center: 0.0 }],
        horizon: NoiseSpec::minimal_horizon(&w, 1.0),
        weights: w,
        case: NoiseCase::Exponential,
        dt: 1e-3,
    };
    NoiseRealization::sample(spec, seed).unwrap()
}

fn single_soliton_error(q: &GroundState, dt: f64, t1: f64) -> (f64, f64) {
    let g = *q.grid();
    let s = SolitonParams::new(2.0, 1.0, 0.0, 0.0).unwrap();
    let u0 = soliton(&s, q, 0.0, &g).unwrap();
    let cfg = SolverConfig::strang(dt, 6.0);
    let u = evolve(&u0, 0.0, t1, None, &cfg, None, &mut |_, _| true).unwrap();
    let exact = soliton(&s, q, t1, &g).unwrap();
    (h1_norm(&(&u - &exact)), (mass(&u) - mass(&u0)).abs())
}

#[test]
fn rhs_matches_soliton_time_derivative() {
    let q = ground(2048, 60.0);
    let g = *q.grid();
    let s = SolitonParams::new(1.4, 0.8, -3.0, 0.3).unwrap();
    let t = 2.0;
    let r = soliton(&s, &q, t, &g).unwrap();
    let qw = rescale(&q, s.w).unwrap().shifted(s.center(t));
    let dq = derivative(&qw, 1).unwrap();
    let vals: Vec<C64> = (0..g.n_points())
        .map(|j| {
            let ph = C64::from_polar(1.0, s.phase(t, g.x(j), s.theta0));
            let a = qw.values()[j].re * (-0.25 * s.v * s.v + 1.0 / (s.w * s.w));
            (-s.v * dq.values()[j].re + I * a) * ph
        })
        .collect();
    let exact = Field::new(g, vals).unwrap();
    let got = rhs(&r, t, None, 6.0).unwrap();
    assert!(h1_norm(&(&got - &exact)) <= 1e-6, "{}", h1_norm(&(&got - &exact)));
    let z = Field::zeros(g);
    assert_eq!(rhs(&z, 0.0, None, 6.0).unwrap().max_abs(), 0.0);
    let th = C64::from_polar(1.0, 0.7);
    let a = rhs(&(&r * th), t, None, 6.0).unwrap();
    let b = &rhs(&r, t, None, 6.0).unwrap() * th;
    assert!((&a - &b).max_abs() < 1e-10);
}

#[test]
fn step_is_reversible_and_mass_preserving() {
    let q = ground(1024, 40.0);
    let g = *q.grid();
    let s = SolitonParams::new(1.0, 0.5, 0.0, 0.0).unwrap();
    let u = soliton(&s, &q, 0.0, &g).unwrap();
    let cfg = SolverConfig::strang(0.01, 6.0);
    let f = step(&u, 0.0, 0.01, None, &cfg).unwrap();
    let b = step(&f, 0.01, -0.01, None, &cfg).unwrap();
    assert!(h1_norm(&(&b - &u)) <= 1e-10);
    assert!((mass(&f) - mass(&u)).abs() <= 1e-10);
    assert!(step(&u, 0.0, 0.02, None, &cfg).is_err());
}

#[test]
fn round_trip_over_five_units() {
    let q = ground(1024, 40.0);
    let g = *q.grid();
    let s = SolitonParams::new(1.0, 0.5, -2.0, 0.0).unwrap();
    let u = soliton(&s, &q, 0.0, &g).unwrap();
    let cfg = SolverConfig::strang(0.01, 6.0);
    let f = evolve(&u, 0.0, 5.0, None, &cfg, None, &mut |_, _| true).unwrap();
    let b = evolve(&f, 5.0, 0.0, None, &cfg, None, &mut |_, _| true).unwrap();
    assert!(h1_norm(&(&b - &u)) <= 1e-6);
}

#[test]
fn single_soliton_accuracy_and_order() {
    let q = ground(2048, 60.0);
    let (e1, m1) = single_soliton_error(&q, 1e-3, 10.0);
    let (e2, _) = single_soliton_error(&q, 5e-4, 10.0);
    assert!(e2 <= 1e-4, "{e2}");
    assert!(m1 <= 1e-8);
    assert!(e1 / e2 >= 3.5);
}

#[test]
fn mass_with_noise_and_two_solitons() {
    let q = ground(1024, 40.0);
    let g = *q.grid();
    let nz = case_one(0.3, 2);
    let a = SolitonParams::new(1.0, -1.0, -3.0, 0.0).unwrap();
    let b = SolitonParams::new(1.0, 1.0, 3.0, 0.0).unwrap();
    let u0 = &soliton(&a, &q, 0.0, &g).unwrap() + &soliton(&b, &q, 0.0, &g).unwrap();
    let cfg = SolverConfig::strang(0.005, 6.0);
    let m0 = mass(&u0);
    let u1 = evolve(&u0, 0.0, 1.0, Some(&nz), &cfg, None, &mut |_, _| true).unwrap();
    assert!((mass(&u1) - m0).abs() <= 1e-8);
    let u2 = evolve(&u0, 0.0, 10.0, None, &cfg, None, &mut |_, _| true).unwrap();
    assert!((mass(&u2) - m0).abs() <= 1e-8);
}

#[test]
fn rk4_agrees_with_strang_on_short_runs() {
    let q = ground(1024, 30.0);
    let g = *q.grid();
    let s = SolitonParams::new(1.0, 0.5, 0.0, 0.0).unwrap();
    let u = soliton(&s, &q, 0.0, &g).unwrap();
    let h2 = g.spacing().powi(2);
    let rk = SolverConfig { dt: 0.2 * h2, scheme: Scheme::Rk4Spectral, cfl_guard: 0.25, p: 6.0, order: 2 };
    let bad = SolverConfig { dt: 0.5 * h2, ..rk };
    assert!(Integrator::new(g, bad, None).is_err());
    let a = evolve(&u, 0.0, 0.5, None, &rk, None, &mut |_, _| true).unwrap();
    let exact = soliton(&s, &q, 0.5, &g).unwrap();
    assert!(h1_norm(&(&a - &exact)) < 1e-6);
}

#[test]
fn physical_transform() {
    let q = ground(1024, 40.0);
    let g = *q.grid();
    let s = SolitonParams::new(1.0, 0.5, 2.0, 0.0).unwrap();
    let u = soliton(&s, &q, 0.0, &g).unwrap();
    assert_eq!(to_physical(&u, None, 1.0).unwrap(), u);
    let nz = case_one(0.5, 3);
    let mut ratio: f64 = 0.0;
    for t in [0.0, 2.0, 5.0] {
        let x = to_physical(&u, Some(&nz), t).unwrap();
        assert!((l2_norm(&x) - l2_norm(&u)).abs() <= 1e-12);
        for (a, b) in x.values().iter().zip(u.values()) {
            assert!((a.norm() - b.norm()).abs() <= 1e-14);
        }
        let w = nz.phase_field_w(t, &g).unwrap().max_abs();
        if w > 0.0 {
            ratio = ratio.max(h1_norm(&(&x - &u)) / (w * (1.0 + l2_norm(&derivative(&u, 1).unwrap()))));
        }
    }
    assert!(ratio.is_finite() && ratio < 10.0);
}

#[test]
fn composition_raises_the_order() {
    let q = ground(1024, 40.0);
    let g = *q.grid();
    let s = SolitonParams::new(1.0, 1.0, -2.0, 0.0).unwrap();
    let u0 = soliton(&s, &q, 0.0, &g).unwrap();
    let exact = soliton(&s, &q, 1.0, &g).unwrap();
    let err = |cfg: SolverConfig| {
        let u = evolve(&u0, 0.0, 1.0, None, &cfg, None, &mut |_, _| true).unwrap();
        h1_norm(&(&u - &exact))
    };
    let a = err(SolverConfig::composed(0.01, 6.0, 4));
    let b = err(SolverConfig::composed(0.005, 6.0, 4));
    assert!(a / b > 12.0, "{}", a / b);
    let c = err(SolverConfig::composed(0.01, 6.0, 6));
    assert!(c < a);
    let f = evolve(&u0, 0.0, 0.5, None, &SolverConfig::composed(0.01, 6.0, 6), None, &mut |_, _| true).unwrap();
    let back = evolve(&f, 0.5, 0.0, None, &SolverConfig::composed(0.01, 6.0, 6), None, &mut |_, _| true).unwrap();
    assert!(h1_norm(&(&back - &u0)) <= 1e-10);
    assert!((mass(&f) - mass(&u0)).abs() <= 1e-10);
    assert!(SolverConfig::composed(0.01, 6.0, 3).validate(&g).is_err());
}
