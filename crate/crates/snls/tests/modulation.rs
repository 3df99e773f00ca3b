mod common;

use std::f64::consts::PI;

use snls::grid::{h1_norm, inner_product, l2_norm, Field, C64, I};
use snls::ground_state::{soliton, SolitonParams};
use snls::modulation::{
    aminus_ode_residual, decompose, modulated_eigenfunction, modulated_profile, modulation_residual,
    overlap_decay, unstable_directions, ModulationState, ProfileBank,
};
use snls::solver::{evolve, SolverConfig};
use snls::Error;

fn pair() -> Vec<SolitonParams> {
    vec![SolitonParams::new(1.0, -1.0, 1.0, 0.2).unwrap(), SolitonParams::new(1.2, 1.0, -1.0, -0.4).unwrap()]
}

fn bank(params: &[SolitonParams]) -> ProfileBank {
    let (q, e) = common::small();
    ProfileBank::new(q, e, params).unwrap()
}

#[test]
fn modulated_profile_identities() {
    let (q, _) = common::small();
    let s = pair()[1];
    let g = *q.grid();
    let t = 3.0;
    assert_eq!(modulated_profile(s.alpha0, s.theta0, t, &s, q).unwrap(), soliton(&s, q, t, &g).unwrap());
    let a = modulated_profile(0.3, 1.1, t, &s, q).unwrap();
    let b = modulated_profile(0.3, 1.1 + 2.0 * PI, t, &s, q).unwrap();
    assert!((&a - &b).max_abs() <= 1e-14);
    let c = modulated_profile(-0.7, -2.0, t, &s, q).unwrap();
    assert!((l2_norm(&a) - l2_norm(&c)).abs() <= 1e-12);
    assert!(matches!(modulated_profile(0.0, 0.0, 40.0, &s, q), Err(Error::DomainExceeded { .. })));
    let bk = bank(&pair());
    assert!((&bk.profile(1, 0.3, 1.1, t).unwrap() - &a).max_abs() <= 1e-13);
}

#[test]
fn modulated_eigenfunction_identities() {
    let (q, e) = common::small();
    let unit = SolitonParams::new(1.0, 0.0, 0.0, 0.0).unwrap();
    let y = modulated_eigenfunction(true, 0.0, 0.0, 0.0, &unit, q, e).unwrap();
    assert!((&y - e.yplus()).max_abs() <= 1e-14);
    let s = SolitonParams::new(1.5, 0.5, 2.0, 0.3).unwrap();
    let p = 6.0;
    let yp = modulated_eigenfunction(true, 2.1, 0.4, 1.0, &s, q, e).unwrap();
    let ym = modulated_eigenfunction(false, 2.1, 0.4, 1.0, &s, q, e).unwrap();
    // ‖Y_w‖² = w^{1 - 4/(p-1)}
    assert!((l2_norm(&yp) - s.w.powf(0.5 - 2.0 / (p - 1.0))).abs() <= 1e-8);
    let g = *q.grid();
    let strip = Field::from_fn(g, |x| C64::from_polar(1.0, -s.phase(1.0, x, 0.4)));
    let a = (&yp * &strip).conj();
    let b = &ym * &strip;
    assert!((&a - &b).max_abs() <= 1e-14);
}

#[test]
fn exact_sums_decompose_exactly() {
    let params = pair();
    let bk = bank(&params);
    let t = 5.0;
    let alpha = [1.05, -0.97];
    let theta = [0.25, -0.35];
    let u = bk.sum_profiles(&alpha, &theta, t).unwrap();
    let st = decompose(&bk, &u, t, (&[1.0, -1.0], &[0.2, -0.4])).unwrap();
    for k in 0..2 {
        assert!((st.alpha[k] - alpha[k]).abs() <= 1e-10);
        assert!((st.theta[k] - theta[k]).abs() <= 1e-10);
        assert!(st.a_plus[k].abs() <= 1e-10 && st.a_minus[k].abs() <= 1e-10);
    }
    assert!(st.eps_h1 <= 1e-9);
    let back = st.reconstruct(&bk).unwrap();
    assert!(l2_norm(&(&back - &u)) <= 1e-12);
}

#[test]
fn orthogonality_and_reconstruction_invariants() {
    let params = pair();
    let bk = bank(&params);
    let g = *bk.grid();
    let t = 4.0;
    let bump = Field::from_fn(g, |x| C64::new((-(x - 2.0).powi(2)).exp(), 0.5 * (-(x + 3.0).powi(2)).exp()));
    let u = &bk.reference(t).unwrap() + &(&bump * 0.02);
    let (a0, t0) = bk.unmodulated();
    let st = decompose(&bk, &u, t, (&a0, &t0)).unwrap();
    let eps = st.epsilon().unwrap();
    let scale = 1e-10 * (1.0 + h1_norm(&u));
    for k in 0..2 {
        let r = bk.profile(k, st.alpha[k], st.theta[k], t).unwrap();
        let dr = snls::grid::derivative(&r, 1).unwrap();
        assert!(inner_product(&dr, eps).unwrap().re.abs() <= scale);
        assert!(inner_product(&r, eps).unwrap().im.abs() <= scale);
    }
    assert!(l2_norm(&(&u - &st.reconstruct(&bk).unwrap())) <= 1e-12);

    // idempotence and uniqueness
    let again = decompose(&bk, &st.reconstruct(&bk).unwrap(), t, (&st.alpha, &st.theta)).unwrap();
    let other = decompose(&bk, &u, t, (&[a0[0] + 0.05, a0[1] - 0.05], &[t0[0] - 0.05, t0[1] + 0.05])).unwrap();
    for k in 0..2 {
        assert!((again.alpha[k] - st.alpha[k]).abs() <= 1e-10 && (again.theta[k] - st.theta[k]).abs() <= 1e-10);
        assert!((other.alpha[k] - st.alpha[k]).abs() <= 1e-10 && (other.theta[k] - st.theta[k]).abs() <= 1e-10);
    }
    assert!(l2_norm(&(again.epsilon().unwrap() - eps)) <= 1e-10);

    let far = &u + &(&bump * 10.0);
    assert!(matches!(decompose(&bk, &far, t, (&a0, &t0)), Err(Error::OutOfBasin { .. })));
}

#[test]
fn eigen_perturbation_is_controlled() {
    let params = pair();
    let bk = bank(&params);
    let t = 6.0;
    let (a0, t0) = bk.unmodulated();
    let b = [6e-4, -4e-4, 5e-4, 5e-4];
    let bn = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut u = bk.reference(t).unwrap();
    for k in 0..2 {
        u.axpy(I * b[k], &bk.eigenfunction(k, true, a0[k], t0[k], t).unwrap());
        u.axpy(I * b[2 + k], &bk.eigenfunction(k, false, a0[k], t0[k], t).unwrap());
    }
    let st = decompose(&bk, &u, t, (&a0, &t0)).unwrap();
    let c = (st.eps_h1 + st.parameter_drift(&bk)) / bn;
    assert!(c <= 10.0, "{c}");
}

#[test]
fn phase_shift_matches_grid_search() {
    let params = vec![SolitonParams::new(1.0, 0.5, 0.0, 0.0).unwrap()];
    let bk = bank(&params);
    let t = 2.0;
    let delta = 1e-3;
    let r = bk.profile(0, 0.0, 0.0, t).unwrap();
    let bump = Field::from_real_fn(*bk.grid(), |x| (-(x - t * 0.5 - 0.3).powi(2)).exp());
    let u = &(&r + &(&r * (I * delta))) + &(&bump * 1e-3);
    let st = decompose(&bk, &u, t, (&[0.0], &[0.0])).unwrap();
    assert!((st.theta[0] - delta).abs() < 0.05 * delta + 1e-3 * 0.5);

    // brute-force minimisation of the orthogonality residuals
    let resid = |a: f64, th: f64| {
        let rr = bk.profile(0, a, th, t).unwrap();
        let e = &u - &rr;
        let dr = snls::grid::derivative(&rr, 1).unwrap();
        inner_product(&dr, &e).unwrap().re.powi(2) + inner_product(&rr, &e).unwrap().im.powi(2)
    };
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let h = 1e-4;
    for i in -20..=20 {
        for j in -20..=20 {
            let (a, th) = (st.alpha[0] + i as f64 * h, st.theta[0] + j as f64 * h);
            let v = resid(a, th);
            if v < best.0 {
                best = (v, a, th);
            }
        }
    }
    assert!((best.1 - st.alpha[0]).abs() <= h && (best.2 - st.theta[0]).abs() <= h);
}

#[test]
fn unstable_direction_quadrature() {
    let params = pair();
    let bk = bank(&params);
    let g = *bk.grid();
    let t = 3.0;
    let (a0, t0) = bk.unmodulated();
    let exact = bk.reference(t).unwrap();
    let st = decompose(&bk, &exact, t, (&a0, &t0)).unwrap();
    let (p0, m0) = unstable_directions(&bk, &st).unwrap();
    assert!(p0.iter().chain(&m0).all(|a| a.abs() <= 1e-10));

    let bump = Field::from_fn(g, |x| C64::new(0.3, 1.0) * (-(x - 3.5).powi(2)).exp());
    let st = decompose(&bk, &(&exact + &(&bump * 1e-3)), t, (&a0, &t0)).unwrap();
    let (ap, am) = unstable_directions(&bk, &st).unwrap();
    let fine = g.with_points(2 * g.n_points()).unwrap();
    for k in 0..2 {
        let yp = bk.eigenfunction(k, true, st.alpha[k], st.theta[k], t).unwrap();
        let eps = st.epsilon().unwrap();
        let (yf, ef) = (yp.resample(fine).unwrap(), eps.resample(fine).unwrap());
        let h = fine.spacing();
        let direct: f64 = yf.values().iter().zip(ef.values()).map(|(a, b)| (a * b.conj()).im).sum::<f64>() * h;
        assert!((direct - ap[k]).abs() <= 1e-12, "{direct} {}", ap[k]);
        // Ỹ⁻ from the conjugate of the stripped Ỹ⁺
        let s = params[k];
        let ph = Field::from_fn(g, |x| C64::from_polar(1.0, s.phase(t, x, st.theta[k])));
        let stripped = &yp * &ph.conj();
        let ym = &stripped.conj() * &ph;
        let via = inner_product(&ym, eps).unwrap().im;
        assert!((via - am[k]).abs() <= 1e-12);
    }
}

fn run_states(bk: &ProfileBank, u0: &Field, t1: f64, cadence: f64) -> Vec<ModulationState> {
    let cfg = SolverConfig::composed(2e-3, 6.0, 6);
    let mut states: Vec<ModulationState> = Vec::new();
    let (mut a, mut th) = bk.unmodulated();
    evolve(u0, 0.0, t1, None, &cfg, Some(cadence), &mut |t, u| {
        let st = decompose(bk, u, t, (&a, &th)).unwrap();
        a = st.alpha.clone();
        th = st.theta.clone();
        states.push(st.compact());
        true
    })
    .unwrap();
    states
}

#[test]
fn pure_soliton_has_constant_parameters() {
    let params = vec![SolitonParams::new(1.5, 0.5, -1.0, 0.0).unwrap()];
    let bk = bank(&params);
    let states = run_states(&bk, &bk.reference(0.0).unwrap(), 1.0, 0.1);
    let extra = vec![0.0; states.len()];
    let rep = modulation_residual(&states, &extra).unwrap();
    for (ad, td) in rep.alpha_dot.iter().zip(&rep.theta_dot) {
        assert!(ad[0].abs() <= 1e-6 && td[0].abs() <= 1e-6, "{ad:?} {td:?}");
    }
    let ode = aminus_ode_residual(&states, &bk, &extra).unwrap();
    for (p, m) in ode.residual_plus.iter().zip(&ode.residual_minus) {
        assert!(p[0] <= 1e-6 && m[0] <= 1e-6);
    }
    assert!(modulation_residual(&states[..2], &extra[..2]).is_err());
}

fn seeded_rate(plus: bool) -> (f64, f64) {
    let params = vec![SolitonParams::new(1.0, 0.0, 0.0, 0.0).unwrap()];
    let bk = bank(&params);
    let delta = 1e-5;
    let y = bk.eigenfunction(0, plus, 0.0, 0.0, 0.0).unwrap();
    let u0 = &bk.reference(0.0).unwrap() + &(&y * (I * delta));
    let states = run_states(&bk, &u0, 0.5, 0.05);
    let ts: Vec<f64> = states.iter().map(|s| s.t).collect();
    let ys: Vec<f64> = states
        .iter()
        .map(|s| if plus { s.a_plus[0] } else { s.a_minus[0] }.abs().ln())
        .collect();
    let (slope, _, _) = snls::ground_state::linear_fit(&ts, &ys).unwrap();
    (slope, bk.rate(0))
}

#[test]
fn seeded_unstable_directions_follow_the_eigen_ode() {
    let (minus, rate) = seeded_rate(false);
    assert!((minus + rate).abs() <= 0.1 * rate, "{minus} {rate}");
    let (plus, rate) = seeded_rate(true);
    assert!((plus - rate).abs() <= 0.1 * rate, "{plus} {rate}");
}

#[test]
fn soliton_overlap_decays() {
    let params = vec![SolitonParams::new(1.0, -1.0, 0.0, 0.0).unwrap(), SolitonParams::new(1.0, 1.0, 0.0, 0.0).unwrap()];
    let bk = bank(&params);
    let rate = overlap_decay(&bk, 0, 1, (5.0, 15.0), 21).unwrap();
    assert!(rate > 0.0);
}
