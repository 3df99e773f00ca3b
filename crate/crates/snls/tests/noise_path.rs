use snls::grid::{derivative, Grid};
use snls::noise::{
    ito_enhancement, rough_integral, rough_integral_coarse, sample_brownian, tail_log_constant,
    tail_processes, ControlledPath, NoiseCase, NoiseRealization, NoiseSpec, SpatialProfile,
    TemporalWeight,
};

fn case_one(amp: f64) -> NoiseSpec {
    let w = vec![TemporalWeight::Exp { amp, rate: 0.25 }];
    NoiseSpec {
        profiles: vec![SpatialProfile::Sech { c: 1.0, center: 0.0 }],
        horizon: NoiseSpec::minimal_horizon(&w, 1.0),
        weights: w,
        case: NoiseCase::Exponential,
        dt: 1e-3,
    }
}

#[test]
fn brownian_is_reproducible() {
    let a = sample_brownian(7, 2.0, 1e-3, 2).unwrap();
    let b = sample_brownian(7, 2.0, 1e-3, 2).unwrap();
    for k in 0..2 {
        assert_eq!(a.increments(k), b.increments(k));
        assert_eq!(a.values(k), b.values(k));
    }
    let c = sample_brownian(8, 2.0, 1e-3, 2).unwrap();
    assert_ne!(a.increments(0), c.increments(0));
    assert!(sample_brownian(1, 1.0, 0.3, 1).is_err());
}

#[test]
fn brownian_moments_over_many_seeds() {
    let horizon = 1.0;
    let m = 10_000;
    let ends: Vec<f64> = (0..m)
        .map(|s| *sample_brownian(s, horizon, 0.01, 1).unwrap().values(0).last().unwrap())
        .collect();
    let mean = ends.iter().sum::<f64>() / m as f64;
    let var = ends.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    assert!(mean.abs() <= 4.0 * (horizon / m as f64).sqrt());
    assert!((var - horizon).abs() <= 0.1 * horizon);
}

#[test]
fn ito_area_has_zero_mean() {
    let m = 10_000;
    let t = 1.0;
    let vals: Vec<f64> = (0..m)
        .map(|s| {
            let p = sample_brownian(s, t, 0.01, 1).unwrap();
            ito_enhancement(&p).levy_area(&p, 0, 0, 0, p.n_steps())
        })
        .collect();
    let mean = vals.iter().sum::<f64>() / m as f64;
    // Var ∫B dB = t²/2
    assert!(mean.abs() <= 4.0 * (t * t / 2.0 / m as f64).sqrt());
}

#[test]
fn chen_relation_and_single_steps() {
    let p = sample_brownian(3, 5.0, 1e-3, 2).unwrap();
    let e = ito_enhancement(&p);
    let n = p.n_steps();
    let mut worst: f64 = 0.0;
    for s in (0..n - 2).step_by(37) {
        let u = s + 1 + (s * 7) % (n - s - 1).max(1);
        let u = u.min(n - 1);
        let t = (u + 1 + (s * 13) % (n - u)).min(n);
        for j in 0..2 {
            for k in 0..2 {
                let lhs = e.levy_area(&p, j, k, s, t);
                let dj = p.values(j)[u] - p.values(j)[s];
                let dk = p.values(k)[t] - p.values(k)[u];
                let rhs = e.levy_area(&p, j, k, s, u) + e.levy_area(&p, j, k, u, t) + dj * dk;
                worst = worst.max((lhs - rhs).abs());
            }
        }
    }
    assert!(worst <= 1e-12, "{worst}");
    for i in [0, 10, n - 1] {
        assert_eq!(e.levy_area(&p, 0, 1, i, i + 1), 0.0);
    }
}

#[test]
fn rough_integrals() {
    let p = sample_brownian(11, 1.0, 1e-4, 1).unwrap();
    let e = ito_enhancement(&p);
    let one = ControlledPath::constant(&p, 1.0);
    let v = rough_integral(&one, &p, &e, (0.2, 0.7), 0).unwrap();
    let b = p.values(0);
    assert!((v - (b[7000] - b[2000])).abs() < 1e-14);
    assert!(rough_integral(&one, &p, &e, (0.2, 1.5), 0).is_err());

    // compensated coarse sums reproduce the fine Itô sum
    let id = ControlledPath::identity(&p);
    let fine = rough_integral(&id, &p, &e, (0.0, 1.0), 0).unwrap();
    let coarse = rough_integral_coarse(&id, &p, &e, (0.0, 1.0), 0, 4).unwrap();
    assert!((fine - coarse).abs() < 1e-12);
}

#[test]
fn ito_formula_over_seeds() {
    let t = 0.01;
    let m = 100;
    let mut mae = 0.0;
    let mut strat = 0.0;
    for s in 0..m {
        let p = sample_brownian(1000 + s, t, 1e-4, 1).unwrap();
        let e = ito_enhancement(&p);
        let id = ControlledPath::identity(&p);
        let v = rough_integral(&id, &p, &e, (0.0, t), 0).unwrap();
        let bt = *p.values(0).last().unwrap();
        mae += (v - 0.5 * (bt * bt - t)).abs() / m as f64;
        strat += (v - 0.5 * bt * bt).abs() / m as f64;
    }
    assert!(mae <= 1e-3, "{mae}");
    assert!(strat > 1e-3);
}

#[test]
fn refinement_of_uncompensated_sums() {
    let t = 1.0;
    let m = 50;
    let mut change = 0.0;
    let mut est = 0.0;
    for s in 0..m {
        let p = sample_brownian(500 + s, t, 1e-4, 1).unwrap();
        let e = ito_enhancement(&p);
        let id = ControlledPath::identity(&p);
        let fine = rough_integral(&id, &p, &e, (0.0, t), 0).unwrap();
        let mut plain = id.clone();
        plain.gubinelli_derivative[0][0].iter_mut().for_each(|a| *a = 0.0);
        let coarse = rough_integral_coarse(&plain, &p, &e, (0.0, t), 0, 4).unwrap();
        let bt = *p.values(0).last().unwrap();
        change += (fine - coarse).abs() / m as f64;
        est += (coarse - 0.5 * (bt * bt - t)).abs() / m as f64;
    }
    assert!(change <= 2.0 * est, "{change} {est}");
}

#[test]
fn controlled_remainder_is_reported() {
    let mut spec = case_one(0.1);
    spec.weights = vec![TemporalWeight::Controlled { amp: 0.1, rate: 0.25, kappa: 0.5 }];
    spec.horizon = NoiseSpec::minimal_horizon(&spec.weights, 1.0);
    let r = NoiseRealization::sample(spec, 4).unwrap();
    let c = r.controlled();
    let small = c.remainder_ratio(r.path(), 0, 16, 0.45);
    let large = c.remainder_ratio(r.path(), 0, 256, 0.45);
    assert!(small.is_finite() && large.is_finite());
}

#[test]
fn tails_and_running_sup() {
    let spec = case_one(0.2);
    let r = NoiseRealization::sample(spec.clone(), 5).unwrap();
    let n = r.path().n_steps();
    assert_eq!(r.tails(0)[n], 0.0);
    let b = r.path().values(0);
    let g = &r.controlled().g[0];
    let total: f64 = (0..n).map(|i| g[i] * (b[i + 1] - b[i])).sum();
    let mut prefix = 0.0;
    for i in 0..n {
        if i % 997 == 0 {
            assert!((r.tails(0)[i] - (total - prefix)).abs() < 1e-12);
        }
        prefix += g[i] * (b[i + 1] - b[i]);
    }
    let bs = r.b_star_samples();
    assert!(bs.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(bs[n], 0.0);
    assert!(r.b_star(r.sigma_hat()) <= 1.0);

    let zero = case_one(0.0);
    let (tails, bstar, _) = tail_processes(&zero, r.path()).unwrap();
    assert!(tails[0].iter().all(|&a| a == 0.0) && bstar.iter().all(|&a| a == 0.0));

    let mut short = case_one(0.2);
    short.horizon = 5.0;
    assert!(tail_processes(&short, r.path()).is_err());
}

#[test]
fn phase_field_and_coefficients() {
    let g = Grid::new(1024, 40.0).unwrap();
    let r = NoiseRealization::sample(case_one(0.3), 9).unwrap();
    for t in [0.0, 1.3, 7.0] {
        let w = r.phase_field_w(t, &g).unwrap();
        assert!(w.values().iter().all(|z| z.re == 0.0));
        let ew = w.map(|z| (-z).exp());
        assert!(ew.values().iter().all(|z| (z.norm() - 1.0).abs() <= 1e-14));
        let (b, c) = r.coefficients(t, &g).unwrap();
        let dw = derivative(&w, 1).unwrap();
        assert!((&b - &(&dw * 2.0)).max_abs() <= 1e-10);
        assert!(c.values().iter().all(|z| z.re <= 0.0));
    }
    let end = r.horizon();
    assert_eq!(r.phase_field_w(end, &g).unwrap().max_abs(), 0.0);
    assert!(r.phase_field_w(end + 1.0, &g).is_err());
    let z = NoiseRealization::sample(case_one(0.0), 1).unwrap();
    let (b, c) = z.coefficients(0.5, &g).unwrap();
    assert_eq!(b.max_abs() + c.max_abs(), 0.0);
}

#[test]
fn assumption_validators() {
    let g = Grid::new(2048, 60.0).unwrap();
    let one = case_one(0.1);
    assert!(one.edge_flatness(&g) < 1e-10);
    assert!(one.profile_decay(&g).unwrap() > 0.9);
    let w = TemporalWeight::Poly { amp: 1.0, power: 2.0 };
    let two = NoiseSpec {
        profiles: vec![SpatialProfile::Algebraic { nu: 8.0, center: 0.0 }],
        weights: vec![w],
        case: NoiseCase::Polynomial { nu_star: 8.0 },
        horizon: NoiseSpec::minimal_horizon(&[w], 10.0),
        dt: 1e-2,
    };
    two.validate().unwrap();
    assert!(two.edge_flatness(&g) < 1e-8);
    assert!(two.profile_decay(&g).unwrap() >= 8.0 * 0.95);
    let c = tail_log_constant(&w, 2.0, two.horizon);
    for i in 0..500 {
        let t = 2.0 + i as f64 * 0.7;
        let gt = w.tail_l2(t);
        assert!(gt * (1.0 / gt).ln() <= c / (t * t));
    }
}
