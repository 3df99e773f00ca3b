use std::f64::consts::PI;

use snls::grid::{derivative, inner_product, mass, norm, Field, Grid, NormKind, C64};
use snls::ground_state::{
    closed_form, rescale, rescaled_residual, soliton, solve_ground_state, SolitonParams,
};

fn sup(f: &Field, g: &Field) -> f64 {
    (f - g).max_abs()
}

#[test]
fn derivative_of_band_limited_sine_is_exact() {
    let g = Grid::new(256, 7.0).unwrap();
    let l = g.half_length();
    let f = Field::from_real_fn(g, |x| (PI * x / l).sin());
    let df = derivative(&f, 1).unwrap();
    let exact = Field::from_real_fn(g, |x| PI / l * (PI * x / l).cos());
    assert!(sup(&df, &exact) < 1e-13);
    let c = Field::from_real_fn(g, |_| 3.5);
    assert!(derivative(&c, 1).unwrap().max_abs() < 1e-14);
    assert!(derivative(&c, 3).is_err());
}

#[test]
fn second_derivative_matches_finite_differences() {
    let g = Grid::new(1024, 20.0).unwrap();
    let f = Field::from_real_fn(g, |x| (-x * x).exp());
    let d2 = derivative(&f, 2).unwrap();
    let h = 1e-3;
    let fd = Field::from_real_fn(g, |x| {
        let e = |y: f64| (-y * y).exp();
        (e(x + h) - 2.0 * e(x) + e(x - h)) / (h * h)
    });
    assert!(sup(&d2, &fd) < 1e-6);
    let dd = derivative(&derivative(&f, 1).unwrap(), 1).unwrap();
    assert!(sup(&dd, &d2) < 1e-10);
}

#[test]
fn inner_product_oracles() {
    let g = Grid::new(1024, 20.0).unwrap();
    let l = g.half_length();
    let gauss = Field::from_real_fn(g, |x| (-x * x).exp());
    let v = inner_product(&gauss, &gauss).unwrap();
    assert!(v.im == 0.0 && (v.re - (PI / 2.0).sqrt()).abs() < 1e-8);
    let s = Field::from_real_fn(g, |x| (PI * x / l).sin());
    let c = Field::from_real_fn(g, |x| (PI * x / l).cos());
    assert!(inner_product(&s, &c).unwrap().norm() < 1e-12);
    let a = Field::from_fn(g, |x| C64::new((-x * x).exp(), x / (1.0 + x * x)));
    let b = Field::from_fn(g, |x| C64::new(x.cos() / (1.0 + x * x), (-0.5 * x * x).exp()));
    let ab = inner_product(&a, &b).unwrap();
    let ba = inner_product(&b, &a).unwrap();
    assert!((ab - ba.conj()).norm() <= 1e-14 * ab.norm());
    let other = Grid::new(512, 20.0).unwrap();
    assert!(inner_product(&a, &Field::zeros(other)).is_err());
}

#[test]
fn norms_and_parseval() {
    let g = Grid::new(512, 15.0).unwrap();
    let z = Field::zeros(g);
    for k in [NormKind::L2, NormKind::H1, NormKind::Lp(3.0)] {
        assert_eq!(norm(&z, k).unwrap(), 0.0);
    }
    assert!(norm(&z, NormKind::Lp(0.5)).is_err());
    let f = Field::from_fn(g, |x| C64::new((-x * x / 3.0).exp(), 0.3 * x * (-x * x).exp()));
    let h1 = norm(&f, NormKind::H1).unwrap();
    let df = derivative(&f, 1).unwrap();
    assert!((h1 * h1 - mass(&f) - mass(&df)).abs() < 1e-12);
    let spec = f.spectrum();
    let n = g.n_points() as f64;
    let fourier = spec.iter().map(|c| c.norm_sqr()).sum::<f64>() * g.spacing() / n;
    assert!((fourier - mass(&f)).abs() <= 1e-10 * mass(&f));
}

#[test]
fn ground_state_matches_closed_form() {
    let g = Grid::new(2048, 60.0).unwrap();
    let q = solve_ground_state(6.0, g, 1e-9).unwrap();
    assert!(q.residual() <= 1e-9);
    assert!((q.profile().at_origin().re - 3.5f64.powf(0.2)).abs() < 1e-8);
    for j in 0..g.n_points() {
        let a = q.profile().values()[j].re;
        let b = q.profile().values()[g.mirror_index(j)].re;
        assert!((a - b).abs() <= 1e-10);
        if a > 1e-14 {
            assert!(a > 0.0);
        }
    }
    assert!(q.decay_rate() >= 0.9);
    // closed-form quadrature of ‖Q‖² on a finer independent grid
    let hq = 1e-3;
    let direct: f64 = (-40000..=40000)
        .map(|i| closed_form(6.0, i as f64 * hq).powi(2))
        .sum::<f64>()
        * hq;
    let l2 = norm(q.profile(), NormKind::L2).unwrap();
    assert!((l2 * l2 - direct).abs() < 1e-8);
}

#[test]
fn closed_form_solves_the_ode_on_the_grid() {
    let g = Grid::new(2048, 60.0).unwrap();
    let q = Field::from_real_fn(g, |x| closed_form(6.0, x));
    let r = rescaled_residual(&q, 1.0, 6.0);
    assert!(r <= 1e-10, "{r}");
}

#[test]
fn closed_form_decay_fit() {
    let xs: Vec<f64> = (0..=100).map(|i| 5.0 + 0.1 * i as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| closed_form(6.0, x).ln()).collect();
    let (slope, _, _) = snls::ground_state::linear_fit(&xs, &ys).unwrap();
    assert!(-slope >= 0.9);
}

#[test]
fn rescaling_identities() {
    let g = Grid::new(2048, 60.0).unwrap();
    let p = 6.0;
    let q = solve_ground_state(p, g, 1e-9).unwrap();
    assert_eq!(rescale(&q, 1.0).unwrap(), *q.profile());
    assert!(rescale(&q, 0.0).is_err());
    let q2 = rescale(&q, 2.0).unwrap();
    assert!(rescaled_residual(&q2, 2.0, p) <= 1e-7);
    let m1 = mass(q.profile());
    for w in [0.5, 1.0, 2.0] {
        let qw = rescale(&q, w).unwrap();
        let expect = w.powf(1.0 - 4.0 / (p - 1.0)) * m1;
        assert!((mass(&qw) - expect).abs() <= 1e-8 * expect, "w={w}");
    }
}

#[test]
fn soliton_basics() {
    let g = Grid::new(1024, 40.0).unwrap();
    let q = solve_ground_state(6.0, g, 1e-9).unwrap();
    let still = SolitonParams::new(1.0, 0.0, 0.0, 0.0).unwrap();
    let r0 = soliton(&still, &q, 0.0, &g).unwrap();
    assert!(sup(&r0, q.profile()) < 1e-13);
    let moving = SolitonParams::new(1.3, 0.7, -2.0, 0.4).unwrap();
    let m0 = mass(&soliton(&moving, &q, 0.0, &g).unwrap());
    for t in [1.0, 3.3, 7.0] {
        let r = soliton(&moving, &q, t, &g).unwrap();
        assert!((mass(&r) - m0).abs() < 1e-10);
    }
    assert!(soliton(&moving, &q, 100.0, &g).is_err());
}
