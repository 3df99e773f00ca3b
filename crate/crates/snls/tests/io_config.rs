use proptest::prelude::*;

use snls::config::{ExperimentConfig, Preset};
use snls::construction::{ShootingMethod, TrajectoryRow};
use snls::io::{csv_header, read_csv, read_snapshot, trajectory_csv, write_snapshot, SNAPSHOT_MAGIC};
use snls::{Error, Field, Grid, C64};

fn row(t: f64, k: usize) -> TrajectoryRow {
    let v = |s: f64| (0..k).map(|j| s + j as f64).collect::<Vec<f64>>();
    TrajectoryRow {
        t,
        eps_h1: 1.0 / 3.0,
        a_plus: v(10.0),
        a_minus: v(20.0),
        alpha: v(30.0),
        theta: v(40.0),
        b_star: 0.5,
        lyapunov: 0.6,
        quadratic: 99.0,
        n_functional: 0.7,
        tube_eps: 0.8,
        tube_aplus: 0.9,
        tube_aminus: 1.1,
        tube_param: 1.2,
        mass: std::f64::consts::PI,
        distance: 99.0,
        physical_distance: 99.0,
        param_drift: 99.0,
    }
}

#[test]
fn csv_column_order() {
    let h = csv_header(2).join(",");
    assert_eq!(
        h,
        "t,eps_h1,a_plus_1,a_plus_2,a_minus_1,a_minus_2,alpha_1,alpha_2,theta_1,theta_2,B_star,lyapunov,\
         N_functional,tube_eps_bound,tube_aplus_bound,tube_aminus_bound,tube_param_bound,mass"
    );
    let text = trajectory_csv(&[row(2.0, 2), row(1.9, 2)], 2).unwrap();
    let (header, rows) = read_csv(&text).unwrap();
    assert_eq!(header.join(","), h);
    assert_eq!(
        rows[0],
        vec![2.0, 1.0 / 3.0, 10.0, 11.0, 20.0, 21.0, 30.0, 31.0, 40.0, 41.0, 0.5, 0.6, 0.7, 0.8, 0.9, 1.1, 1.2, std::f64::consts::PI]
    );
    let first = text.lines().nth(1).unwrap();
    assert!(first.starts_with("2.0000000000000000e0,3.3333333333333331e-1,"), "{first}");
    assert!(trajectory_csv(&[row(1.0, 1)], 2).is_err());
}

proptest! {
    #[test]
    fn csv_numbers_round_trip(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
        let mut r = row(x, 1);
        r.mass = -x;
        let (_, rows) = read_csv(&trajectory_csv(&[r], 1).unwrap()).unwrap();
        prop_assert_eq!(rows[0][0].to_bits(), x.to_bits());
        prop_assert_eq!(rows[0][rows[0].len() - 1].to_bits(), (-x).to_bits());
    }

    #[test]
    fn snapshots_round_trip(seed in 0u64..1000, t in -1e3f64..1e3, k in 4u32..9) {
        let n = 1usize << k;
        let g = Grid::new(n, 7.5).unwrap();
        let s = seed as f64;
        let f = Field::from_fn(g, |x| C64::new((x * s).sin(), (x + s).cos() * 1e-300));
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &f, t).unwrap();
        prop_assert_eq!(buf.len(), 8 + 4 + 8 + 8 + 8 + 16 * n);
        let (back, tb) = read_snapshot(buf.as_slice()).unwrap();
        prop_assert_eq!(back, f);
        prop_assert_eq!(tb.to_bits(), t.to_bits());
    }
}

#[test]
fn snapshot_layout_and_corruption() {
    let g = Grid::new(16, 2.0).unwrap();
    let f = Field::from_fn(g, |x| C64::new(x, -x));
    let mut buf = Vec::new();
    write_snapshot(&mut buf, &f, 1.5).unwrap();
    assert_eq!(&buf[..8], &SNAPSHOT_MAGIC);
    assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 1);
    assert_eq!(u64::from_le_bytes(buf[12..20].try_into().unwrap()), 16);
    assert_eq!(f64::from_le_bytes(buf[20..28].try_into().unwrap()), 2.0);
    assert_eq!(f64::from_le_bytes(buf[28..36].try_into().unwrap()), 1.5);
    assert_eq!(f64::from_le_bytes(buf[36..44].try_into().unwrap()), g.x(0));
    assert_eq!(f64::from_le_bytes(buf[44..52].try_into().unwrap()), -g.x(0));

    assert!(matches!(read_snapshot(&buf[..buf.len() - 1]), Err(Error::Io(_))));
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(read_snapshot(bad.as_slice()).is_err());
    let mut v2 = buf.clone();
    v2[8] = 2;
    assert!(read_snapshot(v2.as_slice()).is_err());
    let mut long = buf.clone();
    long.push(0);
    assert!(read_snapshot(long.as_slice()).is_err());
}

#[test]
fn presets_are_valid_and_round_trip() {
    for p in Preset::ALL {
        let c = p.config();
        c.validate().unwrap();
        assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.method().unwrap(), ShootingMethod::Newton);
    }
    assert!("caseIII-2sol".parse::<Preset>().is_err());
    let two = Preset::CaseII2Sol.config();
    let spec = two.noise_spec().unwrap();
    assert!(spec.horizon >= 20.0 && spec.tail_beyond_horizon() <= 1e-12);
    assert_eq!(two.with_seed(9).noise.unwrap().seed_list(), vec![9]);
}

const MINIMAL: &str = r#"
p = 6.0

[grid]
n_points = 1024
half_length = 40.0

[[solitons]]
w = 1.0
v = -1.0
alpha0 = -3.0
theta0 = 0.0

[[solitons]]
w = 1.0
v = 1.0
alpha0 = 3.0
theta0 = 0.0

[noise]
case = { kind = "exponential" }
seed = 4
channels = [
  { profile = { kind = "sech", c = 1.0, center = 0.0 }, weight = { kind = "exp", amp = 0.1, rate = 0.25 } },
]

[solver]
dt = 0.02

[construction]
n_list = [8.0, 10.0]
T_floor = 2.0
"#;

fn path_of(e: Error) -> String {
    match e {
        Error::Config { path, .. } => path,
        other => panic!("expected a config error, got {other}"),
    }
}

#[test]
fn toml_defaults_and_field_paths() {
    let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
    assert_eq!(c.solver.order, 6);
    assert_eq!(c.construction.slack, 4.0);
    assert_eq!(c.output.cadence, 0.1);
    assert_eq!(c.method().unwrap(), ShootingMethod::Newton);
    let spec = c.noise_spec().unwrap();
    assert_eq!(spec.horizon, 48.0);
    assert_eq!(c.noise.as_ref().unwrap().seed_list(), vec![4]);

    let edit = |from: &str, to: &str| ExperimentConfig::from_toml(&MINIMAL.replacen(from, to, 1)).unwrap_err();
    assert_eq!(path_of(edit("p = 6.0", "p = 5.0")), "p");
    assert_eq!(path_of(edit("v = 1.0", "v = -1.0")), "solitons[1].v");
    assert_eq!(path_of(edit("[8.0, 10.0]", "[10.0, 8.0]")), "construction.n_list[1]");
    assert_eq!(path_of(edit("[8.0, 10.0]", "[8.0, 60.0]")), "construction.n_list");
    assert_eq!(path_of(edit("T_floor = 2.0", "T_floor = 0.5")), "construction.T_floor");
    assert_eq!(path_of(edit("w = 1.0", "w = -1.0")), "solitons[0]");
    assert_eq!(path_of(edit("dt = 0.02", "dt = 0.02\norder = 3")), "solver");
    assert_eq!(path_of(edit("T_floor = 2.0", "T_floor = 2.0\nmethod = \"bisection\"")), "construction.method");
    assert_eq!(path_of(edit("p = 6.0", "p = 6.0\nbogus = 1")), "<toml>");
}
