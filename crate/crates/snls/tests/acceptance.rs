//! One test per acceptance criterion. Each prints a single PASS/FAIL line to
//! the real stderr so the verdicts show up even when output is captured.

use std::io::Write;
use std::sync::OnceLock;

use snls::acceptance::{run, Lab, Verdict};

fn lab() -> &'static Lab {
    static LAB: OnceLock<Lab> = OnceLock::new();
    LAB.get_or_init(Lab::new)
}

fn check(id: u8) -> Verdict {
    let v = run(id, lab());
    let mut err = std::io::stderr().lock();
    writeln!(err, "{}", v.line()).unwrap();
    v
}

macro_rules! criterion {
    ($name:ident, $id:expr) => {
        #[test]
        fn $name() {
            let v = check($id);
            assert!(v.passed, "{}", v.line());
        }
    };
}

criterion!(criterion_01_ground_state, 1);
criterion!(criterion_02_eigenpair, 2);
criterion!(criterion_03_coercivity, 3);
criterion!(criterion_04_solver_accuracy, 4);
criterion!(criterion_05_rough_paths, 5);
criterion!(criterion_06_mass_with_noise, 6);
criterion!(criterion_07_modulated_final_data, 7);
criterion!(criterion_08_linearized_dynamics, 8);
criterion!(criterion_09_deterministic_construction, 9);
criterion!(criterion_10_stochastic_construction, 10);
criterion!(criterion_11_finite_n_cauchy, 11);

#[test]
fn unknown_criterion_fails() {
    let v = run(12, lab());
    assert!(!v.passed);
}
