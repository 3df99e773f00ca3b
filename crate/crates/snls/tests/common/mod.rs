#![allow(dead_code)]

use std::sync::OnceLock;

use snls::grid::Grid;
use snls::ground_state::{solve_ground_state, GroundState};
use snls::linearized::{solve_eigenpair, Eigenpair};

pub fn small() -> &'static (GroundState, Eigenpair) {
    static CELL: OnceLock<(GroundState, Eigenpair)> = OnceLock::new();
    CELL.get_or_init(|| {
        let q = solve_ground_state(6.0, Grid::new(1024, 40.0).unwrap(), 1e-9).unwrap();
        let e = solve_eigenpair(&q, 1e-9).unwrap();
        (q, e)
    })
}

pub fn wide() -> &'static (GroundState, Eigenpair) {
    static CELL: OnceLock<(GroundState, Eigenpair)> = OnceLock::new();
    CELL.get_or_init(|| {
        let q = solve_ground_state(6.0, Grid::new(2048, 80.0).unwrap(), 1e-9).unwrap();
        let e = solve_eigenpair(&q, 1e-9).unwrap();
        (q, e)
    })
}
