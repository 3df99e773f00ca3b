//! Linearized operators around Q, the real eigenpair (e0, Y±) and coercivity.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::grid::{fft_inverse, inner_product, l2_norm, Field, Grid, C64};
use crate::ground_state::{
    derivative_profile, fit_decay_rate, helmholtz_inverse, schrodinger_apply, GroundState,
};
use crate::krylov::gmres;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Lplus,
    Lminus,
    L,
}

fn potentials(q: &GroundState) -> (Vec<f64>, Vec<f64>) {
    let p = q.p();
    let vm: Vec<f64> = q.values().iter().map(|a| a.abs().powf(p - 1.0)).collect();
    let vp: Vec<f64> = vm.iter().map(|a| p * a).collect();
    (vp, vm)
}

pub fn apply_linearized(f: &Field, variant: Variant, q: &GroundState) -> Result<Field> {
    if f.grid() != q.grid() {
        return Err(Error::IncompatibleGrids);
    }
    let grid = *q.grid();
    let (vp, vm) = potentials(q);
    let re = f.re();
    let im = f.im();
    let cplx = |a: Vec<f64>, b: Vec<f64>| {
        Field::new(grid, a.into_iter().zip(b).map(|(x, y)| C64::new(x, y)).collect())
    };
    match variant {
        Variant::Lplus => cplx(schrodinger_apply(&grid, &re, &vp), schrodinger_apply(&grid, &im, &vp)),
        Variant::Lminus => cplx(schrodinger_apply(&grid, &re, &vm), schrodinger_apply(&grid, &im, &vm)),
        Variant::L => {
            let a: Vec<f64> = schrodinger_apply(&grid, &im, &vm).iter().map(|x| -x).collect();
            let b = schrodinger_apply(&grid, &re, &vp);
            cplx(a, b)
        }
    }
}

/// `(𝓛f, f) = ∫ f1 L+ f1 + ∫ f2 L- f2`.
pub fn quadratic_form(f: &Field, q: &GroundState) -> Result<f64> {
    if f.grid() != q.grid() {
        return Err(Error::IncompatibleGrids);
    }
    let grid = *q.grid();
    let (vp, vm) = potentials(q);
    let f1 = f.re();
    let f2 = f.im();
    let a = schrodinger_apply(&grid, &f1, &vp);
    let b = schrodinger_apply(&grid, &f2, &vm);
    let s: f64 = f1.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>()
        + f2.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>();
    Ok(s * grid.spacing())
}

#[derive(Clone, Debug)]
pub struct Eigenpair {
    e0: f64,
    yplus: Field,
    y_star: f64,
}

impl Eigenpair {
    pub fn e0(&self) -> f64 {
        self.e0
    }

    pub fn yplus(&self) -> &Field {
        &self.yplus
    }

    pub fn yminus(&self) -> Field {
        self.yplus.conj()
    }

    pub fn y1(&self) -> Field {
        self.yplus.real_part()
    }

    pub fn y2(&self) -> Field {
        self.yplus.imag_part()
    }

    pub fn y_star(&self) -> f64 {
        self.y_star
    }

    pub fn grid(&self) -> &Grid {
        self.yplus.grid()
    }

    /// ‖𝓛Y± ∓ e0 Y±‖ for the requested sign.
    pub fn residual(&self, q: &GroundState, plus: bool) -> Result<f64> {
        let (y, s) = if plus { (self.yplus.clone(), 1.0) } else { (self.yminus(), -1.0) };
        let ly = apply_linearized(&y, Variant::L, q)?;
        Ok(l2_norm(&(&ly - &(&y * (s * self.e0)))))
    }

    pub fn decay_rate(&self) -> Result<f64> {
        fit_decay_rate(&self.yplus, (5.0, 15.0))
    }

    /// Reassembles an eigenpair from stored data, e.g. a cached snapshot.
    pub fn from_parts(e0: f64, yplus: Field) -> Result<Self> {
        if !(e0 > 0.0) {
            return Err(invalid("eigenvalue must be positive"));
        }
        let y_star = y_star_of(&yplus);
        Ok(Self { e0, yplus, y_star })
    }
}

fn y_star_of(y: &Field) -> f64 {
    y.values().iter().map(|z| z.re * z.re - z.im * z.im).sum::<f64>() * y.grid().spacing()
}

/// Dense `-d^2 + 1 - diag(potential)` for the Fourier second derivative.
pub fn dense_schrodinger(grid: &Grid, potential: &[f64]) -> DMatrix<f64> {
    let n = grid.n_points();
    let mut sym: Vec<C64> = grid.wavenumbers().iter().map(|k| C64::new(k * k, 0.0)).collect();
    fft_inverse(&mut sym);
    let col: Vec<f64> = sym.iter().map(|z| z.re).collect();
    DMatrix::from_fn(n, n, |i, j| {
        let mut v = col[(i + n - j) % n];
        if i == j {
            v += 1.0 - potential[i];
        }
        v
    })
}

pub fn dense_operator(q: &GroundState, variant: Variant) -> Result<DMatrix<f64>> {
    let (vp, vm) = potentials(q);
    match variant {
        Variant::Lplus => Ok(dense_schrodinger(q.grid(), &vp)),
        Variant::Lminus => Ok(dense_schrodinger(q.grid(), &vm)),
        Variant::L => Err(invalid("the full operator is not symmetric; use Lplus or Lminus")),
    }
}

pub const DEFAULT_COARSE_POINTS: usize = 1024;

pub fn solve_eigenpair(q: &GroundState, tol: f64) -> Result<Eigenpair> {
    solve_eigenpair_with(q, tol, DEFAULT_COARSE_POINTS)
}

/// Dense seed on a coarse grid, Fourier upsampling, Newton refinement.
pub fn solve_eigenpair_with(q: &GroundState, tol: f64, coarse_points: usize) -> Result<Eigenpair> {
    if !(q.p() > 5.0) {
        return Err(Error::SpectralFailure(format!(
            "no real eigenvalue pair expected for p = {}",
            q.p()
        )));
    }
    let grid = *q.grid();
    let nc = coarse_points.min(grid.n_points());
    let coarse = grid.with_points(nc)?;
    let qc = q.profile().resample(coarse)?;
    let p = q.p();
    let vm: Vec<f64> = qc.re().iter().map(|a| a.abs().powf(p - 1.0)).collect();
    let vp: Vec<f64> = vm.iter().map(|a| p * a).collect();
    let lm = dense_schrodinger(&coarse, &vm);
    let lp = dense_schrodinger(&coarse, &vp);
    let em = SymmetricEigen::new(lm);
    let sq = DVector::from_iterator(nc, em.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()));
    let root = &em.eigenvectors * DMatrix::from_diagonal(&sq) * em.eigenvectors.transpose();
    let s = &root * &lp * &root;
    let s = (&s + s.transpose()) * 0.5;
    let es = SymmetricEigen::new(s);
    let (imin, lmin) = es
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &l)| if l < acc.1 { (i, l) } else { acc });
    if !(lmin < 0.0) {
        return Err(Error::SpectralFailure("no real nonzero eigenvalue pair found".into()));
    }
    let e0 = (-lmin).sqrt();
    let z = es.eigenvectors.column(imin).into_owned();
    let y1c = &root * z;
    let y2c = (&lp * &y1c) / e0;
    let seed = Field::new(
        coarse,
        y1c.iter().zip(y2c.iter()).map(|(&a, &b)| C64::new(a, b)).collect(),
    )?;
    check_decay(&seed)?;
    let seed = seed.resample(grid)?;
    let (e0, yplus) = refine(q, e0, seed, tol)?;
    let eig = Eigenpair { e0, y_star: y_star_of(&yplus), yplus };
    let r = eig.residual(q, true)?;
    if !(r <= tol) {
        return Err(Error::SolverFailure { residual: r });
    }
    Ok(eig)
}

fn check_decay(y: &Field) -> Result<()> {
    let g = y.grid();
    let peak = y.max_abs();
    let edge = y
        .values()
        .iter()
        .enumerate()
        .filter(|(j, _)| g.x(*j).abs() > 0.8 * g.half_length())
        .map(|(_, z)| z.norm())
        .fold(0.0, f64::max);
    if edge > 1e-6 * peak {
        return Err(Error::SpectralFailure("eigenvector does not decay; grid too small".into()));
    }
    Ok(())
}

fn normalize(y: &Field) -> Field {
    let g = *y.grid();
    let n = g.n_points();
    let sym: Vec<C64> = (0..n).map(|j| 0.5 * (y.values()[j] + y.values()[g.mirror_index(j)])).collect();
    let f = Field::from_vec(g, sym);
    let s = if f.at_origin().re < 0.0 { -1.0 } else { 1.0 };
    &f * (s / l2_norm(&f))
}

fn refine(q: &GroundState, mut e0: f64, seed: Field, tol: f64) -> Result<(f64, Field)> {
    let grid = *q.grid();
    let n = grid.n_points();
    let h = grid.spacing();
    let (vp, vm) = potentials(q);
    let mut y = normalize(&seed);
    let residual = |y1: &[f64], y2: &[f64], e: f64| -> (Vec<f64>, Vec<f64>) {
        let a = schrodinger_apply(&grid, y1, &vp);
        let b = schrodinger_apply(&grid, y2, &vm);
        (
            a.iter().zip(y2).map(|(x, z)| x - e * z).collect(),
            b.iter().zip(y1).map(|(x, z)| x + e * z).collect(),
        )
    };
    let size = |r1: &[f64], r2: &[f64]| {
        ((r1.iter().map(|a| a * a).sum::<f64>() + r2.iter().map(|a| a * a).sum::<f64>()) * h).sqrt()
    };
    let mut best = f64::INFINITY;
    for _ in 0..12 {
        let y1 = y.re();
        let y2 = y.im();
        let (r1, r2) = residual(&y1, &y2, e0);
        let res = size(&r1, &r2);
        if res >= best {
            break;
        }
        best = res;
        if res <= 1e-3 * tol {
            break;
        }
        let op = |d: &[f64]| -> Vec<f64> {
            let (d1, rest) = d.split_at(n);
            let (d2, de) = rest.split_at(n);
            let de = de[0];
            let a = schrodinger_apply(&grid, d1, &vp);
            let b = schrodinger_apply(&grid, d2, &vm);
            let mut out = Vec::with_capacity(2 * n + 1);
            out.extend((0..n).map(|j| a[j] - e0 * d2[j] - de * y2[j]));
            out.extend((0..n).map(|j| b[j] + e0 * d1[j] + de * y1[j]));
            out.push(h * (0..n).map(|j| y1[j] * d1[j] + y2[j] * d2[j]).sum::<f64>());
            out
        };
        let prec = |d: &[f64]| -> Vec<f64> {
            let mut out = helmholtz_inverse(&grid, &d[..n]);
            out.extend(helmholtz_inverse(&grid, &d[n..2 * n]));
            out.push(d[2 * n]);
            out
        };
        let mut rhs: Vec<f64> = r1.iter().chain(&r2).map(|a| -a).collect();
        rhs.push(0.0);
        let out = gmres(&op, &prec, &rhs, 1e-14, 100, 600);
        let d = out.solution;
        e0 += d[2 * n];
        let next: Vec<C64> = (0..n).map(|j| C64::new(y1[j] + d[j], y2[j] + d[n + j])).collect();
        y = normalize(&Field::new(grid, next)?);
    }
    Ok((e0, y))
}

/// Smallest eigenvalue of `P A P + σ C Cᵀ` with C an orthonormal basis of the
/// constraint directions.
fn projected_min(a: &DMatrix<f64>, constraints: &[Vec<f64>], sigma: f64) -> f64 {
    let n = a.nrows();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for c in constraints {
        let mut v = DVector::from_column_slice(c);
        for b in &basis {
            let d = v.dot(b);
            v -= b * d;
        }
        let nv = v.norm();
        if nv > 1e-12 {
            basis.push(v / nv);
        }
    }
    let mut proj = DMatrix::<f64>::identity(n, n);
    for b in &basis {
        proj -= b * b.transpose();
    }
    let mut m = &proj * a * &proj;
    for b in &basis {
        m += b * b.transpose() * sigma;
    }
    let m = (&m + m.transpose()) * 0.5;
    m.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Smallest eigenvalue of the form on the four-constraint subspace.
pub fn coercivity_gap(q: &GroundState, eig: &Eigenpair) -> Result<f64> {
    if eig.grid() != q.grid() {
        return Err(Error::IncompatibleGrids);
    }
    let dq = derivative_profile(q).re();
    let lp = dense_operator(q, Variant::Lplus)?;
    let lm = dense_operator(q, Variant::Lminus)?;
    let g1 = projected_min(&lp, &[dq, eig.y2().re()], 10.0);
    let g2 = projected_min(&lm, &[q.values(), eig.y1().re()], 10.0);
    let gap = g1.min(g2);
    if !(gap > 0.0) {
        return Err(Error::CoercivityViolation { gap });
    }
    Ok(gap)
}

/// Smallest eigenvalue of the unconstrained form.
pub fn unconstrained_min(q: &GroundState) -> Result<f64> {
    let lp = dense_operator(q, Variant::Lplus)?;
    let lm = dense_operator(q, Variant::Lminus)?;
    let a = lp.symmetric_eigenvalues().min();
    let b = lm.symmetric_eigenvalues().min();
    Ok(a.min(b))
}

/// The identities Re∫Q Y± and Im∫Q' Y±.
pub fn orthogonality_identities(q: &GroundState, eig: &Eigenpair) -> Result<[f64; 4]> {
    let dq = derivative_profile(q);
    let ym = eig.yminus();
    let qf = q.profile();
    Ok([
        inner_product(eig.yplus(), qf)?.re,
        inner_product(&ym, qf)?.re,
        inner_product(eig.yplus(), &dq)?.im,
        inner_product(&ym, &dq)?.im,
    ])
}
