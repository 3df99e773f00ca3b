//! Restarted right-preconditioned GMRES on real vectors.

pub struct GmresOutcome {
    pub solution: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn nrm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `op(x) = rhs` with right preconditioner `prec`, stopping when the
/// relative residual drops below `tol`.
pub fn gmres(
    op: &dyn Fn(&[f64]) -> Vec<f64>,
    prec: &dyn Fn(&[f64]) -> Vec<f64>,
    rhs: &[f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> GmresOutcome {
    let n = rhs.len();
    let bnorm = nrm(rhs).max(f64::MIN_POSITIVE);
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut total = 0;
    let mut res = nrm(&r);
    while total < max_iter && res > tol * bnorm {
        let m = restart.min(max_iter - total);
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = res;
        v.push(r.iter().map(|a| a / res).collect());
        let mut used = 0;
        for j in 0..m {
            let zj = prec(&v[j]);
            let mut w = op(&zj);
            z.push(zj);
            for i in 0..=j {
                h[i][j] = dot(&w, &v[i]);
                for (wk, vk) in w.iter_mut().zip(&v[i]) {
                    *wk -= h[i][j] * vk;
                }
            }
            // second pass for orthogonality
            for i in 0..=j {
                let c = dot(&w, &v[i]);
                h[i][j] += c;
                for (wk, vk) in w.iter_mut().zip(&v[i]) {
                    *wk -= c * vk;
                }
            }
            h[j + 1][j] = nrm(&w);
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let rho = h[j][j].hypot(h[j + 1][j]);
            cs[j] = h[j][j] / rho;
            sn[j] = h[j + 1][j] / rho;
            h[j][j] = rho;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            total += 1;
            let hn = h[j + 1][j].max(nrm(&w));
            if g[j + 1].abs() <= tol * bnorm || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|a| a / hn).collect());
        }
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for k in i + 1..used {
                s -= h[i][k] * y[k];
            }
            y[i] = s / h[i][i];
        }
        for (k, yk) in y.iter().enumerate() {
            for (xi, zi) in x.iter_mut().zip(&z[k]) {
                *xi += yk * zi;
            }
        }
        let ax = op(&x);
        r = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        res = nrm(&r);
    }
    GmresOutcome { solution: x, residual: res / bnorm, iterations: total }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_nonsymmetric_system() {
        let a = [[4.0, 1.0, 0.0], [2.0, 5.0, 1.0], [0.0, -1.0, 3.0]];
        let op = |x: &[f64]| (0..3).map(|i| (0..3).map(|j| a[i][j] * x[j]).sum()).collect();
        let id = |x: &[f64]| x.to_vec();
        let b = [1.0, 2.0, 3.0];
        let out = gmres(&op, &id, &b, 1e-14, 10, 30);
        let ax = op(&out.solution);
        for i in 0..3 {
            assert!((ax[i] - b[i]).abs() < 1e-12);
        }
    }
}
