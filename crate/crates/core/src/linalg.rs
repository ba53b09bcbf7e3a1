//! Sparse linear algebra backbone: CSR matrices with Dirichlet elimination and
//! preconditioned conjugate gradients, banded LU for the nonsymmetric Newton
//! Jacobians, and a damped Newton driver.

use std::collections::BTreeMap;

use crate::error::{FsiError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Assemble from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut trip: Vec<(usize, usize, f64)>) -> Self {
        trip.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0; nrows + 1];
        let mut col_idx = Vec::with_capacity(trip.len());
        let mut values: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|(c, _)| *c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, i)).collect()
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        (0..self.nrows).all(|i| {
            self.row(i)
                .all(|(j, v)| (v - self.get(j, i)).abs() <= rel_tol * scale)
        })
    }
}

/// Linear system with strongly imposed Dirichlet values.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Prescribed values by unknown index.
    pub dirichlet: BTreeMap<usize, f64>,
    /// Caller asserts the reduced matrix is symmetric positive definite.
    pub spd: bool,
}

impl SparseSystem {
    pub fn new(matrix: CsrMatrix, rhs: Vec<f64>) -> Self {
        SparseSystem {
            matrix,
            rhs,
            dirichlet: BTreeMap::new(),
            spd: true,
        }
    }

    /// Reduced system on the free unknowns: `A_ff x_f = b_f - A_fd x_d`.
    /// Returns the reduced matrix, reduced right-hand side and the free indices.
    pub fn eliminate(&self) -> (CsrMatrix, Vec<f64>, Vec<usize>) {
        let n = self.matrix.nrows;
        let mut map = vec![usize::MAX; n];
        let mut free = Vec::new();
        for i in 0..n {
            if !self.dirichlet.contains_key(&i) {
                map[i] = free.len();
                free.push(i);
            }
        }
        let mut trip = Vec::new();
        let mut rhs = Vec::with_capacity(free.len());
        for (fi, &i) in free.iter().enumerate() {
            let mut b = self.rhs[i];
            for (j, v) in self.matrix.row(i) {
                match self.dirichlet.get(&j) {
                    Some(xd) => b -= v * xd,
                    None => trip.push((fi, map[j], v)),
                }
            }
            rhs.push(b);
        }
        (CsrMatrix::from_triplets(free.len(), free.len(), trip), rhs, free)
    }
}

/// Jacobi-preconditioned conjugate gradients with relative residual `tol`.
/// Exhausting `maxit` is reported through `converged = false`.
pub fn solve_spd(system: &SparseSystem, tol: f64, maxit: usize) -> Result<(Vec<f64>, SolveReport)> {
    if !system.spd {
        return Err(FsiError::Linear("system is not flagged SPD".into()));
    }
    let (a, b, free) = system.eliminate();
    if !a.is_symmetric(1e-12) {
        return Err(FsiError::Linear("matrix flagged SPD is not symmetric".into()));
    }
    let diag = a.diagonal();
    if diag.iter().any(|&d| !(d > 0.0)) {
        return Err(FsiError::Linear("matrix flagged SPD has a non-positive diagonal".into()));
    }
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = norm2(&b);
    let mut report = SolveReport {
        iterations: 0,
        residual: 0.0,
        converged: true,
    };
    if bnorm > 0.0 {
        let mut r = b.clone();
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        report.converged = false;
        report.residual = 1.0;
        for it in 1..=maxit {
            let ap = a.matvec(&p);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(FsiError::Linear(format!(
                    "matrix flagged SPD is not positive definite (p'Ap = {pap:e})"
                )));
            }
            let alpha = rz / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            report.iterations = it;
            report.residual = norm2(&r) / bnorm;
            if report.residual <= tol {
                report.converged = true;
                break;
            }
            for k in 0..n {
                z[k] = r[k] / diag[k];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
    }
    let mut full = vec![0.0; system.matrix.nrows];
    for (&i, &v) in &system.dirichlet {
        full[i] = v;
    }
    for (fi, &i) in free.iter().enumerate() {
        full[i] = x[fi];
    }
    Ok((full, report))
}

/// Banded matrix with `kl` sub- and `ku` super-diagonals, stored with room
/// for the fill produced by partial pivoting.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn new(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    /// Full (dense) storage as a band matrix.
    pub fn dense(n: usize) -> Self {
        Self::new(n, n.saturating_sub(1), n.saturating_sub(1))
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(self.in_band(i, j), "({i},{j}) outside band");
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.slot(i, j)]
        } else {
            0.0
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// LU factorization with partial pivoting.
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let upper = kl + ku;
        let mut piv = vec![0usize; n];
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.slot(k, k)].abs();
            for i in k + 1..=last {
                let v = self.data[self.slot(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > scale * 1e-300) || !best.is_finite() {
                return Err(FsiError::Linear(format!("singular matrix at column {k}")));
            }
            piv[k] = p;
            let jmax = (k + upper).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let (a, b) = (self.slot(k, j), self.slot(p, j));
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.slot(k, k)];
            for i in k + 1..=last {
                let sik = self.slot(i, k);
                let l = self.data[sik] / pivot;
                self.data[sik] = l;
                if l != 0.0 {
                    for j in k + 1..=jmax {
                        let skj = self.slot(k, j);
                        let sij = self.slot(i, j);
                        self.data[sij] -= l * self.data[skj];
                    }
                }
            }
        }
        Ok(BandLu { m: self, piv })
    }
}

#[derive(Clone, Debug)]
pub struct BandLu {
    m: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.m.n;
        let (kl, ku) = (self.m.kl, self.m.ku);
        let mut x = b.to_vec();
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
            let last = (k + kl).min(n - 1);
            for i in k + 1..=last {
                x[i] -= self.m.data[self.m.slot(i, k)] * x[k];
            }
        }
        for k in (0..n).rev() {
            let jmax = (k + kl + ku).min(n - 1);
            let mut s = x[k];
            for j in k + 1..=jmax {
                s -= self.m.data[self.m.slot(k, j)] * x[j];
            }
            x[k] = s / self.m.data[self.m.slot(k, k)];
        }
        x
    }
}

/// Damped Newton iteration for `residual(x) = 0` with banded Jacobians.
///
/// Stops when `||residual||_2 <= tol`. A residual callback returning an error
/// for a trial step triggers backtracking; an error at the current iterate or
/// a non-finite residual aborts. On `maxit` exhaustion the best iterate is
/// returned with `converged = false`.
pub fn solve_newton<R, J>(
    mut residual: R,
    mut jacobian: J,
    guess: Vec<f64>,
    tol: f64,
    maxit: usize,
) -> Result<(Vec<f64>, SolveReport)>
where
    R: FnMut(&[f64]) -> Result<Vec<f64>>,
    J: FnMut(&[f64]) -> Result<BandMatrix>,
{
    let eval = |r: Result<Vec<f64>>| -> Result<(Vec<f64>, f64)> {
        let r = r?;
        let n = norm2(&r);
        if !n.is_finite() {
            return Err(FsiError::NonFinite("Newton residual".into()));
        }
        Ok((r, n))
    };
    let mut x = guess;
    let (mut r, mut rn) = eval(residual(&x))?;
    let mut report = SolveReport {
        iterations: 0,
        residual: rn,
        converged: rn <= tol,
    };
    if report.converged {
        return Ok((x, report));
    }
    let mut best = (x.clone(), rn);
    for it in 1..=maxit {
        let lu = jacobian(&x)?.factor()?;
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx = lu.solve(&neg);
        if dx.iter().any(|v| !v.is_finite()) {
            return Err(FsiError::Newton("non-finite Newton update".into()));
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        let mut last_err = None;
        for _ in 0..12 {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + alpha * b).collect();
            match eval(residual(&trial)) {
                Ok((rt, nt)) if nt <= (1.0 - 1e-4 * alpha) * rn || nt <= tol => {
                    accepted = Some((trial, rt, nt));
                    break;
                }
                Ok((rt, nt)) => {
                    if accepted.is_none() && alpha <= 1.0 / 1024.0 {
                        accepted = Some((trial, rt, nt));
                        break;
                    }
                }
                Err(e) => last_err = Some(e),
            }
            alpha *= 0.5;
        }
        let (xn, rnew, nn) = match accepted {
            Some(a) => a,
            None => {
                return Err(last_err.unwrap_or_else(|| FsiError::Newton("line search failed".into())))
            }
        };
        x = xn;
        r = rnew;
        rn = nn;
        report.iterations = it;
        report.residual = rn;
        if rn < best.1 {
            best = (x.clone(), rn);
        }
        if rn <= tol {
            report.converged = true;
            return Ok((x, report));
        }
    }
    report.residual = best.1;
    Ok((best.0, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poisson_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, t)
    }

    #[test]
    fn identity_solves_in_one_iteration() {
        let b = vec![1.0, -2.0, 3.5, 0.25];
        let sys = SparseSystem::new(CsrMatrix::identity(4), b.clone());
        let (x, rep) = solve_spd(&sys, 1e-12, 10).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
        for (a, b) in x.iter().zip(&b) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn poisson_sine_eigenfunction_second_order() {
        let err = |m: usize| {
            let h = 1.0 / m as f64;
            let n = m - 1;
            let a = poisson_1d(n);
            let scaled = CsrMatrix { values: a.values.iter().map(|v| v / (h * h)).collect(), ..a };
            let b: Vec<f64> = (1..=n).map(|i| (std::f64::consts::PI * i as f64 * h).sin()).collect();
            let (x, rep) = solve_spd(&SparseSystem::new(scaled, b), 1e-13, 10 * n).unwrap();
            assert!(rep.converged);
            let pi2 = std::f64::consts::PI.powi(2);
            (1..=n)
                .map(|i| (x[i - 1] - (std::f64::consts::PI * i as f64 * h).sin() / pi2).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(16), err(32));
        let rate = (e1 / e2).log2();
        assert!((rate - 2.0).abs() < 0.1, "rate {rate}");
    }

    #[test]
    fn indefinite_flagged_spd_is_rejected() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        let sys = SparseSystem::new(a, vec![1.0, 0.3]);
        assert!(solve_spd(&sys, 1e-12, 10).is_err());
    }

    #[test]
    fn nonsymmetric_flagged_spd_is_rejected() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 2.0), (0, 1, 1.0), (1, 1, 2.0)]);
        assert!(solve_spd(&SparseSystem::new(a, vec![1.0, 1.0]), 1e-12, 10).is_err());
    }

    #[test]
    fn maxit_exhaustion_is_reported() {
        let n = 50;
        let sys = SparseSystem::new(poisson_1d(n), vec![1.0; n]);
        let (_, rep) = solve_spd(&sys, 1e-14, 3).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 3);
    }

    #[test]
    fn dirichlet_elimination_keeps_symmetry() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 30;
        let mut sys = SparseSystem::new(poisson_1d(n), vec![1.0; n]);
        sys.dirichlet.insert(0, 0.5);
        sys.dirichlet.insert(17, -1.0);
        let (a, _, free) = sys.eliminate();
        assert_eq!(free.len(), n - 2);
        for _ in 0..10 {
            let x: Vec<f64> = (0..a.nrows).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..a.nrows).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lhs = dot(&a.matvec(&x), &y);
            let rhs = dot(&x, &a.matvec(&y));
            assert!((lhs - rhs).abs() < 1e-12);
            assert!(dot(&a.matvec(&x), &x) > 0.0);
        }
        let (x, rep) = solve_spd(&sys, 1e-12, 200).unwrap();
        assert!(rep.converged);
        assert_eq!(x[0], 0.5);
        assert_eq!(x[17], -1.0);
    }

    #[test]
    fn band_lu_matches_dense_solution() {
        let n = 12;
        let mut m = BandMatrix::new(n, 2, 3);
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if m.in_band(i, j) {
                    let v = ((i * 7 + j * 3) % 11) as f64 - 5.0 + if i == j { 0.5 } else { 0.0 };
                    m.add(i, j, v);
                    dense[i][j] = v;
                }
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let b = m.matvec(&x_true);
        let x = m.factor().unwrap().solve(&b);
        for i in 0..n {
            assert!((x[i] - x_true[i]).abs() < 1e-10, "{i}: {} vs {}", x[i], x_true[i]);
        }
    }

    #[test]
    fn newton_linear_one_iteration() {
        let a = [[3.0, 1.0], [-1.0, 2.0]];
        let b = [1.0, 4.0];
        let res = |x: &[f64]| -> Result<Vec<f64>> {
            Ok((0..2).map(|i| a[i][0] * x[0] + a[i][1] * x[1] - b[i]).collect())
        };
        let jac = |_: &[f64]| -> Result<BandMatrix> {
            let mut m = BandMatrix::dense(2);
            for i in 0..2 {
                for j in 0..2 {
                    m.add(i, j, a[i][j]);
                }
            }
            Ok(m)
        };
        let (x, rep) = solve_newton(res, jac, vec![0.0, 0.0], 1e-12, 5).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
        assert!((3.0 * x[0] + x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn newton_square_root() {
        let res = |x: &[f64]| -> Result<Vec<f64>> { Ok(vec![x[0] * x[0] - 4.0]) };
        let jac = |x: &[f64]| -> Result<BandMatrix> {
            let mut m = BandMatrix::dense(1);
            m.add(0, 0, 2.0 * x[0]);
            Ok(m)
        };
        let (x, rep) = solve_newton(res, jac, vec![3.0], 1e-12, 6).unwrap();
        assert!(rep.converged);
        assert!(rep.iterations <= 6);
        assert!((x[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn newton_nan_residual_is_error() {
        let res = |_: &[f64]| -> Result<Vec<f64>> { Ok(vec![f64::NAN]) };
        let jac = |_: &[f64]| -> Result<BandMatrix> { Ok(BandMatrix::dense(1)) };
        assert!(solve_newton(res, jac, vec![1.0], 1e-12, 6).is_err());
    }
}
