//! Lowest eigenpairs of Hermitian operators and spectrum comparison.
//!
//! Two solvers: a dense Hermitian eigendecomposition for small problems and
//! a Lanczos iteration with full reorthogonalization. The Lanczos driver
//! locks converged Ritz vectors and restarts in their orthogonal complement,
//! which lets it recover every copy of a degenerate eigenvalue (a single
//! Krylov space only ever sees one). Once `k` pairs are locked, it keeps
//! searching the complement until nothing lower than the locked set remains.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PdmError, Result};
use crate::linop::{LinearOperator, C64};

/// Largest dimension accepted by the dense path.
pub const DENSE_MAX_DIM: usize = 2500;

/// Hermiticity threshold relative to `‖H‖_max` for solver input.
pub const HERMITICITY_THRESHOLD: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dense,
    Lanczos,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Dense => "dense",
            Method::Lanczos => "lanczos",
        }
    }
}

/// Lowest eigenpairs of an operator.
#[derive(Clone, Debug)]
pub struct Spectrum {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Normalized so that `Σ |ψ_n|² · measure = 1`.
    pub eigenvectors: Vec<Vec<C64>>,
    /// `‖Hψ − Eψ‖₂` for the Euclidean-normalized eigenvector, recomputed by
    /// an explicit matrix-vector product after the solve.
    pub residuals: Vec<f64>,
    pub method: Method,
    /// Lanczos steps (matrix-vector products) or 0 for the dense path.
    pub iterations: usize,
    /// Quadrature weight used for the grid inner product.
    pub measure: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Grid inner product `Σ conj(a) b · measure`.
    pub fn inner(&self, a: &[C64], b: &[C64]) -> C64 {
        dot(a, b) * self.measure
    }

    /// `index,energy,residual` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "index,energy,residual")?;
        for (i, (e, r)) in self.eigenvalues.iter().zip(&self.residuals).enumerate() {
            writeln!(w, "{i},{e:.16e},{r:.16e}")?;
        }
        Ok(())
    }
}

/// Computes the `k` smallest eigenpairs.
///
/// Residuals are certified against `tol · ‖H‖_∞` after the solve. The
/// Lanczos start vectors come from a ChaCha8 stream seeded with `seed`, so
/// identical inputs give bitwise-identical output.
pub fn solve_lowest(op: &LinearOperator, k: usize, method: Method, tol: f64, seed: u64) -> Result<Spectrum> {
    let n = op.dim();
    if k == 0 || k > n / 4 {
        return Err(PdmError::InvalidParameter(format!(
            "requested {k} eigenpairs of a {n}-dimensional operator (need 1 <= k <= dim/4)"
        )));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(PdmError::InvalidParameter(format!("solver tolerance must be positive, got {tol}")));
    }
    let defect = op.hermiticity_defect();
    let threshold = HERMITICITY_THRESHOLD * op.max_abs();
    if defect > threshold {
        return Err(PdmError::NotHermitian { defect, threshold });
    }

    let (values, vectors, iterations) = match method {
        Method::Dense => {
            if n > DENSE_MAX_DIM {
                return Err(PdmError::Unsupported(format!(
                    "dense eigensolver limited to dimension {DENSE_MAX_DIM}, got {n}"
                )));
            }
            let (v, x) = dense_lowest(op, k);
            (v, x, 0)
        }
        Method::Lanczos => Lanczos::new(op, tol, seed).lowest(k)?,
    };

    let residuals: Vec<f64> = values
        .iter()
        .zip(&vectors)
        .map(|(&e, x)| residual(op, e, x))
        .collect();
    if method == Method::Lanczos {
        let bound = tol * op.norm_inf();
        if residuals.iter().any(|&r| r > bound) {
            return Err(PdmError::NonConvergence {
                converged: residuals.iter().filter(|&&r| r <= bound).count(),
                requested: k,
                best_residuals: residuals,
            });
        }
    }

    let scale = 1.0 / op.measure().sqrt();
    let eigenvectors = vectors
        .into_iter()
        .map(|x| x.into_iter().map(|c| c * scale).collect())
        .collect();
    Ok(Spectrum {
        eigenvalues: values,
        eigenvectors,
        residuals,
        method,
        iterations,
        measure: op.measure(),
    })
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn residual(op: &LinearOperator, e: f64, x: &[C64]) -> f64 {
    let hx = op.matvec(x);
    let r: f64 = hx.iter().zip(x).map(|(h, v)| (h - v * e).norm_sqr()).sum();
    r.sqrt() / norm(x)
}

fn dense_lowest(op: &LinearOperator, k: usize) -> (Vec<f64>, Vec<Vec<C64>>) {
    let h = op.to_dense();
    let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
    let (values, vectors) = hermitian_eigen(h);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
        .into_iter()
        .take(k)
        .map(|i| (values[i], vectors.column(i).iter().copied().collect()))
        .unzip()
}

/// Eigen-decomposition of a complex Hermitian matrix.
///
/// nalgebra's Hermitian solver replaces the complex off-diagonal of its
/// tridiagonal form by the moduli without folding the phases into `Q`, which
/// leaves the eigenvectors wrong. Here the phases are recovered explicitly:
/// with `T = Q†HQ` and `D = diag(d)`, `d_{j+1} = d_j e_j/|e_j|`, the matrix
/// `D†TD` is real symmetric and `H = (QD) (D†TD) (QD)†`.
/// The real tridiagonal step uses the local QL routine; nalgebra's real
/// solver was seen to return a mixed eigenvector when an off-diagonal is
/// near roundoff.
fn hermitian_eigen(h: nalgebra::DMatrix<C64>) -> (Vec<f64>, nalgebra::DMatrix<C64>) {
    let n = h.nrows();
    let q = nalgebra::linalg::SymmetricTridiagonal::new(h.clone()).q();
    let hq = &h * &q;
    let mut diag = vec![0.0; n];
    let mut offdiag = vec![0.0; n];
    let mut phase = vec![C64::new(1.0, 0.0); n];
    for j in 0..n {
        diag[j] = q.column(j).dotc(&hq.column(j)).re;
        if j + 1 < n {
            let e = q.column(j + 1).dotc(&hq.column(j));
            let m = e.norm();
            phase[j + 1] = if m > 0.0 { phase[j] * e / m } else { phase[j] };
            offdiag[j] = m;
        }
    }
    let (values, z) = tridiagonal_eigen(&diag, &offdiag);
    let mut qd = q;
    for (j, d) in phase.iter().enumerate() {
        qd.column_mut(j).iter_mut().for_each(|c| *c *= d);
    }
    let v = nalgebra::DMatrix::from_fn(n, n, |i, j| C64::new(z[i][j], 0.0));
    (values, qd * v)
}

/// Eigenvalues of a real symmetric tridiagonal matrix by implicit QL, with the
/// last row of the eigenvector matrix accumulated alongside. Returns
/// `(eigenvalue, last component)` pairs sorted ascending.
fn tridiagonal_eigen_last_row(diag: &[f64], offdiag: &[f64]) -> Vec<(f64, f64)> {
    let n = diag.len();
    let (d, z) = tridiagonal_ql(diag, offdiag, &[n - 1]);
    let mut pairs: Vec<(f64, f64)> = d.into_iter().zip(z.into_iter().next().unwrap()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// Full eigendecomposition of a real symmetric tridiagonal matrix. Values are
/// ascending; column `j` of the returned row-major matrix pairs with value `j`.
fn tridiagonal_eigen(diag: &[f64], offdiag: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = diag.len();
    let rows: Vec<usize> = (0..n).collect();
    let (d, z) = tridiagonal_ql(diag, offdiag, &rows);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values = order.iter().map(|&j| d[j]).collect();
    let vectors = z.iter().map(|row| order.iter().map(|&j| row[j]).collect()).collect();
    (values, vectors)
}

/// Implicit QL iterations. Only the requested rows of the eigenvector matrix
/// are tracked. Eigenvalues come back unsorted.
fn tridiagonal_ql(diag: &[f64], offdiag: &[f64], rows: &[usize]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&offdiag[..n - 1]);
    let mut z: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| {
            let mut row = vec![0.0; n];
            row[r] = 1.0;
            row
        })
        .collect();

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 200 {
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in z.iter_mut() {
                    let zf = row[i + 1];
                    row[i + 1] = s * row[i] + c * zf;
                    row[i] = c * row[i] - s * zf;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    (d, z)
}

/// Eigenvector of a symmetric tridiagonal matrix for an accurate eigenvalue
/// estimate, by inverse iteration with a partially pivoted LU. Each sweep is
/// kept orthogonal to `cluster`, the vectors already found for nearby
/// eigenvalues, so close pairs do not collapse onto one vector.
fn tridiagonal_eigenvector(diag: &[f64], offdiag: &[f64], theta: f64, cluster: &[&Vec<f64>]) -> Vec<f64> {
    let n = diag.len();
    if n == 1 {
        return vec![1.0];
    }
    let scale = diag.iter().map(|d| d.abs()).chain(offdiag.iter().map(|e| e.abs())).fold(0.0, f64::max);
    let shift = theta + f64::EPSILON * scale.max(f64::MIN_POSITIVE) * 10.0;
    let tiny = f64::EPSILON * scale.max(f64::MIN_POSITIVE);

    // LAPACK gttrf layout.
    let mut dl = offdiag[..n - 1].to_vec();
    let mut d: Vec<f64> = diag.iter().map(|x| x - shift).collect();
    let mut du = offdiag[..n - 1].to_vec();
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    let mut swapped = vec![false; n - 1];
    for i in 0..n - 1 {
        if d[i].abs() >= dl[i].abs() {
            if d[i] == 0.0 {
                d[i] = tiny;
            }
            let fact = dl[i] / d[i];
            dl[i] = fact;
            d[i + 1] -= fact * du[i];
        } else {
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            dl[i] = fact;
            let temp = du[i];
            du[i] = d[i + 1];
            d[i + 1] = temp - fact * d[i + 1];
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] *= -fact;
            }
            swapped[i] = true;
        }
    }
    if d[n - 1] == 0.0 {
        d[n - 1] = tiny;
    }

    let solve = |b: &mut [f64]| {
        for i in 0..n - 1 {
            if swapped[i] {
                b.swap(i, i + 1);
            }
            b[i + 1] -= dl[i] * b[i];
        }
        b[n - 1] /= d[n - 1];
        b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
        }
    };

    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * ((i * 7919) % 101) as f64).collect();
    let sweeps = if cluster.is_empty() { 3 } else { 5 };
    for _ in 0..sweeps {
        solve(&mut x);
        for c in cluster {
            let overlap: f64 = c.iter().zip(&x).map(|(a, b)| a * b).sum();
            x.iter_mut().zip(c.iter()).for_each(|(v, a)| *v -= overlap * a);
        }
        let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        x.iter_mut().for_each(|v| *v /= nrm);
    }
    x
}

/// Ritz values closer than this (relative to `‖T‖`) are treated as a
/// cluster when computing their vectors.
const CLUSTER_GAP: f64 = 1e-3;

struct RunOutcome {
    /// Ritz pairs ascending: value, vector, residual estimate.
    ritz: Vec<(f64, Vec<C64>, f64)>,
    steps: usize,
}

struct Lanczos<'a> {
    op: &'a LinearOperator,
    threshold: f64,
    rng: ChaCha8Rng,
    max_basis: usize,
    max_runs: usize,
}

impl<'a> Lanczos<'a> {
    fn new(op: &'a LinearOperator, tol: f64, seed: u64) -> Self {
        Self {
            op,
            threshold: tol * op.norm_inf(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            max_basis: 1200,
            max_runs: 64,
        }
    }

    fn random_vector(&mut self) -> Vec<C64> {
        (0..self.op.dim())
            .map(|_| C64::new(self.rng.gen::<f64>() - 0.5, self.rng.gen::<f64>() - 0.5))
            .collect()
    }

    /// Removes the components along `basis` (classical Gram–Schmidt, two passes).
    fn orthogonalize(w: &mut [C64], basis: &[Vec<C64>]) {
        for _ in 0..2 {
            for q in basis {
                let c = dot(q, w);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
    }

    /// One Lanczos run from `start` in the complement of `locked`, stopping
    /// once the lowest `want` Ritz values have converged.
    fn run(&self, start: Vec<C64>, locked: &[Vec<C64>], want: usize) -> Option<RunOutcome> {
        let n = self.op.dim();
        let room = n - locked.len();
        if room == 0 {
            return None;
        }
        let m_max = room.min(self.max_basis);
        let mut q = start;
        Self::orthogonalize(&mut q, locked);
        let nq = norm(&q);
        if nq == 0.0 {
            return None;
        }
        q.iter_mut().for_each(|c| *c /= nq);

        let mut basis: Vec<Vec<C64>> = vec![q];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        let mut w = vec![C64::new(0.0, 0.0); n];
        let hnorm = self.op.norm_inf().max(f64::MIN_POSITIVE);
        let mut next_check = 8;

        loop {
            let j = alphas.len();
            self.op.matvec_into(&basis[j], &mut w);
            let alpha = dot(&basis[j], &w).re;
            for (wi, qi) in w.iter_mut().zip(&basis[j]) {
                *wi -= qi * alpha;
            }
            if j > 0 {
                let b = betas[j - 1];
                for (wi, qi) in w.iter_mut().zip(&basis[j - 1]) {
                    *wi -= qi * b;
                }
            }
            Self::orthogonalize(&mut w, locked);
            Self::orthogonalize(&mut w, &basis);
            let beta = norm(&w);
            alphas.push(alpha);
            let steps = alphas.len();
            let invariant = beta <= 1e-13 * hnorm;

            if steps >= next_check || invariant || steps == m_max {
                next_check = steps + (steps / 16).max(8);
                let pairs = tridiagonal_eigen_last_row(&alphas, &betas_with(&betas, steps));
                let estimates: Vec<f64> = pairs.iter().map(|&(_, z)| if invariant { 0.0 } else { beta * z.abs() }).collect();
                let converged = estimates.iter().take(want).take_while(|&&r| r <= self.threshold).count();
                if converged >= want.min(steps) || invariant || steps == m_max {
                    let keep = if converged == 0 { 1 } else { converged };
                    let offdiag = betas_with(&betas, steps);
                    let scale = alphas.iter().chain(&offdiag).fold(0.0_f64, |m, v| m.max(v.abs()));
                    let mut vectors: Vec<(f64, Vec<f64>)> = Vec::with_capacity(keep);
                    let mut ritz = Vec::with_capacity(keep);
                    for (&(theta, _), &est) in pairs.iter().zip(&estimates).take(keep) {
                        let cluster: Vec<&Vec<f64>> = vectors
                            .iter()
                            .filter(|(t, _)| (theta - t).abs() <= CLUSTER_GAP * scale)
                            .map(|(_, v)| v)
                            .collect();
                        let s = tridiagonal_eigenvector(&alphas, &offdiag, theta, &cluster);
                        let mut y = vec![C64::new(0.0, 0.0); n];
                        for (sk, qk) in s.iter().zip(&basis) {
                            for (yi, qi) in y.iter_mut().zip(qk) {
                                *yi += qi * *sk;
                            }
                        }
                        ritz.push((theta, y, est));
                        vectors.push((theta, s));
                    }
                    return Some(RunOutcome { ritz, steps });
                }
            }
            betas.push(beta);
            let inv = 1.0 / beta;
            basis.push(w.iter().map(|c| c * inv).collect());
        }
    }

    fn lowest(mut self, k: usize) -> Result<(Vec<f64>, Vec<Vec<C64>>, usize)> {
        let mut locked: Vec<Vec<C64>> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut steps = 0;
        let mut restart: Option<Vec<C64>> = None;
        let mut best = Vec::new();

        for _ in 0..self.max_runs {
            let searching = locked.len() < k;
            let want = if searching { k - locked.len() } else { 1 };
            let start = restart.take().unwrap_or_else(|| self.random_vector());
            let Some(outcome) = self.run(start, &locked, want) else {
                if locked.len() >= k {
                    return Ok(self.finish(locked, steps));
                }
                break;
            };
            steps += outcome.steps;
            let mut progressed = false;
            for (theta, mut y, est) in outcome.ritz {
                if est > self.threshold {
                    // Unconverged: resume from the best Ritz vector.
                    best = vec![est];
                    restart = Some(y);
                    break;
                }
                if !searching {
                    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    if theta >= top - self.threshold {
                        // Nothing below the locked set: done.
                        return Ok(self.finish(locked, steps));
                    }
                    let worst = values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap();
                    locked.remove(worst);
                    values.remove(worst);
                }
                Self::orthogonalize(&mut y, &locked);
                let ny = norm(&y);
                y.iter_mut().for_each(|c| *c /= ny);
                locked.push(y);
                values.push(theta);
                progressed = true;
                if !searching {
                    break;
                }
            }
            if !progressed && restart.is_none() {
                break;
            }
        }
        Err(PdmError::NonConvergence {
            converged: locked.len().min(k),
            requested: k,
            best_residuals: best,
        })
    }

    /// Rayleigh–Ritz on the locked subspace.
    fn finish(&self, locked: Vec<Vec<C64>>, steps: usize) -> (Vec<f64>, Vec<Vec<C64>>, usize) {
        let m = locked.len();
        let hq: Vec<Vec<C64>> = locked.iter().map(|q| self.op.matvec(q)).collect();
        let mut proj = nalgebra::DMatrix::<C64>::zeros(m, m);
        for a in 0..m {
            for b in 0..m {
                proj[(a, b)] = dot(&locked[a], &hq[b]);
            }
        }
        let proj = (&proj + proj.adjoint()) * C64::new(0.5, 0.0);
        let (eigenvalues, eigenvectors) = hermitian_eigen(proj);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eigenvalues[a].total_cmp(&eigenvalues[b]));
        let n = self.op.dim();
        let (values, vectors) = order
            .into_iter()
            .map(|i| {
                let mut y = vec![C64::new(0.0, 0.0); n];
                for (c, q) in eigenvectors.column(i).iter().zip(&locked) {
                    for (yi, qi) in y.iter_mut().zip(q) {
                        *yi += qi * c;
                    }
                }
                (eigenvalues[i], y)
            })
            .unzip();
        (values, vectors, steps)
    }
}

fn betas_with(betas: &[f64], steps: usize) -> Vec<f64> {
    let mut e = betas.to_vec();
    e.resize(steps, 0.0);
    e
}

/// Per-level comparison of two spectra.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelComparison {
    pub level: usize,
    pub e1: f64,
    pub e2: f64,
    pub abs_diff: f64,
    pub rel_diff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub levels: Vec<LevelComparison>,
    pub max_abs_diff: f64,
    pub mean_abs_diff: f64,
    pub max_rel_diff: f64,
    pub mean_rel_diff: f64,
}

/// Compares the first `k` levels of two ascending eigenvalue lists, level by
/// level, so degenerate clusters are matched as sorted multisets.
pub fn compare_spectra(s1: &[f64], s2: &[f64], k: usize) -> Result<ComparisonReport> {
    if k == 0 || k > s1.len() || k > s2.len() {
        return Err(PdmError::InvalidParameter(format!(
            "cannot compare {k} levels of spectra with {} and {} levels",
            s1.len(),
            s2.len()
        )));
    }
    let levels: Vec<LevelComparison> = (0..k)
        .map(|i| {
            let (e1, e2) = (s1[i], s2[i]);
            let abs_diff = (e1 - e2).abs();
            let scale = e1.abs().max(e2.abs());
            let rel_diff = if scale > 0.0 { abs_diff / scale } else { 0.0 };
            LevelComparison {
                level: i,
                e1,
                e2,
                abs_diff,
                rel_diff,
            }
        })
        .collect();
    let kf = k as f64;
    Ok(ComparisonReport {
        max_abs_diff: levels.iter().map(|l| l.abs_diff).fold(0.0, f64::max),
        mean_abs_diff: levels.iter().map(|l| l.abs_diff).sum::<f64>() / kf,
        max_rel_diff: levels.iter().map(|l| l.rel_diff).fold(0.0, f64::max),
        mean_rel_diff: levels.iter().map(|l| l.rel_diff).sum::<f64>() / kf,
        levels,
    })
}

/// Discretization error of each fine-grid level estimated from one
/// refinement step of a second-order scheme: `|E_f − E_c| / (r² − 1)` with
/// `r = h_coarse / h_fine`.
pub fn refinement_error(coarse: &[f64], fine: &[f64], h_coarse: f64, h_fine: f64) -> Vec<f64> {
    let r2 = (h_coarse / h_fine).powi(2);
    coarse
        .iter()
        .zip(fine)
        .map(|(c, f)| (f - c).abs() / (r2 - 1.0))
        .collect()
}

/// Margin by which a level gap must exceed the discretization error.
pub const VERDICT_FACTOR: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "distinct")]
    Distinct,
    #[serde(rename = "indistinguishable at this resolution")]
    Indistinguishable,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Distinct => "distinct",
            Verdict::Indistinguishable => "indistinguishable at this resolution",
        }
    }
}

/// Fine- and coarse-grid eigenvalues of one operator family.
#[derive(Clone, Debug)]
pub struct RefinedSpectrum {
    pub fine: Vec<f64>,
    pub coarse: Vec<f64>,
    pub h_fine: f64,
    pub h_coarse: f64,
}

impl RefinedSpectrum {
    pub fn errors(&self) -> Vec<f64> {
        refinement_error(&self.coarse, &self.fine, self.h_coarse, self.h_fine)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distinguishability {
    pub report: ComparisonReport,
    /// Estimated discretization error of each fine-grid level, first operator.
    pub error1: Vec<f64>,
    pub error2: Vec<f64>,
    /// Largest `|Δ_i| / (err1_i + err2_i)` over the compared levels.
    pub max_gap_over_error: f64,
    pub factor: f64,
    pub verdict: Verdict,
}

/// Two operators are distinct when some level gap exceeds
/// [`VERDICT_FACTOR`] times the sum of the two per-level error estimates.
pub fn distinguish(a: &RefinedSpectrum, b: &RefinedSpectrum, k: usize) -> Result<Distinguishability> {
    let report = compare_spectra(&a.fine, &b.fine, k)?;
    if a.coarse.len() < k || b.coarse.len() < k {
        return Err(PdmError::InvalidParameter(format!("coarse spectra have fewer than {k} levels")));
    }
    let (error1, error2) = (a.errors(), b.errors());
    let mut distinct = false;
    let mut max_ratio: f64 = 0.0;
    for (i, level) in report.levels.iter().enumerate() {
        let err = error1[i] + error2[i];
        if level.abs_diff > VERDICT_FACTOR * err {
            distinct = true;
        }
        let ratio = if err > 0.0 {
            level.abs_diff / err
        } else if level.abs_diff > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        max_ratio = max_ratio.max(ratio);
    }
    Ok(Distinguishability {
        report,
        error1: error1[..k].to_vec(),
        error2: error2[..k].to_vec(),
        max_gap_over_error: max_ratio,
        factor: VERDICT_FACTOR,
        verdict: if distinct {
            Verdict::Distinct
        } else {
            Verdict::Indistinguishable
        },
    })
}
