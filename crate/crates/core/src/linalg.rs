//! Dense linear algebra for the small Hermitian problems the detector solves.
//!
//! Two independent eigenvalue routes are provided: a cyclic complex Jacobi
//! solver (`eigh`, values and vectors) and Householder tridiagonalization
//! followed by implicit QL (`eigvalsh`, values only). The Monte-Carlo loops use
//! the latter since they only need λ_max.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

pub type C64 = Complex64;

/// Square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    n: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        CMatrix { n, data: vec![C64::new(0.0, 0.0); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Real symmetric matrix lifted to the complex type.
    pub fn from_real(a: &[Vec<f64>]) -> Self {
        Self::from_fn(a.len(), |i, j| C64::new(a[i][j], 0.0))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)].re).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest |A_ij − conj(A_ji)|.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in i..self.n {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let row = &self.data[i * self.n..(i + 1) * self.n];
                row.iter().zip(x).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// `diag(w) · A · diag(w)` for real weights `w`.
    pub fn congruence_diag(&self, w: &[f64]) -> CMatrix {
        assert_eq!(w.len(), self.n);
        CMatrix::from_fn(self.n, |i, j| self[(i, j)] * (w[i] * w[j]))
    }

    /// Principal submatrix on rows/columns `start..start + len`.
    pub fn principal(&self, start: usize, len: usize) -> CMatrix {
        CMatrix::from_fn(len, |i, j| self[(start + i, start + j)])
    }

    /// Copy of the matrix with the off-diagonal blocks between
    /// `0..split` and `split..n` zeroed.
    pub fn block_diagonal_part(&self, split: usize) -> CMatrix {
        CMatrix::from_fn(self.n, |i, j| {
            if (i < split) == (j < split) {
                self[(i, j)]
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// Quadratic form xᴴ A x (real part; exact for Hermitian A).
    pub fn quad_form(&self, x: &[C64]) -> f64 {
        let ax = self.mul_vec(x);
        x.iter().zip(&ax).map(|(a, b)| a.conj() * b).sum::<C64>().re
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.n + j]
    }
}

pub fn dot_h(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm2(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Eigenvectors as columns, in the order of `values`.
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn vector(&self, k: usize) -> Vec<C64> {
        let n = self.vectors.dim();
        (0..n).map(|i| self.vectors[(i, k)]).collect()
    }

    pub fn max(&self) -> f64 {
        self.values[0]
    }
}

/// Rotate `v` by a unit phase so that its largest-magnitude entry is real and
/// positive. Ties go to the lowest index.
pub fn normalize_phase(v: &mut [C64]) {
    let mut best = 0;
    let mut best_mag = -1.0;
    for (i, z) in v.iter().enumerate() {
        let m = z.norm();
        if m > best_mag * (1.0 + 1e-12) {
            best = i;
            best_mag = m;
        }
    }
    if best_mag <= 0.0 {
        return;
    }
    let ph = v[best].conj() / best_mag;
    for z in v.iter_mut() {
        *z *= ph;
    }
    v[best] = C64::new(v[best].re, 0.0);
}

/// Cyclic Jacobi eigen-solver for Hermitian matrices.
///
/// Each rotation first removes the phase of the pivot so the real 2×2 Jacobi
/// rotation applies. Sweeps stop once the off-diagonal mass is below
/// `1e-15 · ‖A‖_F` (or after 100 sweeps).
pub fn eigh(a: &CMatrix) -> HermitianEigen {
    let n = a.dim();
    let mut m = CMatrix::from_fn(n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)].conj()));
    let mut v = CMatrix::identity(n);
    let scale = m.frobenius();

    if scale > 0.0 {
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in p + 1..n {
                    off += m[(p, q)].norm_sqr();
                }
            }
            if off.sqrt() <= 1e-15 * scale {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = m[(p, q)];
                    let g = apq.norm();
                    if g <= 1e-300 || g <= 1e-18 * scale {
                        continue;
                    }
                    let app = m[(p, p)].re;
                    let aqq = m[(q, q)].re;
                    let theta = (aqq - app) / (2.0 * g);
                    let t = if theta.abs() > 1e150 {
                        0.5 / theta
                    } else {
                        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                    };
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    let e = apq / g;
                    // J = diag(1, conj(e)) · [[c, s], [-s, c]]
                    let jpp = C64::new(c, 0.0);
                    let jpq = C64::new(s, 0.0);
                    let jqp = -e.conj() * s;
                    let jqq = e.conj() * c;

                    for k in 0..n {
                        let akp = m[(k, p)];
                        let akq = m[(k, q)];
                        m[(k, p)] = akp * jpp + akq * jqp;
                        m[(k, q)] = akp * jpq + akq * jqq;
                    }
                    for k in 0..n {
                        let apk = m[(p, k)];
                        let aqk = m[(q, k)];
                        m[(p, k)] = jpp.conj() * apk + jqp.conj() * aqk;
                        m[(q, k)] = jpq.conj() * apk + jqq.conj() * aqk;
                    }
                    m[(p, q)] = C64::new(0.0, 0.0);
                    m[(q, p)] = C64::new(0.0, 0.0);
                    m[(p, p)] = C64::new(m[(p, p)].re, 0.0);
                    m[(q, q)] = C64::new(m[(q, q)].re, 0.0);

                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = vkp * jpp + vkq * jqp;
                        v[(k, q)] = vkp * jpq + vkq * jqq;
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].re.total_cmp(&m[(i, i)].re).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[(i, i)].re).collect();
    let mut vectors = CMatrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        let mut vec: Vec<C64> = (0..n).map(|r| v[(r, src)]).collect();
        normalize_phase(&mut vec);
        for r in 0..n {
            vectors[(r, col)] = vec[r];
        }
    }
    HermitianEigen { values, vectors }
}

/// Eigenvalues of a Hermitian matrix, descending, via Householder
/// tridiagonalization and implicit QL.
pub fn eigvalsh(a: &CMatrix) -> Vec<f64> {
    let n = a.dim();
    if n == 0 {
        return Vec::new();
    }
    let (mut d, mut e) = tridiagonalize(a);
    tridiagonal_ql(&mut d, &mut e);
    d.sort_by(|x, y| y.total_cmp(x));
    d
}

/// Largest eigenvalue of a Hermitian matrix.
pub fn lambda_max(a: &CMatrix) -> f64 {
    match a.dim() {
        0 => 0.0,
        1 => a[(0, 0)].re,
        _ => eigvalsh(a)[0],
    }
}

/// Reduce a Hermitian matrix to a real symmetric tridiagonal one with the
/// same spectrum. Returns (diagonal, |sub-diagonal|) with the last
/// sub-diagonal entry set to zero.
fn tridiagonalize(a: &CMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = a.dim();
    let mut m = a.clone();
    let mut off = vec![0.0; n];
    let mut v = vec![C64::new(0.0, 0.0); n];
    let mut p = vec![C64::new(0.0, 0.0); n];

    for k in 0..n.saturating_sub(2) {
        let len = n - k - 1;
        let mut xnorm2 = 0.0;
        for i in 0..len {
            v[i] = m[(k + 1 + i, k)];
            xnorm2 += v[i].norm_sqr();
        }
        let xnorm = xnorm2.sqrt();
        if xnorm == 0.0 {
            off[k] = 0.0;
            continue;
        }
        let x0 = v[0];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { C64::new(1.0, 0.0) };
        let alpha = -phase * xnorm;
        v[0] -= alpha;
        let vnorm = norm2(&v[..len]);
        if vnorm == 0.0 {
            off[k] = xnorm;
            continue;
        }
        for z in v[..len].iter_mut() {
            *z /= vnorm;
        }
        // p = A22 v, K = vᴴ p, q = p − K v, A22 ← A22 − 2(v qᴴ + q vᴴ)
        for i in 0..len {
            let row = k + 1 + i;
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..len {
                acc += m[(row, k + 1 + j)] * v[j];
            }
            p[i] = acc;
        }
        let kk = dot_h(&v[..len], &p[..len]).re;
        for i in 0..len {
            p[i] -= v[i] * kk;
        }
        for i in 0..len {
            for j in 0..len {
                let upd = v[i] * p[j].conj() + p[i] * v[j].conj();
                m[(k + 1 + i, k + 1 + j)] -= 2.0 * upd;
            }
        }
        off[k] = alpha.norm();
    }
    if n >= 2 {
        off[n - 2] = m[(n - 1, n - 2)].norm();
    }
    off[n - 1] = 0.0;
    let diag = (0..n).map(|i| m[(i, i)].re).collect();
    (diag, off)
}

/// Implicit QL with Wilkinson-style shifts on a symmetric tridiagonal matrix.
/// `e[i]` couples rows `i` and `i + 1`; `e[n-1]` must be zero.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
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
                log::warn!("tridiagonal QL did not converge at index {l}");
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
}

/// Thin SVD of a real m×n matrix (m ≥ n) by one-sided Jacobi.
#[derive(Debug, Clone)]
pub struct RealSvd {
    /// Left singular vectors (columns, each length m); zero columns where σ = 0.
    pub u: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    /// Right singular vectors (columns, each length n).
    pub v: Vec<Vec<f64>>,
}

impl RealSvd {
    /// `rows` is the matrix given as a list of rows of equal length.
    pub fn new(rows: &[Vec<f64>]) -> RealSvd {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| rows[i][j]).collect()).collect();
        let mut v: Vec<Vec<f64>> =
            (0..n).map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect()).collect();

        for _ in 0..60 {
            let mut rotated = false;
            for p in 0..n {
                for q in p + 1..n {
                    let alpha: f64 = cols[p].iter().map(|x| x * x).sum();
                    let beta: f64 = cols[q].iter().map(|x| x * x).sum();
                    let gamma: f64 = cols[p].iter().zip(&cols[q]).map(|(a, b)| a * b).sum();
                    if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let t = if zeta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for i in 0..m {
                        let (a, b) = (cols[p][i], cols[q][i]);
                        cols[p][i] = c * a - s * b;
                        cols[q][i] = s * a + c * b;
                    }
                    for i in 0..n {
                        let (a, b) = (v[p][i], v[q][i]);
                        v[p][i] = c * a - s * b;
                        v[q][i] = s * a + c * b;
                    }
                }
            }
            if !rotated {
                break;
            }
        }

        let mut sigma = Vec::with_capacity(n);
        let mut u = Vec::with_capacity(n);
        for col in cols {
            let s = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            sigma.push(s);
            u.push(if s > 0.0 { col.iter().map(|x| x / s).collect() } else { col });
        }
        RealSvd { u, sigma, v }
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma.iter().cloned().fold(0.0, f64::max)
    }

    /// Number of singular values above `rel_cutoff · σ_max`.
    pub fn rank(&self, rel_cutoff: f64) -> usize {
        let cut = rel_cutoff * self.sigma_max();
        self.sigma.iter().filter(|&&s| s > cut && s > 0.0).count()
    }

    /// Apply the Moore-Penrose pseudoinverse to a complex right-hand side.
    pub fn pinv_apply(&self, b: &[C64], rel_cutoff: f64) -> Vec<C64> {
        let n = self.v.len();
        let cut = rel_cutoff * self.sigma_max();
        let mut x = vec![C64::new(0.0, 0.0); n];
        for j in 0..n {
            let s = self.sigma[j];
            if s <= cut || s == 0.0 {
                continue;
            }
            let coef: C64 = self.u[j].iter().zip(b).map(|(u, z)| z * *u).sum::<C64>() / s;
            for i in 0..n {
                x[i] += coef * self.v[j][i];
            }
        }
        x
    }
}
