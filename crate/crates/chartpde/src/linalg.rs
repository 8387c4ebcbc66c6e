//! Sparse and banded linear algebra used by the assembly, Newton, and
//! eigenvalue layers: CSR matrices, a banded LU with partial pivoting,
//! and a shift-invert smallest-eigenpair iteration for the generalized
//! symmetric problem K x = λ M x with diagonal M.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is numerically singular (pivot {pivot:.3e} below {threshold:.3e})")]
    Singular { pivot: f64, threshold: f64 },
    #[error("eigenvalue iteration did not converge after {0} iterations")]
    EigenNoConvergence(usize),
}

/// Compressed sparse row matrix. Duplicate triplets are summed.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut t: Vec<(usize, usize, f64)>) -> Csr {
        t.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut cols = Vec::with_capacity(t.len());
        let mut vals: Vec<f64> = Vec::with_capacity(t.len());
        let mut rows: Vec<usize> = Vec::with_capacity(t.len());
        for &(r, c, v) in &t {
            if rows.last() == Some(&r) && cols.last() == Some(&c) {
                *vals.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                cols.push(c);
                vals.push(v);
            }
        }
        let mut row_ptr = vec![0usize; n_rows + 1];
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Csr {
            n_rows,
            n_cols,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n_rows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[r] = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec(x, &mut y);
        y
    }

    /// Entrywise sum of two matrices of the same shape.
    pub fn add(&self, other: &Csr) -> Csr {
        assert_eq!(self.n_rows, other.n_rows);
        assert_eq!(self.n_cols, other.n_cols);
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        for m in [self, other] {
            for r in 0..m.n_rows {
                for k in m.row_ptr[r]..m.row_ptr[r + 1] {
                    t.push((r, m.cols[k], m.vals[k]));
                }
            }
        }
        Csr::from_triplets(self.n_rows, self.n_cols, t)
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for r in 0..self.n_rows {
            let mut row = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row += self.vals[k] * x[self.cols[k]];
            }
            acc += x[r] * row;
        }
        acc
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |a: f64, &v| a.max(v.abs()))
    }

    /// Half bandwidths (kl below, ku above the diagonal).
    pub fn bandwidths(&self) -> (usize, usize) {
        let (mut kl, mut ku) = (0usize, 0usize);
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.cols[k];
                if self.vals[k] != 0.0 {
                    if c < r {
                        kl = kl.max(r - c);
                    } else {
                        ku = ku.max(c - r);
                    }
                }
            }
        }
        (kl, ku)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.cols[k])] += self.vals[k];
            }
        }
        m
    }

    /// max |A - A^T|, for the symmetry invariant of assembled operators.
    pub fn symmetry_defect(&self) -> f64 {
        let mut at: Vec<(usize, usize, f64)> = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                at.push((self.cols[k], r, self.vals[k]));
            }
        }
        let t = Csr::from_triplets(self.n_cols, self.n_rows, at);
        let mut defect = 0.0f64;
        for r in 0..self.n_rows {
            let a = &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]];
            let av = &self.vals[self.row_ptr[r]..self.row_ptr[r + 1]];
            let b = &t.cols[t.row_ptr[r]..t.row_ptr[r + 1]];
            let bv = &t.vals[t.row_ptr[r]..t.row_ptr[r + 1]];
            let (mut i, mut j) = (0, 0);
            while i < a.len() || j < b.len() {
                match (a.get(i), b.get(j)) {
                    (Some(&ca), Some(&cb)) if ca == cb => {
                        defect = defect.max((av[i] - bv[j]).abs());
                        i += 1;
                        j += 1;
                    }
                    (Some(&ca), Some(&cb)) if ca < cb => {
                        defect = defect.max(av[i].abs());
                        i += 1;
                    }
                    (Some(_), Some(_)) => {
                        defect = defect.max(bv[j].abs());
                        j += 1;
                    }
                    (Some(_), None) => {
                        defect = defect.max(av[i].abs());
                        i += 1;
                    }
                    (None, Some(_)) => {
                        defect = defect.max(bv[j].abs());
                        j += 1;
                    }
                    (None, None) => break,
                }
            }
        }
        defect
    }
}

/// Banded matrix in LAPACK general-band layout with room for fill-in,
/// factored in place by `factor`.
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    /// column-major, (2*kl + ku + 1) rows per column
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandedLu {
    fn storage_rows(kl: usize, ku: usize) -> usize {
        2 * kl + ku + 1
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        // valid when j <= i + kl and i <= j + ku + kl
        j * Self::storage_rows(self.kl, self.ku) + (self.kl + self.ku + i - j)
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.ab[self.idx(i, j)]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.ab[k] = v;
    }

    /// Build the band storage from a CSR matrix plus an optional diagonal
    /// shift: A - shift * diag(d).
    pub fn from_csr(a: &Csr, shift: f64, d: Option<&[f64]>) -> BandedLu {
        assert_eq!(a.n_rows, a.n_cols);
        let n = a.n_rows;
        let (kl, ku) = a.bandwidths();
        let mut m = BandedLu {
            n,
            kl,
            ku,
            ab: vec![0.0; n * Self::storage_rows(kl, ku)],
            ipiv: vec![0; n],
        };
        for r in 0..n {
            for k in a.row_ptr[r]..a.row_ptr[r + 1] {
                let c = a.cols[k];
                let k2 = m.idx(r, c);
                m.ab[k2] += a.vals[k];
            }
        }
        if shift != 0.0 {
            for i in 0..n {
                let di = d.map(|d| d[i]).unwrap_or(1.0);
                let k = m.idx(i, i);
                m.ab[k] -= shift * di;
            }
        }
        m
    }

    /// LU factorization with partial pivoting; fails on a pivot below
    /// `1e-14 * scale` where scale is the largest entry magnitude.
    pub fn factor(&mut self) -> Result<(), LinalgError> {
        let n = self.n;
        let scale = self.ab.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        let threshold = 1e-14 * scale.max(1e-300);
        let width = self.ku + self.kl; // max fill column offset
        for k in 0..n {
            let imax = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in (k + 1)..=imax {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best < threshold {
                return Err(LinalgError::Singular {
                    pivot: best,
                    threshold,
                });
            }
            self.ipiv[k] = p;
            let jmax = (k + width).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let a = self.get(k, j);
                    let b = self.get(p, j);
                    self.set(k, j, b);
                    self.set(p, j, a);
                }
            }
            let pivot = self.get(k, k);
            for i in (k + 1)..=imax {
                let m = self.get(i, k) / pivot;
                self.set(i, k, m);
                if m != 0.0 {
                    for j in (k + 1)..=jmax {
                        let v = self.get(i, j) - m * self.get(k, j);
                        self.set(i, j, v);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        // forward: apply P and L
        for k in 0..n {
            let p = self.ipiv[k];
            if p != k {
                x.swap(k, p);
            }
            let imax = (k + self.kl).min(n - 1);
            for i in (k + 1)..=imax {
                let m = self.get(i, k);
                if m != 0.0 {
                    x[i] -= m * x[k];
                }
            }
        }
        // backward: U x = y
        let width = self.ku + self.kl;
        for k in (0..n).rev() {
            let jmax = (k + width).min(n - 1);
            let mut acc = x[k];
            for j in (k + 1)..=jmax {
                acc -= self.get(k, j) * x[j];
            }
            x[k] = acc / self.get(k, k);
        }
        x
    }
}

/// Smallest eigenpair of K x = λ M x with M = diag(m) positive.
///
/// Dense below `dense_threshold` nodes, shift-invert inverse iteration
/// with a Rayleigh-quotient refinement above it. The returned vector is
/// M-normalized.
pub fn smallest_eigenpair(
    k: &Csr,
    m_diag: &[f64],
    dense_threshold: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>), LinalgError> {
    let n = k.n_rows;
    assert_eq!(n, m_diag.len());
    if n <= dense_threshold {
        // standard form: D^{-1/2} K D^{-1/2}
        let s: Vec<f64> = m_diag.iter().map(|&d| d.sqrt()).collect();
        let mut a = k.to_dense();
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] /= s[i] * s[j];
            }
        }
        // enforce exact symmetry before the dense solve
        let at = a.transpose();
        let a = (a + at) * 0.5;
        let eig = a.symmetric_eigen();
        let mut best = 0;
        for i in 1..n {
            if eig.eigenvalues[i] < eig.eigenvalues[best] {
                best = i;
            }
        }
        let lambda = eig.eigenvalues[best];
        let mut v: Vec<f64> = (0..n).map(|i| eig.eigenvectors[(i, best)] / s[i]).collect();
        normalize_m(&mut v, m_diag);
        Ok((lambda, v))
    } else {
        shift_invert_smallest(k, m_diag, seed)
    }
}

fn normalize_m(v: &mut [f64], m_diag: &[f64]) {
    let norm = v
        .iter()
        .zip(m_diag)
        .map(|(&x, &d)| d * x * x)
        .sum::<f64>()
        .sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    // deterministic sign: largest-magnitude entry positive
    if let Some(piv) = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        .map(|(i, _)| i)
    {
        if v[piv] < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
}

fn shift_invert_smallest(
    k: &Csr,
    m_diag: &[f64],
    seed: u64,
) -> Result<(f64, Vec<f64>), LinalgError> {
    use rand::Rng;
    use rand::SeedableRng;
    let n = k.n_rows;
    // elementwise lower bound: K = K0 + D with K0 PSD and D the diagonal
    // weight part, so λ_min >= min_i (K_ii - rowsum of PSD part)/M_ii is
    // too pessimistic; use a Gershgorin-style bound on D^{-1/2}KD^{-1/2}.
    let s: Vec<f64> = m_diag.iter().map(|&d| d.sqrt()).collect();
    let mut bound = f64::INFINITY;
    for r in 0..n {
        let mut diag = 0.0;
        let mut off = 0.0;
        for t in k.row_ptr[r]..k.row_ptr[r + 1] {
            let v = k.vals[t] / (s[r] * s[k.cols[t]]);
            if k.cols[t] == r {
                diag += v;
            } else {
                off += v.abs();
            }
        }
        bound = bound.min(diag - off);
    }
    let scale = 1.0 + bound.abs();
    let mut sigma = bound - 0.01 * scale;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| 1.0 + 0.01 * rng.gen::<f64>()).collect();
    normalize_m(&mut v, m_diag);
    let max_iters = 10 * n;
    let mut lambda;
    let mut kv = vec![0.0; n];
    for it in 0..max_iters {
        let mut lu = BandedLu::from_csr(k, sigma, Some(m_diag));
        if lu.factor().is_err() {
            // shifted matrix hit an eigenvalue; nudge the shift
            sigma -= 1e-8 * scale + 1e-3 * (it as f64 + 1.0) * scale * f64::EPSILON;
            continue;
        }
        // a few inverse-iteration sweeps per factorization
        for _ in 0..3 {
            let rhs: Vec<f64> = v.iter().zip(m_diag).map(|(&x, &d)| d * x).collect();
            v = lu.solve(&rhs);
            normalize_m(&mut v, m_diag);
        }
        k.matvec(&v, &mut kv);
        lambda = v.iter().zip(&kv).map(|(&x, &y)| x * y).sum::<f64>();
        let res = {
            let mut acc = 0.0;
            for i in 0..n {
                let r = kv[i] - lambda * m_diag[i] * v[i];
                acc += r * r;
            }
            acc.sqrt()
        };
        if res <= 1e-8 {
            return Ok((lambda, v));
        }
        // Rayleigh refinement keeps convergence cubic near the bottom of
        // the spectrum; the shift stays below λ to avoid jumping modes
        sigma = lambda - 1e-6 * scale;
    }
    Err(LinalgError::EigenNoConvergence(max_iters))
}
