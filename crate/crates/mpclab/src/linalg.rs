//! Dense helpers and a banded LU factorization with partial pivoting.

use nalgebra::{DMatrix, DVector};

/// Largest singular value; zero for empty matrices.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.ncols() == 1 {
        return m.column(0).norm();
    }
    if m.nrows() == 1 {
        return m.row(0).norm();
    }
    m.singular_values().max()
}

/// Smallest singular value of a matrix with at least as many columns as rows
/// (or the reverse); zero for empty matrices.
pub fn min_singular(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().min()
}

/// (smallest, largest) singular values.
pub fn singular_range(m: &DMatrix<f64>) -> (f64, f64) {
    let sv = m.singular_values();
    (sv.min(), sv.max())
}

/// (smallest, largest) eigenvalues of a symmetric matrix.
pub fn sym_eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 1 {
        return (m[(0, 0)], m[(0, 0)]);
    }
    let ev = m.clone().symmetric_eigenvalues();
    (ev.min(), ev.max())
}

pub fn identity(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

/// Random orthogonal matrix from the QR factorization of a Gaussian matrix.
pub fn orthogonal_from(g: DMatrix<f64>) -> DMatrix<f64> {
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut q = q;
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Banded matrix in LAPACK general-band layout with room for pivoting fill-in.
///
/// Entry (i, j) lives at `data[(kl + ku + i - j) + j * ldab]`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ldab,
            data: vec![0.0; ldab * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        self.kl + self.ku + i - j + j * self.ldab
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i <= j + self.kl && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            0.0
        }
    }

    /// Adds `v` to entry (i, j); panics outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// y = A x using the original (unfactored) entries.
    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for i in lo..=hi {
                y[i] += self.data[self.idx(i, j)] * x[j];
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// LU factorization with partial pivoting (the dgbtf2 scheme).
    ///
    /// Returns `None` when a pivot is at most `rel_tol` times the largest entry.
    pub fn factor(&self, rel_tol: f64) -> Option<BandLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let kv = kl + ku;
        let ld = self.ldab;
        let mut ab = self.data.clone();
        let mut ipiv = vec![0usize; n];
        let threshold = rel_tol * self.max_abs();
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let col = j * ld;
            let mut jp = 0;
            let mut best = ab[col + kv].abs();
            for p in 1..=km {
                let v = ab[col + kv + p].abs();
                if v > best {
                    best = v;
                    jp = p;
                }
            }
            ipiv[j] = j + jp;
            if best <= threshold || best == 0.0 {
                return None;
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let a = kv + j - c + c * ld;
                    let b = kv + j + jp - c + c * ld;
                    ab.swap(a, b);
                }
            }
            if km > 0 {
                let pivot = ab[col + kv];
                for p in 1..=km {
                    ab[col + kv + p] /= pivot;
                }
                for c in j + 1..=ju {
                    let u = ab[kv + j - c + c * ld];
                    if u != 0.0 {
                        for p in 1..=km {
                            let l = ab[col + kv + p];
                            ab[kv + j + p - c + c * ld] -= l * u;
                        }
                    }
                }
            }
        }
        Some(BandLu {
            n,
            kl,
            kv,
            ldab: ld,
            ab,
            ipiv,
        })
    }
}

/// Factors produced by [`BandMatrix::factor`].
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    kv: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let (n, kl, kv, ld) = (self.n, self.kl, self.kv, self.ldab);
        let mut b = rhs.clone();
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let p = self.ipiv[j];
            if p != j {
                b.swap_rows(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                for q in 1..=km {
                    b[j + q] -= self.ab[kv + q + j * ld] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.ab[kv + j * ld];
            let bj = b[j];
            if bj != 0.0 {
                for i in j.saturating_sub(kv)..j {
                    b[i] -= self.ab[kv + i - j + j * ld] * bj;
                }
            }
        }
        b
    }
}
