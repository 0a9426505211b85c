//! Small direct solvers: tridiagonal (Thomas) and general banded LU with
//! partial pivoting.

use crate::error::{Error, Result};

/// Pivots below this fraction of the largest matrix entry count as singular.
pub const PIVOT_RTOL: f64 = 1e-13;

/// Row `i` reads `sub[i] x[i-1] + diag[i] x[i] + sup[i] x[i+1]`;
/// `sub[0]` and `sup[n-1]` are kept at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self { sub: vec![0.0; n], diag: vec![0.0; n], sup: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn transpose(&self) -> Self {
        let n = self.len();
        let mut t = Self::zeros(n);
        t.diag.copy_from_slice(&self.diag);
        for i in 1..n {
            t.sub[i] = self.sup[i - 1];
            t.sup[i - 1] = self.sub[i];
        }
        t
    }

    /// `I + s * self`.
    pub fn shifted_identity(&self, s: f64) -> Self {
        let mut t = self.clone();
        for i in 0..t.len() {
            t.sub[i] *= s;
            t.sup[i] *= s;
            t.diag[i] = 1.0 + s * t.diag[i];
        }
        t
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.matvec_into(x, &mut out);
        out
    }

    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.sub[i] * x[i - 1];
            }
            if i + 1 < n {
                v += self.sup[i] * x[i + 1];
            }
            out[i] = v;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.sub
            .iter()
            .chain(&self.diag)
            .chain(&self.sup)
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.len();
        nalgebra::DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if j + 1 == i {
                self.sub[i]
            } else if i + 1 == j {
                self.sup[i]
            } else {
                0.0
            }
        })
    }

    pub fn factor(&self) -> Result<TridiagonalLu> {
        TridiagonalLu::new(self)
    }
}

/// Thomas factorization, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct TridiagonalLu {
    sub: Vec<f64>,
    denom: Vec<f64>,
    upper: Vec<f64>,
}

impl TridiagonalLu {
    pub fn new(m: &Tridiagonal) -> Result<Self> {
        let n = m.len();
        let tol = PIVOT_RTOL * m.max_abs();
        let mut denom = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..n {
            let d = if i == 0 { m.diag[0] } else { m.diag[i] - m.sub[i] * upper[i - 1] };
            if !(d.abs() > tol) {
                return Err(Error::Singular { row: i, pivot: d });
            }
            denom[i] = d;
            upper[i] = m.sup[i] / d;
        }
        Ok(Self { sub: m.sub.clone(), denom, upper })
    }

    pub fn len(&self) -> usize {
        self.denom.len()
    }

    pub fn is_empty(&self) -> bool {
        self.denom.is_empty()
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.len();
        debug_assert_eq!(rhs.len(), n);
        rhs[0] /= self.denom[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.sub[i] * rhs[i - 1]) / self.denom[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            rhs[i] -= self.upper[i] * rhs[i + 1];
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// General band matrix with `kl` sub- and `ku` super-diagonals, stored
/// column-wise with room for the fill-in produced by row interchanges.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    // ab[j * ld + (kl + ku + i - j)] = A[i][j]
    ab: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ld = 2 * kl + ku + 1;
        Self { n, kl, ku, ld, ab: vec![0.0; ld * n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ld + (self.kl + self.ku + i - j)
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i <= j + self.kl && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.ab[self.idx(i, j)]
        } else {
            0.0
        }
    }

    /// Panics if `(i, j)` lies outside the declared band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.ab[k] = v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (j, &xj) in x.iter().enumerate() {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for (i, o) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *o += self.ab[self.idx(i, j)] * xj;
            }
        }
        out
    }

    /// LU with partial pivoting (the unblocked `gbtf2` scheme).
    pub fn factor(mut self) -> Result<BandLu> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let kv = kl + ku;
        let scale = self.ab.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tol = PIVOT_RTOL * scale;
        let mut ipiv = vec![0usize; n];
        let at = |j: usize, i: usize, ld: usize| j * ld + (kv + i - j);
        let ld = self.ld;
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = self.ab[at(j, j, ld)].abs();
            for r in 1..=km {
                let v = self.ab[at(j, j + r, ld)].abs();
                if v > best {
                    best = v;
                    jp = r;
                }
            }
            ipiv[j] = j + jp;
            if !(best > tol) {
                return Err(Error::Singular { row: j, pivot: self.ab[at(j, j + jp, ld)] });
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    self.ab.swap(at(c, j, ld), at(c, j + jp, ld));
                }
            }
            if km > 0 {
                let piv = self.ab[at(j, j, ld)];
                for r in 1..=km {
                    self.ab[at(j, j + r, ld)] /= piv;
                }
                for c in (j + 1)..=ju {
                    let u = self.ab[at(c, j, ld)];
                    if u != 0.0 {
                        for r in 1..=km {
                            let l = self.ab[at(j, j + r, ld)];
                            self.ab[at(c, j + r, ld)] -= l * u;
                        }
                    }
                }
            }
        }
        Ok(BandLu { m: self, ipiv })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
    ipiv: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let m = &self.m;
        let (n, kl, kv) = (m.n, m.kl, m.kl + m.ku);
        let at = |j: usize, i: usize| j * m.ld + (kv + i - j);
        let mut b = rhs.to_vec();
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let km = kl.min(n - 1 - j);
            let bj = b[j];
            for r in 1..=km {
                b[j + r] -= m.ab[at(j, j + r)] * bj;
            }
        }
        for j in (0..n).rev() {
            b[j] /= m.ab[at(j, j)];
            let bj = b[j];
            for i in j.saturating_sub(kv)..j {
                b[i] -= m.ab[at(j, i)] * bj;
            }
        }
        b
    }
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm2(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}
