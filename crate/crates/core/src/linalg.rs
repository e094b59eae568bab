//! Small dense and banded linear-algebra helpers shared by the modules.

use nalgebra::{DMatrix, DVector};

/// Orthonormal basis of the column span of `m` (thin QR), columns oriented so
/// that the diagonal of R is non-negative.
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let k = m.ncols();
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Orthonormalize and also return |det R|, the volume growth of the frame.
pub fn orthonormalize_with_volume(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let k = m.ncols();
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    let mut diag = Vec::with_capacity(k);
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
        diag.push(r[(j, j)].abs());
    }
    (q, diag)
}

/// Orthonormal basis of the orthogonal complement of the span of `basis`.
pub fn orthogonal_complement(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let d = basis.nrows();
    let k = basis.ncols();
    let q = orthonormalize(basis);
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(d - k);
    for e in 0..d {
        let mut v = DVector::zeros(d);
        v[e] = 1.0;
        for j in 0..k {
            let c = q.column(j).dot(&v);
            v.axpy(-c, &q.column(j), 1.0);
        }
        for c in &cols {
            let p = c.dot(&v);
            v.axpy(-p, c, 1.0);
        }
        let n = v.norm();
        if n > 1e-8 {
            cols.push(v / n);
        }
        if cols.len() == d - k {
            break;
        }
    }
    DMatrix::from_columns(&cols)
}

/// Singular values of `aᵀ b`, i.e. the cosines of the principal angles
/// between two orthonormal bases, in decreasing order.
pub fn principal_cosines(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let m = a.transpose() * b;
    let mut s: Vec<f64> = m.singular_values().iter().map(|v| v.min(1.0)).collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    s
}

/// Operator 2-norm.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Smallest singular value (the co-norm).
pub fn min_singular(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Absolute determinant of a square matrix.
pub fn abs_det(m: &DMatrix<f64>) -> f64 {
    m.clone().lu().determinant().abs()
}

/// Square banded matrix with Gaussian elimination and partial pivoting.
/// Storage keeps room for the `kl` extra superdiagonals created by pivoting.
#[derive(Debug, Clone)]
pub struct Banded {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl Banded {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Banded {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku + self.kl);
        i * self.width + (j + self.kl - i)
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "entry ({i},{j}) outside band"
        );
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    /// Solve `A x = b` in place, destroying the factorization.
    pub fn solve(mut self, b: &[f64]) -> Option<Vec<f64>> {
        let n = self.n;
        let mut rhs = b.to_vec();
        let span = self.kl + self.ku;
        for k in 0..n {
            let last = (k + self.kl).min(n - 1);
            let mut piv = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for i in k + 1..=last {
                let v = self.data[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return None;
            }
            let jmax = (k + span).min(n - 1);
            if piv != k {
                for j in k..=jmax {
                    let a = self.idx(k, j);
                    let p = self.idx(piv, j);
                    self.data.swap(a, p);
                }
                rhs.swap(k, piv);
            }
            let akk = self.data[self.idx(k, k)];
            for i in k + 1..=last {
                let ik = self.idx(i, k);
                let factor = self.data[ik] / akk;
                if factor == 0.0 {
                    continue;
                }
                self.data[ik] = 0.0;
                for j in k + 1..=jmax {
                    let kj = self.data[self.idx(k, j)];
                    let ij = self.idx(i, j);
                    self.data[ij] -= factor * kj;
                }
                rhs[i] -= factor * rhs[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let jmax = (i + span).min(n - 1);
            let mut s = rhs[i];
            for j in i + 1..=jmax {
                s -= self.data[self.idx(i, j)] * x[j];
            }
            x[i] = s / self.data[self.idx(i, i)];
        }
        Some(x)
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// Median of a slice (NaNs excluded).
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().cloned().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn banded_matches_dense_solve() {
        let n = 12;
        let (kl, ku) = (2, 3);
        let mut band = Banded::zeros(n, kl, ku);
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                // first rows deliberately weak on the diagonal to force pivoting
                let v = if i == j && i < 3 {
                    1e-3
                } else {
                    ((i * 7 + j * 3) % 11) as f64 - 5.0
                };
                band.set(i, j, v);
                dense[(i, j)] = v;
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = band.solve(&b).unwrap();
        let xd = dense.lu().solve(&DVector::from_vec(b)).unwrap();
        for i in 0..n {
            assert!((x[i] - xd[i]).abs() < 1e-9, "{} vs {}", x[i], xd[i]);
        }
    }

    #[test]
    fn complement_is_orthogonal() {
        let b = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 0.5]);
        let c = orthogonal_complement(&b);
        assert_eq!(c.ncols(), 2);
        let q = orthonormalize(&b);
        assert!((q.transpose() * &c).norm() < 1e-12);
        assert!((c.transpose() * &c - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn slope_and_median() {
        assert!((fit_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-12);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
