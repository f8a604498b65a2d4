//! Small dense Hermitian matrices and a cyclic Jacobi eigensolver.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest supported dimension.
pub const MAX_DIMENSION: usize = 16;

const SYMMETRY_TOLERANCE: f64 = 1e-12;
const OFF_DIAGONAL_TOLERANCE: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Row-major complex matrix with `a[i][j] == conj(a[j][i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl HermitianMatrix {
    pub fn zeros(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIMENSION {
            return Err(Error::DimensionMismatch(format!(
                "Hermitian dimension must be in 1..={MAX_DIMENSION}, got {dim}"
            )));
        }
        Ok(Self { dim, entries: vec![Complex64::new(0.0, 0.0); dim * dim] })
    }

    /// Builds from row-major entries, rejecting input that is not conjugate-symmetric.
    pub fn from_row_major(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        let mut m = Self::zeros(dim)?;
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {dim}x{dim} matrix",
                entries.len()
            )));
        }
        m.entries = entries;
        let scale = m.frobenius_norm().max(1.0);
        let asymmetry = m.max_asymmetry();
        if !(asymmetry <= SYMMETRY_TOLERANCE * scale) {
            return Err(Error::NotHermitian { asymmetry });
        }
        for i in 0..dim {
            for j in 0..i {
                let upper = m.get(j, i);
                m.entries[i * dim + j] = upper.conj();
            }
            m.entries[i * dim + i].im = 0.0;
        }
        Ok(m)
    }

    pub fn from_real_symmetric(dim: usize, entries: &[f64]) -> Result<Self> {
        Self::from_row_major(dim, entries.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.dim + j]
    }

    /// Sets `(i, j)` and its mirror `(j, i)`; diagonal entries keep only the real part.
    pub fn set(&mut self, i: usize, j: usize, value: Complex64) {
        if i == j {
            self.entries[i * self.dim + i] = Complex64::new(value.re, 0.0);
        } else {
            self.entries[i * self.dim + j] = value;
            self.entries[j * self.dim + i] = value.conj();
        }
    }

    pub fn set_real(&mut self, i: usize, j: usize, value: f64) {
        self.set(i, j, Complex64::new(value, 0.0));
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i).re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt()
    }

    fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// `H · v` for a column vector.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }
}

/// Eigenvalues in ascending order and the matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    /// `vectors[k]` is the eigenvector of `values[k]`.
    pub vectors: Vec<Vec<Complex64>>,
}

/// Diagonalizes a Hermitian matrix with cyclic complex Jacobi rotations.
///
/// Each rotation first removes the phase of the pivot `a[p][q]` and then
/// applies a real plane rotation, so the update stays unitary. Sweeps stop once
/// the off-diagonal Frobenius norm drops below `1e-12 * ||H||`.
pub fn eigh(h: &HermitianMatrix) -> Result<EigenDecomposition> {
    let n = h.dim;
    let scale = h.frobenius_norm();
    let asymmetry = h.max_asymmetry();
    if !(asymmetry <= SYMMETRY_TOLERANCE * scale.max(1.0)) {
        return Err(Error::NotHermitian { asymmetry });
    }

    let mut a = h.entries.clone();
    let mut v = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        v[i * n + i] = Complex64::new(1.0, 0.0);
    }
    let threshold = OFF_DIAGONAL_TOLERANCE * scale;

    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a, n) <= threshold {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut a, &mut v, n, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[x * n + x].re.total_cmp(&a[y * n + y].re));
    let values = order.iter().map(|&k| a[k * n + k].re).collect();
    let vectors = order
        .iter()
        .map(|&k| (0..n).map(|i| v[i * n + k]).collect())
        .collect();
    Ok(EigenDecomposition { values, vectors })
}

fn off_diagonal_norm(a: &[Complex64], n: usize) -> f64 {
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[i * n + j].norm_sqr();
            }
        }
    }
    sum.sqrt()
}

fn rotate(a: &mut [Complex64], v: &mut [Complex64], n: usize, p: usize, q: usize) {
    let apq = a[p * n + q];
    let r = apq.norm();
    if r == 0.0 {
        return;
    }
    let phase = apq / r;
    let app = a[p * n + p].re;
    let aqq = a[q * n + q].re;

    let theta = (aqq - app) / (2.0 * r);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    // Rotation columns: u_p = c e_p - s conj(phase) e_q, u_q = s e_p + c conj(phase) e_q.
    let pc = phase.conj();
    for k in 0..n {
        let akp = a[k * n + p];
        let akq = a[k * n + q];
        a[k * n + p] = akp * c - akq * pc * s;
        a[k * n + q] = akp * s + akq * pc * c;
    }
    for k in 0..n {
        let apk = a[p * n + k];
        let aqk = a[q * n + k];
        a[p * n + k] = apk * c - aqk * phase * s;
        a[q * n + k] = apk * s + aqk * phase * c;
    }
    a[p * n + q] = Complex64::new(0.0, 0.0);
    a[q * n + p] = Complex64::new(0.0, 0.0);
    a[p * n + p] = Complex64::new(app - t * r, 0.0);
    a[q * n + q] = Complex64::new(aqq + t * r, 0.0);

    for k in 0..n {
        let vkp = v[k * n + p];
        let vkq = v[k * n + q];
        v[k * n + p] = vkp * c - vkq * pc * s;
        v[k * n + q] = vkp * s + vkq * pc * c;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn diagonal_input() {
        let h = HermitianMatrix::from_real_symmetric(3, &[3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0])
            .unwrap();
        let e = eigh(&h).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
        assert_eq!(e.vectors[0][1], c(1.0, 0.0));
        assert_eq!(e.vectors[2][0], c(1.0, 0.0));
    }

    #[test]
    fn pauli_x() {
        let h = HermitianMatrix::from_real_symmetric(2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let e = eigh(&h).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pauli_y_complex_phase() {
        let h = HermitianMatrix::from_row_major(2, vec![c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])
            .unwrap();
        let e = eigh(&h).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
        for (k, &lambda) in e.values.iter().enumerate() {
            let hv = h.apply(&e.vectors[k]);
            for (x, y) in hv.iter().zip(&e.vectors[k]) {
                assert!((x - y * lambda).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let err = HermitianMatrix::from_row_major(2, vec![c(0.0, 0.0), c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0)]);
        assert!(matches!(err, Err(Error::NotHermitian { .. })));
        assert!(HermitianMatrix::zeros(17).is_err());
        assert!(HermitianMatrix::zeros(0).is_err());
    }

    #[test]
    fn zero_matrix() {
        let e = eigh(&HermitianMatrix::zeros(4).unwrap()).unwrap();
        assert!(e.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn set_mirrors_entry() {
        let mut h = HermitianMatrix::zeros(3).unwrap();
        h.set(0, 2, c(0.5, 0.25));
        assert_eq!(h.get(2, 0), c(0.5, -0.25));
        h.set(1, 1, c(2.0, 7.0));
        assert_eq!(h.get(1, 1), c(2.0, 0.0));
    }
}
