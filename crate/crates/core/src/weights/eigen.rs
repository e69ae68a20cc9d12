//! Dense complex Hermitian eigendecomposition by cyclic Jacobi rotations.
//!
//! Each rotation first removes the phase of the off-diagonal pair `(p, q)`
//! and then applies the real symmetric Jacobi rotation that annihilates it.
//! Sweeps visit every upper-triangular pair once; iteration stops when the
//! off-diagonal Frobenius norm drops below `1e-12 ‖A‖_F`.

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

pub const MAX_SWEEPS: usize = 30;
const CONVERGENCE_TOL: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-10;

/// Square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, Complex64::new(1.0, 0.0));
        }
        m
    }

    pub fn from_row_major(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != dim * dim {
            return invalid(format!("{} entries do not form a {dim}x{dim} matrix", data.len()));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.dim + col] = value;
    }

    pub fn column(&self, col: usize) -> Vec<Complex64> {
        (0..self.dim).map(|row| self.get(row, col)).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn conj_transpose(&self) -> Self {
        let mut out = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.set(j, i, self.get(i, j).conj());
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    /// `Re(v^H A v)`.
    pub fn quadratic_form(&self, v: &[Complex64]) -> f64 {
        v.iter()
            .zip(self.mul_vec(v))
            .map(|(x, y)| x.conj() * y)
            .sum::<Complex64>()
            .re
    }

    /// Largest `|a_ij - conj(a_ji)|`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in i..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Replaces the matrix by `(A + A^H) / 2`.
    pub fn symmetrize(&mut self) {
        for i in 0..self.dim {
            let d = self.get(i, i);
            self.set(i, i, Complex64::new(d.re, 0.0));
            for j in i + 1..self.dim {
                let avg = (self.get(i, j) + self.get(j, i).conj()) * 0.5;
                self.set(i, j, avg);
                self.set(j, i, avg.conj());
            }
        }
    }

    fn off_diagonal_norm(&self) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                if i != j {
                    sum += self.get(i, j).norm_sqr();
                }
            }
        }
        sum.sqrt()
    }
}

/// Eigenvalues in ascending order; column `i` of `vectors` pairs with `values[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
    pub sweeps: usize,
}

impl HermitianEigen {
    pub fn vector(&self, i: usize) -> Vec<Complex64> {
        self.vectors.column(i)
    }
}

pub fn hermitian_eig(input: &ComplexMatrix) -> Result<HermitianEigen> {
    let n = input.dim();
    let scale = input.frobenius_norm();
    if !scale.is_finite() {
        return invalid("matrix has non-finite entries");
    }
    if input.hermitian_defect() > HERMITIAN_TOL * scale {
        return invalid(format!(
            "matrix is not Hermitian (defect {:e}, norm {:e})",
            input.hermitian_defect(),
            scale
        ));
    }
    let mut a = input.clone();
    a.symmetrize();
    let mut v = ComplexMatrix::identity(n);

    let mut sweeps = 0;
    while a.off_diagonal_norm() > CONVERGENCE_TOL * scale {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NumericalFailure(format!(
                "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps (off-diagonal {:e})",
                a.off_diagonal_norm()
            )));
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
        sweeps += 1;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).re.total_cmp(&a.get(j, j).re));
    let values = order.iter().map(|&i| a.get(i, i).re).collect();
    let mut vectors = ComplexMatrix::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors.set(row, dst, v.get(row, src));
        }
    }
    Ok(HermitianEigen {
        values,
        vectors,
        sweeps,
    })
}

/// Applies `A <- U^H A U`, `V <- V U` with the unitary `U` that zeroes `a_pq`.
fn rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = a.get(p, q);
    let g = apq.norm();
    if g == 0.0 {
        return;
    }
    let phase = apq / g;
    let app = a.get(p, p).re;
    let aqq = a.get(q, q).re;
    let theta = (aqq - app) / (2.0 * g);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        let t = 1.0 / (theta.abs() + (theta * theta + 1.0).sqrt());
        if theta < 0.0 {
            -t
        } else {
            t
        }
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    // column q of U carries the conjugate phase
    let sq = phase.conj() * s;
    let cq = phase.conj() * c;

    let n = a.dim();
    for k in 0..n {
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        a.set(k, p, akp * c - akq * sq);
        a.set(k, q, akp * s + akq * cq);
    }
    for k in 0..n {
        let apk = a.get(p, k);
        let aqk = a.get(q, k);
        a.set(p, k, apk * c - aqk * sq.conj());
        a.set(q, k, apk * s + aqk * cq.conj());
    }
    a.set(p, q, Complex64::new(0.0, 0.0));
    a.set(q, p, Complex64::new(0.0, 0.0));
    a.set(p, p, Complex64::new(a.get(p, p).re, 0.0));
    a.set(q, q, Complex64::new(a.get(q, q).re, 0.0));

    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, vkp * c - vkq * sq);
        v.set(k, q, vkp * s + vkq * cq);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_hermitian(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(n);
        for i in 0..n {
            m.set(i, i, Complex64::new(rng.random_range(-1.0..1.0), 0.0));
            for j in i + 1..n {
                let x = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                m.set(i, j, x);
                m.set(j, i, x.conj());
            }
        }
        m
    }

    #[test]
    fn identity_has_unit_eigenvalues() {
        let eig = hermitian_eig(&ComplexMatrix::identity(5)).unwrap();
        assert!(eig.values.iter().all(|&l| (l - 1.0).abs() < 1e-15));
        assert_eq!(eig.sweeps, 0);
    }

    #[test]
    fn zero_matrix() {
        let eig = hermitian_eig(&ComplexMatrix::zeros(3)).unwrap();
        assert_eq!(eig.values, vec![0.0; 3]);
    }

    #[test]
    fn two_by_two_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let m = random_hermitian(&mut rng, 2);
            let (a, d, b) = (m.get(0, 0).re, m.get(1, 1).re, m.get(0, 1));
            let mid = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
            let eig = hermitian_eig(&m).unwrap();
            assert!((eig.values[0] - (mid - rad)).abs() < 1e-12);
            assert!((eig.values[1] - (mid + rad)).abs() < 1e-12);
        }
    }

    #[test]
    fn residuals_orthonormality_and_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for n in [1, 3, 8, 17, 32] {
            let m = random_hermitian(&mut rng, n);
            let eig = hermitian_eig(&m).unwrap();
            let norm = m.frobenius_norm();
            assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
            for i in 0..n {
                let vi = eig.vector(i);
                let av = m.mul_vec(&vi);
                let residual: f64 = av
                    .iter()
                    .zip(&vi)
                    .map(|(x, y)| (x - y * eig.values[i]).norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                assert!(residual <= 1e-9 * norm);
                for j in 0..n {
                    let dot: Complex64 = vi.iter().zip(eig.vector(j)).map(|(x, y)| x.conj() * y).sum();
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expected).norm() < 1e-9);
                }
            }
            let mut err = 0.0;
            for r in 0..n {
                for c in 0..n {
                    let rebuilt: Complex64 = (0..n)
                        .map(|i| eig.vectors.get(r, i) * eig.values[i] * eig.vectors.get(c, i).conj())
                        .sum();
                    err += (rebuilt - m.get(r, c)).norm_sqr();
                }
            }
            assert!(err.sqrt() < 1e-9);
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = ComplexMatrix::identity(3);
        m.set(0, 1, Complex64::new(0.5, 0.0));
        assert!(matches!(hermitian_eig(&m), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn repeated_eigenvalues() {
        let mut m = ComplexMatrix::zeros(3);
        m.set(0, 0, Complex64::new(2.0, 0.0));
        m.set(1, 1, Complex64::new(2.0, 0.0));
        m.set(2, 2, Complex64::new(1.0, 0.0));
        m.set(0, 1, Complex64::new(0.0, 1e-3));
        m.set(1, 0, Complex64::new(0.0, -1e-3));
        let eig = hermitian_eig(&m).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-14);
        assert!((eig.values[1] - (2.0 - 1e-3)).abs() < 1e-14);
        assert!((eig.values[2] - (2.0 + 1e-3)).abs() < 1e-14);
    }
}
