//! Dense complex linear algebra for small Hermitian problems.
//!
//! The eigensolver is a cyclic complex Jacobi method: each rotation first
//! removes the phase of the pivot element and then applies a real Givens
//! rotation, so the working matrix stays Hermitian to round-off and the
//! accumulated eigenvector matrix stays unitary.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{AdiaError, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Inputs whose anti-Hermitian part exceeds this are rejected.
pub const HERMITIAN_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 100;

/// Eigenvalues in ascending order with the matching orthonormal eigenvectors
/// stored as columns.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl Eigensystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, index: usize) -> CVector {
        self.vectors.column(index).into_owned()
    }
}

/// `max |H - H^dagger|` over all entries.
pub fn hermiticity_defect(h: &CMatrix) -> f64 {
    let n = h.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs(h: &CMatrix) -> f64 {
    h.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// `(H + H^dagger) / 2`
pub fn symmetrize(h: &CMatrix) -> CMatrix {
    (h + h.adjoint()).scale(0.5)
}

/// `<a|b>` with the first argument conjugated.
pub fn inner(a: &CVector, b: &CVector) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// `<a|M|b>`
pub fn matrix_element(a: &CVector, m: &CMatrix, b: &CVector) -> Complex64 {
    inner(a, &(m * b))
}

/// Diagonalizes a Hermitian matrix by cyclic Jacobi rotations.
pub fn diagonalize(h: &CMatrix) -> Result<Eigensystem> {
    let n = h.nrows();
    if n == 0 || h.ncols() != n {
        return Err(AdiaError::Validation(format!(
            "expected a non-empty square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let defect = hermiticity_defect(h);
    if !(defect <= HERMITIAN_TOL) {
        return Err(AdiaError::Validation(format!(
            "matrix is not Hermitian (max |H - H^dagger| = {defect:.3e})"
        )));
    }

    // Row-major working copies.
    let mut a = vec![ZERO; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = if i == j {
                Complex64::new(h[(i, i)].re, 0.0)
            } else {
                // Average the two triangles so round-off asymmetry is removed.
                0.5 * (h[(i, j)] + h[(j, i)].conj())
            };
        }
    }
    let mut v = vec![ZERO; n * n];
    for i in 0..n {
        v[i * n + i] = ONE;
    }

    let frobenius = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let target = (1e-15 * frobenius).powi(2).max(f64::MIN_POSITIVE);

    let mut converged = n == 1;
    for _sweep in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| 2.0 * a[i * n + j].norm_sqr())
            .sum();
        if off <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                let r = apq.norm();
                if r == 0.0 {
                    continue;
                }
                rotate(&mut a, &mut v, n, p, q, apq, r);
            }
        }
    }
    if !converged {
        return Err(AdiaError::Numeric(format!(
            "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps (n = {n})"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].re.total_cmp(&a[j * n + j].re).then(i.cmp(&j)));

    let values = order.iter().map(|&i| a[i * n + i].re).collect();
    let vectors = CMatrix::from_fn(n, n, |row, col| v[row * n + order[col]]);
    Ok(Eigensystem { values, vectors })
}

fn rotate(a: &mut [Complex64], v: &mut [Complex64], n: usize, p: usize, q: usize, apq: Complex64, r: f64) {
    let app = a[p * n + p].re;
    let aqq = a[q * n + q].re;
    let phase = apq / r; // e^{i alpha}
    let theta = (aqq - app) / (2.0 * r);
    let t = if theta == 0.0 {
        1.0
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    // J = diag(1, e^{-i alpha}) * [[c, s], [-s, c]] on the (p, q) plane.
    let jpp = Complex64::new(c, 0.0);
    let jpq = Complex64::new(s, 0.0);
    let jqp = -s * phase.conj();
    let jqq = c * phase.conj();

    // A <- A J
    for k in 0..n {
        let x = a[k * n + p];
        let y = a[k * n + q];
        a[k * n + p] = x * jpp + y * jqp;
        a[k * n + q] = x * jpq + y * jqq;
    }
    // A <- J^dagger A
    for k in 0..n {
        let x = a[p * n + k];
        let y = a[q * n + k];
        a[p * n + k] = jpp.conj() * x + jqp.conj() * y;
        a[q * n + k] = jpq.conj() * x + jqq.conj() * y;
    }
    a[p * n + p] = Complex64::new(app - t * r, 0.0);
    a[q * n + q] = Complex64::new(aqq + t * r, 0.0);
    a[p * n + q] = ZERO;
    a[q * n + p] = ZERO;

    // V <- V J
    for k in 0..n {
        let x = v[k * n + p];
        let y = v[k * n + q];
        v[k * n + p] = x * jpp + y * jqp;
        v[k * n + q] = x * jpq + y * jqq;
    }
}

/// Spectral norm of a Hermitian matrix (largest eigenvalue magnitude).
pub fn spectral_norm_hermitian(h: &CMatrix) -> Result<f64> {
    let eig = diagonalize(h)?;
    Ok(eig.values.iter().fold(0.0_f64, |acc, e| acc.max(e.abs())))
}

/// `exp(-i t H)` for Hermitian `H`, built from its eigendecomposition.
pub fn unitary_exp(h: &CMatrix, t: f64) -> Result<CMatrix> {
    let eig = diagonalize(h)?;
    let n = eig.dim();
    let mut scaled = eig.vectors.clone();
    for (col, e) in eig.values.iter().enumerate() {
        let phase = Complex64::from_polar(1.0, -t * e);
        for row in 0..n {
            scaled[(row, col)] *= phase;
        }
    }
    Ok(scaled * eig.vectors.adjoint())
}

/// Entries of `exp(-i t H)` for a Hermitian 2x2 matrix given by its entries,
/// using `H = a I + b . sigma`.
#[inline]
pub fn unitary_exp_2x2(h00: f64, h11: f64, h01: Complex64, t: f64) -> [[Complex64; 2]; 2] {
    let a = 0.5 * (h00 + h11);
    let bz = 0.5 * (h00 - h11);
    let (bx, by) = (h01.re, -h01.im);
    let b = (bx * bx + by * by + bz * bz).sqrt();
    let global = Complex64::from_polar(1.0, -t * a);
    let (sin, cos) = (t * b).sin_cos();
    // -i sin(tb) (b_hat . sigma); sin(tb)/b is bounded as b -> 0.
    let k = if b > 0.0 { sin / b } else { t };
    let (mut q0, mut qx, mut qy, mut qz) = (cos, k * bx, k * by, k * bz);
    // Renormalize the SU(2) parameters so round-off does not accumulate as
    // norm drift over millions of steps.
    let q = (q0 * q0 + qx * qx + qy * qy + qz * qz).sqrt();
    q0 /= q;
    qx /= q;
    qy /= q;
    qz /= q;
    let u00 = Complex64::new(q0, -qz);
    let u11 = Complex64::new(q0, qz);
    let u01 = Complex64::new(-qy, -qx);
    let u10 = Complex64::new(qy, -qx);
    [[global * u00, global * u01], [global * u10, global * u11]]
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn outer(a: &CVector, b: &CVector) -> CMatrix {
    a * b.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut impl Rng) -> CMatrix {
        let mut h = CMatrix::zeros(n, n);
        for i in 0..n {
            h[(i, i)] = Complex64::new(rng.gen_range(-1.0..1.0), 0.0);
            for j in i + 1..n {
                let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                h[(i, j)] = z;
                h[(j, i)] = z.conj();
            }
        }
        h
    }

    #[test]
    fn identity_has_standard_basis() {
        let eig = diagonalize(&identity(4)).unwrap();
        assert!(eig.values.iter().all(|&e| (e - 1.0).abs() < 1e-15));
        assert!((eig.vectors.clone() - identity(4)).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn pauli_x_scaled() {
        let g = 0.25;
        let h = CMatrix::from_row_slice(
            2,
            2,
            &[ZERO, Complex64::new(g, 0.0), Complex64::new(g, 0.0), ZERO],
        );
        let eig = diagonalize(&h).unwrap();
        assert!((eig.values[0] + 0.25).abs() < 1e-15);
        assert!((eig.values[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn random_reconstruction_and_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2, 3, 8, 16] {
            let h = random_hermitian(n, &mut rng);
            let eig = diagonalize(&h).unwrap();
            let d = CMatrix::from_diagonal(&CVector::from_iterator(
                n,
                eig.values.iter().map(|&e| Complex64::new(e, 0.0)),
            ));
            let rebuilt = &eig.vectors * d * eig.vectors.adjoint();
            assert!(max_abs(&(rebuilt - &h)) <= 1e-10, "n = {n}");
            let gram = eig.vectors.adjoint() * &eig.vectors;
            assert!(max_abs(&(gram - identity(n))) <= 1e-10);
            for k in 0..n {
                let vk = eig.vector(k);
                let res = &h * &vk - vk.scale(eig.values[k]);
                assert!(res.norm() <= 1e-10);
            }
            assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut h = identity(2);
        h[(0, 1)] = Complex64::new(1e-3, 0.0);
        assert!(matches!(diagonalize(&h), Err(AdiaError::Validation(_))));
    }

    #[test]
    fn closed_form_2x2_matches_eigen_exp() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let h = random_hermitian(2, &mut rng);
            let t = rng.gen_range(0.0..5.0);
            let u = unitary_exp(&h, t).unwrap();
            let c = unitary_exp_2x2(h[(0, 0)].re, h[(1, 1)].re, h[(0, 1)], t);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((u[(i, j)] - c[i][j]).norm() < 1e-13);
                }
            }
        }
    }
}
