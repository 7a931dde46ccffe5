//! Not-a-knot cubic splines on a uniform grid over `[0, 1]`, applied
//! entrywise to complex matrices.

use num_complex::Complex64;

use crate::error::{AdiaError, Result};
use crate::linalg::CMatrix;

#[derive(Debug, Clone)]
pub struct MatrixSpline {
    h: f64,
    values: Vec<CMatrix>,
    /// Second derivatives at the nodes.
    second: Vec<CMatrix>,
}

impl MatrixSpline {
    /// `values[k]` is the sample at `s = k / (values.len() - 1)`.
    pub fn new(values: Vec<CMatrix>) -> Result<Self> {
        if values.len() < 2 {
            return Err(AdiaError::Format(
                "spline needs at least two grid points".into(),
            ));
        }
        let shape = values[0].shape();
        if values.iter().any(|v| v.shape() != shape) {
            return Err(AdiaError::Format("spline samples differ in shape".into()));
        }
        let intervals = values.len() - 1;
        let h = 1.0 / intervals as f64;
        let second = second_derivatives(&values, h);
        Ok(MatrixSpline { h, values, second })
    }

    pub fn intervals(&self) -> usize {
        self.values.len() - 1
    }

    pub fn nodes(&self) -> &[CMatrix] {
        &self.values
    }

    /// Value (`p = 0`) or derivative of order `p` at `s`. Orders above 3 are
    /// identically zero for a piecewise cubic.
    pub fn eval(&self, s: f64, p: u32, out: &mut CMatrix) {
        let n = self.intervals();
        let x = s.clamp(0.0, 1.0) / self.h;
        let i = (x.floor() as usize).min(n - 1);
        let t = x - i as f64;
        let u = 1.0 - t;
        let h = self.h;
        let (y0, y1) = (&self.values[i], &self.values[i + 1]);
        let (m0, m1) = (&self.second[i], &self.second[i + 1]);
        let (cy0, cy1, cm0, cm1) = match p {
            0 => (u, t, h * h / 6.0 * (u * u * u - u), h * h / 6.0 * (t * t * t - t)),
            1 => (-1.0 / h, 1.0 / h, -h / 6.0 * (3.0 * u * u - 1.0), h / 6.0 * (3.0 * t * t - 1.0)),
            2 => (0.0, 0.0, u, t),
            3 => (0.0, 0.0, -1.0 / h, 1.0 / h),
            _ => (0.0, 0.0, 0.0, 0.0),
        };
        for (k, o) in out.iter_mut().enumerate() {
            *o = y0[k] * cy0 + y1[k] * cy1 + m0[k] * cm0 + m1[k] * cm1;
        }
    }
}

/// Solves for the nodal second derivatives. With the not-a-knot conditions
/// `M_0 - 2 M_1 + M_2 = 0` and its mirror eliminated, the first and last
/// interior rows reduce to `6 M_1 = r_1` and `6 M_{n-1} = r_{n-1}`.
fn second_derivatives(y: &[CMatrix], h: f64) -> Vec<CMatrix> {
    let n = y.len() - 1;
    let (rows, cols) = y[0].shape();
    let zeros = || CMatrix::from_element(rows, cols, Complex64::from(0.0));
    if n == 1 {
        return vec![zeros(), zeros()];
    }
    let rhs: Vec<CMatrix> = (1..n)
        .map(|i| (&y[i - 1] - &y[i] * Complex64::from(2.0) + &y[i + 1]) * Complex64::from(6.0 / (h * h)))
        .collect();
    let mut m = vec![zeros(); n + 1];
    if n == 2 {
        // single parabola
        let c = &rhs[0] / Complex64::from(6.0);
        return vec![c.clone(), c.clone(), c];
    }

    // Tridiagonal rows i = 1..n-1 with (sub, diag, sup); Thomas algorithm
    // with real coefficients and matrix-valued right-hand sides.
    let len = n - 1;
    let diag = |k: usize| if k == 0 || k == len - 1 { 6.0 } else { 4.0 };
    let sub = |k: usize| if k == 0 || k == len - 1 { 0.0 } else { 1.0 };
    let sup = |k: usize| if k == 0 || k == len - 1 { 0.0 } else { 1.0 };

    let mut c_prime = vec![0.0; len];
    let mut d_prime: Vec<CMatrix> = Vec::with_capacity(len);
    c_prime[0] = sup(0) / diag(0);
    d_prime.push(&rhs[0] / Complex64::from(diag(0)));
    for k in 1..len {
        let denom = diag(k) - sub(k) * c_prime[k - 1];
        c_prime[k] = sup(k) / denom;
        let d = (&rhs[k] - &d_prime[k - 1] * Complex64::from(sub(k))) / Complex64::from(denom);
        d_prime.push(d);
    }
    m[len] = d_prime[len - 1].clone();
    for k in (0..len - 1).rev() {
        m[k + 1] = &d_prime[k] - &m[k + 2] * Complex64::from(c_prime[k]);
    }
    m[0] = &m[1] * Complex64::from(2.0) - &m[2];
    m[n] = &m[n - 1] * Complex64::from(2.0) - &m[n - 2];
    m
}
