//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative tolerance for the symmetry check.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Diagonal ridge, as a fraction of the mean diagonal, used on the single
/// retry after a failed factorization.
pub const JITTER_SCALE: f64 = 1e-10;

/// A Cholesky factorization together with the ridge that was needed to get it.
#[derive(Debug, Clone)]
pub struct Factor {
    chol: Cholesky<f64, Dyn>,
    jitter: Option<f64>,
}

impl Factor {
    /// Lower-triangular factor `L` with `L Lᵀ = M (+ jitter I)`.
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn jitter(&self) -> Option<f64> {
        self.jitter
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let mut inv = self.chol.inverse();
        symmetrize(&mut inv);
        inv
    }

    /// `L z`, i.e. maps standard normal draws to draws with covariance `M`.
    pub fn mul_l(&self, z: &DVector<f64>) -> DVector<f64> {
        let l = self.chol.l_dirty();
        let n = z.len();
        let mut out = DVector::zeros(n);
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += l[(i, j)] * z[j];
            }
            out[i] = acc;
        }
        out
    }
}

pub fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::NotPositiveDefinite(format!(
                    "asymmetric at ({i}, {j}): {} vs {}",
                    m[(i, j)],
                    m[(j, i)]
                )));
            }
        }
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite("non-finite entry".into()));
    }
    Ok(())
}

/// Cholesky with the jitter policy: one retry with a `1e-10 * mean(diag)`
/// ridge, then a hard error.
pub fn factor(m: &DMatrix<f64>) -> Result<Factor> {
    check_symmetric(m)?;
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Ok(Factor { chol, jitter: None });
    }
    let n = m.nrows();
    let mean_diag = m.diagonal().sum() / n as f64;
    let jitter = JITTER_SCALE * mean_diag;
    if jitter > 0.0 {
        let mut ridged = m.clone();
        for i in 0..n {
            ridged[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(ridged) {
            log::debug!("cholesky needed jitter {jitter:e}");
            return Ok(Factor {
                chol,
                jitter: Some(jitter),
            });
        }
    }
    Err(Error::NotPositiveDefinite(format!(
        "cholesky failed for {n}x{n} matrix after jitter"
    )))
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// `‖a − b‖_F / ‖b‖_F`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// `D^{1/2} M D^{1/2}` for a diagonal `D` given as a vector of its entries.
pub fn scale_sym(m: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let s = d.map(f64::sqrt);
    let n = m.nrows();
    DMatrix::from_fn(n, n, |i, j| s[i] * m[(i, j)] * s[j])
}
