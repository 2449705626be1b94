//! Structured covariance matrices used as the truth and as (mis)specifications.
//!
//! Every constructor validates its output: symmetry to a relative `1e-12`
//! and positive definiteness via a Cholesky factorization, which is kept.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Factor};

/// A rectangular lattice of sites, enumerated row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridLayout {
    pub rows: usize,
    pub cols: usize,
    #[serde(default = "one")]
    pub spacing: f64,
}

fn one() -> f64 {
    1.0
}

impl GridLayout {
    pub fn new(rows: usize, cols: usize, spacing: f64) -> Result<Self> {
        let layout = GridLayout {
            rows,
            cols,
            spacing,
        };
        layout.validate()?;
        Ok(layout)
    }

    /// Unit-spaced square grid.
    pub fn square(side: usize) -> Self {
        GridLayout {
            rows: side,
            cols: side,
            spacing: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::domain("grid rows and cols must be positive"));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::domain(format!(
                "grid spacing must be positive, got {}",
                self.spacing
            )));
        }
        Ok(())
    }

    /// Coordinates `(x, y)` of site `k` (row-major).
    pub fn site(&self, k: usize) -> [f64; 2] {
        let (r, c) = (k / self.cols, k % self.cols);
        [c as f64 * self.spacing, r as f64 * self.spacing]
    }
}

/// Kernel family and parameters that produced a covariance matrix.
///
/// This is also the config-file descriptor: `kernel = "<tag>"` plus the
/// variant's fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel", rename_all = "snake_case", deny_unknown_fields)]
pub enum Kernel {
    Exponential {
        rows: usize,
        cols: usize,
        #[serde(default = "one")]
        spacing: f64,
        range: f64,
    },
    Ar2 {
        m: usize,
        rho1: f64,
        rho2: f64,
        #[serde(default = "one")]
        innovation_var: f64,
        #[serde(default)]
        normalize: bool,
    },
    Identity {
        m: usize,
    },
    Separable {
        locations: Vec<[f64; 2]>,
        times: Vec<f64>,
        delta: f64,
        range: f64,
        alpha: f64,
    },
    /// User-supplied matrix, optionally read from a dumped CSV file.
    Custom {
        #[serde(default)]
        path: Option<PathBuf>,
    },
}

impl Kernel {
    pub fn tag(&self) -> &'static str {
        match self {
            Kernel::Exponential { .. } => "exponential",
            Kernel::Ar2 { .. } => "ar2",
            Kernel::Identity { .. } => "identity",
            Kernel::Separable { .. } => "separable",
            Kernel::Custom { .. } => "custom",
        }
    }

    /// Builds the matrix this descriptor names.
    pub fn build(&self) -> Result<CovarianceMatrix> {
        match self {
            Kernel::Exponential {
                rows,
                cols,
                spacing,
                range,
            } => exponential_cov(GridLayout::new(*rows, *cols, *spacing)?, *range),
            Kernel::Ar2 {
                m,
                rho1,
                rho2,
                innovation_var,
                normalize,
            } => ar2_cov(*m, *rho1, *rho2, *innovation_var, *normalize),
            Kernel::Identity { m } => identity_cov(*m),
            Kernel::Separable {
                locations,
                times,
                delta,
                range,
                alpha,
            } => separable_cov(locations, times, *delta, *range, *alpha),
            Kernel::Custom { path: Some(path) } => CovarianceMatrix::read_csv_file(path),
            Kernel::Custom { path: None } => Err(Error::Unsupported(
                "custom kernel needs a `path` to a covariance CSV".into(),
            )),
        }
    }

    /// Dimension of the matrix, when it is known without building it.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Kernel::Exponential { rows, cols, .. } => Some(rows * cols),
            Kernel::Ar2 { m, .. } | Kernel::Identity { m } => Some(*m),
            Kernel::Separable {
                locations, times, ..
            } => Some(locations.len() * times.len()),
            Kernel::Custom { .. } => None,
        }
    }

    /// Replaces the spatial range parameter, for kernels that have one.
    pub fn with_range(&self, new_range: f64) -> Option<Kernel> {
        let mut k = self.clone();
        match &mut k {
            Kernel::Exponential { range, .. } | Kernel::Separable { range, .. } => {
                *range = new_range;
                Some(k)
            }
            _ => None,
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Exponential {
                rows,
                cols,
                spacing,
                range,
            } => write!(f, "exponential({rows}x{cols}, spacing={spacing}, range={range})"),
            Kernel::Ar2 {
                m,
                rho1,
                rho2,
                normalize,
                ..
            } => write!(f, "ar2(m={m}, rho1={rho1}, rho2={rho2}, normalize={normalize})"),
            Kernel::Identity { m } => write!(f, "identity(m={m})"),
            Kernel::Separable {
                locations,
                times,
                delta,
                range,
                alpha,
            } => write!(
                f,
                "separable({}x{}, delta={delta}, range={range}, alpha={alpha})",
                locations.len(),
                times.len()
            ),
            Kernel::Custom { .. } => write!(f, "custom"),
        }
    }
}

/// Symmetric positive-definite matrix with its kernel provenance and Cholesky
/// factor. Immutable after construction.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    entries: DMatrix<f64>,
    kernel: Kernel,
    factor: Factor,
}

impl CovarianceMatrix {
    fn new(entries: DMatrix<f64>, kernel: Kernel) -> Result<Self> {
        if entries.nrows() == 0 {
            return Err(Error::domain("covariance dimension must be at least 1"));
        }
        let factor = linalg::factor(&entries)?;
        Ok(CovarianceMatrix {
            entries,
            kernel,
            factor,
        })
    }

    /// Wraps an arbitrary symmetric positive-definite matrix.
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        Self::new(entries, Kernel::Custom { path: None })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn factor(&self) -> &Factor {
        &self.factor
    }

    /// Lower-triangular Cholesky factor.
    pub fn cholesky(&self) -> DMatrix<f64> {
        self.factor.l()
    }

    /// Ridge added to the diagonal to obtain the factor, if any.
    pub fn jitter(&self) -> Option<f64> {
        self.factor.jitter()
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.entries.diagonal()
    }

    /// Writes the row-major dump with its `# covariance` header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# covariance m={} kernel={}",
            self.dim(),
            self.kernel.tag()
        )?;
        for i in 0..self.dim() {
            let row: Vec<String> = self.entries.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads a matrix dumped by [`CovarianceMatrix::write_csv`]. The result
    /// carries a `Custom` kernel tag.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|e| {
                        Error::Parse(format!("covariance line {}: {e}", lineno + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let m = rows.len();
        if m == 0 {
            return Err(Error::Parse("covariance file has no rows".into()));
        }
        for r in &rows {
            if r.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    actual: r.len(),
                });
            }
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Self::from_matrix(DMatrix::from_row_slice(m, m, &flat))
    }

    pub fn read_csv_file(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        let mut cov = Self::read_csv(std::io::BufReader::new(f))?;
        cov.kernel = Kernel::Custom {
            path: Some(path.to_path_buf()),
        };
        Ok(cov)
    }

    /// True when both matrices have identical entries.
    pub fn same_entries(&self, other: &CovarianceMatrix) -> bool {
        self.entries == other.entries
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive, got {v}")))
    }
}

/// Exponential covariance `exp(−d(s_i, s_j)/range)` on a regular grid.
pub fn exponential_cov(layout: GridLayout, range: f64) -> Result<CovarianceMatrix> {
    layout.validate()?;
    check_positive("range", range)?;
    let m = layout.len();
    let sites: Vec<[f64; 2]> = (0..m).map(|k| layout.site(k)).collect();
    let entries = DMatrix::from_fn(m, m, |i, j| {
        let d = distance(&sites[i], &sites[j]);
        (-d / range).exp()
    });
    CovarianceMatrix::new(
        entries,
        Kernel::Exponential {
            rows: layout.rows,
            cols: layout.cols,
            spacing: layout.spacing,
            range,
        },
    )
}

fn distance(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// Checks the AR(2) stationarity triangle.
pub fn check_ar2_stationary(rho1: f64, rho2: f64) -> Result<()> {
    if !(rho1.is_finite() && rho2.is_finite()) {
        return Err(Error::domain("AR(2) coefficients must be finite"));
    }
    if rho2 + rho1 >= 1.0 {
        return Err(Error::domain(format!(
            "AR(2) not stationary: rho2 + rho1 < 1 violated ({rho2} + {rho1})"
        )));
    }
    if rho2 - rho1 >= 1.0 {
        return Err(Error::domain(format!(
            "AR(2) not stationary: rho2 - rho1 < 1 violated ({rho2} - {rho1})"
        )));
    }
    if rho2.abs() >= 1.0 {
        return Err(Error::domain(format!(
            "AR(2) not stationary: |rho2| < 1 violated ({rho2})"
        )));
    }
    Ok(())
}

/// Stationary autocovariances `γ(0..len)` of an AR(2) process.
///
/// With `normalize`, returns autocorrelations instead (`γ(0) = 1`). Either
/// sequence satisfies `γ(k) = ρ1 γ(k−1) + ρ2 γ(k−2)` exactly for `k ≥ 2`.
pub fn ar2_autocovariance(
    len: usize,
    rho1: f64,
    rho2: f64,
    innovation_var: f64,
    normalize: bool,
) -> Result<Vec<f64>> {
    check_ar2_stationary(rho1, rho2)?;
    check_positive("innovation_var", innovation_var)?;
    let (g0, g1) = if normalize {
        (1.0, rho1 / (1.0 - rho2))
    } else {
        let g0 = innovation_var * (1.0 - rho2)
            / ((1.0 + rho2) * ((1.0 - rho2) * (1.0 - rho2) - rho1 * rho1));
        (g0, rho1 * g0 / (1.0 - rho2))
    };
    let mut gamma = Vec::with_capacity(len);
    for k in 0..len {
        let v = match k {
            0 => g0,
            1 => g1,
            _ => rho1 * gamma[k - 1] + rho2 * gamma[k - 2],
        };
        gamma.push(v);
    }
    Ok(gamma)
}

/// Covariance of `m` consecutive values of a stationary AR(2) process.
pub fn ar2_cov(
    m: usize,
    rho1: f64,
    rho2: f64,
    innovation_var: f64,
    normalize: bool,
) -> Result<CovarianceMatrix> {
    if m == 0 {
        return Err(Error::domain("m must be at least 1"));
    }
    let gamma = ar2_autocovariance(m, rho1, rho2, innovation_var, normalize)?;
    let entries = DMatrix::from_fn(m, m, |i, j| gamma[i.abs_diff(j)]);
    CovarianceMatrix::new(
        entries,
        Kernel::Ar2 {
            m,
            rho1,
            rho2,
            innovation_var,
            normalize,
        },
    )
}

pub fn identity_cov(m: usize) -> Result<CovarianceMatrix> {
    if m == 0 {
        return Err(Error::domain("m must be at least 1"));
    }
    CovarianceMatrix::new(DMatrix::identity(m, m), Kernel::Identity { m })
}

/// Separable space-time covariance `δ · exp(−‖s−s′‖/range) · alpha^{|t−t′|}`.
///
/// Ordering is time-major: all locations at the first time, then the second.
pub fn separable_cov(
    locations: &[[f64; 2]],
    times: &[f64],
    delta: f64,
    range: f64,
    alpha: f64,
) -> Result<CovarianceMatrix> {
    check_positive("delta", delta)?;
    check_positive("range", range)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if locations.is_empty() || times.is_empty() {
        return Err(Error::domain("separable kernel needs locations and times"));
    }
    let n_loc = locations.len();
    let m = n_loc * times.len();
    let entries = DMatrix::from_fn(m, m, |i, j| {
        let (ti, si) = (i / n_loc, i % n_loc);
        let (tj, sj) = (j / n_loc, j % n_loc);
        let d = distance(&locations[si], &locations[sj]);
        let tau = (times[ti] - times[tj]).abs();
        delta * (-d / range).exp() * alpha.powf(tau)
    });
    CovarianceMatrix::new(
        entries,
        Kernel::Separable {
            locations: locations.to_vec(),
            times: times.to_vec(),
            delta,
            range,
            alpha,
        },
    )
}
