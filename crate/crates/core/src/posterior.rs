//! Data generation from the true process and posterior probabilities
//! `h_i = P(θ_i ≥ θ_{0i} | y)` under an assumed model.

use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::covariance::CovarianceMatrix;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, symmetrize};
use crate::special::{norm_cdf, t_cdf};

/// The data-generating process: `θ ~ N(θ₀, Σ₁)`, `y | θ ~ N(θ, σ₀² I)`.
#[derive(Debug, Clone)]
pub struct TrueProcess {
    pub theta0: DVector<f64>,
    pub sigma0_sq: f64,
    pub sigma1: Arc<CovarianceMatrix>,
}

impl TrueProcess {
    pub fn new(theta0: DVector<f64>, sigma0_sq: f64, sigma1: Arc<CovarianceMatrix>) -> Result<Self> {
        check_dim(sigma1.dim(), theta0.len())?;
        if !(sigma0_sq > 0.0 && sigma0_sq.is_finite()) {
            return Err(Error::domain(format!(
                "sigma0_sq must be positive, got {sigma0_sq}"
            )));
        }
        Ok(TrueProcess {
            theta0,
            sigma0_sq,
            sigma1,
        })
    }

    /// Zero prior mean.
    pub fn centered(sigma0_sq: f64, sigma1: Arc<CovarianceMatrix>) -> Result<Self> {
        let m = sigma1.dim();
        Self::new(DVector::zeros(m), sigma0_sq, sigma1)
    }

    pub fn dim(&self) -> usize {
        self.theta0.len()
    }

    /// Marginal covariance of `y`: `σ₀² I + Σ₁`.
    pub fn marginal_cov(&self) -> DMatrix<f64> {
        let mut s = self.sigma1.entries().clone();
        for i in 0..s.nrows() {
            s[(i, i)] += self.sigma0_sq;
        }
        s
    }
}

/// How the analyst treats the noise variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    KnownVariance { sigma0_sq: f64 },
    /// Inverse-gamma prior `IG(alpha_ig, beta_ig)` on the noise variance.
    UnknownVariance { alpha_ig: f64, beta_ig: f64 },
}

/// The analyst's model: prior `θ ~ N(θ₀, g Σ)` (times `σ²` when the noise
/// variance is unknown).
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub theta0: DVector<f64>,
    pub g: f64,
    pub sigma_spec: Arc<CovarianceMatrix>,
    pub noise: NoiseModel,
}

impl ModelSpec {
    pub fn new(
        theta0: DVector<f64>,
        g: f64,
        sigma_spec: Arc<CovarianceMatrix>,
        noise: NoiseModel,
    ) -> Result<Self> {
        check_dim(sigma_spec.dim(), theta0.len())?;
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::domain(format!("g must be positive, got {g}")));
        }
        match noise {
            NoiseModel::KnownVariance { sigma0_sq } if sigma0_sq.is_nan() || sigma0_sq <= 0.0 => {
                return Err(Error::domain("sigma0_sq must be positive"));
            }
            NoiseModel::UnknownVariance { alpha_ig, beta_ig }
                if !(alpha_ig > 0.0 && beta_ig > 0.0) =>
            {
                return Err(Error::domain(
                    "inverse-gamma parameters must be positive",
                ));
            }
            _ => {}
        }
        Ok(ModelSpec {
            theta0,
            g,
            sigma_spec,
            noise,
        })
    }

    /// Known-variance spec sharing the truth's prior mean and noise variance.
    pub fn known_for(truth: &TrueProcess, g: f64, sigma_spec: Arc<CovarianceMatrix>) -> Result<Self> {
        Self::new(
            truth.theta0.clone(),
            g,
            sigma_spec,
            NoiseModel::KnownVariance {
                sigma0_sq: truth.sigma0_sq,
            },
        )
    }

    pub fn unknown_for(
        truth: &TrueProcess,
        g: f64,
        sigma_spec: Arc<CovarianceMatrix>,
        alpha_ig: f64,
        beta_ig: f64,
    ) -> Result<Self> {
        Self::new(
            truth.theta0.clone(),
            g,
            sigma_spec,
            NoiseModel::UnknownVariance { alpha_ig, beta_ig },
        )
    }

    pub fn dim(&self) -> usize {
        self.theta0.len()
    }
}

/// One realization of the true process.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: DVector<f64>,
    pub theta: DVector<f64>,
    /// `(root seed, stream index)` that produced the draw, when known.
    pub seed: Option<(u64, u64)>,
}

/// One-sided nulls `H0i: θ_i ≥ θ_bound_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypotheses {
    pub theta_bound: DVector<f64>,
}

impl Hypotheses {
    pub fn at_prior_mean(spec: &ModelSpec) -> Self {
        Hypotheses {
            theta_bound: spec.theta0.clone(),
        }
    }
}

/// Draws `θ ~ N(θ₀, Σ₁)` through the Cholesky factor, then `y = θ + ε`.
pub fn draw_dataset<R: Rng + ?Sized>(truth: &TrueProcess, rng: &mut R) -> Dataset {
    let m = truth.dim();
    let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let theta = &truth.theta0 + truth.sigma1.factor().mul_l(&z);
    let sd = truth.sigma0_sq.sqrt();
    let y = DVector::from_fn(m, |i, _| theta[i] + sd * rng.sample::<f64, _>(StandardNormal));
    Dataset {
        y,
        theta,
        seed: None,
    }
}

/// Precomputed linear algebra for one model spec.
///
/// With `τ = σ₀²` (known variance) or `τ = 1` (unknown variance), the
/// posterior mean is `θ₀ + W (y − θ₀)` where
/// `W = (I + τ/g Σ⁻¹)⁻¹ = gΣ (τI + gΣ)⁻¹`, and the posterior (scale)
/// covariance is `A = τ W`. Only `τI + gΣ` is factored, never `Σ⁻¹`.
#[derive(Debug, Clone)]
pub struct PosteriorOperator {
    theta0: DVector<f64>,
    noise: NoiseModel,
    tau: f64,
    w: DMatrix<f64>,
    a_diag: DVector<f64>,
}

impl PosteriorOperator {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        let tau = match spec.noise {
            NoiseModel::KnownVariance { sigma0_sq } => sigma0_sq,
            NoiseModel::UnknownVariance { .. } => 1.0,
        };
        let m = spec.dim();
        let g_sigma = spec.sigma_spec.entries() * spec.g;
        let mut k = g_sigma.clone();
        for i in 0..m {
            k[(i, i)] += tau;
        }
        let k_factor = linalg::factor(&k)?;
        let mut w = k_factor.solve_mat(&g_sigma);
        symmetrize(&mut w);
        let a_diag = w.diagonal() * tau;
        Ok(PosteriorOperator {
            theta0: spec.theta0.clone(),
            noise: spec.noise,
            tau,
            w,
            a_diag,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta0.len()
    }

    /// `W`, the shrinkage matrix mapping `y − θ₀` to `θ^(y) − θ₀`.
    pub fn shrinkage(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    /// `τ` such that `A = τ W`.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Diagonal of the posterior covariance `A` (known variance) or of the
    /// posterior scale matrix before the data-dependent factor (unknown).
    pub fn a_diag(&self) -> &DVector<f64> {
        &self.a_diag
    }

    /// Posterior mean `θ^(y)`.
    pub fn posterior_mean(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), y.len())?;
        Ok(&self.theta0 + &self.w * (y - &self.theta0))
    }

    /// Standardized statistics: `h_i = F(score_i)` with `F = Φ` (known
    /// variance) or the t CDF with `m + 2α` degrees of freedom (unknown).
    pub fn scores(&self, y: &DVector<f64>, bound: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), y.len())?;
        check_dim(self.dim(), bound.len())?;
        let d = y - &self.theta0;
        let shift = &self.w * &d;
        let mean = &self.theta0 + &shift;
        let scale = match self.noise {
            NoiseModel::KnownVariance { .. } => 1.0,
            NoiseModel::UnknownVariance { alpha_ig, beta_ig } => {
                // (y−θ₀)ᵀ (I + gΣ)⁻¹ (y−θ₀) = (y−θ₀)ᵀ (I − W) (y−θ₀)
                let quad = d.dot(&d) - d.dot(&shift);
                let nu = self.dim() as f64 + 2.0 * alpha_ig;
                (2.0 * beta_ig + quad) / nu
            }
        };
        Ok(DVector::from_fn(self.dim(), |i, _| {
            (mean[i] - bound[i]) / (scale * self.a_diag[i]).sqrt()
        }))
    }

    /// Degrees of freedom of the marginal posterior, if t.
    pub fn dof(&self) -> Option<f64> {
        match self.noise {
            NoiseModel::KnownVariance { .. } => None,
            NoiseModel::UnknownVariance { alpha_ig, .. } => {
                Some(self.dim() as f64 + 2.0 * alpha_ig)
            }
        }
    }

    /// Maps scores to probabilities.
    pub fn to_probs(&self, scores: &DVector<f64>) -> DVector<f64> {
        match self.dof() {
            None => scores.map(norm_cdf),
            Some(nu) => scores.map(|t| t_cdf(t, nu)),
        }
    }

    pub fn probs(&self, y: &DVector<f64>, hyp: &Hypotheses) -> Result<DVector<f64>> {
        self.probs_at(y, &hyp.theta_bound)
    }

    pub fn probs_at(&self, y: &DVector<f64>, bound: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.to_probs(&self.scores(y, bound)?))
    }
}

fn warn_if_bound_differs(spec: &ModelSpec, hyp: &Hypotheses) {
    if hyp.theta_bound != spec.theta0 {
        log::warn!("hypothesis bound differs from the prior mean; the sampling-law theory assumes they match");
    }
}

/// Posterior probabilities of the nulls when the noise variance is known.
pub fn posterior_probs_known_var(
    y: &DVector<f64>,
    spec: &ModelSpec,
    hyp: &Hypotheses,
) -> Result<DVector<f64>> {
    if !matches!(spec.noise, NoiseModel::KnownVariance { .. }) {
        return Err(Error::Unsupported(
            "posterior_probs_known_var needs a known-variance spec".into(),
        ));
    }
    warn_if_bound_differs(spec, hyp);
    PosteriorOperator::new(spec)?.probs(y, hyp)
}

/// Posterior probabilities of the nulls under the normal-inverse-gamma prior.
pub fn posterior_probs_unknown_var(
    y: &DVector<f64>,
    spec: &ModelSpec,
    hyp: &Hypotheses,
) -> Result<DVector<f64>> {
    if !matches!(spec.noise, NoiseModel::UnknownVariance { .. }) {
        return Err(Error::Unsupported(
            "posterior_probs_unknown_var needs an unknown-variance spec".into(),
        ));
    }
    warn_if_bound_differs(spec, hyp);
    PosteriorOperator::new(spec)?.probs(y, hyp)
}

/// Writes `i,y,theta,h` rows. `h` may be omitted (empty column).
pub fn write_dataset_csv<W: Write>(
    out: W,
    data: &Dataset,
    h: Option<&DVector<f64>>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "y", "theta", "h"])?;
    for i in 0..data.y.len() {
        let h_s = h.map(|h| h[i].to_string()).unwrap_or_default();
        w.write_record([
            i.to_string(),
            data.y[i].to_string(),
            data.theta[i].to_string(),
            h_s,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_dataset_csv`].
pub fn read_dataset_csv<R: Read>(input: R) -> Result<(Dataset, Option<DVector<f64>>)> {
    let mut rdr = csv::Reader::from_reader(input);
    let (mut y, mut theta, mut h) = (Vec::new(), Vec::new(), Vec::new());
    let mut has_h = true;
    for rec in rdr.records() {
        let rec = rec?;
        let field = |k: usize| -> Result<&str> {
            rec.get(k)
                .ok_or_else(|| Error::Parse(format!("missing column {k}")))
        };
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Parse(format!("dataset value `{s}`: {e}")))
        };
        y.push(parse(field(1)?)?);
        theta.push(parse(field(2)?)?);
        match rec.get(3) {
            Some(s) if !s.is_empty() => h.push(parse(s)?),
            _ => has_h = false,
        }
    }
    let data = Dataset {
        y: DVector::from_vec(y),
        theta: DVector::from_vec(theta),
        seed: None,
    };
    Ok((data, has_h.then(|| DVector::from_vec(h))))
}
