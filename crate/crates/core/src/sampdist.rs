//! Sampling laws of the posterior-probability statistics.
//!
//! For a (truth, spec) pair the statistics are driven by
//! `θ^(y) − θ₀ = W (y − θ₀) ~ N(0, B)` with `B = W (σ₀² I + Σ₁) W`, and the
//! posterior scale `A = τ W`. The marginal law of `h_i` depends only on
//! `r_i = a_ii / b_ii`; the joint law adds the correlation matrix `P_b` of `B`.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, rel_frobenius, scale_sym, symmetrize, Factor};
use crate::posterior::{ModelSpec, NoiseModel, PosteriorOperator, TrueProcess};
use crate::special::{norm_cdf, norm_quantile, t_cdf};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LawMode {
    KnownVar,
    UnknownVar { alpha_ig: f64, beta_ig: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecTag {
    Correct,
    Misspecified,
}

/// Everything that determines the distribution of `h` under one
/// (spec, truth) pair.
#[derive(Debug, Clone)]
pub struct SamplingLaw {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    r: DVector<f64>,
    pb: DMatrix<f64>,
    c: Option<DMatrix<f64>>,
    mode: LawMode,
    spec_tag: SpecTag,
    // diag(A)^{1/2} B⁻¹ diag(A)^{1/2}, i.e. the precision of the probit scores.
    m_mat: DMatrix<f64>,
    log_det_m: f64,
    pb_factor: Factor,
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_err: f64,
    pub n_draws: usize,
}

fn build_law(truth: &TrueProcess, spec: &ModelSpec) -> Result<SamplingLaw> {
    check_dim(truth.dim(), spec.dim())?;
    let op = PosteriorOperator::new(spec)?;
    let m = spec.dim();
    let tau = op.tau();
    let w = op.shrinkage();

    let a = w * tau;
    let s = truth.marginal_cov();
    let mut b = w * &s * w;
    symmetrize(&mut b);
    let a_diag = a.diagonal();
    let b_diag = b.diagonal();
    if b_diag.iter().any(|v| v.is_nan() || *v <= 0.0) {
        return Err(Error::NotPositiveDefinite("B has a nonpositive diagonal".into()));
    }
    let r = a_diag.component_div(&b_diag);
    let inv_b_diag = b_diag.map(|v| 1.0 / v);
    let mut pb = scale_sym(&b, &inv_b_diag);
    for i in 0..m {
        pb[(i, i)] = 1.0;
    }
    let pb_factor = linalg::factor(&pb)?;

    // B⁻¹ = W⁻¹ S⁻¹ W⁻¹ with W⁻¹ = I + (τ/g) Σ_s⁻¹.
    let mut w_inv = spec.sigma_spec.factor().inverse() * (tau / spec.g);
    for i in 0..m {
        w_inv[(i, i)] += 1.0;
    }
    let s_inv = linalg::factor(&s)?.inverse();
    let mut b_inv = &w_inv * s_inv * &w_inv;
    symmetrize(&mut b_inv);
    let m_mat = scale_sym(&b_inv, &a_diag);
    let log_det_m = linalg::factor(&m_mat)?.log_det();

    let (mode, c) = match spec.noise {
        NoiseModel::KnownVariance { .. } => (LawMode::KnownVar, None),
        NoiseModel::UnknownVariance { alpha_ig, beta_ig } => {
            // Here A = W, so A⁻² − A⁻¹ = W⁻¹ (W⁻¹ − I). With u = W d ~ N(0, B)
            // the residual quadratic form is uᵀ(A⁻² − A⁻¹)u, and u = diag(B)^{1/2} z,
            // so C = diag(B)^{1/2} (A⁻² − A⁻¹) diag(B)^{1/2}.
            let mut w_inv_minus_i = w_inv.clone();
            for i in 0..m {
                w_inv_minus_i[(i, i)] -= 1.0;
            }
            let mut quad = &w_inv * w_inv_minus_i;
            symmetrize(&mut quad);
            check_psd(&quad, "A^-2 - A^-1")?;
            (
                LawMode::UnknownVar { alpha_ig, beta_ig },
                Some(scale_sym(&quad, &b_diag)),
            )
        }
    };
    let spec_tag = if spec.sigma_spec.same_entries(&truth.sigma1) {
        SpecTag::Correct
    } else {
        SpecTag::Misspecified
    };
    Ok(SamplingLaw {
        a,
        b,
        r,
        pb,
        c,
        mode,
        spec_tag,
        m_mat,
        log_det_m,
        pb_factor,
    })
}

fn check_psd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let scale = eig.amax().max(1.0);
    let min = eig.min();
    if min < -1e-10 * scale {
        return Err(Error::NotPositiveDefinite(format!(
            "{what} has eigenvalue {min:e}"
        )));
    }
    Ok(())
}

/// Law of the statistics when the noise variance is known.
pub fn law_known_var(truth: &TrueProcess, spec: &ModelSpec) -> Result<SamplingLaw> {
    match spec.noise {
        NoiseModel::KnownVariance { sigma0_sq } => {
            if sigma0_sq != truth.sigma0_sq {
                return Err(Error::domain(format!(
                    "known-variance spec uses sigma0_sq={sigma0_sq} but the truth has {}",
                    truth.sigma0_sq
                )));
            }
        }
        NoiseModel::UnknownVariance { .. } => {
            return Err(Error::Unsupported(
                "law_known_var needs a known-variance spec".into(),
            ))
        }
    }
    build_law(truth, spec)
}

/// Law of the statistics under the normal-inverse-gamma prior.
pub fn law_unknown_var(truth: &TrueProcess, spec: &ModelSpec) -> Result<SamplingLaw> {
    if !matches!(spec.noise, NoiseModel::UnknownVariance { .. }) {
        return Err(Error::Unsupported(
            "law_unknown_var needs an unknown-variance spec".into(),
        ));
    }
    build_law(truth, spec)
}

impl SamplingLaw {
    pub fn dim(&self) -> usize {
        self.r.len()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// Ratios `r_i = a_ii / b_ii`.
    pub fn r(&self) -> &DVector<f64> {
        &self.r
    }

    /// Correlation matrix of `B`.
    pub fn pb(&self) -> &DMatrix<f64> {
        &self.pb
    }

    /// Quadratic-form matrix of the Ξ law (unknown variance only).
    pub fn c(&self) -> Option<&DMatrix<f64>> {
        self.c.as_ref()
    }

    pub fn mode(&self) -> LawMode {
        self.mode
    }

    pub fn spec_tag(&self) -> SpecTag {
        self.spec_tag
    }

    /// `diag(A)^{1/2} B⁻¹ diag(A)^{1/2}`.
    pub fn precision(&self) -> &DMatrix<f64> {
        &self.m_mat
    }

    pub fn log_det_precision(&self) -> f64 {
        self.log_det_m
    }

    /// `R^{1/2} P_b⁻¹ R^{1/2}`, computed through a factorization of `P_b`.
    pub fn precision_via_correlation(&self) -> DMatrix<f64> {
        scale_sym(&self.pb_factor.inverse(), &self.r)
    }

    /// Relative Frobenius gap between the two routes to the precision matrix.
    pub fn identity_residual(&self) -> f64 {
        rel_frobenius(&self.m_mat, &self.precision_via_correlation())
    }

    /// Degrees of freedom `m + 2α` of the unknown-variance law.
    pub fn dof(&self) -> Option<f64> {
        match self.mode {
            LawMode::KnownVar => None,
            LawMode::UnknownVar { alpha_ig, .. } => Some(self.dim() as f64 + 2.0 * alpha_ig),
        }
    }

    /// Joint log density evaluated at probit scores `φ = Φ⁻¹(h)`.
    pub fn log_density_at_scores(&self, phi: &DVector<f64>) -> Result<f64> {
        self.require_known("joint density")?;
        check_dim(self.dim(), phi.len())?;
        let quad = phi.dot(&(&self.m_mat * phi));
        Ok(0.5 * self.log_det_m + 0.5 * (phi.dot(phi) - quad))
    }

    fn require_known(&self, what: &str) -> Result<()> {
        match self.mode {
            LawMode::KnownVar => Ok(()),
            LawMode::UnknownVar { .. } => Err(Error::Unsupported(format!(
                "{what} is only available for the known-variance law"
            ))),
        }
    }

    /// Per-coordinate summary: `i, r, a_ii, b_ii`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "r", "a_ii", "b_ii"])?;
        for i in 0..self.dim() {
            w.write_record([
                i.to_string(),
                self.r[i].to_string(),
                self.a[(i, i)].to_string(),
                self.b[(i, i)].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_open_unit(h: f64, index: usize) -> Result<()> {
    if h > 0.0 && h < 1.0 {
        Ok(())
    } else {
        Err(Error::Boundary { index, value: h })
    }
}

fn check_ratio(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("ratio must be positive, got {r}")))
    }
}

/// Marginal CDF `Φ(√r Φ⁻¹(h))`.
pub fn marginal_cdf(h: f64, r: f64) -> Result<f64> {
    check_open_unit(h, 0)?;
    check_ratio(r)?;
    Ok(norm_cdf(r.sqrt() * norm_quantile(h)))
}

/// Marginal density `√r exp{(1 − r) φ² / 2}` with `φ = Φ⁻¹(h)`.
pub fn marginal_pdf(h: f64, r: f64) -> Result<f64> {
    check_open_unit(h, 0)?;
    check_ratio(r)?;
    let phi = norm_quantile(h);
    Ok(r.sqrt() * (0.5 * (1.0 - r) * phi * phi).exp())
}

/// Probit scores `Φ⁻¹(h_i)`, rejecting statistics on the boundary.
pub fn probit_scores(h: &DVector<f64>) -> Result<DVector<f64>> {
    for (i, &v) in h.iter().enumerate() {
        check_open_unit(v, i)?;
    }
    Ok(h.map(norm_quantile))
}

/// Joint log density of `h` under a known-variance law.
pub fn joint_log_pdf(h: &DVector<f64>, law: &SamplingLaw) -> Result<f64> {
    check_dim(law.dim(), h.len())?;
    law.log_density_at_scores(&probit_scores(h)?)
}

/// Monte Carlo estimate of the joint CDF: `P(z ≤ √r ⊙ Φ⁻¹(h))` for
/// `z ~ N(0, P_b)`.
pub fn joint_cdf_mc<R: Rng + ?Sized>(
    h: &DVector<f64>,
    law: &SamplingLaw,
    n_draws: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    law.require_known("joint CDF")?;
    check_dim(law.dim(), h.len())?;
    if n_draws == 0 {
        return Err(Error::domain("n_draws must be positive"));
    }
    let u = probit_scores(h)?.component_mul(&law.r.map(f64::sqrt));
    let m = law.dim();
    let mut hits = 0usize;
    for _ in 0..n_draws {
        let e = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let z = law.pb_factor.mul_l(&e);
        if z.iter().zip(u.iter()).all(|(zi, ui)| zi <= ui) {
            hits += 1;
        }
    }
    let p = hits as f64 / n_draws as f64;
    Ok(McEstimate {
        estimate: p,
        std_err: (p * (1.0 - p) / n_draws as f64).sqrt(),
        n_draws,
    })
}

/// Draws of `√((m + 2α) / (zᵀ C z + 2β)) z` with `z ~ N(0, P_b)`, one per row.
pub fn xi_sampler<R: Rng + ?Sized>(
    law: &SamplingLaw,
    n_draws: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let (c, nu, beta) = match (&law.c, law.mode) {
        (Some(c), LawMode::UnknownVar { alpha_ig, beta_ig }) => {
            (c, law.dim() as f64 + 2.0 * alpha_ig, beta_ig)
        }
        _ => {
            return Err(Error::Unsupported(
                "the Ξ sampler needs an unknown-variance law".into(),
            ))
        }
    };
    let m = law.dim();
    let mut out = DMatrix::zeros(n_draws, m);
    for k in 0..n_draws {
        let e = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let z = law.pb_factor.mul_l(&e);
        let scale = (nu / (z.dot(&(c * &z)) + 2.0 * beta)).sqrt();
        for i in 0..m {
            out[(k, i)] = scale * z[i];
        }
    }
    Ok(out)
}

/// Maps one Ξ draw to statistics: `h_i = Ψ_{m+2α}(ξ_i / √r_i)`.
pub fn xi_to_probs(law: &SamplingLaw, xi: &[f64]) -> Result<DVector<f64>> {
    let nu = law
        .dof()
        .ok_or_else(|| Error::Unsupported("Ξ draws need an unknown-variance law".into()))?;
    check_dim(law.dim(), xi.len())?;
    Ok(DVector::from_fn(law.dim(), |i, _| {
        t_cdf(xi[i] / law.r[i].sqrt(), nu)
    }))
}
