//! Monte Carlo KL divergence between the correct and misspecified laws of
//! the statistics.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::posterior::{draw_dataset, ModelSpec, PosteriorOperator, TrueProcess};
use crate::rng::{stream, Purpose};
use crate::sampdist::{law_known_var, probit_scores, SamplingLaw};

/// Default number of Monte Carlo draws.
pub const DEFAULT_DRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlEstimate {
    /// Estimated divergence in nats.
    pub total: f64,
    /// `total / m`.
    pub per_dim: f64,
    /// Standard error of `total`.
    pub std_err: f64,
    /// Draws that entered the average.
    pub n_draws: usize,
    /// Draws dropped because a score was not finite.
    pub n_excluded: usize,
}

/// `log f_cor(h) − log f_mis(h)` at probit scores `φ`. The `φᵀφ` terms of
/// the two densities cancel.
pub fn log_density_ratio_scores(
    phi: &DVector<f64>,
    law_cor: &SamplingLaw,
    law_mis: &SamplingLaw,
) -> Result<f64> {
    check_dim(law_cor.dim(), phi.len())?;
    check_dim(law_mis.dim(), phi.len())?;
    let diff = law_mis.precision() - law_cor.precision();
    Ok(ratio_with_diff(phi, law_cor, law_mis, &diff))
}

fn ratio_with_diff(
    phi: &DVector<f64>,
    law_cor: &SamplingLaw,
    law_mis: &SamplingLaw,
    diff: &nalgebra::DMatrix<f64>,
) -> f64 {
    0.5 * (law_cor.log_det_precision() - law_mis.log_det_precision()) + 0.5 * phi.dot(&(diff * phi))
}

/// Log density ratio at statistics `h`.
pub fn log_density_ratio(
    h: &DVector<f64>,
    law_cor: &SamplingLaw,
    law_mis: &SamplingLaw,
) -> Result<f64> {
    log_density_ratio_scores(&probit_scores(h)?, law_cor, law_mis)
}

/// Estimates `D_KL(f_cor ‖ f_mis)` for the known-variance laws.
///
/// Draw `l` uses the stream `(root_seed, Divergence, l)`: `y` from the true
/// process, statistics under `spec_cor`, then the analytic log ratio. The
/// ratio is evaluated on probit scores directly, so statistics that round
/// to exactly 0 or 1 in double precision are still usable.
pub fn kl_known_var(
    truth: &TrueProcess,
    spec_cor: &ModelSpec,
    spec_mis: &ModelSpec,
    n_draws: usize,
    root_seed: u64,
) -> Result<KlEstimate> {
    if n_draws == 0 {
        return Err(Error::domain("number of KL draws must be positive"));
    }
    if !spec_cor.sigma_spec.same_entries(&truth.sigma1) {
        return Err(Error::domain(
            "the correct spec must use the true covariance",
        ));
    }
    if spec_cor.g != spec_mis.g {
        log::warn!(
            "KL between specs with different g ({} vs {})",
            spec_cor.g,
            spec_mis.g
        );
    }
    let law_cor = law_known_var(truth, spec_cor)?;
    let law_mis = law_known_var(truth, spec_mis)?;
    let op = PosteriorOperator::new(spec_cor)?;
    let diff = law_mis.precision() - law_cor.precision();
    let bound = &spec_cor.theta0;

    let summands: Vec<Option<f64>> = (0..n_draws)
        .into_par_iter()
        .map(|l| {
            let data = draw_dataset(truth, &mut stream(root_seed, Purpose::Divergence, l as u64));
            let phi = op.scores(&data.y, bound).ok()?;
            if phi.iter().all(|v| v.is_finite()) {
                Some(ratio_with_diff(&phi, &law_cor, &law_mis, &diff))
            } else {
                None
            }
        })
        .collect();

    let kept: Vec<f64> = summands.iter().flatten().copied().collect();
    let n_excluded = n_draws - kept.len();
    let limit = n_draws / 1000;
    if n_excluded > limit {
        return Err(Error::TooManyExcluded {
            excluded: n_excluded,
            total: n_draws,
            limit,
        });
    }
    if kept.is_empty() {
        return Err(Error::TooManyExcluded {
            excluded: n_excluded,
            total: n_draws,
            limit,
        });
    }
    let n = kept.len() as f64;
    let mean = kept.iter().sum::<f64>() / n;
    let var = if kept.len() > 1 {
        kept.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let m = truth.dim() as f64;
    Ok(KlEstimate {
        total: mean,
        per_dim: mean / m,
        std_err: (var / n).sqrt(),
        n_draws: kept.len(),
        n_excluded,
    })
}
