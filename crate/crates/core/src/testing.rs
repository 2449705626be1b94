//! Step-up procedure on posterior probabilities and Monte Carlo estimates of
//! its operating characteristics.
//!
//! FDR and FNR are estimated as replication means of
//! `FDP = V / max(R, 1)` and `FNP = T / max(m − R, 1)`, where `V` counts
//! rejected true nulls, `R` all rejections, and `T` accepted true
//! alternatives.

use std::io::{Read, Write};

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::posterior::{draw_dataset, ModelSpec, PosteriorOperator, TrueProcess};
use crate::rng::{stream, Purpose};

/// Rejections of one run of the step-up rule.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionSet {
    pub rejected: Vec<bool>,
    pub k: usize,
    pub threshold_level: f64,
}

/// Rejects the `k` hypotheses with the smallest `h`, where `k` is the largest
/// `i` whose sorted prefix mean is at most `alpha_star`.
///
/// Ties in `h` are ordered by original index.
pub fn step_up(h: &[f64], alpha_star: f64) -> Result<DecisionSet> {
    if !(alpha_star > 0.0 && alpha_star < 1.0) {
        return Err(Error::domain(format!(
            "alpha_star must lie in (0,1), got {alpha_star}"
        )));
    }
    if let Some((i, v)) = h.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::domain(format!("h[{i}] = {v} is outside [0,1]")));
    }
    let order = sorted_order(h);
    let mut sum = 0.0;
    let mut k = 0;
    for (i, &idx) in order.iter().enumerate() {
        sum += h[idx];
        if sum / (i + 1) as f64 <= alpha_star {
            k = i + 1;
        }
    }
    let mut rejected = vec![false; h.len()];
    for &idx in &order[..k] {
        rejected[idx] = true;
    }
    Ok(DecisionSet {
        rejected,
        k,
        threshold_level: alpha_star,
    })
}

fn sorted_order(h: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..h.len()).collect();
    // Stable sort keeps index order among ties.
    order.sort_by(|&a, &b| h[a].total_cmp(&h[b]));
    order
}

/// `true` where the null `θ_i ≥ bound_i` holds.
pub fn truth_labels(theta: &DVector<f64>, theta_bound: &DVector<f64>) -> Result<Vec<bool>> {
    check_dim(theta.len(), theta_bound.len())?;
    Ok(theta.iter().zip(theta_bound.iter()).map(|(t, b)| t >= b).collect())
}

/// Outcome of one replication under one spec.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicationOutcome {
    pub fdp: f64,
    pub fnp: f64,
    pub rejections: usize,
}

impl ReplicationOutcome {
    pub fn score(decision: &DecisionSet, null: &[bool]) -> Self {
        let m = null.len();
        let r = decision.k;
        let false_rej = decision
            .rejected
            .iter()
            .zip(null)
            .filter(|(rej, nul)| **rej && **nul)
            .count();
        let missed = decision
            .rejected
            .iter()
            .zip(null)
            .filter(|(rej, nul)| !**rej && !**nul)
            .count();
        ReplicationOutcome {
            fdp: false_rej as f64 / r.max(1) as f64,
            fnp: missed as f64 / (m - r).max(1) as f64,
            rejections: r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingCharacteristics {
    pub fdr_hat: f64,
    pub fnr_hat: f64,
    pub mean_rejection_rate: f64,
    pub n_reps: usize,
    pub fdr_se: f64,
    pub fnr_se: f64,
}

/// Mean and standard error of the mean.
pub(crate) fn mean_se(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl OperatingCharacteristics {
    pub fn from_outcomes(outcomes: &[ReplicationOutcome], m: usize) -> Self {
        let (fdr_hat, fdr_se) = mean_se(outcomes.iter().map(|o| o.fdp));
        let (fnr_hat, fnr_se) = mean_se(outcomes.iter().map(|o| o.fnp));
        let mean_r = outcomes.iter().map(|o| o.rejections as f64).sum::<f64>() / outcomes.len() as f64;
        OperatingCharacteristics {
            fdr_hat,
            fnr_hat,
            mean_rejection_rate: mean_r / m as f64,
            n_reps: outcomes.len(),
            fdr_se,
            fnr_se,
        }
    }
}

/// Runs `n_reps` replications; in each, one dataset feeds every spec.
///
/// Returns `outcomes[rep][spec]`. Replication `r` draws its dataset from the
/// stream `(root_seed, Replication, r)`, so runs that share a seed also share
/// datasets. Nulls are `θ_i ≥ θ₀ᵢ` with `θ₀` the truth's prior mean.
pub fn replicate_paired(
    truth: &TrueProcess,
    specs: &[&ModelSpec],
    alpha_star: f64,
    n_reps: usize,
    root_seed: u64,
) -> Result<Vec<Vec<ReplicationOutcome>>> {
    if n_reps == 0 {
        return Err(Error::domain("n_reps must be at least 1"));
    }
    if !(alpha_star > 0.0 && alpha_star < 1.0) {
        return Err(Error::domain(format!(
            "alpha_star must lie in (0,1), got {alpha_star}"
        )));
    }
    let ops = specs
        .iter()
        .map(|s| {
            check_dim(truth.dim(), s.dim())?;
            PosteriorOperator::new(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let bound = &truth.theta0;
    (0..n_reps)
        .into_par_iter()
        .map(|r| {
            let data = draw_dataset(truth, &mut stream(root_seed, Purpose::Replication, r as u64));
            let null = truth_labels(&data.theta, bound)?;
            ops.iter()
                .map(|op| {
                    let h = op.probs_at(&data.y, bound)?;
                    let d = step_up(h.as_slice(), alpha_star)?;
                    Ok(ReplicationOutcome::score(&d, &null))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

/// Monte Carlo FDR/FNR of the step-up rule for one spec.
pub fn operating_characteristics(
    truth: &TrueProcess,
    spec: &ModelSpec,
    alpha_star: f64,
    n_reps: usize,
    root_seed: u64,
) -> Result<OperatingCharacteristics> {
    let outcomes: Vec<ReplicationOutcome> = replicate_paired(truth, &[spec], alpha_star, n_reps, root_seed)?
        .into_iter()
        .map(|v| v[0])
        .collect();
    Ok(OperatingCharacteristics::from_outcomes(&outcomes, truth.dim()))
}

/// Reads an h-vector CSV: the column named `h`, or the only column.
pub fn read_h_csv<R: Read>(input: R) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = match headers.iter().position(|c| c.trim() == "h") {
        Some(c) => c,
        None if headers.len() == 1 => 0,
        None => {
            return Err(Error::Parse(
                "h CSV needs a column named `h` or exactly one column".into(),
            ))
        }
    };
    let mut h = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let s = rec.get(col).unwrap_or("").trim();
        h.push(
            s.parse::<f64>()
                .map_err(|e| Error::Parse(format!("h value `{s}`: {e}")))?,
        );
    }
    Ok(h)
}

/// Writes `i,h,rejected` with `rejected` as 0/1.
pub fn write_mask_csv<W: Write>(out: W, h: &[f64], decision: &DecisionSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "h", "rejected"])?;
    for (i, (hv, rej)) in h.iter().zip(&decision.rejected).enumerate() {
        w.write_record([i.to_string(), hv.to_string(), u8::from(*rej).to_string()])?;
    }
    w.flush()?;
    Ok(())
}
