//! Configuration-driven sweeps over `g` or the misspecified range parameter,
//! with paired correct/misspecified runs.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::covariance::{CovarianceMatrix, Kernel};
use crate::divergence::{kl_known_var, DEFAULT_DRAWS};
use crate::error::{Error, Result};
use crate::posterior::{ModelSpec, TrueProcess};
use crate::testing::{mean_se, replicate_paired, OperatingCharacteristics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Prior scale, applied to both specs.
    G,
    /// Range parameter of the misspecified kernel.
    Range,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

/// One experiment: a true process, a correct and a misspecified spec, and a
/// sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub sigma0_sq: f64,
    /// Constant prior mean (and hypothesis bound) for every coordinate.
    #[serde(default)]
    pub theta0: f64,
    /// Prior scale when the sweep is over the range parameter.
    #[serde(default = "default_g")]
    pub g: f64,
    #[serde(default = "default_alpha")]
    pub alpha_star: f64,
    pub n_reps: usize,
    #[serde(default = "default_kl_draws")]
    pub kl_draws: usize,
    #[serde(default)]
    pub seed: u64,
    pub truth: Kernel,
    /// Defaults to the truth's kernel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec_cor: Option<Kernel>,
    pub spec_mis: Kernel,
    pub sweep: Sweep,
}

fn default_name() -> String {
    "experiment".into()
}
fn default_g() -> f64 {
    1.0
}
fn default_alpha() -> f64 {
    0.05
}
fn default_kl_draws() -> usize {
    DEFAULT_DRAWS
}

/// Default `g` grid: `log10 g ∈ {−2, …, 3}`.
pub const DEFAULT_G_GRID: [f64; 6] = [0.01, 0.1, 1.0, 10.0, 100.0, 1000.0];

/// Default range grid for the range sweep, including the true value 5.
pub const DEFAULT_RANGE_GRID: [f64; 7] = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0];

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let key = e
                .message()
                .split('`')
                .nth(1)
                .unwrap_or("<config>")
                .to_string();
            Error::config(key, e.to_string().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative `custom` kernel paths are resolved
    /// against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            let kernels = [Some(&mut cfg.truth), cfg.spec_cor.as_mut(), Some(&mut cfg.spec_mis)];
            for k in kernels.into_iter().flatten() {
                if let Kernel::Custom { path: Some(p) } = k {
                    if p.is_relative() {
                        *p = base.join(&*p);
                    }
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn cor_kernel(&self) -> &Kernel {
        self.spec_cor.as_ref().unwrap_or(&self.truth)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma0_sq > 0.0 && self.sigma0_sq.is_finite()) {
            return Err(Error::config("sigma0_sq", "must be positive"));
        }
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(Error::config("g", "must be positive"));
        }
        if !(self.alpha_star > 0.0 && self.alpha_star < 1.0) {
            return Err(Error::config("alpha_star", "must lie in (0,1)"));
        }
        if self.n_reps == 0 {
            return Err(Error::config("n_reps", "must be at least 1"));
        }
        if self.kl_draws == 0 {
            return Err(Error::config("kl_draws", "must be at least 1"));
        }
        if self.sweep.values.is_empty() {
            return Err(Error::config("sweep.values", "must not be empty"));
        }
        if let Some(v) = self.sweep.values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::config(
                "sweep.values",
                format!("values must be positive, got {v}"),
            ));
        }
        if self.sweep.variable == SweepVariable::Range && self.spec_mis.with_range(1.0).is_none() {
            return Err(Error::config(
                "spec_mis.kernel",
                "a range sweep needs an exponential or separable misspecified kernel",
            ));
        }
        let m = self.truth.dim();
        for (key, k) in [("spec_cor", self.cor_kernel()), ("spec_mis", &self.spec_mis)] {
            if let (Some(a), Some(b)) = (m, k.dim()) {
                if a != b {
                    return Err(Error::config(
                        key,
                        format!("dimension {b} differs from the truth's {a}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Which paper example to reproduce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// m = 900, 1000 replications.
    Full,
    /// m = 100, 400 replications.
    Desk,
}

/// Configurations of the three worked examples.
///
/// 1. exponential range 5 on a grid vs independence, sweep over `g`;
/// 2. AR(2) (1.5, −0.9) vs (0.6, 0.3), sweep over `g`;
/// 3. exponential range 5 truth, `g = 1`, sweep over the misspecified range.
pub fn builtin_example(which: u8, scale: Scale) -> Result<ExperimentConfig> {
    let (side, n_reps) = match scale {
        Scale::Full => (30, 1000),
        Scale::Desk => (10, 400),
    };
    let m = side * side;
    let grid = Kernel::Exponential {
        rows: side,
        cols: side,
        spacing: 1.0,
        range: 5.0,
    };
    let (truth, spec_mis, sweep) = match which {
        1 => (
            grid,
            Kernel::Identity { m },
            Sweep {
                variable: SweepVariable::G,
                values: DEFAULT_G_GRID.to_vec(),
            },
        ),
        2 => (
            Kernel::Ar2 {
                m,
                rho1: 1.5,
                rho2: -0.9,
                innovation_var: 1.0,
                normalize: false,
            },
            Kernel::Ar2 {
                m,
                rho1: 0.6,
                rho2: 0.3,
                innovation_var: 1.0,
                normalize: false,
            },
            Sweep {
                variable: SweepVariable::G,
                values: DEFAULT_G_GRID.to_vec(),
            },
        ),
        3 => (
            grid.clone(),
            grid,
            Sweep {
                variable: SweepVariable::Range,
                values: DEFAULT_RANGE_GRID.to_vec(),
            },
        ),
        other => {
            return Err(Error::config(
                "which",
                format!("unknown example {other}; expected 1, 2 or 3"),
            ))
        }
    };
    Ok(ExperimentConfig {
        name: format!(
            "example{which}-{}",
            match scale {
                Scale::Full => "full",
                Scale::Desk => "desk",
            }
        ),
        sigma0_sq: 0.25,
        theta0: 0.0,
        g: 1.0,
        alpha_star: 0.05,
        n_reps,
        kl_draws: DEFAULT_DRAWS,
        seed: 0,
        truth,
        spec_cor: None,
        spec_mis,
        sweep,
    })
}

/// Results at one sweep value.
///
/// The first eight fields are the primary summary; the rest are standard
/// errors and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub fdr_cor: f64,
    pub fdr_mis: f64,
    pub fnr_cor: f64,
    pub fnr_mis: f64,
    /// `(mean R_cor − mean R_mis) / m`.
    pub rejection_rate_diff: f64,
    pub kl_per_dim: f64,
    /// Standard error of `kl_per_dim`.
    pub kl_se: f64,
    pub fdr_cor_se: f64,
    pub fdr_mis_se: f64,
    pub fnr_cor_se: f64,
    pub fnr_mis_se: f64,
    /// Standard error of the paired difference `fnr_mis − fnr_cor`.
    pub fnr_diff_se: f64,
    pub rejection_rate_diff_se: f64,
    pub kl_total: f64,
    pub kl_excluded: usize,
}

fn build_shared(kernel: &Kernel, truth_kernel: &Kernel, truth_cov: &Arc<CovarianceMatrix>) -> Result<Arc<CovarianceMatrix>> {
    if kernel == truth_kernel {
        Ok(truth_cov.clone())
    } else {
        Ok(Arc::new(kernel.build()?))
    }
}

/// Runs the configured sweep. Output is deterministic given the config.
///
/// Every sweep value reuses the same replication datasets and KL draws
/// (common random numbers), so differences between rows reflect the sweep
/// rather than Monte Carlo noise.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let truth_cov = Arc::new(config.truth.build()?);
    let m = truth_cov.dim();
    let truth = TrueProcess::new(
        nalgebra::DVector::from_element(m, config.theta0),
        config.sigma0_sq,
        truth_cov.clone(),
    )?;
    let cor_cov = build_shared(config.cor_kernel(), &config.truth, &truth_cov)?;
    let fixed_mis = match config.sweep.variable {
        SweepVariable::G => Some(build_shared(&config.spec_mis, &config.truth, &truth_cov)?),
        SweepVariable::Range => None,
    };

    let mut rows = Vec::with_capacity(config.sweep.values.len());
    for &value in &config.sweep.values {
        let point = || -> Result<SweepRow> {
            let (g, mis_cov) = match &fixed_mis {
                Some(c) => (value, c.clone()),
                None => {
                    let k = config
                        .spec_mis
                        .with_range(value)
                        .ok_or_else(|| Error::config("spec_mis.kernel", "kernel has no range"))?;
                    (config.g, build_shared(&k, &config.truth, &truth_cov)?)
                }
            };
            let spec_cor = ModelSpec::known_for(&truth, g, cor_cov.clone())?;
            let spec_mis = ModelSpec::known_for(&truth, g, mis_cov)?;
            run_point(config, &truth, &spec_cor, &spec_mis, value)
        };
        let row = point().map_err(|e| Error::SweepPoint {
            value,
            source: Box::new(e),
        })?;
        log::info!(
            "{} {value}: fdr {:.4}/{:.4} fnr {:.4}/{:.4} kl/m {:.5}",
            match config.sweep.variable {
                SweepVariable::G => "g",
                SweepVariable::Range => "range",
            },
            row.fdr_cor,
            row.fdr_mis,
            row.fnr_cor,
            row.fnr_mis,
            row.kl_per_dim
        );
        rows.push(row);
    }
    Ok(rows)
}

fn run_point(
    config: &ExperimentConfig,
    truth: &TrueProcess,
    spec_cor: &ModelSpec,
    spec_mis: &ModelSpec,
    value: f64,
) -> Result<SweepRow> {
    let m = truth.dim();
    let outcomes = replicate_paired(
        truth,
        &[spec_cor, spec_mis],
        config.alpha_star,
        config.n_reps,
        config.seed,
    )?;
    let cor: Vec<_> = outcomes.iter().map(|o| o[0]).collect();
    let mis: Vec<_> = outcomes.iter().map(|o| o[1]).collect();
    let oc_cor = OperatingCharacteristics::from_outcomes(&cor, m);
    let oc_mis = OperatingCharacteristics::from_outcomes(&mis, m);
    let (_, fnr_diff_se) = mean_se(outcomes.iter().map(|o| o[1].fnp - o[0].fnp));
    let (diff, diff_se) = mean_se(
        outcomes
            .iter()
            .map(|o| (o[0].rejections as f64 - o[1].rejections as f64) / m as f64),
    );
    let kl = kl_known_var(truth, spec_cor, spec_mis, config.kl_draws, config.seed)?;
    Ok(SweepRow {
        sweep_value: value,
        fdr_cor: oc_cor.fdr_hat,
        fdr_mis: oc_mis.fdr_hat,
        fnr_cor: oc_cor.fnr_hat,
        fnr_mis: oc_mis.fnr_hat,
        rejection_rate_diff: diff,
        kl_per_dim: kl.per_dim,
        kl_se: kl.std_err / m as f64,
        fdr_cor_se: oc_cor.fdr_se,
        fdr_mis_se: oc_mis.fdr_se,
        fnr_cor_se: oc_cor.fnr_se,
        fnr_mis_se: oc_mis.fnr_se,
        fnr_diff_se,
        rejection_rate_diff_se: diff_se,
        kl_total: kl.total,
        kl_excluded: kl.n_excluded,
    })
}

/// Writes `sweep.csv` rows in field order.
pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig::from_toml_str(
            r#"
            sigma0_sq = 0.25
            n_reps = 40
            kl_draws = 40
            seed = 3
            truth.kernel = "exponential"
            truth.rows = 3
            truth.cols = 3
            truth.range = 5
            spec_mis.kernel = "identity"
            spec_mis.m = 9
            sweep.variable = "g"
            sweep.values = [0.1, 1, 10]
            "#,
        )
        .unwrap()
    }

    #[test]
    fn parses_dotted_keys_and_defaults() {
        let c = tiny_config();
        assert_eq!(c.alpha_star, 0.05);
        assert_eq!(c.g, 1.0);
        assert_eq!(c.sweep.values, vec![0.1, 1.0, 10.0]);
        assert_eq!(c.cor_kernel(), &c.truth);
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn config_errors_name_the_key() {
        let base = tiny_config().to_toml_string();
        let bad = base.replace("n_reps = 40", "n_reps = 0");
        let err = ExperimentConfig::from_toml_str(&bad).unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "n_reps"), "{err}");

        let err = ExperimentConfig::from_toml_str(&format!("{base}\nbogus = 1\n")).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");

        let bad = base.replace("m = 9", "m = 8");
        let err = ExperimentConfig::from_toml_str(&bad).unwrap_err();
        assert!(matches!(&err, Error::Config { key, .. } if key == "spec_mis"), "{err}");
    }

    #[test]
    fn range_sweep_needs_range_kernel() {
        let mut c = tiny_config();
        c.sweep.variable = SweepVariable::Range;
        assert!(matches!(c.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn builtin_examples() {
        assert_eq!(builtin_example(1, Scale::Full).unwrap().truth.dim(), Some(900));
        assert_eq!(builtin_example(1, Scale::Desk).unwrap().truth.dim(), Some(100));
        assert_eq!(builtin_example(2, Scale::Full).unwrap().truth.dim(), Some(900));
        let ex3 = builtin_example(3, Scale::Full).unwrap();
        assert_eq!(ex3.g, 1.0);
        assert_eq!(ex3.sweep.variable, SweepVariable::Range);
        assert!(ex3.sweep.values.contains(&5.0));
        assert_eq!(builtin_example(1, Scale::Full).unwrap().n_reps, 1000);
        assert_eq!(builtin_example(1, Scale::Desk).unwrap().n_reps, 400);
        assert!(builtin_example(4, Scale::Desk).is_err());
        for which in 1..=3 {
            builtin_example(which, Scale::Desk).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn degenerate_sweep_with_identical_specs() {
        let mut c = tiny_config();
        c.spec_mis = c.truth.clone();
        c.sweep.values = vec![1.0];
        let rows = run_sweep(&c).unwrap();
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert_eq!(r.fdr_cor, r.fdr_mis);
        assert_eq!(r.fnr_cor, r.fnr_mis);
        assert_eq!(r.rejection_rate_diff, 0.0);
        assert_eq!(r.kl_per_dim, 0.0);
    }

    #[test]
    fn sweep_is_reproducible() {
        let c = tiny_config();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_sweep_csv(&mut a, &run_sweep(&c).unwrap()).unwrap();
        write_sweep_csv(&mut b, &run_sweep(&c).unwrap()).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with(
            "sweep_value,fdr_cor,fdr_mis,fnr_cor,fnr_mis,rejection_rate_diff,kl_per_dim,kl_se,"
        ));
        assert_eq!(text.lines().count(), 4);
    }
}
