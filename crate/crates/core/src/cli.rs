//! Command-line front end. `run` returns the process exit code:
//! 0 on success, 1 for configuration or I/O errors, 2 for numerical failures.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::covariance::{CovarianceMatrix, Kernel};
use crate::divergence::kl_known_var;
use crate::error::{Error, Result};
use crate::plot::write_panels;
use crate::posterior::{ModelSpec, TrueProcess};
use crate::sampdist::{law_known_var, marginal_cdf, marginal_pdf};
use crate::simulation::{
    builtin_example, run_sweep, write_sweep_csv, ExperimentConfig, Scale, SweepVariable,
};
use crate::testing::{read_h_csv, step_up, write_mask_csv};

pub const THREADS_ENV: &str = "MISFDR_THREADS";

#[derive(Debug, Parser)]
#[command(name = "misfdr", version, about = "FDR control with posterior probabilities under covariance misspecification")]
struct Cli {
    /// Directory for every artifact the command writes.
    #[arg(long, short = 'o', global = true, default_value = ".")]
    output_dir: PathBuf,
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (falls back to MISFDR_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More logging; repeat for debug output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a covariance matrix and write it to cov.csv.
    GenCov(GenCovArgs),
    /// Marginal laws of the statistics (dist.csv), or the full laws of an experiment.
    Dist(DistArgs),
    /// Monte Carlo KL divergence between correct and misspecified laws (kl.csv).
    Kl(KlArgs),
    /// Step-up rule on a vector of statistics (mask.csv).
    Fdr(FdrArgs),
    /// Run the sweep of an experiment config (sweep.csv and charts).
    Simulate(ConfigArg),
    /// Run a built-in example (sweep.csv and charts).
    Example(ExampleArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KernelName {
    Exponential,
    Ar2,
    Identity,
}

#[derive(Debug, Args)]
struct GenCovArgs {
    /// Kernel descriptor file (`kernel = "..."` plus its fields).
    #[arg(long, conflicts_with = "kernel")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    kernel: Option<KernelName>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    spacing: f64,
    #[arg(long)]
    range: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    rho1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    rho2: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    innovation_var: f64,
    #[arg(long)]
    normalize: bool,
}

#[derive(Debug, Args)]
struct DistArgs {
    /// Comma-separated ratios r_i.
    #[arg(long, value_delimiter = ',', conflicts_with = "config")]
    ratios: Vec<f64>,
    /// Points in (0,1) at which to evaluate; defaults to 0.01, ..., 0.99.
    #[arg(long, value_delimiter = ',')]
    h: Vec<f64>,
    /// Experiment config; writes the laws of both specs at `g`.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Variance {
    Known,
    Unknown,
}

#[derive(Debug, Args)]
struct KlArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value_t = Variance::Known)]
    variance: Variance,
}

#[derive(Debug, Args)]
struct FdrArgs {
    /// CSV with an `h` column (or a single column).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Debug, Args)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScaleArg {
    Desk,
    Full,
}

#[derive(Debug, Args)]
struct ExampleArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    which: u8,
    #[arg(long, value_enum, default_value_t = ScaleArg::Desk)]
    scale: ScaleArg,
    /// Use unit-variance AR(2) covariances (example 2 only).
    #[arg(long)]
    normalize: bool,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();

    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn threads(cli: &Cli) -> Result<Option<usize>> {
    if let Some(n) = cli.threads {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::config(THREADS_ENV, format!("not a thread count: {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn execute(cli: &Cli) -> Result<()> {
    match threads(cli)? {
        Some(0) => Err(Error::config("threads", "must be at least 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config("threads", e.to_string()))?;
            pool.install(|| dispatch(cli))
        }
        None => dispatch(cli),
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let out = Output::new(&cli.output_dir)?;
    match &cli.command {
        Command::GenCov(a) => gen_cov(&out, a),
        Command::Dist(a) => dist(&out, a),
        Command::Kl(a) => kl(&out, a, cli.seed),
        Command::Fdr(a) => fdr(&out, a),
        Command::Simulate(a) => {
            let mut cfg = ExperimentConfig::from_file(&a.config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            simulate(&out, &cfg, "simulate")
        }
        Command::Example(a) => {
            let scale = match a.scale {
                ScaleArg::Desk => Scale::Desk,
                ScaleArg::Full => Scale::Full,
            };
            let mut cfg = builtin_example(a.which, scale)?;
            if a.normalize {
                if a.which != 2 {
                    return Err(Error::config("normalize", "only applies to example 2"));
                }
                for k in [&mut cfg.truth, &mut cfg.spec_mis] {
                    if let Kernel::Ar2 { normalize, .. } = k {
                        *normalize = true;
                    }
                }
                cfg.name.push_str("-normalized");
            }
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            simulate(&out, &cfg, "example")
        }
    }
}

/// Every artifact goes through here, so nothing lands outside `dir`.
struct Output {
    dir: PathBuf,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Output {
            dir: dir.to_path_buf(),
        })
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        log::info!("writing {}", self.dir.join(name).display());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn meta(&self, command: &str, seed: Option<u64>, config_text: &str) -> Result<()> {
        let hash: String = Sha256::digest(config_text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut w = self.create("run-meta.txt")?;
        writeln!(w, "command = {command}")?;
        match seed {
            Some(s) => writeln!(w, "seed = {s}")?,
            None => writeln!(w, "seed = none")?,
        }
        writeln!(w, "config_sha256 = {hash}")?;
        writeln!(w, "version = {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(w, "timestamp = {ts}")?;
        w.flush()?;
        Ok(())
    }
}

fn need<T>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| Error::config(key, "required for this kernel"))
}

fn gen_cov(out: &Output, a: &GenCovArgs) -> Result<()> {
    let kernel = match (&a.config, a.kernel) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str::<Kernel>(&text)
                .map_err(|e| Error::config("kernel", e.to_string().trim().to_string()))?
        }
        (None, Some(KernelName::Exponential)) => Kernel::Exponential {
            rows: need(a.rows, "rows")?,
            cols: need(a.cols, "cols")?,
            spacing: a.spacing,
            range: need(a.range, "range")?,
        },
        (None, Some(KernelName::Ar2)) => Kernel::Ar2 {
            m: need(a.m, "m")?,
            rho1: need(a.rho1, "rho1")?,
            rho2: need(a.rho2, "rho2")?,
            innovation_var: a.innovation_var,
            normalize: a.normalize,
        },
        (None, Some(KernelName::Identity)) => Kernel::Identity { m: need(a.m, "m")? },
        (None, None) => return Err(Error::config("kernel", "pass --kernel or --config")),
    };
    let cov = kernel.build()?;
    if let Some(j) = cov.jitter() {
        log::warn!("covariance needed diagonal jitter {j:e}");
    }
    let mut w = out.create("cov.csv")?;
    cov.write_csv(&mut w)?;
    w.flush()?;
    out.meta("gen-cov", None, &toml::to_string(&kernel).unwrap_or_default())
}

fn dist(out: &Output, a: &DistArgs) -> Result<()> {
    if let Some(path) = &a.config {
        let cfg = ExperimentConfig::from_file(path)?;
        let (truth, cor, mis) = experiment_specs(&cfg, cfg.g)?;
        for (name, spec) in [("cor", &cor), ("mis", &mis)] {
            let law = law_known_var(&truth, spec)?;
            let mut w = out.create(&format!("law_{name}.csv"))?;
            law.write_csv(&mut w)?;
            w.flush()?;
            let mut w = out.create(&format!("pb_{name}.csv"))?;
            write_matrix_csv(&mut w, law.pb())?;
            w.flush()?;
        }
        return out.meta("dist", None, &cfg.to_toml_string());
    }
    if a.ratios.is_empty() {
        return Err(Error::config("ratios", "pass --ratios or --config"));
    }
    let hs: Vec<f64> = if a.h.is_empty() {
        (1..100).map(|k| k as f64 / 100.0).collect()
    } else {
        a.h.clone()
    };
    let mut w = csv::Writer::from_writer(out.create("dist.csv")?);
    w.write_record(["r", "h", "cdf", "pdf"])?;
    for &r in &a.ratios {
        for &h in &hs {
            w.write_record([
                r.to_string(),
                h.to_string(),
                marginal_cdf(h, r)?.to_string(),
                marginal_pdf(h, r)?.to_string(),
            ])?;
        }
    }
    w.flush()?;
    out.meta("dist", None, &format!("ratios={:?} h={:?}", a.ratios, hs))
}

fn write_matrix_csv<W: Write>(out: W, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record((0..m.ncols()).map(|j| format!("c{j}")))?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn experiment_specs(cfg: &ExperimentConfig, g: f64) -> Result<(TrueProcess, ModelSpec, ModelSpec)> {
    let truth_cov = Arc::new(cfg.truth.build()?);
    let m = truth_cov.dim();
    let truth = TrueProcess::new(DVector::from_element(m, cfg.theta0), cfg.sigma0_sq, truth_cov.clone())?;
    let shared = |k: &Kernel| -> Result<Arc<CovarianceMatrix>> {
        if *k == cfg.truth {
            Ok(truth_cov.clone())
        } else {
            Ok(Arc::new(k.build()?))
        }
    };
    let cor = ModelSpec::known_for(&truth, g, shared(cfg.cor_kernel())?)?;
    let mis = ModelSpec::known_for(&truth, g, shared(&cfg.spec_mis)?)?;
    Ok((truth, cor, mis))
}

fn kl(out: &Output, a: &KlArgs, seed: Option<u64>) -> Result<()> {
    if a.variance == Variance::Unknown {
        return Err(Error::Unsupported(
            "KL divergence is only available for the known-variance laws; \
             the unknown-variance law has no closed-form joint density"
                .into(),
        ));
    }
    let mut cfg = ExperimentConfig::from_file(&a.config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let gs = match cfg.sweep.variable {
        SweepVariable::G => cfg.sweep.values.clone(),
        SweepVariable::Range => vec![cfg.g],
    };
    let mut w = csv::Writer::from_writer(out.create("kl.csv")?);
    w.write_record(["g", "m", "total", "per_dim", "std_err", "n_excluded"])?;
    for g in gs {
        let (truth, cor, mis) = experiment_specs(&cfg, g)?;
        let est = kl_known_var(&truth, &cor, &mis, cfg.kl_draws, cfg.seed)?;
        w.write_record([
            g.to_string(),
            truth.dim().to_string(),
            est.total.to_string(),
            est.per_dim.to_string(),
            est.std_err.to_string(),
            est.n_excluded.to_string(),
        ])?;
    }
    w.flush()?;
    out.meta("kl", Some(cfg.seed), &cfg.to_toml_string())
}

fn fdr(out: &Output, a: &FdrArgs) -> Result<()> {
    let h = read_h_csv(File::open(&a.input)?)?;
    let decision = step_up(&h, a.alpha).map_err(|e| match e {
        Error::Domain(msg) if msg.starts_with("alpha") => Error::config("alpha", msg),
        other => other,
    })?;
    let mut w = out.create("mask.csv")?;
    write_mask_csv(&mut w, &h, &decision)?;
    w.flush()?;
    log::info!("rejected {} of {}", decision.k, h.len());
    out.meta("fdr", None, &format!("alpha={} n={}", a.alpha, h.len()))
}

fn simulate(out: &Output, cfg: &ExperimentConfig, command: &str) -> Result<()> {
    let rows = run_sweep(cfg)?;
    let text = cfg.to_toml_string();
    std::fs::write(out.dir.join("config.toml"), &text)?;
    let mut w = out.create("sweep.csv")?;
    write_sweep_csv(&mut w, &rows)?;
    w.flush()?;
    let x_label = match cfg.sweep.variable {
        SweepVariable::G => "g",
        SweepVariable::Range => "misspecified range",
    };
    write_panels(&out.dir, &rows, x_label, cfg.alpha_star)?;
    out.meta(command, Some(cfg.seed), &text)
}
