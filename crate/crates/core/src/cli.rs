//! Command-line front end. Exit codes: 0 on success, 1 for usage or
//! configuration errors, 2 for numerical failures.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{ExperimentConfig, OutputFormat, SamplerMethod};
use crate::error::{KsdError, Result};
use crate::experiments::{self, Estimator, GofPowerSpec, MleVsMksdeSpec};
use crate::gof::{self, OnNonConvex};
use crate::io::{self, matrix_rows, SampleHeader};
use crate::ksdstats::{self, StatKind, WeightedSample};
use crate::manifolds::Manifold;
use crate::matalg::Mat;
use crate::mksde::{self, MleOptions};
use crate::models::{ExpFamilyKind, ExponentialFamily, Family, ScoreModel};
use crate::rng;
use crate::sampling;
use crate::selftest;
use crate::steinkernel::SteinKernel;

#[derive(Debug, Parser)]
#[command(name = "ksdm", version, about = "Kernel Stein discrepancy on Stiefel, Grassmann and SPD manifolds")]
pub struct Cli {
    /// Experiment config (TOML, or JSON by extension).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a sample from the configured family into `samples.jsonl`.
    Sample,
    /// U- and V-statistics with bootstrap standard errors.
    Ksd {
        #[arg(long, value_name = "PATH")]
        samples: PathBuf,
        #[arg(long, default_value_t = 200)]
        bootstrap: usize,
    },
    /// Minimum-KSD estimate for an exponential family.
    Mksde {
        #[arg(long, value_name = "PATH")]
        samples: PathBuf,
    },
    /// Composite goodness-of-fit test.
    Gof {
        #[arg(long, value_name = "PATH")]
        samples: PathBuf,
        /// Test the configured model itself instead of fitting the family.
        #[arg(long)]
        fixed: bool,
    },
    /// Estimation errors of MLE and MKSDE on matrix Fisher data.
    ExperimentMleVsMksde,
    /// Median p-values of the composite test on matrix Fisher data.
    ExperimentGof,
    /// Closed-form Stein kernels against the brute-force and finite-difference oracles.
    Selftest,
}

/// Parse `args` (program name first) and run. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                2
            } else {
                1
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    let threads = match cli.threads {
        Some(0) => return Err(KsdError::Config("--threads must be at least 1".into())),
        Some(t) => t,
        None => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| KsdError::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cli.command, &cfg))
}

fn dispatch(cmd: &Command, cfg: &ExperimentConfig) -> Result<()> {
    match cmd {
        Command::Sample => cmd_sample(cfg),
        Command::Ksd { samples, bootstrap } => cmd_ksd(cfg, samples, *bootstrap),
        Command::Mksde { samples } => cmd_mksde(cfg, samples),
        Command::Gof { samples, fixed } => cmd_gof(cfg, samples, *fixed),
        Command::ExperimentMleVsMksde => cmd_mle_vs_mksde(cfg),
        Command::ExperimentGof => cmd_experiment_gof(cfg),
        Command::Selftest => cmd_selftest(cfg),
    }
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.output.dir)?;
    Ok(cfg.output.dir.clone())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| KsdError::Io(e.into()))?;
    writeln!(f)?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> KsdError {
    KsdError::Io(std::io::Error::other(e.to_string()))
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("report serializes"));
}

fn cmd_sample(cfg: &ExperimentConfig) -> Result<()> {
    let model = cfg.require_model()?;
    let m = model.manifold();
    let n = cfg.sampler.n;
    let mut rng = rng::stream(cfg.seed, 0);
    let mh = cfg.sampler.mh_options(&m);
    let (points, acceptance, method) = match cfg.sampler.method {
        SamplerMethod::Auto => sampling::sample_auto(&model, n, &mh, &mut rng)?,
        SamplerMethod::Uniform => match model.family() {
            Family::Uniform => (sampling::sample_uniform(&m, n, &mut rng)?, 1.0, "uniform"),
            f => return Err(KsdError::Config(format!("sampler.method: uniform cannot sample {}", f.label()))),
        },
        SamplerMethod::Rejection => {
            let (p, a) = sampling::sample_rejection(&model, n, &mut rng)?;
            (p, a, "rejection")
        }
        SamplerMethod::MetropolisHastings => {
            let (p, a) = sampling::sample_mh(&model, n, &mh, &mut rng)?;
            (p, a, "metropolis_hastings")
        }
        SamplerMethod::WishartExact => match (m, model.family()) {
            (Manifold::Spd { n: dim }, Family::Wishart { v, dof }) => {
                (sampling::sample_wishart(v, dof - dim as f64 + 1.0, n, &mut rng)?, 1.0, "wishart_exact")
            }
            (_, f) => {
                return Err(KsdError::Config(format!("sampler.method: wishart_exact cannot sample {}", f.label())))
            }
        },
    };
    let path = out_dir(cfg)?.join("samples.jsonl");
    let header = SampleHeader::new(&m, model.family(), cfg.seed, method);
    let mut w = BufWriter::new(File::create(&path)?);
    io::write_samples(&mut w, &header, &points)?;
    w.flush()?;
    eprintln!("{method}: {n} points, acceptance rate {acceptance:.4}");
    print_json(&serde_json::json!({
        "path": path,
        "n": n,
        "method": method,
        "acceptance_rate": acceptance,
        "seed": cfg.seed,
    }));
    Ok(())
}

struct Loaded {
    header: SampleHeader,
    sample: WeightedSample,
}

fn load_sample(cfg: &ExperimentConfig, path: &Path) -> Result<Loaded> {
    let file = File::open(path).map_err(|e| KsdError::Config(format!("cannot open {}: {e}", path.display())))?;
    let (header, points) = io::read_samples(file)?;
    let m = header.manifold()?;
    if let Some(cm) = cfg.manifold {
        if cm != m {
            return Err(KsdError::Config(format!(
                "manifold: config has {} but the sample is on {}",
                cm.name(),
                m.name()
            )));
        }
    }
    Ok(Loaded { sample: WeightedSample::new(m, points)?, header })
}

/// The config family if given, else the one recorded in the sample header.
fn target_family(cfg: &ExperimentConfig, header: &SampleHeader) -> Family {
    cfg.family.clone().unwrap_or_else(|| header.params.clone())
}

#[derive(Serialize)]
struct KsdReport {
    manifold: String,
    family: Family,
    kernel: crate::kernels::RadialKernel,
    n: usize,
    u_stat: f64,
    v_stat: f64,
    u_se: f64,
    v_se: f64,
    bootstrap: usize,
    seed: u64,
}

fn cmd_ksd(cfg: &ExperimentConfig, samples: &Path, bootstrap: usize) -> Result<()> {
    let l = load_sample(cfg, samples)?;
    let family = target_family(cfg, &l.header);
    let m = l.sample.manifold();
    let sk = SteinKernel::new(ScoreModel::new(m, family.clone())?, cfg.kernel);
    let g = sk.gram(l.sample.points())?;
    let w = l.sample.weights();
    let report = KsdReport {
        manifold: m.name(),
        family,
        kernel: cfg.kernel,
        n: l.sample.len(),
        u_stat: ksdstats::u_from_gram(&g, w)?,
        v_stat: ksdstats::v_from_gram(&g, w),
        u_se: ksdstats::bootstrap_se(StatKind::U, &g, w, bootstrap, cfg.seed)?,
        v_se: ksdstats::bootstrap_se(StatKind::V, &g, w, bootstrap, cfg.seed)?,
        bootstrap,
        seed: cfg.seed,
    };
    if cfg.output.wants(OutputFormat::Json) {
        write_json(&out_dir(cfg)?.join("ksd.json"), &report)?;
    }
    print_json(&report);
    Ok(())
}

#[derive(Serialize)]
struct NamedMatrix {
    name: String,
    #[serde(with = "matrix_rows")]
    value: Mat,
}

#[derive(Serialize)]
struct EstimationReport {
    family: ExpFamilyKind,
    manifold: String,
    theta_star: Vec<f64>,
    parameters: Vec<NamedMatrix>,
    null_space_rank: usize,
    objective: f64,
    min_eigenvalue: f64,
    n: usize,
    statistic_kind: StatKind,
    kernel: crate::kernels::RadialKernel,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", with = "optional_rows")]
    mle_numeric: Option<Mat>,
}

mod optional_rows {
    use super::*;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(m: &Option<Mat>, s: S) -> std::result::Result<S::Ok, S::Error> {
        m.as_ref().map(matrix_rows::to_rows).serialize(s)
    }
}

fn cmd_mksde(cfg: &ExperimentConfig, samples: &Path) -> Result<()> {
    let l = load_sample(cfg, samples)?;
    let m = l.sample.manifold();
    let kind = cfg.exp_family_kind(cfg.family.is_none().then_some(&l.header.params))?;
    let ef = ExponentialFamily::new(m, kind)?;
    let (_, sol) = mksde::estimate(&ef, &cfg.kernel, &l.sample, cfg.estimator.kind)?;
    let mle_numeric = if cfg.estimator.compare_mle && kind == ExpFamilyKind::MatrixFisher {
        let opts = MleOptions { pool_size: cfg.sweep.mle_pool_size.unwrap_or(MleOptions::default().pool_size), ..Default::default() };
        let pool = mksde::uniform_pool(&m, &opts)?;
        Some(mksde::mle_numeric_mf(&l.sample, &pool, &opts)?)
    } else {
        None
    };
    let report = EstimationReport {
        family: kind,
        manifold: m.name(),
        parameters: mksde::unpack(&ef, &sol.theta_star)?
            .into_iter()
            .map(|(name, value)| NamedMatrix { name, value })
            .collect(),
        theta_star: sol.theta_star,
        null_space_rank: sol.null_space_rank,
        objective: sol.objective,
        min_eigenvalue: sol.min_eigenvalue,
        n: l.sample.len(),
        statistic_kind: cfg.estimator.kind,
        kernel: cfg.kernel,
        seed: cfg.seed,
        mle_numeric,
    };
    if cfg.output.wants(OutputFormat::Json) {
        write_json(&out_dir(cfg)?.join("mksde.json"), &report)?;
    }
    print_json(&report);
    Ok(())
}

fn cmd_gof(cfg: &ExperimentConfig, samples: &Path, fixed: bool) -> Result<()> {
    let l = load_sample(cfg, samples)?;
    let m = l.sample.manifold();
    let kind = cfg.estimator.kind;
    let (result, family) = if fixed {
        let family = target_family(cfg, &l.header);
        let sk = SteinKernel::new(ScoreModel::new(m, family.clone())?, cfg.kernel);
        (gof::gof_test_fixed(&sk, &l.sample, kind, &cfg.gof, cfg.seed)?, family.label().to_string())
    } else {
        let ek = cfg.exp_family_kind(cfg.family.is_none().then_some(&l.header.params))?;
        let ef = ExponentialFamily::new(m, ek)?;
        (gof::gof_test(&ef, &cfg.kernel, &l.sample, kind, &cfg.gof, cfg.seed)?, ek.label().to_string())
    };
    let row = experiments::gof_row("", 0, &family, &cfg.kernel, &result, cfg.seed);
    let dir = out_dir(cfg)?;
    if cfg.output.wants(OutputFormat::Csv) {
        write_csv(&dir.join("gof.csv"), std::slice::from_ref(&row))?;
    }
    if cfg.output.wants(OutputFormat::Json) {
        write_json(&dir.join("gof.json"), &result)?;
    }
    print_json(&row);
    Ok(())
}

fn labeled_f0s(cfg: &ExperimentConfig, default: Vec<(String, Mat)>) -> Vec<(String, Mat)> {
    match &cfg.sweep.f0 {
        Some(list) => list.iter().map(|l| (l.label.clone(), l.f.clone())).collect(),
        None => default,
    }
}

#[derive(Serialize)]
struct StudyMeta<'a> {
    study: &'a str,
    seed: u64,
    replicates: usize,
    n_values: &'a [usize],
    f0: Vec<NamedMatrix>,
    kernel: crate::kernels::RadialKernel,
    rows: usize,
}

fn f0_meta(f0s: &[(String, Mat)]) -> Vec<NamedMatrix> {
    f0s.iter().map(|(name, value)| NamedMatrix { name: name.clone(), value: value.clone() }).collect()
}

fn cmd_mle_vs_mksde(cfg: &ExperimentConfig) -> Result<()> {
    let defaults = MleOptions::default();
    let spec = MleVsMksdeSpec {
        f0s: labeled_f0s(cfg, experiments::study_f0s()),
        n_values: cfg.sweep.n_values.clone().unwrap_or_else(|| vec![50, 100, 200, 300, 500]),
        replicates: cfg.sweep.replicates(),
        kernel: cfg.kernel,
        estimators: cfg.sweep.estimators.clone().unwrap_or_else(|| {
            vec![Estimator::MleNumeric, Estimator::MleSmallF, Estimator::MksdeU, Estimator::MksdeV]
        }),
        seed: cfg.seed,
        mle: MleOptions { pool_size: cfg.sweep.mle_pool_size.unwrap_or(defaults.pool_size), ..defaults },
    };
    let rows = experiments::run_mle_vs_mksde(&spec)?;
    let summary = experiments::summarize_errors(&rows);
    let dir = out_dir(cfg)?;
    if cfg.output.wants(OutputFormat::Csv) {
        write_csv(&dir.join("mle_vs_mksde.csv"), &rows)?;
        write_csv(&dir.join("mle_vs_mksde_summary.csv"), &summary)?;
    }
    if cfg.output.wants(OutputFormat::Dat) {
        let mut f = BufWriter::new(File::create(dir.join("mle_vs_mksde.dat"))?);
        for (label, _) in &spec.f0s {
            writeln!(f, "# F0 = {label}\n# n estimator median iqr")?;
            for s in summary.iter().filter(|s| &s.f0_label == label) {
                writeln!(f, "{} {} {} {}", s.n, s.estimator, s.median, s.iqr)?;
            }
            writeln!(f, "\n")?;
        }
        f.flush()?;
    }
    if cfg.output.wants(OutputFormat::Json) {
        let meta = StudyMeta {
            study: "mle_vs_mksde",
            seed: cfg.seed,
            replicates: spec.replicates,
            n_values: &spec.n_values,
            f0: f0_meta(&spec.f0s),
            kernel: cfg.kernel,
            rows: rows.len(),
        };
        write_json(&dir.join("mle_vs_mksde_meta.json"), &meta)?;
    }
    println!("{:<8} {:>5} {:<12} {:>10} {:>10}", "F0", "n", "estimator", "median", "iqr");
    for s in &summary {
        println!("{:<8} {:>5} {:<12} {:>10.4} {:>10.4}", s.f0_label, s.n, s.estimator, s.median, s.iqr);
    }
    Ok(())
}

fn cmd_experiment_gof(cfg: &ExperimentConfig) -> Result<()> {
    let mut gof_cfg = cfg.gof;
    // an indefinite U-kind fit is part of the data in this study
    gof_cfg.on_nonconvex = OnNonConvex::UseStationary;
    let spec = GofPowerSpec {
        f0s: labeled_f0s(cfg, experiments::standard_f0s()),
        n_values: cfg.sweep.n_values.clone().unwrap_or_else(|| vec![100, 150, 200, 250, 300]),
        kinds: cfg.sweep.kinds.clone().unwrap_or_else(|| vec![StatKind::U, StatKind::V]),
        replicates: cfg.sweep.replicates(),
        kernel: cfg.kernel,
        target: cfg.estimator.family.unwrap_or(ExpFamilyKind::MatrixBingham),
        gof: gof_cfg,
        seed: cfg.seed,
    };
    let rows = experiments::run_gof_power(&spec)?;
    let table = experiments::summarize_pvalues(&rows);
    let dir = out_dir(cfg)?;
    if cfg.output.wants(OutputFormat::Csv) {
        write_csv(&dir.join("gof_pvalues.csv"), &rows)?;
        write_csv(&dir.join("gof_table.csv"), &table)?;
    }
    if cfg.output.wants(OutputFormat::Json) {
        let meta = StudyMeta {
            study: "gof",
            seed: cfg.seed,
            replicates: spec.replicates,
            n_values: &spec.n_values,
            f0: f0_meta(&spec.f0s),
            kernel: cfg.kernel,
            rows: rows.len(),
        };
        write_json(&dir.join("gof_meta.json"), &meta)?;
    }
    for kind in &spec.kinds {
        println!("median p-values, {}-statistic, {} family", kind.label(), spec.target.label());
        print!("{:<8}", "n");
        for n in &spec.n_values {
            print!(" {n:>8}");
        }
        println!();
        for (label, _) in &spec.f0s {
            print!("{label:<8}");
            for n in &spec.n_values {
                let cell = table.iter().find(|c| &c.f0_label == label && c.kind == kind.label() && c.n == *n);
                print!(" {:>8.4}", cell.map_or(f64::NAN, |c| c.median_p_value));
            }
            println!();
        }
    }
    Ok(())
}

fn cmd_selftest(cfg: &ExperimentConfig) -> Result<()> {
    let checks = selftest::run(cfg.seed)?;
    for c in &checks {
        println!(
            "{} {}: max error {:.2e} (tolerance {:.0e}, {} cases)",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.max_error,
            c.tolerance,
            c.cases
        );
    }
    match checks.iter().filter(|c| !c.pass).count() {
        0 => Ok(()),
        k => Err(KsdError::Oracle(format!("{k} of {} checks", checks.len()))),
    }
}
