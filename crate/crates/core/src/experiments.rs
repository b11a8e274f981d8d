//! Simulation studies: MLE versus MKSDE on matrix Fisher data, and power of
//! the composite goodness-of-fit test.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KsdError, Result};
use crate::gof::{self, GofConfig};
use crate::kernels::RadialKernel;
use crate::ksdstats::{StatKind, WeightedSample};
use crate::manifolds::Manifold;
use crate::matalg::{self, Mat};
use crate::mksde::{self, MleOptions};
use crate::models::{ExpFamilyKind, ExponentialFamily, Family, ScoreModel};
use crate::rng;
use crate::sampling::{self, MhOptions};

/// `E1`: ones in the first column of a `3 x 2` matrix.
pub fn e1() -> Mat {
    Mat::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0])
}

/// `E2`: the `3 x 2` all-ones matrix.
pub fn e2() -> Mat {
    Mat::from_element(3, 2, 1.0)
}

/// The three concentrations of the goodness-of-fit study: `0.3 E1`, `E1`, `5 E1`.
pub fn standard_f0s() -> Vec<(String, Mat)> {
    vec![("0.3E1".into(), e1() * 0.3), ("E1".into(), e1()), ("5E1".into(), e1() * 5.0)]
}

/// Ground truths of the estimation study: the three concentrations of `E1`
/// and of `E2`.
pub fn study_f0s() -> Vec<(String, Mat)> {
    let mut out = standard_f0s();
    out.extend([("0.3E2".into(), e2() * 0.3), ("E2".into(), e2()), ("5E2".into(), e2() * 5.0)]);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    MksdeU,
    MksdeV,
    MleNumeric,
    MleSmallF,
}

impl Estimator {
    pub fn label(&self) -> &'static str {
        match self {
            Estimator::MksdeU => "mksde_u",
            Estimator::MksdeV => "mksde_v",
            Estimator::MleNumeric => "mle_numeric",
            Estimator::MleSmallF => "mle_small_f",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorRow {
    #[serde(rename = "F0_label")]
    pub f0_label: String,
    pub n: usize,
    pub replicate: usize,
    pub estimator: String,
    pub frob_error: f64,
}

/// Draw exact matrix Fisher samples on `V_r(N)`.
pub fn mf_sample(f: &Mat, n: usize, seed: u64) -> Result<WeightedSample> {
    let m = Manifold::stiefel(f.nrows(), f.ncols())?;
    let (pts, _) = sampling::sample_mf_rejection(&m, f, n, &mut rng::stream(seed, 1))?;
    WeightedSample::new(m, pts)
}

pub fn mksde_mf(sample: &WeightedSample, k: &RadialKernel, kind: StatKind) -> Result<Mat> {
    let ef = ExponentialFamily::new(sample.manifold(), ExpFamilyKind::MatrixFisher)?;
    let sys = mksde::assemble(&ef, k, sample, kind)?;
    let theta = match mksde::solve(&sys, matalg::DEFAULT_PINV_RTOL) {
        Ok(sol) => sol.theta_star,
        Err(KsdError::NonConvex { stationary, .. }) => stationary,
        Err(e) => return Err(e),
    };
    let (p, q) = sample.manifold().shape();
    matalg::unvec(&theta, p, q)
}

#[derive(Debug, Clone)]
pub struct MleVsMksdeSpec {
    pub f0s: Vec<(String, Mat)>,
    pub n_values: Vec<usize>,
    pub replicates: usize,
    pub kernel: RadialKernel,
    pub estimators: Vec<Estimator>,
    pub seed: u64,
    pub mle: MleOptions,
}

pub fn run_mle_vs_mksde(spec: &MleVsMksdeSpec) -> Result<Vec<ErrorRow>> {
    let needs_pool = spec.estimators.contains(&Estimator::MleNumeric);
    let mut jobs = Vec::new();
    for (fi, (label, f0)) in spec.f0s.iter().enumerate() {
        for (ni, &n) in spec.n_values.iter().enumerate() {
            for rep in 0..spec.replicates {
                jobs.push((fi, label.clone(), f0.clone(), ni, n, rep));
            }
        }
    }
    let pool = match (needs_pool, spec.f0s.first()) {
        (true, Some((_, f))) => Some(mksde::uniform_pool(&Manifold::stiefel(f.nrows(), f.ncols())?, &spec.mle)?),
        _ => None,
    };
    let rows: Vec<Vec<ErrorRow>> = jobs
        .par_iter()
        .map(|(fi, label, f0, ni, n, rep)| {
            let seed = rng::child_seed(spec.seed, ((*fi * 1000 + *ni) * 100_000 + *rep) as u64);
            let sample = mf_sample(f0, *n, seed)?;
            let mut out = Vec::new();
            for est in &spec.estimators {
                let fhat = match est {
                    Estimator::MksdeU => mksde_mf(&sample, &spec.kernel, StatKind::U)?,
                    Estimator::MksdeV => mksde_mf(&sample, &spec.kernel, StatKind::V)?,
                    Estimator::MleSmallF => mksde::mle_small_f(&sample),
                    Estimator::MleNumeric => {
                        let pool = pool.as_ref().expect("pool built when needed");
                        match mksde::mle_numeric_mf(&sample, pool, &spec.mle) {
                            Ok(f) => f,
                            Err(KsdError::NoConvergence { last_iterate, .. }) => {
                                matalg::unvec(&last_iterate, f0.nrows(), f0.ncols())?
                            }
                            Err(e) => return Err(e),
                        }
                    }
                };
                out.push(ErrorRow {
                    f0_label: label.clone(),
                    n: *n,
                    replicate: *rep,
                    estimator: est.label().into(),
                    frob_error: (fhat - f0).norm(),
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median and interquartile range of a slice.
pub fn median_iqr(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    let med = median(&mut v);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    (med, q(0.75) - q(0.25))
}

pub fn median_error(rows: &[ErrorRow], label: &str, n: usize, estimator: &Estimator) -> f64 {
    let mut v: Vec<f64> = rows
        .iter()
        .filter(|r| r.f0_label == label && r.n == n && r.estimator == estimator.label())
        .map(|r| r.frob_error)
        .collect();
    median(&mut v)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GofRow {
    #[serde(rename = "F0_label")]
    pub f0_label: String,
    pub replicate: usize,
    pub n: usize,
    pub family: String,
    pub kernel: String,
    pub kind: String,
    pub beta: f64,
    pub statistic: f64,
    pub quantile: f64,
    pub p_value: f64,
    pub decision: String,
    pub seed: u64,
    pub n_sim: usize,
    /// The U-kind fit was indefinite and its stationary point was used.
    pub nonconvex: bool,
}

pub fn gof_row(label: &str, replicate: usize, family: &str, k: &RadialKernel, r: &gof::GofResult, seed: u64) -> GofRow {
    GofRow {
        f0_label: label.into(),
        replicate,
        n: r.n,
        family: family.into(),
        kernel: k.label(),
        kind: r.kind.label().into(),
        beta: r.beta,
        statistic: r.statistic,
        quantile: r.quantile,
        p_value: r.p_value,
        decision: if r.reject { "reject" } else { "accept" }.into(),
        seed,
        n_sim: r.n_sim,
        nonconvex: r.nonconvex,
    }
}

#[derive(Debug, Clone)]
pub struct GofPowerSpec {
    pub f0s: Vec<(String, Mat)>,
    pub n_values: Vec<usize>,
    pub kinds: Vec<StatKind>,
    pub replicates: usize,
    pub kernel: RadialKernel,
    pub target: ExpFamilyKind,
    pub gof: GofConfig,
    pub seed: u64,
}

/// Matrix Fisher data tested against an exponential family on `V_2(3)`.
pub fn run_gof_power(spec: &GofPowerSpec) -> Result<Vec<GofRow>> {
    let mut jobs = Vec::new();
    for (fi, (label, f0)) in spec.f0s.iter().enumerate() {
        for (ni, &n) in spec.n_values.iter().enumerate() {
            for rep in 0..spec.replicates {
                jobs.push((fi, label.clone(), f0.clone(), ni, n, rep));
            }
        }
    }
    let rows: Vec<Vec<GofRow>> = jobs
        .par_iter()
        .map(|(fi, label, f0, ni, n, rep)| {
            let seed = rng::child_seed(spec.seed, ((*fi * 1000 + *ni) * 100_000 + *rep) as u64);
            let sample = mf_sample(f0, *n, seed)?;
            let ef = ExponentialFamily::new(sample.manifold(), spec.target)?;
            spec.kinds
                .iter()
                .map(|kind| {
                    let r = gof::gof_test(&ef, &spec.kernel, &sample, *kind, &spec.gof, seed)?;
                    Ok(gof_row(label, *rep, spec.target.label(), &spec.kernel, &r, seed))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Level study: iid samples from `model` tested against the exponential
/// family containing it. Returns one result per trial.
pub fn run_gof_level(
    model: &ScoreModel,
    target: ExpFamilyKind,
    n: usize,
    trials: usize,
    kind: StatKind,
    k: &RadialKernel,
    cfg: &GofConfig,
    seed: u64,
) -> Result<Vec<gof::GofResult>> {
    let m = model.manifold();
    let ef = ExponentialFamily::new(m, target)?;
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = rng::child_seed(seed, t as u64);
            let (pts, _, _) = sampling::sample_auto(model, n, &MhOptions::for_manifold(&m), &mut rng::stream(s, 2))?;
            let sample = WeightedSample::new(m, pts)?;
            gof::gof_test(&ef, k, &sample, kind, cfg, s)
        })
        .collect()
}

/// Parameters of a family as named matrices, for reports.
pub fn family_params(f: &Family) -> serde_json::Value {
    serde_json::to_value(f).unwrap_or(serde_json::Value::Null)
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorSummary {
    #[serde(rename = "F0_label")]
    pub f0_label: String,
    pub n: usize,
    pub estimator: String,
    pub median: f64,
    pub iqr: f64,
    pub replicates: usize,
}

/// Median and IQR of the error per (F0, n, estimator), in first-seen order.
pub fn summarize_errors(rows: &[ErrorRow]) -> Vec<ErrorSummary> {
    let mut keys: Vec<(String, usize, String)> = Vec::new();
    for r in rows {
        let k = (r.f0_label.clone(), r.n, r.estimator.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(label, n, est)| {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.f0_label == label && r.n == n && r.estimator == est)
                .map(|r| r.frob_error)
                .collect();
            let (median, iqr) = median_iqr(&v);
            ErrorSummary { f0_label: label, n, estimator: est, median, iqr, replicates: v.len() }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PValueCell {
    #[serde(rename = "F0_label")]
    pub f0_label: String,
    pub kind: String,
    pub n: usize,
    pub median_p_value: f64,
    pub reject_rate: f64,
    pub replicates: usize,
}

/// Median p-value per (F0, kind, n), ordered by F0, then kind, then n.
pub fn summarize_pvalues(rows: &[GofRow]) -> Vec<PValueCell> {
    let mut labels: Vec<String> = Vec::new();
    let mut kinds: Vec<String> = Vec::new();
    let mut ns: Vec<usize> = Vec::new();
    for r in rows {
        if !labels.contains(&r.f0_label) {
            labels.push(r.f0_label.clone());
        }
        if !kinds.contains(&r.kind) {
            kinds.push(r.kind.clone());
        }
        if !ns.contains(&r.n) {
            ns.push(r.n);
        }
    }
    let mut out = Vec::new();
    for label in &labels {
        for kind in &kinds {
            for &n in &ns {
                let cell: Vec<&GofRow> =
                    rows.iter().filter(|r| &r.f0_label == label && &r.kind == kind && r.n == n).collect();
                if cell.is_empty() {
                    continue;
                }
                let mut p: Vec<f64> = cell.iter().map(|r| r.p_value).collect();
                out.push(PValueCell {
                    f0_label: label.clone(),
                    kind: kind.clone(),
                    n,
                    median_p_value: median(&mut p),
                    reject_rate: cell.iter().filter(|r| r.decision == "reject").count() as f64 / cell.len() as f64,
                    replicates: cell.len(),
                });
            }
        }
    }
    out
}
