//! Composite goodness-of-fit test for an exponential family. The parameter is
//! fitted by MKSDE and the null law of `n * KSD^2` is approximated by the
//! weighted chi-square `sum_k lambda_k (Z_k^2 - 1)` (U) or `sum_k lambda_k Z_k^2`
//! (V), with `lambda` the eigenvalues of the Stein Gram matrix divided by `n`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KsdError, Result};
use crate::kernels::RadialKernel;
use crate::ksdstats::{stat_from_gram, StatKind, WeightedSample};
use crate::matalg::{self, Mat};
use crate::mksde;
use crate::models::ExponentialFamily;
use crate::rng;
use crate::steinkernel::SteinKernel;

const NULL_BLOCK: usize = 256;
const CLIP_TOL: f64 = -1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OnNonConvex {
    #[default]
    Error,
    /// Carry on with the stationary point of the indefinite U system.
    UseStationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GofConfig {
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_n_sim")]
    pub n_sim: usize,
    #[serde(default)]
    pub on_nonconvex: OnNonConvex,
}

fn default_beta() -> f64 {
    0.05
}

fn default_n_sim() -> usize {
    5000
}

impl Default for GofConfig {
    fn default() -> Self {
        Self { beta: default_beta(), n_sim: default_n_sim(), on_nonconvex: OnNonConvex::Error }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GofResult {
    pub n: usize,
    pub kind: StatKind,
    pub beta: f64,
    pub n_sim: usize,
    pub statistic: f64,
    pub quantile: f64,
    pub p_value: f64,
    pub reject: bool,
    pub theta_hat: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues below `-1e-8` that were clipped to zero.
    pub clipped_eigenvalues: usize,
    pub nonconvex: bool,
}

/// Draws from the approximate null law, in a fixed order independent of the
/// thread count: block `b` uses stream `b` of `seed`.
pub fn simulate_null(lambdas: &[f64], kind: StatKind, n_sim: usize, seed: u64) -> Vec<f64> {
    let blocks = n_sim.div_ceil(NULL_BLOCK);
    let shift = match kind {
        StatKind::U => lambdas.iter().sum::<f64>(),
        StatKind::V => 0.0,
    };
    (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = rng::stream(seed, b as u64);
            let len = NULL_BLOCK.min(n_sim - b * NULL_BLOCK);
            (0..len)
                .map(|_| {
                    lambdas
                        .iter()
                        .map(|l| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            l * z * z
                        })
                        .sum::<f64>()
                        - shift
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Empirical `(1 - beta)` quantile, add-one p-value and decision
/// `statistic > quantile`.
pub fn decide(statistic: f64, draws: &[f64], beta: f64) -> (f64, f64, bool) {
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    let idx = ((1.0 - beta) * m as f64).ceil() as usize;
    let quantile = sorted[idx.clamp(1, m) - 1];
    let exceed = sorted.iter().filter(|g| **g >= statistic).count();
    let p_value = (1 + exceed) as f64 / (m + 1) as f64;
    (quantile, p_value, statistic > quantile)
}

/// Composite test: fit the family by minimum KSD, then test the fitted
/// model. For non-uniform log weights the Gram eigenvalue approximation of
/// the null law is experimental: it is only justified when the weights are
/// constant.
pub fn gof_test(
    ef: &ExponentialFamily,
    k: &RadialKernel,
    sample: &WeightedSample,
    kind: StatKind,
    cfg: &GofConfig,
    seed: u64,
) -> Result<GofResult> {
    check_config(cfg)?;
    let sys = mksde::assemble(ef, k, sample, kind)?;
    let (theta, nonconvex) = match mksde::solve(&sys, matalg::DEFAULT_PINV_RTOL) {
        Ok(sol) => (sol.theta_star, false),
        Err(KsdError::NonConvex { stationary, .. }) if cfg.on_nonconvex == OnNonConvex::UseStationary => {
            (stationary, true)
        }
        Err(e) => return Err(e),
    };
    let sk = SteinKernel::new(ef.model(&theta)?, *k);
    let mut r = gof_test_fixed(&sk, sample, kind, cfg, seed)?;
    r.theta_hat = theta;
    r.nonconvex = nonconvex;
    Ok(r)
}

/// Test against the single model of `sk`, with no parameter fitted.
pub fn gof_test_fixed(
    sk: &SteinKernel,
    sample: &WeightedSample,
    kind: StatKind,
    cfg: &GofConfig,
    seed: u64,
) -> Result<GofResult> {
    check_config(cfg)?;
    let n = sample.len();
    let w = sample.weights();
    let gram = sk.gram(sample.points())?;
    let statistic = n as f64 * stat_from_gram(kind, &gram, w)?;

    // weighted Gram exp(lw_i + lw_j) k_p(x_i, x_j), scaled by 1/n
    let nf = n as f64;
    let scaled = Mat::from_fn(n, n, |i, j| gram[(i, j)] * w[i] * w[j] * nf);
    let eig = matalg::sym_eigen(&scaled);
    let mut clipped = 0;
    let lambdas: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| {
            if l < CLIP_TOL {
                clipped += 1;
            }
            l.max(0.0)
        })
        .collect();
    let draws = simulate_null(&lambdas, kind, cfg.n_sim, seed);
    let (quantile, p_value, reject) = decide(statistic, &draws, cfg.beta);
    Ok(GofResult {
        n,
        kind,
        beta: cfg.beta,
        n_sim: cfg.n_sim,
        statistic,
        quantile,
        p_value,
        reject,
        theta_hat: Vec::new(),
        eigenvalues: lambdas,
        clipped_eigenvalues: clipped,
        nonconvex: false,
    })
}

fn check_config(cfg: &GofConfig) -> Result<()> {
    if !(cfg.beta > 0.0 && cfg.beta < 1.0) {
        return Err(KsdError::InvalidArgument(format!("beta must lie in (0, 1), got {}", cfg.beta)));
    }
    if cfg.n_sim == 0 {
        return Err(KsdError::InvalidArgument("n_sim must be positive".into()));
    }
    Ok(())
}

/// Eigenvalues of the scaled Gram matrix, sorted descending; exposed for tests.
pub fn gram_spectrum(gram: &Mat) -> Vec<f64> {
    let n = gram.nrows() as f64;
    let mut ev: Vec<f64> = matalg::sym_eigen(&(gram / n)).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}
