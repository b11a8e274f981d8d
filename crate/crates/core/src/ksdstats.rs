//! U- and V-statistic estimates of the squared kernel Stein discrepancy.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{KsdError, Result};
use crate::manifolds::Manifold;
use crate::matalg::Mat;
use crate::rng;
use crate::steinkernel::SteinKernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatKind {
    U,
    V,
}

impl StatKind {
    pub fn label(&self) -> &'static str {
        match self {
            StatKind::U => "U",
            StatKind::V => "V",
        }
    }
}

/// Points on a manifold with optional log importance weights.
#[derive(Debug, Clone)]
pub struct WeightedSample {
    manifold: Manifold,
    points: Vec<Mat>,
    weights: Vec<f64>,
}

impl WeightedSample {
    pub fn new(manifold: Manifold, points: Vec<Mat>) -> Result<Self> {
        let n = points.len();
        Self::with_log_weights(manifold, points, vec![0.0; n])
    }

    pub fn with_log_weights(manifold: Manifold, points: Vec<Mat>, log_weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(KsdError::InvalidArgument("empty sample".into()));
        }
        if log_weights.len() != points.len() {
            return Err(KsdError::Dimension(format!(
                "{} log weights for {} points",
                log_weights.len(),
                points.len()
            )));
        }
        if log_weights.iter().any(|w| !w.is_finite()) {
            return Err(KsdError::InvalidArgument("log weights must be finite".into()));
        }
        for x in &points {
            manifold.check_point(x)?;
        }
        let n = points.len() as f64;
        let weights = log_weights.iter().map(|w| w.exp() / n).collect();
        Ok(Self { manifold, points, weights })
    }

    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn points(&self) -> &[Mat] {
        &self.points
    }

    /// Per-point weights `exp(lw_i) / n`, so that pair `(i, j)` enters the
    /// statistics with `w_i w_j = exp(lw_i + lw_j) / n^2`. A shared constant
    /// in the log weights rescales every statistic.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weights rescaled to sum to one, for weighted means.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / total).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn check_manifold(sk: &SteinKernel, s: &WeightedSample) -> Result<()> {
    if sk.manifold() != s.manifold() {
        return Err(KsdError::Dimension(format!(
            "kernel on {} but sample on {}",
            sk.manifold().name(),
            s.manifold().name()
        )));
    }
    Ok(())
}

pub fn v_from_gram(g: &Mat, w: &[f64]) -> f64 {
    let n = w.len();
    let mut total = 0.0;
    for j in 0..n {
        let mut col = 0.0;
        for i in 0..n {
            col += w[i] * g[(i, j)];
        }
        total += w[j] * col;
    }
    total
}

pub fn u_from_gram(g: &Mat, w: &[f64]) -> Result<f64> {
    let n = w.len();
    if n < 2 {
        return Err(KsdError::InvalidArgument("U-statistic needs at least two points".into()));
    }
    let diag: f64 = (0..n).map(|i| w[i] * w[i] * g[(i, i)]).sum();
    Ok((v_from_gram(g, w) - diag) * n as f64 / (n - 1) as f64)
}

pub fn stat_from_gram(kind: StatKind, g: &Mat, w: &[f64]) -> Result<f64> {
    match kind {
        StatKind::U => u_from_gram(g, w),
        StatKind::V => Ok(v_from_gram(g, w)),
    }
}

pub fn u_stat(sk: &SteinKernel, s: &WeightedSample) -> Result<f64> {
    check_manifold(sk, s)?;
    if s.len() < 2 {
        return Err(KsdError::InvalidArgument("U-statistic needs at least two points".into()));
    }
    u_from_gram(&sk.gram(s.points())?, s.weights())
}

pub fn v_stat(sk: &SteinKernel, s: &WeightedSample) -> Result<f64> {
    check_manifold(sk, s)?;
    Ok(v_from_gram(&sk.gram(s.points())?, s.weights()))
}

/// Standard error of the V-statistic over `reps` bootstrap resamples.
pub fn bootstrap_se_v(g: &Mat, w: &[f64], reps: usize, seed: u64) -> Result<f64> {
    bootstrap_se(StatKind::V, g, w, reps, seed)
}

/// Bootstrap standard error of either statistic. Each resample draws `n`
/// indices uniformly with replacement; in the U-statistic, repeated copies
/// of a point count as distinct points.
pub fn bootstrap_se(kind: StatKind, g: &Mat, w: &[f64], reps: usize, seed: u64) -> Result<f64> {
    let n = w.len();
    if reps < 2 {
        return Err(KsdError::InvalidArgument("need at least two bootstrap resamples".into()));
    }
    if kind == StatKind::U && n < 2 {
        return Err(KsdError::InvalidArgument("U-statistic needs at least two points".into()));
    }
    let mut rng = rng::stream(seed, 0xB007);
    let mut values = Vec::with_capacity(reps);
    let mut counts = vec![0.0; n];
    for _ in 0..reps {
        counts.iter_mut().for_each(|c| *c = 0.0);
        for _ in 0..n {
            counts[rng.gen_range(0..n)] += 1.0;
        }
        let c: Vec<f64> = counts.iter().zip(w).map(|(c, w)| c * w).collect();
        let v = v_from_gram(g, &c);
        values.push(match kind {
            StatKind::V => v,
            StatKind::U => {
                let diag: f64 = (0..n).map(|i| counts[i] * w[i] * w[i] * g[(i, i)]).sum();
                (v - diag) * n as f64 / (n - 1) as f64
            }
        });
    }
    let mean = values.iter().sum::<f64>() / reps as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    Ok(var.sqrt())
}
