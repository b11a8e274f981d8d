//! Minimum kernel Stein discrepancy estimation for exponential families.
//!
//! For `p_theta ∝ exp(theta . zeta + eta)` the Stein kernel is quadratic in
//! theta, `k_p(X, Y) = theta' Q theta + (b(X,Y) + b(Y,X))' theta + c`, with
//!
//! * `Q(X, Y) = k(X, Y) Z(X)' Z(Y)`, where column `k` of `Z(X)` holds the
//!   killing-basis coordinates of `grad zeta_k(X)`;
//! * `b(X, Y) = k(X, Y) Z(Y)' h(X, Y)` with `h(X, Y)` the coordinates of
//!   `grad eta(X) + grad_X log k(X, Y)`.
//!
//! The Grassmann and SPD coordinates carry the factor 2 of their killing
//! projections, so `Q` and `b` there include the factor 4 of the Stein kernel.

use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KsdError, Result};
use crate::kernels::RadialKernel;
use crate::ksdstats::{StatKind, WeightedSample};
use crate::manifolds::Manifold;
use crate::matalg::{self, Mat, ShuffleMatrix, Vector};
use crate::models::{ExpFamilyKind, ExponentialFamily};
use crate::rng;
use crate::steinkernel::second_order;

/// Quadratic-form pieces of `k_p` for one ordered pair.
#[derive(Debug, Clone)]
pub struct PairSystem {
    pub q: Mat,
    /// `b(X, Y)`: kernel side at `X`, statistic side at `Y`.
    pub b_xy: Vector,
    /// `b(Y, X)`.
    pub b_yx: Vector,
    pub c: f64,
}

fn coords(m: &Manifold, x: &Mat, g: &Mat) -> Vector {
    matalg::vec(&m.killing_projection(x, g))
}

fn zeta_coords(ef: &ExponentialFamily, x: &Mat) -> Mat {
    let m = ef.manifold();
    let cols: Vec<Vector> = ef.grad_components(x).iter().map(|g| coords(&m, x, g)).collect();
    Mat::from_columns(&cols)
}

pub fn pair_qb(ef: &ExponentialFamily, k: &RadialKernel, x: &Mat, y: &Mat) -> PairSystem {
    let m = ef.manifold();
    let kv = k.eval(x, y);
    let (zx, zy) = (zeta_coords(ef, x), zeta_coords(ef, y));
    let hx = coords(&m, x, &(ef.grad_base(x) + k.grad_log(x, y)));
    let hy = coords(&m, y, &(ef.grad_base(y) + k.grad_log(y, x)));
    PairSystem {
        q: zx.transpose() * &zy * kv,
        b_xy: zy.transpose() * &hx * kv,
        b_yx: zx.transpose() * &hy * kv,
        c: kv * (hx.dot(&hy) + second_order(&m, k, x, y)),
    }
}

/// Kronecker and shuffle form of the pair system on Stiefel, with `Z(X)`
/// the `Nr x s` matrix of columns `vec(grad zeta_k(X))`:
/// `A(X, Y) = k/2 Z(X)' (X'Y ⊗ I - (X' ⊗ Y) S) Z(Y)` and
/// `b(X, Y) = k Z(X)' [vec(A(grad_Y log k Y') X) + (X'Y ⊗ I - (X' ⊗ Y) S) vec(grad eta(Y)) / 2]`.
/// Here `b` is oriented with the statistic side at `X`, so it corresponds to
/// `b_yx` of [`pair_qb`].
pub fn pair_qb_vectorized_stiefel(ef: &ExponentialFamily, k: &RadialKernel, x: &Mat, y: &Mat) -> Result<(Mat, Vector)> {
    let (n, r) = match ef.manifold() {
        Manifold::Stiefel { n, r } => (n, r),
        m => return Err(KsdError::Unsupported(format!("vectorized path on {}", m.name()))),
    };
    let kv = k.eval(x, y);
    let jac = |p: &Mat| Mat::from_columns(&ef.grad_components(p).iter().map(matalg::vec).collect::<Vec<_>>());
    let (zx, zy) = (jac(x), jac(y));
    let s = ShuffleMatrix::new(n, r).to_dense();
    let mid = matalg::kron(&(x.transpose() * y), &Mat::identity(n, n)) - matalg::kron(&x.transpose(), y) * s;
    let a = zx.transpose() * &mid * &zy * (0.5 * kv);
    let lin = matalg::vec(&(matalg::skew(&(k.grad_log(y, x) * y.transpose())) * x))
        + &mid * matalg::vec(&ef.grad_base(y)) * 0.5;
    let b = zx.transpose() * lin * kv;
    Ok((a, b))
}

/// Specialized matrix Fisher pair system for the Gaussian kernel in its
/// closed form `A = k/2 (I ⊗ X Y' - S_{r,N} X ⊗ Y')`, `b = tau k vec(A(X Y') X)`.
/// `b` agrees with [`pair_qb`]; `A` does not (see the acceptance suite).
pub fn mf_gaussian_specialized(tau: f64, x: &Mat, y: &Mat) -> (Mat, Vector) {
    let (n, r) = x.shape();
    let kv = (-0.5 * tau * (x - y).norm_squared()).exp();
    let s = ShuffleMatrix::new(r, n).to_dense();
    let a = (matalg::kron(&Mat::identity(r, r), &(x * y.transpose())) - s * matalg::kron(x, &y.transpose())) * (0.5 * kv);
    let b = matalg::vec(&(matalg::skew(&(x * y.transpose())) * x)) * (tau * kv);
    (a, b)
}

/// Specialized matrix Bingham pair system for the Gaussian kernel:
/// `A = k/2 (S + I)(X X' Y Y' ⊗ I - X X' ⊗ Y Y')(S + I)`,
/// `b = tau k vec(X Y' (X X' - I))`.
pub fn mb_gaussian_specialized(tau: f64, x: &Mat, y: &Mat) -> (Mat, Vector) {
    let n = x.nrows();
    let kv = (-0.5 * tau * (x - y).norm_squared()).exp();
    let sp = ShuffleMatrix::new(n, n).to_dense() + Mat::identity(n * n, n * n);
    let (xx, yy) = (x * x.transpose(), y * y.transpose());
    let mid = matalg::kron(&(&xx * &yy), &Mat::identity(n, n)) - matalg::kron(&xx, &yy);
    let a = &sp * mid * &sp * (0.5 * kv);
    let b = matalg::vec(&(x * y.transpose() * (xx - Mat::identity(n, n)))) * (tau * kv);
    (a, b)
}

/// Empirical quadratic `theta -> theta' Q theta + 2 b' theta + c` equal to the
/// U- or V-statistic of `p_theta`.
#[derive(Debug, Clone)]
pub struct MksdeSystem {
    pub q: Mat,
    pub b: Vector,
    pub c: f64,
    pub kind: StatKind,
    pub n: usize,
    pub family: ExponentialFamily,
}

impl MksdeSystem {
    pub fn objective(&self, theta: &Vector) -> f64 {
        theta.dot(&(&self.q * theta)) + 2.0 * self.b.dot(theta) + self.c
    }
}

pub fn assemble(ef: &ExponentialFamily, k: &RadialKernel, sample: &WeightedSample, kind: StatKind) -> Result<MksdeSystem> {
    let m = ef.manifold();
    if sample.manifold() != m {
        return Err(KsdError::Dimension(format!(
            "family on {} but sample on {}",
            m.name(),
            sample.manifold().name()
        )));
    }
    let n = sample.len();
    let w = sample.weights();
    let norm = match kind {
        StatKind::V => 1.0,
        StatKind::U => {
            if n < 2 {
                return Err(KsdError::InvalidArgument("U-kind needs at least two points".into()));
            }
            (n - 1) as f64 / n as f64
        }
    };
    let pts = sample.points();
    let zs: Vec<Mat> = pts.par_iter().map(|x| zeta_coords(ef, x)).collect();
    let bases: Vec<Mat> = pts.par_iter().map(|x| ef.grad_base(x)).collect();
    let s = ef.dim();

    let parts: Vec<(Mat, Vector, f64)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let (xj, zj) = (&pts[j], &zs[j]);
            let mut wsum = Mat::zeros(zj.nrows(), s);
            let mut u = Vector::zeros(zj.nrows());
            let mut c = 0.0;
            for i in 0..n {
                if kind == StatKind::U && i == j {
                    continue;
                }
                let xi = &pts[i];
                let coef = w[i] * w[j] / norm * k.eval(xi, xj);
                if coef == 0.0 {
                    continue;
                }
                let hij = coords(&m, xi, &(&bases[i] + k.grad_log(xi, xj)));
                let hji = coords(&m, xj, &(&bases[j] + k.grad_log(xj, xi)));
                wsum += &zs[i] * coef;
                u += &hij * coef;
                c += coef * (hij.dot(&hji) + second_order(&m, k, xi, xj));
            }
            (wsum.transpose() * zj, zj.transpose() * u, c)
        })
        .collect();

    let mut q = Mat::zeros(s, s);
    let mut b = Vector::zeros(s);
    let mut c = 0.0;
    for (qj, bj, cj) in parts {
        q += qj;
        b += bj;
        c += cj;
    }
    Ok(MksdeSystem { q: matalg::sym(&q), b, c, kind, n, family: *ef })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MksdeSolution {
    pub theta_star: Vec<f64>,
    pub null_space_rank: usize,
    /// `theta' Q theta + 2 b' theta` at `theta_star`.
    pub objective: f64,
    pub min_eigenvalue: f64,
}

/// Minimum-norm minimizer `-Q^+ b`. For U-kind systems whose smallest
/// eigenvalue is below `-1e-6 tr(Q) / s` the stationary point is returned
/// inside a [`KsdError::NonConvex`].
pub fn solve(sys: &MksdeSystem, rank_tol: f64) -> Result<MksdeSolution> {
    let s = sys.q.nrows();
    let (pinv, rank) = matalg::pinv(&sys.q, rank_tol)?;
    let theta = -(&pinv * &sys.b);
    let objective = theta.dot(&(&sys.q * &theta)) + 2.0 * sys.b.dot(&theta);
    let min_eigenvalue = SymmetricEigen::new(sys.q.clone()).eigenvalues.min();
    let sol = MksdeSolution {
        theta_star: theta.as_slice().to_vec(),
        null_space_rank: s - rank,
        objective,
        min_eigenvalue,
    };
    if sys.kind == StatKind::U {
        let scale = sys.q.trace().abs().max(f64::MIN_POSITIVE) / s as f64;
        if min_eigenvalue < -1e-6 * scale {
            return Err(KsdError::NonConvex { min_eigenvalue, stationary: sol.theta_star });
        }
    }
    Ok(sol)
}

#[derive(Debug, Clone, Copy)]
pub struct MleOptions {
    pub pool_size: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self { pool_size: 20_000, seed: 20_240_229, max_iter: 500, tol: 1e-8 }
    }
}

/// Uniform draws used as the Monte Carlo normalizer pool.
pub fn uniform_pool(m: &Manifold, opts: &MleOptions) -> Result<Vec<Mat>> {
    let mut rng = rng::stream(opts.seed, 0x4D4C45);
    crate::sampling::sample_uniform(m, opts.pool_size, &mut rng)
}

/// `log c(F)` estimated over the pool, together with the weighted mean and
/// covariance of `vec(U)` under weights `∝ exp(tr(F'U))`.
fn pool_moments(f: &Mat, pool: &[Mat]) -> (f64, Vector, Mat) {
    let logits: Vec<f64> = pool.iter().map(|u| matalg::frobenius(f, u)).collect();
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ws: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = ws.iter().sum();
    let log_c = top + (total / pool.len() as f64).ln();
    let d = f.len();
    let mut mu = Vector::zeros(d);
    let mut second = Mat::zeros(d, d);
    for (u, w) in pool.iter().zip(&ws) {
        let v = matalg::vec(u);
        let wn = w / total;
        mu += &v * wn;
        second.ger(wn, &v, &v, 1.0);
    }
    let cov = second - &mu * mu.transpose();
    (log_c, mu, cov)
}

/// Matrix Fisher maximum likelihood on Stiefel with a Monte Carlo normalizer,
/// by Newton-preconditioned gradient ascent with backtracking.
pub fn mle_numeric_mf(sample: &WeightedSample, pool: &[Mat], opts: &MleOptions) -> Result<Mat> {
    let m = sample.manifold();
    if !matches!(m, Manifold::Stiefel { .. }) {
        return Err(KsdError::Unsupported("numeric MLE is implemented for Stiefel matrix Fisher".into()));
    }
    if pool.is_empty() {
        return Err(KsdError::InvalidArgument("empty normalizer pool".into()));
    }
    let (p, q) = m.shape();
    let mut xbar = Mat::zeros(p, q);
    for (x, w) in sample.points().iter().zip(sample.normalized_weights()) {
        xbar += x * w;
    }
    let loglik = |f: &Mat, log_c: f64| matalg::frobenius(f, &xbar) - log_c;

    let mut f = Mat::zeros(p, q);
    let (mut log_c, mut mu, mut cov) = pool_moments(&f, pool);
    for _ in 0..opts.max_iter {
        let grad = matalg::vec(&xbar) - &mu;
        if grad.norm() <= opts.tol {
            return Ok(f);
        }
        let reg = cov.trace() / cov.nrows() as f64 * 1e-8 + 1e-12;
        let h = &cov + Mat::identity(cov.nrows(), cov.nrows()) * reg;
        let dir = h.cholesky().map(|c| c.solve(&grad)).unwrap_or_else(|| grad.clone());
        let cur = loglik(&f, log_c);
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-12 {
            let cand = &f + matalg::unvec(dir.as_slice(), p, q)? * step;
            let (lc, mu2, cov2) = pool_moments(&cand, pool);
            if loglik(&cand, lc) >= cur + 1e-4 * step * grad.dot(&dir) {
                f = cand;
                (log_c, mu, cov) = (lc, mu2, cov2);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no ascent direction left at working precision
            return Ok(f);
        }
    }
    Err(KsdError::NoConvergence {
        what: "matrix Fisher MLE".into(),
        iterations: opts.max_iter,
        last_iterate: f.as_slice().to_vec(),
    })
}

/// Small-concentration approximation `F = N * mean(X)`.
pub fn mle_small_f(sample: &WeightedSample) -> Mat {
    let n = sample.manifold().n() as f64;
    let mut xbar = Mat::zeros(sample.points()[0].nrows(), sample.points()[0].ncols());
    for (x, w) in sample.points().iter().zip(sample.normalized_weights()) {
        xbar += x * w;
    }
    xbar * n
}

/// Convenience wrapper: assemble, solve, and unpack the estimate.
pub fn estimate(
    ef: &ExponentialFamily,
    k: &RadialKernel,
    sample: &WeightedSample,
    kind: StatKind,
) -> Result<(MksdeSystem, MksdeSolution)> {
    let sys = assemble(ef, k, sample, kind)?;
    let sol = solve(&sys, matalg::DEFAULT_PINV_RTOL)?;
    Ok((sys, sol))
}

/// Parameter matrices of a packed estimate, in the family's own layout.
pub fn unpack(ef: &ExponentialFamily, theta: &[f64]) -> Result<Vec<(String, Mat)>> {
    let n = ef.manifold().n();
    let (p, q) = ef.manifold().shape();
    Ok(match ef.kind() {
        ExpFamilyKind::MatrixFisher => vec![("F".into(), matalg::unvec(theta, p, q)?)],
        ExpFamilyKind::MatrixBingham => vec![("A".into(), matalg::unvec(theta, n, n)?)],
        ExpFamilyKind::MatrixFisherBingham => vec![
            ("A".into(), matalg::unvec(&theta[..n * n], n, n)?),
            ("F".into(), matalg::unvec(&theta[n * n..], p, q)?),
        ],
    })
}
