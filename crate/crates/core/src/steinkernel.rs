//! Stein kernels `k_p(X, Y) = sum_l K^l_X K^l_Y [p k] / p` built from the
//! killing basis.
//!
//! Three evaluation paths are provided: the closed form used everywhere in
//! production, an explicit sum over the killing basis, and a finite
//! difference version along the group orbits. The latter two serve as
//! references for the first.

use rayon::prelude::*;

use crate::error::Result;
use crate::kernels::RadialKernel;
use crate::manifolds::Manifold;
use crate::matalg::{self, Mat};
use crate::models::ScoreModel;

#[derive(Debug, Clone)]
pub struct SteinKernel {
    model: ScoreModel,
    kernel: RadialKernel,
}

/// Second-order part of the closed form, before the factor `k(X, Y)`.
pub(crate) fn second_order(m: &Manifold, k: &RadialKernel, x: &Mat, y: &Mat) -> f64 {
    let u = (x - y).norm_squared();
    let (d1, d2) = (k.dpsi(u), k.d2psi(u));
    let xy = matalg::frobenius(x, y);
    match *m {
        Manifold::Stiefel { n, .. } => {
            let s = matalg::skew(&(x * y.transpose()));
            (n as f64 - 1.0) * d1 * xy + 4.0 * d2 * s.norm_squared()
        }
        Manifold::Grassmann { n, r } => {
            let c = x * y - y * x;
            2.0 * d1 * (n as f64 * xy - (r * r) as f64) + 4.0 * d2 * c.norm_squared()
        }
        Manifold::Spd { n } => {
            let diff = x - y;
            4.0 * (n as f64 + 1.0) * d1 * xy + 16.0 * d2 * matalg::frobenius(&(x * &diff), &(y * &diff))
        }
    }
}

impl SteinKernel {
    pub fn new(model: ScoreModel, kernel: RadialKernel) -> Self {
        Self { model, kernel }
    }

    pub fn model(&self) -> &ScoreModel {
        &self.model
    }

    pub fn kernel(&self) -> &RadialKernel {
        &self.kernel
    }

    pub fn manifold(&self) -> Manifold {
        self.model.manifold()
    }

    /// Closed form given precomputed scores `sx = score(x)`, `sy = score(y)`.
    pub fn closed_with_scores(&self, x: &Mat, sx: &Mat, y: &Mat, sy: &Mat) -> f64 {
        let m = self.manifold();
        let kv = self.kernel.eval(x, y);
        let gx = sx + self.kernel.grad_log(x, y);
        let gy = sy + self.kernel.grad_log(y, x);
        let first = matalg::frobenius(&m.killing_projection(x, &gx), &m.killing_projection(y, &gy));
        kv * (first + second_order(&m, &self.kernel, x, y))
    }

    pub fn closed(&self, x: &Mat, y: &Mat) -> Result<f64> {
        let sx = self.model.score(x)?;
        let sy = self.model.score(y)?;
        Ok(self.closed_with_scores(x, &sx, y, &sy))
    }

    /// Explicit sum over the killing basis.
    pub fn brute_force(&self, x: &Mat, y: &Mat) -> Result<f64> {
        let m = self.manifold();
        let u = (x - y).norm_squared();
        let (d1, d2) = (self.kernel.dpsi(u), self.kernel.d2psi(u));
        let gx = self.model.score(x)? + self.kernel.grad_log(x, y);
        let gy = self.model.score(y)? + self.kernel.grad_log(y, x);
        let diff = x - y;
        let mut total = 0.0;
        for l in 0..m.killing_count() {
            let kx = m.killing_tangent(l, x)?;
            let ky = m.killing_tangent(l, y)?;
            let a = m.directional_derivative(l, x, &gx)?;
            let b = m.directional_derivative(l, y, &gy)?;
            let mixed = 2.0 * d1 * matalg::frobenius(&kx, &ky)
                + 4.0 * d2 * matalg::frobenius(&diff, &kx) * matalg::frobenius(&diff, &ky);
            total += a * b + mixed;
        }
        Ok(self.kernel.eval(x, y) * total)
    }

    /// Central differences of `log p + log k` along the group orbits with step `h`.
    pub fn finite_difference(&self, x: &Mat, y: &Mat, h: f64) -> Result<f64> {
        let m = self.manifold();
        let k = &self.kernel;
        let mut total = 0.0;
        for l in 0..m.killing_count() {
            let a = m.directional_derivative_fd(l, x, h, |xp| Ok(self.model.unnorm_logpdf(xp)? + k.log_eval(xp, y)))?;
            let b = m.directional_derivative_fd(l, y, h, |yp| Ok(self.model.unnorm_logpdf(yp)? + k.log_eval(x, yp)))?;
            let (xp, xm) = (m.act(l, h, x)?, m.act(l, -h, x)?);
            let (yp, ym) = (m.act(l, h, y)?, m.act(l, -h, y)?);
            let mixed = (k.log_eval(&xp, &yp) - k.log_eval(&xp, &ym) - k.log_eval(&xm, &yp) + k.log_eval(&xm, &ym))
                / (4.0 * h * h);
            total += a * b + mixed;
        }
        Ok(k.eval(x, y) * total)
    }

    pub fn scores(&self, points: &[Mat]) -> Result<Vec<Mat>> {
        points.par_iter().map(|x| self.model.score(x)).collect()
    }

    /// Full Stein Gram matrix `G_ij = k_p(x_i, x_j)`, exactly symmetric.
    pub fn gram(&self, points: &[Mat]) -> Result<Mat> {
        let scores = self.scores(points)?;
        Ok(self.gram_with_scores(points, &scores))
    }

    pub fn gram_with_scores(&self, points: &[Mat], scores: &[Mat]) -> Mat {
        let n = points.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (i..n)
                    .map(|j| self.closed_with_scores(&points[i], &scores[i], &points[j], &scores[j]))
                    .collect()
            })
            .collect();
        let mut g = Mat::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            for (off, v) in row.iter().enumerate() {
                g[(i, i + off)] = *v;
                g[(i + off, i)] = *v;
            }
        }
        g
    }
}
