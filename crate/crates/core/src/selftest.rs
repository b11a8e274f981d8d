//! Oracle suite run by `ksdm selftest`: the closed-form Stein kernels against
//! the explicit killing sum and its finite-difference version, and the
//! quadratic pair system against the closed form.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::Result;
use crate::kernels::RadialKernel;
use crate::manifolds::Manifold;
use crate::matalg::{self, Mat};
use crate::mksde;
use crate::models::{ExpFamilyKind, ExponentialFamily, Family, ScoreModel};
use crate::rng::{self, Rng};
use crate::sampling;
use crate::steinkernel::SteinKernel;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: &str, cases: usize, max_error: f64, tolerance: f64) -> Self {
        Self { name: name.into(), cases, max_error, tolerance, pass: max_error <= tolerance }
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn random_spd(n: usize, rng: &mut Rng) -> Mat {
    let g = gaussian(n, n, rng);
    &g * g.transpose() / n as f64 + Mat::identity(n, n) * 0.5
}

pub fn random_point(m: &Manifold, rng: &mut Rng) -> Result<Mat> {
    match m {
        Manifold::Spd { n } => Ok(random_spd(*n, rng)),
        _ => sampling::uniform_point(m, rng),
    }
}

/// A random point at distance of order `scale` from `center`.
pub fn near(m: &Manifold, center: &Mat, scale: f64, rng: &mut Rng) -> Mat {
    match m {
        Manifold::Spd { n } => {
            let e = matalg::sym(&gaussian(*n, *n, rng)) * scale;
            let a = matalg::sym_exp(&(e * 0.5));
            matalg::sym(&(&a * center * &a))
        }
        _ => m.retract(&(center + gaussian(center.nrows(), center.ncols(), rng) * (scale * 0.4))),
    }
}

pub fn kernels() -> Vec<RadialKernel> {
    vec![RadialKernel::Gaussian { tau: 0.8 }, RadialKernel::InverseQuadratic { beta: 1.3, gamma: 0.5 }]
}

/// Every supported family on `V_2(3)`, `V_1(3)`, `V_2(4)`, `G_2(4)`, `P(2)`
/// and `P(3)`, with random parameters.
pub fn model_matrix(rng: &mut Rng) -> Result<Vec<ScoreModel>> {
    let manifolds = [
        Manifold::stiefel(3, 2)?,
        Manifold::stiefel(3, 1)?,
        Manifold::stiefel(4, 2)?,
        Manifold::grassmann(4, 2)?,
        Manifold::spd(2)?,
        Manifold::spd(3)?,
    ];
    let mut out = Vec::new();
    for m in manifolds {
        let (p, q) = m.shape();
        let n = m.n();
        let families = vec![
            Family::Uniform,
            Family::MatrixFisher { f: gaussian(p, q, rng) },
            Family::MatrixBingham { a: gaussian(n, n, rng) },
            Family::MatrixFisherBingham { a: gaussian(n, n, rng), f: gaussian(p, q, rng) },
            Family::RiemannianGaussian { center: random_point(&m, rng)?, sigma: 0.7 },
            Family::Wishart { v: random_spd(n, rng), dof: n as f64 + 1.5 },
        ];
        out.extend(families.into_iter().filter_map(|f| ScoreModel::new(m, f).ok()));
    }
    Ok(out)
}

/// Two points where every evaluation path of `model` is defined; for
/// Riemannian Gaussians both lie near the center.
pub fn random_pair(model: &ScoreModel, rng: &mut Rng) -> Result<(Mat, Mat)> {
    let m = model.manifold();
    match model.family() {
        Family::RiemannianGaussian { center, .. } => Ok((near(&m, center, 0.5, rng), near(&m, center, 0.5, rng))),
        _ => Ok((random_point(&m, rng)?, random_point(&m, rng)?)),
    }
}

pub fn run(seed: u64) -> Result<Vec<Check>> {
    let mut rng = rng::stream(seed, 0);
    let models = model_matrix(&mut rng)?;
    let (mut closed_err, mut fd_err, mut cases) = (0.0f64, 0.0f64, 0);
    for model in &models {
        for k in kernels() {
            let sk = SteinKernel::new(model.clone(), k);
            for _ in 0..5 {
                let (x, y) = random_pair(model, &mut rng)?;
                let brute = sk.brute_force(&x, &y)?;
                closed_err = closed_err.max((sk.closed(&x, &y)? - brute).abs() / brute.abs());
                fd_err = fd_err.max((sk.finite_difference(&x, &y, 1e-4)? - brute).abs());
                cases += 1;
            }
        }
    }

    let (mut pair_err, mut vec_err, mut pair_cases) = (0.0f64, 0.0f64, 0);
    let families = [
        (Manifold::stiefel(3, 2)?, ExpFamilyKind::MatrixFisher),
        (Manifold::stiefel(3, 2)?, ExpFamilyKind::MatrixBingham),
        (Manifold::stiefel(4, 2)?, ExpFamilyKind::MatrixFisherBingham),
        (Manifold::grassmann(4, 2)?, ExpFamilyKind::MatrixFisher),
    ];
    for (m, kind) in families {
        let ef = ExponentialFamily::new(m, kind)?;
        for k in kernels() {
            for _ in 0..5 {
                let (x, y) = (random_point(&m, &mut rng)?, random_point(&m, &mut rng)?);
                let theta: Vec<f64> = (0..ef.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let t = matalg::Vector::from_vec(theta.clone());
                let p = mksde::pair_qb(&ef, &k, &x, &y);
                let quad = t.dot(&(&p.q * &t)) + (&p.b_xy + &p.b_yx).dot(&t) + p.c;
                let closed = SteinKernel::new(ef.model(&theta)?, k).closed(&x, &y)?;
                pair_err = pair_err.max((quad - closed).abs() / closed.abs().max(1.0));
                if let Manifold::Stiefel { .. } = m {
                    let (axy, bxy) = mksde::pair_qb_vectorized_stiefel(&ef, &k, &x, &y)?;
                    let (ayx, byx) = mksde::pair_qb_vectorized_stiefel(&ef, &k, &y, &x)?;
                    let q_sum = &p.q + p.q.transpose();
                    let b_sum = &p.b_xy + &p.b_yx;
                    vec_err = vec_err.max((axy + ayx - q_sum).amax()).max((bxy + byx - b_sum).amax());
                }
                pair_cases += 1;
            }
        }
    }

    Ok(vec![
        Check::new("closed form vs killing sum (relative)", cases, closed_err, 1e-9),
        Check::new("killing sum vs finite differences, h = 1e-4", cases, fd_err, 1e-5),
        Check::new("pair system vs closed form", pair_cases, pair_err, 1e-10),
        Check::new("vectorized Stiefel path vs pair system", pair_cases, vec_err, 1e-10),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_passes() {
        for c in run(11).unwrap() {
            assert!(c.pass, "{c:?}");
        }
    }
}
