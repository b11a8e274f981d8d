//! Samplers: uniform, exact matrix Fisher rejection, Metropolis-Hastings with
//! group-action proposals, and Bartlett Wishart draws.

use rand::Rng as _;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{KsdError, Result};
use crate::manifolds::Manifold;
use crate::matalg::{self, Mat};
use crate::models::{Family, ScoreModel};
use crate::rng::Rng;

pub const MIN_ACCEPTANCE: f64 = 1e-4;
const ACCEPTANCE_PROBE: usize = 20_000;

fn gaussian(rows: usize, cols: usize, rng: &mut Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn uniform_point(m: &Manifold, rng: &mut Rng) -> Result<Mat> {
    match *m {
        Manifold::Stiefel { n, r } => Ok(matalg::qr_orthonormal(&gaussian(n, r, rng))),
        Manifold::Grassmann { n, r } => {
            let u = matalg::qr_orthonormal(&gaussian(n, r, rng));
            Ok(&u * u.transpose())
        }
        Manifold::Spd { .. } => Err(KsdError::Unsupported("no uniform distribution on SPD".into())),
    }
}

pub fn sample_uniform(m: &Manifold, n: usize, rng: &mut Rng) -> Result<Vec<Mat>> {
    (0..n).map(|_| uniform_point(m, rng)).collect()
}

/// Upper bound of `tr(F' X)` over the manifold.
fn fisher_bound(m: &Manifold, f: &Mat) -> Result<f64> {
    match *m {
        Manifold::Stiefel { .. } => Ok(f.singular_values().sum()),
        Manifold::Grassmann { r, .. } => Ok(top_eigen_sum(&matalg::sym(f), r)),
        Manifold::Spd { .. } => Err(KsdError::Unsupported("matrix Fisher rejection on SPD".into())),
    }
}

/// Sum of the `r` largest eigenvalues of a symmetric matrix, the maximum of
/// `tr(X' A X)` over `V_r(N)`.
fn top_eigen_sum(a: &Mat, r: usize) -> f64 {
    let mut ev: Vec<f64> = matalg::sym_eigen(a).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev[..r].iter().sum()
}

/// Upper bound of the unnormalized log density, when rejection from the
/// uniform distribution is available.
fn log_bound(model: &ScoreModel) -> Result<f64> {
    let m = model.manifold();
    match (m, model.family()) {
        (Manifold::Spd { .. }, _) => Err(KsdError::Unsupported("rejection sampling on SPD".into())),
        (_, Family::Uniform) => Ok(0.0),
        (_, Family::MatrixFisher { f }) => fisher_bound(&m, f),
        (Manifold::Stiefel { r, .. }, Family::MatrixBingham { a }) => Ok(top_eigen_sum(&matalg::sym(a), r)),
        (Manifold::Stiefel { r, .. }, Family::MatrixFisherBingham { a, f }) => {
            Ok(top_eigen_sum(&matalg::sym(a), r) + fisher_bound(&m, f)?)
        }
        (_, f) => Err(KsdError::Unsupported(format!("rejection sampling for {}", f.label()))),
    }
}

/// Exact draws by rejection from the uniform distribution, for matrix
/// Fisher, Bingham and Fisher-Bingham models. Returns the points and the
/// acceptance rate.
pub fn sample_rejection(model: &ScoreModel, n: usize, rng: &mut Rng) -> Result<(Vec<Mat>, f64)> {
    let m = model.manifold();
    let bound = log_bound(model)?;
    let mut out = Vec::with_capacity(n);
    let mut tried = 0usize;
    while out.len() < n {
        let x = uniform_point(&m, rng)?;
        tried += 1;
        let log_acc = model.unnorm_logpdf(&x)? - bound;
        if rng.gen::<f64>().ln() < log_acc {
            out.push(x);
        }
        if tried >= ACCEPTANCE_PROBE && (out.len() as f64) < MIN_ACCEPTANCE * tried as f64 {
            return Err(KsdError::Convergence(format!(
                "rejection acceptance {} / {tried} is below {MIN_ACCEPTANCE}",
                out.len()
            )));
        }
    }
    Ok((out, n as f64 / tried.max(1) as f64))
}

/// Exact matrix Fisher draws by rejection from the uniform distribution.
pub fn sample_mf_rejection(m: &Manifold, f: &Mat, n: usize, rng: &mut Rng) -> Result<(Vec<Mat>, f64)> {
    if f.shape() != m.shape() {
        return Err(KsdError::Dimension(format!("F has shape {:?}, expected {:?}", f.shape(), m.shape())));
    }
    sample_rejection(&ScoreModel::new(*m, Family::MatrixFisher { f: f.clone() })?, n, rng)
}

/// Exact draws where an exact sampler exists (rejection, Bartlett Wishart,
/// uniform) and Metropolis-Hastings otherwise. Returns the points, the
/// acceptance rate and the name of the method used.
pub fn sample_auto(
    model: &ScoreModel,
    n: usize,
    mh: &MhOptions,
    rng: &mut Rng,
) -> Result<(Vec<Mat>, f64, &'static str)> {
    let m = model.manifold();
    match (m, model.family()) {
        (Manifold::Spd { n: p }, Family::Wishart { v, dof }) => {
            let standard = dof - p as f64 + 1.0;
            Ok((sample_wishart(v, standard, n, rng)?, 1.0, "wishart_exact"))
        }
        (_, Family::Uniform) => Ok((sample_uniform(&m, n, rng)?, 1.0, "uniform")),
        _ => match log_bound(model) {
            Ok(_) => sample_rejection(model, n, rng).map(|(p, a)| (p, a, "rejection")),
            Err(_) => sample_mh(model, n, mh, rng).map(|(p, a)| (p, a, "metropolis_hastings")),
        },
    }
}

#[derive(Debug, Clone)]
pub struct MhOptions {
    pub step: f64,
    pub burn_in: usize,
    pub thin: usize,
    pub init: Option<Mat>,
}

impl MhOptions {
    pub fn for_manifold(m: &Manifold) -> Self {
        let step = match m {
            Manifold::Spd { .. } => 0.2,
            _ => 0.3,
        };
        Self { step, burn_in: 1000, thin: 5, init: None }
    }
}

fn default_init(model: &ScoreModel) -> Mat {
    let m = model.manifold();
    match (&m, model.family()) {
        (_, Family::RiemannianGaussian { center, .. }) => center.clone(),
        (Manifold::Spd { n }, Family::Wishart { v, dof }) => v * (*dof - *n as f64 + 1.0).max(1.0),
        (Manifold::Stiefel { n, r }, _) => Mat::identity(*n, *r),
        (Manifold::Grassmann { n, r }, _) => {
            let u = Mat::identity(*n, *r);
            &u * u.transpose()
        }
        (Manifold::Spd { n }, _) => Mat::identity(*n, *n),
    }
}

fn propose(m: &Manifold, x: &Mat, step: f64, rng: &mut Rng) -> Mat {
    let n = m.n();
    let g = gaussian(n, n, rng) * step;
    match m {
        Manifold::Stiefel { .. } => matalg::expm(&matalg::skew(&g)) * x,
        Manifold::Grassmann { .. } => {
            let q = matalg::expm(&matalg::skew(&g));
            &q * x * q.transpose()
        }
        Manifold::Spd { .. } => {
            let a = matalg::expm(&(g * 0.5));
            matalg::sym(&(a.transpose() * x * a))
        }
    }
}

fn drift(m: &Manifold, x: &Mat) -> f64 {
    match *m {
        Manifold::Stiefel { r, .. } => (x.transpose() * x - Mat::identity(r, r)).amax(),
        Manifold::Grassmann { .. } => (x * x - x).amax(),
        Manifold::Spd { .. } => 0.0,
    }
}

/// Random-walk Metropolis-Hastings. Proposals apply a random group element
/// whose law is symmetric under inversion, so the acceptance ratio is the
/// density ratio with respect to the invariant volume.
/// Returns the thinned chain and the acceptance rate.
pub fn sample_mh(model: &ScoreModel, n: usize, opts: &MhOptions, rng: &mut Rng) -> Result<(Vec<Mat>, f64)> {
    let m = model.manifold();
    if !(opts.step > 0.0) || opts.thin == 0 {
        return Err(KsdError::InvalidArgument("MH needs step > 0 and thin >= 1".into()));
    }
    let mut x = opts.init.clone().unwrap_or_else(|| default_init(model));
    m.check_point(&x)?;
    let mut lp = model.unnorm_logpdf(&x)?;
    let total = opts.burn_in + n * opts.thin;
    let mut out = Vec::with_capacity(n);
    let mut accepted = 0usize;
    for it in 0..total {
        let mut y = propose(&m, &x, opts.step, rng);
        if drift(&m, &y) > 1e-10 {
            y = m.retract(&y);
        }
        // proposals where the density cannot be evaluated (outside SPD, or
        // beyond the reach of the Stiefel/Grassmann log) are rejected
        let lq = match model.unnorm_logpdf(&y) {
            Ok(v) => v,
            Err(KsdError::Domain(_) | KsdError::CutLocus(_) | KsdError::Convergence(_)) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };
        if rng.gen::<f64>().ln() < lq - lp {
            x = y;
            lp = lq;
            accepted += 1;
        }
        if it >= opts.burn_in && (it - opts.burn_in + 1) % opts.thin == 0 {
            out.push(x.clone());
        }
    }
    Ok((out, accepted as f64 / total as f64))
}

/// Standard Wishart draws `X = L A A' L'` by the Bartlett decomposition,
/// with `V = L L'` and `E[X] = dof V`.
pub fn sample_wishart(v: &Mat, dof: f64, n: usize, rng: &mut Rng) -> Result<Vec<Mat>> {
    let p = v.nrows();
    if dof <= p as f64 - 1.0 {
        return Err(KsdError::InvalidArgument(format!("Wishart needs dof > N - 1, got {dof}")));
    }
    matalg::check_spd(v)?;
    let l = matalg::sym(v)
        .cholesky()
        .ok_or_else(|| KsdError::Domain("scale matrix is not positive definite".into()))?
        .l();
    let chis: Vec<ChiSquared<f64>> = (0..p)
        .map(|i| ChiSquared::new(dof - i as f64).map_err(|e| KsdError::InvalidArgument(e.to_string())))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut a = Mat::zeros(p, p);
        for i in 0..p {
            a[(i, i)] = chis[i].sample(rng).sqrt();
            for j in 0..i {
                a[(i, j)] = rng.sample(StandardNormal);
            }
        }
        let la = &l * a;
        out.push(matalg::sym(&(&la * la.transpose())));
    }
    Ok(out)
}
