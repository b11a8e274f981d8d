//! Probability models on the manifolds, given by their unnormalized log
//! density (with respect to the invariant volume) and its Euclidean gradient.

use serde::{Deserialize, Serialize};

use crate::error::{KsdError, Result};
use crate::io::matrix_rows;
use crate::manifolds::{grassmann, spd, stiefel, Manifold};
use crate::matalg::{self, Mat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    Uniform,
    /// `log p = tr(F^T X)`.
    MatrixFisher {
        #[serde(with = "matrix_rows")]
        f: Mat,
    },
    /// `log p = tr(X^T A X)`.
    MatrixBingham {
        #[serde(with = "matrix_rows")]
        a: Mat,
    },
    /// `log p = tr(X^T A X) + tr(F^T X)`.
    MatrixFisherBingham {
        #[serde(with = "matrix_rows")]
        a: Mat,
        #[serde(with = "matrix_rows")]
        f: Mat,
    },
    /// `log p = -d(X, center)^2 / (2 sigma^2)`.
    RiemannianGaussian {
        #[serde(with = "matrix_rows")]
        center: Mat,
        sigma: f64,
    },
    /// `log p = (dof - N + 1)/2 log|X| - tr(V^{-1} X)/2`.
    Wishart {
        #[serde(with = "matrix_rows")]
        v: Mat,
        dof: f64,
    },
}

impl Family {
    pub fn label(&self) -> &'static str {
        match self {
            Family::Uniform => "uniform",
            Family::MatrixFisher { .. } => "matrix_fisher",
            Family::MatrixBingham { .. } => "matrix_bingham",
            Family::MatrixFisherBingham { .. } => "matrix_fisher_bingham",
            Family::RiemannianGaussian { .. } => "riemannian_gaussian",
            Family::Wishart { .. } => "wishart",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScoreModel {
    manifold: Manifold,
    family: Family,
    /// Cached `V^{-1}` for Wishart.
    v_inv: Option<Mat>,
}

fn expect_shape(name: &str, m: &Mat, shape: (usize, usize)) -> Result<()> {
    if m.shape() != shape {
        return Err(KsdError::Dimension(format!("{name} has shape {:?}, expected {shape:?}", m.shape())));
    }
    Ok(())
}

impl ScoreModel {
    pub fn new(manifold: Manifold, family: Family) -> Result<Self> {
        let shape = manifold.shape();
        let n = manifold.n();
        let mut v_inv = None;
        match (&manifold, &family) {
            (Manifold::Spd { .. }, Family::Uniform) => {
                return Err(KsdError::Unsupported("no uniform distribution on SPD".into()))
            }
            (_, Family::Uniform) => {}
            (Manifold::Stiefel { .. } | Manifold::Grassmann { .. }, Family::MatrixFisher { f }) => {
                expect_shape("F", f, shape)?
            }
            (Manifold::Stiefel { .. }, Family::MatrixBingham { a }) => expect_shape("A", a, (n, n))?,
            (Manifold::Stiefel { .. }, Family::MatrixFisherBingham { a, f }) => {
                expect_shape("A", a, (n, n))?;
                expect_shape("F", f, shape)?;
            }
            (_, Family::RiemannianGaussian { center, sigma }) => {
                if !(*sigma > 0.0) {
                    return Err(KsdError::InvalidArgument(format!("sigma must be positive, got {sigma}")));
                }
                manifold.check_point(center)?;
            }
            (Manifold::Spd { .. }, Family::Wishart { v, dof }) => {
                expect_shape("V", v, shape)?;
                if !dof.is_finite() {
                    return Err(KsdError::InvalidArgument("dof must be finite".into()));
                }
                v_inv = Some(matalg::spd_inv(v)?);
            }
            (m, f) => {
                return Err(KsdError::Unsupported(format!("{} on {}", f.label(), m.name())));
            }
        }
        Ok(Self { manifold, family, v_inv })
    }

    /// Wishart model matching draws of a standard Wishart with `dof` degrees
    /// of freedom and scale `v`, whose Lebesgue density carries
    /// `|X|^{(dof - N - 1)/2}`.
    pub fn wishart_from_standard(v: Mat, dof: f64) -> Result<Self> {
        let n = v.nrows();
        Self::new(Manifold::spd(n)?, Family::Wishart { v, dof: dof + n as f64 - 1.0 })
    }

    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Euclidean gradient of the unnormalized log density at `x`.
    pub fn score(&self, x: &Mat) -> Result<Mat> {
        let (p, q) = self.manifold.shape();
        Ok(match &self.family {
            Family::Uniform => Mat::zeros(p, q),
            Family::MatrixFisher { f } => match self.manifold {
                Manifold::Grassmann { .. } => matalg::sym(f),
                _ => f.clone(),
            },
            Family::MatrixBingham { a } => (a + a.transpose()) * x,
            Family::MatrixFisherBingham { a, f } => (a + a.transpose()) * x + f,
            Family::RiemannianGaussian { center, sigma } => match self.manifold {
                Manifold::Stiefel { .. } => stiefel::rg_score(x, center, *sigma)?,
                Manifold::Grassmann { .. } => grassmann::rg_score(x, center, *sigma)?,
                Manifold::Spd { .. } => spd::rg_score(x, center, *sigma)?,
            },
            Family::Wishart { dof, .. } => {
                let n = self.manifold.n() as f64;
                let v_inv = self.v_inv.as_ref().expect("set for wishart");
                matalg::spd_inv(x)? * (0.5 * (dof - n + 1.0)) - v_inv * 0.5
            }
        })
    }

    pub fn unnorm_logpdf(&self, x: &Mat) -> Result<f64> {
        Ok(match &self.family {
            Family::Uniform => 0.0,
            Family::MatrixFisher { f } => matalg::frobenius(f, x),
            Family::MatrixBingham { a } => (x.transpose() * a * x).trace(),
            Family::MatrixFisherBingham { a, f } => (x.transpose() * a * x).trace() + matalg::frobenius(f, x),
            Family::RiemannianGaussian { center, sigma } => {
                -self.manifold.dist2(x, center)? / (2.0 * sigma * sigma)
            }
            Family::Wishart { dof, .. } => {
                let n = self.manifold.n() as f64;
                matalg::check_spd(x)?;
                let logdet = matalg::sym_eigen(x).eigenvalues.iter().map(|l| l.ln()).sum::<f64>();
                let v_inv = self.v_inv.as_ref().expect("set for wishart");
                0.5 * (dof - n + 1.0) * logdet - 0.5 * matalg::frobenius(v_inv, x)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpFamilyKind {
    MatrixFisher,
    MatrixBingham,
    MatrixFisherBingham,
}

impl ExpFamilyKind {
    pub fn label(self) -> &'static str {
        match self {
            ExpFamilyKind::MatrixFisher => "matrix_fisher",
            ExpFamilyKind::MatrixBingham => "matrix_bingham",
            ExpFamilyKind::MatrixFisherBingham => "matrix_fisher_bingham",
        }
    }
}

/// Exponential family `p_theta ∝ exp(theta . zeta(X) + eta(X))`, with its
/// parameter packed as column-major `vec` blocks (`vec(A)` before `vec(F)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExponentialFamily {
    manifold: Manifold,
    kind: ExpFamilyKind,
}

impl ExponentialFamily {
    pub fn new(manifold: Manifold, kind: ExpFamilyKind) -> Result<Self> {
        match (manifold, kind) {
            (Manifold::Stiefel { .. }, _) | (Manifold::Grassmann { .. }, ExpFamilyKind::MatrixFisher) => {
                Ok(Self { manifold, kind })
            }
            _ => Err(KsdError::Unsupported(format!("{kind:?} exponential family on {}", manifold.name()))),
        }
    }

    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn kind(&self) -> ExpFamilyKind {
        self.kind
    }

    fn fisher_len(&self) -> usize {
        let (p, q) = self.manifold.shape();
        p * q
    }

    pub fn dim(&self) -> usize {
        let n = self.manifold.n();
        match self.kind {
            ExpFamilyKind::MatrixFisher => self.fisher_len(),
            ExpFamilyKind::MatrixBingham => n * n,
            ExpFamilyKind::MatrixFisherBingham => n * n + self.fisher_len(),
        }
    }

    /// Euclidean gradients of the sufficient statistics at `x`, one per
    /// parameter coordinate.
    pub fn grad_components(&self, x: &Mat) -> Vec<Mat> {
        let n = self.manifold.n();
        let (p, q) = self.manifold.shape();
        let fisher = || (0..p * q).map(move |k| matalg::unit(p, q, k % p, k / p));
        let bingham = || {
            (0..n * n).map(move |k| {
                let (i, j) = (k % n, k / n);
                (matalg::unit(n, n, i, j) + matalg::unit(n, n, j, i)) * x
            })
        };
        match self.kind {
            ExpFamilyKind::MatrixFisher => fisher().collect(),
            ExpFamilyKind::MatrixBingham => bingham().collect(),
            ExpFamilyKind::MatrixFisherBingham => bingham().chain(fisher()).collect(),
        }
    }

    /// Euclidean gradient of the base measure term (zero for these families).
    pub fn grad_base(&self, _x: &Mat) -> Mat {
        let (p, q) = self.manifold.shape();
        Mat::zeros(p, q)
    }

    pub fn family(&self, theta: &[f64]) -> Result<Family> {
        if theta.len() != self.dim() {
            return Err(KsdError::Dimension(format!(
                "theta has length {}, family needs {}",
                theta.len(),
                self.dim()
            )));
        }
        let n = self.manifold.n();
        let (p, q) = self.manifold.shape();
        Ok(match self.kind {
            ExpFamilyKind::MatrixFisher => Family::MatrixFisher { f: matalg::unvec(theta, p, q)? },
            ExpFamilyKind::MatrixBingham => Family::MatrixBingham { a: matalg::unvec(theta, n, n)? },
            ExpFamilyKind::MatrixFisherBingham => Family::MatrixFisherBingham {
                a: matalg::unvec(&theta[..n * n], n, n)?,
                f: matalg::unvec(&theta[n * n..], p, q)?,
            },
        })
    }

    pub fn model(&self, theta: &[f64]) -> Result<ScoreModel> {
        ScoreModel::new(self.manifold, self.family(theta)?)
    }

    /// Parameter vector of a family member, the inverse of [`Self::family`].
    pub fn pack(&self, family: &Family) -> Result<Vec<f64>> {
        let v = |m: &Mat| m.as_slice().to_vec();
        match (self.kind, family) {
            (ExpFamilyKind::MatrixFisher, Family::MatrixFisher { f }) => Ok(v(f)),
            (ExpFamilyKind::MatrixBingham, Family::MatrixBingham { a }) => Ok(v(a)),
            (ExpFamilyKind::MatrixFisherBingham, Family::MatrixFisherBingham { a, f }) => {
                Ok(v(a).into_iter().chain(v(f)).collect())
            }
            (k, f) => Err(KsdError::InvalidArgument(format!("{} is not a member of {k:?}", f.label()))),
        }
    }
}
