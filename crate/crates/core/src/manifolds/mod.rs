//! Stiefel, Grassmann and SPD manifolds: membership, killing fields, group
//! actions and Riemannian exp/log.
//!
//! Stiefel points are `N x r` matrices with orthonormal columns. Grassmann
//! points are rank-`r` orthogonal projectors of size `N x N`. SPD points are
//! symmetric positive definite `N x N` matrices.

pub mod grassmann;
pub mod spd;
pub mod stiefel;

use serde::{Deserialize, Serialize};

use crate::error::{KsdError, Result};
use crate::matalg::{self, Mat};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Tolerance used when checking that a matrix lies on a manifold.
pub const MEMBERSHIP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Manifold {
    Stiefel {
        #[serde(rename = "N")]
        n: usize,
        r: usize,
    },
    Grassmann {
        #[serde(rename = "N")]
        n: usize,
        r: usize,
    },
    Spd {
        #[serde(rename = "N")]
        n: usize,
    },
}

impl Manifold {
    pub fn stiefel(n: usize, r: usize) -> Result<Self> {
        if r == 0 || r > n {
            return Err(KsdError::InvalidArgument(format!("Stiefel V_{r}({n}) needs 1 <= r <= N")));
        }
        Ok(Manifold::Stiefel { n, r })
    }

    pub fn grassmann(n: usize, r: usize) -> Result<Self> {
        if r == 0 || r >= n {
            return Err(KsdError::InvalidArgument(format!("Grassmann G_{r}({n}) needs 1 <= r < N")));
        }
        Ok(Manifold::Grassmann { n, r })
    }

    pub fn spd(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(KsdError::InvalidArgument("SPD needs N >= 1".into()));
        }
        Ok(Manifold::Spd { n })
    }

    /// Re-run the constructor checks, e.g. after deserializing.
    pub fn checked(self) -> Result<Self> {
        match self {
            Manifold::Stiefel { n, r } => Self::stiefel(n, r),
            Manifold::Grassmann { n, r } => Self::grassmann(n, r),
            Manifold::Spd { n } => Self::spd(n),
        }
    }

    pub fn n(&self) -> usize {
        match *self {
            Manifold::Stiefel { n, .. } | Manifold::Grassmann { n, .. } | Manifold::Spd { n } => n,
        }
    }

    pub fn name(&self) -> String {
        match *self {
            Manifold::Stiefel { n, r } => format!("stiefel V_{r}({n})"),
            Manifold::Grassmann { n, r } => format!("grassmann G_{r}({n})"),
            Manifold::Spd { n } => format!("spd P({n})"),
        }
    }

    /// Shape of the matrix representing a point.
    pub fn shape(&self) -> (usize, usize) {
        match *self {
            Manifold::Stiefel { n, r } => (n, r),
            Manifold::Grassmann { n, .. } | Manifold::Spd { n } => (n, n),
        }
    }

    /// Number of killing fields in the basis.
    pub fn killing_count(&self) -> usize {
        match *self {
            Manifold::Stiefel { n, .. } | Manifold::Grassmann { n, .. } => n * (n - 1) / 2,
            Manifold::Spd { n } => n * n,
        }
    }

    /// Index pair `(i, j)` behind killing field `l`. For Stiefel and Grassmann
    /// pairs `i < j` are enumerated lexicographically; for SPD `l = i * N + j`.
    pub fn killing_index(&self, l: usize) -> Result<(usize, usize)> {
        if l >= self.killing_count() {
            return Err(KsdError::IndexOutOfRange(format!(
                "killing field {l} of {} on {}",
                self.killing_count(),
                self.name()
            )));
        }
        let n = self.n();
        match self {
            Manifold::Spd { .. } => Ok((l / n, l % n)),
            _ => {
                let mut k = l;
                for i in 0..n {
                    let row = n - 1 - i;
                    if k < row {
                        return Ok((i, i + 1 + k));
                    }
                    k -= row;
                }
                unreachable!("index checked above")
            }
        }
    }

    /// Lie algebra element generating killing field `l`.
    pub fn killing_generator(&self, l: usize) -> Result<Mat> {
        let (i, j) = self.killing_index(l)?;
        let n = self.n();
        Ok(match self {
            Manifold::Spd { .. } => matalg::unit(n, n, i, j),
            _ => (matalg::unit(n, n, i, j) - matalg::unit(n, n, j, i)) * FRAC_1_SQRT_2,
        })
    }

    /// Value of killing field `l` at `x`.
    pub fn killing_tangent(&self, l: usize, x: &Mat) -> Result<Mat> {
        let e = self.killing_generator(l)?;
        Ok(match self {
            Manifold::Stiefel { .. } => &e * x,
            Manifold::Grassmann { .. } => &e * x - x * &e,
            Manifold::Spd { .. } => e.transpose() * x + x * &e,
        })
    }

    /// Point reached at time `t` along the group orbit generating field `l`.
    pub fn act(&self, l: usize, t: f64, x: &Mat) -> Result<Mat> {
        let e = self.killing_generator(l)? * t;
        let g = matalg::expm(&e);
        Ok(match self {
            Manifold::Stiefel { .. } => &g * x,
            Manifold::Grassmann { .. } => &g * x * g.transpose(),
            Manifold::Spd { .. } => g.transpose() * x * &g,
        })
    }

    /// Derivative along killing field `l` of a function with Euclidean
    /// gradient `grad` at `x`.
    pub fn directional_derivative(&self, l: usize, x: &Mat, grad: &Mat) -> Result<f64> {
        Ok(matalg::frobenius(grad, &self.killing_tangent(l, x)?))
    }

    /// Central finite difference of `f` along the group orbit of field `l`.
    pub fn directional_derivative_fd(
        &self,
        l: usize,
        x: &Mat,
        h: f64,
        f: impl Fn(&Mat) -> Result<f64>,
    ) -> Result<f64> {
        let fp = f(&self.act(l, h, x)?)?;
        let fm = f(&self.act(l, -h, x)?)?;
        Ok((fp - fm) / (2.0 * h))
    }

    /// Coordinates of the linear form `K -> <grad, K>` in the orthonormal
    /// killing basis, written as a matrix so that the sum over the basis of
    /// products of two such forms is a Frobenius inner product.
    pub fn killing_projection(&self, x: &Mat, grad: &Mat) -> Mat {
        match self {
            Manifold::Stiefel { .. } => matalg::skew(&(grad * x.transpose())),
            Manifold::Grassmann { .. } => matalg::skew(&(matalg::sym(grad) * x)) * 2.0,
            Manifold::Spd { .. } => x * matalg::sym(grad) * 2.0,
        }
    }

    pub fn check_point(&self, x: &Mat) -> Result<()> {
        if x.shape() != self.shape() {
            return Err(KsdError::Dimension(format!(
                "expected {:?} for {}, got {:?}",
                self.shape(),
                self.name(),
                x.shape()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(KsdError::Domain("non-finite entry".into()));
        }
        match *self {
            Manifold::Stiefel { r, .. } => {
                let err = (x.transpose() * x - Mat::identity(r, r)).amax();
                if err > MEMBERSHIP_TOL {
                    return Err(KsdError::Domain(format!("X^T X deviates from I by {err:.2e}")));
                }
            }
            Manifold::Grassmann { r, .. } => {
                let asym = (x - x.transpose()).amax();
                let idem = (x * x - x).amax();
                let tr = (x.trace() - r as f64).abs();
                if asym > MEMBERSHIP_TOL || idem > MEMBERSHIP_TOL || tr > MEMBERSHIP_TOL {
                    return Err(KsdError::Domain(format!(
                        "not a rank-{r} projector (asym {asym:.1e}, idempotency {idem:.1e}, trace {tr:.1e})"
                    )));
                }
            }
            Manifold::Spd { .. } => matalg::check_spd(x)?,
        }
        Ok(())
    }

    /// Squared geodesic distance. Canonical metric on Stiefel, the metric
    /// `tr(D1 D2) / 2` on Grassmann projectors, affine-invariant on SPD.
    pub fn dist2(&self, x: &Mat, y: &Mat) -> Result<f64> {
        match self {
            Manifold::Stiefel { .. } => {
                let d = stiefel::log(x, y)?;
                Ok(stiefel::canonical_inner(x, &d, &d))
            }
            Manifold::Grassmann { .. } => grassmann::dist2(x, y),
            Manifold::Spd { .. } => spd::dist2(x, y),
        }
    }

    pub fn exp(&self, x: &Mat, v: &Mat) -> Result<Mat> {
        match *self {
            Manifold::Stiefel { .. } => stiefel::exp(x, v),
            Manifold::Grassmann { r, .. } => grassmann::exp(x, v, r),
            Manifold::Spd { .. } => spd::exp(x, v),
        }
    }

    pub fn log(&self, x: &Mat, y: &Mat) -> Result<Mat> {
        match *self {
            Manifold::Stiefel { .. } => stiefel::log(x, y),
            Manifold::Grassmann { r, .. } => grassmann::log(x, y, r),
            Manifold::Spd { .. } => spd::log(x, y),
        }
    }

    /// Pull a nearly-on-manifold matrix back onto the manifold.
    pub fn retract(&self, x: &Mat) -> Mat {
        match *self {
            Manifold::Stiefel { .. } => matalg::polar_orthonormal(x),
            Manifold::Grassmann { r, .. } => {
                let u = grassmann::basis(x, r);
                &u * u.transpose()
            }
            Manifold::Spd { .. } => matalg::sym(x),
        }
    }
}

/// A matrix together with the manifold it has been checked to lie on.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint {
    manifold: Manifold,
    value: Mat,
}

impl ManifoldPoint {
    pub fn new(manifold: Manifold, value: Mat) -> Result<Self> {
        manifold.check_point(&value)?;
        Ok(Self { manifold, value })
    }

    pub fn manifold(&self) -> Manifold {
        self.manifold
    }

    pub fn value(&self) -> &Mat {
        &self.value
    }

    pub fn into_value(self) -> Mat {
        self.value
    }
}
