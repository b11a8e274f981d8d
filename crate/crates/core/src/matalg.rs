//! Dense matrix helpers on top of nalgebra.
//!
//! Vectorization is column-major throughout: `vec(A)` stacks the columns of
//! `A`, which is also nalgebra's storage order.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{KsdError, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub const DEFAULT_PINV_RTOL: f64 = 1e-12;

pub fn frobenius(a: &Mat, b: &Mat) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.dot(b)
}

pub fn vec(a: &Mat) -> Vector {
    Vector::from_column_slice(a.as_slice())
}

pub fn unvec(v: &[f64], rows: usize, cols: usize) -> Result<Mat> {
    if v.len() != rows * cols {
        return Err(KsdError::Dimension(format!(
            "cannot reshape {} entries into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(Mat::from_column_slice(rows, cols, v))
}

pub fn sym(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

pub fn skew(a: &Mat) -> Mat {
    (a - a.transpose()) * 0.5
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// Elementary matrix with a single one at `(i, j)`.
pub fn unit(rows: usize, cols: usize, i: usize, j: usize) -> Mat {
    let mut e = Mat::zeros(rows, cols);
    e[(i, j)] = 1.0;
    e
}

/// The permutation taking `vec(A)` to `vec(A^T)` for `A` of shape `rows x cols`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShuffleMatrix {
    pub rows: usize,
    pub cols: usize,
}

impl ShuffleMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn apply(&self, v: &Vector) -> Result<Vector> {
        if v.len() != self.len() {
            return Err(KsdError::Dimension(format!(
                "shuffle of size {} applied to vector of length {}",
                self.len(),
                v.len()
            )));
        }
        let mut out = Vector::zeros(self.len());
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j + i * self.cols] = v[i + j * self.rows];
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Mat {
        let mut s = Mat::zeros(self.len(), self.len());
        for i in 0..self.rows {
            for j in 0..self.cols {
                s[(j + i * self.cols, i + j * self.rows)] = 1.0;
            }
        }
        s
    }
}

/// Moore-Penrose pseudoinverse. Singular values below `rtol * sigma_max` are
/// treated as zero. Returns the pseudoinverse and the numerical rank.
pub fn pinv(a: &Mat, rtol: f64) -> Result<(Mat, usize)> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(KsdError::InvalidArgument("pinv of non-finite matrix".into()));
    }
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok((Mat::zeros(n, m), 0));
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let smax = svd.singular_values.max();
    let cut = rtol * smax;
    let mut out = Mat::zeros(n, m);
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cut && s > 0.0 {
            rank += 1;
            out += vt.row(k).transpose() * u.column(k).transpose() / s;
        }
    }
    Ok((out, rank))
}

/// Eigen-decomposition of the symmetric part of `a`.
pub fn sym_eigen(a: &Mat) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(sym(a))
}

/// Apply a scalar function to the spectrum of a symmetric matrix.
pub fn sym_fn(a: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let eig = sym_eigen(a);
    let d = eig.eigenvalues.map(f);
    &eig.eigenvectors * Mat::from_diagonal(&d) * eig.eigenvectors.transpose()
}

pub fn check_spd(a: &Mat) -> Result<()> {
    if !a.is_square() {
        return Err(KsdError::Dimension(format!("{:?} is not square", a.shape())));
    }
    let scale = a.amax().max(1.0);
    if (a - a.transpose()).amax() > 1e-10 * scale {
        return Err(KsdError::Domain("matrix is not symmetric".into()));
    }
    let min = sym_eigen(a).eigenvalues.min();
    if min.is_nan() || min <= 0.0 {
        return Err(KsdError::Domain(format!(
            "matrix is not positive definite (min eigenvalue {min:.3e})"
        )));
    }
    Ok(())
}

pub fn spd_log(a: &Mat) -> Result<Mat> {
    check_spd(a)?;
    Ok(sym_fn(a, f64::ln))
}

pub fn spd_sqrt(a: &Mat) -> Result<Mat> {
    check_spd(a)?;
    Ok(sym_fn(a, f64::sqrt))
}

pub fn spd_inv_sqrt(a: &Mat) -> Result<Mat> {
    check_spd(a)?;
    Ok(sym_fn(a, |x| 1.0 / x.sqrt()))
}

pub fn spd_inv(a: &Mat) -> Result<Mat> {
    check_spd(a)?;
    Ok(sym_fn(a, |x| 1.0 / x))
}

pub fn sym_exp(a: &Mat) -> Mat {
    sym_fn(a, f64::exp)
}

pub fn expm(a: &Mat) -> Mat {
    a.clone().exp()
}

const GL_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

fn sqrtm_db(a: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = Mat::identity(n, n);
    for _ in 0..100 {
        let yi = y.clone().try_inverse().ok_or_else(|| {
            KsdError::Convergence("singular iterate in matrix square root".into())
        })?;
        let zi = z.clone().try_inverse().ok_or_else(|| {
            KsdError::Convergence("singular iterate in matrix square root".into())
        })?;
        let y_next = (&y + zi) * 0.5;
        let z_next = (&z + yi) * 0.5;
        let delta = (&y_next - &y).norm();
        y = y_next;
        z = z_next;
        if delta <= 1e-15 * y.norm().max(1.0) {
            return Ok(y);
        }
    }
    Err(KsdError::Convergence("matrix square root".into()))
}

/// Principal matrix logarithm by inverse scaling and squaring. Intended for
/// matrices with no eigenvalues on the closed negative real axis.
pub fn logm(a: &Mat) -> Result<Mat> {
    if !a.is_square() {
        return Err(KsdError::Dimension("logm of non-square matrix".into()));
    }
    let n = a.nrows();
    let id = Mat::identity(n, n);
    let mut x = a.clone();
    let mut k = 0;
    while (&x - &id).norm() > 0.25 {
        if k > 60 {
            return Err(KsdError::Convergence("logm scaling".into()));
        }
        x = sqrtm_db(&x)?;
        k += 1;
    }
    let d = &x - &id;
    let mut out = Mat::zeros(n, n);
    for (node, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
        for t in [0.5 * (1.0 + node), 0.5 * (1.0 - node)] {
            let m = (&id + &d * t)
                .try_inverse()
                .ok_or_else(|| KsdError::Convergence("logm quadrature".into()))?;
            out += (&d * m) * (0.5 * w);
        }
    }
    Ok(out * 2f64.powi(k))
}

/// Orthonormal `n x r` factor with a non-negative diagonal in `R`.
pub fn qr_orthonormal(a: &Mat) -> Mat {
    let qr = a.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols().min(r.nrows()) {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Nearest matrix with orthonormal columns (polar factor).
pub fn polar_orthonormal(a: &Mat) -> Mat {
    let svd = a.clone().svd(true, true);
    svd.u.expect("u requested") * svd.v_t.expect("v_t requested")
}
