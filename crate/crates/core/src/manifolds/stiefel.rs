//! Stiefel geometry under the canonical metric
//! `<D1, D2>_X = tr(D1^T (I - X X^T / 2) D2)`.

use crate::error::{KsdError, Result};
use crate::matalg::{self, Mat};

pub const LOG_TOL: f64 = 1e-13;
pub const LOG_MAX_ITER: usize = 100;

pub fn canonical_inner(x: &Mat, d1: &Mat, d2: &Mat) -> f64 {
    let n = x.nrows();
    let w = Mat::identity(n, n) - x * x.transpose() * 0.5;
    matalg::frobenius(d1, &(w * d2))
}

fn pad_rows(a: &Mat, rows: usize) -> Mat {
    let mut out = Mat::zeros(rows, a.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out
}

/// Run `f` on copies zero-padded to at least `2r` rows and truncate the
/// result. The padded copy of `V_r(N)` sits totally geodesically inside
/// `V_r(2r)`, so exp and log agree with the unpadded ones.
fn with_padding(x: &Mat, y: &Mat, f: impl Fn(&Mat, &Mat) -> Result<Mat>) -> Result<Mat> {
    let (n, r) = x.shape();
    if n >= 2 * r {
        return f(x, y);
    }
    let out = f(&pad_rows(x, 2 * r), &pad_rows(y, 2 * r))?;
    Ok(out.rows(0, n).into_owned())
}

/// Riemannian exponential at `x` applied to the tangent vector `d`.
pub fn exp(x: &Mat, d: &Mat) -> Result<Mat> {
    if x.shape() != d.shape() {
        return Err(KsdError::Dimension("tangent shape differs from point".into()));
    }
    with_padding(x, d, |x, d| {
        let r = x.ncols();
        let a = x.transpose() * d;
        let k = d - x * &a;
        let qr = k.qr();
        let (q, rr) = (qr.q(), qr.r());
        let mut blk = Mat::zeros(2 * r, 2 * r);
        blk.view_mut((0, 0), (r, r)).copy_from(&matalg::skew(&a));
        blk.view_mut((0, r), (r, r)).copy_from(&(-rr.transpose()));
        blk.view_mut((r, 0), (r, r)).copy_from(&rr);
        let m = matalg::expm(&blk);
        Ok(x * m.view((0, 0), (r, r)) + q * m.view((r, 0), (r, r)))
    })
}

/// Riemannian logarithm: the tangent `D` at `u0` with `exp(u0, D) = u1`.
pub fn log(u0: &Mat, u1: &Mat) -> Result<Mat> {
    log_with(u0, u1, LOG_TOL, LOG_MAX_ITER)
}

pub fn log_with(u0: &Mat, u1: &Mat, tol: f64, max_iter: usize) -> Result<Mat> {
    if u0.shape() != u1.shape() {
        return Err(KsdError::Dimension("points differ in shape".into()));
    }
    with_padding(u0, u1, |u0, u1| {
        let r = u0.ncols();
        let m = u0.transpose() * u1;
        let qr = (u1 - u0 * &m).qr();
        let (q, nn) = (qr.q(), qr.r());

        let mut mn = Mat::zeros(2 * r, r);
        mn.view_mut((0, 0), (r, r)).copy_from(&m);
        mn.view_mut((r, 0), (r, r)).copy_from(&nn);
        // orthonormal complement of the columns of [M; N]
        let proj = Mat::identity(2 * r, 2 * r) - &mn * mn.transpose();
        let eig = matalg::sym_eigen(&proj);
        let cols: Vec<_> = (0..2 * r)
            .filter(|&k| eig.eigenvalues[k] > 0.5)
            .map(|k| eig.eigenvectors.column(k).into_owned())
            .collect();
        if cols.len() != r {
            return Err(KsdError::Domain("points are not orthonormal frames".into()));
        }
        let mut comp = Mat::from_columns(&cols);
        // rotate the completion so its lower block is symmetric positive semidefinite
        let lower = comp.rows(r, r).into_owned();
        let svd = lower.svd(true, true);
        let rot = svd.v_t.unwrap().transpose() * svd.u.unwrap().transpose();
        comp *= rot;

        let mut v = Mat::zeros(2 * r, 2 * r);
        v.view_mut((0, 0), (2 * r, r)).copy_from(&mn);
        v.view_mut((0, r), (2 * r, r)).copy_from(&comp);

        for _ in 0..max_iter {
            let l = matalg::skew(&matalg::logm(&v)?);
            let c = l.view((r, r), (r, r)).into_owned();
            if c.norm() <= tol {
                let a = l.view((0, 0), (r, r)).into_owned();
                let b = l.view((r, 0), (r, r)).into_owned();
                return Ok(u0 * a + &q * b);
            }
            let phi = matalg::expm(&(-c));
            let right = v.columns(r, r) * phi;
            v.columns_mut(r, r).copy_from(&right);
        }
        Err(KsdError::Convergence(format!("Stiefel log after {max_iter} iterations")))
    })
}

/// Euclidean representative of the score of the Riemannian Gaussian
/// `p(X) ∝ exp(-d(X, center)^2 / (2 sigma^2))`.
pub fn rg_score(x: &Mat, center: &Mat, sigma: f64) -> Result<Mat> {
    let n = x.nrows();
    let d = log(x, center)?;
    Ok((Mat::identity(n, n) - x * x.transpose() * 0.5) * d / (sigma * sigma))
}
