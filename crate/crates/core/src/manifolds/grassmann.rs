//! Grassmann geometry in the projector representation. Tangent vectors at a
//! projector `P = U U^T` are symmetric `D = Δ U^T + U Δ^T` with `U^T Δ = 0`,
//! and the metric is `tr(D1 D2) / 2`, so that `|D|^2 = |Δ|_F^2`.

use crate::error::{KsdError, Result};
use crate::matalg::{self, Mat};

/// Orthonormal basis of the range of a rank-`r` projector.
pub fn basis(p: &Mat, r: usize) -> Mat {
    let eig = matalg::sym_eigen(p);
    let mut idx: Vec<usize> = (0..p.nrows()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let cols: Vec<_> = idx[..r].iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect();
    Mat::from_columns(&cols)
}

/// Horizontal lift of a projector tangent `D` to the basis `u`.
fn lift(d: &Mat, u: &Mat) -> Mat {
    d * u
}

pub fn exp(p: &Mat, d: &Mat, r: usize) -> Result<Mat> {
    if p.shape() != d.shape() {
        return Err(KsdError::Dimension("tangent shape differs from point".into()));
    }
    let u = basis(p, r);
    let delta = lift(&matalg::sym(d), &u);
    let svd = delta.svd(true, true);
    let qh = svd.u.unwrap();
    let rh = svd.v_t.unwrap().transpose();
    let s = &svd.singular_values;
    let cos = Mat::from_diagonal(&s.map(f64::cos));
    let sin = Mat::from_diagonal(&s.map(f64::sin));
    let u1 = &u * &rh * cos * rh.transpose() + qh * sin * rh.transpose();
    Ok(&u1 * u1.transpose())
}

/// Horizontal log at basis `u` towards the subspace spanned by `ut`.
fn log_basis(u: &Mat, ut: &Mat) -> Result<Mat> {
    let svd = (ut.transpose() * u).svd(true, true);
    let smin = svd.singular_values.min();
    if smin < 1e-12 {
        return Err(KsdError::CutLocus(format!(
            "a principal angle is pi/2 (cos = {smin:.2e})"
        )));
    }
    let aligned = ut * svd.u.unwrap() * svd.v_t.unwrap();
    let resid = &aligned - u * (u.transpose() * &aligned);
    let svd2 = resid.svd(true, true);
    let sigma = svd2.singular_values.map(|s| s.min(1.0).asin());
    Ok(svd2.u.unwrap() * Mat::from_diagonal(&sigma) * svd2.v_t.unwrap())
}

pub fn log(p: &Mat, q: &Mat, r: usize) -> Result<Mat> {
    if p.shape() != q.shape() {
        return Err(KsdError::Dimension("points differ in shape".into()));
    }
    let u = basis(p, r);
    let delta = log_basis(&u, &basis(q, r))?;
    let du = &delta * u.transpose();
    Ok(&du + du.transpose())
}

/// Squared geodesic distance: the sum of squared principal angles.
pub fn dist2(p: &Mat, q: &Mat) -> Result<f64> {
    let r = p.trace().round() as usize;
    let u = basis(p, r);
    let ut = basis(q, r);
    let s = (ut.transpose() * &u).singular_values();
    Ok(s.iter().map(|c| c.clamp(-1.0, 1.0).acos().powi(2)).sum())
}

/// Euclidean representative of the Riemannian Gaussian score.
pub fn rg_score(p: &Mat, center: &Mat, sigma: f64) -> Result<Mat> {
    let r = p.trace().round() as usize;
    Ok(log(p, center, r)? / (2.0 * sigma * sigma))
}
