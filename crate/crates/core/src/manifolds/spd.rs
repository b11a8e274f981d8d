//! SPD geometry under the affine-invariant metric
//! `<D1, D2>_X = tr(X^{-1} D1 X^{-1} D2)`.

use crate::error::Result;
use crate::matalg::{self, Mat};

pub fn dist2(x: &Mat, y: &Mat) -> Result<f64> {
    let xi = matalg::spd_inv_sqrt(x)?;
    let w = &xi * y * &xi;
    let l = matalg::spd_log(&matalg::sym(&w))?;
    Ok(l.norm_squared())
}

pub fn dist(x: &Mat, y: &Mat) -> Result<f64> {
    Ok(dist2(x, y)?.sqrt())
}

pub fn exp(x: &Mat, v: &Mat) -> Result<Mat> {
    let s = matalg::spd_sqrt(x)?;
    let si = matalg::spd_inv_sqrt(x)?;
    let inner = matalg::sym(&(&si * matalg::sym(v) * &si));
    Ok(matalg::sym(&(&s * matalg::sym_exp(&inner) * &s)))
}

pub fn log(x: &Mat, y: &Mat) -> Result<Mat> {
    let s = matalg::spd_sqrt(x)?;
    let si = matalg::spd_inv_sqrt(x)?;
    let inner = matalg::spd_log(&matalg::sym(&(&si * y * &si)))?;
    Ok(matalg::sym(&(&s * inner * &s)))
}

/// Symmetric Euclidean representative of the Riemannian Gaussian score,
/// `-sigma^-2 C^{-1/2} log(W) W^{-1} C^{-1/2}` with `W = C^{-1/2} X C^{-1/2}`.
pub fn rg_score(x: &Mat, center: &Mat, sigma: f64) -> Result<Mat> {
    matalg::check_spd(x)?;
    let ci = matalg::spd_inv_sqrt(center)?;
    let w = matalg::sym(&(&ci * x * &ci));
    let eig = matalg::sym_eigen(&w);
    let d = eig.eigenvalues.map(|l| l.ln() / l);
    let f = &eig.eigenvectors * Mat::from_diagonal(&d) * eig.eigenvectors.transpose();
    Ok(matalg::sym(&(&ci * f * &ci)) * (-1.0 / (sigma * sigma)))
}
