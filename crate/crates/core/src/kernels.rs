//! Radial kernels `k(X, Y) = exp(-psi(|X - Y|_F^2))` on the ambient space.

use serde::{Deserialize, Serialize};

use crate::error::{KsdError, Result};
use crate::matalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadialKernel {
    /// `psi(t) = tau t / 2`.
    Gaussian {
        #[serde(default = "one")]
        tau: f64,
    },
    /// `psi(t) = gamma log(beta + t)`.
    InverseQuadratic {
        #[serde(default = "one")]
        beta: f64,
        #[serde(default = "half")]
        gamma: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

impl Default for RadialKernel {
    fn default() -> Self {
        RadialKernel::Gaussian { tau: 1.0 }
    }
}

impl RadialKernel {
    pub fn gaussian(tau: f64) -> Result<Self> {
        RadialKernel::Gaussian { tau }.checked()
    }

    pub fn inverse_quadratic(beta: f64, gamma: f64) -> Result<Self> {
        RadialKernel::InverseQuadratic { beta, gamma }.checked()
    }

    pub fn checked(self) -> Result<Self> {
        match self {
            RadialKernel::Gaussian { tau } if !(tau > 0.0 && tau.is_finite()) => {
                Err(KsdError::InvalidArgument(format!("gaussian tau must be positive, got {tau}")))
            }
            RadialKernel::InverseQuadratic { beta, gamma }
                if !(beta > 0.0 && gamma > 0.0 && beta.is_finite() && gamma.is_finite()) =>
            {
                Err(KsdError::InvalidArgument(format!(
                    "inverse quadratic needs beta, gamma > 0, got beta={beta}, gamma={gamma}"
                )))
            }
            k => Ok(k),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            RadialKernel::Gaussian { tau } => format!("gaussian(tau={tau})"),
            RadialKernel::InverseQuadratic { beta, gamma } => format!("iq(beta={beta},gamma={gamma})"),
        }
    }

    pub fn psi(&self, t: f64) -> f64 {
        match *self {
            RadialKernel::Gaussian { tau } => 0.5 * tau * t,
            RadialKernel::InverseQuadratic { beta, gamma } => gamma * (beta + t).ln(),
        }
    }

    pub fn dpsi(&self, t: f64) -> f64 {
        match *self {
            RadialKernel::Gaussian { tau } => 0.5 * tau,
            RadialKernel::InverseQuadratic { beta, gamma } => gamma / (beta + t),
        }
    }

    pub fn d2psi(&self, t: f64) -> f64 {
        match *self {
            RadialKernel::Gaussian { .. } => 0.0,
            RadialKernel::InverseQuadratic { beta, gamma } => -gamma / ((beta + t) * (beta + t)),
        }
    }

    pub fn eval(&self, x: &Mat, y: &Mat) -> f64 {
        (-self.psi((x - y).norm_squared())).exp()
    }

    pub fn log_eval(&self, x: &Mat, y: &Mat) -> f64 {
        -self.psi((x - y).norm_squared())
    }

    /// Euclidean gradient of `log k(., Y)` at `X`: `2 psi'(|X-Y|^2) (Y - X)`.
    pub fn grad_log(&self, x: &Mat, y: &Mat) -> Mat {
        let t = (x - y).norm_squared();
        (y - x) * (2.0 * self.dpsi(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for k in [RadialKernel::gaussian(1.3).unwrap(), RadialKernel::inverse_quadratic(0.7, 0.5).unwrap()] {
            for &t in &[0.0, 0.4, 2.5] {
                assert_abs_diff_eq!(k.dpsi(t), (k.psi(t + h) - k.psi(t - h)) / (2.0 * h), epsilon = 1e-8);
                assert_abs_diff_eq!(k.d2psi(t), (k.dpsi(t + h) - k.dpsi(t - h)) / (2.0 * h), epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn grad_log_matches_finite_differences() {
        let k = RadialKernel::inverse_quadratic(1.0, 0.5).unwrap();
        let x = Mat::from_row_slice(2, 2, &[0.3, -0.2, 1.0, 0.5]);
        let y = Mat::from_row_slice(2, 2, &[-0.1, 0.4, 0.2, 0.9]);
        let g = k.grad_log(&x, &y);
        let h = 1e-6;
        for idx in 0..4 {
            let mut xp = x.clone();
            xp[idx] += h;
            let mut xm = x.clone();
            xm[idx] -= h;
            let fd = (k.log_eval(&xp, &y) - k.log_eval(&xm, &y)) / (2.0 * h);
            assert_abs_diff_eq!(g[idx], fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn kernel_at_zero_distance() {
        let x = Mat::identity(2, 2);
        assert_eq!(RadialKernel::gaussian(2.0).unwrap().eval(&x, &x), 1.0);
        let iq = RadialKernel::inverse_quadratic(4.0, 0.5).unwrap();
        assert_abs_diff_eq!(iq.eval(&x, &x), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(RadialKernel::gaussian(0.0).is_err());
        assert!(RadialKernel::inverse_quadratic(-1.0, 0.5).is_err());
        let k: RadialKernel = serde_json::from_str(r#"{"family":"inverse_quadratic"}"#).unwrap();
        assert_eq!(k, RadialKernel::InverseQuadratic { beta: 1.0, gamma: 0.5 });
    }
}
