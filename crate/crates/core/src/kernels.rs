//! Smoothing kernels and the convolution-smoothed check loss.
//!
//! Every kernel here is a symmetric probability density `K` on the real line.
//! For a bandwidth `h > 0` the smoothed check loss is the convolution
//!
//! ```text
//! l_h(u) = (rho_tau * K_h)(u) = ∫ rho_tau(v) K_h(v - u) dv,   K_h(u) = K(u / h) / h
//! ```
//!
//! and its derivative is `l_h'(u) = tau - Kbar(-u / h)` where `Kbar` is the
//! integrated kernel. All five families have elementary closed forms for
//! `K`, `Kbar` and `l_h`, implemented below behind the [`Kernel`] trait.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Identifier of a smoothing kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelId {
    Uniform,
    Gaussian,
    Laplacian,
    Logistic,
    Epanechnikov,
}

impl KernelId {
    pub const ALL: [KernelId; 5] = [
        KernelId::Uniform,
        KernelId::Gaussian,
        KernelId::Laplacian,
        KernelId::Logistic,
        KernelId::Epanechnikov,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KernelId::Uniform => "uniform",
            KernelId::Gaussian => "gaussian",
            KernelId::Laplacian => "laplacian",
            KernelId::Logistic => "logistic",
            KernelId::Epanechnikov => "epanechnikov",
        }
    }

    /// The kernel implementation registered for this identifier.
    pub fn kernel(self) -> &'static dyn Kernel {
        match self {
            KernelId::Uniform => &Uniform,
            KernelId::Gaussian => &Gaussian,
            KernelId::Laplacian => &Laplacian,
            KernelId::Logistic => &Logistic,
            KernelId::Epanechnikov => &Epanechnikov,
        }
    }
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelId::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown kernel '{s}' (expected one of uniform, gaussian, laplacian, logistic, epanechnikov)"
                ))
            })
    }
}

/// A symmetric smoothing kernel with closed-form density, integrated kernel
/// and smoothed check loss.
pub trait Kernel: Send + Sync {
    fn id(&self) -> KernelId;

    /// Density `K(u)`.
    fn density(&self, u: f64) -> f64;

    /// Integrated kernel `Kbar(u) = ∫_{-∞}^u K(t) dt`.
    fn cdf(&self, u: f64) -> f64;

    /// Smoothed check loss `l_h(u)` at quantile level `tau` and bandwidth `h`.
    fn smoothed_loss(&self, tau: f64, h: f64, u: f64) -> f64;

    /// Half-width of the support when it is compact.
    fn support_radius(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Uniform;
#[derive(Debug, Clone, Copy)]
pub struct Gaussian;
#[derive(Debug, Clone, Copy)]
pub struct Laplacian;
#[derive(Debug, Clone, Copy)]
pub struct Logistic;
#[derive(Debug, Clone, Copy)]
pub struct Epanechnikov;

impl Kernel for Uniform {
    fn id(&self) -> KernelId {
        KernelId::Uniform
    }

    fn density(&self, u: f64) -> f64 {
        if u.abs() <= 1.0 {
            0.5
        } else {
            0.0
        }
    }

    fn cdf(&self, u: f64) -> f64 {
        (0.5 * (u + 1.0)).clamp(0.0, 1.0)
    }

    fn smoothed_loss(&self, tau: f64, h: f64, u: f64) -> f64 {
        // (h/2) U(u/h) + (tau - 1/2) u with the Huber-type U
        let v = u / h;
        let huber = if v.abs() <= 1.0 {
            0.5 * v * v + 0.5
        } else {
            v.abs()
        };
        0.5 * h * huber + (tau - 0.5) * u
    }

    fn support_radius(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// Standard normal CDF through the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

impl Kernel for Gaussian {
    fn id(&self) -> KernelId {
        KernelId::Gaussian
    }

    fn density(&self, u: f64) -> f64 {
        normal_pdf(u)
    }

    fn cdf(&self, u: f64) -> f64 {
        normal_cdf(u)
    }

    fn smoothed_loss(&self, tau: f64, h: f64, u: f64) -> f64 {
        // (h/2) G(u/h) + (tau - 1/2) u, G the folded-normal mean
        let v = u / h;
        let g = (2.0 / PI).sqrt() * (-0.5 * v * v).exp() + v * (1.0 - 2.0 * normal_cdf(-v));
        0.5 * h * g + (tau - 0.5) * u
    }
}

impl Kernel for Laplacian {
    fn id(&self) -> KernelId {
        KernelId::Laplacian
    }

    fn density(&self, u: f64) -> f64 {
        0.5 * (-u.abs()).exp()
    }

    fn cdf(&self, u: f64) -> f64 {
        if u < 0.0 {
            0.5 * u.exp()
        } else {
            1.0 - 0.5 * (-u).exp()
        }
    }

    fn smoothed_loss(&self, tau: f64, h: f64, u: f64) -> f64 {
        check(tau, u) + 0.5 * h * (-u.abs() / h).exp()
    }
}

impl Kernel for Logistic {
    fn id(&self) -> KernelId {
        KernelId::Logistic
    }

    fn density(&self, u: f64) -> f64 {
        let e = (-u.abs()).exp();
        e / ((1.0 + e) * (1.0 + e))
    }

    fn cdf(&self, u: f64) -> f64 {
        if u >= 0.0 {
            1.0 / (1.0 + (-u).exp())
        } else {
            let e = u.exp();
            e / (1.0 + e)
        }
    }

    fn smoothed_loss(&self, tau: f64, h: f64, u: f64) -> f64 {
        // tau u + h log(1 + e^{-u/h}); the negative branch is rewritten so the
        // exponential never overflows.
        let v = u / h;
        if v < -30.0 {
            tau * u - u + h * v.exp().ln_1p()
        } else {
            tau * u + h * (-v).exp().ln_1p()
        }
    }
}

impl Kernel for Epanechnikov {
    fn id(&self) -> KernelId {
        KernelId::Epanechnikov
    }

    fn density(&self, u: f64) -> f64 {
        if u.abs() <= 1.0 {
            0.75 * (1.0 - u * u)
        } else {
            0.0
        }
    }

    fn cdf(&self, u: f64) -> f64 {
        let v = u.clamp(-1.0, 1.0);
        (0.5 + 0.75 * v - 0.25 * v * v * v).clamp(0.0, 1.0)
    }

    fn smoothed_loss(&self, tau: f64, h: f64, u: f64) -> f64 {
        let v = u / h;
        let e = if v.abs() <= 1.0 {
            let v2 = v * v;
            0.75 * v2 - 0.125 * v2 * v2 + 0.375
        } else {
            v.abs()
        };
        0.5 * h * e + (tau - 0.5) * u
    }

    fn support_radius(&self) -> Option<f64> {
        Some(1.0)
    }
}

fn check(tau: f64, u: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

/// Quantile level, bandwidth and kernel of a smoothed check loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothSpec {
    pub tau: f64,
    pub h: f64,
    pub kernel: KernelId,
}

impl SmoothSpec {
    pub fn new(tau: f64, h: f64, kernel: KernelId) -> Result<Self> {
        let spec = SmoothSpec { tau, h, kernel };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tau must lie in the open interval (0, 1), got {}",
                self.tau
            )));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth h must be a positive finite number, got {}",
                self.h
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn loss(&self, u: f64) -> f64 {
        self.kernel.kernel().smoothed_loss(self.tau, self.h, u)
    }

    #[inline]
    pub fn loss_derivative(&self, u: f64) -> f64 {
        self.tau - self.kernel.kernel().cdf(-u / self.h)
    }

    /// `K_h(u) = K(u/h)/h`, the second derivative of the smoothed loss.
    #[inline]
    pub fn scaled_density(&self, u: f64) -> f64 {
        self.kernel.kernel().density(u / self.h) / self.h
    }
}

pub fn kernel_density(kernel: KernelId, u: f64) -> f64 {
    kernel.kernel().density(u)
}

pub fn kernel_cdf(kernel: KernelId, u: f64) -> f64 {
    kernel.kernel().cdf(u)
}

pub fn smoothed_loss(spec: &SmoothSpec, u: f64) -> f64 {
    spec.loss(u)
}

pub fn smoothed_loss_derivative(spec: &SmoothSpec, u: f64) -> f64 {
    spec.loss_derivative(u)
}
