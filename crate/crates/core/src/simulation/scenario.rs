use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::kernels::normal_cdf;
use crate::objective::Dataset;

/// Lag-one correlation of the AR(1) design.
pub const DESIGN_RHO: f64 = 0.7;

/// Leading block of the true coefficient vector (slopes only).
pub const SIGNAL: [f64; 19] = [
    1.8, 0.0, 1.6, 0.0, 1.4, 0.0, 1.2, 0.0, 1.0, 0.0, -1.0, 0.0, -1.2, 0.0, -1.4, 0.0, -1.6, 0.0, -1.8,
];

const MIXTURE_WEIGHT: f64 = 0.3;
const MIXTURE_SD: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum NoiseFamily {
    Gaussian,
    /// Student t with `df` degrees of freedom (need not be an integer).
    StudentT { df: f64 },
    Cauchy,
    /// `0.7 N(0, 1) + 0.3 N(0, 25)`.
    Mixture,
}

impl NoiseFamily {
    pub const T15: NoiseFamily = NoiseFamily::StudentT { df: 1.5 };

    pub fn validate(&self) -> Result<()> {
        if let NoiseFamily::StudentT { df } = *self {
            if !(df > 0.0 && df.is_finite()) {
                return Err(Error::InvalidParameter(format!("t degrees of freedom must be positive, got {df}")));
            }
        }
        Ok(())
    }

    /// Quantile function of the noise law.
    pub fn quantile(&self, tau: f64) -> Result<f64> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidParameter(format!("tau must lie in (0, 1), got {tau}")));
        }
        self.validate()?;
        if tau == 0.5 {
            return Ok(0.0);
        }
        Ok(match *self {
            NoiseFamily::Gaussian => Normal::standard().inverse_cdf(tau),
            NoiseFamily::StudentT { df } => StudentsT::new(0.0, 1.0, df)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?
                .inverse_cdf(tau),
            NoiseFamily::Cauchy => (std::f64::consts::PI * (tau - 0.5)).tan(),
            NoiseFamily::Mixture => {
                let cdf = |x: f64| {
                    (1.0 - MIXTURE_WEIGHT) * normal_cdf(x) + MIXTURE_WEIGHT * normal_cdf(x / MIXTURE_SD)
                };
                let (mut lo, mut hi) = (-60.0f64, 60.0f64);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if cdf(mid) < tau {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        })
    }

    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseFamily::Gaussian => rng.sample(StandardNormal),
            NoiseFamily::StudentT { df } => {
                let z: f64 = rng.sample(StandardNormal);
                let g = Gamma::new(df / 2.0, 2.0 / df).expect("validated df").sample(rng);
                z / g.sqrt()
            }
            NoiseFamily::Cauchy => Cauchy::new(0.0, 1.0).expect("unit scale").sample(rng),
            NoiseFamily::Mixture => {
                let wide = rng.random_bool(MIXTURE_WEIGHT);
                let z: f64 = rng.sample(StandardNormal);
                if wide {
                    MIXTURE_SD * z
                } else {
                    z
                }
            }
        }
    }
}

impl fmt::Display for NoiseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseFamily::Gaussian => f.write_str("gaussian"),
            NoiseFamily::StudentT { df } => write!(f, "t{df}"),
            NoiseFamily::Cauchy => f.write_str("cauchy"),
            NoiseFamily::Mixture => f.write_str("mixture"),
        }
    }
}

impl FromStr for NoiseFamily {
    type Err = Error;

    /// Accepts `gaussian`, `cauchy`, `mixture`, `t` (1.5 degrees of freedom)
    /// and `t<df>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let fam = match s.as_str() {
            "gaussian" | "normal" => NoiseFamily::Gaussian,
            "cauchy" => NoiseFamily::Cauchy,
            "mixture" => NoiseFamily::Mixture,
            "t" => NoiseFamily::T15,
            other => match other.strip_prefix('t').and_then(|d| d.parse::<f64>().ok()) {
                Some(df) => NoiseFamily::StudentT { df },
                None => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown noise family '{s}' (expected gaussian, t, t<df>, cauchy or mixture)"
                    )))
                }
            },
        };
        fam.validate()?;
        Ok(fam)
    }
}

/// I.i.d. noise draws from a dedicated stream.
pub fn sample_noise(family: NoiseFamily, n: usize, seed: u64) -> Result<Array1<f64>> {
    family.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Array1::from_shape_fn(n, |_| family.draw(&mut rng)))
}

/// One synthetic data-generating setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n: usize,
    /// Number of features, excluding the intercept.
    pub p: usize,
    pub noise: NoiseFamily,
    pub tau: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn new(n: usize, p: usize, noise: NoiseFamily, tau: f64, seed: u64) -> Result<Self> {
        let s = Scenario { n, p, noise, tau, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < SIGNAL.len() {
            return Err(Error::InvalidParameter(format!(
                "scenario needs p >= {}, got {}",
                SIGNAL.len(),
                self.p
            )));
        }
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!("scenario needs n >= 2, got {}", self.n)));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidParameter(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        self.noise.validate()
    }

    pub fn with_seed(&self, seed: u64) -> Scenario {
        Scenario { seed, ..*self }
    }

    /// Generating coefficients with a leading zero intercept; length `p + 1`.
    pub fn beta_star(&self) -> Array1<f64> {
        beta_star(self.p)
    }

    /// The tau-th conditional quantile coefficients: `beta_star` with the
    /// intercept moved to the noise quantile.
    pub fn reference_beta(&self) -> Result<Array1<f64>> {
        let mut b = self.beta_star();
        b[0] = self.noise.quantile(self.tau)?;
        Ok(b)
    }

    /// Indices of the nonzero reference coefficients, intercept included.
    pub fn true_support(&self) -> Vec<usize> {
        std::iter::once(0)
            .chain((1..=self.p).filter(|&j| j <= SIGNAL.len() && SIGNAL[j - 1] != 0.0))
            .collect()
    }
}

pub fn beta_star(p: usize) -> Array1<f64> {
    Array1::from_shape_fn(p + 1, |j| if j >= 1 && j <= SIGNAL.len() { SIGNAL[j - 1] } else { 0.0 })
}

/// Rows of `N_p(0, Sigma)` with `Sigma_jk = 0.7^{|j-k|}`, via the AR(1)
/// recursion `z_j = 0.7 z_{j-1} + sqrt(1 - 0.49) g_j`.
pub fn ar1_design<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Array2<f64> {
    let innov = (1.0 - DESIGN_RHO * DESIGN_RHO).sqrt();
    let mut x = Array2::zeros((n, p));
    for i in 0..n {
        let mut z: f64 = rng.sample(StandardNormal);
        x[[i, 0]] = z;
        for j in 1..p {
            let g: f64 = rng.sample(StandardNormal);
            z = DESIGN_RHO * z + innov * g;
            x[[i, j]] = z;
        }
    }
    x
}

/// Draws `(X, y)` with `y = X beta* + eps` and prepends an intercept column.
/// Returns the dataset and the generating coefficients (intercept 0).
pub fn generate(scenario: &Scenario) -> Result<(Dataset, Array1<f64>)> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let feats = ar1_design(scenario.n, scenario.p, &mut rng);
    let beta = scenario.beta_star();
    let slopes = beta.slice(ndarray::s![1..]);
    let signal = feats.dot(&slopes);
    let y = Array1::from_shape_fn(scenario.n, |i| signal[i] + scenario.noise.draw(&mut rng));
    Ok((Dataset::with_intercept(&feats, y)?, beta))
}
