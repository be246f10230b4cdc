//! Penalty derivatives and the per-coordinate weights they induce.
//!
//! A penalty `q_lambda(t) = lambda^2 q(t / lambda)` only enters the reweighted
//! procedure through its derivative `q_lambda'(t) = lambda q'(t / lambda)`,
//! which starts at `lambda` for `t = 0` and is nonincreasing on `[0, ∞)`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PenaltyFamily {
    #[serde(rename = "l1")]
    L1,
    #[serde(rename = "scad")]
    Scad,
    #[serde(rename = "mcp")]
    Mcp,
    #[serde(rename = "capped-l1")]
    CappedL1,
}

impl PenaltyFamily {
    pub const ALL: [PenaltyFamily; 4] = [
        PenaltyFamily::L1,
        PenaltyFamily::Scad,
        PenaltyFamily::Mcp,
        PenaltyFamily::CappedL1,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PenaltyFamily::L1 => "l1",
            PenaltyFamily::Scad => "scad",
            PenaltyFamily::Mcp => "mcp",
            PenaltyFamily::CappedL1 => "capped-l1",
        }
    }

    pub fn penalty(self) -> &'static dyn Penalty {
        match self {
            PenaltyFamily::L1 => &L1,
            PenaltyFamily::Scad => &Scad,
            PenaltyFamily::Mcp => &Mcp,
            PenaltyFamily::CappedL1 => &CappedL1,
        }
    }

    pub fn default_a(self) -> f64 {
        self.penalty().default_a()
    }
}

impl fmt::Display for PenaltyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PenaltyFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        PenaltyFamily::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown penalty '{s}' (expected one of l1, scad, mcp, capped-l1)"
                ))
            })
    }
}

/// A folded-concave (or convex) penalty, known through its derivative.
pub trait Penalty: Send + Sync {
    fn family(&self) -> PenaltyFamily;

    fn default_a(&self) -> f64;

    /// Smallest admissible concavity parameter and whether the bound is strict.
    fn a_bound(&self) -> (f64, bool);

    /// `q_lambda'(t)` for `t >= 0`.
    fn derivative(&self, lambda: f64, a: f64, t: f64) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct L1;
#[derive(Debug, Clone, Copy)]
pub struct Scad;
#[derive(Debug, Clone, Copy)]
pub struct Mcp;
#[derive(Debug, Clone, Copy)]
pub struct CappedL1;

impl Penalty for L1 {
    fn family(&self) -> PenaltyFamily {
        PenaltyFamily::L1
    }
    fn default_a(&self) -> f64 {
        1.0
    }
    fn a_bound(&self) -> (f64, bool) {
        (f64::NEG_INFINITY, false)
    }
    fn derivative(&self, lambda: f64, _a: f64, _t: f64) -> f64 {
        lambda
    }
}

impl Penalty for Scad {
    fn family(&self) -> PenaltyFamily {
        PenaltyFamily::Scad
    }
    fn default_a(&self) -> f64 {
        3.7
    }
    fn a_bound(&self) -> (f64, bool) {
        (2.0, true)
    }
    fn derivative(&self, lambda: f64, a: f64, t: f64) -> f64 {
        if t <= lambda {
            lambda
        } else {
            (a * lambda - t).max(0.0) / (a - 1.0)
        }
    }
}

impl Penalty for Mcp {
    fn family(&self) -> PenaltyFamily {
        PenaltyFamily::Mcp
    }
    fn default_a(&self) -> f64 {
        3.0
    }
    fn a_bound(&self) -> (f64, bool) {
        (1.0, false)
    }
    fn derivative(&self, lambda: f64, a: f64, t: f64) -> f64 {
        if t >= a * lambda {
            0.0
        } else {
            lambda - t / a
        }
    }
}

impl Penalty for CappedL1 {
    fn family(&self) -> PenaltyFamily {
        PenaltyFamily::CappedL1
    }
    fn default_a(&self) -> f64 {
        3.0
    }
    fn a_bound(&self) -> (f64, bool) {
        (1.0, false)
    }
    fn derivative(&self, lambda: f64, a: f64, t: f64) -> f64 {
        // closed at the breakpoint
        if t <= 0.5 * a * lambda {
            lambda
        } else {
            0.0
        }
    }
}

/// Penalty family, level, concavity and the coordinates left unpenalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub family: PenaltyFamily,
    pub lambda: f64,
    pub a: f64,
    pub unpenalized: BTreeSet<usize>,
}

impl PenaltySpec {
    /// Family default `a`, intercept (coordinate 0) unpenalized.
    pub fn new(family: PenaltyFamily, lambda: f64) -> Result<Self> {
        Self::with_a(family, lambda, family.default_a())
    }

    pub fn with_a(family: PenaltyFamily, lambda: f64, a: f64) -> Result<Self> {
        let spec = PenaltySpec {
            family,
            lambda,
            a,
            unpenalized: BTreeSet::from([0]),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn unpenalized<I: IntoIterator<Item = usize>>(mut self, idx: I) -> Self {
        self.unpenalized = idx.into_iter().collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive and finite, got {}",
                self.lambda
            )));
        }
        let (bound, strict) = self.family.penalty().a_bound();
        let ok = if strict { self.a > bound } else { self.a >= bound };
        if !ok || !self.a.is_finite() {
            let op = if strict { ">" } else { ">=" };
            return Err(Error::InvalidParameter(format!(
                "{} requires a {op} {bound}, got {}",
                self.family, self.a
            )));
        }
        Ok(())
    }

    pub fn is_penalized(&self, j: usize) -> bool {
        !self.unpenalized.contains(&j)
    }

    pub fn derivative(&self, t: f64) -> Result<f64> {
        penalty_derivative(self, t)
    }
}

/// `q_lambda'(t)`; rejects negative or non-finite `t`.
pub fn penalty_derivative(spec: &PenaltySpec, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "penalty derivative needs t >= 0, got {t}"
        )));
    }
    Ok(spec.family.penalty().derivative(spec.lambda, spec.a, t))
}

/// Per-coordinate l1 weights of one reweighting stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(pub Array1<f64>);

impl WeightVector {
    pub fn new(weights: Array1<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || w.is_nan()) {
            return Err(Error::InvalidParameter(format!(
                "weights must be nonnegative, found {w}"
            )));
        }
        Ok(WeightVector(weights))
    }

    /// `value` on every coordinate except those in `unpenalized`.
    pub fn constant(p: usize, value: f64, unpenalized: &BTreeSet<usize>) -> Self {
        WeightVector(Array1::from_shape_fn(p, |j| {
            if unpenalized.contains(&j) {
                0.0
            } else {
                value
            }
        }))
    }

    pub fn zeros(p: usize) -> Self {
        WeightVector(Array1::zeros(p))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn view(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice().expect("weights are contiguous")
    }
}

/// Weights `q_lambda'(|beta_j|)` off the unpenalized set, zero on it.
pub fn reweight(spec: &PenaltySpec, beta: ArrayView1<'_, f64>) -> WeightVector {
    let penalty = spec.family.penalty();
    WeightVector(Array1::from_shape_fn(beta.len(), |j| {
        if spec.is_penalized(j) {
            penalty.derivative(spec.lambda, spec.a, beta[j].abs())
        } else {
            0.0
        }
    }))
}
