//! Deterministic curves `g(θ) = E[f(θW)]` and the admissible threshold range.

use crate::cgf::CumulantModel;
use crate::error::{Error, Result};
use crate::weights::WeightModel;

/// `g`, `g′`, `g″` backed by quadrature over the weight law, together with
/// the threshold interval `J = (E[W]E[Z], E[W f′(θ* W)])`.
#[derive(Debug, Clone)]
pub struct DeterministicCurves {
    weights: WeightModel,
    model: CumulantModel,
    theta_star: f64,
    j: (f64, f64),
}

impl DeterministicCurves {
    pub fn build(weights: &WeightModel, model: &CumulantModel, theta_star: f64) -> Result<Self> {
        if !(theta_star.is_finite() && theta_star > 0.0) {
            return Err(Error::InvalidInput(format!("theta_star must be positive, got {theta_star}")));
        }
        let mut curves = Self {
            weights: weights.clone(),
            model: model.clone(),
            theta_star,
            j: (f64::NAN, f64::NAN),
        };
        let lo = weights.mean()? * model.mean();
        let hi = curves.g1(theta_star)?;
        if !(hi > lo) {
            return Err(Error::EmptyInterval { lo, hi });
        }
        curves.j = (lo, hi);
        Ok(curves)
    }

    pub fn weights(&self) -> &WeightModel {
        &self.weights
    }

    pub fn model(&self) -> &CumulantModel {
        &self.model
    }

    pub fn theta_star(&self) -> f64 {
        self.theta_star
    }

    /// Open interval `J`.
    pub fn interval(&self) -> (f64, f64) {
        self.j
    }

    pub fn contains(&self, a: f64) -> bool {
        a > self.j.0 && a < self.j.1
    }

    pub fn g(&self, theta: f64) -> Result<f64> {
        self.weights.expect(|w| self.model.cgf(w * theta))
    }

    pub fn g1(&self, theta: f64) -> Result<f64> {
        self.weights.expect(|w| w * self.model.eval(w * theta).d1)
    }

    pub fn g2(&self, theta: f64) -> Result<f64> {
        self.weights.expect(|w| w * w * self.model.eval(w * theta).d2)
    }

    pub fn g3(&self, theta: f64) -> Result<f64> {
        self.weights.expect(|w| w * w * w * self.model.eval(w * theta).d3)
    }

    /// `Cov(f(θ₁W), f(θ₂W))`, computed from centered integrands.
    pub fn fluctuation_covariance(&self, theta1: f64, theta2: f64) -> Result<f64> {
        let m1 = self.g(theta1)?;
        let m2 = self.g(theta2)?;
        self.weights
            .expect(|w| (self.model.cgf(w * theta1) - m1) * (self.model.cgf(w * theta2) - m2))
    }
}
