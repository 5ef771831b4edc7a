//! Strong large deviation approximation and finite-n condition diagnostics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::cgf::CumulantModel;
use crate::environment::{Environment, SeedProvenance};
use crate::error::{Error, Result};
use crate::numeric::NeumaierSum;
use crate::saddle::{ConditionalSum, SaddleSolution};

pub const DEFAULT_DELTA1: f64 = 0.05;
pub const DEFAULT_DELTA2: f64 = 1.0;
pub const DEFAULT_GRID_COUNT: usize = 512;
pub const MIN_GRID_COUNT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SldpAnalytic,
    TiltedMc,
    NaiveMc,
    ExactEnum,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::SldpAnalytic => "sldp_analytic",
            Method::TiltedMc => "tilted_mc",
            Method::NaiveMc => "naive_mc",
            Method::ExactEnum => "exact_enum",
        }
    }

    pub fn is_monte_carlo(self) -> bool {
        matches!(self, Method::TiltedMc | Method::NaiveMc)
    }
}

/// Estimate of `P(S_n ≥ an | W)`.
///
/// `log_value` is authoritative; `value` is its exponential and underflows to
/// zero below roughly `e^{-745}`. A zero estimate has `log_value = -inf`,
/// serialized as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub method: Method,
    pub n: usize,
    pub a: f64,
    pub value: f64,
    #[serde(with = "log_or_null")]
    pub log_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hits: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_seed: Option<SeedProvenance>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl TailEstimate {
    pub fn from_log(method: Method, n: usize, a: f64, log_value: f64) -> Self {
        Self {
            method,
            n,
            a,
            value: log_value.exp(),
            log_value,
            stderr: None,
            hits: None,
            draws: None,
            env_seed: None,
            warnings: Vec::new(),
        }
    }

    pub fn rel_stderr(&self) -> Option<f64> {
        self.stderr.map(|s| s / self.value)
    }

    pub fn with_env_seed(mut self, seed: Option<SeedProvenance>) -> Self {
        self.env_seed = seed;
        self
    }
}

mod log_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

/// `exp(−n·rate) / (θ σ √(2πn))`, carried in log space and capped at 1.
pub fn sldp_estimate(sol: &SaddleSolution, n: usize) -> Result<TailEstimate> {
    if !(sol.theta > 0.0 && sol.sigma2 > 0.0) {
        return Err(Error::PrefactorDegenerate {
            theta: sol.theta,
            sigma2: sol.sigma2,
        });
    }
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    let nf = n as f64;
    let raw = -nf * sol.rate - sol.theta.ln() - 0.5 * sol.sigma2.ln() - 0.5 * (2.0 * PI * nf).ln();
    let mut est = TailEstimate::from_log(Method::SldpAnalytic, n, sol.a, raw.min(0.0));
    if raw > 0.0 {
        est.warnings
            .push(format!("approximation exceeded 1 (log {raw:.4}); capped, theta√n is too small for the asymptotics"));
    }
    Ok(est)
}

/// `[δ₁, δ₂θ]` with `count` uniformly spaced points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TGrid {
    pub delta1: f64,
    pub delta2: f64,
    pub count: usize,
}

impl Default for TGrid {
    fn default() -> Self {
        Self {
            delta1: DEFAULT_DELTA1,
            delta2: DEFAULT_DELTA2,
            count: DEFAULT_GRID_COUNT,
        }
    }
}

impl TGrid {
    pub fn new(delta1: f64, delta2: f64, count: usize) -> Result<Self> {
        if !(delta1 > 0.0 && delta2 > delta1 && delta2.is_finite()) {
            return Err(Error::InvalidInput(format!("need 0 < delta1 < delta2, got ({delta1}, {delta2})")));
        }
        if count < MIN_GRID_COUNT {
            return Err(Error::InvalidInput(format!("grid needs at least {MIN_GRID_COUNT} points, got {count}")));
        }
        Ok(Self { delta1, delta2, count })
    }

    /// Grid points for saddle `theta`. When `δ₂θ < δ₁` the range collapses
    /// to the single point `δ₁`.
    pub fn points(&self, theta: f64) -> Vec<f64> {
        let lo = self.delta1;
        let hi = (self.delta2 * theta).max(lo);
        let m = self.count - 1;
        (0..self.count)
            .map(|i| if i == m { hi } else { lo + (hi - lo) * i as f64 / m as f64 })
            .collect()
    }
}

/// Finite-n statistics for the three conditions behind the strong LDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub theta_sqrt_n: f64,
    pub sigma2: f64,
    pub cf_sup: f64,
    pub log_cf_sup: f64,
    pub t_at_sup: f64,
    pub t_grid: TGrid,
}

pub fn check_conditions(
    env: &Environment,
    model: &CumulantModel,
    sol: &SaddleSolution,
    grid: TGrid,
) -> Result<ConditionReport> {
    check_conditions_sum(&ConditionalSum::homogeneous(env, model), sol, grid)
}

/// `√n · max_t Π_j |M(W_j(θ+it)) / M(W_jθ)|` over the grid, maximized in log space.
pub fn check_conditions_sum(sum: &ConditionalSum, sol: &SaddleSolution, grid: TGrid) -> Result<ConditionReport> {
    TGrid::new(grid.delta1, grid.delta2, grid.count)?;
    let sqrt_n = (sum.n() as f64).sqrt();
    let mut best = (f64::NEG_INFINITY, grid.delta1);
    for t in grid.points(sol.theta) {
        let mut acc = NeumaierSum::new();
        for (w, m) in sum.terms() {
            acc.add(m.log_mgf_ratio_modulus(w, sol.theta, t));
        }
        let v = acc.value().min(0.0);
        if v > best.0 {
            best = (v, t);
        }
    }
    let log_cf_sup = sqrt_n.ln() + best.0;
    Ok(ConditionReport {
        theta_sqrt_n: sol.theta * sqrt_n,
        sigma2: sol.sigma2,
        cf_sup: log_cf_sup.exp(),
        log_cf_sup,
        t_at_sup: best.1,
        t_grid: grid,
    })
}
