//! JSON run configuration.
//!
//! Every document is parsed strictly (unknown keys are rejected) and every
//! model is constructed before any computation starts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::applications::{PortfolioBlock, PortfolioScenario, TcellScenario};
use crate::cgf::CumulantModel;
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::oracle::McConfig;
use crate::sldp::TGrid;
use crate::weights::{TauModel, WeightModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ZSpec {
    Gaussian { sigma2: f64 },
    Binomial { m: u32, p: f64 },
    Bernoulli { p: f64 },
}

impl ZSpec {
    pub fn build(&self) -> Result<CumulantModel> {
        match *self {
            ZSpec::Gaussian { sigma2 } => CumulantModel::gaussian(sigma2),
            ZSpec::Binomial { m, p } => CumulantModel::binomial(m, p),
            ZSpec::Bernoulli { p } => CumulantModel::bernoulli(p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TauSpec {
    Exponential { rate: f64 },
    Lognormal { mu: f64, s: f64 },
}

impl Default for TauSpec {
    fn default() -> Self {
        TauSpec::Exponential { rate: 1.0 }
    }
}

impl From<TauSpec> for TauModel {
    fn from(t: TauSpec) -> Self {
        match t {
            TauSpec::Exponential { rate } => TauModel::Exponential { rate },
            TauSpec::Lognormal { mu, s } => TauModel::Lognormal { mu, s },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WSpec {
    Constant {
        c: f64,
    },
    Uniform {
        c: f64,
        d: f64,
    },
    TwoPoint {
        values: [f64; 2],
        probs: [f64; 2],
    },
    Indicator {
        q: f64,
    },
    Tcell {
        #[serde(default)]
        tau: TauSpec,
    },
    /// A fixed weight sequence instead of a law.
    Explicit {
        weights: Vec<f64>,
    },
}

impl WSpec {
    pub fn build(&self) -> Result<WeightModel> {
        match self {
            WSpec::Constant { c } => WeightModel::constant(*c),
            WSpec::Uniform { c, d } => WeightModel::uniform(*c, *d),
            WSpec::TwoPoint { values, probs } => WeightModel::two_point(*values, *probs),
            WSpec::Indicator { q } => WeightModel::indicator(*q),
            WSpec::Tcell { tau } => WeightModel::tcell((*tau).into()),
            WSpec::Explicit { .. } => Err(Error::InvalidInput(
                "an explicit weight sequence is not a weight law".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub path: Option<String>,
}

fn default_theta_star() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub z: ZSpec,
    pub w: WSpec,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub a_grid: Option<Vec<f64>>,
    #[serde(default = "default_theta_star")]
    pub theta_star: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub conditions: Option<TGrid>,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Parsed and validated run configuration.
#[derive(Debug, Clone)]
pub struct Run {
    pub spec: RunConfig,
    pub model: CumulantModel,
    /// `None` for an explicit weight sequence.
    pub weights: Option<WeightModel>,
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    parse_json(&text)
}

pub fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("malformed config: {e}")))
}

impl RunConfig {
    pub fn validate(self) -> Result<Run> {
        let model = self.z.build()?;
        let weights = match &self.w {
            WSpec::Explicit { weights } => {
                if let Some(n) = self.n {
                    if n != weights.len() {
                        return Err(Error::InvalidInput(format!(
                            "n = {n} but {} explicit weights given",
                            weights.len()
                        )));
                    }
                }
                None
            }
            other => Some(other.build()?),
        };
        if !(self.theta_star.is_finite() && self.theta_star > 0.0) {
            return Err(Error::InvalidInput(format!("theta_star must be positive, got {}", self.theta_star)));
        }
        if self.n == Some(0) {
            return Err(Error::InvalidInput("n must be at least 1".into()));
        }
        if let Some(a) = self.a {
            if !a.is_finite() {
                return Err(Error::InvalidInput(format!("a must be finite, got {a}")));
            }
        }
        if let Some(g) = &self.conditions {
            TGrid::new(g.delta1, g.delta2, g.count)?;
        }
        Ok(Run {
            spec: self,
            model,
            weights,
        })
    }
}

impl Run {
    pub fn n(&self) -> Result<usize> {
        match (&self.spec.w, self.spec.n) {
            (WSpec::Explicit { weights }, _) => Ok(weights.len()),
            (_, Some(n)) => Ok(n),
            _ => Err(Error::InvalidInput("config needs n".into())),
        }
    }

    pub fn a(&self) -> Result<f64> {
        self.spec.a.ok_or_else(|| Error::InvalidInput("config needs a threshold a".into()))
    }

    /// Explicit weights, or a draw with the config seed and replica 0.
    pub fn environment(&self) -> Result<Environment> {
        match (&self.spec.w, &self.weights) {
            (WSpec::Explicit { weights }, _) => Environment::new(weights.clone()),
            (_, Some(wm)) => Environment::draw(wm, self.n()?, self.spec.seed, 0),
            _ => unreachable!("validated configs carry a weight law unless explicit"),
        }
    }

    pub fn weight_model(&self) -> Result<&WeightModel> {
        self.weights
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("this command needs a weight law, not explicit weights".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TcellConfig {
    pub n: usize,
    pub z_f: u32,
    pub w_f: f64,
    #[serde(default)]
    pub tau: TauSpec,
    pub z: ZSpec,
    pub a: f64,
    #[serde(default = "default_theta_star")]
    pub theta_star: f64,
    #[serde(default)]
    pub seed: u64,
}

impl TcellConfig {
    pub fn build(&self) -> Result<TcellScenario> {
        let sc = TcellScenario {
            n: self.n,
            z_f: self.z_f,
            w_f: self.w_f,
            tau: self.tau.into(),
            z_model: self.z.build()?,
            a: self.a,
            theta_star: self.theta_star,
        };
        sc.weight_model()?;
        if self.n == 0 {
            return Err(Error::InvalidInput("n must be at least 1".into()));
        }
        if !(self.w_f.is_finite() && self.w_f >= 0.0) {
            return Err(Error::InvalidInput(format!("w_f must be nonnegative, got {}", self.w_f)));
        }
        Ok(sc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    pub q: usize,
    pub w: WSpec,
    pub z: ZSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortfolioConfig {
    pub blocks: Vec<BlockConfig>,
    pub a: f64,
    #[serde(default = "default_theta_star")]
    pub theta_star: f64,
    #[serde(default)]
    pub seed: u64,
}

impl PortfolioConfig {
    pub fn build(&self) -> Result<PortfolioScenario> {
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let w_model = b.w.build()?;
                if !w_model.is_indicator() {
                    return Err(Error::InvalidModel(format!("portfolio weights must be indicators, got {}", w_model.name())));
                }
                Ok(PortfolioBlock {
                    q: b.q,
                    w_model,
                    z_model: b.z.build()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let sc = PortfolioScenario {
            blocks,
            a: self.a,
            theta_star: self.theta_star,
        };
        if sc.n() == 0 {
            return Err(Error::InvalidInput("portfolio needs at least one position".into()));
        }
        Ok(sc)
    }
}
