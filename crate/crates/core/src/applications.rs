//! Preconfigured scenarios: T-cell activation and block portfolio losses.

use crate::cgf::CumulantModel;
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::rng::{stream, Domain};
use crate::saddle::{ConditionalSum, SaddleSolution};
use crate::sldp::{sldp_estimate, TailEstimate};
use crate::weights::{TauModel, WeightModel};

/// Signal `Σ_j W_j Z_j + z_f W_f` from `n` self-peptide types with
/// `W = τ⁻¹ exp(−τ⁻¹)`, plus `z_f` foreign copies at rate `W_f`.
#[derive(Debug, Clone)]
pub struct TcellScenario {
    pub n: usize,
    pub z_f: u32,
    pub w_f: f64,
    pub tau: TauModel,
    pub z_model: CumulantModel,
    pub a: f64,
    pub theta_star: f64,
}

impl TcellScenario {
    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("n must be at least 1".into()));
        }
        if !(self.w_f.is_finite() && self.w_f >= 0.0) {
            return Err(Error::InvalidInput(format!("foreign rate must be nonnegative, got {}", self.w_f)));
        }
        if !self.a.is_finite() {
            return Err(Error::InvalidInput(format!("threshold must be finite, got {}", self.a)));
        }
        Ok(())
    }

    pub fn weight_model(&self) -> Result<WeightModel> {
        WeightModel::tcell(self.tau)
    }

    /// Threshold for the self-peptide sum once the foreign signal is moved
    /// to the right-hand side: `a − z_f W_f / n`.
    pub fn shifted_threshold(&self) -> f64 {
        self.a - self.z_f as f64 * self.w_f / self.n as f64
    }

    pub fn environment(&self, env_seed: u64) -> Result<Environment> {
        self.validate()?;
        Environment::draw(&self.weight_model()?, self.n, env_seed, 0)
    }

    /// Saddle point at the shifted threshold for the environment drawn from `env_seed`.
    pub fn solve(&self, env_seed: u64) -> Result<(Environment, SaddleSolution)> {
        let env = self.environment(env_seed)?;
        let sol = ConditionalSum::homogeneous(&env, &self.z_model).solve_saddle(self.shifted_threshold(), self.theta_star)?;
        Ok((env, sol))
    }
}

pub fn tcell_activation_prob(sc: &TcellScenario, env_seed: u64) -> Result<TailEstimate> {
    let (env, sol) = sc.solve(env_seed)?;
    Ok(sldp_estimate(&sol, sc.n)?.with_env_seed(env.provenance()))
}

/// `Q` positions whose weights are drawn from `w_model` and whose losses follow `z_model`.
#[derive(Debug, Clone)]
pub struct PortfolioBlock {
    pub q: usize,
    pub w_model: WeightModel,
    pub z_model: CumulantModel,
}

#[derive(Debug, Clone)]
pub struct PortfolioScenario {
    pub blocks: Vec<PortfolioBlock>,
    pub a: f64,
    pub theta_star: f64,
}

impl PortfolioScenario {
    pub fn n(&self) -> usize {
        self.blocks.iter().map(|b| b.q).sum()
    }

    fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() || self.n() == 0 {
            return Err(Error::InvalidInput("portfolio needs at least one position".into()));
        }
        if let Some((i, _)) = self.blocks.iter().enumerate().find(|(_, b)| !b.w_model.is_indicator()) {
            return Err(Error::InvalidModel(format!("block {i} weights are not indicator-valued")));
        }
        Ok(())
    }

    /// Block `α` draws its weights from the environment stream with index `α`,
    /// so a single block reproduces [`Environment::draw`] with replica 0.
    pub fn environment(&self, env_seed: u64) -> Result<ConditionalSum> {
        self.validate()?;
        let parts = self
            .blocks
            .iter()
            .enumerate()
            .map(|(alpha, b)| {
                let mut rng = stream(env_seed, Domain::Environment, alpha as u64);
                let w: Vec<f64> = (0..b.q).map(|_| b.w_model.sample(&mut rng)).collect();
                (b.z_model.clone(), w)
            })
            .collect();
        ConditionalSum::new(parts)
    }

    pub fn solve(&self, env_seed: u64) -> Result<(ConditionalSum, SaddleSolution)> {
        let sum = self.environment(env_seed)?;
        let sol = sum.solve_saddle(self.a, self.theta_star)?;
        Ok((sum, sol))
    }
}

pub fn portfolio_loss_prob(sc: &PortfolioScenario, env_seed: u64) -> Result<TailEstimate> {
    let (sum, sol) = sc.solve(env_seed)?;
    sldp_estimate(&sol, sum.n())
}
