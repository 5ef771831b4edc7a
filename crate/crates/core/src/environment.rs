//! Realized weight sequences.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Domain};
use crate::weights::WeightModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedProvenance {
    pub master_seed: u64,
    pub replica: u64,
}

/// One draw `(W_1, …, W_n)` of the conditioning weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    weights: Vec<f64>,
    provenance: Option<SeedProvenance>,
}

impl Environment {
    /// Wraps an explicit weight sequence.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        Self::check(&weights)?;
        Ok(Self {
            weights,
            provenance: None,
        })
    }

    fn check(weights: &[f64]) -> Result<()> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("environment needs at least one weight".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite weight {w}")));
        }
        if weights.iter().all(|&w| w == 0.0) {
            return Err(Error::DegenerateEnvironment { n: weights.len() });
        }
        Ok(())
    }

    /// `n` independent draws from `model` on the stream for `(master_seed, replica)`.
    ///
    /// An all-zero draw is reported as [`Error::DegenerateEnvironment`]; no
    /// resampling happens here.
    pub fn draw(model: &WeightModel, n: usize, master_seed: u64, replica: u64) -> Result<Self> {
        let mut rng = stream(master_seed, Domain::Environment, replica);
        let mut env = Self::draw_from(model, n, &mut rng)?;
        env.provenance = Some(SeedProvenance { master_seed, replica });
        Ok(env)
    }

    pub fn draw_from<R: Rng + ?Sized>(model: &WeightModel, n: usize, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("environment size must be at least 1".into()));
        }
        let weights: Vec<f64> = (0..n).map(|_| model.sample(rng)).collect();
        Self::new(weights)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn provenance(&self) -> Option<SeedProvenance> {
        self.provenance
    }

    /// One weight per line, shortest round-trip decimal form.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.weights.len() * 20);
        for w in &self.weights {
            out.push_str(&format!("{w:?}\n"));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let weights = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.parse::<f64>()
                    .map_err(|e| Error::InvalidInput(format!("bad weight {l:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(weights)
    }
}
