//! Reference estimators for `P(S_n ≥ an | W)`: importance sampling under the
//! exponentially tilted law, plain Monte Carlo, and exhaustive enumeration.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cgf::{CumulantModel, TiltedSampler};
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::numeric::{LogSumExp, NeumaierSum};
use crate::rng::{stream, Domain};
use crate::saddle::{ConditionalSum, SaddleSolution};
use crate::sldp::{Method, TailEstimate};

pub const MIN_HITS: u64 = 10;
pub const MIN_DRAWS: u64 = 1_000;
pub const ENUMERATION_CAP: u64 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McMode {
    Tilted,
    Naive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub batches: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            batches: 100,
            batch_size: 10_000,
            seed: 0,
        }
    }
}

impl McConfig {
    /// Splits `draws` into `batches` equal batches (rounding up).
    pub fn with_draws(draws: u64, batches: usize, seed: u64) -> Self {
        let batches = batches.max(1);
        Self {
            batches,
            batch_size: draws.div_ceil(batches as u64) as usize,
            seed,
        }
    }

    pub fn draws(&self) -> u64 {
        self.batches as u64 * self.batch_size as u64
    }

    fn validate(&self) -> Result<()> {
        if self.batches < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 batches, got {}", self.batches)));
        }
        if self.draws() < MIN_DRAWS {
            return Err(Error::InvalidInput(format!(
                "need at least {MIN_DRAWS} draws, got {}",
                self.draws()
            )));
        }
        Ok(())
    }
}

/// `S_n ≥ an`, with a relative slack of `1e-9` so that lattice sums equal to
/// `an` are not lost to rounding in `Σ W_j z_j`.
#[inline]
pub fn threshold(n: usize, a: f64) -> f64 {
    let an = n as f64 * a;
    an - 1e-9 * an.abs().max(1.0)
}

/// Per-draw sampler for `S_n`; Gaussian blocks are drawn as one normal
/// variate since their weighted sum is exactly normal.
struct SumSampler {
    terms: Vec<(f64, TiltedSampler)>,
    gauss_mean: f64,
    gauss_sd: f64,
}

impl SumSampler {
    fn new(sum: &ConditionalSum, theta: f64) -> Self {
        let mut terms = Vec::new();
        let mut mean = NeumaierSum::new();
        let mut var = NeumaierSum::new();
        for b in sum.blocks() {
            if b.model.is_gaussian() {
                let s2 = b.model.variance();
                for &w in &b.weights {
                    mean.add(s2 * theta * w * w);
                    var.add(s2 * w * w);
                }
            } else {
                terms.extend(b.weights.iter().map(|&w| (w, b.model.tilted_sampler(theta * w))));
            }
        }
        Self {
            terms,
            gauss_mean: mean.value(),
            gauss_sd: var.value().sqrt(),
        }
    }

    #[inline]
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut s = 0.0;
        for (w, z) in &self.terms {
            s += w * z.sample(rng);
        }
        if self.gauss_sd > 0.0 {
            let g: f64 = StandardNormal.sample(rng);
            s += self.gauss_mean + self.gauss_sd * g;
        }
        s
    }
}

fn check_solution(a: f64, sol: &SaddleSolution) -> Result<()> {
    if !(sol.theta > 0.0) {
        return Err(Error::InvalidInput(format!("tilt must be positive, got {}", sol.theta)));
    }
    if (sol.a - a).abs() > 1e-12 * a.abs().max(1.0) {
        return Err(Error::InvalidInput(format!("saddle solved for a = {}, not {a}", sol.a)));
    }
    Ok(())
}

fn finish(mut est: TailEstimate, hits: u64) -> Result<TailEstimate> {
    est.hits = Some(hits);
    if hits < MIN_HITS {
        est.warnings.push(format!("only {hits} hits; estimate unreliable"));
        return Err(Error::InsufficientHits {
            hits,
            estimate: Box::new(est),
        });
    }
    Ok(est)
}

pub fn tilted_mc(
    env: &Environment,
    model: &CumulantModel,
    a: f64,
    sol: &SaddleSolution,
    cfg: &McConfig,
) -> Result<TailEstimate> {
    let est = tilted_mc_sum(&ConditionalSum::homogeneous(env, model), a, sol, cfg)?;
    Ok(est.with_env_seed(env.provenance()))
}

/// Averages `exp(−θS + nΨ_n(θ))·1{S ≥ an}` with `Z_j` drawn from the law
/// tilted by `θW_j`. Weights are accumulated in log space per batch; the
/// standard error comes from the spread of the batch means.
pub fn tilted_mc_sum(sum: &ConditionalSum, a: f64, sol: &SaddleSolution, cfg: &McConfig) -> Result<TailEstimate> {
    cfg.validate()?;
    check_solution(a, sol)?;
    let n = sum.n();
    let theta = sol.theta;
    let log_norm = n as f64 * sum.psi(theta).psi;
    let cut = threshold(n, a);
    let sampler = SumSampler::new(sum, theta);
    let ln_size = (cfg.batch_size as f64).ln();

    let mut hits = 0u64;
    let mut batch_logs = Vec::with_capacity(cfg.batches);
    for b in 0..cfg.batches {
        let mut rng = stream(cfg.seed, Domain::MonteCarlo, b as u64);
        let mut lse = LogSumExp::new();
        for _ in 0..cfg.batch_size {
            let s = sampler.draw(&mut rng);
            if s >= cut {
                hits += 1;
                lse.add(-theta * s + log_norm);
            }
        }
        batch_logs.push(lse.value() - ln_size);
    }
    let est = from_batches(Method::TiltedMc, n, a, &batch_logs, cfg.draws());
    finish(est, hits)
}

/// Mean and standard error of batch estimates given in log space.
fn from_batches(method: Method, n: usize, a: f64, batch_logs: &[f64], draws: u64) -> TailEstimate {
    let k = batch_logs.len() as f64;
    let top = batch_logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut est = if top == f64::NEG_INFINITY {
        let mut e = TailEstimate::from_log(method, n, a, f64::NEG_INFINITY);
        e.stderr = Some(0.0);
        e
    } else {
        let scaled: Vec<f64> = batch_logs.iter().map(|l| (l - top).exp()).collect();
        let (mean, var) = crate::numeric::mean_var(&scaled);
        let mut e = TailEstimate::from_log(method, n, a, top + mean.ln());
        e.stderr = Some(top.exp() * (var / k).sqrt());
        e
    };
    est.draws = Some(draws);
    est
}

pub fn naive_mc(env: &Environment, model: &CumulantModel, a: f64, cfg: &McConfig) -> Result<TailEstimate> {
    let est = naive_mc_sum(&ConditionalSum::homogeneous(env, model), a, cfg)?;
    Ok(est.with_env_seed(env.provenance()))
}

/// Fraction of untilted draws with `S ≥ an`, binomial standard error.
pub fn naive_mc_sum(sum: &ConditionalSum, a: f64, cfg: &McConfig) -> Result<TailEstimate> {
    cfg.validate()?;
    if !a.is_finite() {
        return Err(Error::InvalidInput(format!("threshold must be finite, got {a}")));
    }
    let n = sum.n();
    let cut = threshold(n, a);
    let sampler = SumSampler::new(sum, 0.0);
    let mut hits = 0u64;
    for b in 0..cfg.batches {
        let mut rng = stream(cfg.seed, Domain::MonteCarlo, b as u64);
        for _ in 0..cfg.batch_size {
            if sampler.draw(&mut rng) >= cut {
                hits += 1;
            }
        }
    }
    let draws = cfg.draws();
    let p = hits as f64 / draws as f64;
    let mut est = TailEstimate::from_log(Method::NaiveMc, n, a, p.ln());
    est.value = p;
    est.stderr = Some((p * (1.0 - p) / draws as f64).sqrt());
    est.draws = Some(draws);
    finish(est, hits)
}

pub fn exact_enum(env: &Environment, model: &CumulantModel, a: f64) -> Result<TailEstimate> {
    let est = exact_enum_sum(&ConditionalSum::homogeneous(env, model), a)?;
    Ok(est.with_env_seed(env.provenance()))
}

/// Sums the probabilities of all outcome tuples with `Σ W_j z_j ≥ an`.
/// Zero-weight positions do not affect the sum and are not enumerated.
pub fn exact_enum_sum(sum: &ConditionalSum, a: f64) -> Result<TailEstimate> {
    if !a.is_finite() {
        return Err(Error::InvalidInput(format!("threshold must be finite, got {a}")));
    }
    let mut levels: Vec<(f64, Vec<(f64, f64)>)> = Vec::new();
    let mut tuples = 1f64;
    for (w, m) in sum.terms() {
        let support = m.finite_support().ok_or_else(|| {
            Error::InvalidModel(format!("{} summands have no finite support to enumerate", m.name()))
        })?;
        tuples *= support.len() as f64;
        if tuples > ENUMERATION_CAP as f64 {
            break;
        }
        levels.push((w, support));
    }
    if tuples > ENUMERATION_CAP as f64 {
        let total: f64 = sum
            .terms()
            .map(|(_, m)| m.finite_support().map_or(f64::INFINITY, |s| s.len() as f64))
            .product();
        return Err(Error::TooLarge {
            tuples: total,
            cap: ENUMERATION_CAP,
        });
    }
    let n = sum.n();
    let cut = threshold(n, a);
    let mut acc = NeumaierSum::new();
    descend(&levels, 0, 0.0, 1.0, cut, &mut acc);
    let p = acc.value().clamp(0.0, 1.0);
    let mut est = TailEstimate::from_log(Method::ExactEnum, n, a, p.ln());
    est.value = p;
    Ok(est)
}

fn descend(levels: &[(f64, Vec<(f64, f64)>)], depth: usize, partial: f64, prob: f64, cut: f64, acc: &mut NeumaierSum) {
    if depth == levels.len() {
        if partial >= cut {
            acc.add(prob);
        }
        return;
    }
    let (w, support) = &levels[depth];
    for &(z, q) in support {
        if q > 0.0 {
            descend(levels, depth + 1, partial + w * z, prob * q, cut, acc);
        }
    }
}
