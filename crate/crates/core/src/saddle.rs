//! Random and deterministic saddle points.
//!
//! For a fixed environment the conditional log-MGF is
//! `Ψ_n(θ) = (1/n) Σ_j f(W_j θ)`; the saddle point solves `Ψ_n′(θ) = a` and
//! the random rate is `I_n(a) = aθ − Ψ_n(θ)`. The deterministic analogue
//! replaces `Ψ_n` by `g(θ) = E[f(Wθ)]`.

use serde::{Deserialize, Serialize};

use crate::cgf::CumulantModel;
use crate::curves::DeterministicCurves;
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::numeric::NeumaierSum;

pub const MAX_ITERATIONS: usize = 200;
pub const BRACKET_DOUBLINGS: u32 = 6;

/// Convergence target on `|Ψ′(θ) − a|`.
#[inline]
pub fn residual_tolerance(a: f64) -> f64 {
    1e-12 * a.abs().max(1.0)
}

/// Positions sharing one summand law.
#[derive(Debug, Clone)]
pub struct Block {
    pub model: CumulantModel,
    /// Nonzero weights, sorted ascending.
    pub weights: Vec<f64>,
}

/// `S_n = Σ_j W_j Z_j` conditioned on the weights, possibly with several
/// summand laws.
///
/// Blocks with equal models are merged, zero weights are dropped (they
/// contribute nothing to `S_n` or `Ψ_n`) and the remaining weights are
/// sorted, so any permutation of positions among identically distributed
/// summands yields bit-identical sums.
#[derive(Debug, Clone)]
pub struct ConditionalSum {
    n: usize,
    blocks: Vec<Block>,
}

/// `Ψ_n`, `Ψ_n′`, `Ψ_n″` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiValues {
    pub psi: f64,
    pub d1: f64,
    pub d2: f64,
}

impl ConditionalSum {
    pub fn new(parts: Vec<(CumulantModel, Vec<f64>)>) -> Result<Self> {
        let mut n = 0usize;
        let mut blocks: Vec<Block> = Vec::new();
        for (model, weights) in parts {
            n += weights.len();
            if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
                return Err(Error::InvalidInput(format!("non-finite weight {w}")));
            }
            let nonzero = weights.into_iter().filter(|&w| w != 0.0);
            match blocks.iter_mut().find(|b| b.model == model) {
                Some(b) => b.weights.extend(nonzero),
                None => blocks.push(Block {
                    model,
                    weights: nonzero.collect(),
                }),
            }
        }
        if n == 0 {
            return Err(Error::InvalidInput("conditional sum needs at least one position".into()));
        }
        blocks.retain(|b| !b.weights.is_empty());
        if blocks.is_empty() {
            return Err(Error::DegenerateEnvironment { n });
        }
        for b in &mut blocks {
            b.weights.sort_by(f64::total_cmp);
        }
        Ok(Self { n, blocks })
    }

    pub fn homogeneous(env: &Environment, model: &CumulantModel) -> Self {
        Self::new(vec![(model.clone(), env.weights().to_vec())]).expect("environment is non-degenerate")
    }

    /// Number of positions, zero weights included.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// `(W_j, model)` pairs for the nonzero positions, in canonical order.
    pub fn terms(&self) -> impl Iterator<Item = (f64, &CumulantModel)> + '_ {
        self.blocks.iter().flat_map(|b| b.weights.iter().map(move |&w| (w, &b.model)))
    }

    /// Runs of equal weights are evaluated once and enter with their
    /// frequency, so identical weights reproduce `f` without rounding.
    pub fn psi(&self, theta: f64) -> PsiValues {
        let mut s0 = NeumaierSum::new();
        let mut s1 = NeumaierSum::new();
        let mut s2 = NeumaierSum::new();
        let n = self.n as f64;
        for b in &self.blocks {
            let ws = &b.weights;
            let mut i = 0;
            while i < ws.len() {
                let w = ws[i];
                let mut j = i + 1;
                while j < ws.len() && ws[j] == w {
                    j += 1;
                }
                let freq = (j - i) as f64 / n;
                let v = b.model.eval(w * theta);
                s0.add(freq * v.f);
                s1.add(freq * (w * v.d1));
                s2.add(freq * (w * w * v.d2));
                i = j;
            }
        }
        PsiValues {
            psi: s0.value(),
            d1: s1.value(),
            d2: s2.value(),
        }
    }

    /// `Ψ_n⁽ᵏ⁾(θ)` for `k ∈ {0, 1, 2}`.
    pub fn psi_order(&self, theta: f64, order: u8) -> Result<f64> {
        let v = self.psi(theta);
        match order {
            0 => Ok(v.psi),
            1 => Ok(v.d1),
            2 => Ok(v.d2),
            _ => Err(Error::InvalidInput(format!("psi order must be 0, 1 or 2, got {order}"))),
        }
    }

    /// Solves `Ψ_n′(θ) = a` on `[0, θ_max]`, `θ_max` starting at `theta_star`
    /// and doubling at most six times.
    pub fn solve_saddle(&self, a: f64, theta_star: f64) -> Result<SaddleSolution> {
        if !a.is_finite() {
            return Err(Error::InvalidInput(format!("threshold must be finite, got {a}")));
        }
        if !(theta_star.is_finite() && theta_star > 0.0) {
            return Err(Error::InvalidInput(format!("theta_star must be positive, got {theta_star}")));
        }
        let at_zero = self.psi(0.0).d1;
        let mut hi = theta_star;
        let mut d1_hi = self.psi(hi).d1;
        let mut doublings = 0;
        while d1_hi <= a && doublings < BRACKET_DOUBLINGS {
            hi *= 2.0;
            d1_hi = self.psi(hi).d1;
            doublings += 1;
        }
        if !(a > at_zero && a < d1_hi) {
            return Err(Error::OutOfRange { a, lo: at_zero, hi: d1_hi });
        }
        let root = newton_bracketed(
            |t| {
                let v = self.psi(t);
                Ok((v.d1, v.d2))
            },
            a,
            0.0,
            hi,
        )?;
        let v = self.psi(root.theta);
        Ok(SaddleSolution {
            a,
            theta: root.theta,
            rate: (a * root.theta - v.psi).max(0.0),
            sigma2: v.d2,
            iterations: root.iterations,
            residual: (v.d1 - a).abs(),
        })
    }
}

/// Saddle point of one `(environment, a)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddleSolution {
    pub a: f64,
    pub theta: f64,
    pub rate: f64,
    pub sigma2: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// `θ(a)` and `I(a)` for the deterministic curve `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeterministicPoint {
    pub a: f64,
    pub theta: f64,
    pub rate: f64,
}

struct Root {
    theta: f64,
    iterations: usize,
}

/// Newton iteration for `F(θ) = target` with `F` increasing on `[lo, hi]`,
/// `F(lo) < target < F(hi)`. Falls back to bisection whenever a Newton step
/// leaves the current bracket or the residual fails to halve.
fn newton_bracketed<F>(mut eval: F, target: f64, mut lo: f64, mut hi: f64) -> Result<Root>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let tol = residual_tolerance(target);
    let mut theta = 0.5 * (lo + hi);
    let mut prev_residual = f64::INFINITY;
    let mut best = (f64::INFINITY, theta);
    for it in 1..=MAX_ITERATIONS {
        let (value, slope) = eval(theta)?;
        let r = value - target;
        if r.abs() < best.0 {
            best = (r.abs(), theta);
        }
        if r.abs() <= tol {
            return Ok(Root { theta, iterations: it });
        }
        if r < 0.0 {
            lo = theta;
        } else {
            hi = theta;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(f64::MIN_POSITIVE) {
            // Bracket down to a few ulps: the residual cannot improve further.
            return Ok(Root {
                theta: best.1,
                iterations: it,
            });
        }
        let newton = theta - r / slope;
        let halved = r.abs() <= 0.5 * prev_residual;
        theta = if slope > 0.0 && newton > lo && newton < hi && halved {
            newton
        } else {
            0.5 * (lo + hi)
        };
        prev_residual = r.abs();
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
        residual: best.0,
    })
}

/// `(1/n) Σ f(W_jθ)`, `(1/n) Σ W_j f′(W_jθ)` or `(1/n) Σ W_j² f″(W_jθ)`.
pub fn empirical_psi(env: &Environment, model: &CumulantModel, theta: f64, order: u8) -> Result<f64> {
    ConditionalSum::homogeneous(env, model).psi_order(theta, order)
}

pub fn solve_saddle(env: &Environment, model: &CumulantModel, a: f64, theta_star: f64) -> Result<SaddleSolution> {
    ConditionalSum::homogeneous(env, model).solve_saddle(a, theta_star)
}

/// Solves `g′(θ) = a` for `a` in the open interval `J`.
pub fn solve_deterministic(curves: &DeterministicCurves, a: f64) -> Result<DeterministicPoint> {
    let (lo, hi) = curves.interval();
    if !curves.contains(a) {
        return Err(Error::OutOfRange { a, lo, hi });
    }
    let root = newton_bracketed(
        |t| Ok((curves.g1(t)?, curves.g2(t)?)),
        a,
        0.0,
        curves.theta_star(),
    )?;
    Ok(DeterministicPoint {
        a,
        theta: root.theta,
        rate: a * root.theta - curves.g(root.theta)?,
    })
}
