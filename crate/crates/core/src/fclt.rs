//! Fluctuations of the random rate function across environment replicas.
//!
//! With `X_n(θ) = √n(Ψ_n(θ) − g(θ))` the random rate decomposes as
//!
//! ```text
//! I_n(a) = I(a) − n^{−1/2} X_n(θ(a)) + n^{−1} r_n(a),
//! r_n(a) ≈ X_n′(θ(a))² / (2[g″(θ(a)) + n^{−1/2} X_n″(θ(a))]).
//! ```
//!
//! This module samples `(X_n, X_n′, X_n″)` on a threshold grid, measures
//! `r_n` from the decomposition and compares the empirical covariance of
//! `X_n(θ(·))` with the Gaussian limit.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cgf::CumulantModel;
use crate::curves::DeterministicCurves;
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::numeric::{mean_var, median};
use crate::saddle::{solve_deterministic, ConditionalSum};
use crate::weights::WeightModel;

pub const MIN_REPLICAS: usize = 100;
pub const DEFAULT_GRID_POINTS: usize = 9;
pub const PSD_TOLERANCE: f64 = 1e-10;

/// `count` equally spaced points strictly inside `J`.
pub fn default_grid(curves: &DeterministicCurves, count: usize) -> Vec<f64> {
    let (lo, hi) = curves.interval();
    (1..=count).map(|k| lo + (hi - lo) * k as f64 / (count + 1) as f64).collect()
}

/// Deterministic quantities on a threshold grid, shared by all replicas.
#[derive(Debug, Clone)]
pub struct FluctuationPlan {
    curves: DeterministicCurves,
    a_grid: Vec<f64>,
    theta: Vec<f64>,
    g: Vec<f64>,
    g1: Vec<f64>,
    g2: Vec<f64>,
    rate: Vec<f64>,
}

impl FluctuationPlan {
    pub fn new(curves: &DeterministicCurves, a_grid: &[f64]) -> Result<Self> {
        if a_grid.is_empty() {
            return Err(Error::InvalidInput("threshold grid is empty".into()));
        }
        if a_grid.windows(2).any(|p| !(p[0] < p[1])) {
            return Err(Error::InvalidInput("threshold grid must be strictly increasing".into()));
        }
        let mut plan = Self {
            curves: curves.clone(),
            a_grid: a_grid.to_vec(),
            theta: Vec::with_capacity(a_grid.len()),
            g: Vec::with_capacity(a_grid.len()),
            g1: Vec::with_capacity(a_grid.len()),
            g2: Vec::with_capacity(a_grid.len()),
            rate: Vec::with_capacity(a_grid.len()),
        };
        for &a in a_grid {
            let p = solve_deterministic(curves, a)?;
            plan.theta.push(p.theta);
            plan.g.push(curves.g(p.theta)?);
            plan.g1.push(curves.g1(p.theta)?);
            plan.g2.push(curves.g2(p.theta)?);
            plan.rate.push(p.rate);
        }
        Ok(plan)
    }

    pub fn curves(&self) -> &DeterministicCurves {
        &self.curves
    }

    pub fn a_grid(&self) -> &[f64] {
        &self.a_grid
    }

    /// `θ(a)` per grid point.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// `I(a)` per grid point.
    pub fn rate(&self) -> &[f64] {
        &self.rate
    }

    pub fn g2(&self) -> &[f64] {
        &self.g2
    }
}

/// One replica of the fluctuation field on the plan's grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationSample {
    pub n: usize,
    pub replica: u64,
    pub seed: u64,
    pub a_grid: Vec<f64>,
    /// `θ(a)`.
    pub theta: Vec<f64>,
    pub x: Vec<f64>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    /// `I_n(a)`; `None` when the realized environment puts `a` outside its saddle range.
    pub rate_n: Vec<Option<f64>>,
    /// `θ_n(a)`, missing under the same condition as `rate_n`.
    pub theta_n: Vec<Option<f64>>,
}

/// `(X_n, X_n′, X_n″)` at `theta` for a fixed environment.
pub fn fluctuation_triplet(sum: &ConditionalSum, curves: &DeterministicCurves, theta: f64) -> Result<(f64, f64, f64)> {
    let v = sum.psi(theta);
    let s = (sum.n() as f64).sqrt();
    Ok((
        s * (v.psi - curves.g(theta)?),
        s * (v.d1 - curves.g1(theta)?),
        s * (v.d2 - curves.g2(theta)?),
    ))
}

pub fn sample_fluctuations(
    plan: &FluctuationPlan,
    wm: &WeightModel,
    cm: &CumulantModel,
    n: usize,
    replica: u64,
    seed: u64,
) -> Result<FluctuationSample> {
    let env = Environment::draw(wm, n, seed, replica)?;
    let mut s = fluctuations_for(plan, &ConditionalSum::homogeneous(&env, cm))?;
    s.replica = replica;
    s.seed = seed;
    Ok(s)
}

/// Fluctuation field for an already realized environment.
pub fn fluctuations_for(plan: &FluctuationPlan, sum: &ConditionalSum) -> Result<FluctuationSample> {
    let k = plan.a_grid.len();
    let sqrt_n = (sum.n() as f64).sqrt();
    let mut out = FluctuationSample {
        n: sum.n(),
        replica: 0,
        seed: 0,
        a_grid: plan.a_grid.clone(),
        theta: plan.theta.clone(),
        x: Vec::with_capacity(k),
        x1: Vec::with_capacity(k),
        x2: Vec::with_capacity(k),
        rate_n: Vec::with_capacity(k),
        theta_n: Vec::with_capacity(k),
    };
    for i in 0..k {
        let v = sum.psi(plan.theta[i]);
        out.x.push(sqrt_n * (v.psi - plan.g[i]));
        out.x1.push(sqrt_n * (v.d1 - plan.g1[i]));
        out.x2.push(sqrt_n * (v.d2 - plan.g2[i]));
        match sum.solve_saddle(plan.a_grid[i], plan.curves.theta_star()) {
            Ok(sol) => {
                out.rate_n.push(Some(sol.rate));
                out.theta_n.push(Some(sol.theta));
            }
            Err(Error::OutOfRange { .. }) => {
                out.rate_n.push(None);
                out.theta_n.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// `n(I_n − I + n^{−1/2}X)`, the remainder measured from the decomposition.
pub fn measured_residual(n: usize, rate_n: f64, rate: f64, x: f64) -> f64 {
    let nf = n as f64;
    nf * (rate_n - rate + x / nf.sqrt())
}

/// `X′² / (2[g″ + n^{−1/2}X″])`.
pub fn predicted_residual(n: usize, g2: f64, x1: f64, x2: f64) -> f64 {
    x1 * x1 / (2.0 * (g2 + x2 / (n as f64).sqrt()))
}

/// Leading term `−n^{−1/2}X′ / (g″ + n^{−1/2}X″)` of `θ_n(a) − θ(a)`.
pub fn predicted_delta(n: usize, g2: f64, x1: f64, x2: f64) -> f64 {
    let s = (n as f64).sqrt();
    -(x1 / s) / (g2 + x2 / s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub stderr_mean: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Self {
        let (mean, variance) = mean_var(values);
        let k = values.len() as f64;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for v in values {
            let d = v - mean;
            m2 += d * d;
            m3 += d * d * d;
            m4 += d * d * d * d;
        }
        m2 /= k;
        m3 /= k;
        m4 /= k;
        let (skewness, excess_kurtosis) = if m2 > 0.0 {
            (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
        } else {
            (0.0, 0.0)
        };
        Self {
            mean,
            variance,
            stderr_mean: (variance / k).sqrt(),
            skewness,
            excess_kurtosis,
        }
    }
}

/// Per-threshold comparison of the measured and predicted remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub a: f64,
    pub count: usize,
    pub mean_measured: f64,
    pub mean_predicted: f64,
    pub median_abs_error: f64,
    /// Median of `|δ_n − leading term|`.
    pub median_abs_delta_error: f64,
    pub median_abs_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcltReport {
    pub n: usize,
    pub replicas: usize,
    pub a_grid: Vec<f64>,
    pub theta: Vec<f64>,
    pub empirical_cov: Vec<Vec<f64>>,
    pub analytic_cov: Vec<Vec<f64>>,
    pub empirical_min_eigenvalue: f64,
    pub analytic_min_eigenvalue: f64,
    pub empirical_psd: bool,
    pub analytic_psd: bool,
    pub max_abs_cov_error: f64,
    /// `max_abs_cov_error` divided by the largest analytic diagonal entry.
    pub max_rel_cov_error: f64,
    pub x_moments: Vec<Moments>,
    pub residual_stats: Vec<ResidualStats>,
}

impl FcltReport {
    /// `a,a_prime,empirical,analytic` rows for plotting.
    pub fn covariance_csv(&self) -> String {
        let mut out = String::from("a,a_prime,empirical,analytic\n");
        for (i, a) in self.a_grid.iter().enumerate() {
            for (j, b) in self.a_grid.iter().enumerate() {
                out.push_str(&format!(
                    "{a:?},{b:?},{:?},{:?}\n",
                    self.empirical_cov[i][j], self.analytic_cov[i][j]
                ));
            }
        }
        out
    }
}

fn min_eigenvalue(m: &[Vec<f64>]) -> f64 {
    let k = m.len();
    let mat = DMatrix::from_fn(k, k, |i, j| m[i][j]);
    mat.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// `E[(f(Wθ_i) − g(θ_i))(f(Wθ_j) − g(θ_j))]` on the plan's grid.
pub fn analytic_covariance(plan: &FluctuationPlan) -> Result<Vec<Vec<f64>>> {
    let k = plan.theta.len();
    let mut cov = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let c = plan.curves.fluctuation_covariance(plan.theta[i], plan.theta[j])?;
            cov[i][j] = c;
            cov[j][i] = c;
        }
    }
    Ok(cov)
}

pub fn fclt_report(samples: &[FluctuationSample], plan: &FluctuationPlan) -> Result<FcltReport> {
    if samples.len() < MIN_REPLICAS {
        return Err(Error::InsufficientReplicas {
            got: samples.len(),
            required: MIN_REPLICAS,
        });
    }
    let n = samples[0].n;
    if let Some(s) = samples.iter().find(|s| s.n != n || s.a_grid != plan.a_grid) {
        return Err(Error::MismatchedRuns(format!(
            "replica {} has n = {} or a different threshold grid",
            s.replica, s.n
        )));
    }
    let k = plan.a_grid.len();
    let r = samples.len() as f64;

    let means: Vec<f64> = (0..k).map(|i| samples.iter().map(|s| s.x[i]).sum::<f64>() / r).collect();
    let mut empirical = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let c = samples
                .iter()
                .map(|s| (s.x[i] - means[i]) * (s.x[j] - means[j]))
                .sum::<f64>()
                / (r - 1.0);
            empirical[i][j] = c;
            empirical[j][i] = c;
        }
    }
    let analytic = analytic_covariance(plan)?;

    let mut max_abs = 0.0f64;
    let mut max_diag = 0.0f64;
    for i in 0..k {
        max_diag = max_diag.max(analytic[i][i]);
        for j in 0..k {
            max_abs = max_abs.max((empirical[i][j] - analytic[i][j]).abs());
        }
    }
    let max_rel = if max_diag > 0.0 {
        max_abs / max_diag
    } else if max_abs == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };

    let emp_min = min_eigenvalue(&empirical);
    let ana_min = min_eigenvalue(&analytic);

    let x_moments = (0..k)
        .map(|i| Moments::of(&samples.iter().map(|s| s.x[i]).collect::<Vec<_>>()))
        .collect();

    let mut residual_stats = Vec::with_capacity(k);
    for i in 0..k {
        let mut measured = Vec::new();
        let mut predicted = Vec::new();
        let mut abs_err = Vec::new();
        let mut delta_err = Vec::new();
        let mut delta_abs = Vec::new();
        for s in samples {
            let (Some(rate_n), Some(theta_n)) = (s.rate_n[i], s.theta_n[i]) else {
                continue;
            };
            let m = measured_residual(n, rate_n, plan.rate[i], s.x[i]);
            let p = predicted_residual(n, plan.g2[i], s.x1[i], s.x2[i]);
            let delta = theta_n - plan.theta[i];
            measured.push(m);
            predicted.push(p);
            abs_err.push((m - p).abs());
            delta_abs.push(delta.abs());
            delta_err.push((delta - predicted_delta(n, plan.g2[i], s.x1[i], s.x2[i])).abs());
        }
        let count = measured.len();
        let avg = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
        residual_stats.push(ResidualStats {
            a: plan.a_grid[i],
            count,
            mean_measured: avg(&measured),
            mean_predicted: avg(&predicted),
            median_abs_error: median(&abs_err).unwrap_or(f64::NAN),
            median_abs_delta_error: median(&delta_err).unwrap_or(f64::NAN),
            median_abs_delta: median(&delta_abs).unwrap_or(f64::NAN),
        });
    }

    Ok(FcltReport {
        n,
        replicas: samples.len(),
        a_grid: plan.a_grid.clone(),
        theta: plan.theta.clone(),
        empirical_cov: empirical,
        analytic_cov: analytic,
        empirical_min_eigenvalue: emp_min,
        analytic_min_eigenvalue: ana_min,
        empirical_psd: emp_min >= -PSD_TOLERANCE,
        analytic_psd: ana_min >= -PSD_TOLERANCE,
        max_abs_cov_error: max_abs,
        max_rel_cov_error: max_rel,
        x_moments,
        residual_stats,
    })
}

/// Draws `replicas` fluctuation samples with indices `0..replicas` and
/// summarizes them.
pub fn run_fclt(
    wm: &WeightModel,
    cm: &CumulantModel,
    curves: &DeterministicCurves,
    a_grid: &[f64],
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<FcltReport> {
    let plan = FluctuationPlan::new(curves, a_grid)?;
    let samples = (0..replicas as u64)
        .map(|r| sample_fluctuations(&plan, wm, cm, n, r, seed))
        .collect::<Result<Vec<_>>>()?;
    fclt_report(&samples, &plan)
}
