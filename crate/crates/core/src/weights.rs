//! Weight (environment) distributions.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::quadrature::{self, AdaptiveOptions};

/// Interval `[c, d]` on which the weight density is bounded below by `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityFloor {
    pub c: f64,
    pub d: f64,
    pub p: f64,
}

/// Law of the holding time `τ` in the T-cell weight `W = τ⁻¹ exp(-τ⁻¹)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauModel {
    Exponential { rate: f64 },
    Lognormal { mu: f64, s: f64 },
}

impl Default for TauModel {
    fn default() -> Self {
        TauModel::Exponential { rate: 1.0 }
    }
}

/// User-supplied weight law.
pub trait CustomWeight: Send + Sync + fmt::Debug {
    fn sample(&self, rng: &mut dyn RngCore) -> f64;
    fn expect(&self, h: &dyn Fn(f64) -> f64) -> Result<f64>;
    /// `P(W ≠ 0)`; must be positive.
    fn nonzero_probability(&self) -> f64;

    fn density_floor(&self) -> Option<DensityFloor> {
        None
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Constant(f64),
    Uniform { c: f64, d: f64 },
    TwoPoint { values: [f64; 2], probs: [f64; 2] },
    Tcell(TauModel),
    Custom(Arc<dyn CustomWeight>),
}

#[derive(Debug, Clone)]
pub struct WeightModel {
    repr: Repr,
}

impl PartialEq for WeightModel {
    fn eq(&self, other: &Self) -> bool {
        match (&self.repr, &other.repr) {
            (Repr::Constant(a), Repr::Constant(b)) => a == b,
            (Repr::Uniform { c: c1, d: d1 }, Repr::Uniform { c: c2, d: d2 }) => c1 == c2 && d1 == d2,
            (Repr::TwoPoint { values: v1, probs: p1 }, Repr::TwoPoint { values: v2, probs: p2 }) => {
                v1 == v2 && p1 == p2
            }
            (Repr::Tcell(a), Repr::Tcell(b)) => a == b,
            (Repr::Custom(a), Repr::Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

/// `τ⁻¹ exp(-τ⁻¹)`, with the removable singularity at `τ → 0` filled by zero.
#[inline]
pub fn tcell_weight(tau: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    let r = 1.0 / tau;
    if r > 745.0 {
        0.0
    } else {
        r * (-r).exp()
    }
}

const EXP_TRUNCATION: f64 = 60.0;
const LOGNORMAL_TRUNCATION: f64 = 12.0;

impl WeightModel {
    pub fn constant(c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::InvalidModel(format!("constant weight must be finite, got {c}")));
        }
        if c == 0.0 {
            return Err(Error::InvalidModel("constant weight 0 gives P(|W| > 0) = 0".into()));
        }
        Ok(Self {
            repr: Repr::Constant(c),
        })
    }

    pub fn uniform(c: f64, d: f64) -> Result<Self> {
        if !(c.is_finite() && d.is_finite() && c < d) {
            return Err(Error::InvalidModel(format!("uniform weight needs finite c < d, got [{c}, {d}]")));
        }
        Ok(Self {
            repr: Repr::Uniform { c, d },
        })
    }

    pub fn two_point(values: [f64; 2], probs: [f64; 2]) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("two-point values must be finite".into()));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || ((probs[0] + probs[1]) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!("two-point probabilities must be in [0, 1] and sum to 1, got {probs:?}")));
        }
        let nonzero: f64 = values.iter().zip(&probs).filter(|(v, _)| **v != 0.0).map(|(_, p)| p).sum();
        if nonzero <= 0.0 {
            return Err(Error::InvalidModel("two-point weight gives P(|W| > 0) = 0".into()));
        }
        Ok(Self {
            repr: Repr::TwoPoint { values, probs },
        })
    }

    /// `{0, 1}`-valued loss indicator with `P(W = 1) = q`.
    pub fn indicator(q: f64) -> Result<Self> {
        Self::two_point([0.0, 1.0], [1.0 - q, q])
    }

    pub fn tcell(tau: TauModel) -> Result<Self> {
        match tau {
            TauModel::Exponential { rate } if !(rate.is_finite() && rate > 0.0) => {
                return Err(Error::InvalidModel(format!("exponential rate must be positive, got {rate}")))
            }
            TauModel::Lognormal { mu, s } if !(mu.is_finite() && s.is_finite() && s > 0.0) => {
                return Err(Error::InvalidModel(format!("lognormal needs finite mu and s > 0, got ({mu}, {s})")))
            }
            _ => {}
        }
        Ok(Self {
            repr: Repr::Tcell(tau),
        })
    }

    pub fn custom(model: Arc<dyn CustomWeight>) -> Result<Self> {
        if !(model.nonzero_probability() > 0.0) {
            return Err(Error::InvalidModel("custom weight cannot certify P(|W| > 0) > 0".into()));
        }
        Ok(Self {
            repr: Repr::Custom(model),
        })
    }

    pub fn name(&self) -> &'static str {
        match self.repr {
            Repr::Constant(_) => "constant",
            Repr::Uniform { .. } => "uniform",
            Repr::TwoPoint { .. } => "two_point",
            Repr::Tcell(_) => "tcell",
            Repr::Custom(_) => "custom",
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.repr, Repr::Constant(_))
    }

    /// Whether every draw lies in `{0, 1}`.
    pub fn is_indicator(&self) -> bool {
        match &self.repr {
            Repr::Constant(c) => *c == 1.0,
            Repr::TwoPoint { values, probs } => values
                .iter()
                .zip(probs)
                .all(|(&v, &p)| p == 0.0 || v == 0.0 || v == 1.0),
            _ => false,
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.repr {
            Repr::Constant(c) => *c,
            Repr::Uniform { c, d } => c + (d - c) * rng.random::<f64>(),
            Repr::TwoPoint { values, probs } => {
                if rng.random::<f64>() < probs[0] {
                    values[0]
                } else {
                    values[1]
                }
            }
            Repr::Tcell(TauModel::Exponential { rate }) => {
                let u: f64 = rng.random();
                tcell_weight(-(1.0 - u).ln() / rate)
            }
            Repr::Tcell(TauModel::Lognormal { mu, s }) => {
                let z: f64 = StandardNormal.sample(rng);
                tcell_weight((mu + s * z).exp())
            }
            Repr::Custom(c) => {
                let mut r = DynRng(rng);
                c.sample(&mut r)
            }
        }
    }

    /// `E[h(W)]`: closed form for atomic laws, adaptive Gauss–Legendre
    /// quadrature (relative tolerance 1e-10, at most 2¹⁴ nodes) otherwise.
    pub fn expect<H: Fn(f64) -> f64>(&self, h: H) -> Result<f64> {
        let opts = AdaptiveOptions::default();
        match &self.repr {
            Repr::Constant(c) => Ok(h(*c)),
            Repr::TwoPoint { values, probs } => {
                let mut s = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    if *p > 0.0 {
                        s += p * h(*v);
                    }
                }
                Ok(s)
            }
            Repr::Uniform { c, d } => {
                let len = d - c;
                Ok(quadrature::integrate(&h, *c, *d, opts)? / len)
            }
            Repr::Tcell(TauModel::Exponential { rate }) => quadrature::integrate(
                |u| h(tcell_weight(u / rate)) * (-u).exp(),
                0.0,
                EXP_TRUNCATION,
                opts,
            ),
            Repr::Tcell(TauModel::Lognormal { mu, s }) => {
                let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
                quadrature::integrate(
                    |z| h(tcell_weight((mu + s * z).exp())) * norm * (-0.5 * z * z).exp(),
                    -LOGNORMAL_TRUNCATION,
                    LOGNORMAL_TRUNCATION,
                    opts,
                )
            }
            Repr::Custom(c) => c.expect(&h),
        }
    }

    /// `E[W^k]`.
    pub fn moment(&self, k: u32) -> Result<f64> {
        match &self.repr {
            Repr::Constant(c) => Ok(c.powi(k as i32)),
            Repr::Uniform { c, d } => {
                let k1 = k as i32 + 1;
                Ok((d.powi(k1) - c.powi(k1)) / (k1 as f64 * (d - c)))
            }
            _ => self.expect(|w| w.powi(k as i32)),
        }
    }

    pub fn mean(&self) -> Result<f64> {
        self.moment(1)
    }

    /// Lower bound for the density on an interval, when the law has one.
    pub fn density_floor(&self) -> Option<DensityFloor> {
        match &self.repr {
            Repr::Constant(_) | Repr::TwoPoint { .. } => None,
            Repr::Uniform { c, d } => Some(DensityFloor {
                c: *c,
                d: *d,
                p: 1.0 / (d - c),
            }),
            Repr::Tcell(tau) => Some(tcell_density_floor(*tau)),
            Repr::Custom(c) => c.density_floor(),
        }
    }
}

/// Density of `W = τ⁻¹e^{-τ⁻¹}` at `w ∈ (0, 1/e)`.
///
/// With `r = 1/τ` the equation `r e^{-r} = w` has one root below and one
/// above `r = 1`; each contributes `f_τ(τ)/|dW/dτ|` with
/// `|dW/dτ| = e^{-r} r² |r - 1|`.
pub fn tcell_density(tau: TauModel, w: f64) -> f64 {
    let h = |r: f64| r * (-r).exp() - w;
    let bisect = |mut lo: f64, mut hi: f64| {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (h(mid) > 0.0) == (h(lo) > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let r_small = bisect(0.0, 1.0);
    let r_large = bisect(1.0, 800.0);
    let tau_pdf = |t: f64| match tau {
        TauModel::Exponential { rate } => rate * (-rate * t).exp(),
        TauModel::Lognormal { mu, s } => {
            let z = (t.ln() - mu) / s;
            (-0.5 * z * z).exp() / (t * s * (2.0 * std::f64::consts::PI).sqrt())
        }
    };
    [r_small, r_large]
        .iter()
        .map(|&r| tau_pdf(1.0 / r) / ((-r).exp() * r * r * (r - 1.0).abs()))
        .sum()
}

fn tcell_density_floor(tau: TauModel) -> DensityFloor {
    let (c, d) = (0.1, 0.3);
    let min = (0..=200)
        .map(|i| tcell_density(tau, c + (d - c) * i as f64 / 200.0))
        .fold(f64::INFINITY, f64::min);
    DensityFloor { c, d, p: 0.9 * min }
}

struct DynRng<'a, R: ?Sized>(&'a mut R);

impl<R: Rng + ?Sized> RngCore for DynRng<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}
