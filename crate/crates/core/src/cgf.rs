//! Summand distributions described by their cumulant generating function.
//!
//! A [`CumulantModel`] carries `f(θ) = log E[exp(θZ)]` with its first three
//! derivatives, the complex moment generating function, and a sampler for the
//! exponentially tilted law `exp(ηz) / M(η) · P(dz)`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Callbacks for a user-supplied summand law.
///
/// Implementors are responsible for the same contract the built-in models
/// satisfy: `cgf(0) = 0`, strict convexity, a finite MGF on the whole real
/// line, and mutually consistent derivatives.
pub trait CustomCumulant: Send + Sync + fmt::Debug {
    fn cgf(&self, theta: f64) -> f64;
    fn cgf_d1(&self, theta: f64) -> f64;
    fn cgf_d2(&self, theta: f64) -> f64;
    fn cgf_d3(&self, theta: f64) -> f64;
    fn mgf(&self, zeta: Complex64) -> Complex64;
    fn sample_tilted(&self, tilt: f64, rng: &mut dyn RngCore) -> f64;

    fn lattice_span(&self) -> Option<f64> {
        None
    }

    /// `(value, probability)` pairs when the law has finite support.
    fn finite_support(&self) -> Option<Vec<(f64, f64)>> {
        None
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Gaussian { sigma2: f64 },
    Binomial { trials: u32, p: f64, logit_p: f64 },
    Custom(Arc<dyn CustomCumulant>),
}

/// Distribution of a single summand `Z`.
#[derive(Debug, Clone)]
pub struct CumulantModel {
    repr: Repr,
}

/// `f` and its first three derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgfValues {
    pub f: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl PartialEq for CumulantModel {
    fn eq(&self, other: &Self) -> bool {
        match (&self.repr, &other.repr) {
            (Repr::Gaussian { sigma2: a }, Repr::Gaussian { sigma2: b }) => a == b,
            (Repr::Binomial { trials: m1, p: p1, .. }, Repr::Binomial { trials: m2, p: p2, .. }) => {
                m1 == m2 && p1 == p2
            }
            (Repr::Custom(a), Repr::Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl CumulantModel {
    /// Centered Gaussian with variance `sigma2`.
    pub fn gaussian(sigma2: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(Error::InvalidModel(format!("gaussian variance must be positive and finite, got {sigma2}")));
        }
        Ok(Self {
            repr: Repr::Gaussian { sigma2 },
        })
    }

    /// Binomial with `trials` trials and success probability `p`.
    pub fn binomial(trials: u32, p: f64) -> Result<Self> {
        if trials == 0 {
            return Err(Error::InvalidModel("binomial needs at least one trial".into()));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidModel(format!("binomial success probability must lie in (0, 1), got {p}")));
        }
        Ok(Self {
            repr: Repr::Binomial {
                trials,
                p,
                logit_p: (p / (1.0 - p)).ln(),
            },
        })
    }

    pub fn bernoulli(p: f64) -> Result<Self> {
        Self::binomial(1, p)
    }

    pub fn custom(model: Arc<dyn CustomCumulant>) -> Self {
        Self {
            repr: Repr::Custom(model),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.repr {
            Repr::Gaussian { .. } => "gaussian",
            Repr::Binomial { .. } => "binomial",
            Repr::Custom(_) => "custom",
        }
    }

    pub fn cgf(&self, theta: f64) -> f64 {
        match &self.repr {
            Repr::Gaussian { sigma2 } => 0.5 * sigma2 * theta * theta,
            Repr::Binomial { trials, p, .. } => {
                let m = *trials as f64;
                if theta <= 30.0 {
                    m * (p * theta.exp_m1()).ln_1p()
                } else {
                    m * (theta + p.ln() + ((1.0 - p) / p * (-theta).exp()).ln_1p())
                }
            }
            Repr::Custom(c) => c.cgf(theta),
        }
    }

    pub fn cgf_d1(&self, theta: f64) -> f64 {
        self.eval(theta).d1
    }

    pub fn cgf_d2(&self, theta: f64) -> f64 {
        self.eval(theta).d2
    }

    pub fn cgf_d3(&self, theta: f64) -> f64 {
        self.eval(theta).d3
    }

    /// All four values at once; cheaper than separate calls for the binomial.
    #[inline]
    pub fn eval(&self, theta: f64) -> CgfValues {
        match &self.repr {
            Repr::Gaussian { sigma2 } => CgfValues {
                f: 0.5 * sigma2 * theta * theta,
                d1: sigma2 * theta,
                d2: *sigma2,
                d3: 0.0,
            },
            Repr::Binomial { trials, logit_p, .. } => {
                let m = *trials as f64;
                let x = theta + logit_p;
                let s = sigmoid(x);
                let sc = sigmoid(-x);
                let v = s * sc;
                CgfValues {
                    f: self.cgf(theta),
                    d1: m * s,
                    d2: m * v,
                    d3: m * v * (sc - s),
                }
            }
            Repr::Custom(c) => CgfValues {
                f: c.cgf(theta),
                d1: c.cgf_d1(theta),
                d2: c.cgf_d2(theta),
                d3: c.cgf_d3(theta),
            },
        }
    }

    /// `M(ζ) = E[exp(ζ Z)]` for complex `ζ`.
    pub fn mgf(&self, zeta: Complex64) -> Complex64 {
        match &self.repr {
            Repr::Gaussian { sigma2 } => (0.5 * sigma2 * zeta * zeta).exp(),
            Repr::Binomial { trials, p, .. } => {
                let base = Complex64::new(1.0, 0.0) + *p * (zeta.exp() - 1.0);
                base.powu(*trials)
            }
            Repr::Custom(c) => c.mgf(zeta),
        }
    }

    /// `log |M(w(θ + it)) / M(wθ)|`, always `≤ 0`.
    pub fn log_mgf_ratio_modulus(&self, w: f64, theta: f64, t: f64) -> f64 {
        match &self.repr {
            Repr::Gaussian { sigma2 } => -0.5 * sigma2 * w * w * t * t,
            Repr::Binomial { trials, logit_p, .. } => {
                // Per trial |1 - q + q e^{iwt}|² = 1 - 4q(1-q) sin²(wt/2),
                // with q the success probability tilted by wθ.
                let x = w * theta + logit_p;
                let q = sigmoid(x) * sigmoid(-x);
                let s = (0.5 * w * t).sin();
                0.5 * (*trials as f64) * (-4.0 * q * s * s).ln_1p()
            }
            Repr::Custom(c) => {
                let num = c.mgf(Complex64::new(w * theta, w * t)).norm().ln();
                let den = c.cgf(w * theta);
                (num - den).min(0.0)
            }
        }
    }

    /// `|M(w(θ + it)) / M(wθ)| ∈ [0, 1]`.
    pub fn mgf_ratio_modulus(&self, w: f64, theta: f64, t: f64) -> f64 {
        self.log_mgf_ratio_modulus(w, theta, t).exp()
    }

    pub fn lattice_span(&self) -> Option<f64> {
        match &self.repr {
            Repr::Gaussian { .. } => None,
            Repr::Binomial { .. } => Some(1.0),
            Repr::Custom(c) => c.lattice_span(),
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.repr {
            Repr::Gaussian { .. } => 0.0,
            Repr::Binomial { trials, p, .. } => *trials as f64 * p,
            Repr::Custom(c) => c.cgf_d1(0.0),
        }
    }

    pub fn variance(&self) -> f64 {
        match &self.repr {
            Repr::Gaussian { sigma2 } => *sigma2,
            Repr::Binomial { trials, p, .. } => *trials as f64 * p * (1.0 - p),
            Repr::Custom(c) => c.cgf_d2(0.0),
        }
    }

    /// `(value, probability)` pairs for finitely supported laws.
    pub fn finite_support(&self) -> Option<Vec<(f64, f64)>> {
        match &self.repr {
            Repr::Gaussian { .. } => None,
            Repr::Binomial { trials, p, .. } => {
                let m = *trials;
                let q = 1.0 - p;
                let mut out = Vec::with_capacity(m as usize + 1);
                let mut coef = 1.0f64;
                for k in 0..=m {
                    if k > 0 {
                        coef *= (m - k + 1) as f64 / k as f64;
                    }
                    out.push((k as f64, coef * p.powi(k as i32) * q.powi((m - k) as i32)));
                }
                Some(out)
            }
            Repr::Custom(c) => c.finite_support(),
        }
    }

    /// Sampler for the law tilted by `tilt`; reuse it when drawing repeatedly.
    pub fn tilted_sampler(&self, tilt: f64) -> TiltedSampler {
        match &self.repr {
            Repr::Gaussian { sigma2 } => TiltedSampler::Normal {
                mean: sigma2 * tilt,
                sd: sigma2.sqrt(),
            },
            Repr::Binomial { trials, logit_p, .. } => {
                let q = sigmoid(tilt + logit_p);
                if *trials == 1 {
                    TiltedSampler::Bernoulli { q }
                } else {
                    TiltedSampler::Binomial(
                        rand_distr::Binomial::new(*trials as u64, q).expect("tilted probability lies in [0, 1]"),
                    )
                }
            }
            Repr::Custom(c) => TiltedSampler::Custom {
                model: Arc::clone(c),
                tilt,
            },
        }
    }

    /// One draw from the law with density `exp(tilt·z)/M(tilt)` relative to `Z`.
    pub fn tilted_sample<R: Rng + ?Sized>(&self, tilt: f64, rng: &mut R) -> f64 {
        self.tilted_sampler(tilt).sample(rng)
    }

    pub(crate) fn is_gaussian(&self) -> bool {
        matches!(self.repr, Repr::Gaussian { .. })
    }
}

/// Precomputed tilted law.
#[derive(Debug, Clone)]
pub enum TiltedSampler {
    Normal { mean: f64, sd: f64 },
    Bernoulli { q: f64 },
    Binomial(rand_distr::Binomial),
    Custom { model: Arc<dyn CustomCumulant>, tilt: f64 },
}

impl TiltedSampler {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            TiltedSampler::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            TiltedSampler::Bernoulli { q } => {
                if rng.random::<f64>() < *q {
                    1.0
                } else {
                    0.0
                }
            }
            TiltedSampler::Binomial(b) => b.sample(rng) as f64,
            TiltedSampler::Custom { model, tilt } => {
                let mut dyn_rng = DynRng(rng);
                model.sample_tilted(*tilt, &mut dyn_rng)
            }
        }
    }
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use proptest::prelude::*;

    fn models() -> Vec<CumulantModel> {
        vec![
            CumulantModel::gaussian(1.0).unwrap(),
            CumulantModel::gaussian(2.5).unwrap(),
            CumulantModel::bernoulli(0.5).unwrap(),
            CumulantModel::binomial(10, 0.5).unwrap(),
            CumulantModel::binomial(10, 0.1).unwrap(),
            CumulantModel::binomial(3, 0.9).unwrap(),
        ]
    }

    #[test]
    fn eval_cgf_examples() {
        let g = CumulantModel::gaussian(1.0).unwrap();
        assert_eq!(g.cgf(2.0), 2.0);
        for (m, p) in [(1, 0.5), (10, 0.1), (7, 0.93)] {
            assert_eq!(CumulantModel::binomial(m, p).unwrap().cgf(0.0), 0.0);
        }
        // 10·ln(0.5 + 0.5e), evaluated independently in extended precision.
        let b = CumulantModel::binomial(10, 0.5).unwrap();
        assert!((b.cgf(1.0) - 6.201_145_069_582_775).abs() < 1e-13);
    }

    #[test]
    fn binomial_cgf_branches_agree_and_stay_finite() {
        let b = CumulantModel::binomial(4, 0.3).unwrap();
        let direct = |t: f64| 4.0 * (0.7 + 0.3 * t.exp()).ln();
        for t in [-40.0, -3.0, 0.7, 29.9, 30.1, 45.0] {
            assert!((b.cgf(t) - direct(t)).abs() < 1e-12 * direct(t).abs().max(1.0), "theta {t}");
        }
        assert!(b.cgf(2000.0).is_finite());
        assert!((b.cgf_d1(2000.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn mean_and_variance_are_derivatives_at_zero() {
        for m in models() {
            let v = m.eval(0.0);
            assert!((v.d1 - m.mean()).abs() < 1e-14);
            assert!((v.d2 - m.variance()).abs() < 1e-14);
            assert_eq!(v.f, 0.0);
        }
    }

    #[test]
    fn convexity_and_finite_difference_consistency() {
        for m in models() {
            for i in 0..=100 {
                let theta = -5.0 + 0.1 * i as f64;
                let h = 1e-5 * theta.abs().max(1.0);
                let v = m.eval(theta);
                assert!(v.d2 > 0.0);
                let fd1 = (m.cgf(theta + h) - m.cgf(theta - h)) / (2.0 * h);
                let fd2 = (m.cgf_d1(theta + h) - m.cgf_d1(theta - h)) / (2.0 * h);
                let fd3 = (m.cgf_d2(theta + h) - m.cgf_d2(theta - h)) / (2.0 * h);
                assert!((fd1 - v.d1).abs() <= 1e-6 * v.d1.abs().max(1e-3), "{} f1 at {theta}", m.name());
                assert!((fd2 - v.d2).abs() <= 1e-6 * v.d2.abs(), "{} f2 at {theta}", m.name());
                assert!((fd3 - v.d3).abs() <= 1e-6 * v.d2.abs(), "{} f3 at {theta}", m.name());
            }
        }
    }

    #[test]
    fn modulus_examples() {
        let g = CumulantModel::gaussian(1.0).unwrap();
        assert_eq!(g.mgf_ratio_modulus(2.0, 0.3, 0.0), 1.0);
        assert!((g.mgf_ratio_modulus(2.0, 0.3, 0.5) - (-0.5f64).exp()).abs() < 1e-15);
        // Against the complex MGF evaluated directly.
        let num = g.mgf(Complex64::new(0.6, 1.0)).norm();
        let den = g.mgf(Complex64::new(0.6, 0.0)).re;
        assert!((num / den - g.mgf_ratio_modulus(2.0, 0.3, 0.5)).abs() < 1e-14);

        let b = CumulantModel::bernoulli(0.5).unwrap();
        assert!((b.mgf_ratio_modulus(1.0, 0.0, 2.0 * std::f64::consts::PI) - 1.0).abs() < 1e-15);
        assert_eq!(b.mgf_ratio_modulus(1.0, 0.7, 0.0), 1.0);
    }

    #[test]
    fn binomial_modulus_matches_complex_mgf() {
        let b = CumulantModel::binomial(5, 0.3).unwrap();
        for (w, th, t) in [(0.4, 1.2, 2.0), (1.7, -0.5, 0.3), (2.0, 0.1, 9.0)] {
            let direct = b.mgf(Complex64::new(w * th, w * t)).norm() / b.mgf(Complex64::new(w * th, 0.0)).re;
            assert!((b.mgf_ratio_modulus(w, th, t) - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn lattice_flag() {
        let b = CumulantModel::binomial(3, 0.4).unwrap();
        let g = CumulantModel::gaussian(0.7).unwrap();
        assert_eq!(b.lattice_span(), Some(1.0));
        assert_eq!(g.lattice_span(), None);
        for k in 1..6 {
            let t = 2.0 * std::f64::consts::PI * k as f64;
            for theta in [-1.0, 0.0, 0.8] {
                assert!((b.mgf_ratio_modulus(1.0, theta, t) - 1.0).abs() < 1e-12);
                assert!(g.mgf_ratio_modulus(1.0, theta, t) < 1.0);
            }
        }
        assert!(g.mgf_ratio_modulus(0.01, 0.0, 1e-3) < 1.0);
    }

    #[test]
    fn finite_support_sums_to_one_and_matches_mean() {
        let b = CumulantModel::binomial(10, 0.3).unwrap();
        let s = b.finite_support().unwrap();
        assert_eq!(s.len(), 11);
        let total: f64 = s.iter().map(|(_, p)| p).sum();
        let mean: f64 = s.iter().map(|(v, p)| v * p).sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!((mean - 3.0).abs() < 1e-13);
        assert!(CumulantModel::gaussian(1.0).unwrap().finite_support().is_none());
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(CumulantModel::gaussian(-1.0).is_err());
        assert!(CumulantModel::gaussian(f64::NAN).is_err());
        assert!(CumulantModel::binomial(0, 0.5).is_err());
        assert!(CumulantModel::binomial(3, 1.0).is_err());
        assert!(CumulantModel::binomial(3, 0.0).is_err());
    }

    fn moments(m: &CumulantModel, tilt: f64, n: usize, seed: u64) -> (f64, f64, f64) {
        let mut rng = stream(seed, Domain::Sampler, 0);
        let sampler = m.tilted_sampler(tilt);
        let xs: Vec<f64> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
        let (mean, var) = crate::numeric::mean_var(&xs);
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n as f64;
        (mean, var, m4)
    }

    #[test]
    fn tilted_sampler_examples() {
        let n = 100_000;
        let g1 = CumulantModel::gaussian(1.0).unwrap();
        let (mean, _, _) = moments(&g1, 0.0, n, 1);
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());

        let g2 = CumulantModel::gaussian(2.0).unwrap();
        let (mean, var, m4) = moments(&g2, 1.5, n, 2);
        assert!((mean - 3.0).abs() < 4.0 * (2.0 / n as f64).sqrt());
        let var_se = ((m4 - var * var) / n as f64).sqrt();
        assert!((var - 2.0).abs() < 4.0 * var_se);

        let b = CumulantModel::bernoulli(0.5).unwrap();
        let (mean, _, _) = moments(&b, 3f64.ln(), n, 3);
        assert!((mean - 0.75).abs() < 4.0 * (0.75 * 0.25 / n as f64).sqrt());
    }

    #[test]
    fn tilted_sampler_matches_cgf_derivatives() {
        let n = 100_000;
        for (i, m) in models().iter().enumerate() {
            for (j, tilt) in [-1.3, 0.0, 0.4, 2.0].into_iter().enumerate() {
                let (mean, var, m4) = moments(m, tilt, n, 100 + (i * 10 + j) as u64);
                let v = m.eval(tilt);
                let mean_se = (v.d2 / n as f64).sqrt();
                let var_se = ((m4 - var * var).max(0.0) / n as f64).sqrt();
                assert!((mean - v.d1).abs() < 5.0 * mean_se, "{} tilt {tilt}: mean {mean} vs {}", m.name(), v.d1);
                assert!((var - v.d2).abs() < 5.0 * var_se, "{} tilt {tilt}: var {var} vs {}", m.name(), v.d2);
            }
        }
    }

    proptest! {
        #[test]
        fn modulus_never_exceeds_one(
            idx in 0usize..6,
            w in -5.0f64..5.0,
            theta in -3.0f64..3.0,
            t in -20.0f64..20.0,
        ) {
            let m = &models()[idx];
            let r = m.mgf_ratio_modulus(w, theta, t);
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert_eq!(m.mgf_ratio_modulus(w, theta, 0.0), 1.0);
        }
    }
}
