//! Globally adaptive Gauss–Legendre quadrature.
//!
//! Each panel carries a coarse estimate (one rule on the panel) and a refined
//! estimate (the same rule on both halves); their difference is the panel's
//! error estimate. The panel with the largest estimate is bisected until the
//! summed estimate meets the relative tolerance or the node budget runs out.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "rule order must be positive");
        let mut nodes = vec![0.0; order];
        let mut weights = vec![0.0; order];
        let n = order as f64;
        for i in 0..order.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    let (_, d) = legendre_with_derivative(order, x);
                    dp = d;
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[order - 1 - i] = x;
            weights[i] = w;
            weights[order - 1 - i] = w;
        }
        if order % 2 == 1 {
            nodes[order / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Returns `(∫ f, ∫ |f|)` over `[a, b]`.
    fn apply<F: FnMut(f64) -> f64>(&self, f: &mut F, a: f64, b: f64) -> (f64, f64) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = 0.0;
        let mut s_abs = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let v = f(mid + half * x);
            s += w * v;
            s_abs += w * v.abs();
        }
        (s * half, s_abs * half)
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        self.apply(&mut f, a, b).0
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}

const DEFAULT_ORDER: usize = 15;

fn default_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(DEFAULT_ORDER))
}

#[derive(Debug, Clone, Copy)]
pub struct AdaptiveOptions {
    pub rel_tol: f64,
    pub max_nodes: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_nodes: 1 << 14,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    left: (f64, f64),
    right: (f64, f64),
    err: f64,
}

impl Panel {
    fn build<F: FnMut(f64) -> f64>(rule: &GaussLegendre, f: &mut F, a: f64, b: f64, coarse: f64) -> Self {
        let m = 0.5 * (a + b);
        let left = rule.apply(f, a, m);
        let right = rule.apply(f, m, b);
        let err = (left.0 + right.0 - coarse).abs();
        Panel { a, b, left, right, err }
    }

    fn value(&self) -> f64 {
        self.left.0 + self.right.0
    }

    fn abs_value(&self) -> f64 {
        self.left.1 + self.right.1
    }
}

/// `∫_a^b f(x) dx` to relative tolerance `opts.rel_tol`.
///
/// An integral that is zero up to rounding is accepted once the error
/// estimate falls below a few ulps of `∫ |f|`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, opts: AdaptiveOptions) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidInput(format!("integration bounds must be finite: [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    let rule = default_rule();
    let k = rule.order();
    let coarse = rule.apply(&mut f, a, b).0;
    let mut panels = vec![Panel::build(rule, &mut f, a, b, coarse)];
    let mut nodes = 3 * k;
    loop {
        let total: f64 = panels.iter().map(Panel::value).sum();
        let total_abs: f64 = panels.iter().map(Panel::abs_value).sum();
        let err: f64 = panels.iter().map(|p| p.err).sum();
        let target = (opts.rel_tol * total.abs()).max(64.0 * f64::EPSILON * total_abs);
        if err <= target || err == 0.0 {
            return Ok(total);
        }
        if nodes + 4 * k > opts.max_nodes {
            return Err(Error::QuadratureFailure {
                tol: opts.rel_tol,
                nodes: opts.max_nodes,
                estimate: err,
            });
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
            .map(|(i, _)| i)
            .expect("at least one panel");
        let p = panels.swap_remove(worst);
        let m = 0.5 * (p.a + p.b);
        panels.push(Panel::build(rule, &mut f, p.a, m, p.left.0));
        panels.push(Panel::build(rule, &mut f, m, p.b, p.right.0));
        nodes += 4 * k;
    }
}
