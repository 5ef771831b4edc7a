//! Independent reference values for the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::io::Write;

/// Standard normal density.
pub fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `P(N(0,1) ≥ x)`.
///
/// Power series for `Φ` when `|x| < 3`, continued fraction for the upper
/// tail otherwise.
pub fn normal_q(x: f64) -> f64 {
    if x < 0.0 {
        return 1.0 - normal_q(-x);
    }
    if x < 3.0 {
        // Φ(x) − 1/2 = φ(x) Σ x^{2k+1} / (1·3·5···(2k+1))
        let mut term = x;
        let mut sum = x;
        let mut k = 0.0;
        while term.abs() > 1e-18 * sum.abs() {
            k += 1.0;
            term *= x * x / (2.0 * k + 1.0);
            sum += term;
        }
        return 0.5 - phi(x) * sum;
    }
    // Q(x) = φ(x) / (x + 1/(x + 2/(x + 3/(x + …)))), evaluated bottom-up.
    let mut tail = x;
    for k in (1..=200).rev() {
        tail = x + k as f64 / tail;
    }
    phi(x) / tail
}

/// `P(Bin(m, p) ≥ k)` by direct summation.
pub fn binomial_tail(m: u32, p: f64, k: u32) -> f64 {
    let mut total = 0.0;
    for j in k..=m {
        let mut c = 1.0;
        for i in 0..j {
            c *= (m - i) as f64 / (i + 1) as f64;
        }
        total += c * p.powi(j as i32) * (1.0 - p).powi((m - j) as i32);
    }
    total
}

/// Root of an increasing `f` on `[lo, hi]` by bisection.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Line written straight to the process stderr so it shows up whether or
/// not the harness captures test output.
pub fn report(line: &str) {
    let mut e = std::io::stderr().lock();
    let _ = writeln!(e, "{line}");
}


/// Compiled validator for one of the shipped schemas.
pub fn schema(name: &str) -> jsonschema::Validator {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let value: serde_json::Value = serde_json::from_str(&text).expect("schema is JSON");
    jsonschema::validator_for(&value).expect("schema compiles")
}

/// Validation errors of `instance` against `name`, one string per error.
pub fn schema_errors(name: &str, instance: &serde_json::Value) -> Vec<String> {
    schema(name).iter_errors(instance).map(|e| e.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_tail_table_values() {
        assert!((normal_q(5.0) / 2.8665e-7 - 1.0).abs() < 5e-4);
        assert!((normal_q(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_q(1.0) - 0.158_655_253_931_457).abs() < 1e-14);
        assert!((normal_q(3.0) - 1.349_898_031_630_095e-3).abs() < 1e-15);
        // Both branches agree where they meet.
        let below = 0.5 - phi(3.0) * {
            let mut t = 3.0;
            let mut s = 3.0;
            for k in 1..200 {
                t *= 9.0 / (2.0 * k as f64 + 1.0);
                s += t;
            }
            s
        };
        assert!((below / normal_q(3.0) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn binomial_tail_identity() {
        assert!((binomial_tail(10, 0.5, 7) - 176.0 / 1024.0).abs() < 1e-16);
        assert!((binomial_tail(5, 0.3, 0) - 1.0).abs() < 1e-15);
    }
}
