//! Acceptance gate. Each criterion is one test that prints a single
//! `acceptance <id>: PASS|FAIL | <details>` line and then asserts.

mod common;

use std::time::Instant;

use common::{normal_q, report, schema_errors};
use condtail::fclt::{fclt_report, run_fclt, sample_fluctuations, FluctuationPlan};
use condtail::oracle::{exact_enum, naive_mc, tilted_mc, McConfig};
use condtail::saddle::ConditionalSum;
use condtail::sldp::{check_conditions, sldp_estimate, TGrid, DEFAULT_DELTA1};
use condtail::{CumulantModel, DeterministicCurves, Environment, Error, WeightModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn verdict(id: u32, pass: bool, detail: String) {
    report(&format!("acceptance {id}: {} | {detail}", if pass { "PASS" } else { "FAIL" }));
    assert!(pass, "criterion {id}: {detail}");
}

fn gaussian() -> CumulantModel {
    CumulantModel::gaussian(1.0).unwrap()
}

fn uniform() -> WeightModel {
    WeightModel::uniform(0.0, 1.0).unwrap()
}

#[test]
fn criterion_1_gaussian_reference() {
    let start = Instant::now();
    let env = Environment::new(vec![1.0; 100]).unwrap();
    let sol = condtail::solve_saddle(&env, &gaussian(), 0.5, 1.0).unwrap();
    let est = sldp_estimate(&sol, 100).unwrap();
    let q5 = normal_q(5.0);
    let elapsed = start.elapsed().as_secs_f64();
    let oracle_ok = format!("{q5:.3e}") == "2.867e-7" && format!("{:.2e}", q5) == "2.87e-7";
    let ratio = est.value / q5;
    let pass = oracle_ok && (1.0..=1.08).contains(&ratio) && elapsed < 1.0;
    verdict(
        1,
        pass,
        format!("sldp = {:.5e}, Q(5) = {q5:.5e}, ratio = {ratio:.4} (want [1.00, 1.08]), {elapsed:.3}s", est.value),
    );
}

#[test]
fn criterion_2_enumerable_lattice_suite() {
    let start = Instant::now();
    let mut instances = 0;
    let mut tilted_fail = Vec::new();
    let mut naive_checked = 0;
    let mut naive_fail = Vec::new();
    let mut worst_z: f64 = 0.0;
    for p in [0.3, 0.5] {
        let cm = CumulantModel::bernoulli(p).unwrap();
        for random_w in [false, true] {
            for n in [8usize, 10, 12] {
                let env = if random_w {
                    Environment::draw(&uniform(), n, 2024, n as u64).unwrap()
                } else {
                    Environment::new(vec![1.0; n]).unwrap()
                };
                let sum = ConditionalSum::homogeneous(&env, &cm);
                let lo = sum.psi(0.0).d1;
                let hi = env.weights().iter().sum::<f64>() / n as f64;
                for (k, frac) in [0.25, 0.5, 0.75].into_iter().enumerate() {
                    instances += 1;
                    let a = lo + frac * (hi - lo);
                    let label = format!("p={p} W={} n={n} a={a:.4}", if random_w { "U" } else { "1" });
                    let exact = exact_enum(&env, &cm, a).unwrap().value;
                    let sol = sum.solve_saddle(a, 1.0).unwrap();
                    let seed = 1000 * n as u64 + 10 * k as u64 + random_w as u64 + (p * 100.0) as u64;
                    let cfg = McConfig::with_draws(1_000_000, 100, seed);
                    let t = tilted_mc(&env, &cm, a, &sol, &cfg).unwrap();
                    let z = (t.value - exact) / t.stderr.unwrap();
                    worst_z = worst_z.max(z.abs());
                    if z.abs() > 4.0 {
                        tilted_fail.push(format!("{label}: z={z:.2}"));
                    }
                    let naive = match naive_mc(&env, &cm, a, &McConfig { seed: seed + 7, ..cfg }) {
                        Ok(e) => Some(e),
                        Err(Error::InsufficientHits { .. }) => None,
                        Err(e) => panic!("{e}"),
                    };
                    if let Some(e) = naive.filter(|e| e.hits.unwrap_or(0) >= 100) {
                        naive_checked += 1;
                        let z = (e.value - exact) / e.stderr.unwrap();
                        if z.abs() > 4.0 {
                            naive_fail.push(format!("{label}: z={z:.2}"));
                        }
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = tilted_fail.is_empty() && naive_fail.is_empty() && elapsed < 120.0;
    verdict(
        2,
        pass,
        format!(
            "{instances} instances, tilted worst |z| = {worst_z:.2}, tilted misses {:?}, naive checked {naive_checked} misses {:?}, {elapsed:.1}s",
            tilted_fail, naive_fail
        ),
    );
}

#[test]
fn criterion_3_prefactor_convergence() {
    let a = 0.2;
    let mut errors = Vec::new();
    let mut detail = Vec::new();
    for n in [200usize, 800, 3200] {
        let env = Environment::draw(&uniform(), n, 2024, 0).unwrap();
        let sol = condtail::solve_saddle(&env, &gaussian(), a, 1.0).unwrap();
        let sldp = sldp_estimate(&sol, n).unwrap();
        let cfg = McConfig::with_draws(4_000_000, 100, 31 + n as u64);
        let mc = tilted_mc(&env, &gaussian(), a, &sol, &cfg).unwrap();
        let ratio = (mc.log_value - sldp.log_value).exp();
        // Conditionally on W the sum is N(0, Σ W²): closed-form cross-check.
        let s2: f64 = env.weights().iter().map(|w| w * w).sum();
        let exact = normal_q(n as f64 * a / s2.sqrt());
        errors.push((ratio - 1.0).abs());
        detail.push(format!(
            "n={n}: mc/sldp={ratio:.5} (rel se {:.2e}, exact/sldp={:.5})",
            mc.rel_stderr().unwrap(),
            exact / sldp.value
        ));
    }
    let pass = errors[0] > errors[1] && errors[1] > errors[2] && errors[2] <= 0.10;
    verdict(3, pass, detail.join("; "));
}

#[test]
fn criterion_4_fclt_covariance() {
    let start = Instant::now();
    let curves = DeterministicCurves::build(&uniform(), &gaussian(), 1.0).unwrap();
    let rep = run_fclt(&uniform(), &gaussian(), &curves, &[0.1, 0.2, 0.3], 10_000, 2000, 4).unwrap();
    let expect = [0.00018, 0.00288, 0.01458];
    let diag_ok = (0..3).all(|i| (rep.analytic_cov[i][i] / expect[i] - 1.0).abs() < 1e-6);
    let elapsed = start.elapsed().as_secs_f64();
    let pass = diag_ok && rep.max_rel_cov_error <= 0.15 && elapsed < 300.0;
    verdict(
        4,
        pass,
        format!(
            "analytic diag {:?}, empirical diag {:?}, max error / max diag = {:.4} (want <= 0.15), {elapsed:.1}s",
            (0..3).map(|i| format!("{:.6e}", rep.analytic_cov[i][i])).collect::<Vec<_>>(),
            (0..3).map(|i| format!("{:.6e}", rep.empirical_cov[i][i])).collect::<Vec<_>>(),
            rep.max_rel_cov_error
        ),
    );
}

#[test]
fn criterion_5_residual_formula() {
    let curves = DeterministicCurves::build(&uniform(), &gaussian(), 1.0).unwrap();
    let plan = FluctuationPlan::new(&curves, &[0.1, 0.2, 0.3]).unwrap();
    let mut medians = Vec::new();
    for n in [1_000usize, 10_000, 100_000] {
        let samples: Vec<_> = (0..500u64)
            .map(|r| sample_fluctuations(&plan, &uniform(), &gaussian(), n, r, 5).unwrap())
            .collect();
        let rep = fclt_report(&samples, &plan).unwrap();
        medians.push(rep.residual_stats.iter().map(|s| s.median_abs_error).collect::<Vec<_>>());
    }
    let decreasing = (0..3).all(|i| medians[0][i] > medians[1][i] && medians[1][i] > medians[2][i]);
    let detail = [0.1, 0.2, 0.3]
        .iter()
        .enumerate()
        .map(|(i, a)| format!("a={a}: {:.2e} > {:.2e} > {:.2e}", medians[0][i], medians[1][i], medians[2][i]))
        .collect::<Vec<_>>()
        .join("; ");
    verdict(5, decreasing, format!("median |r_measured - r_predicted| over n = 1e3, 1e4, 1e5: {detail}"));
}

#[test]
fn criterion_6_condition_diagnostics() {
    let mut cf_err: f64 = 0.0;
    let mut ratios = Vec::new();
    for n in [100usize, 1_000, 10_000] {
        let env = Environment::new(vec![1.0; n]).unwrap();
        let sol = condtail::solve_saddle(&env, &gaussian(), 0.5, 1.0).unwrap();
        let r = check_conditions(&env, &gaussian(), &sol, TGrid::default()).unwrap();
        let nf = n as f64;
        let closed = nf.sqrt() * (-nf * DEFAULT_DELTA1 * DEFAULT_DELTA1 / 2.0).exp();
        cf_err = cf_err.max((r.cf_sup / closed - 1.0).abs());
        ratios.push(r.theta_sqrt_n / nf.sqrt());
    }
    let spread = ratios.iter().map(|r| (r / ratios[0] - 1.0).abs()).fold(0.0, f64::max);
    let pass = cf_err <= 1e-8 && spread <= 1e-12;
    verdict(
        6,
        pass,
        format!("max cf_sup relative error {cf_err:.2e} (want <= 1e-8), theta_sqrt_n/sqrt(n) spread {spread:.2e} (want <= 1e-12)"),
    );
}

fn legendre_maxima() -> std::result::Result<(), String> {
    for seed in 0..50u64 {
        let env = Environment::draw(&uniform(), 300, seed, 0).unwrap();
        let cm = if seed % 2 == 0 { gaussian() } else { CumulantModel::binomial(3, 0.4).unwrap() };
        let sum = ConditionalSum::homogeneous(&env, &cm);
        let (lo, hi) = (sum.psi(0.0).d1, sum.psi(1.0).d1);
        let a = lo + (0.05 + 0.9 * (seed as f64 / 49.0)) * (hi - lo);
        let s = sum.solve_saddle(a, 1.0).map_err(|e| e.to_string())?;
        let obj = |t: f64| a * t - sum.psi(t).psi;
        if !(obj(s.theta) > obj(s.theta + 1e-4) && obj(s.theta) > obj(s.theta - 1e-4)) {
            return Err(format!("seed {seed}: theta {} is not a maximizer", s.theta));
        }
    }
    Ok(())
}

fn curve_shapes() -> std::result::Result<(), String> {
    let cases = [
        (uniform(), gaussian()),
        (uniform(), CumulantModel::binomial(10, 0.1).unwrap()),
        (WeightModel::tcell(Default::default()).unwrap(), CumulantModel::binomial(10, 0.1).unwrap()),
    ];
    for (wm, cm) in cases {
        let c = DeterministicCurves::build(&wm, &cm, 1.0).map_err(|e| e.to_string())?;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..100 {
            let t = i as f64 / 99.0;
            let g1 = c.g1(t).map_err(|e| e.to_string())?;
            if !(g1 > prev && c.g2(t).map_err(|e| e.to_string())? > 0.0) {
                return Err(format!("{}/{} at theta {t}", wm.name(), cm.name()));
            }
            prev = g1;
        }
    }
    Ok(())
}

fn tilted_moments() -> std::result::Result<(), String> {
    let check = |cm: CumulantModel, tilt: f64, mean: f64, var: f64, seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<f64> = (0..100_000).map(|_| cm.tilted_sample(tilt, &mut rng)).collect();
        let k = draws.len() as f64;
        let m = draws.iter().sum::<f64>() / k;
        let v = draws.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1.0);
        let m4 = draws.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / k;
        let se_mean = (var / k).sqrt();
        let se_var = ((m4 - var * var) / k).sqrt();
        if (m - mean).abs() > 4.0 * se_mean || (v - var).abs() > 4.0 * se_var.max(1e-12) {
            Err(format!("{} tilt {tilt}: mean {m}, var {v}", cm.name()))
        } else {
            Ok(())
        }
    };
    check(gaussian(), 0.0, 0.0, 1.0, 1)?;
    check(CumulantModel::gaussian(2.0).unwrap(), 1.5, 3.0, 2.0, 2)?;
    check(CumulantModel::bernoulli(0.5).unwrap(), 3f64.ln(), 0.75, 0.1875, 3)?;
    check(CumulantModel::binomial(10, 0.1).unwrap(), 1.0, {
        let q = 0.1 * 1f64.exp() / (0.9 + 0.1 * 1f64.exp());
        10.0 * q
    }, {
        let q = 0.1 * 1f64.exp() / (0.9 + 0.1 * 1f64.exp());
        10.0 * q * (1.0 - q)
    }, 4)
}

fn oracle_determinism() -> std::result::Result<(), String> {
    let env = Environment::draw(&uniform(), 40, 8, 0).unwrap();
    let cm = CumulantModel::binomial(2, 0.3).unwrap();
    let a = 0.4;
    let sol = condtail::solve_saddle(&env, &cm, a, 1.0).map_err(|e| e.to_string())?;
    let cfg = McConfig::with_draws(50_000, 50, 12);
    let t1 = tilted_mc(&env, &cm, a, &sol, &cfg).map_err(|e| e.to_string())?;
    let t2 = tilted_mc(&env, &cm, a, &sol, &cfg).map_err(|e| e.to_string())?;
    let n1 = naive_mc(&env, &cm, 0.25, &cfg).map_err(|e| e.to_string())?;
    let n2 = naive_mc(&env, &cm, 0.25, &cfg).map_err(|e| e.to_string())?;
    let j = |e: &condtail::TailEstimate| serde_json::to_string(e).unwrap();
    if j(&t1) != j(&t2) || j(&n1) != j(&n2) || t1.value.to_bits() != t2.value.to_bits() {
        return Err("reruns differ".into());
    }
    Ok(())
}

fn schema_round_trips() -> std::result::Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("bern.json");
    std::fs::write(
        &cfg,
        r#"{"z":{"kind":"bernoulli","p":0.5},"w":{"kind":"constant","c":1.0},"n":10,"a":0.7,"seed":3,
            "mc":{"batches":20,"batch_size":5000,"seed":9}}"#,
    )
    .unwrap();
    let cfg_value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    let errs = schema_errors("run_config.schema.json", &cfg_value);
    if !errs.is_empty() {
        return Err(format!("config: {errs:?}"));
    }
    let cfg_s = cfg.to_str().unwrap();
    let runs: [(&[&str], &str); 5] = [
        (&["approx"], "approx_record.schema.json"),
        (&["check-conditions"], "condition_report.schema.json"),
        (&["sample", "--mode", "exact"], "tail_estimate.schema.json"),
        (&["sample", "--mode", "tilted"], "tail_estimate.schema.json"),
        (&["sample", "--mode", "naive"], "tail_estimate.schema.json"),
    ];
    for (args, schema) in runs {
        let mut argv = vec!["condtail"];
        argv.extend_from_slice(args);
        argv.extend_from_slice(&["--config", cfg_s]);
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = condtail::cli::run(argv.clone(), &mut out, &mut err);
        if code != 0 {
            return Err(format!("{argv:?} exited {code}: {}", String::from_utf8_lossy(&err)));
        }
        let value: serde_json::Value = serde_json::from_slice(&out).map_err(|e| e.to_string())?;
        let errs = schema_errors(schema, &value);
        if !errs.is_empty() {
            return Err(format!("{argv:?}: {errs:?}"));
        }
        if schema == "tail_estimate.schema.json" {
            let back: condtail::TailEstimate = serde_json::from_value(value.clone()).map_err(|e| e.to_string())?;
            if serde_json::to_value(&back).unwrap() != value {
                return Err(format!("{argv:?}: estimate does not round-trip"));
            }
        }
    }
    let curves = DeterministicCurves::build(&uniform(), &gaussian(), 1.0).unwrap();
    let rep = run_fclt(&uniform(), &gaussian(), &curves, &[0.1, 0.2], 200, 100, 1).map_err(|e| e.to_string())?;
    let errs = schema_errors("fclt_report.schema.json", &serde_json::to_value(&rep).unwrap());
    if !errs.is_empty() {
        return Err(format!("fclt report: {errs:?}"));
    }
    Ok(())
}

#[test]
fn criterion_7_property_suites() {
    let start = Instant::now();
    let checks: [(&str, fn() -> std::result::Result<(), String>); 5] = [
        ("legendre maxima", legendre_maxima),
        ("g1 increasing, g2 positive", curve_shapes),
        ("tilted sampler moments", tilted_moments),
        ("oracle determinism", oracle_determinism),
        ("schema round trips", schema_round_trips),
    ];
    let mut failed = Vec::new();
    for (name, f) in checks {
        if let Err(e) = f() {
            failed.push(format!("{name}: {e}"));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = failed.is_empty() && elapsed < 60.0;
    verdict(7, pass, format!("5 suites, failures {failed:?}, {elapsed:.1}s"));
}
