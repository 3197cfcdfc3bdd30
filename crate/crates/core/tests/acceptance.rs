//! Acceptance run: benchmark targets, invariants and oracle equivalences.
//!
//! Prints one PASS/FAIL line per criterion and exits nonzero if any fails.

mod common;

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sppsbl::beta_root::RootMethod;
use sppsbl::datagen::{chain_p01, markov_chain_support, run_lengths};
use sppsbl::experiment::{default_threads, run_experiment, write_experiment, ExperimentConfig, ExperimentOutcome};
use sppsbl::metrics::AggregateSummary;
use sppsbl::model::{CouplingVector, HyperPriors, PrecisionField, DEFAULT_ALPHA_CAP};
use sppsbl::posterior::compute_posterior;
use sppsbl::solver::{beta_stationarity, evaluate_q_alpha_beta, run_em_with, BetaStats, SolverConfig};
use sppsbl::CouplingScheme;

struct Verdict {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(v: &Verdict) {
    let status = if v.pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr();
    let _ = writeln!(err, "criterion {} [{}] {}: {}", v.id, status, v.name, v.detail);
}

fn preset(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("presets").join(name);
    ExperimentConfig::load(&path).unwrap()
}

fn summary<'a>(s: &'a [AggregateSummary], label: &str) -> &'a AggregateSummary {
    s.iter().find(|a| a.algorithm == label).unwrap()
}

/// Shared checks for the three benchmark tables.
fn benchmark(
    id: usize,
    name: &'static str,
    outcome: &ExperimentOutcome,
    max_nmse: f64,
    min_corr: Option<f64>,
) -> Verdict {
    let sums = &outcome.summaries().unwrap()[0];
    let (spp, pc, sbl) = (summary(sums, "spp"), summary(sums, "pc"), summary(sums, "sbl"));
    let mut pass = spp.nmse.mean <= max_nmse && spp.nmse.mean < pc.nmse.mean && spp.nmse.mean < sbl.nmse.mean;
    if let Some(c) = min_corr {
        pass &= spp.corr.mean >= c;
    }
    pass &= spp.failures == 0;
    let detail = format!(
        "NMSE spp {:.4} (sd {:.4}, corr {:.4}, srr {:.4}) pc {:.4} sbl {:.4}; need spp <= {max_nmse}{} and below both; {} trials, {} failed",
        spp.nmse.mean,
        spp.nmse.std,
        spp.corr.mean,
        spp.srr.mean,
        pc.nmse.mean,
        sbl.nmse.mean,
        min_corr.map(|c| format!(", corr >= {c}")).unwrap_or_default(),
        spp.nmse.n + spp.failures,
        spp.failures,
    );
    Verdict { id, name, pass, detail }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

fn success_sweep() -> Verdict {
    let cfg = preset("successrate.cfg");
    let outcome = run_experiment(&cfg, default_threads()).unwrap();
    let sums = outcome.summaries().unwrap();
    let ratios: Vec<f64> = outcome.cells.iter().map(|c| c.cell.ratio).collect();
    let rates: Vec<f64> = sums.iter().map(|s| s[0].success_rate).collect();
    let at = |r: f64| rates[ratios.iter().position(|x| (x - r).abs() < 1e-12).unwrap()];
    let rho = spearman(&ratios, &rates);
    let pass = at(0.85) >= 0.9 && at(0.3) <= 0.2 && rho >= 0.9;
    let curve: Vec<String> = ratios.iter().zip(&rates).map(|(r, s)| format!("{r}:{s:.2}")).collect();
    Verdict {
        id: 4,
        name: "success-rate sweep",
        pass,
        detail: format!("rates [{}], spearman {rho:.3}; need >= 0.9 at 0.85, <= 0.2 at 0.3, rho >= 0.9", curve.join(" ")),
    }
}

fn sign_scan_draws(draws: usize) -> usize {
    let mut r = rng(515);
    let mut bad = 0;
    for _ in 0..draws {
        let eq = random_equation(&mut r);
        let upper = eq.upper_bound();
        let lo = upper * 1e-12;
        let steps: i32 = 100_000;
        let ratio = (upper / lo).powf(1.0 / steps as f64);
        let mut prev = eq.value(lo) > 0.0;
        let mut changes = 0;
        for k in 1..=steps {
            let b = if k == steps { upper } else { lo * ratio.powi(k) };
            let now = eq.value(b) > 0.0;
            changes += usize::from(now != prev);
            prev = now;
        }
        if changes != 1 || eq.value(lo) <= 0.0 || eq.value(upper) >= 0.0 {
            bad += 1;
        }
    }
    bad
}

fn invariants(stats: &BetaStats, bracket_failures: usize) -> Verdict {
    let scan_bad = sign_scan_draws(1000);
    let pass = stats.calls >= 100_000 && stats.bound_violations == 0 && bracket_failures == 0 && scan_bad == 0;
    Verdict {
        id: 5,
        name: "coupling root invariants",
        pass,
        detail: format!(
            "{} root solves, {} outside (0, c/d), {} bracket failures; sign scan: {scan_bad}/1000 draws without a unique root",
            stats.calls, stats.bound_violations, bracket_failures
        ),
    }
}

fn oracle_equivalences() -> Verdict {
    let mut r = rng(616);

    let mut worst_post: f64 = 0.0;
    for case in 0..100 {
        let n = r.random_range(2..=32);
        let m = r.random_range(1..=n);
        let problem = random_problem(m, n, 90_000 + case);
        let lambda: Vec<f64> = (0..n).map(|_| log_uniform(&mut r, 0.1, 10.0)).collect();
        let gamma = log_uniform(&mut r, 0.1, 100.0);
        let post = compute_posterior(&problem, &lambda, gamma).unwrap();
        let (mu, sigma) = dense_posterior(&problem, &lambda, gamma);
        let flat: Vec<f64> = to_rows(&post.sigma).into_iter().flatten().collect();
        let flat_ref: Vec<f64> = sigma.into_iter().flatten().collect();
        worst_post = worst_post.max(rel_err(&post.mu, &mu)).max(rel_err(&flat, &flat_ref));
    }

    let mut worst_root: f64 = 0.0;
    for _ in 0..1000 {
        let eq = random_equation(&mut r);
        let a = eq.solve(RootMethod::Bracketed).unwrap();
        let b = eq.solve(RootMethod::Cardano).unwrap();
        worst_root = worst_root.max((a - b).abs() / a.max(1.0));
    }

    let hyper = HyperPriors::default();
    let mut worst_grad: f64 = 0.0;
    for point in 0..100 {
        let n = r.random_range(3..16);
        let problem = random_problem(n, n, 91_000 + point);
        let lambda: Vec<f64> = (0..n).map(|_| log_uniform(&mut r, 0.1, 10.0)).collect();
        let post = compute_posterior(&problem, &lambda, 5.0).unwrap();
        let alpha = PrecisionField::new(
            (0..n).map(|_| log_uniform(&mut r, 0.1, 10.0)).collect(),
            DEFAULT_ALPHA_CAP,
        )
        .unwrap();
        let beta = CouplingVector((0..n - 1).map(|_| r.random_range(0.2..5.0)).collect());
        let i = r.random_range(0..n - 1);
        let analytic = beta_stationarity(beta.0[i], i, &alpha, &beta, &post, &hyper).unwrap();
        let q_at = |b: f64| {
            let mut v = beta.clone();
            v.0[i] = b;
            evaluate_q_alpha_beta(&alpha, &v, &post, &hyper).unwrap()
        };
        let h = 1e-6;
        let fd = (q_at(beta.0[i] + h) - q_at(beta.0[i] - h)) / (2.0 * h);
        worst_grad = worst_grad.max((fd - analytic).abs() / analytic.abs().max(1.0));
    }

    let mut worst_traj: f64 = 0.0;
    for case in 0..20 {
        let problem = random_problem(14, 28, 92_000 + case);
        let cfg = SolverConfig {
            max_iterations: 150,
            ..SolverConfig::with_scheme(CouplingScheme::None)
        };
        let mut lib = Vec::new();
        run_em_with(&problem, &cfg, |s| lib.push(s.state.mu.clone())).unwrap();
        let reference = reference_em(&problem, 0.0, &cfg);
        for (a, b) in lib.iter().zip(&reference) {
            worst_traj = worst_traj.max(rel_err(a, b));
        }
        if lib.len().abs_diff(reference.len()) > 1 {
            worst_traj = f64::INFINITY;
        }
    }

    let pass = worst_post < 1e-10 && worst_root <= 1e-8 && worst_grad < 1e-5 && worst_traj < 1e-10;
    Verdict {
        id: 6,
        name: "oracle equivalences",
        pass,
        detail: format!(
            "posterior {worst_post:.1e} (< 1e-10), cardano {worst_root:.1e} (<= 1e-8), gradient {worst_grad:.1e} (< 1e-5), sbl trajectory {worst_traj:.1e} (< 1e-10)"
        ),
    }
}

fn init_insensitivity() -> Verdict {
    let base = preset("table1.cfg");
    let mut cfg = base.clone();
    cfg.algorithms.clear();
    for c in [2.0, 5.0, 10.0] {
        for init in [0.1, 1.0, 5.0] {
            let mut a = base.algorithms[0].clone();
            a.label = format!("c{c}_b{init}");
            a.solver.hyperpriors.c = c;
            a.solver.init_beta = init;
            cfg.algorithms.push(a);
        }
    }
    let outcome = run_experiment(&cfg, default_threads()).unwrap();
    let sums = &outcome.summaries().unwrap()[0];
    let means: Vec<f64> = sums.iter().map(|s| s.nmse.mean).collect();
    let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread = (hi - lo) / lo;
    let listing: Vec<String> = sums.iter().map(|s| format!("{}={:.4}", s.algorithm, s.nmse.mean)).collect();
    Verdict {
        id: 7,
        name: "initialization insensitivity",
        pass: spread < 0.05,
        detail: format!("relative spread {spread:.3} (< 0.05): {}", listing.join(" ")),
    }
}

fn chain_statistics() -> Verdict {
    let mut r = ChaCha8Rng::seed_from_u64(808);
    let s = markov_chain_support(1_000_000, chain_p01(0.8, 0.01), 0.01, 0.2, &mut r);
    let occupancy = s.iter().filter(|&&b| b).count() as f64 / s.len() as f64;
    let runs = run_lengths(&s);
    let mean = runs.iter().sum::<usize>() as f64 / runs.len() as f64;
    Verdict {
        id: 8,
        name: "chain generator statistics",
        pass: (22.5..=27.5).contains(&mean) && (occupancy - 0.2).abs() <= 0.005,
        detail: format!("mean run {mean:.2} in [22.5, 27.5], occupancy {occupancy:.4} within 0.2 +- 0.005"),
    }
}

fn thread_equivalence(serial: &ExperimentOutcome) -> Verdict {
    let parallel = run_experiment(&serial.config, 8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("t1"), dir.path().join("t8"));
    write_experiment(serial, &a, None).unwrap();
    write_experiment(&parallel, &b, None).unwrap();
    let ca = std::fs::read(a.join("trials.csv")).unwrap();
    let cb = std::fs::read(b.join("trials.csv")).unwrap();
    Verdict {
        id: 9,
        name: "thread-count determinism",
        pass: ca == cb && !ca.is_empty(),
        detail: format!("trials.csv with 1 vs 8 threads: {} vs {} bytes, identical = {}", ca.len(), cb.len(), ca == cb),
    }
}

fn timed<T>(label: &str, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    let _ = writeln!(std::io::stderr(), "  ({label}: {:.1} s)", t.elapsed().as_secs_f64());
    out
}

fn main() {
    let threads = default_threads();
    let mut verdicts = Vec::new();
    let push = |v: Verdict, all: &mut Vec<Verdict>| {
        report(&v);
        all.push(v);
    };

    let t1 = timed("table1", || run_experiment(&preset("table1.cfg"), 1).unwrap());
    push(benchmark(1, "heteroscedastic benchmark", &t1, 0.06, Some(0.97)), &mut verdicts);
    let t2 = timed("table2", || run_experiment(&preset("table2.cfg"), threads).unwrap());
    push(benchmark(2, "multi-pattern benchmark", &t2, 0.10, None), &mut verdicts);
    let t3 = timed("table3", || run_experiment(&preset("table3.cfg"), threads).unwrap());
    push(benchmark(3, "chain benchmark", &t3, 0.07, None), &mut verdicts);

    push(timed("sweep", success_sweep), &mut verdicts);

    let mut stats = BetaStats::default();
    let mut bracket_failures = 0;
    for o in [&t1, &t2, &t3] {
        stats.merge(&o.beta_stats);
        bracket_failures += o.failures.iter().filter(|f| f.invariant).count();
    }
    push(timed("invariants", || invariants(&stats, bracket_failures)), &mut verdicts);
    push(timed("oracles", oracle_equivalences), &mut verdicts);
    push(timed("init", init_insensitivity), &mut verdicts);
    push(chain_statistics(), &mut verdicts);
    push(timed("threads", || thread_equivalence(&t1)), &mut verdicts);

    let failed: Vec<usize> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    let mut err = std::io::stderr();
    let _ = writeln!(err, "acceptance: {}/{} criteria passed", verdicts.len() - failed.len(), verdicts.len());
    if !failed.is_empty() {
        let _ = writeln!(err, "failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
