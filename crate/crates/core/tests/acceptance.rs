//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any criterion fails.
//!
//! Run with `cargo test --release --test acceptance`.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use streamkpca::checks::{
    CheckReport, CheckStatus, CLOSED_FORM_LOG_RATIO, CUMULATIVE_GROWTH, GROWTH_IMPLIES_CORRECTNESS,
    GROWTH_IMPLIES_CORRECTNESS_AT_V_STAR, NONDECREASING_NORM, NORM_LOWER_BOUND, PER_STEP_GROWTH,
    PROJECTED_ENERGY, RIGHT_DIRECTION_GROWS, TWO_TIME_STEPS, UNNORMALIZED_INCREMENT,
};
use streamkpca::datagen::monte_carlo_offset_norm;
use streamkpca::harness::{
    cmd_run, cmd_sweep, EtaPolicy, FeatureMapConfig, GeneratorConfig, InitKind, RunConfig,
};
use streamkpca::DenseVector;

const MINUTE: Duration = Duration::from_secs(60);

struct Outcome {
    pass: bool,
    detail: String,
}

fn config(phi: FeatureMapConfig, d: usize, n: usize, ratio: f64) -> RunConfig {
    RunConfig {
        feature_map: phi,
        generator: GeneratorConfig {
            input_dim: d,
            n,
            ratio,
            lambda1: 1.0,
            tail_decay: 1.0,
        },
        eta: EtaPolicy::Auto,
        init: InitKind::Random,
        seed: 0,
        trials: 1,
        checks: false,
        out: None,
        ratios: None,
    }
}

fn checked_reports(cfg: &RunConfig) -> Vec<CheckReport> {
    let report = cmd_run(cfg, None).expect("run succeeds");
    report
        .trials
        .into_iter()
        .map(|t| {
            t.checks
                .unwrap_or_else(|| panic!("trial {} aborted: {:?}", t.trial, t.error))
        })
        .collect()
}

fn status(report: &CheckReport, name: &str) -> CheckStatus {
    report.get(name).expect("every check is reported").status
}

/// Update properties on 50 trajectories mixing identity, poly2 and rff maps.
fn update_properties() -> Outcome {
    let start = Instant::now();
    let (mut violations, mut explicit_checked, mut explicit_failed) = (Vec::new(), 0, 0);
    for i in 0..50usize {
        let small = i % 4 == 0;
        let n = if small { 48 } else { 300 + (i * 37) % 1701 };
        let (phi, d) = match i % 3 {
            0 => (FeatureMapConfig::Identity, 2 + (i * 7) % 15),
            1 => (FeatureMapConfig::Poly2, 2 + i % 5),
            _ => (
                FeatureMapConfig::Rff {
                    feature_dim: if small { 24 } else { 128 },
                    bandwidth: 1.5,
                    seed: None,
                },
                2 + i % 6,
            ),
        };
        let mut cfg = config(phi, d, n, 2.0 + (i as f64) * 2.0);
        cfg.seed = 1000 + i as u64;
        cfg.checks = true;
        cfg.init = if i % 2 == 0 {
            InitKind::Random
        } else {
            InitKind::Vstar
        };
        let report = &checked_reports(&cfg)[0];
        for name in [
            CLOSED_FORM_LOG_RATIO,
            NONDECREASING_NORM,
            PER_STEP_GROWTH,
            CUMULATIVE_GROWTH,
        ] {
            if status(report, name) != CheckStatus::Pass {
                violations.push(format!("trajectory {i}: {name}"));
            }
        }
        if cfg.feature_dim() <= 32 && n <= 64 {
            explicit_checked += 1;
            if status(report, UNNORMALIZED_INCREMENT) != CheckStatus::Pass {
                explicit_failed += 1;
                violations.push(format!("trajectory {i}: {UNNORMALIZED_INCREMENT}"));
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: violations.is_empty() && explicit_checked > 0 && elapsed < MINUTE,
        detail: format!(
            "50 trajectories, properties 1-4 violations: {}, explicit increment {}/{} ok, {:.1}s{}",
            violations.len(),
            explicit_checked - explicit_failed,
            explicit_checked,
            elapsed.as_secs_f64(),
            if violations.is_empty() {
                String::new()
            } else {
                format!(" ({})", violations.join(", "))
            }
        ),
    }
}

/// Lemma checks on 20 at-v* and 20 random-init trajectories.
fn lemma_checks() -> Outcome {
    let start = Instant::now();
    let names = [
        GROWTH_IMPLIES_CORRECTNESS,
        GROWTH_IMPLIES_CORRECTNESS_AT_V_STAR,
        TWO_TIME_STEPS,
        PROJECTED_ENERGY,
        RIGHT_DIRECTION_GROWS,
        NORM_LOWER_BOUND,
    ];
    let mut failures = Vec::new();
    let mut passes = 0;
    let mut vacuous = 0;
    for init in [InitKind::Vstar, InitKind::Random] {
        for (k, (phi, d)) in [(FeatureMapConfig::Identity, 10), (FeatureMapConfig::Poly2, 4)]
            .into_iter()
            .enumerate()
        {
            let mut cfg = config(phi, d, 400 + 400 * k, 30.0);
            cfg.init = init;
            cfg.trials = 10;
            cfg.checks = true;
            cfg.seed = 77 + k as u64;
            for (t, report) in checked_reports(&cfg).iter().enumerate() {
                for name in names {
                    let e = report.get(name).unwrap();
                    match e.status {
                        CheckStatus::Pass => passes += 1,
                        CheckStatus::Vacuous if e.reason.is_some() => vacuous += 1,
                        _ => failures.push(format!("{init:?}/{k}/trial {t}: {name}")),
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: failures.is_empty() && elapsed < MINUTE,
        detail: format!(
            "40 trajectories: {passes} pass, {vacuous} vacuous with named hypothesis, {} fail, {:.1}s{}",
            failures.len(),
            elapsed.as_secs_f64(),
            if failures.is_empty() {
                String::new()
            } else {
                format!(" ({})", failures.join(", "))
            }
        ),
    }
}

/// Identity map, d = 8, near-rank-one stream, n = 500: error ≤ 1e-4 in all 10 seeds.
fn oracle_equivalence() -> Outcome {
    let mut cfg = config(FeatureMapConfig::Identity, 8, 500, 1e6);
    cfg.trials = 10;
    let report = cmd_run(&cfg, None).unwrap();
    let errors: Vec<f64> = report.metrics().map(|m| m.alignment_error).collect();
    let within = errors.iter().filter(|&&e| e <= 1e-4).count();
    let worst = errors.iter().copied().fold(0.0, f64::max);
    Outcome {
        pass: errors.len() == 10 && within == 10,
        detail: format!("{within}/10 seeds with error <= 1e-4, worst {worst:.3e}"),
    }
}

/// Ratio sweep {5, 20, 100}, d = 20, n = 2000, 20 seeds each.
fn ratio_trend() -> Outcome {
    let mut cfg = config(FeatureMapConfig::Identity, 20, 2000, 5.0);
    cfg.trials = 20;
    cfg.ratios = Some(vec![5.0, 20.0, 100.0]);
    let table = cmd_sweep(&cfg, None).unwrap();
    let medians: Vec<f64> = table
        .rows
        .iter()
        .map(|r| r.median_alignment_error.unwrap_or(f64::NAN))
        .collect();
    let monotone = medians.windows(2).all(|w| w[1] <= w[0]);
    let last = medians[2];
    let bound = (20f64).ln() / 100.0;
    Outcome {
        pass: monotone && last <= 0.1,
        detail: format!(
            "medians {:.3e} / {:.3e} / {:.3e}, nonincreasing: {monotone}; at R=100 {:.3e} <= 0.1; \
             vs ln(20)/100 = {bound:.4}: {} (empirical, ratio hypothesis unmet)",
            medians[0],
            medians[1],
            medians[2],
            last,
            if last <= bound { "within" } else { "above" }
        ),
    }
}

/// Final-bound aggregate: at-v* runs stay within √α; random-init failure fraction within allowance.
fn final_bound_aggregate() -> Outcome {
    let mut cfg = config(FeatureMapConfig::Identity, 10, 1000, 20.0);
    cfg.trials = 50;
    cfg.init = InitKind::Vstar;
    let at_star = cmd_run(&cfg, None).unwrap();
    let within = at_star
        .metrics()
        .filter(|m| m.projection_residual <= m.alpha.sqrt() + 1e-9)
        .count();
    cfg.init = InitKind::Random;
    let random = cmd_run(&cfg, None).unwrap();
    let a = &random.aggregate;
    let (fraction, allowance) = (a.failure_fraction.unwrap(), a.failure_allowance.unwrap());
    Outcome {
        pass: within == 50 && fraction <= allowance,
        detail: format!(
            "at-v*: {within}/50 within sqrt(alpha); random init: failure fraction {fraction} <= allowance {allowance:.4}"
        ),
    }
}

/// Offset-norm Monte Carlo: 20 configurations, 10⁴ draws each.
fn offset_norm() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = f64::INFINITY;
    let mut failing = 0;
    for i in 0..20 {
        let dim = 1 + i % 8;
        let u: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let u = DenseVector::new(u).unwrap();
        let delta = 0.05 + 0.9 * rng.random::<f64>();
        let v = match i % 4 {
            // adversarial: v parallel to u puts the mass of a·u + v near zero
            0 => u.scaled(-rng.random::<f64>()),
            1 => DenseVector::zeros(dim),
            _ => {
                let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                DenseVector::new(g).unwrap().scaled(rng.random::<f64>())
            }
        };
        let p = monte_carlo_offset_norm(&u, &v, delta, 10_000, 100 + i as u64).unwrap();
        let margin = p - (1.0 - delta - 0.02);
        worst = worst.min(margin);
        if margin < 0.0 {
            failing += 1;
        }
    }
    Outcome {
        pass: failing == 0,
        detail: format!("20 configurations, {failing} below 1 - delta - 0.02, worst margin {worst:.4}"),
    }
}

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_streamkpca"));
    cmd.env_remove("STREAMKPCA_OUT_DIR");
    cmd
}

fn run_cli(args: &[&str], out: &Path) -> i32 {
    bin()
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

/// Two invocations with identical configs produce byte-identical files.
fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "run", "--phi", "rff", "--dim", "4", "--feature-dim", "32", "--n", "300", "--trials", "4",
        "--check", "--seed", "5",
    ];
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let codes = (run_cli(&args, &a), run_cli(&args, &b));
    let sweep = ["sweep", "--dim", "6", "--n", "300", "--trials", "4", "--ratios", "2,8"];
    let (sa, sb) = (tmp.path().join("sa"), tmp.path().join("sb"));
    let sweep_codes = (run_cli(&sweep, &sa), run_cli(&sweep, &sb));
    let (fa, fb) = (dir_bytes(&a), dir_bytes(&b));
    let identical = fa == fb && dir_bytes(&sa) == dir_bytes(&sb);
    Outcome {
        pass: codes == (0, 0) && sweep_codes == (0, 0) && identical && fa.len() == 9,
        detail: format!(
            "{} run files and the sweep table compared, byte-identical: {identical}",
            fa.len()
        ),
    }
}

/// A 10⁻³ relative perturbation of any recorded value makes `check` exit nonzero.
fn fault_sensitivity() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let code = run_cli(&["run", "--dim", "5", "--n", "200", "--check", "--seed", "8"], &out);
    let csv = out.join("trial_000.csv");
    let meta = out.join("trial_000.meta.json");
    let clean = bin().arg("check").arg(&csv).status().unwrap().code();
    let original = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = original.lines().collect();
    let (mut tried, mut detected) = (0, 0);
    for row in [1, lines.len() / 2, lines.len() - 1] {
        for column in 1..lines[row].split(',').count() {
            let mut cells: Vec<String> = lines[row].split(',').map(str::to_owned).collect();
            let x: f64 = cells[column].parse().unwrap();
            if x == 0.0 {
                continue;
            }
            cells[column] = (x * (1.0 + 1e-3)).to_string();
            let mut tampered: Vec<String> = lines.iter().map(|l| (*l).to_owned()).collect();
            tampered[row] = cells.join(",");
            let path = tmp.path().join(format!("tampered_{row}_{column}.csv"));
            fs::write(&path, tampered.join("\n") + "\n").unwrap();
            fs::copy(&meta, path.with_extension("meta.json")).unwrap();
            tried += 1;
            if bin().arg("check").arg(&path).status().unwrap().code() != Some(0) {
                detected += 1;
            }
        }
    }
    Outcome {
        pass: code == 0 && clean == Some(0) && tried > 0 && detected == tried,
        detail: format!("clean file exit {clean:?}; {detected}/{tried} perturbations exit nonzero"),
    }
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags such as --nocapture or a filter; a filter that does
    // not name this suite skips it
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !filters.is_empty() && !filters.iter().any(|f| "acceptance".contains(f.as_str())) {
        return ExitCode::SUCCESS;
    }
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("update properties on 50 trajectories", update_properties),
        ("lemma checks on at-v* and random-init runs", lemma_checks),
        ("oracle equivalence on near-rank-one streams", oracle_equivalence),
        ("alignment error trend across ratios", ratio_trend),
        ("final-bound aggregate over seeds", final_bound_aggregate),
        ("Gaussian offset-norm Monte Carlo", offset_norm),
        ("determinism across invocations", determinism),
        ("fault sensitivity of check", fault_sensitivity),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "criterion {}: {} - {name}: {} [{:.1}s]",
            i + 1,
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
