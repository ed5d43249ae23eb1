//! Acceptance criteria 1–8, one PASS/FAIL line each. Runs without the test
//! harness so the lines are always printed; exits non-zero on any FAIL.

use std::process::Command;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use mabt_core::baselines::{
    cp_lower, delong_components, sidak_adjust, wald_lower, wilson_lower, BinomialSummary,
};
use mabt_core::mabt::{mabt_lower_bound, simultaneous_bounds};
use mabt_core::measures::weighted_auc;
use mabt_core::resample::{bootstrap_performance, draw_resamples, ResamplePlan};
use mabt_core::rng::{derive_seed, stream_rng};
use mabt_core::special::ln_gamma;
use mabt_core::tilting::{
    bt_lower_bound, log_importance_weight, tilt_weights, tilted_ecdf, TiltingFamily,
};
use mabt_core::{final_select, EvaluationTable, MeasureKind, Rule, WeightVector};
use mabt_simlab::{run_experiment, DataSource, ExperimentConfig};

const ALPHA: f64 = 0.05;
const RUNS: usize = 1000;
const N_EVAL: usize = 50;
const B: usize = 2000;
const THETA: f64 = 0.8;
const MODELS: usize = 5;
/// `0.95 − 2·sqrt(0.05·0.95/1000)`
const COVERAGE_FLOOR: f64 = 0.936;
const THREE_DIGITS: f64 = 5e-4;
const SIDAK_ROUNDING: f64 = 5e-5;
const CP_SUM_TOL: f64 = 1e-8;
const DELONG_TOL: f64 = 1e-12;
const ENUM_TOL: f64 = 1e-12;
const TAU_TOL: f64 = 0.05;
const PIPELINE_RUNS: usize = 500;
const TREND_MARGIN: f64 = 0.005;

struct Verdict {
    pass: bool,
    soft: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict {
        pass,
        soft: false,
        detail,
    }
}

fn mcse(p: f64, runs: usize) -> f64 {
    (p * (1.0 - p) / runs as f64).sqrt()
}

/// Labels and `m` prediction columns, each correct independently with probability `theta`.
fn noisy_models(n: usize, m: usize, theta: f64, seed: u64) -> EvaluationTable {
    let mut rng = stream_rng(seed, 0);
    let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
    let columns = (0..m)
        .map(|_| {
            labels
                .iter()
                .map(|&y| {
                    if rng.random::<f64>() < theta {
                        f64::from(y)
                    } else {
                        f64::from(1 - y)
                    }
                })
                .collect()
        })
        .collect();
    EvaluationTable::new(labels, columns, (0..m).map(|j| format!("m{j}")).collect()).unwrap()
}

fn criterion_1() -> Verdict {
    let s = BinomialSummary::new(168, 175).unwrap();
    let wald = wald_lower(&s, ALPHA).unwrap();
    let wilson = wilson_lower(&s, ALPHA).unwrap();
    let cp = cp_lower(&s, ALPHA).unwrap();
    let s12 = sidak_adjust(ALPHA, 12).unwrap();
    let s22 = sidak_adjust(ALPHA, 22).unwrap();
    let pass = (wald - 0.936).abs() < THREE_DIGITS
        && (wilson - 0.928).abs() < THREE_DIGITS
        && (cp - 0.926).abs() < THREE_DIGITS
        && (s12 - 0.0043).abs() < SIDAK_ROUNDING
        && (s22 - 0.0023).abs() < SIDAK_ROUNDING;
    verdict(
        pass,
        format!("wald {wald:.4}, wilson {wilson:.4}, cp {cp:.4}, sidak(12) {s12:.5}, sidak(22) {s22:.5}"),
    )
}

fn criterion_2() -> Verdict {
    let covered: usize = (0..RUNS)
        .into_par_iter()
        .map(|run| {
            let t = noisy_models(N_EVAL, 1, THETA, derive_seed(2, run as u64));
            let plan = draw_resamples(N_EVAL, B, derive_seed(20, run as u64)).unwrap();
            let e = bootstrap_performance(&t, MeasureKind::Accuracy, plan).unwrap();
            let r = bt_lower_bound(&t, MeasureKind::Accuracy, "m0", &e, ALPHA).unwrap();
            usize::from(r.lower_bound <= THETA)
        })
        .sum();
    let cov = covered as f64 / RUNS as f64;
    verdict(
        cov >= COVERAGE_FLOOR,
        format!(
            "bt coverage {cov:.3} (mcse {:.4}) over {RUNS} runs, floor {COVERAGE_FLOOR}",
            mcse(cov, RUNS)
        ),
    )
}

struct SelectionRun {
    any_exceeds: bool,
    mabt_covered: bool,
    bt_covered: bool,
}

fn selection_runs() -> Vec<SelectionRun> {
    (0..RUNS)
        .into_par_iter()
        .map(|run| {
            let t = noisy_models(N_EVAL, MODELS, THETA, derive_seed(3, run as u64));
            let plan = draw_resamples(N_EVAL, B, derive_seed(30, run as u64)).unwrap();
            let e = bootstrap_performance(&t, MeasureKind::Accuracy, plan).unwrap();
            let all: Vec<f64> = simultaneous_bounds(&t, MeasureKind::Accuracy, &e, ALPHA)
                .unwrap()
                .into_iter()
                .map(|r| r.unwrap().lower_bound)
                .collect();
            let s = final_select(&t.plug_in_all(MeasureKind::Accuracy).unwrap()).unwrap();
            let id = &t.model_ids()[s];
            let mabt = mabt_lower_bound(&t, MeasureKind::Accuracy, id, &e, ALPHA).unwrap();
            let bt = bt_lower_bound(&t, MeasureKind::Accuracy, id, &e, ALPHA).unwrap();
            SelectionRun {
                any_exceeds: all.iter().any(|&b| b > THETA),
                mabt_covered: mabt.lower_bound <= THETA,
                bt_covered: bt.lower_bound <= THETA,
            }
        })
        .collect()
}

fn criterion_3(runs: &[SelectionRun]) -> Verdict {
    let fwer = runs.iter().filter(|r| r.any_exceeds).count() as f64 / runs.len() as f64;
    let limit = ALPHA + 2.0 * mcse(ALPHA, runs.len());
    verdict(
        fwer <= limit,
        format!("familywise error {fwer:.3} with m={MODELS}, limit {limit:.4}"),
    )
}

fn criterion_4(runs: &[SelectionRun]) -> Verdict {
    let n = runs.len() as f64;
    let mabt = runs.iter().filter(|r| r.mabt_covered).count() as f64 / n;
    let bt = runs.iter().filter(|r| r.bt_covered).count() as f64 / n;
    let naive_ceiling = 1.0 - ALPHA - 2.0 * mcse(ALPHA, runs.len());
    verdict(
        mabt >= COVERAGE_FLOOR && bt < naive_ceiling,
        format!("selected-model coverage: mabt {mabt:.3} (floor {COVERAGE_FLOOR}), naive bt {bt:.3} (must be < {naive_ceiling:.4})"),
    )
}

fn brute_auc(labels: &[u8], scores: &[f64]) -> Option<f64> {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for i in 0..labels.len() {
        for j in 0..labels.len() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1;
                twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    (pairs > 0).then(|| 0.5 * twice as f64 / pairs as f64)
}

fn oracle_auc() -> bool {
    (2..=8usize).all(|n| {
        (0u32..1 << n).into_par_iter().all(|mask| {
            let labels: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
            (0..3usize.pow(n as u32)).all(|code| {
                let scores: Vec<f64> = (0..n)
                    .map(|i| ((code / 3usize.pow(i as u32)) % 3) as f64)
                    .collect();
                weighted_auc(&labels, &scores, &WeightVector::uniform(n)).ok()
                    == brute_auc(&labels, &scores)
            })
        })
    })
}

fn oracle_delong() -> f64 {
    let psi = |a: f64, b: f64| {
        if a > b {
            1.0
        } else if a == b {
            0.5
        } else {
            0.0
        }
    };
    let svar = |v: &[f64]| {
        if v.len() < 2 {
            return 0.0;
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
    };
    let mut rng = stream_rng(55, 0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(4..=20);
        let labels: Vec<u8> = (0..n)
            .map(|i| {
                if i < 2 {
                    i as u8
                } else {
                    rng.random_range(0..2)
                }
            })
            .collect();
        let scores: Vec<f64> = (0..n)
            .map(|_| f64::from(rng.random_range(0..6u8)) / 5.0)
            .collect();
        let pos: Vec<f64> = (0..n)
            .filter(|&i| labels[i] == 1)
            .map(|i| scores[i])
            .collect();
        let neg: Vec<f64> = (0..n)
            .filter(|&i| labels[i] == 0)
            .map(|i| scores[i])
            .collect();
        let v10: Vec<f64> = pos
            .iter()
            .map(|&p| neg.iter().map(|&q| psi(p, q)).sum::<f64>() / neg.len() as f64)
            .collect();
        let v01: Vec<f64> = neg
            .iter()
            .map(|&q| pos.iter().map(|&p| psi(p, q)).sum::<f64>() / pos.len() as f64)
            .collect();
        let want = svar(&v10) / pos.len() as f64 + svar(&v01) / neg.len() as f64;
        worst = worst.max((delong_components(&labels, &scores).unwrap().variance - want).abs());
    }
    worst
}

fn oracle_cp() -> f64 {
    let mut worst = 0.0f64;
    for alpha in [0.01, 0.05, 0.1, 0.2] {
        for n in 1..=30u64 {
            for x in 1..=n {
                let p = cp_lower(&BinomialSummary::new(x, n).unwrap(), alpha).unwrap();
                let tail: f64 = (x..=n)
                    .map(|k| {
                        let c = ln_gamma(n as f64 + 1.0)
                            - ln_gamma(k as f64 + 1.0)
                            - ln_gamma((n - k) as f64 + 1.0);
                        (c + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
                    })
                    .sum();
                worst = worst.max((tail - alpha).abs());
            }
        }
    }
    worst
}

fn draws_of_three() -> Vec<Vec<u32>> {
    let mut rows = Vec::new();
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                let mut row = vec![0u32; 3];
                row[a] += 1;
                row[b] += 1;
                row[c] += 1;
                rows.push(row);
            }
        }
    }
    rows
}

/// Worst tilted-ECDF error and worst calibrated-τ error at n = 3.
fn oracle_tilting() -> (f64, f64) {
    let correct = [1.0, 1.0, 0.0];
    let family = TiltingFamily::new(correct.to_vec(), false).unwrap();
    let rows = draws_of_three();
    let mut multisets = rows.clone();
    multisets.sort();
    multisets.dedup();
    let theta = |c: &[u32]| {
        c.iter()
            .zip(&correct)
            .map(|(&k, &z)| f64::from(k) * z)
            .sum::<f64>()
            / 3.0
    };
    let theta_star: Vec<f64> = rows.iter().map(|r| theta(r)).collect();
    let fact = |k: u32| (1..=k).product::<u32>() as f64;
    let mut ecdf_err = 0.0f64;
    for tau in [-3.0, -1.0, -0.2, 0.0, 0.7, 2.0] {
        let p = tilt_weights(&family, tau).unwrap();
        let log_w: Vec<f64> = rows
            .iter()
            .map(|r| log_importance_weight(r, &p, 3).unwrap())
            .collect();
        for x in [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0] {
            let exact: f64 = multisets
                .iter()
                .filter(|c| theta(c) <= x + 1e-12)
                .map(|c| {
                    let coef = fact(3) / c.iter().map(|&k| fact(k)).product::<f64>();
                    coef * c
                        .iter()
                        .zip(p.as_slice())
                        .map(|(&k, &pi)| pi.powi(k as i32))
                        .product::<f64>()
                })
                .sum();
            ecdf_err =
                ecdf_err.max((tilted_ecdf(&theta_star, &log_w, x + 1e-12).value - exact).abs());
        }
    }

    let table =
        EvaluationTable::new(vec![1, 0, 1], vec![vec![1.0, 0.0, 0.0]], vec!["m".into()]).unwrap();
    let ens = bootstrap_performance(
        &table,
        MeasureKind::Accuracy,
        ResamplePlan::from_counts(rows).unwrap(),
    )
    .unwrap();
    let mut tau_err = 0.0f64;
    for alpha in [0.05, 0.1, 0.2] {
        let exceed = |tau: f64| {
            let q = tilt_weights(&family, tau).unwrap().as_slice()[..2]
                .iter()
                .sum::<f64>();
            q.powi(3) + 3.0 * q * q * (1.0 - q)
        };
        let (mut lo, mut hi) = (-50.0, 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if exceed(mid) <= alpha {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let tau = bt_lower_bound(&table, MeasureKind::Accuracy, "m", &ens, alpha)
            .unwrap()
            .tau
            .unwrap();
        tau_err = tau_err.max((tau - lo).abs());
    }
    (ecdf_err, tau_err)
}

fn criterion_5() -> Verdict {
    let auc = oracle_auc();
    let delong = oracle_delong();
    let cp = oracle_cp();
    let (ecdf, tau) = oracle_tilting();
    verdict(
        auc && delong <= DELONG_TOL && cp <= CP_SUM_TOL && ecdf <= ENUM_TOL && tau <= TAU_TOL,
        format!(
            "auc exhaustive n<=8 exact: {auc}; delong var err {delong:.1e}; cp tail err {cp:.1e}; n=3 ecdf err {ecdf:.1e}; tau err {tau:.3}"
        ),
    )
}

fn criterion_6() -> Verdict {
    let mut failures = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    check(
        sidak_adjust(ALPHA, 1).unwrap() == ALPHA,
        "sidak(alpha, 1) = alpha",
    );
    for seed in 0..50u64 {
        let t = noisy_models(40, 4, 0.75, derive_seed(6, seed));
        let plan = draw_resamples(40, 1000, seed).unwrap();
        let family = TiltingFamily::for_model(&t, MeasureKind::Accuracy, 0, false).unwrap();
        let p0 = tilt_weights(&family, 0.0).unwrap();
        check(
            p0.as_slice()
                .iter()
                .all(|&v| (v - 1.0 / 40.0).abs() < 1e-15),
            "tau = 0 uniform",
        );
        check(
            plan.rows()
                .all(|r| log_importance_weight(r, &p0, 40).unwrap().abs() < 1e-12),
            "W_b(0) = 1",
        );

        let e = bootstrap_performance(&t, MeasureKind::Accuracy, plan.clone()).unwrap();
        let single = t.select_columns(&[0]).unwrap();
        let e1 = bootstrap_performance(&single, MeasureKind::Accuracy, plan.clone()).unwrap();
        let m1 = mabt_lower_bound(&single, MeasureKind::Accuracy, "m0", &e1, ALPHA).unwrap();
        let b1 = bt_lower_bound(&single, MeasureKind::Accuracy, "m0", &e1, ALPHA).unwrap();
        check(m1.lower_bound == b1.lower_bound, "mabt(m=1) = bt");

        let mut cols = t.columns().to_vec();
        cols.push(t.column(2).to_vec());
        let mut ids = t.model_ids().to_vec();
        ids.push("copy".into());
        let dup = EvaluationTable::new(t.labels().to_vec(), cols, ids).unwrap();
        let ed = bootstrap_performance(&dup, MeasureKind::Accuracy, plan).unwrap();
        for id in t.model_ids() {
            let a = mabt_lower_bound(&t, MeasureKind::Accuracy, id, &e, ALPHA).unwrap();
            let d = mabt_lower_bound(&dup, MeasureKind::Accuracy, id, &ed, ALPHA).unwrap();
            check(a.lower_bound == d.lower_bound, "duplicate invariance");
            let bt = bt_lower_bound(&t, MeasureKind::Accuracy, id, &e, ALPHA).unwrap();
            check(
                a.lower_bound <= bt.lower_bound && bt.lower_bound <= bt.plug_in,
                "mabt <= bt <= plug-in",
            );
            let loose = mabt_lower_bound(&t, MeasureKind::Accuracy, id, &e, 0.10).unwrap();
            let loose_bt = bt_lower_bound(&t, MeasureKind::Accuracy, id, &e, 0.10).unwrap();
            check(
                loose.lower_bound >= a.lower_bound && loose_bt.lower_bound >= bt.lower_bound,
                "monotone in alpha",
            );
        }
    }
    failures.dedup();
    let detail = if failures.is_empty() {
        "50 seeds: sidak(1), uniform tilt, unit weights, m=1 reduction, duplicates, ordering, alpha monotonicity".into()
    } else {
        format!("violated: {}", failures.join(", "))
    };
    verdict(failures.is_empty(), detail)
}

const DETERMINISM_CONFIG: &str = r#"
[[experiment]]
name = "holdout"
measure = "accuracy"
alpha = 0.05
resamples = 500
runs = 12
seed = 2024
methods = ["mabt", "bt", "wilson+sidak"]
rules = ["single-best", "top-fraction=0.1"]
validation = "holdout"
cv_folds = 10
grid_size = 30
refit = "proportional"

[experiment.scenario]
n_total = 200
p = 50
n_nonzero = 10
signal = 2.0
ground_truth_n = 5000

[[experiment]]
name = "cv"
measure = "auc"
alpha = 0.05
resamples = 300
runs = 6
seed = 7
methods = ["mabt", "delong+sidak"]
rules = ["within-1-se"]
validation = "cv"
cv_folds = 5
grid_size = 15
refit = "fixed"

[experiment.scenario]
n_total = 200
p = 20
n_nonzero = 5
signal = 2.0
ground_truth_n = 5000
"#;

fn criterion_7() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("det.toml");
    std::fs::write(&config, DETERMINISM_CONFIG).unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "8"] {
        let out = dir.path().join(format!("t{threads}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_mabt"))
            .args([
                "--threads",
                threads,
                "simulate",
                config.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        if !status.status.success() {
            return verdict(
                false,
                format!(
                    "simulate failed: {}",
                    String::from_utf8_lossy(&status.stderr)
                ),
            );
        }
        outputs.push(std::fs::read(out).unwrap());
    }
    let rows = String::from_utf8_lossy(&outputs[0]).lines().count() - 1;
    verdict(
        outputs[0] == outputs[1],
        format!(
            "{rows} rows, --threads 1 vs 8 byte-identical: {}",
            outputs[0] == outputs[1]
        ),
    )
}

fn criterion_8() -> Verdict {
    let config = ExperimentConfig {
        name: "trend".into(),
        runs: PIPELINE_RUNS,
        resamples: B,
        seed: 8,
        rules: vec![Rule::SingleBest, Rule::TopFraction(0.1)],
        ..ExperimentConfig::default()
    };
    let out = run_experiment(&config, &DataSource::ScenarioA, &|_| {}).unwrap();
    let pick = |method: &str, rule: &str| -> Vec<(f64, bool)> {
        out.records
            .iter()
            .filter(|r| r.method == method && r.rule == rule)
            .map(|r| (r.true_performance, r.covered))
            .collect()
    };
    let top = pick("mabt", "top-fraction=0.1");
    let single = pick("bt", "single-best");
    let diffs: Vec<f64> = top.iter().zip(&single).map(|(a, b)| a.0 - b.0).collect();
    let n = diffs.len() as f64;
    let diff = diffs.iter().sum::<f64>() / n;
    let se = (diffs.iter().map(|d| (d - diff).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    let mean = |v: &[(f64, bool)]| v.iter().map(|x| x.0).sum::<f64>() / v.len() as f64;
    let cov = top.iter().filter(|x| x.1).count() as f64 / top.len() as f64;
    let detail = format!(
        "{PIPELINE_RUNS} runs: mean true accuracy top-fraction+mabt {:.4} vs single-best {:.4}, difference {diff:+.4} (se {se:.4}); top-fraction+mabt coverage {cov:.3}",
        mean(&top),
        mean(&single)
    );
    if diff >= -TREND_MARGIN {
        verdict(true, detail)
    } else {
        // directional only: a reversal inside Monte Carlo noise is reported, not failed
        Verdict {
            pass: diff + 2.0 * se >= -TREND_MARGIN,
            soft: true,
            detail,
        }
    }
}

fn main() {
    // `cargo test -- --list` and filters are accepted but ignored
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut all_pass = true;
    let mut report = |k: usize, v: Verdict, started: Instant| {
        let tag = match (v.pass, v.soft) {
            (true, false) => "PASS",
            (true, true) => "PASS (soft, direction reversed within noise)",
            (false, _) => "FAIL",
        };
        println!(
            "criterion {k}: {tag} | {} | {:.1}s",
            v.detail,
            started.elapsed().as_secs_f64()
        );
        all_pass &= v.pass;
    };
    let t = Instant::now();
    report(1, criterion_1(), t);
    let t = Instant::now();
    report(2, criterion_2(), t);
    let t = Instant::now();
    let runs = selection_runs();
    report(3, criterion_3(&runs), t);
    report(4, criterion_4(&runs), t);
    let t = Instant::now();
    report(5, criterion_5(), t);
    let t = Instant::now();
    report(6, criterion_6(), t);
    let t = Instant::now();
    report(7, criterion_7(), t);
    let t = Instant::now();
    report(8, criterion_8(), t);
    if !all_pass {
        std::process::exit(1);
    }
}
