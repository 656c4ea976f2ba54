//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Digits criteria read `IEFF_DIGITS_CSV`, falling back to `data/digits.csv`
//! at the workspace root; they report SKIP when neither exists.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ieff::data::{DataMatrix, LabelVector};
use ieff::efficiency::{shared_critic_bounds, Flag};
use ieff::estimators::critic::gradient_check;
use ieff::estimators::{CriticConfig, Mlp, Objective};
use ieff::harness::axioms::{azuma_simulation, AxiomConfig, Battery};
use ieff::harness::check::{check_circle, check_gaussian_mi, check_location, run_check, CheckConfig, CheckReport};
use ieff::harness::digits::load_digits_csv;
use ieff::harness::experiments::{concentration_sweep, digits_prepare, digits_task, run_table1, run_table2, signals_task, ExperimentResult, Table2Config};
use ieff::harness::logreg::LogregConfig;
use ieff::numeric::sample_std;
use ieff::rng::RngStream;
use ieff::score::{BaseEstimator, ScoreSpec};
use ndarray::Array2;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn digits_path() -> Option<PathBuf> {
    let p = std::env::var_os("IEFF_DIGITS_CSV")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/digits.csv"));
    p.exists().then_some(p)
}

fn battery(r: &CheckReport, b: Battery) -> &ieff::harness::axioms::BatteryReport {
    r.batteries.iter().find(|x| x.battery == b.name()).expect("battery ran")
}

fn c1() -> Outcome {
    let (item, t) = timed(|| check_location(&CheckConfig::default()).unwrap());
    let ok = item.passed && t < Duration::from_secs(30);
    verdict(ok, format!("{:?} in {:.1}s", item.values, t.as_secs_f64()))
}

fn c2() -> Outcome {
    let item = check_circle(&CheckConfig::default()).unwrap();
    verdict(item.passed, format!("{:?}", item.values))
}

fn c3() -> Outcome {
    let item = check_gaussian_mi(&CheckConfig::default()).unwrap();
    let worst = item
        .values
        .iter()
        .filter(|(k, _)| k.ends_with(".got"))
        .map(|(k, v)| (v - item.values[&k.replace(".got", ".want")]).abs())
        .fold(0.0, f64::max);
    verdict(item.passed, format!("worst |error| {worst:.4} nats over 30 runs"))
}

fn from_battery(r: &CheckReport, b: Battery) -> Outcome {
    let rep = battery(r, b);
    verdict(
        rep.passed,
        format!("{} violations in {} trials (allowed {}), violating seeds {:?}", rep.violations, rep.trials, rep.allowed, rep.seeds),
    )
}

fn c6(logreg: &LogregConfig) -> Outcome {
    let (res, t) = timed(|| run_table1(&[signals_task(4000, 0).unwrap()], &ScoreSpec::default(), logreg, &RngStream::new(0, 0)).unwrap());
    let exceeds = |r: &ExperimentResult| r.row("sinusoids", "fft_top20").unwrap().flags.contains(&Flag::RatioExceedsOne);
    let fired = exceeds(&res)
        || (1..3).any(|s| exceeds(&run_table1(&[signals_task(4000, s).unwrap()], &ScoreSpec::default(), logreg, &RngStream::new(s, 0)).unwrap()));
    let fft = res.row("sinusoids", "fft_top20").unwrap();
    let rp = res.row("sinusoids", "randproj_k=16").unwrap();
    let ds = res.row("sinusoids", "downsample_32").unwrap();
    let ok = fft.e_ratio > rp.e_ratio
        && rp.e_ratio > ds.e_ratio
        && fft.acc_mean >= 0.95
        && ds.acc_mean <= 0.65
        && fired
        && t < Duration::from_secs(300);
    verdict(
        ok,
        format!(
            "E fft {:.3} > rp {:.3} > ds {:.3}; acc fft {:.3} ds {:.3}; E>1 flag fired {fired}; {:.0}s",
            fft.e_ratio,
            rp.e_ratio,
            ds.e_ratio,
            fft.acc_mean,
            ds.acc_mean,
            t.as_secs_f64()
        ),
    )
}

fn c7(logreg: &LogregConfig) -> Outcome {
    let Some(path) = digits_path() else {
        return Outcome::Skip("digits CSV not found (set IEFF_DIGITS_CSV)".into());
    };
    let (res, t) = timed(|| {
        let rng = RngStream::new(0, 0);
        let raw = load_digits_csv(&path).unwrap();
        let (train, _) = digits_prepare(&raw, &rng).unwrap();
        run_table1(&[digits_task(train)], &ScoreSpec::default(), logreg, &rng).unwrap()
    });
    let id = res.row("digits", "identity").unwrap();
    let pca = res.row("digits", "pca_k=16").unwrap();
    let rp = res.row("digits", "randproj_k=16").unwrap();
    let ok = id.e_ratio > pca.e_ratio
        && pca.e_ratio > rp.e_ratio
        && (0.25..=0.45).contains(&pca.e_ratio)
        && (pca.acc_mean - 0.951).abs() <= 0.02
        && t < Duration::from_secs(600);
    verdict(
        ok,
        format!(
            "E identity {:.3} > pca16 {:.3} > rp16 {:.3}; pca16 acc {:.3}; {:.0}s",
            id.e_ratio,
            pca.e_ratio,
            rp.e_ratio,
            pca.acc_mean,
            t.as_secs_f64()
        ),
    )
}

fn c8(logreg: &LogregConfig) -> Outcome {
    let Some(path) = digits_path() else {
        return Outcome::Skip("digits CSV not found (set IEFF_DIGITS_CSV)".into());
    };
    let rng = RngStream::new(0, 0);
    let raw = load_digits_csv(&path).unwrap();
    let (train, test) = digits_prepare(&raw, &rng).unwrap();
    let res: ExperimentResult = run_table2(&train, &test, &Table2Config::default(), &ScoreSpec::default(), logreg, &rng).unwrap();
    let gap = |m: String| res.row("digits", &m).and_then(|r| r.gap).unwrap();
    let gaps: Vec<(usize, f64, f64)> = [8, 16, 32].iter().map(|&k| (k, gap(format!("pca_k={k}")), gap(format!("randproj_k={k}")))).collect();
    let rho = res.spearman.unwrap();
    let ok = gaps.iter().all(|&(_, p, r)| p < r) && rho > 0.0;
    verdict(ok, format!("gaps (k, pca, randproj) {gaps:.3?}; spearman {rho:.3} excluding {:?}", res.spearman_excluded))
}

fn c9() -> Outcome {
    let seeds: Vec<u64> = (0..20).collect();
    let e = concentration_sweep(&[2000, 8000], &seeds, 20, &BaseEstimator::Knn { k: 3 }, 1_000_003).unwrap();
    let (s2000, s8000) = (sample_std(&e[0]), sample_std(&e[1]));
    let ratio = s8000 / s2000;
    verdict((0.35..=0.75).contains(&ratio), format!("std N=2000 {s2000:.4}, N=8000 {s8000:.4}, ratio {ratio:.3}"))
}

fn c10(r: &CheckReport) -> Outcome {
    let rep = battery(r, Battery::Azuma);
    let cfg = AxiomConfig::default();
    let worst = azuma_simulation(cfg.seed, 1000, cfg.azuma_steps, 0.02, 2.0)
        .iter()
        .map(|&(_, freq, bound)| freq / (cfg.azuma_slack * bound))
        .fold(0.0, f64::max);
    verdict(rep.passed, format!("{} grid violations over {} trajectories; worst freq/(slack * bound) {worst:.3}", rep.violations, rep.trials))
}

fn c11() -> Outcome {
    let mut rng = RngStream::new(11, 0);
    let mlp = Mlp::new(6, &[16, 8], &mut rng);
    let x = Array2::from_shape_fn((64, 6), |(_, j)| if j < 3 { rng.normal() } else { 0.0 });
    let mut x = x;
    for r in 0..64 {
        x[[r, 3 + rng.below(3)]] = 1.0;
    }
    let grad = [Objective::Dv, Objective::Nwj].map(|o| gradient_check(&mlp, &x, 32, o, 40, &mut rng));
    let mut cfg = CriticConfig::fast();
    cfg.max_steps = 200;
    let mut holds = 0;
    for d in 0..20u64 {
        let mut r = RngStream::new(100 + d, 0);
        let shift = r.uniform_range(0.0, 3.0);
        let labels: Vec<usize> = (0..400).map(|i| i % 2).collect();
        let z = DataMatrix::new(400, 2, labels.iter().flat_map(|&c| [c as f64 * shift + r.normal(), r.normal()]).collect()).unwrap();
        let (dv, nwj) = shared_critic_bounds(&z, &LabelVector::new(labels, 2).unwrap(), &cfg, &RngStream::new(200 + d, 0)).unwrap();
        holds += usize::from(dv >= nwj);
    }
    let ok = grad.iter().all(|&g| g < 1e-4) && holds == 20;
    verdict(ok, format!("gradient rel. error dv {:.2e} nwj {:.2e}; DV >= NWJ on {holds}/20 datasets", grad[0], grad[1]))
}

fn c12(first: &CheckReport) -> Outcome {
    let a = first.to_json().unwrap();
    let b = run_check(&CheckConfig::default(), &[]).unwrap().to_json().unwrap();
    verdict(a == b, format!("{} bytes, identical {}", a.len(), a == b))
}

type Criterion<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn main() -> ExitCode {
    let logreg = LogregConfig::default();
    let report = run_check(&CheckConfig::default(), &[]).unwrap();
    let criteria: Vec<(&str, Criterion)> = vec![
        ("1 gaussian-location oracle", Box::new(c1)),
        ("2 circle oracle", Box::new(c2)),
        ("3 ksg validation", Box::new(c3)),
        ("4 exact dpi battery", Box::new(|| from_battery(&report, Battery::Dpi))),
        ("5 invariance battery", Box::new(|| from_battery(&report, Battery::Invariance))),
        ("6 table 1 signals", Box::new(|| c6(&logreg))),
        ("7 table 1 digits", Box::new(|| c7(&logreg))),
        ("8 table 2 robustness", Box::new(|| c8(&logreg))),
        ("9 concentration trend", Box::new(c9)),
        ("10 azuma simulation", Box::new(|| c10(&report))),
        ("11 critic numerics", Box::new(c11)),
        ("12 determinism", Box::new(|| c12(&report))),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let (tag, detail) = match run() {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("criterion {name}: {tag}: {detail}");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
