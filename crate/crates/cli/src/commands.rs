use std::path::{Path, PathBuf};

use ieff::efficiency::{compute_efficiency, EfficiencyReport};
use ieff::harness::axioms::Battery;
use ieff::harness::check::{run_check, CheckConfig};
use ieff::harness::digits::load_digits_csv;
use ieff::harness::experiments::{digits_prepare, digits_task, run_table1, run_table2, signals_task, ExperimentResult};
use ieff::harness::generators::{gen_circle, gen_gaussian_location, gen_redundant, gen_sinusoids, SinusoidConfig};
use ieff::{DataMatrix, Dataset, LabelVector, RngStream};
use serde::Serialize;
use serde_json::json;

use crate::config::{self, CircleConfig, Domain, EfficiencyConfig, ExperimentConfig, LocationConfig, Norm, RedundantConfig};
use crate::{CheckArgs, Cli, CliError, Command, EfficiencyArgs, ExperimentArgs, GenKind, GenerateArgs, Table};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate(a) => generate(cli, a),
        Command::Efficiency(a) => efficiency(cli, a),
        Command::Experiment(a) => experiment(cli, a),
        Command::Check(a) => check(cli, a),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    let io = |source| ieff::Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, text).map_err(io)?;
    Ok(())
}

fn save_dataset(data: &Dataset, path: &Path) -> Result<(), CliError> {
    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    write_file(path, &String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Manifest written next to every generated file: seeds, the resolved
/// config and its hash.
fn write_manifest<T: Serialize>(path: &Path, command: &str, seed: u64, cfg: &T, outputs: &[PathBuf]) -> Result<(), CliError> {
    let manifest = json!({
        "command": command,
        "seed": seed,
        "config": cfg,
        "config_sha256": config::config_hash(cfg)?,
        "outputs": outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_file(path, &(serde_json::to_string_pretty(&manifest).map_err(ieff::Error::from)? + "\n"))
}

fn manifest_path(output: &Path) -> PathBuf {
    output.with_extension("manifest.json")
}

fn gen_rng(seed: u64, kind: &str) -> RngStream {
    RngStream::new(seed, 0).derive(kind, 0)
}

fn generate(cli: &Cli, a: &GenerateArgs) -> Result<(), CliError> {
    let cfg_path = cli.config.as_deref();
    let (name, data, cfg_json, seed) = match a.kind {
        GenKind::Sinusoids => {
            let mut cfg: SinusoidConfig = config::load(cfg_path)?;
            cfg.n = a.n.unwrap_or(cfg.n);
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            if let Some(r) = &a.snr_db {
                let [lo, hi] = r[..] else {
                    return Err(CliError::Validation("--snr-db takes LO,HI".into()));
                };
                cfg.snr_db_range = [lo, hi];
            }
            cfg.validate()?;
            ("sinusoids", gen_sinusoids(&cfg)?, serde_json::to_value(&cfg), cfg.seed)
        }
        GenKind::Circle => {
            let mut cfg: CircleConfig = config::load(cfg_path)?;
            cfg.n = a.n.unwrap_or(cfg.n);
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            cfg.alpha = a.alpha.unwrap_or(cfg.alpha);
            cfg.q = a.q.unwrap_or(cfg.q);
            cfg.symmetric |= a.symmetric;
            let s = gen_circle(cfg.n, cfg.alpha, cfg.q, cfg.symmetric, &mut gen_rng(cfg.seed, "circle"))?;
            ("circle", s.data, serde_json::to_value(&cfg), cfg.seed)
        }
        GenKind::Redundant => {
            let mut cfg: RedundantConfig = config::load(cfg_path)?;
            cfg.n = a.n.unwrap_or(cfg.n);
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            cfg.sigma_eps = a.sigma_eps.unwrap_or(cfg.sigma_eps);
            let s = gen_redundant(cfg.n, cfg.sigma_eps, &mut gen_rng(cfg.seed, "redundant"))?;
            ("redundant", s.to_dataset(cfg.seed)?, serde_json::to_value(&cfg), cfg.seed)
        }
        GenKind::Location => {
            let mut cfg: LocationConfig = config::load(cfg_path)?;
            cfg.reps = a.reps.or(a.n).unwrap_or(cfg.reps);
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            cfg.sigma = a.sigma.unwrap_or(cfg.sigma);
            cfg.tau = a.tau.unwrap_or(cfg.tau);
            let r = gen_gaussian_location(cfg.reps, cfg.n_per_rep, cfg.theta, cfg.sigma, cfg.tau, &mut gen_rng(cfg.seed, "location"))?;
            let values = r.xbar.iter().zip(&r.z).flat_map(|(&m, &z)| [m, z]).collect();
            let data = Dataset::new("location", DataMatrix::new(cfg.reps, 2, values)?, LabelVector::new(vec![0; cfg.reps], 2)?, cfg.seed)?;
            ("location", data, serde_json::to_value(&cfg), cfg.seed)
        }
    };
    let cfg_json = cfg_json.map_err(ieff::Error::from)?;
    let output = a.output.clone().unwrap_or_else(|| cli.out_dir.join(format!("{name}.csv")));
    save_dataset(&data, &output)?;
    write_manifest(&manifest_path(&output), &format!("generate {name}"), seed, &cfg_json, std::slice::from_ref(&output))?;
    eprintln!("wrote {} ({} rows, {} features)", output.display(), data.len(), data.dim());
    Ok(())
}

fn efficiency(cli: &Cli, a: &EfficiencyArgs) -> Result<(), CliError> {
    let mut cfg: EfficiencyConfig = config::load(cli.config.as_deref())?;
    cfg.seed = cli.seed.unwrap_or(cfg.seed);
    if let Some(d) = &a.data {
        cfg.data = Some(d.clone());
    }
    if let Some(c) = &a.channel {
        cfg.channel = config::parse_channel(c)?;
    }
    if let Some(s) = &a.score {
        cfg.score = config::parse_score(s)?;
    }
    if let Some(n) = &a.norm {
        cfg.norm = if n == "diff" { Norm::Diff } else { Norm::Ratio };
    }
    let o = &mut cfg.options;
    o.s_min = a.smin.or(o.s_min);
    o.folds = a.folds.or(o.folds);
    o.jackknife_groups = a.jackknife.or(o.jackknife_groups);
    o.delta = a.delta.or(o.delta);
    o.c = a.c.unwrap_or(o.c);
    o.comp = a.comp.unwrap_or(o.comp);
    cfg.validate()?;

    let path = cfg.data.as_deref().expect("validated");
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    let data = Dataset::load_csv(path, name)?;
    let report = compute_efficiency(&data, &cfg.channel, &cfg.score, &cfg.options, &RngStream::new(cfg.seed, 0))?;
    let csv = EfficiencyReport::to_csv(&[report]);
    match &a.output {
        Some(p) => write_file(p, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn digits_path(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    cfg.digits_csv
        .clone()
        .or_else(|| std::env::var_os("IEFF_DIGITS_CSV").map(PathBuf::from))
        .ok_or_else(|| CliError::Validation("digits CSV required: pass --digits or set IEFF_DIGITS_CSV (see scripts/export_digits.py)".into()))
}

fn experiment(cli: &Cli, a: &ExperimentArgs) -> Result<(), CliError> {
    let mut cfg: ExperimentConfig = config::load(cli.config.as_deref())?;
    cfg.seed = cli.seed.unwrap_or(cfg.seed);
    cfg.domain = a.domain.unwrap_or(cfg.domain);
    cfg.signals_n = a.n.unwrap_or(cfg.signals_n);
    if a.digits.is_some() {
        cfg.digits_csv = a.digits.clone();
    }
    if let Some(s) = &a.score {
        cfg.score = config::parse_score(s)?;
    }
    if a.noise_sigma.is_some() {
        cfg.table2.noise_sigma = a.noise_sigma;
    }
    cfg.validate()?;
    let rng = RngStream::new(cfg.seed, 0);

    let (name, result): (&str, ExperimentResult) = match a.table {
        Table::Table1 => {
            let mut tasks = Vec::new();
            if matches!(cfg.domain, Domain::Signals | Domain::Both) {
                tasks.push(signals_task(cfg.signals_n, cfg.seed)?);
            }
            if matches!(cfg.domain, Domain::Digits | Domain::Both) {
                let raw = load_digits_csv(&digits_path(&cfg)?)?;
                tasks.push(digits_task(digits_prepare(&raw, &rng)?.0));
            }
            ("table1", run_table1(&tasks, &cfg.score, &cfg.logreg, &rng)?)
        }
        Table::Table2 => {
            let raw = load_digits_csv(&digits_path(&cfg)?)?;
            let (train, test) = digits_prepare(&raw, &rng)?;
            ("table2", run_table2(&train, &test, &cfg.table2, &cfg.score, &cfg.logreg, &rng)?)
        }
    };
    let csv_path = cli.out_dir.join(format!("{name}.csv"));
    write_file(&csv_path, &result.to_csv())?;
    if let Some(d) = result.diagnostics.first() {
        eprintln!(
            "warning: {} classifier fits hit max_iter (first: {}, l2 {}, grad norm {:.2e})",
            result.diagnostics.len(),
            d.context,
            d.l2,
            d.grad_norm
        );
    }
    if let Some(rho) = result.spearman {
        eprintln!("spearman(per_dim_mi, acc_robust) = {rho:.4} excluding {:?}", result.spearman_excluded);
    }
    write_manifest(&cli.out_dir.join(format!("{name}.manifest.json")), &format!("experiment {name}"), cfg.seed, &cfg, std::slice::from_ref(&csv_path))?;
    eprintln!("wrote {} ({} rows)", csv_path.display(), result.rows.len());
    Ok(())
}

fn check(cli: &Cli, a: &CheckArgs) -> Result<(), CliError> {
    let mut cfg: CheckConfig = config::load(cli.config.as_deref())?;
    cfg.seed = cli.seed.unwrap_or(cfg.seed);
    cfg.validate()?;
    let only = a.only.iter().map(|s| Battery::parse(s)).collect::<ieff::Result<Vec<_>>>()?;
    let report = run_check(&cfg, &only)?;
    let json = report.to_json()?;
    match &a.output {
        Some(p) => write_file(p, &json)?,
        None => print!("{json}"),
    }
    if report.passed {
        return Ok(());
    }
    let failed: Vec<&str> = report
        .oracles
        .iter()
        .filter(|o| !o.passed)
        .map(|o| o.name.as_str())
        .chain(report.batteries.iter().filter(|b| !b.passed).map(|b| b.battery.as_str()))
        .collect();
    let mut msg = format!("check failed: {}", failed.join(", "));
    if let Some((battery, seed)) = report.first_violation() {
        msg.push_str(&format!("; first violating seed {seed} in `{battery}` (replay: ieff check --only {battery} --seed {seed})"));
    }
    Err(CliError::CheckFailed(msg))
}
