//! `optsensor`: offline/online sensor placement driver.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use optsensor::config::RunConfig;
use optsensor::pipeline::{
    evaluation_designs, build_problem, pearson, read_designs, report_path, run_evaluate, run_offline, run_online,
    RunReport,
};

#[derive(Parser)]
#[command(name = "optsensor", version, about = "Optimal sensor placement by expected information gain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set lowrank.k=30`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw samples, solve MAP points and persist low-rank Hessians.
    Offline(Common),
    /// Optimize the design from persisted offline artifacts.
    Online(Common),
    /// Evaluate criteria on a list of designs.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// JSON list of index lists; overrides `evaluate.designs_file`.
        #[arg(long)]
        designs: Option<PathBuf>,
    },
    /// Summarize the online report and any evaluation table.
    Report(Common),
}

fn load(common: &Common) -> anyhow::Result<RunConfig> {
    RunConfig::load(&common.config, &common.overrides)
        .with_context(|| format!("loading config {}", common.config.display()))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("warning: run finished without full convergence");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Offline(c) => {
            let cfg = load(&c)?;
            let m = run_offline(&cfg).context("offline stage")?;
            println!(
                "offline: {} low-rank file(s), k = {}, p = {}, {} operator actions, {:.2} s",
                m.samples.len(),
                m.k,
                m.p,
                m.counters.operator_actions(),
                m.wall_time_s
            );
            Ok(m.converged)
        }
        Command::Online(c) => {
            let cfg = load(&c)?;
            let report = run_online(&cfg).context("online stage")?;
            print_report(&report);
            Ok(report.converged)
        }
        Command::Evaluate { common, designs } => {
            let cfg = load(&common)?;
            let d = build_problem(&cfg)?.candidate_count();
            let list = match designs {
                Some(p) => read_designs(&p, d)?,
                None => evaluation_designs(&cfg, d)?,
            };
            let table = run_evaluate(&cfg, &list).context("evaluation")?;
            println!("evaluated {} design(s) on {:?}", table.designs.len(), table.columns);
            Ok(true)
        }
        Command::Report(c) => {
            let cfg = load(&c)?;
            let report = RunReport::load(&report_path(&cfg))?;
            print_report(&report);
            let eval = cfg.output_dir.join("evaluate.csv");
            if eval.exists() {
                print_correlations(&eval)?;
            }
            Ok(report.converged)
        }
    }
}

fn print_report(r: &RunReport) {
    println!("{:?} / {:?}: d = {}, r = {}", r.problem, r.mode, r.d, r.r);
    for d in &r.designs {
        let rank = d.rank.map_or(String::new(), |k| format!(" (rank {k})"));
        println!("  {:<9} {:?} value {:.6}{rank}", d.label, d.design.indices(), d.value);
    }
    if let Some(v) = r.optimal_value {
        println!("  optimum   {v:.6}");
    }
    if let Some(s) = &r.random {
        println!("  random    n = {} min {:.6} median {:.6} max {:.6}", s.count, s.min, s.median, s.max);
    }
    if let Some(b) = r.gap_bound {
        let kind = if r.gap_bound_certified == Some(true) { "certified" } else { "estimated" };
        println!("  gap bound {b:.3e} ({kind})");
    }
    println!(
        "  offline operator actions {}, online operator actions {}, online evaluations {}",
        r.counters.offline.operator_actions(),
        r.counters.online_operator_actions,
        r.counters.online_criterion_evaluations
    );
    println!("  wall time offline {:.2} s, online {:.2} s", r.wall_times.offline_s, r.wall_times.online_s);
}

fn print_correlations(path: &Path) -> anyhow::Result<()> {
    let mut reader = csv::Reader::from_path(path)?;
    let names: Vec<String> = reader.headers()?.iter().skip(2).map(str::to_string).collect();
    let mut cols = vec![Vec::new(); names.len()];
    for rec in reader.records() {
        let rec = rec?;
        for (c, v) in cols.iter_mut().zip(rec.iter().skip(2)) {
            c.push(v.parse::<f64>().with_context(|| format!("bad value {v:?} in {}", path.display()))?);
        }
    }
    if names.is_empty() {
        bail!("{} has no criterion columns", path.display());
    }
    let mut out = serde_json::Map::new();
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            let rho = pearson(&cols[i], &cols[j]);
            println!("  pearson({}, {}) = {rho:.4}", names[i], names[j]);
            out.insert(format!("{}~{}", names[i], names[j]), serde_json::json!(rho));
        }
    }
    let dest = path.with_file_name("correlations.json");
    std::fs::write(&dest, serde_json::to_string_pretty(&out)?)?;
    Ok(())
}
