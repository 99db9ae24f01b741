use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use scmcts::blocks::Problem;
use scmcts::harness::{
    analyze_edges, generate_dataset, load_or_generate, resolve_stats, run_ablation, run_benchmark_streaming,
    run_prior_phase, run_speed, run_sweep, solve_instance, to_json_string, write_csv, write_json, BackendKind,
    BenchReport, ExperimentConfig, HarnessError, Instance, RunRecord, SweepParam,
};
use scmcts::search::PathTrace;

#[derive(Parser)]
#[command(name = "scmcts", version, about = "Reward-guided MCTS planning experiments")]
struct Cli {
    /// TOML or JSON config; a previously emitted report also works.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    backend: Option<Backend>,
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Synthetic,
    Remote,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the benchmark instances.
    GenDataset,
    /// Sample prior solutions and write per-factor statistics.
    PriorStats,
    /// Search one problem.
    Solve(Target),
    /// Run the benchmark.
    Bench,
    /// Run the cumulative ablation ladder.
    Ablate,
    /// Run the benchmark across a parameter grid.
    Sweep {
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
    },
    /// Correlate rewards with verifier progress.
    Analyze {
        /// Bench report recorded with verifier analytics; runs one when absent.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Compare plain and speculative rollouts.
    Speed,
    /// Search one problem and export its tree.
    ExportTree(Target),
}

#[derive(clap::Args)]
struct Target {
    /// Problem JSON file.
    #[arg(long, conflicts_with = "instance")]
    problem: Option<PathBuf>,
    /// Dataset instance id, e.g. s04-0007.
    #[arg(long)]
    instance: Option<String>,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &cli.config {
        None => ExperimentConfig::default(),
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
            if path.extension().is_some_and(|e| e == "toml") {
                toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?
            } else {
                ExperimentConfig::from_json_str(&text)?
            }
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(b) = cli.backend {
        cfg.backend.kind = match b {
            Backend::Synthetic => BackendKind::Synthetic,
            Backend::Remote => BackendKind::Remote,
        };
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pick_instance(cfg: &ExperimentConfig, target: &Target) -> Result<Instance, HarnessError> {
    if let Some(path) = &target.problem {
        let problem = Problem::load(path)?;
        let steps = problem.min_length()?;
        let id = path.file_stem().map_or("problem".into(), |s| s.to_string_lossy().into_owned());
        return Ok(Instance { id, steps, problem });
    }
    let instances = load_or_generate(&cfg.dataset)?;
    match &target.instance {
        Some(id) => instances
            .into_iter()
            .find(|i| &i.id == id)
            .ok_or_else(|| HarnessError::Config(format!("no instance {id} in the dataset"))),
        None => instances.into_iter().next().ok_or_else(|| HarnessError::Config("dataset is empty".into())),
    }
}

fn print_summary(report: &BenchReport) {
    for g in report.summary.rows() {
        let label = if g.group == "all" { "all".to_string() } else { format!("{} steps", g.group) };
        println!("{label:>9}  {:>4}/{:<4}  {:.3}", g.solved, g.instances, g.accuracy);
    }
}

/// Appends each finished batch to a JSON-lines file, removed once the full
/// report is written.
fn bench_with_partial(cfg: &ExperimentConfig, out: &Path) -> Result<BenchReport, HarnessError> {
    let instances = load_or_generate(&cfg.dataset)?;
    let stats = resolve_stats(cfg)?;
    let partial = out.join("bench.partial.jsonl");
    let mut file = File::create(&partial)?;
    let mut sink = |batch: &[RunRecord]| -> Result<(), HarnessError> {
        for r in batch {
            writeln!(file, "{}", serde_json::to_string(r)?)?;
        }
        file.flush()?;
        Ok(())
    };
    let report = run_benchmark_streaming(cfg, &instances, stats.as_ref(), &mut sink)?;
    std::fs::remove_file(&partial)?;
    Ok(report)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let cfg = load_config(&cli)?;
    let out = cli.out.as_path();
    std::fs::create_dir_all(out)?;
    match &cli.command {
        Command::GenDataset => {
            let data = generate_dataset(&cfg.dataset)?;
            write_json(&out.join("dataset.json"), &data)?;
            println!("{} instances", data.len());
        }
        Command::PriorStats => {
            let report = run_prior_phase(&cfg)?;
            report.stats.save(&out.join("prior_stats.json"))?;
            write_json(&out.join("prior_report.json"), &report)?;
            for (kind, s) in &report.stats.0 {
                println!("{kind}: {} samples, boundaries {:?}", report.samples[kind], s.boundaries);
                for r in &s.regions {
                    println!("  mu={:.6} sigma={:.6} n={}", r.mu, r.sigma, r.n);
                }
            }
        }
        Command::Solve(target) | Command::ExportTree(target) => {
            let inst = pick_instance(&cfg, target)?;
            let stats = resolve_stats(&cfg)?;
            let (outcome, record) = solve_instance(&cfg, &inst, stats.as_ref())?;
            let trace = PathTrace::of(&outcome.tree, outcome.best_node, None)?;
            let dot = outcome.tree.to_dot(&inst.problem, Some(outcome.best_node));
            std::fs::write(out.join("tree.dot"), dot)?;
            if matches!(cli.command, Command::ExportTree(_)) {
                write_json(&out.join("tree.json"), &outcome.tree)?;
            } else {
                let doc = serde_json::json!({
                    "report": "solve",
                    "config": cfg,
                    "instance": inst,
                    "record": record,
                    "path": trace,
                });
                std::fs::write(out.join("solve.json"), to_json_string(&doc)?)?;
                println!("{} solved={} plan:", record.id, record.solved);
                for a in &record.plan {
                    println!("  {a}");
                }
            }
        }
        Command::Bench => {
            let report = bench_with_partial(&cfg, out)?;
            write_json(&out.join("bench.json"), &report)?;
            write_csv(&out.join("bench.csv"), &report.summary.rows())?;
            print_summary(&report);
        }
        Command::Ablate => {
            let report = run_ablation(&cfg)?;
            write_json(&out.join("ablation.json"), &report)?;
            report.write_csv(&out.join("ablation.csv"))?;
            for r in &report.rows {
                println!("{} {:<28} {:.3} ({:+.3})", r.rung, r.name, r.accuracy, r.delta);
            }
        }
        Command::Sweep { param, grid } => {
            let p = SweepParam::parse(param)
                .ok_or_else(|| HarnessError::Config(format!("unknown sweep parameter {param:?}")))?;
            let report = run_sweep(&cfg, p, grid)?;
            write_json(&out.join("sweep.json"), &report)?;
            report.write_csv(&out.join(format!("sweep_{}.csv", p.name())))?;
            for r in &report.rows {
                println!("{p}={} accuracy {:.3}", r.value, r.accuracy);
            }
            if let Some(t) = report.trend {
                println!("trend (Spearman) {t:.3}");
            }
        }
        Command::Analyze { input } => {
            let (cfg, edges) = match input {
                Some(path) => {
                    let report: BenchReport = serde_json::from_str(&std::fs::read_to_string(path)?)
                        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
                    let edges = report.edges();
                    (report.config, edges)
                }
                None => {
                    let mut c = cfg.clone();
                    c.analysis.verifier = true;
                    c.validate()?;
                    let report = bench_with_partial(&c, out)?;
                    (c, report.edges())
                }
            };
            let report = analyze_edges(&cfg, &edges)?;
            write_json(&out.join("interpretability.json"), &report)?;
            write_csv(&out.join("bins.csv"), &report.bins)?;
            println!("{} edges, {:.3} with positive progress", report.edges, report.positive_fraction);
            if let Some(s) = report.spearman {
                println!("spearman {:.4} (p={:.4})", s.coefficient, s.p_value);
            }
            if let Some(s) = report.pearson {
                println!("pearson  {:.4} (p={:.4})", s.coefficient, s.p_value);
            }
        }
        Command::Speed => {
            let report = run_speed(&cfg)?;
            write_json(&out.join("speed.json"), &report)?;
            write_csv(&out.join("speed.csv"), &report.rows)?;
            for r in &report.rows {
                println!(
                    "{:<12} {:.3} ms/node  {:.0} tok/s  cost/node {:.3}  acceptance {}",
                    r.mode,
                    r.mean_wall_ms_per_node,
                    r.tokens_per_sec,
                    r.virtual_cost_per_node,
                    r.acceptance_rate.map_or("-".into(), |a| format!("{a:.3}"))
                );
            }
            println!(
                "virtual speedup {:.1}%  wall speedup {:.1}%",
                report.virtual_speedup_pct, report.wall_speedup_pct
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
