use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;

use lim_enmpc::scenario::{high_speed, override_key};
use lim_enmpc::sim::run_many;
use lim_enmpc::{default_config, run_with, write_trace, ControllerSpec, Metrics, RunOptions, Scenario, SearchMode};

/// Mean per-step controller time above which `bench` warns.
const LATENCY_BUDGET_US: f64 = 100.0;

#[derive(Parser)]
#[command(name = "limsim", version, about = "Closed-loop LIM drive simulator (ENMPC and DTC)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write its trace.
    Run(RunArgs),
    /// Run ENMPC and the DTC baseline on the same plant and print a metric table.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Re-run a scenario once per value of a dotted key.
    Sweep(SweepArgs),
    /// Check a scenario file without simulating it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Per-step ENMPC latency distribution.
    Bench(BenchArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Trace CSV destination.
    #[arg(long)]
    out: PathBuf,
    /// Metrics destination; printed to stdout when omitted.
    #[arg(long)]
    metrics: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MetricsFormat::Kv)]
    metrics_format: MetricsFormat,
    /// Record controller wall time in the trace (traces stop being reproducible).
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Dotted key into the scenario file, e.g. `controller.P_sw.0`.
    #[arg(long)]
    param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    /// Directory for one trace per value.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// Scenario to time; the built-in high-speed scenario by default.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Number of timed runs.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Args, Clone, Copy)]
struct SearchArgs {
    /// Roll ENMPC candidates out on the rayon pool.
    #[arg(long)]
    parallel_search: bool,
}

impl SearchArgs {
    fn options(self, timing: bool) -> RunOptions {
        RunOptions {
            mode: if self.parallel_search { SearchMode::Parallel } else { SearchMode::Sequential },
            timing,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricsFormat {
    /// `key=value` lines
    Kv,
    /// header plus one row
    Csv,
}

impl MetricsFormat {
    fn render(self, m: &Metrics) -> String {
        match self {
            MetricsFormat::Kv => m.to_key_value(),
            MetricsFormat::Csv => m.to_csv(),
        }
    }
}

fn load(path: &Path) -> anyhow::Result<Scenario> {
    Scenario::load(path).with_context(|| format!("cannot use scenario {}", path.display()))
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let sc = load(&args.scenario)?;
    let out = run_with(&sc, args.search.options(args.timing))?;
    write_trace(&out.trace, &args.out)?;
    if out.infeasible_ticks > 0 {
        warn!("{} ticks had no feasible candidate", out.infeasible_ticks);
    }
    let text = args.metrics_format.render(&out.metrics);
    match args.metrics {
        Some(path) => fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn metric_table(columns: &[(String, &Metrics)]) -> String {
    let rows: [(&str, fn(&Metrics) -> f64); 7] = [
        ("transitions_per_second", |m| m.transitions_per_second),
        ("tracking_rmse", |m| m.tracking_rmse),
        ("settling_time", |m| m.settling_time),
        ("force_ripple", |m| m.force_ripple),
        ("max_flux", |m| m.max_flux),
        ("max_current", |m| m.max_current),
        ("mean_compute_us", |m| m.mean_compute_us),
    ];
    let mut s = format!("{:<24}", "metric");
    for (name, _) in columns {
        s.push_str(&format!("{name:>16}"));
    }
    s.push('\n');
    for (label, get) in rows {
        s.push_str(&format!("{label:<24}"));
        for (_, m) in columns {
            s.push_str(&format!("{:>16.6}", get(m)));
        }
        s.push('\n');
    }
    s
}

fn cmd_compare(path: &Path, search: SearchArgs) -> anyhow::Result<()> {
    let sc = load(path)?;
    let enmpc_cfg = match &sc.controller {
        ControllerSpec::Enmpc(cfg) => cfg.clone(),
        ControllerSpec::Dtc(_) => default_config(sc.ts),
    };
    let pair = [
        sc.with_controller(ControllerSpec::Enmpc(enmpc_cfg)),
        sc.with_controller(ControllerSpec::Dtc(sc.dtc_config()?)),
    ];
    let results = run_many(&pair, search.options(true));
    let mut columns = Vec::new();
    for (sc, res) in pair.iter().zip(results) {
        let out = res.with_context(|| format!("{} run failed", sc.controller.label()))?;
        columns.push((sc.controller.label().to_string(), out.metrics));
    }
    let refs: Vec<(String, &Metrics)> = columns.iter().map(|(n, m)| (n.clone(), m)).collect();
    print!("{}", metric_table(&refs));
    let (enmpc, dtc) = (&columns[0].1, &columns[1].1);
    if enmpc.transitions_per_second > 0.0 {
        println!(
            "switching ratio dtc/enmpc = {:.2}",
            dtc.transitions_per_second / enmpc.transitions_per_second
        );
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<()> {
    let base = load(&args.scenario)?;
    let variants = args
        .values
        .iter()
        .map(|v| {
            let mut sc = override_key(&base, &args.param, v.trim())?;
            sc.name = format!("{}-{}", base.name, v.trim());
            Ok(sc)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let results = run_many(&variants, args.search.options(false));
    if let Some(dir) = &args.trace_dir {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let mut header = true;
    for ((value, sc), res) in args.values.iter().zip(&variants).zip(results) {
        let out = res.with_context(|| format!("run with {}={} failed", args.param, value))?;
        if let Some(dir) = &args.trace_dir {
            write_trace(&out.trace, &dir.join(format!("{}.csv", sc.name)))?;
        }
        let csv = out.metrics.to_csv();
        let mut lines = csv.lines();
        let (keys, row) = (lines.next().unwrap_or_default(), lines.next().unwrap_or_default());
        if header {
            println!("{},{keys}", args.param);
            header = false;
        }
        println!("{},{row}", value.trim());
    }
    Ok(())
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

fn cmd_bench(args: BenchArgs) -> anyhow::Result<()> {
    let sc = match &args.scenario {
        Some(p) => load(p)?,
        None => high_speed(),
    };
    if !matches!(sc.controller, ControllerSpec::Enmpc(_)) {
        bail!("bench times the ENMPC controller; {} uses DTC", sc.name);
    }
    let mut samples = Vec::new();
    for _ in 0..args.repeats.max(1) {
        let out = run_with(&sc, args.search.options(true))?;
        samples.extend(out.trace.records.iter().map(|r| r.compute_us));
    }
    samples.sort_by(f64::total_cmp);
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    println!("scenario {} ({} steps timed)", sc.name, samples.len());
    println!("mean_us={mean:.3}");
    for (label, q) in [("p50", 0.5), ("p90", 0.9), ("p99", 0.99), ("p999", 0.999)] {
        println!("{label}_us={:.3}", percentile(&samples, q));
    }
    println!("max_us={:.3}", samples[samples.len() - 1]);
    if mean > LATENCY_BUDGET_US {
        warn!("mean step time {mean:.1} us exceeds the {LATENCY_BUDGET_US} us budget");
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Compare { scenario, search } => cmd_compare(&scenario, search),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Validate { scenario } => {
            let sc = load(&scenario)?;
            println!("{}: ok ({} steps, controller {})", sc.name, sc.steps(), sc.controller.label());
            Ok(())
        }
        Command::Bench(args) => cmd_bench(args),
    }
}
