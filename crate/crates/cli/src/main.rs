//! `d2d`: drop generation, single-instance solves and Monte-Carlo runs.
//!
//! Settings come from built-in defaults, then `--config FILE`, then flags in
//! the order given. Failures end with one JSON line on stderr and a nonzero
//! exit code.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use d2d_core::baseline::{build_rate_table, waterfill_bandwidth, RateTable};
use d2d_core::dual::evaluate_allocation;
use d2d_core::harness::{
    build_instance, d2d_sums, mean_std, read_reports, run_drops, solve_method, sweep, utility_cdfs,
    write_cdf_csv, write_run, write_sweep_csv, ExperimentConfig, Method, MethodOutcome, MethodReport,
};
use d2d_core::scenario::{LinkGains, Topology};
use log::info;
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "d2d", version, about = "D2D underlay reuse experiments")]
struct Cli {
    #[command(flatten)]
    settings: Settings,
    #[command(subcommand)]
    command: Command,
}

/// Flags named after the config keys they override.
#[derive(Args, Debug, Default)]
struct Settings {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Any config key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    drops: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Comma-separated subset of distributed, centralized, oracle.
    #[arg(long, global = true)]
    methods: Option<String>,
    #[arg(long = "out_dir", alias = "out-dir", global = true)]
    out_dir: Option<String>,
    #[arg(long = "n_cellular", alias = "n-cellular", global = true)]
    n_cellular: Option<String>,
    #[arg(long = "n_d2d", alias = "n-d2d", global = true)]
    n_d2d: Option<String>,
    #[arg(long = "d2d_max_dist_m", alias = "d2d-max-dist-m", global = true)]
    d2d_max_dist_m: Option<String>,
    #[arg(long = "qos_margin_beta", alias = "qos-margin-beta", global = true)]
    qos_margin_beta: Option<String>,
    #[arg(long = "sweep_param", alias = "sweep-param", global = true)]
    sweep_param: Option<String>,
    /// Comma-separated values of the swept parameter.
    #[arg(long = "sweep_values", alias = "sweep-values", global = true)]
    sweep_values: Option<String>,
    #[arg(long = "max_iters", alias = "max-iters", global = true)]
    max_iters: Option<String>,
    #[arg(long, global = true)]
    tol: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write one drop's topology and link gains as JSON.
    Gen {
        #[arg(long, default_value_t = 0)]
        drop: u64,
        /// Write the drop's rate table instead.
        #[arg(long)]
        table: bool,
        /// Output file (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one instance with one method and print the report.
    Solve {
        #[arg(long, default_value = "distributed")]
        method: String,
        /// Output of `gen`.
        #[arg(long, conflicts_with_all = ["table", "drop"])]
        topo: Option<PathBuf>,
        /// Output of `gen --table`.
        #[arg(long, conflicts_with = "drop")]
        table: Option<PathBuf>,
        /// Generate the instance from the configured seed instead.
        #[arg(long)]
        drop: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo run over the configured drops.
    Run,
    /// Repeat the run at each value of the swept parameter.
    Sweep,
    /// Rebuild `cdf.csv` from a run's reports.
    Cdf {
        /// Run directory or its `reports` subdirectory.
        #[arg(long)]
        reports: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(s: &Settings) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &s.config {
        Some(path) => ExperimentConfig::from_file(path).with_context(|| format!("config {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    // A preset replaces the whole parameter block, so it goes first.
    if let Some(v) = &s.preset {
        cfg.set("preset", v)?;
    }
    let named = [
        ("drops", &s.drops),
        ("seed", &s.seed),
        ("methods", &s.methods),
        ("out_dir", &s.out_dir),
        ("n_cellular", &s.n_cellular),
        ("n_d2d", &s.n_d2d),
        ("d2d_max_dist_m", &s.d2d_max_dist_m),
        ("qos_margin_beta", &s.qos_margin_beta),
        ("sweep_param", &s.sweep_param),
        ("sweep_values", &s.sweep_values),
        ("max_iters", &s.max_iters),
        ("tol", &s.tol),
    ];
    for (key, value) in named {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    for pair in &s.set {
        let Some((k, v)) = pair.split_once('=') else {
            bail!(d2d_core::Error::Config(format!("--set expects KEY=VALUE, got `{pair}`")));
        };
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// One line to stdout. A reader that has gone away (`| head`) is not an error.
fn say(text: &str) -> anyhow::Result<()> {
    match writeln!(io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => say(text)?,
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| d2d_core::Error::Io(format!("{}: {e}", path.display())))
        .map_err(Into::into)
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Drop {
    topology: Topology,
    gains: LinkGains,
}

fn gen(cfg: &ExperimentConfig, drop: u64, table: bool, out: Option<&Path>) -> anyhow::Result<()> {
    let inst = build_instance(&cfg.params, cfg.seed, drop)?;
    let text = if table {
        serde_json::to_string_pretty(&inst.table)?
    } else {
        serde_json::to_string_pretty(&Drop {
            topology: inst.topology,
            gains: inst.gains,
        })?
    };
    emit(out, &text)
}

fn solve(
    cfg: &ExperimentConfig,
    method: &str,
    topo: Option<&Path>,
    table: Option<&Path>,
    drop: Option<u64>,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let method: Method = method.parse()?;
    let (table, gains): (RateTable, Option<LinkGains>) = match (topo, table) {
        (Some(path), _) => {
            let d: Drop = read_json(path)?;
            let alloc = waterfill_bandwidth(&d.gains, &cfg.params)?;
            (build_rate_table(&alloc, &d.gains, &cfg.params)?, Some(d.gains))
        }
        (None, Some(path)) => {
            let t: RateTable = read_json(path)?;
            t.validate()?;
            (t, None)
        }
        (None, None) => {
            let inst = build_instance(&cfg.params, cfg.seed, drop.unwrap_or(0))?;
            (inst.table, Some(inst.gains))
        }
    };
    let (objective, x, report) = solve_method(method, &table, cfg)?;
    let text = match gains {
        // With gains available the cellular side can be evaluated too.
        Some(g) => serde_json::to_string_pretty(&MethodOutcome {
            method,
            objective,
            evaluation: evaluate_allocation(&x, &table, &g, &cfg.params)?,
            report,
        })?,
        None => serde_json::to_string_pretty(&json!({
            "method": method,
            "objective": objective,
            "report": match &report {
                MethodReport::Dual(r) => serde_json::to_value(r)?,
                MethodReport::Oracle(r) => serde_json::to_value(r)?,
            },
        }))?,
    };
    emit(out, &text)
}

fn run(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let summary = run_drops(cfg)?;
    if let Some(dir) = &cfg.out_dir {
        write_run(dir, &summary)?;
        info!("wrote {}", dir.display());
    }
    for &method in &cfg.methods {
        let sums = d2d_sums(&summary, method);
        let (mean, std) = mean_std(&sums);
        let line = json!({
            "method": method,
            "drops": sums.len(),
            "skipped": summary.skipped.len(),
            "mean_sum_utility": mean,
            "std": std,
        });
        say(&line.to_string())?;
    }
    Ok(())
}

fn run_sweep(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let (rows, runs) = sweep(cfg)?;
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir)?;
        write_sweep_csv(&dir.join("sweep.csv"), &rows)?;
        for (row, summary) in rows.iter().zip(&runs) {
            write_run(&dir.join(format!("{}_{}", row.param, row.value)), summary)?;
        }
        info!("wrote {}", dir.display());
    }
    for r in &rows {
        say(&serde_json::to_string(r)?)?;
    }
    Ok(())
}

fn cdf(reports: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let summary = read_reports(reports)?;
    let series = utility_cdfs(&summary)?;
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => reports.join("cdf.csv"),
    };
    write_cdf_csv(&path, &series)?;
    say(&json!({ "series": series.len(), "path": path }).to_string())?;
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli.settings)?;
    match cli.command {
        Command::Gen { drop, table, out } => gen(&cfg, drop, table, out.as_deref()),
        Command::Solve {
            method,
            topo,
            table,
            drop,
            out,
        } => solve(&cfg, &method, topo.as_deref(), table.as_deref(), drop, out.as_deref()),
        Command::Run => run(&cfg),
        Command::Sweep => run_sweep(&cfg),
        Command::Cdf { reports, out } => cdf(&reports, out.as_deref()),
    }
}

fn kind(err: &anyhow::Error) -> &'static str {
    use d2d_core::Error as E;
    match err.downcast_ref::<E>() {
        Some(E::Domain(_)) => "domain",
        Some(E::Config(_)) => "config",
        Some(E::InfeasibleBaseline(_)) => "infeasible_baseline",
        Some(E::Contract(_)) => "contract",
        Some(E::TooLarge(_)) => "too_large",
        Some(E::Empty(_)) => "empty",
        Some(E::Io(_)) => "io",
        Some(E::AllDropsInfeasible(_)) => "all_drops_infeasible",
        None if err.downcast_ref::<std::io::Error>().is_some() => "io",
        None => "internal",
    }
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => return fail("usage", e.to_string().trim().replace('\n', " "), 2),
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = if kind(&e) == "config" { 2 } else { 1 };
            fail(kind(&e), format!("{e:#}"), code)
        }
    }
}
