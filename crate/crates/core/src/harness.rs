//! Monte-Carlo experiments over seeded drops.
//!
//! Drops run on the rayon pool and are keyed by index, so results do not
//! depend on scheduling. Files are written by the caller's thread only.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{build_rate_table, waterfill_bandwidth, RateTable};
use crate::dual::{evaluate_allocation, solve_distributed, DualOptions, Evaluation, SolveReport, StepState};
use crate::error::{Error, Result};
use crate::model::SystemParams;
use crate::reference::{solve_binary_oracle, solve_centralized_relaxed, CentralizedOptions, OracleResult};
use crate::scenario::{compute_link_gains, generate_topology, LinkGains, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Distributed,
    Centralized,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Distributed, Method::Centralized, Method::Oracle];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Distributed => "distributed",
            Method::Centralized => "centralized",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub params: SystemParams,
    pub drops: usize,
    pub methods: Vec<Method>,
    pub sweep: Option<SweepSpec>,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub max_iters: usize,
    pub tol: f64,
    pub patience: usize,
    pub initial_price: f64,
    /// Starting state of the step-size rule (`d_best` is ignored).
    pub step: StepState,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            params: SystemParams::default(),
            drops: 100,
            methods: vec![Method::Distributed],
            sweep: None,
            seed: 1,
            out_dir: None,
            max_iters: DualOptions::default().max_iters,
            tol: DualOptions::default().tol,
            patience: DualOptions::default().patience,
            initial_price: DualOptions::default().initial_price,
            step: StepState::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse `{value}` for `{key}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect()
}

/// Sets one `SystemParams` field by name.
pub fn set_param(params: &mut SystemParams, key: &str, value: f64) -> Result<()> {
    let count = |v: f64| -> Result<usize> {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::Config(format!("`{key}` must be a whole number, got {v}")))
        }
    };
    match key {
        "cell_radius_m" => params.cell_radius_m = value,
        "cluster_radius_m" => params.cluster_radius_m = value,
        "d2d_max_dist_m" => params.d2d_max_dist_m = value,
        "n_cellular" => params.n_cellular = count(value)?,
        "n_d2d" => params.n_d2d = count(value)?,
        "total_bandwidth_hz" => params.total_bandwidth_hz = value,
        "noise_density_dbm_hz" => params.noise_density_dbm_hz = value,
        "pathloss_exp" => params.pathloss_exp = value,
        "pathloss_const_db" => params.pathloss_const_db = value,
        "shadow_sigma_cell_db" => params.shadow_sigma_cell_db = value,
        "shadow_sigma_d2d_db" => params.shadow_sigma_d2d_db = value,
        "p_cell_density_dbm_hz" => params.p_cell_density_dbm_hz = value,
        "p_d2d_density_dbm_hz" => params.p_d2d_density_dbm_hz = value,
        "qos_margin_beta" => params.qos_margin_beta = value,
        "utility_floor_mbps" => params.utility_floor_mbps = value,
        "utility_eps_mbps" => params.utility_eps_mbps = value,
        _ => return Err(Error::Config(format!("unknown parameter `{key}`"))),
    }
    Ok(())
}

impl ExperimentConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        match key {
            "drops" => self.drops = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "max_iters" => self.max_iters = parse(key, value)?,
            "tol" => self.tol = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "initial_price" => self.initial_price = parse(key, value)?,
            "eps0" => self.step.eps_t = parse(key, value)?,
            "eps_min" => self.step.eps_min = parse(key, value)?,
            "rho_up" => self.step.rho_up = parse(key, value)?,
            "shrink" => self.step.shrink = parse(key, value)?,
            "alpha" => self.step.alpha_t = parse(key, value)?,
            "out_dir" => self.out_dir = Some(PathBuf::from(value.trim())),
            "preset" => match value.trim() {
                "desk" => self.params = SystemParams::default(),
                "full" => self.params = SystemParams::full_scale(),
                other => return Err(Error::Config(format!("unknown preset `{other}`"))),
            },
            "methods" => {
                self.methods = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "sweep_param" => {
                let values = self.sweep.take().map(|s| s.values).unwrap_or_default();
                self.sweep = Some(SweepSpec {
                    param: value.trim().to_string(),
                    values,
                });
            }
            "sweep_values" => {
                let values = parse_list(key, value)?;
                match &mut self.sweep {
                    Some(s) => s.values = values,
                    None => {
                        self.sweep = Some(SweepSpec {
                            param: String::new(),
                            values,
                        })
                    }
                }
            }
            _ => set_param(&mut self.params, key, parse(key, value)?)?,
        }
        Ok(())
    }

    /// Applies a flat config text: one `key = value` per line, `#` comments.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(&fs::read_to_string(path)?)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.drops == 0 {
            return Err(Error::Config("drops must be at least 1".into()));
        }
        if !self.step.is_valid() {
            return Err(Error::Config(format!("invalid step-size settings: {:?}", self.step)));
        }
        if !(self.initial_price >= 0.0 && self.initial_price.is_finite()) {
            return Err(Error::Config("initial_price must be finite and >= 0".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::Config("sweep values must be non-empty".into()));
            }
            set_param(&mut self.params.clone(), &s.param, s.values[0])?;
        }
        Ok(())
    }

    pub fn dual_options(&self) -> DualOptions {
        DualOptions {
            max_iters: self.max_iters,
            tol: self.tol,
            patience: self.patience,
            initial_price: self.initial_price,
            step: StepState {
                d_best: f64::INFINITY,
                ..self.step
            },
            ..DualOptions::default()
        }
    }

    pub fn centralized_options(&self) -> CentralizedOptions {
        let mut opts = CentralizedOptions::default();
        let dual = self.dual_options();
        opts.dual = DualOptions {
            stop_gap: opts.dual.stop_gap,
            polish_iters: opts.dual.polish_iters,
            ..dual
        };
        opts
    }
}

/// Solver output of one method on one drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MethodReport {
    Dual(SolveReport),
    Oracle(OracleResult),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub objective: f64,
    pub evaluation: Evaluation,
    pub report: MethodReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropOutcome {
    pub drop_index: u64,
    pub seed: u64,
    pub n_d2d: usize,
    pub qos_margin_beta: f64,
    pub outcomes: Vec<MethodOutcome>,
}

impl DropOutcome {
    pub fn get(&self, method: Method) -> Option<&MethodOutcome> {
        self.outcomes.iter().find(|o| o.method == method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedDrop {
    pub drop_index: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub drops: Vec<DropOutcome>,
    pub skipped: Vec<SkippedDrop>,
}

/// Topology, gains and rate table of one drop.
pub struct Instance {
    pub topology: Topology,
    pub gains: LinkGains,
    pub table: RateTable,
}

pub fn build_instance(params: &SystemParams, seed: u64, drop_index: u64) -> Result<Instance> {
    let topology = generate_topology(params, seed, drop_index)?;
    let gains = compute_link_gains(&topology, params, seed)?;
    let alloc = waterfill_bandwidth(&gains, params)?;
    let table = build_rate_table(&alloc, &gains, params)?;
    Ok(Instance {
        topology,
        gains,
        table,
    })
}

pub fn solve_method(
    method: Method,
    table: &RateTable,
    config: &ExperimentConfig,
) -> Result<(f64, crate::dual::Association, MethodReport)> {
    Ok(match method {
        Method::Distributed => {
            let r = solve_distributed(table, &config.dual_options())?;
            (r.best_primal, r.final_x.clone(), MethodReport::Dual(r))
        }
        Method::Centralized => {
            let r = solve_centralized_relaxed(table, &config.centralized_options())?;
            (r.objective, r.final_x.clone(), MethodReport::Oracle(r))
        }
        Method::Oracle => {
            let r = solve_binary_oracle(table)?;
            (r.objective, r.final_x.clone(), MethodReport::Oracle(r))
        }
    })
}

fn run_drop(config: &ExperimentConfig, drop_index: u64) -> Result<DropOutcome> {
    let params = &config.params;
    let inst = build_instance(params, config.seed, drop_index)?;
    let outcomes = config
        .methods
        .iter()
        .map(|&method| {
            let (objective, x, report) = solve_method(method, &inst.table, config)?;
            let evaluation = evaluate_allocation(&x, &inst.table, &inst.gains, params)?;
            Ok(MethodOutcome {
                method,
                objective,
                evaluation,
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DropOutcome {
        drop_index,
        seed: config.seed,
        n_d2d: params.n_d2d,
        qos_margin_beta: params.qos_margin_beta,
        outcomes,
    })
}

/// Runs every requested method on `config.drops` drops. Drops whose
/// water-filling baseline is infeasible are skipped and logged.
pub fn run_drops(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    let results: Vec<(u64, Result<DropOutcome>)> = (0..config.drops as u64)
        .into_par_iter()
        .map(|k| (k, run_drop(config, k)))
        .collect();
    let mut summary = RunSummary {
        drops: Vec::new(),
        skipped: Vec::new(),
    };
    for (k, r) in results {
        match r {
            Ok(d) => summary.drops.push(d),
            Err(Error::InfeasibleBaseline(reason)) => {
                warn!("drop {k} skipped: {reason}");
                summary.skipped.push(SkippedDrop {
                    drop_index: k,
                    reason,
                });
            }
            Err(e) => return Err(e),
        }
    }
    if summary.drops.is_empty() {
        return Err(Error::AllDropsInfeasible(config.drops));
    }
    info!(
        "{} drops solved, {} skipped",
        summary.drops.len(),
        summary.skipped.len()
    );
    Ok(summary)
}

/// Empirical CDF of a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfSeries {
    pub label: String,
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

impl CdfSeries {
    /// `P(X <= v)`.
    pub fn eval(&self, v: f64) -> f64 {
        let k = self.values.partition_point(|&s| s <= v);
        if k == 0 {
            0.0
        } else {
            self.probs[k - 1]
        }
    }
}

pub fn make_cdf(samples: &[f64], label: &str) -> Result<CdfSeries> {
    if samples.is_empty() {
        return Err(Error::Empty(format!("no samples for CDF `{label}`")));
    }
    let mut values = samples.to_vec();
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let probs = (1..=values.len()).map(|k| k as f64 / n).collect();
    Ok(CdfSeries {
        label: label.to_string(),
        values,
        probs,
    })
}

/// Per-user utility samples of a run grouped the way the CDF plots use them.
pub fn utility_cdfs(summary: &RunSummary) -> Result<Vec<CdfSeries>> {
    let mut out = Vec::new();
    let Some(first) = summary.drops.first() else {
        return Err(Error::Empty("no drops to summarize".into()));
    };
    let n = first.n_d2d;
    let clean: Vec<f64> = summary
        .drops
        .iter()
        .filter_map(|d| d.outcomes.first())
        .flat_map(|o| o.evaluation.cellular_clean_utility.iter().copied())
        .collect();
    out.push(make_cdf(&clean, "cellular/no_d2d")?);
    for method in Method::ALL {
        let outcomes: Vec<&MethodOutcome> = summary.drops.iter().filter_map(|d| d.get(method)).collect();
        if outcomes.is_empty() {
            continue;
        }
        let d2d: Vec<f64> = outcomes.iter().flat_map(|o| o.evaluation.d2d_utility.iter().copied()).collect();
        let cell: Vec<f64> = outcomes
            .iter()
            .flat_map(|o| o.evaluation.cellular_utility.iter().copied())
            .collect();
        out.push(make_cdf(&d2d, &format!("d2d/{method}/n{n}"))?);
        out.push(make_cdf(&cell, &format!("cellular/{method}/n{n}"))?);
    }
    Ok(out)
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub mean_sum_utility: f64,
    pub std: f64,
    pub n_drops: usize,
}

/// D2D sum utility of the first requested method, per drop.
pub fn d2d_sums(summary: &RunSummary, method: Method) -> Vec<f64> {
    summary
        .drops
        .iter()
        .filter_map(|d| d.get(method))
        .map(|o| o.evaluation.d2d_sum)
        .collect()
}

/// Runs the same drops (same seed, same drop indices) at every value of the
/// swept parameter.
pub fn sweep(config: &ExperimentConfig) -> Result<(Vec<SweepRow>, Vec<RunSummary>)> {
    config.validate()?;
    let spec = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("no sweep parameter configured".into()))?;
    let method = config.methods[0];
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for &value in &spec.values {
        let mut cfg = config.clone();
        cfg.sweep = None;
        set_param(&mut cfg.params, &spec.param, value)?;
        let summary = run_drops(&cfg)?;
        let sums = d2d_sums(&summary, method);
        let (mean, std) = mean_std(&sums);
        rows.push(SweepRow {
            param: spec.param.clone(),
            value,
            mean_sum_utility: mean,
            std,
            n_drops: sums.len(),
        });
        runs.push(summary);
    }
    Ok((rows, runs))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_cdf_csv(path: &Path, series: &[CdfSeries]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["label", "value", "prob"]).map_err(csv_err)?;
    for s in series {
        for (v, p) in s.values.iter().zip(&s.probs) {
            w.write_record([s.label.as_str(), &v.to_string(), &p.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["param", "value", "mean_sum_utility", "std", "n_drops"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.param.clone(),
            r.value.to_string(),
            r.mean_sum_utility.to_string(),
            r.std.to_string(),
            r.n_drops.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per (drop, method).
pub fn write_drops_csv(path: &Path, summary: &RunSummary) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record([
        "drop",
        "method",
        "d2d_sum_utility",
        "cellular_sum_utility",
        "max_degradation",
        "max_occupancy",
    ])
    .map_err(csv_err)?;
    for d in &summary.drops {
        for o in &d.outcomes {
            let e = &o.evaluation;
            w.write_record([
                d.drop_index.to_string(),
                o.method.to_string(),
                e.d2d_sum.to_string(),
                e.cellular_sum.to_string(),
                e.degradation.iter().copied().fold(0.0, f64::max).to_string(),
                e.max_occupancy.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `report.json` files (one per drop), `drops.csv` and `cdf.csv`.
pub fn write_run(dir: &Path, summary: &RunSummary) -> Result<()> {
    let reports = dir.join("reports");
    fs::create_dir_all(&reports)?;
    for d in &summary.drops {
        let path = reports.join(format!("drop_{:05}.json", d.drop_index));
        fs::write(path, serde_json::to_string_pretty(d)?)?;
    }
    fs::write(dir.join("skipped.json"), serde_json::to_string_pretty(&summary.skipped)?)?;
    write_drops_csv(&dir.join("drops.csv"), summary)?;
    write_cdf_csv(&dir.join("cdf.csv"), &utility_cdfs(summary)?)?;
    Ok(())
}

/// Reloads the per-drop reports written by [`write_run`].
pub fn read_reports(dir: &Path) -> Result<RunSummary> {
    let dir = if dir.join("reports").is_dir() {
        dir.join("reports")
    } else {
        dir.to_path_buf()
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let drops = paths
        .iter()
        .map(|p| Ok(serde_json::from_str(&fs::read_to_string(p)?)?))
        .collect::<Result<Vec<DropOutcome>>>()?;
    Ok(RunSummary {
        drops,
        skipped: Vec::new(),
    })
}
