//! Monte-Carlo evaluation, relaxation-gap studies and experiment suites.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::grid::{generate_grid_instance, GridGenParams};
use crate::model::{NetworkInstance, RebalancePlan};
use crate::scenario::{expected_scenario, sample_stream, DemandModel, Stream};
use crate::spar::{run, IterationRecord, Method, SparConfig, UpdateRule};
use crate::stage1::solve_deterministic_drrp;
use crate::stage2::{service_rate, solve_stage2, solve_stage2_any};
use crate::vf::{write_theta_csv, StepSizeRule};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvaluationResult {
    pub scenarios: usize,
    pub cost_mean: f64,
    pub cost_sd: f64,
    pub rate_mean: f64,
    pub rate_sd: f64,
    /// Operating cost of the plan plus the evaluated recourse cost.
    pub objective_mean: f64,
    pub objective_sd: f64,
    pub operating_cost: f64,
    #[serde(skip)]
    pub costs: Vec<f64>,
    #[serde(skip)]
    pub rates: Vec<f64>,
    /// Scenarios whose recourse solve failed (left out of the statistics).
    pub failures: usize,
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Evaluates a plan on `n_eval` scenarios from the evaluation stream.
/// Fractional actions go through the recourse LP.
pub fn evaluate_plan(inst: &NetworkInstance, model: &DemandModel, plan: &RebalancePlan, n_eval: usize, seed: u64) -> EvaluationResult {
    let mut costs = Vec::with_capacity(n_eval);
    let mut rates = Vec::with_capacity(n_eval);
    let mut failures = 0;
    for s in 0..n_eval {
        let scen = sample_stream(model, seed, Stream::Eval, s as u64);
        match solve_stage2_any(inst, &scen, plan) {
            Ok(out) => {
                costs.push(out.cost);
                rates.push(out.service_rate);
            }
            Err(_) => failures += 1,
        }
    }
    let operating_cost = plan.operating_cost(inst);
    let (cost_mean, cost_sd) = mean_sd(&costs);
    let (rate_mean, rate_sd) = if rates.is_empty() { (1.0, 0.0) } else { mean_sd(&rates) };
    let objectives: Vec<f64> = costs.iter().map(|c| c + operating_cost).collect();
    let (objective_mean, objective_sd) = if objectives.is_empty() { (operating_cost, 0.0) } else { mean_sd(&objectives) };
    EvaluationResult {
        scenarios: n_eval,
        cost_mean,
        cost_sd,
        rate_mean,
        rate_sd,
        objective_mean,
        objective_sd,
        operating_cost,
        costs,
        rates,
        failures,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LpGapInstance {
    pub stations: usize,
    pub fleet: i64,
    pub instance_seed: u64,
    pub mip_objective: f64,
    pub lp_objective: f64,
    /// `(MIP - LP) / MIP`, 0 when the MIP objective is 0.
    pub gap: f64,
    pub mip_seconds: f64,
    pub lp_seconds: f64,
    pub expected_demand: i64,
    pub na_rate: f64,
    pub optimized_rate: f64,
    pub hit_limit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LpGapRow {
    pub stations: usize,
    pub fleet: i64,
    pub instances: usize,
    pub gap_mean_pct: f64,
    pub gap_sd_pct: f64,
    pub mip_seconds_mean: f64,
    pub lp_seconds_mean: f64,
    /// Total over the horizon.
    pub expected_demand_mean: f64,
    pub na_rate_mean_pct: f64,
    pub optimized_rate_mean_pct: f64,
    pub flagged: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpGapConfig {
    pub sizes: Vec<usize>,
    pub fleets: Vec<i64>,
    pub instances: usize,
    pub seed: u64,
    pub rel_gap: f64,
    pub time_limit: Option<Duration>,
    pub params: GridGenParams,
}

impl Default for LpGapConfig {
    fn default() -> Self {
        LpGapConfig {
            sizes: vec![4, 9],
            fleets: vec![1, 3],
            instances: 10,
            seed: 1,
            rel_gap: 1e-3,
            time_limit: Some(Duration::from_secs(600)),
            params: GridGenParams::default(),
        }
    }
}

/// Seed of instance `k` in a study or suite with base seed `seed`.
pub fn instance_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(1000).wrapping_add(k as u64)
}

fn grid_params(base: &GridGenParams, stations: usize, fleet: i64, seed: u64) -> GridGenParams {
    GridGenParams { grid_side: (stations as f64).sqrt().round() as usize, rv_count: fleet, rng_seed: seed, ..base.clone() }
}

/// One instance of the relaxation-gap protocol: every unserved journey
/// costs exactly 1 and demand is fixed at its expectation.
pub fn lp_gap_instance(params: &GridGenParams, rel_gap: f64, time_limit: Option<Duration>) -> Result<LpGapInstance, String> {
    let unit = GridGenParams { value_low: 1.0, value_high: 1.0, ..params.clone() };
    let (inst, model) = generate_grid_instance(&unit).map_err(|e| e.to_string())?;
    let scen = expected_scenario(&model);
    let na = solve_stage2(&inst, &scen, &RebalancePlan::empty(&inst)).map_err(|e| e.to_string())?;
    let r = solve_deterministic_drrp(&inst, &scen, rel_gap, time_limit).map_err(|e| e.to_string())?;
    let total = scen.total_demand();
    let gap = if r.objective.abs() <= 1e-9 { 0.0 } else { ((r.objective - r.lp_objective) / r.objective).max(0.0) };
    Ok(LpGapInstance {
        stations: inst.sv_nodes.len(),
        fleet: inst.fleet_size,
        instance_seed: params.rng_seed,
        mip_objective: r.objective,
        lp_objective: r.lp_objective,
        gap,
        mip_seconds: r.mip_seconds,
        lp_seconds: r.lp_seconds,
        expected_demand: total,
        na_rate: service_rate(&scen, &na),
        optimized_rate: if total == 0 { 1.0 } else { r.served / total as f64 },
        hit_limit: r.hit_limit,
    })
}

/// Relaxation gaps of the monolithic model per grid size and fleet.
pub fn lp_gap_study(cfg: &LpGapConfig) -> (Vec<LpGapRow>, Vec<LpGapInstance>, Vec<String>) {
    let mut rows = Vec::new();
    let mut all = Vec::new();
    let mut errors = Vec::new();
    for &size in &cfg.sizes {
        for &fleet in &cfg.fleets {
            let mut cell = Vec::new();
            for k in 0..cfg.instances {
                let p = grid_params(&cfg.params, size, fleet, instance_seed(cfg.seed, k));
                match lp_gap_instance(&p, cfg.rel_gap, cfg.time_limit) {
                    Ok(r) => cell.push(r),
                    Err(e) => errors.push(format!("{size} stations, fleet {fleet}, instance {k}: {e}")),
                }
            }
            let col = |f: &dyn Fn(&LpGapInstance) -> f64| cell.iter().map(f).collect::<Vec<f64>>();
            let (gm, gs) = mean_sd(&col(&|r| 100.0 * r.gap));
            rows.push(LpGapRow {
                stations: size,
                fleet,
                instances: cell.len(),
                gap_mean_pct: gm,
                gap_sd_pct: gs,
                mip_seconds_mean: mean_sd(&col(&|r| r.mip_seconds)).0,
                lp_seconds_mean: mean_sd(&col(&|r| r.lp_seconds)).0,
                expected_demand_mean: mean_sd(&col(&|r| r.expected_demand as f64)).0,
                na_rate_mean_pct: 100.0 * mean_sd(&col(&|r| r.na_rate)).0,
                optimized_rate_mean_pct: 100.0 * mean_sd(&col(&|r| r.optimized_rate)).0,
                flagged: cell.iter().filter(|r| r.hit_limit).count(),
            });
            all.extend(cell);
        }
    }
    (rows, all, errors)
}

pub fn write_csv<T: Serialize, W: std::io::Write>(out: W, rows: &[T]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub sizes: Vec<usize>,
    pub fleets: Vec<i64>,
    pub instances: usize,
    pub seed: u64,
    /// Overrides for the generator.
    pub params: GridGenParams,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { sizes: vec![9], fleets: vec![1], instances: 10, seed: 1, params: GridGenParams::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodsSection {
    pub list: Vec<Method>,
    /// Iterations of the learning methods other than M3.
    pub iterations: usize,
    pub m3_iterations: usize,
    pub step: String,
    pub update: UpdateRule,
    pub theta_snapshots: bool,
}

impl Default for MethodsSection {
    fn default() -> Self {
        MethodsSection {
            list: vec![Method::Na, Method::M2I],
            iterations: 50,
            m3_iterations: 200,
            step: "harmonic_20_40".into(),
            update: UpdateRule::Marginal,
            theta_snapshots: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub scenarios: usize,
    pub seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { scenarios: 100, seed: 7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsSection {
    pub rel_gap: f64,
    pub stage1_seconds: f64,
    pub final_seconds: f64,
    /// Branch-and-bound nodes per stage-1 solve; set it for reruns that must match.
    pub node_limit: Option<usize>,
    pub workers: usize,
}

impl Default for LimitsSection {
    fn default() -> Self {
        LimitsSection { rel_gap: 5e-3, stage1_seconds: 60.0, final_seconds: 1200.0, node_limit: None, workers: 1 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub grid: GridSection,
    pub methods: MethodsSection,
    pub eval: EvalSection,
    pub limits: LimitsSection,
}

impl SuiteConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: SuiteConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), String> {
        if self.grid.sizes.is_empty() || self.grid.fleets.is_empty() || self.methods.list.is_empty() {
            return Err("sizes, fleets and methods must be non-empty".into());
        }
        for &s in &self.grid.sizes {
            let side = (s as f64).sqrt().round() as usize;
            if side * side != s || side < 2 {
                return Err(format!("grid size {s} is not a square of at least 4"));
            }
        }
        if self.methods.iterations == 0 || self.methods.m3_iterations == 0 {
            return Err("iteration counts must be positive".into());
        }
        self.step_rule()?;
        if !(self.limits.rel_gap >= 0.0) || !(self.limits.stage1_seconds > 0.0) || !(self.limits.final_seconds > 0.0) || self.limits.node_limit == Some(0) {
            return Err("limits must be positive".into());
        }
        Ok(())
    }

    pub fn step_rule(&self) -> Result<StepSizeRule, String> {
        StepSizeRule::parse(&self.methods.step).ok_or_else(|| format!("unknown step rule {}", self.methods.step))
    }

    pub fn spar_config(&self, method: Method, seed: u64) -> SparConfig {
        let mut c = SparConfig::new(method, seed);
        c.n_max = if method == Method::M3 { self.methods.m3_iterations } else { self.methods.iterations };
        c.step = self.step_rule().unwrap_or(StepSizeRule::Harmonic2040);
        c.update = self.methods.update;
        c.rel_gap = self.limits.rel_gap;
        c.stage1_time_limit = Some(Duration::from_secs_f64(self.limits.stage1_seconds));
        c.final_time_limit = Some(Duration::from_secs_f64(self.limits.final_seconds));
        c.node_limit = self.limits.node_limit;
        c.keep_theta_history = self.methods.theta_snapshots;
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRow {
    pub instance: usize,
    pub stations: usize,
    pub fleet: i64,
    pub instance_seed: u64,
    pub method: String,
    pub rate_mean: f64,
    pub rate_sd: f64,
    pub cost_mean: f64,
    pub cost_sd: f64,
    pub objective_mean: f64,
    pub objective_sd: f64,
    pub operating_cost: f64,
    /// Percentage points over the no-action baseline on the same scenarios.
    pub delta_rate_pp: f64,
    pub delta_objective: f64,
    pub seconds: f64,
    pub iterations: usize,
    pub warnings: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaRow {
    pub stations: usize,
    pub fleet: i64,
    pub method: String,
    pub instances: usize,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SuiteOutcome {
    pub runs: Vec<RunRow>,
    pub failures: Vec<String>,
    pub files: Vec<PathBuf>,
}

struct Cell {
    instance: usize,
    stations: usize,
    fleet: i64,
    seed: u64,
}

struct CellResult {
    rows: Vec<RunRow>,
    iterations: Vec<(String, Vec<IterationRecord>)>,
    thetas: Vec<(String, String)>,
    failures: Vec<String>,
}

fn run_cell(cfg: &SuiteConfig, cell: &Cell) -> CellResult {
    let mut out = CellResult { rows: Vec::new(), iterations: Vec::new(), thetas: Vec::new(), failures: Vec::new() };
    let params = grid_params(&cfg.grid.params, cell.stations, cell.fleet, cell.seed);
    let (inst, model) = match generate_grid_instance(&params) {
        Ok(v) => v,
        Err(e) => {
            out.failures.push(format!("instance {} ({} stations, fleet {}): {e}", cell.instance, cell.stations, cell.fleet));
            return out;
        }
    };
    let eval_seed = cfg.eval.seed ^ cell.seed;
    let baseline = evaluate_plan(&inst, &model, &RebalancePlan::empty(&inst), cfg.eval.scenarios, eval_seed);
    let tag = format!("{}_{}_{}", cell.stations, cell.fleet, cell.instance);
    for &method in &cfg.methods.list {
        let t = Instant::now();
        let report = match run(&inst, &model, &cfg.spar_config(method, cell.seed)) {
            Ok(r) => r,
            Err(e) => {
                out.failures.push(format!("instance {tag} method {method}: {e}"));
                continue;
            }
        };
        let seconds = t.elapsed().as_secs_f64();
        let ev = if method == Method::Na { baseline.clone() } else { evaluate_plan(&inst, &model, &report.plan, cfg.eval.scenarios, eval_seed) };
        let paired: Vec<f64> = ev.costs.iter().zip(&baseline.costs).map(|(a, b)| a + ev.operating_cost - b - baseline.operating_cost).collect();
        out.rows.push(RunRow {
            instance: cell.instance,
            stations: cell.stations,
            fleet: cell.fleet,
            instance_seed: cell.seed,
            method: method.name().into(),
            rate_mean: ev.rate_mean,
            rate_sd: ev.rate_sd,
            cost_mean: ev.cost_mean,
            cost_sd: ev.cost_sd,
            objective_mean: ev.objective_mean,
            objective_sd: ev.objective_sd,
            operating_cost: ev.operating_cost,
            delta_rate_pp: 100.0 * (ev.rate_mean - baseline.rate_mean),
            delta_objective: mean_sd(&paired).0,
            seconds,
            iterations: report.iterations.len(),
            warnings: report.warnings.len(),
        });
        if !report.iterations.is_empty() {
            out.iterations.push((method.name().into(), report.iterations.clone()));
        }
        if !report.theta_history.is_empty() {
            let mut buf = Vec::new();
            if write_theta_csv(&mut buf, &report.theta_history, &inst.node_labels).is_ok() {
                out.thetas.push((format!("theta_{tag}_{method}.csv"), String::from_utf8_lossy(&buf).into_owned()));
            }
        }
    }
    out
}

fn delta_table(runs: &[RunRow], f: impl Fn(&RunRow) -> f64) -> Vec<DeltaRow> {
    let mut groups: BTreeMap<(usize, i64, String), Vec<f64>> = BTreeMap::new();
    for r in runs.iter().filter(|r| r.method != "NA") {
        groups.entry((r.stations, r.fleet, r.method.clone())).or_default().push(f(r));
    }
    groups
        .into_iter()
        .map(|((stations, fleet, method), v)| {
            let (mean, sd) = mean_sd(&v);
            DeltaRow { stations, fleet, method, instances: v.len(), mean, sd }
        })
        .collect()
}

fn timing_table(runs: &[RunRow]) -> Vec<DeltaRow> {
    let mut groups: BTreeMap<(usize, i64, String), Vec<f64>> = BTreeMap::new();
    for r in runs {
        groups.entry((r.stations, r.fleet, r.method.clone())).or_default().push(r.seconds);
    }
    groups
        .into_iter()
        .map(|((stations, fleet, method), v)| {
            let (mean, sd) = mean_sd(&v);
            DeltaRow { stations, fleet, method, instances: v.len(), mean, sd }
        })
        .collect()
}

/// Runs every (instance, method) cell and writes the result tables into
/// `out_dir`. Cells that fail are reported and skipped.
pub fn run_suite(cfg: &SuiteConfig, out_dir: &Path) -> std::io::Result<SuiteOutcome> {
    std::fs::create_dir_all(out_dir)?;
    let mut cells = Vec::new();
    for &stations in &cfg.grid.sizes {
        for &fleet in &cfg.grid.fleets {
            for k in 0..cfg.grid.instances {
                cells.push(Cell { instance: k, stations, fleet, seed: instance_seed(cfg.grid.seed, k) });
            }
        }
    }
    let results: Mutex<Vec<Option<CellResult>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let workers = cfg.limits.workers.clamp(1, cells.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= cells.len() {
                    break;
                }
                let r = run_cell(cfg, &cells[k]);
                results.lock().expect("results lock")[k] = Some(r);
            });
        }
    });
    let results: Vec<CellResult> = results.into_inner().expect("results lock").into_iter().flatten().collect();

    let mut outcome = SuiteOutcome::default();
    let mut iter_rows = String::from("stations,fleet,instance,method,iteration,alpha,stage1_objective,operating_cost,stage2_cost,service_rate,stage1_seconds,stage2_seconds,integral,flagged\n");
    let mut curves: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for (cell, res) in cells.iter().zip(&results) {
        outcome.runs.extend(res.rows.iter().cloned());
        outcome.failures.extend(res.failures.iter().cloned());
        for (method, its) in &res.iterations {
            for r in its {
                let _ = writeln!(
                    iter_rows,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    cell.stations,
                    cell.fleet,
                    cell.instance,
                    method,
                    r.iteration,
                    r.alpha,
                    r.stage1_objective,
                    r.operating_cost,
                    r.stage2_cost,
                    r.service_rate,
                    r.stage1_seconds,
                    r.stage2_seconds,
                    r.integral,
                    r.flagged
                );
                if r.service_rate.is_finite() {
                    curves.entry(format!("{} ({}/{})", method, cell.stations, cell.fleet)).or_default().entry(r.iteration).or_default().push(r.service_rate);
                }
            }
        }
        for (name, body) in &res.thetas {
            let p = out_dir.join(name);
            std::fs::write(&p, body)?;
            outcome.files.push(p);
        }
    }
    let mut put = |name: &str, body: Vec<u8>| -> std::io::Result<()> {
        let p = out_dir.join(name);
        std::fs::write(&p, body)?;
        outcome.files.push(p);
        Ok(())
    };
    let csv_bytes = |f: &dyn Fn(&mut Vec<u8>) -> csv::Result<()>| -> std::io::Result<Vec<u8>> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(std::io::Error::other)?;
        Ok(buf)
    };
    let runs = outcome.runs.clone();
    put("runs.csv", csv_bytes(&|b| write_runs_csv(b, &runs))?)?;
    put("service_rate_deltas.csv", csv_bytes(&|b| write_delta_csv(b, &delta_table(&runs, |r| r.delta_rate_pp)))?)?;
    put("objective_deltas.csv", csv_bytes(&|b| write_delta_csv(b, &delta_table(&runs, |r| r.delta_objective)))?)?;
    put("timings.csv", csv_bytes(&|b| write_delta_csv(b, &timing_table(&runs)))?)?;
    put("iterations.csv", iter_rows.into_bytes())?;
    let series: Vec<(String, Vec<(f64, f64)>)> =
        curves.into_iter().map(|(k, pts)| (k, pts.into_iter().map(|(n, v)| (n as f64, 100.0 * mean_sd(&v).0)).collect())).collect();
    put("iterations.svg", line_plot_svg("Sampled service rate per iteration", "iteration", "service rate (%)", &series).into_bytes())?;
    let failures = outcome.failures.join("\n");
    put("failures.txt", failures.into_bytes())?;
    Ok(outcome)
}

pub const RUNS_CSV_HEADER: &str = "instance,stations,fleet,instance_seed,method,rate_mean,rate_sd,cost_mean,cost_sd,objective_mean,objective_sd,operating_cost,delta_rate_pp,delta_objective,seconds,iterations,warnings";
pub const DELTA_CSV_HEADER: &str = "stations,fleet,method,instances,mean,sd";

pub fn write_runs_csv<W: std::io::Write>(mut out: W, rows: &[RunRow]) -> csv::Result<()> {
    if rows.is_empty() {
        writeln!(out, "{RUNS_CSV_HEADER}")?;
        return Ok(());
    }
    write_csv(out, rows)
}

pub fn write_delta_csv<W: std::io::Write>(mut out: W, rows: &[DeltaRow]) -> csv::Result<()> {
    if rows.is_empty() {
        writeln!(out, "{DELTA_CSV_HEADER}")?;
        return Ok(());
    }
    write_csv(out, rows)
}

const PALETTE: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];

/// A plain SVG line chart.
pub fn line_plot_svg(title: &str, xlabel: &str, ylabel: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 60.0, 170.0, 40.0, 50.0);
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let sy = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, (w - right + left) / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{left},{top} V{} H{}" fill="none" stroke="black"/>"#,
        h - bottom,
        w - right
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, sx(fx), h - bottom + 16.0, fmt_tick(fx));
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, sy(fy) + 4.0, fmt_tick(fy));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (w - right + left) / 2.0, h - 12.0, escape(xlabel));
    let _ = writeln!(s, r#"<text transform="translate(16,{}) rotate(-90)" text-anchor="middle">{}</text>"#, (h - bottom + top) / 2.0, escape(ylabel));
    for (k, (name, p)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let d: Vec<String> = p.iter().enumerate().map(|(j, &(x, y))| format!("{}{:.1},{:.1}", if j == 0 { "M" } else { "L" }, sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, d.join(" "));
        let ly = top + 16.0 * k as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, w - right + 10.0, w - right + 30.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, w - right + 34.0, ly + 4.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
