use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use drrp::bench::{evaluate_plan, lp_gap_study, run_suite, write_csv, LpGapConfig, SuiteConfig};
use drrp::grid::{generate_grid_instance, GridGenParams};
use drrp::ingest::{ingest_trip_history, IngestOptions, StationTable};
use drrp::io::{instance_to_json, read_instance, write_instance};
use drrp::spar::{run, Method, SparConfig};
use drrp::stage1::{read_plan_csv, write_actions_csv, write_routes_csv};
use drrp::vf::{write_theta_csv, StepSizeRule};
use drrp::check_plan;

#[derive(Parser)]
#[command(name = "drrp", version, about = "Plan shared-mobility rebalancing under uncertain demand")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a grid instance with clustered demand.
    Generate {
        /// TOML file with generator parameters.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        stations: Option<usize>,
        #[arg(long)]
        fleet: Option<i64>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Run one planning method on an instance file.
    Run {
        instance: PathBuf,
        #[arg(long, default_value = "M2-I")]
        method: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Iterations; defaults to 50 (200 for M3).
        #[arg(long)]
        iters: Option<usize>,
        /// Step-size rule: harmonic_20_40, capped_harmonic or constant_<value>.
        #[arg(long, default_value = "harmonic_20_40")]
        step: String,
        /// Evaluate the final plan on this many scenarios (0 skips).
        #[arg(long, default_value_t = 100)]
        eval_scenarios: usize,
        /// Seconds per stage-1 solve; the final solve gets twenty times as long.
        #[arg(long)]
        time_limit: Option<f64>,
        /// Branch-and-bound nodes per stage-1 solve; makes limited runs repeatable.
        #[arg(long)]
        node_limit: Option<usize>,
        #[arg(long, default_value = "run_out")]
        out_dir: PathBuf,
    },
    /// Monte-Carlo evaluation of a plan written by `run`.
    Evaluate {
        instance: PathBuf,
        /// Actions CSV (t,i,y_plus,y_minus).
        actions: PathBuf,
        /// Routes CSV (t,i,j,z,b).
        #[arg(long)]
        routes: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        eval_scenarios: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Relaxation gap of the deterministic model on generated grids.
    LpGap {
        #[arg(long, value_delimiter = ',', default_value = "4,9")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1,3")]
        fleets: Vec<i64>,
        #[arg(long, default_value_t = 10)]
        instances: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Seconds per MILP.
        #[arg(long, default_value_t = 600.0)]
        time_limit: f64,
        #[arg(long, default_value = "lp_gap_out")]
        out_dir: PathBuf,
    },
    /// Run an experiment suite described by a TOML file.
    Suite {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        eval_scenarios: Option<usize>,
        /// Seconds per stage-1 solve.
        #[arg(long)]
        time_limit: Option<f64>,
        #[arg(long, default_value = "suite_out")]
        out_dir: PathBuf,
    },
    /// Estimate demand rates from a trip history.
    Ingest {
        /// Trip CSV (start_station,end_station,start_time,duration_seconds).
        trips: PathBuf,
        /// Station CSV (station_id,capacity).
        #[arg(long)]
        stations: PathBuf,
        /// Instance whose demand rates are replaced by the estimate.
        #[arg(long)]
        instance: Option<PathBuf>,
        #[arg(long, default_value_t = 12)]
        horizon: usize,
        #[arg(long, default_value_t = 2)]
        max_duration: usize,
        #[arg(long, default_value_t = 15.0)]
        step_minutes: f64,
        /// Start of step 1 as HH:MM.
        #[arg(long, default_value = "00:00")]
        day_start: String,
        #[arg(long, default_value = "ingest_out")]
        out_dir: PathBuf,
    },
}

enum Failure {
    Invalid(String),
    Partial(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Invalid(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Partial(msg)) => {
            eprintln!("warning: {msg}");
            ExitCode::from(2)
        }
    }
}

fn write_file(dir: &Path, name: &str, body: impl AsRef<[u8]>) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir)?;
    let p = dir.join(name);
    fs::write(&p, body)?;
    Ok(p)
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Generate { config, seed, stations, fleet, out_dir } => {
            let mut params: GridGenParams = match config {
                Some(p) => toml::from_str(&fs::read_to_string(&p)?)?,
                None => GridGenParams::default(),
            };
            if let Some(s) = seed {
                params.rng_seed = s;
            }
            if let Some(n) = stations {
                params.grid_side = (n as f64).sqrt().round() as usize;
                if params.grid_side * params.grid_side != n {
                    return Err(Failure::Invalid(format!("{n} stations do not form a square grid")));
                }
            }
            if let Some(f) = fleet {
                params.rv_count = f;
            }
            let (inst, model) = generate_grid_instance(&params)?;
            let name = format!("grid_{}_{}_{}.json", params.stations(), params.rv_count, params.rng_seed);
            fs::create_dir_all(&out_dir)?;
            let path = out_dir.join(name);
            write_instance(&path, &inst, &model)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Run { instance, method, seed, iters, step, eval_scenarios, time_limit, node_limit, out_dir } => {
            let (inst, model) = read_instance(&instance)?;
            let method: Method = method.parse().map_err(Failure::Invalid)?;
            let mut cfg = SparConfig::new(method, seed);
            if let Some(n) = iters {
                if n == 0 {
                    return Err(Failure::Invalid("--iters must be positive".into()));
                }
                cfg.n_max = n;
            }
            cfg.step = StepSizeRule::parse(&step).ok_or_else(|| Failure::Invalid(format!("unknown step rule {step}")))?;
            if let Some(s) = time_limit {
                if !(s > 0.0) {
                    return Err(Failure::Invalid("--time-limit must be positive".into()));
                }
                cfg.stage1_time_limit = Some(Duration::from_secs_f64(s));
                cfg.final_time_limit = Some(Duration::from_secs_f64(20.0 * s));
            }
            cfg.node_limit = node_limit;
            cfg.keep_theta_history = true;
            let report = run(&inst, &model, &cfg)?;
            let mut buf = Vec::new();
            write_routes_csv(&mut buf, &inst, &report.plan)?;
            write_file(&out_dir, "plan_routes.csv", &buf)?;
            buf.clear();
            write_actions_csv(&mut buf, &inst, &report.plan)?;
            write_file(&out_dir, "plan_actions.csv", &buf)?;
            buf.clear();
            report.write_iterations_csv(&mut buf)?;
            write_file(&out_dir, "iterations.csv", &buf)?;
            buf.clear();
            write_theta_csv(&mut buf, &report.theta_history, &inst.node_labels)?;
            write_file(&out_dir, "theta.csv", &buf)?;
            let mut manifest = serde_json::json!({
                "instance": instance.display().to_string(),
                "method": method.name(),
                "seed": seed,
                "iterations": report.iterations.len(),
                "step": cfg.step.name(),
                "update": format!("{:?}", cfg.update),
                "stage1_time_limit": cfg.stage1_time_limit.map(|d| d.as_secs_f64()),
                "final_time_limit": cfg.final_time_limit.map(|d| d.as_secs_f64()),
                "node_limit": cfg.node_limit,
                "operating_cost": report.plan.operating_cost(&inst),
                "seconds": report.seconds,
                "warnings": report.warnings,
            });
            if eval_scenarios > 0 {
                let ev = evaluate_plan(&inst, &model, &report.plan, eval_scenarios, seed);
                manifest["evaluation"] = serde_json::to_value(&ev)?;
                println!("{method}: service rate {:.2}% ± {:.2}, objective {:.4}", 100.0 * ev.rate_mean, 100.0 * ev.rate_sd, ev.objective_mean);
            }
            write_file(&out_dir, "manifest.json", serde_json::to_string_pretty(&manifest)? + "\n")?;
            if report.warnings.is_empty() {
                Ok(())
            } else {
                Err(Failure::Partial(report.warnings.join("; ")))
            }
        }
        Command::Evaluate { instance, actions, routes, eval_scenarios, seed } => {
            let (inst, model) = read_instance(&instance)?;
            let routes = routes.map(fs::read_to_string).transpose()?;
            let plan = read_plan_csv(&inst, routes.as_deref(), &fs::read_to_string(&actions)?).map_err(Failure::Invalid)?;
            let bad = check_plan(&inst, &plan, true, 1e-6);
            if !bad.is_empty() {
                return Err(Failure::Invalid(bad.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")));
            }
            let ev = evaluate_plan(&inst, &model, &plan, eval_scenarios, seed);
            println!("{}", serde_json::to_string_pretty(&ev)?);
            if ev.failures > 0 {
                return Err(Failure::Partial(format!("{} scenarios failed", ev.failures)));
            }
            Ok(())
        }
        Command::LpGap { sizes, fleets, instances, seed, time_limit, out_dir } => {
            if !(time_limit > 0.0) {
                return Err(Failure::Invalid("--time-limit must be positive".into()));
            }
            for &s in &sizes {
                let side = (s as f64).sqrt().round() as usize;
                if side < 2 || side * side != s {
                    return Err(Failure::Invalid(format!("{s} stations do not form a square grid")));
                }
            }
            let cfg = LpGapConfig { sizes, fleets, instances, seed, time_limit: Some(Duration::from_secs_f64(time_limit)), ..LpGapConfig::default() };
            let (rows, per_instance, errors) = lp_gap_study(&cfg);
            let mut buf = Vec::new();
            write_csv(&mut buf, &rows)?;
            write_file(&out_dir, "lp_gap.csv", &buf)?;
            print!("{}", String::from_utf8_lossy(&buf));
            buf.clear();
            write_csv(&mut buf, &per_instance)?;
            write_file(&out_dir, "lp_gap_instances.csv", &buf)?;
            let flagged = per_instance.iter().filter(|r| r.hit_limit).count();
            if !errors.is_empty() || flagged > 0 {
                return Err(Failure::Partial(format!("{} failed instances, {flagged} stopped at the time limit", errors.len())));
            }
            Ok(())
        }
        Command::Suite { config, seed, iters, eval_scenarios, time_limit, out_dir } => {
            let mut cfg = SuiteConfig::from_toml(&fs::read_to_string(&config)?).map_err(Failure::Invalid)?;
            if let Some(s) = seed {
                cfg.grid.seed = s;
            }
            if let Some(n) = iters {
                cfg.methods.iterations = n;
                cfg.methods.m3_iterations = n;
            }
            if let Some(n) = eval_scenarios {
                cfg.eval.scenarios = n;
            }
            if let Some(s) = time_limit {
                cfg.limits.stage1_seconds = s;
            }
            cfg.check().map_err(Failure::Invalid)?;
            write_file(&out_dir, "manifest.toml", toml::to_string_pretty(&cfg)?)?;
            let outcome = run_suite(&cfg, &out_dir)?;
            for f in &outcome.files {
                println!("{}", f.display());
            }
            if outcome.failures.is_empty() {
                Ok(())
            } else {
                Err(Failure::Partial(format!("{} cells failed; see failures.txt", outcome.failures.len())))
            }
        }
        Command::Ingest { trips, stations, instance, horizon, max_duration, step_minutes, day_start, out_dir } => {
            let table = StationTable::from_csv(fs::File::open(&stations)?)?;
            let (h, m) = day_start.split_once(':').ok_or_else(|| Failure::Invalid(format!("bad --day-start {day_start}")))?;
            let (h, m): (f64, f64) = (h.parse()?, m.parse()?);
            let mut opts = IngestOptions { horizon, max_duration, step_minutes, day_start_minutes: 60.0 * h + m, ..IngestOptions::default() };
            let base = instance.as_deref().map(read_instance).transpose()?;
            if let Some((_, model)) = &base {
                opts.value_low = model.value_low;
                opts.value_high = model.value_high;
            }
            let (model, report) = ingest_trip_history(fs::File::open(&trips)?, &table, &opts)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["from", "to", "t", "k", "rate"])?;
            for (d, r) in &model.rates {
                w.write_record([table.ids[d.i].clone(), table.ids[d.j].clone(), d.t.to_string(), d.k.to_string(), r.to_string()])?;
            }
            write_file(&out_dir, "rates.csv", w.into_inner().map_err(|e| e.to_string())?)?;
            println!(
                "{} rows, {} used, {} unknown station, {} malformed, {} outside the horizon, {} days",
                report.rows, report.used, report.unknown_station, report.malformed, report.outside_horizon, report.days
            );
            if let Some((inst, _)) = base {
                let mut remapped = model.clone();
                remapped.rates.clear();
                for (d, r) in &model.rates {
                    let find = |id: &str| inst.node_labels.iter().position(|l| l == id);
                    match (find(&table.ids[d.i]), find(&table.ids[d.j])) {
                        (Some(i), Some(j)) if inst.is_station(i) && inst.is_station(j) && d.k <= inst.max_duration && d.t <= inst.horizon => {
                            remapped.rates.insert(drrp::DemandTuple::new(i, j, d.t, d.k), *r);
                        }
                        _ => return Err(Failure::Invalid(format!("station pair {} -> {} is not in the instance", table.ids[d.i], table.ids[d.j]))),
                    }
                }
                write_file(&out_dir, "instance.json", instance_to_json(&inst, &remapped))?;
            }
            if report.malformed > 0 {
                return Err(Failure::Partial(format!("{} malformed rows skipped", report.malformed)));
            }
            Ok(())
        }
    }
}
