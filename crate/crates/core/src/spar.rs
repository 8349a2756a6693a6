//! Stochastic approximation of the recourse value function and the
//! planning methods built on it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use lpkit::MipStatus;
use serde::{Deserialize, Serialize};

use crate::model::{NetworkInstance, RebalancePlan};
use crate::scenario::{expected_scenario, sample_stream, stream_rng, DemandModel, Stream};
use crate::stage1::{random_plan_with, solve_deterministic_drrp, solve_stage1, Stage1Mode, Stage1Options};
use crate::stage2::solve_stage2_any;
use crate::vf::{gradient_vector, Gradient, StepSizeRule, ValueFunctionApprox};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "NA")]
    Na,
    #[serde(rename = "M1")]
    M1,
    #[serde(rename = "M2-R")]
    M2R,
    #[serde(rename = "M2-HI")]
    M2HI,
    #[serde(rename = "M2-I")]
    M2I,
    #[serde(rename = "M3")]
    M3,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Na, Method::M1, Method::M2R, Method::M2HI, Method::M2I, Method::M3];

    pub fn name(self) -> &'static str {
        match self {
            Method::Na => "NA",
            Method::M1 => "M1",
            Method::M2R => "M2-R",
            Method::M2HI => "M2-HI",
            Method::M2I => "M2-I",
            Method::M3 => "M3",
        }
    }

    /// Stage-1 mode of the iterates, `None` when no stage-1 model is solved per iteration.
    pub fn iterate_mode(self) -> Option<Stage1Mode> {
        match self {
            Method::M2R => Some(Stage1Mode::Relaxed),
            Method::M2HI => Some(Stage1Mode::HalfInteger),
            Method::M2I => Some(Stage1Mode::Integer),
            _ => None,
        }
    }

    pub fn learns(self) -> bool {
        matches!(self, Method::M2R | Method::M2HI | Method::M2I | Method::M3)
    }

    pub fn default_iterations(self) -> usize {
        match self {
            Method::M3 => 200,
            Method::Na | Method::M1 => 0,
            _ => 50,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let up = s.trim().to_ascii_uppercase().replace('_', "-");
        Method::ALL.into_iter().find(|m| m.name() == up || m.name().replace('-', "") == up).ok_or_else(|| format!("unknown method {s}"))
    }
}

/// How a sampled recourse solve turns into a slope update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// Smooth the slopes on both sides of the plan's net action towards the
    /// observed marginal recourse cost of one more unload.
    Marginal,
    /// `θ - α (λ⁺ - λ⁻)` on the segment at the plan's net action.
    BoundDual,
}

impl UpdateRule {
    pub fn parse(s: &str) -> Option<UpdateRule> {
        match s {
            "marginal" => Some(UpdateRule::Marginal),
            "bound_dual" => Some(UpdateRule::BoundDual),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparConfig {
    pub method: Method,
    pub n_max: usize,
    pub step: StepSizeRule,
    pub update: UpdateRule,
    pub seed: u64,
    pub rel_gap: f64,
    /// Per-iteration stage-1 limit.
    pub stage1_time_limit: Option<Duration>,
    pub final_time_limit: Option<Duration>,
    /// Branch-and-bound node cap for every stage-1 solve. Unlike the time
    /// limits it stops at the same point on every run.
    pub node_limit: Option<usize>,
    /// `None` means ten times the largest journey value.
    pub theta_max: Option<f64>,
    /// Stop before iteration `n + 1` once this much wall time has passed.
    pub wall_limit: Option<Duration>,
    pub keep_theta_history: bool,
}

impl SparConfig {
    pub fn new(method: Method, seed: u64) -> Self {
        SparConfig {
            method,
            n_max: method.default_iterations().max(1),
            step: StepSizeRule::Harmonic2040,
            update: UpdateRule::Marginal,
            seed,
            rel_gap: 5e-3,
            stage1_time_limit: Some(Duration::from_secs(60)),
            final_time_limit: Some(Duration::from_secs(1200)),
            node_limit: None,
            theta_max: None,
            wall_limit: None,
            keep_theta_history: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub alpha: f64,
    /// Stage-1 objective under the current θ (operating cost plus `V̄`).
    pub stage1_objective: f64,
    pub operating_cost: f64,
    /// Recourse cost on this iteration's sampled scenario.
    pub stage2_cost: f64,
    pub service_rate: f64,
    pub stage1_seconds: f64,
    pub stage2_seconds: f64,
    pub integral: bool,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FinalSolve {
    pub objective: f64,
    pub bound: f64,
    pub status: MipStatus,
    pub nodes: usize,
    pub seconds: f64,
    pub hit_limit: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparRunReport {
    pub method: Method,
    pub plan: RebalancePlan,
    pub iterations: Vec<IterationRecord>,
    /// θ after each iteration when requested.
    pub theta_history: Vec<ValueFunctionApprox>,
    pub vfa: ValueFunctionApprox,
    /// The plan of the last iteration (before any final solve).
    pub last_iterate: Option<RebalancePlan>,
    pub final_solve: Option<FinalSolve>,
    /// Problems that did not abort the run.
    pub warnings: Vec<String>,
    pub seconds: f64,
}

impl SparRunReport {
    pub fn write_iterations_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.iterations {
            w.serialize(r)?;
        }
        if self.iterations.is_empty() {
            w.write_record([
                "iteration",
                "alpha",
                "stage1_objective",
                "operating_cost",
                "stage2_cost",
                "service_rate",
                "stage1_seconds",
                "stage2_seconds",
                "integral",
                "flagged",
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SparError {
    #[error("invalid instance: {0}")]
    Instance(String),
    #[error("invalid demand model: {0}")]
    Model(String),
    #[error("n_max must be at least 1")]
    NoIterations,
}

pub fn default_theta_max(model: &DemandModel) -> f64 {
    10.0 * model.value_high.to_f64().max(1e-3)
}

/// Update direction for the configured rule; `θ - α ζ` is the step.
pub fn update_direction(rule: UpdateRule, vfa: &ValueFunctionApprox, plan: &RebalancePlan, duals: &BTreeMap<(usize, usize), (f64, f64)>, marginals: &BTreeMap<(usize, usize), f64>) -> Gradient {
    match rule {
        UpdateRule::BoundDual => gradient_vector(vfa, plan, duals),
        UpdateRule::Marginal => {
            let mut zeta = Gradient::new();
            let yb = vfa.ybar as i64;
            for &(t, i) in &vfa.slots {
                let m = marginals.get(&(t, i)).copied().unwrap_or(0.0);
                let x = plan.net_unload(i, t);
                let right = vfa.segment(x);
                // A net action strictly inside a segment touches only that one.
                let left = if (x - x.round()).abs() <= 1e-7 { x.round() as i64 - 1 } else { right };
                for y in [left, right] {
                    if (-yb..yb).contains(&y) && !zeta.contains_key(&(t, i, y)) {
                        zeta.insert((t, i, y), vfa.slope(i, t, y).unwrap_or(0.0) - m);
                    }
                }
            }
            zeta
        }
    }
}

/// Runs one planning method; see [`run_with_hook`].
pub fn run(inst: &NetworkInstance, model: &DemandModel, cfg: &SparConfig) -> Result<SparRunReport, SparError> {
    run_with_hook(inst, model, cfg, &mut |_| false)
}

/// Runs one planning method. The hook sees the iterations so far after
/// every iteration and may end the loop early by returning `true`.
pub fn run_with_hook(inst: &NetworkInstance, model: &DemandModel, cfg: &SparConfig, stop: &mut dyn FnMut(&[IterationRecord]) -> bool) -> Result<SparRunReport, SparError> {
    let start = Instant::now();
    let bad = inst.validate();
    if !bad.is_empty() {
        return Err(SparError::Instance(bad.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")));
    }
    model.validate().map_err(SparError::Model)?;
    if cfg.n_max == 0 && cfg.method.learns() {
        return Err(SparError::NoIterations);
    }
    let theta_max = cfg.theta_max.unwrap_or_else(|| default_theta_max(model));
    let mut vfa = ValueFunctionApprox::zero(inst, theta_max);
    let mut report = SparRunReport {
        method: cfg.method,
        plan: RebalancePlan::empty(inst),
        iterations: Vec::new(),
        theta_history: Vec::new(),
        vfa: vfa.clone(),
        last_iterate: None,
        final_solve: None,
        warnings: Vec::new(),
        seconds: 0.0,
    };
    match cfg.method {
        Method::Na => {
            report.seconds = start.elapsed().as_secs_f64();
            return Ok(report);
        }
        Method::M1 => {
            let scen = expected_scenario(model);
            match solve_deterministic_drrp(inst, &scen, cfg.rel_gap, cfg.final_time_limit) {
                Ok(r) => {
                    if r.hit_limit {
                        report.warnings.push("deterministic solve stopped at its limit".into());
                    }
                    report.final_solve = Some(FinalSolve {
                        objective: r.objective,
                        bound: r.bound,
                        status: r.status,
                        nodes: r.nodes,
                        seconds: r.lp_seconds + r.mip_seconds,
                        hit_limit: r.hit_limit,
                    });
                    report.plan = r.plan;
                }
                Err(e) => report.warnings.push(format!("deterministic solve failed: {e}; returning the empty plan")),
            }
            report.seconds = start.elapsed().as_secs_f64();
            return Ok(report);
        }
        _ => {}
    }

    let mode = cfg.method.iterate_mode();
    let mut basis = None;
    let mut plan = RebalancePlan::empty(inst);
    for n in 1..=cfg.n_max {
        if n > 1 && cfg.wall_limit.is_some_and(|w| start.elapsed() >= w) {
            break;
        }
        let t1 = Instant::now();
        let mut flagged = false;
        let (stage1_objective, integral) = match &mode {
            Some(mode) => {
                let opts = Stage1Options {
                    rel_gap: cfg.rel_gap,
                    time_limit: cfg.stage1_time_limit,
                    node_limit: cfg.node_limit.unwrap_or(usize::MAX),
                    warm_basis: basis.clone(),
                    ..Stage1Options::default()
                };
                match solve_stage1(inst, &vfa, mode, &opts) {
                    Ok(r) => {
                        flagged = r.hit_limit;
                        basis = r.basis;
                        plan = r.plan;
                        (r.objective, mode.has_integers() && plan.is_integral(1e-6))
                    }
                    Err(e) => {
                        report.warnings.push(format!("iteration {n}: stage 1 failed ({e}); keeping the previous plan"));
                        flagged = true;
                        (crate::stage1::stage1_objective(inst, &vfa, &plan), plan.is_integral(1e-6))
                    }
                }
            }
            None => {
                plan = random_plan_with(inst, &mut stream_rng(cfg.seed, Stream::M3Actions, n as u64));
                (crate::stage1::stage1_objective(inst, &vfa, &plan), false)
            }
        };
        let stage1_seconds = t1.elapsed().as_secs_f64();
        let t2 = Instant::now();
        let scen = sample_stream(model, cfg.seed, Stream::Scenario, n as u64);
        let alpha = cfg.step.alpha(n);
        let (stage2_cost, service_rate) = match solve_stage2_any(inst, &scen, &plan) {
            Ok(out) => {
                let zeta = update_direction(cfg.update, &vfa, &plan, &out.duals, &out.marginals);
                vfa = vfa.step(&zeta, alpha);
                (out.cost, out.service_rate)
            }
            Err(e) => {
                report.warnings.push(format!("iteration {n}: stage 2 failed ({e}); θ unchanged"));
                flagged = true;
                (f64::NAN, f64::NAN)
            }
        };
        debug_assert!(vfa.is_admissible(1e-9));
        report.iterations.push(IterationRecord {
            iteration: n,
            alpha,
            stage1_objective,
            operating_cost: plan.operating_cost(inst),
            stage2_cost,
            service_rate,
            stage1_seconds,
            stage2_seconds: t2.elapsed().as_secs_f64(),
            integral,
            flagged,
        });
        if cfg.keep_theta_history {
            report.theta_history.push(vfa.clone());
        }
        if stop(&report.iterations) {
            break;
        }
    }
    report.last_iterate = Some(plan.clone());
    if cfg.method == Method::M2I {
        report.plan = plan;
    } else {
        let opts = Stage1Options {
            rel_gap: cfg.rel_gap,
            time_limit: cfg.final_time_limit,
            node_limit: cfg.node_limit.unwrap_or(usize::MAX),
            ..Stage1Options::default()
        };
        match solve_stage1(inst, &vfa, &Stage1Mode::Integer, &opts) {
            Ok(r) => {
                if r.hit_limit {
                    report.warnings.push("final integer solve stopped at its limit".into());
                }
                report.final_solve = Some(FinalSolve {
                    objective: r.objective,
                    bound: r.bound,
                    status: r.status,
                    nodes: r.nodes,
                    seconds: r.seconds,
                    hit_limit: r.hit_limit,
                });
                report.plan = r.plan;
            }
            Err(e) => report.warnings.push(format!("final integer solve failed: {e}; returning the empty plan")),
        }
    }
    report.vfa = vfa;
    report.seconds = start.elapsed().as_secs_f64();
    Ok(report)
}
