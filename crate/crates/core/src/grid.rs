//! Square-grid benchmark instances with clustered demand.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{DemandTuple, NetworkInstance};
use crate::money::Money;
use crate::scenario::{stream_rng, DemandModel, Stream};

/// Side length of the square area the stations cover.
pub const AREA: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridGenParams {
    pub grid_side: usize,
    pub origin_clusters: usize,
    pub dest_clusters: usize,
    pub brackets: usize,
    pub bracket_len: usize,
    /// Shared vehicles in the system; `None` means five per station.
    pub fleet_sv: Option<usize>,
    /// Distance covered per step; `None` means `125 / sqrt(stations)`.
    pub sv_speed: Option<f64>,
    pub step_minutes: f64,
    pub trip_mean_frac: f64,
    pub trip_sd_frac: f64,
    pub max_duration: usize,
    pub station_capacity: i64,
    pub rv_capacity: i64,
    /// Requested largest action; clamped to `rv_capacity * rv_count`.
    pub max_load_action: i64,
    pub rv_count: i64,
    pub move_cost: f64,
    pub load_cost: f64,
    pub penalty: f64,
    pub value_low: f64,
    pub value_high: f64,
    pub rng_seed: u64,
}

impl Default for GridGenParams {
    fn default() -> Self {
        GridGenParams {
            grid_side: 3,
            origin_clusters: 3,
            dest_clusters: 5,
            brackets: 6,
            bracket_len: 2,
            fleet_sv: None,
            sv_speed: None,
            step_minutes: 15.0,
            trip_mean_frac: 0.15,
            trip_sd_frac: 0.075,
            max_duration: 2,
            station_capacity: 10,
            rv_capacity: 5,
            max_load_action: 10,
            rv_count: 1,
            move_cost: 1e-3,
            load_cost: 1e-3,
            penalty: 20.0,
            value_low: 0.5,
            value_high: 1.5,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GridError {
    #[error("grid side must be at least 2, got {0}")]
    SideTooSmall(usize),
    #[error("need at least one origin and one destination cluster")]
    NoClusters,
    #[error("need at least one bracket of at least one step")]
    NoSteps,
    #[error("invalid parameter: {0}")]
    Invalid(&'static str),
}

impl GridGenParams {
    pub fn stations(&self) -> usize {
        self.grid_side * self.grid_side
    }

    pub fn horizon(&self) -> usize {
        self.brackets * self.bracket_len
    }

    pub fn fleet(&self) -> usize {
        self.fleet_sv.unwrap_or(5 * self.stations())
    }

    pub fn speed(&self) -> f64 {
        self.sv_speed.unwrap_or(125.0 / (self.stations() as f64).sqrt())
    }

    /// Standard defaults for a grid with `stations` nodes and `rv_count` trucks.
    pub fn for_size(stations: usize, rv_count: i64, seed: u64) -> Self {
        let side = (stations as f64).sqrt().round() as usize;
        GridGenParams { grid_side: side, rv_count, rng_seed: seed, ..Default::default() }
    }

    fn check(&self) -> Result<(), GridError> {
        if self.grid_side < 2 {
            return Err(GridError::SideTooSmall(self.grid_side));
        }
        if self.origin_clusters == 0 || self.dest_clusters == 0 {
            return Err(GridError::NoClusters);
        }
        if self.brackets == 0 || self.bracket_len == 0 {
            return Err(GridError::NoSteps);
        }
        if !(self.speed() > 0.0) {
            return Err(GridError::Invalid("sv_speed"));
        }
        if self.rv_count < 0 || self.rv_capacity < 0 || self.station_capacity < 0 || self.max_load_action < 0 {
            return Err(GridError::Invalid("negative count"));
        }
        if !(self.value_low >= 0.0 && self.value_low <= self.value_high) {
            return Err(GridError::Invalid("value range"));
        }
        if !(self.trip_mean_frac >= 0.0 && self.trip_sd_frac >= 0.0) {
            return Err(GridError::Invalid("trip fractions"));
        }
        Ok(())
    }
}

/// Position of node `idx` (row-major) at the centre of its grid cell.
pub fn node_position(side: usize, idx: usize) -> (f64, f64) {
    let cell = AREA / side as f64;
    let (r, c) = (idx / side, idx % side);
    ((c as f64 + 0.5) * cell, (r as f64 + 0.5) * cell)
}

/// Nearest node to `p`; ties go to the lowest index.
pub fn map_to_grid(side: usize, p: (f64, f64)) -> usize {
    let mut best = (f64::INFINITY, 0);
    for idx in 0..side * side {
        let q = node_position(side, idx);
        let d = (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2);
        if d < best.0 {
            best = (d, idx);
        }
    }
    best.1
}

/// Journey length in steps, `ceil(distance / speed)` capped at `max_duration`.
pub fn calc_time(from: (f64, f64), to: (f64, f64), speed: f64, max_duration: usize) -> usize {
    let dist = ((from.0 - to.0).powi(2) + (from.1 - to.1).powi(2)).sqrt();
    let k = (dist / speed).ceil();
    (k.max(0.0) as usize).min(max_duration)
}

/// A bivariate normal with isotropic variance.
#[derive(Clone, Copy, Debug)]
struct Cluster {
    centre: (f64, f64),
    sd: f64,
}

impl Cluster {
    fn draw(rng: &mut ChaCha8Rng, count: usize) -> Cluster {
        let centre = (rng.random_range(0.0..AREA), rng.random_range(0.0..AREA));
        let variance = rng.random_range(1..=4) as f64 * AREA / count as f64;
        Cluster { centre, sd: variance.sqrt() }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let n = Normal::new(0.0, self.sd).expect("finite sd");
        (self.centre.0 + n.sample(rng), self.centre.1 + n.sample(rng))
    }
}

/// `max(0, round(Normal(mean, sd)))`, redrawing negative samples.
fn random_number_of_trips(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> usize {
    if sd == 0.0 {
        return mean.round().max(0.0) as usize;
    }
    let n = Normal::new(mean, sd).expect("finite sd");
    loop {
        let v = n.sample(rng).round();
        if v >= 0.0 {
            return v as usize;
        }
    }
}

/// Nominal rates from clustered trip samples over the given grid.
pub fn clustered_rates(params: &GridGenParams, rng: &mut ChaCha8Rng) -> BTreeMap<DemandTuple, f64> {
    let side = params.grid_side;
    let n_sv = params.fleet() as f64;
    let speed = params.speed();
    let mut rates: BTreeMap<DemandTuple, f64> = BTreeMap::new();
    for beta in 0..params.brackets {
        let origins: Vec<Cluster> = (0..params.origin_clusters).map(|_| Cluster::draw(rng, params.origin_clusters)).collect();
        let dests: Vec<Cluster> = (0..params.dest_clusters).map(|_| Cluster::draw(rng, params.dest_clusters)).collect();
        for t in beta * params.bracket_len + 1..=(beta + 1) * params.bracket_len {
            let trips = random_number_of_trips(rng, params.trip_mean_frac * n_sv, params.trip_sd_frac * n_sv);
            for _ in 0..trips {
                let o = rng.random_range(0..origins.len());
                let d = rng.random_range(0..dests.len());
                let from = origins[o].sample(rng);
                let to = dests[d].sample(rng);
                let (i, j) = (map_to_grid(side, from), map_to_grid(side, to));
                let k = calc_time(from, to, speed, params.max_duration);
                *rates.entry(DemandTuple::new(i, j, t, k)).or_insert(0.0) += 1.0;
            }
        }
    }
    rates
}

/// Builds a grid instance and its nominal demand model.
///
/// Stations sit on a `side x side` grid; every ordered station pair
/// (including self pairs) is a journey edge; trucks move to a 4-neighbour or
/// stay put each step and start on uniformly drawn nodes.
pub fn generate_grid_instance(params: &GridGenParams) -> Result<(NetworkInstance, DemandModel), GridError> {
    params.check()?;
    let side = params.grid_side;
    let n = side * side;
    let t_len = params.horizon();
    let mut rng = stream_rng(params.rng_seed, Stream::Instance, 0);

    let node_labels: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let nodes: Vec<usize> = (0..n).collect();
    let sv_edges: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let mut rv_edges = Vec::new();
    for i in 0..n {
        let (r, c) = (i / side, i % side);
        let mut nbrs = vec![i];
        if r > 0 {
            nbrs.push(i - side);
        }
        if r + 1 < side {
            nbrs.push(i + side);
        }
        if c > 0 {
            nbrs.push(i - 1);
        }
        if c + 1 < side {
            nbrs.push(i + 1);
        }
        nbrs.sort_unstable();
        rv_edges.extend(nbrs.into_iter().map(|j| (i, j)));
    }
    let move_cost = Money::from_f64(params.move_cost);
    let step_costs: Vec<Money> = rv_edges.iter().map(|&(a, b)| if a == b { Money::ZERO } else { move_cost }).collect();

    let mut initial_rv = vec![0; rv_edges.len()];
    for _ in 0..params.rv_count {
        let v = rng.random_range(0..n);
        let k = rv_edges.iter().position(|&e| e == (v, v)).expect("self loop");
        initial_rv[k] += 1;
    }

    let inst = NetworkInstance {
        node_labels,
        sv_nodes: nodes.clone(),
        sv_edges,
        rv_nodes: nodes,
        horizon: t_len,
        max_duration: params.max_duration,
        station_capacity: vec![params.station_capacity; n],
        rv_capacity: params.rv_capacity,
        max_load_action: params.max_load_action.min(params.rv_capacity * params.rv_count),
        fleet_size: params.rv_count,
        rv_move_cost: vec![step_costs; t_len],
        load_cost: vec![vec![Money::from_f64(params.load_cost); n]; t_len],
        penalty: Money::from_f64(params.penalty),
        initial_fill: vec![params.station_capacity / 2; n],
        initial_onboard: vec![0; rv_edges.len()],
        initial_rv,
        rv_edges,
        in_progress: Vec::new(),
    };
    let rates = clustered_rates(params, &mut rng);
    let model = DemandModel {
        rates,
        value_low: Money::from_f64(params.value_low),
        value_high: Money::from_f64(params.value_high),
    };
    Ok((inst, model))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(map_to_grid(2, (50.0, 50.0)), 0);
        assert_eq!(map_to_grid(2, (80.0, 20.0)), 1);
    }

    #[test]
    fn durations_are_capped() {
        assert_eq!(calc_time((0.0, 0.0), (3.0, 4.0), 5.0, 2), 1);
        assert_eq!(calc_time((0.0, 0.0), (3.0, 4.0), 1.0, 2), 2);
        assert_eq!(calc_time((1.0, 1.0), (1.0, 1.0), 1.0, 2), 0);
    }

    #[test]
    fn rejects_tiny_grids() {
        let p = GridGenParams { grid_side: 1, ..Default::default() };
        assert_eq!(generate_grid_instance(&p).unwrap_err(), GridError::SideTooSmall(1));
    }

    #[test]
    fn defaults_give_a_valid_instance() {
        let (inst, model) = generate_grid_instance(&GridGenParams::default()).unwrap();
        assert!(inst.validate().is_empty());
        assert_eq!(inst.total_initial_fill(), 45);
        assert_eq!(inst.max_load_action, 5);
        assert!(model.validate().is_ok());
    }
}
