//! Demand models and scenario sampling.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::model::DemandTuple;
use crate::money::Money;

/// Independent random streams, one per purpose, so that methods run on the
/// same seed see the same scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stream {
    Instance = 1,
    Scenario = 2,
    M3Actions = 3,
    Eval = 4,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Generator for draw `index` of `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let key = splitmix(splitmix(splitmix(seed) ^ stream as u64) ^ index);
    ChaCha8Rng::seed_from_u64(key)
}

/// Nominal journey rates per tuple plus the journey value range.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DemandModel {
    /// Expected journeys per tuple; zero rates are left out.
    pub rates: BTreeMap<DemandTuple, f64>,
    pub value_low: Money,
    pub value_high: Money,
}

impl DemandModel {
    pub fn validate(&self) -> Result<(), String> {
        if self.value_low.0 < 0 || self.value_low > self.value_high {
            return Err(format!("value range [{}, {}] is invalid", self.value_low, self.value_high));
        }
        for (d, &r) in &self.rates {
            if !r.is_finite() || r < 0.0 {
                return Err(format!("rate {r} for {d:?} is invalid"));
            }
        }
        Ok(())
    }

    pub fn total_rate(&self) -> f64 {
        self.rates.values().sum()
    }

    pub fn mean_value(&self) -> Money {
        Money((self.value_low.0 + self.value_high.0) / 2)
    }
}

/// One demand realization: journey values per tuple, sorted ascending.
///
/// The demand count is the list length; tuples with no demand are absent.
/// Leaving `x` journeys unserved costs the sum of the `x` smallest values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DemandScenario {
    pub values: BTreeMap<DemandTuple, Vec<Money>>,
}

impl DemandScenario {
    pub fn demand(&self, d: &DemandTuple) -> usize {
        self.values.get(d).map_or(0, Vec::len)
    }

    pub fn total_demand(&self) -> i64 {
        self.values.values().map(|v| v.len() as i64).sum()
    }

    /// Loss of leaving every journey unserved.
    pub fn total_value(&self) -> Money {
        self.values.values().flatten().copied().sum()
    }

    /// Loss `l(x)` of leaving `x` journeys of tuple `d` unserved.
    pub fn loss(&self, d: &DemandTuple, unserved: usize) -> Money {
        self.values.get(d).map_or(Money::ZERO, |v| v[..unserved.min(v.len())].iter().copied().sum())
    }

    pub fn is_well_formed(&self) -> bool {
        self.values.values().all(|v| !v.is_empty() && v.windows(2).all(|w| w[0] <= w[1]))
    }

    /// Inserts a tuple with the given values, sorting them.
    pub fn insert(&mut self, d: DemandTuple, mut values: Vec<Money>) {
        if values.is_empty() {
            self.values.remove(&d);
        } else {
            values.sort();
            self.values.insert(d, values);
        }
    }
}

fn draw_values<R: Rng>(model: &DemandModel, count: usize, rng: &mut R) -> Vec<Money> {
    let (lo, hi) = (model.value_low.to_f64(), model.value_high.to_f64());
    let mut v: Vec<Money> = (0..count)
        .map(|_| if hi > lo { Money::from_f64(rng.random_range(lo..hi)) } else { model.value_low })
        .collect();
    v.sort();
    v
}

/// Poisson counts per tuple and uniform journey values, drawn from `rng`.
pub fn sample_scenario_with<R: Rng>(model: &DemandModel, rng: &mut R) -> DemandScenario {
    let mut values = BTreeMap::new();
    for (&d, &rate) in &model.rates {
        if rate <= 0.0 {
            continue;
        }
        let count = Poisson::new(rate).expect("positive finite rate").sample(rng) as usize;
        if count > 0 {
            values.insert(d, draw_values(model, count, rng));
        }
    }
    DemandScenario { values }
}

pub fn sample_scenario(model: &DemandModel, seed: u64) -> DemandScenario {
    sample_scenario_with(model, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Scenario `index` of `stream` under `seed`.
pub fn sample_stream(model: &DemandModel, seed: u64, stream: Stream, index: u64) -> DemandScenario {
    sample_scenario_with(model, &mut stream_rng(seed, stream, index))
}

/// Counts rounded half to even, every journey worth the mid value.
pub fn expected_scenario(model: &DemandModel) -> DemandScenario {
    let mid = model.mean_value();
    let mut values = BTreeMap::new();
    for (&d, &rate) in &model.rates {
        let count = rate.round_ties_even() as usize;
        if count > 0 {
            values.insert(d, vec![mid; count]);
        }
    }
    DemandScenario { values }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(rate: f64, lo: f64, hi: f64) -> DemandModel {
        let mut rates = BTreeMap::new();
        rates.insert(DemandTuple::new(0, 1, 1, 0), rate);
        DemandModel { rates, value_low: Money::from_f64(lo), value_high: Money::from_f64(hi) }
    }

    #[test]
    fn expected_rounds_half_to_even() {
        let d = DemandTuple::new(0, 1, 1, 0);
        assert_eq!(expected_scenario(&single(2.5, 0.5, 1.5)).demand(&d), 2);
        assert_eq!(expected_scenario(&single(3.5, 0.5, 1.5)).demand(&d), 4);
        assert_eq!(expected_scenario(&single(0.49, 0.5, 1.5)).total_demand(), 0);
        let one = expected_scenario(&single(1.0, 0.5, 1.5));
        assert_eq!(one.values[&d], vec![Money::from_f64(1.0)]);
    }

    #[test]
    fn streams_differ_and_repeat() {
        let a: u64 = stream_rng(1, Stream::Scenario, 0).random();
        let b: u64 = stream_rng(1, Stream::Scenario, 1).random();
        let c: u64 = stream_rng(1, Stream::Eval, 0).random();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, stream_rng(1, Stream::Scenario, 0).random::<u64>());
    }

    #[test]
    fn samples_are_sorted() {
        let model = single(30.0, 0.5, 1.5);
        for seed in 0..20 {
            assert!(sample_scenario(&model, seed).is_well_formed());
        }
    }
}
