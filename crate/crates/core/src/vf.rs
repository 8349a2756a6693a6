//! Separable piecewise-linear estimate of the expected second-stage cost.
//!
//! Each action slot `(t, i)` carries `2ȳ` slopes for the segments
//! `[y', y' + 1]`, `y' = -ȳ .. ȳ - 1`, of a function of the net unload
//! `x = y⁻ - y⁺` that passes through the origin.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::model::{NetworkInstance, RebalancePlan};

/// Tolerance for snapping a fractional net action to its segment.
pub const SEGMENT_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum StepSizeRule {
    /// `20 / (40 + n)`.
    Harmonic2040,
    Constant(f64),
    /// `min(1, 20 / n)`.
    CappedHarmonic,
}

impl StepSizeRule {
    /// Step at iteration `n >= 1`.
    pub fn alpha(&self, n: usize) -> f64 {
        let n = n.max(1) as f64;
        match *self {
            StepSizeRule::Harmonic2040 => 20.0 / (40.0 + n),
            StepSizeRule::Constant(c) => c,
            StepSizeRule::CappedHarmonic => (20.0 / n).min(1.0),
        }
    }

    pub fn name(&self) -> String {
        match self {
            StepSizeRule::Harmonic2040 => "harmonic_20_40".into(),
            StepSizeRule::Constant(c) => format!("constant_{c}"),
            StepSizeRule::CappedHarmonic => "capped_harmonic".into(),
        }
    }

    pub fn parse(s: &str) -> Option<StepSizeRule> {
        match s {
            "harmonic_20_40" | "harmonic" => Some(StepSizeRule::Harmonic2040),
            "capped_harmonic" => Some(StepSizeRule::CappedHarmonic),
            _ => s.strip_prefix("constant_").or_else(|| s.strip_prefix("constant:")).and_then(|v| v.parse().ok()).map(StepSizeRule::Constant),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum VfError {
    #[error("({i}, {t}) is not an action slot")]
    UnknownSlot { i: usize, t: usize },
    #[error("argument {x} is outside [-{ybar}, {ybar}]")]
    Domain { x: f64, ybar: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueFunctionApprox {
    /// Constant offset; never estimated.
    pub theta0: f64,
    pub ybar: usize,
    pub theta_max: f64,
    /// Action slots `(t, i)` in canonical order.
    pub slots: Vec<(usize, usize)>,
    /// `slopes[slot][y' + ȳ]`.
    pub slopes: Vec<Vec<f64>>,
    index: BTreeMap<(usize, usize), usize>,
}

/// Sparse update direction indexed like the slopes: `(t, i, y') -> value`.
pub type Gradient = BTreeMap<(usize, usize, i64), f64>;

impl ValueFunctionApprox {
    pub fn zero(inst: &NetworkInstance, theta_max: f64) -> Self {
        let actions = inst.action_nodes();
        let slots: Vec<(usize, usize)> = (1..=inst.horizon).flat_map(|t| actions.iter().map(move |&i| (t, i))).collect();
        Self::with_slots(slots, inst.max_load_action.max(0) as usize, theta_max)
    }

    pub fn with_slots(slots: Vec<(usize, usize)>, ybar: usize, theta_max: f64) -> Self {
        let index = slots.iter().enumerate().map(|(k, &s)| (s, k)).collect();
        let slopes = vec![vec![0.0; 2 * ybar]; slots.len()];
        ValueFunctionApprox { theta0: 0.0, ybar, theta_max, slots, slopes, index }
    }

    pub fn slot(&self, i: usize, t: usize) -> Option<usize> {
        self.index.get(&(t, i)).copied()
    }

    pub fn slopes_at(&self, i: usize, t: usize) -> Option<&[f64]> {
        self.slot(i, t).map(|k| self.slopes[k].as_slice())
    }

    /// Slope of segment `[y', y' + 1]`.
    pub fn slope(&self, i: usize, t: usize, y: i64) -> Option<f64> {
        let k = self.slot(i, t)?;
        let idx = y + self.ybar as i64;
        (0..2 * self.ybar as i64).contains(&idx).then(|| self.slopes[k][idx as usize])
    }

    /// Segment index `y'` holding net action `x`; the right end maps to the last segment.
    pub fn segment(&self, x: f64) -> i64 {
        let yb = self.ybar as i64;
        ((x + SEGMENT_EPS).floor() as i64).clamp(-yb, yb - 1)
    }

    /// `V̄_i^t(x)`: integral of the slope step function from 0 to `x`.
    pub fn evaluate(&self, i: usize, t: usize, x: f64) -> Result<f64, VfError> {
        let k = self.slot(i, t).ok_or(VfError::UnknownSlot { i, t })?;
        let yb = self.ybar as f64;
        if !(x >= -yb - SEGMENT_EPS && x <= yb + SEGMENT_EPS) {
            return Err(VfError::Domain { x, ybar: self.ybar });
        }
        Ok(eval_slopes(&self.slopes[k], self.ybar, x.clamp(-yb, yb)))
    }

    /// `θ_0 + Σ V̄_i^t(y⁻ - y⁺)` over all slots.
    pub fn evaluate_plan(&self, plan: &RebalancePlan) -> Result<f64, VfError> {
        let mut total = self.theta0;
        for &(t, i) in &self.slots {
            total += self.evaluate(i, t, plan.net_unload(i, t))?;
        }
        Ok(total)
    }

    pub fn is_admissible(&self, tol: f64) -> bool {
        self.slopes.iter().all(|s| {
            s.iter().all(|v| v.is_finite() && v.abs() <= self.theta_max + tol) && s.windows(2).all(|w| w[0] <= w[1] + tol)
        })
    }

    /// Projection of every slot onto the admissible set.
    pub fn project(&mut self) {
        for s in &mut self.slopes {
            *s = project_slopes(s, self.theta_max);
        }
    }

    /// `Proj(θ - α ζ)`; the input is left untouched.
    pub fn step(&self, zeta: &Gradient, alpha: f64) -> ValueFunctionApprox {
        let mut next = self.clone();
        let mut touched = std::collections::BTreeSet::new();
        for (&(t, i, y), &g) in zeta {
            if let Some(k) = self.slot(i, t) {
                let idx = (y + self.ybar as i64).clamp(0, 2 * self.ybar as i64 - 1) as usize;
                if 2 * self.ybar > 0 {
                    next.slopes[k][idx] -= alpha * g;
                    touched.insert(k);
                }
            }
        }
        for k in touched {
            next.slopes[k] = project_slopes(&next.slopes[k], self.theta_max);
        }
        next
    }

    /// Writes `i,t,y,slope,iteration` rows (no header).
    pub fn write_csv_rows<W: Write>(&self, out: &mut W, iteration: usize, labels: &[String]) -> std::io::Result<()> {
        for (k, &(t, i)) in self.slots.iter().enumerate() {
            for (idx, v) in self.slopes[k].iter().enumerate() {
                writeln!(out, "{},{},{},{},{}", labels[i], t, idx as i64 - self.ybar as i64, v, iteration)?;
            }
        }
        Ok(())
    }
}

pub const THETA_CSV_HEADER: &str = "i,t,y,slope,iteration";

fn eval_slopes(slopes: &[f64], ybar: usize, x: f64) -> f64 {
    let yb = ybar as i64;
    let mut total = 0.0;
    if x >= 0.0 {
        let mut s = 0;
        while (s as f64) < x && s < yb {
            total += slopes[(s + yb) as usize] * (x - s as f64).min(1.0);
            s += 1;
        }
    } else {
        let mut s = -1;
        while (s as f64 + 1.0) > x && s >= -yb {
            total -= slopes[(s + yb) as usize] * ((s as f64 + 1.0) - x).min(1.0);
            s -= 1;
        }
    }
    total
}

/// Euclidean projection onto nondecreasing vectors in `[-θmax, θmax]`:
/// pool adjacent violators, then clip.
pub fn project_slopes(raw: &[f64], theta_max: f64) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(raw.len());
    for &v in raw {
        let mut cur = (v, 1usize);
        while let Some(&(m, w)) = blocks.last() {
            if m <= cur.0 {
                break;
            }
            blocks.pop();
            let total = w + cur.1;
            cur = ((m * w as f64 + cur.0 * cur.1 as f64) / total as f64, total);
        }
        blocks.push(cur);
    }
    blocks.into_iter().flat_map(|(m, w)| std::iter::repeat_n(m.clamp(-theta_max, theta_max), w)).collect()
}

/// Dual signal `λ⁺ - λ⁻` at the segment of each slot's net action; zero elsewhere.
pub fn gradient_vector(vfa: &ValueFunctionApprox, plan: &RebalancePlan, duals: &BTreeMap<(usize, usize), (f64, f64)>) -> Gradient {
    let mut zeta = Gradient::new();
    for &(t, i) in &vfa.slots {
        let (up, lo) = duals.get(&(t, i)).copied().unwrap_or((0.0, 0.0));
        let g = up - lo;
        if g != 0.0 {
            zeta.insert((t, i, vfa.segment(plan.net_unload(i, t))), g);
        }
    }
    zeta
}

/// Writes a full θ history as CSV with header.
pub fn write_theta_csv<W: Write>(out: &mut W, history: &[ValueFunctionApprox], labels: &[String]) -> std::io::Result<()> {
    writeln!(out, "{THETA_CSV_HEADER}")?;
    for (n, v) in history.iter().enumerate() {
        v.write_csv_rows(out, n + 1, labels)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_slot(slopes: Vec<f64>) -> ValueFunctionApprox {
        let ybar = slopes.len() / 2;
        let mut v = ValueFunctionApprox::with_slots(vec![(1, 0)], ybar, 100.0);
        v.slopes[0] = slopes;
        v
    }

    #[test]
    fn evaluation_follows_the_segments() {
        let v = one_slot(vec![-3.0, -1.0, 2.0, 5.0]);
        assert_eq!(v.evaluate(0, 1, 0.0).unwrap(), 0.0);
        assert_eq!(v.evaluate(0, 1, 1.0).unwrap(), 2.0);
        assert_eq!(v.evaluate(0, 1, 1.5).unwrap(), 4.5);
        assert_eq!(v.evaluate(0, 1, 2.0).unwrap(), 7.0);
        assert_eq!(v.evaluate(0, 1, -1.0).unwrap(), 1.0);
        assert_eq!(v.evaluate(0, 1, -2.0).unwrap(), 4.0);
        assert!(v.evaluate(0, 1, 2.5).is_err());
    }

    #[test]
    fn pav_pools_violators() {
        assert_eq!(project_slopes(&[3.0, 1.0], 10.0), vec![2.0, 2.0]);
        assert_eq!(project_slopes(&[15.0, 20.0], 10.0), vec![10.0, 10.0]);
        assert_eq!(project_slopes(&[-1.0, 0.0, 4.0], 10.0), vec![-1.0, 0.0, 4.0]);
    }

    #[test]
    fn step_rules() {
        assert_eq!(StepSizeRule::Harmonic2040.alpha(10), 0.4);
        assert_eq!(StepSizeRule::CappedHarmonic.alpha(5), 1.0);
        assert_eq!(StepSizeRule::CappedHarmonic.alpha(40), 0.5);
        assert_eq!(StepSizeRule::parse("constant_0.5"), Some(StepSizeRule::Constant(0.5)));
    }

    #[test]
    fn segment_clamps_at_the_ends() {
        let v = one_slot(vec![0.0; 4]);
        assert_eq!(v.segment(2.0), 1);
        assert_eq!(v.segment(-2.0), -2);
        assert_eq!(v.segment(0.999_999_99), 1);
        assert_eq!(v.segment(0.5), 0);
    }
}
