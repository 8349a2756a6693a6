use crate::{FlowProblem, FlowSolution, FlowStatus};

/// Multipliers of the bounds `0 <= flow` (`lower`) and `flow <= capacity` (`upper`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BoundDuals {
    pub lower: i64,
    pub upper: i64,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DualError {
    #[error("solution is not optimal")]
    NotOptimal,
    #[error("potentials violate the reduced-cost criterion on arc {0}")]
    NotCertified(usize),
    #[error("tracked arc {0} does not exist")]
    UnknownArc(usize),
}

/// Bound multipliers read off the node potentials for each tracked arc.
pub fn extract_bound_duals(
    problem: &FlowProblem,
    solution: &FlowSolution,
    tracked: &[usize],
) -> Result<Vec<BoundDuals>, DualError> {
    if solution.status != FlowStatus::Optimal || solution.potentials.len() != problem.num_nodes() {
        return Err(DualError::NotOptimal);
    }
    tracked
        .iter()
        .map(|&k| {
            let a = problem.arcs.get(k).ok_or(DualError::UnknownArc(k))?;
            let rc = solution.reduced_cost(problem, k);
            let x = solution.flows[k];
            if (x < a.capacity && rc < 0) || (x > 0 && rc > 0) {
                return Err(DualError::NotCertified(k));
            }
            Ok(BoundDuals { lower: rc.max(0), upper: (-rc).max(0) })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solve_flow_rooted;

    #[test]
    fn idle_zero_cost_arc_has_no_multipliers() {
        let mut p = FlowProblem::new(2);
        p.supplies = vec![1, -1];
        p.add_arc(0, 1, 5, 0);
        let s = solve_flow_rooted(&p, 1);
        let d = extract_bound_duals(&p, &s, &[0]).unwrap();
        assert_eq!(d[0], BoundDuals::default());
    }

    #[test]
    fn saturated_cheap_path_prices_the_bypass() {
        // 2 units from 0 to 2; direct arc cost 1 capacity 1, detour cost 4.
        let mut p = FlowProblem::new(3);
        p.supplies = vec![2, 0, -2];
        p.add_arc(0, 2, 1, 1);
        p.add_arc(0, 1, 5, 2);
        p.add_arc(1, 2, 5, 2);
        let s = solve_flow_rooted(&p, 2);
        let d = extract_bound_duals(&p, &s, &[0]).unwrap();
        assert_eq!(d[0].upper, 3);
        assert_eq!(d[0].lower, 0);
    }

    #[test]
    fn rejects_infeasible() {
        let mut p = FlowProblem::new(2);
        p.supplies = vec![1, -1];
        let s = crate::solve_flow(&p);
        assert_eq!(extract_bound_duals(&p, &s, &[]), Err(DualError::NotOptimal));
    }
}
