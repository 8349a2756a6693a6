//! Two-stage stochastic rebalancing for shared-mobility systems.
//!
//! Station fill levels respond to customer journeys; an operator moves
//! rebalancing vehicles (trucks) between nodes and loads or unloads shared
//! vehicles. The first stage plans truck routes and actions against a
//! separable piecewise-linear estimate of the expected second-stage cost;
//! the second stage is a min-cost flow over a time-expanded station graph
//! whose duals drive the estimate.

pub mod bench;
pub mod grid;
pub mod ingest;
pub mod io;
pub mod model;
pub mod money;
pub mod scenario;
pub mod spar;
pub mod stage1;
pub mod stage2;
pub mod vf;

pub use model::{
    check_plan, enumerate_tuples, validate_instance, DemandTuple, InProgressTrip, NetworkInstance, PlanViolation,
    RebalancePlan, Stage2Solution, TupleIndex, Violation,
};
pub use money::Money;
pub use scenario::{expected_scenario, sample_scenario, DemandModel, DemandScenario, Stream};
