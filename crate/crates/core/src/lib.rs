//! Fairness/utility trade-offs for rankings under the DBN exposure model.
//!
//! The feasible expected exposures of an `n`-item query form a polytope, the
//! DBN-expohedron. This crate tests membership in it, identifies faces,
//! decomposes any feasible exposure into at most `n` rankings, builds the
//! exact Pareto front between utility and distance to a fair target, and
//! delivers ranking sequences that realize a chosen trade-off.
//!
//! ```
//! use expohedron::{build_front, decompose, select_tradeoff, DbnParams, Expohedron,
//!     MeritVector, RelevanceVector};
//!
//! let rho = RelevanceVector::new(vec![0.1, 0.5, 0.9]).unwrap();
//! let eh = Expohedron::new(DbnParams::new(0.5, 0.7).unwrap(), rho);
//! let target = eh.target_exposure(&MeritVector::uniform(3)).unwrap();
//! let front = build_front(&eh, &target.exposure).unwrap();
//! let point = select_tradeoff(&front, 0.5).unwrap();
//! let policy = decompose(&point, &eh).unwrap();
//! assert!(policy.len() <= 3);
//! ```

pub mod caratheodory;
pub mod click_models;
pub mod error;
pub mod evaluation;
pub mod expohedron;
mod linalg;
pub mod pareto;
pub mod policies;

pub use caratheodory::{boundary_intersection, decompose, Atom, RankingDistribution};
pub use click_models::{
    exposure, exposure_of_distribution, reduce_to_dbn, ClickModelSpec, DbnParams, ExposureVector,
    Ranking, RelevanceVector,
};
pub use error::{Error, Result};
pub use evaluation::{
    default_sweep, normalized_unfairness, normalized_utility, run_experiment, utility,
    ExperimentConfig, Fairness, Method, MetricReport, QueryInstance, QueryResult,
};
pub use expohedron::{zone_of, Expohedron, Face, MeritVector, TargetExposure, EQ_TOLERANCE};
pub use pareto::{build_front, dominance_check, select_tradeoff, FrontVertex, ParetoFront};
pub use policies::{ControllerState, DeliverySchedule, PlPolicy};
