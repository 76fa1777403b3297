//! Generalized momentum methods: mirror maps, λ-parametrized schedules,
//! discrete and continuous-time methods, and the diagnostics that check
//! their conserved quantities and rates.

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod methods;
pub mod objectives;
pub mod rng;
pub mod schedules;
pub mod spaces;
pub mod vecops;

pub use diagnostics::{History, RateColumn, RateFit, TraceRecord};
pub use dynamics::{ContinuousRun, Dynamics, TimeScale, Trajectory};
pub use error::{Error, Result};
pub use methods::{IterateState, MethodKind, RunConfig, Trace};
pub use objectives::{NonconvexKind, Objective, ProblemInstance};
pub use schedules::{Schedule, ScheduleParams};
pub use spaces::{DualPoint, MirrorKind, MirrorMap, NormKind, NormedSpace, PrimalPoint};
