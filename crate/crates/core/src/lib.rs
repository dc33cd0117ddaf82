//! Two-dimensional parallel tempering for constrained Ising problems.
//!
//! Replicas live on a grid indexed by inverse temperature (rows) and
//! penalty strength (columns). Each replica samples `exp(-beta (f + P g))`
//! where `f` is an Ising cost and `g >= 0` a constraint function that
//! vanishes on feasible states. Configurations are exchanged between
//! neighbors along both axes, so feasible low-energy states drift toward the
//! coldest, most penalized replica.
//!
//! Module map:
//! - [`ising`], [`sweep`]: models, energies, Metropolis sweeps
//! - [`constraints`]: copy constraints, sparsification, decoding
//! - [`engine`]: the replica grid and the fixed-penalty baseline
//! - [`schedule`]: adaptive construction of the temperature and penalty ladders
//! - [`oracle`]: exact enumeration, ground states, KL divergence
//! - [`instances`]: planted Wishart and five-node generators
//! - [`analysis`]: residual energies, swap rates, scaling collapse

pub mod analysis;
pub mod constraints;
pub mod engine;
pub mod error;
pub mod instances;
pub mod ising;
pub mod oracle;
pub mod rng;
pub mod schedule;
pub mod sweep;

pub use constraints::{build_effective, sparsify, ConstrainedProblem, ConstraintSet, EffectiveModel, SparsificationMap};
pub use engine::{run_2dpt, run_jcolumn_pt, ReplicaGrid, RunConfig, Trace};
pub use error::{Error, Result};
pub use ising::{EnergyBreakdown, IsingModel, SpinState};
pub use schedule::{build_schedule, Schedule, ScheduleConfig};
