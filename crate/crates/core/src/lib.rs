//! Exclusion-constrained Kac particle system for fermions, a discrete-velocity
//! Uehling–Uhlenbeck solver and checks of the limiting hierarchy operators.

pub mod error;
pub mod grid;
pub mod harness;
pub mod hierarchy;
pub mod initdata;
pub mod kernel;
pub mod observables;
pub mod process;
pub mod quad;
pub mod rng;
pub mod uu;
pub mod vec3;

pub use error::{Error, Result};
pub use grid::{build_occupancy, cell_of, is_admissible, CellGrid, CellIndex, OccupancyMap};
pub use harness::{run, Check, Experiment, ExperimentConfig, RunSummary};
pub use hierarchy::{
    apply_at, apply_c1, apply_c2, c3_nullity, check_c3_nullity, factorization_consistency,
    HierarchyOp, NullityReport, SymmetricGridFunction,
};
pub use initdata::{
    builtin_profiles, sample_conditioned_product, sample_two_scale, solve_a,
    ConditionedProductChain, LimitMarginal, OneParticleDensity, ProfileSpec, TwoScaleLayout,
    DEFAULT_RETRY_BUDGET,
};
pub use kernel::{collide, eval_kernel, sample_omega, CrossSectionSpec, KernelForm};
pub use observables::{
    apriori_bound, bootstrap, cell_average, chaos_defect, delta_norm, estimate_distance,
    estimate_marginal, estimate_marginal_in, field_entropy, l1_distance, t_factor, BootstrapStat,
    CompactBox, MarginalEstimate, ReplicaOccupancy,
};
pub use process::{
    admissible_rate_k2, generator_apply_k2, majorant_rate, EventCounters, EventOutcome,
    ParticleEnsemble, SimConfig,
};
pub use vec3::Vec3;
