//! Small enumerable two-tier MDPs with exact oracles, used to check the
//! convergence and policy-improvement results numerically.

pub mod iterate;
pub mod lemma;
pub mod mdp;
pub mod prop1;
pub mod suite;

pub use iterate::{
    check_martingale, check_theorem2, corollary1_time, policy_convergence, theorem2_bound, two_timescale_iterate,
    IterateConfig, IterateTrace, MartingaleReport, StepSizes, Theorem2Report, TierBoundParams,
};
pub use lemma::{check_lemma1, CoupledUpdate, Lemma1Report};
pub use mdp::{value_iteration_oracle, Equilibrium, FiniteMdp, InstanceShape, Policy, TabularTTMDP};
pub use prop1::{check_proposition1, Prop1Report};
pub use suite::{run_suite, SuiteConfig, SuiteReport};
