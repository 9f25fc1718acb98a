//! The full theory suite behind the `verify` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::iterate::{
    check_martingale, check_theorem2, policy_convergence, two_timescale_iterate, IterateConfig, MartingaleReport,
    PolicyConvergence, Theorem2Report,
};
use super::lemma::{check_lemma1, CoupledUpdate, Lemma1Report};
use super::mdp::{random_policy, InstanceShape, TabularTTMDP};
use super::prop1::{check_proposition1, Prop1Report};
use crate::environment::mix_seed;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seeds: u64,
    pub delta: f64,
    pub iterate: IterateConfig,
    pub lemma_instances: u64,
    pub lemma_pairs: usize,
    pub prop1_instances: u64,
    pub prop1_stages: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seeds: 100,
            delta: 0.05,
            iterate: IterateConfig::default(),
            lemma_instances: 5,
            lemma_pairs: 100,
            prop1_instances: 5,
            prop1_stages: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub theorem2: Theorem2Report,
    pub policies: PolicyConvergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub seeds: Vec<SeedResult>,
    pub passing_seeds: usize,
    /// Passing seeds whose greedy policies settle on the equilibrium.
    pub passing_with_policy_match: usize,
    pub martingale: MartingaleReport,
}

impl ConvergenceSummary {
    /// At least 95% of seeds under both bounds, and every passing seed's
    /// greedy policies settled.
    pub fn pass(&self) -> bool {
        let n = self.seeds.len();
        self.passing_seeds * 100 >= 95 * n && self.passing_with_policy_match == self.passing_seeds
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub convergence: ConvergenceSummary,
    pub lemma1: Vec<Lemma1Report>,
    pub lemma1_violations: usize,
    pub prop1: Vec<Prop1Report>,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.convergence.pass()
            && self.convergence.martingale.pass()
            && self.lemma1_violations == 0
            && self.prop1.iter().all(Prop1Report::pass)
    }
}

/// Two-time-scale iterate on the default instance over `cfg.seeds` seeds.
pub fn convergence_suite(cfg: &SuiteConfig) -> Result<ConvergenceSummary> {
    let mdp = TabularTTMDP::default_instance();
    let eq = mdp.unique_equilibrium()?;
    let mut seeds = Vec::new();
    let mut martingale = None;
    for seed in 0..cfg.seeds {
        let trace = two_timescale_iterate(&mdp, &IterateConfig { seed, ..cfg.iterate.clone() })?;
        if seed == 0 {
            martingale = Some(check_martingale(&trace)?);
        }
        seeds.push(SeedResult {
            seed,
            theorem2: check_theorem2(&trace, &mdp, &eq, cfg.delta),
            policies: policy_convergence(&trace, &eq),
        });
    }
    let passing: Vec<_> = seeds.iter().filter(|s| s.theorem2.pass()).collect();
    Ok(ConvergenceSummary {
        passing_seeds: passing.len(),
        passing_with_policy_match: passing.iter().filter(|s| s.policies.n0.is_some()).count(),
        seeds,
        martingale: martingale.expect("seeds ≥ 1"),
    })
}

/// Instance `i` of the Lemma 1 suite: `T` cycles through 2..=4.
pub fn lemma_instance(i: u64) -> TabularTTMDP {
    let shape = InstanceShape {
        cycle_len: 2 + (i % 3) as usize,
        ..Default::default()
    };
    TabularTTMDP::random(100 + i, shape, 0.9, 0.5)
}

/// Random α-coupled updates with `α_L, α_H ∼ U[0, 1]`.
pub fn lemma_suite(cfg: &SuiteConfig) -> Result<Vec<Lemma1Report>> {
    let mut out = Vec::new();
    for i in 0..cfg.lemma_instances {
        let mdp = lemma_instance(i);
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(i, 0x1e));
        for _ in 0..cfg.lemma_pairs {
            let update = CoupledUpdate {
                policy_high: random_policy(&mut rng, mdp.n_high_states, mdp.n_high_actions),
                old_low: random_policy(&mut rng, mdp.n_low_states, mdp.n_low_actions),
                target_low: random_policy(&mut rng, mdp.n_low_states, mdp.n_low_actions),
                alpha_low: rng.random(),
                alpha_high: rng.random(),
            };
            out.push(check_lemma1(&mdp, &update, 1e-9)?);
        }
    }
    Ok(out)
}

pub fn prop1_instance(i: u64) -> TabularTTMDP {
    TabularTTMDP::random(200 + i, InstanceShape::default(), 0.8, 0.3)
}

/// Sequential updating from random deterministic initial policies.
pub fn prop1_suite(cfg: &SuiteConfig) -> Result<Vec<Prop1Report>> {
    (0..cfg.prop1_instances)
        .map(|i| {
            let mdp = prop1_instance(i);
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(i, 0x91));
            let init_high: Vec<usize> = (0..mdp.n_high_states).map(|_| rng.random_range(0..mdp.n_high_actions)).collect();
            let init_low: Vec<usize> = (0..mdp.n_low_states).map(|_| rng.random_range(0..mdp.n_low_actions)).collect();
            check_proposition1(&mdp, &init_high, &init_low, cfg.prop1_stages)
        })
        .collect()
}

pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let lemma1 = lemma_suite(cfg)?;
    Ok(SuiteReport {
        convergence: convergence_suite(cfg)?,
        lemma1_violations: lemma1.iter().filter(|r| !r.holds()).count(),
        lemma1,
        prop1: prop1_suite(cfg)?,
    })
}
