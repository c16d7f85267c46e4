//! Confounded bandit environments generated from a contingency table.
//!
//! In *logged* mode the (instance, arm) pair of each record follows the
//! table's historical joint distribution. In *interactive* mode the learner
//! picks the arm and the instance is drawn from p(n | π, θ), the historical
//! assignment mechanism. Either way the instance label is returned with the
//! record.

use rand::Rng;
use rand_distr::{Distribution, Normal, weighted::WeightedIndex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{ArmId, ContingencyTable, InstanceId, InteractionRecord, Marginals};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("arm {0:?} has no trials in the base table")]
    UncoveredArm(String),

    #[error("arm {arm} outside arm set of size {n_arms}")]
    UnknownArm { arm: ArmId, n_arms: usize },

    #[error("noise sigma must be finite and >= 0, got {0}")]
    InvalidSigma(f64),
}

/// How probability noise is applied.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// One draw per cell, fixed for the life of the run.
    PerCell,
    /// A fresh draw added to the cell probability for every outcome.
    #[default]
    PerSample,
}

/// Success probabilities per cell, optionally perturbed by N(0, σ).
#[derive(Clone, Debug)]
pub struct NoisyRateTable {
    base: ContingencyTable,
    /// Row-major `[instance][arm]`, clamped to [0, 1].
    rates: Vec<f64>,
    sigma: f64,
    mode: NoiseMode,
    cell_sampler: WeightedIndex<u64>,
}

/// Perturbs every cell rate once with N(0, σ) and clamps to [0, 1].
pub fn apply_noise<R: Rng + ?Sized>(table: &ContingencyTable, sigma: f64, rng: &mut R) -> Result<NoisyRateTable, EnvError> {
    NoisyRateTable::new(table, sigma, NoiseMode::PerCell, rng)
}

impl NoisyRateTable {
    pub fn new<R: Rng + ?Sized>(
        table: &ContingencyTable,
        sigma: f64,
        mode: NoiseMode,
        rng: &mut R,
    ) -> Result<Self, EnvError> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(EnvError::InvalidSigma(sigma));
        }
        let m = table.marginals();
        let mut rates = Vec::with_capacity(table.n_instances() * table.n_arms());
        let noise = Normal::new(0.0, sigma).expect("sigma validated");
        for n in table.instances() {
            for a in table.arms() {
                let mut p = m.success_rate(n, a);
                if mode == NoiseMode::PerCell && sigma > 0.0 {
                    p = (p + noise.sample(rng)).clamp(0.0, 1.0);
                }
                rates.push(p);
            }
        }
        let weights: Vec<u64> = table
            .instances()
            .flat_map(|n| table.arms().map(move |a| (n, a)))
            .map(|(n, a)| table.cell(n, a).trials)
            .collect();
        let cell_sampler = WeightedIndex::new(weights).expect("table has trials");
        Ok(Self { base: table.clone(), rates, sigma, mode, cell_sampler })
    }

    /// Exact base rates.
    pub fn exact(table: &ContingencyTable) -> Self {
        let mut rng = crate::rng::seeded(0);
        Self::new(table, 0.0, NoiseMode::PerCell, &mut rng).expect("sigma 0 is valid")
    }

    pub fn base(&self) -> &ContingencyTable {
        &self.base
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn mode(&self) -> NoiseMode {
        self.mode
    }

    /// Cell probability before any per-sample noise.
    pub fn rate(&self, n: InstanceId, a: ArmId) -> f64 {
        self.rates[n.0 * self.base.n_arms() + a.0]
    }

    /// Bernoulli draw of the cell's outcome, 1.0 or 0.0.
    pub fn draw_reward<R: Rng + ?Sized>(&self, n: InstanceId, a: ArmId, rng: &mut R) -> f64 {
        let mut p = self.rate(n, a);
        if self.mode == NoiseMode::PerSample && self.sigma > 0.0 {
            let noise = Normal::new(0.0, self.sigma).expect("sigma validated");
            p = (p + noise.sample(rng)).clamp(0.0, 1.0);
        }
        if rng.random::<f64>() < p { 1.0 } else { 0.0 }
    }

    /// One record from the historical joint: (n, π) with probability
    /// trials(n, π) / Σ trials, reward ~ Bernoulli(rate).
    pub fn sample_logged_record<R: Rng + ?Sized>(&self, rng: &mut R) -> InteractionRecord {
        let idx = self.cell_sampler.sample(rng);
        let n = InstanceId(idx / self.base.n_arms());
        let a = ArmId(idx % self.base.n_arms());
        let reward = self.draw_reward(n, a, rng);
        InteractionRecord::new(self.base.type_id(), n, a, reward)
    }
}

/// Arm-driven environment: instance ~ p(n | π, θ).
#[derive(Clone, Debug)]
pub struct InteractiveEnv {
    rates: NoisyRateTable,
    instance_samplers: Vec<Option<WeightedIndex<u64>>>,
}

impl InteractiveEnv {
    pub fn new(rates: NoisyRateTable) -> Self {
        let table = rates.base();
        let instance_samplers = table
            .arms()
            .map(|a| WeightedIndex::new(table.instances().map(|n| table.cell(n, a).trials)).ok())
            .collect();
        Self { rates, instance_samplers }
    }

    pub fn rates(&self) -> &NoisyRateTable {
        &self.rates
    }

    pub fn marginals(&self) -> Marginals<'_> {
        self.rates.base().marginals()
    }

    pub fn n_arms(&self) -> usize {
        self.instance_samplers.len()
    }

    pub fn step<R: Rng + ?Sized>(&self, arm: ArmId, rng: &mut R) -> Result<InteractionRecord, EnvError> {
        let sampler = self
            .instance_samplers
            .get(arm.0)
            .ok_or(EnvError::UnknownArm { arm, n_arms: self.n_arms() })?
            .as_ref()
            .ok_or_else(|| EnvError::UncoveredArm(self.rates.base().arm_name(arm).to_string()))?;
        let n = InstanceId(sampler.sample(rng));
        let reward = self.rates.draw_reward(n, arm, rng);
        Ok(InteractionRecord::new(self.rates.base().type_id(), n, arm, reward))
    }
}

/// Free-function form of [`InteractiveEnv::step`].
pub fn env_step<R: Rng + ?Sized>(env: &InteractiveEnv, arm: ArmId, rng: &mut R) -> Result<InteractionRecord, EnvError> {
    env.step(arm, rng)
}
