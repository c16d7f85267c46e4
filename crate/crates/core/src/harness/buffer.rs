//! Replay buffers, selector training and the T-step deployment protocol.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::skew::SkewSpec;
use super::HarnessError;
use crate::candidates::{play_episode, synthetic_outcome, PolicySet, SuccessMatrix};
use crate::learners::{Learner, LearnerConfig, LearnerKind};
use crate::predprey::PredatorPrey;
use crate::rng::seeded;
use crate::table::{ArmId, InstanceId, InteractionRecord, TypeId};

/// Where episode outcomes come from.
#[derive(Clone, Copy)]
pub enum OutcomeSource<'a> {
    /// Bernoulli draws from a success matrix.
    Synthetic(&'a SuccessMatrix),
    /// Rolled-out predator-prey episodes between trained policies.
    FullSim { env: &'a PredatorPrey, policies: &'a PolicySet },
}

impl OutcomeSource<'_> {
    pub fn n_arms(&self) -> usize {
        match self {
            OutcomeSource::Synthetic(m) => m.n_arms(),
            OutcomeSource::FullSim { policies, .. } => policies.candidates.len(),
        }
    }

    pub fn n_instances(&self) -> usize {
        match self {
            OutcomeSource::Synthetic(m) => m.n_instances(),
            OutcomeSource::FullSim { policies, .. } => policies.instances.len(),
        }
    }

    /// +1 on success, −1 otherwise.
    pub fn outcome<R: Rng + ?Sized>(&self, instance: InstanceId, arm: ArmId, rng: &mut R) -> f64 {
        match self {
            OutcomeSource::Synthetic(m) => synthetic_outcome(m, instance, arm, rng),
            OutcomeSource::FullSim { env, policies } => {
                let ep = play_episode(env, policies.instance(instance), policies.candidate(arm), rng);
                if ep.is_joint_success() { 1.0 } else { -1.0 }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    pub skew: String,
    pub seed: u64,
    pub records: Vec<InteractionRecord>,
}

impl ReplayBuffer {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records per (instance, arm), as `[instance][arm]`.
    pub fn pair_counts(&self, n_instances: usize, n_arms: usize) -> Vec<Vec<usize>> {
        let mut counts = vec![vec![0; n_arms]; n_instances];
        for r in &self.records {
            let n = r.instance.expect("buffer records carry instances");
            counts[n.0][r.arm.0] += 1;
        }
        counts
    }
}

/// Draws `size` (instance, arm) pairs from `skew` and resolves each against
/// `source`. Fully determined by `seed`.
pub fn collect_buffer(source: &OutcomeSource, skew: &SkewSpec, size: usize, seed: u64) -> Result<ReplayBuffer, HarnessError> {
    skew.validate()?;
    if skew.n_arms() != source.n_arms() || skew.n_instances() > source.n_instances() {
        return Err(HarnessError::InvalidSkew {
            name: skew.name.clone(),
            message: "skew shape does not match the outcome source".into(),
        });
    }
    let mut rng = seeded(seed);
    let sampler = skew.sampler();
    let records = (0..size)
        .map(|_| {
            let (n, a) = sampler.sample(&mut rng);
            InteractionRecord::new(TypeId(0), n, a, source.outcome(n, a, &mut rng))
        })
        .collect();
    Ok(ReplayBuffer { skew: skew.name.clone(), seed, records })
}

/// Feeds the buffer to a fresh learner `epochs` times, in order.
pub fn train_selector(
    buffer: &ReplayBuffer,
    kind: LearnerKind,
    n_arms: usize,
    cfg: LearnerConfig,
    epochs: usize,
) -> Result<Learner, HarnessError> {
    if buffer.is_empty() {
        return Err(HarnessError::EmptyBuffer);
    }
    let mut learner = Learner::new(kind, n_arms, cfg);
    for _ in 0..epochs {
        for r in &buffer.records {
            learner.observe(r)?;
        }
    }
    Ok(learner)
}

/// Most frequent arm; ties to the lowest index.
pub fn majority_vote(choices: &[ArmId], n_arms: usize) -> ArmId {
    let mut counts = vec![0usize; n_arms];
    for c in choices {
        counts[c.0] += 1;
    }
    let mut best = 0;
    for (a, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = a;
        }
    }
    ArmId(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub t: u32,
    /// Fraction of episodes committing to each arm.
    pub proportions: Vec<f64>,
    pub mean_success: f64,
}

/// Deployment against an unknown teammate: for each episode the selector
/// reads out its greedy arm on each of `t` no-op steps, commits to the
/// majority, and the outcome is drawn against `unknown`.
pub fn deploy<R: Rng + ?Sized>(
    selector: &Learner,
    source: &OutcomeSource,
    unknown: InstanceId,
    t: u32,
    episodes: usize,
    rng: &mut R,
) -> Selection {
    let n_arms = selector.n_arms();
    let mut picks = vec![0usize; n_arms];
    let mut successes = 0usize;
    let mut window = Vec::with_capacity(t as usize);
    for _ in 0..episodes {
        window.clear();
        // The teammate is passive during the window, so the readout does not
        // depend on the step.
        window.extend((0..t).map(|_| selector.preferred_arm()));
        let arm = majority_vote(&window, n_arms);
        picks[arm.0] += 1;
        if source.outcome(unknown, arm, rng) > 0.0 {
            successes += 1;
        }
    }
    let denom = episodes.max(1) as f64;
    Selection {
        t,
        proportions: picks.iter().map(|&c| c as f64 / denom).collect(),
        mean_success: successes as f64 / denom,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::{K2, U};
    use crate::harness::skew::{builtin_skew, builtin_skews};
    use crate::rng::seeded;

    fn pm_config() -> LearnerConfig {
        LearnerConfig { reward_range: (-1.0, 1.0), ..LearnerConfig::default() }
    }

    #[test]
    fn uniform_buffer_pair_counts() {
        let m = SuccessMatrix::reference();
        let buf = collect_buffer(&OutcomeSource::Synthetic(&m), &builtin_skews()[0], 10_000, 3).unwrap();
        assert_eq!(buf.len(), 10_000);
        for row in buf.pair_counts(3, 4).iter().take(2) {
            for &c in row {
                assert!((1100..=1400).contains(&c), "{c}");
            }
        }
        // U is never sampled.
        assert!(buf.pair_counts(3, 4)[2].iter().all(|&c| c == 0));
    }

    #[test]
    fn buffers_are_seed_determined() {
        let m = SuccessMatrix::reference();
        let src = OutcomeSource::Synthetic(&m);
        let skew = builtin_skew("favor-pi3").unwrap();
        assert_eq!(collect_buffer(&src, &skew, 500, 9).unwrap(), collect_buffer(&src, &skew, 500, 9).unwrap());
        assert_ne!(collect_buffer(&src, &skew, 500, 9).unwrap(), collect_buffer(&src, &skew, 500, 10).unwrap());
        assert!(collect_buffer(&src, &skew, 0, 9).unwrap().is_empty());
    }

    #[test]
    fn selectors_on_favor_pi2_buffer() {
        let m = SuccessMatrix::reference();
        let buf = collect_buffer(&OutcomeSource::Synthetic(&m), &builtin_skew("favor-pi2").unwrap(), 10_000, 1).unwrap();
        let ctcat = train_selector(&buf, LearnerKind::CtcatQ, 4, pm_config(), 1).unwrap();
        let vanilla = train_selector(&buf, LearnerKind::VanillaQ, 4, pm_config(), 1).unwrap();
        assert_eq!(ctcat.preferred_arm(), ArmId(0));
        assert_eq!(vanilla.preferred_arm(), ArmId(1));
    }

    #[test]
    fn empty_buffer_is_rejected() {
        let buf = ReplayBuffer { skew: "x".into(), seed: 0, records: vec![] };
        assert!(matches!(
            train_selector(&buf, LearnerKind::VanillaQ, 4, pm_config(), 1),
            Err(HarnessError::EmptyBuffer)
        ));
    }

    #[test]
    fn majority_ties_go_low() {
        assert_eq!(majority_vote(&[ArmId(2), ArmId(1), ArmId(2), ArmId(1)], 4), ArmId(1));
        assert_eq!(majority_vote(&[ArmId(3), ArmId(3), ArmId(0)], 4), ArmId(3));
        assert_eq!(majority_vote(&[], 4), ArmId(0));
    }

    #[test]
    fn deploying_pi1_against_unknown_matches_matrix() {
        let m = SuccessMatrix::reference();
        let mut buf = collect_buffer(&OutcomeSource::Synthetic(&m), &builtin_skews()[0], 2_000, 5).unwrap();
        // Make π1 the only arm with positive feedback.
        for r in &mut buf.records {
            r.reward = if r.arm == ArmId(0) { 1.0 } else { -1.0 };
        }
        let selector = train_selector(&buf, LearnerKind::VanillaQ, 4, pm_config(), 1).unwrap();
        let sel = deploy(&selector, &OutcomeSource::Synthetic(&m), U, 10, 10_000, &mut seeded(2));
        assert_eq!(sel.proportions, vec![1.0, 0.0, 0.0, 0.0]);
        assert!((sel.mean_success - 0.73).abs() < 0.02, "{}", sel.mean_success);
        let sel = deploy(&selector, &OutcomeSource::Synthetic(&m), K2, 5, 10_000, &mut seeded(2));
        assert!((sel.mean_success - 0.96).abs() < 0.01);
    }
}
