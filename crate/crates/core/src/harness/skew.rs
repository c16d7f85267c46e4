//! Sampling distributions over (instance, arm) pairs for buffer collection.

use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::candidates::SuccessMatrix;
use crate::table::{ArmId, InstanceId};

/// Mass placed on the pairs that spuriously favour the target arm.
pub const SKEW_MASS: f64 = 0.9;

/// A distribution over (instance, arm). Row `i` refers to instance `i` of
/// the success matrix the skew is used with, so a two-row skew samples only
/// the known instances K1 and K2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewSpec {
    pub name: String,
    /// The arm this skew is built to favour, if any.
    #[serde(default)]
    pub target: Option<ArmId>,
    /// `probs[instance][arm]`.
    pub probs: Vec<Vec<f64>>,
}

impl SkewSpec {
    /// Checks shape, non-negativity and normalisation. Coverage is checked
    /// separately by [`SkewSpec::check_coverage`].
    pub fn new(name: impl Into<String>, target: Option<ArmId>, probs: Vec<Vec<f64>>) -> Result<Self, HarnessError> {
        let skew = Self { name: name.into(), target, probs };
        skew.validate()?;
        Ok(skew)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidSkew { name: self.name.clone(), message: m });
        let Some(width) = self.probs.first().map(Vec::len) else {
            return bad("no rows".into());
        };
        if width == 0 || self.probs.iter().any(|r| r.len() != width) {
            return bad("rows must be non-empty and equally long".into());
        }
        if let Some(t) = self.target {
            if t.0 >= width {
                return bad(format!("target arm {} out of range", t.0));
            }
        }
        if self.probs.iter().flatten().any(|&p| !p.is_finite() || p < 0.0) {
            return bad("probabilities must be finite and non-negative".into());
        }
        let total: f64 = self.probs.iter().flatten().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("probabilities sum to {total}, not 1"));
        }
        Ok(())
    }

    pub fn n_instances(&self) -> usize {
        self.probs.len()
    }

    pub fn n_arms(&self) -> usize {
        self.probs[0].len()
    }

    pub fn prob(&self, n: InstanceId, a: ArmId) -> f64 {
        self.probs[n.0][a.0]
    }

    pub fn arm_mass(&self, a: ArmId) -> f64 {
        self.probs.iter().map(|r| r[a.0]).sum()
    }

    pub fn instance_mass(&self, n: InstanceId) -> f64 {
        self.probs[n.0].iter().sum()
    }

    /// Every pair must have positive probability for rectification to be
    /// defined on the collected buffer.
    pub fn check_coverage(&self) -> Result<(), HarnessError> {
        for a in 0..self.n_arms() {
            if self.arm_mass(ArmId(a)) == 0.0 {
                return Err(HarnessError::ZeroArmMass { skew: self.name.clone(), arm: ArmId(a) });
            }
        }
        for (n, row) in self.probs.iter().enumerate() {
            if let Some(a) = row.iter().position(|&p| p == 0.0) {
                return Err(HarnessError::UncoveredPair { skew: self.name.clone(), instance: InstanceId(n), arm: ArmId(a) });
            }
        }
        Ok(())
    }

    pub fn sampler(&self) -> PairSampler {
        let width = self.n_arms();
        let index = WeightedIndex::new(self.probs.iter().flatten().copied()).expect("validated skew has positive mass");
        PairSampler { index, width }
    }
}

pub struct PairSampler {
    index: WeightedIndex<f64>,
    width: usize,
}

impl PairSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (InstanceId, ArmId) {
        let k = self.index.sample(rng);
        (InstanceId(k / self.width), ArmId(k % self.width))
    }
}

/// Uniform over the two known instances × four candidates, plus one preset
/// per non-optimal arm. A favouring preset puts [`SKEW_MASS`] evenly on
/// (K2, target) and (K1, every other arm): the target is then mostly seen
/// with the easy teammate and the rest mostly with the hard one.
pub fn builtin_skews() -> Vec<SkewSpec> {
    let uniform = SkewSpec::new("uniform", None, vec![vec![0.125; 4]; 2]).expect("valid");
    let mut skews = vec![uniform];
    for target in 1..4 {
        let hi = SKEW_MASS / 4.0;
        let lo = (1.0 - SKEW_MASS) / 4.0;
        let k1 = (0..4).map(|a| if a == target { lo } else { hi }).collect();
        let k2 = (0..4).map(|a| if a == target { hi } else { lo }).collect();
        let name = format!("favor-pi{}", target + 1);
        skews.push(SkewSpec::new(name, Some(ArmId(target)), vec![k1, k2]).expect("valid"));
    }
    skews
}

pub fn builtin_skew(name: &str) -> Option<SkewSpec> {
    builtin_skews().into_iter().find(|s| s.name == name)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewReport {
    pub skew: String,
    pub target: ArmId,
    /// Σ_n p(n | arm, skew) · rate(n, arm).
    pub confounded: Vec<f64>,
    /// Σ_n p(n | skew) · rate(n, arm).
    pub backdoor: Vec<f64>,
    pub confounded_argmax: ArmId,
    pub backdoor_argmax: ArmId,
    pub confounded_matches_target: bool,
    pub backdoor_is_first_arm: bool,
}

fn argmax(xs: &[f64]) -> ArmId {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    ArmId(best)
}

/// Confounded and backdoor per-arm values of `skew` over `matrix`.
pub fn validate_skew(matrix: &SuccessMatrix, skew: &SkewSpec, target: ArmId) -> Result<SkewReport, HarnessError> {
    skew.validate()?;
    if skew.n_arms() != matrix.n_arms() || skew.n_instances() > matrix.n_instances() {
        return Err(HarnessError::InvalidSkew {
            name: skew.name.clone(),
            message: format!(
                "{}×{} skew does not fit a {}×{} matrix",
                skew.n_instances(),
                skew.n_arms(),
                matrix.n_instances(),
                matrix.n_arms()
            ),
        });
    }
    skew.check_coverage()?;
    let instances = || (0..skew.n_instances()).map(InstanceId);
    let confounded: Vec<f64> = (0..skew.n_arms())
        .map(ArmId)
        .map(|a| {
            let mass = skew.arm_mass(a);
            instances().map(|n| skew.prob(n, a) / mass * matrix.rate(n, a)).sum()
        })
        .collect();
    let backdoor: Vec<f64> = (0..skew.n_arms())
        .map(ArmId)
        .map(|a| instances().map(|n| skew.instance_mass(n) * matrix.rate(n, a)).sum())
        .collect();
    let confounded_argmax = argmax(&confounded);
    let backdoor_argmax = argmax(&backdoor);
    Ok(SkewReport {
        skew: skew.name.clone(),
        target,
        confounded_argmax,
        backdoor_argmax,
        confounded_matches_target: confounded_argmax == target,
        backdoor_is_first_arm: backdoor_argmax == ArmId(0),
        confounded,
        backdoor,
    })
}
