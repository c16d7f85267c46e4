//! Instance-wise teammate feedback rectification.
//!
//! The outcome of a policy π against a type θ is confounded by which
//! instances n happened to be paired with π. Multiplying each reward by
//!
//! ```text
//! w(π, n) = p(π | θ) / p(π | θ, n)  =  p(n | θ) / p(n | π, θ)
//! ```
//!
//! turns the practical expectation Σ_n p(y|π,n)·p(n|π,θ) into the backdoor
//! value Σ_n p(y|π,n)·p(n|θ). [`CountTable`] tracks the two propensities
//! online; [`backdoor_value`], [`confounded_value`] and
//! [`weight_closed_form`] are the exact table-level counterparts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{ArmId, ContingencyTable, InstanceId, InteractionRecord, TypeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RectifyError {
    #[error("propensity of arm {arm} given instance {instance} is undefined (no observations, smoothing 0)")]
    UndefinedPropensity { instance: InstanceId, arm: ArmId },

    #[error("instance {instance:?} has no trials under arm {arm:?}")]
    Uncovered { instance: String, arm: String },

    #[error("arm {0:?} was never tried")]
    ArmNeverTried(String),

    #[error("record has no instance label; the confounder must be observed")]
    ConfounderUnobserved,

    #[error("invalid weight config: {0}")]
    InvalidConfig(String),
}

// ── Runtime counters ────────────────────────────────────────────────────

/// Counters C(π|θ) and C(π|θ,n) for one teammate type.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTable {
    type_id: TypeId,
    c_arm: Vec<u64>,
    /// `[instance][arm]`, grown as new instances appear.
    c_arm_instance: Vec<Vec<u64>>,
    total: u64,
}

impl CountTable {
    pub fn new(type_id: TypeId, n_arms: usize) -> Self {
        assert!(n_arms > 0, "arm set must be non-empty");
        Self { type_id, c_arm: vec![0; n_arms], c_arm_instance: Vec::new(), total: 0 }
    }

    /// Counters initialised with a table's trial counts.
    pub fn from_table(table: &ContingencyTable) -> Self {
        let mut counts = Self::new(table.type_id(), table.n_arms());
        for n in table.instances() {
            for a in table.arms() {
                counts.add(n, a, table.cell(n, a).trials);
            }
        }
        counts
    }

    pub fn type_id(&self) -> TypeId {
        self.type_id
    }

    pub fn n_arms(&self) -> usize {
        self.c_arm.len()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn c_arm(&self, arm: ArmId) -> u64 {
        self.c_arm[arm.0]
    }

    pub fn c_arm_instance(&self, instance: InstanceId, arm: ArmId) -> u64 {
        self.c_arm_instance.get(instance.0).map_or(0, |row| row[arm.0])
    }

    pub fn c_instance(&self, instance: InstanceId) -> u64 {
        self.c_arm_instance.get(instance.0).map_or(0, |row| row.iter().sum())
    }

    /// Records one (instance, arm) observation. Panics if `arm` is outside
    /// the arm set.
    pub fn update(&mut self, instance: InstanceId, arm: ArmId) {
        self.add(instance, arm, 1);
    }

    fn add(&mut self, instance: InstanceId, arm: ArmId, k: u64) {
        assert!(arm.0 < self.n_arms(), "arm {arm} outside arm set of size {}", self.n_arms());
        if self.c_arm_instance.len() <= instance.0 {
            self.c_arm_instance.resize(instance.0 + 1, vec![0; self.n_arms()]);
        }
        self.c_arm[arm.0] += k;
        self.c_arm_instance[instance.0][arm.0] += k;
        self.total += k;
    }
}

/// Functional form of [`CountTable::update`].
pub fn update_counts(mut counts: CountTable, instance: InstanceId, arm: ArmId) -> CountTable {
    counts.update(instance, arm);
    counts
}

// ── Weight ──────────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightConfig {
    /// Add-k pseudo-count per arm on both counters.
    pub smoothing: f64,
    /// Upper bound on the weight; `None` disables clipping.
    pub weight_cap: Option<f64>,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self { smoothing: 1.0, weight_cap: Some(20.0) }
    }
}

impl WeightConfig {
    pub fn new(smoothing: f64, weight_cap: Option<f64>) -> Result<Self, RectifyError> {
        let cfg = Self { smoothing, weight_cap };
        cfg.validate()?;
        Ok(cfg)
    }

    /// No smoothing and no cap: the raw propensity ratio.
    pub fn exact() -> Self {
        Self { smoothing: 0.0, weight_cap: None }
    }

    pub fn validate(&self) -> Result<(), RectifyError> {
        if !(self.smoothing >= 0.0 && self.smoothing.is_finite()) {
            return Err(RectifyError::InvalidConfig(format!("smoothing must be >= 0, got {}", self.smoothing)));
        }
        if let Some(cap) = self.weight_cap {
            if cap.is_nan() || cap <= 0.0 {
                return Err(RectifyError::InvalidConfig(format!("weight cap must be > 0, got {cap}")));
            }
        }
        Ok(())
    }
}

/// min(cap, p̂(π|θ) / p̂(π|θ,n)) with add-k smoothing over the arm set.
pub fn weight(counts: &CountTable, instance: InstanceId, arm: ArmId, cfg: &WeightConfig) -> Result<f64, RectifyError> {
    let k = cfg.smoothing;
    let arms = counts.n_arms() as f64;
    let c_pair = counts.c_arm_instance(instance, arm);
    if k == 0.0 && c_pair == 0 {
        return Err(RectifyError::UndefinedPropensity { instance, arm });
    }
    let p_arm = (counts.c_arm(arm) as f64 + k) / (counts.total() as f64 + k * arms);
    let p_arm_given_instance = (c_pair as f64 + k) / (counts.c_instance(instance) as f64 + k * arms);
    let w = p_arm / p_arm_given_instance;
    Ok(cfg.weight_cap.map_or(w, |cap| w.min(cap)))
}

/// record.reward × w(instance, arm).
pub fn rectify_reward(counts: &CountTable, record: &InteractionRecord, cfg: &WeightConfig) -> Result<f64, RectifyError> {
    let instance = record.instance.ok_or(RectifyError::ConfounderUnobserved)?;
    Ok(record.reward * weight(counts, instance, record.arm, cfg)?)
}

// ── Closed-form oracles ─────────────────────────────────────────────────

/// Σ_n p(y|π,n)·p(n|θ): the value of π under intervention.
pub fn backdoor_value(table: &ContingencyTable, arm: ArmId) -> Result<f64, RectifyError> {
    let m = table.marginals();
    let mut value = 0.0;
    for n in table.instances() {
        if m.instance_trials(n) == 0 {
            continue;
        }
        if !m.is_covered(n, arm) {
            return Err(uncovered(table, n, arm));
        }
        value += m.success_rate(n, arm) * m.p_instance_given_type(n);
    }
    Ok(value)
}

/// Σ_n p(y|π,n)·p(n|π,θ), i.e. the aggregate success rate of π.
pub fn confounded_value(table: &ContingencyTable, arm: ArmId) -> Result<f64, RectifyError> {
    let m = table.marginals();
    let trials = m.arm_trials(arm);
    if trials == 0 {
        return Err(RectifyError::ArmNeverTried(table.arm_name(arm).to_string()));
    }
    Ok(m.arm_successes(arm) as f64 / trials as f64)
}

/// p(n|θ) / p(n|π,θ).
pub fn weight_closed_form(table: &ContingencyTable, arm: ArmId, instance: InstanceId) -> Result<f64, RectifyError> {
    let m = table.marginals();
    if !m.is_covered(instance, arm) {
        return Err(uncovered(table, instance, arm));
    }
    let p_given_arm = m.p_instance_given_arm(arm, instance).expect("covered cell implies arm trials");
    Ok(m.p_instance_given_type(instance) / p_given_arm)
}

fn uncovered(table: &ContingencyTable, n: InstanceId, a: ArmId) -> RectifyError {
    RectifyError::Uncovered { instance: table.instance_name(n).to_string(), arm: table.arm_name(a).to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{builtin_scenario, load_contingency_table};

    fn kidney() -> ContingencyTable {
        builtin_scenario("kidney").unwrap()
    }

    fn ids(t: &ContingencyTable, n: &str, a: &str) -> (InstanceId, ArmId) {
        (t.instance_by_name(n).unwrap(), t.arm_by_name(a).unwrap())
    }

    #[test]
    fn first_update_sets_both_counters() {
        let c = update_counts(CountTable::new(TypeId(0), 2), InstanceId(0), ArmId(0));
        assert_eq!(c.c_arm(ArmId(0)), 1);
        assert_eq!(c.c_arm_instance(InstanceId(0), ArmId(0)), 1);
        assert_eq!(c.total(), 1);
    }

    #[test]
    fn update_increments_only_the_observed_pair() {
        let mut c = CountTable::new(TypeId(0), 2);
        for _ in 0..5 {
            c.update(InstanceId(0), ArmId(0));
        }
        c.update(InstanceId(1), ArmId(0));
        assert_eq!(c.c_arm(ArmId(0)), 6);
        assert_eq!(c.c_arm(ArmId(1)), 0);
        assert_eq!(c.c_arm_instance(InstanceId(1), ArmId(0)), 1);
        assert_eq!(c.c_arm_instance(InstanceId(1), ArmId(1)), 0);
    }

    #[test]
    fn kidney_weights_from_counts() {
        let t = kidney();
        let counts = CountTable::from_table(&t);
        let cfg = WeightConfig::exact();
        let (small, open) = ids(&t, "small", "open");
        let (large, closed) = ids(&t, "large", "closed");
        // 0.5 / (87/357) and 0.5 / (80/343)
        assert!((weight(&counts, small, open, &cfg).unwrap() - 357.0 / 174.0).abs() < 1e-12);
        assert!((weight(&counts, large, closed, &cfg).unwrap() - 343.0 / 160.0).abs() < 1e-12);
        assert!((weight(&counts, small, open, &cfg).unwrap() - 2.0517).abs() < 1e-4);
        assert!((weight(&counts, large, closed, &cfg).unwrap() - 2.1437).abs() < 1e-4);
    }

    #[test]
    fn unobserved_pair_without_smoothing_is_an_error() {
        let counts = update_counts(CountTable::new(TypeId(0), 2), InstanceId(0), ArmId(0));
        let err = weight(&counts, InstanceId(0), ArmId(1), &WeightConfig::exact()).unwrap_err();
        assert!(matches!(err, RectifyError::UndefinedPropensity { .. }));
        let empty = CountTable::new(TypeId(0), 2);
        assert!(weight(&empty, InstanceId(0), ArmId(0), &WeightConfig::exact()).is_err());
        // With smoothing an empty table gives uniform propensities.
        assert_eq!(weight(&empty, InstanceId(0), ArmId(0), &WeightConfig::default()).unwrap(), 1.0);
    }

    #[test]
    fn proportional_assignment_gives_unit_weights() {
        let mut c = CountTable::new(TypeId(0), 2);
        for (n, reps) in [(0, 3), (1, 7)] {
            for _ in 0..reps {
                c.update(InstanceId(n), ArmId(0));
                c.update(InstanceId(n), ArmId(1));
            }
        }
        for n in 0..2 {
            for a in 0..2 {
                let w = weight(&c, InstanceId(n), ArmId(a), &WeightConfig::default()).unwrap();
                assert!((w - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn weight_cap_clips() {
        let mut c = CountTable::new(TypeId(0), 2);
        for _ in 0..100 {
            c.update(InstanceId(0), ArmId(0));
        }
        c.update(InstanceId(1), ArmId(1));
        c.update(InstanceId(1), ArmId(0));
        let cfg = WeightConfig::new(0.0, Some(1.5)).unwrap();
        assert_eq!(weight(&c, InstanceId(1), ArmId(0), &cfg).unwrap(), 1.5);
        assert!(WeightConfig::new(-1.0, None).is_err());
        assert!(WeightConfig::new(1.0, Some(0.0)).is_err());
    }

    #[test]
    fn rectified_rewards() {
        let t = kidney();
        let counts = CountTable::from_table(&t);
        let cfg = WeightConfig::exact();
        let (small, open) = ids(&t, "small", "open");
        let one = InteractionRecord::new(TypeId(0), small, open, 1.0);
        assert!((rectify_reward(&counts, &one, &cfg).unwrap() - 2.0517).abs() < 1e-4);
        let zero = InteractionRecord { reward: 0.0, ..one };
        assert_eq!(rectify_reward(&counts, &zero, &cfg).unwrap(), 0.0);
        let hidden = InteractionRecord { instance: None, ..one };
        assert_eq!(rectify_reward(&counts, &hidden, &cfg), Err(RectifyError::ConfounderUnobserved));

        let mut uniform = CountTable::new(TypeId(0), 2);
        for n in 0..2 {
            for a in 0..2 {
                uniform.update(InstanceId(n), ArmId(a));
            }
        }
        let r = InteractionRecord::new(TypeId(0), InstanceId(1), ArmId(0), 1.0);
        assert_eq!(rectify_reward(&uniform, &r, &cfg).unwrap(), 1.0);
    }

    #[test]
    fn kidney_oracles() {
        let t = kidney();
        let (_, open) = ids(&t, "small", "open");
        let closed = t.arm_by_name("closed").unwrap();
        // 0.51·81/87 + 0.49·192/263 and 0.51·234/270 + 0.49·55/80
        let bd_open = 0.51 * 81.0 / 87.0 + 0.49 * 192.0 / 263.0;
        let bd_closed = 0.51 * 234.0 / 270.0 + 0.49 * 55.0 / 80.0;
        assert!((backdoor_value(&t, open).unwrap() - bd_open).abs() < 1e-12);
        assert!((backdoor_value(&t, closed).unwrap() - bd_closed).abs() < 1e-12);
        assert!((backdoor_value(&t, open).unwrap() - 0.8325).abs() < 1e-4);
        assert!((backdoor_value(&t, closed).unwrap() - 0.7789).abs() < 1e-4);
        assert_eq!(confounded_value(&t, open).unwrap(), 273.0 / 350.0);
        assert_eq!(confounded_value(&t, closed).unwrap(), 289.0 / 350.0);
    }

    #[test]
    fn magazine_oracles() {
        let t = builtin_scenario("magazine").unwrap();
        let jan = t.arm_by_name("january").unwrap();
        let feb = t.arm_by_name("february").unwrap();
        assert!((backdoor_value(&t, jan).unwrap() - 0.541_254_877_081_705_6).abs() < 1e-12);
        assert!((backdoor_value(&t, feb).unwrap() - 0.492_904_002_059_614_6).abs() < 1e-12);
        assert!((confounded_value(&t, feb).unwrap() - 5869.0 / 9157.0).abs() < 1e-15);
        assert!((confounded_value(&t, feb).unwrap() - 0.641).abs() < 1e-3);
    }

    #[test]
    fn closed_form_weights() {
        let t = kidney();
        let (small, open) = ids(&t, "small", "open");
        let closed = t.arm_by_name("closed").unwrap();
        assert!((weight_closed_form(&t, open, small).unwrap() - 2.0517).abs() < 1e-4);
        // (357/700) / (270/350)
        let expected = (357.0 / 700.0) / (270.0 / 350.0);
        assert!((weight_closed_form(&t, closed, small).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.6611).abs() < 1e-4);
    }

    #[test]
    fn coverage_failures_name_the_cell() {
        let src = "instance,arm,successes,trials\nn0,a0,1,2\nn1,a0,1,2\nn1,a1,1,1\n";
        let t = load_contingency_table(src.as_bytes()).unwrap();
        match backdoor_value(&t, ArmId(1)).unwrap_err() {
            RectifyError::Uncovered { instance, .. } => assert_eq!(instance, "n0"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(weight_closed_form(&t, ArmId(1), InstanceId(0)).is_err());
        let src = "instance,arm,successes,trials\nn0,a0,1,2\nn0,a1,0,0\n";
        let t = load_contingency_table(src.as_bytes()).unwrap();
        assert!(matches!(confounded_value(&t, ArmId(1)), Err(RectifyError::ArmNeverTried(_))));
    }

    #[test]
    fn balanced_table_has_unit_closed_form_weights() {
        let src = "instance,arm,successes,trials\nn0,a0,3,10\nn0,a1,9,10\nn1,a0,20,30\nn1,a1,1,30\n";
        let t = load_contingency_table(src.as_bytes()).unwrap();
        for a in t.arms() {
            for n in t.instances() {
                assert!((weight_closed_form(&t, a, n).unwrap() - 1.0).abs() < 1e-12);
            }
            assert!((backdoor_value(&t, a).unwrap() - confounded_value(&t, a).unwrap()).abs() < 1e-12);
        }
    }
}
