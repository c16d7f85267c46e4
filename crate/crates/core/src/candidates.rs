//! Candidate policies and teammate instances for the predator-prey setting.
//!
//! Every policy is a goal-conditioned tabular Q function trained by
//! self-play. A policy chases one prey from its goal set at a time: the goal
//! prey with the smallest summed wrapped distance to itself and its teammate
//! (ties to the lowest index), re-chosen every step. The Q table is keyed on
//! the offset to that prey plus the teammate's offset when it is within two
//! cells.
//!
//! [`SuccessMatrix`] records instance × candidate success rates; in synthetic
//! mode it is used directly as Bernoulli parameters.

use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predprey::{Action, EnvState, GoalSet, GridConfig, PredPreyError, PredatorPrey, N_PREDATORS};
use crate::rng::{derive_rng, SimRng};
use crate::table::{ArmId, InstanceId};

#[derive(Debug, Error)]
pub enum CandidateError {
    #[error("policy for goals {goals} reached self-play success {achieved:.3} after {episodes} episodes, below floor {floor:.3}")]
    ConvergenceFailure { goals: GoalSet, achieved: f64, floor: f64, episodes: usize },

    #[error("invalid training hyperparameters: {0}")]
    InvalidHyper(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("matrix entry ({instance}, {arm}) = {rate} is outside [0, 1]")]
    RateOutOfRange { instance: String, arm: String, rate: f64 },

    #[error("matrix has no entry for ({instance}, {arm})")]
    MissingEntry { instance: String, arm: String },

    #[error(transparent)]
    Env(#[from] PredPreyError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ── Goal lists ──────────────────────────────────────────────────────────

/// Teammate instances: K1 and K2 are known, U is held out for evaluation.
pub const INSTANCE_GOALS: [(&str, &[usize]); 3] = [("K1", &[1, 4]), ("K2", &[1, 2, 3]), ("U", &[1, 2, 4])];

/// Candidate policies π1..π4. Only π1 contains prey 1, the goal shared by
/// every instance.
pub const CANDIDATE_GOALS: [(&str, &[usize]); 4] = [("pi1", &[1, 2, 3]), ("pi2", &[2, 3]), ("pi3", &[2]), ("pi4", &[3])];

pub const K1: InstanceId = InstanceId(0);
pub const K2: InstanceId = InstanceId(1);
pub const U: InstanceId = InstanceId(2);

// ── Hyperparameters ─────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainHyper {
    pub episodes: usize,
    pub alpha: f64,
    pub gamma: f64,
    /// ε decays linearly from `epsilon_start` to `epsilon_end` over training.
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Scale of the potential-based shaping term −dist(target)/half-width.
    pub shaping: f64,
    /// Extra cells of distance charged per position down the goal list.
    pub rank_penalty: u32,
    /// Minimum greedy self-play success required after training.
    pub success_floor: f64,
    pub eval_episodes: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            episodes: 20_000,
            alpha: 0.1,
            gamma: 0.95,
            epsilon_start: 0.5,
            epsilon_end: 0.02,
            shaping: 0.5,
            rank_penalty: 4,
            success_floor: 0.8,
            eval_episodes: 500,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<(), CandidateError> {
        let bad = |m: String| Err(CandidateError::InvalidHyper(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must be in (0, 1], got {}", self.alpha));
        }
        for e in [self.epsilon_start, self.epsilon_end] {
            if !(0.0..=1.0).contains(&e) {
                return bad(format!("epsilon must be in [0, 1], got {e}"));
            }
        }
        Ok(())
    }
}

// ── Policy ──────────────────────────────────────────────────────────────

const MATE_WINDOW: i32 = 2;
const MATE_CODES: usize = ((2 * MATE_WINDOW + 1) * (2 * MATE_WINDOW + 1) + 1) as usize;

/// How a policy picks which goal prey to chase.
///
/// The target minimises `d(own, prey) + d(teammate, prey) + rank_penalty × r`,
/// where `r` is the prey's position in the ascending goal list; ties go to
/// the lowest prey index. The summed distance lets two predators with
/// overlapping goals settle on the same prey; the rank term makes earlier
/// goals preferred.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pursuit {
    pub goals: GoalSet,
    pub rank_penalty: u32,
}

impl Pursuit {
    pub fn new(goals: GoalSet, rank_penalty: u32) -> Self {
        Self { goals, rank_penalty }
    }

    /// Target prey (0-based) for predator `agent`.
    pub fn target(&self, cfg: &GridConfig, state: &EnvState, agent: usize) -> usize {
        let own = state.predators[agent];
        let mate = state.predators[1 - agent];
        self.goals
            .iter()
            .enumerate()
            .min_by_key(|&(rank, i)| {
                let prey = state.preys[i];
                (cfg.distance(own, prey) + cfg.distance(mate, prey) + self.rank_penalty * rank as u32, i)
            })
            .map(|(_, i)| i)
            .expect("goal sets are non-empty")
    }

    /// Compressed observation: offset to the target prey, and the teammate's
    /// offset when it is within [`MATE_WINDOW`] on both axes.
    pub fn observation_key(&self, cfg: &GridConfig, state: &EnvState, agent: usize) -> usize {
        let own = state.predators[agent];
        let target = state.preys[self.target(cfg, state, agent)];
        let (tx, ty) = cfg.offset(own, target);
        let (mx, my) = cfg.offset(own, state.predators[1 - agent]);
        let mate = if mx.abs() <= MATE_WINDOW && my.abs() <= MATE_WINDOW {
            ((mx + MATE_WINDOW) * (2 * MATE_WINDOW + 1) + (my + MATE_WINDOW)) as usize
        } else {
            MATE_CODES - 1
        };
        let cell = ((tx + cfg.width / 2) * cfg.height + (ty + cfg.height / 2)) as usize;
        cell * MATE_CODES + mate
    }

    fn potential(&self, cfg: &GridConfig, state: &EnvState, agent: usize) -> f64 {
        let target = state.preys[self.target(cfg, state, agent)];
        -(cfg.distance(state.predators[agent], target) as f64) / (cfg.width.max(cfg.height) / 2) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularGoalPolicy {
    pursuit: Pursuit,
    /// Indexed by [`Pursuit::observation_key`].
    values: Vec<[f64; 5]>,
    greedy: bool,
}

impl TabularGoalPolicy {
    pub fn new(cfg: &GridConfig, pursuit: Pursuit) -> Self {
        let keys = (cfg.width * cfg.height) as usize * MATE_CODES;
        Self { pursuit, values: vec![[0.0; 5]; keys], greedy: true }
    }

    pub fn goals(&self) -> GoalSet {
        self.pursuit.goals
    }

    pub fn pursuit(&self) -> Pursuit {
        self.pursuit
    }

    pub fn is_greedy(&self) -> bool {
        self.greedy
    }

    pub fn n_keys(&self) -> usize {
        self.values.len()
    }

    pub fn action_values(&self, key: usize) -> &[f64; 5] {
        &self.values[key]
    }

    /// Greedy action for predator `agent`; ties to the first action.
    pub fn act(&self, cfg: &GridConfig, state: &EnvState, agent: usize) -> Action {
        Action::ALL[best_action(&self.values[self.pursuit.observation_key(cfg, state, agent)])]
    }
}

fn best_action(values: &[f64; 5]) -> usize {
    let mut best = 0;
    for i in 1..5 {
        if values[i] > values[best] {
            best = i;
        }
    }
    best
}

// ── Training ────────────────────────────────────────────────────────────

/// Self-play Q-learning: both predators share one table and one goal set.
pub fn train_candidate(
    cfg: &GridConfig,
    goals: GoalSet,
    hyper: &TrainHyper,
    rng: &mut SimRng,
) -> Result<TabularGoalPolicy, CandidateError> {
    hyper.validate()?;
    let env = PredatorPrey::new(cfg.clone())?;
    let pursuit = Pursuit::new(goals, hyper.rank_penalty);
    let mut policy = TabularGoalPolicy::new(cfg, pursuit);
    let span = hyper.episodes.saturating_sub(1).max(1) as f64;
    for episode in 0..hyper.episodes {
        let frac = episode as f64 / span;
        let epsilon = hyper.epsilon_start + (hyper.epsilon_end - hyper.epsilon_start) * frac;
        let mut state = env.reset([goals; N_PREDATORS], rng);
        while !state.terminal {
            let keys: [usize; N_PREDATORS] = std::array::from_fn(|i| pursuit.observation_key(cfg, &state, i));
            let actions: [usize; N_PREDATORS] = std::array::from_fn(|i| {
                if rng.random::<f64>() < epsilon {
                    rng.random_range(0..Action::ALL.len())
                } else {
                    best_action(&policy.values[keys[i]])
                }
            });
            let out = env.step(&state, actions.map(|a| Action::ALL[a]), rng)?;
            for i in 0..N_PREDATORS {
                let before = pursuit.potential(cfg, &state, i);
                let target = if out.terminal {
                    out.rewards[i] - hyper.shaping * before
                } else {
                    let after = pursuit.potential(cfg, &out.state, i);
                    let shaped = hyper.shaping * (hyper.gamma * after - before);
                    let next = pursuit.observation_key(cfg, &out.state, i);
                    let best = policy.values[next].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    out.rewards[i] + shaped + hyper.gamma * best
                };
                let q = &mut policy.values[keys[i]][actions[i]];
                *q += hyper.alpha * (target - *q);
            }
            state = out.state;
        }
    }
    let achieved = evaluate_pair(&env, &policy, &policy, hyper.eval_episodes, rng);
    if achieved < hyper.success_floor {
        return Err(CandidateError::ConvergenceFailure {
            goals,
            achieved,
            floor: hyper.success_floor,
            episodes: hyper.episodes,
        });
    }
    Ok(policy)
}

// ── Evaluation ──────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub rewards: [f64; N_PREDATORS],
    pub steps: u32,
    pub captured: Option<usize>,
}

impl EpisodeOutcome {
    /// A capture that rewards both predators, i.e. of a prey in both goal sets.
    pub fn is_joint_success(&self) -> bool {
        self.captured.is_some() && self.rewards.iter().all(|&r| r > 0.0)
    }
}

/// One greedy episode. Predator 0 is the controlled agent running
/// `controlled`, predator 1 the teammate running `teammate`.
pub fn play_episode<R: Rng + ?Sized>(
    env: &PredatorPrey,
    teammate: &TabularGoalPolicy,
    controlled: &TabularGoalPolicy,
    rng: &mut R,
) -> EpisodeOutcome {
    let cfg = env.config();
    let mut state = env.reset([controlled.goals(), teammate.goals()], rng);
    let mut rewards = [0.0; N_PREDATORS];
    while !state.terminal {
        let actions = [controlled.act(cfg, &state, 0), teammate.act(cfg, &state, 1)];
        let out = env.step(&state, actions, rng).expect("state is not terminal");
        rewards = out.rewards;
        state = out.state;
    }
    EpisodeOutcome { rewards, steps: state.step, captured: state.capture.map(|c| c.prey) }
}

/// Fraction of episodes ending in a capture.
pub fn evaluate_pair<R: Rng + ?Sized>(
    env: &PredatorPrey,
    instance: &TabularGoalPolicy,
    candidate: &TabularGoalPolicy,
    episodes: usize,
    rng: &mut R,
) -> f64 {
    if episodes == 0 {
        return 0.0;
    }
    let hits = (0..episodes)
        .filter(|_| play_episode(env, instance, candidate, rng).is_joint_success())
        .count();
    hits as f64 / episodes as f64
}

/// Mean and sample standard deviation of `runs` independent evaluations.
pub fn evaluate_pair_runs(
    env: &PredatorPrey,
    instance: &TabularGoalPolicy,
    candidate: &TabularGoalPolicy,
    episodes: usize,
    runs: usize,
    seed: u64,
) -> (f64, f64) {
    let rates: Vec<f64> = (0..runs as u64)
        .into_par_iter()
        .map(|r| evaluate_pair(env, instance, candidate, episodes, &mut derive_rng(seed, r, 0)))
        .collect();
    mean_std(&rates)
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

// ── Policy sets ─────────────────────────────────────────────────────────

/// Trained teammate instances (K1, K2, U) and candidates (π1..π4).
#[derive(Clone, Debug)]
pub struct PolicySet {
    pub instances: Vec<(String, TabularGoalPolicy)>,
    pub candidates: Vec<(String, TabularGoalPolicy)>,
}

impl PolicySet {
    /// Trains all seven policies in parallel; policy `i` uses stream `i` of
    /// `seed`.
    pub fn train(cfg: &GridConfig, hyper: &TrainHyper, seed: u64) -> Result<Self, CandidateError> {
        let specs: Vec<(&str, &[usize])> = INSTANCE_GOALS.iter().chain(CANDIDATE_GOALS.iter()).copied().collect();
        let trained: Vec<(String, TabularGoalPolicy)> = specs
            .par_iter()
            .enumerate()
            .map(|(i, (name, goals))| {
                let goals = GoalSet::new(goals)?;
                let mut rng = derive_rng(seed, 1000 + i as u64, 0);
                Ok((name.to_string(), train_candidate(cfg, goals, hyper, &mut rng)?))
            })
            .collect::<Result<_, CandidateError>>()?;
        let mut it = trained.into_iter();
        let instances = it.by_ref().take(INSTANCE_GOALS.len()).collect();
        let candidates = it.collect();
        Ok(Self { instances, candidates })
    }

    pub fn instance(&self, n: InstanceId) -> &TabularGoalPolicy {
        &self.instances[n.0].1
    }

    pub fn candidate(&self, a: ArmId) -> &TabularGoalPolicy {
        &self.candidates[a.0].1
    }
}

// ── Success matrix ──────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessMatrix {
    instance_names: Vec<String>,
    arm_names: Vec<String>,
    /// Row-major `[instance][arm]`.
    rates: Vec<f64>,
    spreads: Option<Vec<f64>>,
}

const REFERENCE_MATRIX_CSV: &str = include_str!("../data/success_matrix.csv");

impl SuccessMatrix {
    pub fn new(
        instance_names: Vec<String>,
        arm_names: Vec<String>,
        rates: Vec<f64>,
        spreads: Option<Vec<f64>>,
    ) -> Result<Self, CandidateError> {
        let width = arm_names.len();
        for (i, &r) in rates.iter().enumerate() {
            if !(0.0..=1.0).contains(&r) {
                return Err(CandidateError::RateOutOfRange {
                    instance: instance_names[i / width].clone(),
                    arm: arm_names[i % width].clone(),
                    rate: r,
                });
            }
        }
        Ok(Self { instance_names, arm_names, rates, spreads })
    }

    /// The published K1/K2/U × π1..π4 success rates.
    pub fn reference() -> Self {
        Self::load(REFERENCE_MATRIX_CSV.as_bytes()).expect("bundled matrix is valid")
    }

    /// CSV `instance,arm,rate[,spread]`; `#` lines are comments. Every
    /// (instance, arm) pair must appear.
    pub fn load<R: Read>(source: R) -> Result<Self, CandidateError> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(source);
        let headers = reader
            .headers()
            .map_err(|e| CandidateError::Parse { line: 1, message: e.to_string() })?
            .clone();
        let cols: Vec<&str> = headers.iter().collect();
        if cols != ["instance", "arm", "rate"] && cols != ["instance", "arm", "rate", "spread"] {
            return Err(CandidateError::Parse { line: 1, message: "expected header `instance,arm,rate[,spread]`".into() });
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| CandidateError::Parse {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let num = |i: usize| -> Result<Option<f64>, CandidateError> {
                match record.get(i) {
                    None | Some("") => Ok(None),
                    Some(s) => s
                        .parse::<f64>()
                        .map(Some)
                        .map_err(|_| CandidateError::Parse { line, message: format!("{s:?} is not a number") }),
                }
            };
            let rate = num(2)?.ok_or_else(|| CandidateError::Parse { line, message: "missing rate".into() })?;
            rows.push((record[0].to_string(), record[1].to_string(), rate, num(3)?));
        }
        let mut instance_names: Vec<String> = Vec::new();
        let mut arm_names: Vec<String> = Vec::new();
        for (n, a, _, _) in &rows {
            if !instance_names.contains(n) {
                instance_names.push(n.clone());
            }
            if !arm_names.contains(a) {
                arm_names.push(a.clone());
            }
        }
        let width = arm_names.len();
        let mut rates = vec![f64::NAN; instance_names.len() * width];
        let mut spreads = vec![f64::NAN; rates.len()];
        let any_spread = rows.iter().any(|r| r.3.is_some());
        for (n, a, rate, spread) in rows {
            let i = instance_names.iter().position(|s| *s == n).unwrap();
            let j = arm_names.iter().position(|s| *s == a).unwrap();
            rates[i * width + j] = rate;
            spreads[i * width + j] = spread.unwrap_or(0.0);
        }
        if let Some(missing) = rates.iter().position(|r| r.is_nan()) {
            return Err(CandidateError::MissingEntry {
                instance: instance_names[missing / width].clone(),
                arm: arm_names[missing % width].clone(),
            });
        }
        Self::new(instance_names, arm_names, rates, any_spread.then_some(spreads))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        match &self.spreads {
            Some(_) => writeln!(out, "instance,arm,rate,spread")?,
            None => writeln!(out, "instance,arm,rate")?,
        }
        for (i, n) in self.instance_names.iter().enumerate() {
            for (j, a) in self.arm_names.iter().enumerate() {
                let idx = i * self.arm_names.len() + j;
                match &self.spreads {
                    Some(s) => writeln!(out, "{n},{a},{},{}", self.rates[idx], s[idx])?,
                    None => writeln!(out, "{n},{a},{}", self.rates[idx])?,
                }
            }
        }
        Ok(())
    }

    pub fn n_instances(&self) -> usize {
        self.instance_names.len()
    }

    pub fn n_arms(&self) -> usize {
        self.arm_names.len()
    }

    pub fn instance_names(&self) -> &[String] {
        &self.instance_names
    }

    pub fn arm_names(&self) -> &[String] {
        &self.arm_names
    }

    pub fn instance_by_name(&self, name: &str) -> Option<InstanceId> {
        self.instance_names.iter().position(|s| s == name).map(InstanceId)
    }

    pub fn arm_by_name(&self, name: &str) -> Option<ArmId> {
        self.arm_names.iter().position(|s| s == name).map(ArmId)
    }

    pub fn rate(&self, n: InstanceId, a: ArmId) -> f64 {
        self.rates[n.0 * self.n_arms() + a.0]
    }

    pub fn spread(&self, n: InstanceId, a: ArmId) -> Option<f64> {
        self.spreads.as_ref().map(|s| s[n.0 * self.n_arms() + a.0])
    }

    pub fn row(&self, n: InstanceId) -> &[f64] {
        let w = self.n_arms();
        &self.rates[n.0 * w..(n.0 + 1) * w]
    }

    /// Best candidate for an instance; ties to the lowest arm.
    pub fn row_argmax(&self, n: InstanceId) -> ArmId {
        let row = self.row(n);
        let mut best = 0;
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = j;
            }
        }
        ArmId(best)
    }

    /// Gap between the best and second-best entry of a row.
    pub fn row_margin(&self, n: InstanceId) -> f64 {
        let mut row = self.row(n).to_vec();
        row.sort_by(|a, b| b.total_cmp(a));
        row[0] - row.get(1).copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// Whether `arm` is the row argmax for every instance.
    pub fn is_common_best_response(&self, arm: ArmId) -> bool {
        (0..self.n_instances()).all(|n| self.row_argmax(InstanceId(n)) == arm)
    }
}

/// Evaluates every instance × candidate pair over `runs` runs of
/// `episodes` episodes each.
pub fn success_matrix(
    env: &PredatorPrey,
    instances: &[(String, TabularGoalPolicy)],
    candidates: &[(String, TabularGoalPolicy)],
    episodes: usize,
    runs: usize,
    seed: u64,
) -> SuccessMatrix {
    let width = candidates.len();
    let cells: Vec<(f64, f64)> = (0..instances.len() * width)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / width, idx % width);
            evaluate_pair_runs(env, &instances[i].1, &candidates[j].1, episodes, runs, seed.wrapping_add(idx as u64))
        })
        .collect();
    SuccessMatrix::new(
        instances.iter().map(|(n, _)| n.clone()).collect(),
        candidates.iter().map(|(n, _)| n.clone()).collect(),
        cells.iter().map(|c| c.0).collect(),
        Some(cells.iter().map(|c| c.1).collect()),
    )
    .expect("success rates lie in [0, 1]")
}

/// +1 with probability `matrix(instance, arm)`, else −1.
pub fn synthetic_outcome<R: Rng + ?Sized>(matrix: &SuccessMatrix, instance: InstanceId, arm: ArmId, rng: &mut R) -> f64 {
    if rng.random::<f64>() < matrix.rate(instance, arm) { 1.0 } else { -1.0 }
}
