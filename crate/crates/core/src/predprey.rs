//! Goal-based predator-prey on a toroidal grid.
//!
//! Two predators and four preys. Prey `i` wanders inside fence `i` and
//! freezes whenever a predator is 4-adjacent. A prey is captured when both
//! predators are 4-adjacent to it at the same time; each predator then
//! receives +1 if that prey is in its goal set and −1 otherwise. Running out
//! of steps gives both −1. Intermediate rewards are 0.
//!
//! All moves are resolved simultaneously from the pre-step state. When
//! several agents target the same cell an agent already standing there keeps
//! it; otherwise a fair draw picks who enters and the rest stay put.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub const N_PREDATORS: usize = 2;
pub const N_PREYS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredPreyError {
    #[error("step called on a terminal state")]
    Terminal,

    #[error("invalid grid config: {0}")]
    InvalidConfig(String),

    #[error("goal set must be a non-empty subset of preys 1..=4, got {0:?}")]
    InvalidGoalSet(Vec<usize>),
}

// ── Geometry ────────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Position {
    pub x: i32,
    pub y: i32,
}

impl Position {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Action {
    pub const ALL: [Action; 5] = [Action::Up, Action::Down, Action::Left, Action::Right, Action::Stay];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            Action::Stay => (0, 0),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
            Action::Stay => "stay",
        }
    }
}

/// Axis-aligned square region given by its top-left cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fence {
    pub x: i32,
    pub y: i32,
    pub size: i32,
}

impl Fence {
    pub fn contains(&self, p: Position) -> bool {
        (self.x..self.x + self.size).contains(&p.x) && (self.y..self.y + self.size).contains(&p.y)
    }

    fn overlaps(&self, other: &Fence) -> bool {
        self.x < other.x + other.size
            && other.x < self.x + self.size
            && self.y < other.y + other.size
            && other.y < self.y + self.size
    }

    pub fn cells(&self) -> impl Iterator<Item = Position> + '_ {
        (self.y..self.y + self.size).flat_map(move |y| (self.x..self.x + self.size).map(move |x| Position::new(x, y)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub width: i32,
    pub height: i32,
    /// Fence `i` holds prey `i`.
    pub fences: [Fence; N_PREYS],
    pub max_steps: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        let fence = |x, y| Fence { x, y, size: 4 };
        Self {
            width: 20,
            height: 20,
            fences: [fence(2, 2), fence(14, 2), fence(2, 14), fence(14, 14)],
            max_steps: 300,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<(), PredPreyError> {
        let bad = |m: String| Err(PredPreyError::InvalidConfig(m));
        if self.width < 3 || self.height < 3 {
            return bad(format!("grid {}x{} too small", self.width, self.height));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        for (i, f) in self.fences.iter().enumerate() {
            if f.size < 1 || f.x < 0 || f.y < 0 || f.x + f.size > self.width || f.y + f.size > self.height {
                return bad(format!("fence {} lies outside the grid", i + 1));
            }
            for (j, g) in self.fences.iter().enumerate().skip(i + 1) {
                if f.overlaps(g) {
                    return bad(format!("fences {} and {} overlap", i + 1, j + 1));
                }
            }
        }
        let fenced: i32 = self.fences.iter().map(|f| f.size * f.size).sum();
        if self.width * self.height - fenced < N_PREDATORS as i32 {
            return bad("no room for predators outside the fences".into());
        }
        Ok(())
    }

    pub fn wrap(&self, x: i32, y: i32) -> Position {
        Position::new(x.rem_euclid(self.width), y.rem_euclid(self.height))
    }

    pub fn moved(&self, p: Position, action: Action) -> Position {
        let (dx, dy) = action.delta();
        self.wrap(p.x + dx, p.y + dy)
    }

    /// Shortest signed displacement from `from` to `to` on the torus, each
    /// component in `[-size/2, size/2)`.
    pub fn offset(&self, from: Position, to: Position) -> (i32, i32) {
        let d = |a: i32, b: i32, n: i32| (b - a + n / 2).rem_euclid(n) - n / 2;
        (d(from.x, to.x, self.width), d(from.y, to.y, self.height))
    }

    /// Toroidal Manhattan distance.
    pub fn distance(&self, a: Position, b: Position) -> u32 {
        let (dx, dy) = self.offset(a, b);
        dx.unsigned_abs() + dy.unsigned_abs()
    }

    pub fn adjacent(&self, a: Position, b: Position) -> bool {
        self.distance(a, b) == 1
    }

    pub fn in_any_fence(&self, p: Position) -> bool {
        self.fences.iter().any(|f| f.contains(p))
    }
}

// ── Goals ───────────────────────────────────────────────────────────────

/// Non-empty subset of the four preys, stored as a bitmask over 0-based
/// prey indices. Displayed and serialized 1-based.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GoalSet(u8);

impl GoalSet {
    /// From 1-based prey numbers.
    pub fn new(preys: &[usize]) -> Result<Self, PredPreyError> {
        let mut mask = 0u8;
        for &p in preys {
            if !(1..=N_PREYS).contains(&p) {
                return Err(PredPreyError::InvalidGoalSet(preys.to_vec()));
            }
            mask |= 1 << (p - 1);
        }
        if mask == 0 {
            return Err(PredPreyError::InvalidGoalSet(preys.to_vec()));
        }
        Ok(Self(mask))
    }

    pub fn all() -> Self {
        Self((1 << N_PREYS) - 1)
    }

    /// Whether 0-based prey index `prey` is a goal.
    pub fn contains(&self, prey: usize) -> bool {
        prey < N_PREYS && self.0 & (1 << prey) != 0
    }

    /// 0-based prey indices, ascending.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..N_PREYS).filter(move |&i| self.contains(i))
    }

    /// 1-based prey numbers, ascending.
    pub fn preys(&self) -> Vec<usize> {
        self.iter().map(|i| i + 1).collect()
    }
}

impl fmt::Debug for GoalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for GoalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.preys().iter().map(|p| p.to_string()).collect();
        write!(f, "{{{}}}", items.join(","))
    }
}

impl Serialize for GoalSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.preys().serialize(s)
    }
}

impl<'de> Deserialize<'de> for GoalSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let preys = Vec::<usize>::deserialize(d)?;
        GoalSet::new(&preys).map_err(serde::de::Error::custom)
    }
}

// ── State ───────────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capture {
    /// 0-based prey index.
    pub prey: usize,
    pub step: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvState {
    pub predators: [Position; N_PREDATORS],
    pub preys: [Position; N_PREYS],
    pub goals: [GoalSet; N_PREDATORS],
    pub step: u32,
    pub terminal: bool,
    pub capture: Option<Capture>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub own: Position,
    pub teammate: Position,
    pub closest_prey: Position,
    /// 0-based index of the closest prey.
    pub closest_index: usize,
    pub distance: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub state: EnvState,
    pub rewards: [f64; N_PREDATORS],
    pub terminal: bool,
}

// ── Environment ─────────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq)]
pub struct PredatorPrey {
    cfg: GridConfig,
    outside_cells: Vec<Position>,
}

impl PredatorPrey {
    pub fn new(cfg: GridConfig) -> Result<Self, PredPreyError> {
        cfg.validate()?;
        let outside_cells = (0..cfg.height)
            .flat_map(|y| (0..cfg.width).map(move |x| Position::new(x, y)))
            .filter(|&p| !cfg.in_any_fence(p))
            .collect();
        Ok(Self { cfg, outside_cells })
    }

    pub fn config(&self) -> &GridConfig {
        &self.cfg
    }

    /// Preys uniform inside their fences, predators uniform on distinct
    /// cells outside every fence.
    pub fn reset<R: Rng + ?Sized>(&self, goals: [GoalSet; N_PREDATORS], rng: &mut R) -> EnvState {
        let preys = std::array::from_fn(|i| {
            let f = self.cfg.fences[i];
            Position::new(f.x + rng.random_range(0..f.size), f.y + rng.random_range(0..f.size))
        });
        let first = rng.random_range(0..self.outside_cells.len());
        let mut second = rng.random_range(0..self.outside_cells.len() - 1);
        if second >= first {
            second += 1;
        }
        EnvState {
            predators: [self.outside_cells[first], self.outside_cells[second]],
            preys,
            goals,
            step: 0,
            terminal: false,
            capture: None,
        }
    }

    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &EnvState,
        actions: [Action; N_PREDATORS],
        rng: &mut R,
    ) -> Result<StepResult, PredPreyError> {
        if state.terminal {
            return Err(PredPreyError::Terminal);
        }
        let cfg = &self.cfg;
        // Agents 0..2 are predators, 2..6 preys.
        let mut current = [Position::new(0, 0); N_PREDATORS + N_PREYS];
        current[..N_PREDATORS].copy_from_slice(&state.predators);
        current[N_PREDATORS..].copy_from_slice(&state.preys);
        let mut target = current;
        for (i, &a) in actions.iter().enumerate() {
            target[i] = cfg.moved(current[i], a);
        }
        for (i, prey) in state.preys.iter().enumerate() {
            let action = Action::ALL[rng.random_range(0..Action::ALL.len())];
            let next = cfg.moved(*prey, action);
            let guarded = state.predators.iter().any(|&p| cfg.adjacent(p, *prey));
            if !guarded && cfg.fences[i].contains(next) {
                target[N_PREDATORS + i] = next;
            }
        }
        resolve_collisions(&current, &mut target, rng);

        let mut next = state.clone();
        next.predators.copy_from_slice(&target[..N_PREDATORS]);
        next.preys.copy_from_slice(&target[N_PREDATORS..]);
        next.step += 1;

        let mut rewards = [0.0; N_PREDATORS];
        if let Some(prey) = (0..N_PREYS).find(|&i| is_captured(cfg, &next, i)) {
            next.terminal = true;
            next.capture = Some(Capture { prey, step: next.step });
            for (r, goals) in rewards.iter_mut().zip(&next.goals) {
                *r = if goals.contains(prey) { 1.0 } else { -1.0 };
            }
        } else if next.step >= cfg.max_steps {
            next.terminal = true;
            rewards = [-1.0; N_PREDATORS];
        }
        let terminal = next.terminal;
        Ok(StepResult { state: next, rewards, terminal })
    }

    pub fn observe(&self, state: &EnvState, agent: usize) -> Observation {
        observe(&self.cfg, state, agent)
    }

    pub fn is_captured(&self, state: &EnvState, prey: usize) -> bool {
        is_captured(&self.cfg, state, prey)
    }
}

/// Reverts losers of every contested cell until no cell is contested.
fn resolve_collisions<R: Rng + ?Sized>(current: &[Position], target: &mut [Position], rng: &mut R) {
    loop {
        let mut groups: BTreeMap<Position, Vec<usize>> = BTreeMap::new();
        for (i, &t) in target.iter().enumerate() {
            groups.entry(t).or_default().push(i);
        }
        let mut changed = false;
        for (cell, members) in groups {
            if members.len() < 2 {
                continue;
            }
            let winner = members
                .iter()
                .copied()
                .find(|&i| current[i] == cell)
                .unwrap_or_else(|| members[rng.random_range(0..members.len())]);
            for &i in &members {
                if i != winner {
                    target[i] = current[i];
                    changed = true;
                }
            }
        }
        if !changed {
            return;
        }
    }
}

/// Both predators 4-adjacent (toroidal) to `prey` (0-based).
pub fn is_captured(cfg: &GridConfig, state: &EnvState, prey: usize) -> bool {
    let p = state.preys[prey];
    state.predators.iter().all(|&q| cfg.adjacent(q, p))
}

/// What predator `agent` sees: itself, its teammate and the closest prey
/// (ties to the lowest index).
pub fn observe(cfg: &GridConfig, state: &EnvState, agent: usize) -> Observation {
    assert!(agent < N_PREDATORS, "predator index {agent} out of range");
    let own = state.predators[agent];
    let (closest_index, distance) = state
        .preys
        .iter()
        .enumerate()
        .map(|(i, &p)| (i, cfg.distance(own, p)))
        .min_by_key(|&(i, d)| (d, i))
        .expect("four preys");
    Observation {
        own,
        teammate: state.predators[1 - agent],
        closest_prey: state.preys[closest_index],
        closest_index,
        distance,
    }
}

// ── Trajectory dump ─────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub step: u32,
    pub predators: [Position; N_PREDATORS],
    pub preys: [Position; N_PREYS],
    pub actions: [Action; N_PREDATORS],
    pub rewards: [f64; N_PREDATORS],
}

/// Rows of `step,pred0,pred1,prey1..prey4,actions,rewards`; positions as
/// `x:y`, action and reward pairs joined with `:`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
}

impl Trajectory {
    pub fn push(&mut self, after: &EnvState, actions: [Action; N_PREDATORS], rewards: [f64; N_PREDATORS]) {
        self.rows.push(TrajectoryRow { step: after.step, predators: after.predators, preys: after.preys, actions, rewards });
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "step,pred0,pred1,prey1,prey2,prey3,prey4,actions,rewards")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}:{},{}:{}",
                r.step,
                r.predators[0],
                r.predators[1],
                r.preys[0],
                r.preys[1],
                r.preys[2],
                r.preys[3],
                r.actions[0].as_str(),
                r.actions[1].as_str(),
                r.rewards[0],
                r.rewards[1],
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn env() -> PredatorPrey {
        PredatorPrey::new(GridConfig::default()).unwrap()
    }

    fn goals(a: &[usize], b: &[usize]) -> [GoalSet; 2] {
        [GoalSet::new(a).unwrap(), GoalSet::new(b).unwrap()]
    }

    fn state(predators: [(i32, i32); 2], preys: [(i32, i32); 4]) -> EnvState {
        EnvState {
            predators: predators.map(|(x, y)| Position::new(x, y)),
            preys: preys.map(|(x, y)| Position::new(x, y)),
            goals: goals(&[1, 2, 3, 4], &[1, 2, 3, 4]),
            step: 0,
            terminal: false,
            capture: None,
        }
    }

    const FENCED: [(i32, i32); 4] = [(3, 3), (3, 15), (15, 3), (15, 15)];

    #[test]
    fn default_config_is_valid_and_fence_checks_work() {
        let cfg = GridConfig::default();
        cfg.validate().unwrap();
        let mut bad = cfg.clone();
        bad.fences[1] = bad.fences[0];
        assert!(bad.validate().is_err());
        let mut bad = cfg.clone();
        bad.fences[3].x = 18;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn goal_sets() {
        let g = GoalSet::new(&[4, 1]).unwrap();
        assert_eq!(g.preys(), vec![1, 4]);
        assert!(g.contains(0) && g.contains(3) && !g.contains(1));
        assert_eq!(g.to_string(), "{1,4}");
        assert!(GoalSet::new(&[]).is_err());
        assert!(GoalSet::new(&[5]).is_err());
        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(json, "[1,4]");
        assert_eq!(serde_json::from_str::<GoalSet>(&json).unwrap(), g);
        assert!(serde_json::from_str::<GoalSet>("[]").is_err());
    }

    #[test]
    fn toroidal_geometry() {
        let cfg = GridConfig::default();
        assert_eq!(cfg.moved(Position::new(0, 5), Action::Left), Position::new(19, 5));
        assert_eq!(cfg.moved(Position::new(19, 19), Action::Down), Position::new(19, 0));
        assert_eq!(cfg.distance(Position::new(0, 0), Position::new(0, 18)), 2);
        assert_eq!(cfg.offset(Position::new(0, 0), Position::new(19, 1)), (-1, 1));
        assert_eq!(cfg.offset(Position::new(0, 0), Position::new(10, 0)), (-10, 0));
    }

    #[test]
    fn predator_wraps_when_leaving_the_map() {
        let env = env();
        let s = state([(0, 5), (10, 10)], FENCED);
        let out = env.step(&s, [Action::Left, Action::Stay], &mut seeded(0)).unwrap();
        assert_eq!(out.state.predators[0], Position::new(19, 5));
    }

    #[test]
    fn reset_places_agents_by_the_rules() {
        let env = env();
        let cfg = env.config();
        for seed in 0..1000 {
            let s = env.reset(goals(&[1], &[2]), &mut seeded(seed));
            for (i, p) in s.preys.iter().enumerate() {
                assert!(cfg.fences[i].contains(*p));
            }
            for p in s.predators {
                assert!(!cfg.in_any_fence(p), "predator starts inside a fence: {p}");
            }
            assert_ne!(s.predators[0], s.predators[1]);
            assert_eq!((s.step, s.terminal), (0, false));
        }
        let a = env.reset(goals(&[1], &[2]), &mut seeded(42));
        let b = env.reset(goals(&[1], &[2]), &mut seeded(42));
        assert_eq!(a, b);
    }

    #[test]
    fn prey_at_fence_edge_cannot_leave() {
        let env = env();
        // Prey 1 in the top-left corner of its fence; predators far away.
        let s = state([(10, 9), (10, 11)], [(2, 2), (3, 15), (15, 3), (15, 15)]);
        for seed in 0..200 {
            let out = env.step(&s, [Action::Stay, Action::Stay], &mut seeded(seed)).unwrap();
            let p = out.state.preys[0];
            assert!(env.config().fences[0].contains(p));
        }
    }

    #[test]
    fn prey_next_to_a_predator_freezes() {
        let env = env();
        let s = state([(6, 4), (10, 10)], [(5, 4), (3, 15), (15, 3), (15, 15)]);
        for seed in 0..100 {
            let out = env.step(&s, [Action::Stay, Action::Stay], &mut seeded(seed)).unwrap();
            assert_eq!(out.state.preys[0], Position::new(5, 4));
        }
    }

    #[test]
    fn capture_rewards_follow_goal_sets() {
        let env = env();
        // Prey 1 at (3,3), frozen by predator 0 at (2,3); predator 1 steps into (4,3).
        let mut s = state([(2, 3), (5, 3)], FENCED);
        s.goals = goals(&[1, 2], &[1]);
        let out = env.step(&s, [Action::Stay, Action::Left], &mut seeded(0)).unwrap();
        assert!(out.terminal);
        assert_eq!(out.rewards, [1.0, 1.0]);
        assert_eq!(out.state.capture, Some(Capture { prey: 0, step: 1 }));

        s.goals = goals(&[1], &[2, 3]);
        let out = env.step(&s, [Action::Stay, Action::Left], &mut seeded(0)).unwrap();
        assert_eq!(out.rewards, [1.0, -1.0]);
        assert!(env.step(&out.state, [Action::Stay, Action::Stay], &mut seeded(0)).is_err());
    }

    #[test]
    fn capture_predicate() {
        let cfg = GridConfig::default();
        let s = state([(2, 3), (3, 2)], FENCED);
        assert!(is_captured(&cfg, &s, 0));
        let s = state([(2, 3), (5, 3)], FENCED);
        assert!(!is_captured(&cfg, &s, 0));
        // Diagonal does not count.
        let s = state([(2, 2), (4, 3)], FENCED);
        assert!(!is_captured(&cfg, &s, 0));
    }

    #[test]
    fn timeout_penalises_both() {
        let env = env();
        let mut s = state([(10, 9), (10, 11)], FENCED);
        s.step = 299;
        let out = env.step(&s, [Action::Stay, Action::Stay], &mut seeded(0)).unwrap();
        assert!(out.terminal);
        assert_eq!(out.rewards, [-1.0, -1.0]);
        assert_eq!(out.state.step, 300);
    }

    #[test]
    fn predators_contesting_a_cell_are_resolved_randomly() {
        let env = env();
        let s = state([(9, 10), (11, 10)], FENCED);
        let mut winners = [0; 2];
        for seed in 0..400 {
            let out = env.step(&s, [Action::Right, Action::Left], &mut seeded(seed)).unwrap();
            let p = out.state.predators;
            assert_ne!(p[0], p[1]);
            if p[0] == Position::new(10, 10) {
                winners[0] += 1;
            } else {
                assert_eq!(p[1], Position::new(10, 10));
                winners[1] += 1;
            }
        }
        assert!(winners.iter().all(|&w| w > 150), "{winners:?}");
    }

    #[test]
    fn a_standing_agent_keeps_its_cell() {
        let env = env();
        // Predator 0 tries to step onto a prey frozen by predator 1.
        let s = state([(2, 4), (4, 5)], [(3, 4), (3, 15), (15, 3), (15, 15)]);
        for seed in 0..50 {
            let out = env.step(&s, [Action::Right, Action::Stay], &mut seeded(seed)).unwrap();
            assert_eq!(out.state.predators[0], Position::new(2, 4));
            assert_eq!(out.state.preys[0], Position::new(3, 4));
        }
    }

    #[test]
    fn blocked_chains_cascade() {
        let mut current = [Position::new(0, 0), Position::new(1, 0), Position::new(2, 0)];
        // 0 → 1's cell, 1 → 2's cell, 2 stays: everyone ends where they were.
        let mut target = [Position::new(1, 0), Position::new(2, 0), Position::new(2, 0)];
        resolve_collisions(&current, &mut target, &mut seeded(0));
        assert_eq!(target, current);
        // Swap is allowed.
        current = [Position::new(0, 0), Position::new(1, 0), Position::new(5, 5)];
        let mut target = [Position::new(1, 0), Position::new(0, 0), Position::new(5, 5)];
        resolve_collisions(&current, &mut target, &mut seeded(0));
        assert_eq!(target[0], Position::new(1, 0));
    }

    #[test]
    fn closest_prey_ties_go_low() {
        let cfg = GridConfig::default();
        let s = state([(0, 0), (7, 7)], [(2, 0), (10, 10), (0, 18), (15, 15)]);
        let o = observe(&cfg, &s, 0);
        assert_eq!((o.closest_index, o.distance), (0, 2));
        assert_eq!(o.closest_prey, Position::new(2, 0));
        assert_eq!(o.teammate, Position::new(7, 7));

        let s = state([(3, 3), (7, 7)], [(3, 3), (10, 10), (0, 18), (15, 15)]);
        assert_eq!(observe(&cfg, &s, 0).distance, 0);

        let s = state([(9, 9), (0, 0)], [(9, 7), (9, 11), (0, 18), (15, 15)]);
        assert_eq!(observe(&cfg, &s, 0).closest_index, 0);
        let s = state([(9, 9), (0, 0)], [(0, 10), (9, 11), (0, 18), (9, 7)]);
        assert_eq!(observe(&cfg, &s, 0).closest_index, 1);
    }

    #[test]
    fn trajectory_csv() {
        let env = env();
        let mut rng = seeded(1);
        let mut s = env.reset(goals(&[1], &[1]), &mut rng);
        let mut traj = Trajectory::default();
        for _ in 0..3 {
            let out = env.step(&s, [Action::Up, Action::Stay], &mut rng).unwrap();
            traj.push(&out.state, [Action::Up, Action::Stay], out.rewards);
            s = out.state;
        }
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,pred0,pred1,prey1,prey2,prey3,prey4,actions,rewards");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("1,"));
        assert!(lines[1].ends_with(",up:stay,0:0"));
        assert_eq!(lines[1].split(',').count(), 9);
    }
}
