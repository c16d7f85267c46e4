use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::buffer::{collect_buffer, deploy, train_selector, OutcomeSource};
use super::report::{LearnerSummary, Panel, ResultsReport, RunRecord, SeedFailure};
use super::skew::{builtin_skew, builtin_skews, SkewSpec};
use super::HarnessError;
use crate::bandit_env::{InteractiveEnv, NoiseMode, NoisyRateTable};
use crate::candidates::{PolicySet, SuccessMatrix, TrainHyper};
use crate::learners::{Learner, LearnerConfig, LearnerKind};
use crate::predprey::{GridConfig, PredatorPrey};
use crate::rng::derive_rng;
use crate::table::{builtin_scenario, load_contingency_table, ContingencyTable, InstanceId};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scenario {
    Kidney,
    Magazine,
    PredpreySynthetic,
    PredpreyFullsim,
    /// A contingency table file (CSV or JSON).
    Custom(PathBuf),
}

impl Scenario {
    pub fn is_predprey(&self) -> bool {
        matches!(self, Scenario::PredpreySynthetic | Scenario::PredpreyFullsim)
    }

    pub fn name(&self) -> String {
        match self {
            Scenario::Kidney => "kidney".into(),
            Scenario::Magazine => "magazine".into(),
            Scenario::PredpreySynthetic => "predprey-synthetic".into(),
            Scenario::PredpreyFullsim => "predprey-fullsim".into(),
            Scenario::Custom(p) => p.display().to_string(),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "" => return Err("empty scenario".into()),
            "kidney" => Scenario::Kidney,
            "magazine" => Scenario::Magazine,
            "predprey-synthetic" => Scenario::PredpreySynthetic,
            "predprey-fullsim" => Scenario::PredpreyFullsim,
            path => Scenario::Custom(PathBuf::from(path)),
        })
    }
}

impl TryFrom<String> for Scenario {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Scenario> for String {
    fn from(s: Scenario) -> String {
        s.name()
    }
}

/// How a bandit scenario feeds its learners.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BanditMode {
    /// Learners observe a stream of records sampled from the table's own
    /// (instance, arm) frequencies.
    #[default]
    Logged,
    /// Learners pick arms; instances are drawn from p(n | arm).
    Interactive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub learners: Vec<LearnerKind>,
    pub seeds: usize,
    pub master_seed: u64,
    pub learner: LearnerConfig,

    // Bandit scenarios.
    pub bandit_mode: BanditMode,
    pub records: usize,
    pub noise_sigma: f64,
    pub noise_mode: NoiseMode,

    // Predator-prey scenarios.
    /// Builtin skew names or names of entries in `custom_skews`.
    pub skews: Vec<String>,
    pub custom_skews: Vec<SkewSpec>,
    pub buffer_size: usize,
    pub epochs: usize,
    pub windows: Vec<u32>,
    pub deploy_episodes: usize,
    pub unknown: String,
    /// Success matrix file for synthetic mode; the bundled one if absent.
    pub matrix: Option<PathBuf>,
    pub grid: GridConfig,
    pub training: TrainHyper,

    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Kidney,
            learners: vec![LearnerKind::VanillaQ, LearnerKind::CtcatQ],
            seeds: 10,
            master_seed: 0,
            learner: LearnerConfig::default(),
            bandit_mode: BanditMode::Logged,
            records: 100_000,
            noise_sigma: 0.1,
            noise_mode: NoiseMode::PerSample,
            skews: builtin_skews().into_iter().map(|s| s.name).collect(),
            custom_skews: Vec::new(),
            buffer_size: 10_000,
            epochs: 1,
            windows: vec![5, 10, 15],
            deploy_episodes: 100,
            unknown: "U".into(),
            matrix: None,
            grid: GridConfig::default(),
            training: TrainHyper::default(),
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn for_scenario(scenario: Scenario) -> Self {
        Self { scenario, ..Self::default() }
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
        let config: Self = serde_json::from_reader(std::io::BufReader::new(file))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.seeds == 0 {
            return bad("seeds must be at least 1");
        }
        if self.learners.is_empty() {
            return bad("no learners configured");
        }
        if self.windows.contains(&0) {
            return bad("observation windows must be at least 1");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and non-negative");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        self.learner.weight.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.scenario.is_predprey() {
            if self.skews.is_empty() {
                return bad("no skews configured");
            }
            for s in &self.custom_skews {
                s.validate()?;
            }
            self.resolve_skews()?;
        }
        Ok(())
    }

    /// Skew specs in the configured order; custom entries shadow builtins.
    pub fn resolve_skews(&self) -> Result<Vec<SkewSpec>, HarnessError> {
        self.skews
            .iter()
            .map(|name| {
                self.custom_skews
                    .iter()
                    .find(|s| &s.name == name)
                    .cloned()
                    .or_else(|| builtin_skew(name))
                    .ok_or_else(|| HarnessError::Config(format!("unknown skew {name:?}")))
            })
            .collect()
    }

    pub fn load_matrix(&self) -> Result<SuccessMatrix, HarnessError> {
        match &self.matrix {
            None => Ok(SuccessMatrix::reference()),
            Some(path) => {
                let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
                Ok(SuccessMatrix::load(file)?)
            }
        }
    }

    pub fn load_table(&self) -> Result<ContingencyTable, HarnessError> {
        match &self.scenario {
            Scenario::Kidney => Ok(builtin_scenario("kidney")?),
            Scenario::Magazine => Ok(builtin_scenario("magazine")?),
            Scenario::Custom(path) => {
                let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
                Ok(load_contingency_table(file)?)
            }
            s => Err(HarnessError::Config(format!("{s} has no contingency table"))),
        }
    }
}

/// Runs every seed (in parallel) and aggregates in seed order, so the
/// report depends only on the config.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultsReport, HarnessError> {
    config.validate()?;
    match config.scenario {
        Scenario::PredpreySynthetic => {
            let matrix = config.load_matrix()?;
            let names = matrix.arm_names().to_vec();
            let unknown = matrix
                .instance_by_name(&config.unknown)
                .ok_or_else(|| HarnessError::Config(format!("matrix has no instance {:?}", config.unknown)))?;
            run_predprey(config, &OutcomeSource::Synthetic(&matrix), names, unknown)
        }
        Scenario::PredpreyFullsim => {
            let env = PredatorPrey::new(config.grid.clone())?;
            let policies = PolicySet::train(&config.grid, &config.training, config.master_seed)?;
            let names = policies.candidates.iter().map(|(n, _)| n.clone()).collect();
            let unknown = policies
                .instances
                .iter()
                .position(|(n, _)| *n == config.unknown)
                .map(InstanceId)
                .ok_or_else(|| HarnessError::Config(format!("no instance {:?}", config.unknown)))?;
            run_predprey(config, &OutcomeSource::FullSim { env: &env, policies: &policies }, names, unknown)
        }
        _ => run_bandit(config),
    }
}

type LearnerRuns = Vec<Result<RunRecord, HarnessError>>;

fn run_bandit(config: &ExperimentConfig) -> Result<ResultsReport, HarnessError> {
    let table = config.load_table()?;
    let n_arms = table.n_arms();
    let per_seed: Vec<LearnerRuns> = (0..config.seeds)
        .into_par_iter()
        .map(|s| bandit_seed(config, &table, s))
        .collect();
    let panel = aggregate(config, config.scenario.name(), None, n_arms, per_seed);
    Ok(ResultsReport {
        scenario: config.scenario.name(),
        master_seed: config.master_seed,
        seeds: config.seeds,
        arm_names: table.arm_names().to_vec(),
        panels: vec![panel.0],
        failures: panel.1,
    })
}

fn bandit_seed(config: &ExperimentConfig, table: &ContingencyTable, s: usize) -> LearnerRuns {
    let master = config.master_seed;
    let run = |i: usize, kind: LearnerKind| -> Result<RunRecord, HarnessError> {
        // Every learner of a seed sees the same noisy table.
        let rates = NoisyRateTable::new(table, config.noise_sigma, config.noise_mode, &mut derive_rng(master, s as u64, 0))?;
        let mut learner = Learner::new(kind, table.n_arms(), config.learner);
        match config.bandit_mode {
            BanditMode::Logged => {
                let mut rng = derive_rng(master, s as u64, 1);
                for _ in 0..config.records {
                    learner.observe(&rates.sample_logged_record(&mut rng))?;
                }
            }
            BanditMode::Interactive => {
                let env = InteractiveEnv::new(rates);
                let mut rng = derive_rng(master, s as u64, 2 + i as u64);
                for _ in 0..config.records {
                    let record = env.step(learner.select_arm(&mut rng), &mut rng)?;
                    learner.observe(&record)?;
                }
            }
        }
        Ok(RunRecord {
            seed_index: s,
            learner: kind,
            estimates: learner.arm_estimates().0,
            preferred: learner.preferred_arm(),
            selections: Vec::new(),
        })
    };
    config.learners.iter().enumerate().map(|(i, &k)| run(i, k)).collect()
}

fn run_predprey(
    config: &ExperimentConfig,
    source: &OutcomeSource,
    arm_names: Vec<String>,
    unknown: InstanceId,
) -> Result<ResultsReport, HarnessError> {
    let skews = config.resolve_skews()?;
    for skew in &skews {
        skew.check_coverage()?;
    }
    // Outcomes are ±1.
    let lcfg = LearnerConfig { reward_range: (-1.0, 1.0), ..config.learner };
    let per_seed: Vec<Vec<LearnerRuns>> = (0..config.seeds)
        .into_par_iter()
        .map(|s| {
            skews
                .iter()
                .enumerate()
                .map(|(p, skew)| predprey_panel_seed(config, source, skew, lcfg, unknown, s, p))
                .collect()
        })
        .collect();
    let mut by_panel: Vec<Vec<LearnerRuns>> = skews.iter().map(|_| Vec::new()).collect();
    for seed in per_seed {
        for (p, runs) in seed.into_iter().enumerate() {
            by_panel[p].push(runs);
        }
    }
    let mut panels = Vec::new();
    let mut failures = Vec::new();
    for (skew, runs) in skews.iter().zip(by_panel) {
        let (panel, mut f) = aggregate(config, skew.name.clone(), skew.target, arm_names.len(), runs);
        panels.push(panel);
        failures.append(&mut f);
    }
    Ok(ResultsReport {
        scenario: config.scenario.name(),
        master_seed: config.master_seed,
        seeds: config.seeds,
        arm_names,
        panels,
        failures,
    })
}

fn predprey_panel_seed(
    config: &ExperimentConfig,
    source: &OutcomeSource,
    skew: &SkewSpec,
    lcfg: LearnerConfig,
    unknown: InstanceId,
    s: usize,
    p: usize,
) -> LearnerRuns {
    let master = config.master_seed;
    let buffer_seed = derive_rng(master, s as u64, 100 + p as u64).next_u64();
    let buffer = match collect_buffer(source, skew, config.buffer_size, buffer_seed) {
        Ok(b) => b,
        Err(e) => {
            let msg = e.to_string();
            return config.learners.iter().map(|_| Err(HarnessError::Config(msg.clone()))).collect();
        }
    };
    config
        .learners
        .iter()
        .enumerate()
        .map(|(i, &kind)| {
            let selector = train_selector(&buffer, kind, source.n_arms(), lcfg, config.epochs)?;
            let selections = config
                .windows
                .iter()
                .enumerate()
                .map(|(w, &t)| {
                    let stream = 1000 + (p as u64) * 10_000 + (i as u64) * 100 + w as u64;
                    deploy(&selector, source, unknown, t, config.deploy_episodes, &mut derive_rng(master, s as u64, stream))
                })
                .collect();
            Ok(RunRecord {
                seed_index: s,
                learner: kind,
                estimates: selector.arm_estimates().0,
                preferred: selector.preferred_arm(),
                selections,
            })
        })
        .collect()
}

/// Folds per-seed learner runs (outer index = seed, inner = learner) into a
/// panel.
fn aggregate(
    config: &ExperimentConfig,
    name: String,
    target: Option<crate::table::ArmId>,
    n_arms: usize,
    per_seed: Vec<LearnerRuns>,
) -> (Panel, Vec<SeedFailure>) {
    let mut by_learner: Vec<Vec<RunRecord>> = vec![Vec::new(); config.learners.len()];
    let mut failures = Vec::new();
    for (s, runs) in per_seed.into_iter().enumerate() {
        for (i, run) in runs.into_iter().enumerate() {
            match run {
                Ok(r) => by_learner[i].push(r),
                Err(e) => failures.push(SeedFailure {
                    panel: name.clone(),
                    seed_index: s,
                    learner: Some(config.learners[i]),
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                }),
            }
        }
    }
    let learners = config
        .learners
        .iter()
        .zip(by_learner)
        .map(|(&kind, runs)| LearnerSummary::from_runs(kind, n_arms, &config.windows, runs))
        .collect();
    (Panel { name, target, learners }, failures)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_names_round_trip() {
        for s in ["kidney", "magazine", "predprey-synthetic", "predprey-fullsim", "data/custom.csv"] {
            let parsed: Scenario = s.parse().unwrap();
            assert_eq!(parsed.name(), s);
        }
        assert_eq!("tables/x.json".parse::<Scenario>().unwrap(), Scenario::Custom("tables/x.json".into()));
    }

    #[test]
    fn config_json_defaults_and_unknown_fields() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"scenario": "magazine", "seeds": 3}"#).unwrap();
        assert_eq!(cfg.scenario, Scenario::Magazine);
        assert_eq!(cfg.seeds, 3);
        assert_eq!(cfg.windows, vec![5, 10, 15]);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"sedes": 3}"#).is_err());
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = ExperimentConfig::for_scenario(Scenario::PredpreySynthetic);
        assert!(ExperimentConfig { seeds: 0, ..base.clone() }.validate().is_err());
        assert!(ExperimentConfig { windows: vec![5, 0], ..base.clone() }.validate().is_err());
        assert!(ExperimentConfig { skews: vec!["nope".into()], ..base.clone() }.validate().is_err());
        assert!(ExperimentConfig { noise_sigma: -1.0, ..base.clone() }.validate().is_err());
        assert!(base.validate().is_ok());
    }

    #[test]
    fn failing_learner_is_recorded_per_seed() {
        // Thompson needs binary rewards in the configured range; magazine
        // rewards are {0, 1} but the range says otherwise.
        let cfg = ExperimentConfig {
            scenario: Scenario::Magazine,
            learners: vec![LearnerKind::VanillaQ, LearnerKind::Thompson],
            learner: LearnerConfig { reward_range: (-1.0, 1.0), ..LearnerConfig::default() },
            seeds: 2,
            records: 200,
            ..ExperimentConfig::default()
        };
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.failures.len(), 2);
        assert!(report.failures.iter().all(|f| f.learner == Some(LearnerKind::Thompson) && f.kind == "learner"));
        assert_eq!(report.panels[0].learners[0].runs.len(), 2);
        assert!(report.panels[0].learners[1].runs.is_empty());
    }
}
