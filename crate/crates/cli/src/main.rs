use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use ctcat_core::candidates::{success_matrix, CandidateError, PolicySet};
use ctcat_core::harness::{
    builtin_skews, emit_report, run_experiment, validate_skew, BanditMode, ExperimentConfig, HarnessError, OutputFormat,
    ResultsReport, Scenario, SkewSpec,
};
use ctcat_core::predprey::PredatorPrey;
use ctcat_core::ArmId;

/// Type-confounding experiments for ad hoc teamwork.
#[derive(Parser)]
#[command(name = "ctcat", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate arm values on a contingency-table bandit (kidney, magazine or a table file).
    RunBandit {
        #[command(flatten)]
        common: Common,
        /// Overrides the config's scenario.
        #[arg(long)]
        scenario: Option<Scenario>,
        /// Overrides the config's bandit mode.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<BanditMode>,
    },
    /// Skewed-buffer selection experiment in the predator-prey setting.
    RunPredprey {
        #[command(flatten)]
        common: Common,
        /// Roll out trained policies instead of sampling the success matrix.
        #[arg(long)]
        fullsim: bool,
    },
    /// Train teammate instances and candidates, then write their success matrix.
    TrainCandidates {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        episodes: Option<usize>,
        /// Evaluation episodes per run for each matrix entry.
        #[arg(long, default_value_t = 100)]
        eval_episodes: usize,
        #[arg(long, default_value_t = 10)]
        runs: usize,
    },
    /// Check that skews confound the success matrix as intended.
    ValidateSkew {
        /// Success matrix CSV; the bundled one if omitted.
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Builtin skew names; all builtins if omitted.
        #[arg(long = "skew")]
        skews: Vec<String>,
        /// JSON file holding one skew or a list of skews.
        #[arg(long)]
        skew_file: Option<PathBuf>,
        /// Arm the skew should favour, for skews that do not name one.
        #[arg(long)]
        target: Option<String>,
    },
    /// Re-emit a JSON report in other formats.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "csv,svg")]
        format: Vec<OutputFormat>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, env = "CTCAT_SEED")]
    seed: Option<u64>,
    /// Output directory; overrides the config (default `results`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "csv,json")]
    format: Vec<OutputFormat>,
}

fn parse_mode(s: &str) -> Result<BanditMode, String> {
    match s {
        "logged" => Ok(BanditMode::Logged),
        "interactive" => Ok(BanditMode::Interactive),
        _ => Err(format!("unknown mode {s:?} (expected logged or interactive)")),
    }
}

impl Common {
    fn config(&self, default: Scenario) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::for_scenario(default),
        };
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.out.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("results"))
    }
}

struct Failure {
    kind: &'static str,
    message: String,
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure { kind: e.kind(), message: e.to_string() }
    }
}

impl From<CandidateError> for Failure {
    fn from(e: CandidateError) -> Self {
        HarnessError::from(e).into()
    }
}

fn failure(kind: &'static str, message: impl Into<String>) -> Failure {
    Failure { kind, message: message.into() }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("{}", json!({ "error": "usage", "message": first }));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", json!({ "error": f.kind, "message": f.message }));
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::RunBandit { common, scenario, mode } => {
            let mut cfg = common.config(Scenario::Kidney)?;
            if let Some(s) = scenario {
                cfg.scenario = s;
            }
            if let Some(m) = mode {
                cfg.bandit_mode = m;
            }
            if cfg.scenario.is_predprey() {
                return Err(failure("config", "predator-prey scenarios run with `run-predprey`"));
            }
            experiment(&cfg, &common)
        }
        Command::RunPredprey { common, fullsim } => {
            let mut cfg = common.config(Scenario::PredpreySynthetic)?;
            if fullsim {
                cfg.scenario = Scenario::PredpreyFullsim;
            }
            if !cfg.scenario.is_predprey() {
                return Err(failure("config", "bandit scenarios run with `run-bandit`"));
            }
            experiment(&cfg, &common)
        }
        Command::TrainCandidates { common, episodes, eval_episodes, runs } => {
            let mut cfg = common.config(Scenario::PredpreyFullsim)?;
            if let Some(e) = episodes {
                cfg.training.episodes = e;
            }
            train_candidates(&cfg, &common.out_dir(&cfg), eval_episodes, runs)
        }
        Command::ValidateSkew { matrix, skews, skew_file, target } => validate(matrix, skews, skew_file, target),
        Command::Report { input, out, format } => {
            let file = File::open(&input).map_err(|e| failure("io", format!("{}: {e}", input.display())))?;
            let report: ResultsReport =
                serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| failure("json", e.to_string()))?;
            print_written(&emit_report(&report, &format, &out)?);
            Ok(())
        }
    }
}

fn experiment(cfg: &ExperimentConfig, common: &Common) -> Result<(), Failure> {
    let report = run_experiment(cfg)?;
    print_summary(&report);
    print_written(&emit_report(&report, &common.format, &common.out_dir(cfg))?);
    if !report.failures.is_empty() {
        eprintln!("{} seed runs failed; see the JSON report", report.failures.len());
    }
    Ok(())
}

fn print_summary(report: &ResultsReport) {
    for panel in &report.panels {
        println!("[{}]", panel.name);
        for l in &panel.learners {
            let est: Vec<String> = report
                .arm_names
                .iter()
                .zip(&l.estimate_mean)
                .zip(&l.estimate_std)
                .map(|((a, m), s)| format!("{a}={m:.3}±{s:.3}"))
                .collect();
            println!("  {:<12} {}", l.learner.as_str(), est.join(" "));
            for sel in &l.selections {
                let props: Vec<String> =
                    report.arm_names.iter().zip(&sel.proportions).map(|(a, p)| format!("{a}={p:.2}")).collect();
                println!("  {:<12} T={:<3} {} success={:.3}", "", sel.t, props.join(" "), sel.mean_success);
            }
        }
    }
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn train_candidates(cfg: &ExperimentConfig, out: &Path, episodes: usize, runs: usize) -> Result<(), Failure> {
    let policies = PolicySet::train(&cfg.grid, &cfg.training, cfg.master_seed)?;
    let env = PredatorPrey::new(cfg.grid.clone()).map_err(|e| failure("predprey", e.to_string()))?;
    let matrix = success_matrix(&env, &policies.instances, &policies.candidates, episodes, runs, cfg.master_seed);
    for (n, name) in matrix.instance_names().iter().enumerate() {
        let row: Vec<String> = matrix
            .row(ctcat_core::InstanceId(n))
            .iter()
            .zip(matrix.arm_names())
            .map(|(r, a)| format!("{a}={r:.2}"))
            .collect();
        println!("{name:<3} {}", row.join(" "));
    }
    println!("pi1 best response for every instance: {}", matrix.is_common_best_response(ArmId(0)));
    fs::create_dir_all(out).map_err(|e| failure("io", format!("{}: {e}", out.display())))?;
    let path = out.join("success_matrix.csv");
    let file = File::create(&path).map_err(|e| failure("io", format!("{}: {e}", path.display())))?;
    matrix.write_csv(std::io::BufWriter::new(file)).map_err(|e| failure("io", format!("{}: {e}", path.display())))?;
    print_written(&[path]);
    Ok(())
}

fn validate(matrix: Option<PathBuf>, names: Vec<String>, skew_file: Option<PathBuf>, target: Option<String>) -> Result<(), Failure> {
    let cfg = ExperimentConfig { matrix, ..ExperimentConfig::default() };
    let matrix = cfg.load_matrix()?;
    let mut skews: Vec<SkewSpec> = if names.is_empty() && skew_file.is_none() {
        builtin_skews()
    } else {
        names
            .iter()
            .map(|n| ctcat_core::harness::builtin_skew(n).ok_or_else(|| failure("config", format!("unknown skew {n:?}"))))
            .collect::<Result<_, _>>()?
    };
    if let Some(path) = skew_file {
        let text = fs::read_to_string(&path).map_err(|e| failure("io", format!("{}: {e}", path.display())))?;
        let parsed: serde_json::Value = serde_json::from_str(&text).map_err(|e| failure("json", e.to_string()))?;
        let list = if parsed.is_array() { parsed } else { serde_json::Value::Array(vec![parsed]) };
        let mut file_skews: Vec<SkewSpec> = serde_json::from_value(list).map_err(|e| failure("json", e.to_string()))?;
        skews.append(&mut file_skews);
    }
    let fallback = match target {
        Some(name) => matrix.arm_by_name(&name).ok_or_else(|| failure("config", format!("matrix has no arm {name:?}")))?,
        None => ArmId(0),
    };
    let reports = skews
        .iter()
        .map(|s| validate_skew(&matrix, s, s.target.unwrap_or(fallback)))
        .collect::<Result<Vec<_>, _>>()?;
    println!("{}", serde_json::to_string_pretty(&reports).expect("reports serialise"));
    Ok(())
}
