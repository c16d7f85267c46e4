use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::buffer::Selection;
use super::HarnessError;
use crate::candidates::mean_std;
use crate::learners::LearnerKind;
use crate::table::ArmId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed_index: usize,
    pub learner: LearnerKind,
    pub estimates: Vec<f64>,
    pub preferred: ArmId,
    /// One entry per observation window; empty for bandit scenarios.
    pub selections: Vec<Selection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerSummary {
    pub learner: LearnerKind,
    pub estimate_mean: Vec<f64>,
    pub estimate_std: Vec<f64>,
    /// Fraction of seeds whose preferred arm is each arm.
    pub preferred_proportion: Vec<f64>,
    /// Seed-averaged deployment results per window.
    pub selections: Vec<Selection>,
    pub runs: Vec<RunRecord>,
}

impl LearnerSummary {
    pub fn from_runs(learner: LearnerKind, n_arms: usize, windows: &[u32], runs: Vec<RunRecord>) -> Self {
        let k = runs.len().max(1) as f64;
        let (estimate_mean, estimate_std) = (0..n_arms)
            .map(|a| mean_std(&runs.iter().map(|r| r.estimates[a]).collect::<Vec<_>>()))
            .unzip();
        let mut preferred_proportion = vec![0.0; n_arms];
        for r in &runs {
            preferred_proportion[r.preferred.0] += 1.0 / k;
        }
        let has_windows = runs.first().is_some_and(|r| !r.selections.is_empty());
        let selections = if has_windows {
            windows
                .iter()
                .enumerate()
                .map(|(w, &t)| Selection {
                    t,
                    proportions: (0..n_arms)
                        .map(|a| runs.iter().map(|r| r.selections[w].proportions[a]).sum::<f64>() / k)
                        .collect(),
                    mean_success: runs.iter().map(|r| r.selections[w].mean_success).sum::<f64>() / k,
                })
                .collect()
        } else {
            Vec::new()
        };
        Self { learner, estimate_mean, estimate_std, preferred_proportion, selections, runs }
    }

    pub fn selection(&self, t: u32) -> Option<&Selection> {
        self.selections.iter().find(|s| s.t == t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub name: String,
    pub target: Option<ArmId>,
    pub learners: Vec<LearnerSummary>,
}

impl Panel {
    pub fn learner(&self, kind: LearnerKind) -> Option<&LearnerSummary> {
        self.learners.iter().find(|l| l.learner == kind)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub panel: String,
    pub seed_index: usize,
    pub learner: Option<LearnerKind>,
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsReport {
    pub scenario: String,
    pub master_seed: u64,
    pub seeds: usize,
    pub arm_names: Vec<String>,
    pub panels: Vec<Panel>,
    pub failures: Vec<SeedFailure>,
}

impl ResultsReport {
    pub fn empty(scenario: impl Into<String>) -> Self {
        Self { scenario: scenario.into(), master_seed: 0, seeds: 0, arm_names: Vec::new(), panels: Vec::new(), failures: Vec::new() }
    }

    pub fn panel(&self, name: &str) -> Option<&Panel> {
        self.panels.iter().find(|p| p.name == name)
    }

    pub fn arm_by_name(&self, name: &str) -> Option<ArmId> {
        self.arm_names.iter().position(|n| n == name).map(ArmId)
    }

    /// One row per panel × learner × arm × (no window, then each window).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("learner,arm,t,mean,std,proportion,panel\n");
        let num = |x: f64| if x.is_finite() { format!("{x:.6}") } else { String::new() };
        for panel in &self.panels {
            for l in &panel.learners {
                let has_runs = !l.runs.is_empty();
                for (a, arm) in self.arm_names.iter().enumerate() {
                    let (mean, std) = if has_runs { (num(l.estimate_mean[a]), num(l.estimate_std[a])) } else { Default::default() };
                    let prop = if has_runs { num(l.preferred_proportion[a]) } else { String::new() };
                    let _ = writeln!(out, "{},{arm},,{mean},{std},{prop},{}", l.learner, panel.name);
                    for sel in &l.selections {
                        let _ = writeln!(out, "{},{arm},{},{mean},{std},{},{}", l.learner, sel.t, num(sel.proportions[a]), panel.name);
                    }
                }
            }
        }
        out
    }

    /// Grouped bar chart of selection proportions for one panel: the largest
    /// window's proportions when deployments ran, preferred-arm proportions
    /// otherwise.
    pub fn panel_svg(&self, panel: &Panel) -> String {
        const BAR: f64 = 18.0;
        const GAP: f64 = 24.0;
        const HEIGHT: f64 = 160.0;
        const TOP: f64 = 30.0;
        let n_arms = self.arm_names.len().max(1);
        let group = n_arms as f64 * BAR + GAP;
        let width = 60.0 + group * panel.learners.len().max(1) as f64;
        let palette = ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7"];
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" font-family="sans-serif" font-size="11">"#,
            w = width,
            h = TOP + HEIGHT + 60.0
        );
        let _ = writeln!(svg, r#"<text x="10" y="18" font-size="13">{}</text>"#, escape(&panel.name));
        let base = TOP + HEIGHT;
        let _ = writeln!(svg, r#"<line x1="40" y1="{base}" x2="{width:.0}" y2="{base}" stroke="black"/>"#);
        let _ = writeln!(svg, r#"<text x="4" y="{:.0}">1.0</text><text x="4" y="{base:.0}">0.0</text>"#, TOP + 4.0);
        for (li, l) in panel.learners.iter().enumerate() {
            let bars = l.selections.last().map_or(&l.preferred_proportion, |s| &s.proportions);
            let x0 = 50.0 + li as f64 * group;
            for (a, &p) in bars.iter().enumerate() {
                let h = p.clamp(0.0, 1.0) * HEIGHT;
                let _ = writeln!(
                    svg,
                    r#"<rect x="{x:.1}" y="{y:.1}" width="{bw:.1}" height="{h:.1}" fill="{c}"><title>{arm}: {p:.3}</title></rect>"#,
                    x = x0 + a as f64 * BAR,
                    y = base - h,
                    bw = BAR - 2.0,
                    c = palette[a % palette.len()],
                    arm = escape(&self.arm_names[a]),
                );
            }
            let _ = writeln!(svg, r#"<text x="{x0:.1}" y="{:.0}">{}</text>"#, base + 16.0, l.learner);
        }
        for (a, arm) in self.arm_names.iter().enumerate() {
            let x = 50.0 + a as f64 * 70.0;
            let y = base + 40.0;
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.0}" y="{:.0}" width="10" height="10" fill="{}"/><text x="{:.0}" y="{y:.0}">{}</text>"#,
                y - 9.0,
                palette[a % palette.len()],
                x + 14.0,
                escape(arm)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Svg,
}

impl OutputFormat {
    /// Parses a comma-separated list such as `csv,json`.
    pub fn parse_list(s: &str) -> Result<Vec<Self>, String> {
        s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(str::parse).collect()
    }
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "svg" => Ok(OutputFormat::Svg),
            other => Err(format!("unknown format {other:?} (expected csv, json or svg)")),
        }
    }
}

fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Writes `report.csv`, `report.json` and/or one `panel-<name>.svg` per
/// panel into `dir`, creating it if needed. Returns the written paths.
pub fn emit_report(report: &ResultsReport, formats: &[OutputFormat], dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut written = Vec::new();
    let mut write = |name: String, body: String| -> Result<(), HarnessError> {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    for format in formats {
        match format {
            OutputFormat::Csv => write("report.csv".into(), report.to_csv())?,
            OutputFormat::Json => write("report.json".into(), serde_json::to_string_pretty(report)? + "\n")?,
            OutputFormat::Svg => {
                for panel in &report.panels {
                    write(format!("panel-{}.svg", file_stem(&panel.name)), report.panel_svg(panel))?;
                }
            }
        }
    }
    Ok(written)
}
