//! Domain identifiers, interaction records and contingency tables.
//!
//! A [`ContingencyTable`] holds exact (successes, trials) counts for every
//! (instance, arm) cell of one teammate type. Probabilities are never stored;
//! [`Marginals`] derives them from integer totals on demand.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

// ── Identifiers ─────────────────────────────────────────────────────────

/// Teammate type label.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeId(pub u32);

/// Teammate instance within a type. Display names live on the table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstanceId(pub usize);

/// Candidate policy (arm) of the controlled agent; contiguous from 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArmId(pub usize);

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for ArmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

/// One observed interaction with a teammate.
///
/// `instance` is `None` when the confounder was not recorded; learners that
/// rectify rewards refuse such records.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    #[serde(rename = "type")]
    pub type_id: TypeId,
    pub instance: Option<InstanceId>,
    pub arm: ArmId,
    pub reward: f64,
}

impl InteractionRecord {
    pub fn new(type_id: TypeId, instance: InstanceId, arm: ArmId, reward: f64) -> Self {
        Self { type_id, instance: Some(instance), arm, reward }
    }
}

// ── Errors ──────────────────────────────────────────────────────────────

#[derive(Debug, Error)]
pub enum TableError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("cell ({instance}, {arm}): successes {successes} exceed trials {trials}")]
    SuccessesExceedTrials { instance: String, arm: String, successes: u64, trials: u64 },

    #[error("line {line}: duplicate cell ({instance}, {arm})")]
    DuplicateCell { line: u64, instance: String, arm: String },

    #[error("table has no trials")]
    NoTrials,

    #[error("cell grid is {got} cells, expected {expected}")]
    Shape { expected: usize, got: usize },

    #[error("unknown scenario {0:?} (expected \"kidney\" or \"magazine\")")]
    UnknownScenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ── Contingency table ───────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub successes: u64,
    pub trials: u64,
}

impl Cell {
    pub fn new(successes: u64, trials: u64) -> Self {
        Self { successes, trials }
    }
}

/// Counts of (instance, arm) → (successes, trials) for a single teammate type.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    type_id: TypeId,
    instance_names: Vec<String>,
    arm_names: Vec<String>,
    /// Row-major `[instance][arm]`.
    cells: Vec<Cell>,
    /// Cells in the order they were supplied; emission follows this order.
    order: Vec<(InstanceId, ArmId)>,
}

impl ContingencyTable {
    /// Builds a dense table. `cells` is row-major over instances × arms.
    pub fn new(
        type_id: TypeId,
        instance_names: Vec<String>,
        arm_names: Vec<String>,
        cells: Vec<Cell>,
    ) -> Result<Self, TableError> {
        let expected = instance_names.len() * arm_names.len();
        if cells.len() != expected {
            return Err(TableError::Shape { expected, got: cells.len() });
        }
        let order = (0..instance_names.len())
            .flat_map(|n| (0..arm_names.len()).map(move |a| (InstanceId(n), ArmId(a))))
            .collect();
        let table = Self { type_id, instance_names, arm_names, cells, order };
        table.validate()?;
        Ok(table)
    }

    /// Builds a table from named cells, assigning ids by first appearance.
    /// Cells that never appear have zero trials.
    pub fn from_named_cells<I, S>(type_id: TypeId, rows: I) -> Result<Self, TableError>
    where
        I: IntoIterator<Item = (u64, S, S, u64, u64)>,
        S: Into<String>,
    {
        let mut instance_names: Vec<String> = Vec::new();
        let mut arm_names: Vec<String> = Vec::new();
        let mut sparse: Vec<(InstanceId, ArmId, Cell)> = Vec::new();
        let mut seen: HashMap<(usize, usize), u64> = HashMap::new();
        for (line, instance, arm, successes, trials) in rows {
            let (instance, arm) = (instance.into(), arm.into());
            let n = index_of(&mut instance_names, &instance);
            let a = index_of(&mut arm_names, &arm);
            if seen.insert((n, a), line).is_some() {
                return Err(TableError::DuplicateCell { line, instance, arm });
            }
            sparse.push((InstanceId(n), ArmId(a), Cell::new(successes, trials)));
        }
        let width = arm_names.len();
        let mut cells = vec![Cell::default(); instance_names.len() * width];
        let mut order = Vec::with_capacity(sparse.len());
        for (n, a, cell) in sparse {
            cells[n.0 * width + a.0] = cell;
            order.push((n, a));
        }
        let table = Self { type_id, instance_names, arm_names, cells, order };
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<(), TableError> {
        for &(n, a) in &self.order {
            let c = self.cell(n, a);
            if c.successes > c.trials {
                return Err(TableError::SuccessesExceedTrials {
                    instance: self.instance_name(n).to_string(),
                    arm: self.arm_name(a).to_string(),
                    successes: c.successes,
                    trials: c.trials,
                });
            }
        }
        if self.cells.iter().all(|c| c.trials == 0) {
            return Err(TableError::NoTrials);
        }
        Ok(())
    }

    pub fn type_id(&self) -> TypeId {
        self.type_id
    }

    pub fn n_instances(&self) -> usize {
        self.instance_names.len()
    }

    pub fn n_arms(&self) -> usize {
        self.arm_names.len()
    }

    pub fn instances(&self) -> impl Iterator<Item = InstanceId> {
        (0..self.n_instances()).map(InstanceId)
    }

    pub fn arms(&self) -> impl Iterator<Item = ArmId> {
        (0..self.n_arms()).map(ArmId)
    }

    pub fn instance_names(&self) -> &[String] {
        &self.instance_names
    }

    pub fn arm_names(&self) -> &[String] {
        &self.arm_names
    }

    pub fn instance_name(&self, n: InstanceId) -> &str {
        &self.instance_names[n.0]
    }

    pub fn arm_name(&self, a: ArmId) -> &str {
        &self.arm_names[a.0]
    }

    pub fn instance_by_name(&self, name: &str) -> Option<InstanceId> {
        self.instance_names.iter().position(|s| s == name).map(InstanceId)
    }

    pub fn arm_by_name(&self, name: &str) -> Option<ArmId> {
        self.arm_names.iter().position(|s| s == name).map(ArmId)
    }

    pub fn cell(&self, n: InstanceId, a: ArmId) -> Cell {
        self.cells[n.0 * self.n_arms() + a.0]
    }

    /// Cells in supplied order.
    pub fn cell_order(&self) -> &[(InstanceId, ArmId)] {
        &self.order
    }

    pub fn marginals(&self) -> Marginals<'_> {
        Marginals::new(self)
    }

    /// Writes the table in the CSV scenario format, cells in supplied order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), TableError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["instance", "arm", "successes", "trials"]).map_err(csv_io)?;
        for &(n, a) in &self.order {
            let c = self.cell(n, a);
            w.write_record([
                self.instance_name(n),
                self.arm_name(a),
                &c.successes.to_string(),
                &c.trials.to_string(),
            ])
            .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("names are UTF-8")
    }
}

fn index_of(names: &mut Vec<String>, name: &str) -> usize {
    match names.iter().position(|s| s == name) {
        Some(i) => i,
        None => {
            names.push(name.to_string());
            names.len() - 1
        }
    }
}

fn csv_io(e: csv::Error) -> TableError {
    TableError::Io(std::io::Error::other(e))
}

// ── Loading ─────────────────────────────────────────────────────────────

#[derive(Deserialize)]
struct JsonCell {
    instance: String,
    arm: String,
    successes: u64,
    trials: u64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonTable {
    Object {
        #[serde(rename = "type", default)]
        type_id: TypeId,
        cells: Vec<JsonCell>,
    },
    Bare(Vec<JsonCell>),
}

/// Reads a table in the scenario file format: CSV with header
/// `instance,arm,successes,trials` (`#` lines are comments), or a JSON
/// object `{"type": 0, "cells": [...]}` / bare array with the same fields.
pub fn load_contingency_table<R: Read>(mut source: R) -> Result<ContingencyTable, TableError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let first = text.trim_start().chars().next();
    if matches!(first, Some('{') | Some('[')) {
        parse_json(&text)
    } else {
        parse_csv(&text)
    }
}

fn parse_json(text: &str) -> Result<ContingencyTable, TableError> {
    let parsed: JsonTable = serde_json::from_str(text)
        .map_err(|e| TableError::Parse { line: e.line() as u64, message: e.to_string() })?;
    let (type_id, cells) = match parsed {
        JsonTable::Object { type_id, cells } => (type_id, cells),
        JsonTable::Bare(cells) => (TypeId::default(), cells),
    };
    ContingencyTable::from_named_cells(
        type_id,
        cells.into_iter().enumerate().map(|(i, c)| (i as u64 + 1, c.instance, c.arm, c.successes, c.trials)),
    )
}

fn parse_csv(text: &str) -> Result<ContingencyTable, TableError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header_line = text
        .lines()
        .position(|l| !l.trim_start().starts_with('#'))
        .map_or(1, |i| i as u64 + 1);
    let headers = reader
        .headers()
        .map_err(|e| TableError::Parse { line: header_line, message: e.to_string() })?
        .clone();
    let expected = ["instance", "arm", "successes", "trials"];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(TableError::Parse {
            line: header_line,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| TableError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let count = |i: usize, what: &str| -> Result<u64, TableError> {
            record[i].parse::<u64>().map_err(|_| TableError::Parse {
                line,
                message: format!("{what} {:?} is not a non-negative integer", &record[i]),
            })
        };
        let successes = count(2, "successes")?;
        let trials = count(3, "trials")?;
        rows.push((line, record[0].to_string(), record[1].to_string(), successes, trials));
    }
    ContingencyTable::from_named_cells(TypeId::default(), rows)
}

// ── Builtin scenarios ───────────────────────────────────────────────────

const KIDNEY_CSV: &str = include_str!("../data/kidney.csv");
const MAGAZINE_CSV: &str = include_str!("../data/magazine.csv");

/// Bundled scenarios: `"kidney"` (stone size × treatment) and `"magazine"`
/// (subscription category × month).
///
/// The magazine February total is printed transposed in its source; the
/// bundled rows sum to 5,869 renewed out of 9,157.
pub fn builtin_scenario(name: &str) -> Result<ContingencyTable, TableError> {
    let text = match name {
        "kidney" => KIDNEY_CSV,
        "magazine" => MAGAZINE_CSV,
        other => return Err(TableError::UnknownScenario(other.to_string())),
    };
    load_contingency_table(text.as_bytes())
}

// ── Marginals ───────────────────────────────────────────────────────────

/// Conditional probabilities of a table, derived from exact integer totals.
///
/// Conditionals whose conditioning event has no trials are `None`.
/// `success_rate` of an uncovered cell is 0 and [`Marginals::is_covered`]
/// reports it.
#[derive(Clone, Debug)]
pub struct Marginals<'a> {
    table: &'a ContingencyTable,
    instance_trials: Vec<u64>,
    arm_trials: Vec<u64>,
    total: u64,
}

impl<'a> Marginals<'a> {
    pub fn new(table: &'a ContingencyTable) -> Self {
        let mut instance_trials = vec![0; table.n_instances()];
        let mut arm_trials = vec![0; table.n_arms()];
        for n in table.instances() {
            for a in table.arms() {
                let t = table.cell(n, a).trials;
                instance_trials[n.0] += t;
                arm_trials[a.0] += t;
            }
        }
        let total = instance_trials.iter().sum();
        Self { table, instance_trials, arm_trials, total }
    }

    pub fn table(&self) -> &'a ContingencyTable {
        self.table
    }

    pub fn total_trials(&self) -> u64 {
        self.total
    }

    pub fn instance_trials(&self, n: InstanceId) -> u64 {
        self.instance_trials[n.0]
    }

    pub fn arm_trials(&self, a: ArmId) -> u64 {
        self.arm_trials[a.0]
    }

    pub fn arm_successes(&self, a: ArmId) -> u64 {
        self.table.instances().map(|n| self.table.cell(n, a).successes).sum()
    }

    /// p(n | θ)
    pub fn p_instance_given_type(&self, n: InstanceId) -> f64 {
        ratio(self.instance_trials[n.0], self.total)
    }

    /// p(π | θ)
    pub fn p_arm_given_type(&self, a: ArmId) -> f64 {
        ratio(self.arm_trials[a.0], self.total)
    }

    /// p(n | π, θ)
    pub fn p_instance_given_arm(&self, a: ArmId, n: InstanceId) -> Option<f64> {
        let denom = self.arm_trials[a.0];
        (denom > 0).then(|| ratio(self.table.cell(n, a).trials, denom))
    }

    /// p(π | θ, n)
    pub fn p_arm_given_instance(&self, n: InstanceId, a: ArmId) -> Option<f64> {
        let denom = self.instance_trials[n.0];
        (denom > 0).then(|| ratio(self.table.cell(n, a).trials, denom))
    }

    /// p(y* | π, n); 0 for uncovered cells.
    pub fn success_rate(&self, n: InstanceId, a: ArmId) -> f64 {
        let c = self.table.cell(n, a);
        if c.trials == 0 {
            0.0
        } else {
            ratio(c.successes, c.trials)
        }
    }

    pub fn is_covered(&self, n: InstanceId, a: ArmId) -> bool {
        self.table.cell(n, a).trials > 0
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    num as f64 / den as f64
}
