//! Result files: trajectory CSVs, JSON artifacts with provenance.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::StateNames;
use crate::solver::Trajectory;

/// C-style `%.17g`: 17 significant digits, trailing zeros removed.
pub fn format_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (16 - exp) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn parse_number(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}

/// A header plus rows of numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

pub fn write_table(table: &Table, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(&table.columns)?;
    for row in &table.rows {
        if row.len() != table.columns.len() {
            return Err(Error::Dimension { what: "table row", expected: table.columns.len(), got: row.len() });
        }
        w.write_record(row.iter().map(|v| format_g17(*v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_table(path: impl AsRef<Path>) -> Result<Table> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let columns: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, s)| {
                parse_number(s).ok_or_else(|| Error::Parse {
                    line: i + 2,
                    column: j + 1,
                    message: format!("not a number: '{s}'"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(Table { columns, rows })
}

/// Header: `tau`, `t` (= τ/ε), `stage`, then every state component.
pub fn trajectory_table(traj: &Trajectory, names: &StateNames, epsilon: f64) -> Table {
    let mut columns = vec!["tau".to_string(), "t".to_string(), "stage".to_string()];
    columns.extend(names.z_c.iter().cloned());
    columns.extend(names.x_bar.iter().cloned());
    columns.extend(names.y_bar.iter().cloned());
    columns.extend(names.z_d.iter().cloned());
    let rows = traj
        .states
        .iter()
        .map(|s| {
            let mut row = vec![s.tau, s.tau / epsilon, s.stage as f64];
            row.extend(&s.z_c);
            row.extend(&s.x_bar);
            row.extend(&s.y_bar);
            row.extend(&s.z_d);
            row
        })
        .collect();
    Table { columns, rows }
}

pub fn save_trajectory(traj: &Trajectory, names: &StateNames, epsilon: f64, path: impl AsRef<Path>) -> Result<()> {
    write_table(&trajectory_table(traj, names, epsilon), path)
}

pub fn load_trajectory(path: impl AsRef<Path>) -> Result<Table> {
    read_table(path)
}

/// `sha256("blob <len>\0" ++ bytes)`, hex encoded.
pub fn git_blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest.iter() {
        write!(out, "{b:02x}").expect("writing to a String");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub scenario_hash: String,
    pub master_seed: Option<u64>,
    /// Full echo of the inputs the hash was computed over.
    pub scenario: serde_json::Value,
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default)]
    pub outputs: Vec<String>,
}

impl Provenance {
    pub fn new(
        command: &str,
        scenario: &crate::scenario::Scenario,
        master_seed: Option<u64>,
        config: serde_json::Value,
    ) -> Result<Self> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            scenario_hash: scenario.content_hash()?,
            master_seed,
            scenario: serde_json::to_value(scenario)?,
            config,
            outputs: Vec::new(),
        })
    }

    /// Recompute the hash from the echoed scenario.
    pub fn verify(&self) -> Result<bool> {
        let sc: crate::scenario::Scenario = serde_json::from_value(self.scenario.clone())?;
        Ok(sc.content_hash()? == self.scenario_hash)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub provenance: Provenance,
    pub result: T,
}

pub fn save_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

pub fn save_stats<T: Serialize>(provenance: Provenance, result: &T, path: impl AsRef<Path>) -> Result<()> {
    save_json(&Artifact { provenance, result }, path)
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line(), column: e.column(), message: e.to_string() })
}
