//! CSV, JSON and key-value artifacts, each headed by the hash of the producing configuration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ftocp::FtocpSolution;
use crate::mpc::TrajectoryRecord;

/// 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Hex SHA-256 of the JSON encoding of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config).map_err(|e| Error::InvalidConfig(format!("config encoding: {e}")))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Rows of strings under a header.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn push_floats(&mut self, row: impl IntoIterator<Item = f64>) {
        self.push(row.into_iter().map(fmt_float).collect());
    }

    /// CSV body without the hash line.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&self.headers).map_err(io)?;
        for row in &self.rows {
            w.write_record(row).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn hash_line(hash: &str) -> String {
    format!("# config_hash={hash}\n")
}

pub fn write_csv(path: &Path, hash: &str, table: &Table) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(hash_line(hash).as_bytes())?;
    out.write_all(table.to_csv()?.as_bytes())?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Hashed<'a, T: Serialize> {
    config_hash: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON object with a leading `config_hash` field.
pub fn write_json<T: Serialize>(path: &Path, hash: &str, body: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(&Hashed { config_hash: hash, body })
        .map_err(|e| Error::InvalidConfig(format!("json encoding: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Flat `key = value` lines.
pub fn write_key_values(path: &Path, hash: &str, pairs: &[(String, f64)]) -> Result<()> {
    let mut text = hash_line(hash);
    for (k, v) in pairs {
        text.push_str(&format!("{k} = {}\n", fmt_float(*v)));
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Rows (t, x components, u components, e_t, ‖x_t − x*_t‖, stage cost); the last row has no action.
pub fn trajectory_table(run: &TrajectoryRecord) -> Table {
    let n = run.states.first().map_or(0, |x| x.len());
    let m = run.actions.first().map_or(0, |u| u.len());
    let mut headers = vec!["t".to_string()];
    headers.extend((0..n).map(|i| format!("x{i}")));
    headers.extend((0..m).map(|i| format!("u{i}")));
    headers.extend(["error", "distance", "stage_cost"].map(String::from));
    let mut table = Table::new(headers);
    for (t, x) in run.states.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(x.iter().map(|v| fmt_float(*v)));
        match run.actions.get(t) {
            Some(u) => {
                row.extend(u.iter().map(|v| fmt_float(*v)));
                row.push(fmt_float(run.errors[t]));
                row.push(fmt_float(run.distances[t]));
                row.push(fmt_float(run.stage_costs[t]));
            }
            None => {
                row.extend((0..m).map(|_| String::new()));
                row.push(String::new());
                row.push(fmt_float(run.distances[t]));
                row.push(fmt_float(run.terminal_cost));
            }
        }
        table.push(row);
    }
    table
}

/// Rows (t, y, v, η) of one window solution.
pub fn solution_table(sol: &FtocpSolution) -> Table {
    let n = sol.states[0].len();
    let m = sol.actions.first().map_or(0, |v| v.len());
    let nd = sol.duals.first().map_or(0, |d| d.len());
    let mut headers = vec!["t".to_string()];
    headers.extend((0..n).map(|i| format!("y{i}")));
    headers.extend((0..m).map(|i| format!("v{i}")));
    headers.extend((0..nd).map(|i| format!("eta{i}")));
    let mut table = Table::new(headers);
    for (i, y) in sol.states.iter().enumerate() {
        let mut row = vec![(sol.start + i).to_string()];
        row.extend(y.iter().map(|v| fmt_float(*v)));
        match sol.actions.get(i) {
            Some(v) => row.extend(v.iter().map(|x| fmt_float(*x))),
            None => row.extend((0..m).map(|_| String::new())),
        }
        match sol.duals.get(i) {
            Some(d) => row.extend(d.iter().map(|x| fmt_float(*x))),
            None => row.extend((0..nd).map(|_| String::new())),
        }
        table.push(row);
    }
    table
}
