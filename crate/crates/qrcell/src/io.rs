//! Tables, report output and the CSV input formats.

use std::io::{Read, Write};

use anyhow::{anyhow, bail, Context};
use qrcell_core::fit::{CurvePoint, FidelityCurve};
use qrcell_core::qcore::{DensityMatrix, Register};
use qrcell_core::tomo::{Basis, Counts, SettingCounts};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    #[default]
    Json,
}

/// Rows of scalar cells under named columns.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Value>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }

    pub fn to_json_rows(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> = self.columns.iter().cloned().zip(row.iter().cloned()).collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }

    pub fn write_csv<W: Write>(&self, out: W) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(cell))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Result of one command: a table for CSV output and the same rows plus
/// optional details for JSON output.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub command: &'static str,
    pub table: Table,
    pub details: Option<Value>,
    /// Set when the numbers were produced but did not converge.
    pub failure: Option<String>,
}

impl Report {
    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("command".into(), json!(self.command));
        obj.insert("rows".into(), self.table.to_json_rows());
        if let Some(d) = &self.details {
            obj.insert("details".into(), d.clone());
        }
        if let Some(f) = &self.failure {
            obj.insert("failure".into(), json!(f));
        }
        Value::Object(obj)
    }

    pub fn write<W: Write>(&self, format: Format, mut out: W) -> anyhow::Result<()> {
        match format {
            Format::Csv => self.table.write_csv(out),
            Format::Json => {
                serde_json::to_writer_pretty(&mut out, &self.to_json())?;
                writeln!(out)?;
                Ok(())
            }
        }
    }
}

/// JSON-friendly density matrix: real and imaginary parts row by row.
pub fn matrix_json(rho: &DensityMatrix) -> Value {
    let m = rho.matrix();
    let d = m.dim();
    let re: Vec<Vec<f64>> = (0..d).map(|r| (0..d).map(|c| m[(r, c)].re).collect()).collect();
    let im: Vec<Vec<f64>> = (0..d).map(|r| (0..d).map(|c| m[(r, c)].im).collect()).collect();
    json!({ "register": rho.register().qubits(), "re": re, "im": im })
}

#[derive(Debug, Deserialize, Serialize)]
struct CurveRow {
    n_max: u64,
    fidelity: f64,
    sigma: f64,
}

/// Curve CSV with header `n_max,fidelity,sigma`.
pub fn read_curve<R: Read>(input: R) -> anyhow::Result<FidelityCurve> {
    let mut rd = csv::Reader::from_reader(input);
    let mut points = Vec::new();
    for (i, row) in rd.deserialize::<CurveRow>().enumerate() {
        let row = row.with_context(|| format!("curve row {}", i + 1))?;
        points.push(CurvePoint {
            n_max: row.n_max,
            fidelity: row.fidelity,
            sigma: row.sigma,
        });
    }
    Ok(FidelityCurve::new(points)?)
}

pub fn write_curve<W: Write>(curve: &FidelityCurve, out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in curve.points() {
        w.serialize(CurveRow {
            n_max: p.n_max,
            fidelity: p.fidelity,
            sigma: p.sigma,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize, Serialize)]
struct CountRow {
    setting: String,
    outcome: String,
    count: f64,
}

/// Counts CSV with header `setting,outcome,count`. `setting` names one basis
/// per qubit (`"XZ"`), `outcome` is a bit string with the first qubit first.
/// Missing outcomes of a listed setting count as zero.
pub fn read_counts<R: Read>(input: R, register: Register) -> anyhow::Result<Counts> {
    let k = register.len();
    let mut settings: Vec<SettingCounts> = Vec::new();
    let mut rd = csv::Reader::from_reader(input);
    for (i, row) in rd.deserialize::<CountRow>().enumerate() {
        let row = row.with_context(|| format!("counts row {}", i + 1))?;
        let bases = row
            .setting
            .chars()
            .map(|c| Basis::from_char(c).ok_or_else(|| anyhow!("unknown basis `{c}` in row {}", i + 1)))
            .collect::<anyhow::Result<Vec<_>>>()?;
        if bases.len() != k || row.outcome.len() != k {
            bail!("row {}: expected {k} qubits", i + 1);
        }
        let index = usize::from_str_radix(&row.outcome, 2).with_context(|| format!("row {}: outcome", i + 1))?;
        if !(row.count >= 0.0 && row.count.is_finite()) {
            bail!("row {}: count must be non-negative", i + 1);
        }
        let pos = match settings.iter().position(|s| s.bases == bases) {
            Some(p) => p,
            None => {
                settings.push(SettingCounts {
                    bases,
                    counts: vec![0.0; 1 << k],
                });
                settings.len() - 1
            }
        };
        settings[pos].counts[index] += row.count;
    }
    Ok(Counts {
        register,
        settings,
        analytic: false,
    })
}

pub fn write_counts<W: Write>(counts: &Counts, out: W) -> anyhow::Result<()> {
    let k = counts.register.len();
    let mut w = csv::Writer::from_writer(out);
    for s in &counts.settings {
        let setting: String = s.bases.iter().map(|b| b.name()).collect();
        for (i, &c) in s.counts.iter().enumerate() {
            w.serialize(CountRow {
                setting: setting.clone(),
                outcome: format!("{i:0k$b}"),
                count: c,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}
