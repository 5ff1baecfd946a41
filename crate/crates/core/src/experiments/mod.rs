//! Verification pipelines: numeric vs rotated-frame vs closed form,
//! convergence scans, and generator-structure checks.
//!
//! Every pipeline returns a [`ComparisonReport`]: a table of per-point
//! numbers, derived metrics, power-law fits, and named tolerance checks.
//! A check never carries a verdict without the number it was made on.

pub mod acceptance;
mod fit;
mod pipelines;
mod scans;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fit::{oscillation_fit, oscillation_phase, power_law_fit, OscillationFit};
pub use pipelines::*;
pub use scans::*;

/// Log-log fits with an RMS residual above this are inconclusive.
pub const INCONCLUSIVE_RESIDUAL: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

/// A named comparison of a measured number against a tolerance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    /// `None` when the check is a bound on `measured` itself.
    pub target: Option<f64>,
    pub tolerance: f64,
    pub status: Status,
}

impl Check {
    /// `|measured - target| <= tolerance`
    pub fn within(name: impl Into<String>, measured: f64, target: f64, tolerance: f64) -> Self {
        let ok = (measured - target).abs() <= tolerance;
        Check { name: name.into(), measured, target: Some(target), tolerance, status: verdict(ok) }
    }

    /// `measured < bound`
    pub fn below(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Check { name: name.into(), measured, target: None, tolerance: bound, status: verdict(measured < bound) }
    }

    /// `|measured - target| <= rel * |target|`
    pub fn relative(name: impl Into<String>, measured: f64, target: f64, rel: f64) -> Self {
        let ok = (measured - target).abs() <= rel * target.abs();
        Check { name: name.into(), measured, target: Some(target), tolerance: rel, status: verdict(ok) }
    }

    /// Slope check that degrades to inconclusive when the fit itself is poor.
    pub fn slope(name: impl Into<String>, fit: &PowerLawFit, target: f64, tolerance: f64) -> Self {
        let mut c = Check::within(name, fit.exponent, target, tolerance);
        if !fit.conclusive() {
            c.status = Status::Inconclusive;
        }
        c
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

fn verdict(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

/// `y = prefactor * x^exponent` fitted on log-log axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub x: String,
    pub y: String,
    pub exponent: f64,
    pub prefactor: f64,
    /// RMS of the natural-log residuals.
    pub residual: f64,
    pub points: usize,
}

impl PowerLawFit {
    pub fn conclusive(&self) -> bool {
        self.residual <= INCONCLUSIVE_RESIDUAL && self.exponent.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub name: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub metrics: BTreeMap<String, f64>,
    pub fits: Vec<PowerLawFit>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl ComparisonReport {
    pub fn new(name: impl Into<String>, config: serde_json::Value) -> Self {
        ComparisonReport {
            name: name.into(),
            config,
            seed: None,
            columns: Vec::new(),
            rows: Vec::new(),
            metrics: BTreeMap::new(),
            fits: Vec::new(),
            checks: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn with_columns(mut self, columns: &[&str]) -> Self {
        self.columns = columns.iter().map(|c| c.to_string()).collect();
        self
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::DimMismatch { left: row.len(), right: self.columns.len() });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    pub fn check(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Column by name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Fails beat inconclusive results, which beat passes.
    pub fn status(&self) -> Status {
        if self.checks.iter().any(|c| c.status == Status::Fail) {
            Status::Fail
        } else if self.checks.iter().any(|c| c.status == Status::Inconclusive) {
            Status::Inconclusive
        } else {
            Status::Pass
        }
    }

    pub fn passed(&self) -> bool {
        self.status() == Status::Pass
    }

    /// Folds another report's checks, metrics and notes in, prefixing names.
    pub fn absorb(&mut self, prefix: &str, other: ComparisonReport) {
        for (k, v) in other.metrics {
            self.metrics.insert(format!("{prefix}.{k}"), v);
        }
        for mut c in other.checks {
            c.name = format!("{prefix}: {}", c.name);
            self.checks.push(c);
        }
        self.fits.extend(other.fits);
        self.notes.extend(other.notes.into_iter().map(|n| format!("{prefix}: {n}")));
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v["status"] = serde_json::to_value(self.status()).expect("status serializes");
        v
    }

    /// Grid table as CSV, preceded by `#` comment lines holding the config.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_table(out, &self.config, &self.columns, &self.rows)
    }
}

/// Writes `# config` comment lines and a table of `%.16e` numbers.
pub fn write_table<W: Write>(
    mut out: W,
    config: &serde_json::Value,
    columns: &[String],
    rows: &[Vec<f64>],
) -> Result<()> {
    let io = |e: std::io::Error| Error::InvalidArgument(format!("write failed: {e}"));
    writeln!(out, "# config {}", config).map_err(io)?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::InvalidArgument(format!("write failed: {e}"));
    w.write_record(columns).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|x| format!("{x:.16e}"))).map_err(csv_err)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

/// Reads a table written by [`write_table`]; comment lines are skipped.
pub fn read_table<R: std::io::Read>(input: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let bad = |e: csv::Error| Error::InvalidArgument(format!("malformed table: {e}"));
    let columns = r.headers().map_err(bad)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(bad)?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| Error::InvalidArgument(format!("not a number: {s}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((columns, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_precedence() {
        let mut r = ComparisonReport::new("x", serde_json::json!({}));
        r.check(Check::below("a", 1.0, 2.0));
        assert_eq!(r.status(), Status::Pass);
        let fit = PowerLawFit { x: "T".into(), y: "d".into(), exponent: -1.0, prefactor: 1.0, residual: 0.5, points: 4 };
        r.check(Check::slope("s", &fit, -1.0, 0.15));
        assert_eq!(r.status(), Status::Inconclusive);
        r.check(Check::within("c", 3.0, 1.0, 0.5));
        assert_eq!(r.status(), Status::Fail);
        assert!(!r.passed());
    }

    #[test]
    fn table_round_trip_is_bit_exact() {
        let cols = vec!["t".to_string(), "w".to_string()];
        let rows = vec![vec![0.1, -1.0 / 3.0], vec![1e-300, std::f64::consts::PI], vec![5e-324, -0.0]];
        let mut buf = Vec::new();
        write_table(&mut buf, &serde_json::json!({"T": 500.0}), &cols, &rows).unwrap();
        let (c2, r2) = read_table(buf.as_slice()).unwrap();
        assert_eq!(c2, cols);
        for (a, b) in rows.iter().flatten().zip(r2.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn row_width_is_enforced() {
        let mut r = ComparisonReport::new("x", serde_json::json!({})).with_columns(&["a", "b"]);
        assert!(r.push_row(vec![1.0]).is_err());
        r.push_row(vec![1.0, 2.0]).unwrap();
        assert_eq!(r.column("b"), Some(vec![2.0]));
    }
}
