//! Verification reports and CSV field dumps.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;
use crate::mesh::BoxGrid;

/// How an expected value is known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// Closed-form value such as a fundamental solution or an integral.
    ClosedForm,
    /// An a priori estimate: the exponent or the structure is known, the
    /// constant is not.
    Estimate,
    /// An independent computation (dense solve, brute force, analytic field).
    Reference,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub name: String,
    /// The statement being checked.
    pub anchor: String,
    pub inputs: Value,
    pub measured: Value,
    pub expected: Value,
    pub basis: Basis,
    pub passed: bool,
}

impl CheckRecord {
    pub fn new(name: impl Into<String>, anchor: &str, basis: Basis) -> Self {
        Self {
            name: name.into(),
            anchor: anchor.to_string(),
            inputs: Value::Null,
            measured: Value::Null,
            expected: Value::Null,
            basis,
            passed: false,
        }
    }

    pub fn inputs(mut self, v: Value) -> Self {
        self.inputs = v;
        self
    }

    pub fn measured(mut self, v: Value) -> Self {
        self.measured = v;
        self
    }

    pub fn expected(mut self, v: Value) -> Self {
        self.expected = v;
        self
    }

    pub fn verdict(mut self, passed: bool) -> Self {
        self.passed = passed;
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub version: String,
    pub preset: Option<String>,
    pub config: Value,
    pub checks: Vec<CheckRecord>,
    pub passed: bool,
    pub runtime_seconds: f64,
}

impl VerificationReport {
    pub fn new(preset: Option<String>, config: Value, checks: Vec<CheckRecord>, runtime_seconds: f64) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            preset,
            config,
            checks,
            passed,
            runtime_seconds,
        }
    }

    pub fn exit_code(&self) -> u8 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_report(report: &VerificationReport, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// CSV body `x1,x2[,x3],value`, nodes in index order, 17 significant digits.
pub fn field_csv(grid: &BoxGrid, values: &[f64]) -> String {
    let d = grid.dim();
    let mut out = String::with_capacity(values.len() * 24 * (d + 1));
    let header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    out.push_str(&header.join(","));
    out.push_str(",value\n");
    for (node, v) in values.iter().enumerate() {
        let x = grid.coordinate(node);
        for xk in &x[..d] {
            out.push_str(&format!("{xk:.16e},"));
        }
        out.push_str(&format!("{v:.16e}\n"));
    }
    out
}

pub fn dump_field(grid: &BoxGrid, values: &[f64], path: &Path) -> Result<()> {
    write_atomic(path, field_csv(grid, values).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_grid;

    #[test]
    fn csv_rows_and_precision() {
        let g = build_grid(2, 1.0, 5).unwrap();
        let vals: Vec<f64> = (0..25).map(|i| i as f64 / 3.0).collect();
        let csv = field_csv(&g, &vals);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 26);
        assert_eq!(lines[0], "x1,x2,value");
        let last: Vec<f64> = lines[25].split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(last, vec![1.0, 1.0, 8.0]);
        let second: f64 = lines[2].split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(second, 1.0 / 3.0);

        let g3 = build_grid(3, 1.0, 9).unwrap();
        let csv = field_csv(&g3, &vec![0.0; 729]);
        assert_eq!(csv.lines().count(), 730);
        assert!(csv.starts_with("x1,x2,x3,value\n"));
    }

    #[test]
    fn verdict_is_conjunction() {
        let ok = CheckRecord::new("a", "x", Basis::ClosedForm).verdict(true);
        let bad = CheckRecord::new("b", "y", Basis::Estimate).verdict(false);
        assert!(VerificationReport::new(None, Value::Null, vec![ok.clone()], 0.0).passed);
        let r = VerificationReport::new(None, Value::Null, vec![ok, bad], 0.0);
        assert!(!r.passed);
        assert_eq!(r.exit_code(), 1);
    }
}
