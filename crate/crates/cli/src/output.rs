//! Report records and the CSV/JSON writers.
//!
//! Floats in CSV are written as `{:.16e}` (17 significant digits), which
//! round-trips every finite `f64`.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::spec::{ExperimentSpec, Format};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// `;`-joined list of floats for vector-valued CSV cells.
pub fn fmt_vec(xs: &[f64]) -> String {
    xs.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_abs_z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRecord {
    pub fn new(name: impl Into<String>, passed: bool) -> Self {
        Self {
            name: name.into(),
            passed,
            mean: None,
            closed_form: None,
            std_error: None,
            max_abs_z: None,
            value: None,
            bound: None,
            note: None,
        }
    }

    /// `value ≤ bound`.
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            value: Some(value),
            bound: Some(bound),
            ..Self::new(name, value <= bound)
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub all_passed: bool,
}

impl Summary {
    pub fn of(checks: &[CheckRecord]) -> Self {
        let passed = checks.iter().filter(|c| c.passed).count();
        Self {
            total: checks.len(),
            passed,
            failed: checks.len() - passed,
            all_passed: passed == checks.len(),
        }
    }
}

/// Header plus pre-formatted rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: Vec<&'static str>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        out.write_record(&self.header)?;
        for row in &self.rows {
            out.write_record(row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Everything a command produces; `data` is the command-specific payload.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub spec: ExperimentSpec,
    pub generator: &'static str,
    pub warnings: Vec<String>,
    pub checks: Vec<CheckRecord>,
    pub summary: Summary,
    pub data: serde_json::Value,
    #[serde(skip)]
    pub table: CsvTable,
}

impl Report {
    pub fn new(
        spec: &ExperimentSpec,
        warnings: Vec<String>,
        checks: Vec<CheckRecord>,
        data: serde_json::Value,
        table: CsvTable,
    ) -> Self {
        Self {
            spec: spec.clone(),
            generator: stelab_core::monte_carlo::GENERATOR_VERSION,
            warnings,
            summary: Summary::of(&checks),
            checks,
            data,
            table,
        }
    }

    pub fn passed(&self) -> bool {
        self.summary.all_passed
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        match self.spec.format {
            Format::Csv => self.table.write_to(w),
            Format::Json => {
                serde_json::to_writer_pretty(&mut w, self)?;
                w.write_all(b"\n")?;
                Ok(())
            }
        }
    }

    /// Writes to `spec.output_path`, or stdout when none is set.
    pub fn emit(&self) -> Result<()> {
        match &self.spec.output_path {
            Some(path) => self.write_file(path),
            None => self.write_to(io::stdout().lock()),
        }
    }

    fn write_file(&self, path: &Path) -> Result<()> {
        let file =
            File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
        let mut buf = io::BufWriter::new(file);
        self.write_to(&mut buf)?;
        buf.flush()
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::Command;

    proptest::proptest! {
        #[test]
        fn float_cells_round_trip(x in proptest::num::f64::ANY) {
            let back: f64 = fmt_f64(x).parse().unwrap();
            if x.is_nan() {
                proptest::prop_assert!(back.is_nan());
            } else {
                proptest::prop_assert_eq!(back.to_bits(), x.to_bits());
            }
        }
    }

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_vec(&[1.0, -2.0]), "1.0000000000000000e0;-2.0000000000000000e0");
    }

    #[test]
    fn csv_has_header_and_lf_endings() {
        let mut t = CsvTable::new(vec!["a", "b"]);
        t.push(vec!["x".into(), fmt_f64(0.5)]);
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\nx,5.0000000000000000e-1\n");
    }

    #[test]
    fn summary_counts() {
        let checks = vec![CheckRecord::new("a", true), CheckRecord::at_most("b", 2.0, 1.0)];
        let s = Summary::of(&checks);
        assert_eq!((s.total, s.passed, s.failed, s.all_passed), (2, 1, 1, false));
        assert!(Summary::of(&[]).all_passed);
        let spec = ExperimentSpec::defaults(Command::Sweep);
        let r = Report::new(&spec, vec![], checks, serde_json::Value::Null, CsvTable::default());
        assert!(!r.passed());
    }
}
