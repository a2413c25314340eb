//! Structured text reports: a `format: 1` line, the scenario, a config
//! echo, scalars with their tolerances, then named table blocks.

use std::fmt::Write as _;

use crate::measurement::{csv_cell, sig12};

#[derive(Debug, Clone, PartialEq)]
pub struct Scalar {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
}

/// A table of preformatted cells with labelled rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub row_header: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<String>)>,
}

impl Table {
    pub fn new(name: &str, row_header: &str, columns: Vec<String>) -> Self {
        Table {
            name: name.into(),
            row_header: row_header.into(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push_numbers(&mut self, label: impl Into<String>, values: &[f64]) {
        self.rows
            .push((label.into(), values.iter().map(|v| sig12(*v)).collect()));
    }

    pub fn push_cells(&mut self, label: impl Into<String>, cells: Vec<String>) {
        self.rows.push((label.into(), cells));
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{},{}\n", self.row_header, self.columns.join(","));
        for (label, cells) in &self.rows {
            let cells: Vec<String> = cells.iter().map(|c| csv_cell(c)).collect();
            let _ = writeln!(s, "{},{}", csv_cell(label), cells.join(","));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub scenario: String,
    pub config: Vec<(String, String)>,
    pub scalars: Vec<Scalar>,
    pub tables: Vec<Table>,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn new(scenario: &str, config: Vec<(String, String)>) -> Self {
        ExperimentReport {
            scenario: scenario.into(),
            config,
            scalars: Vec::new(),
            tables: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn scalar(&mut self, name: &str, value: f64, tolerance: f64) {
        self.scalars.push(Scalar {
            name: name.into(),
            value,
            tolerance,
        });
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.scalars.iter().find(|s| s.name == name).map(|s| s.value)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("format: 1\nscenario: {}\n", self.scenario);
        for (k, v) in &self.config {
            let _ = writeln!(s, "config.{k}: {v}");
        }
        for sc in &self.scalars {
            let _ = writeln!(
                s,
                "scalar {} = {} tol={}",
                sc.name,
                sig12(sc.value),
                sig12(sc.tolerance)
            );
        }
        for t in &self.tables {
            let _ = writeln!(s, "table {}", t.name);
            let _ = writeln!(s, "columns: {} | {}", t.row_header, t.columns.join(" "));
            for (label, cells) in &t.rows {
                let _ = writeln!(s, "{label}: {}", cells.join(" "));
            }
            s.push_str("end\n");
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }

    /// CSV of the first table, which every scenario puts first on purpose.
    pub fn to_csv(&self) -> String {
        self.tables.first().map(Table::to_csv).unwrap_or_default()
    }
}
