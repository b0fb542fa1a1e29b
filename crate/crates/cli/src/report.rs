use std::fs;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{Map, Value};

/// Nine significant digits, scientific notation.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.8e}")
    } else {
        v.to_string()
    }
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// A CSV table built row by row. Cells are numbers or identifiers, so no
/// quoting is needed.
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "{}", self.header.join(","))?;
        for row in &self.rows {
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
pub struct Report {
    pub command: &'static str,
    pub seed: Option<u64>,
    pub parameters: Map<String, Value>,
    pub summary: Map<String, Value>,
}

impl Report {
    pub fn new(command: &'static str, seed: Option<u64>) -> Self {
        Report {
            command,
            seed,
            parameters: Map::new(),
            summary: Map::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        self.parameters.insert(key.to_string(), to_value(value));
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.summary.insert(key.to_string(), to_value(value));
    }
}

fn to_value(value: impl Serialize) -> Value {
    // non-finite floats serialise as null
    serde_json::to_value(value).unwrap_or(Value::Null)
}

pub fn emit(table: &Table, report: &Report, out: Option<&Path>, summary: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            let mut buf = Vec::new();
            table.write_to(&mut buf)?;
            fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            table.write_to(&mut lock)?;
            lock.flush()?;
        }
    }
    let json = serde_json::to_string_pretty(report)?;
    match summary {
        Some(path) => {
            fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?
        }
        None => eprintln!("{json}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(num(0.132272), "1.32272000e-1");
        assert_eq!(num(-15.747318), "-1.57473180e1");
        assert_eq!(num(0.0), "0.00000000e0");
        assert_eq!(opt_num(None), "");
    }

    #[test]
    fn table_layout() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), num(2.0)]);
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n1,2.00000000e0\n");
    }
}
