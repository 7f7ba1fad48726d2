//! CSV tables with `#` metadata lines.

use std::fs;
use std::path::Path;

use relaynet_core::pricing::BneSolution;
use relaynet_core::PricingStrategy;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub meta: Vec<String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            meta: Vec::new(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, line: String) {
        self.meta.push(line);
    }

    pub fn push<I: IntoIterator<Item = String>>(&mut self, row: I) {
        self.rows.push(row.into_iter().collect());
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for m in &self.meta {
            out.push_str("# ");
            out.push_str(m);
            out.push('\n');
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        let bytes = w.into_inner().expect("in-memory flush");
        out.push_str(std::str::from_utf8(&bytes).expect("csv of utf-8 fields"));
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, self.render()).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Shortest round-trip form; scientific notation for very small or large
/// magnitudes.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// `θ, p_1(θ), …, p_n(θ)` on `rows` evenly spaced types covering the range
/// every strategy is tabulated on.
pub fn strategy_table(strategies: &[PricingStrategy], rows: usize) -> Table {
    let lo = strategies
        .iter()
        .map(|s| s.table().thetas()[0])
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = strategies
        .iter()
        .map(|s| *s.table().thetas().last().unwrap())
        .fold(f64::INFINITY, f64::min);
    let mut header = vec!["theta".to_string()];
    header.extend((1..=strategies.len()).map(|i| format!("p_{i}")));
    let mut table = Table {
        header,
        ..Table::default()
    };
    let rows = rows.max(2);
    for k in 0..rows {
        let t = if k + 1 == rows {
            hi
        } else {
            lo + (hi - lo) * k as f64 / (rows - 1) as f64
        };
        let mut row = vec![num(t)];
        row.extend(strategies.iter().map(|s| num(s.price(t))));
        table.push(row);
    }
    table
}

/// Writes the solved strategies as a CSV table at `path`.
pub fn emit_strategy_table(solution: &BneSolution, rows: usize, meta: &[String], path: &Path) -> Result<(), CliError> {
    let mut table = strategy_table(&solution.strategies, rows);
    table.meta = meta.to_vec();
    table.write(path)
}
