//! CSV output. Floats are written with 17 significant digits, lines end in
//! LF, and identical runs produce identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use super::{FilterRun, Simulation};
use crate::error::{Error, Result};

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// `t,x,z,pi_ref_1..m,p_prox_1..m,xhat_ref,xhat_prox`
pub fn filter_header(m: usize) -> String {
    let mut cols = vec!["t".to_string(), "x".to_string(), "z".to_string()];
    cols.extend((1..=m).map(|i| format!("pi_ref_{i}")));
    cols.extend((1..=m).map(|i| format!("p_prox_{i}")));
    cols.push("xhat_ref".into());
    cols.push("xhat_prox".into());
    cols.join(",")
}

pub fn filter_csv(run: &FilterRun) -> Result<String> {
    let m = run.states.len();
    let grid = run.obs.grid();
    let mut out = filter_header(m);
    out.push('\n');
    for k in 0..=grid.k_max() {
        let mut row = vec![fmt(grid.time(k)), fmt(run.state_value_at(k)?), fmt(run.obs.z()[k])];
        row.extend(run.reference.probabilities[k].as_slice().iter().map(|x| fmt(*x)));
        row.extend(run.proximal.probabilities[k].as_slice().iter().map(|x| fmt(*x)));
        row.push(fmt(run.metrics.xhat_reference[k]));
        row.push(fmt(run.metrics.xhat_proximal[k]));
        let _ = writeln!(out, "{}", row.join(","));
    }
    Ok(out)
}

/// Writes the full filter comparison to `path`.
pub fn emit_csv(run: &FilterRun, path: &Path) -> Result<()> {
    std::fs::write(path, filter_csv(run)?)?;
    Ok(())
}

/// `t,x,z` on the grid: the hidden state value and the observation sample.
pub fn simulation_csv(sim: &Simulation) -> Result<String> {
    let grid = sim.obs.grid();
    let mut out = String::from("t,x,z\n");
    for k in 0..=grid.k_max() {
        let _ = writeln!(
            out,
            "{},{},{}",
            fmt(grid.time(k)),
            fmt(sim.state_value_at(k)?),
            fmt(sim.obs.z()[k])
        );
    }
    Ok(out)
}

/// A parsed numeric CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

pub fn parse_table(text: &str) -> Result<Table> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Domain("empty CSV".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Domain(format!("CSV row {}: {e}", n + 1)))?;
        if row.len() != header.len() {
            return Err(Error::Domain(format!(
                "CSV row {} has {} fields, header has {}",
                n + 1,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}
