//! Regulation scenario CSV: header `t,r,price`, one row per step.

use std::path::Path;

use anyhow::{bail, Context, Result};
use griddispatch_core::market::RegulationScenario;

use crate::output::CsvTable;

pub const SCENARIO_HEADER: [&str; 3] = ["t", "r", "price"];

pub fn parse_scenario(id: &str, text: &str, step_seconds: f64) -> Result<RegulationScenario> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != SCENARIO_HEADER {
        bail!("line 1: expected header \"t,r,price\", found \"{}\"", header.join(","));
    }
    let mut r = Vec::new();
    let mut price = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec.with_context(|| format!("line {line}"))?;
        let field = |i: usize| -> Result<f64> {
            let s = rec.get(i).unwrap_or("");
            s.parse::<f64>()
                .with_context(|| format!("line {line}: column {} is not a number: \"{s}\"", SCENARIO_HEADER[i]))
        };
        let t = field(0)?;
        if t != k as f64 {
            bail!("line {line}: expected t = {k}, found {t}");
        }
        let rv = field(1)?;
        if !(rv.abs() <= 1.0) {
            bail!("line {line}: instruction {rv} outside [-1, 1]");
        }
        let pv = field(2)?;
        if !(pv >= 0.0) || !pv.is_finite() {
            bail!("line {line}: price {pv} must be finite and non-negative");
        }
        r.push(rv);
        price.push(pv);
    }
    Ok(RegulationScenario::new(id, step_seconds, r, price)?)
}

pub fn load_scenario(path: &Path, step_seconds: f64) -> Result<RegulationScenario> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    parse_scenario(id, &text, step_seconds).with_context(|| format!("loading scenario {}", path.display()))
}

pub fn scenario_table(s: &RegulationScenario) -> CsvTable {
    let mut table = CsvTable::new(&SCENARIO_HEADER);
    for t in 0..s.len() {
        table.push(vec![t.to_string(), fmt_f64(s.instruction(t)), fmt_f64(s.price(t))]);
    }
    table
}

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
