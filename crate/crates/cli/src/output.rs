use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use psireco::{Layout, MCEstimate, TypeDistribution};
use serde::Serialize;

use crate::{Format, Global};

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn type_label(layout: &Layout, index: usize) -> String {
    let letters: Vec<String> = layout.decode(index).iter().map(|x| x.to_string()).collect();
    format!("({})", letters.join(","))
}

pub fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn estimate_csv(est: &MCEstimate) -> Result<String> {
    let layout = est.mean.layout();
    csv_table(
        &["index", "type", "mean", "stderr"],
        est.mean
            .weights()
            .iter()
            .zip(&est.stderr)
            .enumerate()
            .map(|(i, (m, s))| vec![i.to_string(), type_label(layout, i), float(*m), float(*s)]),
    )
}

pub fn distribution_csv(d: &TypeDistribution) -> String {
    psireco::typespace::distribution_csv(d)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes `value` as JSON, or the CSV rendering when `--format csv`.
pub fn emit<T: Serialize>(g: &Global, value: &T, csv: impl FnOnce() -> Result<String>) -> Result<()> {
    let text = match g.format {
        Format::Json => serde_json::to_string_pretty(value)? + "\n",
        Format::Csv => csv()?,
    };
    match &g.out {
        Some(path) => write_text(path, &text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}
