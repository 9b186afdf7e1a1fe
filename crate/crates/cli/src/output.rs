//! JSON envelopes, CSV plot data and aligned tables.

use std::io::Write;

use serde::Serialize;

use crate::args::Format;
use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Envelope<'a, C: Serialize, R: Serialize> {
    pub schema_version: u32,
    pub version: &'static str,
    pub command: &'a str,
    pub config: &'a C,
    pub results: &'a R,
}

/// Something with a CSV and a table rendering.
pub trait Render {
    fn csv_header(&self) -> &'static [&'static str];
    fn csv_rows(&self) -> Vec<Vec<String>>;
    fn table(&self) -> String;
}

/// Shortest decimal that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Four significant digits in scientific notation.
pub fn pval(p: f64) -> String {
    format!("{p:.3e}")
}

pub fn write_csv(r: &dyn Render, out: &mut dyn Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(r.csv_header())?;
    for row in r.csv_rows() {
        w.write_record(&row)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

fn io_err(source: std::io::Error) -> CliError {
    CliError::Io {
        path: "<stdout>".into(),
        source,
    }
}

pub fn emit<C: Serialize, R: Serialize + Render>(
    format: Format,
    command: &str,
    config: &C,
    results: &R,
    out: &mut dyn Write,
) -> Result<()> {
    match format {
        Format::Json => {
            let env = Envelope {
                schema_version: SCHEMA_VERSION,
                version: env!("CARGO_PKG_VERSION"),
                command,
                config,
                results,
            };
            serde_json::to_writer_pretty(&mut *out, &env)
                .map_err(|e| CliError::Config(format!("serializing output: {e}")))?;
            writeln!(out).map_err(io_err)
        }
        Format::Csv => write_csv(results, out),
        Format::Table => out.write_all(results.table().as_bytes()).map_err(io_err),
    }
}

/// Right-aligned columns under a header, two spaces apart.
pub fn align(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = cells
            .iter()
            .zip(&width)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect::<Vec<_>>()
            .join("  ");
        s.push('\n');
        s
    };
    let mut s = line(header.to_vec());
    for row in rows {
        s.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    s
}
