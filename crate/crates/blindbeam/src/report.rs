//! Result serialization: provenance-stamped CSV tables and JSON
//! summaries.
//!
//! Output is byte-stable by construction. Rows are re-sorted into their
//! canonical order before writing, floats always print with 12
//! significant digits, and JSON maps are ordered, so two runs with the
//! same configuration and seed serialize identically regardless of how
//! the work was scheduled.

use std::io::{self, Write};

use serde::Serialize;

use crate::experiments::ExperimentReport;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// FNV-1a over the raw configuration text; cheap, stable, and good
/// enough to tell config files apart in a provenance line.
pub fn config_hash(text: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in text.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// The comment stamped at the top of every CSV: tool version, config
/// hash, master seed.
pub fn provenance_line(config_hash: u64, seed: u64) -> String {
    format!("# blindbeam v{TOOL_VERSION} config=0x{config_hash:016x} seed={seed}")
}

fn format_value(value: f64) -> String {
    format!("{value:.11e}")
}

/// Writes the report rows as CSV with the provenance comment and the
/// fixed `seed,algorithm,N,K,T,metric,value` header.
pub fn write_csv<W: Write>(
    out: &mut W,
    report: &ExperimentReport,
    config_hash: u64,
    seed: u64,
) -> io::Result<()> {
    let mut sorted = report.clone();
    sorted.sort_rows();
    writeln!(out, "{}", provenance_line(config_hash, seed))?;
    writeln!(out, "seed,algorithm,N,K,T,metric,value")?;
    for row in &sorted.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.seed,
            row.algorithm,
            row.n,
            row.k,
            row.t,
            row.metric,
            format_value(row.value)
        )?;
    }
    Ok(())
}

pub fn csv_string(report: &ExperimentReport, config_hash: u64, seed: u64) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, report, config_hash, seed).expect("writing to memory");
    String::from_utf8(buf).expect("CSV output is UTF-8")
}

#[derive(Serialize)]
struct JsonSummary<'a> {
    tool_version: &'a str,
    config_hash: String,
    seed: u64,
    summary: &'a std::collections::BTreeMap<String, f64>,
    flags: &'a std::collections::BTreeMap<String, bool>,
}

/// JSON cannot carry comments, so the provenance fields lead the object
/// itself; maps are ordered for byte stability.
pub fn json_summary_string(report: &ExperimentReport, config_hash: u64, seed: u64) -> String {
    let doc = JsonSummary {
        tool_version: TOOL_VERSION,
        config_hash: format!("0x{config_hash:016x}"),
        seed,
        summary: &report.summary,
        flags: &report.flags,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("summary serializes");
    text.push('\n');
    text
}
