//! Report rendering. CSV columns are fixed; see `REPORT_COLUMNS`.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use clap::ValueEnum;

use linkpad::replay::{IndependenceReport, ReplayReport, SweepParam, REPORT_COLUMNS};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
}

pub fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => {
            fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
        }
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Data(format!("stdout: {e}"))),
    }
}

fn table(rows: &[(String, String)]) -> String {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    rows.iter()
        .map(|(k, v)| format!("{k:<width$}  {v}\n"))
        .collect()
}

/// CSV fields containing commas or quotes are quoted.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_line<S: AsRef<str>>(fields: &[S]) -> String {
    let mut line = fields
        .iter()
        .map(|f| csv_field(f.as_ref()))
        .collect::<Vec<_>>()
        .join(",");
    line.push('\n');
    line
}

pub fn report_text(report: &ReplayReport, format: Format) -> String {
    match format {
        Format::Csv => csv_line(REPORT_COLUMNS) + &csv_line(&report.fields()),
        Format::Table => {
            let rows: Vec<_> = REPORT_COLUMNS
                .iter()
                .map(|c| c.to_string())
                .zip(report.fields())
                .collect();
            table(&rows)
        }
    }
}

pub fn sweep_text(param: SweepParam, points: &[(f64, ReplayReport)], format: Format) -> String {
    match format {
        Format::Csv => {
            let mut header = vec!["param", "value"];
            header.extend_from_slice(REPORT_COLUMNS);
            let mut out = csv_line(&header);
            for (value, report) in points {
                let mut fields = vec![param.name().to_string(), value.to_string()];
                fields.extend(report.fields());
                out += &csv_line(&fields);
            }
            out
        }
        Format::Table => {
            let mut out = format!(
                "{:<12} {:>14} {:>14} {:>18} {:>14}\n",
                param.name(),
                "shaped_rate",
                "overhead_rate",
                "est_wire_overhead",
                "max_latency_s"
            );
            for (value, r) in points {
                out += &format!(
                    "{:<12} {:>14.2} {:>14.2} {:>18.2} {:>14.3}\n",
                    value,
                    r.shaped_rate,
                    r.overhead_rate,
                    r.est_wire_overhead_rate,
                    r.max_message_latency
                );
            }
            out
        }
    }
}

pub const INDEPENDENCE_COLUMNS: &[&str] = &[
    "trace_a",
    "trace_b",
    "seed",
    "alt_seed",
    "schedules_identical",
    "schedule_len_a",
    "schedule_len_b",
    "size_ks",
    "delay_ks",
    "ks_critical",
    "size_ks_pass",
    "delay_ks_pass",
    "unshaped_peaks_a",
    "unshaped_peaks_b",
    "shaped_peaks_a",
    "shaped_peaks_b",
    "passed",
];

fn bins(list: &[usize]) -> String {
    list.iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn independence_text(a: &str, b: &str, r: &IndependenceReport, format: Format) -> String {
    let fields = vec![
        a.to_string(),
        b.to_string(),
        r.seed.to_string(),
        r.alt_seed.to_string(),
        r.schedules_identical.to_string(),
        r.schedule_len_a.to_string(),
        r.schedule_len_b.to_string(),
        r.size_ks.to_string(),
        r.delay_ks.to_string(),
        r.ks_critical.to_string(),
        r.size_ks_pass.to_string(),
        r.delay_ks_pass.to_string(),
        bins(&r.unshaped_peaks_a),
        bins(&r.unshaped_peaks_b),
        bins(&r.shaped_peaks_a),
        bins(&r.shaped_peaks_b),
        r.passed().to_string(),
    ];
    match format {
        Format::Csv => csv_line(INDEPENDENCE_COLUMNS) + &csv_line(&fields),
        Format::Table => {
            let rows: Vec<_> = INDEPENDENCE_COLUMNS
                .iter()
                .map(|c| c.to_string())
                .zip(fields)
                .collect();
            table(&rows)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    }
}
