//! CSV rendering for harness tables.

use std::path::Path;

use crate::error::Result;
use crate::experiments::{PhaseGrid, RipReport, SweepTable};

pub enum Table<'a> {
    Phase(&'a PhaseGrid),
    Sweep(&'a SweepTable),
    Rip(&'a RipReport),
}

/// Nine significant digits, shortest form (like C's `%.9g`).
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    // Take the exponent after rounding so 9.9999999999 becomes 10.
    let sci = format!("{:.8e}", v);
    let (mant, e) = sci.split_once('e').expect("exponent present");
    let e: i32 = e.parse().expect("integer exponent");
    if (-5..9).contains(&e) {
        let decimals = (8 - e).max(0) as usize;
        trim(format!("{:.*}", decimals, v))
    } else {
        format!("{}e{}", trim(mant.to_string()), e)
    }
}

fn rows_to_string(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = ::csv::Writer::from_writer(Vec::new());
    let mut put = |rec: &[String]| w.write_record(rec).expect("writing to memory cannot fail");
    put(&header.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    for r in rows {
        put(&r);
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV of UTF-8 fields")
}

pub fn render_csv(table: &Table<'_>) -> String {
    match table {
        Table::Phase(g) => {
            let rows = g.y_values.iter().enumerate().flat_map(|(iy, &y)| {
                g.x_values.iter().enumerate().map(move |(ix, &x)| {
                    vec![
                        x.to_string(),
                        y.to_string(),
                        g.trials.to_string(),
                        g.success_counts[iy][ix].to_string(),
                        g.success_rate(ix, iy).map(format_float).unwrap_or_default(),
                        u8::from(g.valid[iy][ix]).to_string(),
                    ]
                })
            });
            rows_to_string(&["x", "y", "trials", "successes", "success_rate", "valid"], rows)
        }
        Table::Sweep(t) => {
            let rows = (0..t.abscissa.len()).map(|i| {
                vec![
                    format_float(t.abscissa[i]),
                    format_float(t.mean_log_error[i]),
                    format_float(t.mean_error[i]),
                    format_float(t.median_error[i]),
                    t.trials.to_string(),
                ]
            });
            rows_to_string(
                &[&t.abscissa_name, "mean_log_error", "mean_error", "median_error", "trials"],
                rows,
            )
        }
        Table::Rip(r) => rows_to_string(
            &["sample", "ratio"],
            r.ratios.iter().enumerate().map(|(i, &v)| vec![i.to_string(), format_float(v)]),
        ),
    }
}

/// Arbitrary numeric columns, e.g. traces and raw measurements.
pub fn render_rows(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    rows_to_string(header, rows)
}

pub fn write_csv(table: &Table<'_>, path: &Path) -> Result<()> {
    std::fs::write(path, render_csv(table))?;
    Ok(())
}
