//! File writers and display formatting.
//!
//! CSVs carry SI units and shortest round-trip float text so that a value
//! read back parses to the same `f64`. Text reports use milliseconds.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::CliError;

/// Shortest text that parses back to exactly `x`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let file = BufWriter::new(File::create(path)?);
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(row.into_iter()).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

/// Seconds as milliseconds for display.
pub fn ms(seconds: f64) -> String {
    format!("{:.3} ms", seconds * 1e3)
}

/// Bits per second, auto-scaled.
pub fn rate(bps: f64) -> String {
    if bps >= 1e9 {
        format!("{} Gbps", trim(bps / 1e9))
    } else if bps >= 1e6 {
        format!("{} Mbps", trim(bps / 1e6))
    } else if bps >= 1e3 {
        format!("{} kbps", trim(bps / 1e3))
    } else {
        format!("{} bps", trim(bps))
    }
}

fn trim(x: f64) -> String {
    let s = format!("{x:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Column-friendly percentile label: 0.95 -> "95", 0.999 -> "99.9".
pub fn percent_label(p: f64) -> String {
    let s = format!("{:.6}", p * 100.0);
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Left-aligned first column, right-aligned rest, two spaces between.
pub fn table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut out = String::new();
        for (n, (cell, &w)) in cells.iter().zip(&widths).enumerate() {
            if n == 0 {
                out.push_str(&format!("{cell:<w$}"));
            } else {
                out.push_str(&format!("  {cell:>w$}"));
            }
        }
        out.trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    for row in rows {
        out.push_str(&line(row));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.0, 1.0, 0.1 + 0.2, 1e-300, 3.3e-3, 12345.678, f64::MIN_POSITIVE] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(0.5), "0.5");
    }

    #[test]
    fn display_units() {
        assert_eq!(ms(3.3e-3), "3.300 ms");
        assert_eq!(rate(1.5e9), "1.5 Gbps");
        assert_eq!(rate(5e7), "50 Mbps");
        assert_eq!(percent_label(0.95), "95");
        assert_eq!(percent_label(0.999), "99.9");
        assert_eq!(percent_label(0.07), "7");
    }

    #[test]
    fn table_is_aligned() {
        let t = table(&["a".into(), "bb".into()], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "a    bb\nxyz   1\n");
    }
}
