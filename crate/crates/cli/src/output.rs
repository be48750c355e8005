//! Result tables (CSV or JSON) and the JSON metadata sidecar.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use sfwm_core::montecarlo::SweepRow;

use crate::config::{LoadedConfig, Provenance};
use crate::error::CliError;

pub const RESULT_HEADER: [&str; 7] = ["power_w", "mu", "c_raw", "a", "c_net", "car", "car_sigma"];
/// Significant digits kept in result files.
pub const SIGNIFICANT_DIGITS: usize = 9;

/// Rounds to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_sig(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v).parse().expect("formatted float parses")
}

/// Shortest text of `v` rounded to [`SIGNIFICANT_DIGITS`] digits; exponent
/// notation outside `[1e-4, 1e15)`.
pub fn format_sig(v: f64) -> String {
    let r = round_sig(v);
    if r == 0.0 || (1e-4..1e15).contains(&r.abs()) {
        format!("{r}")
    } else {
        format!("{r:e}")
    }
}

fn format_opt(v: Option<f64>) -> String {
    v.map(format_sig).unwrap_or_default()
}

/// Row as stored, with every value rounded to the file precision.
pub fn rounded(row: &SweepRow) -> SweepRow {
    SweepRow {
        power_w: round_sig(row.power_w),
        mu: round_sig(row.mu),
        c_raw: round_sig(row.c_raw),
        a: round_sig(row.a),
        c_net: round_sig(row.c_net),
        car: row.car.map(round_sig),
        car_sigma: row.car_sigma.map(round_sig),
    }
}

pub fn write_rows_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<(), csv::Error> {
    let table: Vec<TableRow> = rows.iter().copied().map(TableRow::Ok).collect();
    write_table_csv(out, &table)
}

/// Reads a result table written by [`write_rows_csv`]. Rows with an empty
/// `mu` (failed sweep points) are skipped.
pub fn read_rows_csv<R: Read>(input: R) -> Result<Vec<SweepRow>, String> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(RESULT_HEADER) {
        return Err(format!("unexpected header {header:?}"));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let opt = |i: usize| -> Result<Option<f64>, String> {
            let t = &rec[i];
            if t.is_empty() {
                Ok(None)
            } else {
                t.parse().map(Some).map_err(|_| format!("bad number `{t}`"))
            }
        };
        let Some(mu) = opt(1)? else { continue };
        let req = |i: usize| opt(i)?.ok_or_else(|| format!("missing {}", RESULT_HEADER[i]));
        rows.push(SweepRow {
            power_w: req(0)?,
            mu,
            c_raw: req(2)?,
            a: req(3)?,
            c_net: req(4)?,
            car: opt(5)?,
            car_sigma: opt(6)?,
        });
    }
    Ok(rows)
}

/// Result row with an optional failure, as emitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TableRow {
    Ok(SweepRow),
    Failed { power_w: f64 },
}

fn csv_record(row: &TableRow) -> [String; 7] {
    match row {
        TableRow::Ok(r) => [
            format_sig(r.power_w),
            format_sig(r.mu),
            format_sig(r.c_raw),
            format_sig(r.a),
            format_sig(r.c_net),
            format_opt(r.car),
            format_opt(r.car_sigma),
        ],
        TableRow::Failed { power_w } => {
            let mut rec: [String; 7] = Default::default();
            rec[0] = format_sig(*power_w);
            rec
        }
    }
}

pub fn write_table_csv<W: Write>(out: W, rows: &[TableRow]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULT_HEADER)?;
    for row in rows {
        w.write_record(csv_record(row))?;
    }
    w.flush()?;
    Ok(())
}

pub fn table_json(rows: &[TableRow]) -> Value {
    Value::Array(
        rows.iter()
            .map(|row| match row {
                TableRow::Ok(r) => serde_json::to_value(rounded(r)).expect("serializable"),
                TableRow::Failed { power_w } => json!({ "power_w": round_sig(*power_w), "failed": true }),
            })
            .collect(),
    )
}

/// A point that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedPoint {
    pub table: String,
    pub power_w: f64,
    pub error: String,
}

/// Contents of the metadata sidecar and of the `metadata` block of JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub preset: String,
    pub provenance: Vec<Provenance>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed_points: Vec<FailedPoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub files: Vec<String>,
    pub config: Value,
}

impl Metadata {
    pub fn new(command: &str, loaded: &LoadedConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_sha256: loaded.config.hash(),
            seed: loaded.config.run.seed,
            preset: loaded.config.preset.clone(),
            provenance: loaded.provenance.clone(),
            failed_points: Vec::new(),
            files: Vec::new(),
            config: serde_json::to_value(&loaded.config).expect("serializable"),
        }
    }
}

/// `results.csv` → `results.meta.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("meta.json")
}

/// `results.csv` + `mc` → `results.mc.csv`.
pub fn suffixed_path(out: &Path, suffix: &str) -> PathBuf {
    let ext = out.extension().map(|e| e.to_string_lossy().into_owned());
    match ext {
        Some(ext) => out.with_extension(format!("{suffix}.{ext}")),
        None => out.with_extension(suffix),
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_file(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_sig(0.23), "0.23");
        assert_eq!(format_sig(413.0), "413");
        assert_eq!(format_sig(12.345678912345), "12.3456789");
        assert_eq!(format_sig(1.0e-7 / 3.0), "3.33333333e-8");
        assert_eq!(format_sig(-2.5e-5), "-2.5e-5");
        assert_eq!(format_sig(0.0), "0");
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            SweepRow { power_w: 0.05, mu: 2.83e-4, c_raw: 20.123456789123, a: 0.1, c_net: 20.0, car: Some(200.1), car_sigma: Some(3.0) },
            SweepRow { power_w: 0.1, mu: 1e-3, c_raw: 0.0, a: 0.0, c_net: 0.0, car: None, car_sigma: None },
        ];
        let mut buf = Vec::new();
        write_rows_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("power_w,mu,c_raw,a,c_net,car,car_sigma\n"));
        assert!(text.contains(",,\n"));
        let back = read_rows_csv(&buf[..]).unwrap();
        let expected: Vec<SweepRow> = rows.iter().map(rounded).collect();
        assert_eq!(back, expected);
    }

    #[test]
    fn derived_paths() {
        assert_eq!(sidecar_path(Path::new("out/r.csv")), PathBuf::from("out/r.meta.json"));
        assert_eq!(suffixed_path(Path::new("r.csv"), "mc"), PathBuf::from("r.mc.csv"));
        assert_eq!(suffixed_path(Path::new("r"), "mc"), PathBuf::from("r.mc"));
    }
}
