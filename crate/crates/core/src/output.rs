//! On-disk artifacts: CSV tables and JSON envelopes that carry the schema
//! tag and the resolved run configuration.
//!
//! CSV files start with one comment line, `# schema=<tag> config=<json>`,
//! followed by a header row. Floats in CSV are written with 17 significant
//! digits. JSON envelopes keep wall-clock data under `runtime`, which is the
//! only part allowed to differ between two runs of the same configuration.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{QfimError, Result};

pub const SCHEMA: &str = "qfim/1";

/// `x` in scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub wall_seconds: f64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema: String,
    pub config: Value,
    pub result: T,
    pub runtime: Runtime,
}

pub fn write_json<T: Serialize>(path: &Path, config: &Value, result: &T, runtime: Runtime) -> Result<()> {
    let env = Envelope { schema: SCHEMA.to_string(), config: config.clone(), result, runtime };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &env)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Envelope<T>> {
    let env: Envelope<T> = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    check_schema(&env.schema)?;
    Ok(env)
}

fn check_schema(found: &str) -> Result<()> {
    if found != SCHEMA {
        return Err(QfimError::InvalidArgument(format!("schema mismatch: expected {SCHEMA}, found {found}")));
    }
    Ok(())
}

pub fn write_csv(path: &Path, config: &Value, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# schema={SCHEMA} config={}", serde_json::to_string(config)?)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Configuration embedded in the leading comment line of a CSV artifact.
pub fn read_csv_config(path: &Path) -> Result<Value> {
    let mut first = String::new();
    BufReader::new(File::open(path)?).read_line(&mut first)?;
    let rest = first
        .trim_end()
        .strip_prefix("# schema=")
        .ok_or_else(|| QfimError::InvalidArgument(format!("{}: missing schema line", path.display())))?;
    let (schema, config) = rest
        .split_once(" config=")
        .ok_or_else(|| QfimError::InvalidArgument(format!("{}: missing config", path.display())))?;
    check_schema(schema)?;
    Ok(serde_json::from_str(config)?)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<(Value, Vec<T>)> {
    let config = read_csv_config(path)?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok((config, rows))
}

/// Configuration embedded in any artifact, CSV or JSON.
pub fn read_config(path: &Path) -> Result<Value> {
    if path.extension().is_some_and(|e| e == "csv") {
        read_csv_config(path)
    } else {
        Ok(read_json::<Value>(path)?.config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcdfRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub t: f64,
    pub ccdf: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub t: f64,
    pub max_norm_bound: f64,
    pub max_norm_empirical: f64,
    pub frobenius_threshold: f64,
    pub frobenius_bound: f64,
    pub frobenius_empirical: f64,
}

pub const SWEEP_HEADER: [&str; 6] = ["N", "mean_rel", "scaled", "std_rel", "trials", "seed"];
pub const HIST_HEADER: [&str; 4] = ["N", "bin_left", "bin_right", "count"];
pub const CCDF_HEADER: [&str; 3] = ["N", "t", "ccdf"];
pub const BOUND_HEADER: [&str; 7] = [
    "N",
    "t",
    "max_norm_bound",
    "max_norm_empirical",
    "frobenius_threshold",
    "frobenius_bound",
    "frobenius_empirical",
];

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
        assert_eq!(fmt_f64(-2.5), "-2.5000000000000000e0");
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ccdf.csv");
        let cfg = json!({"seed": 3, "m": 10});
        let rows = vec![vec!["20".into(), fmt_f64(0.25), fmt_f64(1.0 / 3.0)]];
        write_csv(&path, &cfg, &CCDF_HEADER, rows).unwrap();
        let (c, back): (Value, Vec<CcdfRow>) = read_csv(&path).unwrap();
        assert_eq!(c, cfg);
        assert_eq!(back, vec![CcdfRow { n: 20, t: 0.25, ccdf: 1.0 / 3.0 }]);
        assert_eq!(read_config(&path).unwrap(), cfg);
    }

    #[test]
    fn json_round_trip_and_schema_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.json");
        let cfg = json!({"seed": 1});
        write_json(&path, &cfg, &vec![1.5, 2.5], Runtime { wall_seconds: 0.1, workers: 1 }).unwrap();
        let env: Envelope<Vec<f64>> = read_json(&path).unwrap();
        assert_eq!(env.result, vec![1.5, 2.5]);
        assert_eq!(read_config(&path).unwrap(), cfg);

        let bad = dir.path().join("bad.json");
        std::fs::write(&bad, r#"{"schema":"other/9","config":{},"result":1,"runtime":{"wall_seconds":0,"workers":1}}"#).unwrap();
        assert!(read_json::<Value>(&bad).is_err());
        let bad_csv = dir.path().join("bad.csv");
        std::fs::write(&bad_csv, "N,t,ccdf\n20,0.1,0.5\n").unwrap();
        assert!(read_csv::<CcdfRow>(&bad_csv).is_err());
    }
}
