//! Config JSON and the CSV tables shared by `sysid` and `degrade`.

use std::io::{Read, Write};
use std::path::Path;

use eben_core::{CoherenceCurve, NetworkConfig, ResponseBounds, TransferFunctionEstimate};
use thiserror::Error;

pub const SYSID_COLUMNS: [&str; 6] = ["freq_hz", "median_db", "smoothed_db", "p10_db", "p90_db", "coherence"];

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("config: {0}")]
    Config(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("bounds table: {0}")]
    Bounds(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn load_config(path: impl AsRef<Path>) -> Result<NetworkConfig, FormatError> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

pub fn save_config(cfg: &NetworkConfig, path: impl AsRef<Path>) -> Result<(), FormatError> {
    let mut s = serde_json::to_string_pretty(cfg)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// Reads `freq_hz` with either `lower_db,upper_db` or `p10_db,p90_db`
/// columns (the latter is what `write_sysid_csv` produces). Other columns are
/// ignored.
pub fn read_bounds<R: Read>(src: R) -> Result<ResponseBounds, FormatError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(src);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let f = col("freq_hz").ok_or_else(|| FormatError::Bounds("missing freq_hz column".into()))?;
    let (lo, hi) = match (col("lower_db"), col("upper_db"), col("p10_db"), col("p90_db")) {
        (Some(l), Some(u), _, _) => (l, u),
        (_, _, Some(l), Some(u)) => (l, u),
        _ => return Err(FormatError::Bounds("need lower_db/upper_db or p10_db/p90_db".into())),
    };
    let mut b = ResponseBounds {
        freq_grid_hz: Vec::new(),
        lower_db: Vec::new(),
        upper_db: Vec::new(),
    };
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64, FormatError> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| FormatError::Bounds(format!("row {}: bad number in column {i}", row + 1)))
        };
        b.freq_grid_hz.push(num(f)?);
        b.lower_db.push(num(lo)?);
        b.upper_db.push(num(hi)?);
    }
    Ok(b)
}

pub fn load_bounds(path: impl AsRef<Path>) -> Result<ResponseBounds, FormatError> {
    read_bounds(std::fs::File::open(path)?)
}

pub fn write_bounds<W: Write>(b: &ResponseBounds, dst: W) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(dst);
    w.write_record(["freq_hz", "lower_db", "upper_db"])?;
    for i in 0..b.freq_grid_hz.len() {
        w.write_record(&[
            b.freq_grid_hz[i].to_string(),
            b.lower_db[i].to_string(),
            b.upper_db[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per frequency bin. `coh` must share the estimate's grid.
pub fn write_sysid<W: Write>(
    est: &TransferFunctionEstimate,
    coh: &CoherenceCurve,
    dst: W,
) -> Result<(), FormatError> {
    if coh.freq_grid_hz != est.freq_grid_hz {
        return Err(FormatError::Bounds("coherence grid differs from transfer grid".into()));
    }
    let mut w = csv::Writer::from_writer(dst);
    w.write_record(SYSID_COLUMNS)?;
    for i in 0..est.freq_grid_hz.len() {
        w.write_record(&[
            est.freq_grid_hz[i].to_string(),
            est.median_db[i].to_string(),
            est.smoothed_db[i].to_string(),
            est.p10_db[i].to_string(),
            est.p90_db[i].to_string(),
            coh.coherence[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("cfg.json");
        let cfg = NetworkConfig {
            degradation_cutoff_hz: Some(600.0),
            ..NetworkConfig::reference()
        };
        save_config(&cfg, &p).unwrap();
        assert_eq!(load_config(&p).unwrap(), cfg);
        std::fs::write(&p, "{\"m_bands\": 4}").unwrap();
        assert!(matches!(load_config(&p), Err(FormatError::Config(_))));
    }

    #[test]
    fn bounds_round_trip_exact() {
        let b = ResponseBounds::placeholder();
        let mut out = Vec::new();
        write_bounds(&b, &mut out).unwrap();
        assert_eq!(read_bounds(out.as_slice()).unwrap(), b);
    }

    #[test]
    fn percentile_columns_accepted() {
        let text = "freq_hz, median_db, p10_db, p90_db\n0, 0, -1, 1\n8000, -3, -5, -2\n";
        let b = read_bounds(text.as_bytes()).unwrap();
        assert_eq!(b.freq_grid_hz, vec![0.0, 8000.0]);
        assert_eq!(b.lower_db, vec![-1.0, -5.0]);
        assert_eq!(b.upper_db, vec![1.0, -2.0]);
        b.validate(16000.0).unwrap();
    }

    #[test]
    fn bounds_errors() {
        assert!(matches!(read_bounds("f,lower_db,upper_db\n".as_bytes()), Err(FormatError::Bounds(_))));
        assert!(matches!(read_bounds("freq_hz,lower_db\n".as_bytes()), Err(FormatError::Bounds(_))));
        let bad = "freq_hz,lower_db,upper_db\n0,x,1\n";
        assert!(matches!(read_bounds(bad.as_bytes()), Err(FormatError::Bounds(_))));
    }

    #[test]
    fn sysid_table_feeds_bounds() {
        let grid: Vec<f64> = (0..257).map(|k| k as f64 * 31.25).collect();
        let est = TransferFunctionEstimate {
            freq_grid_hz: grid.clone(),
            median_db: grid.iter().map(|f| -f / 1000.0).collect(),
            smoothed_db: grid.iter().map(|f| -f / 1000.0).collect(),
            p10_db: grid.iter().map(|f| -f / 1000.0 - 2.0).collect(),
            p90_db: grid.iter().map(|f| -f / 1000.0 + 1.5).collect(),
            n_segments: 5,
        };
        let coh = CoherenceCurve {
            freq_grid_hz: grid.clone(),
            coherence: vec![0.5; 257],
            frames: 30,
        };
        let mut out = Vec::new();
        write_sysid(&est, &coh, &mut out).unwrap();
        let text = String::from_utf8(out.clone()).unwrap();
        assert!(text.starts_with("freq_hz,median_db,smoothed_db,p10_db,p90_db,coherence\n"));
        let b = read_bounds(out.as_slice()).unwrap();
        assert_eq!(b.lower_db, est.p10_db);
        assert_eq!(b.upper_db, est.p90_db);
        b.validate(16000.0).unwrap();

        let shifted = CoherenceCurve {
            freq_grid_hz: vec![0.0; 257],
            ..coh
        };
        assert!(write_sysid(&est, &shifted, Vec::new()).is_err());
    }
}
