use std::collections::BTreeSet;
use std::path::Path;

use super::{ExperimentRecord, RowStatus};
use crate::error::Result;

/// The record's rows as CSV. Columns: `experiment, label, norm_json, n, k,
/// eps, seed, status, detail`, then every value key in sorted order (empty
/// where a row lacks it). Numbers use the shortest round-trip format, so
/// identical records give identical bytes.
pub fn csv_string(record: &ExperimentRecord) -> Result<String> {
    let keys: BTreeSet<&str> = record
        .rows
        .iter()
        .flat_map(|r| r.values.keys().map(String::as_str))
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["experiment", "label", "norm_json", "n", "k", "eps", "seed", "status", "detail"];
    header.extend(keys.iter().copied());
    w.write_record(&header)?;
    for r in &record.rows {
        let mut fields = vec![
            r.experiment.clone(),
            r.label.clone(),
            r.norm_json.clone(),
            r.n.to_string(),
            r.k.map(|k| k.to_string()).unwrap_or_default(),
            number(r.eps),
            r.seed.to_string(),
            match r.status {
                RowStatus::Ok => "ok".into(),
                RowStatus::Failed => "failed".into(),
            },
            r.detail.clone(),
        ];
        fields.extend(keys.iter().map(|k| r.values.get(*k).map(|v| number(*v)).unwrap_or_default()));
        w.write_record(&fields)?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Shortest round-trip form, switching to exponent notation for very small
/// or very large magnitudes.
fn number(v: f64) -> String {
    if v != 0.0 && v.is_finite() && (v.abs() < 1e-4 || v.abs() >= 1e15) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

pub fn write_csv(record: &ExperimentRecord, path: &Path) -> Result<()> {
    std::fs::write(path, csv_string(record)?)?;
    Ok(())
}

/// The full record (config, rows, fits, wall clock, version) as pretty JSON.
pub fn write_json(record: &ExperimentRecord, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(record)?)?;
    Ok(())
}
