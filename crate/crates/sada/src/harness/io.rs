//! File emission: JSON-lines reports, CSV tables, binary vector blobs.

use super::convergence::ConvergenceRow;
use super::experiments::RunReport;
use crate::error::{Error, Result};
use crate::numerics::Vector;
use std::fs;
use std::io::Write;
use std::path::Path;

pub fn write_reports_jsonl(path: &Path, reports: &[RunReport]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = fs::File::create(path)?;
    for r in reports {
        let line = serde_json::to_string(r)?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_reports_jsonl(path: &Path) -> Result<Vec<RunReport>> {
    let text = fs::read_to_string(path)?;
    let mut reports = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        reports.push(serde_json::from_str(line)?);
    }
    Ok(reports)
}

/// Raw little-endian f64 blob plus a JSON sidecar describing the shape.
pub fn write_vector_blob(path: &Path, v: &Vector) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut bytes = Vec::with_capacity(v.len() * 8);
    for x in v.as_slice() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, &bytes)?;
    let sidecar = serde_json::json!({
        "dtype": "f64",
        "byte_order": "little-endian",
        "shape": [v.len()],
    });
    let sidecar_path = path.with_extension("json");
    fs::write(sidecar_path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn read_vector_blob(path: &Path) -> Result<Vector> {
    let bytes = fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::InvalidConfig(vec![format!(
            "blob length {} is not a multiple of 8",
            bytes.len()
        )]));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Vector::checked(data)
}

pub fn write_convergence_csv(path: &Path, rows: &[ConvergenceRow]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = fs::File::create(path)?;
    writeln!(out, "scheme,function,h,error,observed_order")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.scheme, r.function, r.h, r.error, r.observed_order
        )?;
    }
    Ok(())
}

/// Generic CSV writer: a header and stringified rows.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = fs::File::create(path)?;
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_blob_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.f64");
        let v = Vector::new(vec![1.5, -2.25, 1e-300]);
        write_vector_blob(&path, &v).unwrap();
        let back = read_vector_blob(&path).unwrap();
        for i in 0..3 {
            assert_eq!(v[i].to_bits(), back[i].to_bits());
        }
        let sidecar: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(path.with_extension("json")).unwrap())
                .unwrap();
        assert_eq!(sidecar["shape"][0], 3);
        assert_eq!(sidecar["dtype"], "f64");
    }
}
