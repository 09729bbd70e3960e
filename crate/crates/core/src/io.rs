//! File helpers: atomic writes and sample CSV files.

use std::fs;
use std::path::Path;

use crate::batch::SampleBatch;
use crate::error::{Error, Result};

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?
        .to_os_string();
    tmp_name.push(format!(".tmp-{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// CSV text with header `x0,x1,…` and one row per sample. Values use the
/// shortest representation that parses back to the same double.
pub fn samples_to_csv(batch: &SampleBatch) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = (0..batch.dim()).map(|i| format!("x{i}")).collect();
    w.write_record(&header).expect("in-memory write");
    for row in batch.iter_rows() {
        w.write_record(row.iter().map(|v| v.to_string())).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn write_samples_csv(path: &Path, batch: &SampleBatch) -> Result<()> {
    write_atomic(path, &samples_to_csv(batch))
}

/// Reads a sample CSV. A header-only file yields `Ok(None)`.
pub fn read_samples_csv(path: &Path) -> Result<Option<SampleBatch>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid(format!("{}: {other:?}", path.display())),
    })?;
    let dim = r
        .headers()
        .map_err(|e| Error::invalid(format!("{}: bad CSV header: {e}", path.display())))?
        .len();
    if dim == 0 {
        return Err(Error::invalid(format!("{}: empty CSV header", path.display())));
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::invalid(format!("{}: row {}: {e}", path.display(), i + 1)))?;
        if rec.len() != dim {
            return Err(Error::invalid(format!(
                "{}: row {} has {} fields, header has {dim}",
                path.display(),
                i + 1,
                rec.len()
            )));
        }
        for field in rec.iter() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::invalid(format!("{}: row {}: not a number: {field:?}", path.display(), i + 1))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Ok(None);
    }
    SampleBatch::new(rows, dim, data).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let b = SampleBatch::from_rows(&[[0.1, -1.0 / 3.0], [1e-300, 12345.678]]).unwrap();
        write_samples_csv(&p, &b).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("x0,x1\n"));
        assert_eq!(read_samples_csv(&p).unwrap().unwrap(), b);
    }

    #[test]
    fn header_only_csv_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        std::fs::write(&p, "x0,x1\n").unwrap();
        assert!(read_samples_csv(&p).unwrap().is_none());
    }

    #[test]
    fn missing_csv_is_io_error() {
        let r = read_samples_csv(Path::new("/nonexistent/dir/x.csv"));
        assert!(matches!(r, Err(Error::Io { .. })));
    }
}
