//! CSV and raw little-endian f32 exports with JSON sidecars.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Long-format CSV: `channel,sample_index,value`, one line per sample.
pub fn write_signal_csv(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    write_signal_csv_rows(path, rows.iter().enumerate())
}

/// Long-format CSV holding a single channel under its original index.
pub fn write_channel_csv(path: &Path, channel: usize, row: &[f64]) -> Result<()> {
    write_signal_csv_rows(path, std::iter::once((channel, row)))
}

fn write_signal_csv_rows<'a, R: AsRef<[f64]> + 'a>(path: &Path, rows: impl Iterator<Item = (usize, R)>) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "channel,sample_index,value").map_err(io)?;
    for (c, row) in rows {
        for (n, v) in row.as_ref().iter().enumerate() {
            writeln!(w, "{c},{n},{v}").map_err(io)?;
        }
    }
    finish(path, w)
}

/// Plain matrix CSV, one line per row, no header.
pub fn write_matrix_csv<R: AsRef<[f64]>>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    for row in rows {
        let line: Vec<String> = row.as_ref().iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(",")).map_err(io)?;
    }
    finish(path, w)
}

#[derive(Debug, Serialize)]
pub struct BinarySidecar<'a, M: Serialize> {
    pub data_file: String,
    pub dtype: &'static str,
    /// `[rows, columns]`, row-major.
    pub shape: [usize; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_rate: Option<f64>,
    pub meta: &'a M,
}

/// Write `<stem>.f32` (row-major little-endian f32) and `<stem>.json`.
/// Returns both paths.
pub fn write_f32_with_sidecar<M: Serialize>(
    dir: &Path,
    stem: &str,
    rows: &[Vec<f64>],
    sample_rate: Option<f64>,
    meta: &M,
) -> Result<(PathBuf, PathBuf)> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::DimensionMismatch("ragged rows in binary export".into()));
    }
    let bin = dir.join(format!("{stem}.f32"));
    let mut w = create(&bin)?;
    for v in rows.iter().flatten() {
        w.write_all(&(*v as f32).to_le_bytes())
            .map_err(|e| Error::io(&bin, e))?;
    }
    finish(&bin, w)?;

    let sidecar = BinarySidecar {
        data_file: format!("{stem}.f32"),
        dtype: "float32-le",
        shape: [rows.len(), cols],
        sample_rate,
        meta,
    };
    let json = dir.join(format!("{stem}.json"));
    write_json(&json, &sidecar)?;
    Ok((bin, json))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    finish(path, w)
}

/// Read back a `.f32` export.
pub fn read_f32(path: &Path, rows: usize, cols: usize) -> Result<Vec<Vec<f32>>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != rows * cols * 4 {
        return Err(Error::DimensionMismatch(format!(
            "{} holds {} bytes, expected {}",
            path.display(),
            bytes.len(),
            rows * cols * 4
        )));
    }
    let flat: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(flat.chunks(cols.max(1)).map(<[f32]>::to_vec).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.csv");
        write_signal_csv(&p, &[vec![1.0, 2.5], vec![-3.0, 0.0]]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "channel,sample_index,value\n0,0,1\n0,1,2.5\n1,0,-3\n1,1,0\n");

        write_channel_csv(&p, 7, &[0.5]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "channel,sample_index,value\n7,0,0.5\n");
    }

    #[test]
    fn binary_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.5]];
        let (bin, json) = write_f32_with_sidecar(dir.path(), "x", &rows, Some(10.0), &"meta").unwrap();
        let back = read_f32(&bin, 2, 3).unwrap();
        assert_eq!(back[1], vec![4.0, 5.0, 6.5]);
        let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
        assert_eq!(side["shape"], serde_json::json!([2, 3]));
        assert_eq!(side["dtype"], "float32-le");
        assert_eq!(side["sample_rate"], 10.0);
    }

    #[test]
    fn matrix_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_matrix_csv(&p, [vec![0.0, -1.5], vec![2.0, 3.0]]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "0,-1.5\n2,3\n");
    }
}
