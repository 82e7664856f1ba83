//! Artifact serialization: CSV tables, pretty JSON and a compact binary
//! tensor for kernel fields.
//!
//! Tensor layout: the 8-byte magic `LPKTNSR1`, a little-endian u64 header
//! length, the JSON header, then the `[time][column][x]` values as
//! little-endian f64.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::IoError;
use crate::frozen::{GridSpec, SpatialGrid};
use crate::parametrix::{FieldRole, KernelField};

pub const TENSOR_MAGIC: &[u8; 8] = b"LPKTNSR1";

/// Metadata stored ahead of the tensor values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorHeader {
    pub role: FieldRole,
    pub grid: GridSpec,
    pub times: Vec<f64>,
    pub stride: usize,
    pub columns: usize,
    pub model_hash: String,
    /// Free-form diagnostics (series norms and the like).
    #[serde(default)]
    pub diagnostics: serde_json::Value,
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// CSV with a header row; numbers use the shortest round-trip form.
pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<(), IoError>
where
    I: IntoIterator,
    I::Item: AsRef<[f64]>,
{
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(row.as_ref().iter().map(|v| v.to_string())).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Numeric CSV rows after the header.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), IoError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let header = r.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(csv_error)?;
        let row = record
            .iter()
            .map(|v| v.parse::<f64>().map_err(|e| IoError::Format(format!("{path:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn csv_error(e: csv::Error) -> IoError {
    IoError::Format(e.to_string())
}

/// Long-format CSV (t, x..., y..., value) on every `x_stride`-th x-node
/// per axis and every `column_step`-th stored y-column.
pub fn write_kernel_csv(path: &Path, field: &KernelField, x_stride: usize, column_step: usize) -> Result<(), IoError> {
    let grid = field.grid();
    let dim = grid.dim();
    let header: Vec<&str> = if dim == 1 { vec!["t", "x", "y", "value"] } else { vec!["t", "x1", "x2", "y1", "y2", "value"] };
    let step = x_stride.max(1);
    let xs: Vec<usize> = (0..grid.len()).filter(|&i| grid.unflatten(i).iter().take(dim).all(|k| k % step == 0)).collect();
    let mut rows = Vec::with_capacity(field.times().len() * field.columns().len() * xs.len());
    for (ti, &t) in field.times().iter().enumerate() {
        for (ci, &y) in field.columns().iter().enumerate().step_by(column_step.max(1)) {
            let col = field.column(ti, ci);
            let yp = grid.point(y);
            for &x in &xs {
                let mut row = Vec::with_capacity(2 * dim + 2);
                row.push(t);
                row.extend(grid.point(x));
                row.extend(&yp);
                row.push(col[x]);
                rows.push(row);
            }
        }
    }
    write_csv(path, &header, rows)
}

/// Write a kernel field as a binary tensor.
pub fn write_tensor(
    path: &Path,
    field: &KernelField,
    model_hash: &str,
    diagnostics: serde_json::Value,
) -> Result<(), IoError> {
    let header = TensorHeader {
        role: field.role(),
        grid: field.grid().spec(),
        times: field.times().to_vec(),
        stride: field.stride(),
        columns: field.columns().len(),
        model_hash: model_hash.to_string(),
        diagnostics,
    };
    let json = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for v in field.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a binary tensor back into a kernel field.
pub fn read_tensor(path: &Path) -> Result<(TensorHeader, KernelField), IoError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != TENSOR_MAGIC {
        return Err(IoError::Format(format!("{path:?} is not a kernel tensor")));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = usize::try_from(u64::from_le_bytes(len)).map_err(|e| IoError::Format(e.to_string()))?;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: TensorHeader = serde_json::from_slice(&json)?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(IoError::Format(format!("{path:?}: truncated tensor data")));
    }
    let data: Vec<f64> =
        bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8 bytes"))).collect();
    let grid = SpatialGrid::from_spec(header.grid).map_err(|e| IoError::Format(e.to_string()))?;
    let field = KernelField::from_data(header.role, &grid, &header.times, header.stride, data)
        .map_err(|e| IoError::Format(e.to_string()))?;
    Ok((header, field))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scratch(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("levy-io-{}-{name}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn tensor_round_trip() {
        let grid = SpatialGrid::new(1, 4.0, 16).unwrap();
        let mut field = KernelField::zeros(FieldRole::Lz(2), &grid, &[0.1, 0.5], 4).unwrap();
        for (i, v) in field.data_mut().iter_mut().enumerate() {
            *v = (i as f64).sin() / 3.0;
        }
        let dir = scratch("tensor");
        let path = dir.join("k.bin");
        write_tensor(&path, &field, "abc", serde_json::json!({"terms": 3})).unwrap();
        let (header, back) = read_tensor(&path).unwrap();
        assert_eq!(back, field);
        assert_eq!(header.model_hash, "abc");
        assert_eq!(header.diagnostics["terms"], 3);
        std::fs::write(&path, b"NOTATENSOR").unwrap();
        assert!(matches!(read_tensor(&path), Err(IoError::Format(_))));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = scratch("csv");
        let path = dir.join("t.csv");
        let rows = vec![vec![0.1, 1.0 / 3.0], vec![-2.5e-300, f64::MAX]];
        write_csv(&path, &["a", "b"], &rows).unwrap();
        let (header, back) = read_csv(&path).unwrap();
        assert_eq!(header, vec!["a", "b"]);
        assert_eq!(back, rows);
    }

    #[test]
    fn kernel_csv_has_one_row_per_node() {
        let grid = SpatialGrid::new(1, 4.0, 16).unwrap();
        let field = KernelField::zeros(FieldRole::Z, &grid, &[0.5], 8).unwrap();
        let path = scratch("kcsv").join("k.csv");
        write_kernel_csv(&path, &field, 2, 1).unwrap();
        let (header, rows) = read_csv(&path).unwrap();
        assert_eq!(header.len(), 4);
        assert_eq!(rows.len(), 2 * 8);
    }
}
