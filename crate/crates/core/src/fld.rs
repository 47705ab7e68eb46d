//! Scalar field persistence: a one-line JSON header followed by raw
//! little-endian 64-bit floats in row-major order (`.fld` files).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};

#[derive(Debug, Serialize, Deserialize)]
struct FldHeader {
    dim: usize,
    lengths: Vec<f64>,
    cells: Vec<usize>,
    boundary_value: f64,
    dtype: String,
}

pub fn write_field(path: &Path, field: &ScalarField) -> Result<()> {
    let header = FldHeader {
        dim: field.grid.dim(),
        lengths: field.grid.lengths().to_vec(),
        cells: field.grid.cells_per_axis().to_vec(),
        boundary_value: field.boundary_value,
        dtype: "f64-le".to_string(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for v in &field.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<ScalarField> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header_bytes = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte)?;
        if byte[0] == b'\n' {
            break;
        }
        header_bytes.push(byte[0]);
    }
    let header: FldHeader = serde_json::from_slice(&header_bytes)?;
    if header.dtype != "f64-le" {
        return Err(Error::InvalidConfig(format!(
            "unsupported dtype {:?}",
            header.dtype
        )));
    }
    let grid = Grid::new(header.dim, &header.lengths, &header.cells)?;
    let n = grid.n_cells();
    let mut raw = vec![0u8; 8 * n];
    r.read_exact(&mut raw)?;
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ScalarField::new(grid, values, header.boundary_value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_bits() {
        let grid = Grid::new(2, &[1.0, 2.0], &[5, 7]).unwrap();
        let field = ScalarField::from_fn(grid, 1.0, |x, y| (x * 13.7).sin() + y);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fld");
        write_field(&path, &field).unwrap();
        let back = read_field(&path).unwrap();
        assert_eq!(field, back);
    }
}
