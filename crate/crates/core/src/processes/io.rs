//! Ensemble serialization: long-format CSV and a binary block of
//! little-endian `f64` preceded by one JSON header line.

use std::io::{BufRead, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{PathEnsemble, ProcessFamily, TimeGrid};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// First line of the binary layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryHeader {
    /// `[replicas, times]`, values stored row-major.
    pub shape: [usize; 2],
    pub times: Vec<f64>,
    pub family: ProcessFamily,
    pub seed: u64,
    pub dtype: String,
}

impl<T: Real> PathEnsemble<T> {
    /// Rows `replica,time,value` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "replica,time,value")?;
        let times = self.grid.points();
        for (r, row) in self.values.rows().into_iter().enumerate() {
            for (t, v) in times.iter().zip(row) {
                writeln!(out, "{r},{:.16e},{:.16e}", t.as_f64(), v.as_f64())?;
            }
        }
        Ok(())
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        let header = BinaryHeader {
            shape: [self.values.nrows(), self.values.ncols()],
            times: self.grid.points().iter().map(|t| t.as_f64()).collect(),
            family: self.family.clone(),
            seed: self.seed,
            dtype: "<f8".into(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for v in self.values.iter() {
            out.write_all(&v.as_f64().to_le_bytes())?;
        }
        Ok(())
    }
}

/// Reads the binary layout written by [`PathEnsemble::write_binary`].
pub fn read_binary<R: BufRead>(mut input: R) -> Result<PathEnsemble<f64>> {
    let mut line = String::new();
    input.read_line(&mut line)?;
    let header: BinaryHeader = serde_json::from_str(line.trim_end())?;
    let [rows, cols] = header.shape;
    if header.times.len() != cols {
        return Err(Error::Invalid("header times do not match shape".into()));
    }
    let mut bytes = vec![0u8; rows * cols * 8];
    input.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(PathEnsemble {
        grid: TimeGrid::from_points(header.times)?,
        values: Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Invalid(e.to_string()))?,
        family: header.family,
        seed: header.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::simulate_fbm;

    #[test]
    fn binary_round_trip() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let e = simulate_fbm(0.7, &g, 3, 2).unwrap();
        let mut buf = Vec::new();
        e.write_binary(&mut buf).unwrap();
        let back = read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.values, e.values);
        assert_eq!(back.grid.points(), e.grid.points());
        assert_eq!(back.family, e.family);
    }

    #[test]
    fn csv_layout() {
        let g = TimeGrid::uniform(1.0, 2).unwrap();
        let e = simulate_fbm(0.7, &g, 2, 2).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 2 * 3);
        assert_eq!(lines[1], "0,0.0000000000000000e0,0.0000000000000000e0");
        assert!(!text.contains('\r'));
    }
}
