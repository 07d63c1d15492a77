//! Field snapshots as CSV grids: one row per `(z, x)` point with columns
//! `x, z` and one column per variable. Reals carry 17 significant digits so
//! a written state reads back bit-identically.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::imex::Layout;

pub(crate) fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_snapshot<W: Write>(writer: W, layout: &Layout, state: &[f64]) -> Result<()> {
    if state.len() != layout.len() {
        return Err(Error::DimensionMismatch { expected: layout.len(), found: state.len() });
    }
    let mut csv = csv::Writer::from_writer(writer);
    let mut header = vec!["x".to_string(), "z".to_string()];
    header.extend(layout.variables.iter().cloned());
    csv.write_record(&header)?;
    for (k, z) in layout.z.iter().enumerate() {
        for (i, x) in layout.x.iter().enumerate() {
            let mut row = vec![fmt_real(*x), fmt_real(*z)];
            row.extend((0..layout.variables.len()).map(|v| fmt_real(state[layout.index(v, k, i)])));
            csv.write_record(&row)?;
        }
    }
    csv.flush()?;
    Ok(())
}

pub fn read_snapshot<R: Read>(reader: R) -> Result<(Layout, Vec<f64>)> {
    let mut csv = csv::Reader::from_reader(reader);
    let header = csv.headers()?.clone();
    if header.len() < 3 || &header[0] != "x" || &header[1] != "z" {
        return Err(Error::config("snapshot header must start with x,z and name at least one variable"));
    }
    let variables: Vec<String> = header.iter().skip(2).map(String::from).collect();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in csv.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|e| Error::config(format!("bad number {f:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::config("snapshot has no rows"));
    }
    // x varies fastest; the first repeat of the first x closes the row
    let nx = rows.iter().skip(1).position(|r| r[0] == rows[0][0]).map_or(rows.len(), |p| p + 1);
    if rows.len() % nx != 0 {
        return Err(Error::config("snapshot is not a complete x-z grid"));
    }
    let nz = rows.len() / nx;
    let layout = Layout {
        variables,
        x: rows[..nx].iter().map(|r| r[0]).collect(),
        z: (0..nz).map(|k| rows[k * nx][1]).collect(),
    };
    let mut state = vec![0.0; layout.len()];
    for k in 0..nz {
        for i in 0..nx {
            let row = &rows[k * nx + i];
            for v in 0..layout.variables.len() {
                state[layout.index(v, k, i)] = row[2 + v];
            }
        }
    }
    Ok((layout, state))
}

pub fn save_snapshot(path: &Path, layout: &Layout, state: &[f64]) -> Result<()> {
    let mut file = File::create(path)?;
    write_snapshot(&mut file, layout, state)?;
    file.sync_all()?;
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<(Layout, Vec<f64>)> {
    read_snapshot(File::open(path)?)
}
