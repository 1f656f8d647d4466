//! WMS1 snapshot files and CSV series.
//!
//! A WMS1 file is a little-endian `u32` byte count, a JSON header of that
//! many bytes, then `u` and `u̇` as `n` little-endian `f64` each.

use crate::error::{LabError, Result};
use crate::grid::{FieldPair, GridSpec, RadialGrid, ScalarField};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::sync::Arc;

pub const MAGIC: &str = "WMS1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotHeader {
    pub magic: String,
    pub k: u32,
    #[serde(rename = "J")]
    pub j: usize,
    pub t: f64,
    pub grid: GridSpec,
    pub endianness: String,
}

impl SnapshotHeader {
    pub fn new(k: u32, j: usize, t: f64, grid: GridSpec) -> Self {
        Self { magic: MAGIC.into(), k, j, t, grid, endianness: "little".into() }
    }
}

pub fn write_snapshot<W: Write>(w: &mut W, header: &SnapshotHeader, pair: &FieldPair) -> Result<()> {
    let n = pair.grid().len();
    if header.grid.n != n {
        return Err(LabError::Format(format!("header declares n = {}, fields have {n}", header.grid.n)));
    }
    let json = serde_json::to_vec(header).map_err(|e| LabError::Format(e.to_string()))?;
    let len = u32::try_from(json.len()).map_err(|_| LabError::Format("header too long".into()))?;
    let mut buf = Vec::with_capacity(4 + json.len() + 16 * n);
    buf.extend_from_slice(&len.to_le_bytes());
    buf.extend_from_slice(&json);
    for v in pair.u.values().iter().chain(pair.udot.values()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshot<R: Read>(r: &mut R) -> Result<(SnapshotHeader, FieldPair)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 4 {
        return Err(LabError::Format("missing header length".into()));
    }
    let len = u32::from_le_bytes(bytes[..4].try_into().expect("four bytes")) as usize;
    let body = &bytes[4..];
    if body.len() < len {
        return Err(LabError::Format(format!("header length {len} exceeds file size")));
    }
    let header: SnapshotHeader =
        serde_json::from_slice(&body[..len]).map_err(|e| LabError::Format(format!("bad header: {e}")))?;
    if header.magic != MAGIC {
        return Err(LabError::Format(format!("bad magic {:?}", header.magic)));
    }
    if header.endianness != "little" {
        return Err(LabError::Format(format!("unsupported endianness {:?}", header.endianness)));
    }
    let n = header.grid.n;
    let payload = &body[len..];
    if payload.len() != 16 * n {
        return Err(LabError::Format(format!("payload has {} bytes, expected {}", payload.len(), 16 * n)));
    }
    let grid = Arc::new(header.grid.build()?);
    let vals: Vec<f64> =
        payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes"))).collect();
    let u = ScalarField::new(grid.clone(), vals[..n].to_vec())?;
    let udot = ScalarField::new(grid, vals[n..].to_vec())?;
    Ok((header, FieldPair { u, udot }))
}

pub fn save_snapshot(path: &std::path::Path, header: &SnapshotHeader, pair: &FieldPair) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_snapshot(&mut f, header, pair)?;
    f.flush()?;
    Ok(())
}

pub fn load_snapshot(path: &std::path::Path) -> Result<(SnapshotHeader, FieldPair)> {
    read_snapshot(&mut std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Grid of a snapshot header, shared between fields.
pub fn header_grid(header: &SnapshotHeader) -> Result<Arc<RadialGrid>> {
    Ok(Arc::new(header.grid.build()?))
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Numeric CSV table with a header row.
pub fn write_csv<W: Write>(w: &mut W, columns: &[String], rows: &[Vec<f64>]) -> Result<()> {
    writeln!(w, "{}", columns.join(","))?;
    for row in rows {
        if row.len() != columns.len() {
            return Err(LabError::Format(format!("row has {} entries, expected {}", row.len(), columns.len())));
        }
        let line: Vec<String> = row.iter().map(|x| fmt_f64(*x)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_csv<R: Read>(r: &mut R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut lines = text.lines();
    let columns: Vec<String> =
        lines.next().ok_or_else(|| LabError::Format("empty CSV".into()))?.split(',').map(String::from).collect();
    let rows = lines
        .map(|l| {
            l.split(',')
                .map(|x| x.parse::<f64>().map_err(|e| LabError::Format(format!("bad number {x:?}: {e}"))))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((columns, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(n: usize) -> FieldPair {
        let grid = Arc::new(RadialGrid::uniform(10.0, n).unwrap());
        FieldPair {
            u: ScalarField::from_fn(&grid, |r| (r * 1.7).sin() / 3.0),
            udot: ScalarField::from_fn(&grid, |r| (-r).exp() * 1e-300),
        }
    }

    #[test]
    fn snapshot_layout() {
        let p = pair(32);
        let h = SnapshotHeader::new(3, 2, -10.0, p.grid().spec());
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &h, &p).unwrap();
        let len = u32::from_le_bytes(buf[..4].try_into().unwrap()) as usize;
        assert_eq!(buf.len(), 4 + len + 16 * 32);
        let json: serde_json::Value = serde_json::from_slice(&buf[4..4 + len]).unwrap();
        assert_eq!(json["magic"], "WMS1");
        assert_eq!(json["J"], 2);
        assert_eq!(json["grid"]["kind"], "uniform");
        let (h2, p2) = read_snapshot(&mut buf.as_slice()).unwrap();
        assert_eq!(h2, h);
        assert_eq!(p2, p);
    }

    #[test]
    fn rejects_corruption() {
        let p = pair(32);
        let h = SnapshotHeader::new(3, 1, -1.0, p.grid().spec());
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &h, &p).unwrap();
        let mut short = buf.clone();
        short.pop();
        assert!(read_snapshot(&mut short.as_slice()).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(read_snapshot(&mut long.as_slice()).is_err());
        let mut bad = buf.clone();
        bad[5..9].copy_from_slice(b"XXXX");
        assert!(read_snapshot(&mut bad.as_slice()).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let cols = vec!["t".to_string(), "x".to_string()];
        let rows = vec![vec![-1e4, 0.1], vec![std::f64::consts::PI, -5e-324]];
        let mut buf = Vec::new();
        write_csv(&mut buf, &cols, &rows).unwrap();
        let (c2, r2) = read_csv(&mut buf.as_slice()).unwrap();
        assert_eq!(c2, cols);
        assert_eq!(r2, rows);
    }

    proptest! {
        #[test]
        fn snapshot_bit_exact(vals in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 32)) {
            let grid = Arc::new(RadialGrid::uniform(4.0, 16).unwrap());
            let p = FieldPair {
                u: ScalarField::new(grid.clone(), vals[..16].to_vec()).unwrap(),
                udot: ScalarField::new(grid.clone(), vals[16..].to_vec()).unwrap(),
            };
            let h = SnapshotHeader::new(2, 1, -3.25, grid.spec());
            let mut buf = Vec::new();
            write_snapshot(&mut buf, &h, &p).unwrap();
            let (_, back) = read_snapshot(&mut buf.as_slice()).unwrap();
            for (a, b) in back.u.values().iter().chain(back.udot.values()).zip(&vals) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        #[test]
        fn csv_lossless(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
            prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
