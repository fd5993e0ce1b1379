//! Binary field files and VTK export.
//!
//! Layout: 8-byte magic, u64 little-endian header length, JSON header, then
//! the samples as little-endian f64 in x-fastest order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FieldMeta, GridLayout, ScalarField3D};

pub const FIELD_MAGIC: &[u8; 8] = b"LTFIELD1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    /// What the samples are, e.g. "rf_potential" or "top_plate_potential".
    pub kind: String,
    pub units: String,
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub extents: [usize; 3],
    pub tolerance: f64,
    pub residual: f64,
    pub iterations: usize,
    #[serde(default)]
    pub geometry_hash: Option<String>,
}

impl FieldHeader {
    pub fn for_field(field: &ScalarField3D, kind: &str, units: &str) -> Self {
        Self {
            kind: kind.into(),
            units: units.into(),
            origin: field.layout.origin,
            spacing: field.layout.spacing,
            extents: field.layout.dims,
            tolerance: field.meta.tolerance,
            residual: field.meta.residual,
            iterations: field.meta.iterations,
            geometry_hash: None,
        }
    }

    pub fn with_hash(mut self, hash: impl Into<String>) -> Self {
        self.geometry_hash = Some(hash.into());
        self
    }
}

pub fn write_field(path: impl AsRef<Path>, field: &ScalarField3D, header: &FieldHeader) -> Result<()> {
    if header.extents != field.layout.dims {
        return Err(Error::Format("header extents do not match the field".into()));
    }
    let json = serde_json::to_vec(header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for v in &field.values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<(ScalarField3D, FieldHeader)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 20 {
        return Err(Error::Format(format!("header length {len} is implausible")));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: FieldHeader = serde_json::from_slice(&json)?;
    let layout = GridLayout::new(header.extents, header.origin, header.spacing)?;
    let mut bytes = Vec::with_capacity(layout.len() * 8);
    r.read_to_end(&mut bytes)?;
    if bytes.len() != layout.len() * 8 {
        return Err(Error::Format(format!(
            "expected {} samples, found {} bytes",
            layout.len(),
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let mut field = ScalarField3D::new(layout, values)?;
    field.meta = FieldMeta {
        tolerance: header.tolerance,
        residual: header.residual,
        iterations: header.iterations,
    };
    Ok((field, header))
}

/// Legacy ASCII VTK structured-points file.
pub fn write_vtk(path: impl AsRef<Path>, field: &ScalarField3D, name: &str) -> Result<()> {
    let l = &field.layout;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "latticetrap {name}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} {}", l.dims[0], l.dims[1], l.dims[2])?;
    writeln!(w, "ORIGIN {:e} {:e} {:e}", l.origin[0], l.origin[1], l.origin[2])?;
    writeln!(w, "SPACING {:e} {:e} {:e}", l.spacing[0], l.spacing[1], l.spacing[2])?;
    writeln!(w, "POINT_DATA {}", l.len())?;
    writeln!(w, "SCALARS {name} double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in &field.values {
        writeln!(w, "{v:e}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let layout = GridLayout::new([4, 3, 2], [-1.0, 0.0, 2.0], [0.1, 0.2, 0.3]).unwrap();
        let mut f = ScalarField3D::from_fn(layout, |p| (p[0] * 7.1).sin() + p[1] / 3.0 - p[2]);
        f.meta = FieldMeta { tolerance: 1e-8, residual: 3e-9, iterations: 12 };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.ltf");
        let h = FieldHeader::for_field(&f, "rf_potential", "V/V").with_hash("abc");
        write_field(&path, &f, &h).unwrap();
        let (g, h2) = read_field(&path).unwrap();
        assert_eq!(h, h2);
        assert_eq!(f, g);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let layout = GridLayout::cubic([2, 2, 2], [0.0; 3], 1.0).unwrap();
        let f = ScalarField3D::zeros(layout);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.ltf");
        write_field(&path, &f, &FieldHeader::for_field(&f, "x", "V")).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_field(&path), Err(Error::Format(_))));
    }

    #[test]
    fn vtk_has_all_points() {
        let layout = GridLayout::cubic([3, 2, 2], [0.0; 3], 1.0).unwrap();
        let f = ScalarField3D::zeros(layout);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.vtk");
        write_vtk(&path, &f, "phi").unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("DIMENSIONS 3 2 2"));
        assert_eq!(text.lines().count(), 10 + 12);
    }
}
