//! Field serialization.
//!
//! Two formats, both versioned through the magic string:
//!
//! * raw: 32-byte header (`b"SPDFLD01"`, `d: u64 LE`, `M: u64 LE`,
//!   `L: f64 LE`) followed by `M^d` values as IEEE-754 doubles, little
//!   endian, axis 0 fastest;
//! * CSV: header row `# levypde field v1`, then `i0,i1,...,value` rows
//!   with integer index coordinates.

use super::{Field, FieldError, TorusGrid};
use crate::Real;
use std::io::{Read, Write};

pub const MAGIC: &[u8; 8] = b"SPDFLD01";

pub fn write_raw<T: Real>(field: &Field<T>, out: &mut impl Write) -> Result<(), FieldError> {
    let grid = field.grid();
    out.write_all(MAGIC)?;
    out.write_all(&(grid.dim() as u64).to_le_bytes())?;
    out.write_all(&(grid.points() as u64).to_le_bytes())?;
    out.write_all(&grid.side().to_f64().unwrap().to_le_bytes())?;
    for v in field.values() {
        out.write_all(&v.to_f64().unwrap().to_le_bytes())?;
    }
    Ok(())
}

pub fn read_raw<T: Real>(input: &mut impl Read) -> Result<Field<T>, FieldError> {
    let mut header = [0u8; 32];
    input.read_exact(&mut header)?;
    if &header[0..8] != MAGIC {
        return Err(FieldError::Format("bad magic".into()));
    }
    let dim = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    let points = u64::from_le_bytes(header[16..24].try_into().unwrap()) as usize;
    let side = f64::from_le_bytes(header[24..32].try_into().unwrap());
    let grid = TorusGrid::new(
        dim,
        T::from_f64(side).ok_or_else(|| FieldError::Format("side not representable".into()))?,
        points,
    )?;
    let mut values = Vec::with_capacity(grid.num_cells());
    let mut buf = [0u8; 8];
    for _ in 0..grid.num_cells() {
        input.read_exact(&mut buf)?;
        let v = f64::from_le_bytes(buf);
        values.push(
            T::from_f64(v).ok_or_else(|| FieldError::Format("value not representable".into()))?,
        );
    }
    Field::from_values(grid, values)
}

pub fn write_csv<T: Real>(field: &Field<T>, out: &mut impl Write) -> Result<(), FieldError> {
    let grid = field.grid();
    writeln!(out, "# levypde field v1")?;
    let idx_header: Vec<String> = (0..grid.dim()).map(|a| format!("i{a}")).collect();
    writeln!(out, "{},value", idx_header.join(","))?;
    for (flat, v) in field.values().iter().enumerate() {
        let ic = grid.index_coords(flat);
        let coords: Vec<String> = ic[..grid.dim()].iter().map(|c| c.to_string()).collect();
        writeln!(out, "{},{:e}", coords.join(","), v)?;
    }
    Ok(())
}
