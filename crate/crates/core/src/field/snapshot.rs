use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FieldError, Grid, VorticityField};

const MAGIC: &[u8; 8] = b"EULSNAP\0";
const VERSION: u32 = 1;
const CSV_LIMIT: usize = 512;

/// Write `magic | version | resolution | time | crc32 | samples` in little-endian order.
pub fn write_snapshot(path: &Path, omega: &VorticityField, time: f64) -> Result<(), FieldError> {
    let mut payload = Vec::with_capacity(omega.values().len() * 8);
    for v in omega.values() {
        payload.write_f64::<LittleEndian>(*v)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(omega.grid().resolution() as u32)?;
    w.write_f64::<LittleEndian>(time)?;
    w.write_u32::<LittleEndian>(crc32fast::hash(&payload))?;
    w.write_all(&payload)?;
    w.flush()?;
    Ok(())
}

/// Read a snapshot, verifying header and checksum. Returns the field and its time.
pub fn read_snapshot(path: &Path) -> Result<(VorticityField, f64), FieldError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(FieldError::Format("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(FieldError::Format(format!("unsupported version {version}")));
    }
    let grid = Grid::new(r.read_u32::<LittleEndian>()? as usize)?;
    let time = r.read_f64::<LittleEndian>()?;
    let crc = r.read_u32::<LittleEndian>()?;
    let mut payload = vec![0u8; grid.len() * 8];
    r.read_exact(&mut payload)?;
    if crc32fast::hash(&payload) != crc {
        return Err(FieldError::Format("checksum mismatch".into()));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(FieldError::Format("trailing bytes".into()));
    }
    let mut cursor = &payload[..];
    let mut values = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        values.push(cursor.read_f64::<LittleEndian>()?);
    }
    Ok((VorticityField::from_values(grid, values)?, time))
}

pub fn write_snapshot_csv(path: &Path, omega: &VorticityField) -> Result<(), FieldError> {
    let g = omega.grid();
    if g.resolution() > CSV_LIMIT {
        return Err(FieldError::Format(format!(
            "CSV export is limited to resolution {CSV_LIMIT}, got {}",
            g.resolution()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "x1,x2,omega")?;
    for (i, v) in omega.values().iter().enumerate() {
        let [x1, x2] = g.node(i);
        writeln!(w, "{x1},{x2},{v:e}")?;
    }
    w.flush()?;
    Ok(())
}
