//! ExtensionField snapshots: binary (magic `FRACEXT1`, then s, R, level
//! count, z levels, the trace as a grid snapshot, and the values) and CSV.

use super::ExtensionField;
use crate::error::{Error, Result};
use crate::fracop::snapshot::{read_binary as read_grid, tail_to_text, write_binary as write_grid};
use std::io::{Read, Write};

pub const MAGIC: &[u8; 8] = b"FRACEXT1";

pub fn write_binary<W: Write>(e: &ExtensionField, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&e.s.to_le_bytes())?;
    w.write_all(&e.r.to_le_bytes())?;
    w.write_all(&(e.zmesh.len() as u64).to_le_bytes())?;
    for z in &e.zmesh {
        w.write_all(&z.to_le_bytes())?;
    }
    write_grid(&e.base, &mut w)?;
    w.write_all(&(e.values.len() as u64).to_le_bytes())?;
    for v in &e.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn f64_from<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| Error::Format("truncated extension snapshot".into()))?;
    Ok(f64::from_le_bytes(b))
}

fn u64_from<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| Error::Format("truncated extension snapshot".into()))?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_binary<R: Read>(mut r: R) -> Result<ExtensionField> {
    let mut m = [0u8; 8];
    r.read_exact(&mut m).map_err(|_| Error::Format("truncated extension snapshot".into()))?;
    if &m != MAGIC {
        return Err(Error::Format("bad extension snapshot magic".into()));
    }
    let s = f64_from(&mut r)?;
    let radius = f64_from(&mut r)?;
    let nz = u64_from(&mut r)? as usize;
    if nz > 1 << 24 {
        return Err(Error::Format("implausible level count".into()));
    }
    let zmesh = (0..nz).map(|_| f64_from(&mut r)).collect::<Result<Vec<_>>>()?;
    let base = read_grid(&mut r)?;
    let nv = u64_from(&mut r)? as usize;
    if nv != base.len() * (nz + 1) {
        return Err(Error::Format("value count does not match the mesh".into()));
    }
    let values = (0..nv).map(|_| f64_from(&mut r)).collect::<Result<Vec<_>>>()?;
    ExtensionField::from_parts(base, s, radius, zmesh, values)
}

/// CSV rows `x0,..,z,value`, with the mesh description in `#` headers.
pub fn write_csv<W: Write>(e: &ExtensionField, mut w: W) -> Result<()> {
    let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ");
    writeln!(w, "# s={}", e.s)?;
    writeln!(w, "# R={}", e.r)?;
    writeln!(w, "# zmesh={}", join(&e.zmesh))?;
    let shape: Vec<String> = e.base.shape.iter().map(|n| n.to_string()).collect();
    writeln!(w, "# shape={}", shape.join(" "))?;
    writeln!(w, "# spacing={}", e.base.spacing)?;
    writeln!(w, "# origin={}", join(&e.base.origin))?;
    writeln!(w, "# tail={}", tail_to_text(&e.base.tail))?;
    let cols: Vec<String> = (0..e.base.dim).map(|d| format!("x{d}")).collect();
    writeln!(w, "{},z,value", cols.join(","))?;
    let nx = e.nx();
    for (f, v) in e.values.iter().enumerate() {
        let x = e.mesh.x_node(f % nx);
        let xs: Vec<String> = x.iter().map(|c| format!("{c}")).collect();
        writeln!(w, "{},{},{}", xs.join(","), e.mesh.z[f / nx], v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracop::{GridFunction, TailModel};

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let v = GridFunction::centered(1, 21, 2.0, TailModel::ConstantPm1 { axis: 0 }, |x| (x[0] * 0.7).tanh()).unwrap();
        let e = super::super::extend(&v, 0.35, 1.0, 6).unwrap();
        let mut buf = vec![];
        write_binary(&e, &mut buf).unwrap();
        let back = read_binary(&buf[..]).unwrap();
        assert_eq!(back, e);
        buf[0] = b'X';
        assert!(read_binary(&buf[..]).is_err());
        let mut csv = vec![];
        write_csv(&e, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1 + e.values.len());
    }
}
