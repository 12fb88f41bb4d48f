//! Grid snapshots: a compact binary format and a CSV format.
//!
//! Binary layout (little endian): magic `FRACSNP1`, u32 dim, u64 shape per
//! axis, f64 spacing, f64 origin per axis, u32 tail length + UTF-8 tail
//! descriptor, u64 value count, f64 values. The tail descriptor is the same
//! one-line text used in CSV headers.

use super::grid::{GridFunction, Profile1d, TailModel};
use crate::error::{Error, Result};
use std::io::{BufRead, Read, Write};

pub const MAGIC: &[u8; 8] = b"FRACSNP1";

fn profile_text(p: &Profile1d) -> String {
    let vals: Vec<String> = p.values.iter().map(|v| format!("{v}")).collect();
    format!("{} {} {} {} {}", p.origin, p.spacing, p.left, p.right, vals.join(","))
}

fn parse_f(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| Error::Format(format!("bad number '{s}'")))
}

fn parse_profile(parts: &[&str]) -> Result<Profile1d> {
    if parts.len() != 5 {
        return Err(Error::Format("profile needs five fields".into()));
    }
    let values = parts[4].split(',').map(parse_f).collect::<Result<Vec<_>>>()?;
    Ok(Profile1d {
        origin: parse_f(parts[0])?,
        spacing: parse_f(parts[1])?,
        left: parse_f(parts[2])?,
        right: parse_f(parts[3])?,
        values,
    })
}

/// One-line text form of a tail model.
pub fn tail_to_text(t: &TailModel) -> String {
    match t {
        TailModel::Constant(c) => format!("constant {c}"),
        TailModel::ConstantPm1 { axis } => format!("pm1 {axis}"),
        TailModel::Periodic => "periodic".into(),
        TailModel::Blend { axis, under, over, transition } => format!(
            "blend {axis} | {} | {} | {}",
            profile_text(under),
            profile_text(over),
            profile_text(transition)
        ),
        TailModel::Ridge { direction, offset, profile } => {
            let d: Vec<String> = direction.iter().map(|v| format!("{v}")).collect();
            format!("ridge {} {offset} | {}", d.join(","), profile_text(profile))
        }
    }
}

pub fn tail_from_text(s: &str) -> Result<TailModel> {
    let s = s.trim();
    let head: Vec<&str> = s.split_whitespace().collect();
    let bad = || Error::Format(format!("unrecognized tail '{s}'"));
    match head.first().copied() {
        Some("constant") if head.len() == 2 => Ok(TailModel::Constant(parse_f(head[1])?)),
        Some("pm1") if head.len() == 2 => Ok(TailModel::ConstantPm1 {
            axis: head[1].parse().map_err(|_| bad())?,
        }),
        Some("periodic") => Ok(TailModel::Periodic),
        Some("blend") => {
            let sec: Vec<&str> = s.split('|').collect();
            if sec.len() != 4 {
                return Err(bad());
            }
            let axis = sec[0].split_whitespace().nth(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let p = |i: usize| parse_profile(&sec[i].split_whitespace().collect::<Vec<_>>());
            Ok(TailModel::Blend { axis, under: p(1)?, over: p(2)?, transition: p(3)? })
        }
        Some("ridge") => {
            let sec: Vec<&str> = s.split('|').collect();
            if sec.len() != 2 {
                return Err(bad());
            }
            let f: Vec<&str> = sec[0].split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad());
            }
            let direction = f[1].split(',').map(parse_f).collect::<Result<Vec<_>>>()?;
            Ok(TailModel::Ridge {
                direction,
                offset: parse_f(f[2])?,
                profile: parse_profile(&sec[1].split_whitespace().collect::<Vec<_>>())?,
            })
        }
        _ => Err(bad()),
    }
}

pub fn write_binary<W: Write>(u: &GridFunction, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(u.dim as u32).to_le_bytes())?;
    for &n in &u.shape {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    w.write_all(&u.spacing.to_le_bytes())?;
    for &o in &u.origin {
        w.write_all(&o.to_le_bytes())?;
    }
    let tail = tail_to_text(&u.tail);
    w.write_all(&(tail.len() as u32).to_le_bytes())?;
    w.write_all(tail.as_bytes())?;
    w.write_all(&(u.values.len() as u64).to_le_bytes())?;
    for &v in &u.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_arr<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|_| Error::Format("truncated snapshot".into()))?;
    Ok(b)
}

pub fn read_binary<R: Read>(mut r: R) -> Result<GridFunction> {
    if &read_arr::<8, _>(&mut r)? != MAGIC {
        return Err(Error::Format("bad snapshot magic".into()));
    }
    let dim = u32::from_le_bytes(read_arr(&mut r)?) as usize;
    if !(1..=3).contains(&dim) {
        return Err(Error::Format(format!("bad dimension {dim}")));
    }
    let shape = (0..dim)
        .map(|_| Ok(u64::from_le_bytes(read_arr(&mut r)?) as usize))
        .collect::<Result<Vec<_>>>()?;
    let spacing = f64::from_le_bytes(read_arr(&mut r)?);
    let origin = (0..dim)
        .map(|_| Ok(f64::from_le_bytes(read_arr(&mut r)?)))
        .collect::<Result<Vec<_>>>()?;
    let tl = u32::from_le_bytes(read_arr(&mut r)?) as usize;
    if tl > 1 << 26 {
        return Err(Error::Format("tail descriptor too long".into()));
    }
    let mut tb = vec![0u8; tl];
    r.read_exact(&mut tb)
        .map_err(|_| Error::Format("truncated snapshot".into()))?;
    let tail = tail_from_text(
        std::str::from_utf8(&tb).map_err(|_| Error::Format("tail is not UTF-8".into()))?,
    )?;
    let count = u64::from_le_bytes(read_arr(&mut r)?) as usize;
    if count != shape.iter().product::<usize>() {
        return Err(Error::Format("value count does not match shape".into()));
    }
    let values = (0..count)
        .map(|_| Ok(f64::from_le_bytes(read_arr(&mut r)?)))
        .collect::<Result<Vec<_>>>()?;
    GridFunction::new(shape, spacing, origin, values, tail).map_err(|e| Error::Format(e.to_string()))
}

/// CSV with `# key=value` header lines, then `x0,..,value` rows.
///
/// Floats use Rust's shortest round-trip formatting, so reading back is
/// bit-exact as well.
pub fn write_csv<W: Write>(u: &GridFunction, mut w: W) -> Result<()> {
    let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ");
    let shape: Vec<String> = u.shape.iter().map(|n| n.to_string()).collect();
    writeln!(w, "# shape={}", shape.join(" "))?;
    writeln!(w, "# spacing={}", u.spacing)?;
    writeln!(w, "# origin={}", join(&u.origin))?;
    writeln!(w, "# tail={}", tail_to_text(&u.tail))?;
    let cols: Vec<String> = (0..u.dim).map(|d| format!("x{d}")).collect();
    writeln!(w, "{},value", cols.join(","))?;
    for i in 0..u.len() {
        let x = u.node(i);
        let xs: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{},{}", xs.join(","), u.values[i])?;
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(r: R) -> Result<GridFunction> {
    let mut shape = None;
    let mut spacing = None;
    let mut origin = None;
    let mut tail = None;
    let mut values = vec![];
    let mut header_seen = false;
    for line in r.lines() {
        let line = line?;
        if let Some(meta) = line.strip_prefix("# ") {
            let (k, v) = meta
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad header '{line}'")))?;
            match k {
                "shape" => {
                    shape = Some(
                        v.split_whitespace()
                            .map(|t| t.parse::<usize>().map_err(|_| Error::Format("bad shape".into())))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                "spacing" => spacing = Some(parse_f(v)?),
                "origin" => origin = Some(v.split_whitespace().map(parse_f).collect::<Result<Vec<_>>>()?),
                "tail" => tail = Some(tail_from_text(v)?),
                _ => {}
            }
            continue;
        }
        if !header_seen {
            header_seen = true;
            continue;
        }
        let last = line
            .rsplit(',')
            .next()
            .ok_or_else(|| Error::Format("empty row".into()))?;
        values.push(parse_f(last)?);
    }
    let missing = |k: &str| Error::Format(format!("missing header {k}"));
    GridFunction::new(
        shape.ok_or_else(|| missing("shape"))?,
        spacing.ok_or_else(|| missing("spacing"))?,
        origin.ok_or_else(|| missing("origin"))?,
        values,
        tail.ok_or_else(|| missing("tail"))?,
    )
    .map_err(|e| Error::Format(e.to_string()))
}
