//! Binary checkpoints of variational parameters.
//!
//! Layout, all integers `u32` and floats `f64`, little-endian:
//!
//! ```text
//! "IGFT" | version | n_v | pattern id | cx | cy | sites
//! per site: n_in | outgoing-leg mask (bit 0 l, 1 d, 2 r, 3 u)
//! per site: Q (n_in × n_in), row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::iso::{site_layouts, ArrowPattern, IsoParams, LegSet};
use crate::linalg::RMat;
use crate::models::CellShape;

pub const MAGIC: &[u8; 4] = b"IGFT";
pub const VERSION: u32 = 1;

fn put(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub fn write_checkpoint(w: &mut impl Write, params: &IsoParams) -> Result<()> {
    let layouts = params.layouts()?;
    w.write_all(MAGIC)?;
    put(w, VERSION)?;
    put(w, params.n_v as u32)?;
    put(w, params.pattern.id())?;
    put(w, params.cell.cx as u32)?;
    put(w, params.cell.cy as u32)?;
    put(w, layouts.len() as u32)?;
    for layout in &layouts {
        put(w, layout.n_in as u32)?;
        put(w, layout.outgoing.bits() as u32)?;
    }
    for q in &params.q {
        for i in 0..q.nrows() {
            for j in 0..q.ncols() {
                w.write_all(&q[(i, j)].to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<IsoParams> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = get(r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n_v = get(r)? as usize;
    let pattern_id = get(r)?;
    let cell = CellShape::new(get(r)? as usize, get(r)? as usize)?;
    let sites = get(r)? as usize;
    if sites != cell.sites() {
        return Err(Error::Checkpoint(format!("{sites} sites recorded for a {cell} cell")));
    }
    let mut n_in = Vec::with_capacity(sites);
    let mut masks = Vec::with_capacity(sites);
    for _ in 0..sites {
        n_in.push(get(r)? as usize);
        let bits = get(r)?;
        let mask = u8::try_from(bits)
            .ok()
            .and_then(LegSet::from_bits)
            .ok_or_else(|| Error::Checkpoint(format!("invalid leg mask {bits}")))?;
        masks.push(mask);
    }
    let pattern = match pattern_id {
        0 => ArrowPattern::Unconstrained,
        1 => ArrowPattern::Uniform,
        2 => ArrowPattern::Alternating,
        3 => ArrowPattern::Custom(masks.clone()),
        other => return Err(Error::Checkpoint(format!("unknown pattern id {other}"))),
    };
    let layouts = site_layouts(&pattern, n_v, cell)?;
    for (s, layout) in layouts.iter().enumerate() {
        if layout.outgoing != masks[s] || layout.n_in != n_in[s] {
            return Err(Error::Checkpoint(format!("site {s} header disagrees with the {} pattern", pattern.name())));
        }
    }
    let mut q = Vec::with_capacity(sites);
    let mut buf = [0u8; 8];
    for &n in &n_in {
        let mut m = RMat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                r.read_exact(&mut buf)?;
                m[(i, j)] = f64::from_le_bytes(buf);
            }
        }
        q.push(m);
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    IsoParams::new(pattern, n_v, cell, q)
}

pub fn save(path: impl AsRef<Path>, params: &IsoParams) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, params)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<IsoParams> {
    let bytes = std::fs::read(path)?;
    read_checkpoint(&mut bytes.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::Leg;
    use crate::iso::random_init;

    #[test]
    fn round_trip_all_patterns() {
        let custom = ArrowPattern::Custom(vec![
            LegSet::from_legs(&[Leg::R]),
            LegSet::from_legs(&[Leg::U, Leg::L]),
        ]);
        for pattern in [ArrowPattern::Unconstrained, ArrowPattern::Uniform, ArrowPattern::Alternating, custom] {
            let params = random_init(&pattern, 2, CellShape::COLUMN_PAIR, 4).unwrap();
            let mut buf = Vec::new();
            write_checkpoint(&mut buf, &params).unwrap();
            assert_eq!(&buf[..4], MAGIC);
            let back = read_checkpoint(&mut buf.as_slice()).unwrap();
            assert_eq!(back, params);
        }
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let params = random_init(&ArrowPattern::Uniform, 1, CellShape::SINGLE, 4).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &params).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&mut bad.as_slice()).is_err());
        let truncated = &buf[..buf.len() - 3];
        assert!(read_checkpoint(&mut &truncated[..]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_checkpoint(&mut extra.as_slice()).is_err());
        // pattern id says alternating but the cell is 1x1
        let mut wrong = buf.clone();
        wrong[12..16].copy_from_slice(&2u32.to_le_bytes());
        assert!(read_checkpoint(&mut wrong.as_slice()).is_err());
    }
}
