//! Binary container for partial factors and preconditioners.
//!
//! Little-endian throughout:
//!
//! ```text
//! "PCHL" | version: u32 | N: u64 | M: u64
//! pivots: N x u64 | schur diagonal: N x f64 | columns: M x (N x f64)
//! ```
//!
//! A preconditioner appends `"RDIA" | residual diagonal: N x f64`.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::pivot::PartialCholesky;
use crate::precond::LowRankTriangular;
use crate::scalar::Real;

pub const MAGIC: [u8; 4] = *b"PCHL";
pub const RESID_TAG: [u8; 4] = *b"RDIA";
pub const VERSION: u32 = 1;

pub fn write_factor<T: Real, W: Write>(pc: &PartialCholesky<T>, mut w: W) -> Result<()> {
    let (n, m) = (pc.dim(), pc.rank());
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(n as u64).to_le_bytes())?;
    w.write_all(&(m as u64).to_le_bytes())?;
    for &p in pc.pivots() {
        w.write_all(&(p as u64).to_le_bytes())?;
    }
    write_f64s(&mut w, pc.schur_diag())?;
    for c in 0..m {
        write_f64s(&mut w, pc.column(c))?;
    }
    Ok(())
}

pub fn read_factor<T: Real, R: Read>(mut r: R) -> Result<PartialCholesky<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = read_len(&mut r)?;
    let m = read_len(&mut r)?;
    if m > n {
        return Err(Error::Format(format!("rank {m} exceeds dimension {n}")));
    }
    let mut pivots = Vec::with_capacity(n);
    for _ in 0..n {
        pivots.push(read_len(&mut r)?);
    }
    let diag = read_f64s(&mut r, n)?;
    let cols = read_f64s(&mut r, m * n)?;
    PartialCholesky::from_parts(pivots, diag, cols, m)
}

pub fn write_preconditioner<T: Real, W: Write>(
    pc: &PartialCholesky<T>,
    pre: &LowRankTriangular<T>,
    mut w: W,
) -> Result<()> {
    if pre.dim() != pc.dim() || pre.rank() != pc.rank() || pre.pivots() != pc.pivots() {
        return Err(Error::Format("preconditioner was not built from this factor".into()));
    }
    write_factor(pc, &mut w)?;
    w.write_all(&RESID_TAG)?;
    write_f64s(&mut w, pre.resid_diag())
}

pub fn read_preconditioner<T: Real, R: Read>(mut r: R) -> Result<(PartialCholesky<T>, LowRankTriangular<T>)> {
    let pc = read_factor(&mut r)?;
    let mut tag = [0u8; 4];
    r.read_exact(&mut tag)?;
    if tag != RESID_TAG {
        return Err(Error::Format(format!("expected RDIA section, found {tag:?}")));
    }
    let resid = read_f64s(&mut r, pc.dim())?;
    let pre = LowRankTriangular::from_parts(&pc, resid)?;
    Ok((pc, pre))
}

fn write_f64s<T: Real, W: Write>(w: &mut W, xs: &[T]) -> Result<()> {
    let mut buf = Vec::with_capacity(8 * xs.len());
    for x in xs {
        buf.extend_from_slice(&x.as_f64().to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_f64s<T: Real, R: Read>(r: &mut R, count: usize) -> Result<Vec<T>> {
    let mut buf = vec![0u8; count.checked_mul(8).ok_or_else(|| Error::Format("length overflow".into()))?];
    r.read_exact(&mut buf)?;
    buf.chunks_exact(8)
        .map(|b| {
            let v = f64::from_le_bytes(b.try_into().unwrap());
            T::from_f64(v).ok_or_else(|| Error::Format(format!("value {v} not representable")))
        })
        .collect()
}

fn read_array<R: Read, const K: usize>(r: &mut R) -> Result<[u8; K]> {
    let mut b = [0u8; K];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn read_len<R: Read>(r: &mut R) -> Result<usize> {
    let v = u64::from_le_bytes(read_array(r)?);
    usize::try_from(v).map_err(|_| Error::Format(format!("length {v} does not fit in usize")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::DenseSymmetric;
    use crate::pivot::{decompose, Strategy, Target};

    fn factor() -> PartialCholesky<f64> {
        let a = DenseSymmetric::from_fn(7, |i, j| 1.0 / (1.0 + (i as f64 - j as f64).abs()) + if i == j { 0.2 } else { 0.0 });
        decompose(&a, &[0.0; 7], Strategy::PCov, Target::Rank(3)).unwrap()
    }

    #[test]
    fn header_layout() {
        let pc = factor();
        let mut buf = Vec::new();
        write_factor(&pc, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"PCHL");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 7);
        assert_eq!(u64::from_le_bytes(buf[16..24].try_into().unwrap()), 3);
        assert_eq!(buf.len(), 24 + 7 * 8 + 7 * 8 + 3 * 7 * 8);
    }

    #[test]
    fn rejects_corruption() {
        let pc = factor();
        let mut buf = Vec::new();
        write_factor(&pc, &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_factor::<f64, _>(&bad[..]).is_err());
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(read_factor::<f64, _>(&bad[..]).is_err());
        assert!(read_factor::<f64, _>(&buf[..buf.len() - 1]).is_err());
        // duplicate pivot
        let mut bad = buf.clone();
        let second: Vec<u8> = bad[32..40].to_vec();
        bad[24..32].copy_from_slice(&second);
        assert!(read_factor::<f64, _>(&bad[..]).is_err());
    }

    #[test]
    fn preconditioner_round_trip() {
        let pc = factor();
        let pre = LowRankTriangular::build(&pc);
        let mut buf = Vec::new();
        write_preconditioner(&pc, &pre, &mut buf).unwrap();
        let (pc2, pre2) = read_preconditioner::<f64, _>(&buf[..]).unwrap();
        assert_eq!(pc2.pivots(), pc.pivots());
        assert_eq!(pre2.resid_diag(), pre.resid_diag());
        let v: Vec<f64> = (0..7).map(|i| i as f64 - 3.0).collect();
        assert_eq!(pre2.apply_inverse(&v).unwrap(), pre.apply_inverse(&v).unwrap());
        assert!(read_preconditioner::<f64, _>(&buf[..buf.len() - 8 * 7 - 4]).is_err());
    }
}
