//! Little-endian message layout: a 24-byte header followed by packed
//! fixed-size particle records.

use alloc::format;
use alloc::vec::Vec;

use crate::comm::plan::Phase;
use crate::{Error, Result};

pub const HEADER_BYTES: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    pub src: u32,
    pub dest: u32,
    pub cell_id: u64,
    pub kind: u32,
    pub count: u32,
}

impl Header {
    pub fn phase(&self) -> Result<Phase> {
        Phase::from_u32(self.kind).ok_or_else(|| Error::Wire(format!("unknown payload kind {}", self.kind)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PositionRecord {
    pub id: u64,
    pub pos: [f64; 3],
    pub v_pred: [f64; 3],
    pub mass: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityRecord {
    pub h: f64,
    pub rho: f64,
    pub u_pred: f64,
    pub bin: u32,
    pub flags: u32,
}

fn put_header(buf: &mut Vec<u8>, h: &Header) {
    buf.extend_from_slice(&h.src.to_le_bytes());
    buf.extend_from_slice(&h.dest.to_le_bytes());
    buf.extend_from_slice(&h.cell_id.to_le_bytes());
    buf.extend_from_slice(&h.kind.to_le_bytes());
    buf.extend_from_slice(&h.count.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.at + N;
        let s = self.buf.get(self.at..end).ok_or_else(|| Error::Wire(format!("truncated at byte {}", self.at)))?;
        self.at = end;
        Ok(s.try_into().unwrap())
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn decode_header(buf: &[u8]) -> Result<Header> {
    let mut r = Reader { buf, at: 0 };
    Ok(Header { src: r.u32()?, dest: r.u32()?, cell_id: r.u64()?, kind: r.u32()?, count: r.u32()? })
}

pub fn encode_positions(src: u32, dest: u32, cell_id: u64, recs: &[PositionRecord]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_BYTES + 64 * recs.len());
    let h = Header { src, dest, cell_id, kind: Phase::Positions as u32, count: recs.len() as u32 };
    put_header(&mut buf, &h);
    for r in recs {
        buf.extend_from_slice(&r.id.to_le_bytes());
        for v in r.pos.iter().chain(&r.v_pred) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&r.mass.to_le_bytes());
    }
    buf
}

pub fn encode_density(src: u32, dest: u32, cell_id: u64, recs: &[DensityRecord]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_BYTES + 32 * recs.len());
    let h = Header { src, dest, cell_id, kind: Phase::Density as u32, count: recs.len() as u32 };
    put_header(&mut buf, &h);
    for r in recs {
        for v in [r.h, r.rho, r.u_pred] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&r.bin.to_le_bytes());
        buf.extend_from_slice(&r.flags.to_le_bytes());
    }
    buf
}

fn check_len(buf: &[u8], h: &Header, per: usize) -> Result<()> {
    let want = HEADER_BYTES + per * h.count as usize;
    if buf.len() != want {
        return Err(Error::Wire(format!("message of {} bytes, header implies {want}", buf.len())));
    }
    Ok(())
}

pub fn decode_positions(buf: &[u8]) -> Result<(Header, Vec<PositionRecord>)> {
    let h = decode_header(buf)?;
    if h.phase()? != Phase::Positions {
        return Err(Error::Wire("expected a position payload".into()));
    }
    check_len(buf, &h, 64)?;
    let mut r = Reader { buf, at: HEADER_BYTES };
    let mut out = Vec::with_capacity(h.count as usize);
    for _ in 0..h.count {
        let id = r.u64()?;
        let pos = [r.f64()?, r.f64()?, r.f64()?];
        let v_pred = [r.f64()?, r.f64()?, r.f64()?];
        out.push(PositionRecord { id, pos, v_pred, mass: r.f64()? });
    }
    Ok((h, out))
}

pub fn decode_density(buf: &[u8]) -> Result<(Header, Vec<DensityRecord>)> {
    let h = decode_header(buf)?;
    if h.phase()? != Phase::Density {
        return Err(Error::Wire("expected a density payload".into()));
    }
    check_len(buf, &h, 32)?;
    let mut r = Reader { buf, at: HEADER_BYTES };
    let mut out = Vec::with_capacity(h.count as usize);
    for _ in 0..h.count {
        out.push(DensityRecord { h: r.f64()?, rho: r.f64()?, u_pred: r.f64()?, bin: r.u32()?, flags: r.u32()? });
    }
    Ok((h, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn position_round_trip_and_size() {
        let recs = vec![
            PositionRecord { id: 7, pos: [0.1, 0.2, 0.3], v_pred: [-1.0, 2.0, 1e-300], mass: 3.5 },
            PositionRecord { id: u64::MAX, pos: [1.0; 3], v_pred: [0.0; 3], mass: f64::MIN_POSITIVE },
        ];
        let buf = encode_positions(1, 2, 99, &recs);
        assert_eq!(buf.len(), HEADER_BYTES + 2 * Phase::Positions.record_bytes());
        let (h, back) = decode_positions(&buf).unwrap();
        assert_eq!(h, Header { src: 1, dest: 2, cell_id: 99, kind: 0, count: 2 });
        assert_eq!(back, recs);
        // header fields sit little-endian at fixed offsets
        assert_eq!(&buf[0..4], &[1, 0, 0, 0]);
        assert_eq!(&buf[8..16], &99u64.to_le_bytes());
    }

    #[test]
    fn density_round_trip_and_size() {
        let recs = vec![DensityRecord { h: 0.01, rho: 2.0, u_pred: 1.5, bin: 12, flags: 3 }];
        let buf = encode_density(3, 0, 5, &recs);
        assert_eq!(buf.len(), HEADER_BYTES + Phase::Density.record_bytes());
        assert_eq!(decode_density(&buf).unwrap().1, recs);
    }

    #[test]
    fn malformed_messages_are_rejected() {
        let buf = encode_density(3, 0, 5, &[DensityRecord { h: 1.0, rho: 1.0, u_pred: 1.0, bin: 0, flags: 0 }]);
        assert!(decode_density(&buf[..buf.len() - 1]).is_err());
        assert!(decode_positions(&buf).is_err());
        assert!(decode_header(&buf[..10]).is_err());
    }
}
