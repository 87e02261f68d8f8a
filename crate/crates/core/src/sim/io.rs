//! Trace file formats.
//!
//! Binary layout (little-endian):
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `TWB1`                  |
//! | 4      | 8    | sample rate, f64              |
//! | 12     | 8    | number of sample pairs, u64   |
//! | 20     | 8    | seed, u64                     |
//! | 28     | 16·n | interleaved (i_signal, i_idler) f64 pairs |

use std::io::{Read, Write};

use super::{ChunkPair, TraceRecord, SHOT_PSD_LEVEL};
use crate::error::{Error, Result};

pub const TRACE_MAGIC: [u8; 4] = *b"TWB1";
const HEADER_LEN: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceHeader {
    pub sample_rate_hz: f64,
    pub len: u64,
    pub seed: u64,
}

impl TraceHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[..4].copy_from_slice(&TRACE_MAGIC);
        b[4..12].copy_from_slice(&self.sample_rate_hz.to_le_bytes());
        b[12..20].copy_from_slice(&self.len.to_le_bytes());
        b[20..28].copy_from_slice(&self.seed.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; HEADER_LEN]) -> Result<Self> {
        if b[..4] != TRACE_MAGIC {
            return Err(Error::Format(format!("bad magic {:?}, expected TWB1", &b[..4])));
        }
        let f = |r: std::ops::Range<usize>| -> [u8; 8] { b[r].try_into().unwrap() };
        Ok(Self {
            sample_rate_hz: f64::from_le_bytes(f(4..12)),
            len: u64::from_le_bytes(f(12..20)),
            seed: u64::from_le_bytes(f(20..28)),
        })
    }
}

/// Streams sample pairs to a binary trace.
pub struct TraceWriter<W: Write> {
    inner: W,
    header: TraceHeader,
    written: u64,
    buf: Vec<u8>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut inner: W, header: TraceHeader) -> Result<Self> {
        inner.write_all(&header.to_bytes())?;
        Ok(Self {
            inner,
            header,
            written: 0,
            buf: Vec::new(),
        })
    }

    pub fn write_pairs(&mut self, signal: &[f64], idler: &[f64]) -> Result<()> {
        assert_eq!(signal.len(), idler.len());
        if self.written + signal.len() as u64 > self.header.len {
            return Err(Error::Format("more samples than declared in header".into()));
        }
        self.buf.clear();
        for (s, i) in signal.iter().zip(idler) {
            self.buf.extend_from_slice(&s.to_le_bytes());
            self.buf.extend_from_slice(&i.to_le_bytes());
        }
        self.inner.write_all(&self.buf)?;
        self.written += signal.len() as u64;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        if self.written != self.header.len {
            return Err(Error::Format(format!(
                "declared {} samples but wrote {}",
                self.header.len, self.written
            )));
        }
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Streams sample pairs from a binary trace.
pub struct TraceReader<R: Read> {
    inner: R,
    header: TraceHeader,
    read: u64,
    buf: Vec<u8>,
}

impl<R: Read> TraceReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut b = [0u8; HEADER_LEN];
        inner
            .read_exact(&mut b)
            .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
        Ok(Self {
            inner,
            header: TraceHeader::from_bytes(&b)?,
            read: 0,
            buf: Vec::new(),
        })
    }

    pub fn header(&self) -> TraceHeader {
        self.header
    }

    /// Reads up to `max` pairs; `None` at end of trace.
    pub fn read_pairs(&mut self, max: usize) -> Result<Option<ChunkPair>> {
        let remaining = self.header.len - self.read;
        if remaining == 0 {
            return Ok(None);
        }
        let n = (max as u64).min(remaining) as usize;
        self.buf.resize(16 * n, 0);
        self.inner
            .read_exact(&mut self.buf)
            .map_err(|e| Error::Format(format!("truncated trace body: {e}")))?;
        let mut out = ChunkPair {
            signal: Vec::with_capacity(n),
            idler: Vec::with_capacity(n),
        };
        for pair in self.buf.chunks_exact(16) {
            out.signal.push(f64::from_le_bytes(pair[..8].try_into().unwrap()));
            out.idler.push(f64::from_le_bytes(pair[8..].try_into().unwrap()));
        }
        self.read += n as u64;
        Ok(Some(out))
    }
}

impl TraceRecord {
    pub fn header(&self) -> TraceHeader {
        TraceHeader {
            sample_rate_hz: self.sample_rate_hz,
            len: self.len() as u64,
            seed: self.seed,
        }
    }

    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        let mut writer = TraceWriter::new(w, self.header())?;
        writer.write_pairs(&self.i_signal, &self.i_idler)?;
        writer.finish()?;
        Ok(())
    }

    /// Reads a binary trace. Beam powers are not stored in the file and must
    /// be supplied.
    pub fn read_binary<R: Read>(r: R, mean_power_mw: [f64; 2]) -> Result<Self> {
        let mut reader = TraceReader::new(r)?;
        let h = reader.header();
        let pairs = reader.read_pairs(h.len as usize)?.unwrap_or_default();
        Ok(Self {
            sample_rate_hz: h.sample_rate_hz,
            i_signal: pairs.signal,
            i_idler: pairs.idler,
            mean_power_mw,
            shot_psd_level: SHOT_PSD_LEVEL,
            seed: h.seed,
        })
    }

    /// `t_s,i_signal,i_idler` export, meant for short traces.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_s,i_signal,i_idler")?;
        for (n, (s, i)) in self.i_signal.iter().zip(&self.i_idler).enumerate() {
            writeln!(w, "{},{s},{i}", n as f64 / self.sample_rate_hz)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate_twin_traces, tests::small_config};

    #[test]
    fn binary_roundtrip_and_layout() {
        let mut cfg = small_config();
        cfg.sim.duration_s = Some(1e-4);
        let rec = simulate_twin_traces(&cfg, &cfg.sim).unwrap();
        let mut bytes = Vec::new();
        rec.write_binary(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"TWB1");
        assert_eq!(f64::from_le_bytes(bytes[4..12].try_into().unwrap()), 50e6);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 5000);
        assert_eq!(u64::from_le_bytes(bytes[20..28].try_into().unwrap()), 1);
        assert_eq!(bytes.len(), 28 + 16 * 5000);
        assert_eq!(f64::from_le_bytes(bytes[28..36].try_into().unwrap()), rec.i_signal[0]);
        assert_eq!(f64::from_le_bytes(bytes[36..44].try_into().unwrap()), rec.i_idler[0]);
        let back = TraceRecord::read_binary(&bytes[..], rec.mean_power_mw).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut bytes = TraceHeader { sample_rate_hz: 1.0, len: 2, seed: 0 }.to_bytes().to_vec();
        bytes.extend_from_slice(&[0u8; 16]);
        assert!(matches!(TraceRecord::read_binary(&bytes[..], [1.0, 1.0]), Err(Error::Format(_))));
        bytes[0] = b'X';
        assert!(matches!(TraceRecord::read_binary(&bytes[..], [1.0, 1.0]), Err(Error::Format(_))));
    }

    #[test]
    fn csv_export_has_header() {
        let rec = TraceRecord {
            sample_rate_hz: 2.0,
            i_signal: vec![1.0, 2.0],
            i_idler: vec![3.0, 4.0],
            mean_power_mw: [1.0, 1.0],
            shot_psd_level: 1.0,
            seed: 0,
        };
        let mut out = Vec::new();
        rec.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "t_s,i_signal,i_idler\n0,1,3\n0.5,2,4\n");
    }
}
