//! Binary snapshot files.
//!
//! Layout (little endian): magic `VROM0001`, mesh checksum `u64`, velocity size,
//! pressure size and snapshot count as `u64`, sampling interval `f64`, then for
//! every snapshot `t`, the velocity and the pressure coefficients as `f64`.

use std::io::{self, Read, Write};
use std::path::Path;

use nalgebra::DVector;

use super::{FomState, SnapshotSet};

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"VROM0001";

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
}

/// Little-endian writer helpers shared by the binary formats.
pub struct LeWriter<W: Write>(pub W);

impl<W: Write> LeWriter<W> {
    pub fn u64(&mut self, v: u64) -> io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    pub fn f64(&mut self, v: f64) -> io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    pub fn f64s(&mut self, v: &[f64]) -> io::Result<()> {
        let mut buf = Vec::with_capacity(8 * v.len());
        for x in v {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        self.0.write_all(&buf)
    }
}

/// Little-endian reader over an in-memory buffer.
pub struct LeReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> LeReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        LeReader { buf, pos: 0 }
    }
    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8], String> {
        if self.buf.len() - self.pos < n {
            return Err(format!("truncated file at byte {}", self.pos));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    pub fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    pub fn usize(&mut self) -> Result<usize, String> {
        usize::try_from(self.u64()?).map_err(|e| e.to_string())
    }
    pub fn f64(&mut self) -> Result<f64, String> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>, String> {
        let b = self.bytes(n.checked_mul(8).ok_or("length overflow")?)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    pub fn finish(&self) -> Result<(), String> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(format!("{} trailing bytes", self.buf.len() - self.pos))
        }
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, FileError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|source| FileError::Io {
            path: path.display().to_string(),
            source,
        })?;
    Ok(buf)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), FileError> {
    std::fs::write(path, bytes).map_err(|source| FileError::Io {
        path: path.display().to_string(),
        source,
    })
}

impl SnapshotSet {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = LeWriter(Vec::new());
        w.0.extend_from_slice(SNAPSHOT_MAGIC);
        let nv = self.states.first().map_or(0, |s| s.u.len());
        let np = self.states.first().map_or(0, |s| s.p.len());
        // Writes into a Vec cannot fail.
        w.u64(self.mesh_checksum).unwrap();
        w.u64(nv as u64).unwrap();
        w.u64(np as u64).unwrap();
        w.u64(self.states.len() as u64).unwrap();
        w.f64(self.sample_interval).unwrap();
        for s in &self.states {
            w.f64(s.t).unwrap();
            w.f64s(s.u.as_slice()).unwrap();
            w.f64s(s.p.as_slice()).unwrap();
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        let mut r = LeReader::new(bytes);
        if r.bytes(8)? != SNAPSHOT_MAGIC {
            return Err("not a snapshot file (bad magic)".into());
        }
        let mesh_checksum = r.u64()?;
        let nv = r.usize()?;
        let np = r.usize()?;
        let count = r.usize()?;
        let sample_interval = r.f64()?;
        let mut states = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let t = r.f64()?;
            let u = DVector::from_vec(r.f64s(nv)?);
            let p = DVector::from_vec(r.f64s(np)?);
            states.push(FomState { u, p, t });
        }
        r.finish()?;
        Ok(SnapshotSet {
            mesh_checksum,
            sample_interval,
            states,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), FileError> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, FileError> {
        let bytes = read_file(path)?;
        Self::from_bytes(&bytes).map_err(|reason| FileError::Format {
            path: path.display().to_string(),
            reason,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SnapshotSet {
        SnapshotSet {
            mesh_checksum: 0xdead_beef_1234,
            sample_interval: 0.004,
            states: (1..=3)
                .map(|k| FomState {
                    u: DVector::from_fn(6, |i, _| (i * k) as f64 * 0.5),
                    p: DVector::from_fn(2, |i, _| -(i as f64) - k as f64),
                    t: 0.004 * k as f64,
                })
                .collect(),
        }
    }

    #[test]
    fn round_trip() {
        let s = sample();
        let bytes = s.to_bytes();
        assert_eq!(&bytes[..8], SNAPSHOT_MAGIC);
        assert_eq!(bytes.len(), 8 + 8 * 5 + 3 * 8 * (1 + 6 + 2));
        let back = SnapshotSet::from_bytes(&bytes).unwrap();
        assert_eq!(back.mesh_checksum, s.mesh_checksum);
        assert_eq!(back.sample_interval, s.sample_interval);
        assert_eq!(back.states.len(), 3);
        for (a, b) in back.states.iter().zip(&s.states) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.u, b.u);
            assert_eq!(a.p, b.p);
        }
    }

    #[test]
    fn rejects_corrupt_files() {
        let bytes = sample().to_bytes();
        assert!(SnapshotSet::from_bytes(&bytes[..bytes.len() - 3])
            .unwrap_err()
            .contains("truncated"));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(SnapshotSet::from_bytes(&bad).unwrap_err().contains("magic"));
        let mut long = bytes;
        long.push(0);
        assert!(SnapshotSet::from_bytes(&long)
            .unwrap_err()
            .contains("trailing"));
    }
}
