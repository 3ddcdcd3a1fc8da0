//! Reduced trajectory files and error tables.
//!
//! Trajectory layout (little endian): magic `VROMR001`, mesh checksum, number of
//! velocity coefficients (lifting included), number of pressure coefficients and
//! sample count as `u64`, then per sample `t`, the velocity and the pressure
//! coefficients as `f64`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;

use super::{MetricsReport, RomState};
use crate::fom::{read_file, write_file, FileError, LeReader, LeWriter};

pub const TRAJECTORY_MAGIC: &[u8; 8] = b"VROMR001";

#[derive(Debug, Clone, PartialEq)]
pub struct RomTrajectory {
    pub mesh_checksum: u64,
    pub states: Vec<RomState>,
}

impl RomTrajectory {
    pub fn to_bytes(&self) -> Vec<u8> {
        let (nc, nq) = self
            .states
            .first()
            .map_or((0, 0), |s| (s.c.len(), s.q.len()));
        let mut w = LeWriter(Vec::new());
        w.0.extend_from_slice(TRAJECTORY_MAGIC);
        // Writes into a Vec cannot fail.
        for h in [
            self.mesh_checksum,
            nc as u64,
            nq as u64,
            self.states.len() as u64,
        ] {
            w.u64(h).unwrap();
        }
        for s in &self.states {
            w.f64(s.t).unwrap();
            w.f64s(s.c.as_slice()).unwrap();
            w.f64s(s.q.as_slice()).unwrap();
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        let mut r = LeReader::new(bytes);
        if r.bytes(8)? != TRAJECTORY_MAGIC {
            return Err("not a reduced trajectory file (bad magic)".into());
        }
        let mesh_checksum = r.u64()?;
        let (nc, nq, count) = (r.usize()?, r.usize()?, r.usize()?);
        let mut states = Vec::new();
        for _ in 0..count {
            let t = r.f64()?;
            let c = DVector::from_vec(r.f64s(nc)?);
            let q = DVector::from_vec(r.f64s(nq)?);
            states.push(RomState { c, q, t });
        }
        r.finish()?;
        Ok(RomTrajectory {
            mesh_checksum,
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

/// `variant,t,err_u_H1,err_p_L2,err_K,err_E`, one row per sample and series.
pub fn errors_vs_time_csv(series: &[(&str, &MetricsReport)]) -> String {
    let mut out = String::from("variant,t,err_u_H1,err_p_L2,err_K,err_E\n");
    for (label, report) in series {
        for s in &report.samples {
            writeln!(
                out,
                "{label},{:e},{:e},{:e},{:e},{:e}",
                s.t, s.err_u, s.err_p, s.err_k, s.err_e
            )
            .unwrap();
        }
    }
    out
}

/// `N,variant,err_u,err_p` with the time-integrated errors.
pub fn errors_vs_n_csv(rows: &[(usize, &str, &MetricsReport)]) -> String {
    let mut out = String::from("N,variant,err_u,err_p\n");
    for (n, label, report) in rows {
        writeln!(out, "{n},{label},{:e},{:e}", report.err_u, report.err_p).unwrap();
    }
    out
}
