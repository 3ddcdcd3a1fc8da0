//! Basis files and eigenvalue tables.
//!
//! Layout (little endian): magic `VROMB001`, mesh checksum, velocity size,
//! pressure size, velocity, supremizer and pressure mode counts, the lengths of
//! the three eigenvalue lists as `u64`, then the eigenvalues (velocity,
//! supremizer, pressure), `Z^u` and `Z^p` column by column as `f64`. The lifting is
//! the first column of `Z^u`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use super::ReducedBasis;
use crate::fom::{read_file, write_file, FileError, LeReader, LeWriter};

pub const BASIS_MAGIC: &[u8; 8] = b"VROMB001";

impl ReducedBasis {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = LeWriter(Vec::new());
        w.0.extend_from_slice(BASIS_MAGIC);
        let header = [
            self.mesh_checksum,
            self.zu.nrows() as u64,
            self.zp.nrows() as u64,
            self.n_velocity as u64,
            self.n_supremizer as u64,
            self.zp.ncols() as u64,
            self.lambda_u.len() as u64,
            self.lambda_s.len() as u64,
            self.lambda_p.len() as u64,
        ];
        // Writes into a Vec cannot fail.
        for h in header {
            w.u64(h).unwrap();
        }
        for l in [&self.lambda_u, &self.lambda_s, &self.lambda_p] {
            w.f64s(l).unwrap();
        }
        w.f64s(self.zu.as_slice()).unwrap();
        w.f64s(self.zp.as_slice()).unwrap();
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        let mut r = LeReader::new(bytes);
        if r.bytes(8)? != BASIS_MAGIC {
            return Err("not a basis file (bad magic)".into());
        }
        let mesh_checksum = r.u64()?;
        let nv = r.usize()?;
        let np = r.usize()?;
        let n_velocity = r.usize()?;
        let n_supremizer = r.usize()?;
        let n_pressure = r.usize()?;
        let (lu, ls, lp) = (r.usize()?, r.usize()?, r.usize()?);
        let lambda_u = r.f64s(lu)?;
        let lambda_s = r.f64s(ls)?;
        let lambda_p = r.f64s(lp)?;
        let cols = 1 + n_velocity + n_supremizer;
        let zu = DMatrix::from_vec(
            nv,
            cols,
            r.f64s(nv.checked_mul(cols).ok_or("size overflow")?)?,
        );
        let zp = DMatrix::from_vec(
            np,
            n_pressure,
            r.f64s(np.checked_mul(n_pressure).ok_or("size overflow")?)?,
        );
        r.finish()?;
        Ok(ReducedBasis {
            mesh_checksum,
            lifting: zu.column(0).into_owned(),
            zu,
            zp,
            n_velocity,
            n_supremizer,
            lambda_u,
            lambda_s,
            lambda_p,
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

/// `index,lambda_u,lambda_s,lambda_p`, one row per eigenvalue (1-based), empty
/// fields where a list is shorter.
pub fn eigen_csv(basis: &ReducedBasis) -> String {
    let lists = [&basis.lambda_u, &basis.lambda_s, &basis.lambda_p];
    let rows = lists.iter().map(|l| l.len()).max().unwrap_or(0);
    let mut out = String::from("index,lambda_u,lambda_s,lambda_p\n");
    for i in 0..rows {
        write!(out, "{}", i + 1).unwrap();
        for l in lists {
            match l.get(i) {
                Some(v) => write!(out, ",{v:e}").unwrap(),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}
