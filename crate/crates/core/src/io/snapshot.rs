//! `PLK1` binary snapshots of a configuration `(ψ, φ)`.
//!
//! Layout, all little endian: magic `PLK1`, version `u32`, `n u32`, `L f64`,
//! `α f64`, `m_e f64`, medium name (`u32` length + UTF-8 bytes), medium
//! parameters (`u32` count, then `u32` length + name bytes + `f64` value each),
//! then `Re ψ`, `Im ψ` on the position lattice and `Re φ`, `Im φ` on the
//! frequency lattice, each `n³` `f64` in row-major order.

use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::medium::Medium;
use crate::model::Model;
use crate::spectral::{Grid, ScalarFieldK, ScalarFieldX};
use crate::state::PolaronState;

pub const MAGIC: &[u8; 4] = b"PLK1";
pub const VERSION: u32 = 1;

/// A loaded snapshot with the model it was taken in.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub model: Model,
    pub state: PolaronState,
}

fn put_u32(out: &mut Vec<u8>, x: u32) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_f64(out: &mut Vec<u8>, x: f64) {
    out.extend_from_slice(&x.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

/// Serializes `state` taken in `model`.
pub fn to_bytes(model: &Model, state: &PolaronState) -> Result<Vec<u8>> {
    let med = model.medium();
    if !med.is_builtin() {
        return Err(Error::Snapshot(format!("custom medium `{}` cannot be stored", med.name())));
    }
    if state.grid() != model.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = model.grid();
    let size = grid.size();
    let mut out = Vec::with_capacity(64 + 32 * size);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, grid.n() as u32);
    put_f64(&mut out, grid.length());
    put_f64(&mut out, model.alpha());
    put_f64(&mut out, med.m_e());
    put_str(&mut out, med.name());
    put_u32(&mut out, med.params().len() as u32);
    for (name, value) in med.params() {
        put_str(&mut out, name);
        put_f64(&mut out, *value);
    }
    for part in [state.psi.values(), state.phi.values()] {
        for z in part {
            put_f64(&mut out, z.re);
        }
        for z in part {
            put_f64(&mut out, z.im);
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.at.checked_add(k).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Snapshot(format!("truncated while reading {what}")));
        };
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        String::from_utf8(self.take(len, what)?.to_vec()).map_err(|_| Error::Snapshot(format!("{what} is not UTF-8")))
    }
}

/// Parses a snapshot, validating the header against the payload length.
pub fn from_bytes(bytes: &[u8]) -> Result<Snapshot> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Snapshot("bad magic, not a PLK1 snapshot".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let n = r.u32("lattice size")? as usize;
    let length = r.f64("box length")?;
    let alpha = r.f64("alpha")?;
    let m_e = r.f64("electron mass")?;
    let name = r.string("medium name")?;
    let count = r.u32("parameter count")? as usize;
    let mut params = Vec::with_capacity(count.min(16));
    for _ in 0..count {
        let key = r.string("parameter name")?;
        params.push((key, r.f64("parameter value")?));
    }
    let size = n.checked_pow(3).ok_or_else(|| Error::Snapshot(format!("lattice size {n} overflows")))?;
    let expected = size.checked_mul(32).and_then(|p| p.checked_add(r.at));
    if expected != Some(bytes.len()) {
        return Err(Error::Snapshot(format!(
            "payload holds {} bytes after the header, expected {} for n = {n}",
            bytes.len() - r.at,
            size.saturating_mul(32)
        )));
    }
    let mut read_part = |what: &str| -> Result<Vec<Complex64>> {
        let re: Vec<f64> = (0..size).map(|_| r.f64(what)).collect::<Result<_>>()?;
        let im: Vec<f64> = (0..size).map(|_| r.f64(what)).collect::<Result<_>>()?;
        Ok(re.into_iter().zip(im).map(|(a, b)| Complex64::new(a, b)).collect())
    };
    let psi = read_part("psi")?;
    let phi = read_part("phi")?;
    let grid = Grid::new(n, length)?;
    let borrowed: Vec<(&str, f64)> = params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let medium = Medium::from_name(&name, &borrowed, m_e)?;
    let model = Model::new(grid.clone(), medium, alpha)?;
    let state = PolaronState::new(ScalarFieldX::from_values(&grid, psi)?, ScalarFieldK::from_values(&grid, phi)?)?;
    Ok(Snapshot { model, state })
}

pub fn save_snapshot(path: &Path, model: &Model, state: &PolaronState) -> Result<()> {
    std::fs::write(path, to_bytes(model, state)?)?;
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<Snapshot> {
    from_bytes(&std::fs::read(path)?)
}

/// Loads a snapshot that must live on `grid`; no resampling is attempted.
pub fn load_snapshot_on(path: &Path, grid: &Grid) -> Result<Snapshot> {
    let snap = load_snapshot(path)?;
    if snap.model.grid() != grid {
        return Err(Error::Snapshot(format!(
            "snapshot lattice n = {}, L = {} differs from the requested n = {}, L = {}",
            snap.model.grid().n(),
            snap.model.grid().length(),
            grid.n(),
            grid.length()
        )));
    }
    Ok(snap)
}
