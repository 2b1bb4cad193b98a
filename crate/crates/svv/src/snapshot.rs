//! Binary field snapshots.
//!
//! One file holds one spectral field and its simulation time. The layout
//! is fixed little-endian: a header {magic "SVMF", version u32, dim u32,
//! cutoff u32, time f64}, then for every lattice mode in lexicographic
//! wavevector order the coefficients of each component as IEEE-754 f64
//! pairs (real, imaginary). The component count is not stored; it is
//! recovered from the payload length, which must divide evenly, so a
//! truncated file is always detected. Round trips are bit-exact: the f64
//! bytes written are the f64 bytes read back, including signed zeros and
//! subnormals.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::lattice::FourierLattice;

const MAGIC: [u8; 4] = *b"SVMF";
const VERSION: u32 = 1;

/// Writes `field` at simulation time `time`.
pub fn write_snapshot(path: &Path, field: &SpectralField, time: f64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(field.lattice().dim() as u32).to_le_bytes())?;
    w.write_all(&(field.lattice().cutoff() as u32).to_le_bytes())?;
    w.write_all(&time.to_le_bytes())?;
    for z in field.coeffs() {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::data(format!("snapshot truncated inside {what}")))?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read, what: &str) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| Error::data(format!("snapshot truncated inside {what}")))?;
    Ok(f64::from_le_bytes(b))
}

/// Reads a field and its simulation time. The lattice is rebuilt with the
/// default quadrature grid for its dimension and cutoff.
pub fn read_snapshot(path: &Path) -> Result<(SpectralField, f64)> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::data("snapshot truncated inside the magic bytes"))?;
    if magic != MAGIC {
        return Err(Error::data(format!(
            "not a field snapshot: magic {:?} (expected {:?})",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(&MAGIC)
        )));
    }
    let version = read_u32(&mut r, "the version word")?;
    if version != VERSION {
        return Err(Error::data(format!(
            "snapshot format version {version} is not readable by this build (expected {VERSION})"
        )));
    }
    let dim = read_u32(&mut r, "the header")? as usize;
    let cutoff = read_u32(&mut r, "the header")? as usize;
    let time = read_f64(&mut r, "the header")?;

    let lattice = FourierLattice::new(dim, cutoff)?;
    let num_modes = lattice.num_modes();

    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let mode_bytes = num_modes * 16;
    if payload.is_empty() || payload.len() % mode_bytes != 0 {
        return Err(Error::data(format!(
            "snapshot payload of {} bytes is not a whole number of components ({} modes, {} bytes each)",
            payload.len(),
            num_modes,
            mode_bytes
        )));
    }
    let ncomp = payload.len() / mode_bytes;

    let mut field = SpectralField::zeros(&lattice, ncomp);
    for (i, chunk) in payload.chunks_exact(16).enumerate() {
        let re = f64::from_le_bytes(chunk[..8].try_into().unwrap());
        let im = f64::from_le_bytes(chunk[8..].try_into().unwrap());
        let (mode, comp) = (i / ncomp, i % ncomp);
        field.at_mut(mode)[comp] = Complex64::new(re, im);
    }
    Ok((field, time))
}
