//! Mid-run persistence with bit-exact resume.
//!
//! A checkpoint captures everything a resumed run needs to reproduce the
//! uninterrupted trajectory down to the last bit: the solver state, the
//! energy-balance accumulators, the ledger rows recorded so far, and the
//! SHA-256 hash of the canonical configuration. Nothing about the random
//! stream is stored, because Brownian increments are a pure function of
//! (seed, mode, step); the step index itself is the cursor.
//!
//! Resuming under a different configuration is refused outright: the hash
//! comparison is exact, so even a changed dt or seed invalidates the file.
//! Layout (little-endian): magic "SVCK", version u32, hash 32 bytes,
//! step u64, time f64, three accumulator f64s, ledger row count u64 and
//! rows of six f64s, then the state field as dim u32, cutoff u32,
//! ncomp u32 and (real, imaginary) f64 pairs per mode and component.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rustfft::num_complex::Complex64;

use crate::diagnostics::EnergyLedger;
use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::lattice::FourierLattice;
use crate::scheme::{Accumulators, SchemeConfig, SolverState};

const MAGIC: [u8; 4] = *b"SVCK";
const VERSION: u32 = 1;

/// A resumable cut of one trajectory.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    /// SHA-256 of the canonical configuration that produced the run.
    pub config_hash: [u8; 32],
    pub state: SolverState,
    pub accum: Accumulators,
    /// Every ledger row recorded up to and including the cut.
    pub ledger: EnergyLedger,
}

/// What a resume attempt should do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResumePlan {
    /// The checkpointed run already reached its horizon; resuming is a
    /// no-op.
    Completed,
    /// Continue stepping from the stored state.
    Continue,
}

/// Decides whether `ckpt` may resume under the configuration with hash
/// `config_hash`. A hash mismatch is refused: a resumed trajectory under
/// any altered parameter would silently disagree with both runs.
pub fn resume_plan(
    ckpt: &Checkpoint,
    config_hash: &[u8; 32],
    cfg: &SchemeConfig,
) -> Result<ResumePlan> {
    if &ckpt.config_hash != config_hash {
        return Err(Error::config(
            "checkpoint was written by a different configuration; refusing to resume",
        ));
    }
    if ckpt.state.step_index as usize >= cfg.num_steps() {
        Ok(ResumePlan::Completed)
    } else {
        Ok(ResumePlan::Continue)
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&ckpt.config_hash)?;
    w.write_all(&ckpt.state.step_index.to_le_bytes())?;
    w.write_all(&ckpt.state.time.to_le_bytes())?;
    w.write_all(&ckpt.accum.viscous_cum.to_le_bytes())?;
    w.write_all(&ckpt.accum.ito_cum.to_le_bytes())?;
    w.write_all(&ckpt.accum.martingale_cum.to_le_bytes())?;
    let rows = ckpt.ledger.rows();
    w.write_all(&(rows.len() as u64).to_le_bytes())?;
    for r in rows {
        for v in [r.t, r.energy, r.viscous_cum, r.ito_cum, r.martingale_cum, r.residual] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    let u = &ckpt.state.u;
    w.write_all(&(u.lattice().dim() as u32).to_le_bytes())?;
    w.write_all(&(u.lattice().cutoff() as u32).to_le_bytes())?;
    w.write_all(&(u.ncomp() as u32).to_le_bytes())?;
    for z in u.coeffs() {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| Error::data(format!("checkpoint truncated inside {what}")))?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let mut b = [0u8; 8];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| Error::data(format!("checkpoint truncated inside {what}")))?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let mut b = [0u8; 8];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| Error::data(format!("checkpoint truncated inside {what}")))?;
        Ok(f64::from_le_bytes(b))
    }
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut r = Reader {
        inner: BufReader::new(File::open(path)?),
    };

    let mut magic = [0u8; 4];
    r.inner
        .read_exact(&mut magic)
        .map_err(|_| Error::data("checkpoint truncated inside the magic bytes"))?;
    if magic != MAGIC {
        return Err(Error::data(format!(
            "not a checkpoint: magic {:?} (expected {:?})",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(&MAGIC)
        )));
    }
    let version = r.u32("the version word")?;
    if version != VERSION {
        return Err(Error::data(format!(
            "checkpoint format version {version} is not readable by this build (expected {VERSION})"
        )));
    }
    let mut config_hash = [0u8; 32];
    r.inner
        .read_exact(&mut config_hash)
        .map_err(|_| Error::data("checkpoint truncated inside the configuration hash"))?;

    let step_index = r.u64("the step index")?;
    let time = r.f64("the time")?;
    let accum = Accumulators {
        viscous_cum: r.f64("the accumulators")?,
        ito_cum: r.f64("the accumulators")?,
        martingale_cum: r.f64("the accumulators")?,
    };

    let nrows = r.u64("the ledger header")? as usize;
    let mut ledger = EnergyLedger::new();
    for i in 0..nrows {
        let what = format!("ledger row {i}");
        let t = r.f64(&what)?;
        let energy = r.f64(&what)?;
        let viscous = r.f64(&what)?;
        let ito = r.f64(&what)?;
        let martingale = r.f64(&what)?;
        let stored_residual = r.f64(&what)?;
        ledger.push(t, energy, viscous, ito, martingale);
        // The residual is re-derived from the same operands; any deviation
        // means the file is corrupt, not merely imprecise.
        let recomputed = ledger.rows()[i].residual;
        if recomputed.to_bits() != stored_residual.to_bits() {
            return Err(Error::data(format!(
                "checkpoint ledger row {i} is internally inconsistent (stored residual {stored_residual}, derived {recomputed})"
            )));
        }
    }

    let dim = r.u32("the state header")? as usize;
    let cutoff = r.u32("the state header")? as usize;
    let ncomp = r.u32("the state header")? as usize;
    if ncomp == 0 {
        return Err(Error::data("checkpoint state has zero components"));
    }
    let lattice = FourierLattice::new(dim, cutoff)?;
    let mut u = SpectralField::zeros(&lattice, ncomp);
    let total = lattice.num_modes() * ncomp;
    for i in 0..total {
        let re = r.f64("the state coefficients")?;
        let im = r.f64("the state coefficients")?;
        u.at_mut(i / ncomp)[i % ncomp] = Complex64::new(re, im);
    }
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing)? != 0 {
        return Err(Error::data("checkpoint has trailing bytes after the state"));
    }

    Ok(Checkpoint {
        config_hash,
        state: SolverState {
            time,
            step_index,
            u,
        },
        accum,
        ledger,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{NoiseModel, WienerPath};
    use crate::presets;
    use crate::scheme::{run, run_from, Integrator, RunOptions};

    fn cfg() -> SchemeConfig {
        SchemeConfig {
            n: 4,
            m: 2,
            eps: 0.25,
            dt: 0.01,
            t_end: 1.0,
            integrator: Integrator::EulerMaruyama,
        }
    }

    fn csv(ledger: &EnergyLedger) -> Vec<u8> {
        let mut buf = Vec::new();
        ledger.write_csv(&mut buf).unwrap();
        buf
    }

    fn coeff_bits(u: &SpectralField) -> Vec<(u64, u64)> {
        u.coeffs().iter().map(|z| (z.re.to_bits(), z.im.to_bits())).collect()
    }

    #[test]
    fn resume_matches_the_uninterrupted_run_bit_for_bit() {
        let cfg = cfg();
        let lat = FourierLattice::new(2, 4).unwrap();
        let mut u0 = presets::taylor_green(&lat);
        u0.add_assign(&presets::random_divfree(&lat, 5, 4, 1.2, 0.4).unwrap());
        let noise = NoiseModel::linear(vec![0.2, 0.1]).unwrap();
        let path = WienerPath::sample(9, 2, cfg.dt, cfg.t_end).unwrap();

        let straight = run(&cfg, &noise, &path, &u0, RunOptions::default()).unwrap();

        // Capture a checkpoint mid-run through the step hook, without
        // disturbing the run itself.
        let dir = tempfile::tempdir().unwrap();
        let ck_path = dir.path().join("cut.svck");
        let hash = [7u8; 32];
        {
            let ck_ref = &ck_path;
            let opts = RunOptions {
                on_step: Some(Box::new(move |s, a, l| {
                    if s.step_index == 50 {
                        write_checkpoint(
                            ck_ref,
                            &Checkpoint {
                                config_hash: hash,
                                state: s.clone(),
                                accum: *a,
                                ledger: l.clone(),
                            },
                        )?;
                    }
                    Ok(())
                })),
                ..RunOptions::default()
            };
            run(&cfg, &noise, &path, &u0, opts).unwrap();
        }

        let ckpt = read_checkpoint(&ck_path).unwrap();
        assert_eq!(ckpt.state.step_index, 50);
        assert_eq!(ckpt.config_hash, hash);
        assert_eq!(
            resume_plan(&ckpt, &hash, &cfg).unwrap(),
            ResumePlan::Continue
        );

        let resumed = run_from(
            ckpt.state,
            ckpt.accum,
            ckpt.ledger,
            &cfg,
            &noise,
            &path,
            RunOptions::default(),
        )
        .unwrap();

        assert_eq!(coeff_bits(&straight.state.u), coeff_bits(&resumed.state.u));
        assert_eq!(csv(&straight.ledger), csv(&resumed.ledger));
        assert_eq!(straight.accum, resumed.accum);
    }

    #[test]
    fn checkpoint_file_round_trips_bitwise() {
        let cfg = cfg();
        let lat = FourierLattice::new(2, 4).unwrap();
        let u0 = presets::random_divfree(&lat, 3, 4, 1.5, 1.0).unwrap();
        let noise = NoiseModel::saturated_linear(vec![0.3]).unwrap();
        let path = WienerPath::sample(4, 1, cfg.dt, cfg.t_end).unwrap();
        let out = run(
            &cfg,
            &noise,
            &path,
            &u0,
            RunOptions {
                max_steps: Some(37),
                ..RunOptions::default()
            },
        )
        .unwrap();
        assert!(!out.completed);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.svck");
        let ck = Checkpoint {
            config_hash: [0xAB; 32],
            state: out.state,
            accum: out.accum,
            ledger: out.ledger,
        };
        write_checkpoint(&p, &ck).unwrap();
        let back = read_checkpoint(&p).unwrap();
        assert_eq!(back.config_hash, ck.config_hash);
        assert_eq!(back.state.step_index, ck.state.step_index);
        assert_eq!(back.state.time.to_bits(), ck.state.time.to_bits());
        assert_eq!(back.accum, ck.accum);
        assert_eq!(coeff_bits(&back.state.u), coeff_bits(&ck.state.u));
        assert_eq!(csv(&back.ledger), csv(&ck.ledger));

        // Writing the reread checkpoint reproduces the file exactly.
        let p2 = dir.path().join("c2.svck");
        write_checkpoint(&p2, &back).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn altered_configuration_is_refused() {
        let lat = FourierLattice::new(2, 4).unwrap();
        let ck = Checkpoint {
            config_hash: [1; 32],
            state: SolverState {
                time: 0.5,
                step_index: 50,
                u: presets::taylor_green(&lat),
            },
            accum: Accumulators::default(),
            ledger: EnergyLedger::new(),
        };
        let err = resume_plan(&ck, &[2; 32], &cfg()).unwrap_err();
        assert!(err.to_string().contains("refusing to resume"), "{err}");
    }

    #[test]
    fn completed_run_resumes_as_a_noop() {
        let lat = FourierLattice::new(2, 4).unwrap();
        let ck = Checkpoint {
            config_hash: [1; 32],
            state: SolverState {
                time: 1.0,
                step_index: 100,
                u: presets::taylor_green(&lat),
            },
            accum: Accumulators::default(),
            ledger: EnergyLedger::new(),
        };
        assert_eq!(
            resume_plan(&ck, &[1; 32], &cfg()).unwrap(),
            ResumePlan::Completed
        );
    }

    #[test]
    fn malformed_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.svck");

        std::fs::write(&p, b"JUNKJUNKJUNK").unwrap();
        let err = read_checkpoint(&p).unwrap_err();
        assert!(err.to_string().contains("not a checkpoint"), "{err}");

        let lat = FourierLattice::new(2, 2).unwrap();
        let ck = Checkpoint {
            config_hash: [5; 32],
            state: SolverState {
                time: 0.0,
                step_index: 0,
                u: presets::taylor_green(&lat),
            },
            accum: Accumulators::default(),
            ledger: EnergyLedger::new(),
        };
        write_checkpoint(&p, &ck).unwrap();
        let raw = std::fs::read(&p).unwrap();

        let mut v2 = raw.clone();
        v2[4..8].copy_from_slice(&9u32.to_le_bytes());
        std::fs::write(&p, &v2).unwrap();
        let err = read_checkpoint(&p).unwrap_err();
        assert!(err.to_string().contains("version 9"), "{err}");

        std::fs::write(&p, &raw[..raw.len() - 3]).unwrap();
        let err = read_checkpoint(&p).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");

        let mut extra = raw.clone();
        extra.push(0);
        std::fs::write(&p, &extra).unwrap();
        let err = read_checkpoint(&p).unwrap_err();
        assert!(err.to_string().contains("trailing"), "{err}");
    }
}
