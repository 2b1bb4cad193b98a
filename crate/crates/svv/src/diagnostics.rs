//! Energy accounting and convergence diagnostics.
//!
//! The central identity is the Ito energy balance of the semi-discrete
//! scheme: for 0 <= s <= t,
//!
//!   1/2 ||u(t)||^2 + eps * int_s^t ||Q_n grad u||^2 dtau
//!     = 1/2 ||u(s)||^2 + int_s^t <u, P_n sigma(u) dW>
//!       + 1/2 int_s^t sum_k ||P_n sigma_k(u)||^2 dtau.
//!
//! The ledger tracks each term with left-endpoint quadrature, matching
//! the Euler-Maruyama evaluation points, and reports the defect. The
//! `ito_cum` column stores the un-halved integral sum_k ||P_n sigma_k||^2
//! (that is the quantity quoted alongside the scheme); the residual
//! subtracts half of it, which is the coefficient the Ito formula for
//! the squared norm actually carries. With that convention the residual
//! vanishes for exact semi-discrete dynamics and decays at first order
//! in dt for the discrete integrators.
//!
//! The consistency residuals R1 and N measure how far a resolved field is
//! from satisfying the weak Euler formulation against a smooth test
//! function; their decay as the cutoff grows is the quantitative content
//! of scheme consistency. Relative energy plus the Gronwall envelope
//! quantify weak-strong stability against a resolved reference.

use std::io::Write;

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::lattice::{next_fast_size, FourierLattice};
use crate::operators::{gradient, high_pass, laplacian, sobolev_norm, zero_pad_embed};
use crate::transform::inverse_transform;

/// Kinetic energy 1/2 ||u||^2 (Parseval sum under the normalized measure).
pub fn energy(u: &SpectralField) -> f64 {
    0.5 * u.norm_sq()
}

/// One accounting row of the energy balance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerRow {
    pub t: f64,
    pub energy: f64,
    /// eps * int_0^t ||Q_n grad u||^2, left-endpoint quadrature.
    pub viscous_cum: f64,
    /// int_0^t sum_k ||P_n sigma_k(u)||^2, left-endpoint quadrature.
    pub ito_cum: f64,
    /// sum over steps of sum_k <u, P_n sigma_k(u)> DeltaW_k.
    pub martingale_cum: f64,
    /// Balance defect against the first row; see the module docs.
    pub residual: f64,
}

/// Energy-balance ledger of one trajectory.
#[derive(Debug, Clone, Default)]
pub struct EnergyLedger {
    rows: Vec<LedgerRow>,
}

impl EnergyLedger {
    pub fn new() -> Self {
        EnergyLedger { rows: Vec::new() }
    }

    /// Appends a row; cumulative columns are measured from the first row's
    /// time, and the residual is computed against the first row's energy.
    pub fn push(&mut self, t: f64, energy: f64, viscous_cum: f64, ito_cum: f64, martingale_cum: f64) {
        let e0 = self.rows.first().map_or(energy, |r| r.energy);
        let residual = energy + viscous_cum - e0 - martingale_cum - 0.5 * ito_cum;
        self.rows.push(LedgerRow {
            t,
            energy,
            viscous_cum,
            ito_cum,
            martingale_cum,
            residual,
        });
    }

    pub fn rows(&self) -> &[LedgerRow] {
        &self.rows
    }

    pub fn last(&self) -> Option<&LedgerRow> {
        self.rows.last()
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.residual.abs()).fold(0.0, f64::max)
    }

    /// Row-to-row balance defects (first differences of the cumulative one).
    pub fn interval_residuals(&self) -> Vec<f64> {
        self.rows
            .windows(2)
            .map(|w| w[1].residual - w[0].residual)
            .collect()
    }

    /// Writes the ledger as CSV. Floats use shortest round-trip formatting,
    /// so parsing a column back yields bit-identical values.
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "t,E,viscous_cum,ito_cum,martingale_cum,residual")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.t, r.energy, r.viscous_cum, r.ito_cum, r.martingale_cum, r.residual
            )?;
        }
        Ok(())
    }
}

/// Least-squares slope of log(value) against log(dt): the measured
/// convergence order of a refinement study. Zero values are clamped to
/// machine floor so a residual that hits exact zero reads as high order.
pub fn refinement_order(samples: &[(f64, f64)]) -> f64 {
    assert!(samples.len() >= 2, "need at least two refinement levels");
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .map(|&(dt, v)| (dt.ln(), v.abs().max(1e-300).ln()))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Uniform-moment report across a resolution ladder.
#[derive(Debug, Clone)]
pub struct AprioriReport {
    pub resolutions: Vec<usize>,
    /// E[sup_t ||u_n||^p] per resolution.
    pub moments: Vec<f64>,
    /// Successive ratios moments[i+1] / moments[i].
    pub ratios: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

/// Checks that the moment sequence does not grow across the ladder:
/// every successive ratio must stay at or below 1 + tolerance.
pub fn apriori_check(resolutions: &[usize], moments: &[f64], tolerance: f64) -> Result<AprioriReport> {
    if resolutions.len() != moments.len() || resolutions.len() < 2 {
        return Err(Error::data(
            "a-priori check needs matching resolution/moment lists with at least two levels"
                .to_string(),
        ));
    }
    let ratios: Vec<f64> = moments.windows(2).map(|w| w[1] / w[0]).collect();
    let pass = ratios.iter().all(|r| *r <= 1.0 + tolerance);
    Ok(AprioriReport {
        resolutions: resolutions.to_vec(),
        moments: moments.to_vec(),
        ratios,
        tolerance,
        pass,
    })
}

/// Embeds u and phi on a shared lattice whose grid integrates products of
/// their trigonometric degrees exactly.
fn common_lattice(
    u: &SpectralField,
    phi: &SpectralField,
    product_degree: usize,
) -> Result<(SpectralField, SpectralField)> {
    let (lu, lp) = (u.lattice(), phi.lattice());
    if lu.dim() != lp.dim() {
        return Err(Error::data(
            "field and test function live in different dimensions".to_string(),
        ));
    }
    if lp.cutoff() < lu.cutoff() {
        return Err(Error::data(format!(
            "test function cutoff {} must dominate the field cutoff {}",
            lp.cutoff(),
            lu.cutoff()
        )));
    }
    let need = product_degree + 1;
    let work = if lp.grid() >= need {
        std::sync::Arc::clone(lp)
    } else {
        FourierLattice::with_grid(lp.dim(), lp.cutoff(), next_fast_size(need))?
    };
    Ok((zero_pad_embed(u, &work)?, zero_pad_embed(phi, &work)?))
}

/// Weak-formulation commutator residual of the nonlinearity:
///
///   R1(n, phi) = -int grad((I - P_n) phi) : (u tensor u) dx,
///
/// evaluated by exact quadrature (the shared grid resolves the product's
/// full trigonometric degree). n is the cutoff of u's lattice. For the
/// solenoidal test functions of the weak formulation the projection
/// complement is a pure band split, so when phi has no content above the
/// cutoff the residual is exactly zero, not merely small.
pub fn consistency_residual_r1(u: &SpectralField, phi: &SpectralField) -> Result<f64> {
    let n = u.lattice().cutoff();
    let d = u.lattice().dim();
    let deg = phi.lattice().cutoff() + 2 * n;
    let (u_w, phi_w) = common_lattice(u, phi, deg)?;
    let tail = high_pass(&phi_w, n);
    let grad_tail = inverse_transform(&gradient(&tail))?;
    let u_phys = inverse_transform(&u_w)?;
    let np = u_phys.lattice().num_points();
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            let g = grad_tail.plane(i * d + j);
            let ui = u_phys.plane(i);
            let uj = u_phys.plane(j);
            let mut s = 0.0;
            for p in 0..np {
                s += g[p] * ui[p] * uj[p];
            }
            acc += s;
        }
    }
    Ok(-acc / np as f64)
}

/// The bound factor the R1 estimate is measured against:
/// ||u||^2 * ||(I - P_n) phi||_{H^{3/2}}.
pub fn r1_bound_factor(u: &SpectralField, phi: &SpectralField) -> f64 {
    let n = u.lattice().cutoff();
    u.norm_sq() * sobolev_norm(&high_pass(phi, n), 1.5)
}

/// Dissipation consistency residual:
///
///   N(n, phi) = eps * int (I - P_m)(Laplacian phi) . u dx,
///
/// by exact quadrature on a shared grid. m is the protected-band cutoff.
pub fn consistency_residual_n(
    u: &SpectralField,
    phi: &SpectralField,
    eps: f64,
    m: usize,
) -> Result<f64> {
    let deg = phi.lattice().cutoff() + u.lattice().cutoff();
    let (u_w, phi_w) = common_lattice(u, phi, deg)?;
    let tail = high_pass(&laplacian(&phi_w), m);
    let tail_phys = inverse_transform(&tail)?;
    let u_phys = inverse_transform(&u_w)?;
    let np = u_phys.lattice().num_points();
    let d = u_phys.ncomp();
    let mut acc = 0.0;
    for c in 0..d {
        let a = tail_phys.plane(c);
        let b = u_phys.plane(c);
        for p in 0..np {
            acc += a[p] * b[p];
        }
    }
    Ok(eps * acc / np as f64)
}

/// The Cauchy-Schwarz bound for N: eps * ||u|| * ||(I - P_m) phi||_{H^2}.
/// Holds with constant exactly 1.
pub fn n_bound_factor(u: &SpectralField, phi: &SpectralField, eps: f64, m: usize) -> f64 {
    eps * u.norm() * sobolev_norm(&high_pass(phi, m), 2.0)
}

/// Relative energy of an ensemble against a reference field, split into
/// its two non-negative pieces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeEnergy {
    /// Ensemble mean of 1/2 ||u_i - U||^2.
    pub mean_square: f64,
    /// Spread surrogate: max(0, mean_i E(u_i) - E(mean_i u_i)). Zero for a
    /// single member; reported separately and only ever added, never used
    /// to relax a threshold.
    pub spread: f64,
}

impl RelativeEnergy {
    /// The full functional: mean-square distance plus spread surrogate.
    pub fn total(&self) -> f64 {
        self.mean_square + self.spread
    }
}

/// Computes the relative energy of `members` against `reference`.
pub fn relative_energy(members: &[SpectralField], reference: &SpectralField) -> Result<RelativeEnergy> {
    if members.is_empty() {
        return Err(Error::data("relative energy of an empty ensemble".to_string()));
    }
    for m in members {
        crate::field::ensure_same_shape(m, reference)?;
    }
    let inv_m = 1.0 / members.len() as f64;
    let mut mean_square = 0.0;
    let mut mean_energy = 0.0;
    let mut mean_field = SpectralField::zeros(reference.lattice(), reference.ncomp());
    for m in members {
        mean_square += energy(&m.sub(reference));
        mean_energy += energy(m);
        mean_field.axpy(inv_m, m);
    }
    mean_square *= inv_m;
    mean_energy *= inv_m;
    let spread = (mean_energy - energy(&mean_field)).max(0.0);
    Ok(RelativeEnergy { mean_square, spread })
}

/// Result of checking a series against its exponential envelope.
#[derive(Debug, Clone)]
pub struct GronwallReport {
    pub c: f64,
    pub slack: f64,
    pub floor: f64,
    /// Largest value of series / envelope over the series (0 when the
    /// envelope is the floor and the series is 0 there).
    pub worst_ratio: f64,
    pub pass: bool,
}

/// Checks E(t) <= E(t0) * exp(c (t - t0)) * (1 + slack) + floor for every
/// sample. The floor absorbs rounding scale when the series starts at
/// (numerically) zero; it must be small relative to the energies involved.
pub fn gronwall_envelope(series: &[(f64, f64)], c: f64, slack: f64, floor: f64) -> Result<GronwallReport> {
    if series.is_empty() {
        return Err(Error::data("empty series for Gronwall check".to_string()));
    }
    if series.iter().any(|&(_, e)| !e.is_finite() || e < 0.0) {
        return Err(Error::data(
            "Gronwall series must be finite and non-negative".to_string(),
        ));
    }
    let (t0, e0) = series[0];
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for &(t, e) in series {
        let envelope = e0 * (c * (t - t0)).exp() * (1.0 + slack) + floor;
        if e > envelope {
            pass = false;
        }
        if envelope > 0.0 {
            worst = worst.max(e / envelope);
        }
    }
    Ok(GronwallReport {
        c,
        slack,
        floor,
        worst_ratio: worst,
        pass,
    })
}
