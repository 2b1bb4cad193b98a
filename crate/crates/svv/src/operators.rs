//! Spectral operators: projections, derivatives, the band-limited
//! dissipation term, and the convective nonlinearity.
//!
//! All operators except the nonlinearity are diagonal in Fourier space
//! with real, even symbols, so they preserve the reality symmetry exactly
//! and commute with one another. The two key algebraic facts the solver
//! relies on, both tested here against independent oracles:
//!
//!   <u, P_n(u . grad u)> = 0   for divergence-free u (the projected
//!                              nonlinearity moves energy between modes
//!                              but never creates it), and
//!   <u, eps div(Q_n grad u)> = -eps * sum over the upper band of
//!                              |k|^2 |uhat_k|^2 (dissipation acts only
//!                              above the protected band).

use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::lattice::FourierLattice;
use crate::transform::{forward_transform, inverse_transform};

/// How the convective term is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvolutionMethod {
    /// Direct convolution over wavevector pairs, O(N^2) in mode count.
    /// Exact in exact arithmetic; used as the reference route.
    ExactConvolution,
    /// Pointwise products on the grid. Exact for grids with at least
    /// 3n+1 points per axis (quadratic products are then alias-free).
    DealiasedPseudospectral,
}

/// Keeps modes |k|_inf <= m, zeros the rest.
pub fn truncate(u: &SpectralField, m: usize) -> SpectralField {
    let mut out = u.clone();
    for (i, k) in u.lattice().modes() {
        if FourierLattice::k_inf(k) > m as i64 {
            for c in out.at_mut(i) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }
    out
}

/// Zeros modes |k|_inf <= m, keeps the rest (complement of `truncate`).
pub fn high_pass(u: &SpectralField, m: usize) -> SpectralField {
    let mut out = u.clone();
    for (i, k) in u.lattice().modes() {
        if FourierLattice::k_inf(k) <= m as i64 {
            for c in out.at_mut(i) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }
    out
}

/// Leray projection onto divergence-free fields:
/// uhat_k -> uhat_k - (uhat_k . k) k / |k|^2, with k = 0 passed through.
pub fn leray_project(u: &SpectralField) -> SpectralField {
    let d = u.lattice().dim();
    assert_eq!(u.ncomp(), d, "Leray projection acts on velocity fields");
    let mut out = u.clone();
    for (i, k) in u.lattice().modes() {
        let ksq = FourierLattice::k_sq(k);
        if ksq == 0.0 {
            continue;
        }
        let coeffs = out.at_mut(i);
        let mut dot = Complex64::new(0.0, 0.0);
        for c in 0..d {
            dot += coeffs[c] * k[c] as f64;
        }
        let t = dot / ksq;
        for c in 0..d {
            coeffs[c] -= t * k[c] as f64;
        }
    }
    out
}

/// Galerkin projection: truncation to |k|_inf <= m composed with Leray.
pub fn galerkin_project(u: &SpectralField, m: usize) -> SpectralField {
    truncate(&leray_project(u), m)
}

/// Componentwise gradient. For input with c components the output has
/// c*d components, laid out as out[i*d + j] = d/dx_j of component i.
pub fn gradient(u: &SpectralField) -> SpectralField {
    let d = u.lattice().dim();
    let c_in = u.ncomp();
    let mut out = SpectralField::zeros(u.lattice(), c_in * d);
    for (idx, k) in u.lattice().modes() {
        let src = u.at(idx);
        let row: Vec<Complex64> = (0..c_in * d)
            .map(|cd| {
                let (i, j) = (cd / d, cd % d);
                src[i] * Complex64::new(0.0, k[j] as f64)
            })
            .collect();
        out.at_mut(idx).copy_from_slice(&row);
    }
    out
}

/// Divergence of a velocity field (scalar output).
pub fn divergence(u: &SpectralField) -> SpectralField {
    let d = u.lattice().dim();
    assert_eq!(u.ncomp(), d);
    let mut out = SpectralField::zeros(u.lattice(), 1);
    for (idx, k) in u.lattice().modes() {
        let src = u.at(idx);
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..d {
            acc += src[j] * Complex64::new(0.0, k[j] as f64);
        }
        out.at_mut(idx)[0] = acc;
    }
    out
}

/// Componentwise Laplacian: multiplication by -|k|^2.
pub fn laplacian(u: &SpectralField) -> SpectralField {
    let mut out = u.clone();
    for (idx, k) in u.lattice().modes() {
        let factor = -FourierLattice::k_sq(k);
        for c in out.at_mut(idx) {
            *c *= factor;
        }
    }
    out
}

/// Band-limited dissipation eps * div(Q_n grad u): the multiplier
/// -eps |k|^2 on modes m < |k|_inf <= n and zero elsewhere, so the modes
/// at or below m are never damped.
pub fn spectral_viscosity_term(u: &SpectralField, eps: f64, m: usize) -> SpectralField {
    let mut out = u.clone();
    for (idx, k) in u.lattice().modes() {
        let factor = if FourierLattice::k_inf(k) > m as i64 {
            -eps * FourierLattice::k_sq(k)
        } else {
            0.0
        };
        for c in out.at_mut(idx) {
            *c *= factor;
        }
    }
    out
}

/// Energy drained by the dissipation term: sum over the upper band of
/// |k|^2 |uhat_k|^2. Satisfies <u, viscosity(u)> = -eps * this.
pub fn viscous_energy_rate(u: &SpectralField, m: usize) -> f64 {
    let mut acc = 0.0;
    for (idx, k) in u.lattice().modes() {
        if FourierLattice::k_inf(k) > m as i64 {
            let ksq = FourierLattice::k_sq(k);
            acc += ksq * u.at(idx).iter().map(|c| c.norm_sqr()).sum::<f64>();
        }
    }
    acc
}

/// Galerkin nonlinearity P_n(u . grad u) for divergence-free u.
///
/// Both routes agree to rounding; the pseudo-spectral one is the fast
/// path and requires a dealiased grid. The k = 0 coefficient of
/// u . grad u vanishes identically for divergence-free u, so it is
/// pinned to exact zero rather than left at rounding level.
pub fn convective_term(u: &SpectralField, method: ConvolutionMethod) -> Result<SpectralField> {
    let lat = u.lattice();
    let d = lat.dim();
    assert_eq!(u.ncomp(), d, "convective term acts on velocity fields");
    let w = match method {
        ConvolutionMethod::ExactConvolution => convective_exact(u),
        ConvolutionMethod::DealiasedPseudospectral => {
            if !lat.dealiased() {
                return Err(Error::data(format!(
                    "grid of {} points per axis aliases quadratic products at cutoff {}; \
                     need at least {}",
                    lat.grid(),
                    lat.cutoff(),
                    3 * lat.cutoff() + 1
                )));
            }
            let u_phys = inverse_transform(u)?;
            let grad_phys = inverse_transform(&gradient(u))?;
            let np = lat.num_points();
            let mut w_phys = crate::field::PhysicalField::zeros(lat, d);
            for i in 0..d {
                let out_plane = w_phys.plane_mut(i);
                for j in 0..d {
                    let uj = u_phys.plane(j);
                    let gij = grad_phys.plane(i * d + j);
                    for p in 0..np {
                        out_plane[p] += uj[p] * gij[p];
                    }
                }
            }
            forward_transform(&w_phys)
        }
    };
    let mut out = leray_project(&w);
    out.pin_zero_mean();
    Ok(out)
}

/// Direct convolution: what_k = i * sum_{p+q=k} (uhat_p . q) uhat_q.
fn convective_exact(u: &SpectralField) -> SpectralField {
    let lat = u.lattice();
    let d = lat.dim();
    let n = lat.cutoff() as i64;
    let mut w = SpectralField::zeros(lat, d);
    for (pi, p) in lat.modes() {
        let up = u.at(pi);
        if up.iter().all(|c| c.re == 0.0 && c.im == 0.0) {
            continue;
        }
        for (qi, q) in lat.modes() {
            let k = [p[0] + q[0], p[1] + q[1], p[2] + q[2]];
            if k.iter().take(d).any(|ki| ki.abs() > n) {
                continue;
            }
            let uq = u.at(qi);
            let mut dot = Complex64::new(0.0, 0.0);
            for c in 0..d {
                dot += up[c] * q[c] as f64;
            }
            let f = Complex64::new(0.0, 1.0) * dot;
            let ki = lat.mode_index(k);
            let out = w.at_mut(ki);
            for c in 0..d {
                out[c] += f * uq[c];
            }
        }
    }
    w
}

/// Embeds u into a lattice with a larger (or equal) cutoff; new modes are
/// zero. Norms and inner products are preserved exactly.
pub fn zero_pad_embed(u: &SpectralField, target: &Arc<FourierLattice>) -> Result<SpectralField> {
    if target.dim() != u.lattice().dim() {
        return Err(Error::data(format!(
            "cannot embed a {}-D field into a {}-D lattice",
            u.lattice().dim(),
            target.dim()
        )));
    }
    if target.cutoff() < u.lattice().cutoff() {
        return Err(Error::data(format!(
            "zero-pad embedding cannot shrink the cutoff ({} -> {})",
            u.lattice().cutoff(),
            target.cutoff()
        )));
    }
    let mut out = SpectralField::zeros(target, u.ncomp());
    for (i, k) in u.lattice().modes() {
        let j = target.mode_index(k);
        out.at_mut(j).copy_from_slice(u.at(i));
    }
    Ok(out)
}

/// Rebinds u onto an arbitrary lattice of the same dimension: modes present
/// on both sides are copied, modes only in the target are zero, modes only
/// in the source are dropped (plain truncation when the target is coarser).
pub fn resample(u: &SpectralField, target: &Arc<FourierLattice>) -> Result<SpectralField> {
    if target.dim() != u.lattice().dim() {
        return Err(Error::data(format!(
            "cannot resample a {}-D field onto a {}-D lattice",
            u.lattice().dim(),
            target.dim()
        )));
    }
    let mut out = SpectralField::zeros(target, u.ncomp());
    for (i, k) in u.lattice().modes() {
        if target.contains(k) {
            out.at_mut(target.mode_index(k)).copy_from_slice(u.at(i));
        }
    }
    Ok(out)
}

/// Sobolev norm of order s: (sum_k (1+|k|^2)^s |uhat_k|^2)^(1/2).
/// Order 0 is the L2 norm.
pub fn sobolev_norm(u: &SpectralField, s: f64) -> f64 {
    sobolev_norm_above(u, s, None)
}

/// Sobolev norm restricted to the tail |k|_inf > band (the whole lattice
/// when band is None). Used for the truncation-tail factors in the
/// consistency bounds.
pub fn sobolev_norm_above(u: &SpectralField, s: f64, band: Option<usize>) -> f64 {
    let floor = band.map(|b| b as i64);
    let mut acc = 0.0;
    for (idx, k) in u.lattice().modes() {
        if let Some(b) = floor {
            if FourierLattice::k_inf(k) <= b {
                continue;
            }
        }
        let weight = (1.0 + FourierLattice::k_sq(k)).powf(s);
        acc += weight * u.at(idx).iter().map(|c| c.norm_sqr()).sum::<f64>();
    }
    acc.sqrt()
}
