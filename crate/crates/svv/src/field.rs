//! Spectral and physical field containers.
//!
//! A `SpectralField` stores one complex coefficient vector per lattice
//! wavevector (interleaved by component); a `PhysicalField` stores real
//! values on the grid, one contiguous plane per component. Velocity fields
//! have as many components as the lattice dimension, but the containers
//! are component-count generic: scalars use 1 and gradients use d*d.
//!
//! Conventions, used consistently everywhere:
//!   u(x) = sum_k uhat_k e^{i k.x},
//!   <u, v> = normalized integral of u.v over the torus
//!          = sum_k uhat_k . conj(vhat_k)   (Parseval, unit constant).
//! Integrals over the torus are always normalized by its volume, so the
//! L2 norm of e.g. sqrt(2) cos(k.x) is exactly 1.
//!
//! Real-valued fields satisfy the reality symmetry uhat_{-k} = conj(uhat_k);
//! all spectral operators in this crate have real, even symbols and so
//! preserve it exactly. Violations (from hand-edited coefficients or
//! corrupted files) surface in `reality_error` and are rejected by the
//! inverse transform.

use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::FourierLattice;

/// Complex Fourier coefficients on the lattice cube, component-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    lattice: Arc<FourierLattice>,
    ncomp: usize,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(lattice: &Arc<FourierLattice>, ncomp: usize) -> Self {
        assert!(ncomp >= 1);
        SpectralField {
            lattice: Arc::clone(lattice),
            ncomp,
            coeffs: vec![Complex64::new(0.0, 0.0); lattice.num_modes() * ncomp],
        }
    }

    /// Velocity field: one component per space dimension.
    pub fn zeros_velocity(lattice: &Arc<FourierLattice>) -> Self {
        Self::zeros(lattice, lattice.dim())
    }

    pub fn lattice(&self) -> &Arc<FourierLattice> {
        &self.lattice
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    /// Coefficient vector at flat mode index.
    #[inline]
    pub fn at(&self, mode: usize) -> &[Complex64] {
        &self.coeffs[mode * self.ncomp..(mode + 1) * self.ncomp]
    }

    #[inline]
    pub fn at_mut(&mut self, mode: usize) -> &mut [Complex64] {
        &mut self.coeffs[mode * self.ncomp..(mode + 1) * self.ncomp]
    }

    /// Coefficient vector at wavevector k.
    #[inline]
    pub fn at_wavevector(&self, k: [i64; 3]) -> &[Complex64] {
        self.at(self.lattice.mode_index(k))
    }

    #[inline]
    pub fn set(&mut self, k: [i64; 3], comp: usize, value: Complex64) {
        let idx = self.lattice.mode_index(k);
        self.at_mut(idx)[comp] = value;
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    fn assert_compatible(&self, other: &Self) {
        assert_eq!(
            self.lattice, other.lattice,
            "fields live on different lattices"
        );
        assert_eq!(self.ncomp, other.ncomp, "component counts differ");
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.assert_compatible(other);
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b;
        }
    }

    pub fn sub_assign(&mut self, other: &Self) {
        self.assert_compatible(other);
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a -= b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in self.coeffs.iter_mut() {
            *a *= factor;
        }
    }

    /// self += factor * other.
    pub fn axpy(&mut self, factor: f64, other: &Self) {
        self.assert_compatible(other);
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += factor * b;
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.sub_assign(other);
        out
    }

    /// L2 inner product <self, other>; real by reality symmetry.
    pub fn inner(&self, other: &Self) -> f64 {
        self.assert_compatible(other);
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a * b.conj()).re)
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Sum of coefficient magnitudes; bounds sup |u| on the torus.
    pub fn l1_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Largest violation of uhat_{-k} = conj(uhat_k), in absolute terms.
    pub fn reality_error(&self) -> f64 {
        let lat = &self.lattice;
        let mut worst = 0.0f64;
        for (i, k) in lat.modes() {
            let neg = [-k[0], -k[1], -k[2]];
            let j = lat.mode_index(neg);
            if j < i {
                continue;
            }
            let a = self.at(i);
            let b = self.at(j);
            for c in 0..self.ncomp {
                worst = worst.max((a[c] - b[c].conj()).norm());
            }
        }
        worst
    }

    /// Largest |k . uhat_k| over the lattice; zero for divergence-free fields.
    ///
    /// Only meaningful for velocity fields (ncomp == dim).
    pub fn divergence_error(&self) -> f64 {
        assert_eq!(self.ncomp, self.lattice.dim());
        let mut worst = 0.0f64;
        for (i, k) in self.lattice.modes() {
            let u = self.at(i);
            let mut dot = Complex64::new(0.0, 0.0);
            for (c, item) in u.iter().enumerate().take(self.ncomp) {
                dot += item * k[c] as f64;
            }
            worst = worst.max(dot.norm());
        }
        worst
    }

    /// The k = 0 coefficient vector (the mean of the field).
    pub fn mean_mode(&self) -> Vec<Complex64> {
        self.at(self.lattice.mode_index([0, 0, 0])).to_vec()
    }

    /// Forces the k = 0 coefficient to zero.
    ///
    /// The solver state is mean-free by construction; pointwise products
    /// reintroduce a rounding-level mean that this pins back to zero.
    pub fn pin_zero_mean(&mut self) {
        let idx = self.lattice.mode_index([0, 0, 0]);
        for c in self.at_mut(idx) {
            *c = Complex64::new(0.0, 0.0);
        }
    }

    /// Evaluates the Fourier sum at an arbitrary point (real part).
    pub fn eval_at(&self, x: [f64; 3]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncomp];
        for (i, k) in self.lattice.modes() {
            let phase = k[0] as f64 * x[0] + k[1] as f64 * x[1] + k[2] as f64 * x[2];
            let e = Complex64::new(0.0, phase).exp();
            let u = self.at(i);
            for (c, o) in out.iter_mut().enumerate() {
                *o += (u[c] * e).re;
            }
        }
        out
    }
}

/// Real values on the uniform grid, one contiguous plane per component.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalField {
    lattice: Arc<FourierLattice>,
    ncomp: usize,
    values: Vec<f64>,
}

impl PhysicalField {
    pub fn zeros(lattice: &Arc<FourierLattice>, ncomp: usize) -> Self {
        assert!(ncomp >= 1);
        PhysicalField {
            lattice: Arc::clone(lattice),
            ncomp,
            values: vec![0.0; lattice.num_points() * ncomp],
        }
    }

    pub fn lattice(&self) -> &Arc<FourierLattice> {
        &self.lattice
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    /// Contiguous values of one component over the whole grid.
    pub fn plane(&self, comp: usize) -> &[f64] {
        let np = self.lattice.num_points();
        &self.values[comp * np..(comp + 1) * np]
    }

    pub fn plane_mut(&mut self, comp: usize) -> &mut [f64] {
        let np = self.lattice.num_points();
        &mut self.values[comp * np..(comp + 1) * np]
    }

    /// Component values at one grid point.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let np = self.lattice.num_points();
        (0..self.ncomp).map(|c| self.values[c * np + flat]).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Normalized integral (grid mean) of the pointwise Euclidean norm.
    pub fn mean_norm(&self) -> f64 {
        let np = self.lattice.num_points();
        let mut acc = 0.0;
        for p in 0..np {
            let mut sq = 0.0;
            for c in 0..self.ncomp {
                let v = self.values[c * np + p];
                sq += v * v;
            }
            acc += sq.sqrt();
        }
        acc / np as f64
    }

    /// Normalized integral (grid mean) of the pointwise squared norm.
    pub fn mean_norm_sq(&self) -> f64 {
        let np = self.lattice.num_points();
        self.values.iter().map(|v| v * v).sum::<f64>() / np as f64
    }

    /// Applies a pointwise map (input point values -> output point values).
    pub fn map_points(&self, out_ncomp: usize, f: impl Fn(&[f64], &mut [f64])) -> PhysicalField {
        let np = self.lattice.num_points();
        let mut out = PhysicalField::zeros(&self.lattice, out_ncomp);
        let mut inbuf = vec![0.0; self.ncomp];
        let mut outbuf = vec![0.0; out_ncomp];
        for p in 0..np {
            for c in 0..self.ncomp {
                inbuf[c] = self.values[c * np + p];
            }
            outbuf.fill(0.0);
            f(&inbuf, &mut outbuf);
            for c in 0..out_ncomp {
                out.values[c * np + p] = outbuf[c];
            }
        }
        out
    }
}

/// Checks two fields live on the same lattice with equal component counts,
/// reporting a data error (not a panic) for caller-supplied inputs.
pub fn ensure_same_shape(a: &SpectralField, b: &SpectralField) -> Result<()> {
    if a.lattice() != b.lattice() {
        return Err(Error::data(format!(
            "fields live on different lattices: {:?} vs {:?}",
            a.lattice(),
            b.lattice()
        )));
    }
    if a.ncomp() != b.ncomp() {
        return Err(Error::data(format!(
            "fields have different component counts: {} vs {}",
            a.ncomp(),
            b.ncomp()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_lattice() -> Arc<FourierLattice> {
        FourierLattice::new(2, 3).unwrap()
    }

    #[test]
    fn inner_product_is_parseval_sum() {
        let lat = small_lattice();
        let mut u = SpectralField::zeros(&lat, 2);
        let mut v = SpectralField::zeros(&lat, 2);
        u.set([1, 0, 0], 0, Complex64::new(0.0, -0.5));
        u.set([-1, 0, 0], 0, Complex64::new(0.0, 0.5));
        v.set([1, 0, 0], 0, Complex64::new(0.0, -0.5));
        v.set([-1, 0, 0], 0, Complex64::new(0.0, 0.5));
        // sin(x1) has L2 norm sqrt(1/2) under the normalized measure.
        assert!((u.inner(&v) - 0.5).abs() < 1e-15);
        assert!((u.norm_sq() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn reality_error_detects_asymmetry() {
        let lat = small_lattice();
        let mut u = SpectralField::zeros(&lat, 2);
        u.set([1, 2, 0], 0, Complex64::new(1.0, 1.0));
        u.set([-1, -2, 0], 0, Complex64::new(1.0, -1.0));
        assert_eq!(u.reality_error(), 0.0);
        u.set([-1, -2, 0], 0, Complex64::new(1.0, -0.5));
        assert!(u.reality_error() > 0.4);
    }

    #[test]
    fn divergence_error_flags_non_solenoidal_modes() {
        let lat = small_lattice();
        let mut u = SpectralField::zeros(&lat, 2);
        // uhat parallel to k: maximally divergent.
        u.set([2, 1, 0], 0, Complex64::new(2.0, 0.0));
        u.set([2, 1, 0], 1, Complex64::new(1.0, 0.0));
        assert!(u.divergence_error() > 4.9);
        // uhat perpendicular to k: divergence-free.
        let mut w = SpectralField::zeros(&lat, 2);
        w.set([2, 1, 0], 0, Complex64::new(-1.0, 0.0));
        w.set([2, 1, 0], 1, Complex64::new(2.0, 0.0));
        assert_eq!(w.divergence_error(), 0.0);
    }

    #[test]
    fn eval_at_matches_explicit_cosine() {
        let lat = small_lattice();
        let mut u = SpectralField::zeros(&lat, 2);
        // cos(x1 + 2 x2) as a conjugate mode pair.
        u.set([1, 2, 0], 0, Complex64::new(0.5, 0.0));
        u.set([-1, -2, 0], 0, Complex64::new(0.5, 0.0));
        for (x1, x2) in [(0.3, 1.1), (2.0, 0.0), (4.4, 5.9)] {
            let v = u.eval_at([x1, x2, 0.0]);
            assert!((v[0] - (x1 + 2.0 * x2).cos()).abs() < 1e-12);
            assert_eq!(v[1], 0.0);
        }
    }

    #[test]
    fn pin_zero_mean_clears_only_the_mean() {
        let lat = small_lattice();
        let mut u = SpectralField::zeros(&lat, 2);
        u.set([0, 0, 0], 0, Complex64::new(3.0, 0.0));
        u.set([1, 1, 0], 1, Complex64::new(0.0, 1.0));
        u.pin_zero_mean();
        assert_eq!(u.mean_mode()[0], Complex64::new(0.0, 0.0));
        assert_eq!(u.at_wavevector([1, 1, 0])[1], Complex64::new(0.0, 1.0));
    }
}
