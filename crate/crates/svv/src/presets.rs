//! Initial velocity fields.
//!
//! All presets are constructed directly in spectral space with exact
//! coefficients: reality symmetry, zero mean, and divergence-freeness
//! hold by construction, not up to transform rounding.

use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::lattice::FourierLattice;
use crate::operators::leray_project;
use crate::rng::CounterRng;

/// One factor of a separable trigonometric product.
#[derive(Clone, Copy)]
enum Trig {
    One,
    Cos,
    Sin,
}

/// Adds amp * prod_a f_a(w_a x_a) to one component, expanding the product
/// of cosines/sines into its complex exponential coefficients.
fn add_trig_product(field: &mut SpectralField, comp: usize, amp: f64, factors: [Trig; 3], waves: [i64; 3]) {
    let dim = field.lattice().dim();
    let active: Vec<usize> = (0..dim)
        .filter(|&a| !matches!(factors[a], Trig::One))
        .collect();
    // Each active axis contributes e^{+i w x} and e^{-i w x} halves.
    for mask in 0..(1u32 << active.len()) {
        let mut k = [0i64; 3];
        let mut coeff = Complex64::new(amp, 0.0);
        for (bit, &a) in active.iter().enumerate() {
            let sign = if mask & (1 << bit) == 0 { 1i64 } else { -1i64 };
            k[a] = sign * waves[a];
            coeff *= match factors[a] {
                Trig::Cos => Complex64::new(0.5, 0.0),
                // sin(wx) = -i/2 e^{iwx} + i/2 e^{-iwx}
                Trig::Sin => Complex64::new(0.0, -0.5 * sign as f64),
                Trig::One => unreachable!(),
            };
        }
        let idx = field.lattice().mode_index(k);
        field.at_mut(idx)[comp] += coeff;
    }
}

/// Taylor-Green vortex. In 2-D: u = (-cos x1 sin x2, sin x1 cos x2), a
/// steady state of the projected Euler nonlinearity. In 3-D the classic
/// vortex (cos x1 sin x2 sin x3, -sin x1 cos x2 sin x3, 0), divergence
/// free but not steady.
pub fn taylor_green(lattice: &Arc<FourierLattice>) -> SpectralField {
    assert!(lattice.cutoff() >= 1, "Taylor-Green needs cutoff >= 1");
    let mut u = SpectralField::zeros_velocity(lattice);
    match lattice.dim() {
        2 => {
            add_trig_product(&mut u, 0, -1.0, [Trig::Cos, Trig::Sin, Trig::One], [1, 1, 0]);
            add_trig_product(&mut u, 1, 1.0, [Trig::Sin, Trig::Cos, Trig::One], [1, 1, 0]);
        }
        3 => {
            add_trig_product(&mut u, 0, 1.0, [Trig::Cos, Trig::Sin, Trig::Sin], [1, 1, 1]);
            add_trig_product(&mut u, 1, -1.0, [Trig::Sin, Trig::Cos, Trig::Sin], [1, 1, 1]);
        }
        _ => unreachable!(),
    }
    u
}

/// Single-mode shear flow u = (sin x2, 0, ...): divergence-free and an
/// exact steady state (u . grad u = 0 pointwise).
pub fn shear(lattice: &Arc<FourierLattice>) -> SpectralField {
    assert!(lattice.cutoff() >= 1, "shear needs cutoff >= 1");
    let mut u = SpectralField::zeros_velocity(lattice);
    add_trig_product(&mut u, 0, 1.0, [Trig::One, Trig::Sin, Trig::One], [0, 1, 0]);
    u
}

/// Random divergence-free field with power-law spectrum.
///
/// Coefficients are complex Gaussian draws damped by (1+|k|^2)^(-decay/2),
/// restricted to |k|_inf <= max_mode, Leray-projected, and rescaled to the
/// requested L2 norm. Fully determined by (lattice, seed, max_mode, decay,
/// norm): counter-based draws keyed by mode index make this reproducible
/// across runs and platforms.
pub fn random_divfree(
    lattice: &Arc<FourierLattice>,
    seed: u64,
    max_mode: usize,
    decay: f64,
    norm: f64,
) -> Result<SpectralField> {
    if max_mode == 0 || max_mode > lattice.cutoff() {
        return Err(Error::config(format!(
            "random field band 1..={} must lie inside the lattice cutoff {}",
            max_mode,
            lattice.cutoff()
        )));
    }
    let rng = CounterRng::new(seed);
    let d = lattice.dim();
    let mut u = SpectralField::zeros_velocity(lattice);
    for (i, k) in lattice.modes() {
        let kinf = FourierLattice::k_inf(k);
        if kinf == 0 || kinf > max_mode as i64 {
            continue;
        }
        let j = lattice.mode_index([-k[0], -k[1], -k[2]]);
        if j < i {
            continue; // conjugate partner already filled
        }
        let damp = (1.0 + FourierLattice::k_sq(k)).powf(-decay / 2.0);
        for c in 0..d {
            let z = Complex64::new(
                rng.standard_normal(i as u64, c as u64),
                rng.standard_normal(i as u64, (c + d) as u64),
            ) * damp;
            u.at_mut(i)[c] = z;
            u.at_mut(j)[c] = z.conj();
        }
    }
    let mut u = leray_project(&u);
    let current = u.norm();
    if current == 0.0 {
        return Err(Error::data(
            "random divergence-free field degenerated to zero".to_string(),
        ));
    }
    u.scale(norm / current);
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::energy;
    use crate::transform::inverse_transform;

    #[test]
    fn taylor_green_2d_has_the_exact_mode_coefficients() {
        let lat = FourierLattice::new(2, 2).unwrap();
        let u = taylor_green(&lat);
        // -cos x1 sin x2 at (1,1): -(1/2)(-i/2) = i/4.
        assert_eq!(u.at_wavevector([1, 1, 0])[0], Complex64::new(0.0, 0.25));
        assert_eq!(u.at_wavevector([1, -1, 0])[0], Complex64::new(0.0, -0.25));
        // sin x1 cos x2 at (1,1): (-i/2)(1/2) = -i/4.
        assert_eq!(u.at_wavevector([1, 1, 0])[1], Complex64::new(0.0, -0.25));
        assert_eq!(u.reality_error(), 0.0);
        assert_eq!(u.divergence_error(), 0.0);
        // Grid values match the closed form.
        let phys = inverse_transform(&u).unwrap();
        let m = lat.grid();
        for p in [0usize, 1, m + 2, 3 * m + 1] {
            let x = lat.grid_point(p);
            assert!((phys.plane(0)[p] + x[0].cos() * x[1].sin()).abs() < 1e-14);
            assert!((phys.plane(1)[p] - x[0].sin() * x[1].cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn taylor_green_energy_matches_quadrature() {
        // Closed form under the normalized measure: mean |u|^2 = 1/2 in
        // both 2-D and 3-D (each squared product of sines/cosines averages
        // to 1/4), so E = 1/4.
        for dim in [2usize, 3] {
            let lat = FourierLattice::new(dim, 2).unwrap();
            let u = taylor_green(&lat);
            let quad = inverse_transform(&u).unwrap().mean_norm_sq() / 2.0;
            let expect = match dim {
                2 => 0.25,
                _ => 0.125, // 3-D: two components, each averaging 1/8
            };
            assert!((energy(&u) - expect).abs() < 1e-14, "dim {dim}");
            assert!((quad - energy(&u)).abs() < 1e-13, "quadrature vs Parseval, dim {dim}");
        }
    }

    #[test]
    fn shear_is_a_single_conjugate_mode_pair() {
        let lat = FourierLattice::new(2, 3).unwrap();
        let u = shear(&lat);
        assert_eq!(u.at_wavevector([0, 1, 0])[0], Complex64::new(0.0, -0.5));
        assert_eq!(u.at_wavevector([0, -1, 0])[0], Complex64::new(0.0, 0.5));
        assert!((u.norm_sq() - 0.5).abs() < 1e-15);
        assert_eq!(u.divergence_error(), 0.0);
    }

    #[test]
    fn random_divfree_is_reproducible_and_well_formed() {
        let lat = FourierLattice::new(2, 8).unwrap();
        let a = random_divfree(&lat, 99, 8, 2.0, 1.0).unwrap();
        let b = random_divfree(&lat, 99, 8, 2.0, 1.0).unwrap();
        assert_eq!(a.coeffs(), b.coeffs());
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert_eq!(a.reality_error(), 0.0);
        assert!(a.divergence_error() < 1e-12 * a.max_abs());
        assert_eq!(a.mean_mode(), vec![Complex64::new(0.0, 0.0); 2]);
        // Different seed, different field.
        let c = random_divfree(&lat, 100, 8, 2.0, 1.0).unwrap();
        assert!(c.sub(&a).norm() > 0.1);
        // Band restriction is honored.
        let banded = random_divfree(&lat, 99, 3, 2.0, 1.0).unwrap();
        for (i, k) in lat.modes() {
            if FourierLattice::k_inf(k) > 3 {
                assert_eq!(banded.at(i), vec![Complex64::new(0.0, 0.0); 2].as_slice());
            }
        }
        assert!(random_divfree(&lat, 1, 9, 2.0, 1.0).is_err());
    }

    #[test]
    fn presets_work_in_3d() {
        let lat = FourierLattice::new(3, 2).unwrap();
        for u in [taylor_green(&lat), shear(&lat)] {
            assert_eq!(u.reality_error(), 0.0);
            assert_eq!(u.divergence_error(), 0.0);
        }
        let r = random_divfree(&lat, 5, 2, 1.0, 2.0).unwrap();
        assert!((r.norm() - 2.0).abs() < 1e-12);
        assert!(r.divergence_error() < 1e-12 * r.max_abs());
    }
}
