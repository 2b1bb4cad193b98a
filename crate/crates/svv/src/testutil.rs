//! Shared helpers for unit tests.

use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::field::SpectralField;
use crate::lattice::FourierLattice;
use crate::rng::CounterRng;

/// Random band-limited real field (reality symmetry holds exactly, no
/// other structure): the raw material for projection-algebra tests.
pub(crate) fn random_real_field(
    lat: &Arc<FourierLattice>,
    ncomp: usize,
    seed: u64,
) -> SpectralField {
    let rng = CounterRng::new(seed);
    let mut u = SpectralField::zeros(lat, ncomp);
    for (i, k) in lat.modes() {
        let neg = [-k[0], -k[1], -k[2]];
        let j = lat.mode_index(neg);
        if j < i {
            continue;
        }
        for c in 0..ncomp {
            let re = rng.standard_normal(i as u64, c as u64);
            let im = if i == j {
                0.0 // self-conjugate mode must be real
            } else {
                rng.standard_normal(i as u64, (c + ncomp) as u64)
            };
            let z = Complex64::new(re, im);
            u.at_mut(i)[c] = z;
            if i != j {
                u.at_mut(j)[c] = z.conj();
            }
        }
    }
    u
}
