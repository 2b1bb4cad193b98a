//! The truncated Fourier lattice underlying every field in the crate.
//!
//! A lattice fixes the space dimension d (2 or 3), the spectral cutoff n,
//! and the number of physical grid points per axis M. Spectral data lives
//! on the cube of integer wavevectors |k|_inf <= n; physical data lives on
//! the uniform grid x_j = 2*pi*j/M. The grid must satisfy M >= 2n+2 so the
//! cube is resolved, and M >= 3n+1 whenever quadratic products are formed
//! pointwise (that sizing makes the products alias-free). The default grid
//! is the smallest 5-smooth integer >= 3n+1, which keeps the FFTs on fast
//! code paths.
//!
//! Wavevectors are enumerated lexicographically, k1 major, each component
//! running -n..=n. That ordering is part of the on-disk snapshot format,
//! so it must never change.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Smallest integer >= n with no prime factor larger than 5.
pub fn next_fast_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2usize, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Discrete torus: wavevector cube |k|_inf <= cutoff plus a uniform grid.
pub struct FourierLattice {
    dim: usize,
    cutoff: usize,
    grid: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FourierLattice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FourierLattice")
            .field("dim", &self.dim)
            .field("cutoff", &self.cutoff)
            .field("grid", &self.grid)
            .finish()
    }
}

impl PartialEq for FourierLattice {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.cutoff == other.cutoff && self.grid == other.grid
    }
}
impl Eq for FourierLattice {}

impl FourierLattice {
    /// Lattice with the default (dealiasing-safe) grid.
    pub fn new(dim: usize, cutoff: usize) -> Result<Arc<Self>> {
        let grid = next_fast_size(3 * cutoff + 1);
        Self::with_grid(dim, cutoff, grid)
    }

    /// Lattice with an explicit grid size.
    pub fn with_grid(dim: usize, cutoff: usize, grid: usize) -> Result<Arc<Self>> {
        let mut violations = Vec::new();
        if !(dim == 2 || dim == 3) {
            violations.push(format!("lattice dimension must be 2 or 3, got {dim}"));
        }
        if cutoff == 0 {
            violations.push("spectral cutoff must be at least 1".to_string());
        }
        if grid < 2 * cutoff + 2 {
            violations.push(format!(
                "grid must have at least 2n+2 = {} points per axis to resolve cutoff {}, got {}",
                2 * cutoff + 2,
                cutoff,
                grid
            ));
        }
        if !violations.is_empty() {
            return Err(Error::Config(violations));
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(grid);
        let inv = planner.plan_fft_inverse(grid);
        Ok(Arc::new(FourierLattice {
            dim,
            cutoff,
            grid,
            fwd,
            inv,
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Grid points per axis.
    pub fn grid(&self) -> usize {
        self.grid
    }

    /// Points per axis of the wavevector cube: 2n+1.
    pub fn side(&self) -> usize {
        2 * self.cutoff + 1
    }

    /// Total number of lattice wavevectors.
    pub fn num_modes(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    /// Total number of grid points.
    pub fn num_points(&self) -> usize {
        self.grid.pow(self.dim as u32)
    }

    /// True when pointwise quadratic products of cutoff-n fields are exact.
    pub fn dealiased(&self) -> bool {
        self.grid >= 3 * self.cutoff + 1
    }

    /// Flat index of wavevector k (unused components of k must be 0).
    #[inline]
    pub fn mode_index(&self, k: [i64; 3]) -> usize {
        let n = self.cutoff as i64;
        debug_assert!(self.contains(k), "wavevector {k:?} outside lattice");
        let side = self.side();
        let mut idx = 0usize;
        for &ki in k.iter().take(self.dim) {
            idx = idx * side + (ki + n) as usize;
        }
        idx
    }

    /// Wavevector for a flat index (inverse of `mode_index`).
    #[inline]
    pub fn wavevector(&self, mut idx: usize) -> [i64; 3] {
        let n = self.cutoff as i64;
        let side = self.side();
        let mut k = [0i64; 3];
        for a in (0..self.dim).rev() {
            k[a] = (idx % side) as i64 - n;
            idx /= side;
        }
        k
    }

    #[inline]
    pub fn contains(&self, k: [i64; 3]) -> bool {
        let n = self.cutoff as i64;
        k.iter().take(self.dim).all(|&ki| ki.abs() <= n)
            && k.iter().skip(self.dim).all(|&ki| ki == 0)
    }

    /// Iterates (flat index, wavevector) in lexicographic order.
    pub fn modes(&self) -> impl Iterator<Item = (usize, [i64; 3])> + '_ {
        (0..self.num_modes()).map(move |i| (i, self.wavevector(i)))
    }

    /// |k|^2 as a float.
    #[inline]
    pub fn k_sq(k: [i64; 3]) -> f64 {
        (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64
    }

    /// |k|_inf.
    #[inline]
    pub fn k_inf(k: [i64; 3]) -> i64 {
        k.iter().map(|ki| ki.abs()).max().unwrap()
    }

    /// Physical grid coordinate of multi-index j (row-major).
    pub fn grid_point(&self, flat: usize) -> [f64; 3] {
        let m = self.grid;
        let h = 2.0 * std::f64::consts::PI / m as f64;
        let mut x = [0.0; 3];
        let mut rest = flat;
        for a in (0..self.dim).rev() {
            x[a] = (rest % m) as f64 * h;
            rest /= m;
        }
        x
    }

    pub(crate) fn fwd_plan(&self) -> &Arc<dyn Fft<f64>> {
        &self.fwd
    }

    pub(crate) fn inv_plan(&self) -> &Arc<dyn Fft<f64>> {
        &self.inv
    }

    /// FFT bin of wavevector component ki (negative frequencies wrap).
    #[inline]
    pub(crate) fn bin(&self, ki: i64) -> usize {
        if ki >= 0 {
            ki as usize
        } else {
            (self.grid as i64 + ki) as usize
        }
    }

    /// Flat FFT-buffer index of wavevector k.
    #[inline]
    pub(crate) fn bin_index(&self, k: [i64; 3]) -> usize {
        let mut idx = 0usize;
        for &ki in k.iter().take(self.dim) {
            idx = idx * self.grid + self.bin(ki);
        }
        idx
    }
}
