//! Truncated cylindrical Wiener forcing and the diffusion coefficients.
//!
//! The stochastic term is sigma(u) dW = sum_{k<=K} sigma_k(u) dW_k with
//! mutually independent scalar Brownian motions W_k. Each sigma_k acts
//! pointwise on the velocity values and must satisfy the growth and
//! Lipschitz contracts
//!
//!   (G)  sum_k |sigma_k(v)|^2      <= D0 (1 + |v|^2),
//!   (L)  sum_k |sigma_k(v) - sigma_k(w)|^2 <= D1 |v - w|^2,
//!
//! for vectors v, w in R^d. The shipped families:
//!
//!   zero              sigma_k = 0
//!   linear            sigma_k(v) = alpha_k v
//!   saturated_linear  sigma_k(v) = alpha_k v / sqrt(1 + |v|^2)
//!   additive_modes    sigma_k = alpha_k g_k(x), a fixed solenoidal (or
//!                     deliberately gradient) trigonometric profile
//!
//! Brownian increments are pre-tabulated at the finest step and indexed
//! by a counter generator keyed on (seed, mode, step), so a coarse run
//! with step r*dt_base consumes exact sums of r base increments and every
//! member of a refinement ladder rides the same path.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{PhysicalField, SpectralField};
use crate::lattice::FourierLattice;
use crate::operators::galerkin_project;
use crate::rng::CounterRng;
use crate::transform::{forward_transform, inverse_transform};

/// Orientation of the fixed profiles g_k of the additive family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdditiveDirection {
    /// Unit vector perpendicular to the wavevector: g_k is divergence-free
    /// and survives the Leray projection intact.
    Solenoidal,
    /// Unit vector along the wavevector: g_k is a pure gradient and the
    /// projection annihilates it. Useful as a negative control.
    Gradient,
}

/// Diffusion family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseFamily {
    Zero,
    Linear,
    SaturatedLinear,
    AdditiveModes,
}

/// One fixed profile of the additive family: g(x) = sqrt(2) cos(kappa.x) dir,
/// which has unit L^2 norm under the normalized measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdditiveMode {
    pub kappa: [i64; 3],
    pub dir: [f64; 3],
}

/// A diffusion coefficient family together with its declared contract
/// constants. Immutable after construction; evaluation is pure.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    family: NoiseFamily,
    alphas: Vec<f64>,
    modes: Vec<AdditiveMode>,
    dim: usize,
    d0: f64,
    d1: f64,
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return Err(Error::config(
            "noise model needs at least one mode amplitude",
        ));
    }
    if alphas.iter().any(|a| !a.is_finite()) {
        return Err(Error::config("noise amplitudes must be finite"));
    }
    Ok(())
}

/// Enumerates the first `count` distinct nonzero wavevectors in dimension
/// `dim`, one per +/- pair (the representative has positive leading nonzero
/// entry), ordered by (|kappa|^2, lexicographic).
fn enumerate_wavevectors(dim: usize, count: usize) -> Vec<[i64; 3]> {
    let mut shell = 1i64;
    loop {
        let mut found: Vec<[i64; 3]> = Vec::new();
        let range = -shell..=shell;
        for k1 in range.clone() {
            for k2 in range.clone() {
                let k3s: Vec<i64> = if dim == 3 { range.clone().collect() } else { vec![0] };
                for k3 in k3s {
                    let k = [k1, k2, k3];
                    if k == [0, 0, 0] {
                        continue;
                    }
                    let lead = k.iter().find(|v| **v != 0).copied().unwrap();
                    if lead < 0 {
                        continue;
                    }
                    found.push(k);
                }
            }
        }
        found.sort_by_key(|k| (k[0] * k[0] + k[1] * k[1] + k[2] * k[2], k[0], k[1], k[2]));
        if found.len() >= count {
            found.truncate(count);
            return found;
        }
        shell += 1;
    }
}

fn unit_direction(kappa: [i64; 3], dim: usize, direction: AdditiveDirection) -> [f64; 3] {
    let kf = [kappa[0] as f64, kappa[1] as f64, kappa[2] as f64];
    let norm = (kf[0] * kf[0] + kf[1] * kf[1] + kf[2] * kf[2]).sqrt();
    match direction {
        AdditiveDirection::Gradient => [kf[0] / norm, kf[1] / norm, kf[2] / norm],
        AdditiveDirection::Solenoidal if dim == 2 => [-kf[1] / norm, kf[0] / norm, 0.0],
        AdditiveDirection::Solenoidal => {
            // Cross kappa with the axis of smallest |kappa_i| to get a
            // nonzero perpendicular vector, then normalize.
            let mut axis = 0;
            for i in 1..3 {
                if kf[i].abs() < kf[axis].abs() {
                    axis = i;
                }
            }
            let mut a = [0.0; 3];
            a[axis] = 1.0;
            let c = [
                kf[1] * a[2] - kf[2] * a[1],
                kf[2] * a[0] - kf[0] * a[2],
                kf[0] * a[1] - kf[1] * a[0],
            ];
            let cn = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
            [c[0] / cn, c[1] / cn, c[2] / cn]
        }
    }
}

impl NoiseModel {
    pub fn zero() -> Self {
        NoiseModel {
            family: NoiseFamily::Zero,
            alphas: Vec::new(),
            modes: Vec::new(),
            dim: 0,
            d0: 0.0,
            d1: 0.0,
        }
    }

    pub fn linear(alphas: Vec<f64>) -> Result<Self> {
        check_alphas(&alphas)?;
        let s: f64 = alphas.iter().map(|a| a * a).sum();
        Ok(NoiseModel {
            family: NoiseFamily::Linear,
            alphas,
            modes: Vec::new(),
            dim: 0,
            d0: s,
            d1: s,
        })
    }

    pub fn saturated_linear(alphas: Vec<f64>) -> Result<Self> {
        check_alphas(&alphas)?;
        // |v|^2/(1+|v|^2) <= 1 gives the growth constant; the saturation
        // map v -> v/sqrt(1+|v|^2) is 1-Lipschitz.
        let s: f64 = alphas.iter().map(|a| a * a).sum();
        Ok(NoiseModel {
            family: NoiseFamily::SaturatedLinear,
            alphas,
            modes: Vec::new(),
            dim: 0,
            d0: s,
            d1: s,
        })
    }

    pub fn additive_modes(dim: usize, alphas: Vec<f64>, direction: AdditiveDirection) -> Result<Self> {
        check_alphas(&alphas)?;
        if dim != 2 && dim != 3 {
            return Err(Error::config(format!(
                "additive noise dimension must be 2 or 3, got {dim}"
            )));
        }
        let modes: Vec<AdditiveMode> = enumerate_wavevectors(dim, alphas.len())
            .into_iter()
            .map(|kappa| AdditiveMode {
                kappa,
                dir: unit_direction(kappa, dim, direction),
            })
            .collect();
        // |g_k(x)|^2 = 2 cos^2(kappa.x) <= 2 pointwise; sigma does not
        // depend on u at all, so the Lipschitz constant is zero.
        let s: f64 = alphas.iter().map(|a| a * a).sum();
        Ok(NoiseModel {
            family: NoiseFamily::AdditiveModes,
            alphas,
            modes,
            dim,
            d0: 2.0 * s,
            d1: 0.0,
        })
    }

    /// Amplitudes alpha_k = (k+1)^(-exponent), k = 0..count: a summable
    /// sequence mirroring the weight decay of the driving space.
    pub fn decay_alphas(count: usize, exponent: f64) -> Vec<f64> {
        (1..=count).map(|k| (k as f64).powf(-exponent)).collect()
    }

    pub fn family(&self) -> NoiseFamily {
        self.family
    }

    pub fn num_modes(&self) -> usize {
        self.alphas.len()
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn additive_shapes(&self) -> &[AdditiveMode] {
        &self.modes
    }

    pub fn d0(&self) -> f64 {
        self.d0
    }

    pub fn d1(&self) -> f64 {
        self.d1
    }

    pub fn is_zero(&self) -> bool {
        self.family == NoiseFamily::Zero
    }

    pub fn sum_alpha_sq(&self) -> f64 {
        self.alphas.iter().map(|a| a * a).sum()
    }

    /// Pointwise sigma_k at velocity value `v` and position `x`, written
    /// into `out` (length = v's dimension).
    pub fn sigma_point(&self, k: usize, v: &[f64], x: &[f64; 3], out: &mut [f64]) {
        debug_assert!(k < self.alphas.len() || self.is_zero());
        let d = v.len();
        match self.family {
            NoiseFamily::Zero => out[..d].fill(0.0),
            NoiseFamily::Linear => {
                for i in 0..d {
                    out[i] = self.alphas[k] * v[i];
                }
            }
            NoiseFamily::SaturatedLinear => {
                let nsq: f64 = v.iter().map(|a| a * a).sum();
                let f = self.alphas[k] / (1.0 + nsq).sqrt();
                for i in 0..d {
                    out[i] = f * v[i];
                }
            }
            NoiseFamily::AdditiveModes => {
                let m = &self.modes[k];
                let phase = m.kappa[0] as f64 * x[0] + m.kappa[1] as f64 * x[1] + m.kappa[2] as f64 * x[2];
                let f = self.alphas[k] * std::f64::consts::SQRT_2 * phase.cos();
                for i in 0..d {
                    out[i] = f * m.dir[i];
                }
            }
        }
    }

    /// Full physical-space evaluation of sigma_k on a velocity field.
    pub fn evaluate_sigma(&self, u: &PhysicalField, k: usize) -> Result<PhysicalField> {
        if !self.is_zero() && k >= self.alphas.len() {
            return Err(Error::data(format!(
                "noise mode index {k} out of range (K = {})",
                self.alphas.len()
            )));
        }
        let lat = u.lattice();
        let d = u.ncomp();
        let mut out = PhysicalField::zeros(lat, d);
        let np = lat.num_points();
        let mut val = vec![0.0; d];
        let mut s = vec![0.0; d];
        for p in 0..np {
            for c in 0..d {
                val[c] = u.plane(c)[p];
            }
            let x = lat.grid_point(p);
            self.sigma_point(k, &val, &x, &mut s);
            for c in 0..d {
                out.plane_mut(c)[p] = s[c];
            }
        }
        Ok(out)
    }

    /// Spectral coefficients of the fixed profile g_k on `lat`, already in
    /// Leray-projected form: the cosine occupies the +/- kappa pair, and a
    /// gradient-oriented profile projects to zero.
    fn projected_additive_profile(&self, lat: &std::sync::Arc<FourierLattice>, k: usize) -> SpectralField {
        let mut g = SpectralField::zeros(lat, lat.dim());
        let m = &self.modes[k];
        if !lat.contains(m.kappa) {
            return g;
        }
        let kf = [m.kappa[0] as f64, m.kappa[1] as f64, m.kappa[2] as f64];
        let ksq = kf[0] * kf[0] + kf[1] * kf[1] + kf[2] * kf[2];
        let dot = m.dir[0] * kf[0] + m.dir[1] * kf[1] + m.dir[2] * kf[2];
        let half = std::f64::consts::SQRT_2 / 2.0;
        for c in 0..lat.dim() {
            let amp = half * (m.dir[c] - dot * kf[c] / ksq);
            let v = Complex64::new(amp, 0.0);
            g.set(m.kappa, c, v);
            g.set([-m.kappa[0], -m.kappa[1], -m.kappa[2]], c, v);
        }
        g
    }
}

/// All noise contributions of one time step, produced together so the
/// saturation transform runs once.
#[derive(Debug)]
pub struct NoiseTerms {
    /// sum_k P_n sigma_k(u) DeltaW_k over the step.
    pub increment: SpectralField,
    /// sum_k ||P_n sigma_k(u)||^2, the (un-halved) Ito rate per unit time.
    pub ito_rate: f64,
    /// <u, increment>: the martingale term's contribution to the balance.
    pub martingale_increment: f64,
}

/// Pre-tabulated Brownian increments at the finest resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    seed: u64,
    num_modes: usize,
    dt_base: f64,
    steps: usize,
    /// Step-major: increments[j * K + k] = DeltaW_k(j).
    increments: Vec<f64>,
}

impl WienerPath {
    /// Tabulates ceil(T / dt_base) increments per mode. Increment (k, j) is
    /// drawn at counter (k, j) of the seed's generator, independent of T.
    pub fn sample(seed: u64, num_modes: usize, dt_base: f64, t_end: f64) -> Result<Self> {
        if !(dt_base > 0.0) || !(t_end > 0.0) {
            return Err(Error::config(format!(
                "Wiener path needs dt_base > 0 and T > 0, got dt_base = {dt_base}, T = {t_end}"
            )));
        }
        let ratio = t_end / dt_base;
        let steps = if (ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0) {
            ratio.round() as usize
        } else {
            ratio.ceil() as usize
        };
        let rng = CounterRng::new(seed);
        let sqrt_dt = dt_base.sqrt();
        let mut increments = vec![0.0; steps * num_modes];
        for j in 0..steps {
            for k in 0..num_modes {
                increments[j * num_modes + k] = sqrt_dt * rng.standard_normal(k as u64, j as u64);
            }
        }
        Ok(WienerPath {
            seed,
            num_modes,
            dt_base,
            steps,
            increments,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn dt_base(&self) -> f64 {
        self.dt_base
    }

    /// Number of base steps in the table.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn increment(&self, k: usize, j: usize) -> f64 {
        self.increments[j * self.num_modes + k]
    }

    /// Increment of W_k over coarse step j of width r * dt_base: the exact
    /// sum of the r base increments it covers, so refinement ladders stay
    /// on one path.
    pub fn coarse_increment(&self, k: usize, j: usize, r: usize) -> Result<f64> {
        let start = j * r;
        if k >= self.num_modes || start + r > self.steps || r == 0 {
            return Err(Error::data(format!(
                "path increment out of range: mode {k}, coarse step {j}, factor {r}, table holds {} base steps of {} modes",
                self.steps, self.num_modes
            )));
        }
        let mut s = 0.0;
        for i in 0..r {
            s += self.increments[(start + i) * self.num_modes + k];
        }
        Ok(s)
    }
}

/// Computes the projected noise increment together with the Ito rate and
/// martingale pairing for coarse step `step` of width `r * dt_base`.
///
/// The projection P_n is onto divergence-free fields with modes on u's own
/// lattice. Families that are scalar multiples of a single field (linear,
/// saturated) share one projected profile; the additive family writes its
/// two-coefficient profiles directly, so no transform runs at all.
pub fn noise_terms(
    model: &NoiseModel,
    u: &SpectralField,
    path: &WienerPath,
    step: usize,
    r: usize,
) -> Result<NoiseTerms> {
    let lat = u.lattice();
    if model.is_zero() {
        return Ok(NoiseTerms {
            increment: SpectralField::zeros(lat, u.ncomp()),
            ito_rate: 0.0,
            martingale_increment: 0.0,
        });
    }
    if path.num_modes() < model.num_modes() {
        return Err(Error::data(format!(
            "path carries {} modes but the noise model needs {}",
            path.num_modes(),
            model.num_modes()
        )));
    }
    let n = lat.cutoff();
    match model.family {
        NoiseFamily::Zero => unreachable!(),
        NoiseFamily::Linear | NoiseFamily::SaturatedLinear => {
            // sigma_k(u) = alpha_k h(u) with a family-specific h; all modes
            // share the single projected field P_n h(u).
            let h = match model.family {
                NoiseFamily::Linear => galerkin_project(u, n),
                _ => {
                    let phys = inverse_transform(u)?;
                    let sat = phys.map_points(u.ncomp(), |v, out| {
                        let nsq: f64 = v.iter().map(|a| a * a).sum();
                        let f = 1.0 / (1.0 + nsq).sqrt();
                        for (o, vi) in out.iter_mut().zip(v) {
                            *o = f * vi;
                        }
                    });
                    galerkin_project(&forward_transform(&sat), n)
                }
            };
            let mut weight = 0.0;
            for (k, a) in model.alphas.iter().enumerate() {
                weight += a * path.coarse_increment(k, step, r)?;
            }
            let mut increment = h.clone();
            increment.scale(weight);
            let ito_rate = model.sum_alpha_sq() * h.norm_sq();
            let martingale_increment = u.inner(&increment);
            Ok(NoiseTerms {
                increment,
                ito_rate,
                martingale_increment,
            })
        }
        NoiseFamily::AdditiveModes => {
            let mut increment = SpectralField::zeros(lat, u.ncomp());
            let mut ito_rate = 0.0;
            let mut martingale_increment = 0.0;
            for (k, a) in model.alphas.iter().enumerate() {
                let g = model.projected_additive_profile(lat, k);
                let gnorm_sq = g.norm_sq();
                if gnorm_sq == 0.0 {
                    path.coarse_increment(k, step, r)?;
                    continue;
                }
                let dw = path.coarse_increment(k, step, r)?;
                increment.axpy(a * dw, &g);
                ito_rate += a * a * gnorm_sq;
                martingale_increment += a * dw * u.inner(&g);
            }
            Ok(NoiseTerms {
                increment,
                ito_rate,
                martingale_increment,
            })
        }
    }
}

/// The projected increment alone; see [`noise_terms`].
pub fn projected_noise_increment(
    model: &NoiseModel,
    u: &SpectralField,
    path: &WienerPath,
    step: usize,
    r: usize,
) -> Result<SpectralField> {
    Ok(noise_terms(model, u, path, step, r)?.increment)
}

/// sum_k ||P_n sigma_k(u)||^2 with P_n the projection onto u's lattice.
pub fn ito_energy_rate(model: &NoiseModel, u: &SpectralField) -> Result<f64> {
    // A one-step path with unit horizon only supplies increments, which the
    // rate does not consume; reuse the shared computation with weight 0.
    let path = WienerPath::sample(0, model.num_modes(), 1.0, 1.0)?;
    Ok(noise_terms(model, u, &path, 0, 1)?.ito_rate)
}

/// Empirical contract check report.
#[derive(Debug, Clone)]
pub struct NoiseContractReport {
    pub d0_declared: f64,
    pub d1_declared: f64,
    pub d0_hat: f64,
    pub d1_hat: f64,
    pub pass: bool,
}

/// Estimates the growth and Lipschitz constants over a random cloud of
/// velocity values (and positions, for x-dependent families) and compares
/// them against the declared constants.
///
/// The cloud spans |v| from ~0.1 to 1e8 so saturating quotients approach
/// their suprema; quotients at machine-coincident pairs are skipped.
pub fn verify_noise_contract(
    model: &NoiseModel,
    dim: usize,
    sample_count: usize,
    seed: u64,
) -> Result<NoiseContractReport> {
    if sample_count < 100 {
        return Err(Error::config(format!(
            "contract verification needs at least 100 samples, got {sample_count}"
        )));
    }
    if dim != 2 && dim != 3 {
        return Err(Error::config(format!(
            "contract verification dimension must be 2 or 3, got {dim}"
        )));
    }
    let rng = CounterRng::new(seed);
    let kk = model.num_modes();
    let mut d0_hat: f64 = 0.0;
    let mut d1_hat: f64 = 0.0;
    let mut v = vec![0.0; dim];
    let mut w = vec![0.0; dim];
    let mut sv = vec![0.0; dim];
    let mut sw = vec![0.0; dim];
    let tau = std::f64::consts::TAU;
    for s in 0..sample_count as u64 {
        // Log-uniform magnitude ladder, plus a deterministic far-field
        // probe every 16th sample to pin asymptotic quotients.
        let scale = if s % 16 == 0 {
            1e8
        } else {
            10f64.powf(3.0 * rng.uniform(s, 0, 0) - 1.0)
        };
        for i in 0..dim {
            v[i] = scale * rng.standard_normal(s, 10 + i as u64);
            w[i] = rng.standard_normal(s, 20 + i as u64);
        }
        let x = [
            tau * rng.uniform(s, 1, 0),
            tau * rng.uniform(s, 2, 0),
            if dim == 3 { tau * rng.uniform(s, 3, 0) } else { 0.0 },
        ];
        let vsq: f64 = v.iter().map(|a| a * a).sum();
        let dsq: f64 = v.iter().zip(&w).map(|(a, b)| (a - b) * (a - b)).sum();
        let mut growth = 0.0;
        let mut lip = 0.0;
        for k in 0..kk {
            model.sigma_point(k, &v, &x, &mut sv);
            model.sigma_point(k, &w, &x, &mut sw);
            growth += sv.iter().map(|a| a * a).sum::<f64>();
            lip += sv.iter().zip(&sw).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        d0_hat = d0_hat.max(growth / (1.0 + vsq));
        if dsq > 1e-24 {
            d1_hat = d1_hat.max(lip / dsq);
        }
    }
    let pad = 1.0 + 1e-12;
    let pass = d0_hat <= model.d0() * pad + f64::MIN_POSITIVE && d1_hat <= model.d1() * pad + f64::MIN_POSITIVE;
    Ok(NoiseContractReport {
        d0_declared: model.d0(),
        d1_declared: model.d1(),
        d0_hat,
        d1_hat,
        pass,
    })
}
