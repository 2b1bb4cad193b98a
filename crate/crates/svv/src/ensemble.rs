//! Monte-Carlo ensembles and resolution-ladder experiments.
//!
//! Three statistical objects live here. Empirical Young measures: per-point
//! velocity histograms over noise realizations at fixed resolution, the
//! computable surrogate of the parametrized measures a measure-valued
//! solution carries. Cesaro means over a resolution ladder coupled through
//! one Brownian path: their successive averages settle down as the ladder
//! grows, which is the observable form of pointwise convergence along a
//! single noise sample. Weak-strong comparison: distances and relative
//! energy between ladder runs and a resolved reference on the same path,
//! with the relative energy held under an exponential Gronwall envelope
//! whose rate comes from the reference gradient and the noise Lipschitz
//! constant.
//!
//! Everything is a pure function of (master seed, configs): members draw
//! derived seeds, aggregation uses fixed summation orders (index order for
//! prefixes, a pairwise tree for large means), and parallel scheduling
//! cannot change any result.

use rayon::prelude::*;

use crate::diagnostics::{energy, gronwall_envelope, GronwallReport};
use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::lattice::{next_fast_size, FourierLattice};
use crate::noise::{NoiseModel, WienerPath};
use crate::operators::{gradient, zero_pad_embed};
use crate::rng::derive_seed;
use crate::scheme::{initial_state, run, Integrator, RunOptions, SchemeConfig, SolverState};
use crate::transform::inverse_transform;

/// A space-time sample point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probe {
    pub t: f64,
    pub x: [f64; 3],
}

/// Monte-Carlo ensemble parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub members: usize,
    pub master_seed: u64,
    pub histogram_bins: usize,
    pub probes: Vec<Probe>,
}

impl EnsembleConfig {
    pub fn violations(&self, cfg: &SchemeConfig) -> Vec<String> {
        let mut v = Vec::new();
        if self.members == 0 {
            v.push("ensemble needs at least one member".to_string());
        }
        if self.histogram_bins == 0 {
            v.push("histogram needs at least one bin".to_string());
        }
        for (i, p) in self.probes.iter().enumerate() {
            if !(p.t >= 0.0) || p.t > cfg.t_end * (1.0 + 1e-12) {
                v.push(format!(
                    "probe {i} time {} outside the horizon [0, {}]",
                    p.t, cfg.t_end
                ));
            }
            if p.x.iter().any(|c| !c.is_finite()) {
                v.push(format!("probe {i} position is not finite"));
            }
        }
        v
    }

    pub fn validate(&self, cfg: &SchemeConfig) -> Result<()> {
        let v = self.violations(cfg);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

/// Result of one ensemble sweep. Member-indexed vectors cover surviving
/// members only, in member order; `failures` records the excluded ones.
#[derive(Debug)]
pub struct EnsembleOutput {
    /// Seeds actually used, per surviving member.
    pub member_seeds: Vec<u64>,
    /// Final-time fields.
    pub finals: Vec<SpectralField>,
    /// Final-time energies.
    pub final_energies: Vec<f64>,
    /// sup over recorded times of the L2 norm, per member.
    pub sup_norms: Vec<f64>,
    /// probe_samples[p][i] = velocity components of member i at probe p.
    pub probe_samples: Vec<Vec<Vec<f64>>>,
    /// (member index, diagnostic) for members excluded by a numerical abort.
    pub failures: Vec<(usize, String)>,
    pub warnings: Vec<String>,
}

impl EnsembleOutput {
    /// Empirical moment E[sup_t ||u||^p] over surviving members.
    pub fn sup_norm_moment(&self, p: f64) -> f64 {
        let m = self.sup_norms.len() as f64;
        self.sup_norms.iter().map(|s| s.powf(p)).sum::<f64>() / m
    }

    /// Mean final energy with its Monte-Carlo standard error.
    pub fn mean_final_energy(&self) -> (f64, f64) {
        let m = self.final_energies.len() as f64;
        let mean = self.final_energies.iter().sum::<f64>() / m;
        if self.final_energies.len() < 2 {
            return (mean, 0.0);
        }
        let var = self
            .final_energies
            .iter()
            .map(|e| (e - mean) * (e - mean))
            .sum::<f64>()
            / (m - 1.0);
        (mean, (var / m).sqrt())
    }
}

/// Runs M independent members with seeds derived from the master seed,
/// in parallel. A member that aborts numerically is excluded with a
/// warning; more than 10% exclusions fail the whole experiment.
pub fn run_ensemble(
    ens: &EnsembleConfig,
    cfg: &SchemeConfig,
    noise: &NoiseModel,
    u0: &SpectralField,
) -> Result<EnsembleOutput> {
    ens.validate(cfg)?;
    cfg.validate(noise)?;

    struct MemberResult {
        seed: u64,
        outcome: std::result::Result<(SpectralField, f64, f64, Vec<Vec<f64>>), String>,
    }

    let results: Vec<MemberResult> = (0..ens.members)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(ens.master_seed, 1, i as u64);
            let outcome = (|| -> Result<(SpectralField, f64, f64, Vec<Vec<f64>>)> {
                let path = WienerPath::sample(seed, noise.num_modes(), cfg.dt, cfg.t_end.max(cfg.dt))?;
                let s0 = initial_state(u0, cfg)?;
                let mut sup = s0.u.norm();
                let mut samples: Vec<Vec<f64>> = vec![Vec::new(); ens.probes.len()];
                for (p, probe) in ens.probes.iter().enumerate() {
                    if probe.t <= 1e-12 {
                        samples[p] = s0.u.eval_at(probe.x);
                    }
                }
                let probes = &ens.probes;
                let out = {
                    let sup_ref = &mut sup;
                    let samples_ref = &mut samples;
                    let opts = RunOptions {
                        on_step: Some(Box::new(move |s: &SolverState, _, _| {
                            *sup_ref = sup_ref.max(s.u.norm());
                            for (p, probe) in probes.iter().enumerate() {
                                if samples_ref[p].is_empty() && s.time >= probe.t - 1e-12 {
                                    samples_ref[p] = s.u.eval_at(probe.x);
                                }
                            }
                            Ok(())
                        })),
                        ..RunOptions::default()
                    };
                    run(cfg, noise, &path, u0, opts)?
                };
                let e = energy(&out.state.u);
                Ok((out.state.u, e, sup, samples))
            })();
            MemberResult {
                seed,
                outcome: outcome.map_err(|e| e.to_string()),
            }
        })
        .collect();

    let mut out = EnsembleOutput {
        member_seeds: Vec::new(),
        finals: Vec::new(),
        final_energies: Vec::new(),
        sup_norms: Vec::new(),
        probe_samples: vec![Vec::new(); ens.probes.len()],
        failures: Vec::new(),
        warnings: Vec::new(),
    };
    for (i, r) in results.into_iter().enumerate() {
        match r.outcome {
            Ok((u, e, sup, samples)) => {
                out.member_seeds.push(r.seed);
                out.finals.push(u);
                out.final_energies.push(e);
                out.sup_norms.push(sup);
                for (p, s) in samples.into_iter().enumerate() {
                    out.probe_samples[p].push(s);
                }
            }
            Err(msg) => {
                out.warnings.push(format!("member {i} excluded: {msg}"));
                out.failures.push((i, msg));
            }
        }
    }
    if out.failures.len() * 10 > ens.members {
        return Err(Error::Experiment(format!(
            "{} of {} ensemble members aborted",
            out.failures.len(),
            ens.members
        )));
    }
    Ok(out)
}

/// Pairwise-tree sum: a fixed association order, so the result is
/// reproducible no matter how members were scheduled, and rounding stays
/// O(log M) instead of O(M).
fn tree_sum(fields: &[SpectralField]) -> SpectralField {
    match fields.len() {
        1 => fields[0].clone(),
        n => {
            let mut left = tree_sum(&fields[..n / 2]);
            left.add_assign(&tree_sum(&fields[n / 2..]));
            left
        }
    }
}

/// Ensemble mean field (pairwise-tree reduction).
pub fn mean_field(fields: &[SpectralField]) -> Result<SpectralField> {
    if fields.is_empty() {
        return Err(Error::data("mean of an empty field list"));
    }
    for f in &fields[1..] {
        crate::field::ensure_same_shape(f, &fields[0])?;
    }
    let mut s = tree_sum(fields);
    s.scale(1.0 / fields.len() as f64);
    Ok(s)
}

/// Histogram of one velocity component over the ensemble. Bins keep the
/// sums and squared sums of their samples, so low moments of the empirical
/// measure are exact, not bin-center approximations.
#[derive(Debug, Clone)]
pub struct ComponentHistogram {
    /// bins + 1 monotone edges; equal lo = hi collapses to one bin.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub sums: Vec<f64>,
    pub sum_squares: Vec<f64>,
}

impl ComponentHistogram {
    fn build(values: &[f64], bins: usize) -> Self {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            return ComponentHistogram {
                edges: vec![lo, hi],
                counts: vec![values.len()],
                sums: vec![values.iter().sum()],
                sum_squares: vec![values.iter().map(|v| v * v).sum()],
            };
        }
        let width = (hi - lo) / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|j| lo + j as f64 * width).collect();
        let mut counts = vec![0usize; bins];
        let mut sums = vec![0.0; bins];
        let mut sum_squares = vec![0.0; bins];
        for &v in values {
            let j = (((v - lo) / width) as usize).min(bins - 1);
            counts[j] += 1;
            sums[j] += v;
            sum_squares[j] += v * v;
        }
        ComponentHistogram {
            edges,
            counts,
            sums,
            sum_squares,
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn occupied_bins(&self) -> usize {
        self.counts.iter().filter(|c| **c > 0).count()
    }

    pub fn mean(&self) -> f64 {
        self.sums.iter().sum::<f64>() / self.total() as f64
    }

    pub fn second_moment(&self) -> f64 {
        self.sum_squares.iter().sum::<f64>() / self.total() as f64
    }
}

/// Per-component empirical distribution of u(t, x) over the ensemble.
#[derive(Debug, Clone)]
pub struct YoungMeasureHistogram {
    pub components: Vec<ComponentHistogram>,
}

/// Builds the histogram surrogate of the velocity distribution at a probe
/// from per-member component samples.
pub fn empirical_young_measure(samples: &[Vec<f64>], bins: usize) -> Result<YoungMeasureHistogram> {
    if samples.len() < 2 {
        return Err(Error::data(
            "an empirical measure needs at least two samples",
        ));
    }
    if bins == 0 {
        return Err(Error::config("histogram needs at least one bin"));
    }
    let d = samples[0].len();
    if samples.iter().any(|s| s.len() != d) {
        return Err(Error::data("probe samples disagree on dimension"));
    }
    let components = (0..d)
        .map(|c| {
            let values: Vec<f64> = samples.iter().map(|s| s[c]).collect();
            ComponentHistogram::build(&values, bins)
        })
        .collect();
    Ok(YoungMeasureHistogram { components })
}

/// Exact 1-Wasserstein distance between two empirical measures on the line.
/// Equal sizes pair sorted samples; unequal sizes integrate |F_a - F_b|
/// between breakpoints, which is the same functional evaluated exactly.
pub fn wasserstein1_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::data("Wasserstein distance of an empty sample set"));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    if sa.len() == sb.len() {
        let n = sa.len();
        return Ok(sa
            .iter()
            .zip(&sb)
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / n as f64);
    }
    // CDF form: F_a - F_b is piecewise constant between pooled sample
    // points; integrate its absolute value.
    let mut points: Vec<f64> = sa.iter().chain(sb.iter()).cloned().collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let mut ia = 0usize;
    let mut ib = 0usize;
    let mut dist = 0.0;
    for w in points.windows(2) {
        while ia < sa.len() && sa[ia] <= w[0] {
            ia += 1;
        }
        while ib < sb.len() && sb[ib] <= w[0] {
            ib += 1;
        }
        let fa = ia as f64 / na;
        let fb = ib as f64 / nb;
        dist += (fa - fb).abs() * (w[1] - w[0]);
    }
    Ok(dist)
}

/// Embeds both fields on the finer of their lattices.
fn common_pair(a: &SpectralField, b: &SpectralField) -> Result<(SpectralField, SpectralField)> {
    if a.lattice().cutoff() >= b.lattice().cutoff() {
        Ok((a.clone(), zero_pad_embed(b, a.lattice())?))
    } else {
        Ok((zero_pad_embed(a, b.lattice())?, b.clone()))
    }
}

/// L2 distance via Parseval: exact, no quadrature involved.
pub fn l2_distance(a: &SpectralField, b: &SpectralField) -> Result<f64> {
    let (a, b) = common_pair(a, b)?;
    Ok(a.sub(&b).norm())
}

/// Default quadrature grid for the L1 integrand |a - b|, which is not
/// band-limited: its kinks make the rectangle rule converge like h^3, and
/// these floors were sized so refining 16x per axis moves the 2-D result
/// by less than 1e-6 relative. 3-D keeps a smaller floor for memory.
fn default_l1_grid(dim: usize, cutoff: usize) -> usize {
    let floor = if dim == 2 { 400 } else { 96 };
    next_fast_size((3 * cutoff + 1).max(floor))
}

/// integral |a - b| dx (normalized measure) on an explicit quadrature grid.
/// The fields are transformed separately and subtracted pointwise, so two
/// states that agree to rounding give a clean near-zero distance.
pub fn l1_distance_with_grid(a: &SpectralField, b: &SpectralField, grid: usize) -> Result<f64> {
    let (a, b) = common_pair(a, b)?;
    let lat = FourierLattice::with_grid(a.lattice().dim(), a.lattice().cutoff(), grid)?;
    let pa = inverse_transform(&zero_pad_embed(&a, &lat)?)?;
    let pb = inverse_transform(&zero_pad_embed(&b, &lat)?)?;
    let np = lat.num_points();
    let mut acc = 0.0;
    for p in 0..np {
        let mut sq = 0.0;
        for c in 0..a.ncomp() {
            let d = pa.plane(c)[p] - pb.plane(c)[p];
            sq += d * d;
        }
        acc += sq.sqrt();
    }
    Ok(acc / np as f64)
}

/// integral |a - b| dx on the default quadrature grid.
pub fn l1_distance(a: &SpectralField, b: &SpectralField) -> Result<f64> {
    let cut = a.lattice().cutoff().max(b.lattice().cutoff());
    l1_distance_with_grid(a, b, default_l1_grid(a.lattice().dim(), cut))
}

/// Arithmetic mean of ladder fields at one time, all zero-padded to the
/// finest lattice. `coupled` asserts the caller ran every trajectory on the
/// same Brownian path; the averaged object is meaningless otherwise, so
/// uncoupled input is refused rather than silently averaged.
pub fn cesaro_mean(fields: &[SpectralField], coupled: bool) -> Result<SpectralField> {
    Ok(cesaro_partial_means(fields, coupled)?.pop().unwrap())
}

/// All prefix averages C_N = (1/N) sum_{k<=N} u_k, N = 1..len.
pub fn cesaro_partial_means(fields: &[SpectralField], coupled: bool) -> Result<Vec<SpectralField>> {
    if !coupled {
        return Err(Error::Experiment(
            "Cesaro averaging requires trajectories coupled through one Brownian path".to_string(),
        ));
    }
    if fields.is_empty() {
        return Err(Error::data("Cesaro mean of an empty ladder"));
    }
    let finest = fields
        .iter()
        .max_by_key(|f| f.lattice().cutoff())
        .unwrap()
        .lattice();
    let mut sum = SpectralField::zeros(finest, fields[0].ncomp());
    let mut means = Vec::with_capacity(fields.len());
    for (n, f) in fields.iter().enumerate() {
        sum.add_assign(&zero_pad_embed(f, finest)?);
        let mut c = sum.clone();
        c.scale(1.0 / (n + 1) as f64);
        means.push(c);
    }
    Ok(means)
}

/// L1 gaps between successive Cesaro means: ||C_{N+1} - C_N||_{L1}.
pub fn cesaro_gaps(fields: &[SpectralField]) -> Result<Vec<f64>> {
    let means = cesaro_partial_means(fields, true)?;
    means
        .windows(2)
        .map(|w| l1_distance(&w[1], &w[0]))
        .collect()
}

/// A coupled resolution ladder: one Brownian path, one initial field,
/// one solver configuration template swept over cutoffs.
#[derive(Debug, Clone)]
pub struct LadderConfig {
    /// Strictly increasing cutoffs.
    pub ladder: Vec<usize>,
    pub dt: f64,
    pub t_end: f64,
    /// eps(n) = eps_coeff * n^(-eps_theta); the default law is (1, 1).
    pub eps_coeff: f64,
    pub eps_theta: f64,
    pub integrator: Integrator,
    pub seed: u64,
}

impl LadderConfig {
    pub fn eps_at(&self, n: usize) -> f64 {
        self.eps_coeff * (n as f64).powf(-self.eps_theta)
    }

    pub fn scheme_at(&self, n: usize) -> SchemeConfig {
        SchemeConfig {
            n,
            m: SchemeConfig::default_m(n),
            eps: self.eps_at(n),
            dt: self.dt,
            t_end: self.t_end,
            integrator: self.integrator,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.ladder.len() < 2 {
            v.push("ladder needs at least two cutoffs".to_string());
        }
        if self.ladder.windows(2).any(|w| w[0] >= w[1]) {
            v.push(format!("ladder must be strictly increasing, got {:?}", self.ladder));
        }
        if !(self.dt > 0.0) || !(self.t_end > 0.0) {
            v.push(format!(
                "ladder needs dt > 0 and T > 0, got dt = {}, T = {}",
                self.dt, self.t_end
            ));
        }
        if !(self.eps_coeff >= 0.0) || !(self.eps_theta >= 0.0) {
            v.push("viscosity law needs eps_coeff >= 0 and eps_theta >= 0".to_string());
        }
        v
    }
}

/// Runs every ladder level on one shared Brownian path and returns the
/// final-time fields in ladder order.
pub fn coupled_ladder_finals(
    lc: &LadderConfig,
    noise: &NoiseModel,
    u0: &SpectralField,
) -> Result<Vec<SpectralField>> {
    let v = lc.violations();
    if !v.is_empty() {
        return Err(Error::Config(v));
    }
    let path = WienerPath::sample(lc.seed, noise.num_modes(), lc.dt, lc.t_end)?;
    let results: Vec<Result<SpectralField>> = lc
        .ladder
        .par_iter()
        .map(|&n| {
            let cfg = lc.scheme_at(n);
            Ok(run(&cfg, noise, &path, u0, RunOptions::default())?.state.u)
        })
        .collect();
    results.into_iter().collect()
}

/// Weak-strong comparison setup: ladder levels against a resolved
/// reference on the same Brownian path.
#[derive(Debug, Clone)]
pub struct WeakStrongConfig {
    pub ladder: LadderConfig,
    /// Reference cutoff; a warning (not an error) flags n_ref < 4 * max(ladder).
    pub n_ref: usize,
    /// Reference time step; must divide dt, warned when above dt/4.
    pub dt_ref: f64,
    /// Times at which distances and relative energy are sampled; the
    /// horizon is always included.
    pub sample_times: Vec<f64>,
    pub gronwall_slack: f64,
}

/// Outcome of the weak-strong experiment.
#[derive(Debug, Clone)]
pub struct WeakStrongReport {
    pub levels: Vec<usize>,
    pub sample_times: Vec<f64>,
    /// l1[level][sample] distances to the reference.
    pub l1: Vec<Vec<f64>>,
    pub l2: Vec<Vec<f64>>,
    /// Relative energy series per level, starting at t = 0.
    pub relative_energy: Vec<Vec<(f64, f64)>>,
    pub gronwall_c: f64,
    pub gronwall: Vec<GronwallReport>,
    /// Consecutive final-time L1 pairs that failed to decrease.
    pub nonmonotone_pairs: usize,
    pub warnings: Vec<String>,
    pub pass: bool,
}

/// Captures trajectory states at the requested times (plus t = 0 first).
fn run_with_samples(
    cfg: &SchemeConfig,
    noise: &NoiseModel,
    path: &WienerPath,
    u0: &SpectralField,
    times: &[f64],
) -> Result<Vec<SpectralField>> {
    let s0 = initial_state(u0, cfg)?;
    let mut captured: Vec<Option<SpectralField>> = vec![None; times.len()];
    for (i, &t) in times.iter().enumerate() {
        if t <= 1e-12 {
            captured[i] = Some(s0.u.clone());
        }
    }
    {
        let captured_ref = &mut captured;
        let opts = RunOptions {
            on_step: Some(Box::new(move |s: &SolverState, _, _| {
                for (i, &t) in times.iter().enumerate() {
                    if captured_ref[i].is_none() && s.time >= t - 1e-12 {
                        captured_ref[i] = Some(s.u.clone());
                    }
                }
                Ok(())
            })),
            ..RunOptions::default()
        };
        run(cfg, noise, path, u0, opts)?;
    }
    captured
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| Error::data(format!("sample time {} never reached", times[i]))))
        .collect()
}

/// Runs the ladder and the reference on one path, then reports distances,
/// relative energy, and the Gronwall envelope verdict. Passing means: the
/// final-time L1 distances decrease along the ladder with at most one
/// non-monotone pair, and every level's relative energy stays under its
/// envelope.
pub fn weak_strong_experiment(
    ws: &WeakStrongConfig,
    noise: &NoiseModel,
    u0: &SpectralField,
) -> Result<WeakStrongReport> {
    let mut violations = ws.ladder.violations();
    if ws.ladder.ladder.len() < 2 {
        // A single level is admissible here (the trivial self-comparison);
        // drop that ladder-size violation, keep the rest.
        violations.retain(|v| !v.contains("at least two cutoffs"));
    }
    let max_n = *ws.ladder.ladder.iter().max().ok_or_else(|| {
        Error::config("weak-strong experiment needs a nonempty ladder")
    })?;
    if ws.n_ref < max_n {
        violations.push(format!(
            "reference cutoff {} below the finest ladder level {max_n}",
            ws.n_ref
        ));
    }
    let ratio = ws.ladder.dt / ws.dt_ref;
    if !(ws.dt_ref > 0.0) || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio < 1.0 - 1e-9 {
        violations.push(format!(
            "reference step {} must divide the ladder step {}",
            ws.dt_ref, ws.ladder.dt
        ));
    }
    if !violations.is_empty() {
        return Err(Error::Config(violations));
    }

    let mut warnings = Vec::new();
    if ws.n_ref < 4 * max_n {
        warnings.push(format!(
            "reference cutoff {} is below the advisory 4x finest level ({})",
            ws.n_ref,
            4 * max_n
        ));
    }
    if ratio < 4.0 - 1e-9 {
        warnings.push(format!(
            "reference step {} is above the advisory dt/4 = {}",
            ws.dt_ref,
            ws.ladder.dt / 4.0
        ));
    }

    let mut times: Vec<f64> = ws
        .sample_times
        .iter()
        .cloned()
        .filter(|&t| t > 0.0 && t <= ws.ladder.t_end * (1.0 + 1e-12))
        .collect();
    if !times.iter().any(|&t| (t - ws.ladder.t_end).abs() < 1e-12) {
        times.push(ws.ladder.t_end);
    }
    times.sort_by(f64::total_cmp);

    let path = WienerPath::sample(lc_seed(ws), noise.num_modes(), ws.dt_ref, ws.ladder.t_end)?;

    // Reference trajectory, sampled at t = 0 and the sample times.
    let ref_cfg = SchemeConfig {
        n: ws.n_ref,
        m: SchemeConfig::default_m(ws.n_ref),
        eps: ws.ladder.eps_at(ws.n_ref),
        dt: ws.dt_ref,
        t_end: ws.ladder.t_end,
        integrator: ws.ladder.integrator,
    };
    let mut ref_times = vec![0.0];
    ref_times.extend_from_slice(&times);
    let ref_states = run_with_samples(&ref_cfg, noise, &path, u0, &ref_times)
        .map_err(|e| Error::Experiment(format!("reference run failed: {e}")))?;

    // Gronwall rate from the reference: c = 2 sup_t |grad U|_inf + D1.
    let mut grad_sup: f64 = 0.0;
    for s in &ref_states {
        grad_sup = grad_sup.max(inverse_transform(&gradient(s))?.max_abs());
    }
    let gronwall_c = 2.0 * grad_sup + noise.d1();

    let level_states: Vec<Result<Vec<SpectralField>>> = ws
        .ladder
        .ladder
        .par_iter()
        .map(|&n| run_with_samples(&ws.ladder.scheme_at(n), noise, &path, u0, &ref_times))
        .collect();

    let e_ref0 = energy(&ref_states[0]);
    let floor = 1e-10 * e_ref0.max(1.0);
    let mut l1 = Vec::new();
    let mut l2 = Vec::new();
    let mut rel = Vec::new();
    let mut gronwall = Vec::new();
    for states in level_states {
        let states = states?;
        let mut l1_row = Vec::new();
        let mut l2_row = Vec::new();
        let mut series = Vec::new();
        for (i, s) in states.iter().enumerate() {
            let d_l2 = l2_distance(s, &ref_states[i])?;
            series.push((ref_times[i], 0.5 * d_l2 * d_l2));
            if i > 0 {
                l1_row.push(l1_distance(s, &ref_states[i])?);
                l2_row.push(d_l2);
            }
        }
        gronwall.push(gronwall_envelope(&series, gronwall_c, ws.gronwall_slack, floor)?);
        l1.push(l1_row);
        l2.push(l2_row);
        rel.push(series);
    }

    let last = times.len() - 1;
    let nonmonotone_pairs = l1
        .windows(2)
        .filter(|w| w[1][last] > w[0][last])
        .count();
    let pass = nonmonotone_pairs <= 1 && gronwall.iter().all(|g| g.pass);
    Ok(WeakStrongReport {
        levels: ws.ladder.ladder.clone(),
        sample_times: times,
        l1,
        l2,
        relative_energy: rel,
        gronwall_c,
        gronwall,
        nonmonotone_pairs,
        warnings,
        pass,
    })
}

fn lc_seed(ws: &WeakStrongConfig) -> u64 {
    ws.ladder.seed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use proptest::prelude::*;

    fn base_cfg() -> SchemeConfig {
        SchemeConfig {
            n: 4,
            m: 2,
            eps: 0.25,
            dt: 0.02,
            t_end: 0.2,
            integrator: Integrator::EulerMaruyama,
        }
    }

    #[test]
    fn single_member_matches_a_direct_run_bitwise() {
        let cfg = base_cfg();
        let lat = FourierLattice::new(2, 8).unwrap();
        let u0 = presets::random_divfree(&lat, 10, 4, 1.5, 1.0).unwrap();
        let noise = NoiseModel::linear(vec![0.2]).unwrap();
        let ens = EnsembleConfig {
            members: 1,
            master_seed: 99,
            histogram_bins: 8,
            probes: vec![],
        };
        let out = run_ensemble(&ens, &cfg, &noise, &u0).unwrap();
        let path = WienerPath::sample(derive_seed(99, 1, 0), 1, cfg.dt, cfg.t_end).unwrap();
        let direct = run(&cfg, &noise, &path, &u0, RunOptions::default()).unwrap();
        assert_eq!(out.finals[0].coeffs(), direct.state.u.coeffs());
    }

    #[test]
    fn zero_noise_members_are_identical() {
        let cfg = base_cfg();
        let lat = FourierLattice::new(2, 4).unwrap();
        let u0 = presets::random_divfree(&lat, 2, 4, 1.5, 1.0).unwrap();
        let ens = EnsembleConfig {
            members: 4,
            master_seed: 7,
            histogram_bins: 8,
            probes: vec![Probe { t: 0.1, x: [1.0, 2.0, 0.0] }],
        };
        let out = run_ensemble(&ens, &cfg, &NoiseModel::zero(), &u0).unwrap();
        for f in &out.finals[1..] {
            assert_eq!(f.coeffs(), out.finals[0].coeffs());
        }
        // Point-mass Young measure: a single occupied bin per component.
        let ym = empirical_young_measure(&out.probe_samples[0], 16).unwrap();
        for comp in &ym.components {
            assert_eq!(comp.occupied_bins(), 1);
            assert_eq!(comp.total(), 4);
        }
    }

    #[test]
    fn half_ensembles_differ_at_the_monte_carlo_scale() {
        let cfg = SchemeConfig {
            t_end: 0.2,
            ..base_cfg()
        };
        let lat = FourierLattice::new(2, 4).unwrap();
        let tg = presets::taylor_green(&lat);
        let noise = NoiseModel::linear(vec![0.3]).unwrap();
        let ens = EnsembleConfig {
            members: 64,
            master_seed: 1234,
            histogram_bins: 8,
            probes: vec![],
        };
        let out = run_ensemble(&ens, &cfg, &noise, &tg).unwrap();
        let a = mean_field(&out.finals[..32]).unwrap();
        let b = mean_field(&out.finals[32..]).unwrap();
        let diff = l2_distance(&a, &b).unwrap();
        // Factor variance over 10 multiplicative steps: std of a 32-member
        // mean is ~ sqrt(exp(ssq T) - 1)/sqrt(32) times ||u0||.
        let ssq = 0.09;
        let sigma = ((ssq * 0.2_f64).exp() - 1.0).sqrt() / 32f64.sqrt() * tg.norm();
        assert!(diff > 0.0, "halves cannot coincide under live noise");
        assert!(
            diff < 5.0 * sigma * 2f64.sqrt(),
            "half-ensemble gap {diff:.3e} vs Monte-Carlo scale {sigma:.3e}"
        );
    }

    #[test]
    fn failing_members_are_excluded_and_excess_failures_abort() {
        let cfg = SchemeConfig {
            dt: 0.5,
            eps: 0.0,
            ..base_cfg()
        };
        let lat = FourierLattice::new(2, 4).unwrap();
        let mut u0 = presets::random_divfree(&lat, 8, 4, 1.0, 1.0).unwrap();
        u0.scale(1e200);
        let ens = EnsembleConfig {
            members: 3,
            master_seed: 5,
            histogram_bins: 4,
            probes: vec![],
        };
        match run_ensemble(&ens, &cfg, &NoiseModel::zero(), &u0) {
            Err(Error::Experiment(msg)) => assert!(msg.contains("3 of 3")),
            other => panic!("expected experiment error, got {other:?}"),
        }
    }

    #[test]
    fn ensemble_config_rejects_bad_probes() {
        let cfg = base_cfg();
        let ens = EnsembleConfig {
            members: 0,
            master_seed: 0,
            histogram_bins: 0,
            probes: vec![Probe { t: 5.0, x: [0.0, 0.0, 0.0] }],
        };
        let v = ens.violations(&cfg);
        assert_eq!(v.len(), 3, "{v:?}");
    }

    #[test]
    fn young_measure_examples() {
        // All samples equal: point mass.
        let point = empirical_young_measure(&[vec![2.5], vec![2.5], vec![2.5]], 8).unwrap();
        assert_eq!(point.components[0].occupied_bins(), 1);
        assert_eq!(point.components[0].mean(), 2.5);

        // {-1, 1} with two bins: one count each.
        let two = empirical_young_measure(&[vec![-1.0], vec![1.0]], 2).unwrap();
        assert_eq!(two.components[0].counts, vec![1, 1]);
        assert_eq!(two.components[0].total(), 2);

        // Moments match the raw samples exactly (per-bin sums, not centers).
        let rng = crate::rng::CounterRng::new(3);
        let samples: Vec<Vec<f64>> = (0..500)
            .map(|i| vec![rng.standard_normal(i, 0), 2.0 + 0.1 * rng.standard_normal(i, 1)])
            .collect();
        let ym = empirical_young_measure(&samples, 16).unwrap();
        for c in 0..2 {
            let mean: f64 = samples.iter().map(|s| s[c]).sum::<f64>() / 500.0;
            let second: f64 = samples.iter().map(|s| s[c] * s[c]).sum::<f64>() / 500.0;
            assert!((ym.components[c].mean() - mean).abs() < 1e-12);
            assert!((ym.components[c].second_moment() - second).abs() < 1e-12);
        }

        assert!(empirical_young_measure(&[vec![1.0]], 4).is_err());
    }

    #[test]
    fn wasserstein_hand_oracles() {
        assert_eq!(wasserstein1_1d(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(wasserstein1_1d(&[0.0, 1.0], &[1.0, 2.0]).unwrap(), 1.0);
        // Point mass translated by c.
        assert!((wasserstein1_1d(&[0.5; 10], &[2.25; 10]).unwrap() - 1.75).abs() < 1e-15);
        // Unequal sizes; CDF integral by hand: F_a jumps to 1 at 0, F_b is
        // 1/2 on [0,1): integral |1 - 1/2| over [0,1] = 1/2.
        assert!((wasserstein1_1d(&[0.0], &[0.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(wasserstein1_1d(&[], &[1.0]).is_err());
    }

    proptest! {
        // Metric axioms on random equal-size triples.
        #[test]
        fn wasserstein_is_a_metric(
            a in prop::collection::vec(-5.0f64..5.0, 6),
            b in prop::collection::vec(-5.0f64..5.0, 6),
            c in prop::collection::vec(-5.0f64..5.0, 6),
        ) {
            let dab = wasserstein1_1d(&a, &b).unwrap();
            let dba = wasserstein1_1d(&b, &a).unwrap();
            let dac = wasserstein1_1d(&a, &c).unwrap();
            let dcb = wasserstein1_1d(&c, &b).unwrap();
            prop_assert!((dab - dba).abs() < 1e-12);
            prop_assert!(dab <= dac + dcb + 1e-12);
            prop_assert!(wasserstein1_1d(&a, &a).unwrap() < 1e-15);
        }
    }

    #[test]
    fn cesaro_mean_examples_and_refusal() {
        let lat = FourierLattice::new(2, 4).unwrap();
        let u = presets::random_divfree(&lat, 1, 4, 1.5, 1.0).unwrap();
        let mut u3 = u.clone();
        u3.scale(3.0);

        let same = cesaro_mean(&[u.clone(), u.clone()], true).unwrap();
        assert!(same.sub(&u).max_abs() < 1e-16);

        // Members u and 3u average to 2u.
        let m = cesaro_mean(&[u.clone(), u3], true).unwrap();
        let mut expect = u.clone();
        expect.scale(2.0);
        assert!(m.sub(&expect).max_abs() < 1e-15);

        assert!(cesaro_mean(&[u.clone()], false).is_err());

        // Prefix means across lattices zero-pad exactly.
        let fine = FourierLattice::new(2, 8).unwrap();
        let v = presets::random_divfree(&fine, 2, 8, 1.5, 1.0).unwrap();
        let means = cesaro_partial_means(&[u.clone(), v.clone()], true).unwrap();
        assert_eq!(means.len(), 2);
        assert_eq!(means[1].lattice().cutoff(), 8);
        let mut expect = zero_pad_embed(&u, &fine).unwrap();
        expect.add_assign(&v);
        expect.scale(0.5);
        assert!(means[1].sub(&expect).max_abs() < 1e-15);
    }

    #[test]
    fn l1_distance_matches_the_refined_quadrature_oracle() {
        let lat = FourierLattice::new(2, 2).unwrap();
        let tg = presets::taylor_green(&lat);
        let zero = SpectralField::zeros(&lat, 2);
        let got = l1_distance(&zero, &tg).unwrap();
        // Frozen fine-grid value of the Taylor-Green |u| integral under the
        // normalized measure (8192^2-point rectangle rule; that rule's tail
        // is below 2e-10 here).
        let oracle = 0.677472924984;
        assert!(
            (got - oracle).abs() < 1e-6 * oracle,
            "default quadrature {got:.9} vs refined oracle {oracle:.9}"
        );
        // Refining the default grid 4x per axis moves the value by < 1e-6
        // relative: the default is already inside the oracle tolerance.
        let refined = l1_distance_with_grid(&zero, &tg, 1600).unwrap();
        assert!((got - refined).abs() < 1e-6 * refined);
        // Exact zero for identical fields.
        assert_eq!(l1_distance(&tg, &tg).unwrap(), 0.0);
    }

    #[test]
    fn l1_triangle_inequality_on_random_triples() {
        let lat = FourierLattice::new(2, 4).unwrap();
        for seed in 0..5 {
            let a = presets::random_divfree(&lat, seed * 3 + 1, 4, 1.0, 1.0).unwrap();
            let b = presets::random_divfree(&lat, seed * 3 + 2, 4, 1.0, 0.7).unwrap();
            let c = presets::random_divfree(&lat, seed * 3 + 3, 4, 1.0, 1.3).unwrap();
            let ab = l1_distance(&a, &b).unwrap();
            let bc = l1_distance(&b, &c).unwrap();
            let ac = l1_distance(&a, &c).unwrap();
            assert!(ac <= ab + bc + 1e-12);
            assert!(ab >= 0.0 && bc >= 0.0);
        }
    }

    #[test]
    fn weak_strong_taylor_green_is_exact_at_every_level() {
        // The steady state is reproduced exactly at every resolution, so
        // all distances sit at rounding level and Gronwall passes with a
        // flat zero series.
        let ws = WeakStrongConfig {
            ladder: LadderConfig {
                ladder: vec![4, 8],
                dt: 0.02,
                t_end: 0.2,
                eps_coeff: 1.0,
                eps_theta: 1.0,
                integrator: Integrator::EulerMaruyama,
                seed: 3,
            },
            n_ref: 16,
            dt_ref: 0.005,
            sample_times: vec![0.1, 0.2],
            gronwall_slack: 0.2,
        };
        let lat = FourierLattice::new(2, 16).unwrap();
        let tg = presets::taylor_green(&lat);
        let report = weak_strong_experiment(&ws, &NoiseModel::zero(), &tg).unwrap();
        assert!(report.pass);
        assert_eq!(report.nonmonotone_pairs, 0);
        for row in &report.l1 {
            for d in row {
                assert!(*d < 1e-10, "steady-state distance {d:.3e}");
            }
        }
        for g in &report.gronwall {
            assert!(g.pass);
        }
        // Advisory warnings fired: n_ref < 4 * 8 and dt_ref = dt/4 is fine,
        // so exactly the cutoff warning is present.
        assert_eq!(report.warnings.len(), 1);
        assert!(report.warnings[0].contains("advisory 4x"));
    }

    #[test]
    fn weak_strong_converges_for_shear_with_small_noise() {
        let ws = WeakStrongConfig {
            ladder: LadderConfig {
                ladder: vec![4, 8, 16],
                dt: 1.0 / 64.0,
                t_end: 0.25,
                eps_coeff: 1.0,
                eps_theta: 1.0,
                integrator: Integrator::EulerMaruyama,
                seed: 11,
            },
            n_ref: 64,
            dt_ref: 1.0 / 256.0,
            sample_times: vec![0.25],
            gronwall_slack: 0.2,
        };
        let lat = FourierLattice::new(2, 64).unwrap();
        // Shear plus a perturbation with spectral tails beyond every ladder
        // level: each coarse run then starts from a strict projection, the
        // relative energy starts positive, and the envelope has substance.
        let mut u0 = presets::shear(&lat);
        u0.add_assign(&presets::random_divfree(&lat, 6, 48, 1.5, 0.3).unwrap());
        let noise = NoiseModel::linear(vec![0.05]).unwrap();
        let report = weak_strong_experiment(&ws, &noise, &u0).unwrap();
        let last = report.sample_times.len() - 1;
        assert!(
            report.l1[2][last] < report.l1[0][last],
            "finest level must beat the coarsest: {:?}",
            report.l1
        );
        assert!(report.pass, "nonmonotone {}, gronwall {:?}", report.nonmonotone_pairs, report.gronwall.iter().map(|g| g.pass).collect::<Vec<_>>());
    }

    #[test]
    fn weak_strong_rejects_inconsistent_setups() {
        let mut ws = WeakStrongConfig {
            ladder: LadderConfig {
                ladder: vec![8, 4],
                dt: 0.02,
                t_end: 0.1,
                eps_coeff: 1.0,
                eps_theta: 1.0,
                integrator: Integrator::EulerMaruyama,
                seed: 0,
            },
            n_ref: 2,
            dt_ref: 0.015,
            sample_times: vec![],
            gronwall_slack: 0.2,
        };
        let lat = FourierLattice::new(2, 8).unwrap();
        let tg = presets::taylor_green(&lat);
        match weak_strong_experiment(&ws, &NoiseModel::zero(), &tg) {
            Err(Error::Config(v)) => assert!(v.len() >= 3, "{v:?}"),
            other => panic!("expected config rejection, got {other:?}"),
        }
        // Fixing the violations makes it run.
        ws.ladder.ladder = vec![4, 8];
        ws.n_ref = 8;
        ws.dt_ref = 0.01;
        assert!(weak_strong_experiment(&ws, &NoiseModel::zero(), &tg).is_ok());
    }

    #[test]
    fn coupled_ladder_gaps_shrink_for_taylor_green_noise() {
        // Taylor-Green with small linear noise: every level follows the
        // same geometric factor, differing only through projection of the
        // initial data, so successive Cesaro means settle quickly.
        let lc = LadderConfig {
            ladder: vec![2, 3, 4, 6],
            dt: 0.02,
            t_end: 0.2,
            eps_coeff: 1.0,
            eps_theta: 1.0,
            integrator: Integrator::EulerMaruyama,
            seed: 21,
        };
        let lat = FourierLattice::new(2, 8).unwrap();
        let mut u0 = presets::taylor_green(&lat);
        u0.add_assign(&presets::random_divfree(&lat, 13, 6, 1.0, 0.2).unwrap());
        let noise = NoiseModel::linear(vec![0.1]).unwrap();
        let finals = coupled_ladder_finals(&lc, &noise, &u0).unwrap();
        assert_eq!(finals.len(), 4);
        let gaps = cesaro_gaps(&finals).unwrap();
        assert_eq!(gaps.len(), 3);
        assert!(
            gaps[2] < gaps[0],
            "later Cesaro gaps should shrink: {gaps:?}"
        );
    }

    #[test]
    fn mean_field_uses_every_member_once() {
        let lat = FourierLattice::new(2, 3).unwrap();
        let fields: Vec<SpectralField> = (0..5)
            .map(|i| {
                let mut f = presets::random_divfree(&lat, 40 + i, 3, 1.0, 1.0).unwrap();
                f.scale((i + 1) as f64);
                f
            })
            .collect();
        let tree = mean_field(&fields).unwrap();
        let mut seq = SpectralField::zeros(&lat, 2);
        for f in &fields {
            seq.add_assign(f);
        }
        seq.scale(0.2);
        assert!(tree.sub(&seq).max_abs() < 1e-14);
        assert!(mean_field(&[]).is_err());
    }
}
