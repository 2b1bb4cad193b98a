//! Run configuration: strict parsing, defaults, canonical form.
//!
//! A run is described by one TOML document with blocks for the lattice,
//! the scheme, the noise, the initial field, observers, ensembles, and
//! resolution ladders. Parsing is strict, because a silently ignored typo
//! in `eps` or `dt` invalidates a convergence study: unknown keys are
//! fatal, and every violation found is reported in one pass, not just the
//! first. Parsing also resolves every default (viscosity law n^-1,
//! protected band ceil(sqrt n), eight noise modes with k^-2 amplitudes),
//! so the result is a fully explicit [`ConfigDoc`] whose canonical TOML
//! serialization reparses to an equal document. The SHA-256 hash of that
//! canonical form identifies the configuration in checkpoints.
//!
//! Dotted-key overrides (`scheme.dt = 0.005`) patch the raw document
//! before parsing, so overridden configs go through exactly the same
//! validation as written ones.

use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use sha2::{Digest, Sha256};
use toml::value::{Table, Value};

use crate::ensemble::{EnsembleConfig, LadderConfig, Probe, WeakStrongConfig};
use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::lattice::FourierLattice;
use crate::noise::{AdditiveDirection, NoiseModel};
use crate::presets;
use crate::scheme::{Integrator, SchemeConfig};
use crate::snapshot::read_snapshot;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeDoc {
    pub dim: usize,
    pub n: usize,
    /// Physical points per axis; 0 means the library default (the smallest
    /// fast size with alias-free quadratic products).
    pub grid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeDoc {
    pub m: usize,
    pub eps: f64,
    pub dt: f64,
    pub t_end: f64,
    pub integrator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseDoc {
    pub family: String,
    /// Number of Wiener modes; always equals `alphas.len()`.
    pub k: usize,
    pub alphas: Vec<f64>,
    /// Additive family only: "solenoidal" or "gradient".
    pub direction: String,
    /// Declared growth bound; must dominate the family's exact value.
    pub d0: f64,
    /// Declared Lipschitz bound; must dominate the family's exact value.
    pub d1: f64,
    /// Brownian path seed (single runs; ensembles derive per-member seeds
    /// from the master seed instead).
    pub seed: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialDoc {
    pub preset: String,
    /// Snapshot path, used only by preset = "file".
    pub file: String,
    /// These four apply only to preset = "random_divfree".
    pub seed: i64,
    pub kmax: usize,
    pub decay: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObserversDoc {
    pub energy_stride: usize,
    /// 0 disables trajectory snapshots.
    pub snapshot_stride: usize,
    /// Space-time sample points as [t, x, y, z].
    pub probes: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleDoc {
    pub members: usize,
    pub histogram_bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderDoc {
    pub cutoffs: Vec<usize>,
    pub n_ref: usize,
    pub dt_ref: f64,
    pub sample_times: Vec<f64>,
    /// Ladder viscosity law eps(n) = eps_coeff * n^(-eps_theta).
    pub eps_coeff: f64,
    pub eps_theta: f64,
    pub gronwall_slack: f64,
}

/// A fully resolved, validated run configuration. Every field is concrete;
/// serializing and reparsing yields an equal document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigDoc {
    /// Master seed; the default noise seed and ensemble member seeds
    /// derive from it.
    pub seed: i64,
    /// Output directory (CLI flag and SVV_OUT override it).
    pub out: String,
    pub lattice: LatticeDoc,
    pub scheme: SchemeDoc,
    pub noise: NoiseDoc,
    pub initial: InitialDoc,
    pub observers: ObserversDoc,
    pub ensemble: EnsembleDoc,
    pub ladder: LadderDoc,
}

pub fn parse_integrator(name: &str) -> Result<Integrator> {
    match name {
        "euler_maruyama" => Ok(Integrator::EulerMaruyama),
        "semi_implicit_em" => Ok(Integrator::SemiImplicitEm),
        "deterministic_midpoint" => Ok(Integrator::DeterministicMidpoint),
        other => Err(Error::config(format!(
            "unknown integrator `{other}` (expected euler_maruyama, semi_implicit_em, or deterministic_midpoint)"
        ))),
    }
}

fn parse_direction(name: &str) -> Result<AdditiveDirection> {
    match name {
        "solenoidal" => Ok(AdditiveDirection::Solenoidal),
        "gradient" => Ok(AdditiveDirection::Gradient),
        other => Err(Error::config(format!(
            "unknown noise direction `{other}` (expected solenoidal or gradient)"
        ))),
    }
}

impl ConfigDoc {
    pub fn lattice(&self) -> Result<Arc<FourierLattice>> {
        if self.lattice.grid == 0 {
            FourierLattice::new(self.lattice.dim, self.lattice.n)
        } else {
            FourierLattice::with_grid(self.lattice.dim, self.lattice.n, self.lattice.grid)
        }
    }

    pub fn integrator(&self) -> Result<Integrator> {
        parse_integrator(&self.scheme.integrator)
    }

    pub fn scheme_config(&self) -> Result<SchemeConfig> {
        Ok(SchemeConfig {
            n: self.lattice.n,
            m: self.scheme.m,
            eps: self.scheme.eps,
            dt: self.scheme.dt,
            t_end: self.scheme.t_end,
            integrator: self.integrator()?,
        })
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        match self.noise.family.as_str() {
            "zero" => Ok(NoiseModel::zero()),
            "linear" => NoiseModel::linear(self.noise.alphas.clone()),
            "saturated_linear" => NoiseModel::saturated_linear(self.noise.alphas.clone()),
            "additive" => NoiseModel::additive_modes(
                self.lattice.dim,
                self.noise.alphas.clone(),
                parse_direction(&self.noise.direction)?,
            ),
            other => Err(Error::config(format!(
                "unknown noise family `{other}` (expected zero, linear, saturated_linear, or additive)"
            ))),
        }
    }

    /// Seed of the Brownian path for single-trajectory runs.
    pub fn path_seed(&self) -> u64 {
        self.noise.seed as u64
    }

    /// Builds the configured initial field on the configured lattice (or,
    /// for preset = "file", on the snapshot's own lattice).
    pub fn initial_field(&self) -> Result<SpectralField> {
        match self.initial.preset.as_str() {
            "taylor_green" => Ok(presets::taylor_green(&self.lattice()?)),
            "shear" => Ok(presets::shear(&self.lattice()?)),
            "random_divfree" => presets::random_divfree(
                &self.lattice()?,
                self.initial.seed as u64,
                self.initial.kmax,
                self.initial.decay,
                self.initial.amplitude,
            ),
            "file" => Ok(read_snapshot(Path::new(&self.initial.file))?.0),
            other => Err(Error::config(format!(
                "unknown initial preset `{other}` (expected taylor_green, shear, random_divfree, or file)"
            ))),
        }
    }

    pub fn probes(&self) -> Vec<Probe> {
        self.observers
            .probes
            .iter()
            .map(|p| Probe {
                t: p[0],
                x: [p[1], p[2], p[3]],
            })
            .collect()
    }

    pub fn ensemble_config(&self) -> EnsembleConfig {
        EnsembleConfig {
            members: self.ensemble.members,
            master_seed: self.seed as u64,
            histogram_bins: self.ensemble.histogram_bins,
            probes: self.probes(),
        }
    }

    pub fn ladder_config(&self) -> Result<LadderConfig> {
        Ok(LadderConfig {
            ladder: self.ladder.cutoffs.clone(),
            dt: self.scheme.dt,
            t_end: self.scheme.t_end,
            eps_coeff: self.ladder.eps_coeff,
            eps_theta: self.ladder.eps_theta,
            integrator: self.integrator()?,
            seed: self.path_seed(),
        })
    }

    pub fn weak_strong_config(&self) -> Result<WeakStrongConfig> {
        Ok(WeakStrongConfig {
            ladder: self.ladder_config()?,
            n_ref: self.ladder.n_ref,
            dt_ref: self.ladder.dt_ref,
            sample_times: self.ladder.sample_times.clone(),
            gronwall_slack: self.ladder.gronwall_slack,
        })
    }

    /// Canonical TOML: every field explicit, deterministic order and float
    /// formatting (shortest round-trip decimals).
    pub fn canonical_toml(&self) -> String {
        toml::to_string_pretty(self).expect("a validated config serializes")
    }

    pub fn config_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.canonical_toml().as_bytes());
        h.finalize().into()
    }

    pub fn hash_hex(&self) -> String {
        self.config_hash().iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn parse_config(text: &str) -> Result<ConfigDoc> {
    parse_config_with_overrides(text, &[])
}

/// Applies dotted-key overrides to the raw document, then parses. Override
/// values are TOML fragments; text that does not parse as TOML is taken as
/// a bare string, so `initial.preset=shear` works unquoted.
pub fn parse_config_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<ConfigDoc> {
    let mut root: Table = text
        .parse()
        .map_err(|e| Error::config(format!("config syntax: {e}")))?;
    for (key, raw) in overrides {
        apply_override(&mut root, key, raw)?;
    }
    build_doc(&root)
}

fn parse_override_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(t) => t.into_iter().next().unwrap().1,
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Sets `dotted` (e.g. "scheme.dt") in the raw document, creating tables
/// along the way. Unknown keys introduced here are caught by the same
/// strict walk as written ones.
pub fn apply_override(root: &mut Table, dotted: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = dotted.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(format!("override key `{dotted}` is malformed")));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        table = table
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .ok_or_else(|| {
                Error::config(format!("override key `{dotted}` descends into a non-table value"))
            })?;
    }
    table.insert(parts.last().unwrap().to_string(), parse_override_value(raw));
    Ok(())
}

const BLOCKS: &[(&str, &[&str])] = &[
    ("lattice", &["dim", "n", "grid"]),
    ("scheme", &["m", "eps", "eps_law", "dt", "t_end", "T", "integrator"]),
    ("noise", &["family", "k", "K", "alphas", "decay", "direction", "d0", "D0", "d1", "D1", "seed"]),
    ("initial", &["preset", "file", "seed", "kmax", "decay", "amplitude"]),
    ("observers", &["energy_stride", "snapshot_stride", "probes"]),
    ("ensemble", &["members", "histogram_bins"]),
    ("ladder", &["cutoffs", "n_ref", "dt_ref", "sample_times", "eps_coeff", "eps_theta", "gronwall_slack"]),
];

fn collect_unknown_keys(root: &Table, errors: &mut Vec<String>) {
    for (key, val) in root {
        if key == "seed" || key == "out" {
            continue;
        }
        match BLOCKS.iter().find(|(name, _)| name == key) {
            None => errors.push(format!("unknown key `{key}`")),
            Some((name, allowed)) => {
                let Some(t) = val.as_table() else {
                    errors.push(format!("`{name}` must be a table"));
                    continue;
                };
                for (k, v) in t {
                    if !allowed.contains(&k.as_str()) {
                        errors.push(format!("unknown key `{name}.{k}`"));
                    } else if k == "eps_law" {
                        match v.as_table() {
                            None => errors.push("`scheme.eps_law` must be a table".to_string()),
                            Some(law) => {
                                for lk in law.keys() {
                                    if lk != "coeff" && lk != "theta" {
                                        errors.push(format!("unknown key `scheme.eps_law.{lk}`"));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Typed extraction with collected (not short-circuited) violations.
struct Cx<'a> {
    root: &'a Table,
    errors: Vec<String>,
}

impl<'a> Cx<'a> {
    fn block(&self, name: &str) -> Option<&'a Table> {
        self.root.get(name).and_then(Value::as_table)
    }

    fn lookup(t: Option<&'a Table>, keys: &[&str]) -> Option<&'a Value> {
        let t = t?;
        keys.iter().find_map(|k| t.get(*k))
    }

    fn uint(&mut self, t: Option<&'a Table>, block: &str, keys: &[&str]) -> Option<usize> {
        match Self::lookup(t, keys) {
            None => None,
            Some(Value::Integer(i)) if *i >= 0 => Some(*i as usize),
            Some(v) => {
                self.errors.push(format!(
                    "`{block}.{}` must be a non-negative integer, got {v}",
                    keys[0]
                ));
                None
            }
        }
    }

    fn seed(&mut self, t: Option<&'a Table>, block: &str, keys: &[&str]) -> Option<i64> {
        match Self::lookup(t, keys) {
            None => None,
            Some(Value::Integer(i)) if *i >= 0 => Some(*i),
            Some(v) => {
                self.errors
                    .push(format!("`{block}.{}` must be a non-negative integer, got {v}", keys[0]));
                None
            }
        }
    }

    fn float(&mut self, t: Option<&'a Table>, block: &str, keys: &[&str]) -> Option<f64> {
        match Self::lookup(t, keys) {
            None => None,
            Some(Value::Float(x)) => Some(*x),
            Some(Value::Integer(i)) => Some(*i as f64),
            Some(v) => {
                self.errors
                    .push(format!("`{block}.{}` must be a number, got {v}", keys[0]));
                None
            }
        }
    }

    fn string(&mut self, t: Option<&'a Table>, block: &str, keys: &[&str]) -> Option<String> {
        match Self::lookup(t, keys) {
            None => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(v) => {
                self.errors
                    .push(format!("`{block}.{}` must be a string, got {v}", keys[0]));
                None
            }
        }
    }

    fn float_vec(&mut self, t: Option<&'a Table>, block: &str, keys: &[&str]) -> Option<Vec<f64>> {
        let v = Self::lookup(t, keys)?;
        let fail = |errors: &mut Vec<String>| {
            errors.push(format!("`{block}.{}` must be an array of numbers", keys[0]));
            None
        };
        let Some(arr) = v.as_array() else {
            return fail(&mut self.errors);
        };
        let mut out = Vec::with_capacity(arr.len());
        for item in arr {
            match item {
                Value::Float(x) => out.push(*x),
                Value::Integer(i) => out.push(*i as f64),
                _ => return fail(&mut self.errors),
            }
        }
        Some(out)
    }

    fn uint_vec(&mut self, t: Option<&'a Table>, block: &str, keys: &[&str]) -> Option<Vec<usize>> {
        let v = Self::lookup(t, keys)?;
        let fail = |errors: &mut Vec<String>| {
            errors.push(format!(
                "`{block}.{}` must be an array of positive integers",
                keys[0]
            ));
            None
        };
        let Some(arr) = v.as_array() else {
            return fail(&mut self.errors);
        };
        let mut out = Vec::with_capacity(arr.len());
        for item in arr {
            match item {
                Value::Integer(i) if *i >= 1 => out.push(*i as usize),
                _ => return fail(&mut self.errors),
            }
        }
        Some(out)
    }

    /// Probes as [t, x, y] or [t, x, y, z].
    fn probes(&mut self, t: Option<&'a Table>) -> Option<Vec<[f64; 4]>> {
        let v = Self::lookup(t, &["probes"])?;
        let Some(arr) = v.as_array() else {
            self.errors
                .push("`observers.probes` must be an array of [t, x, y(, z)] rows".to_string());
            return None;
        };
        let mut out = Vec::with_capacity(arr.len());
        for (i, row) in arr.iter().enumerate() {
            let nums: Option<Vec<f64>> = row.as_array().map(|r| {
                r.iter()
                    .filter_map(|x| match x {
                        Value::Float(f) => Some(*f),
                        Value::Integer(n) => Some(*n as f64),
                        _ => None,
                    })
                    .collect()
            });
            match nums {
                Some(ns) if (ns.len() == 3 || ns.len() == 4) && row.as_array().unwrap().len() == ns.len() => {
                    let mut p = [0.0; 4];
                    p[..ns.len()].copy_from_slice(&ns);
                    out.push(p);
                }
                _ => self.errors.push(format!(
                    "`observers.probes[{i}]` must be 3 or 4 numbers [t, x, y(, z)]"
                )),
            }
        }
        Some(out)
    }
}

fn build_doc(root: &Table) -> Result<ConfigDoc> {
    let mut cx = Cx {
        root,
        errors: Vec::new(),
    };
    collect_unknown_keys(root, &mut cx.errors);

    let seed = cx.seed(Some(root), "", &["seed"]).unwrap_or(0);
    let out = cx
        .string(Some(root), "", &["out"])
        .unwrap_or_else(|| "out".to_string());

    // Lattice block: dim and n are the only hard-required keys besides the
    // scheme's dt and t_end.
    let lat_t = cx.block("lattice");
    if root.get("lattice").is_none() {
        cx.errors.push("missing required block [lattice]".to_string());
    }
    let dim = cx.uint(lat_t, "lattice", &["dim"]).or_else(|| {
        if lat_t.is_some() && Cx::lookup(lat_t, &["dim"]).is_none() {
            cx.errors.push("missing required key `lattice.dim`".to_string());
        }
        None
    });
    let n = cx.uint(lat_t, "lattice", &["n"]).or_else(|| {
        if lat_t.is_some() && Cx::lookup(lat_t, &["n"]).is_none() {
            cx.errors.push("missing required key `lattice.n`".to_string());
        }
        None
    });
    let grid = cx.uint(lat_t, "lattice", &["grid"]).unwrap_or(0);
    // Placeholders keep validation going; the recorded errors still fail the parse.
    let dim = dim.unwrap_or(2);
    let n = n.unwrap_or(8);

    if dim != 2 && dim != 3 {
        cx.errors
            .push(format!("lattice dimension must be 2 or 3, got {dim}"));
    }
    if n == 0 {
        cx.errors.push("spectral cutoff must be at least 1".to_string());
    }
    if grid != 0 && grid < 3 * n + 1 {
        cx.errors.push(format!(
            "grid of {grid} points per axis aliases quadratic products at cutoff {n}; need at least {} (or 0 for the default)",
            3 * n + 1
        ));
    }

    // Scheme block.
    let sch_t = cx.block("scheme");
    if root.get("scheme").is_none() {
        cx.errors.push("missing required block [scheme]".to_string());
    }
    let dt = cx.float(sch_t, "scheme", &["dt"]).or_else(|| {
        if sch_t.is_some() && Cx::lookup(sch_t, &["dt"]).is_none() {
            cx.errors.push("missing required key `scheme.dt`".to_string());
        }
        None
    });
    let t_end = cx.float(sch_t, "scheme", &["t_end", "T"]).or_else(|| {
        if sch_t.is_some() && Cx::lookup(sch_t, &["t_end", "T"]).is_none() {
            cx.errors
                .push("missing required key `scheme.t_end`".to_string());
        }
        None
    });
    let dt = dt.unwrap_or(0.01);
    let t_end = t_end.unwrap_or(1.0);

    let m = cx
        .uint(sch_t, "scheme", &["m"])
        .unwrap_or_else(|| SchemeConfig::default_m(n));
    let eps_given = Cx::lookup(sch_t, &["eps"]).is_some();
    let law_given = Cx::lookup(sch_t, &["eps_law"]).is_some();
    if eps_given && law_given {
        cx.errors
            .push("give either `scheme.eps` or `scheme.eps_law`, not both".to_string());
    }
    let eps = if law_given {
        let law = Cx::lookup(sch_t, &["eps_law"]).and_then(Value::as_table);
        let coeff = cx.float(law, "scheme.eps_law", &["coeff"]).unwrap_or(1.0);
        let theta = cx.float(law, "scheme.eps_law", &["theta"]).unwrap_or(1.0);
        coeff * (n as f64).powf(-theta)
    } else {
        cx.float(sch_t, "scheme", &["eps"])
            .unwrap_or_else(|| SchemeConfig::default_eps(n))
    };
    let integrator = cx
        .string(sch_t, "scheme", &["integrator"])
        .unwrap_or_else(|| "euler_maruyama".to_string());
    if let Err(Error::Config(v)) = parse_integrator(&integrator) {
        cx.errors.extend(v);
    }

    // Noise block.
    let noi_t = cx.block("noise");
    let family = cx
        .string(noi_t, "noise", &["family"])
        .unwrap_or_else(|| "zero".to_string());
    let k_given = cx.uint(noi_t, "noise", &["k", "K"]);
    let alphas_given = cx.float_vec(noi_t, "noise", &["alphas"]);
    let decay_given = cx.float(noi_t, "noise", &["decay"]);
    if alphas_given.is_some() && decay_given.is_some() {
        cx.errors
            .push("give either `noise.alphas` or `noise.decay`, not both".to_string());
    }
    let direction = cx
        .string(noi_t, "noise", &["direction"])
        .unwrap_or_else(|| "solenoidal".to_string());
    if let Err(Error::Config(v)) = parse_direction(&direction) {
        cx.errors.extend(v);
    }
    let noise_seed = cx.seed(noi_t, "noise", &["seed"]).unwrap_or(seed);

    let (k, alphas) = if family == "zero" {
        if let Some(a) = &alphas_given {
            if !a.is_empty() {
                cx.errors
                    .push("the zero noise family takes no amplitudes".to_string());
            }
        }
        (0, Vec::new())
    } else {
        match alphas_given {
            Some(a) => {
                if let Some(kg) = k_given {
                    if kg != a.len() {
                        cx.errors.push(format!(
                            "`noise.k` = {kg} disagrees with the {} explicit amplitudes",
                            a.len()
                        ));
                    }
                }
                (a.len(), a)
            }
            None => {
                let k = k_given.unwrap_or(8);
                (k, NoiseModel::decay_alphas(k, decay_given.unwrap_or(2.0)))
            }
        }
    };

    // Build the model once: its own constructor errors join the list, and
    // its exact bounds anchor the declared ones.
    let model = match family.as_str() {
        "zero" => Some(NoiseModel::zero()),
        "linear" => match NoiseModel::linear(alphas.clone()) {
            Ok(m) => Some(m),
            Err(e) => {
                push_error(&mut cx.errors, e);
                None
            }
        },
        "saturated_linear" => match NoiseModel::saturated_linear(alphas.clone()) {
            Ok(m) => Some(m),
            Err(e) => {
                push_error(&mut cx.errors, e);
                None
            }
        },
        "additive" => match parse_direction(&direction) {
            Ok(dir) => match NoiseModel::additive_modes(dim, alphas.clone(), dir) {
                Ok(m) => Some(m),
                Err(e) => {
                    push_error(&mut cx.errors, e);
                    None
                }
            },
            Err(_) => None,
        },
        other => {
            cx.errors.push(format!(
                "unknown noise family `{other}` (expected zero, linear, saturated_linear, or additive)"
            ));
            None
        }
    };

    let (exact_d0, exact_d1) = model
        .as_ref()
        .map(|m| (m.d0(), m.d1()))
        .unwrap_or((0.0, 0.0));
    let d0 = cx.float(noi_t, "noise", &["d0", "D0"]).unwrap_or(exact_d0);
    let d1 = cx.float(noi_t, "noise", &["d1", "D1"]).unwrap_or(exact_d1);
    if d0 < exact_d0 * (1.0 - 1e-12) - 1e-300 {
        cx.errors.push(format!(
            "declared D0 = {d0} is below the family's exact growth bound {exact_d0}"
        ));
    }
    if d1 < exact_d1 * (1.0 - 1e-12) - 1e-300 {
        cx.errors.push(format!(
            "declared D1 = {d1} is below the family's exact Lipschitz bound {exact_d1}"
        ));
    }

    // Initial block.
    let ini_t = cx.block("initial");
    let preset = cx
        .string(ini_t, "initial", &["preset"])
        .unwrap_or_else(|| "taylor_green".to_string());
    let file = cx.string(ini_t, "initial", &["file"]).unwrap_or_default();
    let initial_seed = cx.seed(ini_t, "initial", &["seed"]).unwrap_or(1);
    let kmax = cx.uint(ini_t, "initial", &["kmax"]).unwrap_or(n.max(1));
    let idecay = cx.float(ini_t, "initial", &["decay"]).unwrap_or(1.5);
    let amplitude = cx.float(ini_t, "initial", &["amplitude"]).unwrap_or(1.0);
    match preset.as_str() {
        "taylor_green" | "shear" => {}
        "random_divfree" => {
            if kmax == 0 || kmax > n {
                cx.errors.push(format!(
                    "`initial.kmax` = {kmax} must lie in 1..={n} for a random field at cutoff {n}"
                ));
            }
            if !(amplitude > 0.0) || !amplitude.is_finite() {
                cx.errors.push(format!(
                    "`initial.amplitude` must be positive and finite, got {amplitude}"
                ));
            }
            if !idecay.is_finite() {
                cx.errors
                    .push(format!("`initial.decay` must be finite, got {idecay}"));
            }
        }
        "file" => {
            if file.is_empty() {
                cx.errors
                    .push("preset = \"file\" requires `initial.file`".to_string());
            }
        }
        other => cx.errors.push(format!(
            "unknown initial preset `{other}` (expected taylor_green, shear, random_divfree, or file)"
        )),
    }
    if preset != "file" && !file.is_empty() {
        cx.errors
            .push("`initial.file` applies only to preset = \"file\"".to_string());
    }

    // Observers block.
    let obs_t = cx.block("observers");
    let energy_stride = cx.uint(obs_t, "observers", &["energy_stride"]).unwrap_or(1);
    let snapshot_stride = cx
        .uint(obs_t, "observers", &["snapshot_stride"])
        .unwrap_or(0);
    let probes = cx.probes(obs_t).unwrap_or_default();
    for (i, p) in probes.iter().enumerate() {
        if !(p[0] >= 0.0) || p[0] > t_end * (1.0 + 1e-12) {
            cx.errors.push(format!(
                "probe {i} time {} outside the horizon [0, {t_end}]",
                p[0]
            ));
        }
        if p.iter().any(|c| !c.is_finite()) {
            cx.errors.push(format!("probe {i} is not finite"));
        }
    }

    // Ensemble block.
    let ens_t = cx.block("ensemble");
    let members = cx.uint(ens_t, "ensemble", &["members"]).unwrap_or(8);
    let histogram_bins = cx.uint(ens_t, "ensemble", &["histogram_bins"]).unwrap_or(16);
    if members == 0 {
        cx.errors
            .push("ensemble needs at least one member".to_string());
    }
    if histogram_bins == 0 {
        cx.errors
            .push("histogram needs at least one bin".to_string());
    }

    // Ladder block. Defaults inherit the scheme's viscosity law when one
    // was given explicitly.
    let lad_t = cx.block("ladder");
    let cutoffs = cx
        .uint_vec(lad_t, "ladder", &["cutoffs"])
        .unwrap_or_else(|| vec![8, 16, 32, 64]);
    let max_cut = cutoffs.iter().copied().max().unwrap_or(0);
    let n_ref = cx
        .uint(lad_t, "ladder", &["n_ref"])
        .unwrap_or_else(|| (4 * max_cut).max(128));
    let dt_ref = cx.float(lad_t, "ladder", &["dt_ref"]).unwrap_or(dt / 4.0);
    let sample_times = cx
        .float_vec(lad_t, "ladder", &["sample_times"])
        .unwrap_or_else(|| vec![t_end]);
    let (def_coeff, def_theta) = if law_given {
        let law = Cx::lookup(sch_t, &["eps_law"]).and_then(Value::as_table);
        (
            law.and_then(|t| t.get("coeff")).and_then(Value::as_float).unwrap_or(1.0),
            law.and_then(|t| t.get("theta")).and_then(Value::as_float).unwrap_or(1.0),
        )
    } else {
        (1.0, 1.0)
    };
    let eps_coeff = cx.float(lad_t, "ladder", &["eps_coeff"]).unwrap_or(def_coeff);
    let eps_theta = cx.float(lad_t, "ladder", &["eps_theta"]).unwrap_or(def_theta);
    let gronwall_slack = cx
        .float(lad_t, "ladder", &["gronwall_slack"])
        .unwrap_or(0.2);

    if cutoffs.len() < 2 {
        cx.errors
            .push("ladder needs at least two cutoffs".to_string());
    }
    if cutoffs.windows(2).any(|w| w[0] >= w[1]) {
        cx.errors.push(format!(
            "ladder cutoffs must be strictly increasing, got {cutoffs:?}"
        ));
    }
    if n_ref < max_cut {
        cx.errors.push(format!(
            "`ladder.n_ref` = {n_ref} is below the finest ladder level {max_cut}"
        ));
    }
    if !(dt_ref > 0.0) {
        cx.errors
            .push(format!("`ladder.dt_ref` must be positive, got {dt_ref}"));
    } else {
        let ratio = dt / dt_ref;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio < 1.0 - 1e-9 {
            cx.errors.push(format!(
                "`ladder.dt_ref` = {dt_ref} must divide the time step {dt}"
            ));
        }
    }
    for (i, &t) in sample_times.iter().enumerate() {
        if !(t > 0.0) || t > t_end * (1.0 + 1e-12) {
            cx.errors.push(format!(
                "`ladder.sample_times[{i}]` = {t} outside the horizon (0, {t_end}]"
            ));
        }
    }
    if !(gronwall_slack >= 0.0) || !gronwall_slack.is_finite() {
        cx.errors.push(format!(
            "`ladder.gronwall_slack` must be finite and >= 0, got {gronwall_slack}"
        ));
    }

    let doc = ConfigDoc {
        seed,
        out,
        lattice: LatticeDoc { dim, n, grid },
        scheme: SchemeDoc {
            m,
            eps,
            dt,
            t_end,
            integrator,
        },
        noise: NoiseDoc {
            family,
            k,
            alphas,
            direction,
            d0,
            d1,
            seed: noise_seed,
        },
        initial: InitialDoc {
            preset,
            file,
            seed: initial_seed,
            kmax,
            decay: idecay,
            amplitude,
        },
        observers: ObserversDoc {
            energy_stride,
            snapshot_stride,
            probes,
        },
        ensemble: EnsembleDoc {
            members,
            histogram_bins,
        },
        ladder: LadderDoc {
            cutoffs,
            n_ref,
            dt_ref,
            sample_times,
            eps_coeff,
            eps_theta,
            gronwall_slack,
        },
    };

    // Cross-field scheme validation against the actual noise model.
    if let Some(model) = &model {
        if let Ok(cfg) = doc.scheme_config() {
            cx.errors.extend(cfg.violations(model));
        }
    }

    let mut errors = cx.errors;
    if errors.is_empty() {
        Ok(doc)
    } else {
        errors.sort();
        errors.dedup();
        Err(Error::Config(errors))
    }
}

fn push_error(errors: &mut Vec<String>, e: Error) {
    match e {
        Error::Config(v) => errors.extend(v),
        other => errors.push(other.to_string()),
    }
}
