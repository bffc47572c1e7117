//! Line-based scenario configuration.
//!
//! ```text
//! # comment
//! scenario = S1          # required; selects the defaults for every other key
//! seed = 1
//! replicas = 100000
//! x0 = 0
//! horizon = 1
//! step = 0.0009765625
//! truncation = 0.000001  # smallest sampled jump size
//! output = out/s1        # optional
//!
//! [triplet]
//! drift = 0.3
//! brownian_variance = 0
//! compensate = false
//! brownian_cells_per_unit = 4096
//!
//! [measure.atom.1]       # any number of atoms; or one [measure.family],
//! size = 1               # [measure.density] or [measure.none] section
//! rate = 2
//!
//! [coefficients]
//! a = logistic(0, 1, 1)
//! sigma = constant(1)
//! randomize = false      # draw a fresh catalogue field per replica
//!
//! [diagnostics]
//! window = auto          # atom window; auto = 1e-6 * sample range
//! threshold = auto       # atom threshold; auto = 3 * sqrt(ln n / n)
//! spacing = 0.000244140625
//! halfwidth = 0.000000001
//! eta = 0.25
//! upper = 1
//! ks_batch = 1000
//! monotone_paths = 100
//! t_grid = 64
//! fd_step = 0.001
//! ```
//!
//! `[measure.family]` takes `size_base`, `rate_base`, `levels` and
//! `idealized_infinite` (sizes `size_base^n`, rates `rate_base^n`);
//! `[measure.density]` takes `scale`, `exponent`, `lower`, `upper`
//! (intensity `scale·|z|^-exponent`). Fields are written `name(args)`:
//! `constant(c)`, `linear(k)`, `affine(k, c)`, `logistic(offset, amplitude,
//! slope)`, `arctan_diffusion`, `plateau(level, center, half_width, ramp,
//! slope)` and `sine(offset, amplitude, frequency)`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::field::{DiffusionField, ScalarField};
use crate::levy_spec::{Atom, JumpMeasureSpec, LevyTriplet};
use crate::path_sampler::PathSampler;

use super::catalogue::{default_config, ScenarioId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("line {line}: unknown section `[{section}]`")]
    UnknownSection { line: usize, section: String },

    #[error("duplicate key `{key}` on lines {first} and {second}")]
    DuplicateKey { key: String, first: usize, second: usize },

    #[error("`{key}` out of range: {message}")]
    Range { key: String, message: String },

    #[error("unknown scenario `{0}` (expected S1..S7)")]
    UnknownScenario(String),

    #[error("missing required key `scenario`")]
    MissingScenario,

    #[error("unknown field `{0}`")]
    UnknownField(String),
}

fn range(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Range { key: key.to_string(), message: message.into() }
}

/// A coefficient from the closed-form catalogue.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FieldSpec {
    Constant(f64),
    Linear(f64),
    Affine(f64, f64),
    Logistic(f64, f64, f64),
    ArctanDiffusion,
    Plateau(f64, f64, f64, f64, f64),
    Sine(f64, f64, f64),
}

impl FieldSpec {
    pub fn build(&self) -> ScalarField<f64> {
        match *self {
            FieldSpec::Constant(c) => ScalarField::constant(c),
            FieldSpec::Linear(k) => ScalarField::linear(k),
            FieldSpec::Affine(k, c) => ScalarField::affine(k, c),
            FieldSpec::Logistic(o, a, s) => ScalarField::logistic(o, a, s),
            FieldSpec::ArctanDiffusion => ScalarField::arctan_diffusion(),
            FieldSpec::Plateau(l, c, w, r, s) => ScalarField::plateau(l, c, w, r, s),
            FieldSpec::Sine(o, a, f) => ScalarField::sine(o, a, f),
        }
    }

    fn args(&self) -> Vec<f64> {
        match *self {
            FieldSpec::Constant(c) | FieldSpec::Linear(c) => vec![c],
            FieldSpec::Affine(k, c) => vec![k, c],
            FieldSpec::Logistic(a, b, c) | FieldSpec::Sine(a, b, c) => vec![a, b, c],
            FieldSpec::ArctanDiffusion => vec![],
            FieldSpec::Plateau(a, b, c, d, e) => vec![a, b, c, d, e],
        }
    }

    fn name(&self) -> &'static str {
        match self {
            FieldSpec::Constant(_) => "constant",
            FieldSpec::Linear(_) => "linear",
            FieldSpec::Affine(..) => "affine",
            FieldSpec::Logistic(..) => "logistic",
            FieldSpec::ArctanDiffusion => "arctan_diffusion",
            FieldSpec::Plateau(..) => "plateau",
            FieldSpec::Sine(..) => "sine",
        }
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args = self.args();
        if args.is_empty() {
            return f.write_str(self.name());
        }
        let list: Vec<String> = args.iter().map(|a| a.to_string()).collect();
        write!(f, "{}({})", self.name(), list.join(", "))
    }
}

impl FromStr for FieldSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        let s = s.trim();
        let unknown = || ConfigError::UnknownField(s.to_string());
        let (name, args) = match s.find('(') {
            Some(open) => {
                let inner = s[open + 1..].strip_suffix(')').ok_or_else(unknown)?;
                let args = if inner.trim().is_empty() {
                    Vec::new()
                } else {
                    inner
                        .split(',')
                        .map(|a| a.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
                        .collect::<Option<Vec<f64>>>()
                        .ok_or_else(unknown)?
                };
                (s[..open].trim(), args)
            }
            None => (s, Vec::new()),
        };
        Ok(match (name, args.as_slice()) {
            ("constant", &[c]) => FieldSpec::Constant(c),
            ("linear", &[k]) => FieldSpec::Linear(k),
            ("affine", &[k, c]) => FieldSpec::Affine(k, c),
            ("logistic", &[o, a, sl]) => FieldSpec::Logistic(o, a, sl),
            ("arctan_diffusion", &[]) => FieldSpec::ArctanDiffusion,
            ("plateau", &[l, c, w, r, sl]) => FieldSpec::Plateau(l, c, w, r, sl),
            ("sine", &[o, a, fr]) => FieldSpec::Sine(o, a, fr),
            _ => return Err(unknown()),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TripletConfig {
    pub drift: f64,
    pub brownian_variance: f64,
    pub compensate: bool,
    pub brownian_cells_per_unit: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FamilyConfig {
    pub size_base: f64,
    pub rate_base: f64,
    pub levels: u32,
    pub idealized_infinite: bool,
}

impl FamilyConfig {
    pub fn dyadic(levels: u32) -> Self {
        Self { size_base: 0.5, rate_base: 2.0, levels, idealized_infinite: true }
    }
}

impl Default for FamilyConfig {
    fn default() -> Self {
        Self::dyadic(12)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityConfig {
    pub scale: f64,
    pub exponent: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self { scale: 1.0, exponent: 1.5, lower: -1.0, upper: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeasureConfig {
    Zero,
    /// `(size, rate)` pairs, at least one.
    Atoms(Vec<(f64, f64)>),
    Family(FamilyConfig),
    Density(DensityConfig),
}

impl MeasureConfig {
    pub fn build(&self) -> crate::error::Result<JumpMeasureSpec<f64>> {
        match self {
            MeasureConfig::Zero => Ok(JumpMeasureSpec::zero()),
            MeasureConfig::Atoms(a) => {
                JumpMeasureSpec::finite_atomic(a.iter().map(|&(size, rate)| Atom { size, rate }).collect())
            }
            MeasureConfig::Family(f) => {
                let (sb, rb) = (f.size_base, f.rate_base);
                JumpMeasureSpec::truncated_family(
                    move |n| sb.powi(n as i32),
                    move |n| rb.powi(n as i32),
                    f.levels,
                    f.idealized_infinite,
                )
            }
            MeasureConfig::Density(d) => JumpMeasureSpec::power_density(d.scale, d.exponent, d.lower, d.upper),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefficientConfig {
    pub a: FieldSpec,
    pub sigma: FieldSpec,
    pub randomize: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticsConfig {
    /// `None` selects the default atom window.
    pub window: Option<f64>,
    /// `None` selects the default atom threshold.
    pub threshold: Option<f64>,
    pub spacing: f64,
    pub halfwidth: f64,
    pub eta: f64,
    pub upper: f64,
    pub ks_batch: usize,
    pub monotone_paths: usize,
    pub t_grid: usize,
    pub fd_step: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            window: None,
            threshold: None,
            spacing: 2f64.powi(-12),
            halfwidth: 1e-9,
            eta: 0.25,
            upper: 1.0,
            ks_batch: 1000,
            monotone_paths: 100,
            t_grid: 64,
            fd_step: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: ScenarioId,
    pub seed: u64,
    pub replicas: usize,
    pub x0: f64,
    pub horizon: f64,
    pub step: f64,
    pub truncation: f64,
    pub output: Option<PathBuf>,
    pub triplet: TripletConfig,
    pub measure: MeasureConfig,
    pub coefficients: CoefficientConfig,
    pub diagnostics: DiagnosticsConfig,
}

pub const MAX_REPLICAS: usize = 100_000_000;

impl ScenarioConfig {
    pub fn triplet(&self) -> crate::error::Result<LevyTriplet<f64>> {
        LevyTriplet::new(self.triplet.drift, self.triplet.brownian_variance, self.measure.build()?)
    }

    pub fn sampler(&self) -> crate::error::Result<PathSampler<f64>> {
        PathSampler::with_brownian_resolution(
            &self.triplet()?,
            self.horizon,
            self.truncation,
            self.triplet.compensate,
            self.triplet.brownian_cells_per_unit,
        )
    }

    pub fn drift_field(&self) -> ScalarField<f64> {
        self.coefficients.a.build()
    }

    pub fn diffusion_field(&self) -> DiffusionField<f64> {
        DiffusionField::new(self.coefficients.sigma.build())
    }

    /// Range checks on every numeric parameter.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(range(key, format!("must be positive and finite, got {v}")))
            }
        };
        let finite = |key: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(range(key, format!("must be finite, got {v}")))
            }
        };
        if self.replicas == 0 || self.replicas > MAX_REPLICAS {
            return Err(range("replicas", format!("must lie in 1..={MAX_REPLICAS}, got {}", self.replicas)));
        }
        finite("x0", self.x0)?;
        positive("horizon", self.horizon)?;
        positive("step", self.step)?;
        if self.step > self.horizon {
            return Err(range("step", "must not exceed the horizon"));
        }
        positive("truncation", self.truncation)?;
        finite("triplet.drift", self.triplet.drift)?;
        if !(self.triplet.brownian_variance >= 0.0) || !self.triplet.brownian_variance.is_finite() {
            return Err(range("triplet.brownian_variance", "must be >= 0"));
        }
        if self.triplet.brownian_cells_per_unit == 0 || self.triplet.brownian_cells_per_unit > 1 << 20 {
            return Err(range("triplet.brownian_cells_per_unit", "must lie in 1..=1048576"));
        }
        match &self.measure {
            MeasureConfig::Zero => {}
            MeasureConfig::Atoms(atoms) => {
                if atoms.is_empty() {
                    return Err(range("measure.atom", "an atom list needs at least one atom"));
                }
                for (i, &(size, rate)) in atoms.iter().enumerate() {
                    if size == 0.0 || !size.is_finite() {
                        return Err(range(&format!("measure.atom.{}.size", i + 1), "must be finite and nonzero"));
                    }
                    if !(rate >= 0.0) || !rate.is_finite() {
                        return Err(range(&format!("measure.atom.{}.rate", i + 1), "must be finite and >= 0"));
                    }
                }
            }
            MeasureConfig::Family(f) => {
                if !(f.size_base > 0.0 && f.size_base < 1.0) {
                    return Err(range("measure.family.size_base", "must lie in (0, 1)"));
                }
                positive("measure.family.rate_base", f.rate_base)?;
                if !(1..=40).contains(&f.levels) {
                    return Err(range("measure.family.levels", "must lie in 1..=40"));
                }
            }
            MeasureConfig::Density(d) => {
                positive("measure.density.scale", d.scale)?;
                if !(d.exponent >= 0.0 && d.exponent < 3.0) {
                    return Err(range("measure.density.exponent", "must lie in [0, 3)"));
                }
                if !(d.lower < 0.0 && d.lower.is_finite()) {
                    return Err(range("measure.density.lower", "must be negative and finite"));
                }
                positive("measure.density.upper", d.upper)?;
            }
        }
        let dg = &self.diagnostics;
        if let Some(w) = dg.window {
            positive("diagnostics.window", w)?;
        }
        if let Some(t) = dg.threshold {
            if !(t > 0.0 && t < 1.0) {
                return Err(range("diagnostics.threshold", "must lie in (0, 1)"));
            }
        }
        positive("diagnostics.spacing", dg.spacing)?;
        positive("diagnostics.halfwidth", dg.halfwidth)?;
        if dg.halfwidth >= dg.spacing / 2.0 {
            return Err(range("diagnostics.halfwidth", "must be below spacing / 2"));
        }
        positive("diagnostics.eta", dg.eta)?;
        if !(dg.upper >= dg.eta) || !dg.upper.is_finite() {
            return Err(range("diagnostics.upper", "must be finite and >= eta"));
        }
        if dg.ks_batch < crate::diagnostics::MIN_BATCH {
            return Err(range("diagnostics.ks_batch", format!("must be at least {}", crate::diagnostics::MIN_BATCH)));
        }
        if dg.t_grid < 2 {
            return Err(range("diagnostics.t_grid", "must be at least 2"));
        }
        positive("diagnostics.fd_step", dg.fd_step)?;
        Ok(())
    }

    /// Renders the full document; [`parse_config`] reads it back to an equal value.
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

fn opt_auto(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

impl fmt::Display for ScenarioConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario = {}", self.scenario)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "replicas = {}", self.replicas)?;
        writeln!(f, "x0 = {}", self.x0)?;
        writeln!(f, "horizon = {}", self.horizon)?;
        writeln!(f, "step = {}", self.step)?;
        writeln!(f, "truncation = {}", self.truncation)?;
        if let Some(out) = &self.output {
            writeln!(f, "output = {}", out.display())?;
        }
        let t = &self.triplet;
        writeln!(f, "\n[triplet]")?;
        writeln!(f, "drift = {}", t.drift)?;
        writeln!(f, "brownian_variance = {}", t.brownian_variance)?;
        writeln!(f, "compensate = {}", t.compensate)?;
        writeln!(f, "brownian_cells_per_unit = {}", t.brownian_cells_per_unit)?;
        match &self.measure {
            MeasureConfig::Zero => writeln!(f, "\n[measure.none]")?,
            MeasureConfig::Atoms(atoms) => {
                for (i, (size, rate)) in atoms.iter().enumerate() {
                    writeln!(f, "\n[measure.atom.{}]\nsize = {size}\nrate = {rate}", i + 1)?;
                }
            }
            MeasureConfig::Family(m) => {
                writeln!(f, "\n[measure.family]")?;
                writeln!(f, "size_base = {}\nrate_base = {}", m.size_base, m.rate_base)?;
                writeln!(f, "levels = {}\nidealized_infinite = {}", m.levels, m.idealized_infinite)?;
            }
            MeasureConfig::Density(d) => {
                writeln!(f, "\n[measure.density]")?;
                writeln!(f, "scale = {}\nexponent = {}\nlower = {}\nupper = {}", d.scale, d.exponent, d.lower, d.upper)?;
            }
        }
        let c = &self.coefficients;
        writeln!(f, "\n[coefficients]\na = {}\nsigma = {}\nrandomize = {}", c.a, c.sigma, c.randomize)?;
        let d = &self.diagnostics;
        writeln!(f, "\n[diagnostics]")?;
        writeln!(f, "window = {}\nthreshold = {}", opt_auto(d.window), opt_auto(d.threshold))?;
        writeln!(f, "spacing = {}\nhalfwidth = {}", d.spacing, d.halfwidth)?;
        writeln!(f, "eta = {}\nupper = {}", d.eta, d.upper)?;
        writeln!(f, "ks_batch = {}\nmonotone_paths = {}", d.ks_batch, d.monotone_paths)?;
        writeln!(f, "t_grid = {}\nfd_step = {}", d.t_grid, d.fd_step)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Section {
    Root,
    Triplet,
    Atom(u32),
    NoJumps,
    Family,
    Density,
    Coefficients,
    Diagnostics,
}

impl Section {
    fn parse(name: &str, line: usize) -> Result<Self, ConfigError> {
        Ok(match name {
            "triplet" => Section::Triplet,
            "measure.family" => Section::Family,
            "measure.none" => Section::NoJumps,
            "measure.density" => Section::Density,
            "coefficients" => Section::Coefficients,
            "diagnostics" => Section::Diagnostics,
            _ => match name.strip_prefix("measure.atom.").and_then(|k| k.parse::<u32>().ok()) {
                Some(k) => Section::Atom(k),
                None => return Err(ConfigError::UnknownSection { line, section: name.to_string() }),
            },
        })
    }

    fn qualify(&self, key: &str) -> String {
        match self {
            Section::Root => key.to_string(),
            Section::Triplet => format!("triplet.{key}"),
            Section::Atom(k) => format!("measure.atom.{k}.{key}"),
            Section::NoJumps => format!("measure.none.{key}"),
            Section::Family => format!("measure.family.{key}"),
            Section::Density => format!("measure.density.{key}"),
            Section::Coefficients => format!("coefficients.{key}"),
            Section::Diagnostics => format!("diagnostics.{key}"),
        }
    }
}

struct Entry {
    section: Section,
    key: String,
    value: String,
    line: usize,
}

impl Entry {
    fn name(&self) -> String {
        self.section.qualify(&self.key)
    }

    fn syntax(&self, what: &str) -> ConfigError {
        ConfigError::Syntax { line: self.line, message: format!("`{}`: expected {what}, got `{}`", self.name(), self.value) }
    }

    fn real(&self) -> Result<f64, ConfigError> {
        let v: f64 = self.value.parse().map_err(|_| self.syntax("a number"))?;
        if !v.is_finite() {
            return Err(range(&self.name(), format!("must be finite, got {v}")));
        }
        Ok(v)
    }

    /// Integers may be written in exponent notation (`1e5`).
    fn integer(&self) -> Result<i128, ConfigError> {
        if let Ok(v) = self.value.parse::<i128>() {
            return Ok(v);
        }
        let v = self.real()?;
        if v.fract() != 0.0 || v.abs() > 1e30 {
            return Err(self.syntax("an integer"));
        }
        Ok(v as i128)
    }

    fn unsigned<U: TryFrom<i128>>(&self) -> Result<U, ConfigError> {
        let v = self.integer()?;
        U::try_from(v).map_err(|_| range(&self.name(), format!("must be a nonnegative integer in range, got {v}")))
    }

    fn boolean(&self) -> Result<bool, ConfigError> {
        match self.value.as_str() {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(self.syntax("true or false")),
        }
    }

    fn auto_real(&self) -> Result<Option<f64>, ConfigError> {
        if self.value == "auto" {
            Ok(None)
        } else {
            self.real().map(Some)
        }
    }

    fn field(&self) -> Result<FieldSpec, ConfigError> {
        self.value.parse()
    }

    fn unknown(&self) -> ConfigError {
        ConfigError::UnknownKey { line: self.line, key: self.name() }
    }
}

/// Entries in order, plus the line of a `[measure.none]` header if present.
fn tokenize(text: &str) -> Result<(Vec<Entry>, Option<usize>), ConfigError> {
    let mut section = Section::Root;
    let mut entries = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut seen_sections: BTreeMap<Section, usize> = BTreeMap::new();
    let mut no_jumps = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Syntax { line, message: "unterminated section header".into() })?
                .trim();
            section = Section::parse(name, line)?;
            if section == Section::NoJumps {
                no_jumps = Some(line);
            }
            if let Some(first) = seen_sections.insert(section.clone(), line) {
                return Err(ConfigError::DuplicateKey { key: format!("[{name}]"), first, second: line });
            }
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line, message: format!("expected `key = value`, got `{content}`") })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Syntax { line, message: "empty key or value".into() });
        }
        let name = section.qualify(key);
        if let Some(first) = seen.insert(name.clone(), line) {
            return Err(ConfigError::DuplicateKey { key: name, first, second: line });
        }
        entries.push(Entry { section: section.clone(), key: key.to_string(), value: value.to_string(), line });
    }
    Ok((entries, no_jumps))
}

/// Parses a configuration document. Every key not given takes the default
/// of the selected scenario; a measure section replaces the default measure.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let (entries, no_jumps) = tokenize(text)?;
    let id_entry = entries
        .iter()
        .find(|e| e.section == Section::Root && e.key == "scenario")
        .ok_or(ConfigError::MissingScenario)?;
    let id: ScenarioId = id_entry.value.parse()?;
    let mut cfg = default_config(id);

    let mut atoms: BTreeMap<u32, (Option<f64>, Option<f64>)> = BTreeMap::new();
    let mut family: Option<FamilyConfig> = None;
    let mut density: Option<DensityConfig> = None;
    let mut measure_sections = BTreeMap::new();
    if let Some(line) = no_jumps {
        measure_sections.insert(3u8, line);
    }

    for e in &entries {
        match &e.section {
            Section::Root => match e.key.as_str() {
                "scenario" => {}
                "seed" => cfg.seed = e.unsigned()?,
                "replicas" => cfg.replicas = e.unsigned()?,
                "x0" => cfg.x0 = e.real()?,
                "horizon" => cfg.horizon = e.real()?,
                "step" => cfg.step = e.real()?,
                "truncation" => cfg.truncation = e.real()?,
                "output" => cfg.output = Some(PathBuf::from(&e.value)),
                _ => return Err(e.unknown()),
            },
            Section::Triplet => match e.key.as_str() {
                "drift" => cfg.triplet.drift = e.real()?,
                "brownian_variance" => cfg.triplet.brownian_variance = e.real()?,
                "compensate" => cfg.triplet.compensate = e.boolean()?,
                "brownian_cells_per_unit" => cfg.triplet.brownian_cells_per_unit = e.unsigned()?,
                _ => return Err(e.unknown()),
            },
            Section::Atom(k) => {
                measure_sections.insert(0, e.line);
                let slot = atoms.entry(*k).or_default();
                match e.key.as_str() {
                    "size" => slot.0 = Some(e.real()?),
                    "rate" => slot.1 = Some(e.real()?),
                    _ => return Err(e.unknown()),
                }
            }
            Section::NoJumps => return Err(e.unknown()),
            Section::Family => {
                measure_sections.insert(1, e.line);
                let f = family.get_or_insert_with(FamilyConfig::default);
                match e.key.as_str() {
                    "size_base" => f.size_base = e.real()?,
                    "rate_base" => f.rate_base = e.real()?,
                    "levels" => f.levels = e.unsigned()?,
                    "idealized_infinite" => f.idealized_infinite = e.boolean()?,
                    _ => return Err(e.unknown()),
                }
            }
            Section::Density => {
                measure_sections.insert(2, e.line);
                let d = density.get_or_insert_with(DensityConfig::default);
                match e.key.as_str() {
                    "scale" => d.scale = e.real()?,
                    "exponent" => d.exponent = e.real()?,
                    "lower" => d.lower = e.real()?,
                    "upper" => d.upper = e.real()?,
                    _ => return Err(e.unknown()),
                }
            }
            Section::Coefficients => match e.key.as_str() {
                "a" => cfg.coefficients.a = e.field()?,
                "sigma" => cfg.coefficients.sigma = e.field()?,
                "randomize" => cfg.coefficients.randomize = e.boolean()?,
                _ => return Err(e.unknown()),
            },
            Section::Diagnostics => {
                let d = &mut cfg.diagnostics;
                match e.key.as_str() {
                    "window" => d.window = e.auto_real()?,
                    "threshold" => d.threshold = e.auto_real()?,
                    "spacing" => d.spacing = e.real()?,
                    "halfwidth" => d.halfwidth = e.real()?,
                    "eta" => d.eta = e.real()?,
                    "upper" => d.upper = e.real()?,
                    "ks_batch" => d.ks_batch = e.unsigned()?,
                    "monotone_paths" => d.monotone_paths = e.unsigned()?,
                    "t_grid" => d.t_grid = e.unsigned()?,
                    "fd_step" => d.fd_step = e.real()?,
                    _ => return Err(e.unknown()),
                }
            }
        }
    }

    if measure_sections.len() > 1 {
        let lines: Vec<usize> = measure_sections.values().copied().collect();
        return Err(ConfigError::Syntax {
            line: lines[1],
            message: "atom, family and density measure sections cannot be combined".into(),
        });
    }
    if !atoms.is_empty() {
        let mut list = Vec::with_capacity(atoms.len());
        for (k, (size, rate)) in atoms {
            let size = size.ok_or_else(|| range(&format!("measure.atom.{k}.size"), "missing"))?;
            let rate = rate.ok_or_else(|| range(&format!("measure.atom.{k}.rate"), "missing"))?;
            list.push((size, rate));
        }
        cfg.measure = MeasureConfig::Atoms(list);
    } else if let Some(f) = family {
        cfg.measure = MeasureConfig::Family(f);
    } else if let Some(d) = density {
        cfg.measure = MeasureConfig::Density(d);
    } else if no_jumps.is_some() {
        cfg.measure = MeasureConfig::Zero;
    }
    cfg.validate()?;
    Ok(cfg)
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn field() -> impl Strategy<Value = FieldSpec> {
        let r = -5.0f64..5.0;
        prop_oneof![
            r.clone().prop_map(FieldSpec::Constant),
            r.clone().prop_map(FieldSpec::Linear),
            (r.clone(), r.clone()).prop_map(|(a, b)| FieldSpec::Affine(a, b)),
            (r.clone(), r.clone(), r.clone()).prop_map(|(a, b, c)| FieldSpec::Logistic(a, b, c)),
            Just(FieldSpec::ArctanDiffusion),
            (r.clone(), r.clone(), r.clone()).prop_map(|(a, b, c)| FieldSpec::Sine(a, b, c)),
        ]
    }

    proptest! {
        #[test]
        fn serialize_then_parse_is_identity(
            scenario in 0usize..7,
            seed in any::<u64>(),
            replicas in 1usize..1_000_000,
            x0 in -10.0f64..10.0,
            drift in -20.0f64..20.0,
            a in field(),
            sigma in field(),
            atoms in proptest::collection::vec((0.01f64..3.0, 0.0f64..5.0), 0..4),
            window in proptest::option::of(1e-9f64..1e-3),
        ) {
            let mut cfg = default_config(ScenarioId::ALL[scenario]);
            cfg.seed = seed;
            cfg.replicas = replicas;
            cfg.x0 = x0;
            cfg.triplet.drift = drift;
            cfg.coefficients.a = a;
            cfg.coefficients.sigma = sigma;
            if !atoms.is_empty() {
                cfg.measure = MeasureConfig::Atoms(atoms);
            }
            cfg.diagnostics.window = window;
            let text = cfg.to_text();
            let back = parse_config(&text).unwrap();
            prop_assert_eq!(&back, &cfg);
            prop_assert_eq!(back.to_text(), text);
        }
    }
}
