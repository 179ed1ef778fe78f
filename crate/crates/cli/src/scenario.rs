//! Scenario files: flat TOML with one key per parameter.
//!
//! A scenario may name a `preset`; the preset's keys are loaded first and the
//! scenario's own keys override them. Command-line overrides are applied last.

use std::path::PathBuf;

use cbw_core::chain::Arm;
use cbw_core::time_domain::{
    AomConfig, Event, EventAction, EventSchedule, ImperfectionModel, CARRIER_HZ,
};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Sweep,
    Time,
    Fisher,
    Harmonics,
    Calibrate,
    ComparePbw,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Sweep => "sweep",
            Kind::Time => "time",
            Kind::Fisher => "fisher",
            Kind::Harmonics => "harmonics",
            Kind::Calibrate => "calibrate",
            Kind::ComparePbw => "compare_pbw",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionName {
    BlockArm,
    UnblockArm,
    SetDummyPhase,
    SetUpperFrequency,
}

/// One `[[events]]` table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventEntry {
    pub t: f64,
    pub action: ActionName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<Arm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mzi: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hz: Option<f64>,
}

impl EventEntry {
    fn to_event(&self, index: usize) -> Result<Event, CliError> {
        let missing = |name: &str| CliError::semantic(format!("events[{index}].{name}"), "required for this action");
        let action = match self.action {
            ActionName::BlockArm | ActionName::UnblockArm => {
                let block = self.block.ok_or_else(|| missing("block"))?;
                let arm = self.arm.ok_or_else(|| missing("arm"))?;
                if self.action == ActionName::BlockArm {
                    EventAction::BlockArm { block, arm }
                } else {
                    EventAction::UnblockArm { block, arm }
                }
            }
            ActionName::SetDummyPhase => EventAction::SetDummyPhase { psi: self.psi.ok_or_else(|| missing("psi"))? },
            ActionName::SetUpperFrequency => EventAction::SetUpperFrequency {
                mzi: self.mzi.ok_or_else(|| missing("mzi"))?,
                hz: self.hz.ok_or_else(|| missing("hz"))?,
            },
        };
        Ok(Event { time: self.t, action })
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_n() -> usize {
    2
}
fn default_grid_points() -> usize {
    1024
}
fn default_duration() -> f64 {
    cbw_core::time_domain::DEFAULT_DURATION_S
}
fn default_sample_rate() -> f64 {
    cbw_core::time_domain::DEFAULT_SAMPLE_RATE_HZ
}
fn default_offset() -> f64 {
    cbw_core::time_domain::DEFAULT_OFFSET_HZ
}
fn default_m() -> usize {
    1000
}
fn default_trials() -> usize {
    500
}
fn one() -> f64 {
    1.0
}
fn default_sigma() -> f64 {
    0.1
}

/// Fully resolved scenario. Every field has a default except `kind`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,

    /// Number of control MZIs.
    #[serde(rename = "N", default = "default_n")]
    pub n: usize,
    /// Dummy phase ψ.
    #[serde(default)]
    pub psi: f64,
    /// Points on the `[0, 2π)` phase grid.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,

    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: f64,
    /// Used when `f_upper` is empty: alternating `±offset_hz` around the carrier.
    #[serde(default = "default_offset")]
    pub offset_hz: f64,
    #[serde(default)]
    pub f_upper: Vec<f64>,
    /// Defaults to the carrier for every MZI.
    #[serde(default)]
    pub f_lower: Vec<f64>,

    /// Per-block `[upper, lower]` amplitude transmissions.
    #[serde(default)]
    pub arm_transmissions: Vec<[f64; 2]>,
    #[serde(default)]
    pub bs_reflectivity_deviation: f64,
    #[serde(default)]
    pub phase_jitter_sigma: f64,

    #[serde(rename = "M", default = "default_m")]
    pub m: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "one")]
    pub mu: f64,
    #[serde(default = "one")]
    pub a: f64,
    #[serde(default = "one")]
    pub b: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub phi0: f64,
    /// Working point; quadrature when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,

    /// Harmonic weights `w_1..w_N` of a contaminated PBW reference.
    #[serde(default)]
    pub weights: Vec<f64>,

    #[serde(default)]
    pub events: Vec<EventEntry>,
}

pub const PRESETS: &[(&str, &str)] = &[
    ("fig2-left", include_str!("../presets/fig2-left.toml")),
    ("fig2-right", include_str!("../presets/fig2-right.toml")),
    ("fig3a", include_str!("../presets/fig3a.toml")),
    ("fig3b", include_str!("../presets/fig3b.toml")),
    ("fig3b-psi", include_str!("../presets/fig3b-psi.toml")),
    ("fig3c", include_str!("../presets/fig3c.toml")),
    ("fig3d", include_str!("../presets/fig3d.toml")),
];

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn locate_key(text: &str, key: &str) -> Option<(usize, usize)> {
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                return Some(line_column(text, offset + line.len() - trimmed.len()));
            }
        }
        offset += line.len();
    }
    None
}

fn parse_table(text: &str) -> Result<Table, CliError> {
    text.parse::<Table>().map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
        CliError::Syntax { line, column, message: e.message().trim().to_string() }
    })
}

fn unknown_key(message: &str) -> Option<String> {
    let rest = message.split("unknown field `").nth(1)?;
    Some(rest.split('`').next()?.to_string())
}

/// Parses a `key=value` override; the value is read as TOML, falling back to a bare string.
pub fn parse_override(spec: &str) -> Result<(String, Value), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::semantic(spec, "override must have the form key=value"))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key, value))
}

/// Builds a scenario from file text plus overrides.
///
/// `kind` (from a subcommand) must agree with any `kind` key present.
pub fn resolve(text: &str, overrides: &[(String, Value)], kind: Option<Kind>) -> Result<Scenario, CliError> {
    let mut user = parse_table(text)?;
    for (k, v) in overrides {
        user.insert(k.clone(), v.clone());
    }
    if let Some(kind) = kind {
        match user.get("kind") {
            Some(Value::String(s)) if s != kind.as_str() => {
                return Err(CliError::semantic("kind", format!("scenario says `{s}` but the subcommand is `{}`", kind.as_str())));
            }
            _ => {
                user.insert("kind".into(), Value::String(kind.as_str().into()));
            }
        }
    }
    let mut merged = match user.get("preset") {
        Some(Value::String(name)) => {
            let base = preset_text(name).ok_or_else(|| {
                let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                CliError::semantic("preset", format!("unknown preset `{name}` (known: {})", known.join(", ")))
            })?;
            let mut base = parse_table(base)?;
            if let (Some(Value::String(want)), Some(Value::String(have))) = (user.get("kind"), base.get("kind")) {
                if want != have {
                    return Err(CliError::semantic("preset", format!("preset `{name}` is a `{have}` scenario, not `{want}`")));
                }
            }
            base.extend(user);
            base
        }
        Some(_) => return Err(CliError::semantic("preset", "must be a string")),
        None => user,
    };
    if !merged.contains_key("kind") {
        return Err(CliError::semantic("kind", "missing; expected one of sweep, time, fisher, harmonics, calibrate, compare_pbw"));
    }
    // Keep TOML integers for integer fields even if given as floats like `2.0`.
    for key in ["N", "M", "trials", "grid_points", "seed"] {
        if let Some(Value::Float(f)) = merged.get(key) {
            if f.fract() == 0.0 {
                let i = *f as i64;
                merged.insert(key.into(), Value::Integer(i));
            }
        }
    }
    let scenario: Scenario = Value::Table(merged).try_into().map_err(|e: toml::de::Error| {
        let message = e.message().trim().to_string();
        match unknown_key(&message) {
            Some(key) => CliError::UnknownKey { location: locate_key(text, &key), key },
            None => CliError::semantic(field_of(&message), message),
        }
    })?;
    scenario.validate()?;
    Ok(scenario)
}

fn field_of(message: &str) -> String {
    for marker in ["missing field `", "for key `"] {
        if let Some(rest) = message.split(marker).nth(1) {
            if let Some(name) = rest.split('`').next() {
                return name.to_string();
            }
        }
    }
    "scenario".to_string()
}

pub fn parse_scenario(text: &str) -> Result<Scenario, CliError> {
    resolve(text, &[], None)
}

pub fn serialize(scenario: &Scenario) -> String {
    toml::to_string(scenario).expect("scenario is always representable as TOML")
}

fn check(ok: bool, field: &str, message: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::semantic(field, message))
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), CliError> {
        check(self.n >= 1, "N", "must be at least 1")?;
        check(self.psi.is_finite(), "psi", "must be finite")?;
        check(self.seed <= i64::MAX as u64, "seed", "must fit in a signed 64-bit integer")?;
        check(self.grid_points >= 8, "grid_points", "must be at least 8")?;
        check(self.duration > 0.0 && self.duration.is_finite(), "duration", "must be positive")?;
        check(self.sample_rate > 0.0 && self.sample_rate.is_finite(), "sample_rate", "must be positive")?;
        check(self.offset_hz.is_finite(), "offset_hz", "must be finite")?;
        if !self.f_upper.is_empty() {
            check(self.f_upper.len() == self.n, "f_upper", "needs one frequency per control MZI")?;
        }
        if !self.f_lower.is_empty() {
            check(self.f_lower.len() == self.n, "f_lower", "needs one frequency per control MZI")?;
            check(!self.f_upper.is_empty(), "f_upper", "required when f_lower is given")?;
        }
        check(
            self.f_upper.iter().chain(&self.f_lower).all(|f| f.is_finite()),
            "f_upper",
            "frequencies must be finite",
        )?;
        if !self.arm_transmissions.is_empty() {
            check(
                self.arm_transmissions.len() == 2 * self.n - 1,
                "arm_transmissions",
                "needs one [upper, lower] pair per chain block (2N - 1 entries)",
            )?;
            check(
                self.arm_transmissions.iter().flatten().all(|t| (0.0..=1.0).contains(t)),
                "arm_transmissions",
                "entries must lie in [0, 1]",
            )?;
        }
        check(
            (-0.5..=0.5).contains(&self.bs_reflectivity_deviation),
            "bs_reflectivity_deviation",
            "must lie in [-0.5, 0.5]",
        )?;
        check(
            self.phase_jitter_sigma >= 0.0 && self.phase_jitter_sigma.is_finite(),
            "phase_jitter_sigma",
            "must be finite and >= 0",
        )?;
        if self.phase_jitter_sigma > 0.0 {
            check(self.kind == Kind::Time, "phase_jitter_sigma", "applies to time scenarios only")?;
        }
        check(self.m >= 1, "M", "must be at least 1")?;
        check(self.trials >= 2, "trials", "must be at least 2")?;
        check(self.mu > 0.0 && self.mu.is_finite(), "mu", "must be positive")?;
        check(self.a.is_finite(), "a", "must be finite")?;
        check((-1.0..=1.0).contains(&self.b), "b", "must lie in [-1, 1]")?;
        check(self.sigma > 0.0 && self.sigma.is_finite(), "sigma", "must be positive")?;
        check(self.phi0.is_finite(), "phi0", "must be finite")?;
        check(self.phi.is_none_or(f64::is_finite), "phi", "must be finite")?;
        if !self.weights.is_empty() {
            check(self.weights.len() == self.n, "weights", "needs one weight per harmonic 1..N")?;
            check(self.weights.iter().all(|w| *w >= 0.0 && w.is_finite()), "weights", "must be non-negative")?;
            let total: f64 = self.weights.iter().sum();
            check((total - 1.0).abs() <= 1e-12, "weights", "must sum to 1")?;
        }
        if !self.events.is_empty() {
            check(self.kind == Kind::Time, "events", "apply to time scenarios only")?;
        }
        self.schedule()?.validate_for(self.n).map_err(|e| CliError::semantic("events", e))?;
        Ok(())
    }

    pub fn schedule(&self) -> Result<EventSchedule, CliError> {
        let events = self
            .events
            .iter()
            .enumerate()
            .map(|(k, e)| e.to_event(k))
            .collect::<Result<Vec<_>, _>>()?;
        EventSchedule::new(events).map_err(|e| CliError::semantic("events", e))
    }

    pub fn aom_config(&self) -> Result<AomConfig, CliError> {
        let mut cfg = if self.f_upper.is_empty() {
            AomConfig::alternating(self.n, self.offset_hz)
        } else {
            let lower = if self.f_lower.is_empty() { vec![CARRIER_HZ; self.n] } else { self.f_lower.clone() };
            AomConfig::from_frequencies(&self.f_upper, &lower).map_err(|e| CliError::semantic("f_upper", e))?
        };
        cfg.dummy_phase = self.psi;
        Ok(cfg)
    }

    pub fn imperfections(&self) -> ImperfectionModel {
        ImperfectionModel {
            arm_transmissions: self.arm_transmissions.iter().map(|t| (t[0], t[1])).collect(),
            bs_reflectivity_deviation: self.bs_reflectivity_deviation,
            phase_jitter_sigma: self.phase_jitter_sigma,
            rng_seed: self.seed,
        }
    }

    /// Weights for the PBW mixture; pure N-th harmonic when none are given.
    pub fn pbw_weights(&self) -> Vec<f64> {
        if self.weights.is_empty() {
            let mut w = vec![0.0; self.n];
            w[self.n - 1] = 1.0;
            w
        } else {
            self.weights.clone()
        }
    }
}
