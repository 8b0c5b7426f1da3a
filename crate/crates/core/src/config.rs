//! Scenario configuration: TOML loading, dotted-key overrides and validation.
//!
//! The accepted grammar is documented in `docs/config.md`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channel::{correlation_from_spacing, db_to_linear, DensityForm};
use crate::error::{Error, Result};
use crate::pu_traffic::TransitionMatrix;
use crate::reward::{check_ber_target, RewardKind};
use crate::strategy::StrategyKind;

/// Every key the configuration accepts, as a dotted path.
pub const KNOWN_KEYS: &[&str] = &[
    "su_pairs",
    "channels",
    "horizon",
    "replications",
    "seed",
    "pu.p00",
    "pu.p01",
    "pu.p10",
    "pu.p11",
    "fading.model",
    "fading.mean_snr_db",
    "fading.sigma_db",
    "fading.rho",
    "fading.a",
    "fading.d",
    "fading.coherence_slots",
    "mismatch.nmse",
    "mismatch.density_form",
    "reward.kind",
    "reward.ber_target",
    "reward.bandwidth",
    "detector.enabled",
    "detector.nu",
    "detector.target_pm",
    "detector.pu_mean_snr_db",
    "strategy.kind",
    "strategy.ca_top_l",
    "metrics.window",
    "metrics.tail_slots",
    "metrics.pu_nominal_snr_db",
];

const SECTIONS: &[&str] = &["pu", "fading", "mismatch", "reward", "detector", "strategy", "metrics"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub su_pairs: usize,
    pub channels: usize,
    pub horizon: usize,
    pub replications: usize,
    pub seed: u64,
    pub pu: TransitionMatrix,
    pub fading: FadingConfig,
    pub mismatch: MismatchConfig,
    pub reward: RewardConfig,
    pub detector: DetectorConfig,
    pub strategy: StrategyConfig,
    pub metrics: MetricsConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            su_pairs: 20,
            channels: 40,
            horizon: 20,
            replications: 200,
            seed: 1,
            pu: TransitionMatrix::reference(),
            fading: FadingConfig::default(),
            mismatch: MismatchConfig::default(),
            reward: RewardConfig::default(),
            detector: DetectorConfig::default(),
            strategy: StrategyConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingModel {
    /// Independent Rayleigh fading on every link.
    RayleighIid,
    /// Lognormal shadowing correlated along the SU index.
    LognormalCorr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FadingConfig {
    pub model: FadingModel,
    /// Mean link SNR; for lognormal fading, the mean of the dB value.
    pub mean_snr_db: f64,
    pub sigma_db: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    pub coherence_slots: usize,
}

impl Default for FadingConfig {
    fn default() -> Self {
        Self {
            model: FadingModel::RayleighIid,
            mean_snr_db: 10.0,
            sigma_db: 5.0,
            rho: None,
            a: None,
            d: None,
            coherence_slots: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MismatchConfig {
    /// Normalised MSE of the SNR estimate; 0 is perfect CSI.
    pub nmse: f64,
    pub density_form: DensityForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bandwidth {
    Uniform(f64),
    PerChannel(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub kind: RewardKind,
    pub ber_target: f64,
    pub bandwidth: Bandwidth,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            kind: RewardKind::Capacity,
            ber_target: 1e-3,
            bandwidth: Bandwidth::Uniform(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// When false, sensing is error-free.
    pub enabled: bool,
    pub nu: u32,
    pub target_pm: f64,
    pub pu_mean_snr_db: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            nu: 5,
            target_pm: 0.1,
            pu_mean_snr_db: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Candidate set size for MyopicCa; defaults to `min(su_pairs, channels)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ca_top_l: Option<usize>,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            kind: StrategyKind::CsiAided,
            ca_top_l: None,
        }
    }
}

/// Averaging window of the throughput metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "WindowRepr", into = "WindowRepr")]
pub enum Window {
    /// From slot 1 up to the current slot.
    Cumulative,
    /// The last `k` slots (fewer while `t < k`).
    Trailing(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WindowRepr {
    Slots(i64),
    Name(String),
}

impl TryFrom<WindowRepr> for Window {
    type Error = String;

    fn try_from(r: WindowRepr) -> std::result::Result<Self, String> {
        match r {
            WindowRepr::Name(s) if s == "cumulative" => Ok(Window::Cumulative),
            WindowRepr::Name(s) => Err(format!("window must be \"cumulative\" or a slot count, got \"{s}\"")),
            WindowRepr::Slots(k) if k >= 1 => Ok(Window::Trailing(k as usize)),
            WindowRepr::Slots(k) => Err(format!("window length must be >= 1, got {k}")),
        }
    }
}

impl From<Window> for WindowRepr {
    fn from(w: Window) -> Self {
        match w {
            Window::Cumulative => WindowRepr::Name("cumulative".into()),
            Window::Trailing(k) => WindowRepr::Slots(k as i64),
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Window::Cumulative => f.write_str("cumulative"),
            Window::Trailing(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub window: Window,
    /// Slots at the end of the horizon averaged into the tail throughput;
    /// defaults to the whole horizon.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_slots: Option<usize>,
    /// Nominal PU link SNR used in the spectral-efficiency metric.
    pub pu_nominal_snr_db: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            window: Window::Cumulative,
            tail_slots: None,
            pu_nominal_snr_db: 10.0,
        }
    }
}

/// A `key=value` override with a dotted key.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub key: String,
    pub value: toml::Value,
}

impl Override {
    /// Parses `key=value`. The value is read as a TOML value when possible and
    /// as a bare string otherwise, so `strategy.kind=myopic` works unquoted.
    pub fn parse(text: &str) -> Result<Self> {
        let (key, raw) = text
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("override '{text}' is not of the form key=value")))?;
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::UnknownKeys(vec![key]));
        }
        let raw = raw.trim();
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        Ok(Self { key, value })
    }

    fn apply(&self, table: &mut toml::Table) -> Result<()> {
        let mut parts: Vec<&str> = self.key.split('.').collect();
        let leaf = parts.pop().expect("split yields at least one part");
        let mut cursor = table;
        for part in parts {
            let entry = cursor
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            cursor = entry
                .as_table_mut()
                .ok_or_else(|| Error::Usage(format!("'{part}' is not a table in override '{}'", self.key)))?;
        }
        cursor.insert(leaf.to_string(), self.value.clone());
        Ok(())
    }
}

fn location(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn parse_error(text: &str, err: &toml::de::Error) -> Error {
    let (line, column) = err.span().map_or((1, 1), |s| location(text, s.start));
    Error::Parse {
        line,
        column,
        message: err.message().trim().to_string(),
    }
}

fn unknown_keys(table: &toml::Table) -> Vec<String> {
    let mut out = Vec::new();
    for (key, value) in table {
        match value.as_table() {
            Some(inner) if SECTIONS.contains(&key.as_str()) => {
                for k in inner.keys() {
                    let path = format!("{key}.{k}");
                    if !KNOWN_KEYS.contains(&path.as_str()) {
                        out.push(path);
                    }
                }
            }
            _ if KNOWN_KEYS.contains(&key.as_str()) => {}
            _ => out.push(key.clone()),
        }
    }
    out
}

fn from_table(table: toml::Table) -> Result<ScenarioConfig> {
    table.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().trim().to_string()))
}

impl ScenarioConfig {
    /// Parses TOML text and applies overrides. Missing keys take their
    /// defaults; the result is not yet validated.
    pub fn from_toml_str(text: &str, overrides: &[Override]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
        let unknown = unknown_keys(&table);
        if !unknown.is_empty() {
            return Err(Error::UnknownKeys(unknown));
        }
        if overrides.is_empty() {
            return toml::from_str(text).map_err(|e| parse_error(text, &e));
        }
        for o in overrides {
            o.apply(&mut table)?;
        }
        from_table(table)
    }

    pub fn from_file(path: &std::path::Path, overrides: &[Override]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// A copy with `overrides` applied.
    pub fn with_overrides(&self, overrides: &[Override]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut table = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            o.apply(&mut table)?;
        }
        from_table(table)
    }

    /// Every invariant violation as a `(key path, message)` pair.
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut push = |key: &str, msg: String| out.push((key.to_string(), msg));

        for (key, v) in [
            ("su_pairs", self.su_pairs),
            ("channels", self.channels),
            ("horizon", self.horizon),
            ("replications", self.replications),
        ] {
            if v == 0 {
                push(key, format!("{key} must be >= 1"));
            }
        }
        for (field, msg) in self.pu.violations() {
            push(&format!("pu.{field}"), msg);
        }
        if self.pu.p01 == 0.0 && self.pu.p10 == 0.0 {
            push("pu.p01", "absorbing chain (p01 = p10 = 0) has no stationary start".into());
        }

        let f = &self.fading;
        if !f.mean_snr_db.is_finite() {
            push("fading.mean_snr_db", format!("must be finite, got {}", f.mean_snr_db));
        }
        if !(f.sigma_db >= 0.0 && f.sigma_db.is_finite()) {
            push("fading.sigma_db", format!("must be >= 0, got {}", f.sigma_db));
        }
        if f.coherence_slots == 0 {
            push("fading.coherence_slots", "must be >= 1".into());
        }
        if let Some(rho) = f.rho {
            if !(0.0..=1.0).contains(&rho) {
                push("fading.rho", format!("must lie in [0, 1], got {rho}"));
            }
            if f.a.is_some() || f.d.is_some() {
                push("fading.rho", "give either rho or a and d, not both".into());
            }
        }
        for (key, v) in [("fading.a", f.a), ("fading.d", f.d)] {
            if let Some(v) = v {
                if !(v >= 0.0) {
                    push(key, format!("must be >= 0, got {v}"));
                }
            }
        }
        if f.a.is_some() != f.d.is_some() {
            push(if f.a.is_none() { "fading.a" } else { "fading.d" }, "a and d must be given together".into());
        }

        let nmse = self.mismatch.nmse;
        if !(0.0..=1.0).contains(&nmse) {
            push("mismatch.nmse", format!("must lie in [0, 1], got {nmse}"));
        } else if nmse > 0.0 && f.model != FadingModel::RayleighIid {
            push("mismatch.nmse", "CSI mismatch is only modelled for rayleigh_iid fading".into());
        }

        if let Err(e) = check_ber_target(self.reward.ber_target) {
            push("reward.ber_target", e.to_string());
        }
        match &self.reward.bandwidth {
            Bandwidth::Uniform(b) => {
                if !(*b > 0.0 && b.is_finite()) {
                    push("reward.bandwidth", format!("must be positive, got {b}"));
                }
            }
            Bandwidth::PerChannel(list) => {
                if list.len() != self.channels {
                    push(
                        "reward.bandwidth",
                        format!("{} bandwidths for {} channels", list.len(), self.channels),
                    );
                }
                if let Some(b) = list.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
                    push("reward.bandwidth", format!("must be positive, got {b}"));
                }
            }
        }

        let d = &self.detector;
        if d.nu == 0 {
            push("detector.nu", "must be >= 1".into());
        }
        if !(d.target_pm > 0.0 && d.target_pm < 1.0) {
            push("detector.target_pm", format!("must lie in (0, 1), got {}", d.target_pm));
        }
        if !d.pu_mean_snr_db.is_finite() {
            push("detector.pu_mean_snr_db", format!("must be finite, got {}", d.pu_mean_snr_db));
        }

        if self.strategy.ca_top_l == Some(0) {
            push("strategy.ca_top_l", "must be >= 1".into());
        }

        let m = &self.metrics;
        if let Some(k) = m.tail_slots {
            if k == 0 || k > self.horizon {
                push("metrics.tail_slots", format!("must lie in 1..={}, got {k}", self.horizon));
            }
        }
        if !m.pu_nominal_snr_db.is_finite() {
            push("metrics.pu_nominal_snr_db", format!("must be finite, got {}", m.pu_nominal_snr_db));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(v.into_iter().map(|(k, m)| format!("{k}: {m}")).collect()))
        }
    }

    /// The PU chain, replicated for every channel.
    pub fn transition_matrices(&self) -> Vec<TransitionMatrix> {
        vec![self.pu; self.channels]
    }

    pub fn bandwidths(&self) -> Vec<f64> {
        match &self.reward.bandwidth {
            Bandwidth::Uniform(b) => vec![*b; self.channels],
            Bandwidth::PerChannel(list) => list.clone(),
        }
    }

    pub fn mean_snr(&self) -> f64 {
        db_to_linear(self.fading.mean_snr_db)
    }

    /// Adjacent-SU shadowing correlation: `rho` if given, else `e^{-ad}`,
    /// else 0.
    pub fn shadowing_rho(&self) -> f64 {
        match (self.fading.rho, self.fading.a, self.fading.d) {
            (Some(rho), _, _) => rho,
            (None, Some(a), Some(d)) => correlation_from_spacing(a, d),
            _ => 0.0,
        }
    }

    pub fn ca_top_l(&self) -> usize {
        self.strategy.ca_top_l.unwrap_or(self.su_pairs.min(self.channels))
    }

    pub fn tail_slots(&self) -> usize {
        self.metrics.tail_slots.unwrap_or(self.horizon)
    }
}
