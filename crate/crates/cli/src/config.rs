//! Job configuration: a TOML document plus `--set` overrides.
//!
//! Times in the `[run]`, `[correlations]` sections are given in units of
//! `1/g`; frequencies in `[spectrum]` in units of `g`. `[params]` holds the
//! raw model parameters (`dt` and `tau` in absolute time).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use jcfb::linear::LinearSpectrumForm;
use jcfb::{FrequencyGrid, ModelParams, PoleWindow, Recorder, StepMode, SystemInit, Window};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Simulate,
    Correlations,
    Spectrum,
    TraceFft,
    LinearSpectrum,
    Poles,
    Oracle,
    Sweep,
}

impl Mode {
    pub const ALL: [Mode; 8] = [
        Mode::Simulate,
        Mode::Correlations,
        Mode::Spectrum,
        Mode::TraceFft,
        Mode::LinearSpectrum,
        Mode::Poles,
        Mode::Oracle,
        Mode::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Correlations => "correlations",
            Mode::Spectrum => "spectrum",
            Mode::TraceFft => "trace-fft",
            Mode::LinearSpectrum => "linear-spectrum",
            Mode::Poles => "poles",
            Mode::Oracle => "oracle",
            Mode::Sweep => "sweep",
        }
    }

    /// Whether the mode runs the tensor-network engine.
    pub fn uses_engine(self) -> bool {
        matches!(self, Mode::Simulate | Mode::Correlations | Mode::Spectrum | Mode::TraceFft)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Mode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Mode::ALL.iter().map(|m| m.name()).collect();
            CliError::Config(format!(
                "unknown mode '{s}'{}",
                suggestion(s, names.iter().copied())
            ))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// End time in units of `1/g`.
    pub t_end: f64,
    pub initial: SystemInit,
    pub recorders: Vec<Recorder>,
    pub stride: usize,
    pub step_mode: StepMode,
    pub failure_threshold: f64,
    /// Released bins to keep; 0 keeps all.
    pub retain_outputs: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            t_end: 10.0,
            initial: SystemInit::default(),
            recorders: vec![
                Recorder::TlsPopulation,
                Recorder::CavityPhotons,
                Recorder::OutputFlux,
            ],
            stride: 1,
            step_mode: StepMode::Exact,
            failure_threshold: 1e-4,
            retain_outputs: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrelationSection {
    /// Largest lag in units of `1/g`.
    pub max_lag: f64,
    /// Smallest base-bin occupation accepted as a normaliser.
    pub floor: f64,
}

impl Default for CorrelationSection {
    fn default() -> Self {
        Self {
            max_lag: 5.0,
            floor: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub grid: FrequencyGrid,
    pub normalize: bool,
    /// Analytic form used by `linear-spectrum`.
    pub form: LinearSpectrumForm,
    /// Window used by `trace-fft`.
    pub window: Window,
    /// Zero-pad `trace-fft` input to this length; 0 disables padding.
    pub pad_to: usize,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            grid: FrequencyGrid::default(),
            normalize: true,
            form: LinearSpectrumForm::default(),
            window: Window::Hann,
            pad_to: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoleSection {
    /// Search window in units of `g`.
    pub window: PoleWindow,
    pub density: usize,
}

impl Default for PoleSection {
    fn default() -> Self {
        Self {
            window: PoleWindow::default(),
            density: 16,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Mode run at every point when the job mode is `sweep`.
    pub job: Option<Mode>,
    /// Name of a `[params]` field.
    pub parameter: String,
    pub values: Vec<f64>,
    /// Also run the parameter set without feedback.
    pub baseline: bool,
}

impl SweepSection {
    pub fn is_active(&self) -> bool {
        !self.values.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmitSection {
    /// Columns to write besides the leading axis; empty writes all.
    pub columns: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JobConfig {
    pub mode: Mode,
    pub output_dir: String,
    pub params: ModelParams,
    pub run: RunSection,
    pub correlations: CorrelationSection,
    pub spectrum: SpectrumSection,
    pub poles: PoleSection,
    pub sweep: SweepSection,
    pub emit: EmitSection,
}

impl Default for JobConfig {
    fn default() -> Self {
        Self {
            mode: Mode::default(),
            output_dir: "out".into(),
            params: ModelParams::default(),
            run: RunSection::default(),
            correlations: CorrelationSection::default(),
            spectrum: SpectrumSection::default(),
            poles: PoleSection::default(),
            sweep: SweepSection::default(),
            emit: EmitSection::default(),
        }
    }
}

/// Parameters a sweep may vary.
pub const SWEEPABLE: [&str; 8] = [
    "g",
    "drive_amplitude",
    "kappa1",
    "kappa2",
    "tau",
    "phi",
    "delta",
    "dt",
];

impl JobConfig {
    /// Mode run at each point: the sweep's `job` for `sweep`, else `mode`.
    pub fn point_mode(&self) -> Mode {
        match self.mode {
            Mode::Sweep => self.sweep.job.unwrap_or(Mode::Spectrum),
            m => m,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: jcfb::Error| CliError::Config(e.to_string());
        if self.mode == Mode::Sweep && !self.sweep.is_active() {
            return Err(CliError::Config("mode 'sweep' needs [sweep] values".into()));
        }
        if self.sweep.job == Some(Mode::Sweep) {
            return Err(CliError::Config("sweep.job cannot be 'sweep'".into()));
        }
        if self.sweep.is_active() {
            if !SWEEPABLE.contains(&self.sweep.parameter.as_str()) {
                return Err(CliError::Config(format!(
                    "sweep parameter '{}' is not a model parameter{}",
                    self.sweep.parameter,
                    suggestion(&self.sweep.parameter, SWEEPABLE.iter().copied())
                )));
            }
            if let Some(v) = self.sweep.values.iter().find(|v| !v.is_finite()) {
                return Err(CliError::Config(format!("sweep value {v} is not finite")));
            }
            for p in self.sweep_points()? {
                self.validate_params(&p)?;
            }
        } else {
            self.validate_params(&self.params)?;
        }
        if !(self.run.t_end > 0.0 && self.run.t_end.is_finite()) {
            return Err(CliError::Config(format!("run.t_end must be > 0, got {}", self.run.t_end)));
        }
        if self.run.stride == 0 {
            return Err(CliError::Config("run.stride must be >= 1".into()));
        }
        if self.run.recorders.is_empty() {
            return Err(CliError::Config("run.recorders is empty".into()));
        }
        if !(self.correlations.max_lag > 0.0) {
            return Err(CliError::Config("correlations.max_lag must be > 0".into()));
        }
        self.spectrum.grid.validate().map_err(cfg)?;
        self.poles.window.validate().map_err(cfg)?;
        Ok(())
    }

    fn validate_params(&self, p: &ModelParams) -> Result<(), CliError> {
        let cfg = |e: jcfb::Error| CliError::Config(e.to_string());
        p.validate().map_err(cfg)?;
        let mode = self.point_mode();
        if mode.uses_engine() || mode == Mode::Oracle {
            if p.g == 0.0 {
                return Err(CliError::Config("params.g must be nonzero (time unit 1/g)".into()));
            }
        }
        if mode == Mode::LinearSpectrum && p.g == 0.0 {
            return Err(CliError::Config("linear-spectrum needs params.g != 0".into()));
        }
        Ok(())
    }

    /// Parameter sets of the sweep, in order.
    pub fn sweep_points(&self) -> Result<Vec<ModelParams>, CliError> {
        self.sweep
            .values
            .iter()
            .map(|&v| with_parameter(&self.params, &self.sweep.parameter, v))
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }
}

pub fn with_parameter(p: &ModelParams, name: &str, v: f64) -> Result<ModelParams, CliError> {
    let mut q = p.clone();
    match name {
        "g" => q.g = v,
        "drive_amplitude" => q.drive_amplitude = v,
        "kappa1" => q.kappa1 = v,
        "kappa2" => q.kappa2 = v,
        "tau" => q.tau = v,
        "phi" => q.phi = v,
        "delta" => q.delta = v,
        "dt" => q.dt = v,
        other => {
            return Err(CliError::Config(format!(
                "'{other}' is not a sweepable parameter{}",
                suggestion(other, SWEEPABLE.iter().copied())
            )))
        }
    }
    Ok(q)
}

/// `", did you mean 'x'?"` for the closest candidate, or nothing.
pub fn suggestion<'a>(word: &str, candidates: impl Iterator<Item = &'a str>) -> String {
    candidates
        .map(|c| (strsim::jaro_winkler(word, c), c))
        .filter(|(s, _)| *s > 0.7)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| format!(", did you mean '{c}'?"))
        .unwrap_or_default()
}

/// Applies `key=value` overrides. Keys are dotted paths; values are TOML
/// literals, falling back to a bare string.
pub fn apply_overrides(table: &mut Table, overrides: &[String]) -> Result<(), CliError> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects key=value, got '{item}'")))?;
        let key = key.trim();
        let raw = raw.trim();
        let value = toml::from_str::<Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        let path: Vec<&str> = key.split('.').collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(CliError::Config(format!("malformed key '{key}'")));
        }
        let mut node = &mut *table;
        for part in &path[..path.len() - 1] {
            let entry = node
                .entry(part.to_string())
                .or_insert_with(|| Value::Table(Table::new()));
            node = entry
                .as_table_mut()
                .ok_or_else(|| CliError::Config(format!("'{part}' in '{key}' is not a table")))?;
        }
        node.insert(path[path.len() - 1].to_string(), value);
    }
    Ok(())
}

/// Parses a document, applies overrides and validates. A run manifest is
/// accepted too: its `[job]` table is the configuration.
pub fn parse_config(document: &str, overrides: &[String]) -> Result<JobConfig, CliError> {
    let mut table: Table = toml::from_str(document).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(Value::Table(job)) = table.get("job") {
        if table.contains_key("run_info") {
            table = job.clone();
        }
    }
    apply_overrides(&mut table, overrides)?;
    let cfg: JobConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(explain(&e)))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Adds a nearest-key hint to unknown-field errors.
fn explain(e: &toml::de::Error) -> String {
    let msg = e.message().to_string();
    let Some(rest) = msg.strip_prefix("unknown field `") else {
        return msg;
    };
    let Some((field, tail)) = rest.split_once('`') else {
        return msg;
    };
    let expected: Vec<&str> = tail.split('`').skip(1).step_by(2).collect();
    let hint = suggestion(field, expected.iter().copied());
    if hint.is_empty() {
        msg
    } else {
        format!("unknown key '{field}'{hint}")
    }
}
