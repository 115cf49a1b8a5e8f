//! Experiment configuration: one JSON document, every field defaulted.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sunpair::chsh::ChshSettings;
use sunpair::correlator::CorrelatorOptions;
use sunpair::polarization::JointSetting;
use sunpair::source::{reference_calibration, PumpProfile, SourceParams, DEFAULT_PAIR_RATE_PER_MW};
use sunpair::timetag::{AcquisitionPlan, DetectorParams};
use sunpair::tomography::{basis_settings_16, DEFAULT_BOOTSTRAP};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Root of all randomness in a run.
    pub seed: u64,
    pub source: SourceParams,
    pub detectors: Detectors,
    pub pump: PumpConfig,
    pub acquisition: AcquisitionConfig,
    pub correlator: CorrelatorOptions,
    pub tomography: TomographyConfig,
    pub chsh: ChshConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            source: reference_calibration(DEFAULT_PAIR_RATE_PER_MW).params,
            detectors: Detectors::default(),
            pump: PumpConfig::default(),
            acquisition: AcquisitionConfig::default(),
            correlator: CorrelatorOptions::default(),
            tomography: TomographyConfig::default(),
            chsh: ChshConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Detectors {
    #[serde(default)]
    pub signal: DetectorParams,
    #[serde(default = "DetectorParams::default_idler")]
    pub idler: DetectorParams,
}

impl Default for Detectors {
    fn default() -> Self {
        Detectors {
            signal: DetectorParams::default(),
            idler: DetectorParams::default_idler(),
        }
    }
}

/// Either a constant pump power or a `time_s,power_nw` profile file. With
/// neither given the pump runs at 100 nW.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant_nw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_path: Option<PathBuf>,
}

pub const DEFAULT_PUMP_NW: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// The 16 settings `{H,V,D,R} ⊗ {H,V,D,R}`.
    Tomography,
    /// The 16 linear settings of the configured CHSH angles.
    Chsh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcquisitionConfig {
    pub presets: Vec<Preset>,
    /// Extra settings as `"signal/idler"` labels, acquired after the presets.
    pub settings: Vec<JointSetting>,
    pub duration_s: f64,
    /// Start of the first acquisition on the pump clock; defaults to the
    /// start of the profile, or 0.
    pub start_time_s: Option<f64>,
    pub gap_s: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            presets: vec![Preset::Tomography, Preset::Chsh],
            settings: Vec::new(),
            duration_s: 120.0,
            start_time_s: None,
            gap_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TomographyConfig {
    pub bootstrap: usize,
}

impl Default for TomographyConfig {
    fn default() -> Self {
        TomographyConfig {
            bootstrap: DEFAULT_BOOTSTRAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChshConfig {
    pub theta_s: f64,
    pub theta_s_prime: f64,
    pub theta_i: f64,
    pub theta_i_prime: f64,
    /// Idler-angle step of the predicted correlation curves, degrees.
    pub curve_step_deg: f64,
    /// Poisson resamplings for the Monte Carlo spread of S.
    pub monte_carlo_replicas: usize,
}

impl Default for ChshConfig {
    fn default() -> Self {
        let s = ChshSettings::default();
        ChshConfig {
            theta_s: s.theta_s,
            theta_s_prime: s.theta_s_prime,
            theta_i: s.theta_i,
            theta_i_prime: s.theta_i_prime,
            curve_step_deg: 5.0,
            monte_carlo_replicas: 500,
        }
    }
}

impl ChshConfig {
    pub fn settings(&self) -> ChshSettings {
        ChshSettings {
            theta_s: self.theta_s,
            theta_s_prime: self.theta_s_prime,
            theta_i: self.theta_i,
            theta_i_prime: self.theta_i_prime,
        }
    }
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CliError::config(path, format!("must be > 0, got {v}")))
    }
}

fn non_negative(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(CliError::config(path, format!("must be >= 0, got {v}")))
    }
}

fn section<T>(path: &str, r: sunpair::Result<T>) -> Result<T> {
    r.map_err(|e| CliError::config(path, e))
}

impl ExperimentConfig {
    /// Reads, resolves relative paths against the file's directory, and
    /// validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        if let Some(p) = cfg.pump.profile_path.as_mut() {
            if p.is_relative() {
                *p = path.parent().unwrap_or(Path::new(".")).join(&*p);
            }
            // absolute, so the config echoed into a run directory stays valid
            if let Ok(abs) = p.canonicalize() {
                *p = abs;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without validating; errors name the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { "config".to_string() } else { path };
            CliError::config(path, e.into_inner())
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<()> {
        section("source", self.source.validate())?;
        section("detectors.signal", self.detectors.signal.validate())?;
        section("detectors.idler", self.detectors.idler.validate())?;
        if self.detectors.signal.tdc_resolution_ps != self.detectors.idler.tdc_resolution_ps {
            return Err(CliError::config(
                "detectors.idler.tdc_resolution_ps",
                "must equal the signal channel's TDC resolution",
            ));
        }
        match (&self.pump.constant_nw, &self.pump.profile_path) {
            (Some(_), Some(_)) => {
                return Err(CliError::config("pump", "give either constant_nw or profile_path, not both"));
            }
            (Some(p), None) => non_negative("pump.constant_nw", *p)?,
            (None, Some(path)) => {
                if !path.is_file() {
                    return Err(CliError::config(
                        "pump.profile_path",
                        format!("file {} does not exist", path.display()),
                    ));
                }
            }
            (None, None) => {}
        }
        let acq = &self.acquisition;
        positive("acquisition.duration_s", acq.duration_s)?;
        non_negative("acquisition.gap_s", acq.gap_s)?;
        if acq.start_time_s.is_some_and(|t| !t.is_finite()) {
            return Err(CliError::config("acquisition.start_time_s", "must be finite"));
        }
        let settings = self.settings();
        if settings.is_empty() {
            return Err(CliError::config("acquisition", "no presets and no settings given"));
        }
        for (k, s) in self.acquisition.settings.iter().enumerate() {
            section(&format!("acquisition.settings[{k}]"), s.projectors().map(|_| ()))?;
        }
        section("correlator", self.correlator.validate())?;
        if self.tomography.bootstrap < 2 {
            return Err(CliError::config("tomography.bootstrap", "must be >= 2"));
        }
        section("chsh", self.chsh.settings().validate())?;
        positive("chsh.curve_step_deg", self.chsh.curve_step_deg)?;
        if self.chsh.monte_carlo_replicas < 2 {
            return Err(CliError::config("chsh.monte_carlo_replicas", "must be >= 2"));
        }
        Ok(())
    }

    /// Presets expanded, followed by the explicit settings; repeats are
    /// acquired once.
    pub fn settings(&self) -> Vec<JointSetting> {
        let mut all = Vec::new();
        for p in &self.acquisition.presets {
            match p {
                Preset::Tomography => all.extend(basis_settings_16()),
                Preset::Chsh => all.extend(self.chsh.settings().settings_16()),
            }
        }
        all.extend(self.acquisition.settings.iter().copied());
        let mut out: Vec<JointSetting> = Vec::with_capacity(all.len());
        for s in all {
            if !out.contains(&s) {
                out.push(s);
            }
        }
        out
    }

    pub fn pump_profile(&self) -> Result<PumpProfile> {
        match (&self.pump.constant_nw, &self.pump.profile_path) {
            (_, Some(path)) => Ok(PumpProfile::from_csv(path)?),
            (Some(p), None) => section("pump.constant_nw", PumpProfile::constant(*p)),
            (None, None) => Ok(PumpProfile::constant(DEFAULT_PUMP_NW)?),
        }
    }

    pub fn plan(&self, profile: &PumpProfile) -> AcquisitionPlan {
        let start = self
            .acquisition
            .start_time_s
            .unwrap_or_else(|| if profile.is_constant() { 0.0 } else { profile.domain().0 });
        AcquisitionPlan::sequential(self.settings(), self.acquisition.duration_s, start, self.acquisition.gap_s, self.seed)
    }
}
