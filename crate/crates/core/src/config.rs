//! Experiment configuration files.
//!
//! TOML, one table per subsystem. Every key carries its unit in the name
//! (`_mhz`, `_khz`, `_us`, `_ns`, `_ps`, `_per_s`, `_mt`, `_m`); frequencies
//! are ordinary frequencies and become angular frequencies on load. Missing
//! keys take their defaults and unknown keys are rejected.
//!
//! ```toml
//! format_version = 1
//! mode = "master_equation"
//!
//! [system]
//! omega_drive_mhz = 30.0
//! raman_offset_khz = 60.0
//!
//! [run]
//! n_trials = 20000
//! master_seed = 1
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detector::{DetectorParams, DEFAULT_DARK_RATE};
use crate::error::{Error, Result};
use crate::level::GFactors;
use crate::ode::Tolerance;
use crate::params::{khz, mhz, CavityTuning, DrivePolarization, SystemParams};
use crate::sequence::PulseSequence;
use crate::stats::AnalysisSettings;

pub const FORMAT_VERSION: u32 = 1;

/// The generator behind every random stream. Configs name it explicitly so
/// that a file cannot silently be replayed with a different algorithm.
pub const PRNG_NAME: &str = "chacha8/rand_chacha-0.9";

/// Trials in the full measurement campaign: 3500 runs of 3709 periods.
pub const PAPER_SCALE_TRIALS: u64 = 3500 * 3709;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    MasterEquation,
    Trajectory,
    AnalyzeOnly,
    DarkLevelStudy,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::MasterEquation, Mode::Trajectory, Mode::AnalyzeOnly, Mode::DarkLevelStudy];

    pub fn label(self) -> &'static str {
        match self {
            Mode::MasterEquation => "master_equation",
            Mode::Trajectory => "trajectory",
            Mode::AnalyzeOnly => "analyze_only",
            Mode::DarkLevelStudy => "dark_level_study",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|m| m.label() == norm)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|m| m.label()).collect();
                Error::Config(vec![format!("unknown mode '{s}' (expected one of {})", names.join(", "))])
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub g0_mhz: f64,
    pub kappa_mhz: f64,
    /// P1/2 lifetime. Literature value; not measured in this setup.
    pub p_lifetime_ns: f64,
    /// Fraction of P1/2 decays into D3/2. Literature value.
    pub branching_sd: f64,
    pub omega_drive_mhz: f64,
    pub delta_drive_mhz: f64,
    pub cavity_tuning: CavityTuning,
    /// Only read when `cavity_tuning = "explicit"`.
    pub delta_cavity_mhz: Option<f64>,
    pub raman_offset_khz: f64,
    pub drive_linewidth_khz: f64,
    pub b_field_mt: f64,
    pub g_factors: GFactors,
    pub fock_cutoff: usize,
    pub cavity_length_m: f64,
    pub finesse: f64,
    pub dark_level: bool,
    /// Decay rate into the dark level in 1/µs; absent means 100 × Γ_eff.
    pub dark_decay_rate_per_us: Option<f64>,
    pub drive_polarization: DrivePolarization,
    pub pump_infidelity: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        let p = SystemParams::standard();
        Self {
            g0_mhz: 1.6,
            kappa_mhz: 0.054,
            p_lifetime_ns: 7.098,
            branching_sd: p.branching_sd,
            omega_drive_mhz: 30.0,
            delta_drive_mhz: 335.0,
            cavity_tuning: CavityTuning::StarkCompensated,
            delta_cavity_mhz: None,
            raman_offset_khz: 60.0,
            drive_linewidth_khz: 30.0,
            b_field_mt: 0.2,
            g_factors: GFactors::default(),
            fock_cutoff: 3,
            cavity_length_m: 0.02,
            finesse: 70_000.0,
            dark_level: false,
            dark_decay_rate_per_us: None,
            drive_polarization: p.drive_polarization,
            pump_infidelity: 0.0,
        }
    }
}

impl SystemSection {
    pub fn to_params(&self) -> Result<SystemParams> {
        let mut errs = Vec::new();
        if !(self.p_lifetime_ns > 0.0 && self.p_lifetime_ns.is_finite()) {
            errs.push(format!("system.p_lifetime_ns must be positive, got {}", self.p_lifetime_ns));
        }
        match (self.cavity_tuning, self.delta_cavity_mhz) {
            (CavityTuning::Explicit, None) => {
                errs.push("system.delta_cavity_mhz is required when cavity_tuning = \"explicit\"".into())
            }
            (CavityTuning::Explicit, Some(_)) | (_, None) => {}
            (_, Some(_)) => errs.push(
                "system.delta_cavity_mhz is only used with cavity_tuning = \"explicit\"".into(),
            ),
        }
        if !self.dark_level && self.dark_decay_rate_per_us.is_some() {
            errs.push("system.dark_decay_rate_per_us is set but dark_level = false".into());
        }
        if let Some(r) = self.dark_decay_rate_per_us {
            if !(r > 0.0 && r.is_finite()) {
                errs.push(format!("system.dark_decay_rate_per_us must be positive, got {r}"));
            }
        }
        let mut p = SystemParams {
            g0: mhz(self.g0_mhz),
            kappa: mhz(self.kappa_mhz),
            gamma_total: 1.0 / (self.p_lifetime_ns * 1e-3),
            branching_sd: self.branching_sd,
            omega_drive: mhz(self.omega_drive_mhz),
            delta_drive: mhz(self.delta_drive_mhz),
            delta_cavity: mhz(self.delta_cavity_mhz.unwrap_or(self.delta_drive_mhz)),
            raman_offset: khz(self.raman_offset_khz),
            drive_linewidth: khz(self.drive_linewidth_khz),
            b_field: self.b_field_mt * 1e-3,
            g_factors: self.g_factors,
            fock_cutoff: self.fock_cutoff,
            cavity_length: self.cavity_length_m,
            finesse: self.finesse,
            dark_decay_rate: 0.0,
            drive_polarization: self.drive_polarization,
            pump_infidelity: self.pump_infidelity,
        };
        if let Err(e) = p.validate() {
            errs.extend(config_items(prefixed("system")(e)));
        }
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        if self.cavity_tuning != CavityTuning::Explicit {
            p.retune(self.cavity_tuning)?;
        }
        if self.dark_level {
            p = p.with_dark_level(self.dark_decay_rate_per_us)?;
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    pub path_efficiency: f64,
    pub qe_a: f64,
    pub qe_b: f64,
    pub dark_rate_a_per_s: f64,
    pub dark_rate_b_per_s: f64,
    pub physical_dead_time_ns: f64,
    pub afterpulse_prob: f64,
    pub afterpulse_window_us: f64,
    pub reflection_prob: f64,
    pub reflection_delay_ns: f64,
    pub reflection_jitter_window_ns: f64,
    pub quantization_ps: u64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        let d = DetectorParams::default();
        Self {
            path_efficiency: d.path_efficiency,
            qe_a: d.qe[0],
            qe_b: d.qe[1],
            dark_rate_a_per_s: DEFAULT_DARK_RATE,
            dark_rate_b_per_s: DEFAULT_DARK_RATE,
            physical_dead_time_ns: d.physical_dead_time_ns,
            afterpulse_prob: d.afterpulse_prob,
            afterpulse_window_us: d.afterpulse_window_us,
            reflection_prob: d.reflection_prob,
            reflection_delay_ns: d.reflection_delay_ns,
            reflection_jitter_window_ns: d.reflection_jitter_window_ns,
            quantization_ps: d.quantization_ps,
        }
    }
}

impl DetectorSection {
    pub fn to_params(&self) -> DetectorParams {
        DetectorParams {
            path_efficiency: self.path_efficiency,
            qe: [self.qe_a, self.qe_b],
            dark_rate: [self.dark_rate_a_per_s, self.dark_rate_b_per_s],
            physical_dead_time_ns: self.physical_dead_time_ns,
            afterpulse_prob: self.afterpulse_prob,
            afterpulse_window_us: self.afterpulse_window_us,
            reflection_prob: self.reflection_prob,
            reflection_delay_ns: self.reflection_delay_ns,
            reflection_jitter_window_ns: self.reflection_jitter_window_ns,
            quantization_ps: self.quantization_ps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub n_trials: u64,
    pub master_seed: u64,
    /// Seed of the detector chain; derived from `master_seed` when absent.
    pub detector_seed: Option<u64>,
    pub prng: String,
    pub output_dt_us: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Trials simulated per batch before their clicks are streamed out.
    pub batch_trials: u64,
    pub write_emissions: bool,
    /// Time-tag file for `analyze_only`. Relative paths are taken from the
    /// directory of the config file.
    pub input_clicks: Option<PathBuf>,
    /// Drive pulse lengths compared by the dark-level study.
    pub study_drive_us: Vec<f64>,
}

impl Default for RunSection {
    fn default() -> Self {
        let tol = Tolerance::default();
        Self {
            n_trials: 20_000,
            master_seed: 1,
            detector_seed: None,
            prng: PRNG_NAME.to_string(),
            output_dt_us: 0.1,
            rtol: tol.rtol,
            atol: tol.atol,
            batch_trials: 65_536,
            write_emissions: true,
            input_clicks: None,
            study_drive_us: vec![120.0, 12.0],
        }
    }
}

impl RunSection {
    pub fn tolerance(&self) -> Result<Tolerance> {
        Tolerance::new(self.rtol, self.atol)
    }

    pub fn detector_seed(&self) -> u64 {
        self.detector_seed
            .unwrap_or_else(|| self.master_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xD1B5_4A32_D192_ED03)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub mode: Mode,
    pub system: SystemSection,
    pub sequence: PulseSequence,
    pub detector: DetectorSection,
    pub run: RunSection,
    pub analysis: AnalysisSettings,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            format_version: FORMAT_VERSION,
            mode: Mode::MasterEquation,
            system: SystemSection::default(),
            sequence: PulseSequence::standard(),
            detector: DetectorSection::default(),
            run: RunSection::default(),
            analysis: AnalysisSettings::default(),
            base_dir: None,
        }
    }
}

fn prefixed(section: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::InvalidParams(v) | Error::Config(v) => {
            Error::Config(v.into_iter().map(|m| format!("{section}: {m}")).collect())
        }
        Error::Domain(m) => Error::Config(vec![format!("{section}: {m}")]),
        other => other,
    }
}

fn config_items(e: Error) -> Vec<String> {
    match e {
        Error::Config(v) => v,
        other => vec![other.to_string()],
    }
}

impl ExperimentConfig {
    /// Parses and validates TOML text.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string().trim_end().to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(v) => Error::Config(v.into_iter().map(|m| format!("{}: {m}", path.display())).collect()),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    /// Canonical TOML text with every key written out.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    /// Checks every section and reports all problems together.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.format_version != FORMAT_VERSION {
            errs.push(format!(
                "format_version {} is not supported (expected {FORMAT_VERSION})",
                self.format_version
            ));
        }
        if let Err(e) = self.system.to_params() {
            errs.extend(config_items(e));
        }
        if let Err(e) = self.sequence.validate() {
            errs.extend(config_items(prefixed("sequence")(e)));
        }
        if let Err(e) = self.sequence.check_grid(self.run.output_dt_us) {
            errs.extend(config_items(prefixed("sequence")(e)));
        }
        if let Err(e) = self.detector.to_params().validate() {
            errs.extend(config_items(prefixed("detector")(e)));
        }
        if self.sequence.validate().is_ok() {
            if let Err(e) = self.analysis.validate(self.sequence.period()) {
                errs.extend(config_items(prefixed("analysis")(e)));
            }
        }
        let r = &self.run;
        if r.n_trials == 0 {
            errs.push("run.n_trials must be at least 1".into());
        }
        if r.batch_trials == 0 {
            errs.push("run.batch_trials must be at least 1".into());
        }
        if r.prng != PRNG_NAME {
            errs.push(format!("run.prng '{}' is not available (only '{PRNG_NAME}')", r.prng));
        }
        if !(r.output_dt_us > 0.0 && r.output_dt_us.is_finite()) {
            errs.push(format!("run.output_dt_us must be positive, got {}", r.output_dt_us));
        }
        if let Err(e) = r.tolerance() {
            errs.extend(config_items(prefixed("run")(e)));
        }
        if r.study_drive_us.is_empty() {
            errs.push("run.study_drive_us must list at least one pulse length".into());
        }
        for &d in &r.study_drive_us {
            match self.sequence.with_drive_duration(d) {
                Ok(s) => {
                    if let Err(e) = s.check_grid(r.output_dt_us) {
                        errs.extend(config_items(prefixed("run.study_drive_us")(e)));
                    }
                }
                Err(e) => errs.extend(config_items(prefixed("run.study_drive_us")(e))),
            }
        }
        if self.mode == Mode::AnalyzeOnly && r.input_clicks.is_none() {
            errs.push("mode analyze_only needs run.input_clicks".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn params(&self) -> Result<SystemParams> {
        self.system.to_params()
    }

    pub fn input_clicks(&self) -> Option<PathBuf> {
        self.run.input_clicks.as_ref().map(|p| match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_standard() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let p = cfg.params().unwrap();
        let q = SystemParams::standard();
        assert!((p.gamma_total - q.gamma_total).abs() < 1e-9);
        assert!((p.delta_cavity - q.delta_cavity).abs() < 1e-9);
        assert_eq!(p.omega_drive, q.omega_drive);
        assert_eq!(cfg.detector.to_params(), DetectorParams::default());
    }

    #[test]
    fn empty_file_is_default() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn round_trip_is_canonical() {
        let text = r#"
            mode = "trajectory"
            [system]
            omega_drive_mhz = 25.0
            dark_level = true
            [run]
            n_trials = 500
            [[sequence.segments]]
            label = "drive"
            duration_us = 100.0
            drive_on = true
            [[sequence.segments]]
            label = "reset"
            duration_us = 314.5
            drive_on = false
            reset = true
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        let canon = cfg.to_toml().unwrap();
        let again = ExperimentConfig::from_toml(&canon).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(canon, again.to_toml().unwrap());
        assert_eq!(again.sequence.segments.len(), 2);
        assert!(again.params().unwrap().dark_enabled());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = ExperimentConfig::from_toml("[system]\nomega_drive = 30.0\n").unwrap_err();
        assert!(e.to_string().contains("omega_drive"), "{e}");
        assert!(ExperimentConfig::from_toml("colour = 1\n").is_err());
    }

    #[test]
    fn violations_are_itemized() {
        let text = r#"
            format_version = 7
            mode = "analyze_only"
            [system]
            g0_mhz = -1.0
            delta_cavity_mhz = 300.0
            [detector]
            qe_a = 1.5
            [run]
            n_trials = 0
            prng = "mt19937"
        "#;
        match ExperimentConfig::from_toml(text) {
            Err(Error::Config(items)) => {
                let all = items.join("\n");
                for needle in ["format_version", "g0", "delta_cavity_mhz", "qe", "n_trials", "prng", "input_clicks"] {
                    assert!(all.contains(needle), "missing {needle} in\n{all}");
                }
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn explicit_tuning_uses_given_detuning() {
        let cfg = ExperimentConfig::from_toml(
            "[system]\ncavity_tuning = \"explicit\"\ndelta_cavity_mhz = 334.0\n",
        )
        .unwrap();
        assert!((cfg.params().unwrap().delta_cavity - mhz(334.0)).abs() < 1e-12);
        assert!(ExperimentConfig::from_toml("[system]\ncavity_tuning = \"explicit\"\n").is_err());
    }

    #[test]
    fn modes_parse_from_cli_spelling() {
        assert_eq!(Mode::parse("DARK_LEVEL_STUDY").unwrap(), Mode::DarkLevelStudy);
        assert_eq!(Mode::parse("analyze-only").unwrap(), Mode::AnalyzeOnly);
        assert!(Mode::parse("bogus").is_err());
    }

    #[test]
    fn relative_input_resolves_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "mode = \"analyze_only\"\n[run]\ninput_clicks = \"clicks.csv\"\n").unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.input_clicks().unwrap(), dir.path().join("clicks.csv"));
    }
}
