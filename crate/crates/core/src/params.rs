//! Physical parameters of ion, cavity and drive.
//!
//! Angular frequencies are stored in rad/µs, so that 2π × 1 MHz is
//! `TAU * 1.0`. Times elsewhere in the crate are in µs.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::level::{GFactors, LevelScheme};
use crate::model;
use crate::operator::HilbertSpace;

/// Angular frequency in rad/µs from a frequency in MHz.
pub fn mhz(f: f64) -> f64 {
    TAU * f
}

/// Angular frequency in rad/µs from a frequency in kHz.
pub fn khz(f: f64) -> f64 {
    TAU * f * 1e-3
}

/// Drive-laser polarization, in the frame whose quantization axis is the
/// magnetic field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrivePolarization {
    SigmaMinus,
    Pi,
    SigmaPlus,
    /// Linear polarization perpendicular to B: equal σ⁺ and σ⁻ components.
    LinearPerpendicular,
}

impl DrivePolarization {
    /// Spherical components `(q, amplitude)` of the drive field.
    pub fn components(self) -> &'static [(i32, f64)] {
        use std::f64::consts::FRAC_1_SQRT_2;
        match self {
            DrivePolarization::SigmaMinus => &[(-1, 1.0)],
            DrivePolarization::Pi => &[(0, 1.0)],
            DrivePolarization::SigmaPlus => &[(1, 1.0)],
            DrivePolarization::LinearPerpendicular => &[(-1, FRAC_1_SQRT_2), (1, FRAC_1_SQRT_2)],
        }
    }

    pub fn component(self, q: i32) -> f64 {
        self.components()
            .iter()
            .find(|c| c.0 == q)
            .map_or(0.0, |c| c.1)
    }
}

/// How the cavity detuning is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CavityTuning {
    /// Bare two-photon resonance of S(+1/2) → D(-1/2), ignoring light shifts.
    BareResonance,
    /// Resonance of the light-shifted S(+1/2) and D(-1/2) states.
    StarkCompensated,
    /// Use `delta_cavity` as given.
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Maximum ion–cavity coupling (reduced, before angular factors).
    pub g0: f64,
    /// Cavity field decay rate (half linewidth).
    pub kappa: f64,
    /// Total P1/2 population decay rate.
    pub gamma_total: f64,
    /// Fraction of P1/2 decays ending in D3/2.
    pub branching_sd: f64,
    /// Drive Rabi frequency for unit polarization weight and unit dipole amplitude.
    pub omega_drive: f64,
    pub delta_drive: f64,
    pub delta_cavity: f64,
    /// Residual two-photon detuning of the target Raman resonance.
    pub raman_offset: f64,
    /// Drive laser linewidth (FWHM).
    pub drive_linewidth: f64,
    /// Magnetic field in tesla.
    pub b_field: f64,
    pub g_factors: GFactors,
    /// Fock states per mode; 3 means {0, 1, 2}.
    pub fock_cutoff: usize,
    pub cavity_length: f64,
    pub finesse: f64,
    /// Decay S(-1/2) → DARK. Zero disables the dark level.
    pub dark_decay_rate: f64,
    pub drive_polarization: DrivePolarization,
    /// Initial population placed in S(-1/2) instead of S(+1/2).
    pub pump_infidelity: f64,
}

impl SystemParams {
    /// The parameter set used to reproduce the measured source, with the
    /// cavity tuned to the light-shifted target resonance.
    ///
    /// `gamma_total` (P1/2 lifetime 7.098 ns) and `branching_sd` are literature
    /// values for ⁴⁰Ca⁺, not measured in this setup.
    pub fn standard() -> Self {
        let mut p = Self {
            g0: mhz(1.6),
            kappa: mhz(0.054),
            gamma_total: 1.0 / 7.098e-3,
            branching_sd: 0.06435,
            omega_drive: mhz(30.0),
            delta_drive: mhz(335.0),
            delta_cavity: mhz(335.0),
            raman_offset: khz(60.0),
            drive_linewidth: khz(30.0),
            b_field: 0.2e-3,
            g_factors: GFactors::default(),
            fock_cutoff: 3,
            cavity_length: 0.02,
            finesse: 70_000.0,
            dark_decay_rate: 0.0,
            drive_polarization: DrivePolarization::LinearPerpendicular,
            pump_infidelity: 0.0,
        };
        p.retune(CavityTuning::StarkCompensated)
            .expect("default parameters are valid");
        p
    }

    /// Recomputes `delta_cavity` for the given tuning rule.
    pub fn retune(&mut self, tuning: CavityTuning) -> Result<()> {
        self.delta_cavity = model::tuned_delta_cavity(self, tuning)?;
        Ok(())
    }

    pub fn dark_enabled(&self) -> bool {
        self.dark_decay_rate > 0.0
    }

    /// Enables the dark level. `None` picks 100 × the effective decay rate.
    pub fn with_dark_level(mut self, rate: Option<f64>) -> Result<Self> {
        self.dark_decay_rate = match rate {
            Some(r) => r,
            None => 100.0 * model::effective_decay(&self)?,
        };
        self.validate()?;
        Ok(self)
    }

    pub fn without_dark_level(mut self) -> Self {
        self.dark_decay_rate = 0.0;
        self
    }

    pub fn level_scheme(&self) -> LevelScheme {
        LevelScheme::new(self.dark_enabled())
    }

    pub fn space(&self) -> HilbertSpace {
        HilbertSpace::new(self.level_scheme(), self.fock_cutoff)
    }

    /// Checks every constraint and reports all violations at once.
    /// A weakly off-resonant drive or cavity only produces a warning.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let positive = [
            ("g0", self.g0),
            ("kappa", self.kappa),
            ("gamma_total", self.gamma_total),
            ("omega_drive", self.omega_drive),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.fock_cutoff < 1 {
            errs.push("fock_cutoff must be at least 1".into());
        }
        if !(self.branching_sd > 0.0 && self.branching_sd < 1.0) {
            errs.push(format!("branching_sd must lie in (0, 1), got {}", self.branching_sd));
        }
        let nonneg = [
            ("drive_linewidth", self.drive_linewidth),
            ("dark_decay_rate", self.dark_decay_rate),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be non-negative and finite, got {v}"));
            }
        }
        for (name, v) in [
            ("delta_drive", self.delta_drive),
            ("delta_cavity", self.delta_cavity),
            ("raman_offset", self.raman_offset),
            ("b_field", self.b_field),
        ] {
            if !v.is_finite() {
                errs.push(format!("{name} must be finite, got {v}"));
            }
        }
        if !(self.cavity_length > 0.0) {
            errs.push(format!("cavity_length must be positive, got {}", self.cavity_length));
        }
        if !(self.finesse > 0.0) {
            errs.push(format!("finesse must be positive, got {}", self.finesse));
        }
        if !(0.0..=1.0).contains(&self.pump_infidelity) {
            errs.push(format!("pump_infidelity must lie in [0, 1], got {}", self.pump_infidelity));
        }
        if !errs.is_empty() {
            return Err(Error::InvalidParams(errs));
        }
        let scale = self.g0.max(self.omega_drive);
        for (name, d) in [("delta_drive", self.delta_drive), ("delta_cavity", self.delta_cavity)] {
            if d.abs() < 10.0 * scale {
                log::warn!(
                    "|{name}| = {:.3} rad/us is less than 10x the couplings ({:.3} rad/us); \
                     the far-detuned picture is questionable",
                    d.abs(),
                    scale
                );
            }
        }
        Ok(())
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::standard()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let p = SystemParams::standard();
        p.validate().unwrap();
        assert_eq!(p.space().dim(), 72);
        let d = p.clone().with_dark_level(None).unwrap();
        assert_eq!(d.space().dim(), 81);
        assert!(d.dark_decay_rate > 0.0);
    }

    #[test]
    fn validation_lists_every_problem() {
        let mut p = SystemParams::standard();
        p.g0 = 0.0;
        p.kappa = -1.0;
        p.branching_sd = 1.5;
        p.fock_cutoff = 0;
        match p.validate() {
            Err(Error::InvalidParams(v)) => assert_eq!(v.len(), 4, "{v:?}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn polarization_components() {
        let lin = DrivePolarization::LinearPerpendicular;
        let w: f64 = lin.components().iter().map(|c| c.1 * c.1).sum();
        assert!((w - 1.0).abs() < 1e-15);
        assert_eq!(lin.component(0), 0.0);
        assert_eq!(DrivePolarization::Pi.component(0), 1.0);
    }
}
