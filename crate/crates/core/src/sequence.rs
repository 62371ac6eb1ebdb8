//! Periodic pulse sequence: drive, wait, and an idealized state reset.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub label: String,
    pub duration_us: f64,
    pub drive_on: bool,
    /// Replace the state by the initial state and hold it there.
    #[serde(default)]
    pub reset: bool,
}

impl Segment {
    pub fn new(label: &str, duration_us: f64, drive_on: bool, reset: bool) -> Self {
        Self {
            label: label.to_string(),
            duration_us,
            drive_on,
            reset,
        }
    }
}

/// Segment boundaries in µs from the period start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub segments: Vec<Segment>,
}

impl Default for PulseSequence {
    fn default() -> Self {
        Self::standard()
    }
}

impl PulseSequence {
    pub const DRIVE: &'static str = "drive";

    /// 120 µs drive, 250 µs wait, 44.5 µs of recycling, cooling and pumping.
    pub fn standard() -> Self {
        Self {
            segments: vec![
                Segment::new(Self::DRIVE, 120.0, true, false),
                Segment::new("wait", 250.0, false, false),
                Segment::new("reset", 44.5, false, true),
            ],
        }
    }

    /// Same sequence with a different drive duration; other segments keep theirs.
    pub fn with_drive_duration(&self, duration_us: f64) -> Result<Self> {
        let mut s = self.clone();
        let i = s.drive_index()?;
        s.segments[i].duration_us = duration_us;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.segments.is_empty() {
            errs.push("sequence has no segments".to_string());
        }
        for s in &self.segments {
            if !(s.duration_us > 0.0 && s.duration_us.is_finite()) {
                errs.push(format!("segment '{}' has non-positive duration {}", s.label, s.duration_us));
            }
            if s.reset && s.drive_on {
                errs.push(format!("reset segment '{}' cannot have the drive on", s.label));
            }
        }
        let drives = self.segments.iter().filter(|s| s.label == Self::DRIVE).count();
        if drives != 1 {
            errs.push(format!("expected exactly one '{}' segment, found {drives}", Self::DRIVE));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(errs))
        }
    }

    /// Segments must land on the output grid.
    pub fn check_grid(&self, output_dt: f64) -> Result<()> {
        if !(output_dt > 0.0) {
            return Err(Error::Domain(format!("output_dt must be positive, got {output_dt}")));
        }
        let errs: Vec<String> = self
            .segments
            .iter()
            .filter(|s| {
                let r = s.duration_us / output_dt;
                (r - r.round()).abs() > 1e-9 * r.max(1.0)
            })
            .map(|s| {
                format!("segment '{}' ({} us) is not a multiple of output_dt {} us", s.label, s.duration_us, output_dt)
            })
            .collect();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(errs))
        }
    }

    pub fn period(&self) -> f64 {
        self.segments.iter().map(|s| s.duration_us).sum()
    }

    fn drive_index(&self) -> Result<usize> {
        self.segments
            .iter()
            .position(|s| s.label == Self::DRIVE)
            .ok_or_else(|| Error::Domain("sequence has no drive segment".into()))
    }

    pub fn windows(&self) -> Vec<Window> {
        let mut t = 0.0;
        self.segments
            .iter()
            .map(|s| {
                let w = Window {
                    start: t,
                    end: t + s.duration_us,
                };
                t = w.end;
                w
            })
            .collect()
    }

    pub fn drive_window(&self) -> Result<Window> {
        Ok(self.windows()[self.drive_index()?])
    }

    /// From the drive start to the first reset after it (or the period end).
    pub fn emission_window(&self) -> Result<Window> {
        let i = self.drive_index()?;
        let w = self.windows();
        let end = (i..self.segments.len())
            .find(|&k| self.segments[k].reset)
            .map_or(self.period(), |k| w[k].start);
        Ok(Window {
            start: w[i].start,
            end,
        })
    }
}
