//! Hanbury Brown–Twiss detection: output-path loss, beamsplitter, APD
//! efficiency, dark counts, afterpulsing, the mirror reflection between
//! the two APDs, dead time and time-tagger quantization.
//!
//! Times are integer picoseconds from the start of trial 0.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::EmissionRecord;

pub const PS_PER_US: f64 = 1e6;

/// Dark-count rate per APD that makes the accidental coincidences in the
/// ±207.25 µs window around τ = 0 fluctuate by ±150 counts at the measured
/// singles level (see `tests::default_dark_rate_reproduces_window_noise`).
pub const DEFAULT_DARK_RATE: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Detector {
    A,
    B,
}

impl Detector {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn other(self) -> Self {
        match self {
            Detector::A => Detector::B,
            Detector::B => Detector::A,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Detector::A => "A",
            Detector::B => "B",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Origin {
    Signal,
    Dark,
    Afterpulse,
    Reflection,
}

impl Origin {
    pub fn label(self) -> &'static str {
        match self {
            Origin::Signal => "SIGNAL",
            Origin::Dark => "DARK",
            Origin::Afterpulse => "AFTERPULSE",
            Origin::Reflection => "REFLECTION",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        [Origin::Signal, Origin::Dark, Origin::Afterpulse, Origin::Reflection]
            .into_iter()
            .find(|o| o.label() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Click {
    pub time_ps: u64,
    pub detector: Detector,
    /// Simulation bookkeeping; absent for externally recorded streams.
    pub origin: Option<Origin>,
}

/// Time-ordered clicks of both detectors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClickStream {
    pub events: Vec<Click>,
}

impl ClickStream {
    pub fn new(mut events: Vec<Click>) -> Self {
        events.sort();
        Self { events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn is_sorted(&self) -> bool {
        self.events.windows(2).all(|w| w[0].time_ps <= w[1].time_ps)
    }

    pub fn times(&self, detector: Detector) -> Vec<u64> {
        self.events
            .iter()
            .filter(|c| c.detector == detector)
            .map(|c| c.time_ps)
            .collect()
    }

    pub fn count_origin(&self, origin: Origin) -> usize {
        self.events.iter().filter(|c| c.origin == Some(origin)).count()
    }

    /// Same clicks with origin tags removed.
    pub fn without_origins(&self) -> Self {
        Self {
            events: self.events.iter().map(|c| Click { origin: None, ..*c }).collect(),
        }
    }

    /// `time_ps,detector` and, with `origins`, a third `origin` column.
    pub fn write_csv(&self, path: &Path, origins: bool) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        if origins {
            writeln!(w, "time_ps,detector,origin")?;
        } else {
            writeln!(w, "time_ps,detector")?;
        }
        for c in &self.events {
            if origins {
                let o = c.origin.map_or("", |o| o.label());
                writeln!(w, "{},{},{}", c.time_ps, c.detector.label(), o)?;
            } else {
                writeln!(w, "{},{}", c.time_ps, c.detector.label())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the time-tag format, with or without the origin column.
    /// Unsorted input is an error.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let perr = |m: String| Error::Parse {
            source_name: name.clone(),
            message: m,
        };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let headers = rdr.headers()?.clone();
        let col = |n: &str| headers.iter().position(|h| h == n);
        let (it, id) = match (col("time_ps"), col("detector")) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(perr(format!("header must contain time_ps and detector, got {:?}", headers.iter().collect::<Vec<_>>()))),
        };
        let io = col("origin");
        let mut events = Vec::new();
        for (n, row) in rdr.records().enumerate() {
            let row = row?;
            let line = n + 2;
            let time_ps: u64 = row
                .get(it)
                .unwrap_or("")
                .parse()
                .map_err(|e| perr(format!("line {line}: bad time_ps: {e}")))?;
            let detector = match row.get(id).unwrap_or("") {
                "A" => Detector::A,
                "B" => Detector::B,
                other => return Err(perr(format!("line {line}: detector must be A or B, got '{other}'"))),
            };
            let origin = match io.and_then(|i| row.get(i)) {
                None | Some("") => None,
                Some(s) => Some(Origin::from_label(s).ok_or_else(|| perr(format!("line {line}: unknown origin '{s}'")))?),
            };
            events.push(Click { time_ps, detector, origin });
        }
        let s = Self { events };
        if !s.is_sorted() {
            return Err(perr("time tags are not in ascending order".into()));
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorParams {
    /// Probability that a photon leaving the cavity reaches the beamsplitter
    /// and is coupled into a detector fiber.
    pub path_efficiency: f64,
    /// Quantum efficiency of APD A and APD B.
    pub qe: [f64; 2],
    /// Dark counts per second, per APD.
    pub dark_rate: [f64; 2],
    pub physical_dead_time_ns: f64,
    pub afterpulse_prob: f64,
    pub afterpulse_window_us: f64,
    pub reflection_prob: f64,
    pub reflection_delay_ns: f64,
    pub reflection_jitter_window_ns: f64,
    pub quantization_ps: u64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            // 6.1 % overall detection probability at the mean quantum efficiency
            path_efficiency: 0.061 / 0.415,
            qe: [0.41, 0.42],
            dark_rate: [DEFAULT_DARK_RATE; 2],
            physical_dead_time_ns: 50.0,
            afterpulse_prob: 0.011,
            afterpulse_window_us: 2.5,
            reflection_prob: 0.01,
            reflection_delay_ns: 125.0,
            reflection_jitter_window_ns: 20.0,
            quantization_ps: 4,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let probs = [
            ("path_efficiency", self.path_efficiency),
            ("qe[A]", self.qe[0]),
            ("qe[B]", self.qe[1]),
            ("afterpulse_prob", self.afterpulse_prob),
            ("reflection_prob", self.reflection_prob),
        ];
        for (n, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                errs.push(format!("{n} must lie in [0, 1], got {p}"));
            }
        }
        for (n, v) in [
            ("afterpulse_window_us", self.afterpulse_window_us),
            ("reflection_jitter_window_ns", self.reflection_jitter_window_ns),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{n} must be positive, got {v}"));
            }
        }
        for (n, v) in [
            ("dark_rate[A]", self.dark_rate[0]),
            ("dark_rate[B]", self.dark_rate[1]),
            ("physical_dead_time_ns", self.physical_dead_time_ns),
            ("reflection_delay_ns", self.reflection_delay_ns),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                errs.push(format!("{n} must be non-negative, got {v}"));
            }
        }
        if self.reflection_delay_ns < self.reflection_jitter_window_ns / 2.0 {
            errs.push("reflection_delay_ns must be at least half the jitter window".into());
        }
        if self.quantization_ps == 0 {
            errs.push("quantization_ps must be at least 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(errs))
        }
    }

    /// Probability that one cavity photon produces a signal click on either APD.
    pub fn detection_efficiency(&self) -> f64 {
        self.path_efficiency * (self.qe[0] + self.qe[1]) / 2.0
    }
}

/// Non-paralyzable dead time per detector: drops every click closer than
/// `dead_ps` to the previous kept click on the same detector. `clicks` must
/// be time-ordered.
pub fn apply_dead_time(clicks: &[Click], dead_ps: u64) -> Vec<Click> {
    let mut last: [Option<u64>; 2] = [None, None];
    clicks
        .iter()
        .filter(|c| {
            let l = &mut last[c.detector.index()];
            match *l {
                Some(t) if c.time_ps - t < dead_ps => false,
                _ => {
                    *l = Some(c.time_ps);
                    true
                }
            }
        })
        .copied()
        .collect()
}

/// Streaming detector model. Trials must be fed in increasing order; clicks
/// are final once no later trial can produce an earlier one.
pub struct DetectorChain {
    det: DetectorParams,
    period_ps: u64,
    seed: u64,
    next_trial: u64,
    pending: Vec<Click>,
    last_kept: [Option<u64>; 2],
    out: Vec<Click>,
}

impl DetectorChain {
    pub fn new(det: &DetectorParams, period_us: f64, seed: u64) -> Result<Self> {
        det.validate()?;
        if !(period_us > 0.0) {
            return Err(Error::Domain(format!("period must be positive, got {period_us}")));
        }
        Ok(Self {
            det: det.clone(),
            period_ps: (period_us * PS_PER_US).round() as u64,
            seed,
            next_trial: 0,
            pending: Vec::new(),
            last_kept: [None, None],
            out: Vec::new(),
        })
    }

    pub fn period_ps(&self) -> u64 {
        self.period_ps
    }

    /// Raw clicks of one trial before dead time and quantization.
    fn trial_clicks(&self, trial: u64, record: Option<&EmissionRecord>) -> Vec<Click> {
        let det = &self.det;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial);
        let base = trial * self.period_ps;
        let at = |offset_ps: f64| base + offset_ps.max(0.0).floor() as u64;
        // (offset in ps within the trial, detector, origin)
        let mut primary: Vec<(f64, Detector, Origin)> = Vec::new();
        if let Some(r) = record {
            for e in r.cavity_events() {
                if rng.random::<f64>() >= det.path_efficiency {
                    continue;
                }
                let d = if rng.random::<bool>() { Detector::B } else { Detector::A };
                if rng.random::<f64>() < det.qe[d.index()] {
                    primary.push((e.time_us * PS_PER_US, d, Origin::Signal));
                }
            }
        }
        let period_s = self.period_ps as f64 * 1e-12;
        for d in [Detector::A, Detector::B] {
            let mean = det.dark_rate[d.index()] * period_s;
            if mean > 0.0 {
                let n = Poisson::new(mean).expect("positive mean").sample(&mut rng) as u64;
                for _ in 0..n {
                    primary.push((rng.random::<f64>() * self.period_ps as f64, d, Origin::Dark));
                }
            }
        }
        let mut clicks: Vec<Click> = Vec::with_capacity(primary.len());
        for &(t, d, o) in &primary {
            clicks.push(Click { time_ps: at(t), detector: d, origin: Some(o) });
            if rng.random::<f64>() < det.afterpulse_prob {
                // uniform in (0, window]
                let dt = (1.0 - rng.random::<f64>()) * det.afterpulse_window_us * PS_PER_US;
                clicks.push(Click { time_ps: at(t + dt), detector: d, origin: Some(Origin::Afterpulse) });
            }
            if rng.random::<f64>() < det.reflection_prob {
                let jitter = (rng.random::<f64>() - 0.5) * det.reflection_jitter_window_ns;
                let dt = (det.reflection_delay_ns + jitter) * 1e3;
                clicks.push(Click { time_ps: at(t + dt), detector: d.other(), origin: Some(Origin::Reflection) });
            }
        }
        clicks
    }

    /// Processes trials `self.next_trial .. end`. `records` holds the
    /// emission records of (some of) these trials, sorted by trial.
    pub fn push(&mut self, records: &[EmissionRecord], end: u64) -> Result<()> {
        let start = self.next_trial;
        if end < start {
            return Err(Error::Domain(format!("trial {end} already processed")));
        }
        if let Some(r) = records.iter().find(|r| r.trial < start || r.trial >= end) {
            return Err(Error::Domain(format!("record for trial {} outside batch {start}..{end}", r.trial)));
        }
        if records.windows(2).any(|w| w[0].trial >= w[1].trial) {
            return Err(Error::Domain("emission records must be sorted by trial, one per trial".into()));
        }
        let by_trial = |t: u64| records.binary_search_by_key(&t, |r| r.trial).ok().map(|i| &records[i]);
        let fresh: Vec<Vec<Click>> = (start..end)
            .into_par_iter()
            .map(|t| self.trial_clicks(t, by_trial(t)))
            .collect();
        for c in fresh {
            self.pending.extend(c);
        }
        self.next_trial = end;
        self.flush(Some(end * self.period_ps));
        Ok(())
    }

    /// Finalizes clicks earlier than `horizon` (all clicks when `None`).
    fn flush(&mut self, horizon: Option<u64>) {
        self.pending.sort();
        let split = match horizon {
            Some(h) => self.pending.partition_point(|c| c.time_ps < h),
            None => self.pending.len(),
        };
        let dead = (self.det.physical_dead_time_ns * 1e3).round() as u64;
        let q = self.det.quantization_ps;
        for c in self.pending.drain(..split) {
            let l = &mut self.last_kept[c.detector.index()];
            if let Some(t) = *l {
                if c.time_ps - t < dead {
                    continue;
                }
            }
            *l = Some(c.time_ps);
            self.out.push(Click { time_ps: c.time_ps / q * q, ..c });
        }
    }

    pub fn finish(mut self) -> ClickStream {
        self.flush(None);
        ClickStream { events: self.out }
    }
}

/// Runs the whole chain at once over `n_trials` trials.
pub fn detect(
    records: &[EmissionRecord],
    n_trials: u64,
    period_us: f64,
    det: &DetectorParams,
    seed: u64,
) -> Result<ClickStream> {
    let mut chain = DetectorChain::new(det, period_us, seed)?;
    chain.push(records, n_trials)?;
    Ok(chain.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{EmissionChannel, EmissionEvent};

    fn quiet() -> DetectorParams {
        DetectorParams {
            path_efficiency: 1.0,
            qe: [1.0, 1.0],
            dark_rate: [0.0, 0.0],
            afterpulse_prob: 0.0,
            reflection_prob: 0.0,
            ..DetectorParams::default()
        }
    }

    fn one_photon(trial: u64, t: f64) -> EmissionRecord {
        EmissionRecord {
            trial,
            events: vec![EmissionEvent { time_us: t, channel: EmissionChannel::CavityMode1 }],
        }
    }

    #[test]
    fn nothing_in_nothing_out() {
        let det = DetectorParams { path_efficiency: 0.0, dark_rate: [0.0, 0.0], ..DetectorParams::default() };
        let recs: Vec<_> = (0..100).map(|t| one_photon(t, 10.0)).collect();
        assert!(detect(&recs, 100, 414.5, &det, 1).unwrap().is_empty());
        assert!(detect(&[], 100, 414.5, &quiet(), 1).unwrap().is_empty());
    }

    #[test]
    fn ideal_single_click() {
        let s = detect(&[one_photon(3, 12.345_678_9)], 5, 414.5, &quiet(), 9).unwrap();
        assert_eq!(s.len(), 1);
        let c = s.events[0];
        assert_eq!(c.time_ps, (3 * 414_500_000 + 12_345_678) / 4 * 4);
        assert_eq!(c.origin, Some(Origin::Signal));
    }

    #[test]
    fn dead_time_and_quantization() {
        let clicks = vec![
            Click { time_ps: 0, detector: Detector::A, origin: None },
            Click { time_ps: 10, detector: Detector::B, origin: None },
            Click { time_ps: 40, detector: Detector::A, origin: None },
            Click { time_ps: 60, detector: Detector::A, origin: None },
        ];
        let kept = apply_dead_time(&clicks, 50);
        assert_eq!(kept.len(), 3);
        assert_eq!(apply_dead_time(&kept, 50), kept);
    }

    #[test]
    fn signal_probability_matches_efficiency() {
        let det = DetectorParams { dark_rate: [0.0, 0.0], afterpulse_prob: 0.0, reflection_prob: 0.0, ..DetectorParams::default() };
        let n = 100_000u64;
        let recs: Vec<_> = (0..n).map(|t| one_photon(t, 50.0)).collect();
        let s = detect(&recs, n, 414.5, &det, 4).unwrap();
        let p = det.detection_efficiency();
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((s.len() as f64 - n as f64 * p).abs() < 3.0 * sigma);
    }

    #[test]
    fn streaming_equals_one_shot() {
        let recs: Vec<_> = (0..400).filter(|t| t % 3 == 0).map(|t| one_photon(t, 414.0)).collect();
        let det = DetectorParams { path_efficiency: 1.0, afterpulse_prob: 0.3, reflection_prob: 0.3, dark_rate: [2000.0, 2000.0], ..DetectorParams::default() };
        let whole = detect(&recs, 400, 414.5, &det, 77).unwrap();
        let mut chain = DetectorChain::new(&det, 414.5, 77).unwrap();
        for (a, b) in [(0u64, 37u64), (37, 200), (200, 400)] {
            let part: Vec<_> = recs.iter().filter(|r| r.trial >= a && r.trial < b).cloned().collect();
            chain.push(&part, b).unwrap();
        }
        assert_eq!(chain.finish(), whole);
        assert!(whole.is_sorted());
        assert!(whole.count_origin(Origin::Reflection) > 0);
        assert!(whole.count_origin(Origin::Afterpulse) > 0);
    }

    #[test]
    fn csv_roundtrip_with_and_without_origins() {
        let recs: Vec<_> = (0..50).map(|t| one_photon(t, 20.0)).collect();
        let s = detect(&recs, 50, 414.5, &DetectorParams { path_efficiency: 1.0, ..DetectorParams::default() }, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.csv");
        s.write_csv(&p1, true).unwrap();
        assert_eq!(ClickStream::read_csv(&p1).unwrap(), s);
        let p2 = dir.path().join("b.csv");
        s.write_csv(&p2, false).unwrap();
        assert_eq!(ClickStream::read_csv(&p2).unwrap(), s.without_origins());
    }

    #[test]
    fn malformed_csv_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "time_ps,detector\n10,A\n5,B\n").unwrap();
        assert!(ClickStream::read_csv(&p).is_err());
        std::fs::write(&p, "time_ps,detector\n10,C\n").unwrap();
        assert!(ClickStream::read_csv(&p).is_err());
        std::fs::write(&p, "t,d\n10,A\n").unwrap();
        assert!(ClickStream::read_csv(&p).is_err());
    }

    #[test]
    fn invalid_params_itemized() {
        let det = DetectorParams { qe: [1.5, -0.1], quantization_ps: 0, ..DetectorParams::default() };
        match det.validate() {
            Err(Error::InvalidParams(v)) => assert_eq!(v.len(), 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn default_dark_rate_reproduces_window_noise() {
        // 581 000 singles over 3500 runs of 3709 kept sequences of 414.5 µs;
        // accidentals in a 414.5 µs wide window: (2 s d + d²) T W.
        let t = 3500.0 * 3709.0 * 414.5e-6;
        let w = 414.5e-6;
        let s = 581_000.0 / 2.0 / t;
        let d = DEFAULT_DARK_RATE;
        let acc = (2.0 * s * d + d * d) * t * w;
        assert!((acc.sqrt() - 150.0).abs() < 2.0, "sqrt(acc) = {}", acc.sqrt());
    }
}
