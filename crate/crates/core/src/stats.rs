//! Photon statistics from time tags: g²(τ) by cross-correlation of the two
//! APDs, accidental-background subtraction, pulse shape and efficiency.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector::{apply_dead_time, ClickStream, Detector, PS_PER_US};
use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSettings {
    pub dead_time_us: f64,
    pub g2_bin_us: f64,
    pub g2_range_us: f64,
    /// Pairs with ||τ| - center| ≤ half width are dropped (detector cross-talk).
    pub reflection_center_ns: f64,
    pub reflection_half_width_ns: f64,
    pub suppression_window_us: f64,
    pub pulse_bin_us: f64,
    /// Pulse-shape histogram span from the trial start.
    pub pulse_window_us: f64,
    /// Dark rates come from this final stretch of every period.
    pub dark_tail_us: f64,
    /// Detection efficiency used to turn η_exp into η_c, with its uncertainty.
    pub eta_det: f64,
    pub eta_det_sigma: f64,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            dead_time_us: 2.5,
            g2_bin_us: 1.0,
            g2_range_us: 1450.75,
            reflection_center_ns: 125.0,
            reflection_half_width_ns: 10.0,
            suppression_window_us: 207.25,
            pulse_bin_us: 0.5,
            pulse_window_us: 120.0,
            dark_tail_us: 100.0,
            eta_det: 0.051,
            eta_det_sigma: 0.010,
        }
    }
}

impl AnalysisSettings {
    pub fn validate(&self, period_us: f64) -> Result<()> {
        let mut errs = Vec::new();
        for (n, v) in [
            ("g2_bin_us", self.g2_bin_us),
            ("g2_range_us", self.g2_range_us),
            ("pulse_bin_us", self.pulse_bin_us),
            ("pulse_window_us", self.pulse_window_us),
            ("dark_tail_us", self.dark_tail_us),
            ("eta_det", self.eta_det),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{n} must be positive, got {v}"));
            }
        }
        for (n, v) in [
            ("dead_time_us", self.dead_time_us),
            ("reflection_center_ns", self.reflection_center_ns),
            ("reflection_half_width_ns", self.reflection_half_width_ns),
            ("suppression_window_us", self.suppression_window_us),
            ("eta_det_sigma", self.eta_det_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                errs.push(format!("{n} must be non-negative, got {v}"));
            }
        }
        if self.suppression_window_us > self.g2_range_us {
            errs.push("suppression_window_us exceeds g2_range_us".into());
        }
        if self.dark_tail_us > period_us || self.pulse_window_us > period_us {
            errs.push(format!("dark_tail_us and pulse_window_us must fit in the {period_us} us period"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(errs))
        }
    }
}

/// Per-detector analysis dead time: clicks within `dead_us` after a kept
/// click on the same detector are removed.
pub fn apply_analysis_dead_time(stream: &ClickStream, dead_us: f64) -> ClickStream {
    ClickStream {
        events: apply_dead_time(&stream.events, (dead_us * PS_PER_US).round() as u64),
    }
}

/// Symmetric rounding to the nearest bin, halves away from zero, so that
/// bin(-τ) = -bin(τ).
fn bin_index(tau_ps: i64, bin_ps: i64) -> i64 {
    let k = (tau_ps.abs() + bin_ps / 2) / bin_ps;
    if tau_ps < 0 {
        -k
    } else {
        k
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub rate_a: f64,
    pub rate_b: f64,
    pub acquisition_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationHistogram {
    pub bin_width_us: f64,
    /// Bins run from -half_bins to +half_bins.
    pub half_bins: usize,
    pub counts: Vec<f64>,
    pub variance: Vec<f64>,
    /// Expected accidental count per bin and its (fully correlated) error,
    /// once subtracted.
    pub accidental_per_bin: f64,
    pub accidental_sigma_per_bin: f64,
    pub admitted_pairs: u64,
    pub normalization: Option<Normalization>,
    pub background_subtracted: bool,
    pub normalized: bool,
}

impl CorrelationHistogram {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn tau_us(&self, i: usize) -> f64 {
        (i as f64 - self.half_bins as f64) * self.bin_width_us
    }

    pub fn range_us(&self) -> f64 {
        self.half_bins as f64 * self.bin_width_us
    }

    /// Sum and uncertainty over bins with |τ - center| ≤ half_width.
    pub fn window_sum(&self, center_us: f64, half_width_us: f64) -> (f64, f64) {
        let mut sum = 0.0;
        let mut var = 0.0;
        let mut n = 0.0;
        for i in 0..self.len() {
            if (self.tau_us(i) - center_us).abs() <= half_width_us + 1e-9 * self.bin_width_us {
                sum += self.counts[i];
                var += self.variance[i] - self.accidental_sigma_per_bin.powi(2);
                n += 1.0;
            }
        }
        // the accidental estimate is common to all bins
        var += (n * self.accidental_sigma_per_bin).powi(2);
        (sum, var.max(0.0).sqrt())
    }

    pub fn write_csv(&self, path: &Path, meta: &[(String, String)]) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (k, v) in meta {
            writeln!(w, "# {k} = {v}")?;
        }
        writeln!(w, "# background_subtracted = {}", self.background_subtracted)?;
        writeln!(w, "# normalized = {}", self.normalized)?;
        writeln!(w, "tau_us,value,sigma")?;
        for i in 0..self.len() {
            writeln!(w, "{:.4},{:.9e},{:.9e}", self.tau_us(i), self.counts[i], self.variance[i].max(0.0).sqrt())?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Coincidence histogram of t_B - t_A for |τ| ≤ range, dropping pairs in
/// the reflection window ||τ| - center| ≤ half_width.
pub fn cross_correlate(
    a: &[u64],
    b: &[u64],
    bin_us: f64,
    range_us: f64,
    reflection_center_ns: f64,
    reflection_half_width_ns: f64,
) -> Result<CorrelationHistogram> {
    if !(bin_us > 0.0) {
        return domain(format!("bin width must be positive, got {bin_us}"));
    }
    if !(range_us >= 0.0) {
        return domain(format!("range must be non-negative, got {range_us}"));
    }
    let bin_ps = (bin_us * PS_PER_US).round() as i64;
    if bin_ps < 1 {
        return domain("bin width below 1 ps");
    }
    let range_ps = (range_us * PS_PER_US).round() as i64;
    let half_bins = bin_index(range_ps, bin_ps) as usize;
    let ex_lo = ((reflection_center_ns - reflection_half_width_ns) * 1e3).round() as i64;
    let ex_hi = ((reflection_center_ns + reflection_half_width_ns) * 1e3).round() as i64;
    let exclude = reflection_half_width_ns > 0.0;
    let mut counts = vec![0.0; 2 * half_bins + 1];
    let mut pairs = 0u64;
    let mut lo = 0usize;
    for &ta in a {
        let ta = ta as i64;
        while lo < b.len() && (b[lo] as i64) < ta - range_ps {
            lo += 1;
        }
        for &tb in &b[lo..] {
            let tau = tb as i64 - ta;
            if tau > range_ps {
                break;
            }
            if exclude && (ex_lo..=ex_hi).contains(&tau.abs()) {
                continue;
            }
            let k = bin_index(tau, bin_ps);
            counts[(k + half_bins as i64) as usize] += 1.0;
            pairs += 1;
        }
    }
    Ok(CorrelationHistogram {
        bin_width_us: bin_ps as f64 / PS_PER_US,
        half_bins,
        variance: counts.clone(),
        counts,
        accidental_per_bin: 0.0,
        accidental_sigma_per_bin: 0.0,
        admitted_pairs: pairs,
        normalization: None,
        background_subtracted: false,
        normalized: false,
    })
}

/// g²(τ_k) = counts_k / (r_A r_B T Δτ), rates in 1/s and T in s.
pub fn normalize_g2(hist: &CorrelationHistogram, rate_a: f64, rate_b: f64, acquisition_s: f64) -> Result<CorrelationHistogram> {
    if hist.normalized {
        return domain("histogram is already normalized");
    }
    if !(rate_a > 0.0 && rate_b > 0.0 && acquisition_s > 0.0) {
        return domain(format!("rates and acquisition time must be positive (r_A {rate_a}, r_B {rate_b}, T {acquisition_s})"));
    }
    let norm = rate_a * rate_b * acquisition_s * hist.bin_width_us * 1e-6;
    let mut h = hist.clone();
    h.counts.iter_mut().for_each(|c| *c /= norm);
    h.variance.iter_mut().for_each(|v| *v /= norm * norm);
    h.accidental_per_bin /= norm;
    h.accidental_sigma_per_bin /= norm;
    h.normalization = Some(Normalization { rate_a, rate_b, acquisition_s });
    h.normalized = true;
    Ok(h)
}

/// A rate with its one-sigma uncertainty, in 1/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rate {
    pub value: f64,
    pub sigma: f64,
}

/// Subtracts acc = (r_A d_B + d_A r_B - d_A d_B) T Δτ from every bin.
/// r are total singles rates, d dark rates.
pub fn background_subtract(
    hist: &CorrelationHistogram,
    dark_a: Rate,
    dark_b: Rate,
    rate_a: f64,
    rate_b: f64,
    acquisition_s: f64,
) -> Result<CorrelationHistogram> {
    if hist.background_subtracted || hist.normalized {
        return domain("background subtraction needs a raw histogram");
    }
    let tdt = acquisition_s * hist.bin_width_us * 1e-6;
    let acc = (rate_a * dark_b.value + dark_a.value * rate_b - dark_a.value * dark_b.value) * tdt;
    let da = (rate_b - dark_b.value) * tdt;
    let db = (rate_a - dark_a.value) * tdt;
    let acc_var = (da * dark_a.sigma).powi(2) + (db * dark_b.sigma).powi(2);
    let mut h = hist.clone();
    for (c, v) in h.counts.iter_mut().zip(h.variance.iter_mut()) {
        *c -= acc;
        *v += acc_var;
        if !(*v >= 0.0) {
            return domain(format!("negative variance {v} after background subtraction"));
        }
    }
    h.accidental_per_bin = acc;
    h.accidental_sigma_per_bin = acc_var.sqrt();
    h.background_subtracted = true;
    Ok(h)
}

/// Sum of bins with |τ| ≤ window and its uncertainty.
pub fn suppression_metric(hist: &CorrelationHistogram, window_us: f64) -> Result<(f64, f64)> {
    if window_us > hist.range_us() + 0.5 * hist.bin_width_us {
        return domain(format!("window {window_us} us exceeds histogram range {} us", hist.range_us()));
    }
    Ok(hist.window_sum(0.0, window_us))
}

/// Singles rate of each detector over the acquisition time.
pub fn singles_rates(stream: &ClickStream, acquisition_s: f64) -> [f64; 2] {
    let mut n = [0u64; 2];
    for c in &stream.events {
        n[c.detector.index()] += 1;
    }
    [n[0] as f64 / acquisition_s, n[1] as f64 / acquisition_s]
}

/// Dark rates from clicks in the last `tail_us` of every period.
pub fn estimate_dark_rates(stream: &ClickStream, n_trials: u64, period_us: f64, tail_us: f64) -> Result<[Rate; 2]> {
    if !(tail_us > 0.0 && tail_us <= period_us) || n_trials == 0 {
        return domain("dark-rate tail must lie inside the period and trials must be positive");
    }
    let period_ps = (period_us * PS_PER_US).round() as u64;
    let start = period_ps - (tail_us * PS_PER_US).round() as u64;
    let mut n = [0u64; 2];
    for c in &stream.events {
        let trial = c.time_ps / period_ps;
        if trial < n_trials && c.time_ps % period_ps >= start {
            n[c.detector.index()] += 1;
        }
    }
    let t = n_trials as f64 * tail_us * 1e-6;
    Ok(n.map(|k| Rate {
        value: k as f64 / t,
        sigma: (k as f64).sqrt() / t,
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseShape {
    pub bin_width_us: f64,
    pub counts: Vec<u64>,
    /// counts / n_trials.
    pub probabilities: Vec<f64>,
    pub n_trials: u64,
    /// Expected dark-count probability per bin and its uncertainty.
    pub background_per_bin: f64,
    pub background_sigma_per_bin: f64,
}

impl PulseShape {
    /// Detection probability per trial, background included.
    pub fn area(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Detection probability per trial after removing the dark background.
    pub fn signal_area(&self) -> f64 {
        self.area() - self.background_per_bin * self.counts.len() as f64
    }

    /// Poisson uncertainty of the counts combined with the background estimate.
    pub fn signal_area_sigma(&self) -> f64 {
        let n = self.n_trials.max(1) as f64;
        let total: u64 = self.counts.iter().sum();
        let stat = (total as f64).sqrt() / n;
        let bg = self.background_sigma_per_bin * self.counts.len() as f64;
        stat.hypot(bg)
    }

    pub fn with_background(mut self, dark_total: Rate) -> Self {
        let bin_s = self.bin_width_us * 1e-6;
        self.background_per_bin = dark_total.value * bin_s;
        self.background_sigma_per_bin = dark_total.sigma * bin_s;
        self
    }

    pub fn write_csv(&self, path: &Path, meta: &[(String, String)]) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for (k, v) in meta {
            writeln!(w, "# {k} = {v}")?;
        }
        writeln!(w, "# n_trials = {}", self.n_trials)?;
        writeln!(w, "# background_per_bin = {:.9e}", self.background_per_bin)?;
        writeln!(w, "bin_start_us,counts,probability,signal_probability")?;
        for (i, (c, p)) in self.counts.iter().zip(&self.probabilities).enumerate() {
            writeln!(
                w,
                "{:.4},{},{:.9e},{:.9e}",
                i as f64 * self.bin_width_us,
                c,
                p,
                p - self.background_per_bin
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Histogram of click times relative to their trial start over
/// [0, window), normalized by the number of trials.
pub fn pulse_shape(stream: &ClickStream, n_trials: u64, period_us: f64, window_us: f64, bin_us: f64) -> Result<PulseShape> {
    if !(bin_us > 0.0 && window_us > 0.0 && window_us <= period_us) || n_trials == 0 {
        return domain("pulse shape needs positive bins, a window inside the period and at least one trial");
    }
    let period_ps = (period_us * PS_PER_US).round() as u64;
    let bin_ps = (bin_us * PS_PER_US).round() as u64;
    let n_bins = (window_us / bin_us).round() as usize;
    let window_ps = n_bins as u64 * bin_ps;
    let mut counts = vec![0u64; n_bins];
    for c in &stream.events {
        let trial = c.time_ps / period_ps;
        let off = c.time_ps % period_ps;
        if trial < n_trials && off < window_ps {
            counts[(off / bin_ps) as usize] += 1;
        }
    }
    let probabilities = counts.iter().map(|&c| c as f64 / n_trials as f64).collect();
    Ok(PulseShape {
        bin_width_us: bin_ps as f64 / PS_PER_US,
        counts,
        probabilities,
        n_trials,
        background_per_bin: 0.0,
        background_sigma_per_bin: 0.0,
    })
}

/// η_c = area / η_det with relative uncertainties added in quadrature.
pub fn creation_efficiency_from_data(area: f64, area_sigma: f64, eta_det: f64, eta_det_sigma: f64) -> Result<(f64, f64)> {
    if !(eta_det > 0.0) {
        return domain(format!("detection efficiency must be positive, got {eta_det}"));
    }
    let eta = area / eta_det;
    let sigma = if area == 0.0 {
        area_sigma / eta_det
    } else {
        eta.abs() * ((area_sigma / area).powi(2) + (eta_det_sigma / eta_det).powi(2)).sqrt()
    };
    Ok((eta, sigma))
}

/// Everything the analysis produces from one click stream.
#[derive(Debug, Clone)]
pub struct AnalysisResult {
    pub n_trials: u64,
    pub period_us: f64,
    pub acquisition_s: f64,
    pub clicks_in: usize,
    pub clicks_after_dead_time: usize,
    pub singles_rate: [f64; 2],
    pub dark_rate: [Rate; 2],
    /// Signal singles (both APDs) after removing the estimated dark counts.
    pub signal_singles: f64,
    pub signal_singles_sigma: f64,
    pub raw: CorrelationHistogram,
    pub subtracted: CorrelationHistogram,
    pub g2: CorrelationHistogram,
    pub central_raw: (f64, f64),
    pub central_subtracted: (f64, f64),
    /// Expected accidentals in the central window.
    pub central_expected_accidentals: f64,
    /// (k, subtracted counts, sigma) for side peaks k = ±1, ±2, ...
    pub side_peaks: Vec<(i64, f64, f64)>,
    pub pulse: PulseShape,
    pub eta_exp: f64,
    pub eta_exp_sigma: f64,
    pub eta_c: f64,
    pub eta_c_sigma: f64,
}

pub fn analyze(stream: &ClickStream, n_trials: u64, period_us: f64, s: &AnalysisSettings) -> Result<AnalysisResult> {
    s.validate(period_us)?;
    if n_trials == 0 {
        return domain("analysis needs at least one trial");
    }
    if !stream.is_sorted() {
        return domain("click stream is not time-ordered");
    }
    let acquisition_s = n_trials as f64 * period_us * 1e-6;
    let kept = apply_analysis_dead_time(stream, s.dead_time_us);
    let r = singles_rates(&kept, acquisition_s);
    let dark = estimate_dark_rates(&kept, n_trials, period_us, s.dark_tail_us)?;
    let a = kept.times(Detector::A);
    let b = kept.times(Detector::B);
    let raw = cross_correlate(&a, &b, s.g2_bin_us, s.g2_range_us, s.reflection_center_ns, s.reflection_half_width_ns)?;
    let subtracted = background_subtract(&raw, dark[0], dark[1], r[0], r[1], acquisition_s)?;
    let g2 = if r[0] > 0.0 && r[1] > 0.0 {
        normalize_g2(&subtracted, r[0], r[1], acquisition_s)?
    } else {
        let mut z = subtracted.clone();
        z.counts.iter_mut().for_each(|c| *c = 0.0);
        z.variance.iter_mut().for_each(|c| *c = 0.0);
        z.normalized = true;
        z
    };
    let central_raw = suppression_metric(&raw, s.suppression_window_us)?;
    let central_subtracted = suppression_metric(&subtracted, s.suppression_window_us)?;
    let n_central = (0..raw.len())
        .filter(|&i| raw.tau_us(i).abs() <= s.suppression_window_us + 1e-9)
        .count() as f64;
    let max_k = ((s.g2_range_us - period_us / 2.0) / period_us).floor().max(0.0) as i64;
    let side_peaks = (-max_k..=max_k)
        .filter(|&k| k != 0)
        .map(|k| {
            let (v, e) = subtracted.window_sum(k as f64 * period_us, period_us / 2.0);
            (k, v, e)
        })
        .collect();

    let dark_total = Rate {
        value: dark[0].value + dark[1].value,
        sigma: dark[0].sigma.hypot(dark[1].sigma),
    };
    let pulse = pulse_shape(&kept, n_trials, period_us, s.pulse_window_us, s.pulse_bin_us)?.with_background(dark_total);
    let eta_exp = pulse.signal_area();
    let eta_exp_sigma = pulse.signal_area_sigma();
    let (eta_c, eta_c_sigma) = creation_efficiency_from_data(eta_exp, eta_exp_sigma, s.eta_det, s.eta_det_sigma)?;
    let total = kept.len() as f64;
    let dark_counts = dark_total.value * acquisition_s;
    Ok(AnalysisResult {
        n_trials,
        period_us,
        acquisition_s,
        clicks_in: stream.len(),
        clicks_after_dead_time: kept.len(),
        singles_rate: r,
        dark_rate: dark,
        signal_singles: total - dark_counts,
        signal_singles_sigma: total.sqrt().hypot(dark_total.sigma * acquisition_s),
        central_expected_accidentals: subtracted.accidental_per_bin * n_central,
        raw,
        subtracted,
        g2,
        central_raw,
        central_subtracted,
        side_peaks,
        pulse,
        eta_exp,
        eta_exp_sigma,
        eta_c,
        eta_c_sigma,
    })
}

impl AnalysisResult {
    /// Headline numbers as ordered key-value pairs.
    pub fn summary(&self) -> Vec<(String, String)> {
        let mut v: Vec<(String, String)> = vec![
            ("n_trials".into(), self.n_trials.to_string()),
            ("period_us".into(), format!("{}", self.period_us)),
            ("acquisition_s".into(), format!("{:.6}", self.acquisition_s)),
            ("clicks_total".into(), self.clicks_in.to_string()),
            ("clicks_after_dead_time".into(), self.clicks_after_dead_time.to_string()),
            ("singles_rate_a_per_s".into(), format!("{:.6}", self.singles_rate[0])),
            ("singles_rate_b_per_s".into(), format!("{:.6}", self.singles_rate[1])),
            ("dark_rate_a_per_s".into(), format!("{:.6}", self.dark_rate[0].value)),
            ("dark_rate_b_per_s".into(), format!("{:.6}", self.dark_rate[1].value)),
            ("signal_singles".into(), format!("{:.1}", self.signal_singles)),
            ("signal_singles_sigma".into(), format!("{:.1}", self.signal_singles_sigma)),
            ("g2_pairs".into(), self.raw.admitted_pairs.to_string()),
            ("central_window_raw".into(), format!("{:.1}", self.central_raw.0)),
            ("central_window_expected_accidentals".into(), format!("{:.1}", self.central_expected_accidentals)),
            ("central_window_subtracted".into(), format!("{:.1}", self.central_subtracted.0)),
            ("central_window_subtracted_sigma".into(), format!("{:.1}", self.central_subtracted.1)),
        ];
        for (k, c, e) in &self.side_peaks {
            v.push((format!("side_peak_{k:+}"), format!("{c:.1}")));
            v.push((format!("side_peak_{k:+}_sigma"), format!("{e:.1}")));
        }
        v.extend([
            ("pulse_area_raw".into(), format!("{:.6}", self.pulse.area())),
            ("eta_exp".into(), format!("{:.6}", self.eta_exp)),
            ("eta_exp_sigma".into(), format!("{:.6}", self.eta_exp_sigma)),
            ("eta_c".into(), format!("{:.6}", self.eta_c)),
            ("eta_c_sigma".into(), format!("{:.6}", self.eta_c_sigma)),
        ]);
        v
    }

    /// g2.csv (normalized, subtracted), g2_raw.csv and pulse_shape.csv.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let meta = vec![
            ("n_trials".to_string(), self.n_trials.to_string()),
            ("period_us".to_string(), format!("{}", self.period_us)),
            ("bin_width_us".to_string(), format!("{}", self.raw.bin_width_us)),
        ];
        let mut g2_meta = meta.clone();
        if let Some(n) = self.g2.normalization {
            g2_meta.push(("rate_a_per_s".into(), format!("{:.6}", n.rate_a)));
            g2_meta.push(("rate_b_per_s".into(), format!("{:.6}", n.rate_b)));
            g2_meta.push(("acquisition_s".into(), format!("{:.6}", n.acquisition_s)));
        }
        g2_meta.push(("accidentals_per_bin".into(), format!("{:.6}", self.subtracted.accidental_per_bin)));
        self.g2.write_csv(&dir.join("g2.csv"), &g2_meta)?;
        self.raw.write_csv(&dir.join("g2_raw.csv"), &meta)?;
        let mut pmeta = meta;
        pmeta[2] = ("bin_width_us".into(), format!("{}", self.pulse.bin_width_us));
        pmeta.push(("eta_exp".into(), format!("{:.6}", self.eta_exp)));
        self.pulse.write_csv(&dir.join("pulse_shape.csv"), &pmeta)?;
        Ok(())
    }
}

/// `key = value` lines.
pub fn format_summary(pairs: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in pairs {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::Click;

    fn stream(v: &[(f64, Detector)]) -> ClickStream {
        ClickStream::new(
            v.iter()
                .map(|&(t, d)| Click { time_ps: (t * PS_PER_US) as u64, detector: d, origin: None })
                .collect(),
        )
    }

    #[test]
    fn analysis_dead_time_is_per_detector() {
        let s = stream(&[(0.0, Detector::A), (1.0, Detector::A)]);
        assert_eq!(apply_analysis_dead_time(&s, 2.5).len(), 1);
        let s = stream(&[(0.0, Detector::A), (1.0, Detector::B)]);
        assert_eq!(apply_analysis_dead_time(&s, 2.5).len(), 2);
    }

    #[test]
    fn coincident_clicks_land_in_zero_bin() {
        let h = cross_correlate(&[1_000_000], &[1_000_000], 1.0, 10.0, 125.0, 10.0).unwrap();
        assert_eq!(h.counts[h.half_bins], 1.0);
        assert_eq!(h.admitted_pairs, 1);
        assert!(cross_correlate(&[0], &[0], 0.0, 10.0, 125.0, 10.0).is_err());
    }

    #[test]
    fn reflection_pairs_excluded() {
        let h = cross_correlate(&[1_000_000], &[1_125_000], 1.0, 10.0, 125.0, 10.0).unwrap();
        assert_eq!(h.admitted_pairs, 0);
        let h = cross_correlate(&[1_125_000], &[1_000_000], 1.0, 10.0, 125.0, 10.0).unwrap();
        assert_eq!(h.admitted_pairs, 0);
        let h = cross_correlate(&[1_000_000], &[1_140_000], 1.0, 10.0, 125.0, 10.0).unwrap();
        assert_eq!(h.admitted_pairs, 1);
    }

    #[test]
    fn symmetric_rounding() {
        assert_eq!(bin_index(500_000, 1_000_000), 1);
        assert_eq!(bin_index(-500_000, 1_000_000), -1);
        assert_eq!(bin_index(499_999, 1_000_000), 0);
        assert_eq!(bin_index(-1_499_999, 1_000_000), -1);
    }

    #[test]
    fn zero_histogram_metrics() {
        let h = cross_correlate(&[], &[], 1.0, 300.0, 125.0, 10.0).unwrap();
        assert_eq!(suppression_metric(&h, 207.25).unwrap(), (0.0, 0.0));
        assert!(suppression_metric(&h, 400.0).is_err());
        let g = normalize_g2(&h, 1.0, 1.0, 1.0).unwrap();
        assert!(g.counts.iter().all(|c| *c == 0.0));
        assert!(normalize_g2(&h, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn zero_dark_leaves_histogram() {
        let h = cross_correlate(&[0, 5_000_000], &[2_000_000], 1.0, 10.0, 125.0, 10.0).unwrap();
        let z = Rate { value: 0.0, sigma: 0.0 };
        let s = background_subtract(&h, z, z, 3.0, 4.0, 10.0).unwrap();
        assert_eq!(s.counts, h.counts);
        assert_eq!(s.variance, h.variance);
    }

    #[test]
    fn efficiency_from_data() {
        let (e, s) = creation_efficiency_from_data(0.045, 0.0, 0.051, 0.010).unwrap();
        assert!((e - 0.882).abs() < 1e-3);
        assert!((s - 0.173).abs() < 1e-3);
        assert_eq!(creation_efficiency_from_data(0.0, 0.0, 0.051, 0.01).unwrap().0, 0.0);
        assert_eq!(creation_efficiency_from_data(0.3, 0.0, 0.3, 0.0).unwrap().0, 1.0);
        assert!(creation_efficiency_from_data(0.3, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn pulse_shape_counts() {
        let s = stream(&[(0.2, Detector::A), (0.7, Detector::B), (414.5 + 0.3, Detector::A), (200.0, Detector::A)]);
        let p = pulse_shape(&s, 2, 414.5, 120.0, 0.5).unwrap();
        assert_eq!(p.counts[0], 2);
        assert_eq!(p.counts[1], 1);
        assert!((p.area() * 2.0 - 3.0).abs() < 1e-12);
        let empty = pulse_shape(&ClickStream::default(), 10, 414.5, 120.0, 0.5).unwrap();
        assert_eq!(empty.area(), 0.0);
    }

    #[test]
    fn dark_tail_estimate() {
        let s = stream(&[(10.0, Detector::A), (320.0, Detector::A), (414.5 + 400.0, Detector::B)]);
        let d = estimate_dark_rates(&s, 2, 414.5, 100.0).unwrap();
        assert!((d[0].value - 1.0 / 200e-6).abs() < 1e-9);
        assert!((d[1].value - 1.0 / 200e-6).abs() < 1e-9);
    }
}
