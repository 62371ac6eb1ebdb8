//! Quantum-jump unraveling of the master equation.
//!
//! Between jumps the unnormalized state evolves under
//! H_eff = H - (i/2) Σ C_k†C_k on a fine step grid of δ = output_dt / 128,
//! using exact propagators exp(-i H_eff 2^j δ). A jump happens at the first
//! grid step where ‖ψ‖² falls below a uniform threshold.
//!
//! The drive-linewidth operator is proportional to the S-parity Z, so
//! C†C is a multiple of the identity: its jumps form a Poisson process at
//! rate γ_L/4 independent of the state and are sampled as such. With the
//! drive off Z commutes with H and commutes or anticommutes with every other
//! channel, so only the parity of the flips in such a segment matters.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::level::Manifold;
use crate::lindblad::{integrate, DensityMatrix, DEFAULT_OUTPUT_DT};
use crate::model::{CavityMode, ChannelKind};
use crate::ode::Tolerance;
use crate::operator::C64;
use crate::params::SystemParams;
use crate::reduced::ReducedModel;
use crate::sequence::PulseSequence;

/// Fine steps per output interval.
pub const SUBSTEPS: u64 = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EmissionChannel {
    CavityMode1,
    CavityMode2,
    FreeSpaceS,
    FreeSpaceD,
    DarkJump,
}

impl EmissionChannel {
    pub const ALL: [EmissionChannel; 5] = [
        EmissionChannel::CavityMode1,
        EmissionChannel::CavityMode2,
        EmissionChannel::FreeSpaceS,
        EmissionChannel::FreeSpaceD,
        EmissionChannel::DarkJump,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EmissionChannel::CavityMode1 => "CAVITY_MODE1",
            EmissionChannel::CavityMode2 => "CAVITY_MODE2",
            EmissionChannel::FreeSpaceS => "FREE_SPACE_S",
            EmissionChannel::FreeSpaceD => "FREE_SPACE_D",
            EmissionChannel::DarkJump => "DARK_JUMP",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.label() == s)
    }

    pub fn is_cavity(self) -> bool {
        matches!(self, EmissionChannel::CavityMode1 | EmissionChannel::CavityMode2)
    }

    pub fn from_kind(kind: &ChannelKind) -> Option<Self> {
        match kind {
            ChannelKind::CavityDecay(CavityMode::Mode1) => Some(EmissionChannel::CavityMode1),
            ChannelKind::CavityDecay(CavityMode::Mode2) => Some(EmissionChannel::CavityMode2),
            ChannelKind::SpontaneousDecay { lower, .. } => Some(match lower.manifold {
                Manifold::S12 => EmissionChannel::FreeSpaceS,
                _ => EmissionChannel::FreeSpaceD,
            }),
            ChannelKind::DarkPumping => Some(EmissionChannel::DarkJump),
            ChannelKind::DriveDephasing => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionEvent {
    /// Time since the period start, µs.
    pub time_us: f64,
    pub channel: EmissionChannel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmissionRecord {
    pub trial: u64,
    pub events: Vec<EmissionEvent>,
}

impl EmissionRecord {
    pub fn cavity_events(&self) -> impl Iterator<Item = &EmissionEvent> {
        self.events.iter().filter(|e| e.channel.is_cavity())
    }

    pub fn count(&self, channel: EmissionChannel) -> usize {
        self.events.iter().filter(|e| e.channel == channel).count()
    }
}

struct Jump {
    channel: Option<EmissionChannel>,
    entries: Vec<(usize, usize, C64)>,
}

/// Dense matrix stored column by column, each column as its real parts
/// followed by its imaginary parts. States use the same split layout.
struct SplitMatrix {
    d: usize,
    data: Vec<f64>,
}

impl SplitMatrix {
    fn from_dense(m: &DMatrix<C64>) -> Self {
        let d = m.nrows();
        let mut data = vec![0.0; 2 * d * d];
        for j in 0..d {
            for i in 0..d {
                data[j * 2 * d + i] = m[(i, j)].re;
                data[j * 2 * d + d + i] = m[(i, j)].im;
            }
        }
        Self { d, data }
    }

    fn mul_to(&self, x: &[f64], y: &mut [f64]) {
        let d = self.d;
        y.fill(0.0);
        let (yr, yi) = y.split_at_mut(d);
        for j in 0..d {
            let (xr, xi) = (x[j], x[d + j]);
            if xr == 0.0 && xi == 0.0 {
                continue;
            }
            let col = &self.data[j * 2 * d..(j + 1) * 2 * d];
            let (cr, ci) = col.split_at(d);
            for i in 0..d {
                yr[i] += cr[i] * xr - ci[i] * xi;
                yi[i] += cr[i] * xi + ci[i] * xr;
            }
        }
    }
}

fn norm_sqr(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

struct SegmentPlan {
    steps: u64,
    drive_on: bool,
    reset: bool,
}

/// Precomputed propagators and jump operators for one parameter set and
/// sequence. Cheap to share between threads.
pub struct TrajectorySampler {
    d: usize,
    delta: f64,
    /// Propagator powers, `props[drive_on][j]` = exp(-i H_eff 2^j δ).
    props: [Vec<SplitMatrix>; 2],
    jumps: Vec<Jump>,
    flip_rate: f64,
    /// -1 on S1/2 components, +1 elsewhere.
    parity: Vec<f64>,
    /// Basis states that neither couple to others nor decay, in either
    /// drive setting. A state supported only on these stays put.
    inert: Vec<bool>,
    segments: Vec<SegmentPlan>,
    levels: Vec<usize>,
    n_levels: usize,
    start_up: usize,
    start_down: usize,
    pump_infidelity: f64,
    output_dt: f64,
}

enum Advance {
    Reached,
    Jumped,
}

impl TrajectorySampler {
    pub fn new(params: &SystemParams, sequence: &PulseSequence, output_dt: f64) -> Result<Self> {
        sequence.validate()?;
        sequence.check_grid(output_dt)?;
        let model = ReducedModel::new(params)?;
        let d = model.dim();
        let delta = output_dt / SUBSTEPS as f64;
        let segments: Vec<SegmentPlan> = sequence
            .segments
            .iter()
            .map(|s| SegmentPlan {
                steps: (s.duration_us / output_dt).round() as u64 * SUBSTEPS,
                drive_on: s.drive_on,
                reset: s.reset,
            })
            .collect();
        let longest = segments.iter().map(|s| s.steps).max().unwrap_or(1);
        let k_max = 63 - longest.leading_zeros() as usize;

        let not_dephasing = |k: &ChannelKind| *k != ChannelKind::DriveDephasing;
        let mut props: [Vec<SplitMatrix>; 2] = [Vec::new(), Vec::new()];
        let mut inert = vec![true; d];
        for (slot, drive_on) in [(0usize, false), (1, true)] {
            let heff = model.effective_hamiltonian(drive_on, not_dephasing)?;
            for &(i, j, v) in heff.entries() {
                if (i != j && v != C64::new(0.0, 0.0)) || v.im != 0.0 {
                    inert[i] = false;
                    inert[j] = false;
                }
            }
            let heff = heff.to_dense();
            for j in 0..=k_max {
                let tau = delta * (1u64 << j) as f64;
                let m = (&heff * C64::new(0.0, -tau)).exp();
                props[slot].push(SplitMatrix::from_dense(&m));
            }
        }
        for c in model.channels().iter().filter(|c| not_dephasing(&c.kind)) {
            for &(_, j, _) in c.op.entries() {
                inert[j] = false;
            }
        }
        let jumps = model
            .channels()
            .iter()
            .filter(|c| not_dephasing(&c.kind))
            .map(|c| Jump {
                channel: EmissionChannel::from_kind(&c.kind),
                entries: c.op.entries().to_vec(),
            })
            .collect();
        let levels = model.level_map();
        let scheme = params.level_scheme();
        let parity = levels
            .iter()
            .map(|&l| if scheme.levels()[l].manifold == Manifold::S12 { -1.0 } else { 1.0 })
            .collect();
        let position = |m2: i32| -> Result<usize> {
            let lvl = scheme.find(Manifold::S12, m2)?.index;
            model
                .position(params.space().index(lvl, 0, 0))
                .ok_or_else(|| Error::Domain("ground state outside reduced block".into()))
        };
        Ok(Self {
            d,
            delta,
            props,
            jumps,
            flip_rate: params.drive_linewidth / 4.0,
            parity,
            inert,
            segments,
            levels,
            n_levels: scheme.len(),
            start_up: position(1)?,
            start_down: position(-1)?,
            pump_infidelity: params.pump_infidelity,
            output_dt,
        })
    }

    pub fn output_dt(&self) -> f64 {
        self.output_dt
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    fn rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(trial);
        rng
    }

    fn initial(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut psi = vec![0.0; 2 * self.d];
        let down = self.pump_infidelity > 0.0 && rng.random::<f64>() < self.pump_infidelity;
        psi[if down { self.start_down } else { self.start_up }] = 1.0;
        psi
    }

    fn is_inert(&self, psi: &[f64]) -> bool {
        let d = self.d;
        (0..d).all(|a| self.inert[a] || (psi[a] == 0.0 && psi[d + a] == 0.0))
    }

    /// One trial; deterministic in (master_seed, trial).
    pub fn run(&self, master_seed: u64, trial: u64) -> Result<EmissionRecord> {
        self.run_observed(master_seed, trial, 0, &mut |_, _| {})
    }

    /// Like `run`, calling `observe(grid_index, populations)` at the first
    /// `n_observe` output-grid points of the period.
    pub fn run_observed(
        &self,
        master_seed: u64,
        trial: u64,
        n_observe: usize,
        observe: &mut dyn FnMut(usize, &[f64]),
    ) -> Result<EmissionRecord> {
        let mut rng = Self::rng(master_seed, trial);
        let mut psi = self.initial(&mut rng);
        let mut scratch = vec![0.0; 2 * self.d];
        let mut threshold: f64 = rng.random();
        let mut events = Vec::new();
        let mut s: u64 = 0;
        let mut next_grid: u64 = 0;
        let observe_end = n_observe as u64 * SUBSTEPS;
        let flips = (self.flip_rate > 0.0).then(|| Exp::new(self.flip_rate).expect("positive rate"));
        let fail = |s: u64, reason: &str| Error::Numerical {
            trial,
            time_us: s as f64 * self.delta,
            reason: reason.to_string(),
        };

        let mut pops = vec![0.0; self.n_levels];
        let d = self.d;
        let mut emit_observation = |psi: &[f64], idx: usize, observe: &mut dyn FnMut(usize, &[f64])| {
            let norm = norm_sqr(psi);
            pops.iter_mut().for_each(|p| *p = 0.0);
            for a in 0..d {
                pops[self.levels[a]] += (psi[a] * psi[a] + psi[d + a] * psi[d + a]) / norm;
            }
            observe(idx, &pops);
        };

        for seg in &self.segments {
            let end = s + seg.steps;
            if seg.reset {
                psi = self.initial(&mut rng);
                threshold = rng.random();
                while next_grid < observe_end && next_grid <= end {
                    if next_grid >= s {
                        emit_observation(&psi, (next_grid / SUBSTEPS) as usize, observe);
                    }
                    next_grid += SUBSTEPS;
                }
                s = end;
                continue;
            }
            let props = &self.props[seg.drive_on as usize];
            let sample_flip = |rng: &mut ChaCha8Rng| -> u64 {
                match &flips {
                    Some(e) => (e.sample(rng) / self.delta).ceil().max(1.0).min(u64::MAX as f64 / 4.0) as u64,
                    None => u64::MAX,
                }
            };
            let mut next_flip = if seg.drive_on { s.saturating_add(sample_flip(&mut rng)) } else { u64::MAX };
            let mut inert = self.is_inert(&psi);
            loop {
                if inert {
                    while next_grid < observe_end && next_grid <= end {
                        emit_observation(&psi, (next_grid / SUBSTEPS) as usize, observe);
                        next_grid += SUBSTEPS;
                    }
                    s = end;
                    break;
                }
                if next_grid < observe_end && next_grid == s {
                    emit_observation(&psi, (next_grid / SUBSTEPS) as usize, observe);
                    next_grid += SUBSTEPS;
                }
                if s >= end {
                    break;
                }
                let mut stop = end.min(next_flip);
                if next_grid < observe_end {
                    stop = stop.min(next_grid);
                }
                match self.advance(props, &mut psi, &mut scratch, &mut s, stop, threshold) {
                    Advance::Jumped => {
                        let n2 = norm_sqr(&psi);
                        if !(n2 > 1e-300) || !n2.is_finite() {
                            return Err(fail(s, "state norm underflow before jump"));
                        }
                        let channel = self.jump(&mut psi, &mut scratch, &mut rng).ok_or_else(|| fail(s, "no jump channel has nonzero weight"))?;
                        if let Some(c) = channel {
                            events.push(EmissionEvent {
                                time_us: s as f64 * self.delta,
                                channel: c,
                            });
                        }
                        threshold = rng.random();
                        inert = self.is_inert(&psi);
                    }
                    Advance::Reached => {}
                }
                if s == next_flip {
                    self.flip(&mut psi);
                    next_flip = s.saturating_add(sample_flip(&mut rng));
                }
            }
            if !seg.drive_on && !inert {
                if flips.is_some() {
                    let mean = self.flip_rate * seg.steps as f64 * self.delta;
                    let n: f64 = Poisson::new(mean).expect("positive mean").sample(&mut rng);
                    if (n as u64) % 2 == 1 {
                        self.flip(&mut psi);
                    }
                }
            }
        }
        while next_grid < observe_end {
            emit_observation(&psi, (next_grid / SUBSTEPS) as usize, observe);
            next_grid += SUBSTEPS;
        }
        Ok(EmissionRecord { trial, events })
    }

    fn flip(&self, psi: &mut [f64]) {
        let (re, im) = psi.split_at_mut(self.d);
        for ((r, i), p) in re.iter_mut().zip(im.iter_mut()).zip(&self.parity) {
            *r *= *p;
            *i *= *p;
        }
    }

    /// Propagates towards `stop`; stops early at the first fine step where
    /// the squared norm drops to `threshold` or below.
    fn advance(
        &self,
        props: &[SplitMatrix],
        psi: &mut Vec<f64>,
        scratch: &mut Vec<f64>,
        s: &mut u64,
        stop: u64,
        threshold: f64,
    ) -> Advance {
        while *s < stop {
            let rem = stop - *s;
            let k = (63 - rem.leading_zeros() as usize).min(props.len() - 1);
            props[k].mul_to(psi, scratch);
            if norm_sqr(scratch) > threshold {
                std::mem::swap(psi, scratch);
                *s += 1 << k;
                continue;
            }
            for j in (0..k).rev() {
                props[j].mul_to(psi, scratch);
                if norm_sqr(scratch) > threshold {
                    std::mem::swap(psi, scratch);
                    *s += 1 << j;
                }
            }
            props[0].mul_to(psi, scratch);
            std::mem::swap(psi, scratch);
            *s += 1;
            return Advance::Jumped;
        }
        Advance::Reached
    }

    /// Applies a jump chosen with probability ∝ ‖C_k ψ‖². Returns `None` when
    /// no channel has weight.
    fn jump(&self, psi: &mut [f64], scratch: &mut [f64], rng: &mut ChaCha8Rng) -> Option<Option<EmissionChannel>> {
        let d = self.d;
        let apply = |j: &Jump, psi: &[f64], out: &mut [f64]| {
            out.fill(0.0);
            for &(a, b, v) in &j.entries {
                out[a] += v.re * psi[b] - v.im * psi[d + b];
                out[d + a] += v.re * psi[d + b] + v.im * psi[b];
            }
        };
        let weights: Vec<f64> = self
            .jumps
            .iter()
            .map(|j| {
                apply(j, psi, scratch);
                norm_sqr(scratch)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return None;
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = weights.len() - 1;
        for (k, w) in weights.iter().enumerate() {
            if u < *w {
                pick = k;
                break;
            }
            u -= w;
        }
        while weights[pick] == 0.0 {
            pick -= 1;
        }
        apply(&self.jumps[pick], psi, scratch);
        let n = norm_sqr(scratch).sqrt();
        for (p, v) in psi.iter_mut().zip(scratch.iter()) {
            *p = v / n;
        }
        Some(self.jumps[pick].channel)
    }

    /// Trials `range`, in parallel, returned in trial order.
    pub fn run_range(&self, master_seed: u64, range: std::ops::Range<u64>) -> Result<Vec<EmissionRecord>> {
        range.into_par_iter().map(|t| self.run(master_seed, t)).collect()
    }
}

/// A single trial with the default output grid.
pub fn run_trajectory(params: &SystemParams, sequence: &PulseSequence, seed: u64) -> Result<EmissionRecord> {
    TrajectorySampler::new(params, sequence, DEFAULT_OUTPUT_DT)?.run(seed, 0)
}

/// `n_trials` independent trials.
pub fn run_ensemble(
    params: &SystemParams,
    sequence: &PulseSequence,
    master_seed: u64,
    n_trials: u64,
) -> Result<Vec<EmissionRecord>> {
    TrajectorySampler::new(params, sequence, DEFAULT_OUTPUT_DT)?.run_range(master_seed, 0..n_trials)
}

/// Mean level populations of a trajectory ensemble with standard errors.
#[derive(Debug, Clone)]
pub struct PopulationEnsemble {
    pub times: Vec<f64>,
    /// `mean[t][level]`.
    pub mean: Vec<Vec<f64>>,
    pub std_err: Vec<Vec<f64>>,
    pub n_trials: u64,
    pub records: Vec<EmissionRecord>,
}

const CHUNK: u64 = 256;

/// Runs `n_trials` trajectories and averages their level populations on the
/// output grid from 0 to `until_us`.
pub fn ensemble_populations(
    sampler: &TrajectorySampler,
    master_seed: u64,
    n_trials: u64,
    until_us: f64,
) -> Result<PopulationEnsemble> {
    if n_trials < 100 {
        return domain(format!("ensemble statistics need at least 100 trials, got {n_trials}"));
    }
    let n_grid = (until_us / sampler.output_dt()).round() as usize + 1;
    let nl = sampler.n_levels();
    let chunks: Vec<u64> = (0..n_trials.div_ceil(CHUNK)).collect();
    type Acc = (Vec<f64>, Vec<f64>, Vec<EmissionRecord>);
    let parts: Vec<Result<Acc>> = chunks
        .par_iter()
        .map(|&c| {
            let mut sum = vec![0.0; n_grid * nl];
            let mut sq = vec![0.0; n_grid * nl];
            let mut recs = Vec::new();
            for trial in c * CHUNK..((c + 1) * CHUNK).min(n_trials) {
                let rec = sampler.run_observed(master_seed, trial, n_grid, &mut |i, p| {
                    for (l, v) in p.iter().enumerate() {
                        sum[i * nl + l] += v;
                        sq[i * nl + l] += v * v;
                    }
                })?;
                recs.push(rec);
            }
            Ok((sum, sq, recs))
        })
        .collect();
    let mut sum = vec![0.0; n_grid * nl];
    let mut sq = vec![0.0; n_grid * nl];
    let mut records = Vec::with_capacity(n_trials as usize);
    for part in parts {
        let (s, q, r) = part?;
        sum.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
        sq.iter_mut().zip(&q).for_each(|(a, b)| *a += b);
        records.extend(r);
    }
    let n = n_trials as f64;
    let mut mean = Vec::with_capacity(n_grid);
    let mut std_err = Vec::with_capacity(n_grid);
    for i in 0..n_grid {
        let m: Vec<f64> = (0..nl).map(|l| sum[i * nl + l] / n).collect();
        let se: Vec<f64> = (0..nl)
            .map(|l| {
                let var = ((sq[i * nl + l] / n - m[l] * m[l]) * n / (n - 1.0)).max(0.0);
                (var / n).sqrt()
            })
            .collect();
        mean.push(m);
        std_err.push(se);
    }
    Ok(PopulationEnsemble {
        times: (0..n_grid).map(|i| i as f64 * sampler.output_dt()).collect(),
        mean,
        std_err,
        n_trials,
        records,
    })
}

/// Fraction of cavity photons emitted without a preceding Raman scatter
/// into S(-1/2), from trajectories and from the master equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterFreeFraction {
    pub trajectory: f64,
    pub trajectory_std_err: f64,
    pub master_equation: f64,
    /// Cavity photons per trial with the dark level enabled (master equation).
    pub efficiency_dark: f64,
    /// Cavity photons per trial without the dark level (master equation).
    pub efficiency_plain: f64,
}

/// Compares photon yields with and without the dark level. `params` must
/// have the dark level enabled.
pub fn raman_scatter_free_fraction(
    params: &SystemParams,
    sequence: &PulseSequence,
    n_trials: u64,
    master_seed: u64,
    tol: Tolerance,
) -> Result<ScatterFreeFraction> {
    if !params.dark_enabled() {
        return domain("scatter-free fraction needs the dark level enabled");
    }
    if n_trials < 2 {
        return domain(format!("need at least 2 trials, got {n_trials}"));
    }
    let plain = params.clone().without_dark_level();
    let yields = |p: &SystemParams| -> Result<(f64, f64)> {
        let recs = run_ensemble(p, sequence, master_seed, n_trials)?;
        let counts: Vec<f64> = recs.iter().map(|r| r.cavity_events().count() as f64).collect();
        let n = counts.len() as f64;
        let mean = counts.iter().sum::<f64>() / n;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Ok((mean, var / n))
    };
    let (y_dark, v_dark) = yields(params)?;
    let (y_plain, v_plain) = yields(&plain)?;
    if y_plain == 0.0 {
        return domain("no cavity photons without the dark level; fraction undefined");
    }
    let ratio = y_dark / y_plain;
    let se = ratio * (v_dark / y_dark.max(f64::MIN_POSITIVE).powi(2) + v_plain / y_plain.powi(2)).sqrt();

    let eff = |p: &SystemParams| -> Result<f64> {
        let rho0 = DensityMatrix::initial(p)?;
        Ok(integrate(p, sequence, &rho0, DEFAULT_OUTPUT_DT, tol)?.efficiency())
    };
    let efficiency_dark = eff(params)?;
    let efficiency_plain = eff(&plain)?;
    if efficiency_plain == 0.0 {
        return domain("master equation predicts no cavity photons; fraction undefined");
    }
    Ok(ScatterFreeFraction {
        trajectory: ratio,
        trajectory_std_err: se,
        master_equation: efficiency_dark / efficiency_plain,
        efficiency_dark,
        efficiency_plain,
    })
}

/// Streaming writer for the raw emission dump `trial,time_us,channel`.
pub struct EmissionCsvWriter {
    w: std::io::BufWriter<std::fs::File>,
}

impl EmissionCsvWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "trial,time_us,channel")?;
        Ok(Self { w })
    }

    pub fn write(&mut self, records: &[EmissionRecord]) -> Result<()> {
        for r in records {
            for e in &r.events {
                writeln!(self.w, "{},{:.6},{}", r.trial, e.time_us, e.channel.label())?;
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

pub fn write_emissions_csv(path: &Path, records: &[EmissionRecord]) -> Result<()> {
    let mut w = EmissionCsvWriter::create(path)?;
    w.write(records)?;
    w.finish()
}

/// Reads a dump written by `write_emissions_csv`. Trials without events are
/// absent from the file and therefore from the result.
pub fn read_emissions_csv(path: &Path) -> Result<Vec<EmissionRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out: Vec<EmissionRecord> = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let parse_err = |m: String| Error::Parse {
            source_name: path.display().to_string(),
            message: format!("row {}: {m}", line + 2),
        };
        if row.len() != 3 {
            return Err(parse_err(format!("expected 3 columns, got {}", row.len())));
        }
        let trial: u64 = row[0].parse().map_err(|e| parse_err(format!("trial: {e}")))?;
        let time_us: f64 = row[1].parse().map_err(|e| parse_err(format!("time_us: {e}")))?;
        let channel = EmissionChannel::from_label(&row[2]).ok_or_else(|| parse_err(format!("unknown channel '{}'", &row[2])))?;
        match out.last_mut() {
            Some(r) if r.trial == trial => r.events.push(EmissionEvent { time_us, channel }),
            Some(r) if r.trial > trial => return Err(parse_err("trials not sorted".into())),
            _ => out.push(EmissionRecord {
                trial,
                events: vec![EmissionEvent { time_us, channel }],
            }),
        }
    }
    Ok(out)
}
