//! Lindblad master-equation evolution over the pulse sequence.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{domain, Error, Result};
use crate::level::Manifold;
use crate::model::{build_collapse_operators, CavityMode, ChannelKind, CollapseChannel};
use crate::ode::{Dopri5, Tolerance};
use crate::operator::{HilbertSpace, OperatorMatrix, C64, ZERO};
use crate::params::SystemParams;
use crate::reduced::ReducedModel;
use crate::sequence::{PulseSequence, Window};

/// Default sampling interval of evolution records, µs.
pub const DEFAULT_OUTPUT_DT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn from_matrix(mat: DMatrix<C64>) -> Result<Self> {
        if !mat.is_square() {
            return domain(format!("density matrix must be square, got {}x{}", mat.nrows(), mat.ncols()));
        }
        Ok(Self { mat })
    }

    /// |i⟩⟨i|.
    pub fn pure(dim: usize, index: usize) -> Self {
        let mut mat = DMatrix::zeros(dim, dim);
        mat[(index, index)] = C64::new(1.0, 0.0);
        Self { mat }
    }

    /// Optically pumped start: S(+1/2) with `pump_infidelity` left in S(-1/2),
    /// cavities empty.
    pub fn initial(params: &SystemParams) -> Result<Self> {
        let space = params.space();
        let scheme = space.scheme();
        let up = space.index(scheme.find(Manifold::S12, 1)?.index, 0, 0);
        let down = space.index(scheme.find(Manifold::S12, -1)?.index, 0, 0);
        let mut mat = DMatrix::zeros(space.dim(), space.dim());
        mat[(up, up)] = C64::new(1.0 - params.pump_infidelity, 0.0);
        mat[(down, down)] += C64::new(params.pump_infidelity, 0.0);
        Ok(Self { mat })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        (&self.mat - self.mat.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.mat + self.mat.adjoint()) * C64::new(0.5, 0.0);
        herm.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// tr(A ρ).
    pub fn expectation(&self, op: &OperatorMatrix) -> Result<C64> {
        if op.dim() != self.dim() {
            return domain(format!("dimension mismatch: operator {} vs state {}", op.dim(), self.dim()));
        }
        Ok(op.entries().iter().map(|&(i, j, v)| v * self.mat[(j, i)]).sum())
    }

    /// Probability of each atomic level, traced over both cavity modes.
    pub fn level_populations(&self, space: &HilbertSpace) -> Result<Vec<f64>> {
        if space.dim() != self.dim() {
            return domain(format!("dimension mismatch: space {} vs state {}", space.dim(), self.dim()));
        }
        let mut p = vec![0.0; space.scheme().len()];
        for (i, s) in space.basis() {
            p[s.level] += self.mat[(i, i)].re;
        }
        Ok(p)
    }
}

/// −i[H,ρ] + Σ_k (C_k ρ C_k† − ½{C_k†C_k, ρ}).
pub fn lindblad_rhs(rho: &DensityMatrix, h: &OperatorMatrix, c: &[OperatorMatrix]) -> Result<DMatrix<C64>> {
    let d = rho.dim();
    if h.dim() != d || c.iter().any(|op| op.dim() != d) {
        return domain("operator and density-matrix dimensions disagree");
    }
    let r = rho.matrix();
    let hd = h.to_dense();
    let i = C64::new(0.0, 1.0);
    let mut out = (&hd * r - r * &hd) * (-i);
    for op in c {
        let cd = op.to_dense();
        let cdag = cd.adjoint();
        let cc = &cdag * &cd;
        out += &cd * r * &cdag - (&cc * r + r * &cc) * C64::new(0.5, 0.0);
    }
    Ok(out)
}

/// 2κ⟨a_k†a_k⟩ for both modes, photons per µs.
pub fn photon_flux(rho: &DensityMatrix, params: &SystemParams) -> Result<[f64; 2]> {
    let space = params.space();
    if space.dim() != rho.dim() {
        return domain(format!("dimension mismatch: space {} vs state {}", space.dim(), rho.dim()));
    }
    let mut n = [0.0; 2];
    for (i, s) in space.basis() {
        let p = rho.matrix()[(i, i)].re;
        n[0] += s.n1 as f64 * p;
        n[1] += s.n2 as f64 * p;
    }
    Ok([2.0 * params.kappa * n[0], 2.0 * params.kappa * n[1]])
}

/// Integrator diagnostics gathered on the output grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub max_trace_error: f64,
    pub max_hermiticity_deviation: f64,
    pub min_eigenvalue: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

#[derive(Debug, Clone)]
pub struct EvolutionRecord {
    pub times: Vec<f64>,
    pub level_labels: Vec<String>,
    /// `populations[t][level]`.
    pub populations: Vec<Vec<f64>>,
    /// Photons per µs leaving through mode 1 and mode 2.
    pub photon_flux: Vec<[f64; 2]>,
    pub channel_kinds: Vec<ChannelKind>,
    /// `channel_rates[t][k]` = tr(C_k ρ C_k†).
    pub channel_rates: Vec<Vec<f64>>,
    /// Time integral of each channel rate from t = 0.
    pub cumulative_jumps: Vec<Vec<f64>>,
    pub drive_window: Window,
    pub emission_window: Window,
    pub diagnostics: Diagnostics,
    pub final_state: DensityMatrix,
}

impl EvolutionRecord {
    /// Output-grid index nearest to `t`.
    pub fn index_at(&self, t: f64) -> usize {
        let dt = self.times.get(1).map_or(1.0, |t1| t1 - self.times[0]);
        (((t - self.times[0]) / dt).round().max(0.0) as usize).min(self.times.len() - 1)
    }

    pub fn level_series(&self, level: usize) -> Vec<f64> {
        self.populations.iter().map(|p| p[level]).collect()
    }

    /// Integrated jumps between two times over the channels selected by `f`.
    pub fn integrated(&self, from: f64, to: f64, f: impl Fn(&ChannelKind) -> bool) -> f64 {
        let (a, b) = (self.index_at(from), self.index_at(to));
        self.channel_kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| f(k))
            .map(|(k, _)| self.cumulative_jumps[b][k] - self.cumulative_jumps[a][k])
            .sum()
    }

    pub fn efficiency(&self) -> f64 {
        creation_efficiency(self)
    }

    /// CSV with time, level populations and the two mode fluxes.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(w, "time_us")?;
        for l in &self.level_labels {
            write!(w, ",{l}")?;
        }
        writeln!(w, ",flux_mode1_per_us,flux_mode2_per_us")?;
        for (i, t) in self.times.iter().enumerate() {
            write!(w, "{t:.4}")?;
            for p in &self.populations[i] {
                write!(w, ",{p:.9e}")?;
            }
            writeln!(w, ",{:.9e},{:.9e}", self.photon_flux[i][0], self.photon_flux[i][1])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn is_cavity(k: &ChannelKind) -> bool {
    matches!(k, ChannelKind::CavityDecay(_))
}

/// Cavity photons emitted over the drive and wait segments of one period.
pub fn creation_efficiency(record: &EvolutionRecord) -> f64 {
    record.integrated(record.emission_window.start, record.emission_window.end, is_cavity)
}

/// Precomputed right-hand side on the reduced block. The state vector is
/// ρ in column-major order followed by one jump counter per channel.
struct Generator {
    d: usize,
    /// Entries of −i H_eff.
    a: Vec<(usize, usize, C64)>,
    jumps: Vec<Vec<(usize, usize, C64)>>,
    scratch: Vec<C64>,
}

impl Generator {
    fn new(model: &ReducedModel, drive_on: bool) -> Result<Self> {
        let heff = model.effective_hamiltonian(drive_on, |_| true)?;
        let minus_i = C64::new(0.0, -1.0);
        Ok(Self {
            d: model.dim(),
            a: heff.entries().iter().map(|&(i, j, v)| (i, j, minus_i * v)).collect(),
            jumps: model.channels().iter().map(|c| c.op.entries().to_vec()).collect(),
            scratch: vec![ZERO; model.dim() * model.dim()],
        })
    }

    fn rhs(&mut self, y: &[C64], dy: &mut [C64]) {
        let d = self.d;
        let x = &mut self.scratch;
        x.iter_mut().for_each(|v| *v = ZERO);
        for &(i, k, a) in &self.a {
            for j in 0..d {
                x[i + j * d] += a * y[k + j * d];
            }
        }
        for i in 0..d {
            for j in 0..d {
                dy[i + j * d] = x[i + j * d] + x[j + i * d].conj();
            }
        }
        for (k, c) in self.jumps.iter().enumerate() {
            let mut rate = 0.0;
            for &(a, b, v) in c {
                for &(cc, e, w) in c {
                    let term = v * y[b + e * d] * w.conj();
                    dy[a + cc * d] += term;
                    if a == cc {
                        rate += term.re;
                    }
                }
            }
            dy[d * d + k] = C64::new(rate, 0.0);
        }
    }

    fn rates(&self, y: &[C64]) -> Vec<f64> {
        let d = self.d;
        self.jumps
            .iter()
            .map(|c| {
                let mut r = 0.0;
                for &(a, b, v) in c {
                    for &(cc, e, w) in c {
                        if a == cc {
                            r += (v * y[b + e * d] * w.conj()).re;
                        }
                    }
                }
                r
            })
            .collect()
    }
}

/// Integrates one period of `sequence` starting from `rho0`, sampled every
/// `output_dt` µs. Reset segments hold the state at `rho0`.
pub fn integrate(
    params: &SystemParams,
    sequence: &PulseSequence,
    rho0: &DensityMatrix,
    output_dt: f64,
    tol: Tolerance,
) -> Result<EvolutionRecord> {
    let channels = build_collapse_operators(params)?;
    integrate_with_channels(params, channels, sequence, rho0, output_dt, tol)
}

pub(crate) fn integrate_with_channels(
    params: &SystemParams,
    channels: Vec<CollapseChannel>,
    sequence: &PulseSequence,
    rho0: &DensityMatrix,
    output_dt: f64,
    tol: Tolerance,
) -> Result<EvolutionRecord> {
    sequence.validate()?;
    sequence.check_grid(output_dt)?;
    let space = params.space();
    if rho0.dim() != space.dim() {
        return domain(format!("initial state dimension {} does not match model dimension {}", rho0.dim(), space.dim()));
    }
    let tr = rho0.trace();
    if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
        return domain(format!("initial state trace is {tr}, expected 1"));
    }
    let m0 = rho0.matrix();
    let seeds: Vec<usize> = (0..space.dim())
        .filter(|&i| (0..space.dim()).any(|j| m0[(i, j)] != ZERO))
        .collect();
    let model = ReducedModel::with_channels(params, channels, &seeds)?;
    let d = model.dim();
    let idx = model.indices().to_vec();
    let n_ch = model.channels().len();
    let levels = model.level_map();
    let n_levels = space.scheme().len();

    let mut y0 = vec![ZERO; d * d + n_ch];
    for (a, &ia) in idx.iter().enumerate() {
        for (b, &ib) in idx.iter().enumerate() {
            y0[a + b * d] = m0[(ia, ib)];
        }
    }

    let mut gen_on = Generator::new(&model, true)?;
    let mut gen_off = Generator::new(&model, false)?;
    let mut ode = Dopri5::new(d * d + n_ch, tol, 1e-3);

    let mut rec = EvolutionRecord {
        times: Vec::new(),
        level_labels: space.scheme().levels().iter().map(|l| l.label()).collect(),
        populations: Vec::new(),
        photon_flux: Vec::new(),
        channel_kinds: model.channels().iter().map(|c| c.kind).collect(),
        channel_rates: Vec::new(),
        cumulative_jumps: Vec::new(),
        drive_window: sequence.drive_window()?,
        emission_window: sequence.emission_window()?,
        diagnostics: Diagnostics {
            max_trace_error: 0.0,
            max_hermiticity_deviation: 0.0,
            min_eigenvalue: f64::INFINITY,
            accepted_steps: 0,
            rejected_steps: 0,
        },
        final_state: rho0.clone(),
    };
    let cavity_index: Vec<Option<usize>> = rec
        .channel_kinds
        .iter()
        .map(|k| match k {
            ChannelKind::CavityDecay(CavityMode::Mode1) => Some(0),
            ChannelKind::CavityDecay(CavityMode::Mode2) => Some(1),
            _ => None,
        })
        .collect();

    let record = |t: f64, y: &[C64], gen: &Generator, rec: &mut EvolutionRecord| {
        let rho = DMatrix::from_column_slice(d, d, &y[..d * d]);
        let dm = DensityMatrix { mat: rho };
        let mut pops = vec![0.0; n_levels];
        for a in 0..d {
            pops[levels[a]] += y[a + a * d].re;
        }
        let rates = gen.rates(y);
        let mut flux = [0.0; 2];
        for (k, ci) in cavity_index.iter().enumerate() {
            if let Some(m) = ci {
                flux[*m] += rates[k];
            }
        }
        let diag = &mut rec.diagnostics;
        diag.max_trace_error = diag.max_trace_error.max((dm.trace() - 1.0).norm());
        diag.max_hermiticity_deviation = diag.max_hermiticity_deviation.max(dm.hermiticity_deviation());
        diag.min_eigenvalue = diag.min_eigenvalue.min(dm.min_eigenvalue());
        rec.times.push(t);
        rec.populations.push(pops);
        rec.photon_flux.push(flux);
        rec.channel_rates.push(rates);
        rec.cumulative_jumps.push(y[d * d..].iter().map(|v| v.re).collect());
    };

    let mut y = y0.clone();
    let mut t = 0.0;
    let mut step = 0usize;
    record(0.0, &y, &gen_on, &mut rec);
    for seg in &sequence.segments {
        let n_out = (seg.duration_us / output_dt).round() as usize;
        let gen = if seg.drive_on { &mut gen_on } else { &mut gen_off };
        if seg.reset {
            y[..d * d].copy_from_slice(&y0[..d * d]);
        }
        for _ in 0..n_out {
            step += 1;
            let t_next = step as f64 * output_dt;
            if seg.reset {
                t = t_next;
            } else {
                ode.advance(&mut |_, y: &[C64], dy: &mut [C64]| gen.rhs(y, dy), &mut t, &mut y, t_next)?;
                if y[..d * d].iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                    return Err(Error::IntegrationFailure {
                        time_us: t,
                        reason: "state became non-finite".into(),
                    });
                }
            }
            record(t_next, &y, gen, &mut rec);
        }
    }
    rec.diagnostics.accepted_steps = ode.accepted_steps;
    rec.diagnostics.rejected_steps = ode.rejected_steps;

    let mut full = DMatrix::zeros(space.dim(), space.dim());
    for (a, &ia) in idx.iter().enumerate() {
        for (b, &ib) in idx.iter().enumerate() {
            full[(ia, ib)] = y[a + b * d];
        }
    }
    rec.final_state = DensityMatrix { mat: full };
    Ok(rec)
}

/// Two estimates of how much of the final D(-1/2) population arrives by
/// spontaneous decay rather than by cavity emission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayContribution {
    /// Integrated P → D(-1/2) spontaneous-decay flux over the drive pulse.
    pub attribution: f64,
    /// D(-1/2) population at the drive end, full model minus a model
    /// without the P → D(-1/2) decay channels.
    pub deleted_channel: f64,
    pub final_target_full: f64,
    pub final_target_deleted: f64,
}

fn is_decay_to(kind: &ChannelKind, target: usize) -> bool {
    matches!(kind, ChannelKind::SpontaneousDecay { lower, .. } if lower.index == target)
}

pub fn decay_contribution_to_target(
    params: &SystemParams,
    sequence: &PulseSequence,
    output_dt: f64,
    tol: Tolerance,
) -> Result<DecayContribution> {
    let rho0 = DensityMatrix::initial(params)?;
    let full = integrate(params, sequence, &rho0, output_dt, tol)?;
    decay_contribution_with_full(params, sequence, &full, tol)
}

/// Same as `decay_contribution_to_target`, reusing a finished run of the
/// full model from the initial state.
pub fn decay_contribution_with_full(
    params: &SystemParams,
    sequence: &PulseSequence,
    full: &EvolutionRecord,
    tol: Tolerance,
) -> Result<DecayContribution> {
    let target = params.level_scheme().find(Manifold::D32, -1)?.index;
    let rho0 = DensityMatrix::initial(params)?;
    let output_dt = full.times.get(1).map_or(DEFAULT_OUTPUT_DT, |t| t - full.times[0]);
    let drive = full.drive_window;
    let at_end = |r: &EvolutionRecord| r.populations[r.index_at(drive.end)][target];
    let attribution = full.integrated(drive.start, drive.end, |k| is_decay_to(k, target));

    let kept: Vec<CollapseChannel> = build_collapse_operators(params)?
        .into_iter()
        .filter(|c| !is_decay_to(&c.kind, target))
        .collect();
    let cut = integrate_with_channels(params, kept, sequence, &rho0, output_dt, tol)?;
    Ok(DecayContribution {
        attribution,
        deleted_channel: at_end(full) - at_end(&cut),
        final_target_full: at_end(full),
        final_target_deleted: at_end(&cut),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn rhs_zero_without_dynamics() {
        let rho = DensityMatrix::pure(3, 1);
        let out = lindblad_rhs(&rho, &OperatorMatrix::zeros(3), &[]).unwrap();
        assert!(out.iter().all(|v| *v == ZERO));
    }

    #[test]
    fn rhs_two_level_decay() {
        let gamma: f64 = 2.5;
        let sm = OperatorMatrix::from_triplets(2, [(0, 1, c(gamma.sqrt()))]);
        let rho = DensityMatrix::pure(2, 1);
        let out = lindblad_rhs(&rho, &OperatorMatrix::zeros(2), &[sm]).unwrap();
        assert_relative_eq!(out[(1, 1)].re, -gamma, max_relative = 1e-14);
        assert_relative_eq!(out[(0, 0)].re, gamma, max_relative = 1e-14);
    }

    #[test]
    fn rhs_dimension_mismatch() {
        let rho = DensityMatrix::pure(2, 0);
        assert!(lindblad_rhs(&rho, &OperatorMatrix::zeros(3), &[]).is_err());
    }

    #[test]
    fn fast_generator_matches_reference_rhs() {
        let p = SystemParams::standard().with_dark_level(None).unwrap();
        let model = ReducedModel::new(&p).unwrap();
        let d = model.dim();
        // an arbitrary Hermitian trace-one state on the block
        let mut m = DMatrix::<C64>::from_fn(d, d, |i, j| C64::new(((i * 7 + j * 3) % 5) as f64, (i as f64 - j as f64) * 0.3));
        m = &m * m.adjoint();
        let tr = m.trace();
        m /= tr;
        let rho = DensityMatrix::from_matrix(m.clone()).unwrap();
        let c: Vec<OperatorMatrix> = model.channels().iter().map(|c| c.op.clone()).collect();
        for drive in [true, false] {
            let reference = lindblad_rhs(&rho, model.hamiltonian(drive), &c).unwrap();
            let mut g = Generator::new(&model, drive).unwrap();
            let mut y: Vec<C64> = m.as_slice().to_vec();
            y.extend(std::iter::repeat(ZERO).take(c.len()));
            let mut dy = vec![ZERO; y.len()];
            g.rhs(&y, &mut dy);
            let scale = reference.iter().map(|v| v.norm()).fold(0.0, f64::max);
            for i in 0..d {
                for j in 0..d {
                    assert!((dy[i + j * d] - reference[(i, j)]).norm() < 1e-12 * scale);
                }
            }
        }
    }

    #[test]
    fn undriven_ground_state_is_stationary() {
        let p = SystemParams::standard();
        let seq = PulseSequence {
            segments: vec![
                crate::sequence::Segment::new("drive", 5.0, false, false),
                crate::sequence::Segment::new("wait", 5.0, false, false),
            ],
        };
        let rho0 = DensityMatrix::initial(&p).unwrap();
        let r = integrate(&p, &seq, &rho0, 0.5, Tolerance::default()).unwrap();
        let first = r.populations[0].clone();
        for pops in &r.populations {
            for (a, b) in pops.iter().zip(&first) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert_eq!(r.efficiency(), 0.0);
    }

    #[test]
    fn flux_of_frozen_fock_state() {
        let mut p = SystemParams::standard();
        p.fock_cutoff = 2;
        let space = p.space();
        let rho = DensityMatrix::pure(space.dim(), space.index(5, 1, 0));
        let f = photon_flux(&rho, &p).unwrap();
        assert_relative_eq!(f[0], 2.0 * p.kappa, max_relative = 1e-15);
        assert_eq!(f[1], 0.0);
        let vac = DensityMatrix::pure(space.dim(), space.index(1, 0, 0));
        assert_eq!(photon_flux(&vac, &p).unwrap(), [0.0, 0.0]);
    }
}
