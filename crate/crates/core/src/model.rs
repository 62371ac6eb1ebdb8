//! Hamiltonian and collapse operators of the ion–cavity system.
//!
//! Rotating frame: S1/2 sits at its Zeeman energy, P1/2 at -Δ_d, and
//! D3/2 (with the cavity photon counted in the frame) at -(Δ_d - Δ_c)
//! minus the residual Raman offset. Mode 1 is polarized along B (π),
//! mode 2 is perpendicular to B and to the cavity axis and carries
//! (σ⁺ + σ⁻)/√2.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{domain, Result};
use crate::level::{dipole_amplitude, zeeman_shift, AtomicLevel, Manifold};
use crate::operator::{HilbertSpace, OperatorMatrix, C64};
use crate::params::{CavityTuning, SystemParams};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CavityMode {
    /// Polarized along the magnetic field (π).
    Mode1,
    /// Polarized perpendicular to field and cavity axis (σ⁺ + σ⁻).
    Mode2,
}

/// What a collapse operator describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    CavityDecay(CavityMode),
    SpontaneousDecay {
        upper: AtomicLevel,
        lower: AtomicLevel,
        q: i32,
    },
    /// Phase flip between S1/2 and the other levels (finite drive linewidth).
    DriveDephasing,
    /// S1/2(-1/2) → DARK.
    DarkPumping,
}

#[derive(Debug, Clone)]
pub struct CollapseChannel {
    pub kind: ChannelKind,
    pub op: OperatorMatrix,
}

fn level_energy(p: &SystemParams, level: AtomicLevel) -> Result<f64> {
    Ok(match level.manifold {
        Manifold::S12 => zeeman_shift(level, p.b_field, &p.g_factors)?,
        Manifold::P12 => -p.delta_drive + zeeman_shift(level, p.b_field, &p.g_factors)?,
        Manifold::D32 => {
            -(p.delta_drive - p.delta_cavity) + zeeman_shift(level, p.b_field, &p.g_factors)?
                - p.raman_offset
        }
        Manifold::Dark => 0.0,
    })
}

/// Rotating-frame Hamiltonian in rad/µs. Without `drive_on` the S↔P
/// couplings are absent.
pub fn build_hamiltonian(p: &SystemParams, drive_on: bool) -> Result<OperatorMatrix> {
    p.validate()?;
    let space = p.space();
    let scheme = space.scheme().clone();
    let fock = space.fock();
    let mut t: Vec<(usize, usize, C64)> = Vec::new();

    for (i, s) in space.basis() {
        let e = level_energy(p, scheme.levels()[s.level])?;
        t.push((i, i, C64::new(e, 0.0)));
    }

    if drive_on {
        for upper in scheme.in_manifold(Manifold::P12) {
            for lower in scheme.in_manifold(Manifold::S12) {
                let q = (upper.m2 - lower.m2) / 2;
                let eps = p.drive_polarization.component(q);
                if eps == 0.0 {
                    continue;
                }
                let v = 0.5 * p.omega_drive * eps * dipole_amplitude(upper, lower, q)?;
                if v == 0.0 {
                    continue;
                }
                for n1 in 0..fock {
                    for n2 in 0..fock {
                        let iu = space.index(upper.index, n1, n2);
                        let il = space.index(lower.index, n1, n2);
                        t.push((iu, il, C64::new(v, 0.0)));
                        t.push((il, iu, C64::new(v, 0.0)));
                    }
                }
            }
        }
    }

    // g (a_k σ⁺ + a_k† σ⁻) with σ⁺ = |P⟩⟨D|.
    for upper in scheme.in_manifold(Manifold::P12) {
        for lower in scheme.in_manifold(Manifold::D32) {
            let q = (upper.m2 - lower.m2) / 2;
            if q.abs() > 1 {
                continue;
            }
            let amp = dipole_amplitude(upper, lower, q)?;
            let (mode, weight) = if q == 0 {
                (CavityMode::Mode1, 1.0)
            } else {
                (CavityMode::Mode2, FRAC_1_SQRT_2)
            };
            let g = p.g0 * amp * weight;
            if g == 0.0 {
                continue;
            }
            for n1 in 0..fock {
                for n2 in 0..fock {
                    let (n_from, target) = match mode {
                        CavityMode::Mode1 if n1 > 0 => (n1, (n1 - 1, n2)),
                        CavityMode::Mode2 if n2 > 0 => (n2, (n1, n2 - 1)),
                        _ => continue,
                    };
                    let id = space.index(lower.index, n1, n2);
                    let ip = space.index(upper.index, target.0, target.1);
                    let v = C64::new(g * (n_from as f64).sqrt(), 0.0);
                    t.push((ip, id, v));
                    t.push((id, ip, v.conj()));
                }
            }
        }
    }

    Ok(OperatorMatrix::from_triplets(space.dim(), t))
}

/// Annihilation operator of one cavity mode on the full space.
pub fn annihilation(space: &HilbertSpace, mode: CavityMode) -> OperatorMatrix {
    let mut t = Vec::new();
    for (i, s) in space.basis() {
        match mode {
            CavityMode::Mode1 if s.n1 > 0 => {
                t.push((space.index(s.level, s.n1 - 1, s.n2), i, C64::new((s.n1 as f64).sqrt(), 0.0)))
            }
            CavityMode::Mode2 if s.n2 > 0 => {
                t.push((space.index(s.level, s.n1, s.n2 - 1), i, C64::new((s.n2 as f64).sqrt(), 0.0)))
            }
            _ => {}
        }
    }
    OperatorMatrix::from_triplets(space.dim(), t)
}

/// |to⟩⟨from| ⊗ 1_cavity.
fn transition(space: &HilbertSpace, from: AtomicLevel, to: AtomicLevel, amp: f64) -> OperatorMatrix {
    let fock = space.fock();
    let mut t = Vec::new();
    for n1 in 0..fock {
        for n2 in 0..fock {
            t.push((
                space.index(to.index, n1, n2),
                space.index(from.index, n1, n2),
                C64::new(amp, 0.0),
            ));
        }
    }
    OperatorMatrix::from_triplets(space.dim(), t)
}

/// All dissipative channels. Zero-rate channels are omitted.
///
/// The drive linewidth enters as √(γ_L/4)·(1 - 2 P_S), which damps every
/// S-to-other coherence at γ_L/2, the field-coherence decay of a laser
/// with Lorentzian FWHM γ_L.
pub fn build_collapse_operators(p: &SystemParams) -> Result<Vec<CollapseChannel>> {
    p.validate()?;
    let space = p.space();
    let scheme = space.scheme().clone();
    let mut out = Vec::new();

    for mode in [CavityMode::Mode1, CavityMode::Mode2] {
        let a = annihilation(&space, mode);
        if !a.is_zero() {
            out.push(CollapseChannel {
                kind: ChannelKind::CavityDecay(mode),
                op: a.scale(C64::new((2.0 * p.kappa).sqrt(), 0.0)),
            });
        }
    }

    for upper in scheme.in_manifold(Manifold::P12) {
        let lowers = scheme
            .levels()
            .iter()
            .copied()
            .filter(|l| matches!(l.manifold, Manifold::S12 | Manifold::D32));
        for lower in lowers {
            let rate = if lower.manifold == Manifold::S12 {
                p.gamma_total * (1.0 - p.branching_sd)
            } else {
                p.gamma_total * p.branching_sd
            };
            let q = (upper.m2 - lower.m2) / 2;
            if q.abs() > 1 || rate == 0.0 {
                continue;
            }
            let amp = dipole_amplitude(upper, lower, q)?;
            if amp == 0.0 {
                continue;
            }
            out.push(CollapseChannel {
                kind: ChannelKind::SpontaneousDecay { upper, lower, q },
                op: transition(&space, upper, lower, rate.sqrt() * amp),
            });
        }
    }

    if p.drive_linewidth > 0.0 {
        let s = (p.drive_linewidth / 4.0).sqrt();
        let mut t = Vec::new();
        for (i, b) in space.basis() {
            let sign = if scheme.levels()[b.level].manifold == Manifold::S12 { -1.0 } else { 1.0 };
            t.push((i, i, C64::new(sign * s, 0.0)));
        }
        out.push(CollapseChannel {
            kind: ChannelKind::DriveDephasing,
            op: OperatorMatrix::from_triplets(space.dim(), t),
        });
    }

    if p.dark_enabled() {
        let from = scheme.find(Manifold::S12, -1)?;
        let to = scheme.find(Manifold::Dark, 0)?;
        out.push(CollapseChannel {
            kind: ChannelKind::DarkPumping,
            op: transition(&space, from, to, p.dark_decay_rate.sqrt()),
        });
    }

    Ok(out)
}

/// Ω_eff = g0 Ω_d / (2|Δ_d|).
pub fn effective_rabi(p: &SystemParams) -> Result<f64> {
    if p.delta_drive == 0.0 {
        return domain("effective Rabi frequency undefined for zero drive detuning");
    }
    Ok(p.g0 * p.omega_drive / (2.0 * p.delta_drive.abs()))
}

/// γ_eff = γ (Ω_d / (2|Δ_d|))².
pub fn effective_decay(p: &SystemParams) -> Result<f64> {
    if p.delta_drive == 0.0 {
        return domain("effective decay rate undefined for zero drive detuning");
    }
    Ok(p.gamma_total * (p.omega_drive / (2.0 * p.delta_drive.abs())).powi(2))
}

/// Cavity field decay κ (rad/µs) such that 2κ/2π = FSR / finesse.
pub fn cavity_kappa_from_geometry(length_m: f64, finesse: f64) -> Result<f64> {
    if !(length_m > 0.0) || !(finesse > 0.0) {
        return domain(format!(
            "cavity length and finesse must be positive (got {length_m} m, {finesse})"
        ));
    }
    let fsr_hz = SPEED_OF_LIGHT / (2.0 * length_m);
    // 2κ = 2π FSR / F, converted from rad/s to rad/µs.
    Ok(PI * fsr_hz / finesse * 1e-6)
}

/// One (S, D) pair connected by a drive photon and a cavity photon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RamanResonance {
    pub s_level: AtomicLevel,
    pub d_level: AtomicLevel,
    /// Value of Δ_d - Δ_c putting the pair on two-photon resonance.
    pub offset: f64,
}

/// The Raman resonances reachable with the configured drive polarization
/// and either cavity mode.
pub fn raman_resonance_offsets(p: &SystemParams) -> Result<Vec<RamanResonance>> {
    let scheme = p.level_scheme();
    let mut out: Vec<RamanResonance> = Vec::new();
    for s in scheme.in_manifold(Manifold::S12) {
        for d in scheme.in_manifold(Manifold::D32) {
            let reachable = scheme.in_manifold(Manifold::P12).any(|u| {
                let qd = (u.m2 - s.m2) / 2;
                let qc = (u.m2 - d.m2) / 2;
                p.drive_polarization.component(qd) != 0.0
                    && qc.abs() <= 1
                    && dipole_amplitude(u, s, qd).map_or(false, |a| a != 0.0)
                    && dipole_amplitude(u, d, qc).map_or(false, |a| a != 0.0)
            });
            if reachable {
                let offset = zeeman_shift(d, p.b_field, &p.g_factors)?
                    - zeeman_shift(s, p.b_field, &p.g_factors)?;
                out.push(RamanResonance {
                    s_level: s,
                    d_level: d,
                    offset,
                });
            }
        }
    }
    Ok(out)
}

/// Cavity mode carrying the photon of the S(+1/2) → D(-1/2) transfer.
pub fn target_mode(p: &SystemParams) -> CavityMode {
    // σ⁻ drive reaches P(-1/2), which decays to D(-1/2) by π emission.
    if p.drive_polarization.component(-1) != 0.0 {
        CavityMode::Mode1
    } else {
        CavityMode::Mode2
    }
}

/// Second-order light shifts (rad/µs) of |S(+1/2),0,0⟩ and of
/// |D(-1/2)⟩ with one photon in the target mode.
pub fn ac_stark_shifts(p: &SystemParams) -> Result<(f64, f64)> {
    let h = build_hamiltonian(p, true)?;
    let space = p.space();
    let scheme = space.scheme();
    let s = scheme.find(Manifold::S12, 1)?;
    let d = scheme.find(Manifold::D32, -1)?;
    let i_s = space.index(s.index, 0, 0);
    let i_d = if p.fock_cutoff < 2 {
        None
    } else {
        Some(match target_mode(p) {
            CavityMode::Mode1 => space.index(d.index, 1, 0),
            CavityMode::Mode2 => space.index(d.index, 0, 1),
        })
    };
    let shift = |i: usize| -> f64 {
        let ei = h.get(i, i).re;
        h.entries()
            .iter()
            .filter(|&&(r, c, _)| r == i && c != i)
            .map(|&(_, c, v)| v.norm_sqr() / (ei - h.get(c, c).re))
            .sum()
    };
    Ok((shift(i_s), i_d.map_or(0.0, shift)))
}

/// Cavity detuning realizing the requested tuning of the
/// S(+1/2) → D(-1/2) resonance.
pub fn tuned_delta_cavity(p: &SystemParams, tuning: CavityTuning) -> Result<f64> {
    let scheme = p.level_scheme();
    let s = scheme.find(Manifold::S12, 1)?;
    let d = scheme.find(Manifold::D32, -1)?;
    let bare = p.delta_drive + zeeman_shift(s, p.b_field, &p.g_factors)?
        - zeeman_shift(d, p.b_field, &p.g_factors)?;
    match tuning {
        CavityTuning::Explicit => Ok(p.delta_cavity),
        CavityTuning::BareResonance => Ok(bare),
        CavityTuning::StarkCompensated => {
            let mut q = p.clone();
            q.delta_cavity = bare;
            // The D-state shift depends weakly on Δ_c itself.
            for _ in 0..4 {
                let (ds, dd) = ac_stark_shifts(&q)?;
                q.delta_cavity = bare + ds - dd;
            }
            Ok(q.delta_cavity)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{khz, mhz, DrivePolarization};
    use approx::assert_relative_eq;
    use std::f64::consts::TAU;

    fn params() -> SystemParams {
        SystemParams::standard()
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        for drive in [true, false] {
            for pol in [
                DrivePolarization::SigmaMinus,
                DrivePolarization::Pi,
                DrivePolarization::LinearPerpendicular,
            ] {
                let mut p = params();
                p.drive_polarization = pol;
                let h = build_hamiltonian(&p, drive).unwrap();
                assert!(h.is_hermitian(1e-12));
            }
        }
    }

    #[test]
    fn undriven_uncoupled_is_diagonal() {
        let mut p = params();
        p.g0 = 1e-300; // validation requires g0 > 0; the coupling underflows to zero in products
        let h = build_hamiltonian(&p, false).unwrap();
        assert!(h.entries().iter().all(|&(i, j, v)| i == j || v.norm() < 1e-290));
    }

    #[test]
    fn bare_two_photon_detuning_equals_raman_offset() {
        let mut p = params();
        p.retune(CavityTuning::BareResonance).unwrap();
        let h = build_hamiltonian(&p, true).unwrap();
        let space = p.space();
        let s = space.index(1, 0, 0);
        let d = space.index(5, 1, 0);
        let diff = h.get(s, s).re - h.get(d, d).re;
        assert!((diff - p.raman_offset).abs() < 1e-9, "{diff} vs {}", p.raman_offset);
    }

    #[test]
    fn stark_compensation_shifts_cavity_by_light_shift() {
        let p = params();
        let (ds, dd) = ac_stark_shifts(&p).unwrap();
        // |Ω/2 · (1/√2) · √(2/3)|² over the Zeeman-corrected S(+1/2)–P(-1/2) gap
        let mub = 13_996.244_936 * 0.2e-3;
        let gap = 335.0 + 0.5 * 2.0023 * mub + 0.5 * (2.0 / 3.0) * mub;
        assert_relative_eq!(ds / TAU, 75.0 / gap, max_relative = 1e-4);
        assert!(dd > 0.0 && dd < ds / 10.0);
        let mut bare = p.clone();
        bare.retune(CavityTuning::BareResonance).unwrap();
        assert_relative_eq!(p.delta_cavity - bare.delta_cavity, ds - dd, max_relative = 1e-6);
    }

    #[test]
    fn collapse_operators_empty_without_dissipation() {
        let mut p = params();
        p.kappa = 1e-300;
        p.gamma_total = 1e-300;
        p.drive_linewidth = 0.0;
        // kappa and gamma must be positive; drop channels by checking kinds instead.
        let ops = build_collapse_operators(&p).unwrap();
        assert!(ops.iter().all(|c| c.op.max_abs() < 1e-140));
    }

    #[test]
    fn total_decay_is_conserved_per_p_sublevel() {
        let p = params();
        let ops = build_collapse_operators(&p).unwrap();
        let space = p.space();
        for upper in [2usize, 3] {
            for (n1, n2) in [(0, 0), (1, 0), (0, 2)] {
                let i = space.index(upper, n1, n2);
                let total: f64 = ops
                    .iter()
                    .filter(|c| matches!(c.kind, ChannelKind::SpontaneousDecay { .. }))
                    .map(|c| c.op.entries().iter().filter(|e| e.1 == i).map(|e| e.2.norm_sqr()).sum::<f64>())
                    .sum();
                assert_relative_eq!(total, p.gamma_total, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn dark_channel_only_when_enabled() {
        let p = params();
        let ops = build_collapse_operators(&p).unwrap();
        assert!(!ops.iter().any(|c| c.kind == ChannelKind::DarkPumping));
        let pd = p.with_dark_level(None).unwrap();
        let ops = build_collapse_operators(&pd).unwrap();
        let dark: Vec<_> = ops.iter().filter(|c| c.kind == ChannelKind::DarkPumping).collect();
        assert_eq!(dark.len(), 1);
        let space = pd.space();
        for &(to, from, _) in dark[0].op.entries() {
            assert_eq!(space.state(from).level, 0); // S(-1/2)
            assert_eq!(space.state(to).level, 8); // DARK
        }
    }

    #[test]
    fn effective_parameters() {
        let p = params();
        assert_relative_eq!(effective_rabi(&p).unwrap(), khz(71.641_791_044_776_12), max_relative = 1e-12);
        let mut z = p.clone();
        z.omega_drive = 0.0;
        assert_eq!(effective_rabi(&z).unwrap(), 0.0);
        assert_eq!(effective_decay(&z).unwrap(), 0.0);
        let mut d2 = p.clone();
        d2.delta_drive *= 2.0;
        assert_relative_eq!(effective_rabi(&d2).unwrap(), effective_rabi(&p).unwrap() / 2.0, max_relative = 1e-14);
        assert_relative_eq!(effective_decay(&d2).unwrap(), effective_decay(&p).unwrap() / 4.0, max_relative = 1e-14);
        let mut zero = p;
        zero.delta_drive = 0.0;
        assert!(effective_rabi(&zero).is_err());
        assert!(effective_decay(&zero).is_err());
    }

    #[test]
    fn kappa_geometry() {
        let k = cavity_kappa_from_geometry(0.02, 70_000.0).unwrap();
        assert_relative_eq!(2.0 * k / TAU, 0.107, max_relative = 0.005);
        assert_relative_eq!(cavity_kappa_from_geometry(0.02, 140_000.0).unwrap(), k / 2.0, max_relative = 1e-14);
        assert_relative_eq!(cavity_kappa_from_geometry(0.04, 70_000.0).unwrap(), k / 2.0, max_relative = 1e-14);
        assert!(cavity_kappa_from_geometry(0.0, 1.0).is_err());
        assert!(cavity_kappa_from_geometry(1.0, -1.0).is_err());
    }

    #[test]
    fn raman_offsets() {
        let mut p = params();
        let res = raman_resonance_offsets(&p).unwrap();
        assert_eq!(res.len(), 6);
        let target = res
            .iter()
            .find(|r| r.s_level.m2 == 1 && r.d_level.m2 == -1)
            .unwrap();
        // zeeman(D,-1/2) - zeeman(S,+1/2) with g_S = 2.0023
        assert_relative_eq!(target.offset / TAU, -(2.0023 * 0.5 + 0.8 * 0.5) * 13_996.244_936 * 0.2e-3, max_relative = 1e-12);

        let flipped = {
            let mut q = p.clone();
            q.b_field = -q.b_field;
            raman_resonance_offsets(&q).unwrap()
        };
        for (a, b) in res.iter().zip(&flipped) {
            assert_relative_eq!(a.offset, -b.offset, max_relative = 1e-14);
        }
        p.b_field = 0.0;
        assert!(raman_resonance_offsets(&p).unwrap().iter().all(|r| r.offset == 0.0));
        let _ = mhz(0.0);
    }

    #[test]
    fn polarization_changes_drive_structure() {
        let space = params().space();
        let sp_entries = |pol| {
            let mut p = params();
            p.drive_polarization = pol;
            let h = build_hamiltonian(&p, true).unwrap();
            let mut pairs: Vec<(usize, usize)> = h
                .entries()
                .iter()
                .filter(|&&(i, j, _)| {
                    let (a, b) = (space.state(i).level, space.state(j).level);
                    a >= 2 && a <= 3 && b <= 1
                })
                .map(|&(i, j, _)| (space.state(i).level, space.state(j).level))
                .collect();
            pairs.dedup();
            pairs
        };
        let minus = sp_entries(DrivePolarization::SigmaMinus);
        let pi = sp_entries(DrivePolarization::Pi);
        let plus = sp_entries(DrivePolarization::SigmaPlus);
        assert_eq!(minus, vec![(2, 1)]);
        assert_eq!(plus, vec![(3, 0)]);
        assert!(pi.contains(&(2, 0)) && pi.contains(&(3, 1)));
    }
}
