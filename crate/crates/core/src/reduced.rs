//! Restriction of the model to the states reachable from the initial state.
//!
//! Drive, cavity coupling and decay all conserve an excitation count, so
//! starting from the S1/2 ground states with empty cavities only a small
//! block of the product space is ever populated. The block is found by a
//! graph search over the nonzero pattern of H and of every collapse
//! operator, so the restricted dynamics is exact.

use std::collections::VecDeque;

use crate::error::{domain, Result};
use crate::model::{build_collapse_operators, build_hamiltonian, ChannelKind, CollapseChannel};
use crate::operator::{HilbertSpace, OperatorMatrix, C64};
use crate::params::SystemParams;

#[derive(Debug, Clone)]
pub struct ReducedModel {
    params: SystemParams,
    space: HilbertSpace,
    indices: Vec<usize>,
    h_drive: OperatorMatrix,
    h_free: OperatorMatrix,
    channels: Vec<CollapseChannel>,
}

impl ReducedModel {
    /// Full model, closed over the two S1/2 ground states with empty cavities.
    pub fn new(params: &SystemParams) -> Result<Self> {
        let channels = build_collapse_operators(params)?;
        Self::with_channels(params, channels, &ground_seeds(params)?)
    }

    /// Model with an explicit channel list, closed over `seeds`.
    pub fn with_channels(
        params: &SystemParams,
        channels: Vec<CollapseChannel>,
        seeds: &[usize],
    ) -> Result<Self> {
        let space = params.space();
        let h_drive = build_hamiltonian(params, true)?;
        let h_free = build_hamiltonian(params, false)?;
        if seeds.is_empty() {
            return domain("reduction needs at least one seed state");
        }
        if let Some(&bad) = seeds.iter().find(|&&s| s >= space.dim()) {
            return domain(format!("seed index {bad} outside dimension {}", space.dim()));
        }

        let mut generators: Vec<OperatorMatrix> = vec![h_drive.clone(), h_free.clone()];
        for c in &channels {
            generators.push(c.op.clone());
            generators.push(c.op.adjoint().matmul(&c.op)?);
        }
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); space.dim()];
        for g in &generators {
            for &(i, j, _) in g.entries() {
                adjacency[j].push(i);
            }
        }
        let mut seen = vec![false; space.dim()];
        let mut queue: VecDeque<usize> = seeds.iter().copied().collect();
        for &s in seeds {
            seen[s] = true;
        }
        while let Some(j) = queue.pop_front() {
            for &i in &adjacency[j] {
                if !seen[i] {
                    seen[i] = true;
                    queue.push_back(i);
                }
            }
        }
        let indices: Vec<usize> = (0..space.dim()).filter(|&i| seen[i]).collect();

        let channels = channels
            .into_iter()
            .map(|c| CollapseChannel {
                kind: c.kind,
                op: c.op.restrict(&indices),
            })
            .collect();
        Ok(Self {
            params: params.clone(),
            h_drive: h_drive.restrict(&indices),
            h_free: h_free.restrict(&indices),
            space,
            indices,
            channels,
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    /// Full-space index of each reduced basis state.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn position(&self, full_index: usize) -> Option<usize> {
        self.indices.binary_search(&full_index).ok()
    }

    pub fn hamiltonian(&self, drive_on: bool) -> &OperatorMatrix {
        if drive_on {
            &self.h_drive
        } else {
            &self.h_free
        }
    }

    pub fn channels(&self) -> &[CollapseChannel] {
        &self.channels
    }

    /// Atomic level index of each reduced basis state.
    pub fn level_map(&self) -> Vec<usize> {
        self.indices.iter().map(|&i| self.space.state(i).level).collect()
    }

    /// Photon numbers (n1, n2) of each reduced basis state.
    pub fn photon_map(&self) -> Vec<(usize, usize)> {
        self.indices
            .iter()
            .map(|&i| {
                let s = self.space.state(i);
                (s.n1, s.n2)
            })
            .collect()
    }

    /// H - (i/2) Σ C†C over the channels selected by `include`.
    pub fn effective_hamiltonian(
        &self,
        drive_on: bool,
        include: impl Fn(&ChannelKind) -> bool,
    ) -> Result<OperatorMatrix> {
        let mut h = self.hamiltonian(drive_on).clone();
        for c in self.channels.iter().filter(|c| include(&c.kind)) {
            let cc = c.op.adjoint().matmul(&c.op)?;
            h = h.add(&cc.scale(C64::new(0.0, -0.5)))?;
        }
        Ok(h)
    }
}

/// Full-space indices of |S(±1/2), 0, 0⟩.
pub fn ground_seeds(params: &SystemParams) -> Result<Vec<usize>> {
    use crate::level::Manifold;
    let space = params.space();
    let scheme = space.scheme();
    Ok(vec![
        space.index(scheme.find(Manifold::S12, -1)?.index, 0, 0),
        space.index(scheme.find(Manifold::S12, 1)?.index, 0, 0),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduced_block_is_small_and_closed() {
        let p = SystemParams::standard();
        let m = ReducedModel::new(&p).unwrap();
        assert!(m.dim() < 30, "dim {}", m.dim());
        // closure: no full-space operator maps the block outside itself
        let full_h = build_hamiltonian(&p, true).unwrap();
        let inside: std::collections::HashSet<usize> = m.indices().iter().copied().collect();
        for &(i, j, _) in full_h.entries() {
            if inside.contains(&j) {
                assert!(inside.contains(&i));
            }
        }
        for c in build_collapse_operators(&p).unwrap() {
            for &(i, j, _) in c.op.entries() {
                if inside.contains(&j) {
                    assert!(inside.contains(&i));
                }
            }
        }
    }

    #[test]
    fn dark_level_enters_block() {
        let p = SystemParams::standard().with_dark_level(None).unwrap();
        let m = ReducedModel::new(&p).unwrap();
        assert!(m.level_map().contains(&8));
    }

    #[test]
    fn bad_seeds_rejected() {
        let p = SystemParams::standard();
        let ch = build_collapse_operators(&p).unwrap();
        assert!(ReducedModel::with_channels(&p, ch.clone(), &[]).is_err());
        assert!(ReducedModel::with_channels(&p, ch, &[10_000]).is_err());
    }
}
