//! Zeeman-resolved level scheme of the ion: S1/2, P1/2, D3/2 and the
//! optional auxiliary dark level.
//!
//! Magnetic quantum numbers are stored doubled (`m2 = 2m`) so that the
//! half-integer values stay exact.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Bohr magneton over Planck's constant, in MHz per tesla.
pub const BOHR_MAGNETON_MHZ_PER_T: f64 = 13_996.244_936;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Manifold {
    S12,
    P12,
    D32,
    Dark,
}

impl Manifold {
    /// Twice the total angular momentum j. The dark level is treated as j = 0.
    pub fn j2(self) -> i32 {
        match self {
            Manifold::S12 | Manifold::P12 => 1,
            Manifold::D32 => 3,
            Manifold::Dark => 0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Manifold::S12 => "S12",
            Manifold::P12 => "P12",
            Manifold::D32 => "D32",
            Manifold::Dark => "DARK",
        }
    }
}

/// One Zeeman sublevel together with its position in the atomic basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AtomicLevel {
    pub manifold: Manifold,
    /// Twice the magnetic quantum number.
    pub m2: i32,
    /// Basis position, 0..8 (0..9 with the dark level).
    pub index: usize,
}

impl AtomicLevel {
    pub fn m(&self) -> f64 {
        f64::from(self.m2) / 2.0
    }

    /// Column-friendly name such as `S12_+1/2` or `DARK`.
    pub fn label(&self) -> String {
        match self.manifold {
            Manifold::Dark => "DARK".to_string(),
            man => {
                let sign = if self.m2 < 0 { '-' } else { '+' };
                format!("{}_{}{}/2", man.label(), sign, self.m2.abs())
            }
        }
    }
}

impl fmt::Display for AtomicLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Sublevels in basis order: S(-1/2), S(+1/2), P(-1/2), P(+1/2),
/// D(-3/2), D(-1/2), D(+1/2), D(+3/2), then DARK if enabled.
const ORDER: [(Manifold, i32); 8] = [
    (Manifold::S12, -1),
    (Manifold::S12, 1),
    (Manifold::P12, -1),
    (Manifold::P12, 1),
    (Manifold::D32, -3),
    (Manifold::D32, -1),
    (Manifold::D32, 1),
    (Manifold::D32, 3),
];

/// The ordered set of atomic levels used by a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelScheme {
    levels: Vec<AtomicLevel>,
}

impl LevelScheme {
    pub fn new(with_dark: bool) -> Self {
        let mut levels: Vec<AtomicLevel> = ORDER
            .iter()
            .enumerate()
            .map(|(index, &(manifold, m2))| AtomicLevel {
                manifold,
                m2,
                index,
            })
            .collect();
        if with_dark {
            levels.push(AtomicLevel {
                manifold: Manifold::Dark,
                m2: 0,
                index: 8,
            });
        }
        Self { levels }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn has_dark(&self) -> bool {
        self.levels.len() == 9
    }

    pub fn levels(&self) -> &[AtomicLevel] {
        &self.levels
    }

    pub fn get(&self, index: usize) -> Option<AtomicLevel> {
        self.levels.get(index).copied()
    }

    /// Look up a sublevel by manifold and doubled magnetic quantum number.
    pub fn find(&self, manifold: Manifold, m2: i32) -> Result<AtomicLevel> {
        self.levels
            .iter()
            .find(|l| l.manifold == manifold && (manifold == Manifold::Dark || l.m2 == m2))
            .copied()
            .ok_or_else(|| {
                crate::Error::Domain(format!(
                    "no sublevel {} with m = {}/2 in this level scheme",
                    manifold.label(),
                    m2
                ))
            })
    }

    pub fn in_manifold(&self, manifold: Manifold) -> impl Iterator<Item = AtomicLevel> + '_ {
        self.levels.iter().copied().filter(move |l| l.manifold == manifold)
    }
}

/// Clebsch-Gordan coefficient <j1 m1; j2 m2 | J M> with every argument
/// doubled. Racah's closed form, Condon-Shortley phase.
pub fn clebsch_gordan(j1: i32, m1: i32, j2: i32, m2: i32, j: i32, m: i32) -> f64 {
    if m1 + m2 != m {
        return 0.0;
    }
    if m1.abs() > j1 || m2.abs() > j2 || m.abs() > j {
        return 0.0;
    }
    if j < (j1 - j2).abs() || j > j1 + j2 {
        return 0.0;
    }
    // All of these must be even for a valid coupling.
    let parity = [j1 + m1, j2 + m2, j + m, j1 + j2 + j];
    if parity.iter().any(|p| p % 2 != 0) {
        return 0.0;
    }
    let f = |x2: i32| -> f64 { factorial(x2 / 2) };
    let prefactor = (f64::from(j + 1) * f(j1 + j2 - j) * f(j1 - j2 + j) * f(-j1 + j2 + j)
        / f(j1 + j2 + j + 2))
    .sqrt()
        * (f(j + m) * f(j - m) * f(j1 - m1) * f(j1 + m1) * f(j2 - m2) * f(j2 + m2)).sqrt();

    let mut sum = 0.0;
    let kmax = (j1 + j2 - j).min(j1 - m1).min(j2 + m2) / 2;
    for k in 0..=kmax {
        let k2 = 2 * k;
        let a = j - j2 + m1 + k2;
        let b = j - j1 - m2 + k2;
        if a < 0 || b < 0 {
            continue;
        }
        let denom = factorial(k)
            * f(j1 + j2 - j - k2)
            * f(j1 - m1 - k2)
            * f(j2 + m2 - k2)
            * f(a)
            * f(b);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign / denom;
    }
    prefactor * sum
}

fn factorial(n: i32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Relative dipole amplitude <j_l m_l; 1 q | j_u m_u> for the decay from
/// `upper` (a P1/2 sublevel) to `lower` (S1/2 or D3/2) emitting polarization `q`.
///
/// Summed over q and the lower sublevels of one manifold the squared
/// amplitudes give 1 for every upper sublevel.
pub fn dipole_amplitude(upper: AtomicLevel, lower: AtomicLevel, q: i32) -> Result<f64> {
    if upper.manifold != Manifold::P12 {
        return domain(format!("upper level {upper} is not a P1/2 sublevel"));
    }
    if !matches!(lower.manifold, Manifold::S12 | Manifold::D32) {
        return domain(format!("lower level {lower} is not an S1/2 or D3/2 sublevel"));
    }
    if !(-1..=1).contains(&q) {
        return domain(format!("polarization index q = {q} outside {{-1, 0, +1}}"));
    }
    for level in [upper, lower] {
        let j2 = level.manifold.j2();
        if level.m2.abs() > j2 || (level.m2 + j2) % 2 != 0 {
            return domain(format!(
                "m = {}/2 is not a valid projection for {}",
                level.m2,
                level.manifold.label()
            ));
        }
    }
    Ok(clebsch_gordan(
        lower.manifold.j2(),
        lower.m2,
        2,
        2 * q,
        upper.manifold.j2(),
        upper.m2,
    ))
}

/// Landé g-factors of the three physical manifolds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GFactors {
    pub s12: f64,
    pub p12: f64,
    pub d32: f64,
}

impl Default for GFactors {
    fn default() -> Self {
        Self {
            s12: 2.0023,
            p12: 2.0 / 3.0,
            d32: 4.0 / 5.0,
        }
    }
}

impl GFactors {
    pub fn for_manifold(&self, manifold: Manifold) -> Option<f64> {
        match manifold {
            Manifold::S12 => Some(self.s12),
            Manifold::P12 => Some(self.p12),
            Manifold::D32 => Some(self.d32),
            Manifold::Dark => None,
        }
    }
}

/// Linear Zeeman shift g_j m mu_B B / hbar, in rad/us.
pub fn zeeman_shift(level: AtomicLevel, b_tesla: f64, g: &GFactors) -> Result<f64> {
    let Some(gj) = g.for_manifold(level.manifold) else {
        return domain("the dark level has no Zeeman structure");
    };
    Ok(std::f64::consts::TAU * gj * level.m() * BOHR_MAGNETON_MHZ_PER_T * b_tesla)
}
