//! Jones-calculus polarization states, the BB84 alphabet, and the
//! quarter-wave-plate action `P = diag(1, i)` of the sorter prisms.
//!
//! Bit convention: diagonal 0 is |45°⟩, diagonal 1 is |135°⟩, circular 0 is
//! |L⟩ = (1, i)/√2 and circular 1 is |R⟩ = (1, −i)/√2. All comparisons are
//! modulo global phase.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fidelity threshold for [`state_equivalent_up_to_phase`].
pub const PHASE_EQUIVALENCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesVector {
    h: Complex64,
    v: Complex64,
}

impl JonesVector {
    /// Normalizes the input; panics on the zero vector.
    pub fn new(h: Complex64, v: Complex64) -> Self {
        let norm = (h.norm_sqr() + v.norm_sqr()).sqrt();
        assert!(norm > 0.0, "zero Jones vector");
        JonesVector { h: h / norm, v: v / norm }
    }

    pub fn horizontal(&self) -> Complex64 {
        self.h
    }

    pub fn vertical(&self) -> Complex64 {
        self.v
    }

    pub fn inner(&self, other: &JonesVector) -> Complex64 {
        self.h.conj() * other.h + self.v.conj() * other.v
    }

    pub fn with_global_phase(&self, phase: f64) -> Self {
        let z = Complex64::from_polar(1.0, phase);
        JonesVector { h: self.h * z, v: self.v * z }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.h.norm_sqr() + self.v.norm_sqr()
    }
}

impl fmt::Display for JonesVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {})",
            crate::mode_algebra::format_complex(self.h),
            crate::mode_algebra::format_complex(self.v)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Diagonal,
    Circular,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::Diagonal, Basis::Circular];

    pub fn conjugate(self) -> Basis {
        match self {
            Basis::Diagonal => Basis::Circular,
            Basis::Circular => Basis::Diagonal,
        }
    }

    /// Physical basis whose states a logical `self` state occupies after
    /// `depth` quarter-wave plates.
    pub fn after_depth(self, depth: u32) -> Basis {
        if depth.is_multiple_of(2) {
            self
        } else {
            self.conjugate()
        }
    }

    pub fn letter(self) -> char {
        match self {
            Basis::Diagonal => 'D',
            Basis::Circular => 'C',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bb84State {
    pub basis: Basis,
    pub bit: u8,
}

impl Bb84State {
    pub const D45: Bb84State = Bb84State { basis: Basis::Diagonal, bit: 0 };
    pub const D135: Bb84State = Bb84State { basis: Basis::Diagonal, bit: 1 };
    pub const L: Bb84State = Bb84State { basis: Basis::Circular, bit: 0 };
    pub const R: Bb84State = Bb84State { basis: Basis::Circular, bit: 1 };
    pub const ALL: [Bb84State; 4] = [Self::D45, Self::D135, Self::L, Self::R];

    pub fn new(basis: Basis, bit: u8) -> Self {
        debug_assert!(bit < 2);
        Bb84State { basis, bit }
    }

    pub fn flipped(self) -> Self {
        Bb84State { basis: self.basis, bit: self.bit ^ 1 }
    }
}

impl fmt::Display for Bb84State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match (self.basis, self.bit) {
            (Basis::Diagonal, 0) => "45°",
            (Basis::Diagonal, _) => "135°",
            (Basis::Circular, 0) => "L",
            (Basis::Circular, _) => "R",
        };
        f.write_str(name)
    }
}

pub fn canonical_state(s: Bb84State) -> JonesVector {
    let a = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let v = match (s.basis, s.bit) {
        (Basis::Diagonal, 0) => Complex64::new(FRAC_1_SQRT_2, 0.0),
        (Basis::Diagonal, _) => Complex64::new(-FRAC_1_SQRT_2, 0.0),
        (Basis::Circular, 0) => Complex64::new(0.0, FRAC_1_SQRT_2),
        (Basis::Circular, _) => Complex64::new(0.0, -FRAC_1_SQRT_2),
    };
    JonesVector { h: a, v }
}

/// One pass through a prism acting as `P = diag(1, i)`.
pub fn qwp_apply(j: &JonesVector) -> JonesVector {
    qwp_power(j, 1)
}

/// `P^depth`, i.e. `diag(1, i^depth)`.
pub fn qwp_power(j: &JonesVector, depth: u32) -> JonesVector {
    let phase = match depth % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    };
    JonesVector { h: j.h, v: j.v * phase }
}

pub fn state_equivalent_up_to_phase(a: &JonesVector, b: &JonesVector) -> bool {
    a.inner(b).norm() > 1.0 - PHASE_EQUIVALENCE_TOL
}

/// Logical BB84 state whose image under `P^depth` is `j`.
pub fn decode_bb84(j: &JonesVector, depth: u32) -> Result<Bb84State> {
    Bb84State::ALL
        .into_iter()
        .find(|&s| state_equivalent_up_to_phase(&qwp_power(&canonical_state(s), depth), j))
        .ok_or(Error::NotBb84State { depth })
}

/// Probability of outcome bit 0 when measuring `j` in `basis`.
pub fn outcome_zero_probability(j: &JonesVector, basis: Basis) -> f64 {
    canonical_state(Bb84State::new(basis, 0)).inner(j).norm_sqr()
}

/// Projective measurement in `basis`; returns the bit and the collapsed state.
pub fn measure<R: Rng + ?Sized>(j: &JonesVector, basis: Basis, rng: &mut R) -> (u8, JonesVector) {
    let p0 = outcome_zero_probability(j, basis);
    let bit = if rng.random::<f64>() < p0 { 0 } else { 1 };
    (bit, canonical_state(Bb84State::new(basis, bit)))
}
