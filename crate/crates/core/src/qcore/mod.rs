//! Dense density-matrix engine for the four physical qubits of the repeater
//! cell.
//!
//! # Encoding
//!
//! Registers are always stored in the canonical order
//! `Atom1, PhotonA, Atom2, PhotonB`; the first qubit of a register is the most
//! significant bit of a basis index. Atoms use `|+⟩ ≡ |0⟩`, `|−⟩ ≡ |1⟩`
//! (the Zeeman sublevels `D5/2, +3/2` and `D5/2, −1/2`); photons use
//! `|L⟩ ≡ |0⟩`, `|R⟩ ≡ |1⟩`. With this choice the gate mapping between the
//! atomic Bell basis and the measurement basis is a permutation with phases
//! on computational basis states.

mod channel;
mod matrix;
mod state;

pub use channel::KrausChannel;
pub use matrix::{CMatrix, C64};
pub(crate) use matrix::{I, ONE, ZERO};
pub use state::{DensityMatrix, PureState, Tensor};

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Tolerance on Hermiticity and unit trace.
pub const STATE_TOL: f64 = 1e-12;
/// Eigenvalue floor accepted as positive semidefinite.
pub const PSD_FLOOR: f64 = -1e-10;

/// One of the four physical qubits. The derived ordering is the canonical
/// register order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Qubit {
    Atom1,
    PhotonA,
    Atom2,
    PhotonB,
}

impl Qubit {
    pub const ALL: [Qubit; 4] = [Qubit::Atom1, Qubit::PhotonA, Qubit::Atom2, Qubit::PhotonB];

    pub fn is_atom(self) -> bool {
        matches!(self, Qubit::Atom1 | Qubit::Atom2)
    }
}

/// Ordered set of qubits, kept in canonical order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Register(Vec<Qubit>);

impl Register {
    pub fn new(qubits: &[Qubit]) -> Result<Self> {
        let mut v = qubits.to_vec();
        v.sort();
        for w in v.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicateQubit(w[0]));
            }
        }
        Ok(Self(v))
    }

    pub fn full() -> Self {
        Self(Qubit::ALL.to_vec())
    }

    pub fn qubits(&self) -> &[Qubit] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dim(&self) -> usize {
        1 << self.0.len()
    }

    pub fn position(&self, q: Qubit) -> Option<usize> {
        self.0.iter().position(|&x| x == q)
    }

    pub fn contains(&self, q: Qubit) -> bool {
        self.0.contains(&q)
    }

    /// Bit shift of qubit position `pos` inside a basis index.
    pub(crate) fn shift(&self, pos: usize) -> usize {
        self.0.len() - 1 - pos
    }

    pub(crate) fn positions_of(&self, targets: &[Qubit]) -> Result<Vec<usize>> {
        let mut seen = Vec::with_capacity(targets.len());
        for &t in targets {
            if seen.contains(&t) {
                return Err(Error::DuplicateQubit(t));
            }
            seen.push(t);
        }
        targets
            .iter()
            .map(|&t| self.position(t).ok_or(Error::UnknownQubit(t)))
            .collect()
    }

    pub(crate) fn union(&self, other: &Register) -> Result<Register> {
        if let Some(&q) = self.0.iter().find(|q| other.contains(**q)) {
            return Err(Error::OverlappingRegisters(q));
        }
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Register::new(&v)
    }

    pub(crate) fn expect_eq(&self, other: &Register) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::RegisterMismatch {
                expected: self.0.clone(),
                found: other.0.clone(),
            })
        }
    }
}

/// Embeds an operator on `targets` (first target = most significant bit of the
/// operator index) into the full space of `register`.
pub(crate) fn embed(op: &CMatrix, register: &Register, targets: &[Qubit]) -> Result<CMatrix> {
    let positions = register.positions_of(targets)?;
    let expected = 1 << targets.len();
    if op.dim() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: op.dim(),
        });
    }
    let shifts: Vec<usize> = positions.iter().map(|&p| register.shift(p)).collect();
    let target_mask: usize = shifts.iter().map(|s| 1 << s).sum();
    let sub_index = |full: usize| -> usize { shifts.iter().fold(0, |acc, &s| (acc << 1) | ((full >> s) & 1)) };
    let n = register.dim();
    Ok(CMatrix::from_fn(n, |r, c| {
        if r & !target_mask != c & !target_mask {
            ZERO
        } else {
            op[(sub_index(r), sub_index(c))]
        }
    }))
}
