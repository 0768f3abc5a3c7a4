use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;

use super::{embed, CMatrix, Qubit, Register, C64, PSD_FLOOR, STATE_TOL, ZERO};
use crate::error::{Error, Result};

/// Tensor product of two states on disjoint registers. The result is stored in
/// canonical register order.
pub trait Tensor: Sized {
    fn tensor(&self, other: &Self) -> Result<Self>;
}

/// Maps basis indices of a register listed in `from` order onto the canonical
/// order of `to`: returns `src[i]` = index in `from` order for canonical index `i`.
fn canonical_permutation(from: &[Qubit], to: &Register) -> Vec<usize> {
    let k = from.len();
    let src_shift: Vec<usize> = to
        .qubits()
        .iter()
        .map(|q| k - 1 - from.iter().position(|f| f == q).expect("same qubit set"))
        .collect();
    (0..to.dim())
        .map(|i| {
            (0..k).fold(0, |acc, pos| {
                let bit = (i >> to.shift(pos)) & 1;
                acc | (bit << src_shift[pos])
            })
        })
        .collect()
}

/// Normalized state vector over a register.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amps: Vec<C64>,
    register: Register,
}

impl PureState {
    pub fn new(amps: Vec<C64>, register: Register) -> Result<Self> {
        if amps.len() != register.dim() {
            return Err(Error::DimensionMismatch {
                expected: register.dim(),
                found: amps.len(),
            });
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > STATE_TOL {
            return Err(Error::InvalidState(format!("state norm {norm} differs from 1")));
        }
        Ok(Self { amps, register })
    }

    /// Rescales `amps` to unit norm.
    pub fn normalized(mut amps: Vec<C64>, register: Register) -> Result<Self> {
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero vector".into()));
        }
        amps.iter_mut().for_each(|a| *a /= norm);
        Self::new(amps, register)
    }

    pub fn basis(register: Register, index: usize) -> Result<Self> {
        let mut amps = alloc::vec![ZERO; register.dim()];
        *amps.get_mut(index).ok_or(Error::DimensionMismatch {
            expected: register.dim(),
            found: index,
        })? = C64::new(1.0, 0.0);
        Self::new(amps, register)
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn register(&self) -> &Register {
        &self.register
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &PureState) -> Result<C64> {
        self.register.expect_eq(&other.register)?;
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// Applies `op` to `targets` (first target = most significant operator bit).
    pub fn apply(&self, op: &CMatrix, targets: &[Qubit]) -> Result<PureState> {
        let full = embed(op, &self.register, targets)?;
        PureState::normalized(full.mul_vec(&self.amps), self.register.clone())
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix::from_unchecked(CMatrix::outer(&self.amps, &self.amps), self.register.clone())
    }
}

impl Tensor for PureState {
    fn tensor(&self, other: &Self) -> Result<Self> {
        let register = self.register.union(&other.register)?;
        let mut order = self.register.qubits().to_vec();
        order.extend_from_slice(other.register.qubits());
        let n = other.amps.len();
        let perm = canonical_permutation(&order, &register);
        let amps = perm.iter().map(|&s| self.amps[s / n] * other.amps[s % n]).collect();
        Ok(Self { amps, register })
    }
}

/// Trace-one, Hermitian, positive semidefinite matrix over a register.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    mat: CMatrix,
    register: Register,
}

impl DensityMatrix {
    /// Validating constructor.
    pub fn new(mat: CMatrix, register: Register) -> Result<Self> {
        let rho = Self { mat, register };
        rho.validate()?;
        Ok(rho)
    }

    pub(crate) fn from_unchecked(mat: CMatrix, register: Register) -> Self {
        let rho = Self { mat, register };
        debug_assert!(rho.validate().is_ok(), "{:?}", rho.validate());
        rho
    }

    pub fn maximally_mixed(register: Register) -> Self {
        let d = register.dim();
        Self::from_unchecked(CMatrix::identity(d).scale_real(1.0 / d as f64), register)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn register(&self) -> &Register {
        &self.register
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mat.dim() != self.register.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.register.dim(),
                found: self.mat.dim(),
            });
        }
        if !self.mat.is_hermitian(STATE_TOL) {
            return Err(Error::InvalidState("matrix is not Hermitian".into()));
        }
        let tr = self.mat.trace();
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = self.min_eigenvalue();
        if min < PSD_FLOOR {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.mat.eigh().0[0]
    }

    /// `(1 − w)·self + w·other` on the same register.
    pub fn mix(&self, other: &DensityMatrix, w: f64) -> Result<DensityMatrix> {
        self.register.expect_eq(&other.register)?;
        crate::error::check_probability("w", w)?;
        let m = &self.mat.scale_real(1.0 - w) + &other.mat.scale_real(w);
        Ok(Self::from_unchecked(m, self.register.clone()))
    }

    /// `⟨ψ|ρ|ψ⟩`, clipped to `[0, 1]`.
    pub fn fidelity_with_pure(&self, psi: &PureState) -> Result<f64> {
        self.register.expect_eq(psi.register())?;
        Ok(self.mat.expectation(psi.amplitudes()).re.clamp(0.0, 1.0))
    }

    /// `Tr(ρ²)`
    /// `Tr(ρ²)`, clipped to `[1/dim, 1]` against roundoff.
    pub fn purity(&self) -> f64 {
        // Tr(ρ²) = Σ |ρ_ij|² for Hermitian ρ
        let raw: f64 = self.mat.as_slice().iter().map(|z| z.norm_sqr()).sum();
        raw.clamp(1.0 / self.dim() as f64, 1.0)
    }

    pub fn partial_trace(&self, keep: &[Qubit]) -> Result<DensityMatrix> {
        self.register.positions_of(keep)?;
        let kept = Register::new(keep)?;
        let keep_shifts: Vec<usize> = kept
            .qubits()
            .iter()
            .map(|&q| self.register.shift(self.register.position(q).unwrap()))
            .collect();
        let keep_mask: usize = keep_shifts.iter().map(|s| 1 << s).sum();
        let sub = |full: usize| keep_shifts.iter().fold(0, |acc, &s| (acc << 1) | ((full >> s) & 1));
        let n = self.dim();
        let mut out = CMatrix::zeros(kept.dim());
        for r in 0..n {
            for c in 0..n {
                if r & !keep_mask == c & !keep_mask {
                    out[(sub(r), sub(c))] += self.mat[(r, c)];
                }
            }
        }
        Ok(Self::from_unchecked(out.hermitize(), kept))
    }

    /// Conjugates by a unitary acting on `targets`.
    pub fn apply_unitary(&self, u: &CMatrix, targets: &[Qubit]) -> Result<DensityMatrix> {
        let full = embed(u, &self.register, targets)?;
        let m = &(&full * &self.mat) * &full.adjoint();
        Ok(Self::from_unchecked(m.hermitize(), self.register.clone()))
    }

    /// Projects `targets` with the orthogonal projector `projector`, returning
    /// the renormalized conditional state and the outcome probability.
    pub fn project(&self, projector: &CMatrix, targets: &[Qubit]) -> Result<(DensityMatrix, f64)> {
        let sq = projector * projector;
        if !projector.is_hermitian(1e-10) || sq.max_abs_diff(projector) > 1e-10 {
            return Err(Error::NotProjector);
        }
        let full = embed(projector, &self.register, targets)?;
        let m = &(&full * &self.mat) * &full;
        let prob = m.trace().re;
        if prob < 1e-15 {
            return Err(Error::ImpossibleOutcome(prob));
        }
        let rho = Self::from_unchecked(m.scale_real(1.0 / prob).hermitize(), self.register.clone());
        Ok((rho, prob.min(1.0)))
    }

    /// Applies a Kraus channel to `targets`.
    pub fn apply_channel(&self, ch: &super::KrausChannel, targets: &[Qubit]) -> Result<DensityMatrix> {
        let mut acc = CMatrix::zeros(self.dim());
        for k in ch.operators() {
            let full = embed(k, &self.register, targets)?;
            let term = &(&full * &self.mat) * &full.adjoint();
            acc = &acc + &term;
        }
        Ok(Self::from_unchecked(acc.hermitize(), self.register.clone()))
    }
}

impl Tensor for DensityMatrix {
    fn tensor(&self, other: &Self) -> Result<Self> {
        let register = self.register.union(&other.register)?;
        let mut order = self.register.qubits().to_vec();
        order.extend_from_slice(other.register.qubits());
        let joint = self.mat.kron(&other.mat);
        let perm = canonical_permutation(&order, &register);
        let mat = CMatrix::from_fn(register.dim(), |r, c| joint[(perm[r], perm[c])]);
        Ok(Self::from_unchecked(mat, register))
    }
}
