//! Atom–photon states, the Mølmer–Sørensen Bell-basis mapping and ideal
//! entanglement swapping.
//!
//! The gate is modelled as the fixed 4×4 unitary that rotates the atomic Bell
//! basis onto the `|±⟩|±⟩` measurement basis:
//!
//! | atomic Bell state                 | measured atoms |
//! |-----------------------------------|----------------|
//! | `Φ⁻ = (|−−⟩ + i|++⟩)/√2`          | `|−−⟩`         |
//! | `Φ⁺ = (|++⟩ + i|−−⟩)/√2`          | `|++⟩`         |
//! | `Ψ⁻ = (|+−⟩ − i|−+⟩)/√2`          | `|+−⟩`         |
//! | `Ψ⁺ = (|−+⟩ − i|+−⟩)/√2`          | `|−+⟩`         |
//!
//! Writing the product of two balanced atom–photon states in that basis, the
//! photon pair heralded by each label is
//!
//! | label | photon pair                    |
//! |-------|--------------------------------|
//! | `Φ⁺`  | `(|LL⟩ − e^{iφ₊}|RR⟩)/√2`      |
//! | `Φ⁻`  | `(|LL⟩ + e^{iφ₊}|RR⟩)/√2`      |
//! | `Ψ⁻`  | `(|LR⟩ + e^{iφ₋}|RL⟩)/√2`      |
//! | `Ψ⁺`  | `(|LR⟩ − e^{iφ₋}|RL⟩)/√2`      |
//!
//! with `φ₋ = ω_L(t₁ − t₂) + π/2` and `φ₊ = ω_L(t₁ + t₂) + π/2`. The global
//! phase `ω_L t₂` is dropped; states are compared through fidelities only.

use alloc::vec;

use core::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

use num_traits::Float;

use crate::error::{Error, Result};
use crate::qcore::{CMatrix, DensityMatrix, PureState, Qubit, Register, Tensor, C64, I, ONE, ZERO};

/// Larmor angular frequency between `|+⟩` and `|−⟩`, rad/s.
pub const OMEGA_LARMOR: f64 = 2.0 * PI * 9.6e6;

/// Which atom–photon pair of the cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Site {
    One,
    Two,
}

impl Site {
    pub fn atom(self) -> Qubit {
        match self {
            Site::One => Qubit::Atom1,
            Site::Two => Qubit::Atom2,
        }
    }

    pub fn photon(self) -> Qubit {
        match self {
            Site::One => Qubit::PhotonA,
            Site::Two => Qubit::PhotonB,
        }
    }

    pub fn register(self) -> Register {
        Register::new(&[self.atom(), self.photon()]).expect("distinct qubits")
    }
}

/// Larmor frequency plus the times elapsed since each photon emission.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LarmorClock {
    omega: f64,
    t1: f64,
    t2: f64,
}

impl Default for LarmorClock {
    fn default() -> Self {
        Self {
            omega: OMEGA_LARMOR,
            t1: 0.0,
            t2: 0.0,
        }
    }
}

impl LarmorClock {
    pub fn new(omega: f64, t1: f64, t2: f64) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::param("omega", omega, "must be positive"));
        }
        if !(t1 >= 0.0 && t1.is_finite()) {
            return Err(Error::param("t1", t1, "must be non-negative"));
        }
        if !(t2 >= 0.0 && t2.is_finite()) {
            return Err(Error::param("t2", t2, "must be non-negative"));
        }
        Ok(Self { omega, t1, t2 })
    }

    /// Clock at the default Larmor frequency.
    pub fn at(t1: f64, t2: f64) -> Result<Self> {
        Self::new(OMEGA_LARMOR, t1, t2)
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn elapsed(&self, site: Site) -> f64 {
        match site {
            Site::One => self.t1,
            Site::Two => self.t2,
        }
    }

    /// Advances both emission clocks by `dt`.
    pub fn advanced(&self, dt: f64) -> Result<Self> {
        Self::new(self.omega, self.t1 + dt, self.t2 + dt)
    }

    pub fn phase_minus(&self) -> f64 {
        self.omega * (self.t1 - self.t2) + FRAC_PI_2
    }

    pub fn phase_plus(&self) -> f64 {
        self.omega * (self.t1 + self.t2) + FRAC_PI_2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum AtomResult {
    Plus,
    Minus,
}

impl AtomResult {
    fn index(self) -> usize {
        match self {
            AtomResult::Plus => 0,
            AtomResult::Minus => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BellLabel {
    PsiMinus,
    PsiPlus,
    PhiMinus,
    PhiPlus,
}

impl BellLabel {
    pub const ALL: [BellLabel; 4] = [
        BellLabel::PsiMinus,
        BellLabel::PsiPlus,
        BellLabel::PhiMinus,
        BellLabel::PhiPlus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BellLabel::PsiMinus => "psi-",
            BellLabel::PsiPlus => "psi+",
            BellLabel::PhiMinus => "phi-",
            BellLabel::PhiPlus => "phi+",
        }
    }
}

/// Result of the atomic Bell measurement: a label together with the product
/// state the gate maps it to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BellOutcome {
    label: BellLabel,
    atomic_result: (AtomResult, AtomResult),
}

impl BellOutcome {
    pub fn from_label(label: BellLabel) -> Self {
        use AtomResult::*;
        let atomic_result = match label {
            BellLabel::PhiMinus => (Minus, Minus),
            BellLabel::PhiPlus => (Plus, Plus),
            BellLabel::PsiMinus => (Plus, Minus),
            BellLabel::PsiPlus => (Minus, Plus),
        };
        Self { label, atomic_result }
    }

    pub fn from_atomic(atom1: AtomResult, atom2: AtomResult) -> Self {
        use AtomResult::*;
        let label = match (atom1, atom2) {
            (Minus, Minus) => BellLabel::PhiMinus,
            (Plus, Plus) => BellLabel::PhiPlus,
            (Plus, Minus) => BellLabel::PsiMinus,
            (Minus, Plus) => BellLabel::PsiPlus,
        };
        Self::from_label(label)
    }

    pub fn label(&self) -> BellLabel {
        self.label
    }

    pub fn atomic_result(&self) -> (AtomResult, AtomResult) {
        self.atomic_result
    }

    /// Index of the measured product state in the (Atom1, Atom2) basis.
    pub fn basis_index(&self) -> usize {
        (self.atomic_result.0.index() << 1) | self.atomic_result.1.index()
    }

    pub fn all() -> [BellOutcome; 4] {
        BellLabel::ALL.map(BellOutcome::from_label)
    }
}

/// Atom–photon state after photon emission. `balanced = false` keeps the
/// Clebsch–Gordan weights `√(2/3)`, `√(1/3)`; `balanced = true` is the
/// maximally entangled state used by the protocol.
pub fn atom_photon_state(site: Site, balanced: bool, clock: &LarmorClock) -> PureState {
    let (a_plus, a_minus) = if balanced {
        (FRAC_1_SQRT_2, FRAC_1_SQRT_2)
    } else {
        ((2.0f64 / 3.0).sqrt(), (1.0f64 / 3.0).sqrt())
    };
    let phase = C64::from_polar(1.0, clock.omega * clock.elapsed(site));
    // basis order |+L⟩, |+R⟩, |−L⟩, |−R⟩
    let amps = vec![C64::new(a_plus, 0.0), ZERO, ZERO, phase * a_minus];
    PureState::new(amps, site.register()).expect("normalized by construction")
}

/// The gate as a 4×4 unitary on (Atom1, Atom2).
pub fn ms_map() -> CMatrix {
    let mut u = CMatrix::zeros(4);
    for outcome in BellOutcome::all() {
        let bell = atomic_bell_state(outcome.label());
        let row = outcome.basis_index();
        for (col, amp) in bell.amplitudes().iter().enumerate() {
            u[(row, col)] = amp.conj();
        }
    }
    u
}

/// Atomic Bell state on (Atom1, Atom2).
pub fn atomic_bell_state(label: BellLabel) -> PureState {
    let h = C64::new(FRAC_1_SQRT_2, 0.0);
    let ih = I * FRAC_1_SQRT_2;
    // indices: ++ = 0, +− = 1, −+ = 2, −− = 3
    let amps = match label {
        BellLabel::PhiMinus => vec![ih, ZERO, ZERO, h],
        BellLabel::PhiPlus => vec![h, ZERO, ZERO, ih],
        BellLabel::PsiMinus => vec![ZERO, h, -ih, ZERO],
        BellLabel::PsiPlus => vec![ZERO, -ih, h, ZERO],
    };
    PureState::new(amps, atoms()).expect("normalized")
}

/// Ideal photon pair heralded by `label`, including the Larmor phases.
pub fn photon_target(label: BellLabel, clock: &LarmorClock) -> PureState {
    let h = FRAC_1_SQRT_2;
    let e_plus = C64::from_polar(h, clock.phase_plus());
    let e_minus = C64::from_polar(h, clock.phase_minus());
    let hh = C64::new(h, 0.0);
    // indices: LL = 0, LR = 1, RL = 2, RR = 3
    let amps = match label {
        BellLabel::PhiPlus => vec![hh, ZERO, ZERO, -e_plus],
        BellLabel::PhiMinus => vec![hh, ZERO, ZERO, e_plus],
        BellLabel::PsiMinus => vec![ZERO, hh, e_minus, ZERO],
        BellLabel::PsiPlus => vec![ZERO, hh, -e_minus, ZERO],
    };
    PureState::new(amps, photons()).expect("normalized")
}

/// Product of the two balanced atom–photon states.
pub fn joint_state(clock: &LarmorClock) -> PureState {
    atom_photon_state(Site::One, true, clock)
        .tensor(&atom_photon_state(Site::Two, true, clock))
        .expect("disjoint sites")
}

/// Ideal four-qubit state after the gate, `MS|ψ_joint⟩`.
pub fn ideal_post_gate_state(clock: &LarmorClock) -> PureState {
    joint_state(clock)
        .apply(&ms_map(), &[Qubit::Atom1, Qubit::Atom2])
        .expect("atoms present")
}

/// Projects the atoms of a post-gate state onto `outcome` and traces them
/// out, returning the photon state and the outcome probability.
pub fn project_atoms(rho_after_gate: &DensityMatrix, outcome: BellOutcome) -> Result<(DensityMatrix, f64)> {
    let mut proj = CMatrix::zeros(4);
    let k = outcome.basis_index();
    proj[(k, k)] = ONE;
    let (cond, prob) = rho_after_gate.project(&proj, &[Qubit::Atom1, Qubit::Atom2])?;
    Ok((cond.partial_trace(&[Qubit::PhotonA, Qubit::PhotonB])?, prob))
}

/// Ideal swapping: gate on the atoms, projection onto `outcome`, atoms traced
/// out.
pub fn swap(rho_joint: &DensityMatrix, outcome: BellOutcome) -> Result<(DensityMatrix, f64)> {
    Register::full().expect_eq(rho_joint.register())?;
    let after = rho_joint.apply_unitary(&ms_map(), &[Qubit::Atom1, Qubit::Atom2])?;
    project_atoms(&after, outcome)
}

/// Phase of the photon coherence selected by `label`: `arg ρ[RL, LR]` for
/// `Ψ±`, `arg ρ[RR, LL]` for `Φ±`.
pub fn photon_phase(rho_photons: &DensityMatrix, label: BellLabel) -> f64 {
    let m = rho_photons.matrix();
    match label {
        BellLabel::PsiMinus | BellLabel::PsiPlus => m[(2, 1)].arg(),
        BellLabel::PhiMinus | BellLabel::PhiPlus => m[(3, 0)].arg(),
    }
}

fn atoms() -> Register {
    Register::new(&[Qubit::Atom1, Qubit::Atom2]).expect("distinct")
}

fn photons() -> Register {
    Register::new(&[Qubit::PhotonA, Qubit::PhotonB]).expect("distinct")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TAU: f64 = 2.0 * PI;

    fn wrap(x: f64) -> f64 {
        let y = x.rem_euclid(TAU);
        if y > PI {
            y - TAU
        } else {
            y
        }
    }

    #[test]
    fn balanced_state_at_zero() {
        let s = atom_photon_state(Site::One, true, &LarmorClock::default());
        let a = s.amplitudes();
        assert!((a[0].re - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((a[3] - C64::new(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert_eq!(a[1], ZERO);
        assert_eq!(a[2], ZERO);
    }

    #[test]
    fn imbalanced_weights() {
        let s = atom_photon_state(Site::Two, false, &LarmorClock::default());
        let a = s.amplitudes();
        assert!((a[0].norm_sqr() - 2.0 / 3.0).abs() < 1e-15);
        assert!((a[3].norm_sqr() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn half_larmor_period_flips_sign() {
        let clock = LarmorClock::at(PI / OMEGA_LARMOR, 0.0).unwrap();
        let s = atom_photon_state(Site::One, true, &clock);
        assert!((s.amplitudes()[3] - C64::new(-FRAC_1_SQRT_2, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn clock_rejects_bad_values() {
        assert!(LarmorClock::new(0.0, 0.0, 0.0).is_err());
        assert!(LarmorClock::new(1.0, -1.0, 0.0).is_err());
        assert!(LarmorClock::new(1.0, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn outcome_mapping_matches_gate_table() {
        use AtomResult::*;
        let table = [
            (BellLabel::PhiMinus, (Minus, Minus)),
            (BellLabel::PhiPlus, (Plus, Plus)),
            (BellLabel::PsiMinus, (Plus, Minus)),
            (BellLabel::PsiPlus, (Minus, Plus)),
        ];
        for (label, res) in table {
            assert_eq!(BellOutcome::from_label(label).atomic_result(), res);
            assert_eq!(BellOutcome::from_atomic(res.0, res.1).label(), label);
        }
    }

    #[test]
    fn ms_map_is_unitary_and_maps_bell_states() {
        let u = ms_map();
        assert!((&u.adjoint() * &u).max_abs_diff(&CMatrix::identity(4)) < 1e-12);
        for outcome in BellOutcome::all() {
            let mapped = atomic_bell_state(outcome.label())
                .apply(&u, &[Qubit::Atom1, Qubit::Atom2])
                .unwrap();
            let target = PureState::basis(atoms(), outcome.basis_index()).unwrap();
            assert!((target.inner(&mapped).unwrap().norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ms_maps_phi_minus_superposition_to_minus_minus() {
        // (|−−⟩ + i|++⟩)/√2
        let s = PureState::normalized(vec![I, ZERO, ZERO, ONE], atoms()).unwrap();
        let out = s.apply(&ms_map(), &[Qubit::Atom1, Qubit::Atom2]).unwrap();
        assert!((out.amplitudes()[3].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ms_fourth_power_is_identity_on_bell_basis_up_to_phase() {
        // frozen oracle: U⁴ computed by explicit multiplication is diagonal in
        // the Bell basis with unit-modulus entries
        let u = ms_map();
        let u2 = &u * &u;
        let u4 = &u2 * &u2;
        for label in BellLabel::ALL {
            let b = atomic_bell_state(label);
            let v = u4.mul_vec(b.amplitudes());
            let overlap: C64 = b.amplitudes().iter().zip(&v).map(|(a, x)| a.conj() * x).sum();
            assert!((overlap.norm() - 1.0).abs() < 1e-12, "{label:?}: {overlap}");
        }
    }

    #[test]
    fn joint_state_overlap_with_phi_plus_term() {
        // |⟨Φ⁺ ⊗ (LL − e^{iπ/2}RR)/√2 | ψ_joint⟩|² = 1/4 at t1 = t2 = 0
        let clock = LarmorClock::default();
        let term = atomic_bell_state(BellLabel::PhiPlus)
            .tensor(&photon_target(BellLabel::PhiPlus, &clock))
            .unwrap();
        let ov = term.inner(&joint_state(&clock)).unwrap().norm_sqr();
        assert!((ov - 0.25).abs() < 1e-12);
        let n: f64 = joint_state(&clock).amplitudes().iter().map(|a| a.norm_sqr()).sum();
        assert!((n - 1.0).abs() < 1e-14);
    }

    #[test]
    fn phase_minus_independent_of_common_time() {
        for t in [0.0, 1e-7, 3.3e-6, 1.0] {
            let c = LarmorClock::at(t, t).unwrap();
            assert!((c.phase_minus() - FRAC_PI_2).abs() < 1e-12);
        }
    }

    #[test]
    fn ideal_swap_heralds_targets() {
        let clock = LarmorClock::at(3.1e-8, 1.7e-8).unwrap();
        let rho = joint_state(&clock).to_density();
        for outcome in BellOutcome::all() {
            let (ph, prob) = swap(&rho, outcome).unwrap();
            assert!((prob - 0.25).abs() < 1e-10);
            let f = ph.fidelity_with_pure(&photon_target(outcome.label(), &clock)).unwrap();
            assert!(f > 1.0 - 1e-10, "{outcome:?}: {f}");
        }
    }

    #[test]
    fn psi_minus_heralds_lr_plus_rl() {
        let clock = LarmorClock::default();
        let (ph, prob) = swap(
            &joint_state(&clock).to_density(),
            BellOutcome::from_label(BellLabel::PsiMinus),
        )
        .unwrap();
        assert!((prob - 0.25).abs() < 1e-12);
        // (|LR⟩ + e^{iπ/2}|RL⟩)/√2
        let h = FRAC_1_SQRT_2;
        let target = PureState::new(vec![ZERO, C64::new(h, 0.0), C64::new(0.0, h), ZERO], photons()).unwrap();
        assert!(ph.fidelity_with_pure(&target).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn projecting_minus_minus_gives_ll_plus_rr() {
        // (−,−) is the Φ⁻ outcome, which heralds (|LL⟩ + e^{iφ₊}|RR⟩)/√2
        let clock = LarmorClock::default();
        let after = ideal_post_gate_state(&clock).to_density();
        let outcome = BellOutcome::from_atomic(AtomResult::Minus, AtomResult::Minus);
        let (ph, prob) = project_atoms(&after, outcome).unwrap();
        assert!((prob - 0.25).abs() < 1e-12);
        let h = FRAC_1_SQRT_2;
        let ll_plus_i_rr = PureState::new(vec![C64::new(h, 0.0), ZERO, ZERO, C64::new(0.0, h)], photons()).unwrap();
        assert!(ph.fidelity_with_pure(&ll_plus_i_rr).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn mixed_input_gives_uniform_outcomes() {
        let rho = DensityMatrix::maximally_mixed(Register::full());
        for outcome in BellOutcome::all() {
            let (ph, prob) = swap(&rho, outcome).unwrap();
            assert!((prob - 0.25).abs() < 1e-12);
            assert!(ph.matrix().max_abs_diff(&CMatrix::identity(4).scale_real(0.25)) < 1e-12);
        }
    }

    #[test]
    fn swap_requires_full_register() {
        let rho = atom_photon_state(Site::One, true, &LarmorClock::default()).to_density();
        assert!(swap(&rho, BellOutcome::from_label(BellLabel::PhiPlus)).is_err());
    }

    proptest! {
        #[test]
        fn joint_state_is_tensor_of_pairs(t1 in 0.0f64..1e-6, t2 in 0.0f64..1e-6) {
            let clock = LarmorClock::at(t1, t2).unwrap();
            let a = atom_photon_state(Site::One, true, &clock);
            let b = atom_photon_state(Site::Two, true, &clock);
            let ab = a.tensor(&b).unwrap();
            let joint = joint_state(&clock);
            for (x, y) in ab.amplitudes().iter().zip(joint.amplitudes()) {
                prop_assert!((x - y).norm() < 1e-12);
            }
        }

        #[test]
        fn phase_covariance(t1 in 0.0f64..1e-6, t2 in 0.0f64..1e-6, dt in 0.0f64..1e-6) {
            let c0 = LarmorClock::at(t1, t2).unwrap();
            let c1 = c0.advanced(dt).unwrap();
            let rho0 = joint_state(&c0).to_density();
            let rho1 = joint_state(&c1).to_density();
            let psi = BellOutcome::from_label(BellLabel::PsiMinus);
            let phi = BellOutcome::from_label(BellLabel::PhiPlus);
            let m0 = photon_phase(&swap(&rho0, psi).unwrap().0, BellLabel::PsiMinus);
            let m1 = photon_phase(&swap(&rho1, psi).unwrap().0, BellLabel::PsiMinus);
            prop_assert!(wrap(m1 - m0).abs() < 1e-9);
            let p0 = photon_phase(&swap(&rho0, phi).unwrap().0, BellLabel::PhiPlus);
            let p1 = photon_phase(&swap(&rho1, phi).unwrap().0, BellLabel::PhiPlus);
            prop_assert!(wrap(p1 - p0 - 2.0 * OMEGA_LARMOR * dt).abs() < 1e-9);
            // extracted phase agrees with the analytic φ₋
            prop_assert!(wrap(m0 - c0.phase_minus()).abs() < 1e-9);
        }

        #[test]
        fn swap_probabilities_sum_to_one(raw in proptest::collection::vec(-1.0f64..1.0, 32)) {
            // random pure four-qubit input
            let amps: alloc::vec::Vec<C64> = raw.chunks(2).map(|c| C64::new(c[0], c[1])).collect();
            let rho = PureState::normalized(amps, Register::full()).unwrap().to_density();
            let total: f64 = BellOutcome::all()
                .iter()
                .map(|&o| match swap(&rho, o) {
                    Ok((_, p)) => p,
                    Err(Error::ImpossibleOutcome(_)) => 0.0,
                    Err(e) => panic!("{e}"),
                })
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-10);
        }
    }
}
