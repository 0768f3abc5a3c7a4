//! Simulated state tomography: Pauli-basis counts, linear inversion, the
//! nearest physical state, and parametric bootstrap error bars.
//!
//! Each qubit is measured in `Z`, `X` or `Y`. Outcome bit 0 is the `+1`
//! eigenstate, and the first qubit of the register is the most significant
//! bit of the outcome index. The estimator is linear inversion of the Pauli
//! expectation values followed by a Frobenius-nearest projection onto
//! density matrices (eigenvalues projected onto the probability simplex).
//! Linear inversion is deterministic, which keeps round trips exact.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;

use num_traits::Float;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::entangle::LarmorClock;
use crate::error::{Error, Result};
use crate::qcore::{CMatrix, DensityMatrix, PureState, Qubit, Register, C64, I, ONE, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Basis {
    Z,
    X,
    Y,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::Z, Basis::X, Basis::Y];

    pub fn name(self) -> char {
        match self {
            Basis::Z => 'Z',
            Basis::X => 'X',
            Basis::Y => 'Y',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'Z' => Some(Basis::Z),
            'X' => Some(Basis::X),
            'Y' => Some(Basis::Y),
            _ => None,
        }
    }

    /// Unitary mapping this basis onto the computational basis.
    fn rotation(self) -> CMatrix {
        let h = C64::new(FRAC_1_SQRT_2, 0.0);
        match self {
            Basis::Z => CMatrix::identity(2),
            Basis::X => CMatrix::from_rows(&[&[h, h], &[h, -h]]),
            // H·S†
            Basis::Y => CMatrix::from_rows(&[&[h, -I * h], &[h, I * h]]),
        }
    }
}

/// Bases for every qubit of the register, in register order.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MeasurementSetting {
    pub bases: Vec<Basis>,
    pub shots: u64,
}

/// All `3^k` basis combinations with `shots` each.
pub fn complete_settings(qubits: usize, shots: u64) -> Vec<MeasurementSetting> {
    all_bases(qubits)
        .into_iter()
        .map(|bases| MeasurementSetting { bases, shots })
        .collect()
}

fn all_bases(qubits: usize) -> Vec<Vec<Basis>> {
    let mut out = vec![Vec::new()];
    for _ in 0..qubits {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                Basis::ALL.into_iter().map(move |b| {
                    let mut v = prefix.clone();
                    v.push(b);
                    v
                })
            })
            .collect();
    }
    out
}

/// Outcome counts of one setting. In analytic mode the counts are expected
/// values and need not be integers.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SettingCounts {
    pub bases: Vec<Basis>,
    pub counts: Vec<f64>,
}

impl SettingCounts {
    pub fn shots(&self) -> f64 {
        self.counts.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Counts {
    pub register: Register,
    pub settings: Vec<SettingCounts>,
    /// Expected rather than sampled counts.
    pub analytic: bool,
}

/// Born probabilities of all outcomes for one setting.
pub fn outcome_probabilities(rho: &DensityMatrix, bases: &[Basis]) -> Result<Vec<f64>> {
    let k = rho.register().len();
    if bases.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: bases.len(),
        });
    }
    let u = bases
        .iter()
        .fold(CMatrix::identity(1), |acc, b| acc.kron(&b.rotation()));
    let rotated = &(&u * rho.matrix()) * &u.adjoint();
    Ok((0..rotated.dim()).map(|i| rotated[(i, i)].re.max(0.0)).collect())
}

/// Expected counts, `shots × probability`.
pub fn analytic_counts(rho: &DensityMatrix, settings: &[MeasurementSetting]) -> Result<Counts> {
    let mut out = Vec::with_capacity(settings.len());
    for s in settings {
        check_shots(s.shots)?;
        let probs = outcome_probabilities(rho, &s.bases)?;
        out.push(SettingCounts {
            bases: s.bases.clone(),
            counts: probs.iter().map(|p| p * s.shots as f64).collect(),
        });
    }
    Ok(Counts {
        register: rho.register().clone(),
        settings: out,
        analytic: true,
    })
}

/// Multinomial samples of the Born probabilities.
pub fn simulate_counts<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    settings: &[MeasurementSetting],
    rng: &mut R,
) -> Result<Counts> {
    let mut out = Vec::with_capacity(settings.len());
    for s in settings {
        check_shots(s.shots)?;
        let probs = outcome_probabilities(rho, &s.bases)?;
        out.push(SettingCounts {
            bases: s.bases.clone(),
            counts: multinomial(s.shots, &probs, rng),
        });
    }
    Ok(Counts {
        register: rho.register().clone(),
        settings: out,
        analytic: false,
    })
}

fn check_shots(shots: u64) -> Result<()> {
    if shots == 0 {
        return Err(Error::param("shots", 0.0, "must be at least 1"));
    }
    Ok(())
}

/// Sequential-binomial multinomial draw.
pub(crate) fn multinomial<R: Rng + ?Sized>(n: u64, probs: &[f64], rng: &mut R) -> Vec<f64> {
    let total: f64 = probs.iter().sum();
    let mut left = n;
    let mut mass = total;
    let mut out = Vec::with_capacity(probs.len());
    for (i, &p) in probs.iter().enumerate() {
        let k = if i + 1 == probs.len() {
            left
        } else if left == 0 || mass <= 0.0 {
            0
        } else {
            let q = (p / mass).clamp(0.0, 1.0);
            Binomial::new(left, q).expect("q in [0, 1]").sample(rng)
        };
        out.push(k as f64);
        left -= k;
        mass -= p;
    }
    out
}

/// Linear estimate, physical state and the eigenvalue mass moved by the
/// projection.
#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub rho: DensityMatrix,
    pub linear: CMatrix,
    /// `Σ|λᵢ − λ'ᵢ|` between linear and projected eigenvalues. Bounds the
    /// change of any fidelity caused by the projection.
    pub clipped_mass: f64,
}

/// Linear inversion from a complete setting set, then projection to the
/// nearest density matrix.
pub fn reconstruct(counts: &Counts) -> Result<Reconstruction> {
    let k = counts.register.len();
    let missing: Vec<Vec<Basis>> = all_bases(k)
        .into_iter()
        .filter(|b| !counts.settings.iter().any(|s| &s.bases == b))
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteTomography { missing });
    }
    let dim = 1usize << k;
    for s in &counts.settings {
        if s.counts.len() != dim || s.bases.len() != k {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: s.counts.len(),
            });
        }
        if s.shots().is_nan() || s.shots() <= 0.0 {
            return Err(Error::param("shots", s.shots(), "setting has no counts"));
        }
    }

    let paulis = [pauli(0), pauli(1), pauli(2), pauli(3)];
    let mut linear = CMatrix::zeros(dim);
    // Pauli strings as base-4 digits: 0 = I, 1 = Z, 2 = X, 3 = Y
    for code in 0..(1usize << (2 * k)) {
        let digits: Vec<usize> = (0..k).map(|q| (code >> (2 * (k - 1 - q))) & 3).collect();
        let expectation = pauli_expectation(counts, &digits);
        if expectation == 0.0 {
            continue;
        }
        let op = digits.iter().fold(CMatrix::identity(1), |acc, &d| acc.kron(&paulis[d]));
        linear = &linear + &op.scale_real(expectation / dim as f64);
    }
    let linear = linear.hermitize();

    let (vals, vecs) = linear.eigh();
    let projected = simplex_projection(&vals);
    let clipped_mass = vals.iter().zip(&projected).map(|(a, b)| (a - b).abs()).sum();
    let m = &(&vecs * &CMatrix::diagonal(&projected)) * &vecs.adjoint();
    let rho = DensityMatrix::new(m.hermitize(), counts.register.clone())?;
    Ok(Reconstruction {
        rho,
        linear,
        clipped_mass,
    })
}

fn pauli(d: usize) -> CMatrix {
    match d {
        0 => CMatrix::identity(2),
        1 => CMatrix::diagonal(&[1.0, -1.0]),
        2 => CMatrix::from_rows(&[&[ZERO, ONE], &[ONE, ZERO]]),
        _ => CMatrix::from_rows(&[&[ZERO, -I], &[I, ZERO]]),
    }
}

/// Average of the Pauli-string expectation over all settings that measure
/// its non-identity factors.
fn pauli_expectation(counts: &Counts, digits: &[usize]) -> f64 {
    let k = digits.len();
    let wanted = |d: usize| match d {
        1 => Some(Basis::Z),
        2 => Some(Basis::X),
        3 => Some(Basis::Y),
        _ => None,
    };
    let mut sum = 0.0;
    let mut n = 0usize;
    for s in &counts.settings {
        let compatible = digits
            .iter()
            .zip(&s.bases)
            .all(|(&d, &b)| wanted(d).map_or(true, |w| w == b));
        if !compatible {
            continue;
        }
        let total = s.shots();
        let mut e = 0.0;
        for (outcome, &c) in s.counts.iter().enumerate() {
            let parity = (0..k)
                .filter(|&q| digits[q] != 0)
                .map(|q| (outcome >> (k - 1 - q)) & 1)
                .sum::<usize>();
            e += if parity % 2 == 0 { c } else { -c };
        }
        sum += e / total;
        n += 1;
    }
    sum / n as f64
}

/// Euclidean projection of `vals` onto `{x ≥ 0, Σx = 1}`.
fn simplex_projection(vals: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = vals.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cumulative += v;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    vals.iter().map(|&v| (v - theta).max(0.0)).collect()
}

/// Central value with a one-sigma error.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TomographyResult {
    pub rho: DensityMatrix,
    pub fidelity: Estimate,
    pub purity: Estimate,
    pub n_bootstrap: usize,
    pub clipped_mass: f64,
}

/// Error bars from parametric bootstrap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BootstrapErrors {
    pub fidelity: f64,
    pub purity: f64,
}

/// Minimum number of bootstrap resamples.
pub const MIN_RESAMPLES: usize = 100;

/// Standard deviation of fidelity and purity over multinomial resamples
/// drawn from the observed frequencies. Analytic counts give zero errors.
pub fn bootstrap<R: Rng + ?Sized>(
    counts: &Counts,
    target: &PureState,
    n_resamples: usize,
    rng: &mut R,
) -> Result<BootstrapErrors> {
    if n_resamples < MIN_RESAMPLES {
        return Err(Error::param("n_resamples", n_resamples as f64, "must be at least 100"));
    }
    if counts.analytic {
        return Ok(BootstrapErrors {
            fidelity: 0.0,
            purity: 0.0,
        });
    }
    let mut fid = Vec::with_capacity(n_resamples);
    let mut pur = Vec::with_capacity(n_resamples);
    for _ in 0..n_resamples {
        let settings = counts
            .settings
            .iter()
            .map(|s| {
                let total = s.shots();
                let probs: Vec<f64> = s.counts.iter().map(|c| c / total).collect();
                SettingCounts {
                    bases: s.bases.clone(),
                    counts: multinomial(total.round() as u64, &probs, rng),
                }
            })
            .collect();
        let resample = Counts {
            register: counts.register.clone(),
            settings,
            analytic: false,
        };
        let rec = reconstruct(&resample)?;
        fid.push(rec.rho.fidelity_with_pure(target)?);
        pur.push(rec.rho.purity());
    }
    Ok(BootstrapErrors {
        fidelity: std_dev(&fid),
        purity: std_dev(&pur),
    })
}

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Reconstruction plus fidelity with `target`, purity and bootstrap errors.
pub fn analyze<R: Rng + ?Sized>(
    counts: &Counts,
    target: &PureState,
    n_bootstrap: usize,
    rng: &mut R,
) -> Result<TomographyResult> {
    let rec = reconstruct(counts)?;
    let errors = bootstrap(counts, target, n_bootstrap, rng)?;
    Ok(TomographyResult {
        fidelity: Estimate {
            value: rec.rho.fidelity_with_pure(target)?,
            error: errors.fidelity,
        },
        purity: Estimate {
            value: rec.rho.purity(),
            error: errors.purity,
        },
        rho: rec.rho,
        n_bootstrap,
        clipped_mass: rec.clipped_mass,
    })
}

/// Undoes the Larmor precession of `atom` accumulated over `t` seconds, so a
/// state tagged at detection time `t` is mapped back to its `t = 0` form.
pub fn larmor_rephase(rho: &DensityMatrix, atom: Qubit, t: f64, clock: &LarmorClock) -> Result<DensityMatrix> {
    if !atom.is_atom() {
        return Err(Error::UnknownQubit(atom));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::param("t", t, "must be non-negative"));
    }
    let mut u = CMatrix::identity(2);
    u[(1, 1)] = C64::from_polar(1.0, -clock.omega() * t);
    rho.apply_unitary(&u, &[atom])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entangle::{atom_photon_state, Site};
    use crate::noise::depolarized_ap_state;
    use core::f64::consts::PI;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_qubit(q: Qubit, amps: [C64; 2]) -> DensityMatrix {
        PureState::new(amps.to_vec(), Register::new(&[q]).unwrap())
            .unwrap()
            .to_density()
    }

    #[test]
    fn z_basis_of_ground_state() {
        let rho = one_qubit(Qubit::Atom1, [ONE, ZERO]);
        let s = [MeasurementSetting {
            bases: vec![Basis::Z],
            shots: 1000,
        }];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = simulate_counts(&rho, &s, &mut rng).unwrap();
        assert_eq!(c.settings[0].counts, vec![1000.0, 0.0]);
    }

    #[test]
    fn mixed_state_is_balanced() {
        let rho = DensityMatrix::maximally_mixed(Register::new(&[Qubit::PhotonA]).unwrap());
        let c = analytic_counts(&rho, &complete_settings(1, 200)).unwrap();
        for s in &c.settings {
            assert!((s.counts[0] - 100.0).abs() < 1e-12 && (s.counts[1] - 100.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bell_state_xx_correlated() {
        let reg = Register::new(&[Qubit::PhotonA, Qubit::PhotonB]).unwrap();
        let h = C64::new(FRAC_1_SQRT_2, 0.0);
        let phi = PureState::new(vec![h, ZERO, ZERO, h], reg).unwrap().to_density();
        let p = outcome_probabilities(&phi, &[Basis::X, Basis::X]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[3] - 0.5).abs() < 1e-15);
        assert!(p[1].abs() < 1e-15 && p[2].abs() < 1e-15);
    }

    #[test]
    fn analytic_round_trip() {
        let clock = LarmorClock::at(3.1e-8, 0.0).unwrap();
        let rho = depolarized_ap_state(Site::One, 0.87, &clock).unwrap();
        let c = analytic_counts(&rho, &complete_settings(2, 1000)).unwrap();
        let rec = reconstruct(&c).unwrap();
        assert!(rec.rho.matrix().max_abs_diff(rho.matrix()) < 1e-10);
        assert!(rec.clipped_mass < 1e-10);
    }

    #[test]
    fn incomplete_settings_are_listed() {
        let rho = DensityMatrix::maximally_mixed(Register::new(&[Qubit::Atom1, Qubit::PhotonA]).unwrap());
        let mut settings = complete_settings(2, 10);
        settings.retain(|s| s.bases != vec![Basis::X, Basis::Y]);
        let c = analytic_counts(&rho, &settings).unwrap();
        assert_eq!(
            reconstruct(&c),
            Err(Error::IncompleteTomography {
                missing: vec![vec![Basis::X, Basis::Y]]
            })
        );
    }

    #[test]
    fn sampled_reconstruction_of_depolarized_state() {
        let clock = LarmorClock::default();
        let rho = depolarized_ap_state(Site::Two, 0.924, &clock).unwrap();
        let psi = atom_photon_state(Site::Two, true, &clock);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = simulate_counts(&rho, &complete_settings(2, 100_000), &mut rng).unwrap();
        let res = analyze(&c, &psi, 100, &mut rng).unwrap();
        assert!((res.fidelity.value - 0.924).abs() < 0.01, "{}", res.fidelity.value);
        assert!(res.fidelity.error > 0.0 && res.fidelity.error < 0.005);
    }

    #[test]
    fn mixed_state_purity() {
        let reg = Register::new(&[Qubit::Atom1, Qubit::PhotonA]).unwrap();
        let rho = DensityMatrix::maximally_mixed(reg);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = simulate_counts(&rho, &complete_settings(2, 20_000), &mut rng).unwrap();
        let rec = reconstruct(&c).unwrap();
        assert!((rec.rho.purity() - 0.25).abs() < 0.005);
    }

    #[test]
    fn bootstrap_behaviour() {
        let clock = LarmorClock::default();
        let psi = atom_photon_state(Site::One, true, &clock);
        let rho = psi.to_density();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let exact = analytic_counts(&rho, &complete_settings(2, 1000)).unwrap();
        let zero = bootstrap(&exact, &psi, 100, &mut rng).unwrap();
        assert_eq!(
            zero,
            BootstrapErrors {
                fidelity: 0.0,
                purity: 0.0
            }
        );
        assert!(bootstrap(&exact, &psi, 10, &mut rng).is_err());

        let noisy = depolarized_ap_state(Site::One, 0.9, &clock).unwrap();
        let small = simulate_counts(&noisy, &complete_settings(2, 2_000), &mut rng).unwrap();
        let large = simulate_counts(&noisy, &complete_settings(2, 8_000), &mut rng).unwrap();
        let e_small = bootstrap(&small, &psi, 300, &mut rng).unwrap().fidelity;
        let e_large = bootstrap(&large, &psi, 300, &mut rng).unwrap().fidelity;
        let ratio = e_large / e_small;
        assert!((ratio - 0.5).abs() < 0.15, "{ratio}");

        let bell = simulate_counts(&rho, &complete_settings(2, 100_000), &mut rng).unwrap();
        let e = bootstrap(&bell, &psi, 100, &mut rng).unwrap().fidelity;
        assert!(e > 1e-5 && e < 1e-2, "{e}");
    }

    #[test]
    fn rephase_identities() {
        let clock = LarmorClock::default();
        let psi0 = atom_photon_state(Site::One, true, &clock);
        let rho = psi0.to_density();
        let same = larmor_rephase(&rho, Qubit::Atom1, 0.0, &clock).unwrap();
        assert!(same.matrix().max_abs_diff(rho.matrix()) < 1e-15);
        let period = 2.0 * PI / clock.omega();
        let full = larmor_rephase(&rho, Qubit::Atom1, period, &clock).unwrap();
        assert!(full.matrix().max_abs_diff(rho.matrix()) < 1e-12);
        assert!(larmor_rephase(&rho, Qubit::PhotonA, 1e-8, &clock).is_err());
    }

    proptest! {
        #[test]
        fn rephase_recovers_t0(t in 0.0f64..1e-5) {
            let clock = LarmorClock::at(t, 0.0).unwrap();
            let tagged = atom_photon_state(Site::One, true, &clock).to_density();
            let back = larmor_rephase(&tagged, Qubit::Atom1, t, &clock).unwrap();
            let psi0 = atom_photon_state(Site::One, true, &LarmorClock::default());
            prop_assert!((back.fidelity_with_pure(&psi0).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn projection_bounded_by_clipped_mass(seed in 0u64..1000, f in 0.9f64..=1.0) {
            let clock = LarmorClock::default();
            let psi = atom_photon_state(Site::One, true, &clock);
            let rho = depolarized_ap_state(Site::One, f, &clock).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = simulate_counts(&rho, &complete_settings(2, 50), &mut rng).unwrap();
            let rec = reconstruct(&c).unwrap();
            rec.rho.validate().unwrap();
            let f_lin = rec.linear.expectation(psi.amplitudes()).re;
            let f_phys = rec.rho.fidelity_with_pure(&psi).unwrap();
            prop_assert!((f_phys - f).abs() <= (f_lin - f).abs() + rec.clipped_mass + 1e-12);
        }

        #[test]
        fn simplex_projection_is_a_distribution(v in proptest::collection::vec(-1.0f64..2.0, 1..16)) {
            let p = simplex_projection(&v);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
