//! False-addressing depolarization, the noisy MS gate and the trial-averaged
//! fidelity models.
//!
//! Each photon-2 trial resets atom 2 with the addressing beam, which also hits
//! atom 1 with probability `P_SIA,false`. A fraction `η850/2` of those events
//! lands in `|±⟩`, so one trial acts on the atom-1/photon-A pair as
//! `ε(ρ) = (1 − c)ρ + cM` with `c = P_SIA,false·η850/2`. Detection of photon 2
//! in trial `k` weights `ε_k` by `w_k ∝ p(1 − p)^{k−1}`.
//!
//! The [`oracle`] submodule evaluates the same quantities by explicit sums and
//! dense-matrix channel simulation; the closed forms here are checked against
//! it.

use alloc::vec::Vec;

use num_traits::Float;

use crate::entangle::{atom_photon_state, ms_map, BellLabel, LarmorClock, Site};
use crate::error::{check_probability, Error, Result};
use crate::qcore::{CMatrix, DensityMatrix, KrausChannel, Qubit};

/// Branching ratio of `P3/2` to `D5/2`.
pub const ETA_850: f64 = 0.899;

/// Atom populations of `M` in the order `|+⟩`, `|−⟩`.
pub const M_ATOM_POPULATIONS: [f64; 2] = [0.4, 0.6];

/// Parameters of the depolarization model.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct NoiseModelParams {
    /// Initial fidelity of atom 1 with its photon.
    pub f10: f64,
    /// Initial fidelity of atom 2 with its photon.
    pub f20: f64,
    pub f_ms: f64,
    pub p_sia_false: f64,
    pub eta_850: f64,
    /// Single-shot detection probability of the second photon.
    pub p: f64,
    /// Maximum number of trials, `N`.
    pub n_max: u64,
}

impl Default for NoiseModelParams {
    /// Fitted atom-photon values with the independently measured `p₂`.
    fn default() -> Self {
        Self {
            f10: 0.945,
            f20: 0.924,
            f_ms: 1.0,
            p_sia_false: 0.0056,
            eta_850: ETA_850,
            p: 0.00096,
            n_max: 100,
        }
    }
}

impl NoiseModelParams {
    /// Photon-photon fit for one projection outcome (gate fidelity and false
    /// addressing per outcome, initial fidelities from the atom-photon fit).
    pub fn pp_fit(label: BellLabel) -> Self {
        let (f_ms, p_sia_false) = match label {
            BellLabel::PsiMinus => (0.915, 0.0130),
            BellLabel::PsiPlus => (0.914, 0.0110),
            BellLabel::PhiMinus => (0.871, 0.0120),
            BellLabel::PhiPlus => (0.886, 0.0146),
        };
        Self {
            f_ms,
            p_sia_false,
            ..Self::default()
        }
    }

    pub fn with_n_max(self, n_max: u64) -> Self {
        Self { n_max, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("f10", self.f10)?;
        check_probability("f20", self.f20)?;
        check_probability("f_ms", self.f_ms)?;
        check_probability("p_sia_false", self.p_sia_false)?;
        check_probability("eta_850", self.eta_850)?;
        check_probability("p", self.p)?;
        if self.n_max == 0 {
            return Err(Error::param("n_max", 0.0, "must be at least 1"));
        }
        Ok(())
    }

    /// Per-trial probability `c` that atom 1 is mixed.
    pub fn c(&self) -> f64 {
        self.p_sia_false * self.eta_850 / 2.0
    }
}

/// `M = (3/5|−⟩⟨−| + 2/5|+⟩⟨+|) ⊗ I/2` on the atom-photon pair of `site`.
pub fn depolarizing_matrix(site: Site) -> DensityMatrix {
    DensityMatrix::from_unchecked(CMatrix::diagonal(&m_diagonal()), site.register())
}

fn m_diagonal() -> [f64; 4] {
    let [plus, minus] = M_ATOM_POPULATIONS;
    [plus / 2.0, plus / 2.0, minus / 2.0, minus / 2.0]
}

/// One trial's false-addressing channel `ε` on an (atom, photon) pair.
pub fn false_addressing_channel(c: f64) -> Result<KrausChannel> {
    KrausChannel::replacement(&m_diagonal(), c)
}

/// `ε_k(ρ₀) = (1 − c)^k ρ₀ + (1 − (1 − c)^k) M`.
pub fn depolarize_k(rho0: &DensityMatrix, c: f64, k: u64) -> Result<DensityMatrix> {
    check_probability("c", c)?;
    let site = match rho0.register().qubits() {
        [Qubit::Atom1, Qubit::PhotonA] => Site::One,
        [Qubit::Atom2, Qubit::PhotonB] => Site::Two,
        other => {
            return Err(Error::RegisterMismatch {
                expected: Site::One.register().qubits().to_vec(),
                found: other.to_vec(),
            })
        }
    };
    let keep = survival(c, k);
    rho0.mix(&depolarizing_matrix(site), 1.0 - keep)
}

/// `(1 − c)^k`, exact for `c = 1`.
fn survival(c: f64, k: u64) -> f64 {
    if k == 0 {
        1.0
    } else {
        (k as f64 * (-c).ln_1p()).exp()
    }
}

/// `𝓕₁(k) = (1 − c)^k F₁₀ + (1 − (1 − c)^k)/4`.
pub fn fidelity_after_k(f10: f64, c: f64, k: u64) -> f64 {
    let s = survival(c, k);
    s * f10 + (1.0 - s) / 4.0
}

/// `w_k = p(1 − p)^{k−1} / Σ`, for `k = 1..=n`.
pub fn trial_weights(p: f64, n: u64) -> Result<Vec<f64>> {
    check_probability("p", p)?;
    if p == 0.0 {
        return Err(Error::DegenerateWeights);
    }
    if n == 0 {
        return Err(Error::param("n", 0.0, "must be at least 1"));
    }
    let raw: Vec<f64> = (0..n).map(|j| p * survival(p, j)).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Weighted survival `g(N) = Σ_k w_k (1 − c)^k` in closed form.
pub fn weighted_survival(p: f64, c: f64, n: u64) -> Result<f64> {
    check_probability("p", p)?;
    check_probability("c", c)?;
    if p == 0.0 {
        return Err(Error::DegenerateWeights);
    }
    if n == 0 {
        return Err(Error::param("n", 0.0, "must be at least 1"));
    }
    let nf = n as f64;
    let ln_q = (-p).ln_1p();
    let ln_u = ln_q + (-c).ln_1p();
    // 1 − (1−p)^N and 1 − ((1−c)(1−p))^N without cancellation
    let detect = -(nf * ln_q).exp_m1();
    let decay = -(nf * ln_u).exp_m1();
    Ok(p * (1.0 - c) * decay / (detect * (p + c * (1.0 - p))))
}

/// `g(N → ∞) = p(1 − c)/(p + c(1 − p))`.
pub fn weighted_survival_limit(p: f64, c: f64) -> Result<f64> {
    check_probability("p", p)?;
    check_probability("c", c)?;
    if p == 0.0 {
        return Err(Error::DegenerateWeights);
    }
    Ok(p * (1.0 - c) / (p + c * (1.0 - p)))
}

/// Trial-averaged fidelity of atom 1 with its photon, `𝓕₁(N)`.
pub fn avg_atom_fidelity(params: &NoiseModelParams) -> Result<f64> {
    params.validate()?;
    let g = weighted_survival(params.p, params.c(), params.n_max)?;
    Ok(atom_fidelity_from_survival(params.f10, g))
}

fn atom_fidelity_from_survival(f10: f64, g: f64) -> f64 {
    0.25 + (f10 - 0.25) * g
}

/// Mixing weight `α = D/(D − 1)·(1 − F_MS)` of the gate's depolarizing error
/// on a `D`-dimensional register. `D = 16` gives the four-qubit `16/15` form.
pub fn ms_alpha(f_ms: f64, dim: usize) -> Result<f64> {
    check_probability("f_ms", f_ms)?;
    let d = dim as f64;
    let alpha = d / (d - 1.0) * (1.0 - f_ms);
    if alpha > 1.0 + 1e-12 {
        return Err(Error::param("f_ms", f_ms, "below the fully mixed floor 1/D"));
    }
    Ok(alpha.min(1.0))
}

/// Gate with depolarizing error: `(1 − α)·UρU† + α·I/D`, where `D` is the
/// dimension of `rho`, which must contain both atoms.
pub fn noisy_ms_channel(rho: &DensityMatrix, f_ms: f64) -> Result<DensityMatrix> {
    let alpha = ms_alpha(f_ms, rho.dim())?;
    let ideal = rho.apply_unitary(&ms_map(), &[Qubit::Atom1, Qubit::Atom2])?;
    let mixed = DensityMatrix::maximally_mixed(rho.register().clone());
    ideal.mix(&mixed, alpha)
}

/// `ρ_{i,0} = (1 − q)|ψ⟩⟨ψ| + (q/4)·I` with `q = 4/3·(1 − F)`.
pub fn depolarized_ap_state(site: Site, fidelity: f64, clock: &LarmorClock) -> Result<DensityMatrix> {
    if !(0.25..=1.0).contains(&fidelity) {
        return Err(Error::param("fidelity", fidelity, "must lie in [1/4, 1]"));
    }
    let q = 4.0 / 3.0 * (1.0 - fidelity);
    let pure = atom_photon_state(site, true, clock).to_density();
    pure.mix(&DensityMatrix::maximally_mixed(site.register()), q)
}

/// Trial-averaged four-qubit fidelity after the noisy gate with the ideal
/// post-gate state `MS|ψ_joint⟩`, `𝓕_ph,ph(N)`.
pub fn avg_pp_fidelity(params: &NoiseModelParams) -> Result<f64> {
    params.validate()?;
    let g = weighted_survival(params.p, params.c(), params.n_max)?;
    Ok(pp_fidelity_from_survival(params, g))
}

fn pp_fidelity_from_survival(params: &NoiseModelParams, g: f64) -> f64 {
    let NoiseModelParams { f10, f20, f_ms, .. } = *params;
    g * f20 * (4.0 * f10 - 1.0) * (16.0 * f_ms - 1.0) / 60.0 + (1.0 - f_ms - f20 / 4.0 + 4.0 * f_ms * f20) / 15.0
}

/// Outcome-averaged fidelity of the heralded photon pair with its target,
/// `Σ_o P(o)·⟨Φ_o|ρ_o|Φ_o⟩`, for the same noise model.
pub fn heralded_pp_fidelity(params: &NoiseModelParams) -> Result<f64> {
    params.validate()?;
    let g = weighted_survival(params.p, params.c(), params.n_max)?;
    let NoiseModelParams { f10, f20, f_ms, .. } = *params;
    Ok(0.25 + (16.0 * f_ms - 1.0) * (4.0 * f20 - 1.0) * (4.0 * f10 - 1.0) * g / 180.0)
}

/// Which averaged fidelity a threshold refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum FidelityModel {
    /// `𝓕₁(N)`
    Atom,
    /// `𝓕_ph,ph(N)`
    PhotonPair,
    /// Outcome-averaged heralded photon-pair fidelity.
    Heralded,
}

impl FidelityModel {
    pub fn evaluate(self, params: &NoiseModelParams) -> Result<f64> {
        match self {
            FidelityModel::Atom => avg_atom_fidelity(params),
            FidelityModel::PhotonPair => avg_pp_fidelity(params),
            FidelityModel::Heralded => heralded_pp_fidelity(params),
        }
    }

    /// Value as `N → ∞`.
    pub fn limit(self, params: &NoiseModelParams) -> Result<f64> {
        params.validate()?;
        let g = weighted_survival_limit(params.p, params.c())?;
        Ok(match self {
            FidelityModel::Atom => atom_fidelity_from_survival(params.f10, g),
            FidelityModel::PhotonPair => pp_fidelity_from_survival(params, g),
            FidelityModel::Heralded => {
                let NoiseModelParams { f10, f20, f_ms, .. } = *params;
                0.25 + (16.0 * f_ms - 1.0) * (4.0 * f20 - 1.0) * (4.0 * f10 - 1.0) * g / 180.0
            }
        })
    }
}

/// Result of a threshold search.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Threshold {
    /// Smallest integer meeting the condition.
    At(u64),
    /// The condition is never met. `limit` is the best value the scanned
    /// quantity reaches: the `N → ∞` fidelity, or the largest rate ratio.
    Never { limit: f64 },
}

impl Threshold {
    pub fn value(&self) -> Option<u64> {
        match *self {
            Threshold::At(n) => Some(n),
            Threshold::Never { .. } => None,
        }
    }
}

/// Smallest `N` whose averaged fidelity is strictly below `target`.
///
/// The averaged fidelities are non-increasing in `N`, so the search doubles
/// an upper bound and then bisects. `params.n_max` is ignored.
pub fn fidelity_threshold(params: &NoiseModelParams, model: FidelityModel, target: f64) -> Result<Threshold> {
    if !(target > 0.25 && target < 1.0) {
        return Err(Error::param("target", target, "must lie in (1/4, 1)"));
    }
    let below = |n: u64| -> Result<bool> { Ok(model.evaluate(&params.with_n_max(n))? < target) };
    let limit = model.limit(params)?;
    if limit >= target {
        return Ok(Threshold::Never { limit });
    }
    if below(1)? {
        return Ok(Threshold::At(1));
    }
    let mut lo = 1u64;
    let mut hi = 2u64;
    while !below(hi)? {
        lo = hi;
        hi = hi
            .checked_mul(2)
            .ok_or(Error::param("target", target, "threshold beyond u64 range"))?;
    }
    // invariant: !below(lo), below(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if below(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Threshold::At(hi))
}

/// Brute-force evaluations of the averaged fidelities by explicit sums and
/// dense-matrix channel simulation.
pub mod oracle {
    use super::*;
    use crate::entangle::ideal_post_gate_state;
    use crate::qcore::Tensor;

    /// `Σ_k 𝓕₁(k) w_k` term by term.
    pub fn avg_atom_fidelity_sum(params: &NoiseModelParams) -> Result<f64> {
        params.validate()?;
        let w = trial_weights(params.p, params.n_max)?;
        let c = params.c();
        Ok(w.iter()
            .zip(1u64..)
            .map(|(w, k)| w * fidelity_after_k(params.f10, c, k))
            .sum())
    }

    /// States `ε_k(ρ₁₀)` for `k = 1..=n` obtained by applying the Kraus
    /// channel repeatedly.
    pub fn iterated_states(rho10: &DensityMatrix, c: f64, n: u64) -> Result<Vec<DensityMatrix>> {
        let ch = false_addressing_channel(c)?;
        let targets = rho10.register().qubits().to_vec();
        let mut out = Vec::with_capacity(n as usize);
        let mut rho = rho10.clone();
        for _ in 0..n {
            rho = rho.apply_channel(&ch, &targets)?;
            out.push(rho.clone());
        }
        Ok(out)
    }

    /// `Σ_k ⟨Ψ|ε_k(ρ₁₀)|Ψ⟩ w_k` with the channel iterated as matrices.
    pub fn avg_atom_fidelity_matrix(params: &NoiseModelParams) -> Result<f64> {
        params.validate()?;
        let clock = LarmorClock::default();
        let psi = atom_photon_state(Site::One, true, &clock);
        let rho10 = depolarized_ap_state(Site::One, params.f10, &clock)?;
        let w = trial_weights(params.p, params.n_max)?;
        let states = iterated_states(&rho10, params.c(), params.n_max)?;
        let mut total = 0.0;
        for (w, rho) in w.iter().zip(&states) {
            total += w * rho.fidelity_with_pure(&psi)?;
        }
        Ok(total)
    }

    /// `Σ_k ⟨Φ|MS_real(ε_k(ρ₁₀) ⊗ ρ₂₀)|Φ⟩ w_k` with `Φ = MS|ψ_joint⟩`.
    pub fn avg_pp_fidelity_matrix(params: &NoiseModelParams) -> Result<f64> {
        params.validate()?;
        let clock = LarmorClock::default();
        let phi = ideal_post_gate_state(&clock);
        let rho10 = depolarized_ap_state(Site::One, params.f10, &clock)?;
        let rho20 = depolarized_ap_state(Site::Two, params.f20, &clock)?;
        let w = trial_weights(params.p, params.n_max)?;
        let states = iterated_states(&rho10, params.c(), params.n_max)?;
        let mut total = 0.0;
        for (w, rho1) in w.iter().zip(&states) {
            let after = noisy_ms_channel(&rho1.tensor(&rho20)?, params.f_ms)?;
            total += w * after.fidelity_with_pure(&phi)?;
        }
        Ok(total)
    }

    /// Outcome-averaged heralded photon fidelity by projecting each
    /// post-gate state onto the four atomic results.
    pub fn heralded_pp_fidelity_matrix(params: &NoiseModelParams) -> Result<f64> {
        use crate::entangle::{photon_target, project_atoms, BellOutcome};
        params.validate()?;
        let clock = LarmorClock::default();
        let rho10 = depolarized_ap_state(Site::One, params.f10, &clock)?;
        let rho20 = depolarized_ap_state(Site::Two, params.f20, &clock)?;
        let w = trial_weights(params.p, params.n_max)?;
        let states = iterated_states(&rho10, params.c(), params.n_max)?;
        let mut total = 0.0;
        for (w, rho1) in w.iter().zip(&states) {
            let after = noisy_ms_channel(&rho1.tensor(&rho20)?, params.f_ms)?;
            for outcome in BellOutcome::all() {
                let (photons, prob) = project_atoms(&after, outcome)?;
                let target = photon_target(outcome.label(), &clock);
                total += w * prob * photons.fidelity_with_pure(&target)?;
            }
        }
        Ok(total)
    }
}
