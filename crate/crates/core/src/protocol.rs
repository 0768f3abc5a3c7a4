//! Monte Carlo of the twelve-step cell sequence, the detection-efficiency
//! budget, the wavepacket signal-to-background estimator and the parity-scan
//! estimate of the gate fidelity.
//!
//! Time is counted in integer ticks of 0.1 µs so that elapsed times add up
//! exactly and aggregation is independent of summation order.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI};

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};

use crate::entangle::{
    atom_photon_state, photon_target, project_atoms, AtomResult, BellLabel, BellOutcome, LarmorClock, Site,
};
use crate::error::{check_probability, Error, Result};
use crate::fit::solve;
use crate::noise::{depolarized_ap_state, false_addressing_channel, noisy_ms_channel, ETA_850};
use crate::qcore::{CMatrix, DensityMatrix, PureState, Qubit, Register, Tensor, C64};
use crate::tomo::multinomial;

/// Ticks per microsecond.
pub const TICKS_PER_US: u64 = 10;

/// Default seed of every simulation entry point.
pub const DEFAULT_SEED: u64 = 0x5eed_1442;

/// Reset probability of atom 2 by the addressing beam.
pub const P_SIA_RESET_MEASURED: f64 = 0.99976;

/// Detection window of a generation step, used for dark counts.
pub const DETECTION_WINDOW_S: f64 = 2e-6;

/// Repetitions per random stream in [`monte_carlo`].
pub const BLOCK_SIZE: u64 = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StepKind {
    Cool,
    Generate1,
    FluorCheck,
    Reprep2,
    Generate2,
    Pump,
    Balance,
    MSGate,
    Projection,
}

/// Where the sequence goes after a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Step(u8),
    /// The repetition ends with a heralded pair.
    Done,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SequenceStep {
    pub id: u8,
    pub duration_ticks: u64,
    pub kind: StepKind,
    pub on_success: Branch,
    pub on_failure: Branch,
}

impl SequenceStep {
    pub fn duration_us(&self) -> f64 {
        self.duration_ticks as f64 / TICKS_PER_US as f64
    }
}

const fn step(id: u8, duration_ticks: u64, kind: StepKind, on_success: Branch, on_failure: Branch) -> SequenceStep {
    SequenceStep {
        id,
        duration_ticks,
        kind,
        on_success,
        on_failure,
    }
}

/// The sequence. Step 5 fails back to step 4 until `n_max` trials are used,
/// then to step 1.
pub const SEQUENCE: [SequenceStep; 12] = {
    use Branch::{Done, Step as S};
    use StepKind::*;
    [
        step(1, 30, Cool, S(2), S(2)),
        step(2, 20, Generate1, S(3), S(1)),
        step(3, 500, FluorCheck, S(4), S(1)),
        step(4, 45, Reprep2, S(5), S(5)),
        step(5, 20, Generate2, S(6), S(4)),
        step(6, 100, Pump, S(7), S(7)),
        step(7, 100, Balance, S(8), S(8)),
        step(8, 100, Pump, S(9), S(9)),
        step(9, 2200, MSGate, S(10), S(10)),
        step(10, 1000, FluorCheck, S(11), S(1)),
        step(11, 1100, Projection, Done, S(12)),
        step(12, 1100, Projection, Done, S(1)),
    ]
};

fn ticks(ids: core::ops::RangeInclusive<u8>) -> u64 {
    ids.map(|id| SEQUENCE[id as usize - 1].duration_ticks).sum()
}

/// Survival probabilities of the post-selections a raw detector click still
/// has to pass for one atom.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct AtomFilters {
    /// No 850 nm decay (checked at step 3 for atom 1 and step 10 for atom 2).
    pub veto_850: f64,
    /// Balancing projection, checked at step 10.
    pub balance: f64,
    /// Emission from the right initial sublevel, revealed by the final
    /// projection.
    pub mix: f64,
}

impl AtomFilters {
    pub const NONE: Self = Self {
        veto_850: 1.0,
        balance: 1.0,
        mix: 1.0,
    };

    pub fn from_budget(b: &EfficiencyBudget) -> Self {
        Self {
            veto_850: b.eta_850,
            balance: b.eta_balance,
            mix: b.eta_mix,
        }
    }

    pub fn survival(&self) -> f64 {
        self.veto_850 * self.balance * self.mix
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("veto_850", self.veto_850),
            ("balance", self.balance),
            ("mix", self.mix),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::param(name, v, "must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

/// How `p1` and `p2` are split into raw clicks and later post-selection.
///
/// `folded` puts everything into the click probability, so the repetition
/// succeeds with exactly `p1·(1 − (1 − p2)^n_max)`. `from_budget` lets the
/// detector click with `pᵢ / survival` and rejects events at the step where
/// the experiment would, which changes the time spent per repetition.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct HeraldFilters {
    pub atom1: AtomFilters,
    pub atom2: AtomFilters,
}

impl HeraldFilters {
    pub fn folded() -> Self {
        Self {
            atom1: AtomFilters::NONE,
            atom2: AtomFilters::NONE,
        }
    }

    pub fn from_budget(atom1: &EfficiencyBudget, atom2: &EfficiencyBudget) -> Self {
        Self {
            atom1: AtomFilters::from_budget(atom1),
            atom2: AtomFilters::from_budget(atom2),
        }
    }

    pub fn is_folded(&self) -> bool {
        *self == Self::folded()
    }
}

impl Default for HeraldFilters {
    fn default() -> Self {
        Self::folded()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ProtocolParams {
    /// Per-shot probability to generate and detect photon 1.
    pub p1: f64,
    /// Per-trial probability to generate and detect photon 2.
    pub p2: f64,
    pub n_max: u64,
    pub p_sia_false: f64,
    pub p_sia_reset: f64,
    /// Hz, per detection window of a generation step.
    pub dark_count_rate: f64,
    pub rng_seed: u64,
    pub f10: f64,
    pub f20: f64,
    pub f_ms: f64,
    pub eta_850: f64,
    pub filters: HeraldFilters,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            p1: 0.00114,
            p2: 0.00096,
            n_max: 100,
            p_sia_false: 0.0056,
            p_sia_reset: P_SIA_RESET_MEASURED,
            dark_count_rate: 0.0,
            rng_seed: DEFAULT_SEED,
            f10: 0.945,
            f20: 0.924,
            f_ms: 0.926,
            eta_850: ETA_850,
            filters: HeraldFilters::folded(),
        }
    }
}

impl ProtocolParams {
    /// Noise-free sequence with certain detection.
    pub fn ideal() -> Self {
        Self {
            p1: 1.0,
            p2: 1.0,
            p_sia_false: 0.0,
            p_sia_reset: 1.0,
            f10: 1.0,
            f20: 1.0,
            f_ms: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p1", self.p1),
            ("p2", self.p2),
            ("p_sia_false", self.p_sia_false),
            ("p_sia_reset", self.p_sia_reset),
            ("eta_850", self.eta_850),
            ("f_ms", self.f_ms),
        ] {
            check_probability(name, v)?;
        }
        for (name, v) in [("f10", self.f10), ("f20", self.f20)] {
            if !(0.25..=1.0).contains(&v) {
                return Err(Error::param(name, v, "must lie in [1/4, 1]"));
            }
        }
        if self.n_max == 0 {
            return Err(Error::param("n_max", 0.0, "must be at least 1"));
        }
        if !(self.dark_count_rate >= 0.0 && self.dark_count_rate.is_finite()) {
            return Err(Error::param(
                "dark_count_rate",
                self.dark_count_rate,
                "must be non-negative",
            ));
        }
        self.filters.atom1.validate()?;
        self.filters.atom2.validate()?;
        let (q1, q2) = self.raw_click_probabilities();
        if q1 > 1.0 {
            return Err(Error::param("p1", self.p1, "exceeds the filter survival"));
        }
        if q2 > 1.0 {
            return Err(Error::param("p2", self.p2, "exceeds the filter survival"));
        }
        Ok(())
    }

    /// Click probabilities before post-selection.
    pub fn raw_click_probabilities(&self) -> (f64, f64) {
        (
            self.p1 / self.filters.atom1.survival(),
            self.p2 / self.filters.atom2.survival(),
        )
    }

    /// Per-trial probability that false addressing depolarizes atom 1.
    pub fn c(&self) -> f64 {
        self.p_sia_false * self.eta_850 / 2.0
    }

    pub fn dark_click_probability(&self) -> f64 {
        -(-self.dark_count_rate * DETECTION_WINDOW_S).exp_m1()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AbortReason {
    /// No click at step 2.
    Photon1Missed,
    /// Bright result at step 3.
    Decay850,
    /// `n_max` trials without a click.
    TrialsExhausted,
    /// Bright result at step 10.
    StateCheck,
    /// Neither projection at steps 11 and 12 was bright.
    Projection,
}

impl AbortReason {
    pub const ALL: [AbortReason; 5] = [
        AbortReason::Photon1Missed,
        AbortReason::Decay850,
        AbortReason::TrialsExhausted,
        AbortReason::StateCheck,
        AbortReason::Projection,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

/// One repetition of the sequence, from cooling to a herald or an abort.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    pub success: bool,
    /// Photon-2 trials used; 0 when photon 1 was not accepted.
    pub trials_used: u64,
    pub elapsed_ticks: u64,
    pub bell_outcome: Option<BellOutcome>,
    pub photon_pair_state: Option<DensityMatrix>,
    /// Fidelity of the atom-1 pair with its ideal state at the gate.
    pub atom1_fidelity: Option<f64>,
    pub atom1_depolarized: bool,
    pub abort_reason: Option<AbortReason>,
}

impl TrialOutcome {
    pub fn elapsed_us(&self) -> f64 {
        self.elapsed_ticks as f64 / TICKS_PER_US as f64
    }
}

/// States reachable at the gate: atom 1 heralded by photon or dark count,
/// depolarized or not; atom 2 heralded by photon or dark count.
const ATOM1_KINDS: usize = 4;
const ATOM2_KINDS: usize = 2;

fn atom1_kind(dark: bool, hit: bool) -> usize {
    usize::from(dark) * 2 + usize::from(hit)
}

#[derive(Clone, Debug)]
struct GateTable {
    /// Cumulative outcome probabilities in `BellOutcome::all()` order.
    cumulative: [f64; 4],
    states: [Option<DensityMatrix>; 4],
}

/// Sequence simulator with the per-success quantum states precomputed.
#[derive(Clone, Debug)]
pub struct Simulator {
    params: ProtocolParams,
    q1: f64,
    q2: f64,
    dark: f64,
    c: f64,
    atom1_fidelity: [f64; ATOM1_KINDS],
    gate: Vec<GateTable>,
    targets: [PureState; 4],
}

fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    if p <= 0.0 {
        false
    } else if p >= 1.0 {
        true
    } else {
        rng.random::<f64>() < p
    }
}

impl Simulator {
    pub fn new(params: ProtocolParams) -> Result<Self> {
        params.validate()?;
        // analysis frame: Larmor phases rephased to t = 0
        let clock = LarmorClock::default();
        let (q1, q2) = params.raw_click_probabilities();

        let clean1 = depolarized_ap_state(Site::One, params.f10, &clock)?;
        let blank1 = DensityMatrix::maximally_mixed(Site::One.register());
        let hit = false_addressing_channel(1.0)?;
        let mut atom1 = Vec::with_capacity(ATOM1_KINDS);
        for dark in [false, true] {
            for depol in [false, true] {
                let base = if dark { blank1.clone() } else { clean1.clone() };
                atom1.push(if depol {
                    base.apply_channel(&hit, &[Qubit::Atom1, Qubit::PhotonA])?
                } else {
                    base
                });
            }
        }
        let ideal1 = atom_photon_state(Site::One, true, &clock);
        let mut atom1_fidelity = [0.0; ATOM1_KINDS];
        for (f, rho) in atom1_fidelity.iter_mut().zip(&atom1) {
            *f = rho.fidelity_with_pure(&ideal1)?;
        }
        let atom2 = [
            depolarized_ap_state(Site::Two, params.f20, &clock)?,
            DensityMatrix::maximally_mixed(Site::Two.register()),
        ];

        let mut gate = Vec::with_capacity(ATOM1_KINDS * ATOM2_KINDS);
        for rho1 in &atom1 {
            for rho2 in &atom2 {
                let after = noisy_ms_channel(&rho1.tensor(rho2)?, params.f_ms)?;
                let mut cumulative = [0.0; 4];
                let mut states: [Option<DensityMatrix>; 4] = Default::default();
                let mut acc = 0.0;
                for (k, outcome) in BellOutcome::all().into_iter().enumerate() {
                    match project_atoms(&after, outcome) {
                        Ok((state, prob)) => {
                            acc += prob;
                            states[k] = Some(state);
                        }
                        Err(Error::ImpossibleOutcome(_)) => {}
                        Err(e) => return Err(e),
                    }
                    cumulative[k] = acc;
                }
                gate.push(GateTable { cumulative, states });
            }
        }
        let targets = BellOutcome::all().map(|o| photon_target(o.label(), &clock));

        Ok(Self {
            params,
            q1,
            q2,
            dark: params.dark_click_probability(),
            c: params.c(),
            atom1_fidelity,
            gate,
            targets,
        })
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    /// Photon-pair target of `outcome` in the analysis frame.
    pub fn target(&self, outcome: BellOutcome) -> &PureState {
        &self.targets[BellOutcome::all().iter().position(|o| *o == outcome).expect("listed")]
    }

    fn click<R: Rng + ?Sized>(&self, rng: &mut R, q: f64) -> Option<bool> {
        if bernoulli(rng, q) {
            Some(false)
        } else if bernoulli(rng, self.dark) {
            Some(true)
        } else {
            None
        }
    }

    /// Runs one repetition and returns it together with the gate-table
    /// cell of a success.
    fn run_indexed<R: Rng + ?Sized>(&self, rng: &mut R) -> (TrialOutcome, Option<(usize, usize)>) {
        let p = &self.params;
        let f = &p.filters;
        let mut elapsed = ticks(1..=2);
        let abort = |reason, trials, elapsed| TrialOutcome {
            success: false,
            trials_used: trials,
            elapsed_ticks: elapsed,
            bell_outcome: None,
            photon_pair_state: None,
            atom1_fidelity: None,
            atom1_depolarized: false,
            abort_reason: Some(reason),
        };

        let Some(dark1) = self.click(rng, self.q1) else {
            return (abort(AbortReason::Photon1Missed, 0, elapsed), None);
        };
        elapsed += ticks(3..=3);
        if !bernoulli(rng, f.atom1.veto_850) {
            return (abort(AbortReason::Decay850, 0, elapsed), None);
        }

        let trial = ticks(4..=5);
        let mut depolarized = false;
        let mut herald2 = None;
        let mut trials = 0;
        while trials < p.n_max {
            trials += 1;
            elapsed += trial;
            // the reset pulse of every trial may also hit atom 1
            depolarized |= bernoulli(rng, self.c);
            let q = if bernoulli(rng, p.p_sia_reset) { self.q2 } else { 0.0 };
            if let Some(dark) = self.click(rng, q) {
                herald2 = Some(dark);
                break;
            }
        }
        let Some(dark2) = herald2 else {
            return (abort(AbortReason::TrialsExhausted, trials, elapsed), None);
        };

        elapsed += ticks(6..=10);
        let survive = f.atom1.balance * f.atom2.balance * f.atom2.veto_850;
        if !bernoulli(rng, survive) {
            return (abort(AbortReason::StateCheck, trials, elapsed), None);
        }

        let a1 = atom1_kind(dark1, depolarized);
        let a2 = usize::from(dark2);
        let table = &self.gate[a1 * ATOM2_KINDS + a2];
        let u = rng.random::<f64>() * table.cumulative[3];
        let k = table.cumulative.iter().position(|&c| u < c).unwrap_or(3);
        let outcome = BellOutcome::all()[k];

        if !bernoulli(rng, f.atom1.mix * f.atom2.mix) {
            elapsed += ticks(11..=12);
            return (abort(AbortReason::Projection, trials, elapsed), None);
        }
        elapsed += ticks(11..=11);
        if outcome.atomic_result() != (AtomResult::Minus, AtomResult::Minus) {
            elapsed += ticks(12..=12);
        }
        let out = TrialOutcome {
            success: true,
            trials_used: trials,
            elapsed_ticks: elapsed,
            bell_outcome: Some(outcome),
            photon_pair_state: table.states[k].clone(),
            atom1_fidelity: Some(self.atom1_fidelity[a1]),
            atom1_depolarized: depolarized,
            abort_reason: None,
        };
        (out, Some((a1 * ATOM2_KINDS + a2, k)))
    }

    pub fn run<R: Rng + ?Sized>(&self, rng: &mut R) -> TrialOutcome {
        self.run_indexed(rng).0
    }

    /// Random stream of block `block`.
    pub fn block_rng(&self, block: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.params.rng_seed);
        rng.set_stream(block);
        rng
    }

    /// `reps` repetitions on the stream of block `block`.
    pub fn run_block(&self, block: u64, reps: u64) -> McAccumulator {
        let mut rng = self.block_rng(block);
        let mut acc = McAccumulator::new(self.params.n_max);
        for _ in 0..reps {
            let (out, cell) = self.run_indexed(&mut rng);
            acc.record(&out, cell);
        }
        acc
    }

    /// Splits `n_reps` into [`BLOCK_SIZE`] blocks: `(block index, reps)`.
    pub fn blocks(n_reps: u64) -> impl Iterator<Item = (u64, u64)> {
        let n_blocks = n_reps.div_ceil(BLOCK_SIZE);
        (0..n_blocks).map(move |b| (b, BLOCK_SIZE.min(n_reps - b * BLOCK_SIZE)))
    }

    pub fn summarize(&self, acc: &McAccumulator) -> McSummary {
        acc.summary(self)
    }
}

/// Simulates one repetition. Builds a [`Simulator`] on every call; use
/// [`Simulator::run`] in loops.
pub fn run_sequence<R: Rng + ?Sized>(params: &ProtocolParams, rng: &mut R) -> Result<TrialOutcome> {
    Ok(Simulator::new(*params)?.run(rng))
}

/// Integer tallies of a batch of repetitions. Merging is exact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct McAccumulator {
    pub n_reps: u64,
    pub successes: u64,
    pub total_ticks: u64,
    /// Successes by trials used, indexed `0..=n_max`.
    pub trials_used: Vec<u64>,
    pub aborts: [u64; 5],
    /// Successes by gate-table cell and outcome.
    cells: [[u64; 4]; ATOM1_KINDS * ATOM2_KINDS],
}

impl McAccumulator {
    pub fn new(n_max: u64) -> Self {
        Self {
            n_reps: 0,
            successes: 0,
            total_ticks: 0,
            trials_used: vec![0; n_max as usize + 1],
            aborts: [0; 5],
            cells: [[0; 4]; ATOM1_KINDS * ATOM2_KINDS],
        }
    }

    fn record(&mut self, out: &TrialOutcome, cell: Option<(usize, usize)>) {
        self.n_reps += 1;
        self.total_ticks += out.elapsed_ticks;
        if let Some(reason) = out.abort_reason {
            self.aborts[reason.index()] += 1;
        }
        if let Some((c, k)) = cell {
            self.successes += 1;
            self.trials_used[out.trials_used as usize] += 1;
            self.cells[c][k] += 1;
        }
    }

    pub fn merge(&mut self, other: &McAccumulator) {
        self.n_reps += other.n_reps;
        self.successes += other.successes;
        self.total_ticks += other.total_ticks;
        for (a, b) in self.trials_used.iter_mut().zip(&other.trials_used) {
            *a += b;
        }
        for (a, b) in self.aborts.iter_mut().zip(&other.aborts) {
            *a += b;
        }
        for (row, other_row) in self.cells.iter_mut().zip(&other.cells) {
            for (a, b) in row.iter_mut().zip(other_row) {
                *a += b;
            }
        }
    }

    fn summary(&self, sim: &Simulator) -> McSummary {
        let n = self.n_reps as f64;
        let p = if self.n_reps > 0 {
            self.successes as f64 / n
        } else {
            0.0
        };
        let total_us = self.total_ticks as f64 / TICKS_PER_US as f64;
        let mut atom1_sum = 0.0;
        let mut outcomes = Vec::with_capacity(4);
        for (k, outcome) in BellOutcome::all().into_iter().enumerate() {
            let count: u64 = self.cells.iter().map(|row| row[k]).sum();
            let mut mean = CMatrix::zeros(4);
            for (cell, row) in self.cells.iter().enumerate() {
                if row[k] == 0 {
                    continue;
                }
                atom1_sum += row[k] as f64 * sim.atom1_fidelity[cell / ATOM2_KINDS];
                if let Some(state) = &sim.gate[cell].states[k] {
                    mean = &mean + &state.matrix().scale_real(row[k] as f64 / count as f64);
                }
            }
            let mean_state = (count > 0).then(|| DensityMatrix::from_unchecked(mean, photons()));
            let fidelity = mean_state
                .as_ref()
                .map(|s| s.fidelity_with_pure(sim.target(outcome)).expect("photon register"));
            outcomes.push(OutcomeSummary {
                label: outcome.label(),
                count,
                mean_state,
                fidelity,
            });
        }
        let mean_pair_fidelity = (self.successes > 0).then(|| {
            outcomes
                .iter()
                .filter_map(|o| o.fidelity.map(|f| f * o.count as f64))
                .sum::<f64>()
                / self.successes as f64
        });
        McSummary {
            n_reps: self.n_reps,
            successes: self.successes,
            pair_probability: p,
            pair_probability_std_error: if self.n_reps > 0 {
                (p * (1.0 - p) / n).sqrt()
            } else {
                0.0
            },
            total_time_us: total_us,
            mean_time_per_rep_us: if self.n_reps > 0 { total_us / n } else { 0.0 },
            mean_time_per_success_us: (self.successes > 0).then(|| total_us / self.successes as f64),
            rate_estimate: if total_us > 0.0 {
                self.successes as f64 / (total_us * 1e-6)
            } else {
                0.0
            },
            trials_used: self.trials_used.clone(),
            aborts: AbortReason::ALL.map(|r| (r, self.aborts[r.index()])).to_vec(),
            mean_atom1_fidelity: (self.successes > 0).then(|| atom1_sum / self.successes as f64),
            mean_pair_fidelity,
            outcomes,
        }
    }
}

fn photons() -> Register {
    Register::new(&[Qubit::PhotonA, Qubit::PhotonB]).expect("distinct")
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct OutcomeSummary {
    pub label: BellLabel,
    pub count: u64,
    #[cfg_attr(feature = "serde", serde(skip))]
    pub mean_state: Option<DensityMatrix>,
    /// Fidelity of the mean state with the outcome's photon target.
    pub fidelity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct McSummary {
    pub n_reps: u64,
    pub successes: u64,
    pub pair_probability: f64,
    pub pair_probability_std_error: f64,
    pub total_time_us: f64,
    pub mean_time_per_rep_us: f64,
    pub mean_time_per_success_us: Option<f64>,
    /// Successes per second of simulated time.
    pub rate_estimate: f64,
    pub trials_used: Vec<u64>,
    pub aborts: Vec<(AbortReason, u64)>,
    pub mean_atom1_fidelity: Option<f64>,
    pub mean_pair_fidelity: Option<f64>,
    pub outcomes: Vec<OutcomeSummary>,
}

/// Runs `n_reps` repetitions, block `b` on stream `b` of `rng_seed`.
pub fn monte_carlo(params: &ProtocolParams, n_reps: u64) -> Result<McSummary> {
    if n_reps == 0 {
        return Err(Error::param("n_reps", 0.0, "must be at least 1"));
    }
    let sim = Simulator::new(*params)?;
    let mut acc = McAccumulator::new(params.n_max);
    for (block, reps) in Simulator::blocks(n_reps) {
        acc.merge(&sim.run_block(block, reps));
    }
    Ok(sim.summarize(&acc))
}

/// Success probability and mean duration of one repetition, from the
/// branch probabilities of the sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RenewalEstimate {
    pub pair_probability: f64,
    pub mean_time_per_rep_us: f64,
    /// Pairs per second.
    pub rate: f64,
}

/// Expected-value counterpart of [`monte_carlo`]. Exact when atom 1 is never
/// depolarized and there are no dark counts; otherwise it takes the four
/// gate outcomes as equally likely when timing step 12.
pub fn expected_rate(params: &ProtocolParams) -> Result<RenewalEstimate> {
    params.validate()?;
    let (q1, q2) = params.raw_click_probabilities();
    let d = params.dark_click_probability();
    let f = &params.filters;
    let click1 = 1.0 - (1.0 - q1) * (1.0 - d);
    let click2 = 1.0 - (1.0 - q2 * params.p_sia_reset) * (1.0 - d);
    let n = params.n_max as f64;
    let miss_all = (n * (-click2).ln_1p()).exp();
    let loop_len = if click2 > 0.0 { (1.0 - miss_all) / click2 } else { n };
    let state_ok = f.atom1.balance * f.atom2.balance * f.atom2.veto_850;
    let mix = f.atom1.mix * f.atom2.mix;
    let t = |r: core::ops::RangeInclusive<u8>| ticks(r) as f64;

    let projection = mix * (t(11..=11) + 0.75 * t(12..=12)) + (1.0 - mix) * t(11..=12);
    let after_gate = t(6..=10) + state_ok * projection;
    let after_veto = t(4..=5) * loop_len + (1.0 - miss_all) * after_gate;
    let mean_ticks = t(1..=2) + click1 * (t(3..=3) + f.atom1.veto_850 * after_veto);
    let pair_probability = click1 * f.atom1.veto_850 * (1.0 - miss_all) * state_ok * mix;
    let mean_us = mean_ticks / TICKS_PER_US as f64;
    Ok(RenewalEstimate {
        pair_probability,
        mean_time_per_rep_us: mean_us,
        rate: pair_probability / (mean_us * 1e-6),
    })
}

/// Factors of the single-shot detection efficiency of one atom.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct EfficiencyBudget {
    pub eta_850: f64,
    pub eta_mix: f64,
    pub eta_sigma: f64,
    pub eta_halo: f64,
    pub eta_balance: f64,
    pub eta_gate: f64,
    pub eta_fiber: f64,
    pub t_projection: f64,
    pub eta_detector: f64,
}

impl EfficiencyBudget {
    pub fn measured_atom1() -> Self {
        Self {
            eta_850: ETA_850,
            eta_mix: 0.5,
            eta_sigma: 9.0 / 15.0,
            eta_halo: 0.06,
            eta_balance: 2.0 / 3.0,
            eta_gate: 1.0,
            eta_fiber: 0.193,
            t_projection: 0.603,
            eta_detector: 0.91,
        }
    }

    pub fn measured_atom2() -> Self {
        Self {
            eta_gate: 0.82,
            eta_fiber: 0.177,
            t_projection: 0.672,
            ..Self::measured_atom1()
        }
    }

    pub fn factors(&self) -> [(&'static str, f64); 9] {
        [
            ("eta_850", self.eta_850),
            ("eta_mix", self.eta_mix),
            ("eta_sigma", self.eta_sigma),
            ("eta_halo", self.eta_halo),
            ("eta_balance", self.eta_balance),
            ("eta_gate", self.eta_gate),
            ("eta_fiber", self.eta_fiber),
            ("t_projection", self.t_projection),
            ("eta_detector", self.eta_detector),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.factors() {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::param(name, v, "must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

/// Product of all factors.
pub fn detection_efficiency(budget: &EfficiencyBudget) -> Result<f64> {
    budget.validate()?;
    Ok(budget.factors().iter().map(|(_, v)| v).product())
}

/// Free-space and fiber modulator extinction ratios of the addressing beam.
pub const EXTINCTION_FREE: f64 = 2.76e-6;
pub const EXTINCTION_FIBER: f64 = 1.29e-7;

/// Crosstalk of the fluorescence fibers, counts on the wrong fiber over
/// counts on the right one.
pub const CROSSTALK_ATOM1: f64 = 200.0 / 110_000.0;
pub const CROSSTALK_ATOM2: f64 = 400.0 / 150_000.0;

/// Total extinction of two modulators in series.
pub fn extinction_total(r_free: f64, r_fiber: f64) -> f64 {
    r_free * r_fiber
}

/// Readout imperfections. They are reported, not simulated: the sequence
/// treats fluorescence readout as a perfect projection.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ReadoutImperfections {
    pub crosstalk_atom1: f64,
    pub crosstalk_atom2: f64,
    pub extinction: f64,
}

impl Default for ReadoutImperfections {
    fn default() -> Self {
        Self {
            crosstalk_atom1: 0.0,
            crosstalk_atom2: 0.0,
            extinction: 0.0,
        }
    }
}

impl ReadoutImperfections {
    pub fn measured() -> Self {
        Self {
            crosstalk_atom1: CROSSTALK_ATOM1,
            crosstalk_atom2: CROSSTALK_ATOM2,
            extinction: extinction_total(EXTINCTION_FREE, EXTINCTION_FIBER),
        }
    }
}

/// Signal-to-background ratio of a photon arrival histogram.
///
/// Signal is the sum of all counts from `onset_bin` on. Background is the
/// mean count of the bins before the onset times the number of signal bins.
/// Returns `f64::INFINITY` when no count precedes the onset.
pub fn sbr(histogram: &[u64], onset_bin: usize) -> Result<f64> {
    if onset_bin == 0 || onset_bin >= histogram.len() {
        return Err(Error::param(
            "onset_bin",
            onset_bin as f64,
            "needs at least one bin before and one after",
        ));
    }
    let (pre, post) = histogram.split_at(onset_bin);
    let pre_sum: u64 = pre.iter().sum();
    let signal: u64 = post.iter().sum();
    if pre_sum == 0 {
        return Ok(f64::INFINITY);
    }
    let background = pre_sum as f64 / pre.len() as f64 * post.len() as f64;
    Ok(signal as f64 / background)
}

/// Exponential wavepacket on a flat background.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Wavepacket {
    pub signal_counts: u64,
    pub decay_ns: f64,
    pub bin_ns: f64,
    pub n_bins: usize,
    pub onset_bin: usize,
    /// Mean background counts per bin.
    pub background_per_bin: f64,
}

impl Wavepacket {
    /// Signal over the expected background in the signal window.
    pub fn true_sbr(&self) -> f64 {
        self.signal_counts as f64 / (self.background_per_bin * (self.n_bins - self.onset_bin) as f64)
    }
}

/// Samples a histogram of `w`: exponential arrival times after the onset
/// (arrivals past the last bin are dropped) and Poisson background.
pub fn synthetic_histogram<R: Rng + ?Sized>(w: &Wavepacket, rng: &mut R) -> Result<Vec<u64>> {
    if w.onset_bin >= w.n_bins || !(w.decay_ns > 0.0 && w.bin_ns > 0.0) {
        return Err(Error::param(
            "onset_bin",
            w.onset_bin as f64,
            "must lie inside the histogram",
        ));
    }
    let mut hist = vec![0u64; w.n_bins];
    if w.background_per_bin > 0.0 {
        let bg = Poisson::new(w.background_per_bin)
            .map_err(|_| Error::param("background_per_bin", w.background_per_bin, "must be positive"))?;
        for h in hist.iter_mut() {
            *h += bg.sample(rng) as u64;
        }
    }
    let decay = Exp::new(1.0 / w.decay_ns).map_err(|_| Error::param("decay_ns", w.decay_ns, "must be positive"))?;
    for _ in 0..w.signal_counts {
        let bin = w.onset_bin + (decay.sample(rng) / w.bin_ns) as usize;
        if bin < w.n_bins {
            hist[bin] += 1;
        }
    }
    Ok(hist)
}

/// `F_MS = P/2 + A/2` from parity amplitude `A` and population `P`.
pub fn ms_fidelity_from_parity(amplitude: f64, population: f64) -> Result<f64> {
    check_probability("amplitude", amplitude)?;
    check_probability("population", population)?;
    Ok(population / 2.0 + amplitude / 2.0)
}

/// How expectation values are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    /// Exact probabilities.
    Analytic,
    /// Projective measurements per phase point, and for the population.
    Shots(u64),
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ParityScan {
    pub phases: Vec<f64>,
    pub parities: Vec<f64>,
    /// Fitted `A` of `Π(φ) = A·cos(2φ + φ₀) + offset`.
    pub amplitude: f64,
    pub phase_offset: f64,
    pub offset: f64,
    pub population: f64,
    pub fidelity: f64,
}

/// `exp(−i(π/4)(cos φ X + sin φ Y))`.
fn analyzer(phi: f64) -> CMatrix {
    let s = C64::new(0.0, -FRAC_1_SQRT_2);
    let c = C64::new(FRAC_1_SQRT_2, 0.0);
    CMatrix::from_rows(&[
        &[c, s * C64::from_polar(1.0, -phi)],
        &[s * C64::from_polar(1.0, phi), c],
    ])
}

fn atoms() -> Register {
    Register::new(&[Qubit::Atom1, Qubit::Atom2]).expect("distinct")
}

/// Parity `P(00) + P(11) − P(01) − P(10)` of probabilities or counts.
fn parity(p: &[f64]) -> f64 {
    (p[0] + p[3] - p[1] - p[2]) / p.iter().sum::<f64>()
}

/// Noisy gate on both atoms starting in `|00⟩`, then a global analysis pulse
/// of phase `φ` for every entry of `phases`. The gate error depolarizes the
/// two-atom register.
pub fn simulate_parity_scan<R: Rng + ?Sized>(
    f_ms: f64,
    phases: &[f64],
    sampling: Sampling,
    rng: &mut R,
) -> Result<ParityScan> {
    if phases.len() < 4 {
        return Err(Error::TooFewPhases(phases.len()));
    }
    if sampling == Sampling::Shots(0) {
        return Err(Error::param("shots", 0.0, "must be at least 1"));
    }
    let start = PureState::basis(atoms(), 0)?.to_density();
    let rho = noisy_ms_channel(&start, f_ms)?;
    let targets = [Qubit::Atom1, Qubit::Atom2];

    let measure = |rho: &DensityMatrix, rng: &mut R| -> Vec<f64> {
        let probs: Vec<f64> = (0..4).map(|k| rho.matrix()[(k, k)].re.max(0.0)).collect();
        match sampling {
            Sampling::Analytic => probs,
            Sampling::Shots(n) => multinomial(n, &probs, rng),
        }
    };

    let mut parities = Vec::with_capacity(phases.len());
    for &phi in phases {
        let r = analyzer(phi);
        let rotated = rho.apply_unitary(&r.kron(&r), &targets)?;
        parities.push(parity(&measure(&rotated, rng)));
    }
    let pops = measure(&rho, rng);
    let population = (pops[0] + pops[3]) / pops.iter().sum::<f64>();

    // least squares on [cos 2φ, sin 2φ, 1]
    let mut a = vec![vec![0.0; 3]; 3];
    let mut b = vec![0.0; 3];
    for (&phi, &y) in phases.iter().zip(&parities) {
        let row = [(2.0 * phi).cos(), (2.0 * phi).sin(), 1.0];
        for i in 0..3 {
            b[i] += row[i] * y;
            for j in 0..3 {
                a[i][j] += row[i] * row[j];
            }
        }
    }
    let coef = solve(&a, &b)?;
    let amplitude = coef[0].hypot(coef[1]);
    Ok(ParityScan {
        phases: phases.to_vec(),
        parities,
        amplitude,
        phase_offset: (-coef[1]).atan2(coef[0]),
        offset: coef[2],
        population,
        fidelity: population / 2.0 + amplitude / 2.0,
    })
}

/// `n` phases evenly spaced over `[0, π)`.
pub fn phase_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| PI * k as f64 / n as f64).collect()
}
