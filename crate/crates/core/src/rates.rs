//! Photon-pair probabilities per repetition and the rate comparison between
//! direct transmission and the semi-/fully asynchronous cell.
//!
//! With `x = p·p_t`, `τ = τ₀ + 2L/v` and `τ' = τ₀ + 4L/v`:
//!
//! ```text
//! r_direct = p·p_t² / τ'
//! r_semi   = 0.5·(1 − (1 − x)^n)² / (n·τ)
//! r_full   =     (1 − (1 − x)^n)² / (n·τ)
//! ```

use num_traits::Float;

use crate::error::{check_probability, Error, Result};
use crate::noise::Threshold;

/// Clock period, the repetition time of one photon-2 trial, in seconds.
pub const TAU0: f64 = 4.5e-6;
/// Group velocity in fiber, m/s.
pub const FIBER_SPEED: f64 = 2.04e8;
/// Telecom fiber attenuation, dB/km.
pub const ATTENUATION_DB_PER_KM: f64 = 0.2;
/// Largest `n_max` scanned before a threshold is reported as never reached.
pub const THRESHOLD_CAP: u64 = 1_000_000;

/// `p₁(1 − (1 − p₂)^n)`.
pub fn p_pair_asyn(p1: f64, p2: f64, n_max: u64) -> Result<f64> {
    check_probability("p1", p1)?;
    check_probability("p2", p2)?;
    if n_max == 0 {
        return Err(Error::param("n_max", 0.0, "must be at least 1"));
    }
    if n_max == 1 {
        return Ok(p1 * p2);
    }
    Ok(p1 * -(n_max as f64 * (-p2).ln_1p()).exp_m1())
}

/// `p₁·p₂`.
pub fn p_pair_syn(p1: f64, p2: f64) -> Result<f64> {
    check_probability("p1", p1)?;
    check_probability("p2", p2)?;
    Ok(p1 * p2)
}

/// `n_max → ∞` limit of [`p_pair_asyn`]: the second photon always arrives.
pub fn p_pair_limit(p1: f64) -> Result<f64> {
    check_probability("p1", p1)?;
    Ok(p1)
}

/// Fiber loss plus optional frequency conversion.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct ChannelModel {
    pub attenuation_db_per_km: f64,
    pub conversion_efficiency: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            attenuation_db_per_km: ATTENUATION_DB_PER_KM,
            conversion_efficiency: 1.0,
        }
    }
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.attenuation_db_per_km > 0.0 && self.attenuation_db_per_km.is_finite()) {
            return Err(Error::param(
                "attenuation_db_per_km",
                self.attenuation_db_per_km,
                "must be positive",
            ));
        }
        if !(self.conversion_efficiency > 0.0 && self.conversion_efficiency <= 1.0) {
            return Err(Error::param(
                "conversion_efficiency",
                self.conversion_efficiency,
                "must lie in (0, 1]",
            ));
        }
        Ok(())
    }

    /// `p_t = 10^(−a·L/10)·η_conv`.
    pub fn transmission_for_length(&self, length_km: f64) -> Result<f64> {
        self.validate()?;
        if !(length_km >= 0.0 && length_km.is_finite()) {
            return Err(Error::param("length_km", length_km, "must be non-negative"));
        }
        Ok(10f64.powf(-self.attenuation_db_per_km * length_km / 10.0) * self.conversion_efficiency)
    }

    /// Fiber length whose loss, together with the conversion, gives `p_t`.
    pub fn length_for_transmission(&self, p_t: f64) -> Result<f64> {
        self.validate()?;
        if !(p_t > 0.0 && p_t <= 1.0) {
            return Err(Error::param("p_t", p_t, "must lie in (0, 1]"));
        }
        let fiber = p_t / self.conversion_efficiency;
        if fiber > 1.0 {
            return Err(Error::param("p_t", p_t, "exceeds the conversion efficiency"));
        }
        // `+ 0.0` turns the -0 of a lossless channel into 0
        Ok(-10.0 * fiber.log10() / self.attenuation_db_per_km + 0.0)
    }

    /// Fiber length equivalent to the conversion loss alone.
    pub fn conversion_length_shift(&self) -> Result<f64> {
        self.validate()?;
        Ok(-10.0 * self.conversion_efficiency.log10() / self.attenuation_db_per_km)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RateKind {
    Direct,
    SemiAsyn,
    FullyAsyn,
}

impl RateKind {
    pub fn name(self) -> &'static str {
        match self {
            RateKind::Direct => "direct",
            RateKind::SemiAsyn => "semi_asyn",
            RateKind::FullyAsyn => "fully_asyn",
        }
    }
}

/// Inputs of the rate comparison. Length and transmission are independent
/// fields; [`RateScenario::from_length`] derives one from the other.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct RateScenario {
    /// Single-shot detection probability without transmission loss.
    pub p: f64,
    pub p_t: f64,
    pub tau0: f64,
    pub fiber_speed: f64,
    /// Central station to one end node, in meters.
    pub one_way_length: f64,
    pub n_max: u64,
}

impl Default for RateScenario {
    fn default() -> Self {
        Self::reference()
    }
}

impl RateScenario {
    /// `p = 0.1%`, `p_t = 24%`, `L = 31.4 km`.
    pub fn reference() -> Self {
        Self {
            p: 0.001,
            p_t: 0.24,
            tau0: TAU0,
            fiber_speed: FIBER_SPEED,
            one_way_length: 31_400.0,
            n_max: 1,
        }
    }

    /// Reference scenario with a 0.7 NA objective, `p = 0.34%`.
    pub fn high_na() -> Self {
        Self {
            p: 0.0034,
            ..Self::reference()
        }
    }

    /// Scenario whose transmission follows from the fiber length.
    pub fn from_length(p: f64, length_km: f64, channel: &ChannelModel, n_max: u64) -> Result<Self> {
        let s = Self {
            p,
            p_t: channel.transmission_for_length(length_km)?,
            tau0: TAU0,
            fiber_speed: FIBER_SPEED,
            one_way_length: length_km * 1e3,
            n_max,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_n_max(self, n_max: u64) -> Self {
        Self { n_max, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::param("p", self.p, "must lie in (0, 1]"));
        }
        if !(self.p_t > 0.0 && self.p_t <= 1.0) {
            return Err(Error::param("p_t", self.p_t, "must lie in (0, 1]"));
        }
        if !(self.tau0 > 0.0 && self.tau0.is_finite()) {
            return Err(Error::param("tau0", self.tau0, "must be positive"));
        }
        if !(self.fiber_speed > 0.0 && self.fiber_speed.is_finite()) {
            return Err(Error::param("fiber_speed", self.fiber_speed, "must be positive"));
        }
        if !(self.one_way_length >= 0.0 && self.one_way_length.is_finite()) {
            return Err(Error::param(
                "one_way_length",
                self.one_way_length,
                "must be non-negative",
            ));
        }
        if self.n_max == 0 {
            return Err(Error::param("n_max", 0.0, "must be at least 1"));
        }
        Ok(())
    }

    /// `τ_C = 2L/v`: photon out plus classical answer back.
    pub fn communication_time(&self) -> f64 {
        2.0 * self.one_way_length / self.fiber_speed
    }

    /// `τ = τ₀ + τ_C`.
    pub fn tau(&self) -> f64 {
        self.tau0 + self.communication_time()
    }

    /// `τ'`, with twice the length for direct transmission.
    pub fn tau_direct(&self) -> f64 {
        self.tau0 + 2.0 * self.communication_time()
    }
}

/// Pair rate in s⁻¹.
pub fn rate(scenario: &RateScenario, kind: RateKind) -> Result<f64> {
    scenario.validate()?;
    let s = scenario;
    Ok(match kind {
        RateKind::Direct => s.p * s.p_t * s.p_t / s.tau_direct(),
        RateKind::SemiAsyn => 0.5 * success_sq(s) / (s.n_max as f64 * s.tau()),
        RateKind::FullyAsyn => success_sq(s) / (s.n_max as f64 * s.tau()),
    })
}

/// `(1 − (1 − p·p_t)^n)²`
fn success_sq(s: &RateScenario) -> f64 {
    let x = s.p * s.p_t;
    let hit = -(s.n_max as f64 * (-x).ln_1p()).exp_m1();
    hit * hit
}

/// Smallest `n_max` for which `kind` is at least as fast as direct
/// transmission.
///
/// The asynchronous rates are bounded by `k/(n·τ)` with `k = 1/2` (semi) or
/// `1` (fully), so no `n > k/(τ·r_direct)` can qualify and the scan stops
/// there or at [`THRESHOLD_CAP`]. When nothing qualifies, the largest
/// rate ratio seen is reported.
pub fn superiority_threshold(scenario: &RateScenario, kind: RateKind) -> Result<Threshold> {
    let prefactor = match kind {
        RateKind::Direct => {
            return Err(Error::param("kind", 0.0, "direct transmission has no threshold"));
        }
        RateKind::SemiAsyn => 0.5,
        RateKind::FullyAsyn => 1.0,
    };
    let direct = rate(scenario, RateKind::Direct)?;
    let bound = (prefactor / (scenario.tau() * direct)).floor();
    let last = if bound >= THRESHOLD_CAP as f64 {
        THRESHOLD_CAP
    } else {
        bound as u64
    };
    let mut best = 0.0f64;
    for n in 1..=last {
        let r = rate(&scenario.with_n_max(n), kind)?;
        if r >= direct {
            return Ok(Threshold::At(n));
        }
        best = best.max(r / direct);
    }
    Ok(Threshold::Never { limit: best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn pair_probabilities() {
        assert_eq!(p_pair_asyn(0.3, 0.7, 1).unwrap(), p_pair_syn(0.3, 0.7).unwrap());
        assert!(rel(p_pair_asyn(0.00114, 0.00096, 100).unwrap(), 1.04e-4) < 0.005);
        assert!(rel(p_pair_asyn(0.00114, 0.00096, 10_000_000).unwrap(), 0.00114) < 1e-12);
        assert!(rel(p_pair_syn(0.00114, 0.00096).unwrap(), 1.0944e-6) < 1e-12);
        assert_eq!(p_pair_syn(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(p_pair_syn(0.5, 0.0).unwrap(), 0.0);
        assert!(p_pair_asyn(0.5, 0.5, 0).is_err());
    }

    #[test]
    fn channel_conversions() {
        let ch = ChannelModel::default();
        assert_eq!(ch.length_for_transmission(1.0).unwrap(), 0.0);
        let l = ch.length_for_transmission(0.24).unwrap();
        assert!((l - 30.99).abs() < 0.01, "{l}");
        let conv = ChannelModel {
            conversion_efficiency: 0.6,
            ..ch
        };
        assert!((conv.conversion_length_shift().unwrap() - 11.09).abs() < 0.01);
        assert!(conv.length_for_transmission(0.7).is_err());
        assert!(ch.length_for_transmission(0.0).is_err());
    }

    #[test]
    fn direct_rate_reference() {
        let r = rate(&RateScenario::reference(), RateKind::Direct).unwrap();
        assert!(rel(r, 0.093) < 0.01, "{r}");
    }

    #[test]
    fn single_trial_numerator() {
        let s = RateScenario::reference();
        let r = rate(&s, RateKind::SemiAsyn).unwrap();
        let x = s.p * s.p_t;
        assert!(rel(r * s.tau(), 0.5 * x * x) < 1e-9);
    }

    #[test]
    fn reference_thresholds() {
        let base = RateScenario::reference();
        let hi = RateScenario::high_na();
        let got = [
            superiority_threshold(&base, RateKind::FullyAsyn).unwrap(),
            superiority_threshold(&base, RateKind::SemiAsyn).unwrap(),
            superiority_threshold(&hi, RateKind::FullyAsyn).unwrap(),
            superiority_threshold(&hi, RateKind::SemiAsyn).unwrap(),
        ];
        assert_eq!(
            got,
            [
                Threshold::At(578),
                Threshold::At(1395),
                Threshold::At(170),
                Threshold::At(410)
            ]
        );
        assert!(superiority_threshold(&base, RateKind::Direct).is_err());
    }

    #[test]
    fn never_reports_best_ratio() {
        let s = RateScenario {
            p: 1e-7,
            ..RateScenario::reference()
        };
        match superiority_threshold(&s, RateKind::SemiAsyn).unwrap() {
            Threshold::Never { limit } => assert!(limit > 0.0 && limit < 1.0),
            t => panic!("{t:?}"),
        }
    }

    #[test]
    fn degenerate_scenario_terminates() {
        let s = RateScenario {
            p: 0.01,
            p_t: 1.0,
            one_way_length: 0.0,
            ..RateScenario::reference()
        };
        // without a channel τ = τ', and (1 − (1 − p)^n)²/n < p for every n
        let t = superiority_threshold(&s, RateKind::FullyAsyn).unwrap();
        assert!(matches!(t, Threshold::Never { .. }));
    }

    proptest! {
        #[test]
        fn length_round_trip(len in 0.0f64..200.0, conv in 0.05f64..=1.0) {
            let ch = ChannelModel { conversion_efficiency: conv, ..ChannelModel::default() };
            let pt = ch.transmission_for_length(len).unwrap();
            prop_assert!((ch.length_for_transmission(pt).unwrap() - len).abs() < 1e-9);
        }

        #[test]
        fn asyn_bounded_and_monotone(p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0, n in 1u64..10_000) {
            let a = p_pair_asyn(p1, p2, n).unwrap();
            prop_assert!(a >= 0.0 && a <= p1 * (1.0 + 1e-15));
            prop_assert!(p_pair_asyn(p1, p2, n + 1).unwrap() >= a);
        }

        #[test]
        fn semi_below_full(p in 1e-5f64..=1.0, pt in 1e-3f64..=1.0, len in 0.0f64..1e5, n in 1u64..5000) {
            let s = RateScenario { p, p_t: pt, one_way_length: len, n_max: n, ..RateScenario::reference() };
            let semi = rate(&s, RateKind::SemiAsyn).unwrap();
            let full = rate(&s, RateKind::FullyAsyn).unwrap();
            prop_assert!(semi <= full);
            prop_assert!(rel(full, 2.0 * semi) < 1e-15);
        }
    }

    #[test]
    fn threshold_monotone_in_p_and_pt() {
        // more p lowers the threshold; more transmission favours direct
        // transmission and raises it
        let n = |t: Threshold| t.value().unwrap_or(u64::MAX);
        let ps = [0.0005, 0.001, 0.002, 0.0034, 0.01];
        let pts = [0.1, 0.24, 0.5, 0.78, 1.0];
        for kind in [RateKind::SemiAsyn, RateKind::FullyAsyn] {
            for pt in pts {
                let ts: Vec<u64> = ps
                    .iter()
                    .map(|&p| {
                        n(superiority_threshold(
                            &RateScenario {
                                p,
                                p_t: pt,
                                ..RateScenario::reference()
                            },
                            kind,
                        )
                        .unwrap())
                    })
                    .collect();
                assert!(ts.windows(2).all(|w| w[1] <= w[0]), "{kind:?} pt={pt} {ts:?}");
            }
            for p in ps {
                let ts: Vec<u64> = pts
                    .iter()
                    .map(|&pt| {
                        n(superiority_threshold(
                            &RateScenario {
                                p,
                                p_t: pt,
                                ..RateScenario::reference()
                            },
                            kind,
                        )
                        .unwrap())
                    })
                    .collect();
                assert!(ts.windows(2).all(|w| w[1] >= w[0]), "{kind:?} p={p} {ts:?}");
            }
        }
    }
}
