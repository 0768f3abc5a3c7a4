//! One function per subcommand. Each evaluates library operations and
//! collects the results; no model arithmetic happens here.

use std::path::Path;

use anyhow::Context;
use qrcell_core::entangle::{atom_photon_state, photon_target, BellLabel, LarmorClock, Site};
use qrcell_core::fit::{fit_atom_model, fit_pp_model, AtomFixed, FitResult, PpFixed};
use qrcell_core::noise::{avg_atom_fidelity, avg_pp_fidelity, fidelity_threshold, FidelityModel, Threshold};
use qrcell_core::protocol::{
    detection_efficiency, expected_rate, extinction_total, McSummary, ProtocolParams, Simulator, EXTINCTION_FIBER,
    EXTINCTION_FREE,
};
use qrcell_core::qcore::{PureState, Qubit, Register};
use qrcell_core::rates::{p_pair_asyn, p_pair_limit, p_pair_syn, rate, superiority_threshold, RateKind};
use qrcell_core::tomo::analyze;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Config;
use crate::io::{matrix_json, read_counts, read_curve, Report, Table};

/// Extinction ratio printed next to the two modulator values.
pub const EXTINCTION_TOTAL_PRINTED: f64 = 1.27e-12;

/// Monte Carlo with blocks fanned out over the thread pool and merged in
/// block order.
pub fn run_monte_carlo(params: &ProtocolParams, reps: u64) -> anyhow::Result<McSummary> {
    if reps == 0 {
        anyhow::bail!("--reps must be at least 1");
    }
    let sim = Simulator::new(*params)?;
    let blocks: Vec<(u64, u64)> = Simulator::blocks(reps).collect();
    let parts: Vec<_> = blocks.par_iter().map(|&(b, n)| sim.run_block(b, n)).collect();
    let mut acc = parts[0].clone();
    for p in &parts[1..] {
        acc.merge(p);
    }
    Ok(sim.summarize(&acc))
}

fn opt(v: Option<f64>) -> Value {
    v.map_or(Value::Null, |x| json!(x))
}

pub fn simulate(cfg: &Config, reps: u64) -> anyhow::Result<Report> {
    let params = cfg.effective_protocol();
    let summary = run_monte_carlo(&params, reps)?;
    let eq5 = p_pair_asyn(params.p1, params.p2, params.n_max)?;
    let renewal = expected_rate(&params)?;
    let mut table = Table::new(&[
        "n_reps",
        "successes",
        "pair_probability",
        "std_error",
        "p_pair_closed_form",
        "expected_pair_probability",
        "rate_per_s",
        "expected_rate_per_s",
        "mean_time_per_rep_us",
        "mean_atom1_fidelity",
        "mean_pair_fidelity",
    ]);
    table.push(vec![
        json!(summary.n_reps),
        json!(summary.successes),
        json!(summary.pair_probability),
        json!(summary.pair_probability_std_error),
        json!(eq5),
        json!(renewal.pair_probability),
        json!(summary.rate_estimate),
        json!(renewal.rate),
        json!(summary.mean_time_per_rep_us),
        opt(summary.mean_atom1_fidelity),
        opt(summary.mean_pair_fidelity),
    ]);
    Ok(Report {
        command: "simulate",
        table,
        details: Some(json!({
            "params": params,
            "summary": summary,
            "renewal": renewal,
        })),
        failure: None,
    })
}

pub fn scan_nmax(cfg: &Config, reps: u64) -> anyhow::Result<Report> {
    let params = cfg.effective_protocol();
    let mut columns = vec!["n_max".to_string(), "f_atom1".to_string()];
    columns.extend(cfg.outcomes.iter().map(|o| format!("f_pp_{}", o.label.name())));
    columns.extend(["p_pair", "mc_p_pair", "mc_std_error", "mc_atom1_fidelity"].map(String::from));

    let rows = cfg
        .scan
        .n_max
        .par_iter()
        .map(|&n| -> anyhow::Result<Vec<Value>> {
            let mut row = vec![json!(n), json!(avg_atom_fidelity(&cfg.noise.with_n_max(n))?)];
            for o in &cfg.outcomes {
                row.push(json!(avg_pp_fidelity(&o.params(&cfg.noise).with_n_max(n))?));
            }
            let mc = run_monte_carlo(&ProtocolParams { n_max: n, ..params }, reps)?;
            row.push(json!(p_pair_asyn(params.p1, params.p2, n)?));
            row.push(json!(mc.pair_probability));
            row.push(json!(mc.pair_probability_std_error));
            row.push(opt(mc.mean_atom1_fidelity));
            Ok(row)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(Report {
        command: "scan-nmax",
        table: Table { columns, rows },
        details: None,
        failure: None,
    })
}

pub fn scan_transmission(cfg: &Config) -> anyhow::Result<Report> {
    let p = &cfg.protocol;
    let mut table = Table::new(&["p_t", "length_km", "p_pair_asyn", "p_pair_syn", "p_pair_limit"]);
    for &t in &cfg.scan.transmissions {
        table.push(vec![
            json!(t),
            json!(cfg.scan.channel.length_for_transmission(t)?),
            json!(p_pair_asyn(p.p1 * t, p.p2 * t, p.n_max)?),
            json!(p_pair_syn(p.p1 * t, p.p2 * t)?),
            json!(p_pair_limit(p.p1 * t)?),
        ]);
    }
    Ok(Report {
        command: "scan-transmission",
        table,
        details: None,
        failure: None,
    })
}

fn threshold_cells(t: Threshold) -> [Value; 2] {
    match t {
        Threshold::At(n) => [json!(n), Value::Null],
        Threshold::Never { limit } => [json!("never"), json!(limit)],
    }
}

pub fn thresholds(cfg: &Config) -> anyhow::Result<Report> {
    let t = &cfg.thresholds;
    let mut table = Table::new(&["case", "quantity", "p", "threshold", "never_limit"]);
    let mut fidelity_rows = |p: f64| -> anyhow::Result<()> {
        let base = qrcell_core::noise::NoiseModelParams { p, ..cfg.noise };
        let [v, l] = threshold_cells(fidelity_threshold(&base, FidelityModel::Atom, t.fidelity_target)?);
        table.push(vec![json!("atom1-photon"), json!("fidelity"), json!(p), v, l]);
        for o in &cfg.outcomes {
            let th = fidelity_threshold(&o.params(&base), FidelityModel::PhotonPair, t.fidelity_target)?;
            let [v, l] = threshold_cells(th);
            table.push(vec![
                json!(format!("photon-pair {}", o.label.name())),
                json!("fidelity"),
                json!(p),
                v,
                l,
            ]);
        }
        Ok(())
    };
    fidelity_rows(cfg.noise.p)?;
    if t.alternative_p != cfg.noise.p {
        fidelity_rows(t.alternative_p)?;
    }
    for s in &t.scenarios {
        for kind in [RateKind::FullyAsyn, RateKind::SemiAsyn] {
            let [v, l] = threshold_cells(superiority_threshold(&s.scenario, kind)?);
            table.push(vec![
                json!(s.name),
                json!(format!("{} vs direct", kind.name())),
                json!(s.scenario.p),
                v,
                l,
            ]);
        }
    }
    Ok(Report {
        command: "thresholds",
        table,
        details: Some(json!({ "fidelity_target": t.fidelity_target })),
        failure: None,
    })
}

pub fn rates(cfg: &Config) -> anyhow::Result<Report> {
    let mut table = Table::new(&["scenario", "n_max", "r_direct", "r_semi", "r_full", "ratio"]);
    for s in &cfg.thresholds.scenarios {
        for &n in &cfg.thresholds.rate_n_max {
            let sc = s.scenario.with_n_max(n);
            let direct = rate(&sc, RateKind::Direct)?;
            let full = rate(&sc, RateKind::FullyAsyn)?;
            table.push(vec![
                json!(s.name),
                json!(n),
                json!(direct),
                json!(rate(&sc, RateKind::SemiAsyn)?),
                json!(full),
                json!(full / direct),
            ]);
        }
    }
    Ok(Report {
        command: "rates",
        table,
        details: None,
        failure: None,
    })
}

pub fn budget(cfg: &Config) -> anyhow::Result<Report> {
    let (a, b) = (cfg.budget.atom1, cfg.budget.atom2);
    let mut table = Table::new(&["factor", "atom1", "atom2"]);
    for ((name, x), (_, y)) in a.factors().into_iter().zip(b.factors()) {
        table.push(vec![json!(name), json!(x), json!(y)]);
    }
    table.push(vec![
        json!("product"),
        json!(detection_efficiency(&a)?),
        json!(detection_efficiency(&b)?),
    ]);
    let details = json!({
        "extinction_free": EXTINCTION_FREE,
        "extinction_fiber": EXTINCTION_FIBER,
        "extinction_total": extinction_total(EXTINCTION_FREE, EXTINCTION_FIBER),
        "extinction_total_printed": EXTINCTION_TOTAL_PRINTED,
        "readout_measured": qrcell_core::protocol::ReadoutImperfections::measured(),
        "readout_simulated": cfg.readout,
    });
    Ok(Report {
        command: "budget",
        table,
        details: Some(details),
        failure: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    /// Atom-photon fidelity; fits `f10` and `p_sia_false`.
    Atom,
    /// Photon-pair fidelity; fits `f_ms` and `p_sia_false`.
    Pp,
}

fn fit_table(result: &FitResult) -> Table {
    let mut table = Table::new(&["parameter", "value", "std_error"]);
    for (i, name) in result.names.iter().enumerate() {
        let se = result.std_errors.as_ref().map(|e| e[i]);
        table.push(vec![json!(name), json!(result.params[i]), opt(se)]);
    }
    table
}

pub fn fit(cfg: &Config, input: &Path, model: FitModel) -> anyhow::Result<Report> {
    let file = std::fs::File::open(input).with_context(|| format!("cannot open {}", input.display()))?;
    let curve = read_curve(file)?;
    let n = &cfg.noise;
    let (result, mut table, f_init) = match model {
        FitModel::Atom => {
            let r = fit_atom_model(
                &curve,
                AtomFixed {
                    p: n.p,
                    eta_850: n.eta_850,
                },
            )?;
            let t = fit_table(&r);
            (r, t, None)
        }
        FitModel::Pp => {
            let fixed = PpFixed {
                f10: n.f10,
                f20: n.f20,
                p: n.p,
                eta_850: n.eta_850,
            };
            let r = fit_pp_model(&curve, fixed)?;
            let t = fit_table(&r.result);
            (r.result, t, Some(r.f_init))
        }
    };
    if let Some(f) = f_init {
        table.push(vec![json!("f_init"), json!(f), Value::Null]);
    }
    let failure = (!result.converged).then(|| format!("fit did not converge ({:?})", result.termination));
    Ok(Report {
        command: "fit",
        table,
        details: Some(json!({ "model": model, "result": result, "f_init": f_init })),
        failure,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum TomoTarget {
    /// Atom 1 with its photon.
    Atom1,
    /// Atom 2 with its photon.
    Atom2,
    #[value(name = "psi-")]
    PsiMinus,
    #[value(name = "psi+")]
    PsiPlus,
    #[value(name = "phi-")]
    PhiMinus,
    #[value(name = "phi+")]
    PhiPlus,
}

impl TomoTarget {
    /// Register and ideal state, with Larmor phases rephased to `t = 0`.
    pub fn state(self) -> (Register, PureState) {
        let clock = LarmorClock::default();
        let photons = || Register::new(&[Qubit::PhotonA, Qubit::PhotonB]).expect("distinct");
        let bell = |l: BellLabel| (photons(), photon_target(l, &clock));
        match self {
            TomoTarget::Atom1 => (Site::One.register(), atom_photon_state(Site::One, true, &clock)),
            TomoTarget::Atom2 => (Site::Two.register(), atom_photon_state(Site::Two, true, &clock)),
            TomoTarget::PsiMinus => bell(BellLabel::PsiMinus),
            TomoTarget::PsiPlus => bell(BellLabel::PsiPlus),
            TomoTarget::PhiMinus => bell(BellLabel::PhiMinus),
            TomoTarget::PhiPlus => bell(BellLabel::PhiPlus),
        }
    }
}

pub fn tomography(cfg: &Config, input: &Path, target: TomoTarget, seed: u64) -> anyhow::Result<Report> {
    let (register, state) = target.state();
    let file = std::fs::File::open(input).with_context(|| format!("cannot open {}", input.display()))?;
    let counts = read_counts(file, register)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let result = analyze(&counts, &state, cfg.tomography.n_bootstrap, &mut rng)?;
    let mut table = Table::new(&["quantity", "value", "error"]);
    table.push(vec![
        json!("fidelity"),
        json!(result.fidelity.value),
        json!(result.fidelity.error),
    ]);
    table.push(vec![
        json!("purity"),
        json!(result.purity.value),
        json!(result.purity.error),
    ]);
    table.push(vec![json!("clipped_mass"), json!(result.clipped_mass), Value::Null]);
    Ok(Report {
        command: "tomography",
        table,
        details: Some(json!({
            "n_bootstrap": result.n_bootstrap,
            "rho": matrix_json(&result.rho),
        })),
        failure: None,
    })
}
