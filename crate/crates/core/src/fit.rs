//! Weighted nonlinear least squares (Levenberg–Marquardt with a central
//! difference Jacobian and box bounds) and the two fidelity-vs-`n_max` fits.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::noise::{avg_atom_fidelity, avg_pp_fidelity, NoiseModelParams, ETA_850};

/// Relative step of the central-difference Jacobian.
pub const JACOBIAN_STEP: f64 = 1e-6;
/// Gradient norm below which a fit counts as converged.
pub const GRADIENT_TOL: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 10_000;

/// Bounds of fitted fidelities.
pub const FIDELITY_BOUNDS: (f64, f64) = (0.25, 1.0);
/// Bounds of fitted probabilities.
pub const PROBABILITY_BOUNDS: (f64, f64) = (0.0, 0.1);
/// Starting value of `P_SIA,false`.
pub const P_SIA_GUESS: f64 = 0.005;

/// One measured point `(x, y ± sigma)`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DataPoint {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
}

/// Fidelity measured after post-selecting on at most `n_max` trials.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurvePoint {
    pub n_max: u64,
    pub fidelity: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FidelityCurve {
    points: Vec<CurvePoint>,
}

impl FidelityCurve {
    pub fn new(points: Vec<CurvePoint>) -> Result<Self> {
        for w in points.windows(2) {
            if w[1].n_max <= w[0].n_max {
                return Err(Error::param("n_max", w[1].n_max as f64, "must be strictly increasing"));
            }
        }
        for p in &points {
            if p.n_max == 0 {
                return Err(Error::param("n_max", 0.0, "must be at least 1"));
            }
            if !(0.0..=1.0).contains(&p.fidelity) {
                return Err(Error::param("fidelity", p.fidelity, "must lie in [0, 1]"));
            }
            if !(p.sigma >= 0.0 && p.sigma.is_finite()) {
                return Err(Error::param("sigma", p.sigma, "must be non-negative"));
            }
        }
        Ok(Self { points })
    }

    /// Noise-free curve of `model` on `grid` with a constant `sigma`.
    pub fn synthetic(grid: &[u64], sigma: f64, model: impl Fn(u64) -> Result<f64>) -> Result<Self> {
        let points = grid
            .iter()
            .map(|&n| {
                Ok(CurvePoint {
                    n_max: n,
                    fidelity: model(n)?,
                    sigma,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    fn data(&self) -> Vec<DataPoint> {
        // all-zero sigmas mean an unweighted fit
        let unweighted = self.points.iter().all(|p| p.sigma == 0.0);
        self.points
            .iter()
            .map(|p| DataPoint {
                x: p.n_max as f64,
                y: p.fidelity,
                sigma: if unweighted { 1.0 } else { p.sigma },
            })
            .collect()
    }
}

/// Why the iteration stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Termination {
    /// Projected gradient below [`GRADIENT_TOL`].
    Gradient,
    /// No step reduces the cost any more; the gradient is at the level of
    /// the finite-difference noise.
    Stagnation,
    MaxIterations,
    /// `JᵀWJ` is singular at the solution.
    Singular,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct FitResult {
    pub names: Vec<&'static str>,
    pub params: Vec<f64>,
    /// `None` when the normal matrix is singular.
    pub std_errors: Option<Vec<f64>>,
    pub covariance: Option<Vec<Vec<f64>>>,
    /// `√Σ rᵢ²` of the weighted residuals.
    pub residual_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub converged: bool,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| *n == name).map(|i| self.params[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| *n == name)?;
        self.std_errors.as_ref().map(|e| e[i])
    }
}

/// Weighted residuals `(yᵢ − model(xᵢ))/σᵢ`.
fn residuals<M>(model: &M, data: &[DataPoint], params: &[f64]) -> Result<Vec<f64>>
where
    M: Fn(f64, &[f64]) -> Result<f64>,
{
    data.iter().map(|d| Ok((d.y - model(d.x, params)?) / d.sigma)).collect()
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Central-difference Jacobian of the weighted residuals, one-sided at a
/// bound. Row `i` is residual `i`.
pub fn jacobian<M>(model: &M, data: &[DataPoint], params: &[f64], bounds: &[(f64, f64)]) -> Result<Vec<Vec<f64>>>
where
    M: Fn(f64, &[f64]) -> Result<f64>,
{
    let mut jac = vec![vec![0.0; params.len()]; data.len()];
    for j in 0..params.len() {
        let h = JACOBIAN_STEP * params[j].abs().max(1e-3);
        let (lo, hi) = bounds[j];
        let up = (params[j] + h).min(hi);
        let down = (params[j] - h).max(lo);
        let mut p_up = params.to_vec();
        p_up[j] = up;
        let mut p_down = params.to_vec();
        p_down[j] = down;
        let r_up = residuals(model, data, &p_up)?;
        let r_down = residuals(model, data, &p_down)?;
        for i in 0..data.len() {
            jac[i][j] = (r_up[i] - r_down[i]) / (up - down);
        }
    }
    Ok(jac)
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
pub(crate) fn solve(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &v)| {
            let mut r = row.clone();
            r.push(v);
            r
        })
        .collect();
    let scale = a.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .expect("non-empty");
        if m[pivot][col].abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Singular);
        }
        m.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let f = m[row][col] / m[col][col];
                for k in col..=n {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
    }
    Ok((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

fn invert(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let e: Vec<f64> = (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
            solve(a, &e)
        })
        .collect::<Result<_>>()?;
    Ok((0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect())
}

/// Levenberg–Marquardt minimisation of `Σ ((yᵢ − model(xᵢ, θ))/σᵢ)²` with
/// `θ` clipped to `bounds`.
///
/// The covariance is `(JᵀWJ)⁻¹` without rescaling by the reduced chi-square,
/// so standard errors scale with the supplied sigmas.
pub fn least_squares<M>(
    model: M,
    data: &[DataPoint],
    initial: &[f64],
    bounds: &[(f64, f64)],
    names: &[&'static str],
) -> Result<FitResult>
where
    M: Fn(f64, &[f64]) -> Result<f64>,
{
    let n = initial.len();
    if bounds.len() != n || names.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: bounds.len().min(names.len()),
        });
    }
    if data.len() < n {
        return Err(Error::TooFewPoints {
            needed: n,
            found: data.len(),
        });
    }
    for d in data {
        if !(d.sigma > 0.0 && d.sigma.is_finite()) {
            return Err(Error::param("sigma", d.sigma, "must be positive"));
        }
    }
    for (&x, &(lo, hi)) in initial.iter().zip(bounds) {
        if !(x.is_finite() && lo <= x && x <= hi) {
            return Err(Error::param("initial", x, "must be finite and within bounds"));
        }
    }

    let clip = |x: &mut [f64]| {
        for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
            *v = v.clamp(lo, hi);
        }
    };

    let mut x = initial.to_vec();
    let mut r = residuals(&model, data, &x)?;
    let mut c = cost(&r);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let jac = jacobian(&model, data, &x, bounds)?;
        let (a, g) = normal_equations(&jac, &r);

        // gradient of ½Σr² is Jᵀr; drop components pushing against an active bound
        let blocked: Vec<bool> = (0..n)
            .map(|j| {
                let (lo, hi) = bounds[j];
                (x[j] <= lo && g[j] > 0.0) || (x[j] >= hi && g[j] < 0.0)
            })
            .collect();
        let projected: f64 = (0..n)
            .map(|j| if blocked[j] { 0.0 } else { g[j].abs() })
            .fold(0.0, f64::max);
        if projected < GRADIENT_TOL {
            termination = Termination::Gradient;
            break;
        }

        let mut improved = false;
        while lambda < 1e16 {
            let mut damped = a.clone();
            for j in 0..n {
                damped[j][j] += lambda * a[j][j].max(1e-12);
            }
            let mut neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
            // parameters held at a bound stay there for this step
            for j in (0..n).filter(|&j| blocked[j]) {
                damped[j].fill(0.0);
                for row in damped.iter_mut() {
                    row[j] = 0.0;
                }
                damped[j][j] = 1.0;
                neg_g[j] = 0.0;
            }
            let step = match solve(&damped, &neg_g) {
                Ok(s) => s,
                Err(_) => {
                    lambda *= 4.0;
                    continue;
                }
            };
            let mut trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
            clip(&mut trial);
            let r_trial = residuals(&model, data, &trial)?;
            let c_trial = cost(&r_trial);
            if c_trial < c {
                let moved = trial
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - b).abs() / b.abs().max(1e-3))
                    .fold(0.0, f64::max);
                let rel_drop = (c - c_trial) / c.max(f64::MIN_POSITIVE);
                x = trial;
                r = r_trial;
                c = c_trial;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                if rel_drop < 1e-15 && moved < 1e-12 {
                    termination = Termination::Stagnation;
                }
                break;
            }
            lambda *= 2.0;
        }
        if !improved {
            termination = Termination::Stagnation;
            break;
        }
        if termination == Termination::Stagnation {
            break;
        }
    }

    let jac = jacobian(&model, data, &x, bounds)?;
    let (a, _) = normal_equations(&jac, &r);
    let covariance = invert(&a).ok().filter(|cov| (0..n).all(|i| cov[i][i] >= 0.0));
    if covariance.is_none() {
        termination = Termination::Singular;
    }
    let std_errors = covariance
        .as_ref()
        .map(|cov| (0..n).map(|i| cov[i][i].sqrt()).collect());
    let converged = matches!(termination, Termination::Gradient | Termination::Stagnation);
    Ok(FitResult {
        names: names.to_vec(),
        params: x,
        std_errors,
        covariance,
        residual_norm: c.sqrt(),
        iterations,
        termination,
        converged,
    })
}

/// `JᵀJ` and `Jᵀr`.
fn normal_equations(jac: &[Vec<f64>], r: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = jac.first().map_or(0, Vec::len);
    let mut a = vec![vec![0.0; n]; n];
    let mut g = vec![0.0; n];
    for (row, &ri) in jac.iter().zip(r) {
        for j in 0..n {
            g[j] += row[j] * ri;
            for k in 0..n {
                a[j][k] += row[j] * row[k];
            }
        }
    }
    (a, g)
}

/// Quantities held fixed in the atom fit.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AtomFixed {
    pub p: f64,
    pub eta_850: f64,
}

impl Default for AtomFixed {
    fn default() -> Self {
        Self {
            p: 0.00096,
            eta_850: ETA_850,
        }
    }
}

/// Quantities held fixed in the photon-pair fit.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PpFixed {
    pub f10: f64,
    pub f20: f64,
    pub p: f64,
    pub eta_850: f64,
}

impl Default for PpFixed {
    fn default() -> Self {
        Self {
            f10: 0.945,
            f20: 0.924,
            p: 0.00096,
            eta_850: ETA_850,
        }
    }
}

fn n_from_x(x: f64) -> u64 {
    x.round() as u64
}

fn first_fidelity(curve: &FidelityCurve) -> Result<f64> {
    if curve.points().len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            found: curve.points().len(),
        });
    }
    Ok(curve.points()[0].fidelity.clamp(FIDELITY_BOUNDS.0, FIDELITY_BOUNDS.1))
}

/// Fits `F10` and `P_SIA,false` of the averaged atom fidelity.
pub fn fit_atom_model(curve: &FidelityCurve, fixed: AtomFixed) -> Result<FitResult> {
    let start = first_fidelity(curve)?;
    let model = move |x: f64, th: &[f64]| {
        avg_atom_fidelity(&NoiseModelParams {
            f10: th[0],
            p_sia_false: th[1],
            eta_850: fixed.eta_850,
            p: fixed.p,
            n_max: n_from_x(x),
            ..NoiseModelParams::default()
        })
    };
    least_squares(
        model,
        &curve.data(),
        &[start, P_SIA_GUESS],
        &[FIDELITY_BOUNDS, PROBABILITY_BOUNDS],
        &["f10", "p_sia_false"],
    )
}

/// Photon-pair fit plus the derived single-trial fidelity.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct PpFit {
    pub result: FitResult,
    /// Model at `N = 1` with the fitted parameters.
    pub f_init: f64,
}

fn pp_params(fixed: PpFixed, f_ms: f64, p_sia_false: f64, n_max: u64) -> NoiseModelParams {
    NoiseModelParams {
        f10: fixed.f10,
        f20: fixed.f20,
        f_ms,
        p_sia_false,
        eta_850: fixed.eta_850,
        p: fixed.p,
        n_max,
    }
}

/// Fits `F_MS` and `P_SIA,false` of the averaged photon-pair fidelity.
pub fn fit_pp_model(curve: &FidelityCurve, fixed: PpFixed) -> Result<PpFit> {
    let start = first_fidelity(curve)?;
    let model = move |x: f64, th: &[f64]| avg_pp_fidelity(&pp_params(fixed, th[0], th[1], n_from_x(x)));
    let result = least_squares(
        model,
        &curve.data(),
        &[start, P_SIA_GUESS],
        &[FIDELITY_BOUNDS, PROBABILITY_BOUNDS],
        &["f_ms", "p_sia_false"],
    )?;
    let f_init = avg_pp_fidelity(&pp_params(fixed, result.params[0], result.params[1], 1))?;
    Ok(PpFit { result, f_init })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entangle::BellLabel;
    use crate::noise::weighted_survival;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const GRID: [u64; 9] = [1, 2, 5, 10, 20, 30, 50, 70, 100];

    fn atom_curve(f10: f64, p_sia: f64, sigma: f64) -> FidelityCurve {
        FidelityCurve::synthetic(&GRID, sigma, |n| {
            avg_atom_fidelity(&NoiseModelParams {
                f10,
                p_sia_false: p_sia,
                n_max: n,
                ..NoiseModelParams::default()
            })
        })
        .unwrap()
    }

    fn noisy(curve: &FidelityCurve, rel: f64, rng: &mut ChaCha8Rng) -> FidelityCurve {
        let pts = curve
            .points()
            .iter()
            .map(|p| {
                let sigma = rel * p.fidelity;
                let e = Normal::new(0.0, sigma).unwrap().sample(rng);
                CurvePoint {
                    fidelity: (p.fidelity + e).clamp(0.0, 1.0),
                    sigma,
                    ..*p
                }
            })
            .collect();
        FidelityCurve::new(pts).unwrap()
    }

    #[test]
    fn linear_model_exact() {
        let data: Vec<DataPoint> = (0..6)
            .map(|i| DataPoint {
                x: i as f64,
                y: 2.0 + 0.5 * i as f64,
                sigma: 1.0,
            })
            .collect();
        let fit = least_squares(
            |x, th: &[f64]| Ok(th[0] + th[1] * x),
            &data,
            &[0.0, 0.0],
            &[(-10.0, 10.0), (-10.0, 10.0)],
            &["a", "b"],
        )
        .unwrap();
        assert!(fit.converged);
        assert!((fit.params[0] - 2.0).abs() < 1e-8 && (fit.params[1] - 0.5).abs() < 1e-8);
        assert!(fit.iterations <= 10, "{}", fit.iterations);
    }

    #[test]
    fn quadratic_bowl() {
        // residuals (θ₀ − 1.3) and 2(θ₁ + 0.4) as two "data points"
        let data = [
            DataPoint {
                x: 0.0,
                y: 0.0,
                sigma: 1.0,
            },
            DataPoint {
                x: 1.0,
                y: 0.0,
                sigma: 1.0,
            },
        ];
        let model = |x: f64, th: &[f64]| Ok(if x == 0.0 { th[0] - 1.3 } else { 2.0 * (th[1] + 0.4) });
        for start in [[-4.0, 3.0], [4.5, -4.9], [0.0, 0.0]] {
            let fit = least_squares(model, &data, &start, &[(-5.0, 5.0), (-5.0, 5.0)], &["a", "b"]).unwrap();
            assert!((fit.params[0] - 1.3).abs() < 1e-8 && (fit.params[1] + 0.4).abs() < 1e-8);
        }
    }

    #[test]
    fn coupled_parameter_pinned_at_bound() {
        // unconstrained optimum a = 2 lies outside [0, 1]; b must still settle
        let data: Vec<DataPoint> = (0..6)
            .map(|i| {
                let x = i as f64;
                DataPoint {
                    x,
                    y: 2.0 * x + 0.3 * x * x,
                    sigma: 0.1,
                }
            })
            .collect();
        let model = |x: f64, th: &[f64]| Ok(th[0] * x + th[1] * x * x);
        let fit = least_squares(model, &data, &[0.5, 0.0], &[(0.0, 1.0), (-5.0, 5.0)], &["a", "b"]).unwrap();
        assert!(fit.converged, "{:?}", fit.termination);
        assert!(fit.iterations < 100);
        assert_eq!(fit.params[0], 1.0);
        // best b with a fixed at 1: Σx²(y − x)/Σx⁴
        let (num, den) = data
            .iter()
            .fold((0.0, 0.0), |(n, d), p| (n + p.x.powi(2) * (p.y - p.x), d + p.x.powi(4)));
        assert!((fit.params[1] - num / den).abs() < 1e-8, "{fit:?} {}", num / den);
    }

    #[test]
    fn rejects_bad_input() {
        let data = [DataPoint {
            x: 0.0,
            y: 0.0,
            sigma: 1.0,
        }];
        let m = |_: f64, th: &[f64]| Ok(th[0]);
        assert!(least_squares(m, &data, &[2.0], &[(0.0, 1.0)], &["a"]).is_err());
        assert!(least_squares(m, &data, &[f64::NAN], &[(0.0, 1.0)], &["a"]).is_err());
        let curve = FidelityCurve::new(alloc::vec![
            CurvePoint {
                n_max: 1,
                fidelity: 0.9,
                sigma: 0.01
            },
            CurvePoint {
                n_max: 2,
                fidelity: 0.9,
                sigma: 0.01
            },
        ])
        .unwrap();
        assert!(matches!(
            fit_atom_model(&curve, AtomFixed::default()),
            Err(Error::TooFewPoints { .. })
        ));
        assert!(FidelityCurve::new(alloc::vec![
            CurvePoint {
                n_max: 2,
                fidelity: 0.9,
                sigma: 0.01
            },
            CurvePoint {
                n_max: 2,
                fidelity: 0.9,
                sigma: 0.01
            },
        ])
        .is_err());
    }

    #[test]
    fn singular_problem_reports_no_errors() {
        // θ₁ has no influence on the model
        let data: Vec<DataPoint> = (0..4)
            .map(|i| DataPoint {
                x: i as f64,
                y: 1.0,
                sigma: 0.1,
            })
            .collect();
        let fit = least_squares(
            |_, th: &[f64]| Ok(th[0]),
            &data,
            &[0.5, 0.5],
            &[(0.0, 2.0), (0.0, 1.0)],
            &["a", "b"],
        )
        .unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.termination, Termination::Singular);
        assert!(fit.std_errors.is_none());
    }

    #[test]
    fn atom_fit_noiseless_recovery() {
        let fit = fit_atom_model(&atom_curve(0.945, 0.0056, 0.005), AtomFixed::default()).unwrap();
        assert!(fit.converged, "{:?}", fit.termination);
        assert!((fit.params[0] - 0.945).abs() < 1e-6);
        assert!((fit.params[1] - 0.0056).abs() < 1e-6);
    }

    #[test]
    fn pp_fit_noiseless_recovery() {
        let truth = NoiseModelParams::pp_fit(BellLabel::PsiMinus);
        let curve = FidelityCurve::synthetic(&GRID, 0.005, |n| avg_pp_fidelity(&truth.with_n_max(n))).unwrap();
        let fit = fit_pp_model(&curve, PpFixed::default()).unwrap();
        assert!(fit.result.converged);
        assert!((fit.result.params[0] - 0.915).abs() < 1e-6);
        assert!((fit.result.params[1] - 0.0130).abs() < 1e-6);
        assert!((fit.f_init - 0.797).abs() < 0.005, "{}", fit.f_init);
    }

    #[test]
    fn flat_curve_gives_zero_false_addressing() {
        let curve = atom_curve(0.93, 0.0, 0.005);
        let fit = fit_atom_model(&curve, AtomFixed::default()).unwrap();
        let se = fit.std_error("p_sia_false").unwrap();
        assert!(fit.params[1] <= se, "{} ± {}", fit.params[1], se);
    }

    #[test]
    fn sigma_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = noisy(&atom_curve(0.945, 0.0056, 0.0), 0.005, &mut rng);
        let scaled = FidelityCurve::new(
            base.points()
                .iter()
                .map(|p| CurvePoint {
                    sigma: 3.0 * p.sigma,
                    ..*p
                })
                .collect(),
        )
        .unwrap();
        let a = fit_atom_model(&base, AtomFixed::default()).unwrap();
        let b = fit_atom_model(&scaled, AtomFixed::default()).unwrap();
        for i in 0..2 {
            assert!((a.params[i] - b.params[i]).abs() < 1e-7 * a.params[i].abs().max(1e-3));
            let ratio = b.std_errors.as_ref().unwrap()[i] / a.std_errors.as_ref().unwrap()[i];
            assert!((ratio - 3.0).abs() < 1e-4, "{ratio}");
        }
    }

    #[test]
    fn noisy_recovery_within_three_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let curve = noisy(&atom_curve(0.945, 0.0056, 0.0), 0.005, &mut rng);
        let fit = fit_atom_model(&curve, AtomFixed::default()).unwrap();
        assert!(fit.converged);
        let se = fit.std_errors.clone().unwrap();
        assert!((fit.params[0] - 0.945).abs() < 3.0 * se[0]);
        assert!((fit.params[1] - 0.0056).abs() < 3.0 * se[1]);
    }

    /// `dg/dc` by the quotient rule on the closed form.
    fn dg_dc(p: f64, c: f64, n: u64) -> f64 {
        let nf = n as f64;
        let u = (1.0 - c) * (1.0 - p);
        let h = (1.0 - c) * (1.0 - u.powf(nf));
        let dh = -(1.0 - u.powf(nf)) + (1.0 - c) * nf * u.powf(nf - 1.0) * (1.0 - p);
        let k = p + c * (1.0 - p);
        let dk = 1.0 - p;
        p / (1.0 - (1.0 - p).powf(nf)) * (dh * k - h * dk) / (k * k)
    }

    #[test]
    fn jacobian_matches_analytic_gradient() {
        let fixed = AtomFixed::default();
        let model = |x: f64, th: &[f64]| {
            avg_atom_fidelity(&NoiseModelParams {
                f10: th[0],
                p_sia_false: th[1],
                p: fixed.p,
                eta_850: fixed.eta_850,
                n_max: x.round() as u64,
                ..NoiseModelParams::default()
            })
        };
        let data: Vec<DataPoint> = GRID
            .iter()
            .map(|&n| DataPoint {
                x: n as f64,
                y: 0.0,
                sigma: 1.0,
            })
            .collect();
        let th = [0.945, 0.0056];
        let jac = jacobian(&model, &data, &th, &[FIDELITY_BOUNDS, PROBABILITY_BOUNDS]).unwrap();
        let c = th[1] * fixed.eta_850 / 2.0;
        for (row, &n) in jac.iter().zip(&GRID) {
            // residual = y − model, so the Jacobian is −∂model
            let g = weighted_survival(fixed.p, c, n).unwrap();
            let d_f10 = g;
            let d_p = (th[0] - 0.25) * dg_dc(fixed.p, c, n) * fixed.eta_850 / 2.0;
            assert!((-row[0] - d_f10).abs() <= 1e-4 * d_f10.abs());
            if n > 1 {
                assert!((-row[1] - d_p).abs() <= 1e-4 * d_p.abs(), "n={n} {} {}", -row[1], d_p);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn noiseless_atom_identifiability(f10 in 0.6f64..0.99, p_sia in 0.001f64..0.05) {
            let fit = fit_atom_model(&atom_curve(f10, p_sia, 0.005), AtomFixed::default()).unwrap();
            prop_assert!(fit.converged);
            prop_assert!((fit.params[0] - f10).abs() < 1e-6);
            prop_assert!((fit.params[1] - p_sia).abs() < 1e-6);
        }
    }
}
