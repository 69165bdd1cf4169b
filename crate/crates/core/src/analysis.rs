//! Reference solutions and diagnostics: duality-gap certification, boundary
//! set classification, identification detection and bounds, local-rate
//! fitting, and oscillation statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{self, EngineError, SolverTrace, TraceRow};
use crate::linalg::{self, LinalgError};
use crate::model::{L1LsInstance, ModelError, SmoothOracle};
use crate::prox::sgn;
use crate::scalar::Scalar;
use crate::schedule::{restart_signal, Feedback, MomentumSpec, ScheduleError, ScheduleSpec};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("reference solve exhausted {horizon} iterations before reaching the target gap (best gap {best_gap:e})")]
    ReferenceHorizonExhausted { horizon: u64, best_gap: f64 },
    #[error("identification analysis needs dense snapshots: {0}")]
    NeedsDenseSnapshots(String),
    #[error("not enough usable points: got {got}, need {need}")]
    TooFewPoints { got: usize, need: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// High-accuracy solution with a duality-gap certificate.
///
/// `f_star` follows the certified-lower-bound convention
/// `f_star = F(x_star) - gap(x_star)`, so measured gaps against it are
/// never negative.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceSolution<T> {
    pub x_star: Vec<T>,
    #[serde(rename = "F_star")]
    pub f_star: T,
    pub duality_gap: T,
    /// Gradient of the smooth part at the solution (constant over the
    /// solution set).
    pub h_star: Vec<T>,
    pub objective_at_solution: T,
    pub iterations: u64,
    pub gap_tol: T,
}

/// Duality gap of the l1 least-squares problem at `x`, from the scaled
/// residual dual point: with `r = Ax - b` and `s = min(1, rho / ||A^T r||_inf)`,
/// `nu = s r` is dual feasible and
/// `gap(x) = F(x) + ||nu||^2 / 2 + <b, nu> >= F(x) - F*`.
///
/// Returns `(gap, F(x))`.
pub fn duality_gap<T: Scalar>(
    inst: &L1LsInstance<T>,
    x: &[T],
) -> Result<(T, T), AnalysisError> {
    if !(inst.rho() > T::zero()) {
        return Err(AnalysisError::InvalidInput(
            "duality-gap certificate requires rho > 0".into(),
        ));
    }
    let r = inst.residual(x)?;
    let l1 = x.iter().fold(T::zero(), |acc, v| acc + v.abs());
    let objective = linalg::norm_sq(&r) * T::from_f64(0.5) + inst.rho() * l1;
    let atr = inst.matrix().matvec_transpose(&r)?;
    let atr_inf = linalg::inf_norm(&atr);
    let scale = if atr_inf > inst.rho() {
        inst.rho() / atr_inf
    } else {
        T::one()
    };
    let mut gap = objective;
    for (ri, bi) in r.iter().zip(inst.offset()) {
        let nu = scale * *ri;
        gap += nu * nu * T::from_f64(0.5) + *bi * nu;
    }
    Ok((gap.max(T::zero()), objective))
}

pub const REFERENCE_DEFAULT_HORIZON: u64 = 500_000;

/// Certified solve to duality gap `gap_tol` via restarted accelerated
/// forward-backward iterations from zero.
pub fn reference_solve<T: Scalar>(
    inst: &L1LsInstance<T>,
    gap_tol: T,
) -> Result<ReferenceSolution<T>, AnalysisError> {
    reference_solve_with_horizon(inst, gap_tol, REFERENCE_DEFAULT_HORIZON)
}

pub fn reference_solve_with_horizon<T: Scalar>(
    inst: &L1LsInstance<T>,
    gap_tol: T,
    horizon: u64,
) -> Result<ReferenceSolution<T>, AnalysisError> {
    if !(gap_tol > T::zero()) {
        return Err(AnalysisError::InvalidInput("gap_tol must be positive".into()));
    }
    let problem = inst.problem();
    let spec = ScheduleSpec::adaptive_restart(MomentumSpec::FistaBt);
    let mut schedule = spec.build(inst.lipschitz_constant(), None)?;
    let mut state = engine::SolverState::initial(vec![T::zero(); problem.dim()]);
    let mut signal = false;
    let mut best_gap = T::infinity();
    for k in 1..=horizon {
        let params = schedule.next_params(
            k,
            &Feedback {
                restart_signal: signal,
                support: &[],
            },
        )?;
        let (gap, objective) = duality_gap(inst, &state.x_curr)?;
        if gap <= gap_tol {
            let h_star = inst.gradient(&state.x_curr);
            return Ok(ReferenceSolution {
                f_star: objective - gap,
                duality_gap: gap,
                h_star,
                objective_at_solution: objective,
                iterations: k - 1,
                gap_tol,
                x_star: state.x_curr,
            });
        }
        best_gap = best_gap.min(gap);
        let next = engine::ifbs_step(&problem, &state, params.alpha, params.lambda)?;
        signal = restart_signal(&next.y_curr, &next.x_curr, &state.x_curr)?;
        state = next;
    }
    Err(AnalysisError::ReferenceHorizonExhausted {
        horizon,
        best_gap: best_gap.as_f64(),
    })
}

/// Partition of the coordinates by the constant gradient `h*`:
/// `E` collects indices with `rho - |h*_i| <= threshold` (the boundary set
/// that can carry support), `D` the rest (forced to zero), with margin
/// `omega = min_D (rho - |h*_i|)`.
#[derive(Debug, Clone, Serialize)]
pub struct DeClassification<T> {
    #[serde(rename = "D")]
    pub d: Vec<usize>,
    #[serde(rename = "E")]
    pub e: Vec<usize>,
    /// `None` when `D` is empty (infinite margin).
    pub omega: Option<T>,
    pub threshold: T,
}

pub const DEFAULT_E_THRESHOLD: f64 = 1e-4;

pub fn classify_de<T: Scalar>(
    h_star: &[T],
    rho: T,
    threshold: T,
) -> Result<DeClassification<T>, AnalysisError> {
    if !(rho > T::zero()) {
        return Err(AnalysisError::InvalidInput("rho must be positive".into()));
    }
    if !(threshold > T::zero()) {
        return Err(AnalysisError::InvalidInput("threshold must be positive".into()));
    }
    let mut d = Vec::new();
    let mut e = Vec::new();
    let mut omega: Option<T> = None;
    for (i, &h) in h_star.iter().enumerate() {
        let margin = rho - h.abs();
        if margin <= threshold {
            e.push(i);
        } else {
            d.push(i);
            omega = Some(match omega {
                Some(w) => w.min(margin),
                None => margin,
            });
        }
    }
    Ok(DeClassification {
        d,
        e,
        omega,
        threshold,
    })
}

/// Inputs for the explicit identification bounds. All quantities refer to
/// the run's first iterates (`x^1 = x^0` under the default initialization)
/// and to a constant momentum band `0 < alpha_lower <= alpha_upper < 1`.
#[derive(Debug, Clone, Copy)]
pub struct BoundInputs<T> {
    pub rho: T,
    pub lambda1: T,
    pub lipschitz: T,
    pub alpha_lower: T,
    pub alpha_upper: T,
    pub alpha1: T,
    /// `F(x^1) - F*`.
    pub objective_gap_x1: T,
    /// `||x^1 - x^0||^2`.
    pub delta1_sq: T,
    /// `||x^1 - x*||^2`.
    pub dist_x1_sq: T,
    /// `||x^0 - x*||^2`.
    pub dist_x0_sq: T,
    /// Margin of the `D` set.
    pub omega: T,
}

/// Explicit upper bounds `(bound_K_E, bound_K_D)` on the iterations after
/// which the boundary signs are locked (`K_E`) and the complement support
/// has vanished (`K_D`).
pub fn identification_bounds<T: Scalar>(inp: &BoundInputs<T>) -> Result<(T, T), AnalysisError> {
    if !(inp.alpha_lower > T::zero()) {
        return Err(AnalysisError::InvalidInput(
            "alpha_lower must be positive (the bound divides by it)".into(),
        ));
    }
    if inp.alpha_lower > inp.alpha_upper || !(inp.alpha_upper < T::one()) {
        return Err(AnalysisError::InvalidInput(
            "need 0 < alpha_lower <= alpha_upper < 1".into(),
        ));
    }
    if !(inp.lambda1 > T::zero()) || !(inp.rho > T::zero()) || !(inp.lipschitz > T::zero()) {
        return Err(AnalysisError::InvalidInput(
            "rho, lambda1 and the Lipschitz constant must be positive".into(),
        ));
    }
    if !(inp.omega > T::zero()) || !inp.omega.is_finite() {
        return Err(AnalysisError::InvalidInput(
            "omega must be positive and finite".into(),
        ));
    }
    let two = T::from_f64(2.0);
    let start_energy = inp.objective_gap_x1 + inp.alpha1 / (two * inp.lambda1) * inp.delta1_sq;
    let bracket = two * inp.alpha_upper * (T::one() + inp.alpha_upper) * start_energy
        / (inp.alpha_lower * (T::one() - inp.alpha_upper) * inp.lipschitz * inp.lipschitz)
        + inp.dist_x1_sq
        - inp.alpha_upper * inp.dist_x0_sq;
    let tail = inp.alpha_lower / (T::one() - inp.alpha_lower);
    let k_e = bracket / (inp.rho * inp.rho * inp.lambda1 * inp.lambda1) + tail;
    let k_d = bracket / (inp.omega * inp.omega * inp.lambda1 * inp.lambda1) + tail + two;
    Ok((k_e, k_d))
}

fn start_energy_gap<T: Scalar>(objective_gap_x1: T, alpha1: T, lambda1: T, delta1_sq: T) -> T {
    objective_gap_x1 + alpha1 / (T::from_f64(2.0) * lambda1) * delta1_sq
}

/// Closed-form bound `2 (E_1 - F*) / (2 L (1 - alpha_upper) - 1)` on
/// `sum_k ||Delta_k||^2`; `None` when `2 L (1 - alpha_upper) <= 1`.
///
/// Warning: the constant overshoots what the energy decrement certifies when
/// `L (1 - alpha_upper) > 1` and runs can exceed it in that regime; prefer
/// [`certified_step_sum_bound`] for a guarantee.
pub fn step_sum_bound_loose<T: Scalar>(
    objective_gap_x1: T,
    alpha1: T,
    lambda1: T,
    delta1_sq: T,
    lipschitz: T,
    alpha_upper: T,
) -> Option<T> {
    let two = T::from_f64(2.0);
    let denom = two * lipschitz * (T::one() - alpha_upper) - T::one();
    if denom <= T::zero() {
        return None;
    }
    Some(two / denom * start_energy_gap(objective_gap_x1, alpha1, lambda1, delta1_sq))
}

/// Closed-form bound `2 (E_1 - F*) / (L^2 alpha_lower (1 - alpha_upper))` on
/// `sum_k ||Delta_k||^2` for momentum bounded below by `alpha_lower > 0`.
///
/// Warning: carries the same caveat as [`step_sum_bound_loose`], amplified by
/// a factor of `L`; prefer [`certified_step_sum_bound_banded`].
pub fn step_sum_bound_banded<T: Scalar>(
    objective_gap_x1: T,
    alpha1: T,
    lambda1: T,
    delta1_sq: T,
    lipschitz: T,
    alpha_lower: T,
    alpha_upper: T,
) -> Option<T> {
    if !(alpha_lower > T::zero()) || !(alpha_upper < T::one()) {
        return None;
    }
    let two = T::from_f64(2.0);
    let denom = lipschitz * lipschitz * alpha_lower * (T::one() - alpha_upper);
    Some(two / denom * start_energy_gap(objective_gap_x1, alpha1, lambda1, delta1_sq))
}

/// Guaranteed bound `2 (E_1 - F*) / (L (1 - alpha_upper))` on
/// `sum_{k>=2} ||Delta_k||^2`, obtained by telescoping the per-iteration
/// energy decrement: each iteration pays at least
/// `(1 - alpha_{k+1}) / (2 lambda_k) ||Delta_{k+1}||^2` out of the energy
/// budget `E_1 - F*`, and `1 / lambda_k >= L`.
///
/// Requires `alpha_k in [0, alpha_upper]` with `alpha_upper < 1` and
/// nondecreasing `lambda_k <= 1/L`.
pub fn certified_step_sum_bound<T: Scalar>(
    objective_gap_x1: T,
    alpha1: T,
    lambda1: T,
    delta1_sq: T,
    lipschitz: T,
    alpha_upper: T,
) -> Option<T> {
    if !(alpha_upper < T::one()) {
        return None;
    }
    let two = T::from_f64(2.0);
    let denom = lipschitz * (T::one() - alpha_upper);
    Some(two / denom * start_energy_gap(objective_gap_x1, alpha1, lambda1, delta1_sq))
}

/// Guaranteed bound `2 (E_1 - F*) / (L alpha_lower (1 - alpha_upper))` on
/// `sum_k ||Delta_k||^2` when the momentum additionally stays at or above
/// `alpha_lower > 0`: the energy decrement pays at least
/// `L alpha_k (1 - alpha_k) / 2 ||Delta_k||^2` per iteration.
pub fn certified_step_sum_bound_banded<T: Scalar>(
    objective_gap_x1: T,
    alpha1: T,
    lambda1: T,
    delta1_sq: T,
    lipschitz: T,
    alpha_lower: T,
    alpha_upper: T,
) -> Option<T> {
    if !(alpha_lower > T::zero()) || !(alpha_upper < T::one()) {
        return None;
    }
    let two = T::from_f64(2.0);
    let denom = lipschitz * alpha_lower * (T::one() - alpha_upper);
    Some(two / denom * start_energy_gap(objective_gap_x1, alpha1, lambda1, delta1_sq))
}

/// Measured identification iterations over a densely-snapshotted run.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdentificationTimes {
    /// Least recorded `K` such that for every recorded `k > K` the prox
    /// argument's signs on `E` agree with `-sgn(h*)`. `None` when the last
    /// recorded iterate still violates the condition.
    #[serde(rename = "K_sign")]
    pub k_sign: Option<u64>,
    /// Same for `x_i^k = y_i^k = 0` on all of `D` (exact zeros).
    #[serde(rename = "K_support")]
    pub k_support: Option<u64>,
    /// Recorded iteration range the verdicts refer to.
    pub window: (u64, u64),
}

pub fn detect_identification<T: Scalar>(
    trace: &SolverTrace<T>,
    de: &DeClassification<T>,
    h_star: &[T],
) -> Result<IdentificationTimes, AnalysisError> {
    match trace.snapshot_stride {
        Some(1) => {}
        Some(s) => {
            return Err(AnalysisError::NeedsDenseSnapshots(format!(
                "trace was recorded with snapshot stride {s}; rerun with stride 1"
            )))
        }
        None => {
            return Err(AnalysisError::NeedsDenseSnapshots(
                "trace carries no iterate snapshots; rerun with snapshot stride 1".into(),
            ))
        }
    }
    if trace.snapshots.is_empty() {
        return Err(AnalysisError::NeedsDenseSnapshots(
            "trace contains zero snapshots".into(),
        ));
    }
    let window = (
        trace.snapshots.first().unwrap().k,
        trace.snapshots.last().unwrap().k,
    );
    let mut last_sign_bad: Option<u64> = None;
    let mut last_support_bad: Option<u64> = None;
    for snap in &trace.snapshots {
        let sign_ok = de
            .e
            .iter()
            .all(|&i| sgn(snap.z[i]) == -sgn(h_star[i]));
        if !sign_ok {
            last_sign_bad = Some(snap.k);
        }
        let support_ok = de
            .d
            .iter()
            .all(|&i| snap.x[i] == T::zero() && snap.y[i] == T::zero());
        if !support_ok {
            last_support_bad = Some(snap.k);
        }
    }
    let verdict = |last_bad: Option<u64>| -> Option<u64> {
        match last_bad {
            Some(k) if k >= window.1 => None,
            Some(k) => Some(k.max(window.0)),
            None => Some(window.0),
        }
    };
    Ok(IdentificationTimes {
        k_sign: verdict(last_sign_bad),
        k_support: verdict(last_support_bad),
        window,
    })
}

/// Combined manifold diagnostics for one run.
#[derive(Debug, Clone, Serialize)]
pub struct ManifoldReport<T> {
    #[serde(rename = "D")]
    pub d: Vec<usize>,
    #[serde(rename = "E")]
    pub e: Vec<usize>,
    pub omega: Option<T>,
    pub e_threshold: T,
    #[serde(rename = "K_sign")]
    pub k_sign: Option<u64>,
    #[serde(rename = "K_support")]
    pub k_support: Option<u64>,
    pub window: (u64, u64),
    #[serde(rename = "bound_K_E")]
    pub bound_k_e: Option<T>,
    #[serde(rename = "bound_K_D")]
    pub bound_k_d: Option<T>,
    /// Present when no explicit bound applies to the run's policy.
    pub note: Option<String>,
}

const GEOMETRIC_FIT_FLOOR: f64 = 1e-15;

/// Log-linear fit of the objective gap tail.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateFit<T> {
    /// Per-iteration contraction factor, clamped into `(0, 1]`.
    pub fitted_rate: T,
    pub fit_window: (u64, u64),
    pub r_squared: f64,
    pub points: usize,
}

/// Fits `log(F(x^k) - f_star)` against `k` over the final `window_fraction`
/// of the rows after `start_k`, truncating at the first gap at or below
/// `1e-15`.
pub fn fit_local_rate<T: Scalar>(
    rows: &[TraceRow<T>],
    f_star: T,
    start_k: u64,
    window_fraction: f64,
) -> Result<RateFit<T>, AnalysisError> {
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(AnalysisError::InvalidInput(
            "window_fraction must lie in (0, 1]".into(),
        ));
    }
    let floor = T::from_f64(GEOMETRIC_FIT_FLOOR);
    let mut pts: Vec<(u64, f64)> = Vec::new();
    for row in rows.iter().filter(|r| r.k > start_k) {
        let gap = row.objective - f_star;
        if gap <= floor {
            break;
        }
        pts.push((row.k, gap.as_f64().ln()));
    }
    let keep = ((pts.len() as f64) * window_fraction).ceil() as usize;
    let tail = &pts[pts.len().saturating_sub(keep)..];
    if tail.len() < 10 {
        return Err(AnalysisError::TooFewPoints {
            got: tail.len(),
            need: 10,
        });
    }
    let n = tail.len() as f64;
    let mean_k = tail.iter().map(|(k, _)| *k as f64).sum::<f64>() / n;
    let mean_y = tail.iter().map(|(_, y)| *y).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (k, y) in tail {
        let dk = *k as f64 - mean_k;
        sxx += dk * dk;
        sxy += dk * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(AnalysisError::TooFewPoints { got: 1, need: 10 });
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_k;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (k, y) in tail {
        let fit = intercept + slope * *k as f64;
        ss_res += (y - fit) * (y - fit);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    let q = slope.exp().min(1.0);
    Ok(RateFit {
        fitted_rate: T::from_f64(q),
        fit_window: (tail.first().unwrap().0, tail.last().unwrap().0),
        r_squared,
        points: tail.len(),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct OscillationStats {
    /// Number of strict local maxima of the objective after the start index.
    pub count: u64,
    /// Mean spacing (in iterations) between consecutive maxima.
    pub mean_period: Option<f64>,
}

pub fn detect_oscillations<T: Scalar>(
    rows: &[TraceRow<T>],
    start_k: u64,
) -> Result<OscillationStats, AnalysisError> {
    let window: Vec<&TraceRow<T>> = rows.iter().filter(|r| r.k > start_k).collect();
    if window.len() < 3 {
        return Err(AnalysisError::TooFewPoints {
            got: window.len(),
            need: 3,
        });
    }
    let mut maxima: Vec<u64> = Vec::new();
    for w in window.windows(3) {
        if w[1].objective > w[0].objective && w[1].objective > w[2].objective {
            maxima.push(w[1].k);
        }
    }
    let mean_period = if maxima.len() >= 2 {
        let total: u64 = maxima.last().unwrap() - maxima.first().unwrap();
        Some(total as f64 / (maxima.len() - 1) as f64)
    } else {
        None
    };
    Ok(OscillationStats {
        count: maxima.len() as u64,
        mean_period,
    })
}

/// Full per-run rate report.
#[derive(Debug, Clone, Serialize)]
pub struct RateReport<T> {
    pub fitted_rate: T,
    pub fit_window: (u64, u64),
    pub r_squared: f64,
    pub fit_points: usize,
    /// `1 - sqrt(l_E lambda)` when the restricted spectrum is available.
    pub theoretical_rate: Option<T>,
    pub oscillation_count: u64,
    pub mean_oscillation_period: Option<f64>,
}

/// Convenience wrapper used by the CLI and the acceptance suite: classify,
/// detect, attach bounds when the run's policy admits them, fit the tail.
pub fn manifold_report<T: Scalar>(
    trace: &SolverTrace<T>,
    inst: &L1LsInstance<T>,
    reference: &ReferenceSolution<T>,
    threshold: T,
) -> Result<ManifoldReport<T>, AnalysisError> {
    let de = classify_de(&reference.h_star, inst.rho(), threshold)?;
    let times = detect_identification(trace, &de, &reference.h_star)?;
    let mut bound_k_e = None;
    let mut bound_k_d = None;
    let mut note = None;
    let band = trace.summary.momentum_band;
    match (band, de.omega) {
        (Some((lo, hi)), Some(omega)) if lo > T::zero() && hi < T::one() => {
            let first = trace.rows.first().ok_or_else(|| {
                AnalysisError::InvalidInput("trace has no rows".into())
            })?;
            let x0 = vec![T::zero(); inst.problem().dim()];
            // Bounds are stated for the default zero initialization.
            let dist0 = linalg::norm_sq(&linalg::sub(&x0, &reference.x_star));
            let inputs = BoundInputs {
                rho: inst.rho(),
                lambda1: first.lambda,
                lipschitz: inst.lipschitz_constant(),
                alpha_lower: lo,
                alpha_upper: hi,
                alpha1: first.alpha,
                objective_gap_x1: first.objective - reference.f_star,
                delta1_sq: first.step_norm * first.step_norm,
                dist_x1_sq: dist0,
                dist_x0_sq: dist0,
                omega,
            };
            let (ke, kd) = identification_bounds(&inputs)?;
            bound_k_e = Some(ke);
            bound_k_d = Some(kd);
        }
        _ => {
            note = Some(
                "no explicit identification bound for this policy; \
                 finite identification still holds for the accelerated recursions"
                    .to_string(),
            );
        }
    }
    Ok(ManifoldReport {
        d: de.d,
        e: de.e,
        omega: de.omega,
        e_threshold: threshold,
        k_sign: times.k_sign,
        k_support: times.k_support,
        window: times.window,
        bound_k_e,
        bound_k_d,
        note,
    })
}

/// Rate report against a reference solution. `start_k` should point past
/// the identification phase; `l_e` (when known) supplies the theoretical
/// contraction factor via the run's final step size.
pub fn rate_report<T: Scalar>(
    trace: &SolverTrace<T>,
    reference: &ReferenceSolution<T>,
    start_k: u64,
    window_fraction: f64,
    l_e: Option<T>,
) -> Result<RateReport<T>, AnalysisError> {
    let fit = fit_local_rate(&trace.rows, reference.f_star, start_k, window_fraction)?;
    let osc = detect_oscillations(&trace.rows, start_k)?;
    let theoretical = match (l_e, trace.rows.last()) {
        (Some(l), Some(row)) => {
            let p = (l * row.lambda).min(T::one());
            Some(T::one() - p.sqrt())
        }
        _ => None,
    };
    Ok(RateReport {
        fitted_rate: fit.fitted_rate,
        fit_window: fit.fit_window,
        r_squared: fit.r_squared,
        fit_points: fit.points,
        theoretical_rate: theoretical,
        oscillation_count: osc.count,
        mean_oscillation_period: osc.mean_period,
    })
}

/// Runs one algorithm once and reports the first row index reaching each
/// gap threshold.
pub fn iterations_to_thresholds<T: Scalar>(
    rows: &[TraceRow<T>],
    thresholds: &[T],
) -> Vec<Option<u64>> {
    thresholds
        .iter()
        .map(|&t| rows.iter().find(|r| r.gap <= t).map(|r| r.k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run, Algorithm, RunOptions, TerminationRule};
    use crate::linalg::DenseMatrix;
    use crate::model::{generate_instance, GenerateParams};
    use crate::prox::prox_l1;

    fn identity_instance(b: &[f64], rho: f64) -> L1LsInstance<f64> {
        let a = DenseMatrix::identity(b.len()).unwrap();
        L1LsInstance::new(a, b.to_vec(), rho).unwrap()
    }

    #[test]
    fn reference_solve_identity_design() {
        let inst = identity_instance(&[2.0, 0.4, 1.0], 1.0);
        let r = reference_solve(&inst, 1e-12).unwrap();
        let x_star = prox_l1(&[2.0, 0.4, 1.0], 1.0);
        for (a, b) in r.x_star.iter().zip(&x_star) {
            assert!((a - b).abs() < 1e-9, "{:?}", r.x_star);
        }
        // F* = 0.5 (1 + 0.16 + 1) + 1 = 2.08.
        assert!((r.f_star - 2.08).abs() < 1e-9, "F* = {}", r.f_star);
        assert!(r.duality_gap <= 1e-12);
        let h_expected = [-1.0, -0.4, -1.0];
        for (h, e) in r.h_star.iter().zip(&h_expected) {
            assert!((h - e).abs() < 1e-8);
        }
    }

    #[test]
    fn reference_solve_zero_solution_threshold() {
        // rho >= ||A^T b||_inf forces x* = 0 with an exact certificate at 0.
        let inst = identity_instance(&[0.3, -0.2], 0.5);
        let r = reference_solve(&inst, 1e-14).unwrap();
        assert!(r.x_star.iter().all(|&v| v == 0.0));
        assert_eq!(r.iterations, 0);
        assert!(r.duality_gap <= 1e-14);
    }

    #[test]
    fn duality_gap_bounds_suboptimality() {
        let inst = generate_instance(&GenerateParams {
            rows: 15,
            cols: 40,
            sparsity: 5,
            entry_std: 0.4,
            rho: 0.6,
            seed: 31,
        })
        .unwrap();
        let r = reference_solve(&inst, 1e-12).unwrap();
        let p = inst.problem();
        let mut rng = crate::rng::SplitMix64::new(8);
        for _ in 0..50 {
            let x: Vec<f64> = (0..40).map(|_| 0.5 * rng.next_gaussian()).collect();
            let (gap, f) = duality_gap(&inst, &x).unwrap();
            let measured = p.objective(&x).unwrap() - r.f_star;
            assert!((f - p.objective(&x).unwrap()).abs() < 1e-12);
            assert!(measured <= gap + 1e-12, "measured {measured} gap {gap}");
        }
    }

    #[test]
    fn classify_identity_design() {
        // h* = x* - b = (-1, -0.4, -1): E = {0, 2}, D = {1}, omega = 0.6.
        let de = classify_de::<f64>(&[-1.0, -0.4, -1.0], 1.0, 1e-4).unwrap();
        assert_eq!(de.e, vec![0, 2]);
        assert_eq!(de.d, vec![1]);
        assert!((de.omega.unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn classify_full_boundary_has_no_margin() {
        let de = classify_de::<f64>(&[1.0, -1.0], 1.0, 1e-4).unwrap();
        assert!(de.d.is_empty());
        assert_eq!(de.e, vec![0, 1]);
        assert!(de.omega.is_none());
    }

    #[test]
    fn identification_bounds_arithmetic() {
        let inputs = BoundInputs::<f64> {
            rho: 1.0,
            lambda1: 1.0,
            lipschitz: 1.0,
            alpha_lower: 0.5,
            alpha_upper: 0.5,
            alpha1: 0.5,
            objective_gap_x1: 1.0,
            delta1_sq: 0.0,
            dist_x1_sq: 4.0,
            dist_x0_sq: 4.0,
            omega: 1.0,
        };
        let (ke, kd) = identification_bounds(&inputs).unwrap();
        assert!((ke - 9.0).abs() < 1e-12, "K_E bound {ke}");
        assert!((kd - 11.0).abs() < 1e-12, "K_D bound {kd}");
        // Started at the optimum: only the band tail remains.
        let at_opt = BoundInputs {
            objective_gap_x1: 0.0,
            dist_x1_sq: 0.0,
            dist_x0_sq: 0.0,
            ..inputs
        };
        let (ke0, _) = identification_bounds(&at_opt).unwrap();
        assert!((ke0 - 1.0).abs() < 1e-12);
        // alpha_lower = 0 is rejected.
        assert!(identification_bounds(&BoundInputs {
            alpha_lower: 0.0,
            ..inputs
        })
        .is_err());
    }

    #[test]
    fn bounds_grow_with_worse_starts() {
        let base = BoundInputs::<f64> {
            rho: 0.8,
            lambda1: 0.5,
            lipschitz: 2.0,
            alpha_lower: 0.3,
            alpha_upper: 0.3,
            alpha1: 0.3,
            objective_gap_x1: 1.0,
            delta1_sq: 0.0,
            dist_x1_sq: 2.0,
            dist_x0_sq: 2.0,
            omega: 0.4,
        };
        let (ke, kd) = identification_bounds(&base).unwrap();
        let worse_obj = BoundInputs {
            objective_gap_x1: 2.5,
            ..base
        };
        let (ke2, kd2) = identification_bounds(&worse_obj).unwrap();
        assert!(ke2 > ke && kd2 > kd);
        let worse_dist = BoundInputs {
            dist_x1_sq: 5.0,
            ..base
        };
        let (ke3, kd3) = identification_bounds(&worse_dist).unwrap();
        assert!(ke3 > ke && kd3 > kd);
    }

    #[test]
    fn identification_on_identity_design_is_immediate() {
        let inst = identity_instance(&[2.0, 0.4, 1.0], 1.0);
        let r = reference_solve(&inst, 1e-12).unwrap();
        let de = classify_de(&r.h_star, 1.0, 1e-4).unwrap();
        let p = inst.problem();
        let mut sched = ScheduleSpec::ista()
            .with_step(crate::schedule::StepRule::Fixed(1.0))
            .build(inst.lipschitz_constant(), None)
            .unwrap();
        let mut opts = RunOptions::new(TerminationRule::max_iter(20)).with_snapshots(1);
        opts.termination.step_tol = Some(1e-14);
        let trace = run(&p, &mut sched, &[0.0; 3], Algorithm::Ifbs, &opts).unwrap();
        let times = detect_identification(&trace, &de, &r.h_star).unwrap();
        // One exact prox step lands on S_rho(b), so the support locks by k = 2.
        assert!(times.k_support.unwrap() <= 2, "{times:?}");
        assert!(times.k_sign.unwrap() <= 2);
    }

    #[test]
    fn identification_started_at_solution() {
        let inst = identity_instance(&[2.0, 0.4, 1.0], 1.0);
        let r = reference_solve(&inst, 1e-12).unwrap();
        let de = classify_de(&r.h_star, 1.0, 1e-4).unwrap();
        let p = inst.problem();
        let mut sched = ScheduleSpec::constant(0.3)
            .with_step(crate::schedule::StepRule::Fixed(1.0))
            .build(inst.lipschitz_constant(), None)
            .unwrap();
        let opts = RunOptions::new(TerminationRule::max_iter(10)).with_snapshots(1);
        let x_star = prox_l1(&[2.0, 0.4, 1.0], 1.0);
        let trace = run(&p, &mut sched, &x_star, Algorithm::Ifbs, &opts).unwrap();
        let times = detect_identification(&trace, &de, &r.h_star).unwrap();
        assert_eq!(times.k_sign, Some(1));
        assert_eq!(times.k_support, Some(1));
    }

    #[test]
    fn identification_requires_dense_snapshots() {
        let inst = identity_instance(&[2.0, 0.4, 1.0], 1.0);
        let r = reference_solve(&inst, 1e-10).unwrap();
        let de = classify_de(&r.h_star, 1.0, 1e-4).unwrap();
        let p = inst.problem();
        let mut sched = ScheduleSpec::ista().build(inst.lipschitz_constant(), None).unwrap();
        let opts = RunOptions::new(TerminationRule::max_iter(20)).with_snapshots(5);
        let trace = run(&p, &mut sched, &[0.0; 3], Algorithm::Ifbs, &opts).unwrap();
        assert!(matches!(
            detect_identification(&trace, &de, &r.h_star),
            Err(AnalysisError::NeedsDenseSnapshots(_))
        ));
    }

    fn synthetic_rows(gaps: &[f64], f_star: f64) -> Vec<TraceRow<f64>> {
        gaps.iter()
            .enumerate()
            .map(|(i, &g)| TraceRow {
                k: (i + 1) as u64,
                objective: f_star + g,
                gap: g,
                step_norm: 0.0,
                alpha: 0.0,
                lambda: 1.0,
                energy: f_star + g,
                restarted: false,
                switched: false,
            })
            .collect()
    }

    #[test]
    fn rate_fit_recovers_exact_geometric_decay() {
        let gaps: Vec<f64> = (1..=60).map(|k| 2.0 * 0.5_f64.powi(k)).collect();
        let rows = synthetic_rows(&gaps, 3.0);
        let fit = fit_local_rate(&rows, 3.0, 0, 1.0).unwrap();
        assert!((fit.fitted_rate - 0.5).abs() < 1e-6, "q = {}", fit.fitted_rate);
        assert!(fit.r_squared >= 0.999999);
    }

    #[test]
    fn rate_fit_constant_gap_is_unit_rate() {
        let rows = synthetic_rows(&vec![0.25; 40], 1.0);
        let fit = fit_local_rate(&rows, 1.0, 0, 1.0).unwrap();
        assert_eq!(fit.fitted_rate, 1.0);
    }

    #[test]
    fn rate_fit_needs_enough_points() {
        let gaps: Vec<f64> = (1..=5).map(|k| 0.5_f64.powi(k)).collect();
        let rows = synthetic_rows(&gaps, 0.0);
        assert!(matches!(
            fit_local_rate(&rows, 0.0, 0, 1.0),
            Err(AnalysisError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn oscillation_detection_on_synthetic_signal() {
        // F_k = 0.99^k cos^2(k / 10) + floor: maxima spaced ~10 pi apart.
        let rows: Vec<TraceRow<f64>> = (1..=1000)
            .map(|k| {
                let kf = k as f64;
                let obj = 0.99_f64.powf(kf) * (kf / 10.0).cos().powi(2) + 1.0;
                TraceRow {
                    k,
                    objective: obj,
                    gap: obj - 1.0,
                    step_norm: 0.0,
                    alpha: 0.0,
                    lambda: 1.0,
                    energy: obj,
                    restarted: false,
                    switched: false,
                }
            })
            .collect();
        let stats = detect_oscillations(&rows, 0).unwrap();
        assert!(stats.count >= 3);
        let period = stats.mean_period.unwrap();
        let expected = 10.0 * std::f64::consts::PI;
        assert!(
            (period - expected).abs() / expected < 0.1,
            "period {period} vs {expected}"
        );
    }

    #[test]
    fn monotone_trace_has_no_maxima() {
        let gaps: Vec<f64> = (1..=50).map(|k| 1.0 / k as f64).collect();
        let rows = synthetic_rows(&gaps, 0.0);
        let stats = detect_oscillations(&rows, 0).unwrap();
        assert_eq!(stats.count, 0);
        assert!(stats.mean_period.is_none());
    }

    #[test]
    fn reference_solves_agree_on_constant_gradient() {
        let inst = generate_instance(&GenerateParams {
            rows: 20,
            cols: 50,
            sparsity: 6,
            entry_std: 0.4,
            rho: 0.8,
            seed: 71,
        })
        .unwrap();
        let r1 = reference_solve(&inst, 1e-10).unwrap();
        let r2 = reference_solve(&inst, 1e-13).unwrap();
        let diff = linalg::inf_norm(&linalg::sub(&r1.h_star, &r2.h_star));
        // Reported, not asserted tightly: the gradient is constant over the
        // solution set, so independent solves should agree to roughly
        // sqrt(gap_tol).
        println!("h* discrepancy across reference solves: {diff:e}");
        assert!(diff <= 10.0 * 1e-10_f64.sqrt());
    }
}
