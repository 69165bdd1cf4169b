//! Iteration drivers: the inertial forward-backward loop and the heavy-ball
//! style splitting loop, with trace recording, termination handling, and
//! discrete-energy bookkeeping.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, norm_sq};
use crate::model::{CompositeProblem, ModelError, SmoothOracle};
use crate::prox::prox_l1;
use crate::scalar::Scalar;
use crate::schedule::{restart_signal, Feedback, Schedule, ScheduleError};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("non-finite values encountered at iteration {k}; run aborted")]
    NonFinite { k: u64 },
    #[error("invalid run configuration: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    /// Gradient evaluated at the extrapolated point.
    #[serde(rename = "ifbs")]
    Ifbs,
    /// Gradient evaluated at the current iterate, momentum inside the prox
    /// argument.
    #[serde(rename = "sipm")]
    Sipm,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Algorithm::Ifbs => write!(f, "ifbs"),
            Algorithm::Sipm => write!(f, "sipm"),
        }
    }
}

/// Stopping rules. `max_iter` bounds the number of recorded iterates; the
/// optional rules stop as soon as the recorded iterate qualifies.
#[derive(Debug, Clone)]
pub struct TerminationRule<T> {
    pub max_iter: u64,
    /// Stop when `F(x^k) - f_ref <= target_gap` (requires `f_ref`).
    pub target_gap: Option<T>,
    /// Stop when `||x^k - x^{k-1}|| <= step_tol` (checked from k = 2 on).
    pub step_tol: Option<T>,
}

impl<T> TerminationRule<T> {
    pub fn max_iter(max_iter: u64) -> Self {
        Self {
            max_iter,
            target_gap: None,
            step_tol: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions<T> {
    pub termination: TerminationRule<T>,
    /// Reference objective value used for the trace's gap column and the
    /// `target_gap` rule.
    pub f_ref: Option<T>,
    /// Record iterate snapshots every `stride` iterations (`Some(1)` records
    /// every iterate, as identification analysis requires). `None` disables
    /// snapshots.
    pub snapshot_stride: Option<u64>,
}

impl<T> RunOptions<T> {
    pub fn new(termination: TerminationRule<T>) -> Self {
        Self {
            termination,
            f_ref: None,
            snapshot_stride: None,
        }
    }

    pub fn with_f_ref(mut self, f_ref: T) -> Self {
        self.f_ref = Some(f_ref);
        self
    }

    pub fn with_snapshots(mut self, stride: u64) -> Self {
        self.snapshot_stride = Some(stride.max(1));
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationReason {
    #[serde(rename = "max-iterations")]
    MaxIterations,
    #[serde(rename = "target-gap")]
    TargetGap,
    #[serde(rename = "step-tolerance")]
    StepTolerance,
}

/// One iterate of a run: `x^k`, its predecessor, and the auxiliary points
/// from the step that produced `x^k`.
#[derive(Debug, Clone)]
pub struct SolverState<T> {
    pub k: u64,
    pub x_prev: Vec<T>,
    pub x_curr: Vec<T>,
    /// Momentum point of the producing step (for the heavy-ball variant the
    /// extrapolation without the gradient). Equals `x_curr` at k = 1.
    pub y_curr: Vec<T>,
    /// Prox argument of the producing step; `x_curr = S(z_curr)` for k >= 2.
    pub z_curr: Vec<T>,
    pub last_alpha: T,
    pub last_lambda: T,
}

impl<T: Scalar> SolverState<T> {
    /// Fresh state with `x^1 = x^0 = x0`.
    pub fn initial(x0: Vec<T>) -> Self {
        Self {
            k: 1,
            x_prev: x0.clone(),
            x_curr: x0.clone(),
            y_curr: x0.clone(),
            z_curr: x0,
            last_alpha: T::zero(),
            last_lambda: T::zero(),
        }
    }

    pub fn dim(&self) -> usize {
        self.x_curr.len()
    }
}

fn check_params<T: Scalar>(alpha: T, lambda: T) -> Result<(), EngineError> {
    if alpha < T::zero() || alpha > T::one() || !alpha.is_finite() {
        return Err(EngineError::InvalidOptions(format!(
            "momentum must lie in [0, 1], got {}",
            alpha.as_f64()
        )));
    }
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return Err(EngineError::InvalidOptions(
            "step size must be positive".into(),
        ));
    }
    Ok(())
}

/// One forward-backward step with extrapolated gradient point:
/// `y = x^k + alpha (x^k - x^{k-1})`, `x^{k+1} = S_{lambda rho}(y - lambda grad f(y))`.
pub fn ifbs_step<T: Scalar, O: SmoothOracle<T>>(
    problem: &CompositeProblem<T, O>,
    state: &SolverState<T>,
    alpha: T,
    lambda: T,
) -> Result<SolverState<T>, EngineError> {
    check_params(alpha, lambda)?;
    let n = state.dim();
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        y[i] = state.x_curr[i] + alpha * (state.x_curr[i] - state.x_prev[i]);
    }
    let grad = problem.gradient_smooth(&y)?;
    let mut z = y.clone();
    for (zi, gi) in z.iter_mut().zip(&grad) {
        *zi = *zi - lambda * *gi;
    }
    let x_next = prox_l1(&z, lambda * problem.rho());
    if !linalg::all_finite(&x_next) {
        return Err(EngineError::NonFinite { k: state.k + 1 });
    }
    Ok(SolverState {
        k: state.k + 1,
        x_prev: state.x_curr.clone(),
        x_curr: x_next,
        y_curr: y,
        z_curr: z,
        last_alpha: alpha,
        last_lambda: lambda,
    })
}

/// One heavy-ball style step with the gradient at the current iterate:
/// `x^{k+1} = S_{lambda rho}(x^k - lambda grad f(x^k) + alpha (x^k - x^{k-1}))`.
pub fn sipm_step<T: Scalar, O: SmoothOracle<T>>(
    problem: &CompositeProblem<T, O>,
    state: &SolverState<T>,
    alpha: T,
    lambda: T,
) -> Result<SolverState<T>, EngineError> {
    check_params(alpha, lambda)?;
    let n = state.dim();
    let grad = problem.gradient_smooth(&state.x_curr)?;
    let mut y = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    for i in 0..n {
        y[i] = state.x_curr[i] + alpha * (state.x_curr[i] - state.x_prev[i]);
        z[i] = state.x_curr[i] - lambda * grad[i] + alpha * (state.x_curr[i] - state.x_prev[i]);
    }
    let x_next = prox_l1(&z, lambda * problem.rho());
    if !linalg::all_finite(&x_next) {
        return Err(EngineError::NonFinite { k: state.k + 1 });
    }
    Ok(SolverState {
        k: state.k + 1,
        x_prev: state.x_curr.clone(),
        x_curr: x_next,
        y_curr: y,
        z_curr: z,
        last_alpha: alpha,
        last_lambda: lambda,
    })
}

/// Discrete energy `E_k = alpha/(2 lambda) ||x^k - x^{k-1}||^2 + F(x^k)`.
pub fn lyapunov_energy<T: Scalar, O: SmoothOracle<T>>(
    problem: &CompositeProblem<T, O>,
    state: &SolverState<T>,
    alpha: T,
    lambda: T,
) -> Result<T, EngineError> {
    check_params(alpha, lambda)?;
    let delta_sq = norm_sq(&linalg::sub(&state.x_curr, &state.x_prev));
    let f = problem.objective(&state.x_curr)?;
    Ok(alpha / (T::from_f64(2.0) * lambda) * delta_sq + f)
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRow<T> {
    pub k: u64,
    pub objective: T,
    /// `objective - f_ref`; NaN when no reference value was supplied.
    pub gap: T,
    /// `||x^k - x^{k-1}||`.
    pub step_norm: T,
    pub alpha: T,
    pub lambda: T,
    pub energy: T,
    pub restarted: bool,
    pub switched: bool,
}

#[derive(Debug, Clone)]
pub struct IterateSnapshot<T> {
    pub k: u64,
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub z: Vec<T>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary<T> {
    pub algorithm: Algorithm,
    pub schedule: String,
    /// Number of recorded iterates (trace rows).
    pub iterations: u64,
    /// Number of solver steps taken (`iterations - 1` for nonempty traces).
    pub steps: u64,
    pub termination: TerminationReason,
    pub final_objective: T,
    pub final_gap: Option<T>,
    pub final_step_norm: Option<T>,
    pub restarts: u64,
    pub switches: u64,
    /// Last iterate index `k` at which `supp(x^k) != supp(x^{k-1})`.
    pub last_support_change: Option<u64>,
    pub final_support_size: usize,
    pub alpha_first: T,
    pub lambda_first: T,
    pub alpha_min: T,
    pub alpha_max: T,
    /// A priori constant momentum band, when the policy provides one.
    pub momentum_band: Option<(T, T)>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SolverTrace<T> {
    pub rows: Vec<TraceRow<T>>,
    pub snapshots: Vec<IterateSnapshot<T>>,
    pub snapshot_stride: Option<u64>,
    pub summary: RunSummary<T>,
}

impl<T: Scalar> SolverTrace<T> {
    /// Final iterate of the run (`x^K`), when any step was recorded.
    pub fn rows_k_range(&self) -> Option<(u64, u64)> {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => Some((a.k, b.k)),
            _ => None,
        }
    }
}

fn support_indices<T: Scalar>(x: &[T]) -> Vec<usize> {
    x.iter()
        .enumerate()
        .filter_map(|(i, &v)| (v != T::zero()).then_some(i))
        .collect()
}

fn support_mask<T: Scalar>(x: &[T], mask: &mut Vec<bool>) {
    mask.clear();
    mask.extend(x.iter().map(|&v| v != T::zero()));
}

/// Runs `algorithm` from `x0` under `schedule` until a termination rule
/// fires. The schedule must be fresh; the initial state is `x^1 = x^0 = x0`.
pub fn run<T: Scalar, O: SmoothOracle<T>>(
    problem: &CompositeProblem<T, O>,
    schedule: &mut Schedule<T>,
    x0: &[T],
    algorithm: Algorithm,
    options: &RunOptions<T>,
) -> Result<SolverTrace<T>, EngineError> {
    if x0.len() != problem.dim() {
        return Err(EngineError::InvalidOptions(format!(
            "x0 has length {}, problem dimension is {}",
            x0.len(),
            problem.dim()
        )));
    }
    if !linalg::all_finite(x0) {
        return Err(EngineError::InvalidOptions("x0 must be finite".into()));
    }
    if !schedule.is_fresh() {
        return Err(EngineError::InvalidOptions(
            "schedule has already been consumed by another run".into(),
        ));
    }
    let term = &options.termination;
    if term.target_gap.is_some() && options.f_ref.is_none() {
        return Err(EngineError::InvalidOptions(
            "target_gap termination requires f_ref".into(),
        ));
    }

    let mut state = SolverState::initial(x0.to_vec());
    let mut rows: Vec<TraceRow<T>> = Vec::new();
    let mut snapshots: Vec<IterateSnapshot<T>> = Vec::new();
    let reason;
    let mut signal = false;
    let mut restarts = 0u64;
    let mut switches = 0u64;
    let mut last_support_change: Option<u64> = None;
    let mut prev_mask: Vec<bool> = Vec::new();
    let mut curr_mask: Vec<bool> = Vec::new();
    support_mask(&state.x_curr, &mut prev_mask);
    let mut alpha_first = T::zero();
    let mut lambda_first = T::zero();
    let mut alpha_min = T::infinity();
    let mut alpha_max = T::neg_infinity();

    loop {
        let k = state.k;
        if k > term.max_iter {
            reason = TerminationReason::MaxIterations;
            break;
        }
        let support: Vec<usize> = if schedule.needs_support() {
            support_indices(&state.x_curr)
        } else {
            Vec::new()
        };
        let params = schedule.next_params(
            k,
            &Feedback {
                restart_signal: signal,
                support: &support,
            },
        )?;
        if params.restarted {
            restarts += 1;
        }
        if params.switched {
            switches += 1;
        }
        if k == 1 {
            alpha_first = params.alpha;
            lambda_first = params.lambda;
            if options.snapshot_stride.is_some() {
                // Give the first snapshot a meaningful prox argument: the
                // plain gradient step at x^1.
                let g = problem.gradient_smooth(&state.x_curr)?;
                for i in 0..state.z_curr.len() {
                    state.z_curr[i] = state.x_curr[i] - params.lambda * g[i];
                }
            }
        }
        alpha_min = alpha_min.min(params.alpha);
        alpha_max = alpha_max.max(params.alpha);

        let objective = problem.objective(&state.x_curr)?;
        if !objective.is_finite() {
            return Err(EngineError::NonFinite { k });
        }
        let delta_sq = norm_sq(&linalg::sub(&state.x_curr, &state.x_prev));
        let step_norm = delta_sq.sqrt();
        let gap = options.f_ref.map(|f| objective - f);
        let energy =
            params.alpha / (T::from_f64(2.0) * params.lambda) * delta_sq + objective;
        rows.push(TraceRow {
            k,
            objective,
            gap: gap.unwrap_or_else(T::nan),
            step_norm,
            alpha: params.alpha,
            lambda: params.lambda,
            energy,
            restarted: params.restarted,
            switched: params.switched,
        });
        if let Some(stride) = options.snapshot_stride {
            if (k - 1) % stride == 0 {
                snapshots.push(IterateSnapshot {
                    k,
                    x: state.x_curr.clone(),
                    y: state.y_curr.clone(),
                    z: state.z_curr.clone(),
                });
            }
        }

        if let (Some(tg), Some(g)) = (term.target_gap, gap) {
            if g <= tg {
                reason = TerminationReason::TargetGap;
                break;
            }
        }
        if let Some(st) = term.step_tol {
            if k > 1 && step_norm <= st {
                reason = TerminationReason::StepTolerance;
                break;
            }
        }
        if k == term.max_iter {
            reason = TerminationReason::MaxIterations;
            break;
        }

        let next = match algorithm {
            Algorithm::Ifbs => ifbs_step(problem, &state, params.alpha, params.lambda)?,
            Algorithm::Sipm => sipm_step(problem, &state, params.alpha, params.lambda)?,
        };
        signal = restart_signal(&next.y_curr, &next.x_curr, &state.x_curr)?;
        support_mask(&next.x_curr, &mut curr_mask);
        if curr_mask != prev_mask {
            last_support_change = Some(next.k);
            std::mem::swap(&mut prev_mask, &mut curr_mask);
        }
        state = next;
    }

    let final_objective = match rows.last() {
        Some(row) => row.objective,
        None => problem.objective(&state.x_curr)?,
    };
    let final_gap = options.f_ref.map(|f| final_objective - f);
    let iterations = rows.len() as u64;
    let summary = RunSummary {
        algorithm,
        schedule: schedule.describe().to_string(),
        iterations,
        steps: iterations.saturating_sub(1),
        termination: reason,
        final_objective,
        final_gap,
        final_step_norm: rows.last().map(|r| r.step_norm),
        restarts,
        switches,
        last_support_change,
        final_support_size: support_indices(&state.x_curr).len(),
        alpha_first,
        lambda_first,
        alpha_min: if alpha_min.is_finite() { alpha_min } else { T::zero() },
        alpha_max: if alpha_max.is_finite() { alpha_max } else { T::zero() },
        momentum_band: schedule.analytic_momentum_band(),
        warnings: schedule.take_warnings(),
    };
    Ok(SolverTrace {
        rows,
        snapshots,
        snapshot_stride: options.snapshot_stride,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::model::L1LsInstance;
    use crate::prox::prox_l1;
    use crate::rng::SplitMix64;
    use crate::schedule::ScheduleSpec;

    fn identity_instance(b: &[f64], rho: f64) -> L1LsInstance<f64> {
        let a = DenseMatrix::identity(b.len()).unwrap();
        L1LsInstance::new(a, b.to_vec(), rho).unwrap()
    }

    fn random_instance(seed: u64, rows: usize, cols: usize) -> L1LsInstance<f64> {
        crate::model::generate_instance(&crate::model::GenerateParams {
            rows,
            cols,
            sparsity: cols / 4,
            entry_std: 0.4,
            rho: 0.5,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn single_variable_step_hits_fixed_point() {
        // A = I1, b = (2), rho = 1, lambda = 1, x = x_prev = 0:
        // x_next = S_1(0 - (0 - 2)) = S_1(2) = 1, the fixed point S_rho(b).
        let inst = identity_instance(&[2.0], 1.0);
        let p = inst.problem();
        let state = SolverState::initial(vec![0.0]);
        let next = ifbs_step(&p, &state, 0.0, 1.0).unwrap();
        assert_eq!(next.x_curr, vec![1.0]);
        let again = ifbs_step(&p, &next, 0.0, 1.0).unwrap();
        assert_eq!(again.x_curr, vec![1.0]);
    }

    #[test]
    fn sipm_step_matches_hand_computation() {
        // f = 0.5 (x - 2)^2 via A = I1, b = (2); alpha = 0.2, lambda = 1,
        // rho = 1, x = 1, x_prev = 0:
        // z = 1 - (1 - 2) + 0.2 = 2.2, x_next = S_1(2.2) = 1.2.
        let inst = identity_instance(&[2.0], 1.0);
        let p = inst.problem();
        let mut state = SolverState::initial(vec![0.0]);
        state.x_curr = vec![1.0];
        let next = sipm_step(&p, &state, 0.2, 1.0).unwrap();
        assert!((next.x_curr[0] - 1.2).abs() < 1e-15);
    }

    #[test]
    fn zero_momentum_steps_agree_bitwise() {
        let inst = random_instance(41, 12, 20);
        let p = inst.problem();
        let mut rng = SplitMix64::new(9);
        let mut state = SolverState::initial((0..20).map(|_| rng.next_gaussian()).collect());
        state.x_prev = (0..20).map(|_| rng.next_gaussian()).collect();
        let lam = 1.0 / inst.lipschitz_constant();
        let a = ifbs_step(&p, &state, 0.0, lam).unwrap();
        let b = sipm_step(&p, &state, 0.0, lam).unwrap();
        assert_eq!(a.x_curr, b.x_curr);
    }

    #[test]
    fn fixed_point_is_preserved_exactly() {
        let inst = identity_instance(&[2.0, 0.4, 1.0], 1.0);
        let p = inst.problem();
        // For identity design the minimizer is S_rho(b).
        let x_star = prox_l1(&[2.0, 0.4, 1.0], 1.0);
        let state = SolverState::initial(x_star.clone());
        for alpha in [0.0, 0.3, 0.9] {
            let a = ifbs_step(&p, &state, alpha, 1.0).unwrap();
            assert_eq!(a.x_curr, x_star);
            let b = sipm_step(&p, &state, alpha, 1.0).unwrap();
            assert_eq!(b.x_curr, x_star);
        }
    }

    #[test]
    fn lyapunov_energy_plugin_values() {
        // alpha = 0.5, lambda = 0.5, ||Delta||^2 = 2, F = 3  =>  E = 4.
        let inst = identity_instance(&[0.0, 0.0], 2.0);
        let p = inst.problem();
        let mut state = SolverState::initial(vec![0.0, 0.0]);
        state.x_curr = vec![1.0, 1.0];
        // F(x) = 0.5 * 2 + 2 * 2 = 5 for this instance; use a direct check.
        let e = lyapunov_energy(&p, &state, 0.5, 0.5).unwrap();
        let f = p.objective(&state.x_curr).unwrap();
        assert!((e - (0.5 / 1.0 * 2.0 + f)).abs() < 1e-15);
        // Zero displacement: energy is just the objective.
        let rest = SolverState::initial(vec![1.0, -2.0]);
        let e0 = lyapunov_energy(&p, &rest, 0.7, 0.5).unwrap();
        assert_eq!(e0, p.objective(&rest.x_curr).unwrap());
        // Zero momentum: kinetic term vanishes regardless of displacement.
        let e1 = lyapunov_energy(&p, &state, 0.0, 0.5).unwrap();
        assert_eq!(e1, f);
    }

    #[test]
    fn run_with_zero_horizon_yields_summary_only() {
        let inst = identity_instance(&[1.0], 1.0);
        let p = inst.problem();
        let mut sched = ScheduleSpec::ista().build(inst.lipschitz_constant(), None).unwrap();
        let trace = run(
            &p,
            &mut sched,
            &[0.0],
            Algorithm::Ifbs,
            &RunOptions::new(TerminationRule::max_iter(0)),
        )
        .unwrap();
        assert!(trace.rows.is_empty());
        assert_eq!(trace.summary.iterations, 0);
        assert_eq!(trace.summary.termination, TerminationReason::MaxIterations);
    }

    #[test]
    fn ista_converges_to_closed_form_on_identity_design() {
        let inst = identity_instance(&[2.0, 0.4, 1.0], 1.0);
        let p = inst.problem();
        let mut sched = ScheduleSpec::ista()
            .with_step(crate::schedule::StepRule::Fixed(1.0))
            .build(inst.lipschitz_constant(), None)
            .unwrap();
        let mut opts = RunOptions::new(TerminationRule::max_iter(100));
        opts.termination.step_tol = Some(1e-12);
        let trace = run(&p, &mut sched, &[0.0; 3], Algorithm::Ifbs, &opts).unwrap();
        assert_eq!(trace.summary.termination, TerminationReason::StepTolerance);
        // One exact prox step reaches S_1(b) = (1, 0, 0).
        assert_eq!(trace.summary.final_objective, {
            let x_star = [1.0, 0.0, 0.0];
            p.objective(&x_star).unwrap()
        });
    }

    #[test]
    fn trace_rows_strictly_increasing_and_energy_matches() {
        let inst = random_instance(17, 10, 25);
        let p = inst.problem();
        let l = inst.lipschitz_constant();
        let mut sched = ScheduleSpec::fista_bt().build(l, None).unwrap();
        let trace = run(
            &p,
            &mut sched,
            &vec![0.0; 25],
            Algorithm::Ifbs,
            &RunOptions::new(TerminationRule::max_iter(50)),
        )
        .unwrap();
        assert_eq!(trace.rows.len(), 50);
        for w in trace.rows.windows(2) {
            assert!(w[1].k == w[0].k + 1);
        }
        for row in &trace.rows {
            let expected =
                row.alpha / (2.0 * row.lambda) * row.step_norm * row.step_norm + row.objective;
            assert!((row.energy - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn iterates_converge_and_satisfy_fixed_point_residual() {
        let inst = random_instance(23, 14, 30);
        let p = inst.problem();
        let l = inst.lipschitz_constant();
        let mut sched = ScheduleSpec::constant(0.4).build(l, None).unwrap();
        let mut opts = RunOptions::new(TerminationRule::max_iter(20_000));
        opts.termination.step_tol = Some(1e-14);
        opts.snapshot_stride = Some(1);
        let trace = run(&p, &mut sched, &vec![0.0; 30], Algorithm::Ifbs, &opts).unwrap();
        assert_eq!(trace.summary.termination, TerminationReason::StepTolerance);
        // Cauchy tail: distances to the final iterate shrink.
        let last = trace.snapshots.last().unwrap();
        let lam = 1.0 / l;
        let g = p.gradient_smooth(&last.x).unwrap();
        let z: Vec<f64> = last.x.iter().zip(&g).map(|(x, gi)| x - lam * gi).collect();
        let prox = prox_l1(&z, lam * p.rho());
        let residual = crate::linalg::norm(&crate::linalg::sub(&last.x, &prox));
        assert!(residual <= 1e-8, "fixed-point residual {residual}");
        let mid = &trace.snapshots[trace.snapshots.len() / 2];
        let d_mid = crate::linalg::norm(&crate::linalg::sub(&mid.x, &last.x));
        let early = &trace.snapshots[trace.snapshots.len() / 4];
        let d_early = crate::linalg::norm(&crate::linalg::sub(&early.x, &last.x));
        assert!(d_mid <= d_early + 1e-12);
    }

    #[test]
    fn nonfinite_offsets_abort_loudly() {
        // A strongly divergent parameterization: huge fixed step.
        let inst = random_instance(3, 8, 16);
        let p = inst.problem();
        let mut sched = ScheduleSpec::constant(1.0)
            .with_step(crate::schedule::StepRule::Fixed(1e150))
            .build(inst.lipschitz_constant(), None)
            .unwrap();
        let res = run(
            &p,
            &mut sched,
            &vec![1.0; 16],
            Algorithm::Sipm,
            &RunOptions::new(TerminationRule::max_iter(10_000)),
        );
        assert!(matches!(res, Err(EngineError::NonFinite { .. })));
    }

    #[test]
    fn consumed_schedule_rejected() {
        let inst = identity_instance(&[1.0], 1.0);
        let p = inst.problem();
        let mut sched = ScheduleSpec::ista().build(inst.lipschitz_constant(), None).unwrap();
        let opts = RunOptions::new(TerminationRule::max_iter(3));
        run(&p, &mut sched, &[0.0], Algorithm::Ifbs, &opts).unwrap();
        assert!(run(&p, &mut sched, &[0.0], Algorithm::Ifbs, &opts).is_err());
    }

    #[test]
    fn target_gap_requires_reference() {
        let inst = identity_instance(&[1.0], 1.0);
        let p = inst.problem();
        let mut sched = ScheduleSpec::ista().build(inst.lipschitz_constant(), None).unwrap();
        let mut opts = RunOptions::new(TerminationRule::max_iter(3));
        opts.termination.target_gap = Some(1e-6);
        assert!(run(&p, &mut sched, &[0.0], Algorithm::Ifbs, &opts).is_err());
    }
}
