//! Momentum and step-size policies, restart/switch logic, and validation
//! of a policy against the convergence hypotheses used by the solvers.
//!
//! A policy is described by a [`ScheduleSpec`] (plain data, clonable,
//! parseable) and executed as a [`Schedule`] (stateful, one per run).

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, DenseMatrix, LinalgError};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("iteration index out of order: expected {expected}, got {got}")]
    OutOfOrder { expected: u64, got: u64 },
    #[error("invalid schedule parameter: {0}")]
    InvalidParameter(String),
    #[error("momentum estimate unavailable: {0}")]
    EstimatorUnavailable(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Momentum policy description.
#[derive(Debug, Clone, PartialEq)]
pub enum MomentumSpec<T> {
    /// Fixed momentum `alpha` in `[0, 1]`.
    Constant { alpha: T },
    /// Beck-Teboulle recursion: `t_{k+1} = (1 + sqrt(4 t_k^2 + 1)) / 2`,
    /// `alpha_k = (t_k - 1) / t_{k+1}`, `t_1 = 1`.
    FistaBt,
    /// Chambolle-Dossal recursion: `t_{k+1} = (k + a - 1) / a` for `a > 2`.
    ChambolleDossal { a: T },
    /// `min(inner alpha, cap)`.
    Capped { inner: Box<MomentumSpec<T>>, cap: T },
    /// Inner recursion, with `t` reset to 1 whenever the restart signal fires.
    AdaptiveRestart { inner: Box<MomentumSpec<T>> },
    /// Inner recursion until the first restart signal; from then on a fixed,
    /// locally optimal momentum estimated from the support at switch time.
    OptSwitch { inner: Box<MomentumSpec<T>> },
}

/// Step-size policy. Values are resolved against the problem's Lipschitz
/// constant when the schedule is built.
#[derive(Debug, Clone, PartialEq)]
pub enum StepRule<T> {
    /// `lambda_k = 1/L` for all k.
    InverseLipschitz,
    /// A fixed positive value.
    Fixed(T),
    /// Explicit per-iteration values; the last value repeats past the end.
    /// Mostly useful for validation experiments.
    Sequence(Vec<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSpec<T> {
    pub momentum: MomentumSpec<T>,
    pub step: StepRule<T>,
}

impl<T: Scalar> ScheduleSpec<T> {
    pub fn constant(alpha: T) -> Self {
        Self {
            momentum: MomentumSpec::Constant { alpha },
            step: StepRule::InverseLipschitz,
        }
    }

    pub fn ista() -> Self {
        Self::constant(T::zero())
    }

    pub fn fista_bt() -> Self {
        Self {
            momentum: MomentumSpec::FistaBt,
            step: StepRule::InverseLipschitz,
        }
    }

    pub fn chambolle_dossal(a: T) -> Self {
        Self {
            momentum: MomentumSpec::ChambolleDossal { a },
            step: StepRule::InverseLipschitz,
        }
    }

    pub fn capped(inner: MomentumSpec<T>, cap: T) -> Self {
        Self {
            momentum: MomentumSpec::Capped {
                inner: Box::new(inner),
                cap,
            },
            step: StepRule::InverseLipschitz,
        }
    }

    pub fn adaptive_restart(inner: MomentumSpec<T>) -> Self {
        Self {
            momentum: MomentumSpec::AdaptiveRestart {
                inner: Box::new(inner),
            },
            step: StepRule::InverseLipschitz,
        }
    }

    pub fn opt_switch(inner: MomentumSpec<T>) -> Self {
        Self {
            momentum: MomentumSpec::OptSwitch {
                inner: Box::new(inner),
            },
            step: StepRule::InverseLipschitz,
        }
    }

    pub fn with_step(mut self, step: StepRule<T>) -> Self {
        self.step = step;
        self
    }

    fn check(&self) -> Result<(), ScheduleError> {
        check_momentum(&self.momentum)?;
        match &self.step {
            StepRule::InverseLipschitz => {}
            StepRule::Fixed(v) => {
                if !(*v > T::zero()) || !v.is_finite() {
                    return Err(ScheduleError::InvalidParameter(
                        "fixed step size must be positive and finite".into(),
                    ));
                }
            }
            StepRule::Sequence(vs) => {
                if vs.is_empty() {
                    return Err(ScheduleError::InvalidParameter(
                        "step-size sequence must be nonempty".into(),
                    ));
                }
                if vs.iter().any(|v| !(*v > T::zero()) || !v.is_finite()) {
                    return Err(ScheduleError::InvalidParameter(
                        "step-size sequence entries must be positive and finite".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Instantiates the runtime schedule. `gram_source` is required only by
    /// `OptSwitch`, which estimates its post-switch momentum from the Gram
    /// spectrum restricted to the support at switch time.
    pub fn build(
        &self,
        lipschitz: T,
        gram_source: Option<&DenseMatrix<T>>,
    ) -> Result<Schedule<T>, ScheduleError> {
        self.check()?;
        if !(lipschitz > T::zero()) || !lipschitz.is_finite() {
            return Err(ScheduleError::InvalidParameter(
                "Lipschitz constant must be positive and finite".into(),
            ));
        }
        let estimator: Option<Box<dyn MomentumEstimator<T>>> = gram_source
            .map(|m| Box::new(GramMomentumEstimator { matrix: m.clone() }) as Box<dyn MomentumEstimator<T>>);
        Ok(Schedule {
            momentum: MomentumState::from_spec(&self.momentum, estimator),
            step: self.step.clone(),
            lipschitz,
            next_k: 1,
            warnings: Vec::new(),
            description: self.describe(),
            band: self.analytic_momentum_band(),
        })
    }

    /// Human/summary-facing description of the policy.
    pub fn describe(&self) -> String {
        fn mom<T: Scalar>(m: &MomentumSpec<T>) -> String {
            match m {
                MomentumSpec::Constant { alpha } => format!("constant(alpha={})", alpha.as_f64()),
                MomentumSpec::FistaBt => "fista-bt".into(),
                MomentumSpec::ChambolleDossal { a } => {
                    format!("chambolle-dossal(a={})", a.as_f64())
                }
                MomentumSpec::Capped { inner, cap } => {
                    format!("capped({}, cap={})", mom(inner), cap.as_f64())
                }
                MomentumSpec::AdaptiveRestart { inner } => {
                    format!("adaptive-restart({})", mom(inner))
                }
                MomentumSpec::OptSwitch { inner } => format!("opt-switch({})", mom(inner)),
            }
        }
        let step = match &self.step {
            StepRule::InverseLipschitz => "lambda=1/L".into(),
            StepRule::Fixed(v) => format!("lambda={}", v.as_f64()),
            StepRule::Sequence(vs) => format!("lambda=sequence[{}]", vs.len()),
        };
        format!("{}, {}", mom(&self.momentum), step)
    }

    /// Constant band `[alpha_lower, alpha_upper]` when the policy guarantees
    /// one a priori. Only constant momentum qualifies; this is what the
    /// explicit identification bounds require.
    pub fn analytic_momentum_band(&self) -> Option<(T, T)> {
        match &self.momentum {
            MomentumSpec::Constant { alpha } => Some((*alpha, *alpha)),
            _ => None,
        }
    }
}

fn check_momentum<T: Scalar>(m: &MomentumSpec<T>) -> Result<(), ScheduleError> {
    match m {
        MomentumSpec::Constant { alpha } => {
            if *alpha < T::zero() || *alpha > T::one() || !alpha.is_finite() {
                return Err(ScheduleError::InvalidParameter(format!(
                    "constant momentum must lie in [0, 1], got {}",
                    alpha.as_f64()
                )));
            }
        }
        MomentumSpec::FistaBt => {}
        MomentumSpec::ChambolleDossal { a } => {
            if !(*a > T::from_f64(2.0)) {
                return Err(ScheduleError::InvalidParameter(
                    "chambolle-dossal requires a > 2".into(),
                ));
            }
        }
        MomentumSpec::Capped { inner, cap } => {
            if *cap < T::zero() || *cap > T::one() || !cap.is_finite() {
                return Err(ScheduleError::InvalidParameter(
                    "momentum cap must lie in [0, 1]".into(),
                ));
            }
            check_momentum(inner)?;
        }
        MomentumSpec::AdaptiveRestart { inner } | MomentumSpec::OptSwitch { inner } => {
            check_momentum(inner)?;
        }
    }
    Ok(())
}

/// Estimates the post-switch momentum for `OptSwitch` policies.
pub trait MomentumEstimator<T: Scalar>: Send {
    fn estimate(&self, support: &[usize], lambda: T) -> Result<T, ScheduleError>;
}

struct GramMomentumEstimator<T: Scalar> {
    matrix: DenseMatrix<T>,
}

impl<T: Scalar> MomentumEstimator<T> for GramMomentumEstimator<T> {
    fn estimate(&self, support: &[usize], lambda: T) -> Result<T, ScheduleError> {
        if support.is_empty() {
            return Err(ScheduleError::EstimatorUnavailable(
                "iterate support is empty".into(),
            ));
        }
        let l = linalg::smallest_restricted_eigenvalue(&self.matrix, support)?;
        optimal_momentum(l, lambda)
    }
}

/// Locally optimal constant momentum `(1 - sqrt(l lambda)) / (1 + sqrt(l lambda))`
/// for a reduced problem with strong-convexity modulus `l` and step `lambda`.
pub fn optimal_momentum<T: Scalar>(l: T, lambda: T) -> Result<T, ScheduleError> {
    if l < T::zero() || !l.is_finite() {
        return Err(ScheduleError::InvalidParameter(
            "strong-convexity modulus must be nonnegative and finite".into(),
        ));
    }
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return Err(ScheduleError::InvalidParameter(
            "step size must be positive and finite".into(),
        ));
    }
    let product = l * lambda;
    if product > T::one() {
        return Err(ScheduleError::InvalidParameter(format!(
            "l * lambda = {} exceeds 1; spectral estimates are inconsistent",
            product.as_f64()
        )));
    }
    let s = product.sqrt();
    Ok((T::one() - s) / (T::one() + s))
}

/// Restart test `<y_next - x_next, x_next - x_curr> > 0`: fires when the
/// momentum direction opposes the latest progress.
pub fn restart_signal<T: Scalar>(
    y_next: &[T],
    x_next: &[T],
    x_curr: &[T],
) -> Result<bool, ScheduleError> {
    if y_next.len() != x_next.len() || x_next.len() != x_curr.len() {
        return Err(ScheduleError::DimensionMismatch(format!(
            "lengths {} / {} / {}",
            y_next.len(),
            x_next.len(),
            x_curr.len()
        )));
    }
    let mut acc = T::zero();
    for i in 0..x_next.len() {
        acc += (y_next[i] - x_next[i]) * (x_next[i] - x_curr[i]);
    }
    Ok(acc > T::zero())
}

/// Objective-based variant of the restart test, `F(x_next) > F(x_curr)`.
/// Equivalent in exact arithmetic, kept for cross-checking.
pub fn restart_signal_objective<T: Scalar>(f_next: T, f_curr: T) -> bool {
    f_next > f_curr
}

/// Per-iteration feedback handed from the solver loop to the schedule.
#[derive(Debug, Clone, Copy, Default)]
pub struct Feedback<'a> {
    pub restart_signal: bool,
    /// Support of the current iterate. Only inspected by `OptSwitch`
    /// policies; pass an empty slice otherwise.
    pub support: &'a [usize],
}

/// Parameters emitted for one iteration.
#[derive(Debug, Clone, Copy)]
pub struct StepParams<T> {
    pub alpha: T,
    pub lambda: T,
    pub restarted: bool,
    pub switched: bool,
}

enum MomentumState<T: Scalar> {
    Constant {
        alpha: T,
    },
    FistaBt {
        t: T,
    },
    ChambolleDossal {
        a: T,
        t: T,
    },
    Capped {
        inner: Box<MomentumState<T>>,
        cap: T,
    },
    AdaptiveRestart {
        inner: Box<MomentumState<T>>,
    },
    OptSwitch {
        inner: Box<MomentumState<T>>,
        estimator: Option<Box<dyn MomentumEstimator<T>>>,
        switched: Option<T>,
        degraded: bool,
    },
}

impl<T: Scalar> MomentumState<T> {
    fn from_spec(
        spec: &MomentumSpec<T>,
        estimator: Option<Box<dyn MomentumEstimator<T>>>,
    ) -> Self {
        match spec {
            MomentumSpec::Constant { alpha } => Self::Constant { alpha: *alpha },
            MomentumSpec::FistaBt => Self::FistaBt { t: T::one() },
            MomentumSpec::ChambolleDossal { a } => Self::ChambolleDossal { a: *a, t: T::one() },
            MomentumSpec::Capped { inner, cap } => Self::Capped {
                inner: Box::new(Self::from_spec(inner, estimator)),
                cap: *cap,
            },
            MomentumSpec::AdaptiveRestart { inner } => Self::AdaptiveRestart {
                inner: Box::new(Self::from_spec(inner, estimator)),
            },
            MomentumSpec::OptSwitch { inner } => Self::OptSwitch {
                inner: Box::new(Self::from_spec(inner, None)),
                estimator,
                switched: None,
                degraded: false,
            },
        }
    }

    fn needs_support(&self) -> bool {
        match self {
            Self::OptSwitch { switched, .. } => switched.is_none(),
            Self::Capped { inner, .. } | Self::AdaptiveRestart { inner } => inner.needs_support(),
            _ => false,
        }
    }

    fn reset_momentum(&mut self) {
        match self {
            Self::Constant { .. } => {}
            Self::FistaBt { t } => *t = T::one(),
            Self::ChambolleDossal { t, .. } => *t = T::one(),
            Self::Capped { inner, .. }
            | Self::AdaptiveRestart { inner }
            | Self::OptSwitch { inner, .. } => inner.reset_momentum(),
        }
    }

    /// Momentum for iteration `k`, advancing internal state.
    fn advance(
        &mut self,
        k: u64,
        feedback: &Feedback,
        lambda: T,
        warnings: &mut Vec<String>,
    ) -> (T, bool, bool) {
        match self {
            Self::Constant { alpha } => (*alpha, false, false),
            Self::FistaBt { t } => {
                let four = T::from_f64(4.0);
                let t_next = (T::one() + (four * *t * *t + T::one()).sqrt()) / T::from_f64(2.0);
                let alpha = (*t - T::one()) / t_next;
                *t = t_next;
                (alpha, false, false)
            }
            Self::ChambolleDossal { a, t } => {
                let t_next = (T::from_f64(k as f64) + *a - T::one()) / *a;
                let alpha = (*t - T::one()) / t_next;
                *t = t_next;
                (alpha, false, false)
            }
            Self::Capped { inner, cap } => {
                let (alpha, r, s) = inner.advance(k, feedback, lambda, warnings);
                (alpha.min(*cap), r, s)
            }
            Self::AdaptiveRestart { inner } => {
                let mut restarted = false;
                if feedback.restart_signal {
                    inner.reset_momentum();
                    restarted = true;
                }
                let (alpha, r, s) = inner.advance(k, feedback, lambda, warnings);
                (alpha, restarted || r, s)
            }
            Self::OptSwitch {
                inner,
                estimator,
                switched,
                degraded,
            } => {
                if let Some(alpha) = switched {
                    return (*alpha, false, false);
                }
                if feedback.restart_signal && !*degraded {
                    let attempt = match estimator {
                        Some(e) => e.estimate(feedback.support, lambda),
                        None => Err(ScheduleError::EstimatorUnavailable(
                            "no Gram source attached at build time".into(),
                        )),
                    };
                    match attempt {
                        Ok(alpha) => {
                            *switched = Some(alpha);
                            return (alpha, false, true);
                        }
                        Err(err) => {
                            warnings.push(format!(
                                "opt-switch momentum estimation failed at k={k} ({err}); \
                                 falling back to adaptive restarts"
                            ));
                            *degraded = true;
                        }
                    }
                }
                let mut restarted = false;
                if feedback.restart_signal && *degraded {
                    inner.reset_momentum();
                    restarted = true;
                }
                let (alpha, r, s) = inner.advance(k, feedback, lambda, warnings);
                (alpha, restarted || r, s)
            }
        }
    }
}

/// Stateful policy executor. One run owns one schedule.
pub struct Schedule<T: Scalar> {
    momentum: MomentumState<T>,
    step: StepRule<T>,
    lipschitz: T,
    next_k: u64,
    warnings: Vec<String>,
    description: String,
    band: Option<(T, T)>,
}

impl<T: Scalar> Schedule<T> {
    /// Emits `(alpha_k, lambda_k)` for iteration `k`. Iterations must be
    /// requested in order, starting from 1.
    pub fn next_params(&mut self, k: u64, feedback: &Feedback) -> Result<StepParams<T>, ScheduleError> {
        if k != self.next_k {
            return Err(ScheduleError::OutOfOrder {
                expected: self.next_k,
                got: k,
            });
        }
        self.next_k += 1;
        let lambda = self.lambda_at(k);
        let (alpha, restarted, switched) =
            self.momentum
                .advance(k, feedback, lambda, &mut self.warnings);
        debug_assert!(alpha >= T::zero() && alpha <= T::one());
        Ok(StepParams {
            alpha,
            lambda,
            restarted,
            switched,
        })
    }

    fn lambda_at(&self, k: u64) -> T {
        match &self.step {
            StepRule::InverseLipschitz => T::one() / self.lipschitz,
            StepRule::Fixed(v) => *v,
            StepRule::Sequence(vs) => {
                let idx = ((k - 1) as usize).min(vs.len() - 1);
                vs[idx]
            }
        }
    }

    pub fn is_fresh(&self) -> bool {
        self.next_k == 1
    }

    pub fn needs_support(&self) -> bool {
        self.momentum.needs_support()
    }

    pub fn describe(&self) -> &str {
        &self.description
    }

    pub fn analytic_momentum_band(&self) -> Option<(T, T)> {
        self.band
    }

    pub fn take_warnings(&mut self) -> Vec<String> {
        std::mem::take(&mut self.warnings)
    }
}

/// Convergence-condition verdicts for a policy.
#[derive(Debug, Clone, Serialize)]
pub struct ValidityReport {
    /// True when every hypothesis of the iterate-convergence analysis is
    /// certified: `lambda_k` nondecreasing with `0 < lambda_k <= 1/L`,
    /// `alpha_k` in `[0, 1]`, and `limsup alpha_k < 1` established
    /// analytically.
    pub convergence_ok: bool,
    pub violations: Vec<String>,
    pub guarantees: Vec<Guarantee>,
    pub momentum_limsup: LimsupVerdict,
    /// Heavy-ball-style (gradient at `x^k`) compatibility: `alpha_k`
    /// nondecreasing with supremum below 1/3 and steps bounded away from 2/L.
    pub sipm_compatible: bool,
    pub sipm_violations: Vec<String>,
    pub horizon: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Guarantee {
    /// Iterates converge to a minimizer.
    #[serde(rename = "iterate-convergence")]
    IterateConvergence,
    /// Finite manifold identification with computable iteration bounds.
    #[serde(rename = "finite-identification-with-explicit-bounds")]
    FiniteIdentificationWithBounds,
    /// Finite manifold identification, existence only.
    #[serde(rename = "finite-identification")]
    FiniteIdentification,
    /// Optimal `O(1/k^2)` objective decay.
    #[serde(rename = "objective-rate-1-over-k2")]
    OptimalObjectiveRate,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LimsupVerdict {
    pub value: f64,
    /// True when the value is a property of the recursion itself; false when
    /// it is only the maximum observed over the validation horizon.
    pub analytic: bool,
}

fn analytic_limsup<T: Scalar>(m: &MomentumSpec<T>) -> Option<T> {
    match m {
        MomentumSpec::Constant { alpha } => Some(*alpha),
        MomentumSpec::FistaBt | MomentumSpec::ChambolleDossal { .. } => Some(T::one()),
        MomentumSpec::Capped { inner, cap } => analytic_limsup(inner).map(|v| v.min(*cap)),
        MomentumSpec::AdaptiveRestart { .. } | MomentumSpec::OptSwitch { .. } => None,
    }
}

/// Supremum of the emitted momentum, when the recursion pins one down.
fn analytic_sup<T: Scalar>(m: &MomentumSpec<T>) -> Option<T> {
    match m {
        MomentumSpec::Constant { alpha } => Some(*alpha),
        MomentumSpec::FistaBt | MomentumSpec::ChambolleDossal { .. } => Some(T::one()),
        MomentumSpec::Capped { inner, cap } => analytic_sup(inner).map(|v| v.min(*cap)),
        // Restarts only ever lower the inner trajectory.
        MomentumSpec::AdaptiveRestart { inner } => analytic_sup(inner),
        MomentumSpec::OptSwitch { .. } => Some(T::one()),
    }
}

fn analytically_nondecreasing<T: Scalar>(m: &MomentumSpec<T>) -> bool {
    match m {
        MomentumSpec::Constant { .. } | MomentumSpec::FistaBt | MomentumSpec::ChambolleDossal { .. } => true,
        MomentumSpec::Capped { inner, .. } => analytically_nondecreasing(inner),
        MomentumSpec::AdaptiveRestart { .. } | MomentumSpec::OptSwitch { .. } => false,
    }
}

fn momentum_lower_bound<T: Scalar>(m: &MomentumSpec<T>) -> T {
    match m {
        MomentumSpec::Constant { alpha } => *alpha,
        // The recursions start from t_1 = 1, so alpha_1 = 0.
        MomentumSpec::FistaBt | MomentumSpec::ChambolleDossal { .. } => T::zero(),
        MomentumSpec::Capped { inner, cap } => momentum_lower_bound(inner).min(*cap),
        MomentumSpec::AdaptiveRestart { inner } | MomentumSpec::OptSwitch { inner } => {
            momentum_lower_bound(inner).min(T::zero())
        }
    }
}

fn is_fista_like<T: Scalar>(m: &MomentumSpec<T>) -> bool {
    matches!(m, MomentumSpec::FistaBt | MomentumSpec::ChambolleDossal { .. })
}

/// Checks a policy over `horizon` feedback-free iterations and reports which
/// convergence results apply.
pub fn validate<T: Scalar>(
    spec: &ScheduleSpec<T>,
    horizon: u64,
    lipschitz: T,
) -> Result<ValidityReport, ScheduleError> {
    if horizon == 0 {
        return Err(ScheduleError::InvalidParameter("horizon must be positive".into()));
    }
    let mut schedule = spec.build(lipschitz, None)?;
    let feedback = Feedback::default();

    let mut violations: Vec<String> = Vec::new();
    let mut max_alpha = T::zero();
    let mut prev_lambda: Option<T> = None;
    let inv_l = T::one() / lipschitz;
    // Slack for `lambda <= 1/L` comparisons so that a step size computed as
    // 1/L elsewhere is not rejected over the last ulp.
    let lam_slack = inv_l * T::epsilon() * T::from_f64(4.0);
    let mut alpha_bad = false;
    let mut lambda_nonpos = false;
    let mut lambda_decreasing = false;
    let mut lambda_too_large = false;

    for k in 1..=horizon {
        let p = schedule.next_params(k, &feedback)?;
        if !alpha_bad && (p.alpha < T::zero() || p.alpha > T::one() || !p.alpha.is_finite()) {
            violations.push(format!(
                "momentum outside [0, 1] at k={k} (alpha={})",
                p.alpha.as_f64()
            ));
            alpha_bad = true;
        }
        max_alpha = max_alpha.max(p.alpha);
        if !lambda_nonpos && !(p.lambda > T::zero()) {
            violations.push(format!("step size not positive at k={k}"));
            lambda_nonpos = true;
        }
        if let Some(prev) = prev_lambda {
            if !lambda_decreasing && p.lambda < prev {
                violations.push(format!(
                    "step size decreases at k={k} ({} -> {})",
                    prev.as_f64(),
                    p.lambda.as_f64()
                ));
                lambda_decreasing = true;
            }
        }
        if !lambda_too_large && p.lambda > inv_l + lam_slack {
            violations.push(format!(
                "step size exceeds 1/L at k={k} (lambda={}, 1/L={})",
                p.lambda.as_f64(),
                inv_l.as_f64()
            ));
            lambda_too_large = true;
        }
        prev_lambda = Some(p.lambda);
    }

    let limsup = match analytic_limsup(&spec.momentum) {
        Some(v) => {
            if v >= T::one() {
                violations.push("momentum limsup equals 1 (must be strictly below 1)".into());
            }
            LimsupVerdict {
                value: v.as_f64(),
                analytic: true,
            }
        }
        None => {
            violations.push(format!(
                "momentum limsup < 1 not certified analytically for this policy \
                 (horizon maximum {})",
                max_alpha.as_f64()
            ));
            LimsupVerdict {
                value: max_alpha.as_f64(),
                analytic: false,
            }
        }
    };

    let convergence_ok = violations.is_empty();

    let mut guarantees: Vec<Guarantee> = Vec::new();
    if convergence_ok {
        guarantees.push(Guarantee::IterateConvergence);
        let lower = momentum_lower_bound(&spec.momentum);
        if lower > T::zero() && spec.analytic_momentum_band().is_some() {
            guarantees.push(Guarantee::FiniteIdentificationWithBounds);
        } else {
            guarantees.push(Guarantee::FiniteIdentification);
        }
    }
    if is_fista_like(&spec.momentum) {
        guarantees.push(Guarantee::OptimalObjectiveRate);
        guarantees.push(Guarantee::FiniteIdentification);
        if matches!(spec.momentum, MomentumSpec::ChambolleDossal { .. }) {
            guarantees.push(Guarantee::IterateConvergence);
        }
    }
    if let MomentumSpec::OptSwitch { inner } = &spec.momentum {
        // Either the switch never fires (inner recursion throughout) or the
        // tail is a constant momentum below 1; identification is finite
        // either way when the inner recursion guarantees it.
        if is_fista_like(inner) && !guarantees.contains(&Guarantee::FiniteIdentification) {
            guarantees.push(Guarantee::FiniteIdentification);
        }
    }
    guarantees.dedup();

    let mut sipm_violations: Vec<String> = Vec::new();
    if !analytically_nondecreasing(&spec.momentum) {
        sipm_violations.push("momentum not guaranteed nondecreasing".into());
    }
    let third = T::one() / T::from_f64(3.0);
    match analytic_sup(&spec.momentum) {
        Some(v) if v < third => {}
        Some(v) => sipm_violations.push(format!(
            "momentum supremum {} not below 1/3",
            v.as_f64()
        )),
        None => sipm_violations.push("momentum supremum not certified".into()),
    }
    if lambda_nonpos || lambda_decreasing {
        sipm_violations.push("step sizes must be positive and nondecreasing".into());
    } else if let Some(lam) = prev_lambda {
        // Constant and sequence rules are nondecreasing here, so the last
        // value is the supremum.
        let two_over_l = T::from_f64(2.0) / lipschitz;
        if lam > two_over_l * T::from_f64(1.0 - 1e-9) {
            sipm_violations.push("step sizes not bounded away from 2/L".into());
        }
    }
    if alpha_bad {
        sipm_violations.push("momentum outside [0, 1]".into());
    }
    let sipm_compatible = sipm_violations.is_empty();

    Ok(ValidityReport {
        convergence_ok,
        violations,
        guarantees,
        momentum_limsup: limsup,
        sipm_compatible,
        sipm_violations,
        horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn take_alphas(spec: &ScheduleSpec<f64>, n: u64) -> Vec<f64> {
        let mut s = spec.build(1.0, None).unwrap();
        (1..=n)
            .map(|k| s.next_params(k, &Feedback::default()).unwrap().alpha)
            .collect()
    }

    #[test]
    fn fista_bt_first_momenta() {
        let alphas = take_alphas(&ScheduleSpec::fista_bt(), 3);
        assert_eq!(alphas[0], 0.0);
        // t2 = (1 + sqrt(5))/2, t3 = (1 + sqrt(4 t2^2 + 1))/2,
        // alpha_2 = (t2 - 1)/t3.
        let t2 = (1.0 + 5.0_f64.sqrt()) / 2.0;
        let t3 = (1.0 + (4.0 * t2 * t2 + 1.0).sqrt()) / 2.0;
        let expected = (t2 - 1.0) / t3;
        assert!((alphas[1] - expected).abs() < 1e-15);
        assert!((alphas[1] - 0.2817532).abs() < 1e-6);
    }

    #[test]
    fn chambolle_dossal_fifth_momentum() {
        let alphas = take_alphas(&ScheduleSpec::chambolle_dossal(3.0), 5);
        // t5 = 2, t6 = 7/3, alpha_5 = 1 / (7/3) = 3/7.
        assert!((alphas[4] - 3.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn fista_bt_t_growth_drives_momentum_to_one() {
        let mut t = 1.0_f64;
        for k in 1..=10_000u64 {
            t = (1.0 + (4.0 * t * t + 1.0).sqrt()) / 2.0;
            // t_{k+1} >= (k + 2) / 2 under 1-based indexing of t_1 = 1.
            assert!(t >= (k as f64 + 2.0) / 2.0 - 1e-9, "k={k} t={t}");
        }
        let alphas = take_alphas(&ScheduleSpec::fista_bt(), 10_000);
        assert!(*alphas.last().unwrap() > 0.999);
    }

    #[test]
    fn capped_never_exceeds_cap() {
        let spec = ScheduleSpec::capped(MomentumSpec::FistaBt, 0.35);
        for a in take_alphas(&spec, 500) {
            assert!(a <= 0.35);
        }
    }

    #[test]
    fn out_of_order_iteration_rejected() {
        let mut s = ScheduleSpec::<f64>::fista_bt().build(1.0, None).unwrap();
        s.next_params(1, &Feedback::default()).unwrap();
        assert!(matches!(
            s.next_params(3, &Feedback::default()),
            Err(ScheduleError::OutOfOrder { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn adaptive_restart_resets_momentum() {
        let spec = ScheduleSpec::<f64>::adaptive_restart(MomentumSpec::FistaBt);
        let mut s = spec.build(1.0, None).unwrap();
        for k in 1..=10 {
            s.next_params(k, &Feedback::default()).unwrap();
        }
        let fired = s
            .next_params(
                11,
                &Feedback {
                    restart_signal: true,
                    support: &[],
                },
            )
            .unwrap();
        assert!(fired.restarted);
        assert_eq!(fired.alpha, 0.0);
        let after = s.next_params(12, &Feedback::default()).unwrap();
        assert!(after.alpha > 0.0 && after.alpha < 0.3);
    }

    struct FixedEstimator(f64);
    impl MomentumEstimator<f64> for FixedEstimator {
        fn estimate(&self, _support: &[usize], _lambda: f64) -> Result<f64, ScheduleError> {
            Ok(self.0)
        }
    }

    #[test]
    fn opt_switch_switches_exactly_once() {
        let spec = ScheduleSpec::<f64>::opt_switch(MomentumSpec::FistaBt);
        let mut s = spec.build(1.0, None).unwrap();
        // Swap in a deterministic estimator.
        if let MomentumState::OptSwitch { estimator, .. } = &mut s.momentum {
            *estimator = Some(Box::new(FixedEstimator(0.625)));
        } else {
            panic!("expected opt-switch state");
        }
        for k in 1..=5 {
            let p = s.next_params(k, &Feedback::default()).unwrap();
            assert!(!p.switched);
        }
        let sw = s
            .next_params(
                6,
                &Feedback {
                    restart_signal: true,
                    support: &[0, 1],
                },
            )
            .unwrap();
        assert!(sw.switched);
        assert_eq!(sw.alpha, 0.625);
        let mut switch_count = 1;
        for k in 7..=50 {
            let p = s
                .next_params(
                    k,
                    &Feedback {
                        restart_signal: k % 7 == 0,
                        support: &[0, 1],
                    },
                )
                .unwrap();
            assert_eq!(p.alpha, 0.625);
            if p.switched {
                switch_count += 1;
            }
        }
        assert_eq!(switch_count, 1);
    }

    #[test]
    fn opt_switch_without_gram_source_degrades_to_restart() {
        let spec = ScheduleSpec::<f64>::opt_switch(MomentumSpec::FistaBt);
        let mut s = spec.build(1.0, None).unwrap();
        for k in 1..=4 {
            s.next_params(k, &Feedback::default()).unwrap();
        }
        let p = s
            .next_params(
                5,
                &Feedback {
                    restart_signal: true,
                    support: &[0],
                },
            )
            .unwrap();
        assert!(!p.switched);
        assert!(p.restarted);
        assert_eq!(p.alpha, 0.0);
        assert_eq!(s.take_warnings().len(), 1);
    }

    #[test]
    fn optimal_momentum_values() {
        assert_eq!(optimal_momentum::<f64>(1.0, 1.0).unwrap(), 0.0);
        assert!((optimal_momentum::<f64>(0.25, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((optimal_momentum::<f64>(0.01, 1.0).unwrap() - 0.9 / 1.1).abs() < 1e-15);
        assert!(optimal_momentum::<f64>(1.5, 1.0).is_err());
    }

    #[test]
    fn restart_signal_cases() {
        // y - x_next = (1, 0), x_next - x = (1, 0): positive inner product.
        assert!(restart_signal(&[2.0, 0.0], &[1.0, 0.0], &[0.0, 0.0]).unwrap());
        // No progress: zero inner product does not fire.
        assert!(!restart_signal(&[2.0, 0.0], &[1.0, 0.0], &[1.0, 0.0]).unwrap());
        // Opposing directions.
        assert!(!restart_signal(&[2.0, 0.0], &[1.0, 0.0], &[2.0, 0.0]).unwrap());
        assert!(restart_signal(&[1.0], &[1.0, 2.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn validate_accepts_plain_constant() {
        let report = validate(&ScheduleSpec::constant(0.5), 1000, 2.0).unwrap();
        assert!(report.convergence_ok, "{:?}", report.violations);
        assert!(report.momentum_limsup.analytic);
        assert!(report.guarantees.contains(&Guarantee::IterateConvergence));
        assert!(report
            .guarantees
            .contains(&Guarantee::FiniteIdentificationWithBounds));
    }

    #[test]
    fn validate_flags_unit_momentum() {
        let report = validate(&ScheduleSpec::constant(1.0), 1000, 2.0).unwrap();
        assert!(!report.convergence_ok);
        assert!(report.violations.iter().any(|v| v.contains("limsup")));
    }

    #[test]
    fn validate_fista_bt_keeps_identification_guarantee() {
        let report = validate(&ScheduleSpec::<f64>::fista_bt(), 1000, 2.0).unwrap();
        assert!(!report.convergence_ok);
        assert!(report.guarantees.contains(&Guarantee::FiniteIdentification));
        assert!(report.guarantees.contains(&Guarantee::OptimalObjectiveRate));
        assert!(report.momentum_limsup.analytic);
        assert_eq!(report.momentum_limsup.value, 1.0);
    }

    #[test]
    fn validate_accepts_capped_fista() {
        let spec = ScheduleSpec::capped(MomentumSpec::FistaBt, 0.99);
        let report = validate(&spec, 1000, 2.0).unwrap();
        assert!(report.convergence_ok, "{:?}", report.violations);
        assert!((report.momentum_limsup.value - 0.99).abs() < 1e-15);
    }

    #[test]
    fn validate_flags_decreasing_steps() {
        let spec = ScheduleSpec::constant(0.2)
            .with_step(StepRule::Sequence(vec![0.5, 0.4, 0.3]));
        let report = validate(&spec, 100, 2.0).unwrap();
        assert!(!report.convergence_ok);
        assert!(report.violations.iter().any(|v| v.contains("decreases")));
    }

    #[test]
    fn validate_flags_oversized_steps() {
        let spec = ScheduleSpec::constant(0.2).with_step(StepRule::Fixed(0.9));
        let report = validate(&spec, 100, 2.0).unwrap();
        assert!(!report.convergence_ok);
        assert!(report.violations.iter().any(|v| v.contains("exceeds 1/L")));
    }

    #[test]
    fn sipm_compatibility_verdicts() {
        let ok = validate(&ScheduleSpec::capped(MomentumSpec::FistaBt, 0.3), 100, 2.0).unwrap();
        assert!(ok.sipm_compatible, "{:?}", ok.sipm_violations);
        let high = validate(&ScheduleSpec::constant(0.5), 100, 2.0).unwrap();
        assert!(!high.sipm_compatible);
        let restart =
            validate(&ScheduleSpec::<f64>::adaptive_restart(MomentumSpec::FistaBt), 100, 2.0)
                .unwrap();
        assert!(!restart.sipm_compatible);
    }

    #[test]
    fn validate_is_pure() {
        let spec = ScheduleSpec::capped(MomentumSpec::FistaBt, 0.7);
        let a = validate(&spec, 500, 3.0).unwrap();
        let b = validate(&spec, 500, 3.0).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
