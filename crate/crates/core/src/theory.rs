//! Quantitative side of the convergence analysis: the root `ξ_m` of
//! `ρ(u) = θ t_m u`, the threshold `θ₀`, the sequence recurrence
//! `y_k <= y_{k−1}(1 − w_k y_{k−1}) ⇒ 1/y_m >= 1/y_n + Σ w_k`, rate envelopes
//! with free constants, and log-log slope fitting.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::greedy::{RunTrace, Sequence};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("theta = {theta:e} outside (0, theta0 = {theta0:e}]")]
    ThetaOutOfRange { theta: f64, theta0: f64 },
    #[error("weakness t = {0:e} must lie in (0, 1]")]
    InvalidWeakness(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("p = {p} is inconsistent with q = {q} (need p = q/(q-1))")]
    PqMismatch { p: f64, q: f64 },
    #[error("only {points} usable points, need at least 4")]
    InsufficientData { points: usize },
    #[error("calibration failed: {0}")]
    CalibrationFailed(String),
    #[error("rho(u)/u decreases near u = {at:e}")]
    NonMonotoneModulus { at: f64 },
}

/// A modulus of smoothness `ρ(u)`.
#[derive(Clone)]
pub enum ModulusSpec<T> {
    /// `ρ(u) = γ u^q`
    PowerType { gamma: T, q: T },
    /// Any even convex `ρ` with `ρ(0) = 0` and `ρ(u)/u → 0`.
    Custom(Arc<dyn Fn(T) -> T + Send + Sync>),
}

impl<T: Scalar> fmt::Debug for ModulusSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModulusSpec::PowerType { gamma, q } => write!(f, "PowerType {{ gamma: {gamma}, q: {q} }}"),
            ModulusSpec::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl<T: Scalar> ModulusSpec<T> {
    pub fn power_type(gamma: T, q: T) -> Result<Self, TheoryError> {
        if !(gamma > T::zero()) || !gamma.is_finite() || !(q > T::one() && q <= T::lit(2.0)) {
            return Err(TheoryError::InvalidParameter(format!("need gamma > 0 and q in (1, 2], got gamma={gamma}, q={q}")));
        }
        Ok(ModulusSpec::PowerType { gamma, q })
    }

    pub fn rho(&self, u: T) -> T {
        match self {
            ModulusSpec::PowerType { gamma, q } => *gamma * u.abs().powf(*q),
            ModulusSpec::Custom(f) => f(u.abs()),
        }
    }

    /// `s(u) = ρ(u)/u`
    pub fn s(&self, u: T) -> T {
        match self {
            ModulusSpec::PowerType { gamma, q } => *gamma * u.powf(*q - T::one()),
            ModulusSpec::Custom(f) => f(u) / u,
        }
    }

    /// Checks that `s` is non-decreasing on a 200-point grid of `(0, 2]`.
    pub fn validate(&self) -> Result<(), TheoryError> {
        let mut prev = T::zero();
        for i in 1..=200 {
            let u = T::from_count(i) / T::lit(100.0);
            let s = self.s(u);
            if !s.is_finite() || s < prev * (T::one() - T::tol(1e-12)) {
                return Err(TheoryError::NonMonotoneModulus { at: u.to_f64_lossy() });
            }
            prev = s;
        }
        Ok(())
    }
}

/// `θ₀ = s(2) = ρ(2)/2`
pub fn theta0<T: Scalar>(modulus: &ModulusSpec<T>) -> T {
    modulus.rho(T::lit(2.0)) / T::lit(2.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiSolution<T> {
    pub xi: T,
    /// The root lies below the smallest bracket point; `xi` is that point.
    pub underflow: bool,
    pub iterations: usize,
}

/// Unique root in `(0, 2]` of `ρ(u) = θ t u`, i.e. of `s(u) = θ t`, by
/// bisection in `log u` on the bracket `[1e−300, 2]`.
pub fn solve_xi<T: Scalar>(modulus: &ModulusSpec<T>, t: T, theta: T) -> Result<XiSolution<T>, TheoryError> {
    if !(t > T::zero() && t <= T::one()) {
        return Err(TheoryError::InvalidWeakness(t.to_f64_lossy()));
    }
    let th0 = theta0(modulus);
    if !(theta > T::zero()) || theta > th0 * (T::one() + T::tol(1e-12)) {
        return Err(TheoryError::ThetaOutOfRange { theta: theta.to_f64_lossy(), theta0: th0.to_f64_lossy() });
    }
    let target = theta * t;
    let mut lo = T::lit(1e-300).max(T::min_positive_value());
    let mut hi = T::lit(2.0);
    if modulus.s(lo) >= target {
        return Ok(XiSolution { xi: lo, underflow: true, iterations: 0 });
    }
    if modulus.s(hi) <= target {
        return Ok(XiSolution { xi: hi, underflow: false, iterations: 0 });
    }
    let mut iterations = 0;
    while hi / lo > T::one() + T::lit(4.0) * T::epsilon() && iterations < 400 {
        iterations += 1;
        // geometric midpoint while the bracket spans orders of magnitude
        let mid = if hi / lo > T::lit(4.0) { (T::lit(0.5) * (lo.ln() + hi.ln())).exp() } else { T::lit(0.5) * (lo + hi) };
        let mid = if mid > lo && mid < hi { mid } else { T::lit(0.5) * (lo + hi) };
        if mid <= lo || mid >= hi {
            break;
        }
        let s = modulus.s(mid);
        if s == target {
            return Ok(XiSolution { xi: mid, underflow: false, iterations });
        }
        if s < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(XiSolution { xi: T::lit(0.5) * (lo + hi), underflow: false, iterations })
}

/// Closed form `(θ t / γ)^{1/(q−1)}` for power-type moduli.
pub fn xi_closed_form<T: Scalar>(gamma: T, q: T, t: T, theta: T) -> T {
    (theta * t / gamma).powf(T::one() / (q - T::one()))
}

/// `Σ_{k<=m} t_k ξ_k(θ)`; its divergence is the convergence condition.
pub fn divergence_sum<T: Scalar>(modulus: &ModulusSpec<T>, weakness: &Sequence<T>, theta: T, m: usize) -> Result<T, TheoryError> {
    let mut sum = T::zero();
    for k in 1..=m {
        let t = weakness.at(k);
        sum += t * solve_xi(modulus, t, theta)?.xi;
    }
    Ok(sum)
}

/// `Σ_{k<=m} t_k^p`
pub fn power_sum<T: Scalar>(weakness: &Sequence<T>, p: T, m: usize) -> T {
    (1..=m).map(|k| weakness.at(k).powf(p)).sum()
}

/// `A_q = 2 (4γ)^{1/(q−1)}`
pub fn a_q<T: Scalar>(gamma: T, q: T) -> T {
    T::lit(2.0) * (T::lit(4.0) * gamma).powf(T::one() / (q - T::one()))
}

/// `C₀ = 1 + C₁` from a sublevel radius `C₁`.
pub fn c0<T: Scalar>(sublevel_radius: T) -> T {
    T::one() + sublevel_radius
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RecurrenceCheck {
    /// First `k` with `y_k > y_{k−1}(1 − w_k y_{k−1})` (or `y_k < 0`).
    pub hypothesis_violation: Option<usize>,
    /// First `m` with `1/y_m < 1/y_n + Σ_{k=n+1}^m w_k`.
    pub conclusion_violation: Option<usize>,
}

impl RecurrenceCheck {
    pub fn passes(&self) -> bool {
        self.hypothesis_violation.is_none() && self.conclusion_violation.is_none()
    }

    pub fn first_violation(&self) -> Option<usize> {
        match (self.hypothesis_violation, self.conclusion_violation) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

/// Checks the recurrence hypothesis and conclusion for `k > n`.
///
/// `y[k]` is `y_k` for `k = 0..=M`; `w[k − 1]` is `w_k` for `k = 1..=M`.
/// Both checks allow a slack of `1e−10` relative to the magnitude of the
/// compared quantities.
pub fn verify_recurrence<T: Scalar>(y: &[T], w: &[T], n: usize) -> RecurrenceCheck {
    let mut out = RecurrenceCheck::default();
    let slack = T::tol(1e-10);
    let last = y.len().saturating_sub(1).min(w.len());
    for k in (n + 1)..=last {
        let (prev, cur, wk) = (y[k - 1], y[k], w[k - 1]);
        let bound = prev * (T::one() - wk * prev);
        if cur < T::zero() || cur - bound > slack * prev.abs().max(T::one()) || !cur.is_finite() {
            out.hypothesis_violation = Some(k);
            break;
        }
    }
    if n < y.len() {
        let inv_n = T::one() / y[n];
        let mut sum = T::zero();
        for m in (n + 1)..=last {
            sum += w[m - 1];
            if y[m] == T::zero() {
                continue;
            }
            let lhs = T::one() / y[m];
            let rhs = inv_n + sum;
            if rhs - lhs > slack * lhs.abs().max(T::one()) {
                out.conclusion_violation = Some(m);
                break;
            }
        }
    }
    out
}

/// Largest weights for which a non-increasing positive sequence satisfies the
/// recurrence hypothesis with equality: `w_k = (1 − y_k / y_{k−1}) / y_{k−1}`.
pub fn tight_weights<T: Scalar>(y: &[T]) -> Vec<T> {
    y.windows(2)
        .map(|p| if p[0] > T::zero() { (T::one() - p[1] / p[0]) / p[0] } else { T::zero() })
        .collect()
}

/// Sequence `y_k = gap_k^{1/(q−1)}` from an energy trace, with `y_0` from the
/// initial energy.
pub fn gap_sequence<T: Scalar>(trace: &RunTrace<T>, reference: T, q: T) -> Vec<T> {
    std::iter::once(trace.initial_energy)
        .chain(trace.records.iter().map(|r| r.energy))
        .map(|en| (en - reference).max(T::zero()).powf(T::one() / (q - T::one())))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeKind {
    /// `max(2ε, C A^κ (C_E + Σ t^p)^{1−q})` for the Chebyshev algorithm.
    Chebyshev,
    /// `(1 + C₁ Σ t^p)^{1−q}` for the relaxed algorithm with target in `A₁(D)`.
    Relaxed,
    /// Same shape as `Chebyshev`, for free relaxation.
    FreeRelaxation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeParams<T> {
    pub epsilon: T,
    pub a: T,
    pub gamma: T,
    pub q: T,
    /// Dual exponent; must equal `q/(q−1)` when given.
    pub p: Option<T>,
    /// Exponent on `A(ε)`; the statements use either 1 or `q`.
    pub kappa: T,
    pub weakness: Sequence<T>,
}

impl<T: Scalar> EnvelopeParams<T> {
    pub fn new(q: T, weakness: Sequence<T>) -> Self {
        Self { epsilon: T::zero(), a: T::one(), gamma: T::one(), q, p: None, kappa: q, weakness }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration<T> {
    pub c: T,
    pub c_e: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateEnvelope<T> {
    pub kind: EnvelopeKind,
    pub params: EnvelopeParams<T>,
    pub calibration: Calibration<T>,
    p: T,
}

pub fn rate_envelope<T: Scalar>(
    kind: EnvelopeKind,
    params: EnvelopeParams<T>,
    calibration: Calibration<T>,
) -> Result<RateEnvelope<T>, TheoryError> {
    let q = params.q;
    if !(q > T::one() && q <= T::lit(2.0)) {
        return Err(TheoryError::InvalidParameter(format!("q = {q} outside (1, 2]")));
    }
    let p = q / (q - T::one());
    if let Some(given) = params.p {
        if (given - p).abs() > T::tol(1e-12) * p {
            return Err(TheoryError::PqMismatch { p: given.to_f64_lossy(), q: q.to_f64_lossy() });
        }
    }
    if !(params.epsilon >= T::zero()) || !(params.a >= T::zero()) || !(calibration.c >= T::zero()) {
        return Err(TheoryError::InvalidParameter("epsilon, A and C must be non-negative".into()));
    }
    Ok(RateEnvelope { kind, params, calibration, p })
}

impl<T: Scalar> RateEnvelope<T> {
    pub fn p(&self) -> T {
        self.p
    }

    pub fn value(&self, m: usize) -> T {
        let sum = power_sum(&self.params.weakness, self.p, m);
        self.value_with_sum(sum)
    }

    fn value_with_sum(&self, sum: T) -> T {
        let e = T::one() - self.params.q;
        match self.kind {
            EnvelopeKind::Relaxed => (T::one() + self.calibration.c * sum).powf(e),
            EnvelopeKind::Chebyshev | EnvelopeKind::FreeRelaxation => {
                let decay = self.calibration.c * self.params.a.powf(self.params.kappa) * (self.calibration.c_e + sum).powf(e);
                decay.max(T::lit(2.0) * self.params.epsilon)
            }
        }
    }

    /// Values for `m = 1..=m_max`.
    pub fn values(&self, m_max: usize) -> Vec<T> {
        let mut sum = T::zero();
        (1..=m_max)
            .map(|k| {
                sum += self.params.weakness.at(k).powf(self.p);
                self.value_with_sum(sum)
            })
            .collect()
    }
}

/// Calibrates the free constant so the envelope equals `gap1` at `m = 1`
/// (`C_E = 1`).
pub fn calibrate_at_first<T: Scalar>(kind: EnvelopeKind, params: &EnvelopeParams<T>, gap1: T) -> Result<Calibration<T>, TheoryError> {
    let q = params.q;
    let p = q / (q - T::one());
    let t1p = params.weakness.at(1).powf(p);
    if !(gap1 > T::zero()) || !gap1.is_finite() {
        return Err(TheoryError::CalibrationFailed(format!("gap at m = 1 is {gap1}")));
    }
    match kind {
        EnvelopeKind::Relaxed => {
            if gap1 >= T::one() {
                return Err(TheoryError::CalibrationFailed(format!("gap at m = 1 is {gap1} >= 1")));
            }
            if !(t1p > T::zero()) {
                return Err(TheoryError::CalibrationFailed("t_1 = 0".into()));
            }
            let c1 = (gap1.powf(T::one() / (T::one() - q)) - T::one()) / t1p;
            Ok(Calibration { c: c1, c_e: T::one() })
        }
        EnvelopeKind::Chebyshev | EnvelopeKind::FreeRelaxation => {
            let c_e = T::one();
            let scale = params.a.powf(params.kappa) * (c_e + t1p).powf(T::one() - q);
            if !(scale > T::zero()) {
                return Err(TheoryError::CalibrationFailed("degenerate envelope scale".into()));
            }
            Ok(Calibration { c: gap1 / scale, c_e })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeCheck<T> {
    pub max_ratio: T,
    pub worst_m: usize,
}

impl<T: Scalar> EnvelopeCheck<T> {
    pub fn holds(&self, tol: T) -> bool {
        self.max_ratio <= T::one() + tol
    }
}

/// Max over `m >= 2` of `gap(m) / envelope(m)`; `gaps[i]` is the gap at
/// `m = i + 1`.
pub fn check_envelope_gaps<T: Scalar>(gaps: &[T], envelope: &RateEnvelope<T>) -> EnvelopeCheck<T> {
    let env = envelope.values(gaps.len());
    let mut out = EnvelopeCheck { max_ratio: T::zero(), worst_m: 0 };
    for (i, (&g, &e)) in gaps.iter().zip(&env).enumerate().skip(1) {
        let ratio = if g <= T::zero() { T::zero() } else { g / e };
        if ratio > out.max_ratio || ratio.is_nan() {
            out = EnvelopeCheck { max_ratio: ratio, worst_m: i + 1 };
        }
    }
    out
}

pub fn check_envelope<T: Scalar>(trace: &RunTrace<T>, envelope: &RateEnvelope<T>, reference: T) -> EnvelopeCheck<T> {
    let gaps: Vec<T> = trace.records.iter().map(|r| r.energy - reference).collect();
    check_envelope_gaps(&gaps, envelope)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit<T> {
    pub slope: T,
    pub intercept: T,
    pub points: usize,
}

/// Least-squares line through `(log x, log y)`, skipping `y <= 1e−14`.
pub fn fit_log_log<T: Scalar>(xs: &[T], ys: &[T]) -> Result<LogLogFit<T>, TheoryError> {
    let floor = T::lit(1e-14);
    let pts: Vec<(T, T)> = xs
        .iter()
        .zip(ys)
        .filter(|&(&x, &y)| x > T::zero() && y > floor && y.is_finite())
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(TheoryError::InsufficientData { points: pts.len() });
    }
    let n = T::from_count(pts.len());
    let mx = pts.iter().map(|p| p.0).sum::<T>() / n;
    let my = pts.iter().map(|p| p.1).sum::<T>() / n;
    let sxy: T = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: T = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if !(sxx > T::zero()) {
        return Err(TheoryError::InsufficientData { points: 1 });
    }
    let slope = sxy / sxx;
    Ok(LogLogFit { slope, intercept: my - slope * mx, points: pts.len() })
}

/// What the slope is fitted to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitTarget<T> {
    /// `E(G_m) − reference`
    Gap,
    /// `((E(G_m) − reference) / scale)^{1/q}`, the residual norm for
    /// energies of the form `scale · ‖r‖^q` (least squares: scale ½, q 2).
    Residual { scale: T, q: T },
}

/// Slope of the chosen target against `m` on `log-log` axes over
/// `m_min <= m <= m_max`.
pub fn fit_rate_slope<T: Scalar>(
    trace: &RunTrace<T>,
    m_min: usize,
    m_max: Option<usize>,
    reference: T,
    target: FitTarget<T>,
) -> Result<LogLogFit<T>, TheoryError> {
    let (xs, ys): (Vec<T>, Vec<T>) = trace
        .records
        .iter()
        .filter(|r| r.m >= m_min && m_max.is_none_or(|hi| r.m <= hi))
        .map(|r| {
            let gap = (r.energy - reference).max(T::zero());
            let y = match target {
                FitTarget::Gap => gap,
                FitTarget::Residual { scale, q } => (gap / scale).powf(T::one() / q),
            };
            (T::from_count(r.m), y)
        })
        .unzip();
    fit_log_log(&xs, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xi_examples() {
        let m = ModulusSpec::power_type(0.5_f64, 2.0).unwrap();
        let s = solve_xi(&m, 1.0, 0.1).unwrap();
        assert!((s.xi - 0.2).abs() < 1e-12);
        let m = ModulusSpec::power_type(1.0_f64, 1.5).unwrap();
        let s = solve_xi(&m, 1.0, 0.01).unwrap();
        assert!((s.xi - 1e-4).abs() < 1e-14);
        assert!(!s.underflow);
    }

    #[test]
    fn xi_errors() {
        let m = ModulusSpec::power_type(0.5, 2.0).unwrap();
        assert!(matches!(solve_xi(&m, 1.0, 1.5), Err(TheoryError::ThetaOutOfRange { .. })));
        assert!(matches!(solve_xi(&m, 0.0, 0.5), Err(TheoryError::InvalidWeakness(_))));
        assert!(solve_xi(&m, 1.0, 1.0).unwrap().xi <= 2.0);
    }

    #[test]
    fn xi_underflow_flag() {
        let m = ModulusSpec::power_type(1.0, 1.01).unwrap();
        let s = solve_xi(&m, 1e-5, 1e-3).unwrap();
        assert!(s.underflow);
        assert!(s.xi > 0.0);
    }

    #[test]
    fn theta0_examples() {
        assert_eq!(theta0(&ModulusSpec::power_type(0.5, 2.0).unwrap()), 1.0);
        assert_eq!(theta0(&ModulusSpec::power_type(1.0, 2.0).unwrap()), 2.0);
        assert!((theta0(&ModulusSpec::power_type(1.0_f64, 1.5).unwrap()) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn custom_modulus() {
        // ρ(u) = sqrt(1 + u²) − 1 is even, convex, with ρ(u)/u increasing
        let m: ModulusSpec<f64> = ModulusSpec::Custom(Arc::new(|u: f64| (1.0 + u * u).sqrt() - 1.0));
        m.validate().unwrap();
        let s = solve_xi(&m, 0.5, 0.2).unwrap();
        assert!((m.s(s.xi) - 0.1).abs() < 1e-12 * 0.1);
        let bad: ModulusSpec<f64> = ModulusSpec::Custom(Arc::new(|u: f64| u * (2.0 - u).max(0.0)));
        assert!(bad.validate().is_err());
    }

    #[test]
    fn recurrence_examples() {
        // y_k = 1/(k+1), w_k = 1 meets the conclusion with equality, but not
        // the hypothesis: y_0 (1 − y_0) = 0 < y_1.
        let y: Vec<f64> = (0..20).map(|k| 1.0 / (k as f64 + 1.0)).collect();
        let w = vec![1.0; 19];
        let r = verify_recurrence(&y, &w, 0);
        assert_eq!(r.conclusion_violation, None);
        assert_eq!(r.hypothesis_violation, Some(1));
        // y_k = y_{k−1}(1 − y_{k−1}) satisfies both
        let mut y = vec![0.5_f64];
        for k in 1..20 {
            y.push(y[k - 1] * (1.0 - y[k - 1]));
        }
        assert!(verify_recurrence(&y, &w, 0).passes());
        let y = vec![0.5; 10];
        let w = vec![0.0; 9];
        assert!(verify_recurrence(&y, &w, 0).passes());
        let mut y = vec![0.5_f64];
        for k in 1..10 {
            y.push(y[k - 1] * (1.0 - y[k - 1]));
        }
        y[6] = y[5];
        let r = verify_recurrence(&y, &vec![1.0; 9], 0);
        assert_eq!(r.hypothesis_violation, Some(6));
    }

    #[test]
    fn envelope_examples() {
        let p = EnvelopeParams::new(2.0, Sequence::Constant(1.0));
        let env = rate_envelope(EnvelopeKind::Relaxed, p.clone(), Calibration { c: 1.0, c_e: 1.0 }).unwrap();
        for m in 1..10 {
            assert!((env.value(m) - 1.0 / (1.0 + m as f64)).abs() < 1e-15);
        }
        let env = rate_envelope(EnvelopeKind::Chebyshev, p.clone(), Calibration { c: 1.0, c_e: 3.0 }).unwrap();
        assert!((env.value(5) - 1.0 / 8.0).abs() < 1e-15);
        let bad = EnvelopeParams { p: Some(3.0), ..p };
        assert!(matches!(
            rate_envelope(EnvelopeKind::Chebyshev, bad, Calibration { c: 1.0, c_e: 1.0 }),
            Err(TheoryError::PqMismatch { .. })
        ));
    }

    #[test]
    fn envelope_with_decaying_weakness() {
        let p = EnvelopeParams::new(2.0_f64, Sequence::power_law(0.25));
        let env = rate_envelope(EnvelopeKind::Chebyshev, p, Calibration { c: 1.0, c_e: 0.0 }).unwrap();
        let ratio = env.value(40_000) / env.value(10_000);
        assert!((ratio - 0.5).abs() < 0.01, "{ratio}");
    }

    #[test]
    fn envelope_check_examples() {
        let p = EnvelopeParams::new(2.0_f64, Sequence::Constant(1.0));
        let env = rate_envelope(EnvelopeKind::Relaxed, p.clone(), Calibration { c: 1.0, c_e: 1.0 }).unwrap();
        let gaps = env.values(20);
        let cal = calibrate_at_first(EnvelopeKind::Relaxed, &p, gaps[0]).unwrap();
        assert!((cal.c - 1.0).abs() < 1e-12);
        let c = check_envelope_gaps(&gaps, &env);
        assert!((c.max_ratio - 1.0).abs() < 1e-12 && c.holds(1e-9));
        let inflated: Vec<f64> = gaps.iter().enumerate().map(|(i, g)| if i == 0 { *g } else { g * 1.01 }).collect();
        let c = check_envelope_gaps(&inflated, &env);
        assert!((c.max_ratio - 1.01).abs() < 1e-12 && !c.holds(1e-6));
    }

    #[test]
    fn fit_examples() {
        let xs: Vec<f64> = (1..=20).map(|m| m as f64).collect();
        let inv: Vec<f64> = xs.iter().map(|m| 1.0 / m).collect();
        assert!((fit_log_log(&xs, &inv).unwrap().slope + 1.0).abs() < 1e-9);
        let half: Vec<f64> = xs.iter().map(|m| 5.0 / m.sqrt()).collect();
        assert!((fit_log_log(&xs, &half).unwrap().slope + 0.5).abs() < 1e-9);
        let tiny = vec![1e-20; 20];
        assert!(matches!(fit_log_log(&xs, &tiny), Err(TheoryError::InsufficientData { points: 0 })));
    }

    #[test]
    fn helpers() {
        assert!((a_q(0.5_f64, 2.0) - 4.0).abs() < 1e-15);
        assert_eq!(c0(2.0), 3.0);
        let w = tight_weights(&[1.0_f64, 0.5, 0.25]);
        assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 1.0).abs() < 1e-15);
    }
}
