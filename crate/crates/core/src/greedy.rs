//! Greedy iteration drivers: the Chebyshev, relaxed and free-relaxation
//! algorithms, plus the generic driver for the simple update steps.
//!
//! Every run starts from `G_0 = 0` and produces a [`RunTrace`]. The driver
//! asserts the weakness certificate, monotonicity (for the monotone rules),
//! sublevel confinement and the ℓ₁ budget of the relaxed algorithm at every
//! iteration.

use std::fmt;
use std::time::Instant;

use thiserror::Error;

use crate::dictionaries::{
    select_e_greedy_prescribed, select_gradient_greedy_with, synthesis_l1, Atom, Dictionary, DictionaryError,
    SelectionPolicy,
};
use crate::inner_solvers::{
    minimize_free_relaxation, minimize_subspace, Restriction, SolverError,
};
use crate::objectives::{Objective, ObjectiveError};
use crate::vecops::{self, dot};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GreedyError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Dictionary(#[from] DictionaryError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// A real sequence indexed from `k = 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum Sequence<T> {
    Constant(T),
    /// Explicit values; the last one repeats past the end.
    Explicit(Vec<T>),
    /// `scale · k^(−exponent)`
    PowerLaw { scale: T, exponent: T },
}

/// Weakness sequence `τ = {t_k}` with `t_k ∈ [0, 1]`.
pub type WeaknessSequence<T> = Sequence<T>;

impl<T: Scalar> Sequence<T> {
    /// `t_k = k^(−a)`
    pub fn power_law(a: T) -> Self {
        Sequence::PowerLaw { scale: T::one(), exponent: a }
    }

    pub fn at(&self, k: usize) -> T {
        let k = k.max(1);
        match self {
            Sequence::Constant(t) => *t,
            Sequence::Explicit(v) => v.get(k - 1).or(v.last()).copied().unwrap_or_else(T::zero),
            Sequence::PowerLaw { scale, exponent } => *scale * T::from_count(k).powf(-*exponent),
        }
    }

    /// Checks `lo <= a_k <= hi` (`hi` exclusive when `open_hi`) for every term.
    fn check_range(&self, lo: T, lo_open: bool, hi: T, hi_open: bool, what: &str) -> Result<(), GreedyError> {
        let ok = |x: T| {
            x.is_finite() && (if lo_open { x > lo } else { x >= lo }) && (if hi_open { x < hi } else { x <= hi })
        };
        let valid = match self {
            Sequence::Constant(t) => ok(*t),
            Sequence::Explicit(v) => !v.is_empty() && v.iter().all(|&x| ok(x)),
            Sequence::PowerLaw { scale, exponent } => ok(*scale) && *exponent >= T::zero() && exponent.is_finite(),
        };
        if valid {
            Ok(())
        } else {
            Err(GreedyError::InvalidConfig(format!("{what} sequence {self} out of range")))
        }
    }
}

impl<T: Scalar> fmt::Display for Sequence<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sequence::Constant(t) => write!(f, "const({t})"),
            Sequence::Explicit(v) => write!(f, "explicit(len={})", v.len()),
            Sequence::PowerLaw { scale, exponent } => write!(f, "{scale}*k^-{exponent}"),
        }
    }
}

/// Atom selection used by the prescribed-coefficient step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrescribedSelection {
    /// Weak gradient-greedy step.
    #[default]
    GradientGreedy,
    /// Atom minimizing `E(G + c_m g)` (finite dictionaries only).
    EGreedy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum UpdateRule<T> {
    /// Re-minimize over the span of all selected atoms.
    Chebyshev,
    /// `G_m = (1 − λ)G_{m−1} + λφ_m`, `λ ∈ [0, 1]`.
    ConvexRelaxation,
    /// `G_m = (1 − w)G_{m−1} + λφ_m`, `(w, λ)` free.
    FreeRelaxation,
    /// `G_m = G_{m−1} + c_mφ_m`, `c_m` the best step.
    BestStep,
    /// Best step computed at the current iterate, applied scaled by `b ∈ (0, 1)`.
    ReducedStep(T),
    /// `G_m = (1 − r_m)G_{m−1} + c_mφ_m`, `c_m` the best step for that base.
    FixedRelaxation(Sequence<T>),
    /// `G_m = G_{m−1} + c_mφ_m` with `c_m > 0` given.
    Prescribed { coeffs: Sequence<T>, selection: PrescribedSelection },
}

impl<T: Scalar> UpdateRule<T> {
    /// Rules whose energies are non-increasing by construction.
    pub fn is_monotone(&self) -> bool {
        matches!(self, UpdateRule::Chebyshev | UpdateRule::ConvexRelaxation | UpdateRule::FreeRelaxation | UpdateRule::BestStep)
    }

    pub fn name(&self) -> &'static str {
        match self {
            UpdateRule::Chebyshev => "chebyshev",
            UpdateRule::ConvexRelaxation => "convex_relaxation",
            UpdateRule::FreeRelaxation => "free_relaxation",
            UpdateRule::BestStep => "best_step",
            UpdateRule::ReducedStep(_) => "reduced_step",
            UpdateRule::FixedRelaxation(_) => "fixed_relaxation",
            UpdateRule::Prescribed { .. } => "prescribed",
        }
    }

    fn validate(&self) -> Result<(), GreedyError> {
        match self {
            UpdateRule::ReducedStep(b) if !(*b > T::zero() && *b < T::one()) => {
                Err(GreedyError::InvalidConfig(format!("reduced step b = {b} must lie in (0, 1)")))
            }
            UpdateRule::FixedRelaxation(r) => r.check_range(T::zero(), false, T::one(), true, "relaxation"),
            UpdateRule::Prescribed { coeffs, .. } => coeffs.check_range(T::zero(), true, T::infinity(), true, "coefficient"),
            _ => Ok(()),
        }
    }
}

impl<T: Scalar> fmt::Display for UpdateRule<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UpdateRule::ReducedStep(b) => write!(f, "reduced_step(b={b})"),
            UpdateRule::FixedRelaxation(r) => write!(f, "fixed_relaxation(r={r})"),
            UpdateRule::Prescribed { coeffs, selection } => write!(f, "prescribed(c={coeffs}, {selection:?})"),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StopCriteria<T> {
    pub max_m: usize,
    pub sup_tol: T,
    /// Stop once `E(G_m) − reference <= gap_tol`; needs `reference`.
    pub gap_tol: Option<T>,
    /// Known or estimated `inf E`.
    pub reference: Option<T>,
}

impl<T: Scalar> Default for StopCriteria<T> {
    fn default() -> Self {
        Self { max_m: 500, sup_tol: T::lit(1e-10), gap_tol: None, reference: None }
    }
}

impl<T: Scalar> StopCriteria<T> {
    pub fn with_max_m(mut self, max_m: usize) -> Self {
        self.max_m = max_m;
        self
    }

    pub fn with_reference(mut self, reference: T) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn with_gap_tol(mut self, gap_tol: T) -> Self {
        self.gap_tol = Some(gap_tol);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig<T> {
    pub weakness: WeaknessSequence<T>,
    pub rule: UpdateRule<T>,
    pub stop: StopCriteria<T>,
    pub policy: SelectionPolicy,
    /// Projected-gradient tolerance for the Chebyshev step.
    pub subspace_tol: T,
    /// Derivative tolerance of line searches, relative to `1 + |E(G_{m−1})|`.
    pub line_tol: T,
    pub seed: Option<u64>,
    pub record_timing: bool,
}

impl<T: Scalar> RunConfig<T> {
    pub fn new(rule: UpdateRule<T>) -> Self {
        Self {
            weakness: Sequence::Constant(T::one()),
            rule,
            stop: StopCriteria::default(),
            policy: SelectionPolicy::Exact,
            subspace_tol: T::tol(1e-8),
            line_tol: T::tol(1e-10),
            seed: None,
            record_timing: true,
        }
    }

    pub fn with_weakness(mut self, weakness: WeaknessSequence<T>) -> Self {
        self.weakness = weakness;
        self
    }

    pub fn with_stop(mut self, stop: StopCriteria<T>) -> Self {
        self.stop = stop;
        self
    }

    pub fn with_policy(mut self, policy: SelectionPolicy) -> Self {
        self.policy = policy;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StoppingReason {
    SupScoreTol,
    MaxIterations,
    GapTol,
    InnerFailure,
}

impl StoppingReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StoppingReason::SupScoreTol => "SupScoreTol",
            StoppingReason::MaxIterations => "MaxIterations",
            StoppingReason::GapTol => "GapTol",
            StoppingReason::InnerFailure => "InnerFailure",
        }
    }
}

impl fmt::Display for StoppingReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `G = Σ c_i g_i` with the realized atoms cached.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseApproximant<T> {
    pub terms: Vec<(Atom<T>, T)>,
    pub point: Vec<T>,
    pub m: usize,
    realized: Vec<Vec<T>>,
}

impl<T: Scalar> SparseApproximant<T> {
    fn zero(dim: usize) -> Self {
        Self { terms: Vec::new(), point: vec![T::zero(); dim], m: 0, realized: Vec::new() }
    }

    pub fn l1_mass(&self) -> T {
        synthesis_l1(&self.terms)
    }

    pub fn realized_atoms(&self) -> &[Vec<T>] {
        &self.realized
    }

    fn push(&mut self, atom: Atom<T>, phi: Vec<T>, c: T) {
        self.terms.push((atom, c));
        self.realized.push(phi);
    }

    fn scale(&mut self, s: T) {
        for (_, c) in &mut self.terms {
            *c *= s;
        }
    }

    /// Recomputes `point` from the terms.
    fn refresh(&mut self) {
        let mut p = vec![T::zero(); self.point.len()];
        for ((_, c), phi) in self.terms.iter().zip(&self.realized) {
            vecops::axpy(*c, phi, &mut p);
        }
        self.point = p;
    }

    /// `‖point − Σ c_i realize(atom_i)‖_∞`, realizing atoms afresh.
    pub fn consistency_error<D: Dictionary<T> + ?Sized>(&self, dict: &D) -> Result<T, DictionaryError> {
        let mut p = vec![T::zero(); self.point.len()];
        for (atom, c) in &self.terms {
            vecops::axpy(*c, &dict.realize(atom)?, &mut p);
        }
        Ok(vecops::max_abs(&vecops::sub(&p, &self.point)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<T> {
    pub m: usize,
    pub energy: T,
    /// `E(G_m) − reference` when a reference is known.
    pub gap: Option<T>,
    pub atom: Atom<T>,
    /// Achieved selection score `s` (shifted for the relaxed algorithm).
    pub score: T,
    /// Reference score `S_m`.
    pub sup_score: T,
    pub weakness_ratio: T,
    pub weakness: T,
    /// Coefficient of the step: `λ_m`, or `c_m` for the additive rules (as applied).
    pub lambda: Option<T>,
    /// `w_m` for free relaxation, `r_m` for fixed relaxation.
    pub w_or_r: Option<T>,
    pub l1_mass: T,
    pub wall_ns: u64,
    /// Energy of the best step along `φ_m` from `G_{m−1}` (free relaxation).
    pub best_step_energy: Option<T>,
    /// `max_j |⟨E'(G_m), φ_j⟩|` over the Chebyshev basis.
    pub orthogonality: Option<T>,
    pub selection_converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunHeader {
    pub objective: String,
    pub dictionary: String,
    pub weakness: String,
    pub rule: String,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace<T> {
    pub header: RunHeader,
    pub initial_energy: T,
    /// `S_0`, if a selection was attempted.
    pub initial_sup_score: Option<T>,
    pub records: Vec<IterationRecord<T>>,
    pub stop_reason: StoppingReason,
    pub approximant: SparseApproximant<T>,
}

impl<T: Scalar> RunTrace<T> {
    pub fn energies(&self) -> Vec<T> {
        self.records.iter().map(|r| r.energy).collect()
    }

    pub fn final_energy(&self) -> T {
        self.records.last().map_or(self.initial_energy, |r| r.energy)
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }
}

/// Classification of why a run ended.
pub fn stopping_reason<T>(trace: &RunTrace<T>) -> StoppingReason {
    trace.stop_reason
}

/// A run that ended in an error at iteration `m`, with the trace up to `m − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure<T> {
    pub m: usize,
    pub error: GreedyError,
    pub trace: RunTrace<T>,
}

impl<T> fmt::Display for RunFailure<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "iteration {}: {}", self.m, self.error)
    }
}

impl<T: fmt::Debug> std::error::Error for RunFailure<T> {}

pub type RunResult<T> = Result<RunTrace<T>, Box<RunFailure<T>>>;

pub fn run_wcga_co<T: Scalar, O: Objective<T> + ?Sized, D: Dictionary<T> + ?Sized>(
    obj: &O,
    dict: &D,
    weakness: WeaknessSequence<T>,
    stop: StopCriteria<T>,
) -> RunResult<T> {
    run(obj, dict, &RunConfig::new(UpdateRule::Chebyshev).with_weakness(weakness).with_stop(stop))
}

pub fn run_wrga_co<T: Scalar, O: Objective<T> + ?Sized, D: Dictionary<T> + ?Sized>(
    obj: &O,
    dict: &D,
    weakness: WeaknessSequence<T>,
    stop: StopCriteria<T>,
) -> RunResult<T> {
    run(obj, dict, &RunConfig::new(UpdateRule::ConvexRelaxation).with_weakness(weakness).with_stop(stop))
}

pub fn run_wgafr_co<T: Scalar, O: Objective<T> + ?Sized, D: Dictionary<T> + ?Sized>(
    obj: &O,
    dict: &D,
    weakness: WeaknessSequence<T>,
    stop: StopCriteria<T>,
) -> RunResult<T> {
    run(obj, dict, &RunConfig::new(UpdateRule::FreeRelaxation).with_weakness(weakness).with_stop(stop))
}

pub fn run_generic<T: Scalar, O: Objective<T> + ?Sized, D: Dictionary<T> + ?Sized>(
    obj: &O,
    dict: &D,
    weakness: WeaknessSequence<T>,
    rule: UpdateRule<T>,
    stop: StopCriteria<T>,
) -> RunResult<T> {
    run(obj, dict, &RunConfig::new(rule).with_weakness(weakness).with_stop(stop))
}

struct Step<T> {
    lambda: Option<T>,
    w_or_r: Option<T>,
    best_step_energy: Option<T>,
}

/// Runs the configured greedy algorithm from `G_0 = 0`.
pub fn run<T: Scalar, O: Objective<T> + ?Sized, D: Dictionary<T> + ?Sized>(
    obj: &O,
    dict: &D,
    cfg: &RunConfig<T>,
) -> RunResult<T> {
    let header = RunHeader {
        objective: obj.describe(),
        dictionary: dict.describe(),
        weakness: cfg.weakness.to_string(),
        rule: cfg.rule.to_string(),
        seed: cfg.seed,
    };
    let dim = obj.dimension();
    let mut trace = RunTrace {
        header,
        initial_energy: T::nan(),
        initial_sup_score: None,
        records: Vec::new(),
        stop_reason: StoppingReason::InnerFailure,
        approximant: SparseApproximant::zero(dim),
    };
    let fail = |trace: RunTrace<T>, m: usize, error: GreedyError| {
        let mut trace = trace;
        trace.stop_reason = StoppingReason::InnerFailure;
        Box::new(RunFailure { m, error, trace })
    };

    let setup = (|| {
        cfg.rule.validate()?;
        cfg.weakness.check_range(T::zero(), false, T::one(), false, "weakness")?;
        if dict.ambient_dim() != dim {
            return Err(GreedyError::InvalidConfig(format!(
                "objective dimension {dim} differs from dictionary ambient dimension {}",
                dict.ambient_dim()
            )));
        }
        if matches!(cfg.rule, UpdateRule::Prescribed { selection: PrescribedSelection::EGreedy, .. }) && dict.as_finite().is_none() {
            return Err(DictionaryError::Unsupported("E-greedy selection needs a finite dictionary").into());
        }
        if cfg.stop.gap_tol.is_some() && cfg.stop.reference.is_none() {
            return Err(GreedyError::InvalidConfig("gap_tol needs a reference energy".into()));
        }
        Ok(obj.eval(&vec![T::zero(); dim])?)
    })();
    let e0 = match setup {
        Ok(e) => e,
        Err(e) => return Err(fail(trace, 0, e)),
    };
    trace.initial_energy = e0;
    let radius = obj.sublevel_radius().filter(|r| r.is_finite());
    let mut energy = e0;
    // Chebyshev basis: realized atoms and current coefficients.
    let mut coeffs: Vec<T> = Vec::new();
    let mut m = 0usize;

    loop {
        if let (Some(tol), Some(reference)) = (cfg.stop.gap_tol, cfg.stop.reference) {
            if energy - reference <= tol {
                trace.stop_reason = StoppingReason::GapTol;
                break;
            }
        }
        if m >= cfg.stop.max_m {
            trace.stop_reason = StoppingReason::MaxIterations;
            break;
        }
        let started = Instant::now();
        let next = m + 1;
        let outcome = iterate(obj, dict, cfg, next, &mut trace, &mut coeffs, energy, e0, radius);
        match outcome {
            Ok(None) => {
                trace.stop_reason = StoppingReason::SupScoreTol;
                break;
            }
            Ok(Some(mut rec)) => {
                if cfg.record_timing {
                    rec.wall_ns = u64::try_from(started.elapsed().as_nanos()).unwrap_or(u64::MAX);
                }
                energy = rec.energy;
                trace.records.push(rec);
                m = next;
            }
            Err(e) => return Err(fail(trace, next, e)),
        }
    }
    Ok(trace)
}

/// One iteration. `Ok(None)` signals that `S_{m−1} <= sup_tol`.
#[allow(clippy::too_many_arguments)]
fn iterate<T: Scalar, O: Objective<T> + ?Sized, D: Dictionary<T> + ?Sized>(
    obj: &O,
    dict: &D,
    cfg: &RunConfig<T>,
    m: usize,
    trace: &mut RunTrace<T>,
    coeffs: &mut Vec<T>,
    energy: T,
    e0: T,
    radius: Option<T>,
) -> Result<Option<IterationRecord<T>>, GreedyError> {
    let approx = &mut trace.approximant;
    let g = approx.point.clone();
    let grad = obj.gradient(&g)?;
    let g_neg: Vec<T> = grad.iter().map(|&x| -x).collect();
    let t = cfg.weakness.at(m);
    let line_tol = cfg.line_tol * (T::one() + energy.abs());

    let (atom, score, sup_score, weakness_ratio, converged) = match &cfg.rule {
        UpdateRule::Prescribed { coeffs: cs, selection: PrescribedSelection::EGreedy } => {
            let fd = dict.as_finite().ok_or(DictionaryError::Unsupported("E-greedy selection needs a finite dictionary"))?;
            let sup = dict.sup_inner_product(&g_neg)?;
            if trace.initial_sup_score.is_none() {
                trace.initial_sup_score = Some(sup.value);
            }
            if sup.value <= cfg.stop.sup_tol {
                return Ok(None);
            }
            let choice = select_e_greedy_prescribed(fd, obj, &g, cs.at(m))?;
            let s = dict.score(&choice.atom, &g_neg)?;
            (choice.atom, s, sup.value, s / sup.value, true)
        }
        _ => {
            let shift = if cfg.rule == UpdateRule::ConvexRelaxation { dot(&g_neg, &g) } else { T::zero() };
            let cert = select_gradient_greedy_with(dict, &g_neg, t, shift, cfg.policy)?;
            if trace.initial_sup_score.is_none() {
                trace.initial_sup_score = Some(cert.reference);
            }
            if cert.reference <= cfg.stop.sup_tol {
                return Ok(None);
            }
            if !cert.satisfies(t) {
                return Err(GreedyError::Invariant(format!(
                    "selection score {:e} below t·S = {:e}",
                    cert.score.to_f64_lossy(),
                    (t * cert.reference).to_f64_lossy()
                )));
            }
            (cert.atom, cert.score, cert.reference, cert.weakness, cert.converged)
        }
    };
    let approx = &mut trace.approximant;
    let phi = dict.realize(&atom)?;
    let mut orthogonality = None;

    let step = match &cfg.rule {
        UpdateRule::Chebyshev => {
            let pos = approx.terms.iter().position(|(a, _)| a.same_key(&atom));
            if pos.is_none() {
                approx.push(atom.clone(), phi.clone(), T::zero());
                coeffs.push(T::zero());
            }
            let sol = minimize_subspace(obj, approx.realized_atoms(), Some(coeffs), cfg.subspace_tol)?;
            *coeffs = sol.coeffs;
            for ((_, c), &v) in approx.terms.iter_mut().zip(coeffs.iter()) {
                *c = v;
            }
            let idx = pos.unwrap_or(approx.terms.len() - 1);
            Step { lambda: Some(coeffs[idx]), w_or_r: None, best_step_energy: None }
        }
        UpdateRule::ConvexRelaxation => {
            let dir = vecops::sub(&phi, &g);
            let r = Restriction::new(obj, &g, &dir).search_ray(T::zero(), Some(T::one()), line_tol)?;
            let lambda = r.argmin;
            approx.scale(T::one() - lambda);
            approx.push(atom.clone(), phi, lambda);
            Step { lambda: Some(lambda), w_or_r: None, best_step_energy: None }
        }
        UpdateRule::FreeRelaxation => {
            let fr = minimize_free_relaxation(obj, &g, &phi, line_tol)?;
            approx.scale(T::one() - fr.w);
            approx.push(atom.clone(), phi, fr.lambda);
            Step { lambda: Some(fr.lambda), w_or_r: Some(fr.w), best_step_energy: Some(fr.best_step.value) }
        }
        UpdateRule::BestStep | UpdateRule::ReducedStep(_) => {
            let r = Restriction::new(obj, &g, &phi).search_ray(T::zero(), None, line_tol)?;
            let c = match cfg.rule {
                UpdateRule::ReducedStep(b) => b * r.argmin,
                _ => r.argmin,
            };
            approx.push(atom.clone(), phi, c);
            Step { lambda: Some(c), w_or_r: None, best_step_energy: Some(r.value) }
        }
        UpdateRule::FixedRelaxation(rs) => {
            let rm = rs.at(m);
            let base = vecops::scaled(T::one() - rm, &g);
            let r = Restriction::new(obj, &base, &phi).search_line(line_tol)?;
            approx.scale(T::one() - rm);
            approx.push(atom.clone(), phi, r.argmin);
            Step { lambda: Some(r.argmin), w_or_r: Some(rm), best_step_energy: None }
        }
        UpdateRule::Prescribed { coeffs: cs, .. } => {
            let c = cs.at(m);
            approx.push(atom.clone(), phi, c);
            Step { lambda: Some(c), w_or_r: None, best_step_energy: None }
        }
    };
    approx.refresh();
    approx.m = m;
    let new_energy = obj.eval(&approx.point)?;

    if cfg.rule == UpdateRule::Chebyshev {
        let grad = obj.gradient(&approx.point)?;
        let worst = approx.realized_atoms().iter().map(|a| dot(&grad, a).abs()).fold(T::zero(), T::max);
        orthogonality = Some(worst);
    }
    if cfg.rule.is_monotone() {
        let slack = T::tol(1e-10);
        if new_energy > energy + slack {
            return Err(GreedyError::Invariant(format!(
                "energy increased from {:e} to {:e}",
                energy.to_f64_lossy(),
                new_energy.to_f64_lossy()
            )));
        }
        if let Some(radius) = radius {
            let nrm = obj.ambient_norm(&approx.point);
            if new_energy <= e0 && nrm > radius * (T::one() + T::tol(1e-9)) {
                return Err(GreedyError::Invariant(format!(
                    "iterate norm {:e} exceeds the sublevel radius {:e}",
                    nrm.to_f64_lossy(),
                    radius.to_f64_lossy()
                )));
            }
        }
    }
    let l1_mass = approx.l1_mass();
    if cfg.rule == UpdateRule::ConvexRelaxation && l1_mass > T::one() + T::tol(1e-12) {
        return Err(GreedyError::Invariant(format!("synthesis l1 mass {:e} exceeds 1", l1_mass.to_f64_lossy())));
    }

    Ok(Some(IterationRecord {
        m,
        energy: new_energy,
        gap: cfg.stop.reference.map(|r| new_energy - r),
        atom,
        score,
        sup_score,
        weakness_ratio,
        weakness: t,
        lambda: step.lambda,
        w_or_r: step.w_or_r,
        l1_mass,
        wall_ns: 0,
        best_step_energy: step.best_step_energy,
        orthogonality,
        selection_converged: converged,
    }))
}
