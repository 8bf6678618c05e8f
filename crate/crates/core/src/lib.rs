//! Greedy algorithms for sparse convex minimization over dictionaries.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` / `*32` aliases below fix the precision.

pub mod dictionaries;
pub mod greedy;
pub mod inner_solvers;
pub mod objectives;
pub mod scalar;
pub mod theory;
pub mod vecops;

pub use dictionaries::{
    select_e_greedy, select_e_greedy_prescribed, select_gradient_greedy, select_gradient_greedy_with, synthesis_l1, Atom,
    Dictionary, DictionaryError, EGreedyChoice, FiniteDictionary, PowerIteration, RankOneDictionary, SelectionCertificate,
    SelectionPolicy, Sign, SupInnerProduct,
};
pub use greedy::{
    run, run_generic, run_wcga_co, run_wgafr_co, run_wrga_co, stopping_reason, GreedyError, IterationRecord,
    PrescribedSelection, RunConfig, RunFailure, RunHeader, RunResult, RunTrace, Sequence, SparseApproximant,
    StopCriteria, StoppingReason, UpdateRule, WeaknessSequence,
};
pub use inner_solvers::{
    line_search_line, line_search_ray, minimize_free_relaxation, minimize_interval_01, minimize_subspace,
    FreeRelaxation, LineSearchResult, SolverError, SubspaceSolution,
};
pub use objectives::{
    make_least_squares, make_logistic, make_norm_power, LeastSquares, Logistic, NormPower, Objective, ObjectiveError,
    SmoothnessParams,
};
pub use scalar::Scalar;
pub use theory::{
    rate_envelope, solve_xi, theta0, verify_recurrence, EnvelopeKind, ModulusSpec, RateEnvelope, TheoryError,
};

pub type LeastSquares64 = LeastSquares<f64>;
pub type LeastSquares32 = LeastSquares<f32>;
pub type NormPower64 = NormPower<f64>;
pub type NormPower32 = NormPower<f32>;
pub type Logistic64 = Logistic<f64>;
pub type Logistic32 = Logistic<f32>;
pub type Atom64 = Atom<f64>;
pub type FiniteDictionary64 = FiniteDictionary<f64>;
pub type FiniteDictionary32 = FiniteDictionary<f32>;
pub type RunConfig64 = RunConfig<f64>;
pub type RunTrace64 = RunTrace<f64>;
pub type RunTrace32 = RunTrace<f32>;
pub type IterationRecord64 = IterationRecord<f64>;
pub type Sequence64 = Sequence<f64>;
pub type UpdateRule64 = UpdateRule<f64>;
pub type StopCriteria64 = StopCriteria<f64>;
pub type ModulusSpec64 = ModulusSpec<f64>;
pub type RateEnvelope64 = RateEnvelope<f64>;
