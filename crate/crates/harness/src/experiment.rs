//! Single experiment runs and parallel batches.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use sparsegreedy::theory::{
    calibrate_at_first, check_envelope_gaps, fit_rate_slope, EnvelopeParams, FitTarget,
};
use sparsegreedy::{
    make_least_squares, make_norm_power, rate_envelope, run, Dictionary, EnvelopeKind, Objective, PrescribedSelection,
    RunConfig, RunTrace64, Sequence, StopCriteria, StoppingReason, UpdateRule,
};

use crate::config::{
    Algorithm, EnvelopeChoice, ExperimentConfig, FitTargetKind, InstanceKind, ObjectiveKind, PrescribedSelectionKind,
};
use crate::instances::{gen_compressed_sensing, gen_low_rank, gen_lp_approx, InstanceCertificate};
use crate::io::{read_dictionary_csv, read_vector_csv, write_summary_json, write_trace_csv, Summary, Verdict};
use crate::HarnessError;

/// A built instance: energy, dictionary and (for generated instances) the
/// planted synthesis.
pub struct Problem {
    pub objective: Box<dyn Objective<f64>>,
    pub dictionary: Box<dyn Dictionary<f64>>,
    pub target: Vec<f64>,
    pub certificate: Option<InstanceCertificate>,
}

impl Problem {
    /// `inf E` when the certificate knows it.
    pub fn reference(&self) -> Option<f64> {
        self.certificate.as_ref().and_then(|c| c.reference)
    }
}

fn make_objective(cfg: &ExperimentConfig, target: Vec<f64>) -> Result<Box<dyn Objective<f64>>, HarnessError> {
    Ok(match cfg.objective_kind() {
        ObjectiveKind::LeastSquares => Box::new(make_least_squares(target)?),
        ObjectiveKind::NormPower => Box::new(make_norm_power(target, cfg.r, cfg.q)?),
    })
}

fn open(path: &Path) -> Result<File, HarnessError> {
    File::open(path).map_err(|e| HarnessError::MissingInput(format!("{}: {e}", path.display())))
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem, HarnessError> {
    match cfg.instance {
        InstanceKind::Cs => {
            let inst = gen_compressed_sensing(cfg.k, cfg.n, cfg.s, cfg.mass, cfg.seed, cfg.min_coef)?;
            Ok(Problem {
                objective: make_objective(cfg, inst.target.clone())?,
                dictionary: Box::new(inst.dictionary),
                target: inst.target,
                certificate: Some(inst.certificate),
            })
        }
        InstanceKind::LowRank => {
            let inst = gen_low_rank(cfg.n, cfg.rank, cfg.mass, cfg.seed)?;
            Ok(Problem {
                objective: make_objective(cfg, inst.target.clone())?,
                dictionary: Box::new(inst.dictionary),
                target: inst.target,
                certificate: Some(inst.certificate),
            })
        }
        InstanceKind::Lp => {
            let inst = gen_lp_approx(cfg.n, cfg.r, cfg.q, cfg.seed)?;
            let objective: Box<dyn Objective<f64>> = match cfg.objective_kind() {
                ObjectiveKind::NormPower => Box::new(inst.objective),
                ObjectiveKind::LeastSquares => Box::new(make_least_squares(inst.target.clone())?),
            };
            Ok(Problem {
                objective,
                dictionary: Box::new(inst.dictionary),
                target: inst.target,
                certificate: Some(inst.certificate),
            })
        }
        InstanceKind::File => {
            let dict_path = cfg.dictionary_csv.as_deref().expect("validated");
            let target_path = cfg.target_csv.as_deref().expect("validated");
            let dictionary = read_dictionary_csv(open(dict_path)?, cfg.r)?;
            let target = read_vector_csv(open(target_path)?)?;
            if target.len() != dictionary.rows() {
                return Err(HarnessError::Config(format!(
                    "target has {} entries, dictionary has {} rows",
                    target.len(),
                    dictionary.rows()
                )));
            }
            Ok(Problem {
                objective: make_objective(cfg, target.clone())?,
                dictionary: Box::new(dictionary),
                target,
                certificate: None,
            })
        }
    }
}

pub fn weakness_of(cfg: &ExperimentConfig) -> Sequence<f64> {
    match cfg.weakness_exponent {
        Some(a) => Sequence::power_law(a),
        None => Sequence::Constant(cfg.weakness),
    }
}

pub fn rule_of(cfg: &ExperimentConfig) -> UpdateRule<f64> {
    match cfg.algorithm {
        Algorithm::Wcga => UpdateRule::Chebyshev,
        Algorithm::Wrga => UpdateRule::ConvexRelaxation,
        Algorithm::Wgafr => UpdateRule::FreeRelaxation,
        Algorithm::BestStep => UpdateRule::BestStep,
        Algorithm::ReducedStep => UpdateRule::ReducedStep(cfg.b.unwrap_or(0.5)),
        Algorithm::FixedRelaxation => UpdateRule::FixedRelaxation(Sequence::Constant(cfg.relax_r.unwrap_or(0.0))),
        Algorithm::Prescribed => UpdateRule::Prescribed {
            coeffs: Sequence::PowerLaw {
                scale: cfg.prescribed_c.unwrap_or(1.0),
                exponent: cfg.prescribed_exponent.unwrap_or(0.0),
            },
            selection: match cfg.prescribed_selection {
                PrescribedSelectionKind::Gradient => PrescribedSelection::GradientGreedy,
                PrescribedSelectionKind::EGreedy => PrescribedSelection::EGreedy,
            },
        },
    }
}

pub fn run_config_of(cfg: &ExperimentConfig, reference: Option<f64>) -> RunConfig<f64> {
    let mut stop = StopCriteria { max_m: cfg.max_m, sup_tol: cfg.sup_tol, gap_tol: cfg.gap_tol, reference: None };
    if let Some(r) = reference {
        stop = stop.with_reference(r);
    }
    let mut rc = RunConfig::new(rule_of(cfg)).with_weakness(weakness_of(cfg)).with_stop(stop);
    rc.seed = Some(cfg.seed);
    rc.record_timing = cfg.timing;
    rc
}

/// Invariant slack used when re-checking a finished trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantTolerances {
    pub monotone: f64,
    pub weakness: f64,
    pub mass: f64,
    pub orthogonality: f64,
    pub certificate: f64,
}

impl Default for InvariantTolerances {
    fn default() -> Self {
        Self { monotone: 1e-10, weakness: 1e-10, mass: 1e-12, orthogonality: 1e-8, certificate: 1e-12 }
    }
}

/// Re-checks the trace-level invariants independently of the driver.
pub fn check_invariants(
    problem: &Problem,
    rule: &UpdateRule<f64>,
    trace: &RunTrace64,
    tol: &InvariantTolerances,
) -> BTreeMap<String, Verdict> {
    let mut out = BTreeMap::new();
    let energies: Vec<f64> = std::iter::once(trace.initial_energy).chain(trace.records.iter().map(|r| r.energy)).collect();
    if rule.is_monotone() {
        let mono = energies.windows(2).all(|w| w[1] <= w[0] + tol.monotone);
        out.insert("monotonicity".into(), Verdict::from_bool(mono));
        let sub = energies.iter().all(|&e| e <= trace.initial_energy + tol.monotone);
        out.insert("sublevel".into(), Verdict::from_bool(sub));
    }
    let weak = trace.records.iter().all(|r| r.score >= r.weakness * r.sup_score - tol.weakness);
    out.insert("weakness".into(), Verdict::from_bool(weak));
    if matches!(rule, UpdateRule::ConvexRelaxation) {
        let conf = trace.records.iter().all(|r| r.l1_mass <= 1.0 + tol.mass);
        out.insert("a1_confinement".into(), Verdict::from_bool(conf));
    }
    if matches!(rule, UpdateRule::Chebyshev) {
        let orth = trace.records.iter().all(|r| r.orthogonality.is_some_and(|o| o <= tol.orthogonality));
        out.insert("orthogonality".into(), Verdict::from_bool(orth));
    }
    let consistent = trace
        .approximant
        .consistency_error(problem.dictionary.as_ref())
        .is_ok_and(|e| e <= 1e-10 * (1.0 + trace.approximant.l1_mass()));
    out.insert("consistency".into(), Verdict::from_bool(consistent));
    if let Some(cert) = &problem.certificate {
        let ok = cert.realize(problem.dictionary.as_ref()).is_ok_and(|y| {
            y.iter().zip(&problem.target).all(|(a, b)| (a - b).abs() <= tol.certificate)
        });
        out.insert("certificate".into(), Verdict::from_bool(ok));
    }
    out
}

fn fit_target(cfg: &ExperimentConfig) -> FitTarget<f64> {
    match (cfg.fit_target, cfg.objective_kind()) {
        (FitTargetKind::Gap, _) => FitTarget::Gap,
        (FitTargetKind::Residual, ObjectiveKind::LeastSquares) => FitTarget::Residual { scale: 0.5, q: 2.0 },
        (FitTargetKind::Residual, ObjectiveKind::NormPower) => FitTarget::Residual { scale: 1.0, q: cfg.q },
    }
}

/// Max ratio of the gap to the envelope calibrated at `m = 1`.
pub fn envelope_ratio(cfg: &ExperimentConfig, problem: &Problem, trace: &RunTrace64) -> Option<f64> {
    let choice = cfg.envelope?;
    let reference = problem.reference()?;
    if trace.records.len() < 2 {
        return None;
    }
    let q = problem.objective.smoothness().map_or(2.0, |s| s.q());
    let kind = match choice {
        EnvelopeChoice::Chebyshev => EnvelopeKind::Chebyshev,
        EnvelopeChoice::Relaxed => EnvelopeKind::Relaxed,
        EnvelopeChoice::FreeRelaxation => EnvelopeKind::FreeRelaxation,
    };
    let mut params = EnvelopeParams::new(q, weakness_of(cfg));
    if let Some(cert) = &problem.certificate {
        params.a = cert.l1_mass;
    }
    let gaps: Vec<f64> = trace.records.iter().map(|r| (r.energy - reference).max(0.0)).collect();
    let cal = calibrate_at_first(kind, &params, gaps[0]).ok()?;
    let env = rate_envelope(kind, params, cal).ok()?;
    Some(check_envelope_gaps(&gaps, &env).max_ratio)
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub summary: Summary,
    pub trace: RunTrace64,
}

fn resolve(out_dir: Option<&Path>, p: &Path) -> PathBuf {
    match out_dir {
        Some(d) if p.is_relative() => d.join(p),
        _ => p.to_path_buf(),
    }
}

/// Runs one experiment. Failures of the algorithm itself are reported in
/// the summary; only configuration and I/O problems are errors.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
    tol: &InvariantTolerances,
) -> Result<ExperimentOutcome, HarnessError> {
    cfg.validate()?;
    let problem = build_problem(cfg)?;
    let reference = problem.reference();
    let rc = run_config_of(cfg, reference);
    let (trace, error) = match run(problem.objective.as_ref(), problem.dictionary.as_ref(), &rc) {
        Ok(t) => (t, None),
        Err(f) => {
            let msg = f.to_string();
            (f.trace, Some(msg))
        }
    };
    let invariants = check_invariants(&problem, &rc.rule, &trace, tol);
    let slope = reference.and_then(|r| fit_rate_slope(&trace, cfg.fit_m_min, cfg.fit_m_max, r, fit_target(cfg)).ok());
    let final_gap = reference.map(|r| trace.final_energy() - r);
    let summary = Summary {
        config_hash: cfg.hash(),
        stopping_reason: trace.stop_reason.as_str().to_string(),
        final_gap,
        slope: slope.map(|f| f.slope),
        envelope_ratio: envelope_ratio(cfg, &problem, &trace),
        invariants,
        iterations: trace.iterations(),
        error,
    };
    debug_assert!(summary.error.is_none() || trace.stop_reason == StoppingReason::InnerFailure);
    if let Some(p) = &cfg.trace_csv {
        let path = resolve(out_dir, p);
        ensure_parent(&path)?;
        let f = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
        write_trace_csv(&trace, BufWriter::new(f))?;
    }
    if let Some(p) = &cfg.summary_json {
        let path = resolve(out_dir, p);
        ensure_parent(&path)?;
        write_summary_json(&summary, &path)?;
    }
    Ok(ExperimentOutcome { summary, trace })
}

fn ensure_parent(path: &Path) -> Result<(), HarnessError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e)),
        _ => Ok(()),
    }
}

/// Runs independent experiments on up to `workers` threads; results keep
/// the input order.
pub fn run_batch(
    configs: &[ExperimentConfig],
    out_dir: Option<&Path>,
    tol: &InvariantTolerances,
    workers: usize,
) -> Vec<Result<ExperimentOutcome, HarnessError>> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<ExperimentOutcome, HarnessError>>>> =
        configs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, configs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = configs.get(i) else { break };
                let res = run_experiment(cfg, out_dir, tol);
                *slots[i].lock().expect("slot lock") = Some(res);
            });
        }
    });
    slots.into_iter().map(|s| s.into_inner().expect("slot lock").expect("every slot filled")).collect()
}
