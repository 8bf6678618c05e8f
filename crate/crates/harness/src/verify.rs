//! The invariant suite behind `sparsegreedy verify`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sparsegreedy::objectives::{
    check_smoothness_inequality, gaussian_vec, gradient_fd_error, sample_sublevel_point, sample_unit_direction,
    seeded_rng,
};
use sparsegreedy::theory::xi_closed_form;
use sparsegreedy::vecops::dot;
use sparsegreedy::{
    make_least_squares, make_logistic, make_norm_power, run_wcga_co, solve_xi, theta0, verify_recurrence, Atom64,
    FiniteDictionary64, ModulusSpec, Objective, Sequence, StopCriteria,
};

use crate::instances::gen_compressed_sensing;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Slack for inequality checks.
    pub tol: f64,
    pub smoothness_samples: usize,
    pub recurrence_trials: usize,
    pub xi_draws: usize,
    pub omp_instances: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: 1, tol: 1e-10, smoothness_samples: 2000, recurrence_trials: 1000, xi_draws: 100, omp_instances: 20 }
    }
}

/// Energies the sampling checks run over.
pub fn sample_objectives(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Box<dyn Objective<f64>>> {
    let f: Vec<f64> = gaussian_vec(rng, dim);
    let rows: Vec<Vec<f64>> = (0..3 * dim).map(|_| gaussian_vec(rng, dim)).collect();
    let labels: Vec<f64> = (0..3 * dim).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    vec![
        Box::new(make_least_squares(f.clone()).expect("finite")),
        Box::new(make_norm_power(f.clone(), 2.0, 2.0).expect("valid")),
        Box::new(make_norm_power(f.clone(), 2.0, 1.5).expect("valid")),
        Box::new(make_norm_power(f.clone(), 4.0, 2.0).expect("valid")),
        Box::new(make_norm_power(f, 3.0, 1.5).expect("valid")),
        Box::new(make_logistic(labels, rows, 0.5).expect("valid")),
    ]
}

/// Smallest slack of `0 <= E(x+uy) − E(x) − u⟨E'(x), y⟩ <= 2γ|u|^q` over
/// `samples` triples with `x` in the sublevel set, `‖y‖ = 1`, `u ∈ [−2, 2]`.
pub fn smoothness_min_slack<O: Objective<f64> + ?Sized>(obj: &O, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let x = sample_sublevel_point(obj, rng).expect("objective declares a sublevel radius");
        let y = sample_unit_direction(obj, rng);
        let u = 4.0 * rng.random::<f64>() - 2.0;
        let (lhs, upper) = check_smoothness_inequality(obj, &x, &y, u).expect("valid triple");
        worst = worst.min(lhs).min(upper);
    }
    worst
}

fn check_smoothness(opts: &VerifyOptions) -> CheckResult {
    let mut rng = seeded_rng(opts.seed);
    let mut worst = f64::INFINITY;
    let objs = sample_objectives(&mut rng, 6);
    for obj in &objs {
        worst = worst.min(smoothness_min_slack(obj.as_ref(), opts.smoothness_samples, &mut rng));
    }
    CheckResult {
        name: "smoothness_sampling",
        passed: worst >= -opts.tol,
        detail: format!("{} objectives x {} triples, min slack {worst:.3e}", objs.len(), opts.smoothness_samples),
    }
}

fn check_gradients(opts: &VerifyOptions) -> CheckResult {
    let mut rng = seeded_rng(opts.seed.wrapping_add(1));
    let mut worst: f64 = 0.0;
    for obj in sample_objectives(&mut rng, 5) {
        for _ in 0..20 {
            let x: Vec<f64> = gaussian_vec(&mut rng, obj.dimension());
            worst = worst.max(gradient_fd_error(obj.as_ref(), &x).expect("finite"));
        }
    }
    CheckResult { name: "gradient_fd", passed: worst <= 1e-6, detail: format!("max relative deviation {worst:.3e}") }
}

fn check_orthogonality(opts: &VerifyOptions) -> CheckResult {
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for seed in 0..5 {
        let inst = gen_compressed_sensing(32, 96, 6, 1.0, opts.seed.wrapping_add(seed), 0.0).expect("valid parameters");
        let obj = make_least_squares(inst.target.clone()).expect("finite");
        let Ok(trace) = run_wcga_co(&obj, &inst.dictionary, Sequence::Constant(1.0), StopCriteria::default().with_max_m(40))
        else {
            return CheckResult { name: "orthogonality", passed: false, detail: "run failed".into() };
        };
        runs += 1;
        // recomputed from the final approximant
        let g = obj.gradient(&trace.approximant.point).expect("finite");
        for (atom, _) in &trace.approximant.terms {
            let id = atom.id().expect("finite dictionary");
            worst = worst.max(dot(&g, inst.dictionary.column(id)).abs());
        }
        for r in &trace.records {
            worst = worst.max(r.orthogonality.unwrap_or(f64::INFINITY));
        }
    }
    CheckResult {
        name: "orthogonality",
        passed: worst <= 1e-8,
        detail: format!("{runs} runs, max |<E'(G_m), phi_j>| {worst:.3e}"),
    }
}

/// `y_k = y_{k−1}(1 − w_k y_{k−1}) · shrink_k` with random `w_k`, `shrink_k ∈ [½, 1]`.
pub fn hypothesis_sequence(rng: &mut ChaCha8Rng, len: usize) -> (Vec<f64>, Vec<f64>) {
    let mut y = vec![0.05 + 0.95 * rng.random::<f64>()];
    let mut w = Vec::with_capacity(len);
    for _ in 0..len {
        let prev = *y.last().expect("non-empty");
        let wk = rng.random::<f64>() / prev;
        let shrink = 0.5 + 0.5 * rng.random::<f64>();
        y.push(prev * (1.0 - wk * prev) * shrink);
        w.push(wk);
    }
    (y, w)
}

fn check_recurrence(opts: &VerifyOptions) -> CheckResult {
    let mut rng = seeded_rng(opts.seed.wrapping_add(2));
    let mut failures = 0;
    for _ in 0..opts.recurrence_trials {
        let len = rng.random_range(2..60);
        let (y, w) = hypothesis_sequence(&mut rng, len);
        let n = rng.random_range(0..len);
        if !verify_recurrence(&y, &w, n).passes() {
            failures += 1;
        }
    }
    // a plateau breaks the hypothesis and the conclusion at the same index
    let (mut y, w) = hypothesis_sequence(&mut rng, 12);
    y[6] = y[5];
    let flagged = verify_recurrence(&y, &w, 0);
    let caught = flagged.hypothesis_violation == Some(6) && flagged.first_violation() == Some(6);
    CheckResult {
        name: "recurrence",
        passed: failures == 0 && caught,
        detail: format!(
            "{failures}/{} generated sequences failed; planted violation flagged at {:?}",
            opts.recurrence_trials,
            flagged.first_violation()
        ),
    }
}

/// Random `(γ, q, θ, t)` with `θ ∈ (0, θ₀]`.
pub fn xi_draw(rng: &mut ChaCha8Rng) -> (f64, f64, f64, f64) {
    let gamma = 0.1 + 1.9 * rng.random::<f64>();
    let q = 1.2 + 0.8 * rng.random::<f64>();
    let th0 = gamma * 2f64.powf(q - 1.0);
    let theta = th0 * (0.01 + 0.99 * rng.random::<f64>());
    let t = 0.05 + 0.95 * rng.random::<f64>();
    (gamma, q, theta, t)
}

fn check_xi(opts: &VerifyOptions) -> CheckResult {
    let mut rng = seeded_rng(opts.seed.wrapping_add(3));
    let mut worst: f64 = 0.0;
    let mut above_two = 0;
    for _ in 0..opts.xi_draws {
        let (gamma, q, theta, t) = xi_draw(&mut rng);
        let m = ModulusSpec::power_type(gamma, q).expect("valid draw");
        debug_assert!(theta <= theta0(&m));
        let Ok(sol) = solve_xi(&m, t, theta) else {
            return CheckResult { name: "xi_closed_form", passed: false, detail: "solver rejected a valid draw".into() };
        };
        let exact = xi_closed_form(gamma, q, t, theta);
        worst = worst.max((sol.xi - exact).abs() / exact);
        if sol.xi > 2.0 {
            above_two += 1;
        }
    }
    CheckResult {
        name: "xi_closed_form",
        passed: worst <= 1e-10 && above_two == 0,
        detail: format!("{} draws, max relative error {worst:.3e}, {above_two} roots above 2", opts.xi_draws),
    }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Textbook OMP: largest `|⟨r, φ_j⟩|` (lowest index on ties), then the
/// normal equations on the selected columns. Returns per-step
/// `(ids, signs, coefficients)`.
pub fn omp_reference(dict: &FiniteDictionary64, y: &[f64], steps: usize) -> Vec<(Vec<usize>, Vec<i8>, Vec<f64>)> {
    let mut ids: Vec<usize> = Vec::new();
    let mut signs = Vec::new();
    let mut r = y.to_vec();
    let mut out = Vec::new();
    for _ in 0..steps {
        let scores: Vec<f64> = dict.columns().map(|c| dot(c, &r)).collect();
        let mut best = 0;
        for j in 1..scores.len() {
            if scores[j].abs() > scores[best].abs() {
                best = j;
            }
        }
        if scores[best].abs() <= 1e-10 {
            break;
        }
        if !ids.contains(&best) {
            ids.push(best);
            signs.push(if scores[best] >= 0.0 { 1 } else { -1 });
        }
        let cols: Vec<&[f64]> = ids.iter().map(|&i| dict.column(i)).collect();
        let gram: Vec<Vec<f64>> = cols.iter().map(|a| cols.iter().map(|b| dot(a, b)).collect()).collect();
        let rhs: Vec<f64> = cols.iter().map(|a| dot(a, y)).collect();
        let Some(coef) = gauss_solve(gram, rhs) else { break };
        r = y.to_vec();
        for (c, col) in coef.iter().zip(&cols) {
            for (ri, ai) in r.iter_mut().zip(col.iter()) {
                *ri -= c * ai;
            }
        }
        out.push((ids.clone(), signs.clone(), coef));
    }
    out
}

/// Coefficients of a run's approximant on the canonical (unsigned) atoms.
fn unsigned_terms(terms: &[(Atom64, f64)]) -> Vec<(usize, f64)> {
    terms.iter().map(|(a, c)| (a.id().expect("finite dictionary"), c * a.sign().value::<f64>())).collect()
}

fn check_omp(opts: &VerifyOptions) -> CheckResult {
    let mut worst: f64 = 0.0;
    let mut mismatched = 0;
    for i in 0..opts.omp_instances {
        let mut rng = seeded_rng(opts.seed.wrapping_mul(1000).wrapping_add(i as u64));
        let dict = FiniteDictionary64::gaussian(16, 32, &mut rng).expect("valid shape");
        let y: Vec<f64> = gaussian_vec(&mut rng, 16);
        let obj = make_least_squares(y.clone()).expect("finite");
        let reference = omp_reference(&dict, &y, 10);
        for (m, (ids, _, coef)) in reference.iter().enumerate() {
            let stop = StopCriteria::default().with_max_m(m + 1);
            let Ok(trace) = run_wcga_co(&obj, &dict, Sequence::Constant(1.0), stop) else {
                mismatched += 1;
                continue;
            };
            let got = unsigned_terms(&trace.approximant.terms);
            if got.len() != ids.len() || got.iter().zip(ids).any(|(g, id)| g.0 != *id) {
                mismatched += 1;
                continue;
            }
            for ((_, c), e) in got.iter().zip(coef) {
                worst = worst.max((c - e).abs());
            }
        }
    }
    CheckResult {
        name: "omp_equivalence",
        passed: mismatched == 0 && worst <= 1e-8,
        detail: format!("{} instances, {mismatched} support mismatches, max coefficient error {worst:.3e}", opts.omp_instances),
    }
}

pub fn run_verify(opts: &VerifyOptions) -> VerifyReport {
    VerifyReport {
        checks: vec![
            check_smoothness(opts),
            check_orthogonality(opts),
            check_recurrence(opts),
            check_xi(opts),
            check_omp(opts),
            check_gradients(opts),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_solve_small() {
        let x = gauss_solve(vec![vec![0.0, 2.0], vec![3.0, 1.0]], vec![4.0, 5.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
        assert!(gauss_solve(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 2.0]).is_none());
    }

    #[test]
    fn omp_reference_canonical() {
        let d = FiniteDictionary64::identity(2).unwrap();
        let steps = omp_reference(&d, &[3.0, 4.0], 5);
        assert_eq!(steps.len(), 2);
        assert_eq!(steps[0].0, vec![1]);
        assert_eq!(steps[1].0, vec![1, 0]);
        assert_eq!(steps[1].2, vec![4.0, 3.0]);
    }

    #[test]
    fn hypothesis_sequences_satisfy_hypothesis() {
        let mut rng = seeded_rng(9);
        for _ in 0..50 {
            let (y, w) = hypothesis_sequence(&mut rng, 30);
            for k in 1..y.len() {
                assert!(y[k] <= y[k - 1] * (1.0 - w[k - 1] * y[k - 1]) + 1e-15);
                assert!(y[k] >= 0.0);
            }
        }
    }

    #[test]
    fn small_suite_passes() {
        let opts = VerifyOptions { smoothness_samples: 100, recurrence_trials: 50, xi_draws: 20, omp_instances: 3, ..Default::default() };
        let report = run_verify(&opts);
        for c in &report.checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
