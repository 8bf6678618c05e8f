use approx::assert_relative_eq;
use nalgebra::DMatrix;
use sparsegreedy::objectives::{gaussian_vec, seeded_rng};
use sparsegreedy::vecops::{dot, norm2};
use sparsegreedy::*;

fn instance(k: usize, n: usize, seed: u64) -> (FiniteDictionary64, Vec<f64>) {
    let mut rng = seeded_rng(seed);
    let d = FiniteDictionary64::gaussian(k, n, &mut rng).unwrap();
    let y = gaussian_vec(&mut rng, k);
    (d, y)
}

fn ls_stop(max_m: usize) -> StopCriteria<f64> {
    StopCriteria::default().with_max_m(max_m)
}

#[test]
fn best_step_is_matching_pursuit() {
    for seed in 0..10 {
        let (d, y) = instance(12, 30, seed);
        let obj = make_least_squares(y.clone()).unwrap();
        let tr = run_generic(&obj, &d, Sequence::Constant(1.0), UpdateRule::BestStep, ls_stop(25)).unwrap();

        let mut res = y.clone();
        for rec in &tr.records {
            let (best, c) = (0..d.len())
                .map(|i| (i, dot(d.column(i), &res)))
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .unwrap();
            assert_eq!(rec.atom.id(), Some(best), "seed {seed} m {}", rec.m);
            assert_relative_eq!(rec.lambda.unwrap().abs(), c.abs(), max_relative = 1e-8, epsilon = 1e-12);
            for (r, g) in res.iter_mut().zip(d.column(best)) {
                *r -= c * g;
            }
            assert_relative_eq!(rec.energy, 0.5 * dot(&res, &res), max_relative = 1e-8, epsilon = 1e-14);
        }
    }
}

#[test]
fn squared_euclidean_norm_power_reduces_to_least_squares() {
    for seed in 0..5 {
        let (d, y) = instance(10, 25, 100 + seed);
        let ls = make_least_squares(y.clone()).unwrap();
        let np = make_norm_power(y, 2.0, 2.0).unwrap();
        let a = run_wcga_co(&ls, &d, Sequence::Constant(1.0), ls_stop(8)).unwrap();
        let b = run_wcga_co(&np, &d, Sequence::Constant(1.0), ls_stop(8)).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert!(ra.atom.same_key(&rb.atom));
            // ‖f − x‖² is twice the least-squares energy
            assert_relative_eq!(2.0 * ra.energy, rb.energy, max_relative = 1e-8, epsilon = 1e-14);
        }
        for (x, z) in a.approximant.point.iter().zip(&b.approximant.point) {
            assert!((x - z).abs() <= 1e-8);
        }
    }
}

#[test]
fn reduced_step_near_one_matches_best_step() {
    let (d, y) = instance(8, 20, 7);
    let obj = make_least_squares(y).unwrap();
    let best = run_generic(&obj, &d, Sequence::Constant(1.0), UpdateRule::BestStep, ls_stop(1)).unwrap();
    let reduced =
        run_generic(&obj, &d, Sequence::Constant(1.0), UpdateRule::ReducedStep(1.0 - 1e-9), ls_stop(1)).unwrap();
    assert!(best.records[0].atom.same_key(&reduced.records[0].atom));
    assert_relative_eq!(best.records[0].energy, reduced.records[0].energy, max_relative = 1e-8);
    assert!(reduced.records[0].energy >= best.records[0].energy);
}

#[test]
fn free_relaxation_second_step_solves_normal_equations() {
    for seed in 0..10 {
        let (d, y) = instance(3, 6, 200 + seed);
        let obj = make_least_squares(y.clone()).unwrap();
        let tr = run_wgafr_co(&obj, &d, Sequence::Constant(1.0), ls_stop(2)).unwrap();
        if tr.records.len() < 2 {
            continue;
        }
        let g1 = d.realize(&tr.records[0].atom).unwrap();
        let p1: Vec<f64> = g1.iter().map(|x| x * tr.records[0].lambda.unwrap()).collect();
        let phi = d.realize(&tr.records[1].atom).unwrap();
        // minimize ‖y − a·G₁ − λ·φ‖² over (a, λ)
        let (a11, a12, a22) = (dot(&p1, &p1), dot(&p1, &phi), dot(&phi, &phi));
        let (b1, b2) = (dot(&p1, &y), dot(&phi, &y));
        let det = a11 * a22 - a12 * a12;
        let a = (b1 * a22 - b2 * a12) / det;
        let lambda = (a11 * b2 - a12 * b1) / det;
        let rec = &tr.records[1];
        assert_relative_eq!(rec.w_or_r.unwrap(), 1.0 - a, epsilon = 1e-7);
        assert_relative_eq!(rec.lambda.unwrap(), lambda, epsilon = 1e-7);
        let res: Vec<f64> = y.iter().zip(p1.iter().zip(&phi)).map(|(t, (u, v))| t - a * u - lambda * v).collect();
        assert_relative_eq!(rec.energy, 0.5 * dot(&res, &res), max_relative = 1e-9, epsilon = 1e-14);
    }
}

#[test]
fn gap_tolerance_stops_at_first_small_gap() {
    let d = FiniteDictionary64::identity(2).unwrap();
    let obj = make_least_squares(vec![3.0, 4.0]).unwrap();
    let stop = StopCriteria::default().with_reference(0.0).with_gap_tol(5.0);
    let tr = run_wcga_co(&obj, &d, Sequence::Constant(1.0), stop).unwrap();
    assert_eq!(tr.stop_reason, StoppingReason::GapTol);
    assert_eq!(tr.records.len(), 1);
    assert_eq!(tr.records[0].gap, Some(4.5));
}

#[test]
fn single_precision_runs_decrease() {
    let mut rng = seeded_rng(11);
    let d = FiniteDictionary::<f32>::gaussian(16, 40, &mut rng).unwrap();
    let mut coeffs = vec![0.0f32; 40];
    coeffs[3] = 0.5;
    coeffs[17] = -0.3;
    coeffs[29] = 0.2;
    let y = d.synthesize(&coeffs).unwrap();
    let obj = make_least_squares(y).unwrap();
    for rule in [UpdateRule::Chebyshev, UpdateRule::ConvexRelaxation, UpdateRule::FreeRelaxation] {
        let tr = run_generic(&obj, &d, Sequence::Constant(1.0f32), rule.clone(), StopCriteria::default().with_max_m(20))
            .unwrap();
        assert!(!tr.records.is_empty());
        let e = tr.energies();
        assert!(e.iter().all(|x| x.is_finite()));
        assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-6), "{rule:?}");
        assert!(tr.final_energy() < 0.1 * tr.initial_energy, "{rule:?}");
    }
}

#[test]
fn rank_one_sup_matches_top_singular_value() {
    let mut rng = seeded_rng(5);
    for n in 1..=7 {
        let w: Vec<f64> = gaussian_vec(&mut rng, n * n);
        let sup = RankOneDictionary::new(n).unwrap().sup_inner_product(&w).unwrap();
        // row-major n × n
        let m = DMatrix::from_row_slice(n, n, &w);
        let sigma = m.singular_values().max();
        assert!(sup.converged);
        assert_relative_eq!(sup.value, sigma, max_relative = 1e-8);
        let g = RankOneDictionary::new(n).unwrap().realize(&sup.witness).unwrap();
        assert_relative_eq!(norm2(&g), 1.0, epsilon = 1e-12);
    }
}
