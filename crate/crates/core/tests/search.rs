mod common;

use common::{basis, rng, unit};
use nalgebra::{DMatrix, DVector};
use netlearn::network::{sample_dataset, AbsNetwork, Dataset};
use netlearn::search::{
    candidate_search, dedupe_modulo_sign, lambda_grid, random_sphere_net, validate, CandidateModel, ScoringRule,
    SearchBudget, SearchInput, SearchOutcome,
};
use netlearn::subspace::CandidateSubspace;
use proptest::prelude::*;
use rand::Rng;

fn subspace(vectors: &[DVector<f64>]) -> CandidateSubspace {
    let qr = DMatrix::from_columns(vectors).qr();
    CandidateSubspace::from_basis(qr.q())
}

fn input<'a>(
    w: &'a DVector<f64>,
    u_net: &'a [DVector<f64>],
    grid: &'a [f64],
    holdout: &'a Dataset,
    epsilon: f64,
    k: usize,
    budget: &'a SearchBudget,
) -> SearchInput<'a> {
    SearchInput {
        linear_term: w,
        u_net,
        lambda_net: grid,
        holdout,
        epsilon,
        k,
        norm_bound: 2.0,
        budget,
        rule: ScoringRule::FirstAccept,
    }
}

#[test]
fn one_dimensional_net_is_plus_minus_the_basis_vector() {
    let d = 6;
    let v = unit(&mut rng(2), d);
    let net = random_sphere_net(&subspace(std::slice::from_ref(&v)), 0.3, 40, 9).unwrap();
    assert!(net.iter().all(|p| (p - &v).norm() <= 1e-12 || (p + &v).norm() <= 1e-12));
    assert!(net.iter().any(|p| p.dot(&v) > 0.0) && net.iter().any(|p| p.dot(&v) < 0.0));
    assert_eq!(dedupe_modulo_sign(net, 1e-9).len(), 1);
}

#[test]
fn planar_net_covers_the_circle() {
    let d = 5;
    let mut r = rng(4);
    let (a, b) = (unit(&mut r, d), unit(&mut r, d));
    let v = subspace(&[a, b]);
    let xi = 0.3;
    let net = random_sphere_net(&v, xi, 10_000, 1).unwrap();
    let outside = DMatrix::identity(d, d) - v.projector();
    for p in &net {
        assert!((p.norm() - 1.0).abs() <= 1e-12);
        assert!((&outside * p).norm() <= 1e-9);
    }
    let (e0, e1) = (v.basis.column(0).into_owned(), v.basis.column(1).into_owned());
    for i in 0..1000 {
        let theta = std::f64::consts::TAU * i as f64 / 1000.0;
        let probe = &e0 * theta.cos() + &e1 * theta.sin();
        let nearest = net.iter().map(|p| (p - &probe).norm()).fold(f64::INFINITY, f64::min);
        assert!(nearest <= xi / 2.0, "probe {i} is {nearest} from the net");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lambda_grid_covers_the_interval(r in 1.0f64..6.0, xi in 0.01f64..0.9, seed in any::<u64>()) {
        let grid = lambda_grid(r, xi).unwrap();
        prop_assert_eq!(grid[0], -r);
        prop_assert_eq!(*grid.last().unwrap(), r);
        prop_assert!(grid.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= xi * (1.0 + 1e-12)));
        let mut g = rng(seed);
        for _ in 0..10_000 {
            let t: f64 = g.random_range(-r..=r);
            let idx = grid.partition_point(|v| *v < t);
            let below = if idx > 0 { (t - grid[idx - 1]).abs() } else { f64::INFINITY };
            let above = grid.get(idx).map_or(f64::INFINITY, |v| (v - t).abs());
            prop_assert!(below.min(above) <= xi);
        }
    }

    #[test]
    fn accepted_candidates_validate_directly(seed in any::<u64>()) {
        let d = 4;
        let mut r = rng(seed);
        let us: Vec<DVector<f64>> = (0..3).map(|_| unit(&mut r, d)).collect();
        let grid = lambda_grid(2.0, 0.5).unwrap();
        let lambda = grid[r.random_range(0..grid.len())];
        let target = AbsNetwork::new(DVector::zeros(d), vec![lambda], vec![us[1].clone()], 2.0).unwrap();
        let holdout = sample_dataset(&target, 2_000, seed).unwrap();
        let w = DVector::zeros(d);
        let budget = SearchBudget::default();
        let out = candidate_search(&input(&w, &us, &grid, &holdout, 0.1, 2, &budget)).unwrap();
        match out {
            SearchOutcome::Found { model, residual, .. } => {
                let (ok, direct) = validate(&model, &holdout, 0.1).unwrap();
                prop_assert!(ok);
                prop_assert!((direct - residual).abs() <= 1e-9 * (1.0 + direct));
                prop_assert!(model.lambda_l1() <= 2.0 + 1e-12);
            }
            other => prop_assert!(false, "planted candidate was not found: {other:?}"),
        }
    }
}

#[test]
fn planted_single_unit_is_recovered_exactly() {
    let d = 5;
    let mut r = rng(8);
    let us: Vec<DVector<f64>> = (0..6).map(|_| unit(&mut r, d)).collect();
    let grid = lambda_grid(2.0, 0.25).unwrap();
    let w = DVector::from_element(d, 0.1);
    let target = AbsNetwork::new(w.clone(), vec![grid[3]], vec![us[4].clone()], 2.0).unwrap();
    let holdout = sample_dataset(&target, 5_000, 3).unwrap();
    let budget = SearchBudget::default();
    let out = candidate_search(&input(&w, &us, &grid, &holdout, 1e-6, 1, &budget)).unwrap();
    let SearchOutcome::Found { model, index, residual, .. } = out else { panic!("{out:?}") };
    assert_eq!(model.m(), 1);
    assert_eq!(model.lambdas[0], grid[3]);
    assert!((&model.directions[0] - &us[4]).norm() <= 1e-15);
    assert_eq!(index, 1 + (4 * grid.len() + 3) as u64);
    assert!(residual <= 1e-20);
}

#[test]
fn zero_target_accepts_the_linear_model() {
    let d = 3;
    let holdout = sample_dataset(&AbsNetwork::zero(d), 1_000, 1).unwrap();
    let w = DVector::zeros(d);
    let us = vec![basis(d, 0)];
    let grid = lambda_grid(2.0, 0.5).unwrap();
    let budget = SearchBudget::default();
    let out = candidate_search(&input(&w, &us, &grid, &holdout, 0.0, 2, &budget)).unwrap();
    let SearchOutcome::Found { model, index, .. } = out else { panic!("{out:?}") };
    assert_eq!((model.m(), index), (0, 0));
}

#[test]
fn validation_rejects_a_unit_shift() {
    let d = 4;
    let mut r = rng(5);
    let truth = AbsNetwork::new(DVector::zeros(d), vec![1.0], vec![unit(&mut r, d)], 1.0).unwrap();
    let holdout = sample_dataset(&truth, 10_000, 6).unwrap();
    let exact = CandidateModel {
        linear_term: DVector::zeros(d),
        lambdas: vec![1.0],
        directions: vec![truth.neurons()[0].u.clone()],
    };
    let (ok, res) = validate(&exact, &holdout, 0.0).unwrap();
    assert!(ok && res == 0.0);
    let shifted = CandidateModel { linear_term: basis(d, 0), ..exact };
    let (ok, res) = validate(&shifted, &holdout, 0.5).unwrap();
    assert!(!ok, "residual {res}");
    assert!((res - 1.0).abs() <= 0.05);
}

#[test]
fn search_is_deterministic() {
    let d = 4;
    let mut r = rng(10);
    let us: Vec<DVector<f64>> = (0..8).map(|_| unit(&mut r, d)).collect();
    let target = AbsNetwork::new(DVector::zeros(d), vec![0.7, -0.6], vec![us[2].clone(), us[5].clone()], 2.0).unwrap();
    let holdout = sample_dataset(&target, 3_000, 2).unwrap();
    let grid = lambda_grid(2.0, 0.3).unwrap();
    let w = DVector::zeros(d);
    let budget = SearchBudget::default();
    let a = candidate_search(&input(&w, &us, &grid, &holdout, 0.3, 2, &budget)).unwrap();
    let b = candidate_search(&input(&w, &us, &grid, &holdout, 0.3, 2, &budget)).unwrap();
    match (a, b) {
        (SearchOutcome::Found { model: ma, index: ia, .. }, SearchOutcome::Found { model: mb, index: ib, .. }) => {
            assert_eq!((ma, ia), (mb, ib));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn candidate_cap_gives_budget_not_fail() {
    let d = 4;
    let mut r = rng(12);
    let us: Vec<DVector<f64>> = (0..10).map(|_| unit(&mut r, d)).collect();
    let far = AbsNetwork::new(DVector::zeros(d), vec![3.0], vec![unit(&mut r, d)], 3.0).unwrap();
    let holdout = sample_dataset(&far, 2_000, 4).unwrap();
    let grid = lambda_grid(2.0, 0.5).unwrap();
    let w = DVector::zeros(d);
    let tight = SearchBudget { max_candidates: 100, ..SearchBudget::default() };
    let out = candidate_search(&input(&w, &us, &grid, &holdout, 0.01, 2, &tight)).unwrap();
    assert!(matches!(out, SearchOutcome::Budget { .. }), "{out:?}");
    let loose = SearchBudget::default();
    let out = candidate_search(&input(&w, &us, &grid, &holdout, 0.01, 2, &loose)).unwrap();
    let SearchOutcome::Fail { best_residual, stats } = out else { panic!("{out:?}") };
    assert!(best_residual > 0.01 * 0.01 / 2.0);
    let (nu, nl) = (us.len() as f64, grid.len() as f64);
    assert!(stats.candidates_in_scope <= 1.0 + nu * nl + (nu * nl).powi(2));
}

#[test]
fn malformed_inputs_are_rejected() {
    let d = 3;
    let holdout = sample_dataset(&AbsNetwork::zero(d), 100, 1).unwrap();
    let w = DVector::zeros(d);
    let budget = SearchBudget::default();
    let grid = lambda_grid(2.0, 0.5).unwrap();
    let not_unit = vec![basis(d, 0) * 2.0];
    assert!(candidate_search(&input(&w, &not_unit, &grid, &holdout, 0.1, 1, &budget)).is_err());
    let unsorted = vec![0.5, -0.5];
    let us = vec![basis(d, 0)];
    assert!(candidate_search(&input(&w, &us, &unsorted, &holdout, 0.1, 1, &budget)).is_err());
    let too_wide = vec![-3.0, 0.0];
    assert!(candidate_search(&input(&w, &us, &too_wide, &holdout, 0.1, 1, &budget)).is_err());
    assert!(lambda_grid(0.5, 0.1).is_err());
}
