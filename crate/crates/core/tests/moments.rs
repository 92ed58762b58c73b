mod common;

use common::{basis, random_network, rng, unit};
use nalgebra::DVector;
use netlearn::moments::{
    estimate_contracted_moment, estimate_linear_term, estimate_moments, make_context, sample_direction,
    true_contracted_moment,
};
use netlearn::network::{sample_dataset, AbsNetwork};
use proptest::prelude::*;

fn single_abs(d: usize) -> AbsNetwork {
    AbsNetwork::new(DVector::zeros(d), vec![1.0], vec![basis(d, 0)], 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn context_sorts_flipped_projections(seed in any::<u64>(), d in 1usize..8, k in 1usize..7) {
        let mut r = rng(seed);
        let net = random_network(&mut r, d, k, 2.0);
        let g = unit(&mut r, d);
        let ctx = make_context(&net, &g).unwrap();
        prop_assert_eq!(ctx.len(), k);
        let mut seen = vec![false; k];
        for s in 0..k {
            let z = ctx.z[s];
            prop_assert!(z >= 0.0);
            if s > 0 {
                prop_assert!(ctx.z[s - 1] <= z);
            }
            let i = ctx.permutation[s];
            seen[i] = true;
            let direct = ctx.sign_flips[s] * net.neurons()[i].u.dot(&g);
            prop_assert!((direct - z).abs() <= 1e-12);
        }
        prop_assert!(seen.into_iter().all(|b| b));
    }

    #[test]
    fn estimates_are_symmetric(seed in any::<u64>(), d in 1usize..6) {
        let mut r = rng(seed);
        let net = random_network(&mut r, d, 2, 1.5);
        let g = unit(&mut r, d);
        let data = sample_dataset(&net, 500, seed).unwrap();
        let est = estimate_moments(&data, &g, &[2, 4, 6]).unwrap();
        for m in &est.moments {
            prop_assert!((&m.matrix - m.matrix.transpose()).abs().max() <= 1e-10);
        }
    }
}

#[test]
fn directions_are_uniform_unit_vectors() {
    assert_eq!(sample_direction(1, 3).unwrap()[0].abs(), 1.0);
    let mut sum = 0.0;
    for seed in 0..10_000 {
        let g = sample_direction(5, seed).unwrap();
        assert!((g.norm() - 1.0).abs() <= 1e-12);
        sum += g[0];
    }
    assert!((sum / 10_000.0).abs() <= 0.05);
}

#[test]
fn order_four_moment_of_a_single_unit() {
    let d = 5;
    let net = single_abs(d);
    let g = basis(d, 0);
    let data = sample_dataset(&net, 1_000_000, 8).unwrap();
    let m = estimate_contracted_moment(&data, &g, 4).unwrap();
    let truth = true_contracted_moment(&net, &g, 4).unwrap();
    assert!((&truth - basis(d, 0) * basis(d, 0).transpose()).norm() <= 1e-12);
    let err = (&m.matrix - &truth).norm();
    assert!(err <= 0.05, "error {err}");
}

#[test]
fn quadrupling_samples_halves_the_error() {
    let d = 4;
    let mut r = rng(31);
    let net = random_network(&mut r, d, 2, 1.0);
    let g = unit(&mut r, d);
    let truth = true_contracted_moment(&net, &g, 4).unwrap();
    let mut small = 0.0;
    let mut large = 0.0;
    for t in 0..10 {
        let a = sample_dataset(&net, 100_000, 1_000 + t).unwrap();
        let b = sample_dataset(&net, 400_000, 2_000 + t).unwrap();
        small += (estimate_contracted_moment(&a, &g, 4).unwrap().matrix - &truth).norm();
        large += (estimate_contracted_moment(&b, &g, 4).unwrap().matrix - &truth).norm();
    }
    let ratio = small / large;
    assert!((1.4..=2.9).contains(&ratio), "ratio {ratio}");
}

#[test]
fn linear_term_recovers_the_linear_part() {
    let d = 5;
    let linear = AbsNetwork::linear(basis(d, 0), 1.0).unwrap();
    let w = estimate_linear_term(&sample_dataset(&linear, 1_000_000, 4).unwrap()).unwrap();
    assert!((w - basis(d, 0)).norm() <= 0.01);
    let w = estimate_linear_term(&sample_dataset(&single_abs(d), 1_000_000, 5).unwrap()).unwrap();
    assert!(w.norm() <= 0.01, "|w| = {}", w.norm());
}

#[test]
fn order_two_estimate_does_not_depend_on_direction() {
    let d = 4;
    let mut r = rng(44);
    let net = random_network(&mut r, d, 3, 2.0);
    let (g1, g2) = (unit(&mut r, d), unit(&mut r, d));
    let t1 = true_contracted_moment(&net, &g1, 2).unwrap();
    let t2 = true_contracted_moment(&net, &g2, 2).unwrap();
    assert!((&t1 - &t2).norm() <= 1e-12);
    let a = estimate_moments(&sample_dataset(&net, 200_000, 1).unwrap(), &g1, &[2]).unwrap();
    let b = estimate_moments(&sample_dataset(&net, 200_000, 2).unwrap(), &g2, &[2]).unwrap();
    let (ma, mb) = (&a.moments[0], &b.moments[0]);
    let se = (ma.std_error.unwrap().powi(2) + mb.std_error.unwrap().powi(2)).sqrt();
    assert!((&ma.matrix - &mb.matrix).norm() <= 4.0 * se);
}

#[test]
fn standard_error_tracks_actual_error() {
    let d = 4;
    let mut r = rng(9);
    let net = random_network(&mut r, d, 2, 1.0);
    let g = unit(&mut r, d);
    let est = estimate_moments(&sample_dataset(&net, 400_000, 3).unwrap(), &g, &[2, 4]).unwrap();
    for m in &est.moments {
        let err = (&m.matrix - true_contracted_moment(&net, &g, m.order.get()).unwrap()).norm();
        let se = m.std_error.unwrap();
        assert!(err <= 4.0 * se && se <= 10.0 * err.max(1e-3), "order {}: err {err} se {se}", m.order.get());
    }
}
