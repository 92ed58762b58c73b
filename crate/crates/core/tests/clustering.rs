mod common;

use common::{rng, unit};
use netlearn::clustering::{cluster_diameter_check, cluster_weights_and_big, partition_clusters, ClusterPartition};
use netlearn::harness::{generate_instance, InstanceKind, InstanceKnobs};
use netlearn::moments::make_context;
use proptest::prelude::*;

fn sorted(mut z: Vec<f64>) -> Vec<f64> {
    z.sort_by(f64::total_cmp);
    z
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn partition_satisfies_both_conditions(z in prop::collection::vec(0.0f64..1.0, 1..12), delta in 0.001f64..0.5) {
        let z = sorted(z);
        let parts = partition_clusters(&z, delta).unwrap();
        prop_assert_eq!(parts.first().unwrap().start, 0);
        prop_assert_eq!(parts.last().unwrap().end, z.len());
        for w in parts.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
            prop_assert!(z[w[1].start] - z[w[0].end - 1] > delta);
        }
        for r in &parts {
            prop_assert!(!r.is_empty());
            for s in r.start + 1..r.end {
                prop_assert!(z[s] - z[s - 1] <= delta);
            }
        }
    }

    #[test]
    fn representatives_repartition_into_singletons(z in prop::collection::vec(0.0f64..1.0, 1..12), delta in 0.001f64..0.5) {
        let z = sorted(z);
        let parts = partition_clusters(&z, delta).unwrap();
        let reps: Vec<f64> = parts.iter().map(|r| z[r.start]).collect();
        let again = partition_clusters(&reps, delta).unwrap();
        prop_assert_eq!(again.len(), reps.len());
    }

    #[test]
    fn big_set_is_strict_threshold(lambdas in prop::collection::vec(-1.0f64..1.0, 1..10), tau in 0.0f64..0.5) {
        let k = lambdas.len();
        let intervals: Vec<_> = (0..k).map(|i| i..i + 1).collect();
        let (weights, big) = cluster_weights_and_big(&lambdas, &intervals, tau).unwrap();
        prop_assert_eq!(&weights, &lambdas);
        for (j, w) in weights.iter().enumerate() {
            prop_assert_eq!(big.contains(&j), w.abs() > tau);
        }
    }
}

#[test]
fn unsorted_input_is_rejected() {
    assert!(partition_clusters(&[0.3, 0.1], 0.1).is_err());
}

#[test]
fn planted_pair_diameter_is_reported() {
    let knobs = InstanceKnobs { pair_distance: 1e-4, ..Default::default() };
    let inst = generate_instance(InstanceKind::ClusteredPairs, 3, 10, 3.0, 7, &knobs).unwrap();
    let net = &inst.network;
    let mut r = rng(3);
    let g = unit(&mut r, 10);
    let ctx = make_context(net, &g).unwrap();
    let partition = ClusterPartition::build(&ctx, net, 1e-3, 0.01).unwrap();
    let report = cluster_diameter_check(&ctx, net, &partition).unwrap();
    let pair = report.clusters.iter().find(|c| c.members.contains(&0)).unwrap();
    let mut members = pair.members.clone();
    members.sort();
    assert_eq!(members, vec![0, 1]);
    assert!((pair.diameter - 1e-4).abs() <= 1e-9, "diameter {}", pair.diameter);
    let j = report.clusters.iter().position(|c| c.members.contains(&0)).unwrap();
    assert!(partition.cluster_weights[j].abs() <= 1e-12);
    assert!(!partition.is_big(j));
}
