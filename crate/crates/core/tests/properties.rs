//! Property tests for the invariants that hold across the whole input space:
//! margin bounds, threshold monotonicity, dataset round-trips, and Pareto
//! dominance.

use adaptive_cascade::cascade::{score_margin, DeploymentModel, ProblemKind, TraceCache};
use adaptive_cascade::pareto::{pareto_indices, pareto_indices_brute_force};
use adaptive_cascade::profile::{load_dataset, save_dataset, ImageSet};
use adaptive_cascade::space::{DesignSpace, HyperParams, LayerRanges, ParamRange, SlotSpec};
use adaptive_cascade::synthetic::{generate_synthetic, CapacityModel, SyntheticSpec};
use proptest::prelude::*;

fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0..1.0f64, k).prop_map(|raw| {
        let sum: f64 = raw.iter().sum();
        if sum == 0.0 {
            vec![1.0 / raw.len() as f64; raw.len()]
        } else {
            raw.iter().map(|v| v / sum).collect()
        }
    })
}

fn small_dataset(seed: u64, noise: f64) -> adaptive_cascade::profile::ProfileDataset {
    let space = DesignSpace::new(
        vec![
            SlotSpec::Search(vec![LayerRanges::FullyConnected {
                units: ParamRange::new(500, 1500, 500),
            }]),
            SlotSpec::Fixed(HyperParams::parse_canonical("conv1-64_k3_fc-4000").unwrap()),
        ],
        11,
    );
    let spec = SyntheticSpec {
        class_count: 6,
        image_count: 50,
        capacity: vec![
            CapacityModel::Affine { base: 0.55, weights: vec![0.3] },
            CapacityModel::Constant(0.9),
        ],
        energy_per_mac_mj: 25.0,
        energy_offset_mj: 2.5,
        noise_scale: noise,
        seed,
        platform_tag: "prop".into(),
        split_fraction: 0.7,
    };
    generate_synthetic(&spec, &space).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn margin_stays_in_unit_interval(scores in (2usize..12).prop_flat_map(simplex)) {
        let m = score_margin(&scores).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&m));
        // matches the naive two-pass computation
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        prop_assert!((m - (sorted[0] - sorted[1])).abs() < 1e-12);
    }

    #[test]
    fn energy_monotone_and_rates_bounded(
        seed in 0u64..20,
        lo in 0.0..1.0f64,
        hi in 0.0..1.0f64,
        units_step in 0u32..3,
    ) {
        let dataset = small_dataset(seed, 0.25);
        let arch = dataset.design_space.materialize(0, &[500 + 500 * units_step]).unwrap();
        let big = HyperParams::parse_canonical("conv1-64_k3_fc-4000").unwrap();
        let cache = TraceCache::build(
            &[arch, big],
            &DeploymentModel::Local,
            &dataset,
            ImageSet::Validation,
        ).unwrap();
        let problem = ProblemKind::EnergyMin { max_degradation: 0.05 };
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let a = cache.evaluate(&[lo], &problem).unwrap();
        let b = cache.evaluate(&[hi], &problem).unwrap();
        // raising θ escalates a superset of images
        prop_assert!(b.expected_energy_mj >= a.expected_energy_mj);
        for eval in [&a, &b] {
            prop_assert!((0.0..=1.0).contains(&eval.error_rate));
            prop_assert!((-1.0..=1.0).contains(&eval.constraint_value));
            for r in &eval.escalation_rates {
                prop_assert!((0.0..=1.0).contains(r));
            }
        }
    }

    #[test]
    fn pareto_fronts_match_brute_force_and_are_idempotent(
        points in proptest::collection::vec((0.0..100.0f64, 0.0..1.0f64), 0..120),
    ) {
        let fast = pareto_indices(&points);
        let brute = pareto_indices_brute_force(&points);
        prop_assert_eq!(&fast, &brute);
        let front: Vec<(f64, f64)> = fast.iter().map(|&i| points[i]).collect();
        let again = pareto_indices(&front);
        prop_assert_eq!(again.len(), front.len());
    }
}

proptest! {
    // filesystem round trips are slower; fewer cases
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn save_load_round_trip_is_identity(seed in 0u64..1000, noise in 0.0..0.4f64) {
        let dataset = small_dataset(seed, noise);
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&dataset, dir.path()).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        prop_assert_eq!(dataset, loaded);
    }
}
