mod common;

use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn bank_evicts_oldest_first((capacity, dim, batches, seed) in bank_strategy()) {
        prop_assert_eq!(bank_fifo_case(capacity, dim, &batches, seed), Ok(()));
    }

    #[test]
    fn replay_buffer_survives_task_sequences((capacity, bins, tasks, seed) in replay_strategy()) {
        prop_assert_eq!(replay_sequence_case(capacity, bins, &tasks, seed), Ok(()));
    }

    #[test]
    fn momentum_update_contract(seed in any::<u64>(), eta in 0.0f64..=1.0, frac in 0.0f64..=1.0) {
        prop_assert_eq!(momentum_case(seed, eta, frac), Ok(()));
    }

    #[test]
    fn abundant_selection_is_bin_balanced(slots in 1usize..64, bins in 1usize..12, seed in any::<u64>()) {
        prop_assert!(abundant_bin_spread(slots, bins, seed) <= 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rotation_distance_agrees_with_logm_and_arccos(seed in any::<u64>(), angle in 0.0f64..3.1) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let r = random_rotation(&mut rng);
        let q = r * inemo::geometry::axis_angle_rotation(random_axis(&mut rng), angle);
        let d = inemo::geometry::rotation_error(&r, &q).unwrap();
        prop_assert!((d - angle).abs() < 1e-9);
        prop_assert!((d - logm_distance(&r, &q)).abs() < 1e-8);
        prop_assert!((d - arccos_distance(&r, &q)).abs() < 1e-8);
    }
}
