//! Property-based invariants: generator bijections across sizes, pure
//! relocation under permutation, wire-format round-trips, and keygen
//! avalanche behaviour.

use proptest::prelude::*;
use scs_core::chaos::ChaoticKey;
use scs_core::permute::{self, PermutationOrder};
use scs_core::pipeline;
use scs_core::sense::Ciphertext;
use scs_core::Signal2D;

fn arb_key() -> impl Strategy<Value = ChaoticKey> {
    (0.01..0.99f64, 0.01..0.99f64)
        .prop_filter_map("z0 must differ from mu", |(mu, z0)| ChaoticKey::new(mu, z0).ok())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 50, failure_persistence: None, ..ProptestConfig::default() })]

    // Sampled stand-in for "every n up to 10^4": 50 random keys, each with a
    // random size, plus the explicit edges below.
    #[test]
    fn generators_produce_bijections(key in arb_key(), n in 1usize..=10_000) {
        let sorting = permute::order_by_sorting(&key, n, 100);
        prop_assert!(PermutationOrder::new(sorting.indices().to_vec()).is_ok());
        let flags = permute::order_by_flags(&key, n);
        prop_assert!(PermutationOrder::new(flags.indices().to_vec()).is_ok());
    }
}

#[test]
fn generators_produce_bijections_at_edges() {
    let key = ChaoticKey::new(0.63, 0.33).unwrap();
    for n in [1usize, 2, 10_000] {
        assert!(PermutationOrder::new(permute::order_by_sorting(&key, n, 0).indices().to_vec()).is_ok());
        assert!(PermutationOrder::new(permute::order_by_flags(&key, n).indices().to_vec()).is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    // Permutation is pure relocation: the multiset of value bits is
    // untouched, so energy and total sparsity are conserved exactly.
    #[test]
    fn apply_is_pure_relocation(
        key in arb_key(),
        m in 1usize..=12,
        n in 1usize..=12,
        scale in 0.1..100.0f64,
    ) {
        let x = Signal2D::from_fn(m, n, |r, c| ((r * 31 + c * 17) % 13) as f64 * scale - 6.0 * scale);
        let order = permute::order_by_flags(&key, m * n);
        let permuted = permute::apply(&x, &order).unwrap();
        let mut a: Vec<u64> = x.as_slice().iter().map(|v| v.to_bits()).collect();
        let mut b: Vec<u64> = permuted.as_slice().iter().map(|v| v.to_bits()).collect();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
        prop_assert_eq!(
            permute::sparsity_vector(&x, 0.0).total(),
            permute::sparsity_vector(&permuted, 0.0).total()
        );
    }

    #[test]
    fn ciphertext_bytes_round_trip(
        k in 1usize..=6,
        n in 1usize..=6,
        m in 1usize..=9,
        d in 1usize..=20,
        seed in any::<i32>(),
    ) {
        let values = Signal2D::from_fn(k, n, |r, c| {
            ((r * 7 + c * 3 + seed.unsigned_abs() as usize) % 101) as f64 * 0.37 - 18.0
        });
        let ct = Ciphertext::new(values, m, d);
        let back = Ciphertext::from_bytes(&ct.to_bytes()).unwrap();
        prop_assert_eq!(back, ct);
    }

    #[test]
    fn keygen_always_yields_valid_bundles(seed in any::<[u8; 32]>()) {
        let bundle = pipeline::keygen(&seed);
        prop_assert!(bundle.perm_key.mu() > 0.0 && bundle.perm_key.mu() < 1.0);
        prop_assert!(bundle.perm_key.z0() > 0.0 && bundle.perm_key.z0() < 1.0);
        prop_assert!(bundle.perm_key.z0() != bundle.perm_key.mu());
        prop_assert!(bundle.matrix_key.z0() != bundle.matrix_key.mu());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, failure_persistence: None, ..ProptestConfig::default() })]

    // Flipping one seed bit re-derives all four key components.
    #[test]
    fn keygen_avalanches_on_single_bit_flips(seed in any::<[u8; 32]>(), bit in 0usize..256) {
        let base = pipeline::keygen(&seed);
        let mut flipped_seed = seed;
        flipped_seed[bit / 8] ^= 1 << (bit % 8);
        let flipped = pipeline::keygen(&flipped_seed);
        prop_assert_ne!(base.perm_key.mu(), flipped.perm_key.mu());
        prop_assert_ne!(base.perm_key.z0(), flipped.perm_key.z0());
        prop_assert_ne!(base.matrix_key.mu(), flipped.matrix_key.mu());
        prop_assert_ne!(base.matrix_key.z0(), flipped.matrix_key.z0());
    }
}
