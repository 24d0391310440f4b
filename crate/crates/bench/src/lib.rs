//! Shared fixtures for the codec benchmarks.

use scs_core::{ChaoticKey, KeyBundle, Signal2D};

pub fn bench_bundle() -> KeyBundle {
    KeyBundle::new(
        ChaoticKey::new(0.63, 0.33).unwrap(),
        ChaoticKey::new(0.28, 0.73).unwrap(),
        15,
        1000,
    )
    .unwrap()
}

/// Deterministic signal with `per_column` nonzeros in every column.
pub fn sparse_signal(m: usize, n: usize, per_column: usize) -> Signal2D {
    let mut state = 0x2545_F491_4F6C_DD1Du64;
    let mut next = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut x = Signal2D::zeros(m, n);
    for c in 0..n {
        let mut placed = 0;
        while placed < per_column {
            let r = (next() * m as f64) as usize % m;
            if x[(r, c)] == 0.0 {
                x[(r, c)] = next() * 3.0 - 1.5;
                placed += 1;
            }
        }
    }
    x
}
