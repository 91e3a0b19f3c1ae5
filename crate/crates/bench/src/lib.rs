//! Shared inputs for the benchmarks.

use dsanet_core::metrics::BinaryMask;
use dsanet_core::Tensor;

/// Deterministic pseudo-random values in `[-1, 1)`.
pub fn signal(shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Tensor::from_fn(shape.to_vec(), |_| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 40) as f32 / (1u64 << 24) as f32) * 2.0 - 1.0
    })
}

/// A square mask of crossing thick bars, a typical input for thinning.
pub fn bars(size: usize, thickness: usize) -> BinaryMask {
    let mid = size / 2;
    let data = (0..size * size)
        .map(|i| {
            let (y, x) = (i / size, i % size);
            y.abs_diff(mid) < thickness || x.abs_diff(mid) < thickness || y.abs_diff(x) < thickness
        })
        .collect();
    BinaryMask::new(size, size, data).expect("size matches")
}
