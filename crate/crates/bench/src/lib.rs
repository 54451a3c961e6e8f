//! Shared input builders for the benchmark suite.

use fasthyde::{simulate, HsiCube};

/// Seeded noisy cube at the standard benchmark noise level.
pub fn noisy_cube(
    width: usize,
    height: usize,
    n_bands: usize,
    rank: usize,
    seed: u64,
) -> (HsiCube, HsiCube) {
    let clean =
        simulate::make_ground_truth(width, height, n_bands, rank, seed).expect("ground truth");
    let noisy = simulate::add_case1(&clean, 0.10, seed ^ 0xABCD).expect("noise");
    (clean, noisy)
}
