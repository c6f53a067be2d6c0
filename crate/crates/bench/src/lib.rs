//! Fixtures shared by the benchmarks.

use remeta_core::{generate_dataset, Dataset, Scenario, SeededRng, SizePattern};

/// A baseline design cell with `k` studies of 20 subjects.
pub fn scenario(k: usize) -> Scenario {
    Scenario {
        k,
        sizes: SizePattern::Equal(20),
        q: 0.75,
        sigma2_c: 1.0,
        sigma2_t: 2.0,
        tau2: 0.3,
        mu: 0.0,
        reps: 1,
        seed: 1,
    }
}

/// One simulated dataset from [`scenario`].
pub fn dataset(k: usize) -> Dataset {
    let studies = generate_dataset(&scenario(k), &mut SeededRng::new(k as u64)).expect("valid scenario");
    Dataset::new(studies).expect("valid studies")
}
