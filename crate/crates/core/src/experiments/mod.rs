//! Seeded reproductions of the numerical studies, used by the CLI.
//!
//! Every random quantity is drawn from a ChaCha8 stream derived from the
//! master seed: stream `i` belongs to run (or instance) `i`, so results do
//! not depend on how runs are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub mod balls;
pub mod guarantee;
pub mod imrt;
pub mod montecarlo;
pub mod output;
pub mod problem_file;
pub mod smp_demo;

/// Independent generator for run `index` under `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub(crate) fn euclid(a: &[f64]) -> f64 {
    crate::convex_sets::norm(a)
}
