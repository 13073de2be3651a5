//! Timing sanity for the advertised cost profiles: the sorting-based
//! distances scale like n log n while the kernel double sums scale like n^2.
//! Only the ratio between the two growth rates is asserted, with wide
//! margins, so the test is insensitive to absolute machine speed.

use std::hint::black_box;
use std::time::Instant;

use lfi::core::SeedSpec;
use lfi::distances::{cvm_distance, energy_distance, mmd2, wasserstein1, MmdKernel};
use rand::Rng;

fn draws(n: usize, stream: u64) -> Vec<f64> {
    let mut rng = SeedSpec::new(4242).child(stream).rng();
    (0..n).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect()
}

/// Best of three timings of `f`, in seconds.
fn time_best<F: FnMut() -> f64>(mut f: F) -> f64 {
    let mut best = f64::INFINITY;
    for _ in 0..3 {
        let start = Instant::now();
        black_box(f());
        best = best.min(start.elapsed().as_secs_f64());
    }
    best
}

struct SizePair {
    y_s: Vec<f64>,
    z_s: Vec<f64>,
    y_l: Vec<f64>,
    z_l: Vec<f64>,
}

impl SizePair {
    /// Timing ratio of `f` on the large pair over the small pair.
    fn growth(&self, mut f: impl FnMut(&[f64], &[f64]) -> f64) -> f64 {
        let t_small = time_best(|| f(&self.y_s, &self.z_s));
        let t_large = time_best(|| f(&self.y_l, &self.z_l));
        t_large / t_small.max(1e-9)
    }
}

#[test]
fn quadratic_estimators_grow_faster_than_sorting_estimators() {
    let (small, large) = (1_000usize, 10_000usize);
    let pair = SizePair {
        y_s: draws(small, 0),
        z_s: draws(small, 1),
        y_l: draws(large, 2),
        z_l: draws(large, 3),
    };
    let kernel = MmdKernel::Gaussian { bandwidth: 1.0 };

    let r_w1 = pair.growth(|y, z| wasserstein1(y, z).unwrap());
    let r_cvm = pair.growth(|y, z| cvm_distance(y, z).unwrap());
    let r_energy = pair.growth(|y, z| energy_distance(y, z, 1).unwrap());
    let r_mmd = pair.growth(|y, z| mmd2(y, z, &kernel).unwrap());

    // Predicted growth over a 10x size step: ~13x for n log n, ~100x for
    // n^2, a gap of roughly 7.5x. Accept anything in [2, 50].
    let sorting = (r_w1 * r_cvm).sqrt();
    let quadratic = (r_energy * r_mmd).sqrt();
    let gap = quadratic / sorting;
    assert!(
        (2.0..=50.0).contains(&gap),
        "growth gap {gap:.2} outside [2, 50] \
         (w1 {r_w1:.1}, cvm {r_cvm:.1}, energy {r_energy:.1}, mmd {r_mmd:.1})"
    );
}
