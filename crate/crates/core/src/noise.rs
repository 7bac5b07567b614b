//! Reproducible Gaussian increments.
//!
//! Every path owns a ChaCha8 stream selected by `(seed, path_index)`. Step `k`
//! of a path always reads words `4k..4k+4` of that stream, i.e. two 64-bit
//! slots, whatever the scheme. Values therefore depend only on
//! `(seed, path_index, step_index)` and never on thread scheduling, and
//! different schemes run on the same seed see common random numbers.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use statrs::function::erf::erfc_inv;

/// 32-bit words consumed per step (two `u64` slots).
const WORDS_PER_STEP: u128 = 4;

/// Standard normal quantile.
#[inline]
pub fn standard_normal_quantile(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

/// Maps 64 random bits to the open interval `(0, 1)`.
#[inline]
fn open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// The two standard normal variates reserved for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepNormals {
    pub z0: f64,
    pub z1: f64,
}

/// Raw bits of one step, converted to normals on demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawStep {
    a: u64,
    b: u64,
}

impl RawStep {
    #[inline]
    pub fn z0(self) -> f64 {
        standard_normal_quantile(open_unit(self.a))
    }

    #[inline]
    pub fn z1(self) -> f64 {
        standard_normal_quantile(open_unit(self.b))
    }

    pub fn normals(self) -> StepNormals {
        StepNormals {
            z0: self.z0(),
            z1: self.z1(),
        }
    }
}

/// Sequential reader over one path's stream.
#[derive(Clone)]
pub struct PathNoise {
    rng: ChaCha8Rng,
}

impl PathNoise {
    pub fn new(seed: u64, path_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        PathNoise { rng }
    }

    /// Positions the reader at `step_index`.
    pub fn at_step(seed: u64, path_index: u64, step_index: u64) -> Self {
        let mut noise = Self::new(seed, path_index);
        noise.rng.set_word_pos(step_index as u128 * WORDS_PER_STEP);
        noise
    }

    /// Bits for the next step; advances by exactly one step.
    #[inline]
    pub fn next_raw(&mut self) -> RawStep {
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        RawStep { a, b }
    }

    pub fn next_step(&mut self) -> StepNormals {
        self.next_raw().normals()
    }
}

/// Random access to `(seed, path_index, step_index)`.
pub fn step_normals(seed: u64, path_index: u64, step_index: u64) -> StepNormals {
    PathNoise::at_step(seed, path_index, step_index).next_step()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_is_accurate() {
        assert!(standard_normal_quantile(0.5).abs() < 1e-15);
        assert!((standard_normal_quantile(0.975) - 1.959963984540054).abs() < 1e-13);
        assert!((standard_normal_quantile(0.025) + 1.959963984540054).abs() < 1e-13);
        assert!((standard_normal_quantile(1e-10) + 6.361340902404056).abs() < 1e-10);
        let tiny = open_unit(0);
        assert!(tiny > 0.0 && standard_normal_quantile(tiny).is_finite());
        let big = open_unit(u64::MAX);
        assert!(big < 1.0 && standard_normal_quantile(big).is_finite());
    }

    #[test]
    fn random_access_matches_sequential_reading() {
        let mut seq = PathNoise::new(42, 7);
        for k in 0..50u64 {
            let a = seq.next_step();
            let b = step_normals(42, 7, k);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn streams_differ_across_paths_and_seeds() {
        let a = step_normals(42, 0, 0);
        assert_ne!(a, step_normals(42, 1, 0));
        assert_ne!(a, step_normals(43, 0, 0));
        assert_ne!(a, step_normals(42, 0, 1));
    }

    #[test]
    fn sample_moments_are_standard() {
        let n = 200_000;
        let mut noise = PathNoise::new(1, 0);
        let (mut s1, mut s2, mut s4, mut cross) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let z = noise.next_step();
            s1 += z.z0;
            s2 += z.z0 * z.z0;
            s4 += z.z0.powi(4);
            cross += z.z0 * z.z1;
        }
        let nf = n as f64;
        assert!((s1 / nf).abs() < 4.0 / nf.sqrt());
        assert!((s2 / nf - 1.0).abs() < 4.0 * 2f64.sqrt() / nf.sqrt());
        assert!((s4 / nf - 3.0).abs() < 4.0 * 96f64.sqrt() / nf.sqrt());
        assert!((cross / nf).abs() < 4.0 / nf.sqrt());
    }
}
