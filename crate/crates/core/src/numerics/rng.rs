//! Deterministic pseudo-random generator.
//!
//! The stream contract is fixed so that other implementations can reproduce
//! every draw:
//!
//! * **Seeding.** The 256-bit state `s[0..4]` is filled by four successive
//!   outputs of SplitMix64 started at `seed`
//!   (`z += 0x9E3779B97F4A7C15; z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9;
//!   z = (z ^ (z >> 27)) * 0x94D049BB133111EB; z ^ (z >> 31)`).
//! * **Core.** xoshiro256\*\* (Blackman & Vigna). From the raw state
//!   `[1, 2, 3, 4]` the first four outputs are
//!   `11520, 0, 1509978240, 1215971899390074240`.
//! * **Uniform.** `uniform() = (next_u64() >> 11) * 2^-53`, in `[0, 1)`.
//! * **Integers.** `below(n)` rejects draws from the biased tail: with
//!   `zone = u64::MAX - (u64::MAX % n)`, draw until `x < zone`, return `x % n`.
//! * **Gaussian.** Box–Muller on a pair of uniforms `(u1, u2)`:
//!   `r = sqrt(-2 ln(1 - u1))`, outputs `r cos(2π u2)` then `r sin(2π u2)`.
//!   A request for `k` normals consumes `ceil(k / 2)` pairs, i.e.
//!   `2 * ceil(k / 2)` raw draws; an unused odd sine output is discarded.
//! * **Substreams.** `Rng::substream(seed, id)` seeds a fresh generator with
//!   `splitmix64(seed ^ splitmix64(id))`.

use serde::{Deserialize, Serialize};

use super::Matrix;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// xoshiro256** generator. Single-owner; clone to fork an identical stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rng {
    seed: u64,
    state: [u64; 4],
    draws: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let state = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Self {
            seed,
            state,
            draws: 0,
        }
    }

    /// Starts directly from a raw xoshiro state, bypassing SplitMix seeding.
    /// The state must not be all zero.
    pub fn from_state(state: [u64; 4]) -> Self {
        assert!(
            state.iter().any(|&s| s != 0),
            "xoshiro state must be nonzero"
        );
        Self {
            seed: 0,
            state,
            draws: 0,
        }
    }

    /// Independent generator for a named purpose derived from a run seed.
    pub fn substream(seed: u64, id: u64) -> Self {
        let mut sid = id;
        let mut mixed = seed ^ splitmix64(&mut sid);
        Self::new(splitmix64(&mut mixed))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of raw 64-bit draws consumed so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        self.draws += 1;
        result
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. Panics on `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    /// One Box–Muller pair of standard normals.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// Fills `out` with `N(mean, std^2)` draws, consuming `ceil(len / 2)`
    /// Box–Muller pairs.
    pub fn fill_gaussian(&mut self, out: &mut [f64], mean: f64, std: f64) {
        let mut chunks = out.chunks_mut(2);
        for chunk in &mut chunks {
            let (z0, z1) = self.normal_pair();
            chunk[0] = mean + std * z0;
            if let Some(v) = chunk.get_mut(1) {
                *v = mean + std * z1;
            }
        }
    }

    pub fn gaussian_vec(&mut self, len: usize, mean: f64, std: f64) -> Vec<f64> {
        let mut v = vec![0.0; len];
        self.fill_gaussian(&mut v, mean, std);
        v
    }

    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize, mean: f64, std: f64) -> Matrix {
        gaussian_fill(self, rows, cols, mean, std)
    }

    /// In-place Fisher–Yates shuffle, walking `i` from the end down to 1 and
    /// swapping with `below(i + 1)`.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// The first `k` positions of a partial Fisher–Yates pass over `0..n`,
    /// swapping position `i` (ascending) with `i + below(n - i)`.
    pub fn sample_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot draw {k} of {n} without replacement");
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }
}

/// Matrix of i.i.d. `N(mean, std^2)` entries in row-major order. `std >= 0`.
pub fn gaussian_fill(rng: &mut Rng, rows: usize, cols: usize, mean: f64, std: f64) -> Matrix {
    debug_assert!(std >= 0.0);
    let mut data = vec![0.0; rows * cols];
    rng.fill_gaussian(&mut data, mean, std);
    Matrix::from_vec(rows, cols, data).expect("shape by construction")
}
