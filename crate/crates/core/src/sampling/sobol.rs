//! Scrambled Sobol' sequences.
//!
//! Direction numbers come from the table of Joe and Kuo ("Constructing Sobol
//! sequences with better two-dimensional projections", SIAM J. Sci. Comput.
//! 30, 2008), embedded for the first 1111 dimensions. Points are generated
//! in Gray-code order with 32 bits of precision, and the all-zeros point at
//! index 0 is always skipped.
//!
//! Scrambling combines a left linear matrix scramble (a random unit
//! lower-triangular bit matrix applied to each dimension's direction
//! vectors) with a digital random shift XOR-ed into every emitted point.
//! The scrambled sequence keeps the digital-net structure of the raw one
//! but is centered in distribution, so seeded replicates average out the
//! deterministic bias of the plain sequence.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

use crate::error::{Error, Result};

const BITS: u32 = 32;

/// Dimensions supported by the embedded direction-number table.
pub const MAX_DIMENSION: usize = 1111;

const JOE_KUO_TABLE: &str = include_str!("joe_kuo_1111.txt");

struct DirectionRow {
    s: usize,
    a: u32,
    m: Vec<u32>,
}

fn direction_table() -> &'static [DirectionRow] {
    static TABLE: OnceLock<Vec<DirectionRow>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut rows = Vec::with_capacity(MAX_DIMENSION - 1);
        for line in JOE_KUO_TABLE.lines().skip(1) {
            let mut it = line.split_whitespace();
            let _d: usize = it.next().expect("dimension column").parse().expect("dimension");
            let s: usize = it.next().expect("degree column").parse().expect("degree");
            let a: u32 = it.next().expect("coefficient column").parse().expect("coefficient");
            let m: Vec<u32> = it.map(|t| t.parse().expect("initial direction number")).collect();
            assert_eq!(m.len(), s, "malformed direction-number row");
            rows.push(DirectionRow { s, a, m });
        }
        assert_eq!(rows.len(), MAX_DIMENSION - 1);
        rows
    })
}

/// Direction vectors for one dimension (1-based), as fixed-point fractions
/// with the binary point to the left of bit 31.
fn direction_vectors(dim: usize) -> [u32; BITS as usize] {
    let mut v = [0u32; BITS as usize];
    if dim == 1 {
        // First dimension is the van der Corput sequence in base 2.
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = 1 << (31 - k);
        }
        return v;
    }
    let row = &direction_table()[dim - 2];
    let s = row.s;
    for k in 0..s.min(BITS as usize) {
        v[k] = row.m[k] << (31 - k);
    }
    for k in s..BITS as usize {
        let mut value = v[k - s] ^ (v[k - s] >> s);
        for i in 1..s {
            if (row.a >> (s - 1 - i)) & 1 == 1 {
                value ^= v[k - i];
            }
        }
        v[k] = value;
    }
    v
}

/// Applies a left linear matrix scramble: `rows` is a random unit
/// lower-triangular bit matrix, and output digit i is the parity of
/// `rows[i] & v`.
fn scramble_vector(rows: &[u32; BITS as usize], v: u32) -> u32 {
    let mut out = 0u32;
    for (i, row) in rows.iter().enumerate() {
        out |= ((row & v).count_ones() & 1) << (31 - i);
    }
    out
}

/// A streaming generator of Sobol' points in `[0,1)^dimension`.
#[derive(Debug)]
pub struct SobolStream {
    dimension: usize,
    /// Index of the next point to emit; starts at 1 because index 0 is the
    /// all-zeros point, which argsort cannot break ties on meaningfully.
    index: u64,
    state: Vec<u32>,
    directions: Vec<[u32; BITS as usize]>,
    shift: Vec<u32>,
}

impl SobolStream {
    /// An unscrambled stream. Deterministic; mainly useful for validating
    /// the generator against published values.
    pub fn unscrambled(dimension: usize) -> Result<Self> {
        Self::build(dimension, None)
    }

    /// A stream scrambled with a linear matrix scramble and a digital shift
    /// derived from `seed`.
    pub fn scrambled(dimension: usize, seed: u64) -> Result<Self> {
        Self::build(dimension, Some(seed))
    }

    fn build(dimension: usize, seed: Option<u64>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidInput("Sobol' dimension must be positive".into()));
        }
        if dimension > MAX_DIMENSION {
            return Err(Error::UnsupportedDimension {
                requested: dimension,
                max: MAX_DIMENSION,
            });
        }
        let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
        let mut directions = Vec::with_capacity(dimension);
        let mut shift = Vec::with_capacity(dimension);
        for dim in 1..=dimension {
            let raw = direction_vectors(dim);
            match rng.as_mut() {
                None => {
                    directions.push(raw);
                    shift.push(0);
                }
                Some(rng) => {
                    let mut rows = [0u32; BITS as usize];
                    for (r, row) in rows.iter_mut().enumerate() {
                        let below = if r == 0 { 0 } else { rng.next_u32() & (!0u32 << (BITS as usize - r)) };
                        *row = below | (1 << (31 - r));
                    }
                    let mut scrambled = [0u32; BITS as usize];
                    for (k, &v) in raw.iter().enumerate() {
                        scrambled[k] = scramble_vector(&rows, v);
                    }
                    directions.push(scrambled);
                    shift.push(rng.next_u32());
                }
            }
        }
        Ok(Self {
            dimension,
            index: 1,
            state: vec![0; dimension],
            directions,
            shift,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Writes the next point into `out`.
    pub fn fill_next(&mut self, out: &mut [f64]) {
        assert_eq!(out.len(), self.dimension);
        let step = (self.index - 1).trailing_ones() as usize;
        assert!(
            step < BITS as usize,
            "Sobol' stream exhausted after 2^32 - 1 points"
        );
        for (j, slot) in out.iter_mut().enumerate() {
            self.state[j] ^= self.directions[j][step];
            *slot = f64::from(self.state[j] ^ self.shift[j]) / (1u64 << BITS) as f64;
        }
        self.index += 1;
    }

    /// Returns the next point as a fresh vector.
    pub fn next_point(&mut self) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension];
        self.fill_next(&mut out);
        out
    }
}
