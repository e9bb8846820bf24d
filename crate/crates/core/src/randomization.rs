//! Smooth unit-cube partition of unity in frequency, Wiener randomization of
//! a datum, synthetic rough data, and the moment check on the multipliers.
//!
//! Random multipliers are drawn per unordered pair `{k, -k}` so that the
//! randomized field stays real. The pair is represented by its member whose
//! first nonzero component is positive (or `k = 0`), packed into an integer
//! key with 16 bits per dimension offset by `2^15`. A draw for
//! `(master_seed, key, member)` reads four 32-bit words from
//! `ChaCha8Rng::seed_from_u64(master_seed)` on stream `member` at word
//! position `4 * key`; Gaussians use Box–Muller on the two 64-bit values.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::field::SpectralVectorField;
use crate::grid::Grid;
use crate::params::RegimeParams;

pub const PLATEAU_RADIUS: f64 = 0.75;
pub const SUPPORT_RADIUS: f64 = 1.0;

fn glue(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

/// Radial bump profile: 1 on `r < 3/4`, 0 on `r >= 1`, smooth step between.
pub fn bump(r: f64) -> f64 {
    if r < PLATEAU_RADIUS {
        1.0
    } else if r >= SUPPORT_RADIUS {
        0.0
    } else {
        let x = (SUPPORT_RADIUS - r) / (SUPPORT_RADIUS - PLATEAU_RADIUS);
        let a = glue(x);
        a / (a + glue(1.0 - x))
    }
}

/// Normalized weights `bump(xi - k) / sum_k' bump(xi - k')` at an arbitrary
/// frequency, as `(k, weight)` pairs with nonzero weight.
pub fn partition_weights(xi: &[f64]) -> Vec<([i64; 3], f64)> {
    let d = xi.len();
    let lo: Vec<i64> = xi.iter().map(|&x| (x - SUPPORT_RADIUS).ceil() as i64).collect();
    let hi: Vec<i64> = xi.iter().map(|&x| (x + SUPPORT_RADIUS).floor() as i64).collect();
    let mut out = Vec::new();
    let mut k = [0i64; 3];
    k[..d].copy_from_slice(&lo);
    loop {
        let r = (0..d).map(|i| (xi[i] - k[i] as f64).powi(2)).sum::<f64>().sqrt();
        let w = bump(r);
        if w > 0.0 {
            out.push((k, w));
        }
        let mut axis = 0;
        loop {
            if axis == d {
                let total: f64 = out.iter().map(|(_, w)| w).sum();
                for (_, w) in &mut out {
                    *w /= total;
                }
                return out;
            }
            k[axis] += 1;
            if k[axis] <= hi[axis] {
                break;
            }
            k[axis] = lo[axis];
            axis += 1;
        }
    }
}

/// Per-frequency `(cube, weight)` table in compressed-row form.
#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    grid: Grid,
    offsets: Vec<usize>,
    cube_ids: Vec<u32>,
    weights: Vec<f64>,
    cubes: Vec<[i64; 3]>,
}

impl PartitionOfUnity {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Cubes `k` carrying weight at some lattice frequency.
    pub fn cubes(&self) -> &[[i64; 3]] {
        &self.cubes
    }

    /// `(k, weight)` entries at flat index `idx`.
    pub fn entries(&self, idx: usize) -> impl Iterator<Item = (&[i64; 3], f64)> + '_ {
        let range = self.offsets[idx]..self.offsets[idx + 1];
        self.cube_ids[range.clone()].iter().zip(&self.weights[range]).map(|(&c, &w)| (&self.cubes[c as usize], w))
    }

    pub fn max_entries(&self) -> usize {
        self.offsets.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    /// `sum_k g_k weight(xi - k)` at every lattice frequency.
    pub fn multiplier(&self, draw: impl Fn(&[i64; 3]) -> f64) -> Vec<f64> {
        let g: Vec<f64> = self.cubes.iter().map(draw).collect();
        (0..self.grid.len())
            .map(|i| {
                let range = self.offsets[i]..self.offsets[i + 1];
                self.cube_ids[range.clone()].iter().zip(&self.weights[range]).map(|(&c, &w)| g[c as usize] * w).sum()
            })
            .collect()
    }
}

pub fn build_partition(grid: &Grid) -> PartitionOfUnity {
    let d = grid.d();
    let m = grid.m() as i64;
    let n = grid.n() as i64;
    // cubes reachable from the lattice have |k_i| <= n / (2m) + 1
    let kmax = n / (2 * m) + 1;
    let side = (2 * kmax + 1) as usize;
    let mut slot = vec![u32::MAX; side.pow(d as u32)];
    let slot_of = |k: &[i64; 3]| k[..d].iter().fold(0usize, |acc, &v| acc * side + (v + kmax) as usize);
    let mut cubes = Vec::new();
    let mut offsets = Vec::with_capacity(grid.len() + 1);
    let mut cube_ids = Vec::new();
    let mut weights = Vec::new();
    offsets.push(0);
    for idx in 0..grid.len() {
        for (k, w) in partition_weights(&grid.xi(idx)[..d]) {
            let s = slot_of(&k);
            if slot[s] == u32::MAX {
                slot[s] = cubes.len() as u32;
                cubes.push(k);
            }
            cube_ids.push(slot[s]);
            weights.push(w);
        }
        offsets.push(cube_ids.len());
    }
    PartitionOfUnity { grid: grid.clone(), offsets, cube_ids, weights, cubes }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Gaussian,
    Rademacher,
    /// Degenerate `g = 1`, for testing the partition identity.
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomSpec {
    pub distribution: Distribution,
    pub master_seed: u64,
}

/// Representative of `{k, -k}`: first nonzero component positive.
pub fn canonical_cube(k: &[i64; 3]) -> [i64; 3] {
    match k.iter().find(|&&v| v != 0) {
        Some(&v) if v < 0 => [-k[0], -k[1], -k[2]],
        _ => *k,
    }
}

/// Integer key of the pair `{k, -k}`.
pub fn pair_key(k: &[i64; 3]) -> u64 {
    let c = canonical_cube(k);
    c.iter().fold(0u64, |acc, &v| (acc << 16) | ((v + (1 << 15)) as u64 & 0xffff))
}

impl RandomSpec {
    pub fn new(distribution: Distribution, master_seed: u64) -> Self {
        RandomSpec { distribution, master_seed }
    }

    /// The variable attached to stream position `key` for ensemble `member`.
    pub fn draw_key(&self, key: u64, member: u64) -> f64 {
        if self.distribution == Distribution::Unit {
            return 1.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(member);
        rng.set_word_pos(u128::from(key) * 4);
        let x = rng.next_u64();
        match self.distribution {
            Distribution::Rademacher => {
                if x & 1 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Distribution::Gaussian => {
                let y = rng.next_u64();
                let u1 = ((x >> 11) + 1) as f64 / (1u64 << 53) as f64;
                let u2 = (y >> 11) as f64 / (1u64 << 53) as f64;
                (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
            }
            Distribution::Unit => unreachable!(),
        }
    }

    /// `g_k` for ensemble `member`; `g_{-k} = g_k` by construction.
    pub fn draw(&self, k: &[i64; 3], member: u64) -> f64 {
        self.draw_key(pair_key(k), member)
    }
}

/// `coeff(xi) <- sum_k g_k weight(xi - k) coeff(xi)`.
pub fn randomize(
    datum: &SpectralVectorField,
    partition: &PartitionOfUnity,
    spec: &RandomSpec,
    member: u64,
) -> SpectralVectorField {
    assert_eq!(datum.grid(), partition.grid(), "partition built for another grid");
    let mult = partition.multiplier(|k| spec.draw(k, member));
    let mut out = datum.with_multiplier(|i| mult[i]);
    out.symmetrize();
    out
}

/// Monte Carlo estimate of `E|g|^{2n}` and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

pub fn moment_check(spec: &RandomSpec, n: u32, samples: usize) -> MomentEstimate {
    assert!(n >= 1 && samples >= 2);
    let values: Vec<f64> = (0..samples as u64).map(|j| spec.draw_key(j, 0).abs().powi(2 * n as i32)).collect();
    let mean = values.iter().sum::<f64>() / samples as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
    MomentEstimate { estimate: mean, std_error: (var / samples as f64).sqrt() }
}

/// `(2n - 1)!!`, the Gaussian moment `E|g|^{2n}`.
pub fn gaussian_moment(n: u32) -> f64 {
    (1..=n).map(|i| (2 * i - 1) as f64).product()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn unit_from_hash(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Deterministic rough datum with `|coeff(xi)| = amplitude |xi|^{-s-d/2}`.
///
/// Every nonzero, non-Nyquist mode is populated. The phase of the mode with
/// lattice index `j` (canonical half) is `2 pi u` with `u` read from
/// `splitmix64(pair_key(j))`; the direction is `xi^perp / |xi|` in 2D and in
/// 3D the projection of a hashed vector onto the plane orthogonal to `xi`.
pub fn synthesize_datum(regime: &RegimeParams, grid: &Grid, amplitude: f64) -> SpectralVectorField {
    let d = grid.d();
    let expo = -regime.s() - d as f64 / 2.0;
    let mut comps = vec![vec![Complex64::new(0.0, 0.0); grid.len()]; d];
    for idx in 0..grid.len() {
        let j = grid.lattice(idx);
        if grid.is_nyquist(idx) || j.iter().all(|&v| v == 0) || canonical_cube(j) != *j {
            continue;
        }
        let key = pair_key(j);
        let h = splitmix64(key);
        let phase = Complex64::from_polar(1.0, 2.0 * PI * unit_from_hash(h));
        let xi = grid.xi(idx);
        let norm = grid.xi_norm(idx);
        let dir = if d == 2 {
            [-xi[1] / norm, xi[0] / norm, 0.0]
        } else {
            let mut v = [0.0; 3];
            let mut hh = h;
            for c in &mut v {
                hh = splitmix64(hh);
                *c = 2.0 * unit_from_hash(hh) - 1.0;
            }
            let dot = (v[0] * xi[0] + v[1] * xi[1] + v[2] * xi[2]) / norm;
            for (c, x) in v.iter_mut().zip(xi) {
                *c -= dot * x / norm;
            }
            let mut len = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            if len < 1e-8 {
                // hashed vector parallel to xi: fall back to xi x e_z (or e_x)
                v = if xi[0].abs() + xi[1].abs() > 0.0 { [xi[1], -xi[0], 0.0] } else { [1.0, 0.0, 0.0] };
                len = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            }
            [v[0] / len, v[1] / len, v[2] / len]
        };
        let mag = amplitude * norm.powf(expo);
        let mi = grid.mirror(idx);
        for c in 0..d {
            let z = phase * (mag * dir[c]);
            comps[c][idx] = z;
            comps[c][mi] = z.conj();
        }
    }
    SpectralVectorField::from_components(grid, comps).expect("sizes match the grid")
}
