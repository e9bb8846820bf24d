//! Periodic box `[0, 2 pi m)^d` sampled on `n^d` points, its frequency
//! lattice `xi = j / m` with `j in [-n/2, n/2)^d`, and the multi-dimensional
//! FFTs that move fields between the two.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

struct GridInner {
    d: usize,
    n: usize,
    m: usize,
    len: usize,
    lattice: Vec<[i64; 3]>,
    xi: Vec<[f64; 3]>,
    xi_sq: Vec<f64>,
    mirror: Vec<usize>,
    nyquist: Vec<bool>,
    dealias_keep: Vec<bool>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Shared, immutable description of the box and its FFT plans.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.d() == other.d() && self.n() == other.n() && self.m() == other.m())
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("d", &self.d()).field("n", &self.n()).field("m", &self.m()).finish()
    }
}

fn signed_mode(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

impl Grid {
    /// `d` in {2, 3}, `n` a power of two (at least 4), box multiplier `m >= 1`.
    pub fn new(d: usize, n: usize, m: usize) -> Result<Self> {
        if !(2..=3).contains(&d) {
            return Err(Error::InvalidGrid(format!("dimension {d} unsupported (2 or 3)")));
        }
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("modes per dimension {n} must be a power of two >= 4")));
        }
        if m == 0 {
            return Err(Error::InvalidGrid("box multiplier must be >= 1".into()));
        }
        let len = n.pow(d as u32);
        let mut lattice = Vec::with_capacity(len);
        let mut xi = Vec::with_capacity(len);
        let mut xi_sq = Vec::with_capacity(len);
        let mut nyquist = Vec::with_capacity(len);
        let mut dealias_keep = Vec::with_capacity(len);
        let mut mirror = Vec::with_capacity(len);
        let inv_m = 1.0 / m as f64;
        for idx in 0..len {
            let mut j = [0i64; 3];
            let mut rest = idx;
            for axis in (0..d).rev() {
                j[axis] = signed_mode(rest % n, n);
                rest /= n;
            }
            let w = [j[0] as f64 * inv_m, j[1] as f64 * inv_m, j[2] as f64 * inv_m];
            lattice.push(j);
            xi.push(w);
            xi_sq.push(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
            let half = (n / 2) as i64;
            nyquist.push(j[..d].iter().any(|&v| v == -half));
            dealias_keep.push(j[..d].iter().all(|&v| 3 * v.unsigned_abs() as usize <= n));
            let mut mi = 0usize;
            for &v in &j[..d] {
                let wrapped = (-v).rem_euclid(n as i64) as usize;
                mi = mi * n + wrapped;
            }
            mirror.push(mi);
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        Ok(Grid {
            inner: Arc::new(GridInner {
                d,
                n,
                m,
                len,
                lattice,
                xi,
                xi_sq,
                mirror,
                nyquist,
                dealias_keep,
                forward,
                inverse,
            }),
        })
    }

    pub fn d(&self) -> usize {
        self.inner.d
    }

    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn m(&self) -> usize {
        self.inner.m
    }

    /// Number of lattice points, `n^d`.
    pub fn len(&self) -> usize {
        self.inner.len
    }

    pub fn is_empty(&self) -> bool {
        self.inner.len == 0
    }

    pub fn box_length(&self) -> f64 {
        2.0 * PI * self.inner.m as f64
    }

    /// `L^d`.
    pub fn volume(&self) -> f64 {
        self.box_length().powi(self.inner.d as i32)
    }

    pub fn dx(&self) -> f64 {
        self.box_length() / self.inner.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.inner.d as i32)
    }

    /// Frequency spacing `2 pi / L = 1 / m`.
    pub fn dxi(&self) -> f64 {
        1.0 / self.inner.m as f64
    }

    /// `|xi|` of the Nyquist plane, `n / (2m)`.
    pub fn nyquist_xi(&self) -> f64 {
        self.inner.n as f64 / (2.0 * self.inner.m as f64)
    }

    /// Infrared time scale `m^{2 alpha}` beyond which the smallest box
    /// frequency dominates the heat flow.
    pub fn t_ir(&self, alpha: f64) -> f64 {
        (self.inner.m as f64).powf(2.0 * alpha)
    }

    /// Signed integer lattice index `j` of flat index `idx`.
    pub fn lattice(&self, idx: usize) -> &[i64; 3] {
        &self.inner.lattice[idx]
    }

    pub fn xi(&self, idx: usize) -> &[f64; 3] {
        &self.inner.xi[idx]
    }

    pub fn xi_sq(&self, idx: usize) -> f64 {
        self.inner.xi_sq[idx]
    }

    pub fn xi_norm(&self, idx: usize) -> f64 {
        self.inner.xi_sq[idx].sqrt()
    }

    pub fn xi_sq_table(&self) -> &[f64] {
        &self.inner.xi_sq
    }

    /// Flat index of `-xi`.
    pub fn mirror(&self, idx: usize) -> usize {
        self.inner.mirror[idx]
    }

    pub fn is_nyquist(&self, idx: usize) -> bool {
        self.inner.nyquist[idx]
    }

    /// Whether the two-thirds rule keeps this mode.
    pub fn dealias_keeps(&self, idx: usize) -> bool {
        self.inner.dealias_keep[idx]
    }

    /// Flat index of the lattice point `j` (components in `[-n/2, n/2)`).
    pub fn index_of(&self, j: &[i64]) -> usize {
        let n = self.inner.n as i64;
        j.iter().take(self.inner.d).fold(0usize, |acc, &v| acc * self.inner.n + v.rem_euclid(n) as usize)
    }

    /// Physical coordinate of grid point `idx`.
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let n = self.inner.n;
        let dx = self.dx();
        let mut x = [0.0; 3];
        let mut rest = idx;
        for axis in (0..self.inner.d).rev() {
            x[axis] = (rest % n) as f64 * dx;
            rest /= n;
        }
        x
    }

    /// In-place unnormalized multi-dimensional FFT.
    pub(crate) fn fft(&self, data: &mut [Complex64], inverse: bool) {
        let g = &*self.inner;
        debug_assert_eq!(data.len(), g.len);
        let plan = if inverse { &g.inverse } else { &g.forward };
        let n = g.n;
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        // last axis is contiguous
        plan.process_with_scratch(data, &mut scratch);
        let mut lines = vec![Complex64::new(0.0, 0.0); g.len];
        for axis in 0..g.d - 1 {
            let stride = n.pow((g.d - 1 - axis) as u32);
            let outer_count = g.len / (n * stride);
            for outer in 0..outer_count {
                let base = outer * n * stride;
                for k in 0..n {
                    let src = &data[base + k * stride..base + k * stride + stride];
                    for (inner, v) in src.iter().enumerate() {
                        lines[(outer * stride + inner) * n + k] = *v;
                    }
                }
            }
            plan.process_with_scratch(&mut lines, &mut scratch);
            for outer in 0..outer_count {
                let base = outer * n * stride;
                for k in 0..n {
                    let dst = &mut data[base + k * stride..base + k * stride + stride];
                    for (inner, v) in dst.iter_mut().enumerate() {
                        *v = lines[(outer * stride + inner) * n + k];
                    }
                }
            }
        }
    }
}
