//! Real vector fields stored by their Fourier coefficients.
//!
//! Convention: `coeff(xi_k) = L^{-d} \int f(x) e^{-i xi_k . x} dx`, so that
//! `||f||_{L^2}^2 = L^d sum_k |coeff(xi_k)|^2`.

use std::ops::{Add, AddAssign, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::Grid;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `d` arrays of Fourier coefficients on a shared [`Grid`].
#[derive(Clone, Debug)]
pub struct SpectralVectorField {
    grid: Grid,
    comps: Vec<Vec<Complex64>>,
}

impl PartialEq for SpectralVectorField {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.comps == other.comps
    }
}

impl SpectralVectorField {
    pub fn zeros(grid: &Grid) -> Self {
        SpectralVectorField { grid: grid.clone(), comps: vec![vec![ZERO; grid.len()]; grid.d()] }
    }

    pub fn from_components(grid: &Grid, comps: Vec<Vec<Complex64>>) -> Result<Self> {
        if comps.len() != grid.d() {
            return Err(Error::SizeMismatch { expected: grid.d(), got: comps.len() });
        }
        if let Some(bad) = comps.iter().find(|c| c.len() != grid.len()) {
            return Err(Error::SizeMismatch { expected: grid.len(), got: bad.len() });
        }
        Ok(SpectralVectorField { grid: grid.clone(), comps })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn comps(&self) -> &[Vec<Complex64>] {
        &self.comps
    }

    pub fn comp(&self, c: usize) -> &[Complex64] {
        &self.comps[c]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [Complex64] {
        &mut self.comps[c]
    }

    pub fn into_components(self) -> Vec<Vec<Complex64>> {
        self.comps
    }

    pub(crate) fn check_grid(&self, other: &Self) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Physical samples on the uniform grid, one real array per component.
    pub fn to_physical(&self) -> Vec<Vec<f64>> {
        self.comps
            .iter()
            .map(|c| {
                let mut buf = c.clone();
                self.grid.fft(&mut buf, true);
                buf.into_iter().map(|z| z.re).collect()
            })
            .collect()
    }

    /// Inverse of [`to_physical`](Self::to_physical). The result is made
    /// exactly Hermitian.
    pub fn from_physical(grid: &Grid, samples: &[Vec<f64>]) -> Result<Self> {
        if samples.len() != grid.d() {
            return Err(Error::SizeMismatch { expected: grid.d(), got: samples.len() });
        }
        let scale = 1.0 / grid.len() as f64;
        let mut comps = Vec::with_capacity(grid.d());
        for s in samples {
            if s.len() != grid.len() {
                return Err(Error::SizeMismatch { expected: grid.len(), got: s.len() });
            }
            let mut buf: Vec<Complex64> = s.iter().map(|&x| Complex64::new(x * scale, 0.0)).collect();
            grid.fft(&mut buf, false);
            comps.push(buf);
        }
        let mut f = SpectralVectorField { grid: grid.clone(), comps };
        f.symmetrize();
        Ok(f)
    }

    /// Replace each coefficient by the average of itself and the conjugate
    /// of its mirror, enforcing `coeff(-xi) = conj(coeff(xi))` exactly.
    pub fn symmetrize(&mut self) {
        let grid = self.grid.clone();
        for c in &mut self.comps {
            for i in 0..grid.len() {
                let mi = grid.mirror(i);
                if mi < i {
                    continue;
                }
                if mi == i {
                    c[i] = Complex64::new(c[i].re, 0.0);
                } else {
                    let avg = 0.5 * (c[i] + c[mi].conj());
                    c[i] = avg;
                    c[mi] = avg.conj();
                }
            }
        }
    }

    /// Multiply every coefficient by a real per-mode multiplier.
    pub fn apply_multiplier(&mut self, mult: impl Fn(usize) -> f64) {
        let len = self.grid.len();
        let factors: Vec<f64> = (0..len).map(mult).collect();
        for c in &mut self.comps {
            for (z, &f) in c.iter_mut().zip(&factors) {
                *z *= f;
            }
        }
    }

    pub fn with_multiplier(&self, mult: impl Fn(usize) -> f64) -> Self {
        let mut out = self.clone();
        out.apply_multiplier(mult);
        out
    }

    /// Leray projection `(I - xi xi^T / |xi|^2)` on every nonzero mode; the
    /// mean is removed.
    pub fn leray_project(&self) -> Self {
        let mut out = self.clone();
        out.leray_project_in_place();
        out
    }

    pub fn leray_project_in_place(&mut self) {
        let d = self.grid.d();
        for i in 0..self.grid.len() {
            let k2 = self.grid.xi_sq(i);
            if k2 == 0.0 {
                for c in &mut self.comps {
                    c[i] = ZERO;
                }
                continue;
            }
            let xi = *self.grid.xi(i);
            let mut dot = ZERO;
            for c in 0..d {
                dot += self.comps[c][i] * xi[c];
            }
            let dot = dot / k2;
            for c in 0..d {
                self.comps[c][i] -= dot * xi[c];
            }
        }
    }

    /// `Lambda^order`: multiplies by `|xi|^order`; the zero mode goes to zero
    /// for every order.
    pub fn fractional_power(&self, order: f64) -> Self {
        let grid = self.grid.clone();
        self.with_multiplier(|i| {
            let k2 = grid.xi_sq(i);
            if k2 == 0.0 {
                0.0
            } else {
                k2.powf(0.5 * order)
            }
        })
    }

    /// Bessel potential `(1 + |xi|^2)^{beta/2}`.
    pub fn bessel_power(&self, beta: f64) -> Self {
        let grid = self.grid.clone();
        self.with_multiplier(|i| (1.0 + grid.xi_sq(i)).powf(0.5 * beta))
    }

    /// Zero every mode the two-thirds rule discards.
    pub fn dealias(&mut self) {
        let grid = self.grid.clone();
        for c in &mut self.comps {
            for (i, z) in c.iter_mut().enumerate() {
                if !grid.dealias_keeps(i) {
                    *z = ZERO;
                }
            }
        }
    }

    pub fn zero_nyquist(&mut self) {
        let grid = self.grid.clone();
        for c in &mut self.comps {
            for (i, z) in c.iter_mut().enumerate() {
                if grid.is_nyquist(i) {
                    *z = ZERO;
                }
            }
        }
    }

    pub fn zero_mean(&mut self) {
        let i0 = self.grid.index_of(&[0, 0, 0]);
        for c in &mut self.comps {
            c[i0] = ZERO;
        }
    }

    /// Largest modulus of the zero-mode coefficients.
    pub fn mean_magnitude(&self) -> f64 {
        let i0 = self.grid.index_of(&[0, 0, 0]);
        self.comps.iter().map(|c| c[i0].norm()).fold(0.0, f64::max)
    }

    /// Plancherel pairing `<f, g>_{L^2} = L^d sum Re(f conj(g))`.
    pub fn inner(&self, other: &Self) -> f64 {
        debug_assert!(self.grid == other.grid);
        let s: f64 = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum::<f64>())
            .sum();
        s * self.grid.volume()
    }

    /// `||f||_{L^2}^2`.
    pub fn l2_sq(&self) -> f64 {
        self.inner(self)
    }

    /// `||Lambda^order f||_{L^2}^2` (zero mode excluded unless `order == 0`).
    pub fn hom_sobolev_sq(&self, order: f64) -> f64 {
        let grid = &self.grid;
        let mut acc = 0.0;
        for i in 0..grid.len() {
            let k2 = grid.xi_sq(i);
            let w = if k2 == 0.0 {
                if order == 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                k2.powf(order)
            };
            if w == 0.0 {
                continue;
            }
            let m: f64 = self.comps.iter().map(|c| c[i].norm_sqr()).sum();
            acc += w * m;
        }
        acc * grid.volume()
    }

    /// Largest `|xi_hat . coeff(xi)| / |coeff(xi)|` over nonzero modes.
    pub fn divergence_residual(&self) -> f64 {
        let d = self.grid.d();
        let mut worst: f64 = 0.0;
        for i in 0..self.grid.len() {
            let k2 = self.grid.xi_sq(i);
            if k2 == 0.0 {
                continue;
            }
            let xi = self.grid.xi(i);
            let mut dot = ZERO;
            let mut mag = 0.0;
            for c in 0..d {
                dot += self.comps[c][i] * xi[c];
                mag += self.comps[c][i].norm_sqr();
            }
            if mag > 0.0 {
                worst = worst.max(dot.norm() / (k2.sqrt() * mag.sqrt()));
            }
        }
        worst
    }

    /// `max |coeff(-xi) - conj(coeff(xi))|`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.comps {
            for (i, z) in c.iter().enumerate() {
                worst = worst.max((c[self.grid.mirror(i)] - z.conj()).norm());
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        debug_assert!(self.grid == other.grid);
        for (x, y) in self.comps.iter_mut().zip(&other.comps) {
            for (u, v) in x.iter_mut().zip(y) {
                *u += v * a;
            }
        }
    }

    pub fn scale(&mut self, a: f64) {
        for c in &mut self.comps {
            for z in c.iter_mut() {
                *z *= a;
            }
        }
    }

    /// Max over modes of `|self - other|`, summed over components.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst: f64 = 0.0;
        for (x, y) in self.comps.iter().zip(&other.comps) {
            for (u, v) in x.iter().zip(y) {
                worst = worst.max((u - v).norm());
            }
        }
        worst
    }

    /// Largest pointwise speed `|f(x)|` on the physical grid.
    pub fn max_speed(&self) -> f64 {
        let phys = self.to_physical();
        (0..self.grid.len())
            .map(|i| phys.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

impl Add for &SpectralVectorField {
    type Output = SpectralVectorField;

    fn add(self, rhs: &SpectralVectorField) -> SpectralVectorField {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &SpectralVectorField {
    type Output = SpectralVectorField;

    fn sub(self, rhs: &SpectralVectorField) -> SpectralVectorField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Mul<f64> for &SpectralVectorField {
    type Output = SpectralVectorField;

    fn mul(self, rhs: f64) -> SpectralVectorField {
        let mut out = self.clone();
        out.scale(rhs);
        out
    }
}

impl AddAssign<&SpectralVectorField> for SpectralVectorField {
    fn add_assign(&mut self, rhs: &SpectralVectorField) {
        self.axpy(1.0, rhs);
    }
}

/// Seeded random fields for invariant checks.
pub mod test_fields {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random real, mean-free field with Gaussian coefficients, damped
    /// smoothly towards the Nyquist plane.
    pub fn random_field(grid: &Grid, seed: u64, smooth: bool) -> SpectralVectorField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut comps = vec![vec![ZERO; grid.len()]; grid.d()];
        let kmax = grid.nyquist_xi();
        for c in comps.iter_mut() {
            for z in c.iter_mut() {
                *z = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            }
        }
        let mut f = SpectralVectorField::from_components(grid, comps).unwrap();
        if smooth {
            let g = grid.clone();
            f.apply_multiplier(|i| (-8.0 * g.xi_sq(i) / (kmax * kmax)).exp());
        }
        f.symmetrize();
        f.zero_nyquist();
        f.zero_mean();
        f
    }

    pub fn random_div_free(grid: &Grid, seed: u64) -> SpectralVectorField {
        let mut f = random_field(grid, seed, true);
        f.dealias();
        f.leray_project()
    }
}
