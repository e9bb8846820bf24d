//! The dealiased pseudo-spectral advection term `B(f, g) = P (f . grad) g`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::SpectralVectorField;

/// Divergence residual above which a field is not treated as solenoidal.
pub const DIV_FREE_TOL: f64 = 1e-10;

fn spectral_derivative(c: &[Complex64], grid: &crate::grid::Grid, axis: usize) -> Vec<Complex64> {
    c.iter().enumerate().map(|(i, z)| Complex64::new(-z.im, z.re) * grid.xi(i)[axis]).collect()
}

fn to_physical_scalar(grid: &crate::grid::Grid, c: &[Complex64]) -> Vec<f64> {
    let mut buf = c.to_vec();
    grid.fft(&mut buf, true);
    buf.into_iter().map(|z| z.re).collect()
}

fn finish(grid: &crate::grid::Grid, samples: Vec<Vec<f64>>) -> SpectralVectorField {
    let mut out = SpectralVectorField::from_physical(grid, &samples).expect("sizes match the grid");
    out.dealias();
    out.leray_project_in_place();
    out
}

/// `P (f . grad) g`, with `f` Leray-projected first and the two-thirds rule
/// applied to both inputs and to the product.
pub fn bilinear_b(f: &SpectralVectorField, g: &SpectralVectorField) -> Result<SpectralVectorField> {
    f.check_grid(g)?;
    let grid = f.grid().clone();
    let d = grid.d();
    let mut fp = f.leray_project();
    fp.dealias();
    let mut gd = g.clone();
    gd.dealias();
    let f_phys = fp.to_physical();
    let mut product = vec![vec![0.0; grid.len()]; d];
    for (i, out) in product.iter_mut().enumerate() {
        for (j, fj) in f_phys.iter().enumerate() {
            let dg = to_physical_scalar(&grid, &spectral_derivative(gd.comp(i), &grid, j));
            for ((o, a), b) in out.iter_mut().zip(fj).zip(&dg) {
                *o += a * b;
            }
        }
    }
    Ok(finish(&grid, product))
}

/// `P div(f (x) g)`, the divergence form of the same term (equal to
/// [`bilinear_b`] when `f` is divergence-free).
pub fn bilinear_b_divergence_form(f: &SpectralVectorField, g: &SpectralVectorField) -> Result<SpectralVectorField> {
    f.check_grid(g)?;
    let grid = f.grid().clone();
    let d = grid.d();
    let mut fp = f.leray_project();
    fp.dealias();
    let mut gd = g.clone();
    gd.dealias();
    let f_phys = fp.to_physical();
    let g_phys = gd.to_physical();
    let mut comps = vec![vec![Complex64::new(0.0, 0.0); grid.len()]; d];
    let scale = 1.0 / grid.len() as f64;
    for (i, out) in comps.iter_mut().enumerate() {
        for (j, fj) in f_phys.iter().enumerate() {
            let mut buf: Vec<Complex64> =
                fj.iter().zip(&g_phys[i]).map(|(a, b)| Complex64::new(a * b * scale, 0.0)).collect();
            grid.fft(&mut buf, false);
            for (k, (o, z)) in out.iter_mut().zip(&buf).enumerate() {
                *o += Complex64::new(-z.im, z.re) * grid.xi(k)[j];
            }
        }
    }
    let mut out = SpectralVectorField::from_components(&grid, comps)?;
    out.symmetrize();
    out.dealias();
    out.leray_project_in_place();
    Ok(out)
}

/// `<B(u, u), u>`, which vanishes for solenoidal dealiased `u`.
pub fn energy_flux(u: &SpectralVectorField) -> Result<f64> {
    let res = u.divergence_residual();
    if res > DIV_FREE_TOL {
        return Err(Error::NotDivergenceFree(res));
    }
    Ok(bilinear_b(u, u)?.inner(u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::test_fields::{random_div_free, random_field};
    use crate::grid::Grid;

    fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> [f64; 2]) -> SpectralVectorField {
        let mut samples = vec![vec![0.0; grid.len()]; 2];
        for i in 0..grid.len() {
            let x = grid.point(i);
            let v = f(x[0], x[1]);
            samples[0][i] = v[0];
            samples[1][i] = v[1];
        }
        SpectralVectorField::from_physical(grid, &samples).unwrap()
    }

    fn taylor_green(grid: &Grid) -> SpectralVectorField {
        from_fn(grid, |x, y| [x.sin() * y.cos(), -x.cos() * y.sin()])
    }

    #[test]
    fn constant_inputs_give_zero() {
        let g = Grid::new(2, 32, 1).unwrap();
        let u = random_div_free(&g, 1);
        let c = from_fn(&g, |_, _| [0.3, -1.2]);
        assert!(bilinear_b(&u, &c).unwrap().max_speed() < 1e-14);
        let b = bilinear_b(&c, &u).unwrap();
        // constant f is removed with the mean by the projection
        assert!(b.max_speed() < 1e-14);
    }

    #[test]
    fn taylor_green_self_interaction_is_a_gradient() {
        // (u . grad) u = (sin 2x, sin 2y) / 2 is a pure gradient, removed by P
        let g = Grid::new(2, 64, 1).unwrap();
        let u = taylor_green(&g);
        assert!(bilinear_b(&u, &u).unwrap().max_speed() <= 1e-12);
        // before projection, the advective product matches the hand expansion
        let phys = u.to_physical();
        let grad = |c: usize, axis: usize| to_physical_scalar(&g, &spectral_derivative(u.comp(c), &g, axis));
        for c in 0..2 {
            let (dx, dy) = (grad(c, 0), grad(c, 1));
            for i in 0..g.len() {
                let x = g.point(i);
                let adv = phys[0][i] * dx[i] + phys[1][i] * dy[i];
                let expected = 0.5 * (2.0 * x[c]).sin();
                assert!((adv - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn taylor_green_against_shear() {
        // B(TG, (sin y, 0)) = (-2/5 cos x sin 2y, 1/5 sin x cos 2y)
        let g = Grid::new(2, 64, 1).unwrap();
        let u = taylor_green(&g);
        let shear = from_fn(&g, |_, y| [y.sin(), 0.0]);
        let expected = from_fn(&g, |x, y| [-0.4 * x.cos() * (2.0 * y).sin(), 0.2 * x.sin() * (2.0 * y).cos()]);
        let b = bilinear_b(&u, &shear).unwrap();
        assert!(b.max_abs_diff(&expected) <= 1e-12);
        let b_div = bilinear_b_divergence_form(&u, &shear).unwrap();
        assert!(b_div.max_abs_diff(&expected) <= 1e-12);
    }

    #[test]
    fn band_limited_result_is_resolution_independent() {
        let coarse = Grid::new(2, 32, 1).unwrap();
        let fine = Grid::new(2, 64, 1).unwrap();
        let shear = |g: &Grid| from_fn(g, |x, y| [y.sin() + 0.3 * (2.0 * y).cos(), 0.5 * x.cos()]);
        let bc = bilinear_b(&taylor_green(&coarse), &shear(&coarse)).unwrap();
        let bf = bilinear_b(&taylor_green(&fine), &shear(&fine)).unwrap();
        for i in 0..coarse.len() {
            let j = fine.index_of(&coarse.lattice(i)[..2]);
            for c in 0..2 {
                assert!((bc.comp(c)[i] - bf.comp(c)[j]).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn skew_symmetry() {
        for (n, seeds) in [(64usize, 0..10u64), (128, 10..13)] {
            let g = Grid::new(2, n, 2).unwrap();
            for seed in seeds {
                let u = random_div_free(&g, seed);
                // the projection makes this hold for solenoidal v only
                let v = random_div_free(&g, seed + 100);
                let b = bilinear_b(&u, &v).unwrap();
                let scale = u.l2_sq().sqrt() * v.l2_sq() * v.hom_sobolev_sq(1.0).sqrt() / g.volume().sqrt();
                assert!(b.inner(&v).abs() <= 1e-11 * scale, "seed {seed}");
                let flux = energy_flux(&u).unwrap();
                let uscale = u.l2_sq() * u.hom_sobolev_sq(1.0).sqrt();
                assert!(flux.abs() <= 1e-11 * uscale);
            }
        }
    }

    #[test]
    fn output_is_solenoidal_and_mean_free() {
        let g = Grid::new(3, 16, 1).unwrap();
        let u = random_div_free(&g, 4);
        let v = random_field(&g, 5, true);
        let b = bilinear_b(&u, &v).unwrap();
        assert!(b.divergence_residual() <= 1e-12);
        assert_eq!(b.mean_magnitude(), 0.0);
        assert!(b.hermitian_defect() == 0.0);
    }

    #[test]
    fn bilinearity() {
        let g = Grid::new(2, 32, 1).unwrap();
        let (f1, f2, h) = (random_div_free(&g, 1), random_div_free(&g, 2), random_field(&g, 3, true));
        let combo = &(&f1 * 2.0) + &(&f2 * -0.7);
        let lhs = bilinear_b(&combo, &h).unwrap();
        let rhs = &(&bilinear_b(&f1, &h).unwrap() * 2.0) + &(&bilinear_b(&f2, &h).unwrap() * -0.7);
        assert!(lhs.max_abs_diff(&rhs) <= 1e-13 * lhs.max_speed().max(1.0));
    }

    #[test]
    fn flux_edge_cases() {
        let g = Grid::new(2, 32, 1).unwrap();
        assert_eq!(energy_flux(&SpectralVectorField::zeros(&g)).unwrap(), 0.0);
        let grad = from_fn(&g, |x, y| [x.cos() * y.cos(), -x.sin() * y.sin()]);
        assert!(matches!(energy_flux(&grad), Err(Error::NotDivergenceFree(_))));
        let other = SpectralVectorField::zeros(&Grid::new(2, 16, 1).unwrap());
        assert!(matches!(bilinear_b(&grad, &other), Err(Error::GridMismatch)));
    }
}
