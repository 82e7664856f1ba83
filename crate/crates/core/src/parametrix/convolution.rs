//! Space composition ∫ f(x,z) g(z,y) dz and space–time convolution
//! ∫₀ᵗ ∫ f(t-s,x,z) g(s,z,y) dz ds with singular endpoint quadrature.

use crate::error::ParametrixError;
use crate::frozen::SpatialGrid;
use crate::quadrature::power_weighted_rule;

use super::TimeLadder;

/// A kernel k(x, z) on the grid.
#[derive(Debug, Clone, PartialEq)]
pub enum SpaceKernel {
    /// k(x, z) = κ(x - z) with κ sampled on the grid nodes.
    Translation(Vec<f64>),
    /// Row-major matrix k(x_i, z_j).
    Dense(Vec<f64>),
}

impl SpaceKernel {
    pub fn zero(grid: &SpatialGrid) -> Self {
        SpaceKernel::Translation(vec![0.0; grid.len()])
    }

    /// Dense matrix form.
    pub fn to_dense(&self, grid: &SpatialGrid) -> Vec<f64> {
        match self {
            SpaceKernel::Dense(m) => m.clone(),
            SpaceKernel::Translation(k) => {
                let len = grid.len();
                let origin = grid.origin_index();
                let mut m = vec![0.0; len * len];
                for x in 0..len {
                    let xi = grid.unflatten(x);
                    for z in 0..len {
                        let zi = grid.unflatten(z);
                        let d = [xi[0] as i64 - zi[0] as i64, xi[1] as i64 - zi[1] as i64];
                        m[x * len + z] = k[grid.shifted(origin, d)];
                    }
                }
                m
            }
        }
    }

    /// k(x_i, z_j).
    pub fn value(&self, grid: &SpatialGrid, x: usize, z: usize) -> f64 {
        match self {
            SpaceKernel::Dense(m) => m[x * grid.len() + z],
            SpaceKernel::Translation(k) => {
                let xi = grid.unflatten(x);
                let zi = grid.unflatten(z);
                k[grid.shifted(grid.origin_index(), [xi[0] as i64 - zi[0] as i64, xi[1] as i64 - zi[1] as i64])]
            }
        }
    }

    /// Largest column mass sup_z ∫ |k(x, z)| dx.
    pub fn column_norm(&self, grid: &SpatialGrid) -> f64 {
        let vol = grid.cell_volume();
        match self {
            SpaceKernel::Translation(k) => vol * k.iter().map(|v| v.abs()).sum::<f64>(),
            SpaceKernel::Dense(m) => {
                let len = grid.len();
                (0..len)
                    .map(|z| vol * (0..len).map(|x| m[x * len + z].abs()).sum::<f64>())
                    .fold(0.0, f64::max)
            }
        }
    }

    /// a·self + b·other.
    pub fn axpby(&self, a: f64, other: &SpaceKernel, b: f64, grid: &SpatialGrid) -> SpaceKernel {
        match (self, other) {
            (SpaceKernel::Translation(u), SpaceKernel::Translation(v)) => {
                SpaceKernel::Translation(u.iter().zip(v).map(|(p, q)| a * p + b * q).collect())
            }
            _ => {
                let u = self.to_dense(grid);
                let v = other.to_dense(grid);
                SpaceKernel::Dense(u.iter().zip(&v).map(|(p, q)| a * p + b * q).collect())
            }
        }
    }

    /// sup |k|.
    pub fn sup_norm(&self) -> f64 {
        let v = match self {
            SpaceKernel::Translation(k) | SpaceKernel::Dense(k) => k,
        };
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// ∫ f(x, z) g(z, y) dz: FFT for two translation kernels, a matrix
/// product otherwise.
pub fn space_convolution(f: &SpaceKernel, g: &SpaceKernel, grid: &SpatialGrid) -> SpaceKernel {
    match (f, g) {
        (SpaceKernel::Translation(a), SpaceKernel::Translation(b)) => SpaceKernel::Translation(grid.convolve(a, b)),
        _ => {
            let a = f.to_dense(grid);
            let b = g.to_dense(grid);
            let len = grid.len();
            let vol = grid.cell_volume();
            let mut out = vec![0.0; len * len];
            for x in 0..len {
                let row = &mut out[x * len..(x + 1) * len];
                for z in 0..len {
                    let fx = a[x * len + z];
                    if fx == 0.0 {
                        continue;
                    }
                    let brow = &b[z * len..(z + 1) * len];
                    row.iter_mut().zip(brow).for_each(|(o, v)| *o += fx * v);
                }
                row.iter_mut().for_each(|v| *v *= vol);
            }
            SpaceKernel::Dense(out)
        }
    }
}

/// A time family s ↦ k(s, ·, ·) with declared small-time exponent e:
/// ‖k(s)‖ = O(s^e) as s → 0, e > -1.
pub struct TimeFamily<F: Fn(f64) -> SpaceKernel> {
    pub kernel: F,
    pub exponent: f64,
}

impl<F: Fn(f64) -> SpaceKernel> TimeFamily<F> {
    pub fn new(kernel: F, exponent: f64) -> Self {
        Self { kernel, exponent }
    }
}

/// Tolerance on the measured small-time log-slope below the declared exponent.
const SLOPE_TOL: f64 = 0.1;

/// Log-log slope of the column norm of `g` over [10⁻³ t, 10⁻² t].
fn small_time_slope<G: Fn(f64) -> SpaceKernel>(g: &TimeFamily<G>, t: f64, grid: &SpatialGrid) -> Option<f64> {
    let (s0, s1) = (1e-3 * t, 1e-2 * t);
    let n0 = (g.kernel)(s0).column_norm(grid);
    let n1 = (g.kernel)(s1).column_norm(grid);
    if n0 > 0.0 && n1 > 0.0 {
        Some((n1 / n0).ln() / (s1 / s0).ln())
    } else {
        None
    }
}

/// (f⋆g)(t) = ∫₀ᵗ f(t-s) ∘ g(s) ds, split at t/2 with power-weighted
/// Gauss rules honoring the declared exponents at each endpoint.
pub fn spacetime_convolution_at<F, G>(
    f: &TimeFamily<F>,
    g: &TimeFamily<G>,
    t: f64,
    grid: &SpatialGrid,
    nodes: usize,
) -> Result<SpaceKernel, ParametrixError>
where
    F: Fn(f64) -> SpaceKernel,
    G: Fn(f64) -> SpaceKernel,
{
    if !(t > 0.0) {
        return Err(ParametrixError::Ladder(format!("convolution time {t} must be positive")));
    }
    for e in [f.exponent, g.exponent] {
        if !(e > -1.0) {
            return Err(ParametrixError::Ladder(format!("exponent {e} is not integrable")));
        }
    }
    if let Some(measured) = small_time_slope(g, t, grid) {
        if measured < g.exponent - SLOPE_TOL {
            return Err(ParametrixError::SingularityMismatch { measured, declared: g.exponent });
        }
    }
    let half = 0.5 * t;
    let mut acc = SpaceKernel::zero(grid);
    // s ∈ [0, t/2]: singular in g
    for (s, w) in power_weighted_rule(half, g.exponent, nodes) {
        let term = space_convolution(&(f.kernel)(t - s), &(g.kernel)(s), grid);
        acc = acc.axpby(1.0, &term, w * s.powf(-g.exponent), grid);
    }
    // s = t - r, r ∈ [0, t/2]: singular in f
    for (r, w) in power_weighted_rule(half, f.exponent, nodes) {
        let term = space_convolution(&(f.kernel)(r), &(g.kernel)(t - r), grid);
        acc = acc.axpby(1.0, &term, w * r.powf(-f.exponent), grid);
    }
    Ok(acc)
}

/// f⋆g at every ladder time.
pub fn spacetime_convolution<F, G>(
    f: &TimeFamily<F>,
    g: &TimeFamily<G>,
    ladder: &TimeLadder,
    grid: &SpatialGrid,
) -> Result<Vec<SpaceKernel>, ParametrixError>
where
    F: Fn(f64) -> SpaceKernel,
    G: Fn(f64) -> SpaceKernel,
{
    ladder.times().iter().map(|&t| spacetime_convolution_at(f, g, t, grid, 12)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gaussian(grid: &SpatialGrid, var: f64) -> Vec<f64> {
        (0..grid.len())
            .map(|i| {
                let x = grid.point(i)[0];
                (-x * x / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
            })
            .collect()
    }

    fn delta(grid: &SpatialGrid) -> Vec<f64> {
        let mut d = vec![0.0; grid.len()];
        d[grid.origin_index()] = 1.0 / grid.cell_volume();
        d
    }

    #[test]
    fn delta_is_identity_and_gaussians_add_variances() {
        let grid = SpatialGrid::new(1, 16.0, 512).unwrap();
        let g = SpaceKernel::Translation(gaussian(&grid, 0.7));
        let d = SpaceKernel::Translation(delta(&grid));
        let out = space_convolution(&d, &g, &grid);
        assert!(out.axpby(1.0, &g, -1.0, &grid).sup_norm() < 1e-13);
        let sum = space_convolution(&SpaceKernel::Translation(gaussian(&grid, 0.5)), &g, &grid);
        let exact = SpaceKernel::Translation(gaussian(&grid, 1.2));
        assert!(sum.axpby(1.0, &exact, -1.0, &grid).sup_norm() < 1e-6);
    }

    #[test]
    fn dense_products_multiply_mass() {
        let grid = SpatialGrid::new(1, 4.0, 32).unwrap();
        let len = grid.len();
        let f: Vec<f64> = (0..len * len).map(|i| ((i * 37 % 11) as f64) / 11.0).collect();
        let g: Vec<f64> = (0..len * len).map(|i| ((i * 13 % 7) as f64) / 7.0).collect();
        let fg = space_convolution(&SpaceKernel::Dense(f.clone()), &SpaceKernel::Dense(g.clone()), &grid);
        let h = grid.spacing();
        let total = |m: &[f64]| h * h * m.iter().sum::<f64>();
        // ∫∫ (f∘g)(x,y) dx dy = Σ_z (∫ f(x,z) dx)(∫ g(z,y) dy) h
        let fz: Vec<f64> = (0..len).map(|z| h * (0..len).map(|x| f[x * len + z]).sum::<f64>()).collect();
        let gz: Vec<f64> = (0..len).map(|z| h * g[z * len..(z + 1) * len].iter().sum::<f64>()).collect();
        let expect: f64 = h * fz.iter().zip(&gz).map(|(a, b)| a * b).sum::<f64>();
        let SpaceKernel::Dense(m) = fg else { panic!("dense expected") };
        assert!((total(&m) - expect).abs() < 1e-8 * expect.abs());
        // translation kernels: ∫(f*g) = ∫f ∫g
        let a = gaussian(&grid, 0.3);
        let b: Vec<f64> = gaussian(&grid, 0.2).iter().map(|v| 2.0 * v).collect();
        let c = grid.convolve(&a, &b);
        assert!((grid.integrate(&c) - grid.integrate(&a) * grid.integrate(&b)).abs() < 1e-8);
    }

    #[test]
    fn singular_time_integral_of_delta_column() {
        let grid = SpatialGrid::new(1, 4.0, 32).unwrap();
        let delta_exp = 0.5;
        let ones = TimeFamily::new(|_s| SpaceKernel::Translation(vec![1.0; grid.len()]), 0.0);
        let g = TimeFamily::new(
            |s: f64| SpaceKernel::Translation(delta(&grid).iter().map(|v| v * s.powf(-delta_exp)).collect()),
            -delta_exp,
        );
        let ladder = TimeLadder::new(vec![0.1, 0.5, 1.0], delta_exp).unwrap();
        let out = spacetime_convolution(&ones, &g, &ladder, &grid).unwrap();
        for (k, &t) in out.iter().zip(ladder.times()) {
            let exact = t.powf(1.0 - delta_exp) / (1.0 - delta_exp);
            let SpaceKernel::Translation(v) = k else { panic!() };
            assert!(v.iter().all(|x| (x - exact).abs() < 1e-6 * exact));
        }
        let zero = TimeFamily::new(|_s| SpaceKernel::zero(&grid), 0.0);
        let z = spacetime_convolution_at(&ones, &zero, 0.5, &grid, 8).unwrap();
        assert_eq!(z.sup_norm(), 0.0);
    }

    #[test]
    fn detects_singularity_mismatch() {
        let grid = SpatialGrid::new(1, 4.0, 32).unwrap();
        let ones = TimeFamily::new(|_s| SpaceKernel::Translation(vec![1.0; grid.len()]), 0.0);
        let g = TimeFamily::new(|s: f64| SpaceKernel::Translation(delta(&grid).iter().map(|v| v / s.powf(0.8)).collect()), -0.3);
        let err = spacetime_convolution_at(&ones, &g, 1.0, &grid, 8).unwrap_err();
        assert_eq!(err.code(), "SINGULARITY_MISMATCH");
    }

    #[test]
    fn spacetime_convolution_is_associative() {
        let grid = SpatialGrid::new(1, 12.0, 128).unwrap();
        let heat = |s: f64| SpaceKernel::Translation(gaussian(&grid, 0.2 + s));
        let f = TimeFamily::new(heat, 0.0);
        let g = TimeFamily::new(|s: f64| SpaceKernel::Translation(gaussian(&grid, 0.1 + 2.0 * s)), 0.0);
        let h = TimeFamily::new(|s: f64| SpaceKernel::Translation(gaussian(&grid, 0.3 + s * s)), 0.0);
        let n = 10;
        let fg = TimeFamily::new(|t: f64| spacetime_convolution_at(&f, &g, t, &grid, n).unwrap(), 1.0);
        let gh = TimeFamily::new(|t: f64| spacetime_convolution_at(&g, &h, t, &grid, n).unwrap(), 1.0);
        let left = spacetime_convolution_at(&fg, &h, 0.8, &grid, n).unwrap();
        let right = spacetime_convolution_at(&f, &gh, 0.8, &grid, n).unwrap();
        let scale = left.sup_norm();
        assert!(left.axpby(1.0, &right, -1.0, &grid).sup_norm() < 1e-5 * scale);
    }
}
