//! Periodic spatial grid on the torus [-R, R)ⁿ and its FFT plumbing.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::GridError;

/// Serializable grid description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dimension: usize,
    pub half_width: f64,
    pub nodes: usize,
}

/// Uniform periodic grid with nodes x_i = -R + i h, h = 2R/N per axis.
///
/// Two-dimensional data is stored with the first axis fastest:
/// flat index = i₀ + N i₁.
#[derive(Clone)]
pub struct SpatialGrid {
    spec: GridSpec,
    h: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SpatialGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpatialGrid").field("spec", &self.spec).field("h", &self.h).finish()
    }
}

impl PartialEq for SpatialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

impl SpatialGrid {
    pub fn new(dimension: usize, half_width: f64, nodes: usize) -> Result<Self, GridError> {
        if !(1..=2).contains(&dimension) {
            return Err(GridError::Invalid(format!("dimension {dimension} not in {{1, 2}}")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(GridError::Invalid(format!("half-width {half_width} must be positive")));
        }
        if nodes < 8 || !nodes.is_power_of_two() {
            return Err(GridError::Invalid(format!("node count {nodes} must be a power of two >= 8")));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(nodes);
        let inverse = planner.plan_fft_inverse(nodes);
        Ok(Self { spec: GridSpec { dimension, half_width, nodes }, h: 2.0 * half_width / nodes as f64, forward, inverse })
    }

    pub fn from_spec(spec: GridSpec) -> Result<Self, GridError> {
        Self::new(spec.dimension, spec.half_width, spec.nodes)
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dimension
    }

    pub fn half_width(&self) -> f64 {
        self.spec.half_width
    }

    /// Nodes per axis.
    pub fn nodes(&self) -> usize {
        self.spec.nodes
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.spec.nodes.pow(self.spec.dimension as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Volume element hⁿ.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.spec.dimension as i32)
    }

    /// Dual grid spacing π/R.
    pub fn dual_spacing(&self) -> f64 {
        PI / self.spec.half_width
    }

    /// Largest dual frequency π/h.
    pub fn nyquist(&self) -> f64 {
        PI / self.h
    }

    pub fn axis_coordinate(&self, i: usize) -> f64 {
        -self.spec.half_width + i as f64 * self.h
    }

    /// Per-axis indices of a flat index.
    pub fn unflatten(&self, index: usize) -> [usize; 2] {
        let n = self.spec.nodes;
        if self.spec.dimension == 1 {
            [index, 0]
        } else {
            [index % n, index / n]
        }
    }

    pub fn flatten(&self, idx: [usize; 2]) -> usize {
        if self.spec.dimension == 1 {
            idx[0]
        } else {
            idx[0] + self.spec.nodes * idx[1]
        }
    }

    /// Coordinates of a flat index.
    pub fn point(&self, index: usize) -> Vec<f64> {
        let idx = self.unflatten(index);
        (0..self.spec.dimension).map(|d| self.axis_coordinate(idx[d])).collect()
    }

    /// All node coordinates, flat with `dim` entries per node.
    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).flat_map(|i| self.point(i)).collect()
    }

    /// Flat index of the node at the origin.
    pub fn origin_index(&self) -> usize {
        let c = self.spec.nodes / 2;
        self.flatten([c, c])
    }

    /// Nearest node to a point (wrapped onto the torus).
    pub fn nearest_index(&self, x: &[f64]) -> usize {
        let n = self.spec.nodes as i64;
        let mut idx = [0usize; 2];
        for d in 0..self.spec.dimension {
            let k = ((x[d] + self.spec.half_width) / self.h).round() as i64;
            idx[d] = k.rem_euclid(n) as usize;
        }
        self.flatten(idx)
    }

    /// Signed integer frequency k̃ of FFT bin k.
    pub fn signed_bin(&self, k: usize) -> i64 {
        let n = self.spec.nodes as i64;
        let k = k as i64;
        if k < n / 2 {
            k
        } else {
            k - n
        }
    }

    /// Signed offset of axis index i relative to 0 on the torus, in [-N/2, N/2).
    pub fn signed_offset(&self, i: i64) -> i64 {
        let n = self.spec.nodes as i64;
        let r = i.rem_euclid(n);
        if r < n / 2 {
            r
        } else {
            r - n
        }
    }

    /// Dual frequencies in FFT order, flat with `dim` entries per bin.
    pub fn frequencies(&self) -> Vec<f64> {
        let dx = self.dual_spacing();
        (0..self.len())
            .flat_map(|i| {
                let idx = self.unflatten(i);
                (0..self.spec.dimension).map(move |d| idx[d]).collect::<Vec<_>>()
            })
            .map(|k| self.signed_bin(k) as f64 * dx)
            .collect()
    }

    /// Torus displacement x - y with components wrapped into [-R, R).
    pub fn wrap(&self, v: f64) -> f64 {
        let l = 2.0 * self.spec.half_width;
        v - l * ((v + self.spec.half_width) / l).floor()
    }

    /// Euclidean torus distance between two points.
    pub fn torus_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(y).map(|(a, b)| self.wrap(a - b).powi(2)).sum::<f64>().sqrt()
    }

    /// Trapezoid integral hⁿ Σ f.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.cell_volume() * f.iter().sum::<f64>()
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.spec.nodes;
        assert_eq!(data.len(), self.len(), "grid function length mismatch");
        if self.spec.dimension == 1 {
            plan.process(data);
            return;
        }
        plan.process(data);
        let mut column = vec![Complex64::new(0.0, 0.0); n];
        for c in 0..n {
            for r in 0..n {
                column[r] = data[c + n * r];
            }
            plan.process(&mut column);
            for r in 0..n {
                data[c + n * r] = column[r];
            }
        }
    }

    /// Unnormalized forward DFT Σ f_i e^{-2πi k·i/N}.
    pub fn fft(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    /// Normalized inverse DFT (1/Nⁿ) Σ F_k e^{2πi k·i/N}.
    pub fn ifft(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
        let s = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }

    /// Forward transform of a real grid function.
    pub fn fft_real(&self, f: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft(&mut data);
        data
    }

    /// Real part of the inverse transform.
    pub fn ifft_real(&self, mut data: Vec<Complex64>) -> Vec<f64> {
        self.ifft(&mut data);
        data.into_iter().map(|v| v.re).collect()
    }

    /// Apply a Fourier multiplier: IFFT(M · FFT(f)).
    pub fn apply_multiplier(&self, f: &[f64], multiplier: &[Complex64]) -> Vec<f64> {
        let mut data = self.fft_real(f);
        data.iter_mut().zip(multiplier).for_each(|(v, m)| *v *= m);
        self.ifft_real(data)
    }

    /// Periodic convolution (f * g)(x) = ∫ f(x - z) g(z) dz on the torus.
    pub fn convolve(&self, f: &[f64], g: &[f64]) -> Vec<f64> {
        let mut a = self.fft_real(f);
        let b = self.fft_real(g);
        let vol = self.cell_volume();
        a.iter_mut().zip(&b).for_each(|(x, y)| *x *= y * vol);
        // node 0 sits at -R, so a product of two node-indexed arrays is
        // shifted by the origin index
        let shifted = self.ifft_real(a);
        let origin = self.unflatten(self.origin_index());
        let n = self.spec.nodes;
        (0..self.len())
            .map(|i| {
                let idx = self.unflatten(i);
                let src = [(idx[0] + origin[0]) % n, (idx[1] + origin[1]) % n];
                shifted[self.flatten(src)]
            })
            .collect()
    }

    /// Index of node i shifted by a per-axis offset on the torus.
    #[inline]
    pub fn shifted(&self, index: usize, offset: [i64; 2]) -> usize {
        let n = self.spec.nodes as i64;
        let idx = self.unflatten(index);
        let a = (idx[0] as i64 + offset[0]).rem_euclid(n) as usize;
        if self.spec.dimension == 1 {
            a
        } else {
            let b = (idx[1] as i64 + offset[1]).rem_euclid(n) as usize;
            a + self.spec.nodes * b
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sizes() {
        assert!(SpatialGrid::new(1, 1.0, 100).is_err());
        assert!(SpatialGrid::new(3, 1.0, 64).is_err());
        assert!(SpatialGrid::new(1, -1.0, 64).is_err());
    }

    #[test]
    fn coordinates_and_frequencies() {
        let g = SpatialGrid::new(1, 4.0, 16).unwrap();
        assert_eq!(g.spacing(), 0.5);
        assert_eq!(g.point(g.origin_index()), vec![0.0]);
        let f = g.frequencies();
        assert_eq!(f[1], PI / 4.0);
        assert_eq!(f[15], -PI / 4.0);
        assert_eq!(g.nearest_index(&[4.1]), 0);
        assert!((g.wrap(5.0) + 3.0).abs() < 1e-15);
    }

    #[test]
    fn fft_roundtrip_2d() {
        let g = SpatialGrid::new(2, 1.0, 8).unwrap();
        let f: Vec<f64> = (0..64).map(|i| ((i * 7) % 13) as f64 - 3.0).collect();
        let back = g.ifft_real(g.fft_real(&f));
        for (a, b) in f.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn convolution_with_delta_is_identity() {
        for dim in [1, 2] {
            let g = SpatialGrid::new(dim, 2.0, 16).unwrap();
            let mut delta = vec![0.0; g.len()];
            delta[g.origin_index()] = 1.0 / g.cell_volume();
            let f: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.37).sin()).collect();
            let c = g.convolve(&delta, &f);
            for (a, b) in c.iter().zip(&f) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
