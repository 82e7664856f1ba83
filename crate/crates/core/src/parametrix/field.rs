//! Kernel values K(t, x, y) on a time ladder, the full x-grid and a strided
//! set of y-columns.

use serde::{Deserialize, Serialize};

use crate::error::GridError;
use crate::frozen::SpatialGrid;

/// What a kernel field represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "order", rename_all = "snake_case")]
pub enum FieldRole {
    /// Frozen kernel Z.
    Z,
    /// Series term (LZ)_m.
    Lz(usize),
    /// Series sum Φ.
    Phi,
    /// Correction Z⋆Φ.
    Correction,
    /// Fundamental solution p.
    P,
}

impl FieldRole {
    pub fn label(self) -> String {
        match self {
            FieldRole::Z => "Z".into(),
            FieldRole::Lz(m) => format!("LZ{m}"),
            FieldRole::Phi => "Phi".into(),
            FieldRole::Correction => "ZPhi".into(),
            FieldRole::P => "p".into(),
        }
    }
}

/// Values on times × y-columns × x-grid, stored `[time][column][x]`.
///
/// Columns sit at every `stride`-th node per axis. Values between columns
/// are interpolated at fixed displacement x - y.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelField {
    role: FieldRole,
    grid: SpatialGrid,
    times: Vec<f64>,
    stride: usize,
    columns: Vec<usize>,
    data: Vec<f64>,
}

impl KernelField {
    pub fn zeros(role: FieldRole, grid: &SpatialGrid, times: &[f64], stride: usize) -> Result<Self, GridError> {
        let n = grid.nodes();
        if stride == 0 || n % stride != 0 {
            return Err(GridError::Invalid(format!("y-stride {stride} must divide {n}")));
        }
        let per_axis = n / stride;
        let columns: Vec<usize> = if grid.dim() == 1 {
            (0..per_axis).map(|i| i * stride).collect()
        } else {
            (0..per_axis * per_axis)
                .map(|c| grid.flatten([(c % per_axis) * stride, (c / per_axis) * stride]))
                .collect()
        };
        let len = times.len() * columns.len() * grid.len();
        Ok(Self { role, grid: grid.clone(), times: times.to_vec(), stride, columns, data: vec![0.0; len] })
    }

    /// Assemble from raw `[time][column][x]` data.
    pub fn from_data(
        role: FieldRole,
        grid: &SpatialGrid,
        times: &[f64],
        stride: usize,
        data: Vec<f64>,
    ) -> Result<Self, GridError> {
        let mut field = Self::zeros(role, grid, times, stride)?;
        if data.len() != field.data.len() {
            return Err(GridError::Mismatch(format!("{} values for a field of {}", data.len(), field.data.len())));
        }
        field.data = data;
        Ok(field)
    }

    pub fn role(&self) -> FieldRole {
        self.role
    }

    pub fn with_role(mut self, role: FieldRole) -> Self {
        self.role = role;
        self
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Grid indices of the y-columns.
    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(s.abs()))
    }

    fn offset(&self, ti: usize, ci: usize) -> usize {
        (ti * self.columns.len() + ci) * self.grid.len()
    }

    /// x ↦ K(t_i, x, y_c).
    pub fn column(&self, ti: usize, ci: usize) -> &[f64] {
        let o = self.offset(ti, ci);
        &self.data[o..o + self.grid.len()]
    }

    pub fn column_mut(&mut self, ti: usize, ci: usize) -> &mut [f64] {
        let o = self.offset(ti, ci);
        let len = self.grid.len();
        &mut self.data[o..o + len]
    }

    /// All columns at one time, concatenated.
    pub fn slice(&self, ti: usize) -> &[f64] {
        let len = self.columns.len() * self.grid.len();
        &self.data[ti * len..(ti + 1) * len]
    }

    /// Column index of a grid node, if it is a column.
    pub fn column_of(&self, node: usize) -> Option<usize> {
        self.columns.binary_search(&node).ok()
    }

    /// Bracketing columns of node `z` with interpolation weights and the
    /// per-axis offsets y_c - z.
    fn stencil(&self, z: usize) -> Vec<(usize, f64, [i64; 2])> {
        let n = self.grid.nodes();
        let per_axis = n / self.stride;
        let idx = self.grid.unflatten(z);
        let mut axes = [[(0usize, 1.0f64, 0i64); 2]; 2];
        for d in 0..self.grid.dim() {
            let lo = idx[d] / self.stride;
            let frac = (idx[d] % self.stride) as f64 / self.stride as f64;
            let hi = (lo + 1) % per_axis;
            let lo_off = -((idx[d] % self.stride) as i64);
            axes[d] = [(lo, 1.0 - frac, lo_off), (hi, frac, lo_off + self.stride as i64)];
        }
        let mut out = Vec::with_capacity(4);
        if self.grid.dim() == 1 {
            for &(c, w, off) in &axes[0] {
                if w > 0.0 {
                    out.push((c, w, [off, 0]));
                }
            }
        } else {
            for &(c0, w0, o0) in &axes[0] {
                for &(c1, w1, o1) in &axes[1] {
                    let w = w0 * w1;
                    if w > 0.0 {
                        out.push((c0 + per_axis * c1, w, [o0, o1]));
                    }
                }
            }
        }
        out
    }

    /// K(t_i, x, z) at grid nodes: exact on columns, otherwise
    /// Σ_c φ_c(z) K(t_i, x + y_c - z, y_c).
    pub fn value(&self, ti: usize, x: usize, z: usize) -> f64 {
        self.stencil(z)
            .into_iter()
            .map(|(c, w, off)| w * self.column(ti, c)[self.grid.shifted(x, off)])
            .sum()
    }

    /// z ↦ K(t_i, x, z) on the whole grid.
    pub fn row(&self, ti: usize, x: usize) -> Vec<f64> {
        (0..self.grid.len()).map(|z| self.value(ti, x, z)).collect()
    }

    /// ∫ K(t_i, x, y) dy by the trapezoid rule on the y-columns.
    pub fn row_mass(&self, ti: usize, x: usize) -> f64 {
        let cell = (self.stride as f64 * self.grid.spacing()).powi(self.grid.dim() as i32);
        cell * (0..self.columns.len()).map(|ci| self.column(ti, ci)[x]).sum::<f64>()
    }

    /// K(t_i, x, y) at off-grid points by linear interpolation on the
    /// node values of the displacement-aligned stencil.
    pub fn value_at_point(&self, ti: usize, x: &[f64], y: &[f64]) -> f64 {
        let h = self.grid.spacing();
        let r = self.grid.half_width();
        let dim = self.grid.dim();
        let mut base = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for d in 0..dim {
            let s = (y[d] + r) / h;
            let fl = s.floor();
            base[d] = (fl as i64).rem_euclid(self.grid.nodes() as i64) as usize;
            frac[d] = s - fl;
        }
        let mut total = 0.0;
        let corners: &[[usize; 2]] = if dim == 1 { &[[0, 0], [1, 0]] } else { &[[0, 0], [1, 0], [0, 1], [1, 1]] };
        for corner in corners {
            let mut w = 1.0;
            let mut off = [0i64; 2];
            for d in 0..dim {
                w *= if corner[d] == 1 { frac[d] } else { 1.0 - frac[d] };
                off[d] = corner[d] as i64;
            }
            if w == 0.0 {
                continue;
            }
            let z = self.grid.shifted(self.grid.flatten(base), off);
            // shift x with y so the displacement is preserved
            let mut xs = [0.0f64; 2];
            for d in 0..dim {
                xs[d] = x[d] + (self.grid.axis_coordinate(self.grid.unflatten(z)[d]) - y[d]);
            }
            total += w * self.value_at_x(ti, &xs[..dim], z);
        }
        total
    }

    /// K(t_i, x, z) for off-grid x by linear interpolation along x.
    fn value_at_x(&self, ti: usize, x: &[f64], z: usize) -> f64 {
        let h = self.grid.spacing();
        let r = self.grid.half_width();
        let dim = self.grid.dim();
        let mut base = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for d in 0..dim {
            let s = (x[d] + r) / h;
            let fl = s.floor();
            base[d] = (fl as i64).rem_euclid(self.grid.nodes() as i64) as usize;
            frac[d] = s - fl;
        }
        let corners: &[[usize; 2]] = if dim == 1 { &[[0, 0], [1, 0]] } else { &[[0, 0], [1, 0], [0, 1], [1, 1]] };
        let mut total = 0.0;
        for corner in corners {
            let mut w = 1.0;
            for d in 0..dim {
                w *= if corner[d] == 1 { frac[d] } else { 1.0 - frac[d] };
            }
            if w == 0.0 {
                continue;
            }
            let xi = self.grid.shifted(self.grid.flatten(base), [corner[0] as i64, corner[1] as i64]);
            total += w * self.value(ti, xi, z);
        }
        total
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// sup_{x,y} |K(t_i, x, y)|.
    pub fn sup_norm_at(&self, ti: usize) -> f64 {
        self.slice(ti).iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Pointwise a·self + b·other on matching layouts.
    pub fn combine(&self, a: f64, other: &KernelField, b: f64, role: FieldRole) -> Result<KernelField, GridError> {
        self.check_layout(other)?;
        let data = self.data.iter().zip(&other.data).map(|(u, v)| a * u + b * v).collect();
        Ok(KernelField { data, role, ..self.clone() })
    }

    pub fn check_layout(&self, other: &KernelField) -> Result<(), GridError> {
        if self.grid != other.grid || self.stride != other.stride || self.times.len() != other.times.len() {
            return Err(GridError::Mismatch("kernel fields differ in grid, stride or times".into()));
        }
        if self.times.iter().zip(&other.times).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0)) {
            return Err(GridError::Mismatch("kernel fields differ in times".into()));
        }
        Ok(())
    }

    /// Restrict to a subset of times (by index).
    pub fn select_times(&self, indices: &[usize]) -> KernelField {
        let block = self.columns.len() * self.grid.len();
        let mut data = Vec::with_capacity(indices.len() * block);
        for &ti in indices {
            data.extend_from_slice(self.slice(ti));
        }
        KernelField {
            role: self.role,
            grid: self.grid.clone(),
            times: indices.iter().map(|&i| self.times[i]).collect(),
            stride: self.stride,
            columns: self.columns.clone(),
            data,
        }
    }
}
