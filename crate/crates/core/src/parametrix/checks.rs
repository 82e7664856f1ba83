//! Consistency checks of a computed kernel: the backward equation
//! ∂_t p = L_x p and the Chapman–Kolmogorov identity.

use serde::{Deserialize, Serialize};

use crate::error::ParametrixError;
use crate::frozen::{Generator, SpatialGrid};
use crate::model::LevyTypeModel;

use super::KernelField;

/// Relative residual of ∂_t p - L_x p over the bulk ‖x - y‖ ≤ R/2 at
/// every ladder time with neighbors on both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    /// (t, sup |∂_t p - L_x p| / sup |∂_t p|) per interior ladder time.
    pub residuals: Vec<(f64, f64)>,
}

impl ResidualReport {
    /// Residual at the interior time closest to `t`.
    pub fn at(&self, t: f64) -> Option<f64> {
        self.residuals
            .iter()
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
            .map(|r| r.1)
    }

    pub fn worst(&self) -> f64 {
        self.residuals.iter().map(|r| r.1).fold(0.0, f64::max)
    }
}

/// Central finite difference in t of p against L_x p.
pub fn residual_check(
    p: &KernelField,
    model: &LevyTypeModel,
    grid: &SpatialGrid,
) -> Result<ResidualReport, ParametrixError> {
    if p.grid() != grid {
        return Err(crate::error::GridError::Mismatch("field and grid differ".into()).into());
    }
    let times = p.times();
    if times.len() < 3 {
        return Err(ParametrixError::Ladder("residual check needs at least 3 ladder times".into()));
    }
    let generator = Generator::new(model, grid)?;
    let bulk = 0.5 * grid.half_width();
    let mut residuals = Vec::new();
    for i in 1..times.len() - 1 {
        let (t0, t1, t2) = (times[i - 1], times[i], times[i + 1]);
        let (a, b) = (t1 - t0, t2 - t1);
        // three-point derivative on a non-uniform stencil
        let c0 = -b / (a * (a + b));
        let c1 = (b - a) / (a * b);
        let c2 = a / (b * (a + b));
        let (mut worst, mut scale) = (0.0f64, 0.0f64);
        for (ci, &y) in p.columns().iter().enumerate() {
            let lp = generator.apply(p.column(i, ci));
            let yp = grid.point(y);
            for x in 0..grid.len() {
                if grid.torus_distance(&grid.point(x), &yp) > bulk {
                    continue;
                }
                let dt = c0 * p.column(i - 1, ci)[x] + c1 * p.column(i, ci)[x] + c2 * p.column(i + 1, ci)[x];
                worst = worst.max((dt - lp[x]).abs());
                scale = scale.max(dt.abs());
            }
        }
        residuals.push((t1, if scale > 0.0 { worst / scale } else { worst }));
    }
    Ok(ResidualReport { residuals })
}

/// sup_{x,y} |p(t+s,x,y) - ∫ p(t,x,z) p(s,z,y) dz| over the y-columns.
pub fn chapman_kolmogorov_defect(p: &KernelField, t: f64, s: f64, grid: &SpatialGrid) -> Result<f64, ParametrixError> {
    let find = |u: f64| {
        p.time_index(u).ok_or_else(|| ParametrixError::Ladder(format!("time {u} is not on the ladder")))
    };
    let (it, is, ius) = (find(t)?, find(s)?, find(t + s)?);
    if p.grid() != grid {
        return Err(crate::error::GridError::Mismatch("field and grid differ".into()).into());
    }
    let len = grid.len();
    // every column z ↦ p(t, ·, z), stored [z][x]
    let mut full = vec![0.0; len * len];
    for z in 0..len {
        for x in 0..len {
            full[z * len + x] = p.value(it, x, z);
        }
    }
    let vol = grid.cell_volume();
    let mut worst = 0.0f64;
    let mut composed = vec![0.0; len];
    for ci in 0..p.columns().len() {
        let inner = p.column(is, ci);
        composed.iter_mut().for_each(|v| *v = 0.0);
        for (z, &w) in inner.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let col = &full[z * len..(z + 1) * len];
            composed.iter_mut().zip(col).for_each(|(c, v)| *c += w * vol * v);
        }
        let target = p.column(ius, ci);
        for (a, b) in composed.iter().zip(target) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parametrix::{ParametrixSolver, SolverConfig};

    #[test]
    fn cauchy_kernel_satisfies_both_identities() {
        let model = LevyTypeModel::stable(1, 1.0, 1.0).unwrap();
        let grid = SpatialGrid::new(1, 32.0, 1024).unwrap();
        let solver = ParametrixSolver::new(&model, &grid, SolverConfig { y_stride: 64, ..Default::default() }).unwrap();
        let ladder = solver.ladder(vec![0.25, 0.49, 0.5, 0.51]).unwrap();
        let sol = solver.solve(&ladder).unwrap();
        let defect = chapman_kolmogorov_defect(&sol.p, 0.25, 0.25, &grid).unwrap();
        assert!(defect < 1e-5 * sol.p.sup_norm(), "defect {defect}");
        let report = residual_check(&sol.p, &model, &grid).unwrap();
        let r = report.at(0.5).unwrap();
        assert!(r < 1e-3, "residual {r}");
    }

    #[test]
    fn frozen_kernel_alone_is_not_a_solution() {
        let model = crate::parametrix::lz::tests::modulated_cauchy(0.4, crate::model::DriftField::Zero);
        let grid = SpatialGrid::new(1, 16.0, 512).unwrap();
        let solver = ParametrixSolver::new(&model, &grid, SolverConfig { y_stride: 32, ..Default::default() }).unwrap();
        let ladder = solver.ladder(vec![0.49, 0.5, 0.51]).unwrap();
        let z = solver.frozen_field(&ladder).unwrap();
        let report = residual_check(&z, &model, &grid).unwrap();
        assert!(report.at(0.5).unwrap() > 1e-2);
    }
}
