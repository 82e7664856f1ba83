//! First series term (LZ)₁(t,x,y) = (L_x - L_y) Z(t,x,y) in real space.

use crate::error::ParametrixError;
use crate::frozen::{derivative, FrozenKernel, JumpStencil, RadialBand, SpatialGrid};
use crate::model::{LevyTypeModel, ProfileConfig, ScaleProfile, SymbolTerm};

use super::{FieldRole, KernelField};

/// (LZ)₁ split into the drift difference J₁, jumps with ρ_t‖u‖ < 1 (J₂)
/// and jumps with ρ_t‖u‖ ≥ 1 (J₃).
#[derive(Debug, Clone)]
pub struct Lz1Parts {
    pub drift: KernelField,
    pub small_jumps: KernelField,
    pub large_jumps: KernelField,
}

impl Lz1Parts {
    pub fn total(&self) -> KernelField {
        let mut out = self.drift.clone().with_role(FieldRole::Lz(1));
        for part in [&self.small_jumps, &self.large_jumps] {
            out.data_mut().iter_mut().zip(part.data()).for_each(|(a, b)| *a += b);
        }
        out
    }
}

/// J₁, J₂, J₃ on the ladder times and y-columns every `stride` nodes.
pub fn lz1_parts(
    model: &LevyTypeModel,
    times: &[f64],
    grid: &SpatialGrid,
    stride: usize,
) -> Result<Lz1Parts, ParametrixError> {
    let kernel = FrozenKernel::new(model, grid)?;
    let mut drift = KernelField::zeros(FieldRole::Lz(1), grid, times, stride)?;
    let mut small = drift.clone();
    let mut large = drift.clone();
    if model.has_constant_coefficients() {
        return Ok(Lz1Parts { drift, small_jumps: small, large_jumps: large });
    }
    let terms = kernel.table().terms().to_vec();
    let coeff_at: Vec<Vec<f64>> = terms
        .iter()
        .map(|term| (0..grid.len()).map(|i| term.coefficient(&grid.point(i))).collect())
        .collect();
    let profile = ScaleProfile::build(model, ProfileConfig::default())?;
    let columns = drift.columns().to_vec();
    for (ti, &t) in times.iter().enumerate() {
        let cutoff = 1.0 / profile.rho(t)?;
        let bands = [RadialBand { inner: 0.0, outer: cutoff }, RadialBand { inner: cutoff, outer: f64::INFINITY }];
        // (term index, [inner stencil, outer stencil]) for varying jump terms
        let mut stencils = Vec::new();
        for (j, term) in terms.iter().enumerate() {
            if let SymbolTerm::Jump { weight, .. } = term {
                if !term.is_constant() {
                    let pair = [
                        JumpStencil::build(model.base(), *weight, grid, bands[0])?,
                        JumpStencil::build(model.base(), *weight, grid, bands[1])?,
                    ];
                    stencils.push((j, pair));
                }
            }
        }
        for (ci, &y) in columns.iter().enumerate() {
            let f = kernel.column(t, y)?;
            let transformed = grid.fft_real(&f);
            for (j, pair) in &stencils {
                let gy = coeff_at[*j][y];
                for (band, stencil) in pair.iter().enumerate() {
                    let lf = stencil.apply_transformed(grid, &f, &transformed);
                    let target = if band == 0 { small.column_mut(ti, ci) } else { large.column_mut(ti, ci) };
                    for (x, v) in target.iter_mut().enumerate() {
                        *v += (coeff_at[*j][x] - gy) * lf[x];
                    }
                }
            }
            for (j, term) in terms.iter().enumerate() {
                if let SymbolTerm::Drift { component, .. } = term {
                    if term.is_constant() {
                        continue;
                    }
                    let df = derivative(grid, &f, *component, 1);
                    let gy = coeff_at[j][y];
                    let target = drift.column_mut(ti, ci);
                    for (x, v) in target.iter_mut().enumerate() {
                        *v += (coeff_at[j][x] - gy) * df[x];
                    }
                }
            }
        }
    }
    Ok(Lz1Parts { drift, small_jumps: small, large_jumps: large })
}

/// (L_x - L_y) Z(t,x,y) = J₁ + J₂ + J₃.
pub fn lz1(model: &LevyTypeModel, times: &[f64], grid: &SpatialGrid, stride: usize) -> Result<KernelField, ParametrixError> {
    Ok(lz1_parts(model, times, grid, stride)?.total())
}
