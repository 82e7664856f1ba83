//! Separable decomposition of the symbol q(x, ξ) = Σ_j g_j(x) Q_j(ξ).

use num_complex::Complex64;

use super::{norm, DriftField, JumpWeight, LevyBaseMeasure, LevyTypeModel, ModelError, StateFactor};

/// One separable piece g(x) Q(ξ) of the symbol.
#[derive(Debug, Clone, PartialEq)]
pub enum SymbolTerm {
    /// g(x) ∫ (1 - e^{iξu} + iξu 𝟙) h(u) μ(du)
    Jump { state: StateFactor, weight: JumpWeight },
    /// a_d(x) · (-i ξ_d)
    Drift { component: usize, field: DriftField },
}

/// A term whose coefficient varies in space, with its range on a sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct VaryingCoefficient {
    pub term: SymbolTerm,
    pub min: f64,
    pub max: f64,
}

impl SymbolTerm {
    pub fn coefficient(&self, x: &[f64]) -> f64 {
        match self {
            SymbolTerm::Jump { state, .. } => state.value(x),
            SymbolTerm::Drift { component, field } => field.value(x)[*component],
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            SymbolTerm::Jump { state, .. } => state.is_constant(),
            SymbolTerm::Drift { field, .. } => field.is_constant(),
        }
    }

    /// Q(ξ) at a single frequency.
    pub fn multiplier(&self, base: &LevyBaseMeasure, xi: &[f64]) -> Complex64 {
        match self {
            SymbolTerm::Jump { weight, .. } => base.symbol(xi, *weight),
            SymbolTerm::Drift { component, .. } => Complex64::new(0.0, -xi[*component]),
        }
    }

    /// Q(ξ) at many frequencies (flat array, `dim` entries per point).
    /// Scale-invariant symmetric profiles are evaluated once and rescaled;
    /// otherwise values are cached by ‖ξ‖ for radial measures.
    pub fn multipliers(&self, base: &LevyBaseMeasure, xis: &[f64]) -> Vec<Complex64> {
        let dim = base.dim();
        let count = xis.len() / dim;
        match self {
            SymbolTerm::Drift { component, .. } => {
                (0..count).map(|i| Complex64::new(0.0, -xis[i * dim + component])).collect()
            }
            SymbolTerm::Jump { weight, .. } => {
                let radial = base.atoms().is_empty() && base.is_symmetric();
                let invariant = radial && base.profile(*weight).is_some_and(|p| p.is_scale_invariant());
                if invariant {
                    let alpha = base.tail_exponent().unwrap_or(1.0);
                    let mut unit = vec![0.0; dim];
                    unit[0] = 1.0;
                    let c = base.symbol(&unit, *weight);
                    return (0..count)
                        .map(|i| c * norm(&xis[i * dim..(i + 1) * dim]).powf(alpha))
                        .collect();
                }
                if radial {
                    let mut cache: std::collections::HashMap<u64, Complex64> = std::collections::HashMap::new();
                    let mut unit = vec![0.0; dim];
                    return (0..count)
                        .map(|i| {
                            let k = norm(&xis[i * dim..(i + 1) * dim]);
                            *cache.entry(k.to_bits()).or_insert_with(|| {
                                unit[0] = k;
                                base.symbol(&unit, *weight)
                            })
                        })
                        .collect();
                }
                (0..count).map(|i| base.symbol(&xis[i * dim..(i + 1) * dim], *weight)).collect()
            }
        }
    }
}

impl LevyTypeModel {
    /// All separable symbol terms (jump terms first, then drift components).
    pub fn symbol_terms(&self) -> Vec<SymbolTerm> {
        let mut terms: Vec<SymbolTerm> = self
            .modulation()
            .terms
            .iter()
            .map(|t| SymbolTerm::Jump { state: t.state.clone(), weight: t.weight })
            .collect();
        if !self.drift().is_zero() {
            for d in 0..self.dim() {
                terms.push(SymbolTerm::Drift { component: d, field: self.drift().clone() });
            }
        }
        terms
    }

    /// q(y, ξ) with a quadrature refinement check.
    pub fn q_exponent(&self, y: &[f64], xi: &[f64]) -> Result<Complex64, ModelError> {
        let mut q = Complex64::new(0.0, 0.0);
        for term in self.symbol_terms() {
            let g = term.coefficient(y);
            if g == 0.0 {
                continue;
            }
            let m = match &term {
                SymbolTerm::Jump { weight, .. } => self.base().symbol_checked(xi, *weight)?,
                SymbolTerm::Drift { .. } => term.multiplier(self.base(), xi),
            };
            q += g * m;
        }
        Ok(q)
    }

    /// (q^U(ξ), q^L(ξ)) of the base measure.
    pub fn q_upper_lower(&self, xi: &[f64]) -> (f64, f64) {
        self.base().upper_lower(xi)
    }

    /// q*(r) of the base measure.
    pub fn q_star(&self, r: f64) -> f64 {
        self.base().q_star(r)
    }

    /// Varying coefficients and their ranges over `samples` (flat points).
    pub fn varying_coefficients(&self, samples: &[f64]) -> Vec<VaryingCoefficient> {
        let dim = self.dim();
        self.symbol_terms()
            .into_iter()
            .filter(|t| !t.is_constant())
            .map(|term| {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for x in samples.chunks(dim) {
                    let v = term.coefficient(x);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                VaryingCoefficient { term, min: lo, max: hi }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AssumptionConstants, DensitySpec, ModelSpec, ModulationField, ModulationTerm, QuadratureSpec};
    use std::f64::consts::PI;

    fn modulated() -> LevyTypeModel {
        LevyTypeModel::from_spec(ModelSpec {
            dimension: 1,
            density: DensitySpec::PowerLaw { alpha: 1.0, scale: 1.0, skew: 0.0 },
            atoms: vec![],
            modulation: ModulationField {
                terms: vec![
                    ModulationTerm { state: StateFactor::Constant { value: 1.0 }, weight: JumpWeight::Unit },
                    ModulationTerm {
                        state: StateFactor::Saturating { amplitude: 0.4, exponent: 1.0 },
                        weight: JumpWeight::Unit,
                    },
                ],
            },
            drift: DriftField::Zero,
            constants: AssumptionConstants { beta: 2.0, lambda: 0.5, b1: 1.0, b2: 1.4, b3: 0.4 },
            symmetric: true,
            quadrature: QuadratureSpec::default(),
        })
        .unwrap()
    }

    #[test]
    fn modulated_symbol_scales_with_state() {
        let m = modulated();
        let q = m.q_exponent(&[0.5], &[2.0]).unwrap();
        assert!((q.re - 1.2 * PI * 2.0).abs() < 1e-9);
        assert_eq!(q.im, 0.0);
        assert_eq!(m.q_exponent(&[3.0], &[0.0]).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn varying_coefficient_ranges() {
        let m = modulated();
        let xs: Vec<f64> = (-20..=20).map(|i| i as f64 * 0.1).collect();
        let v = m.varying_coefficients(&xs);
        assert_eq!(v.len(), 1);
        assert!((v[0].min - 0.0).abs() < 1e-15 && (v[0].max - 0.4).abs() < 1e-15);
    }

    #[test]
    fn batched_multipliers_match_pointwise() {
        let m = modulated();
        let term = &m.symbol_terms()[0];
        let xis = [0.0, -1.5, 2.0, 40.0];
        let batch = term.multipliers(m.base(), &xis);
        for (i, x) in xis.iter().enumerate() {
            let single = term.multiplier(m.base(), &[*x]);
            assert!((batch[i] - single).norm() < 1e-9 * (1.0 + single.norm()));
        }
    }
}
