//! The potential U(r) = ∫_1^{1/r} s^{n−1}/q*(s) ds.

use serde::{Deserialize, Serialize};

use crate::model::ScaleProfile;
use crate::quadrature::{geometric_panels, legendre};

/// Spacing of the tabulation in v = ln s.
const V_STEP: f64 = 0.0625;
/// Tabulation ends at s = e^{V_END}; beyond it q* is extended as a power law.
const V_END: f64 = 32.0;
/// Tail exponents a of q* with a − n below this margin count as divergent.
const DIVERGENCE_MARGIN: f64 = 1e-3;

/// U tabulated on a uniform grid in v = ln(1/r) with exact derivatives,
/// evaluated by cubic Hermite interpolation and a power-law tail.
#[derive(Debug, Clone)]
pub struct UPotential {
    dim: usize,
    u: Vec<f64>,
    du: Vec<f64>,
    tail_exponent: f64,
    tail_scale: f64,
    u_zero: f64,
}

/// Summary of a tabulated potential.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSummary {
    pub dim: usize,
    /// Power-law exponent of q*(s) at the end of the table.
    pub tail_exponent: f64,
    /// U(0), infinite when the tail exponent does not exceed n.
    pub u_zero: f64,
    pub u_at_quarter: f64,
}

impl UPotential {
    pub fn new(profile: &ScaleProfile) -> Self {
        Self::from_q_star(profile.dim(), |s| profile.q_star(s))
    }

    /// Build from any q* evaluator in dimension `dim`.
    pub fn from_q_star<Q: Fn(f64) -> f64>(dim: usize, q_star: Q) -> Self {
        let n = dim as f64;
        let integrand = |v: f64| (n * v).exp() / q_star(v.exp());
        let steps = (V_END / V_STEP).round() as usize;
        let rule = legendre(8);
        let mut u = Vec::with_capacity(steps + 1);
        let mut du = Vec::with_capacity(steps + 1);
        u.push(0.0);
        du.push(integrand(0.0));
        for k in 1..=steps {
            let (a, b) = ((k - 1) as f64 * V_STEP, k as f64 * V_STEP);
            let prev = u[k - 1];
            u.push(prev + rule.integrate(a, b, integrand));
            du.push(integrand(b));
        }
        let s_end = V_END.exp();
        let q_end = q_star(s_end);
        let tail_exponent = (q_end / q_star(s_end / 10.0)).ln() / 10f64.ln();
        let tail_scale = s_end.powf(n) / q_end;
        let u_end = *u.last().expect("table is nonempty");
        let u_zero = if tail_exponent - n > DIVERGENCE_MARGIN {
            u_end + tail_scale / (tail_exponent - n)
        } else {
            f64::INFINITY
        };
        Self { dim, u, du, tail_exponent, tail_scale, u_zero }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// U(r) for r ∈ [0, 1]; r ≥ 1 gives 0.
    pub fn value(&self, r: f64) -> f64 {
        if r >= 1.0 {
            return 0.0;
        }
        if r <= 0.0 {
            return self.u_zero;
        }
        let v = -r.ln();
        if v >= V_END {
            return self.tail(v);
        }
        let pos = v / V_STEP;
        let k = (pos.floor() as usize).min(self.u.len() - 2);
        let s = pos - k as f64;
        let (h00, h10, h01, h11) =
            (2.0 * s.powi(3) - 3.0 * s * s + 1.0, s.powi(3) - 2.0 * s * s + s, -2.0 * s.powi(3) + 3.0 * s * s, s.powi(3) - s * s);
        h00 * self.u[k] + h10 * V_STEP * self.du[k] + h01 * self.u[k + 1] + h11 * V_STEP * self.du[k + 1]
    }

    fn tail(&self, v: f64) -> f64 {
        let n = self.dim as f64;
        let u_end = *self.u.last().expect("table is nonempty");
        let w = v - V_END;
        let gap = n - self.tail_exponent;
        let growth = if gap.abs() < 1e-12 { w } else { ((gap * w).exp() - 1.0) / gap };
        u_end + self.tail_scale * growth
    }

    /// −U'(r) = 1/(r^{n+1} q*(1/r)), log-linear in v between table nodes.
    pub fn rate(&self, r: f64) -> f64 {
        if r >= 1.0 || r <= 0.0 {
            return if r <= 0.0 { f64::INFINITY } else { 0.0 };
        }
        let v = -r.ln();
        let dv = if v >= V_END {
            let n = self.dim as f64;
            self.tail_scale * ((n - self.tail_exponent) * (v - V_END)).exp()
        } else {
            let pos = v / V_STEP;
            let k = (pos.floor() as usize).min(self.du.len() - 2);
            let s = pos - k as f64;
            (self.du[k].ln() * (1.0 - s) + self.du[k + 1].ln() * s).exp()
        };
        dv / r
    }

    /// U(0) = ∫_1^∞ s^{n−1}/q*(s) ds.
    pub fn at_zero(&self) -> f64 {
        self.u_zero
    }

    pub fn is_bounded(&self) -> bool {
        self.u_zero.is_finite()
    }

    pub fn tail_exponent(&self) -> f64 {
        self.tail_exponent
    }

    pub fn summary(&self) -> PotentialSummary {
        PotentialSummary {
            dim: self.dim,
            tail_exponent: self.tail_exponent,
            u_zero: self.u_zero,
            u_at_quarter: self.value(0.25),
        }
    }
}

/// U(r) by direct adaptive quadrature in s.
pub fn u_potential(profile: &ScaleProfile, r: f64) -> f64 {
    if r >= 1.0 {
        return 0.0;
    }
    let n = profile.dim() as f64;
    let rule = legendre(10);
    let upper = if r > 0.0 { 1.0 / r } else { V_END.exp() };
    geometric_panels(1.0, upper, 1.5, f64::INFINITY, &[])
        .into_iter()
        .map(|(a, b)| rule.integrate(a, b, |s| s.powf(n - 1.0) / profile.q_star(s)))
        .sum()
}

/// U'(r) = −1/(r^{n+1} q*(1/r)).
pub fn u_derivative(profile: &ScaleProfile, r: f64) -> f64 {
    let n = profile.dim() as f64;
    -1.0 / (r.powf(n + 1.0) * profile.q_star(1.0 / r))
}

/// U(r)/(−r U'(r)) along a ladder of radii.
pub fn lhopital_ratios(profile: &ScaleProfile, potential: &UPotential, radii: &[f64]) -> Vec<f64> {
    radii.iter().map(|&r| potential.value(r) / (-r * u_derivative(profile, r))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LevyTypeModel, ProfileConfig};

    fn profile(alpha: f64) -> ScaleProfile {
        ScaleProfile::build(&LevyTypeModel::stable(1, alpha, 1.0).unwrap(), ProfileConfig::default()).unwrap()
    }

    #[test]
    fn stable_three_halves_is_bounded() {
        let p = profile(1.5);
        let u = UPotential::new(&p);
        assert!((u.value(0.25) - 0.1875).abs() < 1e-8);
        assert!((u_potential(&p, 0.25) - 0.1875).abs() < 1e-8);
        assert!((u.at_zero() - 0.375).abs() < 1e-6, "{}", u.at_zero());
        assert!((u.value(1e-200) - 0.375).abs() < 1e-6);
        assert_eq!(u.value(1.0), 0.0);
        for &r in &[0.9f64, 0.5, 1e-3, 1e-10, 1e-20] {
            assert!((u.value(r) - 0.375 * (1.0 - r.sqrt())).abs() < 1e-8, "r = {r}: {} vs {}", u.value(r), 0.375 * (1.0 - r.sqrt()));
        }
    }

    #[test]
    fn cauchy_potential_is_logarithmic() {
        let p = profile(1.0);
        let u = UPotential::new(&p);
        assert!(!u.is_bounded());
        for &r in &[0.5f64, 1e-4, 1e-30, 1e-200] {
            let exact = (1.0 / r).ln() / 4.0;
            assert!((u.value(r) - exact).abs() < 1e-8 * exact.max(1.0), "r = {r}: {}", u.value(r));
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        for alpha in [1.0, 1.5] {
            let p = profile(alpha);
            let u = UPotential::new(&p);
            for &r in &[0.5, 0.1, 0.01] {
                let h = 1e-5 * r;
                let fd = (u.value(r + h) - u.value(r - h)) / (2.0 * h);
                let exact = u_derivative(&p, r);
                assert!((fd / exact - 1.0).abs() < 1e-5, "alpha {alpha}, r {r}: {fd} vs {exact}");
                assert!((u.rate(r) / -exact - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn monotone_and_lhopital_bounded_below() {
        let p = profile(1.5);
        let u = UPotential::new(&p);
        let radii: Vec<f64> = (1..40).map(|k| 10f64.powf(-0.25 * k as f64)).collect();
        for w in radii.windows(2) {
            assert!(u.value(w[1]) >= u.value(w[0]));
        }
        let ratios = lhopital_ratios(&p, &u, &radii);
        assert!(ratios.iter().all(|&q| q > 0.5));
    }
}
