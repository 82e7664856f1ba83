//! Finite Borel measures tested for Kato/Dynkin membership: atoms plus a
//! one-dimensional density part with exact ball masses.

use serde::{Deserialize, Serialize};

use crate::error::KatoError;
use crate::model::norm;
use crate::quadrature::{geometric_panels, legendre};

/// Point mass of ϖ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureAtom {
    pub location: Vec<f64>,
    pub mass: f64,
}

/// Absolutely continuous or self-similar part of ϖ (one dimension only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityPart {
    #[default]
    None,
    /// Constant density `height` on [lo, hi].
    Uniform { lo: f64, hi: f64, height: f64 },
    /// Middle-thirds Cantor measure of total `mass` on [lo, hi]; each
    /// level-k interval carries mass·2^{-k}, and the mass of a
    /// level-`level` interval is spread uniformly over it.
    Cantor { lo: f64, hi: f64, mass: f64, level: usize },
}

/// The measure ϖ: atoms plus a density part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub dim: usize,
    #[serde(default)]
    pub atoms: Vec<MeasureAtom>,
    #[serde(default)]
    pub density: DensityPart,
}

/// Distances from x closer than this are treated as the centre when
/// integrating a singular radial function over the density part.
const CENTRE_FLOOR: f64 = 1e-15;

/// A Cantor interval is collapsed onto its two children's centres once
/// its distance from x exceeds this multiple of its length.
const FAR_FIELD: f64 = 12.0;

impl MeasureSpec {
    pub fn new(dim: usize, atoms: Vec<MeasureAtom>, density: DensityPart) -> Result<Self, KatoError> {
        let spec = Self { dim, atoms, density };
        spec.validate()?;
        Ok(spec)
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, atoms: Vec::new(), density: DensityPart::None }
    }

    pub fn dirac(location: Vec<f64>) -> Self {
        Self { dim: location.len(), atoms: vec![MeasureAtom { location, mass: 1.0 }], density: DensityPart::None }
    }

    /// Lebesgue measure on [lo, hi].
    pub fn lebesgue(lo: f64, hi: f64) -> Self {
        Self { dim: 1, atoms: Vec::new(), density: DensityPart::Uniform { lo, hi, height: 1.0 } }
    }

    /// Unit-mass Cantor measure on [lo, hi] resolved to `level`.
    pub fn cantor(lo: f64, hi: f64, level: usize) -> Self {
        Self { dim: 1, atoms: Vec::new(), density: DensityPart::Cantor { lo, hi, mass: 1.0, level } }
    }

    pub fn from_json(text: &str) -> Result<Self, KatoError> {
        let spec: Self = serde_json::from_str(text).map_err(|e| KatoError::InvalidMeasure(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), KatoError> {
        if !(1..=2).contains(&self.dim) {
            return Err(KatoError::InvalidMeasure(format!("dimension {} not in 1..=2", self.dim)));
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if a.location.len() != self.dim || a.location.iter().any(|v| !v.is_finite()) {
                return Err(KatoError::InvalidMeasure(format!("atom {i} location does not match dimension")));
            }
            if !(a.mass > 0.0 && a.mass.is_finite()) {
                return Err(KatoError::InvalidMeasure(format!("atom {i} mass {} must be positive", a.mass)));
            }
        }
        let interval_ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && lo < hi;
        match self.density {
            DensityPart::None => {}
            DensityPart::Uniform { lo, hi, height } => {
                if !interval_ok(lo, hi) || !(height >= 0.0 && height.is_finite()) {
                    return Err(KatoError::InvalidMeasure("uniform density needs lo < hi and height >= 0".into()));
                }
            }
            DensityPart::Cantor { lo, hi, mass, level } => {
                if !interval_ok(lo, hi) || !(mass >= 0.0 && mass.is_finite()) || !(1..=40).contains(&level) {
                    return Err(KatoError::InvalidMeasure(
                        "cantor density needs lo < hi, mass >= 0 and level in 1..=40".into(),
                    ));
                }
            }
        }
        if self.dim != 1 && self.density != DensityPart::None {
            return Err(KatoError::InvalidMeasure("density parts are supported in one dimension only".into()));
        }
        Ok(())
    }

    pub fn atom_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    pub fn density_mass(&self) -> f64 {
        match self.density {
            DensityPart::None => 0.0,
            DensityPart::Uniform { lo, hi, height } => height * (hi - lo),
            DensityPart::Cantor { mass, .. } => mass,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.atom_mass() + self.density_mass()
    }

    pub fn is_zero(&self) -> bool {
        self.total_mass() == 0.0
    }

    /// Closed interval containing the support, per axis.
    pub fn support_hull(&self) -> Option<Vec<(f64, f64)>> {
        let mut hull: Option<Vec<(f64, f64)>> = None;
        let mut extend = |point: &[f64]| {
            let h = hull.get_or_insert_with(|| point.iter().map(|&v| (v, v)).collect());
            for (d, &v) in point.iter().enumerate() {
                h[d].0 = h[d].0.min(v);
                h[d].1 = h[d].1.max(v);
            }
        };
        for a in &self.atoms {
            extend(&a.location);
        }
        if let Some((lo, hi)) = self.density_interval() {
            if self.density_mass() > 0.0 {
                extend(&[lo]);
                extend(&[hi]);
            }
        }
        hull
    }

    fn density_interval(&self) -> Option<(f64, f64)> {
        match self.density {
            DensityPart::None => None,
            DensityPart::Uniform { lo, hi, .. } | DensityPart::Cantor { lo, hi, .. } => Some((lo, hi)),
        }
    }

    /// Density-part mass of [a, b] (one dimension).
    pub fn interval_mass(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match self.density {
            DensityPart::None => 0.0,
            DensityPart::Uniform { lo, hi, height } => height * (b.min(hi) - a.max(lo)).max(0.0),
            DensityPart::Cantor { lo, hi, mass, level } => cantor_mass(lo, hi, mass, level, a, b),
        }
    }

    /// ϖ{y : ‖x − y‖ ≤ r}.
    pub fn ball_mass(&self, x: &[f64], r: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().filter(|a| distance(&a.location, x) <= r).map(|a| a.mass).sum();
        if self.dim == 1 {
            atoms + self.interval_mass(x[0] - r, x[0] + r)
        } else {
            atoms
        }
    }

    /// Distances from x at which the ball mass has a jump or a kink.
    pub fn breakpoints(&self, x: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.atoms.iter().map(|a| distance(&a.location, x)).collect();
        if let (1, Some((lo, hi))) = (self.dim, self.density_interval()) {
            out.push((lo - x[0]).abs());
            out.push((hi - x[0]).abs());
        }
        out.retain(|d| *d > 0.0);
        out
    }

    /// Interval endpoints and midpoints of the density part down to `depth`
    /// levels, the points where self-similar mass concentrates.
    pub fn density_nodes(&self, depth: usize) -> Vec<f64> {
        match self.density {
            DensityPart::None => Vec::new(),
            DensityPart::Uniform { lo, hi, .. } => vec![lo, 0.5 * (lo + hi), hi],
            DensityPart::Cantor { lo, hi, level, .. } => {
                let mut intervals = vec![(lo, hi)];
                for _ in 0..depth.min(level) {
                    intervals = intervals
                        .into_iter()
                        .flat_map(|(a, b)| {
                            let third = (b - a) / 3.0;
                            [(a, a + third), (b - third, b)]
                        })
                        .collect();
                }
                intervals.into_iter().flat_map(|(a, b)| [a, 0.5 * (a + b), b]).collect()
            }
        }
    }

    /// ∫_{‖y−x‖ ≤ radius} f(‖y − x‖) ϖ_density(dy) for f integrable at 0.
    pub fn integrate_density<F: Fn(f64) -> f64>(&self, x: f64, radius: f64, f: &F) -> f64 {
        match self.density {
            DensityPart::None => 0.0,
            DensityPart::Uniform { lo, hi, height } => height * segment_integral(x, radius, lo, hi, f),
            DensityPart::Cantor { lo, hi, mass, level } => cantor_integral(x, radius, lo, hi, mass, level, f),
        }
    }
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(u, v)| u - v).collect();
    norm(&d)
}

fn cantor_mass(lo: f64, hi: f64, mass: f64, levels_left: usize, a: f64, b: f64) -> f64 {
    if b <= lo || a >= hi || mass == 0.0 {
        return 0.0;
    }
    if a <= lo && b >= hi {
        return mass;
    }
    if levels_left == 0 {
        return mass * (b.min(hi) - a.max(lo)) / (hi - lo);
    }
    let third = (hi - lo) / 3.0;
    cantor_mass(lo, lo + third, 0.5 * mass, levels_left - 1, a, b)
        + cantor_mass(hi - third, hi, 0.5 * mass, levels_left - 1, a, b)
}

/// ∫ f(|y − x|) dy over [lo, hi] ∩ [x − radius, x + radius].
fn segment_integral<F: Fn(f64) -> f64>(x: f64, radius: f64, lo: f64, hi: f64, f: &F) -> f64 {
    let a = lo.max(x - radius);
    let b = hi.min(x + radius);
    if b <= a {
        return 0.0;
    }
    if a >= x {
        distance_integral(a - x, b - x, f)
    } else if b <= x {
        distance_integral(x - b, x - a, f)
    } else {
        distance_integral(0.0, x - a, f) + distance_integral(0.0, b - x, f)
    }
}

/// ∫_{za}^{zb} f(z) dz with panels graded towards z = 0.
fn distance_integral<F: Fn(f64) -> f64>(za: f64, zb: f64, f: &F) -> f64 {
    if zb <= za {
        return 0.0;
    }
    let rule = legendre(10);
    let floor = CENTRE_FLOOR * zb.max(1.0);
    let (start, head) = if za < floor { (floor.min(zb), floor.min(zb) * f(floor.min(zb))) } else { (za, 0.0) };
    let width = zb - za;
    head + geometric_panels(start, zb, 2.0, 0.125 * width, &[])
        .into_iter()
        .map(|(a, b)| rule.integrate(a, b, f))
        .sum::<f64>()
}

fn cantor_integral<F: Fn(f64) -> f64>(
    x: f64,
    radius: f64,
    lo: f64,
    hi: f64,
    mass: f64,
    levels_left: usize,
    f: &F,
) -> f64 {
    if mass == 0.0 || hi < x - radius || lo > x + radius {
        return 0.0;
    }
    if levels_left == 0 {
        return mass / (hi - lo) * segment_integral(x, radius, lo, hi, f);
    }
    let len = hi - lo;
    let gap = if x < lo { lo - x } else if x > hi { x - hi } else { 0.0 };
    let inside = (lo - x).abs() <= radius && (hi - x).abs() <= radius;
    if inside && gap > FAR_FIELD * len {
        let c1 = lo + len / 6.0;
        let c2 = hi - len / 6.0;
        return 0.5 * mass * (f((c1 - x).abs()) + f((c2 - x).abs()));
    }
    let third = len / 3.0;
    cantor_integral(x, radius, lo, lo + third, 0.5 * mass, levels_left - 1, f)
        + cantor_integral(x, radius, hi - third, hi, 0.5 * mass, levels_left - 1, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masses_add_up() {
        let m = MeasureSpec::new(
            1,
            vec![MeasureAtom { location: vec![0.5], mass: 2.0 }],
            DensityPart::Uniform { lo: -1.0, hi: 1.0, height: 1.0 },
        )
        .unwrap();
        assert_eq!(m.total_mass(), 4.0);
        assert!((m.ball_mass(&[0.0], 0.5) - 3.0).abs() < 1e-15);
        assert!((m.ball_mass(&[0.0], 0.25) - 0.5).abs() < 1e-15);
        assert!((m.ball_mass(&[3.0], 1.0)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_measures() {
        let bad_atom = MeasureSpec::new(1, vec![MeasureAtom { location: vec![0.0], mass: 0.0 }], DensityPart::None);
        assert_eq!(bad_atom.unwrap_err().code(), "MEASURE_INVALID");
        let density_2d = MeasureSpec::new(2, vec![], DensityPart::Uniform { lo: 0.0, hi: 1.0, height: 1.0 });
        assert!(density_2d.is_err());
    }

    #[test]
    fn cantor_mass_is_self_similar() {
        let m = MeasureSpec::cantor(0.0, 1.0, 20);
        assert!((m.total_mass() - 1.0).abs() < 1e-15);
        for k in 1..8 {
            let r = 3f64.powi(-k);
            assert!((m.interval_mass(0.0, r) - 0.5f64.powi(k)).abs() < 1e-12);
        }
        assert!((m.interval_mass(1.0 / 3.0 + 1e-9, 2.0 / 3.0 - 1e-9)).abs() < 1e-15);
        assert!((m.interval_mass(0.0, 0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn density_integral_matches_ball_mass() {
        for m in [MeasureSpec::lebesgue(-1.0, 1.0), MeasureSpec::cantor(0.0, 1.0, 20)] {
            for &x in &[0.0, 0.3, 1.2] {
                let total = m.integrate_density(x, 0.7, &|_| 1.0);
                let exact = m.interval_mass(x - 0.7, x + 0.7);
                assert!((total - exact).abs() < 1e-10, "x = {x}: {total} vs {exact}");
            }
        }
    }

    #[test]
    fn density_integral_handles_log_singularity() {
        let m = MeasureSpec::lebesgue(-1.0, 1.0);
        // ∫_{-1}^{1} -ln|z| dz = 2
        let v = m.integrate_density(0.0, 1.0, &|z: f64| -z.ln());
        assert!((v - 2.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn json_round_trip() {
        let m = MeasureSpec::cantor(0.0, 1.0, 12);
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(MeasureSpec::from_json(&text).unwrap(), m);
        let parsed = MeasureSpec::from_json(r#"{"dim":1,"atoms":[{"location":[0.0],"mass":1.0}]}"#).unwrap();
        assert_eq!(parsed, MeasureSpec::dirac(vec![0.0]));
    }
}
