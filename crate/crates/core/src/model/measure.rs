//! Base Lévy measure and its radial profile integrals.
//!
//! The density part is radial up to a one-dimensional skew:
//! ν(u) = c_± ‖u‖^{-n-α} e^{-θ‖u‖} 𝟙{‖u‖ ≤ K}. All symbol-type integrals
//! reduce to one-dimensional integrals against the radial profile
//! s^{-1-α} e^{-θ s} w(s) 𝟙{s ≤ K}, where w is an optional jump weight
//! coming from the modulation.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::quadrature::{geometric_panels, laguerre, legendre, power_head};

/// Multiplicative weight in the jump size, h(u) in m(x,u) = Σ g(x) h(u).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JumpWeight {
    #[default]
    Unit,
    /// 1 ∧ ‖u‖².
    CappedSquare,
}

impl JumpWeight {
    #[inline]
    pub fn value(self, s: f64) -> f64 {
        match self {
            JumpWeight::Unit => 1.0,
            JumpWeight::CappedSquare => (s * s).min(1.0),
        }
    }
}

/// Unit-scale radial profile s^{-1-α} e^{-θ s} w(s) 𝟙{s ≤ K}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialProfile {
    pub alpha: f64,
    pub cutoff: Option<f64>,
    pub rate: Option<f64>,
    pub weight: JumpWeight,
    pub order: usize,
}

const TAIL_FREQ: f64 = 40.0;

impl RadialProfile {
    pub fn power(alpha: f64) -> Self {
        Self { alpha, cutoff: None, rate: None, weight: JumpWeight::Unit, order: 16 }
    }

    pub fn with_weight(mut self, weight: JumpWeight) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.order = order;
        self
    }

    /// True when the profile is exactly s^{-1-α}, so every symbol integral
    /// scales as a power of the frequency.
    pub fn is_scale_invariant(&self) -> bool {
        self.cutoff.is_none() && self.rate.is_none() && self.weight == JumpWeight::Unit
    }

    #[inline]
    pub fn end(&self) -> f64 {
        self.cutoff.unwrap_or(f64::INFINITY)
    }

    #[inline]
    pub fn density(&self, s: f64) -> f64 {
        if s <= 0.0 || s > self.end() {
            return 0.0;
        }
        let mut v = s.powf(-1.0 - self.alpha) * self.weight.value(s);
        if let Some(th) = self.rate {
            v *= (-th * s).exp();
        }
        v
    }

    /// Analytic continuation used on contours with Re z ≥ 1.
    fn density_complex(&self, z: Complex64) -> Complex64 {
        let mut v = z.powf(-1.0 - self.alpha);
        if let Some(th) = self.rate {
            v *= (-th * z).exp();
        }
        v
    }

    fn head_limit(&self) -> f64 {
        self.end().min(1.0)
    }

    /// Exponent e with p(s) = s^e · smooth(s) near the origin.
    fn head_power(&self) -> f64 {
        let base = -1.0 - self.alpha;
        match self.weight {
            JumpWeight::Unit => base,
            JumpWeight::CappedSquare => base + 2.0,
        }
    }

    #[inline]
    fn head_smooth(&self, s: f64) -> f64 {
        match self.rate {
            Some(th) => (-th * s).exp(),
            None => 1.0,
        }
    }

    fn breaks(&self) -> Vec<f64> {
        let mut b = vec![1.0];
        if let Some(k) = self.cutoff {
            b.push(k);
        }
        b
    }

    /// Upper integration limit beyond which the profile is negligible for
    /// tempered tails.
    fn effective_end(&self, from: f64) -> f64 {
        match self.rate {
            Some(th) => self.end().min(from.max(1.0) + 60.0 / th),
            None => self.end(),
        }
    }

    fn panel_sum<F: Fn(f64) -> f64>(&self, a: f64, b: f64, max_width: f64, order: usize, f: F) -> f64 {
        if !(b > a) {
            return 0.0;
        }
        let rule = legendre(order);
        geometric_panels(a, b, 2.0, max_width, &self.breaks())
            .into_iter()
            .map(|(lo, hi)| rule.integrate(lo, hi, |s| f(s) * self.density(s)))
            .sum()
    }

    /// ∫_a^b s^j p(s) ds for a > 0 (b may be infinite when j < α).
    pub fn moment(&self, j: f64, a: f64, b: f64) -> f64 {
        let b = b.min(self.end());
        if !(b > a) {
            return 0.0;
        }
        if a <= 0.0 {
            return self.moment_from_zero(j, b);
        }
        if self.rate.is_none() {
            return self.power_moment(j, a, b);
        }
        let hi = self.effective_end(a).min(b);
        let width = 1.0 / self.rate.unwrap_or(1.0);
        self.panel_sum(a, hi, width.max(1e-3), self.order, |s| s.powf(j))
    }

    fn power_moment(&self, j: f64, a: f64, b: f64) -> f64 {
        let prim = |e: f64, lo: f64, hi: f64| -> f64 {
            if (e + 1.0).abs() < 1e-12 {
                (hi / lo).ln()
            } else if hi.is_infinite() {
                if e + 1.0 < 0.0 { -lo.powf(e + 1.0) / (e + 1.0) } else { f64::INFINITY }
            } else {
                (hi.powf(e + 1.0) - lo.powf(e + 1.0)) / (e + 1.0)
            }
        };
        let e = j - 1.0 - self.alpha;
        match self.weight {
            JumpWeight::Unit => prim(e, a, b),
            JumpWeight::CappedSquare => {
                let mut v = 0.0;
                if a < 1.0 {
                    v += prim(e + 2.0, a, b.min(1.0));
                }
                if b > 1.0 {
                    v += prim(e, a.max(1.0), b);
                }
                v
            }
        }
    }

    /// ∫_0^b s^j p(s) ds; finite when j + head_power > -1.
    fn moment_from_zero(&self, j: f64, b: f64) -> f64 {
        let e = self.head_power() + j;
        if e <= -1.0 {
            return f64::INFINITY;
        }
        if self.rate.is_none() {
            let lim = self.head_limit().min(b);
            let head = lim.powf(e + 1.0) / (e + 1.0);
            return head + self.power_moment(j, lim, b);
        }
        let lim = self.head_limit().min(b);
        let head = power_head(lim, e, self.order + 8, |s| self.head_smooth(s));
        head + if b > lim { self.moment(j, lim, b) } else { 0.0 }
    }

    /// μ-mass of the annulus a < s ≤ b (per unit angle).
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        self.moment(0.0, a, b)
    }

    /// ∫ ((k s)² ∧ 1) p(s) ds.
    pub fn upper(&self, k: f64) -> f64 {
        if k == 0.0 {
            return 0.0;
        }
        let k = k.abs();
        k * k * self.moment_from_zero(2.0, 1.0 / k) + self.mass_between(1.0 / k, f64::INFINITY)
    }

    /// ∫_{ks ≤ 1} (k s)² p(s) ds.
    pub fn lower(&self, k: f64) -> f64 {
        if k == 0.0 {
            return 0.0;
        }
        let k = k.abs();
        k * k * self.moment_from_zero(2.0, 1.0 / k)
    }

    /// ∫_a^{a+i∞} e^{ikz} p(z) dz along a vertical ray (a ≥ 1).
    fn contour(&self, k: f64, a: f64, order: usize) -> Complex64 {
        let rule = laguerre(order);
        let mut acc = Complex64::new(0.0, 0.0);
        for (tau, w) in rule.nodes.iter().zip(&rule.weights) {
            acc += *w * self.density_complex(Complex64::new(a, tau / k));
        }
        let phase = Complex64::new(0.0, k * a).exp();
        Complex64::new(0.0, 1.0 / k) * phase * acc
    }

    /// ∫_S^{end} e^{iks} p(s) ds via contour rotation; zero when the
    /// exponential tempering has already killed the tail.
    fn oscillatory_tail(&self, k: f64, s: f64, order: usize) -> Complex64 {
        let end = self.end();
        if s >= end {
            return Complex64::new(0.0, 0.0);
        }
        if let Some(th) = self.rate {
            if th * s > 45.0 {
                return Complex64::new(0.0, 0.0);
            }
        }
        let mut v = self.contour(k, s, order);
        if end.is_finite() {
            v -= self.contour(k, end, order);
        }
        v
    }

    /// ∫ (1 - cos ks) p(s) ds, the even part of the symbol.
    pub fn even(&self, k: f64) -> f64 {
        self.even_with(k, self.order)
    }

    pub fn even_with(&self, k: f64, order: usize) -> f64 {
        let k = k.abs();
        if k == 0.0 {
            return 0.0;
        }
        let eps = (0.1 / k).min(0.5 * self.head_limit());
        let head = power_head(eps, self.head_power() + 2.0, order + 8, |s| {
            let h = (0.5 * k * s).sin();
            2.0 * h * h / (s * s) * self.head_smooth(s)
        });
        let s_tail = (TAIL_FREQ / k).max(1.0);
        let mid_end = s_tail.min(self.end());
        let mid = self.panel_sum(eps, mid_end, PI / k, order, |s| 1.0 - (k * s).cos());
        let mut tail = 0.0;
        if self.end() > s_tail {
            let hi = self.effective_end(s_tail);
            tail = self.mass_between(s_tail, hi) - self.oscillatory_tail(k, s_tail, 2 * order).re;
        }
        head + mid + tail
    }

    /// ∫ (k s 𝟙{s ≤ 1} - sin ks) p(s) ds for k > 0, the odd part of the
    /// symbol on the positive half-line.
    pub fn odd(&self, k: f64) -> f64 {
        self.odd_with(k, self.order)
    }

    pub fn odd_with(&self, k: f64, order: usize) -> f64 {
        if k == 0.0 {
            return 0.0;
        }
        if k < 0.0 {
            return -self.odd_with(-k, order);
        }
        let eps = (0.1 / k).min(0.5 * self.head_limit());
        let head = power_head(eps, self.head_power() + 2.0, order + 8, |s| {
            let x = k * s;
            let num = if x < 1e-2 {
                x * x * x / 6.0 * (1.0 - x * x / 20.0)
            } else {
                x - x.sin()
            };
            num / (s * s) * self.head_smooth(s)
        });
        let s_tail = (TAIL_FREQ / k).max(1.0);
        let mid_end = s_tail.min(self.end());
        let mid = self.panel_sum(eps, mid_end, PI / k, order, |s| {
            let lin = if s <= 1.0 { k * s } else { 0.0 };
            lin - (k * s).sin()
        });
        let tail = if self.end() > s_tail {
            -self.oscillatory_tail(k, s_tail, 2 * order).im
        } else {
            0.0
        };
        head + mid + tail
    }
}

/// Selector for the density part of the base measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySpec {
    None,
    PowerLaw {
        alpha: f64,
        scale: f64,
        #[serde(default)]
        skew: f64,
    },
    TruncatedPowerLaw {
        alpha: f64,
        scale: f64,
        cutoff: f64,
        #[serde(default)]
        skew: f64,
    },
    TemperedPowerLaw {
        alpha: f64,
        scale: f64,
        rate: f64,
        #[serde(default)]
        skew: f64,
    },
}

impl DensitySpec {
    fn parts(&self) -> Option<(RadialProfile, f64, f64)> {
        match *self {
            DensitySpec::None => None,
            DensitySpec::PowerLaw { alpha, scale, skew } => Some((RadialProfile::power(alpha), scale, skew)),
            DensitySpec::TruncatedPowerLaw { alpha, scale, cutoff, skew } => Some((
                RadialProfile { cutoff: Some(cutoff), ..RadialProfile::power(alpha) },
                scale,
                skew,
            )),
            DensitySpec::TemperedPowerLaw { alpha, scale, rate, skew } => Some((
                RadialProfile { rate: Some(rate), ..RadialProfile::power(alpha) },
                scale,
                skew,
            )),
        }
    }
}

/// A point mass of the base measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: Vec<f64>,
    pub mass: f64,
}

/// Quadrature controls for the radial integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Gauss–Legendre nodes per panel.
    #[serde(default = "default_order")]
    pub panel_order: usize,
    /// Relative tolerance for the refinement check.
    #[serde(default = "default_refine_tol")]
    pub refine_tol: f64,
}

fn default_order() -> usize {
    16
}

fn default_refine_tol() -> f64 {
    1e-8
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { panel_order: default_order(), refine_tol: default_refine_tol() }
    }
}

/// Base Lévy measure μ on ℝⁿ, n ∈ {1, 2}.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyBaseMeasure {
    dim: usize,
    profile: Option<RadialProfile>,
    scale_pos: f64,
    scale_neg: f64,
    density: DensitySpec,
    atoms: Vec<Atom>,
    quadrature: QuadratureSpec,
}

/// Angular nodes for the direction supremum in two dimensions.
pub const ANGLES_2D: usize = 64;

impl LevyBaseMeasure {
    pub fn new(dim: usize, density: DensitySpec, atoms: Vec<Atom>, quadrature: QuadratureSpec) -> Result<Self, ModelError> {
        if !(1..=2).contains(&dim) {
            return Err(ModelError::Invalid(format!("dimension {dim} not in {{1, 2}}")));
        }
        for a in &atoms {
            let norm = a.location.iter().map(|x| x * x).sum::<f64>().sqrt();
            if a.location.len() != dim || norm == 0.0 || !(a.mass > 0.0) {
                return Err(ModelError::Invalid(format!("bad atom {a:?}")));
            }
        }
        let (profile, scale_pos, scale_neg) = match density.parts() {
            None => (None, 0.0, 0.0),
            Some((mut p, scale, skew)) => {
                if !(p.alpha > 0.0 && p.alpha < 2.0) {
                    return Err(ModelError::Invalid(format!("alpha {} not in (0, 2)", p.alpha)));
                }
                if !(scale > 0.0) || skew.abs() > 1.0 {
                    return Err(ModelError::Invalid("scale must be positive and |skew| <= 1".into()));
                }
                if dim == 2 && skew != 0.0 {
                    return Err(ModelError::Invalid("skew is only defined in one dimension".into()));
                }
                if p.cutoff.is_some_and(|k| !(k > 0.0)) || p.rate.is_some_and(|r| !(r > 0.0)) {
                    return Err(ModelError::Invalid("cutoff and rate must be positive".into()));
                }
                p.order = quadrature.panel_order;
                (Some(p), scale * (1.0 + skew), scale * (1.0 - skew))
            }
        };
        Ok(Self { dim, profile, scale_pos, scale_neg, density, atoms, quadrature })
    }

    /// Pure power-law density c|u|^{-n-α} in dimension `dim`.
    pub fn stable(dim: usize, alpha: f64, scale: f64) -> Result<Self, ModelError> {
        Self::new(dim, DensitySpec::PowerLaw { alpha, scale, skew: 0.0 }, vec![], QuadratureSpec::default())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn density_spec(&self) -> &DensitySpec {
        &self.density
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn quadrature(&self) -> QuadratureSpec {
        self.quadrature
    }

    /// The radial profile of the density part (unit scale) with a jump weight.
    pub fn profile(&self, weight: JumpWeight) -> Option<RadialProfile> {
        self.profile.map(|p| p.with_weight(weight))
    }

    /// Positive and negative half-line scales (equal in two dimensions).
    pub fn scales(&self) -> (f64, f64) {
        (self.scale_pos, self.scale_neg)
    }

    pub fn tail_exponent(&self) -> Option<f64> {
        self.profile.map(|p| p.alpha)
    }

    /// Density ν(u).
    pub fn density_at(&self, u: &[f64]) -> f64 {
        let Some(p) = self.profile else { return 0.0 };
        let s = norm(u);
        if s == 0.0 {
            return 0.0;
        }
        let c = if self.dim == 1 && u[0] < 0.0 { self.scale_neg } else { self.scale_pos };
        c * p.density(s) / s.powi(self.dim as i32 - 1)
    }

    /// True when ν(u) = ν(-u) and the atoms are symmetric.
    pub fn is_symmetric(&self) -> bool {
        if (self.scale_pos - self.scale_neg).abs() > 0.0 {
            return false;
        }
        self.atoms.iter().all(|a| {
            self.atoms.iter().any(|b| {
                (b.mass - a.mass).abs() <= 1e-12 * a.mass
                    && a.location.iter().zip(&b.location).all(|(x, y)| (x + y).abs() <= 1e-12)
            })
        })
    }

    /// Angular average helper: 4∫_0^{π/2} F(k sin ψ) dψ with geometric
    /// panels toward ψ = 0.
    fn angular<F: Fn(f64) -> f64>(&self, k: f64, f: F) -> f64 {
        let rule = legendre(8);
        let mut acc = 0.0;
        let mut hi = 0.5 * PI;
        for _ in 0..40 {
            let lo = 0.5 * hi;
            acc += rule.integrate(lo, hi, |psi| f(k * psi.sin()));
            hi = lo;
        }
        4.0 * acc
    }

    /// ∫(1 - e^{iξ·u} + iξ·u 𝟙{‖u‖≤1}) w(u) μ(du).
    pub fn symbol(&self, xi: &[f64], weight: JumpWeight) -> Complex64 {
        self.symbol_with(xi, weight, self.quadrature.panel_order)
    }

    pub fn symbol_with(&self, xi: &[f64], weight: JumpWeight, order: usize) -> Complex64 {
        let mut q = Complex64::new(0.0, 0.0);
        if let Some(p) = self.profile(weight) {
            if self.dim == 1 {
                let k = xi[0];
                let e = p.even_with(k, order);
                q.re += (self.scale_pos + self.scale_neg) * e;
                let d = self.scale_pos - self.scale_neg;
                if d != 0.0 {
                    q.im += d * p.odd_with(k, order);
                }
            } else {
                let k = norm(xi);
                if k > 0.0 {
                    q.re += self.scale_pos * self.angular(k, |kk| p.even_with(kk, order));
                }
            }
        }
        for a in &self.atoms {
            let s = norm(&a.location);
            let dot: f64 = xi.iter().zip(&a.location).map(|(x, u)| x * u).sum();
            let comp = if s <= 1.0 { dot } else { 0.0 };
            let w = a.mass * weight.value(s);
            q += w * Complex64::new(1.0 - dot.cos(), comp - dot.sin());
        }
        q
    }

    /// Symbol with a refinement check between two panel orders.
    pub fn symbol_checked(&self, xi: &[f64], weight: JumpWeight) -> Result<Complex64, ModelError> {
        let order = self.quadrature.panel_order;
        let a = self.symbol_with(xi, weight, order);
        let b = self.symbol_with(xi, weight, 2 * order);
        let scale = b.norm().max(1e-300);
        if (a - b).norm() > self.quadrature.refine_tol * scale + 1e-14 {
            return Err(ModelError::QuadratureUnresolved {
                context: format!("symbol at xi = {xi:?}"),
                coarse: a.norm(),
                fine: b.norm(),
            });
        }
        Ok(b)
    }

    /// (q^U(ξ), q^L(ξ)).
    pub fn upper_lower(&self, xi: &[f64]) -> (f64, f64) {
        let mut up = 0.0;
        let mut low = 0.0;
        if let Some(p) = self.profile {
            if self.dim == 1 {
                let c = self.scale_pos + self.scale_neg;
                up += c * p.upper(xi[0]);
                low += c * p.lower(xi[0]);
            } else {
                let k = norm(xi);
                if k > 0.0 {
                    up += self.scale_pos * self.angular(k, |kk| p.upper(kk));
                    low += self.scale_pos * self.angular(k, |kk| p.lower(kk));
                }
            }
        }
        for a in &self.atoms {
            let dot: f64 = xi.iter().zip(&a.location).map(|(x, u)| x * u).sum();
            let d2 = dot * dot;
            up += a.mass * d2.min(1.0);
            if dot.abs() <= 1.0 {
                low += a.mass * d2;
            }
        }
        (up, low)
    }

    /// Unit directions used for the supremum/infimum over the sphere.
    pub fn directions(&self) -> Vec<Vec<f64>> {
        if self.dim == 1 {
            vec![vec![1.0], vec![-1.0]]
        } else {
            (0..ANGLES_2D)
                .map(|j| {
                    let th = PI * j as f64 / ANGLES_2D as f64;
                    vec![th.cos(), th.sin()]
                })
                .collect()
        }
    }

    /// q*(r) = sup over directions of q^U(r l).
    pub fn q_star(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        if self.dim == 1 || self.atoms.is_empty() {
            // radial densities are isotropic; in 1D q^U is even in ξ
            return self.upper_lower(&self.direction_scaled(r, 0)).0;
        }
        (0..ANGLES_2D)
            .map(|j| self.upper_lower(&self.direction_scaled(r, j)).0)
            .fold(0.0, f64::max)
    }

    fn direction_scaled(&self, r: f64, j: usize) -> Vec<f64> {
        if self.dim == 1 {
            vec![r]
        } else {
            let th = PI * j as f64 / ANGLES_2D as f64;
            vec![r * th.cos(), r * th.sin()]
        }
    }

    /// ∫ (1 ∧ ‖u‖²) μ(du).
    pub fn levy_integral(&self) -> f64 {
        self.levy_integral_weighted(JumpWeight::Unit)
    }

    /// ∫ (1 ∧ ‖u‖²) h(u) μ(du).
    pub fn levy_integral_weighted(&self, weight: JumpWeight) -> f64 {
        let mut v = 0.0;
        if let Some(p) = self.profile(weight) {
            let ang = self.angular_measure();
            v += ang * (p.moment_from_zero(2.0, 1.0) + p.mass_between(1.0, f64::INFINITY));
        }
        v + self
            .atoms
            .iter()
            .map(|a| a.mass * norm_sq(&a.location).min(1.0) * weight.value(norm(&a.location)))
            .sum::<f64>()
    }

    /// Total scale times the surface measure of the unit sphere.
    fn angular_measure(&self) -> f64 {
        if self.dim == 1 {
            self.scale_pos + self.scale_neg
        } else {
            2.0 * PI * self.scale_pos
        }
    }

    /// μ{‖u‖ > r} with a jump weight.
    pub fn mass_beyond(&self, r: f64, weight: JumpWeight) -> f64 {
        let mut v = 0.0;
        if let Some(p) = self.profile(weight) {
            v += self.angular_measure() * p.mass_between(r, f64::INFINITY);
        }
        v + self
            .atoms
            .iter()
            .filter(|a| norm(&a.location) > r)
            .map(|a| a.mass * weight.value(norm(&a.location)))
            .sum::<f64>()
    }

    /// μ{a < ‖u‖ ≤ b} restricted to the positive (sign=+1) or negative
    /// half-line in 1D; the full annulus in 2D when `sign` is 0.
    pub fn annulus_mass(&self, a: f64, b: f64, sign: i8, weight: JumpWeight) -> f64 {
        let Some(p) = self.profile(weight) else { return 0.0 };
        let c = match (self.dim, sign) {
            (1, 1) => self.scale_pos,
            (1, -1) => self.scale_neg,
            (1, _) => self.scale_pos + self.scale_neg,
            _ => 2.0 * PI * self.scale_pos,
        };
        c * p.mass_between(a, b)
    }

    /// ∫_{‖u‖ ≤ ε} ‖u‖² w(u) ν(du) over the density part.
    pub fn small_jump_second_moment(&self, eps: f64, weight: JumpWeight) -> f64 {
        match self.profile(weight) {
            Some(p) => self.angular_measure() * p.moment_from_zero(2.0, eps),
            None => 0.0,
        }
    }

    /// Weighted density h(‖u‖) ν(u).
    pub fn density_weighted(&self, u: &[f64], weight: JumpWeight) -> f64 {
        self.density_at(u) * weight.value(norm(u))
    }

    /// (∫_{a<‖u‖≤b} ‖u‖^j h ν(du), signed 1D counterpart ∫ sign(u)|u|^j h ν(du)).
    pub fn radial_moment(&self, j: f64, a: f64, b: f64, weight: JumpWeight) -> (f64, f64) {
        let Some(p) = self.profile(weight) else { return (0.0, 0.0) };
        if !(b > a) {
            return (0.0, 0.0);
        }
        let m = p.moment(j, a, b);
        let odd = if self.dim == 1 { (self.scale_pos - self.scale_neg) * m } else { 0.0 };
        (self.angular_measure() * m, odd)
    }

    /// ∫_{a < u ≤ b} u w(u) ν(du) in 1D (signed first moment of the density part).
    pub fn first_moment_1d(&self, a: f64, b: f64, weight: JumpWeight) -> f64 {
        match self.profile(weight) {
            Some(p) if self.dim == 1 => (self.scale_pos - self.scale_neg) * p.moment(1.0, a, b),
            _ => 0.0,
        }
    }
}

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    norm_sq(v).sqrt()
}

#[inline]
pub fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::gamma;

    fn even_constant(alpha: f64) -> f64 {
        if (alpha - 1.0).abs() < 1e-12 {
            PI / 2.0
        } else {
            gamma(1.0 - alpha) * (PI * alpha / 2.0).cos() / alpha
        }
    }

    #[test]
    fn even_integral_matches_gamma_formula() {
        for &alpha in &[0.5, 1.0, 1.3, 1.5, 1.9] {
            let p = RadialProfile::power(alpha);
            for &k in &[1e-3f64, 0.7, 1.0, 3.0, 250.0] {
                let exact = even_constant(alpha) * k.powf(alpha);
                let v = p.even(k);
                assert!((v - exact).abs() < 1e-10 * exact, "alpha {alpha} k {k}: {v} vs {exact}");
            }
        }
    }

    #[test]
    fn odd_integral_of_one_stable_matches_closed_form() {
        // ∫_0^∞ (k s 1{s<=1} - sin ks) s^{-2} ds = k(γ_E - 1 + ln k)
        let p = RadialProfile::power(1.0);
        let euler = 0.577_215_664_901_532_9;
        for &k in &[0.3f64, 1.0, 5.0, 80.0] {
            let exact = k * (euler - 1.0 + k.ln());
            let v = p.odd(k);
            assert!((v - exact).abs() < 1e-9 * (1.0 + exact.abs()), "k {k}: {v} vs {exact}");
        }
    }

    #[test]
    fn upper_lower_closed_forms() {
        for &alpha in &[0.6, 1.0, 1.5] {
            let p = RadialProfile::power(alpha);
            for &r in &[0.5f64, 1.0, 7.0] {
                let up = 2.0 * r.powf(alpha) / (alpha * (2.0 - alpha));
                let lo = r.powf(alpha) / (2.0 - alpha);
                assert!((p.upper(r) - up).abs() < 1e-12 * up);
                assert!((p.lower(r) - lo).abs() < 1e-12 * lo);
            }
        }
    }

    #[test]
    fn truncated_and_tempered_against_direct_quadrature() {
        let trunc = RadialProfile { cutoff: Some(1.0), ..RadialProfile::power(1.2) };
        let temp = RadialProfile { rate: Some(2.0), ..RadialProfile::power(0.8) };
        for p in [trunc, temp] {
            for &k in &[0.4, 3.0, 60.0] {
                // brute-force composite rule on a fine graded grid
                let rule = legendre(20);
                let mut lo: f64 = 1e-9;
                let mut direct = 0.5 * k * k * lo.powf(2.0 - p.alpha) / (2.0 - p.alpha);
                while lo < 80.0 {
                    let mut hi = (lo * 1.05).min(lo + 0.01);
                    if lo < 1.0 && hi > 1.0 {
                        hi = 1.0;
                    }
                    direct += rule.integrate(lo, hi, |s| (2.0 * (0.5 * k * s).sin().powi(2)) * p.density(s));
                    lo = hi;
                }
                let v = p.even(k);
                assert!((v - direct).abs() < 1e-7 * direct, "{p:?} k {k}: {v} vs {direct}");
            }
        }
    }

    #[test]
    fn capped_square_weight_even_integral() {
        let p = RadialProfile::power(1.0).with_weight(JumpWeight::CappedSquare);
        let rule = legendre(20);
        let k = 2.5;
        let mut direct = 0.0;
        let mut lo: f64 = 1e-9;
        while lo < 400.0 {
            let hi = (lo * 1.05).min(lo + 0.01);
            direct += rule.integrate(lo, hi, |s| (2.0 * (0.5 * k * s).sin().powi(2)) * p.density(s));
            lo = hi;
        }
        // remaining tail ∫_400^∞ (1 - cos) s^{-2}: mean part 1/400, oscillation tiny
        direct += 1.0 / 400.0;
        let v = p.even(k);
        assert!((v - direct).abs() < 1e-5 * direct, "{v} vs {direct}");
    }

    #[test]
    fn one_stable_symbol_is_pi_abs_xi() {
        let mu = LevyBaseMeasure::stable(1, 1.0, 1.0).unwrap();
        for &xi in &[-3.0, -0.2, 0.0, 1.0, 17.0] {
            let q = mu.symbol_checked(&[xi], JumpWeight::Unit).unwrap();
            assert!((q.re - PI * f64::abs(xi)).abs() < 1e-10 * (1.0 + xi.abs()));
            assert_eq!(q.im, 0.0);
        }
        let (u, l) = mu.upper_lower(&[1.0]);
        assert!((u - 4.0).abs() < 1e-12 && (l - 2.0).abs() < 1e-12);
        assert!((mu.q_star(2.5) - 10.0).abs() < 1e-11);
    }

    #[test]
    fn two_dimensional_stable_constant() {
        // ∫_{ℝ²} (1 - cos ξ·u) ‖u‖^{-3} du = 2π |ξ| for α = 1
        let mu = LevyBaseMeasure::stable(2, 1.0, 1.0).unwrap();
        let q = mu.symbol(&[0.6, 0.8], JumpWeight::Unit);
        assert!((q.re - 2.0 * PI).abs() < 1e-8, "{}", q.re);
    }

    #[test]
    fn atoms_give_bounded_upper_symbol() {
        let atoms = vec![
            Atom { location: vec![1.0], mass: 1.0 },
            Atom { location: vec![-1.0], mass: 1.0 },
        ];
        let mu = LevyBaseMeasure::new(1, DensitySpec::None, atoms, QuadratureSpec::default()).unwrap();
        for &r in &[0.3, 1.0, 50.0] {
            assert!((mu.q_star(r) - 2.0 * (r * r).min(1.0)).abs() < 1e-15);
        }
        assert!(mu.is_symmetric());
        assert_eq!(mu.upper_lower(&[3.0]).1, 0.0);
    }

    #[test]
    fn skewed_density_has_imaginary_symbol() {
        let mu = LevyBaseMeasure::new(
            1,
            DensitySpec::PowerLaw { alpha: 1.5, scale: 1.0, skew: 0.5 },
            vec![],
            QuadratureSpec::default(),
        )
        .unwrap();
        assert!(!mu.is_symmetric());
        let q = mu.symbol(&[2.0], JumpWeight::Unit);
        let qm = mu.symbol(&[-2.0], JumpWeight::Unit);
        assert!(q.im.abs() > 1e-3);
        assert!((q.conj() - qm).norm() < 1e-10);
    }
}
