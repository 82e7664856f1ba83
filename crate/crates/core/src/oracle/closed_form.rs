//! Reference densities of rotation-invariant stable laws: closed forms for
//! α = 1 and non-FFT Fourier quadrature otherwise.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

use crate::error::OracleError;
use crate::model::norm;
use crate::quadrature::{geometric_panels, legendre};

/// Exponent decay e^{-tψ} below which the Fourier integrand is dropped.
const CUTOFF_EXPONENT: f64 = 40.0;

/// ψ(ξ) = C_{n,α} scale |ξ|^α for the Lévy density scale·‖u‖^{−n−α},
/// with C_{n,α} = π^{n/2} |Γ(−α/2)| / (2^α Γ((n+α)/2)).
pub fn stable_symbol_constant(dim: usize, alpha: f64) -> f64 {
    let n = dim as f64;
    PI.powf(0.5 * n) * gamma(-0.5 * alpha).abs() / (2f64.powf(alpha) * gamma(0.5 * (n + alpha)))
}

/// Closed-form stable density at displacement x; α = 1 only.
pub fn closed_form_stable(alpha: f64, scale: f64, t: f64, x: &[f64]) -> Result<f64, OracleError> {
    if (alpha - 1.0).abs() > 1e-15 {
        return Err(OracleError::UnsupportedAlpha(alpha));
    }
    check_args(scale, t, x)?;
    let gamma_t = stable_symbol_constant(x.len(), 1.0) * scale * t;
    let r2 = x.iter().map(|v| v * v).sum::<f64>();
    Ok(match x.len() {
        1 => gamma_t / (PI * (gamma_t * gamma_t + r2)),
        _ => gamma_t / (2.0 * PI * (gamma_t * gamma_t + r2).powf(1.5)),
    })
}

fn check_args(scale: f64, t: f64, x: &[f64]) -> Result<(), OracleError> {
    if !(scale > 0.0 && t > 0.0) || !(1..=2).contains(&x.len()) {
        return Err(OracleError::Invalid(format!("need scale > 0, t > 0 and dimension 1 or 2, got {scale}, {t}, {}", x.len())));
    }
    Ok(())
}

/// Stable density by closed form when available, else by quadrature of
/// the inverse Fourier (1D) or Hankel (2D) transform.
pub fn stable_density(alpha: f64, scale: f64, t: f64, x: &[f64]) -> Result<f64, OracleError> {
    match closed_form_stable(alpha, scale, t, x) {
        Ok(v) => Ok(v),
        Err(OracleError::UnsupportedAlpha(_)) => fourier_stable_density(alpha, scale, t, x),
        Err(e) => Err(e),
    }
}

/// Inverse transform of e^{−t C scale |ξ|^α} by Gauss–Legendre panels.
pub fn fourier_stable_density(alpha: f64, scale: f64, t: f64, x: &[f64]) -> Result<f64, OracleError> {
    check_args(scale, t, x)?;
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(OracleError::Invalid(format!("alpha {alpha} not in (0, 2)")));
    }
    let c = stable_symbol_constant(x.len(), alpha) * scale * t;
    let xi_max = (CUTOFF_EXPONENT / c).powf(1.0 / alpha);
    let r = norm(x);
    // resolve both the decay scale and the oscillation period
    let width = (xi_max / 64.0).min(if r > 0.0 { 0.5 * PI / r } else { f64::INFINITY });
    let rule = legendre(16);
    let mut panels = vec![(0.0, xi_max * 1e-12)];
    panels.extend(geometric_panels(xi_max * 1e-12, xi_max, 2.0, width, &[]));
    let decay = |k: f64| (-c * k.powf(alpha)).exp();
    let value = if x.len() == 1 {
        let integral: f64 = panels.iter().map(|&(a, b)| rule.integrate(a, b, |k| (r * k).cos() * decay(k))).sum();
        integral / PI
    } else {
        let integral: f64 =
            panels.iter().map(|&(a, b)| rule.integrate(a, b, |k| bessel_j0(r * k) * decay(k) * k)).sum();
        integral / (2.0 * PI)
    };
    Ok(value)
}

/// J₀(z) = (1/π) ∫_0^π cos(z sin θ) dθ.
fn bessel_j0(z: f64) -> f64 {
    let panels = (z.abs() / 4.0).ceil().max(1.0) as usize;
    let rule = legendre(16);
    let step = PI / panels as f64;
    (0..panels).map(|j| rule.integrate(j as f64 * step, (j + 1) as f64 * step, |th| (z * th.sin()).cos())).sum::<f64>()
        / PI
}

/// Cauchy density wrapped onto the circle of length 2R:
/// Σ_k γ/(π(γ² + (x + 2Rk)²)) = sinh(πγ/R) / (2R (cosh(πγ/R) − cos(πx/R))).
pub fn wrapped_cauchy(scale: f64, t: f64, x: f64, half_width: f64) -> f64 {
    let gamma_t = PI * scale * t;
    let a = PI * gamma_t / half_width;
    let b = PI * x / half_width;
    a.sinh() / (2.0 * half_width * (a.cosh() - b.cos()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cauchy_examples() {
        assert!((closed_form_stable(1.0, 1.0, 1.0, &[0.0]).unwrap() - 1.0 / (PI * PI)).abs() < 1e-15);
        assert!((closed_form_stable(1.0, 1.0, 1.0, &[PI]).unwrap() - 0.5 / (PI * PI)).abs() < 1e-15);
        let a = closed_form_stable(1.0, 1.0, 0.3, &[0.7]).unwrap();
        let b = closed_form_stable(1.0, 1.0, 0.3, &[-0.7]).unwrap();
        assert_eq!(a, b);
        assert_eq!(closed_form_stable(1.5, 1.0, 1.0, &[0.0]).unwrap_err().code(), "UNSUPPORTED_ALPHA");
    }

    #[test]
    fn symbol_constants() {
        assert!((stable_symbol_constant(1, 1.0) - PI).abs() < 1e-12);
        assert!((stable_symbol_constant(2, 1.0) - 2.0 * PI).abs() < 1e-12);
        // −2Γ(−α)cos(πα/2) in one dimension
        let one_d = -2.0 * gamma(-1.5) * (0.75 * PI).cos();
        assert!((stable_symbol_constant(1, 1.5) - one_d).abs() < 1e-12);
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        for &x in &[0.0, 0.4, 3.0, 20.0] {
            let exact = closed_form_stable(1.0, 1.0, 0.5, &[x]).unwrap();
            let quad = fourier_stable_density(1.0, 1.0, 0.5, &[x]).unwrap();
            assert!((quad - exact).abs() < 1e-9 * exact.max(1e-3), "x = {x}: {quad} vs {exact}");
        }
        for &r in &[0.0, 0.5, 2.0] {
            let exact = closed_form_stable(1.0, 1.0, 0.5, &[r, 0.0]).unwrap();
            let quad = fourier_stable_density(1.0, 1.0, 0.5, &[0.0, r]).unwrap();
            assert!((quad - exact).abs() < 1e-8 * exact.max(1e-3), "r = {r}: {quad} vs {exact}");
        }
    }

    #[test]
    fn gaussian_limit_and_origin_value() {
        // p_t(0) = Γ(1 + 1/α) / (π (tC)^{1/α}) in one dimension
        let alpha = 1.5;
        let c = stable_symbol_constant(1, alpha);
        let exact = gamma(1.0 + 1.0 / alpha) / (PI * c.powf(1.0 / alpha));
        let quad = stable_density(alpha, 1.0, 1.0, &[0.0]).unwrap();
        assert!((quad - exact).abs() < 1e-10, "{quad} vs {exact}");
    }

    #[test]
    fn wrapped_sum_matches_images() {
        let (t, r) = (0.5, 4.0);
        for &x in &[0.0, 1.3, -3.9] {
            let images: f64 =
                (-20000..=20000).map(|k| closed_form_stable(1.0, 1.0, t, &[x + 2.0 * r * k as f64]).unwrap()).sum();
            assert!((wrapped_cauchy(1.0, t, x, r) - images).abs() < 1e-6);
        }
    }
}
