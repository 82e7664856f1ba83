//! Criterion-based membership tests built on U(r) and the ball-mass
//! function r ↦ ϖ{y : ‖x − y‖ ≤ r}.

use serde::{Deserialize, Serialize};

use super::measure::{distance, MeasureSpec};
use super::potential::UPotential;
use crate::quadrature::{geometric_panels, legendre};
use crate::stats::loglog_slope;

/// Inner radius of the r-quadrature; the rest is a closed-form head.
const INNER_RADIUS: f64 = 1e-15;
/// Inner cutoffs of the Dynkin refinement ladder: 10^{−2^k}.
const CUTOFF_LEVELS: usize = 9;
/// A ladder whose maximum exceeds this multiple of its median diverges.
pub const DIVERGENCE_FACTOR: f64 = 10.0;
/// Relative level below which the Kato values count as vanished.
pub const KATO_TOLERANCE: f64 = 1e-3;
/// Margin required of d̂ over n − α.
pub const SUFFICIENT_MARGIN: f64 = 0.05;

/// Outcome of a refinement-ladder finiteness test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Finiteness {
    Finite,
    Divergent,
}

/// sup_x ∫_{‖y−x‖≤1} U(‖y−x‖) ϖ(dy) with its refinement ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynkinResult {
    /// Supremum with no inner cutoff (U(0) on centred atoms).
    pub value: f64,
    pub argmax: Vec<f64>,
    /// Inner cutoffs ε of the ladder, decreasing.
    pub cutoffs: Vec<f64>,
    /// Supremum of ∫ U(max(‖y−x‖, ε)) ϖ(dy) per cutoff.
    pub ladder: Vec<f64>,
    pub verdict: Finiteness,
}

/// Kato criterion values along a δ-ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KatoCriterion {
    pub deltas: Vec<f64>,
    /// sup_x ∫_0^δ ϖ(B(x,r)) / (r^{n+1} q*(1/r)) dr, which equals
    /// sup_x ∫_{B(x,δ)} (U(‖x−y‖) − U(δ)) ϖ(dy).
    pub values: Vec<f64>,
    /// sup_x ∫_{B(x,δ)} U(‖x−y‖) ϖ(dy) with U(0) on centred atoms.
    pub potential_values: Vec<f64>,
    /// Log-log slope of the values against δ.
    pub slope: f64,
    pub tolerance: f64,
    pub vanishing: bool,
}

/// Power-law growth of the sup-x ball mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficientCheck {
    pub radii: Vec<f64>,
    pub sup_ball_mass: Vec<f64>,
    pub d_hat: f64,
    /// n − α.
    pub threshold: f64,
    pub holds: bool,
}

/// Atom locations, a uniform grid over the support hull padded by 1 and the
/// density-part interval endpoints down to five levels.
pub fn default_x_samples(measure: &MeasureSpec) -> Vec<Vec<f64>> {
    let mut samples: Vec<Vec<f64>> = measure.atoms.iter().map(|a| a.location.clone()).collect();
    let Some(hull) = measure.support_hull() else {
        samples.push(vec![0.0; measure.dim]);
        return samples;
    };
    let per_axis = if measure.dim == 1 { 201 } else { 41 };
    let axis = |d: usize| -> Vec<f64> {
        let (lo, hi) = (hull[d].0 - 1.0, hull[d].1 + 1.0);
        (0..per_axis).map(|k| lo + (hi - lo) * k as f64 / (per_axis - 1) as f64).collect()
    };
    if measure.dim == 1 {
        samples.extend(axis(0).into_iter().map(|v| vec![v]));
        samples.extend(measure.density_nodes(5).into_iter().map(|v| vec![v]));
    } else {
        let (a0, a1) = (axis(0), axis(1));
        for &u in &a0 {
            for &v in &a1 {
                samples.push(vec![u, v]);
            }
        }
    }
    samples
}

/// Default δ-ladder 10^{−k/2}, k = 0..=16.
pub fn default_delta_ladder() -> Vec<f64> {
    (0..=16).map(|k| 10f64.powf(-0.5 * k as f64)).collect()
}

/// Default radii for the sufficient-condition regression: 3^{−j}, j = 2..=12,
/// a fixed phase of the log-periodic ball mass of ternary self-similar sets.
pub fn default_radius_ladder() -> Vec<f64> {
    (2..=12).map(|j| 3f64.powi(-j)).collect()
}

/// ∫_{‖y−x‖≤radius} U(max(‖y−x‖, eps)) ϖ(dy).
fn potential_integral(potential: &UPotential, measure: &MeasureSpec, x: &[f64], radius: f64, eps: f64) -> f64 {
    let mut total = 0.0;
    for a in &measure.atoms {
        let d = distance(&a.location, x);
        if d <= radius {
            total += a.mass * potential.value(d.max(eps));
        }
    }
    if measure.dim == 1 {
        total += measure.integrate_density(x[0], radius, &|z| potential.value(z.max(eps)));
    }
    total
}

/// ∫_0^δ ϖ(B(x,r)) (−U'(r)) dr at every δ of an increasing ladder.
fn alternative_form_integrals(potential: &UPotential, measure: &MeasureSpec, x: &[f64], deltas: &[f64]) -> Vec<f64> {
    let top = deltas.iter().copied().fold(0.0, f64::max).min(1.0);
    // atoms inside the inner radius see U(0) − U(r₀); the density part is
    // at most linear in r there and contributes O(r₀ · rate(r₀))
    let atom_head: f64 =
        measure.atoms.iter().filter(|a| distance(&a.location, x) <= INNER_RADIUS).map(|a| a.mass).sum();
    let density_head = measure.ball_mass(x, INNER_RADIUS) - atom_head;
    let mut head = density_head * INNER_RADIUS * potential.rate(INNER_RADIUS);
    if atom_head > 0.0 {
        head += atom_head * (potential.at_zero() - potential.value(INNER_RADIUS));
    }
    let mut breaks: Vec<f64> = deltas.to_vec();
    breaks.extend(measure.breakpoints(x));
    let rule = legendre(8);
    let panels = geometric_panels(INNER_RADIUS, top, 1.5, 0.05, &breaks);
    let mut sorted: Vec<(usize, f64)> = deltas.iter().copied().enumerate().collect();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut out = vec![0.0; deltas.len()];
    let mut acc = head;
    let mut next = 0;
    for &(a, b) in &panels {
        while next < sorted.len() && sorted[next].1 <= a * (1.0 + 1e-12) {
            out[sorted[next].0] = acc;
            next += 1;
        }
        acc += rule.integrate(a, b, |r| measure.ball_mass(x, r) * potential.rate(r));
    }
    for &(i, _) in &sorted[next..] {
        out[i] = acc;
    }
    out
}

fn sup_with_arg(values: impl Iterator<Item = (f64, Vec<f64>)>) -> (f64, Vec<f64>) {
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for (v, x) in values {
        if v > best.0 || v.is_nan() {
            best = (v, x);
            if v.is_nan() {
                break;
            }
        }
    }
    best
}

fn divergence_verdict(ladder: &[f64]) -> Finiteness {
    if ladder.iter().any(|v| !v.is_finite()) {
        return Finiteness::Divergent;
    }
    let mut sorted = ladder.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let max = *sorted.last().expect("ladder is nonempty");
    if max > DIVERGENCE_FACTOR * median && max > 0.0 {
        Finiteness::Divergent
    } else {
        Finiteness::Finite
    }
}

/// Dynkin criterion: supremum over the samples of ∫_{‖y−x‖≤1} U dϖ, with
/// a refinement ladder of inner cutoffs deciding finiteness.
pub fn dynkin_criterion(potential: &UPotential, measure: &MeasureSpec, x_samples: &[Vec<f64>]) -> DynkinResult {
    let cutoffs: Vec<f64> = (0..CUTOFF_LEVELS).map(|k| 10f64.powi(-(1 << k))).collect();
    let ladder: Vec<f64> = cutoffs
        .iter()
        .map(|&eps| {
            x_samples.iter().map(|x| potential_integral(potential, measure, x, 1.0, eps)).fold(0.0, f64::max)
        })
        .collect();
    let (value, argmax) =
        sup_with_arg(x_samples.iter().map(|x| (potential_integral(potential, measure, x, 1.0, 0.0), x.clone())));
    let verdict = divergence_verdict(&ladder);
    DynkinResult { value: value.max(0.0), argmax, cutoffs, ladder, verdict }
}

/// Kato criterion along a δ-ladder; vanishing when the last value falls
/// below `KATO_TOLERANCE` times the first.
pub fn kato_criterion(
    potential: &UPotential,
    measure: &MeasureSpec,
    x_samples: &[Vec<f64>],
    deltas: &[f64],
) -> KatoCriterion {
    let per_x: Vec<Vec<f64>> = x_samples.iter().map(|x| alternative_form_integrals(potential, measure, x, deltas)).collect();
    let values: Vec<f64> = (0..deltas.len()).map(|j| per_x.iter().map(|v| v[j]).fold(0.0, f64::max)).collect();
    let potential_values: Vec<f64> = deltas
        .iter()
        .map(|&d| {
            x_samples.iter().map(|x| potential_integral(potential, measure, x, d, 0.0)).fold(0.0, f64::max)
        })
        .collect();
    let slope = loglog_slope(deltas, &values);
    let (first, last) = smallest_and_largest_delta(deltas, &values);
    let vanishing = values.iter().all(|v| v.is_finite()) && (last == 0.0 || last <= KATO_TOLERANCE * first);
    KatoCriterion { deltas: deltas.to_vec(), values, potential_values, slope, tolerance: KATO_TOLERANCE, vanishing }
}

/// Values at the largest and the smallest δ.
fn smallest_and_largest_delta(deltas: &[f64], values: &[f64]) -> (f64, f64) {
    let imax = (0..deltas.len()).max_by(|&a, &b| deltas[a].total_cmp(&deltas[b])).unwrap_or(0);
    let imin = (0..deltas.len()).min_by(|&a, &b| deltas[a].total_cmp(&deltas[b])).unwrap_or(0);
    (values.get(imax).copied().unwrap_or(0.0), values.get(imin).copied().unwrap_or(0.0))
}

/// ∫_0^1 ϖ(B(x,r)) / (r^{n+1} q*(1/r)) dr per sample point.
pub fn criterion_alt(potential: &UPotential, measure: &MeasureSpec, x_samples: &[Vec<f64>]) -> Vec<f64> {
    x_samples.iter().map(|x| alternative_form_integrals(potential, measure, x, &[1.0])[0]).collect()
}

/// Log-log regression of sup_x ϖ(B(x,r)) against r, with the density-part
/// interval endpoints down to the smallest radius added to the samples.
pub fn sufficient_condition_check(
    measure: &MeasureSpec,
    x_samples: &[Vec<f64>],
    radii: &[f64],
    alpha: f64,
    dim: usize,
) -> SufficientCheck {
    // self-similar parts concentrate at interval endpoints on every scale
    let r_min = radii.iter().copied().fold(1.0, f64::min);
    let depth = (r_min.recip().ln() / 3f64.ln()).ceil().max(0.0) as usize + 1;
    let mut samples = x_samples.to_vec();
    if measure.dim == 1 {
        samples.extend(measure.density_nodes(depth).into_iter().map(|v| vec![v]));
    }
    let sup_ball_mass: Vec<f64> =
        radii.iter().map(|&r| samples.iter().map(|x| measure.ball_mass(x, r)).fold(0.0, f64::max)).collect();
    let threshold = dim as f64 - alpha;
    let all_zero = sup_ball_mass.iter().all(|&m| m == 0.0);
    let d_hat = if all_zero { f64::INFINITY } else { loglog_slope(radii, &sup_ball_mass) };
    let holds = d_hat > threshold + SUFFICIENT_MARGIN;
    SufficientCheck { radii: radii.to_vec(), sup_ball_mass, d_hat, threshold, holds }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LevyTypeModel, ProfileConfig, ScaleProfile};

    fn potential(alpha: f64) -> UPotential {
        let p = ScaleProfile::build(&LevyTypeModel::stable(1, alpha, 1.0).unwrap(), ProfileConfig::default()).unwrap();
        UPotential::new(&p)
    }

    #[test]
    fn dirac_dynkin_values() {
        let m = MeasureSpec::dirac(vec![0.0]);
        let xs = default_x_samples(&m);
        let bounded = dynkin_criterion(&potential(1.5), &m, &xs);
        assert!((bounded.value - 0.375).abs() < 1e-4);
        assert_eq!(bounded.verdict, Finiteness::Finite);
        let log = dynkin_criterion(&potential(1.0), &m, &xs);
        assert_eq!(log.verdict, Finiteness::Divergent);
        assert!(log.ladder.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn lebesgue_is_dynkin_and_kato() {
        let m = MeasureSpec::lebesgue(-1.0, 1.0);
        let xs = default_x_samples(&m);
        for alpha in [1.0, 1.5] {
            let u = potential(alpha);
            assert_eq!(dynkin_criterion(&u, &m, &xs).verdict, Finiteness::Finite);
            let k = kato_criterion(&u, &m, &xs, &default_delta_ladder());
            assert!(k.vanishing, "alpha {alpha}: {:?}", k.values);
        }
        // ∫_0^δ 2r / (4r) dr = δ/2 for the Cauchy potential
        let k = kato_criterion(&potential(1.0), &m, &xs, &[0.1, 0.01]);
        assert!((k.values[0] - 0.05).abs() < 1e-6 && (k.values[1] - 0.005).abs() < 1e-7, "{:?}", k.values);
        assert!((k.slope - 1.0).abs() < 1e-3);
    }

    #[test]
    fn centred_atom_alternative_form_vanishes() {
        let m = MeasureSpec::dirac(vec![0.0]);
        let xs = default_x_samples(&m);
        let k = kato_criterion(&potential(1.5), &m, &xs, &default_delta_ladder());
        for (d, v) in k.deltas.iter().zip(&k.values) {
            assert!((v - 0.375 * d.sqrt()).abs() < 1e-6, "delta {d}: {v}");
        }
        assert!(k.potential_values.iter().all(|v| (v - 0.375).abs() < 1e-4));
        assert!(k.vanishing);
        let cauchy = kato_criterion(&potential(1.0), &m, &xs, &default_delta_ladder());
        assert!(!cauchy.vanishing);
    }

    #[test]
    fn zero_measure_is_trivial() {
        let m = MeasureSpec::zero(1);
        let xs = default_x_samples(&m);
        let u = potential(1.0);
        assert_eq!(dynkin_criterion(&u, &m, &xs).value, 0.0);
        assert!(kato_criterion(&u, &m, &xs, &default_delta_ladder()).vanishing);
        assert!(criterion_alt(&u, &m, &xs).iter().all(|&v| v == 0.0));
        assert!(sufficient_condition_check(&m, &xs, &default_radius_ladder(), 1.0, 1).holds);
    }

    #[test]
    fn alternative_form_matches_dynkin() {
        for m in [MeasureSpec::dirac(vec![0.0]), MeasureSpec::lebesgue(-1.0, 1.0), MeasureSpec::cantor(0.0, 1.0, 20)]
        {
            let xs = default_x_samples(&m);
            let u = potential(1.5);
            let alt = criterion_alt(&u, &m, &xs).into_iter().fold(0.0, f64::max);
            let dynkin = dynkin_criterion(&u, &m, &xs).value;
            let ratio = alt / dynkin;
            assert!((ratio - 1.0).abs() < 1e-3, "{m:?}: {alt} vs {dynkin}");
        }
    }

    #[test]
    fn growth_exponents() {
        let radii = default_radius_ladder();
        let leb = MeasureSpec::lebesgue(-1.0, 1.0);
        let d = sufficient_condition_check(&leb, &default_x_samples(&leb), &radii, 1.0, 1);
        assert!((d.d_hat - 1.0).abs() < 1e-9 && d.holds);
        let dirac = MeasureSpec::dirac(vec![0.0]);
        let d = sufficient_condition_check(&dirac, &default_x_samples(&dirac), &radii, 1.0, 1);
        assert!(d.d_hat.abs() < 1e-12 && !d.holds);
        let cantor = MeasureSpec::cantor(0.0, 1.0, 20);
        let d = sufficient_condition_check(&cantor, &default_x_samples(&cantor), &radii, 1.0, 1);
        assert!((d.d_hat - 2f64.ln() / 3f64.ln()).abs() < 0.005, "{}", d.d_hat);
    }
}
