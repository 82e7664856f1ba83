//! Kato and Dynkin class membership of a finite measure ϖ with respect to
//! p(t,x,y): criterion tests through U(r) and direct evaluation of the
//! time-integrated kernel.
//!
//! The Kato verdict uses the ball-mass form of the criterion,
//! sup_x ∫_0^δ ϖ(B(x,r))/(r^{n+1} q*(1/r)) dr, which equals
//! sup_x ∫_{B(x,δ)} (U(‖x−y‖) − U(δ)) ϖ(dy). The uncompensated potential
//! integral is reported alongside; on a centred atom with U(0) finite it
//! tends to U(0)·ϖ({x}) instead of zero.

mod criteria;
mod direct;
mod measure;
mod potential;

pub use criteria::{
    criterion_alt, default_delta_ladder, default_radius_ladder, default_x_samples, dynkin_criterion, kato_criterion,
    sufficient_condition_check, DynkinResult, Finiteness, KatoCriterion, SufficientCheck, DIVERGENCE_FACTOR,
    KATO_TOLERANCE, SUFFICIENT_MARGIN,
};
pub use direct::{direct_class_check, DirectReport, HEAD_DIVERGENCE, MAX_FIRST_TIME, VANISHING_SLOPE};
pub use measure::{DensityPart, MeasureAtom, MeasureSpec};
pub use potential::{lhopital_ratios, u_derivative, u_potential, PotentialSummary, UPotential};

use serde::{Deserialize, Serialize};

use crate::model::ScaleProfile;

/// Class membership verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClassVerdict {
    InSk,
    InSdOnly,
    Out,
    Inconclusive,
}

impl ClassVerdict {
    /// Membership in the Dynkin class.
    pub fn in_dynkin(self) -> bool {
        matches!(self, ClassVerdict::InSk | ClassVerdict::InSdOnly)
    }

    pub fn label(self) -> &'static str {
        match self {
            ClassVerdict::InSk => "IN_SK",
            ClassVerdict::InSdOnly => "IN_SD_ONLY",
            ClassVerdict::Out => "OUT",
            ClassVerdict::Inconclusive => "INCONCLUSIVE",
        }
    }
}

/// Combine the Dynkin and Kato criterion outcomes.
pub fn criterion_verdict(dynkin: &DynkinResult, kato: &KatoCriterion) -> ClassVerdict {
    match (dynkin.verdict, kato.vanishing) {
        (Finiteness::Divergent, false) => ClassVerdict::Out,
        (Finiteness::Divergent, true) => ClassVerdict::Inconclusive,
        (Finiteness::Finite, true) => ClassVerdict::InSk,
        (Finiteness::Finite, false) => ClassVerdict::InSdOnly,
    }
}

/// Everything computed for one measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KatoReport {
    pub label: String,
    pub alpha: f64,
    pub potential: PotentialSummary,
    pub total_mass: f64,
    pub dynkin: DynkinResult,
    pub kato: KatoCriterion,
    /// sup_x of the alternative-form Dynkin integral.
    pub alt_value: f64,
    /// alt_value / dynkin.value.
    pub alt_ratio: f64,
    pub sufficient: SufficientCheck,
    pub criterion_verdict: ClassVerdict,
    pub direct: Option<DirectReport>,
    /// Criterion and direct verdicts coincide (true when no direct check ran).
    pub agree: bool,
}

impl KatoReport {
    /// Rows (delta, value, potential_value) of the Kato ladder.
    pub fn delta_rows(&self) -> Vec<[f64; 3]> {
        self.kato
            .deltas
            .iter()
            .zip(&self.kato.values)
            .zip(&self.kato.potential_values)
            .map(|((d, v), u)| [*d, *v, *u])
            .collect()
    }

    /// Rows (t, sup integral, cutoff integral) of the direct ladder.
    pub fn time_rows(&self) -> Vec<[f64; 3]> {
        self.direct
            .as_ref()
            .map(|d| {
                d.times
                    .iter()
                    .zip(&d.sup_integrals)
                    .zip(&d.cutoff_integrals)
                    .map(|((t, v), c)| [*t, *v, *c])
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// Run every criterion on ϖ and merge with an optional direct report.
pub fn assess_measure(
    label: &str,
    profile: &ScaleProfile,
    potential: &UPotential,
    measure: &MeasureSpec,
    x_samples: &[Vec<f64>],
    direct: Option<DirectReport>,
) -> KatoReport {
    let dynkin = dynkin_criterion(potential, measure, x_samples);
    let kato = kato_criterion(potential, measure, x_samples, &default_delta_ladder());
    let alt_value = criterion_alt(potential, measure, x_samples).into_iter().fold(0.0, f64::max);
    let both_equal = alt_value == dynkin.value && (alt_value == 0.0 || alt_value.is_infinite());
    let alt_ratio = if both_equal { 1.0 } else { alt_value / dynkin.value };
    let sufficient =
        sufficient_condition_check(measure, x_samples, &default_radius_ladder(), profile.alpha(), measure.dim);
    let criterion_verdict = criterion_verdict(&dynkin, &kato);
    let agree = direct.as_ref().map_or(true, |d| d.verdict == criterion_verdict);
    KatoReport {
        label: label.to_string(),
        alpha: profile.alpha(),
        potential: potential.summary(),
        total_mass: measure.total_mass(),
        dynkin,
        kato,
        alt_value,
        alt_ratio,
        sufficient,
        criterion_verdict,
        direct,
        agree,
    }
}
