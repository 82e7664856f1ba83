//! Euler simulation of the Lévy-type process: drift, compensated Gaussian
//! small jumps and a thinned compound-Poisson sampler for jumps ‖u‖ > ε.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::OracleError;
use crate::model::{norm, DensitySpec, LevyTypeModel};

/// Largest admissible expected number of proposed jumps per step.
pub const MAX_RATE_STEP: f64 = 0.1;
/// Jumps up to this norm are compensated.
const COMPENSATION_RADIUS: f64 = 1.0;

/// Simulation controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Small-jump cutoff ε.
    pub epsilon: f64,
    /// Euler step; `None` picks the largest step with rate·dt ≤ 0.1.
    #[serde(default)]
    pub dt: Option<f64>,
    pub seed: u64,
    /// Worker threads; `None` uses the available parallelism. Results do
    /// not depend on it.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl SimulationConfig {
    pub fn new(epsilon: f64, seed: u64) -> Self {
        Self { epsilon, dt: None, seed, threads: None }
    }
}

/// Terminal positions of independent paths at the requested times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub dim: usize,
    pub n_paths: usize,
    pub x0: Vec<f64>,
    pub times: Vec<f64>,
    /// positions[time][path · dim + axis].
    pub positions: Vec<Vec<f64>>,
    pub epsilon: f64,
    pub dt: f64,
    /// Euler steps to the last time.
    pub steps: usize,
    pub seed: u64,
    /// Dominating jump intensity of the thinning sampler.
    pub proposal_rate: f64,
}

impl PathEnsemble {
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-12 * t.max(1.0))
    }

    /// Terminal positions at time index `ti`, `dim` entries per path.
    pub fn positions_at(&self, ti: usize) -> &[f64] {
        &self.positions[ti]
    }
}

/// Radial proposal law c·s^{−1−α} on (ε, K) with an acceptance factor for
/// exponential tempering.
#[derive(Debug, Clone, Copy)]
struct JumpProposal {
    alpha: f64,
    lo_pow: f64,
    hi_pow: f64,
    temper: f64,
    positive_share: f64,
    rate: f64,
}

impl JumpProposal {
    fn new(model: &LevyTypeModel, epsilon: f64) -> Option<Self> {
        let (alpha, cutoff, temper) = match *model.base().density_spec() {
            DensitySpec::None => return None,
            DensitySpec::PowerLaw { alpha, .. } => (alpha, f64::INFINITY, 0.0),
            DensitySpec::TruncatedPowerLaw { alpha, cutoff, .. } => (alpha, cutoff, 0.0),
            DensitySpec::TemperedPowerLaw { alpha, rate, .. } => (alpha, f64::INFINITY, rate),
        };
        if cutoff <= epsilon {
            return None;
        }
        let (pos, neg) = model.base().scales();
        let angular = if model.dim() == 1 { pos + neg } else { 2.0 * PI * pos };
        let lo_pow = epsilon.powf(-alpha);
        let hi_pow = cutoff.powf(-alpha);
        Some(Self {
            alpha,
            lo_pow,
            hi_pow,
            temper,
            positive_share: pos / (pos + neg),
            rate: angular * (lo_pow - hi_pow) / alpha,
        })
    }

    /// Draw a jump and its tempering acceptance factor.
    fn sample<R: Rng>(&self, dim: usize, rng: &mut R) -> ([f64; 2], f64) {
        let v: f64 = rng.gen();
        let s = (self.lo_pow - v * (self.lo_pow - self.hi_pow)).powf(-1.0 / self.alpha);
        let accept = if self.temper > 0.0 { (-self.temper * s).exp() } else { 1.0 };
        let jump = if dim == 1 {
            let sign = if rng.gen::<f64>() < self.positive_share { 1.0 } else { -1.0 };
            [sign * s, 0.0]
        } else {
            let theta = 2.0 * PI * rng.gen::<f64>();
            [s * theta.cos(), s * theta.sin()]
        };
        (jump, accept)
    }
}

/// Per-state coefficients of one Euler step.
struct StepLaw<'a> {
    model: &'a LevyTypeModel,
    dim: usize,
    bound: f64,
    proposal: Option<JumpProposal>,
    /// Atoms with ‖u‖ > ε: (location, mass).
    big_atoms: Vec<([f64; 2], f64)>,
    atom_rate: f64,
    /// Per modulation term: second moment of the density part on ‖u‖ ≤ ε.
    small_moments: Vec<f64>,
    /// Per modulation term: signed 1D first moment on ε < |u| ≤ 1.
    mid_moments: Vec<f64>,
}

impl<'a> StepLaw<'a> {
    fn new(model: &'a LevyTypeModel, epsilon: f64) -> Self {
        let base = model.base();
        let terms = &model.modulation().terms;
        let big_atoms = base
            .atoms()
            .iter()
            .filter(|a| norm(&a.location) > epsilon)
            .map(|a| {
                let mut loc = [0.0; 2];
                loc[..a.location.len()].copy_from_slice(&a.location);
                (loc, a.mass)
            })
            .collect::<Vec<_>>();
        let bound = model.constants().b2;
        let atom_rate = bound * big_atoms.iter().map(|a| a.1).sum::<f64>();
        Self {
            model,
            dim: model.dim(),
            bound,
            proposal: JumpProposal::new(model, epsilon),
            big_atoms,
            atom_rate,
            small_moments: terms.iter().map(|t| base.small_jump_second_moment(epsilon, t.weight)).collect(),
            mid_moments: terms
                .iter()
                .map(|t| base.first_moment_1d(epsilon, COMPENSATION_RADIUS.max(epsilon), t.weight))
                .collect(),
        }
    }

    fn proposal_rate(&self) -> f64 {
        self.bound * self.proposal.map_or(0.0, |p| p.rate) + self.atom_rate
    }

    /// Drift including the compensator of the jumps ε < ‖u‖ ≤ 1, and the
    /// small-jump covariance (xx, xy, yy).
    fn local_coefficients(&self, x: &[f64], epsilon: f64) -> ([f64; 2], [f64; 3]) {
        let a = self.model.drift().value(x);
        let mut drift = [0.0; 2];
        drift[..self.dim].copy_from_slice(&a);
        let mut cov = [0.0; 3];
        for (j, term) in self.model.modulation().terms.iter().enumerate() {
            let g = term.state.value(x);
            if self.dim == 1 {
                drift[0] -= g * self.mid_moments[j];
                cov[0] += g * self.small_moments[j];
            } else {
                cov[0] += 0.5 * g * self.small_moments[j];
                cov[2] += 0.5 * g * self.small_moments[j];
            }
        }
        for atom in self.model.base().atoms() {
            let s = norm(&atom.location);
            let m = self.model.modulation().value(x, &atom.location) * atom.mass;
            if s <= epsilon {
                let u = &atom.location;
                cov[0] += m * u[0] * u[0];
                if self.dim == 2 {
                    cov[1] += m * u[0] * u[1];
                    cov[2] += m * u[1] * u[1];
                }
            } else if s <= COMPENSATION_RADIUS {
                for d in 0..self.dim {
                    drift[d] -= m * atom.location[d];
                }
            }
        }
        (drift, cov)
    }
}

/// Poisson draw by inversion; the mean is at most 0.1.
fn poisson_small<R: Rng>(mean: f64, rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut k = 0;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf && k < 64 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}

/// Simulate `n_paths` independent paths from `x0` and record positions at
/// every requested time. Path i draws from ChaCha8 seeded with `seed` on
/// stream i, so results do not depend on the thread count.
pub fn simulate_paths(
    model: &LevyTypeModel,
    times: &[f64],
    x0: &[f64],
    n_paths: usize,
    config: SimulationConfig,
) -> Result<PathEnsemble, OracleError> {
    let dim = model.dim();
    if x0.len() != dim {
        return Err(OracleError::Invalid(format!("x0 has {} coordinates, model dimension is {dim}", x0.len())));
    }
    if n_paths == 0 || times.is_empty() || times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(OracleError::Invalid("need n_paths > 0 and positive finite times".into()));
    }
    if !(config.epsilon > 0.0 && config.epsilon <= COMPENSATION_RADIUS) {
        return Err(OracleError::Invalid(format!("epsilon {} not in (0, 1]", config.epsilon)));
    }
    let mut times = times.to_vec();
    times.sort_by(f64::total_cmp);
    times.dedup();

    let law = StepLaw::new(model, config.epsilon);
    let rate = law.proposal_rate();
    let dt_max = match config.dt {
        Some(dt) if !(dt > 0.0) => return Err(OracleError::Invalid(format!("step {dt} must be positive"))),
        Some(dt) => dt,
        None if rate > 0.0 => MAX_RATE_STEP / rate,
        None => times[times.len() - 1] / 1000.0,
    };
    if rate * dt_max > MAX_RATE_STEP * (1.0 + 1e-12) {
        return Err(OracleError::RateOverflow { rate, dt: dt_max });
    }
    // per-interval step counts so every requested time is hit exactly
    let mut schedule = Vec::with_capacity(times.len());
    let mut previous = 0.0;
    for &t in &times {
        let span = t - previous;
        let steps = (span / dt_max * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        schedule.push((steps, span / steps as f64));
        previous = t;
    }
    let total_steps = schedule.iter().map(|s| s.0).sum();

    let threads = config
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, n_paths);
    let chunk = n_paths.div_ceil(threads);
    let mut positions = vec![vec![0.0; n_paths * dim]; times.len()];
    let results: Vec<Result<Vec<Vec<f64>>, OracleError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                let (law, schedule) = (&law, &schedule);
                scope.spawn(move || {
                    let range = (w * chunk)..((w + 1) * chunk).min(n_paths);
                    let mut out = vec![Vec::with_capacity(range.len() * dim); schedule.len()];
                    for path in range {
                        let ends = simulate_one(law, x0, schedule, config, path as u64)?;
                        for (ti, x) in ends.iter().enumerate() {
                            out[ti].extend_from_slice(&x[..dim]);
                        }
                    }
                    Ok(out)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation worker panicked")).collect()
    });
    for (w, result) in results.into_iter().enumerate() {
        let block = result?;
        let start = w * chunk * dim;
        for (ti, values) in block.into_iter().enumerate() {
            positions[ti][start..start + values.len()].copy_from_slice(&values);
        }
    }
    if positions.iter().flatten().any(|v| !v.is_finite()) {
        return Err(OracleError::Invalid("non-finite terminal position".into()));
    }
    Ok(PathEnsemble {
        dim,
        n_paths,
        x0: x0.to_vec(),
        times,
        positions,
        epsilon: config.epsilon,
        dt: dt_max,
        steps: total_steps,
        seed: config.seed,
        proposal_rate: rate,
    })
}

fn simulate_one(
    law: &StepLaw,
    x0: &[f64],
    schedule: &[(usize, f64)],
    config: SimulationConfig,
    stream: u64,
) -> Result<Vec<[f64; 2]>, OracleError> {
    let dim = law.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream);
    let mut x = [0.0; 2];
    x[..dim].copy_from_slice(x0);
    let rate = law.proposal_rate();
    let proposal_share = law.proposal.map_or(0.0, |p| law.bound * p.rate) / rate.max(f64::MIN_POSITIVE);
    let mut ends = Vec::with_capacity(schedule.len());
    for &(steps, dt) in schedule {
        for _ in 0..steps {
            let (drift, cov) = law.local_coefficients(&x[..dim], config.epsilon);
            let z0: f64 = rng.sample(StandardNormal);
            if dim == 1 {
                x[0] += drift[0] * dt + (cov[0].max(0.0) * dt).sqrt() * z0;
            } else {
                let z1: f64 = rng.sample(StandardNormal);
                let (l00, l10, l11) = cholesky2(cov);
                let sq = dt.sqrt();
                x[0] += drift[0] * dt + sq * l00 * z0;
                x[1] += drift[1] * dt + sq * (l10 * z0 + l11 * z1);
            }
            if rate == 0.0 {
                continue;
            }
            for _ in 0..poisson_small(rate * dt, &mut rng) {
                let (jump, temper) = if rng.gen::<f64>() < proposal_share {
                    law.proposal.expect("positive proposal share").sample(dim, &mut rng)
                } else {
                    pick_atom(law, &mut rng)
                };
                let m = law.model.modulation().value(&x[..dim], &jump[..dim]);
                if m > law.bound * (1.0 + 1e-9) {
                    return Err(OracleError::Invalid(format!("modulation {m} exceeds the bound b2 = {}", law.bound)));
                }
                if rng.gen::<f64>() * law.bound < m * temper {
                    x[0] += jump[0];
                    x[1] += jump[1];
                }
            }
        }
        ends.push(x);
    }
    Ok(ends)
}

fn pick_atom<R: Rng>(law: &StepLaw, rng: &mut R) -> ([f64; 2], f64) {
    let total: f64 = law.big_atoms.iter().map(|a| a.1).sum();
    let mut u = rng.gen::<f64>() * total;
    for &(loc, mass) in &law.big_atoms {
        if u < mass {
            return (loc, 1.0);
        }
        u -= mass;
    }
    (law.big_atoms[law.big_atoms.len() - 1].0, 1.0)
}

fn cholesky2(cov: [f64; 3]) -> (f64, f64, f64) {
    let l00 = cov[0].max(0.0).sqrt();
    let l10 = if l00 > 0.0 { cov[1] / l00 } else { 0.0 };
    let l11 = (cov[2] - l10 * l10).max(0.0).sqrt();
    (l00, l10, l11)
}
