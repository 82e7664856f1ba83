//! Parametrix series on a master time grid.
//!
//! Every space–time convolution against K(τ,x,z) = (L_x - L_z) Z(τ,x,z) or
//! Z(τ,x,z) is evaluated in Fourier space. The z-dependence of the frozen
//! symbol is resolved by Chebyshev interpolation in the varying
//! coefficients, e^{-τ q(c)} ≈ Σ_l ℓ_l(c) e^{-τ q(c_l)}, which turns each
//! convolution into a sum of Fourier multipliers. The time integral uses
//! an exponential integrator on a geometric master grid, so the kernel
//! singularity at τ → 0 is integrated exactly and the cost is linear in
//! the number of master times.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GridError, ModelError, ParametrixError};
use crate::frozen::{FrozenKernel, SpatialGrid};
use crate::model::{fit_exponents, LevyTypeModel, ProfileConfig, ScaleProfile};
use crate::quadrature::{power_weighted_rule, ChebyshevLobatto};

use super::{singularity_exponent, FieldRole, KernelField, TimeLadder};

/// Truncation of Φ = Σ_m (LZ)_m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeriesConfig {
    /// Stop once ‖(LZ)_m‖ < tol ‖Σ_{k<m} (LZ)_k‖.
    pub tol: f64,
    pub max_terms: usize,
    /// Terms computed before the tolerance may stop the series; defaults
    /// to k₀ + 3.
    pub min_terms: Option<usize>,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self { tol: 1e-4, max_terms: 12, min_terms: None }
    }
}

/// Discretization settings of the solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// y-columns at every `y_stride`-th node per axis.
    pub y_stride: usize,
    pub series: SeriesConfig,
    /// Ratio of the geometric master grid.
    pub master_ratio: f64,
    /// First master time as a fraction of 1 / max Re q on the grid.
    pub first_fraction: f64,
    /// Gauss nodes for the first master cell.
    pub jacobi_nodes: usize,
    /// Chebyshev nodes per varying coefficient (8 for one, 6 for two).
    pub chebyshev_nodes: Option<usize>,
    /// Override of the lower scaling exponent σ (fitted when absent).
    pub sigma: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            y_stride: 4,
            series: SeriesConfig::default(),
            master_ratio: 1.1,
            first_fraction: 0.1,
            jacobi_nodes: 8,
            chebyshev_nodes: None,
            sigma: None,
        }
    }
}

/// Φ on the ladder with per-term diagnostics.
#[derive(Debug, Clone)]
pub struct PhiSeries {
    pub phi: KernelField,
    /// sup over ladder, x and y of |(LZ)_m|, m = 1, 2, ...; the entry after
    /// the last summed term is the truncation estimate.
    pub term_norms: Vec<f64>,
    /// Per-term sup over x and y at each ladder time.
    pub term_norms_by_time: Vec<Vec<f64>>,
    pub terms_used: usize,
    pub converged: bool,
    pub k0: usize,
    pub delta: f64,
    pub sigma: f64,
}

impl PhiSeries {
    /// ‖(LZ)_{k+1}‖ / ‖(LZ)_k‖ for consecutive terms.
    pub fn ratios(&self) -> Vec<f64> {
        self.term_norms
            .windows(2)
            .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
            .collect()
    }
}

/// Z, Z⋆Φ and p = Z + Z⋆Φ on the ladder.
#[derive(Debug, Clone)]
pub struct Solution {
    pub ladder: TimeLadder,
    pub z: KernelField,
    pub correction: KernelField,
    pub p: KernelField,
    pub series: PhiSeries,
}

/// k₀ = ⌊σ(α+1)/(αλ)⌋ + 1.
pub fn series_threshold(sigma: f64, alpha: f64, lambda: f64) -> usize {
    (sigma * (alpha + 1.0) / (alpha * lambda)).floor() as usize + 1
}

/// Chebyshev levels of the frozen symbol over the varying coefficients.
struct Levels {
    /// ℓ_l(c(x)) at every node, `[l][x]`.
    basis: Vec<Vec<f64>>,
    /// q(c_l, ·) on the dual grid, `[l][ξ]`.
    exponents: Vec<Vec<Complex64>>,
    /// g_v(x) of the varying terms, `[v][x]`.
    coefficients: Vec<Vec<f64>>,
    /// Q_v of the varying terms.
    multipliers: Vec<Vec<Complex64>>,
}

/// e^{-Δq}, Δ E₁(Δq) and Δ (E₀ - E₁)(Δq) per master step and level.
struct StepTables {
    decay: Vec<Complex64>,
    previous: Vec<Complex64>,
    current: Vec<Complex64>,
}

/// E₀(z) = (1 - e^{-z})/z and E₁(z) = (1 - e^{-z}(1+z))/z².
fn phi_functions(z: Complex64) -> (Complex64, Complex64) {
    if z.norm() < 0.5 {
        let mut e0 = Complex64::new(0.0, 0.0);
        let mut e1 = Complex64::new(0.0, 0.0);
        let mut pow = Complex64::new(1.0, 0.0);
        let mut fact = 1.0; // (n+1)!
        for n in 0..16 {
            fact *= (n + 1) as f64;
            e0 += pow / fact;
            e1 += pow * ((n + 1) as f64) / (fact * (n + 2) as f64);
            pow *= -z;
        }
        (e0, e1)
    } else {
        let ez = (-z).exp();
        ((1.0 - ez) / z, (1.0 - ez * (1.0 + z)) / (z * z))
    }
}

/// Replace a multiplier by its Hermitian part M(ξ) ← (M(ξ) + conj M(-ξ))/2
/// so that it maps real grid functions to real grid functions.
fn hermitize(grid: &SpatialGrid, m: &mut [Complex64]) {
    let n = grid.nodes();
    let orig = m.to_vec();
    for (k, v) in m.iter_mut().enumerate() {
        let idx = grid.unflatten(k);
        let mirror = grid.flatten([(n - idx[0]) % n, (n - idx[1]) % n]);
        *v = 0.5 * (orig[k] + orig[mirror].conj());
    }
}

/// Parametrix solver for one model on one grid.
#[derive(Debug, Clone)]
pub struct ParametrixSolver {
    model: LevyTypeModel,
    grid: SpatialGrid,
    config: SolverConfig,
    kernel: FrozenKernel,
    sigma: f64,
}

impl ParametrixSolver {
    pub fn new(model: &LevyTypeModel, grid: &SpatialGrid, config: SolverConfig) -> Result<Self, ParametrixError> {
        if model.dim() != grid.dim() {
            return Err(GridError::Mismatch(format!("model in {}-d, grid in {}-d", model.dim(), grid.dim())).into());
        }
        let kernel = FrozenKernel::new(model, grid)?;
        let sigma = match config.sigma {
            Some(s) => s,
            None => match ScaleProfile::build(model, ProfileConfig::default()) {
                Ok(profile) => fit_exponents(&profile).sigma,
                Err(ModelError::RhoUndefined { .. }) => model.alpha(),
                Err(e) => return Err(e.into()),
            },
        };
        Ok(Self { model: model.clone(), grid: grid.clone(), config, kernel, sigma })
    }

    pub fn config(&self) -> SolverConfig {
        self.config
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// δ = 1 - λ/σ.
    pub fn delta(&self) -> Result<f64, ParametrixError> {
        singularity_exponent(self.model.lambda(), self.sigma)
    }

    /// Ladder on the given times with this model's δ.
    pub fn ladder(&self, times: Vec<f64>) -> Result<TimeLadder, ParametrixError> {
        TimeLadder::new(times, self.delta()?)
    }

    pub fn k0(&self) -> usize {
        series_threshold(self.sigma, self.model.alpha(), self.model.lambda())
    }

    fn min_terms(&self) -> usize {
        self.config.series.min_terms.unwrap_or(self.k0() + 3)
    }

    /// Exact frozen kernel Z on the ladder.
    pub fn frozen_field(&self, ladder: &TimeLadder) -> Result<KernelField, ParametrixError> {
        self.kernel.check_periodization(*ladder.times().last().expect("ladder is non-empty"))?;
        let mut z = KernelField::zeros(FieldRole::Z, &self.grid, ladder.times(), self.config.y_stride)?;
        let columns = z.columns().to_vec();
        for (ti, &t) in ladder.times().iter().enumerate() {
            for (ci, &y) in columns.iter().enumerate() {
                let col = self.kernel.column(t, y)?;
                z.column_mut(ti, ci).copy_from_slice(&col);
            }
        }
        Ok(z)
    }

    fn hermitian_multipliers(&self) -> Vec<Vec<Complex64>> {
        (0..self.kernel.table().terms().len())
            .map(|j| {
                let mut m = self.kernel.table().multiplier(j).to_vec();
                hermitize(&self.grid, &mut m);
                m
            })
            .collect()
    }

    fn levels(&self, multipliers: &[Vec<Complex64>]) -> Result<Levels, ParametrixError> {
        let terms = self.kernel.table().terms();
        let len = self.grid.len();
        let varying: Vec<usize> = (0..terms.len()).filter(|&j| !terms[j].is_constant()).collect();
        if varying.len() > 2 {
            return Err(ModelError::Invalid(format!(
                "{} varying coefficients; the solver supports at most two",
                varying.len()
            ))
            .into());
        }
        let origin = self.grid.point(self.grid.origin_index());
        let mut base = vec![Complex64::new(0.0, 0.0); len];
        for (j, term) in terms.iter().enumerate() {
            if term.is_constant() {
                let c = term.coefficient(&origin);
                base.iter_mut().zip(&multipliers[j]).for_each(|(b, m)| *b += c * m);
            }
        }
        let coefficients: Vec<Vec<f64>> = varying
            .iter()
            .map(|&j| (0..len).map(|i| terms[j].coefficient(&self.grid.point(i))).collect())
            .collect();
        let count = self.config.chebyshev_nodes.unwrap_or(if varying.len() == 2 { 6 } else { 8 });
        let axes: Vec<ChebyshevLobatto> = coefficients
            .iter()
            .map(|c| {
                let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                ChebyshevLobatto::new(lo, hi, count)
            })
            .collect();
        // tensor product of per-axis nodes; a single level without varying terms
        let sizes: Vec<usize> = axes.iter().map(ChebyshevLobatto::len).collect();
        let total: usize = sizes.iter().product();
        let mut basis = vec![vec![1.0; len]; total];
        let mut exponents = vec![base.clone(); total];
        let per_axis: Vec<Vec<Vec<f64>>> = axes
            .iter()
            .zip(&coefficients)
            .map(|(axis, c)| c.iter().map(|&v| axis.basis(v)).collect())
            .collect();
        for (l, (bl, el)) in basis.iter_mut().zip(exponents.iter_mut()).enumerate() {
            let mut rest = l;
            for (v, axis) in axes.iter().enumerate() {
                let node = rest % sizes[v];
                rest /= sizes[v];
                let c = axis.nodes()[node];
                el.iter_mut().zip(&multipliers[varying[v]]).for_each(|(e, m)| *e += c * m);
                bl.iter_mut().zip(&per_axis[v]).for_each(|(b, p)| *b *= p[node]);
            }
        }
        Ok(Levels {
            basis,
            exponents,
            coefficients,
            multipliers: varying.iter().map(|&j| multipliers[j].clone()).collect(),
        })
    }

    /// Geometric master grid from a resolution-scaled first time up to the
    /// last ladder time, with every ladder time inserted. Returns the
    /// times and the ladder slot of each master time.
    fn master_grid(&self, ladder: &TimeLadder, levels: &Levels) -> (Vec<f64>, Vec<Option<usize>>) {
        let rate = levels
            .exponents
            .iter()
            .flat_map(|e| e.iter().map(|q| q.re))
            .fold(0.0f64, f64::max)
            .max(1e-12);
        let times = ladder.times();
        let t_min = times[0];
        let t_max = *times.last().expect("ladder is non-empty");
        let ratio = self.config.master_ratio.max(1.001);
        let mut s = (self.config.first_fraction / rate).min(0.5 * t_min);
        let gap = 0.3 * (ratio - 1.0);
        let mut grid: Vec<f64> = Vec::new();
        while s < t_max {
            if times.iter().all(|&t| (s - t).abs() > gap * t) {
                grid.push(s);
            }
            s *= ratio;
        }
        grid.extend_from_slice(times);
        grid.sort_by(|a, b| a.total_cmp(b));
        let slots = grid.iter().map(|&s| ladder.index_of(s)).collect();
        (grid, slots)
    }

    fn step_tables(&self, master: &[f64], levels: &Levels) -> Result<StepTables, ParametrixError> {
        let len = self.grid.len();
        let nl = levels.exponents.len();
        let bytes = 3 * master.len() * nl * len * 16;
        if bytes > (3usize << 30) {
            return Err(GridError::Invalid(format!("time-step tables need {} MB", bytes >> 20)).into());
        }
        let size = master.len() * nl * len;
        let zero = Complex64::new(0.0, 0.0);
        let mut tables = StepTables { decay: vec![zero; size], previous: vec![zero; size], current: vec![zero; size] };
        for k in 1..master.len() {
            let dt = master[k] - master[k - 1];
            for (l, q) in levels.exponents.iter().enumerate() {
                let o = (k * nl + l) * len;
                for (f, &qf) in q.iter().enumerate() {
                    let z = qf * dt;
                    let (e0, e1) = phi_functions(z);
                    tables.decay[o + f] = (-z).exp();
                    tables.previous[o + f] = e1 * dt;
                    tables.current[o + f] = (e0 - e1) * dt;
                }
            }
        }
        Ok(tables)
    }

    /// ∫₀^{s₁} e^{-(s₁-r) q_l} dr per level. Below the grid resolution
    /// time the discrete terms are bounded, so the first cell holds the
    /// term at its value at s₁.
    fn first_cell(&self, s1: f64, levels: &Levels) -> Vec<Vec<Complex64>> {
        let rule = power_weighted_rule(s1, 0.0, self.config.jacobi_nodes);
        levels
            .exponents
            .iter()
            .map(|q| {
                q.iter()
                    .map(|&qf| rule.iter().map(|&(r, w)| w * (-(s1 - r) * qf).exp()).sum::<Complex64>())
                    .collect()
            })
            .collect()
    }

    /// (LZ)₁ on the master grid with the exact frozen symbol at each column.
    fn first_term(&self, master: &[f64], columns: &[usize], multipliers: &[Vec<Complex64>], levels: &Levels) -> Vec<f64> {
        let len = self.grid.len();
        let nc = columns.len();
        let terms = self.kernel.table().terms();
        let varying: Vec<usize> = (0..terms.len()).filter(|&j| !terms[j].is_constant()).collect();
        let vol = self.grid.cell_volume();
        let mut out = vec![0.0; master.len() * nc * len];
        let zero = Complex64::new(0.0, 0.0);
        let mut buf = vec![zero; len];
        for pair in (0..nc).step_by(2) {
            let members: Vec<usize> = (pair..(pair + 2).min(nc)).collect();
            let mut spectra = Vec::new();
            for &ci in &members {
                let y = columns[ci];
                let mut d = vec![zero; len];
                d[y] = Complex64::new(1.0 / vol, 0.0);
                self.grid.fft(&mut d);
                let coeffs = self.kernel.table().coefficients(&self.grid.point(y));
                let mut q = vec![zero; len];
                for (c, m) in coeffs.iter().zip(multipliers) {
                    q.iter_mut().zip(m).for_each(|(a, b)| *a += c * b);
                }
                let gy: Vec<f64> = varying.iter().map(|&j| coeffs[j]).collect();
                spectra.push((d, q, gy));
            }
            for (k, &s) in master.iter().enumerate() {
                let decayed: Vec<Vec<Complex64>> =
                    spectra.iter().map(|(d, q, _)| d.iter().zip(q).map(|(a, b)| a * (-s * b).exp()).collect()).collect();
                for (v, qv) in levels.multipliers.iter().enumerate() {
                    for f in 0..len {
                        let mut val = decayed[0][f] * qv[f];
                        if members.len() > 1 {
                            val += Complex64::new(0.0, 1.0) * decayed[1][f] * qv[f];
                        }
                        buf[f] = val;
                    }
                    self.grid.ifft(&mut buf);
                    let gx = &levels.coefficients[v];
                    for (slot, &ci) in members.iter().enumerate() {
                        let gy = spectra[slot].2[v];
                        let o = (k * nc + ci) * len;
                        let col = &mut out[o..o + len];
                        for x in 0..len {
                            let part = if slot == 0 { buf[x].re } else { buf[x].im };
                            col[x] += (gy - gx[x]) * part;
                        }
                    }
                }
            }
        }
        out
    }

    /// One convolution pass over the master grid: from T = (LZ)_m compute
    /// Z⋆T at the ladder slots (added to `correction`) and, if requested,
    /// (LZ)_{m+1} = K⋆T on the master grid.
    #[allow(clippy::too_many_arguments)]
    fn convolve_pass(
        &self,
        term: &[f64],
        master: &[f64],
        slots: &[Option<usize>],
        levels: &Levels,
        tables: &StepTables,
        nc: usize,
        mut next: Option<&mut [f64]>,
        correction: &mut [f64],
    ) {
        let len = self.grid.len();
        let nl = levels.exponents.len();
        let nv = levels.multipliers.len();
        let nw = 1 + nv;
        let zero = Complex64::new(0.0, 0.0);
        let first = self.first_cell(master[0], levels);
        // ℓ_l(c(z)) w(z) with w ∈ {1, g_v}
        let weights: Vec<Vec<f64>> = (0..nw)
            .flat_map(|w| {
                levels.basis.iter().map(move |b| {
                    if w == 0 {
                        b.clone()
                    } else {
                        b.iter().zip(&levels.coefficients[w - 1]).map(|(x, g)| x * g).collect()
                    }
                })
            })
            .collect();
        let mut state = vec![vec![zero; len]; nw * nl];
        let mut prev = vec![vec![zero; len]; nw * nl];
        let mut cur = vec![vec![zero; len]; nw * nl];
        let mut u = vec![zero; len];
        let mut acc = vec![zero; len];
        let mut out = vec![zero; len];
        let mut buf = vec![zero; len];
        for pair in (0..nc).step_by(2) {
            let second = pair + 1 < nc;
            state.iter_mut().for_each(|s| s.iter_mut().for_each(|v| *v = zero));
            for k in 0..master.len() {
                let oa = (k * nc + pair) * len;
                for x in 0..len {
                    let b = if second { term[oa + len + x] } else { 0.0 };
                    u[x] = Complex64::new(term[oa + x], b);
                }
                for (idx, c) in cur.iter_mut().enumerate() {
                    let wl = &weights[idx];
                    for x in 0..len {
                        c[x] = u[x] * wl[x];
                    }
                    self.grid.fft(c);
                }
                for (idx, (s, c)) in state.iter_mut().zip(&cur).enumerate() {
                    let l = idx % nl;
                    if k == 0 {
                        let f = &first[l];
                        for x in 0..len {
                            s[x] = f[x] * c[x];
                        }
                    } else {
                        let o = (k * nl + l) * len;
                        let d = &tables.decay[o..o + len];
                        let wp = &tables.previous[o..o + len];
                        let wc = &tables.current[o..o + len];
                        let p = &prev[idx];
                        for x in 0..len {
                            s[x] = d[x] * s[x] + wp[x] * p[x] + wc[x] * c[x];
                        }
                    }
                }
                std::mem::swap(&mut prev, &mut cur);
                // Σ_l over the weight-1 states gives the Z-convolution
                let sum_levels = |w: usize, acc: &mut [Complex64]| {
                    acc.iter_mut().for_each(|v| *v = zero);
                    for l in 0..nl {
                        for (a, s) in acc.iter_mut().zip(&state[w * nl + l]) {
                            *a += s;
                        }
                    }
                };
                if let Some(ti) = slots[k] {
                    sum_levels(0, &mut acc);
                    buf.copy_from_slice(&acc);
                    self.grid.ifft(&mut buf);
                    let o = (ti * nc + pair) * len;
                    for x in 0..len {
                        correction[o + x] += buf[x].re;
                        if second {
                            correction[o + len + x] += buf[x].im;
                        }
                    }
                }
                if let Some(next) = next.as_deref_mut() {
                    out.iter_mut().for_each(|v| *v = zero);
                    sum_levels(0, &mut acc);
                    for v in 0..nv {
                        let qv = &levels.multipliers[v];
                        let gx = &levels.coefficients[v];
                        // -g_v(x) Q_v Σ_l A_l[1]
                        for x in 0..len {
                            buf[x] = qv[x] * acc[x];
                        }
                        self.grid.ifft(&mut buf);
                        for x in 0..len {
                            out[x] -= gx[x] * buf[x];
                        }
                        // + Q_v Σ_l A_l[g_v]
                        sum_levels(1 + v, &mut buf);
                        for x in 0..len {
                            buf[x] *= qv[x];
                        }
                        self.grid.ifft(&mut buf);
                        for x in 0..len {
                            out[x] += buf[x];
                        }
                    }
                    let o = (k * nc + pair) * len;
                    for x in 0..len {
                        next[o + x] = out[x].re;
                        if second {
                            next[o + len + x] = out[x].im;
                        }
                    }
                }
            }
        }
    }

    /// Φ on the ladder together with Z⋆Φ.
    fn series(&self, ladder: &TimeLadder) -> Result<(PhiSeries, KernelField), ParametrixError> {
        let delta = ladder.delta();
        let stride = self.config.y_stride;
        let mut phi = KernelField::zeros(FieldRole::Phi, &self.grid, ladder.times(), stride)?;
        let mut correction = KernelField::zeros(FieldRole::Correction, &self.grid, ladder.times(), stride)?;
        let k0 = self.k0();
        if self.model.has_constant_coefficients() {
            let series = PhiSeries {
                phi,
                term_norms: vec![0.0],
                term_norms_by_time: vec![vec![0.0; ladder.len()]],
                terms_used: 1,
                converged: true,
                k0,
                delta,
                sigma: self.sigma,
            };
            return Ok((series, correction));
        }
        let multipliers = self.hermitian_multipliers();
        let levels = self.levels(&multipliers)?;
        let (master, slots) = self.master_grid(ladder, &levels);
        let tables = self.step_tables(&master, &levels)?;
        let columns = phi.columns().to_vec();
        let nc = columns.len();
        let len = self.grid.len();
        let block = nc * len;
        let norms_of = |term: &[f64]| -> Vec<f64> {
            let mut by_time = vec![0.0f64; ladder.len()];
            for (k, slot) in slots.iter().enumerate() {
                if let Some(ti) = slot {
                    by_time[*ti] = term[k * block..(k + 1) * block].iter().fold(0.0f64, |m, v| m.max(v.abs()));
                }
            }
            by_time
        };
        let mut term = self.first_term(&master, &columns, &multipliers, &levels);
        let mut by_time = vec![norms_of(&term)];
        let mut norms = vec![by_time[0].iter().copied().fold(0.0, f64::max)];
        let min_terms = self.min_terms().min(self.config.series.max_terms);
        let mut next = vec![0.0; term.len()];
        let mut m = 1;
        let converged = loop {
            // Φ += (LZ)_m on the ladder
            for (k, slot) in slots.iter().enumerate() {
                if let Some(ti) = slot {
                    let src = &term[k * block..(k + 1) * block];
                    let o = ti * block;
                    phi.data_mut()[o..o + block].iter_mut().zip(src).for_each(|(a, b)| *a += b);
                }
            }
            let want_next = m < self.config.series.max_terms;
            self.convolve_pass(
                &term,
                &master,
                &slots,
                &levels,
                &tables,
                nc,
                want_next.then_some(next.as_mut_slice()),
                correction.data_mut(),
            );
            if !want_next {
                break false;
            }
            std::mem::swap(&mut term, &mut next);
            let t_norms = norms_of(&term);
            let norm = t_norms.iter().copied().fold(0.0, f64::max);
            by_time.push(t_norms);
            norms.push(norm);
            let ratios: Vec<f64> = norms.windows(2).map(|w| w[1] / w[0].max(f64::MIN_POSITIVE)).collect();
            // ratios[j] = ‖T_{j+2}‖/‖T_{j+1}‖; beyond k₀ means j + 1 > k₀
            let tail: Vec<f64> = ratios.iter().enumerate().filter(|(j, _)| j + 1 > k0).map(|(_, r)| *r).collect();
            if tail.len() >= 3 && tail[tail.len() - 3..].iter().all(|&r| r > 1.0) {
                return Err(ParametrixError::SeriesDiverging { k0, ratios });
            }
            let sum_norm = phi.sup_norm();
            if m + 1 >= min_terms && norm < self.config.series.tol * sum_norm {
                break true;
            }
            m += 1;
        };
        let series = PhiSeries {
            phi,
            term_norms: norms,
            term_norms_by_time: by_time,
            terms_used: m,
            converged,
            k0,
            delta,
            sigma: self.sigma,
        };
        Ok((series, correction))
    }

    /// Φ = Σ_m (LZ)_m on the ladder.
    pub fn phi_series(&self, ladder: &TimeLadder) -> Result<PhiSeries, ParametrixError> {
        Ok(self.series(ladder)?.0)
    }

    /// p = Z + Z⋆Φ on the ladder.
    pub fn solve(&self, ladder: &TimeLadder) -> Result<Solution, ParametrixError> {
        let z = self.frozen_field(ladder)?;
        let (series, correction) = self.series(ladder)?;
        let p = z.combine(1.0, &correction, 1.0, FieldRole::P)?;
        Ok(Solution { ladder: ladder.clone(), z, correction, p, series })
    }
}

/// Φ with the given truncation settings and default discretization.
pub fn phi_series(
    model: &LevyTypeModel,
    ladder: &TimeLadder,
    grid: &SpatialGrid,
    tol: f64,
    max_terms: usize,
) -> Result<PhiSeries, ParametrixError> {
    let config = SolverConfig { series: SeriesConfig { tol, max_terms, min_terms: None }, ..SolverConfig::default() };
    ParametrixSolver::new(model, grid, config)?.phi_series(ladder)
}

/// p = Z + Z⋆Φ with default settings.
pub fn fundamental_solution(
    model: &LevyTypeModel,
    ladder: &TimeLadder,
    grid: &SpatialGrid,
) -> Result<Solution, ParametrixError> {
    ParametrixSolver::new(model, grid, SolverConfig::default())?.solve(ladder)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DriftField;
    use crate::parametrix::convolution::{spacetime_convolution_at, SpaceKernel, TimeFamily};
    use crate::parametrix::lz::tests::modulated_cauchy;
    use crate::parametrix::lz1;

    #[test]
    fn threshold_arithmetic() {
        assert_eq!(series_threshold(1.0, 1.0, 0.5), 5);
        assert_eq!(series_threshold(1.5, 1.5, 0.5), 6);
    }

    #[test]
    fn phi_functions_match_closed_forms() {
        for z in [Complex64::new(0.3, 0.1), Complex64::new(0.49, -0.2), Complex64::new(2.0, 1.0)] {
            let (e0, e1) = phi_functions(z);
            let ez = (-z).exp();
            assert!((e0 - (1.0 - ez) / z).norm() < 1e-13);
            assert!((e1 - (1.0 - ez * (1.0 + z)) / (z * z)).norm() < 1e-12);
        }
        let (e0, e1) = phi_functions(Complex64::new(0.0, 0.0));
        assert_eq!((e0.re, e1.re), (1.0, 0.5));
    }

    #[test]
    fn constant_coefficients_give_zero_phi() {
        let model = LevyTypeModel::stable(1, 1.0, 1.0).unwrap();
        let grid = SpatialGrid::new(1, 64.0, 4096).unwrap();
        let solver = ParametrixSolver::new(&model, &grid, SolverConfig { y_stride: 256, ..Default::default() }).unwrap();
        let ladder = solver.ladder(vec![0.1, 0.5, 1.0]).unwrap();
        let sol = solver.solve(&ladder).unwrap();
        assert_eq!(sol.series.phi.sup_norm(), 0.0);
        assert_eq!(sol.series.terms_used, 1);
        assert_eq!(sol.p, sol.z.clone().with_role(FieldRole::P));
    }

    #[test]
    fn variable_coefficients_give_nonzero_phi() {
        let model = modulated_cauchy(0.4, DriftField::Zero);
        let grid = SpatialGrid::new(1, 16.0, 256).unwrap();
        let config = SolverConfig {
            y_stride: 16,
            series: SeriesConfig { tol: 1e-4, max_terms: 3, min_terms: Some(1) },
            ..Default::default()
        };
        let solver = ParametrixSolver::new(&model, &grid, config).unwrap();
        let ladder = solver.ladder(vec![0.25, 0.5]).unwrap();
        let series = solver.phi_series(&ladder).unwrap();
        assert!(series.phi.sup_norm() > 1e-3);
        assert!(series.phi.is_finite());
    }

    #[test]
    fn first_term_matches_real_space_difference_operator() {
        let model = modulated_cauchy(0.4, DriftField::Zero);
        let grid = SpatialGrid::new(1, 16.0, 512).unwrap();
        let config = SolverConfig {
            y_stride: 32,
            series: SeriesConfig { tol: 1e-4, max_terms: 1, min_terms: Some(1) },
            ..Default::default()
        };
        let solver = ParametrixSolver::new(&model, &grid, config).unwrap();
        let ladder = solver.ladder(vec![0.3]).unwrap();
        let spectral = solver.phi_series(&ladder).unwrap().phi;
        let real = lz1(&model, &[0.3], &grid, 32).unwrap();
        let scale = real.sup_norm();
        let diff = spectral.combine(1.0, &real, -1.0, FieldRole::Phi).unwrap().sup_norm();
        assert!(diff < 2e-3 * scale, "diff {diff} scale {scale}");
    }

    /// Second term from the fast path against the generic dense
    /// space–time convolution of K with (LZ)₁.
    #[test]
    fn second_term_matches_generic_convolution() {
        let model = modulated_cauchy(0.4, DriftField::Zero);
        let grid = SpatialGrid::new(1, 8.0, 64).unwrap();
        let config = SolverConfig {
            y_stride: 1,
            master_ratio: 1.03,
            series: SeriesConfig { tol: 0.0, max_terms: 2, min_terms: Some(2) },
            ..Default::default()
        };
        let solver = ParametrixSolver::new(&model, &grid, config).unwrap();
        let t = 0.4;
        let ladder = solver.ladder(vec![t]).unwrap();
        let series = solver.phi_series(&ladder).unwrap();
        // Φ = T₁ + T₂ at t, so T₂ = Φ - T₁
        let solver1 = ParametrixSolver::new(
            &model,
            &grid,
            SolverConfig { series: SeriesConfig { tol: 0.0, max_terms: 1, min_terms: Some(1) }, ..config },
        )
        .unwrap();
        let t1 = solver1.phi_series(&ladder).unwrap().phi;
        let fast = series.phi.combine(1.0, &t1, -1.0, FieldRole::Lz(2)).unwrap();

        // dense K(τ) with the exact frozen symbol at every column z
        let kernel = FrozenKernel::new(&model, &grid).unwrap();
        let len = grid.len();
        let table = kernel.table();
        let mult: Vec<Vec<Complex64>> = (0..table.terms().len())
            .map(|j| {
                let mut m = table.multiplier(j).to_vec();
                hermitize(&grid, &mut m);
                m
            })
            .collect();
        let dense_k = |tau: f64| {
            let mut m = vec![0.0; len * len];
            for z in 0..len {
                let coeffs = table.coefficients(&grid.point(z));
                let mut d = vec![Complex64::new(0.0, 0.0); len];
                d[z] = Complex64::new(1.0 / grid.spacing(), 0.0);
                grid.fft(&mut d);
                let q: Vec<Complex64> = (0..len).map(|f| coeffs.iter().zip(&mult).map(|(c, m)| c * m[f]).sum()).collect();
                let qv = &mult[1];
                let spec: Vec<Complex64> = (0..len).map(|f| d[f] * qv[f] * (-tau * q[f]).exp()).collect();
                let col = grid.ifft_real(spec);
                let gz = coeffs[1];
                for x in 0..len {
                    let gx = table.coefficients(&grid.point(x))[1];
                    m[x * len + z] = (gz - gx) * col[x];
                }
            }
            SpaceKernel::Dense(m)
        };
        let delta = ladder.delta();
        let kfam = TimeFamily::new(|s: f64| dense_k(s), -delta);
        let generic = spacetime_convolution_at(&kfam, &kfam, t, &grid, 24).unwrap();
        let scale = fast.sup_norm();
        let mut worst = 0.0f64;
        for (ci, &y) in fast.columns().iter().enumerate() {
            for x in 0..len {
                worst = worst.max((fast.column(0, ci)[x] - generic.value(&grid, x, y)).abs());
            }
        }
        assert!(worst < 5e-3 * scale, "worst {worst} scale {scale}");
    }
}
