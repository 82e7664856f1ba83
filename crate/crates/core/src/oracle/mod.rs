//! Independent references for the parametrix output: closed-form and
//! quadrature stable densities, Monte Carlo paths of the Lévy-type process
//! and their comparison with a kernel row.

mod closed_form;
mod compare;
mod simulate;

pub use closed_form::{closed_form_stable, fourier_stable_density, stable_density, stable_symbol_constant, wrapped_cauchy};
pub use compare::{empirical_vs_kernel, EmpiricalReport};
pub use simulate::{simulate_paths, PathEnsemble, SimulationConfig, MAX_RATE_STEP};
