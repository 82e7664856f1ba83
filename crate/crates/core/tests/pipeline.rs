//! Cross-module properties: model → profile → kernel → artifacts → simulator.

use levy_parametrix::frozen::SpatialGrid;
use levy_parametrix::io::{read_tensor, write_tensor};
use levy_parametrix::model::{DensitySpec, LevyTypeModel, ProfileConfig, ScaleProfile};
use levy_parametrix::oracle::{empirical_vs_kernel, simulate_paths, wrapped_cauchy, SimulationConfig};
use levy_parametrix::parametrix::{ParametrixSolver, SolverConfig};
use proptest::prelude::*;

fn cauchy_kernel(nodes: usize, stride: usize, times: &[f64]) -> levy_parametrix::parametrix::KernelField {
    let model = LevyTypeModel::stable(1, 1.0, 1.0).unwrap();
    let grid = SpatialGrid::new(1, 16.0, nodes).unwrap();
    let solver = ParametrixSolver::new(&model, &grid, SolverConfig { y_stride: stride, ..SolverConfig::default() }).unwrap();
    let ladder = solver.ladder(times.to_vec()).unwrap();
    solver.solve(&ladder).unwrap().p
}

#[test]
fn solved_kernel_survives_the_tensor_format_and_matches_the_wrapped_law() {
    let p = cauchy_kernel(512, 64, &[0.25, 0.5]);
    let path = std::env::temp_dir().join(format!("levy-pipeline-{}.bin", std::process::id()));
    write_tensor(&path, &p, "hash", serde_json::Value::Null).unwrap();
    let (header, back) = read_tensor(&path).unwrap();
    std::fs::remove_file(&path).unwrap();
    assert_eq!(back, p);
    assert_eq!(header.times, vec![0.25, 0.5]);
    let grid = p.grid();
    let ti = p.time_index(0.5).unwrap();
    let ci = p.column_of(grid.origin_index()).unwrap();
    for (x, v) in p.column(ti, ci).iter().enumerate() {
        let d = grid.point(x)[0];
        if d.abs() <= 8.0 {
            assert!((v - wrapped_cauchy(1.0, 0.5, d, 16.0)).abs() < 1e-6, "x = {d}");
        }
    }
}

/// Two-sample KS distance.
fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut worst) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        worst = worst.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    worst
}

#[test]
fn halving_the_jump_cutoff_leaves_the_law_unchanged() {
    let model = LevyTypeModel::stable(1, 1.0, 1.0).unwrap();
    let n = 20_000;
    let run = |epsilon: f64, seed: u64| {
        let config = SimulationConfig { epsilon, dt: None, seed, threads: None };
        simulate_paths(&model, &[0.5], &[0.0], n, config).unwrap()
    };
    let coarse = run(0.04, 1);
    let fine = run(0.02, 2);
    let ks = ks_two_sample(coarse.positions_at(0).to_vec(), fine.positions_at(0).to_vec());
    // 99% two-sample critical value 1.63·sqrt(2/n)
    assert!(ks < 1.63 * (2.0 / n as f64).sqrt(), "two-sample KS {ks}");
    let p = cauchy_kernel(1024, 64, &[0.5]);
    for ensemble in [&coarse, &fine] {
        let report = empirical_vs_kernel(ensemble, &p, 0.5, &[0.0]).unwrap();
        assert!(report.ks < report.ks_critical_99, "KS {} vs {}", report.ks, report.ks_critical_99);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stable_scale_function_matches_its_closed_form(alpha in 0.3f64..1.9, log_t in -2.0f64..1.0) {
        let model = LevyTypeModel::stable(1, alpha, 1.0).unwrap();
        let profile = ScaleProfile::build(&model, ProfileConfig::default()).unwrap();
        let t = 10f64.powf(log_t);
        let rho = profile.rho(t).unwrap();
        prop_assert!((t * profile.q_star(rho) - 1.0).abs() < 1e-8);
        let DensitySpec::PowerLaw { alpha: a, .. } = *model.base().density_spec() else { unreachable!() };
        let (pos, neg) = model.base().scales();
        let k = (pos + neg) * (1.0 / (2.0 - a) + 1.0 / a);
        let exact = (t * k).powf(-1.0 / a);
        prop_assert!(((rho - exact) / exact).abs() < 1e-7, "rho {} vs {}", rho, exact);
    }
}
