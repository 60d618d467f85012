mod common;

use common::*;
use kwgraph::assembly::{apply_residual, assemble_stiffness, solve_poisson_meanzero, solve_shifted};
use kwgraph::cli::write_solution_csv;
use kwgraph::graph::{check_moser, check_poincare, GridFunction};
use kwgraph::solvers::{solve, solve_zero, KwProblem, SolveOptions};
use kwgraph::verify::identity_report;
use proptest::prelude::*;
use rand::Rng;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn integrate_is_linear(seed: u64, a in -5.0..5.0f64, b in -5.0..5.0f64) {
        let mut rng = rng(seed);
        let grid = random_grid(&mut rng, 2, 24);
        let f = random_smooth(&mut rng, &grid, 1.0);
        let g = random_smooth(&mut rng, &grid, 2.0);
        let combo = f.with_values(f.values().iter().zip(g.values()).map(|(x, y)| a * x + b * y).collect());
        let scale = (a.abs() + b.abs() + 1.0) * 4.0 * grid.total_length();
        prop_assert!((combo.integrate() - a * f.integrate() - b * g.integrate()).abs() <= 1e-14 * scale);
    }

    #[test]
    fn mean_zero_inequalities(seed: u64) {
        let mut rng = rng(seed);
        let grid = random_grid(&mut rng, 2, 40);
        let f = random_mean_zero(&mut rng, &grid);
        let p = check_poincare(&f).unwrap();
        prop_assert!(p.holds_pointwise && p.holds_l2, "{p:?}");
        let beta = rng.gen_range(-1.0..2.0);
        let m = check_moser(&f, beta, f.dirichlet_energy() * rng.gen_range(1.0..2.0)).unwrap();
        prop_assert!(m.holds, "{m:?}");
    }

    #[test]
    fn continuity_at_vertices(seed: u64) {
        let mut rng = rng(seed);
        let grid = random_grid(&mut rng, 2, 12);
        let f = random_smooth(&mut rng, &grid, 1.0);
        let graph = grid.graph();
        for v in 0..graph.num_vertices() {
            let traces: Vec<f64> = graph
                .incident(v)
                .iter()
                .map(|&j| {
                    let t = f.edge_trace(j);
                    if graph.edge(j).tail == v { t[0] } else { t[t.len() - 1] }
                })
                .collect();
            prop_assert!(traces.iter().all(|&t| t == traces[0]));
        }
    }

    #[test]
    fn stiffness_is_semidefinite(seed: u64, shift in -10.0..10.0f64) {
        let mut rng = rng(seed);
        let grid = random_grid(&mut rng, 2, 24);
        let k = assemble_stiffness(&grid);
        prop_assert!(k.is_symmetric());
        let u = random_smooth(&mut rng, &grid, 1.0);
        let q = k.quad_form(u.values());
        prop_assert!(q > 0.0);
        prop_assert!((q - u.dirichlet_energy()).abs() <= 1e-10 * q);
        let constant = vec![shift; grid.num_dofs()];
        prop_assert!(k.quad_form(&constant).abs() <= 1e-12 * (1.0 + shift * shift) * k.diagonal().iter().sum::<f64>());
    }

    #[test]
    fn shifted_maximum_principle(seed: u64) {
        let mut rng = rng(seed);
        let grid = random_grid(&mut rng, 2, 24);
        let k = random_smooth(&mut rng, &grid, 1.0).map(|v| v.abs() + 0.01);
        let rhs = random_smooth(&mut rng, &grid, 1.0).map(|v| -v.abs());
        let u = solve_shifted(&k, &rhs).unwrap();
        prop_assert!(u.min() >= 0.0, "min {}", u.min());
    }

    #[test]
    fn poisson_meanzero(seed: u64) {
        let mut rng = rng(seed);
        let grid = random_grid(&mut rng, 2, 24);
        let rhs = random_mean_zero(&mut rng, &grid);
        let m = solve_poisson_meanzero(&rhs).unwrap();
        prop_assert!(m.mean().abs() <= 1e-12 * (1.0 + m.sup_norm()));
        let km = assemble_stiffness(&grid).matvec(m.values());
        let w = grid.weights();
        let defect: f64 = km.iter().zip(w).zip(rhs.values()).map(|((k, w), r)| k + w * r).sum();
        let scale: f64 = km.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
        prop_assert!(defect.abs() <= 1e-12 * scale);
    }
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn constant_h_gives_constant_solution(seed: u64, h in -4.0..-0.1f64, c in -4.0..-0.1f64) {
        let mut rng = rng(seed);
        let grid = random_grid(&mut rng, 2, 24);
        let p = KwProblem::new(GridFunction::constant(grid, h), c).unwrap();
        let sol = solve(&p, &SolveOptions::with_tol(1e-11)).unwrap();
        let exact = (c / h).ln();
        prop_assert!(sol.u.values().iter().all(|u| (u - exact).abs() <= 1e-10));
    }

    #[test]
    fn negative_solutions_satisfy_the_weak_form(seed: u64) {
        let mut rng = rng(seed);
        let grid = random_grid(&mut rng, 4, 24);
        let (h, c) = random_negative_analytic(&mut rng, &grid);
        let tol = 1e-9;
        let sol = solve(&KwProblem::new(h.clone(), c).unwrap(), &SolveOptions::with_tol(tol)).unwrap();
        prop_assert!(apply_residual(&sol.u, &h, c).unwrap().norm <= tol);
        let ids = identity_report(&sol.u, &h, c).unwrap();
        prop_assert!(ids.mass_defect <= 10.0 * tol * grid.total_length());
        let history = sol.report.monotone_history.as_ref();
        prop_assert!(history.map_or(true, |h| h.iter().all(|s| s.descent >= -1e-12 && s.above_lower >= -1e-12)));
    }

    #[test]
    fn zero_solutions_balance_h(seed: u64) {
        let mut rng = rng(seed);
        let grid = random_grid(&mut rng, 4, 24);
        let h = random_sign_changing(&mut rng, &grid);
        let tol = 1e-9;
        let sol = solve_zero(&h, &SolveOptions::with_tol(tol)).unwrap();
        let balance: f64 = grid.weights().iter().zip(h.values()).zip(sol.u.values()).map(|((w, h), u)| w * h * u.exp()).sum();
        prop_assert!(balance.abs() <= tol * h.sup_norm() * grid.total_length());
        prop_assert!(sol.report.multiplier.unwrap() > 0.0);
    }

    #[test]
    fn solution_csv_is_deterministic(seed: u64) {
        let mut rng = rng(seed);
        let grid = random_grid(&mut rng, 2, 12);
        let u = random_smooth(&mut rng, &grid, 1.0);
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        write_solution_csv(&a, &u).unwrap();
        write_solution_csv(&b, &u).unwrap();
        prop_assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}
