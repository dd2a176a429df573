//! Residual monitor: multigrid cycles never increase the finest-level
//! residual of the upwind duct at the four coarsest resolutions, down to
//! round-off.

use convsn::eigen::{build_problem_hierarchy, solve_fixed_source_with, solve_options};
use convsn::problems::build_straight_duct;
use convsn::transport::Scheme;

#[test]
fn upwind_duct_residual_is_non_increasing() {
    for dx in [0.8, 0.4, 0.2, 0.1] {
        let mut problem = build_straight_duct(dx).unwrap();
        problem.settings.scheme = Scheme::Upwind;
        problem.settings.n_a = 1;
        let h = build_problem_hierarchy(&problem).unwrap();
        let mut opts = solve_options(&problem);
        opts.mg_iters = 15;
        let sol = solve_fixed_source_with(&h, &opts, |_, _| {}).unwrap();
        let floor = 1e-12 * sol.initial_residual();
        for (c, w) in sol.residual_history.windows(2).enumerate() {
            assert!(
                w[1] <= w[0] + floor,
                "dx = {dx}, cycle {c}: {} -> {}",
                w[0],
                w[1]
            );
        }
        assert!(
            sol.reduction() < 0.1,
            "dx = {dx}: reduction {}",
            sol.reduction()
        );
    }
}
