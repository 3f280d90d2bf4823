use chaoslab::poisson::*;

fn main() {
    for (s, sigma) in [(0.5, 1.0), (1.0, 1.0), (2.0, 1.0), (0.5, 1.3), (0.7, 1.3), (2.0, 1.3)] {
        let grid = Grid1d::default_for_sigma(sigma);
        let problem = PoissonProblem::from_fn(sigma, grid, |x| smooth_step_psi(x, s, sigma)).unwrap();
        let sol = solve(&problem).unwrap();
        let sup = grid
            .points()
            .iter()
            .enumerate()
            .map(|(i, &x)| (sol.f[i] - smooth_step_solution(x, s)).abs())
            .fold(0.0f64, f64::max);
        println!(
            "s={s} sigma={sigma}: residual={:.2e} asymptote={:+.6} predicted={:+.6} sup_err={:.2e}",
            sol.residual_norm, sol.asymptote, sol.predicted_asymptote, sup
        );
    }
    let sigma = 1.0;
    let grid = Grid1d::default_for_sigma(sigma);
    let problem = PoissonProblem::new(sigma, grid, psi0_samples(&grid, sigma)).unwrap();
    let sol = solve(&problem).unwrap();
    println!(
        "psi0 sigma=1: residual={:.2e} asymptote={:+.6} predicted={:+.6}",
        sol.residual_norm, sol.asymptote, sol.predicted_asymptote
    );
}
