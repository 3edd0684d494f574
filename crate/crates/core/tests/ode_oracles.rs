use std::sync::Arc;

use heavyball::dynamics::{GradientFlowProblem, HeavyBallProblem};
use heavyball::example_xy::{conserved_quantity, degenerate_closed_form, ExampleInit};
use heavyball::objectives::xy_objective;
use heavyball::ode::{integrate, IntegratorConfig};

fn tight(t_end: f64) -> IntegratorConfig {
    IntegratorConfig::new(t_end).with_tolerances(1e-10, 1e-12)
}

fn grid(t_end: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..=n).map(move |i| t_end * i as f64 / n as f64)
}

// γx' = −2x(x² + 1) has w = x² with w/(1+w) decaying like e^{-4t/γ}.
fn decoupled_exact(x0: f64, gamma: f64, t: f64) -> f64 {
    let q0 = x0 * x0 / (1.0 + x0 * x0);
    let q = q0 * (-4.0 * t / gamma).exp();
    x0.signum() * (q / (1.0 - q)).sqrt()
}

#[test]
fn decoupled_scalar_field_matches_closed_form() {
    for &(x0, gamma) in &[(1.0, 0.5), (-2.0, 1.0), (0.3, 0.25)] {
        let field = move |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = -2.0 * y[0] * (y[0] * y[0] + 1.0) / gamma;
        let traj = integrate(field, &[x0], &tight(10.0)).unwrap();
        for t in grid(10.0, 500) {
            let got = traj.dense_eval(t).unwrap()[0];
            let want = decoupled_exact(x0, gamma, t);
            assert!((got - want).abs() <= 1e-6, "x0={x0} γ={gamma} t={t}: {got} vs {want}");
        }
    }
}

#[test]
fn gradient_flow_matches_closed_form_over_parameter_grid() {
    for &a in &[0.5, 1.0, 2.0] {
        for &gamma in &[0.25, 0.5, 1.0] {
            let p = GradientFlowProblem::new(Arc::new(xy_objective()), gamma, vec![a, -a]).unwrap();
            let run = p.simulate(&tight(10.0), false).unwrap();
            let worst = grid(10.0, 1000)
                .map(|t| {
                    let x = run.position(t).unwrap();
                    let (cx, cy) = degenerate_closed_form(a, gamma, t);
                    (x[0] - cx).abs().max((x[1] - cy).abs())
                })
                .fold(0.0, f64::max);
            assert!(worst <= 1e-6, "a={a} γ={gamma}: sup error {worst:e}");
        }
    }
}

#[test]
fn gradient_flow_conserves_difference_of_squares_off_the_antidiagonal() {
    let p = GradientFlowProblem::new(Arc::new(xy_objective()), 0.5, vec![1.3, 0.2]).unwrap();
    let run = p.simulate(&tight(20.0), false).unwrap();
    let c0 = conserved_quantity(1.3, 0.2);
    for t in grid(20.0, 2000) {
        let x = run.position(t).unwrap();
        assert!((conserved_quantity(x[0], x[1]) - c0).abs() <= 1e-8, "t={t}");
    }
    // The run converges onto the hyperbola, not the origin.
    let end = run.final_position();
    assert!((end[0] * end[1] - 1.0).abs() < 1e-6);
}

#[test]
fn loosening_tolerance_moves_terminal_state_little() {
    let init = ExampleInit::reference();
    let loose = IntegratorConfig::new(50.0).with_tolerances(1e-6, 1e-8);
    let a = init.heavy_ball().simulate(&loose, false).unwrap();
    let b = init.heavy_ball().simulate(&tight(50.0), false).unwrap();
    let (ya, yb) = (a.trajectory.final_state(), b.trajectory.final_state());
    let gap = ya.iter().zip(yb).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    assert!(gap <= 1e-4, "terminal gap {gap:e}");
}

#[test]
fn heavy_ball_with_zero_velocity_on_a_quadratic_decays() {
    let obj = heavyball::objectives::objective_by_name("quadratic").unwrap();
    let p = HeavyBallProblem::new(obj, 0.05, 1.0, vec![1.0, -0.5], vec![0.0, 0.0]).unwrap();
    let run = p.simulate(&tight(40.0), false).unwrap();
    let x = run.final_position();
    assert!(x.iter().all(|c| c.abs() < 1e-8), "{x:?}");
}
