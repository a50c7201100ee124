//! Lower-level VI solver: fixed-point iteration of the dynamics y ← h(x, y)
//! until the displacement residual ‖h(x, y) − y‖₂ falls below tolerance.
//!
//! The residual is an exact optimality certificate: it vanishes precisely at
//! VI solutions, and under strong monotonicity with an admissible step it
//! contracts linearly.

use crate::dynamics::{step, DynamicsConfig};
use crate::error::{Error, Result};
use crate::problem::BilevelProblem;
use nalgebra::DVector;

#[derive(Debug, Clone, Copy)]
pub struct VISolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub record_trace: bool,
}

impl Default for VISolveOptions {
    fn default() -> Self {
        VISolveOptions {
            tol: 1e-10,
            max_iter: 100_000,
            record_trace: false,
        }
    }
}

/// Result of a fixed-point solve.
#[derive(Debug, Clone)]
pub struct VISolution {
    pub y_star: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub residual_history: Option<Vec<f64>>,
}

/// Iterates the dynamics from `y0` until ‖h(x, y) − y‖₂ ≤ tol.
///
/// The returned point is the one at which the residual was measured, so the
/// bound holds exactly for it.
pub fn solve_vi(
    problem: &BilevelProblem,
    config: &DynamicsConfig,
    x: &DVector<f64>,
    y0: &DVector<f64>,
    opts: &VISolveOptions,
) -> Result<VISolution> {
    if opts.tol <= 0.0 || opts.max_iter == 0 {
        return Err(Error::InvalidConfig(
            "VISolveOptions requires tol > 0 and max_iter >= 1".into(),
        ));
    }
    let mut y = y0.clone();
    let mut history = if opts.record_trace { Some(Vec::new()) } else { None };
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let y_next = step(problem, config, x, &y)?;
        residual = (&y_next - &y).norm();
        if let Some(h) = history.as_mut() {
            h.push(residual);
        }
        if residual <= opts.tol {
            return Ok(VISolution {
                y_star: y,
                iterations: it,
                residual,
                residual_history: history,
            });
        }
        y = y_next;
    }
    Err(Error::Convergence {
        what: "VI fixed-point iteration",
        iterations: opts.max_iter,
        residual,
        history: history.unwrap_or_else(|| vec![residual]),
        last: y.iter().copied().collect(),
    })
}

/// ‖h(x, y) − y‖₂; zero exactly at VI solutions.
pub fn vi_residual(
    problem: &BilevelProblem,
    config: &DynamicsConfig,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<f64> {
    let y_next = step(problem, config, x, y)?;
    Ok((y_next - y).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::make_duopoly;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s1(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn duopoly_best_responses() {
        let p = make_duopoly();
        let cfg = DynamicsConfig::projection(0.4, 1);
        let opts = VISolveOptions::default();
        let sol = solve_vi(&p, &cfg, &s1(0.5), &s1(0.9), &opts).unwrap();
        assert!((sol.y_star[0] - 0.25).abs() < 1e-8);
        let sol = solve_vi(&p, &cfg, &s1(1.0 / 3.0), &s1(0.9), &opts).unwrap();
        assert!((sol.y_star[0] - 1.0 / 3.0).abs() < 1e-8);
        // boundary equilibrium: best response max{(1-x)/2, 0} = 0 at x = 1
        let sol = solve_vi(&p, &cfg, &s1(1.0), &s1(0.9), &opts).unwrap();
        assert!(sol.y_star[0].abs() < 1e-9);
    }

    #[test]
    fn duopoly_closed_form_over_grid() {
        let p = make_duopoly();
        let cfg = DynamicsConfig::projection(0.4, 1);
        let opts = VISolveOptions { tol: 1e-12, ..VISolveOptions::default() };
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            let sol = solve_vi(&p, &cfg, &s1(x), &s1(0.5), &opts).unwrap();
            let expected = ((1.0 - x) / 2.0).max(0.0);
            assert!(
                (sol.y_star[0] - expected).abs() < 1e-8,
                "x={x} got {} want {expected}",
                sol.y_star[0]
            );
        }
    }

    #[test]
    fn residual_reference_values() {
        let p = make_duopoly();
        let cfg = DynamicsConfig::projection(0.4, 1);
        let r = vi_residual(&p, &cfg, &s1(0.5), &s1(0.25)).unwrap();
        assert!(r.abs() < 1e-15);
        // |max{0.5 - 0.4*(0.5 + 1 - 1), 0} - 0.5| = 0.2
        let r = vi_residual(&p, &cfg, &s1(0.5), &s1(0.5)).unwrap();
        assert!((r - 0.2).abs() < 1e-15);
    }

    #[test]
    fn solution_independent_of_start() {
        let p = make_duopoly();
        let cfg = DynamicsConfig::projection(0.4, 1);
        let opts = VISolveOptions { tol: 1e-10, ..VISolveOptions::default() };
        let a = solve_vi(&p, &cfg, &s1(0.4), &s1(0.0), &opts).unwrap();
        let b = solve_vi(&p, &cfg, &s1(0.4), &s1(5.0), &opts).unwrap();
        assert!((a.y_star[0] - b.y_star[0]).abs() <= 10.0 * opts.tol);
    }

    #[test]
    fn tail_contraction_ratio_bounded_by_sqrt_eta() {
        // duopoly: γ = 2, L_y = 2, r = 0.4 ⇒ η = 0.04, √η = 0.2
        let p = make_duopoly();
        let cfg = DynamicsConfig::projection(0.4, 1);
        let opts = VISolveOptions {
            tol: 1e-12,
            record_trace: true,
            ..VISolveOptions::default()
        };
        let sol = solve_vi(&p, &cfg, &s1(0.37), &s1(3.0), &opts).unwrap();
        let hist = sol.residual_history.unwrap();
        for w in hist.windows(2).skip(2) {
            if w[0] > 1e-13 {
                assert!(w[1] / w[0] <= 0.2 + 0.05, "ratio {}", w[1] / w[0]);
            }
        }
    }

    #[test]
    fn exhaustion_reports_convergence_error() {
        let p = make_duopoly();
        let cfg = DynamicsConfig::projection(0.4, 1);
        let opts = VISolveOptions { tol: 1e-16, max_iter: 3, record_trace: true };
        match solve_vi(&p, &cfg, &s1(0.5), &s1(5.0), &opts) {
            Err(Error::Convergence { history, .. }) => assert_eq!(history.len(), 3),
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn solved_point_satisfies_vi_inequality() {
        let p = make_duopoly();
        let cfg = DynamicsConfig::projection(0.4, 1);
        let sol = solve_vi(&p, &cfg, &s1(0.5), &s1(0.9), &VISolveOptions::default()).unwrap();
        let f = p.lower(&s1(0.5), &sol.y_star);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let y: DVector<f64> = p.set_y.sample(&mut rng);
            let inner = f.dot(&(&y - &sol.y_star));
            assert!(inner >= -1e-6, "VI inequality violated: {inner}");
        }
        let _ = rng.gen::<f64>();
    }
}
