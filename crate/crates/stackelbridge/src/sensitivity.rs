//! Baseline hypergradients through the lower-level fixed point: exact implicit
//! differentiation, the Neumann-truncated approximation, and the decay
//! diagnostic comparing ∇_x h^(T) at the fixed point against ∂y*/∂x.

use crate::dynamics::{step_derivatives, unroll_with_jacobians, DynamicsConfig, StepKind};
use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::problem::BilevelProblem;
use crate::sets::{project, FeasibleSet};
use crate::vi::{solve_vi, vi_residual, VISolveOptions};
use nalgebra::{DMatrix, DVector};

const SOLVED_RESIDUAL: f64 = 1e-8;

/// How a hypergradient was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HypergradMethod {
    ImplicitExact,
    NeumannTruncated(usize),
    Unrolled(usize),
}

/// A hypergradient together with quality diagnostics.
#[derive(Debug, Clone)]
pub struct HypergradReport {
    pub grad: DVector<f64>,
    pub method: HypergradMethod,
    /// residual of the VI solve that produced the base point
    pub solve_residual: f64,
    /// ‖(I − ∇_y h)⁻¹‖₂ estimate; meaningful for ImplicitExact
    pub condition_note: f64,
}

/// ∂y*/∂x = ∇_x h(x, y*) · (I − ∇_y h(x, y*))⁻¹, computed through one n×n LU
/// solve (no inverse beyond n×n is materialized).
pub fn implicit_jacobian(
    problem: &BilevelProblem,
    config: &DynamicsConfig,
    x: &DVector<f64>,
    y_star: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let res = vi_residual(problem, config, x, y_star)?;
    if res > SOLVED_RESIDUAL {
        return Err(Error::InvalidConfig(format!(
            "implicit_jacobian requires a solved fixed point (residual {res:.3e} > {SOLVED_RESIDUAL:.0e})"
        )));
    }
    warn_on_kinks(problem, config, x, y_star);
    let sd = step_derivatives(problem, config, x, y_star)?;
    let n = problem.dim_y;
    let a_t = (DMatrix::identity(n, n) - &sd.jac_y).transpose();
    let lu = a_t.lu();
    match lu.solve(&sd.jac_x.transpose()) {
        Some(jt) => Ok(jt.transpose()),
        None => Err(Error::SingularSystem),
    }
}

/// Truncated Neumann approximation ∇_x h · Σ_{i=0}^{k} (∇_y h)^i.
pub fn neumann_jacobian(
    problem: &BilevelProblem,
    config: &DynamicsConfig,
    x: &DVector<f64>,
    y_star: &DVector<f64>,
    k: usize,
) -> Result<DMatrix<f64>> {
    let sd = step_derivatives(problem, config, x, y_star)?;
    let n = problem.dim_y;
    let mut partial = DMatrix::identity(n, n);
    let mut power = DMatrix::identity(n, n);
    for _ in 1..=k {
        power *= &sd.jac_y;
        partial += &power;
    }
    Ok(sd.jac_x * partial)
}

fn feasible_origin(set: &FeasibleSet) -> DVector<f64> {
    project(set, &DVector::zeros(set.dim())).expect("projection of the origin")
}

fn assemble(
    problem: &BilevelProblem,
    x: &DVector<f64>,
    y_star: &DVector<f64>,
    jac: &DMatrix<f64>,
) -> DVector<f64> {
    (problem.grad_upper_x)(x, y_star) + jac * (problem.grad_upper_y)(x, y_star)
}

/// Exact hypergradient ∇l*(x) = ∇_x l(x, y*) + ∂y*/∂x · ∇_y l(x, y*): solves
/// the VI, implicitly differentiates, assembles.
pub fn hypergrad_exact(
    problem: &BilevelProblem,
    config: &DynamicsConfig,
    x: &DVector<f64>,
    opts: &VISolveOptions,
) -> Result<HypergradReport> {
    let y0 = feasible_origin(&problem.set_y);
    let sol = solve_vi(problem, config, x, &y0, opts)?;
    let jac = implicit_jacobian(problem, config, x, &sol.y_star)?;
    let sd = step_derivatives(problem, config, x, &sol.y_star)?;
    let n = problem.dim_y;
    let condition_note = (DMatrix::identity(n, n) - &sd.jac_y)
        .lu()
        .try_inverse()
        .map(|inv| spectral_norm(&inv))
        .unwrap_or(f64::INFINITY);
    Ok(HypergradReport {
        grad: assemble(problem, x, &sol.y_star, &jac),
        method: HypergradMethod::ImplicitExact,
        solve_residual: sol.residual,
        condition_note,
    })
}

/// Hypergradient with the Neumann-truncated Jacobian in place of the exact one.
pub fn hypergrad_neumann(
    problem: &BilevelProblem,
    config: &DynamicsConfig,
    x: &DVector<f64>,
    k: usize,
    opts: &VISolveOptions,
) -> Result<HypergradReport> {
    let y0 = feasible_origin(&problem.set_y);
    let sol = solve_vi(problem, config, x, &y0, opts)?;
    let jac = neumann_jacobian(problem, config, x, &sol.y_star, k)?;
    Ok(HypergradReport {
        grad: assemble(problem, x, &sol.y_star, &jac),
        method: HypergradMethod::NeumannTruncated(k),
        solve_residual: sol.residual,
        condition_note: f64::NAN,
    })
}

/// Hypergradient from the T-step unrolled Jacobian evaluated at the fixed point.
pub fn hypergrad_unrolled(
    problem: &BilevelProblem,
    config: &DynamicsConfig,
    x: &DVector<f64>,
    t_horizon: usize,
    opts: &VISolveOptions,
) -> Result<HypergradReport> {
    let y0 = feasible_origin(&problem.set_y);
    let sol = solve_vi(problem, config, x, &y0, opts)?;
    let state =
        unroll_with_jacobians(problem, &config.with_horizon(t_horizon), x, &sol.y_star)?;
    Ok(HypergradReport {
        grad: assemble(problem, x, &state.y_t, &state.jac_x),
        method: HypergradMethod::Unrolled(t_horizon),
        solve_residual: sol.residual,
        condition_note: f64::NAN,
    })
}

/// Gap sequence gap(T) = ‖∂y*/∂x − ∇_x h^(T)(x, y*)‖₂ with a least-squares
/// geometric rate fitted on the positive entries.
#[derive(Debug, Clone)]
pub struct DecayReport {
    pub gaps: Vec<(usize, f64)>,
    pub fitted_rate: f64,
}

pub fn unroll_vs_exact_decay(
    problem: &BilevelProblem,
    config: &DynamicsConfig,
    x: &DVector<f64>,
    t_list: &[usize],
) -> Result<DecayReport> {
    let y0 = feasible_origin(&problem.set_y);
    let sol = solve_vi(problem, config, x, &y0, &VISolveOptions::default())?;
    let exact = implicit_jacobian(problem, config, x, &sol.y_star)?;
    let mut gaps = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let state = unroll_with_jacobians(problem, &config.with_horizon(t), x, &sol.y_star)?;
        gaps.push((t, spectral_norm(&(&exact - &state.jac_x))));
    }
    Ok(DecayReport {
        fitted_rate: fit_geometric_rate(&gaps),
        gaps,
    })
}

fn fit_geometric_rate(gaps: &[(usize, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = gaps
        .iter()
        .filter(|(_, g)| *g > 1e-14)
        .map(|(t, g)| (*t as f64, g.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    slope.exp()
}

/// Logs when the projection argument sits numerically on a kink, where the
/// active-set Jacobian is a one-sided selection.
fn warn_on_kinks(
    problem: &BilevelProblem,
    config: &DynamicsConfig,
    x: &DVector<f64>,
    y: &DVector<f64>,
) {
    if config.kind != StepKind::Projection {
        return;
    }
    let z = y - config.r * problem.lower(x, y);
    if let Some(i) = kink_coordinate(&problem.set_y, &z) {
        log::debug!("projection argument coordinate {i} is within 1e-9 of a kink");
    }
}

fn kink_coordinate(set: &FeasibleSet, z: &DVector<f64>) -> Option<usize> {
    const EPS: f64 = 1e-9;
    match set {
        FeasibleSet::Box { lower, upper } => (0..z.len()).find(|&i| {
            (z[i] - lower[i]).abs() < EPS && lower[i].is_finite()
                || (z[i] - upper[i]).abs() < EPS && upper[i].is_finite()
        }),
        FeasibleSet::Simplex(_) => {
            let p = project(set, z).ok()?;
            (0..z.len()).find(|&i| p[i].abs() < EPS && p[i] != 0.0)
        }
        FeasibleSet::NonnegWithFixedZeros { .. } => {
            (0..z.len()).find(|&i| z[i].abs() < EPS && z[i] != 0.0)
        }
        FeasibleSet::Product(parts) => {
            let mut off = 0;
            for p in parts {
                let n = p.dim();
                if let Some(i) = kink_coordinate(p, &z.rows(off, n).into_owned()) {
                    return Some(off + i);
                }
                off += n;
            }
            None
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::make_duopoly;

    fn s1(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    fn duopoly_cfg() -> DynamicsConfig {
        DynamicsConfig::projection(0.4, 1)
    }

    #[test]
    fn implicit_jacobian_interior_and_boundary() {
        let p = make_duopoly();
        let j = implicit_jacobian(&p, &duopoly_cfg(), &s1(0.5), &s1(0.25)).unwrap();
        assert!((j[(0, 0)] + 0.5).abs() < 1e-14, "dy*/dx = {}", j[(0, 0)]);
        // clamped branch at x = 1, y* = 0
        let j = implicit_jacobian(&p, &duopoly_cfg(), &s1(1.0), &s1(0.0)).unwrap();
        assert_eq!(j[(0, 0)], 0.0);
    }

    #[test]
    fn implicit_jacobian_rejects_unsolved_points() {
        let p = make_duopoly();
        assert!(implicit_jacobian(&p, &duopoly_cfg(), &s1(0.5), &s1(0.6)).is_err());
    }

    #[test]
    fn implicit_jacobian_satisfies_fixed_point_equation() {
        let p = make_duopoly();
        let x = s1(0.5);
        let y = s1(0.25);
        let j = implicit_jacobian(&p, &duopoly_cfg(), &x, &y).unwrap();
        let sd = step_derivatives(&p, &duopoly_cfg(), &x, &y).unwrap();
        let lhs = &j - (&sd.jac_x + &j * &sd.jac_y);
        assert!(spectral_norm(&lhs) < 1e-10);
    }

    #[test]
    fn neumann_partial_sums() {
        let p = make_duopoly();
        let x = s1(0.5);
        let y = s1(0.25);
        let j0 = neumann_jacobian(&p, &duopoly_cfg(), &x, &y, 0).unwrap();
        assert!((j0[(0, 0)] + 0.4).abs() < 1e-14);
        let j1 = neumann_jacobian(&p, &duopoly_cfg(), &x, &y, 1).unwrap();
        assert!((j1[(0, 0)] + 0.48).abs() < 1e-14);
        let exact = implicit_jacobian(&p, &duopoly_cfg(), &x, &y).unwrap();
        let jbig = neumann_jacobian(&p, &duopoly_cfg(), &x, &y, 40).unwrap();
        assert!((jbig[(0, 0)] - exact[(0, 0)]).abs() < 1e-8);
    }

    #[test]
    fn exact_hypergradient_closed_forms() {
        let p = make_duopoly();
        let opts = VISolveOptions { tol: 1e-12, ..VISolveOptions::default() };
        let g = hypergrad_exact(&p, &duopoly_cfg(), &s1(0.5), &opts).unwrap();
        assert!(g.grad[0].abs() < 1e-9, "stationary point: {}", g.grad[0]);
        let g = hypergrad_exact(&p, &duopoly_cfg(), &s1(0.25), &opts).unwrap();
        assert!((g.grad[0] + 0.25).abs() < 1e-9);
        // clamped branch: d/dx of -x(1-x) is 2x - 1 = 1 at x = 1
        let g = hypergrad_exact(&p, &duopoly_cfg(), &s1(1.0), &opts).unwrap();
        assert!((g.grad[0] - 1.0).abs() < 1e-9);
        assert!(g.condition_note >= 1.0);
        assert_eq!(g.method, HypergradMethod::ImplicitExact);
    }

    #[test]
    fn decay_matches_scalar_geometric_series() {
        let p = make_duopoly();
        let t_list: Vec<usize> = (0..=10).collect();
        let rep = unroll_vs_exact_decay(&p, &duopoly_cfg(), &s1(0.5), &t_list).unwrap();
        for &(t, gap) in &rep.gaps {
            let expected = 0.5 * 0.2_f64.powi(t as i32);
            assert!(
                (gap - expected).abs() < 1e-10,
                "T={t}: gap {gap} vs {expected}"
            );
        }
        // monotone nonincreasing, fitted rate close to √η = 0.2
        for w in rep.gaps.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-12);
        }
        assert!((rep.fitted_rate - 0.2).abs() < 1e-6, "rate {}", rep.fitted_rate);
    }

    #[test]
    fn unrolled_hypergrad_approaches_exact() {
        let p = make_duopoly();
        let opts = VISolveOptions { tol: 1e-12, ..VISolveOptions::default() };
        let exact = hypergrad_exact(&p, &duopoly_cfg(), &s1(0.3), &opts).unwrap();
        let mut prev = f64::INFINITY;
        for t in [1usize, 3, 6, 12] {
            let u = hypergrad_unrolled(&p, &duopoly_cfg(), &s1(0.3), t, &opts).unwrap();
            let err = (u.grad[0] - exact.grad[0]).abs();
            assert!(err <= prev + 1e-12);
            prev = err;
        }
        assert!(prev < 1e-6);
    }
}
