//! First-order solvers for the T-step Cournot game and the T-step monopoly
//! model, the bracketing procedure that sandwiches the bilevel optimum between
//! them, adaptive re-initialization across a T schedule, multi-start scans,
//! and the a-priori gap bounds.
//!
//! Both solvers are single-loop simultaneous schemes. Cournot: the leader
//! takes a projected gradient step on ∇_x l^(T) while the followers advance
//! along their own dynamics; at a fixed point the pair satisfies the Cournot
//! VI. Monopoly: simultaneous proximal-gradient steps on x and y of l^(T).
//! For projection dynamics the y-step is a Euclidean projected step; for
//! mirror dynamics it is the KL-proximal (multiplicative-weights) step, which
//! keeps iterates strictly inside the simplex where the mirror chain is
//! differentiable with bounded Jacobians.

use crate::dynamics::{grad_lt, step, unroll_with_jacobians, DynamicsConfig, StepKind};
use crate::error::{Error, Result};
use crate::problem::{contraction_factor, BilevelProblem, BoundParams};
use crate::sets::project;
use crate::vi::{solve_vi, vi_residual, VISolveOptions};
use nalgebra::DVector;
use std::time::Instant;

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// leader step size α
    pub alpha: f64,
    /// follower step size β (monopoly only)
    pub beta: f64,
    /// joint displacement threshold ‖x⁺−x‖ + ‖y⁺−y‖
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            alpha: 0.05,
            beta: 0.05,
            tol: 1e-8,
            max_iter: 50_000,
            seed: 0,
            record_trace: false,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if self.alpha <= 0.0 || self.beta <= 0.0 || self.tol <= 0.0 {
            return Err(Error::InvalidConfig(
                "SolverOptions requires positive steps and tolerance".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Cournot,
    Monopoly,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Role::Cournot => write!(f, "cournot"),
            Role::Monopoly => write!(f, "monopoly"),
        }
    }
}

/// Outcome of a solver run. `objective` is l^(T) at the final pair.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub role: Role,
    pub x_final: DVector<f64>,
    pub y_final: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub converged: bool,
    /// per-iteration (objective, joint displacement)
    pub trace: Option<Vec<(f64, f64)>>,
}

/// Solves the T-step Cournot game: x by projected gradient on ∇_x l^(T),
/// y by following its own dynamics h^(max(T,1)) (so that T = 0 still drives
/// the followers toward equilibrium), both updates from the previous pair.
pub fn solve_cournot(
    problem: &BilevelProblem,
    config: &DynamicsConfig,
    opts: &SolverOptions,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
) -> Result<SolveReport> {
    opts.validate()?;
    let started = Instant::now();
    let follower_cfg = config.with_horizon(config.t_horizon.max(1));
    let mut x = x0.clone();
    let mut y = y0.clone();
    let mut trace = opts.record_trace.then(Vec::new);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let state = unroll_with_jacobians(problem, &follower_cfg, &x, &y)?;
        let (value, grad_x) = cournot_value_grad(problem, config, &x, &y, &state)?;
        let x_next = project(&problem.set_x, &(&x - opts.alpha * &grad_x))?;
        let y_next = state.y_t;
        let displacement = (&x_next - &x).norm() + (&y_next - &y).norm();
        if let Some(t) = trace.as_mut() {
            t.push((value, displacement));
        }
        x = x_next;
        y = y_next;
        if displacement <= opts.tol {
            let residual = vi_residual(problem, config, &x, &y)?;
            if residual <= 100.0 * opts.tol {
                converged = true;
                break;
            }
        }
    }
    let (objective, _, _) = grad_lt(problem, config, &x, &y)?;
    log::debug!("cournot T={} finished: obj={objective:.6} iters={iterations} converged={converged}", config.t_horizon);
    Ok(SolveReport {
        role: Role::Cournot,
        x_final: x,
        y_final: y,
        objective,
        iterations,
        wall_time_s: started.elapsed().as_secs_f64(),
        converged,
        trace,
    })
}

/// l^(T) value and ∇_x l^(T) from an unroll of h^(max(T,1)), truncating the
/// Jacobian recursion at the true horizon T.
fn cournot_value_grad(
    problem: &BilevelProblem,
    config: &DynamicsConfig,
    x: &DVector<f64>,
    y: &DVector<f64>,
    follower_state: &crate::dynamics::UnrollState,
) -> Result<(f64, DVector<f64>)> {
    if config.t_horizon == follower_state.t {
        let value = crate::problem::eval_upper(problem, x, &follower_state.y_t)?;
        let gy = (problem.grad_upper_y)(x, &follower_state.y_t);
        let grad_x = (problem.grad_upper_x)(x, &follower_state.y_t) + &follower_state.jac_x * gy;
        Ok((value, grad_x))
    } else {
        // T = 0 while the follower update used one step
        let (value, grad_x, _) = grad_lt(problem, config, x, y)?;
        Ok((value, grad_x))
    }
}

/// Solves the T-step monopoly model by simultaneous proximal-gradient steps
/// on (x, y) against ∇ l^(T).
pub fn solve_monopoly(
    problem: &BilevelProblem,
    config: &DynamicsConfig,
    opts: &SolverOptions,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
) -> Result<SolveReport> {
    opts.validate()?;
    let started = Instant::now();
    let mut x = x0.clone();
    let mut y = y0.clone();
    let mut trace = opts.record_trace.then(Vec::new);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let (value, grad_x, grad_y) = grad_lt(problem, config, &x, &y)?;
        let x_next = project(&problem.set_x, &(&x - opts.alpha * &grad_x))?;
        let y_next = follower_prox_step(problem, config, &y, &grad_y, opts.beta)?;
        let displacement = (&x_next - &x).norm() + (&y_next - &y).norm();
        if let Some(t) = trace.as_mut() {
            t.push((value, displacement));
        }
        x = x_next;
        y = y_next;
        if displacement <= opts.tol {
            converged = true;
            break;
        }
    }
    let (objective, _, _) = grad_lt(problem, config, &x, &y)?;
    log::debug!("monopoly T={} finished: obj={objective:.6} iters={iterations} converged={converged}", config.t_horizon);
    Ok(SolveReport {
        role: Role::Monopoly,
        x_final: x,
        y_final: y,
        objective,
        iterations,
        wall_time_s: started.elapsed().as_secs_f64(),
        converged,
        trace,
    })
}

fn follower_prox_step(
    problem: &BilevelProblem,
    config: &DynamicsConfig,
    y: &DVector<f64>,
    grad_y: &DVector<f64>,
    beta: f64,
) -> Result<DVector<f64>> {
    match config.kind {
        StepKind::Projection => project(&problem.set_y, &(y - beta * grad_y)),
        StepKind::Mirror => {
            // KL-proximal step: argmin β⟨g, y'−y⟩ + KL(y', y), blockwise
            let mut out = y.clone();
            for (offset, len) in problem.set_y.simplex_blocks() {
                let mut shift = f64::INFINITY;
                for k in 0..len {
                    shift = shift.min(beta * grad_y[offset + k]);
                }
                let mut total = 0.0;
                for k in 0..len {
                    let w = y[offset + k].max(1e-300)
                        * (-(beta * grad_y[offset + k] - shift)).exp();
                    out[offset + k] = w;
                    total += w;
                }
                for k in 0..len {
                    out[offset + k] /= total;
                }
            }
            Ok(out)
        }
    }
}

/// Upper and lower reports from the same start, with the upper pair refined
/// to lower-level feasibility before its objective is reported.
#[derive(Debug, Clone)]
pub struct BracketReport {
    pub upper: SolveReport,
    pub lower: SolveReport,
    pub gap: f64,
}

pub fn bracket(
    problem: &BilevelProblem,
    config: &DynamicsConfig,
    opts: &SolverOptions,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
) -> Result<BracketReport> {
    let mut upper = solve_cournot(problem, config, opts, x0, y0)?;
    let vi_opts = VISolveOptions {
        tol: opts.tol,
        max_iter: opts.max_iter.max(100_000),
        record_trace: false,
    };
    // feasibility refinement: report the upper bound at an actual equilibrium
    let refined = solve_vi(problem, config, &upper.x_final, &upper.y_final, &vi_opts)?;
    upper.y_final = refined.y_star;
    let (objective, _, _) = grad_lt(problem, config, &upper.x_final, &upper.y_final)?;
    upper.objective = objective;
    let lower = solve_monopoly(problem, config, opts, x0, y0)?;
    let gap = upper.objective - lower.objective;
    Ok(BracketReport { upper, lower, gap })
}

/// One stage of the adaptive schedule.
#[derive(Debug, Clone)]
pub struct AdaptiveStage {
    pub t_horizon: usize,
    pub bracket: BracketReport,
}

#[derive(Debug, Clone)]
pub struct AdaptiveReport {
    pub stages: Vec<AdaptiveStage>,
    /// index into `stages` of the accepted (or best) bracket
    pub best: usize,
    /// whether the gap tolerance was met before the schedule ran out
    pub converged: bool,
}

impl AdaptiveReport {
    pub fn best_bracket(&self) -> &BracketReport {
        &self.stages[self.best].bracket
    }
}

/// Adaptive-initialization bracketing: at each stage solve both models from
/// the current start; stop when the gap closes, otherwise warm-start the next
/// stage from the monopoly output pushed through its own dynamics,
/// (x0, y0) ← (x̂, h^(T)(x̂, ŷ)).
pub fn adaptive_bracket(
    problem: &BilevelProblem,
    config0: &DynamicsConfig,
    opts: &SolverOptions,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    t_schedule: &[usize],
    gap_tol: f64,
) -> Result<AdaptiveReport> {
    if t_schedule.is_empty() {
        return Err(Error::InvalidConfig("adaptive_bracket needs a nonempty schedule".into()));
    }
    if t_schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig("T schedule must be strictly increasing".into()));
    }
    let mut x_start = x0.clone();
    let mut y_start = y0.clone();
    let mut stages: Vec<AdaptiveStage> = Vec::new();
    for &t in t_schedule {
        let cfg = config0.with_horizon(t);
        let br = bracket(problem, &cfg, opts, &x_start, &y_start)?;
        let gap = br.gap;
        let monopoly_pair = (br.lower.x_final.clone(), br.lower.y_final.clone());
        stages.push(AdaptiveStage { t_horizon: t, bracket: br });
        if gap.abs() <= gap_tol {
            let best = stages.len() - 1;
            return Ok(AdaptiveReport { stages, best, converged: true });
        }
        // warm start from the monopoly output advanced along its dynamics
        let state = unroll_with_jacobians(problem, &cfg, &monopoly_pair.0, &monopoly_pair.1)?;
        x_start = monopoly_pair.0;
        y_start = state.y_t;
    }
    let best = stages
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.bracket.gap.abs().total_cmp(&b.1.bracket.gap.abs()))
        .map(|(i, _)| i)
        .unwrap();
    Ok(AdaptiveReport { stages, best, converged: false })
}

#[derive(Debug, Clone)]
pub struct MultiStartReport {
    /// all runs, sorted ascending by objective (failed runs at the end)
    pub reports: Vec<SolveReport>,
}

impl MultiStartReport {
    pub fn best(&self) -> &SolveReport {
        &self.reports[0]
    }

    pub fn objective_spread(&self) -> f64 {
        let finite: Vec<f64> = self
            .reports
            .iter()
            .filter(|r| r.objective.is_finite())
            .map(|r| r.objective)
            .collect();
        if finite.is_empty() {
            return f64::NAN;
        }
        let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }
}

/// Independent solves from randomly sampled feasible starts (Gaussian
/// projected, uniform on simplex blocks), run in parallel with per-run seeds
/// derived from the master seed. Failed runs are kept with converged = false
/// and an infinite objective.
pub fn multi_start(
    problem: &BilevelProblem,
    config: &DynamicsConfig,
    opts: &SolverOptions,
    n_starts: usize,
    seed: u64,
    which: Role,
) -> Result<MultiStartReport> {
    use rand::SeedableRng;
    if n_starts == 0 {
        return Err(Error::InvalidConfig("multi_start needs n_starts >= 1".into()));
    }
    let starts: Vec<(DVector<f64>, DVector<f64>)> = (0..n_starts)
        .map(|i| {
            let run_seed = seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(run_seed);
            (problem.set_x.sample(&mut rng), problem.set_y.sample(&mut rng))
        })
        .collect();

    let jobs = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(n_starts);
    let mut slots: Vec<Option<SolveReport>> = vec![None; n_starts];
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for worker in 0..jobs {
            let starts = &starts;
            handles.push(scope.spawn(move || {
                let mut local = Vec::new();
                let mut i = worker;
                while i < starts.len() {
                    let (x0, y0) = &starts[i];
                    let run = match which {
                        Role::Cournot => solve_cournot(problem, config, opts, x0, y0),
                        Role::Monopoly => solve_monopoly(problem, config, opts, x0, y0),
                    };
                    local.push((i, run));
                    i += jobs;
                }
                local
            }));
        }
        for h in handles {
            for (i, run) in h.join().expect("multi_start worker") {
                slots[i] = Some(match run {
                    Ok(rep) => rep,
                    Err(err) => {
                        log::warn!("multi_start run {i} failed: {err}");
                        SolveReport {
                            role: which,
                            x_final: starts[i].0.clone(),
                            y_final: starts[i].1.clone(),
                            objective: f64::INFINITY,
                            iterations: 0,
                            wall_time_s: 0.0,
                            converged: false,
                            trace: None,
                        }
                    }
                });
            }
        }
    });
    let mut reports: Vec<SolveReport> = slots.into_iter().map(|s| s.unwrap()).collect();
    reports.sort_by(|a, b| a.objective.total_cmp(&b.objective));
    Ok(MultiStartReport { reports })
}

/// A-priori gap bounds at horizon T under the γ = 1 normalization:
/// Cournot:  G_l·G_y·L_x·η^{T/2};
/// monopoly: M·G_l·η^{T/2} + G_y·d_max·(1 + H_xy + L_x·H_yy)·(T+1)·η^{T/2}
/// with M = 2·G_y·L_x + G_xy·d_max + 2·L_x·G_yy·d_max + G_y·H_x.
///
/// `g_l` overrides the default G_l = G_x + L_x·G_y.
pub fn bound_estimate(params: &BoundParams, g_l: Option<f64>, t: usize) -> Result<(f64, f64)> {
    if (params.gamma - 1.0).abs() > 1e-12 {
        return Err(Error::Normalization { gamma: params.gamma });
    }
    let eta = contraction_factor(params)?;
    let g_l = g_l.unwrap_or(params.g_x + params.l_x * params.g_y);
    let decay = eta.powf(t as f64 / 2.0);
    let cournot = g_l * params.g_y * params.l_x * decay;
    let m = 2.0 * params.g_y * params.l_x
        + params.g_xy * params.d_max
        + 2.0 * params.l_x * params.g_yy * params.d_max
        + params.g_y * params.h_x;
    let monopoly = m * g_l * decay
        + params.g_y
            * params.d_max
            * (1.0 + params.h_xy + params.l_x * params.h_yy)
            * (t as f64 + 1.0)
            * decay;
    Ok((cournot, monopoly))
}

/// Convenience wrapper dispatching on role.
pub fn solve(
    problem: &BilevelProblem,
    config: &DynamicsConfig,
    opts: &SolverOptions,
    x0: &DVector<f64>,
    y0: &DVector<f64>,
    which: Role,
) -> Result<SolveReport> {
    match which {
        Role::Cournot => solve_cournot(problem, config, opts, x0, y0),
        Role::Monopoly => solve_monopoly(problem, config, opts, x0, y0),
    }
}
