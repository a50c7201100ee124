//! One-step follower dynamics h(x, y), the T-step unroll h^(T), the composite
//! objective l^(T)(x, y) = l(x, h^(T)(x, y)), and forward propagation of its
//! Jacobians.
//!
//! Two step kinds are supported. Projection: h(x, y) = g(y − r·f(x, y)) with g
//! the Euclidean projection onto Y. Mirror (KL geometry, simplex blocks only):
//! the normalized multiplicative update h_k = y_k·e^{−r f_k} / Σ_j y_j·e^{−r f_j}
//! per block.
//!
//! Jacobians are accumulated forward with the chain-rule recursions
//!   ∇_x h^(t) = ∇_x h + ∇_x h^(t−1) · ∇_y h,
//!   ∇_y h^(t) = ∇_y h^(t−1) · ∇_y h,
//! with the one-step Jacobians evaluated at (x, y^{t−1}) and all matrices
//! row-indexed by the input variable (see `problem`).

use crate::error::{Error, Result};
use crate::problem::{eval_upper, BilevelProblem};
use crate::sets::{project, projection_jacobian_structured, FeasibleSet};
use nalgebra::{DMatrix, DVector};

/// Which one-step map drives the followers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Projection,
    Mirror,
}

/// Step kind, intrinsic step r and unroll horizon T.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsConfig {
    pub kind: StepKind,
    pub r: f64,
    pub t_horizon: usize,
}

impl DynamicsConfig {
    pub fn projection(r: f64, t_horizon: usize) -> Self {
        DynamicsConfig { kind: StepKind::Projection, r, t_horizon }
    }

    pub fn mirror(r: f64, t_horizon: usize) -> Self {
        DynamicsConfig { kind: StepKind::Mirror, r, t_horizon }
    }

    pub fn with_horizon(self, t_horizon: usize) -> Self {
        DynamicsConfig { t_horizon, ..self }
    }

    fn validate(&self, problem: &BilevelProblem) -> Result<()> {
        if self.r <= 0.0 {
            return Err(Error::InvalidConfig("dynamics step r must be positive".into()));
        }
        if self.kind == StepKind::Mirror && !problem.set_y.is_simplex_product() {
            return Err(Error::InvalidConfig(
                "mirror dynamics require set_y to be a simplex or a product of simplexes".into(),
            ));
        }
        Ok(())
    }
}

/// Iterate y^t together with the propagated Jacobians of h^(t).
///
/// At t = 0: y_t = y⁰, jac_x = 0 (m×n), jac_y = I (n×n), matching
/// h^(0)(x, y) := y.
#[derive(Debug, Clone)]
pub struct UnrollState {
    pub y_t: DVector<f64>,
    pub jac_x: DMatrix<f64>,
    pub jac_y: DMatrix<f64>,
    pub t: usize,
}

/// Numerical floor for mirror iterates: subnormal positive masses are lifted
/// here so a block can never renormalize against zero.
const MIRROR_FLOOR: f64 = 1e-300;

/// One step of the follower dynamics.
pub fn step(
    problem: &BilevelProblem,
    config: &DynamicsConfig,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    config.validate(problem)?;
    match config.kind {
        StepKind::Projection => {
            let f = problem.lower(x, y);
            project(&problem.set_y, &(y - config.r * f))
        }
        StepKind::Mirror => {
            let f = problem.lower(x, y);
            mirror_update(&problem.set_y, y, &f, config.r)
        }
    }
}

fn mirror_update(
    set_y: &FeasibleSet,
    y: &DVector<f64>,
    f: &DVector<f64>,
    r: f64,
) -> Result<DVector<f64>> {
    let mut out = y.clone();
    for (offset, len) in set_y.simplex_blocks() {
        // exact zeros persist (the multiplicative update cannot re-enter the
        // support); a zero coordinate whose cost pulls it back in is a
        // modelling degeneracy we refuse to silently misrepresent
        for k in 0..len {
            if y[offset + k] == 0.0 && f[offset + k] < 0.0 {
                return Err(Error::DegenerateSupport {
                    index: offset + k,
                    cost: f[offset + k],
                });
            }
        }
        let mut shift = f64::INFINITY;
        for k in 0..len {
            shift = shift.min(r * f[offset + k]);
        }
        let mut total = 0.0;
        for k in 0..len {
            let yk = y[offset + k];
            let mass = if yk == 0.0 { 0.0 } else { yk.max(MIRROR_FLOOR) };
            let w = mass * (-(r * f[offset + k] - shift)).exp();
            out[offset + k] = w;
            total += w;
        }
        if !(total > 0.0) {
            return Err(Error::Numerical {
                context: "mirror_update",
                x: vec![],
                y: y.iter().copied().collect(),
            });
        }
        for k in 0..len {
            out[offset + k] /= total;
        }
    }
    Ok(out)
}

/// One-step Jacobians together with the advanced iterate.
#[derive(Debug, Clone)]
pub struct StepDerivatives {
    /// ∇_x h at (x, y), m×n.
    pub jac_x: DMatrix<f64>,
    /// ∇_y h at (x, y), n×n.
    pub jac_y: DMatrix<f64>,
    pub y_next: DVector<f64>,
}

/// Jacobians of the one-step map h(x, ·) at (x, y), plus h(x, y) itself.
pub fn step_derivatives(
    problem: &BilevelProblem,
    config: &DynamicsConfig,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<StepDerivatives> {
    let m = problem.dim_x;
    let n = problem.dim_y;
    let f = problem.lower(x, y);
    let jf_x = (problem.jac_lower_x)(x, y);
    let jf_y = (problem.jac_lower_y)(x, y);
    match config.kind {
        StepKind::Projection => {
            let z = y - config.r * &f;
            let jg = projection_jacobian_structured(&problem.set_y, &z)?;
            let y_next = project(&problem.set_y, &z)?;
            let mut inner = DMatrix::identity(n, n) - config.r * jf_y;
            let jac_y = jg.right_mul(&inner);
            inner = -config.r * jf_x;
            let jac_x = jg.right_mul(&inner);
            Ok(StepDerivatives { jac_x, jac_y, y_next })
        }
        StepKind::Mirror => {
            let y_next = mirror_update(&problem.set_y, y, &f, config.r)?;
            let r = config.r;
            let mut jac_y = DMatrix::zeros(n, n);
            let mut jac_x = DMatrix::zeros(m, n);
            for (offset, len) in problem.set_y.simplex_blocks() {
                let mut shift = f64::INFINITY;
                for k in 0..len {
                    shift = shift.min(r * f[offset + k]);
                }
                let mut e = vec![0.0; len];
                let mut yc = vec![0.0; len];
                let mut total = 0.0;
                for k in 0..len {
                    let yk = y[offset + k];
                    yc[k] = if yk == 0.0 { 0.0 } else { yk.max(MIRROR_FLOOR) };
                    e[k] = (-(r * f[offset + k] - shift)).exp();
                    total += yc[k] * e[k];
                }
                let h: Vec<f64> = (0..len).map(|k| yc[k] * e[k] / total).collect();
                // ∂h_k/∂y_i = Dφ_ik/S − h_k · (Σ_j Dφ_ij)/S with
                // Dφ_ik = e_k (δ_ik − r·y_k·(∇_y f)_ik)
                for i in 0..n {
                    let mut rowsum = 0.0;
                    let mut dphi = vec![0.0; len];
                    for k in 0..len {
                        let delta = if i == offset + k { 1.0 } else { 0.0 };
                        dphi[k] = e[k] * (delta - r * yc[k] * jf_y[(i, offset + k)]);
                        rowsum += dphi[k];
                    }
                    for k in 0..len {
                        jac_y[(i, offset + k)] = dphi[k] / total - h[k] * rowsum / total;
                    }
                }
                // ∂h_k/∂x_a = r·h_k (Σ_j h_j (∇_x f)_aj − (∇_x f)_ak)
                for a in 0..m {
                    let mut avg = 0.0;
                    for j in 0..len {
                        avg += h[j] * jf_x[(a, offset + j)];
                    }
                    for k in 0..len {
                        jac_x[(a, offset + k)] = r * h[k] * (avg - jf_x[(a, offset + k)]);
                    }
                }
            }
            Ok(StepDerivatives { jac_x, jac_y, y_next })
        }
    }
}

/// T-fold iteration of the dynamics. With `trace` requested, returns every
/// intermediate iterate y^0, …, y^T.
pub fn unroll(
    problem: &BilevelProblem,
    config: &DynamicsConfig,
    x: &DVector<f64>,
    y0: &DVector<f64>,
    record_trace: bool,
) -> Result<(DVector<f64>, Option<Vec<DVector<f64>>>)> {
    config.validate(problem)?;
    let mut y = y0.clone();
    let mut trace = if record_trace { Some(vec![y.clone()]) } else { None };
    for _ in 0..config.t_horizon {
        y = step(problem, config, x, &y)?;
        if let Some(t) = trace.as_mut() {
            t.push(y.clone());
        }
    }
    Ok((y, trace))
}

/// T-fold iteration with forward accumulation of ∇_x h^(T) and ∇_y h^(T).
pub fn unroll_with_jacobians(
    problem: &BilevelProblem,
    config: &DynamicsConfig,
    x: &DVector<f64>,
    y0: &DVector<f64>,
) -> Result<UnrollState> {
    config.validate(problem)?;
    let m = problem.dim_x;
    let n = problem.dim_y;
    let mut state = UnrollState {
        y_t: y0.clone(),
        jac_x: DMatrix::zeros(m, n),
        jac_y: DMatrix::identity(n, n),
        t: 0,
    };
    for t in 0..config.t_horizon {
        let sd = step_derivatives(problem, config, x, &state.y_t)?;
        state.jac_x = &sd.jac_x + &state.jac_x * &sd.jac_y;
        state.jac_y = if t == 0 { sd.jac_y } else { &state.jac_y * &sd.jac_y };
        state.y_t = sd.y_next;
        state.t = t + 1;
    }
    Ok(state)
}

/// l^(T)(x, y0) together with its gradients
/// ∇_x l^(T) = ∇_x l + ∇_x h^(T)·∇_y l and ∇_y l^(T) = ∇_y h^(T)·∇_y l,
/// everything evaluated at (x, h^(T)(x, y0)).
pub fn grad_lt(
    problem: &BilevelProblem,
    config: &DynamicsConfig,
    x: &DVector<f64>,
    y0: &DVector<f64>,
) -> Result<(f64, DVector<f64>, DVector<f64>)> {
    let state = unroll_with_jacobians(problem, config, x, y0)?;
    let value = eval_upper(problem, x, &state.y_t)?;
    let gy = (problem.grad_upper_y)(x, &state.y_t);
    let gx = (problem.grad_upper_x)(x, &state.y_t);
    let grad_x = gx + &state.jac_x * &gy;
    let grad_y = &state.jac_y * &gy;
    Ok((value, grad_x, grad_y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::make_duopoly;

    fn s1(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    #[test]
    fn duopoly_step_fixed_point() {
        let p = make_duopoly();
        let cfg = DynamicsConfig::projection(0.4, 1);
        let y = step(&p, &cfg, &s1(0.5), &s1(0.25)).unwrap();
        assert!((y[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn duopoly_step_from_origin() {
        let p = make_duopoly();
        let cfg = DynamicsConfig::projection(0.4, 1);
        // f(0,0) = -1, so one step moves to 0 + 0.4
        let y = step(&p, &cfg, &s1(0.0), &s1(0.0)).unwrap();
        assert!((y[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn mirror_uniform_costs_are_stationary() {
        let p = BilevelProblem {
            dim_x: 1,
            dim_y: 2,
            upper: Box::new(|_, _| 0.0),
            grad_upper_x: Box::new(|_, _| DVector::zeros(1)),
            grad_upper_y: Box::new(|_, _| DVector::zeros(2)),
            lower_map: Box::new(|_, _| DVector::zeros(2)),
            jac_lower_x: Box::new(|_, _| DMatrix::zeros(1, 2)),
            jac_lower_y: Box::new(|_, _| DMatrix::zeros(2, 2)),
            set_x: FeasibleSet::FullSpace(1),
            set_y: FeasibleSet::Simplex(2),
        };
        let cfg = DynamicsConfig::mirror(0.7, 1);
        let y = step(&p, &cfg, &s1(0.0), &DVector::from_column_slice(&[0.5, 0.5])).unwrap();
        assert!((y[0] - 0.5).abs() < 1e-15 && (y[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mirror_rejects_non_simplex_set() {
        let p = make_duopoly();
        let cfg = DynamicsConfig::mirror(0.4, 1);
        assert!(matches!(
            step(&p, &cfg, &s1(0.5), &s1(0.25)),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn mirror_degenerate_support_is_an_error() {
        let p = BilevelProblem {
            dim_x: 1,
            dim_y: 2,
            upper: Box::new(|_, _| 0.0),
            grad_upper_x: Box::new(|_, _| DVector::zeros(1)),
            grad_upper_y: Box::new(|_, _| DVector::zeros(2)),
            lower_map: Box::new(|_, _| DVector::from_column_slice(&[-1.0, 1.0])),
            jac_lower_x: Box::new(|_, _| DMatrix::zeros(1, 2)),
            jac_lower_y: Box::new(|_, _| DMatrix::zeros(2, 2)),
            set_x: FeasibleSet::FullSpace(1),
            set_y: FeasibleSet::Simplex(2),
        };
        let cfg = DynamicsConfig::mirror(0.5, 1);
        let y0 = DVector::from_column_slice(&[0.0, 1.0]);
        assert!(matches!(
            step(&p, &cfg, &s1(0.0), &y0),
            Err(Error::DegenerateSupport { index: 0, .. })
        ));
    }

    #[test]
    fn unroll_reaches_best_response() {
        let p = make_duopoly();
        let cfg = DynamicsConfig::projection(0.4, 200);
        let (y, _) = unroll(&p, &cfg, &s1(0.5), &s1(0.9), false).unwrap();
        assert!((y[0] - 0.25).abs() < 1e-12);
        let cfg50 = DynamicsConfig::projection(0.4, 50);
        let (y, _) = unroll(&p, &cfg50, &s1(1.0 / 3.0), &s1(0.1), false).unwrap();
        assert!((y[0] - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn unroll_zero_horizon_is_identity() {
        let p = make_duopoly();
        let cfg = DynamicsConfig::projection(0.4, 0);
        let (y, trace) = unroll(&p, &cfg, &s1(0.7), &s1(0.3), true).unwrap();
        assert_eq!(y[0], 0.3);
        assert_eq!(trace.unwrap().len(), 1);
    }

    #[test]
    fn jacobian_base_case_and_one_step() {
        let p = make_duopoly();
        let cfg0 = DynamicsConfig::projection(0.4, 0);
        let st = unroll_with_jacobians(&p, &cfg0, &s1(0.5), &s1(0.25)).unwrap();
        assert_eq!(st.jac_x[(0, 0)], 0.0);
        assert_eq!(st.jac_y[(0, 0)], 1.0);

        // clamp-free branch: ∇_y h = 1 − 2r = 0.2, ∇_x h = −r = −0.4
        let cfg1 = DynamicsConfig::projection(0.4, 1);
        let st = unroll_with_jacobians(&p, &cfg1, &s1(0.5), &s1(0.25)).unwrap();
        assert!((st.jac_y[(0, 0)] - 0.2).abs() < 1e-15);
        assert!((st.jac_x[(0, 0)] + 0.4).abs() < 1e-15);
    }

    #[test]
    fn grad_lt_zero_horizon_collapses_to_plain_gradients() {
        let p = make_duopoly();
        let cfg = DynamicsConfig::projection(0.4, 0);
        let (x, y) = (s1(0.3), s1(0.4));
        let (_, gx, gy) = grad_lt(&p, &cfg, &x, &y).unwrap();
        let ex = (p.grad_upper_x)(&x, &y);
        let ey = (p.grad_upper_y)(&x, &y);
        assert!((gx - ex).norm() < 1e-15);
        assert!((gy - ey).norm() < 1e-15);
    }

    #[test]
    fn grad_lt_long_horizon_hits_stationarity_at_optimum() {
        // l*(x) = −x(1−x)/2 has its minimum at x = 1/2
        let p = make_duopoly();
        let cfg = DynamicsConfig::projection(0.4, 400);
        let (_, gx, _) = grad_lt(&p, &cfg, &s1(0.5), &s1(0.25)).unwrap();
        assert!(gx[0].abs() < 1e-10, "grad at optimum: {}", gx[0]);
    }

    #[test]
    fn grad_lt_matches_finite_differences() {
        let p = make_duopoly();
        for kind_cfg in [DynamicsConfig::projection(0.4, 3)] {
            let (x, y) = (s1(0.31), s1(0.27));
            let (_, gx, gy) = grad_lt(&p, &kind_cfg, &x, &y).unwrap();
            let h = 1e-6;
            let fx = |v: f64| grad_lt(&p, &kind_cfg, &s1(v), &y).unwrap().0;
            let fy = |v: f64| grad_lt(&p, &kind_cfg, &x, &s1(v)).unwrap().0;
            let fdx = (fx(0.31 + h) - fx(0.31 - h)) / (2.0 * h);
            let fdy = (fy(0.27 + h) - fy(0.27 - h)) / (2.0 * h);
            assert!((gx[0] - fdx).abs() / fdx.abs().max(1.0) < 1e-6);
            assert!((gy[0] - fdy).abs() / fdy.abs().max(1.0) < 1e-6);
        }
    }

    #[test]
    fn iterates_stay_feasible() {
        let p = make_duopoly();
        let cfg = DynamicsConfig::projection(0.4, 30);
        let (_, trace) = unroll(&p, &cfg, &s1(0.9), &s1(0.8), true).unwrap();
        for y in trace.unwrap() {
            assert!(p.set_y.contains(&y, 1e-10));
        }
    }
}
