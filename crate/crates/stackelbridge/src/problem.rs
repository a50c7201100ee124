//! Bilevel problem abstraction and the constants behind the gap bounds.
//!
//! Sign convention: the library always **minimizes** the upper objective
//! l(x, y). Benchmarks that maximize (e.g. profit) negate l and recover the
//! reported values as −objective.
//!
//! Jacobian orientation, used everywhere: a Jacobian of a map g: R^a → R^b is
//! stored as an a×b matrix **row-indexed by the input variable**,
//! J[(i, k)] = ∂g_k/∂input_i. With this layout the chain-rule recursions for
//! the unrolled dynamics compose by plain matrix products and gradients pull
//! back as J · ∇.

use crate::error::{Error, Result};
use crate::sets::FeasibleSet;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type ScalarFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync;
type VectorFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;
type MatrixFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// A bilevel program: minimize l(x, y*) over x ∈ X subject to y* solving the
/// monotone variational inequality ⟨f(x, y*), y − y*⟩ ≥ 0 on Y.
///
/// All callables must be pure and re-entrant; instances are immutable after
/// construction and safe to share across threads. Problems supply analytic
/// Jacobians — there is no built-in automatic differentiation.
pub struct BilevelProblem {
    pub dim_x: usize,
    pub dim_y: usize,
    pub upper: Box<ScalarFn>,
    pub grad_upper_x: Box<VectorFn>,
    pub grad_upper_y: Box<VectorFn>,
    pub lower_map: Box<VectorFn>,
    /// ∇_x f, m×n, row-indexed by x.
    pub jac_lower_x: Box<MatrixFn>,
    /// ∇_y f, n×n, row-indexed by y.
    pub jac_lower_y: Box<MatrixFn>,
    pub set_x: FeasibleSet,
    pub set_y: FeasibleSet,
}

impl std::fmt::Debug for BilevelProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BilevelProblem")
            .field("dim_x", &self.dim_x)
            .field("dim_y", &self.dim_y)
            .field("set_x", &self.set_x)
            .field("set_y", &self.set_y)
            .finish()
    }
}

impl BilevelProblem {
    pub fn lower(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        (self.lower_map)(x, y)
    }
}

/// Evaluates the upper objective, rejecting non-finite results.
pub fn eval_upper(problem: &BilevelProblem, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    if x.len() != problem.dim_x {
        return Err(Error::Dimension {
            context: "eval_upper x",
            expected: problem.dim_x,
            got: x.len(),
        });
    }
    if y.len() != problem.dim_y {
        return Err(Error::Dimension {
            context: "eval_upper y",
            expected: problem.dim_y,
            got: y.len(),
        });
    }
    let v = (problem.upper)(x, y);
    if !v.is_finite() {
        return Err(Error::Numerical {
            context: "eval_upper",
            x: x.iter().copied().collect(),
            y: y.iter().copied().collect(),
        });
    }
    Ok(v)
}

/// Constants of the gap bounds and the contraction factor.
///
/// `gamma` is the strong-monotonicity modulus of f(x, ·); `l_x`, `l_y` bound
/// ‖∇_x f‖₂ and ‖∇_y f‖₂; the `g_*` constants bound the upper objective's
/// gradients and mixed second derivatives; the `h_*` constants bound the
/// one-step dynamics' derivatives; `d_max` is the diameter of Y and `r` the
/// intrinsic step of the dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub gamma: f64,
    pub l_x: f64,
    pub l_y: f64,
    pub g_x: f64,
    pub g_y: f64,
    pub g_xy: f64,
    pub g_yy: f64,
    pub h_x: f64,
    pub h_xy: f64,
    pub h_yy: f64,
    pub d_max: f64,
    pub r: f64,
}

impl BoundParams {
    /// Checks positivity and the admissibility condition r < 2γ/L_y².
    pub fn validate(&self) -> Result<()> {
        if self.gamma <= 0.0 || self.r <= 0.0 {
            return Err(Error::InvalidConfig(
                "BoundParams requires gamma > 0 and r > 0".into(),
            ));
        }
        let limit = 2.0 * self.gamma / (self.l_y * self.l_y);
        if !(self.r < limit) {
            return Err(Error::Admissibility { r: self.r, limit });
        }
        Ok(())
    }
}

/// η = 1 − 2γr + r²L_y², the squared per-step contraction modulus of the
/// projection dynamics. Lies in [0, 1) exactly when r is admissible.
pub fn contraction_factor(params: &BoundParams) -> Result<f64> {
    params.validate()?;
    let eta = 1.0 - 2.0 * params.gamma * params.r + params.r * params.r * params.l_y * params.l_y;
    // admissibility puts eta in [1 - gamma^2/L^2, 1) by the quadratic's shape
    Ok(eta.max(0.0))
}

/// Outcome of the derivative self-check.
#[derive(Debug, Clone)]
pub struct DiagnosticReport {
    pub samples: usize,
    pub max_rel_err_lower_x: f64,
    pub max_rel_err_lower_y: f64,
    pub max_rel_err_upper_x: f64,
    pub max_rel_err_upper_y: f64,
    /// Set when a set has measure-zero interior in ambient space; finite
    /// differences then probe the callables' smooth extension off the set.
    pub ambient_interior_warning: bool,
}

impl DiagnosticReport {
    pub fn max_rel_err(&self) -> f64 {
        self.max_rel_err_lower_x
            .max(self.max_rel_err_lower_y)
            .max(self.max_rel_err_upper_x)
            .max(self.max_rel_err_upper_y)
    }
}

const FD_STEP: f64 = 1e-6;

fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / fd.abs().max(1.0)
}

/// Compares the supplied analytic Jacobians and gradients against central
/// finite differences at random relative-interior points.
pub fn check_jacobians(
    problem: &BilevelProblem,
    samples: usize,
    seed: u64,
) -> Result<DiagnosticReport> {
    if samples == 0 {
        return Err(Error::InvalidConfig("check_jacobians needs samples >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = DiagnosticReport {
        samples,
        max_rel_err_lower_x: 0.0,
        max_rel_err_lower_y: 0.0,
        max_rel_err_upper_x: 0.0,
        max_rel_err_upper_y: 0.0,
        ambient_interior_warning: problem.set_x.has_empty_ambient_interior()
            || problem.set_y.has_empty_ambient_interior(),
    };
    for _ in 0..samples {
        let x = problem.set_x.sample_interior(&mut rng);
        let y = problem.set_y.sample_interior(&mut rng);

        let jx = (problem.jac_lower_x)(&x, &y);
        let jy = (problem.jac_lower_y)(&x, &y);
        let gx = (problem.grad_upper_x)(&x, &y);
        let gy = (problem.grad_upper_y)(&x, &y);

        for i in 0..problem.dim_x {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += FD_STEP;
            xm[i] -= FD_STEP;
            let fp = problem.lower(&xp, &y);
            let fm = problem.lower(&xm, &y);
            for k in 0..problem.dim_y {
                let fd = (fp[k] - fm[k]) / (2.0 * FD_STEP);
                report.max_rel_err_lower_x = report.max_rel_err_lower_x.max(rel_err(jx[(i, k)], fd));
            }
            let fd = ((problem.upper)(&xp, &y) - (problem.upper)(&xm, &y)) / (2.0 * FD_STEP);
            report.max_rel_err_upper_x = report.max_rel_err_upper_x.max(rel_err(gx[i], fd));
        }
        for i in 0..problem.dim_y {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[i] += FD_STEP;
            ym[i] -= FD_STEP;
            let fp = problem.lower(&x, &yp);
            let fm = problem.lower(&x, &ym);
            for k in 0..problem.dim_y {
                let fd = (fp[k] - fm[k]) / (2.0 * FD_STEP);
                report.max_rel_err_lower_y = report.max_rel_err_lower_y.max(rel_err(jy[(i, k)], fd));
            }
            let fd = ((problem.upper)(&x, &yp) - (problem.upper)(&x, &ym)) / (2.0 * FD_STEP);
            report.max_rel_err_upper_y = report.max_rel_err_upper_y.max(rel_err(gy[i], fd));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::make_duopoly;

    #[test]
    fn duopoly_profits_at_reference_points() {
        let p = make_duopoly();
        let x = DVector::from_element(1, 0.5);
        let y = DVector::from_element(1, 0.25);
        // profit 1/8 at the bilevel optimum, recovered as -objective
        assert!((eval_upper(&p, &x, &y).unwrap() + 0.125).abs() < 1e-12);
        let third = DVector::from_element(1, 1.0 / 3.0);
        assert!((eval_upper(&p, &third, &third).unwrap() + 1.0 / 9.0).abs() < 1e-12);
        let zero = DVector::from_element(1, 0.0);
        assert_eq!(eval_upper(&p, &zero, &zero).unwrap(), 0.0);
    }

    #[test]
    fn eval_upper_flags_non_finite() {
        let p = BilevelProblem {
            dim_x: 1,
            dim_y: 1,
            upper: Box::new(|_, _| f64::NAN),
            grad_upper_x: Box::new(|_, _| DVector::zeros(1)),
            grad_upper_y: Box::new(|_, _| DVector::zeros(1)),
            lower_map: Box::new(|_, _| DVector::zeros(1)),
            jac_lower_x: Box::new(|_, _| DMatrix::zeros(1, 1)),
            jac_lower_y: Box::new(|_, _| DMatrix::zeros(1, 1)),
            set_x: FeasibleSet::FullSpace(1),
            set_y: FeasibleSet::FullSpace(1),
        };
        let z = DVector::zeros(1);
        assert!(matches!(
            eval_upper(&p, &z, &z),
            Err(Error::Numerical { .. })
        ));
    }

    #[test]
    fn contraction_factor_reference_values() {
        let base = BoundParams {
            gamma: 1.0,
            l_x: 0.0,
            l_y: 1.0,
            g_x: 0.0,
            g_y: 0.0,
            g_xy: 0.0,
            g_yy: 0.0,
            h_x: 0.0,
            h_xy: 0.0,
            h_yy: 0.0,
            d_max: 1.0,
            r: 0.5,
        };
        assert!((contraction_factor(&base).unwrap() - 0.25).abs() < 1e-15);
        let vertex = BoundParams { r: 1.0, ..base };
        assert!(contraction_factor(&vertex).unwrap().abs() < 1e-15);
        let bad = BoundParams { l_y: 2.0, r: 0.5, ..base };
        assert!(matches!(
            contraction_factor(&bad),
            Err(Error::Admissibility { .. })
        ));
    }

    #[test]
    fn contraction_factor_is_unimodal_in_r() {
        // strictly decreasing on (0, γ/L²], strictly increasing on [γ/L², 2γ/L²)
        let mk = |r| BoundParams {
            gamma: 1.0,
            l_x: 0.0,
            l_y: 1.0,
            g_x: 0.0,
            g_y: 0.0,
            g_xy: 0.0,
            g_yy: 0.0,
            h_x: 0.0,
            h_xy: 0.0,
            h_yy: 0.0,
            d_max: 1.0,
            r,
        };
        let grid: Vec<f64> = (1..20).map(|i| i as f64 * 0.1).collect();
        for w in grid.windows(2) {
            let (a, b) = (w[0], w[1]);
            let ea = contraction_factor(&mk(a)).unwrap();
            let eb = contraction_factor(&mk(b)).unwrap();
            if b <= 1.0 {
                assert!(eb < ea, "not decreasing at r={a}..{b}");
            } else if a >= 1.0 {
                assert!(eb > ea, "not increasing at r={a}..{b}");
            }
        }
    }

    #[test]
    fn check_jacobians_passes_on_duopoly() {
        let p = make_duopoly();
        let rep = check_jacobians(&p, 10, 42).unwrap();
        assert!(rep.max_rel_err() < 1e-4, "max rel err {}", rep.max_rel_err());
    }

    #[test]
    fn check_jacobians_detects_injected_fault() {
        let mut p = make_duopoly();
        // true ∂f/∂x = 1; shift by +1
        p.jac_lower_x = Box::new(|_, _| DMatrix::from_element(1, 1, 2.0));
        let rep = check_jacobians(&p, 5, 42).unwrap();
        assert!(
            rep.max_rel_err_lower_x > 0.5 && rep.max_rel_err_lower_x < 2.0,
            "expected rel err near 1, got {}",
            rep.max_rel_err_lower_x
        );
    }
}
