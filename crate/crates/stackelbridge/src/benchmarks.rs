//! Benchmark problem constructors with analytic gradients: the Stackelberg
//! duopoly, a 4×4 quadratic with a non-unique lower level, and continuous
//! network design with a Wardrop (route-choice) lower level.

use crate::error::{Error, Result};
use crate::problem::BilevelProblem;
use crate::sets::FeasibleSet;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc as StdArc;

/// Upper cap applied to half-line decision sets so diameters stay finite;
/// never active at any reported solution.
pub const DUOPOLY_CAP: f64 = 10.0;
pub const CAPACITY_CAP: f64 = 100.0;

/// Stackelberg duopoly with inverse demand p = 1 − x − y, minimization form.
///
/// l(x, y) = −x(1 − x − y); the follower ascends its own profit, so the VI map
/// is f(x, y) = −∂g/∂y = x + 2y − 1. Both decisions live on [0, 10] (the
/// nonnegative half-line capped for numerical bounds).
pub fn make_duopoly() -> BilevelProblem {
    BilevelProblem {
        dim_x: 1,
        dim_y: 1,
        upper: Box::new(|x, y| -x[0] * (1.0 - x[0] - y[0])),
        grad_upper_x: Box::new(|x, y| DVector::from_element(1, 2.0 * x[0] + y[0] - 1.0)),
        grad_upper_y: Box::new(|x, _| DVector::from_element(1, x[0])),
        lower_map: Box::new(|x, y| DVector::from_element(1, x[0] + 2.0 * y[0] - 1.0)),
        jac_lower_x: Box::new(|_, _| DMatrix::from_element(1, 1, 1.0)),
        jac_lower_y: Box::new(|_, _| DMatrix::from_element(1, 1, 2.0)),
        set_x: FeasibleSet::box_uniform(1, 0.0, DUOPOLY_CAP),
        set_y: FeasibleSet::box_uniform(1, 0.0, DUOPOLY_CAP),
    }
}

/// Smoothing width of the pseudo-Huber replacement for ‖x‖₂ in the quadratic
/// benchmark. The exact norm has a kink at the optimizer x* ≈ 0 where
/// fixed-step projected gradient cannot settle; the smoothed pair (value and
/// gradient stay consistent) shifts objectives by at most this amount.
pub const EXP1_NORM_SMOOTHING: f64 = 1e-2;

/// 4×4 bilevel program whose lower level is convex but not strongly convex
/// (the effective quadratic has rank 3), so equilibria form a segment.
///
/// Leader: minimize ‖x‖ + ⟨Dᵀ(a + x + b∘v), w∘y⟩ over a + x ≥ 0, x₄ = 0;
/// follower: Wardrop-style potential game on the 4-simplex with path-cost map
/// f(x, y) = Dᵀ((a + x) + b∘(Dy)), v = Dy.
pub fn make_quadratic_exp1() -> BilevelProblem {
    let w = DVector::from_column_slice(&[2.0, 1.1, 0.9, 0.01]);
    let b = DVector::from_column_slice(&[15.0, 2.0, 8.0, 5.0]);
    let a = DVector::from_column_slice(&[2.0, 3.0, 4.0, 5.0]);
    // columns: e1+e3, e2+e4, e1+e4, e2+e3
    let d_mat = DMatrix::from_column_slice(
        4,
        4,
        &[
            1.0, 0.0, 1.0, 0.0, // col 1
            0.0, 1.0, 0.0, 1.0, // col 2
            1.0, 0.0, 0.0, 1.0, // col 3
            0.0, 1.0, 1.0, 0.0, // col 4
        ],
    );
    let dtbd = d_mat.transpose() * DMatrix::from_diagonal(&b) * &d_mat;
    let mu = EXP1_NORM_SMOOTHING;

    let lower = StdArc::new((d_mat.clone(), a.clone(), b.clone()));
    let upper_data = StdArc::new((d_mat.clone(), a.clone(), b.clone(), w.clone()));

    let mut lo = -a.clone();
    lo[3] = 0.0;
    let mut hi = DVector::from_element(4, CAPACITY_CAP);
    hi[3] = 0.0;

    let l = upper_data.clone();
    let upper = move |x: &DVector<f64>, y: &DVector<f64>| -> f64 {
        let (d_mat, a, b, w) = &*l;
        let v = d_mat * y;
        let inner = d_mat.transpose() * (a + x + b.component_mul(&v));
        (x.norm_squared() + mu * mu).sqrt() - mu + inner.dot(&w.component_mul(y))
    };
    let l = upper_data.clone();
    let grad_upper_x = move |x: &DVector<f64>, y: &DVector<f64>| -> DVector<f64> {
        let (d_mat, _, _, w) = &*l;
        x / (x.norm_squared() + mu * mu).sqrt() + d_mat * w.component_mul(y)
    };
    let l = upper_data.clone();
    let grad_upper_y = move |x: &DVector<f64>, y: &DVector<f64>| -> DVector<f64> {
        let (d_mat, a, b, w) = &*l;
        let ax = a + x;
        let v = d_mat * y;
        w.component_mul(&(d_mat.transpose() * &ax))
            + d_mat.transpose() * b.component_mul(&(d_mat * w.component_mul(y)))
            + w.component_mul(&(d_mat.transpose() * b.component_mul(&v)))
    };
    let l = lower.clone();
    let lower_map = move |x: &DVector<f64>, y: &DVector<f64>| -> DVector<f64> {
        let (d_mat, a, b) = &*l;
        d_mat.transpose() * ((a + x) + b.component_mul(&(d_mat * y)))
    };
    let d_for_jac = d_mat.clone();

    BilevelProblem {
        dim_x: 4,
        dim_y: 4,
        upper: Box::new(upper),
        grad_upper_x: Box::new(grad_upper_x),
        grad_upper_y: Box::new(grad_upper_y),
        lower_map: Box::new(lower_map),
        jac_lower_x: Box::new(move |_, _| d_for_jac.clone()),
        jac_lower_y: Box::new(move |_, _| dtbd.clone()),
        set_x: FeasibleSet::Box { lower: lo, upper: hi },
        set_y: FeasibleSet::Simplex(4),
    }
}

/// One arc of a design network. Delay follows u0·(1 + b·(v/(s+x))^p); the
/// standard model fixes b = 0.15 and p = 4.
#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    /// free-flow travel time
    pub u0: f64,
    /// base capacity
    pub s: f64,
    /// quadratic expansion-cost coefficient
    pub b_cost: f64,
    pub expandable: bool,
    pub bpr_b: f64,
    pub bpr_power: f64,
}

impl Arc {
    /// Arc with the standard delay parameters b = 0.15, p = 4.
    pub fn standard(u0: f64, s: f64, b_cost: f64, expandable: bool) -> Self {
        Arc { u0, s, b_cost, expandable, bpr_b: 0.15, bpr_power: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdPair {
    pub origin: usize,
    pub destination: usize,
    pub demand: f64,
}

/// A pathwise congestion network design instance.
///
/// `lambda` is the arc×path incidence, `sigma` the OD×path incidence (paths
/// must be grouped contiguously per OD pair), `d` repeats each OD demand over
/// its paths.
#[derive(Debug, Clone)]
pub struct NetworkDesignInstance {
    pub arcs: Vec<Arc>,
    pub paths: Vec<Vec<usize>>,
    pub od_pairs: Vec<OdPair>,
    pub lambda: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub d: DVector<f64>,
    pub gamma_weight: f64,
}

impl NetworkDesignInstance {
    /// Assembles Λ, Σ and d from paths grouped per OD pair (in order).
    pub fn new(
        arcs: Vec<Arc>,
        od_pairs: Vec<OdPair>,
        paths_per_od: Vec<Vec<Vec<usize>>>,
        gamma_weight: f64,
    ) -> Result<Self> {
        if od_pairs.len() != paths_per_od.len() {
            return Err(Error::InvalidConfig(
                "paths_per_od must align with od_pairs".into(),
            ));
        }
        let n_arcs = arcs.len();
        let n_paths: usize = paths_per_od.iter().map(|p| p.len()).sum();
        let mut lambda = DMatrix::zeros(n_arcs, n_paths);
        let mut sigma = DMatrix::zeros(od_pairs.len(), n_paths);
        let mut d = DVector::zeros(n_paths);
        let mut paths = Vec::with_capacity(n_paths);
        let mut k = 0;
        for (w, od_paths) in paths_per_od.iter().enumerate() {
            for path in od_paths {
                for &a in path {
                    if a >= n_arcs {
                        return Err(Error::InvalidConfig(format!("arc index {a} out of range")));
                    }
                    lambda[(a, k)] = 1.0;
                }
                sigma[(w, k)] = 1.0;
                d[k] = od_pairs[w].demand;
                paths.push(path.clone());
                k += 1;
            }
        }
        let inst = NetworkDesignInstance {
            arcs,
            paths,
            od_pairs,
            lambda,
            sigma,
            d,
            gamma_weight,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, arc) in self.arcs.iter().enumerate() {
            if arc.s <= 0.0 || arc.u0 <= 0.0 {
                return Err(Error::Domain(format!(
                    "arc {i} requires positive capacity and free-flow time"
                )));
            }
        }
        if self.d.iter().any(|&v| v <= 0.0) {
            return Err(Error::Domain("path demands must be positive".into()));
        }
        for k in 0..self.sigma.ncols() {
            let col_sum: f64 = self.sigma.column(k).sum();
            if (col_sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidConfig(format!(
                    "path {k} must belong to exactly one OD block"
                )));
            }
        }
        Ok(())
    }

    /// Sizes of the per-OD simplex blocks, in path order.
    pub fn block_sizes(&self) -> Vec<usize> {
        (0..self.sigma.nrows())
            .map(|w| self.sigma.row(w).iter().filter(|&&v| v > 0.5).count())
            .collect()
    }
}

struct NetworkData {
    inst: NetworkDesignInstance,
    /// per-path positive rescaling making f the gradient of the congestion
    /// potential in proportion coordinates: d / mean(d). A global constant
    /// factor keeps uniform-demand instances identical to the raw path-cost
    /// map, so step sizes stay in cost units.
    rho: DVector<f64>,
}

impl NetworkData {
    fn arc_flows(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.inst.lambda * self.inst.d.component_mul(y)
    }

    fn times(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.inst.arcs.len(), |a, _| {
            let arc = &self.inst.arcs[a];
            let ratio = v[a] / (arc.s + x[a]);
            arc.u0 * (1.0 + arc.bpr_b * ratio.powf(arc.bpr_power))
        })
    }

    /// ∂u_a/∂v_a; with the standard parameters this is 0.6·u0·v³/(s+x)⁴
    fn times_dv(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.inst.arcs.len(), |a, _| {
            let arc = &self.inst.arcs[a];
            let c = arc.s + x[a];
            arc.bpr_b * arc.bpr_power * arc.u0 * v[a].powf(arc.bpr_power - 1.0)
                / c.powf(arc.bpr_power)
        })
    }

    /// ∂u_a/∂x_a; with the standard parameters this is −0.6·u0·v⁴/(s+x)⁵
    fn times_dx(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.inst.arcs.len(), |a, _| {
            let arc = &self.inst.arcs[a];
            let c = arc.s + x[a];
            -arc.bpr_b * arc.bpr_power * arc.u0 * v[a].powf(arc.bpr_power)
                / c.powf(arc.bpr_power + 1.0)
        })
    }
}

/// Builds the bilevel network design problem: the leader buys capacity on the
/// expandable arcs, the followers settle into a Wardrop equilibrium over the
/// path set, arc delays follow u0·(1 + 0.15·(v/(s+x))⁴).
pub fn make_network_design(instance: &NetworkDesignInstance) -> Result<BilevelProblem> {
    instance.validate()?;
    let m = instance.arcs.len();
    let n = instance.paths.len();
    let mean_d = instance.d.sum() / n as f64;
    let data = StdArc::new(NetworkData {
        rho: &instance.d / mean_d,
        inst: instance.clone(),
    });

    let zero_indices: Vec<usize> = instance
        .arcs
        .iter()
        .enumerate()
        .filter(|(_, a)| !a.expandable)
        .map(|(i, _)| i)
        .collect();
    let set_x = FeasibleSet::NonnegWithFixedZeros { dim: m, zero_indices };
    let set_y = FeasibleSet::Product(
        instance
            .block_sizes()
            .into_iter()
            .map(FeasibleSet::Simplex)
            .collect(),
    );

    let gamma = instance.gamma_weight;
    let dd = data.clone();
    let upper = move |x: &DVector<f64>, y: &DVector<f64>| -> f64 {
        let v = dd.arc_flows(y);
        let u = dd.times(x, &v);
        let expansion: f64 = dd
            .inst
            .arcs
            .iter()
            .enumerate()
            .map(|(a, arc)| arc.b_cost * x[a] * x[a])
            .sum();
        u.dot(&v) + gamma * expansion
    };
    let dd = data.clone();
    let grad_upper_x = move |x: &DVector<f64>, y: &DVector<f64>| -> DVector<f64> {
        let v = dd.arc_flows(y);
        let ux = dd.times_dx(x, &v);
        DVector::from_fn(dd.inst.arcs.len(), |a, _| {
            ux[a] * v[a] + 2.0 * gamma * dd.inst.arcs[a].b_cost * x[a]
        })
    };
    let dd = data.clone();
    let grad_upper_y = move |x: &DVector<f64>, y: &DVector<f64>| -> DVector<f64> {
        let v = dd.arc_flows(y);
        let u = dd.times(x, &v);
        let uv = dd.times_dv(x, &v);
        let marginal = &u + uv.component_mul(&v);
        dd.inst
            .d
            .component_mul(&(dd.inst.lambda.transpose() * marginal))
    };
    let dd = data.clone();
    let lower_map = move |x: &DVector<f64>, y: &DVector<f64>| -> DVector<f64> {
        let v = dd.arc_flows(y);
        let u = dd.times(x, &v);
        dd.rho.component_mul(&(dd.inst.lambda.transpose() * u))
    };
    let dd = data.clone();
    let jac_lower_x = move |x: &DVector<f64>, y: &DVector<f64>| -> DMatrix<f64> {
        let v = dd.arc_flows(y);
        let ux = dd.times_dx(x, &v);
        let mut out = DMatrix::zeros(dd.inst.arcs.len(), dd.inst.paths.len());
        for a in 0..dd.inst.arcs.len() {
            for k in 0..dd.inst.paths.len() {
                if dd.inst.lambda[(a, k)] > 0.5 {
                    out[(a, k)] = dd.rho[k] * ux[a];
                }
            }
        }
        out
    };
    let dd = data.clone();
    let jac_lower_y = move |x: &DVector<f64>, y: &DVector<f64>| -> DMatrix<f64> {
        let v = dd.arc_flows(y);
        let uv = dd.times_dv(x, &v);
        // diag(d)·Λᵀ·diag(u′)·Λ·diag(ρ); symmetric up to the global 1/mean(d)
        let weighted = DMatrix::from_fn(dd.inst.lambda.nrows(), dd.inst.lambda.ncols(), |a, k| {
            dd.inst.lambda[(a, k)] * uv[a]
        });
        let mut core = dd.inst.lambda.transpose() * weighted;
        for i in 0..core.nrows() {
            for k in 0..core.ncols() {
                core[(i, k)] *= dd.inst.d[i] * dd.rho[k];
            }
        }
        core
    };

    Ok(BilevelProblem {
        dim_x: m,
        dim_y: n,
        upper: Box::new(upper),
        grad_upper_x: Box::new(grad_upper_x),
        grad_upper_y: Box::new(grad_upper_y),
        lower_map: Box::new(lower_map),
        jac_lower_x: Box::new(jac_lower_x),
        jac_lower_y: Box::new(jac_lower_y),
        set_x,
        set_y,
    })
}

/// The four-node Braess network: five arcs, one OD pair with demand 6, three
/// paths {1,3}, {1,4,5}, {2,5} (1-based arc labels).
pub fn make_braess() -> NetworkDesignInstance {
    let u0 = [1.0, 3.0, 3.0, 0.5, 1.0];
    let s = [2.0, 4.0, 4.0, 1.0, 2.0];
    let b_cost = [1.0, 3.0, 3.0, 0.5, 1.0];
    let arcs = (0..5)
        .map(|a| Arc::standard(u0[a], s[a], b_cost[a], true))
        .collect();
    let od = vec![OdPair { origin: 1, destination: 4, demand: 6.0 }];
    let paths = vec![vec![vec![0, 2], vec![0, 3, 4], vec![1, 4]]];
    NetworkDesignInstance::new(arcs, od, paths, 1.0).expect("static Braess instance")
}
