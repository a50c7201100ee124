//! Projection-friendly feasible sets and their Euclidean projection operators.
//!
//! The catalogue covers the full space, boxes, the hyperplane {y : 1ᵀy = c},
//! the probability simplex, the nonnegative orthant with pinned zeros, and
//! Cartesian products of these. Each set supports an exact projection and an
//! almost-everywhere Jacobian of that projection. At kinks the active-set
//! convention applies: a coordinate sitting exactly on a bound is treated as
//! active, i.e. its sensitivity is zero (one valid generalized-Jacobian
//! selection).

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Default tolerance for Dykstra's alternating projection.
pub const DYKSTRA_TOL: f64 = 1e-10;
/// Default iteration cap for Dykstra's alternating projection.
pub const DYKSTRA_MAX_ITER: usize = 10_000;

/// A closed convex set with a cheap exact Euclidean projection.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleSet {
    /// All of R^n.
    FullSpace(usize),
    /// {y : lower ≤ y ≤ upper} componentwise; entries may be ±∞.
    Box {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
    /// {y ∈ R^dim : 1ᵀy = target}.
    AffineSum { dim: usize, target: f64 },
    /// The probability simplex {y ≥ 0 : 1ᵀy = 1}.
    Simplex(usize),
    /// {y ≥ 0 : y_i = 0 for i in zero_indices}.
    NonnegWithFixedZeros {
        dim: usize,
        zero_indices: Vec<usize>,
    },
    /// Cartesian product; member dimensions sum to the ambient dimension.
    Product(Vec<FeasibleSet>),
}

impl FeasibleSet {
    /// Box with identical scalar bounds in every coordinate.
    pub fn box_uniform(dim: usize, lower: f64, upper: f64) -> Self {
        FeasibleSet::Box {
            lower: DVector::from_element(dim, lower),
            upper: DVector::from_element(dim, upper),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::FullSpace(n) | FeasibleSet::AffineSum { dim: n, .. } => *n,
            FeasibleSet::Box { lower, .. } => lower.len(),
            FeasibleSet::Simplex(n) => *n,
            FeasibleSet::NonnegWithFixedZeros { dim, .. } => *dim,
            FeasibleSet::Product(parts) => parts.iter().map(|p| p.dim()).sum(),
        }
    }

    /// Validates the structural invariants (bound ordering, index ranges).
    pub fn validate(&self) -> Result<()> {
        match self {
            FeasibleSet::Box { lower, upper } => {
                if lower.len() != upper.len() {
                    return Err(Error::Dimension {
                        context: "Box bounds",
                        expected: lower.len(),
                        got: upper.len(),
                    });
                }
                if lower.iter().zip(upper.iter()).any(|(l, u)| l > u) {
                    return Err(Error::InvalidConfig("Box requires lower <= upper".into()));
                }
            }
            FeasibleSet::NonnegWithFixedZeros { dim, zero_indices } => {
                if zero_indices.iter().any(|&i| i >= *dim) {
                    return Err(Error::InvalidConfig(
                        "zero index out of range for NonnegWithFixedZeros".into(),
                    ));
                }
            }
            FeasibleSet::Product(parts) => {
                for p in parts {
                    p.validate()?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// True when every component of this set (after flattening products) is a simplex.
    pub fn is_simplex_product(&self) -> bool {
        match self {
            FeasibleSet::Simplex(_) => true,
            FeasibleSet::Product(parts) => parts.iter().all(|p| p.is_simplex_product()),
            _ => false,
        }
    }

    /// Offsets and lengths of the simplex blocks of a simplex product.
    pub fn simplex_blocks(&self) -> Vec<(usize, usize)> {
        let mut blocks = Vec::new();
        fn walk(set: &FeasibleSet, offset: usize, out: &mut Vec<(usize, usize)>) {
            match set {
                FeasibleSet::Simplex(n) => out.push((offset, *n)),
                FeasibleSet::Product(parts) => {
                    let mut off = offset;
                    for p in parts {
                        walk(p, off, out);
                        off += p.dim();
                    }
                }
                _ => {}
            }
        }
        walk(self, 0, &mut blocks);
        blocks
    }

    /// Set membership up to `tol` (componentwise / constraint-residual).
    pub fn contains(&self, z: &DVector<f64>, tol: f64) -> bool {
        if z.len() != self.dim() {
            return false;
        }
        match self {
            FeasibleSet::FullSpace(_) => true,
            FeasibleSet::Box { lower, upper } => z
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol),
            FeasibleSet::AffineSum { target, .. } => (z.sum() - target).abs() <= tol,
            FeasibleSet::Simplex(_) => {
                z.iter().all(|v| *v >= -tol) && (z.sum() - 1.0).abs() <= tol
            }
            FeasibleSet::NonnegWithFixedZeros { zero_indices, .. } => {
                z.iter().all(|v| *v >= -tol)
                    && zero_indices.iter().all(|&i| z[i].abs() <= tol)
            }
            FeasibleSet::Product(parts) => {
                let mut off = 0;
                parts.iter().all(|p| {
                    let n = p.dim();
                    let ok = p.contains(&z.rows(off, n).into_owned(), tol);
                    off += n;
                    ok
                })
            }
        }
    }

    /// Random feasible point: standard Gaussian projected onto the set, except
    /// simplex components which are drawn uniformly (normalized exponentials).
    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            FeasibleSet::Simplex(n) => dirichlet_uniform(*n, rng),
            FeasibleSet::Product(parts) => {
                let cols: Vec<DVector<f64>> = parts.iter().map(|p| p.sample(rng)).collect();
                concat(&cols)
            }
            _ => {
                let n = self.dim();
                let z = DVector::from_fn(n, |_, _| standard_normal(rng));
                project(self, &z).expect("projection of sampled point")
            }
        }
    }

    /// Random point in the relative interior, used for derivative checks.
    pub fn sample_interior<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            FeasibleSet::FullSpace(n) => DVector::from_fn(*n, |_, _| standard_normal(rng)),
            FeasibleSet::Box { lower, upper } => DVector::from_fn(lower.len(), |i, _| {
                let l = lower[i].max(-10.0);
                let u = upper[i].min(10.0);
                if u - l <= 0.0 {
                    l
                } else {
                    l + (u - l) * rng.gen_range(0.05..0.95)
                }
            }),
            FeasibleSet::AffineSum { dim, .. } => {
                let z = DVector::from_fn(*dim, |_, _| standard_normal(rng));
                project(self, &z).expect("projection onto hyperplane")
            }
            FeasibleSet::Simplex(n) => dirichlet_uniform(*n, rng),
            FeasibleSet::NonnegWithFixedZeros { dim, zero_indices } => {
                let mut v = DVector::from_fn(*dim, |_, _| rng.gen_range(0.05..2.0));
                for &i in zero_indices {
                    v[i] = 0.0;
                }
                v
            }
            FeasibleSet::Product(parts) => {
                let cols: Vec<DVector<f64>> = parts.iter().map(|p| p.sample_interior(rng)).collect();
                concat(&cols)
            }
        }
    }

    /// True when the set has zero-measure interior in the ambient space
    /// (equality constraints or pinned coordinates).
    pub fn has_empty_ambient_interior(&self) -> bool {
        match self {
            FeasibleSet::FullSpace(_) => false,
            FeasibleSet::Box { lower, upper } => {
                lower.iter().zip(upper.iter()).any(|(l, u)| l >= u)
            }
            FeasibleSet::AffineSum { .. } | FeasibleSet::Simplex(_) => true,
            FeasibleSet::NonnegWithFixedZeros { zero_indices, .. } => !zero_indices.is_empty(),
            FeasibleSet::Product(parts) => parts.iter().any(|p| p.has_empty_ambient_interior()),
        }
    }

    /// An upper bound on the set diameter, +∞ when unbounded.
    pub fn diameter(&self) -> f64 {
        match self {
            FeasibleSet::FullSpace(_)
            | FeasibleSet::AffineSum { .. }
            | FeasibleSet::NonnegWithFixedZeros { .. } => f64::INFINITY,
            FeasibleSet::Box { lower, upper } => {
                let mut s = 0.0;
                for (l, u) in lower.iter().zip(upper.iter()) {
                    let d = u - l;
                    if !d.is_finite() {
                        return f64::INFINITY;
                    }
                    s += d * d;
                }
                s.sqrt()
            }
            FeasibleSet::Simplex(_) => std::f64::consts::SQRT_2,
            FeasibleSet::Product(parts) => {
                let mut s = 0.0;
                for p in parts {
                    let d = p.diameter();
                    if !d.is_finite() {
                        return f64::INFINITY;
                    }
                    s += d * d;
                }
                s.sqrt()
            }
        }
    }
}

fn concat(parts: &[DVector<f64>]) -> DVector<f64> {
    let n = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(n);
    let mut off = 0;
    for p in parts {
        out.rows_mut(off, p.len()).copy_from(p);
        off += p.len();
    }
    out
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; avoids pulling in a distributions crate for one use.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn dirichlet_uniform<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    let mut v = DVector::from_fn(n, |_, _| -f64::ln(rng.gen_range(f64::MIN_POSITIVE..1.0)));
    let s = v.sum();
    v /= s;
    v
}

fn check_dim(set: &FeasibleSet, z: &DVector<f64>, context: &'static str) -> Result<()> {
    if z.len() != set.dim() {
        return Err(Error::Dimension {
            context,
            expected: set.dim(),
            got: z.len(),
        });
    }
    Ok(())
}

/// Exact Euclidean projection onto `set`.
pub fn project(set: &FeasibleSet, z: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(set, z, "project")?;
    Ok(match set {
        FeasibleSet::FullSpace(_) => z.clone(),
        FeasibleSet::Box { lower, upper } => {
            DVector::from_fn(z.len(), |i, _| z[i].max(lower[i]).min(upper[i]))
        }
        FeasibleSet::AffineSum { dim, target } => {
            let shift = (z.sum() - target) / *dim as f64;
            z.map(|v| v - shift)
        }
        FeasibleSet::Simplex(_) => project_simplex(z),
        FeasibleSet::NonnegWithFixedZeros { zero_indices, .. } => {
            let mut out = z.map(|v| v.max(0.0));
            for &i in zero_indices {
                out[i] = 0.0;
            }
            out
        }
        FeasibleSet::Product(parts) => {
            let mut out = DVector::zeros(z.len());
            let mut off = 0;
            for p in parts {
                let n = p.dim();
                let sub = project(p, &z.rows(off, n).into_owned())?;
                out.rows_mut(off, n).copy_from(&sub);
                off += n;
            }
            out
        }
    })
}

/// Sort-and-threshold projection onto the probability simplex, O(n log n).
fn project_simplex(z: &DVector<f64>) -> DVector<f64> {
    let n = z.len();
    let mut sorted: Vec<f64> = z.iter().copied().collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    let mut k_active = 1usize;
    for (k, v) in sorted.iter().enumerate() {
        cumsum += v;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        // k = 0 always satisfies the threshold condition mathematically;
        // forcing it guards against cancellation at extreme magnitudes.
        if k == 0 || *v - candidate > 0.0 {
            tau = candidate;
            k_active = k + 1;
        }
    }
    let _ = k_active;
    z.map(|v| (v - tau).max(0.0))
}

/// Dykstra's alternating projection onto `set_a ∩ set_b`.
///
/// Both sets must be `Box` or `AffineSum` (the analytic cases); returns the
/// projection and the number of sweeps used.
pub fn project_dykstra(
    set_a: &FeasibleSet,
    set_b: &FeasibleSet,
    z: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, usize)> {
    for s in [set_a, set_b] {
        if !matches!(s, FeasibleSet::Box { .. } | FeasibleSet::AffineSum { .. }) {
            return Err(Error::InvalidConfig(
                "project_dykstra expects Box or AffineSum operands".into(),
            ));
        }
    }
    check_dim(set_a, z, "project_dykstra")?;
    check_dim(set_b, z, "project_dykstra")?;

    let mut x = z.clone();
    let mut p = DVector::zeros(z.len());
    let mut q = DVector::zeros(z.len());
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let y = project(set_a, &(&x + &p))?;
        p = &x + &p - &y;
        let x_next = project(set_b, &(&y + &q))?;
        q = &y + &q - &x_next;
        residual = (&x_next - &x).norm().max((&x_next - &y).norm());
        x = x_next;
        if residual <= tol {
            return Ok((x, it));
        }
    }
    Err(Error::Convergence {
        what: "Dykstra projection",
        iterations: max_iter,
        residual,
        history: vec![residual],
        last: x.iter().copied().collect(),
    })
}

/// Almost-everywhere Jacobian of `project(set, ·)` at `z`, dense form.
pub fn projection_jacobian(set: &FeasibleSet, z: &DVector<f64>) -> Result<DMatrix<f64>> {
    Ok(projection_jacobian_structured(set, z)?.to_dense())
}

/// Structured form of the projection Jacobian. All variants are symmetric:
/// diagonal indicators for boxes/orthants, per-block centering matrices for
/// the hyperplane and the simplex active face, identity for the full space.
#[derive(Debug, Clone)]
pub struct ProjJacobian {
    pub(crate) dim: usize,
    pub(crate) blocks: Vec<JacBlock>,
}

#[derive(Debug, Clone)]
pub(crate) struct JacBlock {
    pub offset: usize,
    pub len: usize,
    pub kind: JacBlockKind,
}

#[derive(Debug, Clone)]
pub(crate) enum JacBlockKind {
    Identity,
    Diagonal(DVector<f64>),
    /// diag(1_F) − 1_F 1_Fᵀ/|F| with F a local index subset.
    Centered { support: Vec<usize> },
}

pub fn projection_jacobian_structured(
    set: &FeasibleSet,
    z: &DVector<f64>,
) -> Result<ProjJacobian> {
    check_dim(set, z, "projection_jacobian")?;
    let mut blocks = Vec::new();
    build_blocks(set, z, 0, &mut blocks)?;
    Ok(ProjJacobian {
        dim: set.dim(),
        blocks,
    })
}

fn build_blocks(
    set: &FeasibleSet,
    z: &DVector<f64>,
    offset: usize,
    out: &mut Vec<JacBlock>,
) -> Result<()> {
    let n = set.dim();
    match set {
        FeasibleSet::FullSpace(_) => out.push(JacBlock {
            offset,
            len: n,
            kind: JacBlockKind::Identity,
        }),
        FeasibleSet::Box { lower, upper } => {
            // strict interior only: a coordinate exactly on a bound is active
            let d = DVector::from_fn(n, |i, _| {
                if z[i] > lower[i] && z[i] < upper[i] {
                    1.0
                } else {
                    0.0
                }
            });
            out.push(JacBlock {
                offset,
                len: n,
                kind: JacBlockKind::Diagonal(d),
            });
        }
        FeasibleSet::AffineSum { .. } => out.push(JacBlock {
            offset,
            len: n,
            kind: JacBlockKind::Centered {
                support: (0..n).collect(),
            },
        }),
        FeasibleSet::Simplex(_) => {
            let p = project_simplex(z);
            let support: Vec<usize> = (0..n).filter(|&i| p[i] > 0.0).collect();
            out.push(JacBlock {
                offset,
                len: n,
                kind: JacBlockKind::Centered { support },
            });
        }
        FeasibleSet::NonnegWithFixedZeros { zero_indices, .. } => {
            let mut d = DVector::from_fn(n, |i, _| if z[i] > 0.0 { 1.0 } else { 0.0 });
            for &i in zero_indices {
                d[i] = 0.0;
            }
            out.push(JacBlock {
                offset,
                len: n,
                kind: JacBlockKind::Diagonal(d),
            });
        }
        FeasibleSet::Product(parts) => {
            let mut off = offset;
            for p in parts {
                let pn = p.dim();
                build_blocks(p, &z.rows(off - offset, pn).into_owned(), off, out)?;
                off += pn;
            }
        }
    }
    Ok(())
}

impl ProjJacobian {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for b in &self.blocks {
            match &b.kind {
                JacBlockKind::Identity => {
                    for i in 0..b.len {
                        m[(b.offset + i, b.offset + i)] = 1.0;
                    }
                }
                JacBlockKind::Diagonal(d) => {
                    for i in 0..b.len {
                        m[(b.offset + i, b.offset + i)] = d[i];
                    }
                }
                JacBlockKind::Centered { support } => {
                    let inv = 1.0 / support.len().max(1) as f64;
                    for &i in support {
                        for &j in support {
                            m[(b.offset + i, b.offset + j)] =
                                if i == j { 1.0 - inv } else { -inv };
                        }
                    }
                }
            }
        }
        m
    }

    /// `m · J` without materializing J (J is symmetric, block structured).
    pub fn right_mul(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let rows = m.nrows();
        let mut out = DMatrix::zeros(rows, self.dim);
        for b in &self.blocks {
            match &b.kind {
                JacBlockKind::Identity => {
                    out.view_mut((0, b.offset), (rows, b.len))
                        .copy_from(&m.view((0, b.offset), (rows, b.len)));
                }
                JacBlockKind::Diagonal(d) => {
                    for j in 0..b.len {
                        if d[j] != 0.0 {
                            for i in 0..rows {
                                out[(i, b.offset + j)] = m[(i, b.offset + j)] * d[j];
                            }
                        }
                    }
                }
                JacBlockKind::Centered { support } => {
                    if support.is_empty() {
                        continue;
                    }
                    let inv = 1.0 / support.len() as f64;
                    for i in 0..rows {
                        let mut mean = 0.0;
                        for &j in support {
                            mean += m[(i, b.offset + j)];
                        }
                        mean *= inv;
                        for &j in support {
                            out[(i, b.offset + j)] = m[(i, b.offset + j)] - mean;
                        }
                    }
                }
            }
        }
        out
    }

    /// `J · v` (equals `vᵀ · J` transposed; J is symmetric).
    pub fn matvec(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for b in &self.blocks {
            match &b.kind {
                JacBlockKind::Identity => {
                    out.rows_mut(b.offset, b.len)
                        .copy_from(&v.rows(b.offset, b.len));
                }
                JacBlockKind::Diagonal(d) => {
                    for j in 0..b.len {
                        out[b.offset + j] = v[b.offset + j] * d[j];
                    }
                }
                JacBlockKind::Centered { support } => {
                    if support.is_empty() {
                        continue;
                    }
                    let inv = 1.0 / support.len() as f64;
                    let mut mean = 0.0;
                    for &j in support {
                        mean += v[b.offset + j];
                    }
                    mean *= inv;
                    for &j in support {
                        out[b.offset + j] = v[b.offset + j] - mean;
                    }
                }
            }
        }
        out
    }
}
