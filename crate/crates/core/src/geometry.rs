//! Manifolds with boundary realized as level sets in Euclidean space, and
//! real-oriented blowups along finite fixed sets.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expr::{CompiledMap, Expr, Tape};
use crate::linalg::{null_space, pinv, RANK_REL_TOL};

/// Distance to the zero set accepted as "on the manifold".
pub const ON_MANIFOLD_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("constraint Jacobian is rank deficient at {point:?}")]
    RankDeficient { point: Vec<f64> },
    #[error("no points of the zero set were found in the bounding box")]
    EmptyManifold,
    #[error("point is {distance:e} away from the manifold")]
    OffManifold { distance: f64 },
    #[error("Newton retraction onto the manifold did not converge")]
    ProjectionFailed,
    #[error("fixed locus is not a submanifold: {reason}")]
    FixedLocusNotSubmanifold { reason: String },
    #[error("collar radius {eps} exceeds the injectivity estimate {limit}")]
    EpsTooLarge { eps: f64, limit: f64 },
}

/// A manifold `{g = 0, ρ ≤ 0}` inside a bounding box of Rⁿ.
#[derive(Debug, Clone)]
pub struct ManifoldModel {
    pub ambient_dim: usize,
    pub vars: Vec<String>,
    pub constraints: Vec<Expr>,
    pub boundary_fn: Option<Expr>,
    pub dim: usize,
    pub bbox: Vec<(f64, f64)>,
    g: CompiledMap,
    rho: Option<(Tape, CompiledMap)>,
    /// Constraints together with `ρ`, for retraction onto the boundary.
    g_bdry: Option<CompiledMap>,
}

/// Default coordinate names `x1..xn`.
pub fn default_vars(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

/// Build and validate a level-set manifold.
///
/// `bbox` defaults to `[-1.5, 1.5]` in every coordinate.
pub fn make_level_set_manifold(
    constraints: Vec<Expr>,
    boundary_fn: Option<Expr>,
    ambient_dim: usize,
) -> Result<ManifoldModel, GeometryError> {
    ManifoldModel::new(
        default_vars(ambient_dim),
        constraints,
        boundary_fn,
        vec![(-1.5, 1.5); ambient_dim],
    )
}

impl ManifoldModel {
    pub fn new(
        vars: Vec<String>,
        constraints: Vec<Expr>,
        boundary_fn: Option<Expr>,
        bbox: Vec<(f64, f64)>,
    ) -> Result<Self, GeometryError> {
        let m = Self::new_unchecked(vars, constraints, boundary_fn, bbox);
        m.validate()?;
        Ok(m)
    }

    /// Construct without the regular-value sampling test.
    pub fn new_unchecked(
        vars: Vec<String>,
        constraints: Vec<Expr>,
        boundary_fn: Option<Expr>,
        bbox: Vec<(f64, f64)>,
    ) -> Self {
        let n = vars.len();
        assert_eq!(bbox.len(), n);
        let g = CompiledMap::new(constraints.clone(), n);
        let rho = boundary_fn
            .as_ref()
            .map(|r| (r.compile(), CompiledMap::new(r.gradient(n), n)));
        let g_bdry = boundary_fn.as_ref().map(|r| {
            let mut all = constraints.clone();
            all.push(r.clone());
            CompiledMap::new(all, n)
        });
        ManifoldModel {
            g_bdry,
            ambient_dim: n,
            dim: n.saturating_sub(constraints.len()),
            vars,
            constraints,
            boundary_fn,
            bbox,
            g,
            rho,
        }
    }

    fn validate(&self) -> Result<(), GeometryError> {
        let k = self.constraints.len();
        if k > self.ambient_dim {
            return Err(GeometryError::RankDeficient {
                point: vec![0.0; self.ambient_dim],
            });
        }
        let per_axis = seeds_per_axis(self.ambient_dim);
        let mut found = 0;
        for x0 in self.grid_seeds(per_axis) {
            let Ok(x) = self.project(&x0) else { continue };
            if !self.in_bbox(&x) {
                continue;
            }
            found += 1;
            let j = self.constraint_jacobian(&x);
            if k > 0 && regular_rank(&j) < k {
                return Err(GeometryError::RankDeficient { point: x });
            }
            if let Some(r) = self.rho(&x) {
                if r.abs() < 0.05 {
                    if let Ok(xb) = self.project_to_boundary(&x) {
                        let jb = self.constraint_jacobian(&xb);
                        let gr = self.grad_rho(&xb).unwrap();
                        let aug = jb.insert_row(k, 0.0);
                        let mut aug = aug;
                        aug.set_row(k, &gr.transpose());
                        if regular_rank(&aug) < k + 1 {
                            return Err(GeometryError::RankDeficient { point: xb });
                        }
                    }
                }
            }
        }
        let has_interior = self
            .grid_seeds(per_axis)
            .filter_map(|x0| self.project(&x0).ok())
            .any(|x| self.contains(&x));
        if found == 0 || !has_interior {
            return Err(GeometryError::EmptyManifold);
        }
        Ok(())
    }

    fn grid_seeds(&self, per_axis: usize) -> impl Iterator<Item = Vec<f64>> + '_ {
        let n = self.ambient_dim;
        let total = per_axis.pow(n as u32);
        (0..total).map(move |mut idx| {
            (0..n)
                .map(|a| {
                    let i = idx % per_axis;
                    idx /= per_axis;
                    let (lo, hi) = self.bbox[a];
                    lo + (hi - lo) * (i as f64 + 0.5) / per_axis as f64
                })
                .collect()
        })
    }

    pub fn in_bbox(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.bbox)
            .all(|(v, (lo, hi))| *v >= lo - 1e-9 && *v <= hi + 1e-9)
    }

    pub fn has_boundary(&self) -> bool {
        self.boundary_fn.is_some()
    }

    pub fn constraint_values(&self, x: &[f64]) -> Vec<f64> {
        self.g.eval(x)
    }

    pub fn constraint_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        self.g.jacobian(x)
    }

    pub fn rho(&self, x: &[f64]) -> Option<f64> {
        self.rho.as_ref().map(|(t, _)| t.eval(x))
    }

    pub fn grad_rho(&self, x: &[f64]) -> Option<DVector<f64>> {
        self.rho
            .as_ref()
            .map(|(_, g)| DVector::from_vec(g.eval(x)))
    }

    /// Whether `x` (assumed on the zero set) lies in `{ρ ≤ tol}`.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.rho(x).is_none_or(|r| r <= ON_MANIFOLD_TOL)
    }

    pub fn on_boundary(&self, x: &[f64], tol: f64) -> bool {
        self.rho(x).is_some_and(|r| r.abs() <= tol)
    }

    /// Estimated distance from `x` to the zero set (first-order).
    pub fn distance_to_zero_set(&self, x: &[f64]) -> f64 {
        if self.constraints.is_empty() {
            return 0.0;
        }
        let g = DVector::from_vec(self.constraint_values(x));
        let j = self.constraint_jacobian(x);
        (pinv(&j, 1e-12) * g).norm()
    }

    /// Newton retraction onto the zero set of the constraints.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
        newton_zero(&self.g, x)
    }

    /// Newton retraction onto `{g = 0, ρ = 0}`.
    pub fn project_to_boundary(&self, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let Some(gb) = &self.g_bdry else {
            return Err(GeometryError::ProjectionFailed);
        };
        newton_zero(gb, x)
    }

    /// Orthogonal projector onto the tangent space at `x`.
    pub fn tangent_projector(&self, x: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
        let d = self.distance_to_zero_set(x);
        if d > ON_MANIFOLD_TOL {
            return Err(GeometryError::OffManifold { distance: d });
        }
        let n = self.ambient_dim;
        let mut p = DMatrix::identity(n, n);
        if !self.constraints.is_empty() {
            let j = self.constraint_jacobian(x);
            p -= pinv(&j, RANK_REL_TOL) * j;
        }
        Ok(p)
    }

    /// Orthonormal tangent basis at `x` (columns), `ambient_dim × dim`.
    pub fn tangent_basis(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.ambient_dim;
        if self.constraints.is_empty() {
            return DMatrix::identity(n, n);
        }
        null_space(&self.constraint_jacobian(x), RANK_REL_TOL)
    }

    /// Unit inward normal at a boundary point, tangent to the zero set.
    pub fn inward_normal(&self, x: &[f64]) -> Option<DVector<f64>> {
        let gr = self.grad_rho(x)?;
        let t = self.tangent_basis(x);
        let v = -(&t * (t.transpose() * gr));
        let nv = v.norm();
        (nv > 0.0).then(|| v / nv)
    }

    /// Uniform-ish random points of the manifold (inside `ρ ≤ 0`).
    pub fn sample_points(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0;
        while out.len() < count && attempts < count * 200 {
            attempts += 1;
            let x0: Vec<f64> = self
                .bbox
                .iter()
                .map(|(lo, hi)| rng.gen_range(*lo..*hi))
                .collect();
            if let Ok(x) = self.project(&x0) {
                if self.in_bbox(&x) && self.contains(&x) {
                    out.push(x);
                }
            }
        }
        out
    }

    /// Random points on the boundary `{ρ = 0}`.
    pub fn sample_boundary_points(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        if !self.has_boundary() {
            return Vec::new();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        let mut attempts = 0;
        while out.len() < count && attempts < count * 200 {
            attempts += 1;
            let x0: Vec<f64> = self
                .bbox
                .iter()
                .map(|(lo, hi)| rng.gen_range(*lo..*hi))
                .collect();
            if let Ok(x) = self.project_to_boundary(&x0) {
                if self.in_bbox(&x) {
                    out.push(x);
                }
            }
        }
        out
    }
}

/// Rank for the regular-value test: singular values are compared against
/// `RANK_REL_TOL · max(1, σ_max)` so that uniformly tiny Jacobians count as degenerate.
/// Validation grid resolution, capped at roughly 5000 seeds.
fn seeds_per_axis(n: usize) -> usize {
    ((5000f64).powf(1.0 / n.max(1) as f64).floor() as usize).clamp(2, 6)
}

fn regular_rank(j: &DMatrix<f64>) -> usize {
    let sv = crate::linalg::svd(j).1;
    let floor = RANK_REL_TOL * sv.max().max(1.0);
    sv.iter().filter(|s| **s > floor).count()
}

fn newton_zero(g: &CompiledMap, x: &[f64]) -> Result<Vec<f64>, GeometryError> {
    let mut y = DVector::from_column_slice(x);
    if g.n_out() == 0 {
        return Ok(x.to_vec());
    }
    for _ in 0..60 {
        let gv = DVector::from_vec(g.eval(y.as_slice()));
        if gv.norm() < 1e-13 {
            return Ok(y.as_slice().to_vec());
        }
        let j = g.jacobian(y.as_slice());
        let step = pinv(&j, 1e-12) * gv;
        y -= step;
        if !y.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::ProjectionFailed);
        }
    }
    let gv = DVector::from_vec(g.eval(y.as_slice()));
    if gv.norm() < 1e-10 {
        Ok(y.as_slice().to_vec())
    } else {
        Err(GeometryError::ProjectionFailed)
    }
}

/// Fixed locus of an action, to be blown up.
#[derive(Debug, Clone)]
pub enum FixedLocus {
    Points(Vec<Vec<f64>>),
}

/// The real-oriented blowup `(X − R) ∪ (N¹(R) × [0, ε))` along a finite set.
#[derive(Debug, Clone)]
pub struct BlowupModel {
    pub base: ManifoldModel,
    pub fixed_locus: FixedLocus,
    pub collar_eps: f64,
    /// Estimated radius below which the normal chart is injective.
    pub injectivity_radius: f64,
}

/// Point of the collar chart: fixed point index, unit normal direction, radius.
#[derive(Debug, Clone, PartialEq)]
pub struct CollarPoint {
    pub fixed: usize,
    pub direction: Vec<f64>,
    pub radius: f64,
}

pub fn real_oriented_blowup(
    m: &ManifoldModel,
    r: FixedLocus,
    eps: Option<f64>,
) -> Result<BlowupModel, GeometryError> {
    if m.has_boundary() {
        return Err(GeometryError::FixedLocusNotSubmanifold {
            reason: "blowups are only taken on closed manifolds".into(),
        });
    }
    let FixedLocus::Points(pts) = &r;
    if pts.is_empty() {
        return Err(GeometryError::FixedLocusNotSubmanifold {
            reason: "empty fixed locus".into(),
        });
    }
    for p in pts {
        let d = m.distance_to_zero_set(p);
        if d > ON_MANIFOLD_TOL || p.len() != m.ambient_dim {
            return Err(GeometryError::FixedLocusNotSubmanifold {
                reason: format!("point {p:?} is not on the manifold"),
            });
        }
    }
    let mut limit = f64::INFINITY;
    for (i, p) in pts.iter().enumerate() {
        for q in &pts[i + 1..] {
            limit = limit.min(0.5 * dist(p, q));
        }
        limit = limit.min(graph_chart_radius(m, p));
    }
    let eps = eps.unwrap_or(0.1 * limit);
    if !(eps > 0.0 && eps < limit) {
        return Err(GeometryError::EpsTooLarge { eps, limit });
    }
    Ok(BlowupModel {
        base: m.clone(),
        fixed_locus: r,
        collar_eps: eps,
        injectivity_radius: limit,
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Radius up to which the manifold is a graph over its tangent plane at `p`,
/// estimated by marching outward along sampled tangent directions until the
/// tangent planes tilt by more than 60° or the normal solve fails.
fn graph_chart_radius(m: &ManifoldModel, p: &[f64]) -> f64 {
    let box_limit = m
        .bbox
        .iter()
        .zip(p)
        .map(|((lo, hi), c)| (c - lo).min(hi - c))
        .fold(f64::INFINITY, f64::min);
    if m.constraints.is_empty() {
        return box_limit;
    }
    let t = m.tangent_basis(p);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut best = box_limit;
    for _ in 0..16 {
        let c = DVector::from_fn(t.ncols(), |_, _| rng.gen_range(-1.0..1.0));
        let u = &t * c.normalize();
        let mut r = 0.0;
        let step = box_limit / 64.0;
        while r < best {
            r += step;
            let Some(y) = chart_point(m, p, u.as_slice(), r) else {
                best = best.min(r);
                break;
            };
            let ty = m.tangent_basis(&y);
            // Smallest principal cosine between the two tangent planes.
            let s = crate::linalg::svd(&(t.transpose() * ty)).1;
            if s.iter().cloned().fold(1.0, f64::min) < 0.5 {
                best = best.min(r);
                break;
            }
        }
    }
    best
}

/// Solve for `y = p + r u + n` with `n` normal at `p` and `g(y) = 0`.
fn chart_point(
    m: &ManifoldModel,
    p: &[f64],
    u: &[f64],
    r: f64,
) -> Option<Vec<f64>> {
    let n = m.ambient_dim;
    let jp = m.constraint_jacobian(p);
    // Columns of jpᵀ span the normal space at p.
    let nb = jp.transpose();
    let base = DVector::from_fn(n, |i, _| p[i] + r * u[i]);
    let mut coef = DVector::zeros(nb.ncols());
    for _ in 0..60 {
        let y = &base + &nb * &coef;
        let g = DVector::from_vec(m.constraint_values(y.as_slice()));
        if g.norm() < 1e-14 {
            return Some(y.as_slice().to_vec());
        }
        let j = m.constraint_jacobian(y.as_slice()) * &nb;
        let lu = j.lu();
        coef -= lu.solve(&g)?;
    }
    let y = &base + &nb * &coef;
    (DVector::from_vec(m.constraint_values(y.as_slice())).norm() < 1e-11)
        .then(|| y.as_slice().to_vec())
}

impl BlowupModel {
    pub fn dim(&self) -> usize {
        self.base.dim
    }

    pub fn fixed_points(&self) -> &[Vec<f64>] {
        let FixedLocus::Points(p) = &self.fixed_locus;
        p
    }

    /// Number of boundary components and their dimension (each is `S^{dim−1}`).
    pub fn boundary_components(&self) -> (usize, usize) {
        (self.fixed_points().len(), self.base.dim - 1)
    }

    /// Collar coordinates of a point of `X − R` within the collar, if any.
    pub fn blow_up(&self, x: &[f64]) -> Option<CollarPoint> {
        let (i, p) = self
            .fixed_points()
            .iter()
            .enumerate()
            .min_by(|a, b| dist(a.1, x).total_cmp(&dist(b.1, x)))?;
        let t = self.base.tangent_basis(p);
        let d = DVector::from_fn(x.len(), |k, _| x[k] - p[k]);
        let w = &t * (t.transpose() * d);
        let r = w.norm();
        if r == 0.0 || r >= self.collar_eps {
            return None;
        }
        Some(CollarPoint {
            fixed: i,
            direction: (w / r).as_slice().to_vec(),
            radius: r,
        })
    }

    /// Blow-down map from the collar chart to `X`.
    pub fn blow_down(&self, c: &CollarPoint) -> Option<Vec<f64>> {
        let p = &self.fixed_points()[c.fixed];
        chart_point(&self.base, p, &c.direction, c.radius)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(n: usize) -> Expr {
        let vars: Vec<String> = default_vars(n);
        let names: Vec<&str> = vars.iter().map(String::as_str).collect();
        let src: Vec<String> = names.iter().map(|v| format!("{v}^2")).collect();
        Expr::parse(&format!("{} - 1", src.join(" + ")), &names).unwrap()
    }

    #[test]
    fn disk_has_dim_two_and_boundary() {
        let rho = Expr::parse("x1^2 + x2^2 - 1", &["x1", "x2"]).unwrap();
        let m = make_level_set_manifold(vec![], Some(rho), 2).unwrap();
        assert_eq!(m.dim, 2);
        assert!(m.has_boundary());
        let p = m.tangent_projector(&[0.2, 0.1]).unwrap();
        assert!((p - DMatrix::<f64>::identity(2, 2)).norm() < 1e-14);
        let b = m.sample_boundary_points(5, 1);
        for x in b {
            assert!((x[0].hypot(x[1]) - 1.0).abs() < 1e-10);
            let n = m.inward_normal(&x).unwrap();
            assert!(n[0] * x[0] + n[1] * x[1] < -0.99);
        }
    }

    #[test]
    fn sphere_projector() {
        let m = make_level_set_manifold(vec![sphere(3)], None, 3).unwrap();
        assert_eq!(m.dim, 2);
        let p = m.tangent_projector(&[0.0, 0.0, 1.0]).unwrap();
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0]));
        assert!((&p - expect).norm() < 1e-12);
        let x = [1.0, 0.0, 0.0];
        let p = m.tangent_projector(&x).unwrap();
        assert!((&p * &p - &p).norm() < 1e-12);
        assert!(matches!(
            m.tangent_projector(&[0.0, 0.0, 1.1]),
            Err(GeometryError::OffManifold { .. })
        ));
    }

    #[test]
    fn hemisphere_of_s4() {
        let rho = Expr::var(4).neg();
        let m = make_level_set_manifold(vec![sphere(5)], Some(rho), 5).unwrap();
        assert_eq!(m.dim, 4);
        for x in m.sample_points(20, 3) {
            assert!(x[4] >= -1e-9);
        }
    }

    #[test]
    fn rank_deficient_constraint_is_rejected() {
        // (|x|² − 1)² has a degenerate zero set.
        let g = sphere(3).powi(2);
        assert!(matches!(
            make_level_set_manifold(vec![g], None, 3),
            Err(GeometryError::RankDeficient { .. }) | Err(GeometryError::EmptyManifold)
        ));
        let far = Expr::parse("x1^2 + x2^2 + 10", &["x1", "x2"]).unwrap();
        assert_eq!(
            make_level_set_manifold(vec![far], None, 2).unwrap_err(),
            GeometryError::EmptyManifold
        );
    }

    #[test]
    fn blowup_of_s4_at_poles() {
        let m = make_level_set_manifold(vec![sphere(5)], None, 5).unwrap();
        let poles = vec![vec![0.0, 0.0, 0.0, 0.0, 1.0], vec![0.0, 0.0, 0.0, 0.0, -1.0]];
        let b = real_oriented_blowup(&m, FixedLocus::Points(poles), None).unwrap();
        assert_eq!(b.dim(), 4);
        assert_eq!(b.boundary_components(), (2, 3));
        for x in m.sample_points(200, 5) {
            if let Some(c) = b.blow_up(&x) {
                let y = b.blow_down(&c).unwrap();
                assert!(dist(&x, &y) < 1e-10);
            }
        }
        assert!(matches!(
            real_oriented_blowup(
                &m,
                FixedLocus::Points(vec![vec![0.0, 0.0, 0.0, 0.0, 1.0]]),
                Some(5.0)
            ),
            Err(GeometryError::EpsTooLarge { .. })
        ));
    }

    #[test]
    fn blowup_of_r4_at_origin() {
        let m = make_level_set_manifold(vec![], None, 4).unwrap();
        let b = real_oriented_blowup(&m, FixedLocus::Points(vec![vec![0.0; 4]]), None).unwrap();
        assert_eq!(b.boundary_components(), (1, 3));
        let c = b.blow_up(&[0.01, 0.0, 0.02, 0.0]).unwrap();
        assert!((c.radius - 0.0005f64.sqrt()).abs() < 1e-12);
        let y = b.blow_down(&c).unwrap();
        assert!(dist(&y, &[0.01, 0.0, 0.02, 0.0]) < 1e-14);
    }
}
