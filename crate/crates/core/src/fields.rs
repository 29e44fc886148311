//! Quasi-gradient vector fields, their stationary loci and the numerical
//! certificates for the quasi-gradient axioms.
//!
//! Flow convention: trajectories solve `dγ/dt + v(γ) = 0`, so the Morse index
//! of a stationary locus is the number of eigenvalues of `dv` with negative
//! real part.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{CompiledMap, Expr, Tape};
use crate::geometry::ManifoldModel;
use crate::linalg::{eigenvalues, orthogonal_complement, pinv, sym_eigen, RANK_REL_TOL};

pub const DEFAULT_SPECTRAL_GAP_TOL: f64 = 1e-4;
/// `|v|` below this counts as stationary.
pub const STATIONARY_TOL: f64 = 1e-8;
const NEWTON_TOL: f64 = 1e-11;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("stationary cluster near {point:?} is neither a point nor a round 2-sphere")]
    UnrecognizedLocusShape { point: Vec<f64> },
    #[error("normal eigenvalue {eigenvalue} at {point:?} is within the spectral gap tolerance")]
    DegenerateLinearization { point: Vec<f64>, eigenvalue: f64 },
    #[error("field cannot be projected symbolically: constraints share variables")]
    CoupledConstraints,
    #[error("(λ, φ) is not an eigenpair of the normal linearization (residual {residual:e})")]
    EigenpairMismatch { residual: f64 },
    #[error("matrix is not self-adjoint (asymmetry {asymmetry:e})")]
    NotSelfAdjoint { asymmetry: f64 },
    #[error("weighted projection has a zero diagonal entry on the top window")]
    ZeroDiagonalEntry,
    #[error("weights must be nonnegative, sum to one and match the thresholds")]
    BadWeights,
    #[error("field has {got} components, manifold ambient dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A vector field with a taming function on a [`ManifoldModel`].
#[derive(Debug, Clone)]
pub struct QuasiGradientField {
    pub name: String,
    pub manifold: ManifoldModel,
    pub v: Vec<Expr>,
    pub f: Expr,
    pub boundary_tangent_tol: f64,
    pub spectral_gap_tol: f64,
    vmap: CompiledMap,
    f_tape: Tape,
    grad_f: CompiledMap,
}

impl QuasiGradientField {
    pub fn new(
        name: impl Into<String>,
        manifold: ManifoldModel,
        v: Vec<Expr>,
        f: Expr,
    ) -> Result<Self, FieldError> {
        let n = manifold.ambient_dim;
        if v.len() != n {
            return Err(FieldError::DimensionMismatch {
                expected: n,
                got: v.len(),
            });
        }
        Ok(QuasiGradientField {
            name: name.into(),
            vmap: CompiledMap::new(v.clone(), n),
            f_tape: f.compile(),
            grad_f: CompiledMap::new(f.gradient(n), n),
            manifold,
            v,
            f,
            boundary_tangent_tol: 1e-6,
            spectral_gap_tol: DEFAULT_SPECTRAL_GAP_TOL,
        })
    }

    /// The Riemannian gradient of `f` for the induced metric, tamed by `f`.
    pub fn gradient(
        name: impl Into<String>,
        manifold: ManifoldModel,
        f: Expr,
    ) -> Result<Self, FieldError> {
        let g = f.gradient(manifold.ambient_dim);
        let v = tangential(&manifold, &g)?;
        Self::new(name, manifold, v, f)
    }

    pub fn with_spectral_gap_tol(mut self, tol: f64) -> Self {
        self.spectral_gap_tol = tol;
        self
    }

    pub fn dim(&self) -> usize {
        self.manifold.ambient_dim
    }

    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_vec(self.vmap.eval(x))
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        self.vmap.jacobian(x)
    }

    pub fn f_at(&self, x: &[f64]) -> f64 {
        self.f_tape.eval(x)
    }

    pub fn grad_f_at(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_vec(self.grad_f.eval(x))
    }

    /// `df(v)` at `x`.
    pub fn taming_rate(&self, x: &[f64]) -> f64 {
        self.grad_f_at(x).dot(&self.eval(x))
    }

    /// Intrinsic linearization `Tᵀ dv T` in an orthonormal tangent basis `T`.
    pub fn linearization(&self, x: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let t = self.manifold.tangent_basis(x);
        let l = t.transpose() * self.jacobian(x) * &t;
        (l, t)
    }
}

/// Symbolically project an ambient vector field onto the tangent spaces of
/// the constraint set. Constraints must act on disjoint variable sets.
pub fn tangential(m: &ManifoldModel, v: &[Expr]) -> Result<Vec<Expr>, FieldError> {
    let n = m.ambient_dim;
    let supports: Vec<BTreeSet<usize>> = m
        .constraints
        .iter()
        .map(|g| (0..n).filter(|&i| g.depends_on(i)).collect())
        .collect();
    for (i, a) in supports.iter().enumerate() {
        for b in &supports[i + 1..] {
            if !a.is_disjoint(b) {
                return Err(FieldError::CoupledConstraints);
            }
        }
    }
    let mut out = v.to_vec();
    for g in &m.constraints {
        let ng = g.gradient(n);
        let num = Expr::dot(&ng, &out);
        let den = Expr::dot(&ng, &ng);
        let coef = num.div(&den);
        out = out
            .iter()
            .zip(&ng)
            .map(|(vi, ni)| vi.sub(&coef.mul(ni)))
            .collect();
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BoundaryKind {
    Interior,
    BoundaryStable,
    BoundaryUnstable,
}

impl BoundaryKind {
    /// One-letter tag `o`, `s` or `u`.
    pub fn tag(self) -> char {
        match self {
            BoundaryKind::Interior => 'o',
            BoundaryKind::BoundaryStable => 's',
            BoundaryKind::BoundaryUnstable => 'u',
        }
    }
}

/// Geometric model of a connected stationary locus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum LocusModel {
    Point(Vec<f64>),
    /// `u ↦ center + radius · frame · u` for `u ∈ S² ⊂ R³`.
    Sphere2 {
        center: Vec<f64>,
        frame: Vec<Vec<f64>>,
        radius: f64,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaryManifold {
    pub label: String,
    pub model: LocusModel,
    pub kind: BoundaryKind,
    pub index: usize,
    pub dim: usize,
    pub representative_points: Vec<Vec<f64>>,
    pub f_value: f64,
    /// Normal eigenvalues (real parts) at the first representative.
    pub normal_spectrum: Vec<f64>,
}

impl StationaryManifold {
    /// Point of the locus parametrized by `u ∈ S²` (ignored for points).
    pub fn point_at(&self, u: &[f64; 3]) -> Vec<f64> {
        match &self.model {
            LocusModel::Point(p) => p.clone(),
            LocusModel::Sphere2 {
                center,
                frame,
                radius,
            } => (0..center.len())
                .map(|i| center[i] + radius * (0..3).map(|k| frame[k][i] * u[k]).sum::<f64>())
                .collect(),
        }
    }

    /// Parameter `u ∈ S²` of the locus point nearest to `x`.
    pub fn parameter_of(&self, x: &[f64]) -> [f64; 3] {
        match &self.model {
            LocusModel::Point(_) => [0.0, 0.0, 1.0],
            LocusModel::Sphere2 { center, frame, .. } => {
                let mut u = [0.0; 3];
                for k in 0..3 {
                    u[k] = (0..x.len()).map(|i| frame[k][i] * (x[i] - center[i])).sum();
                }
                let n = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt().max(1e-300);
                [u[0] / n, u[1] / n, u[2] / n]
            }
        }
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        let p = self.point_at(&self.parameter_of(x));
        p.iter()
            .zip(x)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_boundary(&self) -> bool {
        self.kind != BoundaryKind::Interior
    }
}

/// Classify a stationary point as interior or boundary-(un)stable.
///
/// On the boundary the sign of `⟨ν, dv ν⟩` for the inward normal `ν` decides:
/// positive means the normal direction is stable for `dγ/dt = −v`.
pub fn classify_boundary_kind(
    field: &QuasiGradientField,
    x: &[f64],
) -> Result<BoundaryKind, FieldError> {
    let m = &field.manifold;
    let on_bdry = m.rho(x).is_some_and(|r| r.abs() <= 1e-7);
    if !on_bdry {
        return Ok(BoundaryKind::Interior);
    }
    let nu = m.inward_normal(x).expect("boundary point has a normal");
    let mu = nu.dot(&(field.jacobian(x) * &nu));
    if mu.abs() <= field.spectral_gap_tol {
        return Err(FieldError::DegenerateLinearization {
            point: x.to_vec(),
            eigenvalue: mu,
        });
    }
    Ok(if mu > 0.0 {
        BoundaryKind::BoundaryStable
    } else {
        BoundaryKind::BoundaryUnstable
    })
}

fn newton_stationary(field: &QuasiGradientField, x0: &[f64]) -> Option<Vec<f64>> {
    let m = &field.manifold;
    let n = field.dim();
    let residual = |x: &DVector<f64>| -> DVector<f64> {
        let v = field.eval(x.as_slice());
        let g = m.constraint_values(x.as_slice());
        let mut r = DVector::zeros(n + g.len());
        r.rows_mut(0, n).copy_from(&v);
        for (i, gi) in g.iter().enumerate() {
            r[n + i] = *gi;
        }
        r
    };
    let mut x = DVector::from_column_slice(x0);
    let mut r = residual(&x);
    for _ in 0..80 {
        if r.norm() < NEWTON_TOL {
            break;
        }
        let mut j = DMatrix::zeros(r.len(), n);
        j.rows_mut(0, n).copy_from(&field.jacobian(x.as_slice()));
        if !m.constraints.is_empty() {
            j.rows_mut(n, m.constraints.len())
                .copy_from(&m.constraint_jacobian(x.as_slice()));
        }
        let step = pinv(&j, 1e-10) * &r;
        let mut t = 1.0;
        let base = r.norm();
        loop {
            let xn = &x - &step * t;
            let rn = residual(&xn);
            if rn.norm() < base || t < 1e-4 {
                x = xn;
                r = rn;
                break;
            }
            t *= 0.5;
        }
        if !x.iter().all(|c| c.is_finite()) {
            return None;
        }
    }
    if r.norm() >= NEWTON_TOL * 10.0 {
        return None;
    }
    let xs = x.as_slice().to_vec();
    if !m.in_bbox(&xs) || m.rho(&xs).is_some_and(|rv| rv > 1e-9) {
        return None;
    }
    Some(xs)
}

/// Eigenvalues of the intrinsic linearization, as (real, imag), sorted by real part.
fn spectrum(field: &QuasiGradientField, x: &[f64]) -> Vec<(f64, f64)> {
    let (l, _) = field.linearization(x);
    let mut ev: Vec<(f64, f64)> = eigenvalues(&l).iter().map(|z| (z.re, z.im)).collect();
    ev.sort_by(|a, b| a.0.total_cmp(&b.0));
    ev
}

/// Tangent directions (ambient vectors) of the near-kernel of the linearization.
fn kernel_directions(field: &QuasiGradientField, x: &[f64]) -> Vec<DVector<f64>> {
    let (l, t) = field.linearization(x);
    // Right singular vectors with small singular values span the kernel.
    let (_, sv, v) = crate::linalg::svd(&l);
    let mut out = Vec::new();
    for (i, s) in sv.iter().enumerate() {
        if *s < field.spectral_gap_tol {
            out.push(&t * v.column(i));
        }
    }
    out
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Find, fit and classify all stationary loci.
///
/// `grid_density` is the number of seeds per unit length along each ambient
/// axis of the bounding box; `seed` jitters the grid.
pub fn find_stationary_loci(
    field: &QuasiGradientField,
    grid_density: f64,
    seed: u64,
) -> Result<Vec<StationaryManifold>, FieldError> {
    let m = &field.manifold;
    let n = field.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_axis: Vec<usize> = m
        .bbox
        .iter()
        .map(|(lo, hi)| (((hi - lo) * grid_density).ceil() as usize).max(2))
        .collect();
    let total: usize = per_axis.iter().product();
    let mut zeros: Vec<Vec<f64>> = Vec::new();
    for mut idx in 0..total {
        let x0: Vec<f64> = (0..n)
            .map(|a| {
                let k = idx % per_axis[a];
                idx /= per_axis[a];
                let (lo, hi) = m.bbox[a];
                let h = (hi - lo) / per_axis[a] as f64;
                lo + h * (k as f64 + 0.5 + rng.gen_range(-0.25..0.25))
            })
            .collect();
        let Ok(xp) = m.project(&x0) else { continue };
        if !m.in_bbox(&xp) {
            continue;
        }
        if let Some(z) = newton_stationary(field, &xp) {
            if zeros.iter().all(|w| dist(w, &z) > 1e-6) {
                zeros.push(z);
            }
        }
    }
    // Also seed from the boundary: boundary zeros are easy to miss from the
    // interior grid when the normal direction is repelling.
    if m.has_boundary() {
        for xb in m.sample_boundary_points(total.min(2000), seed ^ 0x5eed) {
            if let Some(z) = newton_stationary(field, &xb) {
                if zeros.iter().all(|w| dist(w, &z) > 1e-6) {
                    zeros.push(z);
                }
            }
        }
    }
    zeros.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut points = Vec::new();
    let mut sphere_pts = Vec::new();
    for z in zeros {
        match kernel_directions(field, &z).len() {
            0 => points.push(z),
            2 => sphere_pts.push(z),
            _ => return Err(FieldError::UnrecognizedLocusShape { point: z }),
        }
    }

    let mut loci = Vec::new();
    for p in points {
        loci.push(point_locus(field, p)?);
    }
    for cluster in sphere_clusters(field, sphere_pts) {
        loci.push(sphere_locus(field, cluster)?);
    }
    loci.sort_by(|a, b| {
        a.f_value
            .total_cmp(&b.f_value)
            .then(a.representative_points[0].partial_cmp(&b.representative_points[0]).unwrap())
    });
    for (i, l) in loci.iter_mut().enumerate() {
        l.label = format!("B{i}");
    }
    Ok(loci)
}

fn normal_index(
    field: &QuasiGradientField,
    x: &[f64],
    kernel_dim: usize,
) -> Result<(usize, Vec<f64>), FieldError> {
    let ev = spectrum(field, x);
    // Drop the `kernel_dim` eigenvalues closest to zero.
    let mut by_size: Vec<usize> = (0..ev.len()).collect();
    by_size.sort_by(|&a, &b| ev[a].0.hypot(ev[a].1).total_cmp(&ev[b].0.hypot(ev[b].1)));
    let dropped: BTreeSet<usize> = by_size.into_iter().take(kernel_dim).collect();
    let mut normal = Vec::new();
    for (i, (re, _)) in ev.iter().enumerate() {
        if dropped.contains(&i) {
            continue;
        }
        if re.abs() <= field.spectral_gap_tol {
            return Err(FieldError::DegenerateLinearization {
                point: x.to_vec(),
                eigenvalue: *re,
            });
        }
        normal.push(*re);
    }
    let index = normal.iter().filter(|r| **r < 0.0).count();
    Ok((index, normal))
}

fn point_locus(field: &QuasiGradientField, p: Vec<f64>) -> Result<StationaryManifold, FieldError> {
    let kind = classify_boundary_kind(field, &p)?;
    let (index, normal) = normal_index(field, &p, 0)?;
    Ok(StationaryManifold {
        label: String::new(),
        model: LocusModel::Point(p.clone()),
        kind,
        index,
        dim: 0,
        f_value: field.f_at(&p),
        representative_points: vec![p],
        normal_spectrum: normal,
    })
}

/// Group sphere-type zeros into connected loci, densifying each by walking
/// along kernel directions.
fn sphere_clusters(field: &QuasiGradientField, seeds: Vec<Vec<f64>>) -> Vec<Vec<Vec<f64>>> {
    const STEP: f64 = 0.15;
    let mut pts: Vec<Vec<f64>> = Vec::new();
    let mut frontier: Vec<Vec<f64>> = seeds;
    while let Some(x) = frontier.pop() {
        if pts.iter().any(|p| dist(p, &x) < 0.5 * STEP) {
            continue;
        }
        pts.push(x.clone());
        if pts.len() > 4000 {
            break;
        }
        for d in kernel_directions(field, &x) {
            for sgn in [-1.0, 1.0] {
                let y: Vec<f64> = (0..x.len()).map(|i| x[i] + sgn * STEP * d[i]).collect();
                let Ok(yp) = field.manifold.project(&y) else { continue };
                if let Some(z) = newton_stationary(field, &yp) {
                    if kernel_directions(field, &z).len() == 2
                        && pts.iter().all(|p| dist(p, &z) >= 0.5 * STEP)
                    {
                        frontier.push(z);
                    }
                }
            }
        }
    }
    // Single linkage at twice the walking step.
    let mut label: Vec<usize> = (0..pts.len()).collect();
    fn find(l: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while l[r] != r {
            r = l[r];
        }
        l[i] = r;
        r
    }
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            if dist(&pts[i], &pts[j]) < 2.0 * STEP {
                let (a, b) = (find(&mut label, i), find(&mut label, j));
                label[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<Vec<f64>>> = Default::default();
    for i in 0..pts.len() {
        let r = find(&mut label, i);
        groups.entry(r).or_default().push(pts[i].clone());
    }
    groups.into_values().collect()
}

fn sphere_locus(
    field: &QuasiGradientField,
    mut pts: Vec<Vec<f64>>,
) -> Result<StationaryManifold, FieldError> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = pts[0].len();
    let bad = || FieldError::UnrecognizedLocusShape {
        point: pts[0].clone(),
    };
    if pts.len() < 5 {
        return Err(bad());
    }
    let k = pts.len();
    let mean = DVector::from_fn(n, |i, _| pts.iter().map(|p| p[i]).sum::<f64>() / k as f64);
    let centered = DMatrix::from_fn(k, n, |r, c| pts[r][c] - mean[c]);
    // Pad so the right factor is a full basis of the ambient space.
    let mut padded = DMatrix::zeros(k.max(n), n);
    padded.view_mut((0, 0), (k, n)).copy_from(&centered);
    let (_, sv, v) = crate::linalg::svd(&padded);
    if sv.len() < 3 {
        return Err(bad());
    }
    let e = DMatrix::from_fn(n, 3, |r, c| v[(r, c)]);
    // Points must lie in the affine 3-plane.
    let coords = &centered * &e;
    let resid = &centered - &coords * e.transpose();
    if resid.abs().max() > 1e-6 {
        return Err(bad());
    }
    // |y − c|² = r²  ⇔  2 y·c + (r² − |c|²) = |y|².
    let a = DMatrix::from_fn(k, 4, |r, c| if c < 3 { 2.0 * coords[(r, c)] } else { 1.0 });
    let b = DVector::from_fn(k, |r, _| coords.row(r).norm_squared());
    let sol = pinv(&a, RANK_REL_TOL) * b;
    let c3 = DVector::from_vec(vec![sol[0], sol[1], sol[2]]);
    let radius = (sol[3] + c3.norm_squared()).sqrt();
    if !radius.is_finite() {
        return Err(bad());
    }
    let fit = (0..k)
        .map(|r| ((coords.row(r).transpose() - &c3).norm() - radius).abs())
        .fold(0.0, f64::max);
    if fit > 1e-6 {
        return Err(bad());
    }
    let center = &mean + &e * &c3;
    let mut kinds = BTreeSet::new();
    let mut indices = BTreeSet::new();
    let mut normal = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        kinds.insert(classify_boundary_kind(field, p)?);
        let (idx, nspec) = normal_index(field, p, 2)?;
        indices.insert(idx);
        if i == 0 {
            normal = nspec;
        }
    }
    if kinds.len() != 1 || indices.len() != 1 {
        return Err(bad());
    }
    let frame = (0..3).map(|c| e.column(c).iter().cloned().collect()).collect();
    Ok(StationaryManifold {
        label: String::new(),
        model: LocusModel::Sphere2 {
            center: center.as_slice().to_vec(),
            frame,
            radius,
        },
        kind: *kinds.iter().next().unwrap(),
        index: *indices.iter().next().unwrap(),
        dim: 2,
        f_value: field.f_at(&pts[0]),
        representative_points: pts,
        normal_spectrum: normal,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AxiomVerdict {
    pub axiom: String,
    pub pass: bool,
    pub witness: Option<Vec<f64>>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuasiGradientCertificate {
    pub field: String,
    pub samples: usize,
    pub axioms: Vec<AxiomVerdict>,
}

impl QuasiGradientCertificate {
    pub fn pass(&self) -> bool {
        self.axioms.iter().all(|a| a.pass)
    }

    pub fn verdict(&self, axiom_prefix: &str) -> Option<&AxiomVerdict> {
        self.axioms.iter().find(|a| a.axiom.starts_with(axiom_prefix))
    }
}

/// Sample the quasi-gradient axioms; failures come back as data with witnesses.
pub fn verify_quasi_gradient(
    field: &QuasiGradientField,
    n_samples: usize,
    seed: u64,
) -> QuasiGradientCertificate {
    let m = &field.manifold;
    let mut axioms = Vec::new();

    // (i) tangency along the boundary.
    let mut worst: Option<(f64, Vec<f64>)> = None;
    for x in m.sample_boundary_points(n_samples / 4 + 1, seed ^ 1) {
        let v = field.eval(&x);
        let nv = v.norm();
        if nv < STATIONARY_TOL {
            continue;
        }
        let gr = m.grad_rho(&x).unwrap();
        let ratio = (v.dot(&gr) / gr.norm()).abs() / nv;
        if worst.as_ref().is_none_or(|(w, _)| ratio > *w) {
            worst = Some((ratio, x));
        }
    }
    let (ratio, wx) = worst.unwrap_or((0.0, Vec::new()));
    let pass = ratio < field.boundary_tangent_tol;
    axioms.push(AxiomVerdict {
        axiom: "(i) boundary tangency".into(),
        pass,
        witness: (!pass).then_some(wx),
        detail: format!("max |<v,n>|/|v| = {ratio:.3e}"),
    });

    // (ii) and (iii) from the detected loci.
    match find_stationary_loci(field, 4.0, seed) {
        Ok(loci) => {
            axioms.push(AxiomVerdict {
                axiom: "(ii) stationary set is a union of closed manifolds".into(),
                pass: true,
                witness: None,
                detail: format!("{} loci fitted", loci.len()),
            });
            axioms.push(AxiomVerdict {
                axiom: "(iii) normal hyperbolicity".into(),
                pass: true,
                witness: None,
                detail: format!(
                    "min |Re| of normal spectrum = {:.3e}",
                    loci.iter()
                        .flat_map(|l| l.normal_spectrum.iter().map(|x| x.abs()))
                        .fold(f64::INFINITY, f64::min)
                ),
            });
        }
        Err(FieldError::DegenerateLinearization { point, eigenvalue }) => {
            axioms.push(AxiomVerdict {
                axiom: "(ii) stationary set is a union of closed manifolds".into(),
                pass: true,
                witness: None,
                detail: "shape fitting not reached".into(),
            });
            axioms.push(AxiomVerdict {
                axiom: "(iii) normal hyperbolicity".into(),
                pass: false,
                witness: Some(point),
                detail: format!("normal eigenvalue real part {eigenvalue:.3e}"),
            });
        }
        Err(e) => {
            let point = match &e {
                FieldError::UnrecognizedLocusShape { point } => Some(point.clone()),
                _ => None,
            };
            axioms.push(AxiomVerdict {
                axiom: "(ii) stationary set is a union of closed manifolds".into(),
                pass: false,
                witness: point,
                detail: e.to_string(),
            });
            axioms.push(AxiomVerdict {
                axiom: "(iii) normal hyperbolicity".into(),
                pass: false,
                witness: None,
                detail: "loci could not be fitted".into(),
            });
        }
    }

    // (iv) taming: df(v) ≥ 0, strictly positive away from stationary points.
    let mut worst: Option<(f64, Vec<f64>)> = None;
    let mut min_rate = f64::INFINITY;
    for x in m.sample_points(n_samples, seed) {
        let v = field.eval(&x);
        let nv = v.norm();
        let rate = field.grad_f_at(&x).dot(&v);
        min_rate = min_rate.min(rate);
        let violates = rate < -1e-12 || (nv > STATIONARY_TOL * 100.0 && rate <= 1e-8 * nv * nv);
        if violates && worst.as_ref().is_none_or(|(w, _)| nv > *w) {
            worst = Some((nv, x));
        }
    }
    axioms.push(AxiomVerdict {
        axiom: "(iv) taming df(v) >= 0".into(),
        pass: worst.is_none(),
        detail: format!("min df(v) over samples = {min_rate:.3e}"),
        witness: worst.map(|(_, x)| x),
    });

    QuasiGradientCertificate {
        field: field.name.clone(),
        samples: n_samples,
        axioms,
    }
}

/// A quasi-gradient field with a semifree linear Pin(2)-action.
///
/// `i_mat` generates the circle action `e^{iθ} = exp(θ I)`; `j_mat` is the
/// action of `j`. Both act on the ambient space; the fixed locus is `ker I`.
#[derive(Debug, Clone)]
pub struct EquivariantField {
    pub base: QuasiGradientField,
    pub i_mat: DMatrix<f64>,
    pub j_mat: DMatrix<f64>,
}

impl EquivariantField {
    pub fn k_mat(&self) -> DMatrix<f64> {
        &self.i_mat * &self.j_mat
    }

    pub fn circle(&self, theta: f64) -> DMatrix<f64> {
        (&self.i_mat * theta).exp()
    }

    /// Maximum of `|g·v(x) − v(g·x)|` over the given points and group samples.
    pub fn equivariance_defect(&self, xs: &[Vec<f64>], thetas: &[f64]) -> f64 {
        let mut gs: Vec<DMatrix<f64>> = thetas.iter().map(|t| self.circle(*t)).collect();
        gs.push(self.j_mat.clone());
        let mut worst = 0.0f64;
        for x in xs {
            let xv = DVector::from_column_slice(x);
            let v = self.base.eval(x);
            for g in &gs {
                let gx = g * &xv;
                let d = (g * &v - self.base.eval(gx.as_slice())).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Orthonormal basis of the moving (normal) subspace `range I`.
    pub fn normal_basis(&self) -> DMatrix<f64> {
        crate::linalg::column_span(&self.i_mat, RANK_REL_TOL)
    }

    /// Normal linearization `L_r` at a fixed point, in the basis `normal_basis()`.
    pub fn normal_linearization(&self, r: &[f64]) -> DMatrix<f64> {
        let nb = self.normal_basis();
        nb.transpose() * self.base.jacobian(r) * &nb
    }
}

#[derive(Debug, Clone)]
pub struct BlowupLinearization {
    /// Block lower-triangular matrix in the splitting `T_r R ⊕ W ⊕ R`, where
    /// `W` is the complement of the quaternionic line through `φ`.
    pub matrix: DMatrix<f64>,
    pub block_sizes: [usize; 3],
    pub hyperbolic: bool,
    pub spectrum: Vec<(f64, f64)>,
}

/// Linearization of the blown-up field at `(r, [φ])` for an eigenpair
/// `(λ, φ)` of `L_r` (φ given in ambient coordinates).
pub fn blowup_linearization(
    e: &EquivariantField,
    r: &[f64],
    lambda: f64,
    phi: &DVector<f64>,
) -> Result<BlowupLinearization, FieldError> {
    let f = &e.base;
    let n = f.dim();
    let nb = e.normal_basis();
    let phi = phi / phi.norm();
    let jac = f.jacobian(r);
    let l_amb = &nb * (nb.transpose() * &jac * &nb) * nb.transpose();
    let residual = (&l_amb * &phi - &phi * lambda).norm();
    if residual > 1e-8 {
        return Err(FieldError::EigenpairMismatch { residual });
    }
    // Tangent space of R: tangent to the manifold and fixed by the action.
    let tm = f.manifold.tangent_basis(r);
    let fixed_t = {
        let proj = DMatrix::<f64>::identity(n, n) - &nb * nb.transpose();
        crate::linalg::column_span(&(proj * &tm), RANK_REL_TOL)
    };
    let a = fixed_t.transpose() * &jac * &fixed_t;
    let hline = DMatrix::from_columns(&[
        phi.clone(),
        &e.i_mat * &phi,
        &e.j_mat * &phi,
        e.k_mat() * &phi,
    ]);
    let hline = crate::linalg::column_span(&hline, RANK_REL_TOL);
    let in_normal = &nb * nb.transpose();
    let w = {
        let comp = orthogonal_complement(&hline, RANK_REL_TOL);
        crate::linalg::column_span(&(&in_normal * comp), RANK_REL_TOL)
    };
    let c = w.transpose() * (&l_amb - DMatrix::identity(n, n) * lambda) * &w;
    // Coupling of R-motion into the normal block: ∂_r (L φ) projected to W.
    let h = 1e-6;
    let mut b = DMatrix::zeros(w.ncols(), fixed_t.ncols());
    for k in 0..fixed_t.ncols() {
        let dir = fixed_t.column(k);
        let shift = |s: f64| -> DMatrix<f64> {
            let y: Vec<f64> = (0..n).map(|i| r[i] + s * dir[i]).collect();
            let y = f.manifold.project(&y).unwrap_or(y);
            f.jacobian(&y)
        };
        let dl = (shift(h) - shift(-h)) / (2.0 * h);
        b.set_column(k, &(w.transpose() * (&in_normal * dl * &in_normal) * &phi));
    }
    let (da, dw) = (a.nrows(), c.nrows());
    let size = da + dw + 1;
    let mut mat = DMatrix::zeros(size, size);
    mat.view_mut((0, 0), (da, da)).copy_from(&a);
    mat.view_mut((da, 0), (dw, da)).copy_from(&b);
    mat.view_mut((da, da), (dw, dw)).copy_from(&c);
    mat[(size - 1, size - 1)] = lambda;
    let mut spectrum: Vec<(f64, f64)> = eigenvalues(&mat).iter().map(|z| (z.re, z.im)).collect();
    spectrum.sort_by(|x, y| x.0.total_cmp(&y.0));
    let gap = f.spectral_gap_tol;
    let hyp = |m: &DMatrix<f64>| eigenvalues(m).iter().all(|z| z.re.abs() > gap);
    let hyperbolic = hyp(&a) && lambda.abs() > gap && hyp(&c);
    Ok(BlowupLinearization {
        matrix: mat,
        block_sizes: [da, dw, 1],
        hyperbolic,
        spectrum,
    })
}

#[derive(Debug, Clone)]
pub struct RealSpectrumReport {
    /// `max |Im λ|` over the spectrum of `D + P L` from a direct eigensolve.
    pub max_imag: f64,
    /// Sorted real parts of the direct spectrum.
    pub spectrum: Vec<f64>,
    /// Sorted spectrum of `D + P^{1/2} L P^{1/2}` on `im P` together with `D` on `ker P`.
    pub conjugated_spectrum: Vec<f64>,
}

/// Spectrum of `D + P L` with `P = Σ βᵢ p^{λᵢ}`, where `p^λ` projects onto
/// the span of eigenvectors of `D` with eigenvalue in `(−λ, λ)` and the
/// thresholds increase.
pub fn real_spectrum_check(
    d: &DMatrix<f64>,
    beta: &[f64],
    thresholds: &[f64],
    l: &DMatrix<f64>,
) -> Result<RealSpectrumReport, FieldError> {
    for m in [d, l] {
        let asym = (m - m.transpose()).abs().max();
        if asym > 1e-10 {
            return Err(FieldError::NotSelfAdjoint { asymmetry: asym });
        }
    }
    let sum: f64 = beta.iter().sum();
    if beta.is_empty()
        || beta.len() != thresholds.len()
        || beta.iter().any(|b| *b < 0.0)
        || (sum - 1.0).abs() > 1e-12
        || thresholds.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(FieldError::BadWeights);
    }
    let n = d.nrows();
    let (mu, q) = sym_eigen(d);
    let top = *thresholds.last().unwrap();
    let pdiag: Vec<f64> = (0..n)
        .map(|k| {
            beta.iter()
                .zip(thresholds)
                .filter(|(_, t)| mu[k].abs() < **t)
                .map(|(b, _)| b)
                .sum()
        })
        .collect();
    if (0..n).any(|k| mu[k].abs() < top && pdiag[k] == 0.0) {
        return Err(FieldError::ZeroDiagonalEntry);
    }
    let p = &q * DMatrix::from_diagonal(&DVector::from_vec(pdiag.clone())) * q.transpose();
    let a = d + &p * l;
    let ev = eigenvalues(&a);
    let max_imag = ev.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let mut spectrum: Vec<f64> = ev.iter().map(|z| z.re).collect();
    spectrum.sort_by(f64::total_cmp);

    let inside: Vec<usize> = (0..n).filter(|&k| pdiag[k] > 0.0).collect();
    let lq = q.transpose() * l * &q;
    let sym = DMatrix::from_fn(inside.len(), inside.len(), |r, c| {
        let (i, j) = (inside[r], inside[c]);
        let diag = if r == c { mu[i] } else { 0.0 };
        diag + pdiag[i].sqrt() * lq[(i, j)] * pdiag[j].sqrt()
    });
    let mut conj: Vec<f64> = if inside.is_empty() {
        Vec::new()
    } else {
        sym_eigen(&sym).0.iter().cloned().collect()
    };
    conj.extend((0..n).filter(|&k| pdiag[k] == 0.0).map(|k| mu[k]));
    conj.sort_by(f64::total_cmp);
    Ok(RealSpectrumReport {
        max_imag,
        spectrum,
        conjugated_spectrum: conj,
    })
}

/// Random symmetric matrix with entries uniform in `[-1, 1]`.
pub fn random_symmetric(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{default_vars, make_level_set_manifold};

    fn s2() -> ManifoldModel {
        let g = Expr::parse("x1^2 + x2^2 + x3^2 - 1", &["x1", "x2", "x3"]).unwrap();
        make_level_set_manifold(vec![g], None, 3).unwrap()
    }

    fn parse(src: &str, n: usize) -> Expr {
        let v = default_vars(n);
        let names: Vec<&str> = v.iter().map(String::as_str).collect();
        Expr::parse(src, &names).unwrap()
    }

    #[test]
    fn height_on_s2() {
        let f = QuasiGradientField::gradient("height", s2(), parse("x3", 3)).unwrap();
        let loci = find_stationary_loci(&f, 3.0, 0).unwrap();
        assert_eq!(loci.len(), 2);
        assert_eq!((loci[0].index, loci[1].index), (0, 2));
        assert!(loci.iter().all(|l| l.kind == BoundaryKind::Interior));
        assert!(verify_quasi_gradient(&f, 200, 1).pass());
    }

    fn cubic(sign: f64) -> QuasiGradientField {
        let m = ManifoldModel::new(
            vec!["x".into()],
            vec![],
            Some(parse("x1^2 - 1", 1)),
            vec![(-1.2, 1.2)],
        )
        .unwrap();
        let v = parse("x1*(1 - x1^2)", 1).scale(sign);
        let f = parse("x1^2/2 - x1^4/4", 1).scale(sign);
        QuasiGradientField::new("cubic", m, vec![v], f).unwrap()
    }

    #[test]
    fn interval_cubic_classification() {
        let f = cubic(1.0);
        let loci = find_stationary_loci(&f, 10.0, 0).unwrap();
        assert_eq!(loci.len(), 3);
        for l in &loci {
            let x = l.representative_points[0][0];
            if x.abs() < 0.5 {
                assert_eq!((l.kind, l.index), (BoundaryKind::Interior, 0));
            } else {
                assert_eq!((l.kind, l.index), (BoundaryKind::BoundaryUnstable, 1));
            }
        }
        assert!(verify_quasi_gradient(&f, 200, 2).pass());
        let r = cubic(-1.0);
        assert_eq!(
            classify_boundary_kind(&r, &[1.0]).unwrap(),
            BoundaryKind::BoundaryStable
        );
    }

    #[test]
    fn rotation_field_fails_taming_on_equator() {
        let m = s2();
        let v = vec![parse("-x2", 3), parse("x1", 3), Expr::zero()];
        let f = QuasiGradientField::new("rotation", m, v, parse("x3", 3)).unwrap();
        let cert = verify_quasi_gradient(&f, 300, 3);
        let iv = cert.verdict("(iv)").unwrap();
        assert!(!iv.pass);
        assert!(iv.witness.as_ref().unwrap()[2].abs() < 0.2);
    }

    #[test]
    fn morse_bott_equator_on_s3() {
        let g = parse("x1^2 + x2^2 + x3^2 + x4^2 - 1", 4);
        let m = make_level_set_manifold(vec![g], None, 4).unwrap();
        let f = QuasiGradientField::gradient("s3", m, parse("x4^2", 4)).unwrap();
        let loci = find_stationary_loci(&f, 2.0, 0).unwrap();
        assert_eq!(loci.len(), 3);
        let eq = loci.iter().find(|l| l.dim == 2).unwrap();
        assert_eq!(eq.index, 0);
        match &eq.model {
            LocusModel::Sphere2 { radius, center, .. } => {
                assert!((radius - 1.0).abs() < 1e-6);
                assert!(center.iter().all(|c| c.abs() < 1e-6));
            }
            _ => unreachable!(),
        }
        assert!(loci.iter().filter(|l| l.dim == 0).all(|l| l.index == 3));
    }

    #[test]
    fn real_spectrum_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = random_symmetric(6, &mut rng);
        let l = DMatrix::zeros(6, 6);
        let r = real_spectrum_check(&d, &[1.0], &[10.0], &l).unwrap();
        assert_eq!(r.max_imag, 0.0);
        let l = random_symmetric(6, &mut rng);
        let r = real_spectrum_check(&d, &[1.0], &[10.0], &l).unwrap();
        assert!(r.max_imag < 1e-12);
        let bad = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            real_spectrum_check(&bad, &[1.0], &[1.0], &bad),
            Err(FieldError::NotSelfAdjoint { .. })
        ));
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.1, 0.5]));
        assert_eq!(
            real_spectrum_check(&d, &[1.0, 0.0], &[0.2, 1.0], &d).unwrap_err(),
            FieldError::ZeroDiagonalEntry
        );
    }

    fn quaternion_mats() -> (DMatrix<f64>, DMatrix<f64>) {
        // Left multiplication by i and j on H = R⁴ (1, i, j, k).
        let i = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, -1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0,
            ],
        );
        let j = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0,
            ],
        );
        (i, j)
    }

    fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows() + b.nrows();
        let mut m = DMatrix::zeros(n, n);
        m.view_mut((0, 0), a.shape()).copy_from(a);
        m.view_mut(a.shape(), b.shape()).copy_from(b);
        m
    }

    /// Linear field `v = (L x, −y)` on H² ⊕ R with `L = diag_H(l1, l2)`.
    fn linear_equivariant(l1: f64, l2: f64) -> EquivariantField {
        let n = 9;
        let m = make_level_set_manifold(vec![], None, n).unwrap_or_else(|_| unreachable!());
        let v: Vec<Expr> = (0..n)
            .map(|k| {
                let c = if k < 4 {
                    l1
                } else if k < 8 {
                    l2
                } else {
                    -1.0
                };
                Expr::var(k).scale(c)
            })
            .collect();
        let f = Expr::zero();
        let base = QuasiGradientField::new("linear", m, v, f).unwrap();
        let (qi, qj) = quaternion_mats();
        let z = DMatrix::zeros(1, 1);
        let i_mat = block_diag(&block_diag(&qi, &qi), &z);
        let j_mat = block_diag(&block_diag(&qj, &qj), &DMatrix::identity(1, 1));
        EquivariantField { base, i_mat, j_mat }
    }

    #[test]
    fn blowup_linearization_blocks() {
        let e = linear_equivariant(1.0, 2.0);
        let r = vec![0.0; 9];
        assert!(e.equivariance_defect(&[vec![0.3; 9]], &[0.4, 1.3]) < 1e-12);
        let phi = DVector::from_fn(9, |k, _| if k == 0 { 1.0 } else { 0.0 });
        let bl = blowup_linearization(&e, &r, 1.0, &phi).unwrap();
        assert_eq!(bl.block_sizes, [1, 4, 1]);
        assert!(bl.hyperbolic);
        let re: Vec<f64> = bl.spectrum.iter().map(|z| z.0).collect();
        let expect = [-1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        for (a, b) in re.iter().zip(expect) {
            assert!((a - b).abs() < 1e-9, "{re:?}");
        }
        let e0 = linear_equivariant(0.0, 2.0);
        assert!(!blowup_linearization(&e0, &r, 0.0, &phi).unwrap().hyperbolic);
        let rep = linear_equivariant(1.0, 1.0);
        assert!(!blowup_linearization(&rep, &r, 1.0, &phi).unwrap().hyperbolic);
        assert!(matches!(
            blowup_linearization(&e, &r, 2.0, &phi),
            Err(FieldError::EigenpairMismatch { .. })
        ));
    }
}
