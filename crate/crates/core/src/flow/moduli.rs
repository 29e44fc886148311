//! Moduli spaces of flow lines between stationary loci: fiber-product counts,
//! dimension estimates, transversality and breaking.
//!
//! Counts are computed in a [`FieldContext`], which bundles a field with its
//! loci. Trajectories leaving a boundary-stable locus stay in the boundary, so
//! those counts run in [`FieldContext::boundary`]; backward counts run in
//! [`FieldContext::reversed`]. Locus indices of the reversed context agree
//! with the original.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    locus_tangent, nearest_on, random_unit, resolve_limit, sample_unstable_based, seed_chart,
    spectral_shift, stable_frame, unstable_frame, Direction, FlowError, FlowOptions, Limit,
    SeedChart, Trajectory,
};
use crate::expr::Expr;
use crate::fields::{BoundaryKind, LocusModel, QuasiGradientField, StationaryManifold};
use crate::geometry::ManifoldModel;
use crate::linalg::{pinv, RANK_REL_TOL};

/// Singular values of orthonormal frames below this are treated as zero.
pub const FRAME_RANK_TOL: f64 = 1e-4;

/// A field together with its stationary loci.
#[derive(Debug, Clone)]
pub struct FieldContext {
    pub field: QuasiGradientField,
    pub loci: Vec<StationaryManifold>,
    pub opts: FlowOptions,
    /// Index of each locus in the context this one was derived from.
    pub origin: Vec<usize>,
}

impl FieldContext {
    pub fn new(field: QuasiGradientField, loci: Vec<StationaryManifold>) -> Self {
        let origin = (0..loci.len()).collect();
        FieldContext {
            field,
            loci,
            opts: FlowOptions::default(),
            origin,
        }
    }

    /// The field `−v` tamed by `−f`. Indices become coindices and the
    /// boundary kinds `s` and `u` swap.
    pub fn reversed(&self) -> FieldContext {
        let fld = &self.field;
        let v: Vec<Expr> = fld.v.iter().map(|e| e.neg()).collect();
        let field = QuasiGradientField::new(
            format!("{}~rev", fld.name),
            fld.manifold.clone(),
            v,
            fld.f.neg(),
        )
        .expect("same dimensions")
        .with_spectral_gap_tol(fld.spectral_gap_tol);
        let m = fld.manifold.dim;
        let loci = self
            .loci
            .iter()
            .map(|b| StationaryManifold {
                kind: match b.kind {
                    BoundaryKind::Interior => BoundaryKind::Interior,
                    BoundaryKind::BoundaryStable => BoundaryKind::BoundaryUnstable,
                    BoundaryKind::BoundaryUnstable => BoundaryKind::BoundaryStable,
                },
                index: m - b.dim - b.index,
                f_value: -b.f_value,
                normal_spectrum: b.normal_spectrum.iter().map(|l| -l).collect(),
                ..b.clone()
            })
            .collect();
        FieldContext {
            field,
            loci,
            opts: self.opts,
            origin: self.origin.clone(),
        }
    }

    /// The restriction to the boundary `{ρ = 0}`, with the boundary loci.
    /// Boundary-unstable loci lose their normal unstable direction.
    pub fn boundary(&self) -> Option<FieldContext> {
        let m = &self.field.manifold;
        let rho = m.boundary_fn.clone()?;
        let mut constraints = m.constraints.clone();
        constraints.push(rho);
        let bm = ManifoldModel::new_unchecked(m.vars.clone(), constraints, None, m.bbox.clone());
        let field = QuasiGradientField::new(
            format!("{}~bdry", self.field.name),
            bm,
            self.field.v.clone(),
            self.field.f.clone(),
        )
        .ok()?
        .with_spectral_gap_tol(self.field.spectral_gap_tol);
        let mut loci = Vec::new();
        let mut origin = Vec::new();
        for (i, b) in self.loci.iter().enumerate() {
            if !b.is_boundary() {
                continue;
            }
            let drop = usize::from(b.kind == BoundaryKind::BoundaryUnstable);
            loci.push(StationaryManifold {
                kind: BoundaryKind::Interior,
                index: b.index - drop,
                ..b.clone()
            });
            origin.push(self.origin[i]);
        }
        Some(FieldContext {
            field,
            loci,
            opts: self.opts,
            origin,
        })
    }

    /// Position of original locus `i` in this context.
    pub fn local_index(&self, i: usize) -> Option<usize> {
        self.origin.iter().position(|&o| o == i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum CellKind {
    /// A generic point of the locus.
    Point,
    /// The whole locus (only distinct from `Point` for 2-sphere loci).
    Fundamental,
}

/// A cell of the minimal cell structure on a locus: one generator of the
/// chain complex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Cell {
    pub locus: usize,
    pub kind: CellKind,
}

impl Cell {
    pub fn point(locus: usize) -> Self {
        Cell {
            locus,
            kind: CellKind::Point,
        }
    }

    pub fn fundamental(locus: usize) -> Self {
        Cell {
            locus,
            kind: CellKind::Fundamental,
        }
    }

    /// Cells of a locus: `[pt]` for points, `[pt], [fund]` for spheres.
    pub fn cells_of(locus: usize, b: &StationaryManifold) -> Vec<Cell> {
        match b.model {
            LocusModel::Point(_) => vec![Cell::point(locus)],
            LocusModel::Sphere2 { .. } => vec![Cell::point(locus), Cell::fundamental(locus)],
        }
    }

    pub fn dim(&self, b: &StationaryManifold) -> usize {
        match self.kind {
            CellKind::Point => 0,
            CellKind::Fundamental => b.dim,
        }
    }
}

/// Tuning for the counting strategies.
#[derive(Debug, Clone, Serialize)]
pub struct CountOptions {
    pub seed_radius: f64,
    /// Samples along a one-parameter sweep.
    pub sweep_samples: usize,
    pub bisection_steps: usize,
    /// Subdivision level of the icosphere used for degree counts.
    pub ico_level: usize,
    /// Closest approaches farther than this from the target are ignored.
    pub approach_radius: f64,
    /// A bisected crossing must come this close to the target.
    pub crossing_tol: f64,
    /// Distance at which a trajectory is considered to pass through a locus.
    pub breaking_radius: f64,
    /// Allow counts by backward integration from the target.
    pub allow_backward: bool,
    pub seed: u64,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions {
            seed_radius: 1e-3,
            sweep_samples: 96,
            bisection_steps: 48,
            ico_level: 3,
            approach_radius: 0.3,
            crossing_tol: 1e-3,
            breaking_radius: 1e-2,
            allow_backward: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Strategy {
    /// Finitely many forward seeds.
    ForwardSeeds,
    /// Finitely many backward seeds from the target.
    BackwardSeeds,
    /// Sign changes of the signed approach along a forward circle of seeds.
    ForwardSweep,
    BackwardSweep,
    /// Degree of the endpoint map from a 2-parameter family onto a sphere.
    Degree,
    /// No trajectories can exist (e.g. the source is an attractor).
    Empty,
}

/// Result of a fiber-product count.
#[derive(Debug, Clone, Serialize)]
pub struct CountResult {
    pub coefficient: bool,
    pub hits: usize,
    pub strategy: Strategy,
    pub param_dim: usize,
    /// For degree counts: whether independent generic targets agreed.
    pub consistent: bool,
    /// Isolated trajectories found (forward orientation, original indices).
    #[serde(skip)]
    pub trajectories: Vec<Trajectory>,
    /// Near-broken trajectories produced by sweeps, continuing past the target.
    #[serde(skip)]
    pub near_broken: Vec<Trajectory>,
}

impl CountResult {
    fn empty() -> Self {
        CountResult {
            coefficient: false,
            hits: 0,
            strategy: Strategy::Empty,
            param_dim: 0,
            consistent: true,
            trajectories: vec![],
            near_broken: vec![],
        }
    }
}

/// Family of seeds on the unstable sphere (bundle) of a cell.
#[derive(Debug, Clone)]
enum Family {
    Discrete(Vec<Vec<f64>>, Vec<f64>),
    Arc {
        chart: SeedChart,
        lo: f64,
        hi: f64,
        periodic: bool,
    },
    Sphere(SeedChart),
    /// The normal unstable directions over every point of a sphere locus:
    /// both signs, or only the inward one on the boundary.
    LocusSigns { locus: usize, both: bool },
}

impl Family {
    fn param_dim(&self) -> usize {
        match self {
            Family::Discrete(..) => 0,
            Family::Arc { .. } => 1,
            Family::Sphere(_) | Family::LocusSigns { .. } => 2,
        }
    }
}

fn family(
    ctx: &FieldContext,
    cell: Cell,
    opts: &CountOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Family, FlowError> {
    let b = &ctx.loci[cell.locus];
    let base = match (&b.model, cell.kind) {
        (LocusModel::Point(p), _) => p.clone(),
        (LocusModel::Sphere2 { .. }, CellKind::Point) => {
            let u = random_unit(3, rng);
            b.point_at(&[u[0], u[1], u[2]])
        }
        (LocusModel::Sphere2 { .. }, CellKind::Fundamental) => {
            let u = random_unit(3, rng);
            let x = b.point_at(&[u[0], u[1], u[2]]);
            let chart = seed_chart(&ctx.field, b, &x, Direction::Forward, opts.seed_radius);
            return match chart.dim() {
                0 => Ok(Family::Discrete(vec![], x)),
                1 => Ok(Family::LocusSigns {
                    locus: cell.locus,
                    both: chart.inward.is_none(),
                }),
                k => Err(FlowError::Unsupported {
                    reason: format!(
                        "fundamental cell of {} with {k} unstable normal directions",
                        b.label
                    ),
                }),
            };
        }
    };
    let chart = seed_chart(&ctx.field, b, &base, Direction::Forward, opts.seed_radius);
    let inward = chart.inward_coords();
    Ok(match chart.dim() {
        0 => Family::Discrete(vec![], base),
        1 => {
            let seeds = [1.0, -1.0]
                .into_iter()
                .filter(|s| inward.as_ref().is_none_or(|c| s * c[0] > -1e-9))
                .map(|s| chart.seed(&ctx.field, &[s]))
                .collect();
            Family::Discrete(seeds, base)
        }
        2 => match inward {
            Some(c) => {
                let phi = c[1].atan2(c[0]);
                let h = std::f64::consts::FRAC_PI_2;
                Family::Arc {
                    chart,
                    lo: phi - h,
                    hi: phi + h,
                    periodic: false,
                }
            }
            None => {
                let phase = rand::Rng::gen_range(rng, 0.0..1.0) * 0.1;
                Family::Arc {
                    chart,
                    lo: phase,
                    hi: phase + std::f64::consts::TAU,
                    periodic: true,
                }
            }
        },
        3 if inward.is_none() => Family::Sphere(chart),
        k => {
            return Err(FlowError::Unsupported {
                reason: format!("{} has a {k}-dimensional unstable seed space", b.label),
            })
        }
    })
}

/// Mod-2 count of the fiber product of `M(B, B′)` with the cells `src` and
/// `tgt` (indices into `ctx.loci`).
///
/// The cells must have complementary dimension: the count is of isolated
/// trajectories when `tgt` is a point cell and a degree when it is the
/// fundamental cell of a sphere.
pub fn count_coefficient(
    ctx: &FieldContext,
    src: Cell,
    tgt: Cell,
    opts: &CountOptions,
) -> Result<CountResult, FlowError> {
    if confined_to_boundary(&ctx.loci[src.locus], &ctx.loci[tgt.locus]) {
        let Some(tb) = ctx.boundary() else {
            return Ok(CountResult::empty());
        };
        let (Some(s), Some(t)) = (tb.local_index(src.locus), tb.local_index(tgt.locus)) else {
            return Ok(CountResult::empty());
        };
        let mut r = count_in(
            &tb,
            Cell { locus: s, ..src },
            Cell { locus: t, ..tgt },
            opts,
        )?;
        for t in r.trajectories.iter_mut().chain(r.near_broken.iter_mut()) {
            relabel(t, &tb.origin);
        }
        return Ok(r);
    }
    count_in(ctx, src, tgt, opts)
}

/// Trajectories from a boundary-stable locus, or into a boundary-unstable
/// one, lie in the boundary (`W^u(s)` and `W^s(u)` are contained in it).
pub fn confined_to_boundary(src: &StationaryManifold, tgt: &StationaryManifold) -> bool {
    src.kind == BoundaryKind::BoundaryStable || tgt.kind == BoundaryKind::BoundaryUnstable
}

fn relabel(t: &mut Trajectory, origin: &[usize]) {
    for l in [&mut t.alpha_limit, &mut t.omega_limit].into_iter().flatten() {
        l.locus = origin[l.locus];
    }
}

fn count_in(
    ctx: &FieldContext,
    src: Cell,
    tgt: Cell,
    opts: &CountOptions,
) -> Result<CountResult, FlowError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ ((src.locus as u64) << 20) ^ tgt.locus as u64);
    // A forward family that cannot be parametrized is not fatal: the
    // backward strategies may still apply.
    let fwd_res = family(ctx, src, opts, &mut rng);
    let tb = &ctx.loci[tgt.locus];
    if tgt.kind == CellKind::Fundamental && tb.dim == 2 {
        let fwd = fwd_res?;
        return if fwd.param_dim() == 2 {
            degree_count(ctx, &fwd, src.locus, tgt.locus, opts, &mut rng)
        } else if matches!(fwd, Family::Discrete(ref s, _) if s.is_empty()) {
            Ok(CountResult::empty())
        } else {
            Err(FlowError::Unsupported {
                reason: format!(
                    "degree onto {} needs a 2-parameter family, have {}",
                    tb.label,
                    fwd.param_dim()
                ),
            })
        };
    }
    if let Ok(Family::Discrete(seeds, base)) = &fwd_res {
        return seed_count(ctx, seeds, base, src.locus, tgt.locus, Strategy::ForwardSeeds);
    }
    // Backward families are available when the source cell covers its locus
    // and the target is a point.
    let src_covers = src.kind == CellKind::Fundamental
        || matches!(ctx.loci[src.locus].model, LocusModel::Point(_));
    let tgt_point = matches!(tb.model, LocusModel::Point(_));
    let rev = (opts.allow_backward && src_covers && tgt_point).then(|| ctx.reversed());
    let bwd = match &rev {
        Some(r) => family(r, Cell::point(tgt.locus), opts, &mut rng).ok(),
        None => None,
    };
    if let (Some(r), Some(Family::Discrete(seeds, base))) = (&rev, &bwd) {
        let mut res = seed_count(r, seeds, base, tgt.locus, src.locus, Strategy::BackwardSeeds)?;
        for t in res.trajectories.iter_mut() {
            *t = t.reversed(&ctx.field);
        }
        return Ok(res);
    }
    if let Ok(fwd @ Family::Arc { .. }) = &fwd_res {
        return sweep_count(ctx, fwd, src.locus, tgt.locus, opts, &mut rng, Strategy::ForwardSweep);
    }
    if let (Some(r), Some(f @ Family::Arc { .. })) = (&rev, &bwd) {
        let mut res = sweep_count(r, f, tgt.locus, src.locus, opts, &mut rng, Strategy::BackwardSweep)?;
        for t in res.trajectories.iter_mut().chain(res.near_broken.iter_mut()) {
            *t = t.reversed(&ctx.field);
        }
        return Ok(res);
    }
    let fwd = fwd_res?;
    Err(FlowError::Unsupported {
        reason: format!(
            "no isolated-count strategy from {} to {} (forward family of dimension {})",
            ctx.loci[src.locus].label,
            tb.label,
            fwd.param_dim()
        ),
    })
}

fn seed_count(
    ctx: &FieldContext,
    seeds: &[Vec<f64>],
    base: &[f64],
    from: usize,
    to: usize,
    strategy: Strategy,
) -> Result<CountResult, FlowError> {
    let mut res = CountResult::empty();
    res.strategy = strategy;
    for s in seeds {
        let (lim, mut traj) = resolve_limit(&ctx.field, &ctx.loci, s, Direction::Forward, &ctx.opts)?;
        if lim.locus == to {
            traj.alpha_limit = Some(Limit {
                locus: from,
                point: base.to_vec(),
            });
            res.hits += 1;
            res.trajectories.push(traj);
        }
    }
    res.coefficient = res.hits % 2 == 1;
    Ok(res)
}

/// Signed position relative to `W^s(target)` at the closest approach:
/// `(distance, signed unstable component, index of closest sample)`.
fn approach(
    ctx: &FieldContext,
    traj: &Trajectory,
    target: usize,
    orient: &DVector<f64>,
) -> Result<(f64, f64, usize), FlowError> {
    let b = &ctx.loci[target];
    let (k, d) = traj
        .samples
        .iter()
        .enumerate()
        .map(|(i, x)| (i, b.distance(x)))
        .min_by(|a, c| a.1.total_cmp(&c.1))
        .expect("non-empty trajectory");
    let x = &traj.samples[k];
    let bp = nearest_on(b, x);
    let u = unstable_frame(&ctx.field, &bp, spectral_shift(b, &ctx.field));
    if u.ncols() != 1 {
        return Err(FlowError::Unsupported {
            reason: format!(
                "sweep target {} has {} unstable directions, need 1",
                b.label,
                u.ncols()
            ),
        });
    }
    let mut u = u.column(0).into_owned();
    if u.dot(orient) < 0.0 {
        u = -u;
    }
    let s: f64 = (0..x.len()).map(|i| (x[i] - bp[i]) * u[i]).sum();
    Ok((d, s, k))
}

fn sweep_count(
    ctx: &FieldContext,
    fam: &Family,
    from: usize,
    to: usize,
    opts: &CountOptions,
    rng: &mut ChaCha8Rng,
    strategy: Strategy,
) -> Result<CountResult, FlowError> {
    let Family::Arc {
        chart,
        lo,
        hi,
        periodic,
    } = fam
    else {
        unreachable!("sweeps run over arcs")
    };
    let orient = DVector::from_vec(random_unit(ctx.field.dim(), rng));
    let run = |theta: f64| -> Result<(Option<f64>, f64, Trajectory, usize), FlowError> {
        let seed = chart.seed(&ctx.field, &[theta.cos(), theta.sin()]);
        let traj = match resolve_limit(&ctx.field, &ctx.loci, &seed, Direction::Forward, &ctx.opts) {
            Ok((_, t)) => t,
            Err(FlowError::NoConvergence { .. }) => {
                super::integrate(&ctx.field, &seed, Direction::Forward, &ctx.opts)?
            }
            Err(e) => return Err(e),
        };
        let (d, s, k) = approach(ctx, &traj, to, &orient)?;
        let s = (d <= opts.approach_radius).then_some(s);
        Ok((s, d, traj, k))
    };
    let n = opts.sweep_samples.max(4);
    let count = if *periodic { n } else { n + 1 };
    let thetas: Vec<f64> = (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .collect();
    let mut signs = Vec::with_capacity(count);
    for &t in &thetas {
        signs.push(run(t)?.0);
    }
    let mut pairs: Vec<(usize, usize)> = (0..count - 1).map(|i| (i, i + 1)).collect();
    if *periodic {
        pairs.push((count - 1, 0));
    }
    let mut res = CountResult::empty();
    res.strategy = strategy;
    res.param_dim = 1;
    for (i, j) in pairs {
        let (Some(si), Some(sj)) = (signs[i], signs[j]) else {
            continue;
        };
        if (si >= 0.0) == (sj >= 0.0) {
            continue;
        }
        let (mut a, mut b) = (thetas[i], thetas[j]);
        if j == 0 {
            b += std::f64::consts::TAU;
        }
        let sa_pos = si >= 0.0;
        let mut best: Option<(f64, Trajectory, usize)> = None;
        // Closest trajectory on each side that still continues past the target.
        let mut passing: [Option<(f64, Trajectory)>; 2] = [None, None];
        for _ in 0..opts.bisection_steps {
            let m = 0.5 * (a + b);
            let (sm, d, traj, k) = run(m)?;
            let lands = traj.omega_limit.as_ref().is_some_and(|l| l.locus == to);
            if let (false, Some(sv)) = (lands, sm) {
                let side = &mut passing[usize::from(sv >= 0.0)];
                if side.as_ref().is_none_or(|(pd, _)| d < *pd) {
                    *side = Some((d, traj.clone()));
                }
            }
            if best.as_ref().is_none_or(|(bd, _, _)| d < *bd) {
                best = Some((d, traj, k));
            }
            match sm {
                _ if lands => break,
                Some(s) if (s >= 0.0) == sa_pos => a = m,
                Some(_) => b = m,
                None => break,
            }
        }
        let Some((d, traj, k)) = best else { continue };
        if d > opts.crossing_tol {
            continue;
        }
        let mut iso = traj.clone();
        iso.truncate(k);
        iso.alpha_limit = Some(Limit {
            locus: from,
            point: chart.base.clone(),
        });
        iso.omega_limit = Some(Limit {
            locus: to,
            point: nearest_on(&ctx.loci[to], &traj.samples[k]),
        });
        for (_, mut full) in passing.into_iter().flatten() {
            full.alpha_limit = iso.alpha_limit.clone();
            res.near_broken.push(full);
        }
        res.hits += 1;
        res.trajectories.push(iso);
    }
    res.coefficient = res.hits % 2 == 1;
    Ok(res)
}

/// Vertices and triangles of the icosphere subdivided `level` times.
pub fn icosphere(level: usize) -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v: Vec<[f64; 3]> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let norm = |p: [f64; 3]| {
        let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        [p[0] / n, p[1] / n, p[2] / n]
    };
    for p in v.iter_mut() {
        *p = norm(*p);
    }
    let mut f: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mid = std::collections::HashMap::new();
        let mut nf = Vec::with_capacity(f.len() * 4);
        let mut midpoint = |a: usize, b: usize, v: &mut Vec<[f64; 3]>| -> usize {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                let (p, q) = (v[a], v[b]);
                v.push(norm([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                v.len() - 1
            })
        };
        for [a, b, c] in f {
            let ab = midpoint(a, b, &mut v);
            let bc = midpoint(b, c, &mut v);
            let ca = midpoint(c, a, &mut v);
            nf.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        f = nf;
    }
    (v, f)
}

fn det3(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> f64 {
    a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
        + a[2] * (b[0] * c[1] - b[1] * c[0])
}

/// Whether `y` lies in the spherical triangle `abc` (either orientation).
fn in_spherical_triangle(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3], y: &[f64; 3]) -> bool {
    let (d1, d2, d3) = (det3(a, b, y), det3(b, c, y), det3(c, a, y));
    let same = (d1 > 0.0 && d2 > 0.0 && d3 > 0.0) || (d1 < 0.0 && d2 < 0.0 && d3 < 0.0);
    let s: [f64; 3] = std::array::from_fn(|i| a[i] + b[i] + c[i]);
    same && s[0] * y[0] + s[1] * y[1] + s[2] * y[2] > 0.0
}

fn degree_count(
    ctx: &FieldContext,
    fam: &Family,
    from: usize,
    to: usize,
    opts: &CountOptions,
    rng: &mut ChaCha8Rng,
) -> Result<CountResult, FlowError> {
    let (verts, tris) = icosphere(opts.ico_level);
    let tb = &ctx.loci[to];
    let land = |seed: &[f64]| -> Result<Option<[f64; 3]>, FlowError> {
        let (lim, _) = resolve_limit(&ctx.field, &ctx.loci, seed, Direction::Forward, &ctx.opts)?;
        Ok((lim.locus == to).then(|| tb.parameter_of(&lim.point)))
    };
    // One image per vertex per sheet.
    let mut sheets: Vec<Vec<Option<[f64; 3]>>> = Vec::new();
    match fam {
        Family::Sphere(chart) => {
            let mut img = Vec::with_capacity(verts.len());
            for u in &verts {
                img.push(land(&chart.seed(&ctx.field, u))?);
            }
            sheets.push(img);
        }
        Family::LocusSigns { locus, both } => {
            let b = &ctx.loci[*locus];
            let shift = spectral_shift(b, &ctx.field);
            let normals = oriented_normals(ctx, b, &verts, &tris, shift);
            let signs: &[f64] = if *both { &[1.0, -1.0] } else { &[1.0] };
            for &sign in signs {
                let mut img = Vec::with_capacity(verts.len());
                for (u, e) in verts.iter().zip(&normals) {
                    let x = DVector::from_vec(b.point_at(u)) + e * (sign * opts.seed_radius);
                    let seed = super::retract(&ctx.field, x);
                    img.push(land(seed.as_slice())?);
                }
                sheets.push(img);
            }
        }
        _ => unreachable!("degree counts need a 2-parameter family"),
    }
    let count_for = |y: &[f64; 3]| -> usize {
        sheets
            .iter()
            .map(|img| {
                tris.iter()
                    .filter(|[a, b, c]| match (img[*a], img[*b], img[*c]) {
                        (Some(pa), Some(pb), Some(pc)) => in_spherical_triangle(&pa, &pb, &pc, y),
                        _ => false,
                    })
                    .count()
            })
            .sum()
    };
    let ys: Vec<[f64; 3]> = (0..3)
        .map(|_| {
            let u = random_unit(3, rng);
            [u[0], u[1], u[2]]
        })
        .collect();
    let counts: Vec<usize> = ys.iter().map(count_for).collect();
    let odd = counts.iter().filter(|c| *c % 2 == 1).count();
    let mut res = CountResult::empty();
    res.strategy = Strategy::Degree;
    res.param_dim = 2;
    res.hits = counts[0];
    res.coefficient = odd >= 2;
    res.consistent = odd == 0 || odd == 3;
    let _ = from;
    Ok(res)
}

/// Unstable normal direction of a sphere locus at each icosphere vertex,
/// oriented continuously by propagation along edges.
fn oriented_normals(
    ctx: &FieldContext,
    b: &StationaryManifold,
    verts: &[[f64; 3]],
    tris: &[[usize; 3]],
    shift: f64,
) -> Vec<DVector<f64>> {
    let mut raw: Vec<DVector<f64>> = verts
        .iter()
        .map(|u| {
            let x = b.point_at(u);
            unstable_frame(&ctx.field, &x, shift).column(0).into_owned()
        })
        .collect();
    let mut adj = vec![Vec::new(); verts.len()];
    for [a, b2, c] in tris {
        for (p, q) in [(a, b2), (b2, c), (c, a)] {
            adj[*p].push(*q);
            adj[*q].push(*p);
        }
    }
    if b.is_boundary() {
        for (u, e) in verts.iter().zip(raw.iter_mut()) {
            let x = b.point_at(u);
            if let Some(nu) = ctx.field.manifold.inward_normal(&x) {
                if e.dot(&nu) < 0.0 {
                    *e = -&*e;
                }
            }
        }
        return raw;
    }
    let mut seen = vec![false; verts.len()];
    let mut queue = std::collections::VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(p) = queue.pop_front() {
        for &q in &adj[p] {
            if !seen[q] {
                if raw[q].dot(&raw[p]) < 0.0 {
                    raw[q] = -&raw[q];
                }
                seen[q] = true;
                queue.push_back(q);
            }
        }
    }
    raw
}

/// Projector onto the tangent space at a point near the manifold.
fn tangent_proj(m: &ManifoldModel, x: &[f64]) -> DMatrix<f64> {
    let n = m.ambient_dim;
    let mut p = DMatrix::identity(n, n);
    if !m.constraints.is_empty() {
        let j = m.constraint_jacobian(x);
        p -= pinv(&j, RANK_REL_TOL) * j;
    }
    p
}

fn orthonormalize(m: DMatrix<f64>) -> Result<DMatrix<f64>, FlowError> {
    if !m.iter().all(|c| c.is_finite()) {
        return Err(FlowError::FrameBlowup);
    }
    if m.ncols() == 0 {
        return Ok(m);
    }
    Ok(m.qr().q())
}

/// Transport a frame along `traj` (forward orientation) from `t0` to `t1`
/// with the linearized flow `δ' = −dv(γ) δ`, re-orthonormalizing as it goes.
pub fn propagate_frame(
    field: &QuasiGradientField,
    traj: &Trajectory,
    t0: f64,
    t1: f64,
    frame: &DMatrix<f64>,
) -> Result<DMatrix<f64>, FlowError> {
    let mut q = orthonormalize(frame.clone())?;
    if q.ncols() == 0 || t0 == t1 {
        return Ok(q);
    }
    let sgn = traj.direction.sign();
    let rhs = |t: f64, d: &DMatrix<f64>| field.jacobian(traj.at(t).as_slice()) * d * sgn;
    // Nodes: sample times between t0 and t1, subdivided so |h| ≤ 0.02.
    let (a, b) = (t0.min(t1), t0.max(t1));
    let mut nodes: Vec<f64> = vec![a];
    nodes.extend(traj.times.iter().copied().filter(|t| *t > a && *t < b));
    nodes.push(b);
    let mut grid = vec![a];
    for w in nodes.windows(2) {
        let m = ((w[1] - w[0]) / 0.02).ceil().max(1.0) as usize;
        for i in 1..=m {
            grid.push(w[0] + (w[1] - w[0]) * i as f64 / m as f64);
        }
    }
    if t1 < t0 {
        grid.reverse();
    }
    for w in grid.windows(2) {
        let (t, h) = (w[0], w[1] - w[0]);
        let k1 = rhs(t, &q);
        let k2 = rhs(t + h / 2.0, &(&q + &k1 * (h / 2.0)));
        let k3 = rhs(t + h / 2.0, &(&q + &k2 * (h / 2.0)));
        let k4 = rhs(t + h, &(&q + &k3 * h));
        let next = &q + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let p = tangent_proj(&field.manifold, traj.at(w[1]).as_slice());
        q = orthonormalize(p * next)?;
    }
    Ok(q)
}

/// Time at which `f` along the trajectory crosses `level` (first crossing).
pub fn slice_time(traj: &Trajectory, field: &QuasiGradientField, level: f64) -> Result<f64, FlowError> {
    let fp = &traj.f_profile;
    let k = (1..fp.len())
        .find(|&i| (fp[i - 1] - level) * (fp[i] - level) <= 0.0)
        .ok_or(FlowError::SliceMissed { level })?;
    let (mut a, mut b) = (traj.times[k - 1], traj.times[k]);
    let fa = fp[k - 1] - level;
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        let fm = field.f_at(traj.at(m).as_slice()) - level;
        if (fm >= 0.0) == (fa >= 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

fn rank_abs(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0;
    }
    crate::linalg::svd(m).1.iter().filter(|s| **s > tol).count()
}

fn span_abs(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let (u, sv, _) = crate::linalg::svd(m);
    let keep: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] > tol).collect();
    DMatrix::from_fn(m.nrows(), keep.len(), |r, c| u[(r, keep[c])])
}

/// Tangent spaces of `W^u(B)` and `W^s(B′)` at a point of a connecting
/// trajectory, and what they say about dimension and transversality.
#[derive(Debug, Clone, Serialize)]
pub struct SmaleReport {
    pub time: f64,
    pub point: Vec<f64>,
    pub unstable_dim: usize,
    pub stable_dim: usize,
    /// `dim(T W^u ∩ T W^s) − 1`: the local dimension of the moduli space.
    pub est_dim: usize,
    /// `dim M − dim(T W^u + T W^s)`; zero means transverse.
    pub defect: usize,
}

impl SmaleReport {
    pub fn transverse(&self) -> bool {
        self.defect == 0
    }
}

/// Frames of `W^u(α)` and `W^s(ω)` carried to time `t` along `traj`, which
/// must be in forward orientation with both limits set.
pub fn smale_frames(
    ctx: &FieldContext,
    traj: &Trajectory,
    t: f64,
) -> Result<SmaleReport, FlowError> {
    let field = &ctx.field;
    let (Some(al), Some(om)) = (&traj.alpha_limit, &traj.omega_limit) else {
        return Err(FlowError::Unsupported {
            reason: "trajectory without both limits".into(),
        });
    };
    let (bs, bt) = (&ctx.loci[al.locus], &ctx.loci[om.locus]);
    let u0 = {
        let uf = unstable_frame(field, &al.point, spectral_shift(bs, field));
        let tan = locus_tangent(bs, &al.point);
        DMatrix::from_fn(uf.nrows(), uf.ncols() + tan.ncols(), |r, c| {
            if c < uf.ncols() {
                uf[(r, c)]
            } else {
                tan[(r, c - uf.ncols())]
            }
        })
    };
    let s0 = stable_frame(field, &om.point, spectral_shift(bt, field));
    let u = propagate_frame(field, traj, 0.0, t, &u0)?;
    let s = propagate_frame(field, traj, traj.duration(), t, &s0)?;
    let x = traj.at(t);
    let tb = field.manifold.tangent_basis(x.as_slice());
    let v = tb.transpose() * field.eval(x.as_slice());
    let v = v.normalize();
    let perp = DMatrix::identity(v.len(), v.len()) - &v * v.transpose();
    let up = span_abs(&(&perp * (tb.transpose() * &u)), FRAME_RANK_TOL);
    let sp = span_abs(&(&perp * (tb.transpose() * &s)), FRAME_RANK_TOL);
    let both = DMatrix::from_fn(v.len(), up.ncols() + sp.ncols(), |r, c| {
        if c < up.ncols() {
            up[(r, c)]
        } else {
            sp[(r, c - up.ncols())]
        }
    });
    let sum = rank_abs(&both, FRAME_RANK_TOL);
    let est = up.ncols() + sp.ncols() - sum;
    Ok(SmaleReport {
        time: t,
        point: x.as_slice().to_vec(),
        unstable_dim: up.ncols() + 1,
        stable_dim: sp.ncols() + 1,
        est_dim: est,
        defect: field.manifold.dim.saturating_sub(sum + 1),
    })
}

/// One trajectory class of a moduli space, seen on the median slice.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryClass {
    pub slice_point: Vec<f64>,
    pub ev_minus: Vec<f64>,
    pub ev_plus: Vec<f64>,
    pub flight_time: f64,
}

/// A near-broken trajectory split at the loci it passes through.
#[derive(Debug, Clone, Serialize)]
pub struct BrokenRecord {
    /// Loci visited in order, including both ends (original indices).
    pub loci: Vec<usize>,
    pub labels: Vec<String>,
    /// Times at which the trajectory is closest to each intermediate locus.
    pub split_times: Vec<f64>,
    /// Largest distance between the entry and exit evaluation points at an
    /// intermediate locus.
    pub ev_mismatch: f64,
    /// Closest approach to each intermediate locus.
    pub approach: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModuliSpace {
    pub source: usize,
    pub target: usize,
    pub source_label: String,
    pub target_label: String,
    pub expected_dim: i64,
    pub est_dim: Option<usize>,
    pub boundary_obstructed: bool,
    pub slice_level: f64,
    pub classes: Vec<TrajectoryClass>,
    pub broken_records: Vec<BrokenRecord>,
    pub smale: Option<SmaleReport>,
    #[serde(skip)]
    pub representatives: Vec<Trajectory>,
}

/// Options for [`build_moduli`].
#[derive(Debug, Clone, Serialize)]
pub struct ModuliOptions {
    pub count: CountOptions,
    /// Seeds shot for positive-dimensional moduli spaces.
    pub samples: usize,
    /// Slice points closer than this are the same class.
    pub dedup_radius: f64,
}

impl Default for ModuliOptions {
    fn default() -> Self {
        ModuliOptions {
            count: CountOptions::default(),
            samples: 64,
            dedup_radius: 1e-4,
        }
    }
}

/// Expected dimension of `M(B, B′)`: `ind B − ind B′ + dim B − 1`, plus one
/// when the pair is boundary-obstructed (`s` to `u`).
pub fn expected_dim(b: &StationaryManifold, b2: &StationaryManifold) -> i64 {
    let obstructed =
        b.kind == BoundaryKind::BoundaryStable && b2.kind == BoundaryKind::BoundaryUnstable;
    b.index as i64 - b2.index as i64 + b.dim as i64 - 1 + i64::from(obstructed)
}

/// Sample the moduli space of trajectories from locus `src` to locus `tgt`.
pub fn build_moduli(
    ctx: &FieldContext,
    src: usize,
    tgt: usize,
    opts: &ModuliOptions,
) -> Result<ModuliSpace, FlowError> {
    let (b, b2) = (&ctx.loci[src], &ctx.loci[tgt]);
    let obstructed =
        b.kind == BoundaryKind::BoundaryStable && b2.kind == BoundaryKind::BoundaryUnstable;
    let expected = expected_dim(b, b2);
    let mut out = ModuliSpace {
        source: src,
        target: tgt,
        source_label: b.label.clone(),
        target_label: b2.label.clone(),
        expected_dim: expected,
        est_dim: None,
        boundary_obstructed: obstructed,
        slice_level: 0.5 * (b.f_value + b2.f_value),
        classes: vec![],
        broken_records: vec![],
        smale: None,
        representatives: vec![],
    };
    // Taming forces f to drop along nonconstant trajectories.
    if b.f_value < b2.f_value {
        return Ok(out);
    }
    // Work in the boundary when trajectories are confined there.
    let bctx;
    let (work, ws, wt) = if confined_to_boundary(b, b2) {
        bctx = ctx.boundary();
        match bctx.as_ref().and_then(|c| Some((c, c.local_index(src)?, c.local_index(tgt)?))) {
            Some(x) => x,
            None => return Ok(out),
        }
    } else {
        (ctx, src, tgt)
    };
    let mut reps: Vec<Trajectory> = Vec::new();
    if expected <= 0 {
        // Negative expected dimension: any trajectory found is a failure of
        // transversality, which the Smale report then exhibits.
        let cell = Cell::cells_of(ws, &work.loci[ws]).last().copied().unwrap();
        let r = match count_in(work, cell, Cell::point(wt), &opts.count) {
            Ok(r) => r,
            Err(FlowError::Unsupported { .. }) if expected < 0 => return Ok(out),
            Err(e) => return Err(e),
        };
        reps = r.trajectories;
        for nb in &r.near_broken {
            if let Some(rec) = split_broken(work, nb, &opts.count) {
                out.broken_records.push(rec);
            }
        }
    } else {
        let seeds = sample_unstable_based(
            &work.field,
            &work.loci[ws],
            opts.count.seed_radius,
            opts.samples,
            opts.count.seed,
        )?;
        for (s, base) in seeds {
            let (lim, mut t) = resolve_limit(&work.field, &work.loci, &s, Direction::Forward, &work.opts)?;
            if lim.locus == wt {
                t.alpha_limit = Some(Limit {
                    locus: ws,
                    point: base,
                });
                reps.push(t);
            }
        }
        // Ends of one-parameter families: sweep toward intermediate loci.
        if expected == 1 {
            let sweep = CountOptions {
                allow_backward: false,
                ..opts.count.clone()
            };
            for (mid, m) in work.loci.iter().enumerate() {
                if mid == ws || mid == wt || m.f_value >= b.f_value || m.f_value <= b2.f_value {
                    continue;
                }
                let cell = Cell::cells_of(ws, &work.loci[ws])[0];
                if let Ok(r) = count_in(work, cell, Cell::point(mid), &sweep) {
                    for nb in &r.near_broken {
                        if nb.omega_limit.as_ref().is_some_and(|l| l.locus == wt) {
                            if let Some(rec) = split_broken(work, nb, &opts.count) {
                                out.broken_records.push(rec);
                            }
                        }
                    }
                }
            }
        }
    }
    for rec in out.broken_records.iter_mut() {
        for l in rec.loci.iter_mut() {
            *l = work.origin[*l];
        }
    }
    for t in &reps {
        let Ok(ts) = slice_time(t, &work.field, out.slice_level) else {
            continue;
        };
        let x = t.at(ts).as_slice().to_vec();
        let dup = out.classes.iter().any(|c| {
            c.slice_point
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
                < opts.dedup_radius
        });
        if dup {
            continue;
        }
        if out.smale.is_none() {
            let rep = smale_frames(work, t, ts)?;
            out.est_dim = Some(rep.est_dim);
            out.smale = Some(rep);
        }
        out.classes.push(TrajectoryClass {
            slice_point: x,
            ev_minus: t.alpha_limit.as_ref().map(|l| l.point.clone()).unwrap_or_default(),
            ev_plus: t.omega_limit.as_ref().map(|l| l.point.clone()).unwrap_or_default(),
            flight_time: ts,
        });
    }
    out.classes.sort_by(|a, b| {
        a.slice_point
            .iter()
            .zip(&b.slice_point)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    out.representatives = reps;
    for t in out.representatives.iter_mut() {
        relabel(t, &work.origin);
    }
    Ok(out)
}

/// Split a trajectory at the loci it passes within `breaking_radius` of
/// (other than its ends). Returns `None` if it passes through none.
pub fn split_broken(ctx: &FieldContext, traj: &Trajectory, opts: &CountOptions) -> Option<BrokenRecord> {
    let first = traj.alpha_limit.as_ref().map(|l| l.locus);
    let last = traj.omega_limit.as_ref().map(|l| l.locus);
    let mut visits: Vec<(usize, usize, usize, usize)> = Vec::new(); // locus, entry, exit, closest
    let mut current: Option<(usize, usize, usize, f64)> = None;
    for (k, x) in traj.samples.iter().enumerate() {
        let near = ctx
            .loci
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != first && Some(*i) != last)
            .map(|(i, l)| (i, l.distance(x)))
            .filter(|(_, d)| *d < opts.breaking_radius)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match (near, current) {
            (Some((i, d)), Some((ci, e, c, cd))) if i == ci => {
                current = Some((ci, e, if d < cd { k } else { c }, d.min(cd)));
            }
            (Some((i, d)), cur) => {
                if let Some((ci, e, c, _)) = cur {
                    visits.push((ci, e, k - 1, c));
                }
                current = Some((i, k, k, d));
            }
            (None, Some((ci, e, c, _))) => {
                visits.push((ci, e, k - 1, c));
                current = None;
            }
            (None, None) => {}
        }
    }
    if let Some((ci, e, c, _)) = current {
        // Still near the locus at the end: this is the limit, not a break.
        if last.is_some() {
            visits.push((ci, e, traj.samples.len() - 1, c));
        }
    }
    if visits.is_empty() {
        return None;
    }
    let mut loci = vec![first?];
    let mut split_times = Vec::new();
    let mut approach = Vec::new();
    let mut mismatch: f64 = 0.0;
    for (i, e, x, c) in &visits {
        let b = &ctx.loci[*i];
        let pe = nearest_on(b, &traj.samples[*e]);
        let px = nearest_on(b, &traj.samples[*x]);
        // Project entry/exit onto the locus along the flow: nearest points
        // converge to the evaluation maps as the approach shrinks.
        let d = pe.iter().zip(&px).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if b.dim > 0 {
            mismatch = mismatch.max(d);
        }
        loci.push(*i);
        split_times.push(traj.times[*c]);
        approach.push(b.distance(&traj.samples[*c]));
    }
    loci.push(last?);
    let labels = loci.iter().map(|&i| ctx.loci[i].label.clone()).collect();
    Some(BrokenRecord {
        loci,
        labels,
        split_times,
        ev_mismatch: mismatch,
        approach,
    })
}

/// Flight time to the median slice for each member of a family of
/// trajectories, and the members whose time exceeds `ratio` times the median.
pub fn flight_outliers(
    field: &QuasiGradientField,
    family: &[Trajectory],
    level: f64,
    ratio: f64,
) -> (Vec<f64>, Vec<usize>) {
    let times: Vec<f64> = family
        .iter()
        .map(|t| slice_time(t, field, level).unwrap_or(f64::INFINITY))
        .collect();
    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    let med = sorted.get(sorted.len() / 2).copied().unwrap_or(0.0);
    let out = times
        .iter()
        .enumerate()
        .filter(|(_, t)| **t > ratio * med)
        .map(|(i, _)| i)
        .collect();
    (times, out)
}

/// Transversality of `W^u` and `W^s` along a connecting trajectory, checked at
/// the median level between its limits.
pub fn smale_check(ctx: &FieldContext, traj: &Trajectory) -> Result<SmaleReport, FlowError> {
    let (Some(a), Some(o)) = (&traj.alpha_limit, &traj.omega_limit) else {
        return Err(FlowError::Unsupported {
            reason: "trajectory without both limits".into(),
        });
    };
    let level = 0.5 * (ctx.loci[a.locus].f_value + ctx.loci[o.locus].f_value);
    let t = slice_time(traj, &ctx.field, level)?;
    smale_frames(ctx, traj, t)
}

/// Follow the one-parameter family of trajectories starting at
/// `seed_path(s)`, `s ∈ [0, 1]`, and split the near-broken members.
///
/// Members whose limit switches between neighbouring samples are bisected to
/// the switch; members whose flight time to the median level of `(b, b2)`
/// exceeds `ratio` times the median are split directly. Only records running
/// from `b` to `b2` are returned.
pub fn detect_breaking(
    ctx: &FieldContext,
    seed_path: &dyn Fn(f64) -> Vec<f64>,
    b: usize,
    b2: usize,
    samples: usize,
    ratio: f64,
    opts: &CountOptions,
) -> Result<Vec<BrokenRecord>, FlowError> {
    let run = |s: f64| -> Result<Trajectory, FlowError> {
        let (_, mut t) = resolve_limit(&ctx.field, &ctx.loci, &seed_path(s), Direction::Forward, &ctx.opts)?;
        t.alpha_limit = Some(Limit {
            locus: b,
            point: nearest_on(&ctx.loci[b], &t.samples[0]),
        });
        Ok(t)
    };
    let n = samples.max(2);
    let ss: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let fam: Vec<Trajectory> = ss.iter().map(|&s| run(s)).collect::<Result<_, _>>()?;
    let omega = |t: &Trajectory| t.omega_limit.as_ref().map(|l| l.locus);
    let mut candidates: Vec<Trajectory> = Vec::new();
    for i in 0..n {
        if omega(&fam[i]) == omega(&fam[i + 1]) {
            continue;
        }
        let (mut lo, mut hi) = (ss[i], ss[i + 1]);
        let (mut tlo, mut thi) = (fam[i].clone(), fam[i + 1].clone());
        for _ in 0..opts.bisection_steps {
            let m = 0.5 * (lo + hi);
            let tm = run(m)?;
            if omega(&tm) == omega(&tlo) {
                lo = m;
                tlo = tm;
            } else {
                hi = m;
                thi = tm;
            }
        }
        candidates.push(tlo);
        candidates.push(thi);
    }
    let level = 0.5 * (ctx.loci[b].f_value + ctx.loci[b2].f_value);
    let (_, slow) = flight_outliers(&ctx.field, &fam, level, ratio);
    let mut records = Vec::new();
    for i in &slow {
        let rec = split_broken(ctx, &fam[*i], opts).ok_or(FlowError::UnresolvedBreaking)?;
        records.push(rec);
    }
    for t in &candidates {
        if let Some(rec) = split_broken(ctx, t, opts) {
            records.push(rec);
        }
    }
    records.retain(|r| r.loci.first() == Some(&b) && r.loci.last() == Some(&b2));
    Ok(records)
}

/// Cut a moduli space down by the zero set of a section `z` (with `rank`
/// components), evaluated along the parametrized trajectories.
///
/// A class of dimension `d` sweeps out a `(d+1)`-dimensional family of points;
/// the cut-down space has dimension `d + 1 − rank`. Negative dimensions give
/// the empty space. For `d + 1 − rank = 0` with `rank = 1` the cut is counted
/// as sign changes of `z` along each representative; the crossing points become
/// the classes. Sections meeting a trajectory tangentially are rejected.
pub fn cut_down_moduli(
    ctx: &FieldContext,
    m: &ModuliSpace,
    z: &dyn Fn(&[f64]) -> Vec<f64>,
    rank: usize,
) -> Result<ModuliSpace, FlowError> {
    let d = m.est_dim.map(|d| d as i64).unwrap_or(m.expected_dim);
    let cut = d + 1 - rank as i64;
    let mut out = ModuliSpace {
        expected_dim: m.expected_dim + 1 - rank as i64,
        est_dim: None,
        classes: vec![],
        broken_records: vec![],
        smale: None,
        representatives: vec![],
        ..m.clone()
    };
    if cut < 0 || m.representatives.is_empty() {
        return Ok(out);
    }
    if cut > 0 || rank != 1 {
        return Err(FlowError::Unsupported {
            reason: format!("cut of a {d}-dimensional space by a rank-{rank} section"),
        });
    }
    for t in &m.representatives {
        let vals: Vec<f64> = t.samples.iter().map(|x| z(x)[0]).collect();
        for k in 1..vals.len() {
            if (vals[k - 1] >= 0.0) == (vals[k] >= 0.0) {
                continue;
            }
            let (mut a, mut b) = (t.times[k - 1], t.times[k]);
            let za = vals[k - 1];
            for _ in 0..60 {
                let mid = 0.5 * (a + b);
                if (z(t.at(mid).as_slice())[0] >= 0.0) == (za >= 0.0) {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let tc = 0.5 * (a + b);
            let x = t.at(tc);
            // Transversality: the section must change at a nonzero rate.
            let h = 1e-6;
            let rate = (z(t.at(tc + h).as_slice())[0] - z(t.at(tc - h).as_slice())[0]) / (2.0 * h);
            let speed = ctx.field.eval(x.as_slice()).norm();
            if rate.abs() < 1e-8 * speed.max(1e-300) {
                return Err(FlowError::NonTransverseSection);
            }
            out.classes.push(TrajectoryClass {
                slice_point: x.as_slice().to_vec(),
                ev_minus: t.alpha_limit.as_ref().map(|l| l.point.clone()).unwrap_or_default(),
                ev_plus: t.omega_limit.as_ref().map(|l| l.point.clone()).unwrap_or_default(),
                flight_time: tc,
            });
        }
    }
    out.est_dim = Some(0);
    Ok(out)
}

fn family_seeds(ctx: &FieldContext, fam: &Family, samples: usize, opts: &CountOptions) -> Vec<Vec<f64>> {
    match fam {
        Family::Discrete(seeds, _) => seeds.clone(),
        Family::Arc { chart, lo, hi, .. } => (0..=samples)
            .map(|i| {
                let t = lo + (hi - lo) * i as f64 / samples.max(1) as f64;
                chart.seed(&ctx.field, &[t.cos(), t.sin()])
            })
            .collect(),
        Family::Sphere(chart) => {
            let (verts, _) = icosphere(opts.ico_level);
            verts.iter().map(|u| chart.seed(&ctx.field, u)).collect()
        }
        Family::LocusSigns { locus, both } => {
            let b = &ctx.loci[*locus];
            let (verts, tris) = icosphere(opts.ico_level);
            let normals = oriented_normals(ctx, b, &verts, &tris, spectral_shift(b, &ctx.field));
            let signs: &[f64] = if *both { &[1.0, -1.0] } else { &[1.0] };
            let mut out = Vec::new();
            for &sign in signs {
                for (u, e) in verts.iter().zip(&normals) {
                    let x = DVector::from_vec(b.point_at(u)) + e * (sign * opts.seed_radius);
                    out.push(super::retract(&ctx.field, x).as_slice().to_vec());
                }
            }
            out
        }
    }
}

fn min_distance(ctx: &FieldContext, seeds: &[Vec<f64>], to: usize) -> Result<f64, FlowError> {
    let b = &ctx.loci[to];
    let mut best = f64::INFINITY;
    for s in seeds {
        let traj = match resolve_limit(&ctx.field, &ctx.loci, s, Direction::Forward, &ctx.opts) {
            Ok((_, t)) => t,
            Err(FlowError::NoConvergence { .. }) => super::integrate(&ctx.field, s, Direction::Forward, &ctx.opts)?,
            Err(e) => return Err(e),
        };
        for x in &traj.samples {
            best = best.min(b.distance(x));
        }
    }
    Ok(best)
}

/// Smallest distance to locus `tgt` reached by trajectories leaving the cell
/// `src`, over `samples` members of its unstable family.
///
/// When the forward family cannot be parametrized, the backward family of a
/// point target is used in the reversed field, measuring the distance to the
/// source locus instead.
pub fn closest_approach(
    ctx: &FieldContext,
    src: Cell,
    tgt: usize,
    opts: &CountOptions,
    samples: usize,
) -> Result<f64, FlowError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xa99);
    match family(ctx, src, opts, &mut rng) {
        Ok(fam) => min_distance(ctx, &family_seeds(ctx, &fam, samples, opts), tgt),
        Err(e) => {
            let r = ctx.reversed();
            let fam = family(&r, Cell::point(tgt), opts, &mut rng).map_err(|_| e)?;
            min_distance(&r, &family_seeds(&r, &fam, samples, opts), src.locus)
        }
    }
}
