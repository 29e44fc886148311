//! Continuation maps between check complexes of two fields joined by a
//! homotopy, and the chain homotopy between continuation maps.
//!
//! A homotopy is written in the compactified chart `s = ρ(λ) = tanh(cλ)`, so
//! it is a family `v(x, s)` for `s ∈ [−1, 1]`. The lifted field lives on
//! `X × [−1, 1]`:
//!
//! ```text
//! ṽ(x, s) = (v(x, s), −c (1 − s²))
//! ```
//!
//! With `dγ/dt + ṽ = 0` the second coordinate increases, so trajectories run
//! from `B₀ × {−1}` to `B₁ × {+1}`. The ends of the interval are boundary
//! faces: `B₀ × {−1}` is boundary-unstable with index `ind B₀ + 1` and
//! `B₁ × {+1}` is boundary-stable with index `ind B₁`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::{
    assemble_numeric, f2_homology, ComplexError, CheckComplex, CountRecord, Entry, GenRef, Generator,
};
use crate::expr::Expr;
use crate::f2::{independent_modulo, F2Matrix};
use crate::fields::{find_stationary_loci, tangential, BoundaryKind, FieldError, QuasiGradientField, StationaryManifold};
use crate::flow::moduli::{
    build_moduli, count_coefficient, Cell, CellKind, CountOptions, FieldContext, ModuliOptions, ModuliSpace,
};
use crate::flow::FlowError;
use crate::geometry::ManifoldModel;
use crate::strata::TargetCell;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContinuationError {
    #[error("homotopy is invalid: {reason}")]
    InvalidHomotopy { reason: String },
    #[error("lifted loci do not match the endpoint loci: {reason}")]
    LociMismatch { reason: String },
    #[error("entry {source_label} → {target_label} changes degree by {change}, expected {expected}")]
    DegreeMismatch {
        source_label: String,
        target_label: String,
        change: i64,
        expected: i64,
    },
    #[error("no continuation trajectories run from {from} to {to} loci")]
    ForbiddenBlock { from: char, to: char },
    #[error("generator {name} is not in the complex")]
    UnknownGenerator { name: String },
    #[error("chain homotopy identity fails at {source_label} → {target_label}")]
    IdentityFailed { source_label: String, target_label: String },
    #[error("continuation moduli stayed non-transverse after {retries} perturbations of ρ")]
    NonGeneric { retries: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Complex(#[from] ComplexError),
}

/// Which end of a homotopy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum End {
    Start,
    Finish,
}

impl End {
    fn s(self) -> f64 {
        match self {
            End::Start => -1.0,
            End::Finish => 1.0,
        }
    }
}

/// A family of quasi-gradient fields `v(x, s)` with taming functions
/// `f(x, s)` on a fixed closed manifold. Expressions use the manifold's
/// variables followed by `s`.
#[derive(Debug, Clone)]
pub struct Homotopy {
    pub name: String,
    pub manifold: ManifoldModel,
    pub family: Vec<Expr>,
    pub taming: Expr,
    /// `c` in `ρ(λ) = tanh(cλ)`; perturbed when moduli are not transverse.
    pub rate: f64,
    /// `P(x, s)` when the family is the gradient of `P(·, s)`; needed to
    /// interpolate between homotopies.
    pub potential: Option<Expr>,
}

/// `3u² − 2u³` with `u = (s + 1)/2`: exactly 0 at `s = −1` and 1 at `s = 1`,
/// with vanishing derivative at both ends.
pub fn smoothstep(s: &Expr) -> Expr {
    let u = s.add(&Expr::one()).scale(0.5);
    u.powi(2).scale(3.0).sub(&u.powi(3).scale(2.0))
}

impl Homotopy {
    /// The family of gradients of `P(·, s)` for the metric induced on `X`.
    pub fn gradient(name: impl Into<String>, manifold: ManifoldModel, potential: Expr) -> Result<Self, ContinuationError> {
        let n = manifold.ambient_dim;
        let g = potential.gradient(n);
        let family = tangential(&manifold, &g)?;
        Ok(Homotopy {
            name: name.into(),
            manifold,
            family,
            taming: potential.clone(),
            rate: 1.0,
            potential: Some(potential),
        })
    }

    /// The constant homotopy at a field.
    pub fn constant(field: &QuasiGradientField) -> Self {
        Homotopy {
            name: format!("{}~const", field.name),
            manifold: field.manifold.clone(),
            family: field.v.clone(),
            taming: field.f.clone(),
            rate: 1.0,
            potential: Some(field.f.clone()),
        }
    }

    /// Gradients of `f₀ + β(s)(f₁ − f₀)` with the smoothstep `β`.
    pub fn blend(name: impl Into<String>, manifold: ManifoldModel, f0: &Expr, f1: &Expr) -> Result<Self, ContinuationError> {
        let s = Expr::var(manifold.ambient_dim);
        let p = f0.add(&smoothstep(&s).mul(&f1.sub(f0)));
        Self::gradient(name, manifold, p)
    }

    /// Height `cos(θ(s)) z + sin(θ(s)) x` on the unit sphere, with the angle
    /// running from `from` to `to`.
    pub fn rotating_height_s2(from: f64, to: f64) -> Self {
        let m = crate::catalog::sphere(&["x", "y", "z"]);
        let s = Expr::var(3);
        let theta = Expr::constant(from).add(&smoothstep(&s).scale(to - from));
        let p = theta.cos().mul(&Expr::var(2)).add(&theta.sin().mul(&Expr::var(0)));
        Self::gradient(format!("rotating-height({from:.3}→{to:.3})"), m, p).expect("sphere constraint is single")
    }

    fn at_s(&self, e: &Expr, s: f64) -> Expr {
        let n = self.manifold.ambient_dim;
        let mut subs: Vec<Expr> = (0..n).map(Expr::var).collect();
        subs.push(Expr::constant(s));
        e.substitute(&subs)
    }

    /// The field at one end, tamed by the taming function there.
    pub fn endpoint(&self, end: End) -> Result<QuasiGradientField, ContinuationError> {
        let s = end.s();
        let v = self.family.iter().map(|e| self.at_s(e, s)).collect();
        let f = self.at_s(&self.taming, s);
        let name = format!("{}@{}", self.name, if end == End::Start { "0" } else { "1" });
        Ok(QuasiGradientField::new(name, self.manifold.clone(), v, f)?)
    }

    /// Largest `|∂f/∂s|` over sample points of `X × [−1, 1]`.
    fn max_ds_taming(&self, samples: usize, seed: u64) -> f64 {
        let n = self.manifold.ambient_dim;
        let ds = self.taming.diff(n).compile();
        let pts = self.manifold.sample_points(samples, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51);
        pts.iter()
            .map(|x| {
                let mut y = x.clone();
                y.push(rng.gen_range(-1.0..=1.0));
                ds.eval(&y).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Check the endpoints are recovered to `1e-10` on samples, the rate is
    /// positive and the manifold is closed.
    pub fn validate(&self) -> Result<(), ContinuationError> {
        let bad = |reason: String| ContinuationError::InvalidHomotopy { reason };
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(bad(format!("rate {} must be positive", self.rate)));
        }
        if self.manifold.has_boundary() {
            return Err(bad("manifolds with boundary would make the lift a manifold with corners".into()));
        }
        let n = self.manifold.ambient_dim;
        if self.family.len() != n {
            return Err(bad(format!("family has {} components, need {n}", self.family.len())));
        }
        for end in [End::Start, End::Finish] {
            let f = self.endpoint(end)?;
            for x in self.manifold.sample_points(32, 7) {
                let mut y = x.clone();
                y.push(end.s());
                let direct: Vec<f64> = self.family.iter().map(|e| e.eval(&y)).collect();
                let at = f.eval(&x);
                let err = direct.iter().zip(at.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if err > 1e-10 {
                    return Err(bad(format!("endpoint mismatch {err:e}")));
                }
            }
        }
        Ok(())
    }
}

/// The lifted field `ṽ` on `X × [−1, 1]`, tamed by `f(x, s) − K s` with `K`
/// above the largest sampled `∂f/∂s`.
pub fn lift_field(h: &Homotopy) -> Result<QuasiGradientField, ContinuationError> {
    h.validate()?;
    let m = &h.manifold;
    let n = m.ambient_dim;
    let s = Expr::var(n);
    let mut vars = m.vars.clone();
    vars.push("s".into());
    let mut bbox = m.bbox.clone();
    bbox.push((-1.25, 1.25));
    let lifted = ManifoldModel::new_unchecked(
        vars,
        m.constraints.clone(),
        Some(s.powi(2).sub(&Expr::one())),
        bbox,
    );
    let mut v = h.family.clone();
    v.push(Expr::one().sub(&s.powi(2)).scale(-h.rate));
    let k = 2.0 * h.max_ds_taming(2000, 11) + 0.5;
    let f = h.taming.sub(&s.scale(k));
    Ok(QuasiGradientField::new(format!("{}~lift", h.name), lifted, v, f)?)
}

/// Endpoint contexts, the lifted context and the matching of loci.
#[derive(Debug, Clone)]
pub struct ContinuationContext {
    pub homotopy: Homotopy,
    pub start: FieldContext,
    pub finish: FieldContext,
    pub lifted: FieldContext,
    /// `bottom[i]`: lifted locus over start locus `i` at `s = −1`.
    pub bottom: Vec<usize>,
    /// `top[j]`: lifted locus over finish locus `j` at `s = +1`.
    pub top: Vec<usize>,
}

fn match_loci(
    lifted: &[StationaryManifold],
    ends: &[StationaryManifold],
    s: f64,
    n: usize,
) -> Result<Vec<usize>, ContinuationError> {
    ends.iter()
        .map(|b| {
            let hits: Vec<usize> = (0..lifted.len())
                .filter(|&k| {
                    let p = &lifted[k].representative_points[0];
                    (p[n] - s).abs() < 1e-6 && b.distance(&p[..n]) < 1e-4 && lifted[k].dim == b.dim
                })
                .collect();
            match hits.as_slice() {
                [k] => Ok(*k),
                _ => Err(ContinuationError::LociMismatch {
                    reason: format!("{} has {} lifts at s = {s}", b.label, hits.len()),
                }),
            }
        })
        .collect()
}

impl ContinuationContext {
    /// Detect loci of both ends and of the lift with grid density
    /// `density`, and match them up.
    pub fn new(h: Homotopy, density: f64, seed: u64) -> Result<Self, ContinuationError> {
        let lifted_field = lift_field(&h)?;
        let f0 = h.endpoint(End::Start)?;
        let f1 = h.endpoint(End::Finish)?;
        let l0 = find_stationary_loci(&f0, density, seed)?;
        let l1 = find_stationary_loci(&f1, density, seed)?;
        let ll = find_stationary_loci(&lifted_field, density, seed)?;
        let n = h.manifold.ambient_dim;
        if ll.len() != l0.len() + l1.len() {
            return Err(ContinuationError::LociMismatch {
                reason: format!("lift has {} loci, ends have {} and {}", ll.len(), l0.len(), l1.len()),
            });
        }
        let bottom = match_loci(&ll, &l0, -1.0, n)?;
        let top = match_loci(&ll, &l1, 1.0, n)?;
        for (i, &k) in bottom.iter().enumerate() {
            if ll[k].kind != BoundaryKind::BoundaryUnstable || ll[k].index != l0[i].index + 1 {
                return Err(ContinuationError::LociMismatch {
                    reason: format!("lift of {} is {:?} with index {}", l0[i].label, ll[k].kind, ll[k].index),
                });
            }
        }
        for (j, &k) in top.iter().enumerate() {
            if ll[k].kind != BoundaryKind::BoundaryStable || ll[k].index != l1[j].index {
                return Err(ContinuationError::LociMismatch {
                    reason: format!("lift of {} is {:?} with index {}", l1[j].label, ll[k].kind, ll[k].index),
                });
            }
        }
        Ok(ContinuationContext {
            homotopy: h,
            start: FieldContext::new(f0, l0),
            finish: FieldContext::new(f1, l1),
            lifted: FieldContext::new(lifted_field, ll),
            bottom,
            top,
        })
    }

    /// The same endpoint and lifted loci for a different homotopy with the
    /// same ends (only the lifted field changes).
    pub fn with_homotopy(&self, h: Homotopy) -> Result<Self, ContinuationError> {
        let lifted_field = lift_field(&h)?;
        Ok(ContinuationContext {
            homotopy: h,
            lifted: FieldContext::new(lifted_field, self.lifted.loci.clone()),
            ..self.clone()
        })
    }
}

/// Sample `M̆_λ(B₀, B₁)` in the lift.
pub fn continuation_moduli(
    cc: &ContinuationContext,
    b0: usize,
    b1: usize,
    opts: &ModuliOptions,
) -> Result<ModuliSpace, ContinuationError> {
    Ok(build_moduli(&cc.lifted, cc.bottom[b0], cc.top[b1], opts)?)
}

/// Degree change of a continuation block entry: `+1` for the
/// boundary-obstructed `F^s_u`, `0` otherwise.
fn f_change(from: BoundaryKind, to: BoundaryKind) -> Option<i64> {
    use BoundaryKind::*;
    match (from, to) {
        (BoundaryStable, BoundaryUnstable) => Some(1),
        (Interior, BoundaryUnstable) | (BoundaryStable, Interior) => None,
        _ => Some(0),
    }
}

fn component(c: &CheckComplex, k: BoundaryKind) -> Vec<usize> {
    (0..c.generators.len()).filter(|&i| c.generators[i].kind == k).collect()
}

fn find_gen(c: &CheckComplex, r: &GenRef) -> Result<usize, ContinuationError> {
    c.generators
        .iter()
        .position(|g| g.label == r.locus && g.cell == r.cell)
        .ok_or_else(|| ContinuationError::UnknownGenerator {
            name: format!("{}/{:?}", r.locus, r.cell),
        })
}

/// `F̌ : Č₀ → Č₁` from the block counts `F^θ_θ′` (entries from generators of
/// `c0` to generators of `c1`):
///
/// ```text
/// F̌ = | F^o_o   F^u_o ∂^s_u + ∂^u_o F^s_u               |
///     | F^o_s   F^s_s + F^u_s ∂^s_u + ∂^u_s F^s_u       |
/// ```
pub fn assemble_f(c0: &CheckComplex, c1: &CheckComplex, entries: &[Entry]) -> Result<F2Matrix, ContinuationError> {
    assemble_blocks(c0, c1, entries, 0)
}

/// The block pattern of [`assemble_f`] for an operator whose blocks change
/// degree by `shift`, except `s → u` which changes it by `shift + 1`.
pub fn assemble_blocks(
    c0: &CheckComplex,
    c1: &CheckComplex,
    entries: &[Entry],
    shift: i64,
) -> Result<F2Matrix, ContinuationError> {
    let mut full = F2Matrix::zeros(c1.generators.len(), c0.generators.len());
    for e in entries {
        if e.coefficient & 1 == 0 {
            continue;
        }
        let (x, y) = (find_gen(c0, &e.from)?, find_gen(c1, &e.to)?);
        let (gx, gy) = (&c0.generators[x], &c1.generators[y]);
        let Some(expected) = f_change(gx.kind, gy.kind) else {
            return Err(ContinuationError::ForbiddenBlock {
                from: gx.kind.tag(),
                to: gy.kind.tag(),
            });
        };
        let expected = expected + shift;
        let change = gy.degree as i64 - gx.degree as i64;
        if change != expected {
            return Err(ContinuationError::DegreeMismatch {
                source_label: gx.name(),
                target_label: gy.name(),
                change,
                expected,
            });
        }
        full.flip(y, x);
    }
    use BoundaryKind::*;
    let (o0, s0, u0) = (component(c0, Interior), component(c0, BoundaryStable), component(c0, BoundaryUnstable));
    let (o1, s1, u1) = (component(c1, Interior), component(c1, BoundaryStable), component(c1, BoundaryUnstable));
    let fb = |from: &[usize], to: &[usize]| full.select(to, from);
    let d0 = |from: &[usize], to: &[usize]| c0.d_full.select(to, from);
    let d1 = |from: &[usize], to: &[usize]| c1.d_full.select(to, from);
    let su0 = d0(&s0, &u0);
    let f_su = fb(&s0, &u1);
    let oo = fb(&o0, &o1);
    let os = fb(&o0, &s1);
    let so = fb(&u0, &o1).mul(&su0).add(&d1(&u1, &o1).mul(&f_su));
    let ss = fb(&s0, &s1)
        .add(&fb(&u0, &s1).mul(&su0))
        .add(&d1(&u1, &s1).mul(&f_su));
    let (no0, no1) = (o0.len(), o1.len());
    let mut out = F2Matrix::zeros(no1 + s1.len(), no0 + s0.len());
    for (m, r0, c0_) in [(&oo, 0, 0), (&os, no1, 0), (&so, 0, no0), (&ss, no1, no0)] {
        for (i, j) in m.nonzeros() {
            out.set(r0 + i, c0_ + j, true);
        }
    }
    Ok(out)
}

/// A continuation map with the complexes it runs between.
#[derive(Debug, Clone, Serialize)]
pub struct ContinuationMap {
    pub source: CheckComplex,
    pub target: CheckComplex,
    pub f_check: F2Matrix,
    pub entries: Vec<Entry>,
    pub records: Vec<CountRecord>,
    /// Rate `c` of the compactification actually used.
    pub rate: f64,
}

/// Result of checking `∂̌₁ F̌ = F̌ ∂̌₀`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChainMapCheck {
    pub holds: bool,
    /// First failing `(source generator, target generator)`, lowest source
    /// first.
    pub offending: Option<(String, String)>,
}

pub fn verify_chain_map(f: &F2Matrix, c0: &CheckComplex, c1: &CheckComplex) -> ChainMapCheck {
    let diff = c1.d_check.mul(f).add(&f.mul(&c0.d_check));
    let g0 = c0.check_generators();
    let g1 = c1.check_generators();
    let offending = diff
        .nonzeros()
        .into_iter()
        .min_by_key(|&(i, j)| (j, i))
        .map(|(i, j)| (g0[j].name(), g1[i].name()));
    ChainMapCheck {
        holds: offending.is_none(),
        offending,
    }
}

/// Every nonzero entry of `F̌` preserves degree.
pub fn f_degrees_consistent(f: &F2Matrix, c0: &CheckComplex, c1: &CheckComplex) -> bool {
    let g0 = c0.check_generators();
    let g1 = c1.check_generators();
    f.nonzeros().iter().all(|&(i, j)| g0[j].degree == g1[i].degree)
}

fn cell_of(locus: usize, cell: TargetCell) -> Cell {
    match cell {
        TargetCell::Zero => Cell::point(locus),
        TargetCell::Two => Cell {
            locus,
            kind: CellKind::Fundamental,
        },
    }
}

fn gen_ref(g: &Generator) -> GenRef {
    GenRef {
        locus: g.label.clone(),
        cell: g.cell,
    }
}

/// Rates tried in turn when a count is not transverse.
const RATE_RETRIES: [f64; 4] = [1.0, 0.8, 1.25, 0.65];

/// Count the continuation entries in the lift and assemble `F̌`.
///
/// Degree counts that disagree between random regular values, and counts
/// the flow module cannot resolve, are retried with a perturbed rate; after
/// three retries the map is given up on.
pub fn build_f(cc: &ContinuationContext, opts: &CountOptions) -> Result<ContinuationMap, ContinuationError> {
    let (c0, _) = assemble_numeric(&cc.start, opts)?;
    let (c1, _) = assemble_numeric(&cc.finish, opts)?;
    let mut last_err = None;
    for (attempt, &factor) in RATE_RETRIES.iter().enumerate() {
        let mut h = cc.homotopy.clone();
        h.rate = cc.homotopy.rate * factor;
        let ctx = if attempt == 0 { cc.clone() } else { cc.with_homotopy(h)? };
        match count_f(&ctx, &c0, &c1, opts) {
            Ok((entries, records)) if records.iter().all(|r| r.result.consistent) => {
                let f_check = assemble_f(&c0, &c1, &entries)?;
                return Ok(ContinuationMap {
                    source: c0,
                    target: c1,
                    f_check,
                    entries,
                    records,
                    rate: ctx.homotopy.rate,
                });
            }
            Ok(_) => last_err = None,
            Err(e @ ContinuationError::Flow(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or(ContinuationError::NonGeneric {
        retries: RATE_RETRIES.len() - 1,
    }))
}

fn count_f(
    cc: &ContinuationContext,
    c0: &CheckComplex,
    c1: &CheckComplex,
    opts: &CountOptions,
) -> Result<(Vec<Entry>, Vec<CountRecord>), ContinuationError> {
    let mut entries = Vec::new();
    let mut records = Vec::new();
    for x in &c0.generators {
        for y in &c1.generators {
            let Some(change) = f_change(x.kind, y.kind) else {
                continue;
            };
            if y.degree as i64 - x.degree as i64 != change {
                continue;
            }
            let src = cell_of(cc.bottom[x.locus], x.cell);
            let tgt = cell_of(cc.top[y.locus], y.cell);
            let result = count_coefficient(&cc.lifted, src, tgt, opts)?;
            if result.coefficient {
                entries.push(Entry {
                    from: gen_ref(x),
                    to: gen_ref(y),
                    coefficient: 1,
                });
            }
            records.push(CountRecord {
                from: gen_ref(x),
                to: gen_ref(y),
                boundary_obstructed: change == 1,
                index_drop: x.index as i64 - y.index as i64,
                result,
            });
        }
    }
    Ok((entries, records))
}

/// Rank of the map induced on homology in each degree, and whether it is an
/// isomorphism.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InducedMap {
    pub source_betti: Vec<usize>,
    pub target_betti: Vec<usize>,
    pub ranks: Vec<usize>,
    pub isomorphism: bool,
}

/// Cycle vectors spanning homology in degree `k`, in basis order of `Č`.
fn homology_basis(c: &CheckComplex, k: usize) -> (Vec<Vec<bool>>, Vec<Vec<bool>>) {
    let g = c.check_generators();
    let n = g.len();
    let here: Vec<usize> = (0..n).filter(|&i| g[i].degree == k).collect();
    let below: Vec<usize> = (0..n).filter(|&i| g[i].degree + 1 == k).collect();
    let above: Vec<usize> = (0..n).filter(|&i| g[i].degree == k + 1).collect();
    let embed = |v: &[bool], idx: &[usize]| {
        let mut out = vec![false; n];
        for (a, &i) in idx.iter().enumerate() {
            out[i] = v[a];
        }
        out
    };
    let cycles: Vec<Vec<bool>> = if below.is_empty() {
        (0..here.len()).map(|i| (0..here.len()).map(|j| i == j).collect()).collect()
    } else {
        c.d_check.select(&below, &here).kernel()
    };
    let cycles: Vec<Vec<bool>> = cycles.iter().map(|v| embed(v, &here)).collect();
    let bounds: Vec<Vec<bool>> = (0..above.len()).map(|j| c.d_check.column(above[j])).collect();
    let keep = independent_modulo(&bounds, &cycles);
    (keep.into_iter().map(|i| cycles[i].clone()).collect(), bounds)
}

pub fn induced_on_homology(f: &F2Matrix, c0: &CheckComplex, c1: &CheckComplex) -> InducedMap {
    let source_betti = f2_homology(c0).betti;
    let target_betti = f2_homology(c1).betti;
    let top = source_betti.len().max(target_betti.len());
    let mut ranks = vec![0; top];
    for (k, r) in ranks.iter_mut().enumerate() {
        let (basis0, _) = homology_basis(c0, k);
        let (_, bounds1) = homology_basis(c1, k);
        let images: Vec<Vec<bool>> = basis0.iter().map(|v| f.mul_vec(v)).collect();
        *r = independent_modulo(&bounds1, &images).len();
    }
    let b = |v: &[usize], k: usize| v.get(k).copied().unwrap_or(0);
    let isomorphism = (0..top).all(|k| b(&source_betti, k) == b(&target_betti, k) && ranks[k] == b(&source_betti, k));
    InducedMap {
        source_betti,
        target_betti,
        ranks,
        isomorphism,
    }
}

/// Generator names of `Č`, in basis order.
pub fn basis_names(c: &CheckComplex) -> Vec<String> {
    c.check_generators().iter().map(|g| g.name()).collect()
}

/// `F̌` as a map of generator names, for reports.
pub fn f_table(m: &ContinuationMap) -> BTreeMap<String, Vec<String>> {
    let n0 = basis_names(&m.source);
    let n1 = basis_names(&m.target);
    let mut out: BTreeMap<String, Vec<String>> = n0.iter().map(|n| (n.clone(), vec![])).collect();
    for (i, j) in m.f_check.nonzeros() {
        out.get_mut(&n0[j]).expect("source name").push(n1[i].clone());
    }
    out
}

/// Tuning for [`build_psi`].
#[derive(Debug, Clone, Serialize)]
pub struct PsiOptions {
    pub count: CountOptions,
    pub density: f64,
    pub seed: u64,
    /// Grid on the interpolation parameter `μ ∈ [0, 1]`.
    pub mu_steps: usize,
    /// Bisection steps locating a jump of `F̌(μ)`.
    pub bisection_steps: usize,
    /// Steepness of the reparametrizations in the concatenated homotopy;
    /// larger means a longer neck near `v₁`.
    pub neck: f64,
    /// Family members sampled when locating the connecting trajectory at a
    /// jump.
    pub approach_samples: usize,
    /// A pair is involved in a jump when its closest approach there is below
    /// this.
    pub approach_tol: f64,
}

impl Default for PsiOptions {
    fn default() -> Self {
        PsiOptions {
            count: CountOptions::default(),
            density: 3.0,
            seed: 1,
            mu_steps: 8,
            bisection_steps: 24,
            neck: 30.0,
            approach_samples: 48,
            approach_tol: 2e-2,
        }
    }
}

/// A value of `μ` where `F̌(μ)` jumps, with the generators joined there by a
/// trajectory of index difference −1.
#[derive(Debug, Clone, Serialize)]
pub struct PsiEvent {
    pub mu: f64,
    pub pairs: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PsiReport {
    pub f01: ContinuationMap,
    pub f12: ContinuationMap,
    pub f02: ContinuationMap,
    /// `F̌` of the concatenated homotopy (the `μ = 1` end).
    pub f_concat: F2Matrix,
    /// Whether the concatenation reproduces `F̌₁₂ F̌₀₁`.
    pub gluing_holds: bool,
    pub events: Vec<PsiEvent>,
    /// `Ψ : Č₀ → Č₂`, degree +1.
    pub psi: F2Matrix,
    /// `∂Ψ + Ψ∂`.
    pub lhs: F2Matrix,
    /// `F̌₀₂ + F̌₁₂ F̌₀₁`.
    pub rhs: F2Matrix,
    pub holds: bool,
}

/// `−1 + 2 tanh(k(s+1))/tanh(2k)`: exact at `±1`, close to 1 for `s ≥ 0`.
fn early(s: &Expr, k: f64) -> Expr {
    s.add(&Expr::one()).scale(k).tanh().scale(2.0 / (2.0 * k).tanh()).sub(&Expr::one())
}

/// `1 − 2 tanh(k(1−s))/tanh(2k)`: exact at `±1`, close to −1 for `s ≤ 0`.
fn late(s: &Expr, k: f64) -> Expr {
    Expr::one().sub(&Expr::one().sub(s).scale(k).tanh().scale(2.0 / (2.0 * k).tanh()))
}

fn potential_of(h: &Homotopy) -> Result<&Expr, ContinuationError> {
    h.potential.as_ref().ok_or_else(|| ContinuationError::InvalidHomotopy {
        reason: format!("{} is not a gradient family", h.name),
    })
}

fn reparam(h: &Homotopy, p: &Expr, s: Expr) -> Expr {
    let n = h.manifold.ambient_dim;
    let mut subs: Vec<Expr> = (0..n).map(Expr::var).collect();
    subs.push(s);
    p.substitute(&subs)
}

/// Run `h01` then `h12` with a neck of steepness `k` between them:
/// `P₀₁(x, φ₁(s)) + P₁₂(x, φ₂(s)) − f₁(x)`.
pub fn concatenate(h01: &Homotopy, h12: &Homotopy, k: f64) -> Result<Homotopy, ContinuationError> {
    let (p01, p12) = (potential_of(h01)?, potential_of(h12)?);
    let n = h01.manifold.ambient_dim;
    let s = Expr::var(n);
    let f1 = reparam(h01, p01, Expr::one());
    let p = reparam(h01, p01, early(&s, k))
        .add(&reparam(h12, p12, late(&s, k)))
        .sub(&f1);
    Homotopy::gradient(format!("{}#{}", h01.name, h12.name), h01.manifold.clone(), p)
}

fn interpolate(h02: &Homotopy, h012: &Homotopy, mu: f64) -> Result<Homotopy, ContinuationError> {
    let p = potential_of(h02)?.scale(1.0 - mu).add(&potential_of(h012)?.scale(mu));
    let mut h = Homotopy::gradient(format!("{}~{mu:.4}", h02.name), h02.manifold.clone(), p)?;
    h.rate = h02.rate;
    Ok(h)
}

fn same_loci(a: &FieldContext, b: &FieldContext) -> bool {
    a.loci.len() == b.loci.len()
        && a.loci.iter().zip(&b.loci).all(|(x, y)| {
            x.label == y.label && x.dim == y.dim && y.distance(&x.representative_points[0]) < 1e-6
        })
}

/// The chain homotopy `Ψ` with `∂Ψ + Ψ∂ = F̌₀₂ + F̌₁₂ F̌₀₁`.
///
/// The homotopies `h02` and `h01 # h12` are joined by the gradient family
/// `P_μ = (1 − μ) P₀₂ + μ P₀₁₂`. Along it `F̌(μ)` only changes where a lifted
/// trajectory of index difference −1 appears; each such event is located by
/// bisection, its generator pairs are found by closest approach, and `Ψ`
/// collects them mod 2. The identity is then checked against the separately
/// computed `F̌₀₁`, `F̌₁₂`, `F̌₀₂`.
pub fn build_psi(h01: &Homotopy, h12: &Homotopy, h02: &Homotopy, opts: &PsiOptions) -> Result<PsiReport, ContinuationError> {
    let cc01 = ContinuationContext::new(h01.clone(), opts.density, opts.seed)?;
    let cc12 = ContinuationContext::new(h12.clone(), opts.density, opts.seed)?;
    let cc02 = ContinuationContext::new(h02.clone(), opts.density, opts.seed)?;
    let mismatch = |what: &str| ContinuationError::LociMismatch {
        reason: format!("{what} do not agree between the three homotopies"),
    };
    if !same_loci(&cc01.start, &cc02.start) {
        return Err(mismatch("start loci"));
    }
    if !same_loci(&cc01.finish, &cc12.start) {
        return Err(mismatch("middle loci"));
    }
    if !same_loci(&cc12.finish, &cc02.finish) {
        return Err(mismatch("finish loci"));
    }
    let f01 = build_f(&cc01, &opts.count)?;
    let f12 = build_f(&cc12, &opts.count)?;
    let f02 = build_f(&cc02, &opts.count)?;
    let (c0, c2) = (f02.source.clone(), f02.target.clone());

    let h012 = concatenate(h01, h12, opts.neck)?;
    let f_at = |mu: f64| -> Result<F2Matrix, ContinuationError> {
        let h = interpolate(h02, &h012, mu)?;
        let cc = cc02.with_homotopy(h)?;
        let (entries, _) = count_f(&cc, &c0, &c2, &opts.count)?;
        assemble_f(&c0, &c2, &entries)
    };
    let steps = opts.mu_steps.max(1);
    let mus: Vec<f64> = (0..=steps).map(|i| i as f64 / steps as f64).collect();
    let fs: Vec<F2Matrix> = mus.iter().map(|&m| f_at(m)).collect::<Result<_, _>>()?;
    let f_concat = fs[steps].clone();
    let gluing_holds = f_concat == f12.f_check.mul(&f01.f_check);

    let g0 = c0.check_generators();
    let g2 = c2.check_generators();
    let mut psi = F2Matrix::zeros(g2.len(), g0.len());
    let mut events = Vec::new();
    for k in 0..steps {
        if fs[k] == fs[k + 1] {
            continue;
        }
        let (mut lo, mut hi) = (mus[k], mus[k + 1]);
        let flo = fs[k].clone();
        for _ in 0..opts.bisection_steps {
            let mid = 0.5 * (lo + hi);
            if f_at(mid)? == flo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mu = 0.5 * (lo + hi);
        let cc = cc02.with_homotopy(interpolate(h02, &h012, mu)?)?;
        let mut pairs = Vec::new();
        for (j, x) in g0.iter().enumerate() {
            for (i, y) in g2.iter().enumerate() {
                if y.degree != x.degree + 1 {
                    continue;
                }
                let src = cell_of(cc.bottom[x.locus], x.cell);
                let d = crate::flow::moduli::closest_approach(
                    &cc.lifted,
                    src,
                    cc.top[y.locus],
                    &opts.count,
                    opts.approach_samples,
                )?;
                if d < opts.approach_tol {
                    psi.flip(i, j);
                    pairs.push((x.name(), y.name()));
                }
            }
        }
        events.push(PsiEvent { mu, pairs });
    }
    let lhs = c2.d_check.mul(&psi).add(&psi.mul(&c0.d_check));
    let rhs = f02.f_check.add(&f12.f_check.mul(&f01.f_check));
    let holds = lhs == rhs;
    Ok(PsiReport {
        f01,
        f12,
        f02,
        f_concat,
        gluing_holds,
        events,
        psi,
        lhs,
        rhs,
        holds,
    })
}

/// Every nonzero entry of `Ψ` raises degree by one.
pub fn psi_degrees_consistent(r: &PsiReport) -> bool {
    let g0 = r.f02.source.check_generators();
    let g2 = r.f02.target.check_generators();
    r.psi.nonzeros().iter().all(|&(i, j)| g2[i].degree == g0[j].degree + 1)
}

/// Turn a failed identity into an error naming the first offending pair.
pub fn require_identity(r: &PsiReport) -> Result<(), ContinuationError> {
    let diff = r.lhs.add(&r.rhs);
    match diff.nonzeros().into_iter().min_by_key(|&(i, j)| (j, i)) {
        None => Ok(()),
        Some((i, j)) => Err(ContinuationError::IdentityFailed {
            source_label: r.f02.source.check_generators()[j].name(),
            target_label: r.f02.target.check_generators()[i].name(),
        }),
    }
}

/// The triple used for the chain homotopy check: rotate the height on `S²`
/// forward, rotate it back, and compare with the constant homotopy.
pub fn catalog_triple(angle: f64) -> (Homotopy, Homotopy, Homotopy) {
    let h01 = Homotopy::rotating_height_s2(0.0, angle);
    let h12 = Homotopy::rotating_height_s2(angle, 0.0);
    let h02 = Homotopy::rotating_height_s2(0.0, 0.0);
    (h01, h12, h02)
}
