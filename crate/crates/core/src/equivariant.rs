//! The Pin(2) pipeline on the unit quaternions `S(H)`.
//!
//! `S¹ = {e^{iθ}}` and `j` act on `H` by left multiplication. The circle acts
//! freely on `S(H)` with quotient the 2-sphere (Hopf map `q ↦ q̄ i q`), and `j`
//! descends to the antipodal map. The Pin(2) theory is the homology of the
//! `j`-invariant part of the check complex downstairs, a module over
//! `F[Q, V]/(Q³)` with `Q` of degree −1 and `V` of degree −4, both counted by
//! cutting moduli spaces down with sections of the real line bundle `F^σ`
//! and the quaternionic line bundle `E^σ`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::complex::{assemble_numeric, graded_homology, CheckComplex, ComplexError, Entry, GenRef, Homology};
use crate::continuation::{assemble_blocks, ContinuationError};
use crate::expr::{CompiledMap, Expr};
use crate::f2::F2Matrix;
use crate::fields::{find_stationary_loci, BoundaryKind, EquivariantField, FieldError, QuasiGradientField};
use crate::flow::moduli::{build_moduli, cut_down_moduli, CountOptions, FieldContext, ModuliOptions};
use crate::flow::FlowError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquivariantError {
    #[error("the circle action is not free: {point:?} has a nontrivial stabilizer")]
    NonFreeAction { point: Vec<f64> },
    #[error("unsupported action: {reason}")]
    UnsupportedAction { reason: String },
    #[error("field is not equivariant (defect {defect:e})")]
    NotEquivariant { defect: f64 },
    #[error("pushed-forward field differs from the quotient field by {residue:e}")]
    QuotientMismatch { residue: f64 },
    #[error("j is not a chain involution: {reason}")]
    JNotChainMap { reason: String },
    #[error("section {name} is not odd under j (defect {defect:e})")]
    SectionNotOdd { name: String, defect: f64 },
    #[error("{operator} is not a chain map at {source_label} → {target_label}")]
    NotChainMap {
        operator: String,
        source_label: String,
        target_label: String,
    },
    #[error("{operator} does not commute with j at {generator}")]
    OperatorNotEquivariant { operator: String, generator: String },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error(transparent)]
    Continuation(#[from] ContinuationError),
}

const QUAT_VARS: [&str; 4] = ["a", "b", "c", "d"];

/// Left multiplication by `i` on `q = a + bi + cj + dk`.
pub fn left_i() -> DMatrix<f64> {
    DMatrix::from_row_slice(4, 4, &[
        0.0, -1.0, 0.0, 0.0, //
        1.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, -1.0, //
        0.0, 0.0, 1.0, 0.0,
    ])
}

/// Left multiplication by `j`.
pub fn left_j() -> DMatrix<f64> {
    DMatrix::from_row_slice(4, 4, &[
        0.0, 0.0, -1.0, 0.0, //
        0.0, 0.0, 0.0, 1.0, //
        1.0, 0.0, 0.0, 0.0, //
        0.0, -1.0, 0.0, 0.0,
    ])
}

/// `q̄ i q` in the `(i, j, k)` coordinates: invariant under `q ↦ e^{iθ} q`,
/// and `q ↦ jq` sends it to its negative.
pub fn hopf_map() -> Vec<Expr> {
    let p = |s: &str| Expr::parse(s, &QUAT_VARS).expect("hopf component parses");
    vec![
        p("a^2 + b^2 - c^2 - d^2"),
        p("2*(b*c - a*d)"),
        p("2*(b*d + a*c)"),
    ]
}

/// The unit quaternions with the gradient of `F ∘ h`, `h` the Hopf map and
/// `F` a function of `(x, y, z)`.
pub fn hopf_lift(name: &str, potential: &Expr) -> Result<EquivariantField, EquivariantError> {
    let m = crate::catalog::sphere(&QUAT_VARS);
    let lifted = potential.substitute(&hopf_map());
    let base = QuasiGradientField::gradient(name, m, lifted)?;
    Ok(EquivariantField {
        base,
        i_mat: left_i(),
        j_mat: left_j(),
    })
}

/// The quotient `S(H)/S¹ = S²` with its induced field and residual
/// involution.
#[derive(Debug, Clone)]
pub struct QuotientModel {
    pub upstairs: EquivariantField,
    /// `dh(v)`, which for `v = ∇(F ∘ h)` is `4 ∇F` on the unit 2-sphere.
    pub field: QuasiGradientField,
    /// The involution induced by `j`, as a linear map of `R³`.
    pub j: DMatrix<f64>,
    /// Largest `|dh(v(q)) − v^σ(h(q))|` over the samples.
    pub residue: f64,
    /// Largest equivariance defect of the upstairs field.
    pub equivariance_defect: f64,
}

impl QuotientModel {
    pub fn apply_j(&self, p: &[f64]) -> Vec<f64> {
        (&self.j * DVector::from_column_slice(p)).as_slice().to_vec()
    }
}

/// Build the quotient of `S(H)` by the circle for a field lifted from a
/// potential `F` on the base, and certify on samples that the pushforward of
/// the upstairs field is the quotient field.
pub fn quotient_model(
    e: &EquivariantField,
    potential: &Expr,
    samples: usize,
    seed: u64,
) -> Result<QuotientModel, EquivariantError> {
    let base = &e.base;
    if base.dim() != 4 {
        return Err(EquivariantError::UnsupportedAction {
            reason: format!("quotients are taken of S(H) in R^4, not R^{}", base.dim()),
        });
    }
    let off = (&e.i_mat - left_i()).abs().max() + (&e.j_mat - left_j()).abs().max();
    if off > 1e-12 {
        return Err(EquivariantError::UnsupportedAction {
            reason: "i and j must act by left quaternion multiplication".into(),
        });
    }
    // Left multiplication by unit quaternions fixes only the origin.
    let origin = vec![0.0; 4];
    let on_zero_set = base.manifold.constraint_values(&origin).iter().all(|g| g.abs() < 1e-9);
    if on_zero_set && base.manifold.contains(&origin) && base.manifold.in_bbox(&origin) {
        return Err(EquivariantError::NonFreeAction { point: origin });
    }
    let pts = base.manifold.sample_points(samples, seed);
    let thetas = [0.3, 1.1, 2.0, 4.4];
    let equivariance_defect = e.equivariance_defect(&pts, &thetas);
    if equivariance_defect > 1e-8 {
        return Err(EquivariantError::NotEquivariant {
            defect: equivariance_defect,
        });
    }
    let s2 = crate::catalog::sphere(&["x", "y", "z"]);
    let field = QuasiGradientField::gradient(format!("{}/S1", base.name), s2, potential.scale(4.0))?;
    let h = CompiledMap::new(hopf_map(), 4);
    let mut residue = 0.0f64;
    for q in &pts {
        let down = h.jacobian(q) * base.eval(q);
        let p = h.eval(q);
        residue = residue.max((down - field.eval(&p)).norm());
    }
    if residue > 1e-8 {
        return Err(EquivariantError::QuotientMismatch { residue });
    }
    Ok(QuotientModel {
        upstairs: e.clone(),
        field,
        j: -DMatrix::identity(3, 3),
        residue,
        equivariance_defect,
    })
}

/// The quotient model of `S(H)` for the catalog quadratic form on the base.
pub fn s_h_example() -> Result<QuotientModel, EquivariantError> {
    let [a, b, c] = crate::catalog::HOPF_WEIGHTS;
    let f = Expr::parse(&format!("{a}*x^2 + {b}*y^2 + {c}*z^2"), &["x", "y", "z"]).expect("parses");
    let e = hopf_lift("s-h", &f)?;
    quotient_model(&e, &f, 400, 3)
}

/// `F₂` matrix on the check basis of `c` induced by a map of the ambient
/// space that permutes the stationary loci. Each generator goes to the same
/// cell on the image locus; over `F₂` orientation does not matter.
pub fn induced_involution(
    ctx: &FieldContext,
    c: &CheckComplex,
    map: &dyn Fn(&[f64]) -> Vec<f64>,
) -> Result<F2Matrix, EquivariantError> {
    let gens = c.check_generators();
    let mut j = F2Matrix::zeros(gens.len(), gens.len());
    for (col, g) in gens.iter().enumerate() {
        let b = &ctx.loci[g.locus];
        let img = map(&b.representative_points[0]);
        let Some(target) = ctx.loci.iter().position(|l| l.dim == b.dim && l.distance(&img) < 1e-6) else {
            return Err(EquivariantError::JNotChainMap {
                reason: format!("image of {} is not a stationary locus", b.label),
            });
        };
        let row = gens
            .iter()
            .position(|h| h.locus == target && h.cell == g.cell)
            .ok_or_else(|| EquivariantError::JNotChainMap {
                reason: format!("{} maps outside the check basis", g.name()),
            })?;
        j.set(row, col, true);
    }
    Ok(j)
}

/// The subcomplex of `j`-invariant chains.
#[derive(Debug, Clone, Serialize)]
pub struct InvariantComplex {
    pub base: CheckComplex,
    /// `j` on the check basis of `base`.
    pub j_action: F2Matrix,
    /// Basis of `ker(j + 1)`, as vectors in the check basis, each of one
    /// degree.
    pub basis: Vec<Vec<bool>>,
    pub degrees: Vec<usize>,
    /// Basis vectors written as sums of generator names.
    pub names: Vec<String>,
    /// `∂̌` restricted to the invariant basis.
    pub d_inv: F2Matrix,
}

impl InvariantComplex {
    pub fn homology(&self) -> Homology {
        graded_homology(&self.d_inv, &self.degrees, &self.names)
    }

    fn basis_matrix(&self) -> F2Matrix {
        F2Matrix::from_columns(self.j_action.rows(), &self.basis)
    }

    /// An operator on the check basis written in the invariant basis, if it
    /// preserves the invariant subspace.
    fn restrict(&self, op: &F2Matrix) -> Option<F2Matrix> {
        let b = self.basis_matrix();
        let cols: Option<Vec<Vec<bool>>> = self.basis.iter().map(|v| b.solve(&op.mul_vec(v))).collect();
        Some(F2Matrix::from_columns(self.basis.len(), &cols?))
    }
}

/// `ker(j + 1)` with its restricted differential. `j` must be an involution
/// that preserves degrees and commutes with `∂̌`.
pub fn invariant_subcomplex(c: &CheckComplex, j: &F2Matrix) -> Result<InvariantComplex, EquivariantError> {
    let gens = c.check_generators();
    let n = gens.len();
    let bad = |reason: String| EquivariantError::JNotChainMap { reason };
    if j.rows() != n || j.cols() != n {
        return Err(bad(format!("j is {}x{}, the complex has {n} generators", j.rows(), j.cols())));
    }
    if j.mul(j) != F2Matrix::identity(n) {
        return Err(bad("j² ≠ 1".into()));
    }
    if let Some(&(i, k)) = j.nonzeros().iter().find(|&&(i, k)| gens[i].degree != gens[k].degree) {
        return Err(bad(format!("{} ↦ {} changes degree", gens[k].name(), gens[i].name())));
    }
    let comm = c.d_check.mul(j).add(&j.mul(&c.d_check));
    if let Some((_, k)) = comm.nonzeros().into_iter().min_by_key(|&(i, k)| (k, i)) {
        return Err(bad(format!("∂̌j ≠ j∂̌ on {}", gens[k].name())));
    }
    let fixed = j.add(&F2Matrix::identity(n));
    let top = gens.iter().map(|g| g.degree).max().map_or(0, |d| d + 1);
    let mut basis = Vec::new();
    let mut degrees = Vec::new();
    for k in 0..top {
        let here: Vec<usize> = (0..n).filter(|&i| gens[i].degree == k).collect();
        if here.is_empty() {
            continue;
        }
        for v in fixed.select(&here, &here).kernel() {
            let mut full = vec![false; n];
            for (a, &i) in here.iter().enumerate() {
                full[i] = v[a];
            }
            basis.push(full);
            degrees.push(k);
        }
    }
    let names = basis
        .iter()
        .map(|v| {
            let parts: Vec<String> = (0..n).filter(|&i| v[i]).map(|i| gens[i].name()).collect();
            parts.join("+")
        })
        .collect();
    let mut inv = InvariantComplex {
        base: c.clone(),
        j_action: j.clone(),
        basis,
        degrees,
        names,
        d_inv: F2Matrix::zeros(0, 0),
    };
    inv.d_inv = inv
        .restrict(&c.d_check)
        .ok_or_else(|| bad("invariant chains are not closed under ∂̌".into()))?;
    Ok(inv)
}

type SectionFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A section of a bundle over the quotient, pulled back to the 2-sphere.
#[derive(Clone)]
pub struct Section {
    pub name: String,
    pub rank: usize,
    pub eval: Arc<SectionFn>,
}

impl fmt::Debug for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Section({}, rank {})", self.name, self.rank)
    }
}

impl Section {
    pub fn new(name: impl Into<String>, rank: usize, eval: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Section {
            name: name.into(),
            rank,
            eval: Arc::new(eval),
        }
    }

    /// `p ↦ ⟨a, p⟩`: odd under the antipodal map, so a section of `F^σ`
    /// whose zero set is a great circle.
    pub fn linear(name: impl Into<String>, a: Vec<f64>) -> Self {
        Section::new(name, 1, move |p| vec![a.iter().zip(p).map(|(u, v)| u * v).sum()])
    }

    /// Largest `|η(jp) + η(p)|` over the points.
    pub fn odd_defect(&self, j: &dyn Fn(&[f64]) -> Vec<f64>, pts: &[Vec<f64>]) -> f64 {
        pts.iter()
            .map(|p| {
                let (a, b) = ((self.eval)(p), (self.eval)(&j(p)));
                a.iter().zip(&b).map(|(x, y)| (x + y).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// One count of a cut-down moduli space between two generators.
#[derive(Debug, Clone, Serialize)]
pub struct CutRecord {
    pub from: GenRef,
    pub to: GenRef,
    pub trajectories: usize,
    /// Points of the cut-down space: zeros of the section along the
    /// trajectories.
    pub crossings: usize,
}

/// Degree change of an operator block: `shift`, or `shift + 1` from `s` to
/// `u`; `None` for the blocks that vanish (`s → o`, `o → u`).
fn block_change(from: BoundaryKind, to: BoundaryKind, shift: i64) -> Option<i64> {
    use BoundaryKind::*;
    match (from, to) {
        (BoundaryStable, BoundaryUnstable) => Some(shift + 1),
        (Interior, BoundaryUnstable) | (BoundaryStable, Interior) => None,
        _ => Some(shift),
    }
}

/// Counts of `M^{∩σ}(B, B′)` for every generator pair whose degrees fit an
/// operator of degree `shift` cut by `section`. Pairs on one locus do not
/// contribute: a generic section misses isolated points, and on a 2-sphere
/// locus the cap lands in degree one, which the minimal cell structure does
/// not have.
pub fn cut_table(
    ctx: &FieldContext,
    c: &CheckComplex,
    section: &Section,
    shift: i64,
    opts: &ModuliOptions,
) -> Result<Vec<CutRecord>, EquivariantError> {
    let mut out = Vec::new();
    let mut cache: BTreeMap<(usize, usize), (usize, usize)> = BTreeMap::new();
    for x in &c.generators {
        for y in &c.generators {
            if x.locus == y.locus {
                continue;
            }
            let Some(change) = block_change(x.kind, y.kind, shift) else {
                continue;
            };
            if y.degree as i64 - x.degree as i64 != change {
                continue;
            }
            let (bx, by) = (&ctx.loci[x.locus], &ctx.loci[y.locus]);
            if bx.f_value <= by.f_value {
                continue;
            }
            let key = (x.locus, y.locus);
            let (trajectories, crossings) = match cache.get(&key) {
                Some(&v) => v,
                None => {
                    let m = build_moduli(ctx, x.locus, y.locus, opts)?;
                    if (bx.dim > 0 || by.dim > 0) && !m.classes.is_empty() {
                        return Err(FlowError::Unsupported {
                            reason: format!("cut-down counts out of the 2-sphere locus pair {} → {}", bx.label, by.label),
                        }
                        .into());
                    }
                    let cut = cut_down_moduli(ctx, &m, &*section.eval, section.rank)?;
                    let v = (m.classes.len(), cut.classes.len());
                    cache.insert(key, v);
                    v
                }
            };
            out.push(CutRecord {
                from: GenRef {
                    locus: x.label.clone(),
                    cell: x.cell,
                },
                to: GenRef {
                    locus: y.label.clone(),
                    cell: y.cell,
                },
                trajectories,
                crossings,
            });
        }
    }
    Ok(out)
}

/// `m̌(σ)` on the check complex and on the invariant subcomplex.
#[derive(Debug, Clone, Serialize)]
pub struct Operator {
    pub name: String,
    pub degree: i64,
    pub check: F2Matrix,
    pub invariant: F2Matrix,
    pub records: Vec<CutRecord>,
}

fn build_operator(inv: &InvariantComplex, name: &str, shift: i64, records: &[CutRecord]) -> Result<Operator, EquivariantError> {
    let c = &inv.base;
    let entries: Vec<Entry> = records
        .iter()
        .map(|r| Entry {
            from: r.from.clone(),
            to: r.to.clone(),
            coefficient: (r.crossings % 2) as u8,
        })
        .collect();
    let check = assemble_blocks(c, c, &entries, shift)?;
    let names: Vec<String> = c.check_generators().iter().map(|g| g.name()).collect();
    // Signs are moot over F₂, so m̌ must anticommute, i.e. commute, with ∂̌.
    let comm = c.d_check.mul(&check).add(&check.mul(&c.d_check));
    if let Some((i, k)) = comm.nonzeros().into_iter().min_by_key(|&(i, k)| (k, i)) {
        return Err(EquivariantError::NotChainMap {
            operator: name.into(),
            source_label: names[k].clone(),
            target_label: names[i].clone(),
        });
    }
    let jcomm = inv.j_action.mul(&check).add(&check.mul(&inv.j_action));
    if let Some((_, k)) = jcomm.nonzeros().into_iter().min_by_key(|&(i, k)| (k, i)) {
        return Err(EquivariantError::OperatorNotEquivariant {
            operator: name.into(),
            generator: names[k].clone(),
        });
    }
    let invariant = inv.restrict(&check).ok_or_else(|| EquivariantError::OperatorNotEquivariant {
        operator: name.into(),
        generator: "invariant basis".into(),
    })?;
    Ok(Operator {
        name: name.into(),
        degree: shift,
        check,
        invariant,
        records: records.to_vec(),
    })
}

/// `m̌(η)`, degree −1, from counts of a section of `F^σ`.
pub fn q_operator(inv: &InvariantComplex, records: &[CutRecord]) -> Result<Operator, EquivariantError> {
    build_operator(inv, "Q", -1, records)
}

/// `m̌(ζ)`, degree −4, from counts of a section of `E^σ`.
pub fn v_operator(inv: &InvariantComplex, records: &[CutRecord]) -> Result<Operator, EquivariantError> {
    build_operator(inv, "V", -4, records)
}

/// Every nonzero entry of an operator changes degree by its stated degree
/// (plus one on the `s → u` part, which `∂^s_u` absorbs in `Č`).
pub fn operator_degrees_consistent(inv: &InvariantComplex, op: &Operator) -> bool {
    let g = inv.base.check_generators();
    op.check
        .nonzeros()
        .iter()
        .all(|&(i, k)| g[i].degree as i64 - g[k].degree as i64 == op.degree)
}

/// Per-degree homology bases: cycles spanning `H_k` and boundaries in
/// degree `k`.
struct HomologyBases {
    betti: Vec<usize>,
    cycles: Vec<Vec<Vec<bool>>>,
    bounds: Vec<Vec<Vec<bool>>>,
}

fn homology_bases(d: &F2Matrix, degrees: &[usize]) -> HomologyBases {
    let n = degrees.len();
    let top = degrees.iter().copied().max().map_or(0, |m| m + 1);
    let mut out = HomologyBases {
        betti: vec![0; top],
        cycles: vec![vec![]; top],
        bounds: vec![vec![]; top],
    };
    for k in 0..top {
        let here: Vec<usize> = (0..n).filter(|&i| degrees[i] == k).collect();
        let above: Vec<usize> = (0..n).filter(|&i| degrees[i] == k + 1).collect();
        let embed = |v: &[bool]| {
            let mut full = vec![false; n];
            for (a, &i) in here.iter().enumerate() {
                full[i] = v[a];
            }
            full
        };
        let all = (0..n).collect::<Vec<_>>();
        let cycles: Vec<Vec<bool>> = d.select(&all, &here).kernel().iter().map(|v| embed(v)).collect();
        let bounds: Vec<Vec<bool>> = above.iter().map(|&j| d.column(j)).collect();
        let keep = crate::f2::independent_modulo(&bounds, &cycles);
        out.betti[k] = keep.len();
        out.cycles[k] = keep.into_iter().map(|i| cycles[i].clone()).collect();
        out.bounds[k] = bounds;
    }
    out
}

impl HomologyBases {
    /// Coordinates of a cycle of degree `k` in the homology basis.
    fn coordinates(&self, k: usize, z: &[bool]) -> Option<Vec<bool>> {
        let n = z.len();
        let mut cols = self.cycles[k].clone();
        cols.extend(self.bounds[k].iter().cloned());
        let x = F2Matrix::from_columns(n, &cols).solve(z)?;
        Some(x[..self.betti[k]].to_vec())
    }

    /// The map `H_k → H_{k+shift}` induced by a chain map, for every `k`.
    fn induced(&self, op: &F2Matrix, shift: i64) -> BTreeMap<usize, F2Matrix> {
        let mut out = BTreeMap::new();
        for k in 0..self.betti.len() {
            let t = k as i64 + shift;
            if t < 0 || t as usize >= self.betti.len() {
                continue;
            }
            let t = t as usize;
            let cols: Vec<Vec<bool>> = self.cycles[k]
                .iter()
                .map(|z| self.coordinates(t, &op.mul_vec(z)).expect("chain maps send cycles to cycles"))
                .collect();
            out.insert(k, F2Matrix::from_columns(self.betti[t], &cols));
        }
        out
    }
}

/// Homology of the invariant complex as a module over `F[Q, V]/(Q³)`.
#[derive(Debug, Clone, Serialize)]
pub struct ModuleStructure {
    pub betti: Vec<usize>,
    /// `Q : H_k → H_{k−1}`, keyed by `k`.
    pub q: BTreeMap<usize, F2Matrix>,
    /// `V : H_k → H_{k−4}`, keyed by `k`.
    pub v: BTreeMap<usize, F2Matrix>,
    pub q_ranks: BTreeMap<usize, usize>,
    pub v_ranks: BTreeMap<usize, usize>,
    pub q_cubed_zero: bool,
    pub qv_commute: bool,
    /// Longest `x, Qx, Q²x, …` of nonzero classes.
    pub q_chain_length: usize,
    /// Degrees `k` where `Q : H_k → H_{k−1}` is an isomorphism.
    pub q_isomorphic_from: Vec<usize>,
}

impl ModuleStructure {
    pub fn describe(&self) -> Vec<String> {
        let mut lines = vec![format!("betti {:?}", self.betti)];
        for (k, r) in &self.q_ranks {
            lines.push(format!("Q: H{k} -> H{} rank {r}", k - 1));
        }
        for (k, r) in &self.v_ranks {
            lines.push(format!("V: H{k} -> H{} rank {r}", k - 4));
        }
        lines.push(format!(
            "Q^3 = 0: {}, QV = VQ: {}, longest Q-chain {}",
            self.q_cubed_zero, self.qv_commute, self.q_chain_length
        ));
        lines
    }
}

fn compose_from(maps: &BTreeMap<usize, F2Matrix>, betti: &[usize], k: usize, steps: usize, shift: usize) -> Option<F2Matrix> {
    let mut acc = F2Matrix::identity(betti[k]);
    let mut at = k;
    for _ in 0..steps {
        let m = maps.get(&at)?;
        acc = m.mul(&acc);
        at -= shift;
    }
    Some(acc)
}

/// Induced `Q` and `V` on invariant homology with the ring relations and
/// tower diagnostics.
pub fn module_presentation(inv: &InvariantComplex, q: &Operator, v: &Operator) -> ModuleStructure {
    let hb = homology_bases(&inv.d_inv, &inv.degrees);
    let qm = hb.induced(&q.invariant, -1);
    let vm = hb.induced(&v.invariant, -4);
    let betti = hb.betti.clone();
    let q_ranks = qm.iter().map(|(k, m)| (*k, m.rank())).collect();
    let v_ranks = vm.iter().map(|(k, m)| (*k, m.rank())).collect();
    let q_cubed_zero = (0..betti.len()).all(|k| compose_from(&qm, &betti, k, 3, 1).is_none_or(|m| m.is_zero()));
    let qv_commute = (0..betti.len()).all(|k| {
        let qv = compose_from(&vm, &betti, k, 1, 4).and_then(|a| Some(qm.get(&(k - 4))?.mul(&a)));
        let vq = compose_from(&qm, &betti, k, 1, 1).and_then(|a| Some(vm.get(&(k - 1))?.mul(&a)));
        match (qv, vq) {
            (Some(a), Some(b)) => a == b,
            _ => true,
        }
    });
    let mut q_chain_length = 0;
    for k in 0..betti.len() {
        if betti[k] == 0 {
            continue;
        }
        let mut len = 1;
        while let Some(m) = compose_from(&qm, &betti, k, len, 1) {
            if m.is_zero() {
                break;
            }
            len += 1;
        }
        q_chain_length = q_chain_length.max(len);
    }
    let q_isomorphic_from = qm
        .iter()
        .filter(|(k, m)| betti[**k] > 0 && m.rows() == m.cols() && m.rank() == betti[**k])
        .map(|(k, _)| *k)
        .collect();
    ModuleStructure {
        betti,
        q: qm,
        v: vm,
        q_ranks,
        v_ranks,
        q_cubed_zero,
        qv_commute,
        q_chain_length,
        q_isomorphic_from,
    }
}

#[derive(Debug, Clone)]
pub struct Pin2Options {
    pub density: f64,
    pub seed: u64,
    pub count: CountOptions,
    pub moduli: ModuliOptions,
    pub eta: Section,
    pub zeta: Section,
    /// Points sampled to check that `η` is odd.
    pub samples: usize,
}

impl Default for Pin2Options {
    fn default() -> Self {
        Pin2Options {
            density: 3.0,
            seed: 1,
            count: CountOptions::default(),
            moduli: ModuliOptions::default(),
            eta: Section::linear("eta", vec![1.0, 0.37, 0.21]),
            zeta: Section::new("zeta", 4, |p| vec![p[0], p[1], p[2], 0.3]),
            samples: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Pin2Report {
    pub field: String,
    pub pushforward_residue: f64,
    pub equivariance_defect: f64,
    pub invariant: InvariantComplex,
    pub full_homology: Homology,
    pub homology: Homology,
    pub q: Operator,
    pub v: Operator,
    pub module: ModuleStructure,
}

/// Loci, complex, `j`, invariant subcomplex, `Q`, `V` and the module
/// structure for a quotient model.
pub fn pin2_pipeline(qm: &QuotientModel, opts: &Pin2Options) -> Result<Pin2Report, EquivariantError> {
    let loci = find_stationary_loci(&qm.field, opts.density, opts.seed)?;
    let ctx = FieldContext::new(qm.field.clone(), loci);
    let (c, _) = assemble_numeric(&ctx, &opts.count)?;
    let jmap = |p: &[f64]| qm.apply_j(p);
    let pts = qm.field.manifold.sample_points(opts.samples, opts.seed);
    let defect = opts.eta.odd_defect(&jmap, &pts);
    if defect > 1e-10 {
        return Err(EquivariantError::SectionNotOdd {
            name: opts.eta.name.clone(),
            defect,
        });
    }
    let j = induced_involution(&ctx, &c, &jmap)?;
    let inv = invariant_subcomplex(&c, &j)?;
    let q = q_operator(&inv, &cut_table(&ctx, &c, &opts.eta, -1, &opts.moduli)?)?;
    let v = v_operator(&inv, &cut_table(&ctx, &c, &opts.zeta, -4, &opts.moduli)?)?;
    let module = module_presentation(&inv, &q, &v);
    Ok(Pin2Report {
        field: qm.field.name.clone(),
        pushforward_residue: qm.residue,
        equivariance_defect: qm.equivariance_defect,
        full_homology: crate::complex::f2_homology(&c),
        homology: inv.homology(),
        invariant: inv,
        q,
        v,
        module,
    })
}
