//! The check complex `Č = C^o ⊕ C^s` with
//!
//! ```text
//! ∂̌ = | ∂^o_o   ∂^u_o ∂^s_u         |
//!     | ∂^o_s   ∂^s_s + ∂^u_s ∂^s_u |
//! ```
//!
//! over F₂, assembled either from counted trajectories (numeric input) or from
//! hand-written degree data (exact input).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::f2::{independent_modulo, F2Matrix};
use crate::fields::BoundaryKind;
use crate::flow::moduli::{count_coefficient, Cell, CellKind, CountOptions, CountResult, FieldContext};
use crate::flow::FlowError;
use crate::strata::{CellModel, ChainTarget, DeltaChain, TargetCell};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComplexError {
    #[error("∂̌² ≠ 0: {source_label} reaches {target_label} an odd number of times")]
    DSquaredNonzero { source_label: String, target_label: String },
    #[error("entry {source_label} → {target_label} changes degree by {change}, expected {expected}")]
    DegreeMismatch {
        source_label: String,
        target_label: String,
        change: i64,
        expected: i64,
    },
    #[error("no trajectories run from {from} to {to} loci")]
    ForbiddenBlock { from: char, to: char },
    #[error("entry names an unknown generator: {reason}")]
    UnknownGenerator { reason: String },
    #[error("counting {source_label} → {target_label}: {error}")]
    Flow {
        source_label: String,
        target_label: String,
        error: FlowError,
    },
}

/// One stationary locus as seen by the complex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocusData {
    pub label: String,
    pub model: CellModel,
    pub index: usize,
    pub kind: BoundaryKind,
    #[serde(default)]
    pub f_value: f64,
}

/// A cellular generator `(locus, cell)` named by locus label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GenRef {
    pub locus: String,
    pub cell: TargetCell,
}

/// Mod-2 count of `M(B, B′)` between two cellular generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub from: GenRef,
    pub to: GenRef,
    pub coefficient: u8,
}

/// Input to [`assemble`]: the loci and the nonzero counts between their
/// cells. Both exact (hand-written) and numeric data use this shape.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComplexData {
    pub loci: Vec<LocusData>,
    pub entries: Vec<Entry>,
}

/// Provenance of one numerically counted entry.
#[derive(Debug, Clone, Serialize)]
pub struct CountRecord {
    pub from: GenRef,
    pub to: GenRef,
    pub boundary_obstructed: bool,
    pub index_drop: i64,
    pub result: CountResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct Generator {
    pub locus: usize,
    pub label: String,
    pub kind: BoundaryKind,
    pub cell: TargetCell,
    pub index: usize,
    pub degree: usize,
    #[serde(skip)]
    pub chain: DeltaChain,
}

impl Generator {
    pub fn name(&self) -> String {
        match self.cell {
            TargetCell::Zero => format!("{}.pt", self.label),
            TargetCell::Two => format!("{}.fund", self.label),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckComplex {
    /// Every cellular generator, sorted by `(kind, degree, locus, cell)`.
    pub generators: Vec<Generator>,
    /// `∂` on all generators: entry `(y, x)` is the count from `x` to `y`.
    pub d_full: F2Matrix,
    /// Positions in `generators` of the `C^o ⊕ C^s` basis, o first.
    pub check_basis: Vec<usize>,
    pub d_check: F2Matrix,
}

/// Degree of a generator: dimension of its cell plus the index of its locus.
pub fn degree_of(g: &Generator) -> usize {
    g.cell.dim() + g.index
}

fn kind_rank(k: BoundaryKind) -> usize {
    match k {
        BoundaryKind::Interior => 0,
        BoundaryKind::BoundaryStable => 1,
        BoundaryKind::BoundaryUnstable => 2,
    }
}

/// Degree change of a block entry: zero for the boundary-obstructed
/// `∂^s_u`, minus one otherwise.
fn expected_change(from: BoundaryKind, to: BoundaryKind) -> Option<i64> {
    use BoundaryKind::*;
    match (from, to) {
        (BoundaryStable, BoundaryUnstable) => Some(0),
        (Interior, BoundaryUnstable) | (BoundaryStable, Interior) => None,
        _ => Some(-1),
    }
}

fn generators_of(loci: &[LocusData]) -> Vec<Generator> {
    let mut gens: Vec<Generator> = loci
        .iter()
        .enumerate()
        .flat_map(|(i, b)| {
            let target = ChainTarget::new(b.label.clone(), b.model, b.index);
            DeltaChain::generators(&target).into_iter().map(move |chain| {
                let cell = chain.cell_map.values().next().expect("one top face").cell;
                Generator {
                    locus: i,
                    label: b.label.clone(),
                    kind: b.kind,
                    cell,
                    index: b.index,
                    degree: chain.degree(),
                    chain,
                }
            })
        })
        .collect();
    gens.sort_by_key(|g| (kind_rank(g.kind), g.degree, g.locus, g.cell));
    gens
}

/// Build `Č` and check that `∂̌² = 0`.
pub fn assemble(data: &ComplexData) -> Result<CheckComplex, ComplexError> {
    let gens = generators_of(&data.loci);
    let n = gens.len();
    let pos = |r: &GenRef| -> Result<usize, ComplexError> {
        gens.iter()
            .position(|g| g.label == r.locus && g.cell == r.cell)
            .ok_or_else(|| ComplexError::UnknownGenerator {
                reason: format!("{}/{:?}", r.locus, r.cell),
            })
    };
    let mut d = F2Matrix::zeros(n, n);
    for e in &data.entries {
        if e.coefficient & 1 == 0 {
            continue;
        }
        let (x, y) = (pos(&e.from)?, pos(&e.to)?);
        let (gx, gy) = (&gens[x], &gens[y]);
        let Some(expected) = expected_change(gx.kind, gy.kind) else {
            return Err(ComplexError::ForbiddenBlock {
                from: gx.kind.tag(),
                to: gy.kind.tag(),
            });
        };
        let change = gy.degree as i64 - gx.degree as i64;
        if change != expected {
            return Err(ComplexError::DegreeMismatch {
                source_label: gx.name(),
                target_label: gy.name(),
                change,
                expected,
            });
        }
        d.flip(y, x);
    }
    let of = |k: BoundaryKind| -> Vec<usize> { (0..n).filter(|&i| gens[i].kind == k).collect() };
    let (o, s, u) = (
        of(BoundaryKind::Interior),
        of(BoundaryKind::BoundaryStable),
        of(BoundaryKind::BoundaryUnstable),
    );
    let block = |from: &[usize], to: &[usize]| d.select(to, from);
    let su = block(&s, &u);
    let oo = block(&o, &o);
    let os = block(&o, &s);
    let so = block(&u, &o).mul(&su);
    let ss = block(&s, &s).add(&block(&u, &s).mul(&su));
    let (no, ns) = (o.len(), s.len());
    let mut dc = F2Matrix::zeros(no + ns, no + ns);
    let mut put = |m: &F2Matrix, r0: usize, c0: usize| {
        for (i, j) in m.nonzeros() {
            dc.set(r0 + i, c0 + j, true);
        }
    };
    put(&oo, 0, 0);
    put(&os, no, 0);
    put(&so, 0, no);
    put(&ss, no, no);
    let check_basis: Vec<usize> = o.iter().chain(&s).copied().collect();
    let sq = dc.mul(&dc);
    if let Some(&(i, j)) = sq.nonzeros().iter().min_by_key(|&&(i, j)| (j, i)) {
        return Err(ComplexError::DSquaredNonzero {
            source_label: gens[check_basis[j]].name(),
            target_label: gens[check_basis[i]].name(),
        });
    }
    Ok(CheckComplex {
        generators: gens,
        d_full: d,
        check_basis,
        d_check: dc,
    })
}

impl CheckComplex {
    fn component(&self, k: BoundaryKind) -> Vec<usize> {
        (0..self.generators.len())
            .filter(|&i| self.generators[i].kind == k)
            .collect()
    }

    /// `∂^θ_θ′ : C^θ → C^θ′`, rows and columns in generator order.
    pub fn block(&self, from: BoundaryKind, to: BoundaryKind) -> F2Matrix {
        self.d_full.select(&self.component(to), &self.component(from))
    }

    /// All nine blocks keyed `"θθ′"` (e.g. `"su"` for `∂^s_u`).
    pub fn d_blocks(&self) -> BTreeMap<String, F2Matrix> {
        use BoundaryKind::*;
        let ks = [Interior, BoundaryStable, BoundaryUnstable];
        let mut out = BTreeMap::new();
        for a in ks {
            for b in ks {
                out.insert(format!("{}{}", a.tag(), b.tag()), self.block(a, b));
            }
        }
        out
    }

    /// `∂ = ∂₀ + ∂₁ + …` split by the drop in locus index.
    pub fn index_drop_parts(&self) -> BTreeMap<i64, F2Matrix> {
        let n = self.generators.len();
        let mut out: BTreeMap<i64, F2Matrix> = BTreeMap::new();
        for (i, j) in self.d_full.nonzeros() {
            let drop = self.generators[j].index as i64 - self.generators[i].index as i64;
            out.entry(drop).or_insert_with(|| F2Matrix::zeros(n, n)).set(i, j, true);
        }
        out
    }

    /// Generators of `Č`, in basis order.
    pub fn check_generators(&self) -> Vec<&Generator> {
        self.check_basis.iter().map(|&i| &self.generators[i]).collect()
    }

    /// Every nonzero entry of `∂̌` lowers degree by exactly one.
    pub fn degrees_consistent(&self) -> bool {
        let g = self.check_generators();
        self.d_check
            .nonzeros()
            .iter()
            .all(|&(i, j)| g[j].degree == g[i].degree + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Homology {
    /// `betti[k]` is the rank of `Ȟ_k`, up to the top generator degree.
    pub betti: Vec<usize>,
    /// Per degree, cycles (as generator names) spanning homology.
    pub representatives: BTreeMap<usize, Vec<Vec<String>>>,
}

impl Homology {
    pub fn total(&self) -> usize {
        self.betti.iter().sum()
    }
}

/// Homology of a graded F₂ complex given by its differential on generators
/// with the listed degrees and names.
pub fn graded_homology(d: &F2Matrix, degrees: &[usize], names: &[String]) -> Homology {
    let top = degrees.iter().copied().max().map_or(0, |m| m + 1);
    let mut betti = vec![0; top];
    let mut representatives = BTreeMap::new();
    for k in 0..top {
        let here: Vec<usize> = (0..degrees.len()).filter(|&i| degrees[i] == k).collect();
        if here.is_empty() {
            continue;
        }
        let below: Vec<usize> = (0..degrees.len()).filter(|&i| degrees[i] + 1 == k).collect();
        let above: Vec<usize> = (0..degrees.len()).filter(|&i| degrees[i] == k + 1).collect();
        let dk = d.select(&below, &here);
        let cycles = if below.is_empty() {
            (0..here.len())
                .map(|i| (0..here.len()).map(|j| i == j).collect())
                .collect()
        } else {
            dk.kernel()
        };
        let boundaries: Vec<Vec<bool>> = {
            let dk1 = d.select(&here, &above);
            (0..above.len()).map(|j| dk1.column(j)).collect()
        };
        let keep = independent_modulo(&boundaries, &cycles);
        betti[k] = keep.len();
        let reps: Vec<Vec<String>> = keep
            .iter()
            .map(|&c| {
                (0..here.len())
                    .filter(|&i| cycles[c][i])
                    .map(|i| names[here[i]].clone())
                    .collect()
            })
            .collect();
        if !reps.is_empty() {
            representatives.insert(k, reps);
        }
    }
    Homology {
        betti,
        representatives,
    }
}

/// Betti numbers of `Ȟ` with cycle representatives.
pub fn f2_homology(c: &CheckComplex) -> Homology {
    let g = c.check_generators();
    let degrees: Vec<usize> = g.iter().map(|g| g.degree).collect();
    let names: Vec<String> = g.iter().map(|g| g.name()).collect();
    graded_homology(&c.d_check, &degrees, &names)
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

/// Loci of a field context in the form [`assemble`] expects.
pub fn loci_data(ctx: &FieldContext) -> Vec<LocusData> {
    ctx.loci
        .iter()
        .map(|b| LocusData {
            label: b.label.clone(),
            model: ChainTarget::from(b).model,
            index: b.index,
            kind: b.kind,
            f_value: b.f_value,
        })
        .collect()
}

/// Count every entry that can be nonzero: pairs of cells on distinct loci
/// whose degrees differ as their block requires, with the source higher in
/// the taming function.
pub fn numeric_data(ctx: &FieldContext, opts: &CountOptions) -> Result<(ComplexData, Vec<CountRecord>), ComplexError> {
    let loci = loci_data(ctx);
    let gens = generators_of(&loci);
    let mut entries = Vec::new();
    let mut records = Vec::new();
    for x in &gens {
        for y in &gens {
            if x.locus == y.locus || loci[x.locus].f_value <= loci[y.locus].f_value {
                continue;
            }
            let Some(change) = expected_change(x.kind, y.kind) else {
                continue;
            };
            if y.degree as i64 - x.degree as i64 != change {
                continue;
            }
            let from = GenRef {
                locus: x.label.clone(),
                cell: x.cell,
            };
            let to = GenRef {
                locus: y.label.clone(),
                cell: y.cell,
            };
            let result = count_coefficient(ctx, cell_of(x.locus, x.cell), cell_of(y.locus, y.cell), opts).map_err(
                |error| ComplexError::Flow {
                    source_label: x.name(),
                    target_label: y.name(),
                    error,
                },
            )?;
            if result.coefficient {
                entries.push(Entry {
                    from: from.clone(),
                    to: to.clone(),
                    coefficient: 1,
                });
            }
            records.push(CountRecord {
                from,
                to,
                boundary_obstructed: change == 0,
                index_drop: x.index as i64 - y.index as i64,
                result,
            });
        }
    }
    Ok((ComplexData { loci, entries }, records))
}

/// Count and assemble in one go.
pub fn assemble_numeric(ctx: &FieldContext, opts: &CountOptions) -> Result<(CheckComplex, Vec<CountRecord>), ComplexError> {
    let (data, records) = numeric_data(ctx, opts)?;
    Ok((assemble(&data)?, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn locus(label: &str, model: CellModel, index: usize, kind: BoundaryKind) -> LocusData {
        LocusData {
            label: label.into(),
            model,
            index,
            kind,
            f_value: 0.0,
        }
    }

    fn pt(l: &str) -> GenRef {
        GenRef {
            locus: l.into(),
            cell: TargetCell::Zero,
        }
    }

    fn entry(a: &str, b: &str) -> Entry {
        Entry {
            from: pt(a),
            to: pt(b),
            coefficient: 1,
        }
    }

    #[test]
    fn empty_complex_has_no_homology() {
        let c = assemble(&ComplexData::default()).unwrap();
        assert_eq!(f2_homology(&c).total(), 0);
    }

    #[test]
    fn two_term_complex_with_zero_map() {
        use BoundaryKind::Interior;
        let data = ComplexData {
            loci: vec![
                locus("a", CellModel::Point, 0, Interior),
                locus("b", CellModel::Point, 1, Interior),
            ],
            entries: vec![],
        };
        assert_eq!(f2_homology(&assemble(&data).unwrap()).betti, vec![1, 1]);
    }

    #[test]
    fn circle_with_two_saddles_cancels() {
        use BoundaryKind::Interior;
        let data = ComplexData {
            loci: vec![
                locus("min", CellModel::Point, 0, Interior),
                locus("max", CellModel::Point, 1, Interior),
            ],
            entries: vec![entry("max", "min"), entry("max", "min")],
        };
        let c = assemble(&data).unwrap();
        assert!(c.d_check.is_zero());
        assert_eq!(f2_homology(&c).betti, vec![1, 1]);
    }

    #[test]
    fn disk_with_boundary_points() {
        use BoundaryKind::*;
        // The disk field: O interior min, two boundary-unstable and two
        // boundary-stable points of index 1, two interior maxima.
        let loci = vec![
            locus("O", CellModel::Point, 0, Interior),
            locus("u1", CellModel::Point, 1, BoundaryUnstable),
            locus("u2", CellModel::Point, 1, BoundaryUnstable),
            locus("s1", CellModel::Point, 1, BoundaryStable),
            locus("s2", CellModel::Point, 1, BoundaryStable),
            locus("P1", CellModel::Point, 2, Interior),
            locus("P2", CellModel::Point, 2, Interior),
        ];
        let entries = vec![
            entry("u1", "O"),
            entry("u2", "O"),
            entry("s1", "u1"),
            entry("s1", "u2"),
            entry("s2", "u1"),
            entry("s2", "u2"),
            entry("P1", "s1"),
            entry("P2", "s2"),
        ];
        let c = assemble(&ComplexData { loci, entries }).unwrap();
        assert!(c.degrees_consistent());
        let h = f2_homology(&c);
        assert_eq!(h.betti, vec![1, 0, 0]);
        assert_eq!(h.representatives[&0], vec![vec!["O.pt".to_string()]]);
        assert_eq!(c.block(BoundaryStable, BoundaryUnstable).nonzeros().len(), 4);
        assert_eq!(c.index_drop_parts()[&0].nonzeros().len(), 4);
    }

    #[test]
    fn missing_broken_strata_are_caught() {
        use BoundaryKind::*;
        let data = ComplexData {
            loci: vec![
                locus("a", CellModel::Point, 0, Interior),
                locus("b", CellModel::Point, 1, Interior),
                locus("c", CellModel::Point, 2, Interior),
            ],
            entries: vec![entry("c", "b"), entry("b", "a")],
        };
        assert!(matches!(
            assemble(&data),
            Err(ComplexError::DSquaredNonzero { source_label, target_label })
                if source_label == "c.pt" && target_label == "a.pt"
        ));
    }

    #[test]
    fn wrong_degrees_are_rejected() {
        use BoundaryKind::*;
        let data = ComplexData {
            loci: vec![
                locus("a", CellModel::Point, 0, Interior),
                locus("c", CellModel::Point, 2, Interior),
            ],
            entries: vec![entry("c", "a")],
        };
        assert!(matches!(assemble(&data), Err(ComplexError::DegreeMismatch { .. })));
    }

    #[test]
    fn generator_degrees() {
        use BoundaryKind::Interior;
        let data = ComplexData {
            loci: vec![
                locus("N", CellModel::Point, 2, Interior),
                locus("S", CellModel::Sphere2, 1, Interior),
            ],
            entries: vec![],
        };
        let c = assemble(&data).unwrap();
        let deg: BTreeMap<String, usize> = c.generators.iter().map(|g| (g.name(), degree_of(g))).collect();
        assert_eq!(deg["N.pt"], 2);
        assert_eq!(deg["S.fund"], 3);
        assert_eq!(deg["S.pt"], 1);
    }

    #[test]
    fn rp2_cellular_complex() {
        use BoundaryKind::Interior;
        // Cells e0, e1, e2 with boundary maps 2 and 0, both zero mod 2.
        let data = ComplexData {
            loci: vec![
                locus("e0", CellModel::Point, 0, Interior),
                locus("e1", CellModel::Point, 1, Interior),
                locus("e2", CellModel::Point, 2, Interior),
            ],
            entries: vec![
                Entry {
                    from: pt("e1"),
                    to: pt("e0"),
                    coefficient: 2,
                },
                Entry {
                    from: pt("e2"),
                    to: pt("e1"),
                    coefficient: 2,
                },
            ],
        };
        assert_eq!(f2_homology(&assemble(&data).unwrap()).betti, vec![1, 1, 1]);
    }
}
