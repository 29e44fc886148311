//! Face posets of abstract δ-chains and the F₂ bookkeeping on top of them.
//!
//! Only the combinatorics is modeled: faces, containment and dimensions. The
//! maps into stationary loci are recorded through the minimal cell structures
//! (a point is one 0-cell; a 2-sphere is a 0-cell and a 2-cell) together with
//! mod-2 mapping degrees.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{LocusModel, StationaryManifold};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrataError {
    #[error("invalid face poset: {reason}")]
    InvalidPoset { reason: String },
    #[error("chain is not transverse to the evaluation map: {reason}")]
    NotTransverse { reason: String },
    #[error("fiber product has negative dimension {dim}")]
    DimensionUnderflow { dim: i64 },
}

/// A face of a stratified chain; `label = (e, i)` places it in the `i`-th
/// codimension-`e` stratum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Face {
    pub id: usize,
    pub dim: usize,
    pub label: (usize, usize),
}

/// A graded poset with the diamond property. Construction validates; the
/// fields are read-only afterwards.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FacePoset {
    faces: Vec<Face>,
    /// Covering relation as `(lower, upper)` pairs of positions in `faces`.
    covers: Vec<(usize, usize)>,
    top_dim: usize,
    #[serde(skip)]
    up: Vec<Vec<usize>>,
    #[serde(skip)]
    down: Vec<Vec<usize>>,
}

impl FacePoset {
    /// Build from `(id, dim)` faces and covering pairs `(lower id, upper id)`.
    ///
    /// Rejects duplicate ids, unknown ids, covers that do not drop dimension by
    /// exactly one, and intervals of length two without exactly two middle
    /// faces.
    pub fn new(faces: &[(usize, usize)], covers: &[(usize, usize)]) -> Result<Self, StrataError> {
        let bad = |reason: String| StrataError::InvalidPoset { reason };
        if faces.is_empty() {
            return Err(bad("no faces".into()));
        }
        let mut pos = BTreeMap::new();
        for (k, (id, _)) in faces.iter().enumerate() {
            if pos.insert(*id, k).is_some() {
                return Err(bad(format!("duplicate face id {id}")));
            }
        }
        let top_dim = faces.iter().map(|f| f.1).max().unwrap_or(0);
        let n = faces.len();
        let mut up = vec![Vec::new(); n];
        let mut down = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        let mut cov = Vec::with_capacity(covers.len());
        for &(lo, hi) in covers {
            let (Some(&a), Some(&b)) = (pos.get(&lo), pos.get(&hi)) else {
                return Err(bad(format!("cover ({lo}, {hi}) names an unknown face")));
            };
            if faces[b].1 != faces[a].1 + 1 {
                return Err(bad(format!(
                    "cover ({lo}, {hi}) goes from dimension {} to {}",
                    faces[a].1, faces[b].1
                )));
            }
            if !seen.insert((a, b)) {
                continue;
            }
            up[a].push(b);
            down[b].push(a);
            cov.push((a, b));
        }
        for a in 0..n {
            let mut mids: BTreeMap<usize, usize> = BTreeMap::new();
            for &b in &up[a] {
                for &c in &up[b] {
                    *mids.entry(c).or_default() += 1;
                }
            }
            if let Some((&c, &k)) = mids.iter().find(|(_, &k)| k != 2) {
                return Err(bad(format!(
                    "diamond property fails between faces {} and {}: {k} middle face(s)",
                    faces[a].0, faces[c].0
                )));
            }
        }
        // Partition labels (codimension, running index within it).
        let mut counter = vec![0usize; top_dim + 1];
        let faces = faces
            .iter()
            .map(|&(id, dim)| {
                let e = top_dim - dim;
                counter[e] += 1;
                Face {
                    id,
                    dim,
                    label: (e, counter[e] - 1),
                }
            })
            .collect();
        Ok(FacePoset {
            faces,
            covers: cov,
            top_dim,
            up,
            down,
        })
    }

    /// Face poset of the standard `d`-simplex (nonempty vertex subsets; the
    /// id of a face is its vertex bitmask).
    pub fn simplex(d: usize) -> Self {
        let full: usize = (1 << (d + 1)) - 1;
        let faces: Vec<(usize, usize)> = (1..=full).map(|m| (m, m.count_ones() as usize - 1)).collect();
        let mut covers = Vec::new();
        for m in 1..=full {
            for v in 0..=d {
                let sub = m & !(1 << v);
                if m & (1 << v) != 0 && sub != 0 {
                    covers.push((sub, m));
                }
            }
        }
        FacePoset::new(&faces, &covers).expect("simplex face poset is valid")
    }

    /// A closed manifold of dimension `d` with no faces at all.
    pub fn closed(d: usize) -> Self {
        FacePoset::new(&[(0, d)], &[]).expect("single face is valid")
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn top_dim(&self) -> usize {
        self.top_dim
    }

    /// Covering pairs as face ids.
    pub fn covers(&self) -> Vec<(usize, usize)> {
        self.covers
            .iter()
            .map(|&(a, b)| (self.faces[a].id, self.faces[b].id))
            .collect()
    }

    /// Ids of the top-dimensional faces.
    pub fn top_faces(&self) -> Vec<usize> {
        self.faces
            .iter()
            .filter(|f| f.dim == self.top_dim)
            .map(|f| f.id)
            .collect()
    }

    fn position(&self, id: usize) -> Option<usize> {
        self.faces.iter().position(|f| f.id == id)
    }

    /// `lo ≤ hi` in the partial order.
    pub fn contains(&self, hi: usize, lo: usize) -> bool {
        let (Some(h), Some(l)) = (self.position(hi), self.position(lo)) else {
            return false;
        };
        self.below(h).contains(&l)
    }

    fn below(&self, k: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::from([k]);
        let mut stack = vec![k];
        while let Some(x) = stack.pop() {
            for &y in &self.down[x] {
                if out.insert(y) {
                    stack.push(y);
                }
            }
        }
        out
    }

    /// Closed down-set of a face, with its own labels.
    pub fn restrict(&self, id: usize) -> Option<FacePoset> {
        let k = self.position(id)?;
        let keep = self.below(k);
        let faces: Vec<(usize, usize)> = keep.iter().map(|&i| (self.faces[i].id, self.faces[i].dim)).collect();
        let covers: Vec<(usize, usize)> = self
            .covers
            .iter()
            .filter(|(a, b)| keep.contains(a) && keep.contains(b))
            .map(|&(a, b)| (self.faces[a].id, self.faces[b].id))
            .collect();
        Some(FacePoset::new(&faces, &covers).expect("down-sets of valid posets are valid"))
    }

    /// Codimension-one faces counted mod 2 over the top faces containing them.
    /// Walls shared by two top faces cancel.
    pub fn boundary_faces(&self) -> Vec<usize> {
        let mut count: BTreeMap<usize, usize> = BTreeMap::new();
        for (k, f) in self.faces.iter().enumerate() {
            if f.dim == self.top_dim {
                for &j in &self.down[k] {
                    *count.entry(self.faces[j].id).or_default() += 1;
                }
            }
        }
        count.into_iter().filter(|(_, c)| c % 2 == 1).map(|(id, _)| id).collect()
    }
}

/// A cell of the minimal cell structure on a stationary locus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TargetCell {
    Zero,
    Two,
}

impl TargetCell {
    pub fn dim(self) -> usize {
        match self {
            TargetCell::Zero => 0,
            TargetCell::Two => 2,
        }
    }
}

/// Which cell structure a stationary locus carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellModel {
    Point,
    Sphere2,
}

impl CellModel {
    pub fn cells(self) -> Vec<TargetCell> {
        match self {
            CellModel::Point => vec![TargetCell::Zero],
            CellModel::Sphere2 => vec![TargetCell::Zero, TargetCell::Two],
        }
    }

    pub fn dim(self) -> usize {
        match self {
            CellModel::Point => 0,
            CellModel::Sphere2 => 2,
        }
    }
}

/// The part of a stationary locus a chain needs: its name, cell model and
/// index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChainTarget {
    pub label: String,
    pub model: CellModel,
    pub index: usize,
}

impl ChainTarget {
    pub fn new(label: impl Into<String>, model: CellModel, index: usize) -> Self {
        ChainTarget {
            label: label.into(),
            model,
            index,
        }
    }
}

impl From<&StationaryManifold> for ChainTarget {
    fn from(b: &StationaryManifold) -> Self {
        let model = match b.model {
            LocusModel::Point(_) => CellModel::Point,
            LocusModel::Sphere2 { .. } => CellModel::Sphere2,
        };
        ChainTarget::new(b.label.clone(), model, b.index)
    }
}

/// Where a top face goes: a target cell and, when the dimensions agree, the
/// mod-2 degree onto it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CellImage {
    pub cell: TargetCell,
    pub degree: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeltaChain {
    pub skeleton: FacePoset,
    pub target: ChainTarget,
    /// One entry per top face id.
    pub cell_map: BTreeMap<usize, CellImage>,
    pub dim: usize,
}

impl DeltaChain {
    /// Checks that every top face, and nothing else, has an image, that
    /// degrees appear exactly when dimensions match, and that the cells exist.
    pub fn new(
        skeleton: FacePoset,
        target: ChainTarget,
        cell_map: BTreeMap<usize, CellImage>,
    ) -> Result<Self, StrataError> {
        let tops: BTreeSet<usize> = skeleton.top_faces().into_iter().collect();
        let keys: BTreeSet<usize> = cell_map.keys().copied().collect();
        if tops != keys {
            return Err(StrataError::InvalidPoset {
                reason: "cell map must cover exactly the top faces".into(),
            });
        }
        let d = skeleton.top_dim();
        for im in cell_map.values() {
            if !target.model.cells().contains(&im.cell) {
                return Err(StrataError::InvalidPoset {
                    reason: format!("{:?} is not a cell of {}", im.cell, target.label),
                });
            }
            if im.degree.is_some() != (im.cell.dim() == d) {
                return Err(StrataError::InvalidPoset {
                    reason: "degree given exactly when face and cell dimensions agree".into(),
                });
            }
        }
        Ok(DeltaChain {
            skeleton,
            target,
            cell_map,
            dim: d,
        })
    }

    /// The point generator `pt → B`.
    pub fn point(target: ChainTarget) -> Self {
        let im = CellImage {
            cell: TargetCell::Zero,
            degree: Some(1),
        };
        DeltaChain::new(FacePoset::closed(0), target, BTreeMap::from([(0, im)])).expect("valid")
    }

    /// The fundamental chain of a 2-sphere locus.
    pub fn fundamental(target: ChainTarget) -> Option<Self> {
        if target.model != CellModel::Sphere2 {
            return None;
        }
        let im = CellImage {
            cell: TargetCell::Two,
            degree: Some(1),
        };
        Some(DeltaChain::new(FacePoset::closed(2), target, BTreeMap::from([(0, im)])).expect("valid"))
    }

    /// One generator per cell of the target.
    pub fn generators(target: &ChainTarget) -> Vec<DeltaChain> {
        let mut out = vec![DeltaChain::point(target.clone())];
        out.extend(DeltaChain::fundamental(target.clone()));
        out
    }

    /// Cellular class `(cell, degree)` if the chain is a nonzero cycle of the
    /// cellular model, `None` if it is negligible or degenerate.
    pub fn cellular_class(&self) -> Option<TargetCell> {
        if is_negligible(self) || !self.skeleton.boundary_faces().is_empty() {
            return None;
        }
        let mut total = 0u8;
        let mut cell = None;
        for im in self.cell_map.values() {
            if im.cell.dim() != self.dim {
                return None;
            }
            total ^= im.degree.unwrap_or(0) & 1;
            cell = Some(im.cell);
        }
        (total == 1).then_some(cell).flatten()
    }

    /// Degree of the chain as a generator: `dim Δ + ind B`.
    pub fn degree(&self) -> usize {
        self.dim + self.target.index
    }
}

/// Restrictions of `σ` to its codimension-one faces, one chain per face.
///
/// A face maps to the cell of the first top face above it; degrees are only
/// recorded when the dimensions still agree.
pub fn boundary_faces(sigma: &DeltaChain) -> Vec<DeltaChain> {
    let sk = &sigma.skeleton;
    let tops = sk.top_faces();
    sk.boundary_faces()
        .into_iter()
        .map(|id| {
            let restricted = sk.restrict(id).expect("face exists");
            let parent = tops
                .iter()
                .find(|&&t| sk.contains(t, id))
                .expect("codimension-one face lies under a top face");
            let cell = sigma.cell_map[parent].cell;
            let d = restricted.top_dim();
            let im = CellImage {
                cell,
                degree: (cell.dim() == d).then_some(1),
            };
            DeltaChain {
                cell_map: BTreeMap::from([(id, im)]),
                dim: d,
                skeleton: restricted,
                target: sigma.target.clone(),
            }
        })
        .collect()
}

/// Formal F₂ sum of chains. Chains with the same target, dimension, top
/// faces and cell images are identified.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChainSum(pub Vec<DeltaChain>);

type ChainKey = (String, usize, Vec<(usize, TargetCell, Option<u8>)>);

fn key(c: &DeltaChain) -> ChainKey {
    (
        c.target.label.clone(),
        c.dim,
        c.cell_map.iter().map(|(&id, im)| (id, im.cell, im.degree)).collect(),
    )
}

impl ChainSum {
    /// Cancel pairs of equal chains.
    pub fn reduce(self) -> Self {
        let mut m: BTreeMap<ChainKey, (DeltaChain, usize)> = BTreeMap::new();
        for c in self.0 {
            m.entry(key(&c)).or_insert_with(|| (c, 0)).1 += 1;
        }
        ChainSum(m.into_values().filter(|(_, k)| k % 2 == 1).map(|(c, _)| c).collect())
    }

    pub fn boundary(&self) -> ChainSum {
        ChainSum(self.0.iter().flat_map(boundary_faces).collect()).reduce()
    }

    pub fn is_zero(&self) -> bool {
        self.clone().reduce().0.is_empty()
    }
}

/// True iff `σ` factors through cells of dimension below `dim σ`, or
/// `dim σ ≥ dim B + 2`.
pub fn is_negligible(sigma: &DeltaChain) -> bool {
    if sigma.dim >= sigma.target.model.dim() + 2 {
        return true;
    }
    sigma.cell_map.values().all(|im| im.cell.dim() < sigma.dim)
}

/// Tier-1 description of a moduli space `M(B, B′)` as seen by chains: its
/// dimension and the mod-2 cellular degree matrix of `ev₊ ∘ ev₋⁻¹`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModuliAction {
    pub source: ChainTarget,
    pub target: ChainTarget,
    pub dim: i64,
    /// `(source cell, target cell, coefficient mod 2)`.
    pub action: Vec<(TargetCell, TargetCell, u8)>,
}

impl ModuliAction {
    /// The constant moduli `M(B, B)`: `ev₋ = ev₊` of degree one.
    pub fn constant(b: &ChainTarget) -> Self {
        ModuliAction {
            source: b.clone(),
            target: b.clone(),
            dim: b.model.dim() as i64,
            action: b.model.cells().into_iter().map(|c| (c, c, 1)).collect(),
        }
    }
}

/// `Δ ×_{σ, ev₋} M`, of dimension `dim σ + dim M − dim B`.
///
/// The product is modeled by a simplex of the result dimension mapped to the
/// target cell read off the action, with degree `deg σ · coefficient` when the
/// dimensions match. A zero input gives a zero output.
pub fn fiber_product(sigma: &DeltaChain, m: &ModuliAction) -> Result<Option<DeltaChain>, StrataError> {
    if sigma.target != m.source {
        return Err(StrataError::NotTransverse {
            reason: format!("chain lives on {}, moduli start at {}", sigma.target.label, m.source.label),
        });
    }
    let dim = sigma.dim as i64 + m.dim - m.source.model.dim() as i64;
    if dim < 0 {
        return Err(StrataError::DimensionUnderflow { dim });
    }
    let Some(cell) = sigma.cellular_class() else {
        return Ok(None);
    };
    let images: Vec<&(TargetCell, TargetCell, u8)> = m.action.iter().filter(|a| a.0 == cell).collect();
    if images.is_empty() {
        return Err(StrataError::NotTransverse {
            reason: format!("no evaluation data over the {cell:?} cell of {}", m.source.label),
        });
    }
    let d = dim as usize;
    let mut out: Option<(TargetCell, u8)> = None;
    for &&(_, dst, c) in &images {
        if c & 1 == 0 {
            continue;
        }
        if out.is_some_and(|(o, _)| o != dst) {
            return Err(StrataError::NotTransverse {
                reason: "chain image spreads over several cells".into(),
            });
        }
        let acc = out.map(|o| o.1).unwrap_or(0) ^ 1;
        out = Some((dst, acc));
    }
    let Some((dst, deg)) = out else {
        return Ok(None);
    };
    if deg == 0 {
        return Ok(None);
    }
    let skeleton = if d == m.target.model.dim() && dst == TargetCell::Two {
        FacePoset::closed(d)
    } else if d == 0 {
        FacePoset::closed(0)
    } else {
        FacePoset::simplex(d)
    };
    let cell_map = skeleton
        .top_faces()
        .into_iter()
        .map(|id| {
            (
                id,
                CellImage {
                    cell: dst,
                    degree: (dst.dim() == d).then_some(1),
                },
            )
        })
        .collect();
    DeltaChain::new(skeleton, m.target.clone(), cell_map).map(Some)
}

/// Betti numbers of the chain group over one locus: the cellular generators
/// with the boundary induced from their skeletons.
pub fn chain_group_betti(target: &ChainTarget) -> Vec<usize> {
    let mut betti = vec![0; target.model.dim() + 1];
    for g in DeltaChain::generators(target) {
        if ChainSum(vec![g.clone()]).boundary().is_zero() && g.cellular_class().is_some() {
            betti[g.dim] += 1;
        }
    }
    betti
}

/// A random pure simplicial complex of dimension `d` on `n` vertices with
/// `k` top simplices, as a face poset (ids are vertex bitmasks).
pub fn random_simplicial_poset(rng: &mut impl Rng, n: usize, d: usize, k: usize) -> FacePoset {
    assert!(d < n && n < usize::BITS as usize);
    let verts: Vec<usize> = (0..n).collect();
    let mut masks = BTreeSet::new();
    for _ in 0..k.max(1) {
        let pick: usize = verts.choose_multiple(rng, d + 1).map(|v| 1usize << v).sum();
        let mut sub = pick;
        // Every nonempty subset of the chosen simplex.
        while sub != 0 {
            masks.insert(sub);
            sub = (sub - 1) & pick;
        }
    }
    let faces: Vec<(usize, usize)> = masks.iter().map(|&m| (m, m.count_ones() as usize - 1)).collect();
    let mut covers = Vec::new();
    for &m in &masks {
        for v in 0..n {
            let sub = m & !(1 << v);
            if m & (1 << v) != 0 && sub != 0 {
                covers.push((sub, m));
            }
        }
    }
    FacePoset::new(&faces, &covers).expect("simplicial complexes satisfy the diamond property")
}

/// The same poset data with one random covering pair removed; such posets
/// break the diamond property whenever the removed pair sits in an interval
/// of length two.
pub fn drop_random_cover(rng: &mut impl Rng, p: &FacePoset) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let faces: Vec<(usize, usize)> = p.faces().iter().map(|f| (f.id, f.dim)).collect();
    let mut covers = p.covers();
    if !covers.is_empty() {
        let k = rng.gen_range(0..covers.len());
        covers.remove(k);
    }
    (faces, covers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pt() -> ChainTarget {
        ChainTarget::new("B0", CellModel::Point, 0)
    }

    fn sphere(index: usize) -> ChainTarget {
        ChainTarget::new("B1", CellModel::Sphere2, index)
    }

    fn on(skeleton: FacePoset, target: ChainTarget, cell: TargetCell) -> DeltaChain {
        let d = skeleton.top_dim();
        let map = skeleton
            .top_faces()
            .into_iter()
            .map(|id| {
                (
                    id,
                    CellImage {
                        cell,
                        degree: (cell.dim() == d).then_some(1),
                    },
                )
            })
            .collect();
        DeltaChain::new(skeleton, target, map).unwrap()
    }

    #[test]
    fn triangle_has_three_edges_and_no_boundary_of_boundary() {
        let s = on(FacePoset::simplex(2), pt(), TargetCell::Zero);
        let edges = boundary_faces(&s);
        assert_eq!(edges.len(), 3);
        assert!(edges.iter().all(|e| e.dim == 1));
        assert!(ChainSum(vec![s]).boundary().boundary().is_zero());
    }

    #[test]
    fn circle_of_two_arcs_is_closed() {
        // Vertices 1, 2; arcs 3, 4 both from 1 to 2.
        let p = FacePoset::new(&[(1, 0), (2, 0), (3, 1), (4, 1)], &[(1, 3), (2, 3), (1, 4), (2, 4)]).unwrap();
        assert!(p.boundary_faces().is_empty());
        let c = on(p, pt(), TargetCell::Zero);
        assert!(boundary_faces(&c).is_empty());
    }

    #[test]
    fn fundamental_sphere_chain_is_a_cycle() {
        let f = DeltaChain::fundamental(sphere(0)).unwrap();
        assert!(boundary_faces(&f).is_empty());
        assert!(!is_negligible(&f));
        assert_eq!(f.cellular_class(), Some(TargetCell::Two));
    }

    #[test]
    fn negligibility() {
        let arc = on(FacePoset::simplex(1), pt(), TargetCell::Zero);
        assert!(is_negligible(&arc));
        let big = on(FacePoset::simplex(4), sphere(0), TargetCell::Two);
        assert!(is_negligible(&big));
    }

    #[test]
    fn generator_degrees() {
        assert_eq!(DeltaChain::point(ChainTarget::new("N", CellModel::Point, 2)).degree(), 2);
        assert_eq!(DeltaChain::fundamental(sphere(1)).unwrap().degree(), 3);
        let arc = on(FacePoset::simplex(1), pt(), TargetCell::Zero);
        assert_eq!(arc.degree(), 1);
    }

    #[test]
    fn diamond_violation_is_rejected() {
        // Triangle with the edge {0,1} forgetting its vertex 0.
        let s = FacePoset::simplex(2);
        let covers: Vec<_> = s.covers().into_iter().filter(|&c| c != (0b001, 0b011)).collect();
        let faces: Vec<_> = s.faces().iter().map(|f| (f.id, f.dim)).collect();
        assert!(matches!(FacePoset::new(&faces, &covers), Err(StrataError::InvalidPoset { .. })));
        assert!(FacePoset::new(&[(0, 0), (1, 2)], &[(0, 1)]).is_err());
    }

    #[test]
    fn fiber_products() {
        let n = ChainTarget::new("N", CellModel::Point, 2);
        let s = ChainTarget::new("S", CellModel::Point, 0);
        let m = ModuliAction {
            source: n.clone(),
            target: s.clone(),
            dim: 1,
            action: vec![(TargetCell::Zero, TargetCell::Zero, 1)],
        };
        let r = fiber_product(&DeltaChain::point(n), &m).unwrap().unwrap();
        assert_eq!(r.dim, 1);
        assert_eq!(r.degree(), 1);

        let b = sphere(0);
        let c = ChainTarget::new("C", CellModel::Sphere2, 0);
        let m2 = ModuliAction {
            source: b.clone(),
            target: c,
            dim: 2,
            action: vec![(TargetCell::Two, TargetCell::Two, 1), (TargetCell::Zero, TargetCell::Zero, 1)],
        };
        let r2 = fiber_product(&DeltaChain::fundamental(b.clone()).unwrap(), &m2).unwrap().unwrap();
        assert_eq!(r2.dim, 2);
        assert_eq!(r2.cellular_class(), Some(TargetCell::Two));

        let zero = on(FacePoset::simplex(1), b.clone(), TargetCell::Zero);
        assert_eq!(fiber_product(&zero, &m2).unwrap(), None);

        let under = ModuliAction { dim: 0, ..m2 };
        assert!(matches!(
            fiber_product(&DeltaChain::point(b), &under),
            Err(StrataError::DimensionUnderflow { dim: -2 })
        ));
    }

    #[test]
    fn constant_moduli_act_as_identity() {
        for t in [pt(), sphere(1)] {
            let m = ModuliAction::constant(&t);
            for g in DeltaChain::generators(&t) {
                let r = fiber_product(&g, &m).unwrap().unwrap();
                assert_eq!(r.dim, g.dim);
                assert_eq!(r.cellular_class(), g.cellular_class());
            }
        }
    }

    #[test]
    fn chain_groups_see_the_homology_of_the_locus() {
        assert_eq!(chain_group_betti(&pt()), vec![1]);
        assert_eq!(chain_group_betti(&sphere(0)), vec![1, 0, 1]);
    }

    proptest! {
        #[test]
        fn boundary_squares_to_zero(seed in any::<u64>(), n in 3usize..8, d in 0usize..4, k in 1usize..6) {
            prop_assume!(d < n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_simplicial_poset(&mut rng, n, d, k);
            let c = on(p.clone(), pt(), TargetCell::Zero);
            prop_assert!(ChainSum(vec![c]).boundary().boundary().is_zero());
            let (faces, covers) = drop_random_cover(&mut rng, &p);
            if let Ok(q) = FacePoset::new(&faces, &covers) {
                let c = on(q, pt(), TargetCell::Zero);
                prop_assert!(ChainSum(vec![c]).boundary().boundary().is_zero());
            }
        }
    }
}
