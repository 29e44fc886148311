//! Brute-force verifiers that share nothing with the shooting pipeline: a
//! cubical Conley index from a grid outer approximation of the time-τ map,
//! cellular homology of finite CW models, and Borel homology of free
//! Pin(2)-complexes through their simplicial quotients.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::f2::F2Matrix;
use crate::fields::QuasiGradientField;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invariant set touches the boundary of the box at cube {cube:?}")]
    NotIsolating { cube: Vec<usize> },
    #[error("∂∂ ≠ 0 in degree {degree}")]
    DSquaredNonzero { degree: usize },
    #[error("boundary matrix in degree {degree} is {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    ShapeMismatch {
        degree: usize,
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    #[error("degree cap {cap} is below the quotient dimension {dim}")]
    TruncationTooLow { cap: usize, dim: usize },
    #[error("involution is not free and simplicial: {reason}")]
    BadInvolution { reason: String },
    #[error("box and resolution are invalid: {reason}")]
    InvalidGrid { reason: String },
}

/// Ranks of a sparse F₂ boundary map by column reduction. Columns are sorted
/// row indices.
fn sparse_rank(mut cols: Vec<Vec<u32>>) -> usize {
    let mut pivot_of: HashMap<u32, usize> = HashMap::new();
    let mut rank = 0;
    for j in 0..cols.len() {
        while let Some(&low) = cols[j].last() {
            match pivot_of.get(&low) {
                Some(&k) => cols[j] = sym_diff(&cols[j], &cols[k]),
                None => {
                    pivot_of.insert(low, j);
                    rank += 1;
                    break;
                }
            }
        }
    }
    rank
}

fn sym_diff(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut k) = (0, 0);
    while i < a.len() && k < b.len() {
        match a[i].cmp(&b[k]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[k]);
                k += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                k += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[k..]);
    out
}

/// Betti numbers of a chain complex given by cell counts and sparse boundary
/// columns `boundary[k][j]` (faces in degree `k − 1` of cell `j` of degree
/// `k`).
fn sparse_betti(counts: &[usize], boundary: Vec<Vec<Vec<u32>>>) -> Vec<usize> {
    let ranks: Vec<usize> = boundary.into_iter().map(sparse_rank).collect();
    (0..counts.len())
        .map(|k| counts[k] - ranks[k] - ranks.get(k + 1).copied().unwrap_or(0))
        .collect()
}

/// A finite CW complex over F₂: cell counts by dimension and the cellular
/// boundary matrices `∂_k : C_k → C_{k−1}` for `k ≥ 1`.
#[derive(Debug, Clone, Serialize)]
pub struct CwComplex {
    pub name: String,
    pub cells: Vec<usize>,
    pub boundaries: Vec<F2Matrix>,
}

impl CwComplex {
    pub fn point() -> Self {
        CwComplex {
            name: "point".into(),
            cells: vec![1],
            boundaries: vec![],
        }
    }

    /// One 0-cell and one `n`-cell.
    pub fn sphere(n: usize) -> Self {
        let mut cells = vec![0; n + 1];
        cells[0] += 1;
        cells[n] += 1;
        let boundaries = (1..=n).map(|k| F2Matrix::zeros(cells[k - 1], cells[k])).collect();
        CwComplex {
            name: format!("S^{n}"),
            cells,
            boundaries,
        }
    }

    /// One cell in each dimension up to `n`; `∂e_k = (1 + (−1)^k) e_{k−1}`.
    pub fn real_projective(n: usize) -> Self {
        let boundaries = (1..=n)
            .map(|k| F2Matrix::from_rows(&[vec![if k % 2 == 0 { 2 } else { 0 }]]))
            .collect();
        CwComplex {
            name: format!("RP^{n}"),
            cells: vec![1; n + 1],
            boundaries,
        }
    }

    /// One 0-cell, edges `a, b` and the 2-cell `aba⁻¹b⁻¹`.
    pub fn torus() -> Self {
        CwComplex {
            name: "T^2".into(),
            cells: vec![1, 2, 1],
            boundaries: vec![F2Matrix::zeros(1, 2), F2Matrix::zeros(2, 1)],
        }
    }
}

/// Betti numbers of a CW complex, after checking shapes and `∂² = 0`.
pub fn cellular_homology(cw: &CwComplex) -> Result<Vec<usize>, OracleError> {
    let top = cw.cells.len();
    if cw.boundaries.len() + 1 != top.max(1) {
        return Err(OracleError::ShapeMismatch {
            degree: cw.boundaries.len(),
            rows: 0,
            cols: 0,
            expected_rows: 0,
            expected_cols: 0,
        });
    }
    for (i, d) in cw.boundaries.iter().enumerate() {
        let k = i + 1;
        if d.rows() != cw.cells[k - 1] || d.cols() != cw.cells[k] {
            return Err(OracleError::ShapeMismatch {
                degree: k,
                rows: d.rows(),
                cols: d.cols(),
                expected_rows: cw.cells[k - 1],
                expected_cols: cw.cells[k],
            });
        }
        if i > 0 && !cw.boundaries[i - 1].mul(d).is_zero() {
            return Err(OracleError::DSquaredNonzero { degree: k });
        }
    }
    let ranks: Vec<usize> = cw.boundaries.iter().map(F2Matrix::rank).collect();
    Ok((0..top)
        .map(|k| {
            let out = if k == 0 { 0 } else { ranks[k - 1] };
            let inc = ranks.get(k).copied().unwrap_or(0);
            cw.cells[k] - out - inc
        })
        .collect())
}

/// A simplicial complex given by its maximal simplices; every face is
/// included. Simplices are sorted vertex lists.
#[derive(Debug, Clone, Serialize)]
pub struct SimplicialComplex {
    /// `simplices[k]` lists the `k`-simplices in sorted order.
    pub simplices: Vec<Vec<Vec<usize>>>,
}

impl SimplicialComplex {
    pub fn from_maximal(maximal: &[Vec<usize>]) -> Self {
        let mut by_dim: Vec<BTreeSet<Vec<usize>>> = Vec::new();
        for s in maximal {
            let mut s = s.clone();
            s.sort_unstable();
            s.dedup();
            let n = s.len();
            for mask in 1u32..(1 << n) {
                let face: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| s[i]).collect();
                let k = face.len() - 1;
                if by_dim.len() <= k {
                    by_dim.resize(k + 1, BTreeSet::new());
                }
                by_dim[k].insert(face);
            }
        }
        SimplicialComplex {
            simplices: by_dim.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.simplices.len().saturating_sub(1)
    }

    fn position(&self, s: &[usize]) -> Option<usize> {
        self.simplices.get(s.len().checked_sub(1)?)?.binary_search_by(|t| t.as_slice().cmp(s)).ok()
    }

    /// `∂_k` as a dense matrix.
    pub fn boundary(&self, k: usize) -> F2Matrix {
        let mut d = F2Matrix::zeros(self.simplices[k - 1].len(), self.simplices[k].len());
        for (j, s) in self.simplices[k].iter().enumerate() {
            for skip in 0..s.len() {
                let face: Vec<usize> = s.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, &v)| v).collect();
                d.flip(self.position(&face).expect("faces are present"), j);
            }
        }
        d
    }

    pub fn as_cw(&self, name: &str) -> CwComplex {
        CwComplex {
            name: name.into(),
            cells: self.simplices.iter().map(Vec::len).collect(),
            boundaries: (1..self.simplices.len()).map(|k| self.boundary(k)).collect(),
        }
    }

    /// Boundary of the icosahedron: 12 vertices, antipodal pairs `v` and
    /// `v + 6`.
    pub fn icosahedron() -> Self {
        let tris = [
            [0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 5], [0, 5, 1],
            [1, 5, 9], [1, 9, 10], [1, 10, 2], [2, 10, 11], [2, 11, 3],
            [3, 11, 7], [3, 7, 4], [4, 7, 8], [4, 8, 5], [5, 8, 9],
            [6, 7, 11], [6, 8, 7], [6, 9, 8], [6, 10, 9], [6, 11, 10],
        ];
        SimplicialComplex::from_maximal(&tris.iter().map(|t| t.to_vec()).collect::<Vec<_>>())
    }
}

/// A free simplicial involution: the `S¹`-quotient of a free Pin(2)-space
/// with the residual action of `j`.
#[derive(Debug, Clone, Serialize)]
pub struct FreeInvolution {
    pub name: String,
    pub complex: SimplicialComplex,
    /// Image of each vertex.
    pub vertex_map: Vec<usize>,
}

impl FreeInvolution {
    /// `S(H)/S¹ = S²` with the antipodal map, on the icosahedron.
    pub fn s_h() -> Self {
        FreeInvolution {
            name: "S(H)".into(),
            complex: SimplicialComplex::icosahedron(),
            vertex_map: (0..12).map(|v| (v + 6) % 12).collect(),
        }
    }

    /// `Pin(2)/S¹`: two points swapped by `j`.
    pub fn pin2() -> Self {
        FreeInvolution {
            name: "Pin(2)".into(),
            complex: SimplicialComplex::from_maximal(&[vec![0], vec![1]]),
            vertex_map: vec![1, 0],
        }
    }
}

/// Borel homology of a free Pin(2)-space with the `Q` and `V` actions, up to
/// a degree cap.
#[derive(Debug, Clone, Serialize)]
pub struct BorelHomology {
    pub name: String,
    pub cap: usize,
    pub betti: Vec<usize>,
    /// Rank of `Q : H_k → H_{k−1}`, keyed by `k`.
    pub q_ranks: BTreeMap<usize, usize>,
    /// Rank of `V : H_k → H_{k−4}`, keyed by `k`.
    pub v_ranks: BTreeMap<usize, usize>,
    pub q_cubed_zero: bool,
}

/// For a free action, Borel homology is the homology of the quotient
/// `X/Pin(2) = (X/S¹)/j`. `Q` is the cap product with `w₁` of the double
/// cover `X/S¹ → X/Pin(2)`. `V` caps with a 4-dimensional class and is
/// zero on quotients of dimension below four, the only ones modelled here.
pub fn borel_homology(x: &FreeInvolution, cap: usize) -> Result<BorelHomology, OracleError> {
    let k = &x.complex;
    let tau = &x.vertex_map;
    let bad = |reason: String| OracleError::BadInvolution { reason };
    if tau.len() != k.simplices[0].len() {
        return Err(bad(format!("vertex map has {} entries for {} vertices", tau.len(), k.simplices[0].len())));
    }
    for (v, &w) in tau.iter().enumerate() {
        if w == v || tau.get(w) != Some(&v) {
            return Err(bad(format!("vertex {v} is fixed or not swapped back")));
        }
    }
    // Orbit representative: the smaller vertex.
    let rep = |v: usize| v.min(tau[v]);
    let mut quotient_max = Vec::new();
    for dim in &k.simplices {
        for s in dim {
            let image: BTreeSet<usize> = s.iter().map(|&v| rep(v)).collect();
            if image.len() != s.len() {
                return Err(bad(format!("simplex {s:?} meets its own orbit")));
            }
            let mapped: Vec<usize> = s.iter().map(|&v| tau[v]).collect();
            let mut sorted = mapped.clone();
            sorted.sort_unstable();
            if k.position(&sorted).is_none() {
                return Err(bad(format!("image of {s:?} is not a simplex")));
            }
            quotient_max.push(image.into_iter().collect::<Vec<_>>());
        }
    }
    let q = SimplicialComplex::from_maximal(&quotient_max);
    // Each quotient simplex must lift to exactly two simplices.
    let orbits: usize = k.simplices.iter().map(Vec::len).sum::<usize>() / 2;
    if q.simplices.iter().map(Vec::len).sum::<usize>() != orbits {
        return Err(bad("quotient is not a simplicial complex".into()));
    }
    let dim = q.dim();
    if cap < dim {
        return Err(OracleError::TruncationTooLow { cap, dim });
    }
    // w₁(ab) = 1 when the edge from the lift of a runs to the other lift of b.
    let w1 = |a: usize, b: usize| -> bool {
        let mut e = vec![a, b];
        e.sort_unstable();
        k.position(&e).is_none()
    };
    let cw = q.as_cw(&x.name);
    let betti = cellular_homology(&cw)?;
    let mut q_ranks = BTreeMap::new();
    let mut cap_maps: BTreeMap<usize, F2Matrix> = BTreeMap::new();
    for kdeg in 1..=dim {
        // σ ⌢ w₁ = w₁(v_{k−1} v_k) · [v_0 … v_{k−1}].
        let mut m = F2Matrix::zeros(q.simplices[kdeg - 1].len(), q.simplices[kdeg].len());
        for (j, s) in q.simplices[kdeg].iter().enumerate() {
            if w1(s[kdeg - 1], s[kdeg]) {
                m.flip(q.position(&s[..kdeg]).expect("front face"), j);
            }
        }
        cap_maps.insert(kdeg, m);
    }
    let hb = HomologyBasis::new(&q);
    for kdeg in 1..=dim {
        q_ranks.insert(kdeg, hb.induced_rank(kdeg, &cap_maps[&kdeg]));
    }
    let mut q_cubed_zero = true;
    for kdeg in 3..=dim {
        let m = cap_maps[&(kdeg - 2)].mul(&cap_maps[&(kdeg - 1)]).mul(&cap_maps[&kdeg]);
        if hb.induced_rank_into(kdeg, kdeg - 3, &m) > 0 {
            q_cubed_zero = false;
        }
    }
    let v_ranks = (4..=dim).map(|k| (k, 0)).collect();
    let mut betti = betti;
    betti.resize(cap + 1, 0);
    Ok(BorelHomology {
        name: x.name.clone(),
        cap,
        betti,
        q_ranks,
        v_ranks,
        q_cubed_zero,
    })
}

/// Homology bases of a simplicial complex, for induced maps.
struct HomologyBasis {
    cycles: Vec<Vec<Vec<bool>>>,
    bounds: Vec<Vec<Vec<bool>>>,
}

impl HomologyBasis {
    fn new(c: &SimplicialComplex) -> Self {
        let top = c.simplices.len();
        let mut cycles = Vec::new();
        let mut bounds = Vec::new();
        for k in 0..top {
            let n = c.simplices[k].len();
            let z: Vec<Vec<bool>> = if k == 0 {
                (0..n).map(|i| (0..n).map(|j| i == j).collect()).collect()
            } else {
                c.boundary(k).kernel()
            };
            let b: Vec<Vec<bool>> = if k + 1 < top {
                let d = c.boundary(k + 1);
                (0..d.cols()).map(|j| d.column(j)).collect()
            } else {
                vec![]
            };
            let keep = crate::f2::independent_modulo(&b, &z);
            cycles.push(keep.into_iter().map(|i| z[i].clone()).collect());
            bounds.push(b);
        }
        HomologyBasis { cycles, bounds }
    }

    fn induced_rank(&self, k: usize, m: &F2Matrix) -> usize {
        self.induced_rank_into(k, k - 1, m)
    }

    fn induced_rank_into(&self, k: usize, t: usize, m: &F2Matrix) -> usize {
        let images: Vec<Vec<bool>> = self.cycles[k].iter().map(|z| m.mul_vec(z)).collect();
        crate::f2::independent_modulo(&self.bounds[t], &images).len()
    }
}

/// Grid parameters for [`grid_conley_index`].
#[derive(Debug, Clone, Serialize)]
pub struct GridOptions {
    /// Cubes per axis.
    pub resolution: usize,
    /// Time of the flow map; `None` picks it so typical points cross two
    /// cells.
    pub tau: Option<f64>,
    /// RK4 steps per flow map.
    pub steps: usize,
    /// Enlargement of each image box, in cells.
    pub margin: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            resolution: 24,
            tau: None,
            steps: 24,
            margin: 0.5,
        }
    }
}

/// Output of the grid oracle.
#[derive(Debug, Clone, Serialize)]
pub struct ConleyIndex {
    /// Reduced F₂ homology of `N′/L′`, by degree.
    pub betti: Vec<usize>,
    pub resolution: usize,
    pub tau: f64,
    /// Cubes meeting the manifold inside the box.
    pub phase_cubes: usize,
    /// Cubes of the combinatorial invariant set.
    pub invariant_cubes: usize,
    /// Cubes of the grown exit set.
    pub exit_cubes: usize,
}

struct Grid {
    n: usize,
    r: usize,
    lo: Vec<f64>,
    h: Vec<f64>,
}

impl Grid {
    fn count(&self) -> usize {
        self.r.pow(self.n as u32)
    }

    fn multi(&self, mut id: usize) -> Vec<usize> {
        let mut k = vec![0; self.n];
        for slot in k.iter_mut() {
            *slot = id % self.r;
            id /= self.r;
        }
        k
    }

    fn id(&self, k: &[i64]) -> Option<usize> {
        let mut id = 0;
        for i in (0..self.n).rev() {
            if k[i] < 0 || k[i] >= self.r as i64 {
                return None;
            }
            id = id * self.r + k[i] as usize;
        }
        Some(id)
    }

    fn corner(&self, k: &[i64], offsets: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.lo[i] + (k[i] as f64 + offsets[i]) * self.h[i]).collect()
    }

    /// Corners and center of cube `k` (which may lie outside the grid).
    fn probes(&self, k: &[i64]) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = (0..1usize << self.n)
            .map(|mask| {
                let off: Vec<f64> = (0..self.n).map(|i| (mask >> i & 1) as f64).collect();
                self.corner(k, &off)
            })
            .collect();
        out.push(self.corner(k, &vec![0.5; self.n]));
        out
    }

    fn cell_of(&self, x: &[f64]) -> Vec<i64> {
        (0..self.n).map(|i| ((x[i] - self.lo[i]) / self.h[i]).floor() as i64).collect()
    }

    fn neighbors(&self, k: &[i64]) -> Vec<Vec<i64>> {
        (0..3usize.pow(self.n as u32))
            .filter_map(|mut c| {
                let mut out = k.to_vec();
                let mut moved = false;
                for slot in out.iter_mut() {
                    let d = (c % 3) as i64 - 1;
                    c /= 3;
                    *slot += d;
                    moved |= d != 0;
                }
                moved.then_some(out)
            })
            .collect()
    }
}

/// Points of the manifold found in cube `k`: projections of its probes that
/// land in the (slightly enlarged) cube, or probes inside `{ρ ≤ 0}` when
/// there are no constraints.
fn points_in_cube(field: &QuasiGradientField, g: &Grid, k: &[i64]) -> Vec<Vec<f64>> {
    let m = &field.manifold;
    let slack = 1e-9;
    let inside = |x: &[f64]| {
        (0..g.n).all(|i| {
            let t = (x[i] - g.lo[i]) / g.h[i] - k[i] as f64;
            (-slack..=1.0 + slack).contains(&t)
        })
    };
    let mut probes = g.probes(k);
    if m.has_boundary() {
        // Stationary points on the boundary must be seen by their cube.
        let center = probes.last().expect("center probe").clone();
        if let Ok(b) = m.project_to_boundary(&center) {
            probes.push(b);
        }
    }
    let mut out = Vec::new();
    for p in probes {
        let q = if m.constraints.is_empty() {
            p
        } else {
            if m.distance_to_zero_set(&p) > 2.0 * g.h.iter().cloned().fold(0.0, f64::max) * (g.n as f64).sqrt() {
                continue;
            }
            match m.project(&p) {
                Ok(q) => q,
                Err(_) => continue,
            }
        };
        if inside(&q) && m.rho(&q).is_none_or(|r| r <= 1e-12) {
            out.push(q);
        }
    }
    out
}

fn flow_map(field: &QuasiGradientField, x: &[f64], tau: f64, steps: usize) -> Vec<f64> {
    let m = &field.manifold;
    let dt = tau / steps as f64;
    let rhs = |y: &DVector<f64>| -field.eval(y.as_slice());
    let mut y = DVector::from_column_slice(x);
    for _ in 0..steps {
        let k1 = rhs(&y);
        let k2 = rhs(&(&y + &k1 * (0.5 * dt)));
        let k3 = rhs(&(&y + &k2 * (0.5 * dt)));
        let k4 = rhs(&(&y + &k3 * dt));
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if !m.constraints.is_empty() {
            if let Ok(p) = m.project(y.as_slice()) {
                y = DVector::from_vec(p);
            }
        }
    }
    y.as_slice().to_vec()
}

/// Conley index of the maximal invariant set in a box, from a cubical outer
/// approximation of the time-τ map.
///
/// The combinatorial invariant set `S` is the set of cubes with both an
/// infinite forward and an infinite backward path. If a cube of `S` borders
/// the outside of the box where the manifold continues, the box is not
/// isolating. Otherwise the exit set `P₀` starts as `F(S)` outside `S` and is
/// grown forward inside the one-cube collar of `S`; the answer is the
/// homology of `(S ∪ P₀, P₀)`, which is the reduced homology of the
/// quotient.
pub fn grid_conley_index(
    field: &QuasiGradientField,
    bbox: &[(f64, f64)],
    opts: &GridOptions,
) -> Result<ConleyIndex, OracleError> {
    let n = field.manifold.ambient_dim;
    if bbox.len() != n || opts.resolution < 2 || bbox.iter().any(|(a, b)| !(b > a)) {
        return Err(OracleError::InvalidGrid {
            reason: format!("need {n} increasing intervals and at least 2 cubes per axis"),
        });
    }
    let g = Grid {
        n,
        r: opts.resolution,
        lo: bbox.iter().map(|b| b.0).collect(),
        h: bbox.iter().map(|b| (b.1 - b.0) / opts.resolution as f64).collect(),
    };
    let ids: Vec<usize> = (0..g.count()).collect();
    let samples: Vec<Vec<Vec<f64>>> = ids
        .par_iter()
        .map(|&id| {
            let k: Vec<i64> = g.multi(id).iter().map(|&v| v as i64).collect();
            points_in_cube(field, &g, &k)
        })
        .collect();
    let phase: Vec<bool> = samples.iter().map(|s| !s.is_empty()).collect();
    let phase_cubes = phase.iter().filter(|&&p| p).count();
    let tau = opts.tau.unwrap_or_else(|| {
        let mut speeds: Vec<f64> = samples.iter().flatten().map(|x| field.eval(x).norm()).filter(|s| *s > 0.0).collect();
        speeds.sort_by(f64::total_cmp);
        let hmax = g.h.iter().cloned().fold(0.0, f64::max);
        speeds.get(speeds.len() / 2).map_or(1.0, |s| 2.0 * hmax / s)
    });
    let margin: Vec<f64> = g.h.iter().map(|h| opts.margin * h).collect();
    let images: Vec<Vec<usize>> = ids
        .par_iter()
        .map(|&id| {
            if !phase[id] {
                return vec![];
            }
            let pts: Vec<Vec<f64>> = samples[id].iter().map(|x| flow_map(field, x, tau, opts.steps)).collect();
            let lo: Vec<f64> = (0..n).map(|i| pts.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min) - margin[i]).collect();
            let hi: Vec<f64> = (0..n).map(|i| pts.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max) + margin[i]).collect();
            let (a, b) = (g.cell_of(&lo), g.cell_of(&hi));
            let mut out = Vec::new();
            let span: Vec<i64> = (0..n).map(|i| b[i] - a[i] + 1).collect();
            let total: i64 = span.iter().product();
            for mut c in 0..total {
                let mut k = a.clone();
                for i in 0..n {
                    k[i] += c % span[i];
                    c /= span[i];
                }
                if let Some(t) = g.id(&k) {
                    if phase[t] {
                        out.push(t);
                    }
                }
            }
            out
        })
        .collect();
    let invariant = invariant_part(&images, &phase);
    // Isolation: no cube of S may border the part of the manifold outside the box.
    for id in 0..g.count() {
        if !invariant[id] {
            continue;
        }
        let k: Vec<i64> = g.multi(id).iter().map(|&v| v as i64).collect();
        for nb in g.neighbors(&k) {
            if g.id(&nb).is_none() && !points_in_cube(field, &g, &nb).is_empty() {
                return Err(OracleError::NotIsolating { cube: g.multi(id) });
            }
        }
    }
    let mut collar = vec![false; g.count()];
    for id in (0..g.count()).filter(|&i| invariant[i]) {
        let k: Vec<i64> = g.multi(id).iter().map(|&v| v as i64).collect();
        for nb in g.neighbors(&k) {
            if let Some(t) = g.id(&nb) {
                if phase[t] && !invariant[t] {
                    collar[t] = true;
                }
            }
        }
    }
    let mut exit = vec![false; g.count()];
    let mut stack: Vec<usize> = Vec::new();
    for id in (0..g.count()).filter(|&i| invariant[i]) {
        for &t in &images[id] {
            if collar[t] && !exit[t] {
                exit[t] = true;
                stack.push(t);
            }
        }
    }
    while let Some(id) = stack.pop() {
        for &t in &images[id] {
            if collar[t] && !exit[t] {
                exit[t] = true;
                stack.push(t);
            }
        }
    }
    let p1: Vec<usize> = (0..g.count()).filter(|&i| invariant[i] || exit[i]).collect();
    let p0: Vec<usize> = (0..g.count()).filter(|&i| exit[i]).collect();
    let betti = relative_cubical_homology(&g, &p1, &p0);
    Ok(ConleyIndex {
        betti,
        resolution: opts.resolution,
        tau,
        phase_cubes,
        invariant_cubes: invariant.iter().filter(|&&b| b).count(),
        exit_cubes: p0.len(),
    })
}

/// Cubes with an infinite forward and an infinite backward path.
fn invariant_part(images: &[Vec<usize>], phase: &[bool]) -> Vec<bool> {
    let n = images.len();
    let mut preds: Vec<Vec<usize>> = vec![vec![]; n];
    for (s, ts) in images.iter().enumerate() {
        for &t in ts {
            preds[t].push(s);
        }
    }
    let prune = |succ: &[Vec<usize>], pred: &[Vec<usize>]| -> Vec<bool> {
        let mut alive = phase.to_vec();
        let mut out_deg: Vec<usize> = (0..n).map(|i| succ[i].iter().filter(|&&t| alive[t]).count()).collect();
        let mut stack: Vec<usize> = (0..n).filter(|&i| alive[i] && out_deg[i] == 0).collect();
        while let Some(i) = stack.pop() {
            if !alive[i] {
                continue;
            }
            alive[i] = false;
            for &p in &pred[i] {
                if alive[p] {
                    out_deg[p] -= 1;
                    if out_deg[p] == 0 {
                        stack.push(p);
                    }
                }
            }
        }
        alive
    };
    let fwd = prune(images, &preds);
    let bwd = prune(&preds, images);
    (0..n).map(|i| fwd[i] && bwd[i]).collect()
}

/// `H(|P₁|, |P₀|)` over F₂ for unions of closed cubes, via elementary cells
/// in doubled coordinates.
fn relative_cubical_homology(g: &Grid, p1: &[usize], p0: &[usize]) -> Vec<usize> {
    let faces = |ids: &[usize]| -> BTreeSet<Vec<u32>> {
        let mut out = BTreeSet::new();
        for &id in ids {
            let k = g.multi(id);
            for mut c in 0..3usize.pow(g.n as u32) {
                let mut cell = Vec::with_capacity(g.n);
                for &ki in &k {
                    cell.push((2 * ki + c % 3) as u32);
                    c /= 3;
                }
                out.insert(cell);
            }
        }
        out
    };
    let all = faces(p1);
    let sub = faces(p0);
    let rel: Vec<&Vec<u32>> = all.iter().filter(|c| !sub.contains(*c)).collect();
    let dim = |c: &[u32]| c.iter().filter(|&&x| x % 2 == 1).count();
    let mut by_dim: Vec<Vec<&Vec<u32>>> = vec![vec![]; g.n + 1];
    for c in rel {
        by_dim[dim(c)].push(c);
    }
    let index: Vec<HashMap<&Vec<u32>, u32>> = by_dim
        .iter()
        .map(|cs| cs.iter().enumerate().map(|(i, &c)| (c, i as u32)).collect())
        .collect();
    let mut boundary: Vec<Vec<Vec<u32>>> = vec![vec![]];
    for k in 1..=g.n {
        let cols = by_dim[k]
            .iter()
            .map(|c| {
                let mut col = Vec::new();
                for i in 0..g.n {
                    if c[i] % 2 == 1 {
                        for d in [c[i] - 1, c[i] + 1] {
                            let mut f = (*c).clone();
                            f[i] = d;
                            if let Some(&j) = index[k - 1].get(&f) {
                                col.push(j);
                            }
                        }
                    }
                }
                col.sort_unstable();
                col
            })
            .collect();
        boundary.push(cols);
    }
    let counts: Vec<usize> = by_dim.iter().map(Vec::len).collect();
    let mut betti = sparse_betti(&counts, boundary);
    while betti.len() > 1 && betti.last() == Some(&0) {
        betti.pop();
    }
    betti
}

/// Betti vectors agree up to trailing zeros.
pub fn same_betti(a: &[usize], b: &[usize]) -> bool {
    let n = a.len().max(b.len());
    (0..n).all(|k| a.get(k).copied().unwrap_or(0) == b.get(k).copied().unwrap_or(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_and_dense_ranks_agree() {
        let m = F2Matrix::from_rows(&[vec![1, 1, 0, 1], vec![0, 1, 1, 1], vec![1, 0, 1, 0]]);
        let cols: Vec<Vec<u32>> = (0..4)
            .map(|j| (0..3).filter(|&i| m.get(i, j)).map(|i| i as u32).collect())
            .collect();
        assert_eq!(sparse_rank(cols), m.rank());
    }

    #[test]
    fn trailing_zeros_do_not_matter() {
        assert!(same_betti(&[1], &[1, 0, 0]));
        assert!(!same_betti(&[1, 1], &[1]));
    }
}
