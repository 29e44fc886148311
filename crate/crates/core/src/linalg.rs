//! Dense F₂ matrices and the handful of real linear-algebra helpers the
//! numerics need (ranks, null spaces and spectra via SVD / Schur).

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{Complex, DMatrix, DVector};

const WORD: usize = 64;

/// A packed vector over F₂.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitVec {
    len: usize,
    words: Vec<u64>,
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        BitVec {
            len,
            words: vec![0; len.div_ceil(WORD)],
        }
    }

    pub fn unit(len: usize, i: usize) -> Self {
        let mut v = Self::zeros(len);
        v.set(i, true);
        v
    }

    pub fn from_indices(len: usize, ones: impl IntoIterator<Item = usize>) -> Self {
        let mut v = Self::zeros(len);
        for i in ones {
            v.flip(i);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i / WORD] >> (i % WORD) & 1 == 1
    }

    pub fn set(&mut self, i: usize, b: bool) {
        debug_assert!(i < self.len);
        let m = 1u64 << (i % WORD);
        if b {
            self.words[i / WORD] |= m;
        } else {
            self.words[i / WORD] &= !m;
        }
    }

    pub fn flip(&mut self, i: usize) {
        debug_assert!(i < self.len);
        self.words[i / WORD] ^= 1u64 << (i % WORD);
    }

    pub fn xor_assign(&mut self, o: &BitVec) {
        debug_assert_eq!(self.len, o.len);
        for (a, b) in self.words.iter_mut().zip(&o.words) {
            *a ^= b;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Lowest set index.
    pub fn first_one(&self) -> Option<usize> {
        for (k, w) in self.words.iter().enumerate() {
            if *w != 0 {
                return Some(k * WORD + w.trailing_zeros() as usize);
            }
        }
        None
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(k, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let t = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(k * WORD + t)
            })
        })
    }

    pub fn dot(&self, o: &BitVec) -> bool {
        let mut acc = 0u32;
        for (a, b) in self.words.iter().zip(&o.words) {
            acc ^= (a & b).count_ones() & 1;
        }
        acc == 1
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            write!(f, "{}", if self.get(i) { '1' } else { '0' })?;
        }
        Ok(())
    }
}

/// Dense F₂ matrix stored by rows.
///
/// Entry `(r, c)` of a differential is the coefficient of generator `r` in the
/// image of generator `c`.
#[derive(Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BitVec>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        BitMatrix {
            rows,
            cols,
            data: vec![BitVec::zeros(cols); rows],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                if f(r, c) {
                    m.set(r, c, true);
                }
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r].get(c)
    }

    pub fn set(&mut self, r: usize, c: usize, b: bool) {
        self.data[r].set(c, b)
    }

    pub fn flip(&mut self, r: usize, c: usize) {
        self.data[r].flip(c)
    }

    pub fn row(&self, r: usize) -> &BitVec {
        &self.data[r]
    }

    pub fn column(&self, c: usize) -> BitVec {
        let mut v = BitVec::zeros(self.rows);
        for r in 0..self.rows {
            if self.get(r, c) {
                v.set(r, true);
            }
        }
        v
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(BitVec::is_zero)
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().map(BitVec::count_ones).sum()
    }

    pub fn transpose(&self) -> BitMatrix {
        let mut t = BitMatrix::zeros(self.cols, self.rows);
        for (r, row) in self.data.iter().enumerate() {
            for c in row.ones() {
                t.set(c, r, true);
            }
        }
        t
    }

    pub fn add(&self, o: &BitMatrix) -> BitMatrix {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols), "shape mismatch");
        let mut m = self.clone();
        for (a, b) in m.data.iter_mut().zip(&o.data) {
            a.xor_assign(b);
        }
        m
    }

    pub fn mul(&self, o: &BitMatrix) -> BitMatrix {
        assert_eq!(self.cols, o.rows, "shape mismatch");
        let mut m = BitMatrix::zeros(self.rows, o.cols);
        for (r, row) in self.data.iter().enumerate() {
            for k in row.ones() {
                m.data[r].xor_assign(&o.data[k]);
            }
        }
        m
    }

    pub fn apply(&self, v: &BitVec) -> BitVec {
        assert_eq!(self.cols, v.len());
        let mut out = BitVec::zeros(self.rows);
        for (r, row) in self.data.iter().enumerate() {
            if row.dot(v) {
                out.set(r, true);
            }
        }
        out
    }

    /// Rows `rs` and columns `cs` as a new matrix.
    pub fn submatrix(&self, rs: &[usize], cs: &[usize]) -> BitMatrix {
        BitMatrix::from_fn(rs.len(), cs.len(), |i, j| self.get(rs[i], cs[j]))
    }

    /// 2×2 block matrix `[[a, b], [c, d]]`.
    pub fn block2(a: &BitMatrix, b: &BitMatrix, c: &BitMatrix, d: &BitMatrix) -> BitMatrix {
        assert_eq!(a.rows, b.rows);
        assert_eq!(c.rows, d.rows);
        assert_eq!(a.cols, c.cols);
        assert_eq!(b.cols, d.cols);
        let mut m = BitMatrix::zeros(a.rows + c.rows, a.cols + b.cols);
        for (src, r0, c0) in [(a, 0, 0), (b, 0, a.cols), (c, a.rows, 0), (d, a.rows, a.cols)] {
            for r in 0..src.rows {
                for cc in src.data[r].ones() {
                    m.set(r0 + r, c0 + cc, true);
                }
            }
        }
        m
    }

    pub fn rank(&self) -> usize {
        Echelon::from_vectors(self.transpose().data).rank()
    }

    /// Basis of the kernel `{x : A x = 0}`.
    pub fn kernel(&self) -> Vec<BitVec> {
        // Column-reduce while tracking the combination of original columns.
        let n = self.cols;
        let mut cols: Vec<(BitVec, BitVec)> = (0..n)
            .map(|c| (self.column(c), BitVec::unit(n, c)))
            .collect();
        let mut pivots: BTreeMap<usize, usize> = BTreeMap::new();
        let mut kernel = Vec::new();
        for j in 0..n {
            loop {
                match cols[j].0.first_one() {
                    None => {
                        kernel.push(cols[j].1.clone());
                        break;
                    }
                    Some(p) => match pivots.get(&p) {
                        Some(&k) => {
                            let (a, b) = cols[k].clone();
                            cols[j].0.xor_assign(&a);
                            cols[j].1.xor_assign(&b);
                        }
                        None => {
                            pivots.insert(p, j);
                            break;
                        }
                    },
                }
            }
        }
        kernel
    }

    /// The matrix with the listed rows (by index) in order.
    pub fn from_rows(cols: usize, rows: Vec<BitVec>) -> BitMatrix {
        for r in &rows {
            assert_eq!(r.len(), cols);
        }
        BitMatrix {
            rows: rows.len(),
            cols,
            data: rows,
        }
    }

    pub fn from_columns(rows: usize, columns: &[BitVec]) -> BitMatrix {
        let mut m = BitMatrix::zeros(rows, columns.len());
        for (c, v) in columns.iter().enumerate() {
            assert_eq!(v.len(), rows);
            for r in v.ones() {
                m.set(r, c, true);
            }
        }
        m
    }
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMatrix {}x{}", self.rows, self.cols)?;
        for r in &self.data {
            writeln!(f, "  {r:?}")?;
        }
        Ok(())
    }
}

/// Incrementally maintained reduced basis of a subspace of F₂ⁿ, pivoting on
/// the lowest set index.
#[derive(Clone, Debug, Default)]
pub struct Echelon {
    basis: BTreeMap<usize, BitVec>,
}

impl Echelon {
    pub fn from_vectors(vs: impl IntoIterator<Item = BitVec>) -> Self {
        let mut e = Echelon::default();
        for v in vs {
            e.insert(v);
        }
        e
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn contains(&self, v: &BitVec) -> bool {
        let mut v = v.clone();
        while let Some(p) = v.first_one() {
            match self.basis.get(&p) {
                Some(b) => v.xor_assign(b),
                None => return false,
            }
        }
        true
    }

    /// Insert `v`; returns true if it enlarged the span.
    pub fn insert(&mut self, mut v: BitVec) -> bool {
        while let Some(p) = v.first_one() {
            match self.basis.get(&p) {
                Some(b) => v.xor_assign(b),
                None => {
                    self.basis.insert(p, v);
                    return true;
                }
            }
        }
        false
    }
}

/// Graded F₂ homology of a total differential of degree −1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GradedHomology {
    pub betti: BTreeMap<i32, usize>,
    /// Cycle representatives, one per Betti number, as vectors over all generators.
    pub representatives: BTreeMap<i32, Vec<BitVec>>,
}

impl GradedHomology {
    pub fn betti_at(&self, k: i32) -> usize {
        self.betti.get(&k).copied().unwrap_or(0)
    }

    /// Betti numbers listed from degree `lo` to `hi` inclusive.
    pub fn betti_range(&self, lo: i32, hi: i32) -> Vec<usize> {
        (lo..=hi).map(|k| self.betti_at(k)).collect()
    }

    pub fn total_rank(&self) -> usize {
        self.betti.values().sum()
    }
}

/// Homology of `d` (square, over all generators) where generator `i` sits in
/// degree `degrees[i]`. Only entries lowering degree by exactly one are read.
pub fn graded_homology(d: &BitMatrix, degrees: &[i32]) -> GradedHomology {
    let n = degrees.len();
    assert_eq!((d.nrows(), d.ncols()), (n, n));
    let mut by_deg: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, &k) in degrees.iter().enumerate() {
        by_deg.entry(k).or_default().push(i);
    }
    let mut betti = BTreeMap::new();
    let mut reps = BTreeMap::new();
    for (&k, gens) in &by_deg {
        let empty = Vec::new();
        let lower = by_deg.get(&(k - 1)).unwrap_or(&empty);
        let upper = by_deg.get(&(k + 1)).unwrap_or(&empty);
        let dk = d.submatrix(lower, gens);
        let cycles: Vec<BitVec> = dk
            .kernel()
            .into_iter()
            .map(|z| BitVec::from_indices(n, z.ones().map(|j| gens[j])))
            .collect();
        let mut span = Echelon::from_vectors(upper.iter().map(|&j| d.column(j)));
        let mut kreps = Vec::new();
        for z in cycles {
            if span.insert(z.clone()) {
                kreps.push(z);
            }
        }
        if !kreps.is_empty() {
            betti.insert(k, kreps.len());
            reps.insert(k, kreps);
        }
    }
    GradedHomology {
        betti,
        representatives: reps,
    }
}

/// Largest singular value ratio threshold used for numerical rank decisions.
pub const RANK_REL_TOL: f64 = 1e-6;

/// Thin singular value decomposition `m = U diag(σ) Vᵀ` by one-sided Jacobi
/// rotations, with `σ` sorted descending. `U` is `r × k`, `V` is `c × k` for
/// `k = min(r, c)`; columns of `U` belonging to zero singular values are zero.
///
/// nalgebra's bidiagonal SVD loses accuracy on rank-deficient input, which is
/// exactly where rank decisions are made.
pub fn svd(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (r, c) = m.shape();
    if r < c {
        let (u, s, v) = svd(&m.transpose());
        return (v, s, u);
    }
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(c, c);
    for _sweep in 0..60 {
        let mut rotated = false;
        for i in 0..c {
            for j in i + 1..c {
                let alpha = a.column(i).norm_squared();
                let beta = a.column(j).norm_squared();
                let gamma = a.column(i).dot(&a.column(j));
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for mat in [&mut a, &mut v] {
                    for k in 0..mat.nrows() {
                        let (x, y) = (mat[(k, i)], mat[(k, j)]);
                        mat[(k, i)] = cs * x - sn * y;
                        mat[(k, j)] = sn * x + cs * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..c).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let mut u = DMatrix::zeros(r, c);
    let mut vs = DMatrix::zeros(c, c);
    let mut sv = DVector::zeros(c);
    for (k, &j) in order.iter().enumerate() {
        sv[k] = norms[j];
        if norms[j] > 0.0 {
            u.set_column(k, &(a.column(j) / norms[j]));
        }
        vs.set_column(k, &v.column(j));
    }
    (u, sv, vs)
}

/// Numerical rank: singular values above `rel_tol · σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = svd(m).1;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel_tol * smax).count()
}

/// Orthonormal basis (as columns) of the numerical null space of `m`.
pub fn null_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // Pad to at least square so the decomposition returns a full right basis.
    let rows = m.nrows().max(n);
    let mut a = DMatrix::zeros(rows, n);
    a.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let (_, sv, v) = svd(&a);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..sv.len())
        .filter(|&i| smax == 0.0 || sv[i] <= rel_tol * smax)
        .collect();
    DMatrix::from_fn(n, keep.len(), |r, c| v[(r, keep[c])])
}

/// Orthonormal basis (columns) of the column span of `m`.
pub fn column_span(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let (u, sv, _) = svd(m);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..sv.len())
        .filter(|&i| smax > 0.0 && sv[i] > rel_tol * smax)
        .collect();
    DMatrix::from_fn(m.nrows(), keep.len(), |r, c| u[(r, keep[c])])
}

/// Moore–Penrose pseudo-inverse with relative cutoff.
pub fn pinv(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    if m.is_empty() {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let (u, sv, v) = svd(m);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for k in 0..sv.len() {
        if sv[k] > rel_tol * smax && sv[k] > 0.0 {
            out += v.column(k) * u.column(k).transpose() / sv[k];
        }
    }
    out
}

/// Eigenvalues of a general real square matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.clone().complex_eigenvalues().iter().cloned().collect()
}

/// Symmetric eigen-decomposition with eigenvalues sorted ascending.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let e = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| e.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &e.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Orthonormal completion: columns spanning the orthogonal complement of `q`'s columns in Rⁿ.
pub fn orthogonal_complement(q: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    null_space(&q.transpose(), rel_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(rows: &[&str]) -> BitMatrix {
        let cols = rows[0].len();
        BitMatrix::from_fn(rows.len(), cols, |r, c| rows[r].as_bytes()[c] == b'1')
    }

    proptest! {
        #[test]
        fn svd_reconstructs_rank_deficient(
            r in 1usize..6, c in 1usize..6, k in 1usize..4,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let k = k.min(r).min(c);
            let a = DMatrix::from_fn(r, k, |_, _| rng.gen_range(-1.0..1.0));
            let b = DMatrix::from_fn(k, c, |_, _| rng.gen_range(-1.0..1.0));
            let m = a * b;
            let (u, s, v) = svd(&m);
            let rec = &u * DMatrix::from_diagonal(&s) * v.transpose();
            prop_assert!((rec - &m).norm() < 1e-12 * (1.0 + m.norm()));
            prop_assert!(numerical_rank(&m, 1e-9) <= k);
        }
    }

    #[test]
    fn rank_and_kernel() {
        let m = mat(&["110", "011", "101"]);
        assert_eq!(m.rank(), 2);
        let k = m.kernel();
        assert_eq!(k.len(), 1);
        assert!(m.apply(&k[0]).is_zero());
    }

    #[test]
    fn circle_homology() {
        // Two vertices a,b and two edges e,f both from a to b.
        let degrees = [0, 0, 1, 1];
        let mut d = BitMatrix::zeros(4, 4);
        for e in [2, 3] {
            d.set(0, e, true);
            d.set(1, e, true);
        }
        let h = graded_homology(&d, &degrees);
        assert_eq!(h.betti_range(0, 1), vec![1, 1]);
        let z = &h.representatives[&1][0];
        assert!(d.apply(z).is_zero());
    }

    #[test]
    fn block_assembly() {
        let a = BitMatrix::identity(1);
        let b = mat(&["11"]);
        let c = mat(&["1", "0"]);
        let d = BitMatrix::zeros(2, 2);
        let m = BitMatrix::block2(&a, &b, &c, &d);
        assert_eq!(m, mat(&["111", "100", "000"]));
    }

    #[test]
    fn real_null_space_and_rank() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(numerical_rank(&m, RANK_REL_TOL), 2);
        let k = null_space(&m, RANK_REL_TOL);
        assert_eq!(k.ncols(), 1);
        assert!((k[(2, 0)].abs() - 1.0).abs() < 1e-12);
        let p = pinv(&m, RANK_REL_TOL);
        assert!((&m * &p - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn eigen_helpers() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let ev = eigenvalues(&m);
        assert!(ev.iter().all(|z| (z.im.abs() - 1.0).abs() < 1e-12));
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let (vals, _) = sym_eigen(&s);
        assert!((vals[0] - 1.0).abs() < 1e-12 && (vals[1] - 3.0).abs() < 1e-12);
    }

    fn arb_matrix() -> impl Strategy<Value = BitMatrix> {
        (1usize..12, 1usize..12, any::<u64>()).prop_map(|(r, c, seed)| {
            let mut s = seed;
            BitMatrix::from_fn(r, c, |_, _| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                s & 1 == 1
            })
        })
    }

    proptest! {
        #[test]
        fn rank_nullity(m in arb_matrix()) {
            let k = m.kernel();
            prop_assert_eq!(m.rank() + k.len(), m.ncols());
            for v in &k {
                prop_assert!(m.apply(v).is_zero());
            }
            prop_assert_eq!(m.rank(), m.transpose().rank());
        }

        #[test]
        fn product_is_associative_with_apply(m in arb_matrix(), bits in any::<u64>()) {
            let v = BitVec::from_indices(m.ncols(), (0..m.ncols()).filter(|i| bits >> i & 1 == 1));
            let col = BitMatrix::from_columns(m.ncols(), &[v.clone()]);
            prop_assert_eq!(m.mul(&col).column(0), m.apply(&v));
        }
    }
}
