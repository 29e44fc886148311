//! Dense matrices over F₂, stored as bit rows.
//!
//! Elimination always pivots on the lowest available index so that bases and
//! representatives come out the same on every run.

use std::fmt;

use serde::{Serialize, Serializer};

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct F2Matrix {
    rows: usize,
    cols: usize,
    words: usize,
    bits: Vec<u64>,
}

impl F2Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words = cols.div_ceil(64).max(1);
        F2Matrix {
            rows,
            cols,
            words,
            bits: vec![0; rows * words],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = F2Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    /// From rows of 0/1 entries (anything odd counts as 1).
    pub fn from_rows(rows: &[Vec<u8>]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut m = F2Matrix::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), cols, "ragged rows");
            for (j, &x) in r.iter().enumerate() {
                m.set(i, j, x & 1 == 1);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        debug_assert!(i < self.rows && j < self.cols);
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        debug_assert!(i < self.rows && j < self.cols);
        let w = &mut self.bits[i * self.words + j / 64];
        if v {
            *w |= 1 << (j % 64);
        } else {
            *w &= !(1 << (j % 64));
        }
    }

    pub fn flip(&mut self, i: usize, j: usize) {
        self.bits[i * self.words + j / 64] ^= 1 << (j % 64);
    }

    fn xor_row_into(&mut self, src: usize, dst: usize) {
        for w in 0..self.words {
            let v = self.bits[src * self.words + w];
            self.bits[dst * self.words + w] ^= v;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    /// Nonzero positions in row-major order.
    pub fn nonzeros(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.rows {
            for j in 0..self.cols {
                if self.get(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut t = F2Matrix::zeros(self.cols, self.rows);
        for (i, j) in self.nonzeros() {
            t.set(j, i, true);
        }
        t
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch in add");
        let mut out = self.clone();
        for (a, b) in out.bits.iter_mut().zip(&other.bits) {
            *a ^= b;
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "shape mismatch in mul");
        let mut out = F2Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                if self.get(i, k) {
                    for w in 0..out.words {
                        out.bits[i * out.words + w] ^= other.bits[k * other.words + w];
                    }
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[bool]) -> Vec<bool> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| (0..self.cols).filter(|&j| v[j] && self.get(i, j)).count() % 2 == 1)
            .collect()
    }

    /// Submatrix with the given rows and columns, in the given order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut out = F2Matrix::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                out.set(a, b, self.get(i, j));
            }
        }
        out
    }

    /// Row echelon form with pivot columns, lowest index first.
    fn echelon(&self) -> (F2Matrix, Vec<usize>) {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..self.cols {
            let Some(p) = (r..m.rows).find(|&i| m.get(i, c)) else {
                continue;
            };
            if p != r {
                for w in 0..m.words {
                    m.bits.swap(p * m.words + w, r * m.words + w);
                }
            }
            for i in 0..m.rows {
                if i != r && m.get(i, c) {
                    m.xor_row_into(r, i);
                }
            }
            pivots.push(c);
            r += 1;
            if r == m.rows {
                break;
            }
        }
        (m, pivots)
    }

    pub fn rank(&self) -> usize {
        self.echelon().1.len()
    }

    /// Basis of the null space as column vectors, one per free column.
    pub fn kernel(&self) -> Vec<Vec<bool>> {
        let (m, pivots) = self.echelon();
        let mut out = Vec::new();
        for free in (0..self.cols).filter(|c| !pivots.contains(c)) {
            let mut v = vec![false; self.cols];
            v[free] = true;
            for (r, &p) in pivots.iter().enumerate() {
                if m.get(r, free) {
                    v[p] = true;
                }
            }
            out.push(v);
        }
        out
    }

    /// Inverse of a square matrix, if it has one.
    pub fn inverse(&self) -> Option<F2Matrix> {
        if self.rows != self.cols {
            return None;
        }
        let n = self.rows;
        let mut aug = F2Matrix::zeros(n, 2 * n);
        for (i, j) in self.nonzeros() {
            aug.set(i, j, true);
        }
        for i in 0..n {
            aug.set(i, n + i, true);
        }
        let (e, pivots) = aug.echelon();
        if pivots.len() < n || pivots[n - 1] != n - 1 {
            return None;
        }
        let cols: Vec<usize> = (n..2 * n).collect();
        let rows: Vec<usize> = (0..n).collect();
        Some(e.select(&rows, &cols))
    }

    /// Column vectors as a matrix.
    pub fn from_columns(rows: usize, cols: &[Vec<bool>]) -> Self {
        let mut m = F2Matrix::zeros(rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            for (i, &x) in c.iter().enumerate() {
                m.set(i, j, x);
            }
        }
        m
    }

    pub fn column(&self, j: usize) -> Vec<bool> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Some `x` with `self · x = b`, if the system is consistent. Free
    /// variables are set to zero.
    pub fn solve(&self, b: &[bool]) -> Option<Vec<bool>> {
        assert_eq!(b.len(), self.rows);
        let mut aug = F2Matrix::zeros(self.rows, self.cols + 1);
        for (i, j) in self.nonzeros() {
            aug.set(i, j, true);
        }
        for (i, &x) in b.iter().enumerate() {
            aug.set(i, self.cols, x);
        }
        let (e, pivots) = aug.echelon();
        if pivots.last() == Some(&self.cols) {
            return None;
        }
        let mut x = vec![false; self.cols];
        for (r, &p) in pivots.iter().enumerate() {
            x[p] = e.get(r, self.cols);
        }
        Some(x)
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) as u8).collect())
            .collect()
    }
}

impl fmt::Debug for F2Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "F2Matrix {}x{}", self.rows, self.cols)?;
        for i in 0..self.rows {
            let s: String = (0..self.cols).map(|j| if self.get(i, j) { '1' } else { '.' }).collect();
            writeln!(f, "  {s}")?;
        }
        Ok(())
    }
}

impl Serialize for F2Matrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

/// Among `candidates`, those that stay independent modulo `span`, in order.
pub fn independent_modulo(span: &[Vec<bool>], candidates: &[Vec<bool>]) -> Vec<usize> {
    let n = span.first().or(candidates.first()).map_or(0, |v| v.len());
    let mut basis: Vec<Vec<bool>> = span.to_vec();
    let mut rank = F2Matrix::from_columns(n, &basis).rank();
    let mut keep = Vec::new();
    for (k, c) in candidates.iter().enumerate() {
        basis.push(c.clone());
        let r = F2Matrix::from_columns(n, &basis).rank();
        if r > rank {
            rank = r;
            keep.push(k);
        } else {
            basis.pop();
        }
    }
    keep
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb(r: usize, c: usize) -> impl Strategy<Value = F2Matrix> {
        proptest::collection::vec(proptest::collection::vec(0u8..2, c), r).prop_map(|rows| F2Matrix::from_rows(&rows))
    }

    proptest! {
        #[test]
        fn rank_nullity(m in arb(7, 70)) {
            let k = m.kernel();
            prop_assert_eq!(m.rank() + k.len(), m.cols());
            for v in &k {
                prop_assert!(m.mul_vec(v).iter().all(|&x| !x));
            }
        }

        #[test]
        fn inverse_is_inverse(m in arb(6, 6)) {
            match m.inverse() {
                Some(inv) => prop_assert_eq!(m.mul(&inv), F2Matrix::identity(6)),
                None => prop_assert!(m.rank() < 6),
            }
        }

        #[test]
        fn solve_finds_preimages(m in arb(5, 8), x in proptest::collection::vec(any::<bool>(), 8)) {
            let b = m.mul_vec(&x);
            let y = m.solve(&b).expect("b is in the image");
            prop_assert_eq!(m.mul_vec(&y), b);
        }

        #[test]
        fn transpose_reverses_products(a in arb(4, 5), b in arb(5, 3)) {
            prop_assert_eq!(a.mul(&b).transpose(), b.transpose().mul(&a.transpose()));
        }
    }
}
