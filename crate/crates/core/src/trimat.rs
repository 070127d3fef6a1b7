//! Lower triangular matrices over GF(p), the ring `T_n`.

use std::fmt;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::field::{FieldElement, PrimeField};

/// An element of `T_n(GF(p))`, stored as the packed lower triangle in
/// row-major order. Indices are zero-based.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LowerTriMatrix {
    n: usize,
    data: Vec<FieldElement>,
    field: PrimeField,
}

#[inline]
fn packed(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

/// Number of stored entries of an `n x n` lower triangular matrix.
#[inline]
pub fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

impl LowerTriMatrix {
    pub fn zero(n: usize, field: PrimeField) -> Self {
        LowerTriMatrix { n, data: vec![FieldElement::ZERO; packed_len(n)], field }
    }

    pub fn identity(n: usize, field: PrimeField) -> Self {
        let mut m = Self::zero(n, field);
        for i in 0..n {
            m.set(i, i, FieldElement::ONE);
        }
        m
    }

    pub fn diagonal_from(field: PrimeField, diag: &[u32]) -> Self {
        let mut m = Self::zero(diag.len(), field);
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, field.elem(d as i64));
        }
        m
    }

    /// `lambda * e_ij` for `j <= i`.
    pub fn single(n: usize, field: PrimeField, i: usize, j: usize, lambda: FieldElement) -> Self {
        let mut m = Self::zero(n, field);
        m.set(i, j, lambda);
        m
    }

    /// Builds a matrix from packed entries (row-major lower triangle).
    pub fn from_packed(n: usize, field: PrimeField, data: Vec<FieldElement>) -> Result<Self> {
        if data.len() != packed_len(n) {
            return Err(Error::DimensionMismatch(format!(
                "expected {} packed entries, got {}",
                packed_len(n),
                data.len()
            )));
        }
        if data.iter().any(|e| e.0 >= field.modulus()) {
            return Err(Error::Parse("entry is not a canonical residue".into()));
        }
        Ok(LowerTriMatrix { n, data, field })
    }

    /// Builds a matrix from full rows. Entries above the diagonal must be 0
    /// and all entries must lie in `[0, p)`.
    pub fn from_rows(field: PrimeField, rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        let mut m = Self::zero(n, field);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Parse(format!("row {} has {} entries, expected {n}", i + 1, row.len())));
            }
            for (j, &v) in row.iter().enumerate() {
                let e = field.try_elem(v)?;
                if j > i {
                    if !e.is_zero() {
                        return Err(Error::Parse(format!(
                            "entry ({}, {}) above the diagonal is nonzero",
                            i + 1,
                            j + 1
                        )));
                    }
                } else {
                    m.set(i, j, e);
                }
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn field(&self) -> PrimeField {
        self.field
    }

    #[inline]
    pub fn packed_entries(&self) -> &[FieldElement] {
        &self.data
    }

    /// Entry `(i, j)`; zero above the diagonal.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> FieldElement {
        if j > i {
            FieldElement::ZERO
        } else {
            self.data[packed(i, j)]
        }
    }

    /// Sets entry `(i, j)`, `j <= i`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: FieldElement) {
        assert!(j <= i && i < self.n, "({i}, {j}) is not in the lower triangle of a {0}x{0} matrix", self.n);
        self.data[packed(i, j)] = v;
    }

    pub fn diagonal(&self) -> Vec<FieldElement> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|e| e.is_zero())
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j).is_zero()))
    }

    pub fn nonzero_count(&self) -> usize {
        self.data.iter().filter(|e| !e.is_zero()).count()
    }

    /// Full `n x n` rows as integers.
    pub fn to_rows(&self) -> Vec<Vec<u32>> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.get(i, j).0).collect()).collect()
    }

    pub(crate) fn row(&self, i: usize) -> &[FieldElement] {
        &self.data[packed(i, 0)..=packed(i, i)]
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.field != other.field {
            return Err(Error::DimensionMismatch(format!(
                "T_{} over GF({}) vs T_{} over GF({})",
                self.n,
                self.field.modulus(),
                other.n,
                other.field.modulus()
            )));
        }
        Ok(())
    }

    /// Ring product; `(LR)_ij = sum_{j <= k <= i} L_ik R_kj`.
    pub fn mul(&self, rhs: &Self) -> Result<Self> {
        self.check_compatible(rhs)?;
        Ok(self.mul_unchecked(rhs))
    }

    pub(crate) fn mul_unchecked(&self, rhs: &Self) -> Self {
        let f = self.field;
        let p = f.modulus() as u64;
        let mut out = Self::zero(self.n, f);
        for i in 0..self.n {
            let li = self.row(i);
            for j in 0..=i {
                let mut acc = 0u64;
                for k in j..=i {
                    acc += li[k].0 as u64 * rhs.data[packed(k, j)].0 as u64;
                }
                out.data[packed(i, j)] = FieldElement((acc % p) as u32);
            }
        }
        out
    }

    pub fn add(&self, rhs: &Self) -> Result<Self> {
        self.check_compatible(rhs)?;
        Ok(self.add_unchecked(rhs))
    }

    pub(crate) fn add_unchecked(&self, rhs: &Self) -> Self {
        let f = self.field;
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| f.add(a, b)).collect();
        LowerTriMatrix { n: self.n, data, field: f }
    }

    pub fn sub(&self, rhs: &Self) -> Result<Self> {
        self.check_compatible(rhs)?;
        let f = self.field;
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| f.sub(a, b)).collect();
        Ok(LowerTriMatrix { n: self.n, data, field: f })
    }

    pub fn neg(&self) -> Self {
        let f = self.field;
        LowerTriMatrix { n: self.n, data: self.data.iter().map(|&a| f.neg(a)).collect(), field: f }
    }

    /// A unit of `T_n` is a matrix with nonzero diagonal.
    pub fn is_unit(&self) -> bool {
        (0..self.n).all(|i| !self.get(i, i).is_zero())
    }

    /// Inverse by forward substitution.
    pub fn inverse(&self) -> Result<Self> {
        if !self.is_unit() {
            return Err(Error::SingularMatrix);
        }
        let f = self.field;
        let n = self.n;
        let mut inv = Self::zero(n, f);
        let dinv: Vec<FieldElement> = (0..n).map(|i| f.inv(self.get(i, i))).collect::<Result<_>>()?;
        // column by column: solve M x = e_j
        for j in 0..n {
            inv.set(j, j, dinv[j]);
            for i in j + 1..n {
                let mut acc = FieldElement::ZERO;
                for k in j..i {
                    acc = f.mul_add(acc, self.get(i, k), inv.get(k, j));
                }
                inv.set(i, j, f.mul(f.neg(acc), dinv[i]));
            }
        }
        Ok(inv)
    }

    /// Rank of the leading principal `k x k` submatrix (`1 <= k <= n`).
    pub fn leading_rank(&self, k: usize) -> Result<usize> {
        if k == 0 || k > self.n {
            return Err(Error::IndexOutOfRange(format!("k = {k} for n = {}", self.n)));
        }
        let rows = (0..k).map(|i| (0..k).map(|j| self.get(i, j)).collect()).collect();
        Ok(dense_rank(self.field, rows))
    }

    /// Rank of the copy of `self` whose rows `i..=n` and columns `j..=n`
    /// (one-based) are zeroed.
    pub fn truncated_rank(&self, i: usize, j: usize) -> Result<usize> {
        if i == 0 || j == 0 || i > self.n || j > self.n {
            return Err(Error::IndexOutOfRange(format!("({i}, {j}) for n = {}", self.n)));
        }
        let rows = (0..i - 1).map(|r| (0..j - 1).map(|c| self.get(r, c)).collect()).collect();
        Ok(dense_rank(self.field, rows))
    }
}

/// Rank of `[A | B]` as an `n x 2n` matrix.
pub fn augmented_rank(a: &LowerTriMatrix, b: &LowerTriMatrix) -> Result<usize> {
    a.check_compatible(b)?;
    Ok(augmented_rank_unchecked(a, b))
}

pub(crate) fn augmented_rank_unchecked(a: &LowerTriMatrix, b: &LowerTriMatrix) -> usize {
    let n = a.n;
    let rows = (0..n)
        .map(|i| (0..n).map(|j| a.get(i, j)).chain((0..n).map(|j| b.get(i, j))).collect())
        .collect();
    dense_rank(a.field, rows)
}

/// Rank of a dense matrix by Gaussian elimination, pivoting on the first
/// nonzero entry of each column.
pub fn dense_rank(f: PrimeField, mut rows: Vec<Vec<FieldElement>>) -> usize {
    let ncols = rows.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for c in 0..ncols {
        let Some(piv) = (rank..rows.len()).find(|&r| !rows[r][c].is_zero()) else {
            continue;
        };
        rows.swap(rank, piv);
        let inv = f.inv(rows[rank][c]).expect("pivot is nonzero");
        for r in rank + 1..rows.len() {
            let factor = f.mul(rows[r][c], inv);
            if factor.is_zero() {
                continue;
            }
            for k in c..ncols {
                let v = f.mul(factor, rows[rank][k]);
                rows[r][k] = f.sub(rows[r][k], v);
            }
        }
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    rank
}

impl fmt::Display for LowerTriMatrix {
    /// `n` lines of space-separated residues.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n {
            let line: Vec<String> = (0..self.n).map(|j| self.get(i, j).to_string()).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Parses `n` whitespace-separated lines into a matrix.
pub fn parse_matrix_lines(field: PrimeField, n: usize, lines: &[&str]) -> Result<LowerTriMatrix> {
    if lines.len() != n {
        return Err(Error::Parse(format!("expected {n} matrix lines, got {}", lines.len())));
    }
    let rows = lines
        .iter()
        .map(|l| {
            l.split_whitespace()
                .map(|t| t.parse::<u64>().map_err(|e| Error::Parse(format!("bad entry {t:?}: {e}"))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    LowerTriMatrix::from_rows(field, &rows)
}

impl Serialize for LowerTriMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

/// Deserialization needs the field, so matrices are read as raw rows and
/// attached to a field afterwards.
#[derive(Clone, Debug, Deserialize)]
#[serde(transparent)]
pub struct RawRows(pub Vec<Vec<u64>>);

impl RawRows {
    pub fn into_matrix(self, field: PrimeField, n: usize) -> Result<LowerTriMatrix> {
        if self.0.len() != n {
            return Err(Error::Parse(format!("expected {n} rows, got {}", self.0.len())));
        }
        LowerTriMatrix::from_rows(field, &self.0)
    }
}
