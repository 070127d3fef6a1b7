//! Pairs `(A, B)` of `T_n` and the module-theoretic predicates on them:
//! freeness, unimodularity, outliers and cyclic submodule identity.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::field::{FieldElement, PrimeField};
use crate::trimat::{augmented_rank_unchecked, packed_len, parse_matrix_lines, LowerTriMatrix, RawRows};

/// An element `(A, B)` of the module `²T_n`.
///
/// The derived order compares `n`, then `A` row-major, then `B` row-major,
/// entries as integers (the modulus breaks any remaining tie).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModulePair {
    a: LowerTriMatrix,
    b: LowerTriMatrix,
}

impl ModulePair {
    pub fn new(a: LowerTriMatrix, b: LowerTriMatrix) -> Result<Self> {
        if a.n() != b.n() || a.field() != b.field() {
            return Err(Error::DimensionMismatch("A and B must share dimension and field".into()));
        }
        Ok(ModulePair { a, b })
    }

    pub(crate) fn new_unchecked(a: LowerTriMatrix, b: LowerTriMatrix) -> Self {
        debug_assert!(a.n() == b.n() && a.field() == b.field());
        ModulePair { a, b }
    }

    pub fn a(&self) -> &LowerTriMatrix {
        &self.a
    }

    pub fn b(&self) -> &LowerTriMatrix {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    pub fn field(&self) -> PrimeField {
        self.a.field()
    }

    /// `(I, 0)`
    pub fn identity_pair(n: usize, field: PrimeField) -> Self {
        ModulePair { a: LowerTriMatrix::identity(n, field), b: LowerTriMatrix::zero(n, field) }
    }

    /// Free iff `rank [A|B] = n`.
    pub fn is_free(&self) -> bool {
        augmented_rank_unchecked(&self.a, &self.b) == self.n()
    }

    /// Unimodular iff `a_ii != 0 or b_ii != 0` for every `i`.
    pub fn is_unimodular(&self) -> bool {
        (0..self.n()).all(|i| !self.a.get(i, i).is_zero() || !self.b.get(i, i).is_zero())
    }

    /// An outlier generating a free cyclic submodule: free and not unimodular.
    pub fn is_outlier_generating_free(&self) -> bool {
        !self.is_unimodular() && self.is_free()
    }

    /// `(UA, UB)` for a unit `U`.
    pub fn left_mul(&self, u: &LowerTriMatrix) -> Result<Self> {
        if u.n() != self.n() || u.field() != self.field() {
            return Err(Error::DimensionMismatch("unit does not match pair".into()));
        }
        if !u.is_unit() {
            return Err(Error::NotAUnit);
        }
        Ok(self.left_mul_unchecked(u))
    }

    pub(crate) fn left_mul_unchecked(&self, u: &LowerTriMatrix) -> Self {
        ModulePair { a: u.mul_unchecked(&self.a), b: u.mul_unchecked(&self.b) }
    }

    /// Mixed-radix code of the pair: packed `A` then packed `B`, first entry
    /// least significant. Used as a compact hash key by the exhaustive oracles.
    pub fn code(&self) -> u64 {
        let p = self.field().modulus() as u64;
        self.a
            .packed_entries()
            .iter()
            .chain(self.b.packed_entries())
            .rev()
            .fold(0u64, |acc, e| acc * p + e.value() as u64)
    }

    pub fn from_code(n: usize, field: PrimeField, code: u64) -> Self {
        let p = field.modulus() as u64;
        let len = packed_len(n);
        let mut c = code;
        let mut take = || {
            let e = FieldElement((c % p) as u32);
            c /= p;
            e
        };
        let a: Vec<_> = (0..len).map(|_| take()).collect();
        let b: Vec<_> = (0..len).map(|_| take()).collect();
        ModulePair {
            a: LowerTriMatrix::from_packed(n, field, a).expect("valid packed length"),
            b: LowerTriMatrix::from_packed(n, field, b).expect("valid packed length"),
        }
    }

    /// Row `i` of `[A|B]` as a `2n` vector.
    pub(crate) fn augmented_row(&self, i: usize) -> Vec<FieldElement> {
        let n = self.n();
        (0..n).map(|j| self.a.get(i, j)).chain((0..n).map(|j| self.b.get(i, j))).collect()
    }

    pub(crate) fn from_augmented_rows(n: usize, field: PrimeField, rows: &[Vec<FieldElement>]) -> Self {
        let mut a = LowerTriMatrix::zero(n, field);
        let mut b = LowerTriMatrix::zero(n, field);
        for (i, row) in rows.iter().enumerate() {
            for j in 0..=i {
                a.set(i, j, row[j]);
                b.set(i, j, row[n + j]);
            }
        }
        ModulePair { a, b }
    }

    /// The pair-file text form: header `n p`, the rows of `A`, a blank line,
    /// the rows of `B`.
    pub fn to_pair_file(&self) -> String {
        format!("{} {}\n{}\n{}", self.n(), self.field().modulus(), self.a, self.b)
    }

    /// Reads either the text pair-file form or the structured JSON form
    /// `{"n": .., "p": .., "A": [[..]], "B": [[..]]}`.
    pub fn parse(input: &str) -> Result<Self> {
        let trimmed = input.trim_start();
        if trimmed.starts_with('{') {
            let doc: PairDoc = serde_json::from_str(trimmed).map_err(|e| Error::Parse(e.to_string()))?;
            let field = PrimeField::new(doc.p).map_err(|e| Error::Parse(e.to_string()))?;
            let a = doc.a.into_matrix(field, doc.n)?;
            let b = doc.b.into_matrix(field, doc.n)?;
            return ModulePair::new(a, b);
        }
        let mut lines = input.lines().map(str::trim);
        let header = lines.by_ref().find(|l| !l.is_empty()).ok_or_else(|| Error::Parse("empty input".into()))?;
        let nums: Vec<&str> = header.split_whitespace().collect();
        let [n, p] = nums[..] else {
            return Err(Error::Parse(format!("header must be \"n p\", got {header:?}")));
        };
        let n: usize = n.parse().map_err(|_| Error::Parse(format!("bad n {n:?}")))?;
        let p: u32 = p.parse().map_err(|_| Error::Parse(format!("bad p {p:?}")))?;
        if n == 0 {
            return Err(Error::Parse("n must be positive".into()));
        }
        let field = PrimeField::new(p).map_err(|e| Error::Parse(e.to_string()))?;
        let rest: Vec<&str> = lines.collect();
        // blocks of non-empty lines separated by blank lines
        let blocks: Vec<Vec<&str>> = rest
            .split(|l| l.is_empty())
            .filter(|b| !b.is_empty())
            .map(|b| b.to_vec())
            .collect();
        if blocks.len() != 2 {
            return Err(Error::Parse(format!("expected two matrix blocks, found {}", blocks.len())));
        }
        let a = parse_matrix_lines(field, n, &blocks[0])?;
        let b = parse_matrix_lines(field, n, &blocks[1])?;
        ModulePair::new(a, b)
    }
}

#[derive(Deserialize)]
struct PairDoc {
    n: usize,
    p: u32,
    #[serde(rename = "A")]
    a: RawRows,
    #[serde(rename = "B")]
    b: RawRows,
}

impl Serialize for ModulePair {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Doc<'a> {
            n: usize,
            p: u32,
            #[serde(rename = "A")]
            a: &'a LowerTriMatrix,
            #[serde(rename = "B")]
            b: &'a LowerTriMatrix,
        }
        Doc { n: self.n(), p: self.field().modulus(), a: &self.a, b: &self.b }.serialize(s)
    }
}

impl fmt::Display for ModulePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_pair_file())
    }
}

/// A free cyclic submodule `T_n (A, B)`, identified by its key: the least
/// unit multiple `U (A, B)` in the pair order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Submodule {
    key: ModulePair,
}

impl Submodule {
    pub fn key(&self) -> &ModulePair {
        &self.key
    }

    pub fn into_key(self) -> ModulePair {
        self.key
    }
}

/// The cyclic submodule generated by a free pair.
pub fn cyclic_submodule(pair: &ModulePair) -> Result<Submodule> {
    if !pair.is_free() {
        return Err(Error::NotFree);
    }
    Ok(Submodule { key: submodule_key(pair) })
}

/// Least element of `{U (A, B) : U unit}`.
///
/// Row `i` of `U (A, B)` ranges over `c * row_i + span(rows < i)` with
/// `c != 0`, independently of the other rows, so the minimum is taken row by
/// row: reduce against the reduced echelon basis of the earlier rows (which
/// zeroes every pivot position), then scale the leading entry to 1.
pub fn submodule_key(pair: &ModulePair) -> ModulePair {
    let f = pair.field();
    let n = pair.n();
    let mut basis: Vec<(usize, Vec<FieldElement>)> = Vec::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut v = pair.augmented_row(i);
        for (piv, w) in &basis {
            let c = v[*piv];
            if !c.is_zero() {
                for (x, &y) in v.iter_mut().zip(w) {
                    *x = f.sub(*x, f.mul(c, y));
                }
            }
        }
        if let Some(lead) = v.iter().position(|e| !e.is_zero()) {
            let inv = f.inv(v[lead]).expect("nonzero");
            for x in v.iter_mut() {
                *x = f.mul(*x, inv);
            }
            for (_, w) in basis.iter_mut() {
                let c = w[lead];
                if !c.is_zero() {
                    for (x, &y) in w.iter_mut().zip(&v) {
                        *x = f.sub(*x, f.mul(c, y));
                    }
                }
            }
            basis.push((lead, v.clone()));
        }
        out.push(v);
    }
    ModulePair::from_augmented_rows(n, f, &out)
}

fn check_budget(needed: u128, budget: u128) -> Result<()> {
    if needed > budget {
        Err(Error::BudgetExceeded { needed, budget })
    } else {
        Ok(())
    }
}

fn pow(p: u32, e: usize) -> u128 {
    (p as u128).saturating_pow(e as u32)
}

/// Every element of `T_n`, in code order.
pub fn all_matrices(n: usize, field: PrimeField, budget: u128) -> Result<impl Iterator<Item = LowerTriMatrix>> {
    let len = packed_len(n);
    let total = pow(field.modulus(), len);
    check_budget(total, budget)?;
    let p = field.modulus() as u64;
    Ok((0..total as u64).map(move |mut code| {
        let data = (0..len)
            .map(|_| {
                let e = FieldElement((code % p) as u32);
                code /= p;
                e
            })
            .collect();
        LowerTriMatrix::from_packed(n, field, data).expect("valid")
    }))
}

/// Every unit of `T_n`.
pub fn all_units(n: usize, field: PrimeField, budget: u128) -> Result<impl Iterator<Item = LowerTriMatrix>> {
    let count = pow(field.modulus() - 1, n) * pow(field.modulus(), n * (n - 1) / 2);
    check_budget(count, budget)?;
    Ok(all_matrices(n, field, u128::MAX)?.filter(|m| m.is_unit()))
}

/// Number of pairs in `²T_n`.
pub fn pair_count(n: usize, field: PrimeField) -> u128 {
    pow(field.modulus(), 2 * packed_len(n))
}

/// Every pair of `²T_n`, in code order.
pub fn all_pairs(n: usize, field: PrimeField, budget: u128) -> Result<impl Iterator<Item = ModulePair>> {
    let total = pair_count(n, field);
    check_budget(total, budget)?;
    Ok((0..total as u64).map(move |c| ModulePair::from_code(n, field, c)))
}

/// Freeness straight from the definition: no nonzero `r` in `T_n` has
/// `r A = r B = 0`.
pub fn is_free_oracle(pair: &ModulePair, budget: u128) -> Result<bool> {
    let n = pair.n();
    for r in all_matrices(n, pair.field(), budget)? {
        if r.is_zero() {
            continue;
        }
        if r.mul_unchecked(pair.a()).is_zero() && r.mul_unchecked(pair.b()).is_zero() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Submodule key by enumerating every unit multiple.
pub fn submodule_key_bruteforce(pair: &ModulePair, budget: u128) -> Result<ModulePair> {
    all_units(pair.n(), pair.field(), budget)?
        .map(|u| pair.left_mul_unchecked(&u))
        .min()
        .ok_or(Error::UnsupportedDimension(pair.n()))
}

/// The union of all cyclic submodules generated by unimodular pairs, for
/// answering outlier queries by lookup.
pub struct OutlierOracle {
    n: usize,
    field: PrimeField,
    covered: HashSet<u64>,
}

impl OutlierOracle {
    /// Enumerates `|unimodular pairs| * |T_n|` products; the budget bounds
    /// that product.
    pub fn new(n: usize, field: PrimeField, budget: u128) -> Result<Self> {
        let ring = pow(field.modulus(), packed_len(n));
        check_budget(pair_count(n, field).saturating_mul(ring), budget)?;
        let ring_elems: Vec<LowerTriMatrix> = all_matrices(n, field, u128::MAX)?.collect();
        let mut covered = HashSet::new();
        for gen in all_pairs(n, field, u128::MAX)?.filter(|x| x.is_unimodular()) {
            // r ranges over T_n; unit multiples give the same submodule but
            // the set is cheap enough that no quotienting is needed
            for r in &ring_elems {
                covered.insert(gen.left_mul_unchecked(r).code());
            }
        }
        Ok(OutlierOracle { n, field, covered })
    }

    /// True iff the pair lies in no submodule generated by a unimodular pair.
    pub fn is_outlier(&self, pair: &ModulePair) -> Result<bool> {
        if pair.n() != self.n || pair.field() != self.field {
            return Err(Error::DimensionMismatch("pair does not match oracle".into()));
        }
        Ok(!self.covered.contains(&pair.code()))
    }
}

/// One-shot outlier test; builds an [`OutlierOracle`] each call.
pub fn is_outlier_oracle(pair: &ModulePair, budget: u128) -> Result<bool> {
    OutlierOracle::new(pair.n(), pair.field(), budget)?.is_outlier(pair)
}
