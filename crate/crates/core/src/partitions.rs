//! Set partitions of `{1..n}`, Bell numbers, and the correspondence between
//! canonical pairs and partitions.

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde::Serialize;

use crate::canonical::is_canonical;
use crate::error::{Error, Result};
use crate::field::{FieldElement, PrimeField};
use crate::modpairs::ModulePair;
use crate::trimat::LowerTriMatrix;

/// A partition of `{1..n}`: blocks sorted internally and ordered by their
/// minima.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SetPartition {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl SetPartition {
    /// Validates and normalizes.
    pub fn new(n: usize, mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; n + 1];
        for b in &mut blocks {
            if b.is_empty() {
                return Err(Error::InvalidPartition("empty block".into()));
            }
            b.sort_unstable();
            for &e in b.iter() {
                if e == 0 || e > n {
                    return Err(Error::InvalidPartition(format!("element {e} outside 1..{n}")));
                }
                if std::mem::replace(&mut seen[e], true) {
                    return Err(Error::InvalidPartition(format!("element {e} appears twice")));
                }
            }
        }
        if let Some(missing) = (1..=n).find(|&e| !seen[e]) {
            return Err(Error::InvalidPartition(format!("element {missing} is not covered")));
        }
        blocks.sort_unstable_by_key(|b| b[0]);
        Ok(SetPartition { n, blocks })
    }

    /// From a restricted growth string `rgs[i]` = block index of `i + 1`.
    pub fn from_rgs(rgs: &[usize]) -> Result<Self> {
        let k = rgs.iter().max().map_or(0, |m| m + 1);
        let mut blocks = vec![Vec::new(); k];
        for (i, &b) in rgs.iter().enumerate() {
            blocks[b].push(i + 1);
        }
        SetPartition::new(rgs.len(), blocks)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn is_all_singletons(&self) -> bool {
        self.blocks.len() == self.n
    }

    /// `{i}` for `i = 1..n`.
    pub fn singletons(n: usize) -> Self {
        SetPartition { n, blocks: (1..=n).map(|i| vec![i]).collect() }
    }

    /// Parses `"{1}{2,3,6}{4,5}"`; block and element order are free. `n` is
    /// the largest element.
    pub fn parse(s: &str) -> Result<Self> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let mut blocks = Vec::new();
        let mut rest = s.as_str();
        while !rest.is_empty() {
            let body = rest
                .strip_prefix('{')
                .and_then(|r| r.split_once('}'))
                .ok_or_else(|| Error::Parse(format!("malformed partition {s:?}")))?;
            let block = body
                .0
                .split(',')
                .map(|t| t.parse::<usize>().map_err(|_| Error::Parse(format!("bad element {t:?}"))))
                .collect::<Result<Vec<_>>>()?;
            blocks.push(block);
            rest = body.1;
        }
        if blocks.is_empty() {
            return Err(Error::Parse("empty partition".into()));
        }
        let n = blocks.iter().flatten().copied().max().unwrap_or(0);
        SetPartition::new(n, blocks)
    }
}

impl fmt::Display for SetPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.blocks {
            let inner: Vec<String> = b.iter().map(|e| e.to_string()).collect();
            write!(f, "{{{}}}", inner.join(","))?;
        }
        Ok(())
    }
}

/// Bell number `B_n` from the Bell triangle.
pub fn bell(n: usize) -> BigUint {
    let mut row = vec![BigUint::one()];
    for _ in 0..n {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(row.last().expect("nonempty").clone());
        for v in &row {
            let s = next.last().expect("nonempty") + v;
            next.push(s);
        }
        row = next;
    }
    row.swap_remove(0)
}

/// All partitions of `{1..n}` in lexicographic restricted-growth-string
/// order (so `{1..n}` as one block comes first).
pub fn enumerate_partitions(n: usize, budget: u128) -> Result<Vec<SetPartition>> {
    if n == 0 {
        return Err(Error::UnsupportedDimension(n));
    }
    let count = bell(n);
    if count.to_u128().is_none_or(|c| c > budget) {
        return Err(Error::BudgetExceeded { needed: count.to_u128().unwrap_or(u128::MAX), budget });
    }
    let mut out = Vec::new();
    let mut rgs = vec![0usize; n];
    // prefix_max[i] = max(rgs[..=i])
    let mut prefix_max = vec![0usize; n];
    loop {
        out.push(SetPartition::from_rgs(&rgs)?);
        // rightmost position that can still grow
        let Some(i) = (1..n).rev().find(|&i| rgs[i] <= prefix_max[i - 1]) else {
            break;
        };
        rgs[i] += 1;
        prefix_max[i] = prefix_max[i - 1].max(rgs[i]);
        for k in i + 1..n {
            rgs[k] = 0;
            prefix_max[k] = prefix_max[i];
        }
    }
    Ok(out)
}

/// The partition labelling a canonical pair. For each `k` with `a_kk = 1`
/// the block labelled `t_k = rank A_k` contains `k`; each `b_ij = 1` puts
/// `i` into the block labelled `j - rank B_ij`.
pub fn pair_to_partition(pair: &ModulePair) -> Result<SetPartition> {
    if !is_canonical(pair) {
        return Err(Error::NotCanonical);
    }
    let n = pair.n();
    let (a, b) = (pair.a(), pair.b());
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for k in 1..=n {
        if !a.get(k - 1, k - 1).is_zero() {
            let label = a.leading_rank(k)?;
            debug_assert_eq!(label, blocks.len() + 1);
            blocks.push(vec![k]);
        }
    }
    for i in 1..=n {
        for j in 1..i {
            if !b.get(i - 1, j - 1).is_zero() {
                let label = j - b.truncated_rank(i, j)?;
                let block = blocks
                    .get_mut(label.wrapping_sub(1))
                    .ok_or_else(|| Error::InvalidPartition(format!("label {label} for row {i} has no block")))?;
                block.push(i);
            }
        }
    }
    SetPartition::new(n, blocks)
}

/// The canonical pair of a partition: `a_uu = 1` at every block minimum;
/// the remaining elements, in increasing order, each put a 1 of `B` into
/// the `s`-th column (from the left) that does not yet hold one, where `s`
/// is the index of their block.
pub fn partition_to_pair(n: usize, part: &SetPartition, field: PrimeField) -> Result<ModulePair> {
    if n < 2 {
        return Err(Error::UnsupportedDimension(n));
    }
    if part.n() != n {
        return Err(Error::InvalidPartition(format!("partition of {{1..{}}}, expected n = {n}", part.n())));
    }
    let mut a = LowerTriMatrix::zero(n, field);
    let mut b = LowerTriMatrix::zero(n, field);
    let mut block_of = vec![0usize; n + 1];
    for (s, blk) in part.blocks().iter().enumerate() {
        a.set(blk[0] - 1, blk[0] - 1, FieldElement::ONE);
        for &e in &blk[1..] {
            block_of[e] = s + 1;
        }
    }
    let mut used = vec![false; n];
    for x in 1..=n {
        let s = block_of[x];
        if s == 0 {
            continue;
        }
        let col = (0..n)
            .filter(|&c| !used[c])
            .nth(s - 1)
            .ok_or_else(|| Error::InvalidPartition("no free column".into()))?;
        if col + 1 >= x {
            return Err(Error::InvalidPartition(format!("column {} for row {x} is not below the diagonal", col + 1)));
        }
        used[col] = true;
        b.set(x - 1, col, FieldElement::ONE);
    }
    ModulePair::new(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::DEFAULT_BUDGET;

    fn brute_count(n: usize) -> u64 {
        // count restricted growth strings by plain recursion
        fn go(i: usize, n: usize, max: usize) -> u64 {
            if i == n {
                return 1;
            }
            (0..=max + 1).map(|v| go(i + 1, n, max.max(v))).sum()
        }
        if n == 0 {
            1
        } else {
            go(1, n, 0)
        }
    }

    #[test]
    fn bell_values() {
        assert_eq!(bell(0), BigUint::from(1u32));
        assert_eq!(bell(1), BigUint::from(1u32));
        assert_eq!(bell(2), BigUint::from(2u32));
        assert_eq!(bell(4), BigUint::from(15u32));
        assert_eq!(bell(5), BigUint::from(52u32));
        for n in 0..=10 {
            assert_eq!(bell(n), BigUint::from(brute_count(n)));
        }
        assert_eq!(bell(30).to_string(), "846749014511809332450147");
    }

    #[test]
    fn enumeration() {
        let two = enumerate_partitions(2, DEFAULT_BUDGET).unwrap();
        assert_eq!(two.len(), 2);
        assert!(two.contains(&SetPartition::singletons(2)));
        assert!(two.contains(&SetPartition::new(2, vec![vec![1, 2]]).unwrap()));
        assert_eq!(enumerate_partitions(3, DEFAULT_BUDGET).unwrap().len(), 5);
        let four = enumerate_partitions(4, DEFAULT_BUDGET).unwrap();
        assert_eq!(four.len(), 15);
        let mut dedup = four.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), 15);
        assert!(matches!(enumerate_partitions(10, 100), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn parse_and_display() {
        let p = SetPartition::parse("{4,5}{6,3,2}{1}").unwrap();
        assert_eq!(p.to_string(), "{1}{2,3,6}{4,5}");
        assert_eq!(p.n(), 6);
        assert!(SetPartition::parse("{1}{1,2}").is_err());
        assert!(SetPartition::parse("{1}{3}").is_err());
        assert!(SetPartition::parse("{1,}").is_err());
        assert!(SetPartition::parse("1,2").is_err());
        assert!(SetPartition::parse("").is_err());
    }

    fn t6() -> ModulePair {
        let f = PrimeField::new(2).unwrap();
        let a = LowerTriMatrix::diagonal_from(f, &[1, 1, 0, 1, 0, 0]);
        let mut b = LowerTriMatrix::zero(6, f);
        for (i, j) in [(3, 2), (5, 4), (6, 3)] {
            b.set(i - 1, j - 1, FieldElement::ONE);
        }
        ModulePair::new(a, b).unwrap()
    }

    #[test]
    fn worked_example_both_directions() {
        let f = PrimeField::new(2).unwrap();
        let part = SetPartition::parse("{1}{2,3,6}{4,5}").unwrap();
        assert_eq!(pair_to_partition(&t6()).unwrap(), part);
        assert_eq!(partition_to_pair(6, &part, f).unwrap(), t6());
    }

    #[test]
    fn singletons_and_small_cases() {
        let f = PrimeField::new(3).unwrap();
        for n in 2..6 {
            let id = ModulePair::identity_pair(n, f);
            assert_eq!(pair_to_partition(&id).unwrap(), SetPartition::singletons(n));
            assert_eq!(partition_to_pair(n, &SetPartition::singletons(n), f).unwrap(), id);
        }
        let one_block = SetPartition::parse("{1,2}").unwrap();
        let x = ModulePair::new(
            LowerTriMatrix::diagonal_from(f, &[1, 0]),
            LowerTriMatrix::single(2, f, 1, 0, FieldElement::ONE),
        )
        .unwrap();
        assert_eq!(pair_to_partition(&x).unwrap(), one_block);
        let full = partition_to_pair(4, &SetPartition::parse("{1,2,3,4}").unwrap(), f).unwrap();
        assert_eq!(full.a(), &LowerTriMatrix::diagonal_from(f, &[1, 0, 0, 0]));
        let mut b = LowerTriMatrix::zero(4, f);
        for (i, j) in [(2, 1), (3, 2), (4, 3)] {
            b.set(i - 1, j - 1, FieldElement::ONE);
        }
        assert_eq!(full.b(), &b);
    }

    #[test]
    fn errors() {
        let f = PrimeField::new(2).unwrap();
        let not_canonical = ModulePair::new(LowerTriMatrix::identity(2, f), LowerTriMatrix::identity(2, f)).unwrap();
        assert_eq!(pair_to_partition(&not_canonical), Err(Error::NotCanonical));
        assert!(partition_to_pair(3, &SetPartition::singletons(2), f).is_err());
        assert!(partition_to_pair(1, &SetPartition::singletons(1), f).is_err());
    }
}
