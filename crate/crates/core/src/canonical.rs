//! Canonical representatives of `GL_2(T_n)`-orbits and the constructive
//! reduction of a free pair to its representative.
//!
//! A pair is canonical when `A` is a 0/1 diagonal matrix, `B` is a 0/1
//! matrix with zero diagonal, every row of `[A|B]` holds exactly one
//! nonzero entry, and the nonzero entries of `B` lie in distinct columns.
//!
//! [`canonicalize`] runs the staged reduction (diagonal clearing,
//! triangular similarity, scaling, transvection, pivot selection with the
//! `V` step, and the `K` step). Every stage records the factors it applied,
//! so the result comes with a certificate `(U, Q)` such that
//! `U (A, B) Q` is the output.
//!
//! Some orbits defeat the staged reduction: nilpotent structure in the
//! `A`-part survives the similarity step, and pivot selection can run out
//! of admissible columns. Those cases fall back to a row-by-row rook
//! reduction ([`reduce_to_normal_form`]) that always succeeds and produces
//! a unique normal form per orbit. When that normal form is not canonical
//! the orbit has no canonical member at all and
//! [`Error::CanonicalizationFailed`] is returned.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{FieldElement, PrimeField};
use crate::gl2::GL2Element;
use crate::modpairs::ModulePair;
use crate::partitions::bell;
use crate::trimat::{augmented_rank_unchecked, dense_rank, LowerTriMatrix};

/// Recognizes canonical pairs.
pub fn is_canonical(pair: &ModulePair) -> bool {
    let n = pair.n();
    let (a, b) = (pair.a(), pair.b());
    let is01 = |e: FieldElement| e.value() <= 1;
    if !a.is_diagonal() || !a.diagonal().into_iter().all(is01) {
        return false;
    }
    if !b.diagonal().iter().all(|e| e.is_zero()) || !b.packed_entries().iter().all(|&e| is01(e)) {
        return false;
    }
    let mut col_used = vec![false; n];
    for i in 0..n {
        let mut count = usize::from(!a.get(i, i).is_zero());
        for j in 0..i {
            if !b.get(i, j).is_zero() {
                count += 1;
                if std::mem::replace(&mut col_used[j], true) {
                    return false;
                }
            }
        }
        if count != 1 {
            return false;
        }
    }
    true
}

/// The defining conditions as literally stated: `a_ii, b_ij` in `{0, 1}`,
/// `a_ij = b_ii = 0` for `j < i`, and the number of nonzero entries of
/// `[A|B]` equals its rank, which is `n`.
pub fn satisfies_defining_conditions(pair: &ModulePair) -> bool {
    let n = pair.n();
    let (a, b) = (pair.a(), pair.b());
    for i in 0..n {
        if a.get(i, i).value() > 1 || !b.get(i, i).is_zero() {
            return false;
        }
        for j in 0..i {
            if b.get(i, j).value() > 1 || !a.get(i, j).is_zero() {
                return false;
            }
        }
    }
    let nonzeros = a.nonzero_count() + b.nonzero_count();
    let rank = augmented_rank_unchecked(a, b);
    nonzeros == rank && rank == n
}

/// All canonical pairs for `n`, each once, sorted by the pair order. Built
/// row by row: row `i` either takes `a_ii = 1` or a `1` of `B` in a column
/// `j < i` not yet used.
pub fn enumerate_canonical(n: usize, field: PrimeField, budget: u128) -> Result<Vec<ModulePair>> {
    if n < 2 {
        return Err(Error::UnsupportedDimension(n));
    }
    let count = bell(n);
    let within = u128::try_from(count.clone()).map(|c| c <= budget).unwrap_or(false);
    if !within {
        return Err(Error::BudgetExceeded { needed: u128::try_from(count).unwrap_or(u128::MAX), budget });
    }
    fn go(
        i: usize,
        a: &mut LowerTriMatrix,
        b: &mut LowerTriMatrix,
        used: &mut [bool],
        out: &mut Vec<ModulePair>,
    ) {
        let n = a.n();
        if i == n {
            out.push(ModulePair::new_unchecked(a.clone(), b.clone()));
            return;
        }
        a.set(i, i, FieldElement::ONE);
        go(i + 1, a, b, used, out);
        a.set(i, i, FieldElement::ZERO);
        for j in 0..i {
            if !used[j] {
                used[j] = true;
                b.set(i, j, FieldElement::ONE);
                go(i + 1, a, b, used, out);
                b.set(i, j, FieldElement::ZERO);
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    let (mut a, mut b) = (LowerTriMatrix::zero(n, field), LowerTriMatrix::zero(n, field));
    go(0, &mut a, &mut b, &mut vec![false; n], &mut out);
    out.sort();
    Ok(out)
}

/// Witness `U (input) Q = output` with `U` a unit and `Q` in `GL_2(T_n)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Certificate {
    #[serde(rename = "U")]
    pub u: LowerTriMatrix,
    #[serde(rename = "Q")]
    pub q: GL2Element,
}

impl Certificate {
    pub fn identity(n: usize, f: PrimeField) -> Self {
        Certificate { u: LowerTriMatrix::identity(n, f), q: GL2Element::identity(n, f) }
    }

    /// Applies `left` before and `right` after the existing transformation.
    fn compose(&mut self, left: Option<&LowerTriMatrix>, right: Option<&GL2Element>) {
        if let Some(l) = left {
            self.u = l.mul_unchecked(&self.u);
        }
        if let Some(r) = right {
            self.q = self.q.mul(r).expect("same dimensions");
        }
    }

    pub fn to_text(&self) -> String {
        format!("U\n{}\nQ\n{}", self.u, self.q)
    }
}

/// True iff `cert.u` is a unit and `cert.u * input * cert.q == output`.
/// `cert.q` is a [`GL2Element`] and therefore valid by construction.
pub fn verify_certificate(input: &ModulePair, output: &ModulePair, cert: &Certificate) -> bool {
    if !cert.u.is_unit() {
        return false;
    }
    match input.left_mul(&cert.u).and_then(|x| cert.q.act_right(&x)) {
        Ok(x) => &x == output,
        Err(_) => false,
    }
}

/// A pivot `(row, column)` of the `G` matrix, one-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Pivot {
    pub row: usize,
    pub col: usize,
}

impl fmt::Display for Pivot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// Pivot selection on `G`: the nonzero rows `i_1 < i_2 < ...` in turn, each
/// taking the last nonzero column not already chosen, provided the minor on
/// the chosen rows and columns stays nonsingular.
pub fn select_pivots(g: &LowerTriMatrix) -> Result<Vec<Pivot>> {
    let n = g.n();
    let f = g.field();
    let mut chosen: Vec<Pivot> = Vec::new();
    for i in 0..n {
        if (0..=i).all(|j| g.get(i, j).is_zero()) {
            continue;
        }
        let taken = |c: usize| chosen.iter().any(|p| p.col == c + 1);
        let Some(j) = (0..=i).rev().find(|&c| !taken(c) && !g.get(i, c).is_zero()) else {
            return Err(Error::PivotSelectionFailed { row: i + 1 });
        };
        chosen.push(Pivot { row: i + 1, col: j + 1 });
        let minor: Vec<Vec<FieldElement>> = chosen
            .iter()
            .map(|r| chosen.iter().map(|c| g.get(r.row - 1, c.col - 1)).collect())
            .collect();
        if dense_rank(f, minor) != chosen.len() {
            return Err(Error::PivotSelectionFailed { row: i + 1 });
        }
    }
    Ok(chosen)
}

/// Solves `M x = rhs` over GF(p) for square `M`.
fn solve(f: PrimeField, mut m: Vec<Vec<FieldElement>>, mut rhs: Vec<FieldElement>) -> Option<Vec<FieldElement>> {
    let k = rhs.len();
    for c in 0..k {
        let piv = (c..k).find(|&r| !m[r][c].is_zero())?;
        m.swap(c, piv);
        rhs.swap(c, piv);
        let inv = f.inv(m[c][c]).ok()?;
        for x in m[c].iter_mut() {
            *x = f.mul(*x, inv);
        }
        rhs[c] = f.mul(rhs[c], inv);
        for r in 0..k {
            if r == c || m[r][c].is_zero() {
                continue;
            }
            let factor = m[r][c];
            for cc in 0..k {
                let v = f.mul(factor, m[c][cc]);
                m[r][cc] = f.sub(m[r][cc], v);
            }
            rhs[r] = f.sub(rhs[r], f.mul(factor, rhs[c]));
        }
    }
    Some(rhs)
}

/// Builds the unit `V` with, for every pivot `(i_t, j_t)`,
/// `sum_{α = j_t}^{i_t - 1} g_{i_t α} v_{α j_t} = 1` and
/// `sum_{α = l}^{i_t - 1} g_{i_t α} v_{α l} = 0` for `l < j_t`.
///
/// Column `l` of `V` is solved for its entries in pivot-column rows
/// `j_s >= l`; the other entries are 0 off the diagonal and 1 on it.
pub fn build_v(g: &LowerTriMatrix, pivots: &[Pivot]) -> Result<LowerTriMatrix> {
    let n = g.n();
    let f = g.field();
    let mut v = LowerTriMatrix::identity(n, f);
    let is_pivot_col = |c: usize| pivots.iter().any(|p| p.col == c + 1);
    // coefficient g_{i_t α}, restricted to α <= i_t - 1
    let coef = |p: &Pivot, alpha: usize| if alpha + 1 < p.row { g.get(p.row - 1, alpha) } else { FieldElement::ZERO };
    for l in 0..n {
        let eqs: Vec<&Pivot> = pivots.iter().filter(|p| p.col > l).collect();
        if eqs.is_empty() {
            continue;
        }
        let unknowns: Vec<usize> = eqs.iter().map(|p| p.col - 1).collect();
        let l_is_pivot = is_pivot_col(l);
        let m: Vec<Vec<FieldElement>> =
            eqs.iter().map(|p| unknowns.iter().map(|&alpha| coef(p, alpha)).collect()).collect();
        let rhs: Vec<FieldElement> = eqs
            .iter()
            .map(|p| {
                let target = if p.col == l + 1 { FieldElement::ONE } else { FieldElement::ZERO };
                if l_is_pivot {
                    target
                } else {
                    // v_ll = 1 is fixed
                    f.sub(target, coef(p, l))
                }
            })
            .collect();
        let sol = solve(f, m, rhs).ok_or(Error::SingularSystem { column: l + 1 })?;
        for (&alpha, &val) in unknowns.iter().zip(&sol) {
            v.set(alpha, l, val);
        }
    }
    if !v.is_unit() {
        let column = (0..n).find(|&i| v.get(i, i).is_zero()).map_or(0, |i| i + 1);
        return Err(Error::SingularSystem { column });
    }
    Ok(v)
}

/// Builds the unit `K` (unit diagonal) that clears, in every pivot column
/// `j` of `H` (a 1 at row `i'` with zeros above), all entries below `i'`:
/// `k_{i i'} = -(k_{i(i'+1)} h_{(i'+1)j} + ... + k_{ii} h_{ij})`.
/// Only rows with `a_{i'i'} = 0` act as pivot rows, so `K A = A`.
pub fn build_k(a: &LowerTriMatrix, h: &LowerTriMatrix) -> Result<LowerTriMatrix> {
    let n = h.n();
    let f = h.field();
    if a.n() != n || a.field() != f {
        return Err(Error::DimensionMismatch("A and H differ".into()));
    }
    // pivot_col[m] = column whose leading 1 sits in row m
    let pivot_col: Vec<Option<usize>> = (0..n)
        .map(|m| {
            if !a.get(m, m).is_zero() {
                return None;
            }
            let j = (0..m).find(|&j| !h.get(m, j).is_zero())?;
            let leads = h.get(m, j) == FieldElement::ONE && (0..m).all(|r| h.get(r, j).is_zero());
            leads.then_some(j)
        })
        .collect();
    let mut k = LowerTriMatrix::identity(n, f);
    for i in 0..n {
        for m in (0..i).rev() {
            let Some(j) = pivot_col[m] else { continue };
            let mut acc = FieldElement::ZERO;
            for r in m + 1..=i {
                acc = f.mul_add(acc, k.get(i, r), h.get(r, j));
            }
            k.set(i, m, f.neg(acc));
        }
    }
    Ok(k)
}

/// Which stage of the reduction a snapshot follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Input,
    /// `(C, D)`, with `d_ii = 0`.
    DiagonalClearing,
    /// `(J, E) = (P^-1 C P, P^-1 D)`.
    Similarity,
    /// `(A, F) = J' (J, E)`.
    Scaling,
    /// `(A, G) = (A, F) [I -F; 0 I]`.
    Transvection,
    /// Rook reduction of a residue the staged pipeline could not handle.
    ResidualReduction,
    /// `(A, H) = (A, G) [I 0; 0 V]`.
    PivotV,
    /// `(A, L) = K (A, H)`.
    ClearK,
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit enum serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

/// One snapshot: the pair after this stage and the factors that produced
/// it from the previous snapshot (`left * previous * right`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Stage {
    pub kind: StageKind,
    pub pair: ModulePair,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub left: Option<LowerTriMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub right: Option<GL2Element>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Ordered snapshots of a reduction, plus the pivots chosen for the `V`
/// step and the reasons the residual reduction ran (if it did).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CanonicalizationTrace {
    pub stages: Vec<Stage>,
    pub pivots: Vec<Pivot>,
    pub residual_activations: Vec<String>,
}

impl CanonicalizationTrace {
    pub fn stage(&self, kind: StageKind) -> Option<&Stage> {
        self.stages.iter().find(|s| s.kind == kind)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.stages {
            out.push_str(&format!("== {}\n", s.kind));
            if let Some(note) = &s.note {
                out.push_str(&format!("# {note}\n"));
            }
            if let Some(l) = &s.left {
                out.push_str(&format!("left\n{l}\n"));
            }
            if let Some(r) = &s.right {
                out.push_str(&format!("right\n{r}"));
            }
            out.push_str(&format!("pair\n{}\n", s.pair));
        }
        let piv: Vec<String> = self.pivots.iter().map(|p| p.to_string()).collect();
        out.push_str(&format!("pivots {}\n", piv.join(" ")));
        out
    }
}

/// Result of [`canonicalize`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Canonicalization {
    pub canonical: ModulePair,
    pub certificate: Certificate,
    pub trace: CanonicalizationTrace,
}

struct Pipeline {
    current: ModulePair,
    cert: Certificate,
    trace: CanonicalizationTrace,
}

impl Pipeline {
    fn new(input: &ModulePair) -> Self {
        let mut trace = CanonicalizationTrace::default();
        trace.stages.push(Stage { kind: StageKind::Input, pair: input.clone(), left: None, right: None, note: None });
        Pipeline { current: input.clone(), cert: Certificate::identity(input.n(), input.field()), trace }
    }

    fn apply(&mut self, kind: StageKind, left: Option<LowerTriMatrix>, right: Option<GL2Element>, note: Option<String>) {
        let mut next = self.current.clone();
        if let Some(l) = &left {
            next = next.left_mul_unchecked(l);
        }
        if let Some(r) = &right {
            next = r.act_right_unchecked(&next);
        }
        self.cert.compose(left.as_ref(), right.as_ref());
        self.current = next.clone();
        self.trace.stages.push(Stage { kind, pair: next, left, right, note });
    }

    fn residual(&mut self, reason: String) {
        let (normal, u, q) = reduce_with_certificate(&self.current).expect("input is free");
        debug_assert_eq!(q.act_right(&self.current.left_mul_unchecked(&u)).ok(), Some(normal));
        self.trace.residual_activations.push(reason.clone());
        self.apply(StageKind::ResidualReduction, Some(u), Some(q), Some(reason));
    }

    fn finish(self) -> Result<Canonicalization> {
        if !is_canonical(&self.current) {
            return Err(Error::CanonicalizationFailed { normal_form: Box::new(self.current) });
        }
        Ok(Canonicalization { canonical: self.current, certificate: self.cert, trace: self.trace })
    }

    /// Pivot selection, `V` and `K` on a pair `(A, G)` with `A` a 0/1
    /// diagonal matrix. Returns the reason for falling back, if any.
    fn pivot_stages(&mut self) -> Option<String> {
        let g = self.current.b().clone();
        let pivots = match select_pivots(&g) {
            Ok(p) => p,
            Err(e) => return Some(e.to_string()),
        };
        let v = match build_v(&g, &pivots) {
            Ok(v) => v,
            Err(e) => return Some(e.to_string()),
        };
        self.trace.pivots = pivots;
        self.apply(StageKind::PivotV, None, Some(GL2Element::right_block(v).expect("unit")), None);
        let k = build_k(self.current.a(), self.current.b()).expect("same dimensions");
        self.apply(StageKind::ClearK, Some(k), None, None);
        if is_canonical(&self.current) {
            None
        } else {
            Some("residue left after the K step".into())
        }
    }
}

/// Runs the pivot, `V` and `K` stages on a pair already at the `(A, G)`
/// stage: `A` a 0/1 diagonal matrix and `g_ij = 0` whenever `a_ii = 1`.
pub fn reduce_from_g_stage(pair: &ModulePair) -> Result<Canonicalization> {
    if !pair.is_free() {
        return Err(Error::NotFree);
    }
    let a = pair.a();
    let well_formed = a.is_diagonal()
        && a.diagonal().iter().all(|e| e.value() <= 1)
        && (0..pair.n()).all(|i| a.get(i, i).is_zero() || (0..=i).all(|j| pair.b().get(i, j).is_zero()));
    if !well_formed {
        return Err(Error::DimensionMismatch("pair is not at the (A, G) stage".into()));
    }
    let mut pipe = Pipeline::new(pair);
    if let Some(reason) = pipe.pivot_stages() {
        pipe.residual(reason);
    }
    pipe.finish()
}

/// Reduces a free pair to the canonical representative of its orbit.
///
/// Errors with [`Error::NotFree`] on non-free input and with
/// [`Error::CanonicalizationFailed`] when the orbit contains no canonical
/// pair (the error carries the orbit's normal form).
pub fn canonicalize(pair: &ModulePair) -> Result<Canonicalization> {
    if !pair.is_free() {
        return Err(Error::NotFree);
    }
    let n = pair.n();
    let f = pair.field();
    let mut pipe = Pipeline::new(pair);

    // diagonal clearing: per-index blocks make d_ii = 0
    let blocks: Vec<[FieldElement; 4]> = (0..n)
        .map(|i| {
            let (a, b) = (pair.a().get(i, i), pair.b().get(i, i));
            if !a.is_zero() {
                let y = f.neg(f.mul(f.inv(a).expect("nonzero"), b));
                [FieldElement::ONE, y, FieldElement::ZERO, FieldElement::ONE]
            } else if !b.is_zero() {
                [FieldElement::ZERO, f.neg(FieldElement::ONE), FieldElement::ONE, FieldElement::ZERO]
            } else {
                [FieldElement::ONE, FieldElement::ZERO, FieldElement::ZERO, FieldElement::ONE]
            }
        })
        .collect();
    let g1 = GL2Element::from_index_blocks(f, &blocks).expect("blocks are invertible");
    pipe.apply(StageKind::DiagonalClearing, None, Some(g1), None);

    // triangular similarity: clear c_ij whenever c_ii != c_jj, columns right
    // to left and rows top to bottom within a column
    let mut c = pipe.current.a().clone();
    let mut p = LowerTriMatrix::identity(n, f);
    let mut p_inv = LowerTriMatrix::identity(n, f);
    for j in (0..n).rev() {
        for i in j + 1..n {
            let (cij, cii, cjj) = (c.get(i, j), c.get(i, i), c.get(j, j));
            if cij.is_zero() || cii == cjj {
                continue;
            }
            let t = f.div(cij, f.sub(cjj, cii)).expect("distinct diagonal entries");
            let tr = LowerTriMatrix::single(n, f, i, j, t).add_unchecked(&LowerTriMatrix::identity(n, f));
            let tr_inv = LowerTriMatrix::single(n, f, i, j, f.neg(t)).add_unchecked(&LowerTriMatrix::identity(n, f));
            c = tr_inv.mul_unchecked(&c).mul_unchecked(&tr);
            debug_assert!(c.get(i, j).is_zero());
            p = p.mul_unchecked(&tr);
            p_inv = tr_inv.mul_unchecked(&p_inv);
        }
    }
    pipe.apply(StageKind::Similarity, Some(p_inv), Some(GL2Element::left_block(p).expect("unit")), None);

    // scaling: lambda_i -> lambda_i^-1, 0 -> 1
    let scale: Vec<FieldElement> = pipe
        .current
        .a()
        .diagonal()
        .into_iter()
        .map(|l| if l.is_zero() { FieldElement::ONE } else { f.inv(l).expect("nonzero") })
        .collect();
    let mut jprime = LowerTriMatrix::zero(n, f);
    for (i, s) in scale.into_iter().enumerate() {
        jprime.set(i, i, s);
    }
    pipe.apply(StageKind::Scaling, Some(jprime), None, None);

    // transvection [I -F; 0 I]
    let fneg = pipe.current.b().neg();
    pipe.apply(StageKind::Transvection, None, Some(GL2Element::upper_transvection(fneg).expect("unipotent")), None);

    if !pipe.current.a().is_diagonal() {
        pipe.residual("A-part keeps off-diagonal entries between equal eigenvalues".into());
        if !is_canonical(&pipe.current) {
            return pipe.finish();
        }
    }
    if let Some(reason) = pipe.pivot_stages() {
        pipe.residual(reason);
    }
    pipe.finish()
}

/// Column side within a column group of `[A|B]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Side {
    A,
    B,
}

struct Reducer {
    pair: ModulePair,
    u: LowerTriMatrix,
    q: GL2Element,
}

impl Reducer {
    fn entry(&self, i: usize, j: usize, s: Side) -> FieldElement {
        match s {
            Side::A => self.pair.a().get(i, j),
            Side::B => self.pair.b().get(i, j),
        }
    }

    fn left(&mut self, l: LowerTriMatrix) {
        self.pair = self.pair.left_mul_unchecked(&l);
        self.u = l.mul_unchecked(&self.u);
    }

    fn right(&mut self, g: GL2Element) {
        self.pair = g.act_right_unchecked(&self.pair);
        self.q = self.q.mul(&g).expect("same dimensions");
    }

    /// row i += c * row r
    fn row_add(&mut self, i: usize, r: usize, c: FieldElement) {
        let (n, f) = (self.pair.n(), self.pair.field());
        let mut l = LowerTriMatrix::identity(n, f);
        l.set(i, r, c);
        self.left(l);
    }

    fn row_scale(&mut self, i: usize, c: FieldElement) {
        let (n, f) = (self.pair.n(), self.pair.field());
        let mut l = LowerTriMatrix::identity(n, f);
        l.set(i, i, c);
        self.left(l);
    }

    /// Columns `(k, A), (k, B)` times the 2x2 matrix `[x y; w z]`.
    fn group_op(&mut self, k: usize, block: [FieldElement; 4]) {
        let (n, f) = (self.pair.n(), self.pair.field());
        let blocks: Vec<[FieldElement; 4]> = (0..n)
            .map(|i| {
                if i == k {
                    block
                } else {
                    [FieldElement::ONE, FieldElement::ZERO, FieldElement::ZERO, FieldElement::ONE]
                }
            })
            .collect();
        self.right(GL2Element::from_index_blocks(f, &blocks).expect("invertible block"));
    }

    /// column (j, dst) += c * column (k, src), `k >= j`, `(k, src) != (j, dst)`.
    fn col_add(&mut self, k: usize, src: Side, j: usize, dst: Side, c: FieldElement) {
        let (n, f) = (self.pair.n(), self.pair.field());
        let mut blocks: [LowerTriMatrix; 4] =
            [LowerTriMatrix::identity(n, f), LowerTriMatrix::zero(n, f), LowerTriMatrix::zero(n, f), LowerTriMatrix::identity(n, f)];
        let idx = match (src, dst) {
            (Side::A, Side::A) => 0,
            (Side::A, Side::B) => 1,
            (Side::B, Side::A) => 2,
            (Side::B, Side::B) => 3,
        };
        let old = blocks[idx].get(k, j);
        blocks[idx].set(k, j, f.add(old, c));
        let [x, y, w, z] = blocks;
        self.right(GL2Element::new(x, y, w, z).expect("elementary column operation"));
    }
}

/// Row-by-row reduction of a free pair to its orbit normal form: every row
/// of `[A|B]` becomes a single 1 in a column of its own.
///
/// Row `i` is first cleared against the pivots of earlier rows, then its
/// pivot is placed in the highest column group `k` where it is still
/// nonzero: `a_ii` when `k = i`, otherwise the `B` column of group `k` if
/// both columns of the group are unused and the free one if not. Column
/// operations only add later groups into earlier ones, so rows already
/// reduced are never touched again. The normal form is canonical exactly
/// when the orbit contains a canonical pair.
pub fn reduce_to_normal_form(pair: &ModulePair) -> Result<(ModulePair, Certificate)> {
    let (normal, u, q) = reduce_with_certificate(pair)?;
    Ok((normal, Certificate { u, q }))
}

fn reduce_with_certificate(pair: &ModulePair) -> Result<(ModulePair, LowerTriMatrix, GL2Element)> {
    let n = pair.n();
    let f = pair.field();
    let mut r = Reducer { pair: pair.clone(), u: LowerTriMatrix::identity(n, f), q: GL2Element::identity(n, f) };
    let mut pivots: Vec<(usize, Side)> = Vec::with_capacity(n);
    let one = FieldElement::ONE;
    let zero = FieldElement::ZERO;
    for i in 0..n {
        for (row, &(g, s)) in pivots.clone().iter().enumerate() {
            let c = r.entry(i, g, s);
            if !c.is_zero() {
                r.row_add(i, row, f.neg(c));
            }
        }
        let Some(k) = (0..=i).rev().find(|&j| !r.entry(i, j, Side::A).is_zero() || !r.entry(i, j, Side::B).is_zero())
        else {
            return Err(Error::NotFree);
        };
        let used = |s: Side| pivots.contains(&(k, s));
        let (a, b) = (r.entry(i, k, Side::A), r.entry(i, k, Side::B));
        let side = if k == i {
            if !a.is_zero() {
                let ai = f.inv(a)?;
                r.group_op(k, [ai, f.neg(f.mul(b, ai)), zero, one]);
            } else {
                r.group_op(k, [zero, one, f.inv(b)?, zero]);
            }
            Side::A
        } else if !used(Side::A) && !used(Side::B) {
            if !b.is_zero() {
                let bi = f.inv(b)?;
                r.group_op(k, [one, zero, f.neg(f.mul(a, bi)), bi]);
            } else {
                r.group_op(k, [zero, f.inv(a)?, one, zero]);
            }
            Side::B
        } else if !used(Side::A) {
            r.row_scale(i, f.inv(a)?);
            Side::A
        } else {
            r.row_scale(i, f.inv(b)?);
            Side::B
        };
        debug_assert_eq!(r.entry(i, k, side), one);
        for j in 0..=k {
            for s in [Side::A, Side::B] {
                if (j, s) == (k, side) {
                    continue;
                }
                let c = r.entry(i, j, s);
                if !c.is_zero() {
                    r.col_add(k, side, j, s, f.neg(c));
                }
            }
        }
        pivots.push((k, side));
    }
    Ok((r.pair, r.u, r.q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gl2::gl2_generators;
    use crate::modpairs::all_pairs;
    use crate::DEFAULT_BUDGET;

    fn f(p: u32) -> PrimeField {
        PrimeField::new(p).unwrap()
    }

    fn pair(p: u32, a: &[&[u64]], b: &[&[u64]]) -> ModulePair {
        let fl = f(p);
        let m = |rows: &[&[u64]]| LowerTriMatrix::from_rows(fl, &rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        ModulePair::new(m(a), m(b)).unwrap()
    }

    #[test]
    fn recognizer_examples() {
        let fl = f(2);
        assert!(is_canonical(&ModulePair::identity_pair(3, fl)));
        let bad = pair(2, &[&[1, 0], &[0, 1]], &[&[0, 0], &[1, 0]]);
        assert!(!is_canonical(&bad));
        assert!(!is_canonical(&pair(3, &[&[2, 0], &[0, 1]], &[&[0, 0], &[0, 0]])));
        // two B entries in one column
        assert!(!is_canonical(&pair(2, &[&[1, 0, 0], &[0, 0, 0], &[0, 0, 0]], &[&[0, 0, 0], &[1, 0, 0], &[1, 0, 0]])));
    }

    #[test]
    fn recognizer_matches_defining_conditions() {
        // every 0/1 pattern for n <= 3
        for n in 1..=3 {
            for x in all_pairs(n, f(2), DEFAULT_BUDGET).unwrap() {
                assert_eq!(is_canonical(&x), satisfies_defining_conditions(&x), "{x}");
            }
        }
        // n = 4, 5: every pattern with A diagonal and B strictly lower
        let fl = f(2);
        for n in 4..=5 {
            let offdiag: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..i).map(move |j| (i, j))).collect();
            for amask in 0u32..(1 << n) {
                for bmask in 0u64..(1 << offdiag.len()) {
                    let mut a = LowerTriMatrix::zero(n, fl);
                    let mut b = LowerTriMatrix::zero(n, fl);
                    for i in 0..n {
                        if amask >> i & 1 == 1 {
                            a.set(i, i, FieldElement::ONE);
                        }
                    }
                    for (k, &(i, j)) in offdiag.iter().enumerate() {
                        if bmask >> k & 1 == 1 {
                            b.set(i, j, FieldElement::ONE);
                        }
                    }
                    let x = ModulePair::new(a, b).unwrap();
                    assert_eq!(is_canonical(&x), satisfies_defining_conditions(&x));
                }
            }
        }
    }

    #[test]
    fn enumerate_small() {
        let fl = f(2);
        let two = enumerate_canonical(2, fl, DEFAULT_BUDGET).unwrap();
        assert_eq!(
            two,
            vec![pair(2, &[&[1, 0], &[0, 0]], &[&[0, 0], &[1, 0]]), ModulePair::identity_pair(2, fl)]
        );
        assert_eq!(enumerate_canonical(3, fl, DEFAULT_BUDGET).unwrap().len(), 5);
        assert_eq!(enumerate_canonical(1, fl, DEFAULT_BUDGET), Err(Error::UnsupportedDimension(1)));
        assert!(matches!(enumerate_canonical(8, fl, 100), Err(Error::BudgetExceeded { .. })));
        for n in 2..=8 {
            let all = enumerate_canonical(n, fl, DEFAULT_BUDGET).unwrap();
            assert_eq!(num_bigint::BigUint::from(all.len()), bell(n));
            assert!(all.iter().all(is_canonical));
            assert!(all.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn pivot_examples() {
        let fl = f(3);
        assert!(select_pivots(&LowerTriMatrix::zero(4, fl)).unwrap().is_empty());
        let g = LowerTriMatrix::single(4, fl, 2, 1, FieldElement::ONE);
        assert_eq!(select_pivots(&g).unwrap(), vec![Pivot { row: 3, col: 2 }]);
        // rows (e3 + e2) and (e3 + e2 + e1): the forced column leaves a
        // singular minor
        let mut g = LowerTriMatrix::zero(5, fl);
        for (i, j) in [(4, 3), (4, 2), (5, 3), (5, 2), (5, 1)] {
            g.set(i - 1, j - 1, FieldElement::ONE);
        }
        assert_eq!(select_pivots(&g), Err(Error::PivotSelectionFailed { row: 5 }));
    }

    #[test]
    fn v_and_k_single_pivot() {
        let fl = f(5);
        let g = LowerTriMatrix::single(4, fl, 3, 1, fl.elem(3));
        let piv = select_pivots(&g).unwrap();
        let v = build_v(&g, &piv).unwrap();
        let mut expected = LowerTriMatrix::identity(4, fl);
        expected.set(1, 1, fl.elem(2));
        assert_eq!(v, expected);

        let a = LowerTriMatrix::diagonal_from(fl, &[1, 1, 0, 0]);
        let mut h = LowerTriMatrix::zero(4, fl);
        h.set(2, 0, FieldElement::ONE);
        h.set(3, 0, fl.elem(4));
        h.set(3, 1, FieldElement::ONE);
        let k = build_k(&a, &h).unwrap();
        let mut expected = LowerTriMatrix::identity(4, fl);
        expected.set(3, 2, fl.elem(1));
        assert_eq!(k, expected);
        let l = k.mul(&h).unwrap();
        assert!(is_canonical(&ModulePair::new(a.clone(), l).unwrap()));
        // canonical H needs no clearing
        let canon = LowerTriMatrix::single(4, fl, 2, 0, FieldElement::ONE);
        assert_eq!(build_k(&a, &canon).unwrap(), LowerTriMatrix::identity(4, fl));
    }

    #[test]
    fn certificate_checks() {
        let fl = f(3);
        let x = pair(3, &[&[1, 0], &[2, 0]], &[&[0, 0], &[1, 2]]);
        assert!(verify_certificate(&x, &x, &Certificate::identity(2, fl)));
        let sw = GL2Element::swap(2, fl);
        let cert = Certificate { u: LowerTriMatrix::identity(2, fl), q: sw.clone() };
        assert!(verify_certificate(&x, &sw.act_right(&x).unwrap(), &cert));
        let bad = Certificate { u: LowerTriMatrix::diagonal_from(fl, &[1, 0]), q: sw };
        assert!(!verify_certificate(&x, &x, &bad));
    }

    #[test]
    fn fixed_points() {
        let fl = f(3);
        for n in 2..=5 {
            for x in enumerate_canonical(n, fl, DEFAULT_BUDGET).unwrap() {
                let c = canonicalize(&x).unwrap();
                assert_eq!(c.canonical, x);
                assert!(c.trace.residual_activations.is_empty());
            }
        }
    }

    #[test]
    fn non_free_is_rejected() {
        let fl = f(2);
        let zero = ModulePair::new(LowerTriMatrix::zero(2, fl), LowerTriMatrix::zero(2, fl)).unwrap();
        assert_eq!(canonicalize(&zero).unwrap_err(), Error::NotFree);
        assert!(reduce_to_normal_form(&zero).is_err());
    }

    #[test]
    fn n3_example() {
        let x = pair(2, &[&[1, 0, 0], &[0, 0, 0], &[0, 1, 0]], &[&[0, 0, 0], &[1, 0, 0], &[0, 0, 0]]);
        let c = canonicalize(&x).unwrap();
        let expected = pair(2, &[&[1, 0, 0], &[0, 0, 0], &[0, 0, 0]], &[&[0, 0, 0], &[1, 0, 0], &[0, 1, 0]]);
        assert_eq!(c.canonical, expected);
        assert!(verify_certificate(&x, &c.canonical, &c.certificate));
    }

    #[test]
    fn soundness_exhaustive_small() {
        for (n, p) in [(2, 2), (2, 3), (3, 2)] {
            for x in all_pairs(n, f(p), DEFAULT_BUDGET).unwrap().filter(|x| x.is_free()) {
                let c = canonicalize(&x).unwrap();
                assert!(is_canonical(&c.canonical));
                assert!(verify_certificate(&x, &c.canonical, &c.certificate), "{x}");
                let (normal, cert) = reduce_to_normal_form(&x).unwrap();
                assert_eq!(normal, c.canonical);
                assert!(verify_certificate(&x, &normal, &cert));
            }
        }
    }

    #[test]
    fn trace_stages_chain() {
        let x = pair(5, &[&[2, 0, 0], &[3, 0, 0], &[1, 4, 3]], &[&[1, 0, 0], &[0, 0, 0], &[2, 2, 1]]);
        let c = canonicalize(&x).unwrap();
        let stages = &c.trace.stages;
        assert_eq!(stages[0].kind, StageKind::Input);
        for w in stages.windows(2) {
            let mut y = w[0].pair.clone();
            if let Some(l) = &w[1].left {
                y = y.left_mul(l).unwrap();
            }
            if let Some(r) = &w[1].right {
                y = r.act_right(&y).unwrap();
            }
            assert_eq!(y, w[1].pair, "stage {}", w[1].kind);
        }
        assert_eq!(&stages.last().unwrap().pair, &c.canonical);
        let d = c.trace.stage(StageKind::DiagonalClearing).unwrap();
        assert!(d.pair.b().diagonal().iter().all(|e| e.is_zero()));
    }

    #[test]
    fn orbit_without_canonical_member() {
        // rows sit at (1,A), (1,B), (2,B), (2,A): no canonical pair has the
        // same rank profile
        let x = pair(2, &[&[1, 0, 0, 0], &[0, 0, 0, 0], &[0, 0, 0, 0], &[0, 1, 0, 0]], &[
            &[0, 0, 0, 0],
            &[1, 0, 0, 0],
            &[0, 1, 0, 0],
            &[0, 0, 0, 0],
        ]);
        assert!(x.is_free());
        match canonicalize(&x) {
            Err(Error::CanonicalizationFailed { normal_form }) => {
                assert_eq!(*normal_form, x);
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn generator_moves_preserve_normal_form() {
        let fl = f(2);
        let gens = gl2_generators(3, fl);
        for x in all_pairs(3, fl, DEFAULT_BUDGET).unwrap().filter(|x| x.is_free()).step_by(5) {
            let (nx, _) = reduce_to_normal_form(&x).unwrap();
            for g in &gens {
                let (ny, _) = reduce_to_normal_form(&g.act_right(&x).unwrap()).unwrap();
                assert_eq!(nx, ny);
            }
        }
    }

    fn arb_pair() -> impl proptest::strategy::Strategy<Value = (ModulePair, u64)> {
        use proptest::prelude::*;
        (2usize..=5, prop::sample::select(vec![2u32, 3, 5, 7])).prop_flat_map(|(n, p)| {
            let len = n * (n + 1) / 2;
            let entries = prop::collection::vec(0..p, 2 * len);
            (entries, any::<u64>()).prop_map(move |(e, s)| {
                let fl = f(p);
                let m = |xs: &[u32]| {
                    LowerTriMatrix::from_packed(n, fl, xs.iter().map(|&v| fl.elem(v as i64)).collect()).unwrap()
                };
                (ModulePair::new(m(&e[..len]), m(&e[len..])).unwrap(), s)
            })
        })
    }

    proptest::proptest! {
        #[test]
        fn reduction_is_certified_and_orbit_invariant((x, s) in arb_pair()) {
            proptest::prop_assume!(x.is_free());
            let (normal, cert) = reduce_to_normal_form(&x).unwrap();
            proptest::prop_assert!(verify_certificate(&x, &normal, &cert));
            let gens = gl2_generators(x.n(), x.field());
            let g = &gens[(s % gens.len() as u64) as usize];
            let (moved, _) = reduce_to_normal_form(&g.act_right(&x).unwrap()).unwrap();
            proptest::prop_assert_eq!(&moved, &normal);
            match canonicalize(&x) {
                Ok(c) => {
                    proptest::prop_assert!(is_canonical(&c.canonical));
                    proptest::prop_assert!(verify_certificate(&x, &c.canonical, &c.certificate));
                    proptest::prop_assert_eq!(c.canonical, normal);
                }
                Err(Error::CanonicalizationFailed { normal_form }) => {
                    proptest::prop_assert_eq!(*normal_form, normal.clone());
                    proptest::prop_assert!(!is_canonical(&normal));
                }
                Err(e) => proptest::prop_assert!(false, "unexpected error {e}"),
            }
        }
    }
}
