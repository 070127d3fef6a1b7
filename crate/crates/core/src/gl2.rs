//! The group `GL_2(T_n)` of invertible `2 x 2` block matrices over `T_n`,
//! acting on pairs from the right.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{FieldElement, PrimeField};
use crate::modpairs::ModulePair;
use crate::trimat::LowerTriMatrix;

/// `[X Y; W Z]` with `x_ii z_ii - y_ii w_ii != 0` for every `i`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct GL2Element {
    #[serde(rename = "X")]
    x: LowerTriMatrix,
    #[serde(rename = "Y")]
    y: LowerTriMatrix,
    #[serde(rename = "W")]
    w: LowerTriMatrix,
    #[serde(rename = "Z")]
    z: LowerTriMatrix,
}

/// Invertibility criterion for `[X Y; W Z]`: every per-index `2 x 2`
/// diagonal determinant is nonzero.
pub fn gl2_is_invertible(
    x: &LowerTriMatrix,
    y: &LowerTriMatrix,
    w: &LowerTriMatrix,
    z: &LowerTriMatrix,
) -> Result<bool> {
    let n = x.n();
    let f = x.field();
    if [y, w, z].iter().any(|m| m.n() != n || m.field() != f) {
        return Err(Error::DimensionMismatch("blocks of a GL2 element must agree".into()));
    }
    Ok((0..n).all(|i| !diag_det(f, x, y, w, z, i).is_zero()))
}

fn diag_det(
    f: PrimeField,
    x: &LowerTriMatrix,
    y: &LowerTriMatrix,
    w: &LowerTriMatrix,
    z: &LowerTriMatrix,
    i: usize,
) -> FieldElement {
    f.sub(f.mul(x.get(i, i), z.get(i, i)), f.mul(y.get(i, i), w.get(i, i)))
}

type Blocks = [LowerTriMatrix; 4];

fn block_mul(l: &Blocks, r: &Blocks) -> Blocks {
    let [x, y, w, z] = l;
    let [x2, y2, w2, z2] = r;
    [
        x.mul_unchecked(x2).add_unchecked(&y.mul_unchecked(w2)),
        x.mul_unchecked(y2).add_unchecked(&y.mul_unchecked(z2)),
        w.mul_unchecked(x2).add_unchecked(&z.mul_unchecked(w2)),
        w.mul_unchecked(y2).add_unchecked(&z.mul_unchecked(z2)),
    ]
}

fn block_add(l: &Blocks, r: &Blocks) -> Blocks {
    [
        l[0].add_unchecked(&r[0]),
        l[1].add_unchecked(&r[1]),
        l[2].add_unchecked(&r[2]),
        l[3].add_unchecked(&r[3]),
    ]
}

impl GL2Element {
    pub fn new(x: LowerTriMatrix, y: LowerTriMatrix, w: LowerTriMatrix, z: LowerTriMatrix) -> Result<Self> {
        if !gl2_is_invertible(&x, &y, &w, &z)? {
            return Err(Error::NotInvertible);
        }
        Ok(GL2Element { x, y, w, z })
    }

    fn from_blocks_unchecked([x, y, w, z]: Blocks) -> Self {
        GL2Element { x, y, w, z }
    }

    fn blocks(&self) -> Blocks {
        [self.x.clone(), self.y.clone(), self.w.clone(), self.z.clone()]
    }

    pub fn identity(n: usize, f: PrimeField) -> Self {
        let (i, o) = (LowerTriMatrix::identity(n, f), LowerTriMatrix::zero(n, f));
        GL2Element { x: i.clone(), y: o.clone(), w: o, z: i }
    }

    /// `[0 I; I 0]`
    pub fn swap(n: usize, f: PrimeField) -> Self {
        let (i, o) = (LowerTriMatrix::identity(n, f), LowerTriMatrix::zero(n, f));
        GL2Element { x: o.clone(), y: i.clone(), w: i, z: o }
    }

    /// `[U 0; 0 I]`
    pub fn left_block(u: LowerTriMatrix) -> Result<Self> {
        let (n, f) = (u.n(), u.field());
        Self::new(u, LowerTriMatrix::zero(n, f), LowerTriMatrix::zero(n, f), LowerTriMatrix::identity(n, f))
    }

    /// `[I 0; 0 U]`
    pub fn right_block(u: LowerTriMatrix) -> Result<Self> {
        let (n, f) = (u.n(), u.field());
        Self::new(LowerTriMatrix::identity(n, f), LowerTriMatrix::zero(n, f), LowerTriMatrix::zero(n, f), u)
    }

    /// `[I E; 0 I]`
    pub fn upper_transvection(e: LowerTriMatrix) -> Result<Self> {
        let (n, f) = (e.n(), e.field());
        Self::new(LowerTriMatrix::identity(n, f), e, LowerTriMatrix::zero(n, f), LowerTriMatrix::identity(n, f))
    }

    /// `[I 0; E I]`
    pub fn lower_transvection(e: LowerTriMatrix) -> Result<Self> {
        let (n, f) = (e.n(), e.field());
        Self::new(LowerTriMatrix::identity(n, f), LowerTriMatrix::zero(n, f), e, LowerTriMatrix::identity(n, f))
    }

    /// Block-diagonal element whose blocks are all diagonal matrices; index
    /// `i` gets the `2 x 2` matrix `[x y; w z] = blocks[i]`.
    pub fn from_index_blocks(f: PrimeField, blocks: &[[FieldElement; 4]]) -> Result<Self> {
        let n = blocks.len();
        let mut m: Blocks = std::array::from_fn(|_| LowerTriMatrix::zero(n, f));
        for (i, b) in blocks.iter().enumerate() {
            for k in 0..4 {
                m[k].set(i, i, b[k]);
            }
        }
        let [x, y, w, z] = m;
        Self::new(x, y, w, z)
    }

    pub fn x(&self) -> &LowerTriMatrix {
        &self.x
    }
    pub fn y(&self) -> &LowerTriMatrix {
        &self.y
    }
    pub fn w(&self) -> &LowerTriMatrix {
        &self.w
    }
    pub fn z(&self) -> &LowerTriMatrix {
        &self.z
    }

    pub fn n(&self) -> usize {
        self.x.n()
    }

    pub fn field(&self) -> PrimeField {
        self.x.field()
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity(self.n(), self.field())
    }

    /// Block product `self * rhs`.
    pub fn mul(&self, rhs: &Self) -> Result<Self> {
        if self.n() != rhs.n() || self.field() != rhs.field() {
            return Err(Error::DimensionMismatch("GL2 elements differ in n or field".into()));
        }
        Ok(Self::from_blocks_unchecked(block_mul(&self.blocks(), &rhs.blocks())))
    }

    /// Inverse of `D + N` with `D` the per-index diagonal part and `N` the
    /// strictly lower remainder: `(I + D^-1 N)^-1 D^-1`, where `D^-1 N` is
    /// nilpotent of index at most `n`.
    pub fn inverse(&self) -> Self {
        let n = self.n();
        let f = self.field();
        let mut dinv: Blocks = std::array::from_fn(|_| LowerTriMatrix::zero(n, f));
        let mut strict = self.blocks();
        for i in 0..n {
            let det = diag_det(f, &self.x, &self.y, &self.w, &self.z, i);
            let di = f.inv(det).expect("invariant: diagonal determinants are nonzero");
            dinv[0].set(i, i, f.mul(self.z.get(i, i), di));
            dinv[1].set(i, i, f.neg(f.mul(self.y.get(i, i), di)));
            dinv[2].set(i, i, f.neg(f.mul(self.w.get(i, i), di)));
            dinv[3].set(i, i, f.mul(self.x.get(i, i), di));
            for b in strict.iter_mut() {
                b.set(i, i, FieldElement::ZERO);
            }
        }
        let m = block_mul(&dinv, &strict);
        let m = [m[0].neg(), m[1].neg(), m[2].neg(), m[3].neg()];
        let id = Self::identity(n, f).blocks();
        let mut sum = id.clone();
        let mut power = id;
        for _ in 1..n {
            power = block_mul(&power, &m);
            sum = block_add(&sum, &power);
        }
        let inv = Self::from_blocks_unchecked(block_mul(&sum, &dinv));
        debug_assert!(self.mul(&inv).map(|g| g.is_identity()).unwrap_or(false));
        inv
    }

    /// `(A, B) [X Y; W Z] = (AX + BW, AY + BZ)`
    pub fn act_right(&self, pair: &ModulePair) -> Result<ModulePair> {
        if pair.n() != self.n() || pair.field() != self.field() {
            return Err(Error::DimensionMismatch("pair does not match GL2 element".into()));
        }
        Ok(self.act_right_unchecked(pair))
    }

    pub(crate) fn act_right_unchecked(&self, pair: &ModulePair) -> ModulePair {
        let (a, b) = (pair.a(), pair.b());
        ModulePair::new_unchecked(
            a.mul_unchecked(&self.x).add_unchecked(&b.mul_unchecked(&self.w)),
            a.mul_unchecked(&self.y).add_unchecked(&b.mul_unchecked(&self.z)),
        )
    }

    pub fn to_text(&self) -> String {
        format!("X\n{}\nY\n{}\nW\n{}\nZ\n{}", self.x, self.y, self.w, self.z)
    }
}

impl fmt::Display for GL2Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// `act_right(pair, g)`
pub fn act_right(pair: &ModulePair, g: &GL2Element) -> Result<ModulePair> {
    g.act_right(pair)
}

/// `(UA, UB)` for a unit `U`.
pub fn act_left_unit(u: &LowerTriMatrix, pair: &ModulePair) -> Result<ModulePair> {
    pair.left_mul(u)
}

/// Generators of `T_n^*`: diagonal scalings `d_i(λ)`, `λ != 1`, and
/// transvections `I + λ e_ij`, `i > j`.
pub fn unit_generators(n: usize, f: PrimeField) -> Vec<LowerTriMatrix> {
    let mut out = Vec::new();
    for i in 0..n {
        for l in f.units().skip(1) {
            let mut d = LowerTriMatrix::identity(n, f);
            d.set(i, i, l);
            out.push(d);
        }
    }
    for i in 0..n {
        for j in 0..i {
            for l in f.units() {
                let mut t = LowerTriMatrix::identity(n, f);
                t.set(i, j, l);
                out.push(t);
            }
        }
    }
    out
}

/// The elementary generating set used by the orbit search.
pub fn gl2_generators(n: usize, f: PrimeField) -> Vec<GL2Element> {
    let mut out = Vec::new();
    for u in unit_generators(n, f) {
        out.push(GL2Element::left_block(u.clone()).expect("unit"));
        out.push(GL2Element::right_block(u).expect("unit"));
    }
    for i in 0..n {
        for j in 0..=i {
            for l in f.units() {
                let e = LowerTriMatrix::single(n, f, i, j, l);
                out.push(GL2Element::upper_transvection(e.clone()).expect("unipotent"));
                out.push(GL2Element::lower_transvection(e).expect("unipotent"));
            }
        }
    }
    out.push(GL2Element::swap(n, f));
    out
}
