//! The seven-dimensional reduction example, instantiated over GF(5).

use triorbit_core::canonical::{Pivot, StageKind};
use triorbit_core::{
    build_k, build_v, canonicalize, reduce_from_g_stage, select_pivots, verify_certificate, FieldElement,
    LowerTriMatrix, ModulePair, PrimeField,
};

const N: usize = 7;

fn f() -> PrimeField {
    PrimeField::new(5).unwrap()
}

/// 1-based `(i, j, value)` triples.
fn matrix(entries: &[(usize, usize, i64)]) -> LowerTriMatrix {
    let mut m = LowerTriMatrix::zero(N, f());
    for &(i, j, v) in entries {
        m.set(i - 1, j - 1, f().elem(v));
    }
    m
}

fn a() -> LowerTriMatrix {
    LowerTriMatrix::diagonal_from(f(), &[1, 1, 0, 1, 0, 0, 0])
}

/// `g32 = 2, g54 = 3, g63 = 1, g71 = 4`; the free entries are all 1.
fn g() -> LowerTriMatrix {
    matrix(&[
        (3, 1, 1),
        (3, 2, 2),
        (5, 1, 1),
        (5, 2, 1),
        (5, 3, 1),
        (5, 4, 3),
        (6, 1, 1),
        (6, 2, 1),
        (6, 3, 1),
        (6, 4, 1),
        (7, 1, 4),
        (7, 2, 1),
        (7, 3, 1),
        (7, 4, 1),
    ])
}

fn at(m: &LowerTriMatrix, i: usize, j: usize) -> FieldElement {
    m.get(i - 1, j - 1)
}

fn expected_canonical() -> ModulePair {
    ModulePair::new(a(), matrix(&[(3, 2, 1), (5, 4, 1), (6, 3, 1), (7, 1, 1)])).unwrap()
}

#[test]
fn pivots() {
    let p = select_pivots(&g()).unwrap();
    let want: Vec<Pivot> = [(3, 2), (5, 4), (6, 3), (7, 1)].iter().map(|&(row, col)| Pivot { row, col }).collect();
    assert_eq!(p, want);
}

#[test]
fn v_matches_closed_forms() {
    let fl = f();
    let g = g();
    let v = build_v(&g, &select_pivots(&g).unwrap()).unwrap();
    let gi = |i, j| at(&g, i, j);
    let vi = |i, j| at(&v, i, j);
    let inv = |x: FieldElement| fl.inv(x).unwrap();
    let neg = |x| fl.neg(x);
    let (add, mul, sub) = (|x, y| fl.add(x, y), |x, y| fl.mul(x, y), |x, y| fl.sub(x, y));
    let one = FieldElement::ONE;

    assert_eq!(vi(2, 2), inv(gi(3, 2)));
    assert_eq!(vi(2, 1), neg(mul(mul(inv(gi(3, 2)), gi(3, 1)), vi(1, 1))));
    assert_eq!(vi(4, 4), inv(gi(5, 4)));
    let s41 = add(add(mul(gi(5, 1), vi(1, 1)), mul(gi(5, 2), vi(2, 1))), mul(gi(5, 3), vi(3, 1)));
    assert_eq!(vi(4, 1), neg(mul(inv(gi(5, 4)), s41)));
    let s42 = add(mul(gi(5, 2), vi(2, 2)), mul(gi(5, 3), vi(3, 2)));
    assert_eq!(vi(4, 2), neg(mul(inv(gi(5, 4)), s42)));
    assert_eq!(vi(4, 3), neg(mul(mul(inv(gi(5, 4)), gi(5, 3)), vi(3, 3))));
    assert_eq!(vi(3, 3), mul(inv(gi(6, 3)), sub(one, mul(gi(6, 4), vi(4, 3)))));
    let s31 = add(add(mul(gi(6, 1), vi(1, 1)), mul(gi(6, 2), vi(2, 1))), mul(gi(6, 4), vi(4, 1)));
    assert_eq!(vi(3, 1), neg(mul(inv(gi(6, 3)), s31)));
    let s32 = add(mul(gi(6, 2), vi(2, 2)), mul(gi(6, 4), vi(4, 2)));
    assert_eq!(vi(3, 2), neg(mul(inv(gi(6, 3)), s32)));
    let s11 = add(add(mul(gi(7, 2), vi(2, 1)), mul(gi(7, 3), vi(3, 1))), mul(gi(7, 4), vi(4, 1)));
    assert_eq!(vi(1, 1), mul(inv(gi(7, 1)), sub(one, s11)));
    // unconstrained columns stay trivial
    for l in 5..=7 {
        assert_eq!(vi(l, l), one);
        for i in l + 1..=7 {
            assert!(vi(i, l).is_zero());
        }
    }
    assert!(v.is_unit());
}

#[test]
fn h_and_k_shapes() {
    let fl = f();
    let g = g();
    let v = build_v(&g, &select_pivots(&g).unwrap()).unwrap();
    let h = g.mul(&v).unwrap();
    for i in 1..=7 {
        for j in 1..=i {
            let free = matches!((i, j), (6, 4) | (7, 2) | (7, 3) | (7, 4));
            let want_one = matches!((i, j), (3, 2) | (5, 4) | (6, 3) | (7, 1));
            if want_one {
                assert_eq!(at(&h, i, j), FieldElement::ONE, "h{i}{j}");
            } else if !free {
                assert!(at(&h, i, j).is_zero(), "h{i}{j}");
            }
        }
    }
    let k = build_k(&a(), &h).unwrap();
    let (h64, h72, h73, h74) = (at(&h, 6, 4), at(&h, 7, 2), at(&h, 7, 3), at(&h, 7, 4));
    let mut want = LowerTriMatrix::identity(N, fl);
    want.set(5, 4, fl.neg(h64));
    want.set(6, 2, fl.neg(h72));
    want.set(6, 4, fl.sub(fl.mul(h73, h64), h74));
    want.set(6, 5, fl.neg(h73));
    assert_eq!(k, want);
    let l = k.mul(&h).unwrap();
    assert_eq!(ModulePair::new(a(), l).unwrap(), expected_canonical());
}

#[test]
fn pipeline_reaches_the_canonical_pair() {
    let input = ModulePair::new(a(), g()).unwrap();
    for c in [reduce_from_g_stage(&input).unwrap(), canonicalize(&input).unwrap()] {
        assert_eq!(c.canonical, expected_canonical());
        assert!(verify_certificate(&input, &c.canonical, &c.certificate));
        assert_eq!(c.trace.pivots.len(), 4);
        assert!(c.trace.residual_activations.is_empty());
        assert!(c.trace.stage(StageKind::PivotV).is_some());
        assert!(c.trace.stage(StageKind::ClearK).is_some());
    }
}

#[test]
fn disguised_input_also_reduces() {
    // hide the fixture behind a unit and a group element
    let fl = f();
    let input = ModulePair::new(a(), g()).unwrap();
    let mut u = LowerTriMatrix::identity(N, fl);
    for (i, j, v) in [(1, 0, 3), (4, 2, 1), (6, 0, 2), (3, 3, 4)] {
        u.set(i, j, fl.elem(v));
    }
    let q = triorbit_core::GL2Element::lower_transvection(matrix(&[(2, 1, 1), (6, 6, 2), (4, 3, 1)])).unwrap();
    let disguised = q.act_right(&input.left_mul(&u).unwrap()).unwrap();
    let c = canonicalize(&disguised).unwrap();
    assert_eq!(c.canonical, expected_canonical());
    assert!(verify_certificate(&disguised, &c.canonical, &c.certificate));
}
