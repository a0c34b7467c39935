//! Example generators: the cat-map suspension, a broken translation action,
//! prong fixtures and small hand-made laminations.

use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::action::{CircleHomeo, GroupAction, Mobius};
use crate::circle::{CirclePoint, QuadraticNumber};
use crate::error::{ForgeError, Result};
use crate::lamination::{AlmostLamination, Leaf, Oracle, Sign};

type Qn = QuadraticNumber;

fn q(n: i64, d: i64) -> Qn {
    Qn::from_ratio(n, d)
}

/// Which generator produced an example.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleKind {
    CatMapSuspension,
    Square4prongFixture,
    CataclysmFixture,
    BrokenTranslation,
    Custom,
}

/// A lamination pair with the group acting on it.
#[derive(Clone, Debug)]
pub struct Example {
    pub kind: ExampleKind,
    pub plus: AlmostLamination,
    pub minus: AlmostLamination,
    pub action: Arc<GroupAction>,
    pub meta: serde_json::Value,
}

impl Example {
    pub fn new(kind: ExampleKind, plus: AlmostLamination, minus: AlmostLamination, action: GroupAction) -> Self {
        let action = Arc::new(action);
        let attach = |l: AlmostLamination| {
            if action.generators.is_empty() {
                l
            } else {
                l.with_action(action.clone())
            }
        };
        Example { kind, plus: attach(plus), minus: attach(minus), action, meta: serde_json::json!({}) }
    }

    fn with_meta(mut self, meta: serde_json::Value) -> Self {
        self.meta = meta;
        self
    }
}

/// `x ↦ x/(1+|x|)`, exact in the field.
pub fn compactify(x: &Qn) -> Qn {
    let den = &Qn::one() + &x.abs();
    x / &den
}

fn compact_branch(nonneg: bool) -> Mobius {
    if nonneg {
        Mobius::from_ints(1, 0, 1, 1)
    } else {
        Mobius::from_ints(1, 0, -1, 1)
    }
}

fn expand_branch(nonneg: bool) -> Mobius {
    if nonneg {
        Mobius::from_ints(1, 0, -1, 1)
    } else {
        Mobius::from_ints(1, 0, 1, 1)
    }
}

/// Side `k` of the boundary square as an affine chart `t ↦ X` and its inverse.
fn side_chart(k: usize) -> (Mobius, Mobius) {
    let (a, b) = match k {
        0 => (8, -1),
        1 => (8, -3),
        2 => (-8, 5),
        _ => (-8, 7),
    };
    let m = Mobius::affine(Qn::from_int(a), Qn::from_int(b));
    let inv = m.inverse();
    (m, inv)
}

/// The boundary map of `(u, v) ↦ (αu + β, γv + δ)` on the compactified plane.
/// Verticals `u = c` run from the bottom side to the top side.
pub fn diagonal_affine_boundary(u: (&Qn, &Qn), v: (&Qn, &Qn)) -> Result<CircleHomeo> {
    let mut raw = Vec::new();
    for side in 0..4 {
        let (alpha, beta) = if side % 2 == 0 { u } else { v };
        if alpha.sign() <= 0 {
            return Err(ForgeError::InvalidMap("scaling factors must be positive".into()));
        }
        let (chart, chart_inv) = side_chart(side);
        let lo = q(side as i64, 4);
        let hi = q(side as i64 + 1, 4);
        let mut cuts = vec![lo.clone()];
        for x in [Qn::zero(), compactify(&(&(-beta) / alpha))] {
            let t = chart_inv.eval(&x);
            if t > lo && t < hi {
                cuts.push(t);
            }
        }
        cuts.sort();
        cuts.dedup();
        let aff = Mobius::affine(alpha.clone(), beta.clone());
        for (i, c) in cuts.iter().enumerate() {
            let e = cuts.get(i + 1).cloned().unwrap_or_else(|| hi.clone());
            let mid = &(c + &e) / &Qn::from_int(2);
            let x = chart.eval(&mid);
            let w = &(alpha * &(&x / &(&Qn::one() - &x.abs()))) + beta;
            let m = chart_inv
                .compose(&compact_branch(w.sign() >= 0))
                .compose(&aff)
                .compose(&expand_branch(x.sign() >= 0))
                .compose(&chart);
            raw.push((CirclePoint::new(c.clone()), m));
        }
    }
    CircleHomeo::from_pieces(raw)
}

/// The vertical chord `u = c`.
pub fn vertical_leaf(c: &Qn) -> Leaf {
    let lo = &(&compactify(c) + &Qn::one()) / &Qn::from_int(8);
    let hi = &q(3, 4) - &lo;
    Leaf::new(CirclePoint::new(lo), CirclePoint::new(hi), Sign::Plus).expect("distinct endpoints")
}

/// The horizontal chord `v = c`.
pub fn horizontal_leaf(c: &Qn) -> Leaf {
    let lo = &(&compactify(c) + &Qn::from_int(3)) / &Qn::from_int(8);
    let hi = &q(5, 4) - &lo;
    Leaf::new(CirclePoint::new(lo), CirclePoint::new(hi), Sign::Minus).expect("distinct endpoints")
}

/// Inverse of the vertical chart: the `u` coordinate of a vertical chord.
pub fn vertical_coordinate(l: &Leaf) -> Qn {
    let x = &(l.lo().angle() * &Qn::from_int(8)) - &Qn::one();
    &x / &(&Qn::one() - &x.abs())
}

/// Inverse of the horizontal chart.
pub fn horizontal_coordinate(l: &Leaf) -> Qn {
    let y = &(l.lo().angle() * &Qn::from_int(8)) - &Qn::from_int(3);
    &y / &(&Qn::one() - &y.abs())
}

fn square_free_part(n: u64) -> (u64, u64) {
    let (mut f, mut r, mut p) = (1u64, n, 2u64);
    while p * p <= r {
        while r % (p * p) == 0 {
            r /= p * p;
            f *= p;
        }
        p += 1;
    }
    (f, r)
}

/// Eigen-coordinate data of a hyperbolic matrix with positive eigenvalues.
#[derive(Clone, Debug)]
pub struct CatMap {
    pub matrix: [[i64; 2]; 2],
    pub field_d: u64,
    pub expanding: Qn,
    pub contracting: Qn,
    /// Eigen-functional weights on the first basis vector, `(κ − d)/b`.
    pub weight_expanding: Qn,
    pub weight_contracting: Qn,
}

impl CatMap {
    pub fn new(matrix: [[i64; 2]; 2]) -> Result<Self> {
        let [[a, b], [c, d]] = matrix;
        if a * d - b * c != 1 {
            return Err(ForgeError::Precondition("matrix must have determinant 1".into()));
        }
        let tr = a + d;
        if tr <= 2 {
            return Err(ForgeError::Precondition(format!("trace {tr} is not hyperbolic with positive eigenvalues")));
        }
        if b == 0 {
            return Err(ForgeError::Precondition("off-diagonal entry b must be nonzero".into()));
        }
        let (f, r) = square_free_part((tr * tr - 4) as u64);
        let half = BigRational::new(BigInt::from(1), BigInt::from(2));
        let rt = BigRational::from_integer(BigInt::from(tr)) * &half;
        let surd = BigRational::from_integer(BigInt::from(f)) * &half;
        let expanding = Qn::new(rt.clone(), surd.clone(), r);
        let contracting = Qn::new(rt, -surd, r);
        let w = |k: &Qn| &(k - &Qn::from_int(d)) / &Qn::from_int(b);
        Ok(CatMap {
            matrix,
            field_d: r,
            weight_expanding: w(&expanding),
            weight_contracting: w(&contracting),
            expanding,
            contracting,
        })
    }

    /// Generators `a`, `b` (lattice translations) and `t` (the monodromy).
    pub fn action(&self) -> Result<GroupAction> {
        let zero = Qn::zero();
        let one = Qn::one();
        let a = diagonal_affine_boundary((&one, &self.weight_contracting), (&one, &self.weight_expanding))?;
        let b = diagonal_affine_boundary((&one, &one), (&one, &one))?;
        let t = diagonal_affine_boundary((&self.contracting, &zero), (&self.expanding, &zero))?;
        Ok(GroupAction::new(self.field_d, names(&["a", "b", "t"]), vec![a, b, t]))
    }
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Suspension of a hyperbolic toral automorphism: verticals and horizontals in
/// eigen-coordinates, acted on by `Z² ⋊ Z`.
pub fn cat_map_suspension(matrix: [[i64; 2]; 2]) -> Result<Example> {
    let cat = CatMap::new(matrix)?;
    let action = cat.action()?;
    let plus = AlmostLamination::with_oracle(Sign::Plus, vec![vertical_leaf(&Qn::zero())], Oracle::Vertical);
    let minus = AlmostLamination::with_oracle(Sign::Minus, vec![horizontal_leaf(&Qn::zero())], Oracle::Horizontal);
    Ok(Example::new(ExampleKind::CatMapSuspension, plus, minus, action).with_meta(serde_json::json!({
        "matrix": matrix,
        "compactification": "x/(1+|x|)",
        "field_d": cat.field_d,
    })))
}

/// `Z²` acting on the product plane by diagonal translations `1` and `√5 − 2`:
/// the leaves stay disjoint but nothing contracts or expands.
pub fn broken_translation() -> Example {
    let one = Qn::one();
    let delta = &Qn::sqrt_of(5) - &Qn::from_int(2);
    let a = diagonal_affine_boundary((&one, &one), (&one, &one)).expect("valid translation");
    let b = diagonal_affine_boundary((&one, &delta), (&one, &delta)).expect("valid translation");
    let action = GroupAction::new(5, names(&["a", "b"]), vec![a, b]);
    let plus = AlmostLamination::with_oracle(Sign::Plus, vec![vertical_leaf(&Qn::zero())], Oracle::Vertical);
    let minus = AlmostLamination::with_oracle(Sign::Minus, vec![horizontal_leaf(&Qn::zero())], Oracle::Horizontal);
    Example::new(ExampleKind::BrokenTranslation, plus, minus, action)
        .with_meta(serde_json::json!({ "translations": ["1", "sqrt(5)-2"], "compactification": "x/(1+|x|)" }))
}

/// Sides of the ideal polygon with the given vertices (cyclically ordered).
pub fn polygon(vertices: &[CirclePoint], sign: Sign) -> Vec<Leaf> {
    let n = vertices.len();
    (0..n)
        .map(|i| Leaf::new(vertices[i].clone(), vertices[(i + 1) % n].clone(), sign).expect("distinct vertices"))
        .collect()
}

fn regular_vertices(n: i64, offset: (i64, i64)) -> Vec<CirclePoint> {
    (0..n).map(|k| CirclePoint::new(&q(k, n) + &q(offset.0, offset.1))).collect()
}

/// Data of a `2m`-prong fixture: polygon vertices and the stabilizing map.
#[derive(Clone, Debug)]
pub struct ProngFixture {
    /// Number of sides of each polygon (prongs per foliation).
    pub prongs: usize,
    pub plus_vertices: Vec<CirclePoint>,
    pub minus_vertices: Vec<CirclePoint>,
    pub example: Example,
}

/// The map fixing every `k/(2N)` and pushing each arc toward its end at a
/// positive-polygon vertex `k/N`.
fn prong_attractor(n: i64) -> CircleHomeo {
    let m = 2 * n;
    let mut raw = Vec::new();
    for j in 0..m {
        // local coordinate s = m x − j on [j/m, (j+1)/m]
        let to_local = Mobius::affine(Qn::from_int(m), Qn::from_int(-j));
        let from_local = to_local.inverse();
        let local = if j % 2 == 1 { Mobius::from_ints(2, 0, 1, 1) } else { Mobius::from_ints(1, 0, -1, 2) };
        raw.push((CirclePoint::ratio(j, m), from_local.compose(&local).compose(&to_local)));
    }
    CircleHomeo::from_pieces(raw).expect("valid attractor")
}

/// An interleaved pair of regular `N`-gons, `N` even, stabilized by a map
/// that rotates the prongs by two positions and expands them.
pub fn prong_fixture(sides: usize) -> Result<ProngFixture> {
    if sides < 4 || sides % 2 == 1 {
        return Err(ForgeError::Precondition(format!("prong fixtures need an even side count ≥ 4, got {sides}")));
    }
    let n = sides as i64;
    let plus_vertices = regular_vertices(n, (0, 1));
    let minus_vertices = regular_vertices(n, (1, 2 * n));
    let g = CircleHomeo::rotation(&q(2, n)).compose(&prong_attractor(n));
    let action = GroupAction::new(0, names(&["g"]), vec![g]);
    let plus = AlmostLamination::explicit(Sign::Plus, polygon(&plus_vertices, Sign::Plus));
    let minus = AlmostLamination::explicit(Sign::Minus, polygon(&minus_vertices, Sign::Minus));
    let example = Example::new(ExampleKind::Square4prongFixture, plus, minus, action)
        .with_meta(serde_json::json!({ "prongs": sides }));
    Ok(ProngFixture { prongs: sides, plus_vertices, minus_vertices, example })
}

/// The square and the interleaved square with no action.
pub fn square_pair() -> Example {
    let p = polygon(&regular_vertices(4, (0, 1)), Sign::Plus);
    let m = polygon(&regular_vertices(4, (1, 8)), Sign::Minus);
    Example::new(
        ExampleKind::Custom,
        AlmostLamination::explicit(Sign::Plus, p),
        AlmostLamination::explicit(Sign::Minus, m),
        GroupAction::trivial(),
    )
}

/// Two positive triangles sharing the side `{0, 1/2}`.
pub fn shared_side_pair() -> Example {
    let v = |n, d| CirclePoint::ratio(n, d);
    let mut p = polygon(&[v(0, 1), v(1, 4), v(1, 2)], Sign::Plus);
    p.extend(polygon(&[v(1, 2), v(3, 4), v(0, 1)], Sign::Plus));
    p.sort();
    p.dedup();
    let m = vec![Leaf::from_ratios((1, 8), (5, 8), Sign::Minus).expect("valid leaf")];
    Example::new(
        ExampleKind::Custom,
        AlmostLamination::explicit(Sign::Plus, p),
        AlmostLamination::explicit(Sign::Minus, m),
        GroupAction::trivial(),
    )
}

/// A triangle with one side removed, crossed by one negative leaf. With
/// `mutated` the crossing leaf misses the pivot.
pub fn cataclysm_fixture(mutated: bool) -> Example {
    let plus = AlmostLamination::explicit(
        Sign::Plus,
        vec![
            Leaf::from_ratios((0, 1), (1, 3), Sign::Plus).expect("valid leaf"),
            Leaf::from_ratios((1, 3), (2, 3), Sign::Plus).expect("valid leaf"),
        ],
    )
    .with_removed(vec![Leaf::from_ratios((0, 1), (2, 3), Sign::Plus).expect("valid leaf")]);
    let crossing = if mutated { (1, 2) } else { (5, 6) };
    let minus = AlmostLamination::explicit(
        Sign::Minus,
        vec![Leaf::from_ratios((1, 6), crossing, Sign::Minus).expect("valid leaf")],
    );
    Example::new(ExampleKind::CataclysmFixture, plus, minus, GroupAction::trivial())
}

/// A single ideal triangle.
pub fn triangle() -> Vec<Leaf> {
    polygon(&regular_vertices(3, (0, 1)), Sign::Plus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::check_invariance;
    use crate::action::InvarianceReport;

    #[test]
    fn eigen_leaves_are_fixed_by_monodromy() {
        let ex = cat_map_suspension([[2, 1], [1, 1]]).unwrap();
        let t = &ex.action.generators[2];
        let v0 = vertical_leaf(&Qn::zero());
        assert_eq!(t.apply_leaf(&v0), v0);
        assert_eq!(v0.lo(), &CirclePoint::ratio(1, 8));
        for p in [1, 3, 5, 7] {
            assert!(t.fixes(&CirclePoint::ratio(p, 8)));
        }
    }

    #[test]
    fn translations_move_coordinates() {
        let ex = cat_map_suspension([[2, 1], [1, 1]]).unwrap();
        let b = &ex.action.generators[1];
        let v = vertical_leaf(&Qn::from_ratio(1, 3));
        let image = b.apply_leaf(&v);
        assert_eq!(vertical_coordinate(&image), Qn::from_ratio(4, 3));
        let h = horizontal_leaf(&Qn::from_int(-2));
        assert_eq!(horizontal_coordinate(&b.apply_leaf(&h)), Qn::from_int(-1));
        let t = &ex.action.generators[2];
        let img = t.apply_leaf(&horizontal_leaf(&Qn::one()));
        let cat = CatMap::new([[2, 1], [1, 1]]).unwrap();
        assert_eq!(horizontal_coordinate(&img), cat.expanding);
    }

    #[test]
    fn cat_map_is_invariant() {
        let ex = cat_map_suspension([[2, 1], [1, 1]]).unwrap();
        for gen in &ex.action.generators {
            assert!(matches!(check_invariance(&ex.plus, gen, 2), InvarianceReport::Ok { .. }));
            assert!(matches!(check_invariance(&ex.minus, gen, 2), InvarianceReport::Ok { .. }));
        }
    }

    #[test]
    fn rejects_elliptic_matrix() {
        assert!(cat_map_suspension([[1, 1], [-1, 0]]).is_err());
        assert!(cat_map_suspension([[2, 1], [1, 2]]).is_err());
    }

    #[test]
    fn prong_fixture_is_invariant() {
        for sides in [4, 6] {
            let f = prong_fixture(sides).unwrap();
            let g = &f.example.action.generators[0];
            assert!(matches!(check_invariance(&f.example.plus, g, 3), InvarianceReport::Ok { .. }));
            assert!(matches!(check_invariance(&f.example.minus, g, 3), InvarianceReport::Ok { .. }));
            assert_eq!(f.example.plus.enumerate(3).len(), sides);
        }
    }
}
